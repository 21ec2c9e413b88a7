//! 8x8 block splitting and merging of a single sample plane.

use crate::error::{JpegError, Result};

/// An 8x8 block of real values in row-major order.
pub type Block8 = [f64; 64];

/// An 8x8 block of quantized coefficients in row-major (natural) order.
pub type CoefficientBlock = [i16; 64];

/// Splits a plane into level-shifted 8x8 blocks, row-major block order.
pub fn split_blocks(plane: &[u8], width: usize, height: usize) -> Result<Vec<Block8>> {
    if !width.is_multiple_of(8) || !height.is_multiple_of(8) {
        return Err(JpegError::NotBlockAligned { width, height });
    }
    if plane.len() != width * height {
        return Err(JpegError::SampleCount { expected: width * height, actual: plane.len() });
    }
    let (bw, bh) = (width / 8, height / 8);
    let mut blocks = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut b = [0.0; 64];
            for y in 0..8 {
                let row = (by * 8 + y) * width + bx * 8;
                for x in 0..8 {
                    b[y * 8 + x] = plane[row + x] as f64 - 128.0;
                }
            }
            blocks.push(b);
        }
    }
    Ok(blocks)
}

/// Inverse of [`split_blocks`]: undoes the level shift, rounds, clamps to
/// `[0, 255]` and crops the block grid to `width`x`height`.
pub fn merge_blocks(
    blocks: &[Block8],
    blocks_wide: usize,
    width: usize,
    height: usize,
) -> Result<Vec<u8>> {
    let blocks_high = height.div_ceil(8);
    if blocks_wide < width.div_ceil(8) || blocks.len() < blocks_wide * blocks_high {
        return Err(JpegError::Length { expected: width.div_ceil(8) * blocks_high, actual: blocks.len() });
    }
    let mut plane = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let b = &blocks[(y / 8) * blocks_wide + x / 8];
            plane[y * width + x] = (b[(y % 8) * 8 + x % 8] + 128.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(plane)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_count_for_256_tile() {
        let plane = vec![0u8; 256 * 256];
        assert_eq!(split_blocks(&plane, 256, 256).unwrap().len(), 1024);
    }

    #[test]
    fn level_shift() {
        let mid = split_blocks(&[128u8; 64], 8, 8).unwrap();
        assert!(mid[0].iter().all(|&v| v == 0.0));
        let white = split_blocks(&[255u8; 64], 8, 8).unwrap();
        assert!(white[0].iter().all(|&v| v == 127.0));
    }

    #[test]
    fn rejects_unaligned() {
        assert!(matches!(
            split_blocks(&[0u8; 12 * 8], 12, 8),
            Err(JpegError::NotBlockAligned { width: 12, height: 8 })
        ));
    }

    #[test]
    fn split_merge_round_trip() {
        let plane: Vec<u8> = (0..16 * 24).map(|i| (i * 7 % 256) as u8).collect();
        let blocks = split_blocks(&plane, 16, 24).unwrap();
        assert_eq!(blocks.len(), 6);
        // second block of the first block-row starts at column 8
        assert_eq!(blocks[1][0], plane[8] as f64 - 128.0);
        assert_eq!(merge_blocks(&blocks, 2, 16, 24).unwrap(), plane);
    }
}
