//! Whole-image encoding, partial decoding and full decoding.

use crate::block::{merge_blocks, split_blocks};
use crate::coeffs::CoefficientTensor;
use crate::color::{rgb_to_ycbcr, ycbcr_to_rgb};
use crate::dct::{fdct_8x8, idct_8x8};
use crate::error::{JpegError, Result};
use crate::image::PixelImage;
use crate::quant::{quantize_block, scale_quant_table, QuantTable, TableKind};
use crate::stream::{parse_stream, write_stream, CoefficientImage, JpegStream};

/// Level shift, DCT and quantization of one block-aligned plane.
pub fn quantize_plane(
    component_id: u8,
    plane: &[u8],
    width: usize,
    height: usize,
    table: &QuantTable,
) -> Result<CoefficientTensor> {
    let blocks = split_blocks(plane, width, height)?
        .iter()
        .map(|b| quantize_block(&fdct_8x8(b), table))
        .collect();
    CoefficientTensor::new(component_id, height / 8, width / 8, blocks, table.clone())
}

/// Dequantization, inverse DCT and level unshift of one component, cropped
/// to `width`x`height`.
pub fn reconstruct_plane(t: &CoefficientTensor, width: usize, height: usize) -> Result<Vec<u8>> {
    let blocks: Vec<_> = (0..t.blocks_high())
        .flat_map(|r| (0..t.blocks_wide()).map(move |c| (r, c)))
        .map(|(r, c)| idct_8x8(&t.dequantized(r, c)))
        .collect();
    merge_blocks(&blocks, t.blocks_wide(), width, height)
}

/// Encodes and also returns the quantized coefficients computed in-process.
pub fn encode_image_with_coefficients(
    img: &PixelImage,
    quality: u32,
) -> Result<(JpegStream, Vec<CoefficientTensor>)> {
    if img.width() == 0 || img.height() == 0 {
        return Err(JpegError::Empty);
    }
    if !img.width().is_multiple_of(8) || !img.height().is_multiple_of(8) {
        return Err(JpegError::NotBlockAligned { width: img.width(), height: img.height() });
    }
    let luma = scale_quant_table(TableKind::Luminance, quality)?;
    let tensors = if img.components() == 1 {
        vec![quantize_plane(1, img.samples(), img.width(), img.height(), &luma)?]
    } else {
        let chroma = scale_quant_table(TableKind::Chrominance, quality)?;
        let ycc = rgb_to_ycbcr(img)?;
        (0..3)
            .map(|c| {
                let table = if c == 0 { &luma } else { &chroma };
                quantize_plane(c as u8 + 1, &ycc.plane(c), img.width(), img.height(), table)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let stream = write_stream(img.width(), img.height(), &tensors)?;
    Ok((stream, tensors))
}

/// Encodes a block-aligned image as baseline JFIF. Grayscale images use one
/// component; RGB images are converted to YCbCr and coded 4:4:4.
pub fn encode_image(img: &PixelImage, quality: u32) -> Result<JpegStream> {
    encode_image_with_coefficients(img, quality).map(|(s, _)| s)
}

/// Like [`encode_image`] but accepts any size: the right and bottom edges
/// are replicated up to the block grid and the true size is recorded in the
/// frame header.
pub fn encode_image_padded(img: &PixelImage, quality: u32) -> Result<JpegStream> {
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(JpegError::Empty);
    }
    let (pw, ph) = (w.div_ceil(8) * 8, h.div_ceil(8) * 8);
    if (pw, ph) == (w, h) {
        return encode_image(img, quality);
    }
    let nc = img.components();
    let mut samples = Vec::with_capacity(pw * ph * nc);
    for y in 0..ph {
        for x in 0..pw {
            for c in 0..nc {
                samples.push(img.get(x.min(w - 1), y.min(h - 1), c));
            }
        }
    }
    let padded = PixelImage::new(pw, ph, nc, samples)?;
    let (_, tensors) = encode_image_with_coefficients(&padded, quality)?;
    write_stream(w, h, &tensors)
}

/// Entropy-decodes a stream to its quantized coefficients. No
/// dequantization or inverse DCT takes place.
pub fn partial_decode(stream: &[u8]) -> Result<CoefficientImage> {
    parse_stream(stream)
}

/// Full decode: partial decode, dequantize, inverse DCT, level unshift,
/// clamp, and YCbCr to RGB for three-component streams.
pub fn decode_image(stream: &[u8]) -> Result<PixelImage> {
    let ci = partial_decode(stream)?;
    decode_coefficients(&ci)
}

pub fn decode_coefficients(ci: &CoefficientImage) -> Result<PixelImage> {
    let planes = ci
        .components
        .iter()
        .map(|t| reconstruct_plane(t, ci.width, ci.height))
        .collect::<Result<Vec<_>>>()?;
    match planes.len() {
        1 => PixelImage::gray(ci.width, ci.height, planes.into_iter().next().unwrap()),
        3 => ycbcr_to_rgb(&PixelImage::from_planes(ci.width, ci.height, &planes)?),
        n => Err(JpegError::Unsupported(format!("{n}-component frames"))),
    }
}

/// Ratio of raw to compressed size.
pub fn compression_ratio(raw_bytes: usize, stream_bytes: usize) -> Result<f64> {
    if stream_bytes == 0 {
        return Err(JpegError::ZeroSize);
    }
    if raw_bytes == 0 {
        return Err(JpegError::Empty);
    }
    Ok(raw_bytes as f64 / stream_bytes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> PixelImage {
        let s = (0..w * h).map(|i| ((i % w) * 3 + (i / w) * 2) as u8).collect();
        PixelImage::gray(w, h, s).unwrap()
    }

    #[test]
    fn gray_constant_image_is_exact() {
        // Exact whenever the DC quantizer divides 8 * (v - 128): always at
        // quality >= 75 (DC step 8), even values at quality 50 (step 16).
        for v in 0..=255u8 {
            let img = PixelImage::filled(32, 16, 1, v).unwrap();
            let s = encode_image(&img, 75).unwrap();
            assert_eq!(decode_image(s.as_bytes()).unwrap(), img);
            let s = encode_image(&img, 50).unwrap();
            let out = decode_image(s.as_bytes()).unwrap();
            if v % 2 == 0 {
                assert_eq!(out, img);
            } else {
                assert!(out.samples().iter().all(|&o| (o as i32 - v as i32).abs() <= 1));
            }
        }
    }

    #[test]
    fn mid_gray_gives_zero_coefficients() {
        let img = PixelImage::filled(256, 256, 1, 128).unwrap();
        let s = encode_image(&img, 50).unwrap();
        let ci = partial_decode(s.as_bytes()).unwrap();
        assert!(ci.components[0].blocks().iter().all(|b| b.iter().all(|&c| c == 0)));
    }

    #[test]
    fn stream_framing() {
        let s = encode_image(&gradient(16, 16), 75).unwrap();
        let b = s.as_bytes();
        assert_eq!(&b[..2], &[0xFF, 0xD8]);
        assert_eq!(&b[b.len() - 2..], &[0xFF, 0xD9]);
    }

    #[test]
    fn color_round_trip_is_close() {
        let mut samples = Vec::new();
        for y in 0..16 {
            for x in 0..24 {
                samples.extend_from_slice(&[(x * 10) as u8, (y * 15) as u8, 100]);
            }
        }
        let img = PixelImage::new(24, 16, 3, samples).unwrap();
        let s = encode_image(&img, 95).unwrap();
        let ci = partial_decode(s.as_bytes()).unwrap();
        assert_eq!(ci.components.len(), 3);
        let out = decode_image(s.as_bytes()).unwrap();
        let max = img.samples().iter().zip(out.samples()).map(|(a, b)| (*a as i32 - *b as i32).abs()).max();
        assert!(max.unwrap() <= 12, "max diff {max:?}");
    }

    #[test]
    fn pipeline_coherence() {
        let (s, coeffs) = encode_image_with_coefficients(&gradient(40, 24), 30).unwrap();
        assert_eq!(partial_decode(s.as_bytes()).unwrap().components, coeffs);
    }

    #[test]
    fn unaligned_rejected_padded_accepted() {
        let img = gradient(20, 12);
        assert!(matches!(encode_image(&img, 50), Err(JpegError::NotBlockAligned { .. })));
        let s = encode_image_padded(&img, 90).unwrap();
        let out = decode_image(s.as_bytes()).unwrap();
        assert_eq!((out.width(), out.height()), (20, 12));
    }

    #[test]
    fn ratios() {
        assert_eq!(compression_ratio(3072, 48).unwrap(), 64.0);
        assert_eq!(compression_ratio(10, 10).unwrap(), 1.0);
        assert_eq!(compression_ratio(10, 0), Err(JpegError::ZeroSize));
    }

    #[test]
    fn progressive_rejected() {
        let bytes = [0xFF, 0xD8, 0xFF, 0xC2, 0x00, 0x02, 0xFF, 0xD9];
        assert!(matches!(partial_decode(&bytes), Err(JpegError::Unsupported(_))));
    }

    #[test]
    fn corrupt_huffman_data() {
        let s = encode_image(&gradient(64, 64), 90).unwrap();
        let mut bytes = s.into_bytes();
        let sos = bytes.windows(2).position(|w| w == [0xFF, 0xDA]).unwrap();
        let data_start = sos + 2 + 10;
        for b in &mut bytes[data_start..data_start + 40] {
            *b = 0xFE;
        }
        assert!(partial_decode(&bytes).is_err());
    }

    #[test]
    fn not_a_jpeg() {
        assert_eq!(partial_decode(b"GIF89a"), Err(JpegError::NotJpeg));
        assert_eq!(JpegStream::from_bytes(vec![0xFF, 0xD8, 0, 0]), Err(JpegError::MissingEoi));
    }
}
