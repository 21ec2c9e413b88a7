//! Quantized DCT coefficients of one image component, and the plain-text
//! coefficient dump format.
//!
//! Dump format: one block per line,
//! `component blockRow blockCol c0 c1 ... c63`, separated by single spaces,
//! coefficients quantized and in natural (row-major) order. `component` is
//! the zero-based position of the component in the frame header.

use crate::block::{Block8, CoefficientBlock};
use crate::error::{JpegError, Result};
use crate::quant::{dequantize_block, QuantTable};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientTensor {
    component_id: u8,
    blocks_high: usize,
    blocks_wide: usize,
    blocks: Vec<CoefficientBlock>,
    quant: QuantTable,
}

impl CoefficientTensor {
    pub fn new(
        component_id: u8,
        blocks_high: usize,
        blocks_wide: usize,
        blocks: Vec<CoefficientBlock>,
        quant: QuantTable,
    ) -> Result<Self> {
        if blocks.len() != blocks_high * blocks_wide {
            return Err(JpegError::Length { expected: blocks_high * blocks_wide, actual: blocks.len() });
        }
        Ok(Self { component_id, blocks_high, blocks_wide, blocks, quant })
    }

    pub fn filled(
        component_id: u8,
        blocks_high: usize,
        blocks_wide: usize,
        block: CoefficientBlock,
        quant: QuantTable,
    ) -> Self {
        Self { component_id, blocks_high, blocks_wide, blocks: vec![block; blocks_high * blocks_wide], quant }
    }

    pub fn component_id(&self) -> u8 {
        self.component_id
    }

    pub fn blocks_high(&self) -> usize {
        self.blocks_high
    }

    pub fn blocks_wide(&self) -> usize {
        self.blocks_wide
    }

    pub fn quant_table(&self) -> &QuantTable {
        &self.quant
    }

    pub fn blocks(&self) -> &[CoefficientBlock] {
        &self.blocks
    }

    pub fn block(&self, row: usize, col: usize) -> &CoefficientBlock {
        &self.blocks[row * self.blocks_wide + col]
    }

    pub fn block_mut(&mut self, row: usize, col: usize) -> &mut CoefficientBlock {
        &mut self.blocks[row * self.blocks_wide + col]
    }

    pub fn dequantized(&self, row: usize, col: usize) -> Block8 {
        dequantize_block(self.block(row, col), &self.quant)
    }

    pub fn plane_width(&self) -> usize {
        self.blocks_wide * 8
    }

    pub fn plane_height(&self) -> usize {
        self.blocks_high * 8
    }

    /// The coefficient-plane view: block `(r, c)` coefficient `(u, v)` sits
    /// at plane position `(8r + u, 8c + v)`.
    pub fn plane(&self) -> Vec<i16> {
        let w = self.plane_width();
        let mut out = vec![0i16; w * self.plane_height()];
        for (i, b) in self.blocks.iter().enumerate() {
            let (r, c) = (i / self.blocks_wide, i % self.blocks_wide);
            for u in 0..8 {
                let row = (r * 8 + u) * w + c * 8;
                out[row..row + 8].copy_from_slice(&b[u * 8..u * 8 + 8]);
            }
        }
        out
    }

    pub fn from_plane(
        component_id: u8,
        plane: &[i16],
        width: usize,
        height: usize,
        quant: QuantTable,
    ) -> Result<Self> {
        if !width.is_multiple_of(8) || !height.is_multiple_of(8) {
            return Err(JpegError::NotBlockAligned { width, height });
        }
        if plane.len() != width * height {
            return Err(JpegError::Length { expected: width * height, actual: plane.len() });
        }
        let (bh, bw) = (height / 8, width / 8);
        let mut blocks = vec![[0i16; 64]; bh * bw];
        for (i, b) in blocks.iter_mut().enumerate() {
            let (r, c) = (i / bw, i % bw);
            for u in 0..8 {
                let row = (r * 8 + u) * width + c * 8;
                b[u * 8..u * 8 + 8].copy_from_slice(&plane[row..row + 8]);
            }
        }
        Self::new(component_id, bh, bw, blocks, quant)
    }

    /// Copies a rectangular window of the block grid.
    pub fn sub_grid(&self, row: usize, col: usize, high: usize, wide: usize) -> Result<Self> {
        if row + high > self.blocks_high || col + wide > self.blocks_wide {
            return Err(JpegError::Length {
                expected: self.blocks_high * self.blocks_wide,
                actual: (row + high) * (col + wide),
            });
        }
        let mut blocks = Vec::with_capacity(high * wide);
        for r in row..row + high {
            let start = r * self.blocks_wide + col;
            blocks.extend_from_slice(&self.blocks[start..start + wide]);
        }
        Self::new(self.component_id, high, wide, blocks, self.quant.clone())
    }

    /// Places this grid at `(top, left)` inside a `high`x`wide` grid filled
    /// with `fill`.
    pub fn embed(&self, top: usize, left: usize, high: usize, wide: usize, fill: CoefficientBlock) -> Result<Self> {
        if top + self.blocks_high > high || left + self.blocks_wide > wide {
            return Err(JpegError::Length { expected: high * wide, actual: (top + self.blocks_high) * (left + self.blocks_wide) });
        }
        let mut out = Self::filled(self.component_id, high, wide, fill, self.quant.clone());
        for r in 0..self.blocks_high {
            for c in 0..self.blocks_wide {
                *out.block_mut(top + r, left + c) = *self.block(r, c);
            }
        }
        Ok(out)
    }
}

/// Writes tensors in the dump format; `tensors[i]` is reported as component `i`.
pub fn write_dump(tensors: &[CoefficientTensor]) -> String {
    let mut out = String::new();
    for (ci, t) in tensors.iter().enumerate() {
        for r in 0..t.blocks_high {
            for c in 0..t.blocks_wide {
                write!(out, "{ci} {r} {c}").unwrap();
                for v in t.block(r, c) {
                    write!(out, " {v}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRecord {
    pub component: usize,
    pub block_row: usize,
    pub block_col: usize,
    pub coefficients: CoefficientBlock,
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| JpegError::Dump { line: i + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 67 {
            return Err(err(format!("expected 67 fields, found {}", fields.len())));
        }
        let idx = |k: usize| fields[k].parse::<usize>().map_err(|e| err(e.to_string()));
        let mut coefficients = [0i16; 64];
        for (k, c) in coefficients.iter_mut().enumerate() {
            *c = fields[3 + k].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
        }
        out.push(DumpRecord { component: idx(0)?, block_row: idx(1)?, block_col: idx(2)?, coefficients });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{QuantTable, TableKind};

    fn sample() -> CoefficientTensor {
        let blocks = (0..6).map(|i| std::array::from_fn(|k| (i * 64 + k) as i16)).collect();
        CoefficientTensor::new(1, 2, 3, blocks, QuantTable::standard(TableKind::Luminance)).unwrap()
    }

    #[test]
    fn plane_and_grid_agree() {
        let t = sample();
        let plane = t.plane();
        for r in 0..2 {
            for c in 0..3 {
                for u in 0..8 {
                    for v in 0..8 {
                        assert_eq!(plane[(r * 8 + u) * 24 + c * 8 + v], t.block(r, c)[u * 8 + v]);
                    }
                }
            }
        }
        let back = CoefficientTensor::from_plane(1, &plane, 24, 16, t.quant_table().clone()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dump_round_trip() {
        let t = sample();
        let text = write_dump(std::slice::from_ref(&t));
        let recs = parse_dump(&text).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs[4].block_row, 1);
        assert_eq!(recs[4].block_col, 1);
        assert_eq!(&recs[4].coefficients, t.block(1, 1));
        assert!(parse_dump("0 0 0 1 2").is_err());
    }

    #[test]
    fn sub_grid_and_embed() {
        let t = sample();
        let s = t.sub_grid(1, 1, 1, 2).unwrap();
        assert_eq!(s.block(0, 1), t.block(1, 2));
        let e = s.embed(2, 0, 4, 3, [7; 64]).unwrap();
        assert_eq!(e.block(2, 1), t.block(1, 2));
        assert_eq!(e.block(0, 0), &[7; 64]);
        assert!(t.sub_grid(1, 2, 1, 2).is_err());
    }
}
