//! Quantization tables and block quantization.

use crate::block::{Block8, CoefficientBlock};
use crate::error::{JpegError, Result};
use crate::zigzag::{UNZIGZAG, ZIGZAG};

/// Standard luminance table (natural order).
pub const STD_LUMINANCE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69,
    56, 14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104,
    113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

/// Standard chrominance table (natural order).
pub const STD_CHROMINANCE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99,
    99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Luminance,
    Chrominance,
}

/// A quantization table. Entries are kept in zig-zag order, the order in
/// which DQT stores them. Two tables are equal when their entries are.
#[derive(Debug, Clone)]
pub struct QuantTable {
    entries: [u16; 64],
    kind: TableKind,
    /// `None` for tables read from a stream.
    quality: Option<u8>,
}

impl QuantTable {
    pub fn from_zigzag(entries: [u16; 64], kind: TableKind, quality: Option<u8>) -> Result<Self> {
        if entries.contains(&0) {
            return Err(JpegError::Malformed { segment: "DQT" });
        }
        Ok(Self { entries, kind, quality })
    }

    pub fn standard(kind: TableKind) -> Self {
        scale_quant_table(kind, 50).expect("quality 50 is valid")
    }

    pub fn zigzag(&self) -> &[u16; 64] {
        &self.entries
    }

    pub fn natural(&self) -> [u16; 64] {
        std::array::from_fn(|n| self.entries[UNZIGZAG[n]])
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn quality(&self) -> Option<u8> {
        self.quality
    }
}

impl PartialEq for QuantTable {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Eq for QuantTable {}

/// IJG quality scaling of the standard tables.
pub fn scale_quant_table(kind: TableKind, quality: u32) -> Result<QuantTable> {
    if !(1..=100).contains(&quality) {
        return Err(JpegError::Quality(quality));
    }
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    let base = match kind {
        TableKind::Luminance => &STD_LUMINANCE,
        TableKind::Chrominance => &STD_CHROMINANCE,
    };
    let entries = std::array::from_fn(|k| {
        let e = (base[ZIGZAG[k]] as u32 * scale + 50) / 100;
        e.clamp(1, 255) as u16
    });
    Ok(QuantTable { entries, kind, quality: Some(quality as u8) })
}

/// Divides by the table and rounds half away from zero.
pub fn quantize_block(coeffs: &Block8, table: &QuantTable) -> CoefficientBlock {
    let q = table.natural();
    std::array::from_fn(|n| {
        (coeffs[n] / q[n] as f64).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
    })
}

pub fn dequantize_block(block: &CoefficientBlock, table: &QuantTable) -> Block8 {
    let q = table.natural();
    std::array::from_fn(|n| block[n] as f64 * q[n] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quality_50_is_standard() {
        let t = scale_quant_table(TableKind::Luminance, 50).unwrap();
        assert_eq!(t.natural(), STD_LUMINANCE);
        let c = scale_quant_table(TableKind::Chrominance, 50).unwrap();
        assert_eq!(c.natural(), STD_CHROMINANCE);
    }

    #[test]
    fn quality_100_all_ones() {
        let t = scale_quant_table(TableKind::Luminance, 100).unwrap();
        assert!(t.zigzag().iter().all(|&e| e == 1));
    }

    #[test]
    fn quality_25_dc() {
        let t = scale_quant_table(TableKind::Luminance, 25).unwrap();
        assert_eq!(t.zigzag()[0], 32);
    }

    #[test]
    fn low_quality_clamps_to_255() {
        let t = scale_quant_table(TableKind::Luminance, 1).unwrap();
        assert!(t.zigzag().iter().all(|&e| (1..=255).contains(&e)));
        assert_eq!(t.zigzag()[63], 255);
    }

    #[test]
    fn quality_out_of_range() {
        assert_eq!(scale_quant_table(TableKind::Luminance, 0), Err(JpegError::Quality(0)));
        assert_eq!(scale_quant_table(TableKind::Luminance, 101), Err(JpegError::Quality(101)));
    }

    #[test]
    fn dc_rounds_half_away() {
        let t = QuantTable::standard(TableKind::Luminance);
        let mut c = [0.0; 64];
        c[0] = 1016.0;
        assert_eq!(quantize_block(&c, &t)[0], 64);
        c[0] = -1016.0;
        assert_eq!(quantize_block(&c, &t)[0], -64);
        let mut q = [0i16; 64];
        q[0] = 64;
        assert_eq!(dequantize_block(&q, &t)[0], 1024.0);
        assert_eq!(quantize_block(&[0.0; 64], &t), [0; 64]);
    }

    #[test]
    fn divisible_values_survive() {
        let t = QuantTable::standard(TableKind::Chrominance);
        let q = t.natural();
        let c: Block8 = std::array::from_fn(|n| (n as f64 - 30.0) * q[n] as f64);
        assert_eq!(dequantize_block(&quantize_block(&c, &t), &t), c);
    }

    proptest! {
        #[test]
        fn quantize_dequantize_idempotent(
            b in proptest::collection::vec(-1024i16..1024, 64),
            quality in 1u32..=100,
        ) {
            let t = scale_quant_table(TableKind::Luminance, quality).unwrap();
            let block: CoefficientBlock = b.try_into().unwrap();
            prop_assert_eq!(quantize_block(&dequantize_block(&block, &t), &t), block);
        }
    }
}
