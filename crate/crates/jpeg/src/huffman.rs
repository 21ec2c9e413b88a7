//! Canonical Huffman tables and the JPEG default (Annex K) table set.

use crate::error::{JpegError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableClass {
    Dc = 0,
    Ac = 1,
}

/// A Huffman table as carried by a DHT segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffTable {
    pub class: TableClass,
    pub id: u8,
    /// `bits[i]` = number of codes of length `i + 1`.
    pub bits: [u8; 16],
    pub values: Vec<u8>,
}

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];

const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
];

const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA,
];

impl HuffTable {
    pub fn new(class: TableClass, id: u8, bits: [u8; 16], values: Vec<u8>) -> Result<Self> {
        let t = Self { class, id, bits, values };
        t.validate()?;
        Ok(t)
    }

    pub fn dc_luminance() -> Self {
        Self::new(TableClass::Dc, 0, DC_LUMA_BITS, (0..12).collect()).expect("standard table")
    }

    pub fn dc_chrominance() -> Self {
        Self::new(TableClass::Dc, 1, DC_CHROMA_BITS, (0..12).collect()).expect("standard table")
    }

    pub fn ac_luminance() -> Self {
        Self::new(TableClass::Ac, 0, AC_LUMA_BITS, AC_LUMA_VALUES.to_vec()).expect("standard table")
    }

    pub fn ac_chrominance() -> Self {
        Self::new(TableClass::Ac, 1, AC_CHROMA_BITS, AC_CHROMA_VALUES.to_vec())
            .expect("standard table")
    }

    fn validate(&self) -> Result<()> {
        let total: usize = self.bits.iter().map(|&b| b as usize).sum();
        if total > 256 {
            return Err(JpegError::HuffmanTable("more than 256 symbols"));
        }
        if total != self.values.len() {
            return Err(JpegError::HuffmanTable("symbol count does not match code lengths"));
        }
        let mut code: u32 = 0;
        for (i, &n) in self.bits.iter().enumerate() {
            let len = i + 1;
            code += n as u32;
            if code > (1 << len) {
                return Err(JpegError::HuffmanTable("code space overflow"));
            }
            if len == 16 && n > 0 && code == (1 << 16) {
                return Err(JpegError::HuffmanTable("all-ones 16-bit code"));
            }
            code <<= 1;
        }
        Ok(())
    }

    /// Canonical `(code, length)` pairs in symbol-list order.
    pub fn codes(&self) -> Vec<(u16, u8)> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut code: u32 = 0;
        for (i, &n) in self.bits.iter().enumerate() {
            for _ in 0..n {
                out.push((code as u16, (i + 1) as u8));
                code += 1;
            }
            code <<= 1;
        }
        out
    }
}

/// Symbol to code lookup for encoding.
#[derive(Debug, Clone)]
pub struct HuffEncoder {
    table: [Option<(u16, u8)>; 256],
}

impl HuffEncoder {
    pub fn new(t: &HuffTable) -> Self {
        let mut table = [None; 256];
        for (&sym, code) in t.values.iter().zip(t.codes()) {
            table[sym as usize] = Some(code);
        }
        Self { table }
    }

    pub fn code(&self, symbol: u8) -> Result<(u16, u8)> {
        self.table[symbol as usize].ok_or(JpegError::MissingSymbol(symbol))
    }
}

/// Canonical decoding tables (`maxcode` / `valptr` per code length).
#[derive(Debug, Clone)]
pub struct HuffDecoder {
    min_code: [i32; 17],
    max_code: [i32; 17],
    val_ptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffDecoder {
    pub fn new(t: &HuffTable) -> Self {
        let mut min_code = [0; 17];
        let mut max_code = [-1; 17];
        let mut val_ptr = [0; 17];
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = t.bits[len - 1] as usize;
            if n > 0 {
                val_ptr[len] = k;
                min_code[len] = code;
                code += n as i32;
                k += n;
                max_code[len] = code - 1;
            }
            code <<= 1;
        }
        Self { min_code, max_code, val_ptr, values: t.values.clone() }
    }

    /// Decodes one symbol, pulling bits from `next_bit`.
    pub fn decode(&self, mut next_bit: impl FnMut() -> Result<u32>) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | next_bit()? as i32;
            if code <= self.max_code[len] {
                let idx = self.val_ptr[len] + (code - self.min_code[len]) as usize;
                return self.values.get(idx).copied().ok_or(JpegError::InvalidCode);
            }
        }
        Err(JpegError::InvalidCode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_tables_are_valid() {
        for t in [
            HuffTable::dc_luminance(),
            HuffTable::dc_chrominance(),
            HuffTable::ac_luminance(),
            HuffTable::ac_chrominance(),
        ] {
            assert!(t.values.len() <= 256);
            let codes = t.codes();
            // canonical: no code is the all-ones word of its length
            for &(c, l) in &codes {
                assert_ne!(c as u32, (1u32 << l) - 1);
            }
        }
    }

    #[test]
    fn dc_luminance_codes() {
        let codes = HuffTable::dc_luminance().codes();
        assert_eq!(codes[0], (0b00, 2));
        assert_eq!(codes[1], (0b010, 3));
        assert_eq!(codes[11], (0b1_1111_1110, 9));
    }

    #[test]
    fn ac_luminance_eob_and_zrl() {
        let enc = HuffEncoder::new(&HuffTable::ac_luminance());
        assert_eq!(enc.code(0x00).unwrap(), (0b1010, 4));
        assert_eq!(enc.code(0xF0).unwrap(), (0b111_1111_1001, 11));
        assert_eq!(enc.code(0x0B), Err(JpegError::MissingSymbol(0x0B)));
    }

    #[test]
    fn rejects_bad_tables() {
        let mut bits = [0u8; 16];
        bits[0] = 3; // three 1-bit codes
        assert!(HuffTable::new(TableClass::Dc, 0, bits, vec![0, 1, 2]).is_err());
        let mut bits = [0u8; 16];
        bits[1] = 1;
        assert!(HuffTable::new(TableClass::Dc, 0, bits, vec![0, 1]).is_err());
        // complete code whose last 16-bit code is all ones
        let mut bits = [1u8; 16];
        bits[15] = 2;
        assert_eq!(
            HuffTable::new(TableClass::Ac, 0, bits, (0..17).collect()),
            Err(JpegError::HuffmanTable("all-ones 16-bit code"))
        );
    }

    #[test]
    fn decode_every_symbol() {
        let t = HuffTable::ac_chrominance();
        let enc = HuffEncoder::new(&t);
        let dec = HuffDecoder::new(&t);
        for &sym in &t.values {
            let (code, len) = enc.code(sym).unwrap();
            let mut i = len;
            let got = dec
                .decode(|| {
                    i -= 1;
                    Ok(((code >> i) & 1) as u32)
                })
                .unwrap();
            assert_eq!(got, sym);
        }
    }
}
