//! Entropy-coded segment bit I/O with 0xFF byte stuffing.

use crate::error::{JpegError, Result};

#[derive(Debug, Default)]
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `len` bits of `bits`, MSB first.
    pub fn put(&mut self, bits: u32, len: u8) {
        debug_assert!(len <= 16);
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (bits & ((1 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.push_byte(byte);
            self.nbits -= 8;
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    fn push_byte(&mut self, byte: u8) {
        self.out.push(byte);
        if byte == 0xFF {
            self.out.push(0x00);
        }
    }

    /// Pads the final partial byte with 1-bits and returns the segment.
    pub fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// Reads bits from entropy-coded data, removing stuffing and stopping at
/// markers. `RSTn` markers are surfaced through [`BitReader::expect_restart`].
#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
    /// Set once a non-stuffing marker is reached.
    marker: Option<u8>,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, acc: 0, nbits: 0, marker: None }
    }

    fn fill_byte(&mut self) -> Result<()> {
        if self.marker.is_some() {
            return Err(JpegError::Truncated);
        }
        let &b = self.data.get(self.pos).ok_or(JpegError::Truncated)?;
        if b == 0xFF {
            // skip fill bytes
            let mut next = self.pos + 1;
            while self.data.get(next) == Some(&0xFF) {
                next += 1;
            }
            match self.data.get(next) {
                Some(0x00) => {
                    self.pos = next + 1;
                }
                Some(&m) => {
                    self.pos = next + 1;
                    self.marker = Some(m);
                    return Err(JpegError::Truncated);
                }
                None => return Err(JpegError::Truncated),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | b as u32;
        self.nbits += 8;
        Ok(())
    }

    pub fn bit(&mut self) -> Result<u32> {
        if self.nbits == 0 {
            self.fill_byte()?;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    pub fn bits(&mut self, n: u8) -> Result<u32> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    /// Discards the remaining bits of the current byte and consumes the
    /// restart marker `RST{index}`.
    pub fn expect_restart(&mut self, index: u8) -> Result<()> {
        self.nbits = 0;
        self.acc = 0;
        let found = match self.marker.take() {
            Some(m) => m,
            None => {
                let mut p = self.pos;
                if self.data.get(p) != Some(&0xFF) {
                    return Err(JpegError::Restart { expected: index, found: *self.data.get(p).unwrap_or(&0) });
                }
                while self.data.get(p) == Some(&0xFF) {
                    p += 1;
                }
                let &m = self.data.get(p).ok_or(JpegError::Truncated)?;
                self.pos = p + 1;
                m
            }
        };
        if found != 0xD0 + index {
            return Err(JpegError::Restart { expected: index, found });
        }
        Ok(())
    }

    /// Byte offset just past the consumed entropy data (before any
    /// terminating marker).
    pub fn position(&self) -> usize {
        match self.marker {
            Some(_) => {
                // back up over the 0xFF, marker pair
                let mut p = self.pos - 1;
                while p > 0 && self.data[p - 1] == 0xFF {
                    p -= 1;
                }
                p
            }
            None => self.pos,
        }
    }
}
