//! Run-length coding of the 63 AC coefficients of a zig-zag scanned block.

use crate::error::{JpegError, Result};

/// One `(run, value)` pair: `run` zeros followed by `value`.
///
/// `(0, 0)` is end-of-block and `(15, 0)` is the sixteen-zero run (ZRL).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLength {
    pub run: u8,
    pub value: i16,
}

impl RunLength {
    pub const EOB: RunLength = RunLength { run: 0, value: 0 };
    pub const ZRL: RunLength = RunLength { run: 15, value: 0 };

    pub fn new(run: u8, value: i16) -> Self {
        Self { run, value }
    }
}

pub fn rle_ac(ac: &[i16]) -> Result<Vec<RunLength>> {
    if ac.len() != 63 {
        return Err(JpegError::Length { expected: 63, actual: ac.len() });
    }
    let mut out = Vec::new();
    let mut run = 0u8;
    for &v in ac {
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            out.push(RunLength::ZRL);
            run -= 16;
        }
        out.push(RunLength::new(run, v));
        run = 0;
    }
    if run > 0 {
        out.push(RunLength::EOB);
    }
    Ok(out)
}

pub fn inverse_rle_ac(symbols: &[RunLength]) -> Result<[i16; 63]> {
    let mut ac = [0i16; 63];
    let mut pos = 0usize;
    for s in symbols {
        if s.run > 15 {
            return Err(JpegError::RunLength(s.run));
        }
        if *s == RunLength::EOB {
            return Ok(ac);
        }
        if pos >= 63 {
            return Err(JpegError::RunOverflow);
        }
        if s.value == 0 && s.run != 15 {
            return Err(JpegError::InvalidCode);
        }
        // ZRL writes a zero in place of a value, covering 16 positions
        pos += s.run as usize;
        if pos >= 63 {
            return Err(JpegError::RunOverflow);
        }
        ac[pos] = s.value;
        pos += 1;
    }
    Ok(ac)
}
