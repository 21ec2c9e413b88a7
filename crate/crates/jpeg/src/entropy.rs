//! Huffman coding of DPCM-coded DC values and run-length-coded AC values.

use crate::bits::{BitReader, BitWriter};
use crate::block::CoefficientBlock;
use crate::error::{JpegError, Result};
use crate::huffman::{HuffDecoder, HuffEncoder, HuffTable};
use crate::rle::{rle_ac, RunLength};
use crate::zigzag::ZIGZAG;

const MAX_DC_CATEGORY: u8 = 11;
const MAX_AC_CATEGORY: u8 = 10;

/// The DC and AC tables used for one component of a scan.
#[derive(Debug, Clone)]
pub struct ComponentTables {
    pub dc: HuffTable,
    pub ac: HuffTable,
}

impl ComponentTables {
    pub fn luminance() -> Self {
        Self { dc: HuffTable::dc_luminance(), ac: HuffTable::ac_luminance() }
    }

    pub fn chrominance() -> Self {
        Self { dc: HuffTable::dc_chrominance(), ac: HuffTable::ac_chrominance() }
    }
}

/// Magnitude category (bit length of |v|).
pub fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// Low `category` bits representing `v` (one's complement for negatives).
fn magnitude_bits(v: i32, cat: u8) -> u32 {
    if v < 0 {
        (v - 1) as u32 & ((1u32 << cat) - 1)
    } else {
        v as u32
    }
}

fn extend(bits: u32, cat: u8) -> i32 {
    if cat == 0 {
        0
    } else if bits < (1 << (cat - 1)) {
        bits as i32 - (1 << cat) + 1
    } else {
        bits as i32
    }
}

struct Coder {
    dc: HuffEncoder,
    ac: HuffEncoder,
}

fn encode_block(w: &mut BitWriter, coder: &Coder, block: &CoefficientBlock, pred: &mut i32) -> Result<()> {
    let dc = block[0] as i32;
    let diff = dc - *pred;
    *pred = dc;
    let cat = category(diff);
    if cat > MAX_DC_CATEGORY {
        return Err(JpegError::CoefficientRange { value: diff, max_category: MAX_DC_CATEGORY });
    }
    let (code, len) = coder.dc.code(cat)?;
    w.put(code as u32, len);
    w.put(magnitude_bits(diff, cat), cat);

    let ac: [i16; 63] = std::array::from_fn(|k| block[ZIGZAG[k + 1]]);
    for RunLength { run, value } in rle_ac(&ac)? {
        let v = value as i32;
        let cat = category(v);
        if cat > MAX_AC_CATEGORY {
            return Err(JpegError::CoefficientRange { value: v, max_category: MAX_AC_CATEGORY });
        }
        let (code, len) = coder.ac.code((run << 4) | cat)?;
        w.put(code as u32, len);
        w.put(magnitude_bits(v, cat), cat);
    }
    Ok(())
}

/// Encodes one scan. A single component is coded non-interleaved; several
/// components (all with the same block grid) are interleaved block by block.
/// Returns the stuffed entropy-coded segment.
pub fn entropy_encode(components: &[&[CoefficientBlock]], tables: &[ComponentTables]) -> Result<Vec<u8>> {
    if components.is_empty() || components.iter().any(|c| c.is_empty()) {
        return Err(JpegError::Empty);
    }
    if tables.len() != components.len() {
        return Err(JpegError::Length { expected: components.len(), actual: tables.len() });
    }
    let n = components[0].len();
    if let Some(bad) = components.iter().find(|c| c.len() != n) {
        return Err(JpegError::Length { expected: n, actual: bad.len() });
    }
    let coders: Vec<Coder> = tables
        .iter()
        .map(|t| Coder { dc: HuffEncoder::new(&t.dc), ac: HuffEncoder::new(&t.ac) })
        .collect();
    let mut preds = vec![0i32; components.len()];
    let mut w = BitWriter::new();
    for i in 0..n {
        for (ci, comp) in components.iter().enumerate() {
            encode_block(&mut w, &coders[ci], &comp[i], &mut preds[ci])?;
        }
    }
    Ok(w.finish())
}

struct Decoder {
    dc: HuffDecoder,
    ac: HuffDecoder,
}

fn decode_block(r: &mut BitReader<'_>, dec: &Decoder, pred: &mut i32) -> Result<CoefficientBlock> {
    let mut block = [0i16; 64];
    let cat = dec.dc.decode(|| r.bit())?;
    if cat > MAX_DC_CATEGORY {
        return Err(JpegError::InvalidCode);
    }
    let diff = extend(r.bits(cat)?, cat);
    *pred += diff;
    block[0] = i16::try_from(*pred).map_err(|_| JpegError::InvalidCode)?;
    let mut k = 1usize;
    while k < 64 {
        let rs = dec.ac.decode(|| r.bit())?;
        let (run, cat) = (rs >> 4, rs & 0x0F);
        if cat == 0 {
            match run {
                0 => break,
                15 => {
                    k += 16;
                    continue;
                }
                _ => return Err(JpegError::InvalidCode),
            }
        }
        k += run as usize;
        if k > 63 || cat > MAX_AC_CATEGORY {
            return Err(JpegError::InvalidCode);
        }
        block[ZIGZAG[k]] = extend(r.bits(cat)?, cat) as i16;
        k += 1;
    }
    if k > 64 {
        return Err(JpegError::RunOverflow);
    }
    Ok(block)
}

/// Decodes one scan of `blocks_per_component` blocks per component.
///
/// `restart_interval` counts MCUs between `RSTn` markers (0 = none); DC
/// predictors reset at each marker. Returns the blocks of each component
/// and the number of bytes consumed.
pub fn entropy_decode(
    data: &[u8],
    blocks_per_component: usize,
    tables: &[ComponentTables],
    restart_interval: usize,
) -> Result<(Vec<Vec<CoefficientBlock>>, usize)> {
    if blocks_per_component == 0 || tables.is_empty() {
        return Err(JpegError::Empty);
    }
    let decoders: Vec<Decoder> = tables
        .iter()
        .map(|t| Decoder { dc: HuffDecoder::new(&t.dc), ac: HuffDecoder::new(&t.ac) })
        .collect();
    let mut out = vec![Vec::with_capacity(blocks_per_component); tables.len()];
    let mut preds = vec![0i32; tables.len()];
    let mut r = BitReader::new(data);
    let mut next_rst = 0u8;
    for mcu in 0..blocks_per_component {
        if restart_interval > 0 && mcu > 0 && mcu % restart_interval == 0 {
            r.expect_restart(next_rst)?;
            next_rst = (next_rst + 1) % 8;
            preds.iter_mut().for_each(|p| *p = 0);
        }
        for (ci, dec) in decoders.iter().enumerate() {
            let b = decode_block(&mut r, dec, &mut preds[ci])?;
            out[ci].push(b);
        }
    }
    Ok((out, r.position()))
}
