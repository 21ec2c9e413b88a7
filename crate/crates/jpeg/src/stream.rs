//! JFIF container: marker segment writing and parsing.

use crate::coeffs::CoefficientTensor;
use crate::entropy::{entropy_decode, entropy_encode, ComponentTables};
use crate::error::{JpegError, Result};
use crate::huffman::{HuffTable, TableClass};
use crate::quant::{QuantTable, TableKind};

pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const SOF0: u8 = 0xC0;
pub const SOF1: u8 = 0xC1;
pub const DHT: u8 = 0xC4;
pub const DQT: u8 = 0xDB;
pub const DRI: u8 = 0xDD;
pub const SOS: u8 = 0xDA;
pub const APP0: u8 = 0xE0;

/// A baseline JFIF byte stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegStream(Vec<u8>);

impl JpegStream {
    /// Wraps bytes that start with SOI and end with EOI.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() < 4 || bytes[0] != 0xFF || bytes[1] != SOI {
            return Err(JpegError::NotJpeg);
        }
        if bytes[bytes.len() - 2..] != [0xFF, EOI] {
            return Err(JpegError::MissingEoi);
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn put_segment(out: &mut Vec<u8>, marker: u8, body: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((body.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(body);
}

/// Serializes coefficient tensors as a single-scan baseline JFIF stream.
///
/// One tensor is written as grayscale; three as YCbCr 4:4:4 with the
/// luminance tables on the first component and chrominance tables on the
/// other two.
pub fn write_stream(width: usize, height: usize, tensors: &[CoefficientTensor]) -> Result<JpegStream> {
    if tensors.len() != 1 && tensors.len() != 3 {
        return Err(JpegError::ComponentCount { expected: 3, actual: tensors.len() });
    }
    if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(JpegError::Empty);
    }
    for t in tensors {
        if t.blocks_wide() != width.div_ceil(8) || t.blocks_high() != height.div_ceil(8) {
            return Err(JpegError::Length {
                expected: width.div_ceil(8) * height.div_ceil(8),
                actual: t.blocks().len(),
            });
        }
    }
    let mut out = vec![0xFF, SOI];
    // JFIF 1.01, aspect 1:1
    put_segment(&mut out, APP0, &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]);

    let qtables: Vec<&QuantTable> = if tensors.len() == 1 {
        vec![tensors[0].quant_table()]
    } else {
        vec![tensors[0].quant_table(), tensors[1].quant_table()]
    };
    if tensors.len() == 3 && tensors[1].quant_table() != tensors[2].quant_table() {
        return Err(JpegError::Unsupported("distinct Cb and Cr quantization tables".into()));
    }
    let mut dqt = Vec::new();
    for (id, q) in qtables.iter().enumerate() {
        if q.zigzag().iter().any(|&e| e > 255) {
            return Err(JpegError::Unsupported("16-bit quantization tables".into()));
        }
        dqt.push(id as u8);
        dqt.extend(q.zigzag().iter().map(|&e| e as u8));
    }
    put_segment(&mut out, DQT, &dqt);

    let mut sof = vec![8];
    sof.extend_from_slice(&(height as u16).to_be_bytes());
    sof.extend_from_slice(&(width as u16).to_be_bytes());
    sof.push(tensors.len() as u8);
    for (i, t) in tensors.iter().enumerate() {
        sof.extend_from_slice(&[t.component_id(), 0x11, (i > 0) as u8]);
    }
    put_segment(&mut out, SOF0, &sof);

    let tables: Vec<ComponentTables> = (0..tensors.len())
        .map(|i| if i == 0 { ComponentTables::luminance() } else { ComponentTables::chrominance() })
        .collect();
    let mut dht = Vec::new();
    for t in tables.iter().take(if tensors.len() == 1 { 1 } else { 2 }) {
        for h in [&t.dc, &t.ac] {
            dht.push(((h.class as u8) << 4) | h.id);
            dht.extend_from_slice(&h.bits);
            dht.extend_from_slice(&h.values);
        }
    }
    put_segment(&mut out, DHT, &dht);

    let mut sos = vec![tensors.len() as u8];
    for (i, t) in tensors.iter().enumerate() {
        let id = (i > 0) as u8;
        sos.extend_from_slice(&[t.component_id(), (id << 4) | id]);
    }
    sos.extend_from_slice(&[0, 63, 0]);
    put_segment(&mut out, SOS, &sos);

    let blocks: Vec<&[_]> = tensors.iter().map(|t| t.blocks()).collect();
    out.extend(entropy_encode(&blocks, &tables)?);
    out.extend_from_slice(&[0xFF, EOI]);
    JpegStream::from_bytes(out)
}

#[derive(Debug, Clone)]
struct FrameComponent {
    id: u8,
    quant_id: u8,
}

/// Result of parsing a stream through entropy decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientImage {
    pub width: usize,
    pub height: usize,
    /// One tensor per frame component, in frame order.
    pub components: Vec<CoefficientTensor>,
    /// Quantization tables by DQT destination (0..=3).
    pub quant_tables: [Option<QuantTable>; 4],
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self, segment: &'static str) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or(JpegError::Malformed { segment })?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self, segment: &'static str) -> Result<u16> {
        Ok(((self.u8(segment)? as u16) << 8) | self.u8(segment)? as u16)
    }

    fn take(&mut self, n: usize, segment: &'static str) -> Result<&'a [u8]> {
        let s = self.data.get(self.pos..self.pos + n).ok_or(JpegError::Malformed { segment })?;
        self.pos += n;
        Ok(s)
    }

    /// Reads a segment's length field and returns its body.
    fn segment(&mut self, name: &'static str) -> Result<&'a [u8]> {
        let len = self.u16(name)? as usize;
        if len < 2 {
            return Err(JpegError::Malformed { segment: name });
        }
        self.take(len - 2, name)
    }

    fn next_marker(&mut self) -> Result<u8> {
        if self.u8("marker").map_err(|_| JpegError::MissingEoi)? != 0xFF {
            return Err(JpegError::Malformed { segment: "marker" });
        }
        let mut m = self.u8("marker").map_err(|_| JpegError::MissingEoi)?;
        while m == 0xFF {
            m = self.u8("marker").map_err(|_| JpegError::MissingEoi)?;
        }
        Ok(m)
    }
}

fn parse_dqt(body: &[u8], tables: &mut [Option<QuantTable>; 4]) -> Result<()> {
    let mut c = Cursor { data: body, pos: 0 };
    while c.pos < body.len() {
        let pq_tq = c.u8("DQT")?;
        let (precision, id) = (pq_tq >> 4, (pq_tq & 0x0F) as usize);
        if id > 3 || precision > 1 {
            return Err(JpegError::Malformed { segment: "DQT" });
        }
        let mut entries = [0u16; 64];
        for e in entries.iter_mut() {
            *e = if precision == 0 { c.u8("DQT")? as u16 } else { c.u16("DQT")? };
        }
        let kind = if id == 0 { TableKind::Luminance } else { TableKind::Chrominance };
        tables[id] = Some(QuantTable::from_zigzag(entries, kind, None)?);
    }
    Ok(())
}

fn parse_dht(body: &[u8], dc: &mut [Option<HuffTable>; 4], ac: &mut [Option<HuffTable>; 4]) -> Result<()> {
    let mut c = Cursor { data: body, pos: 0 };
    while c.pos < body.len() {
        let tc_th = c.u8("DHT")?;
        let (class, id) = (tc_th >> 4, tc_th & 0x0F);
        if class > 1 || id > 3 {
            return Err(JpegError::Malformed { segment: "DHT" });
        }
        let bits: [u8; 16] = c.take(16, "DHT")?.try_into().unwrap();
        let n: usize = bits.iter().map(|&b| b as usize).sum();
        let values = c.take(n, "DHT")?.to_vec();
        let class = if class == 0 { TableClass::Dc } else { TableClass::Ac };
        let t = HuffTable::new(class, id, bits, values)?;
        match class {
            TableClass::Dc => dc[id as usize] = Some(t),
            TableClass::Ac => ac[id as usize] = Some(t),
        }
    }
    Ok(())
}

/// Parses a baseline stream and entropy-decodes every scan, stopping at the
/// quantized coefficients.
pub fn parse_stream(bytes: &[u8]) -> Result<CoefficientImage> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != SOI {
        return Err(JpegError::NotJpeg);
    }
    let mut c = Cursor { data: bytes, pos: 2 };
    let mut quant: [Option<QuantTable>; 4] = Default::default();
    let mut dc: [Option<HuffTable>; 4] = Default::default();
    let mut ac: [Option<HuffTable>; 4] = Default::default();
    let mut restart_interval = 0usize;
    let mut frame: Option<(usize, usize, Vec<FrameComponent>)> = None;
    let mut blocks: Vec<Option<Vec<[i16; 64]>>> = Vec::new();

    loop {
        let marker = c.next_marker()?;
        match marker {
            EOI => break,
            SOI => return Err(JpegError::Malformed { segment: "SOI" }),
            DQT => parse_dqt(c.segment("DQT")?, &mut quant)?,
            DHT => parse_dht(c.segment("DHT")?, &mut dc, &mut ac)?,
            DRI => {
                let body = c.segment("DRI")?;
                if body.len() != 2 {
                    return Err(JpegError::Malformed { segment: "DRI" });
                }
                restart_interval = u16::from_be_bytes([body[0], body[1]]) as usize;
            }
            SOF0 | SOF1 => {
                if frame.is_some() {
                    return Err(JpegError::Malformed { segment: "SOF" });
                }
                let body = c.segment("SOF")?;
                let mut s = Cursor { data: body, pos: 0 };
                let precision = s.u8("SOF")?;
                if precision != 8 {
                    return Err(JpegError::Unsupported(format!("{precision}-bit samples")));
                }
                let height = s.u16("SOF")? as usize;
                let width = s.u16("SOF")? as usize;
                let n = s.u8("SOF")? as usize;
                if height == 0 {
                    return Err(JpegError::Unsupported("DNL-defined height".into()));
                }
                if width == 0 || n == 0 {
                    return Err(JpegError::Malformed { segment: "SOF" });
                }
                let mut comps = Vec::with_capacity(n);
                for _ in 0..n {
                    let id = s.u8("SOF")?;
                    let hv = s.u8("SOF")?;
                    let quant_id = s.u8("SOF")?;
                    if n > 1 && hv != 0x11 {
                        return Err(JpegError::Unsupported("chroma subsampling".into()));
                    }
                    if quant_id > 3 {
                        return Err(JpegError::Malformed { segment: "SOF" });
                    }
                    comps.push(FrameComponent { id, quant_id });
                }
                blocks = vec![None; n];
                frame = Some((width, height, comps));
            }
            SOS => {
                let (width, height, comps) = frame.as_ref().ok_or(JpegError::Undefined("frame header"))?;
                let body = c.segment("SOS")?;
                let mut s = Cursor { data: body, pos: 0 };
                let ns = s.u8("SOS")? as usize;
                let mut members = Vec::with_capacity(ns);
                let mut tables = Vec::with_capacity(ns);
                for _ in 0..ns {
                    let id = s.u8("SOS")?;
                    let td_ta = s.u8("SOS")?;
                    let idx = comps
                        .iter()
                        .position(|fc| fc.id == id)
                        .ok_or(JpegError::Undefined("scan component"))?;
                    let dct = dc[(td_ta >> 4) as usize & 3].clone().ok_or(JpegError::Undefined("DC Huffman table"))?;
                    let act = ac[(td_ta & 0x0F) as usize & 3].clone().ok_or(JpegError::Undefined("AC Huffman table"))?;
                    members.push(idx);
                    tables.push(ComponentTables { dc: dct, ac: act });
                }
                let (ss, se, ahal) = (s.u8("SOS")?, s.u8("SOS")?, s.u8("SOS")?);
                if ss != 0 || se != 63 || ahal != 0 {
                    return Err(JpegError::Unsupported("spectral selection or successive approximation".into()));
                }
                let n_blocks = width.div_ceil(8) * height.div_ceil(8);
                let (decoded, used) = entropy_decode(&bytes[c.pos..], n_blocks, &tables, restart_interval)?;
                c.pos += used;
                for (idx, b) in members.into_iter().zip(decoded) {
                    blocks[idx] = Some(b);
                }
                // skip anything up to the next marker (e.g. trailing padding)
                while c.pos + 1 < bytes.len() && !(bytes[c.pos] == 0xFF && bytes[c.pos + 1] != 0x00) {
                    c.pos += 1;
                }
            }
            0xC2 | 0xC6 | 0xCA | 0xCE => return Err(JpegError::Unsupported("progressive DCT".into())),
            0xC3 | 0xC5 | 0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(JpegError::Unsupported(format!("frame type {marker:#04x}")))
            }
            0xD0..=0xD7 => return Err(JpegError::Malformed { segment: "RST" }),
            _ => {
                c.segment("APP/COM")?;
            }
        }
    }

    let (width, height, comps) = frame.ok_or(JpegError::Undefined("frame header"))?;
    let mut components = Vec::with_capacity(comps.len());
    for (fc, b) in comps.iter().zip(blocks) {
        let b = b.ok_or(JpegError::Undefined("scan for a frame component"))?;
        let q = quant[fc.quant_id as usize].clone().ok_or(JpegError::Undefined("quantization table"))?;
        components.push(CoefficientTensor::new(fc.id, height.div_ceil(8), width.div_ceil(8), b, q)?);
    }
    Ok(CoefficientImage { width, height, components, quant_tables: quant })
}
