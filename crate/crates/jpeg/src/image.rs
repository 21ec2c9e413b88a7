use crate::error::{JpegError, Result};

/// An 8-bit raster with one (grayscale) or three (RGB or YCbCr) components.
///
/// Samples are stored row-major with components interleaved per pixel,
/// the same layout as binary PGM/PPM payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    components: usize,
    samples: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: usize, height: usize, components: usize, samples: Vec<u8>) -> Result<Self> {
        if components != 1 && components != 3 {
            return Err(JpegError::ComponentCount { expected: 1, actual: components });
        }
        let expected = width * height * components;
        if samples.len() != expected {
            return Err(JpegError::SampleCount { expected, actual: samples.len() });
        }
        Ok(Self { width, height, components, samples })
    }

    pub fn filled(width: usize, height: usize, components: usize, value: u8) -> Result<Self> {
        Self::new(width, height, components, vec![value; width * height * components])
    }

    pub fn gray(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, samples)
    }

    /// Interleaves equally sized planes into one image.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<u8>]) -> Result<Self> {
        let components = planes.len();
        if components != 1 && components != 3 {
            return Err(JpegError::ComponentCount { expected: 3, actual: components });
        }
        for p in planes {
            if p.len() != width * height {
                return Err(JpegError::SampleCount { expected: width * height, actual: p.len() });
            }
        }
        let mut samples = Vec::with_capacity(width * height * components);
        for i in 0..width * height {
            for p in planes {
                samples.push(p[i]);
            }
        }
        Self::new(width, height, components, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    /// Size of the raw sample buffer in bytes.
    pub fn raw_len(&self) -> usize {
        self.samples.len()
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.samples[(y * self.width + x) * self.components + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.samples[(y * self.width + x) * self.components + c] = v;
    }

    /// Extracts component `c` as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<u8> {
        self.samples.iter().skip(c).step_by(self.components).copied().collect()
    }

    /// Copies the `w`x`h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(JpegError::Length { expected: self.width * self.height, actual: (x + w) * (y + h) });
        }
        let mut samples = Vec::with_capacity(w * h * self.components);
        for row in y..y + h {
            let start = (row * self.width + x) * self.components;
            samples.extend_from_slice(&self.samples[start..start + w * self.components]);
        }
        Self::new(w, h, self.components, samples)
    }
}
