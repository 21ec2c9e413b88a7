//! Full-range BT.601 color conversion, as used by JFIF.

use crate::error::{JpegError, Result};
use crate::image::PixelImage;

fn clamp_round(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn rgb_pixel_to_ycbcr(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
    let cr = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
    (clamp_round(y), clamp_round(cb), clamp_round(cr))
}

pub fn ycbcr_pixel_to_rgb(y: u8, cb: u8, cr: u8) -> (u8, u8, u8) {
    let (y, cb, cr) = (y as f64, cb as f64 - 128.0, cr as f64 - 128.0);
    let r = y + 1.402 * cr;
    let g = y - 0.344_136 * cb - 0.714_136 * cr;
    let b = y + 1.772 * cb;
    (clamp_round(r), clamp_round(g), clamp_round(b))
}

fn map_pixels(img: &PixelImage, f: fn(u8, u8, u8) -> (u8, u8, u8)) -> Result<PixelImage> {
    if img.components() != 3 {
        return Err(JpegError::ComponentCount { expected: 3, actual: img.components() });
    }
    let mut out = Vec::with_capacity(img.raw_len());
    for px in img.samples().chunks_exact(3) {
        let (a, b, c) = f(px[0], px[1], px[2]);
        out.extend_from_slice(&[a, b, c]);
    }
    PixelImage::new(img.width(), img.height(), 3, out)
}

pub fn rgb_to_ycbcr(img: &PixelImage) -> Result<PixelImage> {
    map_pixels(img, rgb_pixel_to_ycbcr)
}

pub fn ycbcr_to_rgb(img: &PixelImage) -> Result<PixelImage> {
    map_pixels(img, ycbcr_pixel_to_rgb)
}
