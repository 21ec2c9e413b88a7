//! Raster file I/O. Portable anymap is always supported; grayscale output is written as binary PGM.

use crate::error::{Error, Result};
use cdbin_jpeg::PixelImage;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use std::path::Path;

fn image_err(path: &Path, e: impl ToString) -> Error {
    Error::Image { path: path.to_path_buf(), reason: e.to_string() }
}

/// Reads a PGM/PPM (or a JPEG, via the crate's own decoder) as grayscale or RGB.
pub fn read_image(path: &Path) -> Result<PixelImage> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    if bytes.starts_with(&[0xFF, 0xD8]) {
        return Ok(cdbin_jpeg::decode_image(&bytes)?);
    }
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm).map_err(|e| image_err(path, e))?;
    Ok(from_dynamic(img)?)
}

pub fn read_gray(path: &Path) -> Result<PixelImage> {
    let img = read_image(path)?;
    if img.components() == 1 {
        return Ok(img);
    }
    Ok(to_gray(&img))
}

fn from_dynamic(img: DynamicImage) -> cdbin_jpeg::Result<PixelImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        PixelImage::new(w, h, 3, img.into_rgb8().into_raw())
    } else {
        PixelImage::gray(w, h, img.into_luma8().into_raw())
    }
}

/// BT.601 luma of an RGB image, rounded.
pub fn to_gray(img: &PixelImage) -> PixelImage {
    if img.components() == 1 {
        return img.clone();
    }
    let samples = img
        .samples()
        .chunks(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round().clamp(0.0, 255.0) as u8)
        .collect();
    PixelImage::gray(img.width(), img.height(), samples).expect("same size")
}

/// Binary PGM (1 component) or PPM (3 components) bytes.
pub fn encode_pnm(img: &PixelImage) -> Vec<u8> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let (subtype, color) = if img.components() == 1 {
        (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
    } else {
        (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
    };
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(img.samples(), w, h, color)
        .expect("in-memory PNM encoding");
    buf
}

pub fn write_pnm(path: &Path, img: &PixelImage) -> Result<()> {
    std::fs::write(path, encode_pnm(img)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
