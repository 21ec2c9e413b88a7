//! Binarization of compressed streams with a trained generator.

use super::bridge::{coefficients_to_tensor, pixels_to_tensor, probabilities_to_gray};
use super::config::InputKind;
use super::train::{input_from_stream, Model};
use crate::data::{pad_image, padded_dims, tile_image, untile, Tile};
use crate::error::{Error, Result};
use crate::eval::threshold_binarize;
use crate::imageio;
use cdbin_jpeg::{decode_image, partial_decode, CoefficientTensor, PixelImage};

/// Generator output for one tile as an 8-bit probability image.
pub fn tile_probabilities(model: &Model, stream: &[u8]) -> Result<PixelImage> {
    let input = input_from_stream(stream, model.config.input)?;
    let p = model.predict(&input)?;
    let (h, w) = (p.shape()[1], p.shape()[2]);
    probabilities_to_gray(p.data(), w, h)
}

/// Binary `{0, 255}` map of one stored tile.
pub fn binarize_tile(model: &Model, stream: &[u8]) -> Result<PixelImage> {
    Ok(threshold_binarize(&tile_probabilities(model, stream)?, 127))
}

/// Coefficient block that decodes to a black 8x8 block under `t`'s quantization.
fn black_block(t: &CoefficientTensor) -> [i16; 64] {
    let q = t.quant_table().natural()[0] as f64;
    let mut b = [0i16; 64];
    b[0] = (-1024.0 / q).round() as i16;
    b
}

/// Binarizes a whole document stream: pads, tiles, runs the generator per tile,
/// reassembles, and crops back to the document size.
///
/// With compressed input the padding is applied to the coefficient grid, so the
/// document is never decoded to pixels.
pub fn binarize_document(model: &Model, stream: &[u8], border: usize) -> Result<PixelImage> {
    let tile = model.config.tile_size;
    let mut probs = Vec::new();
    let (width, height, rows, cols);
    match model.config.input {
        InputKind::Compressed => {
            if !border.is_multiple_of(8) {
                return Err(Error::Config(format!("border {border} is not a multiple of 8")));
            }
            let ci = partial_decode(stream)?;
            (width, height) = (ci.width, ci.height);
            let (pw, ph) = padded_dims(width, height, border, tile);
            let luma = &ci.components[0];
            let luma = luma.sub_grid(0, 0, height.div_ceil(8), width.div_ceil(8))?;
            let grid = luma.embed(border / 8, border / 8, ph / 8, pw / 8, black_block(&luma))?;
            (rows, cols) = (ph / tile, pw / tile);
            let tb = tile / 8;
            for r in 0..rows {
                for c in 0..cols {
                    let sub = grid.sub_grid(r * tb, c * tb, tb, tb)?;
                    probs.push(Tile { row: r, col: c, image: predict_gray(model, coefficients_to_tensor(&sub))? });
                }
            }
        }
        InputKind::Pixels => {
            let img = imageio::to_gray(&decode_image(stream)?);
            (width, height) = (img.width(), img.height());
            let (padded, _) = pad_image(&img, border, tile);
            (rows, cols) = (padded.height() / tile, padded.width() / tile);
            for t in tile_image(&padded, tile)? {
                probs.push(Tile { row: t.row, col: t.col, image: predict_gray(model, pixels_to_tensor(&t.image)?)? });
            }
        }
    }
    let full = untile(&probs, rows, cols, tile)?;
    let doc = full.crop(border, border, width, height)?;
    Ok(threshold_binarize(&doc, 127))
}

fn predict_gray(model: &Model, input: cdbin_autodiff::Tensor<f32>) -> Result<PixelImage> {
    let p = model.predict(&input)?;
    probabilities_to_gray(p.data(), p.shape()[2], p.shape()[1])
}
