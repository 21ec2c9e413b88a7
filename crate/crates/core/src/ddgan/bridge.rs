//! Conversions between codec data and network tensors, and the fixed block-IDCT stage.

use crate::error::{Error, Result};
use cdbin_autodiff::{Real, Tape, Tensor, Var};
use cdbin_jpeg::{idct_8x8, CoefficientTensor, PixelImage, ZIGZAG};

/// Dequantized coefficients are divided by this before entering the generator.
pub const COEFF_SCALE: f64 = 1024.0;

/// Transposed-convolution kernel `(64, 1, 8, 8)`: channel `z` holds the IDCT basis image
/// of the coefficient at zig-zag position `z`.
pub fn block_idct_kernel<T: Real>() -> Tensor<T> {
    let mut data = Vec::with_capacity(64 * 64);
    for &natural in &ZIGZAG {
        let mut unit = [0.0; 64];
        unit[natural] = 1.0;
        data.extend(idct_8x8(&unit).iter().map(|&v| T::lit(v)));
    }
    Tensor::new(&[64, 1, 8, 8], data).expect("sized")
}

/// `(N, 64, bh, bw)` coefficient planes to `(N, 1, 8 bh, 8 bw)` pixel-domain values.
pub fn idct_stage<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let k = tape.constant(block_idct_kernel());
    Ok(tape.conv_transpose2d(x, k, None, 8, 0)?)
}

/// `(64, bh, bw)` tensor of dequantized coefficients over [`COEFF_SCALE`], channels in zig-zag order.
pub fn coefficients_to_tensor<T: Real>(t: &CoefficientTensor) -> Tensor<T> {
    let (bh, bw) = (t.blocks_high(), t.blocks_wide());
    let mut data = vec![T::zero(); 64 * bh * bw];
    for r in 0..bh {
        for c in 0..bw {
            let d = t.dequantized(r, c);
            for (z, &natural) in ZIGZAG.iter().enumerate() {
                data[z * bh * bw + r * bw + c] = T::lit(d[natural] / COEFF_SCALE);
            }
        }
    }
    Tensor::new(&[64, bh, bw], data).expect("sized")
}

/// `(1, h, w)` tensor of a grayscale image scaled to [0, 1].
pub fn pixels_to_tensor<T: Real>(img: &PixelImage) -> Result<Tensor<T>> {
    if img.components() != 1 {
        return Err(Error::Shape(format!("expected one component, got {}", img.components())));
    }
    let data = img.samples().iter().map(|&v| T::lit(v as f64 / 255.0)).collect();
    Ok(Tensor::new(&[1, img.height(), img.width()], data)?)
}

/// Binary ground truth (0/255) as a `(1, h, w)` target with values 0 and 1.
pub fn target_from_gt<T: Real>(gt: &PixelImage) -> Result<Tensor<T>> {
    if gt.components() != 1 || gt.samples().iter().any(|&v| v != 0 && v != 255) {
        return Err(Error::NotBinary);
    }
    pixels_to_tensor(gt)
}

/// Runs only the fixed IDCT stage on raw tile coefficients and maps the result back to pixels.
pub fn stage_pixels(t: &CoefficientTensor) -> Result<PixelImage> {
    let x = coefficients_to_tensor::<f64>(t);
    let (bh, bw) = (t.blocks_high(), t.blocks_wide());
    let x = x.reshape(&[1, 64, bh, bw])?;
    let store = cdbin_autodiff::ParamStore::<f64>::new();
    let mut tape = Tape::new(&store);
    let v = tape.constant(x);
    let out = idct_stage(&mut tape, v)?;
    let samples = tape
        .value(out)
        .data()
        .iter()
        .map(|&v| (v * COEFF_SCALE + 128.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(PixelImage::gray(bw * 8, bh * 8, samples)?)
}

/// Probabilities in [0, 1] to 8-bit intensities.
pub fn probabilities_to_gray<T: Real>(p: &[T], width: usize, height: usize) -> Result<PixelImage> {
    let samples = p.iter().map(|&v| (v.to_f64().unwrap() * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    Ok(PixelImage::gray(width, height, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdbin_jpeg::{encode_image, partial_decode, decode_image};

    #[test]
    fn dc_channel_is_flat() {
        let k = block_idct_kernel::<f64>();
        assert!(k.data()[..64].iter().all(|&v| (v - 0.125).abs() < 1e-12));
    }

    #[test]
    fn stage_matches_decoder_on_a_gradient() {
        let img = PixelImage::gray(64, 48, (0..64 * 48).map(|i| ((i % 64) * 3 + (i / 64) * 2) as u8).collect()).unwrap();
        let s = encode_image(&img, 50).unwrap();
        let ci = partial_decode(s.as_bytes()).unwrap();
        let ours = stage_pixels(&ci.components[0]).unwrap();
        let theirs = decode_image(s.as_bytes()).unwrap();
        for (a, b) in ours.samples().iter().zip(theirs.samples()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn channel_order_follows_zigzag() {
        let mut blocks = vec![[0i16; 64]; 1];
        blocks[0][ZIGZAG[5]] = 3;
        let q = cdbin_jpeg::QuantTable::standard(cdbin_jpeg::TableKind::Luminance);
        let t = CoefficientTensor::new(0, 1, 1, blocks, q.clone()).unwrap();
        let x = coefficients_to_tensor::<f64>(&t);
        let expect = 3.0 * q.natural()[ZIGZAG[5]] as f64 / COEFF_SCALE;
        assert_eq!(x.data()[5], expect);
        assert_eq!(x.data().iter().filter(|&&v| v != 0.0).count(), 1);
    }
}
