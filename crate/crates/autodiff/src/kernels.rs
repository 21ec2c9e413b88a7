//! Array kernels shared by the tape ops.

use crate::real::Real;

/// Output extent of a strided window: floor((n + 2p - k) / s) + 1, or `None` if the window does not fit.
pub fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Transposed-convolution extent: (n - 1) s - 2p + k, or `None` if non-positive.
pub fn conv_transpose_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if n == 0 || stride == 0 {
        return None;
    }
    let full = (n - 1) * stride + k;
    (full > 2 * pad).then(|| full - 2 * pad)
}

#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Samples per GEMM chunk, keeping an unfolded buffer near `1 << 17` elements.
pub fn chunk_len(per_sample: usize, n: usize) -> usize {
    ((1usize << 17) / per_sample.max(1)).clamp(1, n.max(1))
}

/// Unfolds one `C x H x W` image into a `(C kh kw) x (Ho Wo)` matrix.
pub fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    im2col_at(x, g, cols, g.cols(), 0);
}

/// [`im2col`] into a wider matrix: row `r` starts at `cols[r * ld + off]`.
pub fn im2col_at<T: Real>(x: &[T], g: &Geometry, cols: &mut [T], ld: usize, off: usize) {
    let plane = g.cols();
    if g.is_pointwise() {
        for c in 0..g.channels {
            cols[c * ld + off..c * ld + off + plane].copy_from_slice(&x[c * plane..(c + 1) * plane]);
        }
        return;
    }
    for c in 0..g.channels {
        let src = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let dst = &mut cols[row * ld + off..row * ld + off + plane];
                let (lo, hi) = valid_span(g.out_w, g.width, g.stride, j, g.pad);
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize || lo >= hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let srow = &src[iy as usize * g.width..(iy as usize + 1) * g.width];
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let first = lo * g.stride + j - g.pad;
                    if g.stride == 1 {
                        line[lo..hi].copy_from_slice(&srow[first..first + hi - lo]);
                    } else {
                        for (v, &s) in line[lo..hi].iter_mut().zip(srow[first..].iter().step_by(g.stride)) {
                            *v = s;
                        }
                    }
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose input column `ox * stride + j - pad` lies inside `0..width`.
fn valid_span(out_w: usize, width: usize, stride: usize, j: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j).div_ceil(stride);
    let hi = if width + pad > j { (width + pad - j).div_ceil(stride).min(out_w) } else { 0 };
    (lo.min(hi), hi)
}

/// Adjoint of [`im2col`]: folds columns back, accumulating into `x`.
pub fn col2im<T: Real>(cols: &[T], g: &Geometry, x: &mut [T]) {
    col2im_at(cols, g, x, g.cols(), 0);
}

/// Adjoint of [`im2col_at`].
pub fn col2im_at<T: Real>(cols: &[T], g: &Geometry, x: &mut [T], ld: usize, off: usize) {
    let plane = g.cols();
    if g.is_pointwise() {
        for c in 0..g.channels {
            let src = &cols[c * ld + off..c * ld + off + plane];
            x[c * plane..(c + 1) * plane].iter_mut().zip(src).for_each(|(a, &b)| *a += b);
        }
        return;
    }
    for c in 0..g.channels {
        let dst = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = (c * g.kh + i) * g.kw + j;
                let src = &cols[row * ld + off..row * ld + off + plane];
                let (lo, hi) = valid_span(g.out_w, g.width, g.stride, j, g.pad);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + j - g.pad;
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    if g.stride == 1 {
                        drow[first..first + hi - lo].iter_mut().zip(line).for_each(|(d, &v)| *d += v);
                    } else {
                        for (d, &v) in drow[first..].iter_mut().step_by(g.stride).zip(line) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

/// `(S, C, P)` sample-major data to a `C x (S P)` matrix.
pub fn gather_channels<T: Real>(src: &[T], samples: usize, channels: usize, plane: usize, dst: &mut [T]) {
    let ld = samples * plane;
    for s in 0..samples {
        for c in 0..channels {
            let from = (s * channels + c) * plane;
            dst[c * ld + s * plane..c * ld + (s + 1) * plane].copy_from_slice(&src[from..from + plane]);
        }
    }
}

/// Inverse of [`gather_channels`].
pub fn scatter_channels<T: Real>(src: &[T], samples: usize, channels: usize, plane: usize, dst: &mut [T]) {
    let ld = samples * plane;
    for s in 0..samples {
        for c in 0..channels {
            let to = (s * channels + c) * plane;
            dst[to..to + plane].copy_from_slice(&src[c * ld + s * plane..c * ld + (s + 1) * plane]);
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extents() {
        assert_eq!(conv_out(32, 3, 2, 1), Some(16));
        assert_eq!(conv_out(2, 3, 1, 0), None);
        assert_eq!(conv_transpose_out(16, 2, 2, 0), Some(32));
        assert_eq!(conv_transpose_out(32, 8, 8, 0), Some(256));
    }

    #[test]
    fn im2col_matches_direct_indexing() {
        for (h, w, k, stride, pad) in [(5, 7, 3, 1, 1), (6, 6, 3, 2, 1), (4, 9, 2, 2, 0), (3, 3, 3, 1, 2), (8, 5, 1, 3, 0), (2, 2, 3, 2, 2)] {
            let Some(oh) = conv_out(h, k, stride, pad) else { continue };
            let ow = conv_out(w, k, stride, pad).unwrap();
            let g = Geometry { channels: 2, height: h, width: w, kh: k, kw: k, stride, pad, out_h: oh, out_w: ow };
            let x: Vec<f64> = (0..2 * h * w).map(|v| v as f64 + 1.0).collect();
            let mut cols = vec![-1.0; g.rows() * g.cols()];
            im2col(&x, &g, &mut cols);
            for c in 0..2 {
                for i in 0..k {
                    for j in 0..k {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let (iy, ix) = ((oy * stride + i) as isize - pad as isize, (ox * stride + j) as isize - pad as isize);
                                let inside = iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize;
                                let want = if inside { x[c * h * w + iy as usize * w + ix as usize] } else { 0.0 };
                                let row = (c * k + i) * k + j;
                                assert_eq!(cols[row * oh * ow + oy * ow + ox], want, "{h}x{w} k{k} s{stride} p{pad}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn valid_spans() {
        assert_eq!(valid_span(5, 5, 1, 0, 1), (1, 5));
        assert_eq!(valid_span(5, 5, 1, 2, 1), (0, 4));
        assert_eq!(valid_span(3, 5, 2, 0, 1), (1, 3));
        assert_eq!(valid_span(3, 5, 2, 2, 1), (0, 2));
        assert_eq!(valid_span(2, 1, 1, 3, 0), (0, 0));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Geometry { channels: 2, height: 5, width: 4, kh: 3, kw: 2, stride: 2, pad: 1, out_h: 3, out_w: 3 };
        let x: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..g.rows() * g.cols()).map(|i| ((i * 5) % 13) as f64 * 0.5).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!(sigmoid(-30.0f32) > 0.0);
    }
}
