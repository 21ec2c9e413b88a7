//! Separable double-precision 8x8 DCT-II / DCT-III with JPEG normalization.
//!
//! `F(u,v) = 1/4 C(u) C(v) sum_x sum_y f(x,y) cos((2x+1)u pi/16) cos((2y+1)v pi/16)`
//! with `C(0) = 1/sqrt(2)` and `C(k) = 1` otherwise. The transform is
//! orthonormal, so the inverse is the transpose.

use crate::block::Block8;
use std::sync::OnceLock;

/// `basis()[u][x] = C(u)/2 * cos((2x+1) u pi / 16)`.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (u, row) in t.iter_mut().enumerate() {
            let c = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * c * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        t
    })
}

pub fn fdct_8x8(block: &Block8) -> Block8 {
    let t = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[y][u] = sum_x t[u][x] f[y][x]
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += t[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    // columns: out[v][u] = sum_y t[v][y] tmp[y][u]
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += t[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

pub fn idct_8x8(coeffs: &Block8) -> Block8 {
    let t = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += t[u][x] * coeffs[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += t[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Direct quadruple-loop DCT-II, independent of the separable path.
    fn brute_fdct(f: &Block8) -> Block8 {
        let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        let mut out = [0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += f[y * 8 + x]
                            * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                            * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
                    }
                }
                out[v * 8 + u] = 0.25 * c(u) * c(v) * s;
            }
        }
        out
    }

    #[test]
    fn zero_block() {
        assert_eq!(fdct_8x8(&[0.0; 64]), [0.0; 64]);
        assert_eq!(idct_8x8(&[0.0; 64]), [0.0; 64]);
    }

    #[test]
    fn constant_block_dc() {
        let out = fdct_8x8(&[127.0; 64]);
        let oracle = brute_fdct(&[127.0; 64]);
        assert!((oracle[0] - 1016.0).abs() < 1e-9);
        assert!((out[0] - 1016.0).abs() < 1e-9);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dc_only_inverse() {
        let mut c = [0.0; 64];
        c[0] = 1016.0;
        assert!(idct_8x8(&c).iter().all(|v| (v - 127.0).abs() < 1e-9));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b: Block8 = std::array::from_fn(|_| rng.gen_range(-128.0..128.0));
            let (fast, slow) = (fdct_8x8(&b), brute_fdct(&b));
            for i in 0..64 {
                assert!((fast[i] - slow[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn basis_functions() {
        // A single unit coefficient reconstructs 1/4 C(u)C(v) cos(..)cos(..).
        for &(u, v) in &[(0usize, 0usize), (1, 0), (0, 3), (5, 7), (7, 7)] {
            let mut c = [0.0; 64];
            c[v * 8 + u] = 1.0;
            let px = idct_8x8(&c);
            let cu = if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            let cv = if v == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
            for y in 0..8 {
                for x in 0..8 {
                    let expect = 0.25
                        * cu
                        * cv
                        * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                        * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
                    assert!((px[y * 8 + x] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let b: Block8 = std::array::from_fn(|_| rng.gen_range(-128.0..128.0));
            let back = idct_8x8(&fdct_8x8(&b));
            let err = b.iter().zip(&back).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "max error {err}");
        }
    }
}
