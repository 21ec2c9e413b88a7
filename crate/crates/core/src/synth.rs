//! Synthetic degraded text documents with exact ground truth.
//!
//! Pages have an uneven paper tone, stains, faint bleed-through from the
//! reverse side and lightly blurred ink strokes. Ground truth is the ink mask:
//! 0 for text, 255 for background.

use cdbin_jpeg::PixelImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Blank border around the text block, in pixels.
    pub margin: usize,
    pub stains: usize,
    pub bleed_through: bool,
    /// Glyph height range in pixels; stroke width scales with it.
    pub glyph_height: (f64, f64),
}

impl SynthConfig {
    pub fn page(width: usize, height: usize) -> Self {
        SynthConfig { width, height, margin: 16, stains: 3, bleed_through: true, glyph_height: (18.0, 26.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDocument {
    pub image: PixelImage,
    pub ground_truth: PixelImage,
}

struct Canvas {
    w: usize,
    h: usize,
    mask: Vec<bool>,
}

impl Canvas {
    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        for y in y0.max(0)..y1.min(self.h as i64) {
            for x in x0.max(0)..x1.min(self.w as i64) {
                self.mask[y as usize * self.w + x as usize] = true;
            }
        }
    }

    fn line(&mut self, (xa, ya): (f64, f64), (xb, yb): (f64, f64), width: f64) {
        let steps = ((xb - xa).abs().max((yb - ya).abs()) * 2.0).ceil().max(1.0) as usize;
        let r = width / 2.0;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (cx, cy) = (xa + (xb - xa) * t, ya + (yb - ya) * t);
            self.rect((cx - r).round() as i64, (cy - r).round() as i64, (cx + r).round() as i64, (cy + r).round() as i64);
        }
    }

    /// One glyph made of 2-4 strokes inside a `gw x gh` cell.
    fn glyph<R: Rng>(&mut self, x: f64, y: f64, gw: f64, gh: f64, stroke: f64, rng: &mut R) {
        let strokes = rng.gen_range(2..=3);
        for _ in 0..strokes {
            match rng.gen_range(0..6) {
                0 => self.line((x, y), (x, y + gh), stroke),
                1 => self.line((x + gw, y), (x + gw, y + gh), stroke),
                2 => self.line((x, y), (x + gw, y), stroke),
                3 => self.line((x, y + gh / 2.0), (x + gw, y + gh / 2.0), stroke),
                4 => self.line((x, y + gh), (x + gw, y + gh), stroke),
                _ => self.line((x, y + gh), (x + gw, y), stroke),
            }
        }
    }
}

fn text_mask<R: Rng>(w: usize, h: usize, margin: usize, glyph: (f64, f64), rng: &mut R) -> Vec<bool> {
    let mut c = Canvas { w, h, mask: vec![false; w * h] };
    let glyph_h = rng.gen_range(glyph.0..glyph.1);
    let line_gap = glyph_h * rng.gen_range(2.0..2.6);
    let stroke = glyph_h * rng.gen_range(0.16..0.22);
    let mut y = margin as f64;
    while y + glyph_h < (h - margin.min(h)) as f64 {
        let mut x = margin as f64 + rng.gen_range(0.0..glyph_h);
        let right = (w - margin.min(w)) as f64;
        loop {
            let letters = rng.gen_range(2..7);
            let gw = glyph_h * rng.gen_range(0.45..0.7);
            let word_w = letters as f64 * (gw + stroke + 2.0);
            if x + word_w > right {
                break;
            }
            for i in 0..letters {
                c.glyph(x + i as f64 * (gw + stroke + 2.0), y, gw, glyph_h, stroke, rng);
            }
            x += word_w + glyph_h * rng.gen_range(0.8..1.6);
        }
        y += line_gap;
    }
    c.mask
}

/// Generates one page; identical seeds give identical pages.
pub fn synth_document(cfg: &SynthConfig, seed: u64) -> SynthDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width, cfg.height);
    let ink_mask = text_mask(w, h, cfg.margin, cfg.glyph_height, &mut rng);

    let paper = rng.gen_range(190.0..225.0);
    let (gx, gy) = (rng.gen_range(-12.0..12.0), rng.gen_range(-12.0..12.0));
    let stains: Vec<(f64, f64, f64, f64)> = (0..cfg.stains)
        .map(|_| {
            (
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(15.0..60.0),
                rng.gen_range(15.0..45.0),
            )
        })
        .collect();
    let mut page: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut v = paper + gx * (x / w as f64 - 0.5) + gy * (y / h as f64 - 0.5);
            for &(sx, sy, r, depth) in &stains {
                let d2 = ((x - sx).powi(2) + (y - sy).powi(2)) / (r * r);
                v -= depth * (-d2).exp();
            }
            v
        })
        .collect();

    if cfg.bleed_through {
        // mirrored text from the reverse side, faint and not part of the ground truth
        let back = text_mask(w, h, cfg.margin, cfg.glyph_height, &mut rng);
        let fade = rng.gen_range(10.0..20.0);
        for y in 0..h {
            for x in 0..w {
                if back[y * w + (w - 1 - x)] {
                    page[y * w + x] -= fade;
                }
            }
        }
    }

    let ink = rng.gen_range(25.0..80.0);
    for (v, &m) in page.iter_mut().zip(&ink_mask) {
        if m {
            *v = ink + rng.gen_range(-4.0..4.0);
        }
    }
    // soften stroke edges like a scanner would
    let mut blurred = page.clone();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let cross = page[i - 1] + page[i + 1] + page[i - w] + page[i + w];
            blurred[i] = 0.6 * page[i] + 0.1 * cross;
        }
    }
    let samples = blurred.iter().map(|v| (v + rng.gen_range(-1.0..1.0)).round().clamp(0.0, 255.0) as u8).collect();
    let gt = ink_mask.iter().map(|&m| if m { 0 } else { 255 }).collect();
    SynthDocument {
        image: PixelImage::gray(w, h, samples).expect("sized"),
        ground_truth: PixelImage::gray(w, h, gt).expect("sized"),
    }
}
