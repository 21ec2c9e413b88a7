//! Metrics, whole-document evaluation over a manifest split, and pipeline benchmarks.

use crate::data::{load_tile, untile, DatasetManifest, DocumentRecord, LoadedTile, Split, Tile};
use crate::ddgan::train::{epoch_order, Model, Sample};
use crate::ddgan::{InputKind, TrainConfig};
use crate::error::{Error, IoContext, Result};
use cdbin_jpeg::{decode_image, encode_image_padded, PixelImage};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::path::Path;
use std::time::Instant;

fn check_same(a: &PixelImage, b: &PixelImage) -> Result<()> {
    if (a.width(), a.height(), a.components()) != (b.width(), b.height(), b.components()) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.components(),
            b.width(),
            b.height(),
            b.components()
        )));
    }
    Ok(())
}

/// Mean squared difference over all samples.
pub fn mse(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    check_same(a, b)?;
    let sum: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.samples().len().max(1) as f64)
}

/// `10 log10(255^2 / mse)` in decibels; infinite for identical images.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Fraction of equal samples.
pub fn pixel_accuracy(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    check_same(a, b)?;
    let same = a.samples().iter().zip(b.samples()).filter(|(x, y)| x == y).count();
    Ok(same as f64 / a.samples().len().max(1) as f64)
}

/// Values strictly above `t` become 255, the rest 0.
pub fn threshold_binarize(img: &PixelImage, t: u8) -> PixelImage {
    let samples = img.samples().iter().map(|&v| if v > t { 255 } else { 0 }).collect();
    PixelImage::new(img.width(), img.height(), img.components(), samples).expect("sized")
}

/// Serializes PSNR as a number, or the string `"inf"` when infinite.
pub mod psnr_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad psnr {s:?}"))),
        }
    }
}

/// Reassembles a document's padded tile grid and crops away the padding.
pub fn reassemble_tiles(tiles: &[Tile], record: &DocumentRecord, tile: usize, border: usize) -> Result<PixelImage> {
    let (rows, cols) = record.tile_grid(tile);
    let full = untile(tiles, rows, cols, tile).map_err(|e| match e {
        Error::MissingTileCoord { row, col, .. } => Error::MissingTileCoord { doc: record.id.clone(), row, col },
        e => e,
    })?;
    Ok(full.crop(border, border, record.width, record.height)?)
}

/// Anything that maps a stored tile to a binary `{0, 255}` tile.
pub trait Binarizer {
    fn name(&self) -> &str;
    fn binarize(&self, tile: &LoadedTile) -> Result<PixelImage>;
    /// Tile size the binarizer was built for, if it has one.
    fn tile_size(&self) -> Option<usize> {
        None
    }
}

/// Emits the ground truth.
pub struct OracleBinarizer;

impl Binarizer for OracleBinarizer {
    fn name(&self) -> &str {
        "oracle"
    }
    fn binarize(&self, tile: &LoadedTile) -> Result<PixelImage> {
        Ok(tile.ground_truth.clone())
    }
}

/// Emits all-white tiles.
pub struct BackgroundBinarizer;

impl Binarizer for BackgroundBinarizer {
    fn name(&self) -> &str {
        "background"
    }
    fn binarize(&self, tile: &LoadedTile) -> Result<PixelImage> {
        let g = &tile.ground_truth;
        Ok(PixelImage::filled(g.width(), g.height(), 1, 255)?)
    }
}

/// Decodes the tile and thresholds it at 127.
pub struct IdentityBinarizer;

impl Binarizer for IdentityBinarizer {
    fn name(&self) -> &str {
        "identity"
    }
    fn binarize(&self, tile: &LoadedTile) -> Result<PixelImage> {
        Ok(threshold_binarize(&crate::imageio::to_gray(&decode_image(&tile.stream)?), 127))
    }
}

/// Trained generator followed by the 127 threshold.
pub struct ModelBinarizer<'a>(pub &'a Model);

impl Binarizer for ModelBinarizer<'_> {
    fn name(&self) -> &str {
        "model"
    }
    fn binarize(&self, tile: &LoadedTile) -> Result<PixelImage> {
        crate::ddgan::infer::binarize_tile(self.0, &tile.stream)
    }
    fn tile_size(&self) -> Option<usize> {
        Some(self.0.config.tile_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Output and ground truth each JPEG-encoded at the corpus quality, then decoded and compared.
    Compressed,
    /// Output compared with the ground truth directly.
    Decompressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub mode: EvalMode,
    pub mse: f64,
    #[serde(with = "psnr_serde")]
    pub psnr: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub binarizer: String,
    pub images: Vec<ImageMetrics>,
    #[serde(with = "psnr_serde")]
    pub mean_psnr_compressed: f64,
    #[serde(with = "psnr_serde")]
    pub mean_psnr_decompressed: f64,
    pub mean_accuracy: f64,
}

impl MetricReport {
    /// One JSON object per image and mode, then a summary line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.images {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        #[derive(Serialize)]
        struct Summary<'a> {
            binarizer: &'a str,
            #[serde(with = "psnr_serde")]
            mean_psnr_compressed: f64,
            #[serde(with = "psnr_serde")]
            mean_psnr_decompressed: f64,
            mean_accuracy: f64,
        }
        out.push_str(&serde_json::to_string(&Summary {
            binarizer: &self.binarizer,
            mean_psnr_compressed: self.mean_psnr_compressed,
            mean_psnr_decompressed: self.mean_psnr_decompressed,
            mean_accuracy: self.mean_accuracy,
        })?);
        out.push('\n');
        Ok(out)
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.2}") };
        let mut out = format!("{:<24} {:>12} {:>10} {:>10}\n", "document", "mode", "psnr_db", "accuracy");
        for m in &self.images {
            let mode = match m.mode {
                EvalMode::Compressed => "compressed",
                EvalMode::Decompressed => "decompressed",
            };
            out.push_str(&format!("{:<24} {:>12} {:>10} {:>10.4}\n", m.id, mode, fmt(m.psnr), m.accuracy));
        }
        out.push_str(&format!("{:<24} {:>12} {:>10}\n", "mean", "compressed", fmt(self.mean_psnr_compressed)));
        out.push_str(&format!(
            "{:<24} {:>12} {:>10} {:>10.4}\n",
            "mean", "decompressed", fmt(self.mean_psnr_decompressed), self.mean_accuracy
        ));
        out
    }
}

/// Binary output and ground truth for one document after reassembly.
pub fn binarize_record(
    manifest: &DatasetManifest,
    root: &Path,
    record: &DocumentRecord,
    binarizer: &dyn Binarizer,
) -> Result<(PixelImage, PixelImage)> {
    let (mut out, mut gt) = (Vec::new(), Vec::new());
    for entry in manifest.tiles_of(&record.id) {
        let t = load_tile(root, entry)?;
        out.push(Tile { row: entry.row, col: entry.col, image: binarizer.binarize(&t)? });
        gt.push(Tile { row: entry.row, col: entry.col, image: t.ground_truth });
    }
    let tile = manifest.tile_size;
    Ok((
        reassemble_tiles(&out, record, tile, manifest.border)?,
        reassemble_tiles(&gt, record, tile, manifest.border)?,
    ))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Binarizes every document of `split` tile by tile and scores it against its ground truth in both modes.
pub fn evaluate_corpus(manifest: &DatasetManifest, root: &Path, split: Split, binarizer: &dyn Binarizer) -> Result<MetricReport> {
    if let Some(t) = binarizer.tile_size().filter(|&t| t != manifest.tile_size) {
        return Err(Error::CheckpointMismatch(format!("model tile size {t}, manifest tile size {}", manifest.tile_size)));
    }
    let docs: Vec<&DocumentRecord> = manifest.documents.iter().filter(|d| d.split == split).collect();
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let q = manifest.quality;
    let mut images = Vec::new();
    for record in docs {
        let (out, gt) = binarize_record(manifest, root, record, binarizer)?;
        let out_c = decode_image(encode_image_padded(&out, q)?.as_bytes())?;
        let gt_c = decode_image(encode_image_padded(&gt, q)?.as_bytes())?;
        for (mode, a, b) in [(EvalMode::Compressed, &out_c, &gt_c), (EvalMode::Decompressed, &out, &gt)] {
            let m = mse(a, b)?;
            images.push(ImageMetrics {
                id: record.id.clone(),
                mode,
                mse: m,
                psnr: psnr_from_mse(m),
                accuracy: pixel_accuracy(a, b)?,
            });
        }
    }
    let of = |mode| images.iter().filter(move |m: &&ImageMetrics| m.mode == mode);
    Ok(MetricReport {
        binarizer: binarizer.name().to_string(),
        mean_psnr_compressed: mean(of(EvalMode::Compressed).map(|m| m.psnr)),
        mean_psnr_decompressed: mean(of(EvalMode::Decompressed).map(|m| m.psnr)),
        mean_accuracy: mean(of(EvalMode::Decompressed).map(|m| m.accuracy)),
        images,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub variant: InputKind,
    pub epochs: usize,
    pub tiles: usize,
    pub batch_size: usize,
    pub seconds_per_epoch: f64,
    /// Mean over batches of the stored JFIF bytes read.
    pub compressed_bytes_per_batch: f64,
    /// Mean over batches of the decoded 8-bit sample bytes.
    pub raw_bytes_per_batch: f64,
    pub images_per_second: f64,
    pub config_hash: String,
    /// Tile indices in processing order, all epochs concatenated.
    pub sample_order: Vec<usize>,
}

/// 64-bit FNV-1a, hex encoded.
pub fn config_hash(bytes: &[u8]) -> String {
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    format!("{h:016x}")
}

/// Trains a fresh model of the given input kind over the manifest's training tiles,
/// timing each epoch including tile reads and decoding.
pub fn benchmark(
    variant: InputKind,
    manifest: &DatasetManifest,
    root: &Path,
    cfg: &TrainConfig,
    tile_limit: Option<usize>,
) -> Result<BenchmarkReport> {
    let mut cfg = cfg.clone();
    cfg.model.input = variant;
    cfg.max_steps = None;
    cfg.validate()?;
    if cfg.model.tile_size != manifest.tile_size {
        return Err(Error::CheckpointMismatch(format!(
            "model tile size {}, manifest tile size {}",
            cfg.model.tile_size, manifest.tile_size
        )));
    }
    let mut entries = manifest.tiles_in(Split::Train);
    if let Some(n) = tile_limit {
        entries.truncate(n);
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = Model::for_training(&cfg)?;
    let (mut seconds, mut compressed, mut raw, mut batches) = (0.0, 0u64, 0u64, 0usize);
    let mut order = Vec::new();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        for batch in epoch_order(entries.len(), cfg.batch_size, cfg.seed, epoch) {
            let mut samples = Vec::with_capacity(batch.len());
            for &i in &batch {
                let e = entries[i];
                let jpg = root.join(&e.jpeg);
                let stream = std::fs::read(&jpg).at(&jpg)?;
                let gt = crate::imageio::read_gray(&root.join(&e.gt))?;
                compressed += stream.len() as u64;
                raw += (gt.width() * gt.height()) as u64;
                samples.push(Sample::from_stream(&stream, &gt, variant)?);
            }
            model.train_step(&samples, &cfg, epoch)?;
            batches += 1;
            order.extend(batch);
        }
        seconds += start.elapsed().as_secs_f64();
    }
    let hash_input = serde_json::to_vec(&(&cfg, entries.len()))?;
    Ok(BenchmarkReport {
        variant,
        epochs: cfg.epochs,
        tiles: entries.len(),
        batch_size: cfg.batch_size,
        seconds_per_epoch: seconds / cfg.epochs.max(1) as f64,
        compressed_bytes_per_batch: compressed as f64 / batches.max(1) as f64,
        raw_bytes_per_batch: raw as f64 / batches.max(1) as f64,
        images_per_second: (entries.len() * cfg.epochs) as f64 / seconds.max(1e-12),
        config_hash: config_hash(&hash_input),
        sample_order: order,
    })
}

/// Two whitespace-separated columns with a `#` header line.
pub fn plot_data(header: (&str, &str), rows: &[(f64, f64)]) -> String {
    let mut out = format!("# {} {}\n", header.0, header.1);
    for (x, y) in rows {
        out.push_str(&format!("{x} {y:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: u8) -> PixelImage {
        PixelImage::filled(w, h, 1, v).unwrap()
    }

    #[test]
    fn mse_and_psnr_examples() {
        let a = gray(256, 256, 0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &gray(256, 256, 255)).unwrap(), 65025.0);
        let mut b = a.clone();
        b.set(5, 7, 0, 255);
        assert!((mse(&a, &b).unwrap() - 65025.0 / 65536.0).abs() < 1e-12);
        assert!((mse(&a, &b).unwrap() - 0.99220).abs() < 1e-5);
        assert_eq!(psnr_from_mse(65025.0), 0.0);
        assert!((psnr_from_mse(1.0) - 48.13).abs() < 0.005);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(mse(&a, &gray(255, 256, 0)).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        assert!(threshold_binarize(&gray(4, 4, 127), 127).samples().iter().all(|&v| v == 0));
        assert!(threshold_binarize(&gray(4, 4, 128), 127).samples().iter().all(|&v| v == 255));
    }

    #[test]
    fn infinite_psnr_serializes_as_marker() {
        let m = ImageMetrics { id: "a".into(), mode: EvalMode::Compressed, mse: 0.0, psnr: f64::INFINITY, accuracy: 1.0 };
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"psnr\":\"inf\""));
        assert_eq!(serde_json::from_str::<ImageMetrics>(&s).unwrap(), m);
        let f = ImageMetrics { psnr: 31.5, ..m };
        assert_eq!(serde_json::from_str::<ImageMetrics>(&serde_json::to_string(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(config_hash(b""), "cbf29ce484222325");
        assert_eq!(config_hash(b"a"), "af63dc4c8601ec8c");
    }
}
