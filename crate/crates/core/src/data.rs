//! Padding, tiling, tile compression, manifests and document-level splits.
//!
//! On-disk layout under a dataset root:
//!
//! ```text
//! manifest.json
//! <split>/<doc-id>/<row>_<col>.jpg   baseline JFIF tile
//! <split>/<doc-id>/<row>_<col>.gt    binary PGM ground-truth tile, values 0/255
//! ```

use crate::error::{Error, IoContext, Result};
use crate::imageio;
use cdbin_jpeg::{encode_image, JpegStream, PixelImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_PAD: usize = 128;
pub const DEFAULT_TILE: usize = 256;
pub const GT_THRESHOLD: u8 = 127;

/// Offsets needed to undo [`pad_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub border: usize,
    /// Extra black columns on the right after the border.
    pub right: usize,
    /// Extra black rows at the bottom after the border.
    pub bottom: usize,
}

pub fn padded_dims(width: usize, height: usize, border: usize, tile: usize) -> (usize, usize) {
    let round = |n: usize| (n + 2 * border).div_ceil(tile) * tile;
    (round(width), round(height))
}

/// Adds a black border of `border` pixels, then black rows/columns on the bottom/right
/// up to the next multiple of `tile`.
pub fn pad_image(img: &PixelImage, border: usize, tile: usize) -> (PixelImage, Padding) {
    let (w, h, nc) = (img.width(), img.height(), img.components());
    let (pw, ph) = padded_dims(w, h, border, tile);
    let mut samples = vec![0u8; pw * ph * nc];
    for y in 0..h {
        let src = &img.samples()[y * w * nc..(y + 1) * w * nc];
        let start = ((y + border) * pw + border) * nc;
        samples[start..start + w * nc].copy_from_slice(src);
    }
    let pad = Padding { border, right: pw - w - 2 * border, bottom: ph - h - 2 * border };
    (PixelImage::new(pw, ph, nc, samples).expect("sized"), pad)
}

/// Removes the padding added by [`pad_image`].
pub fn unpad_image(img: &PixelImage, pad: Padding) -> Result<PixelImage> {
    let w = img.width().checked_sub(2 * pad.border + pad.right);
    let h = img.height().checked_sub(2 * pad.border + pad.bottom);
    match (w, h) {
        (Some(w), Some(h)) => Ok(img.crop(pad.border, pad.border, w, h)?),
        _ => Err(Error::Shape(format!("{}x{} is smaller than its padding", img.width(), img.height()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub image: PixelImage,
}

/// Row-major non-overlapping `tile x tile` tiles.
pub fn tile_image(img: &PixelImage, tile: usize) -> Result<Vec<Tile>> {
    if tile == 0 || !img.width().is_multiple_of(tile) || !img.height().is_multiple_of(tile) {
        return Err(Error::Shape(format!("{}x{} is not a multiple of {tile}", img.width(), img.height())));
    }
    let mut out = Vec::new();
    for row in 0..img.height() / tile {
        for col in 0..img.width() / tile {
            out.push(Tile { row, col, image: img.crop(col * tile, row * tile, tile, tile)? });
        }
    }
    Ok(out)
}

/// Inverse of [`tile_image`] for a complete, row-major-indexed tile set.
pub fn untile(tiles: &[Tile], rows: usize, cols: usize, tile: usize) -> Result<PixelImage> {
    let nc = tiles.first().map_or(1, |t| t.image.components());
    let (w, h) = (cols * tile, rows * tile);
    let mut samples = vec![0u8; w * h * nc];
    let mut seen = vec![false; rows * cols];
    for t in tiles {
        if t.row >= rows || t.col >= cols || t.image.width() != tile || t.image.height() != tile {
            return Err(Error::Shape(format!("tile ({}, {}) does not fit a {rows}x{cols} grid", t.row, t.col)));
        }
        seen[t.row * cols + t.col] = true;
        for y in 0..tile {
            let src = &t.image.samples()[y * tile * nc..(y + 1) * tile * nc];
            let start = ((t.row * tile + y) * w + t.col * tile) * nc;
            samples[start..start + tile * nc].copy_from_slice(src);
        }
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(Error::MissingTileCoord { doc: String::new(), row: i / cols, col: i % cols });
    }
    Ok(PixelImage::new(w, h, nc, samples)?)
}

/// Maps values above 127 to 255 and the rest to 0.
pub fn binarize_gt(img: &PixelImage) -> PixelImage {
    let gray = imageio::to_gray(img);
    let samples = gray.samples().iter().map(|&v| if v > GT_THRESHOLD { 255 } else { 0 }).collect();
    PixelImage::gray(gray.width(), gray.height(), samples).expect("sized")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePair {
    pub doc_id: String,
    pub row: usize,
    pub col: usize,
    pub stream: JpegStream,
    /// Binary map, values 0 or 255.
    pub ground_truth: PixelImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOptions {
    pub border: usize,
    pub tile: usize,
    pub quality: u32,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions { border: DEFAULT_PAD, tile: DEFAULT_TILE, quality: 50 }
    }
}

/// Pads and tiles a grayscale document and its ground truth, JPEG-encoding the document tiles.
pub fn build_pairs(doc_id: &str, doc: &PixelImage, gt: &PixelImage, opts: &PairOptions) -> Result<Vec<TilePair>> {
    if (doc.width(), doc.height()) != (gt.width(), gt.height()) {
        return Err(Error::DimensionMismatch { doc: (doc.width(), doc.height()), gt: (gt.width(), gt.height()) });
    }
    let (doc_padded, _) = pad_image(&imageio::to_gray(doc), opts.border, opts.tile);
    let (gt_padded, _) = pad_image(&binarize_gt(gt), opts.border, opts.tile);
    let docs = tile_image(&doc_padded, opts.tile)?;
    let gts = tile_image(&gt_padded, opts.tile)?;
    docs.into_iter()
        .zip(gts)
        .map(|(d, g)| {
            Ok(TilePair {
                doc_id: doc_id.to_string(),
                row: d.row,
                col: d.col,
                stream: encode_image(&d.image, opts.quality)?,
                ground_truth: g.image,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub source: PathBuf,
    pub ground_truth: PathBuf,
    pub width: usize,
    pub height: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub split: Split,
}

impl DocumentRecord {
    pub fn padding(&self, border: usize) -> Padding {
        Padding {
            border,
            right: self.padded_width - self.width - 2 * border,
            bottom: self.padded_height - self.height - 2 * border,
        }
    }

    pub fn tile_grid(&self, tile: usize) -> (usize, usize) {
        (self.padded_height / tile, self.padded_width / tile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub doc_id: String,
    pub row: usize,
    pub col: usize,
    /// Relative to the manifest directory.
    pub jpeg: PathBuf,
    pub gt: PathBuf,
    pub jpeg_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub quality: u32,
    pub tile_size: usize,
    pub border: usize,
    pub split_seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub documents: Vec<DocumentRecord>,
    pub tiles: Vec<TileEntry>,
}

impl DatasetManifest {
    pub fn new(quality: u32, tile_size: usize, border: usize) -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            quality,
            tile_size,
            border,
            split_seed: None,
            test_fraction: None,
            documents: Vec::new(),
            tiles: Vec::new(),
        }
    }

    pub fn document(&self, id: &str) -> Option<&DocumentRecord> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn tiles_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a TileEntry> + 'a {
        self.tiles.iter().filter(move |t| t.doc_id == id)
    }

    /// Tiles whose parent document has the given split tag, in manifest order.
    pub fn tiles_in(&self, split: Split) -> Vec<&TileEntry> {
        self.tiles
            .iter()
            .filter(|t| self.document(&t.doc_id).is_some_and(|d| d.split == split))
            .collect()
    }
}

pub fn tile_relpath(split: Split, doc_id: &str, row: usize, col: usize, ext: &str) -> PathBuf {
    PathBuf::from(split.as_str()).join(doc_id).join(format!("{row}_{col}.{ext}"))
}

/// Assigns whole documents to train/test. The test count is round(fraction * n),
/// kept within [1, n - 1] when n >= 2 so both splits are non-empty.
pub fn split_train_test(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Fraction(fraction));
    }
    let n = manifest.documents.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut test_count = (fraction * n as f64).round() as usize;
    if n >= 2 {
        test_count = test_count.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    for d in out.documents.iter_mut() {
        d.split = Split::Train;
    }
    for &i in &order[..test_count] {
        out.documents[i].split = Split::Test;
    }
    for t in out.tiles.iter_mut() {
        let split = out.documents.iter().find(|d| d.id == t.doc_id).map_or(Split::Train, |d| d.split);
        t.jpeg = tile_relpath(split, &t.doc_id, t.row, t.col, "jpg");
        t.gt = tile_relpath(split, &t.doc_id, t.row, t.col, "gt");
    }
    out.split_seed = Some(seed);
    out.test_fraction = Some(fraction);
    Ok(out)
}

pub fn write_manifest(m: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    std::fs::write(path, text + "\n").at(path)
}

/// Loads a manifest and checks its version and that every tile file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).at(path)?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::ManifestVersion { found: m.version, expected: MANIFEST_VERSION });
    }
    let root = path.parent().unwrap_or(Path::new("."));
    for t in &m.tiles {
        for rel in [&t.jpeg, &t.gt] {
            if !root.join(rel).is_file() {
                return Err(Error::MissingTile(root.join(rel)));
            }
        }
        if m.document(&t.doc_id).is_none() {
            return Err(Error::Config(format!("tile references unknown document {}", t.doc_id)));
        }
    }
    Ok(m)
}

/// A source document with its ground truth, ready for [`prepare_dataset`].
#[derive(Debug, Clone)]
pub struct SourcePair {
    pub id: String,
    pub source: PathBuf,
    pub ground_truth: PathBuf,
    pub image: PixelImage,
    pub truth: PixelImage,
}

/// Pairs `<docs>/<name>` with `<gt>/<name>` (any extension on the ground-truth side), sorted by name.
pub fn discover_pairs(docs: &Path, gt: &Path) -> Result<Vec<SourcePair>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(docs)
        .at(docs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut out = Vec::new();
    for src in names {
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let exact = gt.join(src.file_name().unwrap());
        let gt_path = if exact.is_file() {
            exact
        } else {
            let mut found = None;
            for e in std::fs::read_dir(gt).at(gt)?.flatten() {
                if e.path().file_stem().and_then(|s| s.to_str()) == Some(stem.as_str()) {
                    found = Some(e.path());
                    break;
                }
            }
            found.ok_or_else(|| Error::Config(format!("no ground truth for {}", src.display())))?
        };
        out.push(SourcePair {
            id: stem,
            image: imageio::read_gray(&src)?,
            truth: imageio::read_gray(&gt_path)?,
            source: src,
            ground_truth: gt_path,
        });
    }
    Ok(out)
}

/// Builds tiles for every pair, splits by document, writes tile files and the manifest.
pub fn prepare_dataset(
    pairs: &[SourcePair],
    out_dir: &Path,
    opts: &PairOptions,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::new(opts.quality, opts.tile, opts.border);
    let mut built = Vec::new();
    for p in pairs {
        let tiles = build_pairs(&p.id, &p.image, &p.truth, opts)?;
        let (pw, ph) = padded_dims(p.image.width(), p.image.height(), opts.border, opts.tile);
        manifest.documents.push(DocumentRecord {
            id: p.id.clone(),
            source: p.source.clone(),
            ground_truth: p.ground_truth.clone(),
            width: p.image.width(),
            height: p.image.height(),
            padded_width: pw,
            padded_height: ph,
            split: Split::Train,
        });
        for t in &tiles {
            manifest.tiles.push(TileEntry {
                doc_id: t.doc_id.clone(),
                row: t.row,
                col: t.col,
                jpeg: PathBuf::new(),
                gt: PathBuf::new(),
                jpeg_bytes: t.stream.len() as u64,
            });
        }
        built.extend(tiles);
    }
    let manifest = split_train_test(&manifest, test_fraction, seed)?;
    for (entry, pair) in manifest.tiles.iter().zip(&built) {
        let jpg = out_dir.join(&entry.jpeg);
        std::fs::create_dir_all(jpg.parent().unwrap()).at(jpg.parent().unwrap())?;
        std::fs::write(&jpg, pair.stream.as_bytes()).at(&jpg)?;
        imageio::write_pnm(&out_dir.join(&entry.gt), &pair.ground_truth)?;
    }
    write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// A tile loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedTile {
    pub entry: TileEntry,
    pub stream: Vec<u8>,
    pub ground_truth: PixelImage,
}

pub fn load_tile(root: &Path, entry: &TileEntry) -> Result<LoadedTile> {
    let jpg = root.join(&entry.jpeg);
    let stream = std::fs::read(&jpg).at(&jpg)?;
    let ground_truth = imageio::read_gray(&root.join(&entry.gt))?;
    if ground_truth.samples().iter().any(|&v| v != 0 && v != 255) {
        return Err(Error::NotBinary);
    }
    Ok(LoadedTile { entry: entry.clone(), stream, ground_truth })
}
