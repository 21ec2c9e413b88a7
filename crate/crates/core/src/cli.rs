//! Command-line front end. [`run`] parses arguments, merges an optional JSON
//! config file underneath them and returns the process exit code:
//! 0 on success, 1 on a usage error, 2 when the command itself fails.

use crate::data::{self, PairOptions, Split};
use crate::ddgan::{infer, train, InputKind, Model, ModelConfig, Sample, TrainConfig};
use crate::error::{Error, IoContext, Result};
use crate::eval::{self, Binarizer, MetricReport};
use crate::imageio;
use crate::synth::{synth_document, SynthConfig};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{Map, Value};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CDBIN_CONFIG";

/// File written into every output directory with the flags in effect.
pub const EFFECTIVE_CONFIG: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "cdbin", version, about = "Document binarization on JPEG coefficient streams")]
pub struct Cli {
    /// JSON file whose keys mirror the flags; flags given on the command line win
    #[arg(long, global = true, env = CONFIG_ENV, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (weight init, shuffling, splits, synthetic pages)
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on worker threads
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a PGM/PPM image as baseline JFIF
    Encode(EncodeArgs),
    /// Fully decode a JPEG file to PGM/PPM
    Decode(DecodeArgs),
    /// Entropy-decode a JPEG file and dump its quantized coefficients
    Coeffs(CoeffsArgs),
    /// Pad, tile, compress and split a document corpus
    Prepare(PrepareArgs),
    /// Train a model on the training tiles of a prepared corpus
    Train(TrainArgs),
    /// Binarize one document with a trained model
    Binarize(BinarizeArgs),
    /// Score a binarizer on a prepared corpus
    Eval(EvalArgs),
    /// Time compressed-input against pixel-input training
    Bench(BenchArgs),
    /// Generate synthetic degraded pages with exact ground truth
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Layer widths as published
    Full,
    /// Narrow layers for CPU-sized runs
    Desk,
}

impl Preset {
    fn model(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputArg {
    Compressed,
    Pixels,
}

impl From<InputArg> for InputKind {
    fn from(v: InputArg) -> Self {
        match v {
            InputArg::Compressed => InputKind::Compressed,
            InputArg::Pixels => InputKind::Pixels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(v: SplitArg) -> Self {
        match v {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizerArg {
    /// A trained checkpoint (needs --ckpt)
    Model,
    /// Returns the ground truth
    Oracle,
    /// Everything background
    Background,
    /// Decodes and thresholds at 127
    Identity,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EncodeArgs {
    /// Input PGM or PPM
    #[serde(skip)]
    pub input: PathBuf,
    /// Output JFIF file
    #[arg(long)]
    pub out: PathBuf,
    /// Quality factor, 1 to 100
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..=100))]
    pub quality: u32,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecodeArgs {
    /// Input JPEG file
    #[serde(skip)]
    pub input: PathBuf,
    /// Output PGM (grayscale) or PPM (color)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CoeffsArgs {
    /// Input JPEG file
    #[serde(skip)]
    pub input: PathBuf,
    /// Output text dump: one line per block, `component row col` then 64 coefficients in natural order
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PrepareArgs {
    /// Directory of source documents
    #[arg(long)]
    pub docs: PathBuf,
    /// Directory of ground-truth images with matching file stems
    #[arg(long)]
    pub gt: PathBuf,
    /// Output directory for tiles and manifest.json
    #[arg(long)]
    pub out: PathBuf,
    /// JPEG quality for the stored tiles
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..=100))]
    pub quality: u32,
    /// Tile side in pixels, a multiple of 8
    #[arg(long, default_value_t = data::DEFAULT_TILE)]
    pub tile: usize,
    /// Black border added on every side before tiling
    #[arg(long, default_value_t = data::DEFAULT_PAD)]
    pub border: usize,
    /// Fraction of documents held out for testing
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Corpus manifest written by `prepare`
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the checkpoint and logs
    #[arg(long)]
    pub out: PathBuf,
    /// Layer widths
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    /// What the generator consumes
    #[arg(long, value_enum, default_value_t = InputArg::Compressed)]
    pub input: InputArg,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Stop after this many updates
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Generator learning rate
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    /// Discriminator learning rate (defaults to --lr)
    #[arg(long)]
    pub d_lr: Option<f64>,
    /// Steps over which the adversarial weight rises from 0 to its full value
    #[arg(long, default_value_t = 0)]
    pub adversarial_ramp: u64,
    /// Deviation of Gaussian noise added to discriminator inputs
    #[arg(long, default_value_t = 0.0)]
    pub instance_noise: f64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BinarizeArgs {
    /// Input JPEG (other images are encoded at --quality first)
    #[serde(skip)]
    pub input: PathBuf,
    /// Trained checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output PGM with values 0 and 255
    #[arg(long)]
    pub out: PathBuf,
    /// Border added before tiling
    #[arg(long, default_value_t = data::DEFAULT_PAD)]
    pub border: usize,
    /// Also write the result re-encoded as JFIF
    #[arg(long)]
    pub stream_out: Option<PathBuf>,
    /// Quality for non-JPEG input and for --stream-out
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..=100))]
    pub quality: u32,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Corpus manifest written by `prepare`
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = BinarizerArg::Model)]
    pub binarizer: BinarizerArg,
    /// Checkpoint for the model binarizer
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Output directory for metrics.jsonl
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BenchArgs {
    /// Corpus manifest written by `prepare`
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for bench.jsonl
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Use only the first N training tiles
    #[arg(long)]
    pub tiles: Option<usize>,
    /// Comma-separated corpus sizes in tiles; writes epoch time against size to plot_<input>.dat
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Output directory; pages go to docs/ and ground truth to gt/
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
}

enum Failure {
    Help(String),
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(c) => c,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!("{}", help_for(&argv));
            return 1;
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            return 2;
        }
        Err(Failure::Help(text)) => {
            print!("{text}");
            return 0;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{}", help_for(&argv));
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Help(_)) => 0,
    }
}

fn clap_failure(e: clap::Error) -> Failure {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Failure::Help(e.render().to_string()),
        _ => Failure::Usage(e.render().to_string().trim_end().to_string()),
    }
}

/// Long help of the subcommand named in `argv`, or of the whole tool.
fn help_for(argv: &[OsString]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let sub = argv.iter().skip(1).filter_map(|a| a.to_str()).find(|a| names.iter().any(|n| n == a));
    match sub.and_then(|s| cmd.find_subcommand_mut(s)) {
        Some(c) => c.clone().bin_name(format!("cdbin {}", c.get_name())).render_long_help().to_string(),
        None => cmd.render_long_help().to_string(),
    }
}

fn parse(argv: &[OsString]) -> std::result::Result<Cli, Failure> {
    let cmd = Cli::command();
    let matches = cmd.clone().try_get_matches_from(argv).map_err(clap_failure)?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches).map_err(clap_failure);
    };
    let text = std::fs::read_to_string(&path).at(&path)?;
    let file: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let extra = config_args(&cmd, &matches, &file).map_err(|m| Failure::Usage(format!("{}: {m}", path.display())))?;
    let mut full = argv.to_vec();
    full.extend(extra.into_iter().map(OsString::from));
    let matches = cmd.try_get_matches_from(full).map_err(clap_failure)?;
    Cli::from_arg_matches(&matches).map_err(clap_failure)
}

/// Turns config-file entries into `--flag=value` arguments for every flag
/// not already given on the command line.
fn config_args(cmd: &clap::Command, matches: &ArgMatches, file: &Value) -> std::result::Result<Vec<String>, String> {
    let obj = file.as_object().ok_or("config must be a JSON object")?;
    let (sub_name, sub_matches) = matches.subcommand().ok_or("no subcommand")?;
    let sub_cmd = cmd.find_subcommand(sub_name).ok_or("no subcommand")?;
    let mut out = Vec::new();
    for (key, value) in obj {
        if let Some(section) = cmd.find_subcommand(key) {
            if section.get_name() != sub_name {
                continue;
            }
            let flags = value.as_object().ok_or_else(|| format!("section {key:?} must be an object"))?;
            for (flag, v) in flags {
                push_flag(&mut out, sub_cmd, sub_matches, flag, v)?;
            }
        } else {
            push_flag(&mut out, cmd, sub_matches, key, value)?;
        }
    }
    Ok(out)
}

fn push_flag(out: &mut Vec<String>, cmd: &clap::Command, m: &ArgMatches, flag: &str, v: &Value) -> std::result::Result<(), String> {
    let arg = cmd
        .get_arguments()
        .find(|a| a.get_long() == Some(flag) && flag != "config")
        .ok_or_else(|| format!("unknown key {flag:?}"))?;
    if m.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
        return Ok(());
    }
    let scalar = |v: &Value| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(format!("unsupported value {other} for {flag:?}")),
    };
    match v {
        Value::Null => {}
        Value::Array(items) => {
            for item in items {
                out.push(format!("--{flag}={}", scalar(item)?));
            }
        }
        v => out.push(format!("--{flag}={}", scalar(v)?)),
    }
    Ok(())
}

/// The flags in effect, in the config-file layout.
pub fn effective_config(cli: &Cli) -> Result<Value> {
    let (name, section) = match &cli.command {
        Command::Encode(a) => ("encode", serde_json::to_value(a)?),
        Command::Decode(a) => ("decode", serde_json::to_value(a)?),
        Command::Coeffs(a) => ("coeffs", serde_json::to_value(a)?),
        Command::Prepare(a) => ("prepare", serde_json::to_value(a)?),
        Command::Train(a) => ("train", serde_json::to_value(a)?),
        Command::Binarize(a) => ("binarize", serde_json::to_value(a)?),
        Command::Eval(a) => ("eval", serde_json::to_value(a)?),
        Command::Bench(a) => ("bench", serde_json::to_value(a)?),
        Command::Synth(a) => ("synth", serde_json::to_value(a)?),
    };
    let section: Map<String, Value> =
        section.as_object().into_iter().flatten().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut root = Map::new();
    root.insert("seed".into(), cli.seed.into());
    root.insert("threads".into(), cli.threads.into());
    root.insert(name.into(), Value::Object(section));
    Ok(Value::Object(root))
}

fn create_out_dir(cli: &Cli, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let path = dir.join(EFFECTIVE_CONFIG);
    let text = serde_json::to_string_pretty(&effective_config(cli)?)?;
    std::fs::write(&path, text + "\n").at(&path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).at(path)
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Encode(a) => {
            let img = imageio::read_image(&a.input)?;
            let stream = cdbin_jpeg::encode_image_padded(&img, a.quality).map_err(Error::from)?;
            write_file(&a.out, stream.as_bytes())?;
        }
        Command::Decode(a) => {
            let bytes = std::fs::read(&a.input).at(&a.input)?;
            let img = cdbin_jpeg::decode_image(&bytes).map_err(Error::from)?;
            imageio::write_pnm(&a.out, &img)?;
        }
        Command::Coeffs(a) => {
            let bytes = std::fs::read(&a.input).at(&a.input)?;
            let ci = cdbin_jpeg::partial_decode(&bytes).map_err(Error::from)?;
            write_file(&a.out, cdbin_jpeg::write_dump(&ci.components).as_bytes())?;
        }
        Command::Prepare(a) => prepare(cli, a)?,
        Command::Train(a) => train_cmd(cli, a)?,
        Command::Binarize(a) => binarize(a)?,
        Command::Eval(a) => {
            if a.binarizer == BinarizerArg::Model && a.ckpt.is_none() {
                return Err(Failure::Usage("--binarizer model needs --ckpt".into()));
            }
            eval_cmd(cli, a)?
        }
        Command::Bench(a) => bench(cli, a)?,
        Command::Synth(a) => synth(cli, a)?,
    }
    Ok(())
}

fn prepare(cli: &Cli, a: &PrepareArgs) -> Result<()> {
    if a.tile == 0 || !a.tile.is_multiple_of(8) {
        return Err(Error::Config(format!("tile size {} is not a positive multiple of 8", a.tile)));
    }
    let pairs = data::discover_pairs(&a.docs, &a.gt)?;
    create_out_dir(cli, &a.out)?;
    let opts = PairOptions { border: a.border, tile: a.tile, quality: a.quality };
    let m = data::prepare_dataset(&pairs, &a.out, &opts, a.test_fraction, cli.seed)?;
    println!(
        "{} documents, {} training tiles, {} test tiles",
        m.documents.len(),
        m.tiles_in(Split::Train).len(),
        m.tiles_in(Split::Test).len()
    );
    Ok(())
}

fn train_config(cli: &Cli, a: &TrainArgs, manifest: &data::DatasetManifest) -> TrainConfig {
    let mut model = a.preset.model();
    model.input = a.input.into();
    model.tile_size = manifest.tile_size;
    let mut cfg = TrainConfig {
        model,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: cli.seed,
        max_steps: a.max_steps,
        quality: manifest.quality,
        adversarial_ramp: a.adversarial_ramp,
        instance_noise: a.instance_noise,
        ..TrainConfig::default()
    };
    cfg.optimizer.lr = a.lr;
    if let Some(lr) = a.d_lr {
        let mut d = cfg.optimizer;
        d.lr = lr;
        cfg.discriminator_optimizer = Some(d);
    }
    cfg
}

/// Reads every training tile of a manifest into memory.
pub fn load_samples(manifest: &data::DatasetManifest, root: &Path, split: Split, kind: InputKind) -> Result<Vec<Sample>> {
    manifest
        .tiles_in(split)
        .into_iter()
        .map(|e| {
            let t = data::load_tile(root, e)?;
            Sample::from_stream(&t.stream, &t.ground_truth, kind)
        })
        .collect()
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let manifest = data::load_manifest(&a.manifest)?;
    let cfg = train_config(cli, a, &manifest);
    cfg.validate()?;
    let samples = load_samples(&manifest, &manifest_root(&a.manifest), Split::Train, cfg.model.input)?;
    let mut model = Model::for_training(&cfg)?;
    create_out_dir(cli, &a.out)?;
    let cfg_path = a.out.join("train_config.json");
    write_file(&cfg_path, (serde_json::to_string_pretty(&cfg)? + "\n").as_bytes())?;

    let metrics_path = a.out.join("metrics.jsonl");
    let timing_path = a.out.join("timing.jsonl");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path).at(&metrics_path)?);
    let mut timing = std::io::BufWriter::new(std::fs::File::create(&timing_path).at(&timing_path)?);
    let mut failed: Option<Error> = None;
    let start = Instant::now();
    let mut last = start;
    let records = train(&mut model, &samples, &cfg, |_, r| {
        let now = Instant::now();
        let line = serde_json::to_string(r).map_err(Error::from).and_then(|l| writeln!(metrics, "{l}").at(&metrics_path));
        let t = serde_json::json!({ "step": r.step, "seconds": (now - last).as_secs_f64(), "elapsed": (now - start).as_secs_f64() });
        last = now;
        let line = line.and_then(|_| writeln!(timing, "{t}").at(&timing_path));
        match line {
            Ok(()) => true,
            Err(e) => {
                failed = Some(e);
                false
            }
        }
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    metrics.flush().at(&metrics_path)?;
    timing.flush().at(&timing_path)?;
    model.save(&a.out.join("model.ckpt"), Some(&cfg))?;
    match records.last() {
        Some(r) => println!("{} steps, final l_gen {:.6} l_total {:.6}", records.len(), r.l_gen, r.l_total),
        None => println!("0 steps"),
    }
    Ok(())
}

fn binarize(a: &BinarizeArgs) -> Result<()> {
    let (model, _) = Model::load(&a.ckpt)?;
    let bytes = std::fs::read(&a.input).at(&a.input)?;
    let stream = if bytes.starts_with(&[0xFF, 0xD8]) {
        bytes
    } else {
        let img = imageio::to_gray(&imageio::read_image(&a.input)?);
        cdbin_jpeg::encode_image_padded(&img, a.quality)?.as_bytes().to_vec()
    };
    let out = infer::binarize_document(&model, &stream, a.border)?;
    imageio::write_pnm(&a.out, &out)?;
    if let Some(p) = &a.stream_out {
        write_file(p, cdbin_jpeg::encode_image_padded(&out, a.quality)?.as_bytes())?;
    }
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let manifest = data::load_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest);
    let model = match &a.ckpt {
        Some(p) if a.binarizer == BinarizerArg::Model => Some(Model::load(p)?.0),
        _ => None,
    };
    let binarizer: Box<dyn Binarizer + '_> = match a.binarizer {
        BinarizerArg::Model => Box::new(eval::ModelBinarizer(model.as_ref().expect("checked by caller"))),
        BinarizerArg::Oracle => Box::new(eval::OracleBinarizer),
        BinarizerArg::Background => Box::new(eval::BackgroundBinarizer),
        BinarizerArg::Identity => Box::new(eval::IdentityBinarizer),
    };
    let report: MetricReport = eval::evaluate_corpus(&manifest, &root, a.split.into(), binarizer.as_ref())?;
    create_out_dir(cli, &a.out)?;
    write_file(&a.out.join("metrics.jsonl"), report.to_jsonl()?.as_bytes())?;
    print!("{}", report.to_table());
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let manifest = data::load_manifest(&a.manifest)?;
    let root = manifest_root(&a.manifest);
    let mut model = a.preset.model();
    model.tile_size = manifest.tile_size;
    let cfg = TrainConfig {
        model,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: cli.seed,
        quality: manifest.quality,
        ..TrainConfig::default()
    };
    create_out_dir(cli, &a.out)?;
    let mut lines = String::new();
    println!("{:<11} {:>12} {:>14} {:>14} {:>10}", "input", "s/epoch", "bytes/batch", "raw/batch", "img/s");
    for kind in [InputKind::Compressed, InputKind::Pixels] {
        let r = eval::benchmark(kind, &manifest, &root, &cfg, a.tiles)?;
        println!(
            "{:<11} {:>12.3} {:>14.0} {:>14.0} {:>10.3}",
            format!("{:?}", r.variant).to_lowercase(),
            r.seconds_per_epoch,
            r.compressed_bytes_per_batch,
            r.raw_bytes_per_batch,
            r.images_per_second
        );
        lines.push_str(&serde_json::to_string(&r)?);
        lines.push('\n');
    }
    write_file(&a.out.join("bench.jsonl"), lines.as_bytes())?;
    if a.sizes.is_empty() {
        return Ok(());
    }
    for kind in [InputKind::Compressed, InputKind::Pixels] {
        let mut rows = Vec::new();
        for &n in &a.sizes {
            let r = eval::benchmark(kind, &manifest, &root, &cfg, Some(n))?;
            rows.push((r.tiles as f64, r.seconds_per_epoch));
        }
        let path = a.out.join(format!("plot_{}.dat", kind.as_str()));
        write_file(&path, eval::plot_data(("tiles", "seconds_per_epoch"), &rows).as_bytes())?;
    }
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    if a.width == 0 || a.height == 0 {
        return Err(Error::Config("page size must be positive".into()));
    }
    create_out_dir(cli, &a.out)?;
    let (docs, gt) = (a.out.join("docs"), a.out.join("gt"));
    for d in [&docs, &gt] {
        std::fs::create_dir_all(d).at(d)?;
    }
    let cfg = SynthConfig::page(a.width, a.height);
    for i in 0..a.count {
        let doc = synth_document(&cfg, cli.seed.wrapping_add(i as u64));
        let name = format!("synth_{i:03}.pgm");
        imageio::write_pnm(&docs.join(&name), &doc.image)?;
        imageio::write_pnm(&gt.join(&name), &doc.ground_truth)?;
    }
    println!("{} pages in {}", a.count, a.out.display());
    Ok(())
}
