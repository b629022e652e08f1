//! Subcommand implementations. Each one resolves its settings, validates
//! them before touching any input, does the work and writes a run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use anyhow::Context as _;
use clap::Args;
use serde_json::{json, Value};

use libiq::analyzer::{self, IqVector, TimeSeries};
use libiq::classifier::{argmax, cnn_test, cnn_train_with, EvalReport, ModelBundle, ModelConfig};
use libiq::plotter::{self, RenderFormat, Scale, ScatterMode};
use libiq::preprocessor::{
    create_dataset_from_bin, create_dataset_from_csv, features_from_vectors, load_dataset, save_dataset,
    DatasetSpec, Label, LabeledDataset,
};
use libiq::siggen::{self, CorpusConfig, SceneConfig, SceneGenerator};
use libiq::stream::{self, latency_report, ServeOptions, Server, StreamRecord, RECORD_CSV_HEADER};

use crate::bail_usage;
use crate::config::{pick, pick_opt, FileConfig};
use crate::manifest::{manifest_path, RunRecorder};
use crate::usage;

pub struct Context {
    pub file: FileConfig,
    pub manifest: Option<PathBuf>,
}

impl Context {
    fn manifest_for(&self, output: &Path, is_dir: bool) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| manifest_path(output, is_dir))
    }

    /// Manifest location for commands whose main output is not a file.
    fn manifest_or(&self, command: &str) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("libiq-{command}.manifest.json")))
    }
}

/// Capture geometry and detector flags shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    /// Complex samples per capture vector.
    #[arg(long)]
    vector_len: Option<usize>,
    /// Vectors per classified series (K).
    #[arg(long, value_name = "K")]
    window: Option<usize>,
    /// Energy detector window in bins.
    #[arg(long)]
    detect_window: Option<usize>,
    /// Bins kept around the detected peak (J).
    #[arg(long, value_name = "J")]
    out_len: Option<usize>,
}

impl FeatureArgs {
    fn resolve(&self, file: &FileConfig) -> anyhow::Result<DatasetSpec> {
        let d = DatasetSpec::default();
        let spec = DatasetSpec {
            vector_len: pick(self.vector_len, file.vector_len, d.vector_len),
            window: pick(self.window, file.window, d.window),
            detect_window: pick(self.detect_window, file.detect_window, d.detect_window),
            out_len: pick(self.out_len, file.out_len, d.out_len),
        };
        spec.validate().map_err(|e| usage(e.into()))?;
        Ok(spec)
    }

    fn any_set(&self) -> bool {
        self.vector_len.is_some() || self.window.is_some() || self.detect_window.is_some() || self.out_len.is_some()
    }
}

fn parse_flag<T>(s: &str) -> anyhow::Result<T>
where
    T: std::str::FromStr<Err = libiq::Error>,
{
    s.parse::<T>().map_err(|e| usage(e.into()))
}

fn parse_labels(names: &[String]) -> anyhow::Result<Vec<Label>> {
    names.iter().map(|n| parse_flag::<Label>(n)).collect()
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_capture(path: &Path, vector_len: usize) -> anyhow::Result<Vec<IqVector>> {
    let vectors = if is_csv(path) {
        analyzer::parse_csv(path)?
    } else {
        analyzer::parse_bin(path, vector_len)?
    };
    Ok(vectors)
}

fn require_exists(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail_usage!("{} does not exist", path.display());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

// gen

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Labels to generate (default: all six).
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Center bins (default: 192,576,960,1344).
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<usize>>,
    /// Files per (label, bin) cell.
    #[arg(long)]
    per_cell: Option<usize>,
    #[arg(long)]
    vector_len: Option<usize>,
    #[arg(long)]
    vectors_per_file: Option<usize>,
    #[arg(long)]
    signal_bw_bins: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    snr_spread_db: Option<f64>,
    #[arg(long)]
    noise_floor_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn gen(ctx: &Context, a: GenArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("gen");
    let f = &ctx.file;
    let d = CorpusConfig::default();
    let labels = match pick_opt(a.labels, f.labels.clone()) {
        Some(names) => parse_labels(&names)?,
        None => d.labels,
    };
    let cfg = CorpusConfig {
        labels,
        bins: pick(a.bins, f.bins.clone(), d.bins),
        per_cell: pick(a.per_cell, f.per_cell, d.per_cell),
        vector_len: pick(a.vector_len, f.vector_len, d.vector_len),
        vectors_per_file: pick(a.vectors_per_file, f.vectors_per_file, d.vectors_per_file),
        signal_bw_bins: pick(a.signal_bw_bins, f.signal_bw_bins, d.signal_bw_bins),
        snr_db: pick(a.snr_db, f.snr_db, d.snr_db),
        snr_spread_db: pick(a.snr_spread_db, f.snr_spread_db, d.snr_spread_db),
        noise_floor_db: pick(a.noise_floor_db, f.noise_floor_db, d.noise_floor_db),
        seed: pick(a.seed, f.seed, d.seed),
    };
    if cfg.labels.is_empty() || cfg.bins.is_empty() || cfg.per_cell == 0 || cfg.vectors_per_file == 0 {
        bail_usage!("labels, bins, per-cell and vectors-per-file must all be non-empty");
    }
    for &bin in &cfg.bins {
        for &label in &cfg.labels {
            let probe = siggen::corpus_scene(&cfg, label, bin, 0);
            probe.validate().map_err(|e| usage(e.into()))?;
        }
    }

    let manifest = siggen::generate_corpus(&cfg, &a.out)?;
    let seeds = manifest.files.iter().map(|f| f.seed).collect();
    let outputs = std::iter::once(a.out.join(siggen::CorpusManifest::FILE_NAME))
        .chain(manifest.files.iter().map(|f| a.out.join(&f.file)))
        .collect();
    print_json(&json!({ "files": manifest.files.len(), "out": a.out }));
    rec.finish(&ctx.manifest_for(&a.out, true), serde_json::to_value(&cfg)?, seeds, vec![], outputs)
}

// dataset

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Corpus directory written by `gen`.
    #[arg(long, conflicts_with = "input")]
    corpus: Option<PathBuf>,
    /// Corpus center bins to include (default: all).
    #[arg(long, value_delimiter = ',', requires = "corpus")]
    bins: Option<Vec<usize>>,
    /// Capture file (.bin or .csv); repeat, paired with --label.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Label of the matching --input.
    #[arg(long)]
    label: Vec<String>,
    #[command(flatten)]
    features: FeatureArgs,
}

/// Loads captures with one label per file, as either all-binary or all-CSV.
fn build_dataset(paths: &[PathBuf], labels: &[Label], spec: &DatasetSpec) -> anyhow::Result<LabeledDataset> {
    let csv = paths.iter().filter(|p| is_csv(p)).count();
    let ds = if csv == 0 {
        create_dataset_from_bin(paths, labels, spec)?
    } else if csv == paths.len() {
        create_dataset_from_csv(paths, labels, spec)?
    } else {
        bail_usage!("inputs mix .csv and binary captures");
    };
    Ok(ds)
}

fn corpus_dataset(dir: &Path, bins: Option<&[usize]>, spec: &DatasetSpec) -> anyhow::Result<(LabeledDataset, Vec<PathBuf>)> {
    let manifest = siggen::load_corpus_manifest(dir)?;
    if manifest.config.vector_len != spec.vector_len {
        bail_usage!(
            "corpus vectors have {} samples but --vector-len is {}",
            manifest.config.vector_len,
            spec.vector_len
        );
    }
    let bins = bins.map(<[usize]>::to_vec).unwrap_or_else(|| manifest.config.bins.clone());
    let (paths, labels) = siggen::corpus_selection(dir, &bins)?;
    if paths.is_empty() {
        bail_usage!("corpus {} has no files at bins {bins:?}", dir.display());
    }
    Ok((build_dataset(&paths, &labels, spec)?, paths))
}

pub fn dataset(ctx: &Context, a: DatasetArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("dataset");
    let spec = a.features.resolve(&ctx.file)?;
    let bins = pick_opt(a.bins, ctx.file.bins.clone());
    let (ds, inputs) = match &a.corpus {
        Some(dir) => corpus_dataset(dir, bins.as_deref(), &spec)?,
        None => {
            if a.input.is_empty() {
                bail_usage!("give either --corpus or at least one --input/--label pair");
            }
            if a.input.len() != a.label.len() {
                bail_usage!("{} --input files but {} --label values", a.input.len(), a.label.len());
            }
            let labels = parse_labels(&a.label)?;
            a.input.iter().try_for_each(|p| require_exists(p))?;
            (build_dataset(&a.input, &labels, &spec)?, a.input.clone())
        }
    };
    save_dataset(&ds, &a.out)?;
    print_json(&json!({ "series": ds.len(), "class_counts": ds.class_counts(), "out": a.out }));
    let config = json!({ "features": spec, "bins": bins });
    let outputs = vec![a.out.clone()];
    rec.finish(&ctx.manifest_for(&a.out, true), config, vec![], inputs, outputs)
}

// train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Training dataset directory written by `dataset`.
    #[arg(long, conflicts_with = "corpus")]
    dataset: Option<PathBuf>,
    /// Corpus directory; features are built on the fly.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus bins used for training (default: 576,960).
    #[arg(long, value_delimiter = ',')]
    train_bins: Option<Vec<usize>>,
    /// Validation dataset directory; otherwise a stratified holdout is used.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Fraction of the training set held out for validation.
    #[arg(long)]
    holdout: Option<f64>,
    /// Per-epoch history CSV (default: `<model stem>.history.csv`).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long = "blocks")]
    conv_blocks: Option<usize>,
    #[arg(long = "kernel")]
    kernel_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    features: FeatureArgs,
}

pub fn train(ctx: &Context, a: TrainArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("train");
    let f = &ctx.file;
    if a.dataset.is_some() && a.features.any_set() {
        bail_usage!("feature flags apply only with --corpus; a dataset carries its own");
    }
    let holdout = pick(a.holdout, f.holdout, 0.2);
    if a.val.is_none() && !(holdout > 0.0 && holdout < 1.0) {
        bail_usage!("--holdout must be in (0, 1), got {holdout}");
    }
    let seed = pick(a.seed, f.seed, 0);
    let train_bins = pick(a.train_bins, f.train_bins.clone(), vec![576, 960]);

    let mut inputs = Vec::new();
    let (full, spec) = match (&a.dataset, &a.corpus) {
        (Some(dir), None) => {
            require_exists(dir)?;
            inputs.push(dir.clone());
            let ds = load_dataset(dir)?;
            let m = &ds.meta;
            let spec = DatasetSpec {
                vector_len: m.vector_len,
                window: m.window,
                detect_window: m.detect_window,
                out_len: m.out_len,
            };
            (ds, spec)
        }
        (None, Some(dir)) => {
            let spec = a.features.resolve(f)?;
            require_exists(dir)?;
            let (ds, paths) = corpus_dataset(dir, Some(&train_bins), &spec)?;
            inputs.extend(paths);
            (ds, spec)
        }
        _ => bail_usage!("give exactly one of --dataset or --corpus"),
    };

    let d = ModelConfig::new(spec.out_len * spec.window);
    let config = ModelConfig {
        epochs: pick(a.epochs, f.epochs, d.epochs),
        batch_size: pick(a.batch, f.batch, d.batch_size),
        learning_rate: pick(a.learning_rate, f.learning_rate, d.learning_rate),
        filters: pick(a.filters, f.filters, d.filters),
        conv_blocks: pick(a.conv_blocks, f.conv_blocks, d.conv_blocks),
        kernel_size: pick(a.kernel_size, f.kernel_size, d.kernel_size),
        seed,
        ..d
    };
    config.validate().map_err(|e| usage(e.into()))?;

    let (train_set, val_set) = match &a.val {
        Some(dir) => {
            require_exists(dir)?;
            inputs.push(dir.clone());
            (full, load_dataset(dir)?)
        }
        None => full.stratified_split(holdout, seed)?,
    };

    let epochs = config.epochs;
    let (model, history) = cnn_train_with(train_set, val_set, &config, |e| {
        eprintln!(
            "epoch {}/{epochs}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
        );
    })?;

    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    model.save(&a.out)?;
    let history_path = a.history.unwrap_or_else(|| sibling(&a.out, ".history.csv"));
    write_text(&history_path, &history.to_csv())?;

    print_json(&json!({
        "model": a.out,
        "history": history_path,
        "updates": history.total_updates(),
        "final": history.epochs.last(),
    }));
    let resolved = json!({ "model": config, "features": spec, "train_bins": train_bins, "holdout": holdout });
    rec.finish(
        &ctx.manifest_for(&a.out, false),
        resolved,
        vec![seed],
        inputs,
        vec![a.out.clone(), history_path],
    )
}

// eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Test dataset directory.
    #[arg(long, conflicts_with = "corpus")]
    dataset: Option<PathBuf>,
    /// Corpus directory; test series are built on the fly.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus bins used for testing (default: 192,1344).
    #[arg(long, value_delimiter = ',')]
    test_bins: Option<Vec<usize>>,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Confusion matrix CSV (default: `<report stem>.confusion.csv`).
    #[arg(long)]
    confusion: Option<PathBuf>,
}

pub fn eval(ctx: &Context, a: EvalArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("eval");
    let test_bins = pick(a.test_bins, ctx.file.test_bins.clone(), vec![192, 1344]);
    require_exists(&a.model)?;
    let mut inputs = vec![a.model.clone()];
    let model = ModelBundle::load(&a.model)?;
    let test = match (&a.dataset, &a.corpus) {
        (Some(dir), None) => {
            require_exists(dir)?;
            inputs.push(dir.clone());
            load_dataset(dir)?
        }
        (None, Some(dir)) => {
            require_exists(dir)?;
            let (ds, paths) = corpus_dataset(dir, Some(&test_bins), &model.features)?;
            inputs.extend(paths);
            ds
        }
        _ => bail_usage!("give exactly one of --dataset or --corpus"),
    };
    let report = cnn_test(&model, &test)?;
    write_report(&report, &a.out)?;
    let confusion = a.confusion.unwrap_or_else(|| sibling(&a.out, ".confusion.csv"));
    write_text(&confusion, &report.confusion_csv())?;
    print_json(&json!({ "accuracy": report.accuracy, "macro_f1": report.macro_f1, "total": report.total }));
    rec.finish(
        &ctx.manifest_for(&a.out, false),
        json!({ "test_bins": test_bins, "features": model.features }),
        vec![],
        inputs,
        vec![a.out.clone(), confusion],
    )
}

fn write_report(report: &EvalReport, path: &Path) -> anyhow::Result<()> {
    write_text(path, &serde_json::to_string_pretty(report)?)
}

// classify

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Capture file (.bin or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn classify(ctx: &Context, a: ClassifyArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("classify");
    require_exists(&a.model)?;
    require_exists(&a.input)?;
    let model = ModelBundle::load(&a.model)?;
    let spec = model.features;
    let vectors = read_capture(&a.input, spec.vector_len)?;
    let tensors = features_from_vectors(vectors, &spec)?;
    let mut text = String::from("series,first_vector,label,prob\n");
    for (i, t) in tensors.iter().enumerate() {
        let probs = model.predict_raw(t)?;
        let best = argmax(&probs);
        let label = Label::from_code(best as u8)?;
        text.push_str(&format!("{i},{},{label},{}\n", i * spec.window, probs[best]));
    }
    let mut outputs = vec![];
    match &a.out {
        Some(p) => {
            write_text(p, &text)?;
            outputs.push(p.clone());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let manifest = match &a.out {
        Some(p) => ctx.manifest_for(p, false),
        None => ctx.manifest_or("classify"),
    };
    rec.finish(&manifest, json!({ "features": spec }), vec![], vec![a.model, a.input], outputs)
}

// serve

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on.
    #[arg(long)]
    endpoint: Option<String>,
    /// Capture file whose vectors are replayed in a loop.
    #[arg(long, conflicts_with = "scene")]
    input: Option<PathBuf>,
    /// Synthesize an endless scene of this label instead.
    #[arg(long)]
    scene: Option<String>,
    /// Scene center bin.
    #[arg(long, default_value_t = 960)]
    center_bin: usize,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    vector_len: Option<usize>,
    /// Frame period in milliseconds.
    #[arg(long)]
    period_ms: Option<f64>,
    /// Stop after this many frames.
    #[arg(long)]
    frames: Option<u64>,
    /// Stop after this many seconds.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Frames buffered for a slow consumer before dropping.
    #[arg(long)]
    queue: Option<usize>,
    /// Stats JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn serve(ctx: &Context, a: ServeArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("serve");
    let f = &ctx.file;
    let endpoint = pick(a.endpoint, f.endpoint.clone(), "127.0.0.1:5000".into());
    let period_ms = pick(a.period_ms, f.period_ms, stream::DEFAULT_PERIOD_MS as f64);
    if !(period_ms > 0.0 && period_ms.is_finite()) {
        bail_usage!("--period-ms must be positive, got {period_ms}");
    }
    if let Some(d) = a.duration_s {
        if !(d > 0.0 && d.is_finite()) {
            bail_usage!("--duration-s must be positive, got {d}");
        }
    }
    let vector_len = pick(a.vector_len, f.vector_len, libiq::DEFAULT_VECTOR_LEN);
    let seed = pick(a.seed, f.seed, 0);
    let opts = ServeOptions {
        period: Duration::from_secs_f64(period_ms / 1e3),
        max_frames: a.frames,
        duration: a.duration_s.map(Duration::from_secs_f64),
        queue: pick(a.queue, f.queue, ServeOptions::default().queue),
    };
    let mut inputs = vec![];
    let source: Box<dyn Iterator<Item = IqVector>> = match (&a.input, &a.scene) {
        (Some(path), None) => {
            require_exists(path)?;
            inputs.push(path.clone());
            Box::new(stream::corpus_source(read_capture(path, vector_len)?)?)
        }
        (None, Some(name)) => {
            let label = parse_flag::<Label>(name)?;
            let d = SceneConfig::new(label, a.center_bin);
            let cfg = SceneConfig {
                vector_len,
                snr_db: pick(a.snr_db, f.snr_db, d.snr_db),
                seed,
                vectors: usize::MAX,
                ..d
            };
            Box::new(SceneGenerator::new(cfg).map_err(|e| usage(e.into()))?)
        }
        _ => bail_usage!("give exactly one of --input or --scene"),
    };

    let server = Server::bind(endpoint.as_str())?;
    eprintln!("serving on {}", server.local_addr()?);
    let stats = server.run(source, &opts, &AtomicBool::new(false))?;
    let summary = json!({ "sent": stats.sent, "dropped": stats.dropped });
    print_json(&summary);
    let mut outputs = vec![];
    if let Some(p) = &a.out {
        write_text(p, &summary.to_string())?;
        outputs.push(p.clone());
    }
    let manifest = match &a.out {
        Some(p) => ctx.manifest_for(p, false),
        None => ctx.manifest_or("serve"),
    };
    let config = json!({
        "endpoint": endpoint,
        "period_ms": period_ms,
        "frames": a.frames,
        "duration_s": a.duration_s,
        "queue": opts.queue,
        "vector_len": vector_len,
        "scene": a.scene,
        "center_bin": a.center_bin,
    });
    rec.finish(&manifest, config, vec![seed], inputs, outputs)
}

// stream

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Producer address.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: PathBuf,
    /// Vectors per window; must match the model.
    #[arg(long, value_name = "K")]
    window: Option<usize>,
    /// Per-window records CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after this many records.
    #[arg(long)]
    max_records: Option<u64>,
}

pub fn stream(ctx: &Context, a: StreamArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("stream");
    let endpoint = pick(a.endpoint, ctx.file.endpoint.clone(), "127.0.0.1:5000".into());
    require_exists(&a.model)?;
    let model = ModelBundle::load(&a.model)?;
    let k = pick(a.window, ctx.file.window, model.features.window);

    let mut records: Vec<StreamRecord> = Vec::new();
    let limit = a.max_records.unwrap_or(u64::MAX);
    let summary = stream::classify_stream(endpoint.as_str(), &model, k, |r| {
        records.push(r.clone());
        (records.len() as u64) < limit
    })?;
    let latencies: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    let latency = latency_report(&latencies).ok();
    let mut outputs = vec![];
    if let Some(p) = &a.out {
        let mut text = format!("{RECORD_CSV_HEADER}\n");
        for r in &records {
            text.push_str(&r.csv_line());
            text.push('\n');
        }
        write_text(p, &text)?;
        outputs.push(p.clone());
    }
    print_json(&json!({ "summary": summary, "latency_ms": latency }));
    let manifest = match &a.out {
        Some(p) => ctx.manifest_for(p, false),
        None => ctx.manifest_or("stream"),
    };
    rec.finish(&manifest, json!({ "endpoint": endpoint, "window": k }), vec![], vec![a.model], outputs)
}

// spectrogram / plot

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Capture file (.bin or .csv).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vector_len: Option<usize>,
    /// FFT window in samples.
    #[arg(long)]
    window_size: Option<usize>,
    /// Samples shared by consecutive windows.
    #[arg(long)]
    overlap: Option<usize>,
    /// `linear` or `db`.
    #[arg(long)]
    scale: Option<String>,
    /// `png` or `csv`.
    #[arg(long)]
    format: Option<String>,
    /// Move DC to the center column.
    #[arg(long)]
    fftshift: bool,
    /// Vector range `start:end` of the capture to use (default: all).
    #[arg(long)]
    vectors: Option<String>,
}

fn parse_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let parsed = s.split_once(':').and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
    match parsed {
        Some((a, b)) if a < b => Ok((a, b)),
        _ => bail_usage!("--vectors must look like start:end with start < end, got '{s}'"),
    }
}

pub fn spectrogram(ctx: &Context, a: SpectrogramArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("spectrogram");
    let f = &ctx.file;
    let window_size = pick(a.window_size, f.window_size, 256);
    let overlap = pick(a.overlap, f.overlap, window_size / 2);
    let scale: Scale = parse_flag(&pick(a.scale, f.scale.clone(), "db".into()))?;
    let format: RenderFormat = parse_flag(&pick(a.format, f.format.clone(), "png".into()))?;
    let vector_len = pick(a.vector_len, f.vector_len, libiq::DEFAULT_VECTOR_LEN);
    let range = a.vectors.as_deref().map(parse_range).transpose()?;
    if overlap >= window_size {
        bail_usage!("--overlap {overlap} must be smaller than --window-size {window_size}");
    }
    require_exists(&a.input)?;

    let mut vectors = read_capture(&a.input, vector_len)?;
    if let Some((s, e)) = range {
        if e > vectors.len() {
            bail_usage!("--vectors {s}:{e} exceeds the {} vectors in the capture", vectors.len());
        }
        vectors = vectors.drain(s..e).collect();
    }
    let ts = TimeSeries::new(vectors)?;
    let mut m = plotter::spectrogram(&ts, window_size, overlap, scale)?;
    if a.fftshift {
        m.fftshift();
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    plotter::render(&m, &a.out, format)?;
    print_json(&json!({ "rows": m.rows, "cols": m.cols, "out": a.out }));
    let config = json!({
        "window_size": window_size,
        "overlap": overlap,
        "scale": scale,
        "format": format,
        "fftshift": a.fftshift,
        "vectors": a.vectors,
        "vector_len": vector_len,
    });
    rec.finish(&ctx.manifest_for(&a.out, false), config, vec![], vec![a.input], vec![a.out.clone()])
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Capture file (.bin or .csv).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vector_len: Option<usize>,
    /// Index of the vector to plot.
    #[arg(long, default_value_t = 0)]
    vector: usize,
    /// `components` (I vs Q) or `magnitude_phase`.
    #[arg(long, default_value = "components")]
    mode: String,
    /// `png` or `csv`.
    #[arg(long)]
    format: Option<String>,
    /// PNG side length in pixels.
    #[arg(long, default_value_t = 512)]
    size: u32,
}

pub fn plot(ctx: &Context, a: PlotArgs) -> anyhow::Result<()> {
    let rec = RunRecorder::start("plot");
    let f = &ctx.file;
    let mode: ScatterMode = parse_flag(&a.mode)?;
    let format: RenderFormat = parse_flag(&pick(a.format, f.format.clone(), "png".into()))?;
    let vector_len = pick(a.vector_len, f.vector_len, libiq::DEFAULT_VECTOR_LEN);
    if a.size < 16 {
        bail_usage!("--size must be at least 16 pixels");
    }
    require_exists(&a.input)?;
    let vectors = read_capture(&a.input, vector_len)?;
    let Some(v) = vectors.get(a.vector) else {
        bail_usage!("--vector {} is out of range; the capture has {} vectors", a.vector, vectors.len());
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    plotter::render_scatter(&plotter::scatter_data(v, mode), mode, &a.out, format, a.size)?;
    print_json(&json!({ "points": v.len(), "out": a.out }));
    let config = json!({ "vector": a.vector, "mode": mode, "format": format, "size": a.size, "vector_len": vector_len });
    rec.finish(&ctx.manifest_for(&a.out, false), config, vec![], vec![a.input], vec![a.out.clone()])
}
