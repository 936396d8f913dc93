//! The `gestr` command line: dataset generation, training, evaluation,
//! matrix export, offline stream replay and a TCP recognition service.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime abort.

pub mod config;
pub mod serve;
pub mod session;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use gestr_core::cnn::{evaluate, load_weights, save_weights, train_with_progress, ConvSpec, Padding, TrainError, WeightsError};
use gestr_core::home::ControllerConfig;
use gestr_core::landmark::{load_captures, read_capture, write_captures};
use gestr_core::synth::{generate_dataset_with, generate_stream, stream_to_ndjson, ScriptItem, StreamOptions, SynthConfig};
use gestr_core::{ArchitectureConfig, CnnModel, GestureClass, MotionMatrix, RecognizerConfig, Sample, TrainConfig};
use serde::{Deserialize, Serialize};

pub use serve::serve;
pub use session::{Session, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Runtime => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "gestr", version, about = "Hand-gesture recognition engine")]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic capture dataset, or a scripted frame stream.
    Gen(GenArgs),
    /// Train a model on a capture directory.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a model on a capture directory.
    Eval(EvalArgs),
    /// Export the motion matrix of a capture as a PGM image.
    Encode(EncodeArgs),
    /// Replay a frame stream through the recognizer and the home controller.
    Stream(StreamArgs),
    /// Serve recognition over TCP, one session at a time.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory, or the stream file with `--script`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Neutral captures per gesture-class count.
    #[arg(long)]
    pub neutral_multiplier: Option<usize>,
    /// Standard deviation of per-point noise.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Comma-separated stream script: class names, `hand_lost`, `idle:<ms>`.
    #[arg(long)]
    pub script: Option<String>,
    /// Stream rendering speed: each gesture spans ceil(30 / speed) frames.
    #[arg(long)]
    pub speed: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenSettings {
    pub seed: u64,
    pub out: PathBuf,
    pub per_class: usize,
    pub neutral_multiplier: usize,
    pub jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    pub speed: usize,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out capture directory for per-epoch validation metrics.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output weight file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics CSV; defaults to the weight path with a `.csv` extension.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// L1 strength on the regularized weight tensors.
    #[arg(long)]
    pub l1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conv filter counts; a `p` suffix adds 2x2 max pooling, e.g. `33p,64,64`.
    #[arg(long)]
    pub conv: Option<String>,
    #[arg(long)]
    pub dense: Option<usize>,
    /// `valid` or `same`.
    #[arg(long)]
    pub padding: Option<String>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainSettings {
    pub data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    pub out: PathBuf,
    pub metrics: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l1: f64,
    pub seed: u64,
    pub conv: String,
    pub dense: usize,
    pub padding: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalSettings {
    pub weights: PathBuf,
    pub data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EncodeArgs {
    #[arg(long)]
    pub capture: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EncodeSettings {
    pub capture: PathBuf,
    pub out: PathBuf,
}

/// Recognizer and controller flags shared by `stream` and `serve`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SessionArgs {
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Copies of each frame pushed into the 30-entry window.
    #[arg(long)]
    pub triplication: Option<usize>,
    #[arg(long)]
    pub suppress_neutral: Option<bool>,
    #[arg(long)]
    pub intensity_step: Option<u8>,
    #[arg(long)]
    pub initial_intensity: Option<u8>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SessionSettings {
    pub weights: PathBuf,
    pub threshold: f64,
    pub triplication: usize,
    pub suppress_neutral: bool,
    pub intensity_step: u8,
    pub initial_intensity: u8,
}

impl SessionSettings {
    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            recognizer: RecognizerConfig {
                confidence_threshold: self.threshold,
                triplication_n: self.triplication,
                suppress_neutral_events: self.suppress_neutral,
            },
            controller: ControllerConfig {
                intensity_step: self.intensity_step,
                initial_intensity: self.initial_intensity,
            },
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StreamArgs {
    /// Frame stream file; `-` or absent reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Event/state log; absent writes stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the controller's action log as NDJSON.
    #[arg(long)]
    pub action_log: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StreamSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_log: Option<PathBuf>,
    #[serde(flatten)]
    pub session: SessionSettings,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
    #[serde(flatten)]
    pub session: SessionSettings,
}

pub const DEFAULT_PORT: u16 = 7878;

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required --{flag}")))
}

impl GenArgs {
    pub fn resolve(self) -> Result<GenSettings, CliError> {
        let synth = SynthConfig::default();
        Ok(GenSettings {
            seed: self.seed.unwrap_or(7),
            out: required(self.out, "out")?,
            per_class: self.per_class.unwrap_or(10),
            neutral_multiplier: self.neutral_multiplier.unwrap_or(synth.neutral_multiplier),
            jitter: self.jitter.unwrap_or(synth.jitter_sigma),
            script: self.script,
            speed: self.speed.unwrap_or(StreamOptions::default().speed),
        })
    }
}

impl TrainArgs {
    pub fn resolve(self) -> Result<TrainSettings, CliError> {
        let train = TrainConfig::default();
        let arch = ArchitectureConfig::default();
        let out = required(self.out, "out")?;
        Ok(TrainSettings {
            data: required(self.data, "data")?,
            val: self.val,
            metrics: self.metrics.unwrap_or_else(|| out.with_extension("csv")),
            out,
            epochs: self.epochs.unwrap_or(train.epochs),
            batch_size: self.batch_size.unwrap_or(train.batch_size),
            lr: self.lr.unwrap_or(train.learning_rate),
            l1: self.l1.unwrap_or(arch.l1_lambda),
            seed: self.seed.unwrap_or(train.seed),
            conv: self.conv.unwrap_or_else(|| format_conv(&arch.conv_layers)),
            dense: self.dense.unwrap_or(arch.dense_hidden),
            padding: self.padding.unwrap_or_else(|| "valid".to_string()),
            beta1: self.beta1.unwrap_or(train.adam_beta1),
            beta2: self.beta2.unwrap_or(train.adam_beta2),
            epsilon: self.epsilon.unwrap_or(train.adam_epsilon),
        })
    }
}

impl EvalArgs {
    pub fn resolve(self) -> Result<EvalSettings, CliError> {
        Ok(EvalSettings {
            weights: required(self.weights, "weights")?,
            data: required(self.data, "data")?,
            confusion_csv: self.confusion_csv,
        })
    }
}

impl EncodeArgs {
    pub fn resolve(self) -> Result<EncodeSettings, CliError> {
        Ok(EncodeSettings {
            capture: required(self.capture, "capture")?,
            out: required(self.out, "out")?,
        })
    }
}

impl SessionArgs {
    pub fn resolve(self) -> Result<SessionSettings, CliError> {
        let recognizer = RecognizerConfig::default();
        let controller = ControllerConfig::default();
        let settings = SessionSettings {
            weights: required(self.weights, "weights")?,
            threshold: self.threshold.unwrap_or(recognizer.confidence_threshold),
            triplication: self.triplication.unwrap_or(recognizer.triplication_n),
            suppress_neutral: self.suppress_neutral.unwrap_or(recognizer.suppress_neutral_events),
            intensity_step: self.intensity_step.unwrap_or(controller.intensity_step),
            initial_intensity: self.initial_intensity.unwrap_or(controller.initial_intensity),
        };
        settings
            .session_config()
            .recognizer
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        if settings.initial_intensity > 100 {
            return Err(CliError::usage("initial intensity must lie in 0..=100"));
        }
        Ok(settings)
    }
}

impl StreamArgs {
    pub fn resolve(self) -> Result<StreamSettings, CliError> {
        Ok(StreamSettings {
            input: self.input.filter(|p| p.as_os_str() != "-"),
            out: self.out,
            action_log: self.action_log,
            session: self.session.resolve()?,
        })
    }
}

impl ServeArgs {
    pub fn resolve(self) -> Result<ServeSettings, CliError> {
        Ok(ServeSettings {
            host: self.host.unwrap_or_else(|| "127.0.0.1".to_string()),
            port: self.port.unwrap_or(DEFAULT_PORT),
            session: self.session.resolve()?,
        })
    }
}

pub fn format_conv(layers: &[ConvSpec]) -> String {
    layers
        .iter()
        .map(|l| format!("{}{}", l.filters, if l.pool_after { "p" } else { "" }))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_conv(spec: &str) -> Result<Vec<ConvSpec>, CliError> {
    spec.split(',')
        .map(|item| {
            let item = item.trim();
            let (digits, pool) = match item.strip_suffix('p') {
                Some(d) => (d, true),
                None => (item, false),
            };
            digits
                .parse()
                .map(|filters| ConvSpec::new(filters, pool))
                .map_err(|_| CliError::usage(format!("bad conv layer {item:?} (expected e.g. 33p or 64)")))
        })
        .collect()
}

pub fn parse_script(script: &str) -> Result<Vec<ScriptItem>, CliError> {
    script
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|token| {
            if token == "hand_lost" {
                return Ok(ScriptItem::HandLost);
            }
            if let Some(ms) = token.strip_prefix("idle:") {
                return ms
                    .parse()
                    .map(ScriptItem::IdleMs)
                    .map_err(|_| CliError::usage(format!("bad idle duration {ms:?}")));
            }
            token
                .parse::<GestureClass>()
                .map(ScriptItem::Gesture)
                .map_err(|e| CliError::usage(format!("script: {e}")))
        })
        .collect()
}

impl TrainSettings {
    pub fn architecture(&self) -> Result<ArchitectureConfig, CliError> {
        let padding = match self.padding.as_str() {
            "valid" => Padding::Valid,
            "same" => Padding::Same,
            other => return Err(CliError::usage(format!("bad padding {other:?} (expected valid or same)"))),
        };
        let arch = ArchitectureConfig {
            conv_layers: parse_conv(&self.conv)?,
            dense_hidden: self.dense,
            l1_lambda: self.l1,
            padding,
            ..ArchitectureConfig::default()
        };
        arch.layout().map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.l1.is_finite() && self.l1 >= 0.0) {
            return Err(CliError::usage("l1 must be finite and non-negative"));
        }
        Ok(arch)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam_beta1: self.beta1,
            adam_beta2: self.beta2,
            adam_epsilon: self.epsilon,
            seed: self.seed,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<CnnModel, CliError> {
    load_weights(path).map_err(|e| match e {
        WeightsError::Io { .. } => CliError::data(e.to_string()),
        other => CliError::data(format!("{}: {other}", path.display())),
    })
}

fn load_samples(dir: &Path) -> Result<Vec<Sample>, CliError> {
    let captures = load_captures(dir).map_err(|e| CliError::data(e.to_string()))?;
    Ok(captures.iter().map(Sample::from_capture).collect())
}

pub fn cmd_gen(s: &GenSettings) -> Result<(), CliError> {
    let synth = SynthConfig {
        jitter_sigma: s.jitter,
        neutral_multiplier: s.neutral_multiplier,
        ..SynthConfig::default()
    };
    if !(s.jitter.is_finite() && s.jitter >= 0.0) {
        return Err(CliError::usage("jitter must be finite and non-negative"));
    }
    if let Some(script) = &s.script {
        if s.speed == 0 {
            return Err(CliError::usage("speed must be at least 1"));
        }
        let items = generate_stream(
            s.seed,
            &parse_script(script)?,
            &StreamOptions {
                speed: s.speed,
                synth,
            },
        );
        write_file(&s.out, stream_to_ndjson(&items).as_bytes())?;
        println!("wrote {} stream items to {}", items.len(), s.out.display());
        return Ok(());
    }
    let captures = generate_dataset_with(s.seed, s.per_class, &synth);
    let written = write_captures(&s.out, &captures).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("wrote {} captures to {}", written.len(), s.out.display());
    Ok(())
}

pub fn cmd_train(s: &TrainSettings) -> Result<(), CliError> {
    let arch = s.architecture()?;
    let cfg = s.train_config();
    if s.epochs > 0 {
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    }
    let train_set = load_samples(&s.data)?;
    if train_set.is_empty() {
        return Err(CliError::data(format!("{}: no captures found", s.data.display())));
    }
    let val_set = match &s.val {
        Some(dir) => load_samples(dir)?,
        None => Vec::new(),
    };
    let model = CnnModel::init(arch, s.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let (model, report) = if s.epochs == 0 {
        (model, Default::default())
    } else {
        train_with_progress(model, &train_set, &val_set, &cfg, |m| {
            eprintln!(
                "epoch {:>4}  train acc {:.4} loss {:.4}  val acc {:.4} loss {:.4}",
                m.epoch, m.train_accuracy, m.train_loss, m.val_accuracy, m.val_loss
            );
        })
        .map_err(|e| match e {
            TrainError::NonFinite { .. } => CliError::runtime(format!("training aborted: {e}")),
            TrainError::EmptyTrainSet => CliError::data(e.to_string()),
            other => CliError::usage(other.to_string()),
        })?
    };
    save_weights(&model, &s.out).map_err(|e| CliError::runtime(e.to_string()))?;
    write_file(&s.metrics, report.to_csv().as_bytes())?;
    match report.epochs.last() {
        Some(last) => println!(
            "trained {} epochs on {} captures: train acc {:.4}, val acc {:.4}",
            report.epochs.len(),
            train_set.len(),
            last.train_accuracy,
            last.val_accuracy
        ),
        None => println!("wrote initialized model"),
    }
    println!("weights: {}\nmetrics: {}", s.out.display(), s.metrics.display());
    Ok(())
}

pub fn confusion_csv(confusion: &[[usize; GestureClass::COUNT]; GestureClass::COUNT]) -> String {
    let mut out = format!("true\\predicted,{}\n", GestureClass::names().join(","));
    for (class, row) in GestureClass::ALL.iter().zip(confusion) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{},{}\n", class.name(), cells.join(",")));
    }
    out
}

pub fn cmd_eval(s: &EvalSettings) -> Result<(), CliError> {
    let model = load_model(&s.weights)?;
    let samples = load_samples(&s.data)?;
    if samples.is_empty() {
        return Err(CliError::data(format!("{}: no captures found", s.data.display())));
    }
    let report = evaluate(&model, &samples).map_err(|e| CliError::runtime(e.to_string()))?;
    let correct: usize = (0..GestureClass::COUNT).map(|i| report.confusion[i][i]).sum();
    println!(
        "accuracy {:.4} ({correct}/{})  loss {:.4}",
        report.accuracy,
        report.total(),
        report.loss
    );
    let labels: Vec<String> = GestureClass::ALL.iter().map(|c| format!("{:>2} {}", c.index(), c.name())).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0);
    let header: String = (0..GestureClass::COUNT).map(|i| format!("{i:>4}")).collect();
    println!("{:<width$}  {header}", "true \\ predicted");
    for (label, row) in labels.iter().zip(&report.confusion) {
        let cells: String = row.iter().map(|c| format!("{c:>4}")).collect();
        println!("{label:<width$}  {cells}");
    }
    if let Some(path) = &s.confusion_csv {
        write_file(path, confusion_csv(&report.confusion).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_encode(s: &EncodeSettings) -> Result<(), CliError> {
    let capture = read_capture(&s.capture).map_err(|e| CliError::data(e.to_string()))?;
    let matrix = MotionMatrix::encode_normalized(capture.frames()).map_err(|e| CliError::data(e.to_string()))?;
    let pgm = matrix.to_pgm().map_err(|e| CliError::runtime(e.to_string()))?;
    write_file(&s.out, &pgm)?;
    println!(
        "{} ({}): max within-block column variance {:.4}",
        s.out.display(),
        capture.label(),
        matrix.max_block_column_variance()
    );
    Ok(())
}

pub fn cmd_stream(s: &StreamSettings) -> Result<(), CliError> {
    let model = load_model(&s.session.weights)?;
    let input: Box<dyn BufRead> = match &s.input {
        Some(path) => Box::new(BufReader::new(
            fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(io::stdin().lock()),
    };
    let source = s.input.as_deref().map_or("<stdin>".into(), |p| p.display().to_string());
    let mut session = Session::new(&model, &s.session.session_config()).map_err(|e| CliError::usage(e.to_string()))?;
    let mut log = vec![session.state_line()];
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| CliError::data(format!("{source}:{}: {e}", i + 1)))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let replies = session
            .handle_line(line)
            .map_err(|e| CliError::data(format!("{source}:{}: {e}", i + 1)))?;
        log.extend(replies);
    }
    let text: String = log.iter().map(|l| format!("{l}\n")).collect();
    match &s.out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::runtime(e.to_string()))?,
    }
    if let Some(path) = &s.action_log {
        write_file(path, session.home().log().to_ndjson().as_bytes())?;
    }
    Ok(())
}

pub fn cmd_serve(s: &ServeSettings) -> Result<(), CliError> {
    let model = Arc::new(load_model(&s.session.weights)?);
    let config = s.session.session_config();
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((s.host.as_str(), s.port))
            .await
            .map_err(|e| CliError::runtime(format!("cannot bind {}:{}: {e}", s.host, s.port)))?;
        let addr = listener.local_addr().map_err(|e| CliError::runtime(e.to_string()))?;
        eprintln!("listening on {addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            eprintln!("shutting down");
        };
        serve(listener, model, config, shutdown)
            .await
            .map_err(|e| CliError::runtime(e.to_string()))
    })
}

/// Resolve flags against the config file, echo the effective settings and
/// run the subcommand.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(config::load).transpose()?;
    let file = file.as_ref();
    match cli.command {
        Command::Gen(a) => {
            let s = config::merge("gen", &a, file)?.resolve()?;
            config::echo("gen", &s);
            cmd_gen(&s)
        }
        Command::Train(a) => {
            let s = config::merge("train", &a, file)?.resolve()?;
            config::echo("train", &s);
            cmd_train(&s)
        }
        Command::Eval(a) => {
            let s = config::merge("eval", &a, file)?.resolve()?;
            config::echo("eval", &s);
            cmd_eval(&s)
        }
        Command::Encode(a) => {
            let s = config::merge("encode", &a, file)?.resolve()?;
            config::echo("encode", &s);
            cmd_encode(&s)
        }
        Command::Stream(a) => {
            let s = config::merge("stream", &a, file)?.resolve()?;
            config::echo("stream", &s);
            cmd_stream(&s)
        }
        Command::Serve(a) => {
            let s = config::merge("serve", &a, file)?.resolve()?;
            config::echo("serve", &s);
            cmd_serve(&s)
        }
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
