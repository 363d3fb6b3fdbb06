//! Command-line front end: training, evaluation, prediction, sentence
//! embedding, corpus statistics, gradient checking, dropout sweeps and
//! prediction timing.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tbcnn::data::{labelled_pairs, raw_trees, read_records_path, to_examples, Record};
use tbcnn::gradcheck::{gradient_check, GradCheckReport, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use tbcnn::synth::gradcheck_instance;
use tbcnn::timing::timing_report;
use tbcnn::trainer::{evaluate_par, EpochRecord};
use tbcnn::{
    build_vocab, evaluate, load_embeddings, load_model, save_model, train, tree_stats, ClassifierInit, ContractError,
    CorpusStats, DataError, EmbeddingTable, HeuristicSet, ModelFileError, ModelParams, PairExample, TrainConfig,
    TrainError, Vocab,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "tbcnn", version, about = "Tree-based convolutional sentence-pair classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with a JSON-lines metrics log.
    Train(TrainArgs),
    /// Accuracy, confusion matrix and mean loss on labelled data.
    Eval(EvalArgs),
    /// One JSON object per input pair: label and class probabilities.
    Predict(PredictArgs),
    /// Sentence vectors for every premise and hypothesis.
    Embed(ModelDataArgs),
    /// Tree size and depth statistics of a corpus.
    Stats(StatsArgs),
    /// Finite-difference check of the analytic gradients on random instances.
    Gradcheck(GradcheckArgs),
    /// Validation accuracy for dropout rates 0.0 to 0.9.
    Sweep(SweepArgs),
    /// Split of prediction time between encoding and matching.
    Timing(ModelDataArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Hyper {
    #[arg(long, default_value_t = 300)]
    pub dim_embed: usize,
    #[arg(long, default_value_t = 300)]
    pub dim_conv: usize,
    #[arg(long, default_value_t = 300)]
    pub dim_hidden: usize,
    #[arg(long, default_value_t = HeuristicSet::ALL)]
    pub heuristics: HeuristicSet,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 3e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub decay_power: f64,
    #[arg(long, default_value_t = 50)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 2)]
    pub min_rel_freq: usize,
}

impl Hyper {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            dim_embed: self.dim_embed,
            dim_conv: self.dim_conv,
            dim_hidden: self.dim_hidden,
            batch_size: self.batch,
            lr0: self.lr,
            decay_power: self.decay_power,
            l2: self.l2,
            dropout: self.dropout,
            epochs: self.epochs,
            seed: self.seed,
            heuristics: self.heuristics,
            min_relation_freq: self.min_rel_freq,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Pretrained vectors, `word v1 .. vN` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics log path; stdout when absent.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include the matching vector `m` in every output line.
    #[arg(long)]
    pub debug_m: bool,
}

#[derive(Debug, Args)]
pub struct ModelDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Width of every layer.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = HeuristicSet::ALL)]
    pub heuristics: HeuristicSet,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Verify(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Self {
        Failure::Data(format!("{e} (code {})", e.code()))
    }
}

impl From<ContractError> for Failure {
    fn from(e: ContractError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn read_data(path: &Path) -> Result<Vec<Record>, Failure> {
    read_records_path(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn json_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn sink<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

/// Vocabulary, initial model and example sets for a training run.
pub struct Prepared {
    pub model: ModelParams,
    pub train: Vec<PairExample>,
    pub valid: Vec<PairExample>,
}

pub fn prepare(
    data: &Path,
    valid: Option<&Path>,
    embeddings: Option<&Path>,
    config: &TrainConfig,
) -> Result<Prepared, Failure> {
    config.validate()?;
    let records = read_data(data)?;
    let pairs = labelled_pairs(&records)?;
    let vocab: Vocab = build_vocab(&pairs, config.min_relation_freq).ok_or(Failure::Data("no labelled pairs".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let emb = match embeddings {
        Some(p) => load_embeddings(p, &vocab, config.dim_embed, config.seed)?,
        None => EmbeddingTable::random(vocab.num_words(), config.dim_embed, &mut rng),
    };
    let model = ModelParams::new(
        vocab,
        emb,
        config.dim_conv,
        config.dim_hidden,
        config.heuristics,
        ClassifierInit::Zero,
        &mut rng,
    )?;
    let train = to_examples(&records, &model.vocab)?;
    let valid = match valid {
        Some(p) => to_examples(&read_data(p)?, &model.vocab)?,
        None => Vec::new(),
    };
    Ok(Prepared { model, train, valid })
}

fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let config = args.hyper.config();
    let prep = prepare(&args.data, args.valid.as_deref(), args.embeddings.as_deref(), &config)?;
    let mut log = sink(args.metrics.as_deref(), stdout)?;
    let mut log_err = None;
    let outcome = train(prep.model, &prep.train, &prep.valid, &config, |r: &EpochRecord| {
        if log_err.is_none() {
            log_err = json_line(&mut *log, r).and_then(|_| Ok(log.flush()?)).err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let mut model = outcome.best.map_or(outcome.model, |b| b.model);
    model.quantize_f32();
    save_model(&model, &args.out)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let data = to_examples(&read_data(&args.data)?, &model.vocab)?;
    let ev = if args.threads > 1 {
        let pool = rayon_pool(args.threads)?;
        pool.install(|| evaluate_par(&model, &data))?
    } else {
        evaluate(&model, &data)?
    };
    json_line(stdout, &ev)
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))
}

#[derive(Serialize)]
struct PredictLine<'a> {
    line: usize,
    label: &'static str,
    probs: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<&'a [f64]>,
}

fn cmd_predict(args: &PredictArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let records = read_data(&args.data)?;
    let mut out = sink(args.out.as_deref(), stdout)?;
    for rec in &records {
        let (p, h) = raw_trees(&rec.pair, &model.vocab, rec.line)?;
        let pred = model.predict_trees(&p, &h)?;
        let line = PredictLine {
            line: rec.line,
            label: pred.label.as_str(),
            probs: &pred.probs,
            m: args.debug_m.then_some(pred.m.as_slice()),
        };
        json_line(&mut *out, &line)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EmbedLine {
    line: usize,
    premise: Vec<f64>,
    hypothesis: Vec<f64>,
}

fn cmd_embed(args: &ModelDataArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let records = read_data(&args.data)?;
    let mut out = sink(args.out.as_deref(), stdout)?;
    for rec in &records {
        let (p, h) = raw_trees(&rec.pair, &model.vocab, rec.line)?;
        let line = EmbedLine {
            line: rec.line,
            premise: model.encode(&p)?.0,
            hypothesis: model.encode(&h)?.0,
        };
        json_line(&mut *out, &line)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub premise: CorpusStats,
    pub hypothesis: CorpusStats,
    pub all: CorpusStats,
}

fn cmd_stats(args: &StatsArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let records = read_data(&args.data)?;
    let vocab = Vocab::new();
    let mut premises = Vec::with_capacity(records.len());
    let mut hypotheses = Vec::with_capacity(records.len());
    for rec in &records {
        let (p, h) = raw_trees(&rec.pair, &vocab, rec.line)?;
        premises.push(p);
        hypotheses.push(h);
    }
    let empty = || Failure::Data("no records".into());
    let report = StatsReport {
        premise: tree_stats(&premises).ok_or_else(empty)?,
        hypothesis: tree_stats(&hypotheses).ok_or_else(empty)?,
        all: tree_stats(premises.iter().chain(&hypotheses)).ok_or_else(empty)?,
    };
    json_line(stdout, &report)
}

/// Merged report over `instances` random models seeded `seed, seed+1, ..`.
pub fn run_gradcheck(args: &GradcheckArgs) -> Result<GradCheckReport, Failure> {
    if args.dim == 0 || args.instances == 0 {
        return Err(Failure::Usage("--dim and --instances must be positive".into()));
    }
    let mut report = GradCheckReport::default();
    for i in 0..args.instances as u64 {
        let (model, ex) = gradcheck_instance(args.dim, args.heuristics, args.seed.wrapping_add(i));
        report = report.merge(gradient_check(&model, &ex, args.epsilon)?);
    }
    Ok(report)
}

fn cmd_gradcheck(args: &GradcheckArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let report = run_gradcheck(args)?;
    let worst = report.worst.as_ref().map_or("-".to_owned(), |(t, i)| format!("{t}[{i}]"));
    if report.passes(args.tolerance) {
        writeln!(
            stdout,
            "max_rel_err < {:e}: {:.3e} at {worst} over {} coordinates, {} kink-adjacent excluded",
            args.tolerance, report.max_rel_err, report.checked, report.excluded_kinks
        )?;
        Ok(())
    } else {
        Err(Failure::Verify(format!(
            "max_rel_err {:.3e} >= {:e} at {worst}",
            report.max_rel_err, args.tolerance
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub dropout: f64,
    pub valid_acc: f64,
    pub best_epoch: usize,
}

/// Dropout rates 0.0, 0.1, .., 0.9.
pub fn sweep_rates() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let base = args.hyper.config();
    let prep = prepare(&args.data, Some(&args.valid), args.embeddings.as_deref(), &base)?;
    if prep.valid.is_empty() {
        return Err(Failure::Data("validation set has no labelled pairs".into()));
    }
    for dropout in sweep_rates() {
        let config = TrainConfig { dropout, ..base.clone() };
        let outcome = train(prep.model.clone(), &prep.train, &prep.valid, &config, |_| {})?;
        let best = outcome.best.expect("validation set is non-empty");
        json_line(
            stdout,
            &SweepRow {
                dropout,
                valid_acc: best.valid_acc,
                best_epoch: best.epoch,
            },
        )?;
    }
    Ok(())
}

fn cmd_timing(args: &ModelDataArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let records = read_data(&args.data)?;
    let mut data = Vec::with_capacity(records.len());
    for rec in &records {
        let (premise, hypothesis) = raw_trees(&rec.pair, &model.vocab, rec.line)?;
        data.push(PairExample {
            premise,
            hypothesis,
            label: tbcnn::Label::Entailment,
        });
    }
    let report = timing_report(&model, &data)?;
    if report.below_stable_size {
        writeln!(
            stderr,
            "warning: {} pairs is below the {} needed for a stable measurement",
            report.examples,
            tbcnn::timing::MIN_STABLE_EXAMPLES
        )?;
    }
    let mut out = sink(args.out.as_deref(), stdout)?;
    json_line(&mut *out, &report)?;
    out.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Embed(a) => cmd_embed(a, stdout),
        Command::Stats(a) => cmd_stats(a, stdout),
        Command::Gradcheck(a) => cmd_gradcheck(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Timing(a) => cmd_timing(a, stdout, stderr),
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "{f}");
            f.code()
        }
    }
}
