//! `litta`: synthetic benchmark generation, language-model training,
//! decoding, test-time adaptation, and evaluation from one binary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use litta_core::adapt::{
    adapt_manifest_with_threads, read_traces, write_traces, AdaptConfig, Method,
};
use litta_core::corrector::{CorrectorKind, CorrectorSpec};
use litta_core::ctc::greedy_decode;
use litta_core::data::{
    apply_shift, fit_source_head, gen_benchmark, read_alignments, read_manifest, write_alignments,
    write_manifest, GenParams, ShiftConfig, ShiftKind,
};
use litta_core::decoder::{beam_search, DecodeConfig, DecodeMode};
use litta_core::eval::{ppl_curve, ppl_curve_csv};
use litta_core::experiment::{load_config_file, report_from_trace_dir, run_experiment, ExperimentConfig};
use litta_core::head::AdaptableHead;
use litta_core::ngram::NGramLM;
use litta_core::vocab::Vocab;

#[derive(Parser)]
#[command(name = "litta", version, about = "Language-informed test-time adaptation for CTC recognizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic benchmark data
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Source-head fitting
    #[command(subcommand)]
    Head(HeadCommand),
    /// N-gram language models
    #[command(subcommand)]
    Lm(LmCommand),
    /// Decode a manifest with a head (greedy or LM-fused beam search)
    Decode(DecodeArgs),
    /// Per-utterance test-time adaptation
    Adapt(AdaptArgs),
    /// Reports and curves from trace files
    #[command(subcommand)]
    Eval(EvalCommand),
    /// End-to-end experiment runs
    #[command(subcommand)]
    Run(RunCommand),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Generate a manifest (and its forced alignment) from a sentence corpus
    Gen(BenchGenArgs),
    /// Apply a synthetic domain shift to a manifest
    Shift(BenchShiftArgs),
}

#[derive(Args)]
struct BenchGenArgs {
    /// Sentence corpus, one per line
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory (receives manifest.jsonl and alignment.jsonl)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Feature dimension D
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Emission noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 2)]
    min_dur: usize,
    #[arg(long, default_value_t = 5)]
    max_dur: usize,
}

#[derive(Args)]
struct BenchShiftArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// additive_noise | channel_scale | confusion_drift
    #[arg(long)]
    kind: String,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum HeadCommand {
    /// Fit the affine source head by ridge regression
    Fit(HeadFitArgs),
}

#[derive(Args)]
struct HeadFitArgs {
    /// Generated manifest (manifest.jsonl)
    #[arg(long)]
    data: PathBuf,
    /// Forced alignment file; defaults to alignment.jsonl next to the manifest
    #[arg(long)]
    alignment: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LmCommand {
    /// Train a character n-gram model with add-k smoothing
    Train(LmTrainArgs),
    /// Score a text's perplexity under a model
    Ppl(LmPplArgs),
}

#[derive(Args)]
struct LmTrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    add_k: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LmPplArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    head: PathBuf,
    /// greedy | beam
    #[arg(long, default_value = "beam")]
    mode: String,
    #[arg(long, default_value_t = 8)]
    beam_width: usize,
    /// Language model for shallow fusion (required in beam mode)
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    head: PathBuf,
    /// none | em | sgem | litta
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Adaptation config (TOML or JSON, AdaptConfig fields)
    #[arg(long)]
    config: Option<PathBuf>,
    /// identity | lexicon | http (overrides the config's corrector kind)
    #[arg(long)]
    corrector: Option<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Language model for per-step perplexity; defaults to a model trained
    /// on the bundled head partition
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write final-state logits as <out>.logits.jsonl
    #[arg(long)]
    dump_logits: bool,
    /// Episode worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Aggregate `<condition>__<method>.jsonl` traces into a report
    Report(EvalReportArgs),
    /// Mean perplexity per adaptation step
    PplCurve(EvalPplCurveArgs),
}

#[derive(Args)]
struct EvalReportArgs {
    /// Directory of trace files
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalPplCurveArgs {
    /// One trace file
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum RunCommand {
    /// Generate, shift, fit, adapt with every method, and report
    Experiment(RunExperimentArgs),
}

#[derive(Args)]
struct RunExperimentArgs {
    /// Experiment config (TOML or JSON); omit for the bundled defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    let lines: Vec<String> = raw
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() {
        bail!("corpus {} has no sentences", path.display());
    }
    Ok(lines)
}

fn load_manifest(path: &Path, vocab: &Vocab) -> Result<litta_core::data::DatasetManifest> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("manifest")
        .to_string();
    Ok(read_manifest(name, BufReader::new(file), vocab)?)
}

fn load_head(path: &Path) -> Result<AdaptableHead> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(AdaptableHead::load(BufReader::new(file))?)
}

fn load_lm(path: &Path, vocab: &Vocab) -> Result<NGramLM> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(NGramLM::load(BufReader::new(file), vocab)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let vocab = Vocab::default_char_vocab();
    match cli.command {
        Command::Bench(BenchCommand::Gen(args)) => bench_gen(args, &vocab),
        Command::Bench(BenchCommand::Shift(args)) => bench_shift(args, &vocab),
        Command::Head(HeadCommand::Fit(args)) => head_fit(args, &vocab),
        Command::Lm(LmCommand::Train(args)) => lm_train(args, &vocab),
        Command::Lm(LmCommand::Ppl(args)) => lm_ppl(args, &vocab),
        Command::Decode(args) => decode(args, &vocab),
        Command::Adapt(args) => adapt(args, &vocab),
        Command::Eval(EvalCommand::Report(args)) => eval_report(args),
        Command::Eval(EvalCommand::PplCurve(args)) => eval_ppl_curve(args),
        Command::Run(RunCommand::Experiment(args)) => run_experiment_cmd(args),
    }
}

fn bench_gen(args: BenchGenArgs, vocab: &Vocab) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let params = GenParams {
        embed_dim: args.dim,
        min_duration: args.min_dur,
        max_duration: args.max_dur,
        emission_sigma: args.sigma,
        seed: args.seed,
    };
    let dataset = gen_benchmark(&corpus, vocab, &params)?;
    std::fs::create_dir_all(&args.out)?;
    let manifest_path = args.out.join("manifest.jsonl");
    write_manifest(
        &dataset.manifest,
        BufWriter::new(File::create(&manifest_path)?),
    )?;
    write_alignments(
        &dataset,
        BufWriter::new(File::create(args.out.join("alignment.jsonl"))?),
    )?;
    println!(
        "wrote {} utterances to {}",
        dataset.manifest.len(),
        manifest_path.display()
    );
    Ok(())
}

fn bench_shift(args: BenchShiftArgs, vocab: &Vocab) -> Result<()> {
    let kind = match args.kind.as_str() {
        "additive_noise" => ShiftKind::AdditiveNoise {
            snr_db: args.snr_db.context("additive_noise needs --snr-db")?,
        },
        "channel_scale" => ShiftKind::ChannelScale {
            scale: args.scale.context("channel_scale needs --scale")?,
        },
        "confusion_drift" => ShiftKind::ConfusionDrift {
            drift_fraction: args.drift.context("confusion_drift needs --drift")?,
        },
        other => bail!("unknown shift kind {other:?}"),
    };
    let manifest = load_manifest(&args.input, vocab)?;
    let shifted = apply_shift(&manifest, &ShiftConfig { kind, seed: args.seed })?;
    write_manifest(&shifted, BufWriter::new(File::create(&args.out)?))?;
    println!("wrote {} shifted utterances to {}", shifted.len(), args.out.display());
    Ok(())
}

fn head_fit(args: HeadFitArgs, vocab: &Vocab) -> Result<()> {
    let manifest = load_manifest(&args.data, vocab)?;
    let alignment_path = args.alignment.unwrap_or_else(|| {
        args.data
            .parent()
            .unwrap_or(Path::new("."))
            .join("alignment.jsonl")
    });
    let file = File::open(&alignment_path)
        .with_context(|| format!("opening alignment {}", alignment_path.display()))?;
    let alignments = read_alignments(BufReader::new(file), &manifest)?;
    let head = fit_source_head(&manifest, vocab, &alignments, args.ridge)?;
    head.save(BufWriter::new(File::create(&args.out)?))?;
    println!("wrote head to {}", args.out.display());
    Ok(())
}

fn lm_train(args: LmTrainArgs, vocab: &Vocab) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let lm = NGramLM::train(&corpus, args.n, args.add_k, vocab)?;
    lm.save(BufWriter::new(File::create(&args.out)?))?;
    println!("wrote {}-gram model to {}", args.n, args.out.display());
    Ok(())
}

fn lm_ppl(args: LmPplArgs, vocab: &Vocab) -> Result<()> {
    let lm = load_lm(&args.model, vocab)?;
    println!("{}", lm.perplexity(&args.text)?);
    Ok(())
}

fn decode(args: DecodeArgs, vocab: &Vocab) -> Result<()> {
    let manifest = load_manifest(&args.manifest, vocab)?;
    let head = load_head(&args.head)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    match args.mode.as_str() {
        "greedy" => {
            for utt in &manifest.utterances {
                let logits = head.logits(&utt.frames)?;
                let text = greedy_decode(&logits);
                let record = serde_json::json!({
                    "id": utt.id,
                    "text": text.as_str(),
                    "am": serde_json::Value::Null,
                    "lm": serde_json::Value::Null,
                    "score": serde_json::Value::Null,
                });
                writeln!(out, "{record}")?;
            }
        }
        "beam" => {
            let lm_path = args.lm.context("beam mode needs --lm")?;
            let lm = load_lm(&lm_path, vocab)?;
            let cfg = DecodeConfig {
                beam_width: args.beam_width,
                lambda: args.lambda,
                mode: DecodeMode::Beam,
            };
            for utt in &manifest.utterances {
                let logits = head.logits(&utt.frames)?;
                let hyps = beam_search(&logits, &lm, &cfg)?;
                let top = hyps.first();
                let record = serde_json::json!({
                    "id": utt.id,
                    "text": top.map(|h| h.text.as_str().to_string()).unwrap_or_default(),
                    "am": top.map(|h| h.am_logprob),
                    "lm": top.map(|h| h.lm_logprob),
                    "score": top.map(|h| h.fused_score),
                });
                writeln!(out, "{record}")?;
            }
        }
        other => bail!("unknown decode mode {other:?} (use greedy or beam)"),
    }
    println!("wrote hypotheses to {}", args.out.display());
    Ok(())
}

fn adapt(args: AdaptArgs, vocab: &Vocab) -> Result<()> {
    let manifest = load_manifest(&args.manifest, vocab)?;
    let head = load_head(&args.head)?;
    let mut cfg: AdaptConfig = match &args.config {
        Some(path) => load_config_file(path)?,
        None => AdaptConfig::default(),
    };
    cfg.method = args.method;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = &args.corrector {
        cfg.corrector.kind = match kind.as_str() {
            "identity" => CorrectorKind::Identity,
            "lexicon" => CorrectorKind::Lexicon,
            "http" => CorrectorKind::Http,
            other => bail!("unknown corrector {other:?}"),
        };
    }
    if let Some(lexicon) = &args.lexicon {
        cfg.corrector.lexicon_path = Some(lexicon.clone());
    }
    if cfg.corrector.kind == CorrectorKind::Http && cfg.corrector.endpoint_url.is_none() {
        let env_spec = CorrectorSpec::http_from_env()?;
        cfg.corrector.endpoint_url = env_spec.endpoint_url;
        if cfg.corrector.model_name.is_none() {
            cfg.corrector.model_name = env_spec.model_name;
        }
        if cfg.corrector.api_key.is_none() {
            cfg.corrector.api_key = env_spec.api_key;
        }
    }
    let lm = match &args.lm {
        Some(path) => load_lm(path, vocab)?,
        None => {
            let sentences = litta_core::corpus::bundled_sentences();
            let parts = litta_core::corpus::partition(&sentences);
            NGramLM::train(&parts.head, 4, 0.01, vocab)?
        }
    };
    let threads = if args.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        args.threads
    };
    let traces = adapt_manifest_with_threads(&head, &manifest, &cfg, &lm, threads)?;
    write_traces(&traces, BufWriter::new(File::create(&args.out)?))?;
    if args.dump_logits {
        let logits_path = PathBuf::from(format!("{}.logits.jsonl", args.out.display()));
        let mut writer = BufWriter::new(File::create(&logits_path)?);
        for (utt, trace) in manifest.utterances.iter().zip(&traces) {
            if let Some(final_head) = &trace.final_head {
                let logits = final_head.logits(&utt.frames)?;
                let record = serde_json::json!({
                    "id": utt.id,
                    "frames": logits.rows(),
                    "ref": serde_json::Value::Null,
                });
                writeln!(writer, "{record}")?;
            }
        }
        println!("wrote final logits to {}", logits_path.display());
    }
    let aborted = traces.iter().filter(|t| t.aborted.is_some()).count();
    println!(
        "adapted {} utterances ({} aborted) -> {}",
        traces.len(),
        aborted,
        args.out.display()
    );
    Ok(())
}

fn eval_report(args: EvalReportArgs) -> Result<()> {
    let report = report_from_trace_dir(&args.traces)?;
    std::fs::write(&args.out, report.to_csv())?;
    print!("{}", report.to_table());
    println!("wrote report to {}", args.out.display());
    Ok(())
}

fn eval_ppl_curve(args: EvalPplCurveArgs) -> Result<()> {
    let file = File::open(&args.traces)
        .with_context(|| format!("opening {}", args.traces.display()))?;
    let traces = read_traces(BufReader::new(file))?;
    let curve = ppl_curve(&traces)?;
    std::fs::write(&args.out, ppl_curve_csv(&curve))?;
    println!("wrote curve to {}", args.out.display());
    Ok(())
}

fn run_experiment_cmd(args: RunExperimentArgs) -> Result<()> {
    let cfg: ExperimentConfig = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ExperimentConfig::default(),
    };
    let summary = run_experiment(&cfg, Some(&args.out), |line| println!("{line}"))?;
    println!(
        "experiment {:?} finished over {} seeds -> {}",
        summary.name,
        summary.seeds.len(),
        args.out.display()
    );
    Ok(())
}
