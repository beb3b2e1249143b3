//! `synthvox` command-line tool: generate a corpus, featurize, augment,
//! build sampled voices, generate transcripts, train, evaluate, report.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use synthvox::augment::MtrConfig;
use synthvox::dvector::{OptimizerConfig, TrainConfig};
use synthvox::manifest::write_json;
use synthvox::pipeline::{self, BuildVoicesArgs, EvaluateArgs, TrainArgs, TranscriptArgs};
use synthvox::recipes::SourceSpec;
use synthvox::transcripts::Condition;
use synthvox::voices::VoiceBuildConfig;
use synthvox::world::WorldConfig;
use synthvox::{Error, Result};

use config::{merge, required};

#[derive(Parser)]
#[command(name = "synthvox", version, about = "Speaker-verification augmentation with synthesized voices")]
struct Cli {
    /// JSON file with the subcommand's settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated desk-scale world (recordings, noise, RIRs, TTS tables).
    GenCorpus(GenCorpusCmd),
    /// Log-Mel features with VAD and frame stacking for every utterance.
    Featurize(FeaturizeCmd),
    /// MTR copies (reverb and additive noise) of every utterance.
    Augment(AugmentCmd),
    /// Sample voices from per-pool GMMs, select distinct ones, synthesize.
    BuildVoices(BuildVoicesCmd),
    /// Transcripts for one of the six text conditions.
    GenTranscripts(GenTranscriptsCmd),
    /// MultiReader GE2E training of a recipe.
    Train(TrainCmd),
    /// EER of a checkpoint on enrollment and test manifests.
    Evaluate(EvaluateCmd),
    /// Table over EER reports.
    Report(ReportCmd),
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GenCorpusCmd {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the world config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    close_match_queries: Option<usize>,
    #[arg(skip)]
    world: Option<WorldConfig>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FeaturizeCmd {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct AugmentCmd {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Noise-corpus manifest (JSON Lines).
    #[arg(long)]
    noise: Option<PathBuf>,
    /// JSON list of impulse responses; no reverb without it.
    #[arg(long)]
    rirs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long)]
    snr_low_db: Option<f64>,
    #[arg(long)]
    snr_high_db: Option<f64>,
    #[arg(long)]
    reverb_probability: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct BuildVoicesCmd {
    /// `DIM=PATH` embedding table, repeatable.
    #[arg(long = "embeddings")]
    embeddings: Vec<String>,
    /// Frozen selection model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Synthesizer backend JSON.
    #[arg(long)]
    backend: Option<PathBuf>,
    /// Probe transcripts, one per line.
    #[arg(long)]
    probes: Option<PathBuf>,
    /// Text for the synthesized corpus (defaults to the probes).
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Real recordings, for the similarity report.
    #[arg(long)]
    real_manifest: Option<PathBuf>,
    /// Pool dimensions in search order.
    #[arg(long, value_delimiter = ',')]
    pools: Vec<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    sampling_ratio: Option<usize>,
    #[arg(long)]
    probe_utterances: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Calibrate the threshold as this quantile of real-speaker cosines.
    #[arg(long)]
    threshold_quantile: Option<f64>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    utterances_per_voice: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GenTranscriptsCmd {
    /// random-digits, random-words-100, random-words-full, close-match,
    /// exact-match or exact-match-shuffled.
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Transcript file; the vocabulary report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainCmd {
    /// Named recipe (Baseline, TTS-Real, TTS-Sampled, ...).
    #[arg(long)]
    recipe: Option<String>,
    /// Manifests whose records the recipe selects from, repeatable.
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training log, one `step loss wall_ms` line per step.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    speakers_per_batch: Option<usize>,
    #[arg(long)]
    utterances_per_speaker: Option<usize>,
    #[arg(long)]
    segment_frames: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// MultiReader weights, one per source.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Custom sources instead of a named recipe (config file only).
    #[arg(skip)]
    sources: Option<Vec<SourceSpec>>,
    /// Full training config (config file only); flags override its fields.
    #[arg(skip)]
    train: Option<TrainConfig>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvaluateCmd {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    enroll: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Stored trial list; otherwise every (speaker, test utterance) pair,
    /// or a sample of them with --n-target/--n-nontarget.
    #[arg(long)]
    trials: Option<PathBuf>,
    #[arg(long)]
    n_target: Option<usize>,
    #[arg(long)]
    n_nontarget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recipe name recorded in the report.
    #[arg(long)]
    recipe: Option<String>,
    #[arg(long)]
    with_mtr: Option<bool>,
    /// EER report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scored trial list.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ReportCmd {
    /// EER report files, in table order.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Markdown output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn gen_corpus(c: GenCorpusCmd) -> Result<()> {
    let mut world = c.world.unwrap_or_default();
    if let Some(s) = c.seed {
        world.seed = s;
    }
    let summary = pipeline::gen_corpus(&world, c.close_match_queries.unwrap_or(2000), &required(&c.out, "out")?)?;
    print_json(&summary)
}

fn featurize(c: FeaturizeCmd) -> Result<()> {
    let summary = pipeline::featurize_manifest(&required(&c.manifest, "manifest")?, &required(&c.out, "out")?)?;
    for id in &summary.skipped {
        eprintln!("skipped {id}: too little speech");
    }
    for (id, e) in &summary.failed {
        eprintln!("failed {id}: {e}");
    }
    print_json(&summary)?;
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Format(format!("{} utterances could not be read", summary.failed.len())))
    }
}

fn augment(c: AugmentCmd) -> Result<()> {
    let d = MtrConfig::default();
    let cfg = MtrConfig {
        snr_low_db: c.snr_low_db.unwrap_or(d.snr_low_db),
        snr_high_db: c.snr_high_db.unwrap_or(d.snr_high_db),
        copies_per_utterance: c.copies.unwrap_or(d.copies_per_utterance),
        reverb_probability: c.reverb_probability.unwrap_or(d.reverb_probability),
        seed: required(&c.seed, "seed")?,
    };
    let n = pipeline::augment_manifest(
        &required(&c.manifest, "manifest")?,
        &required(&c.noise, "noise")?,
        c.rirs.as_deref(),
        &cfg,
        &required(&c.out, "out")?,
    )?;
    println!("{n}");
    Ok(())
}

fn parse_tables(v: &[String]) -> Result<Vec<(usize, PathBuf)>> {
    if v.is_empty() {
        return Err(Error::Config("at least one --embeddings DIM=PATH is required".into()));
    }
    v.iter()
        .map(|s| {
            let (d, p) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("'{s}' is not DIM=PATH")))?;
            let d = d.parse().map_err(|_| Error::Config(format!("bad dimension in '{s}'")))?;
            Ok((d, PathBuf::from(p)))
        })
        .collect()
}

fn build_voices(c: BuildVoicesCmd) -> Result<()> {
    let d = VoiceBuildConfig::default();
    let voices = VoiceBuildConfig {
        pools: if c.pools.is_empty() { d.pools } else { c.pools.clone() },
        budget: c.budget.unwrap_or(d.budget),
        sampling_ratio: c.sampling_ratio.unwrap_or(d.sampling_ratio),
        probe_utterances: c.probe_utterances.unwrap_or(d.probe_utterances),
        threshold: c.threshold.unwrap_or(d.threshold),
        components: c.components.unwrap_or(d.components),
    };
    let report = pipeline::build_voices_cmd(&BuildVoicesArgs {
        embeddings: parse_tables(&c.embeddings)?,
        model: required(&c.model, "model")?,
        backend: required(&c.backend, "backend")?,
        probes: required(&c.probes, "probes")?,
        transcripts: c.transcripts,
        real_manifest: c.real_manifest,
        voices,
        threshold_quantile: c.threshold_quantile,
        utterances_per_voice: c.utterances_per_voice.unwrap_or(40),
        seed: required(&c.seed, "seed")?,
        out: required(&c.out, "out")?,
    })?;
    print_json(&report)
}

fn gen_transcripts(c: GenTranscriptsCmd) -> Result<()> {
    let (set, report) = pipeline::gen_transcripts_cmd(&TranscriptArgs {
        condition: Condition::parse(&required(&c.condition, "condition")?)?,
        n: c.n,
        lexicon: c.lexicon,
        corpus: c.corpus,
        seed: c.seed.unwrap_or(0),
    })?;
    set.save(required(&c.out, "out")?)?;
    print_json(&report)
}

fn train(c: TrainCmd) -> Result<()> {
    let mut t = c.train.clone().unwrap_or_default();
    if let Some(v) = c.steps {
        t.steps = v;
    }
    if let Some(v) = c.speakers_per_batch {
        t.speakers_per_batch = v;
    }
    if let Some(v) = c.utterances_per_speaker {
        t.utterances_per_speaker = v;
    }
    if let Some(v) = c.segment_frames {
        t.segment_frames = v;
    }
    if let Some(v) = c.learning_rate {
        t.optimizer = OptimizerConfig {
            learning_rate: v,
            ..t.optimizer
        };
    }
    if !c.weights.is_empty() {
        t.weights = Some(c.weights.clone());
    }
    if c.manifests.is_empty() {
        return Err(Error::Config("at least one --manifest is required".into()));
    }
    let seed = required(&c.seed, "seed")?;
    let out = required(&c.out, "out")?;
    pipeline::train_cmd(&TrainArgs {
        manifests: c.manifests,
        sources: pipeline::recipe_of(c.recipe.as_deref(), c.sources)?,
        train: t,
        seed,
        out: out.clone(),
        log: c.log,
    })?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn evaluate(c: EvaluateCmd) -> Result<()> {
    let report = pipeline::evaluate_cmd(&EvaluateArgs {
        model: required(&c.model, "model")?,
        enroll: required(&c.enroll, "enroll")?,
        test: required(&c.test, "test")?,
        trials: c.trials,
        n_target: c.n_target,
        n_nontarget: c.n_nontarget,
        seed: c.seed.unwrap_or(0),
        recipe: c.recipe,
        with_mtr: c.with_mtr,
        scores_out: c.scores,
    })?;
    if let Some(p) = &c.out {
        write_json(p, &report)?;
    }
    print_json(&report)
}

fn report(c: ReportCmd) -> Result<()> {
    if c.inputs.is_empty() {
        return Err(Error::Config("at least one --input report is required".into()));
    }
    let reports = pipeline::load_reports(&c.inputs)?;
    let table = pipeline::report_table(&reports);
    match &c.out {
        Some(p) => std::fs::write(p, &table).map_err(|e| Error::Format(format!("{}: {e}", p.display()))),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::GenCorpus(c) => gen_corpus(merge(&c, cfg)?),
        Command::Featurize(c) => featurize(merge(&c, cfg)?),
        Command::Augment(c) => augment(merge(&c, cfg)?),
        Command::BuildVoices(c) => build_voices(merge(&c, cfg)?),
        Command::GenTranscripts(c) => gen_transcripts(merge(&c, cfg)?),
        Command::Train(c) => train(merge(&c, cfg)?),
        Command::Evaluate(c) => evaluate(merge(&c, cfg)?),
        Command::Report(c) => report(merge(&c, cfg)?),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_data_error() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
