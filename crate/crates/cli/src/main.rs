use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hrctc_core::decode::{decode_posteriorgram, write_hypotheses, Posteriorgram};
use hrctc_core::frontend::{
    read_features, read_labels, synth_generate, write_features, write_labels, SynthConfig, SynthTask,
};
use hrctc_core::numerics::DEFAULT_EPS;
use hrctc_core::train::{
    build_examples, compare_heads, evaluate, infer_num_labels, read_config_pairs, split_validation,
    Checkpoint, Example, TrainConfig, Trainer,
};
use hrctc_core::verify::{ctc_oracle_suite, model_gradcheck};
use hrctc_core::{HeadKind, LabelSequence, TokenTable};

#[derive(Parser)]
#[command(name = "hrctc", version, about = "LSTM-CTC acoustic models with high-rank projection heads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, labels, token table).
    Synth(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Train every head with several seeds and print a TER table.
    Compare(CompareArgs),
    /// Decode and score a labelled set.
    Eval(EvalArgs),
    /// Decode features into token sequences.
    Decode(DecodeArgs),
    /// Finite-difference check of the full model gradient.
    Gradcheck(GradcheckArgs),
    /// Compare the CTC loss with exhaustive path enumeration.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for feats.txt, labels.txt and tokens.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 250)]
    utts: usize,
    #[arg(long, default_value_t = 20)]
    labels: usize,
    #[arg(long, default_value = "plain")]
    task: SynthTask,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Magnitude of each token's embedding.
    #[arg(long, default_value_t = 2.0)]
    scale: f64,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
    #[arg(long, default_value_t = 2)]
    min_frames: usize,
    #[arg(long, default_value_t = 5)]
    max_frames: usize,
    #[arg(long, default_value_t = 5)]
    speakers: usize,
    #[arg(long, default_value = "utt")]
    prefix: String,
}

/// Training options shared by `train` and `compare`. Flags override the
/// config file.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// wsj or librispeech.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep one frame in this many.
    #[arg(long)]
    skip: Option<usize>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut pairs: Vec<(String, String)> = match &self.config {
            Some(p) => read_config_pairs(p)?,
            None => Vec::new(),
        };
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("preset", self.preset.clone());
        flag("head", self.head.clone());
        flag("lr", self.lr.map(|v| v.to_string()));
        flag("batch_size", self.batch_size.map(|v| v.to_string()));
        flag("max_epochs", self.max_epochs.map(|v| v.to_string()));
        flag("hidden", self.hidden.map(|v| v.to_string()));
        flag("layers", self.layers.map(|v| v.to_string()));
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("skip", self.skip.map(|v| v.to_string()));
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(TrainConfig::from_pairs(&pairs)?)
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    feats: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Token table; without it `K` is the largest label id seen.
    #[arg(long)]
    tokens: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory for metrics.log and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint; its stored config is used, except
    /// `--max-epochs`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Comma-separated seeds; each run goes to `<out>/seed<N>`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    test_feats: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct DecodeOpts {
    #[arg(long)]
    checkpoint: PathBuf,
    /// 1 decodes with best path.
    #[arg(long)]
    beam: Option<usize>,
    /// Prior exponent; 0 disables prior normalization.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tokens: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    opts: DecodeOpts,
    #[arg(long)]
    feats: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Write the aligned scoring report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write decoded hypotheses here.
    #[arg(long)]
    hyp: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    opts: DecodeOpts,
    #[arg(long)]
    feats: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use the small verification model (the only size supported).
    #[arg(long, default_value_t = true)]
    tiny: bool,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    /// Check one head only.
    #[arg(long)]
    head: Option<HeadKind>,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
}

fn load_table(path: Option<&Path>, labels: &[LabelSequence]) -> Result<TokenTable> {
    Ok(match path {
        Some(p) => TokenTable::read(p)?,
        None => TokenTable::numbered(infer_num_labels(labels)),
    })
}

fn load_examples(data: &DataArgs, cfg: &TrainConfig) -> Result<(Vec<Example>, usize, usize)> {
    let feats = read_features(&data.feats)?;
    let labels = read_labels(&data.labels)?;
    let table = load_table(data.tokens.as_deref(), &labels)?;
    let (examples, skipped) = build_examples(&feats, &labels, &cfg.frontend)?;
    if skipped.unlabelled + skipped.infeasible > 0 {
        log::warn!(
            "skipped {} unlabelled and {} infeasible utterances",
            skipped.unlabelled,
            skipped.infeasible
        );
    }
    let Some(first) = examples.first() else {
        bail!("no usable utterances in {}", data.feats.display());
    };
    let input_dim = first.frames.cols();
    Ok((examples, input_dim, table.num_labels()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_utts: a.utts,
        num_labels: a.labels,
        min_len: a.min_len,
        max_len: a.max_len,
        min_frames_per_token: a.min_frames,
        max_frames_per_token: a.max_frames,
        noise_sigma: a.noise,
        scale: a.scale,
        seed: a.seed,
        task: a.task,
        num_speakers: a.speakers,
        id_prefix: a.prefix,
    };
    let (feats, labels) = synth_generate(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_features(a.out.join("feats.txt"), &feats)?;
    write_labels(a.out.join("labels.txt"), &labels)?;
    TokenTable::numbered(cfg.num_labels).write(a.out.join("tokens.txt"))?;
    println!("wrote {} utterances to {}", feats.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    if let Some(path) = &a.resume {
        let ckpt = Checkpoint::load(path)?;
        let mut trainer = Trainer::from_checkpoint(ckpt)?;
        if let Some(n) = a.config.max_epochs {
            trainer.config.max_epochs = n;
        }
        let (examples, input_dim, _) = load_examples(&a.data, &trainer.config)?;
        if input_dim != trainer.input_dim {
            bail!("feature dim {input_dim} does not match checkpoint dim {}", trainer.input_dim);
        }
        let (tr, val) = split_validation(examples, trainer.config.val_fraction);
        trainer.fit(&tr, &val, Some(&a.out))?;
        println!("best val loss {:.6}", trainer.best_val_loss());
        return Ok(());
    }
    let cfg = a.config.resolve()?;
    let (examples, input_dim, num_labels) = load_examples(&a.data, &cfg)?;
    let (tr, val) = split_validation(examples, cfg.val_fraction);
    log::info!("{} train / {} validation utterances", tr.len(), val.len());
    let seeds = if a.seeds.is_empty() { vec![cfg.seed] } else { a.seeds.clone() };
    for &seed in &seeds {
        let out = if a.seeds.is_empty() { a.out.clone() } else { a.out.join(format!("seed{seed}")) };
        let mut trainer = Trainer::new(TrainConfig { seed, ..cfg.clone() }, input_dim, num_labels, &tr)?;
        trainer.fit(&tr, &val, Some(&out))?;
        let last = trainer.history.last();
        println!(
            "seed {seed}: epochs {} best val loss {:.6} last val TER {:.4}",
            trainer.epoch,
            trainer.best_val_loss(),
            last.map_or(f64::NAN, |m| m.val_ter)
        );
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let (examples, input_dim, num_labels) = load_examples(&a.data, &cfg)?;
    let (tr, val) = split_validation(examples, cfg.val_fraction);
    let test_feats = read_features(&a.test_feats)?;
    let test_labels = read_labels(&a.test_labels)?;
    let (test, _) = build_examples(&test_feats, &test_labels, &cfg.frontend)?;
    let table = compare_heads(&cfg, &HeadKind::ALL, &a.seeds, input_dim, num_labels, &tr, &val, &test)?;
    print!("{table}");
    Ok(())
}

struct Loaded {
    trainer: Trainer,
    beam: usize,
    alpha: f64,
}

fn load_model(o: &DecodeOpts) -> Result<Loaded> {
    let trainer = Trainer::from_checkpoint(Checkpoint::load(&o.checkpoint)?)?;
    Ok(Loaded {
        beam: o.beam.unwrap_or(trainer.config.beam_width),
        alpha: o.alpha.unwrap_or(trainer.config.prior_alpha),
        trainer,
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let m = load_model(&a.opts)?;
    let t = &m.trainer;
    let feats = read_features(&a.feats)?;
    let labels = read_labels(&a.labels)?;
    let table = match &a.opts.tokens {
        Some(p) => TokenTable::read(p)?,
        None => TokenTable::numbered(t.num_labels),
    };
    let (examples, skipped) = build_examples(&feats, &labels, &t.config.frontend)?;
    if examples.is_empty() {
        bail!("no usable utterances in {}", a.feats.display());
    }
    let ev = evaluate(&t.model, &t.params, &t.prior, m.alpha, m.beam, &examples)?;
    if let Some(p) = &a.report {
        std::fs::write(p, ev.report.render(&table)).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.hyp {
        write_hypotheses(p, &ev.hypotheses, &table)?;
    }
    let c = ev.report.total;
    println!(
        "utts {} skipped {} loss {:.6} ter {:.4} (sub {} del {} ins {} ref {})",
        examples.len(),
        skipped.unlabelled + skipped.infeasible,
        ev.mean_loss,
        ev.ter(),
        c.substitutions,
        c.deletions,
        c.insertions,
        c.reference_len
    );
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let m = load_model(&a.opts)?;
    let t = &m.trainer;
    let table = match &a.opts.tokens {
        Some(p) => TokenTable::read(p)?,
        None => TokenTable::numbered(t.num_labels),
    };
    let feats = t.config.frontend.apply(&read_features(&a.feats)?)?;
    let mut hyps = Vec::with_capacity(feats.len());
    for f in &feats {
        let pg = Posteriorgram {
            utterance_id: f.utterance_id.clone(),
            log_post: t.model.log_posteriors(&t.params, &f.frames)?,
        };
        hyps.push((f.utterance_id.clone(), decode_posteriorgram(&pg, &t.prior, m.alpha, m.beam)?.tokens));
    }
    write_hypotheses(&a.out, &hyps, &table)?;
    println!("decoded {} utterances", hyps.len());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    if !a.tiny {
        bail!("only the tiny verification model is supported");
    }
    let heads = a.head.map_or(HeadKind::ALL.to_vec(), |h| vec![h]);
    let mut ok = true;
    for head in heads {
        let r = model_gradcheck(head, a.seed, a.eps)?;
        let pass = r.max_rel_err < a.tolerance;
        ok &= pass;
        let worst = r.worst.map(|(n, i)| format!(" worst {n}[{i}]")).unwrap_or_default();
        println!(
            "{head:<9} max rel err {:.3e} over {} probes{worst} {}",
            r.max_rel_err,
            r.probes,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn oracle(a: OracleArgs) -> Result<bool> {
    let r = ctc_oracle_suite(a.cases, a.seed)?;
    let pass = r.max_rel_err <= a.tolerance;
    println!(
        "ctc vs enumeration: {} cases, max rel err {:.3e} {}",
        r.cases,
        r.max_rel_err,
        if pass { "ok" } else { "FAIL" }
    );
    Ok(pass)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth(a) => synth(a).map(|()| true),
        Command::Train(a) => train(a).map(|()| true),
        Command::Compare(a) => compare(a).map(|()| true),
        Command::Eval(a) => eval(a).map(|()| true),
        Command::Decode(a) => decode(a).map(|()| true),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Oracle(a) => oracle(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
