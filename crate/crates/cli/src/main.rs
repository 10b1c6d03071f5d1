//! `embinv`: embedding-inversion experiments from the command line.
//!
//! Everything is driven by a JSON experiment config; the global `--seed`
//! overrides the config's seed, and every subcommand is deterministic for a
//! fixed (config, seed) pair.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use embinv_core::corpus::load_dataset;
use embinv_core::corpus::DatasetId;
use embinv_core::reasoner::{ReasonerConfig, ReplayTransport, GLM4_ID, LLAMA3_ID};
use embinv_core::runner::{
    load_audit_config, load_experiment_config, prepare_data, render_report, run_leakage_audit,
    run_masking, run_plan, ExperimentConfig, RunPlan,
};

#[derive(Parser)]
#[command(name = "embinv", about = "Embedding-inversion attack toolkit", version)]
struct Cli {
    /// Experiment config (JSON). Required by train/attack/evaluate/run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Acknowledge deterministic mode (always on; flag kept for scripts).
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw corpus into split JSONL.
    PrepareData(PrepareArgs),
    /// Train an attacker; checkpoint lands in the config's output_dir.
    Train,
    /// Invert the test split with a trained attacker.
    #[command(alias = "invert")]
    Attack(AttackArgs),
    /// Score generated predictions against the gold test split.
    Evaluate(EvaluateArgs),
    /// Full pipeline: train, attack, evaluate in one run directory.
    Run,
    /// Produce masked/alternative triples from recorded reasoner responses.
    Mask(MaskArgs),
    /// Four-cell training-data leakage audit.
    Audit(AuditArgs),
    /// Render metrics and audit tables from finished run directories.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw input file.
    #[arg(long)]
    input: PathBuf,
    /// Input format: dialog-json, qnli-tsv, or lines.
    #[arg(long)]
    format: String,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    /// Split percentages as train:dev:test (e.g. 82:9:9).
    #[arg(long)]
    ratios: Option<String>,
    /// Keep only this fraction of records (0, 1].
    #[arg(long)]
    sample_fraction: Option<f64>,
}

#[derive(Args)]
struct AttackArgs {
    /// Checkpoint directory from a previous `train` run.
    #[arg(long)]
    ckpt: PathBuf,
    /// Run directory for this invocation (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// generated.jsonl from a previous `attack` run.
    #[arg(long)]
    generated: PathBuf,
    /// Run directory for this invocation (defaults to the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MaskArgs {
    /// Sentence corpus (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Dataset tag for the input: pc, qnli, altlex, or synthetic.
    #[arg(long, default_value = "pc")]
    dataset: String,
    /// Reasoner: glm4 or llama3.
    #[arg(long, default_value = "glm4")]
    reasoner: String,
    /// Recorded responses (JSONL) to replay.
    #[arg(long)]
    replay: PathBuf,
    /// Output triples JSONL.
    #[arg(long)]
    out_triples: PathBuf,
    /// Output rejection log JSON.
    #[arg(long)]
    out_rejections: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Audit config (JSON); falls back to the global --config.
    #[arg(long)]
    audit_config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished run directories.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Write CSVs next to this stem (<stem>_attacks.csv, <stem>_audits.csv).
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn parse_ratios(s: &str) -> anyhow::Result<(u8, u8, u8)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("ratios must look like 82:9:9");
    }
    Ok((parts[0].parse()?, parts[1].parse()?, parts[2].parse()?))
}

fn parse_dataset(s: &str) -> anyhow::Result<DatasetId> {
    Ok(match s {
        "pc" => DatasetId::Pc,
        "qnli" => DatasetId::Qnli,
        "altlex" => DatasetId::Altlex,
        "synthetic" => DatasetId::Synthetic,
        other => bail!("unknown dataset {other:?} (expected pc, qnli, altlex, or synthetic)"),
    })
}

fn experiment_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .context("this subcommand needs --config <experiment.json>")?;
    let mut cfg = load_experiment_config(path)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::PrepareData(args) => {
            let ratios = args.ratios.as_deref().map(parse_ratios).transpose()?;
            let n = prepare_data(
                &args.input,
                &args.format,
                &args.out,
                ratios,
                args.sample_fraction,
                cli.seed.unwrap_or(42),
            )?;
            println!("wrote {n} records to {}", args.out.display());
        }
        Command::Train => {
            let cfg = experiment_config(&cli)?;
            let plan = RunPlan { train: true, ..Default::default() };
            let dir = run_plan(&cfg, &plan)?;
            println!("trained attacker in {}", dir.display());
        }
        Command::Attack(args) => {
            let mut cfg = experiment_config(&cli)?;
            if let Some(out) = &args.out {
                cfg.output_dir = out.clone();
            }
            let plan = RunPlan {
                attack: true,
                ckpt_dir: Some(args.ckpt.clone()),
                ..Default::default()
            };
            let dir = run_plan(&cfg, &plan)?;
            println!("wrote predictions to {}", dir.join("generated.jsonl").display());
        }
        Command::Evaluate(args) => {
            let mut cfg = experiment_config(&cli)?;
            if let Some(out) = &args.out {
                cfg.output_dir = out.clone();
            }
            let plan = RunPlan {
                evaluate: true,
                generated: Some(args.generated.clone()),
                ..Default::default()
            };
            let dir = run_plan(&cfg, &plan)?;
            println!("wrote metrics to {}", dir.join("metrics.json").display());
        }
        Command::Run => {
            let cfg = experiment_config(&cli)?;
            let dir = run_plan(&cfg, &RunPlan::full())?;
            println!("run complete: {}", dir.display());
        }
        Command::Mask(args) => {
            let dataset = parse_dataset(&args.dataset)?;
            let records = load_dataset(&args.input, dataset)?;
            let reasoner_id = match args.reasoner.as_str() {
                "glm4" => GLM4_ID,
                "llama3" => LLAMA3_ID,
                other => bail!("unknown reasoner {other:?} (expected glm4 or llama3)"),
            };
            let cfg = ReasonerConfig { reasoner_id: reasoner_id.into(), ..Default::default() };
            let mut transport = ReplayTransport::load("replay", &args.replay)?;
            let (kept, rejected) = run_masking(
                &records,
                &cfg,
                &mut transport,
                &args.out_triples,
                &args.out_rejections,
            )?;
            println!(
                "masked {kept} of {} sentences ({rejected} rejected) -> {}",
                records.len(),
                args.out_triples.display()
            );
        }
        Command::Audit(args) => {
            let path = args
                .audit_config
                .as_ref()
                .or(cli.config.as_ref())
                .context("audit needs --audit-config <audit.json> (or global --config)")?;
            let cfg = load_audit_config(path)?;
            let dir = run_leakage_audit(&cfg)?;
            println!("audit complete: {}", dir.join("audit.json").display());
        }
        Command::Report(args) => {
            let report = render_report(&args.runs)?;
            print!("{}", report.text);
            if let Some(stem) = &args.csv_out {
                let base = stem.display().to_string();
                if let Some(csv) = &report.attack_csv {
                    let p = format!("{base}_attacks.csv");
                    std::fs::write(&p, csv)?;
                    eprintln!("wrote {p}");
                }
                if let Some(csv) = &report.audit_csv {
                    let p = format!("{base}_audits.csv");
                    std::fs::write(&p, csv)?;
                    eprintln!("wrote {p}");
                }
            }
        }
    }
    Ok(())
}
