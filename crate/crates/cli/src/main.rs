use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nonlinspin::harness::{run_experiment, ExperimentConfig, ExperimentKind, SEED_ENV};

/// Runs one experiment and writes CSV/JSON reports.
#[derive(Parser, Debug)]
#[command(name = "nonlinspin", version)]
struct Cli {
    /// tv-curve, entropy-curve, extinction, coupon, branching-tail, kac-compare, field-infer,
    /// kernel-audit or tree-sample.
    kind: ExperimentKind,
    /// Experiment config (flat key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; beats both the config and NONLINSPIN_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` key, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = ExperimentConfig::load(&cli.config).and_then(|mut cfg| {
        let env = std::env::var(SEED_ENV).ok();
        cfg.apply_seed_overrides(env.as_deref(), cli.seed)?;
        Ok(cfg)
    });
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let out = cli.out.unwrap_or_else(|| match &cfg.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => cfg.base_dir.join(p),
        None => PathBuf::from("out"),
    });
    match run_experiment(cli.kind, &cfg, &out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
