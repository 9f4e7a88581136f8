use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stability_lab::experiment::{run, RunConfig};

/// Desk-scale stability experiment runner.
///
/// Settings come from `--config` (a `key = value` file) and are then
/// overridden by the flags below; `--set key=value` reaches every other key.
#[derive(Debug, Parser)]
#[command(name = "stability-lab", version)]
struct Cli {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// sample, decode, sweep-rounds, soft-compare, calibrate, realtime, t1clock or reset-fit.
    #[arg(long, value_name = "KIND")]
    experiment: Option<String>,
    /// Comma-separated detector round counts.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    rounds: Option<String>,
    #[arg(long, value_name = "N")]
    shots: Option<String>,
    #[arg(long, value_name = "FLOAT")]
    p: Option<String>,
    #[arg(long, value_name = "U64")]
    seed: Option<String>,
    #[arg(long, value_parser = ["mwpm", "clustering", "soft-mwpm"])]
    decoder: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Sampler CSV to decode.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn build_config(cli: &Cli) -> stability_lab::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            stability_lab::Error::Config(format!("--set {kv}: expected KEY=VALUE"))
        })?;
        config.set(k.trim(), v)?;
    }
    let flags = [
        ("experiment", cli.experiment.clone()),
        ("rounds", cli.rounds.clone()),
        ("shots", cli.shots.clone()),
        ("p", cli.p.clone()),
        ("seed", cli.seed.clone()),
        ("decoder", cli.decoder.clone()),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("input", cli.input.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|config| {
        let output = run(&config)?;
        print!("{}", output.table);
        for (name, _) in &output.files {
            println!("wrote {}", config.out.join(name).display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stability-lab: {e}");
            ExitCode::from(2)
        }
    }
}
