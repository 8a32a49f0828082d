mod config;
mod experiments;

use bvren::Trunc;
use clap::Parser;
use config::Config;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one bvren experiment and write its summary and tables.
#[derive(Debug, Parser)]
#[command(name = "bvren", version)]
struct Args {
    /// qme-flow, counterterms-phi4-d4, rg-roundtrip, obstruction,
    /// graph-tables, cs-propagator or gaussian-lemma
    experiment: String,
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// I,K
    #[arg(long, value_parser = parse_trunc)]
    truncation: Option<Trunc>,
}

fn parse_trunc(s: &str) -> Result<Trunc, String> {
    config::parse_pair(s, ',').map(|(i, k)| Trunc::new(i, k)).ok_or_else(|| format!("expected I,K, got {s:?}"))
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if !experiments::EXPERIMENTS.contains(&args.experiment.as_str()) {
        return usage(&format!("unknown experiment {:?}; expected one of {}", args.experiment, experiments::EXPERIMENTS.join(", ")));
    }
    let cfg = match &args.config {
        None => Config::default(),
        Some(p) => match std::fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|t| Config::parse(&t)) {
            Ok(c) => c,
            Err(e) => return usage(&format!("config {}: {e}", p.display())),
        },
    };
    let trunc = args.truncation.unwrap_or_else(|| experiments::default_truncation(&args.experiment));
    let report = match experiments::run(&args.experiment, &cfg, args.seed, trunc) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", args.experiment);
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_outputs(&args.out, &args.experiment, args.seed, trunc, &report) {
        eprintln!("writing {}: {e}", args.out.display());
        return ExitCode::from(1);
    }
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let failed = report.failures();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for c in failed {
            eprintln!("check failed: {}", c.name);
        }
        ExitCode::from(1)
    }
}

fn write_outputs(dir: &std::path::Path, experiment: &str, seed: u64, trunc: Trunc, report: &experiments::Report) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), report.summary_json(experiment, seed, trunc))?;
    for (name, text) in &report.tables {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}
