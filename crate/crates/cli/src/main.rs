use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use quasispec_cli::run::load_config;
use quasispec_cli::{run, Command, ExitStatus, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Validate,
    Dispersion,
    Gaps,
    Certify,
    Replay,
    Oracle,
    All,
}

/// Spectra, gap catalogs and homogeneity certificates for quasi-periodic
/// Schrodinger operators.
#[derive(Debug, Parser)]
#[command(name = "quasispec", version)]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// Problem definition file.
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use this catalog CSV instead of building one.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// k grid for `dispersion` as `start:stop:count`.
    #[arg(long, value_parser = parse_grid)]
    k_grid: Option<KGrid>,
}

#[derive(Clone, Debug)]
struct KGrid(Vec<f64>);

fn parse_grid(s: &str) -> Result<KGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err("expected start:stop:count".into());
    };
    let a: f64 = a.parse().map_err(|_| format!("bad start '{a}'"))?;
    let b: f64 = b.parse().map_err(|_| format!("bad stop '{b}'"))?;
    let n: usize = n.parse().map_err(|_| format!("bad count '{n}'"))?;
    match n {
        0 => Err("count must be positive".into()),
        1 => Ok(KGrid(vec![a])),
        _ => Ok(KGrid((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { ExitStatus::InputError.code() } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let cmd = match args.command {
        Sub::Validate => Command::Validate,
        Sub::Dispersion => Command::Dispersion,
        Sub::Gaps => Command::Gaps,
        Sub::Certify => Command::Certify,
        Sub::Replay => Command::Replay,
        Sub::Oracle => Command::Oracle,
        Sub::All => Command::All,
    };
    let opts = RunOptions {
        out_dir: args.out,
        k_grid: args.k_grid.map(|g| g.0),
        catalog: args.catalog,
    };
    let result = load_config(&args.config).and_then(|cfg| run(cmd, &cfg, &opts));
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}
