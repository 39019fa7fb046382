use std::path::PathBuf;
use std::process::ExitCode;

use bergcurv::cli::{execute, exit_code_for, write_outputs, Overrides, RunConfig, EXIT_CONFIG};
use clap::Parser;

/// Chern curvature of direct image bundles of weighted Bergman spaces.
#[derive(Parser, Debug)]
#[command(name = "bergcurv", version, about)]
struct Args {
    /// TOML run configuration (schema = 1).
    #[arg(long)]
    config: PathBuf,
    /// Task override: curvature-compare, positivity-certify, trace-constant, flatness-scan, convergence-sweep.
    #[arg(long)]
    task: Option<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Do not print the summary.
    #[arg(long)]
    quiet: bool,
}

/// Worker threads come from `BERGCURV_THREADS` (default: all cores).
fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("BERGCURV_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| format!("BERGCURV_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("BERGCURV_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("bergcurv: config error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let ov = Overrides { task: args.task, seed: args.seed, out: args.out };
    let cfg = match RunConfig::from_file(&args.config, &ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bergcurv: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match execute(&cfg) {
        Ok(out) => {
            if let Err(e) = write_outputs(&out, &cfg.out_dir) {
                eprintln!("bergcurv: {e}");
                return ExitCode::from(exit_code_for(&e) as u8);
            }
            if !args.quiet {
                print!("{}", out.summary);
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("bergcurv: numerical failure: {e}");
            let _ = std::fs::create_dir_all(&cfg.out_dir)
                .and_then(|_| std::fs::write(cfg.out_dir.join("summary.txt"), format!("numerical failure: {e}\n")));
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
