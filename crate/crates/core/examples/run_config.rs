//! Drive a TOML run configuration through the library, as the CLI does.
//!
//! `cargo run --release --example run_config -- configs/hartogs_compare.toml`

use bergcurv::cli::{execute, Overrides, RunConfig};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/hartogs_compare.toml".into());
    let cfg = match RunConfig::from_file(path.as_ref(), &Overrides::default()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    match execute(&cfg) {
        Ok(out) => {
            print!("{}", out.summary);
            println!("exit code {}", out.exit_code());
        }
        Err(e) => eprintln!("numerical failure: {e}"),
    }
}
