//! Loads an experiment manifest and prints it back with every default filled in.
//!
//!     cargo run --example cli_manifest -- experiments/logistic.json

use quasimargin::cli::ExperimentConfig;

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: cli_manifest <manifest.json>");
        std::process::exit(2);
    };
    match ExperimentConfig::load(path.as_ref()) {
        Ok(cfg) => println!("{}", serde_json::to_string_pretty(&cfg).expect("serializable")),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}
