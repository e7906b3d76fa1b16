use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netctl_bench::acceptance;
use netctl_bench::studies::{run_study, StudyId, StudySpec};

#[derive(Parser)]
#[command(name = "netctl", about = "Run network control studies and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one study sweep and write raw.csv, summary.csv and meta.json.
    Run {
        study: StudyId,
        /// JSON study spec; the built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the acceptance checks (all, or the listed numbers).
    Verify { ids: Vec<u8> },
    /// Print the default spec of a study as JSON.
    Config { study: StudyId },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode, Box<dyn std::error::Error>> {
    match Cli::parse().cmd {
        Cmd::Run {
            study,
            config,
            out,
            seed,
            workers,
        } => {
            let spec = match config {
                Some(path) => StudySpec::from_json(&std::fs::read_to_string(&path)?)?,
                None => StudySpec::default_for(study),
            };
            if spec.study != study {
                return Err(format!("config is for {}, not {}", spec.study.name(), study.name()).into());
            }
            let dir = out.join(study.name());
            let res = run_study(&spec, seed, workers, Some(&dir))?;
            let failed = res.records.iter().filter(|r| !r.is_ok()).count();
            println!("{}: {} records ({} failed) -> {}", study.name(), res.records.len(), failed, dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { ids } => {
            let ids = if ids.is_empty() { (1..=13).collect() } else { ids };
            let mut all = true;
            for id in ids {
                let o = acceptance::run(id);
                println!("{}", o.line());
                all &= o.passed;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Config { study } => {
            println!("{}", serde_json::to_string_pretty(&StudySpec::default_for(study))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
