//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Set `NETCTL_ACCEPT` to a comma-separated list of numbers to run a subset.

use std::process::ExitCode;

use netctl_bench::acceptance;

fn main() -> ExitCode {
    let ids: Vec<u8> = match std::env::var("NETCTL_ACCEPT") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
        _ => (1..=13).collect(),
    };
    let mut failed = Vec::new();
    for id in ids {
        let o = acceptance::run(id);
        println!("{}", o.line());
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
