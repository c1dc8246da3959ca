//! Acceptance battery: one PASS/FAIL line per criterion with the measured
//! values, then a summary. Exits nonzero if any criterion fails.
//!
//! `EQTRI_PROFILE=full` selects the full profile; the default is quick.

use std::process::ExitCode;

use eqtri_core::reports::{criterion, Profile};

fn main() -> ExitCode {
    let profile = match std::env::var("EQTRI_PROFILE") {
        Ok(p) => match p.parse::<Profile>() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("EQTRI_PROFILE: {e}");
                return ExitCode::from(2);
            }
        },
        Err(_) => Profile::Quick,
    };
    println!("\nacceptance battery, profile {profile}");
    let mut failed = Vec::new();
    for id in 1..=10 {
        let r = criterion(id, profile).expect("known criterion");
        println!("{}", r.line());
        if !r.passed {
            failed.push(id);
        }
    }
    println!("acceptance: {} passed, {} failed {:?}\n", 10 - failed.len(), failed.len(), failed);
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
