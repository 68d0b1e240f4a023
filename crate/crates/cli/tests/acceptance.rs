//! One line per acceptance criterion; fails if any criterion fails.

use dpsa_core::acceptance::{run_criterion, VerifyOptions, CRITERIA};

fn main() {
    let opts = VerifyOptions {
        node_exe: Some(env!("CARGO_BIN_EXE_dpsa").into()),
        ..VerifyOptions::default()
    };
    let mut failed = Vec::new();
    for &(id, _) in &CRITERIA {
        let r = run_criterion(id, &opts);
        println!("{r}");
        if !r.passed {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
