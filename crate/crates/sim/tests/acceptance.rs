//! All twelve acceptance criteria, one pass/fail line each. Exits nonzero
//! if any criterion fails.

use std::process::ExitCode;

use jcesd_sim::validate::{run_check, Suite};

fn main() -> ExitCode {
    let mut failed = 0;
    for &id in Suite::All.ids() {
        let check = run_check(id);
        println!("{check}");
        failed += usize::from(!check.passed);
    }
    println!("acceptance: {} passed, {failed} failed", Suite::All.ids().len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
