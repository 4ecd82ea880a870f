use std::process::ExitCode;
use std::time::Instant;

use taylor_hjb::acceptance;

fn main() -> ExitCode {
    let start = Instant::now();
    let results = acceptance::run_all();
    for c in &results {
        println!("{c}");
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
