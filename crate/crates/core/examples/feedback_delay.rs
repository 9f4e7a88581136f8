//! Simulates the feedback experiment and recovers the feedback delay from
//! qubit decay alone.

use stability_lab::experiment::t1_clock_model;
use stability_lab::t1_clock::{bootstrap, forward_simulate, ExperimentPlan};

fn main() -> stability_lab::Result<()> {
    let model = t1_clock_model(13.0, 3.0, 10.0)?;
    let data = forward_simulate(&model, &ExperimentPlan::standard(1_000_000), 1)?;
    let report = bootstrap(&data, 200, 2)?;
    let e = &report.estimate;
    println!(
        "decay: A {:.3}  T1 {:.3} us  B {:.3}",
        e.decay.a, e.decay.t1, e.decay.b
    );
    println!("P(S1) = [{:.3}, {:.3}]", e.ps1[0], e.ps1[1]);
    println!(
        "T   {:.3} us  95% [{:.3}, {:.3}]",
        report.total_time.estimate, report.total_time.lo, report.total_time.hi
    );
    println!(
        "T_d {:.3} us  95% [{:.3}, {:.3}]  alpha {:.3}",
        report.delay.estimate, report.delay.lo, report.delay.hi, e.delay.alpha
    );
    Ok(())
}
