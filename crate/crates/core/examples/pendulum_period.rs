//! Periods of small pendulum swings measured from Euler walks, compared
//! with the linear period 2π√(ℓ/g) and with the exact elliptic-integral
//! period.

use hyperwalk::pendulum::{
    small_oscillation_report, write_period_csv, LambdaPolicy, PendulumParams, DEFAULT_AMPLITUDES,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PendulumParams::new(9.81, 1.0, DEFAULT_AMPLITUDES[0])?;
    let report = small_oscillation_report(&DEFAULT_AMPLITUDES, &params, &LambdaPolicy::default())?;

    println!("nonlinear walk:");
    write_period_csv(&report.nonlinear_rows, std::io::stdout())?;
    println!("rotation walk:");
    write_period_csv(&report.rotation_rows, std::io::stdout())?;
    println!("summary: {:?}", report.summary);
    println!(
        "F vs E over amplitude: {:?}; E vs H over mesh: {:?}",
        report.linear_vs_nonlinear.verdict, report.linear_vs_rotation.verdict
    );
    Ok(())
}
