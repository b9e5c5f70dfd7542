//! The pendulum displacement near the origin. Replacing the amplitude by ε
//! turns δ_F/δ_E into a series whose ε¹ term vanishes: F and E are adequal
//! for infinitesimal swings.

use hyperwalk::asymptotic::DEFAULT_TRUNCATION;
use hyperwalk::pendulum::{
    amplitude_sweep, ratio_at_amplitude, rescaled_adequality_check, FieldPair, PendulumParams,
};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.6, 0.8),
        Complex64::new(0.0, 1.0),
    ];
    for row in rescaled_adequality_check(&samples, 1.0, DEFAULT_TRUNCATION)? {
        println!("Z = {}: δ_F/δ_E = {}", row.z, row.ratio);
        println!("    ≍ holds: {:?}, defect {:?}", row.adequal, row.defect);
        for a in [0.1, 0.01] {
            let ratio = ratio_at_amplitude(a, row.z, 1.0);
            println!("    at a = {a}: ratio − 1 = {:.3e}", (ratio - 1.0).norm());
        }
    }

    // The same effect for finite walks: sup|F−E|/a shrinks like a².
    let params = PendulumParams::new(1.0, 1.0, 0.2)?;
    let amplitudes = [0.2, 0.1, 0.05];
    let (report, _) = amplitude_sweep(
        &params,
        FieldPair::NonlinearLinear,
        &amplitudes,
        1e-4,
        std::f64::consts::TAU,
        None,
    )?;
    for row in &report.rows {
        println!("a = {:<5} sup|F−E|/a = {:.4e}", row.scale, row.sup_rel);
    }
    println!(
        "exponent {:?}, verdict {:?}",
        report.exponent(),
        report.verdict
    );
    Ok(())
}
