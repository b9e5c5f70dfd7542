//! Two adequal prevector fields: the Euler walk of the linearized pendulum
//! against the exact rotation. Their walks stay within the discrete
//! Gronwall envelope and the deviation vanishes linearly in the mesh.

use std::f64::consts::TAU;

use hyperwalk::flows::{gronwall_envelope, measure_discrepancy, DISCREPANCY_RESOLUTION};
use hyperwalk::pendulum::{make_fields, mesh_sweep, FieldPair, PendulumParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = PendulumParams::new(1.0, 1.0, 0.1)?;
    let horizon = 10.0;

    let fields = make_fields(&params, 1e-3)?;
    let eta = measure_discrepancy(
        &fields.linear,
        &fields.rotation,
        1.0,
        DISCREPANCY_RESOLUTION,
    )?;
    println!("λ = 1e-3: η = {eta:.4e} on the unit disk");
    for t in [1.0, TAU, horizon] {
        println!(
            "  envelope(t = {t:.3}) = {:.4e}",
            gronwall_envelope(eta, 1.0, t)?
        );
    }

    let meshes = [1e-2, 1e-3, 1e-4];
    let (report, runs) = mesh_sweep(
        &params,
        FieldPair::LinearRotation,
        &meshes,
        horizon,
        Some(1.0),
    )?;
    for (row, run) in report.rows.iter().zip(&runs) {
        let check = run.envelope_check.expect("certified run");
        println!(
            "λ = {:<7} sup|E−H| = {:.4e}  envelope = {:.4e}  violations = {}",
            row.scale,
            row.sup_abs,
            check.envelope.bound(horizon),
            check.violations
        );
    }
    println!("fit: {:?}", report.fit_record());
    Ok(())
}
