//! A fixed-mesh Euler walk of a prevector field and its shadow, the limit
//! of the walk as the mesh is refined.

use std::f64::consts::TAU;

use hyperwalk::flows::{flow_shadow, walk_for, PrevectorField, VectorField};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // z' = −iz: rotation of the plane; the flow at t = 2π is the identity.
    let field = || VectorField::new(|z| Complex64::new(0.0, -1.0) * z, 1.0);
    let z0 = Complex64::new(1.0, 0.0);

    let traj = walk_for(&PrevectorField::displacement(field()?, 1e-3)?, z0, TAU)?;
    let last = traj.final_sample();
    println!(
        "λ = 1e-3: {} steps, z({:.6}) = {:.6}, |z| = {:.6}",
        last.n,
        last.t,
        last.z,
        last.z.norm()
    );

    // Meshes dividing 2π, so every walk ends exactly at t = 2π.
    let meshes = [500.0, 1000.0, 2000.0, 4000.0].map(|n| TAU / n);
    let shadow = flow_shadow(
        |mesh| PrevectorField::displacement(field()?, mesh),
        z0,
        TAU,
        &meshes,
    )?;
    for m in &shadow.per_mesh {
        println!("  λ = {:.3e} z = {:.8}", m.mesh, m.value);
    }
    println!(
        "shadow {:?} ({:?}), observed order {:?}",
        shadow.value, shadow.verdict, shadow.observed_order
    );
    Ok(())
}
