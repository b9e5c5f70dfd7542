//! The pendulum `ẍ = −(g/ℓ) sin x` as three prevector fields on the plane.
//!
//! The state is `z = x + iy` with `y = ẋ/ω`, `ω = √(g/ℓ)`, so the system
//! reads `ẋ = ωy`, `ẏ = −ω sin x`. Three prevector fields act on it:
//!
//! * `F`, the nonlinear field, `δ_F(z) = λω y − iλω sin x`;
//! * `E`, its linearization, `δ_E(z) = −iλω z`;
//! * `H`, clockwise rotation by the angle `λω`, whose walk is the closed
//!   form `H_t(a) = a cos ωt − i a sin ωt` and is exactly periodic once
//!   `2π/(λω)` is a whole number of steps.
//!
//! Period measurements use the section `{Im z = 0, Re z > 0}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotic::{self, AsymptoticNumber, Decision, Defect, SeriesError};
use crate::flows::{
    self, certified_deviation, walk, AdequalityReport, DeviationReport, FlowError, PowerLawFit,
    PrevectorField, ScaleParameter, SweepRow, Trajectory, VectorField, Verdict,
};

/// Smallest admissible number of steps per linear period.
pub const MIN_STEPS_PER_PERIOD: u64 = 8;
/// Steps per period required by the small-oscillation report.
pub const REPORT_MIN_STEPS_PER_PERIOD: u64 = 10_000;
/// Amplitude sweep used when none is given (radians).
pub const DEFAULT_AMPLITUDES: [f64; 5] = [0.4, 0.2, 0.1, 0.05, 0.025];

const AGM_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum PendulumError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no full oscillation observed")]
    NoFullOscillation,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("at amplitude {amplitude}: {source}")]
    AtAmplitude {
        amplitude: f64,
        #[source]
        source: Box<PendulumError>,
    },
}

impl PendulumError {
    fn at(amplitude: f64) -> impl FnOnce(PendulumError) -> PendulumError {
        move |source| PendulumError::AtAmplitude {
            amplitude,
            source: Box::new(source),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PendulumError {
    PendulumError::InvalidParams(msg.into())
}

fn check_amplitude(a: f64) -> Result<f64, PendulumError> {
    if a > 0.0 && a < PI {
        Ok(a)
    } else {
        Err(invalid(format!(
            "amplitude must lie in (0, π) (oscillatory regime), got {a}"
        )))
    }
}

/// Gravity `g`, rod length `ℓ` and release angle `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub g: f64,
    pub length: f64,
    pub amplitude: f64,
}

impl PendulumParams {
    pub fn new(g: f64, length: f64, amplitude: f64) -> Result<Self, PendulumError> {
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(format!("g must be positive, got {g}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(invalid(format!("length must be positive, got {length}")));
        }
        Ok(Self {
            g,
            length,
            amplitude: check_amplitude(amplitude)?,
        })
    }

    pub fn with_amplitude(self, amplitude: f64) -> Result<Self, PendulumError> {
        Self::new(self.g, self.length, amplitude)
    }

    /// `ω = √(g/ℓ)`.
    pub fn omega(&self) -> f64 {
        (self.g / self.length).sqrt()
    }

    /// `2π√(ℓ/g)`, the period of infinitesimal oscillations.
    pub fn linear_period(&self) -> f64 {
        TAU * (self.length / self.g).sqrt()
    }

    /// Release state `a + 0i`.
    pub fn initial_state(&self) -> Complex64 {
        Complex64::new(self.amplitude, 0.0)
    }
}

/// The three prevector fields sharing one mesh.
#[derive(Debug, Clone)]
pub struct PendulumFields {
    /// `F`: `δ_F(z) = λω y − iλω sin x`.
    pub nonlinear: PrevectorField,
    /// `E`: `δ_E(z) = −iλω z`.
    pub linear: PrevectorField,
    /// `H`: `z ↦ e^{−iλω} z`.
    pub rotation: PrevectorField,
}

/// `X(x, y) = ωy − iω sin x`.
pub fn nonlinear_vector_field(omega: f64) -> VectorField {
    VectorField::new(
        move |z: Complex64| Complex64::new(omega * z.im, -omega * z.re.sin()),
        omega,
    )
    .expect("ω > 0")
}

/// `ωy − iωx = −iωz`.
pub fn linear_vector_field(omega: f64) -> VectorField {
    VectorField::new(
        move |z: Complex64| Complex64::new(omega * z.im, -omega * z.re),
        omega,
    )
    .expect("ω > 0")
}

/// Clockwise rotation by `λω`, written out componentwise.
pub fn rotation_field(omega: f64, mesh: f64) -> Result<PrevectorField, FlowError> {
    let angle = mesh * omega;
    let (s, c) = angle.sin_cos();
    // |δ_H(z) − δ_H(w)| = 2 sin(λω/2)|z − w| ≤ λω|z − w|
    PrevectorField::exact_map(
        move |z: Complex64| Complex64::new(z.re * c + z.im * s, -z.re * s + z.im * c),
        mesh,
        omega,
    )
}

pub fn make_fields(params: &PendulumParams, mesh: f64) -> Result<PendulumFields, PendulumError> {
    let omega = params.omega();
    Ok(PendulumFields {
        nonlinear: PrevectorField::displacement(nonlinear_vector_field(omega), mesh)?,
        linear: PrevectorField::displacement(linear_vector_field(omega), mesh)?,
        rotation: rotation_field(omega, mesh)?,
    })
}

/// `δ_H(z)/δ_E(z) = (sin λω + (cos λω − 1)i)/(λω)`, the same for every `z ≠ 0`.
pub fn rotation_to_linear_ratio(omega: f64, mesh: f64) -> Complex64 {
    let angle = omega * mesh;
    Complex64::new(angle.sin(), angle.cos() - 1.0) / angle
}

/// `λ = 2π/(ω·N)`: one linear period is exactly `N` steps.
pub fn choose_lambda(omega: f64, steps_per_period: u64) -> Result<f64, PendulumError> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(invalid(format!("ω must be positive, got {omega}")));
    }
    if steps_per_period < MIN_STEPS_PER_PERIOD {
        return Err(invalid(format!(
            "need at least {MIN_STEPS_PER_PERIOD} steps per period, got {steps_per_period}"
        )));
    }
    Ok(TAU / (omega * steps_per_period as f64))
}

/// `H_t(a, 0) = (a cos ωt, −a sin ωt)`.
pub fn h_walk_closed_form(a: f64, t: f64, omega: f64) -> Complex64 {
    let (s, c) = (omega * t).sin_cos();
    Complex64::new(a * c, -a * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    pub mesh: f64,
    /// Standard deviation of the spacings between successive crossings.
    pub residual: f64,
    /// Number of full oscillations averaged over.
    pub oscillations: usize,
}

/// Times at which the walk crosses `{Im z = 0, Re z > 0}` from `Im z > 0`
/// to `Im z ≤ 0`, linearly interpolated between samples.
pub fn section_crossings(traj: &Trajectory) -> Vec<f64> {
    traj.samples
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0], w[1]);
            if !(a.z.im > 0.0 && b.z.im <= 0.0) {
                return None;
            }
            let frac = a.z.im / (a.z.im - b.z.im);
            let x = a.z.re + frac * (b.z.re - a.z.re);
            (x > 0.0).then_some(a.t + frac * (b.t - a.t))
        })
        .collect()
}

/// Average spacing of successive same-direction section crossings.
pub fn measure_period(traj: &Trajectory) -> Result<PeriodEstimate, PendulumError> {
    let crossings = section_crossings(traj);
    if crossings.len() < 2 {
        return Err(PendulumError::NoFullOscillation);
    }
    let spacings: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let count = spacings.len() as f64;
    let period = (crossings[crossings.len() - 1] - crossings[0]) / count;
    let residual = (spacings.iter().map(|s| (s - period).powi(2)).sum::<f64>() / count).sqrt();
    Ok(PeriodEstimate {
        period,
        mesh: traj.mesh,
        residual,
        oscillations: spacings.len(),
    })
}

/// Arithmetic–geometric mean of two positive numbers.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        let next = (0.5 * (a + b), (a * b).sqrt());
        a = next.0;
        b = next.1;
        if (a - b).abs() <= AGM_TOLERANCE * a {
            break;
        }
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind `K(k)` for modulus `k`,
/// given through the complementary modulus `k' = √(1 − k²)`.
pub fn elliptic_k_complementary(k_prime: f64) -> f64 {
    PI / (2.0 * agm(1.0, k_prime))
}

/// `T(a) = 4√(ℓ/g)·K(sin(a/2))`.
pub fn exact_period_oracle(a: f64, g: f64, length: f64) -> Result<f64, PendulumError> {
    let params = PendulumParams::new(g, length, a)?;
    // k' = cos(a/2) avoids forming 1 − sin²(a/2)
    let k = elliptic_k_complementary((0.5 * a).cos());
    Ok(4.0 * (params.length / params.g).sqrt() * k)
}

/// Pendulum energy per unit `mℓ²`: `ω²(1 − cos x) + (ωy)²/2`.
pub fn energy(z: Complex64, omega: f64) -> f64 {
    omega * omega * (1.0 - z.re.cos()) + 0.5 * (omega * z.im).powi(2)
}

/// Relative energy change per unit time between the first and last sample.
pub fn energy_drift_rate(traj: &Trajectory, omega: f64) -> f64 {
    let first = traj.samples[0];
    let last = traj.final_sample();
    let e0 = energy(first.z, omega);
    (energy(last.z, omega) - e0) / (e0 * (last.t - first.t))
}

/// `max_{n ≤ P/2} |z_n − conj(z_{P−n})|` for a walk recorded at every step;
/// zero for an exact flow released at rest, whose half-periods mirror each
/// other across the real axis.
pub fn reversal_defect(traj: &Trajectory, period_steps: usize) -> Result<f64, PendulumError> {
    if traj.record_stride != 1 || traj.samples.len() <= period_steps {
        return Err(invalid(
            "reversal check needs every step of at least one period",
        ));
    }
    Ok((0..=period_steps / 2)
        .map(|n| (traj.samples[n].z - traj.samples[period_steps - n].z.conj()).norm())
        .fold(0.0, f64::max))
}

/// Outcome of the rescaled comparison of `δ_F` and `δ_E` at one `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledRow {
    pub z: Complex64,
    /// `δ_F(εZ)/δ_E(εZ)` as a series in `ε`.
    pub ratio: AsymptoticNumber,
    pub adequal: Decision,
    pub order1: Complex64,
    /// Leading defect `−X³/(6Z)` when `X ≠ 0`.
    pub order2: Complex64,
    pub defect: Defect,
}

/// Forms `δ_F(εZ)/δ_E(εZ) = (εωY − iω sin(εX))/(−iωεZ)` with the amplitude
/// replaced by the formal infinitesimal `ε`, and tests it for adequality
/// with 1. `ω` cancels from the ratio.
pub fn rescaled_adequality_check(
    samples: &[Complex64],
    omega: f64,
    truncation: usize,
) -> Result<Vec<RescaledRow>, PendulumError> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(invalid(format!("ω must be positive, got {omega}")));
    }
    samples
        .iter()
        .map(|&z| {
            if z == Complex64::new(0.0, 0.0) || !(z.norm() <= 1.0 + 1e-12) {
                return Err(invalid(format!("Z must satisfy 0 < |Z| <= 1, got {z}")));
            }
            let x = AsymptoticNumber::monomial(z.re, 1, truncation);
            let num = AsymptoticNumber::monomial(omega * z.im, 1, truncation)
                .checked_add(&x.sin()?.scale(Complex64::new(0.0, -omega)))?;
            let den = AsymptoticNumber::monomial(Complex64::new(0.0, -omega) * z, 1, truncation);
            let ratio = num.checked_div(&den)?;
            let one = AsymptoticNumber::constant(1.0, truncation);
            Ok(RescaledRow {
                z,
                adequal: asymptotic::decide_adequal(&num, &den)?,
                order1: ratio.coeff(1),
                order2: ratio.coeff(2),
                defect: ratio.checked_sub(&one)?.defect(),
                ratio,
            })
        })
        .collect()
}

/// The same ratio at a standard amplitude `a`.
pub fn ratio_at_amplitude(a: f64, z: Complex64, omega: f64) -> Complex64 {
    let num = Complex64::new(a * omega * z.im, -omega * (a * z.re).sin());
    num / (Complex64::new(0.0, -omega * a) * z)
}

/// How meshes are chosen for the period measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPolicy {
    /// Steps per linear period at the coarsest mesh.
    pub steps_per_period: u64,
    /// Number of meshes, each halving the previous; the last two feed a
    /// first-order Richardson extrapolation of the period.
    pub refinements: usize,
    /// Full oscillations averaged per period measurement.
    pub oscillations: u32,
    /// Horizon of the walk deviation sweeps, in linear periods.
    pub deviation_periods: f64,
}

impl Default for LambdaPolicy {
    fn default() -> Self {
        Self {
            steps_per_period: REPORT_MIN_STEPS_PER_PERIOD,
            refinements: 3,
            oscillations: 3,
            deviation_periods: 3.0,
        }
    }
}

impl LambdaPolicy {
    fn validate(&self) -> Result<(), PendulumError> {
        if self.steps_per_period < REPORT_MIN_STEPS_PER_PERIOD {
            return Err(invalid(format!(
                "need at least {REPORT_MIN_STEPS_PER_PERIOD} steps per period, got {}",
                self.steps_per_period
            )));
        }
        if self.refinements < 2 {
            return Err(invalid("Richardson extrapolation needs at least 2 meshes"));
        }
        if self.oscillations < 1 {
            return Err(invalid("need at least one oscillation"));
        }
        if !(self.deviation_periods > 0.0 && self.deviation_periods.is_finite()) {
            return Err(invalid("deviation horizon must be positive"));
        }
        Ok(())
    }

    /// Steps per period at each refinement level.
    pub fn levels(&self) -> Vec<u64> {
        (0..self.refinements)
            .map(|k| self.steps_per_period << k)
            .collect()
    }
}

/// Period of the walk of `field` released at `a`, over `oscillations` full
/// swings. `expected` only sizes the walk.
pub fn walk_period(
    field: &PrevectorField,
    a: f64,
    expected: f64,
    oscillations: u32,
) -> Result<PeriodEstimate, PendulumError> {
    let horizon = (oscillations as f64 + 1.5) * expected;
    let steps = (horizon / field.mesh()).ceil() as u64;
    let traj = walk(field, Complex64::new(a, 0.0), steps, 1)?;
    measure_period(&traj)
}

/// One line of the period table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub a: f64,
    pub lambda: f64,
    #[serde(rename = "T_measured")]
    pub t_measured: f64,
    #[serde(rename = "T_oracle")]
    pub t_oracle: f64,
    #[serde(rename = "T_linear")]
    pub t_linear: f64,
    pub abs_dev: f64,
    pub rel_dev: f64,
}

impl PeriodRow {
    pub const CSV_HEADER: [&'static str; 7] = [
        "a",
        "lambda",
        "T_measured",
        "T_oracle",
        "T_linear",
        "abs_dev",
        "rel_dev",
    ];

    fn new(a: f64, lambda: f64, t_measured: f64, t_oracle: f64, t_linear: f64) -> Self {
        let abs_dev = (t_measured - t_linear).abs();
        Self {
            a,
            lambda,
            t_measured,
            t_oracle,
            t_linear,
            abs_dev,
            rel_dev: abs_dev / t_linear,
        }
    }

    pub fn csv_fields(&self) -> [String; 7] {
        use crate::format::float17;
        [
            float17(self.a),
            float17(self.lambda),
            float17(self.t_measured),
            float17(self.t_oracle),
            float17(self.t_linear),
            float17(self.abs_dev),
            float17(self.rel_dev),
        ]
    }
}

/// Writes rows under the `a,lambda,T_measured,T_oracle,T_linear,abs_dev,rel_dev` header.
pub fn write_period_csv<W: std::io::Write>(rows: &[PeriodRow], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(PeriodRow::CSV_HEADER)?;
    for row in rows {
        out.write_record(row.csv_fields())?;
    }
    out.flush()?;
    Ok(())
}

/// `{fit_exponent, fit_residual, verdict}` for the nonlinear period deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub fit_exponent: Option<f64>,
    pub fit_residual: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallOscillationReport {
    pub params: PendulumParams,
    pub policy: LambdaPolicy,
    /// Walk of `F`, period extrapolated over the mesh levels.
    pub nonlinear_rows: Vec<PeriodRow>,
    /// Walk of `H` at the coarsest mesh.
    pub rotation_rows: Vec<PeriodRow>,
    /// Per-amplitude periods of `F` at every mesh level.
    pub nonlinear_levels: Vec<Vec<PeriodEstimate>>,
    pub period_fit: Option<PowerLawFit>,
    pub summary: PeriodSummary,
    /// `E` against `F` over the amplitude sweep at the coarsest mesh.
    pub linear_vs_nonlinear: AdequalityReport,
    pub linear_vs_nonlinear_runs: Vec<DeviationReport>,
    /// `E` against `H` over a mesh sweep at the largest amplitude.
    pub linear_vs_rotation: AdequalityReport,
    pub linear_vs_rotation_runs: Vec<DeviationReport>,
}

fn validate_amplitudes(amplitudes: &[f64]) -> Result<(), PendulumError> {
    if amplitudes.len() < 3 {
        return Err(invalid("need at least 3 amplitudes"));
    }
    for &a in amplitudes {
        check_amplitude(a)?;
    }
    if !amplitudes.windows(2).all(|w| w[1] < w[0]) {
        return Err(invalid("amplitudes must be strictly decreasing"));
    }
    Ok(())
}

/// Disk that contains both Euler walks from `a` over `horizon`: the
/// linear walk grows like `e^{λω²t/2}`; the factor 2 in the exponent
/// leaves room for the nonlinear one.
fn walk_disk(a: f64, mesh: f64, omega: f64, horizon: f64) -> f64 {
    a * (mesh * omega * omega * horizon).exp() * (1.0 + 1e-9)
}

/// Which two pendulum walks a deviation compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPair {
    /// `F` against `E`; the envelope uses `K = ω` of `F`.
    NonlinearLinear,
    /// `E` against `H`; the envelope uses `K = ω` of `E`.
    LinearRotation,
}

/// Deviation between the two walks of `pair` released at `a`, certified
/// against the Gronwall envelope. `radius` is the disk on which `η` is
/// measured; by default a disk just containing both walks.
pub fn pair_deviation(
    params: &PendulumParams,
    pair: FieldPair,
    mesh: f64,
    horizon: f64,
    radius: Option<f64>,
) -> Result<DeviationReport, PendulumError> {
    let fields = make_fields(params, mesh)?;
    let radius =
        radius.unwrap_or_else(|| walk_disk(params.amplitude, mesh, params.omega(), horizon));
    let (f, g) = match pair {
        FieldPair::NonlinearLinear => (&fields.nonlinear, &fields.linear),
        FieldPair::LinearRotation => (&fields.linear, &fields.rotation),
    };
    Ok(certified_deviation(
        f,
        g,
        params.initial_state(),
        horizon,
        radius,
    )?)
}

/// Amplitude sweep at a fixed mesh; `sup_rel` is the sup deviation over `a`.
pub fn amplitude_sweep(
    params: &PendulumParams,
    pair: FieldPair,
    amplitudes: &[f64],
    mesh: f64,
    horizon: f64,
    radius: Option<f64>,
) -> Result<(AdequalityReport, Vec<DeviationReport>), PendulumError> {
    let runs = amplitudes
        .par_iter()
        .map(|&a| {
            let p = params.with_amplitude(a)?;
            pair_deviation(&p, pair, mesh, horizon, radius).map_err(PendulumError::at(a))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sweep_report(ScaleParameter::Amplitude, amplitudes, runs))
}

/// Mesh sweep at the amplitude in `params`.
pub fn mesh_sweep(
    params: &PendulumParams,
    pair: FieldPair,
    meshes: &[f64],
    horizon: f64,
    radius: Option<f64>,
) -> Result<(AdequalityReport, Vec<DeviationReport>), PendulumError> {
    let runs = meshes
        .par_iter()
        .map(|&mesh| pair_deviation(params, pair, mesh, horizon, radius))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(sweep_report(ScaleParameter::Mesh, meshes, runs))
}

fn sweep_report(
    parameter: ScaleParameter,
    scales: &[f64],
    runs: Vec<DeviationReport>,
) -> (AdequalityReport, Vec<DeviationReport>) {
    let mut paired: Vec<(f64, DeviationReport)> = scales.iter().copied().zip(runs).collect();
    paired.sort_by(|a, b| b.0.total_cmp(&a.0));
    let rows = paired
        .iter()
        .map(|(scale, r)| SweepRow {
            scale: *scale,
            sup_abs: r.sup_abs,
            sup_rel: r.sup_rel,
        })
        .collect();
    (
        AdequalityReport::from_rows(parameter, rows),
        paired.into_iter().map(|(_, r)| r).collect(),
    )
}

/// First-order Richardson extrapolation from the two finest estimates.
fn extrapolate_period(levels: &[PeriodEstimate]) -> f64 {
    let [coarse, fine] = [levels[levels.len() - 2], levels[levels.len() - 1]];
    (coarse.mesh * fine.period - fine.mesh * coarse.period) / (coarse.mesh - fine.mesh)
}

/// Periods of `F` and `H` over an amplitude sweep, the fit of
/// `|T_F(a) − 2π√(ℓ/g)|` against `a`, and the two walk deviation sweeps.
pub fn small_oscillation_report(
    amplitudes: &[f64],
    params: &PendulumParams,
    policy: &LambdaPolicy,
) -> Result<SmallOscillationReport, PendulumError> {
    validate_amplitudes(amplitudes)?;
    policy.validate()?;
    let omega = params.omega();
    let t_linear = params.linear_period();
    let levels = policy.levels();
    let meshes = levels
        .iter()
        .map(|&n| choose_lambda(omega, n))
        .collect::<Result<Vec<_>, _>>()?;
    let base_mesh = meshes[0];

    let per_amplitude = amplitudes
        .par_iter()
        .map(|&a| {
            let run = || -> Result<_, PendulumError> {
                let p = params.with_amplitude(a)?;
                let oracle = exact_period_oracle(a, p.g, p.length)?;
                let estimates = meshes
                    .iter()
                    .map(|&mesh| {
                        let fields = make_fields(&p, mesh)?;
                        walk_period(&fields.nonlinear, a, oracle, policy.oscillations)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let fields = make_fields(&p, base_mesh)?;
                let h = walk_period(&fields.rotation, a, t_linear, policy.oscillations)?;
                let finest = meshes[meshes.len() - 1];
                let f_row =
                    PeriodRow::new(a, finest, extrapolate_period(&estimates), oracle, t_linear);
                let h_row = PeriodRow::new(a, base_mesh, h.period, t_linear, t_linear);
                Ok((f_row, h_row, estimates))
            };
            run().map_err(PendulumError::at(a))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut nonlinear_rows = Vec::new();
    let mut rotation_rows = Vec::new();
    let mut nonlinear_levels = Vec::new();
    for (f, h, est) in per_amplitude {
        nonlinear_rows.push(f);
        rotation_rows.push(h);
        nonlinear_levels.push(est);
    }

    let devs: Vec<f64> = nonlinear_rows.iter().map(|r| r.abs_dev).collect();
    let (period_fit, verdict, _) = flows::trend_verdict(amplitudes, &devs);
    let summary = PeriodSummary {
        fit_exponent: period_fit.map(|f| f.exponent),
        fit_residual: period_fit.map(|f| f.residual),
        verdict,
    };

    let horizon = policy.deviation_periods * t_linear;
    let (linear_vs_nonlinear, linear_vs_nonlinear_runs) = amplitude_sweep(
        params,
        FieldPair::NonlinearLinear,
        amplitudes,
        base_mesh,
        horizon,
        None,
    )?;

    let a_max = amplitudes[0];
    let sweep_levels: Vec<u64> = [100, 10, 1]
        .iter()
        .map(|d| (policy.steps_per_period / d).max(MIN_STEPS_PER_PERIOD))
        .collect();
    let sweep_meshes = sweep_levels
        .iter()
        .map(|&n| choose_lambda(omega, n))
        .collect::<Result<Vec<_>, _>>()?;
    let (linear_vs_rotation, linear_vs_rotation_runs) = mesh_sweep(
        &params.with_amplitude(a_max)?,
        FieldPair::LinearRotation,
        &sweep_meshes,
        horizon,
        None,
    )?;

    Ok(SmallOscillationReport {
        params: *params,
        policy: *policy,
        nonlinear_rows,
        rotation_rows,
        nonlinear_levels,
        period_fit,
        summary,
        linear_vs_nonlinear,
        linear_vs_nonlinear_runs,
        linear_vs_rotation,
        linear_vs_rotation_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{walk, walk_for};

    fn unit(a: f64) -> PendulumParams {
        PendulumParams::new(1.0, 1.0, a).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn params_validate_invariants() {
        assert!(PendulumParams::new(0.0, 1.0, 0.1).is_err());
        assert!(PendulumParams::new(1.0, -1.0, 0.1).is_err());
        assert!(PendulumParams::new(1.0, 1.0, PI).is_err());
        assert!(PendulumParams::new(1.0, 1.0, 0.0).is_err());
        let p = PendulumParams::new(9.81, 2.0, 0.3).unwrap();
        let w2 = p.omega() * p.omega();
        assert!((w2 / (9.81 / 2.0) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn displacement_examples() {
        let lambda = 1e-3;
        let fields = make_fields(&unit(0.2), lambda).unwrap();
        assert_eq!(fields.nonlinear.displacement_at(c(0.0, 0.0)), c(0.0, 0.0));
        let d = fields.linear.displacement_at(c(0.2, 0.0));
        assert_eq!(d.re, 0.0);
        assert!((d.im + lambda * 0.2).abs() < 1e-18);
        let expected = rotation_to_linear_ratio(1.0, lambda);
        let oracle = (c(0.0, -lambda).exp() - 1.0) / c(0.0, -lambda);
        assert!((expected - oracle).norm() < 1e-12);
        for z in [c(0.3, 0.1), c(-1.0, 2.0), c(0.0, -0.5)] {
            let ratio = fields.rotation.displacement_at(z) / fields.linear.displacement_at(z);
            assert!((ratio - expected).norm() < 1e-9, "{z}: {ratio}");
        }
    }

    #[test]
    fn rotation_displacement_is_adequal_to_linear() {
        // |e^{−iθ} − 1 + iθ| ≤ θ²/2, so |δ_H/δ_E − 1| ≤ λω/2
        for lambda in [1e-1, 1e-2, 1e-3, 1e-4] {
            let fields = make_fields(&unit(0.1), lambda).unwrap();
            for z in [c(1.0, 0.0), c(0.3, -0.2), c(-0.01, 0.7)] {
                let ratio = fields.rotation.displacement_at(z) / fields.linear.displacement_at(z);
                let gap = (ratio - 1.0).norm();
                // plus rounding from forming e^{−iλω}z − z
                let rounding = 4.0 * f64::EPSILON / lambda;
                assert!(gap <= 0.5 * lambda + rounding, "λ={lambda}, z={z}: {gap}");
                assert!(gap >= 0.49 * lambda);
            }
        }
    }

    #[test]
    fn choose_lambda_examples() {
        assert_eq!(choose_lambda(1.0, 1000).unwrap(), TAU / 1000.0);
        assert!((choose_lambda(2.0, 1000).unwrap() - PI / 1000.0).abs() < 1e-18);
        let lambda = choose_lambda(1.7, 12345).unwrap();
        assert!((12345.0 * lambda * 1.7 - TAU).abs() <= 8.0 * f64::EPSILON * TAU);
        assert!(choose_lambda(1.0, 7).is_err());
    }

    #[test]
    fn closed_form_quarter_and_full_turn() {
        assert_eq!(h_walk_closed_form(0.4, 0.0, 1.3), c(0.4, -0.0));
        let z = h_walk_closed_form(1.0, PI / 2.0, 1.0);
        assert!((z - c(0.0, -1.0)).norm() < 1e-15);
        let z = h_walk_closed_form(0.7, TAU / 2.5, 2.5);
        assert!((z - c(0.7, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_period_is_exact() {
        let p = unit(0.3);
        let lambda = choose_lambda(1.0, 10_000).unwrap();
        let fields = make_fields(&p, lambda).unwrap();
        let est = walk_period(&fields.rotation, 0.3, TAU, 3).unwrap();
        assert!((est.period - TAU).abs() < 1e-10, "{}", est.period);
        assert_eq!(est.oscillations, 3);
    }

    #[test]
    fn nonlinear_period_matches_oracle() {
        let p = unit(0.5);
        let fields = make_fields(&p, 1e-5).unwrap();
        let oracle = exact_period_oracle(0.5, 1.0, 1.0).unwrap();
        let est = walk_period(&fields.nonlinear, 0.5, oracle, 1).unwrap();
        assert!(
            (est.period / oracle - 1.0).abs() < 1e-4,
            "{} vs {oracle}",
            est.period
        );
    }

    #[test]
    fn fixed_point_has_no_period() {
        let fields = make_fields(&unit(0.1), 1e-2).unwrap();
        let traj = walk(&fields.nonlinear, c(0.0, 0.0), 10_000, 1).unwrap();
        assert!(matches!(
            measure_period(&traj),
            Err(PendulumError::NoFullOscillation)
        ));
    }

    #[test]
    fn oracle_limits_and_monotonicity() {
        let t0 = TAU;
        let tiny = exact_period_oracle(1e-8, 1.0, 1.0).unwrap();
        assert!((tiny - t0).abs() < 1e-12);
        let ratio = exact_period_oracle(0.1, 1.0, 1.0).unwrap() / t0 - 1.0;
        assert!((ratio - 6.25e-4).abs() < 1e-6, "{ratio}");
        let [a, b, c] = [0.2, 0.4, 0.8].map(|a| exact_period_oracle(a, 1.0, 1.0).unwrap());
        assert!(a < b && b < c);
        assert!(exact_period_oracle(PI, 1.0, 1.0).is_err());
        let scaled = exact_period_oracle(0.3, 9.81, 0.5).unwrap();
        let unit = exact_period_oracle(0.3, 1.0, 1.0).unwrap();
        assert!((scaled - unit * (0.5f64 / 9.81).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rescaled_ratio_examples() {
        let rows = rescaled_adequality_check(&[c(1.0, 0.0), c(0.0, 1.0)], 1.0, 8).unwrap();
        let along_x = &rows[0];
        assert_eq!(along_x.adequal, Decision::Holds);
        assert_eq!(along_x.order1, c(0.0, 0.0));
        assert!((along_x.order2 + 1.0 / 6.0).norm() < 1e-15);
        assert!((along_x.ratio.coeff(4) - 1.0 / 120.0).norm() < 1e-15);
        assert!(matches!(along_x.defect, Defect::Leading { order: 2, .. }));

        let pure_velocity = &rows[1];
        assert_eq!(pure_velocity.ratio, AsymptoticNumber::constant(1.0, 8));
        assert_eq!(pure_velocity.defect, Defect::None);
        assert!(rescaled_adequality_check(&[c(0.0, 0.0)], 1.0, 8).is_err());
        assert!(rescaled_adequality_check(&[c(2.0, 0.0)], 1.0, 8).is_err());
    }

    #[test]
    fn appreciable_amplitude_breaks_adequality() {
        let r = ratio_at_amplitude(1.0, c(1.0, 0.0), 1.0);
        assert!((r - c(1f64.sin(), 0.0)).norm() < 1e-15);
        let lhs = AsymptoticNumber::constant(r, 8);
        let one = AsymptoticNumber::constant(1.0, 8);
        assert!(!asymptotic::adequal(&lhs, &one).unwrap());
    }

    #[test]
    fn energy_drift_is_first_order() {
        let p = unit(0.3);
        let drift = |lambda: f64| {
            let fields = make_fields(&p, lambda).unwrap();
            energy_drift_rate(
                &walk_for(&fields.nonlinear, p.initial_state(), TAU).unwrap(),
                1.0,
            )
        };
        let ratio = drift(1e-3) / drift(5e-4);
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn half_periods_mirror() {
        let steps = 4000u64;
        let lambda = choose_lambda(1.0, steps).unwrap();
        for a in [0.1, 0.5] {
            let p = unit(a);
            let fields = make_fields(&p, lambda).unwrap();
            let traj = walk(&fields.linear, p.initial_state(), steps, 1).unwrap();
            assert!(reversal_defect(&traj, steps as usize).unwrap() <= 10.0 * lambda);
            let oracle = exact_period_oracle(a, 1.0, 1.0).unwrap();
            let period_steps = (oracle / lambda).round() as usize;
            let traj = walk(&fields.nonlinear, p.initial_state(), period_steps as u64, 1).unwrap();
            assert!(reversal_defect(&traj, period_steps).unwrap() <= 10.0 * lambda);
        }
    }

    #[test]
    fn report_rejects_bad_sweeps() {
        let p = unit(0.1);
        let policy = LambdaPolicy::default();
        assert!(small_oscillation_report(&[0.1, 0.05], &p, &policy).is_err());
        assert!(small_oscillation_report(&[0.1, 0.2, 0.05], &p, &policy).is_err());
        assert!(small_oscillation_report(&[3.5, 0.2, 0.05], &p, &policy).is_err());
        let coarse = LambdaPolicy {
            steps_per_period: 1000,
            ..policy
        };
        assert!(small_oscillation_report(&[0.2, 0.1, 0.05], &p, &coarse).is_err());
    }

    #[test]
    fn period_csv_header() {
        let row = PeriodRow::new(0.1, 1e-3, TAU, TAU, TAU);
        let mut buf = Vec::new();
        write_period_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "a,lambda,T_measured,T_oracle,T_linear,abs_dev,rel_dev"
        );
        assert_eq!(text.lines().count(), 2);
    }
}
