//! Prevector fields and their walks.
//!
//! A prevector field is a self-map `F(z) = z + δ(z)` of the plane, usually
//! built from a classical vector field `V` and a mesh `λ` as `δ = λV`. Its
//! walk `F^N(z₀)` read at time `t = Nλ` is Euler's method with a fixed mesh.
//! This module iterates walks, extracts their shadow by mesh refinement,
//! measures the deviation between two walks in lockstep and bounds that
//! deviation with the discrete Gronwall envelope.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::float17;

/// RMS residual (natural-log space) above which a power-law fit is not reported.
pub const FIT_RESIDUAL_THRESHOLD: f64 = 0.25;
/// Smallest fitted exponent read as "deviation/scale → 0".
pub const ADEQUAL_MIN_EXPONENT: f64 = 0.5;
/// Fitted exponents at or below this read as "no decay".
pub const NOT_ADEQUAL_MAX_EXPONENT: f64 = 0.1;
/// Consecutive shadow estimates closer than this (relative) are treated as identical.
const SHADOW_DEGENERATE_RELATIVE: f64 = 1e-12;
/// Samples retained by default per trajectory.
const DEFAULT_SAMPLE_BUDGET: u64 = 10_000;
/// Radial rings in the polar grid used to measure `η`.
pub const DISCREPANCY_RESOLUTION: usize = 64;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("mesh must be positive and finite, got {0}")]
    InvalidMesh(f64),
    #[error("record stride must be positive")]
    InvalidStride,
    #[error("Lipschitz constant must be positive and finite, got {0}")]
    InvalidLipschitz(f64),
    #[error("initial state {z0} lies outside the domain |z| <= {radius}")]
    OutsideDomain { z0: Complex64, radius: f64 },
    #[error("walks must share a mesh ({0} vs {1})")]
    MeshMismatch(f64, f64),
    #[error("mesh not smaller than horizon (mesh {mesh}, horizon {horizon})")]
    MeshNotSmallerThanHorizon { mesh: f64, horizon: f64 },
    #[error("need at least 3 strictly decreasing meshes, got {0:?}")]
    BadMeshSequence(Vec<f64>),
    #[error("walk at mesh {mesh} terminated early: {reason}")]
    WalkTerminated {
        mesh: f64,
        reason: TerminationReason,
    },
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

type PlaneMap = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// A classical vector field on the plane with a declared Lipschitz constant.
#[derive(Clone)]
pub struct VectorField {
    eval: PlaneMap,
    lipschitz: f64,
    domain_radius: Option<f64>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("lipschitz", &self.lipschitz)
            .field("domain_radius", &self.domain_radius)
            .finish_non_exhaustive()
    }
}

fn check_lipschitz(k: f64) -> Result<f64, FlowError> {
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(FlowError::InvalidLipschitz(k))
    }
}

fn check_radius(r: f64) -> Result<f64, FlowError> {
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(FlowError::InvalidArgument(format!(
            "domain radius must be positive, got {r}"
        )))
    }
}

impl VectorField {
    pub fn new(
        eval: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Result<Self, FlowError> {
        Ok(Self {
            eval: Arc::new(eval),
            lipschitz: check_lipschitz(lipschitz)?,
            domain_radius: None,
        })
    }

    /// `V ≡ 0`; every point is a fixed point.
    pub fn zero() -> Self {
        Self {
            eval: Arc::new(|_| Complex64::new(0.0, 0.0)),
            lipschitz: 1.0,
            domain_radius: None,
        }
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Result<Self, FlowError> {
        self.domain_radius = Some(check_radius(radius)?);
        Ok(self)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.eval)(z)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn domain_radius(&self) -> Option<f64> {
        self.domain_radius
    }

    /// First pair violating `|V(z) − V(w)| ≤ K|z − w|`, if any.
    pub fn lipschitz_violation(
        &self,
        pairs: impl IntoIterator<Item = (Complex64, Complex64)>,
    ) -> Option<(Complex64, Complex64)> {
        pairs.into_iter().find(|&(z, w)| {
            (self.eval(z) - self.eval(w)).norm() > self.lipschitz * (z - w).norm() * (1.0 + 1e-12)
        })
    }
}

#[derive(Clone)]
enum Generator {
    Displacement(VectorField),
    ExactMap(PlaneMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Displacement,
    ExactMap,
}

/// `F(z) = z + δ(z)` at a fixed mesh `λ`.
#[derive(Clone)]
pub struct PrevectorField {
    generator: Generator,
    mesh: f64,
    lipschitz: f64,
    domain_radius: Option<f64>,
}

impl fmt::Debug for PrevectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrevectorField")
            .field("kind", &self.kind())
            .field("mesh", &self.mesh)
            .field("lipschitz", &self.lipschitz)
            .field("domain_radius", &self.domain_radius)
            .finish()
    }
}

fn check_mesh(mesh: f64) -> Result<f64, FlowError> {
    if mesh > 0.0 && mesh.is_finite() {
        Ok(mesh)
    } else {
        Err(FlowError::InvalidMesh(mesh))
    }
}

impl PrevectorField {
    /// `δ(z) = λ·V(z)`.
    pub fn displacement(field: VectorField, mesh: f64) -> Result<Self, FlowError> {
        Ok(Self {
            mesh: check_mesh(mesh)?,
            lipschitz: field.lipschitz,
            domain_radius: field.domain_radius,
            generator: Generator::Displacement(field),
        })
    }

    /// A prevector field given directly as a self-map of the plane.
    /// `lipschitz` is the constant `K` with `|δ(z) − δ(w)| ≤ Kλ|z − w|`.
    pub fn exact_map(
        map: impl Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        mesh: f64,
        lipschitz: f64,
    ) -> Result<Self, FlowError> {
        Ok(Self {
            generator: Generator::ExactMap(Arc::new(map)),
            mesh: check_mesh(mesh)?,
            lipschitz: check_lipschitz(lipschitz)?,
            domain_radius: None,
        })
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Result<Self, FlowError> {
        self.domain_radius = Some(check_radius(radius)?);
        Ok(self)
    }

    pub fn kind(&self) -> FieldKind {
        match self.generator {
            Generator::Displacement(_) => FieldKind::Displacement,
            Generator::ExactMap(_) => FieldKind::ExactMap,
        }
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Escape radius for walks started at `z0`.
    pub fn domain_radius_for(&self, z0: Complex64) -> f64 {
        self.domain_radius.unwrap_or(10.0 * z0.norm() + 1.0)
    }

    /// One step: `F(z)`.
    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        match &self.generator {
            Generator::Displacement(v) => z + self.mesh * v.eval(z),
            Generator::ExactMap(map) => map(z),
        }
    }

    /// `δ(z) = F(z) − z`.
    pub fn displacement_at(&self, z: Complex64) -> Complex64 {
        match &self.generator {
            Generator::Displacement(v) => self.mesh * v.eval(z),
            Generator::ExactMap(map) => map(z) - z,
        }
    }
}

/// Number of steps realizing time `t` at mesh `λ`: `⌊t/λ⌋`, snapped to the
/// nearest integer when `t/λ` is within rounding of it.
pub fn steps_for(t: f64, mesh: f64) -> u64 {
    let ratio = t / mesh;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        ratio.floor() as u64
    }
}

/// Default stride keeping roughly ten thousand samples.
pub fn default_stride(steps: u64) -> u64 {
    (steps / DEFAULT_SAMPLE_BUDGET).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub n: u64,
    pub t: f64,
    pub z: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    DomainEscape,
    NumericalBlowup,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::DomainEscape => "left the domain",
            TerminationReason::NumericalBlowup => "numerical blowup",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyTermination {
    /// First step whose state was rejected.
    pub step: u64,
    pub reason: TerminationReason,
}

/// A recorded walk `z_n = F^n(z₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mesh: f64,
    pub z0: Complex64,
    pub requested_steps: u64,
    pub record_stride: u64,
    pub samples: Vec<Sample>,
    pub terminated_early: Option<EarlyTermination>,
    /// Largest `|z_n|` over every step taken, recorded or not.
    pub max_modulus: f64,
    pub domain_radius: f64,
}

impl Trajectory {
    pub fn final_sample(&self) -> Sample {
        *self.samples.last().expect("a trajectory always holds z0")
    }

    pub fn final_state(&self) -> Complex64 {
        self.final_sample().z
    }

    pub fn completed(&self) -> bool {
        self.terminated_early.is_none()
    }

    /// CSV with header `n,t,re,im`, doubles at 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["n", "t", "re", "im"])?;
        for s in &self.samples {
            out.write_record([
                s.n.to_string(),
                float17(s.t),
                float17(s.z.re),
                float17(s.z.im),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn sample(n: u64, mesh: f64, z: Complex64) -> Sample {
    Sample {
        n,
        t: n as f64 * mesh,
        z,
    }
}

/// Iterates `F` from `z0` for `steps` steps, recording every `record_stride`
/// steps and the last state.
pub fn walk(
    field: &PrevectorField,
    z0: Complex64,
    steps: u64,
    record_stride: u64,
) -> Result<Trajectory, FlowError> {
    if record_stride == 0 {
        return Err(FlowError::InvalidStride);
    }
    let radius = field.domain_radius_for(z0);
    if !(z0.norm() <= radius) {
        return Err(FlowError::OutsideDomain { z0, radius });
    }
    let mesh = field.mesh;
    let mut samples = Vec::with_capacity((steps / record_stride + 2).min(1 << 24) as usize);
    samples.push(sample(0, mesh, z0));
    let mut z = z0;
    let mut max_modulus = z0.norm();
    let mut terminated_early = None;
    let mut last_n = 0;
    for n in 1..=steps {
        let next = field.apply(z);
        let modulus = next.norm();
        if !modulus.is_finite() {
            terminated_early = Some(EarlyTermination {
                step: n,
                reason: TerminationReason::NumericalBlowup,
            });
            break;
        }
        if modulus > radius {
            terminated_early = Some(EarlyTermination {
                step: n,
                reason: TerminationReason::DomainEscape,
            });
            break;
        }
        z = next;
        last_n = n;
        max_modulus = max_modulus.max(modulus);
        if n % record_stride == 0 {
            samples.push(sample(n, mesh, z));
        }
    }
    if samples.last().map(|s| s.n) != Some(last_n) {
        samples.push(sample(last_n, mesh, z));
    }
    Ok(Trajectory {
        mesh,
        z0,
        requested_steps: steps,
        record_stride,
        samples,
        terminated_early,
        max_modulus,
        domain_radius: radius,
    })
}

/// Walks for `⌊t/λ⌋` steps with the default stride.
pub fn walk_for(field: &PrevectorField, z0: Complex64, t: f64) -> Result<Trajectory, FlowError> {
    let steps = steps_for(t, field.mesh);
    walk(field, z0, steps, default_stride(steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowVerdict {
    /// Differences shrink; the value is a first-order Richardson limit.
    Resolved,
    /// Every mesh gave the same state; the walk is exact.
    Exact,
    ShadowNotResolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshValue {
    pub mesh: f64,
    pub steps: u64,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowEstimate {
    pub value: Option<Complex64>,
    pub verdict: ShadowVerdict,
    /// Observed convergence order from the last three meshes; `None` when
    /// the walk is exact or the order could not be bracketed.
    pub observed_order: Option<f64>,
    pub per_mesh: Vec<MeshValue>,
}

/// Solves `(λ1^p − λ2^p)/(λ2^p − λ3^p) = target` for `p` by bisection.
fn observed_order(meshes: [f64; 3], target: f64) -> Option<f64> {
    let [l1, l2, l3] = meshes;
    let g = |p: f64| ((l1.powf(p) - l2.powf(p)) / (l2.powf(p) - l3.powf(p))).ln() - target.ln();
    let (mut lo, mut hi) = (1e-3, 30.0);
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo.is_finite() && ghi.is_finite()) || glo.signum() == ghi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid).signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Shadow of the walk at time `t`: final states `F_{⌊t/λ⌋}(z0)` over a
/// decreasing mesh sequence, extrapolated to `λ → 0` assuming first-order
/// error.
pub fn flow_shadow<B>(
    builder: B,
    z0: Complex64,
    t: f64,
    meshes: &[f64],
) -> Result<ShadowEstimate, FlowError>
where
    B: Fn(f64) -> Result<PrevectorField, FlowError> + Sync,
{
    if !(t >= 0.0 && t.is_finite()) {
        return Err(FlowError::InvalidArgument(format!(
            "horizon must be >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(ShadowEstimate {
            value: Some(z0),
            verdict: ShadowVerdict::Exact,
            observed_order: None,
            per_mesh: Vec::new(),
        });
    }
    let decreasing = meshes.windows(2).all(|w| w[1] < w[0]);
    if meshes.len() < 3 || !decreasing || meshes.iter().any(|&m| !(m > 0.0)) {
        return Err(FlowError::BadMeshSequence(meshes.to_vec()));
    }
    if let Some(&mesh) = meshes.iter().find(|&&m| m >= t) {
        return Err(FlowError::MeshNotSmallerThanHorizon { mesh, horizon: t });
    }
    let per_mesh = meshes
        .par_iter()
        .map(|&mesh| {
            let field = builder(mesh)?;
            let steps = steps_for(t, field.mesh());
            let traj = walk(&field, z0, steps, steps.max(1))?;
            if let Some(end) = traj.terminated_early {
                return Err(FlowError::WalkTerminated {
                    mesh,
                    reason: end.reason,
                });
            }
            Ok(MeshValue {
                mesh,
                steps,
                value: traj.final_state(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = per_mesh.len();
    let [a, b, c] = [per_mesh[n - 3], per_mesh[n - 2], per_mesh[n - 1]];
    let d_coarse = (a.value - b.value).norm();
    let d_fine = (b.value - c.value).norm();
    let size = c.value.norm().max(1.0);
    if d_coarse <= SHADOW_DEGENERATE_RELATIVE * size && d_fine <= SHADOW_DEGENERATE_RELATIVE * size
    {
        return Ok(ShadowEstimate {
            value: Some(c.value),
            verdict: ShadowVerdict::Exact,
            observed_order: None,
            per_mesh,
        });
    }
    if !(d_fine < d_coarse) {
        return Ok(ShadowEstimate {
            value: None,
            verdict: ShadowVerdict::ShadowNotResolved,
            observed_order: None,
            per_mesh,
        });
    }
    let order = observed_order([a.mesh, b.mesh, c.mesh], d_coarse / d_fine);
    let value = (b.mesh * c.value - c.mesh * b.value) / (b.mesh - c.mesh);
    Ok(ShadowEstimate {
        value: Some(value),
        verdict: ShadowVerdict::Resolved,
        observed_order: order,
        per_mesh,
    })
}

/// Per-step discrepancy coefficient `η` and Lipschitz constant `K` feeding
/// the Gronwall envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub eta: f64,
    pub lipschitz: f64,
}

impl Envelope {
    pub fn bound(&self, t: f64) -> f64 {
        envelope_value(self.eta, self.lipschitz, t)
    }
}

fn envelope_value(eta: f64, k: f64, t: f64) -> f64 {
    if k == 0.0 {
        eta * t
    } else {
        eta / k * (k * t).exp_m1()
    }
}

/// `(η/K)(e^{Kt} − 1)`, the discrete Gronwall bound on `|F_t(z0) − G_t(z0)|`
/// when `sup|δ_F − δ_G| ≤ ηλ` and `δ_F` is `Kλ`-Lipschitz. `K = 0` gives the
/// limit `η·t`.
pub fn gronwall_envelope(eta: f64, lipschitz: f64, t: f64) -> Result<f64, FlowError> {
    for (name, v) in [("eta", eta), ("K", lipschitz), ("t", t)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(FlowError::InvalidArgument(format!(
                "{name} must be non-negative and finite, got {v}"
            )));
        }
    }
    Ok(envelope_value(eta, lipschitz, t))
}

fn check_same_mesh(f: &PrevectorField, g: &PrevectorField) -> Result<f64, FlowError> {
    let (a, b) = (f.mesh(), g.mesh());
    if (a - b).abs() > 1e-12 * a.max(b) {
        return Err(FlowError::MeshMismatch(a, b));
    }
    Ok(a)
}

/// `η = sup_{|z| ≤ radius} |δ_F(z) − δ_G(z)| / λ`, sampled on a polar grid
/// that includes the boundary circle and the positive real axis.
pub fn measure_discrepancy(
    f: &PrevectorField,
    g: &PrevectorField,
    radius: f64,
    resolution: usize,
) -> Result<f64, FlowError> {
    let mesh = check_same_mesh(f, g)?;
    check_radius(radius)?;
    let resolution = resolution.max(1);
    let angles = 4 * resolution;
    let gap = |z: Complex64| (f.displacement_at(z) - g.displacement_at(z)).norm();
    let mut sup = gap(Complex64::new(0.0, 0.0));
    for i in 1..=resolution {
        let r = radius * i as f64 / resolution as f64;
        for j in 0..angles {
            let theta = std::f64::consts::TAU * j as f64 / angles as f64;
            sup = sup.max(gap(Complex64::from_polar(r, theta)));
        }
    }
    Ok(sup / mesh)
}

#[derive(Debug, Clone, Default)]
pub struct DeviationOptions {
    /// Stride of the stored deviation profile; defaults to [`default_stride`].
    pub record_stride: Option<u64>,
    /// When set, every step is checked against this envelope.
    pub envelope: Option<Envelope>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub n: u64,
    pub t: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub envelope: Envelope,
    pub violations: u64,
    /// Largest `deviation / bound` seen (0 when both vanish).
    pub worst_ratio: f64,
    pub first_violation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub mesh: f64,
    pub z0: Complex64,
    pub requested_steps: u64,
    pub steps_compared: u64,
    pub sup_abs: f64,
    pub sup_rel: f64,
    pub profile: Vec<DeviationSample>,
    pub truncated: Option<EarlyTermination>,
    pub max_modulus: f64,
    pub envelope_check: Option<EnvelopeCheck>,
}

/// Walks `F` and `G` in lockstep from `z0` for `⌊t_final/λ⌋` steps and
/// reports the sup of `|F_n(z0) − G_n(z0)|` over every step.
pub fn walk_deviation(
    f: &PrevectorField,
    g: &PrevectorField,
    z0: Complex64,
    t_final: f64,
    options: &DeviationOptions,
) -> Result<DeviationReport, FlowError> {
    let mesh = check_same_mesh(f, g)?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(FlowError::InvalidArgument(format!(
            "horizon must be >= 0, got {t_final}"
        )));
    }
    if z0.norm() == 0.0 {
        return Err(FlowError::InvalidArgument(
            "relative deviation needs a nonzero initial state".into(),
        ));
    }
    let (rf, rg) = (f.domain_radius_for(z0), g.domain_radius_for(z0));
    if !(z0.norm() <= rf.min(rg)) {
        return Err(FlowError::OutsideDomain {
            z0,
            radius: rf.min(rg),
        });
    }
    let steps = steps_for(t_final, mesh);
    let stride = options
        .record_stride
        .unwrap_or_else(|| default_stride(steps))
        .max(1);
    let mut check = options.envelope.map(|envelope| EnvelopeCheck {
        envelope,
        violations: 0,
        worst_ratio: 0.0,
        first_violation: None,
    });

    let (mut zf, mut zg) = (z0, z0);
    let mut sup_abs = 0.0f64;
    let mut max_modulus = z0.norm();
    let mut profile = vec![DeviationSample {
        n: 0,
        t: 0.0,
        deviation: 0.0,
    }];
    let mut truncated = None;
    let mut compared = 0;
    for n in 1..=steps {
        let (nf, ng) = (f.apply(zf), g.apply(zg));
        let (mf, mg) = (nf.norm(), ng.norm());
        let reason = if !(mf.is_finite() && mg.is_finite()) {
            Some(TerminationReason::NumericalBlowup)
        } else if mf > rf || mg > rg {
            Some(TerminationReason::DomainEscape)
        } else {
            None
        };
        if let Some(reason) = reason {
            truncated = Some(EarlyTermination { step: n, reason });
            break;
        }
        zf = nf;
        zg = ng;
        compared = n;
        max_modulus = max_modulus.max(mf).max(mg);
        let t = n as f64 * mesh;
        let deviation = (zf - zg).norm();
        sup_abs = sup_abs.max(deviation);
        if let Some(check) = check.as_mut() {
            let bound = check.envelope.bound(t);
            if deviation > bound {
                check.violations += 1;
                check.first_violation.get_or_insert(n);
            }
            let ratio = if bound > 0.0 {
                deviation / bound
            } else if deviation > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            check.worst_ratio = check.worst_ratio.max(ratio);
        }
        if n % stride == 0 || n == steps {
            profile.push(DeviationSample { n, t, deviation });
        }
    }
    Ok(DeviationReport {
        mesh,
        z0,
        requested_steps: steps,
        steps_compared: compared,
        sup_abs,
        sup_rel: sup_abs / z0.norm(),
        profile,
        truncated,
        max_modulus,
        envelope_check: check,
    })
}

/// Lockstep deviation checked step by step against the Gronwall envelope,
/// with `η` measured on the disk `|z| ≤ radius` and `K` taken from `f`.
///
/// Fails if either walk leaves that disk, since `η` would no longer bound
/// the per-step discrepancy along the walks.
pub fn certified_deviation(
    f: &PrevectorField,
    g: &PrevectorField,
    z0: Complex64,
    t_final: f64,
    radius: f64,
) -> Result<DeviationReport, FlowError> {
    let eta = measure_discrepancy(f, g, radius, DISCREPANCY_RESOLUTION)?;
    let options = DeviationOptions {
        record_stride: None,
        envelope: Some(Envelope {
            eta,
            lipschitz: f.lipschitz(),
        }),
    };
    let report = walk_deviation(f, g, z0, t_final, &options)?;
    if report.max_modulus > radius {
        return Err(FlowError::InvalidArgument(format!(
            "walks reached |z| = {} outside the discrepancy disk of radius {radius}",
            report.max_modulus
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of the fit in natural-log space.
    pub residual: f64,
    pub points_used: usize,
    /// Points dropped because their deviation was zero.
    pub zeros_excluded: usize,
}

/// Least-squares fit of `ln(dev) = ln C + p·ln(scale)`.
pub fn fit_power_law(scales: &[f64], deviations: &[f64]) -> Result<PowerLawFit, FlowError> {
    if scales.len() != deviations.len() {
        return Err(FlowError::InvalidArgument(format!(
            "{} scales but {} deviations",
            scales.len(),
            deviations.len()
        )));
    }
    if scales.iter().any(|&s| !(s > 0.0 && s.is_finite()))
        || !scales.windows(2).all(|w| w[1] < w[0])
    {
        return Err(FlowError::InvalidArgument(
            "scales must be positive and strictly decreasing".into(),
        ));
    }
    if deviations.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(FlowError::InvalidArgument(
            "deviations must be finite and non-negative".into(),
        ));
    }
    let points: Vec<(f64, f64)> = scales
        .iter()
        .zip(deviations)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&s, &d)| (s.ln(), d.ln()))
        .collect();
    let zeros_excluded = scales.len() - points.len();
    if points.len() < 3 {
        return Err(FlowError::Inconclusive(format!(
            "{} usable points ({} zero deviations excluded), need 3",
            points.len(),
            zeros_excluded
        )));
    }
    let count = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - exponent * p.0).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        residual,
        points_used: points.len(),
        zeros_excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleParameter {
    #[serde(rename = "lambda")]
    Mesh,
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AdequalTrend,
    NotAdequal,
    Inconclusive,
}

/// One row of a sweep: `{scale, sup_abs, sup_rel}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scale: f64,
    pub sup_abs: f64,
    pub sup_rel: f64,
}

/// `{exponent, prefactor, residual, verdict}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub exponent: Option<f64>,
    pub prefactor: Option<f64>,
    pub residual: Option<f64>,
    pub verdict: Verdict,
}

/// Fits `values ≈ C·scale^p` and classifies the trend toward zero.
/// `scales` must be strictly decreasing.
pub fn trend_verdict(
    scales: &[f64],
    values: &[f64],
) -> (Option<PowerLawFit>, Verdict, Option<String>) {
    match fit_power_law(scales, values) {
        Err(e) => (None, Verdict::Inconclusive, Some(e.to_string())),
        Ok(fit) if fit.residual > FIT_RESIDUAL_THRESHOLD => (
            None,
            Verdict::Inconclusive,
            Some(format!(
                "fit residual {:.3} above {FIT_RESIDUAL_THRESHOLD}",
                fit.residual
            )),
        ),
        Ok(fit) => {
            let verdict = if fit.exponent >= ADEQUAL_MIN_EXPONENT {
                Verdict::AdequalTrend
            } else if fit.exponent <= NOT_ADEQUAL_MAX_EXPONENT {
                Verdict::NotAdequal
            } else {
                Verdict::Inconclusive
            };
            let note = (fit.zeros_excluded > 0)
                .then(|| format!("{} zero deviations excluded", fit.zeros_excluded));
            (Some(fit), verdict, note)
        }
    }
}

/// Deviations over a sweep of the mesh or the amplitude, with the
/// power-law trend of `sup_rel` against the scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdequalityReport {
    pub parameter: ScaleParameter,
    /// Sorted by decreasing scale.
    pub rows: Vec<SweepRow>,
    pub fit: Option<PowerLawFit>,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl AdequalityReport {
    pub fn from_rows(parameter: ScaleParameter, mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| b.scale.total_cmp(&a.scale));
        let scales: Vec<f64> = rows.iter().map(|r| r.scale).collect();
        let devs: Vec<f64> = rows.iter().map(|r| r.sup_rel).collect();
        let (fit, verdict, note) = trend_verdict(&scales, &devs);
        Self {
            parameter,
            rows,
            fit,
            verdict,
            note,
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.exponent)
    }

    pub fn fit_record(&self) -> FitRecord {
        FitRecord {
            exponent: self.fit.map(|f| f.exponent),
            prefactor: self.fit.map(|f| f.prefactor),
            residual: self.fit.map(|f| f.residual),
            verdict: self.verdict,
        }
    }
}

/// One comparison in a sweep.
pub struct DeviationCase {
    pub scale: f64,
    pub f: PrevectorField,
    pub g: PrevectorField,
    pub z0: Complex64,
    pub t_final: f64,
    pub options: DeviationOptions,
}

/// Runs every case (in parallel) and fits the trend. Results do not depend
/// on evaluation order.
pub fn deviation_sweep<B>(
    parameter: ScaleParameter,
    scales: &[f64],
    build: B,
) -> Result<(AdequalityReport, Vec<DeviationReport>), FlowError>
where
    B: Fn(f64) -> Result<DeviationCase, FlowError> + Sync,
{
    let reports = scales
        .par_iter()
        .map(|&scale| {
            let case = build(scale)?;
            walk_deviation(&case.f, &case.g, case.z0, case.t_final, &case.options)
                .map(|r| (case.scale, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = reports
        .iter()
        .map(|(scale, r)| SweepRow {
            scale: *scale,
            sup_abs: r.sup_abs,
            sup_rel: r.sup_rel,
        })
        .collect();
    let mut reports: Vec<(f64, DeviationReport)> = reports;
    reports.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok((
        AdequalityReport::from_rows(parameter, rows),
        reports.into_iter().map(|(_, r)| r).collect(),
    ))
}
