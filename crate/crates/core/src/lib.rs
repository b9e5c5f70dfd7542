//! Euler walks with an infinitesimal mesh, the adequality relation between
//! prevector fields, and the amplitude-independent period of small pendulum
//! oscillations.
//!
//! * [`asymptotic`] – truncated series in a formal infinitesimal with the
//!   relations `≈` (infinitely close) and `≍` (adequal).
//! * [`flows`] – prevector fields, fixed-mesh walks, shadows by mesh
//!   refinement, walk deviations and the discrete Gronwall envelope.
//! * [`pendulum`] – the nonlinear pendulum field, its linearization, the
//!   exact rotation representative and the period measurements.
//! * [`cli`] – the `hyperwalk` command line front end.

// `!(x <= r)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod cli;
pub mod flows;
pub mod format;
pub mod pendulum;
