//! Controlled surplus paths.
//!
//! The optimally controlled auxiliary surplus is the conditional expectation
//! `X_t = E[(Z_T/Z_t) X_T | Z_t]`. For every family this collapses to
//!
//! ```text
//! X_t = const + Σ_j α_j K_j(T - t, a_j / Z_t) - ξ m(T - t, Z_t)
//! ```
//!
//! with `K_j ∈ {f, h}` from [`crate::kernel`]. The reinsurance proportion
//! follows from matching diffusion coefficients, `π_t = 1 - (β Z_t / σ) ∂X/∂z`.
//!
//! Brownian paths are drawn from `ChaCha8Rng::seed_from_u64(seed)` with
//! standard normal increments scaled by `√Δt`, so a seed fixes a path on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::design::{CalibratedDesign, Payoff};
use crate::kernel::{kernel_f, kernel_h, kernel_m, kernel_zfz, kernel_zhz, ModelParams};

/// Default number of time steps for a trace.
pub const DEFAULT_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    F,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathTerm {
    pub weight: f64,
    /// Threshold `a_j` in `Z_T` space; evaluated at `a_j / Z_t`.
    pub boundary: f64,
    pub kind: KernelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathCoefficients {
    pub constant: f64,
    pub terms: Vec<PathTerm>,
    /// Coefficient `ξ` of `-m(T - t, Z_t)`.
    pub slope: f64,
}

impl PathCoefficients {
    /// `X` at time-to-maturity `tau > 0` and `Z_t = z`.
    pub fn wealth(&self, params: &ModelParams, tau: f64, z: f64) -> f64 {
        let terms: f64 = self
            .terms
            .iter()
            .map(|term| {
                let u = term.boundary / z;
                term.weight
                    * match term.kind {
                        KernelKind::F => kernel_f(params, tau, u),
                        KernelKind::H => kernel_h(params, tau, u),
                    }
            })
            .sum();
        self.constant + terms - self.slope * kernel_m(params, tau, z)
    }

    /// `z ∂X/∂z` at time-to-maturity `tau > 0`.
    pub fn wealth_elasticity(&self, params: &ModelParams, tau: f64, z: f64) -> f64 {
        // z ∂_z K(a/z) = -(u K'(u)) at u = a/z, and z ∂_z m = m.
        let terms: f64 = self
            .terms
            .iter()
            .map(|term| {
                let u = term.boundary / z;
                term.weight
                    * match term.kind {
                        KernelKind::F => kernel_zfz(params, tau, u),
                        KernelKind::H => kernel_zhz(params, tau, u),
                    }
            })
            .sum();
        -terms - self.slope * kernel_m(params, tau, z)
    }
}

fn term(weight: f64, boundary: f64, kind: KernelKind) -> PathTerm {
    PathTerm {
        weight,
        boundary,
        kind,
    }
}

/// Per-family coefficients of the conditional-expectation representation.
pub fn path_coefficients(design: &CalibratedDesign, params: &ModelParams) -> PathCoefficients {
    use KernelKind::{F, H};
    let k = params.k;
    match design.payoff {
        Payoff::Unconstrained { lambda } => PathCoefficients {
            constant: k,
            terms: vec![],
            slope: lambda,
        },
        Payoff::Strict { lambda, floor } => {
            let d = k - floor;
            let eta = d / lambda;
            PathCoefficients {
                constant: floor,
                terms: vec![term(d, eta, F), term(-d, eta, H)],
                slope: 0.0,
            }
        }
        Payoff::Var {
            lambda,
            floor,
            kink,
        } => {
            let d = k - floor;
            let (g1, g2) = (d / lambda, (k - kink) / lambda);
            PathCoefficients {
                constant: k,
                terms: vec![
                    term(d, g1, F),
                    term(-d, g2, F),
                    term(-d, g1, H),
                    term(d * g2 / g1, g2, H),
                ],
                slope: lambda,
            }
        }
        Payoff::EsP {
            lambda,
            floor,
            gamma,
        } => {
            let d = k - floor;
            let (h1, h2) = (d / lambda, (d + gamma) / lambda);
            PathCoefficients {
                constant: k + gamma,
                terms: vec![
                    term(d, h1, F),
                    term(-d - gamma, h2, F),
                    term(-d, h1, H),
                    term(d * h2 / h1, h2, H),
                ],
                slope: lambda,
            }
        }
        Payoff::EsQ {
            lambda,
            floor,
            delta,
        } => {
            let d = k - floor;
            let (upper, lower) = (d / lambda, d / delta);
            PathCoefficients {
                constant: k,
                terms: vec![
                    term(d, upper, F),
                    term(-d, lower, F),
                    term(-d, upper, H),
                    term(d, lower, H),
                ],
                slope: delta,
            }
        }
    }
}

/// Auxiliary surplus `X_t` given `Z_t = z`; the payoff itself for `t ≥ T`.
pub fn wealth_at(design: &CalibratedDesign, params: &ModelParams, t: f64, z: f64) -> f64 {
    let tau = params.horizon - t;
    if tau <= 0.0 {
        return design.payoff(params, z);
    }
    path_coefficients(design, params).wealth(params, tau, z)
}

/// Reinsurance proportion `π_t` given `Z_t = z`; `None` at or after maturity.
pub fn proportion_at(
    design: &CalibratedDesign,
    params: &ModelParams,
    t: f64,
    z: f64,
) -> Option<f64> {
    let tau = params.horizon - t;
    if tau <= 0.0 {
        return None;
    }
    let elasticity = path_coefficients(design, params).wealth_elasticity(params, tau, z);
    Some(1.0 - params.beta / params.sigma * elasticity)
}

/// Uniform grid on `[0, T]` with exact endpoints and a Brownian path on it.
pub fn simulate_brownian(seed: u64, n_steps: usize, horizon: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n_steps >= 1, "n_steps must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = horizon / n_steps as f64;
    let sd = dt.sqrt();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut w = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    w.push(0.0);
    let mut level = 0.0;
    for i in 1..=n_steps {
        let step: f64 = StandardNormal.sample(&mut rng);
        level += sd * step;
        times.push(if i == n_steps { horizon } else { i as f64 * dt });
        w.push(level);
    }
    (times, w)
}

/// A simulated controlled path alongside the uncontrolled surplus.
#[derive(Debug, Clone, Serialize)]
pub struct PathTrace {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Auxiliary surplus `X_t`.
    pub x: Vec<f64>,
    /// Original-scale surplus `X̃_t = X_t + (a - b) t`.
    pub x_tilde: Vec<f64>,
    /// `π_t`; the terminal entry repeats the last interior value.
    pub pi: Vec<f64>,
    /// True for entries of `pi` carried forward rather than computed.
    pub pi_extrapolated: Vec<bool>,
    /// Surplus without reinsurance, `x + a t + σ W_t`.
    pub uncontrolled: Vec<f64>,
    pub seed: u64,
    pub design: CalibratedDesign,
}

/// Controlled trace on the path generated by `seed`.
pub fn controlled_trace(
    design: &CalibratedDesign,
    params: &ModelParams,
    seed: u64,
    n_steps: usize,
) -> PathTrace {
    let (times, w) = simulate_brownian(seed, n_steps, params.horizon);
    trace_on_path(design, params, seed, times, w)
}

/// Controlled trace on a given Brownian path.
pub fn trace_on_path(
    design: &CalibratedDesign,
    params: &ModelParams,
    seed: u64,
    times: Vec<f64>,
    w: Vec<f64>,
) -> PathTrace {
    let coeffs = path_coefficients(design, params);
    let beta = params.beta;
    let n = times.len();
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut x_tilde = Vec::with_capacity(n);
    let mut pi = Vec::with_capacity(n);
    let mut pi_extrapolated = Vec::with_capacity(n);
    let mut uncontrolled = Vec::with_capacity(n);
    for (&t, &wt) in times.iter().zip(&w) {
        let zt = (-0.5 * beta * beta * t + beta * wt).exp();
        let tau = params.horizon - t;
        let (xt, pit, carried) = if tau > 0.0 {
            let xt = coeffs.wealth(params, tau, zt);
            let elasticity = coeffs.wealth_elasticity(params, tau, zt);
            (xt, 1.0 - beta / params.sigma * elasticity, false)
        } else {
            (
                design.payoff(params, zt),
                pi.last().copied().unwrap_or(f64::NAN),
                true,
            )
        };
        z.push(zt);
        x.push(xt);
        x_tilde.push(xt + params.shift(t));
        pi.push(pit);
        pi_extrapolated.push(carried);
        uncontrolled.push(params.x + params.a * t + params.sigma * wt);
    }
    PathTrace {
        times,
        w,
        z,
        x,
        x_tilde,
        pi,
        pi_extrapolated,
        uncontrolled,
        seed,
        design: *design,
    }
}
