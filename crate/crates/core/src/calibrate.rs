//! Calibration of each payoff family to the budget `E[Z_T X_T] = x` and, for
//! the soft constraints, to a binding constraint.
//!
//! Every root is found by bracketed bisection driven to a bracket width of
//! [`ROOT_TOL`]. Brackets are grown by doubling from seeds where the sign of
//! the residual is known analytically.

use thiserror::Error;

use crate::design::{CalibratedDesign, ConstraintSpec, DesignError, Payoff, Regime};
use crate::kernel::{std_normal_quantile, z_moment1, z_prob, Interval, ModelError, ModelParams};

/// Bracket width every root-find is refined to.
pub const ROOT_TOL: f64 = 1e-12;
/// Iteration cap for a single bisection.
pub const MAX_BISECTIONS: usize = 200;
const MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("{regime} regime infeasible: {reason}")]
    Infeasible { regime: Regime, reason: String },
    #[error("{regime} regime: no sign change found while bracketing {stage}")]
    NoBracket { regime: Regime, stage: &'static str },
    #[error("es_p regime: fixed point h0 = h1(lambda(h0)) not found: {0}")]
    FixedPoint(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Bisection on `[lo, hi]`, which must carry a sign change of `f`.
///
/// Returns the midpoint of the final bracket. An exact zero at a bracket end
/// is returned as is.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if !(f_lo.signum() != f_hi.signum()) || f_lo.is_nan() || f_hi.is_nan() {
        return None;
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Doubles `hi` from `seed` until `f(hi)` has the requested sign, returning the
/// last two probe points `(previous, hi)`.
fn grow_upper<F: Fn(f64) -> f64>(
    f: &F,
    lower: f64,
    seed: f64,
    target_negative: bool,
) -> Option<(f64, f64)> {
    let mut prev = lower;
    let mut hi = seed;
    for _ in 0..MAX_DOUBLINGS {
        let v = f(hi);
        if v.is_nan() {
            return None;
        }
        if v == 0.0 || (v < 0.0) == target_negative {
            return Some((prev, hi));
        }
        prev = hi;
        hi *= 2.0;
    }
    None
}

/// Halves `lo` from `seed` toward zero until `f(lo)` has the requested sign.
fn shrink_lower<F: Fn(f64) -> f64>(f: &F, seed: f64, target_negative: bool) -> Option<f64> {
    let mut lo = seed;
    for _ in 0..MAX_DOUBLINGS {
        let v = f(lo);
        if v.is_nan() {
            return None;
        }
        if v == 0.0 || (v < 0.0) == target_negative {
            return Some(lo);
        }
        lo *= 0.5;
    }
    None
}

fn require_below_target(regime: Regime, params: &ModelParams) -> Result<(), CalibrationError> {
    if params.x < params.k {
        Ok(())
    } else {
        Err(CalibrationError::Infeasible {
            regime,
            reason: format!(
                "initial surplus x = {} must lie below the auxiliary target k = {}",
                params.x, params.k
            ),
        })
    }
}

fn require_floor_below_x(
    regime: Regime,
    params: &ModelParams,
    floor: f64,
    strict: bool,
) -> Result<(), CalibrationError> {
    let ok = if strict {
        floor < params.x
    } else {
        floor <= params.x
    };
    if ok {
        Ok(())
    } else {
        Err(CalibrationError::Infeasible {
            regime,
            reason: format!(
                "auxiliary floor C = {floor} is not below initial surplus x = {}",
                params.x
            ),
        })
    }
}

fn certified(
    payoff: Payoff,
    regime: ConstraintSpec,
    unconstrained_optimal: bool,
) -> CalibratedDesign {
    let multiplier = Some(payoff.implied_multiplier());
    CalibratedDesign {
        payoff,
        regime,
        multiplier,
        unconstrained_optimal,
        tolerance: ROOT_TOL,
    }
}

/// `λ*_U` from `k - λ e^{β²T} = x`.
pub fn calibrate_unconstrained(params: &ModelParams) -> Result<CalibratedDesign, CalibrationError> {
    let regime = Regime::Unconstrained;
    require_below_target(regime, params)?;
    let residual = |lambda: f64| Payoff::Unconstrained { lambda }.budget_value(params) - params.x;
    let (lo, hi) = grow_upper(&residual, 0.0, 1.0, true).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "lambda",
    })?;
    let lambda = bisect(residual, lo, hi, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "lambda",
    })?;
    Ok(certified(
        Payoff::Unconstrained { lambda },
        ConstraintSpec::Unconstrained,
        false,
    ))
}

/// `λ*_C` for `max(k - λz, C)` with budget `x`; the budget falls from `k` to `C`.
pub fn calibrate_strict(
    params: &ModelParams,
    c_tilde: f64,
) -> Result<CalibratedDesign, CalibrationError> {
    let regime = Regime::Strict;
    let spec = ConstraintSpec::Strict { c_tilde };
    spec.validate(params)?;
    let floor = params.aux_floor(c_tilde);
    require_below_target(regime, params)?;
    require_floor_below_x(regime, params, floor, true)?;
    let residual = |lambda: f64| Payoff::Strict { lambda, floor }.budget_value(params) - params.x;
    let (lo, hi) = grow_upper(&residual, 0.0, 1.0, true).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "lambda",
    })?;
    let lambda = bisect(residual, lo, hi, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "lambda",
    })?;
    Ok(certified(Payoff::Strict { lambda, floor }, spec, false))
}

/// Whether the unconstrained optimum already satisfies `spec`.
///
/// The strict regime is never satisfied by the unbounded-below linear payoff.
pub fn check_unconstrained_feasible(
    spec: &ConstraintSpec,
    params: &ModelParams,
) -> Result<bool, CalibrationError> {
    spec.validate(params)?;
    let unconstrained = calibrate_unconstrained(params)?;
    Ok(match spec {
        ConstraintSpec::Unconstrained => true,
        ConstraintSpec::Strict { .. } => false,
        _ => spec.is_satisfied_by(&unconstrained.payoff, params, 0.0),
    })
}

/// Returns the unconstrained optimum dressed as the degenerate member of the
/// regime's family when it already satisfies the constraint.
fn short_circuit(
    spec: ConstraintSpec,
    params: &ModelParams,
) -> Result<Option<CalibratedDesign>, CalibrationError> {
    if !check_unconstrained_feasible(&spec, params)? {
        return Ok(None);
    }
    let lambda = calibrate_unconstrained(params)?.payoff.lambda();
    let floor = spec.aux_floor(params).unwrap_or(f64::NEG_INFINITY);
    let payoff = match spec.regime() {
        Regime::Var => Payoff::Var {
            lambda,
            floor,
            kink: floor,
        },
        Regime::EsP => Payoff::EsP {
            lambda,
            floor,
            gamma: 0.0,
        },
        Regime::EsQ => Payoff::EsQ {
            lambda,
            floor,
            delta: lambda,
        },
        Regime::Unconstrained | Regime::Strict => Payoff::Unconstrained { lambda },
    };
    Ok(Some(certified(payoff, spec, true)))
}

/// Upper threshold `g₂* = exp(-½β²T - β√T Φ⁻¹(1-ε))`, i.e. `P[Z_T ≤ g₂*] = 1 - ε`.
pub fn var_upper_threshold(params: &ModelParams, epsilon: f64) -> Result<f64, CalibrationError> {
    let t = params.horizon;
    let q = std_normal_quantile(1.0 - epsilon)?;
    Ok((-0.5 * params.beta_sq() * t - params.beta * t.sqrt() * q).exp())
}

/// VaR family: `g₂*` from the probability constraint, then `g₁ ∈ (0, g₂*)` for
/// the budget; `λ = (k - C)/g₁`, `c = k - λ g₂*`.
pub fn calibrate_var(
    params: &ModelParams,
    c_tilde: f64,
    epsilon: f64,
) -> Result<CalibratedDesign, CalibrationError> {
    let regime = Regime::Var;
    let spec = ConstraintSpec::Var { c_tilde, epsilon };
    spec.validate(params)?;
    require_below_target(regime, params)?;
    let floor = params.aux_floor(c_tilde);
    require_floor_below_x(regime, params, floor, false)?;
    if let Some(design) = short_circuit(spec, params)? {
        return Ok(design);
    }
    let k = params.k;
    let g2 = var_upper_threshold(params, epsilon)?;
    let payoff_for = |g1: f64| {
        let lambda = (k - floor) / g1;
        Payoff::Var {
            lambda,
            floor,
            kink: k - lambda * g2,
        }
    };
    let residual = |g1: f64| payoff_for(g1).budget_value(params) - params.x;
    let lo = shrink_lower(&residual, 0.5 * g2, true).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "g1 toward zero",
    })?;
    if !(residual(g2) > 0.0) {
        return Err(CalibrationError::Infeasible {
            regime,
            reason: format!("budget at g1 = g2 = {g2} does not exceed x; no root in (0, g2)"),
        });
    }
    let g1 = bisect(residual, lo, g2, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "g1",
    })?;
    Ok(certified(payoff_for(g1), spec, false))
}

/// `E[(Z_T - h)₊]`, evaluated through upper tails.
fn call_on_z(params: &ModelParams, h: f64) -> f64 {
    let t = params.horizon;
    let tail = Interval::above(h);
    (z_moment1(params, t, tail) - h * z_prob(params, t, tail)).max(0.0)
}

/// ES-ℙ family: `λ(h₂) = ν / E[(Z_T - h₂)₊]`, `h₁ = (k - C)/λ`, and `h₂` is
/// root-found for the budget on `(h₀, H)` with `h₀` the point where `h₁ = h₂`.
pub fn calibrate_es_p(
    params: &ModelParams,
    c_tilde: f64,
    nu: f64,
) -> Result<CalibratedDesign, CalibrationError> {
    let regime = Regime::EsP;
    let spec = ConstraintSpec::EsP { c_tilde, nu };
    spec.validate(params)?;
    require_below_target(regime, params)?;
    let floor = params.aux_floor(c_tilde);
    require_floor_below_x(regime, params, floor, false)?;
    if let Some(design) = short_circuit(spec, params)? {
        return Ok(design);
    }
    let k = params.k;
    let headroom = k - floor;
    // (k - C) E[(Z - h)₊] - ν h is strictly decreasing from k - C > 0.
    let gap = |h: f64| headroom * call_on_z(params, h) - nu * h;
    let (lo, hi) = grow_upper(&gap, 0.0, 1.0, true)
        .ok_or_else(|| CalibrationError::FixedPoint("no sign change while doubling".into()))?;
    let h0 = bisect(gap, lo, hi, ROOT_TOL)
        .ok_or_else(|| CalibrationError::FixedPoint("bisection failed".into()))?;

    let payoff_for = |h2: f64| {
        let lambda = nu / call_on_z(params, h2);
        Payoff::EsP {
            lambda,
            floor,
            gamma: (lambda * h2 + floor - k).max(0.0),
        }
    };
    let residual = |h2: f64| payoff_for(h2).budget_value(params) - params.x;
    if !(residual(h0) > 0.0) {
        return Err(CalibrationError::Infeasible {
            regime,
            reason: format!("budget at the fixed point h0 = {h0} does not exceed x"),
        });
    }
    let (lo, hi) =
        grow_upper(&residual, h0, 2.0 * h0, true).ok_or(CalibrationError::NoBracket {
            regime,
            stage: "h2",
        })?;
    let h2 = bisect(residual, lo, hi, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "h2",
    })?;
    Ok(certified(payoff_for(h2), spec, false))
}

/// ES-ℚ family: stage 1 fixes `δ*` from the shortfall, which does not depend
/// on `λ`; stage 2 root-finds `λ ∈ [δ*, Λ]` for the budget.
pub fn calibrate_es_q(
    params: &ModelParams,
    c_tilde: f64,
    nu: f64,
) -> Result<CalibratedDesign, CalibrationError> {
    let regime = Regime::EsQ;
    let spec = ConstraintSpec::EsQ { c_tilde, nu };
    spec.validate(params)?;
    require_below_target(regime, params)?;
    let floor = params.aux_floor(c_tilde);
    require_floor_below_x(regime, params, floor, false)?;
    if let Some(design) = short_circuit(spec, params)? {
        return Ok(design);
    }
    let lambda_u = calibrate_unconstrained(params)?.payoff.lambda();
    let shortfall = |delta: f64| {
        Payoff::EsQ {
            lambda: delta,
            floor,
            delta,
        }
        .shortfall_q(params, floor)
            - nu
    };
    let delta = bisect(shortfall, 0.0, lambda_u, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "delta (stage 1)",
    })?;
    let residual = |lambda: f64| {
        Payoff::EsQ {
            lambda,
            floor,
            delta,
        }
        .budget_value(params)
            - params.x
    };
    if !(residual(delta) > 0.0) {
        return Err(CalibrationError::Infeasible {
            regime,
            reason: format!("stage 2: budget at lambda = delta = {delta} does not exceed x"),
        });
    }
    let (lo, hi) =
        grow_upper(&residual, delta, 2.0 * delta, true).ok_or(CalibrationError::NoBracket {
            regime,
            stage: "lambda (stage 2)",
        })?;
    let lambda = bisect(residual, lo, hi, ROOT_TOL).ok_or(CalibrationError::NoBracket {
        regime,
        stage: "lambda (stage 2)",
    })?;
    Ok(certified(
        Payoff::EsQ {
            lambda,
            floor,
            delta,
        },
        spec,
        false,
    ))
}

/// Dispatches on the constraint kind.
pub fn calibrate(
    spec: &ConstraintSpec,
    params: &ModelParams,
) -> Result<CalibratedDesign, CalibrationError> {
    match *spec {
        ConstraintSpec::Unconstrained => calibrate_unconstrained(params),
        ConstraintSpec::Strict { c_tilde } => calibrate_strict(params, c_tilde),
        ConstraintSpec::Var { c_tilde, epsilon } => calibrate_var(params, c_tilde, epsilon),
        ConstraintSpec::EsP { c_tilde, nu } => calibrate_es_p(params, c_tilde, nu),
        ConstraintSpec::EsQ { c_tilde, nu } => calibrate_es_q(params, c_tilde, nu),
    }
}
