//! Monte-Carlo and brute-force checks that share no code path with the closed
//! forms beyond the payoff definitions themselves.
//!
//! Samples of `Z_t` are drawn as `exp(-½β²t + β√t ξ)` with `ξ` standard normal.
//! Work is split into chunks of [`CHUNK`] samples; chunk `c` uses
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `c`, and chunk statistics are
//! merged in chunk order, so estimates are reproducible for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calibrate::{bisect, calibrate, ROOT_TOL};
use crate::design::{CalibratedDesign, ConstraintSpec, Payoff, Regime};
use crate::kernel::{Interval, ModelParams};

pub const CHUNK: usize = 1 << 14;
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("at least {MIN_SAMPLES} samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("{0} functional needs a floor but the design has none")]
    NoFloor(FunctionalKind),
    #[error("design carries no multiplier data; the optimality check needs a calibrated design")]
    MissingMultiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `|mean - value|` in units of the standard error; zero when both the
    /// error and the stderr vanish.
    pub fn z_score(&self, value: f64) -> f64 {
        let gap = (self.mean - value).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.stderr
        }
    }

    pub fn agrees_with(&self, value: f64, sigmas: f64) -> bool {
        (self.mean - value).abs() <= sigmas * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FunctionalKind {
    Budget,
    Utility,
    ProbFloor,
    EsP,
    EsQ,
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FunctionalKind::Budget => "budget",
            FunctionalKind::Utility => "utility",
            FunctionalKind::ProbFloor => "prob_floor",
            FunctionalKind::EsP => "es_p",
            FunctionalKind::EsQ => "es_q",
        };
        f.write_str(s)
    }
}

/// Running mean and centred second moment for a vector of observables.
#[derive(Debug, Clone)]
struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dims: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dims],
            m2: vec![0.0; dims],
        }
    }

    fn push(&mut self, obs: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }
}

/// Estimates `E[f_i(Z_t)]` for the `dims` observables written by `f`, all
/// from the same draws.
pub fn mc_means<F>(
    params: &ModelParams,
    t: f64,
    n: usize,
    seed: u64,
    dims: usize,
    f: F,
) -> Vec<McEstimate>
where
    F: Fn(f64, &mut [f64]) + Sync,
{
    let drift = -0.5 * params.beta_sq() * t;
    let vol = params.beta * t.sqrt();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut acc = Moments::new(dims);
            let mut obs = vec![0.0; dims];
            for _ in 0..len {
                let xi: f64 = StandardNormal.sample(&mut rng);
                f((drift + vol * xi).exp(), &mut obs);
                acc.push(&obs);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(dims);
    for part in &parts {
        total.merge(part);
    }
    let nf = total.n as f64;
    (0..dims)
        .map(|i| McEstimate {
            mean: total.mean[i],
            stderr: if total.n > 1 {
                (total.m2[i] / (nf - 1.0)).sqrt() / nf.sqrt()
            } else {
                f64::INFINITY
            },
            n,
            seed,
        })
        .collect()
}

/// Plain MC estimate of `E[f(Z_t)]`.
pub fn mc_mean<F>(params: &ModelParams, t: f64, n: usize, seed: u64, f: F) -> McEstimate
where
    F: Fn(f64) -> f64 + Sync,
{
    mc_means(params, t, n, seed, 1, |z, out| out[0] = f(z))[0]
}

/// MC estimate of `E[Z_t^power; Z_t ∈ iv]` for `power ∈ {0, 1, 2}`.
pub fn mc_z_moment(
    params: &ModelParams,
    t: f64,
    iv: Interval,
    power: i32,
    n: usize,
    seed: u64,
) -> McEstimate {
    mc_mean(params, t, n, seed, |z| {
        if iv.contains(z) {
            z.powi(power)
        } else {
            0.0
        }
    })
}

fn observe(kind: FunctionalKind, params: &ModelParams, floor: f64, z: f64, value: f64) -> f64 {
    match kind {
        FunctionalKind::Budget => z * value,
        FunctionalKind::Utility => -0.5 * (params.k - value).powi(2),
        FunctionalKind::ProbFloor => f64::from(u8::from(value >= floor)),
        FunctionalKind::EsP => (floor - value).max(0.0),
        FunctionalKind::EsQ => z * (floor - value).max(0.0),
    }
}

/// MC estimate of one design functional at maturity.
pub fn mc_functional(
    kind: FunctionalKind,
    design: &CalibratedDesign,
    params: &ModelParams,
    n: usize,
    seed: u64,
) -> Result<McEstimate, OracleError> {
    Ok(mc_functionals(&[kind], design, params, n, seed)?[0])
}

/// Several functionals of one design from shared draws.
pub fn mc_functionals(
    kinds: &[FunctionalKind],
    design: &CalibratedDesign,
    params: &ModelParams,
    n: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, OracleError> {
    if n < MIN_SAMPLES {
        return Err(OracleError::TooFewSamples(n));
    }
    let needs_floor = kinds
        .iter()
        .find(|k| !matches!(k, FunctionalKind::Budget | FunctionalKind::Utility));
    let floor = match (design.floor(params), needs_floor) {
        (Some(c), _) => c,
        (None, None) => f64::NAN,
        (None, Some(&kind)) => return Err(OracleError::NoFloor(kind)),
    };
    Ok(mc_means(
        params,
        params.horizon,
        n,
        seed,
        kinds.len(),
        |z, out| {
            let value = design.payoff(params, z);
            for (slot, &kind) in out.iter_mut().zip(kinds) {
                *slot = observe(kind, params, floor, z, value);
            }
        },
    ))
}

/// MC estimate of `E[Z' payoff(z Z')]` with `Z'` distributed as `Z_{T-t}`,
/// the conditional expectation that defines the controlled surplus.
pub fn mc_wealth(
    design: &CalibratedDesign,
    params: &ModelParams,
    t: f64,
    z: f64,
    n: usize,
    seed: u64,
) -> McEstimate {
    mc_mean(params, params.horizon - t, n, seed, |zz| {
        zz * design.payoff(params, z * zz)
    })
}

/// 200 log-spaced points on `[0.01, 20]`.
pub fn default_z_grid() -> Vec<f64> {
    log_spaced(0.01, 20.0, 200)
}

/// 2000 equally spaced candidate terminal values on `[C - 20, k]`.
pub fn default_b_grid(floor: f64, k: f64) -> Vec<f64> {
    linspace(floor - 20.0, k, 2000)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub passed: bool,
    /// Largest `f(B; z) - f(payoff(z); z)` over the grid; nonpositive when the
    /// payoff is the pointwise maximiser.
    pub max_violation: f64,
    pub worst_z: f64,
    pub worst_b: f64,
}

/// Tolerance of the pointwise Lagrangian comparison.
pub const LAGRANGIAN_TOL: f64 = 1e-9;

/// Pointwise Lagrangian `f(B; z)` of the design's regime, up to terms that do
/// not depend on `B`. `None` when `B` violates a strict floor.
pub fn lagrangian(
    design: &CalibratedDesign,
    params: &ModelParams,
    multiplier: f64,
    z: f64,
    b: f64,
) -> Option<f64> {
    let lambda = design.payoff.lambda();
    let base = -0.5 * (params.k - b).powi(2) - lambda * (z * b - params.x);
    let floor = design.floor(params).unwrap_or(f64::NEG_INFINITY);
    match design.regime.regime() {
        Regime::Unconstrained => Some(base),
        Regime::Strict => (b >= floor).then_some(base),
        Regime::Var => Some(base + if b >= floor { multiplier } else { 0.0 }),
        Regime::EsP => Some(base - multiplier * (floor - b).max(0.0)),
        Regime::EsQ => Some(base - multiplier * z * (floor - b).max(0.0)),
    }
}

/// Checks that `payoff(z)` maximises the regime's Lagrangian over `b_grid` at
/// every `z` in `z_grid`.
pub fn pointwise_optimality_check(
    design: &CalibratedDesign,
    params: &ModelParams,
    z_grid: &[f64],
    b_grid: &[f64],
) -> Result<OptimalityReport, OracleError> {
    let multiplier = design.multiplier.ok_or(OracleError::MissingMultiplier)?;
    let mut report = OptimalityReport {
        passed: true,
        max_violation: f64::NEG_INFINITY,
        worst_z: f64::NAN,
        worst_b: f64::NAN,
    };
    for &z in z_grid {
        let chosen = design.payoff(params, z);
        let Some(at_payoff) = lagrangian(design, params, multiplier, z, chosen) else {
            // The payoff itself breaks a strict floor.
            return Ok(OptimalityReport {
                passed: false,
                max_violation: f64::INFINITY,
                worst_z: z,
                worst_b: chosen,
            });
        };
        for &b in b_grid {
            if let Some(value) = lagrangian(design, params, multiplier, z, b) {
                let gap = value - at_payoff;
                if gap > report.max_violation {
                    report.max_violation = gap;
                    report.worst_z = z;
                    report.worst_b = b;
                }
            }
        }
    }
    report.passed = report.max_violation <= LAGRANGIAN_TOL;
    Ok(report)
}

/// Why a rival was left out of a dominance comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRival {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RivalComparison {
    pub index: usize,
    /// MC utility of the rival, `U(design) - advantage`.
    pub rival_utility: f64,
    /// Paired estimate of `U(design) - U(rival)` on common draws.
    pub advantage: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub passed: bool,
    pub design_utility: McEstimate,
    pub compared: Vec<RivalComparison>,
    pub skipped: Vec<SkippedRival>,
    /// Smallest `advantage.mean / advantage.stderr` over compared rivals.
    pub worst_z: f64,
}

/// Closed-form feasibility of a rival under the design's regime.
pub fn rival_feasibility(
    design: &CalibratedDesign,
    params: &ModelParams,
    rival: &Payoff,
) -> Result<(), String> {
    rival.validate(params).map_err(|e| e.to_string())?;
    let budget = rival.budget_value(params);
    if budget > params.x + 1e-9 {
        return Err(format!("budget {budget} exceeds x = {}", params.x));
    }
    if !design.regime.is_satisfied_by(rival, params, 1e-9) {
        return Err(format!(
            "violates the {} constraint",
            design.regime.regime()
        ));
    }
    Ok(())
}

/// MC utility comparison of `design` against feasible rivals, using common
/// random numbers. A rival passes when the paired advantage is at least
/// `-3` standard errors.
pub fn utility_dominance_check(
    design: &CalibratedDesign,
    params: &ModelParams,
    rivals: &[Payoff],
    n: usize,
    seed: u64,
) -> Result<DominanceReport, OracleError> {
    if n < MIN_SAMPLES {
        return Err(OracleError::TooFewSamples(n));
    }
    let mut feasible = Vec::new();
    let mut skipped = Vec::new();
    for (index, rival) in rivals.iter().enumerate() {
        match rival_feasibility(design, params, rival) {
            Ok(()) => feasible.push((index, *rival)),
            Err(reason) => skipped.push(SkippedRival { index, reason }),
        }
    }
    let k = params.k;
    let utility = |v: f64| -0.5 * (k - v).powi(2);
    let est = mc_means(
        params,
        params.horizon,
        n,
        seed,
        1 + feasible.len(),
        |z, out| {
            let own = utility(design.payoff(params, z));
            out[0] = own;
            for (slot, (_, rival)) in out[1..].iter_mut().zip(&feasible) {
                *slot = own - utility(rival.at(params, z));
            }
        },
    );
    let compared: Vec<RivalComparison> = feasible
        .iter()
        .zip(&est[1..])
        .map(|(&(index, _), &advantage)| RivalComparison {
            index,
            rival_utility: est[0].mean - advantage.mean,
            advantage,
        })
        .collect();
    let worst_z = compared
        .iter()
        .map(|c| {
            if c.advantage.mean == 0.0 {
                0.0
            } else {
                c.advantage.mean / c.advantage.stderr
            }
        })
        .fold(f64::INFINITY, f64::min);
    let passed = compared
        .iter()
        .all(|c| c.advantage.mean >= -3.0 * c.advantage.stderr);
    Ok(DominanceReport {
        passed,
        design_utility: est[0],
        compared,
        skipped,
        worst_z,
    })
}

/// Re-solves `λ` so that `template` meets the budget with its second
/// parameter held fixed. `None` when no root exists.
pub fn restore_budget(template: &Payoff, params: &ModelParams) -> Option<Payoff> {
    let lo = match *template {
        Payoff::EsQ { delta, .. } => delta,
        _ => 1e-9,
    };
    let residual = |lambda: f64| template.with_lambda(lambda).budget_value(params) - params.x;
    if !(residual(lo) > 0.0) {
        return None;
    }
    let mut hi = (2.0 * template.lambda()).max(2.0 * lo);
    let mut prev = lo;
    for _ in 0..200 {
        if residual(hi) < 0.0 {
            let lambda = bisect(residual, prev, hi, ROOT_TOL)?;
            return Some(template.with_lambda(lambda));
        }
        prev = hi;
        hi *= 2.0;
    }
    None
}

/// Tolerances from which the rival families are seeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RivalBase {
    pub c_tilde: f64,
    pub epsilon: f64,
    pub nu: f64,
}

/// Budget-restored perturbations of the calibrated strict, VaR, ES-ℙ and ES-ℚ
/// designs, `per_family` of each.
///
/// Strict rivals raise the floor by a fraction in `[0, 0.8]` of the headroom
/// `x - C`. The other families scale their second parameter (`C - c`, `γ` or
/// `δ`) by a log-uniform factor in `[0.8, 1.25]`. `λ` is always re-solved for
/// the budget. Perturbations without a budget root are dropped.
pub fn generate_rivals(
    params: &ModelParams,
    base: RivalBase,
    per_family: usize,
    seed: u64,
) -> Vec<Payoff> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let floor = params.aux_floor(base.c_tilde);
    for regime in [Regime::Strict, Regime::Var, Regime::EsP, Regime::EsQ] {
        let spec = ConstraintSpec::for_regime(regime, base.c_tilde, base.epsilon, base.nu);
        let Ok(seed_design) = calibrate(&spec, params) else {
            continue;
        };
        for _ in 0..per_family {
            let factor = (rng.random_range(0.8f64.ln()..=1.25f64.ln())).exp();
            let template = match seed_design.payoff {
                Payoff::Strict { lambda, .. } => {
                    let raised = floor + rng.random_range(0.0..=0.8) * (params.x - floor);
                    Payoff::Strict {
                        lambda,
                        floor: raised,
                    }
                }
                Payoff::Var {
                    lambda,
                    floor,
                    kink,
                } => Payoff::Var {
                    lambda,
                    floor,
                    kink: floor - factor * (floor - kink),
                },
                Payoff::EsP {
                    lambda,
                    floor,
                    gamma,
                } => Payoff::EsP {
                    lambda,
                    floor,
                    gamma: factor * gamma,
                },
                Payoff::EsQ {
                    lambda,
                    floor,
                    delta,
                } => Payoff::EsQ {
                    lambda: lambda.max(factor * delta),
                    floor,
                    delta: factor * delta,
                },
                Payoff::Unconstrained { .. } => continue,
            };
            if let Some(rival) = restore_budget(&template, params) {
                if rival.validate(params).is_ok() {
                    out.push(rival);
                }
            }
        }
    }
    out
}
