//! Terminal payoff families and their closed-form functionals.
//!
//! Every optimal terminal surplus is piecewise affine in `Z_T`. A payoff is
//! decomposed into [`Branch`]es `A + B·z` on `Z`-intervals, and each functional
//! (budget, floor probability, both shortfalls, utility) is assembled from the
//! truncated moments in [`crate::kernel`]. All values are in the auxiliary
//! scale unless a method says otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{z_moment1, z_moment2, z_prob, Interval, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("{family} payoff: {reason}")]
    Invalid { family: Family, reason: String },
    #[error("constraint: {0}")]
    Constraint(String),
}

/// Solvency regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unconstrained,
    Strict,
    Var,
    EsP,
    EsQ,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Unconstrained,
        Regime::Strict,
        Regime::Var,
        Regime::EsP,
        Regime::EsQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Unconstrained => "unconstrained",
            Regime::Strict => "strict",
            Regime::Var => "var",
            Regime::EsP => "es_p",
            Regime::EsQ => "es_q",
        }
    }

    /// Payoff family that solves this regime.
    pub fn family(self) -> Family {
        match self {
            Regime::Unconstrained => Family::U,
            Regime::Strict => Family::C,
            Regime::Var => Family::P,
            Regime::EsP => Family::E,
            Regime::EsQ => Family::Q,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unconstrained" | "u" | "none" => Ok(Regime::Unconstrained),
            "strict" | "c" => Ok(Regime::Strict),
            "var" | "p" | "probability" => Ok(Regime::Var),
            "es_p" | "esp" | "e" => Ok(Regime::EsP),
            "es_q" | "esq" | "q" => Ok(Regime::EsQ),
            other => Err(format!(
                "unknown regime `{other}` (expected unconstrained, strict, var, es_p or es_q)"
            )),
        }
    }
}

/// Payoff family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `k - λz`.
    U,
    /// `max(k - λz, C)`.
    C,
    /// Floor at `C` on `[g₁, g₂]` with a jump back to `k - λz` beyond `g₂`.
    P,
    /// Floor at `C` on `[h₁, h₂]`, then `k - λz + γ`.
    E,
    /// Floor at `C` between `(k-C)/λ` and `(k-C)/δ`, then `k - δz`.
    Q,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::U => "U",
            Family::C => "C",
            Family::P => "P",
            Family::E => "E",
            Family::Q => "Q",
        };
        f.write_str(s)
    }
}

/// Solvency constraint with its tolerance, in the original scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    Unconstrained,
    /// `X̃_T ≥ C̃` surely.
    Strict {
        c_tilde: f64,
    },
    /// `P[X̃_T ≥ C̃] ≥ 1 - ε`.
    Var {
        c_tilde: f64,
        epsilon: f64,
    },
    /// `E[(C̃ - X̃_T)₊] ≤ ν`.
    EsP {
        c_tilde: f64,
        nu: f64,
    },
    /// `E[Z_T (C̃ - X̃_T)₊] ≤ ν`.
    EsQ {
        c_tilde: f64,
        nu: f64,
    },
}

impl ConstraintSpec {
    pub fn regime(&self) -> Regime {
        match self {
            ConstraintSpec::Unconstrained => Regime::Unconstrained,
            ConstraintSpec::Strict { .. } => Regime::Strict,
            ConstraintSpec::Var { .. } => Regime::Var,
            ConstraintSpec::EsP { .. } => Regime::EsP,
            ConstraintSpec::EsQ { .. } => Regime::EsQ,
        }
    }

    /// Builds the constraint for `regime` from a shared tolerance block.
    pub fn for_regime(regime: Regime, c_tilde: f64, epsilon: f64, nu: f64) -> Self {
        match regime {
            Regime::Unconstrained => ConstraintSpec::Unconstrained,
            Regime::Strict => ConstraintSpec::Strict { c_tilde },
            Regime::Var => ConstraintSpec::Var { c_tilde, epsilon },
            Regime::EsP => ConstraintSpec::EsP { c_tilde, nu },
            Regime::EsQ => ConstraintSpec::EsQ { c_tilde, nu },
        }
    }

    pub fn c_tilde(&self) -> Option<f64> {
        match *self {
            ConstraintSpec::Unconstrained => None,
            ConstraintSpec::Strict { c_tilde }
            | ConstraintSpec::Var { c_tilde, .. }
            | ConstraintSpec::EsP { c_tilde, .. }
            | ConstraintSpec::EsQ { c_tilde, .. } => Some(c_tilde),
        }
    }

    /// Auxiliary floor `C`, when the regime has one.
    pub fn aux_floor(&self, params: &ModelParams) -> Option<f64> {
        self.c_tilde().map(|c| params.aux_floor(c))
    }

    /// Target value of the binding functional (`1 - ε` or `ν`).
    pub fn target(&self) -> Option<f64> {
        match *self {
            ConstraintSpec::Var { epsilon, .. } => Some(1.0 - epsilon),
            ConstraintSpec::EsP { nu, .. } | ConstraintSpec::EsQ { nu, .. } => Some(nu),
            _ => None,
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), DesignError> {
        if let Some(c_tilde) = self.c_tilde() {
            if !c_tilde.is_finite() {
                return Err(DesignError::Constraint(format!(
                    "C_tilde must be finite, got {c_tilde}"
                )));
            }
            let floor = params.aux_floor(c_tilde);
            if floor > params.k {
                return Err(DesignError::Constraint(format!(
                    "floor C = {floor} exceeds the target k = {}",
                    params.k
                )));
            }
        }
        match *self {
            ConstraintSpec::Var { epsilon, .. } if !(epsilon > 0.0 && epsilon < 1.0) => Err(
                DesignError::Constraint(format!("epsilon must lie in (0, 1), got {epsilon}")),
            ),
            ConstraintSpec::EsP { nu, .. } | ConstraintSpec::EsQ { nu, .. }
                if !(nu > 0.0 && nu.is_finite()) =>
            {
                Err(DesignError::Constraint(format!(
                    "nu must be positive, got {nu}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether `payoff` satisfies this constraint, allowing `tol` slack on the
    /// binding functional.
    pub fn is_satisfied_by(&self, payoff: &Payoff, params: &ModelParams, tol: f64) -> bool {
        let Some(floor) = self.aux_floor(params) else {
            return true;
        };
        match *self {
            ConstraintSpec::Unconstrained => true,
            ConstraintSpec::Strict { .. } => payoff.is_bounded_below_by(floor),
            ConstraintSpec::Var { epsilon, .. } => {
                payoff.prob_above(params, floor) >= 1.0 - epsilon - tol
            }
            ConstraintSpec::EsP { nu, .. } => payoff.shortfall_p(params, floor) <= nu + tol,
            ConstraintSpec::EsQ { nu, .. } => payoff.shortfall_q(params, floor) <= nu + tol,
        }
    }
}

/// Affine piece `intercept + slope·z` of a payoff on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub intercept: f64,
    pub slope: f64,
}

impl Branch {
    fn interval(&self) -> Interval {
        Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    /// Splits the branch where it crosses `level`, returning `(at_or_above, below)`.
    fn split_at_level(&self, level: f64) -> (Option<Branch>, Option<Branch>) {
        if self.slope == 0.0 {
            return if self.intercept >= level {
                (Some(*self), None)
            } else {
                (None, Some(*self))
            };
        }
        // Slopes are nonpositive for every family: the branch is above the
        // level to the left of the crossing point.
        debug_assert!(self.slope < 0.0);
        let cross = (level - self.intercept) / self.slope;
        if cross <= self.lo {
            (None, Some(*self))
        } else if cross >= self.hi {
            (Some(*self), None)
        } else {
            (
                Some(Branch { hi: cross, ..*self }),
                Some(Branch { lo: cross, ..*self }),
            )
        }
    }
}

/// Terminal auxiliary surplus as a function of `Z_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Payoff {
    #[serde(rename = "U")]
    Unconstrained { lambda: f64 },
    #[serde(rename = "C")]
    Strict { lambda: f64, floor: f64 },
    /// `kink` is the lower level `c ≤ C` below which the payoff returns to `k - λz`.
    #[serde(rename = "P")]
    Var { lambda: f64, floor: f64, kink: f64 },
    #[serde(rename = "E")]
    EsP { lambda: f64, floor: f64, gamma: f64 },
    #[serde(rename = "Q")]
    EsQ { lambda: f64, floor: f64, delta: f64 },
}

impl Payoff {
    pub fn family(&self) -> Family {
        match self {
            Payoff::Unconstrained { .. } => Family::U,
            Payoff::Strict { .. } => Family::C,
            Payoff::Var { .. } => Family::P,
            Payoff::EsP { .. } => Family::E,
            Payoff::EsQ { .. } => Family::Q,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Payoff::Unconstrained { lambda }
            | Payoff::Strict { lambda, .. }
            | Payoff::Var { lambda, .. }
            | Payoff::EsP { lambda, .. }
            | Payoff::EsQ { lambda, .. } => lambda,
        }
    }

    pub fn floor(&self) -> Option<f64> {
        match *self {
            Payoff::Unconstrained { .. } => None,
            Payoff::Strict { floor, .. }
            | Payoff::Var { floor, .. }
            | Payoff::EsP { floor, .. }
            | Payoff::EsQ { floor, .. } => Some(floor),
        }
    }

    /// Family-specific second parameter with its name (`c`, `gamma` or `delta`).
    pub fn second(&self) -> Option<(&'static str, f64)> {
        match *self {
            Payoff::Var { kink, .. } => Some(("c", kink)),
            Payoff::EsP { gamma, .. } => Some(("gamma", gamma)),
            Payoff::EsQ { delta, .. } => Some(("delta", delta)),
            _ => None,
        }
    }

    /// Same payoff with the slope parameter replaced, keeping the family's
    /// second parameter fixed.
    pub fn with_lambda(&self, lambda: f64) -> Payoff {
        let mut out = *self;
        match &mut out {
            Payoff::Unconstrained { lambda: l }
            | Payoff::Strict { lambda: l, .. }
            | Payoff::Var { lambda: l, .. }
            | Payoff::EsP { lambda: l, .. }
            | Payoff::EsQ { lambda: l, .. } => *l = lambda,
        }
        out
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), DesignError> {
        let family = self.family();
        let fail = |reason: String| Err(DesignError::Invalid { family, reason });
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return fail(format!("lambda must be positive and finite, got {lambda}"));
        }
        if let Some(floor) = self.floor() {
            if !floor.is_finite() || floor > params.k {
                return fail(format!(
                    "floor {floor} must be finite and at most k = {}",
                    params.k
                ));
            }
        }
        match *self {
            Payoff::Var { floor, kink, .. } if !(kink <= floor) => {
                fail(format!("kink c = {kink} must not exceed the floor {floor}"))
            }
            Payoff::EsP { gamma, .. } if !(gamma >= 0.0 && gamma.is_finite()) => {
                fail(format!("gamma must be nonnegative, got {gamma}"))
            }
            Payoff::EsQ { delta, lambda, .. } if !(delta > 0.0 && delta <= lambda) => fail(
                format!("delta must lie in (0, lambda = {lambda}], got {delta}"),
            ),
            _ => Ok(()),
        }
    }

    /// Kink and jump locations in `Z`, ascending.
    pub fn thresholds(&self, params: &ModelParams) -> Vec<f64> {
        let k = params.k;
        match *self {
            Payoff::Unconstrained { .. } => vec![],
            Payoff::Strict { lambda, floor } => vec![(k - floor) / lambda],
            Payoff::Var {
                lambda,
                floor,
                kink,
            } => vec![(k - floor) / lambda, (k - kink) / lambda],
            Payoff::EsP {
                lambda,
                floor,
                gamma,
            } => {
                vec![(k - floor) / lambda, (k + gamma - floor) / lambda]
            }
            Payoff::EsQ {
                lambda,
                floor,
                delta,
            } => vec![(k - floor) / lambda, (k - floor) / delta],
        }
    }

    /// Payoff value at `Z_T = z`.
    ///
    /// Boundary points of a flat segment are assigned the floor value.
    pub fn at(&self, params: &ModelParams, z: f64) -> f64 {
        let k = params.k;
        match *self {
            Payoff::Unconstrained { lambda } => k - lambda * z,
            Payoff::Strict { lambda, floor } => (k - lambda * z).max(floor),
            Payoff::Var {
                lambda,
                floor,
                kink,
            } => {
                let linear = k - lambda * z;
                if linear >= kink && linear <= floor {
                    floor
                } else {
                    linear
                }
            }
            Payoff::EsP {
                lambda,
                floor,
                gamma,
            } => {
                let linear = k - lambda * z;
                if linear >= floor {
                    linear
                } else if linear >= floor - gamma {
                    floor
                } else {
                    linear + gamma
                }
            }
            Payoff::EsQ {
                lambda,
                floor,
                delta,
            } => {
                let upper = (k - floor) / lambda;
                let lower = (k - floor) / delta;
                if z <= upper {
                    k - lambda * z
                } else if z <= lower {
                    floor
                } else {
                    k - delta * z
                }
            }
        }
    }

    /// Payoff value in the original scale.
    pub fn at_original(&self, params: &ModelParams, z: f64) -> f64 {
        params.to_original(self.at(params, z))
    }

    /// Affine decomposition over `(0, ∞)`.
    pub fn branches(&self, params: &ModelParams) -> Vec<Branch> {
        let k = params.k;
        let branch = |lo, hi, intercept, slope| Branch {
            lo,
            hi,
            intercept,
            slope,
        };
        let inf = f64::INFINITY;
        match *self {
            Payoff::Unconstrained { lambda } => vec![branch(0.0, inf, k, -lambda)],
            Payoff::Strict { lambda, floor } => {
                let eta = (k - floor) / lambda;
                vec![branch(0.0, eta, k, -lambda), branch(eta, inf, floor, 0.0)]
            }
            Payoff::Var {
                lambda,
                floor,
                kink,
            } => {
                let (g1, g2) = ((k - floor) / lambda, (k - kink) / lambda);
                vec![
                    branch(0.0, g1, k, -lambda),
                    branch(g1, g2, floor, 0.0),
                    branch(g2, inf, k, -lambda),
                ]
            }
            Payoff::EsP {
                lambda,
                floor,
                gamma,
            } => {
                let (h1, h2) = ((k - floor) / lambda, (k + gamma - floor) / lambda);
                vec![
                    branch(0.0, h1, k, -lambda),
                    branch(h1, h2, floor, 0.0),
                    branch(h2, inf, k + gamma, -lambda),
                ]
            }
            Payoff::EsQ {
                lambda,
                floor,
                delta,
            } => {
                let (upper, lower) = ((k - floor) / lambda, (k - floor) / delta);
                vec![
                    branch(0.0, upper, k, -lambda),
                    branch(upper, lower, floor, 0.0),
                    branch(lower, inf, k, -delta),
                ]
            }
        }
    }

    fn split_branches(&self, params: &ModelParams, level: f64) -> (Vec<Branch>, Vec<Branch>) {
        let mut above = Vec::new();
        let mut below = Vec::new();
        for b in self.branches(params) {
            let (hi, lo) = b.split_at_level(level);
            above.extend(hi);
            below.extend(lo);
        }
        (above, below)
    }

    /// `E[Z_T · X_T]`.
    pub fn budget_value(&self, params: &ModelParams) -> f64 {
        let t = params.horizon;
        self.branches(params)
            .iter()
            .map(|b| {
                b.intercept * z_moment1(params, t, b.interval())
                    + b.slope * z_moment2(params, t, b.interval())
            })
            .sum()
    }

    /// `P[X_T ≥ level]`.
    pub fn prob_above(&self, params: &ModelParams, level: f64) -> f64 {
        let t = params.horizon;
        let (above, _) = self.split_branches(params, level);
        above
            .iter()
            .map(|b| z_prob(params, t, b.interval()))
            .sum::<f64>()
            .min(1.0)
    }

    /// `E[(level - X_T)₊]`.
    pub fn shortfall_p(&self, params: &ModelParams, level: f64) -> f64 {
        let t = params.horizon;
        let (_, below) = self.split_branches(params, level);
        below
            .iter()
            .map(|b| {
                (level - b.intercept) * z_prob(params, t, b.interval())
                    - b.slope * z_moment1(params, t, b.interval())
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// `E[Z_T (level - X_T)₊]`, the risk-neutral shortfall.
    pub fn shortfall_q(&self, params: &ModelParams, level: f64) -> f64 {
        let t = params.horizon;
        let (_, below) = self.split_branches(params, level);
        below
            .iter()
            .map(|b| {
                (level - b.intercept) * z_moment1(params, t, b.interval())
                    - b.slope * z_moment2(params, t, b.interval())
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// `E[-½ (k - X_T)²]`, identical in both scales.
    pub fn expected_utility(&self, params: &ModelParams) -> f64 {
        let t = params.horizon;
        let k = params.k;
        -0.5 * self
            .branches(params)
            .iter()
            .map(|b| {
                let gap = k - b.intercept;
                let iv = b.interval();
                gap * gap * z_prob(params, t, iv) - 2.0 * gap * b.slope * z_moment1(params, t, iv)
                    + b.slope * b.slope * z_moment2(params, t, iv)
            })
            .sum::<f64>()
    }

    /// True when the payoff never falls below `level`.
    pub fn is_bounded_below_by(&self, level: f64) -> bool {
        match *self {
            Payoff::Strict { floor, .. } => floor >= level,
            _ => false,
        }
    }

    /// Lagrange multiplier attached to the family's constraint term; zero for
    /// the unconstrained and strict families.
    pub fn implied_multiplier(&self) -> f64 {
        match *self {
            Payoff::Unconstrained { .. } | Payoff::Strict { .. } => 0.0,
            Payoff::Var { floor, kink, .. } => 0.5 * (floor - kink).powi(2),
            Payoff::EsP { gamma, .. } => gamma,
            Payoff::EsQ { lambda, delta, .. } => lambda - delta,
        }
    }
}

/// A payoff together with the regime it was calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedDesign {
    pub payoff: Payoff,
    pub regime: ConstraintSpec,
    /// Lagrange multiplier of the binding constraint; `None` for hand-built
    /// payoffs that carry no optimality certificate.
    pub multiplier: Option<f64>,
    /// The unconstrained optimum already met the constraint and was returned
    /// as a degenerate member of the regime's family.
    pub unconstrained_optimal: bool,
    /// Bracket width the calibration root-finds were driven to.
    pub tolerance: f64,
}

impl CalibratedDesign {
    /// Wraps a hand-built payoff with no multiplier data.
    pub fn uncertified(payoff: Payoff, regime: ConstraintSpec) -> Self {
        Self {
            payoff,
            regime,
            multiplier: None,
            unconstrained_optimal: false,
            tolerance: 0.0,
        }
    }

    pub fn family(&self) -> Family {
        self.payoff.family()
    }

    /// Floor the regime's constraint is measured against.
    pub fn floor(&self, params: &ModelParams) -> Option<f64> {
        self.regime
            .aux_floor(params)
            .or_else(|| self.payoff.floor())
    }

    pub fn payoff(&self, params: &ModelParams, z: f64) -> f64 {
        self.payoff.at(params, z)
    }

    pub fn budget_value(&self, params: &ModelParams) -> f64 {
        self.payoff.budget_value(params)
    }

    pub fn prob_above_floor(&self, params: &ModelParams) -> Option<f64> {
        self.floor(params)
            .map(|c| self.payoff.prob_above(params, c))
    }

    pub fn expected_shortfall_p(&self, params: &ModelParams) -> Option<f64> {
        self.floor(params)
            .map(|c| self.payoff.shortfall_p(params, c))
    }

    pub fn expected_shortfall_q(&self, params: &ModelParams) -> Option<f64> {
        self.floor(params)
            .map(|c| self.payoff.shortfall_q(params, c))
    }

    /// Value of the regime's binding functional, if it has one.
    pub fn constraint_value(&self, params: &ModelParams) -> Option<f64> {
        match self.regime.regime() {
            Regime::Var => self.prob_above_floor(params),
            Regime::EsP => self.expected_shortfall_p(params),
            Regime::EsQ => self.expected_shortfall_q(params),
            Regime::Unconstrained | Regime::Strict => None,
        }
    }

    /// `(budget - x, constraint - target)`.
    pub fn residuals(&self, params: &ModelParams) -> (f64, Option<f64>) {
        let budget = self.budget_value(params) - params.x;
        let constraint = self
            .constraint_value(params)
            .zip(self.regime.target())
            .map(|(value, target)| value - target);
        (budget, constraint)
    }
}
