//! Closed-form primitives for the pricing kernel `Z_t = exp(-β²t/2 + β W_t)`.
//!
//! Everything here is a pure function of its arguments. `Z_t` is lognormal with
//! `ln Z_t ~ N(-β²t/2, β²t)` and `β = -b/σ < 0`, so a large Brownian upside maps
//! to a small `Z`. The truncated moments below are the building blocks for every
//! budget, probability and shortfall functional in [`crate::design`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("reinsurance must be non-cheap with positive insurer drift: need b > a > 0, got a = {a}, b = {b}")]
    DriftOrdering { a: f64, b: f64 },
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("invalid interval [{lo}, {hi}]: need 0 <= lo <= hi")]
    Interval { lo: f64, hi: f64 },
    #[error("probability {0} outside the open interval (0, 1)")]
    Probability(f64),
}

/// Surplus model primitives in the original scale, plus the derived auxiliary
/// constants used by every closed form.
///
/// The auxiliary surplus is `X_t = X̃_t - (a - b) t`; targets and floors shift
/// by the full-horizon amount `(a - b) T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Insurer drift per unit time.
    pub a: f64,
    /// Drift the reinsurer demands for taking over the full risk.
    pub b: f64,
    pub sigma: f64,
    /// Initial surplus.
    pub x: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Surplus target `k̃` in the original scale.
    pub k_tilde: f64,
    /// `β = -b/σ`.
    pub beta: f64,
    /// Auxiliary target `k = k̃ - (a - b) T`.
    pub k: f64,
}

impl ModelParams {
    /// Validates the structural invariants (`b > a > 0`, `σ > 0`, `T > 0`).
    ///
    /// `x < k` is not enforced here: it is a feasibility condition of the
    /// optimisation problem and is reported by calibration instead.
    pub fn new(
        a: f64,
        b: f64,
        sigma: f64,
        x: f64,
        horizon: f64,
        k_tilde: f64,
    ) -> Result<Self, ModelError> {
        for (name, value) in [
            ("a", a),
            ("b", b),
            ("sigma", sigma),
            ("x", x),
            ("T", horizon),
            ("k_tilde", k_tilde),
        ] {
            if !value.is_finite() {
                return Err(ModelError::NotFinite { name, value });
            }
        }
        if !(b > a && a > 0.0) {
            return Err(ModelError::DriftOrdering { a, b });
        }
        if sigma <= 0.0 {
            return Err(ModelError::NotPositive {
                name: "sigma",
                value: sigma,
            });
        }
        if horizon <= 0.0 {
            return Err(ModelError::NotPositive {
                name: "T",
                value: horizon,
            });
        }
        Ok(Self {
            a,
            b,
            sigma,
            x,
            horizon,
            k_tilde,
            beta: -b / sigma,
            k: k_tilde - (a - b) * horizon,
        })
    }

    /// Parameters used throughout the numerical illustrations:
    /// `a = 0.2, b = 0.5, σ = 1.2, x = 2, T = 5, k̃ = 5`.
    pub fn reference() -> Self {
        Self::new(0.2, 0.5, 1.2, 2.0, 5.0, 5.0).expect("reference parameters are valid")
    }

    /// Deterministic drift removed by full reinsurance over `[0, t]`: `(a - b) t`.
    #[inline]
    pub fn shift(&self, t: f64) -> f64 {
        (self.a - self.b) * t
    }

    /// Auxiliary floor `C = C̃ - (a - b) T`.
    #[inline]
    pub fn aux_floor(&self, c_tilde: f64) -> f64 {
        c_tilde - self.shift(self.horizon)
    }

    /// Converts an auxiliary terminal value back to the original scale.
    #[inline]
    pub fn to_original(&self, aux_terminal: f64) -> f64 {
        aux_terminal + self.shift(self.horizon)
    }

    #[inline]
    pub fn beta_sq(&self) -> f64 {
        self.beta * self.beta
    }

    /// `E[Z_t²] = e^{β² t}`.
    #[inline]
    pub fn second_moment(&self, t: f64) -> f64 {
        (self.beta_sq() * t).exp()
    }
}

/// Range of `Z` values `[lo, hi]`; `lo = 0` is the `0⁺` limit and `hi` may be
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if lo.is_nan() || hi.is_nan() || lo < 0.0 || lo > hi || lo.is_infinite() {
            return Err(ModelError::Interval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// `(0⁺, ∞)`.
    pub const fn whole() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }

    /// `(0⁺, z]`.
    pub fn below(z: f64) -> Self {
        Self {
            lo: 0.0,
            hi: z.max(0.0),
        }
    }

    /// `[z, ∞)`.
    pub fn above(z: f64) -> Self {
        Self {
            lo: z.max(0.0),
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, z: f64) -> bool {
        z >= self.lo && z <= self.hi
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function `Φ(u)`, via the complementary error
/// function so that both tails keep full relative accuracy.
#[inline]
pub fn std_normal_cdf(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-u * FRAC_1_SQRT_2)
}

/// Probability mass `Φ(hi) - Φ(lo)` of a standard normal on `[lo, hi]`.
///
/// Uses upper-tail differences when both arguments are positive; infinite
/// arguments are allowed.
#[inline]
pub fn std_normal_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 0.0 {
        std_normal_cdf(-lo) - std_normal_cdf(-hi)
    } else {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    }
}

/// Inverse of [`std_normal_cdf`].
///
/// Rational initial guess (Acklam) refined by two Halley steps on the CDF,
/// working in the lower tail so that the residual is computed without
/// cancellation.
pub fn std_normal_quantile(p: f64) -> Result<f64, ModelError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ModelError::Probability(p));
    }
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p));
    }
    Ok(lower_quantile(p))
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    for _ in 0..2 {
        let e = std_normal_cdf(x) - p;
        let u = e / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Standardised argument `(κ β² t - ln z) / (β √t)` shared by all closed forms;
/// `κ = 0, 1/2, 3/2` gives the order-0, 1 and 2 truncated moments.
///
/// Increasing in `z` since `β < 0`; infinite or zero `z` map to `±∞` through
/// IEEE arithmetic.
#[inline]
fn standardized(params: &ModelParams, t: f64, z: f64, kappa: f64) -> f64 {
    let scale = params.beta * t.sqrt();
    (kappa * params.beta_sq() * t - z.ln()) / scale
}

/// `P[Z_t ∈ [lo, hi]]`, with `P[Z_t ≤ z] = Φ((ln z + ½β²t)/(-β√t))`.
pub fn z_prob(params: &ModelParams, t: f64, iv: Interval) -> f64 {
    let lo = standardized(params, t, iv.lo, -0.5);
    let hi = standardized(params, t, iv.hi, -0.5);
    std_normal_mass(lo, hi)
}

/// `E[Z_t · 1(Z_t ∈ [lo, hi])]`.
pub fn z_moment1(params: &ModelParams, t: f64, iv: Interval) -> f64 {
    let lo = standardized(params, t, iv.lo, 0.5);
    let hi = standardized(params, t, iv.hi, 0.5);
    std_normal_mass(lo, hi)
}

/// `E[Z_t² · 1(Z_t ∈ [lo, hi])]`.
pub fn z_moment2(params: &ModelParams, t: f64, iv: Interval) -> f64 {
    let lo = standardized(params, t, iv.lo, 1.5);
    let hi = standardized(params, t, iv.hi, 1.5);
    params.second_moment(t) * std_normal_mass(lo, hi)
}

/// `f(t, z) = Φ((½β²t - ln z)/(β√t)) = E[Z_t; Z_t ≤ z]`.
pub fn kernel_f(params: &ModelParams, t: f64, z: f64) -> f64 {
    std_normal_cdf(standardized(params, t, z, 0.5))
}

/// `g(t, z) = e^{β²t} Φ((3/2 β²t - ln z)/(β√t)) = E[Z_t²; Z_t ≤ z]`.
pub fn kernel_g(params: &ModelParams, t: f64, z: f64) -> f64 {
    params.second_moment(t) * std_normal_cdf(standardized(params, t, z, 1.5))
}

/// `h(t, z) = g(t, z) / z`.
pub fn kernel_h(params: &ModelParams, t: f64, z: f64) -> f64 {
    kernel_g(params, t, z) / z
}

/// `m(t, z) = z e^{β²t}`.
pub fn kernel_m(params: &ModelParams, t: f64, z: f64) -> f64 {
    z * params.second_moment(t)
}

/// `z ∂f/∂z (t, z)`.
pub fn kernel_zfz(params: &ModelParams, t: f64, z: f64) -> f64 {
    let scale = params.beta * t.sqrt();
    -std_normal_pdf(standardized(params, t, z, 0.5)) / scale
}

/// `z ∂h/∂z (t, z)`.
pub fn kernel_zhz(params: &ModelParams, t: f64, z: f64) -> f64 {
    let scale = params.beta * t.sqrt();
    let u = standardized(params, t, z, 1.5);
    params.second_moment(t) / z * (-std_normal_pdf(u) / scale - std_normal_cdf(u))
}
