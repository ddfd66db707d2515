//! The `verify` command: closed-form residuals, Monte-Carlo agreement,
//! martingale property, pointwise optimality and utility dominance.

use std::io::Write;

use anyhow::Result;
use thiserror::Error;

use crate::cli::commands::calibrate_all;
use crate::cli::config::RunConfig;
use crate::design::{CalibratedDesign, Regime};
use crate::kernel::ModelParams;
use crate::oracle::{
    default_b_grid, default_z_grid, generate_rivals, mc_functionals, mc_mean,
    pointwise_optimality_check, utility_dominance_check, FunctionalKind, RivalBase,
};
use crate::paths::wealth_at;

/// Closed-form residual bound for the binding equations.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Monte-Carlo agreement bound, in standard errors.
pub const MC_SIGMAS: f64 = 3.0;
/// Rivals drawn per family for the dominance check.
pub const RIVALS_PER_FAMILY: usize = 24;
/// Fewest feasible rivals a dominance check must compare against.
pub const MIN_RIVALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{failures} verification check(s) failed")]
pub struct VerificationFailed {
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Test hook: scales every calibrated `λ` before checking.
    pub corrupt_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    fn record(
        &mut self,
        out: &mut dyn Write,
        name: String,
        detail: String,
        passed: bool,
    ) -> std::io::Result<()> {
        writeln!(
            out,
            "{}  {:<36}  {}",
            if passed { "PASS" } else { "FAIL" },
            name,
            detail
        )?;
        self.checks.push(CheckResult {
            name,
            detail,
            passed,
        });
        Ok(())
    }
}

fn target_kind(regime: Regime) -> Option<FunctionalKind> {
    match regime {
        Regime::Var => Some(FunctionalKind::ProbFloor),
        Regime::EsP => Some(FunctionalKind::EsP),
        Regime::EsQ => Some(FunctionalKind::EsQ),
        Regime::Unconstrained | Regime::Strict => None,
    }
}

fn mc_checks(
    report: &mut VerifyReport,
    out: &mut dyn Write,
    design: &CalibratedDesign,
    params: &ModelParams,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<()> {
    let regime = design.regime.regime();
    let mut kinds = vec![FunctionalKind::Budget, FunctionalKind::Utility];
    let mut targets = vec![params.x, design.payoff.expected_utility(params)];
    if let (Some(kind), Some(target)) = (target_kind(regime), design.regime.target()) {
        kinds.push(kind);
        targets.push(target);
    }
    let estimates = mc_functionals(&kinds, design, params, opts.samples, seed)?;
    for ((kind, target), est) in kinds.iter().zip(&targets).zip(&estimates) {
        let passed = est.agrees_with(*target, MC_SIGMAS);
        let detail = format!(
            "mc {:.6} vs {:.6}, diff {:.2e}, se {:.2e}",
            est.mean,
            target,
            est.mean - target,
            est.stderr
        );
        report.record(out, format!("mc {kind} [{regime}]"), detail, passed)?;
    }
    for (j, frac) in [0.25, 0.5, 0.75].iter().enumerate() {
        let t = frac * params.horizon;
        let est = mc_mean(
            params,
            t,
            opts.samples,
            seed.wrapping_add(100 + j as u64),
            |z| z * wealth_at(design, params, t, z),
        );
        let passed = est.agrees_with(params.x, MC_SIGMAS);
        let detail = format!(
            "E[Z X] {:.6} vs x = {}, se {:.2e}",
            est.mean, params.x, est.stderr
        );
        report.record(out, format!("martingale t={t} [{regime}]"), detail, passed)?;
    }
    Ok(())
}

/// Runs every check for the requested regimes and prints one line per check.
pub fn run_verify(
    cfg: &RunConfig,
    regimes: &[Regime],
    opts: &VerifyOptions,
    out: &mut dyn Write,
) -> Result<VerifyReport> {
    let params = cfg.params()?;
    let mut designs = calibrate_all(cfg, regimes)?;
    if let Some(factor) = opts.corrupt_lambda {
        for d in &mut designs {
            d.payoff = d.payoff.with_lambda(d.payoff.lambda() * factor);
        }
    }
    let mut report = VerifyReport::default();
    writeln!(out, "verify: {} samples, seed {}", opts.samples, opts.seed)?;

    for d in &designs {
        let regime = d.regime.regime();
        let (budget, constraint) = d.residuals(&params);
        report.record(
            out,
            format!("closed-form budget [{regime}]"),
            format!("budget - x = {budget:.3e}"),
            budget.abs() <= RESIDUAL_TOL,
        )?;
        if let Some(c) = constraint {
            report.record(
                out,
                format!("closed-form constraint [{regime}]"),
                format!("constraint - target = {c:.3e}"),
                c.abs() <= RESIDUAL_TOL,
            )?;
        }
    }

    for (i, d) in designs.iter().enumerate() {
        mc_checks(
            &mut report,
            out,
            d,
            &params,
            opts,
            opts.seed.wrapping_add(1000 * i as u64),
        )?;
    }

    let z_grid = default_z_grid();
    for d in &designs {
        let regime = d.regime.regime();
        let floor = d.floor(&params).unwrap_or(params.x);
        let r = pointwise_optimality_check(d, &params, &z_grid, &default_b_grid(floor, params.k))?;
        report.record(
            out,
            format!("pointwise optimality [{regime}]"),
            format!(
                "max violation {:.3e} at z = {:.4}",
                r.max_violation, r.worst_z
            ),
            r.passed,
        )?;
    }

    let base = RivalBase {
        c_tilde: cfg.c_tilde,
        epsilon: cfg.epsilon,
        nu: cfg.nu,
    };
    let rivals = generate_rivals(&params, base, RIVALS_PER_FAMILY, opts.seed);
    for (i, d) in designs.iter().enumerate() {
        let regime = d.regime.regime();
        let r = utility_dominance_check(
            d,
            &params,
            &rivals,
            opts.samples,
            opts.seed.wrapping_add(50_000 + i as u64),
        )?;
        let enough = r.compared.len() >= MIN_RIVALS;
        report.record(
            out,
            format!("utility dominance [{regime}]"),
            format!(
                "{} rivals compared, {} infeasible, worst advantage {:.2} se",
                r.compared.len(),
                r.skipped.len(),
                r.worst_z
            ),
            r.passed && enough,
        )?;
    }

    writeln!(
        out,
        "{} of {} checks passed",
        report.checks.len() - report.failures(),
        report.checks.len()
    )?;
    Ok(report)
}
