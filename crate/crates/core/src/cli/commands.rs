//! Report and CSV emission.
//!
//! CSV files are UTF-8 with a header row, comma separators, dot decimals and
//! `\n` after every row. Numbers carry 9 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::calibrate::{calibrate, CalibrationError};
use crate::cli::config::RunConfig;
use crate::design::{CalibratedDesign, Family, Payoff, Regime};
use crate::kernel::ModelParams;
use crate::oracle::linspace;
use crate::paths::controlled_trace;

/// Formats with 9 significant digits, switching to exponent form outside
/// `[1e-5, 1e9)`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Calibrates every regime in order, stopping at the first failure.
pub fn calibrate_all(
    cfg: &RunConfig,
    regimes: &[Regime],
) -> Result<Vec<CalibratedDesign>, CalibrationError> {
    let params = cfg.params().expect("validated config");
    regimes
        .iter()
        .map(|&r| calibrate(&cfg.constraint(r), &params))
        .collect()
}

/// Names of the family thresholds, in ascending order.
fn threshold_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::U => &[],
        Family::C => &["eta"],
        Family::P => &["g1", "g2"],
        Family::E => &["h1", "h2"],
        Family::Q => &["(k-C)/lambda", "(k-C)/delta"],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub family: Family,
    pub lambda: f64,
    /// `c`, `gamma` or `delta`, in the auxiliary scale.
    pub second_name: Option<&'static str>,
    pub second: Option<f64>,
    /// Lower kink `c̃ = c + (a - b) T` in the original scale (VaR family).
    pub kink_tilde: Option<f64>,
    pub floor_tilde: Option<f64>,
    pub floor_aux: Option<f64>,
    pub multiplier: Option<f64>,
    pub thresholds: Vec<(&'static str, f64)>,
    pub budget_residual: f64,
    pub constraint_residual: Option<f64>,
    pub unconstrained_optimal: bool,
    pub tolerance: f64,
}

impl RegimeReport {
    pub fn new(design: &CalibratedDesign, params: &ModelParams) -> Self {
        let (budget_residual, constraint_residual) = design.residuals(params);
        let second = design.payoff.second();
        let kink_tilde = match design.payoff {
            Payoff::Var { kink, .. } => Some(params.to_original(kink)),
            _ => None,
        };
        let names = threshold_names(design.family());
        Self {
            regime: design.regime.regime(),
            family: design.family(),
            lambda: design.payoff.lambda(),
            second_name: second.map(|s| s.0),
            second: second.map(|s| s.1),
            kink_tilde,
            floor_tilde: design.regime.c_tilde(),
            floor_aux: design.regime.aux_floor(params),
            multiplier: design.multiplier,
            thresholds: names
                .iter()
                .copied()
                .zip(design.payoff.thresholds(params))
                .collect(),
            budget_residual,
            constraint_residual,
            unconstrained_optimal: design.unconstrained_optimal,
            tolerance: design.tolerance,
        }
    }

    fn write_text(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "== {} (family {}) ==", self.regime, self.family)?;
        writeln!(out, "  {:<32}{}", "lambda", fmt_sig(self.lambda))?;
        if let (Some(name), Some(value)) = (self.second_name, self.second) {
            match self.kink_tilde {
                Some(tilde) => writeln!(
                    out,
                    "  {:<32}{}  (auxiliary scale; original scale {})",
                    name,
                    fmt_sig(value),
                    fmt_sig(tilde)
                )?,
                None => writeln!(out, "  {:<32}{}", name, fmt_sig(value))?,
            }
        }
        if let (Some(tilde), Some(aux)) = (self.floor_tilde, self.floor_aux) {
            writeln!(
                out,
                "  {:<32}{}  (auxiliary C = {})",
                "floor C_tilde",
                fmt_sig(tilde),
                fmt_sig(aux)
            )?;
        }
        if let Some(m) = self.multiplier {
            writeln!(out, "  {:<32}{}", "multiplier", fmt_sig(m))?;
        }
        for (name, value) in &self.thresholds {
            writeln!(out, "  {:<32}{}", name, fmt_sig(*value))?;
        }
        writeln!(out, "  {:<32}{:.3e}", "budget - x", self.budget_residual)?;
        if let Some(r) = self.constraint_residual {
            writeln!(out, "  {:<32}{:.3e}", "constraint - target", r)?;
        }
        let fired = if self.unconstrained_optimal {
            "yes"
        } else {
            "no"
        };
        writeln!(out, "  {:<32}{}", "unconstrained optimum feasible", fired)
    }
}

pub fn cmd_calibrate(
    cfg: &RunConfig,
    regimes: &[Regime],
    json: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let params = cfg.params()?;
    let designs = calibrate_all(cfg, regimes)?;
    let reports: Vec<RegimeReport> = designs
        .iter()
        .map(|d| RegimeReport::new(d, &params))
        .collect();
    if json {
        serde_json::to_writer_pretty(&mut *out, &reports)?;
        writeln!(out)?;
    } else {
        writeln!(
            out,
            "a = {}, b = {}, sigma = {}, x = {}, T = {}, k_tilde = {} (auxiliary k = {})",
            cfg.a,
            cfg.b,
            cfg.sigma,
            cfg.x,
            cfg.horizon,
            cfg.k_tilde,
            fmt_sig(params.k)
        )?;
        for r in &reports {
            r.write_text(out)?;
        }
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Payoff curves as CSV text: `z,unconstrained,<regime>...` in the original
/// scale on a uniform `z` grid.
pub fn payoff_csv(
    cfg: &RunConfig,
    regimes: &[Regime],
    z_min: f64,
    z_max: f64,
    points: usize,
) -> Result<String> {
    if !(z_min > 0.0 && z_max > z_min && z_max.is_finite()) {
        bail!("need 0 < z_min < z_max, got z_min = {z_min}, z_max = {z_max}");
    }
    if points < 2 {
        bail!("need at least 2 points, got {points}");
    }
    let params = cfg.params()?;
    let mut columns = vec![Regime::Unconstrained];
    columns.extend(
        regimes
            .iter()
            .copied()
            .filter(|&r| r != Regime::Unconstrained),
    );
    let designs = calibrate_all(cfg, &columns)?;
    let mut csv = String::from("z");
    for r in &columns {
        csv.push(',');
        csv.push_str(r.name());
    }
    csv.push('\n');
    for z in linspace(z_min, z_max, points) {
        csv.push_str(&fmt_sig(z));
        for d in &designs {
            csv.push(',');
            csv.push_str(&fmt_sig(d.payoff.at_original(&params, z)));
        }
        csv.push('\n');
    }
    Ok(csv)
}

pub fn cmd_payoff(
    cfg: &RunConfig,
    regimes: &[Regime],
    z_min: f64,
    z_max: f64,
    points: usize,
    dir: &Path,
) -> Result<PathBuf> {
    let csv = payoff_csv(cfg, regimes, z_min, z_max, points)?;
    write_file(dir, "payoff.csv", &csv)
}

/// One trace CSV: `t,W,Z,uncontrolled,<regime>_X_tilde,<regime>_pi,...,pi_extrapolated`.
pub fn trace_csv(cfg: &RunConfig, designs: &[CalibratedDesign], seed: u64) -> Result<String> {
    let params = cfg.params()?;
    let traces: Vec<_> = designs
        .iter()
        .map(|d| controlled_trace(d, &params, seed, cfg.n_steps))
        .collect();
    let mut csv = String::from("t,W,Z,uncontrolled");
    for d in designs {
        let name = d.regime.regime().name();
        csv.push_str(&format!(",{name}_X_tilde,{name}_pi"));
    }
    csv.push_str(",pi_extrapolated\n");
    let Some(first) = traces.first() else {
        bail!("no regime requested");
    };
    for i in 0..first.times.len() {
        let mut row = vec![
            fmt_sig(first.times[i]),
            fmt_sig(first.w[i]),
            fmt_sig(first.z[i]),
            fmt_sig(first.uncontrolled[i]),
        ];
        for tr in &traces {
            row.push(fmt_sig(tr.x_tilde[i]));
            row.push(fmt_sig(tr.pi[i]));
        }
        row.push(u8::from(first.pi_extrapolated[i]).to_string());
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok(csv)
}

pub fn cmd_simulate(cfg: &RunConfig, regimes: &[Regime], dir: &Path) -> Result<Vec<PathBuf>> {
    let designs = calibrate_all(cfg, regimes)?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            write_file(
                dir,
                &format!("trace_seed{seed}.csv"),
                &trace_csv(cfg, &designs, seed)?,
            )
        })
        .collect()
}
