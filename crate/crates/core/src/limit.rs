//! Weak-coupling limit experiments: solution-level sweeps against the Landau
//! solution, operator-level weak convergence, the remainder-equation audit and
//! log–log rate fits.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{choose_dt, rhs, run_with_dt, EvolutionConfig, Model};
use crate::grid::{weighted_norm, write_field, DistributionField, NormSpec, VelocityGrid};
use crate::kernel::{KernelConfig, Statistics};
use crate::operators::{eval_q_bilinear, eval_q_l, eval_r, landau_weak_form, weak_form, CollisionQuadrature, TestPhi};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of `log error` on `log ε` over the positive errors.
pub fn fit_rate(eps: &[f64], errors: &[f64]) -> Result<Fit> {
    if eps.len() != errors.len() {
        return Err(Error::Domain(format!("{} eps values for {} errors", eps.len(), errors.len())));
    }
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(errors)
        .filter(|(e, r)| **e > 0.0 && **r > 0.0 && r.is_finite())
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} positive errors, need at least 2", pts.len())));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all eps values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Fit { slope, intercept, r_squared })
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::DegenerateFit("empty eps list".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::Domain(format!("eps values must lie in (0, 1], got {eps:?}")));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain(format!("eps list must be strictly decreasing, got {eps:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct GridInfo {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    /// `‖R^ε‖ = ε^{-ϑ} ‖f^ε - f_L‖` per ε.
    pub remainder_norms: Vec<f64>,
    pub theta_config: f64,
    pub theta_hat: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub norm: NormSpec,
    pub t_final: f64,
    pub grid: GridInfo,
    pub dt: f64,
    pub steps: usize,
    /// Half-resolution Landau self-convergence error, when measured.
    pub floor: Option<f64>,
    /// ε values left out of the fit for lying below ten times the floor.
    pub excluded: Vec<f64>,
    pub degenerate: bool,
    pub incomplete: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct LimitOptions {
    /// Replace every Uehling–Uhlenbeck run by the Landau run (self-comparison).
    pub audit_landau: bool,
    /// Measure the discretization floor with a Landau run at `n/2`.
    pub control_floor: bool,
    /// Directory for `R^ε` snapshots.
    pub out_dir: Option<std::path::PathBuf>,
}

/// Largest ε admissible for Fermi–Dirac data: `min(1, ‖f0‖_∞^{-1/3})`.
pub fn fd_eps_limit(f0: &DistributionField) -> f64 {
    let m = f0.linf();
    if m > 0.0 { m.powf(-1.0 / 3.0).min(1.0) } else { 1.0 }
}

#[allow(clippy::too_many_arguments)]
pub fn limit_study(
    f0: &DistributionField,
    template: &KernelConfig,
    eps_list: &[f64],
    quad: &CollisionQuadrature,
    econf: &EvolutionConfig,
    norm: NormSpec,
    theta: f64,
    opts: &LimitOptions,
) -> Result<ConvergenceReport> {
    check_eps_list(eps_list)?;
    econf.validate()?;
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Domain(format!("theta must lie in (0, 1], got {theta}")));
    }
    if template.statistics == Statistics::FermiDirac {
        let lim = fd_eps_limit(f0);
        if let Some(&e) = eps_list.iter().find(|&&e| e > lim) {
            return Err(Error::Precondition(format!(
                "Fermi–Dirac data requires eps <= min(1, ||f0||_inf^(-1/3)) = {lim:.6}, got eps = {e}"
            )));
        }
    }
    let i3 = template.potential.moment_i(3.0)?;
    let landau = Model::Landau { i3 };
    // One step size for every run so time-discretization error cancels in differences.
    let r0 = rhs(f0, &landau, econf.clamp)?;
    let fixed = choose_dt(f0, &r0, econf);
    let grid = f0.grid;
    let mut report = ConvergenceReport {
        eps: eps_list.to_vec(),
        errors: Vec::new(),
        remainder_norms: Vec::new(),
        theta_config: theta,
        theta_hat: None,
        intercept: None,
        r2: None,
        norm,
        t_final: econf.t_final,
        grid: GridInfo { n: grid.n, l: grid.l },
        dt: fixed.0,
        steps: fixed.1,
        floor: None,
        excluded: Vec::new(),
        degenerate: false,
        incomplete: false,
        note: None,
    };
    let f_l = match run_with_dt(f0, &landau, econf, norm, None, Some(fixed)) {
        Ok(r) => r.final_state,
        Err(e @ Error::BlowUp { .. }) => {
            report.incomplete = true;
            report.note = Some(format!("Landau run aborted: {e}"));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let runs: Vec<Result<DistributionField>> = eps_list
        .par_iter()
        .map(|&eps| {
            if opts.audit_landau {
                return Ok(f_l.clone());
            }
            let model = Model::Uu { cfg: template.with_eps(eps)?, quad: quad.clone() };
            Ok(run_with_dt(f0, &model, econf, norm, None, Some(fixed))?.final_state)
        })
        .collect();
    for (k, r) in runs.into_iter().enumerate() {
        let f_eps = match r {
            Ok(f) => f,
            Err(e @ Error::BlowUp { .. }) => {
                report.incomplete = true;
                report.note = Some(format!("run at eps = {} aborted: {e}", eps_list[k]));
                report.eps.truncate(report.errors.len());
                return Ok(report);
            }
            Err(e) => return Err(e),
        };
        let diff = f_eps.sub(&f_l)?;
        let err = weighted_norm(&diff, norm)?;
        let eps = eps_list[k];
        report.errors.push(err);
        report.remainder_norms.push(err * eps.powf(-theta));
        if let Some(dir) = &opts.out_dir {
            std::fs::create_dir_all(dir)?;
            write_field(&diff.scaled(eps.powf(-theta)), &dir.join(format!("remainder_eps_{eps}.skf")))?;
        }
    }
    if opts.control_floor {
        report.floor = control_floor(f0, &landau, econf, norm, fixed)?;
    }
    let cut = report.floor.map(|f| 10.0 * f).unwrap_or(0.0);
    let (mut fe, mut fr) = (Vec::new(), Vec::new());
    for (&e, &r) in report.eps.iter().zip(&report.errors) {
        if r > cut {
            fe.push(e);
            fr.push(r);
        } else {
            report.excluded.push(e);
        }
    }
    match fit_rate(&fe, &fr) {
        Ok(fit) => {
            report.theta_hat = Some(fit.slope);
            report.intercept = Some(fit.intercept);
            report.r2 = Some(fit.r_squared);
        }
        Err(Error::DegenerateFit(msg)) => {
            report.degenerate = true;
            report.note = Some(format!("degenerate fit: {msg}"));
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// `‖f_L^{(n)} - f_L^{(n/2)}‖` on the coarse nodes, which the fine grid
/// contains as its even-index nodes.
fn control_floor(f0: &DistributionField, landau: &Model, econf: &EvolutionConfig, norm: NormSpec, fixed: (f64, usize)) -> Result<Option<f64>> {
    let g = f0.grid;
    let half = g.n / 2;
    if half < 8 || !half.is_multiple_of(2) {
        return Ok(None);
    }
    let coarse = VelocityGrid::new(half, g.l)?;
    let restrict = |f: &DistributionField| -> DistributionField {
        let mut v = Vec::with_capacity(coarse.len());
        for k in 0..half {
            for j in 0..half {
                for i in 0..half {
                    v.push(f.get(2 * i, 2 * j, 2 * k));
                }
            }
        }
        DistributionField { grid: coarse, values: v, meta: f.meta }
    };
    let fine = run_with_dt(f0, landau, econf, norm, None, Some(fixed))?.final_state;
    let low = run_with_dt(&restrict(f0), landau, econf, norm, None, Some(fixed))?.final_state;
    Ok(Some(weighted_norm(&restrict(&fine).sub(&low)?, norm)?))
}

pub fn write_report(report: &ConvergenceReport, config: &serde_json::Value, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_value(report)?;
    json["config"] = config.clone();
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&json)?)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join("errors.csv"))?;
    w.write_record(["eps", "error"])?;
    for (e, r) in report.eps.iter().zip(&report.errors) {
        w.write_record([e.to_string(), r.to_string()])?;
    }
    w.flush()?;
    let fit_line = match (report.theta_hat, report.intercept) {
        (Some(s), Some(c)) => format!("fit(x) = exp({c}) * x**{s}\nplot 'errors.csv' using 1:2 with points title 'error', fit(x) title 'slope {s:.3}'\n"),
        _ => "plot 'errors.csv' using 1:2 with points title 'error'\n".to_string(),
    };
    std::fs::write(
        dir.join("errors.gp"),
        format!("set datafile separator ','\nset key autotitle columnhead\nset logscale xy\nset xlabel 'eps'\nset ylabel 'error'\n{fit_line}"),
    )?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakRow {
    pub phi: String,
    pub eps: f64,
    pub uu: f64,
    pub landau: f64,
    pub d: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakStudy {
    pub rows: Vec<WeakRow>,
    /// Per test function: the fit of `d` against ε, or `None` when degenerate.
    pub fits: Vec<(String, Option<Fit>)>,
}

/// `d(φ, ε) = |⟨Q^ε_UU(f), φ⟩ - ⟨Q_L(f, f), φ⟩|`, both sides in symmetrized
/// weak form on the same grid.
pub fn weak_convergence_study(
    f: &DistributionField,
    phis: &[TestPhi],
    template: &KernelConfig,
    eps_list: &[f64],
    quad: &CollisionQuadrature,
) -> Result<WeakStudy> {
    check_eps_list(eps_list)?;
    let i3 = template.potential.moment_i(3.0)?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &phi in phis {
        let name = format!("{phi:?}");
        let lw = landau_weak_form(f, phi, i3)?;
        let mut ds = Vec::new();
        for &eps in eps_list {
            let w = weak_form(f, phi, &template.with_eps(eps)?, quad)?;
            let d = (w.value - lw).abs();
            ds.push(d);
            rows.push(WeakRow { phi: name.clone(), eps, uu: w.value, landau: lw, d });
        }
        fits.push((name, fit_rate(eps_list, &ds).ok()));
    }
    Ok(WeakStudy { rows, fits })
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditTerm {
    pub name: &'static str,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditTable {
    pub terms: Vec<AuditTerm>,
    /// `‖Σ terms - ∂_t R^ε‖ / ‖∂_t R^ε‖` with the time derivative from the
    /// two supplied states, when both are given.
    pub residual: Option<f64>,
}

/// Named terms of the evolution equation of `R^ε = ε^{-ϑ}(f^ε - f_L)`:
/// `∂_t R = Q₁(f^ε, R) + Q₁(R, f_L) + ε^{-ϑ}(Q₁ - Q_L)(f_L, f_L)
///        + ε^{-ϑ}(Q₂ + Q₃)(f^ε, f^ε) + ε^{-ϑ} R(f^ε, f^ε, f^ε)`.
/// With `next = Some((f^ε(t+dt), f_L(t+dt), dt))` the sum is compared with the
/// forward difference of `R`.
#[allow(clippy::too_many_arguments)]
pub fn error_equation_audit(
    f_eps: &DistributionField,
    f_l: &DistributionField,
    next: Option<(&DistributionField, &DistributionField, f64)>,
    cfg: &KernelConfig,
    theta: f64,
    quad: &CollisionQuadrature,
    norm: NormSpec,
) -> Result<AuditTable> {
    f_eps.check_same_grid(f_l)?;
    let w = cfg.eps.powf(-theta);
    let r = f_eps.sub(f_l)?.scaled(w);
    let i3 = cfg.potential.moment_i(3.0)?;
    let t1 = eval_q_bilinear(f_eps, &r, 1, cfg, quad)?.field;
    let t2 = eval_q_bilinear(&r, f_l, 1, cfg, quad)?.field;
    let q1l = eval_q_bilinear(f_l, f_l, 1, cfg, quad)?.field;
    let ql = eval_q_l(f_l, f_l, i3)?.field;
    let t3 = q1l.sub(&ql)?.scaled(w);
    let q2 = eval_q_bilinear(f_eps, f_eps, 2, cfg, quad)?.field;
    let q3 = eval_q_bilinear(f_eps, f_eps, 3, cfg, quad)?.field;
    let t4 = q2.axpy(1.0, &q3)?.scaled(w);
    let t5 = eval_r(f_eps, f_eps, f_eps, cfg, quad)?.field.scaled(w);
    let parts = [
        ("Q1(f_eps,R)", &t1),
        ("Q1(R,f_L)", &t2),
        ("eps^-theta (Q1-QL)(f_L,f_L)", &t3),
        ("eps^-theta (Q2+Q3)(f_eps,f_eps)", &t4),
        ("eps^-theta R(f_eps,f_eps,f_eps)", &t5),
    ];
    let mut terms = Vec::new();
    let mut sum = DistributionField::zeros(f_eps.grid);
    for (name, f) in parts {
        terms.push(AuditTerm { name, norm: weighted_norm(f, norm)? });
        sum = sum.axpy(1.0, f)?;
    }
    let residual = match next {
        Some((fe1, fl1, dt)) => {
            fe1.check_same_grid(f_eps)?;
            let r1 = fe1.sub(fl1)?.scaled(w);
            let dr = r1.sub(&r)?.scaled(1.0 / dt);
            let den = weighted_norm(&dr, norm)?;
            let num = weighted_norm(&sum.sub(&dr)?, norm)?;
            Some(if den > 0.0 { num / den } else { num })
        }
        None => None,
    };
    terms.push(AuditTerm { name: "sum", norm: weighted_norm(&sum, norm)? });
    Ok(AuditTable { terms, residual })
}
