//! Fixed-step RK4 integration of the Uehling–Uhlenbeck and Landau equations
//! with per-step diagnostics and asynchronous snapshot output.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{moments, weighted_norm, write_field, DistributionField, NormSpec};
use crate::kernel::{KernelConfig, Statistics};
use crate::operators::{eval_q_l, eval_q_uu, project_conservation, CollisionQuadrature};

/// Right-hand side of `∂_t f = ...`.
#[derive(Clone, Debug)]
pub enum Model {
    Uu { cfg: KernelConfig, quad: CollisionQuadrature },
    Landau { i3: f64 },
    /// `∂_t f = -rate · f`, for integrator checks.
    Linear { rate: f64 },
}

impl Model {
    fn fd_cap(&self) -> Option<f64> {
        match self {
            Model::Uu { cfg, .. } if cfg.statistics == Statistics::FermiDirac => Some(cfg.eps.powi(-3)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    /// `None` selects `0.1 ‖f0‖_∞ / ‖rhs(f0)‖_∞`.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub clamp: bool,
    pub conservation_projection: bool,
    pub snapshot_stride: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig { dt: None, t_final: 0.1, clamp: true, conservation_projection: false, snapshot_stride: 0 }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Domain(format!("t_final must be positive, got {}", self.t_final)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= self.t_final) {
                return Err(Error::Domain(format!("dt must lie in (0, t_final], got {dt}")));
            }
        }
        Ok(())
    }
}

/// `|f| ∧ ε⁻³` for Fermi–Dirac models, `|f|` otherwise.
fn truncate(f: &DistributionField, cap: Option<f64>) -> DistributionField {
    match cap {
        Some(c) => f.map(|x| x.abs().min(c)),
        None => f.map(f64::abs),
    }
}

pub fn rhs(f: &DistributionField, model: &Model, clamp: bool) -> Result<DistributionField> {
    let clamp = clamp || model.fd_cap().is_some();
    match model {
        Model::Uu { cfg, quad } => {
            let arg = if clamp { truncate(f, model.fd_cap()) } else { f.clone() };
            Ok(eval_q_uu(&arg, cfg, quad)?.field)
        }
        Model::Landau { i3 } => Ok(eval_q_l(f, f, *i3)?.field),
        Model::Linear { rate } => Ok(f.scaled(-rate)),
    }
}

struct Stepper<'a> {
    model: &'a Model,
    clamp: bool,
    project: bool,
}

impl Stepper<'_> {
    fn eval(&self, f: &DistributionField) -> Result<DistributionField> {
        let r = rhs(f, self.model, self.clamp)?;
        if self.project {
            project_conservation(&r, f)
        } else {
            Ok(r)
        }
    }

    /// One RK4 step given `k1 = rhs(f)`.
    fn step(&self, f: &DistributionField, k1: &DistributionField, dt: f64, t: f64) -> Result<DistributionField> {
        let k2 = self.eval(&f.axpy(0.5 * dt, k1)?)?;
        let k3 = self.eval(&f.axpy(0.5 * dt, &k2)?)?;
        let k4 = self.eval(&f.axpy(dt, &k3)?)?;
        let mut next = f.clone();
        for i in 0..next.values.len() {
            next.values[i] += dt / 6.0 * (k1.values[i] + 2.0 * k2.values[i] + 2.0 * k3.values[i] + k4.values[i]);
        }
        if let Some(cap) = self.model.fd_cap() {
            for x in &mut next.values {
                *x = x.min(cap);
            }
        }
        if let Some(i) = next.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t: t + dt, detail: format!("non-finite value at node {i}") });
        }
        Ok(next)
    }
}

/// Classical four-stage Runge–Kutta step; Fermi–Dirac states are capped at
/// `ε⁻³` afterwards.
pub fn rk4_step(f: &DistributionField, dt: f64, model: &Model) -> Result<DistributionField> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let s = Stepper { model, clamp: true, project: false };
    let k1 = s.eval(f)?;
    s.step(f, &k1, dt, 0.0)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub linf: f64,
    pub min_value: f64,
    pub l2l_norm: f64,
    pub rhs_norm: f64,
    /// `‖f⁻‖_{L¹} / ‖f‖_{L¹}`
    pub negative_fraction: f64,
}

fn record(t: f64, f: &DistributionField, k: &DistributionField, norm: NormSpec) -> Result<DiagnosticsRecord> {
    let m = moments(f);
    let neg: f64 = f.values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * f.grid.cell_volume();
    let l1 = f.l1();
    Ok(DiagnosticsRecord {
        t,
        mass: m.mass,
        momentum: m.momentum,
        energy: m.energy,
        linf: f.linf(),
        min_value: f.min(),
        l2l_norm: weighted_norm(f, norm)?,
        rhs_norm: k.linf(),
        negative_fraction: if l1 > 0.0 { neg / l1 } else { 0.0 },
    })
}

pub struct RunResult {
    pub final_state: DistributionField,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// `(step, t, field)` every `snapshot_stride` steps.
    pub snapshots: Vec<(usize, f64, DistributionField)>,
    pub dt: f64,
    pub steps: usize,
}

/// Default step `0.1 ‖f0‖_∞ / ‖r0‖_∞`, shortened so a whole number of steps
/// reaches `t_final`.
pub fn choose_dt(f0: &DistributionField, r0: &DistributionField, econf: &EvolutionConfig) -> (f64, usize) {
    let raw = econf.dt.unwrap_or_else(|| {
        let r = r0.linf();
        if r > 0.0 { (0.1 * f0.linf() / r).min(econf.t_final) } else { econf.t_final }
    });
    let steps = ((econf.t_final / raw) - 1e-9).ceil().max(1.0) as usize;
    (econf.t_final / steps as f64, steps)
}

pub fn run(f0: &DistributionField, model: &Model, econf: &EvolutionConfig, norm: NormSpec, out_dir: Option<&Path>) -> Result<RunResult> {
    run_with_dt(f0, model, econf, norm, out_dir, None)
}

/// [`run`] with an externally fixed step (shared across a parameter sweep).
pub fn run_with_dt(
    f0: &DistributionField,
    model: &Model,
    econf: &EvolutionConfig,
    norm: NormSpec,
    out_dir: Option<&Path>,
    fixed: Option<(f64, usize)>,
) -> Result<RunResult> {
    econf.validate()?;
    if let Some(i) = f0.values.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::Precondition(format!("initial data must be nonnegative; node {i} has {}", f0.values[i])));
    }
    if let Some(cap) = model.fd_cap() {
        if f0.max() > cap {
            return Err(Error::Precondition(format!(
                "Fermi–Dirac initial data must satisfy f0 <= eps^-3 = {cap}, max is {}",
                f0.max()
            )));
        }
    }
    let stepper = Stepper { model, clamp: econf.clamp, project: econf.conservation_projection };
    let mut k = stepper.eval(f0)?;
    let (dt, steps) = fixed.unwrap_or_else(|| choose_dt(f0, &k, econf));
    let writer = out_dir.map(|d| SnapshotWriter::spawn(d.to_path_buf()));
    let mut f = f0.clone();
    let mut diagnostics = vec![record(0.0, &f, &k, norm)?];
    let mut snapshots = Vec::new();
    let stride = econf.snapshot_stride;
    let emit = |step: usize, t: f64, f: &DistributionField, snaps: &mut Vec<_>| {
        if stride > 0 && step.is_multiple_of(stride) {
            snaps.push((step, t, f.clone()));
            if let Some(w) = &writer {
                w.send(step, f.clone());
            }
        }
    };
    emit(0, 0.0, &f, &mut snapshots);
    let start_linf = f0.linf().max(1e-300);
    for step in 1..=steps {
        let t = (step - 1) as f64 * dt;
        f = stepper.step(&f, &k, dt, t)?;
        if f.linf() > 1e12 * start_linf {
            return Err(Error::BlowUp { t: t + dt, detail: format!("sup norm grew to {:.3e}", f.linf()) });
        }
        k = stepper.eval(&f)?;
        diagnostics.push(record(step as f64 * dt, &f, &k, norm)?);
        emit(step, step as f64 * dt, &f, &mut snapshots);
        log::debug!("step {step}/{steps} t={:.4}", step as f64 * dt);
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(RunResult { final_state: f, diagnostics, snapshots, dt, steps })
}

/// Background writer; `finish` joins and surfaces the first IO error.
struct SnapshotWriter {
    tx: mpsc::Sender<(usize, DistributionField)>,
    handle: thread::JoinHandle<Result<()>>,
}

impl SnapshotWriter {
    fn spawn(dir: PathBuf) -> Self {
        let (tx, rx) = mpsc::channel::<(usize, DistributionField)>();
        let handle = thread::spawn(move || {
            std::fs::create_dir_all(&dir)?;
            for (step, f) in rx {
                write_field(&f, &dir.join(format!("snapshot_{step:06}.skf")))?;
            }
            Ok(())
        });
        SnapshotWriter { tx, handle }
    }

    fn send(&self, step: usize, f: DistributionField) {
        // A closed channel means the writer failed; `finish` reports why.
        let _ = self.tx.send((step, f));
    }

    fn finish(self) -> Result<()> {
        drop(self.tx);
        self.handle.join().map_err(|_| Error::Numeric("snapshot writer panicked".into()))?
    }
}

pub fn write_diagnostics(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["t", "mass", "px", "py", "pz", "energy", "linf", "min", "l2l", "rhs_norm"])?;
    for r in records {
        w.write_record(
            [r.t, r.mass, r.momentum[0], r.momentum[1], r.momentum[2], r.energy, r.linf, r.min_value, r.l2l_norm, r.rhs_norm]
                .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}
