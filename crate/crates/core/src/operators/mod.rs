//! Uehling–Uhlenbeck operator, its gain/loss split and quadratic/cubic
//! decomposition, the symmetrized weak form, and the Landau operator.

pub mod landau;
mod sweep;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{DistributionField, Interpolation, VelocityGrid};
use crate::kernel::{AngularQuadrature, KernelConfig, Statistics, Vec3};
use sweep::{full_grid_triples, sweep, Combo, NodeTable, SweepSpec, Visitor};

pub use landau::{eval_q_l, landau_weak_form, LandauOutput};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VstarMode {
    FullGrid,
    /// Partners with `f(v*) < rel_cut · max f` are skipped.
    Thresholded { rel_cut: f64 },
}

#[derive(Clone, Debug)]
pub struct CollisionQuadrature {
    pub angular: AngularQuadrature,
    pub vstar_mode: VstarMode,
    pub interpolation: Interpolation,
}

impl CollisionQuadrature {
    pub fn new(n_r: usize, n_phi: usize) -> Result<Self> {
        Ok(CollisionQuadrature {
            angular: AngularQuadrature::new(n_r, n_phi)?,
            vstar_mode: VstarMode::FullGrid,
            interpolation: Interpolation::Tricubic,
        })
    }

    pub fn thresholded(mut self, rel_cut: f64) -> Result<Self> {
        if !(0.0..=1e-2).contains(&rel_cut) {
            return domain(format!("rel_cut = {rel_cut} outside [0, 1e-2]"));
        }
        self.vstar_mode = VstarMode::Thresholded { rel_cut };
        Ok(self)
    }

    pub fn with_interpolation(mut self, s: Interpolation) -> Self {
        self.interpolation = s;
        self
    }
}

#[derive(Clone, Debug)]
pub struct OperatorOutput {
    pub field: DistributionField,
    pub wallclock: f64,
    /// Number of `(v, v*, σ)` triples accumulated.
    pub kernel_evals: u64,
}

fn check_finite(f: &DistributionField, what: &str) -> Result<()> {
    if let Some(i) = f.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!("{what}: non-finite input at node {i}")));
    }
    Ok(())
}

/// Fermi–Dirac data must satisfy `0 <= f <= ε⁻³`.
pub fn check_fermi_dirac_bound(f: &DistributionField, cfg: &KernelConfig) -> Result<()> {
    if cfg.statistics != Statistics::FermiDirac {
        return Ok(());
    }
    let cap = cfg.eps.powi(-3);
    if let Some(i) = f.values.iter().position(|&v| !(0.0..=cap).contains(&v)) {
        return Err(Error::Precondition(format!(
            "Fermi–Dirac data must satisfy 0 <= f <= eps^-3 = {cap}; node {i} has {}",
            f.values[i]
        )));
    }
    Ok(())
}

/// Sums `wb · term(self, self', other, other')` into both nodes of each pair,
/// one output array per entry of the term's result.
struct PairSum<'a, T, const K: usize> {
    fields: Vec<&'a [f64]>,
    term: T,
    symmetric: bool,
    len: usize,
}

impl<T, const K: usize> Visitor for PairSum<'_, T, K>
where
    T: Fn(&[f64; 3], &[f64; 3], &[f64; 3], &[f64; 3]) -> [f64; K] + Sync,
{
    type Acc = (Vec<[f64; K]>, u64);

    fn new_acc(&self) -> Self::Acc {
        (vec![[0.0; K]; self.len], 0)
    }

    fn visit(&self, acc: &mut Self::Acc, c: &Combo) {
        let n = c.n;
        let nf = self.fields.len();
        let (out, count) = acc;
        let dims = [c.hi[0] - c.lo[0], c.hi[1] - c.lo[1], c.hi[2] - c.lo[2]];
        let (mut a, mut ap, mut b, mut bp) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3]);
        let mut l = 0;
        for q2 in 0..dims[2] {
            for q1 in 0..dims[1] {
                let row = c.lo[0] + n * ((c.lo[1] + q1) + n * (c.lo[2] + q2));
                for q0 in 0..dims[0] {
                    let iv = row + q0;
                    let is = (iv as isize - c.dflat) as usize;
                    let (to_v, to_s) = match c.keep {
                        Some(k) => (k[is], k[iv]),
                        None => (true, true),
                    };
                    if to_v || to_s {
                        for k in 0..nf {
                            a[k] = self.fields[k][iv];
                            b[k] = self.fields[k][is];
                            ap[k] = c.at_vp[k][l];
                            bp[k] = c.at_vsp[k][l];
                        }
                        let tv = (self.term)(&a, &ap, &b, &bp);
                        let ts = if self.symmetric { tv } else { (self.term)(&b, &bp, &a, &ap) };
                        if to_v {
                            for (o, t) in out[iv].iter_mut().zip(tv) {
                                *o += c.wb * t;
                            }
                            *count += 1;
                        }
                        if to_s {
                            for (o, t) in out[is].iter_mut().zip(ts) {
                                *o += c.wb * t;
                            }
                            *count += 1;
                        }
                    }
                    l += 1;
                }
            }
        }
    }

    fn merge(&self, into: &mut Self::Acc, from: Self::Acc) {
        for (x, y) in into.0.iter_mut().zip(from.0) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += q;
            }
        }
        into.1 += from.1;
    }
}

fn partner_mask(f: &DistributionField, mode: VstarMode) -> Option<Vec<bool>> {
    match mode {
        VstarMode::FullGrid => None,
        VstarMode::Thresholded { rel_cut } => {
            let cut = rel_cut * f.max();
            Some(f.values.iter().map(|&v| v >= cut).collect())
        }
    }
}

fn run_pair_sum<T, const K: usize>(
    fields: &[&DistributionField],
    comps: &[usize],
    cfg: &KernelConfig,
    quad: &CollisionQuadrature,
    term: T,
    symmetric: bool,
) -> Result<[OperatorOutput; K]>
where
    T: Fn(&[f64; 3], &[f64; 3], &[f64; 3], &[f64; 3]) -> [f64; K] + Sync,
{
    let start = Instant::now();
    let grid = fields[0].grid;
    for f in &fields[1..] {
        fields[0].check_same_grid(f)?;
    }
    for f in fields {
        check_finite(f, "collision operator")?;
    }
    let table = NodeTable::new(cfg, &quad.angular, comps, &grid);
    let spec = SweepSpec {
        grid,
        fields: fields.iter().map(|f| f.values.as_slice()).collect(),
        scheme: quad.interpolation,
        keep: partner_mask(fields[0], quad.vstar_mode),
    };
    let visitor = PairSum { fields: spec.fields.clone(), term, symmetric, len: grid.len() };
    let (out, count) = sweep(&spec, &table, &visitor);
    let h3 = grid.cell_volume();
    if let Some(i) = out.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric(format!("non-finite collision sum at node {i}")));
    }
    let wallclock = start.elapsed().as_secs_f64();
    Ok(std::array::from_fn(|k| OperatorOutput {
        field: DistributionField { grid, values: out.iter().map(|v| v[k] * h3).collect(), meta: fields[0].meta },
        wallclock,
        kernel_evals: count,
    }))
}

fn single([out]: [OperatorOutput; 1]) -> OperatorOutput {
    out
}

/// Count of `(v, v*, σ)` triples a full-grid evaluation with the given
/// components visits, computed from the node table alone.
pub fn full_grid_kernel_evals(cfg: &KernelConfig, quad: &CollisionQuadrature, comps: &[usize], grid: &VelocityGrid) -> u64 {
    full_grid_triples(&NodeTable::new(cfg, &quad.angular, comps, grid), grid.n)
}

fn quantum(cfg: &KernelConfig) -> f64 {
    cfg.sign() * cfg.eps.powi(3)
}

pub fn eval_q_uu(f: &DistributionField, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<OperatorOutput> {
    check_fermi_dirac_bound(f, cfg)?;
    let s = quantum(cfg);
    let term = move |a: &[f64; 3], ap: &[f64; 3], b: &[f64; 3], bp: &[f64; 3]| {
        let (f, fs, fp, fsp) = (a[0], b[0], ap[0], bp[0]);
        [fp * fsp * (1.0 + s * f) * (1.0 + s * fs) - f * fs * (1.0 + s * fp) * (1.0 + s * fsp)]
    };
    run_pair_sum(&[f], &[1, 2, 3], cfg, quad, term, true).map(single)
}

/// `Q_UU` together with its loss part, from a single sweep.
pub fn eval_q_uu_with_loss(f: &DistributionField, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<(OperatorOutput, OperatorOutput)> {
    check_fermi_dirac_bound(f, cfg)?;
    let s = quantum(cfg);
    let term = move |a: &[f64; 3], ap: &[f64; 3], b: &[f64; 3], bp: &[f64; 3]| {
        let (f, fs, fp, fsp) = (a[0], b[0], ap[0], bp[0]);
        let loss = f * fs * (1.0 + s * fp) * (1.0 + s * fsp);
        [fp * fsp * (1.0 + s * f) * (1.0 + s * fs) - loss, loss]
    };
    let [q, loss] = run_pair_sum(&[f], &[1, 2, 3], cfg, quad, term, true)?;
    Ok((q, loss))
}

/// Gain and loss parts of the Fermi–Dirac operator.
pub fn eval_gain_loss(f: &DistributionField, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<(OperatorOutput, OperatorOutput)> {
    if cfg.statistics != Statistics::FermiDirac {
        return domain("gain/loss split is defined for Fermi–Dirac statistics");
    }
    check_fermi_dirac_bound(f, cfg)?;
    let s = quantum(cfg);
    let term = move |a: &[f64; 3], ap: &[f64; 3], b: &[f64; 3], bp: &[f64; 3]| {
        [ap[0] * bp[0] * (1.0 + s * a[0]) * (1.0 + s * b[0]), a[0] * b[0] * (1.0 + s * ap[0]) * (1.0 + s * bp[0])]
    };
    let [gain, loss] = run_pair_sum(&[f], &[1, 2, 3], cfg, quad, term, true)?;
    Ok((gain, loss))
}

/// `Q_i(g, h) = ∫ B_i (g'_* h' - g_* h) dσ dv*`.
pub fn eval_q_bilinear(g: &DistributionField, h: &DistributionField, i: usize, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<OperatorOutput> {
    if !(1..=3).contains(&i) {
        return domain(format!("kernel component {i} not in 1..=3"));
    }
    let term = |a: &[f64; 3], ap: &[f64; 3], b: &[f64; 3], bp: &[f64; 3]| [bp[0] * ap[1] - b[0] * a[1]];
    run_pair_sum(&[g, h], &[i], cfg, quad, term, false).map(single)
}

/// `R(g, h, ρ) = ±ε³ ∫ B (g'_* h' (ρ + ρ_*) - g_* h (ρ' + ρ'_*)) dσ dv*`.
pub fn eval_r(g: &DistributionField, h: &DistributionField, rho: &DistributionField, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<OperatorOutput> {
    eval_r_prefactor(g, h, rho, cfg, quad, cfg.eps)
}

/// [`eval_r`] with the explicit `ε³` prefactor taken from `prefactor_eps`
/// while the kernel keeps `cfg.eps`.
pub fn eval_r_prefactor(
    g: &DistributionField,
    h: &DistributionField,
    rho: &DistributionField,
    cfg: &KernelConfig,
    quad: &CollisionQuadrature,
    prefactor_eps: f64,
) -> Result<OperatorOutput> {
    let s = cfg.sign() * prefactor_eps.powi(3);
    let term = move |a: &[f64; 3], ap: &[f64; 3], b: &[f64; 3], bp: &[f64; 3]| {
        [s * (bp[0] * ap[1] * (a[2] + b[2]) - b[0] * a[1] * (ap[2] + bp[2]))]
    };
    run_pair_sum(&[g, h, rho], &[1, 2, 3], cfg, quad, term, false).map(single)
}

/// Test functions with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestPhi {
    One,
    Coord(usize),
    Energy,
    /// `exp(-α|v|²)`
    Gaussian { alpha: f64 },
}

impl TestPhi {
    pub fn value(&self, v: Vec3) -> f64 {
        match *self {
            TestPhi::One => 1.0,
            TestPhi::Coord(k) => v[k],
            TestPhi::Energy => v[0] * v[0] + v[1] * v[1] + v[2] * v[2],
            TestPhi::Gaussian { alpha } => (-alpha * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp(),
        }
    }

    pub fn gradient(&self, v: Vec3) -> Vec3 {
        match *self {
            TestPhi::One => [0.0; 3],
            TestPhi::Coord(k) => {
                let mut g = [0.0; 3];
                g[k] = 1.0;
                g
            }
            TestPhi::Energy => [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]],
            TestPhi::Gaussian { alpha } => {
                let e = self.value(v);
                [-2.0 * alpha * v[0] * e, -2.0 * alpha * v[1] * e, -2.0 * alpha * v[2] * e]
            }
        }
    }

    pub fn hessian(&self, v: Vec3) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        match *self {
            TestPhi::One | TestPhi::Coord(_) => {}
            TestPhi::Energy => {
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = 2.0;
                }
            }
            TestPhi::Gaussian { alpha } => {
                let e = self.value(v);
                for i in 0..3 {
                    for j in 0..3 {
                        let d = if i == j { 1.0 } else { 0.0 };
                        m[i][j] = (4.0 * alpha * alpha * v[i] * v[j] - 2.0 * alpha * d) * e;
                    }
                }
            }
        }
        m
    }
}

/// A weak-form value with the magnitude of its largest contributions.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeakValue {
    pub value: f64,
    /// Sum of `|B f f_* (1±ε³f')(1±ε³f'_*)| (|φ'|+|φ'_*|+|φ|+|φ_*|)/2`.
    pub scale: f64,
}

struct WeakSum<'a> {
    f: &'a [f64],
    phis: &'a [TestPhi],
    s: f64,
    grid: VelocityGrid,
}

impl Visitor for WeakSum<'_> {
    type Acc = Vec<(f64, f64)>;

    fn new_acc(&self) -> Self::Acc {
        vec![(0.0, 0.0); self.phis.len()]
    }

    fn visit(&self, acc: &mut Self::Acc, c: &Combo) {
        let n = c.n;
        let g = &self.grid;
        let h = g.h();
        let dh = [c.d[0] as f64 * h, c.d[1] as f64 * h, c.d[2] as f64 * h];
        let delta = [c.delta[0] * h, c.delta[1] * h, c.delta[2] * h];
        let dims = [c.hi[0] - c.lo[0], c.hi[1] - c.lo[1], c.hi[2] - c.lo[2]];
        let mut part = vec![(0.0, 0.0); self.phis.len()];
        let mut l = 0;
        for q2 in 0..dims[2] {
            for q1 in 0..dims[1] {
                let row = c.lo[0] + n * ((c.lo[1] + q1) + n * (c.lo[2] + q2));
                for q0 in 0..dims[0] {
                    let iv = row + q0;
                    let is = (iv as isize - c.dflat) as usize;
                    let mult = match c.keep {
                        Some(k) => k[is] as u8 + k[iv] as u8,
                        None => 2,
                    };
                    if mult > 0 {
                        let (f, fs) = (self.f[iv], self.f[is]);
                        let (fp, fsp) = (c.at_vp[0][l], c.at_vsp[0][l]);
                        let w = f * fs * (1.0 + self.s * fp) * (1.0 + self.s * fsp);
                        if w != 0.0 {
                            let v = g.node(iv);
                            let vs = [v[0] - dh[0], v[1] - dh[1], v[2] - dh[2]];
                            let vp = [v[0] + delta[0], v[1] + delta[1], v[2] + delta[2]];
                            let vsp = [vs[0] - delta[0], vs[1] - delta[1], vs[2] - delta[2]];
                            // Both orderings of the pair carry the same integrand.
                            let m = 0.5 * mult as f64 * c.wb * w;
                            for (phi, (val, scale)) in self.phis.iter().zip(part.iter_mut()) {
                                let (p, ps, pp, psp) = (phi.value(v), phi.value(vs), phi.value(vp), phi.value(vsp));
                                *val += m * ((pp + psp) - (p + ps));
                                *scale += m.abs() * (pp.abs() + psp.abs() + p.abs() + ps.abs());
                            }
                        }
                    }
                    l += 1;
                }
            }
        }
        for (a, p) in acc.iter_mut().zip(part) {
            a.0 += p.0;
            a.1 += p.1;
        }
    }

    fn merge(&self, into: &mut Self::Acc, from: Self::Acc) {
        for (a, b) in into.iter_mut().zip(from) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }
}

/// `½ ∫ B f f_* (1±ε³f')(1±ε³f'_*) (φ' + φ'_* - φ - φ_*) dσ dv dv*` with `φ`
/// evaluated exactly at the post-collision points.
pub fn weak_form(f: &DistributionField, phi: TestPhi, cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<WeakValue> {
    Ok(weak_forms(f, &[phi], cfg, quad)?[0])
}

/// [`weak_form`] for several test functions sharing one sweep.
pub fn weak_forms(f: &DistributionField, phis: &[TestPhi], cfg: &KernelConfig, quad: &CollisionQuadrature) -> Result<Vec<WeakValue>> {
    check_finite(f, "weak form")?;
    check_fermi_dirac_bound(f, cfg)?;
    let grid = f.grid;
    let table = NodeTable::new(cfg, &quad.angular, &[1, 2, 3], &grid);
    let spec = SweepSpec { grid, fields: vec![f.values.as_slice()], scheme: quad.interpolation, keep: partner_mask(f, quad.vstar_mode) };
    let visitor = WeakSum { f: &f.values, phis, s: quantum(cfg), grid };
    let sums = sweep(&spec, &table, &visitor);
    let h6 = grid.cell_volume().powi(2);
    sums.into_iter()
        .map(|(v, s)| {
            if !v.is_finite() {
                return Err(Error::Numeric("non-finite weak-form sum".into()));
            }
            Ok(WeakValue { value: h6 * v, scale: h6 * s })
        })
        .collect()
}

/// Least-squares correction `q - w Σ λ_k ψ_k`, `ψ ∈ {1, v, |v|²}`, that
/// removes the discrete mass, momentum and energy of `q`.
pub fn project_conservation(q: &DistributionField, weight: &DistributionField) -> Result<DistributionField> {
    q.check_same_grid(weight)?;
    let g = q.grid;
    let psi = |v: Vec3| [1.0, v[0], v[1], v[2], v[0] * v[0] + v[1] * v[1] + v[2] * v[2]];
    let mut gram = nalgebra::SMatrix::<f64, 5, 5>::zeros();
    let mut rhs = nalgebra::SVector::<f64, 5>::zeros();
    for idx in 0..g.len() {
        let p = psi(g.node(idx));
        let w = weight.values[idx].abs();
        for a in 0..5 {
            rhs[a] += q.values[idx] * p[a];
            for b in 0..5 {
                gram[(a, b)] += w * p[a] * p[b];
            }
        }
    }
    let lambda = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("conservation projection: singular moment matrix".into()))?;
    let values = (0..g.len())
        .map(|idx| {
            let p = psi(g.node(idx));
            let corr: f64 = (0..5).map(|a| lambda[a] * p[a]).sum();
            q.values[idx] - weight.values[idx].abs() * corr
        })
        .collect();
    Ok(DistributionField { grid: g, values, meta: q.meta })
}
