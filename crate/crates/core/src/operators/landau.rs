//! Fokker–Planck–Landau operator
//! `Q_L(g, h) = ∇·∫ a(v - v*) (g_* ∇h - (∇g)_* h) dv*` with
//! `a(z) = 2π I₃ |z|⁻¹ (I - ẑẑᵀ)`. Gradients and the outer divergence are
//! spectral; the `v*` integral is a direct grid convolution that drops the
//! singular `z = 0` cell.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{spectral_derivative, DistributionField, VelocityGrid};
use crate::kernel::landau_a;

use super::TestPhi;

/// Upper triangle of `a(d h)` for every integer offset, in
/// `(xx, xy, xz, yy, yz, zz)` order.
struct ATable {
    m: i64,
    side: usize,
    data: Vec<[f64; 6]>,
}

impl ATable {
    fn new(grid: &VelocityGrid, i3: f64) -> Self {
        let m = grid.n as i64 - 1;
        let side = (2 * m + 1) as usize;
        let h = grid.h();
        let mut data = Vec::with_capacity(side * side * side);
        for dz in -m..=m {
            for dy in -m..=m {
                for dx in -m..=m {
                    let a = landau_a(i3, [dx as f64 * h, dy as f64 * h, dz as f64 * h]);
                    data.push([a[0][0], a[0][1], a[0][2], a[1][1], a[1][2], a[2][2]]);
                }
            }
        }
        ATable { m, side, data }
    }

    #[inline]
    fn at(&self, d: [i64; 3]) -> &[f64; 6] {
        let s = self.side as i64;
        &self.data[((d[0] + self.m) + s * ((d[1] + self.m) + s * (d[2] + self.m))) as usize]
    }
}

#[derive(Clone, Debug)]
pub struct LandauOutput {
    pub field: DistributionField,
    /// `‖∇·((a * g) ∇h)‖_∞`, the size of the diffusion part alone.
    pub scale: f64,
}

fn gradient(f: &DistributionField) -> Result<[DistributionField; 3]> {
    Ok([
        spectral_derivative(f, [1, 0, 0])?,
        spectral_derivative(f, [0, 1, 0])?,
        spectral_derivative(f, [0, 0, 1])?,
    ])
}

fn divergence(fx: &DistributionField, fy: &DistributionField, fz: &DistributionField) -> Result<DistributionField> {
    let a = spectral_derivative(fx, [1, 0, 0])?;
    let b = spectral_derivative(fy, [0, 1, 0])?;
    let c = spectral_derivative(fz, [0, 0, 1])?;
    a.axpy(1.0, &b)?.axpy(1.0, &c)
}

pub fn eval_q_l(g: &DistributionField, h: &DistributionField, i3: f64) -> Result<LandauOutput> {
    g.check_same_grid(h)?;
    let grid = g.grid;
    let n = grid.n;
    let table = ATable::new(&grid, i3);
    let dg = gradient(g)?;
    let dh = gradient(h)?;
    let h3 = grid.cell_volume();
    // Per node: (a * g) as 6 entries and (a * ∇g) as 3 entries.
    let conv: Vec<([f64; 6], [f64; 3])> = (0..grid.len())
        .into_par_iter()
        .map(|iv| {
            let [i, j, k] = grid.unflatten(iv);
            let mut ag = [0.0; 6];
            let mut adg = [0.0; 3];
            for ks in 0..n {
                for js in 0..n {
                    for is in 0..n {
                        let d = [i as i64 - is as i64, j as i64 - js as i64, k as i64 - ks as i64];
                        if d == [0, 0, 0] {
                            continue;
                        }
                        let a = table.at(d);
                        let idx = grid.index(is, js, ks);
                        let gs = g.values[idx];
                        let (gx, gy, gz) = (dg[0].values[idx], dg[1].values[idx], dg[2].values[idx]);
                        for c in 0..6 {
                            ag[c] += a[c] * gs;
                        }
                        adg[0] += a[0] * gx + a[1] * gy + a[2] * gz;
                        adg[1] += a[1] * gx + a[3] * gy + a[4] * gz;
                        adg[2] += a[2] * gx + a[4] * gy + a[5] * gz;
                    }
                }
            }
            (ag.map(|x| x * h3), adg.map(|x| x * h3))
        })
        .collect();
    let mut diff = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    let mut flux = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for (iv, (ag, adg)) in conv.iter().enumerate() {
        let gh = [dh[0].values[iv], dh[1].values[iv], dh[2].values[iv]];
        let m = [[ag[0], ag[1], ag[2]], [ag[1], ag[3], ag[4]], [ag[2], ag[4], ag[5]]];
        for r in 0..3 {
            let d = m[r][0] * gh[0] + m[r][1] * gh[1] + m[r][2] * gh[2];
            diff[r][iv] = d;
            flux[r][iv] = d - adg[r] * h.values[iv];
        }
    }
    let to_field = |v: Vec<f64>| DistributionField { grid, values: v, meta: None };
    let [fx, fy, fz] = flux.map(to_field);
    let q = divergence(&fx, &fy, &fz)?;
    let [dx, dy, dz] = diff.map(to_field);
    let scale = divergence(&dx, &dy, &dz)?.linf();
    if let Some(i) = q.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite Landau value at node {i}")));
    }
    Ok(LandauOutput { field: DistributionField { meta: h.meta, ..q }, scale })
}

/// Symmetrized weak form
/// `½ Σ Σ h⁶ f f_* [a:(∇²φ + ∇²φ_*) + 2 b·(∇φ - ∇φ_*)]`, `b = ∇·a = -4π I₃ z/|z|³`,
/// which equals `⟨Q_L(f, f), φ⟩` in the continuum without differentiating `f`.
pub fn landau_weak_form(f: &DistributionField, phi: TestPhi, i3: f64) -> Result<f64> {
    let grid = f.grid;
    let n = grid.len();
    let nodes: Vec<_> = (0..n).map(|i| grid.node(i)).collect();
    let grads: Vec<_> = nodes.iter().map(|&v| phi.gradient(v)).collect();
    let hess: Vec<_> = nodes.iter().map(|&v| phi.hessian(v)).collect();
    let h6 = grid.cell_volume().powi(2);
    let pi4 = 4.0 * std::f64::consts::PI * i3;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|iv| {
            let fv = f.values[iv];
            if fv == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for is in 0..n {
                if is == iv || f.values[is] == 0.0 {
                    continue;
                }
                let z = [nodes[iv][0] - nodes[is][0], nodes[iv][1] - nodes[is][1], nodes[iv][2] - nodes[is][2]];
                let a = landau_a(i3, z);
                let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
                let mut t = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        t += a[p][q] * (hess[iv][p][q] + hess[is][p][q]);
                    }
                    t -= 2.0 * pi4 * z[p] / (r * r * r) * (grads[iv][p] - grads[is][p]);
                }
                acc += f.values[is] * t;
            }
            0.5 * fv * acc
        })
        .collect();
    Ok(h6 * rows.iter().sum::<f64>())
}
