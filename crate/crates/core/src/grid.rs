//! Uniform cubic velocity grids, fields on them, interpolation, spectral
//! derivatives, weighted norms, moments and field files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernel::{Statistics, Vec3};

/// Nodes `v_j = -L + j h`, `h = 2L/n`, on the half-open cube `[-L, L)³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

impl VelocityGrid {
    /// `n` must be even and at least 8.
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return domain(format!("grid size n must be even and >= 8, got {n}"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return domain(format!("grid half-width L must be positive, got {l}"));
        }
        Ok(VelocityGrid { n, l })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.h()
    }

    /// Flat index with the first coordinate fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, idx / (n * n)]
    }

    pub fn node(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.unflatten(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }
}

/// Optional `(ε, statistics)` stamp carried by a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub eps: f64,
    pub statistics: Statistics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionField {
    pub grid: VelocityGrid,
    pub values: Vec<f64>,
    pub meta: Option<FieldMeta>,
}

impl DistributionField {
    pub fn zeros(grid: VelocityGrid) -> Self {
        DistributionField { grid, values: vec![0.0; grid.len()], meta: None }
    }

    pub fn from_values(grid: VelocityGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at node {i}")));
        }
        Ok(DistributionField { grid, values, meta: None })
    }

    pub fn with_meta(mut self, meta: Option<FieldMeta>) -> Self {
        self.meta = meta;
        self
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DistributionField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), meta: self.meta }
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &DistributionField) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(DistributionField { grid: self.grid, values, meta: self.meta })
    }

    pub fn sub(&self, other: &DistributionField) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn check_same_grid(&self, other: &DistributionField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "grid (n={}, L={}) vs (n={}, L={})",
                self.grid.n, self.grid.l, other.grid.n, other.grid.l
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{what}: non-finite value at node {i}")));
        }
        Ok(())
    }
}

pub fn sample(f: impl Fn(Vec3) -> f64, grid: VelocityGrid) -> Result<DistributionField> {
    let mut values = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let v = f(grid.node(idx));
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite sample {v} at node {idx} ({:?})", grid.unflatten(idx))));
        }
        values.push(v);
    }
    Ok(DistributionField { grid, values, meta: None })
}

/// `ρ (2πT)^{-3/2} exp(-|v-u|²/2T)`
pub fn maxwellian(rho: f64, u: Vec3, temp: f64) -> impl Fn(Vec3) -> f64 {
    let c = rho * (2.0 * std::f64::consts::PI * temp).powf(-1.5);
    move |v| {
        let d2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2) + (v[2] - u[2]).powi(2);
        c * (-d2 / (2.0 * temp)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Trilinear,
    #[default]
    Tricubic,
}

impl Interpolation {
    /// Stencil weights at offsets `start..start + taps` for fractional part `t`.
    #[inline]
    pub(crate) fn weights(self, t: f64) -> ([f64; 4], usize, isize) {
        match self {
            Interpolation::Trilinear => ([1.0 - t, t, 0.0, 0.0], 2, 0),
            Interpolation::Tricubic => {
                let t2 = t * t;
                let t3 = t2 * t;
                (
                    [
                        0.5 * (-t3 + 2.0 * t2 - t),
                        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
                        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
                        0.5 * (t3 - t2),
                    ],
                    4,
                    -1,
                )
            }
        }
    }
}

/// Interpolated value at an arbitrary point; nodes outside the grid count as
/// zero and the result is zero outside `[-L, L)³`.
pub fn interpolate(field: &DistributionField, p: Vec3, scheme: Interpolation) -> f64 {
    let g = &field.grid;
    let h = g.h();
    let n = g.n as isize;
    let mut base = [0isize; 3];
    let mut w = [[0.0; 4]; 3];
    let mut taps = 0;
    let mut off = 0;
    for d in 0..3 {
        if !(p[d] >= -g.l && p[d] < g.l) {
            return 0.0;
        }
        let x = (p[d] + g.l) / h;
        let fl = x.floor();
        base[d] = fl as isize;
        let (wd, t, o) = scheme.weights(x - fl);
        w[d] = wd;
        taps = t;
        off = o;
    }
    let mut acc = 0.0;
    for c in 0..taps {
        let k = base[2] + off + c as isize;
        if k < 0 || k >= n || w[2][c] == 0.0 {
            continue;
        }
        for b in 0..taps {
            let j = base[1] + off + b as isize;
            if j < 0 || j >= n || w[1][b] == 0.0 {
                continue;
            }
            for a in 0..taps {
                let i = base[0] + off + a as isize;
                if i < 0 || i >= n || w[0][a] == 0.0 {
                    continue;
                }
                acc += w[0][a] * w[1][b] * w[2][c] * field.get(i as usize, j as usize, k as usize);
            }
        }
    }
    acc
}

/// Angular wavenumbers of the periodic grid in FFT order.
fn wavenumbers(g: &VelocityGrid) -> Vec<f64> {
    let n = g.n as isize;
    let dk = std::f64::consts::PI / g.l;
    (0..n).map(|m| if m < n / 2 { m as f64 * dk } else { (m - n) as f64 * dk }).collect()
}

/// Applies a 3-D FFT along every axis in place.
fn fft3(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..3 {
        let stride = n.pow(axis as u32);
        for outer in 0..n * n {
            // Base index of the line: spread `outer` over the two other axes.
            let (a, b) = (outer % n, outer / n);
            let base = match axis {
                0 => n * (a + n * b),
                1 => a + n * n * b,
                _ => a + n * b,
            };
            for (m, x) in line.iter_mut().enumerate() {
                *x = data[base + m * stride];
            }
            fft.process(&mut line);
            for (m, x) in line.iter().enumerate() {
                data[base + m * stride] = *x;
            }
        }
    }
}

/// `∂^α f` by Fourier multipliers on the periodized field; odd orders zero
/// the Nyquist mode along their axis.
pub fn spectral_derivative(field: &DistributionField, alpha: [u32; 3]) -> Result<DistributionField> {
    let order: u32 = alpha.iter().sum();
    if order > 3 {
        return domain(format!("derivative order {order} exceeds 3"));
    }
    if order == 0 {
        return Ok(field.clone());
    }
    check_boundary_decay(field);
    let g = field.grid;
    let n = g.n;
    let mut data: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(&mut data, n, false);
    let k = wavenumbers(&g);
    let factor = |axis: usize, m: usize| -> Complex64 {
        let a = alpha[axis];
        if a == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if a % 2 == 1 && m == n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, k[m]).powu(a)
    };
    for kk in 0..n {
        let fz = factor(2, kk);
        for jj in 0..n {
            let fy = factor(1, jj) * fz;
            for ii in 0..n {
                data[g.index(ii, jj, kk)] *= factor(0, ii) * fy;
            }
        }
    }
    fft3(&mut data, n, true);
    let scale = 1.0 / g.len() as f64;
    Ok(DistributionField { grid: g, values: data.iter().map(|c| c.re * scale).collect(), meta: field.meta })
}

/// Warns when the field is not negligible within two cells of the boundary.
fn check_boundary_decay(field: &DistributionField) -> bool {
    let g = field.grid;
    let n = g.n;
    let tol = 1e-10 * field.linf();
    let near = |i: usize| i < 2 || i >= n - 2;
    let mut worst = 0.0f64;
    for idx in 0..g.len() {
        let [i, j, k] = g.unflatten(idx);
        if near(i) || near(j) || near(k) {
            worst = worst.max(field.values[idx].abs());
        }
    }
    if worst > tol {
        log::warn!("field does not decay near the grid boundary ({worst:.3e} > {tol:.3e}); spectral derivatives see the periodic images");
        return false;
    }
    true
}

/// Derivative order `N`, weight order `l` and Lebesgue exponent `p` of the
/// norm `Σ_{|α|≤N} ‖(1+|v|²)^{l/2} ∂^α f‖_{L^p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    #[serde(rename = "N")]
    pub n: u32,
    pub l: f64,
    pub p: NormP,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormP {
    One,
    Two,
    Inf,
}

impl Serialize for NormP {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormP::One => s.serialize_f64(1.0),
            NormP::Two => s.serialize_f64(2.0),
            NormP::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormP {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(x) if x.as_f64() == Some(1.0) => Ok(NormP::One),
            serde_json::Value::Number(x) if x.as_f64() == Some(2.0) => Ok(NormP::Two),
            serde_json::Value::String(s) if s == "inf" => Ok(NormP::Inf),
            _ => Err(serde::de::Error::custom(format!("p must be 1, 2 or \"inf\", got {v}"))),
        }
    }
}

impl NormSpec {
    pub fn l2(l: f64) -> Self {
        NormSpec { n: 0, l, p: NormP::Two }
    }
}

fn multi_indices(order: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=order {
        for b in 0..=order - a {
            out.push([a, b, order - a - b]);
        }
    }
    out
}

pub fn weighted_norm(field: &DistributionField, spec: NormSpec) -> Result<f64> {
    if spec.n > 3 {
        return domain(format!("norm derivative order {} exceeds 3", spec.n));
    }
    if !(spec.l >= 0.0) {
        return domain(format!("norm weight order {} must be >= 0", spec.l));
    }
    let g = field.grid;
    let weights: Vec<f64> = (0..g.len())
        .map(|idx| {
            let v = g.node(idx);
            (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).powf(0.5 * spec.l)
        })
        .collect();
    let h3 = g.cell_volume();
    let mut total = 0.0;
    for order in 0..=spec.n {
        for alpha in multi_indices(order) {
            let d = spectral_derivative(field, alpha)?;
            let it = d.values.iter().zip(&weights).map(|(x, w)| (x * w).abs());
            total += match spec.p {
                NormP::One => h3 * it.sum::<f64>(),
                NormP::Two => (h3 * it.map(|x| x * x).sum::<f64>()).sqrt(),
                NormP::Inf => it.fold(0.0, f64::max),
            };
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec3,
    pub energy: f64,
}

pub fn moments(field: &DistributionField) -> Moments {
    let g = field.grid;
    let (mut m, mut p, mut e) = (0.0, [0.0; 3], 0.0);
    for (idx, &f) in field.values.iter().enumerate() {
        let v = g.node(idx);
        m += f;
        for d in 0..3 {
            p[d] += f * v[d];
        }
        e += f * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    let h3 = g.cell_volume();
    Moments { mass: h3 * m, momentum: [h3 * p[0], h3 * p[1], h3 * p[2]], energy: h3 * e }
}

const MAGIC: &[u8; 4] = b"SKF1";

pub fn write_field(field: &DistributionField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(field.grid.n as u64).to_le_bytes())?;
    w.write_all(&field.grid.l.to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<DistributionField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!("{}: bad magic {:?}", path.display(), magic)));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let l = f64::from_le_bytes(b);
    let grid = VelocityGrid::new(n, l)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    DistributionField::from_values(grid, values)
}

/// Writes `v1,v2,v3,f` rows.
pub fn write_field_csv(field: &DistributionField, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["v1", "v2", "v3", "f"])?;
    for (idx, f) in field.values.iter().enumerate() {
        let v = field.grid.node(idx);
        w.write_record([v[0].to_string(), v[1].to_string(), v[2].to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gauss_field(n: usize, l: f64) -> DistributionField {
        sample(|v| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp(), VelocityGrid::new(n, l).unwrap()).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(VelocityGrid::new(6, 1.0).is_err());
        assert!(VelocityGrid::new(9, 1.0).is_err());
        assert!(VelocityGrid::new(12, 1.0).is_ok());
        assert!(VelocityGrid::new(8, 0.0).is_err());
    }

    #[test]
    fn maxwellian_mass_and_moments() {
        let g = VelocityGrid::new(16, 6.0).unwrap();
        let m = moments(&sample(maxwellian(1.0, [0.0; 3], 1.0), g).unwrap());
        assert!((m.mass - 1.0).abs() <= 1e-3);
        assert!((m.energy - 3.0).abs() <= 1e-2);
        let u = [0.5, -0.25, 0.0];
        let m = moments(&sample(maxwellian(1.0, u, 1.0), g).unwrap());
        for d in 0..3 {
            assert!((m.momentum[d] - m.mass * u[d]).abs() <= 1e-6);
        }
    }

    #[test]
    fn sample_rejects_nan() {
        let g = VelocityGrid::new(8, 1.0).unwrap();
        assert!(matches!(sample(|v| if v[0] > 0.5 { f64::NAN } else { 0.0 }, g), Err(Error::Data(_))));
    }

    #[test]
    fn interpolation_at_nodes_and_outside() {
        let f = gauss_field(8, 3.0);
        for idx in [0, 17, 200, 511] {
            let p = f.grid.node(idx);
            assert_eq!(interpolate(&f, p, Interpolation::Tricubic), f.values[idx]);
            assert_eq!(interpolate(&f, p, Interpolation::Trilinear), f.values[idx]);
        }
        assert_eq!(interpolate(&f, [3.0, 0.0, 0.0], Interpolation::Tricubic), 0.0);
        assert_eq!(interpolate(&f, [0.0, -3.5, 0.0], Interpolation::Trilinear), 0.0);
    }

    #[test]
    fn interpolation_orders() {
        // Max error over a scattered point cloud, halving h twice.
        let pts: Vec<Vec3> = (0..400)
            .map(|k| {
                let k = k as f64;
                [(k * 0.618_034).fract() * 3.0 - 1.5, (k * 0.414_214).fract() * 3.0 - 1.5, (k * 0.732_051).fract() * 3.0 - 1.5]
            })
            .collect();
        let exact = |p: Vec3| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp();
        let err = |n: usize, s| {
            let f = gauss_field(n, 4.0);
            pts.iter().map(|&p| (interpolate(&f, p, s) - exact(p)).abs()).fold(0.0, f64::max)
        };
        let order = |s| (err(32, s) / err(128, s)).log2() / 2.0;
        let lin = order(Interpolation::Trilinear);
        let cub = order(Interpolation::Tricubic);
        assert!((1.8..2.3).contains(&lin), "trilinear order {lin}");
        assert!((2.7..3.5).contains(&cub), "tricubic order {cub}");
    }

    #[test]
    fn spectral_first_derivative() {
        let err = |n: usize| {
            let f = gauss_field(n, 8.0);
            let d = spectral_derivative(&f, [1, 0, 0]).unwrap();
            let g = f.grid;
            (0..g.len())
                .map(|i| {
                    let v = g.node(i);
                    (d.values[i] + 2.0 * v[0] * f.values[i]).abs()
                })
                .fold(0.0, f64::max)
        };
        // At h = 1/2 the Gaussian spectrum at the Nyquist wavenumber is e^{-π²} ≈ 5e-5.
        let nyquist_tail = (-PI * PI).exp();
        assert!(err(32) <= nyquist_tail, "{}", err(32));
        assert!(err(64) <= 1e-8, "{}", err(64));
    }

    #[test]
    fn spectral_mixed_and_constant() {
        let f = gauss_field(16, 6.0);
        let a = spectral_derivative(&f, [1, 1, 0]).unwrap();
        let b = spectral_derivative(&spectral_derivative(&f, [1, 0, 0]).unwrap(), [0, 1, 0]).unwrap();
        let s = a.linf();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() <= 1e-12 * s));
        let c = sample(|_| 2.5, f.grid).unwrap();
        assert!(spectral_derivative(&c, [1, 0, 0]).unwrap().linf() < 1e-13);
    }

    #[test]
    fn gaussian_l2_norm() {
        let f = gauss_field(32, 8.0);
        let n = weighted_norm(&f, NormSpec::l2(0.0)).unwrap();
        let want = (PI / 2.0).powf(0.75);
        assert!((n - want).abs() <= 1e-6 * want);
        let direct = (f.grid.cell_volume() * f.values.iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert_eq!(n, direct);
        assert!(weighted_norm(&f, NormSpec::l2(2.0)).unwrap() >= n);
        assert!(weighted_norm(&f, NormSpec { n: 1, l: 0.0, p: NormP::Two }).unwrap() >= n);
    }

    #[test]
    fn file_round_trip() {
        let f = gauss_field(8, 3.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.skf");
        write_field(&f, &p).unwrap();
        assert_eq!(read_field(&p).unwrap().values, f.values);
        let c = dir.path().join("f.csv");
        write_field_csv(&f, &c).unwrap();
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("v1,v2,v3,f\n"));
        assert_eq!(text.lines().count(), 513);
    }
}
