//! The collision kernel `B^ε(z, θ) = ε⁻⁴ z (φ̂(z sin(θ/2)/ε) ± φ̂(z cos(θ/2)/ε))²`,
//! its three components, angular integrals, the cancellation kernels and the
//! Landau-coefficient extraction.
//!
//! Angular integrals over the hemisphere `θ ∈ [0, π/2]` use the substitution
//! `r = z sin(θ/2)/ε` (components 1 and 2) or `r = z cos(θ/2)/ε` (component 3).
//! In both cases `sin θ dθ = 4ε² r dr / z²`, so the node count does not depend
//! on `ε`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::potential::Potential;
use crate::quad::{integrate_adaptive, GaussRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    BoseEinstein,
    FermiDirac,
}

impl Statistics {
    /// `+1` for Bose–Einstein, `-1` for Fermi–Dirac.
    pub fn sign(self) -> f64 {
        match self {
            Statistics::BoseEinstein => 1.0,
            Statistics::FermiDirac => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelConfig {
    pub eps: f64,
    pub statistics: Statistics,
    pub potential: Arc<Potential>,
}

impl KernelConfig {
    /// `eps` must lie in `(0, 1]`.
    pub fn new(eps: f64, statistics: Statistics, potential: Arc<Potential>) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return domain(format!("eps must lie in (0, 1], got {eps}"));
        }
        Ok(KernelConfig { eps, statistics, potential })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(eps, self.statistics, self.potential.clone())
    }

    pub fn sign(&self) -> f64 {
        self.statistics.sign()
    }
}

/// Hemisphere discretization: `n_r` Gauss–Legendre nodes per component in the
/// substituted radial variable and `n_phi` equispaced azimuth nodes.
#[derive(Clone, Debug)]
pub struct AngularQuadrature {
    pub n_r: usize,
    pub n_phi: usize,
    rule: GaussRule,
}

impl AngularQuadrature {
    pub fn new(n_r: usize, n_phi: usize) -> Result<Self> {
        if n_r < 4 || n_phi < 4 {
            return domain(format!("angular quadrature needs n_r >= 4 and n_phi >= 4, got ({n_r}, {n_phi})"));
        }
        Ok(AngularQuadrature { n_r, n_phi, rule: GaussRule::new(n_r) })
    }

    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=PI / 2.0 + 1e-15).contains(&theta) {
        return domain(format!("theta = {theta} outside [0, pi/2]"));
    }
    Ok(())
}

/// Component `i ∈ {1, 2, 3}` of the kernel.
pub fn eval_b_component(cfg: &KernelConfig, i: usize, z: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(z >= 0.0) {
        return domain(format!("z = {z} must be >= 0"));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let p = &cfg.potential;
    let e = cfg.eps;
    let pre = z / (e * e * e * e);
    let ps = p.phi(z * (0.5 * theta).sin() / e);
    let pc = p.phi(z * (0.5 * theta).cos() / e);
    match i {
        1 => Ok(pre * ps * ps),
        2 => Ok(cfg.sign() * 2.0 * pre * ps * pc),
        3 => Ok(pre * pc * pc),
        _ => domain(format!("kernel component {i} not in 1..=3")),
    }
}

/// The full kernel in squared-sum form.
pub fn eval_b(cfg: &KernelConfig, z: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(z >= 0.0) {
        return domain(format!("z = {z} must be >= 0"));
    }
    Ok(b_unchecked(cfg, z, theta))
}

#[inline]
pub(crate) fn b_unchecked(cfg: &KernelConfig, z: f64, theta: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let e = cfg.eps;
    let p = &cfg.potential;
    let s = p.phi(z * (0.5 * theta).sin() / e) + cfg.sign() * p.phi(z * (0.5 * theta).cos() / e);
    z / (e * e * e * e) * s * s
}

/// One node of a component's hemisphere rule. `weight` already contains the
/// `sin θ dθ` Jacobian but not the azimuth factor.
#[derive(Clone, Copy, Debug)]
pub struct ThetaNode {
    /// `sin(θ/2)`
    pub s: f64,
    /// `cos(θ/2)`
    pub c: f64,
    pub weight: f64,
    /// Kernel component value at this node.
    pub b: f64,
}

impl ThetaNode {
    pub fn theta(&self) -> f64 {
        2.0 * self.s.atan2(self.c)
    }
    pub fn cos_theta(&self) -> f64 {
        (self.c - self.s) * (self.c + self.s)
    }
    pub fn sin_theta(&self) -> f64 {
        2.0 * self.s * self.c
    }
}

/// Substituted radial window of component `i` at separation `z`, or `None`
/// when the kernel component vanishes identically there.
pub fn component_window(cfg: &KernelConfig, i: usize, z: f64) -> Option<(f64, f64)> {
    let rc = cfg.potential.kernel_radius();
    if z <= 0.0 || rc <= 0.0 {
        return None;
    }
    let x = z / cfg.eps;
    let half = x * FRAC_1_SQRT_2;
    let (lo, hi) = match i {
        1 => (0.0, half.min(rc)),
        // The cos factor vanishes unless r ≥ sqrt(x² - rc²).
        2 => (((x * x - rc * rc).max(0.0)).sqrt(), half.min(rc)),
        3 => (half, x.min(rc)),
        _ => return None,
    };
    (hi > lo).then_some((lo, hi))
}

/// Fills `out` with the hemisphere nodes of component `i` at separation `z`.
pub fn component_nodes(cfg: &KernelConfig, i: usize, z: f64, quad: &AngularQuadrature, out: &mut Vec<ThetaNode>) {
    out.clear();
    let Some((lo, hi)) = component_window(cfg, i, z) else { return };
    let e = cfg.eps;
    let p = &cfg.potential;
    let sign = cfg.sign();
    for (r, w) in quad.rule().mapped(lo, hi) {
        let phr = p.phi(r);
        let q = e * r / z;
        let (s, c, b) = match i {
            1 => {
                let c = (1.0 - q * q).max(0.0).sqrt();
                (q, c, phr * phr)
            }
            2 => {
                let c = (1.0 - q * q).max(0.0).sqrt();
                (q, c, 2.0 * sign * phr * p.phi(z * c / e))
            }
            _ => {
                let s = (1.0 - q * q).max(0.0).sqrt();
                (s, q, phr * phr)
            }
        };
        let b = b * z / (e * e * e * e);
        // sin θ dθ = 4ε² r dr / z²
        out.push(ThetaNode { s, c, weight: w * r * 4.0 * e * e / (z * z), b });
    }
}

/// Which kernel components an angular integral includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    One(usize),
    All,
}

impl Component {
    fn list(self) -> Vec<usize> {
        match self {
            Component::One(i) => vec![i],
            Component::All => vec![1, 2, 3],
        }
    }
}

/// `∫_{S²₊} B_i(z, θ) sin^b(θ/2) dσ`.
pub fn sigma_integral(cfg: &KernelConfig, which: Component, z: f64, b: f64, quad: &AngularQuadrature) -> Result<f64> {
    if !(z > 0.0) {
        return domain(format!("sigma_integral needs z > 0, got {z}"));
    }
    if let Component::One(i) = which {
        if !(1..=3).contains(&i) {
            return domain(format!("kernel component {i} not in 1..=3"));
        }
    }
    let mut nodes = Vec::with_capacity(quad.n_r);
    let mut total = 0.0;
    for i in which.list() {
        component_nodes(cfg, i, z, quad, &mut nodes);
        total += nodes.iter().map(|n| n.weight * n.b * n.s.powf(b)).sum::<f64>();
    }
    Ok(2.0 * PI * total)
}

/// Log-spaced scan of `∫ B dσ` and the reference bound `2·8√2π ε⁻³ I₀`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SigmaBound {
    pub sup: f64,
    pub argsup: f64,
    pub bound: f64,
}

pub fn total_sigma_bound(cfg: &KernelConfig, quad: &AngularQuadrature) -> Result<SigmaBound> {
    let npts = 200;
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    let mut sup = 0.0;
    let mut argsup = 0.0;
    for k in 0..npts {
        let z = (lo + (hi - lo) * k as f64 / (npts - 1) as f64).exp();
        let v = sigma_integral(cfg, Component::All, z, 0.0, quad)?;
        if v > sup {
            sup = v;
            argsup = z;
        }
    }
    let e3 = cfg.eps.powi(3);
    let bound = 2.0 * 8.0 * SQRT_2 * PI / e3 * cfg.potential.moment_i(0.0)?;
    Ok(SigmaBound { sup, argsup, bound })
}

/// `M_o(z) = ∫_{S²₊} B (1 - cos θ) dσ`.
pub fn momentum_transfer(cfg: &KernelConfig, z: f64, quad: &AngularQuadrature) -> Result<f64> {
    Ok(2.0 * sigma_integral(cfg, Component::All, z, 2.0, quad)?)
}

/// The component bound `3·2·8π I₃ z⁻³` on the momentum transfer.
pub fn momentum_transfer_bound(cfg: &KernelConfig, z: f64) -> Result<f64> {
    Ok(2.0 * 8.0 * PI * 3.0 * cfg.potential.moment_i(3.0)? / (z * z * z))
}

pub fn psi_kappa(kappa: f64, theta: f64) -> Result<f64> {
    check_kappa(kappa)?;
    check_theta(theta)?;
    Ok(psi_unchecked(kappa, theta))
}

#[inline]
pub(crate) fn psi_unchecked(kappa: f64, theta: f64) -> f64 {
    let (s, c) = (0.5 * theta).sin_cos();
    let k = 1.0 - kappa;
    (c * c + k * k * s * s).sqrt().recip()
}

pub fn alpha_kappa(kappa: f64, theta: f64) -> Result<f64> {
    check_kappa(kappa)?;
    check_theta(theta)?;
    let h = 1.0 - 0.5 * kappa;
    Ok(h * h * (h + 0.5 * kappa * theta.cos()))
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&kappa) {
        return domain(format!("kappa = {kappa} outside [0, 2]"));
    }
    Ok(())
}

const CANCEL_TOL: f64 = 1e-12;

/// Upper end of the support of the cancellation kernels in `|u|`.
fn cancellation_support(cfg: &KernelConfig) -> f64 {
    SQRT_2 * cfg.eps * cfg.potential.cutoff_radius()
}

/// `J_ε(u) = 8π ∫_{√2/2}^1 ε⁻⁴ u φ̂²(u r/ε) r dr`.
pub fn cancellation_j(cfg: &KernelConfig, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return domain(format!("u = {u} must be >= 0"));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let e = cfg.eps;
    let p = &cfg.potential;
    let hi = (e * p.cutoff_radius() / u).min(1.0);
    if hi <= FRAC_1_SQRT_2 {
        return Ok(0.0);
    }
    let pre = 8.0 * PI * u / e.powi(4);
    let r = integrate_adaptive(
        |r| {
            let x = p.phi(u * r / e);
            x * x * r
        },
        FRAC_1_SQRT_2,
        hi,
        CANCEL_TOL,
    )?;
    Ok(pre * r.value)
}

/// `‖J_ε‖_{L¹(ℝ³)} = ∫ 4π u² J_ε(u) du`.
pub fn l1_norm_j(cfg: &KernelConfig) -> Result<f64> {
    let top = cancellation_support(cfg);
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut err = None;
    let r = integrate_adaptive(
        |u| match cancellation_j(cfg, u) {
            Ok(v) => 4.0 * PI * u * u * v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        top,
        1e-11,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

/// `K_ε(u) = K_{ε,1}(u) + K_{ε,2}(u)`.
pub fn cancellation_k(cfg: &KernelConfig, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return domain(format!("u = {u} must be >= 0"));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let e = cfg.eps;
    let p = &cfg.potential;
    let x = u / e;
    let pre = 16.0 * PI * u / e.powi(4);
    let px = p.phi(x);
    let k1 = integrate_adaptive(
        |r| p.phi(x * r) * (px - p.phi(x * (1.0 - r * r).sqrt())) * r,
        0.0,
        FRAC_1_SQRT_2,
        CANCEL_TOL,
    )?;
    let k2 = if px == 0.0 {
        0.0
    } else {
        integrate_adaptive(|r| p.phi(x * r) * r, FRAC_1_SQRT_2, 1.0, CANCEL_TOL)?.value * px
    };
    Ok(pre * (k1.value + k2))
}

/// `∫ 4π u^{2+ϑ} |K_ε(u)| du`.
pub fn l1_norm_k(cfg: &KernelConfig, vartheta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&vartheta) {
        return domain(format!("vartheta = {vartheta} outside [0, 1]"));
    }
    let top = cancellation_support(cfg);
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut err = None;
    let r = integrate_adaptive(
        |u| match cancellation_k(cfg, u) {
            Ok(v) => 4.0 * PI * u * u * u.powf(vartheta) * v.abs(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        top,
        1e-10,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

/// `∫∫ B₃ dσ dz` over ℝ³, reduced to the radial integral of `z² ∫B₃dσ`.
pub fn b3_mass(cfg: &KernelConfig, quad: &AngularQuadrature) -> Result<f64> {
    let top = SQRT_2 * cfg.eps * cfg.potential.cutoff_radius();
    if top == 0.0 {
        return Ok(0.0);
    }
    let mut err = None;
    let r = integrate_adaptive(
        |z| {
            if z == 0.0 {
                return 0.0;
            }
            match sigma_integral(cfg, Component::One(3), z, 0.0, quad) {
                Ok(v) => 4.0 * PI * z * z * v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        top,
        1e-11,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

pub fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Landau matrix `a(z) = 2π I₃ |z|⁻¹ (I - ẑ ẑᵀ)`.
pub fn landau_a(i3: f64, z: Vec3) -> Mat3 {
    let n = norm3(z);
    let mut a = [[0.0; 3]; 3];
    if n == 0.0 {
        return a;
    }
    let c = 2.0 * PI * i3 / n;
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            a[i][j] = c * (d - z[i] * z[j] / (n * n));
        }
    }
    a
}

/// `T` and `U` moments of the grazing component.
#[derive(Clone, Copy, Debug)]
pub struct LandauCoefficients {
    pub t: Vec3,
    pub u: Mat3,
}

pub fn landau_coefficients(cfg: &KernelConfig, z: Vec3, quad: &AngularQuadrature) -> Result<LandauCoefficients> {
    let n = norm3(z);
    if !(n > 0.0) {
        return domain("landau_coefficients needs z != 0");
    }
    let mut nodes = Vec::new();
    component_nodes(cfg, 1, n, quad, &mut nodes);
    // θ-integrals of (1-cosθ)B₁, (1-cosθ)²B₁ and sin²θ B₁ against sinθ dθ.
    let (mut m1, mut m2, mut ms) = (0.0, 0.0, 0.0);
    for nd in &nodes {
        let omc = 2.0 * nd.s * nd.s;
        let st = nd.sin_theta();
        m1 += nd.weight * nd.b * omc;
        m2 += nd.weight * nd.b * omc * omc;
        ms += nd.weight * nd.b * st * st;
    }
    // φ-integrals in closed form: ∫dφ = 2π, ∫cos²φ = ∫sin²φ = π, cross terms vanish.
    let t = [-PI * m1 * z[0], -PI * m1 * z[1], -PI * m1 * z[2]];
    let par = PI / 4.0 * m2;
    let perp = PI / 8.0 * n * n * ms;
    let mut u = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            u[i][j] = par * z[i] * z[j] + perp * (d - z[i] * z[j] / (n * n));
        }
    }
    Ok(LandauCoefficients { t, u })
}

/// Remainder `𝓡²(z) = 8π|z|⁻³ z ∫_{√2|z|/(2ε)}^∞ φ̂² r³ dr`, evaluated by
/// adaptive quadrature of the tail.
pub fn remainder_r2(cfg: &KernelConfig, z: Vec3) -> Result<Vec3> {
    let n = norm3(z);
    if !(n > 0.0) {
        return domain("remainder needs z != 0");
    }
    let tail = tail_moment(cfg, n, 3)?;
    let c = 8.0 * PI / (n * n * n) * tail;
    Ok([c * z[0], c * z[1], c * z[2]])
}

fn tail_moment(cfg: &KernelConfig, n: f64, a: i32) -> Result<f64> {
    let p = &cfg.potential;
    let lo = SQRT_2 * n / (2.0 * cfg.eps);
    let rc = p.cutoff_radius();
    if lo >= rc {
        return Ok(0.0);
    }
    Ok(integrate_adaptive(|r| { let x = p.phi(r); x * x * r.powi(a) }, lo, rc, 1e-13)?.value)
}

fn head_moment(cfg: &KernelConfig, n: f64, a: i32) -> Result<f64> {
    let p = &cfg.potential;
    let hi = (SQRT_2 * n / (2.0 * cfg.eps)).min(p.cutoff_radius());
    if hi <= 0.0 {
        return Ok(0.0);
    }
    Ok(integrate_adaptive(|r| { let x = p.phi(r); x * x * r.powi(a) }, 0.0, hi, 1e-13)?.value)
}

/// Remainder `𝓡³(z) = U^ε(z) - a(z)` from its closed form, independent of
/// [`landau_coefficients`].
pub fn remainder_r3(cfg: &KernelConfig, z: Vec3) -> Result<Mat3> {
    let n = norm3(z);
    if !(n > 0.0) {
        return domain("remainder needs z != 0");
    }
    let e = cfg.eps;
    let tail3 = tail_moment(cfg, n, 3)?;
    let head5 = head_moment(cfg, n, 5)?;
    let proj = 2.0 * PI / n * (-tail3 - e * e / (n * n) * head5);
    // (π/4)∫(1-cosθ)²B₁ sinθ dθ = 4π ε² |z|⁻⁵ ∫₀^{|z|/(√2ε)} φ̂² r⁵ dr
    let par = 4.0 * PI * e * e / n.powi(5) * head5;
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let d = if i == j { 1.0 } else { 0.0 };
            r[i][j] = proj * (d - z[i] * z[j] / (n * n)) + par * z[i] * z[j];
        }
    }
    Ok(r)
}

pub fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smooth, rapidly decaying test functions for the change-of-variable check.
#[derive(Clone, Copy, Debug)]
pub enum TestFunction {
    /// `exp(-α|v - c|²)`
    Gaussian { center: Vec3, alpha: f64 },
    /// `(1 + |v - c|²) exp(-α|v - c|²)`
    PolyGaussian { center: Vec3, alpha: f64 },
}

impl TestFunction {
    pub fn eval(&self, v: Vec3) -> f64 {
        match *self {
            TestFunction::Gaussian { center, alpha } => {
                let d2 = dist2(v, center);
                (-alpha * d2).exp()
            }
            TestFunction::PolyGaussian { center, alpha } => {
                let d2 = dist2(v, center);
                (1.0 + d2) * (-alpha * d2).exp()
            }
        }
    }

    fn center(&self) -> Vec3 {
        match *self {
            TestFunction::Gaussian { center, .. } | TestFunction::PolyGaussian { center, .. } => center,
        }
    }

    /// Radius around the center beyond which the function is below 1e-17.
    fn decay_radius(&self) -> f64 {
        match *self {
            TestFunction::Gaussian { alpha, .. } => (39.2 / alpha).sqrt(),
            TestFunction::PolyGaussian { alpha, .. } => (46.0 / alpha).sqrt(),
        }
    }
}

fn dist2(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Both sides of the intermediate-point change of variables and their
/// absolute difference.
#[derive(Clone, Copy, Debug)]
pub struct CovResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Tensor resolution of the change-of-variable check; `quad` supplies the
/// per-panel node count in `sin(θ/2)` (`n_r`) and the azimuth count (`n_phi`).
#[derive(Clone, Copy, Debug)]
pub struct CovResolution {
    pub radial_panels: usize,
    pub radial_nodes: usize,
    pub polar_nodes: usize,
    pub azimuth_nodes: usize,
    pub theta_panels: usize,
}

impl Default for CovResolution {
    fn default() -> Self {
        CovResolution { radial_panels: 16, radial_nodes: 10, polar_nodes: 24, azimuth_nodes: 48, theta_panels: 6 }
    }
}

/// Panels in `s = sin(θ/2) ∈ [0, √2/2]`, refined below the point where the
/// sin-argument leaves the potential support.
fn s_panels(cfg: &KernelConfig, z: f64, panels: usize) -> Vec<(f64, f64)> {
    let top = FRAC_1_SQRT_2;
    let sc = cfg.eps * cfg.potential.cutoff_radius() / z;
    let mut breaks = vec![0.0];
    if sc > 0.0 && sc < top {
        for k in 1..=panels {
            breaks.push(sc * k as f64 / panels as f64);
        }
        for k in 1..=panels {
            breaks.push(sc + (top - sc) * k as f64 / panels as f64);
        }
    } else {
        for k in 1..=panels {
            breaks.push(top * k as f64 / panels as f64);
        }
    }
    breaks.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn change_of_variable_residual(
    cfg: &KernelConfig,
    f: &TestFunction,
    kappa: f64,
    quad: &AngularQuadrature,
    res: &CovResolution,
    v_star: Vec3,
) -> Result<CovResidual> {
    if !(0.0..=1.0).contains(&kappa) {
        return domain(format!("kappa = {kappa} outside [0, 1]"));
    }
    let d = dist2(v_star, f.center()).sqrt();
    // |κ(v) - v*| ≥ |v - v*|/√2, so this radius covers the support of both sides.
    let rho_max = SQRT_2 * (d + f.decay_radius());
    let radial = GaussRule::new(res.radial_nodes);
    let polar = GaussRule::new(res.polar_nodes);
    let srule = quad.rule();
    let n_az = res.azimuth_nodes;
    let n_phi = quad.n_phi;

    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let dr = rho_max / res.radial_panels as f64;
    for pnl in 0..res.radial_panels {
        for (rho, wr) in radial.mapped(dr * pnl as f64, dr * (pnl + 1) as f64) {
            let panels = s_panels(cfg, rho, res.theta_panels);
            // Hemisphere nodes (s, weight·B) shared by both sides.
            let mut lnodes = Vec::new();
            let mut g = 0.0;
            for &(a, b) in &panels {
                for (s, ws) in srule.mapped(a, b) {
                    let theta = 2.0 * s.asin();
                    let jac = 4.0 * s * ws; // sinθ dθ = 4 s ds
                    lnodes.push((s, jac * b_unchecked(cfg, rho, theta)));
                    let psi = psi_unchecked(kappa, theta);
                    g += jac * b_unchecked(cfg, rho * psi, theta) * psi * psi * psi;
                }
            }
            let g = 2.0 * PI * g;
            for (mu, wmu) in polar.mapped(-1.0, 1.0) {
                let st = (1.0 - mu * mu).max(0.0).sqrt();
                for ia in 0..n_az {
                    let az = 2.0 * PI * ia as f64 / n_az as f64;
                    let w_dir = wmu * 2.0 * PI / n_az as f64;
                    let om = [st * az.cos(), st * az.sin(), mu];
                    let z = [rho * om[0], rho * om[1], rho * om[2]];
                    let v = [v_star[0] + z[0], v_star[1] + z[1], v_star[2] + z[2]];
                    let wz = wr * rho * rho * w_dir;
                    rhs += wz * f.eval(v) * g;
                    let (e1, e2) = orthonormal_frame(om);
                    let mut inner = 0.0;
                    for &(s, wb) in &lnodes {
                        let c = (1.0 - s * s).sqrt();
                        let (sin_t, cos_t) = (2.0 * s * c, 1.0 - 2.0 * s * s);
                        let mut acc = 0.0;
                        for ip in 0..n_phi {
                            let ph = 2.0 * PI * ip as f64 / n_phi as f64;
                            let (sp, cp) = ph.sin_cos();
                            let mut x = [0.0; 3];
                            for k in 0..3 {
                                let sigma = cos_t * om[k] + sin_t * (cp * e1[k] + sp * e2[k]);
                                // κ(v) = v + κ(v' - v), v' - v = (|z|σ - z)/2
                                x[k] = v[k] + 0.5 * kappa * (rho * sigma - z[k]);
                            }
                            acc += f.eval(x);
                        }
                        inner += wb * acc * 2.0 * PI / n_phi as f64;
                    }
                    lhs += wz * inner;
                }
            }
        }
    }
    Ok(CovResidual { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Any right-handed orthonormal completion of the unit vector `w`.
pub fn orthonormal_frame(w: Vec3) -> (Vec3, Vec3) {
    let a = if w[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = a[0] * w[0] + a[1] * w[1] + a[2] * w[2];
    let mut e1 = [a[0] - d * w[0], a[1] - d * w[1], a[2] - d * w[2]];
    let n = norm3(e1);
    for x in &mut e1 {
        *x /= n;
    }
    let e2 = [
        w[1] * e1[2] - w[2] * e1[1],
        w[2] * e1[0] - w[0] * e1[2],
        w[0] * e1[1] - w[1] * e1[0],
    ];
    (e1, e2)
}
