//! JSON run configuration: parsing with unknown keys rejected, validation
//! with key paths, and construction of the library objects it describes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, DistributionField, FieldMeta, Interpolation, NormP, NormSpec, VelocityGrid};
use crate::kernel::{KernelConfig, Statistics};
use crate::operators::{CollisionQuadrature, VstarMode};
use crate::potential::Potential;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub potential: PotentialSection,
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub quadrature: QuadratureSection,
    pub initial: InitialSection,
    pub evolve: EvolveSection,
    pub norm: NormSection,
    pub limit: LimitSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            potential: PotentialSection::Gaussian { amplitude: 1.0, width: 1.0 },
            kernel: KernelSection::default(),
            grid: GridSection::default(),
            quadrature: QuadratureSection::default(),
            initial: InitialSection::FdEquilibrium { beta: 1.0, c: 0.0, fill: 0.9 },
            evolve: EvolveSection::default(),
            norm: NormSection::default(),
            limit: LimitSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSection {
    Gaussian { amplitude: f64, width: f64 },
    Bump { amplitude: f64 },
    /// CSV with header `r,phi_hat`; relative paths resolve against the config file.
    Tabulated { table: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub statistics: Statistics,
    pub eps: f64,
    pub eps_list: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { statistics: Statistics::FermiDirac, eps: 0.8, eps_list: vec![0.4, 0.3, 0.2, 0.1] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    /// Half-width; `None` selects `6√T` of the initial data.
    #[serde(rename = "L")]
    pub l: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 16, l: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub n_r: usize,
    pub n_phi: usize,
    pub vstar_mode: VstarMode,
    pub interpolation: Interpolation,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection { n_r: 8, n_phi: 12, vstar_mode: VstarMode::FullGrid, interpolation: Interpolation::Tricubic }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// `fill · ε⁻³ / (1 + exp(β|v|² + c))`
    FdEquilibrium { beta: f64, c: f64, fill: f64 },
    Maxwellian { rho: f64, u: [f64; 3], temperature: f64 },
    /// Anisotropic Maxwellian with axis temperatures `T(1+a), T, T(1-a)`.
    PerturbedMaxwellian { rho: f64, temperature: f64, anisotropy: f64 },
    Zero,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Uu,
    Landau,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub model: ModelKind,
    pub dt: Option<f64>,
    pub t_final: f64,
    pub clamp: bool,
    pub conservation_projection: bool,
    pub snapshot_stride: usize,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection { model: ModelKind::Uu, dt: None, t_final: 0.1, clamp: true, conservation_projection: false, snapshot_stride: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NormSection {
    #[serde(rename = "N")]
    pub n: u32,
    pub l: f64,
    pub p: NormP,
}

impl Default for NormSection {
    fn default() -> Self {
        NormSection { n: 0, l: 2.0, p: NormP::Two }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LimitSection {
    pub theta: f64,
    pub norm: Option<NormSection>,
    pub t_final: f64,
    pub control_floor: bool,
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection { theta: 1.0, norm: None, t_final: 0.05, control_floor: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
}

fn bad(path: &str, msg: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), msg: msg.into() }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad("$", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("$", format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json(&text)?, base))
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        match &self.potential {
            PotentialSection::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(bad("potential.amplitude", "must be finite"));
                }
                if !(*width > 0.0) {
                    return Err(bad("potential.width", "must be positive"));
                }
            }
            PotentialSection::Bump { amplitude } => {
                if !amplitude.is_finite() {
                    return Err(bad("potential.amplitude", "must be finite"));
                }
            }
            PotentialSection::Tabulated { .. } => {}
        }
        let k = &self.kernel;
        if !(k.eps > 0.0 && k.eps <= 1.0) {
            return Err(bad("kernel.eps", format!("must lie in (0, 1], got {}", k.eps)));
        }
        for (i, e) in k.eps_list.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(bad(&format!("kernel.eps_list[{i}]"), format!("must lie in (0, 1], got {e}")));
            }
        }
        if k.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(bad("kernel.eps_list", "must be strictly decreasing"));
        }
        if self.grid.n < 8 || !self.grid.n.is_multiple_of(2) {
            return Err(bad("grid.n", format!("must be even and >= 8, got {}", self.grid.n)));
        }
        if let Some(l) = self.grid.l {
            if !(l > 0.0) {
                return Err(bad("grid.L", "must be positive"));
            }
        }
        let q = &self.quadrature;
        if q.n_r < 4 {
            return Err(bad("quadrature.n_r", "must be >= 4"));
        }
        if q.n_phi < 4 {
            return Err(bad("quadrature.n_phi", "must be >= 4"));
        }
        if let VstarMode::Thresholded { rel_cut } = q.vstar_mode {
            if !(0.0..=1e-2).contains(&rel_cut) {
                return Err(bad("quadrature.vstar_mode.thresholded.rel_cut", "must lie in [0, 1e-2]"));
            }
        }
        match self.initial {
            InitialSection::FdEquilibrium { beta, fill, .. } => {
                if !(beta > 0.0) {
                    return Err(bad("initial.beta", "must be positive"));
                }
                if !(0.0..=1.0).contains(&fill) {
                    return Err(bad("initial.fill", "must lie in [0, 1]"));
                }
            }
            InitialSection::Maxwellian { rho, temperature, .. } => {
                if !(rho >= 0.0) || !(temperature > 0.0) {
                    return Err(bad("initial", "rho must be >= 0 and temperature > 0"));
                }
            }
            InitialSection::PerturbedMaxwellian { rho, temperature, anisotropy } => {
                if !(rho >= 0.0) || !(temperature > 0.0) || !(anisotropy.abs() < 1.0) {
                    return Err(bad("initial", "rho >= 0, temperature > 0 and |anisotropy| < 1 required"));
                }
            }
            InitialSection::Zero => {}
        }
        let e = &self.evolve;
        if !(e.t_final > 0.0) {
            return Err(bad("evolve.t_final", "must be positive"));
        }
        if let Some(dt) = e.dt {
            if !(dt > 0.0 && dt <= e.t_final) {
                return Err(bad("evolve.dt", "must lie in (0, t_final]"));
            }
        }
        if k.statistics == Statistics::FermiDirac && !e.clamp {
            return Err(bad("evolve.clamp", "is required for Fermi–Dirac statistics"));
        }
        for (path, n) in [("norm", Some(&self.norm)), ("limit.norm", self.limit.norm.as_ref())] {
            if let Some(n) = n {
                if n.n > 3 {
                    return Err(bad(&format!("{path}.N"), "must be <= 3"));
                }
                if !(n.l >= 0.0) {
                    return Err(bad(&format!("{path}.l"), "must be >= 0"));
                }
            }
        }
        if !(self.limit.theta > 0.0 && self.limit.theta <= 1.0) {
            return Err(bad("limit.theta", "must lie in (0, 1]"));
        }
        if !(self.limit.t_final > 0.0) {
            return Err(bad("limit.t_final", "must be positive"));
        }
        Ok(())
    }

    pub fn build_potential(&self, base: &Path) -> Result<Arc<Potential>> {
        let p = match &self.potential {
            PotentialSection::Gaussian { amplitude, width } => Potential::gaussian(*amplitude, *width),
            PotentialSection::Bump { amplitude } => Potential::bump(*amplitude),
            PotentialSection::Tabulated { table } => {
                let path = if table.is_absolute() { table.clone() } else { base.join(table) };
                Potential::from_csv(&path)
            }
        };
        Ok(Arc::new(p.map_err(|e| bad("potential", e.to_string()))?))
    }

    pub fn kernel_config(&self, pot: Arc<Potential>, eps: f64) -> Result<KernelConfig> {
        KernelConfig::new(eps, self.kernel.statistics, pot)
    }

    pub fn quadrature(&self) -> Result<CollisionQuadrature> {
        let q = &self.quadrature;
        let mut c = CollisionQuadrature::new(q.n_r, q.n_phi)?.with_interpolation(q.interpolation);
        c.vstar_mode = q.vstar_mode;
        Ok(c)
    }

    /// Temperature scale of the initial data.
    pub fn temperature(&self) -> f64 {
        match self.initial {
            InitialSection::FdEquilibrium { beta, .. } => 0.5 / beta,
            InitialSection::Maxwellian { temperature, .. } => temperature,
            InitialSection::PerturbedMaxwellian { temperature, anisotropy, .. } => temperature * (1.0 + anisotropy.abs()),
            InitialSection::Zero => 1.0,
        }
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid.n, self.grid.l.unwrap_or(6.0 * self.temperature().sqrt()))
    }

    pub fn norm_spec(&self) -> NormSpec {
        NormSpec { n: self.norm.n, l: self.norm.l, p: self.norm.p }
    }

    pub fn limit_norm_spec(&self) -> NormSpec {
        self.limit.norm.as_ref().map(|n| NormSpec { n: n.n, l: n.l, p: n.p }).unwrap_or_else(|| self.norm_spec())
    }

    /// Initial data on the configured grid; Fermi–Dirac equilibria use `eps`.
    pub fn initial_field(&self, eps: f64) -> Result<DistributionField> {
        let g = self.grid()?;
        let f = match self.initial {
            InitialSection::FdEquilibrium { beta, c, fill } => {
                let cap = eps.powi(-3);
                sample(move |v| fill * cap / (1.0 + (beta * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + c).exp()), g)?
            }
            InitialSection::Maxwellian { rho, u, temperature } => sample(crate::grid::maxwellian(rho, u, temperature), g)?,
            InitialSection::PerturbedMaxwellian { rho, temperature, anisotropy } => {
                let t = [temperature * (1.0 + anisotropy), temperature, temperature * (1.0 - anisotropy)];
                let c = rho / ((2.0 * std::f64::consts::PI).powf(1.5) * (t[0] * t[1] * t[2]).sqrt());
                sample(move |v| c * (-(v[0] * v[0] / t[0] + v[1] * v[1] / t[1] + v[2] * v[2] / t[2]) / 2.0).exp(), g)?
            }
            InitialSection::Zero => DistributionField::zeros(g),
        };
        Ok(f.with_meta(Some(FieldMeta { eps, statistics: self.kernel.statistics })))
    }
}
