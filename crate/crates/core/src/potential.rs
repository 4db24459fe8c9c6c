//! Interaction potential through its radial Fourier transform `φ̂`, its
//! moments `I_a = ∫ φ̂² rᵃ dr` and `I'_a = ∫ |r φ̂'|² rᵃ dr`, and the
//! moment-based admissibility checks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad::integrate_adaptive;

/// Relative drop tolerance defining the cutoff radius.
pub const DROP_TOL: f64 = 1e-14;
/// Relative level of `|φ̂|` below which squared-kernel quadratures drop the tail.
pub const KERNEL_TOL: f64 = 1e-8;
/// Relative tolerance of the adaptive moment quadrature.
pub const MOMENT_TOL: f64 = 1e-10;
/// Exponents cached at construction.
pub const CACHED_EXPONENTS: [f64; 8] = [0.0, 1.0, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0];

/// Monotone cubic Hermite table (Fritsch–Carlson slopes).
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    r: Vec<f64>,
    v: Vec<f64>,
    m: Vec<f64>,
}

impl Table {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() != v.len() || r.len() < 2 {
            return Err(Error::Data("table needs at least two (r, phi_hat) samples".into()));
        }
        if r[0] != 0.0 {
            return Err(Error::Data("table must start at r = 0".into()));
        }
        for k in 1..r.len() {
            if !(r[k] > r[k - 1]) {
                return Err(Error::Data(format!("r not strictly increasing at sample {k}")));
            }
        }
        if let Some(k) = r.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite table entry at position {k}")));
        }
        let m = fritsch_carlson(&r, &v);
        Ok(Table { r, v, m })
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.r, &self.v)
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let last = *self.r.last().unwrap();
        if x > last {
            return None;
        }
        let k = self.r.partition_point(|&ri| ri <= x);
        Some(k.saturating_sub(1).min(self.r.len() - 2))
    }

    fn eval(&self, x: f64) -> f64 {
        let Some(k) = self.locate(x) else { return 0.0 };
        let h = self.r[k + 1] - self.r[k];
        let t = (x - self.r[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.v[k] + h10 * h * self.m[k] + h01 * self.v[k + 1] + h11 * h * self.m[k + 1]
    }

    fn deriv(&self, x: f64) -> f64 {
        let Some(k) = self.locate(x) else { return 0.0 };
        let h = self.r[k + 1] - self.r[k];
        let t = (x - self.r[k]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.v[k] + d10 * self.m[k] + d01 * self.v[k + 1] + d11 * self.m[k + 1]
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        m[k] = if d[k - 1] * d[k] <= 0.0 { 0.0 } else { 0.5 * (d[k - 1] + d[k]) };
    }
    for k in 0..n - 1 {
        if d[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / d[k];
        let b = m[k + 1] / d[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * a * d[k];
            m[k + 1] = tau * b * d[k];
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// `A exp(-r²/s²)`
    Gaussian { amplitude: f64, width: f64 },
    /// `A (1 - r²)₊²`
    Bump { amplitude: f64 },
    Tabulated(Table),
}

/// Cached moment values with their quadrature error estimates.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MomentTable {
    pub i: BTreeMap<String, f64>,
    pub iprime: BTreeMap<String, f64>,
    pub quadrature_error: BTreeMap<String, f64>,
}

fn key(a: f64) -> String {
    format!("{a}")
}

impl MomentTable {
    pub fn get_i(&self, a: f64) -> Option<f64> {
        self.i.get(&key(a)).copied()
    }
    pub fn get_iprime(&self, a: f64) -> Option<f64> {
        self.iprime.get(&key(a)).copied()
    }
}

#[derive(Clone, Debug)]
pub struct Potential {
    kind: PotentialKind,
    cutoff_radius: f64,
    kernel_radius: f64,
    sup: f64,
    moments: MomentTable,
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Potential {
    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self> {
        if !(amplitude.is_finite() && width.is_finite() && width > 0.0) {
            return domain(format!("Gaussian needs finite amplitude and width > 0, got ({amplitude}, {width})"));
        }
        Self::build(PotentialKind::Gaussian { amplitude, width })
    }

    pub fn bump(amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return domain("Bump amplitude must be finite");
        }
        Self::build(PotentialKind::Bump { amplitude })
    }

    pub fn tabulated(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::build(PotentialKind::Tabulated(Table::new(r, v)?))
    }

    /// Reads a `r,phi_hat` CSV table.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let (r, v) = parse_table_csv(&text)?;
        Self::tabulated(r, v)
    }

    fn build(kind: PotentialKind) -> Result<Self> {
        let radius = |tol: f64| match &kind {
            PotentialKind::Gaussian { width, .. } => width * (-tol.ln()).sqrt(),
            PotentialKind::Bump { .. } => 1.0,
            PotentialKind::Tabulated(t) => {
                let sup = t.v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                // The interpolant vanishes beyond the first zero sample after the last nonzero one.
                match t.v.iter().rposition(|x| x.abs() > tol * sup) {
                    None => 0.0,
                    Some(k) => t.r[(k + 1).min(t.r.len() - 1)],
                }
            }
        };
        let (cutoff_radius, kernel_radius) = (radius(DROP_TOL), radius(KERNEL_TOL));
        let sup = match &kind {
            PotentialKind::Gaussian { amplitude, .. } | PotentialKind::Bump { amplitude } => amplitude.abs(),
            PotentialKind::Tabulated(t) => t.v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        };
        let mut p = Potential { kind, cutoff_radius, kernel_radius, sup, moments: MomentTable::default() };
        let mut table = MomentTable::default();
        for a in CACHED_EXPONENTS {
            let (vi, ei) = p.compute_moment(a, false)?;
            let (vp, ep) = p.compute_moment(a, true)?;
            table.i.insert(key(a), vi);
            table.iprime.insert(key(a), vp);
            table.quadrature_error.insert(key(a), ei.max(ep));
        }
        p.moments = table;
        Ok(p)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn cutoff_radius(&self) -> f64 {
        self.cutoff_radius
    }

    /// Radius beyond which `φ̂²` is below `KERNEL_TOL²` of its peak.
    pub fn kernel_radius(&self) -> f64 {
        self.kernel_radius
    }

    pub fn moment_table(&self) -> &MomentTable {
        &self.moments
    }

    /// `φ̂(r)` without the sign check, for hot loops.
    #[inline]
    pub fn phi(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Gaussian { amplitude, width } => {
                let x = r / width;
                amplitude * (-x * x).exp()
            }
            PotentialKind::Bump { amplitude } => {
                if r >= 1.0 {
                    0.0
                } else {
                    let u = 1.0 - r * r;
                    amplitude * u * u
                }
            }
            PotentialKind::Tabulated(t) => t.eval(r),
        }
    }

    #[inline]
    pub fn dphi(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Gaussian { amplitude, width } => {
                let x = r / width;
                -2.0 * r / (width * width) * amplitude * (-x * x).exp()
            }
            PotentialKind::Bump { amplitude } => {
                if r >= 1.0 {
                    0.0
                } else {
                    -4.0 * amplitude * r * (1.0 - r * r)
                }
            }
            PotentialKind::Tabulated(t) => t.deriv(r),
        }
    }

    pub fn eval_phi_hat(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return domain(format!("phi_hat evaluated at negative radius {r}"));
        }
        Ok(self.phi(r))
    }

    pub fn eval_phi_hat_deriv(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return domain(format!("phi_hat' evaluated at negative radius {r}"));
        }
        Ok(self.dphi(r))
    }

    fn compute_moment(&self, a: f64, derivative: bool) -> Result<(f64, f64)> {
        if !(a >= 0.0) {
            return domain(format!("moment exponent must be >= 0, got {a}"));
        }
        if self.cutoff_radius == 0.0 || self.sup == 0.0 {
            return Ok((0.0, 0.0));
        }
        let f = |r: f64| {
            let w = if a == 0.0 { 1.0 } else { r.powf(a) };
            if derivative {
                let d = r * self.dphi(r);
                d * d * w
            } else {
                let p = self.phi(r);
                p * p * w
            }
        };
        // Split at the table nodes so that each panel sees a smooth cubic.
        let res = match &self.kind {
            PotentialKind::Tabulated(t) => {
                let mut value = 0.0;
                let mut error = 0.0;
                for w in t.r.windows(2) {
                    if w[0] >= self.cutoff_radius {
                        break;
                    }
                    let r = integrate_adaptive(f, w[0], w[1], MOMENT_TOL * 1e-3)?;
                    value += r.value;
                    error += r.error;
                }
                crate::quad::Adaptive { value, error }
            }
            _ => integrate_adaptive(f, 0.0, self.cutoff_radius, MOMENT_TOL)?,
        };
        if !res.value.is_finite() {
            return Err(Error::Numeric(format!("moment a={a} is not finite")));
        }
        Ok((res.value.max(0.0), res.error))
    }

    /// `I_a`; cached exponents are served from the moment table.
    pub fn moment_i(&self, a: f64) -> Result<f64> {
        match self.moments.get_i(a) {
            Some(v) => Ok(v),
            None => Ok(self.compute_moment(a, false)?.0),
        }
    }

    /// `I'_a`.
    pub fn moment_iprime(&self, a: f64) -> Result<f64> {
        match self.moments.get_iprime(a) {
            Some(v) => Ok(v),
            None => Ok(self.compute_moment(a, true)?.0),
        }
    }

    pub fn check_assumptions(&self, theta: f64) -> Result<AssumptionReport> {
        if !(theta > 0.0 && theta <= 1.0) {
            return domain(format!("theta must lie in (0, 1], got {theta}"));
        }
        let w = Witnesses {
            i0: self.moment_i(0.0)?,
            i3: self.moment_i(3.0)?,
            ip3: self.moment_iprime(3.0)?,
            i3_theta: self.moment_i(3.0 + theta)?,
            ip3_theta: self.moment_iprime(3.0 + theta)?,
        };
        let a1 = w.i0.is_finite() && w.i3.is_finite() && w.ip3.is_finite();
        let a2 = a1 && w.i3_theta.is_finite() && w.ip3_theta.is_finite();
        Ok(AssumptionReport { a1_holds: a1, a2_theta: a2.then_some(theta), witness_values: w })
    }

    /// A multiple `c φ̂` of this potential.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match &self.kind {
            PotentialKind::Gaussian { amplitude, width } => Self::gaussian(c * amplitude, *width),
            PotentialKind::Bump { amplitude } => Self::bump(c * amplitude),
            PotentialKind::Tabulated(t) => {
                Self::tabulated(t.r.clone(), t.v.iter().map(|x| c * x).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Witnesses {
    pub i0: f64,
    pub i3: f64,
    pub ip3: f64,
    pub i3_theta: f64,
    pub ip3_theta: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AssumptionReport {
    pub a1_holds: bool,
    pub a2_theta: Option<f64>,
    pub witness_values: Witnesses,
}

/// Parses the `r,phi_hat` table format. Errors carry 1-based line numbers.
pub fn parse_table_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "r" || &headers[1] != "phi_hat" {
        return Err(Error::Data("line 1: header must be exactly `r,phi_hat`".into()));
    }
    let mut r = Vec::new();
    let mut v = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() != 2 {
            return Err(Error::Data(format!("line {line}: expected 2 fields, found {}", rec.len())));
        }
        let parse = |s: &str| -> Result<f64> {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::Data(format!("line {line}: `{s}` is not a decimal number")))?;
            if !x.is_finite() {
                return Err(Error::Data(format!("line {line}: non-finite value `{s}`")));
            }
            Ok(x)
        };
        let (ri, vi) = (parse(&rec[0])?, parse(&rec[1])?);
        if r.is_empty() && ri != 0.0 {
            return Err(Error::Data(format!("line {line}: first radius must be 0")));
        }
        if let Some(&prev) = r.last() {
            if !(ri > prev) {
                return Err(Error::Data(format!("line {line}: r must be strictly increasing")));
            }
        }
        r.push(ri);
        v.push(vi);
    }
    Ok((r, v))
}
