//! Acceptance criteria 1–12, one test per criterion. Each prints a single
//! `criterion NN: PASS|FAIL ...` line with the measured values and wall time.
//! Criteria run one at a time so the timings are not skewed by each other.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use qkinetic::config::{ModelKind, RunConfig};
use qkinetic::evolve::{run, EvolutionConfig, Model};
use qkinetic::grid::{maxwellian, sample, weighted_norm, DistributionField, NormSpec, VelocityGrid};
use qkinetic::kernel::*;
use qkinetic::limit::{fit_rate, limit_study, weak_convergence_study, LimitOptions};
use qkinetic::operators::*;
use qkinetic::potential::Potential;

static SERIAL: Mutex<()> = Mutex::new(());

fn gaussian() -> Arc<Potential> {
    Arc::new(Potential::gaussian(1.0, 1.0).unwrap())
}

fn bump() -> Arc<Potential> {
    Arc::new(Potential::bump(1.0).unwrap())
}

fn kc(eps: f64, st: Statistics, p: &Arc<Potential>) -> KernelConfig {
    KernelConfig::new(eps, st, p.clone()).unwrap()
}

fn verdict(id: u32, pass: bool, detail: String, secs: f64, limit: f64) -> bool {
    let ok = pass && secs < limit;
    let timing = if secs < limit { String::new() } else { format!(" [over time limit {limit:.0} s]") };
    // Straight to the stderr handle: libtest captures print! output of passing tests.
    let _ = writeln!(std::io::stderr(), "criterion {id:02}: {} {detail} ({secs:.1} s){timing}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Anisotropic Maxwellian with unit density and temperatures `(1.3, 1, 0.7)`.
fn anisotropic(g: VelocityGrid) -> DistributionField {
    let t = [1.3, 1.0, 0.7];
    let c = 1.0 / ((2.0 * PI).powf(1.5) * (t[0] * t[1] * t[2])).sqrt();
    sample(move |v| c * (-(v[0] * v[0] / t[0] + v[1] * v[1] / t[1] + v[2] * v[2] / t[2]) / 2.0).exp(), g).unwrap()
}

#[test]
fn criterion_01_cancellation_kernel_norm() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (p, exact) in [(gaussian(), 2.0 * PI * PI), (bump(), 16.0 * PI * PI / 60.0)] {
        for eps in [1.0, 0.5, 0.1] {
            worst = worst.max(rel(l1_norm_j(&kc(eps, Statistics::FermiDirac, &p)).unwrap(), exact));
        }
    }
    let ok = verdict(1, worst <= 1e-6, format!("max rel deviation of ||J||_1 from 16 pi^2 I3 = {worst:.2e} (tol 1e-6)"), t.elapsed().as_secs_f64(), 5.0);
    assert!(ok);
}

#[test]
fn criterion_02_k_kernel_bound() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut bound_ok = true;
    let mut spread = 1.0f64;
    let mut detail = String::new();
    for (name, p) in [("gaussian", gaussian()), ("bump", bump())] {
        let bound = 64.0 * PI * PI * (p.moment_i(3.0).unwrap() + p.moment_iprime(3.0).unwrap());
        let mut scaled = Vec::new();
        let mut k0max = 0.0f64;
        for eps in [0.5, 0.1, 0.05] {
            let c = kc(eps, Statistics::FermiDirac, &p);
            let k0 = l1_norm_k(&c, 0.0).unwrap();
            k0max = k0max.max(k0);
            bound_ok &= k0 <= bound;
            scaled.push(l1_norm_k(&c, 1.0).unwrap() / eps);
        }
        let s = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(s);
        detail += &format!("{name}: max ||K(0)||_1 = {k0max:.4} <= {bound:.4}, ||K(1)||_1/eps spread {s:.4}; ");
    }
    let ok = verdict(2, bound_ok && spread <= 2.0, detail, t.elapsed().as_secs_f64(), 10.0);
    assert!(ok);
}

#[test]
fn criterion_03_b3_mass() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let quad = AngularQuadrature::new(32, 8).unwrap();
    let mut worst = 0.0f64;
    for p in [gaussian(), bump()] {
        let exact = 16.0 * PI * PI * p.moment_i(3.0).unwrap();
        for eps in [1.0, 0.5, 0.1] {
            worst = worst.max(rel(b3_mass(&kc(eps, Statistics::BoseEinstein, &p), &quad).unwrap(), exact));
        }
    }
    let ok = verdict(3, worst <= 1e-6, format!("max rel deviation of B3 mass from 16 pi^2 I3 = {worst:.2e} (tol 1e-6)"), t.elapsed().as_secs_f64(), 5.0);
    assert!(ok);
}

#[test]
fn criterion_04_momentum_transfer() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let p = gaussian();
    let limit = 16.0 * PI * p.moment_i(3.0).unwrap();
    let quad = AngularQuadrature::new(48, 8).unwrap();
    let mut worst_limit = 0.0f64;
    let mut worst_bound = 0.0f64;
    for eps in [0.4, 0.1, 0.05] {
        let c = kc(eps, Statistics::FermiDirac, &p);
        for k in 0..40 {
            let z = 10f64.powf(-2.0 + 4.0 * k as f64 / 39.0);
            let m = momentum_transfer(&c, z, &quad).unwrap();
            worst_bound = worst_bound.max(m / momentum_transfer_bound(&c, z).unwrap());
            if z / eps >= 20.0 {
                worst_limit = worst_limit.max(rel(m * z.powi(3), limit));
            }
        }
    }
    let ok = verdict(
        4,
        worst_limit <= 1e-2 && worst_bound <= 1.0,
        format!("max rel deviation of M z^3 from 16 pi I3 for z/eps >= 20: {worst_limit:.2e} (tol 1e-2); max M/bound {worst_bound:.4}"),
        t.elapsed().as_secs_f64(),
        5.0,
    );
    assert!(ok);
}

#[test]
fn criterion_05_change_of_variable() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let c = kc(0.5, Statistics::FermiDirac, &gaussian());
    let quad = AngularQuadrature::new(8, 12).unwrap();
    let f = TestFunction::Gaussian { center: [0.3, -0.2, 0.1], alpha: 1.0 };
    let mut worst = 0.0f64;
    for kappa in [0.0, 0.5, 1.0] {
        let r = change_of_variable_residual(&c, &f, kappa, &quad, &CovResolution::default(), [0.5, 0.0, -0.4]).unwrap();
        worst = worst.max(r.residual / r.rhs.abs());
    }
    let ok = verdict(5, worst <= 1e-6, format!("max relative residual over kappa in {{0, 0.5, 1}} = {worst:.2e} (tol 1e-6)"), t.elapsed().as_secs_f64(), 30.0);
    assert!(ok);
}

#[test]
fn criterion_06_landau_coefficients() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let p = gaussian();
    let i3 = p.moment_i(3.0).unwrap();
    let quad = AngularQuadrature::new(64, 8).unwrap();
    let z = [1.0, 0.0, 0.0];
    let a = landau_a(i3, z);
    let mut devs = Vec::new();
    let mut t_worst = 0.0f64;
    for eps in [0.4, 0.2, 0.1] {
        let c = kc(eps, Statistics::FermiDirac, &p);
        let lc = landau_coefficients(&c, z, &quad).unwrap();
        let mut d = lc.u;
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] -= a[i][j];
            }
        }
        devs.push(frobenius(&d) / frobenius(&a));
        let r2 = remainder_r2(&c, z).unwrap();
        let n = norm3(z);
        for k in 0..3 {
            let want = -8.0 * PI * i3 * z[k] / n.powi(3) + r2[k];
            if want != 0.0 {
                t_worst = t_worst.max(rel(lc.t[k], want));
            } else {
                t_worst = t_worst.max(lc.t[k].abs());
            }
        }
    }
    let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
    let last = *devs.last().unwrap();
    let ok = verdict(
        6,
        decreasing && last <= 1e-2 && t_worst <= 1e-6,
        format!("||U - a||_F/||a||_F at eps 0.4, 0.2, 0.1 = {} (final tol 1e-2); T rel deviation {t_worst:.2e} (tol 1e-6)", list(&devs)),
        t.elapsed().as_secs_f64(),
        30.0,
    );
    assert!(ok);
}

#[test]
fn criterion_07_structural_identities() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let tol = 1e-12;
    let p = gaussian();
    let mut worst = [0.0f64; 7];
    // Kernel splitting on a (z, θ) sample.
    for st in [Statistics::FermiDirac, Statistics::BoseEinstein] {
        for eps in [1.0, 0.3] {
            let c = kc(eps, st, &p);
            for k in 1..30 {
                let z = 0.07 * k as f64;
                let theta = PI * k as f64 / 61.0;
                let b: Vec<f64> = (1..=3).map(|i| eval_b_component(&c, i, z, theta).unwrap()).collect();
                let total = eval_b(&c, z, theta).unwrap();
                let s = b[0] + b[1].abs() + b[2];
                if s > 0.0 {
                    worst[0] = worst[0].max((b[0] + b[1] + b[2] - total).abs() / s);
                    worst[1] = worst[1].max((b[1].abs() - 2.0 * (b[0] * b[2]).sqrt()).abs() / s);
                }
            }
        }
    }
    let g = VelocityGrid::new(12, 5.0).unwrap();
    let f = sample(
        |v| {
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            0.5 * (-r2 / 2.0).exp() * (1.0 + 0.4 * (v[0] - 0.3 * v[1]).tanh())
        },
        g,
    )
    .unwrap();
    let quad = CollisionQuadrature::new(8, 12).unwrap();
    for st in [Statistics::FermiDirac, Statistics::BoseEinstein] {
        let c = kc(0.6, st, &p);
        let q = eval_q_uu(&f, &c, &quad).unwrap().field;
        let scale = q.linf();
        let mut sum = eval_r(&f, &f, &f, &c, &quad).unwrap().field;
        for i in 1..=3 {
            sum = sum.axpy(1.0, &eval_q_bilinear(&f, &f, i, &c, &quad).unwrap().field).unwrap();
        }
        worst[2] = worst[2].max(sum.sub(&q).unwrap().linf() / scale);
        if st == Statistics::FermiDirac {
            let (gain, loss) = eval_gain_loss(&f, &c, &quad).unwrap();
            worst[3] = worst[3].max(gain.field.sub(&loss.field).unwrap().sub(&q).unwrap().linf() / loss.field.linf());
        }
        let phis = [TestPhi::One, TestPhi::Coord(0), TestPhi::Coord(1), TestPhi::Coord(2), TestPhi::Energy];
        for w in weak_forms(&f, &phis, &c, &quad).unwrap() {
            worst[4] = worst[4].max(w.value.abs() / w.scale);
        }
    }
    for k in 0..50 {
        let x = k as f64;
        let z = [(0.7 * x).sin() * 3.0, (1.3 * x + 0.2).cos() * 2.0, 0.1 * x - 2.4];
        let a = landau_a(0.125, z);
        let scale = frobenius(&a) * norm3(z);
        for row in a {
            worst[5] = worst[5].max((row[0] * z[0] + row[1] * z[1] + row[2] * z[2]).abs() / scale);
        }
    }
    let names = ["B = B1+B2+B3", "|B2| = 2 sqrt(B1 B3)", "Q_UU = sum Q_i + R", "Q_UU = gain - loss", "weak conservation", "a(z) z = 0"];
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n}: {w:.1e}")).collect::<Vec<_>>().join(", ");
    let ok = verdict(7, worst.iter().all(|&w| w <= tol), format!("{detail} (tol 1e-12 rel)"), t.elapsed().as_secs_f64(), 120.0);
    assert!(ok);
}

#[test]
fn criterion_08_detailed_balance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let eps = 0.8;
    let c = kc(eps, Statistics::FermiDirac, &gaussian());
    let quad = CollisionQuadrature::new(4, 12).unwrap();
    let cap = eps.powi(-3);
    let mut uu = Vec::new();
    let mut fpl = Vec::new();
    for n in [16usize, 32] {
        let s = Instant::now();
        let g = VelocityGrid::new(n, 6.0 * 0.5f64.sqrt()).unwrap();
        let feq = sample(|v| cap / (1.0 + (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).exp()), g).unwrap();
        let (q, loss) = eval_q_uu_with_loss(&feq, &c, &quad).unwrap();
        uu.push(q.field.linf() / loss.field.linf());
        let _ = writeln!(std::io::stderr(), "  detailed balance n = {n}: Q_UU sweep {:.1} s", s.elapsed().as_secs_f64());
        let gm = VelocityGrid::new(n, 6.0).unwrap();
        let m = sample(maxwellian(1.0, [0.0; 3], 1.0), gm).unwrap();
        let o = eval_q_l(&m, &m, 0.125).unwrap();
        fpl.push(o.field.linf() / o.scale);
    }
    let ok_uu = uu[0] <= 1e-4 && uu[0] >= 4.0 * uu[1];
    let ok_l = fpl[0] <= 1e-4 && fpl[0] >= 4.0 * fpl[1];
    let ok = verdict(
        8,
        ok_uu && ok_l,
        format!(
            "Q_UU(f_eq)/loss: n16 {:.2e}, n32 {:.2e} (shrink {:.1}x); Q_L(M,M)/scale: n16 {:.2e}, n32 {:.2e} (shrink {:.1e}x); tol 1e-4 at n16, shrink >= 4",
            uu[0],
            uu[1],
            uu[0] / uu[1],
            fpl[0],
            fpl[1],
            fpl[0] / fpl[1]
        ),
        t.elapsed().as_secs_f64(),
        600.0,
    );
    assert!(ok);
}

#[test]
fn criterion_09_fermi_dirac_bound() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.evolve.model = ModelKind::Uu;
    cfg.validate().unwrap();
    let eps = cfg.kernel.eps;
    let pot = cfg.build_potential(std::path::Path::new(".")).unwrap();
    let f0 = cfg.initial_field(eps).unwrap();
    let model = Model::Uu { cfg: cfg.kernel_config(pot, eps).unwrap(), quad: cfg.quadrature().unwrap() };
    let econf = EvolutionConfig { t_final: cfg.evolve.t_final, ..EvolutionConfig::default() };
    let res = run(&f0, &model, &econf, cfg.norm_spec(), None).unwrap();
    let cap = eps.powi(-3);
    let m0 = res.diagnostics[0].mass;
    let max_f = res.diagnostics.iter().map(|d| d.linf).fold(0.0, f64::max);
    let drift = res.diagnostics.iter().map(|d| (d.mass - m0).abs() / m0).fold(0.0, f64::max);
    let ok = verdict(
        9,
        max_f <= cap * (1.0 + 1e-8) && drift <= 1e-3,
        format!(
            "n = {}, {} steps of dt = {:.3e}: max f = {max_f:.6} vs eps^-3 = {cap:.6}; max mass drift {drift:.2e} (tol 1e-3)",
            f0.grid.n, res.steps, res.dt
        ),
        t.elapsed().as_secs_f64(),
        1800.0,
    );
    assert!(ok);
}

#[test]
fn criterion_10_weak_semiclassical_limit() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let g = VelocityGrid::new(16, 6.0).unwrap();
    let m = sample(maxwellian(1.0, [0.0; 3], 1.0), g).unwrap();
    let quad = CollisionQuadrature::new(8, 12).unwrap();
    let eps_list = [0.4, 0.2, 0.1, 0.05];
    let mut ok = true;
    let mut detail = String::new();
    for (name, p) in [("gaussian", gaussian()), ("bump", bump())] {
        let st = weak_convergence_study(&m, &[TestPhi::Gaussian { alpha: 1.0 }], &kc(0.4, Statistics::FermiDirac, &p), &eps_list, &quad).unwrap();
        let ds: Vec<f64> = st.rows.iter().map(|r| r.d).collect();
        match &st.fits[0].1 {
            Some(fit) => {
                ok &= (0.8..=1.2).contains(&fit.slope) && fit.r_squared >= 0.95;
                detail += &format!("{name}: d = {}, slope {:.3}, r2 {:.4}; ", list(&ds), fit.slope, fit.r_squared);
            }
            None => {
                ok = false;
                detail += &format!("{name}: degenerate fit, d = {}; ", list(&ds));
            }
        }
    }
    let ok = verdict(10, ok, format!("{detail}window slope [0.8, 1.2], r2 >= 0.95"), t.elapsed().as_secs_f64(), 1200.0);
    assert!(ok);
}

#[test]
fn criterion_11_solution_expansion() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let g = VelocityGrid::new(12, 6.0).unwrap();
    let f0 = anisotropic(g);
    let quad = CollisionQuadrature::new(8, 12).unwrap();
    let econf = EvolutionConfig { t_final: 0.05, ..EvolutionConfig::default() };
    let opts = LimitOptions { control_floor: true, ..LimitOptions::default() };
    let rep = limit_study(&f0, &kc(0.4, Statistics::FermiDirac, &gaussian()), &[0.4, 0.3, 0.2, 0.1], &quad, &econf, NormSpec::l2(2.0), 1.0, &opts).unwrap();
    let rn = &rep.remainder_norms;
    let ratio = rn.iter().cloned().fold(0.0, f64::max) / rn.iter().cloned().fold(f64::INFINITY, f64::min);
    let th = rep.theta_hat.unwrap_or(f64::NAN);
    let r2 = rep.r2.unwrap_or(f64::NAN);
    let ok = verdict(
        11,
        !rep.incomplete && (0.7..=1.3).contains(&th) && r2 >= 0.9 && ratio <= 3.0,
        format!(
            "errors {}, theta_hat {th:.3} (window [0.7, 1.3]), r2 {r2:.4} (>= 0.9), ||R|| max/min {ratio:.2} (<= 3), floor {:?}, excluded {:?}, {} steps of dt {:.3e}",
            list(&rep.errors), rep.floor, rep.excluded, rep.steps, rep.dt
        ),
        t.elapsed().as_secs_f64(),
        7200.0,
    );
    assert!(ok);
}

#[test]
fn criterion_12_cubic_term_smallness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let g = VelocityGrid::new(12, 6.0).unwrap();
    let f = anisotropic(g);
    let quad = CollisionQuadrature::new(8, 12).unwrap();
    let l2 = NormSpec::l2(0.0);
    let eps_list = [0.4, 0.2, 0.1];
    let mut ratios = Vec::new();
    for &eps in &eps_list {
        let c = kc(eps, Statistics::FermiDirac, &gaussian());
        let r = eval_r(&f, &f, &f, &c, &quad).unwrap().field;
        let mut q = DistributionField::zeros(g);
        for i in 1..=3 {
            q = q.axpy(1.0, &eval_q_bilinear(&f, &f, i, &c, &quad).unwrap().field).unwrap();
        }
        ratios.push(weighted_norm(&r, l2).unwrap() / weighted_norm(&q, l2).unwrap());
    }
    let normalized: Vec<f64> = ratios.iter().zip(&eps_list).map(|(r, e)| r / e.powi(3)).collect();
    let fit = fit_rate(&eps_list, &ratios).unwrap();
    let ok = verdict(
        12,
        (2.5..=3.5).contains(&fit.slope),
        format!("||R||/||Q|| = {}, eps^-3 normalized {}, slope {:.3} (window [2.5, 3.5])", list(&ratios), list(&normalized), fit.slope),
        t.elapsed().as_secs_f64(),
        600.0,
    );
    assert!(ok);
}
