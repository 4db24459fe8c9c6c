//! Command-line front end: `moments`, `kernel-check`, `operator-check`,
//! `evolve` and `limit-study`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolve::{run, write_diagnostics, EvolutionConfig, Model};
use crate::grid::DistributionField;
use crate::kernel::{
    eval_b_component, frobenius, l1_norm_j, l1_norm_k, landau_a, landau_coefficients, momentum_transfer,
    momentum_transfer_bound, remainder_r2, total_sigma_bound, AngularQuadrature, KernelConfig, Statistics,
};
use crate::limit::{limit_study, write_report, LimitOptions};
use crate::operators::{
    eval_gain_loss, eval_q_bilinear, eval_q_l, eval_q_uu, eval_q_uu_with_loss, eval_r, weak_forms, CollisionQuadrature, TestPhi,
};
use crate::potential::Potential;

/// Stable exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_BLOW_UP: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "qkinetic", version, about = "Quantum Boltzmann and Landau solvers with a weak-coupling limit harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "./out")]
    pub out: PathBuf,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reserved; every algorithm is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum Command {
    /// Potential moments and assumption report.
    Moments,
    /// Kernel identities and bounds.
    KernelCheck,
    /// Operator identities, conservation and equilibria.
    OperatorCheck,
    /// Time evolution with diagnostics and snapshots.
    Evolve,
    /// Convergence study against the Landau solution.
    LimitStudy,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Domain(_) | Error::Precondition(_) | Error::Data(_) => EXIT_VALIDATION,
        Error::DegenerateFit(_) => EXIT_DEGENERATE,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config { path: "--config".into(), msg: "a configuration file is required".into() })?;
    let (mut cfg, base) = RunConfig::load(path)?;
    cfg.validate()?;
    let out = cfg.output.directory.clone().unwrap_or_else(|| cli.out.clone());
    cfg.output.directory = Some(out.clone());
    std::fs::create_dir_all(&out)?;
    let pot = cfg.build_potential(&base)?;
    match cli.command {
        Command::Moments => moments_cmd(&cfg, &pot, &out),
        Command::KernelCheck => emit_checks(&kernel_checks(&cfg, pot)?, &out.join("kernel_check.csv"), cli.quiet),
        Command::OperatorCheck => emit_checks(&operator_checks(&cfg, pot)?, &out.join("operator_check.csv"), cli.quiet),
        Command::Evolve => evolve_cmd(&cfg, pot, &out),
        Command::LimitStudy => limit_cmd(&cfg, pot, &out),
    }
}

fn moments_cmd(cfg: &RunConfig, pot: &Potential, out: &Path) -> Result<i32> {
    let theta = cfg.limit.theta;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(out.join("moments.csv"))?;
    w.write_record(["a", "I_a", "Iprime_a"])?;
    let mut text = String::from("a,I_a,Iprime_a\n");
    for a in [0.0, 1.0, 2.0, 3.0, 3.0 + theta, 4.0] {
        let (i, ip) = (pot.moment_i(a)?, pot.moment_iprime(a)?);
        w.write_record([a.to_string(), format!("{i:.12}"), format!("{ip:.12}")])?;
        text.push_str(&format!("{a},{i:.12},{ip:.12}\n"));
    }
    w.flush()?;
    let rep = pot.check_assumptions(theta)?;
    text.push_str(&format!("a1_holds,{}\na2_theta,{:?}\n", rep.a1_holds, rep.a2_theta));
    std::fs::write(out.join("assumptions.json"), serde_json::to_string_pretty(&rep)?)?;
    print!("{text}");
    Ok(EXIT_OK)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_check(name: &str, got: f64, want: f64, tol: f64) -> Check {
    let dev = (got - want).abs();
    let value = if want != 0.0 { dev / want.abs() } else { dev };
    Check { check: name.into(), value, tolerance: tol, pass: value <= tol }
}

fn bound_check(name: &str, got: f64, bound: f64) -> Check {
    Check { check: name.into(), value: got, tolerance: bound, pass: got <= bound * (1.0 + 1e-12) }
}

fn emit_checks(checks: &[Check], path: &Path, quiet: bool) -> Result<i32> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["check", "value", "tolerance", "pass"])?;
    for c in checks {
        w.write_record([c.check.clone(), format!("{:.6e}", c.value), format!("{:.1e}", c.tolerance), c.pass.to_string()])?;
        if !quiet {
            println!("{},{:.6e},{:.1e},{}", c.check, c.value, c.tolerance, c.pass);
        }
    }
    w.flush()?;
    Ok(if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// The kernel-level identities on the configured potential and ε.
pub fn kernel_checks(cfg: &RunConfig, pot: std::sync::Arc<Potential>) -> Result<Vec<Check>> {
    let kc = cfg.kernel_config(pot.clone(), cfg.kernel.eps)?;
    let quad = AngularQuadrature::new(cfg.quadrature.n_r.max(32), cfg.quadrature.n_phi)?;
    let i3 = pot.moment_i(3.0)?;
    let ip3 = pot.moment_iprime(3.0)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let mut out = vec![
        rel_check("l1_norm_J", l1_norm_j(&kc)?, 16.0 * pi2 * i3, 1e-6),
        rel_check("b3_mass", crate::kernel::b3_mass(&kc, &quad)?, 16.0 * pi2 * i3, 1e-6),
        bound_check("l1_norm_K0", l1_norm_k(&kc, 0.0)?, 64.0 * pi2 * (i3 + ip3)),
    ];
    let mut dev = 0.0f64;
    for z in [0.05, 0.3, 1.0, 2.0] {
        for th in [0.0, 0.4, 1.0, std::f64::consts::FRAC_PI_2] {
            let b: Vec<f64> = (1..=3).map(|i| eval_b_component(&kc, i, z, th)).collect::<Result<_>>()?;
            let full = crate::kernel::eval_b(&kc, z, th)?;
            let scale = b[0] + b[1].abs() + b[2];
            if scale > 0.0 {
                dev = dev.max((b.iter().sum::<f64>() - full).abs() / scale);
                dev = dev.max((b[1].abs() - 2.0 * (b[0] * b[2]).sqrt()).abs() / scale);
            }
        }
    }
    out.push(Check { check: "component_identities".into(), value: dev, tolerance: 1e-12, pass: dev <= 1e-12 });
    let mut worst = 0.0f64;
    for z in [0.1, 0.5, 1.0, 3.0] {
        let bound = momentum_transfer_bound(&kc, z)?;
        if bound > 0.0 {
            worst = worst.max(momentum_transfer(&kc, z, &quad)? / bound);
        }
    }
    out.push(bound_check("momentum_transfer_over_bound", worst, 1.0));
    let sb = total_sigma_bound(&kc, &quad)?;
    out.push(bound_check("total_sigma_sup", sb.sup, sb.bound));
    let z = [1.0, 0.0, 0.0];
    let lc = landau_coefficients(&kc, z, &AngularQuadrature::new(64, cfg.quadrature.n_phi)?)?;
    let t_want = -8.0 * std::f64::consts::PI * i3 + remainder_r2(&kc, z)?[0];
    out.push(rel_check("T_formula", lc.t[0], t_want, 1e-6));
    let a = landau_a(i3, [0.3, -1.2, 0.7]);
    let az: f64 = (0..3).map(|i| (a[i][0] * 0.3 - a[i][1] * 1.2 + a[i][2] * 0.7).abs()).sum();
    out.push(Check { check: "a_times_z".into(), value: az, tolerance: 1e-12, pass: az <= 1e-12 * frobenius(&a).max(1.0) });
    Ok(out)
}

/// Operator identities and equilibria on the configured grid.
pub fn operator_checks(cfg: &RunConfig, pot: std::sync::Arc<Potential>) -> Result<Vec<Check>> {
    let eps = cfg.kernel.eps;
    let kc = cfg.kernel_config(pot.clone(), eps)?;
    let quad = cfg.quadrature()?;
    let f = cfg.initial_field(eps)?;
    let mut out = Vec::new();
    let q = eval_q_uu(&f, &kc, &quad)?.field;
    let scale = q.linf().max(f64::MIN_POSITIVE);
    let mut sum = eval_r(&f, &f, &f, &kc, &quad)?.field;
    for i in 1..=3 {
        sum = sum.axpy(1.0, &eval_q_bilinear(&f, &f, i, &kc, &quad)?.field)?;
    }
    let dev = sum.sub(&q)?.linf() / scale;
    out.push(Check { check: "decomposition".into(), value: dev, tolerance: 1e-10, pass: dev <= 1e-10 });
    if kc.statistics == Statistics::FermiDirac {
        let (g, l) = eval_gain_loss(&f, &kc, &quad)?;
        let s = l.field.linf().max(f64::MIN_POSITIVE);
        let dev = g.field.sub(&l.field)?.sub(&q)?.linf() / s;
        out.push(Check { check: "gain_minus_loss".into(), value: dev, tolerance: 1e-12, pass: dev <= 1e-12 });
        let neg = g.field.min().min(l.field.min());
        out.push(Check { check: "gain_loss_nonnegative".into(), value: neg, tolerance: 0.0, pass: neg >= 0.0 });
    }
    let names = ["weak_mass", "weak_momentum_1", "weak_momentum_2", "weak_momentum_3", "weak_energy"];
    let phis = [TestPhi::One, TestPhi::Coord(0), TestPhi::Coord(1), TestPhi::Coord(2), TestPhi::Energy];
    for (name, w) in names.into_iter().zip(weak_forms(&f, &phis, &kc, &quad)?) {
        let v = if w.scale > 0.0 { w.value.abs() / w.scale } else { w.value.abs() };
        out.push(Check { check: name.into(), value: v, tolerance: 1e-12, pass: v <= 1e-12 });
    }
    let m = crate::grid::moments(&q);
    let l1 = q.l1();
    let mr = if l1 > 0.0 { m.mass.abs() / l1 } else { 0.0 };
    out.push(Check { check: "strong_mass_residual".into(), value: mr, tolerance: 1e-3, pass: mr <= 1e-3 });
    if kc.statistics == Statistics::FermiDirac {
        let (res, sc) = fd_equilibrium_residual(cfg, &kc, &quad)?;
        out.push(Check { check: "fd_equilibrium_residual".into(), value: res / sc, tolerance: EQUILIBRIUM_TOL, pass: res / sc <= EQUILIBRIUM_TOL });
    }
    let (res, sc) = landau_maxwellian_residual(cfg.grid.n, pot.moment_i(3.0)?)?;
    out.push(Check { check: "landau_maxwellian_residual".into(), value: res / sc, tolerance: EQUILIBRIUM_TOL, pass: res / sc <= EQUILIBRIUM_TOL });
    Ok(out)
}

/// Interpolation-limited tolerance of the equilibrium residual checks.
pub const EQUILIBRIUM_TOL: f64 = 5e-2;

/// `(‖Q_UU(f_eq)‖_∞, ‖loss(f_eq)‖_∞)` at the Fermi–Dirac equilibrium with
/// `β = 1`, `c = 0` on the configured grid size.
pub fn fd_equilibrium_residual(cfg: &RunConfig, kc: &KernelConfig, quad: &CollisionQuadrature) -> Result<(f64, f64)> {
    let g = crate::grid::VelocityGrid::new(cfg.grid.n, 6.0 * 0.5f64.sqrt())?;
    let cap = kc.eps.powi(-3);
    let f = crate::grid::sample(|v| cap / (1.0 + (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).exp()), g)?;
    let (q, loss) = eval_q_uu_with_loss(&f, kc, quad)?;
    Ok((q.field.linf(), loss.field.linf()))
}

/// `(‖Q_L(M, M)‖_∞, diffusion scale)` for the unit Maxwellian at `L = 6`.
pub fn landau_maxwellian_residual(n: usize, i3: f64) -> Result<(f64, f64)> {
    let g = crate::grid::VelocityGrid::new(n, 6.0)?;
    let m = crate::grid::sample(crate::grid::maxwellian(1.0, [0.0; 3], 1.0), g)?;
    let o = eval_q_l(&m, &m, i3)?;
    Ok((o.field.linf(), o.scale.max(f64::MIN_POSITIVE)))
}

fn evolution_config(cfg: &RunConfig, t_final: f64) -> EvolutionConfig {
    let e = &cfg.evolve;
    EvolutionConfig { dt: e.dt, t_final, clamp: e.clamp, conservation_projection: e.conservation_projection, snapshot_stride: e.snapshot_stride }
}

fn evolve_cmd(cfg: &RunConfig, pot: std::sync::Arc<Potential>, out: &Path) -> Result<i32> {
    let eps = cfg.kernel.eps;
    let f0 = cfg.initial_field(eps)?;
    let model = match cfg.evolve.model {
        crate::config::ModelKind::Uu => Model::Uu { cfg: cfg.kernel_config(pot, eps)?, quad: cfg.quadrature()? },
        crate::config::ModelKind::Landau => Model::Landau { i3: pot.moment_i(3.0)? },
    };
    let econf = evolution_config(cfg, cfg.evolve.t_final);
    let snaps = (econf.snapshot_stride > 0).then(|| out.join("snapshots"));
    let r = run(&f0, &model, &econf, cfg.norm_spec(), snaps.as_deref())?;
    write_diagnostics(&r.diagnostics, &out.join("diagnostics.csv"))?;
    let last = r.diagnostics.last().expect("at least the initial record");
    let first = &r.diagnostics[0];
    let summary = serde_json::json!({
        "config": cfg,
        "dt": r.dt,
        "steps": r.steps,
        "mass_drift": if first.mass != 0.0 { (last.mass - first.mass).abs() / first.mass } else { 0.0 },
        "max_linf": r.diagnostics.iter().map(|d| d.linf).fold(0.0, f64::max),
        "l2l_distance_from_initial": crate::grid::weighted_norm(&r.final_state.sub(&f0)?, cfg.norm_spec())?,
    });
    std::fs::write(out.join("evolve_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    crate::grid::write_field(&r.final_state, &out.join("final.skf"))?;
    println!("{}", serde_json::to_string(&summary["mass_drift"])?);
    Ok(EXIT_OK)
}

fn limit_cmd(cfg: &RunConfig, pot: std::sync::Arc<Potential>, out: &Path) -> Result<i32> {
    let f0: DistributionField = cfg.initial_field(cfg.kernel.eps)?;
    let template = cfg.kernel_config(pot, cfg.kernel.eps)?;
    let econf = evolution_config(cfg, cfg.limit.t_final);
    let opts = LimitOptions { audit_landau: false, control_floor: cfg.limit.control_floor, out_dir: Some(out.join("remainders")) };
    let report = limit_study(&f0, &template, &cfg.kernel.eps_list, &cfg.quadrature()?, &econf, cfg.limit_norm_spec(), cfg.limit.theta, &opts)?;
    write_report(&report, &serde_json::to_value(cfg)?, out)?;
    let mut so = std::io::stdout();
    writeln!(so, "theta_hat={:?} r2={:?} incomplete={} degenerate={}", report.theta_hat, report.r2, report.incomplete, report.degenerate)?;
    Ok(if report.incomplete {
        EXIT_BLOW_UP
    } else if report.degenerate {
        EXIT_DEGENERATE
    } else {
        EXIT_OK
    })
}
