use std::sync::Arc;

use qkinetic::evolve::{run, EvolutionConfig, Model};
use qkinetic::grid::{maxwellian, moments, sample, DistributionField, NormSpec, VelocityGrid};
use qkinetic::kernel::{KernelConfig, Statistics};
use qkinetic::operators::CollisionQuadrature;
use qkinetic::potential::Potential;

fn uu(eps: f64, st: Statistics) -> Model {
    let p = Arc::new(Potential::gaussian(1.0, 1.0).unwrap());
    Model::Uu { cfg: KernelConfig::new(eps, st, p).unwrap(), quad: CollisionQuadrature::new(4, 4).unwrap() }
}

fn anisotropic(g: VelocityGrid) -> DistributionField {
    sample(
        |v| {
            let e = v[0] * v[0] / 1.3 + v[1] * v[1] + v[2] * v[2] / 0.7;
            (-e / 2.0).exp() / (2.0 * std::f64::consts::PI).powf(1.5) / (1.3f64 * 0.7).sqrt()
        },
        g,
    )
    .unwrap()
}

#[test]
fn zero_data_stays_zero() {
    let g = VelocityGrid::new(8, 4.0).unwrap();
    let f0 = DistributionField::zeros(g);
    let r = run(&f0, &uu(0.5, Statistics::BoseEinstein), &EvolutionConfig::default(), NormSpec::l2(2.0), None).unwrap();
    assert!(r.final_state.values.iter().all(|&v| v == 0.0));
    assert!(r.diagnostics.iter().all(|d| d.mass == 0.0 && d.rhs_norm == 0.0));
}

#[test]
fn landau_keeps_a_maxwellian() {
    let g = VelocityGrid::new(16, 6.0).unwrap();
    let m = sample(maxwellian(1.0, [0.0; 3], 1.0), g).unwrap();
    let econf = EvolutionConfig { dt: Some(0.02), t_final: 0.1, ..Default::default() };
    let r = run(&m, &Model::Landau { i3: 0.125 }, &econf, NormSpec::l2(2.0), None).unwrap();
    let dev = r.final_state.sub(&m).unwrap().linf() / m.linf();
    assert!(dev <= 1e-4, "{dev:e}");
}

#[test]
fn runs_are_bitwise_reproducible_across_thread_counts() {
    let f0 = anisotropic(VelocityGrid::new(8, 5.0).unwrap());
    let model = uu(0.4, Statistics::FermiDirac);
    let econf = EvolutionConfig { dt: Some(0.01), t_final: 0.02, ..Default::default() };
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&f0, &model, &econf, NormSpec::l2(2.0), None).unwrap().final_state)
    };
    let a = go(1);
    assert_eq!(a, go(1));
    assert_eq!(a, go(3));
}

#[test]
fn fermi_dirac_states_respect_the_cap() {
    let eps: f64 = 0.8;
    let cap = eps.powi(-3);
    let g = VelocityGrid::new(8, 6.0 * 0.5f64.sqrt()).unwrap();
    let f0 = sample(|v| 0.9 * cap / (1.0 + (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).exp()), g).unwrap();
    let econf = EvolutionConfig { dt: Some(0.025), t_final: 0.1, ..Default::default() };
    let r = run(&f0, &uu(eps, Statistics::FermiDirac), &econf, NormSpec::l2(2.0), None).unwrap();
    assert!(r.diagnostics.iter().all(|d| d.linf <= cap), "{:?}", r.diagnostics.iter().map(|d| d.linf).collect::<Vec<_>>());
}

#[test]
fn projection_conserves_discrete_moments() {
    let f0 = anisotropic(VelocityGrid::new(8, 5.0).unwrap());
    let econf = EvolutionConfig { dt: Some(0.02), t_final: 0.06, conservation_projection: true, ..Default::default() };
    let r = run(&f0, &uu(0.5, Statistics::BoseEinstein), &econf, NormSpec::l2(2.0), None).unwrap();
    let (a, b) = (moments(&f0), moments(&r.final_state));
    assert!((a.mass - b.mass).abs() <= 1e-12 * a.mass, "{} {}", a.mass, b.mass);
    assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy);
    for k in 0..3 {
        assert!((a.momentum[k] - b.momentum[k]).abs() <= 1e-12 * a.mass);
    }
}
