use std::sync::Arc;

use proptest::prelude::*;
use qkinetic::error::Error;
use qkinetic::evolve::EvolutionConfig;
use qkinetic::grid::{maxwellian, sample, NormSpec, VelocityGrid};
use qkinetic::kernel::{KernelConfig, Statistics};
use qkinetic::limit::{fit_rate, limit_study, LimitOptions};
use qkinetic::operators::CollisionQuadrature;
use qkinetic::potential::Potential;

const EPS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

fn template(st: Statistics) -> KernelConfig {
    KernelConfig::new(0.4, st, Arc::new(Potential::gaussian(1.0, 1.0).unwrap())).unwrap()
}

#[test]
fn landau_self_comparison_is_degenerate() {
    let g = VelocityGrid::new(8, 5.0).unwrap();
    let f0 = sample(maxwellian(1.0, [0.2, 0.0, 0.0], 1.0), g).unwrap();
    let econf = EvolutionConfig { t_final: 0.02, ..Default::default() };
    let opts = LimitOptions { audit_landau: true, ..Default::default() };
    let quad = CollisionQuadrature::new(4, 4).unwrap();
    let r = limit_study(&f0, &template(Statistics::BoseEinstein), &EPS, &quad, &econf, NormSpec::l2(2.0), 1.0, &opts).unwrap();
    assert!(r.errors.iter().all(|&e| e == 0.0));
    assert!(r.degenerate && r.theta_hat.is_none());
}

#[test]
fn fermi_dirac_eps_above_the_data_bound_is_rejected() {
    let g = VelocityGrid::new(8, 4.0).unwrap();
    let f0 = sample(maxwellian(20.0, [0.0; 3], 0.5), g).unwrap();
    let quad = CollisionQuadrature::new(4, 4).unwrap();
    let r = limit_study(&f0, &template(Statistics::FermiDirac), &[0.9, 0.5], &quad, &EvolutionConfig::default(), NormSpec::l2(2.0), 1.0, &LimitOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))), "{r:?}");
}

#[test]
fn unsorted_eps_list_is_a_domain_error() {
    let g = VelocityGrid::new(8, 4.0).unwrap();
    let f0 = sample(maxwellian(1.0, [0.0; 3], 1.0), g).unwrap();
    let quad = CollisionQuadrature::new(4, 4).unwrap();
    let r = limit_study(&f0, &template(Statistics::BoseEinstein), &[0.1, 0.2], &quad, &EvolutionConfig::default(), NormSpec::l2(2.0), 1.0, &LimitOptions::default());
    assert!(matches!(r, Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn fit_recovers_rate_under_one_percent_noise(
        theta in 0.2f64..3.0,
        c in 1e-6f64..1e3,
        noise in proptest::collection::vec(-0.01f64..0.01, 4),
    ) {
        let errs: Vec<f64> = EPS.iter().zip(&noise).map(|(e, n)| c * e.powf(theta) * (1.0 + n)).collect();
        let fit = fit_rate(&EPS, &errs).unwrap();
        prop_assert!((fit.slope - theta).abs() < 0.05, "{} vs {}", fit.slope, theta);
        prop_assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn slope_is_invariant_under_rescaling(
        errs in proptest::collection::vec(1e-6f64..1.0, 4),
        k in 1e-4f64..1e4,
    ) {
        prop_assume!(errs.windows(2).any(|w| w[0] != w[1]));
        let a = fit_rate(&EPS, &errs).unwrap();
        let scaled: Vec<f64> = errs.iter().map(|e| k * e).collect();
        let b = fit_rate(&EPS, &scaled).unwrap();
        prop_assert!((a.slope - b.slope).abs() <= 1e-9 * (1.0 + a.slope.abs()));
        prop_assert!((b.intercept - a.intercept - k.ln()).abs() <= 1e-9 * (1.0 + a.intercept.abs()));
    }
}
