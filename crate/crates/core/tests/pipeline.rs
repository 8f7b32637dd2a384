//! End-to-end checks through the public API.

use fqt_core::analysis::{amplification_analytic, currents_exact_low_t, ClosedFormInputs};
use fqt_core::cumulants::{cumulants, cumulants_of, mean_and_variance, DerivativeScheme, PipelineOptions};
use fqt_core::liouvillian::{low_t_rate_model, LowTVariant};
use fqt_core::modulation::{weights_pi_flip, weights_sinusoidal, weights_unmodulated};
use fqt_core::optimizer::{beta_for_spectrum, SweepPoint};
use fqt_core::{Bath, HarmonicSpectrum, SystemParams};

fn params(t_b: f64) -> SystemParams {
    SystemParams::new(1.0, 0.2, t_b, 0.02).unwrap()
}

fn protocols(nu: f64) -> Vec<HarmonicSpectrum> {
    vec![
        weights_unmodulated(),
        weights_sinusoidal(0.8, nu).unwrap(),
        weights_pi_flip(nu).unwrap(),
    ]
}

#[test]
fn printed_low_t_matrix_reproduces_closed_forms() {
    for t_b in [0.05, 0.08, 0.1, 0.12] {
        let p = params(t_b);
        for s in protocols(0.2) {
            let cf = currents_exact_low_t(&ClosedFormInputs::new(&p, &s).unwrap(), 1.0).unwrap();
            let rm = low_t_rate_model(&p, &s, LowTVariant::AsPrinted).unwrap();
            for (b, want) in [(Bath::Emitter, cf.0), (Bath::Collector, cf.2)] {
                let j = mean_and_variance(&rm, b, DerivativeScheme::Jet).unwrap().0;
                assert!(((j - want) / want).abs() < 1e-8, "T_B={t_b} {b:?}: {j} vs {want}");
            }
        }
    }
}

#[test]
fn conserving_builders_conserve_energy() {
    for t_b in [0.03, 0.1, 0.17] {
        for nu in [0.001, 0.2, 1.0] {
            for s in protocols(nu) {
                let c = cumulants(&params(t_b), &s, &PipelineOptions::default()).unwrap();
                let jmax = c.mean.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(c.mean.iter().sum::<f64>().abs() <= 1e-10 * jmax);
                assert!(c.variance.iter().all(|&v| v > 0.0));
            }
        }
        let rm = low_t_rate_model(&params(t_b), &weights_unmodulated(), LowTVariant::Conserving).unwrap();
        let c = cumulants_of(&rm, DerivativeScheme::Jet).unwrap();
        assert!(c.mean.iter().sum::<f64>().abs() <= 1e-10 * c.mean[0].abs());
    }
}

#[test]
fn probe_beta_approaches_analytic_plateau() {
    let m = (-5.0f64).exp();
    let pi = weights_pi_flip(0.001).unwrap();
    let want = amplification_analytic(m, 8.0 / (std::f64::consts::PI * std::f64::consts::PI)).unwrap().0;
    let point = SweepPoint { t_b: 0.05, nu: 0.001 };
    let b = beta_for_spectrum(&params(point.t_b), &pi, point.t_b, 1e-3).unwrap();
    assert!(!b.diverged);
    assert!(((b.beta_plus - want) / want).abs() < 0.01, "{} vs {want}", b.beta_plus);
    assert!((b.beta_plus + b.beta_minus + 1.0).abs() < 1e-6);
}
