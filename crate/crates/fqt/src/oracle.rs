//! Independent routes to the first two cumulants, used to cross-check the
//! characteristic-polynomial pipeline.

use fqt_core::cumulants::{dominant_eigenvalue_of, finite_time_cgf_of, mean_and_variance, DerivativeScheme, UNIFORM};
use fqt_core::linalg::{eigenvalues, to_complex};
use fqt_core::liouvillian::RateModel;
use fqt_core::Bath;

/// Tilt step of the Richardson differences.
pub const TILT_STEP: f64 = 5e-2;

/// (mean, variance) of one bath by three methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub polynomial: (f64, f64),
    pub eigenvalue: (f64, f64),
    pub cgf_slope: (f64, f64),
}

impl Triangle {
    /// Largest pairwise relative disagreement over mean and variance.
    pub fn max_rel(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let all = [self.polynomial, self.eigenvalue, self.cgf_slope];
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                m = m.max(rel(all[i].0, all[j].0)).max(rel(all[i].1, all[j].1));
            }
        }
        m
    }
}

/// First and second derivative at 0 by central differences with one
/// Richardson level.
fn richardson<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> (f64, f64) {
    let f0 = f(0.0);
    let (p1, m1, p2, m2) = (f(h), f(-h), f(h / 2.0), f(-h / 2.0));
    let d1 = |a: f64, b: f64, h: f64| (a - b) / (2.0 * h);
    let d2 = |a: f64, b: f64, h: f64| (a - 2.0 * f0 + b) / (h * h);
    (
        (4.0 * d1(p2, m2, h / 2.0) - d1(p1, m1, h)) / 3.0,
        (4.0 * d2(p2, m2, h / 2.0) - d2(p1, m1, h)) / 3.0,
    )
}

fn tilt(bath: Bath, u: f64) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[bath.index()] = u;
    v
}

/// Relaxation rate of the untilted generator (smallest nonzero |Re λ|).
pub fn gap(rm: &RateModel) -> f64 {
    let ev = eigenvalues(&to_complex(&rm.matrix()));
    let mut re: Vec<f64> = ev.iter().map(|z| -z.re).collect();
    re.sort_by(f64::total_cmp);
    re[1]
}

pub fn triangle(rm: &RateModel, bath: Bath) -> fqt_core::Result<Triangle> {
    let polynomial = mean_and_variance(rm, bath, DerivativeScheme::Jet)?;
    let eigenvalue = richardson(
        |u| dominant_eigenvalue_of(&to_complex(&rm.tilted_real(tilt(bath, u)))).re,
        TILT_STEP,
    );
    // slope of ln Z(t) between t₁ and 2t₁, with t₁ many relaxation times in
    let t1 = 60.0 / gap(rm);
    let mut err = None;
    let slope = |u: f64| {
        let m = to_complex(&rm.tilted_real(tilt(bath, u)));
        let c = |t: f64| finite_time_cgf_of(&m, &UNIFORM, t).map(|z| z.re);
        match (c(t1), c(2.0 * t1)) {
            (Ok(a), Ok(b)) => (b - a) / t1,
            (Err(e), _) | (_, Err(e)) => {
                err.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let cgf_slope = richardson(slope, TILT_STEP);
    if let Some(e) = err {
        return Err(e);
    }
    Ok(Triangle {
        polynomial,
        eigenvalue,
        cgf_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use fqt_core::liouvillian::full_rate_model;
    use fqt_core::modulation::weights_sinusoidal;
    use fqt_core::SystemParams;

    #[test]
    fn three_routes_agree_at_a_modulated_point() {
        let p = SystemParams::new(1.0, 0.2, 0.1, 0.02).unwrap();
        let rm = full_rate_model(&p, &weights_sinusoidal(0.8, 0.2).unwrap(), false).unwrap();
        for b in Bath::ALL {
            let t = triangle(&rm, b).unwrap();
            assert!(t.max_rel() < 1e-4, "{b:?} {t:?}");
        }
    }
}
