//! Steady-state populations and current cumulants from the characteristic
//! polynomial of the tilted generator, plus the eigenvalue and finite-time
//! propagation routes used to cross-check it.
//!
//! With P(z) = det(L(u) − z) = Σ Aₙ(u) zⁿ and λ(u) the root through zero,
//! implicit differentiation at u = 0 gives
//! ⟨J⟩ = −A₀′/A₁ and Var = −(A₀″ + 2A₁′⟨J⟩ + 2A₂⟨J⟩²)/A₁.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{char_poly, eigenvalues, expm, mat_vec, null_vector_normalized, Mat4, C64};
use crate::liouvillian::{rate_model, Builder, RateModel, TiltedGenerator};
use crate::model::{Bath, SystemParams};
use crate::modulation::HarmonicSpectrum;

/// How Aₙ′ and Aₙ″ are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DerivativeScheme {
    /// Exact second-order Taylor propagation through the recursion.
    Jet,
    /// Central differences in the real tilt with one Richardson level.
    FiniteDifference { step: f64 },
}

impl Default for DerivativeScheme {
    fn default() -> Self {
        DerivativeScheme::Jet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineOptions {
    pub builder: Builder,
    pub scheme: DerivativeScheme,
}

/// Per-bath cumulants, indexed by [`Bath::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CumulantSet {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    /// Var/⟨J⟩, `None` where the mean current vanishes.
    pub fano: [Option<f64>; 3],
    pub populations: [f64; 4],
}

impl CumulantSet {
    pub fn mean_of(&self, bath: Bath) -> f64 {
        self.mean[bath.index()]
    }
    pub fn variance_of(&self, bath: Bath) -> f64 {
        self.variance[bath.index()]
    }
    pub fn fano_of(&self, bath: Bath) -> Option<f64> {
        self.fano[bath.index()]
    }
    /// |Σ⟨J_α⟩| / max|⟨J_α⟩|.
    pub fn conservation_defect(&self) -> f64 {
        let s: f64 = self.mean.iter().sum();
        let m = self.mean.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m == 0.0 {
            s.abs()
        } else {
            s.abs() / m
        }
    }
}

/// Coefficients A₀…A₄ of det(L − z) for a tilted generator.
pub fn char_poly_coeffs(g: &TiltedGenerator) -> Result<[C64; 5]> {
    char_poly(&g.matrix)
}

/// A₀…A₂ and their first and second tilt derivatives at u = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyDerivatives {
    /// [A₀, A₀′, A₀″]
    pub a0: [f64; 3],
    /// [A₁, A₁′, A₁″]
    pub a1: [f64; 3],
    /// [A₂, A₂′, A₂″]
    pub a2: [f64; 3],
}

pub fn poly_derivatives(rm: &RateModel, bath: Bath, scheme: DerivativeScheme) -> Result<PolyDerivatives> {
    match scheme {
        DerivativeScheme::Jet => {
            let p = char_poly(&rm.tilted_jet(bath, 0.0))?;
            Ok(PolyDerivatives {
                a0: [p[0].v, p[0].d1, p[0].d2],
                a1: [p[1].v, p[1].d1, p[1].d2],
                a2: [p[2].v, p[2].d1, p[2].d2],
            })
        }
        DerivativeScheme::FiniteDifference { step } => {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::domain(format!("finite-difference step must be > 0, got {step}")));
            }
            let k = bath.index();
            let at = |u: f64| -> Result<[f64; 5]> {
                let mut v = [0.0; 3];
                v[k] = u;
                char_poly(&rm.tilted_real(v))
            };
            let p0 = at(0.0)?;
            let d = |h: f64| -> Result<([f64; 5], [f64; 5])> {
                let (p, m) = (at(h)?, at(-h)?);
                let mut d1 = [0.0; 5];
                let mut d2 = [0.0; 5];
                for n in 0..5 {
                    d1[n] = (p[n] - m[n]) / (2.0 * h);
                    d2[n] = (p[n] - 2.0 * p0[n] + m[n]) / (h * h);
                }
                Ok((d1, d2))
            };
            let (c1, c2) = d(step)?;
            let (f1, f2) = d(step / 2.0)?;
            let r = |n: usize| -> [f64; 3] {
                [p0[n], (4.0 * f1[n] - c1[n]) / 3.0, (4.0 * f2[n] - c2[n]) / 3.0]
            };
            Ok(PolyDerivatives {
                a0: r(0),
                a1: r(1),
                a2: r(2),
            })
        }
    }
}

fn scale_of(m: &Mat4<f64>) -> f64 {
    m.iter().flat_map(|r| r.iter()).fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Mean and variance of the current into the system from `bath`.
pub fn mean_and_variance(rm: &RateModel, bath: Bath, scheme: DerivativeScheme) -> Result<(f64, f64)> {
    let d = poly_derivatives(rm, bath, scheme)?;
    let norm = scale_of(&rm.matrix()).max(f64::MIN_POSITIVE);
    let a1 = d.a1[0];
    if !a1.is_finite() || a1.abs() < 1e-13 * norm * norm * norm {
        return Err(Error::DegenerateSpectrum { a1: a1.abs() });
    }
    let j = -d.a0[1] / a1;
    let terms = [d.a0[2], 2.0 * d.a1[1] * j, 2.0 * d.a2[0] * j * j];
    let var = -(terms[0] + terms[1] + terms[2]) / a1;
    if !j.is_finite() || !var.is_finite() {
        return Err(Error::Numerical("non-finite cumulant".into()));
    }
    let mag = terms.iter().map(|t| t.abs()).sum::<f64>() / a1.abs();
    if var < -1e-10 * mag.max(f64::MIN_POSITIVE) {
        return Err(Error::NumericalConsistency(format!(
            "negative variance {var:.3e} for bath {}",
            bath.label()
        )));
    }
    Ok((j, var.max(0.0)))
}

/// Normalized stationary populations of the χ = 0 generator.
pub fn steady_state_of(m: &Mat4<f64>) -> Result<[f64; 4]> {
    let (rho, cond) = null_vector_normalized(m);
    if !(cond > 1e-11) || rho.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateGenerator(format!(
            "null space is not one-dimensional (conditioning {cond:.3e})"
        )));
    }
    let sum: f64 = rho.iter().sum();
    if rho.iter().any(|x| *x < -1e-10) || (sum - 1.0).abs() > 1e-10 {
        return Err(Error::NumericalConsistency(format!("invalid stationary populations {rho:?}")));
    }
    Ok(rho)
}

pub fn steady_state(g: &TiltedGenerator) -> Result<[f64; 4]> {
    if !g.chi.is_zero() {
        return Err(Error::domain("steady state needs the untilted generator"));
    }
    steady_state_of(&g.real_matrix())
}

/// All cumulants for a rate model.
pub fn cumulants_of(rm: &RateModel, scheme: DerivativeScheme) -> Result<CumulantSet> {
    let populations = steady_state_of(&rm.matrix())?;
    let mut mean = [0.0; 3];
    let mut variance = [0.0; 3];
    let mut fano = [None; 3];
    for bath in Bath::ALL {
        let (j, v) = mean_and_variance(rm, bath, scheme)?;
        let k = bath.index();
        mean[k] = j;
        variance[k] = v;
        fano[k] = if j != 0.0 && j.abs() > 1e-12 * v { Some(v / j) } else { None };
    }
    Ok(CumulantSet {
        mean,
        variance,
        fano,
        populations,
    })
}

pub fn cumulants(params: &SystemParams, spectrum: &HarmonicSpectrum, opts: &PipelineOptions) -> Result<CumulantSet> {
    let rm = rate_model(params, spectrum, opts.builder)?;
    cumulants_of(&rm, opts.scheme)
}

pub fn mean_current(params: &SystemParams, spectrum: &HarmonicSpectrum, bath: Bath, opts: &PipelineOptions) -> Result<f64> {
    let rm = rate_model(params, spectrum, opts.builder)?;
    Ok(mean_and_variance(&rm, bath, opts.scheme)?.0)
}

pub fn variance(params: &SystemParams, spectrum: &HarmonicSpectrum, bath: Bath, opts: &PipelineOptions) -> Result<f64> {
    let rm = rate_model(params, spectrum, opts.builder)?;
    Ok(mean_and_variance(&rm, bath, opts.scheme)?.1)
}

/// Eigenvalue with the largest real part.
pub fn dominant_eigenvalue_of(m: &Mat4<C64>) -> C64 {
    let ev = eigenvalues(m);
    let mut best = ev[0];
    for z in ev.iter().skip(1) {
        if z.re > best.re {
            best = *z;
        }
    }
    best
}

pub fn dominant_eigenvalue(g: &TiltedGenerator) -> C64 {
    dominant_eigenvalue_of(&g.matrix)
}

/// ln Σᵢ (e^{Lt}ρ₀)ᵢ.
pub fn finite_time_cgf_of(m: &Mat4<C64>, rho0: &[f64; 4], t: f64) -> Result<C64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let total: f64 = rho0.iter().sum();
    if rho0.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-10 {
        return Err(Error::domain("initial populations must be a probability vector"));
    }
    let mut lt = *m;
    for row in lt.iter_mut() {
        for v in row.iter_mut() {
            *v *= t;
        }
    }
    let e = expm(&lt)?;
    let r = rho0.map(|x| C64::new(x, 0.0));
    let s: C64 = mat_vec(&e, &r).iter().sum();
    let c = s.ln();
    if !(c.re.is_finite() && c.im.is_finite()) {
        return Err(Error::Numerical("finite-time generating function overflowed".into()));
    }
    Ok(c)
}

pub fn finite_time_cgf(g: &TiltedGenerator, rho0: &[f64; 4], t: f64) -> Result<C64> {
    finite_time_cgf_of(&g.matrix, rho0, t)
}

pub const UNIFORM: [f64; 4] = [0.25; 4];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use crate::liouvillian::{build_full, full_rate_model, CountingField, LowTVariant};
    use crate::modulation::{weights_sinusoidal, weights_unmodulated};

    fn fig2(t_b: f64) -> SystemParams {
        SystemParams::new(1.0, 0.2, t_b, 0.02).unwrap()
    }

    #[test]
    fn equilibrium_has_no_mean_current() {
        let p = SystemParams::new(1.0, 0.15, 0.15, 0.15).unwrap();
        let c = cumulants(&p, &weights_unmodulated(), &PipelineOptions::default()).unwrap();
        for k in 0..3 {
            assert!(c.mean[k].abs() < 1e-12, "{:?}", c.mean);
            assert!(c.variance[k] > 0.0);
        }
        assert!(c.fano.iter().all(|f| f.is_none()));
    }

    #[test]
    fn detailed_balance_ratios() {
        let t = 0.3;
        let p = SystemParams::new(1.0, t, t, t).unwrap();
        let rm = full_rate_model(&p, &weights_unmodulated(), false).unwrap();
        let rho = steady_state_of(&rm.matrix()).unwrap();
        let m = rm.matrix();
        // ρ_IV/ρ_I = Γ_{I→IV}/Γ_{IV→I}
        assert!((rho[3] / rho[0] - m[3][0] / m[0][3]).abs() < 1e-12);
        assert!((rho[0] / rho[1] - libm::exp(-1.0 / t)).abs() < 1e-12);
    }

    #[test]
    fn steady_state_matches_long_time_propagation() {
        let g = build_full(&fig2(0.118), &weights_unmodulated(), CountingField::zero()).unwrap();
        let rho = steady_state(&g).unwrap();
        let mut lt = g.matrix;
        for r in lt.iter_mut() {
            for v in r.iter_mut() {
                *v *= 1e4;
            }
        }
        let e = expm(&lt).unwrap();
        let prop = mat_vec(&e, &UNIFORM.map(|x| C64::new(x, 0.0)));
        for k in 0..4 {
            assert!((prop[k].re - rho[k]).abs() < 1e-8);
        }
        assert!((rho.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_generator_detected() {
        // two disconnected pairs: two stationary modes
        let mut m = [[0.0; 4]; 4];
        m[0][1] = 1.0;
        m[1][1] = -1.0;
        m[3][2] = 2.0;
        m[2][2] = -2.0;
        assert!(matches!(steady_state_of(&m), Err(Error::DegenerateGenerator(_))));
    }

    #[test]
    fn diag_poly() {
        let mut m = [[C64::new(0.0, 0.0); 4]; 4];
        for (i, v) in [-1.0, -2.0, -3.0, 0.0].iter().enumerate() {
            m[i][i] = C64::new(*v, 0.0);
        }
        let p = char_poly(&m).unwrap();
        let want = [0.0, 6.0, 11.0, 6.0, 1.0];
        for k in 0..5 {
            assert!((p[k] - C64::new(want[k], 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_mode_at_zero_field() {
        let g = build_full(&fig2(0.1), &weights_sinusoidal(0.8, 0.2).unwrap(), CountingField::zero()).unwrap();
        let p = char_poly_coeffs(&g).unwrap();
        assert!(p[0].norm() < 1e-12);
        assert_eq!(p[4], C64::new(1.0, 0.0));
        let lam = dominant_eigenvalue(&g);
        assert!(lam.norm() < 1e-10 * 4.0);
        assert!(eigenvalues(&g.matrix).iter().all(|z| z.re <= 1e-12));
    }

    #[test]
    fn unmodulated_point() {
        let c = cumulants(&fig2(0.1), &weights_unmodulated(), &PipelineOptions::default()).unwrap();
        assert!(c.conservation_defect() < 1e-8);
        // closed form (C14) is a low-temperature approximation of this value
        let je = c.mean_of(Bath::Emitter);
        assert!(je > 0.0 && c.mean_of(Bath::Collector) < 0.0);
        assert!((je - 6.18e-4).abs() / 6.18e-4 < 0.15);
        let fe = c.fano_of(Bath::Emitter).unwrap();
        let fb = c.fano_of(Bath::Base).unwrap();
        assert!((fe - 1.0).abs() < 0.05);
        assert!((fb.abs() - 2.0).abs() < 0.1);
    }

    #[test]
    fn jet_and_richardson_agree() {
        let rm = full_rate_model(&fig2(0.1), &weights_sinusoidal(0.8, 0.2).unwrap(), false).unwrap();
        for bath in Bath::ALL {
            let (j1, v1) = mean_and_variance(&rm, bath, DerivativeScheme::Jet).unwrap();
            let (j2, v2) = mean_and_variance(&rm, bath, DerivativeScheme::FiniteDifference { step: 1e-2 }).unwrap();
            let (j3, _) = mean_and_variance(&rm, bath, DerivativeScheme::FiniteDifference { step: 5e-3 }).unwrap();
            assert!(((j1 - j2) / j1).abs() < 1e-7, "{bath:?}");
            assert!(((j3 - j2) / j2).abs() < 1e-7, "{bath:?}");
            assert!(((v1 - v2) / v1).abs() < 1e-5, "{bath:?}");
        }
    }

    #[test]
    fn implicit_differentiation_identities() {
        let rm = full_rate_model(&fig2(0.09), &weights_sinusoidal(0.5, 0.1).unwrap(), false).unwrap();
        for bath in Bath::ALL {
            let d = poly_derivatives(&rm, bath, DerivativeScheme::Jet).unwrap();
            // eigenvalue derivatives by Richardson central differences
            let lam = |u: f64| {
                let mut v = [0.0; 3];
                v[bath.index()] = u;
                dominant_eigenvalue_of(&to_complex(&rm.tilted_real(v))).re
            };
            let h = 5e-2;
            let d1 = |h: f64| (lam(h) - lam(-h)) / (2.0 * h);
            let d2 = |h: f64| (lam(h) - 2.0 * lam(0.0) + lam(-h)) / (h * h);
            let l1 = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
            let l2 = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
            // tolerances reflect the finite-difference eigenvalue derivatives
            let s1 = d.a0[1] + d.a1[0] * l1;
            let s2 = d.a0[2] + 2.0 * d.a1[1] * l1 + d.a1[0] * l2 + 2.0 * d.a2[0] * l1 * l1;
            assert!(s1.abs() < 1e-6 * d.a0[1].abs().max(1e-30) + 1e-14, "{bath:?} {s1}");
            assert!(s2.abs() < 1e-6 * d.a0[2].abs().max(1e-30) + 1e-12, "{bath:?} {s2}");
        }
    }

    #[test]
    fn cgf_basics() {
        let g = build_full(&fig2(0.1), &weights_unmodulated(), CountingField::zero()).unwrap();
        assert!(finite_time_cgf(&g, &UNIFORM, 0.0).unwrap().norm() < 1e-15);
        for t in [1.0, 10.0, 100.0] {
            assert!(finite_time_cgf(&g, &UNIFORM, t).unwrap().norm() < 1e-12);
        }
        assert!(finite_time_cgf(&g, &UNIFORM, -1.0).is_err());
    }

    #[test]
    fn cgf_slope_matches_dominant_eigenvalue() {
        let rm = full_rate_model(&fig2(0.118), &weights_unmodulated(), false).unwrap();
        for bath in Bath::ALL {
            let m = to_complex(&rm.tilted_real({
                let mut v = [0.0; 3];
                v[bath.index()] = 0.01;
                v
            }));
            let lam = dominant_eigenvalue_of(&m).re;
            let c1 = finite_time_cgf_of(&m, &UNIFORM, 50.0).unwrap().re;
            let c2 = finite_time_cgf_of(&m, &UNIFORM, 100.0).unwrap().re;
            let slope = (c2 - c1) / 50.0;
            assert!(((slope - lam) / lam).abs() < 1e-4, "{bath:?}: {slope} vs {lam}");
            // independent of the initial state
            let c1b = finite_time_cgf_of(&m, &[1.0, 0.0, 0.0, 0.0], 50.0).unwrap().re;
            let c2b = finite_time_cgf_of(&m, &[1.0, 0.0, 0.0, 0.0], 100.0).unwrap().re;
            assert!((((c2b - c1b) / 50.0 - lam) / lam).abs() < 1e-4);
        }
    }

    #[test]
    fn as_printed_variant_still_has_cumulants() {
        let rm = crate::liouvillian::low_t_rate_model(&fig2(0.1), &weights_unmodulated(), LowTVariant::AsPrinted).unwrap();
        let d = poly_derivatives(&rm, Bath::Emitter, DerivativeScheme::Jet).unwrap();
        assert!(d.a1[0].abs() > 0.0);
    }
}
