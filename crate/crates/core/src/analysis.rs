//! Closed-form low-temperature currents, amplification factors, Fano
//! factors and the coth bound on current fluctuations.

use alloc::format;
use alloc::vec::Vec;

use crate::cumulants::CumulantSet;
use crate::error::{Error, Result};
use crate::liouvillian::{aux_rates, AuxRates};
use crate::model::{Bath, SystemParams};
use crate::modulation::HarmonicSpectrum;

/// Boltzmann factors and auxiliary rates entering the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormInputs {
    /// M = e^{−Δ/T_E}
    pub m: f64,
    /// g = e^{−Δ/T_C}
    pub g_c: f64,
    /// h = e^{−Δ/T_B}
    pub h: f64,
    pub aux: AuxRates,
    /// P₁ of the spectrum (symmetrized)
    pub p1: f64,
    pub nu: f64,
}

impl ClosedFormInputs {
    pub fn new(params: &SystemParams, spectrum: &HarmonicSpectrum) -> Result<Self> {
        let aux = aux_rates(params, spectrum)?;
        let d = params.delta;
        Ok(ClosedFormInputs {
            m: libm::exp(-d / params.t_e),
            g_c: libm::exp(-d / params.t_c),
            h: if params.zero_tb { 0.0 } else { libm::exp(-d / params.t_b) },
            aux,
            p1: spectrum.symmetric_weight(1),
            nu: spectrum.nu,
        })
    }

    /// g ≪ M ≪ 1, the ordering the closed forms assume.
    pub fn regime_ok(&self) -> bool {
        self.g_c < 0.1 * self.m && self.m < 0.1
    }

    /// R(ν)h², overflow-free.
    fn rh2(&self) -> f64 {
        self.aux.r_nu_h2
    }
}

/// Currents (J_E, J_B, J_C).
pub type Currents = (f64, f64, f64);

/// Exact low-temperature currents over the common denominator 𝕏 (g → 0).
pub fn currents_exact_low_t(inp: &ClosedFormInputs, delta: f64) -> Result<Currents> {
    let d = delta;
    let (m, rh2) = (inp.m, inp.rh2());
    let AuxRates {
        f_rate: f,
        b_rate: b,
        r_of_0: r0,
        ..
    } = inp.aux;
    let x = -b * b * (m + 2.0 * r0 + 2.0)
        + 2.0 * rh2 * (b * (f - b) + b * d * (m + 3.0) + 3.0 * d * f + d * d * (2.0 * m + 3.0))
        + b * (2.0 * d + (m + 2.0) * (f + d * m) + 2.0 * r0 * (d + f + 2.0 * d * m))
        + d * (m + 1.0) * (2.0 * (r0 * (d + f + d * m) + f) + d * (m + 2.0));
    if x == 0.0 || !x.is_finite() {
        return Err(Error::SingularRegime(format!("X = {x}")));
    }
    let d3 = d * d * d;
    let je = d3 / x * (b * m * (4.0 * m * r0 + m + 2.0 * r0 + 2.0) - 2.0 * rh2 * (-b * (m - 3.0) + f + d * (m + 2.0)));
    let jb = 4.0 * d3 / x * (rh2 * (3.0 * b + f + d * (m + 2.0)) - b * m * m * r0);
    let jc = -d3 / x * (2.0 * rh2 * (b * (m + 3.0) + f + d * (m + 2.0)) + b * m * (m + 2.0 * r0 + 2.0));
    Ok((je, jb, jc))
}

/// Leading-order currents over 𝒴₁ = 2(R(0)+1)[−ℬ² + (ℬ+Δ)(ℱ+Δ)], with
/// J_B written through Ψ = 3R(ν)h² − R(0)M².
pub fn currents_approx(inp: &ClosedFormInputs, delta: f64) -> Result<Currents> {
    let d = delta;
    let m = inp.m;
    let AuxRates {
        f_rate: f,
        b_rate: b,
        r_of_0: r0,
        ..
    } = inp.aux;
    let y1 = 2.0 * (r0 + 1.0) * (-b * b + (b + d) * (f + d));
    if y1 == 0.0 || !y1.is_finite() {
        return Err(Error::SingularRegime(format!("Y1 = {y1}")));
    }
    let d3 = d * d * d;
    let psi = 3.0 * inp.rh2() - r0 * m * m;
    let je = d3 / y1 * b * m * (m * (4.0 * r0 + 1.0) + 2.0 * (r0 + 1.0));
    let jb = 4.0 * d3 / y1 * (b * psi + inp.rh2() * (f + 2.0 * d));
    let jc = -d3 / y1 * b * m * (m + 2.0 * r0 + 2.0);
    Ok((je, jb, jc))
}

/// Unmodulated limit over 𝒴₂ = 1 + T_B/Δ − (T_B/Δ)².
pub fn currents_unmodulated(t_e: f64, t_b: f64, _t_c: f64, delta: f64) -> Currents {
    let x = t_b / delta;
    let y2 = 1.0 + x - x * x;
    let m = libm::exp(-delta / t_e);
    let pre = delta * delta / y2 * x;
    let je = pre * m;
    let jb = pre * (3.0 * libm::exp(-2.0 * delta / t_b) - libm::exp(-2.0 * delta / t_e));
    (je, jb, -je)
}

/// T_B → 0 limit over 𝒴₃ = 2(R(0)+1)(2νP₁ + Δ); all h-terms dropped.
pub fn currents_zero_tb(t_e: f64, nu: f64, spectrum: &HarmonicSpectrum, delta: f64) -> Currents {
    let p1 = spectrum.symmetric_weight(1);
    let r0 = spectrum.weight(0) + 2.0 * p1;
    let m = libm::exp(-delta / t_e);
    let y3 = 2.0 * (r0 + 1.0) * (2.0 * nu * p1 + delta);
    let pre = delta * delta / y3 * nu * p1;
    let je = pre * (m * m * (4.0 * r0 + 1.0) + 2.0 * m * (r0 + 1.0));
    let jb = -4.0 * pre * m * m * r0;
    let jc = -pre * m * (m + 2.0 * (1.0 + r0));
    (je, jb, jc)
}

/// Analytic (β₊, β₋) = ((M + 2R(0) + 2)/(4MR(0)), −(β₊ + 1)).
pub fn amplification_analytic(m: f64, r0: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) || !(r0 > 0.0) {
        return Err(Error::domain("amplification needs M > 0 and R(0) > 0"));
    }
    let bp = (m + 2.0 * r0 + 2.0) / (4.0 * m * r0);
    Ok((bp, -(bp + 1.0)))
}

/// One point of a T_B sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub t_b: f64,
    pub j_e: f64,
    pub j_b: f64,
    pub j_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Amplification {
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub diverged: bool,
}

/// Relative slope threshold below which dJ_B/dT_B counts as zero.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-6;

/// Second-order derivative weights at point i of a non-uniform grid.
fn diff_weights(x: &[f64], i: usize) -> ([usize; 3], [f64; 3]) {
    let n = x.len();
    if i == 0 {
        let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
        (
            [0, 1, 2],
            [-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2))],
        )
    } else if i == n - 1 {
        let (h1, h2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        (
            [n - 3, n - 2, n - 1],
            [h2 / (h1 * (h1 + h2)), -(h1 + h2) / (h1 * h2), (2.0 * h2 + h1) / (h2 * (h1 + h2))],
        )
    } else {
        let (h1, h2) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        (
            [i - 1, i, i + 1],
            [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))],
        )
    }
}

fn sentinel(num: f64, den: f64) -> f64 {
    if (num >= 0.0) == (den >= 0.0) {
        f64::MAX
    } else {
        -f64::MAX
    }
}

/// β± = (dJ_C/dT_B, dJ_E/dT_B)/(dJ_B/dT_B) along a sorted T_B sweep.
///
/// A point is divergent when |dJ_B| < 1e−6·max(|dJ_C|, |dJ_E|), or when
/// dJ_B changes sign between it and a neighbour and it has the smaller
/// |dJ_B| of the pair. Divergent values carry the signed sentinel ±f64::MAX.
pub fn amplification_numeric(sweep: &[SweepSample]) -> Result<Vec<Amplification>> {
    if sweep.len() < 3 {
        return Err(Error::Input(format!("need at least 3 sweep points, got {}", sweep.len())));
    }
    if sweep.windows(2).any(|w| !(w[1].t_b > w[0].t_b)) {
        return Err(Error::Input("sweep must be strictly increasing in T_B".into()));
    }
    let x: Vec<f64> = sweep.iter().map(|s| s.t_b).collect();
    let deriv = |f: &dyn Fn(&SweepSample) -> f64, i: usize| {
        let (idx, w) = diff_weights(&x, i);
        (0..3).map(|k| w[k] * f(&sweep[idx[k]])).sum::<f64>()
    };
    let n = sweep.len();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        d.push((deriv(&|s| s.j_e, i), deriv(&|s| s.j_b, i), deriv(&|s| s.j_c, i)));
    }
    let mut flag: Vec<bool> = d
        .iter()
        .map(|(de, db, dc)| db.abs() < DIVERGENCE_THRESHOLD * de.abs().max(dc.abs()))
        .collect();
    for i in 0..n - 1 {
        let (a, b) = (d[i].1, d[i + 1].1);
        if a != 0.0 && b != 0.0 && (a > 0.0) != (b > 0.0) {
            if a.abs() <= b.abs() {
                flag[i] = true;
            } else {
                flag[i + 1] = true;
            }
        }
    }
    Ok(d.iter()
        .zip(flag)
        .map(|((de, db, dc), div)| {
            if div {
                Amplification {
                    beta_plus: sentinel(*dc, *db),
                    beta_minus: sentinel(*de, *db),
                    diverged: true,
                }
            } else {
                Amplification {
                    beta_plus: dc / db,
                    beta_minus: de / db,
                    diverged: false,
                }
            }
        })
        .collect())
}

/// Var/⟨J⟩ for one bath, `None` when the mean vanishes.
pub fn fano(c: &CumulantSet, bath: Bath) -> Option<f64> {
    c.fano_of(bath)
}

/// Closed-form (F_E, F_B, F_C) sharing the rational factor **f**.
pub fn fano_closed_form(inp: &ClosedFormInputs, delta: f64, currents: Currents) -> Result<(f64, f64, f64)> {
    let d = delta;
    let m = inp.m;
    let AuxRates {
        f_rate: f,
        b_rate: b,
        r_of_0: r0,
        q_diag: q,
        ..
    } = inp.aux;
    let num = q * (b + f + 2.0 * d * (m + 1.0)) + b * b - b * (d + f + 2.0 * d * m) - d * (d + (m + 1.0) * (f + d * m));
    let den = q * (-b * b + b * (d + f + 2.0 * d * m) + d * (m + 1.0) * (d + f + d * m))
        + d * m * (b * b - b * (f + d * (m - 2.0)) + d * d * (m + 1.0));
    if den == 0.0 || !den.is_finite() {
        return Err(Error::SingularRegime("denominator of f vanishes".into()));
    }
    let ff = num / (den * den);
    let a = q - d * m * (1.0 + 4.0 * r0);
    let qc = -q + m * d;
    if a == 0.0 || qc == 0.0 {
        return Err(Error::SingularRegime("vanishing Fano prefactor".into()));
    }
    let d3 = d * d * d;
    let fe = d - (1.0 / a) * ((4.0 * d * d * m * r0 + 4.0 * currents.0) - 2.0 * b * m * d3 * a * a * ff);
    let fb = -2.0 * d + 8.0 * b * m * m * d3 * d * r0 * ff;
    let fc = -d + 2.0 * b * m * d3 * qc * ff + 4.0 * currents.2 / qc;
    Ok((fe, fb, fc))
}

/// Sign convention for the entropy production rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EntropyConvention {
    /// σ = Σ ⟨J_α⟩/T_α.
    #[default]
    AsPrinted,
    /// σ = −Σ ⟨J_α⟩/T_α, non-negative for heat absorbed counted positive.
    Conventional,
}

pub fn entropy_production(mean: [f64; 3], params: &SystemParams, conv: EntropyConvention) -> Option<f64> {
    if params.zero_tb {
        return None;
    }
    let s = mean[0] / params.t_e + mean[1] / params.t_b + mean[2] / params.t_c;
    Some(match conv {
        EntropyConvention::AsPrinted => s,
        EntropyConvention::Conventional => -s,
    })
}

/// Ω_α·coth(|Ω_α σ/(2⟨J_α⟩)|), `None` for zero current or undefined σ.
pub fn fano_bound(mean: [f64; 3], params: &SystemParams, bath: Bath, conv: EntropyConvention) -> Option<f64> {
    let j = mean[bath.index()];
    if j == 0.0 || !j.is_finite() {
        return None;
    }
    let sigma = entropy_production(mean, params, conv)?;
    let omega = bath.quantum(params.delta);
    let x = (omega * sigma / (2.0 * j)).abs();
    if x == 0.0 {
        return Some(f64::INFINITY);
    }
    Some(omega / libm::tanh(x))
}

/// Per-point transistor figures of merit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransistorReport {
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub diverged: bool,
    pub fano: [Option<f64>; 3],
    pub bound: [Option<f64>; 3],
    pub sigma: Option<f64>,
}

impl TransistorReport {
    pub fn new(c: &CumulantSet, params: &SystemParams, amp: Amplification, conv: EntropyConvention) -> Self {
        TransistorReport {
            beta_plus: amp.beta_plus,
            beta_minus: amp.beta_minus,
            diverged: amp.diverged,
            fano: c.fano,
            bound: Bath::ALL.map(|b| fano_bound(c.mean, params, b, conv)),
            sigma: entropy_production(c.mean, params, conv),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{cumulants, PipelineOptions};
    use crate::modulation::{weights_pi_flip, weights_sinusoidal, weights_unmodulated};
    use proptest::prelude::*;

    fn fig2(t_b: f64) -> SystemParams {
        SystemParams::new(1.0, 0.2, t_b, 0.02).unwrap()
    }

    #[test]
    fn unmodulated_values() {
        let (je, jb, jc) = currents_unmodulated(0.2, 0.1, 0.02, 1.0);
        assert!((je - 6.1816e-4).abs() < 1e-7);
        assert!((jb + 4.165e-6).abs() < 1e-9);
        assert_eq!(jc, -je);
    }

    #[test]
    fn exact_sign_pattern_and_conservation() {
        for s in [weights_unmodulated(), weights_sinusoidal(0.8, 0.2).unwrap(), weights_pi_flip(0.1).unwrap()] {
            let inp = ClosedFormInputs::new(&fig2(0.118), &s).unwrap();
            let (je, jb, jc) = currents_exact_low_t(&inp, 1.0).unwrap();
            assert!(je > 0.0 && jc < 0.0);
            assert!((je + jb + jc).abs() < 1e-14 * je.abs());
        }
    }

    #[test]
    fn exact_tends_to_unmodulated_forms() {
        // corrections are O(M) once the h² backflow is negligible against M
        let mut prev = f64::INFINITY;
        for t_e in [0.3, 0.2, 0.1] {
            let p = SystemParams::new(1.0, t_e, 0.05, 0.01).unwrap();
            let inp = ClosedFormInputs::new(&p, &weights_unmodulated()).unwrap();
            let (je, _, jc) = currents_exact_low_t(&inp, 1.0).unwrap();
            let (ue, _, uc) = currents_unmodulated(t_e, 0.05, 0.01, 1.0);
            let rel = ((je - ue) / ue).abs().max(((jc - uc) / uc).abs());
            assert!(rel < 5.0 * inp.m, "T_E={t_e}: {rel}");
            assert!(rel < prev);
            prev = rel;
        }
    }

    #[test]
    fn approx_agrees_with_exact_fig2b() {
        let s = weights_sinusoidal(0.8, 0.2).unwrap();
        let inp = ClosedFormInputs::new(&fig2(0.118), &s).unwrap();
        let ex = currents_exact_low_t(&inp, 1.0).unwrap();
        let ap = currents_approx(&inp, 1.0).unwrap();
        assert!(((ap.0 - ex.0) / ex.0).abs() < 0.05);
        assert!(((ap.2 - ex.2) / ex.2).abs() < 0.05);
        assert!(((ap.1 - ex.1) / ex.1).abs() < 0.05);
    }

    #[test]
    fn approx_unmodulated_limit() {
        let inp = ClosedFormInputs::new(&fig2(0.1), &weights_unmodulated()).unwrap();
        let (je, _, jc) = currents_approx(&inp, 1.0).unwrap();
        let (ue, _, _) = currents_unmodulated(0.2, 0.1, 0.02, 1.0);
        assert!(((je - ue) / ue).abs() < 5.0 * inp.m);
        assert!(((jc + ue) / ue).abs() < 5.0 * inp.m);
    }

    #[test]
    fn zero_tb_limits() {
        let (a, b, c) = currents_zero_tb(0.2, 0.2, &weights_unmodulated(), 1.0);
        assert_eq!((a, b, c), (0.0, -0.0, -0.0));
        let pf = weights_pi_flip(0.2).unwrap();
        let (je, jb, jc) = currents_zero_tb(0.2, 0.2, &pf, 1.0);
        assert!(je > 0.0 && jc < 0.0);
        assert!((je + jb + jc).abs() < 1e-10 * je);
    }

    #[test]
    fn analytic_betas() {
        let m = libm::exp(-5.0);
        let (bp, bm) = amplification_analytic(m, 1.0).unwrap();
        assert!((bp - 148.663_159_1).abs() < 1e-6);
        assert_eq!(bm, -(bp + 1.0));
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        let (bp, _) = amplification_analytic(m, 8.0 / pi2).unwrap();
        let want = (2.0 * (8.0 + pi2) * libm::exp(5.0) + pi2) / 32.0;
        assert!((bp - want).abs() < 1e-9);
        assert!((bp - 166.07).abs() < 0.01);
        assert!(amplification_analytic(0.0, 1.0).is_err());
    }

    #[test]
    fn numeric_beta_input_checks() {
        let s = |t| SweepSample { t_b: t, j_e: 0.0, j_b: 0.0, j_c: 0.0 };
        assert!(amplification_numeric(&[s(0.1), s(0.2)]).is_err());
        assert!(amplification_numeric(&[s(0.1), s(0.3), s(0.2)]).is_err());
    }

    #[test]
    fn numeric_beta_on_polynomials() {
        // J_B = (t−0.5)², J_C = 3t², J_E = −J_B − J_C: exact for second-order stencils
        let ts = [0.1, 0.15, 0.3, 0.32, 0.45, 0.5, 0.7];
        let sw: Vec<SweepSample> = ts
            .iter()
            .map(|&t| {
                let jb = (t - 0.5) * (t - 0.5);
                let jc = 3.0 * t * t;
                SweepSample { t_b: t, j_e: -jb - jc, j_b: jb, j_c: jc }
            })
            .collect();
        let out = amplification_numeric(&sw).unwrap();
        for (s, a) in sw.iter().zip(&out) {
            if s.t_b == 0.5 {
                assert!(a.diverged);
                continue;
            }
            assert!(!a.diverged, "{}", s.t_b);
            let want = 6.0 * s.t_b / (2.0 * (s.t_b - 0.5));
            assert!((a.beta_plus - want).abs() < 1e-9 * want.abs().max(1.0));
            assert!((a.beta_plus + a.beta_minus + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bound_lower_limits() {
        let p = fig2(0.1);
        let c = cumulants(&p, &weights_unmodulated(), &PipelineOptions::default()).unwrap();
        for conv in [EntropyConvention::AsPrinted, EntropyConvention::Conventional] {
            assert!(fano_bound(c.mean, &p, Bath::Base, conv).unwrap() >= 2.0);
            assert!(fano_bound(c.mean, &p, Bath::Emitter, conv).unwrap() >= 1.0);
            assert!(fano_bound(c.mean, &p, Bath::Collector, conv).unwrap() >= 1.0);
        }
        assert_eq!(fano_bound([0.0, 1.0, -1.0], &p, Bath::Emitter, EntropyConvention::AsPrinted), None);
    }

    #[test]
    fn closed_fano_against_numeric() {
        for t_b in [0.06, 0.08, 0.1, 0.12] {
            let p = fig2(t_b);
            let s = weights_unmodulated();
            let c = cumulants(&p, &s, &PipelineOptions::default()).unwrap();
            let inp = ClosedFormInputs::new(&p, &s).unwrap();
            let cf = fano_closed_form(&inp, 1.0, (c.mean[0], c.mean[1], c.mean[2])).unwrap();
            let num = [c.fano[0].unwrap(), c.fano[1].unwrap(), c.fano[2].unwrap()];
            for (a, b) in [cf.0, cf.1, cf.2].iter().zip(num) {
                assert!(((a - b) / b).abs() < 0.1, "T_B={t_b}: {a} vs {b}");
            }
            assert!(cf.1.abs() >= 2.0 * (1.0 - 0.05));
            assert!((cf.0 - 1.0).abs() < 0.1);
        }
    }

    proptest! {
        #[test]
        fn exact_forms_conserve(
            t_e in 0.1f64..0.3, t_b in 0.03f64..0.2, lambda in 0.0f64..1.0, nu in 0.0f64..0.5,
        ) {
            let p = SystemParams::new(1.0, t_e, t_b, 0.02).unwrap();
            let inp = ClosedFormInputs::new(&p, &weights_sinusoidal(lambda, nu).unwrap()).unwrap();
            let (je, jb, jc) = currents_exact_low_t(&inp, 1.0).unwrap();
            let scale = je.abs().max(jb.abs()).max(jc.abs());
            prop_assert!((je + jb + jc).abs() <= 1e-13 * scale);
        }

        #[test]
        fn zero_tb_forms_conserve(t_e in 0.1f64..0.3, nu in 0.01f64..0.5, lambda in 0.0f64..1.0) {
            let (je, jb, jc) = currents_zero_tb(t_e, nu, &weights_sinusoidal(lambda, nu).unwrap(), 1.0);
            prop_assert!((je + jb + jc).abs() <= 1e-10 * je.abs().max(1e-300));
        }
    }
}
