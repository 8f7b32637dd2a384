//! Floquet harmonic weights P_q of the modulated base frequency.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::fft_in_place;
use crate::linalg::C64;

/// Sideband weights {q ↦ P_q} and the modulation frequency ν = 2π/τ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HarmonicSpectrum {
    pub weights: BTreeMap<i32, f64>,
    pub nu: f64,
    /// 1 − Σ P_q over the retained harmonics.
    pub deficit: f64,
}

impl HarmonicSpectrum {
    /// Builds a spectrum from explicit weights; the deficit is computed.
    pub fn from_weights(weights: BTreeMap<i32, f64>, nu: f64) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::domain(format!("nu must be >= 0, got {nu}")));
        }
        if weights.values().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("harmonic weights must be finite and non-negative"));
        }
        let total: f64 = weights.values().sum();
        if total > 1.0 + 1e-10 {
            return Err(Error::domain(format!("harmonic weights sum to {total} > 1")));
        }
        Ok(HarmonicSpectrum {
            weights,
            nu,
            deficit: 1.0 - total,
        })
    }

    pub fn weight(&self, q: i32) -> f64 {
        self.weights.get(&q).copied().unwrap_or(0.0)
    }

    /// (P_q + P_{−q})/2.
    pub fn symmetric_weight(&self, q: i32) -> f64 {
        0.5 * (self.weight(q) + self.weight(-q))
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    /// Largest |q| carrying non-zero weight.
    pub fn max_harmonic(&self) -> i32 {
        self.weights
            .iter()
            .filter(|(_, p)| **p > 0.0)
            .map(|(q, _)| q.abs())
            .max()
            .unwrap_or(0)
    }

    /// Iterator over (q, P_q) with P_q > 0.
    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.weights.iter().filter(|(_, p)| **p > 0.0).map(|(q, p)| (*q, *p))
    }
}

/// P_q = δ_{q0}.
pub fn weights_unmodulated() -> HarmonicSpectrum {
    let mut w = BTreeMap::new();
    w.insert(0, 1.0);
    HarmonicSpectrum {
        weights: w,
        nu: 0.0,
        deficit: 0.0,
    }
}

/// Weak sinusoidal modulation: P₀ = 1 − λ²/2, P_{±1} = λ²/4.
pub fn weights_sinusoidal(lambda: f64, nu: f64) -> Result<HarmonicSpectrum> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let side = lambda * lambda / 4.0;
    let mut w = BTreeMap::new();
    w.insert(0, 1.0 - 2.0 * side);
    if side > 0.0 {
        w.insert(-1, side);
        w.insert(1, side);
    }
    let mut s = HarmonicSpectrum::from_weights(w, nu)?;
    s.deficit = 0.0;
    Ok(s)
}

/// π-flip modulation truncated to its first harmonics: P₀ = 0,
/// P_{±1} = 4/π², deficit 1 − 8/π² kept unnormalized.
pub fn weights_pi_flip(nu: f64) -> Result<HarmonicSpectrum> {
    let p1 = 4.0 / (PI * PI);
    let mut w = BTreeMap::new();
    w.insert(-1, p1);
    w.insert(0, 0.0);
    w.insert(1, p1);
    HarmonicSpectrum::from_weights(w, nu)
}

/// A τ-periodic base-frequency waveform.
pub trait PeriodicDrive {
    fn period(&self) -> f64;
    /// ω(t) − ω₀ for t in [0, τ].
    fn deviation(&self, t: f64) -> f64;
}

/// ω(t) = ω₀ + λν sin(νt); its exact weights are J_q(λ)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidalDrive {
    pub lambda: f64,
    pub nu: f64,
}

impl PeriodicDrive for SinusoidalDrive {
    fn period(&self) -> f64 {
        2.0 * PI / self.nu
    }
    fn deviation(&self, t: f64) -> f64 {
        self.lambda * self.nu * libm::sin(self.nu * t)
    }
}

/// Boundary-pinned truncated Fourier waveform
/// ω(t) = ω₀ + (μ/2N)·E(t)·Σₙ[aₙcos(2πnt/τ) + bₙsin(2πnt/τ)].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrabWaveform {
    pub omega0: f64,
    pub mu: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub tau: f64,
    /// Ramp fraction ε of the envelope E.
    pub envelope_fraction: f64,
}

pub const DEFAULT_ENVELOPE_FRACTION: f64 = 0.05;

impl CrabWaveform {
    pub fn new(omega0: f64, mu: f64, a: Vec<f64>, b: Vec<f64>, tau: f64) -> Result<Self> {
        let w = CrabWaveform {
            omega0,
            mu,
            a,
            b,
            tau,
            envelope_fraction: DEFAULT_ENVELOPE_FRACTION,
        };
        w.validate()?;
        Ok(w)
    }

    /// All coefficients zero: the unmodulated drive.
    pub fn zero(n_modes: usize, tau: f64) -> Result<Self> {
        CrabWaveform::new(0.0, 0.0, vec![0.0; n_modes], vec![0.0; n_modes], tau)
    }

    pub fn n_modes(&self) -> usize {
        self.a.len()
    }

    pub fn nu(&self) -> f64 {
        2.0 * PI / self.tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::domain("CRAB needs N >= 1 and equally many a_n and b_n"));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::domain(format!("mu must lie in [0, 1], got {}", self.mu)));
        }
        if self.a.iter().chain(&self.b).any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::domain("CRAB coefficients must lie in [-1, 1]"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.envelope_fraction > 0.0 && self.envelope_fraction < 0.5) {
            return Err(Error::domain("envelope_fraction must lie in (0, 0.5)"));
        }
        if !self.omega0.is_finite() {
            return Err(Error::domain("omega0 must be finite"));
        }
        Ok(())
    }

    /// Smoothstep ramp envelope E(t).
    pub fn envelope(&self, t: f64) -> f64 {
        let x = t / self.tau;
        let eps = self.envelope_fraction;
        let s = |y: f64| y * y * (3.0 - 2.0 * y);
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else if x < eps {
            s(x / eps)
        } else if x > 1.0 - eps {
            s((1.0 - x) / eps)
        } else {
            1.0
        }
    }

    fn raw_deviation(&self, t: f64) -> f64 {
        let n = self.n_modes();
        let w = 2.0 * PI * t / self.tau;
        let mut s = 0.0;
        for k in 0..n {
            let arg = w * (k + 1) as f64;
            s += self.a[k] * libm::cos(arg) + self.b[k] * libm::sin(arg);
        }
        self.mu / (2.0 * n as f64) * self.envelope(t) * s
    }
}

impl PeriodicDrive for CrabWaveform {
    fn period(&self) -> f64 {
        self.tau
    }
    fn deviation(&self, t: f64) -> f64 {
        self.raw_deviation(t)
    }
}

/// Instantaneous CRAB base frequency ω(t).
pub fn crab_frequency(w: &CrabWaveform, t: f64) -> Result<f64> {
    if !(0.0..=w.tau).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [0, {}]", w.tau)));
    }
    Ok(w.omega0 + w.raw_deviation(t))
}

const START_POINTS: usize = 256;
const MAX_POINTS: usize = 1 << 21;
const WEIGHT_TOL: f64 = 1e-10;

// 5-point Gauss–Legendre nodes and weights on [−1, 1]
const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// η̃(q) for all q on an n-point grid, as an FFT buffer indexed by
/// (−q) mod n.
fn eta_grid<D: PeriodicDrive + ?Sized>(drive: &D, n: usize) -> Vec<C64> {
    let tau = drive.period();
    let h = tau / n as f64;
    let mut phase = vec![0.0f64; n + 1];
    for k in 0..n {
        let mid = (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            s += w * drive.deviation(mid + 0.5 * h * x);
        }
        phase[k + 1] = phase[k] + 0.5 * h * s;
    }
    // remove the period-average offset so that e^{−iΦ} is τ-periodic
    let slope = phase[n] / tau;
    let inv_n = 1.0 / n as f64;
    let mut buf: Vec<C64> = (0..n)
        .map(|k| {
            let p = phase[k] - slope * (k as f64 * h);
            C64::new(libm::cos(p), -libm::sin(p)) * inv_n
        })
        .collect();
    fft_in_place(&mut buf);
    buf
}

fn eta_at(buf: &[C64], q: i32) -> C64 {
    let n = buf.len() as i64;
    buf[((-(q as i64)).rem_euclid(n)) as usize]
}

/// Harmonic weights P_q = |η̃(q)|², |q| ≤ q_max, of an arbitrary periodic
/// drive. The accumulated phase is integrated per grid cell and the η̃(q)
/// integrals use the periodic trapezoidal rule, doubling the grid until
/// every retained weight moves by less than 1e−10.
pub fn weights_from_waveform<D: PeriodicDrive + ?Sized>(drive: &D, q_max: u32) -> Result<HarmonicSpectrum> {
    let (spec, _) = refine(drive, |_| q_max as i32, q_max, 8 * (q_max as usize + 1))?;
    Ok(spec)
}

/// As [`weights_from_waveform`], but picks the smallest q_max ≤ `q_cap`
/// whose retained deficit is at most `deficit_tol`.
pub fn weights_from_waveform_adaptive<D: PeriodicDrive + ?Sized>(
    drive: &D,
    deficit_tol: f64,
    q_cap: u32,
) -> Result<HarmonicSpectrum> {
    let pick = |buf: &[C64]| {
        let mut total = eta_at(buf, 0).norm_sqr();
        let mut q = 0i32;
        while 1.0 - total > deficit_tol && (q as u32) < q_cap && ((q + 1) as usize) < buf.len() / 4 {
            q += 1;
            total += eta_at(buf, q).norm_sqr() + eta_at(buf, -q).norm_sqr();
        }
        q
    };
    let (spec, _) = refine(drive, pick, q_cap, START_POINTS)?;
    Ok(spec)
}

fn refine<D, F>(drive: &D, pick_q: F, q_cap: u32, min_points: usize) -> Result<(HarmonicSpectrum, usize)>
where
    D: PeriodicDrive + ?Sized,
    F: Fn(&[C64]) -> i32,
{
    let tau = drive.period();
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain("drive period must be > 0"));
    }
    if q_cap < 1 {
        return Err(Error::domain("q_max must be >= 1"));
    }
    let nu = 2.0 * PI / tau;
    let mut n = START_POINTS;
    while n < min_points && n < MAX_POINTS {
        n *= 2;
    }
    let mut prev: Option<(i32, Vec<f64>)> = None;
    loop {
        let buf = eta_grid(drive, n);
        let q_max = pick_q(&buf);
        let p: Vec<f64> = (-q_max..=q_max).map(|q| eta_at(&buf, q).norm_sqr()).collect();
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite harmonic weight".into()));
        }
        let last_deficit = 1.0 - p.iter().sum::<f64>();
        if let Some((pq, pp)) = &prev {
            if *pq == q_max && pp.iter().zip(&p).all(|(a, b)| (a - b).abs() < WEIGHT_TOL) {
                let weights: BTreeMap<i32, f64> = (-q_max..=q_max).zip(p.iter().copied()).collect();
                let total: f64 = p.iter().sum();
                return Ok((
                    HarmonicSpectrum {
                        weights,
                        nu,
                        deficit: 1.0 - total,
                    },
                    n,
                ));
            }
        }
        if n >= MAX_POINTS {
            return Err(Error::NonConvergence { deficit: last_deficit });
        }
        prev = Some((q_max, p));
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bessel J_q(x) from its power series.
    fn bessel_j(q: i32, x: f64) -> f64 {
        let m = q.unsigned_abs() as i32;
        let mut term = 1.0;
        for k in 1..=m {
            term *= x / 2.0 / k as f64;
        }
        let mut sum = term;
        for k in 1..60 {
            term *= -(x * x / 4.0) / (k as f64 * (k + m) as f64);
            sum += term;
        }
        if q < 0 && m % 2 == 1 {
            -sum
        } else {
            sum
        }
    }

    #[test]
    fn closed_protocols() {
        let u = weights_unmodulated();
        assert_eq!(u.weight(0), 1.0);
        assert_eq!(u.weight(1), 0.0);
        assert_eq!(u.deficit, 0.0);

        let s = weights_sinusoidal(0.8, 0.2).unwrap();
        assert!((s.weight(0) - 0.68).abs() < 1e-15);
        assert!((s.weight(1) - 0.16).abs() < 1e-15);
        assert!((s.weight(-1) - 0.16).abs() < 1e-15);
        assert!((s.total() - 1.0).abs() < 1e-15);
        assert_eq!(weights_sinusoidal(0.0, 0.2).unwrap().weights.len(), 1);
        assert!(weights_sinusoidal(1.2, 0.2).is_err());

        let p = weights_pi_flip(0.2).unwrap();
        assert!((p.weight(1) - 0.405_284_734_569_351).abs() < 1e-12);
        assert_eq!(p.weight(0), 0.0);
        assert!((p.deficit - 0.189_430_530_861_297).abs() < 1e-12);
    }

    #[test]
    fn crab_frequency_examples() {
        let w = CrabWaveform::new(0.3, 1.0, vec![1.0], vec![0.0], 10.0).unwrap();
        assert_eq!(crab_frequency(&w, 0.0).unwrap(), 0.3);
        assert!((crab_frequency(&w, 10.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((crab_frequency(&w, 5.0).unwrap() - (0.3 - 0.5)).abs() < 1e-14);
        assert!(crab_frequency(&w, 10.5).is_err());
        let z = CrabWaveform::zero(3, 10.0).unwrap();
        assert!((0..=20).all(|k| crab_frequency(&z, k as f64 * 0.5).unwrap() == 0.0));
        assert!(CrabWaveform::new(0.0, 1.2, vec![0.0], vec![0.0], 1.0).is_err());
        assert!(CrabWaveform::new(0.0, 0.5, vec![1.5], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn constant_waveform_is_unmodulated() {
        let z = CrabWaveform::zero(2, 31.4).unwrap();
        let s = weights_from_waveform(&z, 3).unwrap();
        assert!((s.weight(0) - 1.0).abs() < 1e-14);
        for q in 1..=3 {
            assert!(s.weight(q) < 1e-28 && s.weight(-q) < 1e-28);
        }
    }

    #[test]
    fn sinusoid_reproduces_bessel() {
        for &lambda in &[0.1, 0.5, 0.8, 1.0] {
            let d = SinusoidalDrive { lambda, nu: 0.2 };
            let s = weights_from_waveform(&d, 8).unwrap();
            for q in -8..=8 {
                let j = bessel_j(q, lambda);
                assert!((s.weight(q) - j * j).abs() < 1e-8, "λ={lambda} q={q}");
            }
        }
        let s = weights_from_waveform(&SinusoidalDrive { lambda: 0.8, nu: 0.2 }, 5).unwrap();
        assert!((s.weight(0) - 0.716_202_283).abs() < 1e-8);
        assert!((s.weight(1) - 0.136_044_455).abs() < 1e-8);
    }

    #[test]
    fn deficit_shrinks_with_q_max() {
        let d = SinusoidalDrive { lambda: 0.8, nu: 0.2 };
        let d1 = weights_from_waveform(&d, 1).unwrap().deficit;
        let d3 = weights_from_waveform(&d, 3).unwrap().deficit;
        let d6 = weights_from_waveform(&d, 6).unwrap().deficit;
        assert!(d1 > d3 && d3 > d6);
        assert!(d6.abs() < 1e-10);
    }

    #[test]
    fn adaptive_captures_strong_modulation() {
        let w = CrabWaveform::new(0.0, 1.0, vec![0.4, -0.2, 0.1], vec![0.9, 0.3, -0.5], 2.0 * PI / 0.01).unwrap();
        let s = weights_from_waveform_adaptive(&w, 1e-9, 4000).unwrap();
        assert!(s.deficit.abs() <= 1e-9 + 1e-10);
        assert!(s.max_harmonic() > 3);
    }

    #[test]
    fn odd_waveform_is_symmetric() {
        // ω(τ−t) − ω₀ = −(ω(t) − ω₀) for a pure-sine waveform with symmetric envelope
        let w = CrabWaveform::new(0.0, 0.8, vec![0.0, 0.0], vec![0.7, -0.4], 2.0 * PI / 0.2).unwrap();
        let s = weights_from_waveform(&w, 6).unwrap();
        for q in 1..=6 {
            assert!((s.weight(q) - s.weight(-q)).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn crab_weights_are_probabilities(
            mu in 0.0f64..1.0,
            a in proptest::collection::vec(-1.0f64..1.0, 2),
            b in proptest::collection::vec(-1.0f64..1.0, 2),
            nu in 0.05f64..0.5,
        ) {
            let w = CrabWaveform::new(0.0, mu, a, b, 2.0 * PI / nu).unwrap();
            let s = weights_from_waveform(&w, 3).unwrap();
            prop_assert!(s.weights.values().all(|p| *p >= 0.0));
            prop_assert!(s.total() <= 1.0 + 1e-10);
        }
    }
}
