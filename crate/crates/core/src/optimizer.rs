//! CRAB optimization of the base-frequency waveform with multi-start
//! Nelder–Mead over the box a, b ∈ [−1, 1]ᴺ, μ ∈ [0, 1].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::cumulants::{cumulants_of, mean_and_variance, DerivativeScheme};
use crate::error::{Error, Result};
use crate::liouvillian::full_rate_model;
use crate::model::{Bath, SystemParams};
use crate::modulation::{weights_from_waveform, weights_from_waveform_adaptive, CrabWaveform, HarmonicSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Objective {
    MaximizeBetaPlus,
    MinimizeFanoE,
}

/// How many harmonics of the optimized waveform are kept.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HarmonicCutoff {
    Fixed(u32),
    /// Smallest q_max whose retained deficit is at most `deficit_tol`.
    Adaptive { deficit_tol: f64, cap: u32 },
}

impl Default for HarmonicCutoff {
    fn default() -> Self {
        HarmonicCutoff::Adaptive {
            deficit_tol: 1e-9,
            cap: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrabConfig {
    pub n_modes: usize,
    pub restarts: usize,
    pub max_evals: usize,
    /// Stop when the simplex spread falls below this relative objective change.
    pub tolerance: f64,
    pub master_seed: u64,
    pub objective: Objective,
    /// T_B half-step of the two-point β probe.
    pub beta_probe: f64,
    pub cutoff: HarmonicCutoff,
    pub envelope_fraction: f64,
    pub omega0: f64,
}

impl Default for CrabConfig {
    fn default() -> Self {
        CrabConfig {
            n_modes: 3,
            restarts: 8,
            max_evals: 500,
            tolerance: 1e-8,
            master_seed: 20_240_917,
            objective: Objective::MaximizeBetaPlus,
            beta_probe: 1e-3,
            cutoff: HarmonicCutoff::default(),
            envelope_fraction: crate::modulation::DEFAULT_ENVELOPE_FRACTION,
            omega0: 0.0,
        }
    }
}

impl CrabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 1 {
            return Err(Error::Input("n_modes must be >= 1".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Input("restarts must be >= 1".into()));
        }
        if self.max_evals < 2 * self.n_modes + 2 {
            return Err(Error::Input("max_evals must exceed the simplex size".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Input("tolerance must be >= 0".into()));
        }
        if !(self.beta_probe > 0.0) {
            return Err(Error::Input("beta_probe must be > 0".into()));
        }
        if !(self.envelope_fraction > 0.0 && self.envelope_fraction < 0.5) {
            return Err(Error::Input("envelope_fraction must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        2 * self.n_modes + 1
    }
}

/// Operating point of an optimization run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub t_b: f64,
    pub nu: f64,
}

/// Result of a two-point β₊ probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEval {
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub diverged: bool,
}

/// β± from currents at T_B ± probe for a fixed spectrum.
pub fn beta_for_spectrum(params: &SystemParams, spectrum: &HarmonicSpectrum, t_b: f64, probe: f64) -> Result<BetaEval> {
    if !(t_b - probe > 0.0) {
        return Err(Error::domain(format!("T_B - probe = {} must be > 0", t_b - probe)));
    }
    let currents = |tb: f64| -> Result<[f64; 3]> {
        let p = params.with_t_b(tb)?;
        let rm = full_rate_model(&p, spectrum, false)?;
        let mut j = [0.0; 3];
        for bath in Bath::ALL {
            j[bath.index()] = mean_and_variance(&rm, bath, DerivativeScheme::Jet)?.0;
        }
        Ok(j)
    };
    let hi = currents(t_b + probe)?;
    let lo = currents(t_b - probe)?;
    let (de, db, dc) = (hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    if db.abs() < crate::analysis::DIVERGENCE_THRESHOLD * de.abs().max(dc.abs()) {
        let s = |n: f64| if (n >= 0.0) == (db >= 0.0) { f64::MAX } else { -f64::MAX };
        return Ok(BetaEval {
            beta_plus: s(dc),
            beta_minus: s(de),
            diverged: true,
        });
    }
    Ok(BetaEval {
        beta_plus: dc / db,
        beta_minus: de / db,
        diverged: false,
    })
}

/// Mean currents and F_E at a fixed spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SideQuantities {
    pub j_e: f64,
    pub j_b: f64,
    pub j_c: f64,
    pub fano_e: Option<f64>,
}

pub fn side_quantities(params: &SystemParams, spectrum: &HarmonicSpectrum) -> Result<SideQuantities> {
    let rm = full_rate_model(params, spectrum, false)?;
    let c = cumulants_of(&rm, DerivativeScheme::Jet)?;
    Ok(SideQuantities {
        j_e: c.mean[0],
        j_b: c.mean[1],
        j_c: c.mean[2],
        fano_e: c.fano[0],
    })
}

pub fn fano_e_for_spectrum(params: &SystemParams, spectrum: &HarmonicSpectrum) -> Result<f64> {
    let rm = full_rate_model(params, spectrum, false)?;
    let (j, v) = mean_and_variance(&rm, Bath::Emitter, DerivativeScheme::Jet)?;
    if j == 0.0 {
        return Err(Error::Numerical("emitter current vanishes, Fano factor undefined".into()));
    }
    Ok(v / j)
}

/// Harmonic weights of `w`. The adaptive cutoff never goes past the last
/// harmonic with a positive base sideband 2Δ + qν.
pub fn waveform_spectrum(w: &CrabWaveform, cutoff: HarmonicCutoff, delta: f64) -> Result<HarmonicSpectrum> {
    match cutoff {
        HarmonicCutoff::Fixed(q) => weights_from_waveform(w, q),
        HarmonicCutoff::Adaptive { deficit_tol, cap } => {
            let nu = w.nu();
            let positive = libm::ceil(2.0 * delta / nu) - 1.0;
            let cap = if positive < cap as f64 { (positive as u32).max(1) } else { cap };
            weights_from_waveform_adaptive(w, deficit_tol, cap)
        }
    }
}

/// β₊ of a CRAB waveform at (T_B, ν = 2π/τ).
pub fn objective_beta_plus(
    w: &CrabWaveform,
    params: &SystemParams,
    t_b: f64,
    probe: f64,
    cutoff: HarmonicCutoff,
) -> Result<BetaEval> {
    let s = waveform_spectrum(w, cutoff, params.delta)?;
    beta_for_spectrum(params, &s, t_b, probe)
}

/// F_E of a CRAB waveform at `params`.
pub fn objective_fano_e(w: &CrabWaveform, params: &SystemParams, cutoff: HarmonicCutoff) -> Result<f64> {
    let s = waveform_spectrum(w, cutoff, params.delta)?;
    fano_e_for_spectrum(params, &s)
}

/// One logged objective evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub restart: usize,
    pub eval: usize,
    /// β₊ or F_E; ∓∞ on failure, ±f64::MAX when β diverged.
    pub objective: f64,
    pub diverged: bool,
    pub failed: bool,
    pub mu: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RestartTrace {
    pub restart: usize,
    pub evaluations: Vec<Evaluation>,
    pub converged: bool,
    /// Last error message seen, if any evaluation failed.
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptResult {
    pub best_waveform: CrabWaveform,
    pub best_objective: f64,
    pub best_diverged: bool,
    pub best_restart: usize,
    pub best_eval: usize,
    pub spectrum: HarmonicSpectrum,
    pub side: SideQuantities,
    pub traces: Vec<RestartTrace>,
}

/// Uniform double in [0, 1) from 53 random bits.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Independent generator for restart `r`.
pub fn restart_rng(master_seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(r as u64);
    rng
}

fn lower(i: usize, dim: usize) -> f64 {
    if i == dim - 1 {
        0.0
    } else {
        -1.0
    }
}

fn clamp_point(x: &[f64]) -> (Vec<f64>, f64) {
    let dim = x.len();
    let mut excess = 0.0;
    let c: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let lo = lower(i, dim);
            let cl = v.clamp(lo, 1.0);
            excess += (v - cl) * (v - cl);
            cl
        })
        .collect();
    (c, excess)
}

fn waveform_from(x: &[f64], cfg: &CrabConfig, tau: f64) -> CrabWaveform {
    let n = cfg.n_modes;
    CrabWaveform {
        omega0: cfg.omega0,
        mu: x[2 * n],
        a: x[..n].to_vec(),
        b: x[n..2 * n].to_vec(),
        tau,
        envelope_fraction: cfg.envelope_fraction,
    }
}

struct Evaluator<'a> {
    cfg: &'a CrabConfig,
    params: SystemParams,
    point: SweepPoint,
    tau: f64,
    restart: usize,
    log: Vec<Evaluation>,
    last_error: Option<String>,
}

impl Evaluator<'_> {
    /// Simplex score (minimized) of a raw point; logs the evaluation.
    fn score(&mut self, x: &[f64]) -> f64 {
        if self.log.len() >= self.cfg.max_evals {
            return f64::INFINITY;
        }
        let (xc, excess) = clamp_point(x);
        let w = waveform_from(&xc, self.cfg, self.tau);
        let maximize = self.cfg.objective == Objective::MaximizeBetaPlus;
        let outcome: Result<(f64, bool)> = match self.cfg.objective {
            Objective::MaximizeBetaPlus => {
                objective_beta_plus(&w, &self.params, self.point.t_b, self.cfg.beta_probe, self.cfg.cutoff)
                    .map(|b| (b.beta_plus, b.diverged))
            }
            Objective::MinimizeFanoE => objective_fano_e(&w, &self.params, self.cfg.cutoff).map(|f| (f, false)),
        };
        let (objective, diverged, failed) = match outcome {
            Ok((v, d)) if v.is_finite() => (v, d, false),
            Ok(_) => (f64::NAN, false, true),
            Err(e) => {
                self.last_error = Some(format!("{e}"));
                (f64::NAN, false, true)
            }
        };
        let logged = if failed {
            if maximize {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        } else {
            objective
        };
        self.log.push(Evaluation {
            restart: self.restart,
            eval: self.log.len(),
            objective: logged,
            diverged,
            failed,
            mu: w.mu,
            a: w.a,
            b: w.b,
        });
        if failed || diverged {
            return f64::INFINITY;
        }
        let s = if maximize { -objective } else { objective };
        s + (1.0 + s.abs()) * excess
    }
}

/// Runs one Nelder–Mead restart. Pure and deterministic in
/// (config, params, point, r), so restarts may run in any order.
pub fn run_restart(cfg: &CrabConfig, params: &SystemParams, point: SweepPoint, r: usize) -> Result<RestartTrace> {
    cfg.validate()?;
    if !(point.nu > 0.0) {
        return Err(Error::domain("CRAB needs nu > 0"));
    }
    let params = params.with_t_b(point.t_b)?;
    let dim = cfg.dim();
    let mut rng = restart_rng(cfg.master_seed, r);
    let x0: Vec<f64> = (0..dim)
        .map(|i| {
            let lo = lower(i, dim);
            lo + (1.0 - lo) * uniform(&mut rng)
        })
        .collect();
    let mut ev = Evaluator {
        cfg,
        params,
        point,
        tau: 2.0 * PI / point.nu,
        restart: r,
        log: Vec::new(),
        last_error: None,
    };

    // initial simplex: steps of a quarter of the box width, pointed inward
    let mut simplex: Vec<Vec<f64>> = vec![x0.clone()];
    for i in 0..dim {
        let mut v = x0.clone();
        let lo = lower(i, dim);
        let step = 0.25 * (1.0 - lo);
        v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut f: Vec<f64> = simplex.iter().map(|x| ev.score(x)).collect();
    let mut converged = false;

    while ev.log.len() < cfg.max_evals {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&i, &j| f[i].total_cmp(&f[j]).then(i.cmp(&j)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        f = order.iter().map(|&i| f[i]).collect();

        let (best, worst) = (f[0], f[dim]);
        if best.is_finite() && worst.is_finite() && (worst - best).abs() <= cfg.tolerance * (best.abs() + 1e-12) {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for x in &simplex[..dim] {
            for k in 0..dim {
                centroid[k] += x[k] / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { (0..dim).map(|k| centroid[k] + t * (simplex[dim][k] - centroid[k])).collect() };

        let xr = along(-1.0);
        let fr = ev.score(&xr);
        if fr < f[0] {
            let xe = along(-2.0);
            let fe = ev.score(&xe);
            if fe < fr {
                simplex[dim] = xe;
                f[dim] = fe;
            } else {
                simplex[dim] = xr;
                f[dim] = fr;
            }
            continue;
        }
        if fr < f[dim - 1] {
            simplex[dim] = xr;
            f[dim] = fr;
            continue;
        }
        let (xc, fc) = if fr < f[dim] {
            let x = along(-0.5);
            let v = ev.score(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = ev.score(&x);
            (x, v)
        };
        if fc < f[dim].min(fr) {
            simplex[dim] = xc;
            f[dim] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=dim {
            if ev.log.len() >= cfg.max_evals {
                break;
            }
            let x: Vec<f64> = (0..dim).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
            f[i] = ev.score(&x);
            simplex[i] = x;
        }
    }

    Ok(RestartTrace {
        restart: r,
        evaluations: ev.log,
        converged,
        last_error: ev.last_error,
    })
}

/// Picks the best logged evaluation across restarts (ties go to the lowest
/// restart, then the earliest evaluation) and recomputes its spectrum and
/// side quantities.
pub fn aggregate(cfg: &CrabConfig, params: &SystemParams, point: SweepPoint, traces: Vec<RestartTrace>) -> Result<OptResult> {
    let maximize = cfg.objective == Objective::MaximizeBetaPlus;
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let pick = |allow_diverged: bool| -> Option<&Evaluation> {
        let mut best: Option<&Evaluation> = None;
        for t in &traces {
            for e in &t.evaluations {
                if e.failed || (e.diverged && !allow_diverged) {
                    continue;
                }
                if best.map_or(true, |b| better(e.objective, b.objective)) {
                    best = Some(e);
                }
            }
        }
        best
    };
    let best = match pick(false).or_else(|| pick(true)) {
        Some(b) => b.clone(),
        None => {
            let msg = traces
                .iter()
                .filter_map(|t| t.last_error.clone())
                .next()
                .unwrap_or_else(|| String::from("no evaluation produced a finite objective"));
            return Err(Error::OptimizationFailed(msg));
        }
    };
    let tau = 2.0 * PI / point.nu;
    let mut x = best.a.clone();
    x.extend_from_slice(&best.b);
    x.push(best.mu);
    let w = waveform_from(&x, cfg, tau);
    let spectrum = waveform_spectrum(&w, cfg.cutoff, params.delta)?;
    let side = side_quantities(&params.with_t_b(point.t_b)?, &spectrum)?;
    Ok(OptResult {
        best_waveform: w,
        best_objective: best.objective,
        best_diverged: best.diverged,
        best_restart: best.restart,
        best_eval: best.eval,
        spectrum,
        side,
        traces,
    })
}

/// Sequential multi-start optimization.
pub fn optimize(cfg: &CrabConfig, params: &SystemParams, point: SweepPoint) -> Result<OptResult> {
    cfg.validate()?;
    let mut traces = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        traces.push(run_restart(cfg, params, point, r)?);
    }
    aggregate(cfg, params, point, traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::{weights_sinusoidal, weights_unmodulated, SinusoidalDrive};

    fn base() -> SystemParams {
        SystemParams::new(1.0, 0.2, 0.1, 0.02).unwrap()
    }

    #[test]
    fn uniform_stream_is_reproducible() {
        let mut a = restart_rng(7, 3);
        let mut b = restart_rng(7, 3);
        let mut c = restart_rng(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| uniform(&mut a)).collect();
        let xb: Vec<f64> = (0..5).map(|_| uniform(&mut b)).collect();
        let xc: Vec<f64> = (0..5).map(|_| uniform(&mut c)).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert!(xa.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn zero_coefficients_match_unmodulated_beta() {
        let w = CrabWaveform::zero(3, 2.0 * PI / 0.01).unwrap();
        let crab = objective_beta_plus(&w, &base(), 0.08, 1e-3, HarmonicCutoff::Fixed(3)).unwrap();
        let un = beta_for_spectrum(&base(), &weights_unmodulated(), 0.08, 1e-3).unwrap();
        assert!(((crab.beta_plus - un.beta_plus) / un.beta_plus).abs() < 1e-9);
        assert!((crab.beta_plus + crab.beta_minus + 1.0).abs() < 1e-6);
    }

    #[test]
    fn weak_sinusoid_matches_sinusoidal_weights() {
        // a weak FM tone of index λ has weights ≈ 1 − λ²/2, λ²/4
        let nu = 0.05;
        let lambda = 0.05;
        let drive = SinusoidalDrive { lambda, nu };
        let exact = weights_from_waveform(&drive, 4).unwrap();
        let approx = weights_sinusoidal(lambda, nu).unwrap();
        let b1 = beta_for_spectrum(&base(), &exact, 0.08, 1e-3).unwrap();
        let b2 = beta_for_spectrum(&base(), &approx, 0.08, 1e-3).unwrap();
        assert!(((b1.beta_plus - b2.beta_plus) / b2.beta_plus).abs() < 1e-4);
    }

    #[test]
    fn probe_domain() {
        let s = weights_unmodulated();
        assert!(beta_for_spectrum(&base(), &s, 0.0005, 1e-3).is_err());
    }

    #[test]
    fn small_run_bookkeeping_and_determinism() {
        let cfg = CrabConfig {
            n_modes: 1,
            restarts: 2,
            max_evals: 12,
            objective: Objective::MinimizeFanoE,
            cutoff: HarmonicCutoff::Fixed(3),
            ..CrabConfig::default()
        };
        let pt = SweepPoint { t_b: 0.1, nu: 0.2 };
        let r1 = optimize(&cfg, &base(), pt).unwrap();
        let r2 = optimize(&cfg, &base(), pt).unwrap();
        assert_eq!(r1, r2);
        let best = r1
            .traces
            .iter()
            .flat_map(|t| t.evaluations.iter())
            .filter(|e| !e.failed && !e.diverged)
            .map(|e| e.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, r1.best_objective);
        for e in r1.traces.iter().flat_map(|t| t.evaluations.iter()) {
            assert!((0.0..=1.0).contains(&e.mu));
            assert!(e.a.iter().chain(&e.b).all(|c| (-1.0..=1.0).contains(c)));
        }
        assert!(r1.traces.iter().all(|t| t.evaluations.len() <= 12));
    }

    #[test]
    fn config_validation() {
        let mut c = CrabConfig::default();
        c.restarts = 0;
        assert!(c.validate().is_err());
        let c = CrabConfig {
            n_modes: 0,
            ..CrabConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
