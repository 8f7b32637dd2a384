//! CRAB runs: restarts in parallel, JSON record with baselines, CSV trace.

use std::fmt::Write as _;
use std::path::PathBuf;

use fqt_core::analysis::{amplification_analytic, ClosedFormInputs};
use fqt_core::modulation::{weights_pi_flip, weights_sinusoidal, weights_unmodulated};
use fqt_core::optimizer::{
    aggregate, beta_for_spectrum, run_restart, side_quantities, Objective, OptResult, RestartTrace, SideQuantities,
    SweepPoint,
};
use fqt_core::{CrabWaveform, HarmonicSpectrum, SystemParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::record::{timestamp, write_json, Software};
use crate::sweep::num;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Baseline {
    pub protocol: String,
    pub beta_plus: Option<f64>,
    pub beta_minus: Option<f64>,
    pub beta_diverged: Option<bool>,
    pub side: Option<SideQuantities>,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Baselines {
    pub sinusoidal: Baseline,
    pub pi_flip: Baseline,
    pub unmodulated: Baseline,
    /// Low-temperature analytic β₊ of the π-flip weights at this point.
    pub pi_flip_analytic_beta_plus: Option<f64>,
}

fn baseline(name: String, params: &SystemParams, spectrum: fqt_core::Result<HarmonicSpectrum>, probe: f64) -> Baseline {
    let Ok(s) = spectrum else {
        return Baseline {
            protocol: name,
            beta_plus: None,
            beta_minus: None,
            beta_diverged: None,
            side: None,
            deficit: f64::NAN,
        };
    };
    let beta = beta_for_spectrum(params, &s, params.t_b, probe).ok();
    Baseline {
        protocol: name,
        beta_plus: beta.map(|b| b.beta_plus),
        beta_minus: beta.map(|b| b.beta_minus),
        beta_diverged: beta.map(|b| b.diverged),
        side: side_quantities(params, &s).ok(),
        deficit: s.deficit,
    }
}

pub fn baselines(params: &SystemParams, nu: f64, lambda: f64, probe: f64) -> Baselines {
    let pi = weights_pi_flip(nu);
    let analytic = pi
        .as_ref()
        .ok()
        .and_then(|s| ClosedFormInputs::new(params, s).ok())
        .and_then(|inp| amplification_analytic(inp.m, inp.aux.r_of_0).ok())
        .map(|b| b.0);
    Baselines {
        sinusoidal: baseline(format!("sinusoidal-{lambda}"), params, weights_sinusoidal(lambda, nu), probe),
        pi_flip: baseline("pi-flip".into(), params, pi, probe),
        unmodulated: baseline("unmodulated".into(), params, Ok(weights_unmodulated()), probe),
        pi_flip_analytic_beta_plus: analytic,
    }
}

#[derive(Debug, Serialize)]
struct BestRecord<'a> {
    objective: f64,
    diverged: bool,
    restart: usize,
    eval: usize,
    waveform: &'a CrabWaveform,
}

#[derive(Debug, Serialize)]
struct SpectrumRecord {
    nu: f64,
    q_max: i32,
    deficit: f64,
    weights: Vec<(i32, f64)>,
}

#[derive(Debug, Serialize)]
struct RestartSummary {
    restart: usize,
    evaluations: usize,
    converged: bool,
    failed: usize,
    diverged: usize,
    last_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct OptimizeRecord<'a> {
    software: Software,
    timestamp: u64,
    mode: &'static str,
    objective: Objective,
    point: SweepPoint,
    status: &'static str,
    error: Option<String>,
    best: Option<BestRecord<'a>>,
    spectrum: Option<SpectrumRecord>,
    side: Option<SideQuantities>,
    baselines: &'a Baselines,
    restarts: Vec<RestartSummary>,
    config: &'a RunConfig,
}

#[derive(Debug)]
pub struct OptimizeReport {
    pub result: OptResult,
    pub baselines: Baselines,
    pub json: PathBuf,
    pub trace: PathBuf,
}

pub fn trace_csv(traces: &[RestartTrace], n_modes: usize) -> String {
    let mut s = String::from("restart,eval,objective,mu");
    for k in 1..=n_modes {
        let _ = write!(s, ",a{k}");
    }
    for k in 1..=n_modes {
        let _ = write!(s, ",b{k}");
    }
    s.push('\n');
    for t in traces {
        for e in &t.evaluations {
            let _ = write!(s, "{},{},{},{}", e.restart, e.eval, num(e.objective), num(e.mu));
            for v in e.a.iter().chain(&e.b) {
                let _ = write!(s, ",{}", num(*v));
            }
            s.push('\n');
        }
    }
    s
}

pub fn objective_for(mode: Mode) -> Result<Objective, CliError> {
    match mode {
        Mode::OptimizeBeta => Ok(Objective::MaximizeBetaPlus),
        Mode::OptimizeFano => Ok(Objective::MinimizeFanoE),
        other => Err(CliError::Usage(format!("{} is not an optimization mode", other.label()))),
    }
}

/// Runs the configured optimization. The record and trace are written even
/// when no restart produced a usable objective.
pub fn run_optimize(cfg: &RunConfig, mode: Mode) -> Result<OptimizeReport, CliError> {
    let objective = objective_for(mode)?;
    let params = cfg.params.system()?;
    if params.zero_tb {
        return Err(CliError::Usage("optimization needs a finite T_B".into()));
    }
    let point = SweepPoint {
        t_b: params.t_b,
        nu: cfg.params.nu,
    };
    let crab = cfg.crab_config(objective);
    crab.validate()?;
    if !(point.nu > 0.0) {
        return Err(CliError::Usage("params.nu must be > 0".into()));
    }
    let pool = cfg.thread_pool()?;
    let traces = pool.install(|| {
        (0..crab.restarts)
            .into_par_iter()
            .map(|r| run_restart(&crab, &params, point, r))
            .collect::<fqt_core::Result<Vec<_>>>()
    })?;

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let trace = dir.join(format!("{}_trace.csv", cfg.name));
    std::fs::write(&trace, trace_csv(&traces, crab.n_modes))?;

    let base = baselines(&params, point.nu, cfg.optimize.baseline_lambda, crab.beta_probe);
    let summaries: Vec<RestartSummary> = traces
        .iter()
        .map(|t| RestartSummary {
            restart: t.restart,
            evaluations: t.evaluations.len(),
            converged: t.converged,
            failed: t.evaluations.iter().filter(|e| e.failed).count(),
            diverged: t.evaluations.iter().filter(|e| e.diverged).count(),
            last_error: t.last_error.clone(),
        })
        .collect();
    let json = dir.join(format!("{}.json", cfg.name));
    let outcome = aggregate(&crab, &params, point, traces);
    let mut record = OptimizeRecord {
        software: Software::current(),
        timestamp: timestamp(),
        mode: mode.label(),
        objective,
        point,
        status: "ok",
        error: None,
        best: None,
        spectrum: None,
        side: None,
        baselines: &base,
        restarts: summaries,
        config: cfg,
    };
    match outcome {
        Ok(result) => {
            record.best = Some(BestRecord {
                objective: result.best_objective,
                diverged: result.best_diverged,
                restart: result.best_restart,
                eval: result.best_eval,
                waveform: &result.best_waveform,
            });
            record.spectrum = Some(SpectrumRecord {
                nu: result.spectrum.nu,
                q_max: result.spectrum.max_harmonic(),
                deficit: result.spectrum.deficit,
                weights: result.spectrum.iter().collect(),
            });
            record.side = Some(result.side);
            write_json(&json, &record)?;
            Ok(OptimizeReport {
                result,
                baselines: base,
                json,
                trace,
            })
        }
        Err(e) => {
            record.status = "failed";
            record.error = Some(e.to_string());
            write_json(&json, &record)?;
            Err(e.into())
        }
    }
}
