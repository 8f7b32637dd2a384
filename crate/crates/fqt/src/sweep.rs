//! T_B and ν sweeps: one CSV row per grid point, optional SVG, JSON record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fqt_core::analysis::{amplification_numeric, fano_bound, Amplification, SweepSample, DIVERGENCE_THRESHOLD};
use fqt_core::cumulants::{cumulants, mean_and_variance, DerivativeScheme};
use fqt_core::liouvillian::full_rate_model;
use fqt_core::modulation::{weights_pi_flip, weights_sinusoidal, weights_unmodulated};
use fqt_core::optimizer::{beta_for_spectrum, waveform_spectrum, BetaEval, HarmonicCutoff};
use fqt_core::{Bath, CrabWaveform, HarmonicSpectrum, SystemParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, Protocol, RunConfig, Scale};
use crate::error::CliError;
use crate::record::{write_json, Software};
use crate::svg::{line_chart, Series};

pub const CSV_HEADER: &str =
    "var,J_E,J_B,J_C,var_E,var_B,var_C,fano_E,fano_B,fano_C,bound_E,bound_B,bound_C,beta_plus,beta_minus,diverged";

#[derive(Debug, Clone, PartialEq)]
pub struct RowData {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub fano: [Option<f64>; 3],
    pub bound: [Option<f64>; 3],
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub diverged: bool,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub var: f64,
    pub result: Result<RowData, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub protocol: Protocol,
    pub rows: Vec<Row>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_err()).count()
    }

    pub fn max_deficit(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .map(|d| d.deficit.abs())
            .fold(0.0, f64::max)
    }
}

/// Reads a CRAB waveform from either a bare waveform JSON or an
/// optimization record.
pub fn load_waveform(path: &Path) -> Result<CrabWaveform, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let w = v.pointer("/best/waveform").cloned().unwrap_or(v);
    let w: CrabWaveform = serde_json::from_value(w).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    w.validate()?;
    Ok(w)
}

/// Harmonic weights of `protocol` at modulation frequency ν.
pub fn spectrum_for(
    protocol: &Protocol,
    nu: f64,
    crab: Option<&CrabWaveform>,
    cutoff: HarmonicCutoff,
    delta: f64,
) -> fqt_core::Result<HarmonicSpectrum> {
    match protocol {
        Protocol::Unmodulated => Ok(weights_unmodulated()),
        Protocol::Sinusoidal { lambda } => weights_sinusoidal(*lambda, nu),
        Protocol::PiFlip => weights_pi_flip(nu),
        Protocol::Crab { .. } => {
            let mut w = crab.expect("waveform loaded").clone();
            w.tau = 2.0 * std::f64::consts::PI / nu;
            waveform_spectrum(&w, cutoff, delta)
        }
    }
}

/// dJ/dT_B just above T_B = 0, from the T_B → 0 limit and T_B = probe.
fn beta_one_sided(params: &SystemParams, spectrum: &HarmonicSpectrum, probe: f64) -> fqt_core::Result<BetaEval> {
    let currents = |p: &SystemParams| -> fqt_core::Result<[f64; 3]> {
        let rm = full_rate_model(p, spectrum, false)?;
        let mut j = [0.0; 3];
        for b in Bath::ALL {
            j[b.index()] = mean_and_variance(&rm, b, DerivativeScheme::Jet)?.0;
        }
        Ok(j)
    };
    let mut warm = *params;
    warm.zero_tb = false;
    let hi = currents(&warm.with_t_b(probe)?)?;
    let lo = currents(&params.with_zero_tb())?;
    let (de, db, dc) = (hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    if db.abs() < DIVERGENCE_THRESHOLD * de.abs().max(dc.abs()) {
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

fn point(cfg: &RunConfig, params: &SystemParams, spectrum: &HarmonicSpectrum) -> fqt_core::Result<RowData> {
    let c = cumulants(params, spectrum, &cfg.pipeline.options())?;
    Ok(RowData {
        mean: c.mean,
        variance: c.variance,
        fano: c.fano,
        bound: Bath::ALL.map(|b| fano_bound(c.mean, params, b, cfg.pipeline.entropy)),
        beta_plus: f64::NAN,
        beta_minus: f64::NAN,
        diverged: false,
        deficit: spectrum.deficit,
    })
}

/// Evaluates one protocol over the configured grid. Rows come back in grid
/// order whatever the thread count.
pub fn compute_sweep(
    cfg: &RunConfig,
    mode: Mode,
    protocol: &Protocol,
    pool: &rayon::ThreadPool,
) -> Result<SweepOutcome, CliError> {
    let grid = cfg.grid.points()?;
    let base = cfg.params.system()?;
    let crab = match protocol {
        Protocol::Crab { file } => Some(load_waveform(file)?),
        _ => None,
    };
    let cutoff = cfg.optimize.cutoff;
    let probe = cfg.pipeline.beta_probe;
    if !(probe > 0.0) {
        return Err(CliError::Usage("pipeline.beta_probe must be > 0".into()));
    }
    let rows: Vec<Row> = match mode {
        Mode::SweepTb => {
            if base.zero_tb {
                return Err(CliError::Usage("sweep-tb cannot run with zero_tb = true".into()));
            }
            if grid[0] <= 0.0 {
                return Err(CliError::Usage("T_B grid must be positive".into()));
            }
            let nu = cfg.params.nu;
            let spectrum = spectrum_for(protocol, nu, crab.as_ref(), cutoff, base.delta);
            let mut rows: Vec<Row> = pool.install(|| {
                grid.par_iter()
                    .map(|&t_b| {
                        let result = spectrum
                            .clone()
                            .and_then(|s| point(cfg, &base.with_t_b(t_b)?, &s))
                            .map_err(|e| e.to_string());
                        Row { var: t_b, result }
                    })
                    .collect()
            });
            attach_sweep_beta(&mut rows);
            rows
        }
        Mode::SweepNu => {
            if grid[0] <= 0.0 {
                return Err(CliError::Usage("ν grid must be positive".into()));
            }
            pool.install(|| {
                grid.par_iter()
                    .map(|&nu| {
                        let result = spectrum_for(protocol, nu, crab.as_ref(), cutoff, base.delta)
                            .and_then(|s| {
                                let mut d = point(cfg, &base, &s)?;
                                let b = if base.zero_tb {
                                    beta_one_sided(&base, &s, probe)?
                                } else {
                                    beta_for_spectrum(&base, &s, base.t_b, probe)?
                                };
                                d.beta_plus = b.beta_plus;
                                d.beta_minus = b.beta_minus;
                                d.diverged = b.diverged;
                                Ok(d)
                            })
                            .map_err(|e| e.to_string());
                        Row { var: nu, result }
                    })
                    .collect()
            })
        }
        other => return Err(CliError::Usage(format!("{} is not a sweep mode", other.label()))),
    };
    Ok(SweepOutcome {
        protocol: protocol.clone(),
        rows,
    })
}

/// β± along a T_B sweep from the successful rows.
fn attach_sweep_beta(rows: &mut [Row]) {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].result.is_ok()).collect();
    let samples: Vec<SweepSample> = idx
        .iter()
        .map(|&i| {
            let d = rows[i].result.as_ref().unwrap();
            SweepSample {
                t_b: rows[i].var,
                j_e: d.mean[0],
                j_b: d.mean[1],
                j_c: d.mean[2],
            }
        })
        .collect();
    let Ok(amps) = amplification_numeric(&samples) else {
        return;
    };
    for (&i, a) in idx.iter().zip(amps) {
        let Amplification {
            beta_plus,
            beta_minus,
            diverged,
        } = a;
        if let Ok(d) = rows[i].result.as_mut() {
            d.beta_plus = beta_plus;
            d.beta_minus = beta_minus;
            d.diverged = diverged;
        }
    }
}

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.11e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "nan".into())
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s = String::with_capacity(256 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&num(r.var));
        match &r.result {
            Ok(d) => {
                for v in d.mean.iter().chain(&d.variance) {
                    let _ = write!(s, ",{}", num(*v));
                }
                for v in d.fano.iter().chain(&d.bound) {
                    let _ = write!(s, ",{}", opt(*v));
                }
                let _ = write!(s, ",{},{},{}", num(d.beta_plus), num(d.beta_minus), d.diverged);
            }
            Err(_) => s.push_str(&",nan".repeat(15)),
        }
        s.push('\n');
    }
    s
}

fn column(d: &RowData, name: &str) -> Option<f64> {
    let i = |n: &str| ["E", "B", "C"].iter().position(|b| *b == n);
    let (head, tail) = name.split_once('_').unwrap_or((name, ""));
    Some(match (head, tail) {
        ("J", b) => d.mean[i(b)?],
        ("var", b) => d.variance[i(b)?],
        ("fano", b) => d.fano[i(b)?].unwrap_or(f64::NAN),
        ("bound", b) => d.bound[i(b)?].unwrap_or(f64::NAN),
        ("beta", "plus") => d.beta_plus,
        ("beta", "minus") => d.beta_minus,
        _ => return None,
    })
}

fn to_svg(cfg: &RunConfig, mode: Mode, out: &SweepOutcome) -> Result<String, CliError> {
    let mut series = Vec::new();
    for name in &cfg.output.svg_columns {
        if !out.rows.is_empty() && !CSV_HEADER.split(',').any(|h| h == name) {
            return Err(CliError::Config(format!("unknown svg column {name}")));
        }
        let points = out
            .rows
            .iter()
            .map(|r| {
                let y = r
                    .result
                    .as_ref()
                    .ok()
                    .and_then(|d| column(d, name))
                    .filter(|y| y.abs() < f64::MAX)
                    .unwrap_or(f64::NAN);
                (r.var, y)
            })
            .collect();
        series.push(Series {
            name: name.clone(),
            points,
        });
    }
    let x_label = if mode == Mode::SweepTb { "T_B / Δ" } else { "ν / Δ" };
    let title = format!("{} · {}", cfg.name, out.protocol.label());
    Ok(line_chart(&title, x_label, &series, cfg.grid.scale == Scale::Log))
}

#[derive(Debug, Serialize)]
pub struct SweepFile {
    pub protocol: Protocol,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
    pub rows: usize,
    pub failed: usize,
    pub max_normalization_deficit: f64,
    pub first_error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepRecord<'a> {
    pub software: Software,
    pub timestamp: u64,
    pub mode: &'static str,
    pub config: &'a RunConfig,
    pub outputs: Vec<SweepFile>,
}

pub struct SweepReport {
    pub outcomes: Vec<SweepOutcome>,
    pub record: PathBuf,
}

/// Runs every configured protocol, writes CSV/SVG per protocol and one JSON
/// record. Fails with exit code 2 only when every row of every protocol failed.
pub fn run_sweep(cfg: &RunConfig, mode: Mode) -> Result<SweepReport, CliError> {
    if cfg.protocols.is_empty() {
        return Err(CliError::Config("no protocols configured".into()));
    }
    let pool = cfg.thread_pool()?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let mut outcomes = Vec::new();
    let mut files = Vec::new();
    for p in &cfg.protocols {
        let out = compute_sweep(cfg, mode, p, &pool)?;
        let stem = format!("{}_{}", cfg.name, p.label());
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, to_csv(&out.rows))?;
        let svg = if cfg.output.svg {
            let path = dir.join(format!("{stem}.svg"));
            std::fs::write(&path, to_svg(cfg, mode, &out)?)?;
            Some(path)
        } else {
            None
        };
        files.push(SweepFile {
            protocol: p.clone(),
            csv,
            svg,
            rows: out.rows.len(),
            failed: out.failed(),
            max_normalization_deficit: out.max_deficit(),
            first_error: out.rows.iter().find_map(|r| r.result.as_ref().err().cloned()),
        });
        outcomes.push(out);
    }
    let record = dir.join(format!("{}.json", cfg.name));
    let total: usize = files.iter().map(|f| f.rows).sum();
    let failed: usize = files.iter().map(|f| f.failed).sum();
    write_json(
        &record,
        &SweepRecord {
            software: Software::current(),
            timestamp: crate::record::timestamp(),
            mode: mode.label(),
            config: cfg,
            outputs: files,
        },
    )?;
    if failed == total {
        return Err(CliError::AllRowsFailed(total));
    }
    Ok(SweepReport { outcomes, record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Grid;

    fn small(mode: Mode) -> RunConfig {
        let mut c = RunConfig::default();
        c.grid = match mode {
            Mode::SweepTb => Grid {
                start: 0.05,
                stop: 0.1,
                steps: 6,
                scale: Scale::Linear,
            },
            _ => Grid {
                start: 0.01,
                stop: 0.5,
                steps: 5,
                scale: Scale::Log,
            },
        };
        c
    }

    fn pool(n: usize) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
    }

    #[test]
    fn number_format() {
        assert_eq!(num(6.1816e-4), "6.18160000000e-4");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(-1.0), "-1.00000000000e0");
    }

    #[test]
    fn csv_shape_and_thread_independence() {
        let cfg = small(Mode::SweepTb);
        let a = compute_sweep(&cfg, Mode::SweepTb, &Protocol::Unmodulated, &pool(1)).unwrap();
        let b = compute_sweep(&cfg, Mode::SweepTb, &Protocol::Unmodulated, &pool(3)).unwrap();
        let (ca, cb) = (to_csv(&a.rows), to_csv(&b.rows));
        assert_eq!(ca, cb);
        let lines: Vec<&str> = ca.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 16));
        let d = a.rows[2].result.as_ref().unwrap();
        assert!((d.beta_plus + d.beta_minus + 1.0).abs() < 1e-6);
    }

    #[test]
    fn nu_sweep_rows_and_failures() {
        let mut cfg = small(Mode::SweepNu);
        cfg.params.t_b = 0.118;
        let s = compute_sweep(&cfg, Mode::SweepNu, &Protocol::PiFlip, &pool(2)).unwrap();
        assert_eq!(s.failed(), 0);
        assert!(s.max_deficit() > 0.18);
        // λ = 5 drives P₀ negative, so every row fails
        let bad = compute_sweep(&cfg, Mode::SweepNu, &Protocol::Sinusoidal { lambda: 5.0 }, &pool(1)).unwrap();
        assert_eq!(bad.failed(), 5);
        assert!(to_csv(&bad.rows).lines().nth(1).unwrap().ends_with(",nan,nan,nan"));
    }

    #[test]
    fn zero_tb_nu_sweep_has_finite_beta() {
        let mut cfg = small(Mode::SweepNu);
        cfg.params.zero_tb = true;
        let s = compute_sweep(&cfg, Mode::SweepNu, &Protocol::Sinusoidal { lambda: 0.8 }, &pool(1)).unwrap();
        for r in &s.rows {
            let d = r.result.as_ref().unwrap();
            assert!(d.beta_plus.is_finite());
        }
    }

    #[test]
    fn single_step_grid_is_usage_error() {
        let mut cfg = small(Mode::SweepTb);
        cfg.grid.steps = 1;
        let e = compute_sweep(&cfg, Mode::SweepTb, &Protocol::Unmodulated, &pool(1)).unwrap_err();
        assert_eq!(e.exit_code(), 64);
    }
}
