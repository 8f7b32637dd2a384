//! Run configuration. Precedence: command-line flags, then the config file,
//! then built-in defaults. Thread count falls back to `FQT_THREADS`.

use std::path::{Path, PathBuf};

use fqt_core::analysis::EntropyConvention;
use fqt_core::cumulants::{DerivativeScheme, PipelineOptions};
use fqt_core::liouvillian::Builder;
use fqt_core::optimizer::{CrabConfig, HarmonicCutoff, Objective};
use fqt_core::SystemParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SweepTb,
    SweepNu,
    OptimizeBeta,
    OptimizeFano,
    Validate,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::SweepTb => "sweep-tb",
            Mode::SweepNu => "sweep-nu",
            Mode::OptimizeBeta => "optimize-beta",
            Mode::OptimizeFano => "optimize-fano",
            Mode::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    Unmodulated,
    /// Weak-modulation weights P₀ = 1 − λ²/2, P±1 = λ²/4.
    Sinusoidal { lambda: f64 },
    PiFlip,
    /// A CRAB waveform read from JSON: either a bare waveform or an
    /// optimization record holding `best.waveform`.
    Crab { file: PathBuf },
}

impl Protocol {
    pub fn label(&self) -> String {
        match self {
            Protocol::Unmodulated => "unmodulated".into(),
            Protocol::Sinusoidal { lambda } => format!("sinusoidal-{lambda}"),
            Protocol::PiFlip => "pi-flip".into(),
            Protocol::Crab { file } => format!(
                "crab-{}",
                file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    pub scale: Scale,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            start: 0.02,
            stop: 0.18,
            steps: 50,
            scale: Scale::Linear,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        if self.steps < 2 {
            return Err(CliError::Usage(format!("grid needs at least 2 steps, got {}", self.steps)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) || self.start >= self.stop {
            return Err(CliError::Usage(format!(
                "grid needs finite start < stop, got [{}, {}]",
                self.start, self.stop
            )));
        }
        let n = self.steps - 1;
        Ok(match self.scale {
            Scale::Linear => (0..=n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / n as f64)
                .collect(),
            Scale::Log => {
                if self.start <= 0.0 {
                    return Err(CliError::Usage("log grid needs start > 0".into()));
                }
                let (a, b) = (self.start.ln(), self.stop.ln());
                (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub delta: f64,
    pub omega0: f64,
    pub t_e: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub kappa: f64,
    pub zero_tb: bool,
    /// Modulation frequency used when ν is not the swept variable.
    pub nu: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            delta: 1.0,
            omega0: 0.0,
            t_e: 0.2,
            t_b: 0.1,
            t_c: 0.02,
            kappa: 1.0,
            zero_tb: false,
            nu: 0.2,
        }
    }
}

impl ParamsSection {
    pub fn system(&self) -> Result<SystemParams, CliError> {
        let p = SystemParams {
            delta: self.delta,
            omega0: self.omega0,
            t_e: self.t_e,
            t_b: self.t_b,
            t_c: self.t_c,
            kappa: self.kappa,
            zero_tb: self.zero_tb,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub builder: Builder,
    pub scheme: DerivativeScheme,
    pub entropy: EntropyConvention,
    /// T_B half-step for the local β probe used by ν sweeps.
    pub beta_probe: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            builder: Builder::default(),
            scheme: DerivativeScheme::default(),
            entropy: EntropyConvention::default(),
            beta_probe: 1e-3,
        }
    }
}

impl PipelineSection {
    pub fn options(&self) -> PipelineOptions {
        PipelineOptions {
            builder: self.builder,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub n_modes: usize,
    pub restarts: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    pub beta_probe: f64,
    pub cutoff: HarmonicCutoff,
    pub envelope_fraction: f64,
    /// λ of the sinusoidal baseline reported next to the optimum.
    pub baseline_lambda: f64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let c = CrabConfig::default();
        OptimizeSection {
            n_modes: c.n_modes,
            restarts: c.restarts,
            max_evals: c.max_evals,
            tolerance: c.tolerance,
            beta_probe: c.beta_probe,
            cutoff: c.cutoff,
            envelope_fraction: c.envelope_fraction,
            baseline_lambda: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
    /// Columns drawn in the SVG chart.
    pub svg_columns: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            svg: true,
            svg_columns: vec!["J_E".into(), "J_B".into(), "J_C".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mode: Option<Mode>,
    pub seed: u64,
    /// Worker threads; 0 picks `FQT_THREADS` or the machine default.
    pub threads: usize,
    pub params: ParamsSection,
    pub protocols: Vec<Protocol>,
    pub grid: Grid,
    pub pipeline: PipelineSection,
    pub optimize: OptimizeSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            mode: None,
            seed: CrabConfig::default().master_seed,
            threads: 0,
            params: ParamsSection::default(),
            protocols: vec![Protocol::Unmodulated],
            grid: Grid::default(),
            pipeline: PipelineSection::default(),
            optimize: OptimizeSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative CRAB files resolve against the config's directory
        if let Some(dir) = path.parent() {
            for p in &mut cfg.protocols {
                if let Protocol::Crab { file } = p {
                    if file.is_relative() {
                        *file = dir.join(&*file);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
    }

    /// Thread count after the `FQT_THREADS` fallback; 0 means rayon's default.
    pub fn resolved_threads(&self) -> usize {
        if self.threads > 0 {
            return self.threads;
        }
        std::env::var("FQT_THREADS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0)
    }

    pub fn crab_config(&self, objective: Objective) -> CrabConfig {
        let o = &self.optimize;
        CrabConfig {
            n_modes: o.n_modes,
            restarts: o.restarts,
            max_evals: o.max_evals,
            tolerance: o.tolerance,
            master_seed: self.seed,
            objective,
            beta_probe: o.beta_probe,
            cutoff: o.cutoff,
            envelope_fraction: o.envelope_fraction,
            omega0: self.params.omega0,
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.resolved_threads())
            .build()
            .map_err(|e| CliError::Io(e.to_string()))
    }
}
