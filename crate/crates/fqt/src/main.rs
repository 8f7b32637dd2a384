use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fqt::config::{Mode, Overrides, RunConfig};
use fqt::error::CliError;
use fqt::{optimize, presets, sweep, validate};

/// Floquet quantum thermal transistor: sweeps, CRAB optimization, validation.
#[derive(Parser)]
#[command(name = "fqt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped figure preset (fig2a … fig8)
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the file)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the file)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides the file, then FQT_THREADS)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the base temperature
    SweepTb(Common),
    /// Sweep the modulation frequency
    SweepNu(Common),
    /// Maximize β₊ with CRAB
    OptimizeBeta(Common),
    /// Minimize the emitter Fano factor with CRAB
    OptimizeFano(Common),
    /// Run the invariant suite
    Validate {
        #[command(flatten)]
        common: Common,
        /// Print the tilted generator as JSON instead of running checks
        #[arg(long)]
        dump_matrix: bool,
        /// Counting fields χ_E,χ_B,χ_C for --dump-matrix
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0,0,0")]
        chi: Vec<f64>,
    },
    /// Print a preset's TOML, or list presets
    Preset { name: Option<String> },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seed: common.seed,
        threads: common.threads,
    });
    Ok(cfg)
}

fn check_mode(cfg: &RunConfig, mode: Mode) {
    if let Some(m) = cfg.mode {
        if m != mode {
            eprintln!("note: config is written for {}, running {}", m.label(), mode.label());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SweepTb(c) => sweep_cmd(&c, Mode::SweepTb)?,
        Command::SweepNu(c) => sweep_cmd(&c, Mode::SweepNu)?,
        Command::OptimizeBeta(c) => optimize_cmd(&c, Mode::OptimizeBeta)?,
        Command::OptimizeFano(c) => optimize_cmd(&c, Mode::OptimizeFano)?,
        Command::Validate {
            common,
            dump_matrix,
            chi,
        } => {
            let cfg = load(&common)?;
            if dump_matrix {
                let d = validate::dump_matrix(&cfg, [chi[0], chi[1], chi[2]])?;
                println!("{}", serde_json::to_string_pretty(&d)?);
                return Ok(());
            }
            let r = validate::run_validate(&cfg)?;
            for c in &r.checks {
                println!("{}", c.line());
            }
            let n = r.gating_failures();
            if n > 0 {
                return Err(CliError::ValidationFailed(n));
            }
        }
        Command::Preset { name: None } => {
            for (n, text) in presets::PRESETS {
                println!("{n:6} {}", text.lines().next().unwrap_or("").trim_start_matches("# "));
            }
        }
        Command::Preset { name: Some(n) } => {
            let text = presets::preset_text(&n).ok_or_else(|| CliError::Usage(format!("unknown preset {n}")))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn sweep_cmd(c: &Common, mode: Mode) -> Result<(), CliError> {
    let cfg = load(c)?;
    check_mode(&cfg, mode);
    let rep = sweep::run_sweep(&cfg, mode)?;
    for o in &rep.outcomes {
        println!(
            "{}: {} rows, {} failed, max normalization deficit {:.3e}",
            o.protocol.label(),
            o.rows.len(),
            o.failed(),
            o.max_deficit()
        );
    }
    println!("record: {}", rep.record.display());
    Ok(())
}

fn optimize_cmd(c: &Common, mode: Mode) -> Result<(), CliError> {
    let cfg = load(c)?;
    check_mode(&cfg, mode);
    let rep = optimize::run_optimize(&cfg, mode)?;
    let r = &rep.result;
    println!(
        "best objective {} (restart {}, eval {}{})",
        sweep::num(r.best_objective),
        r.best_restart,
        r.best_eval,
        if r.best_diverged { ", diverged" } else { "" }
    );
    let b = &rep.baselines;
    match mode {
        Mode::OptimizeBeta => println!(
            "baselines: sinusoidal β₊ {}, π-flip β₊ {}, unmodulated β₊ {}",
            b.sinusoidal.beta_plus.map(sweep::num).unwrap_or_else(|| "nan".into()),
            b.pi_flip.beta_plus.map(sweep::num).unwrap_or_else(|| "nan".into()),
            b.unmodulated.beta_plus.map(sweep::num).unwrap_or_else(|| "nan".into()),
        ),
        _ => println!(
            "baselines: unmodulated F_E {}, sinusoidal F_E {}",
            b.unmodulated.side.and_then(|s| s.fano_e).map(sweep::num).unwrap_or_else(|| "nan".into()),
            b.sinusoidal.side.and_then(|s| s.fano_e).map(sweep::num).unwrap_or_else(|| "nan".into()),
        ),
    }
    println!("record: {}\ntrace: {}", rep.json.display(), rep.trace.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fqt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
