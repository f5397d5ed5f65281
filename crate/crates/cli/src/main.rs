//! `ladderqed`: runs the ladder experiments from a TOML configuration and
//! writes CSV data, JSON sidecars and SVG plots.

mod commands;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ladderqed::config::SimConfig;

#[derive(Parser, Debug)]
#[command(name = "ladderqed", version, about = "Correlated hopping in synthetic ladders: simulations and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration (energies in units of χN); defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding the config's `output`
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (0 = available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Evaluate the built-in checks and exit nonzero if any fails
    #[arg(long, global = true)]
    check: bool,

    /// Write SVG plots (default)
    #[arg(long, global = true, overrides_with = "no_plot")]
    plot: bool,

    #[arg(long, global = true, overrides_with = "plot")]
    no_plot: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Single H_eff trajectory from the configured initial state
    Evolve,
    /// Long-time n(1/2)/N over the (Δ_A, Δ_B) grid with the UPA boundary
    PhaseDiagram,
    /// Six-level chiral transport: balance grid and short-time N_diff
    Chiral,
    /// Connected correlators C(0, r) and their light-cone front
    Lightcone,
    /// Analytic undepleted-pump curves, couplings, boundaries and BdG spectra
    Upa,
    /// Full driven model against H_eff, plus the Zeeman scan if configured
    Benchmark,
    /// Finite-size scaling: order-parameter curves, collapse and delay times
    Fss,
    /// Residuals of the excited-manifold closure identities
    Identities,
    /// Validate the config and report the approximation regime
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::PhaseDiagram => "phase-diagram",
            Command::Chiral => "chiral",
            Command::Lightcone => "lightcone",
            Command::Upa => "upa",
            Command::Benchmark => "benchmark",
            Command::Fss => "fss",
            Command::Identities => "identities",
            Command::Validate => "validate",
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.numerics.workers = w;
    }
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = load(cli)?;
    if cfg.numerics.workers > 0 {
        // The global pool only matters for the Zeeman scan; sweeps build their own.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.numerics.workers).build_global();
    }
    let mut out = output::Emitter::new(&cfg, cli.command.name(), !cli.no_plot)?;
    let checks = match cli.command {
        Command::Evolve => commands::evolve(&cfg, &mut out),
        Command::PhaseDiagram => commands::phase_diagram(&cfg, &mut out),
        Command::Chiral => commands::chiral(&cfg, &mut out),
        Command::Lightcone => commands::lightcone(&cfg, &mut out),
        Command::Upa => commands::upa(&cfg, &mut out),
        Command::Benchmark => commands::benchmark(&cfg, &mut out),
        Command::Fss => commands::fss(&cfg, &mut out),
        Command::Identities => commands::identities(&cfg, &mut out),
        Command::Validate => commands::validate(&cfg),
    }
    .with_context(|| format!("{} failed", cli.command.name()))?;
    for path in out.written() {
        println!("wrote {}", path.display());
    }
    let mut ok = true;
    if cli.check {
        for c in &checks {
            println!("check {}: {} ({})", c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
            ok &= c.pass;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
