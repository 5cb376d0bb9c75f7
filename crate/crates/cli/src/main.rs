mod commands;
mod config;
mod figures;
mod output;

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "mcwlan", version, about = "Stability regions of single- and multi-channel 802.11 DCF WLANs")]
struct Cli {
    /// JSON experiment configuration (`-` reads stdin); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output.dir`.
    #[arg(long, global = true, env = "MCWLAN_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for grid and replication work.
    #[arg(long, global = true, env = "MCWLAN_WORKERS")]
    workers: Option<usize>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed points of the single-channel system from every configured start.
    Solve,
    /// Stability class of `lambda_mbps` across initial conditions.
    Classify,
    /// Analytic boundary of the single-channel region.
    Boundary,
    /// Boundary of the large-window closed-form region.
    RegionTilde,
    /// Boundary of the multi-channel region under an unbiased policy.
    Multichannel,
    /// Slotted-Aloha frontiers with capped attempt rates.
    Aloha,
    /// One simulation run.
    Simulate,
    /// Empirical boundary from repeated simulation.
    SweepSim,
    /// A named figure recipe.
    Fig {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(figures::RECIPES))]
        name: String,
    },
    /// Echo the fully resolved configuration, or the reasons it is invalid.
    Validate,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Solve => "solve".into(),
            Command::Classify => "classify".into(),
            Command::Boundary => "boundary".into(),
            Command::RegionTilde => "region-tilde".into(),
            Command::Multichannel => "multichannel".into(),
            Command::Aloha => "aloha".into(),
            Command::Simulate => "simulate".into(),
            Command::SweepSim => "sweep-sim".into(),
            Command::Fig { name } => format!("fig {name}"),
            Command::Validate => "validate".into(),
        }
    }
}

fn read_config(path: Option<&PathBuf>) -> Result<String> {
    match path {
        None => Ok(String::new()),
        Some(p) if p.as_os_str() == "-" => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("cannot read configuration from stdin")?;
            Ok(s)
        }
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read configuration {}", p.display())),
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let text = read_config(cli.config.as_ref())?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn error_kind(e: &anyhow::Error) -> (&'static str, u8) {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<mcwlan_core::Error>() {
            return match core {
                mcwlan_core::Error::NoConvergence { .. } | mcwlan_core::Error::AllDiverged(_) => ("no_convergence", 3),
                mcwlan_core::Error::Parameter(_) | mcwlan_core::Error::OutOfRange { .. } | mcwlan_core::Error::Domain { .. } => {
                    ("invalid_config", 2)
                }
                _ => ("model", 1),
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ("invalid_config", 2);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", 1);
        }
    }
    ("invalid_config", 2)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let tables = match &cli.command {
        Command::Solve => commands::solve(&cfg)?,
        Command::Classify => commands::classify_cmd(&cfg)?,
        Command::Boundary => commands::boundary(&cfg)?,
        Command::RegionTilde => commands::region_tilde(&cfg)?,
        Command::Multichannel => commands::multichannel(&cfg)?,
        Command::Aloha => commands::aloha(&cfg)?,
        Command::Simulate => commands::simulate_cmd(&cfg)?,
        Command::SweepSim => commands::sweep_sim(&cfg)?,
        Command::Fig { name } => figures::run(name, &cfg)?,
        Command::Validate => unreachable!("handled before dispatch"),
    };
    let name = cli.command.name();
    let files = output::write_tables(cfg.output.dir.as_ref(), &name, &cfg, &tables)?;
    let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    println!("{}", json!({ "command": name, "files": files }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": { "kind": "invalid_config", "message": e.to_string() } }));
            return ExitCode::from(2);
        }
    }
    if let Command::Validate = cli.command {
        return match load(&cli) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("configuration serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                let errors: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                println!("{}", serde_json::to_string_pretty(&json!({ "valid": false, "errors": errors })).expect("json"));
                ExitCode::from(2)
            }
        };
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": { "kind": kind, "message": e.to_string(), "causes": causes } }));
            ExitCode::from(code)
        }
    }
}
