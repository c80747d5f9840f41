use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsem_core::dsem::SchemeKind;
use dsem_core::pipeline::{run_pipeline, BuiltinSystem, RunConfig, Stages};

#[derive(Parser)]
#[command(name = "dsem", version, about = "Self-energy mapping onto sparse fictitious Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline (stages as configured).
    Run(Common),
    /// Trotter gate counts of the parent Hamiltonian only.
    Gates(Common),
    /// GF2 and the effective-integral fits.
    Fit(Common),
    /// Exact ground state of the parent Hamiltonian.
    Fci(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in system: h6_ring_sto6g, h6_ring_dz, h6_chain_dz, h2_sto6g.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    fcidump: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<SchemeKind>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(common: &Common, stages: Option<Stages>) -> dsem_core::Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &common.system {
        config.system = Some(BuiltinSystem::from_name(name)?);
        config.fcidump = None;
    }
    if let Some(p) = &common.fcidump {
        config.fcidump = Some(p.clone());
        config.system = None;
    }
    if let Some(s) = common.scheme {
        config.scheme = s;
    }
    if let Some(b) = common.beta {
        config.beta = b;
    }
    if let Some(o) = &common.out {
        config.output = o.clone();
    }
    if let Some(s) = stages {
        config.stages = s;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, stages) = match &cli.command {
        Command::Run(c) => (c, None),
        Command::Gates(c) => (c, Some(Stages::gates_only())),
        Command::Fit(c) => (c, Some(Stages::fit_only())),
        Command::Fci(c) => (c, Some(Stages::fci_only())),
    };
    let result = build_config(common, stages).and_then(|config| run_pipeline(&config).map(|a| (config, a)));
    match result {
        Ok((config, artifacts)) => {
            if let Some(report) = &artifacts.report {
                for e in &report.energies {
                    println!("{:<24} E = {:.6}  (electronic {:.6})", e.method, e.e_total, e.e_electronic);
                }
            }
            for f in &artifacts.files {
                println!("wrote {}", config.output.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dsem: {e}");
            ExitCode::FAILURE
        }
    }
}
