use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nbrepro::pipeline::{install_sigint_handler, Pipeline, RunStatus, Settings, STAGES};
use nbrepro::store::footprint::{FootprintEstimate, FootprintParams};
use nbrepro::store::{estimate_footprint, Store};
use nbrepro::Error;

#[derive(Parser)]
#[command(
    name = "nbrepro",
    version,
    about = "Audit the reproducibility of notebooks cited in articles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order, resuming recorded work.
    Run(Common),
    /// Run a single stage; its predecessor must have completed.
    Stage {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(STAGES))]
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Energy, carbon and tree-month estimate.
    Footprint(FootprintArgs),
    /// Parse one notebook and print metrics, imports and style findings.
    Inspect { notebook: PathBuf },
}

#[derive(Args)]
struct FootprintArgs {
    /// Runtime in hours.
    #[arg(long, conflicts_with_all = ["energy_kwh", "store"])]
    runtime_h: Option<f64>,
    /// Use a measured energy figure instead of the power model.
    #[arg(long, conflicts_with = "store")]
    energy_kwh: Option<f64>,
    /// Sum recorded execution time from a pipeline store.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    cores: Option<f64>,
    #[arg(long)]
    core_power_w: Option<f64>,
    #[arg(long)]
    usage: Option<f64>,
    #[arg(long)]
    mem_gb: Option<f64>,
    #[arg(long)]
    mem_power_w_per_gb: Option<f64>,
    #[arg(long)]
    pue: Option<f64>,
    #[arg(long)]
    intensity: Option<f64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::StageDependency { .. } => 2,
        _ => 1,
    }
}

fn settings(common: Common) -> nbrepro::Result<nbrepro::pipeline::PipelineConfig> {
    let base = match &common.config {
        Some(p) => Settings::from_toml_file(p)?,
        None => Settings::default(),
    };
    base.overlay(common.settings).resolve()
}

fn finish(status: RunStatus) -> ExitCode {
    match status {
        RunStatus::Finished(funnel) => {
            println!("funnel: {funnel}");
            ExitCode::SUCCESS
        }
        RunStatus::Interrupted { stage } => {
            eprintln!("interrupted during {stage}; rerun to resume");
            ExitCode::from(130)
        }
    }
}

fn footprint(a: FootprintArgs) -> nbrepro::Result<FootprintEstimate> {
    let d = FootprintParams::default();
    let p = FootprintParams {
        cores: a.cores.unwrap_or(d.cores),
        core_power_w: a.core_power_w.unwrap_or(d.core_power_w),
        usage: a.usage.unwrap_or(d.usage),
        mem_gb: a.mem_gb.unwrap_or(d.mem_gb),
        mem_power_w_per_gb: a.mem_power_w_per_gb.unwrap_or(d.mem_power_w_per_gb),
        pue: a.pue.unwrap_or(d.pue),
        carbon_intensity_kg_per_kwh: a.intensity.unwrap_or(d.carbon_intensity_kg_per_kwh),
    };
    match (a.runtime_h, a.energy_kwh, a.store) {
        (Some(h), _, _) => estimate_footprint(h, p),
        (_, Some(e), _) => FootprintEstimate::from_energy(e, p),
        (_, _, Some(path)) => {
            let store = Store::open(&path)?;
            estimate_footprint(nbrepro::pipeline::recorded_runtime_hours(&store)?, p)
        }
        _ => Err(Error::Usage("give one of --runtime-h, --energy-kwh or --store".into())),
    }
}

fn inspect(path: PathBuf) -> nbrepro::Result<serde_json::Value> {
    let display = path.display().to_string();
    let nb = nbrepro::inventory::parse_notebook(&path, &display).map_err(|e| Error::Rejected(e.reason))?;
    let imports = nbrepro::analysis::extract_imports(0, &nb.cells);
    let style = nbrepro::analysis::style_check(0, &nb.cells);
    Ok(json!({
        "language": nb.record.language.as_str(),
        "language_version": nb.record.language_version,
        "metrics": nb.record.metrics,
        "name_flags": nb.record.name_flags,
        "imports": imports.iter().map(|i| json!({
            "cell": i.cell_index, "line": i.line, "module": i.module, "top_level": i.top_level,
        })).collect::<Vec<_>>(),
        "style": style.iter().map(|f| json!({
            "cell": f.cell_index, "line": f.line, "column": f.column, "code": f.code,
        })).collect::<Vec<_>>(),
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(common) => settings(common).and_then(|cfg| {
            install_sigint_handler();
            Pipeline::open(cfg)?.run_all()
        }),
        Command::Stage { name, common } => settings(common).and_then(|cfg| {
            install_sigint_handler();
            Pipeline::open(cfg)?.run_stage(&name)
        }),
        Command::Footprint(a) => {
            return match footprint(a) {
                Ok(e) => {
                    println!("{}", serde_json::to_string_pretty(&e).expect("serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e))
                }
            }
        }
        Command::Inspect { notebook } => {
            return match inspect(notebook) {
                Ok(v) => {
                    println!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e))
                }
            }
        }
    };
    match result {
        Ok(status) => finish(status),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
