use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use trajlab::checkpoint::Checkpoint;
use trajlab::config::{load_toy_spec, RunConfig};
use trajlab::harness::{emit_plots, write_tables, Lab};
use trajlab::ingest::{load_trajectories, write_trajectories, Schema};
use trajlab::report::{significance_table, EvalReport};
use trajlab::{LabError, Result};
use trajlab_core::dataset::synth_toy_dataset;
use trajlab_core::model::Family;
use trajlab_core::rng::derive_seed;

#[derive(Parser)]
#[command(name = "trajlab", version, about = "Generative landing-trajectory lab with cross-airport transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CSV export and optionally rewrite it in canonical units.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize flights from a toy airport spec.
    Toygen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        flights: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the source airport.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a pretrained checkpoint on a fraction of the target airport.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from scratch on the full target training split.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw condition-matched samples against the target test set.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated paths against the target test set.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        split: f64,
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Significance table and plots from saved reports.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole protocol from one configuration file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
struct GeneratedFile {
    model_family: Family,
    tokens: Vec<usize>,
    paths: Vec<Vec<[f64; 2]>>,
}

fn lab(config: &Path) -> Result<Lab> {
    let mut lab = Lab::new(RunConfig::load(config)?)?;
    lab.verbose = true;
    Ok(lab)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { input, schema, out } => {
            let schema = schema.as_deref().map(Schema::load).transpose()?.unwrap_or_default();
            let flights = load_trajectories(&input, &schema)?;
            let points: usize = flights.iter().map(|f| f.points.len()).sum();
            println!("{} flights, {points} points", flights.len());
            if let Some(out) = out {
                write_trajectories(&out, &flights)?;
            }
        }
        Command::Toygen { spec, flights, seed, out } => {
            let spec = load_toy_spec(&spec)?;
            let data = synth_toy_dataset(&spec, flights, seed)?;
            write_trajectories(&out, &data)?;
            println!("{} flights written to {}", data.len(), out.display());
        }
        Command::Pretrain { config, out } => {
            let ck = lab(&config)?.pretrain()?;
            println!("{}", ck.save(&out)?);
        }
        Command::Finetune { config, checkpoint, fraction, out } => {
            let ck = lab(&config)?.finetune(&Checkpoint::load(&checkpoint)?, fraction)?;
            println!("{}", ck.save(&out)?);
        }
        Command::Baseline { config, out } => {
            let ck = lab(&config)?.baseline()?;
            println!("{}", ck.save(&out)?);
        }
        Command::Generate { config, checkpoint, n, seed, out } => {
            let lab = lab(&config)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let n = n.unwrap_or(lab.config.n_generate);
            let seed = seed.unwrap_or_else(|| derive_seed(lab.config.seed, "generate"));
            let g = lab.generate_condition_matched(&ck, n, seed)?;
            write_json(&out, &GeneratedFile { model_family: ck.manifest.family, tokens: g.tokens, paths: g.paths })?;
        }
        Command::Evaluate { config, generated, split, baseline, out } => {
            let lab = lab(&config)?;
            let text = fs::read_to_string(&generated).map_err(|e| LabError::io(&generated, e))?;
            let g: GeneratedFile = serde_json::from_str(&text)?;
            let report = lab.evaluate(&g.paths, if baseline { "baseline" } else { "transfer" }, split)?;
            report.save(&out)?;
        }
        Command::Report { baseline, reports, out } => {
            let base = EvalReport::load(&baseline)?;
            let reports = reports.iter().map(|p| EvalReport::load(p)).collect::<Result<Vec<_>>>()?;
            let table = significance_table(&reports, &base)?;
            fs::create_dir_all(&out).map_err(|e| LabError::io(&out, e))?;
            write_tables(&table, &out)?;
            let settings = Default::default();
            for r in reports.iter().chain([&base]) {
                emit_plots(r, &out, &settings)?;
            }
            print!("{}", table.to_text());
        }
        Command::Experiment { config, out } => {
            let lab = lab(&config)?;
            let out = out.unwrap_or_else(|| lab.config.out_dir.clone());
            let record = lab.run_experiment(Some(&out))?;
            print!("{}", record.significance.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
