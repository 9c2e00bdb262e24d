use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use facsel::commands::{self, Bf2Inputs};
use facsel::config::{Bf2Config, DimSelectConfig};
use facsel::error::{CliError, CliResult, ExitCode};
use facsel::{io, report};

#[derive(Parser)]
#[command(name = "facsel", version, about = "Bayesian selection of factor dimensionality and constrained loading models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Base random seed (overrides the config file's).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (simulate, check) or directory (dim-select, bf2, pipeline).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a data set from a generating model given as JSON (`--config`).
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit k = 0..k_max unrestricted models and select the number of factors.
    DimSelect {
        #[command(flatten)]
        common: Common,
        /// Data CSV: header of item names, one row per observation.
        #[arg(long)]
        data: PathBuf,
        /// Largest number of factors (overrides the config file's).
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Check that a pattern file identifies a unique confirmatory solution.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pattern: PathBuf,
    },
    /// Bayes factors of constraint systems against the base pattern.
    Bf2 {
        #[command(flatten)]
        common: Common,
        /// Data CSV; omit when reading posterior draws with `--draws`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        pattern: PathBuf,
        /// One `.fcs` file per competing model.
        #[arg(long = "constraints", num_args = 0..)]
        constraints: Vec<PathBuf>,
        /// Previously exported draw files (one per chain) instead of sampling.
        #[arg(long = "draws", num_args = 1..)]
        draws: Vec<PathBuf>,
        /// Proceed even if the pattern is not identified.
        #[arg(long)]
        allow_unidentified: bool,
        /// Write the posterior draws next to the report.
        #[arg(long)]
        export_draws: bool,
    },
    /// Dimensionality, base-pattern check, constraint binding and Type II selection in one run.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    path.as_deref().map_or_else(|| Ok(T::default()), io::read_json)
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("facsel-out"))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Simulate { common } => {
            let spec = common.config.as_deref().ok_or_else(|| CliError::Usage("simulate needs --config <spec.json>".into()))?;
            let out = common.out.as_deref().ok_or_else(|| CliError::Usage("simulate needs --out <data.csv>".into()))?;
            let data = commands::simulate(spec, out, common.seed)?;
            println!("wrote {} observations of {} items to {}", data.n(), data.p(), out.display());
        }
        Command::DimSelect { common, data, k_max } => {
            let mut config: DimSelectConfig = config_or_default(&common.config)?;
            if let Some(k) = k_max {
                config.k_max = k;
            }
            let dataset = io::read_dataset(&data)?;
            let dir = out_dir(&common);
            let rep = commands::dim_select(&dataset, &label(&data), &config, common.seed.unwrap_or(1), Some(&dir))?;
            print!("{}", report::selection_table(&rep.selection));
            println!("report: {}", dir.join("dim_select.json").display());
        }
        Command::Check { common, pattern } => {
            let rep = commands::check(&pattern)?;
            if let Some(out) = &common.out {
                io::write_json(out, &rep)?;
            }
            print!("{}", report::identification_table(&rep.report));
            if !rep.report.overall {
                return Ok(ExitCode::Model);
            }
        }
        Command::Bf2 { common, data, pattern, constraints, draws, allow_unidentified, export_draws } => {
            let mut config: Bf2Config = config_or_default(&common.config)?;
            config.allow_unidentified |= allow_unidentified;
            config.export_draws |= export_draws;
            let dataset = data.as_deref().map(io::read_dataset).transpose()?;
            let inputs = Bf2Inputs {
                data: dataset.as_ref().zip(data.as_deref().map(label)),
                draw_files: draws,
                pattern: io::read_pattern(&pattern)?,
                pattern_label: label(&pattern),
                systems: commands::load_systems(&constraints)?,
            };
            let dir = out_dir(&common);
            let rep = commands::bf2(&inputs, &config, common.seed.unwrap_or(1), Some(&dir))?;
            print!("{}", report::type2_table(&rep.type2));
            println!("report: {}", dir.join("type2.json").display());
        }
        Command::Pipeline { common } => {
            let path = common.config.as_deref().ok_or_else(|| CliError::Usage("pipeline needs --config <pipeline.json>".into()))?;
            let mut config = commands::load_pipeline_config(path)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(out) = common.out {
                config.out_dir = out;
            }
            let rep = commands::pipeline(&config)?;
            for s in &rep.stages {
                println!("stage {:<26} {:>8.1} s", s.stage, s.seconds);
            }
            if let Some(d) = &rep.dimensionality {
                print!("{}", report::selection_table(&d.selection));
            }
            if let Some(id) = &rep.identification {
                print!("{}", report::identification_table(id));
            }
            if let Some(t) = &rep.type2 {
                print!("{}", report::type2_table(&t.type2));
            }
            println!("report: {}", config.out_dir.join("pipeline_report.json").display());
        }
    }
    Ok(ExitCode::Success)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { ExitCode::Usage } else { ExitCode::Success };
            process::exit(code as i32);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    process::exit(code as i32);
}
