//! Argument parsing and command dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dsmc_core::{run_adjoint, run_forward, AdjointOptions};

use crate::document::{read_config, ExperimentSpec};
use crate::error::CliError;
use crate::experiment::{emit_csv, emit_json, run_experiment};
use crate::presets::Preset;
use crate::summary::{forward_only, write_moments_csv};

#[derive(Debug, Parser)]
#[command(name = "dsmc-adjoint", version, about = "DSMC forward runs, adjoint gradients and finite-difference checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the forward solver and write per-cell moments at the final time.
    Forward(CommonArgs),
    /// Run forward and adjoint once and write the gradient report as JSON.
    Gradient(CommonArgs),
    /// Compare adjoint and finite-difference gradients at one particle count.
    FdCheck(CommonArgs),
    /// Run a full verification sweep.
    Experiment {
        /// heat_conduction, mixed_reflection or inflow; may be omitted when --config is given.
        #[arg(value_name = "PRESET")]
        experiment: Option<Preset>,
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Record wall-clock seconds per particle count (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Particle count; repeat for a sweep.
    #[arg(short = 'N', long = "particles")]
    pub particles: Vec<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON configuration document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset used when no configuration file is given.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<Preset>,
    /// Shrink replica counts and the particle sweep to workstation size.
    #[arg(long)]
    pub desk_scale: bool,
}

impl CommonArgs {
    fn spec(&self, preset: Option<Preset>) -> Result<ExperimentSpec, CliError> {
        let mut spec = match (&self.config, preset.or(self.preset)) {
            (Some(path), None) => read_config(path)?,
            (None, Some(p)) => p.spec(),
            (None, None) => Preset::HeatConduction.spec(),
            (Some(_), Some(_)) => {
                return Err(CliError::InvalidArgument("give either a preset or --config, not both".into()))
            }
        };
        if self.desk_scale {
            spec = spec.desk_scaled();
        }
        if !self.particles.is_empty() {
            spec.particles = self.particles.clone();
        }
        if let Some(r) = self.replicas {
            spec.replicas = r;
        }
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if spec.replicas == 0 {
            return Err(CliError::InvalidArgument("replicas must be at least 1".into()));
        }
        Ok(spec)
    }

    /// The first particle count, for single-run commands.
    fn single_count(spec: &ExperimentSpec) -> usize {
        spec.particles[0]
    }
}

fn write_text(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::output(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Forward(args) => {
            let spec = args.spec(None)?;
            let cells = forward_only(&spec.problem_for(CommonArgs::single_count(&spec)))?;
            let mut buf = Vec::new();
            write_moments_csv(&cells, &mut buf).map_err(|e| CliError::output(Path::new("<buffer>"), e))?;
            write_text(&String::from_utf8_lossy(&buf), args.out.as_deref())
        }
        Command::Gradient(args) => {
            let spec = args.spec(None)?;
            let problem = spec.problem_for(CommonArgs::single_count(&spec));
            let run = run_forward(&problem)?;
            let report = run_adjoint(&run.tape, &run.ensemble, &problem.observable, &AdjointOptions::default())?;
            let text = serde_json::to_string_pretty(&report.to_flat_json())
                .map_err(|e| CliError::InvalidArgument(e.to_string()))?;
            write_text(&(text + "\n"), args.out.as_deref())
        }
        Command::FdCheck(args) => {
            let mut spec = args.spec(None)?;
            spec.particles.truncate(1);
            let rows = run_experiment(&spec, false)?;
            emit_csv(&rows, args.out.as_deref())
        }
        Command::Experiment { experiment, common, json, timing } => {
            let spec = common.spec(experiment)?;
            let rows = run_experiment(&spec, timing)?;
            emit_csv(&rows, common.out.as_deref())?;
            if let Some(path) = json {
                emit_json(&rows, &path)?;
            }
            Ok(())
        }
    }
}
