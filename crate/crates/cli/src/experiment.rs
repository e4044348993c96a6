//! Adjoint-versus-finite-difference sweeps and their tabular output.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use dsmc_core::verify::{adjoint_gradient_stats, compare, fd_gradients, ErrorMode, FdSpec};
use dsmc_core::AdjointOptions;
use serde::{Deserialize, Serialize};

use crate::document::ExperimentSpec;
use crate::error::CliError;

/// One `(N, component)` line of an experiment table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub n_particles: usize,
    pub replicas: usize,
    pub component: String,
    pub adjoint_mean: f64,
    pub adjoint_std: Option<f64>,
    pub fd_mean: f64,
    pub fd_std: Option<f64>,
    pub error: f64,
    pub error_kind: ErrorMode,
    /// Wall-clock time of the whole `N` block; only recorded on request so
    /// that tables stay reproducible.
    pub seconds: Option<f64>,
}

impl ResultRow {
    /// Standard error of the finite-difference mean.
    pub fn fd_std_error(&self) -> Option<f64> {
        self.fd_std.map(|s| s / (self.replicas as f64).sqrt())
    }
}

pub const CSV_HEADER: [&str; 11] = [
    "experiment",
    "n_particles",
    "replicas",
    "component",
    "adjoint_mean",
    "adjoint_std",
    "fd_mean",
    "fd_std",
    "error",
    "error_kind",
    "seconds",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Runs the adjoint and finite-difference estimators for every particle
/// count of `spec`, in increasing order.
pub fn run_experiment(spec: &ExperimentSpec, timing: bool) -> Result<Vec<ResultRow>, CliError> {
    if spec.replicas == 0 {
        return Err(CliError::InvalidArgument("replicas must be at least 1".into()));
    }
    let mut counts = spec.particles.clone();
    counts.sort_unstable();
    counts.dedup();
    let mut rows = Vec::with_capacity(counts.len() * spec.params.len());
    for n in counts {
        let start = Instant::now();
        let problem = spec.problem_for(n);
        let adjoint = adjoint_gradient_stats(
            &problem,
            &spec.params,
            spec.replicas,
            spec.seed(),
            &AdjointOptions::default(),
        )?;
        let fd = fd_gradients(
            &problem,
            &FdSpec {
                params: spec.params.clone(),
                delta: spec.delta,
                n_replicas: spec.replicas,
                base_seed: spec.seed(),
            },
        )?;
        let errors = compare(&adjoint, &fd, spec.error_mode)?;
        let seconds = timing.then(|| start.elapsed().as_secs_f64());
        log::info!("{} N={n}: {:.1}s", spec.name, start.elapsed().as_secs_f64());
        for (p, param) in spec.params.iter().enumerate() {
            rows.push(ResultRow {
                experiment: spec.name.clone(),
                n_particles: n,
                replicas: spec.replicas,
                component: param.label(),
                adjoint_mean: adjoint.mean[p],
                adjoint_std: adjoint.std[p],
                fd_mean: fd.mean[p],
                fd_std: fd.std[p],
                error: errors[p].error,
                error_kind: errors[p].mode,
                seconds,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let kind = match r.error_kind {
            ErrorMode::Relative => "relative",
            ErrorMode::Absolute => "absolute",
        };
        w.write_record([
            r.experiment.clone(),
            r.n_particles.to_string(),
            r.replicas.to_string(),
            r.component.clone(),
            format_float(r.adjoint_mean),
            format_opt(r.adjoint_std),
            format_float(r.fd_mean),
            format_opt(r.fd_std),
            format_float(r.error),
            kind.to_string(),
            format_opt(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>, CliError> {
    let parse_err = |e: &dyn std::fmt::Display| CliError::InvalidArgument(format!("malformed result table: {e}"));
    let mut rows = Vec::new();
    for record in csv::Reader::from_reader(input).records() {
        let r = record.map_err(|e| parse_err(&e))?;
        let f = |i: usize| r[i].parse::<f64>().map_err(|e| parse_err(&e));
        let opt = |i: usize| if r[i].is_empty() { Ok(None) } else { f(i).map(Some) };
        rows.push(ResultRow {
            experiment: r[0].to_string(),
            n_particles: r[1].parse().map_err(|e| parse_err(&e))?,
            replicas: r[2].parse().map_err(|e| parse_err(&e))?,
            component: r[3].to_string(),
            adjoint_mean: f(4)?,
            adjoint_std: opt(5)?,
            fd_mean: f(6)?,
            fd_std: opt(7)?,
            error: f(8)?,
            error_kind: if &r[9] == "absolute" { ErrorMode::Absolute } else { ErrorMode::Relative },
            seconds: opt(10)?,
        });
    }
    Ok(rows)
}

/// Writes the table to `path`, or to standard output when `path` is `None`.
pub fn emit_csv(rows: &[ResultRow], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::output(path, e))?;
            write_csv(rows, file).map_err(|e| CliError::output(path, e))
        }
        None => write_csv(rows, std::io::stdout().lock())
            .map_err(|e| CliError::output(Path::new("<stdout>"), e)),
    }
}

pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(rows).map_err(|e| CliError::output(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::Preset;

    fn tiny(preset: Preset) -> ExperimentSpec {
        let mut spec = preset.spec();
        spec.particles = vec![400, 200];
        spec.replicas = 2;
        spec.problem.sim.n_steps = 2;
        spec.inflow_density_factor = spec.inflow_density_factor.map(|_| 0.5);
        spec
    }

    #[test]
    fn one_row_per_count_and_component_in_order() {
        let rows = run_experiment(&tiny(Preset::HeatConduction), false).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].n_particles, 200);
        assert_eq!(rows[6].n_particles, 400);
        assert_eq!(rows[0].component, "T_left_1");
        assert_eq!(rows[5].component, "T_right_3");
        assert!(rows.iter().all(|r| r.seconds.is_none() && r.adjoint_std.is_some()));
    }

    #[test]
    fn zero_replicas_is_rejected() {
        let mut spec = tiny(Preset::MixedReflection);
        spec.replicas = 0;
        assert_eq!(run_experiment(&spec, false).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rows = run_experiment(&tiny(Preset::Inflow), true).unwrap();
        rows[0].adjoint_std = None;
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("experiment,n_particles,replicas,component,"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
        assert!(rows.iter().all(|r| r.error_kind == ErrorMode::Absolute));
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5), "-2.5000000000000000e0");
    }
}
