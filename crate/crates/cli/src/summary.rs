//! Per-cell moments of a forward run at the final time.

use std::io::Write;

use dsmc_core::ensemble::{cell_index, ParticleEnsemble};
use dsmc_core::{run_forward, Problem, SimConfig, Status};
use serde::Serialize;

use crate::error::CliError;
use crate::experiment::format_float;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellMoments {
    pub cell: usize,
    pub x_center: f64,
    pub count: usize,
    /// `count / (N * dx)` with `N` the initial particle count, so a uniform
    /// gas on a unit domain has density one.
    pub density: f64,
    pub mean_velocity: Option<[f64; 3]>,
    /// Mean of the three per-component velocity variances.
    pub temperature: Option<f64>,
}

/// Moments of the active particles of `ensemble`, cell by cell.
pub fn cell_moments(ensemble: &ParticleEnsemble, config: &SimConfig, n_initial: usize) -> Result<Vec<CellMoments>, CliError> {
    let dx = config.cell_width();
    let mut members: Vec<Vec<[f64; 3]>> = vec![Vec::new(); config.n_cells];
    for i in 0..ensemble.len() {
        if ensemble.status[i] == Status::Active {
            members[cell_index(ensemble.x[i], config)?].push(ensemble.v[i]);
        }
    }
    Ok(members
        .iter()
        .enumerate()
        .map(|(j, vs)| {
            let count = vs.len();
            let mean_velocity = (count > 0).then(|| {
                let mut m = [0.0; 3];
                for v in vs {
                    for c in 0..3 {
                        m[c] += v[c] / count as f64;
                    }
                }
                m
            });
            let temperature = mean_velocity.filter(|_| count > 1).map(|m| {
                vs.iter()
                    .map(|v| (0..3).map(|c| (v[c] - m[c]).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / (3 * count) as f64
            });
            CellMoments {
                cell: j,
                x_center: config.domain_left + (j as f64 + 0.5) * dx,
                count,
                density: if n_initial == 0 { 0.0 } else { count as f64 / (n_initial as f64 * dx) },
                mean_velocity,
                temperature,
            }
        })
        .collect())
}

/// Runs the problem forward and summarizes the final state. `N = 0` gives
/// an empty summary.
pub fn forward_only(problem: &Problem) -> Result<Vec<CellMoments>, CliError> {
    if problem.n_particles == 0 {
        return Ok(Vec::new());
    }
    let run = run_forward(problem)?;
    cell_moments(&run.ensemble, &problem.sim, problem.n_particles)
}

pub fn write_moments_csv<W: Write>(cells: &[CellMoments], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "x_center", "count", "density", "mean_v1", "mean_v2", "mean_v3", "temperature"])?;
    for c in cells {
        let m = |k: usize| c.mean_velocity.map(|m| format_float(m[k])).unwrap_or_default();
        w.write_record([
            c.cell.to_string(),
            format_float(c.x_center),
            c.count.to_string(),
            format_float(c.density),
            m(0),
            m(1),
            m(2),
            c.temperature.map(format_float).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
