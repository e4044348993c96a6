//! Fixtures shared by the benchmarks.

use dsmc_cli::Preset;
use dsmc_core::{run_forward, ForwardRun, Problem};

/// Particle counts swept by the solver benchmarks.
pub const SIZES: [usize; 3] = [1_000, 10_000, 100_000];

/// The desk-scale problem of `preset` at `n` initial particles.
pub fn problem(preset: Preset, n: usize) -> Problem {
    preset.desk_spec().problem_for(n)
}

/// A recorded forward run, ready for adjoint sweeps.
pub fn recorded(preset: Preset, n: usize) -> ForwardRun {
    run_forward(&problem(preset, n)).expect("preset problems are valid")
}
