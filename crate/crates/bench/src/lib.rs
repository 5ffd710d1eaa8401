//! Shared builders for the kernel benchmarks.

use mswl_core::geometry::Grid;
use mswl_core::waveop::{manufactured_solution, Manufactured, SpaceTimeTrace};

/// A mid-sized exact trace for derivative/norm benchmarks.
pub fn bench_trace(c: f64, nx: usize, t_end: f64) -> SpaceTimeTrace {
    let x_max = c * t_end + 1.0;
    let grid = Grid::with_cfl(x_max, nx, t_end, 0.8, c, 1).expect("grid");
    let kind = Manufactured::SplitBump { speed: c, amplitude: 0.3 };
    manufactured_solution(&kind, &grid, 1).expect("trace")
}

/// A solver-scale grid for stepping benchmarks.
pub fn stepping_grid(nx: usize) -> Grid {
    Grid::with_cfl(64.0, nx, 8.0, 0.8, 2.0, 1).expect("grid")
}
