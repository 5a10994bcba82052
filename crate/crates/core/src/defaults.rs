//! Default values shared by the library and the command line.
//!
//! | name | value | used by |
//! |---|---|---|
//! | `STEPS_PER_PERIOD` | 50 | closed-loop RK4 steps per dither period |
//! | `AVERAGE_STEPS` | 5000 | RK4 steps over the horizon of an averaged system |
//! | `THETA_CONV` | 0.25 | sweep: `|x(T)|` at or below this is convergent |
//! | `DISPLAY_CUTOFF` | 3 | sweep: `|x(T)|` at or above this is divergent |
//! | `GRID_SIZE` | 40 | sweep: points per axis |
//! | `BLOWUP_CUTOFF` | 1e6 | integration stops when `|x|_inf` exceeds this |
//! | `EMPIRICAL_PERIODS` | 10 | dither periods averaged by the empirical field |
//! | `EMPIRICAL_STEPS_PER_PERIOD` | 200 | RK4 resolution of the empirical field |
//! | `QUADRATURE_NODES_PER_PERIOD` | 200 | weak-limit quadrature resolution |
//! | `MIN_NODES_PER_PERIOD` | 50 | weak-limit quadrature refuses coarser grids |
//! | `JOBS` | 1 | sweep worker threads |

pub const STEPS_PER_PERIOD: usize = 50;
pub const AVERAGE_STEPS: usize = 5000;
pub const THETA_CONV: f64 = 0.25;
pub const DISPLAY_CUTOFF: f64 = 3.0;
pub const GRID_SIZE: usize = 40;
pub const BLOWUP_CUTOFF: f64 = crate::model::DEFAULT_BLOWUP_CUTOFF;
pub const EMPIRICAL_PERIODS: usize = 10;
pub const EMPIRICAL_STEPS_PER_PERIOD: usize = 200;
pub const QUADRATURE_NODES_PER_PERIOD: usize = 200;
pub const MIN_NODES_PER_PERIOD: usize = 50;
pub const JOBS: usize = 1;
