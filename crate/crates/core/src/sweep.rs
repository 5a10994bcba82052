//! Stability-region sweeps over two controller or system parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::esc::{
    epsilon_bound_evenpow, epsilon_bound_m0, equilibrium_boundary_uu, EscController, EscError,
};
use crate::integrate::{closed_loop_final_state, FinalState, Status, Trajectory};
use crate::model::{builtin, EvenChannelsConfig, ModelError, NonAffineSystem, SystemConfig};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Esc(#[from] EscError),
    #[error("grid has no boundary curve attached")]
    NoBoundary,
    #[error("no cells left after excluding the boundary margin")]
    NothingToScore,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Alpha,
    Omega,
    Epsilon,
    K,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Alpha => "alpha",
            Param::Omega => "omega",
            Param::Epsilon => "epsilon",
            Param::K => "k",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: Scale,
}

impl Axis {
    pub fn new(param: Param, min: f64, max: f64, count: usize, scale: Scale) -> Self {
        Axis {
            param,
            min,
            max,
            count,
            scale,
        }
    }

    fn validate(&self) -> Result<(), SweepError> {
        let name = self.param.name();
        if self.count < 2 {
            return Err(SweepError::InvalidSpec(format!("{name} axis needs at least 2 points")));
        }
        if !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(SweepError::InvalidSpec(format!(
                "{name} axis needs finite min < max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.scale == Scale::Log && self.min <= 0.0 {
            return Err(SweepError::InvalidSpec(format!("log-scaled {name} axis must be positive")));
        }
        Ok(())
    }

    /// Grid points, with both endpoints hit exactly.
    pub fn values(&self) -> Vec<f64> {
        let last = self.count - 1;
        (0..self.count)
            .map(|i| {
                if i == last {
                    return self.max;
                }
                let s = i as f64 / last as f64;
                match self.scale {
                    Scale::Linear => self.min + s * (self.max - self.min),
                    Scale::Log => self.min * (self.max / self.min).powf(s),
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Builtin system name; ignored when `config` is given.
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SystemConfig>,
    /// Even-channel strength unless swept.
    pub epsilon: f64,
    pub m: u32,
    pub alpha: f64,
    pub omega: f64,
    pub k: f64,
    /// Potential driving the dither phase.
    pub potential: String,
    /// `axes[0]` is written first in every output.
    pub axes: [Axis; 2],
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub theta_conv: f64,
    pub cutoff: f64,
    pub steps_per_period: usize,
    /// Equilibrium bound used for the boundary curve; defaults to `theta_conv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<f64>,
}

impl SweepSpec {
    fn base(system: &str, m: u32, epsilon: f64, axes: [Axis; 2]) -> Self {
        SweepSpec {
            system: system.into(),
            config: None,
            epsilon,
            m,
            alpha: 1.0,
            omega: 100.0,
            k: 100.0,
            potential: "x1^2".into(),
            axes,
            horizon: 5.0,
            x0: vec![1.0],
            theta_conv: defaults::THETA_CONV,
            cutoff: defaults::DISPLAY_CUTOFF,
            steps_per_period: defaults::STEPS_PER_PERIOD,
            x_star: None,
        }
    }

    /// `uu` over `omega in [5, 200]` and `alpha in [0.1, 2]`, `k = 100`.
    pub fn uu(m: u32, epsilon: f64, grid: usize) -> Self {
        Self::base(
            "uu",
            m,
            epsilon,
            [
                Axis::new(Param::Omega, 5.0, 200.0, grid, Scale::Linear),
                Axis::new(Param::Alpha, 0.1, 2.0, grid, Scale::Linear),
            ],
        )
    }

    /// `evenpow` over `omega in [5, 200]` and `eps in [0, 10]`, `k = 100`, `alpha = 10`.
    pub fn evenpow(m: u32, grid: usize) -> Self {
        let mut s = Self::base(
            "evenpow",
            m,
            0.0,
            [
                Axis::new(Param::Omega, 5.0, 200.0, grid, Scale::Linear),
                Axis::new(Param::Epsilon, 0.0, 10.0, grid, Scale::Linear),
            ],
        );
        s.alpha = 10.0;
        s
    }

    /// `nonlfinal` over `omega in [5, 2000]` (log) and `eps in [0, 0.5]`,
    /// `k = 100`, `alpha = 5`.
    pub fn nonlfinal(m: u32, grid: usize) -> Self {
        let mut s = Self::base(
            "nonlfinal",
            m,
            0.0,
            [
                Axis::new(Param::Omega, 5.0, 2000.0, grid, Scale::Log),
                Axis::new(Param::Epsilon, 0.0, 0.5, grid, Scale::Linear),
            ],
        );
        s.alpha = 5.0;
        s
    }

    pub fn x_star(&self) -> f64 {
        self.x_star.unwrap_or(self.theta_conv)
    }

    fn validate(&self) -> Result<(), SweepError> {
        for a in &self.axes {
            a.validate()?;
        }
        if self.axes[0].param == self.axes[1].param {
            return Err(SweepError::InvalidSpec("the two axes must sweep different parameters".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SweepError::InvalidSpec(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.theta_conv >= 0.0 && self.theta_conv < self.cutoff) {
            return Err(SweepError::InvalidSpec(format!(
                "need 0 <= theta_conv < cutoff, got {} and {}",
                self.theta_conv, self.cutoff
            )));
        }
        if self.steps_per_period == 0 {
            return Err(SweepError::InvalidSpec("steps_per_period must be positive".into()));
        }
        Ok(())
    }

    /// Parameter values of one cell.
    fn cell_params(&self, a1: f64, a2: f64) -> CellParams {
        let mut p = CellParams {
            alpha: self.alpha,
            omega: self.omega,
            epsilon: self.epsilon,
            k: self.k,
        };
        for (axis, v) in self.axes.iter().zip([a1, a2]) {
            match axis.param {
                Param::Alpha => p.alpha = v,
                Param::Omega => p.omega = v,
                Param::Epsilon => p.epsilon = v,
                Param::K => p.k = v,
            }
        }
        p
    }

    fn system(&self, epsilon: f64) -> Result<NonAffineSystem, SweepError> {
        match &self.config {
            None => Ok(builtin(&self.system, epsilon)?),
            Some(cfg) => {
                let mut cfg = cfg.clone();
                if let Some(ev) = cfg.even_channels.as_mut() {
                    ev.strength = epsilon;
                } else if epsilon != 0.0 {
                    cfg.even_channels = Some(EvenChannelsConfig {
                        strength: epsilon,
                        items: Vec::new(),
                    });
                }
                Ok(cfg.build()?)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct CellParams {
    alpha: f64,
    omega: f64,
    epsilon: f64,
    k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Convergent,
    Divergent,
    Indeterminate,
    Blowup,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Convergent => "convergent",
            Label::Divergent => "divergent",
            Label::Indeterminate => "indeterminate",
            Label::Blowup => "blowup",
        }
    }
}

fn classify_end(x: &[f64], blew_up: bool, theta_conv: f64, cutoff: f64) -> (Label, f64) {
    if blew_up {
        return (Label::Blowup, cutoff);
    }
    let r = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let label = if r >= cutoff {
        Label::Divergent
    } else if r <= theta_conv {
        Label::Convergent
    } else {
        Label::Indeterminate
    };
    (label, r.min(cutoff))
}

/// Label of a trajectory from `|x(T)|_inf`, and that value clamped to `cutoff`.
pub fn classify_trajectory(traj: &Trajectory, theta_conv: f64, cutoff: f64) -> (Label, f64) {
    classify_end(traj.last_state(), traj.blew_up(), theta_conv, cutoff)
}

pub fn classify_final(end: &FinalState, theta_conv: f64, cutoff: f64) -> (Label, f64) {
    classify_end(&end.x, matches!(end.status, Status::BlowUp { .. }), theta_conv, cutoff)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub axis1: f64,
    pub axis2: f64,
    pub terminal_abs_x: f64,
    pub label: Label,
}

/// Which side of a boundary curve is predicted stable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableSide {
    Above,
    Below,
}

/// Predicted boundary `bounded = f(free)`, sampled at the grid values of the
/// free axis. `None` marks points where no stabilizing value exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub free: Param,
    pub bounded: Param,
    pub stable_side: StableSide,
    pub samples: Vec<(f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityGrid {
    pub spec: SweepSpec,
    pub axis_values: [Vec<f64>; 2],
    /// Row-major: `axis_values[0]` outer, `axis_values[1]` inner.
    pub cells: Vec<Cell>,
    pub boundary: Option<BoundaryCurve>,
}

impl StabilityGrid {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.axis_values[1].len() + j]
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|c| c.label == label).count()
    }
}

fn run_cell(spec: &SweepSpec, a1: f64, a2: f64) -> Cell {
    let p = spec.cell_params(a1, a2);
    let outcome = (|| -> Result<(Label, f64), SweepError> {
        let sys = spec.system(p.epsilon)?;
        let c = EscController::with_potential(spec.m, p.alpha, p.omega, p.k, &spec.potential)?;
        Ok(
            match closed_loop_final_state(&sys, &c, &spec.x0, 0.0, spec.horizon, spec.steps_per_period) {
                Ok(end) => classify_final(&end, spec.theta_conv, spec.cutoff),
                Err(_) => (Label::Blowup, spec.cutoff),
            },
        )
    })();
    let (label, terminal_abs_x) = outcome.unwrap_or((Label::Blowup, spec.cutoff));
    Cell {
        axis1: a1,
        axis2: a2,
        terminal_abs_x,
        label,
    }
}

/// Analytic boundary for the sweeps that have one: `uu` over (alpha, omega)
/// and `evenpow` over (eps, omega) with `m <= 1`.
pub fn boundary_for(spec: &SweepSpec) -> Option<BoundaryCurve> {
    if spec.config.is_some() {
        return None;
    }
    let params = [spec.axes[0].param, spec.axes[1].param];
    let omega_axis = params.iter().position(|p| *p == Param::Omega)?;
    let other = params[1 - omega_axis];
    let omegas = spec.axes[omega_axis].values();
    match (spec.system.as_str(), other) {
        ("uu", Param::Alpha) => Some(BoundaryCurve {
            free: Param::Omega,
            bounded: Param::Alpha,
            stable_side: StableSide::Above,
            samples: omegas
                .iter()
                .map(|&w| {
                    let a = equilibrium_boundary_uu(spec.k, spec.m, spec.epsilon, w, spec.x_star()).ok();
                    (w, a)
                })
                .collect(),
        }),
        ("evenpow", Param::Epsilon) if spec.m <= 1 => Some(BoundaryCurve {
            free: Param::Omega,
            bounded: Param::Epsilon,
            stable_side: StableSide::Below,
            samples: omegas
                .iter()
                .map(|&w| {
                    let e = if spec.m == 1 {
                        epsilon_bound_evenpow(spec.k, spec.alpha, w)
                    } else {
                        epsilon_bound_m0(spec.alpha, w)
                    };
                    (w, Some(e))
                })
                .collect(),
        }),
        _ => None,
    }
}

/// Integrates every cell on `jobs` worker threads. The cell order, and so
/// every output derived from the grid, does not depend on `jobs`.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<StabilityGrid, SweepError> {
    spec.validate()?;
    // fail fast on a bad system or potential instead of labelling every cell
    spec.system(spec.epsilon)?;
    EscController::with_potential(spec.m, 1.0, 1.0, 0.0, &spec.potential)?;
    let axis_values = [spec.axes[0].values(), spec.axes[1].values()];
    let coords: Vec<(f64, f64)> = axis_values[0]
        .iter()
        .flat_map(|&a| axis_values[1].iter().map(move |&b| (a, b)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SweepError::Pool(e.to_string()))?;
    let cells = pool.install(|| {
        coords
            .par_iter()
            .map(|&(a, b)| run_cell(spec, a, b))
            .collect::<Vec<_>>()
    });
    Ok(StabilityGrid {
        spec: spec.clone(),
        axis_values,
        cells,
        boundary: boundary_for(spec),
    })
}

/// Cells considered by [`boundary_agreement`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    All,
    /// Cells whose `alpha * omega` is at least the median over the grid.
    LargerAlphaOmegaHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub score: f64,
    pub matched: usize,
    pub considered: usize,
    /// Cells dropped for lying within the margin of the boundary.
    pub excluded: usize,
    pub margin: f64,
    pub region: Region,
}

/// Fraction of cells whose label agrees with the side of the boundary they
/// lie on: convergent on the stable side, anything else on the other.
/// Cells within `margin` (relative) of the boundary are skipped.
pub fn boundary_agreement(grid: &StabilityGrid, margin: f64, region: Region) -> Result<Agreement, SweepError> {
    let curve = grid.boundary.as_ref().ok_or(SweepError::NoBoundary)?;
    if grid.cells.is_empty() {
        return Err(SweepError::NothingToScore);
    }
    let spec = &grid.spec;
    let free_axis = if spec.axes[0].param == curve.free { 0 } else { 1 };
    let products: Vec<f64> = grid
        .cells
        .iter()
        .map(|c| {
            let p = spec.cell_params(c.axis1, c.axis2);
            p.alpha * p.omega
        })
        .collect();
    let median = {
        let mut s = products.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    };
    let (mut matched, mut considered, mut excluded) = (0, 0, 0);
    for (cell, product) in grid.cells.iter().zip(&products) {
        if region == Region::LargerAlphaOmegaHalf && *product < median {
            continue;
        }
        let (free, bounded) = if free_axis == 0 {
            (cell.axis1, cell.axis2)
        } else {
            (cell.axis2, cell.axis1)
        };
        let boundary = curve
            .samples
            .iter()
            .find(|(at, _)| *at == free)
            .and_then(|(_, b)| *b);
        let predicted_stable = match boundary {
            None => false,
            Some(b) => {
                if (bounded - b).abs() < margin * b.abs() {
                    excluded += 1;
                    continue;
                }
                match curve.stable_side {
                    StableSide::Above => bounded > b,
                    StableSide::Below => bounded < b,
                }
            }
        };
        considered += 1;
        if predicted_stable == (cell.label == Label::Convergent) {
            matched += 1;
        }
    }
    if considered == 0 {
        return Err(SweepError::NothingToScore);
    }
    Ok(Agreement {
        score: matched as f64 / considered as f64,
        matched,
        considered,
        excluded,
        margin,
        region,
    })
}

/// Fraction of slices (fixed value of the other axis) along which, once a
/// cell is convergent with increasing `param`, every later cell is too.
pub fn monotone_slice_fraction(grid: &StabilityGrid, param: Param) -> Option<f64> {
    let along = grid.spec.axes.iter().position(|a| a.param == param)?;
    let (n0, n1) = (grid.axis_values[0].len(), grid.axis_values[1].len());
    let (slices, len) = if along == 0 { (n1, n0) } else { (n0, n1) };
    let good = (0..slices)
        .filter(|&s| {
            let labels = (0..len).map(|i| {
                let (a, b) = if along == 0 { (i, s) } else { (s, i) };
                grid.cell(a, b).label
            });
            let mut seen = false;
            labels.into_iter().all(|l| {
                if l == Label::Convergent {
                    seen = true;
                    true
                } else {
                    !seen
                }
            })
        })
        .count();
    Some(good as f64 / slices as f64)
}

/// `<axis1>,<axis2>,terminal_abs_x,label`.
pub fn write_grid_csv<W: Write>(grid: &StabilityGrid, mut w: W) -> Result<(), SweepError> {
    writeln!(
        w,
        "{},{},terminal_abs_x,label",
        grid.spec.axes[0].param.name(),
        grid.spec.axes[1].param.name()
    )?;
    for c in &grid.cells {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{}",
            c.axis1,
            c.axis2,
            c.terminal_abs_x,
            c.label.name()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// `<free>,<bounded>_boundary`, with `nan` where no boundary exists.
pub fn write_boundary_csv<W: Write>(grid: &StabilityGrid, mut w: W) -> Result<(), SweepError> {
    let curve = grid.boundary.as_ref().ok_or(SweepError::NoBoundary)?;
    writeln!(w, "{},{}_boundary", curve.free.name(), curve.bounded.name())?;
    for (at, b) in &curve.samples {
        match b {
            Some(b) => writeln!(w, "{at:.16e},{b:.16e}")?,
            None => writeln!(w, "{at:.16e},nan")?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub spec: SweepSpec,
    pub cells: usize,
    pub convergent: usize,
    pub divergent: usize,
    pub indeterminate: usize,
    pub blowup: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
}

pub fn summarize(grid: &StabilityGrid, agreement: Option<Agreement>) -> SweepSummary {
    SweepSummary {
        spec: grid.spec.clone(),
        cells: grid.cells.len(),
        convergent: grid.count(Label::Convergent),
        divergent: grid.count(Label::Divergent),
        indeterminate: grid.count(Label::Indeterminate),
        blowup: grid.count(Label::Blowup),
        agreement,
    }
}
