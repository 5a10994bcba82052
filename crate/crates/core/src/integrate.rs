//! Fixed-step RK4 for oscillatory closed loops, trajectory storage and
//! comparison.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults;
use crate::esc::{AveragedSystem, EscController, EscError};
use crate::expr::EvalError;
use crate::model::{ModelError, NonAffineSystem};

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("initial state has {found} entries, expected {expected}")]
    InitialState { expected: usize, found: usize },
    #[error("non-finite vector field at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Esc(#[from] EscError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("trajectories do not share a time window")]
    DisjointWindows,
    #[error("trajectories have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("malformed trajectory CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed(f64),
    /// `steps_per_period` steps per dither period `2*pi/omega`.
    PerPeriod { steps_per_period: usize, omega: f64 },
}

impl StepPolicy {
    /// Requested step before it is shrunk to divide the horizon evenly.
    pub fn nominal_dt(&self) -> Result<f64, IntegrateError> {
        let dt = match *self {
            StepPolicy::Fixed(dt) => dt,
            StepPolicy::PerPeriod {
                steps_per_period,
                omega,
            } => TAU / (omega * steps_per_period as f64),
        };
        if dt > 0.0 && dt.is_finite() {
            Ok(dt)
        } else {
            Err(IntegrateError::InvalidStep(dt))
        }
    }
}

/// Number of uniform steps covering `horizon` with steps no longer than `dt`.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    // the relative slack keeps T/dt = 1000.0000000000001 from adding a step
    ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// `|x|_inf` exceeded the cutoff at time `t`; the trajectory stops there.
    BlowUp { t: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub system: String,
    pub params: BTreeMap<String, f64>,
    /// Effective uniform step.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim` values per time.
    pub states: Vec<f64>,
    pub controls: Option<Vec<f64>>,
    pub status: Status,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories are never empty")
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.status, Status::BlowUp { .. })
    }

    /// Linear interpolation of the state at `t` inside the time window.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) -> bool {
        let (t0, t1) = (self.times[0], self.final_time());
        if t < t0 || t > t1 {
            return false;
        }
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        if i + 1 >= self.len() {
            out.copy_from_slice(self.last_state());
            return true;
        }
        let (ta, tb) = (self.times[i], self.times[i + 1]);
        let w = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
        let (a, b) = (self.state(i), self.state(i + 1));
        for j in 0..self.dim {
            out[j] = a[j] + w * (b[j] - a[j]);
        }
        true
    }

    /// Writes `t,x1,...,xn[,u]` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), IntegrateError> {
        let mut header = String::from("t");
        for i in 1..=self.dim {
            header.push_str(&format!(",x{i}"));
        }
        if self.controls.is_some() {
            header.push_str(",u");
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            line.push_str(&format!("{:.16e}", self.times[i]));
            for v in self.state(i) {
                line.push_str(&format!(",{v:.16e}"));
            }
            if let Some(u) = &self.controls {
                line.push_str(&format!(",{:.16e}", u[i]));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory, IntegrateError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(IntegrateError::Csv {
            line: 1,
            msg: "empty file".into(),
        })??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let bad = |line: usize, msg: String| IntegrateError::Csv { line, msg };
        if cols.first() != Some(&"t") {
            return Err(bad(1, "first column must be t".into()));
        }
        let has_u = cols.last() == Some(&"u");
        let dim = cols.len() - 1 - has_u as usize;
        for (i, c) in cols[1..=dim].iter().enumerate() {
            if *c != format!("x{}", i + 1) {
                return Err(bad(1, format!("unexpected column `{c}`")));
            }
        }
        if dim == 0 {
            return Err(bad(1, "no state columns".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut controls = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(n + 2, e.to_string()))?;
            if vals.len() != cols.len() {
                return Err(bad(n + 2, format!("{} fields, expected {}", vals.len(), cols.len())));
            }
            if let Some(&prev) = times.last() {
                if vals[0] <= prev {
                    return Err(bad(n + 2, "times must be strictly increasing".into()));
                }
            }
            times.push(vals[0]);
            states.extend_from_slice(&vals[1..=dim]);
            if has_u {
                controls.push(vals[dim + 1]);
            }
        }
        if times.is_empty() {
            return Err(bad(2, "no samples".into()));
        }
        Ok(Trajectory {
            dim,
            times,
            states,
            controls: has_u.then_some(controls),
            status: Status::Completed,
            meta: TrajectoryMeta::default(),
        })
    }
}

/// Result of stepping without storing the path.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalState {
    pub t: f64,
    pub x: Vec<f64>,
    pub status: Status,
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Classical RK4 over `n` uniform steps of `[t0, t0 + horizon]`, calling
/// `observe(t, x)` at every grid point including the first.
///
/// Grid times are `t0 + i*horizon/n`, with the last one exactly `t0 + horizon`.
fn rk4_run<F, O>(
    mut field: F,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    n: usize,
    cutoff: f64,
    mut observe: O,
) -> Result<FinalState, IntegrateError>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> Result<(), IntegrateError>,
    O: FnMut(f64, &[f64]) -> Result<(), IntegrateError>,
{
    let dim = x0.len();
    let dt = horizon / n as f64;
    let t_end = t0 + horizon;
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut eval = |x: &[f64], t: f64, out: &mut [f64]| -> Result<(), IntegrateError> {
        field(x, t, out)?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(IntegrateError::NonFinite { t })
        }
    };
    observe(t0, &x)?;
    if sup_norm(&x) > cutoff {
        return Ok(FinalState {
            t: t0,
            x,
            status: Status::BlowUp { t: t0 },
        });
    }
    let half = 0.5 * dt;
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        eval(&x, t, &mut k1)?;
        for j in 0..dim {
            tmp[j] = x[j] + half * k1[j];
        }
        eval(&tmp, t + half, &mut k2)?;
        for j in 0..dim {
            tmp[j] = x[j] + half * k2[j];
        }
        eval(&tmp, t + half, &mut k3)?;
        for j in 0..dim {
            tmp[j] = x[j] + dt * k3[j];
        }
        eval(&tmp, t + dt, &mut k4)?;
        for j in 0..dim {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = if i + 1 == n {
            t_end
        } else {
            t0 + (i + 1) as f64 * dt
        };
        if !x.iter().all(|v| v.is_finite()) || sup_norm(&x) > cutoff {
            if x.iter().all(|v| v.is_finite()) {
                observe(t_next, &x)?;
            }
            return Ok(FinalState {
                t: t_next,
                x,
                status: Status::BlowUp { t: t_next },
            });
        }
        observe(t_next, &x)?;
    }
    Ok(FinalState {
        t: t_end,
        x,
        status: Status::Completed,
    })
}

fn check_inputs(x0: &[f64], dim: usize, horizon: f64) -> Result<(), IntegrateError> {
    if x0.len() != dim {
        return Err(IntegrateError::InitialState {
            expected: dim,
            found: x0.len(),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(IntegrateError::InvalidHorizon(horizon));
    }
    Ok(())
}

/// Integrates `x' = field(x, t)` from `(t0, x0)` over `horizon`.
///
/// The step requested by `policy` is shrunk so that a whole number of equal
/// steps ends exactly at `t0 + horizon`. Integration stops with
/// [`Status::BlowUp`] once `|x|_inf > cutoff`.
pub fn integrate<F>(
    field: F,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    policy: StepPolicy,
    cutoff: f64,
) -> Result<Trajectory, IntegrateError>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> Result<(), IntegrateError>,
{
    check_inputs(x0, x0.len(), horizon)?;
    let n = step_count(horizon, policy.nominal_dt()?);
    let dim = x0.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity((n + 1) * dim);
    let end = rk4_run(field, x0, t0, horizon, n, cutoff, |t, x| {
        times.push(t);
        states.extend_from_slice(x);
        Ok(())
    })?;
    Ok(Trajectory {
        dim,
        times,
        states,
        controls: None,
        status: end.status,
        meta: TrajectoryMeta {
            dt: horizon / n as f64,
            ..TrajectoryMeta::default()
        },
    })
}

fn closed_loop_field<'a>(
    sys: &'a NonAffineSystem,
    c: &'a EscController,
) -> impl FnMut(&[f64], f64, &mut [f64]) -> Result<(), IntegrateError> + 'a {
    move |x, t, out| {
        let u = c.control_for(sys, x, t)?;
        sys.rhs_into(x, t, u, out).map_err(|e| match e {
            ModelError::NonFinite { t } => IntegrateError::NonFinite { t },
            other => other.into(),
        })
    }
}

fn controller_params(c: &EscController, steps_per_period: usize) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("m".to_string(), c.m as f64),
        ("alpha".to_string(), c.alpha),
        ("omega".to_string(), c.omega),
        ("k".to_string(), c.k),
        ("steps_per_period".to_string(), steps_per_period as f64),
    ])
}

/// Closed loop `x' = rhs(x, t, u(x,t))` with `u` recomputed at every RK stage.
/// The control series is recorded alongside the states.
pub fn integrate_closed_loop(
    sys: &NonAffineSystem,
    c: &EscController,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    steps_per_period: usize,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(x0, sys.dim, horizon)?;
    c.check_against(sys)?;
    let policy = StepPolicy::PerPeriod {
        steps_per_period,
        omega: c.omega,
    };
    let n = step_count(horizon, policy.nominal_dt()?);
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity((n + 1) * sys.dim);
    let mut controls = Vec::with_capacity(n + 1);
    let end = rk4_run(
        closed_loop_field(sys, c),
        x0,
        t0,
        horizon,
        n,
        sys.blowup_cutoff,
        |t, x| {
            times.push(t);
            states.extend_from_slice(x);
            controls.push(c.control_for(sys, x, t)?);
            Ok(())
        },
    )?;
    Ok(Trajectory {
        dim: sys.dim,
        times,
        states,
        controls: Some(controls),
        status: end.status,
        meta: TrajectoryMeta {
            system: sys.name.clone(),
            params: controller_params(c, steps_per_period),
            dt: horizon / n as f64,
        },
    })
}

/// Like [`integrate_closed_loop`] but keeps only the end point.
pub fn closed_loop_final_state(
    sys: &NonAffineSystem,
    c: &EscController,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    steps_per_period: usize,
) -> Result<FinalState, IntegrateError> {
    check_inputs(x0, sys.dim, horizon)?;
    c.check_against(sys)?;
    let policy = StepPolicy::PerPeriod {
        steps_per_period,
        omega: c.omega,
    };
    let n = step_count(horizon, policy.nominal_dt()?);
    rk4_run(
        closed_loop_field(sys, c),
        x0,
        t0,
        horizon,
        n,
        sys.blowup_cutoff,
        |_, _| Ok(()),
    )
}

/// Integrates an averaged system with `steps` uniform steps.
pub fn integrate_average(
    avg: &AveragedSystem,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    steps: usize,
    cutoff: f64,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(x0, avg.dim, horizon)?;
    if steps == 0 {
        return Err(IntegrateError::InvalidStep(f64::INFINITY));
    }
    let mut traj = integrate(
        |x, t, out| avg.rhs_into(x, t, out).map_err(IntegrateError::from),
        x0,
        t0,
        horizon,
        StepPolicy::Fixed(horizon / steps as f64),
        cutoff,
    )?;
    traj.meta.params.insert("steps".into(), steps as f64);
    Ok(traj)
}

/// Integrates with the default resolution for slow systems.
pub fn integrate_average_default(
    avg: &AveragedSystem,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    cutoff: f64,
) -> Result<Trajectory, IntegrateError> {
    integrate_average(avg, x0, t0, horizon, defaults::AVERAGE_STEPS, cutoff)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Max over the shared window of `|a(t) - b(t)|_inf`.
    pub sup_error: f64,
    /// `|a - b|_inf` at the last shared sample.
    pub terminal_error: f64,
    pub window: [f64; 2],
    /// True when `b` had to be interpolated onto the times of `a`.
    pub resampled: bool,
    pub samples: usize,
}

/// Compares `a` and `b` on the samples of `a` inside the shared window,
/// interpolating `b` linearly when the grids differ.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<ComparisonReport, IntegrateError> {
    if a.dim != b.dim {
        return Err(IntegrateError::DimensionMismatch(a.dim, b.dim));
    }
    let lo = a.times[0].max(b.times[0]);
    let hi = a.final_time().min(b.final_time());
    if lo > hi {
        return Err(IntegrateError::DisjointWindows);
    }
    let same_grid = a.times == b.times;
    let mut bx = vec![0.0; a.dim];
    let mut sup: f64 = 0.0;
    let mut last = None;
    let mut samples = 0;
    for i in 0..a.len() {
        let t = a.times[i];
        if t < lo || t > hi {
            continue;
        }
        let other = if same_grid {
            b.state(i)
        } else {
            b.interpolate(t, &mut bx);
            &bx
        };
        let err = a
            .state(i)
            .iter()
            .zip(other)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        sup = sup.max(err);
        last = Some(err);
        samples += 1;
    }
    let terminal_error = last.ok_or(IntegrateError::DisjointWindows)?;
    Ok(ComparisonReport {
        sup_error: sup,
        terminal_error,
        window: [lo, hi],
        resampled: !same_grid,
        samples,
    })
}
