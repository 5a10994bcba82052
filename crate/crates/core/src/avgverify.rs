//! Numerical checks of the averaging hypotheses: the empirical average
//! vector field, and uniform and weak limits of the dither terms
//!
//! ```text
//! h_{c,n,l}(t) = (alpha omega)^(b_n / 2b_m) C(b_n, l) / 2^(2n) cos(b_{n,l} omega t)
//! h_{s,n,l}(t) = same with sin,   H = integral of h from 0 to t
//! ```
//!
//! with `b_n = 2n+1` and `b_{n,l} = 2n+1-2l`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defaults::MIN_NODES_PER_PERIOD;
use crate::esc::EscController;
use crate::integrate::{closed_loop_final_state, IntegrateError, Status};
use crate::model::NonAffineSystem;
use crate::oddpoly::{binomial, pow2, weak_limit_coeff, OddPolyError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("closed loop blew up at t = {t} while averaging")]
    BlowUp { t: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Gain(#[from] OddPolyError),
    #[error("need at least {min} frequencies, got {found}")]
    TooFewFrequencies { min: usize, found: usize },
    #[error("frequencies must be positive and strictly increasing")]
    UnorderedFrequencies,
    #[error("{0} quadrature nodes per period is below the aliasing guard of {1}")]
    Underresolved(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Mean displacement rate of the closed loop over `periods` dither periods
/// starting at `(x, t)`: `(x(t + P) - x) / P` with `P = periods * 2 pi / omega`.
pub fn empirical_average_field(
    sys: &NonAffineSystem,
    c: &EscController,
    x: &[f64],
    t: f64,
    periods: usize,
    steps_per_period: usize,
) -> Result<Vec<f64>, VerifyError> {
    if periods == 0 {
        return Err(VerifyError::InvalidParameter("periods must be at least 1".into()));
    }
    let span = periods as f64 * c.period();
    let end = closed_loop_final_state(sys, c, x, t, span, steps_per_period)?;
    if let Status::BlowUp { t } = end.status {
        return Err(VerifyError::BlowUp { t });
    }
    Ok(end.x.iter().zip(x).map(|(b, a)| (b - a) / span).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// One dither term `h_{c/s,n,l}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub trig: Trig,
    pub n: u32,
    pub l: u32,
}

impl Component {
    pub fn frequency_multiplier(&self) -> u32 {
        2 * self.n + 1 - 2 * self.l
    }

    fn label(&self, prefix: char) -> String {
        let t = match self.trig {
            Trig::Cos => 'c',
            Trig::Sin => 's',
        };
        format!("{prefix}_{t}[{},{}]", self.n, self.l)
    }
}

/// Amplitude of `h_{.,n,l}` for a controller of index `m`.
pub fn component_amplitude(m: u32, n: u32, l: u32, alpha: f64, omega: f64) -> Result<f64, VerifyError> {
    let c = binomial(2 * n + 1, l).ok_or(OddPolyError::Overflow(n))? as f64;
    let d = pow2(2 * n).ok_or(OddPolyError::Overflow(n))? as f64;
    let exponent = (2 * n + 1) as f64 / (2 * (2 * m + 1)) as f64;
    Ok((alpha * omega).powf(exponent) * c / d)
}

/// Every dither component with `n <= m`.
pub fn components(m: u32) -> Vec<Component> {
    let mut out = Vec::new();
    for n in 0..=m {
        for l in 0..=n {
            for trig in [Trig::Cos, Trig::Sin] {
                out.push(Component { trig, n, l });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Uniform,
    Weak,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitEntry {
    pub label: String,
    /// `[h]` for uniform limits, `[h, H]` for weak limits of `h * H`.
    pub components: Vec<Component>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_function: Option<String>,
    /// Claimed limit, already multiplied by the integral of the test function.
    pub claimed: f64,
    /// Measured quantity per frequency.
    pub values: Vec<f64>,
    /// `|value - claimed|` per frequency.
    pub discrepancies: Vec<f64>,
    /// Least-squares slope of `log discrepancy` against `log omega`.
    pub decay_order: Option<f64>,
    /// The slope must be at or below this.
    pub required_order: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub kind: LimitKind,
    pub m: u32,
    pub alpha: f64,
    pub omegas: Vec<f64>,
    pub entries: Vec<LimitEntry>,
    pub passed: bool,
}

impl LimitReport {
    pub fn failures(&self) -> impl Iterator<Item = &LimitEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

fn check_omegas(omegas: &[f64]) -> Result<(), VerifyError> {
    if omegas.len() < 3 {
        return Err(VerifyError::TooFewFrequencies {
            min: 3,
            found: omegas.len(),
        });
    }
    if omegas[0] <= 0.0 || omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(VerifyError::UnorderedFrequencies);
    }
    Ok(())
}

fn check_resolution(nodes_per_period: usize) -> Result<(), VerifyError> {
    if nodes_per_period < MIN_NODES_PER_PERIOD {
        return Err(VerifyError::Underresolved(nodes_per_period, MIN_NODES_PER_PERIOD));
    }
    Ok(())
}

/// Slope of `ln y` against `ln x` over the points with `y > 0`.
pub fn decay_order(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

fn nodes_for(omega: f64, multiplier: u32, nodes_per_period: usize) -> usize {
    let periods = multiplier.max(1) as f64 * omega / TAU;
    let n = (periods * nodes_per_period as f64).ceil() as usize;
    (n.max(2) + 1) & !1
}

const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// `max_{t in [0,1]} |integral_0^t h|` by cumulative 3-point Gauss-Legendre
/// quadrature on a uniform grid.
fn max_abs_antiderivative(h: impl Fn(f64) -> f64, cells: usize) -> f64 {
    let dt = 1.0 / cells as f64;
    let mut acc = 0.0;
    let mut best: f64 = 0.0;
    for i in 0..cells {
        let mid = (i as f64 + 0.5) * dt;
        let mut s = 0.0;
        for (x, w) in GL3_NODES.iter().zip(GL3_WEIGHTS) {
            s += w * h(mid + 0.5 * dt * x);
        }
        acc += 0.5 * dt * s;
        best = best.max(acc.abs());
    }
    best
}

/// For every dither component with `n <= m`, measures `max |H(t)|` on
/// `[0, 1]` and fits its decay in `omega`. A component passes when the
/// maxima decrease and the fitted order is at most
/// `-(1 - b_n / (2 b_m)) + 0.1`.
pub fn verify_uniform_limits(
    m: u32,
    omegas: &[f64],
    alpha: f64,
    nodes_per_period: usize,
) -> Result<LimitReport, VerifyError> {
    check_omegas(omegas)?;
    check_resolution(nodes_per_period)?;
    if !(alpha >= 0.0) {
        return Err(VerifyError::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    let comps = components(m);
    let b_m = (2 * m + 1) as f64;
    let entries = comps
        .par_iter()
        .map(|comp| {
            let b = comp.frequency_multiplier() as f64;
            let values = omegas
                .iter()
                .map(|&w| {
                    let amp = component_amplitude(m, comp.n, comp.l, alpha, w)?;
                    let cells = nodes_for(w, comp.frequency_multiplier(), nodes_per_period);
                    let max = match comp.trig {
                        Trig::Cos => max_abs_antiderivative(|t| amp * (b * w * t).cos(), cells),
                        Trig::Sin => max_abs_antiderivative(|t| amp * (b * w * t).sin(), cells),
                    };
                    Ok(max)
                })
                .collect::<Result<Vec<f64>, VerifyError>>()?;
            let required = -(1.0 - (2 * comp.n + 1) as f64 / (2.0 * b_m)) + 0.1;
            let order = decay_order(omegas, &values);
            let decreasing = values.windows(2).all(|w| w[1] <= w[0]);
            let passed = if values.iter().all(|v| *v == 0.0) {
                true
            } else {
                decreasing && order.is_some_and(|o| o <= required)
            };
            Ok(LimitEntry {
                label: comp.label('H'),
                components: vec![*comp],
                test_function: None,
                claimed: 0.0,
                discrepancies: values.clone(),
                values,
                decay_order: order,
                required_order: required,
                passed,
            })
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let passed = entries.iter().all(|e| e.passed);
    Ok(LimitReport {
        kind: LimitKind::Uniform,
        m,
        alpha,
        omegas: omegas.to_vec(),
        entries,
        passed,
    })
}

/// The fixed test-function dictionary on `[0, 1]`: name, function, integral.
pub const TEST_FUNCTIONS: [(&str, fn(f64) -> f64, f64); 5] = [
    ("1", |_| 1.0, 1.0),
    ("tau", |t| t, 0.5),
    ("tau^2", |t| t * t, 1.0 / 3.0),
    ("cos(2 pi tau)", |t| (TAU * t).cos(), 0.0),
    ("sin(2 pi tau)", |t| (TAU * t).sin(), 0.0),
];

/// What the same-frequency products are compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakLimitTarget {
    /// `h_s H_c -> a_{m,l}` and `h_c H_s -> -a_{m,l}`.
    Coefficient,
    /// `a_{m,l} / b_{m,l}`, the limit of the products as defined.
    FrequencyScaled,
}

/// Composite Simpson weights on `cells` (even) uniform cells of `[0, 1]`.
fn simpson_weights(cells: usize) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    (0..=cells)
        .map(|i| {
            let w = if i == 0 || i == cells {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Composite Simpson rule for `integral_0^1 f` with `cells` (rounded up to even) cells.
pub fn simpson(f: impl Fn(f64) -> f64, cells: usize) -> f64 {
    let cells = (cells.max(2) + 1) & !1;
    simpson_weights(cells)
        .iter()
        .enumerate()
        .map(|(i, w)| w * f(i as f64 / cells as f64))
        .sum()
}

/// `(quadrature, closed form)` for `integral_0^1 cos^2(omega tau)`, the
/// closed form being `1/2 + sin(2 omega) / (4 omega)`.
pub fn cos_squared_check(omega: f64, nodes_per_period: usize) -> Result<(f64, f64), VerifyError> {
    check_resolution(nodes_per_period)?;
    let cells = nodes_for(omega, 1, nodes_per_period);
    let q = simpson(|t| (omega * t).cos().powi(2), cells);
    Ok((q, 0.5 + (2.0 * omega).sin() / (4.0 * omega)))
}

/// Frequencies per envelope window `[omega, omega + 2 pi)`.
const ENVELOPE_SHIFTS: usize = 8;

// integral of h_i * H_j * phi_k for every ordered component pair (i, j).
fn weak_integrals(
    m: u32,
    comps: &[Component],
    alpha: f64,
    w: f64,
    nodes_per_period: usize,
) -> Result<Vec<[f64; 5]>, VerifyError> {
    let cells = nodes_for(w, 2 * m + 1, nodes_per_period);
    let weights = simpson_weights(cells);
    let ts: Vec<f64> = (0..=cells).map(|i| i as f64 / cells as f64).collect();
    let weighted: Vec<Vec<f64>> = TEST_FUNCTIONS
        .iter()
        .map(|(_, phi, _)| ts.iter().zip(&weights).map(|(t, q)| q * phi(*t)).collect())
        .collect();
    let mut hs = Vec::with_capacity(comps.len());
    let mut big_hs = Vec::with_capacity(comps.len());
    for comp in comps {
        let amp = component_amplitude(m, comp.n, comp.l, alpha, w)?;
        let bw = comp.frequency_multiplier() as f64 * w;
        let (h, big): (Vec<f64>, Vec<f64>) = ts
            .iter()
            .map(|t| {
                let (s, c) = (bw * t).sin_cos();
                match comp.trig {
                    Trig::Cos => (amp * c, amp * s / bw),
                    Trig::Sin => (amp * s, amp * (1.0 - c) / bw),
                }
            })
            .unzip();
        hs.push(h);
        big_hs.push(big);
    }
    let mut out = Vec::with_capacity(comps.len() * comps.len());
    for h in &hs {
        for big in &big_hs {
            let mut acc = [0.0; 5];
            for (k, wphi) in weighted.iter().enumerate() {
                acc[k] = h.iter().zip(big).zip(wphi).map(|((a, b), q)| a * b * q).sum();
            }
            out.push(acc);
        }
    }
    Ok(out)
}

fn claimed_weak_limit(
    m: u32,
    h: &Component,
    big: &Component,
    alpha: f64,
    target: WeakLimitTarget,
) -> Result<f64, VerifyError> {
    if h.n != m || big.n != m || h.l != big.l || h.trig == big.trig {
        return Ok(0.0);
    }
    let a = weak_limit_coeff(m, h.l, alpha)?;
    let a = match target {
        WeakLimitTarget::Coefficient => a,
        WeakLimitTarget::FrequencyScaled => a / h.frequency_multiplier() as f64,
    };
    Ok(match h.trig {
        Trig::Sin => a,
        Trig::Cos => -a,
    })
}

/// Integrates `h * H * phi` over `[0, 1]` for every ordered pair of dither
/// components with `n <= m` and every test function, and compares against the
/// claimed weak limit: `+-a_{m,l}` (or its frequency-scaled form) for the
/// `s*H_c` and `c*H_s` products of one component of the top index, zero for
/// every other pair.
///
/// The discrepancy reported at `omega` is the largest one over eight
/// frequencies spread across `[omega, omega + 2 pi)`, so that boundary terms
/// such as `sin(2 omega) / omega` cannot vanish by accident. An entry passes
/// when the discrepancy decays with a fitted order of at most `-0.05`, or is
/// zero throughout.
pub fn verify_weak_limits(
    m: u32,
    omegas: &[f64],
    alpha: f64,
    target: WeakLimitTarget,
    nodes_per_period: usize,
) -> Result<LimitReport, VerifyError> {
    check_omegas(omegas)?;
    check_resolution(nodes_per_period)?;
    if !(alpha >= 0.0) {
        return Err(VerifyError::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    let comps = components(m);
    // integrals[omega][shift][pair][phi]
    let integrals = omegas
        .par_iter()
        .map(|&w| {
            (0..ENVELOPE_SHIFTS)
                .map(|j| weak_integrals(m, &comps, alpha, w + TAU * j as f64 / ENVELOPE_SHIFTS as f64, nodes_per_period))
                .collect::<Result<Vec<_>, VerifyError>>()
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;

    let mut entries = Vec::new();
    for (i, h) in comps.iter().enumerate() {
        for (j, big) in comps.iter().enumerate() {
            let claimed = claimed_weak_limit(m, h, big, alpha, target)?;
            for (k, (name, _, phi_integral)) in TEST_FUNCTIONS.iter().enumerate() {
                let pair = i * comps.len() + j;
                let target_value = claimed * phi_integral;
                let values: Vec<f64> = integrals.iter().map(|shifts| shifts[0][pair][k]).collect();
                let discrepancies: Vec<f64> = integrals
                    .iter()
                    .map(|shifts| {
                        shifts
                            .iter()
                            .map(|s| (s[pair][k] - target_value).abs())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                let order = decay_order(omegas, &discrepancies);
                let required = -0.05;
                let passed = discrepancies.iter().all(|d| *d == 0.0)
                    || order.is_some_and(|o| o <= required);
                entries.push(LimitEntry {
                    label: format!("{}*{}", h.label('h'), big.label('H')),
                    components: vec![*h, *big],
                    test_function: Some(name.to_string()),
                    claimed: target_value,
                    values,
                    discrepancies,
                    decay_order: order,
                    required_order: required,
                    passed,
                });
            }
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(LimitReport {
        kind: LimitKind::Weak,
        m,
        alpha,
        omegas: omegas.to_vec(),
        entries,
        passed,
    })
}
