//! Controller synthesis and closed-form averaged systems.
//!
//! The controller is `u = (alpha*omega)^(1/(2(2m+1))) * cos(omega*t + k*V(x,t))`,
//! or `cos(omega*t + k*y)` with a measured output `y = psi(x,t)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_in, Bindings, EvalError, Expr, ParseError, Scope, Var};
use crate::model::NonAffineSystem;
use crate::oddpoly::{avg_gain_a, even_gain_b, pow2, to_f64, OddPolyError};

#[derive(Debug, Error)]
pub enum EscError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("output-feedback controller needs a measured output y")]
    MissingMeasurement,
    #[error("output-feedback mode needs a system with an output map")]
    MissingOutputMap,
    #[error("controller power index m = {m} does not match the dominant channel n_o = {n_o}")]
    PowerMismatch { m: u32, n_o: u32 },
    #[error("the averaged system of this construction requires eps = 0, got {0}")]
    EvenChannelsPresent(f64),
    #[error("system has no odd polynomial control channels")]
    NoOddChannels,
    #[error("system has a non-polynomial input nonlinearity; fit it with an odd polynomial first")]
    NonPolynomialChannel,
    #[error("cannot parse potential: {0}")]
    Parse(#[from] ParseError),
    #[error("potential mentions x{index} but the system has dimension {dim}")]
    PotentialScope { index: usize, dim: usize },
    #[error(transparent)]
    Gain(#[from] OddPolyError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("no root of the boundary equation in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
}

/// What the dither phase is driven by.
#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    /// `k * V(x,t)` with a known potential.
    Potential(Expr),
    /// `k * y` with the measured output of the plant.
    Output,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EscController {
    pub m: u32,
    pub alpha: f64,
    pub omega: f64,
    pub k: f64,
    pub phase: Phase,
    amplitude: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, EscError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(EscError::NonPositive { name, value })
    }
}

impl EscController {
    pub fn new(m: u32, alpha: f64, omega: f64, k: f64, phase: Phase) -> Result<Self, EscError> {
        positive("alpha", alpha)?;
        positive("omega", omega)?;
        if !k.is_finite() {
            return Err(EscError::NonFinite { name: "k", value: k });
        }
        let amplitude = (alpha * omega).powf(1.0 / (2.0 * (2 * m + 1) as f64));
        Ok(EscController {
            m,
            alpha,
            omega,
            k,
            phase,
            amplitude,
        })
    }

    /// Same as [`EscController::new`] with the potential given as source text.
    pub fn with_potential(m: u32, alpha: f64, omega: f64, k: f64, v: &str) -> Result<Self, EscError> {
        let v = parse_in(v, &Scope::state(usize::MAX))?;
        Self::new(m, alpha, omega, k, Phase::Potential(v))
    }

    /// `(alpha*omega)^(1/(2(2m+1)))`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn potential(&self) -> Option<&Expr> {
        match &self.phase {
            Phase::Potential(v) => Some(v),
            Phase::Output => None,
        }
    }

    /// Dither period `2*pi/omega`.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }

    /// `u(x,t)`; `y` is required in output-feedback mode and ignored otherwise.
    pub fn control_value(&self, x: &[f64], t: f64, y: Option<f64>) -> Result<f64, EscError> {
        let s = match &self.phase {
            Phase::Potential(v) => v.eval(&Bindings::new().t(t).x(x))?,
            Phase::Output => y.ok_or(EscError::MissingMeasurement)?,
        };
        Ok(self.amplitude * (self.omega * t + self.k * s).cos())
    }

    /// `u(x,t)` in closed loop with `sys`, measuring `y` through its output map.
    pub fn control_for(&self, sys: &NonAffineSystem, x: &[f64], t: f64) -> Result<f64, EscError> {
        match &self.phase {
            Phase::Potential(_) => self.control_value(x, t, None),
            Phase::Output => {
                let y = sys.output_value(x, t).ok_or(EscError::MissingOutputMap)??;
                self.control_value(x, t, Some(y))
            }
        }
    }

    /// Checks that the phase can be evaluated on the state space of `sys`.
    pub fn check_against(&self, sys: &NonAffineSystem) -> Result<(), EscError> {
        match &self.phase {
            Phase::Potential(v) => {
                for var in v.vars() {
                    if let Var::X(i) = var {
                        if i > sys.dim {
                            return Err(EscError::PotentialScope {
                                index: i,
                                dim: sys.dim,
                            });
                        }
                    }
                }
                Ok(())
            }
            Phase::Output if sys.output.is_none() => Err(EscError::MissingOutputMap),
            Phase::Output => Ok(()),
        }
    }
}

/// JSON form of a controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub m: u32,
    pub alpha: f64,
    pub omega: f64,
    pub k: f64,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default)]
    pub output_feedback: bool,
}

impl ControllerConfig {
    pub fn build(&self) -> Result<EscController, EscError> {
        let phase = match (&self.v, self.output_feedback) {
            (_, true) => Phase::Output,
            (Some(v), false) => Phase::Potential(parse_in(v, &Scope::state(usize::MAX))?),
            (None, false) => Phase::Potential(Expr::num(0.0)),
        };
        EscController::new(self.m, self.alpha, self.omega, self.k, phase)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Theorem1,
    Conjecture1,
}

/// Numeric constants that went into an averaged field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingConstants {
    /// Index of the odd channel kept in the average.
    pub n_o: u32,
    /// `A_{n_o}`.
    pub gain_a: f64,
    /// `(2 n_o + 1) / (2m + 1)`, the exponent of alpha.
    pub alpha_exponent: f64,
    /// `alpha_exponent - 1`, the exponent of omega.
    pub omega_exponent: f64,
    /// `k alpha^p omega^(p-1) A / 2^(4 n_o + 1)`.
    pub gradient_coefficient: f64,
    /// Index of the even channel kept in the average, if any.
    pub n_e: Option<u32>,
    /// `B_{n_e}`.
    pub gain_b: Option<f64>,
    /// `2 n_e / (2(2m+1))`, the exponent of `alpha*omega` on the even term.
    pub even_exponent: Option<f64>,
    /// `eps B (alpha omega)^even_exponent`.
    pub even_coefficient: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragedSystem {
    pub dim: usize,
    pub field: Vec<Expr>,
    pub provenance: Provenance,
    pub constants: AveragingConstants,
}

impl AveragedSystem {
    pub fn rhs_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let env = Bindings::new().t(t).x(x);
        for (o, f) in out.iter_mut().zip(&self.field) {
            *o = f.eval(&env)?;
        }
        Ok(())
    }

    pub fn rhs(&self, x: &[f64], t: f64) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.dim];
        self.rhs_into(x, t, &mut out)?;
        Ok(out)
    }
}

fn gradient(sys: &NonAffineSystem, c: &EscController) -> Result<Vec<Expr>, EscError> {
    c.check_against(sys)?;
    let target = match &c.phase {
        Phase::Potential(v) => v,
        Phase::Output => sys.output.as_ref().ok_or(EscError::MissingOutputMap)?,
    };
    Ok((1..=sys.dim).map(|i| target.diff(Var::X(i))).collect())
}

/// `k alpha^p omega^(p-1) A_{n_o} / 2^(4 n_o + 1)` with `p = (2n_o+1)/(2m+1)`.
///
/// With `n_o = m` this is `k alpha A_m / 2^(4m+1)` to the bit.
fn gradient_constants(c: &EscController, n_o: u32) -> Result<AveragingConstants, EscError> {
    let gain_a = to_f64(avg_gain_a(n_o)?);
    let scale = pow2(4 * n_o + 1).ok_or(OddPolyError::Overflow(n_o))? as f64;
    let p = (2 * n_o + 1) as f64 / (2 * c.m + 1) as f64;
    let coefficient = c.k * c.alpha.powf(p) * c.omega.powf(p - 1.0) * gain_a / scale;
    Ok(AveragingConstants {
        n_o,
        gain_a,
        alpha_exponent: p,
        omega_exponent: p - 1.0,
        gradient_coefficient: coefficient,
        n_e: None,
        gain_b: None,
        even_exponent: None,
        even_coefficient: None,
    })
}

// f + even - coefficient * g (g . grad)
fn assemble(
    sys: &NonAffineSystem,
    g: &[Expr],
    grad: &[Expr],
    coefficient: f64,
    even: Option<(f64, &[Expr])>,
) -> Vec<Expr> {
    let projection = g
        .iter()
        .zip(grad)
        .fold(Expr::num(0.0), |acc, (gj, dj)| {
            Expr::add(acc, Expr::mul(gj.clone(), dj.clone()))
        });
    (0..sys.dim)
        .map(|i| {
            let mut fi = sys.drift[i].clone();
            if let Some((ce, ge)) = even {
                fi = Expr::add(fi, Expr::mul(Expr::num(ce), ge[i].clone()));
            }
            let correction = Expr::mul(
                Expr::num(coefficient),
                Expr::mul(g[i].clone(), projection.clone()),
            );
            Expr::sub(fi, correction)
        })
        .collect()
}

fn dominant_channel(sys: &NonAffineSystem) -> Result<(u32, &[Expr]), EscError> {
    if sys.input_nonlinearity.is_some() {
        return Err(EscError::NonPolynomialChannel);
    }
    let ch = sys.odd_channels.last().ok_or(EscError::NoOddChannels)?;
    Ok((ch.power_index, &ch.exprs))
}

/// `f - k alpha A_m g_m g_m^T grad V / 2^(4m+1)`.
pub fn averaged_system_theorem1(
    sys: &NonAffineSystem,
    c: &EscController,
) -> Result<AveragedSystem, EscError> {
    let eps = sys.epsilon();
    if eps != 0.0 {
        return Err(EscError::EvenChannelsPresent(eps));
    }
    let (n_o, g) = dominant_channel(sys)?;
    if n_o != c.m {
        return Err(EscError::PowerMismatch { m: c.m, n_o });
    }
    let grad = gradient(sys, c)?;
    let constants = gradient_constants(c, n_o)?;
    let field = assemble(sys, g, &grad, constants.gradient_coefficient, None);
    Ok(AveragedSystem {
        dim: sys.dim,
        field,
        provenance: Provenance::Theorem1,
        constants,
    })
}

/// Average keeping only the highest odd and highest even channels:
///
/// ```text
/// f + eps B g_2ne (alpha omega)^(2ne/(2(2m+1)))
///   - k alpha^p omega^(p-1) A g_no g_no^T grad V / 2^(4 n_o + 1)
/// ```
pub fn averaged_system_conjecture(
    sys: &NonAffineSystem,
    c: &EscController,
) -> Result<AveragedSystem, EscError> {
    let (n_o, g) = dominant_channel(sys)?;
    let grad = gradient(sys, c)?;
    let mut constants = gradient_constants(c, n_o)?;
    let eps = sys.epsilon();
    let even = match (sys.n_e(), eps != 0.0) {
        (Some(n_e), true) => {
            let ge = &sys.even_channel(n_e).expect("n_e is present").exprs;
            let b = to_f64(even_gain_b(n_e)?);
            let exponent = (2 * n_e) as f64 / (2 * (2 * c.m + 1)) as f64;
            let ce = eps * b * (c.alpha * c.omega).powf(exponent);
            constants.n_e = Some(n_e);
            constants.gain_b = Some(b);
            constants.even_exponent = Some(exponent);
            constants.even_coefficient = Some(ce);
            Some((ce, ge.as_slice()))
        }
        _ => None,
    };
    let field = assemble(sys, g, &grad, constants.gradient_coefficient, even);
    Ok(AveragedSystem {
        dim: sys.dim,
        field,
        provenance: Provenance::Conjecture1,
        constants,
    })
}

/// Theorem-1 construction when it applies, the conjectured one otherwise.
pub fn averaged_system(sys: &NonAffineSystem, c: &EscController) -> Result<AveragedSystem, EscError> {
    if sys.epsilon() == 0.0 && sys.n_o() == Some(c.m) {
        averaged_system_theorem1(sys, c)
    } else {
        averaged_system_conjecture(sys, c)
    }
}

const A2: f64 = 126.0;
const B2: f64 = 0.375;
const BRACKET: (f64, f64) = (1e-6, 1e6);
const SCAN_POINTS: usize = 2401;

/// Residual of the equilibrium condition of the `uu` system at dither strength `alpha`:
///
/// ```text
/// ((2k/100) A_2 / 2^9 alpha^q omega^(q-1) - 1) x* - eps B_2 (alpha omega)^(4/(2(2m+1))),  q = 5/(2m+1)
/// ```
pub fn boundary_residual_uu(alpha: f64, k: f64, m: u32, eps: f64, omega: f64, x_star: f64) -> f64 {
    let q = 5.0 / (2 * m + 1) as f64;
    let gain = 2.0 * k / 100.0 * A2 / 512.0 * alpha.powf(q) * omega.powf(q - 1.0);
    let even = eps * B2 * (alpha * omega).powf(4.0 / (2 * (2 * m + 1)) as f64);
    (gain - 1.0) * x_star - even
}

/// Smallest `alpha` in `[1e-6, 1e6]` at which the conjectured average of the
/// `uu` system has its equilibrium at `x_star`. For larger `alpha` the
/// average converges to `|x| <= x_star`.
pub fn equilibrium_boundary_uu(k: f64, m: u32, eps: f64, omega: f64, x_star: f64) -> Result<f64, EscError> {
    positive("k", k)?;
    positive("omega", omega)?;
    positive("x_star", x_star)?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(EscError::NonFinite { name: "eps", value: eps });
    }
    let f = |a: f64| boundary_residual_uu(a, k, m, eps, omega, x_star);
    let (lo, hi) = BRACKET;
    let ratio = (hi / lo).ln();
    let node = |i: usize| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp();
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..SCAN_POINTS {
        let b = if i == SCAN_POINTS - 1 { hi } else { node(i) };
        let fb = f(b);
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            return Ok(bisect(f, a, b, fa));
        }
        a = b;
        fa = fb;
    }
    Err(EscError::NoRoot { lo, hi })
}

// Bisection down to adjacent floats.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    if f(a).abs() <= f(b).abs() {
        a
    } else {
        b
    }
}

/// Stabilizing bound on `eps` for the `evenpow` system under an `m = 1`
/// controller: `(2k 0.1^2 A_1 alpha - 1) / ((alpha omega)^(2/3) B_2)`.
pub fn epsilon_bound_evenpow(k: f64, alpha: f64, omega: f64) -> f64 {
    (2.0 * k * 0.01 * 10.0 * alpha - 1.0) / ((alpha * omega).powf(2.0 / 3.0) * B2)
}

/// Heuristic bound on `eps` for `m = 0` controllers: `1/sqrt(alpha omega)`.
pub fn epsilon_bound_m0(alpha: f64, omega: f64) -> f64 {
    1.0 / (alpha * omega).sqrt()
}
