//! Systems of the form
//!
//! ```text
//! x' = f(x,t) + sum_n g_n(x,t) u^(2n+1) + eps * sum_i g_2i(x,t) u^(2i) + q(x,t) h(u)
//! ```
//!
//! with a scalar control `u`. The last term carries a scalar input
//! nonlinearity `h` for systems whose control channel is not polynomial.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_in, Bindings, EvalError, Expr, ParseError, Scope};
use crate::oddpoly::OddPolynomial;

pub const DEFAULT_BLOWUP_CUTOFF: f64 = 1e6;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 5] = ["example1", "example1_approx", "uu", "evenpow", "nonlfinal"];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid system config: {0}")]
    Schema(String),
    #[error("cannot parse {field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("{field} has {found} entries, expected {expected}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("odd power index {0} appears more than once")]
    DuplicateOddPower(u32),
    #[error("even power index {0} appears more than once")]
    DuplicateEvenPower(u32),
    #[error("even power index must be at least 1")]
    ZeroEvenPower,
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("non-finite state derivative at t = {t}")]
    NonFinite { t: f64 },
}

/// Piecewise deadzone/saturation: zero below 0.5, quadratic up to 2, flat at
/// 2.25 beyond, extended as an odd function.
pub fn deadzone_saturation(u: f64) -> f64 {
    let a = u.abs();
    let mag = if a < 0.5 {
        0.0
    } else if a <= 2.0 {
        (a - 0.5) * (a - 0.5)
    } else {
        2.25
    };
    if u < 0.0 {
        -mag
    } else {
        mag
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Expression { expr: String },
    DeadzoneSaturation,
    DeadzoneSaturationPlusEven { epsilon: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarNonlinearity {
    /// An expression in `u` alone.
    Expression(Expr),
    DeadzoneSaturation,
    /// `deadzone_saturation(u) + eps * (u^2 + u^4)`.
    DeadzoneSaturationPlusEven(f64),
}

impl ScalarNonlinearity {
    pub fn eval(&self, u: f64) -> Result<f64, EvalError> {
        match self {
            ScalarNonlinearity::Expression(e) => e.eval(&Bindings::new().u(u)),
            ScalarNonlinearity::DeadzoneSaturation => Ok(deadzone_saturation(u)),
            ScalarNonlinearity::DeadzoneSaturationPlusEven(eps) => {
                let u2 = u * u;
                Ok(deadzone_saturation(u) + eps * (u2 + u2 * u2))
            }
        }
    }

    fn to_config(&self) -> NonlinearityConfig {
        match self {
            ScalarNonlinearity::Expression(e) => NonlinearityConfig::Expression {
                expr: e.to_string(),
            },
            ScalarNonlinearity::DeadzoneSaturation => NonlinearityConfig::DeadzoneSaturation,
            ScalarNonlinearity::DeadzoneSaturationPlusEven(eps) => {
                NonlinearityConfig::DeadzoneSaturationPlusEven { epsilon: *eps }
            }
        }
    }
}

/// `g_n(x,t) u^(2n+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OddChannel {
    pub power_index: u32,
    pub exprs: Vec<Expr>,
}

/// `g_2i(x,t) u^(2i)`, scaled by the shared strength.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenChannel {
    pub power_index: u32,
    pub exprs: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvenChannels {
    pub strength: f64,
    pub items: Vec<EvenChannel>,
}

/// `gain(x,t) h(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputNonlinearity {
    pub gain: Vec<Expr>,
    pub h: ScalarNonlinearity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonAffineSystem {
    pub name: String,
    pub dim: usize,
    pub drift: Vec<Expr>,
    /// Sorted by power index.
    pub odd_channels: Vec<OddChannel>,
    pub even_channels: Option<EvenChannels>,
    pub output: Option<Expr>,
    pub input_nonlinearity: Option<InputNonlinearity>,
    /// Integration stops once `|x|_inf` exceeds this.
    pub blowup_cutoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub power_index: u32,
    pub exprs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvenChannelsConfig {
    pub strength: f64,
    pub items: Vec<ChannelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputNonlinearityConfig {
    pub gain: Vec<String>,
    pub h: NonlinearityConfig,
}

/// On-disk JSON form of a [`NonAffineSystem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    pub drift: Vec<String>,
    #[serde(default)]
    pub odd_channels: Vec<ChannelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub even_channels: Option<EvenChannelsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_nonlinearity: Option<InputNonlinearityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_cutoff: Option<f64>,
}

fn parse_vec(field: &str, srcs: &[String], dim: usize) -> Result<Vec<Expr>, ModelError> {
    if srcs.len() != dim {
        return Err(ModelError::DimensionMismatch {
            field: field.to_string(),
            expected: dim,
            found: srcs.len(),
        });
    }
    let scope = Scope::state(dim);
    srcs.iter()
        .enumerate()
        .map(|(i, s)| {
            parse_in(s, &scope).map_err(|source| ModelError::Parse {
                field: format!("{field}[{i}]"),
                source,
            })
        })
        .collect()
}

fn strings(exprs: &[Expr]) -> Vec<String> {
    exprs.iter().map(|e| e.to_string()).collect()
}

impl SystemConfig {
    pub fn build(&self) -> Result<NonAffineSystem, ModelError> {
        let dim = self.dim;
        if dim == 0 {
            return Err(ModelError::Schema("dim must be positive".into()));
        }
        let drift = parse_vec("drift", &self.drift, dim)?;

        let mut odd_channels = Vec::with_capacity(self.odd_channels.len());
        for (j, ch) in self.odd_channels.iter().enumerate() {
            if odd_channels
                .iter()
                .any(|c: &OddChannel| c.power_index == ch.power_index)
            {
                return Err(ModelError::DuplicateOddPower(ch.power_index));
            }
            odd_channels.push(OddChannel {
                power_index: ch.power_index,
                exprs: parse_vec(&format!("odd_channels[{j}].exprs"), &ch.exprs, dim)?,
            });
        }
        odd_channels.sort_by_key(|c| c.power_index);

        let even_channels = match &self.even_channels {
            None => None,
            Some(ev) => {
                if !ev.strength.is_finite() {
                    return Err(ModelError::InvalidParameter(format!(
                        "even channel strength {} is not finite",
                        ev.strength
                    )));
                }
                let mut items: Vec<EvenChannel> = Vec::with_capacity(ev.items.len());
                for (j, ch) in ev.items.iter().enumerate() {
                    if ch.power_index == 0 {
                        return Err(ModelError::ZeroEvenPower);
                    }
                    if items.iter().any(|c| c.power_index == ch.power_index) {
                        return Err(ModelError::DuplicateEvenPower(ch.power_index));
                    }
                    items.push(EvenChannel {
                        power_index: ch.power_index,
                        exprs: parse_vec(
                            &format!("even_channels.items[{j}].exprs"),
                            &ch.exprs,
                            dim,
                        )?,
                    });
                }
                items.sort_by_key(|c| c.power_index);
                Some(EvenChannels {
                    strength: ev.strength,
                    items,
                })
            }
        };

        let output = self
            .output
            .as_deref()
            .map(|s| {
                parse_in(s, &Scope::state(dim)).map_err(|source| ModelError::Parse {
                    field: "output".into(),
                    source,
                })
            })
            .transpose()?;

        let input_nonlinearity = match &self.input_nonlinearity {
            None => None,
            Some(cfg) => {
                let h = match &cfg.h {
                    NonlinearityConfig::Expression { expr } => ScalarNonlinearity::Expression(
                        parse_in(expr, &Scope::control()).map_err(|source| ModelError::Parse {
                            field: "input_nonlinearity.h.expr".into(),
                            source,
                        })?,
                    ),
                    NonlinearityConfig::DeadzoneSaturation => ScalarNonlinearity::DeadzoneSaturation,
                    NonlinearityConfig::DeadzoneSaturationPlusEven { epsilon } => {
                        ScalarNonlinearity::DeadzoneSaturationPlusEven(*epsilon)
                    }
                };
                Some(InputNonlinearity {
                    gain: parse_vec("input_nonlinearity.gain", &cfg.gain, dim)?,
                    h,
                })
            }
        };

        let blowup_cutoff = self.blowup_cutoff.unwrap_or(DEFAULT_BLOWUP_CUTOFF);
        if !(blowup_cutoff > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "blowup_cutoff must be positive, got {blowup_cutoff}"
            )));
        }

        Ok(NonAffineSystem {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            dim,
            drift,
            odd_channels,
            even_channels,
            output,
            input_nonlinearity,
            blowup_cutoff,
        })
    }
}

/// Parses and validates a JSON system description.
pub fn load_system(json: &str) -> Result<NonAffineSystem, ModelError> {
    let cfg: SystemConfig =
        serde_json::from_str(json).map_err(|e| ModelError::Schema(e.to_string()))?;
    cfg.build()
}

impl NonAffineSystem {
    /// Highest odd power index present (the dominant channel).
    pub fn n_o(&self) -> Option<u32> {
        self.odd_channels.last().map(|c| c.power_index)
    }

    /// Highest even power index present.
    pub fn n_e(&self) -> Option<u32> {
        self.even_channels
            .as_ref()
            .and_then(|e| e.items.last())
            .map(|c| c.power_index)
    }

    /// Even-channel strength, zero when there are no even channels.
    pub fn epsilon(&self) -> f64 {
        match &self.even_channels {
            Some(e) if !e.items.is_empty() => e.strength,
            _ => 0.0,
        }
    }

    pub fn odd_channel(&self, power_index: u32) -> Option<&OddChannel> {
        self.odd_channels.iter().find(|c| c.power_index == power_index)
    }

    pub fn even_channel(&self, power_index: u32) -> Option<&EvenChannel> {
        self.even_channels
            .as_ref()
            .and_then(|e| e.items.iter().find(|c| c.power_index == power_index))
    }

    /// Drift `f(x,t)` into `out`.
    pub fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<(), ModelError> {
        let env = Bindings::new().t(t).x(x);
        for (o, f) in out.iter_mut().zip(&self.drift) {
            *o = f.eval(&env)?;
        }
        Ok(())
    }

    /// Full right-hand side at control value `u`.
    pub fn rhs_into(&self, x: &[f64], t: f64, u: f64, out: &mut [f64]) -> Result<(), ModelError> {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let env = Bindings::new().t(t).x(x);
        for (o, f) in out.iter_mut().zip(&self.drift) {
            *o = f.eval(&env)?;
        }
        let u2 = u * u;
        for ch in &self.odd_channels {
            let p = u * u2.powi(ch.power_index as i32);
            for (o, g) in out.iter_mut().zip(&ch.exprs) {
                *o += g.eval(&env)? * p;
            }
        }
        if let Some(ev) = &self.even_channels {
            for ch in &ev.items {
                let p = ev.strength * u2.powi(ch.power_index as i32);
                for (o, g) in out.iter_mut().zip(&ch.exprs) {
                    *o += g.eval(&env)? * p;
                }
            }
        }
        if let Some(nl) = &self.input_nonlinearity {
            let hu = nl.h.eval(u)?;
            for (o, g) in out.iter_mut().zip(&nl.gain) {
                *o += g.eval(&env)? * hu;
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite { t })
        }
    }

    pub fn rhs(&self, x: &[f64], t: f64, u: f64) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.dim];
        self.rhs_into(x, t, u, &mut out)?;
        Ok(out)
    }

    pub fn output_value(&self, x: &[f64], t: f64) -> Option<Result<f64, EvalError>> {
        self.output
            .as_ref()
            .map(|e| e.eval(&Bindings::new().t(t).x(x)))
    }

    pub fn to_config(&self) -> SystemConfig {
        let chan = |power_index: u32, exprs: &[Expr]| ChannelConfig {
            power_index,
            exprs: strings(exprs),
        };
        SystemConfig {
            name: Some(self.name.clone()),
            dim: self.dim,
            drift: strings(&self.drift),
            odd_channels: self
                .odd_channels
                .iter()
                .map(|c| chan(c.power_index, &c.exprs))
                .collect(),
            even_channels: self.even_channels.as_ref().map(|e| EvenChannelsConfig {
                strength: e.strength,
                items: e.items.iter().map(|c| chan(c.power_index, &c.exprs)).collect(),
            }),
            output: self.output.as_ref().map(|e| e.to_string()),
            input_nonlinearity: self.input_nonlinearity.as_ref().map(|nl| InputNonlinearityConfig {
                gain: strings(&nl.gain),
                h: nl.h.to_config(),
            }),
            blowup_cutoff: Some(self.blowup_cutoff),
        }
    }
}

fn scalar_config(name: &str, drift: &str) -> SystemConfig {
    SystemConfig {
        name: Some(name.into()),
        dim: 1,
        drift: vec![drift.into()],
        odd_channels: Vec::new(),
        even_channels: None,
        output: None,
        input_nonlinearity: None,
        blowup_cutoff: None,
    }
}

fn channel(power_index: u32, expr: &str) -> ChannelConfig {
    ChannelConfig {
        power_index,
        exprs: vec![expr.into()],
    }
}

const EXAMPLE1_DRIFT: &str = "0.5*cos(2*t)*x1^2";
const EXAMPLE1_GAIN: &str = "2*cos(20*t)";

/// Example 1 with the input nonlinearity replaced by the odd polynomial `p`:
/// channel `n` is `c_n * (2*cos(20*t))`.
pub fn example1_with_polynomial(name: &str, p: &OddPolynomial) -> Result<NonAffineSystem, ModelError> {
    let mut cfg = scalar_config(name, EXAMPLE1_DRIFT);
    cfg.odd_channels = p
        .coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| channel(n as u32, &format!("{c}*({EXAMPLE1_GAIN})")))
        .collect();
    cfg.build()
}

/// The built-in systems. `epsilon` is the even-channel strength for `uu`,
/// `evenpow` and `nonlfinal` and is ignored by the others.
pub fn builtin(name: &str, epsilon: f64) -> Result<NonAffineSystem, ModelError> {
    if !epsilon.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "epsilon must be finite, got {epsilon}"
        )));
    }
    match name {
        "example1" => {
            let mut cfg = scalar_config(name, EXAMPLE1_DRIFT);
            cfg.input_nonlinearity = Some(InputNonlinearityConfig {
                gain: vec![EXAMPLE1_GAIN.into()],
                h: NonlinearityConfig::DeadzoneSaturation,
            });
            cfg.build()
        }
        "example1_approx" => {
            example1_with_polynomial(name, &OddPolynomial::new(vec![0.05, 0.25]))
        }
        "uu" => {
            let mut cfg = scalar_config(name, "x1");
            cfg.odd_channels = (0..3).map(|n| channel(n, "0.1")).collect();
            cfg.even_channels = Some(EvenChannelsConfig {
                strength: epsilon,
                items: vec![channel(1, "1"), channel(2, "1")],
            });
            cfg.build()
        }
        "evenpow" => {
            let mut cfg = scalar_config(name, "0");
            cfg.odd_channels = vec![channel(0, "0.1"), channel(1, "0.1")];
            cfg.even_channels = Some(EvenChannelsConfig {
                strength: epsilon,
                items: vec![channel(2, "1")],
            });
            cfg.build()
        }
        "nonlfinal" => {
            let mut cfg = scalar_config(name, "x1");
            cfg.input_nonlinearity = Some(InputNonlinearityConfig {
                gain: vec!["1".into()],
                h: NonlinearityConfig::DeadzoneSaturationPlusEven { epsilon },
            });
            cfg.build()
        }
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn deadzone_saturation_branches() {
        assert_eq!(deadzone_saturation(0.3), 0.0);
        assert_eq!(deadzone_saturation(1.0), 0.25);
        assert_eq!(deadzone_saturation(2.0), 2.25);
        assert_eq!(deadzone_saturation(-3.0), -2.25);
        assert_eq!(deadzone_saturation(0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let u: f64 = rng.gen_range(-5.0..5.0);
            assert_eq!(deadzone_saturation(-u), -deadzone_saturation(u));
        }
    }

    #[test]
    fn builtin_rhs_examples() {
        let s = builtin("evenpow", 0.0).unwrap();
        assert!((s.rhs(&[0.0], 0.0, 1.0).unwrap()[0] - 0.2).abs() < 1e-15);

        let s = builtin("uu", 0.05).unwrap();
        assert!((s.rhs(&[1.0], 0.7, 1.0).unwrap()[0] - 1.4).abs() < 1e-15);
        assert_eq!((s.n_o(), s.n_e()), (Some(2), Some(2)));

        let s = builtin("uu", 0.0).unwrap();
        assert_eq!(s.rhs(&[0.0], 0.0, 0.0).unwrap()[0], 0.0);

        let s = builtin("example1", 0.0).unwrap();
        assert_eq!(s.rhs(&[1.5], 0.0, 0.0).unwrap()[0], 1.125);
        // control channel vanishes where cos(20t) does
        let t = PI / 40.0;
        let drift_only = s.rhs(&[1.5], t, 0.0).unwrap()[0];
        let with_u = s.rhs(&[1.5], t, 1.7).unwrap()[0];
        assert!((with_u - drift_only).abs() < 1e-14);

        let s = builtin("nonlfinal", 0.1).unwrap();
        assert!((s.rhs(&[0.0], 0.0, 1.0).unwrap()[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn example1_approx_matches_hand_written_config() {
        let json = r#"{
            "name": "example1_approx",
            "dim": 1,
            "drift": ["0.5*cos(2*t)*x1^2"],
            "odd_channels": [
                {"power_index": 0, "exprs": ["0.05*(2*cos(20*t))"]},
                {"power_index": 1, "exprs": ["0.25*(2*cos(20*t))"]}
            ]
        }"#;
        let loaded = load_system(json).unwrap();
        let built = builtin("example1_approx", 0.0).unwrap();
        assert_eq!(loaded, built);
        assert_eq!(loaded.n_o(), Some(1));
    }

    #[test]
    fn uu_config_loads() {
        let json = r#"{
            "dim": 1,
            "drift": ["x1"],
            "odd_channels": [
                {"power_index": 2, "exprs": ["0.1"]},
                {"power_index": 0, "exprs": ["0.1"]},
                {"power_index": 1, "exprs": ["0.1"]}
            ],
            "even_channels": {"strength": 0.05, "items": [
                {"power_index": 1, "exprs": ["1"]},
                {"power_index": 2, "exprs": ["1"]}
            ]}
        }"#;
        let s = load_system(json).unwrap();
        assert_eq!((s.n_o(), s.n_e()), (Some(2), Some(2)));
        let mut b = builtin("uu", 0.05).unwrap();
        b.name = "custom".into();
        assert_eq!(s, b);
    }

    #[test]
    fn validation_errors() {
        let mismatch = r#"{"dim": 2, "drift": ["x1", "x2"],
            "odd_channels": [{"power_index": 0, "exprs": ["1"]}]}"#;
        assert!(matches!(
            load_system(mismatch),
            Err(ModelError::DimensionMismatch { expected: 2, found: 1, .. })
        ));
        let dup = r#"{"dim": 1, "drift": ["0"],
            "odd_channels": [{"power_index": 1, "exprs": ["1"]},
                             {"power_index": 1, "exprs": ["2"]}]}"#;
        assert!(matches!(load_system(dup), Err(ModelError::DuplicateOddPower(1))));
        let scope = r#"{"dim": 1, "drift": ["x2"]}"#;
        assert!(matches!(load_system(scope), Err(ModelError::Parse { .. })));
        let control_in_drift = r#"{"dim": 1, "drift": ["u"]}"#;
        assert!(matches!(load_system(control_in_drift), Err(ModelError::Parse { .. })));
        let unknown_key = r#"{"dim": 1, "drift": ["0"], "gain": 3}"#;
        assert!(matches!(load_system(unknown_key), Err(ModelError::Schema(_))));
        let zero_even = r#"{"dim": 1, "drift": ["0"],
            "even_channels": {"strength": 1, "items": [{"power_index": 0, "exprs": ["1"]}]}}"#;
        assert!(matches!(load_system(zero_even), Err(ModelError::ZeroEvenPower)));
        assert!(matches!(builtin("nosuch", 0.0), Err(ModelError::UnknownBuiltin(_))));
    }

    #[test]
    fn config_round_trip() {
        for name in BUILTIN_NAMES {
            let s = builtin(name, 0.3).unwrap();
            let json = serde_json::to_string(&s.to_config()).unwrap();
            assert_eq!(load_system(&json).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn zero_strength_and_absent_even_channels_agree() {
        let with = builtin("uu", 0.0).unwrap();
        let mut without = with.clone();
        without.even_channels = None;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (x, t, u) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.0..10.0), rng.gen_range(-3.0..3.0));
            assert_eq!(with.rhs(&[x], t, u).unwrap(), without.rhs(&[x], t, u).unwrap());
        }
        assert_eq!(with.epsilon(), 0.0);
    }

    #[test]
    fn odd_channels_are_odd_in_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for name in ["example1", "example1_approx", "uu", "evenpow", "nonlfinal"] {
            let s = builtin(name, 0.0).unwrap();
            let s = NonAffineSystem {
                even_channels: None,
                ..s
            };
            for _ in 0..1000 {
                let x = [rng.gen_range(-2.0..2.0)];
                let t = rng.gen_range(0.0..10.0);
                let u = rng.gen_range(-4.0..4.0);
                let mut f = [0.0];
                s.drift_into(&x, t, &mut f).unwrap();
                let plus = s.rhs(&x, t, u).unwrap()[0] - f[0];
                let minus = s.rhs(&x, t, -u).unwrap()[0] - f[0];
                assert!((plus + minus).abs() <= 1e-12 * (1.0 + plus.abs()), "{name}");
            }
        }
    }

    #[test]
    fn blowup_is_reported_as_non_finite() {
        let s = load_system(r#"{"dim": 1, "drift": ["x1^2"]}"#).unwrap();
        assert!(matches!(
            s.rhs(&[1e200], 0.0, 0.0),
            Err(ModelError::Eval(EvalError::NonFinite(_)))
        ));
    }
}
