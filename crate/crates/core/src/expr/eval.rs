use thiserror::Error;

use super::{BinOp, Expr, Func, Var};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite result in {0}")]
    NonFinite(&'static str),
}

/// Variable values for one evaluation. Unset variables are unbound.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bindings<'a> {
    t: Option<f64>,
    x: &'a [f64],
    u: Option<f64>,
    y: Option<f64>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    /// Binds `x1..xn` to `x[0..n]`.
    pub fn x(mut self, x: &'a [f64]) -> Self {
        self.x = x;
        self
    }

    pub fn u(mut self, u: f64) -> Self {
        self.u = Some(u);
        self
    }

    pub fn y(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }

    pub fn get(&self, v: Var) -> Result<f64, EvalError> {
        match v {
            Var::T => self.t,
            Var::X(i) => i.checked_sub(1).and_then(|j| self.x.get(j).copied()),
            Var::U => self.u,
            Var::Y => self.y,
        }
        .ok_or(EvalError::Unbound(v))
    }
}

pub(crate) fn apply_func(f: Func, args: &[f64]) -> Result<f64, EvalError> {
    let a = args[0];
    let v = match f {
        Func::Cos => a.cos(),
        Func::Sin => a.sin(),
        Func::Exp => a.exp(),
        Func::Ln => {
            if a <= 0.0 {
                return Err(EvalError::Domain(format!("ln({a})")));
            }
            a.ln()
        }
        Func::Abs => a.abs(),
        Func::Sgn => sgn(a),
        Func::Sqrt => {
            if a < 0.0 {
                return Err(EvalError::Domain(format!("sqrt({a})")));
            }
            a.sqrt()
        }
        Func::Min => a.min(args[1]),
        Func::Max => a.max(args[1]),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(f.name()))
    }
}

/// Sign with `sgn(0) = 0`.
pub fn sgn(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn apply_bin(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            a / b
        }
        BinOp::Pow => {
            if a < 0.0 && b.fract() != 0.0 {
                return Err(EvalError::Domain(format!("{a}^{b}")));
            }
            if a == 0.0 && b < 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            pow(a, b)
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(match op {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }))
    }
}

// Small integer exponents go through repeated multiplication so that
// polynomial channels evaluate exactly like hand-written products.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl Expr {
    pub fn eval(&self, env: &Bindings<'_>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(v) => env.get(*v),
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Bin(op, a, b) => apply_bin(*op, a.eval(env)?, b.eval(env)?),
            Expr::Call(f, args) => match args.as_slice() {
                [a] => apply_func(*f, &[a.eval(env)?]),
                [a, b] => apply_func(*f, &[a.eval(env)?, b.eval(env)?]),
                _ => unreachable!("arity checked at construction"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use std::f64::consts::PI;

    #[test]
    fn spec_examples() {
        let e = parse("0.5*cos(2*t)*x1^2").unwrap();
        assert_eq!(e.eval(&Bindings::new().t(0.0).x(&[2.0])).unwrap(), 2.0);

        let e = parse("(x1+2*x2)^2").unwrap();
        assert_eq!(e.eval(&Bindings::new().x(&[1.0, 2.0])).unwrap(), 25.0);

        let e = parse("sgn(u)*(abs(u)-0.5)^2").unwrap();
        assert_eq!(e.eval(&Bindings::new().u(1.0)).unwrap(), 0.25);

        let e = parse("x1").unwrap();
        assert_eq!(e.eval(&Bindings::new().x(&[3.5])).unwrap(), 3.5);

        let e = parse("cos(t)^3").unwrap();
        assert_eq!(e.eval(&Bindings::new().t(PI)).unwrap(), -1.0);
    }

    #[test]
    fn unbound_is_an_error() {
        let e = parse("x2 + t").unwrap();
        assert_eq!(
            e.eval(&Bindings::new().t(1.0).x(&[1.0])),
            Err(EvalError::Unbound(Var::X(2)))
        );
        assert_eq!(
            parse("u").unwrap().eval(&Bindings::new()),
            Err(EvalError::Unbound(Var::U))
        );
    }

    #[test]
    fn domain_errors_are_reported() {
        let b = Bindings::new().x(&[-1.0, 0.0]);
        assert!(matches!(
            parse("sqrt(x1)").unwrap().eval(&b),
            Err(EvalError::Domain(_))
        ));
        assert_eq!(
            parse("1/x2").unwrap().eval(&b),
            Err(EvalError::DivisionByZero)
        );
        assert!(matches!(
            parse("x1^0.5").unwrap().eval(&b),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            parse("exp(1000)").unwrap().eval(&b),
            Err(EvalError::NonFinite(_))
        ));
    }

    #[test]
    fn sgn_of_zero_is_zero() {
        assert_eq!(parse("sgn(0)").unwrap().eval(&Bindings::new()).unwrap(), 0.0);
        assert_eq!(parse("sgn(-2)").unwrap().eval(&Bindings::new()).unwrap(), -1.0);
    }
}
