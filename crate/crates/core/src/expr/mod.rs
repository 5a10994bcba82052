//! A small expression language for drift fields, control channels, potentials
//! and scalar input nonlinearities.
//!
//! Sources are parsed into an immutable [`Expr`] tree which can be evaluated
//! against a [`Bindings`] value and differentiated symbolically. The variable
//! set is closed: `t`, `x1`..`xn`, `u` and `y`. Anything else is rejected at
//! parse time.
//!
//! ```
//! use escna_core::expr::{parse, Bindings, Var};
//!
//! let e = parse("0.5*cos(2*t)*x1^2").unwrap();
//! let v = e.eval(&Bindings::new().t(0.0).x(&[2.0])).unwrap();
//! assert_eq!(v, 2.0);
//!
//! let d = e.diff(Var::X(1));
//! assert_eq!(d.eval(&Bindings::new().t(0.0).x(&[2.0])).unwrap(), 2.0);
//! ```

mod diff;
mod eval;
mod parse;
mod print;

use std::collections::BTreeSet;

pub use eval::{Bindings, EvalError};
pub use parse::{parse, parse_in, ParseError, ParseErrorKind, Scope};

/// A free variable of an expression. State variables are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    X(usize),
    U,
    Y,
}

impl std::fmt::Display for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{i}"),
            Var::U => write!(f, "u"),
            Var::Y => write!(f, "y"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Cos,
    Sin,
    Exp,
    Ln,
    Abs,
    Sgn,
    Sqrt,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Cos,
        Func::Sin,
        Func::Exp,
        Func::Ln,
        Func::Abs,
        Func::Sgn,
        Func::Sqrt,
        Func::Min,
        Func::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sgn => "sgn",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree.
///
/// Numeric literals produced by the parser and by the smart constructors are
/// always finite and non-negative; negation is carried by [`Expr::Neg`]. This
/// keeps `parse(e.to_string()) == e` for every tree built through the public
/// constructors.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Literal with sign normalisation (`-c` becomes `Neg(Num(c))`).
    pub fn num(value: f64) -> Expr {
        if value < 0.0 {
            Expr::Neg(Box::new(Expr::Num(-value)))
        } else {
            // folds -0.0 into +0.0
            Expr::Num(value + 0.0)
        }
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    /// Value of the expression if it is a (possibly negated) literal.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Neg(inner) => inner.as_const().map(|v| -v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Free variables, sorted.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) => a.depends_on(v),
            Expr::Bin(_, a, b) => a.depends_on(v) || b.depends_on(v),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(v)),
        }
    }

    /// Tree depth; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) => 1 + a.depth(),
            Expr::Bin(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    // Smart constructors with constant folding. They only fold what is exact:
    // literal arithmetic and the 0/1 identities.

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::num(-v),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::num(x + y);
        }
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::num(x - y);
        }
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::num(x * y);
        }
        if a.is_zero() || b.is_zero() {
            return Expr::Num(0.0);
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        if a.as_const() == Some(-1.0) {
            return Expr::neg(b);
        }
        if b.as_const() == Some(-1.0) {
            return Expr::neg(a);
        }
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 {
                return Expr::num(x / y);
            }
        }
        if a.is_zero() && b.as_const().map_or(true, |y| y != 0.0) {
            return Expr::Num(0.0);
        }
        if b.is_one() {
            return a;
        }
        Expr::Bin(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Ok(v) = eval::apply_bin(BinOp::Pow, x, y) {
                return Expr::num(v);
            }
        }
        if b.is_zero() {
            return Expr::Num(1.0);
        }
        if b.is_one() {
            return a;
        }
        Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Expr {
        let consts: Option<Vec<f64>> = args.iter().map(Expr::as_const).collect();
        if let Some(c) = consts {
            if let Ok(v) = eval::apply_func(f, &c) {
                return Expr::num(v);
            }
        }
        Expr::Call(f, args)
    }

    pub fn call1(f: Func, a: Expr) -> Expr {
        Expr::call(f, vec![a])
    }

    /// Replace every occurrence of `v` with `with`.
    pub fn substitute(&self, v: Var, with: &Expr) -> Expr {
        match self {
            Expr::Var(w) if *w == v => with.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(v, with))),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(a.substitute(v, with)),
                Box::new(b.substitute(v, with)),
            ),
            Expr::Call(f, args) => {
                Expr::Call(*f, args.iter().map(|a| a.substitute(v, with)).collect())
            }
        }
    }
}
