use super::{BinOp, Expr, Func, Var};

impl Expr {
    /// Partial derivative with respect to `v`.
    ///
    /// Kinks are handled piecewise: `abs' = sgn`, `sgn' = 0`, and `min`/`max`
    /// are differentiated through `(a+b)/2 -/+ |a-b|/2`.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.diff(v)),
            Expr::Bin(op, a, b) => diff_bin(*op, a, b, v),
            Expr::Call(f, args) => diff_call(*f, args, v),
        }
    }
}

fn diff_bin(op: BinOp, a: &Expr, b: &Expr, v: Var) -> Expr {
    let da = a.diff(v);
    let db = b.diff(v);
    match op {
        BinOp::Add => Expr::add(da, db),
        BinOp::Sub => Expr::sub(da, db),
        BinOp::Mul => Expr::add(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
        BinOp::Div => {
            // (a'b - ab') / b^2
            let num = Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db));
            Expr::div(num, Expr::pow(b.clone(), Expr::Num(2.0)))
        }
        BinOp::Pow => {
            if !b.depends_on(v) {
                // b * a^(b-1) * a'
                let reduced = Expr::sub(b.clone(), Expr::Num(1.0));
                Expr::mul(
                    Expr::mul(b.clone(), Expr::pow(a.clone(), reduced)),
                    da,
                )
            } else {
                // a^b * (b' ln a + b a'/a)
                let lhs = Expr::mul(db, Expr::call1(Func::Ln, a.clone()));
                let rhs = Expr::div(Expr::mul(b.clone(), da), a.clone());
                Expr::mul(
                    Expr::pow(a.clone(), b.clone()),
                    Expr::add(lhs, rhs),
                )
            }
        }
    }
}

fn diff_call(f: Func, args: &[Expr], v: Var) -> Expr {
    let a = &args[0];
    let da = a.diff(v);
    let chain = |outer: Expr| Expr::mul(outer, da.clone());
    match f {
        Func::Cos => Expr::neg(chain(Expr::call1(Func::Sin, a.clone()))),
        Func::Sin => chain(Expr::call1(Func::Cos, a.clone())),
        Func::Exp => chain(Expr::call1(Func::Exp, a.clone())),
        Func::Ln => Expr::div(da, a.clone()),
        Func::Abs => chain(Expr::call1(Func::Sgn, a.clone())),
        Func::Sgn => Expr::Num(0.0),
        Func::Sqrt => Expr::div(
            da,
            Expr::mul(Expr::Num(2.0), Expr::call1(Func::Sqrt, a.clone())),
        ),
        Func::Min | Func::Max => {
            let b = &args[1];
            let db = b.diff(v);
            let mean = Expr::div(Expr::add(da.clone(), db.clone()), Expr::Num(2.0));
            let half_gap = Expr::div(
                Expr::mul(
                    Expr::call1(Func::Sgn, Expr::sub(a.clone(), b.clone())),
                    Expr::sub(da, db),
                ),
                Expr::Num(2.0),
            );
            if f == Func::Min {
                Expr::sub(mean, half_gap)
            } else {
                Expr::add(mean, half_gap)
            }
        }
    }
}
