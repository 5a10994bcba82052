use std::fmt;

use super::{BinOp, Expr};

// Binding strength of the node's own operator.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, ..) => 4,
        Expr::Num(v) if *v < 0.0 => 3,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                child(f, a, prec(a) < 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ('+', 1),
                    BinOp::Sub => ('-', 1),
                    BinOp::Mul => ('*', 2),
                    BinOp::Div => ('/', 2),
                    BinOp::Pow => ('^', 4),
                };
                if *op == BinOp::Pow {
                    // base must be an atom; exponent may be unary or power
                    child(f, a, prec(a) < 5)?;
                    write!(f, "^")?;
                    child(f, b, prec(b) < 3)
                } else {
                    child(f, a, prec(a) < p)?;
                    write!(f, "{sym}")?;
                    child(f, b, prec(b) <= p)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;

    #[test]
    fn prints_with_minimal_parentheses() {
        for (src, printed) in [
            ("x1+x2*x3", "x1+x2*x3"),
            ("(x1+x2)*x3", "(x1+x2)*x3"),
            ("x1-(x2-x3)", "x1-(x2-x3)"),
            ("x1-x2-x3", "x1-x2-x3"),
            ("-x1^2", "-x1^2"),
            ("(-x1)^2", "(-x1)^2"),
            ("x1^x2^x3", "x1^x2^x3"),
            ("(x1^x2)^x3", "(x1^x2)^x3"),
            ("2^-t", "2^-t"),
            ("-(x1*x2)", "-(x1*x2)"),
            ("max(x1, 0.5)", "max(x1, 0.5)"),
        ] {
            let e = parse(src).unwrap();
            assert_eq!(e.to_string(), printed, "{src}");
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}
