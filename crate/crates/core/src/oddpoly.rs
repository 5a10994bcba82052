//! Odd polynomials in the scalar control, the cosine power expansion behind
//! the averaged dynamics, the exact averaging gains, and least-squares fitting
//! of odd input nonlinearities.
//!
//! Gains are exact rationals over `i128`; conversion to `f64` happens at the
//! use sites. Power indices up to [`MAX_POWER_INDEX`] are supported.

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational used for all closed-form gains.
pub type Rational = Ratio<i128>;

/// Largest power index `n` (power `2n+1`) for which every exact quantity in
/// this module fits in `i128`.
pub const MAX_POWER_INDEX: u32 = 30;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OddPolyError {
    #[error("power index {0} exceeds the exact-arithmetic limit {MAX_POWER_INDEX}")]
    Overflow(u32),
    #[error("harmonic index l = {l} outside 0..={m}")]
    IndexOutOfRange { m: u32, l: u32 },
    #[error("invalid fit request: {0}")]
    InvalidFit(String),
    #[error("least-squares system is rank deficient (rank {rank} < {unknowns})")]
    Singular { rank: usize, unknowns: usize },
}

fn check_index(n: u32) -> Result<(), OddPolyError> {
    if n > MAX_POWER_INDEX {
        Err(OddPolyError::Overflow(n))
    } else {
        Ok(())
    }
}

/// Binomial coefficient in checked `i128` arithmetic.
pub fn binomial(n: u32, k: u32) -> Option<i128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: i128 = 1;
    for i in 0..k {
        // exact at every step: c * (n - i) is divisible by (i + 1)
        c = c.checked_mul((n - i) as i128)? / (i as i128 + 1);
    }
    Some(c)
}

pub fn pow2(e: u32) -> Option<i128> {
    1i128.checked_shl(e).filter(|v| *v > 0)
}

/// `p(u) = sum_n c_n u^(2n+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddPolynomial {
    coeffs: Vec<f64>,
}

impl OddPolynomial {
    /// Coefficients of `u, u^3, ..., u^(2m+1)`. Empty input is the zero polynomial
    /// of degree index 0.
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            return OddPolynomial { coeffs: vec![0.0] };
        }
        OddPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `m`, where `2m+1` is the highest representable power.
    pub fn degree_index(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation in `u^2`; odd to the bit.
    pub fn eval(&self, u: f64) -> f64 {
        let u2 = u * u;
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * u2 + c;
        }
        acc * u
    }

    fn trimmed(mut self) -> Self {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == 0.0 {
            self.coeffs.pop();
        }
        self
    }
}

/// Free-function form of [`OddPolynomial::eval`].
pub fn eval_odd_poly(p: &OddPolynomial, u: f64) -> f64 {
    p.eval(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosineTerm {
    /// Odd frequency multiplier `2n+1-2l`.
    pub multiplier: u32,
    /// `C(2n+1, l) / 2^(2n)`.
    pub coeff: Rational,
}

/// `cos^(2n+1)(θ) = sum_l coeff_l cos(multiplier_l θ)`, `l = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineExpansion {
    pub n: u32,
    pub terms: Vec<CosineTerm>,
}

impl CosineExpansion {
    pub fn eval(&self, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff.to_f64().unwrap_or(f64::NAN) * (t.multiplier as f64 * theta).cos())
            .sum()
    }
}

pub fn trig_power_expand(n: u32) -> Result<CosineExpansion, OddPolyError> {
    check_index(n)?;
    let b = 2 * n + 1;
    let denom = pow2(2 * n).ok_or(OddPolyError::Overflow(n))?;
    let terms = (0..=n)
        .map(|l| {
            let c = binomial(b, l).ok_or(OddPolyError::Overflow(n))?;
            Ok(CosineTerm {
                multiplier: b - 2 * l,
                coeff: Rational::new(c, denom),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(CosineExpansion { n, terms })
}

/// `A_m = sum_{l=0}^{m} C(2m+1, l)^2`.
pub fn avg_gain_a(m: u32) -> Result<Rational, OddPolyError> {
    check_index(m)?;
    let mut acc: i128 = 0;
    for l in 0..=m {
        let c = binomial(2 * m + 1, l).ok_or(OddPolyError::Overflow(m))?;
        let sq = c.checked_mul(c).ok_or(OddPolyError::Overflow(m))?;
        acc = acc.checked_add(sq).ok_or(OddPolyError::Overflow(m))?;
    }
    Ok(Rational::from_integer(acc))
}

/// `B_n = C(2n, n) / 2^(2n)`, the mean of `cos^(2n)`.
pub fn even_gain_b(n: u32) -> Result<Rational, OddPolyError> {
    check_index(n)?;
    let c = binomial(2 * n, n).ok_or(OddPolyError::Overflow(n))?;
    let d = pow2(2 * n).ok_or(OddPolyError::Overflow(n))?;
    Ok(Rational::new(c, d))
}

/// `C(2m+1, l)^2 / 2^(4m+1)`: the weak-limit coefficient per unit dither strength.
pub fn weak_limit_ratio(m: u32, l: u32) -> Result<Rational, OddPolyError> {
    check_index(m)?;
    if l > m {
        return Err(OddPolyError::IndexOutOfRange { m, l });
    }
    let c = binomial(2 * m + 1, l).ok_or(OddPolyError::Overflow(m))?;
    let sq = c.checked_mul(c).ok_or(OddPolyError::Overflow(m))?;
    let d = pow2(4 * m + 1).ok_or(OddPolyError::Overflow(m))?;
    Ok(Rational::new(sq, d))
}

/// `a_{m,l} = alpha * C(2m+1, l)^2 / 2^(4m+1)`.
pub fn weak_limit_coeff(m: u32, l: u32, alpha: f64) -> Result<f64, OddPolyError> {
    Ok(alpha * to_f64(weak_limit_ratio(m, l)?))
}

pub fn to_f64(r: Rational) -> f64 {
    // numerator and denominator are each below 2^127; the division is correctly
    // rounded only when both are exactly representable, which holds for the
    // small indices used in practice
    r.to_f64().unwrap_or(f64::NAN)
}

/// An odd polynomial fitted to a scalar function, with the achieved error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddFit {
    pub poly: OddPolynomial,
    /// Half-width `U` of the symmetric interval.
    pub half_width: f64,
    pub samples: usize,
    /// Max abs error on a uniform check grid of `10 * samples` points.
    pub sup_error: f64,
}

/// Discrete least squares over `u, u^3, ..., u^(2m+1)` on `samples` uniformly
/// spaced points of `[-U, U]`.
///
/// The fit is solved in the scaled variable `s = u/U` through an SVD, so the
/// returned polynomial is odd by construction.
pub fn fit_odd_polynomial<F>(
    h: F,
    degree_index: usize,
    half_width: f64,
    samples: usize,
) -> Result<OddFit, OddPolyError>
where
    F: Fn(f64) -> f64,
{
    let unknowns = degree_index + 1;
    if !half_width.is_finite() || half_width < 0.0 {
        return Err(OddPolyError::InvalidFit(format!(
            "half-width must be finite and positive, got {half_width}"
        )));
    }
    if samples < 2 * unknowns {
        return Err(OddPolyError::InvalidFit(format!(
            "need at least {} samples for degree index {degree_index}, got {samples}",
            2 * unknowns
        )));
    }
    let grid = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (count - 1) as f64)
            .collect()
    };
    let us = grid(samples);
    let mut design = DMatrix::<f64>::zeros(samples, unknowns);
    let mut rhs = DVector::<f64>::zeros(samples);
    let scale = if half_width > 0.0 { half_width } else { 1.0 };
    for (i, &u) in us.iter().enumerate() {
        let s = u / scale;
        let s2 = s * s;
        let mut p = s;
        for j in 0..unknowns {
            design[(i, j)] = p;
            p *= s2;
        }
        let y = h(u);
        if !y.is_finite() {
            return Err(OddPolyError::InvalidFit(format!("h({u}) is not finite")));
        }
        rhs[i] = y;
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * samples as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if smax == 0.0 || rank < unknowns {
        return Err(OddPolyError::Singular { rank, unknowns });
    }
    let scaled = svd
        .solve(&rhs, tol)
        .map_err(|e| OddPolyError::InvalidFit(e.to_string()))?;
    let coeffs: Vec<f64> = scaled
        .iter()
        .enumerate()
        .map(|(j, c)| c / scale.powi(2 * j as i32 + 1))
        .collect();
    let poly = OddPolynomial::new(coeffs).trimmed();
    let sup_error = grid(10 * samples)
        .into_iter()
        .map(|u| (poly.eval(u) - h(u)).abs())
        .fold(0.0, f64::max);
    Ok(OddFit {
        poly,
        half_width,
        samples,
        sup_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn expansion_small_cases() {
        let e0 = trig_power_expand(0).unwrap();
        assert_eq!(
            e0.terms,
            vec![CosineTerm {
                multiplier: 1,
                coeff: r(1, 1)
            }]
        );
        let e1 = trig_power_expand(1).unwrap();
        let pairs: Vec<_> = e1.terms.iter().map(|t| (t.multiplier, t.coeff)).collect();
        assert_eq!(pairs, vec![(3, r(1, 4)), (1, r(3, 4))]);
        let e2 = trig_power_expand(2).unwrap();
        let pairs: Vec<_> = e2.terms.iter().map(|t| (t.multiplier, t.coeff)).collect();
        assert_eq!(pairs, vec![(5, r(1, 16)), (3, r(5, 16)), (1, r(10, 16))]);
    }

    #[test]
    fn expansion_identity_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 0..=6 {
            let e = trig_power_expand(n).unwrap();
            assert!(e.terms.iter().all(|t| t.multiplier % 2 == 1));
            for _ in 0..1000 {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let lhs = th.cos().powi(2 * n as i32 + 1);
                assert!((lhs - e.eval(th)).abs() <= 1e-12, "n={n} th={th}");
            }
        }
    }

    #[test]
    fn exact_gains() {
        assert_eq!(avg_gain_a(0).unwrap(), r(1, 1));
        assert_eq!(avg_gain_a(1).unwrap(), r(10, 1));
        assert_eq!(avg_gain_a(2).unwrap(), r(126, 1));
        assert_eq!(even_gain_b(0).unwrap(), r(1, 1));
        assert_eq!(even_gain_b(1).unwrap(), r(1, 2));
        assert_eq!(even_gain_b(2).unwrap(), r(3, 8));
    }

    #[test]
    fn weak_limit_coefficients() {
        assert_eq!(weak_limit_coeff(0, 0, 1.0).unwrap(), 0.5);
        assert_eq!(weak_limit_coeff(1, 1, 1.0).unwrap(), 9.0 / 32.0);
        assert_eq!(weak_limit_coeff(1, 0, 2.0).unwrap(), 1.0 / 16.0);
        assert_eq!(
            weak_limit_coeff(1, 2, 1.0),
            Err(OddPolyError::IndexOutOfRange { m: 1, l: 2 })
        );
    }

    #[test]
    fn gain_consistency_in_rationals() {
        for m in 0..=MAX_POWER_INDEX {
            let two = pow2(4 * m + 1).unwrap();
            let sum = (0..=m).fold(r(0, 1), |acc, l| acc + weak_limit_ratio(m, l).unwrap());
            assert_eq!(sum * Rational::from_integer(two), avg_gain_a(m).unwrap(), "m={m}");
        }
    }

    #[test]
    fn overflow_limit_is_explicit() {
        assert!(trig_power_expand(MAX_POWER_INDEX).is_ok());
        assert!(avg_gain_a(MAX_POWER_INDEX).is_ok());
        assert!(even_gain_b(MAX_POWER_INDEX).is_ok());
        assert_eq!(
            trig_power_expand(MAX_POWER_INDEX + 1),
            Err(OddPolyError::Overflow(MAX_POWER_INDEX + 1))
        );
        assert_eq!(avg_gain_a(40), Err(OddPolyError::Overflow(40)));
    }

    #[test]
    fn eval_examples() {
        let p = OddPolynomial::new(vec![0.05, 0.25]);
        assert!((p.eval(1.0) - 0.3).abs() < 1e-15);
        assert_eq!(p.eval(0.0), 0.0);
        let q = OddPolynomial::new(vec![0.1, 0.1, 0.1]);
        assert!((q.eval(2.0) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn fit_reproduces_basis_element() {
        let fit = fit_odd_polynomial(|u| u * u * u, 1, 2.0, 41).unwrap();
        let c = fit.poly.coeffs();
        assert!(c[0].abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12, "{c:?}");
        assert!(fit.sup_error <= 1e-12);
    }

    #[test]
    fn fit_sine_against_dense_brute_force() {
        let fit = fit_odd_polynomial(f64::sin, 2, 1.0, 201).unwrap();
        assert!(fit.sup_error < 1e-3, "{}", fit.sup_error);
        // normal equations on a 20001-point grid as the brute-force reference
        let n = 20001;
        let mut g = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        for i in 0..n {
            let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let basis = [u, u.powi(3), u.powi(5)];
            for j in 0..3 {
                b[j] += basis[j] * u.sin();
                for k in 0..3 {
                    g[j][k] += basis[j] * basis[k];
                }
            }
        }
        let gm = nalgebra::Matrix3::from_fn(|i, j| g[i][j]);
        let sol = gm.lu().solve(&nalgebra::Vector3::from(b)).unwrap();
        let brute = OddPolynomial::new(sol.iter().copied().collect());
        let brute_sup = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .map(|u| (brute.eval(u) - u.sin()).abs())
            .fold(0.0, f64::max);
        assert!(brute_sup < 1e-3);
        assert!((fit.sup_error - brute_sup).abs() < 1e-5);
    }

    #[test]
    fn fit_rejects_degenerate_requests() {
        assert!(matches!(
            fit_odd_polynomial(f64::sin, 1, 0.0, 40),
            Err(OddPolyError::Singular { .. })
        ));
        assert!(matches!(
            fit_odd_polynomial(f64::sin, 3, 1.0, 7),
            Err(OddPolyError::InvalidFit(_))
        ));
    }

    #[test]
    fn fit_trims_trailing_zeros() {
        let fit = fit_odd_polynomial(|_| 0.0, 2, 1.0, 20).unwrap();
        assert_eq!(fit.poly.coeffs(), &[0.0]);
    }

    proptest! {
        #[test]
        fn eval_is_odd_to_the_bit(
            coeffs in proptest::collection::vec(-10.0f64..10.0, 1..6),
            u in -5.0f64..5.0,
        ) {
            let p = OddPolynomial::new(coeffs);
            prop_assert_eq!(p.eval(-u).to_bits(), (-p.eval(u)).to_bits());
        }
    }
}
