//! Multiprecision plumbing shared by every numerical module.
//!
//! All heavy arithmetic runs on MPFR/MPC through `rug`. Precision is carried
//! explicitly as a bit count; nothing here touches global state.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Complex, Float};

use crate::Error;

/// Bits per decimal digit.
pub const LOG2_10: f64 = std::f64::consts::LOG2_10;

/// Working precision plus the absolute tolerance a computation must meet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionCtx {
    pub bits: u32,
    /// Target absolute tolerance, as log10 (e.g. -30.0 for 1e-30).
    pub tol_log10: f64,
}

impl PrecisionCtx {
    /// Precision for `digits` decimal digits with tolerance `10^-(digits/2)`.
    pub fn digits(digits: u32) -> Self {
        PrecisionCtx { bits: digits_to_bits(digits), tol_log10: -(digits as f64) / 2.0 }
    }

    pub fn with_tol(digits: u32, tol_log10: f64) -> Self {
        PrecisionCtx { bits: digits_to_bits(digits), tol_log10 }
    }

    pub fn decimal_digits(&self) -> f64 {
        self.bits as f64 / LOG2_10
    }

    pub fn tol(&self) -> f64 {
        10f64.powf(self.tol_log10)
    }

    /// Working precision must carry at least twice the digits the tolerance asks for.
    pub fn validate(&self) -> Result<(), Error> {
        let need = -2.0 * self.tol_log10;
        if self.decimal_digits() + 1e-9 < need {
            return Err(Error::Precision(format!(
                "precision insufficient: {:.1} digits cannot certify tolerance 1e{:.0}",
                self.decimal_digits(),
                self.tol_log10
            )));
        }
        Ok(())
    }
}

pub fn digits_to_bits(digits: u32) -> u32 {
    (digits as f64 * LOG2_10).ceil() as u32 + 8
}

#[inline]
pub fn fl(prec: u32, x: f64) -> Float {
    Float::with_val(prec, x)
}

#[inline]
pub fn cx(prec: u32, re: f64, im: f64) -> Complex {
    Complex::with_val(prec, (re, im))
}

pub fn czero(prec: u32) -> Complex {
    Complex::new(prec)
}

pub fn cone(prec: u32) -> Complex {
    Complex::with_val(prec, 1)
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn euler_gamma(prec: u32) -> Float {
    Float::with_val(prec, Constant::Euler)
}

/// `i * x` for real `x`.
pub fn i_times(prec: u32, x: &Float) -> Complex {
    Complex::with_val(prec, (Float::new(prec), x))
}

/// Parse a decimal string exactly to the given precision.
pub fn parse_float(prec: u32, s: &str) -> Result<Float, Error> {
    let parsed = Float::parse(s.trim()).map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))?;
    Ok(Float::with_val(prec, parsed))
}

/// Shortest round-trip decimal of an f64, re-read at full precision. A config
/// value written as `0.3` becomes the decimal 0.3, not its binary neighbour.
pub fn from_f64_decimal(prec: u32, x: f64) -> Float {
    let s = format!("{x:?}");
    Float::with_val(prec, Float::parse(&s).expect("f64 debug format is a valid float"))
}

pub fn abs2(z: &Complex) -> Float {
    Float::with_val(z.prec().0, z.norm_ref())
}

pub fn cabs(z: &Complex) -> Float {
    Float::with_val(z.prec().0, z.abs_ref())
}

/// log10 |z| as f64, -inf for zero.
pub fn log10_abs(z: &Complex) -> f64 {
    let a = cabs(z);
    if a.is_zero() {
        f64::NEG_INFINITY
    } else {
        a.log10().to_f64()
    }
}

/// Fixed-shape pairwise (tree) summation. The tree depends only on the
/// length, so results are bit-reproducible run to run.
pub fn pairwise_sum(xs: &[Float], prec: u32) -> Float {
    match xs.len() {
        0 => Float::new(prec),
        1 => Float::with_val(prec, &xs[0]),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a, prec) + pairwise_sum(b, prec)
        }
    }
}

pub fn pairwise_sum_c(xs: &[Complex], prec: u32) -> Complex {
    match xs.len() {
        0 => Complex::new(prec),
        1 => Complex::with_val(prec, &xs[0]),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum_c(a, prec) + pairwise_sum_c(b, prec)
        }
    }
}

/// Pairwise reduction over an index range with a caller-supplied leaf and
/// merge. Halves are evaluated with `rayon::join`; the tree shape is fixed.
pub fn tree_reduce<T, L, M>(lo: usize, hi: usize, leaf: &L, merge: &M) -> T
where
    T: Send,
    L: Fn(usize) -> T + Sync,
    M: Fn(T, T) -> T + Sync,
{
    debug_assert!(hi > lo);
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = rayon::join(|| tree_reduce(lo, mid, leaf, merge), || tree_reduce(mid, hi, leaf, merge));
    merge(a, b)
}

/// log Γ(x) for real x > 0.
pub fn ln_gamma(x: &Float) -> Float {
    Float::with_val(x.prec(), x.ln_gamma_ref())
}

/// log B(a, b) for positive integers.
pub fn ln_beta_int(prec: u32, a: u64, b: u64) -> Float {
    let fa = Float::with_val(prec, a);
    let fb = Float::with_val(prec, b);
    let fab = Float::with_val(prec, a + b);
    ln_gamma(&fa) + ln_gamma(&fb) - ln_gamma(&fab)
}

/// Bernoulli numbers B_0..B_n as exact rationals (B_1 = -1/2).
pub fn bernoulli(n: usize) -> Vec<rug::Rational> {
    use rug::Rational;
    let mut a: Vec<Rational> = vec![Rational::new(); n + 1];
    let mut out = Vec::with_capacity(n + 1);
    // Akiyama–Tanigawa
    for m in 0..=n {
        a[m] = Rational::from((1, (m + 1) as u64));
        for j in (1..=m).rev() {
            let diff = Rational::from(&a[j - 1] - &a[j]);
            a[j - 1] = diff * (j as u64);
        }
        out.push(a[0].clone());
    }
    if n >= 1 {
        out[1] = -out[1].clone();
    }
    out
}

/// Power with integer exponent for complex numbers.
pub fn cpow_i(z: &Complex, k: i32) -> Complex {
    Complex::with_val(z.prec().0, z.pow(k))
}

/// Shared real constant table to avoid recomputing π in tight loops.
#[derive(Clone, Debug)]
pub struct Consts {
    pub prec: u32,
    pub pi: Float,
    pub two_pi: Float,
    pub ln_two_pi: Float,
}

impl Consts {
    pub fn new(prec: u32) -> Self {
        let pi = pi(prec);
        let two_pi = Float::with_val(prec, &pi * 2u32);
        let ln_two_pi = Float::with_val(prec, two_pi.ln_ref());
        Consts { prec, pi, two_pi, ln_two_pi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_small() {
        let b = bernoulli(8);
        assert_eq!(b[0], rug::Rational::from(1));
        assert_eq!(b[1], rug::Rational::from((-1, 2)));
        assert_eq!(b[2], rug::Rational::from((1, 6)));
        assert_eq!(b[3], rug::Rational::from(0));
        assert_eq!(b[4], rug::Rational::from((-1, 30)));
        assert_eq!(b[8], rug::Rational::from((-1, 30)));
    }

    #[test]
    fn pairwise_is_order_fixed() {
        let xs: Vec<Float> = (0..37).map(|i| fl(80, 1.0 / (i as f64 + 1.0))).collect();
        let a = pairwise_sum(&xs, 80);
        let b = pairwise_sum(&xs, 80);
        assert_eq!(a, b);
        let naive: f64 = (0..37).map(|i| 1.0 / (i as f64 + 1.0)).sum();
        assert!((a.to_f64() - naive).abs() < 1e-13);
    }

    #[test]
    fn precision_policy() {
        assert!(PrecisionCtx::with_tol(64, -12.0).validate().is_ok());
        let err = PrecisionCtx::with_tol(16, -30.0).validate().unwrap_err();
        assert!(err.to_string().contains("precision insufficient"));
    }

    #[test]
    fn decimal_reparse() {
        let x = from_f64_decimal(200, 0.3);
        let y = parse_float(200, "0.3").unwrap();
        assert_eq!(x, y);
    }
}
