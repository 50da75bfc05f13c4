//! Jacobi theta functions with characteristics, Weierstrass functions of the
//! lattice `Z + tau Z`, and Riemann zeta values.
//!
//! Conventions:
//! - `theta_{a,b,tau}(z) = Σ_n exp(iπτ(n+a)² + 2iπ(n+a)(z+b))`, `θ1 = theta_{½,½}`;
//! - `η1 = ζ_τ(1/2) = -θ1'''(0) / (6 θ1'(0))`, `η2 = ζ_τ(τ/2)`;
//! - `σ_τ(z) = θ1(z)/θ1'(0) · exp(η1 z²)`, `ζ_τ = σ'/σ`, `℘ = -ζ_τ'`.
//!
//! Every elliptic quantity is derived from the theta series. Lattice sums
//! appear only in a double-precision cross-check.

use num_complex::Complex64;
use rug::float::Round;
use rug::ops::Pow;
use rug::{Complex, Float};

use crate::mp::{self, bernoulli};
use crate::{Error, Result};

const GUARD_BITS: u32 = 32;

/// A point of the upper half plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulus {
    pub tau: Complex,
}

impl Modulus {
    pub fn new(tau: Complex) -> Result<Self> {
        if !(tau.imag().is_finite() && tau.real().is_finite()) || *tau.imag() <= 0 {
            return Err(Error::Config(format!("modulus must have Im τ > 0, got {}", tau.to_string_radix(10, Some(12)))));
        }
        Ok(Modulus { tau })
    }

    /// From decimal components; `0.3` means the decimal 0.3.
    pub fn from_f64(prec: u32, re: f64, im: f64) -> Result<Self> {
        Self::new(Complex::with_val(prec, (mp::from_f64_decimal(prec, re), mp::from_f64_decimal(prec, im))))
    }

    pub fn im(&self) -> &Float {
        self.tau.imag()
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.tau.real().to_f64(), self.tau.imag().to_f64())
    }

    pub fn with_prec(&self, prec: u32) -> Modulus {
        Modulus { tau: Complex::with_val(prec, &self.tau) }
    }
}

// ---------------------------------------------------------------------------
// theta series

/// Taylor coefficients `t_m = θ^{(m)}(z)/m!`, `m = 0..=k`, of
/// `theta_{a,b,tau}` at `z`, accurate to about `prec` bits relative to the
/// largest series term.
pub fn theta_taylor(a: &Float, b: &Float, tau: &Complex, z: &Complex, k: usize, prec: u32) -> Result<Vec<Complex>> {
    if *tau.imag() <= 0 {
        return Err(Error::Domain("theta needs Im τ > 0".into()));
    }
    let wp = prec + GUARD_BITS;
    let pi = mp::pi(wp);
    let imt = Float::with_val(wp, tau.imag());
    // the summand peaks near n + a = -Im z / Im τ
    let center_f = Float::with_val(wp, -Float::with_val(wp, z.imag() / &imt) - a);
    let n0 = center_f.to_f64().round() as i64;
    let imt64 = imt.to_f64();
    let target = wp as f64 * std::f64::consts::LN_2 + 10.0;
    let mut half = 1usize;
    loop {
        let reach = (half as f64) + a.to_f64().abs() + center_f.to_f64().abs() + 1.0;
        let growth = if k == 0 { 0.0 } else { k as f64 * (2.0 * std::f64::consts::PI * reach).ln().max(0.0) };
        if std::f64::consts::PI * imt64 * (half as f64).powi(2) > target + growth {
            break;
        }
        half += 1;
    }
    half *= 2;

    let i2pi = mp::i_times(wp, &Float::with_val(wp, &pi * 2u32));
    let ipi_tau = Complex::with_val(wp, tau * &mp::i_times(wp, &pi));
    let q2 = Complex::with_val(wp, Complex::with_val(wp, &ipi_tau * 2u32).exp_ref());
    let w = Complex::with_val(wp, z + b);
    let exponent = |nf: &Float| -> Complex {
        // iπτ x² + 2iπ x w with x = n + a
        let x2 = Float::with_val(wp, nf.square_ref());
        Complex::with_val(wp, &ipi_tau * &x2) + Complex::with_val(wp, &i2pi * &w) * nf
    };
    let xa = Float::with_val(wp, a + n0);
    let t0 = exponent(&xa).exp();
    // ratio term_{n+1}/term_n = exp(iπτ(2x+1) + 2iπw)
    let ratio_at = |x: &Float| -> Complex {
        let two_x1 = Float::with_val(wp, x * 2u32) + 1u32;
        (Complex::with_val(wp, &ipi_tau * &two_x1) + &i2pi * w.clone()).exp()
    };

    let mut acc: Vec<Vec<Complex>> = (0..=k).map(|_| Vec::with_capacity(2 * half + 1)).collect();
    let mut push_term = |term: &Complex, x: &Float| {
        let c = mp::i_times(wp, &Float::with_val(wp, &pi * 2u32)) * x.clone();
        let mut pw = term.clone();
        acc[0].push(pw.clone());
        for m in 1..=k {
            pw *= &c;
            pw /= m as u32;
            acc[m].push(pw.clone());
        }
    };

    push_term(&t0, &xa);
    // upward
    let mut term = t0.clone();
    let mut ratio = ratio_at(&xa);
    let mut x = xa.clone();
    for _ in 0..half {
        term *= &ratio;
        ratio *= &q2;
        x += 1u32;
        push_term(&term, &x);
    }
    // downward: term_{n-1} = term_n / ratio_{n-1}, 1/ratio_{m-1} = (1/ratio_m) q²
    let mut term = t0;
    let mut x = xa.clone();
    let mut inv_ratio = Complex::with_val(wp, ratio_at(&Float::with_val(wp, &xa - 1u32)).recip_ref());
    for _ in 0..half {
        term *= &inv_ratio;
        inv_ratio *= &q2;
        x -= 1u32;
        push_term(&term, &x);
    }
    Ok(acc.iter().map(|v| Complex::with_val(prec, mp::pairwise_sum_c(v, wp))).collect())
}

/// `theta_{a,b,tau}(z)`.
pub fn theta(a: &Float, b: &Float, tau: &Complex, z: &Complex, prec: u32) -> Result<Complex> {
    Ok(theta_taylor(a, b, tau, z, 0, prec)?.swap_remove(0))
}

/// Relative residual of the two quasi-periodicity relations
/// `θ(z+1) = e^{2iπa} θ(z)` and `θ(z+τ) = e^{-iπτ - 2iπ(z+b)} θ(z)`.
pub fn theta_quasiperiod_residual(a: &Float, b: &Float, tau: &Complex, z: &Complex, prec: u32) -> Result<f64> {
    let pi = mp::pi(prec);
    let th = theta(a, b, tau, z, prec)?;
    let th1 = theta(a, b, tau, &Complex::with_val(prec, z + 1u32), prec)?;
    let tht = theta(a, b, tau, &Complex::with_val(prec, z + tau), prec)?;
    let f1 = mp::i_times(prec, &(Float::with_val(prec, &pi * a) * 2u32)).exp();
    let e = Complex::with_val(prec, -(tau.clone()) - Complex::with_val(prec, z + b) * 2u32);
    let ft = (e * mp::i_times(prec, &pi)).exp();
    let r1 = rel_diff(&th1, &Complex::with_val(prec, &f1 * &th));
    let r2 = rel_diff(&tht, &Complex::with_val(prec, &ft * &th));
    Ok(r1.max(r2))
}

/// `|x - y| / max(1, |y|)` as f64.
pub fn rel_diff(x: &Complex, y: &Complex) -> f64 {
    let prec = x.prec().0.max(y.prec().0);
    let d = mp::cabs(&Complex::with_val(prec, x - y));
    let s = mp::cabs(y);
    let s = if s > 1 { s } else { Float::with_val(prec, 1) };
    Float::with_val(prec, d / s).to_f64()
}

// ---------------------------------------------------------------------------
// Weierstrass functions

/// Cached lattice data at a fixed precision.
#[derive(Clone, Debug)]
pub struct Elliptic {
    pub prec: u32,
    pub modulus: Modulus,
    pub half: Float,
    /// θ1'(0)
    pub theta1_d1: Complex,
    /// ζ_τ(1/2)
    pub eta1: Complex,
    /// ζ_τ(τ/2) = η1 τ - iπ
    pub eta2: Complex,
}

impl Elliptic {
    pub fn new(modulus: &Modulus, prec: u32) -> Result<Self> {
        let modulus = modulus.with_prec(prec);
        let half = Float::with_val(prec, 0.5);
        let t = theta_taylor(&half, &half, &modulus.tau, &mp::czero(prec), 3, prec)?;
        let theta1_d1 = t[1].clone();
        if theta1_d1.real().is_zero() && theta1_d1.imag().is_zero() {
            return Err(Error::Numerical("θ1'(0) vanished".into()));
        }
        // θ1'''(0)/6 = t[3]
        let eta1 = Complex::with_val(prec, -Complex::with_val(prec, &t[3] / &theta1_d1));
        let eta2 = Complex::with_val(prec, &eta1 * &modulus.tau) - mp::i_times(prec, &mp::pi(prec));
        Ok(Elliptic { prec, modulus, half, theta1_d1, eta1, eta2 })
    }

    pub fn tau(&self) -> &Complex {
        &self.modulus.tau
    }

    /// Distance from `z` to the nearest lattice point.
    pub fn lattice_distance(&self, z: &Complex) -> Float {
        let (m, n) = self.nearest_lattice(z);
        let w = Complex::with_val(self.prec, z - Complex::with_val(self.prec, self.tau() * n)) - m;
        mp::cabs(&w)
    }

    /// Integers (m, n) minimising |z - m - nτ| (checked over neighbours).
    pub fn nearest_lattice(&self, z: &Complex) -> (i64, i64) {
        let tau = self.modulus.to_c64();
        let zc = Complex64::new(z.real().to_f64(), z.imag().to_f64());
        let n0 = (zc.im / tau.im).round() as i64;
        let m0 = (zc.re - n0 as f64 * tau.re).round() as i64;
        let mut best = (m0, n0, f64::INFINITY);
        for dn in -1..=1 {
            for dm in -1..=1 {
                let (m, n) = (m0 + dm, n0 + dn);
                let d = (zc - Complex64::new(m as f64, 0.0) - tau * n as f64).norm();
                if d < best.2 {
                    best = (m, n, d);
                }
            }
        }
        (best.0, best.1)
    }

    fn check_off_lattice(&self, z: &Complex) -> Result<()> {
        let d = self.lattice_distance(z);
        let floor = Float::with_val(self.prec, Float::i_exp(1, -(self.prec as i32) / 2));
        if d < floor {
            return Err(Error::Domain("point lies on the lattice".into()));
        }
        Ok(())
    }

    /// Taylor coefficients of θ1 at z.
    pub fn theta1_taylor(&self, z: &Complex, k: usize) -> Vec<Complex> {
        theta_taylor(&self.half, &self.half, self.tau(), z, k, self.prec).expect("modulus validated")
    }

    /// Taylor coefficients `ℓ_m` of `log θ1(z + h)` in h, `m = 1..=k`
    /// (index 0 holds `log θ1(z)`, principal branch).
    pub fn log_theta1_taylor(&self, z: &Complex, k: usize) -> Result<Vec<Complex>> {
        self.check_off_lattice(z)?;
        let t = self.theta1_taylor(z, k);
        Ok(log_series(&t, self.prec))
    }

    /// `℘^{(j)}(z)` for `j = 0..=kmax`, from the log-theta Taylor series:
    /// `℘ = -(log θ1)'' - 2η1`, `℘^{(j)} = -(log θ1)^{(j+2)}`.
    pub fn weier_p_derivs(&self, z: &Complex, kmax: usize) -> Result<Vec<Complex>> {
        let l = self.log_theta1_taylor(z, kmax + 2)?;
        let mut out = Vec::with_capacity(kmax + 1);
        let mut fact = Float::with_val(self.prec, 2); // (j+2)!
        for j in 0..=kmax {
            let mut v = Complex::with_val(self.prec, -Complex::with_val(self.prec, &l[j + 2] * &fact));
            if j == 0 {
                v -= Complex::with_val(self.prec, &self.eta1 * 2u32);
            }
            out.push(v);
            fact *= (j + 3) as u32;
        }
        Ok(out)
    }

    pub fn weier_p(&self, z: &Complex, k: usize) -> Result<Complex> {
        Ok(self.weier_p_derivs(z, k)?.swap_remove(k))
    }

    /// `ζ_τ(z) = θ1'(z)/θ1(z) + 2η1 z`.
    pub fn weier_zeta(&self, z: &Complex) -> Result<Complex> {
        let l = self.log_theta1_taylor(z, 1)?;
        Ok(Complex::with_val(self.prec, &l[1] + Complex::with_val(self.prec, &self.eta1 * z) * 2u32))
    }

    /// `σ_τ(z) = θ1(z)/θ1'(0) · exp(η1 z²)`; entire, zero on the lattice.
    pub fn weier_sigma(&self, z: &Complex) -> Complex {
        let t = self.theta1_taylor(z, 0);
        let e = Complex::with_val(self.prec, &self.eta1 * Complex::with_val(self.prec, z.square_ref())).exp();
        Complex::with_val(self.prec, &t[0] / &self.theta1_d1) * e
    }

    /// Principal `log σ_τ(z)` up to 2πi, for off-lattice z.
    pub fn log_sigma(&self, z: &Complex) -> Result<Complex> {
        let l = self.log_theta1_taylor(z, 0)?;
        let d = Complex::with_val(self.prec, self.theta1_d1.ln_ref());
        Ok(Complex::with_val(self.prec, &l[0] - &d) + Complex::with_val(self.prec, &self.eta1 * Complex::with_val(self.prec, z.square_ref())))
    }

    /// η1 from the quasi-modular Eisenstein series,
    /// `η1 = (π²/6) E2(τ)`, `E2 = 1 - 24 Σ σ1(n) qⁿ`, `q = e^{2iπτ}`.
    pub fn eta1_eisenstein(&self) -> Complex {
        let prec = self.prec + GUARD_BITS;
        let pi = mp::pi(prec);
        let q = (mp::i_times(prec, &Float::with_val(prec, &pi * 2u32)) * Complex::with_val(prec, self.tau())).exp();
        let decay = 2.0 * std::f64::consts::PI * self.modulus.im().to_f64();
        let nmax = ((prec as f64 * std::f64::consts::LN_2 + 20.0) / decay).ceil() as u64 + 2;
        // Σ n qⁿ/(1 - qⁿ) = Σ σ1(n) qⁿ
        let mut s = Complex::new(prec);
        let mut qn = Complex::with_val(prec, 1);
        for n in 1..=nmax {
            qn *= &q;
            let den = Complex::with_val(prec, 1 - Complex::with_val(prec, &qn));
            s += Complex::with_val(prec, &qn / &den) * n;
        }
        let e2 = Complex::with_val(prec, 1) - s * 24u32;
        let pi2 = Float::with_val(prec, pi.square_ref()) / 6u32;
        Complex::with_val(self.prec, e2 * pi2)
    }

    /// Legendre relation residual `|η1 τ - η2 - iπ|` with η1 from the
    /// Eisenstein series and η2 from the theta logarithmic derivative at τ/2.
    pub fn legendre_residual(&self) -> Result<f64> {
        let prec = self.prec;
        let eta1 = self.eta1_eisenstein();
        let half_tau = Complex::with_val(prec, self.tau() / 2u32);
        let eta2 = self.weier_zeta(&half_tau)?;
        let lhs = Complex::with_val(prec, &eta1 * self.tau()) - eta2;
        Ok(rel_diff(&lhs, &mp::i_times(prec, &mp::pi(prec))))
    }

    /// Residuals of `σ(z+1) = -e^{2η1(z+1/2)} σ(z)` and
    /// `σ(z+τ) = -e^{2η2(z+τ/2)} σ(z)`; the larger is returned.
    pub fn sigma_quasiperiod_residual(&self, z: &Complex) -> f64 {
        let prec = self.prec;
        let s = self.weier_sigma(z);
        let s1 = self.weier_sigma(&Complex::with_val(prec, z + 1u32));
        let st = self.weier_sigma(&Complex::with_val(prec, z + self.tau()));
        let e1 = (Complex::with_val(prec, &self.eta1 * Complex::with_val(prec, z + &self.half)) * 2u32).exp();
        let zt = Complex::with_val(prec, z + Complex::with_val(prec, self.tau() / 2u32));
        let et = (Complex::with_val(prec, &self.eta2 * zt) * 2u32).exp();
        let r1 = rel_diff(&s1, &-Complex::with_val(prec, &e1 * &s));
        let r2 = rel_diff(&st, &-Complex::with_val(prec, &et * &s));
        r1.max(r2)
    }

    /// Residual of the σ-θ bridge: σ computed from its Taylor expansion
    /// `σ = z + …` against the closed theta form, at small |z|.
    pub fn sigma_bridge_residual(&self, z: &Complex) -> f64 {
        // log(σ/z) = log(θ1/(θ1'(0) z)) + η1 z²; its series starts at z⁴
        let prec = self.prec;
        let t0 = self.theta1_taylor(&mp::czero(prec), 41);
        let mut ratio = Vec::new();
        for j in (1..t0.len()).step_by(2) {
            ratio.push(Complex::with_val(prec, &t0[j] / &self.theta1_d1));
        }
        // θ1/(θ1'(0) z) = Σ ratio[j] z^{2j}
        let z2 = Complex::with_val(prec, z.square_ref());
        let mut series = Complex::new(prec);
        let mut pw = Complex::with_val(prec, 1);
        for r in &ratio {
            series += Complex::with_val(prec, r * &pw);
            pw *= &z2;
        }
        let sigma_series = Complex::with_val(prec, z * series) * Complex::with_val(prec, &self.eta1 * &z2).exp();
        rel_diff(&self.weier_sigma(z), &sigma_series)
    }
}

/// Taylor coefficients of `log f` from those of `f` (`t[0] ≠ 0`).
pub fn log_series(t: &[Complex], prec: u32) -> Vec<Complex> {
    let k = t.len() - 1;
    let mut l = Vec::with_capacity(k + 1);
    l.push(Complex::with_val(prec, t[0].ln_ref()));
    let inv0 = Complex::with_val(prec, t[0].recip_ref());
    for m in 1..=k {
        let mut acc = t[m].clone();
        for j in 1..m {
            let term = Complex::with_val(prec, &l[j] * &t[m - j]) * j as u32 / m as u32;
            acc -= term;
        }
        l.push(Complex::with_val(prec, &acc * &inv0));
    }
    l
}

// ---------------------------------------------------------------------------
// double-precision fast path

/// Double-precision θ1, for Monte-Carlo sampling.
pub fn theta1_f64(tau: Complex64, z: Complex64) -> Complex64 {
    let half = 0.5;
    let c = -z.im / tau.im - half;
    let n0 = c.round() as i64;
    let n_half = ((40.0 / (std::f64::consts::PI * tau.im)).sqrt().ceil() as i64 + 2) * 2;
    let i = Complex64::i();
    let pi = std::f64::consts::PI;
    let mut s = Complex64::new(0.0, 0.0);
    for n in (n0 - n_half)..=(n0 + n_half) {
        let x = n as f64 + half;
        s += (i * pi * tau * x * x + 2.0 * i * pi * x * (z + half)).exp();
    }
    s
}

/// Double-precision lattice data for fast evaluation.
#[derive(Clone, Copy, Debug)]
pub struct EllipticF64 {
    pub tau: Complex64,
    pub theta1_d1: Complex64,
    pub eta1: Complex64,
}

impl EllipticF64 {
    pub fn from(e: &Elliptic) -> Self {
        let c = |z: &Complex| Complex64::new(z.real().to_f64(), z.imag().to_f64());
        EllipticF64 { tau: e.modulus.to_c64(), theta1_d1: c(&e.theta1_d1), eta1: c(&e.eta1) }
    }

    pub fn sigma(&self, z: Complex64) -> Complex64 {
        theta1_f64(self.tau, z) / self.theta1_d1 * (self.eta1 * z * z).exp()
    }
}

/// ℘ by symmetric lattice summation over |m|,|n| ≤ m_max, with the tail
/// estimated by Richardson extrapolation in 1/M. Low accuracy; cross-check only.
pub fn weier_p_lattice_sum(tau: Complex64, z: Complex64, m_max: i64) -> Complex64 {
    let partial = |mm: i64| {
        let mut s = 1.0 / (z * z);
        for m in -mm..=mm {
            for n in -mm..=mm {
                if m == 0 && n == 0 {
                    continue;
                }
                let w = Complex64::new(m as f64, 0.0) + tau * n as f64;
                s += 1.0 / ((z - w) * (z - w)) - 1.0 / (w * w);
            }
        }
        s
    };
    let a = partial(m_max);
    let b = partial(2 * m_max);
    2.0 * b - a
}

// ---------------------------------------------------------------------------
// Riemann zeta

/// Bernoulli numbers B_0..B_n as floats.
pub fn bernoulli_floats(n: usize, prec: u32) -> Vec<Float> {
    bernoulli(n).into_iter().map(|r| Float::with_val(prec, r)).collect()
}

/// `(ζ(s), ζ'(s))` for real `s ≠ 1` by Euler–Maclaurin summation,
/// `ζ(s) = Σ_{n<N} n^{-s} + N^{1-s}/(s-1) + N^{-s}/2 + Σ_k B_{2k}/(2k)! (s)_{2k-1} N^{-s-2k+1}`.
pub fn riemann_zeta_em(s: &Float, prec: u32) -> Result<(Float, Float)> {
    if *s == 1 {
        return Err(Error::Domain("ζ has a pole at s = 1".into()));
    }
    let wp = prec + GUARD_BITS;
    let digits = wp as f64 / mp::LOG2_10;
    let sf = s.to_f64();
    let n_cut = (digits.max(10.0) + sf.abs()).ceil() as u64 + 10;
    let s = Float::with_val(wp, s);
    let mut zeta_terms = Vec::with_capacity(n_cut as usize);
    let mut dzeta_terms = Vec::with_capacity(n_cut as usize);
    for n in 1..n_cut {
        let ln_n = Float::with_val(wp, n).ln();
        let t = Float::with_val(wp, -Float::with_val(wp, &s * &ln_n)).exp();
        dzeta_terms.push(Float::with_val(wp, -Float::with_val(wp, &t * &ln_n)));
        zeta_terms.push(t);
    }
    let nf = Float::with_val(wp, n_cut);
    let ln_nn = Float::with_val(wp, nf.ln_ref());
    let n_pow = |e: &Float| Float::with_val(wp, e * &ln_nn).exp();
    let s_m1 = Float::with_val(wp, &s - 1u32);
    let a = Float::with_val(wp, n_pow(&Float::with_val(wp, 1 - &s)) / &s_m1);
    zeta_terms.push(a.clone());
    dzeta_terms.push(Float::with_val(wp, -Float::with_val(wp, &a * &ln_nn)) - Float::with_val(wp, &a / &s_m1));
    let b = Float::with_val(wp, n_pow(&Float::with_val(wp, -&s)) / 2u32);
    zeta_terms.push(b.clone());
    dzeta_terms.push(Float::with_val(wp, -Float::with_val(wp, &b * &ln_nn)));

    let kmax = (digits / 2.0).ceil() as usize + 10;
    let bern = bernoulli_floats(2 * kmax, wp);
    let tol = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    let mut fact = Float::with_val(wp, 1); // (2k)!
    let mut converged = false;
    for k in 1..=kmax {
        fact *= ((2 * k - 1) * (2 * k)) as u32;
        // P = Π_{j=0}^{2k-2} (s+j) and its derivative
        let mut p = Float::with_val(wp, 1);
        let mut dp = Float::new(wp);
        for j in 0..=(2 * k - 2) {
            let f = Float::with_val(wp, &s + j as u32);
            dp = Float::with_val(wp, &dp * &f) + &p;
            p *= &f;
        }
        let e = Float::with_val(wp, -Float::with_val(wp, &s + (2 * k - 1) as u32));
        let npow = n_pow(&e);
        let c = Float::with_val(wp, &bern[2 * k] / &fact) * &npow;
        let t = Float::with_val(wp, &c * &p);
        let dt = Float::with_val(wp, &c * &dp) - Float::with_val(wp, &t * &ln_nn);
        let small = Float::with_val(wp, t.abs_ref()) < tol && Float::with_val(wp, dt.abs_ref()) < tol;
        zeta_terms.push(t);
        dzeta_terms.push(dt);
        if small && k > 2 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Precision("precision insufficient: Euler–Maclaurin tail did not converge".into()));
    }
    Ok((Float::with_val(prec, mp::pairwise_sum(&zeta_terms, wp)), Float::with_val(prec, mp::pairwise_sum(&dzeta_terms, wp))))
}

/// ζ'(-1) through the derivative of the functional equation at s = -1:
/// `ζ'(-1) = -(1/12)(log 2π - (1 - γ) - ζ'(2)/ζ(2))`.
pub fn zeta_deriv_minus1_functional(prec: u32) -> Result<Float> {
    let wp = prec + GUARD_BITS;
    let (z2, dz2) = riemann_zeta_em(&Float::with_val(wp, 2), wp)?;
    let ln2pi = Float::with_val(wp, mp::pi(wp) * 2u32).ln();
    let one_minus_gamma = Float::with_val(wp, 1 - mp::euler_gamma(wp));
    let inner = ln2pi - one_minus_gamma - Float::with_val(wp, &dz2 / &z2);
    Ok(Float::with_val(prec, -inner / 12u32))
}

/// ζ'(-1) = 1/12 - log A, with Glaisher's A from the hyperfactorial
/// asymptotics `log Π k^k = (n²/2 + n/2 + 1/12) log n - n²/4 + log A + Σ_j B_{2j}/(2j(2j-1)(2j-2)) n^{2-2j}`.
pub fn zeta_deriv_minus1_glaisher(prec: u32) -> Result<Float> {
    let wp = prec + GUARD_BITS;
    let digits = wp as f64 / mp::LOG2_10;
    let n = (digits.max(20.0)).ceil() as u64;
    let nf = Float::with_val(wp, n);
    let terms: Vec<Float> = (1..=n).map(|k| Float::with_val(wp, k).ln() * k).collect();
    let ln_h = mp::pairwise_sum(&terms, wp);
    let ln_n = Float::with_val(wp, nf.ln_ref());
    let n2 = Float::with_val(wp, nf.square_ref());
    let coef = Float::with_val(wp, &n2 / 2u32) + Float::with_val(wp, &nf / 2u32) + Float::with_val(wp, 1) / 12u32;
    let mut ln_a = ln_h - coef * &ln_n + Float::with_val(wp, &n2 / 4u32);
    let jmax = (digits / 1.5).ceil() as usize + 10;
    let bern = bernoulli_floats(2 * jmax, wp);
    let tol = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    let mut converged = false;
    let n_inv2 = Float::with_val(wp, n2.recip_ref());
    let mut pw = Float::with_val(wp, 1); // n^{2-2j}
    for j in 2..=jmax {
        pw *= &n_inv2;
        let d = ((2 * j) * (2 * j - 1) * (2 * j - 2)) as u32;
        let t = Float::with_val(wp, &bern[2 * j] / d) * &pw;
        let small = Float::with_val(wp, t.abs_ref()) < tol;
        ln_a += t;
        if small {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Precision("precision insufficient: Glaisher series did not converge".into()));
    }
    Ok(Float::with_val(prec, Float::with_val(wp, 1) / 12u32 - ln_a))
}

/// ζ'(-1) by the functional-equation route, certified against the
/// Glaisher route at `10^{-(digits-4)}`.
pub fn zeta_deriv_minus1(prec: u32) -> Result<Float> {
    let a = zeta_deriv_minus1_functional(prec)?;
    let b = zeta_deriv_minus1_glaisher(prec)?;
    let digits = prec as f64 / mp::LOG2_10;
    let diff = Float::with_val(prec, &a - &b).abs().to_f64();
    if diff > 10f64.powf(-(digits - 4.0)) {
        return Err(Error::Numerical(format!("ζ'(-1) routes disagree by {diff:e}")));
    }
    Ok(a)
}

/// Round-to-nearest integer of a float as i64.
pub fn round_i64(x: &Float) -> i64 {
    let mut r = x.clone();
    r.round_mut();
    r.to_f64_round(Round::Nearest) as i64
}

/// Integer power of a complex number.
pub fn cpow(z: &Complex, k: u32) -> Complex {
    Complex::with_val(z.prec().0, z.pow(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 220; // ~64 digits

    fn tau_i() -> Modulus {
        Modulus::from_f64(P, 0.0, 1.0).unwrap()
    }
    fn tau_b() -> Modulus {
        Modulus::from_f64(P, 0.3, 1.2).unwrap()
    }
    fn h() -> Float {
        Float::with_val(P, 0.5)
    }

    #[test]
    fn invalid_modulus() {
        assert!(Modulus::from_f64(P, 0.0, 0.0).is_err());
        assert!(Modulus::from_f64(P, 1.0, -1.0).is_err());
    }

    #[test]
    fn theta1_odd_zero() {
        for m in [tau_i(), tau_b()] {
            let t = theta(&h(), &h(), &m.tau, &mp::czero(P), P).unwrap();
            assert!(mp::cabs(&t) < 1e-60);
        }
    }

    #[test]
    fn theta_shift_identities() {
        for m in [tau_i(), tau_b()] {
            let pi = mp::pi(P);
            let z = mp::cx(P, 0.13, 0.21);
            for p in 1..=6u32 {
                let c = Complex::with_val(P, Complex::with_val(P, 1 + &m.tau) * p) / 2u32;
                let lhs = theta(&h(), &h(), &m.tau, &Complex::with_val(P, &z + &c), P).unwrap()
                    * (mp::i_times(P, &pi) * Complex::with_val(P, &z * p)).exp();
                let ap1 = Float::with_val(P, p + 1) / 2u32;
                let am1 = Float::with_val(P, p as i32 - 1) / 2u32;
                let sign = if (p * (p + 1) / 2) % 2 == 0 { 1 } else { -1 };
                let ph = (mp::i_times(P, &pi) * Complex::with_val(P, &m.tau * -((p * p) as i32)) / 4u32).exp();
                let tp1 = theta(&ap1, &ap1, &m.tau, &z, P).unwrap();
                let rhs = Complex::with_val(P, &ph * &tp1) * sign;
                assert!(rel_diff(&lhs, &rhs) < 1e-55, "p={p}");
                let tm1 = theta(&am1, &am1, &m.tau, &z, P).unwrap();
                let s2 = if (p - 1) % 2 == 0 { 1 } else { -1 };
                assert!(rel_diff(&tp1, &Complex::with_val(P, tm1 * s2)) < 1e-55);
            }
        }
    }

    #[test]
    fn theta_quasiperiodicity_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = Float::with_val(P, rng.random_range(-1.0..1.0));
            let b = Float::with_val(P, rng.random_range(-1.0..1.0));
            let tau = mp::cx(P, rng.random_range(-0.5..0.5), rng.random_range(0.6..2.0));
            let z = mp::cx(P, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert!(theta_quasiperiod_residual(&a, &b, &tau, &z, P).unwrap() < 1e-50);
        }
    }

    #[test]
    fn eta1_at_i_is_half_pi() {
        let e = Elliptic::new(&tau_i(), P).unwrap();
        let half_pi = Complex::with_val(P, mp::pi(P) / 2u32);
        assert!(rel_diff(&e.eta1, &half_pi) < 1e-60);
        assert!(rel_diff(&e.eta1_eisenstein(), &half_pi) < 1e-60);
    }

    #[test]
    fn legendre_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = Modulus::from_f64(P, rng.random_range(-0.5..0.5), rng.random_range(0.8..2.0)).unwrap();
            let e = Elliptic::new(&m, P).unwrap();
            assert!(e.legendre_residual().unwrap() < 1e-60);
        }
    }

    #[test]
    fn sigma_relations() {
        for m in [tau_i(), tau_b()] {
            let e = Elliptic::new(&m, P).unwrap();
            for z in [mp::cx(P, 0.17, -0.4), mp::cx(P, 0.31, 0.22), mp::czero(P)] {
                assert!(e.sigma_quasiperiod_residual(&z) < 1e-12);
            }
            let z = mp::cx(P, 1e-3, 2e-3);
            let s = e.weier_sigma(&z);
            let d = mp::cabs(&Complex::with_val(P, &s - &z)).to_f64();
            assert!(d < 1e-8 && d > 0.0);
            assert!(e.sigma_bridge_residual(&mp::cx(P, 0.05, 0.02)) < 1e-20);
        }
    }

    #[test]
    fn p_laurent_behaviour() {
        let e = Elliptic::new(&tau_b(), P).unwrap();
        let z = mp::cx(P, 6e-4, 8e-4); // |z| = 1e-3
        let pz = e.weier_p(&z, 0).unwrap();
        let inv2 = Complex::with_val(P, z.square_ref()).recip();
        let rem = mp::cabs(&Complex::with_val(P, &pz - &inv2)).to_f64();
        // ℘ - z^-2 = (g2/20) z² + …; g2 from the lattice sum is O(10^2)
        assert!(rem < 1e-3, "{rem}");
        let mut fact = 1.0;
        for k in 1..=5u32 {
            fact *= (k + 1) as f64;
            let pk = e.weier_p(&z, k as usize).unwrap();
            let scaled = pk * cpow(&z, 2 + k);
            let expect = if k % 2 == 0 { fact } else { -fact };
            assert!((scaled.real().to_f64() - expect).abs() < 1e-4 * fact, "k={k}");
        }
    }

    #[test]
    fn p_is_even_and_minus_zeta_prime() {
        let e = Elliptic::new(&tau_b(), P).unwrap();
        let z = mp::cx(P, 0.23, 0.37);
        let mz = Complex::with_val(P, -&z);
        assert!(rel_diff(&e.weier_p(&z, 0).unwrap(), &e.weier_p(&mz, 0).unwrap()) < 1e-55);
        // 6th-order central difference of ζ
        let hstep = 1e-4;
        let c = [1.0 / 60.0, -3.0 / 20.0, 3.0 / 4.0];
        let mut d = Complex::new(P);
        for (j, cj) in c.iter().enumerate() {
            let off = (3 - j) as f64 * hstep;
            let zp = e.weier_zeta(&Complex::with_val(P, &z + off)).unwrap();
            let zm = e.weier_zeta(&Complex::with_val(P, &z - off)).unwrap();
            d += (zp - zm) * *cj;
        }
        d /= hstep;
        let pz = e.weier_p(&z, 0).unwrap();
        assert!(rel_diff(&Complex::with_val(P, -d), &pz) < 1e-8 * mp::cabs(&pz).to_f64().max(1.0));
    }

    #[test]
    fn p_against_lattice_sum() {
        let e = Elliptic::new(&tau_b(), 120).unwrap();
        let f = EllipticF64::from(&e);
        let z = Complex64::new(0.21, 0.33);
        let lat = weier_p_lattice_sum(f.tau, z, 60);
        let th = e.weier_p(&mp::cx(120, z.re, z.im), 0).unwrap();
        let th = Complex64::new(th.real().to_f64(), th.imag().to_f64());
        assert!((lat - th).norm() < 1e-3 * th.norm().max(1.0), "{lat} vs {th}");
    }

    #[test]
    fn f64_sigma_matches() {
        let e = Elliptic::new(&tau_b(), 120).unwrap();
        let f = EllipticF64::from(&e);
        let z = Complex64::new(0.4, -0.3);
        let s = e.weier_sigma(&mp::cx(120, z.re, z.im));
        let s64 = f.sigma(z);
        assert!((Complex64::new(s.real().to_f64(), s.imag().to_f64()) - s64).norm() < 1e-12);
    }

    #[test]
    fn lattice_point_rejected() {
        let e = Elliptic::new(&tau_i(), P).unwrap();
        assert!(e.weier_p(&mp::cx(P, 1.0, 1.0), 0).is_err());
        assert!(e.weier_zeta(&mp::czero(P)).is_err());
    }

    #[test]
    fn riemann_values() {
        let (z2, _) = riemann_zeta_em(&Float::with_val(P, 2), P).unwrap();
        let pi2_6 = Float::with_val(P, mp::pi(P).square()) / 6u32;
        assert!(Float::with_val(P, &z2 - &pi2_6).abs().to_f64() < 1e-60);
        let (z0, _) = riemann_zeta_em(&Float::with_val(P, 0), P).unwrap();
        assert!(Float::with_val(P, &z0 + 0.5).abs().to_f64() < 1e-60);
        let (zm1, dzm1) = riemann_zeta_em(&Float::with_val(P, -1), P).unwrap();
        assert!(Float::with_val(P, zm1 + Float::with_val(P, 1) / 12u32).abs().to_f64() < 1e-60);
        // MPFR's own zeta as an outside oracle at s = 3.5
        let s = Float::with_val(P, 3.5);
        let (z35, _) = riemann_zeta_em(&s, P).unwrap();
        let mpfr = Float::with_val(P, s.zeta_ref());
        assert!(Float::with_val(P, &z35 - &mpfr).abs().to_f64() < 1e-60);
        // direct route for ζ'(-1) against the functional-equation route
        let f = zeta_deriv_minus1_functional(P).unwrap();
        assert!(Float::with_val(P, &dzm1 - &f).abs().to_f64() < 1e-60);
    }

    #[test]
    fn zeta_prime_minus_one() {
        let v = zeta_deriv_minus1(P).unwrap();
        assert!((v.to_f64() + 0.1654211437004509).abs() < 1e-15);
        let g = zeta_deriv_minus1_glaisher(P).unwrap();
        assert!(Float::with_val(P, &v - &g).abs().to_f64() < 1e-60);
    }

    #[test]
    fn pole_rejected() {
        assert!(riemann_zeta_em(&Float::with_val(P, 1), P).is_err());
    }
}
