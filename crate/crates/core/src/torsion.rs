//! Zeta-regularised spectral quantities.
//!
//! `□` on functions is half the Laplace–Beltrami operator of the area-one
//! metric, so the round sphere has eigenvalues `2π ℓ(ℓ+1)` (multiplicity
//! `2ℓ+1`), the flat torus `2π² |n + mτ|² / Im τ`, and `L^p` on the flat
//! torus has Landau levels `2πp·k` with multiplicity `p`.
//!
//! The torsion is `τ = ½ ζ'(0)`; [`TorsionValue::value`] stores τ.

use nalgebra::{DMatrix, SymmetricEigen};
use rug::ops::Pow;
use rug::{Complex, Float, Rational};
use serde::Serialize;

use crate::geometry::{gauss_legendre, Surface, SurfaceScenario};
use crate::linalg::{weighted_least_squares, RMat};
use crate::mp;
use crate::special_functions::{riemann_zeta_em, zeta_deriv_minus1, Modulus};
use crate::{Error, Result};

const GUARD: u32 = 32;

#[derive(Clone, Debug, Serialize)]
pub struct TorsionValue {
    /// τ = ½ ζ'(0).
    pub value: f64,
    pub method: String,
    pub error: f64,
    /// The value at full working precision.
    #[serde(skip)]
    pub exact: Option<Float>,
}

impl TorsionValue {
    pub fn two_tau(&self) -> f64 {
        2.0 * self.value
    }
}

/// Dedekind η(τ) = q^{1/24} Π (1 - qⁿ), `q = e^{2πiτ}`.
pub fn dedekind_eta(tau: &Complex, prec: u32) -> Complex {
    let wp = prec + GUARD;
    let pi = mp::pi(wp);
    let itau = Complex::with_val(wp, tau * Complex::with_val(wp, (0, 1)));
    let q = Complex::with_val(wp, &itau * Float::with_val(wp, &pi * 2u32)).exp();
    let mut prod = Complex::with_val(wp, 1);
    let mut qn = q.clone();
    let eps = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    loop {
        prod *= Complex::with_val(wp, 1 - &qn);
        if mp::cabs(&qn) < eps {
            break;
        }
        qn *= &q;
    }
    let pre = Complex::with_val(wp, &itau * Float::with_val(wp, &pi / 12u32)).exp();
    Complex::with_val(prec, pre * prod)
}

/// η through Euler's pentagonal series, an independent check of the product.
pub fn dedekind_eta_pentagonal(tau: &Complex, prec: u32) -> Complex {
    let wp = prec + GUARD;
    let pi = mp::pi(wp);
    let itau = Complex::with_val(wp, tau * Complex::with_val(wp, (0, 1)));
    let two_pi_itau = Complex::with_val(wp, &itau * Float::with_val(wp, &pi * 2u32));
    let eps = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    let mut s = Complex::with_val(wp, 1);
    let mut k: i64 = 1;
    loop {
        let mut small = true;
        for kk in [k, -k] {
            let e = kk * (3 * kk - 1) / 2;
            let t = Complex::with_val(wp, &two_pi_itau * e).exp();
            if mp::cabs(&t) > eps {
                small = false;
            }
            if k % 2 == 1 {
                s -= t;
            } else {
                s += t;
            }
        }
        if small {
            break;
        }
        k += 1;
    }
    let pre = Complex::with_val(wp, &itau * Float::with_val(wp, &pi / 12u32)).exp();
    Complex::with_val(prec, pre * s)
}

/// `E1(x) = ∫_x^∞ e^{-t}/t dt` for x > 0.
pub fn exp_integral_e1(x: &Float) -> Float {
    let m = Float::with_val(x.prec(), -x);
    -m.eint()
}

// ---------------------------------------------------------------------------
// spectral models

#[derive(Clone, Debug)]
pub enum SpectrumKind {
    /// `n²`, `n ≥ 1`.
    Squares,
    /// `k`, `k ≥ 1`, each with multiplicity `mult`.
    Linear { mult: u64 },
    /// `ℓ(ℓ+1)`, `ℓ ≥ 1`, multiplicity `2ℓ+1`.
    Sphere,
    /// `|n + mτ|² / Im τ`, `(m,n) ≠ 0`: the unimodular form of the lattice.
    FlatTorus { tau: Complex },
}

/// A positive spectrum `scale · base_k` with the small-time heat structure of
/// its base sequence.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    pub kind: SpectrumKind,
    pub scale: Float,
    pub label: String,
}

/// One term `coef · t^{num/den}` of a heat-trace expansion.
#[derive(Clone, Debug)]
pub struct HeatTerm {
    pub num: i32,
    pub den: i32,
    pub coef: Float,
}

impl SpectralModel {
    pub fn new(kind: SpectrumKind, scale: Float, label: &str) -> Self {
        SpectralModel { kind, scale, label: label.to_string() }
    }

    pub fn scaled(&self, lambda: &Float) -> Self {
        let s = Float::with_val(self.scale.prec(), &self.scale * lambda);
        SpectralModel { kind: self.kind.clone(), scale: s, label: format!("{} × {}", self.label, lambda.to_f64()) }
    }

    /// Round sphere, area one.
    pub fn sphere(prec: u32) -> Self {
        Self::new(SpectrumKind::Sphere, Float::with_val(prec, mp::pi(prec) * 2u32), "round sphere")
    }

    /// Flat torus of area one.
    pub fn flat_torus(tau: &Complex, prec: u32) -> Self {
        let pi = mp::pi(prec);
        Self::new(SpectrumKind::FlatTorus { tau: tau.clone() }, Float::with_val(prec, pi.square_ref()) * 2u32, "flat torus")
    }

    /// Landau levels of `L^p` on a flat torus of the given area.
    pub fn landau(p: u64, area: &Float) -> Self {
        let prec = area.prec();
        let b = Float::with_val(prec, mp::pi(prec) * 2u32) * p / area;
        Self::new(SpectrumKind::Linear { mult: p }, b, "Landau levels")
    }

    fn prec(&self) -> u32 {
        self.scale.prec()
    }

    /// Smallest eigenvalue.
    pub fn lambda_min(&self) -> Float {
        let prec = self.prec();
        let base = match &self.kind {
            SpectrumKind::Squares | SpectrumKind::Linear { .. } => Float::with_val(prec, 1),
            SpectrumKind::Sphere => Float::with_val(prec, 2),
            SpectrumKind::FlatTorus { tau } => {
                let mut best = f64::INFINITY;
                let t = Modulus::new(tau.clone()).map(|m| m.to_c64()).unwrap_or_default();
                for m in -3i64..=3 {
                    for n in -3i64..=3 {
                        if m == 0 && n == 0 {
                            continue;
                        }
                        let v = (num_complex::Complex64::new(n as f64, 0.0) + t * m as f64).norm_sqr() / t.im;
                        best = best.min(v);
                    }
                }
                Float::with_val(prec, best)
            }
        };
        base * &self.scale
    }

    /// Eigenvalue/multiplicity pairs with `λ ≤ lambda_max`.
    pub fn eigenvalues(&self, lambda_max: f64) -> Vec<(Float, u64)> {
        let prec = self.prec();
        let s = self.scale.to_f64();
        let bmax = lambda_max / s;
        let mut out = Vec::new();
        match &self.kind {
            SpectrumKind::Squares => {
                let mut n = 1u64;
                while (n * n) as f64 <= bmax {
                    out.push((Float::with_val(prec, n * n) * &self.scale, 1));
                    n += 1;
                }
            }
            SpectrumKind::Linear { mult } => {
                let mut k = 1u64;
                while k as f64 <= bmax {
                    out.push((Float::with_val(prec, k) * &self.scale, *mult));
                    k += 1;
                }
            }
            SpectrumKind::Sphere => {
                let mut l = 1u64;
                while (l * (l + 1)) as f64 <= bmax {
                    out.push((Float::with_val(prec, l * (l + 1)) * &self.scale, 2 * l + 1));
                    l += 1;
                }
            }
            SpectrumKind::FlatTorus { tau } => {
                let t = Complex::with_val(prec, tau);
                let im = Float::with_val(prec, t.imag());
                let re = Float::with_val(prec, t.real());
                let imf = im.to_f64();
                let mmax = (bmax / imf).sqrt().floor() as i64 + 1;
                for m in -mmax..=mmax {
                    let c = m as f64 * re.to_f64();
                    let rad2 = bmax * imf - (m as f64 * imf).powi(2);
                    if rad2 < 0.0 {
                        continue;
                    }
                    let r = rad2.sqrt();
                    let (n_lo, n_hi) = ((-c - r).floor() as i64 - 1, (-c + r).ceil() as i64 + 1);
                    for n in n_lo..=n_hi {
                        if m == 0 && n == 0 {
                            continue;
                        }
                        let x = Float::with_val(prec, &re * m) + n;
                        let y = Float::with_val(prec, &im * m);
                        let q = (Float::with_val(prec, x.square_ref()) + Float::with_val(prec, y.square_ref())) / &im;
                        if q.to_f64() <= bmax {
                            out.push((q * &self.scale, 1));
                        }
                    }
                }
            }
        }
        out
    }

    /// Small-time expansion `Θ(t) ~ Σ coef t^{num/den}` of `Σ e^{-tλ}` (zero
    /// modes excluded), truncated after `order` integer powers.
    pub fn heat_asymptotics(&self, order: usize) -> Vec<HeatTerm> {
        let prec = self.prec();
        let s = &self.scale;
        let term = |num: i32, den: i32, c: Float| HeatTerm { num, den, coef: c };
        // coefficient of t^{a} in Θ_base(s t): c · s^{a}
        let sp = |a: i32| -> Float { Float::with_val(prec, s.pow(a)) };
        match &self.kind {
            SpectrumKind::Squares => {
                let pi = mp::pi(prec);
                let c = Float::with_val(prec, pi / s).sqrt() / 2u32;
                vec![term(-1, 2, c), term(0, 1, Float::with_val(prec, -0.5))]
            }
            SpectrumKind::Linear { mult } => {
                // mult/(e^x - 1) = mult Σ B_n x^{n-1}/n!
                let b = mp::bernoulli(order + 1);
                let mut out = Vec::new();
                let mut fact = Rational::from(1);
                for (n, bn) in b.iter().enumerate() {
                    if n > 0 {
                        fact *= n as u64;
                    }
                    if *bn == 0 {
                        continue;
                    }
                    let c = Float::with_val(prec, &Rational::from(bn / &fact)) * *mult;
                    out.push(term(n as i32 - 1, 1, c * sp(n as i32 - 1)));
                }
                out
            }
            SpectrumKind::Sphere => {
                let coefs = sphere_heat_coefficients(order);
                let mut out = vec![term(-1, 1, sp(-1))];
                for (n, c) in coefs.iter().enumerate() {
                    let mut c = c.clone();
                    if n == 0 {
                        c -= 1; // ℓ = 0 zero mode
                    }
                    if c != 0 {
                        out.push(term(n as i32, 1, Float::with_val(prec, &c) * sp(n as i32)));
                    }
                }
                out
            }
            SpectrumKind::FlatTorus { .. } => {
                let pi = mp::pi(prec);
                vec![term(-1, 1, Float::with_val(prec, pi / s)), term(0, 1, Float::with_val(prec, -1))]
            }
        }
    }

    /// ζ(0), read off the `t⁰` heat coefficient.
    pub fn zeta_at_zero(&self) -> Float {
        self.heat_asymptotics(16)
            .into_iter()
            .find(|h| h.num == 0)
            .map(|h| h.coef)
            .unwrap_or_else(|| Float::new(self.prec()))
    }

    /// `Θ(t) = Σ mult e^{-tλ}`.
    pub fn heat_trace(&self, t: &Float) -> Float {
        let prec = self.prec();
        if let SpectrumKind::Linear { mult } = &self.kind {
            let x = Float::with_val(prec, t * &self.scale);
            return Float::with_val(prec, x.exp_m1().recip()) * *mult;
        }
        let digits = prec as f64 / mp::LOG2_10;
        let lmax = (digits * std::f64::consts::LN_10 + 40.0) / t.to_f64();
        let ev = self.eigenvalues(lmax);
        let terms: Vec<Float> = ev.iter().map(|(l, m)| ((-Float::with_val(prec, l * t)).exp()) * *m).collect();
        mp::pairwise_sum(&terms, prec)
    }

    /// `∫_T^∞ Θ(t) dt/t = Σ mult E1(λT)`.
    fn tail(&self, big_t: &Float) -> Float {
        let prec = self.prec();
        let digits = prec as f64 / mp::LOG2_10;
        let lmax = (digits * std::f64::consts::LN_10 + 40.0) / big_t.to_f64();
        let ev = self.eigenvalues(lmax);
        let terms: Vec<Float> = ev.iter().map(|(l, m)| exp_integral_e1(&Float::with_val(prec, l * big_t)) * *m).collect();
        mp::pairwise_sum(&terms, prec)
    }

    /// Whether `Θ(t) - A(t)` is below working precision: for the Gaussian
    /// spectra the remainder is `O(e^{-c/t})` by Poisson summation (the dual
    /// lattice of a unimodular binary form has minimum at least √3/2).
    fn remainder_negligible(&self, t: &Float) -> bool {
        let digits = self.prec() as f64 / mp::LOG2_10;
        let st = (Float::with_val(self.prec(), t * &self.scale)).to_f64();
        let pi2 = std::f64::consts::PI.powi(2);
        let c = match self.kind {
            SpectrumKind::Squares => pi2,
            SpectrumKind::FlatTorus { .. } => pi2 * 3f64.sqrt() / 2.0,
            _ => return false,
        };
        c / st > digits * std::f64::consts::LN_10 + 20.0 - st.ln().min(0.0)
    }

    /// ζ'(0) through the Mellin split at T with `nodes` Gauss points on [0, T].
    fn mellin_at(&self, big_t: &Float, nodes: usize, order: usize) -> Float {
        let prec = self.prec();
        let asym = self.heat_asymptotics(order);
        let gamma = mp::euler_gamma(prec);
        let mut v = Float::new(prec);
        for h in &asym {
            if h.num == 0 {
                v += Float::with_val(prec, &h.coef * (gamma.clone() + Float::with_val(prec, big_t.ln_ref())));
            } else {
                let a = Float::with_val(prec, h.num) / h.den;
                let tp = Float::with_val(prec, big_t.pow(&a));
                v += Float::with_val(prec, &h.coef * tp) / a;
            }
        }
        let (x, w) = gauss_legendre(nodes, prec);
        let half_t = Float::with_val(prec, big_t / 2u32);
        let mut vals = Vec::with_capacity(nodes);
        for (xi, wi) in x.iter().zip(w.iter()) {
            let t = Float::with_val(prec, 1 + xi) * &half_t;
            if self.remainder_negligible(&t) {
                continue;
            }
            let mut a = Float::new(prec);
            for h in &asym {
                let e = Float::with_val(prec, h.num) / h.den;
                a += Float::with_val(prec, &h.coef * Float::with_val(prec, (&t).pow(&e)));
            }
            let f = (self.heat_trace(&t) - a) / &t;
            vals.push(f * wi);
        }
        v += mp::pairwise_sum(&vals, prec) * &half_t;
        v + self.tail(big_t)
    }
}

/// Exact Taylor coefficients of `Σ_{ℓ≥0} (2ℓ+1) e^{-tℓ(ℓ+1)} - 1/t`, from the
/// midpoint Euler–Maclaurin expansion of `Σ 2x e^{-tx²}` at `x = ℓ + ½`
/// multiplied by `e^{t/4}`.
pub fn sphere_heat_coefficients(order: usize) -> Vec<Rational> {
    let b = mp::bernoulli(2 * order + 4);
    // g_k for k = 1..=order+1: coefficient of t^{k-1}
    let mut g = vec![Rational::new(); order + 2];
    let mut fact = Rational::from(1); // (k-1)!
    for k in 1..=order + 1 {
        if k > 1 {
            fact *= (k - 1) as u64;
        }
        let pow = Rational::from((1, 1u64 << (2 * k - 1)));
        let mut c = (Rational::from(1) - pow) * &b[2 * k];
        c /= Rational::from(k as u64) * &fact;
        if k % 2 == 0 {
            c = -c;
        }
        g[k] = c;
    }
    // e^{t/4} = Σ (1/4)^j t^j / j!
    let e = |j: usize| -> Rational {
        let mut r = Rational::from(1);
        for i in 1..=j {
            r /= 4 * i as u64;
        }
        r
    };
    (0..=order)
        .map(|n| {
            let mut c = e(n + 1);
            for k in 1..=n + 1 {
                c += Rational::from(&g[k] * &e(n + 1 - k));
            }
            c
        })
        .collect()
}

/// ζ'(0) of a model through the Mellin split, with the error estimated from
/// the change under a second split point.
pub fn zeta_prime_at_zero(m: &SpectralModel, prec: u32) -> Result<(Float, f64)> {
    let wp = prec + GUARD;
    let model = SpectralModel { scale: Float::with_val(wp, &m.scale), ..m.clone() };
    if let SpectrumKind::FlatTorus { tau } = &m.kind {
        Modulus::new(tau.clone())?;
    }
    if m.scale <= 0 {
        return Err(Error::Domain("spectral scale must be positive".into()));
    }
    let lmin = model.lambda_min();
    let (order, nodes) = match model.kind {
        SpectrumKind::Sphere | SpectrumKind::Linear { .. } => (14usize, 96usize),
        _ => (0, 64),
    };
    // split points on the scale of the first eigenvalue
    let t1 = Float::with_val(wp, 0.5) / &lmin;
    let t2 = Float::with_val(wp, 0.3) / &lmin;
    let a = model.mellin_at(&t1, nodes, order);
    let b = model.mellin_at(&t2, nodes, order);
    let err = Float::with_val(wp, &a - &b).abs().to_f64();
    Ok((Float::with_val(prec, a), err))
}

/// `t Θ(t)` at small t, including zero modes; tends to `area/2π` (times rank).
pub fn heat_trace_area_check(m: &SpectralModel, t: f64, zero_modes: u64) -> f64 {
    let prec = m.prec();
    let tt = Float::with_val(prec, t);
    let th = m.heat_trace(&tt) + zero_modes;
    (th * t).to_f64()
}

// ---------------------------------------------------------------------------
// torsion values

/// Sphere closed form: `2τ = 4ζ'(-1) - ½ + (2/3) log 2π` for the area-one
/// round sphere (`det' Δ_{S²} = e^{½ - 4ζ'(-1)}` on the unit sphere, rescaled
/// with `ζ(0) = -2/3`).
pub fn sphere_two_tau_closed(prec: u32) -> Result<Float> {
    let wp = prec + GUARD;
    let zp = zeta_deriv_minus1(wp)?;
    let ln2pi = Float::with_val(wp, mp::pi(wp) * 2u32).ln();
    let v = zp * 4u32 - Float::with_val(wp, 0.5) + ln2pi * 2u32 / 3u32;
    Ok(Float::with_val(prec, v))
}

/// Sphere through the Hurwitz expansion of `Σ (2ℓ+1)((ℓ+½)² - ¼)^{-s}`:
/// `f'(0) = 4H'(-1) - ψ(3/2)/2 + Σ_{j≥2} (2/j) 4^{-j} H(2j-1)`, `H(w) = ζ(w, 3/2)`.
pub fn sphere_two_tau_hurwitz(prec: u32) -> Result<Float> {
    let wp = prec + GUARD;
    let ln2 = Float::with_val(wp, rug::float::Constant::Log2);
    let gamma = mp::euler_gamma(wp);
    // H(w) = (2^w - 1) ζ(w) - 2^w, H'(w) = 2^w ln2 ζ(w) + (2^w - 1) ζ'(w) - 2^w ln2
    let (zm1, dzm1) = riemann_zeta_em(&Float::with_val(wp, -1), wp)?;
    let half = Float::with_val(wp, 0.5);
    let dh = Float::with_val(wp, &half * &ln2) * &zm1 - Float::with_val(wp, &half * &dzm1) - Float::with_val(wp, &half * &ln2);
    let psi32 = Float::with_val(wp, 2) - &gamma - Float::with_val(wp, &ln2 * 2u32);
    let mut f1 = dh * 4u32 - psi32 / 2u32;
    let eps = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
    for j in 2..4000u32 {
        let w = Float::with_val(wp, 2 * j - 1);
        let z = w.clone().zeta();
        let two_w = Float::with_val(wp, Float::i_exp(1, (2 * j - 1) as i32));
        let h = Float::with_val(wp, &two_w - 1u32) * z - two_w;
        let t = h * 2u32 / j / Float::with_val(wp, Float::i_exp(1, 2 * j as i32));
        let small = Float::with_val(wp, t.abs_ref()) < eps;
        f1 += t;
        if small {
            break;
        }
    }
    // rescale by 2π with f(0) = -2/3
    let ln2pi = Float::with_val(wp, mp::pi(wp) * 2u32).ln();
    Ok(Float::with_val(prec, f1 + ln2pi * 2u32 / 3u32))
}

/// Torus through the Kronecker limit formula: `2τ = -log(2 Im τ |η(τ)|⁴)`.
pub fn torus_two_tau_kronecker(tau: &Complex, prec: u32) -> Result<Float> {
    let m = Modulus::new(tau.clone())?;
    let wp = prec + GUARD;
    let eta = dedekind_eta(&m.tau, wp);
    let e4 = Float::with_val(wp, mp::abs2(&eta).square_ref());
    let v = -(Float::with_val(wp, m.im() * 2u32) * e4).ln();
    Ok(Float::with_val(prec, v))
}

/// `τ(ω^X, h^E)` for trivial E on an unperturbed scenario, by two routes.
pub fn torsion_trivial_e(s: &SurfaceScenario) -> Result<TorsionValue> {
    if !s.prequantized {
        return Err(Error::Unsupported("torsion is only available for the unperturbed metrics".into()));
    }
    let prec = s.prec.max(128);
    match s.surface {
        Surface::Sphere => {
            let a = sphere_two_tau_closed(prec)?;
            let b = sphere_two_tau_hurwitz(prec)?;
            let (c, cerr) = zeta_prime_at_zero(&SpectralModel::sphere(prec), prec)?;
            let dab = Float::with_val(prec, &a - &b).abs().to_f64();
            let dac = Float::with_val(prec, &a - &c).abs().to_f64();
            if dab > 1e-25 || dac > 1e-8f64.max(10.0 * cerr) {
                return Err(Error::Numerical(format!("sphere torsion routes disagree ({dab:e}, {dac:e})")));
            }
            Ok(TorsionValue {
                value: (a.clone() / 2u32).to_f64(),
                method: "closed form; hurwitz series; mellin spectrum".into(),
                error: dab.max(dac) / 2.0,
                exact: Some(a / 2u32),
            })
        }
        Surface::Torus => {
            let a = torus_two_tau_kronecker(s.tau(), prec)?;
            let (b, berr) = zeta_prime_at_zero(&SpectralModel::flat_torus(s.tau(), prec), prec)?;
            let d = Float::with_val(prec, &a - &b).abs().to_f64();
            if d > 1e-8f64.max(10.0 * berr) {
                return Err(Error::Numerical(format!("torus torsion routes disagree by {d:e}")));
            }
            Ok(TorsionValue { value: (a.clone() / 2u32).to_f64(), method: "kronecker limit; mellin spectrum".into(), error: d / 2.0, exact: Some(a / 2u32) })
        }
    }
}

/// `τ_p` of `L^p` on a flat torus of the given area: Landau levels
/// `2πp k/area`, multiplicity p, `2τ_p = p(ζ_R'(0) - ζ_R(0) log B)`.
pub fn torsion_lp_flat_torus(tau: &Complex, p: u64, area: f64, prec: u32) -> Result<TorsionValue> {
    Modulus::new(tau.clone())?;
    if p == 0 {
        return Err(Error::Domain("p must be at least 1".into()));
    }
    if !(area > 0.0) {
        return Err(Error::Config("area must be positive".into()));
    }
    let wp = prec + GUARD;
    let area_f = mp::from_f64_decimal(wp, area);
    let model = SpectralModel::landau(p, &area_f);
    let (z0, dz0) = riemann_zeta_em(&Float::new(wp), wp)?;
    let lnb = Float::with_val(wp, model.scale.ln_ref());
    let two_tau = (dz0 - z0 * lnb) * p;
    // cross-check against the generic Mellin route at moderate p
    let mut err = 0.0;
    if p <= 256 {
        let (m, merr) = zeta_prime_at_zero(&model, prec.min(160))?;
        err = Float::with_val(wp, &two_tau - &m).abs().to_f64();
        if err > 1e-9f64.max(10.0 * merr) * p as f64 {
            return Err(Error::Numerical(format!("Landau torsion routes disagree by {err:e}")));
        }
    }
    Ok(TorsionValue {
        value: (two_tau.clone() / 2u32).to_f64(),
        method: "landau levels; riemann zeta".into(),
        error: err / 2.0,
        exact: Some(Float::with_val(prec, two_tau / 2u32)),
    })
}

/// Numerical Landau levels: □ on `L^p` over the square flat torus reduces, in
/// the Landau gauge, to p shifted copies of `½(-∂² + (2πp)²y² - 2πp)`; each copy
/// is diagonalised in a Fourier basis on a periodic box. Returns the lowest
/// `levels` eigenvalue clusters with their multiplicities.
pub fn landau_levels_numeric(p: u64, levels: usize) -> Vec<(f64, usize)> {
    let omega = 2.0 * std::f64::consts::PI * p as f64;
    let box_len = 12.0 / omega.sqrt();
    let nmodes = 96i64;
    let dim = (2 * nmodes + 1) as usize;
    let pi = std::f64::consts::PI;
    let block = DMatrix::from_fn(dim, dim, |i, j| {
        let (m, n) = (i as i64 - nmodes, j as i64 - nmodes);
        let d = n - m;
        let x2 = if d == 0 {
            box_len * box_len / 12.0
        } else {
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            box_len * box_len * sign / (2.0 * pi * pi * (d * d) as f64)
        };
        let kin = if d == 0 { 0.5 * (2.0 * pi * m as f64 / box_len).powi(2) } else { 0.0 };
        kin + 0.5 * omega * omega * x2 - if d == 0 { 0.5 * omega } else { 0.0 }
    });
    // one block per residue class of the Fourier index mod p
    let mut all = Vec::new();
    for _class in 0..p {
        let e = SymmetricEigen::new(block.clone());
        all.extend(e.eigenvalues.iter().copied());
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, usize)> = Vec::new();
    let tol = 1e-6 * omega;
    for v in all {
        match out.last_mut() {
            Some((c, k)) if (v - *c).abs() < tol => {
                *k += 1;
            }
            _ => {
                if out.len() == levels {
                    break;
                }
                out.push((v, 1));
            }
        }
    }
    out
}

/// Fit report for `2τ_p ≈ c1 p log p + d1 p + c0 log p + d0`.
#[derive(Clone, Debug, Serialize)]
pub struct FinskiReport {
    pub c1: f64,
    pub d1: f64,
    pub c0: f64,
    pub d0: f64,
    pub residual: f64,
    pub pass: bool,
}

/// Fit the torsion expansion to exact `2τ_p` values on a flat torus.
pub fn finski_coeff_check(s: &SurfaceScenario, p_range: std::ops::RangeInclusive<u64>) -> Result<FinskiReport> {
    if !s.is_flat_prequantized() {
        return Err(Error::Unsupported("the torsion fit needs a flat prequantized torus".into()));
    }
    let prec = 192u32;
    let ps: Vec<u64> = p_range.collect();
    let mut x = RMat::zeros(ps.len(), 4, prec);
    let mut y = Vec::with_capacity(ps.len());
    for (i, &p) in ps.iter().enumerate() {
        let v = torsion_lp_flat_torus(s.tau(), p, 1.0, prec)?;
        let pf = Float::with_val(prec, p);
        let lp = Float::with_val(prec, pf.ln_ref());
        *x.at_mut(i, 0) = Float::with_val(prec, &pf * &lp);
        *x.at_mut(i, 1) = pf.clone();
        *x.at_mut(i, 2) = lp;
        *x.at_mut(i, 3) = Float::with_val(prec, 1);
        y.push(v.exact.unwrap() * 2u32);
    }
    let w = vec![Float::with_val(prec, 1); ps.len()];
    let sol = weighted_least_squares(&x, &y, &w)?;
    let c: Vec<f64> = sol.coef.iter().map(|f| f.to_f64()).collect();
    let pass = (c[0] - 0.5).abs() <= 1e-8 && c[1].abs() <= 1e-6 && c[2].abs() <= 1e-6 && c[3].abs() <= 1e-6;
    Ok(FinskiReport { c1: c[0], d1: c[1], c0: c[2], d0: c[3], residual: sol.residual.to_f64(), pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 128;

    #[test]
    fn e1_reference() {
        let v = exp_integral_e1(&Float::with_val(P, 1));
        assert!((v.to_f64() - 0.219_383_934_395_520_3).abs() < 1e-15);
    }

    #[test]
    fn eta_routes_and_value_at_i() {
        let tau = mp::cx(P, 0.0, 1.0);
        let a = dedekind_eta(&tau, P);
        let b = dedekind_eta_pentagonal(&tau, P);
        assert!(Float::with_val(P, mp::cabs(&Complex::with_val(P, &a - &b))).to_f64() < 1e-35);
        // η(i) = Γ(1/4) / (2 π^{3/4})
        let g = Float::with_val(P, 0.25).gamma();
        let pi = mp::pi(P);
        let expect = g / (Float::with_val(P, (&pi).pow(0.75)) * 2u32);
        assert!((Float::with_val(P, a.real()) - expect).abs().to_f64() < 1e-35);
        let t2 = mp::cx(P, 0.3, 1.2);
        let c = dedekind_eta(&t2, P);
        let d = dedekind_eta_pentagonal(&t2, P);
        assert!(Float::with_val(P, mp::cabs(&Complex::with_val(P, &c - &d))).to_f64() < 1e-35);
    }

    #[test]
    fn squares_calibration() {
        let m = SpectralModel::new(SpectrumKind::Squares, Float::with_val(P, 1), "n^2");
        let (v, err) = zeta_prime_at_zero(&m, P).unwrap();
        let expect = -Float::with_val(P, mp::pi(P) * 2u32).ln();
        assert!((v - expect).abs().to_f64() < 1e-12, "err {err}");
        assert_eq!(m.zeta_at_zero().to_f64(), -0.5);
    }

    #[test]
    fn scaling_law() {
        for model in [
            SpectralModel::new(SpectrumKind::Squares, Float::with_val(P, 1), "n^2"),
            SpectralModel::sphere(P),
            SpectralModel::flat_torus(&mp::cx(P, 0.3, 1.2), P),
            SpectralModel::landau(3, &Float::with_val(P, 1)),
        ] {
            let (base, _) = zeta_prime_at_zero(&model, P).unwrap();
            let z0 = model.zeta_at_zero();
            for lam in [2.0, 10.0, 1.0 / 3.0] {
                let l = Float::with_val(P, lam);
                let (v, _) = zeta_prime_at_zero(&model.scaled(&l), P).unwrap();
                let expect = Float::with_val(P, &base - Float::with_val(P, &z0 * l.ln()));
                assert!((v - expect).abs().to_f64() < 1e-10, "{}", model.label);
            }
        }
    }

    #[test]
    fn sphere_heat_series() {
        let c = sphere_heat_coefficients(3);
        assert_eq!(c[0], Rational::from((1, 3)));
        assert_eq!(c[1], Rational::from((1, 15)));
        assert_eq!(c[2], Rational::from((4, 315)));
    }

    #[test]
    fn sphere_routes_agree() {
        let a = sphere_two_tau_closed(P).unwrap();
        let b = sphere_two_tau_hurwitz(P).unwrap();
        assert!(Float::with_val(P, &a - &b).abs().to_f64() < 1e-30);
        let (c, _) = zeta_prime_at_zero(&SpectralModel::sphere(P), P).unwrap();
        assert!(Float::with_val(P, &a - &c).abs().to_f64() < 1e-10);
    }

    #[test]
    fn torus_routes_agree() {
        for (re, im) in [(0.0, 1.0), (0.3, 1.2), (0.5, 0.9)] {
            let tau = mp::cx(P, re, im);
            let a = torus_two_tau_kronecker(&tau, P).unwrap();
            let (b, _) = zeta_prime_at_zero(&SpectralModel::flat_torus(&tau, P), P).unwrap();
            assert!(Float::with_val(P, &a - &b).abs().to_f64() < 1e-10);
        }
        let a = torus_two_tau_kronecker(&mp::cx(P, 0.0, 1.0), P).unwrap();
        assert!((a.to_f64() - 0.361_541_1).abs() < 1e-7);
    }

    #[test]
    fn heat_trace_area() {
        // t Tr e^{-t□} → area / 2π
        let target = 1.0 / (2.0 * std::f64::consts::PI);
        let torus = SpectralModel::flat_torus(&mp::cx(P, 0.3, 1.2), P);
        assert!((heat_trace_area_check(&torus, 1e-3, 1) - target).abs() < 1e-3 * 1.1);
        let sphere = SpectralModel::sphere(P);
        let a = heat_trace_area_check(&sphere, 1e-3, 1);
        assert!((a - target).abs() < 1e-3, "{a}");
        let landau = SpectralModel::landau(4, &Float::with_val(P, 1));
        assert!((heat_trace_area_check(&landau, 1e-4, 4) - target).abs() < 1e-3);
    }

    #[test]
    fn landau_multiplicities() {
        for p in [2u64, 3] {
            let lv = landau_levels_numeric(p, 4);
            for (k, (e, mult)) in lv.iter().enumerate() {
                assert_eq!(*mult, p as usize);
                let expect = 2.0 * std::f64::consts::PI * p as f64 * k as f64;
                assert!((e - expect).abs() < 1e-6 * (1.0 + expect), "{e} vs {expect}");
            }
        }
    }

    #[test]
    fn landau_torsion() {
        let tau = mp::cx(P, 0.0, 1.0);
        for p in [1u64, 4, 64] {
            let v = torsion_lp_flat_torus(&tau, p, 1.0, P).unwrap();
            let expect = 0.5 * p as f64 * (p as f64).ln();
            assert!((v.two_tau() - expect).abs() < 1e-12);
        }
        assert!(torsion_lp_flat_torus(&tau, 0, 1.0, P).is_err());
    }
}
