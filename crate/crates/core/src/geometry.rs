//! Surfaces, metric data and quadrature.
//!
//! Sphere: coordinates `(u, φ)` with `u = (1 - |w|²)/(1 + |w|²)` in the chart
//! `w = y/x`; the divisor `D = [0:1]` sits at `u = -1`, `s_D = x`, and the
//! Fubini–Study form of area one is `ω0 = du dφ / 4π`.
//!
//! Torus: `z = s + t τ`, `(s, t) ∈ [0,1)²`, `D = [0]`, `ω0 = ds dt`.
//!
//! Perturbations are finite mode lists. The bundle weight ψ enters as
//! `h^L = h0 e^{-ψ}` and the conformal factor as `ω^X = e^u ω0 / N` with `N`
//! fixed by `∫ ω^X = 1`. Every density below is relative to `ω0`; the
//! `L²` measure is `dv = ω0 / 2π` weighted by `ω^X / ω0` where relevant.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rug::{Complex, Float};
use serde::{Deserialize, Serialize};

use crate::mp::{self, Consts};
use crate::special_functions::{Elliptic, EllipticF64, Modulus};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// configuration

/// One perturbation mode.
///
/// Sphere: `a = ℓ`, `b = m` with `|m| ≤ ℓ`; the mode is
/// `P_ℓ^{|m|}(u) cos(mφ)` for `m ≥ 0` and `P_ℓ^{|m|}(u) sin(|m|φ)` for `m < 0`
/// (unnormalised associated Legendre functions).
///
/// Torus: `a = m`, `b = n`; the mode is `cos(2π(ms + nt))` or, with `sin`,
/// `sin(2π(ms + nt))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub a: i32,
    pub b: i32,
    #[serde(default)]
    pub sin: bool,
    pub coef: f64,
}

/// Scenario part of the run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub genus: u8,
    #[serde(default)]
    pub tau_re: f64,
    #[serde(default = "one")]
    pub tau_im: f64,
    /// Bundle-weight perturbation ψ.
    #[serde(default)]
    pub psi: Vec<Mode>,
    /// Conformal perturbation u of the Kähler form.
    #[serde(default)]
    pub conformal: Vec<Mode>,
    /// Multiplier of the integrally normalised `s_0` (re, im).
    #[serde(default = "unit")]
    pub s0: [f64; 2],
    /// Multiplier of the frame element `s_D^L` at D.
    #[serde(default = "unit")]
    pub s_d_l: [f64; 2],
    /// Multiplier of the frame element `s_D^E` at D.
    #[serde(default = "unit")]
    pub s_d_e: [f64; 2],
}

fn one() -> f64 {
    1.0
}
fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig { genus: 0, tau_re: 0.0, tau_im: 1.0, psi: vec![], conformal: vec![], s0: unit(), s_d_l: unit(), s_d_e: unit() }
    }
}

impl ScenarioConfig {
    pub fn sphere() -> Self {
        Self::default()
    }
    pub fn torus(tau_re: f64, tau_im: f64) -> Self {
        ScenarioConfig { genus: 1, tau_re, tau_im, ..Self::default() }
    }
}

// ---------------------------------------------------------------------------
// scenario

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Sphere,
    Torus,
}

/// A surface point: sphere `(u, φ)` or torus `(s, t)`.
#[derive(Clone, Debug)]
pub struct Pt {
    pub a: Float,
    pub b: Float,
}

impl Pt {
    pub fn new(prec: u32, a: f64, b: f64) -> Pt {
        Pt { a: Float::with_val(prec, a), b: Float::with_val(prec, b) }
    }
}

/// A perturbation mode with its Laplace eigenvalue precomputed.
#[derive(Clone, Debug)]
struct ModeData {
    mode: Mode,
    coef: Float,
    /// `-Δ0` eigenvalue of the mode for the area-one background metric.
    eig: Float,
}

#[derive(Clone, Debug)]
pub struct SurfaceScenario {
    pub surface: Surface,
    pub config: ScenarioConfig,
    pub prec: u32,
    pub consts: Consts,
    pub modulus: Option<Modulus>,
    pub elliptic: Option<Arc<Elliptic>>,
    psi: Vec<ModeData>,
    conf: Vec<ModeData>,
    /// `log N`, `N = ∫ e^u ω0`.
    pub log_norm: Float,
    pub prequantized: bool,
    /// Smallest `c1(L)` density seen on the check grid.
    pub min_curvature: f64,
    pub s0: Complex,
    pub s_d_l: Complex,
    pub s_d_e: Complex,
}

fn cplx(prec: u32, v: [f64; 2]) -> Complex {
    Complex::with_val(prec, (mp::from_f64_decimal(prec, v[0]), mp::from_f64_decimal(prec, v[1])))
}

/// Build and validate a scenario at `prec` bits.
pub fn build_scenario(cfg: &ScenarioConfig, prec: u32) -> Result<SurfaceScenario> {
    let consts = Consts::new(prec);
    let surface = match cfg.genus {
        0 => Surface::Sphere,
        1 => Surface::Torus,
        g => return Err(Error::Config(format!("genus {g} is not supported (0 or 1)"))),
    };
    for (name, v) in [("s0", cfg.s0), ("s_d_l", cfg.s_d_l), ("s_d_e", cfg.s_d_e)] {
        if !(v[0].is_finite() && v[1].is_finite()) || (v[0] == 0.0 && v[1] == 0.0) {
            return Err(Error::Config(format!("{name} must be a finite nonzero complex number")));
        }
    }
    let (modulus, elliptic) = match surface {
        Surface::Sphere => (None, None),
        Surface::Torus => {
            if !(cfg.tau_im > 0.0) || !cfg.tau_re.is_finite() {
                return Err(Error::Config(format!("modulus must have Im τ > 0, got {} + {}i", cfg.tau_re, cfg.tau_im)));
            }
            let m = Modulus::from_f64(prec, cfg.tau_re, cfg.tau_im)?;
            let e = Elliptic::new(&m, prec)?;
            (Some(m), Some(Arc::new(e)))
        }
    };
    let mk = |modes: &[Mode]| -> Result<Vec<ModeData>> {
        modes
            .iter()
            .map(|md| {
                if !md.coef.is_finite() {
                    return Err(Error::Config("perturbation coefficient must be finite".into()));
                }
                let eig = match surface {
                    Surface::Sphere => {
                        if md.a < 0 || md.b.unsigned_abs() > md.a as u32 {
                            return Err(Error::Config(format!("sphere mode needs 0 ≤ |m| ≤ ℓ, got ({}, {})", md.a, md.b)));
                        }
                        if md.sin {
                            return Err(Error::Config("sphere modes encode sin(|m|φ) by negative m".into()));
                        }
                        // area-one round sphere: -Δ Y_ℓ = 4π ℓ(ℓ+1) Y_ℓ
                        Float::with_val(prec, &consts.pi * 4u32) * (md.a as u32 * (md.a as u32 + 1))
                    }
                    Surface::Torus => {
                        let tau = &modulus.as_ref().unwrap().tau;
                        torus_eig(&consts, tau, md.a, md.b)
                    }
                };
                Ok(ModeData { mode: md.clone(), coef: mp::from_f64_decimal(prec, md.coef), eig })
            })
            .collect()
    };
    let psi = mk(&cfg.psi)?;
    let conf = mk(&cfg.conformal)?;
    let nonconst = |v: &[ModeData]| v.iter().any(|m| m.coef != 0 && !(m.mode.a == 0 && m.mode.b == 0));
    let prequantized = !nonconst(&psi) && !nonconst(&conf);
    let mut sc = SurfaceScenario {
        surface,
        config: cfg.clone(),
        prec,
        consts,
        modulus,
        elliptic,
        psi,
        conf,
        log_norm: Float::new(prec),
        prequantized,
        min_curvature: 1.0,
        s0: cplx(prec, cfg.s0),
        s_d_l: cplx(prec, cfg.s_d_l),
        s_d_e: cplx(prec, cfg.s_d_e),
    };
    // normalisation of the Kähler form
    if !sc.conf.is_empty() {
        let tol = 10f64.powf(-(prec as f64 / mp::LOG2_10) + 6.0);
        let (n, _) = sc.integrate_smooth(&|s: &SurfaceScenario, p: &Pt| s.conf_value(p).exp(), tol)?;
        sc.log_norm = n.ln();
    }
    // strict positivity of the curvature of h^L on a fixed fine grid
    let min_l = ScenarioF64::from(&sc).min_c1_l(160);
    sc.min_curvature = min_l;
    if !(min_l > 0.0) {
        return Err(Error::Config(format!("perturbed bundle weight has non-positive curvature (min density {min_l:.3e})")));
    }
    Ok(sc)
}

fn torus_eig(c: &Consts, tau: &Complex, m: i32, n: i32) -> Float {
    let prec = c.prec;
    let imt = Float::with_val(prec, tau.imag());
    let ky = Float::with_val(prec, n - Float::with_val(prec, tau.real() * m)) / &imt;
    let k2 = Float::with_val(prec, ky.square_ref()) + (m as i64 * m as i64);
    let four_pi2 = Float::with_val(prec, c.pi.square_ref()) * 4u32;
    // -Δ0 e^{2πi(ms+nt)} = Im τ |K|² for ω0 = ds dt
    k2 * four_pi2 * imt
}

/// Unnormalised associated Legendre function `P_ℓ^m(u)`, `m ≥ 0`, without
/// Condon–Shortley phase.
pub fn assoc_legendre(l: u32, m: u32, u: &Float) -> Float {
    let prec = u.prec();
    if m > l {
        return Float::new(prec);
    }
    let s = Float::with_val(prec, 1 - Float::with_val(prec, u.square_ref())).sqrt();
    let mut pmm = Float::with_val(prec, 1);
    for k in 1..=m {
        pmm *= 2 * k - 1;
        pmm *= &s;
    }
    if l == m {
        return pmm;
    }
    let mut p1 = Float::with_val(prec, u * &pmm) * (2 * m + 1);
    if l == m + 1 {
        return p1;
    }
    let mut p0 = pmm;
    for ll in (m + 2)..=l {
        let t = Float::with_val(prec, u * &p1) * (2 * ll - 1) - Float::with_val(prec, &p0 * (ll + m - 1));
        let p2 = t / (ll - m);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Legendre polynomials `P_0..P_n` at u.
pub fn legendre_all(n: usize, u: &Float) -> Vec<Float> {
    let prec = u.prec();
    let mut out = Vec::with_capacity(n + 1);
    out.push(Float::with_val(prec, 1));
    if n == 0 {
        return out;
    }
    out.push(u.clone());
    for k in 2..=n {
        let t = Float::with_val(prec, u * &out[k - 1]) * (2 * k - 1) as u32 - Float::with_val(prec, &out[k - 2] * (k - 1) as u32);
        out.push(t / k as u32);
    }
    out
}

impl SurfaceScenario {
    pub fn genus(&self) -> u8 {
        self.config.genus
    }

    /// Euler characteristic.
    pub fn chi(&self) -> i32 {
        match self.surface {
            Surface::Sphere => 2,
            Surface::Torus => 0,
        }
    }

    pub fn elliptic(&self) -> &Elliptic {
        self.elliptic.as_ref().expect("torus scenario")
    }

    pub fn tau(&self) -> &Complex {
        &self.modulus.as_ref().expect("torus scenario").tau
    }

    pub fn is_flat_prequantized(&self) -> bool {
        self.surface == Surface::Torus && self.prequantized
    }

    fn mode_value(&self, md: &ModeData, p: &Pt) -> Float {
        let prec = self.prec;
        match self.surface {
            Surface::Sphere => {
                let l = md.mode.a as u32;
                let m = md.mode.b.unsigned_abs();
                let pl = assoc_legendre(l, m, &p.a);
                if m == 0 {
                    return pl;
                }
                let arg = Float::with_val(prec, &p.b * m);
                let trig = if md.mode.b >= 0 { arg.cos() } else { arg.sin() };
                pl * trig
            }
            Surface::Torus => {
                let arg = (Float::with_val(prec, &p.a * md.mode.a) + Float::with_val(prec, &p.b * md.mode.b)) * &self.consts.two_pi;
                if md.mode.sin {
                    arg.sin()
                } else {
                    arg.cos()
                }
            }
        }
    }

    fn series(&self, modes: &[ModeData], p: &Pt, weighted: bool) -> Float {
        let mut acc = Float::new(self.prec);
        for md in modes {
            let v = self.mode_value(md, p) * &md.coef;
            acc += if weighted { v * &md.eig } else { v };
        }
        acc
    }

    /// Bundle-weight perturbation ψ.
    pub fn psi_value(&self, p: &Pt) -> Float {
        self.series(&self.psi, p, false)
    }

    /// Conformal perturbation u.
    pub fn conf_value(&self, p: &Pt) -> Float {
        self.series(&self.conf, p, false)
    }

    /// `c1(L, h^L) / ω0 = 1 + Δ0 ψ / 4π`.
    pub fn c1_l_density(&self, p: &Pt) -> Float {
        let w = self.series(&self.psi, p, true);
        Float::with_val(self.prec, 1) - w / Float::with_val(self.prec, &self.consts.pi * 4u32)
    }

    /// `c1(TX, ω^X) / ω0 = χ - Δ0 u / 4π`.
    pub fn c1_tx_density(&self, p: &Pt) -> Float {
        let w = self.series(&self.conf, p, true);
        Float::with_val(self.prec, self.chi()) + w / Float::with_val(self.prec, &self.consts.pi * 4u32)
    }

    /// `ω^X / ω0 = e^u / N`.
    pub fn omega_density(&self, p: &Pt) -> Float {
        (self.conf_value(p) - &self.log_norm).exp()
    }

    /// `r^L = log(c1(L) / ω^X)`.
    pub fn r_l(&self, p: &Pt) -> Float {
        self.c1_l_density(p).ln() - (self.conf_value(p) - &self.log_norm)
    }

    /// `log|s_D|²` in the metric `h^L`, singular at D.
    pub fn log_sd2(&self, p: &Pt) -> Float {
        let prec = self.prec;
        let base = match self.surface {
            Surface::Sphere => (Float::with_val(prec, 1 + &p.a) / 2u32).ln(),
            Surface::Torus => self.log_sd2_flat(p),
        };
        base - self.psi_value(p)
    }

    /// Torus: `log|θ1(z)/θ1'(0)|² - 2π (Im z)² / Im τ`.
    pub fn log_sd2_flat(&self, p: &Pt) -> Float {
        let prec = self.prec;
        let e = self.elliptic();
        let z = self.torus_point(p);
        let th = e.theta1_taylor(&z, 0).swap_remove(0);
        let r = Complex::with_val(prec, &th / &e.theta1_d1);
        let y = Float::with_val(prec, z.imag());
        let gauss = Float::with_val(prec, y.square_ref()) * &self.consts.two_pi / e.modulus.im();
        mp::abs2(&r).ln() - gauss
    }

    pub fn torus_point(&self, p: &Pt) -> Complex {
        Complex::with_val(self.prec, self.tau() * &p.b) + &p.a
    }

    /// Point at the divisor.
    pub fn divisor_point(&self) -> Pt {
        match self.surface {
            Surface::Sphere => Pt { a: Float::with_val(self.prec, -1), b: Float::new(self.prec) },
            Surface::Torus => Pt { a: Float::new(self.prec), b: Float::new(self.prec) },
        }
    }

    /// `log|s_D^L|²`: multiplier times the frame (`y` on the sphere, `∂s_D(∂z)` on the torus).
    pub fn log_sdl2(&self) -> Float {
        let d = self.divisor_point();
        mp::abs2(&self.s_d_l).ln() - self.psi_value(&d)
    }

    /// `log|s_D^E|²` for trivial E with the constant frame.
    pub fn log_sde2(&self) -> Float {
        mp::abs2(&self.s_d_e).ln()
    }

    /// `log|∂s_D(D)|²` in `h^{T*X ⊗ L}`, with `|∂_ζ|² = λ/2` for `ω^X = λ dx dy`.
    pub fn log_dsd2(&self) -> Float {
        let prec = self.prec;
        let d = self.divisor_point();
        let conf = self.conf_value(&d) - &self.log_norm; // log(ω^X/ω0) at D
        let base = match self.surface {
            // ω0 = dx dy / (π(1+|v|²)²) at v = 0: |∂_v|² = 1/2π
            Surface::Sphere => self.consts.ln_two_pi.clone(),
            // ω0 = dx dy / Im τ: |∂_z|² = 1/(2 Im τ)
            Surface::Torus => Float::with_val(prec, self.elliptic().modulus.im() * 2u32).ln(),
        };
        base - self.psi_value(&d) - conf
    }

    /// `log |s_0|²` for the configured multiplier of the integrally normalised
    /// element, `|s_0^Z|² = (1/2π) vol_{L²}^{-1}`.
    pub fn log_s0_2(&self, vol_l2: &Float) -> Float {
        mp::abs2(&self.s0).ln() - &self.consts.ln_two_pi - Float::with_val(self.prec, vol_l2.ln_ref())
    }

    // -----------------------------------------------------------------------
    // quadrature

    /// Base grid at a refinement level (0 = coarse).
    pub fn quadrature(&self, level: u32) -> Result<QuadratureGrid> {
        let digits = self.prec as f64 / mp::LOG2_10;
        let bw = self.bandwidth() as f64;
        match self.surface {
            Surface::Sphere => {
                let n = ((digits * 0.6 + 2.0 * bw + 16.0) * 1.5f64.powi(level as i32)).ceil() as usize;
                let nphi = ((4.0 * bw + 16.0) * 1.5f64.powi(level as i32)).ceil() as usize;
                QuadratureGrid::sphere(n, nphi, self.prec, level)
            }
            Surface::Torus => {
                let n = ((digits * 0.5 + 4.0 * bw + 16.0) * 1.5f64.powi(level as i32)).ceil() as usize;
                Ok(QuadratureGrid::torus(n, self.prec, level))
            }
        }
    }

    /// Highest mode index in the perturbations.
    pub fn bandwidth(&self) -> u32 {
        self.psi
            .iter()
            .chain(self.conf.iter())
            .map(|m| m.mode.a.unsigned_abs().max(m.mode.b.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    /// `∫ f ω0` for smooth f, refined until two levels agree to `tol`;
    /// returns (value, error estimate).
    pub fn integrate_smooth(&self, f: &dyn Fn(&SurfaceScenario, &Pt) -> Float, tol: f64) -> Result<(Float, f64)> {
        let mut prev: Option<Float> = None;
        for level in 0..8 {
            let g = self.quadrature(level)?;
            let v = g.integrate_omega0(|p| f(self, p));
            if let Some(pv) = prev {
                let err = Float::with_val(self.prec, &v - &pv).abs().to_f64();
                if err <= tol {
                    return Ok((v, err.max(rounding_floor(self.prec))));
                }
            }
            prev = Some(v);
        }
        Err(Error::Precision("precision insufficient: smooth quadrature did not converge".into()))
    }

    /// `∫ F · log|s_D|² ω0` with F smooth. Sphere: azimuthal average then
    /// Legendre product integration against `log((1+u)/2)`. Torus: the flat
    /// part through its Fourier series (requires F to be a finite mode sum
    /// given by `torus_modes`), otherwise see [`torus_singular_polar_f64`].
    pub fn integrate_log_sd2_sphere(&self, f: &dyn Fn(&Pt) -> Float, level: u32) -> Result<(Float, f64)> {
        assert_eq!(self.surface, Surface::Sphere);
        let one = |lv: u32| -> Result<Float> {
            let g = self.quadrature(lv)?;
            let GridKind::Sphere { u, w, nphi } = &g.kind else { unreachable!() };
            let n = u.len();
            let prec = self.prec;
            // azimuthal averages of F at the Legendre nodes
            let fbar: Vec<Float> = u
                .iter()
                .map(|uu| {
                    let vals: Vec<Float> = (0..*nphi).map(|k| f(&Pt { a: uu.clone(), b: phi_node(&self.consts, k, *nphi) })).collect();
                    mp::pairwise_sum(&vals, prec) / *nphi as u32
                })
                .collect();
            // Legendre coefficients by Gauss projection
            let mut coef = vec![Float::new(prec); n];
            for (i, uu) in u.iter().enumerate() {
                let pl = legendre_all(n - 1, uu);
                let wf = Float::with_val(prec, &w[i] * &fbar[i]);
                for (k, pk) in pl.iter().enumerate() {
                    coef[k] += Float::with_val(prec, &wf * pk);
                }
            }
            let mut total = Float::new(prec);
            for (k, c) in coef.iter().enumerate() {
                let ak = Float::with_val(prec, c * (2 * k + 1) as u32) / 2u32;
                total += ak * log_moment(k, prec);
            }
            // ω0 = du dφ/4π: the φ-average leaves a factor 1/2
            let sing = total / 2u32;
            // smooth remainder: -∫ F ψ ω0
            let smooth = g.integrate_omega0(|p| f(p) * self.psi_value(p));
            Ok(sing - smooth)
        };
        let a = one(level)?;
        let b = one(level + 1)?;
        let err = Float::with_val(self.prec, &a - &b).abs().to_f64().max(rounding_floor(self.prec));
        Ok((b, err))
    }

    /// Torus: `∫ c · log|s_D|²_flat ω0` for the density `c = c0 + Σ a_k cos(2πk·x)`
    /// through the Fourier coefficients of the flat Green function:
    /// mean `-log(4π²|η|⁴)`, `k ≠ 0`: `-4π / (Im τ |K|²)`.
    pub fn torus_flat_green_mean(&self) -> Float {
        let prec = self.prec;
        let eta = crate::torsion::dedekind_eta(self.tau(), prec);
        let e4 = Float::with_val(prec, mp::abs2(&eta).square_ref());
        -(Float::with_val(prec, self.consts.pi.square_ref()) * 4u32 * e4).ln()
    }

    /// `∫ c1(L) log|s_D|²` (sphere: product integration; torus: Green function).
    pub fn int_c1l_log_sd2(&self) -> Result<(Float, f64)> {
        match self.surface {
            Surface::Sphere => self.integrate_log_sd2_sphere(&|p| self.c1_l_density(p), 0),
            Surface::Torus => {
                // ∫ c1 S_flat = S0 + Σ_cos ψ_k ; then subtract ∫ c1 ψ
                let mut v = self.torus_flat_green_mean();
                for md in &self.psi {
                    if !md.mode.sin && !(md.mode.a == 0 && md.mode.b == 0) {
                        v += &md.coef;
                    }
                }
                let tol = 10f64.powf(-(self.prec as f64 / mp::LOG2_10) + 8.0);
                let (s, e) = self.integrate_smooth(&|s, p| s.c1_l_density(p) * s.psi_value(p), tol)?;
                Ok((v - s, e))
            }
        }
    }

    /// `∫ c1(TX) log|s_D|²`.
    pub fn int_c1tx_log_sd2(&self) -> Result<(Float, f64)> {
        match self.surface {
            Surface::Sphere => self.integrate_log_sd2_sphere(&|p| self.c1_tx_density(p), 0),
            Surface::Torus => {
                // c1(TX) has zero mean on the torus: ∫ c1(TX) S_flat = -Σ_cos u_k
                let mut v = Float::new(self.prec);
                for md in &self.conf {
                    if !md.mode.sin && !(md.mode.a == 0 && md.mode.b == 0) {
                        v -= &md.coef;
                    }
                }
                let tol = 10f64.powf(-(self.prec as f64 / mp::LOG2_10) + 8.0);
                let (s, e) = self.integrate_smooth(&|s, p| s.c1_tx_density(p) * s.psi_value(p), tol)?;
                Ok((v - s, e))
            }
        }
    }

    /// `∫ r^L c1(L)`.
    pub fn int_rl_c1l(&self) -> Result<(Float, f64)> {
        if self.prequantized {
            return Ok((Float::new(self.prec), 0.0));
        }
        let tol = 10f64.powf(-(self.prec as f64 / mp::LOG2_10) + 8.0);
        self.integrate_smooth(&|s, p| s.r_l(p) * s.c1_l_density(p), tol)
    }

    /// Degree and Gauss–Bonnet checks: `(∫ c1(L) - 1, ∫ c1(TX) - χ, ∫ dv - 1/2π)`.
    pub fn gauss_bonnet_residuals(&self) -> Result<(f64, f64, f64)> {
        let tol = 1e-14;
        let (dl, _) = self.integrate_smooth(&|s, p| s.c1_l_density(p), tol)?;
        let (dt, _) = self.integrate_smooth(&|s, p| s.c1_tx_density(p), tol)?;
        let (vol, _) = self.integrate_smooth(&|s, p| s.omega_density(p), tol)?;
        let vol = vol / &self.consts.two_pi;
        let inv = Float::with_val(self.prec, self.consts.two_pi.recip_ref());
        Ok(((dl - 1u32).to_f64().abs(), (dt - self.chi()).to_f64().abs(), (vol - inv).to_f64().abs()))
    }

    /// Poincaré–Lelong residual for the test function given by `test`
    /// (a perturbation mode): `∫ log|s_D|² (Δ0 Y/4π) ω0 - (Y(D) - ∫ Y c1(L) ω0)`.
    pub fn poincare_lelong_residual(&self, test: &Mode) -> Result<f64> {
        let prec = self.prec;
        let cfg = ScenarioConfig { psi: vec![test.clone()], conformal: vec![], ..self.config.clone() };
        let probe = build_scenario(&ScenarioConfig { psi: vec![], ..cfg.clone() }, prec)?;
        let eig = match self.surface {
            Surface::Sphere => Float::with_val(prec, &self.consts.pi * 4u32) * (test.a as u32 * (test.a as u32 + 1)),
            Surface::Torus => torus_eig(&self.consts, self.tau(), test.a, test.b),
        };
        let md = ModeData { mode: Mode { coef: 1.0, ..test.clone() }, coef: Float::with_val(prec, 1), eig: eig.clone() };
        let y = |p: &Pt| probe.mode_value(&md, p);
        let four_pi = Float::with_val(prec, &self.consts.pi * 4u32);
        let lhs = match self.surface {
            Surface::Sphere => {
                let (v, _) = self.integrate_log_sd2_sphere(&|p| y(p), 1)?;
                -(v * &eig) / &four_pi
            }
            Surface::Torus => {
                let v = torus_singular_polar_f64(self, &|s, t| {
                    let p = Pt::new(prec, s, t);
                    y(&p).to_f64()
                });
                Float::with_val(prec, -(v * eig.to_f64()) / four_pi.to_f64())
            }
        };
        let tol = 1e-20;
        let (int_yc, _) = self.integrate_smooth(&|s, p| y(p) * s.c1_l_density(p), tol)?;
        let rhs = y(&self.divisor_point()) - int_yc;
        Ok(Float::with_val(prec, lhs - rhs).abs().to_f64())
    }

    /// `vol_{L²}(H¹(X,R)/H¹(X,Z))` from the integral harmonic forms `ds, dt`
    /// under `⟨α,β⟩ = ∫ g(α,β) dv`. Torus only; 1 for the sphere (empty basis).
    pub fn vol_l2_h1(&self) -> Result<Float> {
        let prec = self.prec;
        if self.surface == Surface::Sphere {
            return Ok(Float::with_val(prec, 1));
        }
        let tau = self.tau().clone();
        let imt = Float::with_val(prec, tau.imag());
        let ret = Float::with_val(prec, tau.real());
        // Euclidean (x, y) components: ds = dx - (Re τ/Im τ) dy, dt = dy / Im τ
        let ds = [Float::with_val(prec, 1), Float::with_val(prec, -Float::with_val(prec, &ret / &imt))];
        let dt = [Float::new(prec), Float::with_val(prec, imt.recip_ref())];
        let dot = |a: &[Float; 2], b: &[Float; 2]| Float::with_val(prec, &a[0] * &b[0]) + Float::with_val(prec, &a[1] * &b[1]);
        let pair = |a: &[Float; 2], b: &[Float; 2]| -> Result<Float> {
            let e = dot(a, b);
            let tol = 10f64.powf(-(prec as f64 / mp::LOG2_10) + 8.0);
            // g(α,β) = (ω0/ω^X) · Euclid(α,β)/λ0 with λ0 = 1/Im τ, and dv = ω^X/2π
            let (v, _) = self.integrate_smooth(
                &|s, p| {
                    let dens = s.omega_density(p);
                    let g = Float::with_val(prec, &e * &imt) / &dens;
                    g * dens
                },
                tol,
            )?;
            Ok(v / &self.consts.two_pi)
        };
        let g11 = pair(&ds, &ds)?;
        let g12 = pair(&ds, &dt)?;
        let g22 = pair(&dt, &dt)?;
        let det = Float::with_val(prec, &g11 * &g22) - Float::with_val(prec, g12.square_ref());
        Ok(det.sqrt())
    }
}

fn rounding_floor(prec: u32) -> f64 {
    10f64.powf(-(prec as f64 / mp::LOG2_10) + 4.0)
}

/// `∫_{-1}^{1} P_n(u) log((1+u)/2) du`.
pub fn log_moment(n: usize, prec: u32) -> Float {
    if n == 0 {
        return Float::with_val(prec, -2);
    }
    let v = Float::with_val(prec, 2) / ((n * (n + 1)) as u64);
    if n % 2 == 1 {
        v
    } else {
        -v
    }
}

fn phi_node(c: &Consts, k: usize, n: usize) -> Float {
    Float::with_val(c.prec, &c.two_pi * k as u32) / n as u32
}

// ---------------------------------------------------------------------------
// grids

#[derive(Clone, Debug)]
pub enum GridKind {
    /// Gauss–Legendre in u (nodes, weights on [-1,1]) × uniform φ.
    Sphere { u: Arc<Vec<Float>>, w: Arc<Vec<Float>>, nphi: usize },
    /// Offset trapezoid `((i+½)/n, (j+½)/n)`.
    Torus { n: usize },
}

/// Product quadrature. Weights are in units of `dv = ω0/2π` for the
/// unperturbed metric; they sum to `1/2π`.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub kind: GridKind,
    pub prec: u32,
    pub level: u32,
    pub consts: Consts,
    /// Estimated error of the weight sum (rounding only; the rules are exact
    /// for constants).
    pub error_estimate: f64,
}

type GlCache = Mutex<HashMap<(usize, u32), (Arc<Vec<Float>>, Arc<Vec<Float>>)>>;

fn gl_cache() -> &'static GlCache {
    static CACHE: OnceLock<GlCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre nodes and weights on [-1, 1] at `prec` bits (cached).
pub fn gauss_legendre(n: usize, prec: u32) -> (Arc<Vec<Float>>, Arc<Vec<Float>>) {
    if let Some(v) = gl_cache().lock().unwrap().get(&(n, prec)) {
        return v.clone();
    }
    let wp = prec + 16;
    let pi = mp::pi(wp);
    let mut xs = vec![Float::new(prec); n];
    let mut ws = vec![Float::new(prec); n];
    let eps = Float::with_val(wp, Float::i_exp(1, -(wp as i32) + 8));
    for i in 0..n.div_ceil(2) {
        let guess = ((i as f64 + 0.75) / (n as f64 + 0.5) * std::f64::consts::PI).cos();
        let mut x = Float::with_val(wp, guess);
        let _ = &pi;
        let mut dp = Float::new(wp);
        for _ in 0..100 {
            // P_n and P_n' by recurrence
            let mut p0 = Float::with_val(wp, 1);
            let mut p1 = x.clone();
            for k in 2..=n {
                let p2 = (Float::with_val(wp, &x * &p1) * (2 * k - 1) as u32 - Float::with_val(wp, &p0 * (k - 1) as u32)) / k as u32;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (x.clone(), Float::with_val(wp, 1)) } else { (p1, p0) };
            // P_n' = n (x P_n - P_{n-1}) / (x² - 1)
            let x2m1 = Float::with_val(wp, x.square_ref()) - 1u32;
            dp = (Float::with_val(wp, &x * &pn) - &pn1) * n as u32 / &x2m1;
            let dx = Float::with_val(wp, &pn / &dp);
            x -= &dx;
            if dx.abs() < eps {
                break;
            }
        }
        let x2 = Float::with_val(wp, x.square_ref());
        let w = Float::with_val(wp, 2) / ((1 - x2) * Float::with_val(wp, dp.square_ref()));
        xs[i] = Float::with_val(prec, &x);
        xs[n - 1 - i] = Float::with_val(prec, -x);
        ws[i] = Float::with_val(prec, &w);
        ws[n - 1 - i] = Float::with_val(prec, &w);
    }
    let out = (Arc::new(xs), Arc::new(ws));
    gl_cache().lock().unwrap().insert((n, prec), out.clone());
    out
}

impl QuadratureGrid {
    pub fn sphere(n: usize, nphi: usize, prec: u32, level: u32) -> Result<Self> {
        if n == 0 || nphi == 0 {
            return Err(Error::Domain("empty grid".into()));
        }
        let (u, w) = gauss_legendre(n, prec);
        Ok(QuadratureGrid { kind: GridKind::Sphere { u, w, nphi }, prec, level, consts: Consts::new(prec), error_estimate: rounding_floor(prec) })
    }

    pub fn torus(n: usize, prec: u32, level: u32) -> Self {
        QuadratureGrid { kind: GridKind::Torus { n }, prec, level, consts: Consts::new(prec), error_estimate: rounding_floor(prec) }
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            GridKind::Sphere { u, nphi, .. } => u.len() * nphi,
            GridKind::Torus { n } => n * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All nodes.
    pub fn points(&self) -> Vec<Pt> {
        let prec = self.prec;
        match &self.kind {
            GridKind::Sphere { u, nphi, .. } => {
                let mut out = Vec::with_capacity(self.len());
                for uu in u.iter() {
                    for k in 0..*nphi {
                        out.push(Pt { a: uu.clone(), b: phi_node(&self.consts, k, *nphi) });
                    }
                }
                out
            }
            GridKind::Torus { n } => {
                let mut out = Vec::with_capacity(n * n);
                for i in 0..*n {
                    for j in 0..*n {
                        out.push(Pt { a: Float::with_val(prec, 2 * i + 1) / (2 * n) as u32, b: Float::with_val(prec, 2 * j + 1) / (2 * n) as u32 });
                    }
                }
                out
            }
        }
    }

    /// Weights in units of dv (sum 1/2π), aligned with `points()`.
    pub fn weights(&self) -> Vec<Float> {
        let prec = self.prec;
        match &self.kind {
            GridKind::Sphere { w, nphi, .. } => {
                // dv = du dφ / 8π²
                let mut out = Vec::with_capacity(self.len());
                let scale = Float::with_val(prec, &self.consts.two_pi * &self.consts.two_pi) * 2u32;
                for ww in w.iter() {
                    let v = Float::with_val(prec, ww * &self.consts.two_pi) / *nphi as u32 / &scale;
                    for _ in 0..*nphi {
                        out.push(v.clone());
                    }
                }
                out
            }
            GridKind::Torus { n } => {
                let v = Float::with_val(prec, self.consts.two_pi.recip_ref()) / (n * n) as u32;
                vec![v; n * n]
            }
        }
    }

    /// `∫ f ω0` with a deterministic pairwise sum.
    pub fn integrate_omega0<F: Fn(&Pt) -> Float>(&self, f: F) -> Float {
        let pts = self.points();
        let ws = self.weights();
        let vals: Vec<Float> = pts.iter().zip(ws.iter()).map(|(p, w)| f(p) * w).collect();
        mp::pairwise_sum(&vals, self.prec) * &self.consts.two_pi
    }
}

// ---------------------------------------------------------------------------
// double-precision helpers

/// Double-precision view of a scenario for sampling and cross-checks.
#[derive(Clone, Debug)]
pub struct ScenarioF64 {
    pub surface: Surface,
    pub psi: Vec<(Mode, f64)>,
    pub conf: Vec<Mode>,
    pub log_norm: f64,
    pub elliptic: Option<EllipticF64>,
}

impl ScenarioF64 {
    pub fn from(s: &SurfaceScenario) -> Self {
        ScenarioF64 {
            surface: s.surface,
            psi: s.psi.iter().map(|m| (m.mode.clone(), m.eig.to_f64())).collect(),
            conf: s.conf.iter().map(|m| m.mode.clone()).collect(),
            log_norm: s.log_norm.to_f64(),
            elliptic: s.elliptic.as_ref().map(|e| EllipticF64::from(e)),
        }
    }

    fn mode(&self, m: &Mode, a: f64, b: f64) -> f64 {
        match self.surface {
            Surface::Sphere => {
                let mm = m.b.unsigned_abs();
                let pl = assoc_legendre(m.a as u32, mm, &Float::with_val(64, a)).to_f64();
                if mm == 0 {
                    pl
                } else if m.b > 0 {
                    pl * (mm as f64 * b).cos()
                } else {
                    pl * (mm as f64 * b).sin()
                }
            }
            Surface::Torus => {
                let arg = 2.0 * std::f64::consts::PI * (m.a as f64 * a + m.b as f64 * b);
                if m.sin {
                    arg.sin()
                } else {
                    arg.cos()
                }
            }
        }
    }

    pub fn psi(&self, a: f64, b: f64) -> f64 {
        self.psi.iter().map(|(m, _)| m.coef * self.mode(m, a, b)).sum()
    }

    pub fn conf(&self, a: f64, b: f64) -> f64 {
        self.conf.iter().map(|m| m.coef * self.mode(m, a, b)).sum()
    }

    /// `c1(L)/ω0`.
    pub fn c1_l(&self, a: f64, b: f64) -> f64 {
        let w: f64 = self.psi.iter().map(|(m, eig)| m.coef * eig * self.mode(m, a, b)).sum();
        1.0 - w / (4.0 * std::f64::consts::PI)
    }

    /// `ω^X/ω0`.
    pub fn omega_density(&self, a: f64, b: f64) -> f64 {
        (self.conf(a, b) - self.log_norm).exp()
    }

    /// Minimum of `c1(L)/ω0` over an `n × n` grid (sphere: u × φ, torus: s × t).
    pub fn min_c1_l(&self, n: usize) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..=n {
            for j in 0..n {
                let (a, b) = match self.surface {
                    Surface::Sphere => (-1.0 + 2.0 * i as f64 / n as f64, 2.0 * std::f64::consts::PI * j as f64 / n as f64),
                    Surface::Torus => (i as f64 / n as f64, j as f64 / n as f64),
                };
                m = m.min(self.c1_l(a, b));
            }
        }
        m
    }
}

/// Torus cross-check for `∫ F log|s_D|²_h ω0` in double precision: a smooth
/// radial cutoff χ around D splits the integral; `(1-χ)` part by the offset
/// trapezoid rule, `χ` part in polar coordinates with `t = ρ²` and Legendre
/// product integration against `log t`.
pub fn torus_singular_polar_f64(s: &SurfaceScenario, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let sf = ScenarioF64::from(s);
    let e = sf.elliptic.expect("torus");
    let tau = e.tau;
    let imt = tau.im;
    let pi = std::f64::consts::PI;
    // log|s_D|²_h at z (flat part minus ψ)
    let log_sd = |z: Complex64| -> f64 {
        let th = crate::special_functions::theta1_f64(tau, z) / e.theta1_d1;
        th.norm_sqr().ln() - 2.0 * pi * z.im * z.im / imt
    };
    let to_st = |z: Complex64| -> (f64, f64) {
        let t = z.im / imt;
        let s_ = z.re - t * tau.re;
        (s_, t)
    };
    // cutoff radius: well inside the fundamental domain
    let rmax = 0.45 * imt.min(1.0).min((tau - 1.0).norm()).min(tau.norm()).min((tau + 1.0).norm());
    let chi = |rho: f64| -> f64 {
        let x = rho / rmax;
        if x <= 0.4 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            let y = (x - 0.4) / 0.6;
            let a = (-1.0 / y).exp();
            let b = (-1.0 / (1.0 - y)).exp();
            b / (a + b)
        }
    };
    // outer part
    let n = 400usize;
    let mut outer = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (ss, tt) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            // nearest lattice image of the point to measure the radius
            let mut z = Complex64::new(ss, 0.0) + tau * tt;
            let k = (z.im / imt).round();
            z -= tau * k;
            let m = z.re.round();
            z -= m;
            let c = 1.0 - chi(z.norm());
            if c == 0.0 {
                continue;
            }
            outer += c * f(ss, tt) * (log_sd(z) - sf.psi(ss, tt));
        }
    }
    outer /= (n * n) as f64;
    // inner polar part: ω0 = dx dy / Im τ = ρ dρ dα / Im τ = dT dα / (2 Im τ)
    let nt = 160usize;
    let na = 96usize;
    let (tn, tw) = gauss_legendre(nt, 64);
    let big_t = rmax * rmax;
    let mut inner = 0.0;
    let mut coef = vec![0.0; nt];
    for (ti, wi) in tn.iter().zip(tw.iter()) {
        let x = ti.to_f64();
        let w = wi.to_f64();
        let tval = big_t * (1.0 + x) / 2.0;
        let rho = tval.sqrt();
        let mut avg_log = 0.0; // angular mean of χ F (smooth part of log|s_D|²)
        let mut avg_f = 0.0; // angular mean of χ F
        for k in 0..na {
            let al = 2.0 * pi * (k as f64 + 0.5) / na as f64;
            let z = Complex64::from_polar(rho, al);
            let (ss, tt) = to_st(z);
            let (ss, tt) = (ss.rem_euclid(1.0), tt.rem_euclid(1.0));
            let fv = f(ss, tt) * chi(rho);
            let reg = log_sd(z) - (rho * rho).ln() - sf.psi(ss, tt);
            avg_log += fv * reg;
            avg_f += fv;
        }
        avg_log /= na as f64;
        avg_f /= na as f64;
        // smooth part: ∫ avg_log dT · (2π)/(2 Im τ)
        inner += w * (big_t / 2.0) * avg_log * (2.0 * pi) / (2.0 * imt);
        // Legendre projection of avg_f for the log T part
        let pl = legendre_all(nt - 1, &Float::with_val(64, x));
        for (k, p) in pl.iter().enumerate() {
            coef[k] += w * avg_f * p.to_f64();
        }
    }
    // ∫_0^T g(T') log T' dT' = (T/2) ∫ g (log T + log((1+x)/2)) dx
    let mut logpart = 0.0;
    for (k, c) in coef.iter().enumerate() {
        let ak = c * (2 * k + 1) as f64 / 2.0;
        let mom = log_moment(k, 64).to_f64() + if k == 0 { 2.0 * big_t.ln() } else { 0.0 };
        logpart += ak * mom;
    }
    inner += (big_t / 2.0) * logpart * (2.0 * pi) / (2.0 * imt);
    outer + inner
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 200;

    #[test]
    fn gl_integrates_polynomials() {
        let (x, w) = gauss_legendre(10, P);
        let mut s = Float::new(P);
        for (xi, wi) in x.iter().zip(w.iter()) {
            s += Float::with_val(P, xi.square_ref()).square() * wi;
        }
        // ∫ x⁴ = 2/5
        let e = (s - Float::with_val(P, 2) / 5u32).abs().to_f64();
        assert!(e < 1e-55, "{e}");
    }

    #[test]
    fn sphere_volume_and_degrees() {
        let s = build_scenario(&ScenarioConfig::sphere(), P).unwrap();
        assert!(s.prequantized);
        let (dl, dt, vol) = s.gauss_bonnet_residuals().unwrap();
        assert!(dl < 1e-12 && dt < 1e-12 && vol < 1e-12);
        let g = s.quadrature(0).unwrap();
        let total: Float = mp::pairwise_sum(&g.weights(), P);
        let inv = Float::with_val(P, s.consts.two_pi.recip_ref());
        assert!((total - inv).abs().to_f64() < 1e-12);
    }

    #[test]
    fn torus_flat_fields() {
        let s = build_scenario(&ScenarioConfig::torus(0.0, 1.0), P).unwrap();
        let p = Pt::new(P, 0.3, 0.7);
        assert_eq!(s.c1_tx_density(&p).to_f64(), 0.0);
        let (dl, dt, vol) = s.gauss_bonnet_residuals().unwrap();
        assert!(dl < 1e-12 && dt < 1e-12 && vol < 1e-12);
    }

    #[test]
    fn sphere_log_integral_closed_form() {
        // ∫ log|s_D|² dv = (1/2π) ∫ log((1+u)/2) du dφ/(4π) · 2π ... = -1/2π
        let s = build_scenario(&ScenarioConfig::sphere(), P).unwrap();
        let (v, err) = s.integrate_log_sd2_sphere(&|_| Float::with_val(P, 1), 0).unwrap();
        let dv = v / &s.consts.two_pi;
        let expect = -Float::with_val(P, s.consts.two_pi.recip_ref());
        assert!((dv - expect).abs().to_f64() < 1e-40);
        assert!(err < 1e-40);
    }

    #[test]
    fn perturbed_sphere_not_prequantized() {
        let cfg = ScenarioConfig { psi: vec![Mode { a: 2, b: 0, sin: false, coef: 0.05 }], ..ScenarioConfig::sphere() };
        let s = build_scenario(&cfg, 128).unwrap();
        assert!(!s.prequantized);
        let p = Pt::new(128, 0.3, 1.0);
        assert!(s.r_l(&p).to_f64().abs() > 1e-3);
        let (dl, _, _) = s.gauss_bonnet_residuals().unwrap();
        assert!(dl < 1e-10);
        // ∫ c1 log|s_D|² = -1 + ψ(D) - ∫ c1 ψ
        let (v, _) = s.int_c1l_log_sd2().unwrap();
        let d = s.divisor_point();
        let (cpsi, _) = s.integrate_smooth(&|s, p| s.c1_l_density(p) * s.psi_value(p), 1e-25).unwrap();
        let expect = Float::with_val(128, -1) + s.psi_value(&d) - cpsi;
        assert!((v - expect).abs().to_f64() < 1e-20);
    }

    #[test]
    fn negative_curvature_rejected() {
        let cfg = ScenarioConfig { psi: vec![Mode { a: 3, b: 0, sin: false, coef: 0.5 }], ..ScenarioConfig::sphere() };
        assert!(matches!(build_scenario(&cfg, 64), Err(Error::Config(_))));
        assert!(matches!(build_scenario(&ScenarioConfig::torus(0.0, -1.0), 64), Err(Error::Config(_))));
    }

    #[test]
    fn prequantized_rl_vanishes() {
        let s = build_scenario(&ScenarioConfig::torus(0.3, 1.2), P).unwrap();
        let g = s.quadrature(0).unwrap();
        let m = g.points().iter().map(|p| s.r_l(p).to_f64().abs()).fold(0.0, f64::max);
        assert!(m < 1e-10);
    }

    #[test]
    fn torus_green_vs_polar() {
        for (re, im) in [(0.0, 1.0), (0.3, 1.2)] {
            let s = build_scenario(&ScenarioConfig::torus(re, im), 128).unwrap();
            let (v, _) = s.int_c1l_log_sd2().unwrap();
            let w = torus_singular_polar_f64(&s, &|_, _| 1.0);
            assert!((v.to_f64() - w).abs() < 1e-7, "{} vs {}", v.to_f64(), w);
        }
    }

    #[test]
    fn poincare_lelong() {
        let s = build_scenario(&ScenarioConfig::sphere(), 128).unwrap();
        let r = s.poincare_lelong_residual(&Mode { a: 2, b: 1, sin: false, coef: 1.0 }).unwrap();
        assert!(r < 1e-20, "{r}");
        let r = s.poincare_lelong_residual(&Mode { a: 3, b: 0, sin: false, coef: 1.0 }).unwrap();
        assert!(r < 1e-20, "{r}");
        let t = build_scenario(&ScenarioConfig::torus(0.3, 1.2), 128).unwrap();
        let r = t.poincare_lelong_residual(&Mode { a: 1, b: 1, sin: false, coef: 1.0 }).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn torus_vol_l2() {
        let s = build_scenario(&ScenarioConfig::torus(0.3, 1.2), 128).unwrap();
        let v = s.vol_l2_h1().unwrap();
        let expect = Float::with_val(128, s.consts.two_pi.recip_ref());
        assert!((v - expect).abs().to_f64() < 1e-25);
    }
}
