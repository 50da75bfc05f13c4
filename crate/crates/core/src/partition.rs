//! L² Gram matrices of the canonical bases, their log-determinants and the
//! partition function `log Z_p`.
//!
//! Three routes produce `log Z_p`:
//! * closed form for the round sphere with the Fubini–Study weight, where the
//!   monomial Gram matrix is diagonal with Beta-function entries;
//! * direct quadrature of the Gram matrix of the canonical basis;
//! * on the torus, the theta frame: `W = M Θ` gives
//!   `log det Gram(W) = log|det M|² + log det Gram(Θ)`, and the flat theta
//!   Gram matrix is diagonal in closed form.
//!
//! A plain Monte-Carlo estimate of `(1/k!)∫|det s(z_i)|² dv^k` is kept as an
//! independent oracle for the determinant formula.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Complex, Float};
use serde::Serialize;

use crate::canonical_sections::{
    basis_g0, basis_g1_theta, basis_g1_weierstrass, dimension, normalization_log_abs2, transition_matrix, BasisKind,
    SectionBasis,
};
use crate::geometry::{build_scenario, gauss_legendre, Pt, ScenarioConfig, ScenarioF64, Surface, SurfaceScenario};
use crate::linalg::{cholesky_logdet, CMat};
use crate::mp;
use crate::special_functions::EllipticF64;
use crate::{Error, Result};

/// Hermitian Gram matrix `⟨f_i, f_j⟩_{L²}` of a basis.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub mat: CMat,
    pub prec: u32,
    /// Max entry change between two refinement levels, relative to
    /// `sqrt(G_ii G_jj)`.
    pub error_estimate: f64,
    /// `log G_ii`, the diagonal pre-scaling used by the log-determinant.
    pub log_diag: Vec<f64>,
    /// Quadrature nodes of the finer level (0 for closed forms).
    pub nodes: usize,
}

/// log-determinant with its loss-of-significance estimate.
#[derive(Clone, Debug)]
pub struct LogDet {
    pub value: Float,
    /// Decimal digits lost to the conditioning of the scaled matrix.
    pub loss_digits: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Auto,
    ClosedForm,
    Quadrature,
    Transition,
}

impl Route {
    pub fn tag(self) -> &'static str {
        match self {
            Route::Auto => "auto",
            Route::ClosedForm => "closed-form",
            Route::Quadrature => "quadrature",
            Route::Transition => "transition",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PartitionOptions {
    pub route: Route,
    /// Working decimal digits; `None` uses `30 + 2p`.
    pub digits: Option<u32>,
    /// Base quadrature level; the error estimate compares it with `level + 1`.
    pub level: u32,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { route: Route::Auto, digits: None, level: 0 }
    }
}

/// One value of `log Z_p`.
#[derive(Clone, Debug, Serialize)]
pub struct LogPartitionPoint {
    pub p: u32,
    #[serde(rename = "N_p")]
    pub n_p: usize,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    pub method: &'static str,
    pub precision_bits: u32,
    pub quad_nodes: usize,
    pub est_error: f64,
    #[serde(skip)]
    pub log_z_exact: Float,
}

/// `log Z_p` with the s_D^L, s_D^E, s_0 normalisation split off, plus
/// diagnostics; the full value is `log_det + normalization`.
#[derive(Clone, Debug)]
pub struct PartitionParts {
    pub log_det: Float,
    pub normalization: Float,
    pub method: Route,
    pub error: f64,
    pub nodes: usize,
    pub loss_digits: f64,
}

fn rounding(prec: u32, scale: f64) -> f64 {
    10f64.powf(-(prec as f64 / mp::LOG2_10) + 3.0) * scale.abs().max(1.0)
}

fn all_zero(cfg: &ScenarioConfig) -> bool {
    cfg.psi.iter().chain(cfg.conformal.iter()).all(|m| m.coef == 0.0)
}

/// The bundle weight and Kähler form are the unperturbed ones.
pub fn is_unperturbed(s: &SurfaceScenario) -> bool {
    all_zero(&s.config)
}

// ---------------------------------------------------------------------------
// Gram matrices

fn scale_level(x: f64, level: u32) -> usize {
    (x * 1.5f64.powi(level as i32)).ceil() as usize
}

/// Sphere monomials `w^j`: with `A = sqrt((1-u)/2)`, `B = sqrt((1+u)/2)`,
/// `G_jk = (1/4π) ∫ A^{j+k} B^{2p-j-k} C_{j-k}(u) du`, where `C_m` is the
/// φ-average of `e^{imφ} e^{-pψ} ω^X/ω0`.
fn gram_sphere_at(b: &SectionBasis, s: &SurfaceScenario, level: u32) -> Result<(CMat, usize)> {
    let prec = s.prec;
    let p = b.p as usize;
    let n = p + 1;
    let digits = prec as f64 / mp::LOG2_10;
    let bw = s.bandwidth() as f64;
    let flat = is_unperturbed(s);
    let n_u = scale_level(p as f64 / 2.0 + 0.6 * digits + 4.0 * bw + 16.0, level);
    let n_phi = if flat { 1 } else { scale_level(2.0 * p as f64 + 16.0 + 8.0 * bw + 0.3 * digits, level) };
    let (us, ws) = gauss_legendre(n_u, prec);
    // e^{2πi k/Nφ}
    let roots: Vec<Complex> = (0..n_phi)
        .map(|k| {
            let ang = Float::with_val(prec, &s.consts.two_pi * k as u32) / n_phi as u32;
            let (sn, cs) = ang.sin_cos(Float::new(prec));
            Complex::with_val(prec, (cs, sn))
        })
        .collect();
    let pf = b.p;
    let leaf = |i: usize| -> Vec<Complex> {
        let u = &us[i];
        // C_m(u_i), m = 0..p
        let c: Vec<Complex> = if flat {
            let mut v = vec![mp::czero(prec); n];
            v[0] = mp::cone(prec);
            v
        } else {
            let e: Vec<Float> = (0..n_phi)
                .map(|l| {
                    let phi = Float::with_val(prec, &s.consts.two_pi * l as u32) / n_phi as u32;
                    let pt = Pt { a: u.clone(), b: phi };
                    let x = s.conf_value(&pt) - &s.log_norm - s.psi_value(&pt) * pf;
                    x.exp()
                })
                .collect();
            (0..n)
                .map(|m| {
                    let terms: Vec<Complex> =
                        (0..n_phi).map(|l| Complex::with_val(prec, &roots[(m * l) % n_phi] * &e[l])).collect();
                    mp::pairwise_sum_c(&terms, prec) / n_phi as u32
                })
                .collect()
        };
        let a = Float::with_val(prec, 1 - u) / 2u32;
        let bq = Float::with_val(prec, 1 + u) / 2u32;
        let sa = a.sqrt();
        let sb = bq.sqrt();
        let mut pa = vec![mp::fl(prec, 1.0)];
        let mut pb = vec![mp::fl(prec, 1.0)];
        for k in 1..=2 * p {
            pa.push(Float::with_val(prec, &pa[k - 1] * &sa));
            pb.push(Float::with_val(prec, &pb[k - 1] * &sb));
        }
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                let rad = Float::with_val(prec, &pa[j + k] * &pb[2 * p - j - k]) * &ws[i];
                let cm = if j >= k { c[j - k].clone() } else { c[k - j].clone().conj() };
                out.push(cm * rad);
            }
        }
        out
    };
    let merge = |mut x: Vec<Complex>, y: Vec<Complex>| {
        for (a, b) in x.iter_mut().zip(y) {
            *a += b;
        }
        x
    };
    let sums = mp::tree_reduce(0, n_u, &leaf, &merge);
    let four_pi = Float::with_val(prec, &s.consts.two_pi * 2u32);
    let mut g = CMat::zeros(n, n, prec);
    for j in 0..n {
        for k in 0..n {
            *g.at_mut(j, k) = Complex::with_val(prec, &sums[j * n + k] / &four_pi);
        }
    }
    Ok((g, n_u * n_phi))
}

/// Torus bases by the offset trapezoid rule in `z = s + tτ`.
fn gram_torus_at(b: &SectionBasis, s: &SurfaceScenario, level: u32) -> Result<(CMat, usize)> {
    let prec = s.prec;
    let e = s.elliptic();
    let n = b.dim();
    let imt = e.modulus.im().to_f64();
    let digits = prec as f64 / mp::LOG2_10;
    let bw = s.bandwidth() as f64;
    let spread = imt.max(1.0 / imt);
    let base = 1.3 * (2.0 * b.p as f64 * digits * std::f64::consts::LN_10 / std::f64::consts::PI * spread).sqrt()
        + 8.0
        + 4.0 * bw;
    let ng = scale_level(base, level);
    let tau = e.tau().clone();
    let leaf = |idx: usize| -> Result<Vec<Complex>> {
        let (i, j) = (idx / ng, idx % ng);
        let ss = Float::with_val(prec, i as f64 + 0.5) / ng as u32;
        let tt = Float::with_val(prec, j as f64 + 0.5) / ng as u32;
        let z = Complex::with_val(prec, &tau * &tt) + &ss;
        let v = b.eval(&z)?;
        let pt = Pt { a: ss, b: tt };
        let w = (b.log_weight(s, &z) + s.conf_value(&pt) - &s.log_norm).exp();
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for c in 0..n {
                out.push(Complex::with_val(prec, &v[a] * v[c].clone().conj()) * &w);
            }
        }
        Ok(out)
    };
    let merge = |x: Result<Vec<Complex>>, y: Result<Vec<Complex>>| -> Result<Vec<Complex>> {
        let mut x = x?;
        for (a, b) in x.iter_mut().zip(y?) {
            *a += b;
        }
        Ok(x)
    };
    let sums = mp::tree_reduce(0, ng * ng, &leaf, &merge)?;
    // dv = ω^X / 2π, cell area 1/ng² in ω0
    let scale = Float::with_val(prec, &s.consts.two_pi * (ng * ng) as u32);
    let mut g = CMat::zeros(n, n, prec);
    for a in 0..n {
        for c in 0..n {
            *g.at_mut(a, c) = Complex::with_val(prec, &sums[a * n + c] / &scale);
        }
    }
    Ok((g, ng * ng))
}

fn gram_at(b: &SectionBasis, s: &SurfaceScenario, level: u32) -> Result<(CMat, usize)> {
    match (b.kind, s.surface) {
        (BasisKind::Monomial, Surface::Sphere) => gram_sphere_at(b, s, level),
        (BasisKind::Weierstrass | BasisKind::Theta, Surface::Torus) => gram_torus_at(b, s, level),
        _ => Err(Error::Domain("basis and scenario live on different surfaces".into())),
    }
}

fn relative_change(a: &CMat, b: &CMat) -> f64 {
    let n = a.rows;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let d = mp::cabs(&Complex::with_val(a.prec(), a.at(i, j) - b.at(i, j)));
            let sc = Float::with_val(a.prec(), b.at(i, i).real() * b.at(j, j).real()).sqrt();
            worst = worst.max(Float::with_val(a.prec(), d / sc).to_f64());
        }
    }
    worst
}

fn finish_gram(mat: CMat, prec: u32, error_estimate: f64, nodes: usize) -> Result<GramMatrix> {
    let n = mat.rows;
    let mut log_diag = Vec::with_capacity(n);
    for i in 0..n {
        let d = mat.at(i, i).real();
        if *d <= 0 {
            return Err(Error::Numerical(format!("Gram diagonal entry {i} is not positive")));
        }
        log_diag.push(Float::with_val(prec, d.ln_ref()).to_f64());
    }
    let h = mat.hermitian_defect();
    if h > 10f64.powf(-(prec as f64 / mp::LOG2_10) + 6.0) {
        return Err(Error::Numerical(format!("Gram matrix not Hermitian (defect {h:.2e})")));
    }
    Ok(GramMatrix { mat, prec, error_estimate: error_estimate.max(rounding(prec, 1.0)), log_diag, nodes })
}

/// Gram matrix by quadrature at `level`, with the error estimated against `level + 1`.
pub fn gram(b: &SectionBasis, s: &SurfaceScenario, level: u32) -> Result<GramMatrix> {
    if b.prec != s.prec {
        return Err(Error::Domain("basis and scenario precision differ".into()));
    }
    let (g0, _) = gram_at(b, s, level)?;
    let (g1, nodes) = gram_at(b, s, level + 1)?;
    let err = relative_change(&g0, &g1);
    finish_gram(g1, s.prec, err, nodes)
}

/// Closed-form Gram of the sphere monomials for the unperturbed weight:
/// `diag(B(j+1, p+1-j)/2π)`.
pub fn gram_sphere_closed(p: u32, prec: u32) -> Result<GramMatrix> {
    let n = p as usize + 1;
    let c = mp::Consts::new(prec);
    let mut m = CMat::zeros(n, n, prec);
    for j in 0..n {
        let v = (mp::ln_beta_int(prec, j as u64 + 1, (p as usize + 1 - j) as u64) - &c.ln_two_pi).exp();
        *m.at_mut(j, j) = Complex::with_val(prec, v);
    }
    finish_gram(m, prec, 0.0, 0)
}

/// Closed-form Gram of the flat theta basis: `diag(1/(2π sqrt(2p Im τ)))`.
pub fn gram_flat_theta(p: u32, s: &SurfaceScenario) -> Result<GramMatrix> {
    if !s.is_flat_prequantized() || !is_unperturbed(s) {
        return Err(Error::Unsupported("closed-form theta Gram needs the flat torus".into()));
    }
    let prec = s.prec;
    let n = p as usize;
    let imt = s.elliptic().modulus.im();
    let d = Float::with_val(prec, imt * (2 * p)).sqrt() * &s.consts.two_pi;
    let v = d.recip();
    let mut m = CMat::zeros(n, n, prec);
    for j in 0..n {
        *m.at_mut(j, j) = Complex::with_val(prec, &v);
    }
    finish_gram(m, prec, 0.0, 0)
}

/// `log det` by pre-scaled Cholesky.
pub fn logdet(g: &GramMatrix) -> Result<LogDet> {
    let c = cholesky_logdet(&g.mat)?;
    Ok(LogDet { value: c.logdet, loss_digits: c.loss_digits })
}

// ---------------------------------------------------------------------------
// log Z_p

/// Canonical basis of `H⁰(X, L^p)` for the scenario.
pub fn canonical_basis(p: u32, s: &SurfaceScenario) -> Result<SectionBasis> {
    match s.surface {
        Surface::Sphere => Ok(basis_g0(p, s.prec)),
        Surface::Torus => basis_g1_weierstrass(p, s.elliptic.clone().expect("torus scenario")),
    }
}

fn resolve_route(route: Route, s: &SurfaceScenario) -> Route {
    match route {
        Route::Auto => match s.surface {
            Surface::Sphere if is_unperturbed(s) => Route::ClosedForm,
            Surface::Sphere => Route::Quadrature,
            Surface::Torus => Route::Transition,
        },
        r => r,
    }
}

/// `log Z_p` split into `log det Gram` and the normalisation, at the
/// scenario's precision.
pub fn log_partition_parts(p: u32, s: &SurfaceScenario, route: Route, level: u32) -> Result<PartitionParts> {
    if s.surface == Surface::Torus && p == 0 {
        return Err(Error::Domain("H⁰(L⁰) on the torus has no canonical element here; need p ≥ 1".into()));
    }
    let prec = s.prec;
    let route = resolve_route(route, s);
    let normalization = normalization_log_abs2(s, p);
    let (log_det, error, nodes, loss) = match route {
        Route::ClosedForm => {
            if s.surface != Surface::Sphere || !is_unperturbed(s) {
                return Err(Error::Unsupported("closed form exists only for the unperturbed sphere".into()));
            }
            let g = gram_sphere_closed(p, prec)?;
            let ld = logdet(&g)?;
            let e = rounding(prec, ld.value.to_f64());
            (ld.value, e, 0, ld.loss_digits)
        }
        Route::Quadrature => {
            let b = canonical_basis(p, s)?;
            let g = gram(&b, s, level)?;
            let ld = logdet(&g)?;
            // first-order propagation of entrywise relative errors
            let e = g.error_estimate * b.dim() as f64 * 10f64.powf(ld.loss_digits) + rounding(prec, ld.value.to_f64());
            (ld.value, e, g.nodes, ld.loss_digits)
        }
        Route::Transition => {
            if s.surface != Surface::Torus {
                return Err(Error::Unsupported("the theta-frame route is for the torus".into()));
            }
            let e = s.elliptic.clone().expect("torus scenario");
            let w = basis_g1_weierstrass(p, e.clone())?;
            let th = basis_g1_theta(p, e)?;
            let t = transition_matrix(&w, &th)?;
            let g = if is_unperturbed(s) { gram_flat_theta(p, s)? } else { gram(&th, s, level)? };
            let ld = logdet(&g)?;
            let v = Float::with_val(prec, &t.log_det_abs2 + &ld.value);
            let err = t.residual * p as f64 * 4.0
                + g.error_estimate * p as f64 * 10f64.powf(ld.loss_digits)
                + rounding(prec, v.to_f64());
            (v, err, g.nodes, ld.loss_digits)
        }
        Route::Auto => unreachable!(),
    };
    Ok(PartitionParts { log_det, normalization, method: route, error, nodes, loss_digits: loss })
}

/// `log Z_p` at the scenario's own precision.
pub fn log_partition_at(p: u32, s: &SurfaceScenario, route: Route, level: u32) -> Result<LogPartitionPoint> {
    let parts = log_partition_parts(p, s, route, level)?;
    let v = Float::with_val(s.prec, &parts.log_det + &parts.normalization);
    if !v.is_finite() {
        return Err(Error::Numerical(format!("log Z_{p} is not finite")));
    }
    Ok(LogPartitionPoint {
        p,
        n_p: dimension(s.genus(), p),
        log_z: v.to_f64(),
        method: parts.method.tag(),
        precision_bits: s.prec,
        quad_nodes: parts.nodes,
        est_error: parts.error,
        log_z_exact: v,
    })
}

/// Default working digits for `log Z_p`.
pub fn default_digits(p: u32) -> u32 {
    30 + 2 * p
}

/// `log Z_p` for a configuration, building the scenario at the working
/// precision and raising it when the Cholesky factorisation loses more than
/// half of the digits.
pub fn log_partition(p: u32, cfg: &ScenarioConfig, opts: &PartitionOptions) -> Result<LogPartitionPoint> {
    let mut digits = opts.digits.unwrap_or_else(|| default_digits(p));
    for _ in 0..4 {
        let prec = mp::digits_to_bits(digits);
        let s = build_scenario(cfg, prec)?;
        match log_partition_parts(p, &s, opts.route, opts.level) {
            Ok(parts) if parts.loss_digits <= digits as f64 / 2.0 => {
                let v = Float::with_val(prec, &parts.log_det + &parts.normalization);
                return Ok(LogPartitionPoint {
                    p,
                    n_p: dimension(s.genus(), p),
                    log_z: v.to_f64(),
                    method: parts.method.tag(),
                    precision_bits: prec,
                    quad_nodes: parts.nodes,
                    est_error: parts.error,
                    log_z_exact: v,
                });
            }
            Ok(_) | Err(Error::Numerical(_)) => digits = digits * 3 / 2,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Precision(format!("precision insufficient: log Z_{p} still ill-conditioned at {digits} digits")))
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracle

/// Derivatives `℘^{(0..=kmax)}(z)` in double precision via the log-θ1 Taylor series.
fn weier_p_derivs_f64(e: &EllipticF64, z: Complex64, kmax: usize) -> Vec<Complex64> {
    use std::f64::consts::PI;
    let kk = kmax + 2;
    let i = Complex64::i();
    let imt = e.tau.im;
    let centre = (-z.im / imt - 0.5).round() as i64;
    let span = (40.0 / (PI * imt)).sqrt() as i64 + 6;
    let mut t = vec![Complex64::new(0.0, 0.0); kk + 1];
    for n in centre - span..=centre + span {
        let q = n as f64 + 0.5;
        let base = (i * PI * e.tau * q * q + 2.0 * i * PI * q * (z + 0.5)).exp();
        let d = 2.0 * i * PI * q;
        let mut term = base;
        for (k, tk) in t.iter_mut().enumerate() {
            if k > 0 {
                term = term * d / k as f64;
            }
            *tk += term;
        }
    }
    // log series: q = t/t0, k l_k = k q_k - Σ_{j<k} j l_j q_{k-j}
    let qv: Vec<Complex64> = t.iter().map(|x| x / t[0]).collect();
    let mut l = vec![Complex64::new(0.0, 0.0); kk + 1];
    for k in 1..=kk {
        let mut acc = qv[k] * k as f64;
        for j in 1..k {
            acc -= l[j] * qv[k - j] * j as f64;
        }
        l[k] = acc / k as f64;
    }
    let mut out = Vec::with_capacity(kmax + 1);
    let mut fact = 2.0;
    for j in 0..=kmax {
        let mut v = -l[j + 2] * fact;
        if j == 0 {
            v -= 2.0 * e.eta1;
        }
        out.push(v);
        fact *= (j + 3) as f64;
    }
    out
}

fn det_small(a: &[Vec<Complex64>]) -> Complex64 {
    let n = a.len();
    match n {
        0 => Complex64::new(1.0, 0.0),
        1 => a[0][0],
        _ => {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..n {
                let minor: Vec<Vec<Complex64>> =
                    a[1..].iter().map(|r| r.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| *v).collect()).collect();
                let s = if c % 2 == 0 { 1.0 } else { -1.0 };
                acc += a[0][c] * det_small(&minor) * s;
            }
            acc
        }
    }
}

/// `(f(z), log h^p(z) + log(ω^X/ω0))` for one uniform `ω0` sample.
fn sample_point(p: u32, s: &ScenarioF64, rng: &mut ChaCha8Rng) -> (Vec<Complex64>, f64) {
    use std::f64::consts::PI;
    let pf = p as f64;
    match s.surface {
        Surface::Sphere => {
            let u: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let r = ((1.0 - u) / (1.0 + u)).sqrt();
            let w = Complex64::from_polar(r, phi);
            let mut v = Vec::with_capacity(p as usize + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=p {
                v.push(acc);
                acc *= w;
            }
            let lw = pf * (((1.0 + u) / 2.0).ln() - s.psi(u, phi)) + s.conf(u, phi) - s.log_norm;
            (v, lw)
        }
        Surface::Torus => {
            let e = s.elliptic.as_ref().expect("torus");
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let z = e.tau * b + a;
            let sig = e.sigma(z).powu(p);
            let mut v = vec![sig];
            if p >= 2 {
                let d = weier_p_derivs_f64(e, z, p as usize - 2);
                let mut fact = 1.0;
                for k in 1..p as usize {
                    fact *= k as f64;
                    let sg = if k % 2 == 0 { -1.0 } else { 1.0 };
                    v.push(d[k - 1] / fact * sg * sig);
                }
            }
            let lw = pf * (-2.0 * (e.eta1 * z * z).re - 2.0 * PI * z.im * z.im / e.tau.im - s.psi(a, b)) + s.conf(a, b)
                - s.log_norm;
            (v, lw)
        }
    }
}

/// Monte-Carlo estimate of `Z_p = (1/k!) ∫ |det s(z_i)|² dv^k` from
/// `n_samples` i.i.d. draws of `k` points, uniform for `ω0` and reweighted by
/// `ω^X/ω0`. Returns the estimate and its standard error.
pub fn mc_partition_oracle(p: u32, s: &SurfaceScenario, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be positive".into()));
    }
    let k = dimension(s.genus(), p);
    if k == 0 || k > 4 {
        return Err(Error::Domain(format!("Monte-Carlo oracle needs 1 ≤ N_p ≤ 4, got {k}")));
    }
    let sf = ScenarioF64::from(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for it in 0..n_samples {
        let mut rows = Vec::with_capacity(k);
        let mut lw = 0.0;
        for _ in 0..k {
            let (v, w) = sample_point(p, &sf, &mut rng);
            rows.push(v);
            lw += w;
        }
        let x = det_small(&rows).norm_sqr() * lw.exp();
        // Welford
        let d = x - mean;
        mean += d / (it + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = if n_samples > 1 { m2 / (n_samples - 1) as f64 } else { 0.0 };
    let kf: f64 = (1..=k).map(|i| i as f64).product();
    let scale = normalization_log_abs2(s, p).to_f64().exp() / kf / (2.0 * std::f64::consts::PI).powi(k as i32);
    Ok((mean * scale, (var / n_samples as f64).sqrt() * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mode;

    const P100: u32 = 340;

    fn sphere(prec: u32) -> SurfaceScenario {
        build_scenario(&ScenarioConfig::sphere(), prec).unwrap()
    }

    fn torus(re: f64, im: f64, prec: u32) -> SurfaceScenario {
        build_scenario(&ScenarioConfig::torus(re, im), prec).unwrap()
    }

    #[test]
    fn sphere_p1_gram_entries() {
        let g = gram_sphere_closed(1, 128).unwrap();
        let want = 1.0 / (4.0 * std::f64::consts::PI);
        for j in 0..2 {
            assert!((g.mat.at(j, j).real().to_f64() - want).abs() < 1e-16);
        }
        let ld = logdet(&g).unwrap().value.to_f64();
        assert!((ld + 2.0 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn identity_logdet_zero() {
        let g = finish_gram(CMat::identity(5, 128), 128, 0.0, 0).unwrap();
        assert_eq!(logdet(&g).unwrap().value, 0);
    }

    // Bareiss elimination over the integers
    fn exact_det(a: &[Vec<i64>]) -> rug::Integer {
        use rug::Integer;
        let n = a.len();
        let mut m: Vec<Vec<Integer>> = a.iter().map(|r| r.iter().map(|&x| Integer::from(x)).collect()).collect();
        let mut prev = Integer::from(1);
        for k in 0..n - 1 {
            assert!(m[k][k] != 0);
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = Integer::from(&m[i][j] * &m[k][k]) - Integer::from(&m[i][k] * &m[k][j]);
                    m[i][j] = v / &prev;
                }
            }
            prev = m[k][k].clone();
        }
        m[n - 1][n - 1].clone()
    }

    #[test]
    fn logdet_matches_exact_integer_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prec = mp::digits_to_bits(60);
        for _ in 0..20 {
            let n = rng.random_range(2..9usize);
            let b: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-9..10)).collect()).collect();
            // BᵀB + I is symmetric positive definite
            let a: Vec<Vec<i64>> = (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| b[k][i] * b[k][j]).sum::<i64>() + (i == j) as i64).collect())
                .collect();
            let rows = a.iter().map(|r| r.iter().map(|&x| mp::cx(prec, x as f64, 0.0)).collect()).collect();
            let g = finish_gram(CMat::from_rows(rows), prec, 0.0, 0).unwrap();
            let got = logdet(&g).unwrap().value;
            let want = Float::with_val(prec, &exact_det(&a)).ln();
            assert!((got - want).abs().to_f64() < 1e-54);
        }
    }

    #[test]
    fn sphere_quadrature_matches_closed_form() {
        let s = sphere(P100);
        for p in [1u32, 5, 12] {
            let b = basis_g0(p, P100);
            let g = gram(&b, &s, 0).unwrap();
            let c = gram_sphere_closed(p, P100).unwrap();
            assert!(g.error_estimate < 1e-20, "p={p} err {}", g.error_estimate);
            let d = (logdet(&g).unwrap().value - logdet(&c).unwrap().value).abs().to_f64();
            assert!(d < 1e-20, "p={p} diff {d:e}");
            // rotation symmetry: off-diagonal entries vanish
            for i in 0..g.mat.rows {
                for j in 0..g.mat.rows {
                    if i != j {
                        assert!(mp::cabs(g.mat.at(i, j)).to_f64() < 1e-40);
                    }
                }
            }
        }
    }

    #[test]
    fn flat_theta_gram_by_quadrature() {
        let prec = 200;
        for (re, im) in [(0.0, 1.0), (0.3, 1.2)] {
            let s = torus(re, im, prec);
            for p in [1u32, 3, 5] {
                let th = basis_g1_theta(p, s.elliptic.clone().unwrap()).unwrap();
                let g = gram(&th, &s, 0).unwrap();
                let c = gram_flat_theta(p, &s).unwrap();
                let d = relative_change(&g.mat, &c.mat);
                assert!(d < 1e-12, "τ={re}+{im}i p={p}: {d:e}");
            }
        }
    }

    #[test]
    fn torus_routes_agree() {
        for (re, im) in [(0.0, 1.0), (0.3, 1.2)] {
            for p in [1u32, 2, 4, 8, 12] {
                let prec = mp::digits_to_bits(default_digits(p));
                let s = torus(re, im, prec);
                let q = log_partition_at(p, &s, Route::Quadrature, 0).unwrap();
                let t = log_partition_at(p, &s, Route::Transition, 0).unwrap();
                let d = (q.log_z_exact.clone() - &t.log_z_exact).abs().to_f64();
                assert!(d <= q.est_error + t.est_error, "τ={re}+{im}i p={p}: {d:e} vs {} + {}", q.est_error, t.est_error);
                assert!(d < 1e-12, "p={p}: {d:e}");
            }
        }
    }

    #[test]
    fn torus_p1_is_sigma_norm() {
        let prec = 200;
        let s = torus(0.0, 1.0, prec);
        let b = basis_g1_weierstrass(1, s.elliptic.clone().unwrap()).unwrap();
        let g = gram(&b, &s, 0).unwrap();
        let lz = log_partition_at(1, &s, Route::Transition, 0).unwrap();
        let want = g.mat.at(0, 0).real().clone().ln() + normalization_log_abs2(&s, 1);
        assert!((lz.log_z_exact - want).abs().to_f64() < 1e-30);
    }

    #[test]
    fn normalization_covariance_exact() {
        let mut cfg = ScenarioConfig::sphere();
        let p = 6u32;
        let a = log_partition(p, &cfg, &PartitionOptions::default()).unwrap();
        cfg.s_d_l = [0.5, -1.5];
        let b = log_partition(p, &cfg, &PartitionOptions::default()).unwrap();
        let prec = a.precision_bits;
        let c2 = mp::fl(prec, 0.25) + mp::fl(prec, 2.25);
        let want = c2.ln() * (p * (p + 1) / 2);
        let got = b.log_z_exact - &a.log_z_exact;
        assert!((got - want).abs().to_f64() < 1e-60);
    }

    #[test]
    fn refinement_is_monotone_within_bars() {
        let mut cfg = ScenarioConfig::sphere();
        cfg.psi = vec![Mode { a: 2, b: 1, sin: false, coef: 0.02 }, Mode { a: 1, b: 0, sin: false, coef: 0.03 }];
        let s = build_scenario(&cfg, 200).unwrap();
        let vals: Vec<LogPartitionPoint> = (0..3).map(|l| log_partition_at(6, &s, Route::Quadrature, l).unwrap()).collect();
        for w in vals.windows(2) {
            let d = (w[0].log_z_exact.clone() - &w[1].log_z_exact).abs().to_f64();
            assert!(d <= w[0].est_error.max(1e-50), "{d:e} vs {}", w[0].est_error);
        }
    }

    #[test]
    fn perturbed_gram_is_hermitian_positive() {
        let mut cfg = ScenarioConfig::torus(0.3, 1.2);
        cfg.psi = vec![Mode { a: 1, b: 1, sin: false, coef: 0.01 }];
        cfg.conformal = vec![Mode { a: 0, b: 1, sin: true, coef: 0.1 }];
        let s = build_scenario(&cfg, 160).unwrap();
        let th = basis_g1_theta(3, s.elliptic.clone().unwrap()).unwrap();
        let g = gram(&th, &s, 0).unwrap();
        assert!(g.mat.hermitian_defect() < 1e-40);
        assert!(logdet(&g).is_ok());
        let q = log_partition_at(3, &s, Route::Quadrature, 0).unwrap();
        let t = log_partition_at(3, &s, Route::Transition, 0).unwrap();
        assert!((q.log_z - t.log_z).abs() < 1e-12);
    }

    #[test]
    fn mc_rejects_zero_samples() {
        let s = sphere(64);
        assert!(mc_partition_oracle(1, &s, 0, 1).is_err());
    }

    #[test]
    fn mc_matches_gram_small() {
        let s = sphere(128);
        let z = log_partition_at(1, &s, Route::ClosedForm, 0).unwrap().log_z.exp();
        let (m, se) = mc_partition_oracle(1, &s, 200_000, 7).unwrap();
        assert!((m - z).abs() < 4.0 * se, "{m} ± {se} vs {z}");
        let s = torus(0.0, 1.0, 128);
        let z = log_partition_at(2, &s, Route::Transition, 0).unwrap().log_z.exp();
        let (m, se) = mc_partition_oracle(2, &s, 200_000, 7).unwrap();
        assert!((m - z).abs() < 4.0 * se, "{m} ± {se} vs {z}");
    }

    #[test]
    fn weierstrass_f64_matches_mp() {
        let s = torus(0.3, 1.2, 128);
        let e = s.elliptic();
        let ef = EllipticF64::from(e);
        let z = Complex64::new(0.31, 0.42);
        let d = weier_p_derivs_f64(&ef, z, 3);
        let zm = mp::cx(128, 0.31, 0.42);
        let dm = e.weier_p_derivs(&zm, 3).unwrap();
        for k in 0..4 {
            let w = Complex64::new(dm[k].real().to_f64(), dm[k].imag().to_f64());
            assert!((d[k] - w).norm() < 1e-9 * w.norm().max(1.0), "k={k}");
        }
    }
}
