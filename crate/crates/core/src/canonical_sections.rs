//! Explicit bases whose wedge is the canonical element `s_p`.
//!
//! Sphere: sections `w^j`, `j = 0..=p`, in the chart `w = y/x`, trivialised by
//! the frame `y^p` of `O(p)` near D.
//!
//! Torus: the Weierstrass basis
//! `1, ℘, -℘'/2, …, (-1)^p ℘^{(p-2)}/(p-1)!` times `σ^p`, and the level-p theta
//! basis `e^{pη1 z²} θ_{½+j/p, p/2, pτ}(pz)`, both in the trivialisation in
//! which `s_D = σ` (so `∂s_D(∂z) = 1` at D).

use std::sync::Arc;

use rug::{Complex, Float};

use crate::geometry::{Pt, Surface, SurfaceScenario};
use crate::linalg::{det_leibniz, lu, CMat};
use crate::mp;
use crate::special_functions::{theta, theta_taylor, Elliptic};
use crate::{Error, Result};

/// Points closer than this to the lattice are rejected.
pub const LATTICE_GUARD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// `w^j` on the sphere.
    Monomial,
    /// `{1, ℘, …} σ^p` on the torus.
    Weierstrass,
    /// Level-p theta functions on the torus.
    Theta,
}

#[derive(Clone, Debug)]
pub struct SectionBasis {
    pub p: u32,
    pub kind: BasisKind,
    pub prec: u32,
    pub elliptic: Option<Arc<Elliptic>>,
    /// Human-readable trivialisation descriptor.
    pub trivialization: &'static str,
}

/// `dim H⁰(X, L^p) = 1 - g + p` for `deg L = 1`, trivial E.
pub fn dimension(genus: u8, p: u32) -> usize {
    (1 + p as i64 - genus as i64).max(0) as usize
}

pub fn basis_g0(p: u32, prec: u32) -> SectionBasis {
    SectionBasis { p, kind: BasisKind::Monomial, prec, elliptic: None, trivialization: "frame y^p on the chart w = y/x" }
}

pub fn basis_g1_weierstrass(p: u32, e: Arc<Elliptic>) -> Result<SectionBasis> {
    if p == 0 {
        return Err(Error::Domain("the Weierstrass basis needs p ≥ 1".into()));
    }
    Ok(SectionBasis { p, kind: BasisKind::Weierstrass, prec: e.prec, elliptic: Some(e), trivialization: "sigma^p, s_D = sigma" })
}

pub fn basis_g1_theta(p: u32, e: Arc<Elliptic>) -> Result<SectionBasis> {
    if p == 0 {
        return Err(Error::Domain("the theta basis needs p ≥ 1".into()));
    }
    Ok(SectionBasis { p, kind: BasisKind::Theta, prec: e.prec, elliptic: Some(e), trivialization: "sigma^p, s_D = sigma" })
}

impl SectionBasis {
    pub fn genus(&self) -> u8 {
        match self.kind {
            BasisKind::Monomial => 0,
            _ => 1,
        }
    }

    pub fn dim(&self) -> usize {
        dimension(self.genus(), self.p)
    }

    fn ell(&self) -> &Elliptic {
        self.elliptic.as_deref().expect("torus basis")
    }

    fn check_point(&self, z: &Complex) -> Result<()> {
        if self.kind != BasisKind::Monomial {
            let d = self.ell().lattice_distance(z).to_f64();
            if d < LATTICE_GUARD {
                return Err(Error::Domain(format!("point within {d:.1e} of the lattice")));
            }
        }
        Ok(())
    }

    /// Values of all sections at z in the basis trivialisation.
    pub fn eval(&self, z: &Complex) -> Result<Vec<Complex>> {
        let prec = self.prec;
        let p = self.p as usize;
        match self.kind {
            BasisKind::Monomial => {
                let mut out = Vec::with_capacity(p + 1);
                let mut w = mp::cone(prec);
                for _ in 0..=p {
                    out.push(w.clone());
                    w *= z;
                }
                Ok(out)
            }
            BasisKind::Weierstrass => {
                self.check_point(z)?;
                let e = self.ell();
                let sp = mp::cpow_i(&e.weier_sigma(z), p as i32);
                let mut out = Vec::with_capacity(p);
                out.push(sp.clone());
                if p >= 2 {
                    let d = e.weier_p_derivs(z, p - 2)?;
                    let mut fact = Float::with_val(prec, 1);
                    for k in 1..p {
                        fact *= k as u32; // k!
                        let mut v = Complex::with_val(prec, &d[k - 1] / &fact);
                        if k % 2 == 0 {
                            v = -v;
                        }
                        out.push(v * &sp);
                    }
                }
                Ok(out)
            }
            BasisKind::Theta => {
                self.check_point(z)?;
                let e = self.ell();
                let pf = self.p;
                let ptau = Complex::with_val(prec, e.tau() * pf);
                let pz = Complex::with_val(prec, z * pf);
                let b = Float::with_val(prec, pf) / 2u32;
                let gauss = Complex::with_val(prec, &e.eta1 * Complex::with_val(prec, z.square_ref())) * pf;
                let g = gauss.exp();
                (0..p)
                    .map(|j| {
                        let a = Float::with_val(prec, j as u32) / pf + 0.5f64;
                        let t = theta(&a, &b, &ptau, &pz, prec)?;
                        Ok(t * &g)
                    })
                    .collect()
            }
        }
    }

    /// `log h^p` at the point in this trivialisation (the factor turning
    /// `|f(z)|²` into the pointwise norm).
    pub fn log_weight(&self, s: &SurfaceScenario, z: &Complex) -> Float {
        let prec = self.prec;
        let pf = self.p;
        match self.kind {
            BasisKind::Monomial => {
                let r2 = mp::abs2(z);
                let u = Float::with_val(prec, 1 - &r2) / Float::with_val(prec, 1 + &r2);
                let phi = Float::with_val(prec, z.imag()).atan2(z.real());
                let psi = s.psi_value(&Pt { a: u, b: phi });
                (-Float::with_val(prec, 1 + &r2).ln() - psi) * pf
            }
            _ => {
                let e = self.ell();
                let (st, _) = torus_coords(e, z);
                let z2 = Complex::with_val(prec, z.square_ref());
                let re = Float::with_val(prec, Complex::with_val(prec, &e.eta1 * &z2).real()) * 2u32;
                let y = Float::with_val(prec, z.imag());
                let gauss = Float::with_val(prec, y.square_ref()) * &s.consts.two_pi / e.modulus.im();
                (-re - gauss - s.psi_value(&st)) * pf
            }
        }
    }
}

/// `(s, t)` with `z = s + tτ`, reduced to `[0,1)²`, plus the unreduced pair.
pub fn torus_coords(e: &Elliptic, z: &Complex) -> (Pt, (Float, Float)) {
    let prec = e.prec;
    let t = Float::with_val(prec, z.imag()) / e.modulus.im();
    let s = Float::with_val(prec, z.real()) - Float::with_val(prec, &t * e.tau().real());
    let red = |x: &Float| -> Float {
        let f = Float::with_val(prec, x.floor_ref());
        Float::with_val(prec, x - f)
    };
    (Pt { a: red(&s), b: red(&t) }, (s, t))
}

// ---------------------------------------------------------------------------
// Slater determinants

#[derive(Clone, Debug)]
pub struct SlaterValue {
    pub value: Complex,
    /// `log h^p(z_i)` per point; `|det|² Π e^{w_i}` is the pointwise norm.
    pub log_weights: Vec<Float>,
}

impl SlaterValue {
    /// `log(|det|² Π h^p(z_i))`.
    pub fn log_norm2(&self) -> Float {
        let prec = self.value.prec().0;
        let mut v = mp::abs2(&self.value).ln();
        for w in &self.log_weights {
            v += w;
        }
        Float::with_val(prec, v)
    }
}

/// Evaluation matrix `A[i][k] = f_k(z_i)`.
pub fn evaluation_matrix(b: &SectionBasis, points: &[Complex]) -> Result<CMat> {
    let rows: Result<Vec<Vec<Complex>>> = points.iter().map(|z| b.eval(z)).collect();
    Ok(CMat::from_rows(rows?))
}

fn det_of(a: &CMat) -> Result<Complex> {
    if a.rows <= 6 {
        Ok(det_leibniz(a))
    } else {
        match lu(a) {
            Ok(f) => Ok(f.det()),
            Err(Error::Numerical(_)) => Ok(mp::czero(a.prec())),
            Err(e) => Err(e),
        }
    }
}

/// `det(f_k(z_i))` with the weights needed for its pointwise norm.
pub fn slater(b: &SectionBasis, s: Option<&SurfaceScenario>, points: &[Complex]) -> Result<SlaterValue> {
    if points.len() != b.dim() {
        return Err(Error::Domain(format!("need {} points, got {}", b.dim(), points.len())));
    }
    let a = evaluation_matrix(b, points)?;
    let value = det_of(&a)?;
    let log_weights = match s {
        Some(sc) => points.iter().map(|z| b.log_weight(sc, z)).collect(),
        None => vec![],
    };
    Ok(SlaterValue { value, log_weights })
}

fn rel_residual(a: &Complex, b: &Complex) -> f64 {
    let prec = a.prec().0;
    let d = mp::cabs(&Complex::with_val(prec, a - b));
    let m = mp::cabs(a).max(&mp::cabs(b)).clone();
    let floor = Float::with_val(prec, Float::i_exp(1, -(prec as i32) / 2));
    if m < floor {
        return 0.0;
    }
    Float::with_val(prec, d / m).to_f64()
}

fn check_distinct(e: &Elliptic, points: &[Complex]) -> Result<()> {
    for (i, z) in points.iter().enumerate() {
        if e.lattice_distance(z).to_f64() < LATTICE_GUARD {
            return Err(Error::Domain("point on or near the lattice".into()));
        }
        for w in &points[..i] {
            let d = Complex::with_val(e.prec, z - w);
            if e.lattice_distance(&d).to_f64() < LATTICE_GUARD {
                return Err(Error::Domain("coincident points modulo the lattice".into()));
            }
        }
    }
    Ok(())
}

/// `σ(z1+…+zp) Π_{i<j} σ(z_i - z_j)`.
pub fn sigma_product(e: &Elliptic, points: &[Complex]) -> Complex {
    let prec = e.prec;
    let mut sum = mp::czero(prec);
    for z in points {
        sum += z;
    }
    let mut v = e.weier_sigma(&sum);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            v *= e.weier_sigma(&Complex::with_val(prec, &points[i] - &points[j]));
        }
    }
    v
}

/// Relative residual between the Weierstrass Slater determinant in the
/// σ^p trivialisation and the σ-product.
pub fn fay_residual(p: u32, e: Arc<Elliptic>, points: &[Complex]) -> Result<f64> {
    if p < 2 {
        return Err(Error::Domain("the identity is stated for p ≥ 2".into()));
    }
    check_distinct(&e, points)?;
    let b = basis_g1_weierstrass(p, e.clone())?;
    let lhs = slater(&b, None, points)?.value;
    let rhs = sigma_product(&e, points);
    Ok(rel_residual(&lhs, &rhs))
}

/// Relative residual of the translated σ-product against the theta
/// expression `-i^p e^{iπτp²/4} θ1'(0)^{-1-p(p-1)/2} θ_{(p-1)/2,(p-1)/2}(Σz) Π θ1(z_i - z_j)`.
pub fn ecxa_residual(p: u32, e: Arc<Elliptic>, points: &[Complex]) -> Result<f64> {
    if points.len() != p as usize || p == 0 {
        return Err(Error::Domain("need p ≥ 1 points".into()));
    }
    let prec = e.prec;
    let shift = Complex::with_val(prec, e.tau() + 1u32) / 2u32;
    let moved: Vec<Complex> = points.iter().map(|z| Complex::with_val(prec, z + &shift)).collect();
    check_distinct(&e, &moved)?;
    // left side: first step (gauge factor) then the shift
    let mut lhs = sigma_product(&e, &moved);
    let pi = mp::pi(prec);
    let ipi = mp::i_times(prec, &pi);
    for z in &moved {
        let q = Complex::with_val(prec, &e.eta1 * Complex::with_val(prec, z.square_ref())) * p;
        let l = Complex::with_val(prec, &ipi * z) * p;
        lhs *= (l - q).exp();
    }
    // right side
    let half = Float::with_val(prec, 0.5);
    let c = Float::with_val(prec, p - 1) / 2u32;
    let mut sum = mp::czero(prec);
    for z in points {
        sum += z;
    }
    let mut rhs = theta(&c, &c, e.tau(), &sum, prec)?;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            rhs *= theta(&half, &half, e.tau(), &Complex::with_val(prec, &points[i] - &points[j]), prec)?;
        }
    }
    let expo = -1 - (p as i32 - 1) * p as i32 / 2;
    rhs *= mp::cpow_i(&e.theta1_d1, expo);
    let pt = Complex::with_val(prec, &ipi * e.tau()) * (p * p) / 4u32;
    rhs *= pt.exp();
    rhs *= mp::cpow_i(&Complex::with_val(prec, (0, 1)), p as i32);
    rhs = -rhs;
    Ok(rel_residual(&lhs, &rhs))
}

/// Residual of the Λ-periodicity of a Weierstrass-basis section as a section
/// of `L^p`: `f(z+ω) = (-e^{2η(z+ω/2)})^p f(z)` for `ω ∈ {1, τ}`.
pub fn quasi_periodicity_residual(b: &SectionBasis, z: &Complex) -> Result<f64> {
    let e = b.ell();
    let prec = b.prec;
    let mut worst = 0.0f64;
    for (omega, eta) in [(mp::cone(prec), e.eta1.clone()), (e.tau().clone(), e.eta2.clone())] {
        let zs = Complex::with_val(prec, z + &omega);
        let f0 = b.eval(z)?;
        let f1 = b.eval(&zs)?;
        let half = Complex::with_val(prec, &omega / 2u32);
        let arg = Complex::with_val(prec, &eta * Complex::with_val(prec, z + &half)) * 2u32;
        let factor = mp::cpow_i(&(-arg.exp()), b.p as i32);
        for (a, c) in f0.iter().zip(f1.iter()) {
            worst = worst.max(rel_residual(c, &Complex::with_val(prec, a * &factor)));
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// transition matrices

#[derive(Clone, Debug)]
pub struct Transition {
    /// `b1_k = Σ_j M[k][j] b2_j`.
    pub m: CMat,
    /// `log |det M|²`.
    pub log_det_abs2: Float,
    /// Relative residual at fresh points.
    pub residual: f64,
}

/// Collocation nodes spread over the torus at a fixed height, which makes the
/// theta evaluation matrix a scaled discrete Fourier matrix.
pub fn collocation_nodes(e: &Elliptic, n: usize, height: f64, offset: f64) -> Vec<Complex> {
    let prec = e.prec;
    (0..n)
        .map(|i| {
            let s = Float::with_val(prec, i as f64 + offset) / n as u32;
            Complex::with_val(prec, e.tau() * Float::with_val(prec, height)) + s
        })
        .collect()
}

/// Transition matrix with `b1 = M b2` by collocation, checked at fresh points.
pub fn transition_matrix(b1: &SectionBasis, b2: &SectionBasis) -> Result<Transition> {
    if b1.p != b2.p || b1.genus() != b2.genus() {
        return Err(Error::Domain("bases of different spaces".into()));
    }
    let n = b1.dim();
    let prec = b1.prec;
    let (nodes, fresh): (Vec<Complex>, Vec<Complex>) = match b1.kind {
        BasisKind::Monomial => {
            let c = mp::Consts::new(prec);
            let mk = |r: f64, off: f64| -> Vec<Complex> {
                (0..n)
                    .map(|k| {
                        let ang = Float::with_val(prec, &c.two_pi * (k as f64 + off)) / n as u32;
                        let (sn, cs) = ang.sin_cos(Float::new(prec));
                        Complex::with_val(prec, (cs * r, sn * r))
                    })
                    .collect()
            };
            (mk(1.0, 0.1), mk(0.8, 0.45))
        }
        _ => {
            let e = b1.ell();
            (collocation_nodes(e, n, 0.5, 0.25), collocation_nodes(e, n, 0.3, 0.6))
        }
    };
    let mut attempt = 0;
    let (mut a1, mut a2);
    let f2 = loop {
        let shift = Complex::with_val(prec, (0.0, 0.0137 * attempt as f64));
        let pts: Vec<Complex> = nodes.iter().map(|z| Complex::with_val(prec, z + &shift)).collect();
        a1 = evaluation_matrix(b1, &pts)?;
        a2 = evaluation_matrix(b2, &pts)?;
        match lu(&a2) {
            Ok(f) => break f,
            Err(Error::Numerical(_)) if attempt < 3 => attempt += 1,
            Err(e) => return Err(e),
        }
    };
    // Mᵀ = A2^{-1} A1
    let mt = f2.solve(&a1);
    let mut m = CMat::zeros(n, n, prec);
    for i in 0..n {
        for j in 0..n {
            *m.at_mut(i, j) = mt.at(j, i).clone();
        }
    }
    let d1 = lu(&a1)?.log_abs_det();
    let d2 = f2.log_abs_det();
    let log_det_abs2 = Float::with_val(prec, &d1 - &d2) * 2u32;
    // fresh-point residual, relative to the size of b1
    let mut residual = 0.0f64;
    for z in &fresh {
        let v1 = b1.eval(z)?;
        let v2 = b2.eval(z)?;
        let mut scale = Float::new(prec);
        for v in &v1 {
            scale = scale.max(&mp::cabs(v));
        }
        for k in 0..n {
            let mut acc = mp::czero(prec);
            for j in 0..n {
                acc += Complex::with_val(prec, m.at(k, j) * &v2[j]);
            }
            let d = mp::cabs(&Complex::with_val(prec, &v1[k] - &acc));
            residual = residual.max(Float::with_val(prec, d / &scale).to_f64());
        }
    }
    Ok(Transition { m, log_det_abs2, residual })
}

/// `log |κ|²` for the isomorphism relating the integrally normalised `s_0`
/// and `s_D` to the Weierstrass wedge on the torus: `|κ|² = 2π²/Im τ`.
/// Zero on the sphere.
pub fn log_kappa2(s: &SurfaceScenario) -> Float {
    let prec = s.prec;
    match s.surface {
        Surface::Sphere => Float::new(prec),
        Surface::Torus => {
            let pi2 = Float::with_val(prec, s.consts.pi.square_ref()) * 2u32;
            (pi2 / s.elliptic().modulus.im()).ln()
        }
    }
}

/// `log |N_p|²` with `s_p = N_p · (f_1 ∧ … ∧ f_{N_p})`:
/// `log|κ|² + log|c_0|² + p(p+1) log|c_L| + 2p log|c_E|`.
pub fn normalization_log_abs2(s: &SurfaceScenario, p: u32) -> Float {
    let prec = s.prec;
    let l0 = mp::abs2(&s.s0).ln();
    let ll = mp::abs2(&s.s_d_l).ln();
    let le = mp::abs2(&s.s_d_e).ln();
    let pp = Float::with_val(prec, (p as u64 * (p as u64 + 1)) as f64 / 2.0);
    log_kappa2(s) + l0 + ll * pp + le * p
}

/// Consistency of the cached `θ1'(0)` with a fresh Taylor evaluation.
pub fn taylor_theta_derivative_check(e: &Elliptic) -> Result<f64> {
    // θ1'(0) from the series equals the cached value
    let half = Float::with_val(e.prec, 0.5);
    let t = theta_taylor(&half, &half, e.tau(), &mp::czero(e.prec), 1, e.prec)?;
    Ok(rel_residual(&t[1], &e.theta1_d1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special_functions::Modulus;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ell(re: f64, im: f64, prec: u32) -> Arc<Elliptic> {
        Arc::new(Elliptic::new(&Modulus::from_f64(prec, re, im).unwrap(), prec).unwrap())
    }

    fn random_points(e: &Elliptic, n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex> {
        let prec = e.prec;
        loop {
            let pts: Vec<Complex> = (0..n)
                .map(|_| {
                    let (s, t): (f64, f64) = (rng.random(), rng.random());
                    Complex::with_val(prec, e.tau() * Float::with_val(prec, t)) + s
                })
                .collect();
            if check_distinct(e, &pts).is_ok() {
                return pts;
            }
        }
    }

    #[test]
    fn dimensions() {
        for p in 0..=64 {
            assert_eq!(basis_g0(p, 64).dim(), p as usize + 1);
            assert_eq!(dimension(1, p), p as usize);
        }
        let e = ell(0.0, 1.0, 64);
        assert_eq!(basis_g1_weierstrass(5, e.clone()).unwrap().dim(), 5);
        assert!(basis_g1_weierstrass(0, e).is_err());
    }

    #[test]
    fn monomial_slater() {
        let b = basis_g0(1, 128);
        let w1 = mp::cx(128, 0.3, -0.2);
        let w2 = mp::cx(128, -1.1, 0.7);
        let v = slater(&b, None, &[w1.clone(), w2.clone()]).unwrap().value;
        let expect = Complex::with_val(128, &w2 - &w1);
        assert!(rel_residual(&v, &expect) < 1e-35);
        let z = slater(&b, None, &[w1.clone(), w1]).unwrap().value;
        assert!(mp::cabs(&z).to_f64() == 0.0);
        assert_eq!(basis_g0(0, 64).eval(&mp::cx(64, 2.0, 1.0)).unwrap().len(), 1);
    }

    #[test]
    fn vandermonde_lu_path() {
        // p = 8 uses LU; compare with Π (w_j - w_i)
        let b = basis_g0(8, 160);
        let pts: Vec<Complex> = (0..9).map(|k| mp::cx(160, (k as f64 * 0.7).cos() * 0.9, (k as f64 * 1.3).sin())).collect();
        let v = slater(&b, None, &pts).unwrap().value;
        let mut expect = mp::cone(160);
        for i in 0..9 {
            for j in i + 1..9 {
                expect *= Complex::with_val(160, &pts[j] - &pts[i]);
            }
        }
        assert!(rel_residual(&v, &expect) < 1e-40);
    }

    #[test]
    fn p1_is_sigma() {
        let e = ell(0.3, 1.2, 128);
        let b = basis_g1_weierstrass(1, e.clone()).unwrap();
        let z = mp::cx(128, 0.31, 0.42);
        let v = b.eval(&z).unwrap();
        assert!(rel_residual(&v[0], &e.weier_sigma(&z)) < 1e-35);
    }

    #[test]
    fn fay_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (re, im) in [(0.0, 1.0), (0.3, 1.2)] {
            let e = ell(re, im, 170);
            for p in 2..=6u32 {
                let pts = random_points(&e, p as usize, &mut rng);
                let r = fay_residual(p, e.clone(), &pts).unwrap();
                assert!(r < 1e-10, "p={p} τ={re}+{im}i: {r}");
            }
        }
    }

    #[test]
    fn fay_degenerate() {
        let e = ell(0.0, 1.0, 128);
        let z = mp::cx(128, 0.2, 0.3);
        assert!(fay_residual(2, e.clone(), &[z.clone(), z.clone()]).is_err());
        // points summing to a lattice point: both sides vanish
        let w = Complex::with_val(128, -&z) + 1u32;
        let r = fay_residual(2, e, &[z, w]).unwrap();
        assert!(r < 1e-10);
    }

    #[test]
    fn prop_theta_expression() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (re, im) in [(0.0, 1.0), (0.3, 1.2)] {
            let e = ell(re, im, 170);
            for p in 1..=6u32 {
                let pts = random_points(&e, p as usize, &mut rng);
                let r = ecxa_residual(p, e.clone(), &pts).unwrap();
                assert!(r < 1e-10, "p={p}: {r}");
            }
        }
    }

    #[test]
    fn weierstrass_basis_is_a_section() {
        let e = ell(0.3, 1.2, 128);
        for p in [1u32, 3, 6] {
            let b = basis_g1_weierstrass(p, e.clone()).unwrap();
            let r = quasi_periodicity_residual(&b, &mp::cx(128, 0.23, 0.41)).unwrap();
            assert!(r < 1e-12, "p={p}: {r}");
            let t = basis_g1_theta(p, e.clone()).unwrap();
            let r = quasi_periodicity_residual(&t, &mp::cx(128, 0.23, 0.41)).unwrap();
            assert!(r < 1e-12, "theta p={p}: {r}");
        }
    }

    #[test]
    fn pole_orders() {
        // f_k σ^p vanishes to order p-1-k at 0 (k ≥ 1), i.e. f_k ~ z^{-(k+1)}
        let e = ell(0.0, 1.0, 128);
        let p = 5u32;
        let b = basis_g1_weierstrass(p, e.clone()).unwrap();
        let z1 = mp::cx(128, 0.004, 0.003);
        let z2 = Complex::with_val(128, &z1 / 2u32);
        let v1 = b.eval(&z1).unwrap();
        let v2 = b.eval(&z2).unwrap();
        for k in 1..p as usize {
            let ratio = Float::with_val(128, mp::cabs(&v1[k]) / mp::cabs(&v2[k])).to_f64();
            let order = (p as i32) - 1 - k as i32;
            let expect = 2f64.powi(order);
            assert!((ratio / expect - 1.0).abs() < 0.02, "k={k}: {ratio} vs {expect}");
        }
    }

    #[test]
    fn transitions() {
        let e = ell(0.3, 1.2, 200);
        for p in [2u32, 5, 12] {
            let w = basis_g1_weierstrass(p, e.clone()).unwrap();
            let t = basis_g1_theta(p, e.clone()).unwrap();
            let tr = transition_matrix(&w, &t).unwrap();
            assert!(tr.residual < 1e-10, "p={p}: {}", tr.residual);
            let id = transition_matrix(&w, &w).unwrap();
            assert!(id.log_det_abs2.to_f64().abs() < 1e-30);
        }
        // permuted basis (monomials reversed is not a basis of the same
        // ordering): determinant of a permutation has modulus one
        let b = basis_g0(3, 128);
        let tr = transition_matrix(&b, &b).unwrap();
        assert!(tr.residual < 1e-30);
        assert!(taylor_theta_derivative_check(&e).unwrap() < 1e-40);
    }

    #[test]
    fn theta_span_full_rank() {
        let e = ell(0.0, 1.0, 240);
        for p in [8u32, 16, 24] {
            let w = basis_g1_weierstrass(p, e.clone()).unwrap();
            let t = basis_g1_theta(p, e.clone()).unwrap();
            let tr = transition_matrix(&w, &t).unwrap();
            assert!(tr.log_det_abs2.is_finite());
            assert!(tr.residual < 1e-10, "p={p}: {}", tr.residual);
        }
    }
}
