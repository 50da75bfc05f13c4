//! Closed-form coefficients of
//! `log Z_p = a₂p² + b₁ p log p + a₁p + b₀ log p + a₀ + o(1)`
//! for `deg L = 1` and trivial `E` (rank 1, degree 0, flat constant frame).
//!
//! * `a₂ = ½(log|s_D^L|² + ∫c₁(L) log|s_D|²)`
//! * `a₁ = log|s_D^E|² + ½(log|s_D^L|² − log|∂s_D|² − ∫r^L c₁(L)) + ½∫c₁(TX) log|s_D|²`
//! * `b₁ = −½`, `b₀ = −χ/3`
//! * `a₀ = log|s₀|² + 2τ − (ζ'(−1) + log 2π/12 + 7/24) χ` when `r^L ≡ 0`.

use rug::{Float, Rational};
use serde::Serialize;

use crate::canonical_sections::dimension;
use crate::geometry::{build_scenario, Surface, SurfaceScenario};
use crate::mp;
use crate::partition::{default_digits, log_partition_at, Route};
use crate::special_functions::zeta_deriv_minus1;
use crate::torsion::{torsion_lp_flat_torus, torsion_trivial_e};
use crate::{Error, Result};

/// Rank of E and degree of L in every supported scenario.
pub const RANK_E: i64 = 1;
pub const DEG_L: i64 = 1;
pub const DEG_E: i64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Predicted,
    Fitted,
}

/// One absolute error per coefficient.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CoefficientErrors {
    pub a2: f64,
    pub b1: f64,
    pub a1: f64,
    pub b0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionCoefficients {
    pub a2: f64,
    pub b1: f64,
    pub a1: f64,
    pub b0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    pub provenance: Provenance,
    pub errors: CoefficientErrors,
}

/// `b₁ = −½ rk(E) deg(L)`.
pub fn b1_exact() -> Rational {
    Rational::from((-RANK_E * DEG_L, 2))
}

/// `b₀ = −⅓ rk(E) χ − ½ deg(E)`.
pub fn b0_exact(chi: i32) -> Rational {
    Rational::from((-RANK_E * chi as i64, 3)) - Rational::from((DEG_E, 2))
}

/// `ζ'(−1) + log(2π)/12 + 7/24`.
pub fn a0_constant(prec: u32) -> Result<Float> {
    let c = mp::Consts::new(prec);
    Ok(zeta_deriv_minus1(prec)? + Float::with_val(prec, &c.ln_two_pi / 12u32) + Float::with_val(prec, 7) / 24u32)
}

/// Every ingredient of the prediction, at the scenario's precision.
#[derive(Clone, Debug)]
pub struct TermsExact {
    pub log_sdl2: Float,
    pub log_sde2: Float,
    pub log_dsd2: Float,
    pub int_c1l_log_sd2: Float,
    pub int_c1tx_log_sd2: Float,
    pub int_rl_c1l: Float,
    pub log_s0_2: Option<Float>,
    pub two_tau: Option<Float>,
    pub vol_l2: Option<Float>,
    pub a0_constant: Float,
    pub a2: Float,
    pub a1: Float,
    pub a0: Option<Float>,
}

/// The same ingredients for the JSON report.
#[derive(Clone, Debug, Serialize)]
pub struct TermsReport {
    pub log_sdl2: f64,
    pub log_sde2: f64,
    pub log_dsd2: f64,
    pub int_c1l_log_sd2: f64,
    pub int_c1tx_log_sd2: f64,
    pub int_rl_c1l: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_s0_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vol_l2: Option<f64>,
    pub chi: i32,
    pub a0_constant: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    #[serde(flatten)]
    pub coefficients: ExpansionCoefficients,
    pub terms: TermsReport,
    #[serde(skip)]
    pub exact: TermsExact,
}

fn opt(x: &Option<Float>) -> Option<f64> {
    x.as_ref().map(|v| v.to_f64())
}

/// Predicted coefficients; `a₀` only when the scenario is prequantized.
pub fn predict(s: &SurfaceScenario) -> Result<Prediction> {
    let prec = s.prec;
    if !(s.min_curvature > 0.0) {
        return Err(Error::Config("curvature of h^L is not positive".into()));
    }
    let log_sdl2 = s.log_sdl2();
    let log_sde2 = s.log_sde2();
    let log_dsd2 = s.log_dsd2();
    let (il, el) = s.int_c1l_log_sd2()?;
    let (itx, etx) = s.int_c1tx_log_sd2()?;
    let (irl, erl) = s.int_rl_c1l()?;
    let half = |x: Float| x / 2u32;
    let a2 = half(Float::with_val(prec, &log_sdl2 + &il));
    let a1 = Float::with_val(prec, &log_sde2)
        + half(Float::with_val(prec, &log_sdl2 - &log_dsd2) - &irl)
        + half(itx.clone());
    let a0c = a0_constant(prec)?;
    let (log_s0_2, two_tau, vol_l2, a0, e0) = if s.prequantized {
        let vol = s.vol_l2_h1()?;
        let ls0 = s.log_s0_2(&vol);
        let tv = torsion_trivial_e(s)?;
        let tt = Float::with_val(prec, tv.exact.as_ref().expect("exact torsion") * 2u32);
        let a0 = Float::with_val(prec, &ls0 + &tt) - Float::with_val(prec, &a0c * s.chi());
        (Some(ls0), Some(tt), Some(vol), Some(a0), Some(2.0 * tv.error + mp_floor(prec)))
    } else {
        (None, None, None, None, None)
    };
    let coefficients = ExpansionCoefficients {
        a2: a2.to_f64(),
        b1: b1_exact().to_f64(),
        a1: a1.to_f64(),
        b0: b0_exact(s.chi()).to_f64(),
        a0: opt(&a0),
        provenance: Provenance::Predicted,
        errors: CoefficientErrors {
            a2: el / 2.0 + mp_floor(prec),
            b1: 0.0,
            a1: (erl + etx) / 2.0 + mp_floor(prec),
            b0: 0.0,
            a0: e0,
        },
    };
    let terms = TermsReport {
        log_sdl2: log_sdl2.to_f64(),
        log_sde2: log_sde2.to_f64(),
        log_dsd2: log_dsd2.to_f64(),
        int_c1l_log_sd2: il.to_f64(),
        int_c1tx_log_sd2: itx.to_f64(),
        int_rl_c1l: irl.to_f64(),
        log_s0_2: opt(&log_s0_2),
        two_tau: opt(&two_tau),
        vol_l2: opt(&vol_l2),
        chi: s.chi(),
        a0_constant: a0c.to_f64(),
    };
    let exact = TermsExact {
        log_sdl2,
        log_sde2,
        log_dsd2,
        int_c1l_log_sd2: il,
        int_c1tx_log_sd2: itx,
        int_rl_c1l: irl,
        log_s0_2,
        two_tau,
        vol_l2,
        a0_constant: a0c,
        a2,
        a1,
        a0,
    };
    Ok(Prediction { coefficients, terms, exact })
}

fn mp_floor(prec: u32) -> f64 {
    10f64.powf(-(prec as f64 / mp::LOG2_10) + 4.0)
}

/// `a₀ = log((deg L/2π) vol_{L²}^{-1}) + 2τ − (ζ'(−1) + log 2π/12 + 7/24) χ`
/// for the integrally normalised `s₀`; the volume factor is 1 on the sphere.
pub fn predict_a0_corollary(s: &SurfaceScenario) -> Result<Float> {
    if !s.prequantized {
        return Err(Error::Unsupported("a₀ needs a prequantized bundle weight".into()));
    }
    let prec = s.prec;
    let vol = s.vol_l2_h1()?;
    let log_vol = Float::with_val(prec, vol.ln_ref());
    let tv = torsion_trivial_e(s)?;
    let tt = Float::with_val(prec, tv.exact.as_ref().expect("exact torsion") * 2u32);
    let deg = Float::with_val(prec, DEG_L);
    Ok(deg.ln() - &s.consts.ln_two_pi - log_vol + tt - a0_constant(prec)? * s.chi())
}

/// Terms of the Quillen-norm polynomial
/// `log‖σ_p‖^{Q,2} = (p²/2) ∫c₁(L) log|s_D|² + p(½∫c₁(TX) log|s_D|² − ½ log|∂s_D|²)`.
#[derive(Clone, Debug)]
pub struct QuillenPoly {
    /// Coefficient of p².
    pub quad: Float,
    /// Coefficient of p.
    pub lin: Float,
}

impl QuillenPoly {
    pub fn new(s: &SurfaceScenario) -> Result<Self> {
        let (il, _) = s.int_c1l_log_sd2()?;
        let (itx, _) = s.int_c1tx_log_sd2()?;
        Ok(QuillenPoly { quad: il / 2u32, lin: (itx - s.log_dsd2()) / 2u32 })
    }

    pub fn eval(&self, p: u32) -> Float {
        let prec = self.quad.prec();
        let p2 = Float::with_val(prec, p as u64 * p as u64);
        Float::with_val(prec, &self.quad * &p2) + Float::with_val(prec, &self.lin * p)
    }
}

pub fn quillen_poly(s: &SurfaceScenario, p: u32) -> Result<Float> {
    Ok(QuillenPoly::new(s)?.eval(p))
}

/// One step of the restriction sequence `0 → L^{p−1} → L^p → L^p|_D → 0`:
/// `∫ Td(TX) ch(L^{p−1}) (1 − e^{−c₁(L)})/c₁(L) · c₁(L)-part against log|s_D|²`
/// minus the divisor term, i.e.
/// `((p−1) + ½)∫c₁(L) log|s_D|² + ½∫c₁(TX) log|s_D|² − ½ log|∂s_D|²`.
pub fn quillen_step(s: &SurfaceScenario, p: u32) -> Result<Float> {
    if p == 0 {
        return Err(Error::Domain("the restriction step needs p ≥ 1".into()));
    }
    let prec = s.prec;
    let (il, _) = s.int_c1l_log_sd2()?;
    let (itx, _) = s.int_c1tx_log_sd2()?;
    let ch = Float::with_val(prec, p - 1) + 0.5f64;
    Ok(il * ch + itx / 2u32 - s.log_dsd2() / 2u32)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub p: u32,
    pub log_z: f64,
    pub quillen: f64,
    pub two_tau_p: f64,
    pub log_s0_2: f64,
    pub two_tau: f64,
    pub normalization: f64,
    pub residual: f64,
}

/// Residual of
/// `log Z_p = log‖σ_p‖^{Q,2} − 2τ_p + log|s₀|² + 2τ + (p²/2) log|s_D^L|² + p(½ log|s_D^L|² + log|s_D^E|²)`
/// on the flat prequantized torus.
pub fn decompose_check(s: &SurfaceScenario, p: u32) -> Result<DecompositionReport> {
    if !(s.is_flat_prequantized() && crate::partition::is_unperturbed(s)) {
        return Err(Error::Unsupported("the decomposition check needs the flat prequantized torus".into()));
    }
    if p == 0 {
        return Err(Error::Domain("p must be at least 1".into()));
    }
    let prec = s.prec.max(mp::digits_to_bits(default_digits(p)));
    let sc;
    let s = if prec > s.prec {
        sc = build_scenario(&s.config, prec)?;
        &sc
    } else {
        s
    };
    debug_assert_eq!(s.surface, Surface::Torus);
    let lz = log_partition_at(p, s, Route::Transition, 0)?.log_z_exact;
    let q = quillen_poly(s, p)?;
    // area of ω0 is 1
    let tp = torsion_lp_flat_torus(s.tau(), p as u64, 1.0, prec)?;
    let two_tau_p = Float::with_val(prec, tp.exact.as_ref().expect("exact torsion") * 2u32);
    let vol = s.vol_l2_h1()?;
    let ls0 = s.log_s0_2(&vol);
    let tv = torsion_trivial_e(s)?;
    let tt = Float::with_val(prec, tv.exact.as_ref().expect("exact torsion") * 2u32);
    let pp = Float::with_val(prec, p as u64 * p as u64) / 2u32;
    let lsl = s.log_sdl2();
    let norm = Float::with_val(prec, &lsl * &pp)
        + (Float::with_val(prec, &lsl / 2u32) + s.log_sde2()) * p;
    let rhs = Float::with_val(prec, &q - &two_tau_p) + &ls0 + &tt + &norm;
    let residual = Float::with_val(prec, &lz - &rhs).abs().to_f64();
    debug_assert_eq!(dimension(1, p), p as usize);
    Ok(DecompositionReport {
        p,
        log_z: lz.to_f64(),
        quillen: q.to_f64(),
        two_tau_p: two_tau_p.to_f64(),
        log_s0_2: ls0.to_f64(),
        two_tau: tt.to_f64(),
        normalization: norm.to_f64(),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mode, ScenarioConfig};
    use crate::special_functions::zeta_deriv_minus1_glaisher;

    const PREC: u32 = 200;

    fn ln2pi() -> f64 {
        (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn exact_rationals() {
        assert_eq!(b1_exact(), Rational::from((-1, 2)));
        assert_eq!(b0_exact(2), Rational::from((-2, 3)));
        assert_eq!(b0_exact(0), 0);
    }

    #[test]
    fn unperturbed_sphere_values() {
        let s = build_scenario(&ScenarioConfig::sphere(), PREC).unwrap();
        let pr = predict(&s).unwrap();
        let z1 = zeta_deriv_minus1_glaisher(PREC).unwrap().to_f64();
        let c = &pr.coefficients;
        assert!((c.a2 + 0.5).abs() < 1e-15);
        assert!((c.a1 - (-0.5 * ln2pi() - 1.0)).abs() < 1e-14);
        assert!((c.a0.unwrap() - (2.0 * z1 - 0.5 * ln2pi() - 13.0 / 12.0)).abs() < 1e-12);
        assert_eq!(c.b1, -0.5);
        assert!((c.b0 + 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(pr.terms.int_rl_c1l, 0.0);
    }

    #[test]
    fn flat_torus_values() {
        let s = build_scenario(&ScenarioConfig::torus(0.0, 1.0), PREC).unwrap();
        let pr = predict(&s).unwrap();
        // |η(i)| = Γ(1/4) / (2 π^{3/4})
        let g = 3.625_609_908_221_908_f64;
        let eta = g / (2.0 * std::f64::consts::PI.powf(0.75));
        let c = &pr.coefficients;
        assert!((c.a2 + 0.5 * (4.0 * std::f64::consts::PI.powi(2) * eta.powi(4)).ln()).abs() < 1e-12);
        assert!((c.a1 + 0.5 * 2f64.ln()).abs() < 1e-12);
        // 2τ = −log(2 Im τ |η|⁴)
        assert!((c.a0.unwrap() + (2.0 * eta.powi(4)).ln()).abs() < 1e-10);
        assert_eq!(c.b0, 0.0);
    }

    #[test]
    fn corollary_matches_general_with_integral_s0() {
        for cfg in [ScenarioConfig::sphere(), ScenarioConfig::torus(0.0, 1.0), ScenarioConfig::torus(0.3, 1.2)] {
            let s = build_scenario(&cfg, PREC).unwrap();
            let a = predict(&s).unwrap().exact.a0.unwrap();
            let b = predict_a0_corollary(&s).unwrap();
            assert!((a - b).abs().to_f64() < 1e-12);
        }
        let s = build_scenario(&ScenarioConfig::sphere(), PREC).unwrap();
        let c = predict_a0_corollary(&s).unwrap().to_f64();
        let t = torsion_trivial_e(&s).unwrap().two_tau();
        let k = a0_constant(PREC).unwrap().to_f64();
        assert!((c - (-ln2pi() + t - 2.0 * k)).abs() < 1e-13);
    }

    #[test]
    fn corollary_rejects_perturbed() {
        let mut cfg = ScenarioConfig::sphere();
        cfg.psi = vec![Mode { a: 1, b: 0, sin: false, coef: 0.05 }];
        let s = build_scenario(&cfg, 128).unwrap();
        assert!(predict_a0_corollary(&s).is_err());
        let pr = predict(&s).unwrap();
        assert!(pr.coefficients.a0.is_none());
        assert!(pr.terms.int_rl_c1l.abs() > 1e-6);
    }

    #[test]
    fn quillen_polynomial_structure() {
        let mut cfg = ScenarioConfig::sphere();
        cfg.psi = vec![Mode { a: 2, b: 0, sin: false, coef: 0.04 }];
        let s = build_scenario(&cfg, 160).unwrap();
        assert_eq!(quillen_poly(&s, 0).unwrap(), 0);
        let q = QuillenPoly::new(&s).unwrap();
        let (il, _) = s.int_c1l_log_sd2().unwrap();
        assert!((Float::with_val(160, &q.quad * 2u32) - il).abs().to_f64() < 1e-40);
        for p in [1u32, 5, 17] {
            let d = quillen_poly(&s, p).unwrap() - quillen_poly(&s, p - 1).unwrap();
            let step = quillen_step(&s, p).unwrap();
            assert!((d - step).abs().to_f64() < 1e-35);
        }
    }

    #[test]
    fn decomposition_flat_torus() {
        for (re, im, p) in [(0.0, 1.0, 4u32), (0.3, 1.2, 8), (0.0, 1.0, 1), (0.3, 1.2, 1)] {
            let s = build_scenario(&ScenarioConfig::torus(re, im), 160).unwrap();
            let r = decompose_check(&s, p).unwrap();
            assert!(r.residual < 1e-8, "τ={re}+{im}i p={p}: {r:?}");
        }
    }

    #[test]
    fn normalization_shift_of_prediction() {
        let mut cfg = ScenarioConfig::torus(0.3, 1.2);
        let a = predict(&build_scenario(&cfg, PREC).unwrap()).unwrap();
        cfg.s_d_l = [2.0, 1.0];
        cfg.s_d_e = [0.0, -3.0];
        let b = predict(&build_scenario(&cfg, PREC).unwrap()).unwrap();
        let ll = 5f64.ln();
        let le = 9f64.ln();
        assert!((b.coefficients.a2 - a.coefficients.a2 - ll / 2.0).abs() < 1e-14);
        assert!((b.coefficients.a1 - a.coefficients.a1 - ll / 2.0 - le).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_curvature() {
        let mut cfg = ScenarioConfig::sphere();
        cfg.psi = vec![Mode { a: 1, b: 0, sin: false, coef: 1.0 }];
        assert!(build_scenario(&cfg, 128).is_err());
    }
}
