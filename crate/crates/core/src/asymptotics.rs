//! Coefficient extraction from a computed sequence `{log Z_p}`.
//!
//! Model: `a₂p² + b₁ p log p + a₁p + b₀ log p + a₀` plus optional nuisance
//! terms `log p/p` and `1/p` standing in for the `O(log p/p)` remainder.
//! Two extractors:
//! * weighted least squares on the full model, with `b₁`, `b₀` free or pinned;
//! * staged differences: `Δ²` isolates `(a₂, b₁, b₀)`, `Δ¹` then gives `a₁`,
//!   and the undifferenced data gives `a₀`.

use rug::Float;
use serde::Serialize;

use crate::linalg::{weighted_least_squares, LsSolution, RMat};
use crate::partition::LogPartitionPoint;
use crate::predictor::{b0_exact, b1_exact, CoefficientErrors, ExpansionCoefficients, Provenance};
use crate::{Error, Result};

/// Working precision of the fits.
pub const FIT_PREC: u32 = 256;

/// Errors below this are dominated by the truncated remainder, not by the data.
const MODEL_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    P2,
    PLogP,
    P,
    LogP,
    One,
    LogPOverP,
    InvP,
}

impl Term {
    pub const LEADING: [Term; 5] = [Term::P2, Term::PLogP, Term::P, Term::LogP, Term::One];

    pub fn name(self) -> &'static str {
        match self {
            Term::P2 => "a2",
            Term::PLogP => "b1",
            Term::P => "a1",
            Term::LogP => "b0",
            Term::One => "a0",
            Term::LogPOverP => "log_p_over_p",
            Term::InvP => "inv_p",
        }
    }

    pub fn eval(self, p: &Float) -> Float {
        let prec = p.prec();
        let lp = Float::with_val(prec, p.ln_ref());
        match self {
            Term::P2 => Float::with_val(prec, p.square_ref()),
            Term::PLogP => lp * p,
            Term::P => p.clone(),
            Term::LogP => lp,
            Term::One => Float::with_val(prec, 1),
            Term::LogPOverP => lp / p,
            Term::InvP => Float::with_val(prec, p.recip_ref()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// `1/est_error²` unless every error is below the model floor, then uniform.
    Auto,
    InverseVariance,
    Uniform,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitModel {
    pub nuisance: Vec<Term>,
    /// Pinned values of `b₁`, `b₀`.
    pub pin_b1: Option<f64>,
    pub pin_b0: Option<f64>,
    pub weights: WeightPolicy,
    /// Treat a residual above the input error budget as an error.
    pub strict_budget: bool,
}

impl Default for FitModel {
    fn default() -> Self {
        FitModel {
            nuisance: vec![Term::LogPOverP, Term::InvP],
            pin_b1: None,
            pin_b0: None,
            weights: WeightPolicy::Auto,
            strict_budget: false,
        }
    }
}

impl FitModel {
    /// `b₁`, `b₀` pinned to their exact rationals for Euler characteristic `chi`.
    pub fn pinned(chi: i32) -> Self {
        FitModel { pin_b1: Some(b1_exact().to_f64()), pin_b0: Some(b0_exact(chi).to_f64()), ..Default::default() }
    }

    fn free_terms(&self) -> Vec<Term> {
        let mut t = vec![Term::P2];
        if self.pin_b1.is_none() {
            t.push(Term::PLogP);
        }
        t.push(Term::P);
        if self.pin_b0.is_none() {
            t.push(Term::LogP);
        }
        t.push(Term::One);
        t.extend(self.nuisance.iter().copied());
        t
    }
}

/// A sample of the sequence at fit precision.
#[derive(Clone, Debug)]
pub struct Sample {
    pub p: u32,
    pub log_z: Float,
    pub err: f64,
}

impl Sample {
    pub fn from_point(x: &LogPartitionPoint) -> Self {
        let v = if x.log_z_exact.prec() > 53 {
            Float::with_val(FIT_PREC, &x.log_z_exact)
        } else {
            Float::with_val(FIT_PREC, x.log_z)
        };
        Sample { p: x.p, log_z: v, err: x.est_error }
    }

    pub fn new(p: u32, log_z: f64, err: f64) -> Self {
        Sample { p, log_z: Float::with_val(FIT_PREC, log_z), err }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub coefficients: ExpansionCoefficients,
    pub nuisance: Vec<(String, f64)>,
    /// Weighted residual 2-norm.
    pub residual: f64,
    /// Largest unweighted residual.
    pub max_abs_residual: f64,
    pub condition: f64,
    pub protocol: String,
    pub p_min: u32,
    pub p_max: u32,
    /// Largest coefficient shift after dropping the smallest 25% of p.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit_shift: Option<f64>,
    pub residual_exceeds_budget: bool,
}

struct RawFit {
    values: Vec<(Term, Float)>,
    errors: Vec<(Term, f64)>,
    sol: LsSolution,
    max_abs: f64,
    budget: f64,
}

fn weights(samples: &[Sample], policy: WeightPolicy) -> Vec<Float> {
    let all_small = samples.iter().all(|s| s.err < MODEL_FLOOR);
    let uniform = match policy {
        WeightPolicy::Uniform => true,
        WeightPolicy::InverseVariance => false,
        WeightPolicy::Auto => all_small,
    };
    samples
        .iter()
        .map(|s| {
            if uniform {
                Float::with_val(FIT_PREC, 1)
            } else {
                let e = s.err.max(1e-300);
                Float::with_val(FIT_PREC, 1.0 / (e * e))
            }
        })
        .collect()
}

fn solve(samples: &[Sample], rhs: &[Float], terms: &[Term], policy: WeightPolicy, eval: &dyn Fn(Term, usize) -> Float) -> Result<RawFit> {
    let m = samples.len();
    let n = terms.len();
    if m < n + 3 {
        return Err(Error::Domain(format!("need at least {} points for {n} parameters, got {m}", n + 3)));
    }
    let mut a = RMat::zeros(m, n, FIT_PREC);
    for i in 0..m {
        for (j, t) in terms.iter().enumerate() {
            *a.at_mut(i, j) = eval(*t, i);
        }
    }
    let w = weights(samples, policy);
    let sol = weighted_least_squares(&a, rhs, &w)?;
    if !sol.condition.is_finite() || sol.condition > 1e40 {
        return Err(Error::Numerical(format!("rank-deficient design (condition {:.2e})", sol.condition)));
    }
    let mut max_abs = 0.0f64;
    for i in 0..m {
        let mut r = rhs[i].clone();
        for j in 0..n {
            r -= Float::with_val(FIT_PREC, a.at(i, j) * &sol.coef[j]);
        }
        max_abs = max_abs.max(r.abs().to_f64());
    }
    let uniform = matches!(policy, WeightPolicy::Uniform) || (policy == WeightPolicy::Auto && samples.iter().all(|s| s.err < MODEL_FLOOR));
    let dof = (m - n) as f64;
    let res = sol.residual.to_f64();
    let scale = if uniform { res / dof.sqrt() } else { (res * res / dof).sqrt().max(1.0) };
    let values = terms.iter().zip(&sol.coef).map(|(t, c)| (*t, c.clone())).collect();
    let errors = terms.iter().zip(&sol.sensitivity).map(|(t, s)| (*t, s.to_f64() * scale)).collect();
    let budget = if uniform {
        samples.iter().map(|s| s.err).fold(0.0, f64::max) * (m as f64).sqrt()
    } else {
        3.0 * (m as f64).sqrt()
    };
    Ok(RawFit { values, errors, sol, max_abs, budget })
}

fn pget(v: &[(Term, Float)], t: Term) -> Option<f64> {
    v.iter().find(|(x, _)| *x == t).map(|(_, c)| c.to_f64())
}

fn eget(v: &[(Term, f64)], t: Term) -> f64 {
    v.iter().find(|(x, _)| *x == t).map(|(_, c)| *c).unwrap_or(0.0)
}

fn fit_raw(samples: &[Sample], model: &FitModel) -> Result<RawFit> {
    let ps: Vec<Float> = samples.iter().map(|s| Float::with_val(FIT_PREC, s.p)).collect();
    if samples.iter().any(|s| s.p == 0) {
        return Err(Error::Domain("p must be positive in a fit".into()));
    }
    let mut rhs: Vec<Float> = samples.iter().map(|s| s.log_z.clone()).collect();
    for (i, p) in ps.iter().enumerate() {
        if let Some(b1) = model.pin_b1 {
            rhs[i] -= Term::PLogP.eval(p) * b1;
        }
        if let Some(b0) = model.pin_b0 {
            rhs[i] -= Term::LogP.eval(p) * b0;
        }
    }
    let terms = model.free_terms();
    solve(samples, &rhs, &terms, model.weights, &|t, i| t.eval(&ps[i]))
}

fn describe(model: &FitModel) -> String {
    let pins = match (model.pin_b1, model.pin_b0) {
        (None, None) => "b1, b0 free".to_string(),
        (Some(a), Some(b)) => format!("b1 = {a}, b0 = {b} pinned"),
        (Some(a), None) => format!("b1 = {a} pinned"),
        (None, Some(b)) => format!("b0 = {b} pinned"),
    };
    let nz: Vec<&str> = model.nuisance.iter().map(|t| t.name()).collect();
    format!("weighted least squares ({pins}; nuisance: {})", if nz.is_empty() { "none".into() } else { nz.join(", ") })
}

/// Weighted least-squares fit of the expansion.
pub fn fit(series: &[Sample], model: &FitModel) -> Result<FitReport> {
    let mut samples = series.to_vec();
    samples.sort_by_key(|s| s.p);
    let raw = fit_raw(&samples, model)?;
    let exceeds = raw.sol.residual.to_f64() > raw.budget;
    if exceeds && model.strict_budget {
        return Err(Error::Numerical(format!(
            "fit residual {:.3e} exceeds the input error budget {:.3e}; model is missing terms",
            raw.sol.residual.to_f64(),
            raw.budget
        )));
    }
    let coef = |t: Term, pin: Option<f64>| pin.or_else(|| pget(&raw.values, t)).unwrap_or(0.0);
    let coefficients = ExpansionCoefficients {
        a2: coef(Term::P2, None),
        b1: coef(Term::PLogP, model.pin_b1),
        a1: coef(Term::P, None),
        b0: coef(Term::LogP, model.pin_b0),
        a0: Some(coef(Term::One, None)),
        provenance: Provenance::Fitted,
        errors: CoefficientErrors {
            a2: eget(&raw.errors, Term::P2),
            b1: eget(&raw.errors, Term::PLogP),
            a1: eget(&raw.errors, Term::P),
            b0: eget(&raw.errors, Term::LogP),
            a0: Some(eget(&raw.errors, Term::One)),
        },
    };
    // refit without the smallest quarter of p
    let drop = samples.len() / 4;
    let refit_shift = if drop > 0 {
        fit_raw(&samples[drop..], model).ok().map(|r| {
            Term::LEADING
                .iter()
                .filter_map(|t| Some((pget(&raw.values, *t)? - pget(&r.values, *t)?).abs()))
                .fold(0.0, f64::max)
        })
    } else {
        None
    };
    Ok(FitReport {
        coefficients,
        nuisance: model.nuisance.iter().filter_map(|t| Some((t.name().to_string(), pget(&raw.values, *t)?))).collect(),
        residual: raw.sol.residual.to_f64(),
        max_abs_residual: raw.max_abs,
        condition: raw.sol.condition,
        protocol: describe(model),
        p_min: samples[0].p,
        p_max: samples[samples.len() - 1].p,
        refit_shift,
        residual_exceeds_budget: exceeds,
    })
}

/// Free fit followed by the pinned refit.
#[derive(Clone, Debug, Serialize)]
pub struct ProtocolReport {
    pub free: FitReport,
    pub pinned: FitReport,
}

pub fn fit_protocol(series: &[Sample], chi: i32, nuisance: &[Term]) -> Result<ProtocolReport> {
    let free = FitModel { nuisance: nuisance.to_vec(), ..Default::default() };
    let pinned = FitModel { nuisance: nuisance.to_vec(), ..FitModel::pinned(chi) };
    Ok(ProtocolReport { free: fit(series, &free)?, pinned: fit(series, &pinned)? })
}

/// Staged finite-difference extraction; needs consecutive p.
#[derive(Clone, Debug, Serialize)]
pub struct DifferenceReport {
    pub coefficients: ExpansionCoefficients,
    /// Coefficient error per unit of input noise, per stage (Δ², Δ¹, Δ⁰), for a₂.
    pub noise_amplification: f64,
    pub protocol: String,
}

fn forward_diff(v: &[Float]) -> Vec<Float> {
    v.windows(2).map(|w| Float::with_val(FIT_PREC, &w[1] - &w[0])).collect()
}

pub fn difference_extract(series: &[Sample], nuisance: &[Term]) -> Result<DifferenceReport> {
    let mut s = series.to_vec();
    s.sort_by_key(|x| x.p);
    if s.windows(2).any(|w| w[1].p != w[0].p + 1) {
        return Err(Error::Domain("difference extraction needs consecutive p".into()));
    }
    let need = 3 + nuisance.len() + 3 + 2;
    if s.len() < need {
        return Err(Error::Domain(format!("series too short: need at least {need} consecutive points")));
    }
    if s[0].p == 0 {
        return Err(Error::Domain("p must be positive".into()));
    }
    let ps: Vec<Float> = s.iter().map(|x| Float::with_val(FIT_PREC, x.p)).collect();
    let y: Vec<Float> = s.iter().map(|x| x.log_z.clone()).collect();
    let col = |t: Term| -> Vec<Float> { ps.iter().map(|p| t.eval(p)).collect() };
    let d1 = |t: Term| forward_diff(&col(t));
    let d2 = |t: Term| forward_diff(&d1(t));
    let policy = WeightPolicy::Uniform;
    // stage 1: Δ² y = 2a₂ + b₁ Δ²(p log p) + b₀ Δ²(log p) + nuisance
    let y2 = forward_diff(&forward_diff(&y));
    let mut t2 = vec![Term::P2, Term::PLogP, Term::LogP];
    t2.extend_from_slice(nuisance);
    let cols2: Vec<(Term, Vec<Float>)> = t2.iter().map(|t| (*t, d2(*t))).collect();
    let st2 = &s[..y2.len()];
    let r2 = solve(st2, &y2, &t2, policy, &|t, i| cols2.iter().find(|(x, _)| *x == t).unwrap().1[i].clone())?;
    let a2 = r2.sol.coef[0].clone();
    let b1 = r2.sol.coef[1].clone();
    let b0 = r2.sol.coef[2].clone();
    // stage 2: Δ y − known = a₁ + nuisance
    let y1: Vec<Float> = forward_diff(&y)
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v - Float::with_val(FIT_PREC, &a2 * &d1(Term::P2)[i])
                - Float::with_val(FIT_PREC, &b1 * &d1(Term::PLogP)[i])
                - Float::with_val(FIT_PREC, &b0 * &d1(Term::LogP)[i])
        })
        .collect();
    let mut t1 = vec![Term::P];
    t1.extend_from_slice(nuisance);
    let cols1: Vec<(Term, Vec<Float>)> = t1.iter().map(|t| (*t, d1(*t))).collect();
    let st1 = &s[..y1.len()];
    let r1 = solve(st1, &y1, &t1, policy, &|t, i| cols1.iter().find(|(x, _)| *x == t).unwrap().1[i].clone())?;
    let a1 = r1.sol.coef[0].clone();
    // stage 3: y − known = a₀ + nuisance
    let y0: Vec<Float> = (0..y.len())
        .map(|i| {
            let p = &ps[i];
            Float::with_val(FIT_PREC, &y[i]) - Term::P2.eval(p) * &a2 - Term::PLogP.eval(p) * &b1 - Term::P.eval(p) * &a1
                - Term::LogP.eval(p) * &b0
        })
        .collect();
    let mut t0 = vec![Term::One];
    t0.extend_from_slice(nuisance);
    let r0 = solve(&s, &y0, &t0, policy, &|t, i| t.eval(&ps[i]))?;
    let a0 = r0.sol.coef[0].clone();
    // Δ² turns input noise ε into at most 4ε; the sensitivities are per unit of that
    let amp = 4.0 * r2.sol.sensitivity[0].to_f64();
    let sc = |r: &RawFit, k: usize| {
        let m = r.sol.coef.len();
        let dof = (r.sol.sensitivity.len().max(1)) as f64;
        let _ = m;
        r.sol.sensitivity[k].to_f64() * r.max_abs.max(r.sol.residual.to_f64() / dof.sqrt())
    };
    let coefficients = ExpansionCoefficients {
        a2: a2.to_f64(),
        b1: b1.to_f64(),
        a1: a1.to_f64(),
        b0: b0.to_f64(),
        a0: Some(a0.to_f64()),
        provenance: Provenance::Fitted,
        errors: CoefficientErrors { a2: sc(&r2, 0), b1: sc(&r2, 1), a1: sc(&r1, 0), b0: sc(&r2, 2), a0: Some(sc(&r0, 0)) },
    };
    Ok(DifferenceReport { coefficients, noise_amplification: amp, protocol: "second differences, then first differences, then values".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(ps: std::ops::RangeInclusive<u32>, c: [f64; 5], extra: &dyn Fn(f64) -> f64) -> Vec<Sample> {
        ps.map(|p| {
            let x = Float::with_val(FIT_PREC, p);
            let mut v = Float::new(FIT_PREC);
            for (t, k) in Term::LEADING.iter().zip(c) {
                v += t.eval(&x) * k;
            }
            v += extra(p as f64);
            Sample { p, log_z: v, err: 1e-30 }
        })
        .collect()
    }

    const C: [f64; 5] = [-0.5, -0.5, -1.9189, -0.6667, -2.0];

    #[test]
    fn exact_recovery() {
        let s = synth(8..=48, C, &|_| 0.0);
        let r = fit(&s, &FitModel { nuisance: vec![], ..Default::default() }).unwrap();
        let c = &r.coefficients;
        for (got, want) in [c.a2, c.b1, c.a1, c.b0, c.a0.unwrap()].iter().zip(C) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(r.residual < 1e-40);
    }

    #[test]
    fn nuisance_recovery() {
        let s = synth(16..=64, C, &|p| 0.3 * p.ln() / p - 0.1 / p);
        let r = fit(&s, &FitModel::default()).unwrap();
        let c = &r.coefficients;
        for (got, want) in [c.a2, c.b1, c.a1, c.b0].iter().zip(C) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        assert!(r.refit_shift.unwrap() < 1e-8);
    }

    #[test]
    fn rank_deficiency_and_short_series() {
        let s = synth(8..=12, C, &|_| 0.0);
        assert!(fit(&s, &FitModel::default()).is_err());
        // a single repeated p makes the design singular
        let s: Vec<Sample> = (0..20).map(|_| Sample::new(10, 1.0, 1e-12)).collect();
        assert!(fit(&s, &FitModel::default()).is_err());
    }

    #[test]
    fn pinning_does_not_worsen_model_data() {
        // tail in the nuisance class, computed at full precision
        let s: Vec<Sample> = synth(10..=60, C, &|_| 0.0)
            .into_iter()
            .map(|x| {
                let t = Term::InvP.eval(&Float::with_val(FIT_PREC, x.p)) * 0.2f64;
                Sample { log_z: x.log_z + t, ..x }
            })
            .collect();
        let free = fit(&s, &FitModel::default()).unwrap();
        let pinned = fit(&s, &FitModel { pin_b1: Some(C[1]), pin_b0: Some(C[3]), ..Default::default() }).unwrap();
        assert!(pinned.residual <= free.residual + 1e-60, "{} vs {}", pinned.residual, free.residual);
    }

    #[test]
    fn nested_ranges_converge() {
        // an unmodelled p^-2 tail
        let tail = |p: f64| 0.7 / (p * p);
        let errs: Vec<f64> = [24u32, 48, 96]
            .iter()
            .map(|&hi| {
                let s = synth(8..=hi, C, &tail);
                (fit(&s, &FitModel::default()).unwrap().coefficients.b0 - C[3]).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        let derrs: Vec<f64> = [24u32, 48, 96]
            .iter()
            .map(|&hi| {
                let s = synth(8..=hi, C, &tail);
                (difference_extract(&s, &[Term::LogPOverP, Term::InvP]).unwrap().coefficients.b0 - C[3]).abs()
            })
            .collect();
        assert!(derrs[1] < derrs[0] && derrs[2] < derrs[1], "{derrs:?}");
    }

    #[test]
    fn difference_exact_quadratic() {
        let s: Vec<Sample> = (1..=20).map(|p| Sample::new(p, 3.0 * (p * p) as f64 - 2.0 * p as f64 + 1.5, 0.0)).collect();
        let r = difference_extract(&s, &[]).unwrap();
        assert!((r.coefficients.a2 - 3.0).abs() < 1e-40_f64.max(1e-12));
        assert!((r.coefficients.a1 + 2.0).abs() < 1e-10);
        assert!((r.coefficients.a0.unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn difference_agrees_with_fit() {
        let s = synth(16..=64, C, &|p| 0.3 * p.ln() / p - 0.1 / p);
        let nz = [Term::LogPOverP, Term::InvP];
        let d = difference_extract(&s, &nz).unwrap();
        let f = fit(&s, &FitModel::default()).unwrap();
        assert!((d.coefficients.a2 - f.coefficients.a2).abs() < 1e-4);
        assert!((d.coefficients.b1 - C[1]).abs() < 1e-4);
    }

    #[test]
    fn difference_noise_amplification_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let clean = synth(16..=64, C, &|_| 0.0);
        let eps = 1e-12;
        let noisy: Vec<Sample> = clean
            .iter()
            .map(|s| Sample { log_z: s.log_z.clone() + rng.random_range(-eps..eps), ..s.clone() })
            .collect();
        let a = difference_extract(&clean, &[]).unwrap();
        let b = difference_extract(&noisy, &[]).unwrap();
        let shift = (a.coefficients.a2 - b.coefficients.a2).abs();
        assert!(shift <= b.noise_amplification * eps * 10.0, "{shift:e} vs {:e}", b.noise_amplification * eps);
    }

    #[test]
    fn rejects_gaps() {
        let mut s = synth(8..=40, C, &|_| 0.0);
        s.remove(5);
        assert!(difference_extract(&s, &[]).is_err());
    }
}
