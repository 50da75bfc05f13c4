//! Subcommand bodies. Each returns a serialisable report; `main` owns I/O
//! and exit codes.

use std::path::Path;

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use qhall_core::asymptotics::{fit_protocol, FitReport, ProtocolReport, Sample, Term, FIT_PREC};
use qhall_core::canonical_sections::dimension;
use qhall_core::geometry::{build_scenario, ScenarioConfig, SurfaceScenario};
use qhall_core::mp::{digits_to_bits, PrecisionCtx};
use qhall_core::partition::{default_digits, log_partition, LogPartitionPoint, PartitionOptions};
use qhall_core::predictor::{predict_a0_corollary, ExpansionCoefficients, Prediction};
use qhall_core::torsion::{
    finski_coeff_check, landau_levels_numeric, torsion_lp_flat_torus, torsion_trivial_e, FinskiReport, TorsionValue,
};

use crate::config::{RunConfig, RunSection, Tol};
use crate::CliError;

/// Working digits for predictor and torsion evaluations unless overridden.
pub const REPORT_DIGITS: u32 = 40;

fn report_bits(run: &RunSection) -> u32 {
    digits_to_bits(run.precision_digits.unwrap_or(REPORT_DIGITS))
}

/// Rejects a precision that cannot certify the configured tolerance.
pub fn check_precision(run: &RunSection) -> Result<(), CliError> {
    if let Some(tol) = run.tolerance {
        let d = run.precision_digits.unwrap_or_else(|| default_digits(run.p_min));
        PrecisionCtx::with_tol(d, tol.log10()).validate()?;
    }
    Ok(())
}

fn scenario(cfg: &ScenarioConfig, bits: u32) -> Result<SurfaceScenario, CliError> {
    Ok(build_scenario(cfg, bits)?)
}

// ---------------------------------------------------------------------------
// compute

/// One CSV row of the partition-function series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub p: u32,
    #[serde(rename = "N_p")]
    pub n_p: usize,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    pub method: String,
    pub precision_bits: u32,
    pub quad_nodes: usize,
    pub est_error: f64,
}

pub const UNRESOLVED: &str = "unresolved";

impl CsvRow {
    pub fn is_resolved(&self) -> bool {
        self.method != UNRESOLVED && self.log_z.is_finite()
    }
}

/// A computed point, or the reason it could not be resolved.
#[derive(Clone, Debug)]
pub enum RowOutcome {
    Resolved(LogPartitionPoint),
    Unresolved { p: u32, n_p: usize, message: String },
}

impl RowOutcome {
    pub fn row(&self) -> CsvRow {
        match self {
            RowOutcome::Resolved(x) => CsvRow {
                p: x.p,
                n_p: x.n_p,
                log_z: x.log_z,
                method: x.method.to_string(),
                precision_bits: x.precision_bits,
                quad_nodes: x.quad_nodes,
                est_error: x.est_error,
            },
            RowOutcome::Unresolved { p, n_p, .. } => CsvRow {
                p: *p,
                n_p: *n_p,
                log_z: f64::NAN,
                method: UNRESOLVED.into(),
                precision_bits: 0,
                quad_nodes: 0,
                est_error: f64::INFINITY,
            },
        }
    }
}

/// `log Z_p` for every p in the configured range. Configuration errors abort;
/// resolution failures are reported per row.
pub fn compute(cfg: &RunConfig) -> Result<Vec<RowOutcome>, CliError> {
    cfg.validate()?;
    check_precision(&cfg.run)?;
    scenario(&cfg.scenario, digits_to_bits(20))?;
    let opts = PartitionOptions { route: cfg.run.route, digits: cfg.run.precision_digits, level: cfg.run.level };
    let ps: Vec<u32> = (cfg.run.p_min..=cfg.run.p_max).collect();
    let out: Vec<Result<RowOutcome, CliError>> = ps
        .par_iter()
        .map(|&p| match log_partition(p, &cfg.scenario, &opts) {
            Ok(x) => Ok(RowOutcome::Resolved(x)),
            Err(e @ (qhall_core::Error::Precision(_) | qhall_core::Error::Numerical(_))) => Ok(RowOutcome::Unresolved {
                p,
                n_p: dimension(cfg.scenario.genus, p),
                message: e.to_string(),
            }),
            Err(e) => Err(e.into()),
        })
        .collect();
    out.into_iter().collect()
}

pub fn write_csv<W: std::io::Write>(w: W, rows: &[CsvRow]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// predict

#[derive(Clone, Debug, Serialize)]
pub struct PredictReport {
    pub genus: u8,
    pub precision_bits: u32,
    #[serde(flatten)]
    pub prediction: Prediction,
    /// a₀ through the volume and torsion corollary, when available.
    pub a0_corollary: Option<f64>,
}

pub fn predict(cfg: &RunConfig) -> Result<PredictReport, CliError> {
    cfg.validate()?;
    let bits = report_bits(&cfg.run);
    let s = scenario(&cfg.scenario, bits)?;
    let prediction = qhall_core::predictor::predict(&s)?;
    let a0_corollary = if s.prequantized { Some(predict_a0_corollary(&s)?.to_f64()) } else { None };
    Ok(PredictReport { genus: cfg.scenario.genus, precision_bits: bits, prediction, a0_corollary })
}

// ---------------------------------------------------------------------------
// fit

fn samples_from_rows(rows: &[CsvRow]) -> Result<Vec<Sample>, CliError> {
    if let Some(r) = rows.iter().find(|r| !r.is_resolved()) {
        return Err(CliError::Numerical(format!("row p = {} is unresolved", r.p)));
    }
    Ok(rows.iter().map(|r| Sample::new(r.p, r.log_z, r.est_error)).collect())
}

/// Free and pinned fits of a CSV series.
pub fn fit_csv(cfg: &RunConfig, rows: &[CsvRow]) -> Result<(ProtocolReport, Vec<Sample>), CliError> {
    let samples = samples_from_rows(rows)?;
    if samples.len() < 8 {
        return Err(CliError::Config(format!("fitting needs at least 8 points, got {}", samples.len())));
    }
    let chi = 2 - 2 * cfg.scenario.genus as i32;
    Ok((fit_protocol(&samples, chi, &cfg.run.nuisance)?, samples))
}

fn remainder(x: &Sample, c: &ExpansionCoefficients) -> f64 {
    let p = Float::with_val(FIT_PREC, x.p);
    let mut r = x.log_z.clone();
    for (t, v) in [(Term::P2, c.a2), (Term::PLogP, c.b1), (Term::P, c.a1), (Term::LogP, c.b0), (Term::One, c.a0.unwrap_or(0.0))]
    {
        r -= t.eval(&p) * Float::with_val(FIT_PREC, v);
    }
    r.to_f64()
}

/// Plot data: `p`, `log_Z` and the remainder after the fitted expansion terms.
pub fn write_residuals<W: std::io::Write>(w: W, samples: &[Sample], prot: &ProtocolReport) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        p: u32,
        #[serde(rename = "log_Z")]
        log_z: f64,
        remainder_free: f64,
        remainder_pinned: f64,
    }
    let mut wr = csv::Writer::from_writer(w);
    for x in samples {
        wr.serialize(Row {
            p: x.p,
            log_z: x.log_z.to_f64(),
            remainder_free: remainder(x, &prot.free.coefficients),
            remainder_pinned: remainder(x, &prot.pinned.coefficients),
        })?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

/// Test hooks for mutation checks.
#[derive(Clone, Debug, Default)]
pub struct VerifyHooks {
    /// Replaces `s_D^L` in the predictor input only.
    pub predictor_s_d_l: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub coefficient: &'static str,
    pub protocol: &'static str,
    pub predicted: f64,
    pub fitted: f64,
    /// fitted − predicted.
    pub delta: f64,
    /// |delta|, divided by |predicted| for relative tolerances.
    pub measure: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
}

impl Comparison {
    fn new(coefficient: &'static str, protocol: &'static str, predicted: f64, fitted: f64, tol: Tol) -> Self {
        let delta = fitted - predicted;
        let measure = if tol.relative && predicted != 0.0 { delta.abs() / predicted.abs() } else { delta.abs() };
        Comparison {
            coefficient,
            protocol,
            predicted,
            fitted,
            delta,
            measure,
            tolerance: tol.tol,
            relative: tol.relative,
            pass: measure <= tol.tol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub genus: u8,
    pub p_min: u32,
    pub p_max: u32,
    pub seed: u64,
    pub prediction: ExpansionCoefficients,
    pub free: FitReport,
    pub pinned: FitReport,
    pub comparisons: Vec<Comparison>,
    /// Coefficients outside tolerance.
    pub flagged: Vec<&'static str>,
    pub pass: bool,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl VerifyReport {
    pub fn comparison(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.coefficient == name)
    }

    pub fn protocol(&self) -> ProtocolReport {
        ProtocolReport { free: self.free.clone(), pinned: self.pinned.clone() }
    }
}

/// predict, compute, fit (free and pinned) and compare.
pub fn verify(cfg: &RunConfig, hooks: &VerifyHooks) -> Result<VerifyReport, CliError> {
    cfg.validate()?;
    cfg.validate_for_fit()?;
    let rows = compute(cfg)?;
    let mut samples = Vec::with_capacity(rows.len());
    for r in &rows {
        match r {
            RowOutcome::Resolved(x) => samples.push(Sample::from_point(x)),
            RowOutcome::Unresolved { p, message, .. } => {
                return Err(CliError::Numerical(format!("p = {p}: {message}")));
            }
        }
    }
    let chi = 2 - 2 * cfg.scenario.genus as i32;
    let prot = fit_protocol(&samples, chi, &cfg.run.nuisance)?;

    let mut pcfg = cfg.scenario.clone();
    if let Some(v) = hooks.predictor_s_d_l {
        pcfg.s_d_l = v;
    }
    let s = scenario(&pcfg, report_bits(&cfg.run))?;
    let pred = qhall_core::predictor::predict(&s)?.coefficients;

    let v = &cfg.verify;
    let (f, q) = (&prot.free.coefficients, &prot.pinned.coefficients);
    let mut comparisons = vec![
        Comparison::new("b1", "free", pred.b1, f.b1, v.b1),
        Comparison::new("b0", "free", pred.b0, f.b0, v.b0),
        Comparison::new("a2", "pinned", pred.a2, q.a2, v.a2),
        Comparison::new("a1", "pinned", pred.a1, q.a1, v.a1),
    ];
    if let (Some(p0), Some(f0)) = (pred.a0, q.a0) {
        comparisons.push(Comparison::new("a0", "pinned", p0, f0, v.a0));
    }
    let flagged: Vec<&'static str> = comparisons.iter().filter(|c| !c.pass).map(|c| c.coefficient).collect();
    Ok(VerifyReport {
        genus: cfg.scenario.genus,
        p_min: cfg.run.p_min,
        p_max: cfg.run.p_max,
        seed: cfg.run.seed,
        prediction: pred,
        free: prot.free,
        pinned: prot.pinned,
        pass: flagged.is_empty(),
        comparisons,
        flagged,
        samples,
    })
}

// ---------------------------------------------------------------------------
// torsion

#[derive(Clone, Debug, Serialize)]
pub struct LandauRow {
    pub p: u32,
    pub two_tau_p: f64,
    /// `½ p log p`.
    pub leading: f64,
    pub method: String,
}

/// Numerical Landau spectrum against `2πpk` with multiplicity p.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumCheck {
    pub p: u32,
    pub levels: usize,
    pub max_rel_deviation: f64,
    pub multiplicities_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TorsionReport {
    pub genus: u8,
    pub two_tau: TorsionValue,
    pub landau: Vec<LandauRow>,
    pub spectrum: Vec<SpectrumCheck>,
    pub fit: Option<FinskiReport>,
    pub pass: bool,
}

pub const SPECTRUM_TOL: f64 = 1e-6;

pub fn torsion(cfg: &RunConfig) -> Result<TorsionReport, CliError> {
    cfg.validate()?;
    let bits = report_bits(&cfg.run);
    let s = scenario(&cfg.scenario, bits)?;
    let two_tau = torsion_trivial_e(&s)?;
    let (mut landau, mut spectrum, mut fit) = (Vec::new(), Vec::new(), None);
    if cfg.scenario.genus == 1 && s.is_flat_prequantized() {
        for p in cfg.run.p_min..=cfg.run.p_max {
            let v = torsion_lp_flat_torus(s.tau(), p as u64, 1.0, bits)?;
            let pf = p as f64;
            landau.push(LandauRow { p, two_tau_p: v.two_tau(), leading: 0.5 * pf * pf.ln(), method: v.method });
        }
        for p in 1..=3u32 {
            let levels = 4;
            let lv = landau_levels_numeric(p as u64, levels);
            let omega = 2.0 * std::f64::consts::PI * p as f64;
            let mut dev = 0.0f64;
            for (k, (e, _)) in lv.iter().enumerate() {
                dev = dev.max((e - omega * k as f64).abs() / omega);
            }
            let multiplicities_ok = lv.len() == levels && lv.iter().all(|(_, m)| *m == p as usize);
            spectrum.push(SpectrumCheck { p, levels, max_rel_deviation: dev, multiplicities_ok });
        }
        if cfg.run.p_max >= cfg.run.p_min + 3 {
            fit = Some(finski_coeff_check(&s, cfg.run.p_min as u64..=cfg.run.p_max as u64)?);
        }
    }
    let pass = spectrum.iter().all(|c| c.multiplicities_ok && c.max_rel_deviation <= SPECTRUM_TOL)
        && fit.as_ref().is_none_or(|f| f.pass);
    Ok(TorsionReport { genus: cfg.scenario.genus, two_tau, landau, spectrum, fit, pass })
}
