//! Identity suites: graded determinant laws, theta and Weierstrass
//! identities, Slater determinant identities, ζ'(−1) and torsion routes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Complex, Float};
use serde::Serialize;

use qhall_core::canonical_sections::{ecxa_residual, fay_residual};
use qhall_core::geometry::{build_scenario, Mode, ScenarioConfig};
use qhall_core::graded_det::{property_suite, SignMode};
use qhall_core::mp::{self, digits_to_bits, PrecisionCtx};
use qhall_core::special_functions::{
    theta_quasiperiod_residual, zeta_deriv_minus1_functional, zeta_deriv_minus1_glaisher, Elliptic, Modulus,
};
use qhall_core::torsion::{dedekind_eta, dedekind_eta_pentagonal, sphere_two_tau_closed, sphere_two_tau_hurwitz};

use crate::CliError;

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    pub digits: u32,
    /// Tolerance of the special-function identities.
    pub tolerance: f64,
    /// Tolerance of the Slater determinant identities.
    pub slater_tolerance: f64,
    pub seed: u64,
    /// Random point sets per (p, τ) for the Slater identities.
    pub point_sets: usize,
    /// Random complexes in the graded-determinant suite.
    pub complexes: usize,
    pub sign_mode: SignMode,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            digits: 64,
            tolerance: 1e-12,
            slater_tolerance: 1e-10,
            seed: 1,
            point_sets: 20,
            complexes: 200,
            sign_mode: SignMode::Graded,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Item {
    pub name: String,
    /// Worst residual; for exact suites, 0 on success and 1 on failure.
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub digits: u32,
    pub seed: u64,
    pub items: Vec<Item>,
    pub pass: bool,
}

impl SelftestReport {
    pub fn first_failure(&self) -> Option<&Item> {
        self.items.iter().find(|i| !i.pass)
    }

    pub fn item(&self, name: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.name == name)
    }
}

fn item(name: &str, residual: f64, tolerance: f64) -> Item {
    Item { name: name.into(), residual, tolerance, pass: residual <= tolerance, detail: None }
}

const MODULI: [(f64, f64); 3] = [(0.0, 1.0), (0.3, 1.2), (-0.4, 0.8)];

fn random_points(e: &Elliptic, n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex> {
    let prec = e.prec;
    let pts: Vec<Complex> = (0..n)
        .map(|_| {
            let (s, t): (f64, f64) = (rng.random(), rng.random());
            Complex::with_val(prec, e.tau() * Float::with_val(prec, t)) + s
        })
        .collect();
    pts
}

/// Slater identity residual over `sets` random point sets; point sets too
/// close to the diagonal or the lattice are redrawn.
fn slater_suite(
    f: fn(u32, Arc<Elliptic>, &[Complex]) -> qhall_core::Result<f64>,
    ps: std::ops::RangeInclusive<u32>,
    sets: usize,
    prec: u32,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for (re, im) in MODULI[..2].iter().copied() {
        let e = Arc::new(Elliptic::new(&Modulus::from_f64(prec, re, im)?, prec)?);
        for p in ps.clone() {
            let mut done = 0;
            let mut tries = 0;
            while done < sets {
                tries += 1;
                if tries > 50 * sets {
                    return Err(CliError::Numerical("could not draw separated point sets".into()));
                }
                let pts = random_points(&e, p as usize, rng);
                match f(p, e.clone(), &pts) {
                    Ok(r) => {
                        worst = worst.max(r);
                        done += 1;
                    }
                    Err(qhall_core::Error::Domain(_)) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(worst)
}

/// Runs every identity suite. Precision that cannot certify the tolerance is
/// an error; failing identities are reported, the first one by name.
pub fn selftest(opts: &SelftestOptions) -> Result<SelftestReport, CliError> {
    PrecisionCtx::with_tol(opts.digits, opts.tolerance.log10()).validate()?;
    let prec = digits_to_bits(opts.digits);
    let tol = opts.tolerance;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut items = Vec::new();

    items.push(match property_suite(opts.sign_mode, opts.complexes, opts.seed) {
        Ok(r) => Item {
            name: "graded determinant laws".into(),
            residual: 0.0,
            tolerance: 0.0,
            pass: true,
            detail: Some(format!(
                "{} complexes, {} lift, {} koszul, {} carry, {} associativity checks",
                r.complexes, r.lift_checks, r.koszul_checks, r.carry_checks, r.associativity_checks
            )),
        },
        Err(msg) => Item {
            name: "graded determinant laws".into(),
            residual: 1.0,
            tolerance: 0.0,
            pass: false,
            detail: Some(msg),
        },
    });

    let (mut leg, mut sig, mut bridge, mut th, mut eta) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (re, im) in MODULI {
        let m = Modulus::from_f64(prec, re, im)?;
        let e = Elliptic::new(&m, prec)?;
        leg = leg.max(e.legendre_residual()?);
        for _ in 0..4 {
            let (s, t): (f64, f64) = (rng.random(), rng.random());
            let z = Complex::with_val(prec, e.tau() * Float::with_val(prec, t)) + s;
            sig = sig.max(e.sigma_quasiperiod_residual(&z));
            for (a, b) in [(0.0, 0.0), (0.5, 0.5), (0.5, 0.0), (0.25, -0.75)] {
                let r = theta_quasiperiod_residual(&mp::fl(prec, a), &mp::fl(prec, b), e.tau(), &z, prec)?;
                th = th.max(r);
            }
        }
        let z = mp::cx(prec, 0.05, 0.03);
        bridge = bridge.max(e.sigma_bridge_residual(&z));
        let a = dedekind_eta(e.tau(), prec);
        let b = dedekind_eta_pentagonal(e.tau(), prec);
        eta = eta.max(mp::cabs(&Complex::with_val(prec, &a - &b)).to_f64());
    }
    items.push(item("Legendre relation", leg, tol));
    items.push(item("sigma quasi-periodicity", sig, tol));
    items.push(item("sigma theta bridge", bridge, tol));
    items.push(item("theta quasi-periodicity", th, tol));
    items.push(item("Dedekind eta routes", eta, tol));

    let fay = slater_suite(fay_residual, 2..=8, opts.point_sets, prec, &mut rng)?;
    items.push(item("Fay identity", fay, opts.slater_tolerance));
    let ecxa = slater_suite(ecxa_residual, 1..=6, opts.point_sets, prec, &mut rng)?;
    items.push(item("translated sigma product", ecxa, opts.slater_tolerance));

    let z1 = zeta_deriv_minus1_functional(prec)?;
    let z2 = zeta_deriv_minus1_glaisher(prec)?;
    items.push(item("zeta'(-1) routes", Float::with_val(prec, &z1 - &z2).abs().to_f64(), tol));
    let t1 = sphere_two_tau_closed(prec)?;
    let t2 = sphere_two_tau_hurwitz(prec)?;
    items.push(item("sphere torsion routes", Float::with_val(prec, &t1 - &t2).abs().to_f64(), tol));

    let sc = ScenarioConfig {
        psi: vec![Mode { a: 1, b: 0, sin: false, coef: 0.05 }],
        conformal: vec![Mode { a: 2, b: 1, sin: false, coef: 0.1 }],
        ..ScenarioConfig::sphere()
    };
    let s = build_scenario(&sc, digits_to_bits(30))?;
    let (g1, g2, g3) = s.gauss_bonnet_residuals()?;
    items.push(item("Gauss-Bonnet", g1.max(g2).max(g3), 1e-12));

    let pass = items.iter().all(|i| i.pass);
    Ok(SelftestReport { digits: opts.digits, seed: opts.seed, items, pass })
}
