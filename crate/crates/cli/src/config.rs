//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qhall_core::asymptotics::Term;
use qhall_core::geometry::ScenarioConfig;
use qhall_core::partition::Route;

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub p_min: u32,
    pub p_max: u32,
    /// Working decimal digits; absent means `30 + 2p` per point.
    pub precision_digits: Option<u32>,
    /// Absolute tolerance the run must certify; checked against the precision.
    pub tolerance: Option<f64>,
    pub level: u32,
    pub route: Route,
    pub seed: u64,
    pub nuisance: Vec<Term>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            p_min: 8,
            p_max: 48,
            precision_digits: None,
            tolerance: None,
            level: 0,
            route: Route::Auto,
            seed: 1,
            nuisance: vec![Term::LogPOverP, Term::InvP],
        }
    }
}

/// Tolerance on a fitted-minus-predicted delta.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tol {
    pub tol: f64,
    #[serde(default)]
    pub relative: bool,
}

impl Tol {
    pub const fn abs(tol: f64) -> Tol {
        Tol { tol, relative: false }
    }
    pub const fn rel(tol: f64) -> Tol {
        Tol { tol, relative: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub a2: Tol,
    pub b1: Tol,
    pub a1: Tol,
    pub b0: Tol,
    pub a0: Tol,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { a2: Tol::rel(1e-3), b1: Tol::abs(1e-3), a1: Tol::rel(1e-3), b0: Tol::abs(5e-2), a0: Tol::abs(5e-2) }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Partition-function rows (CSV).
    pub csv: Option<PathBuf>,
    /// Report (JSON).
    pub json: Option<PathBuf>,
    /// p versus residual after subtracting the fitted leading terms (CSV).
    pub residuals: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let r = &self.run;
        if r.p_min < 1 {
            return Err(CliError::Config("p_min must be at least 1".into()));
        }
        if r.p_max < r.p_min {
            return Err(CliError::Config("p_max must be at least p_min".into()));
        }
        if let Some(t) = r.tolerance {
            if !(t > 0.0) {
                return Err(CliError::Config("tolerance must be positive".into()));
            }
        }
        if r.precision_digits == Some(0) {
            return Err(CliError::Config("precision_digits must be positive".into()));
        }
        let v = &self.verify;
        for (n, t) in [("a2", v.a2), ("b1", v.b1), ("a1", v.a1), ("b0", v.b0), ("a0", v.a0)] {
            if !(t.tol > 0.0) {
                return Err(CliError::Config(format!("verify tolerance for {n} must be positive")));
            }
        }
        Ok(())
    }

    /// Fitting needs at least eight points.
    pub fn validate_for_fit(&self) -> Result<(), CliError> {
        if self.run.p_max < self.run.p_min + 7 {
            return Err(CliError::Config("fitting needs p_max ≥ p_min + 7".into()));
        }
        Ok(())
    }

    pub fn sphere_default() -> Self {
        RunConfig {
            scenario: ScenarioConfig::sphere(),
            run: RunSection { p_max: 64, ..Default::default() },
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn torus_default(tau_re: f64, tau_im: f64) -> Self {
        RunConfig {
            scenario: ScenarioConfig::torus(tau_re, tau_im),
            run: RunSection::default(),
            verify: VerifySection::default(),
            output: OutputSection::default(),
        }
    }
}

pub const TEMPLATE_HEADER: &str = "\
# qhall run configuration
#
# Conventions:
#   - natural logarithms throughout;
#   - the line bundle L has degree 1 and E is the trivial line bundle;
#   - dv = omega / 2pi, so the volume of X for dv is 1/2pi;
#   - sphere coordinates (u, phi), u = (1-|w|^2)/(1+|w|^2), w = y/x, with the
#     divisor D at u = -1 (w = infinity); omega0 = du dphi / 4pi;
#   - torus z = s + t tau, omega0 = ds dt, divisor D at z = 0;
#   - h^L = h^L_0 e^{-psi}, omega^X = e^{u} omega0 / N (N normalises the area);
#   - perturbation modes: sphere (a, b) = (l, m) with P_l^|m|(u) cos(m phi),
#     negative m for sin(|m| phi); torus (a, b) = (m, n) with cos or sin of
#     2pi(m s + n t);
#   - s0, s_d_l, s_d_e are complex multipliers [re, im] of the canonical
#     elements (s0 = 1 is the integrally normalised element);
#   - verify tolerances compare fitted with predicted coefficients
#     (relative = true divides by |predicted|).
#
# Exit codes: 0 pass, 1 verification failure, 2 config error,
# 3 numerical resolution failure.
";

/// Template written by `init`.
pub fn template(genus: u8) -> String {
    let cfg = if genus == 1 { RunConfig::torus_default(0.0, 1.0) } else { RunConfig::sphere_default() };
    let body = toml::to_string(&cfg).expect("serialisable config");
    format!("{TEMPLATE_HEADER}\n{body}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips() {
        for g in [0u8, 1] {
            let t = template(g);
            let c = RunConfig::from_toml(&t).unwrap();
            assert_eq!(c.scenario.genus, g);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(RunConfig::from_toml("[scenario]\ngenus = 0\nfoo = 1\n").is_err());
        assert!(RunConfig::from_toml("[scenario]\ngenus = 0\n[run]\np_min = 0\n").is_err());
        assert!(RunConfig::from_toml("[scenario]\ngenus = 0\n[run]\np_min = 9\np_max = 3\n").is_err());
        let c = RunConfig::from_toml("[scenario]\ngenus = 0\n[run]\np_min = 4\np_max = 8\n").unwrap();
        assert!(c.validate_for_fit().is_err());
    }

    #[test]
    fn perturbation_syntax() {
        let c = RunConfig::from_toml(
            "[scenario]\ngenus = 0\npsi = [{ a = 1, b = 0, coef = 0.03 }]\n[verify]\na1 = { tol = 1e-2, relative = true }\n",
        )
        .unwrap();
        assert_eq!(c.scenario.psi.len(), 1);
        assert_eq!(c.verify.a1, Tol::rel(1e-2));
    }
}
