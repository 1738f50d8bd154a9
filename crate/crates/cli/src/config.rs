//! Study configuration: a sectioned `key = value` file (TOML subset, no nesting below a section).
//!
//! ```text
//! [problem]
//! case = "poisson-smooth"      # catalog name
//! k = 1
//! equation = "poisson"         # optional, must match the case
//! beta = [1.0, 0.0]            # optional constant convection (cdr, oseen)
//! reaction = 1.0               # optional constant reaction (cdr)
//! nu = 1.0                     # optional viscosity (stokes, oseen)
//!
//! [mesh]
//! generator = "structured"     # optional, "structured" or "lshape", must match the case domain
//! levels = [4, 8, 16, 32]
//!
//! [stabilization]
//! tau = 1.0
//! tau_n = 1.0
//! tau_t = 1.0
//!
//! [checks]
//! monolithic = false
//! inf_sup = false
//! inf_sup_method = "auto"      # auto, dense or lanczos
//! error_bounds = false
//! rate_error = "u"             # error whose last-pair rate is checked
//! min_rate = 1.9
//! max_rate = 2.5
//! seed = 0
//!
//! [output]
//! dir = "out"
//! plot_data = true
//! ```
//!
//! Coefficient overrides replace the catalog data, so the exact solution is no longer known.

use std::path::PathBuf;
use std::sync::Arc;

use hdg_core::analysis::{case_by_name, error_names, Domain, InfSupMethod, ManufacturedCase, Stabilization};
use hdg_core::fields::{constant_scalar, constant_vector};
use hdg_core::{Equation, HdgError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub stabilization: StabilizationSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub case: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizationSection {
    pub tau: f64,
    pub tau_n: f64,
    pub tau_t: f64,
}

impl Default for StabilizationSection {
    fn default() -> Self {
        StabilizationSection { tau: 1.0, tau_n: 1.0, tau_t: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub monolithic: bool,
    pub inf_sup: bool,
    pub inf_sup_method: String,
    pub error_bounds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rate: Option<f64>,
    pub seed: u64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            monolithic: false,
            inf_sup: false,
            inf_sup_method: "auto".into(),
            error_bounds: false,
            rate_error: None,
            min_rate: None,
            max_rate: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plot_data: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), plot_data: true }
    }
}

fn config_err(msg: impl Into<String>) -> HdgError {
    HdgError::Config(msg.into())
}

impl StudyConfig {
    /// Parses and validates.
    pub fn parse(text: &str) -> Result<StudyConfig> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let case = case_by_name(&self.problem.case)?;
        let eq = case.equation;
        if let Some(e) = &self.problem.equation {
            let named: Equation = e.parse()?;
            if named != eq {
                return Err(config_err(format!("case `{}` is a {} problem, not `{e}`", case.name, eq.name())));
            }
        }
        if self.problem.k > 4 {
            return Err(config_err(format!("k = {} is outside 0..=4", self.problem.k)));
        }
        if self.problem.beta.is_some() && !matches!(eq, Equation::Cdr | Equation::Oseen) {
            return Err(config_err("`beta` applies to cdr and oseen cases only"));
        }
        if self.problem.reaction.is_some() && eq != Equation::Cdr {
            return Err(config_err("`reaction` applies to cdr cases only"));
        }
        if self.problem.nu.is_some() && !eq.is_flow() {
            return Err(config_err("`nu` applies to stokes and oseen cases only"));
        }
        let finite = [self.stabilization.tau, self.stabilization.tau_n, self.stabilization.tau_t]
            .into_iter()
            .chain(self.problem.beta.into_iter().flatten())
            .chain(self.problem.reaction)
            .chain(self.problem.nu)
            .chain(self.checks.min_rate)
            .chain(self.checks.max_rate)
            .all(f64::is_finite);
        if !finite {
            return Err(config_err("numeric values must be finite"));
        }
        let generator = match case.domain {
            Domain::UnitSquare => "structured",
            Domain::LShape => "lshape",
        };
        if let Some(g) = &self.mesh.generator {
            if g != "structured" && g != "lshape" {
                return Err(config_err(format!("unknown mesh generator `{g}`")));
            }
            if g != generator {
                return Err(config_err(format!("case `{}` needs the `{generator}` generator", case.name)));
            }
        }
        if self.mesh.levels.is_empty() {
            return Err(config_err("`mesh.levels` is empty"));
        }
        for &n in &self.mesh.levels {
            if n == 0 || (generator == "lshape" && n % 2 == 1) {
                return Err(config_err(format!("invalid level n = {n} for the {generator} generator")));
            }
        }
        self.inf_sup_method()?;
        if self.checks.seed > i64::MAX as u64 {
            return Err(config_err(format!("seed {} does not fit a signed 64-bit integer", self.checks.seed)));
        }
        if let Some(name) = &self.checks.rate_error {
            if !error_names(eq).contains(&name.as_str()) {
                return Err(config_err(format!(
                    "unknown error `{name}`; available: {}",
                    error_names(eq).join(", ")
                )));
            }
        }
        if let (Some(lo), Some(hi)) = (self.checks.min_rate, self.checks.max_rate) {
            if lo > hi {
                return Err(config_err(format!("rate band [{lo}, {hi}] is empty")));
            }
        }
        if self.checks.rate_error.is_none() && (self.checks.min_rate.is_some() || self.checks.max_rate.is_some()) {
            return Err(config_err("a rate band needs `rate_error`"));
        }
        Ok(())
    }

    pub fn inf_sup_method(&self) -> Result<InfSupMethod> {
        match self.checks.inf_sup_method.as_str() {
            "auto" => Ok(InfSupMethod::Auto),
            "dense" => Ok(InfSupMethod::Dense),
            "lanczos" => Ok(InfSupMethod::Lanczos),
            m => Err(config_err(format!("unknown inf-sup method `{m}`"))),
        }
    }

    /// True when coefficient overrides replace the catalog data.
    pub fn has_overrides(&self) -> bool {
        self.problem.beta.is_some() || self.problem.reaction.is_some() || self.problem.nu.is_some()
    }

    /// The catalog case with coefficient overrides applied.
    pub fn case(&self) -> Result<ManufacturedCase> {
        let mut case = case_by_name(&self.problem.case)?;
        if let Some(b) = self.problem.beta {
            case.beta = constant_vector(b);
            case.div_beta = constant_scalar(0.0);
        }
        if let Some(c) = self.problem.reaction {
            case.reaction = Arc::new(move |_| c);
        }
        if let Some(nu) = self.problem.nu {
            case.nu = nu;
        }
        Ok(case)
    }

    pub fn stabilization(&self) -> Stabilization {
        let s = &self.stabilization;
        Stabilization { tau: s.tau, tau_n: s.tau_n, tau_t: s.tau_t }
    }

    /// SHA-256 of the canonical text with the output location removed, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection { dir: PathBuf::new(), plot_data: c.output.plot_data };
        let digest = Sha256::digest(c.to_text().as_bytes());
        format!("{digest:x}")[..16].to_string()
    }
}
