//! Job configuration: a JSON file mirroring one [`SolveJob`] plus output
//! paths, phase-2 ranges and check toggles.
//!
//! Numeric job parameters (`eps`, `Y`, principal-part values) are decimal
//! strings, with exact rationals `"p/q"` also accepted for principal-part
//! components.

use maassforms::bigarith::make_context;
use maassforms::error::{Error, Result};
use maassforms::maassform::{HarmonicParams, Mode, PrincipalPart};
use maassforms::solver::SolveJob;
use maassforms::specialfun::WeightParam;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrincipalTermConfig {
    pub n: i64,
    pub h: u32,
    pub re: String,
    #[serde(default)]
    pub im: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase2Config {
    pub from: i64,
    pub to: i64,
    #[serde(default = "default_budget")]
    pub digit_loss_budget: u32,
}

fn default_budget() -> u32 {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckConfig {
    /// Second height for the Y-independence check (re-solves the system).
    #[serde(default)]
    pub y2: Option<String>,
    /// Pass threshold for the Y-independence check; default 10^(-digits/2).
    /// The certified bounds are pessimistic, so jobs sized for speed rather
    /// than accuracy will want a looser value here.
    #[serde(default)]
    pub y_threshold: Option<String>,
    /// Number of automorphy-residual samples (0 disables the check).
    #[serde(default)]
    pub automorphy_samples: u32,
    /// Discriminant label of the c^- normalizer.
    #[serde(default)]
    pub cminus_normalizer_delta: Option<i64>,
    /// Discriminant labels to report scaled c^- ratios at.
    #[serde(default)]
    pub cminus_deltas: Vec<i64>,
    /// |L'| below this counts as vanishing in the dichotomy report.
    #[serde(default = "default_vanish")]
    pub lvalue_vanish_threshold: f64,
}

fn default_vanish() -> f64 {
    1e-10
}

/// Mirrors one solve job plus orchestration directives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobConfig {
    #[serde(rename = "N")]
    pub n: u32,
    /// "1/2", "-1/2", ...
    pub weight: String,
    /// "rho" | "rho_bar"
    pub rep: String,
    /// "harmonic" | "holomorphic"
    #[serde(default = "default_mode")]
    pub mode: String,
    pub principal_part: Vec<PrincipalTermConfig>,
    pub eps: String,
    #[serde(rename = "Y")]
    pub y: String,
    /// 0 = choose from M0 (and the aliasing margin)
    #[serde(rename = "Q", default)]
    pub q: u32,
    /// 0 = choose from eps and Y via the truncation model
    #[serde(rename = "M0", default)]
    pub m0: u32,
    pub precision_digits: u32,
    #[serde(default)]
    pub phase2: Option<Phase2Config>,
    #[serde(default)]
    pub lvalues_csv: Option<PathBuf>,
    /// Where the coefficient table is persisted (JSON).
    pub table_path: PathBuf,
    /// Optional flat CSV of the coefficients.
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    /// Where check/error reports are written (JSON).
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    #[serde(default)]
    pub checks: CheckConfig,
}

fn default_mode() -> String {
    "harmonic".to_string()
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("bad config {}: {e}", path.display())))
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.mode.as_str() {
            "harmonic" => Ok(Mode::Harmonic),
            "holomorphic" => Ok(Mode::Holomorphic),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }

    pub fn conjugated(&self) -> Result<bool> {
        match self.rep.as_str() {
            "rho" => Ok(false),
            "rho_bar" => Ok(true),
            other => Err(Error::invalid(format!(
                "rep must be \"rho\" or \"rho_bar\", got {other:?}"
            ))),
        }
    }

    /// Validates every precondition and builds the solve job.
    pub fn to_solve_job(&self) -> Result<SolveJob> {
        let ctx = make_context(self.precision_digits)?;
        let k = WeightParam::parse(&self.weight)?;
        let params = HarmonicParams::new(self.n, k, self.conjugated()?, self.mode()?)?;
        let mut terms = Vec::new();
        for t in &self.principal_part {
            let re = ctx.parse_decimal(&t.re)?;
            let im = match &t.im {
                Some(s) => ctx.parse_decimal(s)?,
                None => ctx.real_zero(),
            };
            terms.push(((t.n, t.h), ctx.complex_from(re, im)));
        }
        let principal = PrincipalPart::new(&params, terms)?;
        let job = SolveJob {
            params,
            principal,
            eps: ctx.parse_decimal(&self.eps)?,
            y: ctx.parse_decimal(&self.y)?,
            q: self.q,
            m0: self.m0,
            ctx,
        };
        job.resolve()?;
        Ok(job)
    }
}
