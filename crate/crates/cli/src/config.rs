//! Run configuration: a JSON document with an explicit schema version.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dims": { "n": 1, "k": 1, "l": 1 },
//!   "box": { "lower": [-2.0], "upper": [2.0] },
//!   "anchor": [["1"]],
//!   "connection": [[["0.5"]]],
//!   "structure": [[["0"]]],
//!   "curves": [{ "x": ["t"], "u": ["1"], "t0": 0.0, "t1": 1.0, "steps": 1000 }],
//!   "sections": [{ "s": ["1"], "psi": ["x0^2"] }],
//!   "seed": 7
//! }
//! ```
//!
//! `anchor` is either a gallery name or an `n × k` matrix of expressions in
//! `x0..`. `connection` is `[A][α][B]` (linear), `{"general": [A][α], "fiber_box": ...}`
//! with expressions in `x0.., y0..`, or `"gallery"`. `structure` is `[λ][α][β]`
//! or `"gallery"`.

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub dims: Option<Dims>,
    #[serde(default, rename = "box")]
    pub domain: Option<BoxSpec>,
    pub anchor: AnchorSpec,
    #[serde(default)]
    pub connection: Option<ConnectionSpec>,
    #[serde(default)]
    pub structure: Option<StructureSpec>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub sections: Vec<SectionSpec>,
    /// Evaluation points for `nabla`, `curvature` and `torsion`; defaults to
    /// a grid on the shrunk box.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Random samples per property check.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub expect: Expect,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum AnchorSpec {
    Gallery(String),
    Matrix(Vec<Vec<String>>),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum ConnectionSpec {
    Gallery(String),
    Linear(Vec<Vec<Vec<String>>>),
    General { general: Vec<Vec<String>>, fiber_box: BoxSpec },
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum StructureSpec {
    Gallery(String),
    Table(Vec<Vec<Vec<String>>>),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub x: Vec<String>,
    pub u: Vec<String>,
    pub t0: f64,
    pub t1: f64,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub s: Vec<String>,
    pub psi: Vec<String>,
}

/// Overrides for the default check tolerances.
#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub admissibility: Option<f64>,
    pub anchor_hom: Option<f64>,
    pub h_lift: Option<f64>,
    pub axioms: Option<f64>,
    pub involutivity: Option<f64>,
}

/// Expected outcomes for the informational checks; when set, the check is
/// required to match.
#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub partial: Option<bool>,
    pub anchor_hom: Option<bool>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            let suffix = format!(" at line {} column {}", e.line(), e.column());
            let message = e.to_string();
            let message = message.strip_suffix(&suffix).unwrap_or(&message);
            CliError::Config(format!("line {}, column {}: {message}", e.line(), e.column()))
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", config.schema_version)));
        }
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
