use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// On-disk model description (JSON). Unknown keys are rejected.
///
/// ```json
/// {
///   "dimension": 2,
///   "period": 6.283185307179586,
///   "parameters": { "k": 1.0 },
///   "surfaces": ["sin(t)"],
///   "zones": [
///     { "name": "+", "signature": [1],  "F0": ["0", "x2"], "F1": ["k*x1", "0"] },
///     { "name": "-", "signature": [-1], "F0": ["0", "x2"], "F1": ["k", "0"], "R": ["0", "0"] }
///   ],
///   "manifold": { "k": 1, "box": [[0.1, 1.0]], "beta0": ["0"] }
/// }
/// ```
///
/// Field expressions may use `t`, `x1..xd`, `eps` and the parameter names;
/// `beta0` uses `a1..ak` and parameters. `F1` and `R` default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub dimension: usize,
    pub period: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub surfaces: Vec<String>,
    pub zones: Vec<ZoneDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub signature: Vec<i8>,
    #[serde(rename = "F0")]
    pub f0: Vec<String>,
    #[serde(rename = "F1", default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<Vec<String>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldDoc {
    pub k: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub beta0: Vec<String>,
}
