//! Reports: the JSON output of the `pkgeo` binary. A report is a pure
//! function of (scene, seed, tool version): results are assembled into
//! ordered maps and vectors only, so serialization is byte-identical
//! across runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tol;

/// Residuals that failed to be finite are reported as this sentinel, which
/// fails every tolerance; JSON has no encoding for NaN or infinities.
pub const NON_FINITE_SENTINEL: f64 = 9.0e99;

/// Map a residual to something JSON-representable, turning NaN or infinite
/// values into a sentinel that can never pass a check. Residual folds must
/// go through this before `f64::max`, which would silently drop NaN.
pub fn finite_residual(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        NON_FINITE_SENTINEL
    }
}

/// One verified inequality: `observed <= tolerance`, with the module and
/// operation that produced the number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub module: String,
    pub operation: String,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(module: &str, operation: &str, observed: f64, tolerance: f64) -> CheckResult {
        let observed = finite_residual(observed);
        CheckResult {
            module: module.into(),
            operation: operation.into(),
            observed,
            tolerance,
            passed: observed <= tolerance,
        }
    }

    /// Check that a quantity stays above a floor (probe searches): it
    /// passes when `observed >= bound`.
    pub fn lower_bound(module: &str, operation: &str, observed: f64, bound: f64) -> CheckResult {
        let observed = finite_residual(observed);
        CheckResult {
            module: module.into(),
            operation: operation.into(),
            observed,
            tolerance: bound,
            passed: observed >= bound,
        }
    }

    /// One-line rendering for failing checks on stderr.
    pub fn failure_line(&self) -> String {
        format!(
            "FAIL {}::{}: observed {:e} vs tolerated {:e}",
            self.module, self.operation, self.observed, self.tolerance
        )
    }
}

/// Result of one analysis request, in request order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestResult {
    pub index: usize,
    pub kind: String,
    /// What the request acted on: object name, chart name, or family label.
    pub target: String,
    pub passed: bool,
    /// Named scalar outputs (quadrature values, extrema, counters).
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    /// CSV grid files written, relative to the report location.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<String>,
}

impl RequestResult {
    pub fn new(index: usize, kind: &str, target: &str) -> RequestResult {
        RequestResult {
            index,
            kind: kind.into(),
            target: target.into(),
            passed: true,
            scalars: BTreeMap::new(),
            checks: Vec::new(),
            grids: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: &str, value: f64) {
        self.scalars.insert(key.into(), finite_residual(value));
    }

    pub fn check(&mut self, c: CheckResult) {
        self.passed &= c.passed;
        self.checks.push(c);
    }
}

/// Full report for a run: tool identity, seed, the effective tolerance
/// table, and per-request results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub passed: bool,
    pub tolerances: BTreeMap<String, f64>,
    pub results: Vec<RequestResult>,
}

impl Report {
    pub fn new(seed: u64, tolerances: &Tolerances) -> Report {
        Report {
            tool: "pkgeo".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            passed: true,
            tolerances: tolerances.map().clone(),
            results: Vec::new(),
        }
    }

    pub fn push(&mut self, result: RequestResult) {
        self.passed &= result.passed;
        self.results.push(result);
    }

    /// Stable pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    /// One line per failing check, in report order.
    pub fn failure_lines(&self) -> Vec<String> {
        self.results
            .iter()
            .flat_map(|r| r.checks.iter())
            .filter(|c| !c.passed)
            .map(CheckResult::failure_line)
            .collect()
    }
}

///// Named tolerance table: the defaults live in [`tol`], scenes may
/// override any entry by key, and the effective table is echoed in the
/// report.
#[derive(Debug, Clone)]
pub struct Tolerances(BTreeMap<String, f64>);

/// The overridable tolerance keys with their defaults.
const TOLERANCE_DEFAULTS: &[(&str, f64)] = &[
    ("exact", tol::TOL_EXACT),
    ("nijenhuis", tol::TOL_NIJENHUIS),
    ("connection", tol::TOL_CONNECTION),
    ("lagrangian_defect", tol::TOL_LAGRANGIAN_DEFECT),
    ("null_rel", tol::TOL_NULL_REL),
    ("rank1_metric", tol::TOL_RANK1_METRIC),
    ("rank1_h", tol::TOL_RANK1_H),
    ("mean_curvature_arg", tol::TOL_MEAN_CURV_ARG),
    ("angle_gradient", tol::TOL_ANGLE_GRADIENT),
    ("beta_stddev", tol::TOL_BETA_STDDEV),
    ("induced_flat", tol::TOL_INDUCED_FLAT),
    ("hstationary", tol::TOL_HSTATIONARY),
    ("minimal_h", tol::TOL_MINIMAL_H),
    ("constant_angle_pde", tol::TOL_CONSTANT_ANGLE_PDE),
    ("probe_floor", tol::PROBE_FLOOR),
    ("area_rel", tol::TOL_AREA_REL),
    ("area_abs", tol::TOL_AREA_ABS),
    ("congruence_metric", tol::TOL_CONGRUENCE_METRIC),
    ("variation_pointwise", tol::TOL_VARIATION_POINTWISE),
    ("variation_sup", tol::TOL_VARIATION_SUP),
];

impl Tolerances {
    pub fn defaults() -> Tolerances {
        Tolerances(
            TOLERANCE_DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
    }

    /// Apply scene overrides; unknown keys and non-positive or non-finite
    /// values are rejected (they would silently disable checks).
    pub fn with_overrides(
        mut self,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<Tolerances, String> {
        for (key, value) in overrides {
            if !self.0.contains_key(key) {
                return Err(format!("unknown tolerance key `{key}`"));
            }
            if !(value.is_finite() && *value > 0.0) {
                return Err(format!("tolerance `{key}` must be finite and positive"));
            }
            self.0.insert(key.clone(), *value);
        }
        Ok(self)
    }

    /// Replace one entry (used by CLI flags such as `--tol-null`).
    pub fn set(&mut self, key: &str, value: f64) {
        assert!(self.0.contains_key(key), "unknown tolerance key `{key}`");
        self.0.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> f64 {
        *self
            .0
            .get(key)
            .unwrap_or_else(|| panic!("unknown tolerance key `{key}`"))
    }

    pub fn map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}
