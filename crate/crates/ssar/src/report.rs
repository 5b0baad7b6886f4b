//! JSON artifacts written by the command line and the run manifest that ties
//! them together. Field layouts are documented in `docs/outputs.md`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssar_core::assess::{AssessmentReport, TangencyResult};
use ssar_core::netcase::Tolerances;
use ssar_core::region::{BoundaryPoint, BoundarySpace, QuadraticBoundary};
use ssar_core::uncertainty::EllipsoidalUncertaintySet;

use crate::caseformat::tolerance_entries;
use crate::study::sha256_hex;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Digest of everything that determines the results (not worker count or timing).
    pub manifest_id: String,
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub seed: u64,
    /// `flag`, `case` or `entropy`.
    pub seed_source: String,
    pub workers: usize,
    pub options: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
    pub artifacts: Vec<FileDigest>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(
        command: &str,
        inputs: Vec<FileDigest>,
        seed: u64,
        seed_source: &str,
        workers: usize,
        options: BTreeMap<String, String>,
        tol: &Tolerances,
    ) -> Self {
        let tolerances: BTreeMap<String, f64> =
            tolerance_entries(tol).into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        let key = serde_json::json!({
            "command": command,
            "tool_version": TOOL_VERSION,
            "inputs": inputs,
            "seed": seed,
            "options": options,
            "tolerances": tolerances,
        });
        let manifest_id = sha256_hex(key.to_string().as_bytes())[..16].to_owned();
        Self {
            manifest_id,
            command: command.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            inputs,
            seed,
            seed_source: seed_source.to_owned(),
            workers,
            options,
            tolerances,
            artifacts: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    /// Writes `bytes` to `dir/name` and records its digest.
    pub fn write_artifact(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.artifacts.push(FileDigest { path: name.to_owned(), sha256: sha256_hex(bytes) });
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("non-finite number at `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn find_null(v: &serde_json::Value, path: &str) -> Result<(), ReportError> {
    match v {
        serde_json::Value::Null => Err(ReportError::NonFinite(path.to_owned())),
        serde_json::Value::Array(a) => {
            a.iter().enumerate().try_for_each(|(i, x)| find_null(x, &format!("{path}[{i}]")))
        }
        serde_json::Value::Object(o) => o.iter().try_for_each(|(k, x)| find_null(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

/// Pretty JSON with a trailing newline. serde_json writes NaN and infinities
/// as `null`; artifact types never contain a real null (absent options are
/// skipped), so any null is a non-finite number and is refused.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, ReportError> {
    let v = serde_json::to_value(value)?;
    find_null(&v, "$")?;
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownJson {
    pub unstable: usize,
    pub marginal: usize,
    pub singular_algebraic: usize,
    pub limit_violation: usize,
    pub non_convergence: usize,
    pub infeasible_steady_state: usize,
    pub numerical_failure: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessJson {
    pub manifest_id: String,
    pub case: String,
    pub farms: Vec<String>,
    pub forecast: Vec<f64>,
    pub classifier: String,
    pub seed: u64,
    pub alpha_conf: f64,
    pub eta: f64,
    pub n_total: usize,
    pub n_out: usize,
    pub p_instab: f64,
    pub breakdown: BreakdownJson,
    pub fallback_count: usize,
    pub copula_repaired: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<QuadraticJson>,
    pub wall_time_s: f64,
}

impl AssessJson {
    pub fn breakdown(r: &AssessmentReport) -> BreakdownJson {
        let b = &r.breakdown;
        BreakdownJson {
            unstable: b.unstable,
            marginal: b.marginal,
            singular_algebraic: b.singular_algebraic,
            limit_violation: b.limit_violation,
            non_convergence: b.non_convergence,
            infeasible_steady_state: b.infeasible_steady_state,
            numerical_failure: b.numerical_failure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EusJson {
    pub manifest_id: String,
    pub farms: Vec<String>,
    pub center: Vec<f64>,
    /// Row-major shape matrix.
    pub q: Vec<Vec<f64>>,
    pub eta: f64,
    pub alpha_conf: f64,
    /// Fraction of the fitting scenarios inside the set.
    pub coverage: f64,
    pub n_scenarios: usize,
}

impl EusJson {
    pub fn new(manifest_id: &str, farms: Vec<String>, eus: &EllipsoidalUncertaintySet, alpha: f64, coverage: f64, n: usize) -> Self {
        Self {
            manifest_id: manifest_id.to_owned(),
            farms,
            center: eus.center.clone(),
            q: rows(&eus.q),
            eta: eus.eta,
            alpha_conf: alpha,
            coverage,
            n_scenarios: n,
        }
    }
}

pub fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPointJson {
    pub p: Vec<f64>,
    pub kind: String,
    pub critical: [f64; 2],
    pub max_real: f64,
    pub distance: f64,
}

impl From<&BoundaryPoint> for BoundaryPointJson {
    fn from(b: &BoundaryPoint) -> Self {
        let c = b.critical.unwrap_or_default();
        Self { p: b.p.clone(), kind: b.kind.label().to_owned(), critical: [c.re, c.im], max_real: b.max_real, distance: b.distance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticJson {
    pub space: String,
    pub expansion: Vec<f64>,
    pub dependent: usize,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub quadratic: Vec<Vec<f64>>,
    pub orientation: f64,
    pub trust_radius: f64,
}

impl From<&QuadraticBoundary> for QuadraticJson {
    fn from(q: &QuadraticBoundary) -> Self {
        Self {
            space: match q.space {
                BoundarySpace::Extended => "extended",
                BoundarySpace::Wpi => "wind",
            }
            .to_owned(),
            expansion: q.expansion.clone(),
            dependent: q.dependent,
            gradient: q.gradient.clone(),
            hessian: rows(&q.hessian),
            linear: q.linear.clone(),
            quadratic: rows(&q.quadratic),
            orientation: q.orientation,
            trust_radius: q.trust_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyJson {
    pub point: Vec<f64>,
    pub eta_star: f64,
    pub critical_alpha: f64,
    pub direction: Vec<f64>,
    pub margins: Vec<f64>,
    pub euclidean: f64,
    pub residual: f64,
    pub within_trust_radius: bool,
}

impl From<&TangencyResult> for TangencyJson {
    fn from(t: &TangencyResult) -> Self {
        Self {
            point: t.point.clone(),
            eta_star: t.eta_star,
            critical_alpha: t.critical_alpha,
            direction: t.direction.clone(),
            margins: t.margins.clone(),
            euclidean: t.euclidean,
            residual: t.residual,
            within_trust_radius: t.within_trust_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryJson {
    pub manifest_id: String,
    pub farms: Vec<String>,
    pub forecast: Vec<f64>,
    pub expansion: BoundaryPointJson,
    pub quadratic: QuadraticJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangency: Option<TangencyJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangency_error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_are_refused() {
        #[derive(Serialize)]
        struct T {
            a: Vec<f64>,
        }
        assert!(to_json(&T { a: vec![1.0, 2.5] }).is_ok());
        let e = to_json(&T { a: vec![1.0, f64::NAN] }).unwrap_err();
        assert!(e.to_string().contains("$.a[1]"));
    }

    #[test]
    fn manifest_id_ignores_workers() {
        let tol = Tolerances::default();
        let a = Manifest::new("assess", vec![], 3, "flag", 1, BTreeMap::new(), &tol);
        let b = Manifest::new("assess", vec![], 3, "flag", 8, BTreeMap::new(), &tol);
        let c = Manifest::new("assess", vec![], 4, "flag", 1, BTreeMap::new(), &tol);
        assert_eq!(a.manifest_id, b.manifest_id);
        assert_ne!(a.manifest_id, c.manifest_id);
    }
}
