//! Loading a case file and the derived objects every command needs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use ssar_core::netcase::{validate_case, Diagnostic, NetworkCase, StudyConfig};
use ssar_core::region::{
    quadratic_boundary, ray_boundary_search, BoundaryPoint, BoundarySpace, QuadraticBoundary, QuadraticConfig,
    RegionError, StabilityMap, WpiMap,
};
use ssar_core::uncertainty::{build_shape_matrix, fit_eus, BetaMarginal, EllipsoidalUncertaintySet, ScenarioSet};

use crate::caseformat::{parse_case, CaseFormatError};

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: CaseFormatError },
    #[error("{path}: {} validation problem(s), first: {}", .diagnostics.len(), .diagnostics[0])]
    Invalid { path: PathBuf, diagnostics: Vec<Diagnostic> },
}

#[derive(Clone, Debug)]
pub struct Study {
    pub path: PathBuf,
    pub case: NetworkCase,
    pub cfg: StudyConfig,
    /// Hex SHA-256 of the case file bytes.
    pub digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads and parses a case file without validating it.
pub fn read_study(path: &Path) -> Result<Study, StudyError> {
    let bytes = std::fs::read(path).map_err(|source| StudyError::Io { path: path.to_owned(), source })?;
    let text = String::from_utf8_lossy(&bytes);
    let (case, cfg) =
        parse_case(&text).map_err(|source| StudyError::Format { path: path.to_owned(), source })?;
    Ok(Study { path: path.to_owned(), case, cfg, digest: sha256_hex(&bytes) })
}

/// Reads, parses and validates.
pub fn load_study(path: &Path) -> Result<Study, StudyError> {
    let s = read_study(path)?;
    let diagnostics = validate_case(&s.case, &s.cfg);
    if !diagnostics.is_empty() {
        return Err(StudyError::Invalid { path: path.to_owned(), diagnostics });
    }
    Ok(s)
}

impl Study {
    pub fn map(&self) -> WpiMap<'_> {
        WpiMap::scheduled(&self.case, &self.cfg.agc, self.cfg.tolerances.clone())
    }

    pub fn forecast(&self) -> Vec<f64> {
        self.case.forecast()
    }

    pub fn marginals(&self) -> Vec<BetaMarginal> {
        self.case.wind_farms.iter().map(|w| w.marginal).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.case.wind_farms.iter().map(|w| w.marginal.std_dev()).collect()
    }

    pub fn farm_names(&self) -> Vec<String> {
        self.case.wind_farms.iter().map(|w| w.name.clone()).collect()
    }

    /// `Q_ij = rho_ij sigma_i sigma_j` from the configured correlation.
    pub fn shape_matrix(&self) -> DMatrix<f64> {
        build_shape_matrix(&self.sigmas(), &self.cfg.rank_corr).expect("validated dimensions")
    }

    pub fn fit_eus(&self, scenarios: &ScenarioSet, alpha: f64) -> Result<EllipsoidalUncertaintySet, anyhow::Error> {
        Ok(fit_eus(&self.forecast(), &self.shape_matrix(), scenarios, alpha)?)
    }
}

/// Boundary point used as the expansion point of the quadratic surface: the
/// first crossing along `Q g`, where `g` is the gradient of the critical real
/// part at the forecast. That is the direction in which the critical mode
/// degrades fastest per unit of Mahalanobis distance. Falls back to `g`.
pub fn expansion_point(map: &WpiMap<'_>, q: &DMatrix<f64>, max_range: f64) -> Result<BoundaryPoint, RegionError> {
    let f = map.forecast().to_vec();
    let g = map.gradient(&f)?;
    let gv = nalgebra::DVector::from_vec(g.clone());
    let qg = q * &gv;
    let mut last = RegionError::ZeroDirection;
    for d in [qg.as_slice().to_vec(), g] {
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        match ray_boundary_search(map, &f, &d, max_range) {
            Ok(bp) => return Ok(bp),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Quadratic surface in wind space around `bp`, with the coordinate of largest
/// gradient magnitude as the dependent one.
pub fn wpi_quadratic(map: &WpiMap<'_>, bp: &BoundaryPoint) -> Result<QuadraticBoundary, RegionError> {
    let g = map.gradient(&bp.p)?;
    let dependent = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap_or(0);
    let cfg = QuadraticConfig { dependent, ..QuadraticConfig::default() };
    quadratic_boundary(map, &bp.p, BoundarySpace::Wpi, &cfg)
}
