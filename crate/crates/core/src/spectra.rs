//! Eigen-analysis of the reduced state matrix, stability verdicts and the
//! first-order sensitivity of the critical eigenvalue.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::ReducedStateMatrix;
use crate::linalg;
use crate::netcase::Tolerances;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SpectraError {
    #[error("eigenvalue computation failed to converge")]
    NumericalFailure,
    #[error("critical eigenvalue is not simple (separation {separation:e})")]
    DegenerateEigenvalue { separation: f64 },
    #[error("state matrix unavailable at perturbed point: {0}")]
    Evaluation(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    /// Spectrum with the rotor-angle reference mode removed when present.
    pub eigenvalues: Vec<C64>,
    pub max_real: f64,
    pub critical_index: usize,
    pub critical: C64,
    /// Right eigenvector `v` of the critical eigenvalue.
    pub right: DVector<C64>,
    /// Left eigenvector `w`, scaled so that `w^H v = 1`.
    pub left: DVector<C64>,
    /// `|w^H v|` before scaling, with unit-norm `w` and `v`. Small values mean
    /// an ill-conditioned eigenvalue.
    pub biorthogonality: f64,
    /// Distance from the critical eigenvalue to the nearest other eigenvalue.
    pub separation: f64,
    /// `(eigenvalue, damping ratio)` for every oscillatory mode with `Im > 0`.
    pub damping: Vec<(C64, f64)>,
    pub reference_removed: bool,
    /// The matrix the eigenvectors belong to (deflated if the reference mode was removed).
    pub matrix: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StabilityStatus {
    Stable,
    Unstable,
    Marginal,
    SingularAlgebraic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityVerdict {
    pub status: StabilityStatus,
    /// `+inf` for a singular algebraic block.
    pub max_real: f64,
    pub distance_to_axis: f64,
    pub critical: Option<C64>,
    /// Reciprocal condition of the algebraic block.
    pub rcond: f64,
}

impl StabilityVerdict {
    pub fn singular(rcond: f64) -> Self {
        Self {
            status: StabilityStatus::SingularAlgebraic,
            max_real: f64::INFINITY,
            distance_to_axis: f64::INFINITY,
            critical: None,
            rcond,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.status == StabilityStatus::Stable
    }
}

/// Removes the rotor-angle reference mode. In coordinates relative to the
/// first angle state the matrix is block lower triangular with a zero column,
/// so dropping that coordinate leaves every other eigenvalue untouched.
pub fn deflate_reference(a: &DMatrix<f64>, angle_states: &[usize]) -> DMatrix<f64> {
    let Some((&r, rest)) = angle_states.split_first() else {
        return a.clone();
    };
    let n = a.nrows();
    let mut m = a.clone();
    // A P^-1: column r becomes the sum over all angle columns
    for &i in rest {
        for row in 0..n {
            m[(row, r)] += a[(row, i)];
        }
    }
    // P (A P^-1): angle rows become differences to row r
    let row_r: Vec<f64> = (0..n).map(|c| m[(r, c)]).collect();
    for &i in rest {
        for (c, rv) in row_r.iter().enumerate() {
            m[(i, c)] -= rv;
        }
    }
    m.remove_row(r).remove_column(r)
}

fn working_matrix(a: &ReducedStateMatrix) -> DMatrix<f64> {
    if a.reference_mode {
        deflate_reference(&a.a, &a.angle_states)
    } else {
        a.a.clone()
    }
}

fn critical_of(eigs: &[C64]) -> usize {
    let mut best = 0;
    for (i, l) in eigs.iter().enumerate() {
        let b = eigs[best];
        let tie = (l.re - b.re).abs() <= 1e-12 * (1.0 + b.re.abs());
        if l.re > b.re && !tie || tie && l.im > b.im {
            best = i;
        }
    }
    best
}

/// Full spectrum, maximum real part and the critical eigenpair.
pub fn eigen_analysis(a: &ReducedStateMatrix) -> Result<SpectralSummary, SpectraError> {
    let m = working_matrix(a);
    let eigenvalues = linalg::eigenvalues(&m).ok_or(SpectraError::NumericalFailure)?;
    if eigenvalues.is_empty() {
        return Err(SpectraError::NumericalFailure);
    }
    let critical_index = critical_of(&eigenvalues);
    let critical = eigenvalues[critical_index];
    let separation = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != critical_index)
        .map(|(_, l)| (l - critical).norm())
        .fold(f64::INFINITY, f64::min);

    let right = linalg::right_eigenvector(&m, critical).ok_or(SpectraError::NumericalFailure)?;
    let left_unit = linalg::left_eigenvector(&m, critical).ok_or(SpectraError::NumericalFailure)?;
    let s = linalg::hdot(&left_unit, &right);
    let biorthogonality = s.norm();
    let left = if biorthogonality > 0.0 { left_unit.map(|c| c / s.conj()) } else { left_unit };

    let damping = eigenvalues
        .iter()
        .filter(|l| l.im > 0.0)
        .map(|l| (*l, -l.re / l.norm()))
        .collect();

    Ok(SpectralSummary {
        max_real: critical.re,
        eigenvalues,
        critical_index,
        critical,
        right,
        left,
        biorthogonality,
        separation,
        damping,
        reference_removed: a.reference_mode,
        matrix: m,
    })
}

/// Eigenvalues only; cheaper than [`eigen_analysis`].
pub fn spectrum(a: &ReducedStateMatrix) -> Result<Vec<C64>, SpectraError> {
    linalg::eigenvalues(&working_matrix(a)).ok_or(SpectraError::NumericalFailure)
}

pub fn max_real_part(eigs: &[C64]) -> f64 {
    eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn classify(max_real: f64, margin_tol: f64) -> StabilityStatus {
    if max_real.abs() <= margin_tol {
        StabilityStatus::Marginal
    } else if max_real < 0.0 {
        StabilityStatus::Stable
    } else {
        StabilityStatus::Unstable
    }
}

pub fn stability_verdict(s: &SpectralSummary, margin_tol: f64) -> StabilityVerdict {
    StabilityVerdict {
        status: classify(s.max_real, margin_tol),
        max_real: s.max_real,
        distance_to_axis: s.max_real.abs(),
        critical: Some(s.critical),
        rcond: 1.0,
    }
}

/// Verdict from eigenvalues alone.
pub fn verdict_from_eigenvalues(eigs: &[C64], rcond: f64, margin_tol: f64) -> StabilityVerdict {
    let i = critical_of(eigs);
    let mr = eigs.get(i).map_or(f64::NEG_INFINITY, |l| l.re);
    StabilityVerdict {
        status: classify(mr, margin_tol),
        max_real: mr,
        distance_to_axis: mr.abs(),
        critical: eigs.get(i).copied(),
        rcond,
    }
}

/// Derivative of the critical real part along a parameter direction,
/// `Re(w^H dA v) / (w^H v)`, with `dA` a central difference of the state
/// matrix. `state_matrix(t)` must return the reduced matrix at the base point
/// displaced by `t` times the direction.
pub fn critical_real_sensitivity<F>(
    mut state_matrix: F,
    direction: &[f64],
    tol: &Tolerances,
) -> Result<f64, SpectraError>
where
    F: FnMut(f64) -> Result<ReducedStateMatrix, SpectraError>,
{
    if direction.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let base = state_matrix(0.0)?;
    let summary = eigen_analysis(&base)?;
    sensitivity_from_summary(&summary, &base, &mut state_matrix, tol)
}

/// As [`critical_real_sensitivity`] with the base spectrum already at hand.
pub fn sensitivity_from_summary<F>(
    summary: &SpectralSummary,
    base: &ReducedStateMatrix,
    state_matrix: &mut F,
    tol: &Tolerances,
) -> Result<f64, SpectraError>
where
    F: FnMut(f64) -> Result<ReducedStateMatrix, SpectraError>,
{
    if summary.separation <= tol.eig_sep_tol {
        return Err(SpectraError::DegenerateEigenvalue { separation: summary.separation });
    }
    let h = tol.sensitivity_step;
    let plus = state_matrix(h)?;
    let minus = state_matrix(-h)?;
    let da = (working_matrix(&plus) - working_matrix(&minus)) / (2.0 * h);
    let _ = base;
    Ok(directional_derivative(summary, &da).re)
}

/// `w^H dA v` for the critical pair of `summary` (with `w^H v = 1`).
pub fn directional_derivative(summary: &SpectralSummary, da: &DMatrix<f64>) -> C64 {
    let v = &summary.right;
    let n = v.len();
    let mut out = C64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..n {
            let x = da[(i, j)];
            if x != 0.0 {
                row += v[j] * x;
            }
        }
        out += summary.left[i].conj() * row;
    }
    out
}
