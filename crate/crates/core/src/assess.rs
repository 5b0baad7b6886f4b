//! Monte Carlo instability probability, the most vulnerable direction of the
//! ellipsoidal set, stability margins and curtailment what-ifs.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::powerflow::{Bound, PowerFlowError, UnitRef};
use crate::region::{boundary_residual, InadmissibleCause, PointOutcome, QuadraticBoundary, StabilityMap, WpiMap};
use crate::spectra::StabilityStatus;
use crate::uncertainty::{coverage, EllipsoidalUncertaintySet, ScenarioSet};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AssessError {
    #[error("the boundary is not reachable from the ellipsoid center")]
    NoTangency,
    #[error("shape matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassifierMode {
    DirectEigen,
    QuadraticBoundary,
}

impl ClassifierMode {
    pub fn label(self) -> &'static str {
        match self {
            ClassifierMode::DirectEigen => "direct-eigen",
            ClassifierMode::QuadraticBoundary => "quadratic-boundary",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Classifier<'a> {
    /// Full eigen-analysis of every sample.
    Direct,
    /// Sign of the quadratic boundary residual inside its trust radius, direct
    /// evaluation outside it.
    Quadratic(&'a QuadraticBoundary),
}

impl Classifier<'_> {
    pub fn mode(&self) -> ClassifierMode {
        match self {
            Classifier::Direct => ClassifierMode::DirectEigen,
            Classifier::Quadratic(_) => ClassifierMode::QuadraticBoundary,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleClass {
    Stable,
    Unstable,
    Marginal,
    SingularAlgebraic,
    LimitViolation,
    NonConvergence,
    InfeasibleSteadyState,
    NumericalFailure,
}

impl SampleClass {
    pub fn is_out(self) -> bool {
        self != SampleClass::Stable
    }

    pub fn label(self) -> &'static str {
        match self {
            SampleClass::Stable => "stable",
            SampleClass::Unstable => "unstable",
            SampleClass::Marginal => "marginal",
            SampleClass::SingularAlgebraic => "singular_algebraic",
            SampleClass::LimitViolation => "limit_violation",
            SampleClass::NonConvergence => "non_convergence",
            SampleClass::InfeasibleSteadyState => "infeasible_steady_state",
            SampleClass::NumericalFailure => "numerical_failure",
        }
    }
}

impl From<&PointOutcome> for SampleClass {
    fn from(o: &PointOutcome) -> Self {
        match o {
            PointOutcome::Assessed(v) => match v.status {
                StabilityStatus::Stable => SampleClass::Stable,
                StabilityStatus::Unstable => SampleClass::Unstable,
                StabilityStatus::Marginal => SampleClass::Marginal,
                StabilityStatus::SingularAlgebraic => SampleClass::SingularAlgebraic,
            },
            PointOutcome::Inadmissible(c) => match c {
                InadmissibleCause::LimitViolation { .. } => SampleClass::LimitViolation,
                InadmissibleCause::PowerFlowDiverged => SampleClass::NonConvergence,
                InadmissibleCause::InfeasibleSteadyState => SampleClass::InfeasibleSteadyState,
                InadmissibleCause::NumericalFailure => SampleClass::NumericalFailure,
            },
        }
    }
}

/// Classification of one sample, with a note of whether the quadratic
/// classifier had to fall back to direct evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleVerdict {
    pub class: SampleClass,
    pub fallback: bool,
}

pub fn classify_sample(map: &WpiMap<'_>, classifier: Classifier<'_>, p_w: &[f64]) -> SampleVerdict {
    match classifier {
        Classifier::Direct => SampleVerdict { class: (&map.outcome(p_w)).into(), fallback: false },
        Classifier::Quadratic(qb) => {
            if map.lift(p_w).is_err() {
                return SampleVerdict { class: (&map.outcome(p_w)).into(), fallback: false };
            }
            let r = boundary_residual(qb, p_w);
            if r.outside_trust_radius {
                return SampleVerdict { class: (&map.outcome(p_w)).into(), fallback: true };
            }
            let class = if r.value < 0.0 {
                SampleClass::Stable
            } else if r.value > 0.0 {
                SampleClass::Unstable
            } else {
                SampleClass::Marginal
            };
            SampleVerdict { class, fallback: false }
        }
    }
}

/// Counts of samples outside the region, by cause.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Breakdown {
    pub unstable: usize,
    pub marginal: usize,
    pub singular_algebraic: usize,
    pub limit_violation: usize,
    pub non_convergence: usize,
    pub infeasible_steady_state: usize,
    pub numerical_failure: usize,
}

impl Breakdown {
    pub fn add(&mut self, c: SampleClass) {
        match c {
            SampleClass::Stable => {}
            SampleClass::Unstable => self.unstable += 1,
            SampleClass::Marginal => self.marginal += 1,
            SampleClass::SingularAlgebraic => self.singular_algebraic += 1,
            SampleClass::LimitViolation => self.limit_violation += 1,
            SampleClass::NonConvergence => self.non_convergence += 1,
            SampleClass::InfeasibleSteadyState => self.infeasible_steady_state += 1,
            SampleClass::NumericalFailure => self.numerical_failure += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.unstable
            + self.marginal
            + self.singular_algebraic
            + self.limit_violation
            + self.non_convergence
            + self.infeasible_steady_state
            + self.numerical_failure
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssessmentReport {
    pub p_instab: f64,
    pub n_out: usize,
    pub n_total: usize,
    pub mode: ClassifierMode,
    pub breakdown: Breakdown,
    /// Samples the quadratic classifier handed to direct evaluation.
    pub fallback_count: usize,
    /// Filled in by drivers that have a clock.
    pub wall_time_s: f64,
}

/// Aggregates per-sample verdicts. Order does not matter.
pub fn tally(verdicts: &[SampleVerdict], mode: ClassifierMode) -> AssessmentReport {
    let mut breakdown = Breakdown::default();
    let mut fallback_count = 0;
    for v in verdicts {
        breakdown.add(v.class);
        fallback_count += usize::from(v.fallback);
    }
    let n_out = breakdown.total();
    let n_total = verdicts.len();
    AssessmentReport {
        p_instab: if n_total == 0 { 0.0 } else { n_out as f64 / n_total as f64 },
        n_out,
        n_total,
        mode,
        breakdown,
        fallback_count,
        wall_time_s: 0.0,
    }
}

/// Classifies every scenario and returns the fraction outside the region.
pub fn instability_probability(map: &WpiMap<'_>, scenarios: &ScenarioSet, classifier: Classifier<'_>) -> AssessmentReport {
    let verdicts: Vec<SampleVerdict> = (0..scenarios.len())
        .map(|i| classify_sample(map, classifier, &scenarios.row(i)))
        .collect();
    tally(&verdicts, classifier.mode())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangencyResult {
    /// Tangent point `A`.
    pub point: Vec<f64>,
    /// Squared Mahalanobis distance of `A` from the center.
    pub eta_star: f64,
    /// Fraction of scenarios within `eta_star`.
    pub critical_alpha: f64,
    /// `(A - p_w0) / |A - p_w0|`.
    pub direction: Vec<f64>,
    pub margins: Vec<f64>,
    pub euclidean: f64,
    /// Boundary residual at `A` (zero for a polyline).
    pub residual: f64,
    pub within_trust_radius: bool,
}

/// Per-coordinate distance from the forecast to the tangent point.
pub fn stability_margins(center: &[f64], a: &[f64]) -> Vec<f64> {
    a.iter().zip(center).map(|(x, c)| (x - c).abs()).collect()
}

fn tangency_result(
    eus: &EllipsoidalUncertaintySet,
    point: Vec<f64>,
    distances: &[f64],
    residual: f64,
    within_trust_radius: bool,
) -> TangencyResult {
    let eta_star = crate::uncertainty::mahalanobis_sq(eus, &point);
    let diff: Vec<f64> = point.iter().zip(&eus.center).map(|(a, c)| a - c).collect();
    let euclidean = libm::sqrt(diff.iter().map(|d| d * d).sum());
    let direction = if euclidean > 0.0 { diff.iter().map(|d| d / euclidean).collect() } else { diff.clone() };
    TangencyResult {
        margins: stability_margins(&eus.center, &point),
        critical_alpha: coverage(distances, eta_star),
        point,
        eta_star,
        direction,
        euclidean,
        residual,
        within_trust_radius,
    }
}

fn check_dims(eus: &EllipsoidalUncertaintySet, n: usize) -> Result<(), AssessError> {
    if eus.center.len() != n || eus.q.nrows() != n {
        return Err(AssessError::Dimension { expected: eus.center.len(), got: n });
    }
    Ok(())
}

/// Point of the quadratic surface with the smallest Mahalanobis distance to
/// the center of `eus`.
///
/// Stationarity gives `y(nu) = nu (2 Q^-1 - nu M)^-1 grad q(c)` for the offset
/// from the center; the smallest `nu > 0` with `q(c + y(nu)) = 0` is found by
/// bracketing and bisection while `2 Q^-1 - nu M` stays positive definite.
pub fn vulnerable_direction_quadratic(
    eus: &EllipsoidalUncertaintySet,
    qb: &QuadraticBoundary,
    distances: &[f64],
) -> Result<TangencyResult, AssessError> {
    let n = qb.dim();
    check_dims(eus, n)?;
    let qinv = eus.q.clone().try_inverse().ok_or(AssessError::NotPositiveDefinite)?;
    let grad = DVector::from_vec(qb.residual_gradient(&eus.center));
    let m = &qb.quadratic;
    let c = DVector::from_column_slice(&eus.center);
    let q_at = |nu: f64| -> Option<(f64, DVector<f64>)> {
        let k: DMatrix<f64> = &qinv * 2.0 - m * nu;
        let chol = nalgebra::linalg::Cholesky::new(k)?;
        let y = chol.solve(&grad) * nu;
        let x = &c + &y;
        Some((boundary_residual(qb, x.as_slice()).value, y))
    };
    let q0 = boundary_residual(qb, &eus.center).value;
    if !(q0 < 0.0) {
        return Err(AssessError::NoTangency);
    }
    if grad.norm() == 0.0 {
        return Err(AssessError::NoTangency);
    }
    // bracket
    let mut lo = 0.0;
    let mut hi = 1e-6;
    let mut found = None;
    for _ in 0..200 {
        match q_at(hi) {
            Some((v, _)) if v >= 0.0 => {
                found = Some(hi);
                break;
            }
            Some(_) => {
                lo = hi;
                hi *= 1.5;
            }
            None => {
                // left the convex range: the root, if any, sits between lo and hi
                let mut a = lo;
                let mut b = hi;
                for _ in 0..100 {
                    let mid = 0.5 * (a + b);
                    match q_at(mid) {
                        Some((v, _)) if v >= 0.0 => {
                            found = Some(mid);
                            break;
                        }
                        Some(_) => a = mid,
                        None => b = mid,
                    }
                }
                if found.is_none() {
                    return Err(AssessError::NoTangency);
                }
                lo = a;
                break;
            }
        }
    }
    let Some(mut hi) = found else {
        return Err(AssessError::NoTangency);
    };
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match q_at(mid) {
            Some((v, _)) if v >= 0.0 => hi = mid,
            Some(_) => lo = mid,
            None => hi = mid,
        }
    }
    let (residual, y) = q_at(hi).ok_or(AssessError::NoTangency)?;
    let point: Vec<f64> = (&c + y).iter().copied().collect();
    let inside = qb.distance_from_expansion(&point) <= qb.trust_radius;
    Ok(tangency_result(eus, point, distances, residual, inside))
}

/// Closest point (in Mahalanobis distance) of a boundary polyline. `points`
/// are the fan's boundary points in angle order; `None` marks a gap. With
/// `closed` set the last point connects to the first.
pub fn vulnerable_direction_polyline(
    eus: &EllipsoidalUncertaintySet,
    points: &[Option<Vec<f64>>],
    closed: bool,
    distances: &[f64],
) -> Result<TangencyResult, AssessError> {
    let n = eus.center.len();
    check_dims(eus, n)?;
    let qinv = eus.q.clone().try_inverse().ok_or(AssessError::NotPositiveDefinite)?;
    let c = DVector::from_column_slice(&eus.center);
    let form = |v: &DVector<f64>, w: &DVector<f64>| v.dot(&(&qinv * w));
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut consider = |x: DVector<f64>| {
        let d = &x - &c;
        let val = form(&d, &d);
        if best.as_ref().is_none_or(|b| val < b.0) {
            best = Some((val, x));
        }
    };
    let m = points.len();
    for (k, p) in points.iter().enumerate() {
        let Some(p) = p else { continue };
        if p.len() != n {
            return Err(AssessError::Dimension { expected: n, got: p.len() });
        }
        let a = DVector::from_column_slice(p);
        consider(a.clone());
        let next = if k + 1 < m {
            Some(k + 1)
        } else if closed && m > 1 {
            Some(0)
        } else {
            None
        };
        if let Some(Some(q)) = next.map(|j| &points[j]) {
            let b = DVector::from_column_slice(q);
            let u = &b - &a;
            let uu = form(&u, &u);
            if uu > 0.0 {
                let t = (-form(&u, &(&a - &c)) / uu).clamp(0.0, 1.0);
                consider(&a + u * t);
            }
        }
    }
    let (_, x) = best.ok_or(AssessError::NoTangency)?;
    Ok(tangency_result(eus, x.iter().copied().collect(), distances, 0.0, true))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurtailmentRow {
    pub adjustment: Vec<f64>,
    /// `None` when the shifted forecast violates a limit.
    pub report: Option<AssessmentReport>,
    pub violation: Option<(UnitRef, Bound)>,
}

impl CurtailmentRow {
    pub fn p_instab(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.p_instab)
    }
}

/// Checks that the forecast shifted by `delta` is an admissible operating point.
pub fn check_adjustment(map: &WpiMap<'_>, delta: &[f64]) -> Result<(), PowerFlowError> {
    let p: Vec<f64> = map.forecast().iter().zip(delta).map(|(a, b)| a + b).collect();
    map.lift(&p).map(|_| ())
}

/// Re-runs the Monte Carlo count with the forecast moved by each adjustment
/// while keeping the same error realizations. Rows are sorted by `P_instab`,
/// rows with limit violations last.
pub fn evaluate_curtailment(
    map: &WpiMap<'_>,
    adjustments: &[Vec<f64>],
    template: &ScenarioSet,
    classifier: Classifier<'_>,
) -> Vec<CurtailmentRow> {
    let mut rows: Vec<CurtailmentRow> = adjustments
        .iter()
        .map(|delta| match check_adjustment(map, delta) {
            Err(PowerFlowError::LimitViolation { unit, bound, .. }) => {
                CurtailmentRow { adjustment: delta.clone(), report: None, violation: Some((unit, bound)) }
            }
            _ => {
                let shifted = template.shifted(delta);
                let report = instability_probability(map, &shifted, classifier);
                CurtailmentRow { adjustment: delta.clone(), report: Some(report), violation: None }
            }
        })
        .collect();
    sort_curtailment(&mut rows);
    rows
}

pub fn sort_curtailment(rows: &mut [CurtailmentRow]) {
    rows.sort_by(|a, b| match (a.p_instab(), b.p_instab()) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => core::cmp::Ordering::Less,
        (None, Some(_)) => core::cmp::Ordering::Greater,
        (None, None) => core::cmp::Ordering::Equal,
    });
}

/// Unique adjustments in first-seen order and the number of dropped duplicates.
pub fn dedup_adjustments(adjustments: &[Vec<f64>]) -> (Vec<Vec<f64>>, usize) {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for a in adjustments {
        if !out.contains(a) {
            out.push(a.clone());
        }
    }
    let dropped = adjustments.len() - out.len();
    (out, dropped)
}

/// The zero adjustment followed by the given ones.
pub fn with_baseline(n_w: usize, adjustments: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all = vec![vec![0.0; n_w]];
    all.extend(adjustments.iter().filter(|a| a.iter().any(|v| *v != 0.0)).cloned());
    all
}
