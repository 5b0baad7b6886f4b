//! Membership in the admissible region, boundary search along rays and
//! second-order boundary surfaces.
//!
//! A [`StabilityMap`] turns a point of some injection space into a stability
//! outcome. [`WpiMap`] works on wind injections and lifts them through AGC;
//! [`ExtendedMap`] works on the full `[p_s; p_w]` vector.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dynamics::{assemble_jacobians, init_equilibrium, reduce_for_case, DynamicsError, ReducedStateMatrix};
use crate::netcase::{AgcPolicy, NetworkCase, Tolerances};
use crate::powerflow::{
    agc_shift, apply_agc, check_limits, solve_with_ybus, Bound, InjectionVector, PowerFlowError, UnitRef, Ybus,
};
use crate::spectra::{
    self, eigen_analysis, sensitivity_from_summary, SpectraError, SpectralSummary, StabilityStatus, StabilityVerdict,
};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InadmissibleCause {
    LimitViolation { unit: UnitRef, bound: Bound },
    PowerFlowDiverged,
    InfeasibleSteadyState,
    NumericalFailure,
}

impl From<&PowerFlowError> for InadmissibleCause {
    fn from(e: &PowerFlowError) -> Self {
        match *e {
            PowerFlowError::LimitViolation { unit, bound, .. } => InadmissibleCause::LimitViolation { unit, bound },
            PowerFlowError::NonConvergence { .. } => InadmissibleCause::PowerFlowDiverged,
            PowerFlowError::Dimension { .. } => InadmissibleCause::NumericalFailure,
        }
    }
}

/// Result of a membership test. Inadmissible points have no stable
/// equilibrium to speak of and are kept apart from unstable ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointOutcome {
    Assessed(StabilityVerdict),
    Inadmissible(InadmissibleCause),
}

impl PointOutcome {
    pub fn is_stable(&self) -> bool {
        matches!(self, PointOutcome::Assessed(v) if v.status == StabilityStatus::Stable)
    }

    pub fn verdict(&self) -> Option<&StabilityVerdict> {
        match self {
            PointOutcome::Assessed(v) => Some(v),
            PointOutcome::Inadmissible(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RegionError {
    #[error("search direction is zero")]
    ZeroDirection,
    #[error("no stability boundary within {max_range} pu along the ray")]
    NoCrossing { max_range: f64 },
    #[error("search start is not stable: {0:?}")]
    StartNotStable(PointOutcome),
    #[error("ray leaves the feasible set at distance {distance} pu ({cause:?}) before any stability boundary")]
    FeasibilityBoundary { distance: f64, cause: InadmissibleCause, p: Vec<f64> },
    #[error("stable point found beyond the first boundary at distance {distance} pu")]
    HoleDetected { distance: f64 },
    #[error("critical eigenvalue is not simple (separation {separation:e})")]
    DegenerateEigenvalue { separation: f64 },
    #[error("coordinate {dependent} has no influence on the critical mode and cannot be dependent")]
    FlatDirection { dependent: usize },
    #[error("point needed for the construction is inadmissible: {0:?}")]
    Inadmissible(InadmissibleCause),
    #[error("algebraic block singular where a regular point was required")]
    Singular,
    #[error("boundary refinement did not converge")]
    RefinementFailed,
    #[error("invalid coordinate pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Spectra(SpectraError),
}

impl From<SpectraError> for RegionError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::DegenerateEigenvalue { separation } => RegionError::DegenerateEigenvalue { separation },
            e => RegionError::Spectra(e),
        }
    }
}

/// Everything computed at one extended injection vector.
#[derive(Clone, Debug)]
pub struct PointAnalysis {
    pub injection: InjectionVector,
    pub verdict: StabilityVerdict,
    pub reduced: Option<ReducedStateMatrix>,
    pub spectrum: Option<SpectralSummary>,
}

/// Power flow, equilibrium, linearization, reduction and verdict at `inj`.
/// No limit checks. With `vectors` set, the critical eigenvectors are computed too.
pub fn analyze_injection(
    case: &NetworkCase,
    ybus: &Ybus,
    inj: &InjectionVector,
    tol: &Tolerances,
    vectors: bool,
) -> Result<PointAnalysis, InadmissibleCause> {
    let reduced = match reduced_matrix(case, ybus, inj, tol) {
        Ok(r) => r,
        Err(ReductionFailure::Singular(rcond)) => {
            return Ok(PointAnalysis {
                injection: inj.clone(),
                verdict: StabilityVerdict::singular(rcond),
                reduced: None,
                spectrum: None,
            })
        }
        Err(ReductionFailure::Inadmissible(c)) => return Err(c),
    };
    let rcond = reduced.d_tilde_rcond;
    let (verdict, spectrum) = if vectors {
        let s = eigen_analysis(&reduced).map_err(|_| InadmissibleCause::NumericalFailure)?;
        let mut v = spectra::stability_verdict(&s, tol.margin_tol);
        v.rcond = rcond;
        (v, Some(s))
    } else {
        let eigs = spectra::spectrum(&reduced).map_err(|_| InadmissibleCause::NumericalFailure)?;
        (spectra::verdict_from_eigenvalues(&eigs, rcond, tol.margin_tol), None)
    };
    Ok(PointAnalysis { injection: inj.clone(), verdict, reduced: Some(reduced), spectrum })
}

enum ReductionFailure {
    Singular(f64),
    Inadmissible(InadmissibleCause),
}

fn reduced_matrix(
    case: &NetworkCase,
    ybus: &Ybus,
    inj: &InjectionVector,
    tol: &Tolerances,
) -> Result<ReducedStateMatrix, ReductionFailure> {
    let pf = solve_with_ybus(case, ybus, inj, tol).map_err(|e| ReductionFailure::Inadmissible((&e).into()))?;
    let eq = init_equilibrium(case, inj, &pf)
        .map_err(|_| ReductionFailure::Inadmissible(InadmissibleCause::InfeasibleSteadyState))?;
    let jac = assemble_jacobians(case, &eq);
    match reduce_for_case(case, &eq, &jac, tol) {
        Ok(r) => Ok(r),
        Err(DynamicsError::SingularAlgebraicBlock { rcond }) => Err(ReductionFailure::Singular(rcond)),
        Err(DynamicsError::InfeasibleSteadyState { .. }) => {
            Err(ReductionFailure::Inadmissible(InadmissibleCause::InfeasibleSteadyState))
        }
    }
}

fn spectra_failure(e: ReductionFailure) -> SpectraError {
    match e {
        ReductionFailure::Singular(_) => SpectraError::Evaluation("singular algebraic block"),
        ReductionFailure::Inadmissible(InadmissibleCause::PowerFlowDiverged) => {
            SpectraError::Evaluation("power flow diverged")
        }
        ReductionFailure::Inadmissible(_) => SpectraError::Evaluation("no feasible steady state"),
    }
}

/// A space of injection vectors with a stability outcome at each point.
pub trait StabilityMap {
    fn dim(&self) -> usize;
    fn tolerances(&self) -> &Tolerances;
    fn outcome(&self, p: &[f64]) -> PointOutcome;
    /// Extended injection vector `[p_s; p_w]` corresponding to `p`.
    fn extended(&self, p: &[f64]) -> Vec<f64>;
    /// Derivative of the critical real part along `p + t d`.
    fn sensitivity(&self, p: &[f64], d: &[f64]) -> Result<f64, RegionError>;

    /// Derivatives along every coordinate axis.
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>, RegionError> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.sensitivity(p, &e)
            })
            .collect()
    }
}

fn axis_gradient<F>(n: usize, base_eval: F, tol: &Tolerances) -> Result<Vec<f64>, RegionError>
where
    F: Fn(&[f64]) -> Result<ReducedStateMatrix, SpectraError>,
{
    let zero = vec![0.0; n];
    let base = base_eval(&zero)?;
    let summary = eigen_analysis(&base)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = |t: f64| {
            let mut d = vec![0.0; n];
            d[i] = t;
            base_eval(&d)
        };
        out.push(sensitivity_from_summary(&summary, &base, &mut f, tol)?);
    }
    Ok(out)
}

/// Wind-injection space: a point `p_w` is lifted through AGC relative to the
/// anchor operating point, limits are enforced, then assessed.
#[derive(Clone, Debug)]
pub struct WpiMap<'a> {
    pub case: &'a NetworkCase,
    pub policy: &'a AgcPolicy,
    pub anchor: InjectionVector,
    pub tol: Tolerances,
    ybus: Ybus,
}

impl<'a> WpiMap<'a> {
    pub fn new(case: &'a NetworkCase, policy: &'a AgcPolicy, anchor: InjectionVector, tol: Tolerances) -> Self {
        Self { case, policy, anchor, tol, ybus: Ybus::build(case) }
    }

    /// Anchored at the scheduled operating point of the case.
    pub fn scheduled(case: &'a NetworkCase, policy: &'a AgcPolicy, tol: Tolerances) -> Self {
        Self::new(case, policy, case.scheduled_injection(), tol)
    }

    pub fn forecast(&self) -> &[f64] {
        &self.anchor.p_w
    }

    fn delta(&self, p_w: &[f64]) -> Vec<f64> {
        p_w.iter().zip(&self.anchor.p_w).map(|(a, b)| a - b).collect()
    }

    /// AGC lift with limit checks.
    pub fn lift(&self, p_w: &[f64]) -> Result<InjectionVector, PowerFlowError> {
        apply_agc(&self.anchor, &self.delta(p_w), self.policy, self.case)
    }

    /// AGC lift without limit checks.
    pub fn lift_unchecked(&self, p_w: &[f64]) -> InjectionVector {
        agc_shift(&self.anchor, &self.delta(p_w), &self.policy.gamma)
    }

    pub fn analyze(&self, p_w: &[f64], vectors: bool) -> Result<PointAnalysis, InadmissibleCause> {
        let inj = self.lift(p_w).map_err(|e| InadmissibleCause::from(&e))?;
        analyze_injection(self.case, &self.ybus, &inj, &self.tol, vectors)
    }

    pub fn state_matrix(&self, p_w: &[f64]) -> Result<ReducedStateMatrix, SpectraError> {
        reduced_matrix(self.case, &self.ybus, &self.lift_unchecked(p_w), &self.tol).map_err(spectra_failure)
    }

    /// The same case seen in the extended injection space.
    pub fn extended_map(&self) -> ExtendedMap<'a> {
        ExtendedMap { case: self.case, tol: self.tol.clone(), ybus: self.ybus.clone(), check_limits: false }
    }
}

impl StabilityMap for WpiMap<'_> {
    fn dim(&self) -> usize {
        self.case.n_w()
    }

    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn outcome(&self, p: &[f64]) -> PointOutcome {
        evaluate_wpi_point(self, p)
    }

    fn extended(&self, p: &[f64]) -> Vec<f64> {
        self.lift_unchecked(p).extended()
    }

    fn sensitivity(&self, p: &[f64], d: &[f64]) -> Result<f64, RegionError> {
        let f = |t: f64| {
            let q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + t * b).collect();
            self.state_matrix(&q)
        };
        Ok(spectra::critical_real_sensitivity(f, d, &self.tol)?)
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>, RegionError> {
        axis_gradient(
            p.len(),
            |d| {
                let q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + b).collect();
                self.state_matrix(&q)
            },
            &self.tol,
        )
    }
}

/// Membership test of a wind injection vector: AGC lift, limits, power flow,
/// equilibrium, reduction, verdict.
pub fn evaluate_wpi_point(map: &WpiMap<'_>, p_w: &[f64]) -> PointOutcome {
    match map.analyze(p_w, false) {
        Ok(a) => PointOutcome::Assessed(a.verdict),
        Err(c) => PointOutcome::Inadmissible(c),
    }
}

/// Extended injection space `[p_s; p_w]`.
#[derive(Clone, Debug)]
pub struct ExtendedMap<'a> {
    pub case: &'a NetworkCase,
    pub tol: Tolerances,
    ybus: Ybus,
    /// Enforce generator and wind limits in [`StabilityMap::outcome`].
    pub check_limits: bool,
}

impl<'a> ExtendedMap<'a> {
    pub fn new(case: &'a NetworkCase, tol: Tolerances) -> Self {
        Self { case, tol, ybus: Ybus::build(case), check_limits: true }
    }

    fn injection(&self, p_e: &[f64]) -> InjectionVector {
        InjectionVector::from_extended(self.case.n_s(), p_e)
    }

    pub fn analyze(&self, p_e: &[f64], vectors: bool) -> Result<PointAnalysis, InadmissibleCause> {
        let inj = self.injection(p_e);
        if self.check_limits {
            check_limits(self.case, &inj).map_err(|e| InadmissibleCause::from(&e))?;
        }
        analyze_injection(self.case, &self.ybus, &inj, &self.tol, vectors)
    }

    pub fn state_matrix(&self, p_e: &[f64]) -> Result<ReducedStateMatrix, SpectraError> {
        reduced_matrix(self.case, &self.ybus, &self.injection(p_e), &self.tol).map_err(spectra_failure)
    }
}

impl StabilityMap for ExtendedMap<'_> {
    fn dim(&self) -> usize {
        self.case.n_s() + self.case.n_w()
    }

    fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn outcome(&self, p: &[f64]) -> PointOutcome {
        match self.analyze(p, false) {
            Ok(a) => PointOutcome::Assessed(a.verdict),
            Err(c) => PointOutcome::Inadmissible(c),
        }
    }

    fn extended(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }

    fn sensitivity(&self, p: &[f64], d: &[f64]) -> Result<f64, RegionError> {
        let f = |t: f64| {
            let q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + t * b).collect();
            self.state_matrix(&q)
        };
        Ok(spectra::critical_real_sensitivity(f, d, &self.tol)?)
    }

    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>, RegionError> {
        axis_gradient(
            p.len(),
            |d| {
                let q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + b).collect();
                self.state_matrix(&q)
            },
            &self.tol,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BifurcationKind {
    Hopf,
    SaddleNode,
    SingularityInduced,
}

impl BifurcationKind {
    pub fn label(self) -> &'static str {
        match self {
            BifurcationKind::Hopf => "HB",
            BifurcationKind::SaddleNode => "SNB",
            BifurcationKind::SingularityInduced => "SIB",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    /// Point in the searched space.
    pub p: Vec<f64>,
    /// Lifted extended injection vector.
    pub p_e: Vec<f64>,
    pub kind: BifurcationKind,
    pub critical: Option<C64>,
    pub max_real: f64,
    pub rcond: f64,
    /// Distance from the search start, pu.
    pub distance: f64,
}

impl BoundaryPoint {
    /// The boundary-point invariant: on the imaginary axis within
    /// `boundary_tol`, or a singular algebraic block.
    pub fn verifies(&self, tol: &Tolerances) -> bool {
        match self.kind {
            BifurcationKind::SingularityInduced => self.rcond < tol.sib_tol,
            _ => self.max_real.abs() <= tol.boundary_tol,
        }
    }
}

fn along(start: &[f64], u: &[f64], t: f64) -> Vec<f64> {
    start.iter().zip(u).map(|(s, d)| s + t * d).collect()
}

fn unit(direction: &[f64]) -> Result<Vec<f64>, RegionError> {
    let n = libm::sqrt(direction.iter().map(|d| d * d).sum::<f64>());
    if !(n > 0.0) || !n.is_finite() {
        return Err(RegionError::ZeroDirection);
    }
    Ok(direction.iter().map(|d| d / n).collect())
}

fn boundary_point<M: StabilityMap + ?Sized>(map: &M, p: Vec<f64>, v: &StabilityVerdict, distance: f64) -> BoundaryPoint {
    let tol = map.tolerances();
    let kind = if v.status == StabilityStatus::SingularAlgebraic {
        BifurcationKind::SingularityInduced
    } else if v.critical.is_some_and(|c| c.im.abs() > tol.hopf_imag_tol) {
        BifurcationKind::Hopf
    } else {
        BifurcationKind::SaddleNode
    };
    BoundaryPoint {
        p_e: map.extended(&p),
        p,
        kind,
        critical: v.critical,
        max_real: v.max_real,
        rcond: v.rcond,
        distance,
    }
}

/// First stability boundary along `start + t d / |d|`, `0 < t <= max_range`.
///
/// An outward scan with step `ray_scan_step` brackets the first non-stable
/// point; bisection narrows the bracket to `ray_tol`; a regula falsi pass on
/// the critical real part then lands within `boundary_tol` of the axis.
pub fn ray_boundary_search<M: StabilityMap + ?Sized>(
    map: &M,
    start: &[f64],
    direction: &[f64],
    max_range: f64,
) -> Result<BoundaryPoint, RegionError> {
    if start.len() != map.dim() || direction.len() != map.dim() {
        return Err(RegionError::Dimension { expected: map.dim(), got: direction.len() });
    }
    let u = unit(direction)?;
    let tol = map.tolerances().clone();
    let first = map.outcome(start);
    if !first.is_stable() {
        return Err(RegionError::StartNotStable(first));
    }

    // outward scan
    let step = tol.ray_scan_step.min(max_range).max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut hi = None;
    let mut k = 1usize;
    loop {
        let t = (k as f64 * step).min(max_range);
        let o = map.outcome(&along(start, &u, t));
        if !o.is_stable() {
            hi = Some((t, o));
            break;
        }
        lo = t;
        if t >= max_range {
            break;
        }
        k += 1;
    }
    let Some((mut hi_t, mut hi_o)) = hi else {
        return Err(RegionError::NoCrossing { max_range });
    };

    // bisection on the stable / not-stable predicate
    while hi_t - lo > tol.ray_tol {
        let mid = 0.5 * (lo + hi_t);
        let o = map.outcome(&along(start, &u, mid));
        if o.is_stable() {
            lo = mid;
        } else {
            hi_t = mid;
            hi_o = o;
        }
    }

    match hi_o {
        PointOutcome::Inadmissible(cause) => {
            Err(RegionError::FeasibilityBoundary { distance: hi_t, cause, p: along(start, &u, hi_t) })
        }
        PointOutcome::Assessed(v) if v.status == StabilityStatus::SingularAlgebraic => {
            Ok(boundary_point(map, along(start, &u, hi_t), &v, hi_t))
        }
        PointOutcome::Assessed(v) => refine_crossing(map, start, &u, lo, hi_t, v),
    }
}

fn max_real_at<M: StabilityMap + ?Sized>(map: &M, p: &[f64]) -> Option<StabilityVerdict> {
    match map.outcome(p) {
        PointOutcome::Assessed(v) if v.status != StabilityStatus::SingularAlgebraic => Some(v),
        _ => None,
    }
}

/// Illinois regula falsi on `max_real(t)` over `[lo, hi]`.
fn refine_crossing<M: StabilityMap + ?Sized>(
    map: &M,
    start: &[f64],
    u: &[f64],
    mut lo: f64,
    mut hi: f64,
    hi_v: StabilityVerdict,
) -> Result<BoundaryPoint, RegionError> {
    let tol = map.tolerances().clone();
    let target = tol.boundary_tol;
    if hi_v.max_real.abs() <= target {
        return Ok(boundary_point(map, along(start, u, hi), &hi_v, hi));
    }
    let lo_v = max_real_at(map, &along(start, u, lo)).ok_or(RegionError::RefinementFailed)?;
    if lo_v.max_real.abs() <= target {
        return Ok(boundary_point(map, along(start, u, lo), &lo_v, lo));
    }
    let (mut f_lo, mut f_hi) = (lo_v.max_real, hi_v.max_real);
    let mut side = 0i8;
    for _ in 0..100 {
        let mut t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let p = along(start, u, t);
        let Some(v) = max_real_at(map, &p) else {
            // the crossing sits next to a singular or infeasible point; fall back to bisection
            let mid = 0.5 * (lo + hi);
            if hi - lo < 1e-13 {
                return singular_or_fail(map, start, u, hi);
            }
            hi = mid;
            f_hi = max_real_at(map, &along(start, u, mid)).map_or(f64::INFINITY, |v| v.max_real);
            if !f_hi.is_finite() {
                return singular_or_fail(map, start, u, mid);
            }
            continue;
        };
        let f = v.max_real;
        if f.abs() <= target {
            return Ok(boundary_point(map, p, &v, t));
        }
        if f < 0.0 {
            lo = t;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            return singular_or_fail(map, start, u, hi);
        }
    }
    Err(RegionError::RefinementFailed)
}

fn singular_or_fail<M: StabilityMap + ?Sized>(
    map: &M,
    start: &[f64],
    u: &[f64],
    t: f64,
) -> Result<BoundaryPoint, RegionError> {
    let p = along(start, u, t);
    match map.outcome(&p) {
        PointOutcome::Assessed(v) if v.rcond < map.tolerances().sib_tol => {
            Ok(boundary_point(map, p, &StabilityVerdict::singular(v.rcond), t))
        }
        _ => Err(RegionError::RefinementFailed),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSample {
    pub distance: f64,
    pub outcome: PointOutcome,
}

/// Fixed-step scan along a ray (diagnostic mode).
pub fn dense_scan<M: StabilityMap + ?Sized>(
    map: &M,
    start: &[f64],
    direction: &[f64],
    max_range: f64,
    step: f64,
) -> Result<Vec<ScanSample>, RegionError> {
    let u = unit(direction)?;
    let count = libm::floor(max_range / step + 1e-9) as usize;
    Ok((0..=count)
        .map(|k| {
            let t = k as f64 * step;
            ScanSample { distance: t, outcome: map.outcome(&along(start, &u, t)) }
        })
        .collect())
}

/// Distance of the first non-stable scan sample.
pub fn first_unstable(scan: &[ScanSample]) -> Option<f64> {
    scan.iter().find(|s| !s.outcome.is_stable()).map(|s| s.distance)
}

/// Fails if a stable sample follows the first non-stable one.
pub fn check_no_holes(scan: &[ScanSample]) -> Result<(), RegionError> {
    let Some(i) = scan.iter().position(|s| !s.outcome.is_stable()) else {
        return Ok(());
    };
    match scan[i..].iter().find(|s| s.outcome.is_stable()) {
        Some(s) => Err(RegionError::HoleDetected { distance: s.distance }),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySpace {
    Extended,
    Wpi,
}

/// Second-order boundary surface around an expansion point `p0`.
///
/// Explicit form: `dp_k = sum_i g_i dp_i + 1/2 sum_ij H_ij dp_i dp_j` over the
/// coordinates other than the dependent one `k`.
/// Implicit form: `q(dp) = a . dp + 1/2 dp^T M dp`, oriented so that the stable
/// side near `p0` is negative.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBoundary {
    pub space: BoundarySpace,
    pub expansion: Vec<f64>,
    pub dependent: usize,
    /// First partials of the dependent coordinate (zero at `dependent`).
    pub gradient: Vec<f64>,
    /// Second partials of the dependent coordinate (zero row/column at `dependent`).
    pub hessian: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub quadratic: DMatrix<f64>,
    /// `+1` or `-1`: sign relating the raw explicit residual to the stable side.
    pub orientation: f64,
    /// Radius around `expansion` inside which the surface meets its error budget, pu.
    pub trust_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualEval {
    pub value: f64,
    pub outside_trust_radius: bool,
}

impl QuadraticBoundary {
    pub fn dim(&self) -> usize {
        self.expansion.len()
    }

    fn offset(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.expansion).map(|(a, b)| a - b).collect()
    }

    /// Implicit residual at an offset `dp` from the expansion point.
    pub fn value_at_offset(&self, dp: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = 0.0;
        for i in 0..n {
            v += self.linear[i] * dp[i];
            let mut row = 0.0;
            for j in 0..n {
                row += self.quadratic[(i, j)] * dp[j];
            }
            v += 0.5 * dp[i] * row;
        }
        v
    }

    /// Gradient of the implicit residual at `p`.
    pub fn residual_gradient(&self, p: &[f64]) -> Vec<f64> {
        let dp = self.offset(p);
        let n = self.dim();
        (0..n)
            .map(|i| self.linear[i] + (0..n).map(|j| self.quadratic[(i, j)] * dp[j]).sum::<f64>())
            .collect()
    }

    /// Dependent-coordinate offset predicted by the explicit form.
    pub fn predict_dependent(&self, dp: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = 0.0;
        for i in 0..n {
            if i == self.dependent {
                continue;
            }
            v += self.gradient[i] * dp[i];
            for j in 0..n {
                if j != self.dependent {
                    v += 0.5 * self.hessian[(i, j)] * dp[i] * dp[j];
                }
            }
        }
        v
    }

    pub fn distance_from_expansion(&self, p: &[f64]) -> f64 {
        libm::sqrt(self.offset(p).iter().map(|d| d * d).sum())
    }
}

/// Signed residual of the quadratic surface: negative on the approximated
/// stable side, positive on the unstable side.
pub fn boundary_residual(qb: &QuadraticBoundary, p: &[f64]) -> ResidualEval {
    let value = qb.value_at_offset(&qb.offset(p));
    ResidualEval { value, outside_trust_radius: qb.distance_from_expansion(p) > qb.trust_radius }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticConfig {
    pub dependent: usize,
    /// Finite-difference step for the second partials, pu.
    pub hessian_step: f64,
    pub trust_initial: f64,
    pub trust_max: f64,
    pub validation_directions: usize,
    pub validation_seed: u64,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self {
            dependent: 0,
            hessian_step: 0.02,
            trust_initial: 0.1,
            trust_max: 6.4,
            validation_directions: 6,
            validation_seed: 0x5eed,
        }
    }
}

fn is_flat(grad: &[f64], k: usize) -> bool {
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    grad[k].abs() <= 1e-10 + 1e-7 * scale
}

/// Critical real part at `p`; `None` when singular or inadmissible.
fn critical_real<M: StabilityMap + ?Sized>(map: &M, p: &[f64]) -> Result<f64, RegionError> {
    match map.outcome(p) {
        PointOutcome::Assessed(v) if v.status == StabilityStatus::SingularAlgebraic => Err(RegionError::Singular),
        PointOutcome::Assessed(v) => Ok(v.max_real),
        PointOutcome::Inadmissible(c) => Err(RegionError::Inadmissible(c)),
    }
}

/// Newton iteration on the dependent coordinate back onto `max_real = 0`.
fn reanchor<M: StabilityMap + ?Sized>(map: &M, mut p: Vec<f64>, k: usize) -> Result<Vec<f64>, RegionError> {
    let tol = map.tolerances().boundary_tol;
    let mut e = vec![0.0; p.len()];
    e[k] = 1.0;
    for _ in 0..20 {
        let r = critical_real(map, &p)?;
        if r.abs() <= 1e-3 * tol {
            return Ok(p);
        }
        let s = map.sensitivity(&p, &e)?;
        if s.abs() < 1e-12 {
            return Err(RegionError::FlatDirection { dependent: k });
        }
        let step = (-r / s).clamp(-0.5, 0.5);
        p[k] += step;
    }
    let r = critical_real(map, &p)?;
    if r.abs() <= tol {
        Ok(p)
    } else {
        Err(RegionError::RefinementFailed)
    }
}

/// Root of the critical real part along the dependent coordinate, starting
/// from `p` (whose dependent entry is the initial guess).
fn dependent_root<M: StabilityMap + ?Sized>(map: &M, p: Vec<f64>, k: usize, r_k: f64) -> Result<f64, RegionError> {
    let tol = map.tolerances().boundary_tol;
    let mut q = p.clone();
    let f0 = critical_real(map, &q)?;
    if f0.abs() <= tol {
        return Ok(q[k]);
    }
    // walk against the sign of f using the known orientation until the sign flips
    let dir = if (f0 > 0.0) == (r_k > 0.0) { -1.0 } else { 1.0 };
    let mut step = 0.01;
    let (mut a, mut fa) = (q[k], f0);
    let mut bracket = None;
    for _ in 0..40 {
        q[k] = a + dir * step;
        let f = critical_real(map, &q)?;
        if f.signum() != fa.signum() || f.abs() <= tol {
            bracket = Some((a, fa, q[k], f));
            break;
        }
        a = q[k];
        fa = f;
        step *= 1.6;
    }
    let Some((mut x0, mut f0, mut x1, mut f1)) = bracket else {
        return Err(RegionError::RefinementFailed);
    };
    let mut side = 0i8;
    for _ in 0..100 {
        if f1.abs() <= tol {
            return Ok(x1);
        }
        if f0.abs() <= tol {
            return Ok(x0);
        }
        let x = x1 - f1 * (x1 - x0) / (f1 - f0);
        q[k] = x;
        let f = critical_real(map, &q)?;
        if f.abs() <= tol {
            return Ok(x);
        }
        if f.signum() == f1.signum() {
            x1 = x;
            f1 = f;
            if side == 1 {
                f0 *= 0.5;
            }
            side = 1;
        } else {
            x0 = x;
            f0 = f;
            if side == -1 {
                f1 *= 0.5;
            }
            side = -1;
        }
        if (x1 - x0).abs() < 1e-14 {
            return Ok(x);
        }
    }
    Err(RegionError::RefinementFailed)
}

/// Builds the second-order boundary surface of `map` around the boundary
/// point `p0` with coordinate `cfg.dependent` as the dependent one.
pub fn quadratic_boundary<M: StabilityMap + ?Sized>(
    map: &M,
    p0: &[f64],
    space: BoundarySpace,
    cfg: &QuadraticConfig,
) -> Result<QuadraticBoundary, RegionError> {
    let n = map.dim();
    let k = cfg.dependent;
    if p0.len() != n || k >= n {
        return Err(RegionError::Dimension { expected: n, got: p0.len().min(k) });
    }
    let grad0 = map.gradient(p0)?;
    if is_flat(&grad0, k) {
        return Err(RegionError::FlatDirection { dependent: k });
    }
    let p0 = reanchor(map, p0.to_vec(), k)?;
    let grad0 = map.gradient(&p0)?;
    if is_flat(&grad0, k) {
        return Err(RegionError::FlatDirection { dependent: k });
    }
    let first = |g: &[f64]| -> Vec<f64> {
        (0..n).map(|i| if i == k { 0.0 } else { -g[i] / g[k] }).collect()
    };
    let g0 = first(&grad0);

    let h = cfg.hessian_step;
    let mut hess = DMatrix::zeros(n, n);
    for j in (0..n).filter(|&j| j != k) {
        if grad0[j] == 0.0 {
            // coordinate has no effect on the critical mode at all
            continue;
        }
        let mut side = [vec![0.0; n], vec![0.0; n]];
        for (s, out) in [1.0, -1.0].iter().zip(side.iter_mut()) {
            let mut p = p0.clone();
            p[j] += s * h;
            p[k] += s * h * g0[j];
            let p = reanchor(map, p, k)?;
            let g = map.gradient(&p)?;
            if is_flat(&g, k) {
                return Err(RegionError::FlatDirection { dependent: k });
            }
            *out = first(&g);
        }
        for i in (0..n).filter(|&i| i != k) {
            hess[(i, j)] = (side[0][i] - side[1][i]) / (2.0 * h);
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;

    let orientation = if grad0[k] > 0.0 { 1.0 } else { -1.0 };
    let linear: Vec<f64> = (0..n).map(|i| orientation * if i == k { 1.0 } else { -g0[i] }).collect();
    let quadratic = &hess * (-orientation);

    let mut qb = QuadraticBoundary {
        space,
        expansion: p0.clone(),
        dependent: k,
        gradient: g0,
        hessian: hess,
        linear,
        quadratic,
        orientation,
        trust_radius: 0.0,
    };
    qb.trust_radius = calibrate_trust_radius(map, &qb, grad0[k], cfg);
    Ok(qb)
}

/// Largest relative error of the explicit surface against true boundary
/// points found along the dependent coordinate, at `radius` from `p0`.
pub fn validation_error<M: StabilityMap + ?Sized>(
    map: &M,
    qb: &QuadraticBoundary,
    r_k: f64,
    radius: f64,
    directions: usize,
    seed: u64,
) -> f64 {
    let n = qb.dim();
    let k = qb.dependent;
    if n == 1 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut u: Vec<f64> = (0..n).map(|i| if i == k { 0.0 } else { StandardNormal.sample(&mut rng) }).collect();
        let nrm = libm::sqrt(u.iter().map(|x| x * x).sum());
        if nrm == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|x| *x *= radius / nrm);
        let pred = qb.predict_dependent(&u);
        let mut p: Vec<f64> = qb.expansion.iter().zip(&u).map(|(a, b)| a + b).collect();
        p[k] = qb.expansion[k] + pred;
        let err = match dependent_root(map, p, k, r_k) {
            Ok(x) => {
                let truth = x - qb.expansion[k];
                (pred - truth).abs() / libm::sqrt(radius * radius + truth * truth)
            }
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    worst
}

fn calibrate_trust_radius<M: StabilityMap + ?Sized>(map: &M, qb: &QuadraticBoundary, r_k: f64, cfg: &QuadraticConfig) -> f64 {
    let budget = map.tolerances().trust_rel_err;
    let ok = |r: f64| validation_error(map, qb, r_k, r, cfg.validation_directions, cfg.validation_seed) <= budget;
    let mut r = cfg.trust_initial;
    if ok(r) {
        while 2.0 * r <= cfg.trust_max && ok(2.0 * r) {
            r *= 2.0;
        }
        r
    } else {
        while r > 1e-3 {
            r *= 0.5;
            if ok(r) {
                return r;
            }
        }
        0.0
    }
}

/// Second-order surface in the extended space around the lift of a WPI boundary point.
pub fn quadratic_boundary_extended(
    space: &WpiMap<'_>,
    bp: &BoundaryPoint,
    cfg: &QuadraticConfig,
) -> Result<QuadraticBoundary, RegionError> {
    quadratic_boundary(&space.extended_map(), &bp.p_e, BoundarySpace::Extended, cfg)
}

/// Substitutes the AGC relation `dp_s = -gamma * sum(dp_w)` into an
/// extended-space surface. `dependent_wind` picks the dependent wind coordinate
/// of the explicit form.
pub fn quadratic_boundary_wpi(
    qb: &QuadraticBoundary,
    gamma: &[f64],
    dependent_wind: usize,
) -> Result<QuadraticBoundary, RegionError> {
    let n_s = gamma.len();
    let n_e = qb.dim();
    if n_e <= n_s {
        return Err(RegionError::Dimension { expected: n_s + 1, got: n_e });
    }
    let n_w = n_e - n_s;
    if dependent_wind >= n_w {
        return Err(RegionError::Dimension { expected: n_w, got: dependent_wind });
    }
    let l = DMatrix::from_fn(n_e, n_w, |i, j| if i < n_s { -gamma[i] } else if i - n_s == j { 1.0 } else { 0.0 });
    let a = nalgebra::DVector::from_column_slice(&qb.linear);
    let a_w = l.transpose() * a;
    let m_w = l.transpose() * &qb.quadratic * &l;
    let k = dependent_wind;
    let a_k = a_w[k];
    let scale = a_w.amax();
    if a_k.abs() <= 1e-12 * (1.0 + scale) {
        return Err(RegionError::FlatDirection { dependent: n_s + k });
    }
    let phi: Vec<f64> = (0..n_w).map(|i| if i == k { 0.0 } else { -a_w[i] / a_k }).collect();
    let hess = DMatrix::from_fn(n_w, n_w, |i, j| {
        if i == k || j == k {
            0.0
        } else {
            -(m_w[(i, j)] + m_w[(i, k)] * phi[j] + m_w[(k, j)] * phi[i] + m_w[(k, k)] * phi[i] * phi[j]) / a_k
        }
    });
    let gamma_sq: f64 = gamma.iter().map(|g| g * g).sum();
    let l_norm = libm::sqrt(1.0 + n_w as f64 * gamma_sq);
    Ok(QuadraticBoundary {
        space: BoundarySpace::Wpi,
        expansion: qb.expansion[n_s..].to_vec(),
        dependent: k,
        gradient: phi,
        hessian: hess,
        linear: a_w.iter().copied().collect(),
        quadratic: m_w,
        orientation: qb.orientation,
        trust_radius: qb.trust_radius / l_norm,
    })
}

/// One ray of a boundary profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRay {
    pub angle: f64,
    pub direction: Vec<f64>,
    pub result: Result<BoundaryPoint, RegionError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    /// Free coordinates (equal for a one-dimensional profile).
    pub pair: (usize, usize),
    pub seed: Vec<f64>,
    pub rays: Vec<ProfileRay>,
}

impl Profile {
    /// Boundary points in angle order, skipping failed rays.
    pub fn polyline(&self) -> Vec<&BoundaryPoint> {
        self.rays.iter().filter_map(|r| r.result.as_ref().ok()).collect()
    }
}

/// Unit direction at `angle` in the plane of coordinates `(i, j)`.
pub fn plane_direction(dim: usize, pair: (usize, usize), angle: f64) -> Vec<f64> {
    let mut d = vec![0.0; dim];
    d[pair.0] = libm::cos(angle);
    d[pair.1] += libm::sin(angle);
    d
}

pub fn profile_angles(n_rays: usize) -> Vec<f64> {
    (0..n_rays).map(|k| 2.0 * core::f64::consts::PI * k as f64 / n_rays as f64).collect()
}

/// Fan of `n_rays` ray searches in the `(i, j)` plane through `seed`; the other
/// coordinates stay at their values in `seed`.
pub fn profile_2d<M: StabilityMap + ?Sized>(
    map: &M,
    pair: (usize, usize),
    seed: &[f64],
    n_rays: usize,
    max_range: f64,
) -> Result<Profile, RegionError> {
    let n = map.dim();
    if pair.0 == pair.1 || pair.0 >= n || pair.1 >= n {
        return Err(RegionError::InvalidPair(pair.0, pair.1));
    }
    let rays = profile_angles(n_rays)
        .into_iter()
        .map(|angle| {
            let direction = plane_direction(n, pair, angle);
            let result = ray_boundary_search(map, seed, &direction, max_range);
            ProfileRay { angle, direction, result }
        })
        .collect();
    Ok(Profile { pair, seed: seed.to_vec(), rays })
}

/// The one-dimensional case: boundary values in the `+` and `-` directions of coordinate `i`.
pub fn profile_1d<M: StabilityMap + ?Sized>(
    map: &M,
    i: usize,
    seed: &[f64],
    max_range: f64,
) -> Result<Profile, RegionError> {
    let n = map.dim();
    if i >= n {
        return Err(RegionError::InvalidPair(i, i));
    }
    let rays = [0.0, core::f64::consts::PI]
        .into_iter()
        .map(|angle| {
            let mut direction = vec![0.0; n];
            direction[i] = libm::cos(angle);
            let result = ray_boundary_search(map, seed, &direction, max_range);
            ProfileRay { angle, direction, result }
        })
        .collect();
    Ok(Profile { pair: (i, i), seed: seed.to_vec(), rays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    /// Synthetic map with `max_real = c . p - 1` (an exact hyperplane boundary).
    struct Affine {
        c: Vec<f64>,
        tol: Tolerances,
    }

    impl StabilityMap for Affine {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn tolerances(&self) -> &Tolerances {
            &self.tol
        }
        fn outcome(&self, p: &[f64]) -> PointOutcome {
            let r: f64 = self.c.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            PointOutcome::Assessed(StabilityVerdict {
                status: spectra::classify(r, self.tol.margin_tol),
                max_real: r,
                distance_to_axis: r.abs(),
                critical: Some(C64::new(r, 2.0)),
                rcond: 1.0,
            })
        }
        fn extended(&self, p: &[f64]) -> Vec<f64> {
            p.to_vec()
        }
        fn sensitivity(&self, _p: &[f64], d: &[f64]) -> Result<f64, RegionError> {
            Ok(self.c.iter().zip(d).map(|(a, b)| a * b).sum())
        }
    }

    fn affine() -> Affine {
        Affine { c: vec![0.5, 0.25, -0.1], tol: Tolerances::default() }
    }

    #[test]
    fn zero_direction_is_rejected() {
        let m = affine();
        assert_eq!(ray_boundary_search(&m, &[0.0; 3], &[0.0; 3], 5.0), Err(RegionError::ZeroDirection));
    }

    #[test]
    fn ray_hits_hyperplane() {
        let m = affine();
        let bp = ray_boundary_search(&m, &[0.0; 3], &[1.0, 0.0, 0.0], 5.0).unwrap();
        assert!((bp.p[0] - 2.0).abs() < 1e-5);
        assert!(bp.verifies(&m.tol));
        assert_eq!(bp.kind, BifurcationKind::Hopf);
    }

    #[test]
    fn ray_reports_no_crossing() {
        let m = affine();
        let err = ray_boundary_search(&m, &[0.0; 3], &[0.0, 0.0, 1.0], 3.0).unwrap_err();
        assert_eq!(err, RegionError::NoCrossing { max_range: 3.0 });
    }

    #[test]
    fn plane_has_no_curvature() {
        let m = affine();
        let bp = ray_boundary_search(&m, &[0.0; 3], &[1.0, 1.0, 0.0], 5.0).unwrap();
        let qb = quadratic_boundary(&m, &bp.p, BoundarySpace::Extended, &QuadraticConfig::default()).unwrap();
        assert!(qb.hessian.amax() <= 1e-4);
        assert!((qb.gradient[1] + 0.5).abs() < 1e-9);
        assert!((qb.gradient[2] - 0.2).abs() < 1e-9);
        assert!(boundary_residual(&qb, &qb.expansion).value.abs() < 1e-12);
        // the origin is on the stable side
        assert!(boundary_residual(&qb, &[0.0; 3]).value < 0.0);
        assert!(qb.trust_radius >= 3.2);
    }

    #[test]
    fn flat_dependent_coordinate() {
        let m = Affine { c: vec![0.0, 1.0, 0.0], tol: Tolerances::default() };
        let err = quadratic_boundary(&m, &[0.0, 1.0, 0.0], BoundarySpace::Extended, &QuadraticConfig::default());
        assert_eq!(err.unwrap_err(), RegionError::FlatDirection { dependent: 0 });
    }

    #[test]
    fn elimination_of_nothing_keeps_wind_block() {
        // with gamma = 0 the generator coordinates never move
        let n = 4;
        let qb = QuadraticBoundary {
            space: BoundarySpace::Extended,
            expansion: vec![1.0, 2.0, 3.0, 4.0],
            dependent: 2,
            gradient: vec![0.3, -0.2, 0.0, 0.7],
            hessian: DMatrix::from_fn(n, n, |i, j| if i == 2 || j == 2 { 0.0 } else { 0.1 * (i + j) as f64 }),
            linear: vec![-0.3, 0.2, 1.0, -0.7],
            quadratic: DMatrix::from_fn(n, n, |i, j| if i == 2 || j == 2 { 0.0 } else { -0.1 * (i + j) as f64 }),
            orientation: 1.0,
            trust_radius: 1.0,
        };
        let w = quadratic_boundary_wpi(&qb, &[0.0, 0.0], 0).unwrap();
        assert_eq!(w.linear, vec![1.0, -0.7]);
        assert!((w.gradient[1] - 0.7).abs() < 1e-15);
        assert!((w.hessian[(1, 1)] - 0.6).abs() < 1e-15);
        assert_eq!(w.trust_radius, 1.0);
    }

    #[test]
    fn wpi_membership_matches_extended_lift() {
        let case = fixtures::two_sg_two_wind();
        let cfg = fixtures::study(&case);
        let map = WpiMap::scheduled(&case, &cfg.agc, cfg.tolerances.clone());
        let ext = ExtendedMap::new(&case, cfg.tolerances.clone());
        let p = [0.8, 0.3];
        let a = map.outcome(&p);
        let b = ext.outcome(&map.lift(&p).unwrap().extended());
        assert_eq!(a, b);
        // identity lift
        assert_eq!(map.outcome(map.forecast()), ext.outcome(&case.scheduled_injection().extended()));
    }

    #[test]
    fn limit_violation_is_inadmissible() {
        let case = fixtures::two_sg_two_wind();
        let cfg = fixtures::study(&case);
        let map = WpiMap::scheduled(&case, &cfg.agc, cfg.tolerances.clone());
        let o = map.outcome(&[-0.1, 0.5]);
        assert_eq!(
            o,
            PointOutcome::Inadmissible(InadmissibleCause::LimitViolation { unit: UnitRef::WindFarm(0), bound: Bound::Lower })
        );
    }
}
