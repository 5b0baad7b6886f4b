//! Static network description and study configuration.
//!
//! All powers are per-unit on [`NetworkCase::base_mva`]; angles in radians;
//! time constants in seconds.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::powerflow::InjectionVector;
use crate::uncertainty::BetaMarginal;

pub type BusId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub name: String,
    /// Voltage magnitude setpoint, used at PV and slack buses.
    pub v_set: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
}

impl Bus {
    pub fn new(id: BusId, v_set: f64) -> Self {
        Self { id, name: String::new(), v_set, g_shunt: 0.0, b_shunt: 0.0 }
    }
}

/// Line or transformer. The off-nominal tap sits on the `from` side.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    pub tap: f64,
}

impl Branch {
    pub fn line(from: BusId, to: BusId, r: f64, x: f64, b: f64) -> Self {
        Self { from, to, r, x, b, tap: 1.0 }
    }
}

/// Constant-power load.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec {
    pub bus: BusId,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgModel {
    /// Constant EMF behind transient reactance: swing equation only.
    Classic,
    /// One-axis machine with the simplified lead-lag exciter.
    ThirdOrderExciter,
}

impl SgModel {
    pub fn state_count(self) -> usize {
        match self {
            SgModel::Classic => 2,
            SgModel::ThirdOrderExciter => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExciterParams {
    pub k_a: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub t_r: f64,
}

impl Default for ExciterParams {
    fn default() -> Self {
        Self { k_a: 50.0, t_a: 0.05, t_b: 1.0, t_c: 1.0, t_r: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgSpec {
    pub name: String,
    pub bus: BusId,
    pub model: SgModel,
    /// Mechanical starting time, 2H on the system base.
    pub t_j: f64,
    pub d: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d_prime: f64,
    pub t_d0_prime: f64,
    pub exciter: ExciterParams,
    /// Scheduled active injection at the forecast operating point.
    pub p_sched: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindFarmSpec {
    pub name: String,
    pub bus: BusId,
    pub capacity: f64,
    pub forecast: f64,
    /// Constant power factor; reactive output is `p * tan(acos(pf))`.
    pub power_factor: f64,
    pub marginal: BetaMarginal,
}

impl WindFarmSpec {
    pub fn q_per_p(&self) -> f64 {
        let pf = self.power_factor.clamp(-1.0, 1.0);
        let s = libm::sqrt((1.0 - pf * pf).max(0.0));
        if pf.abs() < f64::EPSILON {
            0.0
        } else {
            s / pf
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub slack_bus: BusId,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<LoadSpec>,
    pub generators: Vec<SgSpec>,
    pub wind_farms: Vec<WindFarmSpec>,
}

impl NetworkCase {
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn n_s(&self) -> usize {
        self.generators.len()
    }

    pub fn n_w(&self) -> usize {
        self.wind_farms.len()
    }

    /// Synchronous speed in rad/s.
    pub fn omega_s(&self) -> f64 {
        2.0 * core::f64::consts::PI * self.frequency_hz
    }

    /// Total constant-power load `L`.
    pub fn total_load(&self) -> f64 {
        self.loads.iter().map(|l| l.p).sum()
    }

    /// Index of the generator sitting on the slack bus, if any. A slack bus
    /// without a generator is an infinite bus.
    pub fn slack_generator(&self) -> Option<usize> {
        self.generators.iter().position(|g| g.bus == self.slack_bus)
    }

    pub fn has_infinite_bus(&self) -> bool {
        self.slack_generator().is_none()
    }

    /// Scheduled generator outputs and wind forecasts.
    pub fn scheduled_injection(&self) -> InjectionVector {
        InjectionVector {
            p_s: self.generators.iter().map(|g| g.p_sched).collect(),
            p_w: self.wind_farms.iter().map(|w| w.forecast).collect(),
        }
    }

    pub fn forecast(&self) -> Vec<f64> {
        self.wind_farms.iter().map(|w| w.forecast).collect()
    }
}

/// AGC contribution factors, one per generator in case order.
#[derive(Clone, Debug, PartialEq)]
pub struct AgcPolicy {
    pub gamma: Vec<f64>,
}

impl AgcPolicy {
    pub fn new(gamma: Vec<f64>) -> Self {
        Self { gamma }
    }
}

/// Numerical tolerances of the whole pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub pf_tol: f64,
    pub pf_max_iter: usize,
    pub eq_tol: f64,
    pub fd_check_tol: f64,
    /// Reciprocal condition of the algebraic block below which it is singular.
    pub sib_tol: f64,
    pub margin_tol: f64,
    pub eig_sep_tol: f64,
    /// Central-difference step for the state-matrix derivative, pu.
    pub sensitivity_step: f64,
    pub ray_tol: f64,
    /// Initial stepping size of the outward scan along a ray, pu.
    pub ray_scan_step: f64,
    pub boundary_tol: f64,
    pub resid_cap: f64,
    /// Relative error budget of the quadratic boundary inside its trust radius.
    pub trust_rel_err: f64,
    /// Imaginary part above which a critical mode is labelled Hopf.
    pub hopf_imag_tol: f64,
    pub beta_inv_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pf_tol: 1e-8,
            pf_max_iter: 30,
            eq_tol: 1e-9,
            fd_check_tol: 1e-6,
            sib_tol: 1e-12,
            margin_tol: 1e-6,
            eig_sep_tol: 1e-4,
            sensitivity_step: 1e-5,
            ray_tol: 1e-4,
            ray_scan_step: 0.1,
            boundary_tol: 1e-6,
            resid_cap: 1e-3,
            trust_rel_err: 0.05,
            hopf_imag_tol: 1e-6,
            beta_inv_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub agc: AgcPolicy,
    /// Confidence level of the ellipsoidal set.
    pub alpha_conf: f64,
    pub sample_count: usize,
    pub seed: Option<u64>,
    /// Spearman rank correlation between wind forecast errors.
    pub rank_corr: DMatrix<f64>,
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    DuplicateId,
    UnknownBus,
    SlackBus,
    BaseMva,
    ZeroReactance,
    GeneratorParameter,
    LimitOrder,
    ScheduleOutsideLimits,
    SharedGeneratorBus,
    WindForecast,
    Marginal,
    GammaLength,
    GammaSum,
    GammaNegative,
    CorrelationShape,
    CorrelationRange,
    CorrelationSymmetry,
    CorrelationDiagonal,
    CorrelationNotPsd,
    Confidence,
    Island,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl core::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.message)
    }
}

fn diag(out: &mut Vec<Diagnostic>, kind: DiagnosticKind, message: String) {
    out.push(Diagnostic { kind, message });
}

/// Checks every structural invariant of the case and configuration. An empty
/// result means the study can be run.
pub fn validate_case(case: &NetworkCase, cfg: &StudyConfig) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();

    if !(case.base_mva > 0.0) {
        diag(&mut out, BaseMva, format!("base_mva must be positive, got {}", case.base_mva));
    }
    if !(case.frequency_hz > 0.0) {
        diag(&mut out, BaseMva, format!("frequency_hz must be positive, got {}", case.frequency_hz));
    }

    for (i, b) in case.buses.iter().enumerate() {
        if case.buses[..i].iter().any(|o| o.id == b.id) {
            diag(&mut out, DuplicateId, format!("duplicate bus id {}", b.id));
        }
        if !(b.v_set > 0.0) {
            diag(&mut out, GeneratorParameter, format!("bus {}: v_set must be positive", b.id));
        }
    }
    let known = |id: BusId| case.bus_index(id).is_some();

    if !known(case.slack_bus) {
        diag(&mut out, SlackBus, format!("slack bus {} does not exist", case.slack_bus));
    }

    for (k, br) in case.branches.iter().enumerate() {
        for end in [br.from, br.to] {
            if !known(end) {
                diag(&mut out, UnknownBus, format!("branch {} references unknown bus {}", k + 1, end));
            }
        }
        if br.x == 0.0 || !br.x.is_finite() {
            diag(&mut out, ZeroReactance, format!("branch {}-{} has zero reactance", br.from, br.to));
        }
        if !(br.tap > 0.0) {
            diag(&mut out, ZeroReactance, format!("branch {}-{} has non-positive tap", br.from, br.to));
        }
    }
    for l in &case.loads {
        if !known(l.bus) {
            diag(&mut out, UnknownBus, format!("load references unknown bus {}", l.bus));
        }
    }

    for (i, g) in case.generators.iter().enumerate() {
        if case.generators[..i].iter().any(|o| o.name == g.name) {
            diag(&mut out, DuplicateId, format!("duplicate generator name {}", g.name));
        }
        if !known(g.bus) {
            diag(&mut out, UnknownBus, format!("generator {} references unknown bus {}", g.name, g.bus));
        }
        if case.generators[..i].iter().any(|o| o.bus == g.bus) {
            diag(&mut out, SharedGeneratorBus, format!("more than one generator at bus {}", g.bus));
        }
        let mut bad = |what: &str, v: f64| {
            if !(v > 0.0) || !v.is_finite() {
                diag(&mut out, GeneratorParameter, format!("generator {}: {what} must be positive, got {v}", g.name));
            }
        };
        bad("T_J", g.t_j);
        bad("x'_d", g.x_d_prime);
        if g.model == SgModel::ThirdOrderExciter {
            bad("x_d", g.x_d);
            bad("x_q", g.x_q);
            bad("T'_d0", g.t_d0_prime);
            bad("K_A", g.exciter.k_a);
            bad("T_A", g.exciter.t_a);
            bad("T_B", g.exciter.t_b);
            bad("T_C", g.exciter.t_c);
            bad("T_R", g.exciter.t_r);
        }
        if g.d < 0.0 {
            diag(&mut out, GeneratorParameter, format!("generator {}: damping must be non-negative", g.name));
        }
        if g.p_min > g.p_max {
            diag(&mut out, LimitOrder, format!("generator {}: p_min exceeds p_max", g.name));
        } else if g.p_sched < g.p_min || g.p_sched > g.p_max {
            diag(
                &mut out,
                ScheduleOutsideLimits,
                format!("generator {}: schedule {} outside [{}, {}]", g.name, g.p_sched, g.p_min, g.p_max),
            );
        }
    }

    for (i, w) in case.wind_farms.iter().enumerate() {
        if case.wind_farms[..i].iter().any(|o| o.name == w.name) {
            diag(&mut out, DuplicateId, format!("duplicate wind farm name {}", w.name));
        }
        if !known(w.bus) {
            diag(&mut out, UnknownBus, format!("wind farm {} references unknown bus {}", w.name, w.bus));
        }
        if !(w.forecast >= 0.0 && w.forecast <= w.capacity) {
            diag(
                &mut out,
                WindForecast,
                format!("wind farm {}: forecast {} outside [0, {}]", w.name, w.forecast, w.capacity),
            );
        }
        if !(w.power_factor > 0.0 && w.power_factor <= 1.0) {
            diag(&mut out, WindForecast, format!("wind farm {}: power factor must lie in (0, 1]", w.name));
        }
        let m = &w.marginal;
        if !(m.shape_a > 0.0 && m.shape_b > 0.0 && m.lower < m.upper) {
            diag(&mut out, Marginal, format!("wind farm {}: invalid beta marginal", w.name));
        }
    }

    // AGC
    let gamma = &cfg.agc.gamma;
    if gamma.len() != case.n_s() {
        diag(
            &mut out,
            GammaLength,
            format!("gamma has {} entries, expected {} (one per generator)", gamma.len(), case.n_s()),
        );
    }
    if gamma.iter().any(|&g| g < 0.0) {
        diag(&mut out, GammaNegative, "gamma components must be non-negative".into());
    }
    let sum: f64 = gamma.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        diag(&mut out, GammaSum, format!("gamma must sum to 1, sums to {sum}"));
    }

    if !(cfg.alpha_conf > 0.0 && cfg.alpha_conf < 1.0) {
        diag(&mut out, Confidence, format!("alpha_conf must lie in (0, 1), got {}", cfg.alpha_conf));
    }

    check_correlation(&cfg.rank_corr, case.n_w(), &mut out);

    if let Some(island) = find_island(case) {
        diag(&mut out, Island, format!("island detected: bus {island} is not connected to the slack bus"));
    }
    out
}

fn check_correlation(rho: &DMatrix<f64>, n_w: usize, out: &mut Vec<Diagnostic>) {
    use DiagnosticKind::*;
    if rho.nrows() != n_w || rho.ncols() != n_w {
        diag(
            out,
            CorrelationShape,
            format!("correlation matrix is {}x{}, expected {n_w}x{n_w}", rho.nrows(), rho.ncols()),
        );
        return;
    }
    let mut shape_ok = true;
    for i in 0..n_w {
        if (rho[(i, i)] - 1.0).abs() > 1e-12 {
            diag(out, CorrelationDiagonal, format!("correlation diagonal entry {} is not 1", i + 1));
            shape_ok = false;
        }
        for j in 0..n_w {
            let v = rho[(i, j)];
            if !(-1.0..=1.0).contains(&v) {
                diag(out, CorrelationRange, format!("correlation out of range: entry ({}, {}) = {v}", i + 1, j + 1));
                shape_ok = false;
            }
            if (v - rho[(j, i)]).abs() > 1e-12 {
                diag(out, CorrelationSymmetry, format!("correlation matrix not symmetric at ({}, {})", i + 1, j + 1));
                shape_ok = false;
            }
        }
    }
    if shape_ok && n_w > 0 {
        let eig = rho.clone().symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            diag(out, CorrelationNotPsd, format!("correlation matrix not positive semidefinite (min eigenvalue {min})"));
        }
    }
}

/// Returns a bus that cannot reach the slack bus, if any.
pub fn find_island(case: &NetworkCase) -> Option<BusId> {
    let n = case.buses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for br in &case.branches {
        if let (Some(a), Some(b)) = (case.bus_index(br.from), case.bus_index(br.to)) {
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }
    let slack = case.bus_index(case.slack_bus)?;
    let rs = root(&mut parent, slack);
    (0..n).find(|&i| root(&mut parent, i) != rs).map(|i| case.buses[i].id)
}

/// Convenience: an identity rank-correlation matrix.
pub fn identity_correlation(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Default study configuration around a case: equal AGC shares, 95% confidence.
pub fn default_config(case: &NetworkCase) -> StudyConfig {
    let n = case.n_s().max(1);
    StudyConfig {
        agc: AgcPolicy::new(vec![1.0 / n as f64; case.n_s()]),
        alpha_conf: 0.95,
        sample_count: 10_000,
        seed: Some(1),
        rank_corr: identity_correlation(case.n_w()),
        tolerances: Tolerances::default(),
    }
}
