//! Device steady states, DAE Jacobian blocks and the reduced state matrix.
//!
//! State order per machine: `delta, omega` (classic) or
//! `delta, omega, e'_q, e_fq, v_R, v_M` (third order with exciter).
//! Algebraic order: stator currents `i_d, i_q` per machine, then `theta, V` per
//! bus. An infinite bus (slack without a machine) carries no algebraic
//! variables and no balance equations.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::netcase::{NetworkCase, SgModel, Tolerances};
use crate::powerflow::{generator_outputs, specified_injections, InjectionVector, PowerFlowSolution, Ybus};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DynamicsError {
    #[error("infeasible steady state at generator {gen}: {reason}")]
    InfeasibleSteadyState { gen: usize, reason: &'static str },
    #[error("algebraic Jacobian block is singular (rcond {rcond:e})")]
    SingularAlgebraicBlock { rcond: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MachineSlot {
    pub gen: usize,
    pub bus: usize,
    pub model: SgModel,
    /// Offset of the first state (`delta`).
    pub x: usize,
    /// Offset of `i_d` in the algebraic vector.
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaeLayout {
    pub machines: Vec<MachineSlot>,
    /// Offset of `theta` per bus; `None` for the infinite bus.
    pub bus_y: Vec<Option<usize>>,
    pub n_x: usize,
    pub n_y: usize,
}

impl DaeLayout {
    pub fn new(case: &NetworkCase) -> Self {
        let mut machines = Vec::with_capacity(case.n_s());
        let mut x = 0;
        let mut y = 0;
        for (gen, g) in case.generators.iter().enumerate() {
            let bus = case.bus_index(g.bus).unwrap_or(0);
            machines.push(MachineSlot { gen, bus, model: g.model, x, y });
            x += g.model.state_count();
            y += 2;
        }
        let infinite = if case.has_infinite_bus() { case.bus_index(case.slack_bus) } else { None };
        let bus_y = (0..case.buses.len())
            .map(|k| {
                if Some(k) == infinite {
                    None
                } else {
                    let o = y;
                    y += 2;
                    Some(o)
                }
            })
            .collect();
        Self { machines, bus_y, n_x: x, n_y: y }
    }

    pub fn angle_states(&self) -> Vec<usize> {
        self.machines.iter().map(|m| m.x).collect()
    }
}

/// Parameters fixed at the equilibrium: mechanical power, exciter reference,
/// classic-model EMF and the non-machine bus injections.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingParams {
    pub p_m: Vec<f64>,
    pub v_ref: Vec<f64>,
    /// Constant EMF of classic machines (zero for third-order machines).
    pub emf: Vec<f64>,
    /// Wind minus load, per bus.
    pub p_fixed: Vec<f64>,
    pub q_fixed: Vec<f64>,
    /// Voltage and angle of the infinite bus.
    pub infinite: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub layout: DaeLayout,
    pub x0: DVector<f64>,
    pub y0: DVector<f64>,
    pub injection: InjectionVector,
    pub params: OperatingParams,
}

/// Residual evaluation and analytic linearization of the network DAE.
#[derive(Clone, Debug)]
pub struct DaeSystem<'a> {
    pub case: &'a NetworkCase,
    pub ybus: Ybus,
    pub layout: DaeLayout,
}

fn xq_eff(case: &NetworkCase, m: &MachineSlot) -> f64 {
    let g = &case.generators[m.gen];
    match m.model {
        SgModel::Classic => g.x_d_prime,
        SgModel::ThirdOrderExciter => g.x_q,
    }
}

impl<'a> DaeSystem<'a> {
    pub fn new(case: &'a NetworkCase) -> Self {
        Self { case, ybus: Ybus::build(case), layout: DaeLayout::new(case) }
    }

    fn bus_voltages(&self, y: &DVector<f64>, params: &OperatingParams) -> (Vec<f64>, Vec<f64>) {
        let n = self.case.buses.len();
        let mut v = vec![0.0; n];
        let mut th = vec![0.0; n];
        for k in 0..n {
            match self.layout.bus_y[k] {
                Some(o) => {
                    th[k] = y[o];
                    v[k] = y[o + 1];
                }
                None => {
                    if let Some((_, vi, ti)) = params.infinite {
                        v[k] = vi;
                        th[k] = ti;
                    }
                }
            }
        }
        (v, th)
    }

    /// Right-hand sides `F(x, y)` and `G(x, y)`.
    pub fn residual(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        params: &OperatingParams,
    ) -> (DVector<f64>, DVector<f64>) {
        let case = self.case;
        let ws = case.omega_s();
        let (v, th) = self.bus_voltages(y, params);
        let mut f = DVector::zeros(self.layout.n_x);
        let mut g = DVector::zeros(self.layout.n_y);
        let nb = case.buses.len();
        let mut p_gen = vec![0.0; nb];
        let mut q_gen = vec![0.0; nb];

        for m in &self.layout.machines {
            let sg = &case.generators[m.gen];
            let (o, c, k) = (m.x, m.y, m.bus);
            let (delta, omega) = (x[o], x[o + 1]);
            let (i_d, i_q) = (y[c], y[c + 1]);
            let e = match m.model {
                SgModel::Classic => params.emf[m.gen],
                SgModel::ThirdOrderExciter => x[o + 2],
            };
            let p_e = e * i_q + (xq_eff(case, m) - sg.x_d_prime) * i_d * i_q;
            f[o] = ws * (omega - 1.0);
            f[o + 1] = (params.p_m[m.gen] - p_e - sg.d * (omega - 1.0)) / sg.t_j;
            if m.model == SgModel::ThirdOrderExciter {
                let ex = &sg.exciter;
                let (efq, v_r, v_m) = (x[o + 3], x[o + 4], x[o + 5]);
                let vref = params.v_ref[m.gen];
                f[o + 2] = (-e - (sg.x_d - sg.x_d_prime) * i_d + efq) / sg.t_d0_prime;
                f[o + 3] = (-efq + (ex.t_a - ex.t_c) / ex.t_a * v_r - ex.k_a * ex.t_c / ex.t_a * v_m
                    + ex.k_a * ex.t_c / ex.t_a * vref)
                    / ex.t_b;
                f[o + 4] = (ex.k_a * (vref - v_m) - v_r) / ex.t_a;
                f[o + 5] = (v[k] - v_m) / ex.t_r;
            }
            let ang = delta - th[k];
            let (s, co) = (libm::sin(ang), libm::cos(ang));
            g[c] = v[k] * s - xq_eff(case, m) * i_q;
            g[c + 1] = e - sg.x_d_prime * i_d - v[k] * co;
            p_gen[k] += v[k] * s * i_d + v[k] * co * i_q;
            q_gen[k] += v[k] * co * i_d - v[k] * s * i_q;
        }

        let (p_net, q_net) = self.ybus.injections(&v, &th);
        for k in 0..nb {
            if let Some(o) = self.layout.bus_y[k] {
                g[o] = p_gen[k] + params.p_fixed[k] - p_net[k];
                g[o + 1] = q_gen[k] + params.q_fixed[k] - q_net[k];
            }
        }
        (f, g)
    }

    /// Analytic blocks of the linearized DAE at `(x, y)`.
    pub fn jacobians(&self, x: &DVector<f64>, y: &DVector<f64>, params: &OperatingParams) -> DaeJacobians {
        let case = self.case;
        let (nx, ny) = (self.layout.n_x, self.layout.n_y);
        let ws = case.omega_s();
        let (v, th) = self.bus_voltages(y, params);
        let mut a = DMatrix::zeros(nx, nx);
        let mut b = DMatrix::zeros(nx, ny);
        let mut c = DMatrix::zeros(ny, nx);
        let mut d = DMatrix::zeros(ny, ny);

        for m in &self.layout.machines {
            let sg = &case.generators[m.gen];
            let (o, cy, k) = (m.x, m.y, m.bus);
            let (i_d, i_q) = (y[cy], y[cy + 1]);
            let xq = xq_eff(case, m);
            let e = match m.model {
                SgModel::Classic => params.emf[m.gen],
                SgModel::ThirdOrderExciter => x[o + 2],
            };
            let bus = self.layout.bus_y[k];

            // swing
            a[(o, o + 1)] = ws;
            a[(o + 1, o + 1)] = -sg.d / sg.t_j;
            b[(o + 1, cy)] = -(xq - sg.x_d_prime) * i_q / sg.t_j;
            b[(o + 1, cy + 1)] = -(e + (xq - sg.x_d_prime) * i_d) / sg.t_j;

            if m.model == SgModel::ThirdOrderExciter {
                let ex = &sg.exciter;
                a[(o + 1, o + 2)] = -i_q / sg.t_j;
                a[(o + 2, o + 2)] = -1.0 / sg.t_d0_prime;
                a[(o + 2, o + 3)] = 1.0 / sg.t_d0_prime;
                b[(o + 2, cy)] = -(sg.x_d - sg.x_d_prime) / sg.t_d0_prime;
                a[(o + 3, o + 3)] = -1.0 / ex.t_b;
                a[(o + 3, o + 4)] = (ex.t_a - ex.t_c) / (ex.t_a * ex.t_b);
                a[(o + 3, o + 5)] = -ex.k_a * ex.t_c / (ex.t_a * ex.t_b);
                a[(o + 4, o + 4)] = -1.0 / ex.t_a;
                a[(o + 4, o + 5)] = -ex.k_a / ex.t_a;
                a[(o + 5, o + 5)] = -1.0 / ex.t_r;
                if let Some(bo) = bus {
                    b[(o + 5, bo + 1)] = 1.0 / ex.t_r;
                }
            }

            // stator
            let ang = x[o] - th[k];
            let (s, co) = (libm::sin(ang), libm::cos(ang));
            let vk = v[k];
            c[(cy, o)] = vk * co;
            d[(cy, cy + 1)] = -xq;
            c[(cy + 1, o)] = vk * s;
            d[(cy + 1, cy)] = -sg.x_d_prime;
            if m.model == SgModel::ThirdOrderExciter {
                c[(cy + 1, o + 2)] = 1.0;
            }
            if let Some(bo) = bus {
                d[(cy, bo)] = -vk * co;
                d[(cy, bo + 1)] = s;
                d[(cy + 1, bo)] = -vk * s;
                d[(cy + 1, bo + 1)] = -co;

                // generator terms of the bus balance
                let dp_ddelta = vk * co * i_d - vk * s * i_q;
                let dq_ddelta = -vk * s * i_d - vk * co * i_q;
                c[(bo, o)] += dp_ddelta;
                c[(bo + 1, o)] += dq_ddelta;
                d[(bo, bo)] -= dp_ddelta;
                d[(bo + 1, bo)] -= dq_ddelta;
                d[(bo, bo + 1)] += s * i_d + co * i_q;
                d[(bo + 1, bo + 1)] += co * i_d - s * i_q;
                d[(bo, cy)] += vk * s;
                d[(bo, cy + 1)] += vk * co;
                d[(bo + 1, cy)] += vk * co;
                d[(bo + 1, cy + 1)] += -vk * s;
            }
        }

        let (p_net, q_net) = self.ybus.injections(&v, &th);
        let nb = case.buses.len();
        for k in 0..nb {
            let Some(rk) = self.layout.bus_y[k] else { continue };
            for j in 0..nb {
                if k != j && self.ybus.g[(k, j)] == 0.0 && self.ybus.b[(k, j)] == 0.0 {
                    continue;
                }
                let Some(cj) = self.layout.bus_y[j] else { continue };
                let p = self.ybus.partials(&v, &th, p_net[k], q_net[k], k, j);
                d[(rk, cj)] -= p[0];
                d[(rk, cj + 1)] -= p[1];
                d[(rk + 1, cj)] -= p[2];
                d[(rk + 1, cj + 1)] -= p[3];
            }
        }
        DaeJacobians { a_tilde: a, b_tilde: b, c_tilde: c, d_tilde: d }
    }
}

/// Blocks `[A~ B~; C~ D~]` of the linearized DAE.
#[derive(Clone, Debug, PartialEq)]
pub struct DaeJacobians {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    pub c_tilde: DMatrix<f64>,
    pub d_tilde: DMatrix<f64>,
}

impl DaeJacobians {
    /// The full `(n+m) x (n+m)` Jacobian.
    pub fn full(&self) -> DMatrix<f64> {
        let (n, m) = (self.a_tilde.nrows(), self.d_tilde.nrows());
        let mut j = DMatrix::zeros(n + m, n + m);
        j.view_mut((0, 0), (n, n)).copy_from(&self.a_tilde);
        j.view_mut((0, n), (n, m)).copy_from(&self.b_tilde);
        j.view_mut((n, 0), (m, n)).copy_from(&self.c_tilde);
        j.view_mut((n, n), (m, m)).copy_from(&self.d_tilde);
        j
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedStateMatrix {
    pub a: DMatrix<f64>,
    /// Reciprocal 1-norm condition estimate of `D~`.
    pub d_tilde_rcond: f64,
    /// Rotor-angle states. When `reference_mode` is set, shifting all of them
    /// together is an exact null direction of `a`.
    pub angle_states: Vec<usize>,
    pub reference_mode: bool,
}

impl ReducedStateMatrix {
    /// A plain state matrix with no structural angle reference.
    pub fn plain(a: DMatrix<f64>) -> Self {
        Self { a, d_tilde_rcond: 1.0, angle_states: Vec::new(), reference_mode: false }
    }
}

/// Back-solves machine and exciter states from a converged power flow.
pub fn init_equilibrium(
    case: &NetworkCase,
    inj: &InjectionVector,
    pf: &PowerFlowSolution,
) -> Result<Equilibrium, DynamicsError> {
    let layout = DaeLayout::new(case);
    let outputs = generator_outputs(case, inj, pf);
    let mut x0 = DVector::zeros(layout.n_x);
    let mut y0 = DVector::zeros(layout.n_y);
    let n_s = case.n_s();
    let mut p_m = vec![0.0; n_s];
    let mut v_ref = vec![0.0; n_s];
    let mut emf = vec![0.0; n_s];

    for m in &layout.machines {
        let sg = &case.generators[m.gen];
        let (p, q) = outputs[m.gen];
        let (vk, thk) = (pf.v[m.bus], pf.theta[m.bus]);
        let vph = C64::from_polar(vk, thk);
        let current = C64::new(p, -q) / vph.conj();
        let xq = xq_eff(case, m);
        let eq = vph + C64::new(0.0, xq) * current;
        let delta = libm::atan2(eq.im, eq.re);
        let rot = C64::from_polar(1.0, -(delta - core::f64::consts::FRAC_PI_2));
        let idq = current * rot;
        let vdq = vph * rot;
        let (i_d, i_q) = (idq.re, idq.im);
        let e = vdq.im + sg.x_d_prime * i_d;
        if !(e > 0.0) {
            return Err(DynamicsError::InfeasibleSteadyState { gen: m.gen, reason: "non-positive internal EMF" });
        }
        x0[m.x] = delta;
        x0[m.x + 1] = 1.0;
        y0[m.y] = i_d;
        y0[m.y + 1] = i_q;
        p_m[m.gen] = e * i_q + (xq - sg.x_d_prime) * i_d * i_q;
        match m.model {
            SgModel::Classic => emf[m.gen] = e,
            SgModel::ThirdOrderExciter => {
                let efq = e + (sg.x_d - sg.x_d_prime) * i_d;
                if !(efq > 0.0) {
                    return Err(DynamicsError::InfeasibleSteadyState { gen: m.gen, reason: "non-positive field voltage" });
                }
                x0[m.x + 2] = e;
                x0[m.x + 3] = efq;
                x0[m.x + 4] = efq;
                x0[m.x + 5] = vk;
                v_ref[m.gen] = vk + efq / sg.exciter.k_a;
            }
        }
    }
    for (k, slot) in layout.bus_y.iter().enumerate() {
        if let Some(o) = *slot {
            y0[o] = pf.theta[k];
            y0[o + 1] = pf.v[k];
        }
    }
    let (p_fixed, mut q_fixed) = specified_injections(case, inj);
    // machine buses: the specified P includes the schedule, which the machine supplies itself
    let mut p_fixed = p_fixed;
    for (g, &ps) in case.generators.iter().zip(&inj.p_s) {
        if let Some(k) = case.bus_index(g.bus) {
            p_fixed[k] -= ps;
        }
    }
    let infinite = if case.has_infinite_bus() {
        case.bus_index(case.slack_bus).map(|k| (k, pf.v[k], pf.theta[k]))
    } else {
        None
    };
    if let Some((k, _, _)) = infinite {
        p_fixed[k] = 0.0;
        q_fixed[k] = 0.0;
    }
    Ok(Equilibrium {
        layout,
        x0,
        y0,
        injection: inj.clone(),
        params: OperatingParams { p_m, v_ref, emf, p_fixed, q_fixed, infinite },
    })
}

impl Equilibrium {
    /// Infinity norm of `[F; G]` at the stored point.
    pub fn residual_norm(&self, case: &NetworkCase) -> f64 {
        let sys = DaeSystem::new(case);
        let (f, g) = sys.residual(&self.x0, &self.y0, &self.params);
        f.amax().max(g.amax())
    }
}

/// Central-difference linearization of the residuals; independent of the
/// analytic blocks and used to check them.
pub fn finite_difference_jacobians(case: &NetworkCase, eq: &Equilibrium, step: f64) -> DaeJacobians {
    let sys = DaeSystem::new(case);
    let (nx, ny) = (eq.layout.n_x, eq.layout.n_y);
    let mut a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, ny);
    let mut c = DMatrix::zeros(ny, nx);
    let mut d = DMatrix::zeros(ny, ny);
    for j in 0..nx {
        let (mut xp, mut xm) = (eq.x0.clone(), eq.x0.clone());
        xp[j] += step;
        xm[j] -= step;
        let (fp, gp) = sys.residual(&xp, &eq.y0, &eq.params);
        let (fm, gm) = sys.residual(&xm, &eq.y0, &eq.params);
        a.set_column(j, &((fp - fm) / (2.0 * step)));
        c.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    for j in 0..ny {
        let (mut yp, mut ym) = (eq.y0.clone(), eq.y0.clone());
        yp[j] += step;
        ym[j] -= step;
        let (fp, gp) = sys.residual(&eq.x0, &yp, &eq.params);
        let (fm, gm) = sys.residual(&eq.x0, &ym, &eq.params);
        b.set_column(j, &((fp - fm) / (2.0 * step)));
        d.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    DaeJacobians { a_tilde: a, b_tilde: b, c_tilde: c, d_tilde: d }
}

pub fn assemble_jacobians(case: &NetworkCase, eq: &Equilibrium) -> DaeJacobians {
    DaeSystem::new(case).jacobians(&eq.x0, &eq.y0, &eq.params)
}

/// Schur complement `A~ - B~ D~^-1 C~` through an LU solve.
pub fn reduce_state_matrix(jac: &DaeJacobians, tol: &Tolerances) -> Result<ReducedStateMatrix, DynamicsError> {
    let lu = jac.d_tilde.clone().lu();
    let rcond = crate::linalg::rcond_estimate(&jac.d_tilde, &lu);
    if !(rcond >= tol.sib_tol) {
        return Err(DynamicsError::SingularAlgebraicBlock { rcond });
    }
    let Some(dc) = lu.solve(&jac.c_tilde) else {
        return Err(DynamicsError::SingularAlgebraicBlock { rcond: 0.0 });
    };
    let a = &jac.a_tilde - &jac.b_tilde * dc;
    Ok(ReducedStateMatrix { a, d_tilde_rcond: rcond, angle_states: Vec::new(), reference_mode: false })
}

/// Reduction that also records the rotor-angle bookkeeping of the case.
pub fn reduce_for_case(
    case: &NetworkCase,
    eq: &Equilibrium,
    jac: &DaeJacobians,
    tol: &Tolerances,
) -> Result<ReducedStateMatrix, DynamicsError> {
    let mut r = reduce_state_matrix(jac, tol)?;
    r.angle_states = eq.layout.angle_states();
    r.reference_mode = !case.has_infinite_bus() && !r.angle_states.is_empty();
    Ok(r)
}
