//! AGC redistribution of wind deviations and Newton-Raphson AC power flow.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::netcase::{AgcPolicy, NetworkCase, Tolerances};

/// Active injections of the generators and wind farms, in case order.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionVector {
    pub p_s: Vec<f64>,
    pub p_w: Vec<f64>,
}

impl InjectionVector {
    /// The extended vector `[p_s; p_w]`.
    pub fn extended(&self) -> Vec<f64> {
        let mut v = self.p_s.clone();
        v.extend_from_slice(&self.p_w);
        v
    }

    pub fn from_extended(n_s: usize, p_e: &[f64]) -> Self {
        Self { p_s: p_e[..n_s].to_vec(), p_w: p_e[n_s..].to_vec() }
    }

    pub fn total(&self) -> f64 {
        self.p_s.iter().sum::<f64>() + self.p_w.iter().sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitRef {
    Generator(usize),
    WindFarm(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("limit violation: {unit:?} {bound:?} bound {limit} crossed (value {value})")]
    LimitViolation { unit: UnitRef, bound: Bound, value: f64, limit: f64 },
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Shifts wind by `delta_w` and moves every generator by `-gamma_i * sum(delta_w)`.
/// Linear, no limit checks.
pub fn agc_shift(base: &InjectionVector, delta_w: &[f64], gamma: &[f64]) -> InjectionVector {
    let total: f64 = delta_w.iter().sum();
    InjectionVector {
        p_s: base.p_s.iter().zip(gamma).map(|(p, g)| p - g * total).collect(),
        p_w: base.p_w.iter().zip(delta_w).map(|(p, d)| p + d).collect(),
    }
}

/// Box limits on generator and wind injections.
pub fn check_limits(case: &NetworkCase, inj: &InjectionVector) -> Result<(), PowerFlowError> {
    for (i, (g, &p)) in case.generators.iter().zip(&inj.p_s).enumerate() {
        let unit = UnitRef::Generator(i);
        if p < g.p_min {
            return Err(PowerFlowError::LimitViolation { unit, bound: Bound::Lower, value: p, limit: g.p_min });
        }
        if p > g.p_max {
            return Err(PowerFlowError::LimitViolation { unit, bound: Bound::Upper, value: p, limit: g.p_max });
        }
    }
    for (j, (w, &p)) in case.wind_farms.iter().zip(&inj.p_w).enumerate() {
        let unit = UnitRef::WindFarm(j);
        if p < 0.0 {
            return Err(PowerFlowError::LimitViolation { unit, bound: Bound::Lower, value: p, limit: 0.0 });
        }
        if p > w.capacity {
            return Err(PowerFlowError::LimitViolation { unit, bound: Bound::Upper, value: p, limit: w.capacity });
        }
    }
    Ok(())
}

/// AGC redistribution with the compensating sign: generators absorb the
/// negative of the total wind deviation in proportion to `gamma`.
pub fn apply_agc(
    base: &InjectionVector,
    delta_w: &[f64],
    policy: &AgcPolicy,
    case: &NetworkCase,
) -> Result<InjectionVector, PowerFlowError> {
    if delta_w.len() != case.n_w() {
        return Err(PowerFlowError::Dimension { expected: case.n_w(), got: delta_w.len() });
    }
    if policy.gamma.len() != case.n_s() {
        return Err(PowerFlowError::Dimension { expected: case.n_s(), got: policy.gamma.len() });
    }
    let out = agc_shift(base, delta_w, &policy.gamma);
    check_limits(case, &out)?;
    Ok(out)
}

/// Dense bus admittance matrix split into conductance and susceptance.
#[derive(Clone, Debug)]
pub struct Ybus {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Ybus {
    pub fn build(case: &NetworkCase) -> Self {
        let n = case.buses.len();
        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for br in &case.branches {
            let (Some(f), Some(t)) = (case.bus_index(br.from), case.bus_index(br.to)) else {
                continue;
            };
            let den = br.r * br.r + br.x * br.x;
            let (ys_g, ys_b) = (br.r / den, -br.x / den);
            let tap = br.tap;
            g[(f, f)] += ys_g / (tap * tap);
            b[(f, f)] += (ys_b + br.b / 2.0) / (tap * tap);
            g[(t, t)] += ys_g;
            b[(t, t)] += ys_b + br.b / 2.0;
            g[(f, t)] -= ys_g / tap;
            b[(f, t)] -= ys_b / tap;
            g[(t, f)] -= ys_g / tap;
            b[(t, f)] -= ys_b / tap;
        }
        for (k, bus) in case.buses.iter().enumerate() {
            g[(k, k)] += bus.g_shunt;
            b[(k, k)] += bus.b_shunt;
        }
        Self { g, b }
    }

    pub fn len(&self) -> usize {
        self.g.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Net active and reactive power leaving each bus into the network.
    pub fn injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for k in 0..n {
            for j in 0..n {
                let (gkj, bkj) = (self.g[(k, j)], self.b[(k, j)]);
                if gkj == 0.0 && bkj == 0.0 {
                    continue;
                }
                let d = th[k] - th[j];
                let (s, c) = (libm::sin(d), libm::cos(d));
                p[k] += v[k] * v[j] * (gkj * c + bkj * s);
                q[k] += v[k] * v[j] * (gkj * s - bkj * c);
            }
        }
        (p, q)
    }

    /// Partials of the network injections at bus `k` with respect to the
    /// angle and magnitude of bus `j`: `[dP/dth, dP/dV, dQ/dth, dQ/dV]`.
    /// `pk`, `qk` are the injections at `k` (needed for the diagonal terms).
    pub fn partials(&self, v: &[f64], th: &[f64], pk: f64, qk: f64, k: usize, j: usize) -> [f64; 4] {
        let (gkj, bkj) = (self.g[(k, j)], self.b[(k, j)]);
        if k == j {
            let vk = v[k];
            [
                -qk - bkj * vk * vk,
                pk / vk + gkj * vk,
                pk - gkj * vk * vk,
                qk / vk - bkj * vk,
            ]
        } else {
            let d = th[k] - th[j];
            let (s, c) = (libm::sin(d), libm::cos(d));
            let (vk, vj) = (v[k], v[j]);
            [
                vk * vj * (gkj * s - bkj * c),
                vk * (gkj * c + bkj * s),
                -vk * vj * (gkj * c + bkj * s),
                vk * (gkj * s - bkj * c),
            ]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Net injection into the network at each bus.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Slack generator output minus its schedule (network losses plus residual imbalance).
    pub slack_absorption: f64,
    pub losses: f64,
    pub iterations: usize,
    pub mismatch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BusKind {
    Slack,
    Pv,
    Pq,
}

fn bus_kinds(case: &NetworkCase) -> Vec<BusKind> {
    case.buses
        .iter()
        .map(|b| {
            if b.id == case.slack_bus {
                BusKind::Slack
            } else if case.generators.iter().any(|g| g.bus == b.id) {
                BusKind::Pv
            } else {
                BusKind::Pq
            }
        })
        .collect()
}

/// Specified (generation minus load) active and reactive injections per bus.
/// Reactive entries only carry wind and load terms.
pub fn specified_injections(case: &NetworkCase, inj: &InjectionVector) -> (Vec<f64>, Vec<f64>) {
    let n = case.buses.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (g, &ps) in case.generators.iter().zip(&inj.p_s) {
        if let Some(k) = case.bus_index(g.bus) {
            p[k] += ps;
        }
    }
    for (w, &pw) in case.wind_farms.iter().zip(&inj.p_w) {
        if let Some(k) = case.bus_index(w.bus) {
            p[k] += pw;
            q[k] += pw * w.q_per_p();
        }
    }
    for l in &case.loads {
        if let Some(k) = case.bus_index(l.bus) {
            p[k] -= l.p;
            q[k] -= l.q;
        }
    }
    (p, q)
}

/// Newton-Raphson power flow in polar form from a flat start. The slack bus
/// absorbs losses and any residual imbalance.
pub fn solve_power_flow(
    case: &NetworkCase,
    inj: &InjectionVector,
    tol: &Tolerances,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let ybus = Ybus::build(case);
    solve_with_ybus(case, &ybus, inj, tol)
}

pub fn solve_with_ybus(
    case: &NetworkCase,
    ybus: &Ybus,
    inj: &InjectionVector,
    tol: &Tolerances,
) -> Result<PowerFlowSolution, PowerFlowError> {
    if inj.p_s.len() != case.n_s() {
        return Err(PowerFlowError::Dimension { expected: case.n_s(), got: inj.p_s.len() });
    }
    if inj.p_w.len() != case.n_w() {
        return Err(PowerFlowError::Dimension { expected: case.n_w(), got: inj.p_w.len() });
    }
    let n = case.buses.len();
    let kinds = bus_kinds(case);
    let (p_spec, q_spec) = specified_injections(case, inj);

    let mut v: Vec<f64> = case
        .buses
        .iter()
        .zip(&kinds)
        .map(|(b, k)| if *k == BusKind::Pq { 1.0 } else { b.v_set })
        .collect();
    let mut th = vec![0.0; n];

    let ang: Vec<usize> = (0..n).filter(|&k| kinds[k] != BusKind::Slack).collect();
    let mag: Vec<usize> = (0..n).filter(|&k| kinds[k] == BusKind::Pq).collect();
    let dim = ang.len() + mag.len();

    let mut iterations = 0;
    let mut polished = false;
    loop {
        let (p, q) = ybus.injections(&v, &th);
        let mut f = DVector::zeros(dim);
        for (r, &k) in ang.iter().enumerate() {
            f[r] = p[k] - p_spec[k];
        }
        for (r, &k) in mag.iter().enumerate() {
            f[ang.len() + r] = q[k] - q_spec[k];
        }
        let mismatch = f.amax();
        if !mismatch.is_finite() {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch: f64::INFINITY });
        }
        let converged = mismatch <= tol.pf_tol;
        if converged && (polished || mismatch < 1e-13) {
            let losses: f64 = p.iter().sum();
            let slack = case.bus_index(case.slack_bus).unwrap_or(0);
            let slack_absorption = p[slack] - p_spec[slack];
            return Ok(PowerFlowSolution {
                v,
                theta: th,
                p,
                q,
                slack_absorption,
                losses,
                iterations,
                mismatch,
            });
        }
        if !converged && iterations >= tol.pf_max_iter {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch });
        }

        let mut jac = DMatrix::zeros(dim, dim);
        let col_of = |j: usize| -> (Option<usize>, Option<usize>) {
            (
                ang.iter().position(|&a| a == j),
                mag.iter().position(|&m| m == j).map(|c| c + ang.len()),
            )
        };
        let cols: Vec<(Option<usize>, Option<usize>)> = (0..n).map(col_of).collect();
        let mut rows: Vec<(Option<usize>, Option<usize>)> = vec![(None, None); n];
        for (r, &k) in ang.iter().enumerate() {
            rows[k].0 = Some(r);
        }
        for (r, &k) in mag.iter().enumerate() {
            rows[k].1 = Some(ang.len() + r);
        }
        for k in 0..n {
            let (rp, rq) = rows[k];
            if rp.is_none() && rq.is_none() {
                continue;
            }
            for j in 0..n {
                if k != j && ybus.g[(k, j)] == 0.0 && ybus.b[(k, j)] == 0.0 {
                    continue;
                }
                let d = ybus.partials(&v, &th, p[k], q[k], k, j);
                let (ct, cv) = cols[j];
                if let Some(r) = rp {
                    if let Some(c) = ct {
                        jac[(r, c)] = d[0];
                    }
                    if let Some(c) = cv {
                        jac[(r, c)] = d[1];
                    }
                }
                if let Some(r) = rq {
                    if let Some(c) = ct {
                        jac[(r, c)] = d[2];
                    }
                    if let Some(c) = cv {
                        jac[(r, c)] = d[3];
                    }
                }
            }
        }
        let Some(dx) = jac.lu().solve(&(-f)) else {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch });
        };
        for (r, &k) in ang.iter().enumerate() {
            th[k] += dx[r];
        }
        for (r, &k) in mag.iter().enumerate() {
            v[k] += dx[ang.len() + r];
            if !(v[k] > 0.0) {
                return Err(PowerFlowError::NonConvergence { iterations: iterations + 1, mismatch });
            }
        }
        // one extra step once within tolerance tightens the residual handed to the DAE
        if converged {
            polished = true;
        } else {
            iterations += 1;
        }
    }
}

/// Active and reactive output of every generator at a solved operating point.
/// Generators own whatever the bus injects beyond its wind and load terms.
pub fn generator_outputs(case: &NetworkCase, inj: &InjectionVector, sol: &PowerFlowSolution) -> Vec<(f64, f64)> {
    let (p_spec, q_spec) = specified_injections(case, inj);
    case.generators
        .iter()
        .zip(&inj.p_s)
        .map(|(g, &ps)| {
            let k = case.bus_index(g.bus).unwrap_or(0);
            // one generator per bus is a validated invariant
            let p = sol.p[k] - (p_spec[k] - ps);
            let q = sol.q[k] - q_spec[k];
            (p, q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn agc_balances_two_generators() {
        let base = InjectionVector { p_s: vec![5.0, 5.0], p_w: vec![1.0, 1.0] };
        let out = agc_shift(&base, &[0.5, 0.5], &[0.3, 0.7]);
        assert!((out.p_s[0] - 4.7).abs() < 1e-15);
        assert!((out.p_s[1] - 4.3).abs() < 1e-15);
        assert!((out.total() - base.total()).abs() < 1e-12);
    }

    #[test]
    fn agc_lower_limit_reports_unit() {
        // G2 carries the whole mismatch: 1.1 - 0.7 = 0.4, below its 0.5 floor
        let case = fixtures::two_sg_two_wind();
        let policy = AgcPolicy::new(vec![0.0, 1.0]);
        let err = apply_agc(&case.scheduled_injection(), &[0.7, 0.0], &policy, &case).unwrap_err();
        assert!(
            matches!(err, PowerFlowError::LimitViolation { unit: UnitRef::Generator(1), bound: Bound::Lower, .. }),
            "{err:?}"
        );
        assert!(apply_agc(&case.scheduled_injection(), &[0.5, 0.0], &policy, &case).is_ok());
    }

    #[test]
    fn two_bus_lossless_angle() {
        let case = fixtures::two_bus_lossless(0.5, 1.0);
        let sol = solve_power_flow(&case, &case.scheduled_injection(), &Tolerances::default()).unwrap();
        let k = case.bus_index(2).unwrap();
        let diff = sol.theta[0] - sol.theta[k];
        assert!((diff.abs() - libm::asin(0.5)).abs() < 1e-9, "diff {diff}");
        assert!((diff.abs() - 0.5236).abs() < 1e-4);
    }

    #[test]
    fn two_bus_beyond_capacity_diverges() {
        let case = fixtures::two_bus_lossless(0.5, 2.5);
        let err = solve_power_flow(&case, &case.scheduled_injection(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, PowerFlowError::NonConvergence { .. }));
    }

    #[test]
    fn losses_balance_at_slack() {
        let case = fixtures::two_sg_two_wind();
        let inj = case.scheduled_injection();
        let sol = solve_power_flow(&case, &inj, &Tolerances::default()).unwrap();
        let gen: f64 = generator_outputs(&case, &inj, &sol).iter().map(|g| g.0).sum::<f64>()
            + inj.p_w.iter().sum::<f64>();
        let resid = gen - case.total_load() - sol.losses;
        assert!(resid.abs() < 1e-8, "resid {resid}");
        assert!(sol.losses > 0.0);
    }
}
