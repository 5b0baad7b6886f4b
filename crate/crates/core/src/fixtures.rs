//! Small hand-built systems used by tests, examples and the acceptance suite.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::netcase::{
    AgcPolicy, Branch, Bus, BusId, ExciterParams, LoadSpec, NetworkCase, SgModel, SgSpec, StudyConfig, Tolerances,
    WindFarmSpec,
};
use crate::uncertainty::{calibrate_marginal, BetaMarginal};

fn bus(id: BusId, v: f64) -> Bus {
    Bus::new(id, v)
}

fn classic(name: &str, bus: BusId, p: f64, t_j: f64, d: f64, x_d_prime: f64) -> SgSpec {
    SgSpec {
        name: String::from(name),
        bus,
        model: SgModel::Classic,
        t_j,
        d,
        x_d: 1.0,
        x_q: 0.6,
        x_d_prime,
        t_d0_prime: 6.0,
        exciter: ExciterParams::default(),
        p_sched: p,
        p_min: 0.0,
        p_max: 10.0,
    }
}

fn third_order(name: &str, bus: BusId, p: f64, k_a: f64) -> SgSpec {
    SgSpec {
        name: String::from(name),
        bus,
        model: SgModel::ThirdOrderExciter,
        t_j: 10.0,
        d: 2.0,
        x_d: 1.0,
        x_q: 0.6,
        x_d_prime: 0.25,
        t_d0_prime: 6.0,
        exciter: ExciterParams { k_a, t_a: 0.05, t_b: 1.0, t_c: 1.0, t_r: 0.02 },
        p_sched: p,
        p_min: 0.0,
        p_max: 5.0,
    }
}

/// Marginal with zero-mean error and the given sigma on `[-forecast, capacity - forecast]`.
pub fn zero_mean_marginal(forecast: f64, capacity: f64, sigma: f64) -> BetaMarginal {
    calibrate_marginal(0.0, sigma, -forecast, capacity - forecast).unwrap_or(BetaMarginal {
        shape_a: 2.0,
        shape_b: 2.0,
        lower: -forecast,
        upper: capacity - forecast,
    })
}

fn wind(name: &str, bus: BusId, forecast: f64, capacity: f64, sigma: f64) -> WindFarmSpec {
    WindFarmSpec {
        name: String::from(name),
        bus,
        capacity,
        forecast,
        power_factor: 1.0,
        marginal: zero_mean_marginal(forecast, capacity, sigma),
    }
}

/// Infinite bus 1 and a classic machine at bus 2 injecting `p` through a
/// lossless line of reactance `x`.
pub fn two_bus_lossless(x: f64, p: f64) -> NetworkCase {
    NetworkCase {
        name: String::from("two-bus"),
        base_mva: 100.0,
        frequency_hz: 60.0,
        slack_bus: 1,
        buses: vec![bus(1, 1.0), bus(2, 1.0)],
        branches: vec![Branch::line(1, 2, 0.0, x, 0.0)],
        loads: Vec::new(),
        generators: vec![classic("G", 2, p, 6.0, 1.0, 0.3)],
        wind_farms: Vec::new(),
    }
}

/// Classic machine against an infinite bus: `T_J = 6`, `D = 1`, `x'_d = 0.3`,
/// line reactance 0.4, output 0.8.
pub fn smib_classic() -> NetworkCase {
    let mut c = two_bus_lossless(0.4, 0.8);
    c.name = String::from("smib-classic");
    c
}

/// Infinite bus 1, a third-order machine with a high-gain exciter at bus 2 and
/// a load bus 3 hosting one wind farm. The operating point loses stability
/// when wind output falls and the machine picks up the deficit.
pub fn one_sg_one_wind() -> NetworkCase {
    NetworkCase {
        name: String::from("one-sg-one-wind"),
        base_mva: 100.0,
        frequency_hz: 60.0,
        slack_bus: 1,
        buses: vec![bus(1, 1.0), bus(2, 1.0), bus(3, 1.0)],
        branches: vec![Branch::line(1, 3, 0.01, 0.3, 0.0), Branch::line(2, 3, 0.01, 0.15, 0.0)],
        loads: vec![LoadSpec { bus: 3, p: 1.5, q: 0.3 }],
        generators: vec![third_order("G", 2, 0.5, 200.0)],
        wind_farms: vec![wind("W", 3, 1.5, 3.0, 0.2)],
    }
}

fn two_sg_base(name: &str, w2_bus: BusId) -> NetworkCase {
    NetworkCase {
        name: String::from(name),
        base_mva: 100.0,
        frequency_hz: 60.0,
        slack_bus: 1,
        buses: vec![bus(1, 1.02), bus(2, 1.0), bus(3, 1.0), bus(4, 1.0)],
        branches: vec![
            Branch::line(1, 3, 0.01, 0.1, 0.02),
            Branch::line(2, 3, 0.01, 0.1, 0.02),
            Branch::line(3, 4, 0.005, 0.05, 0.01),
            Branch::line(1, 2, 0.02, 0.2, 0.04),
        ],
        loads: vec![LoadSpec { bus: 3, p: 3.0, q: 1.0 }, LoadSpec { bus: 4, p: 1.0, q: 0.3 }],
        generators: vec![
            SgSpec { p_min: 0.0, p_max: 4.0, ..third_order("G1", 1, 1.1, 100.0) },
            SgSpec { p_min: 0.5, p_max: 3.0, ..third_order("G2", 2, 1.1, 100.0) },
        ],
        wind_farms: vec![wind("W1", 4, 0.9, 2.0, 0.25), wind("W2", w2_bus, 0.9, 2.0, 0.25)],
    }
}

/// Two third-order machines (one on the slack bus) and two wind farms at
/// different buses. No infinite bus, so the rotor-angle reference mode is
/// present. An oscillatory mode crosses into the right half-plane when both
/// farms drop to roughly 0.3 pu.
pub fn two_sg_two_wind() -> NetworkCase {
    two_sg_base("two-sg-two-wind", 3)
}

/// As [`two_sg_two_wind`] with two identical farms on the same bus.
pub fn two_sg_two_wind_symmetric() -> NetworkCase {
    two_sg_base("two-sg-two-wind-symmetric", 4)
}

/// Study settings for a fixture: equal AGC shares, identity correlation.
pub fn study(case: &NetworkCase) -> StudyConfig {
    let n = case.n_s().max(1);
    StudyConfig {
        agc: AgcPolicy::new(vec![1.0 / n as f64; case.n_s()]),
        alpha_conf: 0.95,
        sample_count: 1000,
        seed: Some(7),
        rank_corr: DMatrix::identity(case.n_w(), case.n_w()),
        tolerances: Tolerances::default(),
    }
}
