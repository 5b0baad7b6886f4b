//! End-to-end checks on the small fixture networks.

use ssar_core::assess::{instability_probability, Classifier};
use ssar_core::fixtures;
use ssar_core::netcase::Tolerances;
use ssar_core::region::{
    dense_scan, first_unstable, profile_1d, quadratic_boundary, ray_boundary_search, BoundarySpace, QuadraticConfig,
    StabilityMap, WpiMap,
};
use ssar_core::uncertainty::{calibrate_marginal, sample_scenarios, CopulaPolicy};

#[test]
fn single_farm_boundary_matches_a_dense_scan() {
    let case = fixtures::one_sg_one_wind();
    let cfg = fixtures::study(&case);
    let tol = Tolerances::default();
    let map = WpiMap::scheduled(&case, &cfg.agc, tol.clone());
    let f = case.forecast();
    let prof = profile_1d(&map, 0, &f, 3.0).unwrap();
    let found: Vec<_> = prof.rays.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    assert!(!found.is_empty(), "no boundary on either side of the forecast");
    for bp in found {
        let d: Vec<f64> = bp.p.iter().zip(&f).map(|(a, b)| a - b).collect();
        let dir = [d[0].signum()];
        let step = 1e-3;
        let scan = dense_scan(&map, &f, &dir, bp.distance + 0.02, step).unwrap();
        let cross = first_unstable(&scan).expect("scan crosses the boundary");
        assert!(
            bp.distance > cross - step - tol.ray_tol && bp.distance <= cross + tol.ray_tol,
            "search {} vs scan crossing {}",
            bp.distance,
            cross
        );
    }
}

#[test]
fn classifiers_agree_near_the_boundary() {
    let case = fixtures::two_sg_two_wind();
    let cfg = fixtures::study(&case);
    let map = WpiMap::scheduled(&case, &cfg.agc, Tolerances::default());
    let bp = ray_boundary_search(&map, &case.forecast(), &[-1.0, -1.0], 1.5).unwrap();
    let g = map.gradient(&bp.p).unwrap();
    let dependent = if g[0].abs() >= g[1].abs() { 0 } else { 1 };
    let qcfg = QuadraticConfig { dependent, ..QuadraticConfig::default() };
    let qb = quadratic_boundary(&map, &bp.p, BoundarySpace::Wpi, &qcfg).unwrap();

    // a cloud centred on the boundary so that both classes are well populated
    let spread = 0.3 * qb.trust_radius;
    let marginals: Vec<_> =
        bp.p.iter().map(|_| calibrate_marginal(0.0, spread, -3.0 * spread, 3.0 * spread).unwrap()).collect();
    let set = sample_scenarios(&bp.p, &marginals, &cfg.rank_corr, 2000, 11, CopulaPolicy::Strict).unwrap();
    let direct = instability_probability(&map, &set, Classifier::Direct);
    let quad = instability_probability(&map, &set, Classifier::Quadratic(&qb));
    assert!(direct.p_instab > 0.2 && direct.p_instab < 0.8, "{}", direct.p_instab);
    assert!(
        (direct.p_instab - quad.p_instab).abs() <= 0.01,
        "direct {} quadratic {}",
        direct.p_instab,
        quad.p_instab
    );
}
