//! Thread-pool drivers. Work items are indexed and results are collected in
//! index order, so outputs do not depend on the number of workers.

use nalgebra::DMatrix;
use rayon::prelude::*;
use ssar_core::assess::{
    check_adjustment, classify_sample, sort_curtailment, tally, AssessmentReport, Classifier, CurtailmentRow,
    SampleVerdict,
};
use ssar_core::powerflow::PowerFlowError;
use ssar_core::region::{plane_direction, profile_angles, ray_boundary_search, Profile, ProfileRay, RegionError, StabilityMap, WpiMap};
use ssar_core::uncertainty::{ScenarioSampler, ScenarioSet};

/// Environment variable that overrides the default worker count.
pub const WORKERS_ENV: &str = "SSAR_WORKERS";

pub fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn sample(pool: &rayon::ThreadPool, sampler: &ScenarioSampler, n: usize, seed: u64) -> ScenarioSet {
    let dim = sampler.dim();
    let rows: Vec<Vec<f64>> = pool.install(|| (0..n as u64).into_par_iter().map(|i| sampler.sample(i)).collect());
    ScenarioSet {
        samples: DMatrix::from_fn(n, dim, |i, j| rows[i][j]),
        seed,
        provenance: "gaussian-copula/beta/chacha20".into(),
        copula_repaired: sampler.copula_repaired,
    }
}

pub fn classify_all(
    pool: &rayon::ThreadPool,
    map: &WpiMap<'_>,
    scenarios: &ScenarioSet,
    classifier: Classifier<'_>,
) -> Vec<SampleVerdict> {
    pool.install(|| {
        (0..scenarios.len())
            .into_par_iter()
            .map(|i| classify_sample(map, classifier, &scenarios.row(i)))
            .collect()
    })
}

pub fn assess(
    pool: &rayon::ThreadPool,
    map: &WpiMap<'_>,
    scenarios: &ScenarioSet,
    classifier: Classifier<'_>,
) -> AssessmentReport {
    let t = std::time::Instant::now();
    let mut r = tally(&classify_all(pool, map, scenarios, classifier), classifier.mode());
    r.wall_time_s = t.elapsed().as_secs_f64();
    r
}

/// Parallel counterpart of `ssar_core::region::profile_2d`.
pub fn profile_2d<M: StabilityMap + Sync + ?Sized>(
    pool: &rayon::ThreadPool,
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
    let rays = pool.install(|| {
        profile_angles(n_rays)
            .into_par_iter()
            .map(|angle| {
                let direction = plane_direction(n, pair, angle);
                let result = ray_boundary_search(map, seed, &direction, max_range);
                ProfileRay { angle, direction, result }
            })
            .collect()
    });
    Ok(Profile { pair, seed: seed.to_vec(), rays })
}

/// Parallel counterpart of `ssar_core::assess::evaluate_curtailment`.
pub fn curtailment(
    pool: &rayon::ThreadPool,
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
                let report = assess(pool, map, &template.shifted(delta), classifier);
                CurtailmentRow { adjustment: delta.clone(), report: Some(report), violation: None }
            }
        })
        .collect();
    sort_curtailment(&mut rows);
    rows
}
