use std::collections::BTreeMap;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use ssar::caseformat::parse_matrix;
use ssar::parallel::{self, WORKERS_ENV};
use ssar::report::{
    to_json, AssessJson, BoundaryJson, BoundaryPointJson, EusJson, FileDigest, Manifest, QuadraticJson,
    TangencyJson,
};
use ssar::scenarios::{read_scenarios, write_scenarios};
use ssar::study::{expansion_point, load_study, read_study, wpi_quadratic, Study, StudyError};
use ssar::svg::{self, ProfilePlot};
use ssar_core::assess::{
    dedup_adjustments, vulnerable_direction_polyline, vulnerable_direction_quadratic, with_baseline, Classifier,
};
use ssar_core::netcase::validate_case;
use ssar_core::powerflow::{Bound, UnitRef};
use ssar_core::region::QuadraticBoundary;
use ssar_core::uncertainty::{coverage, scenario_distances, CopulaPolicy, ScenarioSampler, ScenarioSet};

/// Admissible wind-injection regions under small-signal stability.
#[derive(Parser)]
#[command(name = "ssar", version, about)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a case file; problems go to stderr.
    Validate { case: PathBuf },
    /// Monte Carlo instability probability.
    Assess(AssessArgs),
    /// Two-dimensional boundary profile through the forecast.
    Profile(ProfileArgs),
    /// Instability probability after shifting the forecast.
    Curtail(CurtailArgs),
    /// Quadratic boundary surface and the most vulnerable direction.
    Boundary(BoundaryArgs),
}

#[derive(Args, Clone)]
struct SampleArgs {
    /// Number of scenarios (default: from the case file).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: Option<u64>,
    /// Random seed (default: from the case file, else fresh entropy).
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence level of the ellipsoidal set (default: from the case file).
    #[arg(long)]
    alpha: Option<f64>,
    /// Replacement rank correlation, rows separated by `;`.
    #[arg(long)]
    rank_corr: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Direct,
    Quadratic,
}

#[derive(Args)]
struct AssessArgs {
    case: PathBuf,
    #[command(flatten)]
    s: SampleArgs,
    #[arg(long, value_enum, default_value = "direct")]
    classifier: ClassifierArg,
    /// Read scenarios from CSV instead of sampling.
    #[arg(long)]
    scenarios: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    case: PathBuf,
    /// The two wind farms spanning the plane (1-based).
    #[arg(long, num_args = 2, value_names = ["I", "J"], required = true)]
    pair: Vec<usize>,
    /// Hold a farm at a value: `K=V` with K a 1-based index or farm name.
    #[arg(long)]
    fix: Vec<String>,
    /// Number of rays.
    #[arg(long, default_value_t = 36, value_parser = clap::value_parser!(u64).range(3..))]
    grid: u64,
    /// Search distance along each ray, pu.
    #[arg(long, default_value_t = 4.0)]
    max_range: f64,
    /// Write an SVG plot here.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Scenarios drawn in the plot.
    #[arg(long, default_value_t = 500)]
    scatter: usize,
    #[command(flatten)]
    s: SampleArgs,
}

#[derive(Args)]
struct CurtailArgs {
    case: PathBuf,
    /// Forecast shift, e.g. `W1=-0.2,W2=-0.1` (names or 1-based indices). Repeatable.
    #[arg(long)]
    adjust: Vec<String>,
    #[arg(long, value_enum, default_value = "direct")]
    classifier: ClassifierArg,
    #[command(flatten)]
    s: SampleArgs,
}

#[derive(Args)]
struct BoundaryArgs {
    case: PathBuf,
    /// Search distance for the expansion point, pu.
    #[arg(long, default_value_t = 4.0)]
    max_range: f64,
    #[command(flatten)]
    s: SampleArgs,
}

struct Failure {
    code: u8,
    category: &'static str,
    err: anyhow::Error,
}

type Res<T> = Result<T, Failure>;

trait Categorize<T> {
    fn io(self) -> Res<T>;
    fn invalid(self) -> Res<T>;
    fn numerical(self) -> Res<T>;
}

impl<T, E: Into<anyhow::Error>> Categorize<T> for Result<T, E> {
    fn io(self) -> Res<T> {
        self.map_err(|e| Failure { code: 1, category: "io", err: e.into() })
    }
    fn invalid(self) -> Res<T> {
        self.map_err(|e| Failure { code: 2, category: "validation", err: e.into() })
    }
    fn numerical(self) -> Res<T> {
        self.map_err(|e| Failure { code: 3, category: "numerical", err: e.into() })
    }
}

fn study_failure(e: StudyError) -> Failure {
    match e {
        StudyError::Io { .. } => Err::<(), _>(e).io().unwrap_err(),
        StudyError::Invalid { ref diagnostics, .. } => {
            for d in diagnostics {
                eprintln!("{d}");
            }
            Err::<(), _>(e).invalid().unwrap_err()
        }
        StudyError::Format { .. } => Err::<(), _>(e).invalid().unwrap_err(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers.filter(|w| *w > 0).unwrap_or_else(parallel::default_workers);
    let result = match cli.command {
        Command::Validate { case } => validate(&case),
        Command::Assess(a) => assess(a, workers),
        Command::Profile(a) => profile(a, workers),
        Command::Curtail(a) => curtail(a, workers),
        Command::Boundary(a) => boundary(a, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error ({}): {:#}", f.category, f.err);
            ExitCode::from(f.code)
        }
    }
}

fn validate(path: &Path) -> Res<()> {
    let s = read_study(path).map_err(study_failure)?;
    let diags = validate_case(&s.case, &s.cfg);
    for d in &diags {
        eprintln!("{d}");
    }
    if diags.is_empty() {
        println!(
            "{}: {} buses, {} branches, {} generators, {} wind farms",
            path.display(),
            s.case.buses.len(),
            s.case.branches.len(),
            s.case.n_s(),
            s.case.n_w()
        );
        Ok(())
    } else {
        Err(anyhow!("{} validation problem(s)", diags.len())).invalid()
    }
}

/// Seed, where it came from.
fn resolve_seed(flag: Option<u64>, study: &Study) -> (u64, &'static str) {
    if let Some(s) = flag {
        (s, "flag")
    } else if let Some(s) = study.cfg.seed {
        (s, "case")
    } else {
        let mut h = std::collections::hash_map::RandomState::new().build_hasher();
        h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0));
        (h.finish(), "entropy")
    }
}

/// Shared setup of the sampling commands.
struct Run {
    study: Study,
    seed: u64,
    seed_source: &'static str,
    samples: usize,
    alpha: f64,
    options: BTreeMap<String, String>,
    pool: rayon::ThreadPool,
    workers: usize,
    started: Instant,
}

impl Run {
    fn new(case: &Path, s: &SampleArgs, workers: usize) -> Res<Self> {
        let mut study = load_study(case).map_err(study_failure)?;
        let mut options = BTreeMap::new();
        if let Some(rc) = &s.rank_corr {
            study.cfg.rank_corr = parse_matrix(rc, 0).invalid()?;
            let d = validate_case(&study.case, &study.cfg);
            if let Some(first) = d.first() {
                return Err(anyhow!("--rank-corr: {first}")).invalid();
            }
            options.insert("rank_corr".into(), rc.clone());
        }
        let alpha = s.alpha.unwrap_or(study.cfg.alpha_conf);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(anyhow!("--alpha must lie in (0, 1)")).invalid();
        }
        let samples = s.samples.map(|n| n as usize).unwrap_or(study.cfg.sample_count);
        if samples == 0 {
            return Err(anyhow!("sample count must be positive")).invalid();
        }
        let (seed, seed_source) = resolve_seed(s.seed, &study);
        options.insert("samples".into(), samples.to_string());
        options.insert("alpha".into(), format!("{alpha:?}"));
        std::fs::create_dir_all(&s.out).with_context(|| format!("creating {}", s.out.display())).io()?;
        Ok(Self {
            study,
            seed,
            seed_source,
            samples,
            alpha,
            options,
            pool: parallel::pool(workers),
            workers,
            started: Instant::now(),
        })
    }

    fn sample(&self, forecast: &[f64]) -> Res<ScenarioSet> {
        let sampler = ScenarioSampler::new(
            forecast,
            &self.study.marginals(),
            &self.study.cfg.rank_corr,
            self.seed,
            CopulaPolicy::Repair,
            self.study.cfg.tolerances.beta_inv_tol,
        )
        .numerical()?;
        if sampler.copula_repaired {
            eprintln!("warning: copula correlation was not positive semidefinite and has been repaired");
        }
        Ok(parallel::sample(&self.pool, &sampler, self.samples, self.seed))
    }

    fn manifest(&self, command: &str, extra_inputs: Vec<FileDigest>) -> Manifest {
        let mut inputs = vec![FileDigest { path: self.study.path.display().to_string(), sha256: self.study.digest.clone() }];
        inputs.extend(extra_inputs);
        Manifest::new(command, inputs, self.seed, self.seed_source, self.workers, self.options.clone(), &self.study.cfg.tolerances)
    }

    fn finish(&self, mut m: Manifest, out: &Path) -> Res<()> {
        m.wall_time_s = self.started.elapsed().as_secs_f64();
        let bytes = to_json(&m).numerical()?;
        std::fs::write(out.join("manifest.json"), bytes).context("writing manifest.json").io()
    }
}

fn write(m: &mut Manifest, dir: &Path, name: &str, bytes: &[u8]) -> Res<()> {
    m.write_artifact(dir, name, bytes).with_context(|| format!("writing {}", dir.join(name).display())).io()
}

fn build_quadratic(run: &Run, max_range: f64) -> Res<(ssar_core::region::BoundaryPoint, QuadraticBoundary)> {
    let map = run.study.map();
    let q = run.study.shape_matrix();
    let bp = expansion_point(&map, &q, max_range).context("locating the expansion point").numerical()?;
    let qb = wpi_quadratic(&map, &bp).context("building the quadratic boundary").numerical()?;
    Ok((bp, qb))
}

fn assess(a: AssessArgs, workers: usize) -> Res<()> {
    let mut run = Run::new(&a.case, &a.s, workers)?;
    let names = run.study.farm_names();
    let forecast = run.study.forecast();
    let mut extra = Vec::new();
    let scenarios = match &a.scenarios {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display())).io()?;
            let m = read_scenarios(&bytes[..], &names).with_context(|| p.display().to_string()).invalid()?;
            if m.nrows() == 0 {
                return Err(anyhow!("{} holds no scenarios", p.display())).invalid();
            }
            extra.push(FileDigest { path: p.display().to_string(), sha256: ssar::study::sha256_hex(&bytes) });
            run.options.insert("scenarios".into(), p.display().to_string());
            run.options.insert("samples".into(), m.nrows().to_string());
            ScenarioSet { samples: m, seed: run.seed, provenance: "csv".into(), copula_repaired: false }
        }
        None => run.sample(&forecast)?,
    };
    let classifier_label = match a.classifier {
        ClassifierArg::Direct => "direct",
        ClassifierArg::Quadratic => "quadratic",
    };
    run.options.insert("classifier".into(), classifier_label.into());

    let eus = run.study.fit_eus(&scenarios, run.alpha).numerical()?;
    let dist = scenario_distances(&eus.center, &eus.q, &scenarios).numerical()?;

    let quadratic = match a.classifier {
        ClassifierArg::Direct => None,
        ClassifierArg::Quadratic => Some(build_quadratic(&run, 4.0)?.1),
    };
    let classifier = match &quadratic {
        Some(qb) => Classifier::Quadratic(qb),
        None => Classifier::Direct,
    };
    let map = run.study.map();
    let report = parallel::assess(&run.pool, &map, &scenarios, classifier);

    let mut m = run.manifest("assess", extra);
    let json = AssessJson {
        manifest_id: m.manifest_id.clone(),
        case: run.study.case.name.clone(),
        farms: names.clone(),
        forecast: forecast.clone(),
        classifier: report.mode.label().into(),
        seed: run.seed,
        alpha_conf: run.alpha,
        eta: eus.eta,
        n_total: report.n_total,
        n_out: report.n_out,
        p_instab: report.p_instab,
        breakdown: AssessJson::breakdown(&report),
        fallback_count: report.fallback_count,
        copula_repaired: scenarios.copula_repaired,
        quadratic: quadratic.as_ref().map(QuadraticJson::from),
        wall_time_s: report.wall_time_s,
    };
    let out = &a.s.out;
    write(&mut m, out, "report.json", &to_json(&json).numerical()?)?;
    let mut csv = Vec::new();
    write_scenarios(&mut csv, &names, &scenarios, Some(&format!("manifest {}", m.manifest_id))).io()?;
    write(&mut m, out, "scenarios.csv", &csv)?;
    let eus_json = EusJson::new(&m.manifest_id, names, &eus, run.alpha, coverage(&dist, eus.eta), scenarios.len());
    write(&mut m, out, "eus.json", &to_json(&eus_json).numerical()?)?;
    println!(
        "P_instab = {:.4} ({} of {} outside), eta = {:.4}, {:.1} s",
        report.p_instab, report.n_out, report.n_total, eus.eta, report.wall_time_s
    );
    run.finish(m, out)
}

/// `K` as a 1-based index or a farm name.
fn farm_index(study: &Study, key: &str) -> Res<usize> {
    let key = key.trim();
    if let Ok(i) = key.parse::<usize>() {
        if i >= 1 && i <= study.case.n_w() {
            return Ok(i - 1);
        }
        return Err(anyhow!("wind farm index {i} out of range 1..={}", study.case.n_w())).invalid();
    }
    study
        .case
        .wind_farms
        .iter()
        .position(|w| w.name == key)
        .ok_or_else(|| anyhow!("unknown wind farm `{key}`"))
        .invalid()
}

fn parse_assignments(study: &Study, spec: &str) -> Res<Vec<(usize, f64)>> {
    spec.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (k, v) = t.split_once('=').ok_or_else(|| anyhow!("expected K=V, got `{t}`")).invalid()?;
            let v: f64 = v.trim().parse().map_err(|_| anyhow!("`{v}` is not a number")).invalid()?;
            if !v.is_finite() {
                return Err(anyhow!("`{v}` is not finite")).invalid();
            }
            Ok((farm_index(study, k)?, v))
        })
        .collect()
}

/// Outline of the ellipsoid's cross-section with the plane through `seed`
/// spanned by coordinates `(i, j)`.
fn ellipse_section(center: &[f64], q: &DMatrix<f64>, eta: f64, seed: &[f64], (i, j): (usize, usize)) -> Vec<(f64, f64)> {
    let Some(p) = q.clone().try_inverse() else { return Vec::new() };
    let n = center.len();
    let others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
    let w = DVector::from_iterator(others.len(), others.iter().map(|&k| seed[k] - center[k]));
    let puu = DMatrix::from_fn(2, 2, |a, b| p[([i, j][a], [i, j][b])]);
    let puw = DMatrix::from_fn(2, others.len(), |a, b| p[([i, j][a], others[b])]);
    let pww = DMatrix::from_fn(others.len(), others.len(), |a, b| p[(others[a], others[b])]);
    let Some(puu_inv) = puu.clone().try_inverse() else { return Vec::new() };
    let u0 = -(&puu_inv * &puw * &w);
    let level = eta - (w.transpose() * (&pww - puw.transpose() * &puu_inv * &puw) * &w)[(0, 0)];
    if level <= 0.0 {
        return Vec::new();
    }
    let Some(chol) = puu.cholesky() else { return Vec::new() };
    let lt_inv = chol.l().transpose().try_inverse().unwrap_or_else(|| DMatrix::identity(2, 2));
    (0..=120)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 120.0;
            let z = DVector::from_vec(vec![t.cos(), t.sin()]) * level.sqrt();
            let u = &u0 + &lt_inv * z;
            (center[i] + u[0], center[j] + u[1])
        })
        .collect()
}

fn profile(a: ProfileArgs, workers: usize) -> Res<()> {
    let mut run = Run::new(&a.case, &a.s, workers)?;
    let n = run.study.case.n_w();
    let (i, j) = (a.pair[0], a.pair[1]);
    if i == j || i == 0 || j == 0 || i > n || j > n {
        return Err(anyhow!("--pair needs two different farm indices in 1..={n}, got {i} {j}")).invalid();
    }
    let pair = (i - 1, j - 1);
    let mut seed_point = run.study.forecast();
    for f in &a.fix {
        for (k, v) in parse_assignments(&run.study, f)? {
            if k == pair.0 || k == pair.1 {
                return Err(anyhow!("--fix names a farm of the profile plane")).invalid();
            }
            seed_point[k] = v;
        }
    }
    run.options.insert("pair".into(), format!("{i} {j}"));
    run.options.insert("grid".into(), a.grid.to_string());
    run.options.insert("max_range".into(), format!("{:?}", a.max_range));
    run.options.insert("fix".into(), format!("{seed_point:?}"));

    let map = run.study.map();
    let prof = parallel::profile_2d(&run.pool, &map, pair, &seed_point, a.grid as usize, a.max_range).invalid()?;
    let scenarios = run.sample(&run.study.forecast())?;
    let eus = run.study.fit_eus(&scenarios, run.alpha).numerical()?;
    let dist = scenario_distances(&eus.center, &eus.q, &scenarios).numerical()?;

    let names = run.study.farm_names();
    let mut m = run.manifest("profile", Vec::new());
    let mut csv = format!(
        "# manifest {}\n# plane {} {}\nangle,status,{},{},kind,critical_re,critical_im,distance,note\n",
        m.manifest_id, names[pair.0], names[pair.1], names[pair.0], names[pair.1]
    );
    for r in &prof.rays {
        match &r.result {
            Ok(bp) => {
                let c = bp.critical.unwrap_or_default();
                csv += &format!(
                    "{:?},boundary,{:?},{:?},{},{:?},{:?},{:?},\n",
                    r.angle,
                    bp.p[pair.0],
                    bp.p[pair.1],
                    bp.kind.label(),
                    c.re,
                    c.im,
                    bp.distance
                );
            }
            Err(e) => csv += &format!("{:?},gap,,,,,,,\"{}\"\n", r.angle, e.to_string().replace('"', "'")),
        }
    }
    let out = a.s.out.clone();
    write(&mut m, &out, "profile.csv", csv.as_bytes())?;

    let pts: Vec<Option<Vec<f64>>> = prof.rays.iter().map(|r| r.result.as_ref().ok().map(|b| b.p.clone())).collect();
    let tangency = vulnerable_direction_polyline(&eus, &pts, true, &dist);
    let json = serde_json::json!({
        "manifest_id": m.manifest_id,
        "farms": names,
        "pair": [pair.0 + 1, pair.1 + 1],
        "seed": seed_point,
        "eta": eus.eta,
        "boundary": prof.rays.iter().filter_map(|r| r.result.as_ref().ok()).map(BoundaryPointJson::from).collect::<Vec<_>>(),
        "gaps": prof.rays.iter().filter(|r| r.result.is_err()).count(),
        "tangency": tangency.as_ref().ok().map(TangencyJson::from),
    });
    let json = if tangency.is_err() {
        let mut j = json;
        j.as_object_mut().unwrap().remove("tangency");
        j
    } else {
        json
    };
    write(&mut m, &out, "profile.json", &to_json(&json).numerical()?)?;

    if let Some(plot_path) = &a.plot {
        let plot = ProfilePlot {
            title: format!("{}: {} vs {}", run.study.case.name, names[pair.0], names[pair.1]),
            x_label: names[pair.0].clone(),
            y_label: names[pair.1].clone(),
            boundary: prof.rays.iter().map(|r| r.result.as_ref().ok().map(|b| (b.p[pair.0], b.p[pair.1]))).collect(),
            ellipse: ellipse_section(&eus.center, &eus.q, eus.eta, &seed_point, pair),
            forecast: (seed_point[pair.0], seed_point[pair.1]),
            scatter: (0..scenarios.len().min(a.scatter))
                .map(|k| (scenarios.samples[(k, pair.0)], scenarios.samples[(k, pair.1)]))
                .collect(),
            manifest_id: m.manifest_id.clone(),
        };
        let mut closed = plot.boundary.clone();
        if closed.first().is_some_and(|p| p.is_some()) && closed.last().is_some_and(|p| p.is_some()) {
            closed.push(closed[0]);
        }
        let svg = svg::render(&ProfilePlot { boundary: closed, ..plot });
        std::fs::write(plot_path, &svg).with_context(|| format!("writing {}", plot_path.display())).io()?;
        m.artifacts.push(FileDigest { path: plot_path.display().to_string(), sha256: ssar::study::sha256_hex(svg.as_bytes()) });
    }
    let found = prof.rays.len() - prof.rays.iter().filter(|r| r.result.is_err()).count();
    println!("{found} of {} rays reached the stability boundary", prof.rays.len());
    run.finish(m, &out)
}

fn unit_name(study: &Study, u: UnitRef) -> String {
    match u {
        UnitRef::Generator(i) => study.case.generators[i].name.clone(),
        UnitRef::WindFarm(j) => study.case.wind_farms[j].name.clone(),
    }
}

fn curtail(a: CurtailArgs, workers: usize) -> Res<()> {
    let mut run = Run::new(&a.case, &a.s, workers)?;
    let n = run.study.case.n_w();
    let mut adjustments = Vec::new();
    for spec in &a.adjust {
        let mut d = vec![0.0; n];
        for (k, v) in parse_assignments(&run.study, spec)? {
            d[k] += v;
        }
        adjustments.push(d);
    }
    let (unique, dropped) = dedup_adjustments(&adjustments);
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} duplicate adjustment(s)");
    }
    let all = with_baseline(n, &unique);
    run.options.insert("adjust".into(), format!("{all:?}"));
    let classifier_label = match a.classifier {
        ClassifierArg::Direct => "direct",
        ClassifierArg::Quadratic => "quadratic",
    };
    run.options.insert("classifier".into(), classifier_label.into());

    let template = run.sample(&run.study.forecast())?;
    let quadratic = match a.classifier {
        ClassifierArg::Direct => None,
        ClassifierArg::Quadratic => Some(build_quadratic(&run, 4.0)?.1),
    };
    let classifier = match &quadratic {
        Some(qb) => Classifier::Quadratic(qb),
        None => Classifier::Direct,
    };
    let map = run.study.map();
    let table = parallel::curtailment(&run.pool, &map, &all, &template, classifier);

    let names = run.study.farm_names();
    let mut m = run.manifest("curtail", Vec::new());
    let mut csv = format!("# manifest {}\nrank", m.manifest_id);
    for nm in &names {
        csv += &format!(",d_{nm}");
    }
    csv += ",p_instab,n_out,n_total,status\n";
    for (r, row) in table.iter().enumerate() {
        csv += &(r + 1).to_string();
        for d in &row.adjustment {
            csv += &format!(",{d:?}");
        }
        match (&row.report, row.violation) {
            (Some(rep), _) => csv += &format!(",{:?},{},{},ok\n", rep.p_instab, rep.n_out, rep.n_total),
            (None, Some((u, b))) => {
                let side = match b {
                    Bound::Lower => "lower",
                    Bound::Upper => "upper",
                };
                csv += &format!(",,,,limit_violation {} {side}\n", unit_name(&run.study, u));
            }
            (None, None) => csv += ",,,,failed\n",
        }
        let label: Vec<String> = row.adjustment.iter().zip(&names).filter(|(d, _)| **d != 0.0).map(|(d, nm)| format!("{nm}{d:+}")).collect();
        let label = if label.is_empty() { "baseline".to_string() } else { label.join(" ") };
        match row.p_instab() {
            Some(p) => println!("{:>2}  {label:<24} P_instab = {p:.4}", r + 1),
            None => println!("{:>2}  {label:<24} limit violation", r + 1),
        }
    }
    let out = a.s.out.clone();
    write(&mut m, &out, "curtail.csv", csv.as_bytes())?;
    run.finish(m, &out)
}

fn boundary(a: BoundaryArgs, workers: usize) -> Res<()> {
    let mut run = Run::new(&a.case, &a.s, workers)?;
    run.options.insert("max_range".into(), format!("{:?}", a.max_range));
    let (bp, qb) = build_quadratic(&run, a.max_range)?;
    let scenarios = run.sample(&run.study.forecast())?;
    let eus = run.study.fit_eus(&scenarios, run.alpha).numerical()?;
    let dist = scenario_distances(&eus.center, &eus.q, &scenarios).numerical()?;
    let tangency = vulnerable_direction_quadratic(&eus, &qb, &dist);
    let mut m = run.manifest("boundary", Vec::new());
    let json = BoundaryJson {
        manifest_id: m.manifest_id.clone(),
        farms: run.study.farm_names(),
        forecast: run.study.forecast(),
        expansion: BoundaryPointJson::from(&bp),
        quadratic: QuadraticJson::from(&qb),
        tangency: tangency.as_ref().ok().map(TangencyJson::from),
        tangency_error: tangency.as_ref().err().map(|e| e.to_string()),
    };
    let out = a.s.out.clone();
    write(&mut m, &out, "boundary.json", &to_json(&json).numerical()?)?;
    println!(
        "expansion point {:?} ({}), trust radius {:.3} pu",
        bp.p,
        bp.kind.label(),
        qb.trust_radius
    );
    if let Ok(t) = &tangency {
        println!("tangent point {:?}, eta* = {:.4}, critical alpha = {:.4}", t.point, t.eta_star, t.critical_alpha);
    }
    run.finish(m, &out)
}
