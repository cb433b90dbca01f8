//! Simulation sweeps: scenarios × sample sizes × replicates, every enabled
//! method over its grid, scored against the true differential graph.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, SweepScenario, GRID_SPACING_NOTE};
use super::csvio::{sig10, write_plot_csv};
use crate::error::{Error, Result};
use crate::estimators::{
    dtrace_path, fgl_path, pcor_statistics, pmat_statistics, DifferentialEstimate, Method,
};
use crate::eval::{average_curves, confusion, power_fdr, CurvePoint, PerfCurve};
use crate::graph::generate_scenario;
use crate::matrix::{sample_covariance, DataMatrix};
use crate::seeds::{label_hash, mix};
use crate::sim::{build_models, max_degree_normalized, sample_gaussian, symmetrized_kl, ModelPair};

/// Seed of one replicate's data.
pub fn cell_seed(master_seed: u64, scenario_id: &str, n: usize, replicate: usize) -> u64 {
    mix(&[master_seed, label_hash(scenario_id), n as u64, replicate as u64])
}

fn scenario_seeds(master_seed: u64, scenario_id: &str) -> (u64, u64) {
    let id = label_hash(scenario_id);
    (
        mix(&[master_seed, id, label_hash("graphs")]),
        mix(&[master_seed, id, label_hash("models")]),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRecord {
    pub scenario: String,
    pub n: usize,
    pub replicate: usize,
    pub method: Method,
    pub param: f64,
    pub tp: usize,
    pub fp: usize,
    pub truth_size: usize,
    pub power: f64,
    pub fdr: f64,
}

/// A (method, parameter, replicate) cell, or a whole scenario, that errored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFailure {
    pub scenario: String,
    pub n: Option<usize>,
    pub replicate: Option<usize>,
    pub method: Option<Method>,
    pub param: Option<f64>,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub graph_seed: u64,
    pub model_seed: u64,
    pub g1_edges: usize,
    pub g2_edges: usize,
    pub diff_edges: usize,
    pub attempts: usize,
    pub symmetrized_kl: f64,
    pub max_degree_normalized: f64,
}

/// A grid point left out of an averaged curve because it failed in at least
/// one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DroppedPoint {
    pub scenario: String,
    pub n: usize,
    pub method: Method,
    pub param: f64,
    pub failed_replicates: usize,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<PointRecord>,
    pub failures: Vec<CellFailure>,
    pub curves: Vec<PerfCurve>,
    pub dropped: Vec<DroppedPoint>,
    pub scenarios: Vec<ScenarioSummary>,
    pub wall_seconds: f64,
    /// Worker threads actually used.
    pub workers: usize,
    /// Summed per-method compute time over all cells.
    pub method_seconds: BTreeMap<Method, f64>,
}

impl SweepResult {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn curve(&self, scenario: &str, n: usize, method: Method) -> Option<&PerfCurve> {
        self.curves
            .iter()
            .find(|c| c.scenario == scenario && c.n == n && c.method == method)
    }
}

struct Prepared {
    id: String,
    models: ModelPair,
}

struct CellOutput {
    records: Vec<PointRecord>,
    failures: Vec<CellFailure>,
    seconds: Vec<(Method, f64)>,
}

fn prepare(cfg: &RunConfig, sc: &SweepScenario) -> Result<(Prepared, ScenarioSummary)> {
    let id = sc.id();
    let (graph_seed, model_seed) = scenario_seeds(cfg.master_seed, &id);
    let graphs = generate_scenario(&sc.spec(graph_seed))?;
    let models = build_models(&graphs, model_seed)?;
    let summary = ScenarioSummary {
        scenario: id.clone(),
        graph_seed,
        model_seed,
        g1_edges: graphs.g1.edge_count(),
        g2_edges: graphs.g2.edge_count(),
        diff_edges: graphs.gdiff.edge_count(),
        attempts: graphs.attempts,
        symmetrized_kl: symmetrized_kl(&models.sigma1, &models.sigma2)?,
        max_degree_normalized: max_degree_normalized(&graphs.gdiff),
    };
    Ok((Prepared { id, models }, summary))
}

fn run_cell(cfg: &RunConfig, prep: &Prepared, n: usize, replicate: usize) -> CellOutput {
    let mut out = CellOutput {
        records: Vec::new(),
        failures: Vec::new(),
        seconds: Vec::new(),
    };
    let fail = |method: Option<Method>, param: Option<f64>, e: &Error| CellFailure {
        scenario: prep.id.clone(),
        n: Some(n),
        replicate: Some(replicate),
        method,
        param,
        error: e.to_string(),
    };
    let data = replicate_data(cfg.master_seed, &prep.id, &prep.models, n, replicate);
    let (x1, x2) = match data {
        Ok(d) => d,
        Err(e) => {
            out.failures.push(fail(None, None, &e));
            return out;
        }
    };
    let truth = &prep.models.graphs.gdiff;
    let s1 = sample_covariance(&x1, true);
    let s2 = sample_covariance(&x2, true);
    let grids = &cfg.grids;
    let thr = cfg.solver.diff_threshold;

    for method in cfg.ordered_methods() {
        let started = Instant::now();
        let values = grids.values(method);
        let estimates: Vec<Result<DifferentialEstimate>> = match method {
            Method::DTrace => match dtrace_path(&s1, &s2, values, &cfg.solver) {
                Ok(fits) => fits.into_iter().map(|f| f.map(|f| f.estimate(thr))).collect(),
                Err(e) => values.iter().map(|_| Err(clone_err(&e))).collect(),
            },
            Method::Fgl => {
                let (w1, w2) = cfg.fgl_weights.weights(n, n);
                fgl_path(&s1, &s2, w1, w2, grids.fgl_lambda1, values, &cfg.solver)
                    .into_iter()
                    .map(|f| f.map(|f| f.estimate(thr)))
                    .collect()
            }
            Method::PCor | Method::PMat => {
                let stats = if method == Method::PCor {
                    pcor_statistics(&x1, &x2, cfg.test_lambda_scale)
                } else {
                    pmat_statistics(&x1, &x2, cfg.test_lambda_scale)
                };
                match stats {
                    Ok(t) => values.iter().map(|&a| t.estimate(a)).collect(),
                    Err(e) => values.iter().map(|_| Err(clone_err(&e))).collect(),
                }
            }
        };
        for (&param, est) in values.iter().zip(estimates) {
            let scored = est.and_then(|e| {
                let c = confusion(&e, truth)?;
                Ok((c, power_fdr(c)?))
            });
            match scored {
                Ok((c, (power, fdr))) => out.records.push(PointRecord {
                    scenario: prep.id.clone(),
                    n,
                    replicate,
                    method,
                    param,
                    tp: c.tp,
                    fp: c.fp,
                    truth_size: c.truth_size,
                    power,
                    fdr,
                }),
                Err(e) => out.failures.push(fail(Some(method), Some(param), &e)),
            }
        }
        out.seconds.push((method, started.elapsed().as_secs_f64()));
    }
    out
}

/// Errors are not `Clone` (they may hold IO errors); grid-wide failures are
/// replicated by message.
fn clone_err(e: &Error) -> Error {
    Error::InvalidData(e.to_string())
}

fn build_curves(cfg: &RunConfig, records: &[PointRecord]) -> (Vec<PerfCurve>, Vec<DroppedPoint>, Vec<CellFailure>) {
    let mut by_key: BTreeMap<(&str, usize, Method, usize), Vec<&PointRecord>> = BTreeMap::new();
    for r in records {
        by_key.entry((&r.scenario, r.n, r.method, r.replicate)).or_default().push(r);
    }
    let mut curves = Vec::new();
    let mut dropped = Vec::new();
    let mut failures = Vec::new();
    for sc in &cfg.scenarios {
        let id = sc.id();
        for &n in &cfg.sample_sizes {
            for method in cfg.ordered_methods() {
                let grid = cfg.grids.values(method);
                let mut per_rep: Vec<Vec<CurvePoint>> = vec![Vec::new(); cfg.replicates];
                for &param in grid {
                    let found: Vec<Option<&PointRecord>> = (0..cfg.replicates)
                        .map(|rep| {
                            by_key
                                .get(&(id.as_str(), n, method, rep))
                                .and_then(|v| v.iter().copied().find(|r| r.param == param))
                        })
                        .collect();
                    let missing = found.iter().filter(|f| f.is_none()).count();
                    if missing > 0 {
                        dropped.push(DroppedPoint {
                            scenario: id.clone(),
                            n,
                            method,
                            param,
                            failed_replicates: missing,
                        });
                        continue;
                    }
                    for (rep, r) in found.into_iter().enumerate() {
                        let r = r.expect("checked above");
                        per_rep[rep].push(CurvePoint {
                            param,
                            power: r.power,
                            fdr: r.fdr,
                        });
                    }
                }
                let curve = average_curves(&per_rep).and_then(|pts| PerfCurve::new(method, id.clone(), n, pts));
                match curve {
                    Ok(c) => curves.push(c),
                    Err(e) => failures.push(CellFailure {
                        scenario: id.clone(),
                        n: Some(n),
                        replicate: None,
                        method: Some(method),
                        param: None,
                        error: format!("no curve: {e}"),
                    }),
                }
            }
        }
    }
    (curves, dropped, failures)
}

/// Runs the whole sweep. Cell errors are collected, never raised; the result
/// is independent of the worker count.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let started = Instant::now();
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    pool.install(|| {
        let prepared: Vec<(&SweepScenario, Result<(Prepared, ScenarioSummary)>)> =
            cfg.scenarios.par_iter().map(|sc| (sc, prepare(cfg, sc))).collect();
        let mut failures = Vec::new();
        let mut summaries = Vec::new();
        let mut ready = Vec::new();
        for (sc, p) in prepared {
            match p {
                Ok((prep, summary)) => {
                    summaries.push(summary);
                    ready.push(prep);
                }
                Err(e) => failures.push(CellFailure {
                    scenario: sc.id(),
                    n: None,
                    replicate: None,
                    method: None,
                    param: None,
                    error: e.to_string(),
                }),
            }
        }
        let cells: Vec<(&Prepared, usize, usize)> = ready
            .iter()
            .flat_map(|p| {
                cfg.sample_sizes
                    .iter()
                    .flat_map(move |&n| (0..cfg.replicates).map(move |r| (p, n, r)))
            })
            .collect();
        let outputs: Vec<CellOutput> = cells.par_iter().map(|&(p, n, r)| run_cell(cfg, p, n, r)).collect();

        let mut records = Vec::new();
        let mut method_seconds = BTreeMap::new();
        for o in outputs {
            records.extend(o.records);
            failures.extend(o.failures);
            for (m, s) in o.seconds {
                *method_seconds.entry(m).or_insert(0.0) += s;
            }
        }
        let (curves, dropped, curve_failures) = build_curves(cfg, &records);
        failures.extend(curve_failures);
        Ok(SweepResult {
            records,
            failures,
            curves,
            dropped,
            scenarios: summaries,
            wall_seconds: started.elapsed().as_secs_f64(),
            workers,
            method_seconds,
        })
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidData(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))
}

pub fn points_csv(result: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &["scenario", "n", "replicate", "method", "param", "tp", "fp", "truth_size", "power", "fdr"],
        result.records.iter().map(|r| {
            vec![
                r.scenario.clone(),
                r.n.to_string(),
                r.replicate.to_string(),
                r.method.to_string(),
                sig10(r.param),
                r.tp.to_string(),
                r.fp.to_string(),
                r.truth_size.to_string(),
                sig10(r.power),
                sig10(r.fdr),
            ]
        }),
    )
}

pub fn failures_csv(result: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &["scenario", "n", "replicate", "method", "param", "error"],
        result.failures.iter().map(|f| {
            vec![
                f.scenario.clone(),
                opt(&f.n),
                opt(&f.replicate),
                opt(&f.method),
                f.param.map_or(String::new(), sig10),
                f.error.clone(),
            ]
        }),
    )
}

pub fn scenarios_csv(result: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "scenario",
            "g1_edges",
            "g2_edges",
            "diff_edges",
            "attempts",
            "symmetrized_kl",
            "max_degree_normalized",
        ],
        result.scenarios.iter().map(|s| {
            vec![
                s.scenario.clone(),
                s.g1_edges.to_string(),
                s.g2_edges.to_string(),
                s.diff_edges.to_string(),
                s.attempts.to_string(),
                sig10(s.symmetrized_kl),
                sig10(s.max_degree_normalized),
            ]
        }),
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    config: &'a RunConfig,
    grid_spacing: &'static str,
    seed_rule: &'static str,
    scenarios: &'a [ScenarioSummary],
    cells: usize,
    points: usize,
    failures: usize,
    dropped_curve_points: &'a [DroppedPoint],
    wall_seconds: f64,
    workers: usize,
    method_seconds: BTreeMap<String, f64>,
}

pub fn manifest_json(cfg: &RunConfig, result: &SweepResult) -> String {
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        grid_spacing: GRID_SPACING_NOTE,
        seed_rule: "replicate data seed = mix(master_seed, fnv1a(scenario id), n, replicate); condition k uses mix(seed, k)",
        scenarios: &result.scenarios,
        cells: cfg.scenarios.len() * cfg.sample_sizes.len() * cfg.replicates,
        points: result.records.len(),
        failures: result.failures.len(),
        dropped_curve_points: &result.dropped,
        wall_seconds: result.wall_seconds,
        workers: result.workers,
        method_seconds: result
            .method_seconds
            .iter()
            .map(|(m, s)| (m.to_string(), *s))
            .collect(),
    };
    serde_json::to_string_pretty(&m).expect("manifest serializes")
}

/// Writes points.csv, curves.csv, scenarios.csv, failures.csv and
/// manifest.json into `dir`, creating it if needed.
pub fn write_sweep(cfg: &RunConfig, result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut curves = Vec::new();
    write_plot_csv(&result.curves, &mut curves)?;
    let files: [(&str, Vec<u8>); 5] = [
        ("points.csv", points_csv(result)?),
        ("curves.csv", curves),
        ("scenarios.csv", scenarios_csv(result)?),
        ("failures.csv", failures_csv(result)?),
        ("manifest.json", manifest_json(cfg, result).into_bytes()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Graphs and models of one scenario as built inside a sweep with
/// `master_seed`.
pub fn scenario_models(master_seed: u64, sc: &SweepScenario) -> Result<ModelPair> {
    let (graph_seed, model_seed) = scenario_seeds(master_seed, &sc.id());
    build_models(&generate_scenario(&sc.spec(graph_seed))?, model_seed)
}

/// The two samples of one replicate.
pub fn replicate_data(
    master_seed: u64,
    scenario_id: &str,
    models: &ModelPair,
    n: usize,
    replicate: usize,
) -> Result<(DataMatrix, DataMatrix)> {
    let seed = cell_seed(master_seed, scenario_id, n, replicate);
    let x1 = sample_gaussian(&models.sigma1, n, mix(&[seed, 1]))?;
    let x2 = sample_gaussian(&models.sigma2, n, mix(&[seed, 2]))?;
    Ok((x1, x2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Structure;
    use std::collections::HashSet;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig {
            scenarios: vec![SweepScenario {
                p: 40,
                ..SweepScenario::new(Structure::Scalefree, 40, 10)
            }],
            sample_sizes: vec![120],
            replicates: 2,
            workers: Some(2),
            ..RunConfig::default()
        };
        cfg.grids.dtrace = vec![0.3, 0.6];
        cfg.grids.fgl_lambda2 = vec![0.05, 0.3];
        cfg.grids.pcor = vec![0.05, 0.2];
        cfg.grids.pmat = vec![0.05, 0.2, 0.5];
        cfg
    }

    #[test]
    fn full_grid_seeds_do_not_collide() {
        let cfg = RunConfig::preset(super::super::config::BUILTIN_PRESET).unwrap();
        let mut seen = HashSet::new();
        let mut count = 0;
        for sc in &cfg.scenarios {
            let id = sc.id();
            let (g, m) = scenario_seeds(cfg.master_seed, &id);
            assert!(seen.insert(g) && seen.insert(m));
            for &n in &cfg.sample_sizes {
                for r in 0..cfg.replicates {
                    let s = cell_seed(cfg.master_seed, &id, n, r);
                    assert!(seen.insert(s), "collision at {id} n={n} r={r}");
                    assert!(seen.insert(mix(&[s, 1])) && seen.insert(mix(&[s, 2])));
                    count += 1;
                }
            }
        }
        assert_eq!(count, 12 * 2 * 50);
    }

    #[test]
    fn bookkeeping_one_method_three_points() {
        let mut cfg = small_config();
        cfg.methods = vec![Method::PMat];
        cfg.replicates = 1;
        let res = run_sweep(&cfg).unwrap();
        assert!(!res.failed(), "{:?}", res.failures);
        assert_eq!(res.records.len(), 3);
        assert_eq!(res.curves.len(), 1);
        assert_eq!(res.curves[0].points.len(), 3);
        assert_eq!(res.scenarios.len(), 1);
    }

    #[test]
    fn worker_count_does_not_change_outputs() {
        let mut a = small_config();
        a.workers = Some(1);
        let mut b = small_config();
        b.workers = Some(3);
        let ra = run_sweep(&a).unwrap();
        let rb = run_sweep(&b).unwrap();
        assert_eq!(points_csv(&ra).unwrap(), points_csv(&rb).unwrap());
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_plot_csv(&ra.curves, &mut ca).unwrap();
        write_plot_csv(&rb.curves, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(ra.records.len(), 2 * (2 + 2 + 2 + 3));
    }

    #[test]
    fn failing_cells_are_isolated() {
        let mut cfg = small_config();
        cfg.methods = vec![Method::DTrace, Method::PMat];
        cfg.replicates = 1;
        // One ADMM iteration cannot meet the optimality tolerance.
        cfg.solver.max_iter = 1;
        let res = run_sweep(&cfg).unwrap();
        assert!(res.failed());
        assert!(res.failures.iter().all(|f| f.method == Some(Method::DTrace) || f.param.is_none()));
        assert_eq!(res.records.iter().filter(|r| r.method == Method::PMat).count(), 3);
        assert!(res.curve(&cfg.scenarios[0].id(), 120, Method::PMat).is_some());
        assert!(res.curve(&cfg.scenarios[0].id(), 120, Method::DTrace).is_none());
    }

    #[test]
    fn writes_all_files() {
        let mut cfg = small_config();
        cfg.methods = vec![Method::PCor];
        cfg.replicates = 1;
        let res = run_sweep(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sweep(&cfg, &res, dir.path()).unwrap();
        for f in ["points.csv", "curves.csv", "scenarios.csv", "failures.csv", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config"]["replicates"], 1);
        assert!(manifest["grid_spacing"].as_str().unwrap().contains("log-spaced"));
    }
}
