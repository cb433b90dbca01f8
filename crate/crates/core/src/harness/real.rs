//! Two-sample analysis of observed data: every enabled method on the same
//! pair of matrices, and how often each edge is selected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::linspace;
use crate::error::{Error, Result};
use crate::estimators::{
    bic_select, dtrace_path, fgl_differential, fgl_path, fgl_two_stage, pcor_statistics, pmat_statistics, BicSelection,
    FglWeights, Method, Param, SolverConfig,
};
use crate::graph::Graph;
use crate::matrix::{sample_covariance, DataMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealConfig {
    pub methods: Vec<Method>,
    /// FDR level for PCor and PMat.
    pub alpha: f64,
    pub dtrace_grid: Vec<f64>,
    pub fgl_lambda1_grid: Vec<f64>,
    pub fgl_lambda2_grid: Vec<f64>,
    /// λ₂ held fixed while λ₁ is selected.
    pub fgl_lambda2_fixed: f64,
    pub solver: SolverConfig,
    pub fgl_weights: FglWeights,
    pub test_lambda_scale: f64,
}

impl Default for RealConfig {
    fn default() -> Self {
        RealConfig {
            methods: Method::ALL.to_vec(),
            alpha: 0.05,
            dtrace_grid: linspace(0.1, 0.7, 25),
            fgl_lambda1_grid: linspace(0.05, 1.0, 20),
            fgl_lambda2_grid: linspace(0.01, 0.5, 25),
            fgl_lambda2_fixed: 0.01,
            solver: SolverConfig::default(),
            fgl_weights: FglWeights::Equal,
            test_lambda_scale: 1.0,
        }
    }
}

impl RealConfig {
    /// Parses a TOML document over the defaults; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<RealConfig> {
        let cfg: RealConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods enabled".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        let grids = [
            ("dtrace_grid", &self.dtrace_grid, Method::DTrace),
            ("fgl_lambda1_grid", &self.fgl_lambda1_grid, Method::Fgl),
            ("fgl_lambda2_grid", &self.fgl_lambda2_grid, Method::Fgl),
        ];
        for (name, g, m) in grids {
            if self.methods.contains(&m) && g.is_empty() {
                return Err(Error::Config(format!("{name} is empty")));
            }
            if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{name} has a negative or non-finite value")));
            }
        }
        if !(self.fgl_lambda2_fixed.is_finite() && self.fgl_lambda2_fixed >= 0.0) {
            return Err(Error::Config("fgl_lambda2_fixed must be non-negative".into()));
        }
        if !(self.test_lambda_scale > 0.0 && self.test_lambda_scale.is_finite()) {
            return Err(Error::Config("test_lambda_scale must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Edges selected by each method, with how they were tuned.
#[derive(Clone, Debug)]
pub struct MethodEdges {
    pub method: Method,
    pub edges: Graph,
    pub param: Param,
    pub selection: Option<SelectionInfo>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionInfo {
    pub grid: Vec<f64>,
    pub scores: Vec<Option<f64>>,
    pub boundary: bool,
    /// FGL only: the λ₁ stage.
    pub stage1: Option<Box<SelectionInfo>>,
    /// FGL only: λ₂ was taken at the BIC elbow.
    pub elbow: bool,
}

impl SelectionInfo {
    fn from_bic(grid: &[f64], b: &BicSelection) -> Self {
        SelectionInfo {
            grid: grid.to_vec(),
            scores: b.scores.clone(),
            boundary: b.boundary,
            stage1: None,
            elbow: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiplicityReport {
    /// Every edge selected by at least one method, with the methods that
    /// selected it (canonical order).
    pub edges: BTreeMap<(usize, usize), Vec<Method>>,
    /// Vertices without an edge in any method's estimate.
    pub isolated_vertices: usize,
    pub method_edge_counts: BTreeMap<Method, usize>,
    /// `frequency[m]`: number of edges found by exactly `m` methods, for
    /// `m = 1..=#methods` (index 0 unused).
    pub frequency: Vec<usize>,
}

impl MultiplicityReport {
    pub fn union_size(&self) -> usize {
        self.edges.len()
    }
}

pub fn multiplicity(p: usize, results: &[(Method, &Graph)]) -> Result<MultiplicityReport> {
    let mut edges: BTreeMap<(usize, usize), Vec<Method>> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut ordered: Vec<&(Method, &Graph)> = results.iter().collect();
    ordered.sort_by_key(|(m, _)| *m);
    for (m, g) in ordered {
        if g.p() != p {
            return Err(Error::arg(format!("{m} estimate has {} vertices, expected {p}", g.p())));
        }
        if counts.insert(*m, g.edge_count()).is_some() {
            return Err(Error::arg(format!("{m} listed twice")));
        }
        for e in g.edges() {
            edges.entry(e).or_default().push(*m);
        }
    }
    let mut touched = vec![false; p];
    for &(i, j) in edges.keys() {
        touched[i] = true;
        touched[j] = true;
    }
    let mut frequency = vec![0; results.len() + 1];
    for ms in edges.values() {
        frequency[ms.len()] += 1;
    }
    Ok(MultiplicityReport {
        edges,
        isolated_vertices: touched.iter().filter(|t| !**t).count(),
        method_edge_counts: counts,
        frequency,
    })
}

#[derive(Clone, Debug)]
pub struct RealReport {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub methods: Vec<MethodEdges>,
    pub multiplicity: MultiplicityReport,
    /// Methods that could not be fitted, with the error. They are left out
    /// of the multiplicity counts.
    pub failures: Vec<(Method, String)>,
}

/// Runs the tests at `alpha` and the penalized estimators at their BIC
/// choices (FGL with the two-stage search). Data are column-centered.
pub fn run_real(x1: &DataMatrix, x2: &DataMatrix, cfg: &RealConfig) -> Result<RealReport> {
    if x1.p() != x2.p() {
        return Err(Error::InvalidData(format!(
            "the samples have {} and {} variables",
            x1.p(),
            x2.p()
        )));
    }
    cfg.validate()?;
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for m in Method::ALL.into_iter().filter(|m| cfg.methods.contains(m)) {
        match fit_method(m, x1, x2, cfg) {
            Ok(r) => out.push(r),
            Err(e) => failures.push((m, e.to_string())),
        }
    }
    let pairs: Vec<(Method, &Graph)> = out.iter().map(|r| (r.method, &r.edges)).collect();
    let multiplicity = multiplicity(x1.p(), &pairs)?;
    Ok(RealReport {
        p: x1.p(),
        n1: x1.n(),
        n2: x2.n(),
        methods: out,
        multiplicity,
        failures,
    })
}

fn fit_method(m: Method, x1: &DataMatrix, x2: &DataMatrix, cfg: &RealConfig) -> Result<MethodEdges> {
    let thr = cfg.solver.diff_threshold;
    Ok(match m {
        Method::PCor | Method::PMat => {
            let stats = if m == Method::PCor {
                pcor_statistics(x1, x2, cfg.test_lambda_scale)?
            } else {
                pmat_statistics(x1, x2, cfg.test_lambda_scale)?
            };
            let est = stats.estimate(cfg.alpha)?;
            MethodEdges {
                method: m,
                edges: est.edges,
                param: Param::Alpha(cfg.alpha),
                selection: None,
            }
        }
        Method::DTrace => {
            let grid: Vec<Param> = cfg.dtrace_grid.iter().map(|&l| Param::Lambda(l)).collect();
            let sel = bic_select(m, x1, x2, &grid, &cfg.solver, cfg.fgl_weights)?;
            let lambda = cfg.dtrace_grid[sel.index];
            let s1 = sample_covariance(x1, true);
            let s2 = sample_covariance(x2, true);
            // Refit along the same warm-started path the score came from.
            let upper: Vec<f64> = cfg.dtrace_grid.iter().copied().filter(|&l| l >= lambda).collect();
            let pos = upper.iter().position(|&l| l == lambda).expect("selected value is on the grid");
            let fit = dtrace_path(&s1, &s2, &upper, &cfg.solver)?.swap_remove(pos)?;
            MethodEdges {
                method: m,
                edges: fit.estimate(thr).edges,
                param: Param::Lambda(lambda),
                selection: Some(SelectionInfo::from_bic(&cfg.dtrace_grid, &sel)),
            }
        }
        Method::Fgl => {
            let sel = fgl_two_stage(
                x1,
                x2,
                &cfg.fgl_lambda1_grid,
                &cfg.fgl_lambda2_grid,
                cfg.fgl_lambda2_fixed,
                &cfg.solver,
                cfg.fgl_weights,
            )?;
            let s1 = sample_covariance(x1, true);
            let s2 = sample_covariance(x2, true);
            let (w1, w2) = cfg.fgl_weights.weights(x1.n(), x2.n());
            let upper: Vec<f64> = cfg
                .fgl_lambda2_grid
                .iter()
                .copied()
                .filter(|&l| l >= sel.lambda2)
                .collect();
            let pos = upper.iter().position(|&l| l == sel.lambda2).expect("selected value is on the grid");
            let fit = fgl_path(&s1, &s2, w1, w2, sel.lambda1, &upper, &cfg.solver).swap_remove(pos)?;
            let (o1, o2) = (fit.omega1, fit.omega2);
            let mut info = SelectionInfo::from_bic(&cfg.fgl_lambda2_grid, &sel.stage2);
            info.elbow = sel.elbow;
            info.stage1 = Some(Box::new(SelectionInfo::from_bic(&cfg.fgl_lambda1_grid, &sel.stage1)));
            MethodEdges {
                method: m,
                edges: fgl_differential(&o1, &o2, thr)?.edges,
                param: Param::Lambdas {
                    lambda1: sel.lambda1,
                    lambda2: sel.lambda2,
                },
                selection: Some(info),
            }
        }
    })
}

fn param_json(p: &Param) -> serde_json::Value {
    match *p {
        Param::Lambda(l) => serde_json::json!({ "lambda": l }),
        Param::Lambdas { lambda1, lambda2 } => serde_json::json!({ "lambda1": lambda1, "lambda2": lambda2 }),
        Param::Alpha(a) => serde_json::json!({ "alpha": a }),
    }
}

/// Writes `edges_<method>.csv`, `union.csv`, `multiplicity.csv` and
/// `manifest.json`. Vertex indices are 1-based, matching input columns.
pub fn write_real(report: &RealReport, cfg: &RealConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    for r in &report.methods {
        let mut body = String::from("i,j\n");
        for (i, j) in r.edges.edges() {
            body.push_str(&format!("{},{}\n", i + 1, j + 1));
        }
        write(format!("edges_{}.csv", r.method), body)?;
    }
    let mut union = String::from("i,j,multiplicity,methods\n");
    for (&(i, j), ms) in &report.multiplicity.edges {
        let names: Vec<&str> = ms.iter().map(|m| m.as_str()).collect();
        union.push_str(&format!("{},{},{},{}\n", i + 1, j + 1, ms.len(), names.join(";")));
    }
    write("union.csv".into(), union)?;
    let mut freq = String::from("methods,edges\n");
    for m in (1..report.multiplicity.frequency.len()).rev() {
        freq.push_str(&format!("{m},{}\n", report.multiplicity.frequency[m]));
    }
    write("multiplicity.csv".into(), freq)?;

    let methods: Vec<serde_json::Value> = report
        .methods
        .iter()
        .map(|r| {
            serde_json::json!({
                "method": r.method,
                "edges": r.edges.edge_count(),
                "param": param_json(&r.param),
                "selection": r.selection,
            })
        })
        .collect();
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "p": report.p,
        "n1": report.n1,
        "n2": report.n2,
        "config": cfg,
        "methods": methods,
        "union_size": report.multiplicity.union_size(),
        "isolated_vertices": report.multiplicity.isolated_vertices,
        "failures": report
            .failures
            .iter()
            .map(|(m, e)| serde_json::json!({ "method": m, "error": e }))
            .collect::<Vec<_>>(),
    });
    write(
        "manifest.json".into(),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_estimates_have_multiplicity_one() {
        let a = Graph::from_edges(6, [(0, 1), (2, 3)]).unwrap();
        let b = Graph::from_edges(6, [(0, 2)]).unwrap();
        let r = multiplicity(6, &[(Method::PMat, &a), (Method::DTrace, &b)]).unwrap();
        assert!(r.edges.values().all(|m| m.len() == 1));
        assert_eq!(r.frequency, vec![0, 3, 0]);
        assert_eq!(r.isolated_vertices, 2);
        assert_eq!(r.method_edge_counts[&Method::PMat], 2);
    }

    #[test]
    fn shared_edges_are_counted() {
        let a = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let b = Graph::from_edges(4, [(0, 1)]).unwrap();
        let c = Graph::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let r = multiplicity(4, &[(Method::PCor, &a), (Method::Fgl, &b), (Method::PMat, &c)]).unwrap();
        assert_eq!(r.edges[&(0, 1)], vec![Method::Fgl, Method::PCor, Method::PMat]);
        assert_eq!(r.frequency, vec![0, 0, 1, 1]);
        assert_eq!(r.union_size(), 2);
        assert!(multiplicity(5, &[(Method::PCor, &a)]).is_err());
        assert!(multiplicity(4, &[(Method::PCor, &a), (Method::PCor, &b)]).is_err());
    }

    fn planted(seed: u64) -> (DataMatrix, DataMatrix) {
        use crate::matrix::{invert_spd, SymMatrix};
        use crate::sim::sample_gaussian;
        let p = 8;
        let mut omega2 = SymMatrix::identity(p);
        omega2.set(0, 1, 0.6);
        let sigma2 = invert_spd(&omega2).unwrap();
        let x1 = sample_gaussian(&SymMatrix::identity(p), 400, seed).unwrap();
        let x2 = sample_gaussian(&sigma2, 400, seed + 1).unwrap();
        (x1, x2)
    }

    #[test]
    fn identical_samples_give_no_differential_edges() {
        let (x, _) = planted(3);
        let r = run_real(&x, &x, &RealConfig::default()).unwrap();
        for m in &r.methods {
            assert_eq!(m.edges.edge_count(), 0, "{}", m.method);
        }
        assert_eq!(r.multiplicity.union_size(), 0);
        assert_eq!(r.multiplicity.isolated_vertices, 8);
    }

    #[test]
    fn planted_edge_is_found_by_every_method() {
        let (x1, x2) = planted(11);
        let cfg = RealConfig::default();
        let r = run_real(&x1, &x2, &cfg).unwrap();
        assert_eq!(r.multiplicity.edges.get(&(0, 1)).map(Vec::len), Some(4), "{:?}", r.multiplicity);
        let dir = tempfile::tempdir().unwrap();
        write_real(&r, &cfg, dir.path()).unwrap();
        let union = std::fs::read_to_string(dir.path().join("union.csv")).unwrap();
        assert!(union.contains("\n1,2,4,"), "{union}");
        for name in ["edges_fgl.csv", "multiplicity.csv", "manifest.json"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }

    #[test]
    fn config_from_toml() {
        let cfg = RealConfig::from_toml("alpha = 0.1\nmethods = [\"pcor\", \"dtrace\"]\n").unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.methods, vec![Method::PCor, Method::DTrace]);
        assert!(RealConfig::from_toml("alpah = 0.1\n").is_err());
        assert!(RealConfig::from_toml("alpha = 1.5\n").is_err());
        assert!(RealConfig::from_toml("methods = [\"fgl\"]\nfgl_lambda2_grid = []\n").is_err());
    }

    #[test]
    fn a_failing_method_does_not_stop_the_others() {
        let (x1, x2) = planted(5);
        let mut cfg = RealConfig {
            methods: vec![Method::DTrace, Method::PCor],
            dtrace_grid: vec![0.02],
            ..RealConfig::default()
        };
        cfg.solver.max_iter = 1;
        let r = run_real(&x1, &x2, &cfg).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].0, Method::DTrace);
        assert_eq!(r.methods.len(), 1);
        assert!(r.multiplicity.edges.contains_key(&(0, 1)));
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let (x1, _) = planted(1);
        let x2 = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        assert!(run_real(&x1, &x2, &RealConfig::default()).is_err());
    }
}
