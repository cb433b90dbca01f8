//! Sweep configuration: TOML documents layered over a built-in base.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{FglWeights, Method, Param, SolverConfig};
use crate::graph::{published_sizes, ScenarioSpec, Structure};

/// Name of the built-in preset with the twelve published settings and the
/// published grids.
pub const BUILTIN_PRESET: &str = "paper";

/// Grid description written to the manifest; the published endpoints come
/// without step counts.
pub const GRID_SPACING_NOTE: &str =
    "25 linearly spaced lambda values per range (DTrace, FGL lambda2); 25 log-spaced alpha values (PCor, PMat)";

fn default_p() -> usize {
    200
}

/// A simulation setting addressed by its nominal sizes, e.g. `star-50-200`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepScenario {
    pub structure: Structure,
    /// Nominal |G⁽¹⁾|.
    pub g1: usize,
    /// Nominal |G^diff|.
    pub diff: usize,
    #[serde(default = "default_p")]
    pub p: usize,
}

impl SweepScenario {
    pub fn new(structure: Structure, g1: usize, diff: usize) -> Self {
        SweepScenario {
            structure,
            g1,
            diff,
            p: default_p(),
        }
    }

    pub fn id(&self) -> String {
        if self.p == default_p() {
            format!("{}-{}-{}", self.structure, self.diff, self.g1)
        } else {
            format!("{}-{}-{}-p{}", self.structure, self.diff, self.g1, self.p)
        }
    }

    /// Generator spec. Published settings at p = 200 aim at the published
    /// |G^diff|; anything else aims at the nominal size.
    pub fn spec(&self, seed: u64) -> ScenarioSpec {
        let target = match published_sizes(self.structure, self.g1, self.diff) {
            Some((_, _, exact)) if self.p == default_p() => exact,
            _ => self.diff,
        };
        let mut spec = ScenarioSpec::new(self.structure, self.g1, target, seed);
        spec.p = self.p;
        spec
    }

    /// The twelve published settings.
    pub fn published_settings() -> Vec<SweepScenario> {
        let mut out = Vec::with_capacity(12);
        for g1 in [200, 400] {
            for structure in Structure::ALL {
                for diff in [50, 100] {
                    out.push(SweepScenario::new(structure, g1, diff));
                }
            }
        }
        out
    }
}

pub fn linspace(start: f64, end: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![start],
        _ => (0..k)
            .map(|i| {
                if i == k - 1 {
                    end
                } else {
                    start + (end - start) * i as f64 / (k - 1) as f64
                }
            })
            .collect(),
    }
}

/// `k` values equally spaced in log between two positive endpoints.
pub fn logspace(start: f64, end: f64, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = linspace(start.ln(), end.ln(), k).into_iter().map(f64::exp).collect();
    if let Some(first) = v.first_mut() {
        *first = start;
    }
    if let Some(last) = v.last_mut() {
        *last = end;
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub dtrace: Vec<f64>,
    /// λ₁ is held fixed along FGL curves.
    pub fgl_lambda1: f64,
    pub fgl_lambda2: Vec<f64>,
    pub pcor: Vec<f64>,
    pub pmat: Vec<f64>,
}

impl Grids {
    pub fn builtin() -> Self {
        let alphas = logspace(0.001, 0.995, 25);
        Grids {
            dtrace: linspace(0.1, 0.7, 25),
            fgl_lambda1: 0.1,
            fgl_lambda2: linspace(0.01, 0.5, 25),
            pcor: alphas.clone(),
            pmat: alphas,
        }
    }

    /// Sweep values along the method's curve.
    pub fn values(&self, method: Method) -> &[f64] {
        match method {
            Method::DTrace => &self.dtrace,
            Method::Fgl => &self.fgl_lambda2,
            Method::PCor => &self.pcor,
            Method::PMat => &self.pmat,
        }
    }

    pub fn params(&self, method: Method) -> Vec<Param> {
        self.values(method)
            .iter()
            .map(|&v| match method {
                Method::DTrace => Param::Lambda(v),
                Method::Fgl => Param::Lambdas {
                    lambda1: self.fgl_lambda1,
                    lambda2: v,
                },
                Method::PCor | Method::PMat => Param::Alpha(v),
            })
            .collect()
    }

    fn validate(&self, methods: &[Method]) -> Result<()> {
        for &m in methods {
            let vals = self.values(m);
            if vals.is_empty() {
                return Err(Error::Config(format!("grid for {m} is empty")));
            }
            let ok = |v: f64| {
                if m.is_test() {
                    v > 0.0 && v < 1.0
                } else {
                    v >= 0.0 && v.is_finite()
                }
            };
            if let Some(v) = vals.iter().find(|v| !ok(**v)) {
                return Err(Error::Config(format!("grid value {v} is out of range for {m}")));
            }
        }
        if methods.contains(&Method::Fgl) && !(self.fgl_lambda1 >= 0.0 && self.fgl_lambda1.is_finite()) {
            return Err(Error::Config(format!("fgl_lambda1 = {} must be nonnegative", self.fgl_lambda1)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Vec<SweepScenario>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub grids: Grids,
    pub master_seed: u64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub solver: SolverConfig,
    /// Multiplier on the node-wise lasso default penalty used by the tests.
    pub test_lambda_scale: f64,
    pub fgl_weights: FglWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenarios: Vec::new(),
            sample_sizes: vec![100, 400],
            replicates: 50,
            methods: Method::ALL.to_vec(),
            grids: Grids::builtin(),
            master_seed: 1,
            workers: None,
            output_dir: PathBuf::from("results"),
            solver: SolverConfig::default(),
            test_lambda_scale: 1.0,
            fgl_weights: FglWeights::Equal,
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<RunConfig> {
        match name {
            BUILTIN_PRESET => Ok(RunConfig {
                scenarios: SweepScenario::published_settings(),
                ..RunConfig::default()
            }),
            other => Err(Error::Config(format!("unknown preset {other:?} (available: {BUILTIN_PRESET})"))),
        }
    }

    /// Parses a TOML document. Keys present in the document override `base`
    /// (or the preset named by a top-level `preset` key, or the defaults);
    /// tables merge key by key and arrays are replaced whole.
    pub fn from_toml(text: &str, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let named = match doc.remove("preset") {
            Some(toml::Value::String(s)) => Some(RunConfig::preset(&s)?),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            None => None,
        };
        let base = match (base, named) {
            (Some(b), Some(n)) if b != n => {
                return Err(Error::Config("the document names a different preset than the one requested".into()))
            }
            (Some(b), _) => b,
            (None, Some(n)) => n,
            (None, None) => RunConfig::default(),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, doc);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios configured".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            if !ids.insert(s.id()) {
                return Err(Error::Config(format!("scenario {} is listed twice", s.id())));
            }
            s.spec(0).validate().map_err(|e| Error::Config(format!("scenario {}: {e}", s.id())))?;
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::Config("sample_sizes is empty".into()));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 3) {
            return Err(Error::Config(format!("sample size {n} is too small")));
        }
        if self.sample_sizes.iter().collect::<BTreeSet<_>>().len() != self.sample_sizes.len() {
            return Err(Error::Config("sample_sizes has duplicates".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods enabled".into()));
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return Err(Error::Config("methods has duplicates".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.test_lambda_scale > 0.0 && self.test_lambda_scale.is_finite()) {
            return Err(Error::Config("test_lambda_scale must be positive".into()));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.grids.validate(&self.methods)
    }

    /// Enabled methods in canonical order.
    pub fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.methods.contains(m)).collect()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_grids() {
        let g = Grids::builtin();
        assert_eq!(g.dtrace.len(), 25);
        assert_eq!((g.dtrace[0], g.dtrace[24]), (0.1, 0.7));
        assert!((g.dtrace[1] - 0.125).abs() < 1e-15);
        assert_eq!((g.fgl_lambda2[0], g.fgl_lambda2[24]), (0.01, 0.5));
        assert_eq!(g.fgl_lambda1, 0.1);
        assert_eq!((g.pcor[0], g.pcor[24]), (0.001, 0.995));
        let ratio = g.pmat[1] / g.pmat[0];
        for w in g.pmat[..24].windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
        assert_eq!(g.params(Method::Fgl)[3], Param::Lambdas { lambda1: 0.1, lambda2: g.fgl_lambda2[3] });
    }

    #[test]
    fn preset_covers_every_setting() {
        let cfg = RunConfig::preset(BUILTIN_PRESET).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scenarios.len(), 12);
        assert_eq!((cfg.sample_sizes.clone(), cfg.replicates), (vec![100, 400], 50));
        let ids: BTreeSet<String> = cfg.scenarios.iter().map(SweepScenario::id).collect();
        assert_eq!(ids.len(), 12);
        assert!(ids.contains("star-50-200") && ids.contains("scalefree-100-400"));
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn published_settings_target_published_sizes() {
        let s = SweepScenario::new(Structure::Star, 200, 50);
        assert_eq!(s.spec(3).target_diff, 56);
        let custom = SweepScenario { p: 100, ..s.clone() };
        assert_eq!(custom.spec(3).target_diff, 50);
        assert_eq!(custom.id(), "star-50-200-p100");
    }

    #[test]
    fn toml_overrides_and_typos() {
        let text = r#"
            replicates = 3
            methods = ["dtrace", "pmat"]
            sample_sizes = [400]
            [[scenarios]]
            structure = "random"
            g1 = 200
            diff = 50
            [grids]
            dtrace = [0.2, 0.4]
        "#;
        let cfg = RunConfig::from_toml(text, None).unwrap();
        assert_eq!(cfg.replicates, 3);
        assert_eq!(cfg.grids.dtrace, vec![0.2, 0.4]);
        assert_eq!(cfg.grids.pmat, Grids::builtin().pmat);
        assert_eq!(cfg.scenarios, vec![SweepScenario::new(Structure::Random, 200, 50)]);

        let typo = "replicate = 3\n[[scenarios]]\nstructure = \"star\"\ng1 = 200\ndiff = 50\n";
        let err = RunConfig::from_toml(typo, None).unwrap_err().to_string();
        assert!(err.contains("replicate"), "{err}");
        let nested = "[solver]\nadmm_rh = 2.0\n";
        assert!(RunConfig::from_toml(nested, RunConfig::preset(BUILTIN_PRESET).ok()).is_err());
        assert!(RunConfig::from_toml("replicates = 2", None).is_err()); // no scenarios
    }

    #[test]
    fn preset_layering() {
        let cfg = RunConfig::from_toml("preset = \"paper\"\nreplicates = 10\n", None).unwrap();
        assert_eq!((cfg.scenarios.len(), cfg.replicates), (12, 10));
        let same = RunConfig::from_toml("replicates = 10\n", RunConfig::preset(BUILTIN_PRESET).ok()).unwrap();
        assert_eq!(cfg, same);
        assert!(RunConfig::from_toml("preset = \"other\"\n", None).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::preset(BUILTIN_PRESET).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml(), None).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let base = RunConfig::preset(BUILTIN_PRESET).ok();
        for doc in [
            "replicates = 0",
            "methods = []",
            "sample_sizes = [1]",
            "workers = 0",
            "[grids]\npcor = [1.5]",
            "[grids]\ndtrace = []",
            "methods = [\"fgl\", \"fgl\"]",
        ] {
            assert!(RunConfig::from_toml(doc, base.clone()).is_err(), "{doc}");
        }
        // An empty grid is fine when its method is disabled.
        RunConfig::from_toml("methods = [\"pmat\"]\n[grids]\ndtrace = []", base).unwrap();
    }
}
