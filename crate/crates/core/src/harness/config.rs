use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::{BayesOptConfig, CmaesConfig};
use crate::calib::{LineSearchConfig, Method};
use crate::objective::reference::validate_frequencies;
use crate::objective::DEFAULT_FREQUENCIES;
use crate::params::ParamVector;
use crate::proposer::RemoteConfig;
use crate::swimsim::SimConfig;

pub const EXPERIMENT_SCHEMA: &str = "swimcal.experiment.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Hidden parameters drawn from `hidden_seed` (redrawn until stable).
    Synthetic {
        hidden_seed: u64,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    /// Explicit hidden parameters.
    SyntheticTheta {
        theta_star: ParamVector,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    /// A reference directory written by `gen-ref` or ingested from tracking.
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposerSpec {
    /// Knows the hidden parameters; synthetic references only.
    Oracle {
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        sigma_dir: f64,
    },
    Spsa {
        #[serde(default = "default_perturbation")]
        perturbation: f64,
        #[serde(default = "one")]
        gamma: f64,
    },
    Remote(RemoteConfig),
}

fn one() -> f64 {
    1.0
}

fn default_perturbation() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    /// Output name; defaults to the method tag. Must be unique in a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_search: Option<LineSearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposer: Option<ProposerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmaes: Option<CmaesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayesopt: Option<BayesOptConfig>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            label: None,
            line_search: None,
            proposer: None,
            cmaes: None,
            bayesopt: None,
        }
    }

    pub fn name(&self) -> &str {
        self.label.as_deref().unwrap_or(self.method.tag())
    }

    /// The line-search settings this method actually runs with.
    pub fn effective_line_search(&self) -> LineSearchConfig {
        let base = self.line_search.unwrap_or_default();
        match self.method {
            Method::FullStepOnly => LineSearchConfig { max_steps: 1, ..base },
            _ => base,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let name = self.name();
        let bad = |what: &str| Err(HarnessError::Config(format!("method {name}: {what}")));
        if self.label.as_deref().is_some_and(|l| {
            l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        }) {
            return bad("label must be non-empty and use only [A-Za-z0-9_-]");
        }
        let uses_proposer = self.method.uses_proposer();
        if !uses_proposer && self.line_search.is_some() {
            return bad("line_search applies only to proposer-driven methods");
        }
        if !uses_proposer && self.proposer.is_some() {
            return bad("proposer applies only to proposer-driven methods");
        }
        if self.cmaes.is_some() && self.method != Method::Cmaes {
            return bad("cmaes block on a non-CMA-ES method");
        }
        if self.bayesopt.is_some() && self.method != Method::BayesOpt {
            return bad("bayesopt block on a non-BayesOpt method");
        }
        if self.method == Method::FullStepOnly && self.line_search.is_some_and(|l| l.max_steps != 1) {
            return bad("swim2real_k1 evaluates only the full step (max_steps = 1)");
        }
        self.effective_line_search()
            .validate()
            .map_err(|e| HarnessError::Config(format!("method {name}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub reference: ReferenceSpec,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_frequencies")]
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Default proposer for methods that do not name one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposer: Option<ProposerSpec>,
    /// Worker threads for (method, seed) runs; defaults to the core count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_budget() -> usize {
    40
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_frequencies() -> Vec<f64> {
    DEFAULT_FREQUENCIES.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(reference: ReferenceSpec, methods: Vec<MethodSpec>) -> Self {
        Self {
            schema: EXPERIMENT_SCHEMA.to_string(),
            reference,
            methods,
            budget: default_budget(),
            seeds: default_seeds(),
            frequencies: default_frequencies(),
            sim: SimConfig::default(),
            output_dir: default_output(),
            proposer: None,
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("not valid JSON: {e}")))?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(EXPERIMENT_SCHEMA) => {}
            Some(other) => {
                return Err(HarnessError::Config(format!(
                    "unsupported schema {other:?}, expected {EXPERIMENT_SCHEMA:?}"
                )))
            }
            None => return Err(HarnessError::Config("missing \"schema\" field".into())),
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // Relative reference directories resolve against the config file.
        if let ReferenceSpec::Directory { path: p } = &mut cfg.reference {
            if p.is_relative() {
                if let Some(parent) = path.parent() {
                    *p = parent.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), HarnessError> {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(b) = o.budget {
            self.budget = b;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.schema != EXPERIMENT_SCHEMA {
            return err(format!("unsupported schema {:?}", self.schema));
        }
        if self.methods.is_empty() {
            return err("at least one method is required".into());
        }
        if self.seeds.is_empty() {
            return err("at least one seed is required".into());
        }
        if self.budget == 0 {
            return err("budget must be at least 1".into());
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.seeds {
            if !seen.insert(*s) {
                return err(format!("seed {s} listed twice"));
            }
        }
        validate_frequencies(&self.frequencies).map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sim.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            m.validate()?;
            if !names.insert(m.name().to_string()) {
                return err(format!("method name {} used twice; set distinct labels", m.name()));
            }
            if m.method.uses_proposer() && m.proposer.is_none() && self.proposer.is_none() {
                return err(format!("method {} needs a proposer", m.name()));
            }
            if m.method == Method::BayesOpt {
                m.bayesopt
                    .unwrap_or_default()
                    .validate(self.budget)
                    .map_err(|e| HarnessError::Config(format!("method {}: {e}", m.name())))?;
            }
            if m.method == Method::Cmaes {
                m.cmaes
                    .unwrap_or_default()
                    .validate(crate::params::SWIMMER_DIM)
                    .map_err(|e| HarnessError::Config(format!("method {}: {e}", m.name())))?;
            }
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return err("workers must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn proposer_for<'a>(&'a self, m: &'a MethodSpec) -> Option<&'a ProposerSpec> {
        m.proposer.as_ref().or(self.proposer.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "schema": EXPERIMENT_SCHEMA,
            "reference": {"kind": "synthetic", "hidden_seed": 0},
            "methods": [{"method": "swim2real"}, {"method": "random"}],
            "proposer": {"kind": "oracle"}
        })
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(&minimal().to_string()).unwrap();
        assert_eq!(cfg.budget, 40);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.frequencies, DEFAULT_FREQUENCIES.to_vec());
        assert_eq!(cfg.methods[0].effective_line_search(), LineSearchConfig::default());
        assert_eq!(cfg.proposer, Some(ProposerSpec::Oracle { gamma: 1.0, sigma_dir: 0.0 }));
    }

    #[test]
    fn rejects_bad_documents() {
        let cases: Vec<(&str, serde_json::Value)> = vec![
            ("schema", serde_json::json!("swimcal.experiment.v0")),
            ("methods", serde_json::json!([])),
            ("seeds", serde_json::json!([])),
            ("frequencies", serde_json::json!([1.0, 0.5])),
            ("budget", serde_json::json!(0)),
            ("unknown_field", serde_json::json!(1)),
            ("methods", serde_json::json!([{"method": "swim2real_k1", "line_search": {"max_steps": 3}}])),
            ("methods", serde_json::json!([{"method": "random"}, {"method": "random"}])),
            ("methods", serde_json::json!([{"method": "random", "proposer": {"kind": "oracle"}}])),
            ("methods", serde_json::json!([{"method": "bayesopt"}])),
        ];
        for (key, value) in cases {
            let mut doc = minimal();
            doc[key] = value;
            if key == "methods" && doc["methods"][0]["method"] == "bayesopt" {
                doc["budget"] = serde_json::json!(5);
            }
            let e = ExperimentConfig::from_json(&doc.to_string());
            assert!(matches!(e, Err(HarnessError::Config(_))), "{key} accepted");
        }
        let mut doc = minimal();
        doc.as_object_mut().unwrap().remove("proposer");
        assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ExperimentConfig::from_json(&minimal().to_string()).unwrap();
        cfg.apply(&Overrides {
            seed: Some(7),
            budget: Some(12),
            output_dir: Some("elsewhere".into()),
        })
        .unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.budget, 12);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn labels_distinguish_variants() {
        let mut doc = minimal();
        doc["methods"] = serde_json::json!([
            {"method": "swim2real", "label": "oracle_g3", "proposer": {"kind": "oracle", "gamma": 3.0}},
            {"method": "swim2real"},
            {"method": "warmstart", "proposer": {"kind": "remote", "endpoint": "http://127.0.0.1:9", "retries": 0}}
        ]);
        let cfg = ExperimentConfig::from_json(&doc.to_string()).unwrap();
        assert_eq!(cfg.methods[0].name(), "oracle_g3");
        assert_eq!(cfg.methods[1].name(), "swim2real");
        match &cfg.methods[2].proposer {
            Some(ProposerSpec::Remote(r)) => assert_eq!((r.retries, r.timeout_secs), (0, 120.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_json(&minimal().to_string()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
