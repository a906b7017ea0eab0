//! Run configuration (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cltl::Propositions;
use crate::error::{Error, Result};
use crate::guards::DEFAULT_VAR_CAP;
use crate::model::{GridAbstraction, LabelInterval, SingleAgentMdp};
use crate::oracle::DEFAULT_MONOLITHIC_BUDGET;
use crate::policy::{EdgeSet, SharingMode};
use crate::synthesis::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Dual,
    Flat,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dual => "dual",
            Method::Flat => "flat",
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Method>> {
        text.split(',')
            .map(|m| match m.trim() {
                "dual" => Ok(Method::Dual),
                "flat" => Ok(Method::Flat),
                other => Err(Error::Config(format!("unknown method `{other}` (expected dual or flat)"))),
            })
            .collect()
    }
}

/// Where the single-agent model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// A saved model document.
    File { path: String },
    /// The 1-D Gaussian grid abstraction.
    Grid(GridAbstraction),
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Grid(GridAbstraction::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub sharing: SharingMode,
    pub sweeps: usize,
    pub edges: EdgeSet,
    /// Evaluate this strategy table instead of synthesizing one.
    pub strategy_file: Option<String>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { sharing: SharingMode::Shared, sweeps: 1, edges: EdgeSet::All, strategy_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub monolithic: bool,
    pub monolithic_budget: usize,
    /// Monte Carlo runs per initial state; 0 disables simulation.
    pub runs: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { monolithic: true, monolithic_budget: DEFAULT_MONOLITHIC_BUDGET, runs: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_memory_mb: usize,
    pub var_cap: usize,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { max_memory_mb: 1024, var_cap: DEFAULT_VAR_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for `report.json`, `summary.txt` and `sweep.csv`.
    pub dir: Option<String>,
    /// Include every cube of every transition in the report.
    pub verbose_cubes: bool,
}

/// Reference values to compare bounds against, one per initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub bounds: Vec<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub agents: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Dual]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub formula: String,
    /// Declared propositions; defaults to those named by the model's labels.
    #[serde(default)]
    pub propositions: Option<Vec<String>>,
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub model: ModelSource,
    /// Initial joint states as coordinates (grid models).
    #[serde(default)]
    pub initial_states: Vec<Vec<f64>>,
    /// Initial joint states as state indices.
    #[serde(default)]
    pub initial_state_indices: Vec<Vec<usize>>,
    #[serde(default)]
    pub pruning: Thresholds,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub expected: Option<Expected>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_agents() -> usize {
    4
}

fn default_horizon() -> usize {
    10
}

impl RunConfig {
    /// Built-in case study: `(! [p1, N/2]) U [p2, N/3]` at N = 4 on the default
    /// grid, three initial conditions and their reference bounds.
    pub fn reference() -> Self {
        let labels = vec![
            LabelInterval { prop: "p1".into(), lo: 2.0, hi: 4.0 },
            LabelInterval { prop: "p2".into(), lo: -4.0, hi: -2.0 },
        ];
        Self {
            formula: "(! [p1, N/2]) U [p2, N/3]".into(),
            propositions: Some(vec!["p1".into(), "p2".into()]),
            agents: 4,
            horizon: 10,
            method: Method::Dual,
            model: ModelSource::Grid(GridAbstraction { labels, ..GridAbstraction::default() }),
            initial_states: vec![
                vec![-2.1, -1.9, 0.1, 2.4],
                vec![-1.8, -1.7, 1.8, 1.7],
                vec![2.3, 1.0, 1.5, 0.0],
            ],
            initial_state_indices: Vec::new(),
            pruning: Thresholds::default(),
            policy: PolicyConfig::default(),
            oracle: OracleConfig::default(),
            limits: LimitsConfig::default(),
            output: OutputConfig::default(),
            expected: Some(Expected { bounds: vec![1.0, 0.6051, 0.3382], tolerance: 0.15 }),
            sweep: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Model paths are relative to the configuration file.
        if let ModelSource::File { path: p } = &mut cfg.model {
            if Path::new(p.as_str()).is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p).display().to_string();
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.agents == 0 {
            return bad("agents must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        for (name, v) in [("product", self.pruning.product), ("single", self.pruning.single)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("pruning.{name} = {v} is outside [0, 1]"));
            }
        }
        if !self.initial_states.is_empty() && !self.initial_state_indices.is_empty() {
            return bad("give initial_states or initial_state_indices, not both".into());
        }
        if let Some(e) = &self.expected {
            if e.bounds.len() != self.n_initial_states() {
                return bad(format!(
                    "expected.bounds has {} entries for {} initial states",
                    e.bounds.len(),
                    self.n_initial_states()
                ));
            }
        }
        if let Some(s) = &self.sweep {
            if s.agents.is_empty() || s.agents.contains(&0) {
                return bad("sweep.agents must list positive agent counts".into());
            }
            if s.agents.windows(2).any(|w| w[0] > w[1]) {
                return bad("sweep.agents must be nondecreasing".into());
            }
            if s.methods.is_empty() {
                return bad("sweep.methods must not be empty".into());
            }
        }
        Ok(())
    }

    pub fn n_initial_states(&self) -> usize {
        self.initial_states.len().max(self.initial_state_indices.len())
    }

    pub fn propositions(&self) -> Result<Propositions> {
        if let Some(p) = &self.propositions {
            return Propositions::new(p.clone());
        }
        match &self.model {
            ModelSource::Grid(g) => {
                let mut names: Vec<String> = Vec::new();
                for l in &g.labels {
                    if !names.contains(&l.prop) {
                        names.push(l.prop.clone());
                    }
                }
                Propositions::new(names)
            }
            ModelSource::File { path } => Ok(SingleAgentMdp::load(path)?.props().clone()),
        }
    }

    pub fn build_model(&self, props: &Propositions) -> Result<SingleAgentMdp> {
        match &self.model {
            ModelSource::Grid(g) => g.build(props),
            ModelSource::File { path } => {
                let m = SingleAgentMdp::load(path)?;
                if m.props() != props {
                    return Err(Error::Config(format!(
                        "model declares propositions {:?}, configuration declares {:?}",
                        m.props().names(),
                        props.names()
                    )));
                }
                Ok(m)
            }
        }
    }

    /// Initial joint states as state indices, each of length `agents`.
    /// A listed state shorter or longer than `agents` is cycled or truncated.
    pub fn initial_states_for(&self, mdp: &SingleAgentMdp, agents: usize) -> Result<Vec<Vec<usize>>> {
        let fit = |v: &[usize]| -> Vec<usize> { (0..agents).map(|i| v[i % v.len()]).collect() };
        let mut out = Vec::new();
        for coords in &self.initial_states {
            if coords.is_empty() {
                return Err(Error::InvalidInitialState("empty initial state".into()));
            }
            let idx = coords.iter().map(|&c| mdp.state_of(c)).collect::<Result<Vec<_>>>()?;
            out.push(fit(&idx));
        }
        for idx in &self.initial_state_indices {
            if idx.is_empty() {
                return Err(Error::InvalidInitialState("empty initial state".into()));
            }
            out.push(fit(idx));
        }
        if out.is_empty() {
            let first = mdp.initial_states().first().copied().ok_or_else(|| {
                Error::InvalidInitialState("no initial state configured and the model declares none".into())
            })?;
            out.push(vec![first; agents]);
        }
        for x in &out {
            if let Some(&s) = x.iter().find(|&&s| s >= mdp.n_states()) {
                return Err(Error::InvalidInitialState(format!("state {s} out of range")));
            }
            if mdp.sink().is_some_and(|s| x.contains(&s)) {
                return Err(Error::InvalidInitialState(format!("{x:?} places an agent in the sink")));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            formula = "F [p, 1]"
            [model]
            labels = [{ prop = "p", lo = 0.0, hi = 1.0 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.agents, 4);
        assert_eq!(cfg.horizon, 10);
        assert_eq!(cfg.pruning, Thresholds { product: 1e-6, single: 1e-4 });
        assert_eq!(cfg.policy.sweeps, 1);
        assert!(matches!(&cfg.model, ModelSource::Grid(g) if g.n_states == 100 && g.n_actions == 21));
        assert_eq!(cfg.propositions().unwrap().names(), &["p".to_string()]);
        cfg.validate().unwrap();
    }

    #[test]
    fn file_model_and_sections() {
        let cfg = RunConfig::from_toml(
            r#"
            formula = "F [p, 1]"
            agents = 2
            horizon = 3
            initial_state_indices = [[0, 1]]
            [model]
            path = "m.json"
            [pruning]
            product = 1e-3
            [policy]
            sharing = "per-agent"
            [oracle]
            runs = 100
            seed = 9
            [sweep]
            agents = [2, 3]
            methods = ["dual", "flat"]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.model, ModelSource::File { path: "m.json".into() });
        assert_eq!(cfg.pruning.single, 1e-4);
        assert_eq!(cfg.policy.sharing, SharingMode::PerAgent);
        assert_eq!(cfg.sweep.as_ref().unwrap().methods, vec![Method::Dual, Method::Flat]);
        cfg.validate().unwrap();
    }

    #[test]
    fn grouped_sharing_parses() {
        let cfg = RunConfig::from_toml(
            r#"
            formula = "F [p, 1]"
            [policy]
            sharing = { grouped = [[0, 1], [2, 3]] }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.policy.sharing, SharingMode::Grouped(vec![vec![0, 1], vec![2, 3]]));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::from_toml("agents = 2").is_err());
        assert!(RunConfig::from_toml("formula = \"F [p,1]\"\nbogus = 1").is_err());
        let mut cfg = RunConfig::reference();
        cfg.pruning.product = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::reference();
        cfg.agents = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::reference();
        cfg.sweep = Some(SweepConfig { agents: vec![4, 3], methods: vec![Method::Dual] });
        assert!(cfg.validate().is_err());
        assert!(Method::parse_list("dual,bogus").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::reference();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn initial_states_are_fitted_to_agent_count() {
        let cfg = RunConfig::reference();
        let props = cfg.propositions().unwrap();
        let mdp = cfg.build_model(&props).unwrap();
        let x4 = cfg.initial_states_for(&mdp, 4).unwrap();
        assert_eq!(x4.len(), 3);
        let x6 = cfg.initial_states_for(&mdp, 6).unwrap();
        assert_eq!(x6[0][4], x4[0][0]);
        assert_eq!(x6[0].len(), 6);
    }
}
