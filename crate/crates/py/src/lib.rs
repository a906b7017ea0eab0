//! Python bindings: formulas, automata, models, strategies, tree evaluation,
//! synthesis, oracles and full configured runs.

use pyo3::exceptions::{PyMemoryError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dualtree::automaton::{compile_dfa, letter_to_assignment, Dfa};
use dualtree::cltl::{eval_trace, parse, JointLetter, Propositions};
use dualtree::config::RunConfig;
use dualtree::dualtree::{single_agent_operator, TreeLimits};
use dualtree::guards::{cube_count_report, expand_guards, AgentLiteral, TransitionCubes, DEFAULT_VAR_CAP};
use dualtree::model::{GridAbstraction, LabelInterval, SingleAgentMdp};
use dualtree::oracle::{monolithic_evaluate, monte_carlo, DEFAULT_MONOLITHIC_BUDGET};
use dualtree::policy::{initial_strategy, DecoupledStrategy, EdgeSet, SharingMode, StrategyTable};
use dualtree::run::{run_synthesis, summary_text};
use dualtree::synthesis::{run_tree, synthesize, Thresholds};

fn err(e: dualtree::Error) -> PyErr {
    match e.exit_code() {
        4 => PyMemoryError::new_err(e.to_string()),
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sharing(mode: &str, groups: Option<Vec<Vec<usize>>>) -> PyResult<SharingMode> {
    match (mode, groups) {
        ("shared", None) => Ok(SharingMode::Shared),
        ("per-agent", None) => Ok(SharingMode::PerAgent),
        ("grouped", Some(g)) => Ok(SharingMode::Grouped(g)),
        ("grouped", None) => Err(PyValueError::new_err("grouped sharing needs groups")),
        (m, _) => Err(PyValueError::new_err(format!("unknown sharing mode {m:?}"))),
    }
}

fn thresholds(prune_product: f64, prune_single: f64) -> Thresholds {
    Thresholds { product: prune_product, single: prune_single }
}

fn limits(max_memory_mb: usize) -> TreeLimits {
    TreeLimits { max_memory_bytes: max_memory_mb.saturating_mul(1 << 20) }
}

/// A single-agent finite MDP shared by all agents.
#[pyclass(name = "Mdp", module = "dualtree", frozen)]
struct PyMdp {
    inner: SingleAgentMdp,
}

#[pymethods]
impl PyMdp {
    /// Grid abstraction of `x+ = x + u + w` with Gaussian noise. `labels` is a
    /// list of `(proposition, lo, hi)` intervals on cell centers.
    #[staticmethod]
    #[pyo3(signature = (labels, x_lo=-10.0, x_hi=10.0, n_states=100, u_lo=-2.0, u_hi=2.0, n_actions=21, noise_std=1.0, propositions=None))]
    #[allow(clippy::too_many_arguments)]
    fn grid(
        labels: Vec<(String, f64, f64)>,
        x_lo: f64,
        x_hi: f64,
        n_states: usize,
        u_lo: f64,
        u_hi: f64,
        n_actions: usize,
        noise_std: f64,
        propositions: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let names = propositions.unwrap_or_else(|| {
            let mut v: Vec<String> = Vec::new();
            for (p, _, _) in &labels {
                if !v.contains(p) {
                    v.push(p.clone());
                }
            }
            v
        });
        let props = Propositions::new(names).map_err(err)?;
        let g = GridAbstraction {
            x_lo,
            x_hi,
            n_states,
            u_lo,
            u_hi,
            n_actions,
            noise_std,
            labels: labels.into_iter().map(|(prop, lo, hi)| LabelInterval { prop, lo, hi }).collect(),
        };
        Ok(Self { inner: g.build(&props).map_err(err)? })
    }

    /// Explicit model: `kernel[x][a][x']`, `labels[x]` as lists of proposition names.
    #[new]
    fn new(propositions: Vec<String>, kernel: Vec<Vec<Vec<f64>>>, labels: Vec<Vec<String>>) -> PyResult<Self> {
        let props = Propositions::new(propositions).map_err(err)?;
        let ns = kernel.len();
        let na = kernel.first().map_or(0, Vec::len);
        let flat: Vec<f64> = kernel.into_iter().flatten().flatten().collect();
        let letters = labels
            .iter()
            .map(|l| props.letter(l.iter().map(String::as_str)))
            .collect::<dualtree::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Self { inner: SingleAgentMdp::new(props, ns, na, flat, letters).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: SingleAgentMdp::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn propositions(&self) -> Vec<String> {
        self.inner.props().names().to_vec()
    }

    /// Proposition names holding in state `x`.
    fn label(&self, x: usize) -> PyResult<Vec<String>> {
        if x >= self.inner.n_states() {
            return Err(PyValueError::new_err(format!("state {x} out of range")));
        }
        Ok(self.inner.props().letter_names(self.inner.label(x)).into_iter().map(String::from).collect())
    }

    fn row(&self, x: usize, a: usize) -> PyResult<Vec<f64>> {
        if x >= self.inner.n_states() || a >= self.inner.n_actions() {
            return Err(PyValueError::new_err(format!("({x}, {a}) out of range")));
        }
        Ok(self.inner.row(x, a).to_vec())
    }

    /// State index of a continuous coordinate (grid models only).
    fn state_of(&self, coord: f64) -> PyResult<usize> {
        self.inner.state_of(coord).map_err(err)
    }

    /// `Σ_x' T(x'|x, π(x)) 1[L(x') ⊨ α] w(x')` with `α` given by required
    /// (`pos`) and forbidden (`neg`) proposition names.
    #[pyo3(signature = (policy, w, pos=Vec::new(), neg=Vec::new()))]
    fn operator(&self, policy: Vec<u32>, w: Vec<f64>, pos: Vec<String>, neg: Vec<String>) -> PyResult<Vec<f64>> {
        let props = self.inner.props();
        let lit = AgentLiteral {
            pos: props.letter(pos.iter().map(String::as_str)).map_err(err)?,
            neg: props.letter(neg.iter().map(String::as_str)).map_err(err)?,
        };
        single_agent_operator(&self.inner, &policy, lit, &w).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Mdp(n_states={}, n_actions={}, propositions={:?})", self.inner.n_states(), self.inner.n_actions(), self.inner.props().names())
    }
}

/// A specification compiled for a fixed number of agents: the automaton and
/// its guards expanded into per-agent cubes.
#[pyclass(name = "Spec", module = "dualtree", frozen)]
struct PySpec {
    dfa: Dfa,
    cubes: TransitionCubes,
    agents: usize,
    formula: dualtree::cltl::Formula,
    text: String,
}

#[pymethods]
impl PySpec {
    #[new]
    #[pyo3(signature = (formula, propositions, agents, var_cap=DEFAULT_VAR_CAP))]
    fn new(formula: &str, propositions: Vec<String>, agents: usize, var_cap: usize) -> PyResult<Self> {
        if agents == 0 {
            return Err(PyValueError::new_err("agents must be at least 1"));
        }
        let props = Propositions::new(propositions).map_err(err)?;
        let f = parse(formula, &props).map_err(err)?.instantiate(agents);
        let dfa = compile_dfa(&f, &props).map_err(err)?;
        let cubes = expand_guards(&dfa, agents, var_cap).map_err(err)?;
        let text = f.display(&props).to_string();
        Ok(Self { dfa, cubes, agents, formula: f, text })
    }

    #[getter]
    fn agents(&self) -> usize {
        self.agents
    }

    /// The formula with symbolic thresholds replaced by their values.
    #[getter]
    fn formula(&self) -> &str {
        &self.text
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.dfa.n_states()
    }

    #[getter]
    fn initial(&self) -> usize {
        self.dfa.initial()
    }

    #[getter]
    fn accepting(&self) -> usize {
        self.dfa.accepting()
    }

    #[getter]
    fn sink(&self) -> Option<usize> {
        self.dfa.sink()
    }

    /// `(from, to, guard)` triples.
    fn transitions(&self) -> Vec<(usize, usize, String)> {
        let doc = self.dfa.to_document();
        doc.transitions.into_iter().map(|t| (t.from, t.to, t.guard)).collect()
    }

    /// `(from, to, cube count, satisfying joint letters)` per transition.
    fn cube_counts(&self) -> Vec<(usize, usize, usize, String)> {
        cube_count_report(&self.dfa, &self.cubes).into_iter().map(|c| (c.from, c.to, c.cubes, c.letters)).collect()
    }

    /// Automaton run over joint letters (one list of proposition-name lists
    /// per step). Returns the first step at which the accepting state is
    /// entered, or None.
    fn run(&self, word: Vec<Vec<Vec<String>>>) -> PyResult<Option<usize>> {
        let letters = self.letters(&word)?;
        let asg: Vec<u32> = letters.iter().map(|l| letter_to_assignment(l, self.dfa.atoms())).collect();
        Ok(self.dfa.run(&asg).1)
    }

    /// Minimal witness index from the formula semantics directly.
    fn witness(&self, word: Vec<Vec<Vec<String>>>) -> PyResult<Option<usize>> {
        Ok(eval_trace(&self.letters(&word)?, &self.formula))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.dfa.to_document()).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Spec({:?}, agents={}, states={})", self.text, self.agents, self.dfa.n_states())
    }
}

impl PySpec {
    fn letters(&self, word: &[Vec<Vec<String>>]) -> PyResult<Vec<JointLetter>> {
        word.iter()
            .map(|step| {
                if step.len() != self.agents {
                    return Err(PyValueError::new_err(format!("expected {} agent letters, got {}", self.agents, step.len())));
                }
                step.iter().map(|l| self.dfa.props().letter(l.iter().map(String::as_str)).map_err(err)).collect()
            })
            .collect()
    }

    fn check(&self, mdp: &PyMdp, strategy: &PyStrategy) -> PyResult<()> {
        if mdp.inner.props() != self.dfa.props() {
            return Err(PyValueError::new_err("model and specification declare different propositions"));
        }
        if strategy.inner.agents() != self.agents || strategy.inner.n_dfa_states() != self.dfa.n_states() {
            return Err(PyValueError::new_err("strategy does not fit this specification"));
        }
        Ok(())
    }
}

/// A decoupled strategy: one state-feedback map per automaton state and group.
#[pyclass(name = "Strategy", module = "dualtree", skip_from_py_object)]
#[derive(Clone)]
struct PyStrategy {
    inner: DecoupledStrategy,
}

#[pymethods]
impl PyStrategy {
    /// Every agent takes the first action everywhere.
    #[new]
    #[pyo3(signature = (mdp, spec, sharing="shared", groups=None))]
    fn new(mdp: &PyMdp, spec: &PySpec, sharing: &str, groups: Option<Vec<Vec<usize>>>) -> PyResult<Self> {
        let mode = self::sharing(sharing, groups)?;
        Ok(Self { inner: initial_strategy(&mdp.inner, &spec.dfa, spec.agents, mode).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str, mdp: &PyMdp, spec: &PySpec) -> PyResult<Self> {
        let table: StrategyTable = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { inner: DecoupledStrategy::from_table(&table, spec.dfa.n_states(), &mdp.inner).map_err(err)? })
    }

    fn to_json(&self, mdp: &PyMdp) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_table(&mdp.inner)).map_err(json_err)
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agents()
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.n_groups()
    }

    fn action(&self, q: usize, agent: usize, x: usize) -> PyResult<usize> {
        if q >= self.inner.n_dfa_states() || agent >= self.inner.agents() {
            return Err(PyValueError::new_err("automaton state or agent out of range"));
        }
        Ok(self.inner.action(q, agent, x))
    }

    fn get_map(&self, q: usize, group: usize) -> PyResult<Vec<u32>> {
        if q >= self.inner.n_dfa_states() || group >= self.inner.n_groups() {
            return Err(PyValueError::new_err("automaton state or group out of range"));
        }
        Ok(self.inner.map(q, group).to_vec())
    }

    fn set_map(&mut self, q: usize, group: usize, actions: Vec<u32>) -> PyResult<()> {
        self.inner.set_map(q, group, &actions).map_err(err)
    }
}

/// Lower bound on the satisfaction probability from each initial joint state,
/// by dual-tree evaluation of a fixed strategy.
#[pyfunction]
#[pyo3(signature = (mdp, spec, strategy, initial_states, horizon, prune_product=0.0, prune_single=0.0, flat=false, max_memory_mb=1024))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    mdp: &PyMdp,
    spec: &PySpec,
    strategy: &PyStrategy,
    initial_states: Vec<Vec<usize>>,
    horizon: usize,
    prune_product: f64,
    prune_single: f64,
    flat: bool,
    max_memory_mb: usize,
) -> PyResult<Vec<f64>> {
    spec.check(mdp, strategy)?;
    py.detach(|| {
        let run = run_tree(
            &mdp.inner,
            &spec.dfa,
            &spec.cubes,
            &strategy.inner,
            horizon,
            thresholds(prune_product, prune_single),
            !flat,
            limits(max_memory_mb),
        )?;
        initial_states.iter().map(|x0| run.tree.theorem1_bound(&spec.dfa, &mdp.inner, x0)).collect::<dualtree::Result<Vec<_>>>()
    })
    .map_err(err)
}

/// Optimize a strategy over `horizon` rounds and certify it. Returns the
/// strategy and its bound at each initial state.
#[pyfunction(name = "synthesize")]
#[pyo3(signature = (mdp, spec, initial, initial_states, horizon, prune_product=1e-6, prune_single=1e-4, sweeps=1, prospective_only=false, max_memory_mb=1024))]
#[allow(clippy::too_many_arguments)]
fn py_synthesize(
    py: Python<'_>,
    mdp: &PyMdp,
    spec: &PySpec,
    initial: &PyStrategy,
    initial_states: Vec<Vec<usize>>,
    horizon: usize,
    prune_product: f64,
    prune_single: f64,
    sweeps: usize,
    prospective_only: bool,
    max_memory_mb: usize,
) -> PyResult<(PyStrategy, Vec<f64>)> {
    spec.check(mdp, initial)?;
    let edges = if prospective_only { EdgeSet::Prospective } else { EdgeSet::All };
    py.detach(|| {
        let syn = synthesize(
            &mdp.inner,
            &spec.dfa,
            &spec.cubes,
            &initial.inner,
            horizon,
            thresholds(prune_product, prune_single),
            sweeps,
            edges,
            true,
            limits(max_memory_mb),
            &initial_states,
        )?;
        let bounds = initial_states
            .iter()
            .map(|x0| syn.certified.tree.theorem1_bound(&spec.dfa, &mdp.inner, x0))
            .collect::<dualtree::Result<Vec<_>>>()?;
        Ok((PyStrategy { inner: syn.strategy }, bounds))
    })
    .map_err(err)
}

/// Exact satisfaction probability by dynamic programming on the joint product.
#[pyfunction]
#[pyo3(signature = (mdp, spec, strategy, x0, horizon, budget=DEFAULT_MONOLITHIC_BUDGET))]
fn monolithic(py: Python<'_>, mdp: &PyMdp, spec: &PySpec, strategy: &PyStrategy, x0: Vec<usize>, horizon: usize, budget: usize) -> PyResult<f64> {
    spec.check(mdp, strategy)?;
    py.detach(|| monolithic_evaluate(&mdp.inner, &spec.dfa, &strategy.inner, &x0, horizon, budget)).map_err(err)
}

/// Simulated satisfaction frequency: `(frequency, standard error, successes, runs)`.
#[pyfunction]
#[pyo3(signature = (mdp, spec, strategy, x0, horizon, runs=10_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    mdp: &PyMdp,
    spec: &PySpec,
    strategy: &PyStrategy,
    x0: Vec<usize>,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> PyResult<(f64, f64, usize, usize)> {
    spec.check(mdp, strategy)?;
    let r = py.detach(|| monte_carlo(&mdp.inner, &spec.dfa, &strategy.inner, &x0, horizon, runs, seed)).map_err(err)?;
    Ok((r.frequency, r.std_error, r.successes, r.runs))
}

/// The built-in run configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    RunConfig::reference().to_toml()
}

/// Run a full configuration given as TOML text. Returns `(report JSON, summary text)`.
#[pyfunction]
fn run_config(py: Python<'_>, toml_text: &str) -> PyResult<(String, String)> {
    let cfg = RunConfig::from_toml(toml_text).map_err(err)?;
    let report = py.detach(|| run_synthesis(&cfg)).map_err(err)?;
    let json = serde_json::to_string(&report).map_err(json_err)?;
    Ok((json, summary_text(&report)))
}

#[pymodule(name = "dualtree")]
fn dualtree_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyMdp>()?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyStrategy>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(py_synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(monolithic, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
