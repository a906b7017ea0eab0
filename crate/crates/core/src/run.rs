//! Experiment orchestration: single runs, agent sweeps, and reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::automaton::{compile_dfa, DfaDocument};
use crate::cltl::parse;
use crate::config::{Method, ModelSource, RunConfig};
use crate::dualtree::TreeLimits;
use crate::error::{Error, Result};
use crate::guards::{cube_count_report, expand_guards, CubeCount};
use crate::oracle::{monolithic_evaluate, monte_carlo, MonteCarloResult};
use crate::policy::{initial_strategy, DecoupledStrategy, StrategyTable};
use crate::synthesis::{run_tree, synthesize, IterationRecord, TreeRun};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum OracleOutcome {
    Ok { value: f64 },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateResult {
    pub states: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<f64>>,
    pub bound: f64,
    pub monolithic: OracleOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_tolerance: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
    pub search_ms: f64,
    pub certification_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub config: RunConfig,
    pub method: Method,
    /// The formula with `N/k` thresholds replaced by their floor values.
    pub instantiated_formula: String,
    pub threshold_rounding: String,
    pub dfa: DfaDocument,
    pub cube_counts: Vec<CubeCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cubes: Option<Vec<Vec<String>>>,
    pub results: Vec<InitialStateResult>,
    pub search_iterations: Vec<IterationRecord>,
    pub certified_iterations: Vec<IterationRecord>,
    pub peak_memory_bytes: usize,
    pub strategy: StrategyTable,
    pub timing: Timing,
    pub flags: Vec<String>,
}

struct Prepared {
    mdp: crate::model::SingleAgentMdp,
    dfa: crate::automaton::Dfa,
    cubes: crate::guards::TransitionCubes,
    formula: String,
}

fn prepare(config: &RunConfig, agents: usize) -> Result<Prepared> {
    let props = config.propositions()?;
    let mdp = config.build_model(&props)?;
    let f = parse(&config.formula, &props)?.instantiate(agents);
    let dfa = compile_dfa(&f, &props)?;
    let cubes = expand_guards(&dfa, agents, config.limits.var_cap)?;
    let formula = f.display(&props).to_string();
    Ok(Prepared { formula, mdp, dfa, cubes })
}

fn limits(config: &RunConfig) -> TreeLimits {
    TreeLimits { max_memory_bytes: config.limits.max_memory_mb.saturating_mul(1 << 20) }
}

struct Solved {
    kept_initial: bool,
    strategy: DecoupledStrategy,
    search: Option<TreeRun>,
    certified: TreeRun,
}

fn solve(config: &RunConfig, p: &Prepared, agents: usize, method: Method, x0s: &[Vec<usize>]) -> Result<Solved> {
    let dedup = method == Method::Dual;
    if let Some(path) = &config.policy.strategy_file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
        let table: StrategyTable = serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{path}: {e}")))?;
        let strategy = DecoupledStrategy::from_table(&table, p.dfa.n_states(), &p.mdp)?;
        if strategy.agents() != agents {
            return Err(Error::DimensionMismatch { expected: agents, got: strategy.agents() });
        }
        let certified = run_tree(&p.mdp, &p.dfa, &p.cubes, &strategy, config.horizon, config.pruning, dedup, limits(config))?;
        return Ok(Solved { kept_initial: false, strategy, search: None, certified });
    }
    let s0 = initial_strategy(&p.mdp, &p.dfa, agents, config.policy.sharing.clone())?;
    let syn = synthesize(
        &p.mdp,
        &p.dfa,
        &p.cubes,
        &s0,
        config.horizon,
        config.pruning,
        config.policy.sweeps,
        config.policy.edges,
        dedup,
        limits(config),
        x0s,
    )?;
    Ok(Solved { kept_initial: syn.kept_initial, strategy: syn.strategy, search: Some(syn.search), certified: syn.certified })
}

/// Parse, compile, expand, synthesize, certify, and evaluate every initial state.
pub fn run_synthesis(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let n = config.agents;
    let p = prepare(config, n)?;
    let x0s = config.initial_states_for(&p.mdp, n)?;
    let solved = solve(config, &p, n, config.method, &x0s)?;
    let tree = &solved.certified.tree;

    let mut results = Vec::with_capacity(x0s.len());
    for (k, x0) in x0s.iter().enumerate() {
        let bound = tree.theorem1_bound(&p.dfa, &p.mdp, x0)?;
        let monolithic = if config.oracle.monolithic {
            match monolithic_evaluate(&p.mdp, &p.dfa, &solved.strategy, x0, config.horizon, config.oracle.monolithic_budget) {
                Ok(value) => OracleOutcome::Ok { value },
                Err(Error::BudgetExceeded(reason)) => OracleOutcome::Skipped { reason },
                Err(e) => return Err(e),
            }
        } else {
            OracleOutcome::Skipped { reason: "disabled".into() }
        };
        let mc = (config.oracle.runs > 0)
            .then(|| monte_carlo(&p.mdp, &p.dfa, &solved.strategy, x0, config.horizon, config.oracle.runs, config.oracle.seed))
            .transpose()?;
        let expected = config.expected.as_ref().map(|e| e.bounds[k]);
        let within = config.expected.as_ref().map(|e| (bound - e.bounds[k]).abs() <= e.tolerance);
        results.push(InitialStateResult {
            states: x0.clone(),
            coordinates: config.initial_states.get(k).cloned(),
            bound,
            monolithic,
            monte_carlo: mc,
            expected,
            within_tolerance: within,
        });
    }

    let mut flags = Vec::new();
    if solved.kept_initial {
        flags.push("the optimized strategy certified lower than the initial strategy at some initial state; the initial strategy was kept".into());
    }
    let misses: Vec<usize> = results.iter().enumerate().filter(|(_, r)| r.within_tolerance == Some(false)).map(|(k, _)| k).collect();
    if !misses.is_empty() {
        let cause = match &config.model {
            ModelSource::Grid(g) => format!(
                "suspected cause: abstraction parameters (cells = {}, domain = [{}, {}], actions = {} on [{}, {}], noise_std = {}, cell-center representatives, out-of-domain sink)",
                g.n_states, g.x_lo, g.x_hi, g.n_actions, g.u_lo, g.u_hi, g.noise_std
            ),
            ModelSource::File { path } => format!("suspected cause: the model in {path}"),
        };
        flags.push(format!("bounds for initial states {misses:?} are outside the expected tolerance; {cause}"));
    }

    let cube_counts = cube_count_report(&p.dfa, &p.cubes);
    let cubes = config.output.verbose_cubes.then(|| {
        p.cubes
            .per_transition
            .iter()
            .map(|cs| cs.iter().map(|c| c.display(p.mdp.props()).to_string()).collect())
            .collect()
    });
    let search_ms = solved.search.as_ref().map_or(0.0, |s| s.elapsed_ms);
    let peak = solved
        .search
        .as_ref()
        .map_or(0, |s| s.peak_memory_bytes)
        .max(solved.certified.peak_memory_bytes);
    Ok(RunReport {
        tool: ToolInfo { name: TOOL_NAME.into(), version: TOOL_VERSION.into() },
        config: config.clone(),
        method: config.method,
        instantiated_formula: p.formula,
        threshold_rounding: "floor".into(),
        dfa: p.dfa.to_document(),
        cube_counts,
        cubes,
        results,
        search_iterations: solved.search.map(|s| s.iterations).unwrap_or_default(),
        certified_iterations: solved.certified.iterations.clone(),
        peak_memory_bytes: peak,
        strategy: solved.strategy.to_table(&p.mdp),
        timing: Timing {
            total_ms: start.elapsed().as_secs_f64() * 1e3,
            search_ms,
            certification_ms: solved.certified.elapsed_ms,
        },
        flags,
    })
}

pub fn summary_text(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", r.tool.name, r.tool.version);
    let _ = writeln!(s, "formula: {} (N = {}, thresholds rounded by {})", r.instantiated_formula, r.config.agents, r.threshold_rounding);
    let _ = writeln!(s, "method: {}, horizon: {}", r.method.as_str(), r.config.horizon);
    let _ = writeln!(
        s,
        "dfa: {} states, {} transitions, {} cubes",
        r.dfa.states,
        r.dfa.transitions.len(),
        r.cube_counts.iter().map(|c| c.cubes).sum::<usize>()
    );
    if let Some(last) = r.certified_iterations.last() {
        let st = &last.stats;
        let _ = writeln!(
            s,
            "tree: |Z| = {}, |K| = {}, depth = {}, pruned = {} / {}",
            st.multi_vertices, st.single_vertices, st.depth, st.pruned_multi, st.pruned_single
        );
    }
    let _ = writeln!(s, "peak memory estimate: {} bytes", r.peak_memory_bytes);
    let _ = writeln!(s, "time: {:.1} ms", r.timing.total_ms);
    for res in &r.results {
        let at = match &res.coordinates {
            Some(c) => format!("{c:?}"),
            None => format!("{:?}", res.states),
        };
        let _ = write!(s, "x0 = {at}: bound = {:.6}", res.bound);
        if let OracleOutcome::Ok { value } = res.monolithic {
            let _ = write!(s, ", exact = {value:.6}");
        }
        if let Some(mc) = &res.monte_carlo {
            let _ = write!(s, ", simulated = {:.4} ± {:.4}", mc.frequency, mc.std_error);
        }
        if let (Some(e), Some(ok)) = (res.expected, res.within_tolerance) {
            let _ = write!(s, ", expected = {e} ({})", if ok { "within tolerance" } else { "outside tolerance" });
        }
        let _ = writeln!(s);
    }
    for f in &r.flags {
        let _ = writeln!(s, "flag: {f}");
    }
    s
}

/// Write `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("out")));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write `report.json` and `summary.txt` into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Serde(e.to_string()))?;
    let rp = dir.join("report.json");
    let sp = dir.join("summary.txt");
    write_atomic(&rp, json.as_bytes())?;
    write_atomic(&sp, summary_text(report).as_bytes())?;
    Ok((rp, sp))
}

/// One row of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agents: usize,
    pub method: String,
    pub status: String,
    pub bound: Option<f64>,
    pub x0: String,
    pub peak_memory_bytes: Option<usize>,
    pub resident_vectors: Option<usize>,
    pub wall_ms: Option<f64>,
    pub eval_ms: Option<f64>,
    pub multi_vertices: Option<usize>,
    pub single_vertices: Option<usize>,
    pub dfa_states: Option<usize>,
    pub cube_total: Option<usize>,
    pub error: String,
}

fn sweep_point(config: &RunConfig, agents: usize, method: Method) -> Result<SweepRow> {
    let start = Instant::now();
    let p = prepare(config, agents)?;
    let x0 = config.initial_states_for(&p.mdp, agents)?.remove(0);
    let solved = solve(config, &p, agents, method, std::slice::from_ref(&x0))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let stats = solved.certified.tree.stats();
    let peak = solved
        .search
        .as_ref()
        .map_or(0, |s| s.peak_memory_bytes)
        .max(solved.certified.peak_memory_bytes);
    let resident = solved
        .search
        .iter()
        .chain(std::iter::once(&solved.certified))
        .flat_map(|r| r.iterations.iter().map(|i| i.stats.resident_vectors))
        .max()
        .unwrap_or(stats.resident_vectors);
    Ok(SweepRow {
        agents,
        method: method.as_str().into(),
        status: "ok".into(),
        bound: Some(solved.certified.tree.theorem1_bound(&p.dfa, &p.mdp, &x0)?),
        x0: x0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
        peak_memory_bytes: Some(peak),
        resident_vectors: Some(resident),
        wall_ms: Some(wall_ms),
        eval_ms: Some(solved.certified.elapsed_ms),
        multi_vertices: Some(stats.multi_vertices),
        single_vertices: Some(stats.single_vertices),
        dfa_states: Some(p.dfa.n_states()),
        cube_total: Some(p.cubes.per_transition.iter().map(Vec::len).sum()),
        error: String::new(),
    })
}

fn failed_row(agents: usize, method: Method, e: Error) -> SweepRow {
    SweepRow {
        agents,
        method: method.as_str().into(),
        status: "failed".into(),
        bound: None,
        x0: String::new(),
        peak_memory_bytes: None,
        resident_vectors: None,
        wall_ms: None,
        eval_ms: None,
        multi_vertices: None,
        single_vertices: None,
        dfa_states: None,
        cube_total: None,
        error: e.to_string(),
    }
}

fn sweep_points(config: &RunConfig, n_list: &[usize], methods: &[Method]) -> Result<Vec<(usize, Method)>> {
    config.validate()?;
    if n_list.is_empty() || methods.is_empty() {
        return Err(Error::Config("sweep needs at least one agent count and one method".into()));
    }
    if n_list.contains(&0) {
        return Err(Error::Config("agent counts must be at least 1".into()));
    }
    if n_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("agent counts must be nondecreasing".into()));
    }
    Ok(n_list.iter().flat_map(|&n| methods.iter().map(move |&m| (n, m))).collect())
}

/// One row per (N, method), run sequentially. Failed points are recorded and
/// the sweep goes on.
pub fn sweep_agents(config: &RunConfig, n_list: &[usize], methods: &[Method]) -> Result<Vec<SweepRow>> {
    Ok(sweep_points(config, n_list, methods)?
        .into_iter()
        .map(|(n, m)| sweep_point(config, n, m).unwrap_or_else(|e| failed_row(n, m, e)))
        .collect())
}

/// Like [`sweep_agents`] but with points in parallel. Concurrent points share
/// the address space, so memory columns are left empty.
pub fn sweep_agents_parallel(config: &RunConfig, n_list: &[usize], methods: &[Method]) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let points = sweep_points(config, n_list, methods)?;
    Ok(points
        .into_par_iter()
        .map(|(n, m)| match sweep_point(config, n, m) {
            Ok(row) => SweepRow { peak_memory_bytes: None, resident_vectors: None, ..row },
            Err(e) => failed_row(n, m, e),
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_atomic(path, sweep_csv(rows)?.as_bytes())
}
