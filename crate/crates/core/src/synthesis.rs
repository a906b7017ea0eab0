//! Horizon loops over the dual tree: fixed-strategy evaluation and synthesis.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::automaton::Dfa;
use crate::dualtree::{DualTree, PruneReport, TreeLimits, TreeStats};
use crate::error::Result;
use crate::guards::TransitionCubes;
use crate::model::SingleAgentMdp;
use crate::policy::{optimize_policies, DecoupledStrategy, EdgeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub product: f64,
    pub single: f64,
}

impl Thresholds {
    pub const NONE: Thresholds = Thresholds { product: 0.0, single: 0.0 };
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { product: 1e-6, single: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step: usize,
    pub stats: TreeStats,
    pub pruned: PruneReport,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TreeRun {
    pub tree: DualTree,
    pub iterations: Vec<IterationRecord>,
    pub elapsed_ms: f64,
    pub peak_memory_bytes: usize,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Grow, update and prune `horizon` times under a fixed strategy.
#[allow(clippy::too_many_arguments)]
pub fn run_tree(
    mdp: &SingleAgentMdp,
    dfa: &Dfa,
    cubes: &TransitionCubes,
    strategy: &DecoupledStrategy,
    horizon: usize,
    thresholds: Thresholds,
    dedup: bool,
    limits: TreeLimits,
) -> Result<TreeRun> {
    let start = Instant::now();
    let mut tree = DualTree::new(mdp, dfa, strategy.agents(), dedup, limits);
    let mut iterations = Vec::with_capacity(horizon);
    let mut peak = tree.memory_bytes();
    for step in 0..horizon {
        let t = Instant::now();
        tree.grow(dfa, cubes, strategy)?;
        tree.value_update(mdp)?;
        peak = peak.max(tree.memory_bytes());
        let pruned = tree.prune(thresholds.product, thresholds.single)?;
        iterations.push(IterationRecord { step, stats: tree.stats(), pruned, elapsed_ms: ms(t) });
    }
    Ok(TreeRun { tree, iterations, elapsed_ms: ms(start), peak_memory_bytes: peak })
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub strategy: DecoupledStrategy,
    /// The optimize/grow/update/prune loop that produced `strategy`.
    pub search: TreeRun,
    /// The same loop re-run under the final strategy; its bound is certified.
    pub certified: TreeRun,
    /// The optimized strategy certified lower than `initial` at some
    /// reference state, so `initial` was returned instead.
    pub kept_initial: bool,
}

/// `horizon` rounds of (optimize, grow, update, prune). Maps change between
/// rounds, so the search tree mixes policies; the final strategy is then
/// re-evaluated on a fresh tree, whose bound is the one to report.
///
/// With a non-empty `reference`, `initial` is certified too and is returned
/// unless the optimized strategy is at least as good at every reference state.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    mdp: &SingleAgentMdp,
    dfa: &Dfa,
    cubes: &TransitionCubes,
    initial: &DecoupledStrategy,
    horizon: usize,
    thresholds: Thresholds,
    sweeps: usize,
    edges: EdgeSet,
    dedup: bool,
    limits: TreeLimits,
    reference: &[Vec<usize>],
) -> Result<Synthesis> {
    let start = Instant::now();
    let mut strategy = initial.clone();
    let mut tree = DualTree::new(mdp, dfa, initial.agents(), dedup, limits);
    let mut iterations = Vec::with_capacity(horizon);
    let mut peak = tree.memory_bytes();
    for step in 0..horizon {
        let t = Instant::now();
        strategy = optimize_policies(&tree, dfa, cubes, mdp, &strategy, sweeps, edges);
        tree.grow(dfa, cubes, &strategy)?;
        tree.value_update(mdp)?;
        peak = peak.max(tree.memory_bytes());
        let pruned = tree.prune(thresholds.product, thresholds.single)?;
        iterations.push(IterationRecord { step, stats: tree.stats(), pruned, elapsed_ms: ms(t) });
    }
    let search = TreeRun { tree, iterations, elapsed_ms: ms(start), peak_memory_bytes: peak };
    let certified = run_tree(mdp, dfa, cubes, &strategy, horizon, thresholds, dedup, limits)?;
    if !reference.is_empty() {
        let base = run_tree(mdp, dfa, cubes, initial, horizon, thresholds, dedup, limits)?;
        for x0 in reference {
            let new = certified.tree.theorem1_bound(dfa, mdp, x0)?;
            if new < base.tree.theorem1_bound(dfa, mdp, x0)? {
                return Ok(Synthesis { strategy: initial.clone(), search, certified: base, kept_initial: true });
            }
        }
    }
    Ok(Synthesis { strategy, search, certified, kept_initial: false })
}
