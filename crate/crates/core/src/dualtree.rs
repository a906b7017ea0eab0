//! Multi-agent tree, single-agent tree, and the relation between them.
//!
//! Vertex ids are dense. Growth only expands the *frontier*: the vertices
//! created by the previous growth step (initially the root). Since new
//! vertices are appended, the frontier is always a suffix of the multi-agent
//! vertex arrays, and the single-agent vertices it references that were
//! created in the same step form a suffix of the single-agent arrays. Pruning
//! and garbage collection therefore compact suffixes in place.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automaton::{Dfa, StateId};
use crate::error::{Error, Result};
use crate::guards::{AgentLiteral, TransitionCubes};
use crate::model::{joint_label, SingleAgentMdp};
use crate::policy::DecoupledStrategy;

const NO_PARENT: u32 = u32::MAX;
/// Bytes per multi-agent vertex besides its relation entries.
const Z_BYTES: usize = 4 + 4 + 8;
/// Bytes per single-agent vertex besides its value vector.
const K_BYTES: usize = 4 + 8 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeLimits {
    /// Upper bound on [`DualTree::memory_bytes`].
    pub max_memory_bytes: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self { max_memory_bytes: 1 << 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed_multi: usize,
    pub removed_single: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub depth: usize,
    pub multi_vertices: usize,
    pub multi_edges: usize,
    pub frontier: usize,
    pub single_vertices: usize,
    pub single_edges: usize,
    pub resident_vectors: usize,
    pub memory_bytes: usize,
    pub pruned_multi: usize,
    pub pruned_single: usize,
}

/// `out(x) = Σ_{x'} T(x' | x, π(x)) · 1[L_c(x') ⊨ α] · w(x')`.
pub fn single_agent_operator(mdp: &SingleAgentMdp, policy: &[u32], alpha: AgentLiteral, w: &[f64]) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    if policy.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: policy.len() });
    }
    if let Some(&a) = policy.iter().find(|&&a| a as usize >= mdp.n_actions()) {
        return Err(Error::Config(format!("action {a} out of range")));
    }
    let mut out = vec![0.0; n];
    single_agent_operator_into(mdp, policy, alpha, w, &mut out);
    Ok(out)
}

pub(crate) fn single_agent_operator_into(mdp: &SingleAgentMdp, policy: &[u32], alpha: AgentLiteral, w: &[f64], out: &mut [f64]) {
    let m: Vec<f64> = (0..mdp.n_states())
        .map(|x| if alpha.matches(mdp.label(x)) { w[x] } else { 0.0 })
        .collect();
    if m.iter().all(|&v| v == 0.0) {
        out.fill(0.0);
        return;
    }
    for (x, o) in out.iter_mut().enumerate() {
        *o = mdp.row(x, policy[x] as usize).iter().zip(&m).map(|(p, v)| p * v).sum();
    }
}

/// The dual-tree structure `(G_m, G_s, R)`. With `dedup` off it degenerates
/// to the flat witness tree: one fresh single-agent vertex per `(z, i)`.
#[derive(Debug, Clone)]
pub struct DualTree {
    agents: usize,
    n_x: usize,
    dedup: bool,
    limits: TreeLimits,
    depth: usize,

    z_parent: Vec<u32>,
    z_state: Vec<u32>,
    /// Incoming edge label: (transition index, cube index).
    z_edge: Vec<(u32, u32)>,
    /// `R(z, i)` at `z * agents + i`.
    relation: Vec<u32>,
    frontier_start: usize,

    k_parent: Vec<u32>,
    k_literal: Vec<AgentLiteral>,
    k_policy: Vec<u32>,
    k_state: Vec<u32>,
    k_max: Vec<f64>,
    values: Vec<f64>,
    /// First single-agent vertex created by the latest growth step.
    batch_start: usize,
    /// First single-agent vertex whose value is not yet computed.
    pending_start: usize,
    pending_strategy: Option<DecoupledStrategy>,

    pruned_multi: usize,
    pruned_single: usize,
}

impl DualTree {
    /// `G_m0 = ({root}, ∅, L_Q(root) = q_f)`, `G_s0` holding the all-ones vector.
    pub fn new(mdp: &SingleAgentMdp, dfa: &Dfa, agents: usize, dedup: bool, limits: TreeLimits) -> Self {
        let n_x = mdp.n_states();
        // The flat tree stores one root vector per agent so that |K| = |Z| N.
        let roots = if dedup { 1 } else { agents };
        let qf = dfa.accepting() as u32;
        Self {
            agents,
            n_x,
            dedup,
            limits,
            depth: 0,
            z_parent: vec![NO_PARENT],
            z_state: vec![qf],
            z_edge: vec![(u32::MAX, u32::MAX)],
            relation: (0..agents).map(|i| if dedup { 0 } else { i as u32 }).collect(),
            frontier_start: 0,
            k_parent: vec![NO_PARENT; roots],
            k_literal: vec![AgentLiteral::TRUE; roots],
            k_policy: vec![u32::MAX; roots],
            k_state: vec![qf; roots],
            k_max: vec![1.0; roots],
            values: vec![1.0; roots * n_x],
            batch_start: 0,
            pending_start: roots,
            pending_strategy: None,
            pruned_multi: 0,
            pruned_single: 0,
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn is_flat(&self) -> bool {
        !self.dedup
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_multi(&self) -> usize {
        self.z_parent.len()
    }

    pub fn n_single(&self) -> usize {
        self.k_parent.len()
    }

    pub fn frontier(&self) -> Range<u32> {
        self.frontier_start as u32..self.z_parent.len() as u32
    }

    pub fn vertex_state(&self, z: u32) -> StateId {
        self.z_state[z as usize] as StateId
    }

    pub fn vertex_parent(&self, z: u32) -> Option<u32> {
        Some(self.z_parent[z as usize]).filter(|&p| p != NO_PARENT)
    }

    /// Incoming edge label of `z` as (transition index, cube index).
    pub fn vertex_edge(&self, z: u32) -> Option<(usize, usize)> {
        self.vertex_parent(z)?;
        let (t, c) = self.z_edge[z as usize];
        Some((t as usize, c as usize))
    }

    pub fn relation(&self, z: u32, agent: usize) -> u32 {
        self.relation[z as usize * self.agents + agent]
    }

    pub fn single_parent(&self, k: u32) -> Option<u32> {
        Some(self.k_parent[k as usize]).filter(|&p| p != NO_PARENT)
    }

    pub fn single_label(&self, k: u32) -> (AgentLiteral, u32) {
        (self.k_literal[k as usize], self.k_policy[k as usize])
    }

    pub fn single_state(&self, k: u32) -> StateId {
        self.k_state[k as usize] as StateId
    }

    pub fn value(&self, k: u32) -> &[f64] {
        &self.values[k as usize * self.n_x..][..self.n_x]
    }

    pub fn memory_bytes(&self) -> usize {
        self.values.len() * 8 + self.z_parent.len() * (Z_BYTES + 4 * self.agents) + self.k_parent.len() * K_BYTES
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            depth: self.depth,
            multi_vertices: self.n_multi(),
            multi_edges: self.n_multi() - 1,
            frontier: self.n_multi() - self.frontier_start,
            single_vertices: self.n_single(),
            single_edges: self.k_parent.iter().filter(|&&p| p != NO_PARENT).count(),
            resident_vectors: self.values.len() / self.n_x,
            memory_bytes: self.memory_bytes(),
            pruned_multi: self.pruned_multi,
            pruned_single: self.pruned_single,
        }
    }

    /// For each DFA state `q'`, the transitions `(q, g, q')` that growth
    /// expands below a `q'`-labelled vertex: all except those leaving the
    /// accepting state or the sink.
    pub fn expandable_transitions(&self, dfa: &Dfa) -> Vec<Vec<usize>> {
        let mut into = vec![Vec::new(); dfa.n_states()];
        for (t, tr) in dfa.transitions().iter().enumerate() {
            if tr.from != dfa.accepting() && Some(tr.from) != dfa.sink() {
                into[tr.to].push(t);
            }
        }
        into
    }

    fn new_single(&mut self, parent: u32, literal: AgentLiteral, policy: u32, state: u32) -> u32 {
        let k = self.k_parent.len() as u32;
        self.k_parent.push(parent);
        self.k_literal.push(literal);
        self.k_policy.push(policy);
        self.k_state.push(state);
        self.k_max.push(0.0);
        self.values.resize(self.values.len() + self.n_x, 0.0);
        k
    }

    fn check_budget(&self) -> Result<()> {
        let used = self.memory_bytes();
        if used > self.limits.max_memory_bytes {
            return Err(Error::BudgetExceeded(format!(
                "tree needs more than {} bytes (limit {})",
                used, self.limits.max_memory_bytes
            )));
        }
        Ok(())
    }

    /// One growth step: every frontier vertex `z` gets a child for each cube
    /// of each expandable transition into `L_Q(z)`.
    pub fn grow(&mut self, dfa: &Dfa, cubes: &TransitionCubes, strategy: &DecoupledStrategy) -> Result<()> {
        if self.pending_start != self.n_single() {
            return Err(Error::Config("value_update must run before the next growth step".into()));
        }
        if strategy.agents() != self.agents {
            return Err(Error::DimensionMismatch { expected: self.agents, got: strategy.agents() });
        }
        if cubes.agents != self.agents || cubes.per_transition.len() != dfa.transitions().len() {
            return Err(Error::DimensionMismatch { expected: self.agents, got: cubes.agents });
        }
        let into = self.expandable_transitions(dfa);
        let old_len = self.n_multi();
        let frontier = self.frontier_start..old_len;
        self.batch_start = self.n_single();
        let mut children: HashMap<(u32, AgentLiteral, u32), u32> = HashMap::new();
        for z in frontier {
            let target = self.z_state[z] as usize;
            for &t in &into[target] {
                let q = dfa.transitions()[t].from;
                for (c, cube) in cubes.per_transition[t].iter().enumerate() {
                    let zb = self.z_parent.len();
                    self.z_parent.push(z as u32);
                    self.z_state.push(q as u32);
                    self.z_edge.push((t as u32, c as u32));
                    for i in 0..self.agents {
                        let k = self.relation[z * self.agents + i];
                        let pid = strategy.policy_id(q, i);
                        let lit = cube.literals[i];
                        let kb = if self.dedup {
                            match children.get(&(k, lit, pid)) {
                                Some(&kb) => kb,
                                None => {
                                    let kb = self.new_single(k, lit, pid, q as u32);
                                    children.insert((k, lit, pid), kb);
                                    kb
                                }
                            }
                        } else {
                            self.new_single(k, lit, pid, q as u32)
                        };
                        self.relation.push(kb);
                    }
                    if zb.is_multiple_of(4096) {
                        self.check_budget()?;
                    }
                }
            }
        }
        self.check_budget()?;
        self.frontier_start = old_len;
        self.pending_strategy = Some(strategy.clone());
        self.depth += 1;
        Ok(())
    }

    /// Compute `W(κ') = T^π_α(W(κ))` for every vertex created by the last
    /// growth step. Parents always precede children, so one pass suffices.
    pub fn value_update(&mut self, mdp: &SingleAgentMdp) -> Result<()> {
        if mdp.n_states() != self.n_x {
            return Err(Error::DimensionMismatch { expected: self.n_x, got: mdp.n_states() });
        }
        let start = self.pending_start;
        if start == self.n_single() {
            return Ok(());
        }
        let strategy = self.pending_strategy.as_ref().expect("growth records its strategy");
        let n = self.n_x;
        let (head, tail) = self.values.split_at_mut(start * n);
        let (k_parent, k_literal, k_policy) = (&self.k_parent, &self.k_literal, &self.k_policy);
        tail.par_chunks_mut(n).enumerate().for_each(|(j, out)| {
            let k = start + j;
            let p = k_parent[k] as usize;
            debug_assert!(p < start);
            let w = &head[p * n..][..n];
            single_agent_operator_into(mdp, strategy.map_by_id(k_policy[k]), k_literal[k], w, out);
        });
        for k in start..self.n_single() {
            self.k_max[k] = self.value(k as u32).iter().copied().fold(0.0, f64::max);
        }
        self.pending_start = self.n_single();
        Ok(())
    }

    /// Drop frontier vertices whose score `Π_i max W(R(z, i))` is below
    /// `theta_product` (or any factor below `theta_single`), then drop the
    /// single-agent vertices no longer referenced.
    pub fn prune(&mut self, theta_product: f64, theta_single: f64) -> Result<PruneReport> {
        if self.pending_start != self.n_single() {
            return Err(Error::Config("value_update must run before pruning".into()));
        }
        if !(0.0..=1.0).contains(&theta_product) || !(0.0..=1.0).contains(&theta_single) {
            return Err(Error::Config("pruning thresholds must lie in [0, 1]".into()));
        }
        let n_agents = self.agents;
        let start = self.frontier_start.max(1);
        let end = self.n_multi();
        let mut write = start;
        for z in start..end {
            let mut score = 1.0;
            for i in 0..n_agents {
                let w = self.k_max[self.relation[z * n_agents + i] as usize];
                if w < theta_single {
                    score = 0.0;
                    break;
                }
                score *= w;
            }
            if score < theta_product {
                continue;
            }
            if write != z {
                self.z_parent[write] = self.z_parent[z];
                self.z_state[write] = self.z_state[z];
                self.z_edge[write] = self.z_edge[z];
                self.relation.copy_within(z * n_agents..(z + 1) * n_agents, write * n_agents);
            }
            write += 1;
        }
        let removed_multi = end - write;
        self.z_parent.truncate(write);
        self.z_state.truncate(write);
        self.z_edge.truncate(write);
        self.relation.truncate(write * n_agents);

        // Only the latest batch of single-agent vertices can lose all references.
        let b = self.batch_start.max(if self.dedup { 1 } else { n_agents });
        let n_single = self.n_single();
        let mut remap = vec![u32::MAX; n_single.saturating_sub(b)];
        for &k in &self.relation[start * n_agents..] {
            if k as usize >= b {
                remap[k as usize - b] = 0;
            }
        }
        let n = self.n_x;
        let mut next = b;
        for k in b..n_single {
            if remap[k - b] == u32::MAX {
                continue;
            }
            remap[k - b] = next as u32;
            if next != k {
                self.k_parent[next] = self.k_parent[k];
                self.k_literal[next] = self.k_literal[k];
                self.k_policy[next] = self.k_policy[k];
                self.k_state[next] = self.k_state[k];
                self.k_max[next] = self.k_max[k];
                self.values.copy_within(k * n..(k + 1) * n, next * n);
            }
            next += 1;
        }
        let removed_single = n_single - next;
        self.k_parent.truncate(next);
        self.k_literal.truncate(next);
        self.k_policy.truncate(next);
        self.k_state.truncate(next);
        self.k_max.truncate(next);
        self.values.truncate(next * n);
        for k in &mut self.relation[start * n_agents..] {
            if *k as usize >= b {
                *k = remap[*k as usize - b];
            }
        }
        self.pending_start = next;
        self.pruned_multi += removed_multi;
        self.pruned_single += removed_single;
        Ok(PruneReport { removed_multi, removed_single })
    }

    /// `Σ_{z : L_Q(z) = q̄0} Π_i W(R(z, i))(x0_i)` with `q̄0 = τ(q0, L(x0))`.
    pub fn theorem1_bound(&self, dfa: &Dfa, mdp: &SingleAgentMdp, x0: &[usize]) -> Result<f64> {
        let q0 = self.initial_dfa_state(dfa, mdp, x0)?;
        Ok(self.bound_from(q0, x0))
    }

    pub(crate) fn initial_dfa_state(&self, dfa: &Dfa, mdp: &SingleAgentMdp, x0: &[usize]) -> Result<StateId> {
        if x0.len() != self.agents {
            return Err(Error::DimensionMismatch { expected: self.agents, got: x0.len() });
        }
        if let Some(&x) = x0.iter().find(|&&x| x >= self.n_x) {
            return Err(Error::InvalidInitialState(format!("state {x} out of range")));
        }
        if let Some(s) = mdp.sink() {
            if x0.contains(&s) {
                return Err(Error::InvalidInitialState("an agent starts in the sink".into()));
            }
        }
        if self.pending_start != self.n_single() {
            return Err(Error::Config("value_update must run before evaluating the bound".into()));
        }
        Ok(dfa.step_letter(dfa.initial(), &joint_label(x0, mdp)))
    }

    fn bound_from(&self, q0: StateId, x0: &[usize]) -> f64 {
        let n = self.agents;
        let mut total = 0.0;
        for z in 0..self.n_multi() {
            if self.z_state[z] as usize != q0 {
                continue;
            }
            let mut p = 1.0;
            for (i, &x) in x0.iter().enumerate() {
                p *= self.values[self.relation[z * n + i] as usize * self.n_x + x];
                if p == 0.0 {
                    break;
                }
            }
            total += p;
        }
        debug_assert!((-1e-12..=1.0 + 1e-9).contains(&total), "bound {total} outside [0, 1]");
        total
    }
}
