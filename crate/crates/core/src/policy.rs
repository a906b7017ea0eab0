//! Decoupled DFA-indexed strategies and their per-state optimization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::automaton::{Dfa, StateId};
use crate::dualtree::{single_agent_operator_into, DualTree};
use crate::error::{Error, Result};
use crate::guards::{AgentLiteral, TransitionCubes};
use crate::model::SingleAgentMdp;

/// How per-agent policies are shared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SharingMode {
    /// One map per DFA state for all agents.
    #[default]
    Shared,
    /// One map per DFA state and agent.
    PerAgent,
    /// One map per DFA state and group; groups partition the agents.
    Grouped(Vec<Vec<usize>>),
}

impl SharingMode {
    fn group_of(&self, agents: usize) -> Result<(Vec<usize>, usize)> {
        match self {
            SharingMode::Shared => Ok((vec![0; agents], 1)),
            SharingMode::PerAgent => Ok(((0..agents).collect(), agents)),
            SharingMode::Grouped(groups) => {
                let mut of = vec![usize::MAX; agents];
                for (g, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        return Err(Error::Config(format!("group {g} is empty")));
                    }
                    for &i in members {
                        if i >= agents {
                            return Err(Error::Config(format!("group {g} names agent {i}, but N = {agents}")));
                        }
                        if of[i] != usize::MAX {
                            return Err(Error::Config(format!("agent {i} appears in two groups")));
                        }
                        of[i] = g;
                    }
                }
                if let Some(i) = of.iter().position(|&g| g == usize::MAX) {
                    return Err(Error::Config(format!("agent {i} belongs to no group")));
                }
                Ok((of, groups.len()))
            }
        }
    }
}

/// `π_q^g : X_c → A_c` for every DFA state `q` and policy group `g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoupledStrategy {
    mode: SharingMode,
    group_of: Vec<usize>,
    n_groups: usize,
    n_dfa_states: usize,
    n_mdp_states: usize,
    n_actions: usize,
    actions: Vec<u32>,
}

impl DecoupledStrategy {
    /// Every map starts at action 0.
    pub fn new(mode: SharingMode, agents: usize, n_dfa_states: usize, mdp: &SingleAgentMdp) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Config("agent count must be at least 1".into()));
        }
        let (group_of, n_groups) = mode.group_of(agents)?;
        Ok(Self {
            mode,
            group_of,
            n_groups,
            n_dfa_states,
            n_mdp_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            actions: vec![0; n_dfa_states * n_groups * mdp.n_states()],
        })
    }

    pub fn mode(&self) -> &SharingMode {
        &self.mode
    }

    pub fn agents(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_dfa_states(&self) -> usize {
        self.n_dfa_states
    }

    pub fn group(&self, agent: usize) -> usize {
        self.group_of[agent]
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of.iter().enumerate().filter(move |(_, &g)| g == group).map(|(i, _)| i)
    }

    /// Identifier of the map used by `agent` in DFA state `q`.
    pub fn policy_id(&self, q: StateId, agent: usize) -> u32 {
        (q * self.n_groups + self.group_of[agent]) as u32
    }

    pub fn map_by_id(&self, id: u32) -> &[u32] {
        let n = self.n_mdp_states;
        &self.actions[id as usize * n..][..n]
    }

    pub fn map(&self, q: StateId, group: usize) -> &[u32] {
        self.map_by_id((q * self.n_groups + group) as u32)
    }

    pub fn set_map(&mut self, q: StateId, group: usize, actions: &[u32]) -> Result<()> {
        if actions.len() != self.n_mdp_states {
            return Err(Error::DimensionMismatch { expected: self.n_mdp_states, got: actions.len() });
        }
        if let Some(&a) = actions.iter().find(|&&a| a as usize >= self.n_actions) {
            return Err(Error::Config(format!("action {a} out of range")));
        }
        let n = self.n_mdp_states;
        self.actions[(q * self.n_groups + group) * n..][..n].copy_from_slice(actions);
        Ok(())
    }

    pub fn action(&self, q: StateId, agent: usize, x: usize) -> usize {
        self.map_by_id(self.policy_id(q, agent))[x] as usize
    }

    pub fn to_table(&self, mdp: &SingleAgentMdp) -> StrategyTable {
        let values = mdp.action_values();
        let mut maps = Vec::new();
        for q in 0..self.n_dfa_states {
            for g in 0..self.n_groups {
                let actions = self.map(q, g).to_vec();
                let inputs = values.map(|v| actions.iter().map(|&a| v[a as usize]).collect());
                maps.push(StrategyMap { q, group: g, actions, inputs });
            }
        }
        StrategyTable { mode: self.mode.clone(), agents: self.agents(), maps }
    }

    pub fn from_table(table: &StrategyTable, n_dfa_states: usize, mdp: &SingleAgentMdp) -> Result<Self> {
        let mut s = Self::new(table.mode.clone(), table.agents, n_dfa_states, mdp)?;
        for m in &table.maps {
            if m.q >= n_dfa_states || m.group >= s.n_groups {
                return Err(Error::Config(format!("strategy entry for q={} group={} out of range", m.q, m.group)));
            }
            s.set_map(m.q, m.group, &m.actions)?;
        }
        Ok(s)
    }
}

/// `initial_strategy`: the first action everywhere.
pub fn initial_strategy(mdp: &SingleAgentMdp, dfa: &Dfa, agents: usize, mode: SharingMode) -> Result<DecoupledStrategy> {
    DecoupledStrategy::new(mode, agents, dfa.n_states(), mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub mode: SharingMode,
    pub agents: usize,
    pub maps: Vec<StrategyMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMap {
    pub q: StateId,
    pub group: usize,
    pub actions: Vec<u32>,
    /// Actions in model units, when the model records them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<f64>>,
}

/// A prospective edge of the next growth step: frontier vertex, transition, cube.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prospect {
    z: u32,
    transition: u32,
    cube: u32,
}

/// Which multi-agent edges enter the objective for DFA state `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSet {
    /// Only the edges the next growth step will create.
    Prospective,
    /// Every edge of the tree whose child is labelled `q`, plus the prospective ones.
    #[default]
    All,
}

/// Per-state edge sets `E_q`.
pub(crate) fn prospects(tree: &DualTree, dfa: &Dfa, cubes: &TransitionCubes, edges: EdgeSet) -> Vec<Vec<Prospect>> {
    let mut by_q = vec![Vec::new(); dfa.n_states()];
    if edges == EdgeSet::All {
        for z in 1..tree.n_multi() as u32 {
            let (t, c) = tree.vertex_edge(z).expect("non-root vertices have a parent");
            let parent = tree.vertex_parent(z).expect("non-root vertices have a parent");
            by_q[tree.vertex_state(z)].push(Prospect { z: parent, transition: t as u32, cube: c as u32 });
        }
    }
    let into = tree.expandable_transitions(dfa);
    for z in tree.frontier() {
        for &t in &into[tree.vertex_state(z)] {
            let from = dfa.transitions()[t].from;
            for c in 0..cubes.per_transition[t].len() {
                by_q[from].push(Prospect { z, transition: t as u32, cube: c as u32 });
            }
        }
    }
    by_q
}

/// Masked vector `1[L_c(·) ⊨ α] · w`.
fn masked(mdp: &SingleAgentMdp, lit: AgentLiteral, w: &[f64], out: &mut [f64]) {
    for (x, o) in out.iter_mut().enumerate() {
        *o = if lit.matches(mdp.label(x)) { w[x] } else { 0.0 };
    }
}

/// The vector objective of one (q, group) update, as a function of the
/// action at each state: `J[x * |A| + a]`.
pub(crate) fn group_objective(
    tree: &DualTree,
    cubes: &TransitionCubes,
    mdp: &SingleAgentMdp,
    strategy: &DecoupledStrategy,
    q: StateId,
    group: usize,
    edges: &[Prospect],
) -> Vec<f64> {
    let n = mdp.n_states();
    let agents = strategy.agents();
    let mut norms: HashMap<(u32, AgentLiteral, u32), f64> = HashMap::new();
    let mut buf = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut factors = vec![0.0; agents];
    let mut mask = vec![0.0; n];
    for e in edges {
        let cube = &cubes.per_transition[e.transition as usize][e.cube as usize];
        for (j, f) in factors.iter_mut().enumerate() {
            let k = tree.relation(e.z, j);
            let pid = strategy.policy_id(q, j);
            let lit = cube.literals[j];
            *f = *norms.entry((k, lit, pid)).or_insert_with(|| {
                single_agent_operator_into(mdp, strategy.map_by_id(pid), lit, tree.value(k), &mut buf);
                buf.iter().sum()
            });
        }
        // c_e^i = prod_{j != i} factors[j], via prefix and suffix products.
        let mut prefix = 1.0;
        let mut suffix = vec![1.0; agents + 1];
        for j in (0..agents).rev() {
            suffix[j] = suffix[j + 1] * factors[j];
        }
        for i in 0..agents {
            let c = prefix * suffix[i + 1];
            prefix *= factors[i];
            if strategy.group(i) != group || c == 0.0 {
                continue;
            }
            masked(mdp, cube.literals[i], tree.value(tree.relation(e.z, i)), &mut mask);
            for (acc, m) in u.iter_mut().zip(&mask) {
                *acc += c * m;
            }
        }
    }
    let na = mdp.n_actions();
    let mut j = vec![0.0; n * na];
    for x in 0..n {
        for a in 0..na {
            j[x * na + a] = mdp.row(x, a).iter().zip(&u).map(|(p, v)| p * v).sum();
        }
    }
    j
}

/// Componentwise argmax; the lowest action index wins ties.
fn argmax_rows(j: &[f64], na: usize) -> Vec<u32> {
    j.chunks(na)
        .map(|row| {
            let mut best = 0;
            for a in 1..na {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best as u32
        })
        .collect()
}

/// Coordinate ascent over (q, group) maps against the prospective edges of
/// the next growth step. States with no prospective edge keep their maps.
pub fn optimize_policies(
    tree: &DualTree,
    dfa: &Dfa,
    cubes: &TransitionCubes,
    mdp: &SingleAgentMdp,
    strategy: &DecoupledStrategy,
    sweeps: usize,
    edges: EdgeSet,
) -> DecoupledStrategy {
    let mut s = strategy.clone();
    let by_q = prospects(tree, dfa, cubes, edges);
    for _ in 0..sweeps {
        for (q, edges) in by_q.iter().enumerate() {
            if edges.is_empty() {
                continue;
            }
            for g in 0..s.n_groups() {
                let j = group_objective(tree, cubes, mdp, &s, q, g, edges);
                let best = argmax_rows(&j, mdp.n_actions());
                s.set_map(q, g, &best).expect("argmax stays in range");
            }
        }
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::automaton::compile_dfa;
    use crate::cltl::{parse, Propositions};
    use crate::dualtree::TreeLimits;
    use crate::guards::expand_guards;

    /// Two states, two actions. Action 1 moves everything to the labeled state.
    pub(crate) fn two_state_mdp() -> SingleAgentMdp {
        let props = Propositions::new(["p"]).unwrap();
        #[rustfmt::skip]
        let kernel = vec![
            0.9, 0.1,   0.0, 1.0,
            0.5, 0.5,   0.0, 1.0,
        ];
        SingleAgentMdp::new(props, 2, 2, kernel, vec![0, 1]).unwrap()
    }

    #[test]
    fn sharing_modes_group_agents() {
        let m = two_state_mdp();
        let s = DecoupledStrategy::new(SharingMode::Shared, 3, 2, &m).unwrap();
        assert_eq!(s.n_groups(), 1);
        assert_eq!(s.policy_id(1, 0), s.policy_id(1, 2));
        let s = DecoupledStrategy::new(SharingMode::Grouped(vec![vec![0, 1], vec![2]]), 3, 2, &m).unwrap();
        assert_eq!(s.n_groups(), 2);
        assert_eq!(s.policy_id(0, 0), s.policy_id(0, 1));
        assert_ne!(s.policy_id(0, 1), s.policy_id(0, 2));
        let s = DecoupledStrategy::new(SharingMode::PerAgent, 3, 2, &m).unwrap();
        assert_eq!(s.n_groups(), 3);
        assert!(DecoupledStrategy::new(SharingMode::Grouped(vec![vec![0, 1]]), 3, 2, &m).is_err());
        assert!(DecoupledStrategy::new(SharingMode::Grouped(vec![vec![0, 1], vec![1, 2]]), 3, 2, &m).is_err());
    }

    #[test]
    fn initial_strategy_is_total_and_zero() {
        let m = two_state_mdp();
        let props = m.props().clone();
        let dfa = compile_dfa(&parse("F [p, 1]", &props).unwrap(), &props).unwrap();
        let s = initial_strategy(&m, &dfa, 2, SharingMode::Shared).unwrap();
        for q in 0..dfa.n_states() {
            for i in 0..2 {
                for x in 0..2 {
                    assert_eq!(s.action(q, i, x), 0);
                }
            }
        }
    }

    #[test]
    fn table_round_trip() {
        let m = two_state_mdp();
        let mut s = DecoupledStrategy::new(SharingMode::PerAgent, 2, 3, &m).unwrap();
        s.set_map(1, 1, &[1, 0]).unwrap();
        let t = s.to_table(&m);
        assert_eq!(DecoupledStrategy::from_table(&t, 3, &m).unwrap(), s);
        assert!(s.set_map(0, 0, &[2, 0]).is_err());
    }

    #[test]
    fn optimizer_picks_the_action_that_reaches_the_label() {
        let m = two_state_mdp();
        let props = m.props().clone();
        for agents in 1..=2 {
            let dfa = compile_dfa(&parse("F [p, 1]", &props).unwrap(), &props).unwrap();
            let cubes = expand_guards(&dfa, agents, 64).unwrap();
            let tree = DualTree::new(&m, &dfa, agents, true, TreeLimits::default());
            let s0 = initial_strategy(&m, &dfa, agents, SharingMode::Shared).unwrap();
            let s = optimize_policies(&tree, &dfa, &cubes, &m, &s0, 1, EdgeSet::Prospective);
            assert_eq!(s.map(dfa.initial(), 0), &[1, 1]);
            // The accepting state has no prospective edges and keeps its map.
            assert_eq!(s.map(dfa.accepting(), 0), &[0, 0]);
        }
    }

    #[test]
    fn single_agent_weights_are_one() {
        // With N = 1 the objective is the plain sum of operator outputs.
        let m = two_state_mdp();
        let props = m.props().clone();
        let dfa = compile_dfa(&parse("F [p, 1]", &props).unwrap(), &props).unwrap();
        let cubes = expand_guards(&dfa, 1, 64).unwrap();
        let tree = DualTree::new(&m, &dfa, 1, true, TreeLimits::default());
        let s0 = initial_strategy(&m, &dfa, 1, SharingMode::Shared).unwrap();
        let by_q = prospects(&tree, &dfa, &cubes, EdgeSet::All);
        let q = dfa.initial();
        let j = group_objective(&tree, &cubes, &m, &s0, q, 0, &by_q[q]);
        // One edge, literal p, value ones: J(x, a) = T(s1 | x, a).
        assert_eq!(j, vec![0.1, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn argmax_ties_take_the_lowest_index() {
        assert_eq!(argmax_rows(&[1.0, 1.0, 0.5, 0.2, 0.7, 0.7], 3), vec![0, 1]);
    }
}
