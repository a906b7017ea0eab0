//! Guard expansion over individual agents.
//!
//! A DFA guard talks about counting atoms; the tree needs per-agent letter
//! formulas. Each guard is compiled to a reduced ordered BDD over the
//! variables `(agent, prop)` in agent-major order, so every 1-path factors into
//! one conjunction of literals per agent. The 1-paths of the reduced BDD are
//! pairwise disjoint and together cover the guard, which makes them a
//! partition of the guard's joint letters.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automaton::{Dfa, Guard};
use crate::cltl::{CountingProp, Letter, Propositions};
use crate::error::{Error, Result};

pub type NodeId = u32;

pub const FALSE: NodeId = 0;
pub const TRUE: NodeId = 1;
pub const DEFAULT_VAR_CAP: usize = 64;
/// Satisfying-assignment counts are kept in `u128`.
const HARD_VAR_CAP: usize = 120;

const TERMINAL_VAR: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub var: u32,
    pub low: NodeId,
    pub high: NodeId,
}

/// A reduced ordered BDD with its own node table. Node 0 and node 1 are the
/// terminals; the table holds exactly the nodes reachable from `root`, in a
/// canonical order, so equivalent functions compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bdd {
    nodes: Vec<Node>,
    root: NodeId,
    num_vars: usize,
}

impl Bdd {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Node {
        self.nodes[id as usize]
    }

    fn level(&self, id: NodeId) -> usize {
        match self.nodes[id as usize].var {
            TERMINAL_VAR => self.num_vars,
            v => v as usize,
        }
    }

    /// Evaluate under a full assignment (`bits[v]` for variable `v`).
    pub fn eval(&self, bits: impl Fn(usize) -> bool) -> bool {
        let mut n = self.root;
        while n > TRUE {
            let node = self.nodes[n as usize];
            n = if bits(node.var as usize) { node.high } else { node.low };
        }
        n == TRUE
    }

    pub fn sat_count(&self) -> u128 {
        let mut memo: HashMap<NodeId, u128> = HashMap::new();
        fn count(b: &Bdd, n: NodeId, memo: &mut HashMap<NodeId, u128>) -> u128 {
            match n {
                FALSE => 0,
                TRUE => 1,
                _ => {
                    if let Some(&c) = memo.get(&n) {
                        return c;
                    }
                    let node = b.nodes[n as usize];
                    let lvl = node.var as usize;
                    let lo = count(b, node.low, memo) << (b.level(node.low) - lvl - 1);
                    let hi = count(b, node.high, memo) << (b.level(node.high) - lvl - 1);
                    memo.insert(n, lo + hi);
                    lo + hi
                }
            }
        }
        count(self, self.root, &mut memo) << self.level(self.root)
    }
}

struct Builder {
    nodes: Vec<Node>,
    unique: HashMap<Node, NodeId>,
    and_cache: HashMap<(NodeId, NodeId), NodeId>,
    or_cache: HashMap<(NodeId, NodeId), NodeId>,
    not_cache: HashMap<NodeId, NodeId>,
}

impl Builder {
    fn new() -> Self {
        let term = |_| Node { var: TERMINAL_VAR, low: 0, high: 0 };
        Self {
            nodes: (0..2).map(term).collect(),
            unique: HashMap::new(),
            and_cache: HashMap::new(),
            or_cache: HashMap::new(),
            not_cache: HashMap::new(),
        }
    }

    fn var(&self, n: NodeId) -> u32 {
        self.nodes[n as usize].var
    }

    fn mk(&mut self, var: u32, low: NodeId, high: NodeId) -> NodeId {
        if low == high {
            return low;
        }
        let node = Node { var, low, high };
        if let Some(&id) = self.unique.get(&node) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        self.unique.insert(node, id);
        id
    }

    fn not(&mut self, a: NodeId) -> NodeId {
        match a {
            FALSE => TRUE,
            TRUE => FALSE,
            _ => {
                if let Some(&r) = self.not_cache.get(&a) {
                    return r;
                }
                let n = self.nodes[a as usize];
                let (lo, hi) = (self.not(n.low), self.not(n.high));
                let r = self.mk(n.var, lo, hi);
                self.not_cache.insert(a, r);
                r
            }
        }
    }

    fn cofactors(&self, n: NodeId, v: u32) -> (NodeId, NodeId) {
        let node = self.nodes[n as usize];
        if node.var == v {
            (node.low, node.high)
        } else {
            (n, n)
        }
    }

    fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (a, b) {
            (FALSE, _) | (_, FALSE) => return FALSE,
            (TRUE, x) | (x, TRUE) => return x,
            _ if a == b => return a,
            _ => {}
        }
        let key = (a.min(b), a.max(b));
        if let Some(&r) = self.and_cache.get(&key) {
            return r;
        }
        let v = self.var(a).min(self.var(b));
        let (a0, a1) = self.cofactors(a, v);
        let (b0, b1) = self.cofactors(b, v);
        let lo = self.and(a0, b0);
        let hi = self.and(a1, b1);
        let r = self.mk(v, lo, hi);
        self.and_cache.insert(key, r);
        r
    }

    fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (a, b) {
            (TRUE, _) | (_, TRUE) => return TRUE,
            (FALSE, x) | (x, FALSE) => return x,
            _ if a == b => return a,
            _ => {}
        }
        let key = (a.min(b), a.max(b));
        if let Some(&r) = self.or_cache.get(&key) {
            return r;
        }
        let v = self.var(a).min(self.var(b));
        let (a0, a1) = self.cofactors(a, v);
        let (b0, b1) = self.cofactors(b, v);
        let lo = self.or(a0, b0);
        let hi = self.or(a1, b1);
        let r = self.mk(v, lo, hi);
        self.or_cache.insert(key, r);
        r
    }

    /// At least `m` of `vars` (ascending) are true. Linear in `|vars| * m`.
    fn threshold(&mut self, vars: &[u32], m: usize) -> NodeId {
        if m == 0 {
            return TRUE;
        }
        if m > vars.len() {
            return FALSE;
        }
        // row[c] = "at least c more among vars[j..]", for the current j.
        let mut row: Vec<NodeId> = (0..=m).map(|c| if c == 0 { TRUE } else { FALSE }).collect();
        for &v in vars.iter().rev() {
            let mut next = row.clone();
            for c in 1..=m {
                next[c] = self.mk(v, row[c], row[c - 1]);
            }
            row = next;
        }
        row[m]
    }

    fn finish(&self, root: NodeId, num_vars: usize) -> Bdd {
        let mut map: HashMap<NodeId, NodeId> = HashMap::from([(FALSE, FALSE), (TRUE, TRUE)]);
        let mut nodes = self.nodes[..2].to_vec();
        fn visit(b: &Builder, n: NodeId, map: &mut HashMap<NodeId, NodeId>, nodes: &mut Vec<Node>) -> NodeId {
            if let Some(&m) = map.get(&n) {
                return m;
            }
            let node = b.nodes[n as usize];
            let low = visit(b, node.low, map, nodes);
            let high = visit(b, node.high, map, nodes);
            let id = nodes.len() as NodeId;
            nodes.push(Node { var: node.var, low, high });
            map.insert(n, id);
            id
        }
        let root = visit(self, root, &mut map, &mut nodes);
        Bdd { nodes, root, num_vars }
    }
}

/// BDD variable for proposition `prop` of agent `agent`.
pub fn var_index(agent: usize, prop: usize, n_props: usize) -> usize {
    agent * n_props + prop
}

/// Compile a DFA guard into a BDD over per-agent proposition variables.
pub fn guard_to_bdd(
    guard: &Guard,
    atoms: &[CountingProp],
    agents: usize,
    n_props: usize,
    var_cap: usize,
) -> Result<Bdd> {
    let needed = agents * n_props;
    let cap = var_cap.min(HARD_VAR_CAP);
    if needed > cap {
        return Err(Error::VariableCap { needed, limit: cap });
    }
    if agents == 0 {
        return Err(Error::Config("agent count must be at least 1".into()));
    }
    let mut b = Builder::new();
    let mut atom_nodes: HashMap<usize, NodeId> = HashMap::new();
    fn build(
        g: &Guard,
        b: &mut Builder,
        atoms: &[CountingProp],
        agents: usize,
        n_props: usize,
        memo: &mut HashMap<usize, NodeId>,
    ) -> NodeId {
        match g {
            Guard::True => TRUE,
            Guard::False => FALSE,
            Guard::Atom(j) => {
                if let Some(&n) = memo.get(j) {
                    return n;
                }
                let a = atoms[*j];
                let vars: Vec<u32> = (0..agents).map(|i| var_index(i, a.prop, n_props) as u32).collect();
                let n = b.threshold(&vars, a.threshold.value(agents));
                memo.insert(*j, n);
                n
            }
            Guard::Not(g) => {
                let n = build(g, b, atoms, agents, n_props, memo);
                b.not(n)
            }
            Guard::And(gs) => {
                let mut acc = TRUE;
                for g in gs {
                    let n = build(g, b, atoms, agents, n_props, memo);
                    acc = b.and(acc, n);
                }
                acc
            }
            Guard::Or(gs) => {
                let mut acc = FALSE;
                for g in gs {
                    let n = build(g, b, atoms, agents, n_props, memo);
                    acc = b.or(acc, n);
                }
                acc
            }
        }
    }
    let root = build(guard, &mut b, atoms, agents, n_props, &mut atom_nodes);
    Ok(b.finish(root, needed))
}

/// Conjunction of literals over one agent's propositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct AgentLiteral {
    /// Propositions required true.
    pub pos: Letter,
    /// Propositions required false.
    pub neg: Letter,
}

impl AgentLiteral {
    pub const TRUE: AgentLiteral = AgentLiteral { pos: 0, neg: 0 };

    pub fn matches(&self, letter: Letter) -> bool {
        letter & self.pos == self.pos && letter & self.neg == 0
    }

    pub fn letter_count(&self, n_props: usize) -> u128 {
        1u128 << (n_props - (self.pos | self.neg).count_ones() as usize)
    }

    pub fn display<'a>(&'a self, props: &'a Propositions) -> impl fmt::Display + 'a {
        crate::cltl::DisplayWith(move |f: &mut fmt::Formatter<'_>| {
            let mut lits = Vec::new();
            for p in 0..props.len() {
                if self.pos & (1 << p) != 0 {
                    lits.push(props.name(p).to_string());
                } else if self.neg & (1 << p) != 0 {
                    lits.push(format!("!{}", props.name(p)));
                }
            }
            if lits.is_empty() {
                write!(f, "true")
            } else {
                write!(f, "{}", lits.join(" & "))
            }
        })
    }
}

/// `α = ∧_i α^i`: one literal conjunction per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentCube {
    pub literals: Vec<AgentLiteral>,
}

impl AgentCube {
    pub fn matches(&self, joint: &[Letter]) -> bool {
        self.literals.iter().zip(joint).all(|(l, &x)| l.matches(x))
    }

    pub fn letter_count(&self, n_props: usize) -> u128 {
        self.literals.iter().map(|l| l.letter_count(n_props)).product()
    }

    pub fn display<'a>(&'a self, props: &'a Propositions) -> impl fmt::Display + 'a {
        crate::cltl::DisplayWith(move |f: &mut fmt::Formatter<'_>| {
            for (i, l) in self.literals.iter().enumerate() {
                if i > 0 {
                    write!(f, " ; ")?;
                }
                write!(f, "({})", l.display(props))?;
            }
            Ok(())
        })
    }
}

/// One cube per 1-path of the reduced BDD. Requires agent-major variable order.
pub fn extract_cubes(bdd: &Bdd, agents: usize) -> Vec<AgentCube> {
    let n_props = bdd.num_vars() / agents.max(1);
    let mut out = Vec::new();
    let mut path: Vec<(u32, bool)> = Vec::new();
    fn walk(b: &Bdd, n: NodeId, n_props: usize, agents: usize, path: &mut Vec<(u32, bool)>, out: &mut Vec<AgentCube>) {
        match n {
            FALSE => {}
            TRUE => {
                let mut literals = vec![AgentLiteral::TRUE; agents];
                for &(v, val) in path.iter() {
                    let (agent, prop) = (v as usize / n_props, v as usize % n_props);
                    if val {
                        literals[agent].pos |= 1 << prop;
                    } else {
                        literals[agent].neg |= 1 << prop;
                    }
                }
                out.push(AgentCube { literals });
            }
            _ => {
                let node = b.node(n);
                path.push((node.var, false));
                walk(b, node.low, n_props, agents, path, out);
                path.pop();
                path.push((node.var, true));
                walk(b, node.high, n_props, agents, path, out);
                path.pop();
            }
        }
    }
    walk(bdd, bdd.root(), n_props, agents, &mut path, &mut out);
    out
}

/// Cube lists for every transition of a DFA, in transition order.
#[derive(Debug, Clone)]
pub struct TransitionCubes {
    pub agents: usize,
    pub n_props: usize,
    pub per_transition: Vec<Vec<AgentCube>>,
}

/// Expand all guards of `dfa` for `agents` agents. Guards are independent and
/// built in parallel, each with its own node table.
pub fn expand_guards(dfa: &Dfa, agents: usize, var_cap: usize) -> Result<TransitionCubes> {
    let n_props = dfa.props().len();
    let per_transition = dfa
        .transitions()
        .par_iter()
        .map(|t| {
            let bdd = guard_to_bdd(&t.guard, dfa.atoms(), agents, n_props, var_cap)?;
            Ok(extract_cubes(&bdd, agents))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionCubes { agents, n_props, per_transition })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeCount {
    pub from: usize,
    pub to: usize,
    pub cubes: usize,
    /// Number of joint letters covered, as a decimal string (may exceed 2^64).
    pub letters: String,
}

pub fn cube_count_report(dfa: &Dfa, cubes: &TransitionCubes) -> Vec<CubeCount> {
    dfa.transitions()
        .iter()
        .zip(&cubes.per_transition)
        .map(|(t, cs)| CubeCount {
            from: t.from,
            to: t.to,
            cubes: cs.len(),
            letters: cs.iter().map(|c| c.letter_count(cubes.n_props)).sum::<u128>().to_string(),
        })
        .collect()
}
