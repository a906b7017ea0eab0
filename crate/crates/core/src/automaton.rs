//! Formula → DFA compilation.
//!
//! States are residual obligations: monotone DNFs over "pending" formulas
//! (atoms, negated atoms, `X` and `U` nodes that must hold from the next
//! position on). Derivatives are taken per atom assignment, so the alphabet is
//! `2^atoms`. Absorption keeps the DNFs canonical, which bounds the state
//! space. The reachable automaton is then minimized with Hopcroft's
//! partition refinement.
//!
//! The accepting residual is the empty conjunction, so there is exactly one
//! accepting state and it is absorbing.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cltl::{eval_counting_prop, CountingProp, DisplayWith, Formula, Letter, Propositions};
use crate::error::{Error, Result};

pub const MAX_ATOMS: usize = 20;
pub const MAX_STATES: usize = 10_000;

/// Truth assignment to the automaton's atoms; bit `j` is atom `j`.
pub type Assignment = u32;

pub type StateId = usize;

/// Boolean combination of counting atoms (indices into [`Dfa::atoms`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    True,
    False,
    Atom(usize),
    Not(Box<Guard>),
    And(Vec<Guard>),
    Or(Vec<Guard>),
}

impl Guard {
    pub fn eval(&self, asg: Assignment) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Atom(j) => asg & (1 << j) != 0,
            Guard::Not(g) => !g.eval(asg),
            Guard::And(gs) => gs.iter().all(|g| g.eval(asg)),
            Guard::Or(gs) => gs.iter().any(|g| g.eval(asg)),
        }
    }

    fn and(a: Guard, b: Guard) -> Guard {
        let mut parts = Vec::new();
        for g in [a, b] {
            match g {
                Guard::And(gs) => parts.extend(gs),
                g => parts.push(g),
            }
        }
        Guard::And(parts)
    }

    fn or(a: Guard, b: Guard) -> Guard {
        let mut parts = Vec::new();
        for g in [a, b] {
            match g {
                Guard::Or(gs) => parts.extend(gs),
                g => parts.push(g),
            }
        }
        Guard::Or(parts)
    }

    /// Shannon expansion of the indicator `set` over atoms `0..vars`.
    fn from_indicator(set: &[bool], vars: usize) -> Guard {
        if vars == 0 {
            return if set[0] { Guard::True } else { Guard::False };
        }
        let v = vars - 1;
        let half = set.len() / 2;
        let lo = Guard::from_indicator(&set[..half], v);
        let hi = Guard::from_indicator(&set[half..], v);
        let pos = Guard::Atom(v);
        let neg = Guard::Not(Box::new(Guard::Atom(v)));
        match (lo, hi) {
            (lo, hi) if lo == hi => lo,
            (Guard::False, Guard::True) => pos,
            (Guard::True, Guard::False) => neg,
            (lo, Guard::False) => Guard::and(neg, lo),
            (Guard::False, hi) => Guard::and(pos, hi),
            (lo, Guard::True) => Guard::or(pos, lo),
            (Guard::True, hi) => Guard::or(neg, hi),
            (lo, hi) => Guard::or(Guard::and(pos, hi), Guard::and(neg, lo)),
        }
    }

    pub fn display<'a>(&'a self, atoms: &'a [CountingProp], props: &'a Propositions) -> impl fmt::Display + 'a {
        DisplayWith(move |f: &mut fmt::Formatter<'_>| write_guard(self, atoms, props, f))
    }
}

fn write_guard(g: &Guard, atoms: &[CountingProp], props: &Propositions, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let join = |gs: &[Guard], sep: &str, f: &mut fmt::Formatter<'_>| -> fmt::Result {
        write!(f, "(")?;
        for (i, g) in gs.iter().enumerate() {
            if i > 0 {
                write!(f, " {sep} ")?;
            }
            write_guard(g, atoms, props, f)?;
        }
        write!(f, ")")
    };
    match g {
        Guard::True => write!(f, "true"),
        Guard::False => write!(f, "false"),
        Guard::Atom(j) => write!(f, "{}", atoms[*j].display(props)),
        Guard::Not(g) => {
            write!(f, "!")?;
            write_guard(g, atoms, props, f)
        }
        Guard::And(gs) => join(gs, "&", f),
        Guard::Or(gs) => join(gs, "|", f),
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub guard: Guard,
}

#[derive(Debug, Clone)]
pub struct Dfa {
    props: Propositions,
    atoms: Vec<CountingProp>,
    n_states: usize,
    initial: StateId,
    accepting: StateId,
    sink: Option<StateId>,
    /// `table[q << atoms.len() | asg]`
    table: Vec<u32>,
    transitions: Vec<Transition>,
}

impl Dfa {
    pub fn props(&self) -> &Propositions {
        &self.props
    }

    pub fn atoms(&self) -> &[CountingProp] {
        &self.atoms
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn accepting(&self) -> StateId {
        self.accepting
    }

    pub fn sink(&self) -> Option<StateId> {
        self.sink
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn n_assignments(&self) -> usize {
        1 << self.atoms.len()
    }

    pub fn step(&self, q: StateId, asg: Assignment) -> StateId {
        self.table[(q << self.atoms.len()) | asg as usize] as StateId
    }

    pub fn step_letter(&self, q: StateId, letter: &[Letter]) -> StateId {
        self.step(q, letter_to_assignment(letter, &self.atoms))
    }

    /// Runs `word` from the initial state. Returns the final state and the
    /// first index `t` with `q[t+1] = q_f`.
    pub fn run(&self, word: &[Assignment]) -> (StateId, Option<usize>) {
        let mut q = self.initial;
        let mut hit = None;
        for (t, &a) in word.iter().enumerate() {
            q = self.step(q, a);
            if hit.is_none() && q == self.accepting {
                hit = Some(t);
            }
        }
        (q, hit)
    }

    pub fn to_document(&self) -> DfaDocument {
        DfaDocument {
            atoms: self.atoms.iter().map(|a| a.display(&self.props).to_string()).collect(),
            states: self.n_states,
            initial: self.initial,
            accepting: self.accepting,
            sink: self.sink,
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionDocument {
                    from: t.from,
                    to: t.to,
                    guard: t.guard.display(&self.atoms, &self.props).to_string(),
                })
                .collect(),
        }
    }
}

/// Serializable view of a [`Dfa`] for reports and golden files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaDocument {
    pub atoms: Vec<String>,
    pub states: usize,
    pub initial: StateId,
    pub accepting: StateId,
    pub sink: Option<StateId>,
    pub transitions: Vec<TransitionDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDocument {
    pub from: StateId,
    pub to: StateId,
    pub guard: String,
}

pub fn letter_to_assignment(letter: &[Letter], atoms: &[CountingProp]) -> Assignment {
    atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| eval_counting_prop(letter, a))
        .fold(0, |acc, (j, _)| acc | (1 << j))
}

// ---------------------------------------------------------------------------
// Derivative construction

type Term = BTreeSet<u32>;
type Dnf = BTreeSet<Term>;

fn dnf_true() -> Dnf {
    BTreeSet::from([Term::new()])
}

fn product(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Dnf::new();
    for x in a {
        for y in b {
            out.insert(x.union(y).copied().collect());
        }
    }
    out
}

/// Drop terms that contain another term.
fn absorb(dnf: Dnf) -> Dnf {
    let mut terms: Vec<Term> = dnf.into_iter().collect();
    terms.sort_by_key(|t| t.len());
    let mut kept: Vec<Term> = Vec::new();
    for t in terms {
        if !kept.iter().any(|k| k.is_subset(&t)) {
            kept.push(t);
        }
    }
    kept.into_iter().collect()
}

/// True when `f` holds regardless of what follows (constants through `&`, `|`, `X`).
fn trivially_true(f: &Formula) -> bool {
    match f {
        Formula::True => true,
        Formula::False | Formula::Atom(_) | Formula::NegAtom(_) | Formula::Until(..) => false,
        Formula::And(a, b) => trivially_true(a) && trivially_true(b),
        Formula::Or(a, b) => trivially_true(a) || trivially_true(b),
        Formula::Next(a) => trivially_true(a),
    }
}

struct Derivatives<'a> {
    atoms: &'a [CountingProp],
    pending: Vec<Formula>,
    index: HashMap<Formula, u32>,
    cache: HashMap<(u32, Assignment), Dnf>,
}

impl Derivatives<'_> {
    fn intern(&mut self, f: &Formula) -> u32 {
        if let Some(&id) = self.index.get(f) {
            return id;
        }
        let id = self.pending.len() as u32;
        self.pending.push(f.clone());
        self.index.insert(f.clone(), id);
        id
    }

    fn atom_value(&self, a: &CountingProp, asg: Assignment) -> bool {
        let j = self.atoms.iter().position(|x| x == a).expect("atom collected from formula");
        asg & (1 << j) != 0
    }

    /// Obligation that `f` holds from the next position on.
    fn pend(&mut self, f: &Formula) -> Dnf {
        if trivially_true(f) {
            return dnf_true();
        }
        match f {
            Formula::False => Dnf::new(),
            Formula::And(a, b) => {
                let (a, b) = (self.pend(a), self.pend(b));
                product(&a, &b)
            }
            Formula::Or(a, b) => {
                let mut a = self.pend(a);
                a.extend(self.pend(b));
                a
            }
            other => BTreeSet::from([Term::from([self.intern(other)])]),
        }
    }

    fn deriv(&mut self, f: &Formula, asg: Assignment) -> Dnf {
        match f {
            Formula::True => dnf_true(),
            Formula::False => Dnf::new(),
            Formula::Atom(a) => {
                if self.atom_value(a, asg) {
                    dnf_true()
                } else {
                    Dnf::new()
                }
            }
            Formula::NegAtom(a) => {
                if self.atom_value(a, asg) {
                    Dnf::new()
                } else {
                    dnf_true()
                }
            }
            Formula::And(a, b) => {
                let (a, b) = (self.deriv(a, asg), self.deriv(b, asg));
                product(&a, &b)
            }
            Formula::Or(a, b) => {
                let mut a = self.deriv(a, asg);
                a.extend(self.deriv(b, asg));
                a
            }
            Formula::Next(a) => self.pend(a),
            Formula::Until(a, b) => {
                let mut out = self.deriv(b, asg);
                let stay = self.deriv(a, asg);
                if !stay.is_empty() {
                    let me = BTreeSet::from([Term::from([self.intern(f)])]);
                    out.extend(product(&stay, &me));
                }
                out
            }
        }
    }

    fn deriv_pending(&mut self, id: u32, asg: Assignment) -> Dnf {
        if let Some(d) = self.cache.get(&(id, asg)) {
            return d.clone();
        }
        let f = self.pending[id as usize].clone();
        let d = self.deriv(&f, asg);
        self.cache.insert((id, asg), d.clone());
        d
    }

    fn step(&mut self, state: &Dnf, asg: Assignment) -> Dnf {
        let mut out = Dnf::new();
        for term in state {
            let mut acc = dnf_true();
            for &id in term {
                let d = self.deriv_pending(id, asg);
                acc = product(&acc, &d);
                if acc.is_empty() {
                    break;
                }
            }
            out.extend(acc);
        }
        absorb(out)
    }
}

/// Compile a formula (thresholds resolved or symbolic) to a minimal DFA over
/// its atom assignments.
pub fn compile_dfa(f: &Formula, props: &Propositions) -> Result<Dfa> {
    let atoms = f.atoms();
    if atoms.len() > MAX_ATOMS {
        return Err(Error::TooManyAtoms { count: atoms.len(), limit: MAX_ATOMS });
    }
    let k = atoms.len();
    let n_asg = 1usize << k;

    let mut der = Derivatives { atoms: &atoms, pending: Vec::new(), index: HashMap::new(), cache: HashMap::new() };
    let init = absorb(der.pend(f));
    let mut states: Vec<Dnf> = vec![init.clone()];
    let mut index: HashMap<Dnf, usize> = HashMap::from([(init, 0)]);
    let mut table: Vec<u32> = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let s = states[next].clone();
        for asg in 0..n_asg as Assignment {
            let d = der.step(&s, asg);
            let id = match index.get(&d) {
                Some(&id) => id,
                None => {
                    if states.len() >= MAX_STATES {
                        return Err(Error::TooManyStates { limit: MAX_STATES });
                    }
                    let id = states.len();
                    states.push(d.clone());
                    index.insert(d, id);
                    id
                }
            };
            table.push(id as u32);
        }
        next += 1;
    }
    // The accepting residual always exists, even when unreachable.
    let acc_dnf = dnf_true();
    if !index.contains_key(&acc_dnf) {
        let id = states.len();
        states.push(acc_dnf.clone());
        index.insert(acc_dnf.clone(), id);
        table.extend(std::iter::repeat_n(id as u32, n_asg));
    }
    let accepting_raw = index[&acc_dnf];
    let n_raw = states.len();
    let is_acc: Vec<bool> = (0..n_raw).map(|q| q == accepting_raw).collect();

    let class = hopcroft(n_raw, n_asg, &table, &is_acc);
    Ok(renumber(props.clone(), atoms, &class, &table, n_raw, n_asg, accepting_raw))
}

/// Hopcroft partition refinement. Returns a block id per state.
fn hopcroft(n: usize, n_sym: usize, table: &[u32], accepting: &[bool]) -> Vec<usize> {
    // Collapse assignments that act identically on every state.
    let mut sym_class: Vec<usize> = Vec::with_capacity(n_sym);
    let mut reps: Vec<usize> = Vec::new();
    let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
    for a in 0..n_sym {
        let col: Vec<u32> = (0..n).map(|q| table[q * n_sym + a]).collect();
        let c = *seen.entry(col).or_insert_with(|| {
            reps.push(a);
            reps.len() - 1
        });
        sym_class.push(c);
    }
    let n_cls = reps.len();

    // inverse[c][target] -> sources
    let mut inverse: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; n_cls];
    for q in 0..n {
        for (c, &a) in reps.iter().enumerate() {
            inverse[c][table[q * n_sym + a] as usize].push(q);
        }
    }

    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut block_of = vec![0usize; n];
    let (acc, rej): (Vec<usize>, Vec<usize>) = (0..n).partition(|&q| accepting[q]);
    for part in [acc, rej] {
        if !part.is_empty() {
            let id = blocks.len();
            for &q in &part {
                block_of[q] = id;
            }
            blocks.push(part);
        }
    }
    let mut work: VecDeque<(usize, usize)> = VecDeque::new();
    let mut in_work: std::collections::HashSet<(usize, usize)> = Default::default();
    if blocks.len() == 2 {
        let small = if blocks[0].len() <= blocks[1].len() { 0 } else { 1 };
        for c in 0..n_cls {
            work.push_back((small, c));
            in_work.insert((small, c));
        }
    }

    let mut hits = vec![0usize; n];
    while let Some((a, c)) = work.pop_front() {
        in_work.remove(&(a, c));
        let mut pre: Vec<usize> = blocks[a].iter().flat_map(|&t| inverse[c][t].iter().copied()).collect();
        pre.sort_unstable();
        pre.dedup();
        let mut touched: Vec<usize> = Vec::new();
        for &q in &pre {
            let b = block_of[q];
            if hits[b] == 0 {
                touched.push(b);
            }
            hits[b] += 1;
        }
        for b in touched {
            let h = std::mem::take(&mut hits[b]);
            if h == blocks[b].len() {
                continue;
            }
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                blocks[b].iter().partition(|q| pre.binary_search(q).is_ok());
            let new = blocks.len();
            for &q in &inside {
                block_of[q] = new;
            }
            blocks[b] = outside;
            blocks.push(inside);
            for d in 0..n_cls {
                if in_work.contains(&(b, d)) {
                    work.push_back((new, d));
                    in_work.insert((new, d));
                } else {
                    let pick = if blocks[new].len() <= blocks[b].len() { new } else { b };
                    work.push_back((pick, d));
                    in_work.insert((pick, d));
                }
            }
        }
    }
    block_of
}

fn renumber(
    props: Propositions,
    atoms: Vec<CountingProp>,
    class: &[usize],
    table: &[u32],
    n_raw: usize,
    n_asg: usize,
    accepting_raw: usize,
) -> Dfa {
    // Representative raw state per class.
    let n_cls = class.iter().max().map_or(0, |m| m + 1);
    let mut rep = vec![usize::MAX; n_cls];
    for q in 0..n_raw {
        if rep[class[q]] == usize::MAX {
            rep[class[q]] = q;
        }
    }
    // Breadth-first numbering from the initial state.
    let mut new_id = vec![usize::MAX; n_cls];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([class[0]]);
    new_id[class[0]] = 0;
    order.push(class[0]);
    while let Some(c) = queue.pop_front() {
        for a in 0..n_asg {
            let t = class[table[rep[c] * n_asg + a] as usize];
            if new_id[t] == usize::MAX {
                new_id[t] = order.len();
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let acc_cls = class[accepting_raw];
    if new_id[acc_cls] == usize::MAX {
        new_id[acc_cls] = order.len();
        order.push(acc_cls);
    }
    let n = order.len();
    let mut new_table = vec![0u32; n * n_asg];
    for (i, &c) in order.iter().enumerate() {
        for a in 0..n_asg {
            new_table[i * n_asg + a] = new_id[class[table[rep[c] * n_asg + a] as usize]] as u32;
        }
    }
    let accepting = new_id[acc_cls];

    // Sink: a state that cannot reach the accepting state. After minimization
    // there is at most one.
    let mut co_reach = vec![false; n];
    co_reach[accepting] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for q in 0..n {
            if !co_reach[q] && (0..n_asg).any(|a| co_reach[new_table[q * n_asg + a] as usize]) {
                co_reach[q] = true;
                changed = true;
            }
        }
    }
    let sink = (0..n).find(|&q| !co_reach[q]);

    let k = atoms.len();
    let mut transitions = Vec::new();
    for q in 0..n {
        let mut targets: Vec<usize> = (0..n_asg).map(|a| new_table[q * n_asg + a] as usize).collect();
        targets.sort_unstable();
        targets.dedup();
        for to in targets {
            let set: Vec<bool> = (0..n_asg).map(|a| new_table[q * n_asg + a] as usize == to).collect();
            transitions.push(Transition { from: q, to, guard: Guard::from_indicator(&set, k) });
        }
    }

    Dfa { props, atoms, n_states: n, initial: 0, accepting, sink, table: new_table, transitions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cltl::{parse, Threshold};

    fn props2() -> Propositions {
        Propositions::new(["p1", "p2"]).unwrap()
    }

    fn words(len: usize, n_asg: u32) -> Vec<Vec<Assignment>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|w| {
                    (0..n_asg).map(move |a| {
                        let mut w = w.clone();
                        w.push(a);
                        w
                    })
                })
                .collect();
        }
        out
    }

    fn check_language(text: &str, props: &Propositions, max_len: usize) -> Dfa {
        let f = parse(text, props).unwrap();
        let dfa = compile_dfa(&f, props).unwrap();
        let atoms = dfa.atoms().to_vec();
        for len in 0..=max_len {
            for w in words(len, dfa.n_assignments() as u32) {
                let expected = crate::cltl::witness_index_with(&f, w.len(), |i, a| {
                    let j = atoms.iter().position(|x| x == a).unwrap();
                    w[i] & (1 << j) != 0
                });
                assert_eq!(dfa.run(&w).1, expected, "{text}: {w:?}");
            }
        }
        dfa
    }

    #[test]
    fn bare_atom_has_three_states() {
        let dfa = check_language("[p1, 2]", &props2(), 4);
        assert_eq!(dfa.n_states(), 3);
        assert!(dfa.sink().is_some());
        assert_eq!(dfa.step(dfa.initial(), 1), dfa.accepting());
        assert_eq!(Some(dfa.step(dfa.initial(), 0)), dfa.sink());
    }

    #[test]
    fn eventually_has_two_states() {
        let dfa = check_language("F [p1, 2]", &props2(), 4);
        assert_eq!(dfa.n_states(), 2);
        assert_eq!(dfa.sink(), None);
        assert_eq!(dfa.step(0, 0), 0);
        assert_eq!(dfa.step(0, 1), dfa.accepting());
        // First satisfying position is the acceptance index.
        assert_eq!(dfa.run(&[0, 0, 1, 0, 1]).1, Some(2));
        assert_eq!(dfa.run(&[]), (dfa.initial(), None));
    }

    #[test]
    fn until_matches_first_b_oracle() {
        let props = props2();
        let dfa = check_language("(! [p1, N/2]) U [p2, N/3]", &props, 4);
        // Atom 0 = a = [p1, N/2], atom 1 = b = [p2, N/3].
        assert_eq!(dfa.atoms()[0], CountingProp::new(0, Threshold::Agents { divisor: 2 }));
        for len in 0..=4 {
            for w in words(len, 4) {
                let a = |i: usize| w[i] & 1 != 0;
                let b = |i: usize| w[i] & 2 != 0;
                let expected = (0..w.len()).find(|&k| b(k)).filter(|&k| (0..k).all(|j| !a(j)));
                assert_eq!(dfa.run(&w).1, expected, "{w:?}");
            }
        }
        assert_eq!(dfa.n_states(), 3);
    }

    #[test]
    fn language_of_assorted_formulas() {
        let props = props2();
        for text in [
            "[p1,N] U ([p2,1] & [p1,N])",
            "[p1,N] & X [p1,N] & X X [p1,N] & X X X [p1, N]",
            "[p1, N/2] & F [p2, N/4]",
            "X X X [p1, 1]",
            "F (X [p1,1] | [p2,2] U [p1, 1])",
            "X true",
            "true",
            "false",
            "([p1,1] U [p2,1]) | ([p2,1] U [p1,1])",
        ] {
            check_language(text, &props, 4);
        }
    }

    fn assert_deterministic_total_minimal(dfa: &Dfa) {
        let n = dfa.n_states();
        for q in 0..n {
            for a in 0..dfa.n_assignments() as u32 {
                let hits: Vec<_> = dfa.transitions().iter().filter(|t| t.from == q && t.guard.eval(a)).collect();
                assert_eq!(hits.len(), 1, "state {q} asg {a}");
                assert_eq!(hits[0].to, dfa.step(q, a));
            }
            if q == dfa.accepting() {
                assert!((0..dfa.n_assignments() as u32).all(|a| dfa.step(q, a) == q));
            }
        }
        // Pairwise distinguishable: explore the pair graph.
        let acc = dfa.accepting();
        for p in 0..n {
            for q in p + 1..n {
                let mut seen = std::collections::HashSet::new();
                let mut stack = vec![(p, q)];
                let mut distinct = false;
                while let Some((x, y)) = stack.pop() {
                    if (x == acc) != (y == acc) {
                        distinct = true;
                        break;
                    }
                    if !seen.insert((x, y)) {
                        continue;
                    }
                    for a in 0..dfa.n_assignments() as u32 {
                        stack.push((dfa.step(x, a), dfa.step(y, a)));
                    }
                }
                assert!(distinct, "states {p} and {q} are equivalent");
            }
        }
    }

    #[test]
    fn compiled_automata_are_total_and_minimal() {
        let props = props2();
        for text in [
            "(! [p1, N/2]) U [p2, N/3]",
            "[p1,N] U ([p2,1] & [p1,N])",
            "[p1,N] & X [p1,N] & X X [p1,N] & X X X [p1,N] & X X X X [p1,N] & X X X X X [p1,N]",
            "[p1, N/2] & F [p2, N/4]",
            "F ([p1,1] & X [p2, 1])",
        ] {
            let dfa = compile_dfa(&parse(text, &props).unwrap(), &props).unwrap();
            assert_deterministic_total_minimal(&dfa);
        }
    }

    #[test]
    fn chain_of_nexts_has_linear_size() {
        let props = props2();
        let text = "[p1,N] & X [p1,N] & X X [p1,N] & X X X [p1,N] & X X X X [p1,N] & X X X X X [p1,N]";
        let dfa = compile_dfa(&parse(text, &props).unwrap(), &props).unwrap();
        // Six checking states, the accepting state and the sink.
        assert_eq!(dfa.n_states(), 8);
    }

    #[test]
    fn atom_cap() {
        let names: Vec<String> = (0..21).map(|i| format!("a{i}")).collect();
        let props = Propositions::new(names.clone()).unwrap();
        let text = names.iter().map(|n| format!("[{n}, 1]")).collect::<Vec<_>>().join(" | ");
        let err = compile_dfa(&parse(&text, &props).unwrap(), &props).unwrap_err();
        assert!(matches!(err, Error::TooManyAtoms { count: 21, limit: 20 }));
    }

    #[test]
    fn letter_assignment_examples() {
        let atoms = [CountingProp::new(0, Threshold::Const(1)), CountingProp::new(0, Threshold::Const(2))];
        assert_eq!(letter_to_assignment(&[1, 1], &atoms), 0b11);
        assert_eq!(letter_to_assignment(&[0, 0], &atoms[..1]), 0);
        // All 16 joint letters for two agents over {p, q}.
        let atoms = [CountingProp::new(0, Threshold::Const(2)), CountingProp::new(1, Threshold::Const(1))];
        for l0 in 0..4u32 {
            for l1 in 0..4u32 {
                let p = (l0 & 1) + (l1 & 1);
                let q = (l0 >> 1) + (l1 >> 1);
                let want = (p >= 2) as u32 | (((q >= 1) as u32) << 1);
                assert_eq!(letter_to_assignment(&[l0, l1], &atoms), want);
            }
        }
    }

    #[test]
    fn export_document() {
        let props = props2();
        let dfa = compile_dfa(&parse("[p1, 2]", &props).unwrap(), &props).unwrap();
        let doc = dfa.to_document();
        assert_eq!(doc.atoms, vec!["[p1, 2]".to_string()]);
        assert_eq!(doc.states, 3);
        let json = serde_json::to_string(&doc).unwrap();
        let back: DfaDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        assert!(doc.transitions.iter().any(|t| t.guard == "[p1, 2]" && t.to == doc.accepting));
        assert!(doc.transitions.iter().any(|t| t.guard == "![p1, 2]"));
    }
}
