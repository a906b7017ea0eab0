#![allow(dead_code)]

use dualtree::automaton::{compile_dfa, Dfa};
use dualtree::cltl::{parse, Propositions};
use dualtree::guards::{expand_guards, TransitionCubes};
use dualtree::model::SingleAgentMdp;
use dualtree::policy::{DecoupledStrategy, SharingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn props_pq() -> Propositions {
    Propositions::new(["p", "q"]).unwrap()
}

/// Random MDP over {p, q}; rows are normalized random weights with some zeros.
pub fn random_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> SingleAgentMdp {
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
            .collect();
        if row.iter().all(|&v| v == 0.0) {
            row[rng.random_range(0..n_states)] = 1.0;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
        let r: f64 = row.iter().sum();
        let last = row.iter().rposition(|&v| v > 0.0).unwrap();
        row[last] += 1.0 - r;
        kernel.extend(row);
    }
    let labels = (0..n_states).map(|_| rng.random_range(0..4u32)).collect();
    SingleAgentMdp::new(props_pq(), n_states, n_actions, kernel, labels).unwrap()
}

fn atom(rng: &mut ChaCha8Rng) -> String {
    let p = if rng.random_bool(0.5) { "p" } else { "q" };
    let m = rng.random_range(0..=2);
    let neg = if rng.random_bool(0.25) { "!" } else { "" };
    format!("{neg}[{p}, {m}]")
}

/// A formula from {atom, F atom, atom U atom, X-chains of depth <= 3}.
pub fn random_spec(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4) {
        0 => atom(rng),
        1 => format!("F {}", atom(rng)),
        2 => format!("({}) U ({})", atom(rng), atom(rng)),
        _ => {
            let depth = rng.random_range(1..=3);
            let mut f = atom(rng);
            for _ in 0..depth {
                f = format!("{} & X ({f})", atom(rng));
            }
            f
        }
    }
}

pub fn random_strategy(rng: &mut ChaCha8Rng, mdp: &SingleAgentMdp, dfa: &Dfa, agents: usize, mode: SharingMode) -> DecoupledStrategy {
    let mut s = DecoupledStrategy::new(mode, agents, dfa.n_states(), mdp).unwrap();
    for q in 0..dfa.n_states() {
        for g in 0..s.n_groups() {
            let map: Vec<u32> = (0..mdp.n_states()).map(|_| rng.random_range(0..mdp.n_actions() as u32)).collect();
            s.set_map(q, g, &map).unwrap();
        }
    }
    s
}

pub struct Instance {
    pub spec: String,
    pub mdp: SingleAgentMdp,
    pub dfa: Dfa,
    pub cubes: TransitionCubes,
    pub strategy: DecoupledStrategy,
}

/// Randomized small instance with N agents, |X_c| in 4..=6, |A_c| in 2..=3.
pub fn random_instance(seed: u64, agents: usize) -> Instance {
    let mut r = rng(seed);
    let nx = r.random_range(4..=6);
    let na = r.random_range(2..=3);
    let mdp = random_mdp(&mut r, nx, na);
    let spec = random_spec(&mut r);
    let dfa = compile_dfa(&parse(&spec, mdp.props()).unwrap().instantiate(agents), mdp.props()).unwrap();
    let cubes = expand_guards(&dfa, agents, 64).unwrap();
    let mode = if r.random_bool(0.5) { SharingMode::Shared } else { SharingMode::PerAgent };
    let strategy = random_strategy(&mut r, &mdp, &dfa, agents, mode);
    Instance { spec, mdp, dfa, cubes, strategy }
}

/// Every joint initial state for N agents over n states.
pub fn all_joint_states(n_states: usize, agents: usize) -> Vec<Vec<usize>> {
    let total = n_states.pow(agents as u32);
    (0..total)
        .map(|mut j| {
            (0..agents)
                .map(|_| {
                    let d = j % n_states;
                    j /= n_states;
                    d
                })
                .collect()
        })
        .collect()
}

pub fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// One of the bundled case-study configurations, `mu1` to `mu4`.
pub fn case_config(name: &str) -> dualtree::config::RunConfig {
    dualtree::config::RunConfig::load(configs_dir().join(format!("{name}.toml"))).unwrap()
}

pub const CASES: [&str; 4] = ["mu1", "mu2", "mu3", "mu4"];

/// Instantiated formula and its automaton for a case at N agents.
pub fn case_dfa(name: &str, agents: usize) -> (dualtree::cltl::Formula, Dfa) {
    let cfg = case_config(name);
    let props = cfg.propositions().unwrap();
    let f = parse(&cfg.formula, &props).unwrap().instantiate(agents);
    let dfa = compile_dfa(&f, &props).unwrap();
    (f, dfa)
}

/// Words over `n_sym` symbols of every length `1..=max_len`.
pub fn all_words(n_sym: u32, max_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| {
                (0..n_sym).map(move |s| {
                    let mut v = w.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}
