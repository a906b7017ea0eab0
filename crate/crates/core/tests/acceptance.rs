//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Failing criteria are reported
//! but only turn into a nonzero exit status when `ACCEPTANCE_STRICT=1`.

mod common;

use std::time::Instant;

use common::{all_joint_states, all_words, case_config, case_dfa, random_instance, rng, CASES};
use dualtree::automaton::{compile_dfa, letter_to_assignment};
use dualtree::cltl::{eval_trace, parse, witness_index_with, JointLetter, Propositions};
use dualtree::config::{Method, RunConfig};
use dualtree::dualtree::TreeLimits;
use dualtree::guards::expand_guards;
use dualtree::oracle::{flat_witness_tree_run, monolithic_evaluate, monte_carlo};
use dualtree::policy::EdgeSet;
use dualtree::run::{run_synthesis, sweep_agents, SweepRow};
use dualtree::synthesis::{run_tree, synthesize, Thresholds};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Criteria 1 and 2 share their instances.
fn oracle_and_flat_agreement() -> (Outcome, Outcome) {
    let start = Instant::now();
    let (mut worst_mono, mut worst_flat) = (0.0f64, 0.0f64);
    let (mut cases, mut k_ok, mut flat_k_ok) = (0, true, true);
    let n = 2;
    let t = 5;
    let instances = 60;
    for seed in 0..instances {
        let inst = random_instance(seed, n);
        let dual = run_tree(&inst.mdp, &inst.dfa, &inst.cubes, &inst.strategy, t, Thresholds::NONE, true, TreeLimits::default()).unwrap();
        let flat = flat_witness_tree_run(&inst.mdp, &inst.dfa, &inst.cubes, &inst.strategy, t, Thresholds::NONE, TreeLimits::default()).unwrap();
        k_ok &= dual.tree.n_single() <= dual.tree.n_multi() * n;
        flat_k_ok &= flat.tree.n_single() <= flat.tree.n_multi() * n;
        for x0 in all_joint_states(inst.mdp.n_states(), n) {
            let b = dual.tree.theorem1_bound(&inst.dfa, &inst.mdp, &x0).unwrap();
            let f = flat.tree.theorem1_bound(&inst.dfa, &inst.mdp, &x0).unwrap();
            let m = monolithic_evaluate(&inst.mdp, &inst.dfa, &inst.strategy, &x0, t, 1_000_000).unwrap();
            worst_mono = worst_mono.max((b - m).abs());
            worst_flat = worst_flat.max((b - f).abs());
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let c1 = outcome(
        worst_mono <= 1e-9 && secs < 120.0,
        format!("{instances} instances, {cases} initial states, max |tree - monolithic| = {worst_mono:.2e}, {secs:.1} s"),
    );
    let c2 = outcome(
        worst_flat <= 1e-12 && k_ok && flat_k_ok,
        format!("max |dual - flat| = {worst_flat:.2e}, |K| <= |Z| N on every dual tree: {k_ok}, on every flat tree: {flat_k_ok}"),
    );
    (c1, c2)
}

fn pruning_soundness() -> Outcome {
    let t = 5;
    let runs = 100_000;
    let mut violations = Vec::new();
    let mut checked = 0;
    for seed in 0..20u64 {
        let inst = random_instance(1000 + seed, 2);
        let x0 = vec![0, inst.mdp.n_states() - 1];
        let bound = |theta: f64| {
            let th = Thresholds { product: theta, single: Thresholds::default().single };
            let th = if theta == 0.0 { Thresholds::NONE } else { th };
            run_tree(&inst.mdp, &inst.dfa, &inst.cubes, &inst.strategy, t, th, true, TreeLimits::default())
                .unwrap()
                .tree
                .theorem1_bound(&inst.dfa, &inst.mdp, &x0)
                .unwrap()
        };
        let full = bound(0.0);
        let mc = monte_carlo(&inst.mdp, &inst.dfa, &inst.strategy, &x0, t, runs, seed).unwrap();
        for theta in [1e-3, 1e-6] {
            let p = bound(theta);
            checked += 1;
            if p > full + 1e-12 {
                violations.push(format!("seed {seed}: pruned {p} > unpruned {full}"));
            }
        }
        if full > mc.frequency + 3.0 * mc.std_error + 1e-12 {
            violations.push(format!("seed {seed}: unpruned {full} > simulated {} + 3 x {}", mc.frequency, mc.std_error));
        }
    }
    outcome(violations.is_empty(), format!("20 instances, {checked} pruned runs, {runs} simulations each; violations: {violations:?}"))
}

fn counting_expansion() -> Outcome {
    let props = Propositions::new(["p"]).unwrap();
    let dfa = compile_dfa(&parse("[p, 1]", &props).unwrap(), &props).unwrap();
    let cubes = expand_guards(&dfa, 6, 64).unwrap();
    let accept = dfa.transitions().iter().position(|t| t.from == dfa.initial() && t.to == dfa.accepting()).unwrap();
    let letters: u128 = cubes.per_transition[accept].iter().map(|c| c.letter_count(1)).sum();

    let mut bad = Vec::new();
    for name in CASES {
        for agents in 1..=4 {
            let (_, dfa) = case_dfa(name, agents);
            let cubes = expand_guards(&dfa, agents, 64).unwrap();
            let nl = 1usize << dfa.props().len();
            for q in 0..dfa.n_states() {
                for j in 0..nl.pow(agents as u32) {
                    let letter: JointLetter = (0..agents).map(|i| ((j / nl.pow(i as u32)) % nl) as u32).collect();
                    let asg = letter_to_assignment(&letter, dfa.atoms());
                    let mut hits = 0;
                    for (t, tr) in dfa.transitions().iter().enumerate().filter(|(_, tr)| tr.from == q) {
                        let n = cubes.per_transition[t].iter().filter(|c| c.matches(&letter)).count();
                        if (n > 0) != tr.guard.eval(asg) {
                            bad.push(format!("{name} N={agents} q={q} {letter:?}: cube/guard disagree"));
                        }
                        hits += n;
                    }
                    if hits != 1 {
                        bad.push(format!("{name} N={agents} q={q} {letter:?}: {hits} cubes"));
                    }
                }
            }
        }
    }
    bad.truncate(5);
    outcome(
        letters == 63 && bad.is_empty(),
        format!("[p, 1] at N = 6 covers {letters} joint letters; partition errors: {bad:?}"),
    )
}

fn dfa_semantics() -> Outcome {
    let mut bad = Vec::new();
    let mut words_checked = 0usize;
    let mut r = rng(11);
    for name in CASES {
        let (f, dfa) = case_dfa(name, 3);
        let atoms = dfa.atoms().to_vec();
        for word in all_words(dfa.n_assignments() as u32, 4) {
            let expected = witness_index_with(&f, word.len(), |t, a| {
                let k = atoms.iter().position(|b| b == a).unwrap();
                word[t] >> k & 1 == 1
            });
            words_checked += 1;
            if dfa.run(&word).1 != expected {
                bad.push(format!("{name}: assignment word {word:?}"));
            }
        }
        let nl = 1u32 << dfa.props().len();
        for _ in 0..10_000 {
            let len = r.random_range(1..=10);
            let word: Vec<JointLetter> = (0..len).map(|_| (0..3).map(|_| r.random_range(0..nl)).collect()).collect();
            let asg: Vec<u32> = word.iter().map(|l| letter_to_assignment(l, dfa.atoms())).collect();
            words_checked += 1;
            if dfa.run(&asg).1 != eval_trace(&word, &f) {
                bad.push(format!("{name}: joint word {word:?}"));
            }
        }
    }
    bad.truncate(5);
    outcome(bad.is_empty(), format!("{words_checked} words over the four case formulas at N = 3; mismatches: {bad:?}"))
}

fn table_reproduction() -> Outcome {
    let mut cfg = case_config("mu1");
    let target = cfg.expected.clone().expect("mu1 config carries the reference values");
    let mut bounds = Vec::new();
    let mut flags = Vec::new();
    for t in [10, 20] {
        cfg.horizon = t;
        let r = run_synthesis(&cfg).unwrap();
        bounds.push(r.results.iter().map(|x| x.bound).collect::<Vec<_>>());
        flags = r.flags;
    }
    let (b10, b20) = (&bounds[0], &bounds[1]);
    let saturated = b10.iter().zip(b20).all(|(a, b)| (a - b).abs() <= 1e-3);
    let col1 = b20[0] >= 0.9;
    let cols23: Vec<bool> = (1..3).map(|k| (b20[k] - target.bounds[k]).abs() <= 0.15).collect();
    let all_in = cols23.iter().all(|&x| x);
    let flagged = all_in || flags.iter().any(|f| f.contains("abstraction parameters"));
    outcome(
        saturated && col1 && all_in,
        format!(
            "T = 20 bounds {b20:.4?} (T = 10: {b10:.4?}, saturated: {saturated}); column 1 >= 0.9: {col1}; \
             columns 2, 3 within 0.15 of {:?}: {cols23:?}; report flags abstraction parameters: {flagged}",
            &target.bounds[1..]
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn sweep_rows(cfg: &RunConfig, ns: &[usize], method: Method, repeats: usize) -> Vec<(SweepRow, f64)> {
    let mut runs: Vec<Vec<SweepRow>> = (0..repeats).map(|_| sweep_agents(cfg, ns, &[method]).unwrap()).collect();
    let last = runs.pop().unwrap();
    last.into_iter()
        .enumerate()
        .map(|(k, row)| {
            let times: Vec<f64> = runs.iter().map(|r| r[k].wall_ms.unwrap_or(f64::NAN)).chain([row.wall_ms.unwrap_or(f64::NAN)]).collect();
            (row, median(times))
        })
        .collect()
}

fn scalability() -> Outcome {
    let start = Instant::now();
    let ns = [3, 6, 9, 12];
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["mu2", "mu3"] {
        let cfg = case_config(name);
        let rows = sweep_rows(&cfg, &ns, Method::Dual, 5);
        if rows.iter().any(|(r, _)| r.status != "ok") {
            ok = false;
            notes.push(format!("{name}: failed points"));
            continue;
        }
        let mem: Vec<usize> = rows.iter().map(|(r, _)| r.resident_vectors.unwrap()).collect();
        let time: Vec<f64> = rows.iter().map(|(_, t)| *t).collect();
        for k in 1..ns.len() {
            let allowed = 2.0 * ns[k] as f64 / ns[k - 1] as f64;
            let mg = mem[k] as f64 / mem[k - 1] as f64;
            let tg = time[k] / time[k - 1];
            ok &= mg <= allowed && tg <= allowed;
        }
        notes.push(format!("{name}: resident vectors {mem:?}, median wall ms {:.1?}", time));
    }
    let mut cfg = case_config("mu1");
    cfg.horizon = 2;
    let ns1 = [4, 6, 8];
    let dual = sweep_rows(&cfg, &ns1, Method::Dual, 1);
    let flat = sweep_rows(&cfg, &ns1, Method::Flat, 1);
    let mut ratios = Vec::new();
    for ((d, _), (f, _)) in dual.iter().zip(&flat) {
        match (d.peak_memory_bytes, f.peak_memory_bytes) {
            (Some(a), Some(b)) => ratios.push(b as f64 / a as f64),
            _ => {
                ok = false;
                notes.push(format!("mu1 N = {}: {} / {}", d.agents, d.error, f.error));
            }
        }
    }
    ok &= ratios.len() == ns1.len() && ratios.iter().all(|&r| r > 1.0) && ratios.windows(2).all(|w| w[1] >= w[0]);
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 1800.0;
    notes.push(format!("mu1 (T = 2) flat/dual peak memory ratio at N = {ns1:?}: {ratios:.1?}"));
    notes.push(format!("{secs:.1} s"));
    outcome(ok, notes.join("; "))
}

fn policy_ascent() -> Outcome {
    let t = 5;
    let mut bad = Vec::new();
    let mut states = 0;
    let mut deterministic = true;
    let mut improved = 0;
    let mut kept = 0;
    for seed in 0..20u64 {
        let inst = random_instance(2000 + seed, 2);
        let before = run_tree(&inst.mdp, &inst.dfa, &inst.cubes, &inst.strategy, t, Thresholds::NONE, true, TreeLimits::default())
            .unwrap()
            .tree;
        for x0 in all_joint_states(inst.mdp.n_states(), 2) {
            let go = || {
                let reference = std::slice::from_ref(&x0);
                synthesize(&inst.mdp, &inst.dfa, &inst.cubes, &inst.strategy, t, Thresholds::NONE, 1, EdgeSet::All, true, TreeLimits::default(), reference)
                    .unwrap()
            };
            let (a, b) = (go(), go());
            let p0 = before.theorem1_bound(&inst.dfa, &inst.mdp, &x0).unwrap();
            let p1 = a.certified.tree.theorem1_bound(&inst.dfa, &inst.mdp, &x0).unwrap();
            let p2 = b.certified.tree.theorem1_bound(&inst.dfa, &inst.mdp, &x0).unwrap();
            states += 1;
            kept += a.kept_initial as usize;
            deterministic &= p1.to_bits() == p2.to_bits() && a.strategy.to_table(&inst.mdp) == b.strategy.to_table(&inst.mdp);
            if p1 < p0 - 1e-12 {
                bad.push(format!("seed {seed} {x0:?}: {p1} < {p0}"));
            } else if p1 > p0 + 1e-12 {
                improved += 1;
            }
        }
    }
    let n_bad = bad.len();
    bad.truncate(5);
    outcome(
        n_bad == 0 && deterministic,
        format!(
            "20 instances, {states} initial states, {improved} strictly improved, {kept} kept the initial strategy, \
             {n_bad} decreased {bad:?}; repeat runs identical: {deterministic}"
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let (c1, c2) = oracle_and_flat_agreement();
    results.push((1, "oracle equivalence", c1));
    results.push((2, "dual/flat agreement", c2));
    results.push((3, "pruning soundness", pruning_soundness()));
    results.push((4, "counting expansion", counting_expansion()));
    results.push((5, "automaton semantics", dfa_semantics()));
    results.push((6, "reference table", table_reproduction()));
    results.push((7, "scalability trends", scalability()));
    results.push((8, "optimization ascent", policy_ascent()));
    let mut passed = 0;
    for (k, name, o) in &results {
        println!("criterion {k} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        passed += o.pass as usize;
    }
    println!("acceptance: {passed}/{} criteria pass in {:.1} s", results.len(), start.elapsed().as_secs_f64());
    if passed < results.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
