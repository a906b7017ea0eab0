//! Reference evaluations: exact product-space recursion, Monte Carlo, and the
//! flat witness tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::automaton::{letter_to_assignment, Assignment, Dfa};
use crate::dualtree::TreeLimits;
use crate::error::{Error, Result};
use crate::guards::TransitionCubes;
use crate::model::{joint_label, SingleAgentMdp};
use crate::policy::DecoupledStrategy;
use crate::synthesis::{run_tree, Thresholds, TreeRun};

pub const DEFAULT_MONOLITHIC_BUDGET: usize = 1_000_000;

fn check_x0(mdp: &SingleAgentMdp, strategy: &DecoupledStrategy, x0: &[usize]) -> Result<()> {
    if x0.len() != strategy.agents() {
        return Err(Error::DimensionMismatch { expected: strategy.agents(), got: x0.len() });
    }
    if let Some(&x) = x0.iter().find(|&&x| x >= mdp.n_states()) {
        return Err(Error::InvalidInitialState(format!("state {x} out of range")));
    }
    Ok(())
}

/// Exact probability that the DFA reaches `q_f` within `horizon` steps
/// (letters `L(x[0]), ..., L(x[horizon])`) under the decoupled strategy, by
/// backward recursion over the joint product space.
pub fn monolithic_evaluate(
    mdp: &SingleAgentMdp,
    dfa: &Dfa,
    strategy: &DecoupledStrategy,
    x0: &[usize],
    horizon: usize,
    budget: usize,
) -> Result<f64> {
    check_x0(mdp, strategy, x0)?;
    let n = strategy.agents();
    let nx = mdp.n_states();
    let nq = dfa.n_states();
    let size = (nx as u128).checked_pow(n as u32).map(|s| s * nq as u128);
    let joint = match size {
        Some(s) if s <= budget as u128 => nx.pow(n as u32),
        _ => {
            return Err(Error::BudgetExceeded(format!(
                "product space |X_c|^N |Q| = {nx}^{n} * {nq} exceeds {budget} entries"
            )))
        }
    };
    // Agent i is digit i (base |X_c|) of the joint index.
    let stride: Vec<usize> = (0..n).map(|i| nx.pow(i as u32)).collect();
    let digits = |mut j: usize| -> Vec<usize> {
        (0..n)
            .map(|_| {
                let d = j % nx;
                j /= nx;
                d
            })
            .collect()
    };
    let asg: Vec<Assignment> = (0..joint)
        .map(|j| letter_to_assignment(&joint_label(&digits(j), mdp), dfa.atoms()))
        .collect();
    let qf = dfa.accepting();
    let mut v: Vec<Vec<f64>> = (0..nq).map(|q| vec![if q == qf { 1.0 } else { 0.0 }; joint]).collect();
    let mut u = vec![0.0; joint];
    let mut tmp = vec![0.0; joint];
    for _ in 0..horizon {
        let mut next = Vec::with_capacity(nq);
        for q in 0..nq {
            if q == qf {
                next.push(vec![1.0; joint]);
                continue;
            }
            for (j, uj) in u.iter_mut().enumerate() {
                *uj = v[dfa.step(q, asg[j])][j];
            }
            // Apply P_i[x_i, x_i'] = T(x_i' | x_i, π_q^i(x_i)) along each axis.
            for (i, &s) in stride.iter().enumerate() {
                let map = strategy.map_by_id(strategy.policy_id(q, i));
                for base in 0..joint {
                    if !(base / s).is_multiple_of(nx) {
                        continue;
                    }
                    for xi in 0..nx {
                        let row = mdp.row(xi, map[xi] as usize);
                        let mut acc = 0.0;
                        for (xp, &p) in row.iter().enumerate() {
                            if p != 0.0 {
                                acc += p * u[base + xp * s];
                            }
                        }
                        tmp[base + xi * s] = acc;
                    }
                }
                std::mem::swap(&mut u, &mut tmp);
            }
            next.push(u.clone());
        }
        v = next;
    }
    let j0: usize = x0.iter().zip(&stride).map(|(x, s)| x * s).sum();
    Ok(v[dfa.step(dfa.initial(), asg[j0])][j0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub runs: usize,
    pub successes: usize,
    pub frequency: f64,
    pub std_error: f64,
}

/// Simulated frequency of reaching `q_f` within `horizon` steps. Run `r` uses
/// its own generator seeded from `seed + r`, so results do not depend on
/// scheduling.
pub fn monte_carlo(
    mdp: &SingleAgentMdp,
    dfa: &Dfa,
    strategy: &DecoupledStrategy,
    x0: &[usize],
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    check_x0(mdp, strategy, x0)?;
    if runs == 0 {
        return Err(Error::Config("Monte Carlo needs at least one run".into()));
    }
    let nx = mdp.n_states();
    let na = mdp.n_actions();
    let mut cdf = vec![0.0; nx * na * nx];
    for x in 0..nx {
        for a in 0..na {
            let mut acc = 0.0;
            for (k, &p) in mdp.row(x, a).iter().enumerate() {
                acc += p;
                cdf[(x * na + a) * nx + k] = acc;
            }
        }
    }
    let sample = |x: usize, a: usize, r: f64| -> usize {
        let row = &mdp.row(x, a);
        let c = &cdf[(x * na + a) * nx..][..nx];
        let k = c.partition_point(|&v| v <= r);
        if k < nx {
            k
        } else {
            // r beyond the rounded total: take the last state with mass.
            row.iter().rposition(|&p| p > 0.0).unwrap_or(nx - 1)
        }
    };
    let qf = dfa.accepting();
    let q_init = dfa.step(dfa.initial(), letter_to_assignment(&joint_label(x0, mdp), dfa.atoms()));
    let successes: usize = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            let mut x = x0.to_vec();
            let mut q = q_init;
            let mut letter = vec![0; x.len()];
            for _ in 0..horizon {
                if q == qf || Some(q) == dfa.sink() {
                    break;
                }
                for (i, xi) in x.iter_mut().enumerate() {
                    let a = strategy.action(q, i, *xi);
                    *xi = sample(*xi, a, rng.random::<f64>());
                    letter[i] = mdp.label(*xi);
                }
                q = dfa.step(q, letter_to_assignment(&letter, dfa.atoms()));
            }
            (q == qf) as usize
        })
        .sum();
    let p = successes as f64 / runs as f64;
    Ok(MonteCarloResult { runs, successes, frequency: p, std_error: (p * (1.0 - p) / runs as f64).sqrt() })
}

/// The flat witness-tree baseline: the dual-tree loop with deduplication off,
/// so every `(z, i)` stores its own vector.
#[allow(clippy::too_many_arguments)]
pub fn flat_witness_tree_run(
    mdp: &SingleAgentMdp,
    dfa: &Dfa,
    cubes: &TransitionCubes,
    strategy: &DecoupledStrategy,
    horizon: usize,
    thresholds: Thresholds,
    limits: TreeLimits,
) -> Result<TreeRun> {
    run_tree(mdp, dfa, cubes, strategy, horizon, thresholds, false, limits)
}
