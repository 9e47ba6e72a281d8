//! Two-level map equation for undirected flow.
//!
//! Node visit rates are the stationary distribution of the random walk,
//! `p_α = s_α / 2W`; a module's exit rate is its cut weight over `2W`. The
//! codelength of a partition `M` is
//!
//! ```text
//! L(M) = plogp(q) − 2 Σ_m plogp(q_m) − Σ_α plogp(p_α) + Σ_m plogp(q_m + p_m)
//! ```
//!
//! with `q = Σ q_m` and `plogp(x) = x·log2 x`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{modularity_unchecked, AlgorithmKind, CommunityResult, WeightedGraph};
use crate::partition::Partition;

const MIN_IMPROVEMENT: f64 = 1e-10;

fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Module-level totals: summed strength and internal weight.
#[derive(Clone, Copy, Default)]
struct Module {
    strength: f64,
    internal: f64,
}

impl Module {
    fn exit(&self, two_w: f64) -> f64 {
        // clamp float dust from incremental updates
        ((self.strength - 2.0 * self.internal) / two_w).max(0.0)
    }

    /// Partition-dependent codelength terms of this module.
    fn terms(&self, two_w: f64) -> f64 {
        let q = self.exit(two_w);
        -2.0 * plogp(q) + plogp(q + self.strength / two_w)
    }
}

/// Codelength in bits of `p` on `g`; 0 for an edgeless graph.
pub fn map_equation(g: &WeightedGraph, p: &Partition) -> f64 {
    assert_eq!(p.len(), g.node_count(), "partition must cover the graph");
    let two_w = 2.0 * g.total_weight();
    if two_w <= 0.0 {
        return 0.0;
    }
    let modules = module_totals(g, p.assignment(), p.count());
    let q: f64 = modules.iter().map(|m| m.exit(two_w)).sum();
    let leaf: f64 = (0..g.node_count()).map(|i| plogp(g.strength(i) / two_w)).sum();
    plogp(q) + modules.iter().map(|m| m.terms(two_w)).sum::<f64>() - leaf
}

fn module_totals(g: &WeightedGraph, assignment: &[usize], count: usize) -> Vec<Module> {
    let mut modules = vec![Module::default(); count];
    for i in 0..g.node_count() {
        let own = assignment[i];
        let inner: f64 = g
            .neighbors(i)
            .iter()
            .filter(|&&(j, _)| j > i && assignment[j] == own)
            .map(|&(_, w)| w)
            .sum();
        let m = &mut modules[own];
        m.strength += g.strength(i);
        m.internal += g.self_loop(i) + inner;
    }
    modules
}

/// Greedy node moves minimizing the codelength on `g` whose total weight is
/// that of the original graph. Returns the compacted assignment and whether
/// anything moved.
fn local_moves(g: &WeightedGraph, rng: &mut ChaCha8Rng) -> (Partition, bool) {
    let n = g.node_count();
    let two_w = 2.0 * g.total_weight();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut modules: Vec<Module> = (0..n)
        .map(|i| Module {
            strength: g.strength(i),
            internal: g.self_loop(i),
        })
        .collect();
    let mut exit_sum: f64 = modules.iter().map(|m| m.exit(two_w)).sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0f64; n];
    let mut touched = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &v in &order {
            let own = comm[v];
            for &(j, w) in g.neighbors(v) {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            touched.sort_unstable();
            let sv = g.strength(v);
            let loop_v = g.self_loop(v);
            let old_own = modules[own];
            let own_without = Module {
                strength: old_own.strength - sv,
                internal: old_own.internal - link[own] - loop_v,
            };
            let base = exit_sum - old_own.exit(two_w) + own_without.exit(two_w);
            let mut best = own;
            let mut best_delta = 0.0;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let old_c = modules[c];
                let new_c = Module {
                    strength: old_c.strength + sv,
                    internal: old_c.internal + link[c] + loop_v,
                };
                let new_exit = base - old_c.exit(two_w) + new_c.exit(two_w);
                let delta = plogp(new_exit) - plogp(exit_sum) + own_without.terms(two_w) - old_own.terms(two_w)
                    + new_c.terms(two_w)
                    - old_c.terms(two_w);
                if delta < -MIN_IMPROVEMENT && delta < best_delta {
                    best = c;
                    best_delta = delta;
                }
            }
            if best != own {
                let old_c = modules[best];
                let new_c = Module {
                    strength: old_c.strength + sv,
                    internal: old_c.internal + link[best] + loop_v,
                };
                exit_sum = base - old_c.exit(two_w) + new_c.exit(two_w);
                modules[own] = own_without;
                modules[best] = new_c;
                comm[v] = best;
                moved = true;
                moved_any = true;
            }
            for c in touched.drain(..) {
                link[c] = 0.0;
            }
        }
        if !moved {
            break;
        }
    }
    (Partition::from_assignment(&comm), moved_any)
}

/// Two-level Infomap: Louvain-style node moves and coarsening scored by the
/// map equation. `trace` holds the codelength after each level.
pub fn infomap(g: &WeightedGraph, seed: u64) -> CommunityResult {
    let n = g.node_count();
    let mut membership = Partition::singletons(n);
    let mut trace = vec![map_equation(g, &membership)];
    if g.total_weight() > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = g.clone();
        loop {
            let (part, moved) = local_moves(&level, &mut rng);
            if !moved {
                break;
            }
            membership = membership.then(&part);
            trace.push(map_equation(g, &membership));
            level = level.aggregate(&part);
        }
    }
    CommunityResult {
        modularity: modularity_unchecked(g, membership.assignment(), membership.count()),
        partition: membership,
        algorithm: AlgorithmKind::Infomap,
        seed,
        trace,
    }
}
