use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{modularity_unchecked, AlgorithmKind, CommunityResult, WeightedGraph};
use crate::partition::Partition;

const MIN_GAIN: f64 = 1e-12;

/// One round of local moves. Returns the compacted assignment and whether any
/// node moved.
fn local_moves(g: &WeightedGraph, rng: &mut ChaCha8Rng) -> (Partition, bool) {
    let n = g.node_count();
    let two_w = 2.0 * g.total_weight();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut total: Vec<f64> = (0..n).map(|i| g.strength(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    // per-community link weight from the current node, reset after each node
    let mut link = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let ki = g.strength(i);
            let own = comm[i];
            for &(j, w) in g.neighbors(i) {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            total[own] -= ki;
            let gain = |c: usize, link: &[f64]| link[c] - total[c] * ki / two_w;
            let stay = gain(own, &link);
            let mut best = own;
            let mut best_gain = stay;
            touched.sort_unstable();
            for &c in &touched {
                if c == own {
                    continue;
                }
                let gc = gain(c, &link);
                if gc > stay + MIN_GAIN && (gc > best_gain || best == own) {
                    best = c;
                    best_gain = gc;
                }
            }
            total[best] += ki;
            if best != own {
                comm[i] = best;
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

/// Independent passes [`louvain`] runs, keeping the best.
pub const DEFAULT_RESTARTS: usize = 8;

fn single_pass(g: &WeightedGraph, rng: &mut ChaCha8Rng) -> (Partition, Vec<f64>) {
    let n = g.node_count();
    let mut membership = Partition::singletons(n);
    let mut trace = vec![modularity_unchecked(g, membership.assignment(), membership.count())];
    if g.total_weight() > 0.0 {
        let mut level = g.clone();
        loop {
            let (part, moved) = local_moves(&level, rng);
            if !moved {
                break;
            }
            membership = membership.then(&part);
            trace.push(modularity_unchecked(g, membership.assignment(), membership.count()));
            level = level.aggregate(&part);
        }
    }
    (membership, trace)
}

/// Louvain modularity optimization.
///
/// Nodes are visited in a seeded random order and moved to the neighboring
/// community with the largest positive modularity gain (ties: lowest
/// community id); converged communities are collapsed into super-nodes and
/// the process repeats until no node moves. Greedy moves can lock nodes into
/// a poor community, so [`DEFAULT_RESTARTS`] passes with different orders
/// run and the highest modularity wins (ties: earliest pass). `trace` holds
/// the modularity of the original graph after every level of the winning
/// pass, starting from singletons.
pub fn louvain(g: &WeightedGraph, seed: u64) -> CommunityResult {
    louvain_restarts(g, seed, DEFAULT_RESTARTS)
}

/// [`louvain`] with an explicit number of passes (at least one runs).
pub fn louvain_restarts(g: &WeightedGraph, seed: u64, restarts: usize) -> CommunityResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut best, mut best_trace) = single_pass(g, &mut rng);
    let edgeless = g.total_weight() <= 0.0;
    for _ in 1..restarts.max(1) {
        if edgeless {
            break;
        }
        let (part, trace) = single_pass(g, &mut rng);
        if trace.last() > best_trace.last() {
            best = part;
            best_trace = trace;
        }
    }
    CommunityResult {
        modularity: *best_trace.last().expect("trace starts non-empty"),
        partition: best,
        algorithm: AlgorithmKind::Louvain,
        seed,
        trace: best_trace,
    }
}
