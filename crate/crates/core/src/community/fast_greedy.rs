use std::collections::BTreeMap;

use super::{modularity_unchecked, AlgorithmKind, CommunityResult, WeightedGraph};
use crate::partition::Partition;

/// One agglomeration step: community `absorbed` joins `kept` (`kept < absorbed`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub kept: usize,
    pub absorbed: usize,
    pub delta_q: f64,
}

/// Greedy agglomerative modularity optimization.
///
/// Starts from singletons and repeatedly joins the connected pair of
/// communities with the largest modularity change (largest increase or
/// smallest decrease; ties go to the smaller community ids), returning the
/// best partition seen along the way.
pub fn fast_greedy(g: &WeightedGraph) -> CommunityResult {
    fast_greedy_with_merges(g).0
}

/// [`fast_greedy`] plus the full merge sequence.
pub fn fast_greedy_with_merges(g: &WeightedGraph) -> (CommunityResult, Vec<Merge>) {
    let n = g.node_count();
    let two_w = 2.0 * g.total_weight();
    let q0 = modularity_unchecked(g, &(0..n).collect::<Vec<_>>(), n);
    if two_w <= 0.0 {
        let result = CommunityResult {
            partition: Partition::singletons(n),
            modularity: q0,
            algorithm: AlgorithmKind::FastGreedy,
            seed: 0,
            trace: vec![q0],
        };
        return (result, Vec::new());
    }

    // e[i][j]: fraction of edge ends joining communities i and j (both directions stored)
    let mut e: Vec<BTreeMap<usize, f64>> = (0..n)
        .map(|i| g.neighbors(i).iter().map(|&(j, w)| (j, w / two_w)).collect())
        .collect();
    let mut a: Vec<f64> = (0..n).map(|i| g.strength(i) / two_w).collect();
    let mut alive = vec![true; n];

    let mut merges = Vec::new();
    let mut q = q0;
    let mut trace = vec![q0];
    let mut best_q = q0;
    let mut best_len = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| alive[i]) {
            for (&j, &eij) in e[i].range(i + 1..) {
                let dq = 2.0 * (eij - a[i] * a[j]);
                let better = match best {
                    None => true,
                    Some((bq, bi, bj)) => dq > bq || (dq == bq && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((dq, i, j));
                }
            }
        }
        let Some((dq, kept, absorbed)) = best else { break };

        let absorbed_links = std::mem::take(&mut e[absorbed]);
        for (k, v) in absorbed_links {
            e[k].remove(&absorbed);
            if k == kept {
                continue;
            }
            *e[kept].entry(k).or_insert(0.0) += v;
            *e[k].entry(kept).or_insert(0.0) += v;
        }
        a[kept] += a[absorbed];
        alive[absorbed] = false;

        q += dq;
        merges.push(Merge { kept, absorbed, delta_q: dq });
        trace.push(q);
        if q > best_q {
            best_q = q;
            best_len = merges.len();
        }
    }

    let partition = replay(n, &merges[..best_len]);
    let modularity = modularity_unchecked(g, partition.assignment(), partition.count());
    let result = CommunityResult {
        partition,
        modularity,
        algorithm: AlgorithmKind::FastGreedy,
        seed: 0,
        trace,
    };
    (result, merges)
}

/// Partition obtained by applying `merges` to singletons.
pub(crate) fn replay(n: usize, merges: &[Merge]) -> Partition {
    let mut owner: Vec<usize> = (0..n).collect();
    for m in merges {
        for o in owner.iter_mut() {
            if *o == m.absorbed {
                *o = m.kept;
            }
        }
    }
    Partition::from_assignment(&owner)
}
