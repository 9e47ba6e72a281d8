//! Community detection on weighted undirected graphs.
//!
//! Four detectors share one graph type: Louvain and fast-greedy agglomeration
//! maximize modularity, Infomap minimizes the two-level map equation, and the
//! multiscale Potts detector ([`fmcdrn`]) minimizes an absolute Potts
//! Hamiltonian over a sweep of resolutions and keeps the most stable one.

mod fast_greedy;
mod infomap;
mod louvain;
mod potts;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::Partition;

pub use fast_greedy::{fast_greedy, fast_greedy_with_merges, Merge};
pub use infomap::{infomap, map_equation};
pub use louvain::{louvain, louvain_restarts, DEFAULT_RESTARTS};
pub use potts::{fmcdrn, potts_energy, PottsParams};

/// Symmetric weighted graph. Self-loops only arise from coarsening; a loop of
/// weight `w` counts `w` toward internal weight and `2w` toward strength.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    strength: Vec<f64>,
    total_weight: f64,
}

impl WeightedGraph {
    /// Builds from `(i, j, w)` triples; duplicates are summed and `i == j`
    /// adds a self-loop.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
        let mut self_loops = vec![0.0; n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) has weight {w}")));
            }
            if i == j {
                self_loops[i] += w;
            } else {
                *merged.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &w) in &merged {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        adjacency.iter_mut().for_each(|a| a.sort_by_key(|&(j, _)| j));
        let strength: Vec<f64> = adjacency
            .iter()
            .zip(&self_loops)
            .map(|(a, &s)| a.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total_weight = strength.iter().sum::<f64>() / 2.0;
        Ok(Self {
            adjacency,
            self_loops,
            strength,
            total_weight,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Distinct non-loop edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn self_loop(&self, i: usize) -> f64 {
        self.self_loops[i]
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.strength[i]
    }

    /// Sum of edge weights, each edge (and loop) once.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Collapses each community into one node; internal weight becomes a
    /// self-loop.
    pub(crate) fn aggregate(&self, part: &Partition) -> WeightedGraph {
        let mut edges = Vec::new();
        for i in 0..self.node_count() {
            let ci = part.community_of(i);
            if self.self_loops[i] > 0.0 {
                edges.push((ci, ci, self.self_loops[i]));
            }
            for &(j, w) in &self.adjacency[i] {
                if j > i {
                    edges.push((ci, part.community_of(j), w));
                }
            }
        }
        WeightedGraph::from_edges(part.count(), &edges).expect("aggregated edges stay valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Louvain,
    FastGreedy,
    Infomap,
    Fmcdrn,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::Louvain,
        AlgorithmKind::FastGreedy,
        AlgorithmKind::Infomap,
        AlgorithmKind::Fmcdrn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Louvain => "louvain",
            AlgorithmKind::FastGreedy => "fast_greedy",
            AlgorithmKind::Infomap => "infomap",
            AlgorithmKind::Fmcdrn => "fmcdrn",
        }
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|a| a.name() == s || (s == "fast-greedy" && *a == AlgorithmKind::FastGreedy))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityResult {
    pub partition: Partition,
    pub modularity: f64,
    pub algorithm: AlgorithmKind,
    pub seed: u64,
    /// Algorithm-specific progress: modularity per level (Louvain), along the
    /// merge sequence (fast-greedy), codelength per level (Infomap), or mean
    /// replica NMI per resolution (Potts).
    pub trace: Vec<f64>,
}

/// Runs the chosen detector.
pub fn detect(g: &WeightedGraph, algorithm: AlgorithmKind, potts: &PottsParams, seed: u64) -> Result<CommunityResult> {
    match algorithm {
        AlgorithmKind::Louvain => Ok(louvain(g, seed)),
        AlgorithmKind::FastGreedy => Ok(fast_greedy(g)),
        AlgorithmKind::Infomap => Ok(infomap(g, seed)),
        AlgorithmKind::Fmcdrn => fmcdrn(g, potts, seed),
    }
}

/// Weighted Newman-Girvan modularity:
/// `Σ_c [ w_in(c)/W − (s(c)/2W)² ]`. An edgeless graph scores 0.
pub fn modularity(g: &WeightedGraph, p: &Partition) -> Result<f64> {
    if p.len() != g.node_count() {
        return Err(Error::PartitionMismatch {
            partition: p.len(),
            expected: g.node_count(),
        });
    }
    Ok(modularity_unchecked(g, p.assignment(), p.count()))
}

pub(crate) fn modularity_unchecked(g: &WeightedGraph, assignment: &[usize], count: usize) -> f64 {
    let w = g.total_weight();
    if w <= 0.0 {
        return 0.0;
    }
    let mut internal = vec![0.0; count];
    let mut strength = vec![0.0; count];
    for i in 0..g.node_count() {
        let c = assignment[i];
        strength[c] += g.strength(i);
        internal[c] += g.self_loop(i);
        for &(j, wij) in g.neighbors(i) {
            if j > i && assignment[j] == c {
                internal[c] += wij;
            }
        }
    }
    internal
        .iter()
        .zip(&strength)
        .map(|(&win, &s)| win / w - (s / (2.0 * w)).powi(2))
        .sum()
}

fn entropy(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2·I(P;Q) / (H(P) + H(Q))`, taken as 0 when
/// both partitions have zero entropy.
pub fn nmi(p: &Partition, q: &Partition) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::PartitionMismatch {
            partition: q.len(),
            expected: p.len(),
        });
    }
    let n = p.len() as f64;
    if p.is_empty() {
        return Ok(0.0);
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut a = vec![0.0; p.count()];
    let mut b = vec![0.0; q.count()];
    for (&x, &y) in p.assignment().iter().zip(q.assignment()) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
        a[x] += 1.0;
        b[y] += 1.0;
    }
    let hp = entropy(a.iter().copied(), n);
    let hq = entropy(b.iter().copied(), n);
    if hp + hq <= 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| (c / n) * ((c * n) / (a[x] * b[y])).ln())
        .sum();
    Ok((2.0 * mi / (hp + hq)).clamp(0.0, 1.0))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn modularity_of_reference_partitions() {
        let g = two_triangles();
        let one = modularity(&g, &Partition::single(6)).unwrap();
        assert!(one.abs() < 1e-15);
        let tri = modularity(&g, &Partition::from_assignment(&[0, 0, 0, 1, 1, 1])).unwrap();
        assert!((tri - (6.0 / 7.0 - 0.5)).abs() < 1e-15);
        let singles = modularity(&g, &Partition::singletons(6)).unwrap();
        let want: f64 = -(0..6).map(|i| (g.strength(i) / 14.0).powi(2)).sum::<f64>();
        assert!((singles - want).abs() < 1e-15);
        assert!(singles < 0.0);
    }

    #[test]
    fn modularity_rejects_short_partition() {
        assert!(modularity(&two_triangles(), &Partition::single(5)).is_err());
    }

    #[test]
    fn graph_rejects_bad_edges() {
        assert!(WeightedGraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::from_edges(2, &[(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn self_loops_count_twice_in_strength() {
        let g = WeightedGraph::from_edges(2, &[(0, 0, 2.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(g.strength(0), 5.0);
        assert_eq!(g.total_weight(), 3.0);
        // everything in one community: all weight internal
        assert!(modularity(&g, &Partition::single(2)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn aggregation_preserves_modularity() {
        let g = two_triangles();
        let p = Partition::from_assignment(&[0, 0, 1, 2, 2, 2]);
        let coarse = g.aggregate(&p);
        assert_eq!(coarse.total_weight(), g.total_weight());
        let q_fine = modularity(&g, &p.then(&Partition::from_assignment(&[0, 0, 1]))).unwrap();
        let q_coarse = modularity(&coarse, &Partition::from_assignment(&[0, 0, 1])).unwrap();
        assert!((q_fine - q_coarse).abs() < 1e-15);
    }

    #[test]
    fn nmi_cases() {
        let p = Partition::from_assignment(&[0, 0, 1, 1]);
        assert!((nmi(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        let relabeled = Partition::from_assignment(&[3, 3, 1, 1]);
        assert!((nmi(&p, &relabeled).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&Partition::singletons(4), &Partition::single(4)).unwrap(), 0.0);
        let q = Partition::from_assignment(&[0, 1, 0, 1]);
        assert!(nmi(&p, &q).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&Partition::single(4), &Partition::single(4)).unwrap(), 0.0);
        assert!(nmi(&p, &Partition::single(3)).is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in AlgorithmKind::ALL {
            assert_eq!(a.name().parse::<AlgorithmKind>().unwrap(), a);
        }
        assert!("kmeans".parse::<AlgorithmKind>().is_err());
    }
}
