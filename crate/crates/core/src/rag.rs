//! Region adjacency graph construction, weighting and community merging.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::community::WeightedGraph;
use crate::error::{Error, Result};
use crate::features::{edge_weight, RegionStats, SimilarityParams};
use crate::imgio::LabelMap;
use crate::partition::Partition;

/// Undirected graph over regions; node `i` is region `i` of the label map it
/// was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Rag {
    n: usize,
    /// Keyed by `(i, j)` with `i < j`.
    edges: BTreeMap<(usize, usize), f64>,
}

impl Rag {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in `(i, j)` order with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges.get(&(i.min(j), i.max(j))).copied()
    }

    /// Graph for community detection, dropping edges below `min_weight`.
    pub fn to_graph(&self, min_weight: f64) -> WeightedGraph {
        let edges: Vec<_> = self
            .edges()
            .filter(|&(_, _, w)| w > 0.0 && w >= min_weight)
            .collect();
        WeightedGraph::from_edges(self.n, &edges).expect("rag edges are valid graph edges")
    }

    /// Writes `i j w` per line.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let wrap = |source| Error::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
        for (i, j, w) in self.edges() {
            writeln!(out, "{i} {j} {w}").map_err(wrap)?;
        }
        out.flush().map_err(wrap)
    }
}

/// One node per region and an edge for every pair of labels that meet across
/// a horizontal or vertical pixel boundary. Edge weights start at 1.
pub fn build_rag(labels: &LabelMap) -> Result<Rag> {
    if !labels.is_compact() {
        return Err(Error::NonCompactLabels(format!(
            "{} distinct ids, max id {}",
            labels.region_count(),
            labels.max_label()
        )));
    }
    let (w, h) = labels.dims();
    let l = labels.labels();
    let mut edges = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for j in [(x + 1 < w).then(|| i + 1), (y + 1 < h).then(|| i + w)].into_iter().flatten() {
                let (a, b) = (l[i] as usize, l[j] as usize);
                if a != b {
                    edges.insert((a.min(b), a.max(b)), 1.0);
                }
            }
        }
    }
    Ok(Rag {
        n: labels.max_label() as usize + 1,
        edges,
    })
}

/// Assigns each edge the blended color/texture similarity of its regions.
pub fn weight_rag(rag: &Rag, stats: &[RegionStats], params: &SimilarityParams) -> Result<Rag> {
    if stats.len() != rag.n {
        return Err(Error::PartitionMismatch {
            partition: stats.len(),
            expected: rag.n,
        });
    }
    params.validate()?;
    let edges = rag
        .edges
        .keys()
        .map(|&(i, j)| ((i, j), edge_weight(&stats[i], &stats[j], params)))
        .collect();
    Ok(Rag { n: rag.n, edges })
}

/// Relabels every pixel with its region's community, compacted.
pub fn merge_by_partition(labels: &LabelMap, part: &Partition) -> Result<LabelMap> {
    let n = labels.max_label() as usize + 1;
    if part.len() != n {
        return Err(Error::PartitionMismatch {
            partition: part.len(),
            expected: n,
        });
    }
    let raw = labels
        .labels()
        .iter()
        .map(|&l| part.community_of(l as usize) as u32)
        .collect();
    Ok(LabelMap::new(labels.width(), labels.height(), raw)?.compacted())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BoundingBox;

    fn quad() -> LabelMap {
        LabelMap::from_rows(&[&[0, 1], &[2, 3]]).unwrap()
    }

    #[test]
    fn four_connectivity_only() {
        let rag = build_rag(&quad()).unwrap();
        assert_eq!(rag.node_count(), 4);
        let e: Vec<_> = rag.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(e, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn single_region_has_no_edges() {
        let rag = build_rag(&LabelMap::from_fn(5, 4, |_, _| 0)).unwrap();
        assert_eq!((rag.node_count(), rag.edge_count()), (1, 0));
    }

    #[test]
    fn disconnected_label_still_yields_adjacency() {
        let rag = build_rag(&LabelMap::from_rows(&[&[0, 1, 0]]).unwrap()).unwrap();
        assert_eq!(rag.edges().map(|(i, j, _)| (i, j)).collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn rejects_non_compact() {
        assert!(matches!(
            build_rag(&LabelMap::from_rows(&[&[0, 2]]).unwrap()),
            Err(Error::NonCompactLabels(_))
        ));
    }

    fn stats(mean: [f64; 3], hog: Vec<f64>) -> RegionStats {
        RegionStats {
            id: 0,
            pixel_count: 1,
            mean_lab: mean,
            variance_lab: [0.0; 3],
            bbox: BoundingBox {
                min_x: 0,
                min_y: 0,
                max_x: 0,
                max_y: 0,
            },
            hog,
        }
    }

    #[test]
    fn identical_regions_get_color_one() {
        let rag = build_rag(&LabelMap::from_rows(&[&[0, 1]]).unwrap()).unwrap();
        let s = vec![stats([50.0, 0.0, 0.0], vec![1.0, 1.0]), stats([50.0, 0.0, 0.0], vec![1.0, 0.0])];
        let p = SimilarityParams::default();
        let weighted = weight_rag(&rag, &s, &p).unwrap();
        let t = 0.5f64.sqrt();
        let want = p.a * t.sqrt() + (1.0 - p.a);
        assert!((weighted.weight(0, 1).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn weight_requires_aligned_stats() {
        let rag = build_rag(&quad()).unwrap();
        assert!(weight_rag(&rag, &[], &SimilarityParams::default()).is_err());
    }

    #[test]
    fn merge_partitions() {
        let merged = merge_by_partition(&quad(), &Partition::from_assignment(&[0, 0, 1, 1])).unwrap();
        assert_eq!(merged, LabelMap::from_rows(&[&[0, 0], &[1, 1]]).unwrap());
        let all = merge_by_partition(&quad(), &Partition::single(4)).unwrap();
        assert_eq!(all.region_count(), 1);
        let same = merge_by_partition(&quad(), &Partition::singletons(4)).unwrap();
        assert_eq!(same, quad());
        assert!(merge_by_partition(&quad(), &Partition::single(3)).is_err());
    }

    #[test]
    fn graph_conversion_drops_weak_edges() {
        let rag = build_rag(&quad()).unwrap();
        let s = vec![
            stats([10.0, 0.0, 0.0], vec![]),
            stats([10.0, 0.0, 0.0], vec![]),
            stats([90.0, 0.0, 0.0], vec![]),
            stats([90.0, 0.0, 0.0], vec![]),
        ];
        let weighted = weight_rag(&rag, &s, &SimilarityParams::default()).unwrap();
        let g = weighted.to_graph(0.1);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(weighted.to_graph(0.0).edge_count(), 4);
    }

    #[test]
    fn edge_list_dump() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rag.txt");
        build_rag(&quad()).unwrap().write_edge_list(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), vec!["0 1 1", "0 2 1", "1 3 1", "2 3 1"]);
    }
}
