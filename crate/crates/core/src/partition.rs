use serde::{Deserialize, Serialize};

/// Assignment of graph nodes to communities `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Compacts arbitrary community ids to `0..m` in order of first appearance.
    pub fn from_assignment(raw: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let assignment = raw
            .iter()
            .map(|&c| {
                let next = remap.len();
                *remap.entry(c).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            count: remap.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            count: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn is_singletons(&self) -> bool {
        self.count == self.assignment.len()
    }

    /// Member lists indexed by community id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    /// Composes with a partition of this partition's communities.
    pub fn then(&self, coarser: &Partition) -> Partition {
        assert_eq!(coarser.len(), self.count, "coarser partition must cover every community");
        let raw: Vec<usize> = self.assignment.iter().map(|&c| coarser.assignment[c]).collect();
        Partition::from_assignment(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compacts_and_counts() {
        let p = Partition::from_assignment(&[5, 5, 2, 9, 2]);
        assert_eq!(p.assignment(), &[0, 0, 1, 2, 1]);
        assert_eq!(p.count(), 3);
        assert_eq!(p.members(), vec![vec![0, 1], vec![2, 4], vec![3]]);
    }

    #[test]
    fn composition() {
        let fine = Partition::from_assignment(&[0, 1, 1, 2]);
        let coarse = Partition::from_assignment(&[0, 0, 1]);
        assert_eq!(fine.then(&coarse).assignment(), &[0, 0, 0, 1]);
    }

    #[test]
    fn degenerate() {
        assert_eq!(Partition::single(0).count(), 0);
        assert!(Partition::singletons(3).is_singletons());
        assert_eq!(Partition::single(3).count(), 1);
    }
}
