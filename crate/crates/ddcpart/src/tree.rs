//! Axis-aligned binary tree over the covariate space. Leaves carry dense
//! partition ids `0..k-1`; a point goes to the left child iff
//! `q[dim] < threshold`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        partition: u32,
    },
}

/// A discretization of the covariate space: the map from `q` to a partition id.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    n_dims: usize,
    nodes: Vec<Node>,
    n_leaves: u32,
}

impl Discretization {
    /// Single-leaf tree covering the whole space (partition id 0).
    pub fn root(n_dims: usize) -> Self {
        Discretization {
            n_dims,
            nodes: vec![Node::Leaf { partition: 0 }],
            n_leaves: 1,
        }
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    /// Number of partitions (leaves), `k`.
    pub fn n_partitions(&self) -> u32 {
        self.n_leaves
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Splits applied so far (`k - 1`).
    pub fn n_splits(&self) -> usize {
        (self.n_leaves - 1) as usize
    }

    /// All internal `(dim, threshold)` pairs, in node order.
    pub fn split_rules(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { dim, threshold, .. } => Some((*dim, *threshold)),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    /// Partition id of `q`. Errors when `q` has the wrong length.
    pub fn assign(&self, q: &[f64]) -> Result<u32> {
        if q.len() != self.n_dims {
            return Err(Error::DimensionMismatch {
                expected: self.n_dims,
                got: q.len(),
            });
        }
        Ok(self.assign_unchecked(q))
    }

    /// `assign` without the length check; hot path for counting.
    pub fn assign_unchecked(&self, q: &[f64]) -> u32 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if q[*dim] < *threshold { *left } else { *right };
                }
                Node::Leaf { partition } => return *partition,
            }
        }
    }

    /// Splits the leaf holding `partition` on `(dim, threshold)`. The left
    /// child keeps the partition id; the right child receives the next free id
    /// (`k` before the split), so ids stay dense. Returns (left, right) ids.
    pub fn split_leaf(&mut self, partition: u32, dim: usize, threshold: f64) -> Result<(u32, u32)> {
        if dim >= self.n_dims {
            return Err(Error::InvalidArgument(format!(
                "split dimension {dim} outside 0..{}",
                self.n_dims
            )));
        }
        let node_idx = self
            .nodes
            .iter()
            .position(|n| matches!(n, Node::Leaf { partition: p } if *p == partition))
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no leaf with partition id {partition}"))
            })?;
        let right_id = self.n_leaves;
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { partition });
        let right = self.nodes.len();
        self.nodes.push(Node::Leaf {
            partition: right_id,
        });
        self.nodes[node_idx] = Node::Split {
            dim,
            threshold,
            left,
            right,
        };
        self.n_leaves += 1;
        Ok((partition, right_id))
    }

    /// Per-leaf bounding boxes obtained by narrowing `root_box` along the path
    /// from the root; indexed by partition id. Boxes are half-open `[lo, hi)`.
    pub fn leaf_boxes(&self, root_box: &[(f64, f64)]) -> Result<Vec<Vec<(f64, f64)>>> {
        if root_box.len() != self.n_dims {
            return Err(Error::DimensionMismatch {
                expected: self.n_dims,
                got: root_box.len(),
            });
        }
        let mut boxes = vec![Vec::new(); self.n_leaves as usize];
        let mut stack = vec![(0usize, root_box.to_vec())];
        while let Some((idx, bx)) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf { partition } => boxes[*partition as usize] = bx,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    let mut lo = bx.clone();
                    lo[*dim].1 = *threshold;
                    let mut hi = bx;
                    hi[*dim].0 = *threshold;
                    stack.push((*left, lo));
                    stack.push((*right, hi));
                }
            }
        }
        Ok(boxes)
    }

    /// Number of ancestors of each leaf, indexed by partition id.
    pub fn leaf_depths(&self) -> Vec<u32> {
        let mut depths = vec![0u32; self.n_leaves as usize];
        let mut stack = vec![(0usize, 0u32)];
        while let Some((idx, depth)) = stack.pop() {
            match &self.nodes[idx] {
                Node::Leaf { partition } => depths[*partition as usize] = depth,
                Node::Split { left, right, .. } => {
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
            }
        }
        depths
    }

    /// Portable text form: a header line followed by one line per node.
    /// Thresholds use shortest round-trip formatting, so write + read is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "discretization v1 dims={} nodes={} leaves={}",
            self.n_dims,
            self.nodes.len(),
            self.n_leaves
        )
        .unwrap();
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => writeln!(out, "{i} split {dim} {threshold} {left} {right}").unwrap(),
                Node::Leaf { partition } => writeln!(out, "{i} leaf {partition}").unwrap(),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Schema("empty discretization file".into()))?;
        let mut dims = None;
        let mut n_nodes = None;
        let mut leaves = None;
        for token in header.split_whitespace() {
            if let Some(v) = token.strip_prefix("dims=") {
                dims = v.parse::<usize>().ok();
            } else if let Some(v) = token.strip_prefix("nodes=") {
                n_nodes = v.parse::<usize>().ok();
            } else if let Some(v) = token.strip_prefix("leaves=") {
                leaves = v.parse::<u32>().ok();
            }
        }
        let (n_dims, n_nodes, n_leaves) = match (dims, n_nodes, leaves) {
            (Some(d), Some(n), Some(l)) if header.starts_with("discretization v1") => (d, n, l),
            _ => {
                return Err(Error::Schema(format!(
                    "bad discretization header: `{header}`"
                )))
            }
        };

        let mut nodes = vec![Node::Leaf { partition: 0 }; n_nodes];
        let mut seen = vec![false; n_nodes];
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::Parse {
                line: lineno + 2,
                message: msg.to_string(),
            };
            if parts.len() < 3 {
                return Err(bad("expected `<id> split|leaf ...`"));
            }
            let idx: usize = parts[0].parse().map_err(|_| bad("bad node id"))?;
            if idx >= n_nodes {
                return Err(bad("node id out of range"));
            }
            match parts[1] {
                "split" if parts.len() == 6 => {
                    nodes[idx] = Node::Split {
                        dim: parts[2].parse().map_err(|_| bad("bad dim"))?,
                        threshold: parts[3].parse().map_err(|_| bad("bad threshold"))?,
                        left: parts[4].parse().map_err(|_| bad("bad left child"))?,
                        right: parts[5].parse().map_err(|_| bad("bad right child"))?,
                    };
                }
                "leaf" if parts.len() == 3 => {
                    nodes[idx] = Node::Leaf {
                        partition: parts[2].parse().map_err(|_| bad("bad partition id"))?,
                    };
                }
                _ => return Err(bad("expected `split <dim> <thr> <l> <r>` or `leaf <id>`")),
            }
            seen[idx] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Schema("missing node lines".into()));
        }
        let tree = Discretization {
            n_dims,
            nodes,
            n_leaves,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Checks structural integrity: single root, every node reachable exactly
    /// once, leaf partitions dense `0..k-1`.
    fn validate(&self) -> Result<()> {
        let mut visited = vec![false; self.nodes.len()];
        let mut leaf_seen = vec![false; self.n_leaves as usize];
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            if visited[idx] {
                return Err(Error::Schema("node reachable twice".into()));
            }
            visited[idx] = true;
            match &self.nodes[idx] {
                Node::Leaf { partition } => {
                    let p = *partition as usize;
                    if p >= leaf_seen.len() || leaf_seen[p] {
                        return Err(Error::Schema("leaf partition ids not dense".into()));
                    }
                    leaf_seen[p] = true;
                }
                Node::Split {
                    left, right, dim, ..
                } => {
                    if *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::Schema("child index out of range".into()));
                    }
                    if *dim >= self.n_dims {
                        return Err(Error::Schema("split dimension out of range".into()));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        if visited.iter().any(|v| !v) || leaf_seen.iter().any(|v| !v) {
            return Err(Error::Schema("disconnected discretization".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_assigns_zero() {
        let tree = Discretization::root(3);
        assert_eq!(tree.assign(&[1.0, 2.0, 3.0]).unwrap(), 0);
        assert_eq!(tree.n_partitions(), 1);
    }

    #[test]
    fn boundary_goes_right() {
        let mut tree = Discretization::root(2);
        tree.split_leaf(0, 1, 5.0).unwrap();
        assert_eq!(tree.assign(&[0.0, 3.0]).unwrap(), 0);
        assert_eq!(tree.assign(&[0.0, 5.0]).unwrap(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let tree = Discretization::root(2);
        assert!(tree.assign(&[1.0]).is_err());
    }

    #[test]
    fn ids_stay_dense() {
        let mut tree = Discretization::root(2);
        tree.split_leaf(0, 0, 5.0).unwrap();
        tree.split_leaf(0, 1, 5.0).unwrap();
        tree.split_leaf(1, 1, 5.0).unwrap();
        assert_eq!(tree.n_partitions(), 4);
        let mut seen = vec![false; 4];
        for q0 in [2.0, 7.0] {
            for q1 in [2.0, 7.0] {
                seen[tree.assign(&[q0, q1]).unwrap() as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut tree = Discretization::root(4);
        tree.split_leaf(0, 2, 0.1 + 0.2).unwrap();
        tree.split_leaf(1, 0, -3.75e-7).unwrap();
        let text = tree.to_text();
        let back = Discretization::from_text(&text).unwrap();
        assert_eq!(tree, back);
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn leaf_boxes_partition_root_box() {
        let mut tree = Discretization::root(2);
        tree.split_leaf(0, 0, 5.0).unwrap();
        tree.split_leaf(0, 1, 4.0).unwrap();
        let boxes = tree
            .leaf_boxes(&[(0.0, 10.0), (0.0, 10.0)])
            .unwrap();
        assert_eq!(boxes[0], vec![(0.0, 5.0), (0.0, 4.0)]);
        assert_eq!(boxes[1], vec![(5.0, 10.0), (0.0, 10.0)]);
        assert_eq!(boxes[2], vec![(0.0, 5.0), (4.0, 10.0)]);
    }
}
