//! Independent checks for [`tree_cutting`](super::tree_cutting).
//!
//! None of these simulate the cutting loop. The verifier uses a closed-form
//! characterisation of an admissible split: a split `S = A ∪ B` is the first
//! disconnection of some nondecreasing removal order iff, with `w` the heaviest edge
//! crossing the split, both `A` and `B` stay internally connected using only edges of
//! weight `≥ w`.

use serde::Serialize;

use crate::error::{Error, Result};

use super::cutting::order_children;
use super::graph::{components, ConfusionGraph, Edge};
use super::tree::ClassTree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub accepted: bool,
    pub diagnostics: Vec<String>,
}

/// Replays every split of `tree` against `graph`.
pub fn verify_cutting_trace(graph: &ConfusionGraph, tree: &ClassTree) -> Result<Verification> {
    let mut leaves = tree.leaves();
    leaves.sort_unstable();
    if leaves != graph.nodes() {
        return Err(Error::InvalidArgument(format!(
            "tree leaves {leaves:?} differ from graph nodes {:?}",
            graph.nodes()
        )));
    }
    let mut diagnostics = Vec::new();
    for (node, _) in tree.preorder() {
        let ClassTree::Node { classes, left, right } = node else {
            continue;
        };
        let a = left.classes();
        let b = right.classes();
        let sub = graph.induced(classes);
        if let Some(reason) = split_violation(&sub, &a, &b) {
            diagnostics.push(format!("split {a:?} | {b:?} of {classes:?}: {reason}"));
        }
        let (l, r) = order_children(a.clone(), b.clone());
        if l != a || r != b {
            diagnostics.push(format!(
                "split {a:?} | {b:?}: children are not in canonical order"
            ));
        }
    }
    Ok(Verification {
        accepted: diagnostics.is_empty(),
        diagnostics,
    })
}

fn split_violation(sub: &ConfusionGraph, a: &[usize], b: &[usize]) -> Option<String> {
    let in_a = |v: usize| a.binary_search(&v).is_ok();
    let crossing: Vec<&Edge> = sub
        .edges()
        .iter()
        .filter(|e| in_a(e.i) != in_a(e.j))
        .collect();
    let Some(w) = crossing.iter().map(|e| e.weight).max() else {
        return Some("no edge joins the two sides".into());
    };
    let heavy: Vec<Edge> = sub.edges().iter().filter(|e| e.weight >= w).copied().collect();
    for (side, name) in [(a, "left"), (b, "right")] {
        if components(side, heavy.iter()).len() != 1 {
            return Some(format!(
                "{name} side {side:?} falls apart before the last crossing edge (weight {w}) is removed"
            ));
        }
    }
    None
}

/// Maximum-weight spanning tree by Kruskal in descending weight, ties by `(i, j)`.
pub fn max_spanning_tree(graph: &ConfusionGraph) -> Result<Vec<Edge>> {
    let nodes = graph.nodes();
    let mut edges = graph.edges().to_vec();
    edges.sort_by(|x, y| y.weight.cmp(&x.weight).then((x.i, x.j).cmp(&(y.i, y.j))));
    let mut sets = DisjointSet::new(nodes.len());
    let idx = |v: usize| nodes.binary_search(&v).expect("edge endpoints are graph nodes");
    let mut tree = Vec::with_capacity(nodes.len().saturating_sub(1));
    for e in edges {
        if sets.union(idx(e.i), idx(e.j)) {
            tree.push(e);
        }
    }
    if tree.len() + 1 != nodes.len() {
        return Err(Error::Disconnected);
    }
    Ok(tree)
}

/// Single-linkage dendrogram: delete the lightest edge of the maximum spanning tree,
/// recurse on the two components. Uses the same child-ordering rule as the cutting.
pub fn spanning_tree_dendrogram(graph: &ConfusionGraph) -> Result<ClassTree> {
    fn build(graph: &ConfusionGraph, subset: &[usize]) -> Result<ClassTree> {
        if subset.len() == 1 {
            return Ok(ClassTree::Leaf(subset[0]));
        }
        let sub = graph.induced(subset);
        let mut mst = max_spanning_tree(&sub)?;
        let weakest = mst
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| e.cut_key())
            .map(|(k, _)| k)
            .expect("a connected subset of 2+ nodes has tree edges");
        mst.remove(weakest);
        let parts = components(sub.nodes(), mst.iter());
        let (l, r) = order_children(parts[0].clone(), parts[1].clone());
        Ok(ClassTree::node(build(graph, &l)?, build(graph, &r)?))
    }
    build(graph, graph.nodes())
}

/// Global minimum cut by enumerating every bipartition. Returns the weight and one side.
pub fn min_cut(graph: &ConfusionGraph) -> (u64, Vec<usize>) {
    let nodes = graph.nodes();
    let n = nodes.len();
    assert!((2..=20).contains(&n), "exhaustive cut enumeration needs 2..=20 nodes");
    let mut best = (u64::MAX, Vec::new());
    // Node 0 always on the "outside"; mask selects the other side.
    for mask in 1u32..(1 << (n - 1)) {
        let side: Vec<usize> = (1..n).filter(|k| mask & (1 << (k - 1)) != 0).map(|k| nodes[k]).collect();
        let weight: u64 = graph
            .edges()
            .iter()
            .filter(|e| side.contains(&e.i) != side.contains(&e.j))
            .map(|e| e.weight)
            .sum();
        if weight < best.0 {
            best = (weight, side);
        }
    }
    best
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treecut::{parse_tree, tree_cutting};
    use std::collections::BTreeSet;

    fn triangle() -> ConfusionGraph {
        ConfusionGraph::new(
            vec![1, 2, 3],
            vec![Edge::new(1, 2, 3), Edge::new(1, 3, 1), Edge::new(2, 3, 2)],
        )
        .unwrap()
    }

    /// Every first-disconnection split reachable by some nondecreasing removal order,
    /// found by enumerating all orderings within weight ties.
    fn reachable_splits(g: &ConfusionGraph) -> BTreeSet<Vec<usize>> {
        let mut edges = g.edges().to_vec();
        edges.sort_by_key(|e| e.weight);
        let mut out = BTreeSet::new();
        fn rec(
            g: &ConfusionGraph,
            remaining: Vec<Edge>,
            out: &mut BTreeSet<Vec<usize>>,
        ) {
            let min = remaining.iter().map(|e| e.weight).min().unwrap();
            for k in 0..remaining.len() {
                if remaining[k].weight != min {
                    continue;
                }
                let mut rest = remaining.clone();
                rest.remove(k);
                let parts = components(g.nodes(), rest.iter());
                if parts.len() > 1 {
                    // canonical: the side holding the smallest node
                    out.insert(parts[0].clone());
                } else {
                    rec(g, rest, out);
                }
            }
        }
        rec(g, edges, &mut out);
        out
    }

    fn every_tree(classes: &[usize]) -> Vec<ClassTree> {
        if classes.len() == 1 {
            return vec![ClassTree::Leaf(classes[0])];
        }
        let n = classes.len();
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) - 1 {
            let a: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| classes[k]).collect();
            let b: Vec<usize> = (0..n).filter(|k| mask & (1 << k) == 0).map(|k| classes[k]).collect();
            for l in every_tree(&a) {
                for r in every_tree(&b) {
                    out.push(ClassTree::node(l.clone(), r));
                }
            }
        }
        out
    }

    #[test]
    fn accepts_cutting_output() {
        let g = triangle();
        let t = tree_cutting(&g).unwrap();
        assert!(verify_cutting_trace(&g, &t).unwrap().accepted);
    }

    #[test]
    fn rejects_wrong_triangle_tree() {
        let v = verify_cutting_trace(&triangle(), &parse_tree("((1,3),2)").unwrap()).unwrap();
        assert!(!v.accepted);
        assert!(!v.diagnostics.is_empty());
    }

    #[test]
    fn two_node_graph() {
        let g = ConfusionGraph::complete(2, |_, _| 4).unwrap();
        assert!(verify_cutting_trace(&g, &parse_tree("(1,2)").unwrap()).unwrap().accepted);
    }

    #[test]
    fn leaf_mismatch_is_an_error() {
        assert!(verify_cutting_trace(&triangle(), &parse_tree("(1,2)").unwrap()).is_err());
    }

    #[test]
    fn root_check_matches_removal_enumeration() {
        // All complete graphs on 4 nodes with weights in {0, 1, 2}: the closed-form root
        // check accepts a split iff explicit enumeration of removal orders reaches it.
        for code in 0..3u32.pow(6) {
            let mut c = code;
            let g = ConfusionGraph::complete(4, |_, _| {
                let w = c % 3;
                c /= 3;
                w as u64
            })
            .unwrap();
            let reachable = reachable_splits(&g);
            for mask in 1u32..8 {
                let a: Vec<usize> = (1..=4).filter(|v| v == &1 || mask & (1 << (v - 2)) == 0).collect();
                let b: Vec<usize> = (2..=4).filter(|v| mask & (1 << (v - 2)) != 0).collect();
                let accepted = split_violation(&g, &a, &b).is_none();
                assert_eq!(accepted, reachable.contains(&a), "graph {:?} split {a:?}", g.edges());
            }
        }
    }

    #[test]
    fn exactly_one_tree_accepted_when_weights_distinct() {
        let g = ConfusionGraph::complete(4, |i, j| (i * i + 3 * j) as u64).unwrap();
        let accepted: Vec<ClassTree> = every_tree(&[1, 2, 3, 4])
            .into_iter()
            .filter(|t| verify_cutting_trace(&g, t).unwrap().accepted)
            .collect();
        assert_eq!(accepted, vec![tree_cutting(&g).unwrap()]);
    }

    #[test]
    fn triangle_spanning_tree() {
        let mst = max_spanning_tree(&triangle()).unwrap();
        let set: BTreeSet<(usize, usize)> = mst.iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(set, BTreeSet::from([(2, 1), (3, 2)]));
    }

    #[test]
    fn spanning_tree_small_cases() {
        let g = ConfusionGraph::complete(2, |_, _| 9).unwrap();
        assert_eq!(max_spanning_tree(&g).unwrap(), vec![Edge::new(2, 1, 9)]);
        let star = ConfusionGraph::new(
            vec![1, 2, 3, 4],
            vec![Edge::new(1, 2, 5), Edge::new(1, 3, 2), Edge::new(1, 4, 8)],
        )
        .unwrap();
        assert_eq!(max_spanning_tree(&star).unwrap().len(), 3);
        let broken = ConfusionGraph::new(vec![1, 2, 3], vec![Edge::new(1, 2, 1)]).unwrap();
        assert!(max_spanning_tree(&broken).is_err());
    }

    #[test]
    fn min_cut_of_triangle() {
        let (w, side) = min_cut(&triangle());
        assert_eq!(w, 3);
        assert_eq!(side, vec![3]);
    }
}
