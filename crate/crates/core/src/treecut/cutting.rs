use crate::error::{Error, Result};

use super::graph::{components, ConfusionGraph, Edge};
use super::tree::ClassTree;

/// One binary split: the edges deleted (in order) from `subset` up to and including the
/// disconnecting edge, and the resulting children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRecord {
    pub subset: Vec<usize>,
    pub removed: Vec<Edge>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

pub fn tree_cutting(graph: &ConfusionGraph) -> Result<ClassTree> {
    tree_cutting_with_trace(graph).map(|(tree, _)| tree)
}

/// Runs the cutting procedure and records every split, parents before children.
pub fn tree_cutting_with_trace(graph: &ConfusionGraph) -> Result<(ClassTree, Vec<SplitRecord>)> {
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut trace = Vec::new();
    let tree = cut(graph, graph.nodes(), &mut trace);
    Ok((tree, trace))
}

fn cut(graph: &ConfusionGraph, subset: &[usize], trace: &mut Vec<SplitRecord>) -> ClassTree {
    if subset.len() == 1 {
        return ClassTree::Leaf(subset[0]);
    }
    let sub = graph.induced(subset);
    let mut remaining: Vec<Edge> = sub.edges().to_vec();
    remaining.sort_by_key(Edge::cut_key);

    let mut removed = Vec::new();
    let parts = loop {
        // `subset` is connected on entry, so some removal must disconnect it before
        // the edge list runs dry.
        let edge = remaining.remove(0);
        removed.push(edge);
        let parts = components(sub.nodes(), remaining.iter());
        if parts.len() > 1 {
            break parts;
        }
    };
    debug_assert_eq!(parts.len(), 2, "a single deletion splits into exactly two parts");
    let (left, right) = order_children(parts[0].clone(), parts[1].clone());
    trace.push(SplitRecord {
        subset: subset.to_vec(),
        removed,
        left: left.clone(),
        right: right.clone(),
    });
    let l = cut(graph, &left, trace);
    let r = cut(graph, &right, trace);
    ClassTree::node(l, r)
}

/// Smaller side goes left; equal sizes put the side holding the smaller class first.
pub(crate) fn order_children(a: Vec<usize>, b: Vec<usize>) -> (Vec<usize>, Vec<usize>) {
    let key = |v: &Vec<usize>| (v.len(), v[0]);
    if key(&a) <= key(&b) {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treecut::graph::Edge;
    use crate::treecut::parse_tree;

    fn triangle() -> ConfusionGraph {
        ConfusionGraph::new(
            vec![1, 2, 3],
            vec![Edge::new(1, 2, 3), Edge::new(1, 3, 1), Edge::new(2, 3, 2)],
        )
        .unwrap()
    }

    #[test]
    fn triangle_example() {
        let (tree, trace) = tree_cutting_with_trace(&triangle()).unwrap();
        // {3} is the smaller side and goes left.
        assert_eq!(tree, parse_tree("(3,(1,2))").unwrap());
        assert_eq!(trace[0].removed.iter().map(|e| e.weight).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(trace[0].left, vec![3]);
    }

    #[test]
    fn two_classes_any_weight() {
        for w in [0, 1, 1000] {
            let g = ConfusionGraph::complete(2, |_, _| w).unwrap();
            assert_eq!(tree_cutting(&g).unwrap(), parse_tree("(1,2)").unwrap());
        }
    }

    #[test]
    fn disconnected_input_rejected() {
        let g = ConfusionGraph::new(vec![1, 2, 3], vec![Edge::new(1, 2, 1)]).unwrap();
        assert!(matches!(tree_cutting(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn singleton_isolated_by_heavy_edge_goes_left() {
        // Class 5 hangs on edges 0, 1, 2, 3, 6 and 20; everything else is heavier, so
        // after 0..6 are gone the weight-20 edge is the next cut and isolates {5}.
        let weights = |i: usize, j: usize| -> u64 {
            match (i, j) {
                (5, 1) => 0,
                (5, 2) => 1,
                (5, 3) => 2,
                (5, 4) => 3,
                (6, 5) => 20,
                (6, 1) => 6,
                _ => 40 + (i * 7 + j) as u64,
            }
        };
        let g = ConfusionGraph::complete(6, weights).unwrap();
        let (tree, trace) = tree_cutting_with_trace(&g).unwrap();
        let root = &trace[0];
        let mut cut: Vec<u64> = root.removed.iter().map(|e| e.weight).collect();
        cut.sort_unstable();
        assert_eq!(cut, vec![0, 1, 2, 3, 6, 20]);
        assert_eq!(root.left, vec![5]);
        assert_eq!(root.right, vec![1, 2, 3, 4, 6]);
        match tree {
            ClassTree::Node { left, .. } => assert_eq!(*left, ClassTree::Leaf(5)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_weight_edges_cut_first() {
        let g = ConfusionGraph::complete(4, |i, j| if (i, j) == (4, 3) { 0 } else { 5 }).unwrap();
        let (_, trace) = tree_cutting_with_trace(&g).unwrap();
        assert_eq!(trace[0].removed[0], Edge::new(4, 3, 0));
    }

    #[test]
    fn ties_break_lexicographically() {
        // All weights equal: the removal order is (2,1), (3,1), (3,2), (4,1), ...
        let g = ConfusionGraph::complete(3, |_, _| 1).unwrap();
        let (tree, trace) = tree_cutting_with_trace(&g).unwrap();
        assert_eq!(trace[0].removed, vec![Edge::new(2, 1, 1), Edge::new(3, 1, 1)]);
        assert_eq!(tree, parse_tree("(1,(2,3))").unwrap());
    }

    #[test]
    fn leaf_count_and_subsets() {
        let g = ConfusionGraph::complete(6, |i, j| ((i * 31 + j * 17) % 11) as u64).unwrap();
        let t = tree_cutting(&g).unwrap();
        t.validate(6).unwrap();
        assert_eq!(t.node_count(), 11);
    }

    mod props {
        use super::*;
        use crate::treecut::oracle::verify_cutting_trace;
        use proptest::prelude::*;

        fn arb_graph() -> impl Strategy<Value = ConfusionGraph> {
            (2usize..8).prop_flat_map(|n| {
                proptest::collection::vec(0u64..10, n * (n - 1) / 2).prop_map(move |w| {
                    let mut it = w.into_iter();
                    ConfusionGraph::complete(n, |_, _| it.next().unwrap()).unwrap()
                })
            })
        }

        fn check_subsets(t: &ClassTree) -> bool {
            match t {
                ClassTree::Leaf(_) => true,
                ClassTree::Node { classes, left, right } => {
                    let mut union = left.classes();
                    union.extend(right.classes());
                    union.sort_unstable();
                    let disjoint = union.windows(2).all(|p| p[0] != p[1]);
                    disjoint && union == *classes && check_subsets(left) && check_subsets(right)
                }
            }
        }

        proptest! {
            #[test]
            fn tree_shape(g in arb_graph()) {
                let (t, trace) = tree_cutting_with_trace(&g).unwrap();
                let mut leaves = t.leaves();
                leaves.sort_unstable();
                prop_assert_eq!(&leaves, g.nodes());
                prop_assert_eq!(t.internal_count(), g.nodes().len() - 1);
                prop_assert_eq!(trace.len(), g.nodes().len() - 1);
                prop_assert!(check_subsets(&t));
                prop_assert!(verify_cutting_trace(&g, &t).unwrap().accepted);
            }

            #[test]
            fn removals_are_nondecreasing(g in arb_graph()) {
                let (_, trace) = tree_cutting_with_trace(&g).unwrap();
                for split in trace {
                    prop_assert!(split.removed.windows(2).all(|p| p[0].cut_key() <= p[1].cut_key()));
                    prop_assert!(split.left.len() <= split.right.len());
                }
            }
        }
    }
}
