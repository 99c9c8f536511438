use crate::error::{Error, Result};
use crate::metrics::LowerTriangular;

/// Undirected weighted edge, stored with `i > j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: u64,
}

impl Edge {
    pub fn new(a: usize, b: usize, weight: u64) -> Self {
        let (i, j) = if a > b { (a, b) } else { (b, a) };
        Self { i, j, weight }
    }

    /// Removal order: weight, then lexicographic `(i, j)`.
    pub fn cut_key(&self) -> (u64, usize, usize) {
        (self.weight, self.i, self.j)
    }
}

/// Weighted undirected graph over class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionGraph {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
}

impl ConfusionGraph {
    /// Nodes are deduplicated and sorted; every edge must join two distinct known nodes
    /// and each unordered pair may appear at most once.
    pub fn new(mut nodes: Vec<usize>, edges: Vec<Edge>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("graph has no nodes".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &edges {
            if e.i == e.j || nodes.binary_search(&e.i).is_err() || nodes.binary_search(&e.j).is_err() {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) does not join two distinct graph nodes",
                    e.i, e.j
                )));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate edge ({}, {})",
                    e.i, e.j
                )));
            }
        }
        let mut edges = edges;
        edges.sort_by_key(|e| (e.i, e.j));
        Ok(Self { nodes, edges })
    }

    /// Complete graph on `1..=n` with weights from `weight(i, j)`, `i > j`.
    pub fn complete(n: usize, mut weight: impl FnMut(usize, usize) -> u64) -> Result<Self> {
        let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 2..=n {
            for j in 1..i {
                edges.push(Edge::new(i, j, weight(i, j)));
            }
        }
        Self::new((1..=n).collect(), edges)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<u64> {
        let key = Edge::new(a, b, 0);
        self.edges
            .iter()
            .find(|e| e.i == key.i && e.j == key.j)
            .map(|e| e.weight)
    }

    /// Subgraph induced by `subset` (edges with both ends inside).
    pub fn induced(&self, subset: &[usize]) -> Self {
        let mut nodes = subset.to_vec();
        nodes.sort_unstable();
        let edges = self
            .edges
            .iter()
            .filter(|e| nodes.binary_search(&e.i).is_ok() && nodes.binary_search(&e.j).is_ok())
            .copied()
            .collect();
        Self { nodes, edges }
    }

    pub fn is_connected(&self) -> bool {
        components(&self.nodes, self.edges.iter()).len() == 1
    }
}

/// Connected components over `nodes` using `edges`, each sorted, ordered by minimum node.
pub(crate) fn components<'a>(
    nodes: &[usize],
    edges: impl Iterator<Item = &'a Edge>,
) -> Vec<Vec<usize>> {
    let index = |v: usize| nodes.binary_search(&v).ok();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        if let (Some(a), Some(b)) = (index(e.i), index(e.j)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..nodes.len() {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(nodes[k]);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Complete graph on classes `1..=C` weighted by the fold; zero-weight pairs stay edges.
pub fn graph_from_fold(fold: &LowerTriangular) -> Result<ConfusionGraph> {
    let n = fold.size();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {n}"
        )));
    }
    ConfusionGraph::complete(n, |i, j| fold.get(i, j))
}
