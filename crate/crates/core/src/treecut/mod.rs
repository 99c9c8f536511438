//! Confusion graph → binary class tree.
//!
//! [`tree_cutting`] repeatedly deletes the globally lightest remaining edge of the
//! confusion graph. The first deletion that disconnects the graph defines a binary
//! split; each side is processed recursively until single classes remain.
//!
//! The [`oracle`] submodule holds independent checks used by the test suites: a
//! trace verifier that does not simulate the algorithm, the maximum-spanning-tree
//! dual, and exhaustive minimum-cut enumeration.

mod cutting;
mod graph;
pub mod oracle;
mod tree;

pub use cutting::{tree_cutting, tree_cutting_with_trace, SplitRecord};
pub use graph::{graph_from_fold, ConfusionGraph, Edge};
pub use oracle::{max_spanning_tree, verify_cutting_trace, Verification};
pub use tree::{parse_tree, serialize_tree, tree_equals, ClassTree};
