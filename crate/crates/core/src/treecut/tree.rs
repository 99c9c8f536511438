use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Binary tree over class subsets. Internal nodes carry the sorted union of their
/// children's classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClassTree {
    Leaf(usize),
    Node {
        classes: Vec<usize>,
        left: Box<ClassTree>,
        right: Box<ClassTree>,
    },
}

impl ClassTree {
    pub fn node(left: ClassTree, right: ClassTree) -> Self {
        let mut classes = left.classes();
        classes.extend(right.classes());
        classes.sort_unstable();
        ClassTree::Node {
            classes,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Sorted class subset covered by this subtree.
    pub fn classes(&self) -> Vec<usize> {
        match self {
            ClassTree::Leaf(c) => vec![*c],
            ClassTree::Node { classes, .. } => classes.clone(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ClassTree::Leaf(_) => 1,
            ClassTree::Node { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            ClassTree::Leaf(_) => 0,
            ClassTree::Node { left, right, .. } => 1 + left.internal_count() + right.internal_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.leaf_count() + self.internal_count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        match self {
            ClassTree::Leaf(_) => 0,
            ClassTree::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            ClassTree::Leaf(c) => out.push(*c),
            ClassTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Visits `(node, parent pre-order index)` in pre-order.
    pub fn preorder(&self) -> Vec<(&ClassTree, Option<usize>)> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a ClassTree, parent: Option<usize>, out: &mut Vec<(&'a ClassTree, Option<usize>)>) {
            let me = out.len();
            out.push((t, parent));
            if let ClassTree::Node { left, right, .. } = t {
                walk(left, Some(me), out);
                walk(right, Some(me), out);
            }
        }
        walk(self, None, &mut out);
        out
    }

    /// Checks the leaves are exactly `1..=num_classes`, each once, and subsets are consistent.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let mut leaves = self.leaves();
        leaves.sort_unstable();
        if leaves != (1..=num_classes).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "tree leaves {leaves:?} are not exactly the classes 1..={num_classes}"
            )));
        }
        for (node, _) in self.preorder() {
            if let ClassTree::Node { classes, left, right } = node {
                let mut union = left.classes();
                union.extend(right.classes());
                union.sort_unstable();
                if &union != classes {
                    return Err(Error::Invariant(format!(
                        "node subset {classes:?} differs from its children {union:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Left-leaning chain: `(((1,2),3),...)`.
    pub fn chain(num_classes: usize) -> Self {
        let mut t = ClassTree::Leaf(1);
        for c in 2..=num_classes {
            t = ClassTree::node(t, ClassTree::Leaf(c));
        }
        t
    }

    /// Balanced split of `1..=num_classes`, left half rounded down.
    pub fn balanced(num_classes: usize) -> Self {
        fn build(classes: &[usize]) -> ClassTree {
            if classes.len() == 1 {
                return ClassTree::Leaf(classes[0]);
            }
            let mid = classes.len() / 2;
            ClassTree::node(build(&classes[..mid]), build(&classes[mid..]))
        }
        build(&(1..=num_classes).collect::<Vec<_>>())
    }
}

impl fmt::Display for ClassTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassTree::Leaf(c) => write!(f, "{c}"),
            ClassTree::Node { left, right, .. } => write!(f, "({left},{right})"),
        }
    }
}

/// Exact structural equality, including left/right order.
pub fn tree_equals(a: &ClassTree, b: &ClassTree) -> bool {
    a == b
}

pub fn serialize_tree(t: &ClassTree) -> String {
    t.to_string()
}

/// Parses the nested-parenthesis form, e.g. `((1,2),3)`. Whitespace is ignored.
pub fn parse_tree(text: &str) -> Result<ClassTree> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let tree = p.tree()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("unexpected trailing input"));
    }
    let mut leaves = tree.leaves();
    leaves.sort_unstable();
    if leaves.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parse {
            position: 0,
            message: "a class appears more than once".into(),
        });
    }
    Ok(tree)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, ch: u8, message: &str) -> Result<()> {
        self.skip_ws();
        if self.bytes.get(self.pos) == Some(&ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(message))
        }
    }

    fn tree(&mut self) -> Result<ClassTree> {
        self.skip_ws();
        match self.bytes.get(self.pos) {
            Some(b'(') => {
                self.pos += 1;
                let left = self.tree()?;
                self.expect(b',', "expected ','")?;
                let right = self.tree()?;
                self.expect(b')', "unbalanced parenthesis: expected ')'")?;
                Ok(ClassTree::node(left, right))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
                let class: usize = text.parse().map_err(|_| Error::Parse {
                    position: start,
                    message: format!("class index `{text}` out of range"),
                })?;
                if class == 0 {
                    return Err(Error::Parse {
                        position: start,
                        message: "class indices are 1-based".into(),
                    });
                }
                Ok(ClassTree::Leaf(class))
            }
            Some(_) => Err(self.error("expected '(' or a class index")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

impl Serialize for ClassTree {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ClassTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_tree(&text).map_err(serde::de::Error::custom)
    }
}
