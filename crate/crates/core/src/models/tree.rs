//! Flattened binary decision trees.

use serde::{Deserialize, Serialize};

/// One node of a [`Tree`]. Internal nodes route `x[feature] <= threshold` to
/// `left`, everything else to `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<usize>,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub left: usize,
    #[serde(default)]
    pub right: usize,
    /// Leaf output; internal nodes keep the cover-weighted mean of their subtree.
    pub value: Vec<f64>,
    /// Sum of training sample weights reaching this node.
    pub cover: f64,
}

impl Node {
    pub fn leaf(value: Vec<f64>, cover: f64) -> Self {
        Node {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
            cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Node arena with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return i,
                Some(f) => i = if x[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        &self.nodes[self.leaf_index(x)].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left).max(go(t, n.right))
            }
        }
        go(self, 0)
    }

    pub fn output_len(&self) -> usize {
        self.nodes[0].value.len()
    }

    /// Features referenced by any split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter_map(|n| n.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Checks arena shape: children in range and after their parent, positive
    /// covers, equal-length values.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let width = self.output_len();
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.cover > 0.0) {
                return Err(format!("node {i} has cover {}", n.cover));
            }
            if n.value.len() != width {
                return Err(format!("node {i} value width {} != {width}", n.value.len()));
            }
            if !n.is_leaf() {
                let len = self.nodes.len();
                if n.left <= i || n.right <= i || n.left >= len || n.right >= len {
                    return Err(format!("node {i} has invalid children"));
                }
            }
        }
        Ok(())
    }
}

/// Growth helper shared by the learners: nodes are appended depth-first.
pub(crate) struct TreeBuilder {
    pub nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder { nodes: Vec::new() }
    }

    pub fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn finish(self) -> Tree {
        Tree { nodes: self.nodes }
    }
}
