use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DARE20_JSON: &str = include_str!("../../assets/dare20.json");
const MINI2_JSON: &str = include_str!("../../assets/mini2.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "leaf")]
    Leaf(String),
    #[serde(rename = "child")]
    Child(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub name: String,
    pub branches: Vec<Branch>,
    /// Labels reachable through each branch. Derived from the structure when
    /// omitted in the file; checked against it otherwise.
    #[serde(default)]
    pub groups: Vec<Vec<String>>,
}

impl TreeNode {
    pub fn arity(&self) -> usize {
        self.branches.len()
    }

    /// Branch whose label group contains `label`.
    pub fn branch_of(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|l| l == label))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyFile {
    root: usize,
    nodes: Vec<TreeNode>,
}

/// A validated classifier tree. Nodes keep file order; ids are resolved
/// through [`position`](Self::position).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    nodes: Vec<TreeNode>,
    root: usize,
    index: HashMap<usize, usize>,
}

impl TreeTopology {
    pub fn new(nodes: Vec<TreeNode>, root: usize) -> Result<Self> {
        let mut index = HashMap::new();
        for (pos, n) in nodes.iter().enumerate() {
            if index.insert(n.id, pos).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate node id {}", n.id)));
            }
        }
        if !index.contains_key(&root) {
            return Err(Error::UnknownNode(root));
        }
        for n in &nodes {
            if n.arity() < 2 {
                return Err(Error::ArityMismatch { node: n.id, reason: format!("{} branch(es), need at least 2", n.arity()) });
            }
            if !n.groups.is_empty() && n.groups.len() != n.arity() {
                return Err(Error::ArityMismatch {
                    node: n.id,
                    reason: format!("{} branches but {} label groups", n.arity(), n.groups.len()),
                });
            }
            for b in &n.branches {
                if let Branch::Child(c) = b {
                    if !index.contains_key(c) {
                        return Err(Error::UnknownNode(*c));
                    }
                }
            }
        }
        let mut topo = Self { nodes, root, index };
        topo.check_acyclic()?;
        topo.check_parents()?;
        topo.check_leaves()?;
        topo.resolve_groups()?;
        Ok(topo)
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; self.nodes.len()];
        let mut stack = vec![(self.position(self.root), 0usize)];
        state[self.position(self.root)] = 1;
        while let Some((pos, next)) = stack.pop() {
            let node = &self.nodes[pos];
            if next == node.arity() {
                state[pos] = 2;
                continue;
            }
            stack.push((pos, next + 1));
            if let Branch::Child(c) = node.branches[next] {
                let cp = self.position(c);
                match state[cp] {
                    1 => return Err(Error::CycleDetected(c)),
                    0 => {
                        state[cp] = 1;
                        stack.push((cp, 0));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn check_parents(&self) -> Result<()> {
        let mut parents = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for b in &n.branches {
                if let Branch::Child(c) = b {
                    parents[self.position(*c)] += 1;
                }
            }
        }
        for (pos, n) in self.nodes.iter().enumerate() {
            let want = usize::from(n.id != self.root);
            if parents[pos] != want {
                return Err(Error::InvalidConfig(format!(
                    "node {} ({}) has {} parents, expected {want}",
                    n.id, n.name, parents[pos]
                )));
            }
        }
        Ok(())
    }

    fn check_leaves(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            for b in &n.branches {
                if let Branch::Leaf(l) = b {
                    if !seen.insert(l.as_str()) {
                        return Err(Error::DuplicateLeaf(l.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve_groups(&mut self) -> Result<()> {
        for pos in 0..self.nodes.len() {
            let derived: Vec<Vec<String>> = self.nodes[pos].branches.iter().map(|b| self.leaves_under(b)).collect();
            let node = &mut self.nodes[pos];
            if node.groups.is_empty() {
                node.groups = derived;
                continue;
            }
            for (b, (given, want)) in node.groups.iter().zip(&derived).enumerate() {
                let g: BTreeSet<&String> = given.iter().collect();
                let w: BTreeSet<&String> = want.iter().collect();
                if g != w || g.len() != given.len() {
                    return Err(Error::ArityMismatch {
                        node: node.id,
                        reason: format!("label group of branch {b} does not match the leaves below it"),
                    });
                }
            }
        }
        Ok(())
    }

    fn leaves_under(&self, branch: &Branch) -> Vec<String> {
        match branch {
            Branch::Leaf(l) => vec![l.clone()],
            Branch::Child(c) => self.node(*c).branches.iter().flat_map(|b| self.leaves_under(b)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TopologyFile = serde_json::from_str(text)?;
        Self::new(file.nodes, file.root)
    }

    pub fn to_json(&self) -> String {
        let file = TopologyFile { root: self.root, nodes: self.nodes.clone() };
        serde_json::to_string_pretty(&file).expect("topology serializes")
    }

    /// Reads a topology file; `dare20` and `mini2` resolve to the bundled
    /// topologies when no such file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            if let Some(t) = path.to_str().and_then(Self::builtin) {
                return Ok(t);
            }
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "dare20" | "dare20.json" => Some(Self::dare20()),
            "mini2" | "mini2.json" => Some(Self::mini2()),
            _ => None,
        }
    }

    /// The 20-class diver tree: 11 internal nodes over 4 levels.
    pub fn dare20() -> Self {
        Self::from_json(DARE20_JSON).expect("bundled dare20 topology")
    }

    /// One binary node over `class0` / `class1`.
    pub fn mini2() -> Self {
        Self::from_json(MINI2_JSON).expect("bundled mini2 topology")
    }

    /// A single node with one leaf per label, i.e. a flat classifier.
    pub fn flat(labels: &[String]) -> Result<Self> {
        let node = TreeNode {
            id: 0,
            name: "Flat".into(),
            branches: labels.iter().cloned().map(Branch::Leaf).collect(),
            groups: Vec::new(),
        };
        Self::new(vec![node], 0)
    }

    /// Every label in `labels` must be a leaf and every leaf must be a label.
    pub fn check_labels(&self, labels: &[String]) -> Result<()> {
        let leaves: BTreeSet<&str> = self.leaves().into_iter().collect();
        if let Some(missing) = labels.iter().find(|l| !leaves.contains(l.as_str())) {
            return Err(Error::UncoveredLabel(missing.clone()));
        }
        let known: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if let Some(extra) = leaves.iter().find(|l| !known.contains(*l)) {
            return Err(Error::InvalidConfig(format!("leaf {extra:?} is not in the label set")));
        }
        Ok(())
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn position(&self, id: usize) -> usize {
        self.index[&id]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[self.position(id)]
    }

    pub fn leaves(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .flat_map(|n| n.branches.iter())
            .filter_map(|b| match b {
                Branch::Leaf(l) => Some(l.as_str()),
                Branch::Child(_) => None,
            })
            .collect()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len()
    }

    /// Every root-to-leaf route as `(node id, branch index)` steps plus the leaf.
    pub fn paths(&self) -> Vec<(Vec<(usize, usize)>, String)> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_paths(self.root, &mut prefix, &mut out);
        out
    }

    fn collect_paths(&self, id: usize, prefix: &mut Vec<(usize, usize)>, out: &mut Vec<(Vec<(usize, usize)>, String)>) {
        for (b, branch) in self.node(id).branches.iter().enumerate() {
            prefix.push((id, b));
            match branch {
                Branch::Leaf(l) => out.push((prefix.clone(), l.clone())),
                Branch::Child(c) => self.collect_paths(*c, prefix, out),
            }
            prefix.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::LabelTaxonomy;

    fn node(id: usize, branches: Vec<Branch>) -> TreeNode {
        TreeNode { id, name: format!("n{id}"), branches, groups: vec![] }
    }

    fn leaf(s: &str) -> Branch {
        Branch::Leaf(s.into())
    }

    #[test]
    fn dare20_shape() {
        let t = TreeTopology::dare20();
        assert_eq!(t.leaves().len(), 20);
        assert_eq!(t.internal_count(), 11);
        let arities: Vec<usize> = t.nodes().iter().map(TreeNode::arity).collect();
        assert_eq!(arities, vec![3, 5, 3, 3, 4, 2, 2, 2, 2, 2, 2]);
        t.check_labels(LabelTaxonomy::caddy().labels()).unwrap();
        assert_eq!(t.paths().len(), 20);
        let names: Vec<&str> = t.nodes().iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names[..3], ["RootNet", "GNet10", "PNet11"]);
    }

    #[test]
    fn minimal_binary_tree() {
        let t = TreeTopology::new(vec![node(0, vec![leaf("A"), leaf("B")])], 0).unwrap();
        t.check_labels(&["A".to_string(), "B".to_string()]).unwrap();
        assert_eq!(t.node(0).groups, vec![vec!["A".to_string()], vec!["B".to_string()]]);
    }

    #[test]
    fn uncovered_label() {
        let mut labels = LabelTaxonomy::caddy().labels().to_vec();
        labels.push("jump".into());
        assert!(matches!(TreeTopology::dare20().check_labels(&labels), Err(Error::UncoveredLabel(l)) if l == "jump"));
    }

    #[test]
    fn structural_errors() {
        let cyc = vec![node(0, vec![Branch::Child(1), leaf("a")]), node(1, vec![Branch::Child(0), leaf("b")])];
        assert!(matches!(TreeTopology::new(cyc, 0), Err(Error::CycleDetected(0))));

        let self_loop = vec![node(0, vec![Branch::Child(0), leaf("a")])];
        assert!(matches!(TreeTopology::new(self_loop, 0), Err(Error::CycleDetected(0))));

        let dup = vec![node(0, vec![leaf("a"), Branch::Child(1)]), node(1, vec![leaf("a"), leaf("b")])];
        assert!(matches!(TreeTopology::new(dup, 0), Err(Error::DuplicateLeaf(_))));

        let unary = vec![node(0, vec![leaf("a")])];
        assert!(matches!(TreeTopology::new(unary, 0), Err(Error::ArityMismatch { .. })));

        let mut bad_groups = node(0, vec![leaf("a"), leaf("b")]);
        bad_groups.groups = vec![vec!["a".into()]];
        assert!(matches!(TreeTopology::new(vec![bad_groups], 0), Err(Error::ArityMismatch { .. })));

        let mut wrong_groups = node(0, vec![leaf("a"), leaf("b")]);
        wrong_groups.groups = vec![vec!["b".into()], vec!["a".into()]];
        assert!(matches!(TreeTopology::new(vec![wrong_groups], 0), Err(Error::ArityMismatch { .. })));

        let dangling = vec![node(0, vec![leaf("a"), Branch::Child(7)])];
        assert!(matches!(TreeTopology::new(dangling, 0), Err(Error::UnknownNode(7))));

        let orphan = vec![node(0, vec![leaf("a"), leaf("b")]), node(1, vec![leaf("c"), leaf("d")])];
        assert!(matches!(TreeTopology::new(orphan, 0), Err(Error::InvalidConfig(_))));

        let two_parents = vec![
            node(0, vec![Branch::Child(1), Branch::Child(1)]),
            node(1, vec![leaf("c"), leaf("d")]),
        ];
        assert!(TreeTopology::new(two_parents, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = TreeTopology::dare20();
        assert_eq!(TreeTopology::from_json(&t.to_json()).unwrap(), t);
        let no_groups = r#"{"root":3,"nodes":[{"id":3,"name":"r","branches":[{"leaf":"x"},{"leaf":"y"}]}]}"#;
        assert_eq!(TreeTopology::from_json(no_groups).unwrap().node(3).branch_of("y"), Some(1));
    }
}
