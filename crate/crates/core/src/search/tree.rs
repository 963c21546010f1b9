//! Arena-backed search tree with the per-edge statistics the selection
//! rules read: mean value Q, visit count N, and the initial estimate each
//! node was born with.

use crate::mdp::ReasoningState;

/// Index into the tree arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

pub const ROOT: NodeId = NodeId(0);

/// Child indices from the root; the stable on-disk name of a node.
pub type NodePath = Vec<usize>;

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub state: ReasoningState,
    pub parent: Option<NodeId>,
    /// Index of this node within its parent's child list.
    pub child_index: usize,
    pub children: Vec<NodeId>,
    /// Mean of the values backed up through the incoming edge.
    pub q: f64,
    /// Completed backups through this node.
    pub n: u64,
    /// Value-function estimate at creation time.
    pub v_init: f64,
    pub terminal: bool,
    pub reward: Option<u8>,
    /// Set when this subtree can no longer produce children (policy
    /// exhausted); selection skips dead branches.
    pub dead: bool,
}

#[derive(Debug)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
}

impl SearchTree {
    pub fn new(root_state: ReasoningState) -> Self {
        let root_terminal = root_state.terminal;
        SearchTree {
            nodes: vec![TreeNode {
                state: root_state,
                parent: None,
                child_index: 0,
                children: Vec::new(),
                q: 0.0,
                n: 0,
                v_init: 0.0,
                terminal: root_terminal,
                reward: None,
                dead: false,
            }],
        }
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_child(&mut self, parent: NodeId, state: ReasoningState, v_init: f64) -> NodeId {
        let id = NodeId(self.nodes.len());
        let child_index = self.node(parent).children.len();
        let terminal = state.terminal;
        self.nodes.push(TreeNode {
            state,
            parent: Some(parent),
            child_index,
            children: Vec::new(),
            q: v_init,
            n: 0,
            v_init,
            terminal,
            reward: None,
            dead: false,
        });
        self.node_mut(parent).children.push(id);
        id
    }

    /// Child indices from the root down to `id`.
    pub fn path(&self, id: NodeId) -> NodePath {
        let mut path = Vec::new();
        let mut cursor = id;
        while let Some(parent) = self.node(cursor).parent {
            path.push(self.node(cursor).child_index);
            cursor = parent;
        }
        path.reverse();
        path
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn lineage(&self, id: NodeId) -> Vec<NodeId> {
        let mut ids = vec![id];
        let mut cursor = id;
        while let Some(parent) = self.node(cursor).parent {
            ids.push(parent);
            cursor = parent;
        }
        ids.reverse();
        ids
    }

    /// Increments N along the root..leaf path and folds `value` into each
    /// edge mean below the root.
    pub fn backup(&mut self, leaf: NodeId, value: f64) {
        for id in self.lineage(leaf) {
            let node = self.node_mut(id);
            node.n += 1;
            if node.parent.is_some() {
                node.q += (value - node.q) / node.n as f64;
            }
        }
    }

    /// Marks `id` dead and propagates death upward while every sibling is
    /// dead too. Returns true when the root itself died.
    pub fn mark_dead(&mut self, id: NodeId) -> bool {
        let mut cursor = Some(id);
        while let Some(current) = cursor {
            self.node_mut(current).dead = true;
            match self.node(current).parent {
                Some(parent) => {
                    let all_dead = self
                        .node(parent)
                        .children
                        .iter()
                        .all(|&c| self.node(c).dead);
                    if all_dead {
                        cursor = Some(parent);
                    } else {
                        return false;
                    }
                }
                None => return true,
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Domain, Problem, ReasoningStep};
    use std::sync::Arc;

    fn root_state() -> ReasoningState {
        ReasoningState::root(Arc::new(Problem {
            id: "t".into(),
            prompt: "q".into(),
            answer: "a".into(),
            domain: Domain::FreeformMath,
            difficulty: None,
        }))
    }

    #[test]
    fn paths_name_nodes() {
        let mut tree = SearchTree::new(root_state());
        let root_child = tree.add_child(
            ROOT,
            tree.node(ROOT).state.extend(ReasoningStep::new("a")).unwrap(),
            0.5,
        );
        let grandchild = tree.add_child(
            root_child,
            tree.node(root_child)
                .state
                .extend(ReasoningStep::new("b"))
                .unwrap(),
            0.25,
        );
        assert_eq!(tree.path(ROOT), Vec::<usize>::new());
        assert_eq!(tree.path(root_child), vec![0]);
        assert_eq!(tree.path(grandchild), vec![0, 0]);
        assert_eq!(tree.lineage(grandchild), vec![ROOT, root_child, grandchild]);
    }

    #[test]
    fn backup_maintains_edge_means() {
        let mut tree = SearchTree::new(root_state());
        let child = tree.add_child(
            ROOT,
            tree.node(ROOT).state.extend(ReasoningStep::new("a")).unwrap(),
            0.9, // initialization is washed out by the first backup
        );
        tree.backup(child, 1.0);
        tree.backup(child, 0.0);
        tree.backup(child, 1.0);
        assert_eq!(tree.node(ROOT).n, 3);
        assert_eq!(tree.node(child).n, 3);
        assert!((tree.node(child).q - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn death_propagates_when_all_children_die() {
        let mut tree = SearchTree::new(root_state());
        let a = tree.add_child(
            ROOT,
            tree.node(ROOT).state.extend(ReasoningStep::new("a")).unwrap(),
            0.0,
        );
        let b = tree.add_child(
            ROOT,
            tree.node(ROOT).state.extend(ReasoningStep::new("b")).unwrap(),
            0.0,
        );
        assert!(!tree.mark_dead(a));
        assert!(!tree.node(ROOT).dead);
        assert!(tree.mark_dead(b));
        assert!(tree.node(ROOT).dead);
    }
}
