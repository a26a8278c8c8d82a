use std::collections::BTreeSet;

use super::{split_model_id, ModelRecord, ROOT_PARENT};

#[derive(Clone, Debug, PartialEq)]
pub struct LineageNode {
    pub model_id: String,
    pub child: String,
    pub parent: String,
    pub frozen: bool,
    pub created: u64,
}

/// One agent's models and their inheritance edges.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineageTree {
    nodes: Vec<LineageNode>,
}

impl LineageTree {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ModelRecord>) -> Self {
        let mut nodes: Vec<LineageNode> = records
            .into_iter()
            .map(|r| {
                let (parent, child) = split_model_id(&r.model_id).unwrap_or((ROOT_PARENT, &r.model_id));
                LineageNode {
                    model_id: r.model_id.clone(),
                    child: child.to_string(),
                    parent: parent.to_string(),
                    frozen: r.frozen,
                    created: r.created,
                }
            })
            .collect();
        nodes.sort_by_key(|n| n.created);
        LineageTree { nodes }
    }

    pub fn nodes(&self) -> &[LineageNode] {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Models nobody has inherited from yet, oldest first.
    pub fn leaves(&self) -> Vec<&LineageNode> {
        let parents: BTreeSet<&str> = self.nodes.iter().map(|n| n.parent.as_str()).collect();
        self.nodes.iter().filter(|n| !parents.contains(n.child.as_str())).collect()
    }

    /// Frozen models, oldest first.
    pub fn frozen(&self) -> Vec<&LineageNode> {
        self.nodes.iter().filter(|n| n.frozen).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::league::testutil::record;
    use crate::league::Role;

    fn tree(ids: &[&str]) -> LineageTree {
        let recs: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut r = record(id, "x", Role::AEE);
                r.created = i as u64;
                r.frozen = true;
                r
            })
            .collect();
        LineageTree::from_records(&recs)
    }

    #[test]
    fn inheritance_example_leaves() {
        let t = tree(&["None:0001", "0001:0002", "None:0003"]);
        let leaves: Vec<_> = t.leaves().iter().map(|n| n.child.clone()).collect();
        assert_eq!(leaves, vec!["0002", "0003"]);
        let t = tree(&["None:0001", "0001:0002", "None:0003", "0002:0004"]);
        let leaves: Vec<_> = t.leaves().iter().map(|n| n.child.clone()).collect();
        assert_eq!(leaves, vec!["0003", "0004"]);
    }
}
