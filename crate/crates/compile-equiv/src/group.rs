use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};
use trace_model::NodeId;

use crate::diff::DiffBreakdown;

/// A set of nodes whose normalized `-S -O0` assembly is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct O0Group {
    /// Hash of the shared normalized assembly.
    pub group_id: String,
    /// Member node IDs, ascending.
    pub members: Vec<NodeId>,
    /// Lowest member ID; its source stands for the group in diffs.
    pub representative: NodeId,
    pub breakdown: Option<DiffBreakdown>,
}

impl O0Group {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Partitions compiled nodes by canonical-assembly hash. Groups come back
/// sorted by descending size (ID ascending on ties) so report tables are
/// stable run to run.
pub fn group_by_asm(entries: &[(NodeId, String)]) -> Vec<O0Group> {
    let mut by_hash: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for (node, normalized_asm) in entries {
        let digest = Sha256::digest(normalized_asm.as_bytes());
        by_hash.entry(hex::encode(&digest[..8])).or_default().push(node.clone());
    }
    let mut groups: Vec<O0Group> = by_hash
        .into_iter()
        .map(|(group_id, mut members)| {
            members.sort();
            let representative = members[0].clone();
            O0Group { group_id, members, representative, breakdown: None }
        })
        .collect();
    groups.sort_by(|a, b| b.size().cmp(&a.size()).then(a.group_id.cmp(&b.group_id)));
    groups
}

pub fn singleton_count(groups: &[O0Group]) -> usize {
    groups.iter().filter(|g| g.size() == 1).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nid(s: &str) -> NodeId {
        NodeId(s.to_string())
    }

    #[test]
    fn identical_asm_collapses_to_one_group() {
        let entries = vec![
            (nid("a"), "mov w0, 1\n".to_string()),
            (nid("b"), "mov w0, 1\n".to_string()),
            (nid("c"), "mov w0, 1\n".to_string()),
        ];
        let groups = group_by_asm(&entries);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].size(), 3);
        assert_eq!(groups[0].representative, nid("a"));
    }

    #[test]
    fn different_asm_splits() {
        let entries = vec![
            (nid("a"), "mov w0, 1\n".to_string()),
            (nid("b"), "mov w0, 2\n".to_string()),
        ];
        let groups = group_by_asm(&entries);
        assert_eq!(groups.len(), 2);
        assert_eq!(singleton_count(&groups), 2);
    }

    #[test]
    fn sizes_partition_the_input_and_sort_descending() {
        let mut entries = Vec::new();
        for i in 0..5 {
            entries.push((nid(&format!("x{i}")), "A\n".to_string()));
        }
        for i in 0..2 {
            entries.push((nid(&format!("y{i}")), "B\n".to_string()));
        }
        entries.push((nid("z"), "C\n".to_string()));
        let groups = group_by_asm(&entries);
        let sizes: Vec<usize> = groups.iter().map(O0Group::size).collect();
        assert_eq!(sizes, vec![5, 2, 1]);
        assert_eq!(sizes.iter().sum::<usize>(), entries.len());
    }
}
