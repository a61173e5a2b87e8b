//! Rooted object-graph snapshots and their JSON form.
//!
//! ```json
//! { "root": 0, "nodes": { "0": { "class": "A", "fields": { "x": {"int": 1}, "next": {"ref": 0} } } } }
//! ```

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapValue {
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
    Ref(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapNode {
    pub class: String,
    pub fields: IndexMap<String, SnapValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub root: u32,
    pub nodes: BTreeMap<u32, SnapNode>,
}

impl Snapshot {
    pub fn root_class(&self) -> &str {
        &self.nodes[&self.root].class
    }

    /// Every referenced node id is defined, including the root.
    pub fn is_well_formed(&self) -> bool {
        self.nodes.contains_key(&self.root)
            && self.nodes.values().all(|n| {
                n.fields.values().all(|v| match v {
                    SnapValue::Ref(id) => self.nodes.contains_key(id),
                    _ => true,
                })
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Snapshot, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Canonical text of the bisimulation quotient of this graph. Two
    /// snapshots have equal fingerprints exactly when their roots are
    /// structurally equal in the `deep_equals` sense.
    pub fn fingerprint(&self) -> String {
        let block = bisimulation_blocks(self);
        // BFS over quotient nodes from the root's block, naming blocks in visit order.
        let mut names: HashMap<usize, usize> = HashMap::new();
        let mut rep: HashMap<usize, u32> = HashMap::new();
        for (id, b) in &block {
            rep.entry(*b).or_insert(*id);
        }
        let mut queue = std::collections::VecDeque::new();
        let root_block = block[&self.root];
        names.insert(root_block, 0);
        queue.push_back(root_block);
        let mut out = String::new();
        while let Some(b) = queue.pop_front() {
            let node = &self.nodes[&rep[&b]];
            out.push_str(&format!("#{}:{}{{", names[&b], node.class));
            for (f, v) in &node.fields {
                out.push_str(f);
                out.push('=');
                match v {
                    SnapValue::Ref(target) => {
                        let tb = block[target];
                        let next = names.len();
                        let name = *names.entry(tb).or_insert_with(|| {
                            queue.push_back(tb);
                            next
                        });
                        out.push_str(&format!("@{name}"));
                    }
                    other => out.push_str(&prim_text(other)),
                }
                out.push(';');
            }
            out.push('}');
        }
        out
    }
}

fn prim_text(v: &SnapValue) -> String {
    match v {
        SnapValue::Int(n) => format!("i{n}"),
        SnapValue::Bool(b) => format!("b{b}"),
        SnapValue::Str(s) => format!("s{s:?}"),
        SnapValue::Null => "null".into(),
        SnapValue::Ref(_) => unreachable!(),
    }
}

/// Partition refinement: assigns each node the id of its bisimilarity class.
fn bisimulation_blocks(snap: &Snapshot) -> BTreeMap<u32, usize> {
    let ids: Vec<u32> = snap.nodes.keys().copied().collect();
    let mut block: BTreeMap<u32, usize> = BTreeMap::new();
    // Initial partition: class name plus field names and primitive values.
    let mut sigs: HashMap<String, usize> = HashMap::new();
    for id in &ids {
        let node = &snap.nodes[id];
        let mut sig = node.class.clone();
        for (f, v) in &node.fields {
            sig.push('|');
            sig.push_str(f);
            sig.push('=');
            match v {
                SnapValue::Ref(_) => sig.push('@'),
                other => sig.push_str(&prim_text(other)),
            }
        }
        let next = sigs.len();
        block.insert(*id, *sigs.entry(sig).or_insert(next));
    }
    loop {
        let mut sigs: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut next_block = BTreeMap::new();
        for id in &ids {
            let node = &snap.nodes[id];
            let targets: Vec<usize> = node
                .fields
                .values()
                .filter_map(|v| match v {
                    SnapValue::Ref(t) => Some(block[t]),
                    _ => None,
                })
                .collect();
            let next = sigs.len();
            next_block.insert(*id, *sigs.entry((block[id], targets)).or_insert(next));
        }
        let before = block
            .values()
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let after = next_block
            .values()
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        block = next_block;
        if before == after {
            return block;
        }
    }
}

/// Structural equality of two snapshot roots (cycle-safe, bisimulation).
pub fn snapshots_deep_equal(a: &Snapshot, b: &Snapshot) -> bool {
    a.fingerprint() == b.fingerprint()
}

/// Graph isomorphism of two rooted snapshots (stricter than deep equality:
/// sharing structure must match too). Node numbering is irrelevant.
pub fn snapshots_isomorphic(a: &Snapshot, b: &Snapshot) -> bool {
    if a.nodes.len() != b.nodes.len() {
        return false;
    }
    let mut map: HashMap<u32, u32> = HashMap::new();
    let mut back: HashMap<u32, u32> = HashMap::new();
    let mut stack = vec![(a.root, b.root)];
    while let Some((x, y)) = stack.pop() {
        match (map.get(&x), back.get(&y)) {
            (Some(&mx), Some(&by)) => {
                if mx != y || by != x {
                    return false;
                }
                continue;
            }
            (None, None) => {
                map.insert(x, y);
                back.insert(y, x);
            }
            _ => return false,
        }
        let (nx, ny) = (&a.nodes[&x], &b.nodes[&y]);
        if nx.class != ny.class || nx.fields.len() != ny.fields.len() {
            return false;
        }
        for ((fa, va), (fb, vb)) in nx.fields.iter().zip(ny.fields.iter()) {
            if fa != fb {
                return false;
            }
            match (va, vb) {
                (SnapValue::Ref(ta), SnapValue::Ref(tb)) => stack.push((*ta, *tb)),
                (SnapValue::Ref(_), _) | (_, SnapValue::Ref(_)) => return false,
                (pa, pb) if pa != pb => return false,
                _ => {}
            }
        }
    }
    map.len() == a.nodes.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(class: &str, fields: &[(&str, SnapValue)]) -> SnapNode {
        SnapNode {
            class: class.into(),
            fields: fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    #[test]
    fn json_shape() {
        let snap = Snapshot {
            root: 0,
            nodes: [(
                0,
                node(
                    "A",
                    &[
                        ("x", SnapValue::Int(1)),
                        ("n", SnapValue::Null),
                        ("me", SnapValue::Ref(0)),
                    ],
                ),
            )]
            .into_iter()
            .collect(),
        };
        let json = snap.to_json();
        assert_eq!(
            json,
            r#"{"root":0,"nodes":{"0":{"class":"A","fields":{"x":{"int":1},"n":"null","me":{"ref":0}}}}}"#
        );
        assert_eq!(Snapshot::from_json(&json).unwrap(), snap);
    }

    #[test]
    fn self_loop_bisimilar_to_two_cycle() {
        let one = Snapshot {
            root: 0,
            nodes: [(
                0,
                node("A", &[("x", SnapValue::Int(1)), ("n", SnapValue::Ref(0))]),
            )]
            .into_iter()
            .collect(),
        };
        let two = Snapshot {
            root: 0,
            nodes: [
                (
                    0,
                    node("A", &[("x", SnapValue::Int(1)), ("n", SnapValue::Ref(1))]),
                ),
                (
                    1,
                    node("A", &[("x", SnapValue::Int(1)), ("n", SnapValue::Ref(0))]),
                ),
            ]
            .into_iter()
            .collect(),
        };
        assert!(snapshots_deep_equal(&one, &two));
        assert!(!snapshots_isomorphic(&one, &two));
    }
}
