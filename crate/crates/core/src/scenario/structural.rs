//! Member-level structural diff between revisions.

use std::collections::{BTreeMap, BTreeSet};

use crate::minilang::ast::{ClassDecl, Member, Program};
use crate::minilang::{print_member, ElementId};

use super::tree::{DiffError, SourceTree};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub added: BTreeSet<ElementId>,
    pub removed: BTreeSet<ElementId>,
    pub modified: BTreeSet<ElementId>,
}

impl ChangeSet {
    /// Modified or added elements.
    pub fn changed(&self) -> BTreeSet<ElementId> {
        self.modified.union(&self.added).cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }
}

/// Every declared member with its canonical printed text.
pub fn elements(program: &Program) -> BTreeMap<ElementId, String> {
    fn class(decl: &ClassDecl, prefix: Option<&str>, out: &mut BTreeMap<ElementId, String>) {
        let name = match prefix {
            Some(p) => format!("{p}.{}", decl.name),
            None => decl.name.clone(),
        };
        for m in &decl.members {
            let id = match m {
                Member::Field(f) => ElementId::field(&name, &f.name),
                Member::Ctor(c) => ElementId::ctor(&name, c.params.len()),
                Member::Method(m) => ElementId::method(&name, &m.name, m.params.len()),
            };
            out.insert(id, print_member(m));
        }
        for inner in &decl.inner {
            class(inner, Some(&name), out);
        }
    }
    let mut out = BTreeMap::new();
    for decl in &program.classes {
        class(decl, None, &mut out);
    }
    out
}

/// Changes a parent made relative to the base. Formatting-only edits do not
/// count; visibility changes do.
pub fn structural_diff(base: &SourceTree, parent: &SourceTree) -> Result<ChangeSet, DiffError> {
    let b = elements(&base.image()?.program);
    let p = elements(&parent.image()?.program);
    Ok(diff_elements(&b, &p))
}

pub fn diff_elements(
    base: &BTreeMap<ElementId, String>,
    parent: &BTreeMap<ElementId, String>,
) -> ChangeSet {
    let mut cs = ChangeSet::default();
    for (id, text) in parent {
        match base.get(id) {
            None => {
                cs.added.insert(id.clone());
            }
            Some(old) if old != text => {
                cs.modified.insert(id.clone());
            }
            Some(_) => {}
        }
    }
    for id in base.keys() {
        if !parent.contains_key(id) {
            cs.removed.insert(id.clone());
        }
    }
    cs
}
