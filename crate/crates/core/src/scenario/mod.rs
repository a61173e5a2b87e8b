//! Merge scenarios on disk, textual merging and mutually changed elements.

pub mod diff3;
pub mod structural;
pub mod tree;
pub mod truth;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

pub use diff3::{diff3_merge, ConflictHunk, Merge3};
pub use structural::{elements, structural_diff, ChangeSet};
pub use tree::{merge_trees, DiffError, LoadError, SourceTree, TreeMerge};
pub use truth::{GroundTruth, Verdict};

use crate::minilang::{ElementId, Revision};

#[derive(Clone, Debug)]
pub struct MergeScenario {
    /// Directory name.
    pub id: String,
    pub dir: PathBuf,
    pub base: SourceTree,
    pub left: SourceTree,
    pub right: SourceTree,
    pub merge: Option<SourceTree>,
    pub truth: Option<GroundTruth>,
}

/// Mutually changed elements plus those excluded because the merge lacks them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MutualChanges {
    pub elements: BTreeSet<ElementId>,
    /// Changed by both parents (or changed by one and removed by the other)
    /// but absent from the merge tree.
    pub excluded: BTreeSet<ElementId>,
}

pub fn load_scenario(dir: &Path) -> Result<MergeScenario, LoadError> {
    let rev = |name: &str| -> Result<SourceTree, LoadError> {
        let d = dir.join(name);
        if !d.is_dir() {
            return Err(LoadError::MissingRevision(name.into()));
        }
        SourceTree::load(&d)
    };
    let base = rev("base")?;
    let left = rev("left")?;
    let right = rev("right")?;
    let merge = if dir.join("merge").is_dir() {
        Some(SourceTree::load(&dir.join("merge"))?)
    } else {
        None
    };
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let mut scenario = MergeScenario {
        id,
        dir: dir.to_path_buf(),
        base,
        left,
        right,
        merge,
        truth: None,
    };
    let truth_path = dir.join("truth.json");
    if truth_path.is_file() {
        let text = fs::read_to_string(&truth_path).map_err(|source| LoadError::Io {
            path: truth_path.clone(),
            source,
        })?;
        let known = known_elements(&scenario);
        scenario.truth = Some(GroundTruth::parse(&text, dir, &|e| known.contains(e))?);
    }
    Ok(scenario)
}

/// Loads only the ground truth of a scenario directory.
pub fn load_ground_truth(dir: &Path) -> Result<GroundTruth, LoadError> {
    let scenario = load_scenario(dir)?;
    scenario
        .truth
        .ok_or_else(|| LoadError::Truth(format!("{} has no truth.json", dir.display())))
}

/// Elements declared in the merge (stored or synthesized) or base tree.
/// Trees that fail to parse contribute nothing.
fn known_elements(s: &MergeScenario) -> BTreeSet<ElementId> {
    let mut out = BTreeSet::new();
    let merge = s.merge_tree().ok();
    for tree in merge.iter().chain(std::iter::once(&s.base)) {
        if let Ok(p) = tree.program() {
            out.extend(elements(&p).into_keys());
        }
    }
    out
}

impl MergeScenario {
    pub fn tree(&self, rev: Revision) -> Option<&SourceTree> {
        match rev {
            Revision::Base => Some(&self.base),
            Revision::Left => Some(&self.left),
            Revision::Right => Some(&self.right),
            Revision::Merge => self.merge.as_ref(),
        }
    }

    /// One parent is byte-identical to the base.
    pub fn is_fast_forward(&self) -> bool {
        self.left == self.base || self.right == self.base
    }

    pub fn textual_merge(&self) -> TreeMerge {
        merge_trees(&self.base, &self.left, &self.right)
    }

    /// The stored merge tree, or the diff3 result when none is stored.
    pub fn merge_tree(&self) -> Result<SourceTree, TreeMerge> {
        if let Some(m) = &self.merge {
            return Ok(m.clone());
        }
        let merged = self.textual_merge();
        if merged.is_clean() {
            Ok(merged.merged)
        } else {
            Err(merged)
        }
    }

    pub fn mutual_changes(&self) -> Result<MutualChanges, DiffError> {
        let merge = self
            .merge_tree()
            .map_err(|m| DiffError::TextualConflict(m.conflicts.keys().cloned().collect()))?;
        let left = structural_diff(&self.base, &self.left)?;
        let right = structural_diff(&self.base, &self.right)?;
        let merged = elements(&merge.image()?.program);
        Ok(mutual_from(&left, &right, &|e| merged.contains_key(e)))
    }
}

/// (modified ∪ added) of both parents, restricted to elements in the merge.
pub fn mutual_from(
    left: &ChangeSet,
    right: &ChangeSet,
    in_merge: &dyn Fn(&ElementId) -> bool,
) -> MutualChanges {
    let (lc, rc) = (left.changed(), right.changed());
    let mut out = MutualChanges::default();
    for e in lc.intersection(&rc) {
        if in_merge(e) {
            out.elements.insert(e.clone());
        } else {
            out.excluded.insert(e.clone());
        }
    }
    for e in lc
        .intersection(&right.removed)
        .chain(rc.intersection(&left.removed))
    {
        out.excluded.insert(e.clone());
    }
    out
}
