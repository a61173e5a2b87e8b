//! Building the four program images of a scenario for one flavor.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::minilang::{
    check, check_script, parse_script, ElementId, Flavor, Program, ProgramImage, Revision,
};
use crate::scenario::SourceTree;
use crate::transforms::{
    apply_serialization, capture_snapshots, rename_script, testability_pipeline, SnapshotPool,
    TransformReport, DEFAULT_CAPTURE_BUDGET, DEFAULT_POOL_CAP,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "camelCase")]
pub enum SkipReason {
    BuildFailure { revision: Revision, message: String },
    NoProjectTests,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::BuildFailure { revision, message } => {
                write!(f, "{revision} does not build: {message}")
            }
            SkipReason::NoProjectTests => f.write_str("merge tree has no usable project tests"),
        }
    }
}

/// Images in B, L, R, M order plus what the transformations did.
#[derive(Clone, Debug)]
pub struct BuiltImages {
    pub flavor: Flavor,
    pub images: [Arc<ProgramImage>; 4],
    /// Hoisting renames per revision (empty for the original flavor).
    pub renames: [BTreeMap<String, String>; 4],
    pub reports: [TransformReport; 4],
    pub pool: Option<SnapshotPool>,
}

impl BuiltImages {
    pub fn image(&self, rev: Revision) -> &ProgramImage {
        &self.images[rev as usize]
    }

    pub fn refs(&self) -> [&ProgramImage; 4] {
        [
            &self.images[0],
            &self.images[1],
            &self.images[2],
            &self.images[3],
        ]
    }

    /// The element's name inside one revision's image.
    pub fn element_in(&self, element: &ElementId, rev: Revision) -> ElementId {
        element.renamed(&self.renames[rev as usize])
    }
}

fn failure(revision: Revision, message: impl ToString) -> SkipReason {
    SkipReason::BuildFailure {
        revision,
        message: message.to_string(),
    }
}

fn check_labeled(
    program: &Program,
    rev: Revision,
    flavor: Flavor,
) -> Result<ProgramImage, SkipReason> {
    check(program)
        .map(|img| img.with_labels(rev, flavor))
        .map_err(|errs| {
            failure(
                rev,
                errs.iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })
}

/// Builds images for `flavor` from the trees in B, L, R, M order. The
/// serialized flavor captures entry states of `target` while the merge
/// tree's project tests run, then seeds every revision with them.
pub fn build_images(
    trees: [&SourceTree; 4],
    flavor: Flavor,
    target: Option<&ElementId>,
) -> Result<BuiltImages, SkipReason> {
    let mut programs = Vec::with_capacity(4);
    for (tree, rev) in trees.iter().zip(Revision::ALL) {
        let program = tree.program().map_err(|e| failure(rev, e))?;
        check(&program).map_err(|errs| {
            failure(
                rev,
                errs.iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
        programs.push(program);
    }

    let mut renames: [BTreeMap<String, String>; 4] = Default::default();
    let mut reports: [TransformReport; 4] = Default::default();
    if flavor != Flavor::Original {
        for (i, rev) in Revision::ALL.into_iter().enumerate() {
            let (p, r) = testability_pipeline(&programs[i]).map_err(|e| failure(rev, e))?;
            programs[i] = p;
            renames[i] = r.renames.clone();
            reports[i] = r;
        }
    }

    let mut pool = None;
    if flavor == Flavor::Serialized {
        let merge = Revision::Merge as usize;
        let merge_tree = trees[merge];
        if merge_tree.tests.is_empty() {
            return Err(SkipReason::NoProjectTests);
        }
        let merge_image = check_labeled(&programs[merge], Revision::Merge, Flavor::Testability)?;
        let tests: Vec<_> = merge_tree
            .tests
            .values()
            .filter_map(|text| parse_script(text).ok())
            .filter_map(|s| check_script(&merge_image, &rename_script(&s, &renames[merge])).ok())
            .collect();
        if tests.is_empty() {
            return Err(SkipReason::NoProjectTests);
        }
        let captured = match target {
            Some(t) => capture_snapshots(
                &merge_image,
                &tests,
                &t.renamed(&renames[merge]),
                DEFAULT_CAPTURE_BUDGET,
                DEFAULT_POOL_CAP,
            ),
            None => SnapshotPool::default(),
        };
        for (i, rev) in Revision::ALL.into_iter().enumerate() {
            let (p, r) =
                apply_serialization(&programs[i], &captured).map_err(|e| failure(rev, e))?;
            programs[i] = p;
            reports[i].seeds_added = r.seeds_added;
            reports[i].omitted_seeds = r.omitted_seeds;
        }
        pool = Some(captured);
    }

    let mut images = Vec::with_capacity(4);
    for (i, rev) in Revision::ALL.into_iter().enumerate() {
        images.push(Arc::new(check_labeled(&programs[i], rev, flavor)?));
    }
    let images: [Arc<ProgramImage>; 4] = images.try_into().expect("four images");
    Ok(BuiltImages {
        flavor,
        images,
        renames,
        reports,
        pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(src: &str, tests: &[&str]) -> SourceTree {
        let mut t = SourceTree::default();
        t.src.insert("A.ml".into(), src.into());
        for (i, s) in tests.iter().enumerate() {
            t.tests.insert(format!("t{i}.mlt"), s.to_string());
        }
        t
    }

    #[test]
    fn static_error_names_revision() {
        let ok = tree("class A { pub int f() { return 1; } }", &[]);
        let bad = tree("class A { pub int f() { return true; } }", &[]);
        let err = build_images([&ok, &ok, &bad, &ok], Flavor::Original, None).unwrap_err();
        assert!(matches!(
            err,
            SkipReason::BuildFailure {
                revision: Revision::Right,
                ..
            }
        ));
    }

    #[test]
    fn serialized_needs_project_tests() {
        let ok = tree("class A { pub int f() { return 1; } }", &[]);
        let target = ElementId::method("A", "f", 0);
        assert_eq!(
            build_images([&ok; 4], Flavor::Serialized, Some(&target)).unwrap_err(),
            SkipReason::NoProjectTests
        );
        let built = build_images([&ok; 4], Flavor::Original, Some(&target)).unwrap();
        assert_eq!(built.image(Revision::Left).revision, Revision::Left);
    }

    #[test]
    fn serialized_adds_seed_class() {
        let t = tree(
            "class A { priv int n; pub init(int n) { this.n = n; } pub int f() { return this.n; } }",
            &["let a = new A(3); assertEq(a.f(), 3);"],
        );
        let target = ElementId::method("A", "f", 0);
        let built = build_images([&t; 4], Flavor::Serialized, Some(&target)).unwrap();
        assert_eq!(built.pool.as_ref().unwrap().entries.len(), 1);
        for img in built.refs() {
            assert!(img.class_id("ObjectSeeds").is_some());
        }
        assert_eq!(built.reports[0].seeds_added, 1);
    }
}
