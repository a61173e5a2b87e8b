use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::minilang::{check, parse, ParseError, Program, ProgramImage, StaticError};

use super::diff3::{merge_file, ConflictHunk};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("scenario is missing the `{0}` revision directory")]
    MissingRevision(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid truth.json: {0}")]
    Truth(String),
    #[error("truth.json names element {0}, which exists in neither merge nor base")]
    DanglingElement(String),
    #[error("witness test {0} does not exist")]
    MissingWitness(PathBuf),
}

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{path}: {error}")]
    Parse { path: String, error: ParseError },
    #[error("static errors: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Check(Vec<StaticError>),
    #[error("textual merge conflict in {}", .0.join(", "))]
    TextualConflict(Vec<String>),
}

/// One revision: `src/*.ml` files and optional `tests/*.mlt` project tests,
/// keyed by file name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceTree {
    pub src: BTreeMap<String, String>,
    pub tests: BTreeMap<String, String>,
}

fn read_dir_files(dir: &Path, ext: &str) -> Result<BTreeMap<String, String>, LoadError> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = fs::read_dir(dir).map_err(|source| LoadError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| LoadError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|source| LoadError::Io {
            path: path.clone(),
            source,
        })?;
        let name = path
            .file_name()
            .expect("file name")
            .to_string_lossy()
            .into_owned();
        out.insert(name, text);
    }
    Ok(out)
}

impl SourceTree {
    pub fn load(dir: &Path) -> Result<SourceTree, LoadError> {
        Ok(SourceTree {
            src: read_dir_files(&dir.join("src"), "ml")?,
            tests: read_dir_files(&dir.join("tests"), "mlt")?,
        })
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let src = dir.join("src");
        fs::create_dir_all(&src)?;
        for (name, text) in &self.src {
            fs::write(src.join(name), text)?;
        }
        if !self.tests.is_empty() {
            let tests = dir.join("tests");
            fs::create_dir_all(&tests)?;
            for (name, text) in &self.tests {
                fs::write(tests.join(name), text)?;
            }
        }
        Ok(())
    }

    /// Parses every source file (in file-name order) into one program.
    pub fn program(&self) -> Result<Program, DiffError> {
        let mut program = Program::default();
        for (path, text) in &self.src {
            let p = parse(text).map_err(|error| DiffError::Parse {
                path: path.clone(),
                error,
            })?;
            program.classes.extend(p.classes);
        }
        Ok(program)
    }

    pub fn image(&self) -> Result<ProgramImage, DiffError> {
        check(&self.program()?).map_err(DiffError::Check)
    }
}

/// Per-file outcome of merging three trees.
#[derive(Clone, Debug, Default)]
pub struct TreeMerge {
    pub merged: SourceTree,
    /// Conflicting files (prefixed `src/` or `tests/`) and their hunks.
    pub conflicts: BTreeMap<String, Vec<ConflictHunk>>,
}

impl TreeMerge {
    pub fn is_clean(&self) -> bool {
        self.conflicts.is_empty()
    }
}

fn merge_maps(
    prefix: &str,
    base: &BTreeMap<String, String>,
    left: &BTreeMap<String, String>,
    right: &BTreeMap<String, String>,
    out: &mut BTreeMap<String, String>,
    conflicts: &mut BTreeMap<String, Vec<ConflictHunk>>,
) {
    let names: std::collections::BTreeSet<&String> =
        base.keys().chain(left.keys()).chain(right.keys()).collect();
    for name in names {
        let (b, l, r) = (base.get(name), left.get(name), right.get(name));
        match merge_file(
            b.map(String::as_str),
            l.map(String::as_str),
            r.map(String::as_str),
        ) {
            Ok(Some(text)) => {
                out.insert(name.clone(), text);
            }
            Ok(None) => {}
            Err(hunks) => {
                conflicts.insert(format!("{prefix}/{name}"), hunks);
            }
        }
    }
}

pub fn merge_trees(base: &SourceTree, left: &SourceTree, right: &SourceTree) -> TreeMerge {
    let mut result = TreeMerge::default();
    merge_maps(
        "src",
        &base.src,
        &left.src,
        &right.src,
        &mut result.merged.src,
        &mut result.conflicts,
    );
    merge_maps(
        "tests",
        &base.tests,
        &left.tests,
        &right.tests,
        &mut result.merged.tests,
        &mut result.conflicts,
    );
    result
}
