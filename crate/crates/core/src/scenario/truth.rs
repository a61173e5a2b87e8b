//! Ground-truth verdicts stored in `truth.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::minilang::{ElementId, MemberKind};

use super::tree::LoadError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    elements: Vec<TruthRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthRecord {
    class: String,
    kind: MemberKind,
    name: String,
    arity: usize,
    interference: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rationale: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub interference: bool,
    /// Absolute path of the witness test script.
    pub witness: Option<PathBuf>,
    pub rationale: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub verdicts: BTreeMap<ElementId, Verdict>,
}

impl GroundTruth {
    /// Parses `truth.json` text. `known` decides whether an element exists
    /// in the scenario; witness paths are resolved against `dir`.
    pub fn parse(
        text: &str,
        dir: &Path,
        known: &dyn Fn(&ElementId) -> bool,
    ) -> Result<GroundTruth, LoadError> {
        let file: TruthFile =
            serde_json::from_str(text).map_err(|e| LoadError::Truth(e.to_string()))?;
        let mut verdicts = BTreeMap::new();
        for r in file.elements {
            if r.kind == MemberKind::Field && r.arity != 0 {
                return Err(LoadError::Truth(format!(
                    "field {}.{} must have arity 0",
                    r.class, r.name
                )));
            }
            let id = ElementId {
                class: r.class,
                kind: r.kind,
                name: r.name,
                arity: r.arity,
            };
            if !known(&id) {
                return Err(LoadError::DanglingElement(id.to_string()));
            }
            let witness = match r.witness {
                Some(w) => {
                    let path = dir.join(w);
                    if !path.is_file() {
                        return Err(LoadError::MissingWitness(path));
                    }
                    Some(path)
                }
                None => None,
            };
            if verdicts
                .insert(
                    id.clone(),
                    Verdict {
                        interference: r.interference,
                        witness,
                        rationale: r.rationale,
                    },
                )
                .is_some()
            {
                return Err(LoadError::Truth(format!("element {id} listed twice")));
            }
        }
        Ok(GroundTruth { verdicts })
    }

    pub fn interference_count(&self) -> usize {
        self.verdicts.values().filter(|v| v.interference).count()
    }
}
