//! The mini object-oriented language every scenario is written in.

pub mod ast;
pub mod check;
pub mod coverage;
pub mod image;
pub mod interp;
pub mod parser;
pub mod printer;
pub mod snapshot;

pub use ast::{Program, TestScript};
pub use check::{check, check_script, CheckedScript, StaticError, StaticErrorKind};
pub use coverage::{coverage_report, CoverageReport, CoverageTrace};
pub use image::{ElementId, Flavor, MemberKind, ProgramImage, Revision, Ty, Value};
pub use interp::{
    CapturedArg, EntryCapture, ExecResult, ExecStatus, RehydrateError, ScriptResult, ScriptStatus,
    Session,
};
pub use parser::{parse, parse_script, ParseError};
pub use printer::{pretty_print, print_member, print_script};
pub use snapshot::{snapshots_deep_equal, snapshots_isomorphic, SnapValue, Snapshot};

/// Parses and checks a script against an image in one step.
pub fn compile_script(image: &ProgramImage, text: &str) -> Result<CheckedScript, String> {
    let script = parse_script(text).map_err(|e| e.to_string())?;
    check_script(image, &script).map_err(|e| e.to_string())
}
