//! Capturing receiver and argument states during project tests, and
//! exposing them to generated tests through an `ObjectSeeds` class.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::minilang::ast::*;
use crate::minilang::image::ElementRef;
use crate::minilang::interp::validate_snapshot;
use crate::minilang::{
    check, CapturedArg, CheckedScript, ElementId, EntryCapture, ProgramImage, Session, Snapshot,
};

use super::{TransformError, TransformReport};

pub const SEED_CLASS: &str = "ObjectSeeds";
pub const DEFAULT_CAPTURE_BUDGET: u64 = 50_000;
pub const DEFAULT_POOL_CAP: usize = 128;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotPool {
    pub element: Option<ElementId>,
    pub entries: Vec<EntryCapture>,
}

impl SnapshotPool {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(
            path,
            serde_json::to_string_pretty(self).expect("pool serializes"),
        )
    }

    pub fn load(path: &Path) -> std::io::Result<SnapshotPool> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

fn entry_key(e: &EntryCapture) -> String {
    let mut key = e
        .receiver
        .as_ref()
        .map(|s| s.fingerprint())
        .unwrap_or_default();
    for a in &e.args {
        key.push('|');
        match a {
            CapturedArg::Object(s) => key.push_str(&s.fingerprint()),
            other => key.push_str(&serde_json::to_string(other).expect("arg serializes")),
        }
    }
    key
}

/// Runs `tests` in order on fresh sessions (run seed 0) and records every
/// entry to the target method or constructor. Execution stops once the
/// shared step budget is spent; entries are deduplicated structurally and
/// the first `cap` are kept.
pub fn capture_snapshots(
    image: &ProgramImage,
    tests: &[CheckedScript],
    target: &ElementId,
    budget: u64,
    cap: usize,
) -> SnapshotPool {
    let mut pool = SnapshotPool {
        element: Some(target.clone()),
        entries: Vec::new(),
    };
    let Some(ElementRef::Callable(callable)) = image.resolve_element(target) else {
        return pool;
    };
    let mut seen = HashSet::new();
    let mut remaining = budget;
    for test in tests {
        if remaining == 0 || pool.entries.len() >= cap {
            break;
        }
        let mut session = Session::new(image, 0);
        session.set_capture_target(Some(callable));
        let result = session.run_script(test, remaining);
        remaining = remaining.saturating_sub(result.steps_used);
        for entry in session.take_captures() {
            if pool.entries.len() >= cap {
                break;
            }
            if seen.insert(entry_key(&entry)) {
                pool.entries.push(entry);
            }
        }
    }
    pool
}

fn seed_method(name: String, ret: TypeName, value: Expr) -> Member {
    Member::Method(MethodDecl {
        vis: Visibility::Public,
        is_static: true,
        ret,
        name,
        params: Vec::new(),
        body: Block {
            stmts: vec![Stmt {
                kind: StmtKind::Return(Some(value)),
                span: Span::default(),
                id: StmtId::default(),
            }],
        },
        span: Span::default(),
    })
}

fn expr(kind: ExprKind) -> Expr {
    Expr {
        kind,
        span: Span::default(),
    }
}

/// Adds the `ObjectSeeds` class. Pool entry `n` yields `seedN()` for its
/// receiver and `seedNargM()` for each non-null argument. An entry any of
/// whose snapshots cannot be rehydrated on this program is omitted whole;
/// numbering keeps the pool index so names agree across revisions.
pub fn apply_serialization(
    program: &Program,
    pool: &SnapshotPool,
) -> Result<(Program, TransformReport), TransformError> {
    let image = check(program).map_err(TransformError::Check)?;
    if image.class_id(SEED_CLASS).is_some() {
        return Err(TransformError::SeedClassCollision);
    }
    let mut out = program.clone();
    let mut report = TransformReport::default();
    let mut members = Vec::new();
    for (n, entry) in pool.entries.iter().enumerate() {
        let snaps = entry
            .receiver
            .iter()
            .chain(entry.args.iter().filter_map(|a| match a {
                CapturedArg::Object(s) => Some(s),
                _ => None,
            }));
        if snaps.clone().any(|s| validate_snapshot(&image, s).is_err()) {
            report.omitted_seeds.push(n);
            continue;
        }
        let push_snapshot = |out: &mut Program, s: &Snapshot| -> Expr {
            out.seed_table.push(s.clone());
            expr(ExprKind::Seed((out.seed_table.len() - 1) as u32))
        };
        if let Some(r) = &entry.receiver {
            let value = push_snapshot(&mut out, r);
            members.push(seed_method(
                format!("seed{n}"),
                TypeName::Class(r.root_class().to_string()),
                value,
            ));
        }
        for (m, arg) in entry.args.iter().enumerate() {
            let (ty, value) = match arg {
                CapturedArg::Null => continue,
                CapturedArg::Int(i) => (TypeName::Int, expr(ExprKind::Lit(Literal::Int(*i)))),
                CapturedArg::Bool(b) => (TypeName::Bool, expr(ExprKind::Lit(Literal::Bool(*b)))),
                CapturedArg::Str(s) => {
                    (TypeName::Str, expr(ExprKind::Lit(Literal::Str(s.clone()))))
                }
                CapturedArg::Object(s) => (
                    TypeName::Class(s.root_class().to_string()),
                    push_snapshot(&mut out, s),
                ),
            };
            members.push(seed_method(format!("seed{n}arg{m}"), ty, value));
        }
        report.seeds_added += 1;
    }
    out.classes.push(ClassDecl {
        vis: Visibility::Public,
        name: SEED_CLASS.to_string(),
        extends: None,
        members,
        inner: Vec::new(),
        span: Span::default(),
    });
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{compile_script, parse, ScriptStatus};

    const BASE: &str = "class Conn { pub int port; pub init(int p) { this.port = p; } pub int open(Conn other) { return this.port + other.port; } }";
    const LEFT: &str = "class Conn { pub int port; pub int retries; pub init(int p) { this.port = p; this.retries = 3; } pub int open(Conn other) { return this.port + other.port + this.retries; } }";

    fn pool_from(src: &str) -> SnapshotPool {
        let image = check(&parse(src).unwrap()).unwrap();
        let tests: Vec<_> = [
            "let a = new Conn(1); let b = new Conn(2); a.open(b);",
            "let a = new Conn(1); let b = new Conn(2); a.open(b); a.open(b);",
            "let a = new Conn(5); a.open(a);",
        ]
        .iter()
        .map(|t| compile_script(&image, t).unwrap())
        .collect();
        capture_snapshots(
            &image,
            &tests,
            &ElementId::method("Conn", "open", 1),
            DEFAULT_CAPTURE_BUDGET,
            DEFAULT_POOL_CAP,
        )
    }

    #[test]
    fn capture_dedupes_structurally() {
        let pool = pool_from(BASE);
        assert_eq!(pool.entries.len(), 2);
        let json = serde_json::to_string(&pool).unwrap();
        assert_eq!(serde_json::from_str::<SnapshotPool>(&json).unwrap(), pool);
    }

    #[test]
    fn seeds_rehydrate_and_are_omitted_by_shape() {
        let pool = pool_from(LEFT);
        let (left, r) = apply_serialization(&parse(LEFT).unwrap(), &pool).unwrap();
        assert_eq!(r.seeds_added, 2);
        let image = check(&left).unwrap();
        let script = compile_script(
            &image,
            "let c = ObjectSeeds.seed0(); assertEq(c.open(ObjectSeeds.seed0arg0()), 6);",
        )
        .unwrap();
        assert_eq!(
            Session::new(&image, 0).run_script(&script, 1000).status,
            ScriptStatus::Pass
        );

        let (base, r) = apply_serialization(&parse(BASE).unwrap(), &pool).unwrap();
        assert_eq!(r.omitted_seeds, vec![0, 1]);
        let seeds = base.classes.iter().find(|c| c.name == SEED_CLASS).unwrap();
        assert!(seeds.members.is_empty());
    }

    #[test]
    fn seed_class_collision() {
        let p = parse("class ObjectSeeds { }").unwrap();
        assert_eq!(
            apply_serialization(&p, &SnapshotPool::default()).unwrap_err(),
            TransformError::SeedClassCollision
        );
    }
}
