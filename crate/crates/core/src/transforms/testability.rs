//! Source rewrites that widen what generated tests can reach: publicize
//! members, add empty constructors, and hoist inner classes.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::minilang::ast::*;

use super::{TransformError, TransformReport};

pub fn publicize(program: &Program) -> (Program, TransformReport) {
    fn class(decl: &mut ClassDecl, report: &mut TransformReport) {
        if decl.vis == Visibility::Private {
            decl.vis = Visibility::Public;
            report.classes_publicized += 1;
        }
        for m in &mut decl.members {
            if m.vis() == Visibility::Private {
                m.set_vis(Visibility::Public);
                report.members_publicized += 1;
            }
        }
        for inner in &mut decl.inner {
            class(inner, report);
        }
    }
    let mut out = program.clone();
    let mut report = TransformReport::default();
    for decl in &mut out.classes {
        class(decl, &mut report);
    }
    (out, report)
}

/// Appends `pub init() {}` to every class without an `extends` clause that
/// declares constructors but none of arity zero. A class with no
/// constructors already has an implicit public zero-arity one.
pub fn add_empty_ctors(program: &Program) -> (Program, TransformReport) {
    fn class(decl: &mut ClassDecl, report: &mut TransformReport) {
        let has_ctors = decl.ctors().next().is_some();
        let has_zero = decl.ctors().any(|c| c.params.is_empty());
        if decl.extends.is_none() && has_ctors && !has_zero {
            decl.members.push(Member::Ctor(CtorDecl {
                vis: Visibility::Public,
                params: Vec::new(),
                body: Block::default(),
                span: Span::default(),
            }));
            report.ctors_added += 1;
            report.ctor_classes.push(decl.name.clone());
        }
        for inner in &mut decl.inner {
            class(inner, report);
        }
    }
    let mut out = program.clone();
    let mut report = TransformReport::default();
    for decl in &mut out.classes {
        class(decl, &mut report);
    }
    (out, report)
}

/// Class names of a program as written: top-level names and `Outer.Inner`.
fn qualified_names(program: &Program) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for c in &program.classes {
        out.insert(c.name.clone());
        for i in &c.inner {
            out.insert(format!("{}.{}", c.name, i.name));
        }
    }
    out
}

/// Resolves a written class name from inside class `ctx` (qualified).
fn resolve(names: &BTreeSet<String>, ctx: &str, name: &str) -> Option<String> {
    if name.contains('.') {
        return names.contains(name).then(|| name.to_string());
    }
    let nested = format!("{ctx}.{name}");
    if names.contains(&nested) {
        return Some(nested);
    }
    if let Some((outer, _)) = ctx.split_once('.') {
        let sibling = format!("{outer}.{name}");
        if names.contains(&sibling) {
            return Some(sibling);
        }
    }
    names.contains(name).then(|| name.to_string())
}

/// Rewrites every class reference inside `decl` (whose qualified name is
/// `ctx`) through `map`, which receives the context and the written name.
fn rewrite_refs(decl: &mut ClassDecl, ctx: &str, map: &dyn Fn(&str, &str) -> Option<String>) {
    let fix_name = |name: &mut String| {
        if let Some(new) = map(ctx, name) {
            *name = new;
        }
    };
    let fix_ty = |ty: &mut TypeName| {
        if let TypeName::Class(name) = ty {
            if let Some(new) = map(ctx, name) {
                *name = new;
            }
        }
    };
    if let Some(sup) = &mut decl.extends {
        fix_name(sup);
    }
    for m in &mut decl.members {
        match m {
            Member::Field(f) => fix_ty(&mut f.ty),
            Member::Ctor(c) => {
                c.params.iter_mut().for_each(|p| fix_ty(&mut p.ty));
                let locals = local_names(&c.params, &c.body);
                rewrite_body(&mut c.body.stmts, ctx, map, &locals);
            }
            Member::Method(md) => {
                fix_ty(&mut md.ret);
                md.params.iter_mut().for_each(|p| fix_ty(&mut p.ty));
                let locals = local_names(&md.params, &md.body);
                rewrite_body(&mut md.body.stmts, ctx, map, &locals);
            }
        }
    }
}

fn local_names(params: &[Param], body: &Block) -> HashSet<String> {
    let mut out: HashSet<String> = params.iter().map(|p| p.name.clone()).collect();
    walk_stmts(body, &mut |s| {
        if let StmtKind::Let { name, .. } = &s.kind {
            out.insert(name.clone());
        }
    });
    out
}

fn rewrite_body(
    stmts: &mut [Stmt],
    ctx: &str,
    map: &dyn Fn(&str, &str) -> Option<String>,
    locals: &HashSet<String>,
) {
    let mut block = Block {
        stmts: stmts.to_vec(),
    };
    walk_stmts_mut(&mut block, &mut |s| {
        if let StmtKind::Let {
            ty: Some(TypeName::Class(name)),
            ..
        } = &mut s.kind
        {
            if let Some(new) = map(ctx, name) {
                *name = new;
            }
        }
    });
    walk_exprs_mut(&mut block.stmts, &mut |e| match &mut e.kind {
        ExprKind::New { class, .. } => {
            if let Some(new) = map(ctx, class) {
                *class = new;
            }
        }
        ExprKind::Call { recv, .. } => {
            if let ExprKind::Var(name) = &mut recv.kind {
                if !locals.contains(name.as_str()) {
                    if let Some(new) = map(ctx, name) {
                        *name = new;
                    }
                }
            }
        }
        _ => {}
    });
    stmts.clone_from_slice(&block.stmts);
}

/// Moves every inner class to the top level as `Outer_Inner`, rewriting all
/// references. Returns the rename map in the report.
pub fn hoist_inner_classes(
    program: &Program,
) -> Result<(Program, TransformReport), TransformError> {
    let names = qualified_names(program);
    let mut renames: BTreeMap<String, String> = BTreeMap::new();
    let top: BTreeSet<&str> = program.classes.iter().map(|c| c.name.as_str()).collect();
    let mut taken: BTreeSet<String> = top.iter().map(|s| s.to_string()).collect();
    for c in &program.classes {
        for i in &c.inner {
            let new = format!("{}_{}", c.name, i.name);
            if !taken.insert(new.clone()) {
                return Err(TransformError::HoistCollision(new));
            }
            renames.insert(format!("{}.{}", c.name, i.name), new);
        }
    }
    let map = |ctx: &str, name: &str| -> Option<String> {
        let resolved = resolve(&names, ctx, name)?;
        renames.get(&resolved).cloned()
    };
    let mut out = Program {
        classes: Vec::new(),
        seed_table: program.seed_table.clone(),
    };
    for c in &program.classes {
        let mut outer = c.clone();
        let inners = std::mem::take(&mut outer.inner);
        rewrite_refs(&mut outer, &c.name, &map);
        out.classes.push(outer);
        for mut inner in inners {
            let ctx = format!("{}.{}", c.name, inner.name);
            rewrite_refs(&mut inner, &ctx, &map);
            inner.name = renames[&ctx].clone();
            out.classes.push(inner);
        }
    }
    let report = TransformReport {
        hoisted: renames.len(),
        renames,
        ..TransformReport::default()
    };
    Ok((out, report))
}

/// Applies a hoisting rename map to a test script (test scope names classes
/// only by their qualified names).
pub fn rename_script(script: &TestScript, renames: &BTreeMap<String, String>) -> TestScript {
    if renames.is_empty() {
        return script.clone();
    }
    let mut out = script.clone();
    let mut block = Block { stmts: out.stmts };
    let mut locals = HashSet::new();
    walk_stmts_mut(&mut block, &mut |s| {
        if let StmtKind::Let { name, ty, .. } = &mut s.kind {
            locals.insert(name.clone());
            if let Some(TypeName::Class(c)) = ty {
                if let Some(new) = renames.get(c.as_str()) {
                    *c = new.clone();
                }
            }
        }
    });
    walk_exprs_mut(&mut block.stmts, &mut |e| match &mut e.kind {
        ExprKind::New { class, .. } => {
            if let Some(new) = renames.get(class.as_str()) {
                *class = new.clone();
            }
        }
        ExprKind::Call { recv, .. } => {
            if let ExprKind::Var(name) = &mut recv.kind {
                if !locals.contains(name.as_str()) {
                    if let Some(new) = renames.get(name.as_str()) {
                        *name = new.clone();
                    }
                }
            }
        }
        _ => {}
    });
    out.stmts = block.stmts;
    out
}

/// Hoist, then publicize, then add empty constructors.
pub fn testability_pipeline(
    program: &Program,
) -> Result<(Program, TransformReport), TransformError> {
    let (hoisted, mut report) = hoist_inner_classes(program)?;
    let (public, r2) = publicize(&hoisted);
    let (out, r3) = add_empty_ctors(&public);
    report.members_publicized = r2.members_publicized;
    report.classes_publicized = r2.classes_publicized;
    report.ctors_added = r3.ctors_added;
    report.ctor_classes = r3.ctor_classes;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{check, parse, pretty_print};

    #[test]
    fn publicize_counts_members() {
        let p = parse("class A { priv int x; priv int y; priv int f() { return 1; } pub int g() { return 2; } }").unwrap();
        let (out, r) = publicize(&p);
        assert_eq!(r.members_publicized, 3);
        assert!(!pretty_print(&out).contains("priv"));
        let (again, r2) = publicize(&out);
        assert_eq!(again, out);
        assert_eq!(r2.members_publicized, 0);
    }

    #[test]
    fn empty_ctor_rules() {
        let p = parse("class A { pub init(int x) { } } class B extends A { pub init(int y) { } } class C { pub init() { } } class D { }").unwrap();
        let (out, r) = add_empty_ctors(&p);
        assert_eq!(r.ctors_added, 1);
        assert_eq!(r.ctor_classes, vec!["A".to_string()]);
        assert_eq!(out.classes[0].ctors().count(), 2);
        assert_eq!(out.classes[1], p.classes[1]);
        assert_eq!(out.classes[2], p.classes[2]);
    }

    #[test]
    fn hoisting_rewrites_references() {
        let src = "class O { priv O.I keep; pub int go() { let i: I = new I(); this.keep = i; return i.v(); } priv class I { pub int v() { return 7; } pub J sib() { return new J(); } } class J { } }";
        let p = parse(src).unwrap();
        check(&p).unwrap();
        let (out, r) = hoist_inner_classes(&p).unwrap();
        assert_eq!(out.classes.len(), 3);
        assert_eq!(r.renames["O.I"], "O_I");
        let text = pretty_print(&out);
        assert!(text.contains("let i: O_I = new O_I();"), "{text}");
        assert!(text.contains("pub O_J sib()"), "{text}");
        assert!(text.contains("priv O_I keep;"), "{text}");
        check(&out).unwrap();
    }

    #[test]
    fn hoist_collision() {
        let p = parse("class O { class I { } } class O_I { }").unwrap();
        assert_eq!(
            hoist_inner_classes(&p).unwrap_err(),
            TransformError::HoistCollision("O_I".into())
        );
    }

    #[test]
    fn pipeline_on_private_inner_without_ctor() {
        let p = parse("class O { priv class I { priv int n; pub init(int n) { this.n = n; } } }")
            .unwrap();
        let (out, r) = testability_pipeline(&p).unwrap();
        assert_eq!(r.hoisted, 1);
        let i = out.classes.iter().find(|c| c.name == "O_I").unwrap();
        assert_eq!(i.vis, Visibility::Public);
        assert!(i.ctors().any(|c| c.params.is_empty()));
        assert!(i.fields().all(|f| f.vis == Visibility::Public));
        check(&out).unwrap();
    }
}
