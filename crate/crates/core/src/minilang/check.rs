//! Static checker. Resolves names, verifies arity, types and visibility,
//! and lowers bodies into the interpreter's resolved form.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::ast::*;
use super::image::*;
use super::interp::validate_snapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StaticErrorKind {
    UnknownName,
    ArityMismatch,
    TypeMismatch,
    VisibilityViolation,
    DuplicateMember,
    InheritanceCycle,
}

impl fmt::Display for StaticErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind} in {site} at {span}: {message}")]
pub struct StaticError {
    pub site: String,
    pub span: Span,
    pub kind: StaticErrorKind,
    pub message: String,
}

/// A test script resolved against one image.
#[derive(Clone, Debug)]
pub struct CheckedScript {
    pub body: Vec<IStmt>,
    pub n_locals: usize,
}

pub fn check(program: &Program) -> Result<ProgramImage, Vec<StaticError>> {
    let mut program = program.clone();
    assign_stmt_ids(&mut program);
    Checker::default().run(program)
}

/// Checks a test script in test scope: only public classes and members are
/// visible and there is no `this`.
pub fn check_script(
    image: &ProgramImage,
    script: &TestScript,
) -> Result<CheckedScript, StaticError> {
    let mut lower = Lowerer::new(image, None, false, Ty::Void, "test".into(), true);
    let body = lower.block(&script.stmts)?;
    Ok(CheckedScript {
        body,
        n_locals: lower.max_locals,
    })
}

fn assign_stmt_ids(program: &mut Program) {
    fn class(decl: &mut ClassDecl, next: &mut u32) {
        for member in &mut decl.members {
            let body = match member {
                Member::Ctor(c) => &mut c.body,
                Member::Method(m) => &mut m.body,
                Member::Field(_) => continue,
            };
            walk_stmts_mut(body, &mut |s| {
                s.id = StmtId(*next);
                *next += 1;
            });
        }
        for inner in &mut decl.inner {
            class(inner, next);
        }
    }
    let mut next = 0;
    for decl in &mut program.classes {
        class(decl, &mut next);
    }
}

fn err(site: &str, span: Span, kind: StaticErrorKind, message: impl Into<String>) -> StaticError {
    StaticError {
        site: site.to_string(),
        span,
        kind,
        message: message.into(),
    }
}

#[derive(Default)]
struct Checker {
    errors: Vec<StaticError>,
}

/// Resolves a written class name as seen from inside `from` (or from test
/// scope when `from` is `None`).
fn resolve_class_name(
    index: &HashMap<String, ClassId>,
    classes: &[ClassInfo],
    name: &str,
    from: Option<ClassId>,
) -> Option<ClassId> {
    if name.contains('.') {
        return index.get(name).copied();
    }
    if let Some(c) = from {
        if let Some(&id) = index.get(&format!("{}.{}", classes[c].name, name)) {
            return Some(id);
        }
        if let Some(o) = classes[c].outer {
            if let Some(&id) = index.get(&format!("{}.{}", classes[o].name, name)) {
                return Some(id);
            }
        }
    }
    index
        .get(name)
        .copied()
        .filter(|&id| classes[id].outer.is_none())
}

/// Whether code in `from` (or test scope) may name class `target`.
fn class_accessible(classes: &[ClassInfo], target: ClassId, from: Option<ClassId>) -> bool {
    let info = &classes[target];
    let Some(from) = from else {
        return info.vis == Visibility::Public
            && info
                .outer
                .is_none_or(|o| class_accessible(classes, o, None));
    };
    match (info.vis, info.outer) {
        (_, None) => true,
        (Visibility::Public, Some(o)) => class_accessible(classes, o, Some(from)),
        (Visibility::Private, Some(o)) => {
            from == target || from == o || classes[from].outer == Some(o)
        }
    }
}

impl Checker {
    fn run(mut self, program: Program) -> Result<ProgramImage, Vec<StaticError>> {
        // Collect classes, outer before inner.
        let mut decls: Vec<&ClassDecl> = Vec::new();
        let mut classes: Vec<ClassInfo> = Vec::new();
        let mut index: HashMap<String, ClassId> = HashMap::new();
        for decl in &program.classes {
            self.collect(decl, None, &mut decls, &mut classes, &mut index);
        }

        // Superclasses and cycles.
        for id in 0..classes.len() {
            if let Some(sup) = &decls[id].extends {
                match resolve_class_name(&index, &classes, sup, Some(id)) {
                    Some(s) if class_accessible(&classes, s, Some(id)) => {
                        classes[id].superclass = Some(s)
                    }
                    Some(_) => self.errors.push(err(
                        &classes[id].name,
                        decls[id].span,
                        StaticErrorKind::VisibilityViolation,
                        format!("superclass {sup} is not accessible"),
                    )),
                    None => self.errors.push(err(
                        &classes[id].name,
                        decls[id].span,
                        StaticErrorKind::UnknownName,
                        format!("unknown superclass {sup}"),
                    )),
                }
            }
        }
        let cyclic: Vec<bool> = (0..classes.len())
            .map(|id| {
                let mut seen = HashSet::new();
                let mut cur = Some(id);
                while let Some(c) = cur {
                    if !seen.insert(c) {
                        return true;
                    }
                    cur = classes[c].superclass;
                }
                false
            })
            .collect();
        for id in 0..classes.len() {
            if cyclic[id] {
                self.errors.push(err(
                    &classes[id].name,
                    decls[id].span,
                    StaticErrorKind::InheritanceCycle,
                    format!("class {} inherits from itself", classes[id].name),
                ));
            }
        }
        if !self.errors.is_empty() {
            return Err(self.errors);
        }

        let order = topo_order(&classes);

        // Field layouts.
        for &id in &order {
            let mut fields = classes[id]
                .superclass
                .map(|s| classes[s].fields.clone())
                .unwrap_or_default();
            let mut field_index: HashMap<String, usize> = fields
                .iter()
                .enumerate()
                .map(|(i, f)| (f.name.clone(), i))
                .collect();
            for f in decls[id].fields() {
                let site = format!("{}.{}", classes[id].name, f.name);
                let ty = match self.resolve_type(&index, &classes, &f.ty, id, &site, f.span) {
                    Some(Ty::Void) => {
                        self.errors.push(err(
                            &site,
                            f.span,
                            StaticErrorKind::TypeMismatch,
                            "field of type void",
                        ));
                        continue;
                    }
                    Some(t) => t,
                    None => continue,
                };
                if field_index.contains_key(&f.name) {
                    self.errors.push(err(
                        &site,
                        f.span,
                        StaticErrorKind::DuplicateMember,
                        format!("duplicate field {}", f.name),
                    ));
                    continue;
                }
                let init = match &f.init {
                    None => Value::default_for(ty),
                    Some(lit) => {
                        let ok = matches!(
                            (lit, ty),
                            (Literal::Int(_), Ty::Int)
                                | (Literal::Bool(_), Ty::Bool)
                                | (Literal::Str(_), Ty::Str)
                                | (Literal::Null, Ty::Class(_))
                        );
                        if !ok {
                            self.errors.push(err(
                                &site,
                                f.span,
                                StaticErrorKind::TypeMismatch,
                                "initializer does not match field type",
                            ));
                        }
                        Value::from_literal(lit)
                    }
                };
                field_index.insert(f.name.clone(), fields.len());
                fields.push(FieldSlot {
                    name: f.name.clone(),
                    ty,
                    vis: f.vis,
                    declaring: id,
                    init,
                });
            }
            classes[id].fields = fields;
            classes[id].field_index = field_index;
        }

        // Callable signatures.
        let mut callables: Vec<Callable> = Vec::new();
        let mut bodies: Vec<Option<&Block>> = Vec::new();
        for id in 0..classes.len() {
            let class_name = classes[id].name.clone();
            let mut seen_methods: HashSet<(String, usize)> = HashSet::new();
            for member in &decls[id].members {
                let (name, vis, params, ret, body, span, kind) = match member {
                    Member::Field(_) => continue,
                    Member::Ctor(c) => (
                        "init".to_string(),
                        c.vis,
                        &c.params,
                        None,
                        &c.body,
                        c.span,
                        CallableKind::Ctor,
                    ),
                    Member::Method(m) => (
                        m.name.clone(),
                        m.vis,
                        &m.params,
                        Some(&m.ret),
                        &m.body,
                        m.span,
                        if m.is_static {
                            CallableKind::Static
                        } else {
                            CallableKind::Method
                        },
                    ),
                };
                let site = format!("{class_name}.{name}/{}", params.len());
                let mut ok = true;
                let mut names = HashSet::new();
                let mut param_tys = Vec::new();
                for p in params {
                    if !names.insert(p.name.as_str()) {
                        self.errors.push(err(
                            &site,
                            span,
                            StaticErrorKind::DuplicateMember,
                            format!("duplicate parameter {}", p.name),
                        ));
                        ok = false;
                    }
                    match self.resolve_type(&index, &classes, &p.ty, id, &site, span) {
                        Some(Ty::Void) => {
                            self.errors.push(err(
                                &site,
                                span,
                                StaticErrorKind::TypeMismatch,
                                "parameter of type void",
                            ));
                            ok = false;
                        }
                        Some(t) => param_tys.push(t),
                        None => ok = false,
                    }
                }
                let ret_ty = match ret {
                    None => Ty::Void,
                    Some(t) => match self.resolve_type(&index, &classes, t, id, &site, span) {
                        Some(t) => t,
                        None => {
                            ok = false;
                            Ty::Void
                        }
                    },
                };
                let duplicate = if kind == CallableKind::Ctor {
                    classes[id].ctors.contains_key(&params.len())
                } else {
                    !seen_methods.insert((name.clone(), params.len()))
                };
                if duplicate {
                    self.errors.push(err(
                        &site,
                        span,
                        StaticErrorKind::DuplicateMember,
                        format!("duplicate member {name}/{}", params.len()),
                    ));
                    continue;
                }
                if !ok {
                    continue;
                }
                let cid = callables.len();
                callables.push(Callable {
                    id: cid,
                    class: id,
                    kind,
                    name,
                    vis,
                    params: param_tys,
                    param_names: params.iter().map(|p| p.name.clone()).collect(),
                    ret: ret_ty,
                    body: Vec::new(),
                    n_locals: 0,
                    implicit: false,
                    stmt_ids: Vec::new(),
                    branch_ids: Vec::new(),
                });
                bodies.push(Some(body));
                if kind == CallableKind::Ctor {
                    classes[id].ctors.insert(params.len(), cid);
                } else {
                    classes[id].methods.push(cid);
                }
            }
            if decls[id].ctors().next().is_none() {
                let cid = callables.len();
                callables.push(Callable {
                    id: cid,
                    class: id,
                    kind: CallableKind::Ctor,
                    name: "init".into(),
                    vis: Visibility::Public,
                    params: Vec::new(),
                    param_names: Vec::new(),
                    ret: Ty::Void,
                    body: Vec::new(),
                    n_locals: 0,
                    implicit: true,
                    stmt_ids: Vec::new(),
                    branch_ids: Vec::new(),
                });
                bodies.push(None);
                classes[id].ctors.insert(0, cid);
            }
        }

        // Virtual dispatch tables.
        let mut selectors: HashMap<(String, usize), u32> = HashMap::new();
        for &id in &order {
            let mut vtable = classes[id]
                .superclass
                .map(|s| classes[s].vtable.clone())
                .unwrap_or_default();
            for &m in &classes[id].methods {
                let c = &callables[m];
                if c.kind != CallableKind::Method || c.vis == Visibility::Private {
                    continue;
                }
                let key = (c.name.clone(), c.arity());
                let next = selectors.len() as u32;
                let sel = *selectors.entry(key).or_insert(next);
                if let Some(&over) = vtable.get(&sel) {
                    let o = &callables[over];
                    if o.params != c.params || o.ret != c.ret {
                        self.errors.push(err(
                            &format!("{}.{}/{}", classes[id].name, c.name, c.arity()),
                            Span::default(),
                            StaticErrorKind::TypeMismatch,
                            "override changes the method signature",
                        ));
                    }
                }
                vtable.insert(sel, m);
            }
            classes[id].vtable = vtable;
        }

        let stmt_count = {
            let mut n = 0u32;
            for decl in &program.classes {
                count_class(decl, &mut n);
            }
            n
        };

        let seed_table = program.seed_table.clone();
        let mut image = ProgramImage {
            program: Program::default(),
            classes,
            class_index: index,
            callables,
            selectors,
            seed_table,
            stmt_count,
            revision: Revision::Merge,
            flavor: Flavor::Original,
        };

        for (i, snap) in image.seed_table.iter().enumerate() {
            if let Err(e) = validate_snapshot(&image, snap) {
                self.errors.push(err(
                    &format!("seed {i}"),
                    Span::default(),
                    StaticErrorKind::UnknownName,
                    e.to_string(),
                ));
            }
        }

        let mut lowered = Vec::new();
        for (cid, body) in bodies.iter().enumerate() {
            let Some(body) = body else {
                lowered.push(None);
                continue;
            };
            let c = &image.callables[cid];
            let class = &image.classes[c.class];
            let site = format!("{}.{}/{}", class.name, c.name, c.arity());
            let is_static = c.kind == CallableKind::Static;
            let mut lower = Lowerer::new(&image, Some(c.class), is_static, c.ret, site, false);
            for (name, ty) in c.param_names.iter().zip(&c.params) {
                lower.declare(name, *ty);
            }
            match lower.block(&body.stmts) {
                Ok(stmts) => lowered.push(Some((
                    stmts,
                    lower.max_locals,
                    lower.stmt_ids,
                    lower.branch_ids,
                ))),
                Err(e) => {
                    self.errors.push(e);
                    lowered.push(None);
                }
            }
        }
        if !self.errors.is_empty() {
            return Err(self.errors);
        }
        for (cid, l) in lowered.into_iter().enumerate() {
            if let Some((body, n_locals, stmt_ids, branch_ids)) = l {
                let c = &mut image.callables[cid];
                c.body = body;
                c.n_locals = n_locals;
                c.stmt_ids = stmt_ids;
                c.branch_ids = branch_ids;
            }
        }
        image.program = program;
        Ok(image)
    }

    fn collect<'p>(
        &mut self,
        decl: &'p ClassDecl,
        outer: Option<ClassId>,
        decls: &mut Vec<&'p ClassDecl>,
        classes: &mut Vec<ClassInfo>,
        index: &mut HashMap<String, ClassId>,
    ) {
        let name = match outer {
            Some(o) => format!("{}.{}", classes[o].name, decl.name),
            None => decl.name.clone(),
        };
        if index.contains_key(&name) {
            self.errors.push(err(
                &name,
                decl.span,
                StaticErrorKind::DuplicateMember,
                format!("duplicate class {name}"),
            ));
            return;
        }
        let id = classes.len();
        index.insert(name.clone(), id);
        classes.push(ClassInfo {
            name,
            vis: decl.vis,
            outer,
            superclass: None,
            fields: Vec::new(),
            field_index: HashMap::new(),
            ctors: BTreeMap::new(),
            methods: Vec::new(),
            vtable: HashMap::new(),
            has_extends: decl.extends.is_some(),
        });
        decls.push(decl);
        for inner in &decl.inner {
            self.collect(inner, Some(id), decls, classes, index);
        }
    }

    fn resolve_type(
        &mut self,
        index: &HashMap<String, ClassId>,
        classes: &[ClassInfo],
        ty: &TypeName,
        from: ClassId,
        site: &str,
        span: Span,
    ) -> Option<Ty> {
        Some(match ty {
            TypeName::Int => Ty::Int,
            TypeName::Bool => Ty::Bool,
            TypeName::Str => Ty::Str,
            TypeName::Void => Ty::Void,
            TypeName::Class(name) => match resolve_class_name(index, classes, name, Some(from)) {
                Some(c) if class_accessible(classes, c, Some(from)) => Ty::Class(c),
                Some(_) => {
                    self.errors.push(err(
                        site,
                        span,
                        StaticErrorKind::VisibilityViolation,
                        format!("class {name} is not accessible"),
                    ));
                    return None;
                }
                None => {
                    self.errors.push(err(
                        site,
                        span,
                        StaticErrorKind::UnknownName,
                        format!("unknown type {name}"),
                    ));
                    return None;
                }
            },
        })
    }
}

fn count_class(decl: &ClassDecl, n: &mut u32) {
    for m in &decl.members {
        match m {
            Member::Ctor(c) => walk_stmts(&c.body, &mut |_| *n += 1),
            Member::Method(m) => walk_stmts(&m.body, &mut |_| *n += 1),
            Member::Field(_) => {}
        }
    }
    for inner in &decl.inner {
        count_class(inner, n);
    }
}

fn topo_order(classes: &[ClassInfo]) -> Vec<ClassId> {
    fn visit(id: ClassId, classes: &[ClassInfo], done: &mut [bool], out: &mut Vec<ClassId>) {
        if done[id] {
            return;
        }
        if let Some(s) = classes[id].superclass {
            visit(s, classes, done, out);
        }
        done[id] = true;
        out.push(id);
    }
    let mut done = vec![false; classes.len()];
    let mut out = Vec::new();
    for id in 0..classes.len() {
        visit(id, classes, &mut done, &mut out);
    }
    out
}

struct Lowerer<'a> {
    image: &'a ProgramImage,
    class: Option<ClassId>,
    is_static: bool,
    ret: Ty,
    site: String,
    script: bool,
    scopes: Vec<HashMap<String, (usize, Ty)>>,
    next_local: usize,
    max_locals: usize,
    stmt_ids: Vec<u32>,
    branch_ids: Vec<u32>,
}

type Lowered<T> = Result<T, StaticError>;

impl<'a> Lowerer<'a> {
    fn new(
        image: &'a ProgramImage,
        class: Option<ClassId>,
        is_static: bool,
        ret: Ty,
        site: String,
        script: bool,
    ) -> Self {
        Lowerer {
            image,
            class,
            is_static,
            ret,
            site,
            script,
            scopes: vec![HashMap::new()],
            next_local: 0,
            max_locals: 0,
            stmt_ids: Vec::new(),
            branch_ids: Vec::new(),
        }
    }

    fn fail<T>(&self, span: Span, kind: StaticErrorKind, message: impl Into<String>) -> Lowered<T> {
        Err(err(&self.site, span, kind, message))
    }

    fn declare(&mut self, name: &str, ty: Ty) -> usize {
        let slot = self.next_local;
        self.next_local += 1;
        self.max_locals = self.max_locals.max(self.next_local);
        self.scopes
            .last_mut()
            .expect("scope")
            .insert(name.to_string(), (slot, ty));
        slot
    }

    fn lookup(&self, name: &str) -> Option<(usize, Ty)> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn scoped_block(&mut self, stmts: &[Stmt]) -> Lowered<Vec<IStmt>> {
        self.scopes.push(HashMap::new());
        let saved = self.next_local;
        let out = self.block(stmts);
        self.scopes.pop();
        self.next_local = saved;
        out
    }

    fn block(&mut self, stmts: &[Stmt]) -> Lowered<Vec<IStmt>> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn ty_name(&self, ty: Ty) -> String {
        self.image.ty_name(ty)
    }

    fn expect_ty(&self, span: Span, got: Ty, want: Ty, what: &str) -> Lowered<()> {
        if self.image.assignable(got, want) {
            Ok(())
        } else {
            self.fail(
                span,
                StaticErrorKind::TypeMismatch,
                format!(
                    "{what}: expected {}, found {}",
                    self.ty_name(want),
                    self.ty_name(got)
                ),
            )
        }
    }

    fn resolve_type(&self, ty: &TypeName, span: Span) -> Lowered<Ty> {
        Ok(match ty {
            TypeName::Int => Ty::Int,
            TypeName::Bool => Ty::Bool,
            TypeName::Str => Ty::Str,
            TypeName::Void => Ty::Void,
            TypeName::Class(name) => Ty::Class(self.resolve_class(name, span)?),
        })
    }

    fn resolve_class(&self, name: &str, span: Span) -> Lowered<ClassId> {
        let image = self.image;
        match resolve_class_name(&image.class_index, &image.classes, name, self.class) {
            Some(c) if class_accessible(&image.classes, c, self.class) => Ok(c),
            Some(_) => self.fail(
                span,
                StaticErrorKind::VisibilityViolation,
                format!("class {name} is not accessible"),
            ),
            None => self.fail(
                span,
                StaticErrorKind::UnknownName,
                format!("unknown class {name}"),
            ),
        }
    }

    fn member_visible(&self, vis: Visibility, declaring: ClassId) -> bool {
        vis == Visibility::Public || self.class == Some(declaring)
    }

    fn stmt(&mut self, stmt: &Stmt) -> Lowered<IStmt> {
        let span = stmt.span;
        let id = if stmt.id.is_assigned() && !self.script {
            self.stmt_ids.push(stmt.id.0);
            stmt.id.0
        } else {
            u32::MAX
        };
        let kind = match &stmt.kind {
            StmtKind::Let { name, ty, init } => {
                let (e, t) = self.expr(init)?;
                if t == Ty::Void {
                    return self.fail(span, StaticErrorKind::TypeMismatch, "void value in let");
                }
                let declared = match ty {
                    Some(written) => {
                        let d = self.resolve_type(written, span)?;
                        if d == Ty::Void {
                            return self.fail(
                                span,
                                StaticErrorKind::TypeMismatch,
                                "local of type void",
                            );
                        }
                        self.expect_ty(span, t, d, "let initializer")?;
                        d
                    }
                    None => t,
                };
                let slot = self.declare(name, declared);
                IStmtKind::SetLocal(slot, e)
            }
            StmtKind::Assign { target, value } => {
                let (v, vt) = self.expr(value)?;
                match &target.kind {
                    ExprKind::Var(name) => {
                        let Some((slot, ty)) = self.lookup(name) else {
                            return self.fail(
                                span,
                                StaticErrorKind::UnknownName,
                                format!("unknown variable {name}"),
                            );
                        };
                        self.expect_ty(span, vt, ty, "assignment")?;
                        IStmtKind::SetLocal(slot, v)
                    }
                    ExprKind::Field(recv, field) => {
                        let (r, slot, ty) = self.field_access(recv, field, target.span)?;
                        self.expect_ty(span, vt, ty, "field assignment")?;
                        IStmtKind::SetField(r, slot, v)
                    }
                    _ => {
                        return self.fail(
                            span,
                            StaticErrorKind::TypeMismatch,
                            "invalid assignment target",
                        )
                    }
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if id != u32::MAX {
                    self.branch_ids.push(id);
                }
                let c = self.condition(cond)?;
                let then_body = self.scoped_block(&then_block.stmts)?;
                let else_body = match else_block {
                    Some(b) => self.scoped_block(&b.stmts)?,
                    None => Vec::new(),
                };
                IStmtKind::If {
                    cond: c,
                    then_body,
                    else_body,
                }
            }
            StmtKind::While { cond, body } => {
                if id != u32::MAX {
                    self.branch_ids.push(id);
                }
                let c = self.condition(cond)?;
                let body = self.scoped_block(&body.stmts)?;
                IStmtKind::While { cond: c, body }
            }
            StmtKind::Return(value) => {
                if self.script {
                    return self.fail(
                        span,
                        StaticErrorKind::TypeMismatch,
                        "return outside a method",
                    );
                }
                match (value, self.ret) {
                    (None, Ty::Void) => IStmtKind::Return(None),
                    (None, _) => {
                        return self.fail(
                            span,
                            StaticErrorKind::TypeMismatch,
                            "missing return value",
                        )
                    }
                    (Some(_), Ty::Void) => {
                        return self.fail(
                            span,
                            StaticErrorKind::TypeMismatch,
                            "return value in void context",
                        )
                    }
                    (Some(e), ret) => {
                        let (e, t) = self.expr(e)?;
                        self.expect_ty(span, t, ret, "return")?;
                        IStmtKind::Return(Some(e))
                    }
                }
            }
            StmtKind::Throw(e) => {
                let (e, t) = self.expr(e)?;
                self.expect_ty(span, t, Ty::Str, "throw")?;
                IStmtKind::Throw(e)
            }
            StmtKind::Expr(e) => IStmtKind::Eval(self.expr(e)?.0),
            StmtKind::Assert(a) => {
                if !self.script {
                    return self.fail(
                        span,
                        StaticErrorKind::TypeMismatch,
                        "assertion outside a test",
                    );
                }
                IStmtKind::Assert(match a {
                    Assertion::Eq(l, r) => {
                        let (l, lt) = self.expr(l)?;
                        let (r, rt) = self.expr(r)?;
                        self.comparable(span, lt, rt)?;
                        IAssert::Eq(l, r)
                    }
                    Assertion::Null(e) | Assertion::NotNull(e) => {
                        let (x, t) = self.expr(e)?;
                        if !t.is_reference() {
                            return self.fail(
                                span,
                                StaticErrorKind::TypeMismatch,
                                "null check on a primitive",
                            );
                        }
                        if matches!(a, Assertion::Null(_)) {
                            IAssert::Null(x)
                        } else {
                            IAssert::NotNull(x)
                        }
                    }
                })
            }
        };
        Ok(IStmt { kind, id, span })
    }

    fn condition(&mut self, cond: &Expr) -> Lowered<IExpr> {
        let (c, t) = self.expr(cond)?;
        self.expect_ty(cond.span, t, Ty::Bool, "condition")?;
        Ok(c)
    }

    fn comparable(&self, span: Span, a: Ty, b: Ty) -> Lowered<()> {
        let ok = (a == b && a.is_primitive())
            || (a.is_reference()
                && b.is_reference()
                && (self.image.assignable(a, b) || self.image.assignable(b, a)));
        if ok {
            Ok(())
        } else {
            self.fail(
                span,
                StaticErrorKind::TypeMismatch,
                format!(
                    "cannot compare {} with {}",
                    self.ty_name(a),
                    self.ty_name(b)
                ),
            )
        }
    }

    fn receiver_class(&self, ty: Ty, span: Span) -> Lowered<ClassId> {
        match ty {
            Ty::Class(c) => {
                if self.class.is_none() && !self.image.class_visible_to_tests(c) {
                    return self.fail(
                        span,
                        StaticErrorKind::VisibilityViolation,
                        format!(
                            "class {} is not visible to tests",
                            self.image.classes[c].name
                        ),
                    );
                }
                Ok(c)
            }
            other => self.fail(
                span,
                StaticErrorKind::TypeMismatch,
                format!("member access on {}", self.ty_name(other)),
            ),
        }
    }

    fn field_access(
        &mut self,
        recv: &Expr,
        field: &str,
        span: Span,
    ) -> Lowered<(IExpr, usize, Ty)> {
        let (r, rt) = self.expr(recv)?;
        let class = self.receiver_class(rt, span)?;
        let info = &self.image.classes[class];
        let Some(&slot) = info.field_index.get(field) else {
            return self.fail(
                span,
                StaticErrorKind::UnknownName,
                format!("unknown field {}.{field}", info.name),
            );
        };
        let f = &info.fields[slot];
        if !self.member_visible(f.vis, f.declaring) {
            return self.fail(
                span,
                StaticErrorKind::VisibilityViolation,
                format!(
                    "field {}.{field} is private",
                    self.image.classes[f.declaring].name
                ),
            );
        }
        Ok((r, slot, f.ty))
    }

    fn args(&mut self, callable: CallableId, args: &[Expr], span: Span) -> Lowered<Vec<IExpr>> {
        let params = self.image.callables[callable].params.clone();
        let mut out = Vec::with_capacity(args.len());
        for (i, (a, p)) in args.iter().zip(params).enumerate() {
            let (e, t) = self.expr(a)?;
            self.expect_ty(span, t, p, &format!("argument {}", i + 1))?;
            out.push(e);
        }
        Ok(out)
    }

    fn find_callable(
        &self,
        class: ClassId,
        name: &str,
        arity: usize,
        span: Span,
    ) -> Lowered<CallableId> {
        match self.image.find_method(class, name, arity) {
            Some(m) => {
                let c = &self.image.callables[m];
                if !self.member_visible(c.vis, c.class) {
                    return self.fail(
                        span,
                        StaticErrorKind::VisibilityViolation,
                        format!(
                            "method {}.{name}/{arity} is private",
                            self.image.classes[c.class].name
                        ),
                    );
                }
                Ok(m)
            }
            None if self.image.has_method_named(class, name) => self.fail(
                span,
                StaticErrorKind::ArityMismatch,
                format!(
                    "no method {}.{name} taking {arity} arguments",
                    self.image.classes[class].name
                ),
            ),
            None => self.fail(
                span,
                StaticErrorKind::UnknownName,
                format!("unknown method {}.{name}", self.image.classes[class].name),
            ),
        }
    }

    fn expr(&mut self, e: &Expr) -> Lowered<(IExpr, Ty)> {
        let span = e.span;
        Ok(match &e.kind {
            ExprKind::Lit(lit) => {
                let ty = match lit {
                    Literal::Int(_) => Ty::Int,
                    Literal::Bool(_) => Ty::Bool,
                    Literal::Str(_) => Ty::Str,
                    Literal::Null => Ty::Null,
                };
                (IExpr::Const(Value::from_literal(lit)), ty)
            }
            ExprKind::Var(name) => match self.lookup(name) {
                Some((slot, ty)) => (IExpr::Local(slot), ty),
                None => {
                    return self.fail(
                        span,
                        StaticErrorKind::UnknownName,
                        format!("unknown variable {name}"),
                    )
                }
            },
            ExprKind::This => match self.class {
                Some(c) if !self.is_static => (IExpr::This, Ty::Class(c)),
                _ => {
                    return self.fail(
                        span,
                        StaticErrorKind::UnknownName,
                        "`this` is not available here",
                    )
                }
            },
            ExprKind::Field(recv, field) => {
                let (r, slot, ty) = self.field_access(recv, field, span)?;
                (IExpr::Field(Box::new(r), slot), ty)
            }
            ExprKind::Call { recv, method, args } => {
                if let ExprKind::Var(name) = &recv.kind {
                    if self.lookup(name).is_none() {
                        let class = self.resolve_class(name, recv.span)?;
                        let m = self.find_callable(class, method, args.len(), span)?;
                        if self.image.callables[m].kind != CallableKind::Static {
                            return self.fail(
                                span,
                                StaticErrorKind::TypeMismatch,
                                format!("{name}.{method} is not a static method"),
                            );
                        }
                        let args = self.args(m, args, span)?;
                        let ret = self.image.callables[m].ret;
                        return Ok((
                            IExpr::Direct {
                                recv: None,
                                callable: m,
                                args,
                            },
                            ret,
                        ));
                    }
                }
                let (r, rt) = self.expr(recv)?;
                let class = self.receiver_class(rt, span)?;
                let m = self.find_callable(class, method, args.len(), span)?;
                let callable = &self.image.callables[m];
                if callable.kind == CallableKind::Static {
                    return self.fail(
                        span,
                        StaticErrorKind::TypeMismatch,
                        format!("static method {method} called on an instance"),
                    );
                }
                let (ret, private, key) = (
                    callable.ret,
                    callable.vis == Visibility::Private,
                    (callable.name.clone(), callable.arity()),
                );
                let args = self.args(m, args, span)?;
                if private {
                    (
                        IExpr::Direct {
                            recv: Some(Box::new(r)),
                            callable: m,
                            args,
                        },
                        ret,
                    )
                } else {
                    let selector = self.image.selectors[&key];
                    (
                        IExpr::Virtual {
                            recv: Box::new(r),
                            selector,
                            args,
                        },
                        ret,
                    )
                }
            }
            ExprKind::New { class, args } => {
                let c = self.resolve_class(class, span)?;
                let info = &self.image.classes[c];
                let Some(&ctor) = info.ctors.get(&args.len()) else {
                    return self.fail(
                        span,
                        StaticErrorKind::ArityMismatch,
                        format!(
                            "no constructor {}.init taking {} arguments",
                            info.name,
                            args.len()
                        ),
                    );
                };
                if !self.member_visible(self.image.callables[ctor].vis, c) {
                    return self.fail(
                        span,
                        StaticErrorKind::VisibilityViolation,
                        format!("constructor of {} is private", info.name),
                    );
                }
                let args = self.args(ctor, args, span)?;
                (
                    IExpr::New {
                        class: c,
                        ctor,
                        args,
                    },
                    Ty::Class(c),
                )
            }
            ExprKind::Unary(op, inner) => {
                let (x, t) = self.expr(inner)?;
                match op {
                    UnOp::Neg => {
                        self.expect_ty(span, t, Ty::Int, "negation")?;
                        (IExpr::Neg(Box::new(x)), Ty::Int)
                    }
                    UnOp::Not => {
                        self.expect_ty(span, t, Ty::Bool, "logical not")?;
                        (IExpr::Not(Box::new(x)), Ty::Bool)
                    }
                }
            }
            ExprKind::Binary(op, l, r) => self.binary(*op, l, r, span)?,
            ExprKind::Builtin(b, args) => {
                if args.len() != b.arity() {
                    return self.fail(
                        span,
                        StaticErrorKind::ArityMismatch,
                        format!("{} takes {} arguments", b.name(), b.arity()),
                    );
                }
                let (params, ret): (&[Ty], Ty) = match b {
                    Builtin::Len => (&[Ty::Str], Ty::Int),
                    Builtin::Replace => (&[Ty::Str, Ty::Str, Ty::Str], Ty::Str),
                    Builtin::Contains => (&[Ty::Str, Ty::Str], Ty::Bool),
                    Builtin::Trim => (&[Ty::Str], Ty::Str),
                    Builtin::Nondet => (&[Ty::Int], Ty::Int),
                };
                let mut out = Vec::new();
                for (a, p) in args.iter().zip(params) {
                    let (x, t) = self.expr(a)?;
                    self.expect_ty(a.span, t, *p, b.name())?;
                    out.push(x);
                }
                (IExpr::Builtin(*b, out), ret)
            }
            ExprKind::Seed(n) => {
                let Some(snap) = self.image.seed_table.get(*n as usize) else {
                    return self.fail(
                        span,
                        StaticErrorKind::UnknownName,
                        format!("unknown seed {n}"),
                    );
                };
                let Some(c) = self.image.class_id(snap.root_class()) else {
                    return self.fail(
                        span,
                        StaticErrorKind::UnknownName,
                        format!("unknown class {}", snap.root_class()),
                    );
                };
                (IExpr::Seed(*n), Ty::Class(c))
            }
        })
    }

    fn binary(&mut self, op: BinOp, l: &Expr, r: &Expr, span: Span) -> Lowered<(IExpr, Ty)> {
        let (a, at) = self.expr(l)?;
        let (b, bt) = self.expr(r)?;
        let (a, b) = (Box::new(a), Box::new(b));
        let arith = |op| match op {
            BinOp::Add => ArithOp::Add,
            BinOp::Sub => ArithOp::Sub,
            BinOp::Mul => ArithOp::Mul,
            BinOp::Div => ArithOp::Div,
            _ => ArithOp::Rem,
        };
        Ok(match op {
            BinOp::Add if at == Ty::Str || bt == Ty::Str => {
                if !at.is_primitive() || !bt.is_primitive() {
                    return self.fail(
                        span,
                        StaticErrorKind::TypeMismatch,
                        "string concatenation with a non-primitive",
                    );
                }
                (IExpr::Concat(a, b), Ty::Str)
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                self.expect_ty(span, at, Ty::Int, op.symbol())?;
                self.expect_ty(span, bt, Ty::Int, op.symbol())?;
                (IExpr::Arith(arith(op), a, b), Ty::Int)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                self.expect_ty(span, at, Ty::Int, op.symbol())?;
                self.expect_ty(span, bt, Ty::Int, op.symbol())?;
                let cmp = match op {
                    BinOp::Lt => CmpOp::Lt,
                    BinOp::Le => CmpOp::Le,
                    BinOp::Gt => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                (IExpr::Cmp(cmp, a, b), Ty::Bool)
            }
            BinOp::Eq | BinOp::Ne => {
                self.comparable(span, at, bt)?;
                (
                    IExpr::Equal {
                        negate: op == BinOp::Ne,
                        lhs: a,
                        rhs: b,
                    },
                    Ty::Bool,
                )
            }
            BinOp::And | BinOp::Or => {
                self.expect_ty(span, at, Ty::Bool, op.symbol())?;
                self.expect_ty(span, bt, Ty::Bool, op.symbol())?;
                if op == BinOp::And {
                    (IExpr::And(a, b), Ty::Bool)
                } else {
                    (IExpr::Or(a, b), Ty::Bool)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::{parse, parse_script};
    use super::*;

    fn kinds(src: &str) -> Vec<StaticErrorKind> {
        match check(&parse(src).unwrap()) {
            Ok(_) => Vec::new(),
            Err(errs) => errs.into_iter().map(|e| e.kind).collect(),
        }
    }

    #[test]
    fn private_field_from_other_class() {
        let src = "class A { priv int secret; } class B { pub int peek(A a) { return a.secret; } }";
        assert_eq!(kinds(src), vec![StaticErrorKind::VisibilityViolation]);
    }

    #[test]
    fn self_extending_class() {
        assert_eq!(
            kinds("class A extends A { }"),
            vec![StaticErrorKind::InheritanceCycle]
        );
    }

    #[test]
    fn longer_cycle_reported_for_each_member() {
        let k = kinds("class A extends B { } class B extends A { }");
        assert_eq!(k, vec![StaticErrorKind::InheritanceCycle; 2]);
    }

    #[test]
    fn duplicates() {
        assert_eq!(
            kinds("class A { pub int x; pub bool x; }"),
            vec![StaticErrorKind::DuplicateMember]
        );
        assert_eq!(
            kinds("class A { pub int f() { return 1; } pub int f() { return 2; } }"),
            vec![StaticErrorKind::DuplicateMember]
        );
        assert_eq!(
            kinds("class A { pub init(int a) {} pub init(str b) {} }"),
            vec![StaticErrorKind::DuplicateMember]
        );
        assert!(
            kinds("class A { pub int f() { return 1; } pub int f(int x) { return x; } }")
                .is_empty()
        );
    }

    #[test]
    fn type_and_arity_errors() {
        assert_eq!(
            kinds("class A { pub int f() { return true; } }"),
            vec![StaticErrorKind::TypeMismatch]
        );
        assert_eq!(
            kinds("class A { pub int f(int x) { return x; } pub int g() { return this.f(); } }"),
            vec![StaticErrorKind::ArityMismatch]
        );
        assert_eq!(
            kinds("class A { pub int f() { return this.g(); } }"),
            vec![StaticErrorKind::UnknownName]
        );
        assert_eq!(
            kinds("class A { pub int x = true; }"),
            vec![StaticErrorKind::TypeMismatch]
        );
    }

    #[test]
    fn subclass_assignable_to_superclass_and_null_to_class() {
        let src = "class A { } class B extends A { } class C { pub A f() { let a: A = new B(); a = null; return a; } }";
        assert!(kinds(src).is_empty());
        assert_eq!(
            kinds("class A { } class B extends A { } class C { pub B f() { return new A(); } }"),
            vec![StaticErrorKind::TypeMismatch]
        );
    }

    #[test]
    fn inner_class_access_rules() {
        let ok = "class O { priv class I { pub int v() { return 1; } } pub int go() { return new I().v(); } }";
        assert!(kinds(ok).is_empty());
        let bad = "class O { priv class I { } } class P { pub int go() { let x = new O.I(); return 1; } }";
        assert_eq!(kinds(bad), vec![StaticErrorKind::VisibilityViolation]);
    }

    #[test]
    fn tests_see_public_members_only() {
        let image =
            check(&parse("class A { priv int x; pub int y; priv int f() { return 1; } }").unwrap())
                .unwrap();
        let kind = |s: &str| {
            check_script(&image, &parse_script(s).unwrap())
                .err()
                .map(|e| e.kind)
        };
        assert_eq!(kind("let a = new A(); assertEq(a.y, 0);"), None);
        assert_eq!(
            kind("let a = new A(); assertEq(a.x, 0);"),
            Some(StaticErrorKind::VisibilityViolation)
        );
        assert_eq!(
            kind("let a = new A(); a.f();"),
            Some(StaticErrorKind::VisibilityViolation)
        );
        assert_eq!(
            kind("let a = new A(); a.g();"),
            Some(StaticErrorKind::UnknownName)
        );
    }

    #[test]
    fn statement_ids_are_dense_and_preorder() {
        let image = check(
            &parse("class A { pub int f(int x) { if (x > 0) { x = 1; } return x; } pub void g() { return; } }").unwrap(),
        )
        .unwrap();
        assert_eq!(image.stmt_count, 4);
        let f = &image.callables[image.find_method(0, "f", 1).unwrap()];
        assert_eq!(f.stmt_ids, vec![0, 1, 2]);
        assert_eq!(f.branch_ids, vec![0]);
    }

    #[test]
    fn implicit_constructor() {
        let image = check(&parse("class A { }").unwrap()).unwrap();
        let ctor = image.classes[0].ctors[&0];
        assert!(image.callables[ctor].implicit);
    }
}
