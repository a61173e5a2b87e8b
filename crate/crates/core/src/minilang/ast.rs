//! Syntax tree for MiniLang programs and test scripts.
//!
//! Source positions and statement ids are carried alongside every node but
//! never take part in equality, so two parses of differently formatted text
//! compare equal when their structure matches.

use std::fmt;

use super::snapshot::Snapshot;

/// Line/column of a node in its source text (1-based).
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Statement id assigned when a program is checked into an image. Ids never
/// take part in comparison or hashing, so trees compare by structure alone.
#[derive(Clone, Copy, Debug)]
pub struct StmtId(pub u32);

impl StmtId {
    pub const UNASSIGNED: StmtId = StmtId(u32::MAX);

    pub fn is_assigned(self) -> bool {
        self.0 != u32::MAX
    }
}

impl Default for StmtId {
    fn default() -> Self {
        StmtId::UNASSIGNED
    }
}

impl PartialEq for StmtId {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for StmtId {}

impl std::hash::Hash for StmtId {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl PartialOrd for StmtId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for StmtId {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Visibility {
    Public,
    Private,
}

impl Visibility {
    pub fn keyword(self) -> &'static str {
        match self {
            Visibility::Public => "pub",
            Visibility::Private => "priv",
        }
    }
}

/// A type as written in source. Class names may be dot-qualified (`Outer.Inner`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeName {
    Int,
    Bool,
    Str,
    Void,
    Class(String),
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeName::Int => f.write_str("int"),
            TypeName::Bool => f.write_str("bool"),
            TypeName::Str => f.write_str("str"),
            TypeName::Void => f.write_str("void"),
            TypeName::Class(name) => f.write_str(name),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    /// Object graphs referenced by `__seed(n)` expressions. Empty for
    /// hand-written programs; populated by the serialization transform.
    pub seed_table: Vec<Snapshot>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDecl {
    pub vis: Visibility,
    pub name: String,
    pub extends: Option<String>,
    pub members: Vec<Member>,
    pub inner: Vec<ClassDecl>,
    pub span: Span,
}

impl ClassDecl {
    pub fn fields(&self) -> impl Iterator<Item = &FieldDecl> {
        self.members.iter().filter_map(|m| match m {
            Member::Field(f) => Some(f),
            _ => None,
        })
    }

    pub fn ctors(&self) -> impl Iterator<Item = &CtorDecl> {
        self.members.iter().filter_map(|m| match m {
            Member::Ctor(c) => Some(c),
            _ => None,
        })
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodDecl> {
        self.members.iter().filter_map(|m| match m {
            Member::Method(m) => Some(m),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Member {
    Field(FieldDecl),
    Ctor(CtorDecl),
    Method(MethodDecl),
}

impl Member {
    pub fn vis(&self) -> Visibility {
        match self {
            Member::Field(f) => f.vis,
            Member::Ctor(c) => c.vis,
            Member::Method(m) => m.vis,
        }
    }

    pub fn set_vis(&mut self, vis: Visibility) {
        match self {
            Member::Field(f) => f.vis = vis,
            Member::Ctor(c) => c.vis = vis,
            Member::Method(m) => m.vis = vis,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Member::Field(f) => f.span,
            Member::Ctor(c) => c.span,
            Member::Method(m) => m.span,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub vis: Visibility,
    pub ty: TypeName,
    pub name: String,
    pub init: Option<Literal>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeName,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtorDecl {
    pub vis: Visibility,
    pub params: Vec<Param>,
    pub body: Block,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDecl {
    pub vis: Visibility,
    pub is_static: bool,
    pub ret: TypeName,
    pub name: String,
    pub params: Vec<Param>,
    pub body: Block,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
    pub id: StmtId,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt {
            kind,
            span: Span::default(),
            id: StmtId::UNASSIGNED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Let {
        name: String,
        ty: Option<TypeName>,
        init: Expr,
    },
    Assign {
        target: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    Return(Option<Expr>),
    Throw(Expr),
    Expr(Expr),
    Assert(Assertion),
}

/// Assertion statements; legal only in test scripts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assertion {
    Eq(Expr, Expr),
    Null(Expr),
    NotNull(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }

    pub fn lit(lit: Literal) -> Self {
        Expr::new(ExprKind::Lit(lit))
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Var(name.into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Lit(Literal),
    Var(String),
    This,
    Field(Box<Expr>, String),
    /// `recv.method(args)`. When `recv` is a bare name that does not denote
    /// a local, the checker treats it as a class-qualified static call.
    Call {
        recv: Box<Expr>,
        method: String,
        args: Vec<Expr>,
    },
    New {
        class: String,
        args: Vec<Expr>,
    },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Builtin(Builtin, Vec<Expr>),
    /// Rehydrates entry `n` of the program's seed table.
    Seed(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Len,
    Replace,
    Contains,
    Trim,
    Nondet,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Len => "len",
            Builtin::Replace => "replace",
            Builtin::Contains => "contains",
            Builtin::Trim => "trim",
            Builtin::Nondet => "nondet",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "len" => Builtin::Len,
            "replace" => Builtin::Replace,
            "contains" => Builtin::Contains,
            "trim" => Builtin::Trim,
            "nondet" => Builtin::Nondet,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Len | Builtin::Trim | Builtin::Nondet => 1,
            Builtin::Contains => 2,
            Builtin::Replace => 3,
        }
    }
}

/// A test script: a flat list of statements including assertions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TestScript {
    pub stmts: Vec<Stmt>,
}

/// Visits every statement in a block, depth first, in source order.
pub fn walk_stmts<'a>(block: &'a Block, f: &mut dyn FnMut(&'a Stmt)) {
    for stmt in &block.stmts {
        f(stmt);
        match &stmt.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                walk_stmts(then_block, f);
                if let Some(b) = else_block {
                    walk_stmts(b, f);
                }
            }
            StmtKind::While { body, .. } => walk_stmts(body, f),
            _ => {}
        }
    }
}

pub fn walk_stmts_mut(block: &mut Block, f: &mut dyn FnMut(&mut Stmt)) {
    for stmt in &mut block.stmts {
        f(stmt);
        match &mut stmt.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                walk_stmts_mut(then_block, f);
                if let Some(b) = else_block {
                    walk_stmts_mut(b, f);
                }
            }
            StmtKind::While { body, .. } => walk_stmts_mut(body, f),
            _ => {}
        }
    }
}

/// Visits every expression reachable from a statement list (pre-order).
pub fn walk_exprs_mut(stmts: &mut [Stmt], f: &mut dyn FnMut(&mut Expr)) {
    fn expr(e: &mut Expr, f: &mut dyn FnMut(&mut Expr)) {
        f(e);
        match &mut e.kind {
            ExprKind::Field(inner, _) | ExprKind::Unary(_, inner) => expr(inner, f),
            ExprKind::Call { recv, args, .. } => {
                expr(recv, f);
                args.iter_mut().for_each(|a| expr(a, f));
            }
            ExprKind::New { args, .. } | ExprKind::Builtin(_, args) => {
                args.iter_mut().for_each(|a| expr(a, f))
            }
            ExprKind::Binary(_, l, r) => {
                expr(l, f);
                expr(r, f);
            }
            ExprKind::Lit(_) | ExprKind::Var(_) | ExprKind::This | ExprKind::Seed(_) => {}
        }
    }
    for stmt in stmts {
        match &mut stmt.kind {
            StmtKind::Let { init, .. } => expr(init, f),
            StmtKind::Assign { target, value } => {
                expr(target, f);
                expr(value, f);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                expr(cond, f);
                walk_exprs_mut(&mut then_block.stmts, f);
                if let Some(b) = else_block {
                    walk_exprs_mut(&mut b.stmts, f);
                }
            }
            StmtKind::While { cond, body } => {
                expr(cond, f);
                walk_exprs_mut(&mut body.stmts, f);
            }
            StmtKind::Return(Some(e)) | StmtKind::Throw(e) | StmtKind::Expr(e) => expr(e, f),
            StmtKind::Return(None) => {}
            StmtKind::Assert(a) => match a {
                Assertion::Eq(l, r) => {
                    expr(l, f);
                    expr(r, f);
                }
                Assertion::Null(e) | Assertion::NotNull(e) => expr(e, f),
            },
        }
    }
}
