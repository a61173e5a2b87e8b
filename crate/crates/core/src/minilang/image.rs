//! Checked program images and the resolved intermediate form the
//! interpreter executes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::{Builtin, Literal, Program, Span, Visibility};
use super::snapshot::Snapshot;

pub type ClassId = usize;
pub type CallableId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Revision {
    Base,
    Left,
    Right,
    Merge,
}

impl Revision {
    pub const ALL: [Revision; 4] = [
        Revision::Base,
        Revision::Left,
        Revision::Right,
        Revision::Merge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Revision::Base => "base",
            Revision::Left => "left",
            Revision::Right => "right",
            Revision::Merge => "merge",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Revision::Base => 'B',
            Revision::Left => 'L',
            Revision::Right => 'R',
            Revision::Merge => 'M',
        }
    }
}

impl fmt::Display for Revision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "testability")]
    Testability,
    #[serde(rename = "serialization")]
    Serialized,
}

impl Flavor {
    pub const ALL: [Flavor; 3] = [Flavor::Original, Flavor::Testability, Flavor::Serialized];

    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Original => "original",
            Flavor::Testability => "testability",
            Flavor::Serialized => "serialization",
        }
    }

    pub fn from_name(name: &str) -> Option<Flavor> {
        Flavor::ALL.into_iter().find(|f| f.as_str() == name)
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberKind {
    Field,
    Method,
    Ctor,
}

/// A class member named independently of any particular image.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementId {
    pub class: String,
    pub kind: MemberKind,
    pub name: String,
    pub arity: usize,
}

impl ElementId {
    pub fn method(class: &str, name: &str, arity: usize) -> Self {
        ElementId {
            class: class.into(),
            kind: MemberKind::Method,
            name: name.into(),
            arity,
        }
    }

    pub fn ctor(class: &str, arity: usize) -> Self {
        ElementId {
            class: class.into(),
            kind: MemberKind::Ctor,
            name: "init".into(),
            arity,
        }
    }

    pub fn field(class: &str, name: &str) -> Self {
        ElementId {
            class: class.into(),
            kind: MemberKind::Field,
            name: name.into(),
            arity: 0,
        }
    }

    /// The same element after class renaming (inner-class hoisting).
    pub fn renamed(&self, renames: &BTreeMap<String, String>) -> ElementId {
        let mut out = self.clone();
        if let Some(new) = renames.get(&self.class) {
            out.class = new.clone();
        }
        out
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MemberKind::Field => write!(f, "{}.{}", self.class, self.name),
            _ => write!(f, "{}.{}/{}", self.class, self.name, self.arity),
        }
    }
}

/// Resolved static type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Int,
    Bool,
    Str,
    Void,
    Null,
    Class(ClassId),
}

impl Ty {
    pub fn is_primitive(self) -> bool {
        matches!(self, Ty::Int | Ty::Bool | Ty::Str)
    }

    pub fn is_reference(self) -> bool {
        matches!(self, Ty::Null | Ty::Class(_))
    }
}

/// Runtime value. Strings are shared so images holding constants stay `Sync`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Null,
    Ref(u32),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Arc::from(s))
    }

    pub fn from_literal(lit: &Literal) -> Value {
        match lit {
            Literal::Int(n) => Value::Int(*n),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Str(s) => Value::str(s),
            Literal::Null => Value::Null,
        }
    }

    /// Literal form of a non-reference value.
    pub fn to_literal(&self) -> Option<Literal> {
        Some(match self {
            Value::Int(n) => Literal::Int(*n),
            Value::Bool(b) => Literal::Bool(*b),
            Value::Str(s) => Literal::Str(s.to_string()),
            Value::Null => Literal::Null,
            Value::Ref(_) => return None,
        })
    }

    pub fn default_for(ty: Ty) -> Value {
        match ty {
            Ty::Int => Value::Int(0),
            Ty::Bool => Value::Bool(false),
            Ty::Str => Value::str(""),
            Ty::Void | Ty::Null | Ty::Class(_) => Value::Null,
        }
    }

    pub fn as_ref(&self) -> Option<u32> {
        match self {
            Value::Ref(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FieldSlot {
    pub name: String,
    pub ty: Ty,
    pub vis: Visibility,
    pub declaring: ClassId,
    pub init: Value,
}

#[derive(Clone, Debug)]
pub struct ClassInfo {
    /// Dot-qualified name (`Outer.Inner`).
    pub name: String,
    pub vis: Visibility,
    pub outer: Option<ClassId>,
    pub superclass: Option<ClassId>,
    /// Full field layout, inherited slots first.
    pub fields: Vec<FieldSlot>,
    pub field_index: HashMap<String, usize>,
    /// Constructors declared in this class, by arity. Classes without
    /// explicit constructors get an implicit public zero-arity one.
    pub ctors: BTreeMap<usize, CallableId>,
    /// Methods declared in this class, in declaration order.
    pub methods: Vec<CallableId>,
    /// Non-private instance methods, including inherited ones.
    pub vtable: HashMap<u32, CallableId>,
    /// Whether the class declaration has an explicit `extends` clause.
    pub has_extends: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallableKind {
    Ctor,
    Method,
    Static,
}

#[derive(Clone, Debug)]
pub struct Callable {
    pub id: CallableId,
    pub class: ClassId,
    pub kind: CallableKind,
    /// `init` for constructors.
    pub name: String,
    pub vis: Visibility,
    pub params: Vec<Ty>,
    pub param_names: Vec<String>,
    pub ret: Ty,
    pub body: Vec<IStmt>,
    pub n_locals: usize,
    pub implicit: bool,
    /// Statement ids declared in this body, in pre-order.
    pub stmt_ids: Vec<u32>,
    /// Ids of `if`/`while` statements; each contributes two branch arms.
    pub branch_ids: Vec<u32>,
}

impl Callable {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn is_ctor(&self) -> bool {
        self.kind == CallableKind::Ctor
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

/// Resolved expression.
#[derive(Clone, Debug)]
pub enum IExpr {
    Const(Value),
    Local(usize),
    This,
    Field(Box<IExpr>, usize),
    Virtual {
        recv: Box<IExpr>,
        selector: u32,
        args: Vec<IExpr>,
    },
    /// Statically bound call: private or static methods.
    Direct {
        recv: Option<Box<IExpr>>,
        callable: CallableId,
        args: Vec<IExpr>,
    },
    New {
        class: ClassId,
        ctor: CallableId,
        args: Vec<IExpr>,
    },
    Neg(Box<IExpr>),
    Not(Box<IExpr>),
    Arith(ArithOp, Box<IExpr>, Box<IExpr>),
    Concat(Box<IExpr>, Box<IExpr>),
    Cmp(CmpOp, Box<IExpr>, Box<IExpr>),
    Equal {
        negate: bool,
        lhs: Box<IExpr>,
        rhs: Box<IExpr>,
    },
    And(Box<IExpr>, Box<IExpr>),
    Or(Box<IExpr>, Box<IExpr>),
    Builtin(Builtin, Vec<IExpr>),
    Seed(u32),
}

#[derive(Clone, Debug)]
pub enum IAssert {
    Eq(IExpr, IExpr),
    Null(IExpr),
    NotNull(IExpr),
}

#[derive(Clone, Debug)]
pub struct IStmt {
    pub kind: IStmtKind,
    /// Statement id, or `u32::MAX` for test-script statements.
    pub id: u32,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub enum IStmtKind {
    SetLocal(usize, IExpr),
    SetField(IExpr, usize, IExpr),
    If {
        cond: IExpr,
        then_body: Vec<IStmt>,
        else_body: Vec<IStmt>,
    },
    While {
        cond: IExpr,
        body: Vec<IStmt>,
    },
    Return(Option<IExpr>),
    Throw(IExpr),
    Eval(IExpr),
    Assert(IAssert),
}

/// A checked, loadable program for one revision and flavor. Immutable.
#[derive(Clone, Debug)]
pub struct ProgramImage {
    /// The program with statement ids assigned.
    pub program: Program,
    pub classes: Vec<ClassInfo>,
    pub class_index: HashMap<String, ClassId>,
    pub callables: Vec<Callable>,
    pub selectors: HashMap<(String, usize), u32>,
    pub seed_table: Vec<Snapshot>,
    pub stmt_count: u32,
    pub revision: Revision,
    pub flavor: Flavor,
}

/// Where an [`ElementId`] lives inside an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementRef {
    Callable(CallableId),
    Field(ClassId, usize),
}

impl ProgramImage {
    pub fn with_labels(mut self, revision: Revision, flavor: Flavor) -> Self {
        self.revision = revision;
        self.flavor = flavor;
        self
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn class(&self, id: ClassId) -> &ClassInfo {
        &self.classes[id]
    }

    pub fn callable(&self, id: CallableId) -> &Callable {
        &self.callables[id]
    }

    pub fn is_subclass(&self, mut sub: ClassId, sup: ClassId) -> bool {
        loop {
            if sub == sup {
                return true;
            }
            match self.classes[sub].superclass {
                Some(s) => sub = s,
                None => return false,
            }
        }
    }

    pub fn assignable(&self, from: Ty, to: Ty) -> bool {
        match (from, to) {
            (a, b) if a == b => a != Ty::Void,
            (Ty::Null, Ty::Class(_)) => true,
            (Ty::Class(a), Ty::Class(b)) => self.is_subclass(a, b),
            _ => false,
        }
    }

    pub fn ty_name(&self, ty: Ty) -> String {
        match ty {
            Ty::Int => "int".into(),
            Ty::Bool => "bool".into(),
            Ty::Str => "str".into(),
            Ty::Void => "void".into(),
            Ty::Null => "null".into(),
            Ty::Class(c) => self.classes[c].name.clone(),
        }
    }

    /// Whether a test script may name this class.
    pub fn class_visible_to_tests(&self, class: ClassId) -> bool {
        let info = &self.classes[class];
        info.vis == Visibility::Public && info.outer.is_none_or(|o| self.class_visible_to_tests(o))
    }

    /// Looks up an instance or static method by name and arity, walking up
    /// the superclass chain. Private methods are included.
    pub fn find_method(&self, class: ClassId, name: &str, arity: usize) -> Option<CallableId> {
        let mut cur = Some(class);
        while let Some(c) = cur {
            for &m in &self.classes[c].methods {
                let callable = &self.callables[m];
                if callable.name == name && callable.arity() == arity {
                    return Some(m);
                }
            }
            cur = self.classes[c].superclass;
        }
        None
    }

    pub fn has_method_named(&self, class: ClassId, name: &str) -> bool {
        let mut cur = Some(class);
        while let Some(c) = cur {
            if self.classes[c]
                .methods
                .iter()
                .any(|&m| self.callables[m].name == name)
            {
                return true;
            }
            cur = self.classes[c].superclass;
        }
        false
    }

    pub fn resolve_element(&self, element: &ElementId) -> Option<ElementRef> {
        let class = self.class_id(&element.class)?;
        let info = &self.classes[class];
        match element.kind {
            MemberKind::Field => {
                let slot = *info.field_index.get(&element.name)?;
                (info.fields[slot].declaring == class).then_some(ElementRef::Field(class, slot))
            }
            MemberKind::Ctor => info
                .ctors
                .get(&element.arity)
                .map(|&c| ElementRef::Callable(c)),
            MemberKind::Method => info
                .methods
                .iter()
                .copied()
                .find(|&m| {
                    self.callables[m].name == element.name
                        && self.callables[m].arity() == element.arity
                })
                .map(ElementRef::Callable),
        }
    }

    pub fn element_of(&self, callable: CallableId) -> ElementId {
        let c = &self.callables[callable];
        let class = &self.classes[c.class].name;
        match c.kind {
            CallableKind::Ctor => ElementId::ctor(class, c.arity()),
            _ => ElementId::method(class, &c.name, c.arity()),
        }
    }

    /// Statement ids covered by an element: its own body for methods and
    /// constructors, and every constructor of the class for a field.
    pub fn element_statements(&self, element: ElementRef) -> (Vec<u32>, Vec<u32>) {
        match element {
            ElementRef::Callable(c) => {
                let c = &self.callables[c];
                (c.stmt_ids.clone(), c.branch_ids.clone())
            }
            ElementRef::Field(class, _) => {
                let mut stmts = Vec::new();
                let mut branches = Vec::new();
                for &c in self.classes[class].ctors.values() {
                    stmts.extend_from_slice(&self.callables[c].stmt_ids);
                    branches.extend_from_slice(&self.callables[c].branch_ids);
                }
                (stmts, branches)
            }
        }
    }

    /// Every statement id declared anywhere in a class.
    pub fn class_statements(&self, class: ClassId) -> Vec<u32> {
        let info = &self.classes[class];
        info.ctors
            .values()
            .chain(info.methods.iter())
            .flat_map(|&c| self.callables[c].stmt_ids.iter().copied())
            .collect()
    }
}
