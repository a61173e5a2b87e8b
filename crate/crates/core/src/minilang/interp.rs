//! Deterministic tree-walking interpreter over checked images.
//!
//! A [`Session`] owns a heap, a step counter, a coverage trace and the
//! `nondet` stream. Sessions are single-threaded; any number of them may
//! share one image.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Builtin, Visibility};
use super::check::CheckedScript;
use super::coverage::CoverageTrace;
use super::image::*;
use super::snapshot::{SnapNode, SnapValue, Snapshot};

/// Nested call limit; deeper recursion ends the run with `ResourceLimit`.
pub const MAX_CALL_DEPTH: usize = 128;
/// Longest string a program may build.
pub const MAX_STR_LEN: usize = 1 << 16;
/// Largest heap a single session may grow.
pub const MAX_HEAP_OBJECTS: usize = 1 << 18;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExecStatus {
    Completed(Value),
    UserThrow(String),
    NullDeref,
    DivByZero,
    StepBudgetExceeded,
    /// Call depth, string length or heap size limit hit.
    ResourceLimit(String),
}

impl ExecStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, ExecStatus::Completed(_))
    }
}

#[derive(Clone, Debug)]
pub struct ExecResult {
    pub status: ExecStatus,
    pub steps_used: u64,
    pub coverage: CoverageTrace,
    pub object_log: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptStatus {
    Pass,
    AssertionFailed(String),
    /// A runtime error; never `Completed`.
    Error(ExecStatus),
}

#[derive(Clone, Debug)]
pub struct ScriptResult {
    pub status: ScriptStatus,
    pub steps_used: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RehydrateError {
    #[error("class {0} does not exist")]
    Class(String),
    #[error("field {0} does not exist or has a different type")]
    Field(String),
    #[error("snapshot references an undefined node")]
    Malformed,
}

impl RehydrateError {
    /// The missing class or field name.
    pub fn name(&self) -> &str {
        match self {
            RehydrateError::Class(n) | RehydrateError::Field(n) => n,
            RehydrateError::Malformed => "",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Obj {
    pub class: ClassId,
    pub fields: Vec<Value>,
}

#[derive(Debug)]
enum Fault {
    Status(ExecStatus),
    Assert(String),
}

impl From<ExecStatus> for Fault {
    fn from(s: ExecStatus) -> Self {
        Fault::Status(s)
    }
}

type Run<T> = Result<T, Fault>;

enum Flow {
    Normal,
    Return(Value),
}

#[derive(Clone, Copy)]
struct Frame {
    base: usize,
    this: Option<u32>,
}

pub struct Session<'a> {
    image: &'a ProgramImage,
    heap: Vec<Obj>,
    locals: Vec<Value>,
    run_seed: u64,
    nondet_index: u64,
    steps: u64,
    limit: u64,
    depth: usize,
    trace: CoverageTrace,
    call_counts: Vec<u64>,
    log_objects: bool,
    object_log: Vec<String>,
    capture_target: Option<CallableId>,
    captures: Vec<EntryCapture>,
}

/// An argument value recorded at entry to a captured callable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapturedArg {
    Int(i64),
    Bool(bool),
    Str(String),
    Null,
    Object(Snapshot),
}

/// Receiver and arguments seen at one entry to the capture target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCapture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<Snapshot>,
    pub args: Vec<CapturedArg>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Checks that a snapshot can be rehydrated on an image: every class and
/// field exists and every value fits its field's declared type.
pub fn validate_snapshot(image: &ProgramImage, snap: &Snapshot) -> Result<(), RehydrateError> {
    if !snap.is_well_formed() {
        return Err(RehydrateError::Malformed);
    }
    let mut class_of = HashMap::new();
    for (id, node) in &snap.nodes {
        let class = image
            .class_id(&node.class)
            .ok_or_else(|| RehydrateError::Class(node.class.clone()))?;
        class_of.insert(*id, class);
    }
    for (id, node) in &snap.nodes {
        let info = image.class(class_of[id]);
        for (name, value) in &node.fields {
            let slot = *info
                .field_index
                .get(name)
                .ok_or_else(|| RehydrateError::Field(name.clone()))?;
            let ty = info.fields[slot].ty;
            let fits = match (value, ty) {
                (SnapValue::Int(_), Ty::Int)
                | (SnapValue::Bool(_), Ty::Bool)
                | (SnapValue::Str(_), Ty::Str) => true,
                (SnapValue::Null, Ty::Class(_)) => true,
                (SnapValue::Ref(t), Ty::Class(c)) => image.is_subclass(class_of[t], c),
                _ => false,
            };
            if !fits {
                return Err(RehydrateError::Field(name.clone()));
            }
        }
    }
    Ok(())
}

impl<'a> Session<'a> {
    pub fn new(image: &'a ProgramImage, run_seed: u64) -> Self {
        Session {
            image,
            heap: Vec::new(),
            locals: Vec::new(),
            run_seed,
            nondet_index: 0,
            steps: 0,
            limit: u64::MAX,
            depth: 0,
            trace: CoverageTrace::new(),
            call_counts: vec![0; image.callables.len()],
            log_objects: false,
            object_log: Vec::new(),
            capture_target: None,
            captures: Vec::new(),
        }
    }

    /// Snapshot the receiver and arguments at every entry to `callable`.
    pub fn set_capture_target(&mut self, callable: Option<CallableId>) {
        self.capture_target = callable;
    }

    pub fn take_captures(&mut self) -> Vec<EntryCapture> {
        std::mem::take(&mut self.captures)
    }

    pub fn image(&self) -> &'a ProgramImage {
        self.image
    }

    /// Record structural fingerprints of call receivers and object arguments.
    pub fn set_object_logging(&mut self, on: bool) {
        self.log_objects = on;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn trace(&self) -> &CoverageTrace {
        &self.trace
    }

    pub fn take_object_log(&mut self) -> Vec<String> {
        std::mem::take(&mut self.object_log)
    }

    pub fn call_count(&self, callable: CallableId) -> u64 {
        self.call_counts[callable]
    }

    pub fn object(&self, r: u32) -> &Obj {
        &self.heap[r as usize]
    }

    pub fn heap_len(&self) -> usize {
        self.heap.len()
    }

    /// Invokes a callable with a fresh per-call budget. For constructors the
    /// receiver is ignored and a new object is allocated; the result is the
    /// object reference.
    pub fn invoke(
        &mut self,
        callable: CallableId,
        recv: Option<Value>,
        args: Vec<Value>,
        budget: u64,
    ) -> ExecResult {
        let saved_trace = std::mem::take(&mut self.trace);
        let saved_log = std::mem::take(&mut self.object_log);
        let start = self.steps;
        let status = self.call_with_limit(callable, recv, args, budget);
        let coverage = std::mem::replace(&mut self.trace, saved_trace);
        self.trace.merge(&coverage);
        let object_log = std::mem::replace(&mut self.object_log, saved_log);
        self.object_log.extend(object_log.iter().cloned());
        ExecResult {
            status,
            steps_used: self.steps - start,
            coverage,
            object_log,
        }
    }

    /// Invokes a public member by name as a test would. Returns `None` when
    /// no such member is visible from test scope.
    pub fn invoke_named(
        &mut self,
        target: &Value,
        class: Option<&str>,
        member: &str,
        args: Vec<Value>,
        budget: u64,
    ) -> Option<ExecResult> {
        let image = self.image;
        let (callable, recv) = match class {
            Some(name) => {
                let class = image.class_id(name)?;
                if !image.class_visible_to_tests(class) {
                    return None;
                }
                let c = if member == "init" {
                    *image.class(class).ctors.get(&args.len())?
                } else {
                    image.find_method(class, member, args.len())?
                };
                (c, None)
            }
            None => {
                let r = target.as_ref()?;
                let class = self.heap.get(r as usize)?.class;
                let m = image.find_method(class, member, args.len())?;
                if image.callable(m).kind == CallableKind::Static {
                    return None;
                }
                let m = match image.callable(m).vis {
                    Visibility::Public => image
                        .class(class)
                        .vtable
                        .get(&image.selectors[&(member.to_string(), args.len())])
                        .copied()
                        .unwrap_or(m),
                    Visibility::Private => return None,
                };
                (m, Some(target.clone()))
            }
        };
        if image.callable(callable).vis != Visibility::Public {
            return None;
        }
        Some(self.invoke(callable, recv, args, budget))
    }

    /// Calls a callable under a budget of `budget` further steps without
    /// separating its coverage from the session's running trace.
    pub fn call_with_limit(
        &mut self,
        callable: CallableId,
        recv: Option<Value>,
        args: Vec<Value>,
        budget: u64,
    ) -> ExecStatus {
        self.limit = self.steps.saturating_add(budget);
        let result = self.top_call(callable, recv, args);
        self.limit = u64::MAX;
        match result {
            Ok(v) => ExecStatus::Completed(v),
            Err(Fault::Status(s)) => s,
            Err(Fault::Assert(m)) => ExecStatus::UserThrow(m),
        }
    }

    fn top_call(
        &mut self,
        callable: CallableId,
        recv: Option<Value>,
        args: Vec<Value>,
    ) -> Run<Value> {
        let c = self.image.callable(callable);
        if c.is_ctor() {
            let obj = self.alloc(c.class)?;
            self.call(callable, Some(obj), args)?;
            Ok(Value::Ref(obj))
        } else if c.kind == CallableKind::Static {
            self.call(callable, None, args)
        } else {
            let r = match recv {
                Some(Value::Ref(r)) => r,
                _ => return Err(ExecStatus::NullDeref.into()),
            };
            self.call(callable, Some(r), args)
        }
    }

    /// Runs a checked test script from the session's current state.
    pub fn run_script(&mut self, script: &CheckedScript, budget: u64) -> ScriptResult {
        let start = self.steps;
        self.limit = start.saturating_add(budget);
        let base = self.locals.len();
        self.locals.resize(base + script.n_locals, Value::Null);
        let frame = Frame { base, this: None };
        let result = self.exec_block(&script.body, frame);
        self.locals.truncate(base);
        self.limit = u64::MAX;
        let status = match result {
            Ok(_) => ScriptStatus::Pass,
            Err(Fault::Assert(m)) => ScriptStatus::AssertionFailed(m),
            Err(Fault::Status(s)) => ScriptStatus::Error(s),
        };
        ScriptResult {
            status,
            steps_used: self.steps - start,
        }
    }

    fn alloc(&mut self, class: ClassId) -> Run<u32> {
        if self.heap.len() >= MAX_HEAP_OBJECTS {
            return Err(ExecStatus::ResourceLimit("heap size".into()).into());
        }
        let fields = self
            .image
            .class(class)
            .fields
            .iter()
            .map(|f| f.init.clone())
            .collect();
        self.heap.push(Obj { class, fields });
        Ok((self.heap.len() - 1) as u32)
    }

    fn charge(&mut self) -> Run<()> {
        if self.steps >= self.limit {
            return Err(ExecStatus::StepBudgetExceeded.into());
        }
        self.steps += 1;
        Ok(())
    }

    fn log_values(&mut self, this: Option<u32>, args: &[Value]) {
        if let Some(r) = this {
            let fp = self.snapshot(r).fingerprint();
            self.object_log.push(fp);
        }
        for a in args {
            if let Value::Ref(r) = a {
                let fp = self.snapshot(*r).fingerprint();
                self.object_log.push(fp);
            }
        }
    }

    fn call(&mut self, callable: CallableId, this: Option<u32>, args: Vec<Value>) -> Run<Value> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(ExecStatus::ResourceLimit("call depth".into()).into());
        }
        let image = self.image;
        let c = image.callable(callable);
        self.call_counts[callable] += 1;
        if self.log_objects {
            let recv = if c.is_ctor() { None } else { this };
            self.log_values(recv, &args);
        }
        if self.capture_target == Some(callable) {
            let receiver = if c.is_ctor() {
                None
            } else {
                this.map(|r| self.snapshot(r))
            };
            let args = args
                .iter()
                .map(|a| match a {
                    Value::Int(i) => CapturedArg::Int(*i),
                    Value::Bool(b) => CapturedArg::Bool(*b),
                    Value::Str(s) => CapturedArg::Str(s.to_string()),
                    Value::Null => CapturedArg::Null,
                    Value::Ref(r) => CapturedArg::Object(self.snapshot(*r)),
                })
                .collect();
            self.captures.push(EntryCapture { receiver, args });
        }
        let base = self.locals.len();
        self.locals.extend(args);
        self.locals
            .resize(base + c.n_locals.max(c.params.len()), Value::Null);
        self.depth += 1;
        let result = self.exec_block(&c.body, Frame { base, this });
        self.depth -= 1;
        self.locals.truncate(base);
        match result? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::default_for(c.ret)),
        }
    }

    fn exec_block(&mut self, stmts: &[IStmt], frame: Frame) -> Run<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.exec(s, frame)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn exec(&mut self, stmt: &IStmt, frame: Frame) -> Run<Flow> {
        self.charge()?;
        let covered = stmt.id != u32::MAX;
        if covered {
            self.trace.mark_stmt(stmt.id);
        }
        match &stmt.kind {
            IStmtKind::SetLocal(slot, e) => {
                let v = self.eval(e, frame)?;
                self.locals[frame.base + slot] = v;
            }
            IStmtKind::SetField(recv, slot, e) => {
                let r = self.eval_ref(recv, frame)?;
                let v = self.eval(e, frame)?;
                self.heap[r as usize].fields[*slot] = v;
            }
            IStmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = self.eval_bool(cond, frame)?;
                if covered {
                    self.trace.mark_arm(stmt.id, c);
                }
                let body = if c { then_body } else { else_body };
                return self.exec_block(body, frame);
            }
            IStmtKind::While { cond, body } => {
                let mut first = true;
                loop {
                    if !first {
                        // Each further condition evaluation is a step, so
                        // empty loops still exhaust the budget.
                        self.charge()?;
                    }
                    first = false;
                    let c = self.eval_bool(cond, frame)?;
                    if covered {
                        self.trace.mark_arm(stmt.id, c);
                    }
                    if !c {
                        break;
                    }
                    if let Flow::Return(v) = self.exec_block(body, frame)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            IStmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, frame)?,
                    None => Value::Null,
                };
                return Ok(Flow::Return(v));
            }
            IStmtKind::Throw(e) => {
                let msg = match self.eval(e, frame)? {
                    Value::Str(s) => s.to_string(),
                    other => format!("{other:?}"),
                };
                return Err(ExecStatus::UserThrow(msg).into());
            }
            IStmtKind::Eval(e) => {
                self.eval(e, frame)?;
            }
            IStmtKind::Assert(a) => self.assert(a, frame)?,
        }
        Ok(Flow::Normal)
    }

    fn assert(&mut self, a: &IAssert, frame: Frame) -> Run<()> {
        match a {
            IAssert::Eq(l, r) => {
                let lv = self.eval(l, frame)?;
                let rv = self.eval(r, frame)?;
                if lv != rv {
                    return Err(Fault::Assert(format!("expected {rv:?}, found {lv:?}")));
                }
            }
            IAssert::Null(e) => {
                let v = self.eval(e, frame)?;
                if v != Value::Null {
                    return Err(Fault::Assert("expected null".into()));
                }
            }
            IAssert::NotNull(e) => {
                if self.eval(e, frame)? == Value::Null {
                    return Err(Fault::Assert("expected non-null".into()));
                }
            }
        }
        Ok(())
    }

    fn eval_ref(&mut self, e: &IExpr, frame: Frame) -> Run<u32> {
        match self.eval(e, frame)? {
            Value::Ref(r) => Ok(r),
            _ => Err(ExecStatus::NullDeref.into()),
        }
    }

    fn eval_bool(&mut self, e: &IExpr, frame: Frame) -> Run<bool> {
        match self.eval(e, frame)? {
            Value::Bool(b) => Ok(b),
            other => unreachable!("checked condition produced {other:?}"),
        }
    }

    fn eval_int(&mut self, e: &IExpr, frame: Frame) -> Run<i64> {
        match self.eval(e, frame)? {
            Value::Int(n) => Ok(n),
            other => unreachable!("checked int expression produced {other:?}"),
        }
    }

    fn eval_str(&mut self, e: &IExpr, frame: Frame) -> Run<Arc<str>> {
        match self.eval(e, frame)? {
            Value::Str(s) => Ok(s),
            other => unreachable!("checked str expression produced {other:?}"),
        }
    }

    fn eval_args(&mut self, args: &[IExpr], frame: Frame) -> Run<Vec<Value>> {
        args.iter().map(|a| self.eval(a, frame)).collect()
    }

    fn make_str(&self, s: String) -> Run<Value> {
        if s.len() > MAX_STR_LEN {
            return Err(ExecStatus::ResourceLimit("string length".into()).into());
        }
        Ok(Value::Str(Arc::from(s)))
    }

    fn eval(&mut self, e: &IExpr, frame: Frame) -> Run<Value> {
        Ok(match e {
            IExpr::Const(v) => v.clone(),
            IExpr::Local(slot) => self.locals[frame.base + slot].clone(),
            IExpr::This => Value::Ref(frame.this.expect("checked `this`")),
            IExpr::Field(recv, slot) => {
                let r = self.eval_ref(recv, frame)?;
                self.heap[r as usize].fields[*slot].clone()
            }
            IExpr::Virtual {
                recv,
                selector,
                args,
            } => {
                let r = self.eval_ref(recv, frame)?;
                let args = self.eval_args(args, frame)?;
                let class = self.heap[r as usize].class;
                let callable = self.image.class(class).vtable[selector];
                self.call(callable, Some(r), args)?
            }
            IExpr::Direct {
                recv,
                callable,
                args,
            } => {
                let this = match recv {
                    Some(r) => Some(self.eval_ref(r, frame)?),
                    None => None,
                };
                let args = self.eval_args(args, frame)?;
                self.call(*callable, this, args)?
            }
            IExpr::New { class, ctor, args } => {
                let args = self.eval_args(args, frame)?;
                let obj = self.alloc(*class)?;
                self.call(*ctor, Some(obj), args)?;
                Value::Ref(obj)
            }
            IExpr::Neg(x) => Value::Int(self.eval_int(x, frame)?.wrapping_neg()),
            IExpr::Not(x) => Value::Bool(!self.eval_bool(x, frame)?),
            IExpr::Arith(op, a, b) => {
                let a = self.eval_int(a, frame)?;
                let b = self.eval_int(b, frame)?;
                Value::Int(match op {
                    ArithOp::Add => a.wrapping_add(b),
                    ArithOp::Sub => a.wrapping_sub(b),
                    ArithOp::Mul => a.wrapping_mul(b),
                    ArithOp::Div | ArithOp::Rem if b == 0 => {
                        return Err(ExecStatus::DivByZero.into())
                    }
                    ArithOp::Div => a.wrapping_div(b),
                    ArithOp::Rem => a.wrapping_rem(b),
                })
            }
            IExpr::Concat(a, b) => {
                let mut s = display(&self.eval(a, frame)?);
                s.push_str(&display(&self.eval(b, frame)?));
                self.make_str(s)?
            }
            IExpr::Cmp(op, a, b) => {
                let a = self.eval_int(a, frame)?;
                let b = self.eval_int(b, frame)?;
                Value::Bool(match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                })
            }
            IExpr::Equal { negate, lhs, rhs } => {
                let a = self.eval(lhs, frame)?;
                let b = self.eval(rhs, frame)?;
                Value::Bool((a == b) != *negate)
            }
            IExpr::And(a, b) => Value::Bool(self.eval_bool(a, frame)? && self.eval_bool(b, frame)?),
            IExpr::Or(a, b) => Value::Bool(self.eval_bool(a, frame)? || self.eval_bool(b, frame)?),
            IExpr::Builtin(b, args) => self.builtin(*b, args, frame)?,
            IExpr::Seed(n) => {
                let snap = &self.image.seed_table[*n as usize];
                match self.rehydrate(snap) {
                    Ok(r) => Value::Ref(r),
                    Err(e) => return Err(ExecStatus::UserThrow(e.to_string()).into()),
                }
            }
        })
    }

    fn builtin(&mut self, b: Builtin, args: &[IExpr], frame: Frame) -> Run<Value> {
        Ok(match b {
            Builtin::Len => Value::Int(self.eval_str(&args[0], frame)?.chars().count() as i64),
            Builtin::Trim => {
                let s = self.eval_str(&args[0], frame)?;
                Value::str(s.trim())
            }
            Builtin::Contains => {
                let s = self.eval_str(&args[0], frame)?;
                let sub = self.eval_str(&args[1], frame)?;
                Value::Bool(s.contains(&*sub))
            }
            Builtin::Replace => {
                let s = self.eval_str(&args[0], frame)?;
                let from = self.eval_str(&args[1], frame)?;
                let to = self.eval_str(&args[2], frame)?;
                if from.is_empty() {
                    Value::Str(s)
                } else {
                    self.make_str(s.replace(&*from, &to))?
                }
            }
            Builtin::Nondet => {
                let n = self.eval_int(&args[0], frame)?;
                Value::Int(self.nondet(n))
            }
        })
    }

    /// Pure function of (run seed, call index): the `index`-th draw of a
    /// session yields the same value for the same run seed.
    fn nondet(&mut self, n: i64) -> i64 {
        let index = self.nondet_index;
        self.nondet_index += 1;
        if n <= 0 {
            return 0;
        }
        let h = splitmix64(splitmix64(self.run_seed) ^ index);
        (h % n as u64) as i64
    }

    /// Captures the graph reachable from `root`; node ids follow BFS order.
    pub fn snapshot(&self, root: u32) -> Snapshot {
        let mut ids: HashMap<u32, u32> = HashMap::new();
        let mut queue = VecDeque::new();
        ids.insert(root, 0);
        queue.push_back(root);
        let mut nodes = std::collections::BTreeMap::new();
        while let Some(r) = queue.pop_front() {
            let obj = &self.heap[r as usize];
            let info = self.image.class(obj.class);
            let mut fields = IndexMap::new();
            for (slot, value) in info.fields.iter().zip(&obj.fields) {
                let sv = match value {
                    Value::Int(n) => SnapValue::Int(*n),
                    Value::Bool(b) => SnapValue::Bool(*b),
                    Value::Str(s) => SnapValue::Str(s.to_string()),
                    Value::Null => SnapValue::Null,
                    Value::Ref(t) => {
                        let next = ids.len() as u32;
                        let id = *ids.entry(*t).or_insert_with(|| {
                            queue.push_back(*t);
                            next
                        });
                        SnapValue::Ref(id)
                    }
                };
                fields.insert(slot.name.clone(), sv);
            }
            nodes.insert(
                ids[&r],
                SnapNode {
                    class: info.name.clone(),
                    fields,
                },
            );
        }
        Snapshot { root: 0, nodes }
    }

    /// Allocates a fresh copy of the snapshot graph without running any
    /// constructor. Fields absent from the snapshot keep their initializers.
    pub fn rehydrate(&mut self, snap: &Snapshot) -> Result<u32, RehydrateError> {
        validate_snapshot(self.image, snap)?;
        if self.heap.len() + snap.nodes.len() > MAX_HEAP_OBJECTS {
            return Err(RehydrateError::Malformed);
        }
        let mut map = HashMap::new();
        for (id, node) in &snap.nodes {
            let class = self.image.class_id(&node.class).expect("validated");
            let obj = self.alloc(class).map_err(|_| RehydrateError::Malformed)?;
            map.insert(*id, obj);
        }
        for (id, node) in &snap.nodes {
            let obj = map[id];
            let info = self.image.class(self.heap[obj as usize].class);
            for (name, value) in &node.fields {
                let slot = info.field_index[name];
                let v = match value {
                    SnapValue::Int(n) => Value::Int(*n),
                    SnapValue::Bool(b) => Value::Bool(*b),
                    SnapValue::Str(s) => Value::str(s),
                    SnapValue::Null => Value::Null,
                    SnapValue::Ref(t) => Value::Ref(map[t]),
                };
                self.heap[obj as usize].fields[slot] = v;
            }
        }
        Ok(map[&snap.root])
    }

    /// Structural equality: primitives by value, objects by class and
    /// field values, recursively, treating cycles coinductively.
    pub fn deep_equals(&self, a: &Value, b: &Value) -> bool {
        let mut assumed = HashSet::new();
        self.deep_eq(a, b, &mut assumed)
    }

    fn deep_eq(&self, a: &Value, b: &Value, assumed: &mut HashSet<(u32, u32)>) -> bool {
        match (a, b) {
            (Value::Ref(x), Value::Ref(y)) => {
                if x == y || !assumed.insert((*x, *y)) {
                    return true;
                }
                let (ox, oy) = (&self.heap[*x as usize], &self.heap[*y as usize]);
                if self.image.class(ox.class).name != self.image.class(oy.class).name {
                    return false;
                }
                ox.fields
                    .iter()
                    .zip(&oy.fields)
                    .all(|(fa, fb)| self.deep_eq(fa, fb, assumed))
            }
            _ => a == b,
        }
    }

    /// Overwrites a field; used by tests and fixtures that build graphs directly.
    pub fn set_field(&mut self, obj: u32, field: &str, value: Value) -> bool {
        let info = self.image.class(self.heap[obj as usize].class);
        match info.field_index.get(field) {
            Some(&slot) => {
                self.heap[obj as usize].fields[slot] = value;
                true
            }
            None => false,
        }
    }

    pub fn get_field(&self, obj: u32, field: &str) -> Option<&Value> {
        let o = &self.heap[obj as usize];
        let slot = *self.image.class(o.class).field_index.get(field)?;
        Some(&o.fields[slot])
    }

    /// Allocates an object with initializer values, bypassing constructors.
    pub fn alloc_raw(&mut self, class: ClassId) -> u32 {
        self.alloc(class).expect("heap limit")
    }
}

/// Text of a primitive for string concatenation.
pub fn display(v: &Value) -> String {
    match v {
        Value::Int(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => s.to_string(),
        Value::Null => "null".into(),
        Value::Ref(r) => format!("<obj {r}>"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::check::{check, check_script};
    use super::super::parser::{parse, parse_script};
    use super::*;

    fn image(src: &str) -> ProgramImage {
        check(&parse(src).unwrap()).unwrap()
    }

    fn run_method(img: &ProgramImage, class: &str, method: &str, seed: u64) -> ExecStatus {
        let mut s = Session::new(img, seed);
        let class_id = img.class_id(class).unwrap();
        let ctor = img.class(class_id).ctors[&0];
        let obj = s.invoke(ctor, None, vec![], 1000).status;
        let ExecStatus::Completed(obj) = obj else {
            panic!("ctor failed")
        };
        let m = img.find_method(class_id, method, 0).unwrap();
        s.invoke(m, Some(obj), vec![], 1000).status
    }

    #[test]
    fn arithmetic_and_throw() {
        let img =
            image("class A { pub int f() { return 1 + 2; } pub int g() { throw \"boom\"; } }");
        assert_eq!(
            run_method(&img, "A", "f", 0),
            ExecStatus::Completed(Value::Int(3))
        );
        assert_eq!(
            run_method(&img, "A", "g", 0),
            ExecStatus::UserThrow("boom".into())
        );
    }

    #[test]
    fn nondet_repeatable_per_seed() {
        let img = image("class A { pub int f() { return nondet(1000000); } }");
        let first = run_method(&img, "A", "f", 0);
        for _ in 0..100 {
            assert_eq!(run_method(&img, "A", "f", 0), first);
        }
        assert_ne!(run_method(&img, "A", "f", 1), first);
    }

    #[test]
    fn runtime_faults() {
        let img = image(
            "class A { pub A next; pub int d(int x) { return 1 / x; } pub int n() { return this.next.d(1); } pub int loop() { while (true) { } return 0; } pub int rec() { return this.rec(); } }",
        );
        let mut s = Session::new(&img, 0);
        let a = img.class_id("A").unwrap();
        let obj = match s.invoke(img.class(a).ctors[&0], None, vec![], 10).status {
            ExecStatus::Completed(v) => v,
            other => panic!("{other:?}"),
        };
        let call = |s: &mut Session, name: &str, args: Vec<Value>| {
            let m = img.find_method(a, name, args.len()).unwrap();
            s.invoke(m, Some(obj.clone()), args, 500)
        };
        assert_eq!(
            call(&mut s, "d", vec![Value::Int(0)]).status,
            ExecStatus::DivByZero
        );
        assert_eq!(call(&mut s, "n", vec![]).status, ExecStatus::NullDeref);
        let r = call(&mut s, "loop", vec![]);
        assert_eq!(r.status, ExecStatus::StepBudgetExceeded);
        assert_eq!(r.steps_used, 500);
        assert!(matches!(
            call(&mut s, "rec", vec![]).status,
            ExecStatus::ResourceLimit(_)
        ));
    }

    #[test]
    fn dynamic_dispatch_and_defaults() {
        let img = image(
            "class A { pub int f() { return 1; } pub int g() { return this.f(); } } class B extends A { pub str s; pub int f() { return 2 + len(this.s); } }",
        );
        let mut s = Session::new(&img, 0);
        let script = parse_script("let b = new B(); assertEq(b.g(), 2); let a: A = b; assertEq(a.f(), 2); assertEq(b.s, \"\");").unwrap();
        let checked = check_script(&img, &script).unwrap();
        assert_eq!(s.run_script(&checked, 100).status, ScriptStatus::Pass);
    }

    #[test]
    fn string_builtins() {
        let img = image("class A { }");
        let script = parse_script(
            "assertEq(replace(\"a  b  c\", \"  \", \" \"), \"a b c\"); assertEq(trim(\"  x \"), \"x\"); assertEq(contains(\"abc\", \"bc\"), true); assertEq(\"n=\" + 3, \"n=3\");",
        )
        .unwrap();
        let checked = check_script(&img, &script).unwrap();
        assert_eq!(
            Session::new(&img, 0).run_script(&checked, 100).status,
            ScriptStatus::Pass
        );
    }

    #[test]
    fn assertion_failure_is_not_an_error() {
        let img = image("class A { pub int x = 4; }");
        let checked = check_script(
            &img,
            &parse_script("let a = new A(); assertEq(a.x, 5);").unwrap(),
        )
        .unwrap();
        assert!(matches!(
            Session::new(&img, 0).run_script(&checked, 100).status,
            ScriptStatus::AssertionFailed(_)
        ));
    }

    #[test]
    fn snapshot_diamond_and_cycle() {
        let img = image("class N { pub int v; pub N a; pub N b; }");
        let n = img.class_id("N").unwrap();
        let mut s = Session::new(&img, 0);
        let root = s.alloc_raw(n);
        let child = s.alloc_raw(n);
        s.set_field(root, "a", Value::Ref(child));
        s.set_field(root, "b", Value::Ref(child));
        s.set_field(child, "a", Value::Ref(child));
        let snap = s.snapshot(root);
        assert_eq!(snap.nodes.len(), 2);
        let back = s.rehydrate(&snap).unwrap();
        assert_ne!(back, root);
        assert!(super::super::snapshot::snapshots_isomorphic(
            &snap,
            &s.snapshot(back)
        ));
        assert!(s.deep_equals(&Value::Ref(root), &Value::Ref(back)));
    }

    #[test]
    fn rehydrate_rejects_missing_field() {
        let merge = image("class Conn { pub int size; pub int retries; }");
        let base = image("class Conn { pub int size; }");
        let mut s = Session::new(&merge, 0);
        let obj = s.alloc_raw(0);
        s.set_field(obj, "retries", Value::Int(2));
        let snap = s.snapshot(obj);
        let mut b = Session::new(&base, 0);
        assert_eq!(
            b.rehydrate(&snap),
            Err(RehydrateError::Field("retries".into()))
        );
    }

    #[test]
    fn rehydrate_skips_constructors() {
        let img = image("class A { pub int x; pub init() { this.x = 99; } }");
        let mut s = Session::new(&img, 0);
        let a = s.alloc_raw(0);
        s.set_field(a, "x", Value::Int(1));
        let snap = s.snapshot(a);
        let r = s.rehydrate(&snap).unwrap();
        assert_eq!(s.get_field(r, "x"), Some(&Value::Int(1)));
        assert_eq!(s.call_count(img.class(0).ctors[&0]), 0);
    }
}
