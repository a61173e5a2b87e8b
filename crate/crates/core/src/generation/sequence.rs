//! Call sequences, their execution, regression assertions and rendering.

use std::collections::HashMap;
use std::sync::Arc;

use crate::minilang::ast::{
    Assertion, Expr, ExprKind, Literal, Stmt, StmtKind, TestScript, Visibility,
};
use crate::minilang::image::{CallableKind, ClassId};
use crate::minilang::{print_script, ExecStatus, ProgramImage, Revision, Session, Ty, Value};
use crate::transforms::SEED_CLASS;

use super::ops::{OpKind, Operation};
use super::GenError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Input {
    /// Output of an earlier statement.
    Var(usize),
    /// Inline literal, including `null`.
    Lit(Literal),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqStmt {
    pub op: Arc<Operation>,
    /// Receiver first for instance methods.
    pub inputs: Vec<Input>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sequence {
    pub stmts: Vec<SeqStmt>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.stmts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stmts.is_empty()
    }

    /// Static type of statement `i`'s output, if it has one.
    pub fn value_type(&self, i: usize) -> Option<Ty> {
        let ty = self.stmts[i].op.result;
        (ty != Ty::Void).then_some(ty)
    }

    /// Appends `other`, shifting its references; returns the offset used.
    pub fn append(&mut self, other: &Sequence) -> usize {
        let offset = self.stmts.len();
        for s in &other.stmts {
            let inputs = s
                .inputs
                .iter()
                .map(|i| match i {
                    Input::Var(j) => Input::Var(j + offset),
                    lit => lit.clone(),
                })
                .collect();
            self.stmts.push(SeqStmt {
                op: s.op.clone(),
                inputs,
            });
        }
        offset
    }

    /// References point backwards at statements that produce a value.
    pub fn is_well_formed(&self) -> bool {
        self.stmts.iter().enumerate().all(|(i, s)| {
            s.inputs.len() == s.op.input_types().len()
                && s.inputs.iter().all(|inp| match inp {
                    Input::Var(j) => *j < i && self.value_type(*j).is_some(),
                    Input::Lit(_) => true,
                })
        })
    }

    /// Calls to the given callable made directly by the sequence.
    pub fn direct_calls(&self, callable: usize) -> usize {
        self.stmts
            .iter()
            .filter(|s| s.op.callable == Some(callable))
            .count()
    }
}

pub fn var_name(i: usize) -> String {
    format!("v{i}")
}

fn input_expr(input: &Input) -> Expr {
    match input {
        Input::Var(j) => Expr::var(var_name(*j)),
        Input::Lit(l) => Expr::lit(l.clone()),
    }
}

fn stmt_ast(i: usize, s: &SeqStmt) -> Stmt {
    let args: Vec<Expr> = s.inputs.iter().map(input_expr).collect();
    let expr = match &s.op.kind {
        OpKind::Literal(l) => Expr::lit(l.clone()),
        OpKind::Ctor { class } => Expr::new(ExprKind::New {
            class: class.clone(),
            args,
        }),
        OpKind::Method {
            name,
            receiver: true,
            ..
        } => {
            let mut args = args.into_iter();
            let recv = args.next().expect("receiver input");
            Expr::new(ExprKind::Call {
                recv: Box::new(recv),
                method: name.clone(),
                args: args.collect(),
            })
        }
        OpKind::Method {
            class,
            name,
            receiver: false,
        } => Expr::new(ExprKind::Call {
            recv: Box::new(Expr::var(class.clone())),
            method: name.clone(),
            args,
        }),
        OpKind::Seed { name } => Expr::new(ExprKind::Call {
            recv: Box::new(Expr::var(SEED_CLASS)),
            method: name.clone(),
            args,
        }),
    };
    if s.op.result == Ty::Void {
        Stmt::new(StmtKind::Expr(expr))
    } else {
        Stmt::new(StmtKind::Let {
            name: var_name(i),
            ty: None,
            init: expr,
        })
    }
}

/// Outcome of running a sequence from a fresh state.
#[derive(Clone, Debug)]
pub struct Execution {
    /// Output of each completed statement (`None` for void calls).
    pub values: Vec<Option<Value>>,
    /// Fault raised by statement `values.len()`, if any.
    pub error: Option<ExecStatus>,
    pub steps: u64,
}

impl Execution {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Runs the statements of `seq` in `session` using at most `limit` steps.
pub fn execute(session: &mut Session, seq: &Sequence, limit: u64) -> Execution {
    let image = session.image();
    let start = session.steps();
    let mut values: Vec<Option<Value>> = Vec::with_capacity(seq.len());
    let mut error = None;
    for s in &seq.stmts {
        let args: Vec<Value> = s
            .inputs
            .iter()
            .map(|i| match i {
                Input::Var(j) => values[*j].clone().unwrap_or(Value::Null),
                Input::Lit(l) => Value::from_literal(l),
            })
            .collect();
        let remaining = limit.saturating_sub(session.steps() - start);
        let status = match &s.op.kind {
            OpKind::Literal(l) => ExecStatus::Completed(Value::from_literal(l)),
            OpKind::Ctor { .. }
            | OpKind::Seed { .. }
            | OpKind::Method {
                receiver: false, ..
            } => {
                session.call_with_limit(s.op.callable.expect("callable op"), None, args, remaining)
            }
            OpKind::Method { receiver: true, .. } => {
                let mut args = args;
                let recv = args.remove(0);
                match recv {
                    Value::Ref(r) => {
                        let class = session.object(r).class;
                        let callable =
                            s.op.selector
                                .and_then(|sel| image.class(class).vtable.get(&sel).copied())
                                .or(s.op.callable)
                                .expect("method op");
                        session.call_with_limit(callable, Some(recv), args, remaining)
                    }
                    _ => ExecStatus::NullDeref,
                }
            }
        };
        match status {
            ExecStatus::Completed(v) => values.push((s.op.result != Ty::Void).then_some(v)),
            other => {
                error = Some(other);
                break;
            }
        }
    }
    Execution {
        values,
        error,
        steps: session.steps() - start,
    }
}

/// What an assertion inspects on a produced value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Observer {
    Value,
    Field(String),
    Method(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expect {
    Eq(Literal),
    Null,
    NotNull,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub var: usize,
    pub observer: Observer,
    pub expect: Expect,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestCase {
    pub prefix: Sequence,
    pub checks: Vec<Check>,
    pub generated_on: Revision,
}

impl TestCase {
    pub fn script(&self) -> TestScript {
        let mut stmts: Vec<Stmt> = self
            .prefix
            .stmts
            .iter()
            .enumerate()
            .map(|(i, s)| stmt_ast(i, s))
            .collect();
        for c in &self.checks {
            let v = Expr::var(var_name(c.var));
            let subject = match &c.observer {
                Observer::Value => v,
                Observer::Field(f) => Expr::new(ExprKind::Field(Box::new(v), f.clone())),
                Observer::Method(m) => Expr::new(ExprKind::Call {
                    recv: Box::new(v),
                    method: m.clone(),
                    args: Vec::new(),
                }),
            };
            let a = match &c.expect {
                Expect::Eq(l) => Assertion::Eq(subject, Expr::lit(l.clone())),
                Expect::Null => Assertion::Null(subject),
                Expect::NotNull => Assertion::NotNull(subject),
            };
            stmts.push(Stmt::new(StmtKind::Assert(a)));
        }
        TestScript { stmts }
    }
}

/// Deterministic `.mlt` text of a test.
pub fn render_test(test: &TestCase) -> String {
    print_script(&test.script())
}

/// Public primitive fields (layout order) and public zero-arity
/// primitive-returning instance methods (declaration order, superclass
/// first) of each class, as seen through its static type.
type ObserverList = Arc<Vec<(Observer, Option<u32>)>>;

#[derive(Default)]
pub struct ObserverCache {
    by_class: HashMap<ClassId, ObserverList>,
}

impl ObserverCache {
    pub fn get(
        &mut self,
        image: &ProgramImage,
        class: ClassId,
    ) -> Arc<Vec<(Observer, Option<u32>)>> {
        self.by_class
            .entry(class)
            .or_insert_with(|| {
                let info = image.class(class);
                let mut out: Vec<(Observer, Option<u32>)> = info
                    .fields
                    .iter()
                    .filter(|f| f.vis == Visibility::Public && f.ty.is_primitive())
                    .map(|f| (Observer::Field(f.name.clone()), None))
                    .collect();
                let mut chain = Vec::new();
                let mut cur = Some(class);
                while let Some(c) = cur {
                    chain.push(c);
                    cur = image.class(c).superclass;
                }
                let mut seen = std::collections::HashSet::new();
                for &c in chain.iter().rev() {
                    for &m in &image.class(c).methods {
                        let callable = image.callable(m);
                        if callable.vis == Visibility::Public
                            && callable.kind == CallableKind::Method
                            && callable.params.is_empty()
                            && callable.ret.is_primitive()
                            && seen.insert(callable.name.clone())
                        {
                            // A subclass may hide the method behind a private one.
                            let visible = image
                                .find_method(class, &callable.name, 0)
                                .is_some_and(|f| image.callable(f).vis == Visibility::Public);
                            if visible {
                                let sel = image.selectors[&(callable.name.clone(), 0)];
                                out.push((Observer::Method(callable.name.clone()), Some(sel)));
                            }
                        }
                    }
                }
                Arc::new(out)
            })
            .clone()
    }
}

/// A captured test with the cost of capturing it.
pub struct Captured {
    pub test: TestCase,
    pub steps: u64,
    /// Calls to the target callable during prefix and observers.
    pub target_calls: u64,
}

/// Why a capture failed, and what it cost.
#[derive(Clone, Debug)]
pub struct CaptureFailure {
    pub status: ExecStatus,
    /// Statements that completed before the fault; `None` when the prefix
    /// ran but the observers exhausted the budget.
    pub completed: Option<usize>,
    pub steps: u64,
}

/// Executes `seq` from a fresh run-seed-0 session and records every
/// produced value: literals for primitives, `assertNull` for null, and for
/// objects `assertNotNull` plus each observer. Observers that fault are
/// dropped and the capture restarts without them. `on_prefix` sees the
/// session right after the prefix ran on the first attempt.
pub fn capture_with(
    image: &ProgramImage,
    seq: &Sequence,
    limit: u64,
    cache: &mut ObserverCache,
    target: Option<usize>,
    on_prefix: &mut dyn FnMut(&Session, &Execution),
) -> Result<Captured, CaptureFailure> {
    let mut excluded: Vec<(usize, Observer)> = Vec::new();
    let mut spent = 0u64;
    loop {
        let mut session = Session::new(image, 0);
        let exec = execute(&mut session, seq, limit.saturating_sub(spent));
        if let Some(status) = exec.error {
            return Err(CaptureFailure {
                status,
                completed: Some(exec.values.len()),
                steps: spent + exec.steps,
            });
        }
        if excluded.is_empty() {
            on_prefix(&session, &exec);
        }
        let mut checks = Vec::new();
        let mut failed = None;
        'values: for (i, v) in exec.values.iter().enumerate() {
            let Some(v) = v else { continue };
            match v {
                Value::Null => checks.push(Check {
                    var: i,
                    observer: Observer::Value,
                    expect: Expect::Null,
                }),
                Value::Ref(r) => {
                    checks.push(Check {
                        var: i,
                        observer: Observer::Value,
                        expect: Expect::NotNull,
                    });
                    let Some(Ty::Class(static_class)) = seq.value_type(i) else {
                        continue;
                    };
                    for (obs, sel) in cache.get(image, static_class).iter() {
                        if excluded.iter().any(|(j, o)| *j == i && o == obs) {
                            continue;
                        }
                        let observed = match obs {
                            Observer::Field(f) => session.get_field(*r, f).cloned(),
                            Observer::Method(_) => {
                                let class = session.object(*r).class;
                                let callable =
                                    image.class(class).vtable[&sel.expect("method selector")];
                                let remaining = limit.saturating_sub(spent + session.steps());
                                match session.call_with_limit(
                                    callable,
                                    Some(Value::Ref(*r)),
                                    Vec::new(),
                                    remaining,
                                ) {
                                    ExecStatus::Completed(v) => Some(v),
                                    _ => None,
                                }
                            }
                            Observer::Value => None,
                        };
                        match observed.as_ref().and_then(Value::to_literal) {
                            Some(l) => checks.push(Check {
                                var: i,
                                observer: obs.clone(),
                                expect: Expect::Eq(l),
                            }),
                            None => {
                                failed = Some((i, obs.clone()));
                                break 'values;
                            }
                        }
                    }
                }
                prim => checks.push(Check {
                    var: i,
                    observer: Observer::Value,
                    expect: Expect::Eq(prim.to_literal().expect("primitive literal")),
                }),
            }
        }
        spent += session.steps();
        match failed {
            Some(f) if spent < limit => excluded.push(f),
            Some(_) => {
                return Err(CaptureFailure {
                    status: ExecStatus::StepBudgetExceeded,
                    completed: None,
                    steps: spent,
                })
            }
            None => {
                return Ok(Captured {
                    test: TestCase {
                        prefix: seq.clone(),
                        checks,
                        generated_on: image.revision,
                    },
                    steps: spent,
                    target_calls: target.map(|t| session.call_count(t)).unwrap_or(0),
                })
            }
        }
    }
}

/// Regression assertions for `seq` on `image`.
pub fn capture_assertions(image: &ProgramImage, seq: &Sequence) -> Result<TestCase, GenError> {
    capture_with(
        image,
        seq,
        super::EXEC_STEP_CAP,
        &mut ObserverCache::default(),
        None,
        &mut |_, _| {},
    )
    .map(|c| c.test)
    .map_err(|f| GenError::SequenceErrors(f.status))
}
