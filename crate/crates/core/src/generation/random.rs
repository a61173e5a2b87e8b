//! Feedback-directed random generation, plain and target-focused.
//!
//! Both variants grow a pool of component sequences. Each iteration picks
//! an operation, fills its inputs from pooled values or the primitive
//! pools, executes the extended sequence from scratch and keeps it when it
//! runs cleanly and either reaches a new statement or yields a value not
//! structurally equal to any value seen before.
//!
//! The focused variant also appends a call to the target once a new
//! sequence has gone `targetCallInterval` statements without one,
//! and every `creationInterval` iterations draws only from operations that
//! create one of the target's required types, cycling through them.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::minilang::image::CallableKind;
use crate::minilang::{check_script, CoverageTrace, ElementId, ProgramImage, Session, Ty, Value};

use super::ops::{random_literal, OpTable};
use super::sequence::{capture_with, Input, ObserverCache, SeqStmt, Sequence, TestCase};
use super::{
    finalize, require_callable, rng_for, GenError, GenMetrics, GeneratorConfig, GeneratorKind,
    TestSuite, EXEC_STEP_CAP,
};

/// Iterations in a row that may fail to build a sequence before giving up.
const MAX_STALLS: usize = 10_000;

struct Pool {
    comps: Vec<Sequence>,
    /// Non-null values by static type: (component, statement).
    by_type: HashMap<Ty, Vec<(usize, usize)>>,
}

impl Pool {
    fn add(&mut self, seq: Sequence, values: &[Option<Value>]) {
        let c = self.comps.len();
        for (i, v) in values.iter().enumerate() {
            if let (Some(ty), Some(v)) = (seq.value_type(i), v) {
                if *v != Value::Null {
                    self.by_type.entry(ty).or_default().push((c, i));
                }
            }
        }
        self.comps.push(seq);
    }

    fn pick(&self, rng: &mut ChaCha8Rng, table: &OpTable, ty: Ty) -> Option<(usize, usize)> {
        let Ty::Class(c) = ty else { return None };
        let lists: Vec<&Vec<(usize, usize)>> = table.subclasses[c]
            .iter()
            .filter_map(|s| self.by_type.get(&Ty::Class(*s)))
            .collect();
        let total: usize = lists.iter().map(|l| l.len()).sum();
        if total == 0 {
            return None;
        }
        let mut k = rng.gen_range(0..total);
        for l in lists {
            if k < l.len() {
                return Some(l[k]);
            }
            k -= l.len();
        }
        None
    }
}

struct Engine<'a> {
    image: &'a ProgramImage,
    cfg: &'a GeneratorConfig,
    table: OpTable,
    rng: ChaCha8Rng,
    pool: Pool,
    target: Option<usize>,
    steps: u64,
    seen_cov: CoverageTrace,
    seen_values: HashSet<String>,
    kept: Vec<TestCase>,
    cache: ObserverCache,
}

fn value_key(session: &crate::minilang::Session, v: &Value) -> String {
    match v {
        Value::Ref(r) => session.snapshot(*r).fingerprint(),
        other => format!("{other:?}"),
    }
}

impl<'a> Engine<'a> {
    fn new(
        image: &'a ProgramImage,
        target: &ElementId,
        cfg: &'a GeneratorConfig,
        kind: GeneratorKind,
        target_callable: Option<usize>,
    ) -> Result<Self, GenError> {
        cfg.validate()?;
        let table = OpTable::new(image, &target.class, target_callable)?;
        let rng = rng_for(
            cfg.seed,
            &[kind.name(), image.revision.as_str(), &target.to_string()],
        );
        Ok(Engine {
            image,
            cfg,
            table,
            rng,
            pool: Pool {
                comps: Vec::new(),
                by_type: HashMap::new(),
            },
            target: target_callable,
            steps: 0,
            seen_cov: CoverageTrace::new(),
            seen_values: HashSet::new(),
            kept: Vec::new(),
            cache: ObserverCache::default(),
        })
    }

    /// Builds `base ++ input components ++ op(inputs)`, preferring values
    /// already in `base` for reference inputs.
    fn build(&mut self, op_idx: usize, base: Option<Sequence>) -> Option<Sequence> {
        let op = self.table.ops[op_idx].clone();
        let prefer_base = base.is_some();
        let mut seq = base.unwrap_or_default();
        let mut offsets: HashMap<usize, usize> = HashMap::new();
        let mut inputs = Vec::new();
        for (k, ty) in op.input_types().into_iter().enumerate() {
            let receiver = k == 0 && op.receiver.is_some();
            let Ty::Class(class) = ty else {
                inputs.push(Input::Lit(random_literal(&mut self.rng, ty)));
                continue;
            };
            if !receiver && self.rng.gen_bool(self.cfg.null_probability) {
                inputs.push(Input::Lit(random_literal(&mut self.rng, ty)));
                continue;
            }
            if prefer_base {
                let local: Vec<usize> = (0..seq.len())
                    .filter(|&i| matches!(seq.value_type(i), Some(Ty::Class(c)) if self.image.is_subclass(c, class)))
                    .collect();
                if let Some(&i) = local.choose(&mut self.rng) {
                    inputs.push(Input::Var(i));
                    continue;
                }
            }
            match self.pool.pick(&mut self.rng, &self.table, ty) {
                Some((comp, stmt)) => {
                    let offset = match offsets.get(&comp) {
                        Some(&o) => o,
                        None => {
                            let o = seq.append(&self.pool.comps[comp]);
                            offsets.insert(comp, o);
                            o
                        }
                    };
                    inputs.push(Input::Var(offset + stmt));
                }
                None if receiver => return None,
                None => inputs.push(Input::Lit(random_literal(&mut self.rng, ty))),
            }
        }
        if seq.len() >= self.cfg.max_sequence_len {
            return None;
        }
        seq.stmts.push(SeqStmt { op, inputs });
        Some(seq)
    }

    /// Executes a candidate, keeping it as a component and test when it
    /// runs cleanly and adds coverage or a new value.
    /// Statements from index `fresh` on are the new ones. A `forced`
    /// sequence is kept whenever it runs cleanly.
    fn try_sequence(&mut self, seq: Sequence, fresh: usize, forced: bool) -> bool {
        let limit = EXEC_STEP_CAP.min(self.cfg.step_budget - self.steps);
        let mut novel = false;
        let mut values = Vec::new();
        let seen_cov = &mut self.seen_cov;
        let seen_values = &mut self.seen_values;
        let result = capture_with(
            self.image,
            &seq,
            limit,
            &mut self.cache,
            self.target,
            &mut |session, exec| {
                let mut keys = Vec::new();
                for i in fresh..seq.len() {
                    if let Some(Some(v)) = exec.values.get(i) {
                        keys.push(value_key(session, v));
                    }
                    for input in &seq.stmts[i].inputs {
                        if let Input::Var(j) = input {
                            if let Some(Some(v @ Value::Ref(_))) = exec.values.get(*j) {
                                keys.push(value_key(session, v));
                            }
                        }
                    }
                }
                let new_cov = session.trace().has_new_stmts(seen_cov);
                let mut new_value = false;
                for k in keys {
                    new_value |= seen_values.insert(k);
                }
                if new_cov || new_value || forced {
                    seen_cov.merge(session.trace());
                    novel = true;
                    values = exec.values.clone();
                }
            },
        );
        match result {
            Ok(c) => {
                self.steps += c.steps;
                if novel {
                    self.pool.add(seq, &values);
                    self.kept.push(c.test);
                }
                novel
            }
            Err(f) => {
                self.steps += f.steps;
                false
            }
        }
    }

    /// Newest candidates first. With `diversify`, the suite is instead
    /// picked greedily by newly handled objects plus target calls.
    fn finish(
        self,
        kind: GeneratorKind,
        target: &ElementId,
        diversify: bool,
    ) -> (TestSuite, GenMetrics) {
        let mut candidates: Vec<TestCase> = self.kept.into_iter().rev().collect();
        if diversify {
            candidates = pick_diverse(self.image, candidates, self.target, self.cfg.max_suite_size);
        }
        finalize(self.image, candidates, kind, self.cfg, target, self.steps)
    }
}

/// Greedy selection of up to `cap` candidates scoring objects not handled
/// by earlier picks plus target calls; ties go to fresh objects, then to
/// recency. Unpicked candidates follow in their original order.
fn pick_diverse(
    image: &ProgramImage,
    candidates: Vec<TestCase>,
    target: Option<usize>,
    cap: usize,
) -> Vec<TestCase> {
    let profiles: Vec<(HashSet<String>, u64)> = candidates
        .iter()
        .map(|t| {
            let Ok(script) = check_script(image, &t.script()) else {
                return (HashSet::new(), 0);
            };
            let mut session = Session::new(image, 0);
            session.set_object_logging(true);
            session.run_script(&script, 2 * EXEC_STEP_CAP);
            let calls = target.map_or(0, |c| session.call_count(c));
            (session.take_object_log().into_iter().collect(), calls)
        })
        .collect();
    let mut seen: HashSet<&String> = HashSet::new();
    let mut taken = vec![false; candidates.len()];
    let mut order = Vec::new();
    while order.len() < cap {
        let best = (0..candidates.len())
            .filter(|&i| !taken[i])
            .max_by_key(|&i| {
                let fresh = profiles[i].0.iter().filter(|o| !seen.contains(o)).count() as u64;
                (fresh + profiles[i].1, fresh, std::cmp::Reverse(i))
            });
        let Some(i) = best else { break };
        taken[i] = true;
        seen.extend(profiles[i].0.iter());
        order.push(i);
    }
    order.extend((0..candidates.len()).filter(|&i| !taken[i]));
    let mut slots: Vec<Option<TestCase>> = candidates.into_iter().map(Some).collect();
    order.into_iter().filter_map(|i| slots[i].take()).collect()
}

pub fn generate_randoop(
    image: &ProgramImage,
    target: &ElementId,
    cfg: &GeneratorConfig,
) -> Result<(TestSuite, GenMetrics), GenError> {
    let callable = match image.resolve_element(target) {
        Some(crate::minilang::image::ElementRef::Callable(c)) => Some(c),
        Some(_) => None,
        None => return Err(GenError::UnknownTarget(target.to_string())),
    };
    let mut e = Engine::new(image, target, cfg, GeneratorKind::Randoop, callable)?;
    let mut stalls = 0;
    while e.steps < cfg.step_budget && stalls < MAX_STALLS && !e.table.ops.is_empty() {
        let op = e.rng.gen_range(0..e.table.ops.len());
        match e.build(op, None) {
            Some(seq) => {
                stalls = 0;
                let fresh = seq.len() - 1;
                e.try_sequence(seq, fresh, false);
            }
            None => stalls += 1,
        }
    }
    Ok(e.finish(GeneratorKind::Randoop, target, false))
}

/// Reference types a call to the target needs: its receiver class for
/// instance methods, then its reference parameter types.
fn required_types(image: &ProgramImage, callable: usize) -> Vec<usize> {
    let c = image.callable(callable);
    let mut out = Vec::new();
    if c.kind == CallableKind::Method {
        out.push(c.class);
    }
    for p in &c.params {
        if let Ty::Class(k) = p {
            if !out.contains(k) {
                out.push(*k);
            }
        }
    }
    out
}

fn since_last_target(seq: &Sequence, target_op: &SeqStmt) -> usize {
    seq.stmts
        .iter()
        .rev()
        .take_while(|s| s.op != target_op.op)
        .count()
}

pub fn generate_randoop_clean(
    image: &ProgramImage,
    target: &ElementId,
    cfg: &GeneratorConfig,
) -> Result<(TestSuite, GenMetrics), GenError> {
    let callable = require_callable(image, target)?;
    let mut e = Engine::new(
        image,
        target,
        cfg,
        GeneratorKind::RandoopClean,
        Some(callable),
    )?;
    let required: Vec<usize> = required_types(image, callable)
        .into_iter()
        .filter(|&t| !e.table.producers_of(t).is_empty())
        .collect();
    let target_stmt = e.table.target_op.map(|i| SeqStmt {
        op: e.table.ops[i].clone(),
        inputs: Vec::new(),
    });
    let mut iteration = 0usize;
    let mut cycle = 0usize;
    let mut stalls = 0;
    while e.steps < cfg.step_budget && stalls < MAX_STALLS && !e.table.ops.is_empty() {
        iteration += 1;
        let op = if iteration.is_multiple_of(cfg.creation_interval) && !required.is_empty() {
            let ty = required[cycle % required.len()];
            cycle += 1;
            *e.table
                .producers_of(ty)
                .choose(&mut e.rng)
                .expect("producer")
        } else {
            e.rng.gen_range(0..e.table.ops.len())
        };
        let Some(seq) = e.build(op, None) else {
            stalls += 1;
            continue;
        };
        stalls = 0;
        let fresh = seq.len() - 1;
        let due = target_stmt
            .as_ref()
            .is_some_and(|t| since_last_target(&seq, t) >= cfg.target_call_interval.min(seq.len()));
        if e.try_sequence(seq.clone(), fresh, false) && due && e.steps < cfg.step_budget {
            if let Some(extended) = e.build(e.table.target_op.expect("target op"), Some(seq)) {
                let fresh = extended.len() - 1;
                e.try_sequence(extended, fresh, true);
            }
        }
    }
    Ok(e.finish(GeneratorKind::RandoopClean, target, true))
}
