//! Coverage-guided genetic search, and its differential variant that also
//! rewards sequences whose observations differ on a base image.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::minilang::ast::Literal;
use crate::minilang::{check_script, ElementId, ProgramImage, ScriptStatus, Session, Ty};

use super::ops::{random_literal, OpTable, INT_POOL, STR_POOL};
use super::sequence::{
    capture_with, render_test, Input, ObserverCache, SeqStmt, Sequence, TestCase,
};
use super::{
    arms_covered, finalize, require_callable, rng_for, GenError, GenMetrics, GeneratorConfig,
    GeneratorKind, TestSuite, EXEC_STEP_CAP,
};

const CROSSOVER_RATE: f64 = 0.75;
const MAX_CREATION_DEPTH: usize = 3;
/// Consecutive evaluations that may fail to spend any step before the
/// search gives up.
const MAX_IDLE: usize = 1_000;

/// Lexicographic fitness: divergence from the base (differential only),
/// then covered branch arms of the target, then covered statements of the
/// target's class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fitness {
    pub divergence: u8,
    pub arms: usize,
    pub stmts: usize,
}

#[derive(Clone, Debug)]
struct Individual {
    seq: Sequence,
    fitness: Fitness,
    test: Option<TestCase>,
}

/// Higher fitness first, then shorter sequences.
fn compare(a: &Individual, b: &Individual) -> Ordering {
    a.fitness
        .cmp(&b.fitness)
        .then_with(|| b.seq.len().cmp(&a.seq.len()))
}

/// Whether `test` (captured on the parent) observes something different on
/// `base`. Tests that do not check on the base, or fault there, score 0.
pub fn diverges_on(base: &ProgramImage, test: &TestCase, limit: u64) -> (bool, u64) {
    let Ok(script) = check_script(base, &test.script()) else {
        return (false, 0);
    };
    let r = Session::new(base, 0).run_script(&script, limit);
    (
        matches!(r.status, ScriptStatus::AssertionFailed(_)),
        r.steps_used,
    )
}

struct Search<'a> {
    image: &'a ProgramImage,
    base: Option<&'a ProgramImage>,
    cfg: &'a GeneratorConfig,
    table: OpTable,
    rng: ChaCha8Rng,
    target: usize,
    target_branches: Vec<u32>,
    class_stmts: Vec<u32>,
    steps: u64,
    cache: ObserverCache,
    /// Goal (arm or statement) to the archive entry that first covered it.
    covered: HashSet<(u8, u32)>,
    archive: Vec<TestCase>,
    divergent: Vec<TestCase>,
    divergent_text: HashSet<String>,
}

impl<'a> Search<'a> {
    fn new(
        image: &'a ProgramImage,
        base: Option<&'a ProgramImage>,
        target: &ElementId,
        cfg: &'a GeneratorConfig,
        kind: GeneratorKind,
    ) -> Result<Self, GenError> {
        cfg.validate()?;
        let callable = require_callable(image, target)?;
        let table = OpTable::new(image, &target.class, Some(callable))?;
        let c = image.callable(callable);
        Ok(Search {
            image,
            base,
            cfg,
            table,
            rng: rng_for(
                cfg.seed,
                &[kind.name(), image.revision.as_str(), &target.to_string()],
            ),
            target: callable,
            target_branches: c.branch_ids.clone(),
            class_stmts: image.class_statements(c.class),
            steps: 0,
            cache: ObserverCache::default(),
            covered: HashSet::new(),
            archive: Vec::new(),
            divergent: Vec::new(),
            divergent_text: HashSet::new(),
        })
    }

    fn budget_left(&self) -> u64 {
        self.cfg.step_budget.saturating_sub(self.steps)
    }

    fn pick_op(&mut self) -> usize {
        let r: f64 = self.rng.gen();
        match self.table.target_op {
            Some(t) if r < 1.0 / 3.0 => t,
            _ if r < 2.0 / 3.0 && !self.table.target_class_ops.is_empty() => *self
                .table
                .target_class_ops
                .choose(&mut self.rng)
                .expect("ops"),
            _ => self.rng.gen_range(0..self.table.ops.len()),
        }
    }

    /// Indices of earlier values assignable to `ty` before position `end`.
    fn compatible(&self, seq: &Sequence, end: usize, ty: Ty) -> Vec<usize> {
        (0..end)
            .filter(|&i| match seq.value_type(i) {
                Some(v) => {
                    v != Ty::Null
                        && v.is_reference() == ty.is_reference()
                        && self.image.assignable(v, ty)
                }
                None => false,
            })
            .collect()
    }

    /// Appends a call of `op` (random when `None`), first appending creation
    /// calls for reference inputs that have no earlier value.
    fn append_random(&mut self, seq: &mut Sequence, op: Option<usize>, depth: usize) -> bool {
        let op_idx = op.unwrap_or_else(|| self.pick_op());
        let op = self.table.ops[op_idx].clone();
        let mut inputs = Vec::new();
        for (k, ty) in op.input_types().into_iter().enumerate() {
            let receiver = k == 0 && op.receiver.is_some();
            let Ty::Class(class) = ty else {
                inputs.push(Input::Lit(random_literal(&mut self.rng, ty)));
                continue;
            };
            if !receiver && self.rng.gen_bool(self.cfg.null_probability) {
                inputs.push(Input::Lit(Literal::Null));
                continue;
            }
            let existing = self.compatible(seq, seq.len(), ty);
            if !existing.is_empty() && (depth >= MAX_CREATION_DEPTH || self.rng.gen_bool(0.8)) {
                inputs.push(Input::Var(*existing.choose(&mut self.rng).expect("value")));
                continue;
            }
            let producers = self.table.producers_of(class).to_vec();
            if depth < MAX_CREATION_DEPTH
                && !producers.is_empty()
                && seq.len() + 1 < self.cfg.max_sequence_len
            {
                let p = *producers.choose(&mut self.rng).expect("producer");
                if self.append_random(seq, Some(p), depth + 1) {
                    inputs.push(Input::Var(seq.len() - 1));
                    continue;
                }
            }
            match existing.choose(&mut self.rng) {
                Some(&i) => inputs.push(Input::Var(i)),
                None if receiver => return false,
                None => inputs.push(Input::Lit(Literal::Null)),
            }
        }
        if seq.len() >= self.cfg.max_sequence_len {
            return false;
        }
        seq.stmts.push(SeqStmt { op, inputs });
        true
    }

    fn random_sequence(&mut self) -> Sequence {
        let mut seq = Sequence::default();
        let len = self
            .rng
            .gen_range(1..=(self.cfg.max_sequence_len / 3).max(1));
        for _ in 0..len * 2 {
            if seq.len() >= len {
                break;
            }
            self.append_random(&mut seq, None, 0);
        }
        seq
    }

    /// Copies `src[from..]` onto `out`. `map` gives the new index of each
    /// source statement already placed; other references are redirected to
    /// a compatible earlier value, or `null` for parameters. Statements whose
    /// receiver cannot be redirected are dropped.
    fn splice(
        &mut self,
        out: &mut Sequence,
        src: &Sequence,
        from: usize,
        map: &mut HashMap<usize, usize>,
    ) {
        for i in from..src.len() {
            if out.len() >= self.cfg.max_sequence_len {
                break;
            }
            let s = &src.stmts[i];
            let types = s.op.input_types();
            let mut inputs = Vec::new();
            let mut ok = true;
            for (k, input) in s.inputs.iter().enumerate() {
                match input {
                    Input::Var(j) => match map.get(j) {
                        Some(&n) => inputs.push(Input::Var(n)),
                        None => {
                            let c = self.compatible(out, out.len(), types[k]);
                            match c.choose(&mut self.rng) {
                                Some(&n) => inputs.push(Input::Var(n)),
                                None if k == 0 && s.op.receiver.is_some() => {
                                    ok = false;
                                    break;
                                }
                                None => {
                                    inputs.push(Input::Lit(random_literal(&mut self.rng, types[k])))
                                }
                            }
                        }
                    },
                    lit => inputs.push(lit.clone()),
                }
            }
            if ok {
                out.stmts.push(SeqStmt {
                    op: s.op.clone(),
                    inputs,
                });
                map.insert(i, out.len() - 1);
            }
        }
    }

    fn crossover(&mut self, a: &Sequence, b: &Sequence) -> Sequence {
        let ca = self.rng.gen_range(0..=a.len());
        let cb = self.rng.gen_range(0..=b.len());
        let mut out = Sequence {
            stmts: a.stmts[..ca].to_vec(),
        };
        self.splice(&mut out, b, cb, &mut HashMap::new());
        out
    }

    fn identity(n: usize) -> HashMap<usize, usize> {
        (0..n).map(|i| (i, i)).collect()
    }

    fn mutate(&mut self, seq: &Sequence) -> Sequence {
        let choice = self.rng.gen_range(0..4);
        match choice {
            // Append.
            0 => {
                let mut out = seq.clone();
                self.append_random(&mut out, None, 0);
                out
            }
            // Delete one statement, re-linking later ones.
            1 if !seq.is_empty() => {
                let i = self.rng.gen_range(0..seq.len());
                let mut out = Sequence {
                    stmts: seq.stmts[..i].to_vec(),
                };
                let mut map = Self::identity(i);
                self.splice(&mut out, seq, i + 1, &mut map);
                out
            }
            // Replace one statement by a call with the same result type.
            2 if !seq.is_empty() => {
                let i = self.rng.gen_range(0..seq.len());
                let result = seq.stmts[i].op.result;
                let same: Vec<usize> = (0..self.table.ops.len())
                    .filter(|&o| self.table.ops[o].result == result)
                    .collect();
                let op = *same
                    .choose(&mut self.rng)
                    .expect("the statement's own op qualifies");
                let mut out = Sequence {
                    stmts: seq.stmts[..i].to_vec(),
                };
                let mut map = Self::identity(i);
                if self.append_random(&mut out, Some(op), MAX_CREATION_DEPTH) && out.len() == i + 1
                {
                    map.insert(i, i);
                } else {
                    out.stmts.truncate(i);
                }
                self.splice(&mut out, seq, i + 1, &mut map);
                out
            }
            // Perturb a primitive literal.
            _ => {
                let mut out = seq.clone();
                let slots: Vec<(usize, usize)> = out
                    .stmts
                    .iter()
                    .enumerate()
                    .flat_map(|(i, s)| {
                        s.inputs
                            .iter()
                            .enumerate()
                            .filter(|(_, inp)| {
                                matches!(
                                    inp,
                                    Input::Lit(
                                        Literal::Int(_) | Literal::Str(_) | Literal::Bool(_)
                                    )
                                )
                            })
                            .map(move |(k, _)| (i, k))
                    })
                    .collect();
                if let Some(&(i, k)) = slots.choose(&mut self.rng) {
                    let new = match &out.stmts[i].inputs[k] {
                        Input::Lit(Literal::Int(v)) => Literal::Int(if self.rng.gen_bool(0.5) {
                            *INT_POOL.choose(&mut self.rng).expect("pool")
                        } else {
                            v.wrapping_add(self.rng.gen_range(-10..=10))
                        }),
                        Input::Lit(Literal::Str(s)) => {
                            Literal::Str(if self.rng.gen_bool(0.5) || s.is_empty() {
                                STR_POOL.choose(&mut self.rng).expect("pool").to_string()
                            } else {
                                let mut chars: Vec<char> = s.chars().collect();
                                let at = self.rng.gen_range(0..chars.len());
                                match self.rng.gen_range(0..3) {
                                    0 => {
                                        chars.remove(at);
                                    }
                                    1 => chars.insert(at, ' '),
                                    _ => chars.insert(at, 'a'),
                                }
                                chars.into_iter().collect()
                            })
                        }
                        Input::Lit(Literal::Bool(b)) => Literal::Bool(!b),
                        other => unreachable!("slot filter admits primitives only: {other:?}"),
                    };
                    out.stmts[i].inputs[k] = Input::Lit(new);
                } else {
                    self.append_random(&mut out, None, 0);
                }
                out
            }
        }
    }

    /// Executes and captures a sequence, truncating it before a faulting
    /// statement and retrying once. Returns `None` once the budget is spent.
    fn evaluate(&mut self, mut seq: Sequence) -> Option<Individual> {
        for _ in 0..2 {
            if self.budget_left() == 0 {
                return None;
            }
            if seq.is_empty() {
                return Some(Individual {
                    seq,
                    fitness: Fitness::default(),
                    test: None,
                });
            }
            let limit = EXEC_STEP_CAP.min(self.budget_left());
            let mut trace = None;
            let result = capture_with(
                self.image,
                &seq,
                limit,
                &mut self.cache,
                Some(self.target),
                &mut |session, _| {
                    trace = Some(session.trace().clone());
                },
            );
            match result {
                Ok(c) => {
                    self.steps += c.steps;
                    let trace = trace.expect("prefix ran");
                    let mut fitness = Fitness {
                        divergence: 0,
                        arms: arms_covered(&trace, &self.target_branches),
                        stmts: self
                            .class_stmts
                            .iter()
                            .filter(|&&s| trace.stmt_hit(s))
                            .count(),
                    };
                    let mut new_goal = false;
                    for &b in &self.target_branches {
                        for (arm, first) in [(0u8, true), (1u8, false)] {
                            if trace.arm_hit(b, first) {
                                new_goal |= self.covered.insert((arm, b));
                            }
                        }
                    }
                    for &s in &self.class_stmts {
                        if trace.stmt_hit(s) {
                            new_goal |= self.covered.insert((2, s));
                        }
                    }
                    if new_goal {
                        self.archive.push(c.test.clone());
                    }
                    if let Some(base) = self.base {
                        let (diverges, used) =
                            diverges_on(base, &c.test, EXEC_STEP_CAP.min(self.budget_left()));
                        self.steps += used;
                        if diverges {
                            fitness.divergence = 1;
                            if self.divergent.len() < self.cfg.max_suite_size
                                && self.divergent_text.insert(render_test(&c.test))
                            {
                                self.divergent.push(c.test.clone());
                            }
                        }
                    }
                    return Some(Individual {
                        seq,
                        fitness,
                        test: Some(c.test),
                    });
                }
                Err(f) => {
                    self.steps += f.steps;
                    match f.completed {
                        Some(n) => seq.stmts.truncate(n),
                        None => seq.stmts.clear(),
                    }
                }
            }
        }
        Some(Individual {
            seq: Sequence::default(),
            fitness: Fitness::default(),
            test: None,
        })
    }

    fn tournament<'p>(&mut self, pop: &'p [Individual]) -> &'p Individual {
        let mut best = &pop[self.rng.gen_range(0..pop.len())];
        for _ in 1..self.cfg.tournament {
            let c = &pop[self.rng.gen_range(0..pop.len())];
            if compare(c, best) == Ordering::Greater {
                best = c;
            }
        }
        best
    }

    fn run(mut self, kind: GeneratorKind, target: &ElementId) -> (TestSuite, GenMetrics) {
        let mut pop: Vec<Individual> = Vec::new();
        let mut idle = 0;
        while pop.len() < self.cfg.population && self.budget_left() > 0 && idle < MAX_IDLE {
            let before = self.steps;
            let seq = self.random_sequence();
            match self.evaluate(seq) {
                Some(ind) => pop.push(ind),
                None => break,
            }
            idle = if self.steps == before { idle + 1 } else { 0 };
        }
        while self.budget_left() > 0 && !pop.is_empty() && idle < MAX_IDLE {
            pop.sort_by(|a, b| compare(b, a));
            let mut next = vec![pop[0].clone()];
            while next.len() < self.cfg.population && self.budget_left() > 0 && idle < MAX_IDLE {
                let before = self.steps;
                let a = self.tournament(&pop).seq.clone();
                let crossed = self.rng.gen_bool(CROSSOVER_RATE);
                let mut child = if crossed {
                    let b = self.tournament(&pop).seq.clone();
                    self.crossover(&a, &b)
                } else {
                    a
                };
                if !crossed || self.rng.gen_bool(self.cfg.mutation_rate) {
                    child = self.mutate(&child);
                }
                match self.evaluate(child) {
                    Some(ind) => next.push(ind),
                    None => break,
                }
                idle = if self.steps == before { idle + 1 } else { 0 };
            }
            pop = next;
        }
        pop.sort_by(|a, b| compare(b, a));
        let mut candidates = std::mem::take(&mut self.divergent);
        candidates.append(&mut self.archive);
        candidates.extend(pop.into_iter().filter_map(|i| i.test));
        finalize(self.image, candidates, kind, self.cfg, target, self.steps)
    }
}

pub fn generate_search(
    image: &ProgramImage,
    target: &ElementId,
    cfg: &GeneratorConfig,
) -> Result<(TestSuite, GenMetrics), GenError> {
    Ok(
        Search::new(image, None, target, cfg, GeneratorKind::Search)?
            .run(GeneratorKind::Search, target),
    )
}

/// Search with a dominant reward for tests whose observations on `base`
/// differ from those on `parent`. Assertions are captured on `parent`.
pub fn generate_differential(
    parent: &ProgramImage,
    base: &ProgramImage,
    target: &ElementId,
    cfg: &GeneratorConfig,
) -> Result<(TestSuite, GenMetrics), GenError> {
    Ok(
        Search::new(parent, Some(base), target, cfg, GeneratorKind::Differential)?
            .run(GeneratorKind::Differential, target),
    )
}
