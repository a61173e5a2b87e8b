//! Statement and branch coverage.

use serde::Serialize;
use thiserror::Error;

use super::image::{ElementId, ProgramImage};

/// Executed statement ids and taken branch arms, stored as bitsets over the
/// image's statement ids. Arm 0 is then/enter, arm 1 is else/skip.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoverageTrace {
    stmts: Vec<u64>,
    arms: Vec<u64>,
}

fn set(bits: &mut Vec<u64>, i: usize) {
    let w = i / 64;
    if w >= bits.len() {
        bits.resize(w + 1, 0);
    }
    bits[w] |= 1 << (i % 64);
}

fn get(bits: &[u64], i: usize) -> bool {
    bits.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
}

impl CoverageTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark_stmt(&mut self, id: u32) {
        set(&mut self.stmts, id as usize);
    }

    pub fn mark_arm(&mut self, id: u32, first_arm: bool) {
        set(&mut self.arms, id as usize * 2 + usize::from(!first_arm));
    }

    pub fn stmt_hit(&self, id: u32) -> bool {
        get(&self.stmts, id as usize)
    }

    pub fn arm_hit(&self, id: u32, first_arm: bool) -> bool {
        get(&self.arms, id as usize * 2 + usize::from(!first_arm))
    }

    pub fn merge(&mut self, other: &CoverageTrace) {
        for (bits, theirs) in [
            (&mut self.stmts, &other.stmts),
            (&mut self.arms, &other.arms),
        ] {
            if bits.len() < theirs.len() {
                bits.resize(theirs.len(), 0);
            }
            for (a, b) in bits.iter_mut().zip(theirs) {
                *a |= b;
            }
        }
    }

    pub fn stmt_count(&self) -> usize {
        self.stmts.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn arm_count(&self) -> usize {
        self.arms.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn executed_ids(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, bits) in self.stmts.iter().enumerate() {
            for b in 0..64 {
                if bits & (1 << b) != 0 {
                    out.push((w * 64 + b) as u32);
                }
            }
        }
        out
    }

    /// Whether this trace executed a statement `seen` has not.
    pub fn has_new_stmts(&self, seen: &CoverageTrace) -> bool {
        self.stmts
            .iter()
            .enumerate()
            .any(|(i, w)| w & !seen.stmts.get(i).copied().unwrap_or(0) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.stmts.iter().all(|w| *w == 0) && self.arms.iter().all(|w| *w == 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    #[serde(rename = "statementPct")]
    pub statement_pct: f64,
    #[serde(rename = "branchPct")]
    pub branch_pct: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown element {0}")]
pub struct UnknownElement(pub String);

/// Fractions (0..=1) of the element's declared statements and branch arms
/// executed by the union of `traces`. An element without statements (or
/// without branches) reports 0 for that measure.
pub fn coverage_report(
    traces: &[CoverageTrace],
    image: &ProgramImage,
    element: &ElementId,
) -> Result<CoverageReport, UnknownElement> {
    let target = image
        .resolve_element(element)
        .ok_or_else(|| UnknownElement(element.to_string()))?;
    let mut union = CoverageTrace::new();
    for t in traces {
        union.merge(t);
    }
    let (stmts, branches) = image.element_statements(target);
    let hit_stmts = stmts.iter().filter(|&&id| union.stmt_hit(id)).count();
    let hit_arms: usize = branches
        .iter()
        .map(|&id| usize::from(union.arm_hit(id, true)) + usize::from(union.arm_hit(id, false)))
        .sum();
    let frac = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(CoverageReport {
        statement_pct: frac(hit_stmts, stmts.len()),
        branch_pct: frac(hit_arms, branches.len() * 2),
    })
}
