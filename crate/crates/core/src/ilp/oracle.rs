//! Exhaustive verification oracle for tiny model instances, plus the
//! JSON-lines solution format used to cross-check external solver output.
//!
//! The oracle enumerates every assignment of the binaries, keeps the
//! feasible one with the largest objective, and resolves objective ties
//! toward the lexicographically largest assignment in variable-creation
//! order. The assignment space is partitioned across worker threads with
//! an order-preserving reduction, so results are bit-identical whatever
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ilp::IlpModel;
use crate::SimError;

/// Default cap on the number of binaries the oracle will enumerate.
pub const DEFAULT_ORACLE_LIMIT: usize = 24;

const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub assignment: Vec<u8>,
    pub objective: f64,
    pub feasible: bool,
}

fn assignment_bits(model: &IlpModel, bits: u64) -> Vec<u8> {
    let n = model.num_vars();
    (0..n).map(|j| ((bits >> (n - 1 - j)) & 1) as u8).collect()
}

fn scan_range(model: &IlpModel, range: std::ops::Range<u64>) -> Option<(f64, u64)> {
    let n = model.num_vars();
    let mut assignment = vec![0u8; n];
    let mut best: Option<(f64, u64)> = None;
    'outer: for bits in range {
        for (j, slot) in assignment.iter_mut().enumerate() {
            *slot = ((bits >> (n - 1 - j)) & 1) as u8;
        }
        for row in &model.rows {
            if !row.satisfied(&assignment, FEASIBILITY_TOL) {
                continue 'outer;
            }
        }
        let obj = model.objective_value(&assignment);
        // >= keeps the later (lexicographically larger) assignment on ties.
        if best.is_none_or(|(b, _)| obj >= b) {
            best = Some((obj, bits));
        }
    }
    best
}

/// Enumerates all assignments of a model with at most `limit` binaries.
pub fn solve_exhaustive(model: &IlpModel, limit: usize) -> Result<OracleSolution, SimError> {
    let n = model.num_vars();
    if n > limit {
        return Err(SimError::OracleLimit { vars: n, limit });
    }
    if n == 0 {
        let feasible = model.rows.iter().all(|r| r.satisfied(&[], FEASIBILITY_TOL));
        return Ok(OracleSolution { assignment: vec![], objective: 0.0, feasible });
    }
    let total: u64 = 1u64 << n;
    let chunk: u64 = 1 << 16;
    let starts: Vec<u64> = (0..total).step_by(chunk as usize).collect();
    let best = starts
        .into_par_iter()
        .map(|start| scan_range(model, start..total.min(start + chunk)))
        .reduce(
            || None,
            // Right argument covers later assignments: it wins ties.
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(l), Some(r)) => Some(if r.0 >= l.0 { r } else { l }),
            },
        );
    match best {
        Some((objective, bits)) => Ok(OracleSolution {
            assignment: assignment_bits(model, bits),
            objective,
            feasible: true,
        }),
        None => Ok(OracleSolution { assignment: vec![], objective: 0.0, feasible: false }),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionLine {
    name: String,
    value: u8,
}

/// Serializes an assignment as one `{"name":...,"value":0|1}` JSON object
/// per line, in variable order.
pub fn solution_to_jsonl(model: &IlpModel, assignment: &[u8]) -> String {
    let mut out = String::new();
    for (name, &value) in model.vars.iter().zip(assignment) {
        let line = SolutionLine { name: name.clone(), value };
        out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
        out.push('\n');
    }
    out
}

/// Reads a JSON-lines solution back into an assignment vector. Variables
/// absent from the file default to 0; unknown names are rejected.
pub fn solution_from_jsonl(model: &IlpModel, text: &str) -> Result<Vec<u8>, SimError> {
    let mut assignment = vec![0u8; model.num_vars()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: SolutionLine = serde_json::from_str(line)
            .map_err(|e| SimError::Parse(format!("solution line {}: {e}", lineno + 1)))?;
        let idx = model.index_of(&parsed.name).ok_or_else(|| {
            SimError::Parse(format!("solution line {}: unknown variable {:?}", lineno + 1, parsed.name))
        })?;
        if parsed.value > 1 {
            return Err(SimError::Parse(format!(
                "solution line {}: value {} is not binary",
                lineno + 1,
                parsed.value
            )));
        }
        assignment[idx] = parsed.value;
    }
    Ok(assignment)
}
