//! Deterministic LP text export and the matching parser.
//!
//! The writer emits a canonical `Maximize` / `Subject To` / `Binary` /
//! `End` layout with coefficients at 12 significant digits, folded at six
//! terms per line. Identical models export byte-identically, so golden
//! comparisons and re-export checks are exact.

use std::fmt::Write as _;

use crate::ilp::{IlpModel, LinTerm, Row, Sense};
use crate::SimError;

const TERMS_PER_LINE: usize = 6;

/// 12 significant digits, scientific.
fn fmt_coeff(v: f64) -> String {
    format!("{:.11e}", v)
}

fn fmt_rhs(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e12 {
        format!("{}", v as i64)
    } else {
        fmt_coeff(v)
    }
}

fn push_terms(out: &mut String, terms: &[LinTerm], vars: &[String], explicit_coeff: bool) {
    for (n, term) in terms.iter().enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n     ");
        }
        let mag = term.coeff.abs();
        if n == 0 {
            if term.coeff < 0.0 {
                out.push_str(" -");
            }
        } else if term.coeff < 0.0 {
            out.push_str(" -");
        } else {
            out.push_str(" +");
        }
        if explicit_coeff || mag != 1.0 {
            let _ = write!(out, " {}", fmt_coeff(mag));
        }
        let _ = write!(out, " {}", vars[term.var]);
    }
}

/// Renders the model as LP text.
pub fn export_lp(model: &IlpModel) -> String {
    let mut out = String::new();
    out.push_str("Maximize\n obj:");
    let obj_terms: Vec<LinTerm> = model
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(var, &coeff)| LinTerm { var, coeff })
        .collect();
    push_terms(&mut out, &obj_terms, &model.vars, true);
    out.push_str("\nSubject To\n");
    for row in &model.rows {
        let _ = write!(out, " {}:", row.name);
        push_terms(&mut out, &row.terms, &model.vars, false);
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, " {} {}", sense, fmt_rhs(row.rhs));
    }
    out.push_str("Binary\n");
    for v in &model.vars {
        let _ = writeln!(out, " {v}");
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Binary,
    End,
}

/// Parses LP text produced by [`export_lp`] (and the common subset of the
/// LP format: maximize objective, `<=`/`>=` rows, binary variables).
pub fn parse_lp(text: &str) -> Result<IlpModel, SimError> {
    let mut section = Section::Preamble;
    let mut obj_tokens: Vec<String> = Vec::new();
    let mut row_tokens: Vec<String> = Vec::new();
    let mut var_names: Vec<String> = Vec::new();

    for raw in text.lines() {
        let line = match raw.find('\\') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lower = trimmed.to_ascii_lowercase();
        match lower.as_str() {
            "maximize" | "max" => {
                section = Section::Objective;
                continue;
            }
            "subject to" | "st" | "s.t." => {
                section = Section::Rows;
                continue;
            }
            "binary" | "binaries" | "bin" => {
                section = Section::Binary;
                continue;
            }
            "end" => {
                section = Section::End;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble => {
                return Err(SimError::Parse(format!("LP: unexpected line before Maximize: {trimmed:?}")));
            }
            Section::Objective => {
                obj_tokens.extend(tokenize(trimmed));
            }
            Section::Rows => {
                row_tokens.extend(tokenize(trimmed));
            }
            Section::Binary => {
                var_names.extend(trimmed.split_whitespace().map(str::to_owned));
            }
            Section::End => {
                return Err(SimError::Parse(format!("LP: content after End: {trimmed:?}")));
            }
        }
    }
    if section != Section::End {
        return Err(SimError::Parse("LP: missing End marker".into()));
    }
    if var_names.is_empty() {
        return Err(SimError::Parse("LP: no binary variables declared".into()));
    }
    let var_index: std::collections::HashMap<&str, usize> = var_names
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let lookup = |name: &str| -> Result<usize, SimError> {
        var_index
            .get(name)
            .copied()
            .ok_or_else(|| SimError::Parse(format!("LP: unknown variable {name:?}")))
    };

    // Objective: optional "obj:" label then a term list.
    let mut obj_slice = obj_tokens.as_slice();
    if let Some(first) = obj_slice.first() {
        if first.ends_with(':') {
            obj_slice = &obj_slice[1..];
        }
    }
    let (obj_terms, rest) = parse_terms(obj_slice, &lookup)?;
    if !rest.is_empty() {
        return Err(SimError::Parse(format!("LP: trailing objective tokens {rest:?}")));
    }
    let mut objective = vec![0.0; var_names.len()];
    for t in obj_terms {
        objective[t.var] += t.coeff;
    }

    // Rows: name ':' terms sense rhs, repeated.
    let mut rows = Vec::new();
    let mut toks = row_tokens.as_slice();
    while !toks.is_empty() {
        let label = &toks[0];
        if !label.ends_with(':') {
            return Err(SimError::Parse(format!("LP: expected row label, got {label:?}")));
        }
        let name = label[..label.len() - 1].to_string();
        let (terms, rest) = parse_terms(&toks[1..], &lookup)?;
        let sense = match rest.first().map(String::as_str) {
            Some("<=") | Some("=<") => Sense::Le,
            Some(">=") | Some("=>") => Sense::Ge,
            other => {
                return Err(SimError::Parse(format!(
                    "LP: row {name}: expected sense, got {other:?}"
                )))
            }
        };
        let rhs_tok = rest
            .get(1)
            .ok_or_else(|| SimError::Parse(format!("LP: row {name}: missing rhs")))?;
        let rhs: f64 = rhs_tok
            .parse()
            .map_err(|_| SimError::Parse(format!("LP: row {name}: bad rhs {rhs_tok:?}")))?;
        rows.push(Row { name, terms, sense, rhs });
        toks = &rest[2..];
    }

    let preemption = var_names.iter().any(|v| v.starts_with("f_"));
    Ok(IlpModel::from_parts(
        "parsed".into(),
        preemption,
        var_names,
        objective,
        rows,
    ))
}

fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

fn is_number(tok: &str) -> bool {
    tok.parse::<f64>().is_ok()
}

/// Parses a signed term list, stopping at the first sense token or when
/// tokens run out. Returns the terms and the unconsumed tail.
fn parse_terms<'a>(
    toks: &'a [String],
    lookup: &dyn Fn(&str) -> Result<usize, SimError>,
) -> Result<(Vec<LinTerm>, &'a [String]), SimError> {
    let mut terms = Vec::new();
    let mut i = 0;
    let mut sign = 1.0;
    let mut coeff: Option<f64> = None;
    while i < toks.len() {
        let tok = toks[i].as_str();
        match tok {
            "<=" | ">=" | "=<" | "=>" | "=" => break,
            "+" => {
                if coeff.is_some() {
                    return Err(SimError::Parse("LP: dangling coefficient before +".into()));
                }
                sign = 1.0;
            }
            "-" => {
                if coeff.is_some() {
                    return Err(SimError::Parse("LP: dangling coefficient before -".into()));
                }
                sign = -1.0;
            }
            _ if is_number(tok) => {
                if coeff.is_some() {
                    return Err(SimError::Parse(format!("LP: two coefficients in a row at {tok:?}")));
                }
                coeff = Some(tok.parse::<f64>().expect("checked numeric"));
            }
            _ => {
                let var = lookup(tok)?;
                terms.push(LinTerm { var, coeff: sign * coeff.take().unwrap_or(1.0) });
                sign = 1.0;
            }
        }
        i += 1;
    }
    if coeff.is_some() {
        return Err(SimError::Parse("LP: coefficient without a variable".into()));
    }
    Ok((terms, &toks[i..]))
}
