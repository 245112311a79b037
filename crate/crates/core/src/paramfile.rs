//! Flat `name = value` parameter files.
//!
//! Blank lines and `#` comments are ignored. A line `name *= value` records a
//! multiplicative factor rather than an assignment; callers decide how to
//! apply it.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamFileError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamOp {
    Set,
    Scale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLine {
    pub name: String,
    pub op: ParamOp,
    pub value: f64,
}

pub fn parse_param_file(text: &str) -> Result<Vec<ParamLine>, ParamFileError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| ParamFileError::Syntax {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (lhs, rhs, op) = if let Some((l, r)) = line.split_once("*=") {
            (l, r, ParamOp::Scale)
        } else if let Some((l, r)) = line.split_once('=') {
            (l, r, ParamOp::Set)
        } else {
            return Err(err("expected `name = value`"));
        };
        let name = lhs.trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(err("invalid parameter name"));
        }
        let value: f64 = rhs
            .trim()
            .trim_end_matches(';')
            .trim()
            .parse()
            .map_err(|_| err(&format!("`{}` is not a number", rhs.trim())))?;
        if !value.is_finite() {
            return Err(err("value must be finite"));
        }
        out.push(ParamLine {
            name: name.to_string(),
            op,
            value,
        });
    }
    Ok(out)
}
