//! Randomization specifications.
//!
//! A spec is an arbitrary text document in which some regions are set off by
//! dollar signs, e.g.
//!
//! ```text
//! k1 = $gauss(8,2, name='decayConstant1')$;
//! ```
//!
//! Each `$...$` region is a [`RandToken`]. Instantiating a spec draws one
//! value per token; rendering substitutes the drawn values back into the text.
//! Ground-truth specs conventionally use the `.t` extension and ensemble
//! (per-trial) specs use `.u`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandSpecError {
    #[error("malformed token at byte {offset}: {reason}")]
    MalformedToken { offset: usize, reason: String },
    #[error("duplicate token name `{0}`")]
    DuplicateName(String),
    #[error("no value for token `{0}`")]
    MissingValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistKind {
    Gauss,
    Uniform,
    UniformInt,
    Choice,
}

impl DistKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "gauss" => Some(Self::Gauss),
            "uniform" => Some(Self::Uniform),
            "uniformint" => Some(Self::UniformInt),
            "choice" => Some(Self::Choice),
            _ => None,
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gauss => "gauss",
            Self::Uniform => "uniform",
            Self::UniformInt => "uniformint",
            Self::Choice => "choice",
        })
    }
}

/// One `$kind(args, name='...')$` region of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct RandToken {
    pub kind: DistKind,
    /// gauss: (mean, stdev); uniform/uniformint: (low, high); choice: candidates.
    pub args: Vec<f64>,
    pub name: String,
    /// Byte range of the token in the source, dollar signs included.
    pub span: (usize, usize),
}

impl RandToken {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistKind::Gauss => Normal::new(self.args[0], self.args[1])
                .expect("stdev validated at parse time")
                .sample(rng),
            DistKind::Uniform => {
                let (lo, hi) = (self.args[0], self.args[1]);
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            DistKind::UniformInt => {
                let (lo, hi) = (self.args[0] as i64, self.args[1] as i64);
                rng.random_range(lo..=hi) as f64
            }
            DistKind::Choice => self.args[rng.random_range(0..self.args.len())],
        }
    }
}

/// A parsed spec: the source text plus its tokens in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct RandSpec {
    pub source_text: String,
    pub tokens: Vec<RandToken>,
}

/// Values drawn for every token of a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamAssignment {
    pub values: BTreeMap<String, f64>,
    pub seed: u64,
}

impl ParamAssignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> RandSpecError {
    RandSpecError::MalformedToken {
        offset,
        reason: reason.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Strips `'x'`, `` `x' ``, `"x"` or `` `x` `` quoting from a name argument.
fn unquote(s: &str) -> Option<&str> {
    let open = s.chars().next()?;
    let close = s.chars().last()?;
    if s.len() < 2 {
        return None;
    }
    let ok = matches!((open, close), ('\'', '\'') | ('`', '\'') | ('`', '`') | ('"', '"'));
    ok.then(|| &s[1..s.len() - 1])
}

fn parse_number(s: &str, offset: usize) -> Result<f64, RandSpecError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| malformed(offset, format!("not a number: `{}`", s.trim())))?;
    if !v.is_finite() {
        return Err(malformed(offset, format!("non-finite argument `{}`", s.trim())));
    }
    Ok(v)
}

fn parse_token(body: &str, start: usize, end: usize) -> Result<RandToken, RandSpecError> {
    let body_trim = body.trim();
    let open = body_trim
        .find('(')
        .ok_or_else(|| malformed(start, "expected `kind(...)`"))?;
    if !body_trim.ends_with(')') {
        return Err(malformed(start, "missing closing parenthesis"));
    }
    let kind_str = body_trim[..open].trim();
    let kind =
        DistKind::parse(kind_str).ok_or_else(|| malformed(start, format!("unknown distribution `{kind_str}`")))?;
    let inner = &body_trim[open + 1..body_trim.len() - 1];

    let mut positional = Vec::new();
    let mut name = None;
    for part in inner.split(',') {
        let part = part.trim();
        if let Some(rest) = part.strip_prefix("name") {
            let rest = rest.trim_start();
            if let Some(q) = rest.strip_prefix('=') {
                let n = unquote(q.trim()).ok_or_else(|| malformed(start, "name must be quoted"))?;
                if !is_identifier(n) {
                    return Err(malformed(start, format!("invalid name `{n}`")));
                }
                if name.replace(n.to_string()).is_some() {
                    return Err(malformed(start, "name given twice"));
                }
                continue;
            }
        }
        if name.is_some() {
            return Err(malformed(start, "positional argument after name"));
        }
        positional.push(part);
    }
    let name = name.ok_or_else(|| malformed(start, "missing name argument"))?;

    let args = match kind {
        DistKind::Choice => {
            if positional.len() != 1 {
                return Err(malformed(start, "choice takes one `;`-separated candidate list"));
            }
            positional[0]
                .split(';')
                .map(|s| parse_number(s, start))
                .collect::<Result<Vec<_>, _>>()?
        }
        _ => {
            if positional.len() != 2 {
                return Err(malformed(
                    start,
                    format!("{kind} takes 2 arguments, got {}", positional.len()),
                ));
            }
            positional
                .iter()
                .map(|s| parse_number(s, start))
                .collect::<Result<Vec<_>, _>>()?
        }
    };

    match kind {
        DistKind::Gauss if args[1] <= 0.0 => return Err(malformed(start, "gauss stdev must be positive")),
        DistKind::Uniform | DistKind::UniformInt if args[0] > args[1] => {
            return Err(malformed(start, "low exceeds high"))
        }
        DistKind::UniformInt if args.iter().any(|v| v.fract() != 0.0) => {
            return Err(malformed(start, "uniformint bounds must be integers"))
        }
        _ => {}
    }

    Ok(RandToken {
        kind,
        args,
        name,
        span: (start, end),
    })
}

/// Parses every `$...$` region of `text` into a token.
pub fn parse_spec(text: &str) -> Result<RandSpec, RandSpecError> {
    let mut tokens = Vec::new();
    let mut names = HashSet::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find('$') {
        let start = pos + rel;
        let close = text[start + 1..]
            .find('$')
            .ok_or_else(|| malformed(start, "unbalanced `$`"))?;
        let end = start + 1 + close + 1;
        let token = parse_token(&text[start + 1..end - 1], start, end)?;
        if !names.insert(token.name.clone()) {
            return Err(RandSpecError::DuplicateName(token.name));
        }
        tokens.push(token);
        pos = end;
    }
    Ok(RandSpec {
        source_text: text.to_string(),
        tokens,
    })
}

impl RandSpec {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.name.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Draws one value per token, in document order, from a ChaCha20 stream
/// seeded by `seed`.
pub fn instantiate(spec: &RandSpec, seed: u64) -> ParamAssignment {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = spec.tokens.iter().map(|t| (t.name.clone(), t.draw(&mut rng))).collect();
    ParamAssignment { values, seed }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        // normalizes -0
        return "0".to_string();
    }
    format!("{v}")
}

/// Substitutes each token span with the decimal rendering of its value.
pub fn render(spec: &RandSpec, assignment: &ParamAssignment) -> Result<String, RandSpecError> {
    let src = &spec.source_text;
    let mut out = String::with_capacity(src.len());
    let mut pos = 0;
    for t in &spec.tokens {
        let v = assignment
            .get(&t.name)
            .ok_or_else(|| RandSpecError::MissingValue(t.name.clone()))?;
        out.push_str(&src[pos..t.span.0]);
        out.push_str(&format_value(v));
        pos = t.span.1;
    }
    out.push_str(&src[pos..]);
    Ok(out)
}
