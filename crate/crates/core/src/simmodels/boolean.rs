//! Synchronous Boolean networks.
//!
//! Text format: one node per line, `name = expr`, where `expr` uses
//! `&` (and), `|` (or), `!` (not), parentheses and the constants `0`/`1`.
//! Lines starting with `#` are comments. States are packed into a `u64`,
//! bit `i` holding node `i`, so networks are limited to 64 nodes.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

pub const MAX_NODES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BooleanError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("rule for `{node}` references undeclared node `{reference}`")]
    UndeclaredNode { node: String, reference: String },
    #[error("node `{0}` declared twice")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("network has {0} nodes, at most 64 are supported")]
    TooManyNodes(usize),
    #[error("no attractor found within {0} steps")]
    NoAttractorWithinBudget(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(bool),
    Var(usize),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, state: u64) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Var(i) => state >> i & 1 == 1,
            Expr::Not(e) => !e.eval(state),
            Expr::And(a, b) => a.eval(state) && b.eval(state),
            Expr::Or(a, b) => a.eval(state) || b.eval(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    And,
    Or,
    Not,
    Open,
    Close,
    Const(bool),
    Ident(String),
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' => {
                chars.next();
            }
            '&' => {
                chars.next();
                out.push(Tok::And);
            }
            '|' => {
                chars.next();
                out.push(Tok::Or);
            }
            '!' => {
                chars.next();
                out.push(Tok::Not);
            }
            '(' => {
                chars.next();
                out.push(Tok::Open);
            }
            ')' => {
                chars.next();
                out.push(Tok::Close);
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                match word.as_str() {
                    "0" => out.push(Tok::Const(false)),
                    "1" => out.push(Tok::Const(true)),
                    w if w.starts_with(|c: char| c.is_ascii_digit()) => return Err(format!("invalid token `{w}`")),
                    _ => out.push(Tok::Ident(word)),
                }
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(out)
}

/// Recursive-descent parser; names are resolved later.
struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    names: &'a HashMap<String, usize>,
    missing: Option<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn or(&mut self) -> Result<Expr, String> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err("missing `)`".into());
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::Const(b)) => {
                self.pos += 1;
                Ok(Expr::Const(b))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.names.get(&name) {
                    Some(&i) => Ok(Expr::Var(i)),
                    None => {
                        self.missing.get_or_insert(name);
                        Ok(Expr::Const(false))
                    }
                }
            }
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BooleanNetwork {
    pub node_names: Vec<String>,
    pub update_rules: Vec<Expr>,
}

impl BooleanNetwork {
    pub fn parse(text: &str) -> Result<Self, BooleanError> {
        let mut decls = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, expr) = line.split_once('=').ok_or_else(|| BooleanError::Parse {
                line: i + 1,
                reason: "expected `name = expr`".into(),
            })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(BooleanError::Parse {
                    line: i + 1,
                    reason: format!("invalid node name `{name}`"),
                });
            }
            decls.push((i + 1, name.to_string(), expr.trim().to_string()));
        }
        if decls.len() > MAX_NODES {
            return Err(BooleanError::TooManyNodes(decls.len()));
        }
        let mut names = HashMap::new();
        for (idx, (_, name, _)) in decls.iter().enumerate() {
            if names.insert(name.clone(), idx).is_some() {
                return Err(BooleanError::DuplicateNode(name.clone()));
            }
        }
        let mut rules = Vec::with_capacity(decls.len());
        for (line, name, expr) in &decls {
            let toks = lex(expr).map_err(|reason| BooleanError::Parse { line: *line, reason })?;
            let mut p = Parser {
                toks: &toks,
                pos: 0,
                names: &names,
                missing: None,
            };
            let e = p.or().map_err(|reason| BooleanError::Parse { line: *line, reason })?;
            if p.pos != toks.len() {
                return Err(BooleanError::Parse {
                    line: *line,
                    reason: "trailing tokens".into(),
                });
            }
            if let Some(reference) = p.missing {
                return Err(BooleanError::UndeclaredNode {
                    node: name.clone(),
                    reference,
                });
            }
            rules.push(e);
        }
        Ok(Self {
            node_names: decls.into_iter().map(|(_, n, _)| n).collect(),
            update_rules: rules,
        })
    }

    pub fn len(&self) -> usize {
        self.node_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, BooleanError> {
        self.node_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| BooleanError::UnknownNode(name.into()))
    }

    /// Replaces a node's rule by a constant (knock-out or constitutive activation).
    pub fn fix_node(&mut self, node: usize, value: bool) {
        self.update_rules[node] = Expr::Const(value);
    }

    pub fn state_mask(&self) -> u64 {
        if self.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.len()) - 1
        }
    }

    /// Builds a packed state from per-node values.
    pub fn pack(values: &[bool]) -> u64 {
        values
            .iter()
            .enumerate()
            .fold(0u64, |s, (i, &b)| s | (u64::from(b) << i))
    }
}

/// Updates every node simultaneously from `state`.
pub fn step_boolean(net: &BooleanNetwork, state: u64) -> u64 {
    net.update_rules
        .iter()
        .enumerate()
        .fold(0u64, |next, (i, rule)| next | (u64::from(rule.eval(state)) << i))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorResult {
    pub transient_length: usize,
    pub cycle_states: Vec<u64>,
    /// Per node, its value over the cycle (length 1 for a fixed point).
    pub ss: BTreeMap<String, Vec<bool>>,
}

impl AttractorResult {
    pub fn is_fixed_point(&self) -> bool {
        self.cycle_states.len() == 1
    }

    fn all_on(&self, node: usize) -> bool {
        self.cycle_states.iter().all(|s| s >> node & 1 == 1)
    }
}

/// Follows the synchronous orbit from `initial` until a state repeats.
pub fn find_attractor(net: &BooleanNetwork, initial: u64, max_steps: usize) -> Result<AttractorResult, BooleanError> {
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut orbit = Vec::new();
    let mut state = initial & net.state_mask();
    loop {
        if let Some(&first) = seen.get(&state) {
            let cycle_states = orbit[first..].to_vec();
            let ss = net
                .node_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), cycle_states.iter().map(|s| s >> i & 1 == 1).collect()))
                .collect();
            return Ok(AttractorResult {
                transient_length: first,
                cycle_states,
                ss,
            });
        }
        if orbit.len() > max_steps {
            return Err(BooleanError::NoAttractorWithinBudget(max_steps));
        }
        seen.insert(state, orbit.len());
        orbit.push(state);
        state = step_boolean(net, state);
    }
}

/// 1 if apoptosis is on throughout the attractor, else 2 if metastasis is,
/// else 3.
pub fn classify_boolean(res: &AttractorResult, apoptosis_node: usize, metastasis_node: usize) -> u8 {
    if res.all_on(apoptosis_node) {
        1
    } else if res.all_on(metastasis_node) {
        2
    } else {
        3
    }
}
