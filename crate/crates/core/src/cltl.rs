//! Counting LTL over a homogeneous agent population.
//!
//! Formulas are built from counting atoms `[p, m]` ("at least `m` agents
//! satisfy `p`"), their negations, conjunction, disjunction, next and until.
//! `F f` is accepted by the parser and stored as `true U f`.
//!
//! Concrete syntax:
//!
//! ```text
//! or     := and ( '|' and )*
//! and    := until ( '&' until )*
//! until  := unary ( 'U' until )?
//! unary  := '!' unary | 'X' unary | 'F' unary | primary
//! primary:= '[' ident ',' threshold ']' | '(' or ')' | 'true' | 'false'
//! threshold := integer | 'N' | 'N' '/' integer
//! ```
//!
//! `N/k` is floor division by the agent count, resolved when the formula is
//! instantiated for a concrete population.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent letter: bit `p` is set when proposition `p` holds.
pub type Letter = u32;

/// One letter per agent.
pub type JointLetter = Vec<Letter>;

pub const MAX_PROPOSITIONS: usize = 32;

/// The declared proposition names; a proposition's index is its bit in a [`Letter`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Propositions {
    names: Vec<String>,
}

impl Propositions {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("at least one proposition must be declared".into()));
        }
        if names.len() > MAX_PROPOSITIONS {
            return Err(Error::Config(format!(
                "{} propositions declared (limit {MAX_PROPOSITIONS})",
                names.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if !is_identifier(n) {
                return Err(Error::Config(format!("invalid proposition name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate proposition `{n}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Bitmask letter for a set of proposition names.
    pub fn letter<'a>(&self, props: impl IntoIterator<Item = &'a str>) -> Result<Letter> {
        let mut letter = 0;
        for p in props {
            let i = self
                .index_of(p)
                .ok_or_else(|| Error::Config(format!("unknown proposition `{p}`")))?;
            letter |= 1 << i;
        }
        Ok(letter)
    }

    pub fn letter_names(&self, letter: Letter) -> Vec<&str> {
        (0..self.len())
            .filter(|i| letter & (1 << i) != 0)
            .map(|i| self.name(i))
            .collect()
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Agent-count threshold of a counting atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Threshold {
    Const(u32),
    /// `N / divisor`, rounded down.
    Agents { divisor: u32 },
}

impl Threshold {
    pub fn value(self, agents: usize) -> usize {
        match self {
            Threshold::Const(m) => m as usize,
            Threshold::Agents { divisor } => agents / divisor as usize,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Const(m) => write!(f, "{m}"),
            Threshold::Agents { divisor: 1 } => write!(f, "N"),
            Threshold::Agents { divisor } => write!(f, "N/{divisor}"),
        }
    }
}

/// `[p, m]`: at least `m` agents carry proposition `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountingProp {
    pub prop: usize,
    pub threshold: Threshold,
}

impl CountingProp {
    pub fn new(prop: usize, threshold: Threshold) -> Self {
        Self { prop, threshold }
    }

    pub fn display<'a>(&'a self, props: &'a Propositions) -> impl fmt::Display + 'a {
        DisplayWith(move |f: &mut fmt::Formatter<'_>| {
            write!(f, "[{}, {}]", props.name(self.prop), self.threshold)
        })
    }
}

/// Number of agents whose letter contains `cp.prop` is at least the threshold.
pub fn eval_counting_prop(letter: &[Letter], cp: &CountingProp) -> bool {
    let needed = cp.threshold.value(letter.len());
    let bit = 1 << cp.prop;
    letter.iter().filter(|&&l| l & bit != 0).count() >= needed
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(CountingProp),
    NegAtom(CountingProp),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(a: Formula) -> Self {
        Formula::Next(Box::new(a))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn eventually(a: Formula) -> Self {
        Formula::until(Formula::True, a)
    }

    /// Distinct counting atoms in order of first appearance.
    pub fn atoms(&self) -> Vec<CountingProp> {
        fn walk(f: &Formula, out: &mut Vec<CountingProp>) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Atom(a) | Formula::NegAtom(a) => {
                    if !out.contains(a) {
                        out.push(*a);
                    }
                }
                Formula::Next(g) => walk(g, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Replace symbolic thresholds by their value for `agents` agents.
    pub fn instantiate(&self, agents: usize) -> Formula {
        let fix = |a: &CountingProp| CountingProp {
            prop: a.prop,
            threshold: Threshold::Const(a.threshold.value(agents) as u32),
        };
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(fix(a)),
            Formula::NegAtom(a) => Formula::NegAtom(fix(a)),
            Formula::And(a, b) => Formula::and(a.instantiate(agents), b.instantiate(agents)),
            Formula::Or(a, b) => Formula::or(a.instantiate(agents), b.instantiate(agents)),
            Formula::Next(a) => Formula::next(a.instantiate(agents)),
            Formula::Until(a, b) => Formula::until(a.instantiate(agents), b.instantiate(agents)),
        }
    }

    pub fn display<'a>(&'a self, props: &'a Propositions) -> impl fmt::Display + 'a {
        DisplayWith(move |f: &mut fmt::Formatter<'_>| write_formula(self, props, f))
    }
}

fn write_formula(phi: &Formula, props: &Propositions, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match phi {
        Formula::True => write!(f, "true"),
        Formula::False => write!(f, "false"),
        Formula::Atom(a) => write!(f, "{}", a.display(props)),
        Formula::NegAtom(a) => write!(f, "!{}", a.display(props)),
        Formula::And(a, b) => {
            write!(f, "(")?;
            write_formula(a, props, f)?;
            write!(f, " & ")?;
            write_formula(b, props, f)?;
            write!(f, ")")
        }
        Formula::Or(a, b) => {
            write!(f, "(")?;
            write_formula(a, props, f)?;
            write!(f, " | ")?;
            write_formula(b, props, f)?;
            write!(f, ")")
        }
        Formula::Next(a) => {
            write!(f, "X ")?;
            write_formula(a, props, f)
        }
        Formula::Until(a, b) => {
            write!(f, "(")?;
            write_formula(a, props, f)?;
            write!(f, " U ")?;
            write_formula(b, props, f)?;
            write!(f, ")")
        }
    }
}

pub(crate) struct DisplayWith<F>(pub F);

impl<F: Fn(&mut fmt::Formatter<'_>) -> fmt::Result> fmt::Display for DisplayWith<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        (self.0)(f)
    }
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Slash,
    Not,
    And,
    Or,
    Next,
    Until,
    Eventually,
    True,
    False,
    Ident(String),
    Int(u32),
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '/' => Tok::Slash,
            '!' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            c if c.is_ascii_digit() => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = text[start..i].parse::<u32>().map_err(|_| Error::Syntax {
                    pos: start,
                    msg: "integer out of range".into(),
                })?;
                out.push((Tok::Int(n), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "F" => Tok::Eventually,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((tok, start));
                continue;
            }
            other => {
                return Err(Error::Syntax { pos: start, msg: format!("unexpected character `{other}`") })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    props: &'a Propositions,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let at = self.offset();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::Syntax { pos: at, msg: format!("expected {what}, found {t:?}") }),
            None => Err(Error::Syntax { pos: at, msg: format!("expected {what}, found end of input") }),
        }
    }

    fn or(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.bump();
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Tok::Until) {
            self.bump();
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        let at = self.offset();
        match self.peek() {
            Some(Tok::Not) => {
                self.bump();
                match self.unary()? {
                    Formula::Atom(a) => Ok(Formula::NegAtom(a)),
                    Formula::True => Ok(Formula::False),
                    Formula::False => Ok(Formula::True),
                    _ => Err(Error::NegationOnNonAtom { pos: at }),
                }
            }
            Some(Tok::Next) => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Some(Tok::Eventually) => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::True) => Ok(Formula::True),
            Some(Tok::False) => Ok(Formula::False),
            Some(Tok::LParen) => {
                let f = self.or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::LBracket) => {
                let name_at = self.offset();
                let name = match self.bump() {
                    Some(Tok::Ident(n)) => n,
                    // Keyword letters are legal proposition names inside brackets.
                    Some(Tok::Next) => "X".into(),
                    Some(Tok::Until) => "U".into(),
                    Some(Tok::Eventually) => "F".into(),
                    _ => {
                        return Err(Error::Syntax { pos: name_at, msg: "expected proposition name".into() })
                    }
                };
                let prop = self
                    .props
                    .index_of(&name)
                    .ok_or(Error::UndeclaredProposition { name, pos: name_at })?;
                self.expect(Tok::Comma, "`,`")?;
                let threshold = self.threshold()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Formula::Atom(CountingProp { prop, threshold }))
            }
            Some(t) => Err(Error::Syntax { pos: at, msg: format!("unexpected token {t:?}") }),
            None => Err(Error::Syntax { pos: at, msg: "unexpected end of input".into() }),
        }
    }

    fn threshold(&mut self) -> Result<Threshold> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Int(m)) => Ok(Threshold::Const(m)),
            Some(Tok::Ident(n)) if n == "N" => {
                if self.peek() == Some(&Tok::Slash) {
                    self.bump();
                    let dat = self.offset();
                    match self.bump() {
                        Some(Tok::Int(0)) => Err(Error::Syntax { pos: dat, msg: "division by zero".into() }),
                        Some(Tok::Int(k)) => Ok(Threshold::Agents { divisor: k }),
                        _ => Err(Error::Syntax { pos: dat, msg: "expected integer divisor".into() }),
                    }
                } else {
                    Ok(Threshold::Agents { divisor: 1 })
                }
            }
            _ => Err(Error::Syntax { pos: at, msg: "expected threshold (integer, `N` or `N/k`)".into() }),
        }
    }
}

/// Parse a formula over the declared propositions.
pub fn parse(text: &str, props: &Propositions) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), props };
    let f = p.or()?;
    if p.pos < p.toks.len() {
        return Err(Error::Syntax { pos: p.offset(), msg: "trailing input".into() });
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Finite-trace semantics

/// Bounded satisfaction of `f` at position `i` of a trace of length `len`.
/// Obligations that reach past the end of the trace are unresolved and count
/// as false; `true` holds everywhere.
fn holds<A>(f: &Formula, i: usize, len: usize, atom: &A) -> bool
where
    A: Fn(usize, &CountingProp) -> bool,
{
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => i < len && atom(i, a),
        Formula::NegAtom(a) => i < len && !atom(i, a),
        Formula::And(a, b) => holds(a, i, len, atom) && holds(b, i, len, atom),
        Formula::Or(a, b) => holds(a, i, len, atom) || holds(b, i, len, atom),
        Formula::Next(a) => holds(a, i + 1, len, atom),
        Formula::Until(a, b) => {
            for k in i..len {
                if holds(b, k, len, atom) {
                    return true;
                }
                if !holds(a, k, len, atom) {
                    return false;
                }
            }
            false
        }
    }
}

/// Minimal `t` such that positions `0..=t` witness `f`, for a trace whose
/// atom truth values are given by `atom(position, atom)`.
pub fn witness_index_with<A>(f: &Formula, len: usize, atom: A) -> Option<usize>
where
    A: Fn(usize, &CountingProp) -> bool,
{
    (0..len).find(|&t| holds(f, 0, t + 1, &atom))
}

/// Minimal witness index of `f` on a trace of joint letters.
pub fn eval_trace(trace: &[JointLetter], f: &Formula) -> Option<usize> {
    witness_index_with(f, trace.len(), |i, a| eval_counting_prop(&trace[i], a))
}
