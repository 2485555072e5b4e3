//! Text syntax for formulas and problem files.
//!
//! ```text
//! formula := iff
//! iff     := imp ("iff" imp)*
//! imp     := or ("implies" imp)?
//! or      := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | ("dia" | "box") [INT] unary
//!          | ("exists" | "forall" | "exists_ne") IDENT "." formula
//!          | primary
//! primary := "true" | "false" | "(" formula ")" | term "=" term
//!          | IDENT "(" terms ")" | IDENT
//! term    := IDENT | "iota" IDENT "." formula | "(" term ")"
//! ```
//!
//! Identifiers bound by a binder are variables; any other identifier in term
//! position is a constant.

use crate::formula::*;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u32),
    LParen,
    RParen,
    Comma,
    Dot,
    Equals,
    Semi,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const KEYWORDS: &[&str] = &[
    "not", "and", "or", "implies", "iff", "exists", "forall", "exists_ne", "dia", "box", "iota", "true", "false",
];

fn lex(src: &str, line0: usize, col0: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut line = line0;
    let mut col = col0;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l, k) = (line, col);
        let single = |t| Token { tok: t, line: l, column: k };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {}
            '(' => out.push(single(Tok::LParen)),
            ')' => out.push(single(Tok::RParen)),
            ',' => out.push(single(Tok::Comma)),
            '.' => out.push(single(Tok::Dot)),
            '=' => out.push(single(Tok::Equals)),
            ';' => out.push(single(Tok::Semi)),
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n = text.parse::<u32>().map_err(|_| ParseError {
                    line: l,
                    column: k,
                    message: format!("integer out of range: {text}"),
                })?;
                col += i - start;
                out.push(Token { tok: Tok::Int(n), line: l, column: k });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Token { tok: Tok::Ident(text), line: l, column: k });
                continue;
            }
            other => {
                return Err(ParseError { line, column: col, message: format!("unexpected character '{other}'") });
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    bound: Vec<String>,
    max_modality: Option<u32>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError { line: t.line, column: t.column, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                if s == TYPE_VAR {
                    return self.err(format!("'{TYPE_VAR}' is reserved"));
                }
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut f = self.implication()?;
        while self.is_kw("iff") {
            self.bump();
            let g = self.implication()?;
            f = iff(f, g);
        }
        Ok(f)
    }

    fn implication(&mut self) -> PResult<Formula> {
        let f = self.disjunction()?;
        if self.is_kw("implies") {
            self.bump();
            let g = self.implication()?;
            return Ok(implies(f, g));
        }
        Ok(f)
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut f = self.conjunction()?;
        while self.is_kw("or") {
            self.bump();
            let g = self.conjunction()?;
            f = or(f, g);
        }
        Ok(f)
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut f = self.unary()?;
        while self.is_kw("and") {
            self.bump();
            let g = self.unary()?;
            f = and(f, g);
        }
        Ok(f)
    }

    fn modality(&mut self) -> PResult<Modality> {
        let (line, column) = (self.toks[self.pos].line, self.toks[self.pos].column);
        let a = match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                self.bump();
                n
            }
            _ => 1,
        };
        let bad = a == 0 || self.max_modality.is_some_and(|m| a > m);
        if bad {
            return Err(ParseError { line, column, message: format!("unknown modality {a}") });
        }
        Ok(a)
    }

    fn binder_body(&mut self, x: String) -> PResult<Formula> {
        self.expect(Tok::Dot, "'.'")?;
        self.bound.push(x);
        let body = self.formula();
        self.bound.pop();
        body
    }

    fn unary(&mut self) -> PResult<Formula> {
        if let Tok::Ident(kw) = self.peek().clone() {
            match kw.as_str() {
                "not" => {
                    self.bump();
                    return Ok(not(self.unary()?));
                }
                "dia" | "box" => {
                    self.bump();
                    let a = self.modality()?;
                    let f = self.unary()?;
                    return Ok(if kw == "dia" { dia(a, f) } else { bx(a, f) });
                }
                "exists" | "forall" | "exists_ne" => {
                    self.bump();
                    let x = self.ident("variable")?;
                    let body = self.binder_body(x.clone())?;
                    return Ok(match kw.as_str() {
                        "exists" => exists(&x, body),
                        "forall" => forall(&x, body),
                        _ => exists_other(&x, body),
                    });
                }
                _ => {}
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Formula> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(top())
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(bot())
            }
            Tok::LParen if matches!(self.peek_at(1), Tok::Ident(s) if s == "iota") => {
                let t = self.term()?;
                self.equality_rest(t)
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Tok::Ident(s) if s == "iota" => {
                let t = self.term()?;
                self.equality_rest(t)
            }
            Tok::Ident(_) => {
                if *self.peek_at(1) == Tok::LParen {
                    let p = self.ident("predicate")?;
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.term()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                                continue;
                            }
                            break;
                        }
                    }
                    self.expect(Tok::RParen, "')' or ','")?;
                    Ok(Formula::Atom(name(&p), args))
                } else if *self.peek_at(1) == Tok::Equals {
                    let t = self.term()?;
                    self.equality_rest(t)
                } else {
                    let p = self.ident("formula")?;
                    if self.bound.contains(&p) {
                        return Err(ParseError {
                            line: self.toks[self.pos - 1].line,
                            column: self.toks[self.pos - 1].column,
                            message: format!("variable '{p}' used as a formula"),
                        });
                    }
                    Ok(Formula::Atom(name(&p), vec![]))
                }
            }
            t => self.err(format!("expected formula, found {}", describe(&t))),
        }
    }

    fn equality_rest(&mut self, lhs: Term) -> PResult<Formula> {
        self.expect(Tok::Equals, "'='")?;
        let rhs = self.term()?;
        Ok(eq(lhs, rhs))
    }

    fn term(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(t)
            }
            Tok::Ident(s) if s == "iota" => {
                self.bump();
                let x = self.ident("variable")?;
                let body = self.binder_body(x.clone())?;
                Ok(Term::iota(&x, body))
            }
            _ => {
                let s = self.ident("term")?;
                if self.bound.contains(&s) {
                    Ok(Term::var(&s))
                } else {
                    Ok(Term::cst(&s))
                }
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(n) => format!("'{n}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Dot => "'.'".into(),
        Tok::Equals => "'='".into(),
        Tok::Semi => "';'".into(),
        Tok::Eof => "end of input".into(),
    }
}

fn parse_tokens(toks: Vec<Token>, max_modality: Option<u32>) -> PResult<Vec<Formula>> {
    let mut p = Parser { toks, pos: 0, bound: Vec::new(), max_modality };
    let mut out = Vec::new();
    loop {
        while *p.peek() == Tok::Semi {
            p.bump();
        }
        if *p.peek() == Tok::Eof {
            return Ok(out);
        }
        out.push(p.formula()?);
        match p.peek() {
            Tok::Semi | Tok::Eof => {}
            t => {
                let d = describe(t);
                return p.err(format!("unexpected {d}"));
            }
        }
    }
}

/// Parses a single formula.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    parse_formula_with(text, None)
}

/// Parses a single formula, rejecting modalities above `max_modality`.
pub fn parse_formula_with(text: &str, max_modality: Option<u32>) -> Result<Formula, ParseError> {
    let toks = lex(text, 1, 1)?;
    let end = toks.last().map(|t| (t.line, t.column)).unwrap_or((1, 1));
    let mut fs = parse_tokens(toks, max_modality)?;
    match fs.len() {
        1 => Ok(fs.pop().unwrap()),
        0 => Err(ParseError { line: end.0, column: end.1, message: "expected formula, found end of input".into() }),
        _ => Err(ParseError { line: 1, column: 1, message: "expected a single formula".into() }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Logic {
    Kn(u32),
    S5,
    S5n(u32),
}

impl Logic {
    pub fn modalities(self) -> u32 {
        match self {
            Logic::Kn(n) | Logic::S5n(n) => n,
            Logic::S5 => 1,
        }
    }

    pub fn is_s5(self) -> bool {
        !matches!(self, Logic::Kn(_))
    }
}

impl std::str::FromStr for Logic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let num = |rest: &str| -> Result<u32, String> {
            let n: u32 = rest.trim().parse().map_err(|_| format!("bad modality count in '{s}'"))?;
            if n == 0 {
                return Err("modality count must be at least 1".into());
            }
            Ok(n)
        };
        if s == "s5" {
            Ok(Logic::S5)
        } else if s == "k" {
            Ok(Logic::Kn(1))
        } else if let Some(r) = s.strip_prefix("kn:") {
            Ok(Logic::Kn(num(r)?))
        } else if let Some(r) = s.strip_prefix("s5n:") {
            Ok(Logic::S5n(num(r)?))
        } else {
            Err(format!("unknown logic '{s}' (expected kn:<n>, s5 or s5n:<n>)"))
        }
    }
}

impl fmt::Display for Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Logic::Kn(n) => write!(f, "kn:{n}"),
            Logic::S5 => write!(f, "s5"),
            Logic::S5n(n) => write!(f, "s5n:{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domains {
    Constant,
    Expanding,
}

impl std::str::FromStr for Domains {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "constant" => Ok(Domains::Constant),
            "expanding" => Ok(Domains::Expanding),
            o => Err(format!("unknown domains '{o}' (expected constant or expanding)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sat,
    Valid,
    Global,
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "sat" => Ok(Task::Sat),
            "valid" => Ok(Task::Valid),
            "global" | "global_consequence" => Ok(Task::Global),
            o => Err(format!("unknown task '{o}' (expected sat, valid or global)")),
        }
    }
}

/// Whether constants must designate at every world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstSemantics {
    Partial,
    Total,
}

impl std::str::FromStr for ConstSemantics {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "partial" => Ok(ConstSemantics::Partial),
            "total" => Ok(ConstSemantics::Total),
            o => Err(format!("unknown constant semantics '{o}' (expected partial or total)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceProblem {
    pub formula: Formula,
    pub theory: Vec<Formula>,
    pub logic: Logic,
    pub domains: Domains,
    pub task: Task,
    pub constants: ConstSemantics,
}

/// Parses a problem file: `key: value` header lines, then `theory:` and
/// `formula:` blocks. Theory sentences are separated by `;`.
pub fn parse_problem(text: &str) -> Result<SourceProblem, ParseError> {
    let mut logic = Logic::Kn(1);
    let mut domains = Domains::Constant;
    let mut task = Task::Sat;
    let mut constants = ConstSemantics::Partial;
    // (line, column, text) of each block
    let mut theory: Option<(usize, usize, String)> = None;
    let mut formula: Option<(usize, usize, String)> = None;
    let mut current: Option<&str> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = raw.trim_start();
        let header = trimmed.split_once(':').filter(|(k, _)| {
            matches!(k.trim(), "logic" | "domains" | "task" | "constants" | "theory" | "formula")
                && !k.contains(char::is_whitespace)
        });
        let herr = |msg: String| ParseError { line: lineno, column: raw.len() - trimmed.len() + 1, message: msg };
        if let Some((key, value)) = header {
            let vcol = raw.len() - value.len() + 1;
            match key {
                "logic" => logic = value.parse().map_err(herr)?,
                "domains" => domains = value.parse().map_err(herr)?,
                "task" => task = value.parse().map_err(herr)?,
                "constants" => constants = value.parse().map_err(herr)?,
                "theory" => {
                    theory = Some((lineno, vcol, value.to_string()));
                    current = Some("theory");
                    continue;
                }
                _ => {
                    formula = Some((lineno, vcol, value.to_string()));
                    current = Some("formula");
                    continue;
                }
            }
            current = None;
            continue;
        }
        let block = match current {
            Some("theory") => theory.as_mut(),
            Some("formula") => formula.as_mut(),
            _ => None,
        };
        match block {
            Some(b) => {
                // keep original columns by padding to the block's start column
                b.2.push('\n');
                b.2.push_str(raw);
            }
            None => {
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                return Err(herr(format!("unexpected line outside a block: '{}'", trimmed)));
            }
        }
    }

    let max = Some(logic.modalities());
    let parse_block = |b: &(usize, usize, String)| -> Result<Vec<Formula>, ParseError> {
        let toks = lex(&b.2, b.0, b.1)?;
        parse_tokens(toks, max)
    };
    let theory = match &theory {
        Some(b) => parse_block(b)?,
        None => Vec::new(),
    };
    let f = match &formula {
        Some(b) => {
            let mut fs = parse_block(b)?;
            if fs.len() != 1 {
                return Err(ParseError { line: b.0, column: 1, message: "formula block must hold exactly one formula".into() });
            }
            fs.pop().unwrap()
        }
        None => {
            let line = text.lines().count().max(1);
            return Err(ParseError { line, column: 1, message: "missing 'formula:' block".into() });
        }
    };
    if !theory.is_empty() && task != Task::Global {
        return Err(ParseError { line: 1, column: 1, message: "a theory is only allowed with task: global".into() });
    }
    Ok(SourceProblem { formula: f, theory, logic, domains, task, constants })
}
