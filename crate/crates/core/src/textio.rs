//! Surface syntax for formulas, and the JSON formats for models and tiling instances.
//!
//! ```text
//! formula  ::= iff
//! iff      ::= imp { "<->" imp }
//! imp      ::= or [ "->" imp ]
//! or       ::= and { "|" and }
//! and      ::= unary { "&" unary }
//! unary    ::= "~" unary | "box" unary | "dia" unary
//!            | ("forall" | "exists") ident "." formula
//!            | primary
//! primary  ::= "true" | "false" | ident [ "(" [ ident { "," ident } ] ")" ]
//!            | "(" formula ")"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encodings::TilingInstance;
use crate::formula::{to_nnf, Formula, Pred, RawFormula, Var};
use crate::kripke::{BuildError, KripkeModel, ModelBuilder, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Not,
    And,
    Or,
    Implies,
    Iff,
    True,
    False,
    Box,
    Dia,
    Forall,
    Exists,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::Comma => "`,`",
            Tok::Dot => "`.`",
            Tok::Not => "`~`",
            Tok::And => "`&`",
            Tok::Or => "`|`",
            Tok::Implies => "`->`",
            Tok::Iff => "`<->`",
            Tok::True => "`true`",
            Tok::False => "`false`",
            Tok::Box => "`box`",
            Tok::Dia => "`dia`",
            Tok::Forall => "`forall`",
            Tok::Exists => "`exists`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }
        let mut width = 1;
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '~' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '-' if chars.get(i + 1) == Some(&'>') => {
                width = 2;
                Tok::Implies
            }
            '<' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                width = 3;
                Tok::Iff
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "box" => Tok::Box,
                    "dia" => Tok::Dia,
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    _ => Tok::Ident(word),
                };
                out.push(Spanned { tok, line: l0, col: c0 });
                continue;
            }
            other => {
                return Err(ParseError {
                    line,
                    col,
                    message: format!("unexpected character `{other}`"),
                    expected: Vec::new(),
                })
            }
        };
        i += width;
        col += width;
        out.push(Spanned { tok, line: l0, col: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    arity: HashMap<Pred, usize>,
}

const FORMULA_START: &[&str] = &["`~`", "`box`", "`dia`", "`forall`", "`exists`", "`true`", "`false`", "`(`", "identifier"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let t = &self.toks[self.pos];
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        ParseError {
            line: t.line,
            col: t.col,
            message: format!("expected one of {}, found {}", expected.join(", "), t.tok),
            expected,
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[name]))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn formula(&mut self) -> Result<RawFormula, ParseError> {
        let mut lhs = self.implication()?;
        while *self.peek() == Tok::Iff {
            self.bump();
            let rhs = self.implication()?;
            lhs = RawFormula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> Result<RawFormula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implication()?;
            return Ok(RawFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<RawFormula, ParseError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = RawFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<RawFormula, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = RawFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RawFormula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(RawFormula::not(self.unary()?))
            }
            Tok::Box => {
                self.bump();
                Ok(RawFormula::boxed(self.unary()?))
            }
            Tok::Dia => {
                self.bump();
                Ok(RawFormula::dia(self.unary()?))
            }
            Tok::Forall | Tok::Exists => {
                let universal = self.bump().tok == Tok::Forall;
                let x = Var::new(self.ident()?);
                self.expect(Tok::Dot, "`.`")?;
                let body = self.formula()?;
                Ok(if universal { RawFormula::forall(x, body) } else { RawFormula::exists(x, body) })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<RawFormula, ParseError> {
        match self.peek().clone() {
            Tok::True => {
                self.bump();
                Ok(RawFormula::Top)
            }
            Tok::False => {
                self.bump();
                Ok(RawFormula::Bot)
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error(&["`)`", "`&`", "`|`", "`->`", "`<->`"]));
                }
                self.bump();
                Ok(f)
            }
            Tok::Ident(name) => {
                let at = self.pos;
                self.bump();
                let mut args = Vec::new();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    if *self.peek() != Tok::RParen {
                        args.push(Var::new(self.ident()?));
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            args.push(Var::new(self.ident()?));
                        }
                    }
                    if *self.peek() != Tok::RParen {
                        return Err(self.error(&["`,`", "`)`"]));
                    }
                    self.bump();
                }
                let pred = Pred::from(name.as_str());
                match self.arity.get(&pred) {
                    Some(&n) if n != args.len() => {
                        let t = &self.toks[at];
                        return Err(ParseError {
                            line: t.line,
                            col: t.col,
                            message: format!("predicate {name} used with {} arguments, earlier with {n}", args.len()),
                            expected: Vec::new(),
                        });
                    }
                    Some(_) => {}
                    None => {
                        self.arity.insert(pred.clone(), args.len());
                    }
                }
                Ok(RawFormula::Atom(pred, args))
            }
            _ => Err(self.error(FORMULA_START)),
        }
    }
}

/// Parse one formula. `#` starts a comment running to the end of the line.
pub fn parse(text: &str) -> Result<RawFormula, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, arity: HashMap::new() };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error(&["`&`", "`|`", "`->`", "`<->`", "end of input"]));
    }
    Ok(f)
}

/// Parse and convert to negation normal form.
pub fn parse_nnf(text: &str) -> Result<Formula, ParseError> {
    parse(text).map(|f| to_nnf(&f))
}

/// Canonical fully parenthesized text. Operands are wrapped in parentheses
/// unless they are atoms, negated atoms or truth constants.
pub fn print(phi: &RawFormula) -> String {
    let mut s = String::new();
    write_formula(phi, &mut s);
    s
}

fn is_atomic(phi: &RawFormula) -> bool {
    match phi {
        RawFormula::Top | RawFormula::Bot | RawFormula::Atom(..) => true,
        RawFormula::Not(a) => matches!(**a, RawFormula::Atom(..)),
        _ => false,
    }
}

fn write_operand(phi: &RawFormula, s: &mut String) {
    if is_atomic(phi) {
        write_formula(phi, s);
    } else {
        s.push('(');
        write_formula(phi, s);
        s.push(')');
    }
}

fn write_formula(phi: &RawFormula, s: &mut String) {
    let binary = |a: &RawFormula, op: &str, b: &RawFormula, s: &mut String| {
        write_operand(a, s);
        s.push_str(op);
        write_operand(b, s);
    };
    match phi {
        RawFormula::Top => s.push_str("true"),
        RawFormula::Bot => s.push_str("false"),
        RawFormula::Atom(p, args) => {
            s.push_str(p);
            if !args.is_empty() {
                let names: Vec<&str> = args.iter().map(Var::name).collect();
                s.push('(');
                s.push_str(&names.join(","));
                s.push(')');
            }
        }
        RawFormula::Not(a) => {
            s.push('~');
            write_operand(a, s);
        }
        RawFormula::And(a, b) => binary(a, " & ", b, s),
        RawFormula::Or(a, b) => binary(a, " | ", b, s),
        RawFormula::Implies(a, b) => binary(a, " -> ", b, s),
        RawFormula::Iff(a, b) => binary(a, " <-> ", b, s),
        RawFormula::Box(a) => {
            s.push_str("box ");
            write_operand(a, s);
        }
        RawFormula::Dia(a) => {
            s.push_str("dia ");
            write_operand(a, s);
        }
        RawFormula::Forall(x, a) | RawFormula::Exists(x, a) => {
            s.push_str(if matches!(phi, RawFormula::Forall(..)) { "forall " } else { "exists " });
            s.push_str(x.name());
            s.push_str(". ");
            write_operand(a, s);
        }
    }
}

/// On-disk shape of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub worlds: Vec<String>,
    pub domain: Vec<String>,
    pub delta: BTreeMap<String, Vec<String>>,
    pub relation: Vec<(String, String)>,
    #[serde(default)]
    pub valuation: BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>>,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model schema: {0}")]
    Schema(String),
    #[error("model violates the increasing-domain conditions: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<BuildError> for ModelIoError {
    fn from(e: BuildError) -> Self {
        ModelIoError::Schema(e.to_string())
    }
}

impl ModelJson {
    pub fn from_model(m: &KripkeModel) -> Self {
        let mut delta = BTreeMap::new();
        let mut valuation = BTreeMap::new();
        for (w, name) in m.world_names().iter().enumerate() {
            delta.insert(name.clone(), m.local_domain(w).iter().map(|&e| m.element_name(e).to_string()).collect());
            let mut preds = BTreeMap::new();
            for (p, tuples) in m.valuation_at(w) {
                if tuples.is_empty() {
                    continue;
                }
                let rows: Vec<Vec<String>> = tuples
                    .iter()
                    .map(|t| t.iter().map(|&e| m.element_name(e).to_string()).collect())
                    .collect();
                preds.insert(p.to_string(), rows);
            }
            if !preds.is_empty() {
                valuation.insert(name.clone(), preds);
            }
        }
        ModelJson {
            worlds: m.world_names().to_vec(),
            domain: m.element_names().to_vec(),
            delta,
            relation: m.edges().map(|(a, b)| (m.world_name(a).to_string(), m.world_name(b).to_string())).collect(),
            valuation,
        }
    }

    /// Build without checking the increasing-domain conditions.
    pub fn to_model(&self) -> Result<KripkeModel, ModelIoError> {
        let mut b = ModelBuilder::new();
        for e in &self.domain {
            b.element(e)?;
        }
        for w in &self.worlds {
            b.world(w)?;
        }
        for (w, elems) in &self.delta {
            b.local_domain(w, elems)?;
        }
        for w in &self.worlds {
            if !self.delta.contains_key(w) {
                return Err(ModelIoError::Schema(format!("world {w} has no delta entry")));
            }
        }
        for (a, c) in &self.relation {
            b.edge(a, c)?;
        }
        for (w, preds) in &self.valuation {
            for (p, tuples) in preds {
                if !is_identifier(p) {
                    return Err(ModelIoError::Schema(format!("predicate name {p:?} is not an identifier")));
                }
                for t in tuples {
                    b.fact(w, p, t)?;
                }
            }
        }
        Ok(b.build())
    }
}

fn is_identifier(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "true" | "false" | "box" | "dia" | "forall" | "exists")
}

/// Load a model and reject it unless it is a valid increasing-domain structure.
pub fn read_model(json: &str) -> Result<KripkeModel, ModelIoError> {
    let raw: ModelJson = serde_json::from_str(json)?;
    let m = raw.to_model()?;
    let v = m.validate();
    if !v.is_empty() {
        return Err(ModelIoError::Invalid(v));
    }
    Ok(m)
}

pub fn write_model(m: &KripkeModel) -> String {
    serde_json::to_string_pretty(&ModelJson::from_model(m)).expect("model JSON serializes") + "\n"
}

#[derive(Debug, Error)]
pub enum TilingIoError {
    #[error("malformed tiling JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tiling instance: {0}")]
    Invalid(String),
}

pub fn read_tiling(json: &str) -> Result<TilingInstance, TilingIoError> {
    let inst: TilingInstance = serde_json::from_str(json)?;
    inst.validate().map_err(|e| TilingIoError::Invalid(e.to_string()))?;
    Ok(inst)
}

pub fn write_tiling(inst: &TilingInstance) -> String {
    serde_json::to_string_pretty(inst).expect("tiling JSON serializes") + "\n"
}
