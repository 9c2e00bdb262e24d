//! A small language for inequality-constrained loading models.
//!
//! ```text
//! model simple-structure
//! # one relation per line
//! L[1,1] > |L[1,2]|
//! L[2,2] = 0
//! L[3,1] < -0.3
//! L[4,1] ~=(0.05) 0.5
//! ```
//!
//! Inequalities are strict. `~=` without an argument uses a tolerance of 0.1.
//! Equalities are structural: they must coincide with fixed cells of the base
//! pattern and never count toward prior or posterior mass.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::model::{CellStatus, PatternMatrix};

/// Tolerance of `~=` written without an argument, in standardized-loading units.
pub const DEFAULT_APPROX_DELTA: f64 = 0.1;

/// Loading cell `L[item, factor]`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellRef {
    pub item: usize,
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Term {
    Literal(f64),
    Cell(CellRef),
    Neg(Box<Term>),
    Abs(Box<Term>),
}

impl Term {
    pub fn cell(item: usize, factor: usize) -> Term {
        Term::Cell(CellRef { item, factor })
    }

    pub fn neg(t: Term) -> Term {
        Term::Neg(Box::new(t))
    }

    pub fn abs(t: Term) -> Term {
        Term::Abs(Box::new(t))
    }

    /// Nesting depth of `Neg`/`Abs` wrappers.
    pub fn depth(&self) -> usize {
        match self {
            Term::Literal(_) | Term::Cell(_) => 0,
            Term::Neg(t) | Term::Abs(t) => 1 + t.depth(),
        }
    }

    fn cells(&self, out: &mut Vec<CellRef>) {
        match self {
            Term::Literal(_) => {}
            Term::Cell(c) => out.push(*c),
            Term::Neg(t) | Term::Abs(t) => t.cells(out),
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }

    /// Value of the term for a p × m loading matrix stored row-major.
    fn value(&self, loadings: &crate::linalg::Matrix) -> f64 {
        match self {
            Term::Literal(v) => *v,
            Term::Cell(c) => loadings[(c.item - 1, c.factor - 1)],
            Term::Neg(t) => -t.value(loadings),
            Term::Abs(t) => libm::fabs(t.value(loadings)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Literal(v) => write!(f, "{v}"),
            Term::Cell(c) => write!(f, "L[{},{}]", c.item, c.factor),
            Term::Neg(t) => write!(f, "-{t}"),
            Term::Abs(t) => write!(f, "|{t}|"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Op {
    Lt,
    Gt,
    Eq,
    Approx(f64),
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Lt => write!(f, "<"),
            Op::Gt => write!(f, ">"),
            Op::Eq => write!(f, "="),
            Op::Approx(d) => write!(f, "~=({d})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Relation {
    pub lhs: Term,
    pub op: Op,
    pub rhs: Term,
    /// Source line (1-based); 0 for relations built in code.
    pub line: usize,
}

impl Relation {
    pub fn new(lhs: Term, op: Op, rhs: Term) -> Self {
        Relation { lhs, op, rhs, line: 0 }
    }

    /// Signed margin by which the relation holds; positive iff it holds.
    /// Equalities have no margin and report `+∞`.
    pub fn slack(&self, loadings: &crate::linalg::Matrix) -> f64 {
        let (a, b) = (self.lhs.value(loadings), self.rhs.value(loadings));
        match self.op {
            Op::Lt => b - a,
            Op::Gt => a - b,
            Op::Approx(d) => d - libm::fabs(a - b),
            Op::Eq => f64::INFINITY,
        }
    }

    pub fn holds(&self, loadings: &crate::linalg::Matrix) -> bool {
        self.slack(loadings) > 0.0
    }

    /// Whether two relations carry the same meaning (ignoring source lines).
    pub fn same_meaning(&self, other: &Relation) -> bool {
        self.lhs == other.lhs && self.op == other.op && self.rhs == other.rhs
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstraintSystem {
    pub model_name: String,
    pub relations: Vec<Relation>,
    pub source_text: String,
}

impl ConstraintSystem {
    /// Same name and relations, ignoring source text and line numbers.
    pub fn same_meaning(&self, other: &ConstraintSystem) -> bool {
        self.model_name == other.model_name
            && self.relations.len() == other.relations.len()
            && self.relations.iter().zip(&other.relations).all(|(a, b)| a.same_meaning(b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl core::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BindError {
    /// Source line of the offending relation, when known.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for BindError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) if l > 0 => write!(f, "bind error at line {l}: {}", self.message),
            _ => write!(f, "bind error: {}", self.message),
        }
    }
}

impl core::error::Error for BindError {}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    _src: &'a str,
}

impl Cursor<'_> {
    fn column(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(self.err(self.column(), format!("expected '{c}', found '{x}'"))),
            None => Err(self.err(self.column(), format!("expected '{c}', found end of line"))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            let prev = if self.pos > start { Some(self.chars[self.pos - 1]) } else { None };
            let sign_in_exponent = (c == '+' || c == '-') && matches!(prev, Some('e') | Some('E'));
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || sign_in_exponent {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.err(start + 1, "expected a number"));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(start + 1, format!("malformed number '{text}'")))
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        match text.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v),
            Ok(_) => Err(self.err(start + 1, "indices are 1-based")),
            Err(_) => Err(self.err(start + 1, "expected a positive integer index")),
        }
    }

    fn cell(&mut self) -> Result<CellRef, ParseError> {
        // caller has consumed 'L'
        self.expect('[')?;
        let item = self.index()?;
        self.expect(',')?;
        let factor = self.index()?;
        self.expect(']')?;
        Ok(CellRef { item, factor })
    }

    /// number | cell
    fn simple(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('L') => {
                self.pos += 1;
                Ok(Term::Cell(self.cell()?))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Term::Literal(self.number()?)),
            Some(c) => Err(self.err(self.column(), format!("unexpected '{c}'; expected a number or a cell L[i,j]"))),
            None => Err(self.err(self.column(), "unexpected end of line; expected a term")),
        }
    }

    /// ["-"] (number | cell)
    fn inner(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        if self.peek() == Some('-') {
            let col = self.column();
            self.pos += 1;
            self.skip_ws();
            return match self.peek() {
                Some('-') => Err(self.err(col, "double negation is not allowed")),
                Some('|') => Err(self.err(col, "terms nest at most two levels deep")),
                _ => Ok(negate(self.simple()?)),
            };
        }
        if self.peek() == Some('|') {
            return Err(self.err(self.column(), "terms nest at most two levels deep"));
        }
        self.simple()
    }

    /// ["-"] atom, atom := number | cell | "|" inner "|"
    fn term(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        let negated = if self.peek() == Some('-') {
            self.pos += 1;
            self.skip_ws();
            if self.peek() == Some('-') {
                return Err(self.err(self.column(), "double negation is not allowed"));
            }
            true
        } else {
            false
        };
        let atom = if self.peek() == Some('|') {
            let col = self.column();
            self.pos += 1;
            let inner = self.inner()?;
            self.skip_ws();
            if self.peek() != Some('|') {
                return Err(self.err(self.column(), format!("unclosed '|' opened at column {col}")));
            }
            self.pos += 1;
            Term::abs(inner)
        } else {
            self.simple()?
        };
        let t = if negated { negate(atom) } else { atom };
        if t.depth() > 2 {
            return Err(self.err(1, "terms nest at most two levels deep"));
        }
        Ok(t)
    }

    fn op(&mut self) -> Result<Op, ParseError> {
        self.skip_ws();
        let col = self.column();
        let c = self.peek().ok_or_else(|| self.err(col, "expected an operator"))?;
        self.pos += 1;
        let next = self.peek();
        let op = match c {
            '<' | '>' | '=' if matches!(next, Some('<') | Some('>') | Some('=')) => {
                return Err(self.err(col, format!("malformed operator '{c}{}'", next.unwrap_or(' '))));
            }
            '<' => Op::Lt,
            '>' => Op::Gt,
            '=' => Op::Eq,
            '~' if next == Some('=') => {
                self.pos += 1;
                self.skip_ws();
                if self.peek() == Some('(') {
                    self.pos += 1;
                    let dcol = self.column();
                    let d = self.number()?;
                    if !(d > 0.0) {
                        return Err(self.err(dcol, "approximate-equality tolerance must be positive"));
                    }
                    self.expect(')')?;
                    Op::Approx(d)
                } else {
                    Op::Approx(DEFAULT_APPROX_DELTA)
                }
            }
            _ => return Err(self.err(col, format!("malformed operator starting with '{c}'"))),
        };
        Ok(op)
    }
}

fn negate(t: Term) -> Term {
    match t {
        Term::Literal(v) => Term::Literal(-v),
        other => Term::neg(other),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses a constraint file.
pub fn parse(text: &str) -> Result<ConstraintSystem, ParseError> {
    let mut model_name = None;
    let mut relations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let body = strip_comment(raw);
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("model") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                if model_name.is_some() || !relations.is_empty() {
                    return Err(ParseError {
                        line: line_no,
                        column: 1,
                        message: "the `model <name>` line must come first and only once".into(),
                    });
                }
                let name = rest.trim();
                if name.is_empty() {
                    return Err(ParseError { line: line_no, column: 6, message: "missing model name".into() });
                }
                model_name = Some(name.to_string());
                continue;
            }
        }
        let mut cur = Cursor { chars: body.chars().collect(), pos: 0, line: line_no, _src: body };
        let lhs = cur.term()?;
        let op = cur.op()?;
        let rhs = cur.term()?;
        cur.skip_ws();
        if let Some(c) = cur.peek() {
            return Err(cur.err(cur.column(), format!("unexpected '{c}' after relation; one relation per line")));
        }
        let rel = Relation { lhs, op, rhs, line: line_no };
        check_semantics(&rel, &relations)?;
        relations.push(rel);
    }
    Ok(ConstraintSystem {
        model_name: model_name.unwrap_or_else(|| "unnamed".to_string()),
        relations,
        source_text: text.to_string(),
    })
}

fn check_semantics(rel: &Relation, earlier: &[Relation]) -> Result<(), ParseError> {
    let at = |message: String| ParseError { line: rel.line, column: 1, message };
    match rel.op {
        Op::Eq | Op::Approx(_) if !(rel.lhs.is_literal() || rel.rhs.is_literal()) => {
            return Err(at(format!("'{}' needs a literal on one side", rel.op)));
        }
        _ => {}
    }
    if rel.lhs.is_literal() && rel.rhs.is_literal() {
        return Err(at("relation between two literals constrains nothing".into()));
    }
    for e in earlier {
        let same = e.lhs == rel.lhs && e.rhs == rel.rhs;
        let swapped = e.lhs == rel.rhs && e.rhs == rel.lhs;
        let contradictory = match (e.op, rel.op) {
            (Op::Lt, Op::Gt) | (Op::Gt, Op::Lt) => same,
            (Op::Lt, Op::Lt) | (Op::Gt, Op::Gt) => swapped,
            (Op::Eq, Op::Eq) => false,
            (Op::Eq, _) | (_, Op::Eq) => same || swapped,
            _ => false,
        };
        let conflicting_eq = rel.op == Op::Eq && e.op == Op::Eq && {
            let cell_lit = |r: &Relation| match (&r.lhs, &r.rhs) {
                (Term::Literal(v), t) | (t, Term::Literal(v)) => Some((t.clone(), *v)),
                _ => None,
            };
            match (cell_lit(e), cell_lit(rel)) {
                (Some((t1, v1)), Some((t2, v2))) => t1 == t2 && v1 != v2,
                _ => false,
            }
        };
        if contradictory || conflicting_eq {
            return Err(at(format!("contradicts the relation on line {}", e.line)));
        }
    }
    Ok(())
}

/// Canonical text of a system; parsing it gives back the same relations.
pub fn print(system: &ConstraintSystem) -> String {
    let mut out = format!("model {}\n", system.model_name);
    for r in &system.relations {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// A constraint system checked against a base pattern.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundSystem {
    pub model_name: String,
    pub p: usize,
    pub m: usize,
    /// Base pattern the system was bound against.
    pub pattern: PatternMatrix,
    /// Inequality and approximate-equality relations; these define the model's region.
    pub mass_relations: Vec<Relation>,
    /// Equalities already enforced by fixed cells of the pattern.
    pub structural: Vec<Relation>,
}

/// Validates cell indices and routes equalities to the pattern's fixed cells.
pub fn bind(system: &ConstraintSystem, pattern: &PatternMatrix) -> Result<BoundSystem, BindError> {
    let (p, m) = (pattern.p(), pattern.m());
    let mut mass_relations = Vec::new();
    let mut structural = Vec::new();
    for rel in &system.relations {
        let mut cells = Vec::new();
        rel.lhs.cells(&mut cells);
        rel.rhs.cells(&mut cells);
        for c in &cells {
            if c.item > p || c.factor > m {
                return Err(BindError {
                    line: Some(rel.line),
                    message: format!("cell L[{},{}] is outside the {p} × {m} loading matrix", c.item, c.factor),
                });
            }
        }
        if rel.op != Op::Eq {
            mass_relations.push(rel.clone());
            continue;
        }
        let (term, value) = match (&rel.lhs, &rel.rhs) {
            (Term::Literal(v), t) | (t, Term::Literal(v)) => (t, *v),
            _ => unreachable!("parser guarantees a literal side"),
        };
        let (cell, value) = match term {
            Term::Cell(c) => (*c, value),
            Term::Neg(inner) => match inner.as_ref() {
                Term::Cell(c) => (*c, -value),
                _ => return Err(structural_error(rel)),
            },
            _ => return Err(structural_error(rel)),
        };
        match pattern.get(cell.item - 1, cell.factor - 1) {
            CellStatus::FixedZero if value == 0.0 => structural.push(rel.clone()),
            CellStatus::FixedValue(c) if c == value => structural.push(rel.clone()),
            CellStatus::FixedZero | CellStatus::FixedValue(_) => {
                return Err(BindError {
                    line: Some(rel.line),
                    message: format!("L[{},{}] is fixed to a different value in the base pattern", cell.item, cell.factor),
                })
            }
            CellStatus::Free | CellStatus::PositiveAnchor => return Err(structural_error(rel)),
        }
    }
    Ok(BoundSystem { model_name: system.model_name.clone(), p, m, pattern: pattern.clone(), mass_relations, structural })
}

fn structural_error(rel: &Relation) -> BindError {
    BindError {
        line: Some(rel.line),
        message: format!("'{rel}': equality constraints must be part of the base UCFM pattern"),
    }
}

impl BoundSystem {
    /// Smallest margin over all mass relations (`+∞` for an empty system).
    pub fn slack(&self, loadings: &crate::linalg::Matrix) -> f64 {
        self.mass_relations.iter().map(|r| r.slack(loadings)).fold(f64::INFINITY, f64::min)
    }

    /// Whether every mass relation holds strictly.
    pub fn evaluate(&self, loadings: &crate::linalg::Matrix) -> bool {
        debug_assert_eq!((loadings.rows(), loadings.cols()), (self.p, self.m));
        self.mass_relations.iter().all(|r| r.holds(loadings))
    }

    /// Whether no relation involves a nonzero literal.
    pub fn is_homogeneous(&self) -> bool {
        let nonzero = |t: &Term| {
            let mut lits = Vec::new();
            collect_literals(t, &mut lits);
            lits.iter().any(|v| *v != 0.0)
        };
        self.mass_relations.iter().all(|r| !matches!(r.op, Op::Approx(_)) && !nonzero(&r.lhs) && !nonzero(&r.rhs))
    }
}

fn collect_literals(t: &Term, out: &mut Vec<f64>) {
    match t {
        Term::Literal(v) => out.push(*v),
        Term::Cell(_) => {}
        Term::Neg(x) | Term::Abs(x) => collect_literals(x, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    const LAMBDA1: &str = "model Lambda1
L[1,1] > |L[1,2]|
L[2,1] > 0
L[2,2] = 0
L[3,1] < -0.3
L[3,2] > 0.3
L[4,1] > |L[4,2]|
L[5,1] > |L[5,2]|
L[6,1] = 0
L[6,2] > 0
";

    const LAMBDA2: &str = "model Lambda2
|L[1,1]| < -L[1,2]
";

    fn base_pattern() -> PatternMatrix {
        use CellStatus::*;
        PatternMatrix::from_rows(&[
            alloc::vec![Free, Free],
            alloc::vec![PositiveAnchor, FixedZero],
            alloc::vec![Free, Free],
            alloc::vec![Free, Free],
            alloc::vec![Free, Free],
            alloc::vec![FixedZero, PositiveAnchor],
        ])
        .unwrap()
    }

    fn example_loadings() -> Matrix {
        Matrix::from_rows(&[[0.6, 0.2], [0.5, 0.0], [-0.5, 0.5], [0.6, 0.1], [0.7, 0.3], [0.0, 0.6]])
    }

    #[test]
    fn parses_nine_relations_and_round_trips() {
        let sys = parse(LAMBDA1).unwrap();
        assert_eq!(sys.model_name, "Lambda1");
        assert_eq!(sys.relations.len(), 9);
        assert_eq!(sys.relations[3].rhs, Term::Literal(-0.3));
        let again = parse(&print(&sys)).unwrap();
        assert!(again.same_meaning(&sys));
        assert_eq!(print(&again), print(&sys));
    }

    #[test]
    fn malformed_operator_position() {
        let e = parse("L[1,1] >> 0").unwrap_err();
        assert_eq!((e.line, e.column), (1, 8));
    }

    #[test]
    fn abs_against_negated_cell() {
        let sys = parse(LAMBDA2).unwrap();
        let r = &sys.relations[0];
        assert_eq!(r.lhs, Term::abs(Term::cell(1, 1)));
        assert_eq!(r.op, Op::Lt);
        assert_eq!(r.rhs, Term::neg(Term::cell(1, 2)));
    }

    #[test]
    fn error_positions_on_later_lines() {
        let e = parse("model x\n# note\nL[1,1] > 0\nL[1,] > 0\n").unwrap_err();
        assert_eq!((e.line, e.column), (4, 5));
        let e = parse("L[0,1] > 0").unwrap_err();
        assert_eq!(e.column, 3);
        let e = parse("L[1,1] > 0 L[1,2]").unwrap_err();
        assert_eq!(e.column, 12);
    }

    #[test]
    fn nesting_limits() {
        assert!(parse("-|L[1,1]| < 0.5").is_ok());
        assert!(parse("|-L[1,1]| < 0.5").is_ok());
        assert!(parse("-|-L[1,1]| < 0.5").is_err());
        assert!(parse("||L[1,1]|| < 0.5").is_err());
        assert!(parse("--L[1,1] < 0.5").is_err());
    }

    #[test]
    fn semantic_errors_carry_lines() {
        let e = parse("L[1,1] = L[1,2]").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse("model a\nL[1,1] > L[2,1]\nL[1,1] < L[2,1]\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse("L[1,1] > L[2,1]\nL[2,1] > L[1,1]\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse("L[1,1] = 0\nL[1,1] = 0.5\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse("L[1,1] ~= L[1,2]").is_err());
    }

    #[test]
    fn approx_default_and_explicit() {
        let sys = parse("L[1,1] ~= 0.5\nL[2,1] ~=(0.05) 0.4\n").unwrap();
        assert_eq!(sys.relations[0].op, Op::Approx(DEFAULT_APPROX_DELTA));
        assert_eq!(sys.relations[1].op, Op::Approx(0.05));
        assert!(parse("L[1,1] ~=(0) 0.5").is_err());
    }

    #[test]
    fn binds_against_base_pattern() {
        let b = bind(&parse(LAMBDA1).unwrap(), &base_pattern()).unwrap();
        assert_eq!(b.mass_relations.len(), 7);
        assert_eq!(b.structural.len(), 2);
    }

    #[test]
    fn equality_on_free_cell_fails_to_bind() {
        let e = bind(&parse(LAMBDA1).unwrap(), &PatternMatrix::all_free(6, 2)).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("equality constraints must be part of the base UCFM pattern"));
    }

    #[test]
    fn out_of_range_fails_to_bind() {
        let e = bind(&parse("L[7,1] > 0").unwrap(), &PatternMatrix::all_free(6, 2)).unwrap_err();
        assert!(e.message.contains("outside"));
    }

    #[test]
    fn evaluates_examples() {
        let l = example_loadings();
        let b1 = bind(&parse(LAMBDA1).unwrap(), &base_pattern()).unwrap();
        assert!(b1.evaluate(&l));
        let b2 = bind(&parse(LAMBDA2).unwrap(), &base_pattern()).unwrap();
        assert!(!b2.evaluate(&l));
    }

    #[test]
    fn ties_are_false() {
        let b = bind(&parse("L[1,1] > 0.5").unwrap(), &PatternMatrix::all_free(1, 1)).unwrap();
        assert!(!b.evaluate(&Matrix::from_rows(&[[0.5]])));
        let b = bind(&parse("L[1,1] ~=(0.1) 0.5").unwrap(), &PatternMatrix::all_free(1, 1)).unwrap();
        assert!(!b.evaluate(&Matrix::from_rows(&[[0.75]])));
        assert!(b.evaluate(&Matrix::from_rows(&[[0.55]])));
    }

    #[test]
    fn empty_system_always_holds() {
        let b = bind(&parse("model empty\n# nothing\n").unwrap(), &PatternMatrix::all_free(2, 1)).unwrap();
        assert!(b.evaluate(&Matrix::zeros(2, 1)));
        assert_eq!(b.slack(&Matrix::zeros(2, 1)), f64::INFINITY);
    }
}
