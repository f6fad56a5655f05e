//! First-order rule syntax: AST, parser, canonical printer and the six
//! built-in medical rules.
//!
//! Surface grammar, one rule per line:
//!
//! ```text
//! rule  := NAME ":" atom ("&" | "|") atom "=>" atom ("|" atom)?
//! atom  := RELATION "(" VAR "," VAR ")"
//! ```
//!
//! Whitespace is insignificant. Variables are `X`, `Y` and `Z`; relations
//! are the canonical names of [`RelationKind`].

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::kg::RelationKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("syntax error at column {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("head variable {variable} does not appear in the rule body")]
    RangeRestriction { variable: String },
    #[error("unknown relation {name:?} at column {position}")]
    UnknownRelation { name: String, position: usize },
    #[error("unknown variable {name:?} at column {position}; expected X, Y or Z")]
    UnknownVariable { name: String, position: usize },
    #[error("rule body must have exactly 2 atoms, found {count}")]
    BodyArity { count: usize },
    #[error("rule head must have 1 or 2 atoms, found {count}")]
    HeadArity { count: usize },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<RuleError>,
    },
    #[error("line {line}: duplicate rule name {name:?}")]
    DuplicateName { line: usize, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    X,
    Y,
    Z,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::X, Variable::Y, Variable::Z];

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "X" => Some(Variable::X),
            "Y" => Some(Variable::Y),
            "Z" => Some(Variable::Z),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::X => "X",
            Variable::Y => "Y",
            Variable::Z => "Z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleAtom {
    pub relation: RelationKind,
    pub arg1: Variable,
    pub arg2: Variable,
}

impl RuleAtom {
    pub fn new(relation: RelationKind, arg1: Variable, arg2: Variable) -> Self {
        RuleAtom {
            relation,
            arg1,
            arg2,
        }
    }
}

impl fmt::Display for RuleAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.relation, self.arg1, self.arg2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyKind {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleBody {
    pub kind: BodyKind,
    pub atoms: [RuleAtom; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleHead {
    Atom(RuleAtom),
    Or([RuleAtom; 2]),
}

impl RuleHead {
    pub fn atoms(&self) -> &[RuleAtom] {
        match self {
            RuleHead::Atom(a) => std::slice::from_ref(a),
            RuleHead::Or(atoms) => atoms,
        }
    }

    pub fn is_disjunctive(&self) -> bool {
        matches!(self, RuleHead::Or(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleAst {
    pub name: String,
    pub body: RuleBody,
    pub head: RuleHead,
}

/// Non-fatal findings about a parsed rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleWarning {
    RepeatedArgument { atom: String },
}

impl RuleAst {
    pub fn body_variables(&self) -> HashSet<Variable> {
        self.body
            .atoms
            .iter()
            .flat_map(|a| [a.arg1, a.arg2])
            .collect()
    }

    pub fn is_range_restricted(&self) -> bool {
        let bound = self.body_variables();
        self.head
            .atoms()
            .iter()
            .all(|a| bound.contains(&a.arg1) && bound.contains(&a.arg2))
    }

    pub fn warnings(&self) -> Vec<RuleWarning> {
        self.body
            .atoms
            .iter()
            .chain(self.head.atoms())
            .filter(|a| a.arg1 == a.arg2)
            .map(|a| RuleWarning::RepeatedArgument {
                atom: a.to_string(),
            })
            .collect()
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_rule(self))
    }
}

/// Canonical single-line text for a rule.
pub fn render_rule(ast: &RuleAst) -> String {
    let op = match ast.body.kind {
        BodyKind::And => "&",
        BodyKind::Or => "|",
    };
    let head = ast
        .head
        .atoms()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" | ");
    format!(
        "{}: {} {} {} => {}",
        ast.name, ast.body.atoms[0], op, ast.body.atoms[1], head
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Colon,
    And,
    Or,
    Arrow,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s:?}"),
            Tok::LParen => f.write_str("\"(\""),
            Tok::RParen => f.write_str("\")\""),
            Tok::Comma => f.write_str("\",\""),
            Tok::Colon => f.write_str("\":\""),
            Tok::And => f.write_str("\"&\""),
            Tok::Or => f.write_str("\"|\""),
            Tok::Arrow => f.write_str("\"=>\""),
            Tok::End => f.write_str("end of input"),
        }
    }
}

/// Tokens paired with 1-based char columns.
fn lex(text: &str) -> Result<Vec<(Tok, usize)>, RuleError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => toks.push((Tok::LParen, col)),
            ')' => toks.push((Tok::RParen, col)),
            ',' => toks.push((Tok::Comma, col)),
            ':' => toks.push((Tok::Colon, col)),
            '&' => toks.push((Tok::And, col)),
            '|' => toks.push((Tok::Or, col)),
            '=' if chars.get(i + 1) == Some(&'>') => {
                toks.push((Tok::Arrow, col));
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push((Tok::Ident(chars[start..i].iter().collect()), start + 1));
                continue;
            }
            other => {
                return Err(RuleError::Syntax {
                    position: col,
                    expected: "a rule token".into(),
                    found: format!("{other:?}"),
                })
            }
        }
        i += 1;
    }
    toks.push((Tok::End, chars.len() + 1));
    Ok(toks)
}

/// Atom with variables still as raw names, so range restriction can be
/// reported before variable validation.
struct RawAtom {
    relation: RelationKind,
    args: [(String, usize); 2],
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> RuleError {
        let (tok, col) = &self.toks[self.pos];
        RuleError::Syntax {
            position: *col,
            expected: expected.to_string(),
            found: tok.to_string(),
        }
    }

    fn expect(&mut self, want: Tok, expected: &str) -> Result<(), RuleError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<(String, usize), RuleError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let (_, col) = self.next();
                Ok((s, col))
            }
            _ => Err(self.error(expected)),
        }
    }

    fn atom(&mut self) -> Result<RawAtom, RuleError> {
        let (rel, col) = self.ident("a relation name")?;
        let relation = rel
            .parse::<RelationKind>()
            .map_err(|_| RuleError::UnknownRelation {
                name: rel.clone(),
                position: col,
            })?;
        self.expect(Tok::LParen, "\"(\"")?;
        let a = self.ident("a variable")?;
        self.expect(Tok::Comma, "\",\"")?;
        let b = self.ident("a variable")?;
        self.expect(Tok::RParen, "\")\"")?;
        Ok(RawAtom {
            relation,
            args: [a, b],
        })
    }
}

fn resolve(atom: RawAtom) -> Result<RuleAtom, RuleError> {
    let var = |(name, position): (String, usize)| {
        Variable::from_name(&name).ok_or(RuleError::UnknownVariable { name, position })
    };
    let [a, b] = atom.args;
    Ok(RuleAtom::new(atom.relation, var(a)?, var(b)?))
}

/// Parses one rule. Repeated-argument atoms are accepted and logged.
pub fn parse_rule(text: &str) -> Result<RuleAst, RuleError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let (name, _) = p.ident("a rule name")?;
    p.expect(Tok::Colon, "\":\"")?;

    let mut body = vec![p.atom()?];
    let mut connectives = Vec::new();
    while matches!(p.peek(), Tok::And | Tok::Or) {
        connectives.push(p.next().0);
        body.push(p.atom()?);
    }
    if *p.peek() != Tok::Arrow {
        return Err(p.error("\"&\", \"|\" or \"=>\""));
    }
    p.next();

    let mut head = vec![p.atom()?];
    while *p.peek() == Tok::Or {
        p.next();
        head.push(p.atom()?);
    }
    if *p.peek() != Tok::End {
        return Err(p.error("\"|\" or end of input"));
    }
    let bound: HashSet<&str> = body
        .iter()
        .flat_map(|a| a.args.iter().map(|(n, _)| n.as_str()))
        .collect();
    for (var, _) in head.iter().flat_map(|a| a.args.iter()) {
        if !bound.contains(var.as_str()) {
            return Err(RuleError::RangeRestriction {
                variable: var.clone(),
            });
        }
    }
    if body.len() != 2 {
        return Err(RuleError::BodyArity { count: body.len() });
    }
    if head.len() > 2 {
        return Err(RuleError::HeadArity { count: head.len() });
    }

    let kind = match connectives[0] {
        Tok::And => BodyKind::And,
        _ => BodyKind::Or,
    };
    let mut body = body.into_iter().map(resolve);
    let body = RuleBody {
        kind,
        atoms: [body.next().unwrap()?, body.next().unwrap()?],
    };
    let mut head_atoms = head.into_iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
    let head = if head_atoms.len() == 2 {
        let second = head_atoms.pop().unwrap();
        RuleHead::Or([head_atoms.pop().unwrap(), second])
    } else {
        RuleHead::Atom(head_atoms.pop().unwrap())
    };

    let ast = RuleAst { name, body, head };
    for w in ast.warnings() {
        log::warn!("rule {}: {:?}", ast.name, w);
    }
    Ok(ast)
}

/// Parses a rule file: one rule per line, blank lines and `#` comments
/// ignored. Rule names must be unique.
pub fn parse_rule_file(text: &str) -> Result<Vec<RuleAst>, RuleError> {
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let rule = parse_rule(line).map_err(|e| RuleError::AtLine {
            line: idx + 1,
            source: Box::new(e),
        })?;
        if !seen.insert(rule.name.clone()) {
            return Err(RuleError::DuplicateName {
                line: idx + 1,
                name: rule.name,
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Names of the six built-in rules, in order.
pub const BUILTIN_RULE_NAMES: [&str; 6] = [
    "co_occurrence",
    "prevention_causation",
    "treatment_classification",
    "diagnosis_interaction",
    "conjunction",
    "disjunction",
];

/// Human-readable label used in triple listings (`Rule of <label>: ...`).
pub fn display_name(rule_name: &str) -> String {
    match rule_name {
        "co_occurrence" => "Co-occurrence".into(),
        "prevention_causation" => "Prevention and Causation".into(),
        "treatment_classification" => "Treatment and Classification".into(),
        "diagnosis_interaction" => "Diagnosis and Interaction".into(),
        "conjunction" => "Conjunction".into(),
        "disjunction" => "Disjunction".into(),
        other => other.to_string(),
    }
}

/// Inverse of [`display_name`], tolerant of case and `and`/hyphen spelling.
pub fn rule_name_from_display(label: &str) -> Option<String> {
    let lowered = label.trim().to_lowercase().replace('-', " ");
    let key = lowered
        .split_whitespace()
        .filter(|w| *w != "and")
        .collect::<Vec<_>>()
        .join("_");
    let valid = !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_');
    valid.then_some(key)
}

/// The six medical rules: co-occurrence, prevention/causation,
/// treatment/classification, diagnosis/interaction, conjunction and
/// disjunction.
pub fn builtin_rules() -> Vec<RuleAst> {
    use RelationKind::*;
    use Variable::{X, Y, Z};
    let atom = RuleAtom::new;
    let and = |a, b| RuleBody {
        kind: BodyKind::And,
        atoms: [a, b],
    };
    vec![
        RuleAst {
            name: BUILTIN_RULE_NAMES[0].into(),
            body: and(atom(CoOccursWith, X, Y), atom(Affects, Y, Z)),
            head: RuleHead::Atom(atom(Affects, X, Z)),
        },
        RuleAst {
            name: BUILTIN_RULE_NAMES[1].into(),
            body: and(atom(Prevents, X, Y), atom(Causes, Y, Z)),
            head: RuleHead::Atom(atom(Prevents, X, Z)),
        },
        RuleAst {
            name: BUILTIN_RULE_NAMES[2].into(),
            body: and(atom(Treats, X, Y), atom(IsA, Y, Z)),
            head: RuleHead::Atom(atom(Treats, X, Z)),
        },
        RuleAst {
            name: BUILTIN_RULE_NAMES[3].into(),
            body: and(atom(Diagnoses, X, Y), atom(InteractsWith, X, Z)),
            head: RuleHead::Atom(atom(Diagnoses, Z, Y)),
        },
        RuleAst {
            name: BUILTIN_RULE_NAMES[4].into(),
            body: and(atom(CoOccursWith, X, Y), atom(Affects, X, Z)),
            head: RuleHead::Atom(atom(CoOccursWith, Y, Z)),
        },
        RuleAst {
            name: BUILTIN_RULE_NAMES[5].into(),
            body: RuleBody {
                kind: BodyKind::Or,
                atoms: [atom(Prevents, X, Y), atom(Causes, Y, Z)],
            },
            head: RuleHead::Or([atom(Prevents, X, Z), atom(Causes, X, Z)]),
        },
    ]
}
