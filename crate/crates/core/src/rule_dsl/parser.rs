//! Text form of rule sets.
//!
//! ```text
//! # comment
//! rule unqualified cnf {
//!   and {
//!     leaf m0 below 5.5
//!     or { leaf m1 below 3.0  leaf m2 above 0.25 frozen }
//!   }
//! }
//! measure m0 = count where type == "scratch"
//! measure m1 = max(length) where type == "dent" and intensity > 0.5
//! measure m2 = count
//! ```

use std::collections::BTreeMap;

use super::ast::{
    Aggregation, Comparison, Direction, Literal, LogicOp, Measurement, Node, Predicate, RuleSet,
};
use crate::error::{DelError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Assign,
    EqEq,
    Lt,
    Gt,
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> DelError {
    DelError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |i: &mut usize, col: &mut usize, n: usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(&mut i, &mut col, 1),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '{' | '}' | '(' | ')' | '<' | '>' => {
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '<' => Tok::Lt,
                    _ => Tok::Gt,
                };
                out.push(Spanned {
                    tok,
                    line: tl,
                    column: tc,
                });
                advance(&mut i, &mut col, 1);
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned {
                        tok: Tok::EqEq,
                        line: tl,
                        column: tc,
                    });
                    advance(&mut i, &mut col, 2);
                } else {
                    out.push(Spanned {
                        tok: Tok::Assign,
                        line: tl,
                        column: tc,
                    });
                    advance(&mut i, &mut col, 1);
                }
            }
            '"' => {
                let mut s = String::new();
                advance(&mut i, &mut col, 1);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(syntax(tl, tc, "unterminated string")),
                        Some('"') => {
                            advance(&mut i, &mut col, 1);
                            break;
                        }
                        Some('\\') => {
                            match chars.get(i + 1) {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                _ => return Err(syntax(line, col, "invalid escape in string")),
                            }
                            advance(&mut i, &mut col, 2);
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(&mut i, &mut col, 1);
                        }
                    }
                }
                out.push(Spanned {
                    tok: Tok::Str(s),
                    line: tl,
                    column: tc,
                });
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_alphanumeric() || d == '.' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..j].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(tl, tc, format!("invalid number `{text}`")))?;
                if !v.is_finite() {
                    return Err(syntax(tl, tc, format!("number `{text}` is not finite")));
                }
                out.push(Spanned {
                    tok: Tok::Num(v),
                    line: tl,
                    column: tc,
                });
                advance(&mut i, &mut col, j - start);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(chars[start..j].iter().collect()),
                    line: tl,
                    column: tc,
                });
                advance(&mut i, &mut col, j - start);
            }
            other => return Err(syntax(tl, tc, format!("unexpected character {other:?}"))),
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct LeafThreshold {
    theta: f64,
    frozen: bool,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    thresholds: BTreeMap<usize, LeafThreshold>,
    leaf_refs: Vec<(usize, usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> DelError {
        let t = self.peek();
        syntax(t.line, t.column, msg)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned> {
        if self.peek().tok == want {
            Ok(self.next())
        } else {
            Err(self.err_here(format!("expected {what}, found {}", describe(&self.peek().tok))))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        match self.peek().tok {
            Tok::Num(v) => {
                self.next();
                Ok(v)
            }
            ref other => Err(self.err_here(format!("expected {what}, found {}", describe(other)))),
        }
    }

    fn measurement_ref(&mut self) -> Result<(usize, usize, usize)> {
        let t = self.peek().clone();
        let name = self.ident("measurement name like m0")?;
        let id = name
            .strip_prefix('m')
            .and_then(|d| (!d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())).then_some(d))
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(|| syntax(t.line, t.column, format!("`{name}` is not a measurement name like m0")))?;
        Ok((id, t.line, t.column))
    }

    fn node(&mut self) -> Result<Node> {
        let t = self.peek().clone();
        let kw = self.ident("`and`, `or` or `leaf`")?;
        match kw.as_str() {
            "and" | "or" => {
                let op = if kw == "and" { LogicOp::And } else { LogicOp::Or };
                self.expect(Tok::LBrace, "`{`")?;
                let mut children = Vec::new();
                while self.peek().tok != Tok::RBrace {
                    if self.peek().tok == Tok::Eof {
                        return Err(self.err_here("unclosed `{`"));
                    }
                    children.push(self.node()?);
                }
                self.next();
                if children.is_empty() {
                    return Err(syntax(t.line, t.column, format!("empty `{kw}` node")));
                }
                Ok(Node::Logic { op, children })
            }
            "leaf" => {
                let (id, line, column) = self.measurement_ref()?;
                let direction = match self.ident("`below` or `above`")?.as_str() {
                    "below" => Direction::Below,
                    "above" => Direction::Above,
                    other => {
                        return Err(syntax(
                            line,
                            column,
                            format!("expected `below` or `above`, found `{other}`"),
                        ))
                    }
                };
                let theta = self.number("threshold")?;
                let frozen = if self.at_keyword("frozen") {
                    self.next();
                    true
                } else {
                    false
                };
                if let Some(prev) = self.thresholds.get(&id) {
                    if prev.theta != theta || prev.frozen != frozen {
                        return Err(syntax(
                            line,
                            column,
                            format!(
                                "m{id} already has threshold {} (line {}, column {})",
                                prev.theta, prev.line, prev.column
                            ),
                        ));
                    }
                } else {
                    self.thresholds.insert(
                        id,
                        LeafThreshold {
                            theta,
                            frozen,
                            line,
                            column,
                        },
                    );
                }
                self.leaf_refs.push((id, line, column));
                Ok(Node::Leaf {
                    measurement: id,
                    direction,
                })
            }
            other => Err(syntax(
                t.line,
                t.column,
                format!("expected `and`, `or` or `leaf`, found `{other}`"),
            )),
        }
    }

    fn predicate(&mut self) -> Result<Predicate> {
        let column = self.ident("column name")?;
        let comparison = match self.next() {
            Spanned { tok: Tok::EqEq, .. } => Comparison::Equals,
            Spanned { tok: Tok::Lt, .. } => Comparison::LessThan,
            Spanned { tok: Tok::Gt, .. } => Comparison::GreaterThan,
            s => {
                return Err(syntax(
                    s.line,
                    s.column,
                    format!("expected `==`, `<` or `>`, found {}", describe(&s.tok)),
                ))
            }
        };
        let value = match self.next() {
            Spanned { tok: Tok::Num(v), .. } => Literal::Num(v),
            Spanned {
                tok: Tok::Str(s), ..
            } => Literal::Str(s),
            s => {
                return Err(syntax(
                    s.line,
                    s.column,
                    format!("expected a number or string, found {}", describe(&s.tok)),
                ))
            }
        };
        Ok(Predicate {
            column,
            comparison,
            value,
        })
    }

    fn measure(&mut self) -> Result<(Measurement, usize, usize)> {
        let (id, line, column) = self.measurement_ref()?;
        self.expect(Tok::Assign, "`=`")?;
        let agg_tok = self.peek().clone();
        let (aggregation, target_column) = match self.ident("`count` or `max`")?.as_str() {
            "count" => (Aggregation::Count, None),
            "max" => {
                self.expect(Tok::LParen, "`(`")?;
                let col = self.ident("column name")?;
                self.expect(Tok::RParen, "`)`")?;
                (Aggregation::Max, Some(col))
            }
            other => {
                return Err(syntax(
                    agg_tok.line,
                    agg_tok.column,
                    format!("unknown aggregation `{other}`"),
                ))
            }
        };
        let mut predicates = Vec::new();
        if self.at_keyword("where") {
            self.next();
            predicates.push(self.predicate()?);
            while self.at_keyword("and") && self.looks_like_predicate() {
                self.next();
                predicates.push(self.predicate()?);
            }
        }
        Ok((
            Measurement {
                id,
                aggregation,
                target_column,
                predicates,
            },
            line,
            column,
        ))
    }

    /// `and` followed by `column op` continues a where clause.
    fn looks_like_predicate(&self) -> bool {
        matches!(
            (self.toks.get(self.pos + 1), self.toks.get(self.pos + 2)),
            (
                Some(Spanned { tok: Tok::Ident(_), .. }),
                Some(Spanned {
                    tok: Tok::EqEq | Tok::Lt | Tok::Gt,
                    ..
                })
            )
        )
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v) => format!("number {v}"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Assign => "`=`".into(),
        Tok::EqEq => "`==`".into(),
        Tok::Lt => "`<`".into(),
        Tok::Gt => "`>`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses rule-DSL source into a checked [`RuleSet`] whose `theta` holds
/// the expert thresholds written on the leaves.
pub fn parse_ruleset(src: &str) -> Result<RuleSet> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        thresholds: BTreeMap::new(),
        leaf_refs: Vec::new(),
    };
    let mut rule: Option<(String, bool, Node)> = None;
    let mut measures: Vec<(Measurement, usize, usize)> = Vec::new();
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Eof => break,
            Tok::Ident(kw) if kw == "rule" => {
                p.next();
                if rule.is_some() {
                    return Err(syntax(t.line, t.column, "only one rule block is allowed"));
                }
                let name = p.ident("rule name")?;
                let cnf = if p.at_keyword("cnf") {
                    p.next();
                    true
                } else {
                    false
                };
                p.expect(Tok::LBrace, "`{`")?;
                let root = p.node()?;
                p.expect(Tok::RBrace, "`}` closing the rule")?;
                rule = Some((name, cnf, root));
            }
            Tok::Ident(kw) if kw == "measure" => {
                p.next();
                let m = p.measure()?;
                if let Some((_, l, c)) = measures.iter().find(|(o, _, _)| o.id == m.0.id) {
                    return Err(syntax(
                        m.1,
                        m.2,
                        format!("duplicate measurement id m{} (first defined at line {l}, column {c})", m.0.id),
                    ));
                }
                measures.push(m);
            }
            other => {
                return Err(syntax(
                    t.line,
                    t.column,
                    format!("expected `rule` or `measure`, found {}", describe(other)),
                ))
            }
        }
    }
    let Some((name, cnf, root)) = rule else {
        let t = p.peek();
        return Err(syntax(t.line, t.column, "missing `rule` block"));
    };
    for &(id, line, column) in &p.leaf_refs {
        if !measures.iter().any(|(m, _, _)| m.id == id) {
            return Err(DelError::Rule(format!(
                "unknown measurement m{id} (line {line}, column {column})"
            )));
        }
    }
    measures.sort_by_key(|(m, _, _)| m.id);
    let theta = measures
        .iter()
        .map(|(m, _, _)| p.thresholds.get(&m.id).map_or(f64::NAN, |t| t.theta))
        .collect();
    let frozen = measures
        .iter()
        .map(|(m, _, _)| p.thresholds.get(&m.id).is_some_and(|t| t.frozen))
        .collect();
    let mut rs = RuleSet {
        name,
        cnf,
        root,
        measurements: measures.into_iter().map(|(m, _, _)| m).collect(),
        theta,
        frozen,
    };
    for (id, _) in rs.measurements.iter().enumerate() {
        if !p.thresholds.contains_key(&rs.measurements[id].id) {
            return Err(DelError::Rule(format!(
                "measurement m{} is not used by any leaf",
                rs.measurements[id].id
            )));
        }
    }
    rs.check()?;
    Ok(rs)
}

/// Parses the JSON mirror of a rule set.
pub fn parse_ruleset_json(src: &str) -> Result<RuleSet> {
    let mut rs: RuleSet = serde_json::from_str(src)?;
    rs.check()?;
    Ok(rs)
}

/// Canonical DSL text; `parse_ruleset(&to_dsl(r)) == r` for every checked rule set.
pub fn to_dsl(rs: &RuleSet) -> String {
    let mut out = String::new();
    out.push_str(&format!("rule {}{} {{\n", rs.name, if rs.cnf { " cnf" } else { "" }));
    write_node(&mut out, &rs.root, rs, 1);
    out.push_str("}\n");
    for m in &rs.measurements {
        out.push_str(&format!("measure m{} = ", m.id));
        match (m.aggregation, &m.target_column) {
            (Aggregation::Max, Some(c)) => out.push_str(&format!("max({c})")),
            _ => out.push_str("count"),
        }
        for (i, p) in m.predicates.iter().enumerate() {
            out.push_str(if i == 0 { " where " } else { " and " });
            let lit = match &p.value {
                Literal::Num(v) => format!("{v:?}"),
                Literal::Str(s) => format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")),
            };
            out.push_str(&format!("{} {} {lit}", p.column, p.comparison.symbol()));
        }
        out.push('\n');
    }
    out
}

fn write_node(out: &mut String, node: &Node, rs: &RuleSet, depth: usize) {
    let pad = "  ".repeat(depth);
    match node {
        Node::Leaf {
            measurement,
            direction,
        } => {
            let dir = match direction {
                Direction::Below => "below",
                Direction::Above => "above",
            };
            let frozen = if rs.frozen[*measurement] { " frozen" } else { "" };
            out.push_str(&format!(
                "{pad}leaf m{measurement} {dir} {:?}{frozen}\n",
                rs.theta[*measurement]
            ));
        }
        Node::Logic { op, children } => {
            let kw = match op {
                LogicOp::And => "and",
                LogicOp::Or => "or",
            };
            out.push_str(&format!("{pad}{kw} {{\n"));
            for c in children {
                write_node(out, c, rs, depth + 1);
            }
            out.push_str(&format!("{pad}}}\n"));
        }
    }
}
