//! A small recursive-descent checker for the DOT subset the renderer emits:
//!
//! ```text
//! graph  := ("digraph" | "graph") ID? "{" stmt* "}"
//! stmt   := (ID "=" ID | ("node" | "edge" | "graph") attrs | ID (EDGEOP ID)* attrs?) ";"?
//! attrs  := "[" (ID "=" ID (","|";")?)* "]"
//! ```
//!
//! IDs are identifiers, numerals or double-quoted strings with backslash escapes.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Id(String),
    Sym(char),
    Arrow,
    Line,
}

fn lex(text: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            _ if c.is_whitespace() => i += 1,
            '{' | '}' | '[' | ']' | '=' | ';' | ',' => {
                out.push(Tok::Sym(c));
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Tok::Arrow);
                i += 2;
            }
            '-' if chars.get(i + 1) == Some(&'-') => {
                out.push(Tok::Line);
                i += 2;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err("unterminated string".into()),
                        Some('"') => break,
                        Some('\\') => {
                            s.push(*chars.get(i + 1).ok_or("dangling escape")?);
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Id(s));
            }
            _ if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '#' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                if c == '#' {
                    return Err("unquoted '#'".into());
                }
                let word: String = chars[start..i].iter().collect();
                let numeral = word.chars().next().is_some_and(|ch| ch.is_ascii_digit() || ch == '.');
                if numeral && word.parse::<f64>().is_err() {
                    return Err(format!("bad numeral '{word}'"));
                }
                out.push(Tok::Id(word));
            }
            _ => return Err(format!("unexpected character '{c}'")),
        }
    }
    Ok(out)
}

pub type Attrs = Vec<(String, String)>;

/// Nodes and edges of a validated graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DotGraph {
    pub directed: bool,
    pub nodes: Vec<(String, Attrs)>,
    pub edges: Vec<(String, String, Attrs)>,
}

impl DotGraph {
    pub fn attr<'a>(&'a self, node: &str, key: &str) -> Option<&'a str> {
        self.nodes
            .iter()
            .find(|(n, _)| n == node)
            .and_then(|(_, attrs)| attrs.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().map(|(a, b, _)| (a.clone(), b.clone())).collect()
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), String> {
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            other => Err(format!("expected '{c}', found {other:?}")),
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(format!("expected identifier, found {other:?}")),
        }
    }

    fn attrs(&mut self) -> Result<Attrs, String> {
        self.expect_sym('[')?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Sym(']')) => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(Tok::Id(_)) => {
                    let k = self.id()?;
                    self.expect_sym('=')?;
                    let v = self.id()?;
                    out.push((k, v));
                    if matches!(self.peek(), Some(Tok::Sym(',' | ';'))) {
                        self.pos += 1;
                    }
                }
                other => return Err(format!("bad attribute list at {other:?}")),
            }
        }
    }
}

pub fn validate(text: &str) -> Result<DotGraph, String> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut g = DotGraph::default();
    match p.id()?.as_str() {
        "digraph" => g.directed = true,
        "graph" => g.directed = false,
        other => return Err(format!("expected graph keyword, found '{other}'")),
    }
    if matches!(p.peek(), Some(Tok::Id(_))) {
        p.pos += 1;
    }
    p.expect_sym('{')?;
    loop {
        match p.peek() {
            Some(Tok::Sym('}')) => {
                p.pos += 1;
                break;
            }
            Some(Tok::Id(_)) => {
                let first = p.id()?;
                if matches!(first.as_str(), "node" | "edge" | "graph") && matches!(p.peek(), Some(Tok::Sym('['))) {
                    p.attrs()?;
                } else if matches!(p.peek(), Some(Tok::Sym('='))) {
                    p.pos += 1;
                    p.id()?;
                } else {
                    let mut chain = vec![first];
                    while let Some(op @ (Tok::Arrow | Tok::Line)) = p.peek().cloned() {
                        if (op == Tok::Arrow) != g.directed {
                            return Err("edge operator does not match graph kind".into());
                        }
                        p.pos += 1;
                        chain.push(p.id()?);
                    }
                    let attrs = if matches!(p.peek(), Some(Tok::Sym('['))) { p.attrs()? } else { Vec::new() };
                    if chain.len() == 1 {
                        g.nodes.push((chain.pop().unwrap(), attrs));
                    } else {
                        for w in chain.windows(2) {
                            g.edges.push((w[0].clone(), w[1].clone(), attrs.clone()));
                        }
                    }
                }
                if matches!(p.peek(), Some(Tok::Sym(';'))) {
                    p.pos += 1;
                }
            }
            other => return Err(format!("unexpected token {other:?}")),
        }
    }
    if p.pos != p.toks.len() {
        return Err("trailing tokens after the graph".into());
    }
    Ok(g)
}

/// Validated and every edge endpoint declared as a node.
pub fn validate_closed(text: &str) -> Result<DotGraph, String> {
    let g = validate(text)?;
    let declared: BTreeSet<&str> = g.nodes.iter().map(|(n, _)| n.as_str()).collect();
    for (a, b, _) in &g.edges {
        if !declared.contains(a.as_str()) || !declared.contains(b.as_str()) {
            return Err(format!("edge {a} -> {b} uses an undeclared node"));
        }
    }
    Ok(g)
}
