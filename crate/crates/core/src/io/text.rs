//! Small line-oriented formats: schema files, constraint files, `VAR=level` lists.

use crate::error::{Error, Result};
use crate::model::{Schema, StructuralConstraint, Variable};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.split('#').next().unwrap_or("").trim()))
        .filter(|(_, line)| !line.is_empty())
}

/// One variable per line: `name: level1, level2, ...`. `#` starts a comment.
pub fn parse_schema(text: &str) -> Result<Vec<Variable>> {
    let mut vars = Vec::new();
    for (no, line) in content_lines(text) {
        let (name, levels) = line
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("schema line {no}: expected 'name: level, ...'")))?;
        let levels: Vec<&str> = levels.split(',').map(str::trim).collect();
        if name.trim().is_empty() || levels.iter().any(|l| l.is_empty()) {
            return Err(Error::Parse(format!("schema line {no}: empty name or level")));
        }
        vars.push(Variable::new(name.trim(), levels));
    }
    if vars.is_empty() {
        return Err(Error::Parse("schema file declares no variables".into()));
    }
    Ok(vars)
}

fn split_assignment(item: &str) -> Result<(&str, &str)> {
    let (var, level) =
        item.split_once('=').ok_or_else(|| Error::Parse(format!("expected VAR=level, found '{item}'")))?;
    Ok((var.trim(), level.trim()))
}

/// Comma-separated `VAR=level` pairs resolved against a schema.
pub fn parse_assignments(text: &str, schema: &Schema) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (var, level) = split_assignment(item)?;
            let v = schema.var_index(var)?;
            Ok((v, schema.level_index(v, level)?))
        })
        .collect()
}

/// `IF var=level THEN var=level`, one per line; keywords are case-insensitive.
pub fn parse_constraints(text: &str, schema: &Schema) -> Result<Vec<StructuralConstraint>> {
    let mut out = Vec::new();
    for (no, line) in content_lines(text) {
        let words: Vec<&str> = line.split_whitespace().collect();
        let err = || Error::Parse(format!("constraints line {no}: expected 'IF var=level THEN var=level'"));
        let then = words.iter().position(|w| w.eq_ignore_ascii_case("THEN")).ok_or_else(err)?;
        if words.first().is_none_or(|w| !w.eq_ignore_ascii_case("IF")) || then < 2 || then + 1 >= words.len() {
            return Err(err());
        }
        let trigger = split_assignment(&words[1..then].concat()).map(|(a, b)| (a.to_string(), b.to_string()))?;
        let consequence = split_assignment(&words[then + 1..].concat()).map(|(a, b)| (a.to_string(), b.to_string()))?;
        out.push(StructuralConstraint::from_names(schema, (&trigger.0, &trigger.1), (&consequence.0, &consequence.1))?);
    }
    Ok(out)
}

/// Comma-separated variable names.
pub fn parse_order(text: &str) -> Vec<String> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}
