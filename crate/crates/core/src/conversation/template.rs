//! Conversation templates with `{name}` placeholders. `{{` and `}}` escape braces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("missing template variables: {}", .0.join(", "))]
    MissingVar(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub template_id: String,
    pub body: String,
    #[serde(default)]
    pub required_vars: Vec<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix("{{") {
            pieces.push(Piece::Text("{"));
            rest = tail;
        } else if let Some(tail) = rest.strip_prefix("}}") {
            pieces.push(Piece::Text("}"));
            rest = tail;
        } else if rest.starts_with('{') {
            match rest[1..].find('}') {
                Some(end) if is_ident(&rest[1..=end]) => {
                    pieces.push(Piece::Var(&rest[1..=end]));
                    rest = &rest[end + 2..];
                }
                _ => {
                    pieces.push(Piece::Text("{"));
                    rest = &rest[1..];
                }
            }
        } else {
            let next = rest[1..].find(['{', '}']).map_or(rest.len(), |i| i + 1);
            pieces.push(Piece::Text(&rest[..next]));
            rest = &rest[next..];
        }
    }
    pieces
}

impl Template {
    pub fn new(template_id: &str, body: &str) -> Self {
        Self {
            template_id: template_id.to_string(),
            body: body.to_string(),
            required_vars: Vec::new(),
        }
    }

    /// Declared variables plus every placeholder in the body.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut vars: BTreeSet<String> = self.required_vars.iter().cloned().collect();
        for p in parse(&self.body) {
            if let Piece::Var(v) = p {
                vars.insert(v.to_string());
            }
        }
        vars
    }

    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let missing: Vec<String> = self
            .variables()
            .into_iter()
            .filter(|v| !vars.contains_key(v))
            .collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingVar(missing));
        }
        let mut out = String::with_capacity(self.body.len());
        for p in parse(&self.body) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(v) => out.push_str(&vars[v]),
            }
        }
        Ok(out)
    }
}

pub fn render_template(t: &Template, vars: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    t.render(vars)
}
