//! Minimal `{PLACEHOLDER}` text templates.
//!
//! Placeholder names are `[A-Z0-9_]+`. `{{` and `}}` render literal braces.
//! Substituted values are inserted verbatim, never re-expanded.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template}: unresolved placeholder {{{name}}}")]
    UnresolvedPlaceholder { template: String, name: String },
    #[error("template {template}: unterminated placeholder")]
    UnterminatedPlaceholder { template: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Template {
    name: String,
    body: String,
}

impl Template {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        Template {
            name: name.into(),
            body: body.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Substitutes placeholders from `vars` pairs. Unknown placeholders are
    /// an error; escaped braces pass through.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        let mut chars = self.body.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' => {
                    if chars.peek() == Some(&'{') {
                        chars.next();
                        out.push('{');
                        continue;
                    }
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(n) if n.is_ascii_uppercase() || n.is_ascii_digit() || n == '_' => {
                                name.push(n)
                            }
                            _ => {
                                return Err(TemplateError::UnterminatedPlaceholder {
                                    template: self.name.clone(),
                                })
                            }
                        }
                    }
                    match vars.iter().find(|(k, _)| *k == name) {
                        Some((_, v)) => out.push_str(v),
                        None => {
                            return Err(TemplateError::UnresolvedPlaceholder {
                                template: self.name.clone(),
                                name,
                            })
                        }
                    }
                }
                '}' => {
                    if chars.peek() == Some(&'}') {
                        chars.next();
                    }
                    out.push('}');
                }
                other => out.push(other),
            }
        }
        Ok(out)
    }
}
