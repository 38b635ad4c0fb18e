//! Prompt templates with `{placeholder}` variables and an append-only store.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: placeholder {{{placeholder}}} occurs {count} times, expected once")]
    PlaceholderCount {
        template: String,
        placeholder: String,
        count: usize,
    },
    #[error("template {template}: missing binding for {{{placeholder}}}")]
    MissingBinding { template: String, placeholder: String },
    #[error("template {template}: unknown placeholder {{{placeholder}}} in bindings")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("template {0} is already registered")]
    Duplicate(String),
    #[error("no template named {0}")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' ' || c == '_')
        && !s.starts_with(' ')
        && !s.ends_with(' ')
}

/// `{name}` occurrences in `body` whose name is placeholder-shaped.
fn scan(body: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = body[from..].find('{').map(|i| i + from) {
        match body[open + 1..].find(['{', '}']).map(|i| i + open + 1) {
            Some(close) if body.as_bytes()[close] == b'}' && is_placeholder_name(&body[open + 1..close]) => {
                out.push((open, close + 1, &body[open + 1..close]));
                from = close + 1;
            }
            _ => from = open + 1,
        }
    }
    out
}

impl PromptTemplate {
    /// Template whose required placeholders are every `{name}` in the body.
    pub fn new(template_id: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let required = scan(&body).into_iter().map(|(_, _, n)| n.to_string()).collect();
        Self::with_required(template_id, body, required)
    }

    /// Template with an explicit placeholder set. Braced text not in the set
    /// is literal.
    pub fn with_required(
        template_id: impl Into<String>,
        body: impl Into<String>,
        required: BTreeSet<String>,
    ) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        let body = body.into();
        let found = scan(&body);
        for name in &required {
            let count = found.iter().filter(|(_, _, n)| n == name).count();
            if count != 1 {
                return Err(TemplateError::PlaceholderCount {
                    template: template_id,
                    placeholder: name.clone(),
                    count,
                });
            }
        }
        Ok(Self {
            template_id,
            body,
            required_placeholders: required,
        })
    }

    /// Single-pass substitution: bound values are copied verbatim and never
    /// scanned for placeholders.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        if let Some(unknown) = bindings.keys().find(|k| !self.required_placeholders.contains(*k)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: self.template_id.clone(),
                placeholder: unknown.clone(),
            });
        }
        if let Some(missing) = self.required_placeholders.iter().find(|p| !bindings.contains_key(*p)) {
            return Err(TemplateError::MissingBinding {
                template: self.template_id.clone(),
                placeholder: missing.clone(),
            });
        }
        let mut out = String::with_capacity(self.body.len());
        let mut last = 0;
        for (start, end, name) in scan(&self.body) {
            if let Some(value) = bindings.get(name) {
                out.push_str(&self.body[last..start]);
                out.push_str(value);
                last = end;
            }
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

/// Convenience for building binding maps.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Append-only registry of templates. Registered templates are immutable.
#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    templates: BTreeMap<String, Arc<PromptTemplate>>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, template: PromptTemplate) -> Result<Arc<PromptTemplate>, TemplateError> {
        if self.templates.contains_key(&template.template_id) {
            return Err(TemplateError::Duplicate(template.template_id));
        }
        let t = Arc::new(template);
        self.templates.insert(t.template_id.clone(), t.clone());
        Ok(t)
    }

    pub fn get(&self, id: &str) -> Result<Arc<PromptTemplate>, TemplateError> {
        self.templates.get(id).cloned().ok_or_else(|| TemplateError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_substitution() {
        let t = PromptTemplate::new("q", "Q: {user utterance}").unwrap();
        assert_eq!(t.render(&bindings([("user utterance", "hi".to_string())])).unwrap(), "Q: hi");
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new("q", "Q: {user utterance} P: {paragraphs}").unwrap();
        let out = t
            .render(&bindings([
                ("user utterance", "say {paragraphs}".to_string()),
                ("paragraphs", "ctx".to_string()),
            ]))
            .unwrap();
        assert_eq!(out, "Q: say {paragraphs} P: ctx");
    }

    #[test]
    fn missing_and_unknown_bindings() {
        let t = PromptTemplate::new("q", "Q: {user utterance}").unwrap();
        assert_eq!(
            t.render(&BTreeMap::new()).unwrap_err(),
            TemplateError::MissingBinding {
                template: "q".into(),
                placeholder: "user utterance".into()
            }
        );
        let err = t
            .render(&bindings([("user utterance", "a".into()), ("paragraphs", "b".into())]))
            .unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }));
    }

    #[test]
    fn duplicate_placeholder_is_rejected() {
        let err = PromptTemplate::new("d", "{paragraphs} and {paragraphs}").unwrap_err();
        assert!(matches!(err, TemplateError::PlaceholderCount { count: 2, .. }));
    }

    #[test]
    fn literal_braces_survive() {
        let body = "JSON like {\"a\": 1} or {Not A Name} stays";
        let t = PromptTemplate::new("lit", body).unwrap();
        assert!(t.required_placeholders.is_empty());
        assert_eq!(t.render(&BTreeMap::new()).unwrap(), body);
    }

    #[test]
    fn store_is_append_only() {
        let mut store = TemplateStore::new();
        store.register(PromptTemplate::new("a", "x").unwrap()).unwrap();
        assert_eq!(
            store.register(PromptTemplate::new("a", "y").unwrap()).unwrap_err(),
            TemplateError::Duplicate("a".into())
        );
        assert_eq!(store.get("a").unwrap().body, "x");
        assert!(store.get("b").is_err());
    }

    proptest! {
        // Bound values free of braces can be recovered from the output, so
        // distinct binding sets render to distinct prompts.
        #[test]
        fn rendering_is_injective(a in "[a-z .]{0,12}", b in "[a-z .]{0,12}", c in "[a-z .]{0,12}", d in "[a-z .]{0,12}") {
            let t = PromptTemplate::new("i", "<{user utterance}|{paragraphs}>").unwrap();
            let r1 = t.render(&bindings([("user utterance", a.clone()), ("paragraphs", b.clone())])).unwrap();
            let r2 = t.render(&bindings([("user utterance", c.clone()), ("paragraphs", d.clone())])).unwrap();
            prop_assert_eq!(r1 == r2, a == c && b == d);
        }
    }
}
