use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::ProtocolError;

/// The prompts the agents send, one template each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptKind {
    Synthesis,
    Expansion,
    Conciseness,
    Completeness,
    Refinement,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::Synthesis,
        PromptKind::Expansion,
        PromptKind::Conciseness,
        PromptKind::Completeness,
        PromptKind::Refinement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Synthesis => "synthesis",
            PromptKind::Expansion => "expansion",
            PromptKind::Conciseness => "conciseness",
            PromptKind::Completeness => "completeness",
            PromptKind::Refinement => "refinement",
        }
    }

    fn default_source(self) -> &'static str {
        match self {
            PromptKind::Synthesis => include_str!("../../templates/synthesis.prompt"),
            PromptKind::Expansion => include_str!("../../templates/expansion.prompt"),
            PromptKind::Conciseness => include_str!("../../templates/conciseness.prompt"),
            PromptKind::Completeness => include_str!("../../templates/completeness.prompt"),
            PromptKind::Refinement => include_str!("../../templates/refinement.prompt"),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named sections of a template file, in the file's own order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    sections: BTreeMap<String, String>,
}

const SECTION_NAMES: &[&str] = &["role", "definitions", "rules", "task", "output_format"];

impl Template {
    /// Parses `@@ <section>` delimited text. Text before the first marker is
    /// ignored, so files may start with a comment.
    pub fn parse(name: &str, source: &str) -> Result<Self, ProtocolError> {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        for line in source.lines() {
            if let Some(rest) = line.strip_prefix("@@") {
                let section = rest.trim().to_string();
                if !SECTION_NAMES.contains(&section.as_str()) {
                    return Err(ProtocolError::Template(format!(
                        "{name}: unknown section `{section}`"
                    )));
                }
                if let Some((s, body)) = current.take() {
                    sections.insert(s, body.join("\n").trim().to_string());
                }
                if sections.contains_key(&section) {
                    return Err(ProtocolError::Template(format!(
                        "{name}: section `{section}` appears twice"
                    )));
                }
                current = Some((section, Vec::new()));
            } else if let Some((_, body)) = current.as_mut() {
                body.push(line);
            }
        }
        if let Some((s, body)) = current.take() {
            sections.insert(s, body.join("\n").trim().to_string());
        }
        if !sections.contains_key("role") {
            return Err(ProtocolError::Template(format!("{name}: missing `role` section")));
        }
        Ok(Self { sections })
    }

    /// A section with `{{placeholder}}` markers filled from `values`.
    pub fn section(
        &self,
        name: &str,
        values: &BTreeMap<&str, String>,
    ) -> Result<Option<String>, ProtocolError> {
        self.sections
            .get(name)
            .map(|text| substitute(text, values))
            .transpose()
    }
}

fn substitute(text: &str, values: &BTreeMap<&str, String>) -> Result<String, ProtocolError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| ProtocolError::Template("unterminated `{{` marker".into()))?;
        let key = after[..close].trim();
        let value = values
            .get(key)
            .ok_or_else(|| ProtocolError::Template(format!("unknown placeholder `{key}`")))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// The five prompt templates; defaults are compiled in and any of them can
/// be replaced from a directory of `<kind>.prompt` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<PromptKind, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = PromptKind::ALL
            .into_iter()
            .map(|k| {
                let t = Template::parse(k.as_str(), k.default_source())
                    .expect("bundled templates are well formed");
                (k, t)
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    /// Defaults, overridden by whichever `<kind>.prompt` files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, ProtocolError> {
        let mut set = Self::default();
        for kind in PromptKind::ALL {
            let path = dir.join(format!("{kind}.prompt"));
            if !path.exists() {
                continue;
            }
            let source = std::fs::read_to_string(&path).map_err(|e| {
                ProtocolError::Template(format!("cannot read {}: {e}", path.display()))
            })?;
            set.templates
                .insert(kind, Template::parse(&path.display().to_string(), &source)?);
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind) -> &Template {
        &self.templates[&kind]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_placeholders() {
        let t = Template::parse("t", "preamble\n@@ role\nHi {{ who }}.\n\n@@ task\nGo.\n").unwrap();
        let mut v = BTreeMap::new();
        v.insert("who", "there".to_string());
        assert_eq!(t.section("role", &v).unwrap().unwrap(), "Hi there.");
        assert_eq!(t.section("task", &v).unwrap().unwrap(), "Go.");
        assert_eq!(t.section("rules", &v).unwrap(), None);
        assert!(t.section("role", &BTreeMap::new()).is_err());
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(Template::parse("t", "@@ nope\nx").is_err());
        assert!(Template::parse("t", "@@ task\nx").is_err());
        assert!(Template::parse("t", "@@ role\nx\n@@ role\ny").is_err());
    }

    #[test]
    fn bundled_templates_parse() {
        let set = TemplateSet::default();
        for k in PromptKind::ALL {
            assert!(set.get(k).sections.contains_key("role"));
        }
    }
}
