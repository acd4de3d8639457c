use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::PromptError;

/// Version directory of the shipped template assets.
pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateName {
    Decompose,
    Generate,
    Refine,
    Select,
    Caption,
    VerifyStep,
    LogicCheck,
    Summarize,
}

impl TemplateName {
    pub const ALL: [TemplateName; 8] = [
        TemplateName::Decompose,
        TemplateName::Generate,
        TemplateName::Refine,
        TemplateName::Select,
        TemplateName::Caption,
        TemplateName::VerifyStep,
        TemplateName::LogicCheck,
        TemplateName::Summarize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Decompose => "DECOMPOSE",
            TemplateName::Generate => "GENERATE",
            TemplateName::Refine => "REFINE",
            TemplateName::Select => "SELECT",
            TemplateName::Caption => "CAPTION",
            TemplateName::VerifyStep => "VERIFY_STEP",
            TemplateName::LogicCheck => "LOGIC_CHECK",
            TemplateName::Summarize => "SUMMARIZE",
        }
    }

    /// Asset file name, e.g. `verify_step.txt`.
    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str().to_lowercase())
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateName::Decompose => include_str!("../../assets/templates/v1/decompose.txt"),
            TemplateName::Generate => include_str!("../../assets/templates/v1/generate.txt"),
            TemplateName::Refine => include_str!("../../assets/templates/v1/refine.txt"),
            TemplateName::Select => include_str!("../../assets/templates/v1/select.txt"),
            TemplateName::Caption => include_str!("../../assets/templates/v1/caption.txt"),
            TemplateName::VerifyStep => include_str!("../../assets/templates/v1/verify_step.txt"),
            TemplateName::LogicCheck => include_str!("../../assets/templates/v1/logic_check.txt"),
            TemplateName::Summarize => include_str!("../../assets/templates/v1/summarize.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// Placeholder names (`{{NAME}}`) in order of first appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = &after[..end];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
            if seen.insert(name.to_string()) {
                out.push(name.to_string());
            }
            rest = &after[end + 2..];
        } else {
            rest = &rest[start + 2..];
        }
    }
    out
}

/// The eight prompt templates, by default the built-in assets.
#[derive(Debug, Clone)]
pub struct Templates {
    texts: BTreeMap<TemplateName, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Templates {
            texts: TemplateName::ALL
                .into_iter()
                .map(|t| (t, t.builtin().to_string()))
                .collect(),
        }
    }

    /// Built-ins overridden by any `<name>.txt` present in `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut templates = Self::builtin();
        for t in TemplateName::ALL {
            let path = dir.as_ref().join(t.file_name());
            if path.exists() {
                templates.texts.insert(t, std::fs::read_to_string(path)?);
            }
        }
        Ok(templates)
    }

    pub fn text(&self, name: TemplateName) -> &str {
        &self.texts[&name]
    }

    pub fn required_slots(&self, name: TemplateName) -> Vec<String> {
        placeholders(self.text(name))
    }

    /// Substitute every `{{NAME}}` in one left-to-right pass; substituted
    /// text is never rescanned.
    pub fn render(
        &self,
        name: TemplateName,
        slots: &[(&str, &str)],
    ) -> Result<String, PromptError> {
        let map: BTreeMap<&str, &str> = slots.iter().copied().collect();
        for slot in self.required_slots(name) {
            if !map.contains_key(slot.as_str()) {
                return Err(PromptError::MissingSlot {
                    template: name.as_str().to_string(),
                    slot,
                });
            }
        }
        let text = self.text(name);
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}").map(|end| (end, &after[..end])) {
                Some((end, key)) if map.contains_key(key) => {
                    out.push_str(&rest[..start]);
                    out.push_str(map[key]);
                    rest = &after[end + 2..];
                }
                _ => {
                    out.push_str(&rest[..start + 2]);
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

pub fn render_template(name: TemplateName, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    Templates::builtin().render(name, slots)
}
