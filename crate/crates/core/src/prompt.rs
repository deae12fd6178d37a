//! Sectioned prompt templates: parsing, applying phenotypes and binding
//! placeholders for a dataset case.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::Row;
use crate::edit::{execute_program, Bindings, EditContext, EditError, ExecutionTrace};
use crate::grammar::Phenotype;
use crate::placeholder::placeholder_regex;
use crate::section::Section;

pub const TASK_INPUT: &str = "__TASK_INPUT_0__";
pub const CONTEXT: &str = "__CONTEXT__";
pub const DEFAULT_ICL_SLOTS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: duplicate section header `{header}`")]
    DuplicateSection { line: usize, header: String },
    #[error("the {section} section must contain {placeholder}")]
    MissingPlaceholder { section: Section, placeholder: &'static str },
    #[error("{section} program: {source}")]
    Program {
        section: Section,
        #[source]
        source: EditError,
    },
}

/// Built-in templates shipped with the crate.
const BUILTIN: [(&str, &str); 5] = [
    ("pubmedqa", include_str!("../data/templates/pubmedqa.tmpl")),
    ("ethos", include_str!("../data/templates/ethos.tmpl")),
    ("tatqa", include_str!("../data/templates/tatqa.tmpl")),
    ("convfinqa", include_str!("../data/templates/convfinqa.tmpl")),
    ("sentiment", include_str!("../data/templates/sentiment.tmpl")),
];

/// The base prompt: one text per section, with the ICL section holding the
/// prefix that precedes the demonstrations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseTemplate {
    sections: [String; 6],
    icl_slots: usize,
}

fn header_of(line: &str) -> Option<&str> {
    let inner = line.trim().strip_prefix("==")?.strip_suffix("==")?.trim();
    (!inner.is_empty()).then_some(inner)
}

impl BaseTemplate {
    pub fn new(sections: [String; 6]) -> Result<Self, PromptError> {
        let template = Self {
            sections,
            icl_slots: DEFAULT_ICL_SLOTS,
        };
        template.validate()?;
        Ok(template)
    }

    /// Parses a template file. Lines before the first header are ignored;
    /// a missing header leaves its section empty.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: [Option<Vec<&str>>; 6] = Default::default();
        let mut current: Option<Section> = None;
        for (i, line) in text.lines().enumerate() {
            if let Some(section) = header_of(line).and_then(|h| h.parse::<Section>().ok()) {
                if sections[section.index()].is_some() {
                    return Err(PromptError::DuplicateSection {
                        line: i + 1,
                        header: section.header().to_string(),
                    });
                }
                sections[section.index()] = Some(Vec::new());
                current = Some(section);
            } else if let Some(section) = current {
                sections[section.index()]
                    .as_mut()
                    .expect("current section is open")
                    .push(line.trim_end_matches('\r'));
            }
        }
        Self::new(sections.map(|lines| {
            lines
                .map(|l| l.join("\n").trim_end_matches('\n').to_string())
                .unwrap_or_default()
        }))
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::parse(text).expect("built-in templates are valid"))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    fn validate(&self) -> Result<(), PromptError> {
        if !self.section(Section::Task).contains(TASK_INPUT) {
            return Err(PromptError::MissingPlaceholder {
                section: Section::Task,
                placeholder: TASK_INPUT,
            });
        }
        let context = self.section(Section::Context);
        if !context.is_empty() && !context.contains(CONTEXT) {
            return Err(PromptError::MissingPlaceholder {
                section: Section::Context,
                placeholder: CONTEXT,
            });
        }
        Ok(())
    }

    pub fn with_icl_slots(mut self, slots: usize) -> Self {
        self.icl_slots = slots;
        self
    }

    pub fn icl_slots(&self) -> usize {
        self.icl_slots
    }

    pub fn section(&self, section: Section) -> &str {
        &self.sections[section.index()]
    }

    /// `__ICL_0__ .. __ICL_{k-1}__`.
    pub fn demo_placeholders(&self) -> Vec<String> {
        (0..self.icl_slots).map(|i| format!("__ICL_{i}__")).collect()
    }

    /// The unedited prompt text.
    pub fn text(&self) -> String {
        let demos = self.demo_placeholders();
        let icl_parts: Vec<&str> = std::iter::once(self.section(Section::Icl))
            .chain(demos.iter().map(String::as_str))
            .filter(|p| !p.is_empty())
            .collect();
        let icl = icl_parts.join("\n");
        let texts: Vec<&str> = Section::ALL
            .iter()
            .map(|&s| if s == Section::Icl { icl.as_str() } else { self.section(s) })
            .collect();
        join_sections(&texts)
    }

    /// Writes the template back in file form.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for s in Section::ALL {
            out.push_str(&format!("== {} ==\n", s.header()));
            let body = self.section(s);
            if !body.is_empty() {
                out.push_str(body);
                out.push('\n');
            }
        }
        out
    }
}

fn join_sections(texts: &[&str]) -> String {
    texts
        .iter()
        .filter(|t| !t.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join("\n")
}

/// A candidate prompt after executing a phenotype on a base template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub sections: [String; 6],
    pub text: String,
    pub phenotype_digest: String,
}

/// Executes each section program on its own section text and concatenates
/// the results in section order.
pub fn apply_phenotype(
    base: &BaseTemplate,
    phenotype: &Phenotype,
    ctx: &EditContext<'_>,
) -> Result<(RenderedPrompt, ExecutionTrace), PromptError> {
    let demos = base.demo_placeholders();
    let mut trace = ExecutionTrace::default();
    let mut sections: [String; 6] = Default::default();
    for (section, program) in phenotype.iter() {
        let bindings = Bindings {
            base: base.section(section),
            demos: if section == Section::Icl { &demos } else { &[] },
        };
        let (value, t) =
            execute_program(program, bindings, ctx).map_err(|source| PromptError::Program { section, source })?;
        sections[section.index()] = value.render();
        trace.merge(t);
    }
    let text = join_sections(&sections.each_ref().map(String::as_str));
    Ok((
        RenderedPrompt {
            sections,
            text,
            phenotype_digest: phenotype.digest(),
        },
        trace,
    ))
}

fn word_set(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard_sets(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Jaccard similarity of lowercased word sets. Two empty texts score 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    jaccard_sets(&word_set(a), &word_set(b))
}

/// The `k` training rows most similar to `input`, most similar first; ties
/// keep dataset order. A row whose id equals `exclude_id` is skipped.
pub fn retrieve_icl<'a>(input: &str, train: &'a [Row], k: usize, exclude_id: Option<&str>) -> Vec<&'a Row> {
    let query = word_set(input);
    let mut scored: Vec<(f64, &Row)> = train
        .iter()
        .filter(|r| Some(r.id.as_str()) != exclude_id)
        .map(|r| (jaccard_sets(&query, &word_set(&r.input)), r))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(k).map(|(_, r)| r).collect()
}

/// `Input: <input>` followed by the label in the answer JSON shape.
pub fn format_demo(row: &Row) -> String {
    format!(
        "Input: {}\nOutput: {{'Answer': '{}'}}",
        row.input,
        row.label.replace('\'', "\\'")
    )
}

/// Substitutes every placeholder for one case. Unknown or unbound
/// placeholders become empty strings.
pub fn instantiate(prompt: &str, case: &Row, demos: &[&Row]) -> String {
    placeholder_regex()
        .replace_all(prompt, |caps: &regex::Captures<'_>| {
            let name = &caps[0];
            let inner = &name[2..name.len() - 2];
            if name == TASK_INPUT {
                return case.input.clone();
            }
            if name == CONTEXT {
                return case.context.clone().unwrap_or_default();
            }
            if let Some(i) = inner.strip_prefix("ICL_").and_then(|i| i.parse::<usize>().ok()) {
                return match demos.get(i) {
                    Some(row) => format_demo(row),
                    None => {
                        warn!("no demonstration bound to {name}");
                        String::new()
                    }
                };
            }
            if let Some(field) = inner
                .strip_prefix("TASK_INPUT_")
                .and_then(|i| case.field(&format!("input_{i}")))
            {
                return field;
            }
            warn!("unbound placeholder {name}");
            String::new()
        })
        .into_owned()
}
