use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The six functional parts of a prompt template, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Section {
    Persona,
    Task,
    Output,
    Icl,
    Context,
    Cot,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::Persona,
        Section::Task,
        Section::Output,
        Section::Icl,
        Section::Context,
        Section::Cot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Header keyword used in template files (`== PERSONA ==`).
    pub fn header(self) -> &'static str {
        match self {
            Section::Persona => "PERSONA",
            Section::Task => "TASK",
            Section::Output => "OUTPUT",
            Section::Icl => "ICL",
            Section::Context => "CONTEXT",
            Section::Cot => "COT",
        }
    }

    /// Root nonterminal of this section in the edit grammar.
    pub fn grammar_root(self) -> &'static str {
        match self {
            Section::Persona => "sec_persona",
            Section::Task => "sec_task",
            Section::Output => "sec_format",
            Section::Icl => "sec_icl",
            Section::Context => "sec_context",
            Section::Cot => "sec_cot",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Section::Persona => "Persona",
            Section::Task => "Task",
            Section::Output => "Output",
            Section::Icl => "ICL",
            Section::Context => "Context",
            Section::Cot => "CoT",
        };
        f.write_str(name)
    }
}

impl FromStr for Section {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Section::ALL
            .into_iter()
            .find(|sec| sec.header().eq_ignore_ascii_case(s.trim()) || sec.to_string() == s.trim())
            .ok_or_else(|| format!("unknown section `{s}`"))
    }
}
