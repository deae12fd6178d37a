use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::DerivationTree;
use super::{Grammar, GrammarError, Symbol};
use crate::section::Section;

/// Per-section edit programs in the edit expression syntax.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Section, String>", into = "BTreeMap<Section, String>")]
pub struct Phenotype {
    programs: [String; 6],
}

impl Phenotype {
    pub fn new(programs: [String; 6]) -> Self {
        Self { programs }
    }

    /// Every section keeps its base text unchanged.
    pub fn identity() -> Self {
        Self::new(Section::ALL.map(|s| match s {
            Section::Icl => "BASE + DEMOS".to_string(),
            _ => "BASE".to_string(),
        }))
    }

    pub fn program(&self, section: Section) -> &str {
        &self.programs[section.index()]
    }

    pub fn set_program(&mut self, section: Section, program: String) {
        self.programs[section.index()] = program;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Section, &str)> {
        Section::ALL.into_iter().map(|s| (s, self.program(s)))
    }

    /// Stable digest of the six programs.
    pub fn digest(&self) -> String {
        let joined = self.programs.join("\u{1f}");
        crate::seeds::sha256_hex(joined.as_bytes())
    }
}

impl TryFrom<BTreeMap<Section, String>> for Phenotype {
    type Error = String;

    fn try_from(mut map: BTreeMap<Section, String>) -> Result<Self, Self::Error> {
        let mut programs: [String; 6] = Default::default();
        for s in Section::ALL {
            programs[s.index()] = map
                .remove(&s)
                .ok_or_else(|| format!("phenotype is missing the {s} section"))?;
        }
        Ok(Self { programs })
    }
}

impl From<Phenotype> for BTreeMap<Section, String> {
    fn from(p: Phenotype) -> Self {
        Section::ALL
            .into_iter()
            .zip(p.programs)
            .collect()
    }
}

/// Renders the six section programs from a derivation under the edit grammar:
/// each is the terminal yield of the first node carrying the section's root
/// nonterminal.
pub fn render_phenotype(grammar: &Grammar, tree: &DerivationTree) -> Result<Phenotype, GrammarError> {
    let mut programs: [String; 6] = Default::default();
    for section in Section::ALL {
        let root = section.grammar_root();
        let id = grammar
            .nonterminal_id(root)
            .ok_or_else(|| GrammarError::MalformedTree(format!("grammar has no `{root}` rule")))?;
        let index = tree
            .nodes()
            .iter()
            .position(|n| n.symbol == Symbol::NonTerminal(id))
            .ok_or_else(|| GrammarError::MalformedTree(format!("no `{root}` node in tree")))?;
        programs[section.index()] = tree.yield_text(grammar, index);
    }
    Ok(Phenotype { programs })
}
