//! An offline benchmark task for the label oracle.
//!
//! The oracle replies with an answer object only when the format marker
//! appears in the prompt, and case `j` is answered wrongly while poison
//! word `j mod 12` is still present. Every poison sits in its own sentence
//! of the task or output section, which cannot be dropped without losing
//! the marker, so fitness grows only through edits that delete poison
//! sentences or words while keeping the marker and the case placeholder.

use rand::Rng;

use crate::data::Row;
use crate::edit::{Lexicons, ENGLISH_STOPWORDS, ENGLISH_SYNONYMS};
use crate::llm::LabelOracle;
use crate::prompt::BaseTemplate;
use crate::seeds::derive_rng;

pub const POISONS: [&str; 12] = [
    "Xylophone", "Quokka", "Zeppelin", "Marmalade", "Narwhal", "Gazebo", "Kumquat", "Bandicoot", "Tamarind",
    "Ocelot", "Pagoda", "Wombat",
];
pub const FORMAT_MARKER: &str = "JSON";

const NOUNS: [&str; 16] = [
    "river", "lantern", "harbor", "meadow", "copper", "violin", "glacier", "orchard", "falcon", "canyon", "ember",
    "thistle", "pebble", "beacon", "saddle", "willow",
];
const VERBS: [&str; 8] = ["follows", "precedes", "outweighs", "resembles", "contains", "supports", "shadows", "mirrors"];

/// The marker appears twice so a single destructive edit rarely loses it.
pub const TEMPLATE: &str = "\
== PERSONA ==
You are an analyst who checks statements.
== TASK ==
Statement: __TASK_INPUT_0__
Ignore the Gazebo remark.
Decide in JSON whether the statement holds.
Mind the Kumquat clause.
Skip the Bandicoot note.
Drop the Quokka aside.
Forget the Tamarind story.
== OUTPUT ==
Reply in JSON with the keys Thought and Answer.
Avoid Xylophone phrasing.
Omit the Zeppelin hint.
Leave out Marmalade words.
Never cite Narwhal sources.
Disregard the Ocelot list.
Set aside Pagoda and Wombat terms.
== ICL ==
Recall similar statements.
== CONTEXT ==
Background: __CONTEXT__
== COT ==
Think step by step.
";

/// Base template, rows and oracle of the benchmark.
pub struct SyntheticTask {
    pub base: BaseTemplate,
    pub train: Vec<Row>,
    pub val: Vec<Row>,
    pub test: Vec<Row>,
}

impl SyntheticTask {
    /// Deterministic rows with unique statements and balanced labels.
    pub fn generate(train: usize, val: usize, test: usize, seed: u64) -> Self {
        let mut rng = derive_rng(seed, "synthetic", "rows");
        let mut make = |prefix: &str, n: usize| -> Vec<Row> {
            (0..n)
                .map(|i| {
                    let a = NOUNS[rng.gen_range(0..NOUNS.len())];
                    let b = NOUNS[rng.gen_range(0..NOUNS.len())];
                    let v = VERBS[rng.gen_range(0..VERBS.len())];
                    let label = if rng.gen_bool(0.5) { "yes" } else { "no" };
                    Row::new(format!("{prefix}{i}"), format!("the {a} {v} the {b} in case {prefix}{i}."), label)
                })
                .collect()
        };
        let train = make("tr", train);
        let val = make("va", val);
        let test = make("te", test);
        Self {
            base: BaseTemplate::parse(TEMPLATE).expect("synthetic template is valid").with_icl_slots(0),
            train,
            val,
            test,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// The English lexicons with the poisons added as stop words, so
    /// stop-word removal is one of the edits that clears them.
    pub fn lexicons() -> Lexicons {
        let stopwords = format!("{ENGLISH_STOPWORDS}\n{}\n", POISONS.join("\n"));
        Lexicons::from_texts(&stopwords, ENGLISH_SYNONYMS).expect("synthetic lexicons are well-formed")
    }

    pub fn oracle(&self) -> LabelOracle {
        LabelOracle::new(self.rows())
            .with_poisons(POISONS.iter().map(|p| p.to_string()).collect())
            .with_format_marker(Some(FORMAT_MARKER.to_string()))
    }
}
