use std::fs;
use std::path::Path;

use gpo::app::RunConfig;
use gpo::data::{Dataset, Split};
use gpo::synthetic::{SyntheticTask, FORMAT_MARKER, POISONS, TEMPLATE};

/// Writes the synthetic task into `dir` and returns a config for it.
pub fn synthetic_config(dir: &Path, generations: usize) -> RunConfig {
    let task = SyntheticTask::generate(40, 24, 12, 3);
    for (split, rows) in [(Split::Train, &task.train), (Split::Val, &task.val), (Split::Test, &task.test)] {
        let text = Dataset::new(split, rows.clone()).unwrap().to_jsonl();
        fs::write(dir.join(format!("{split}.jsonl")), text).unwrap();
    }
    fs::write(dir.join("synthetic.tmpl"), TEMPLATE).unwrap();
    let stop = format!("{}\n{}\n", gpo::edit::ENGLISH_STOPWORDS, POISONS.join("\n"));
    fs::write(dir.join("stopwords.txt"), stop).unwrap();
    let poisons: Vec<String> = POISONS.iter().map(|p| format!("\"{p}\"")).collect();
    let text = format!(
        r#"seed = 5
output_dir = "out"
[task]
labels = ["yes", "no"]
icl_k = 2
icl_slots = 0
template = "synthetic.tmpl"
train = "train.jsonl"
val = "val.jsonl"
test = "test.jsonl"
[lexicons]
stopwords = "stopwords.txt"
[gateway]
backend = "label_oracle"
editor_backend = "truncate"
[gateway.oracle]
poisons = [{}]
format_marker = "{FORMAT_MARKER}"
[gp]
population = 8
offspring = 8
generations = {generations}
sample_rows = 10
[surrogate]
tune = false
[surrogate.training]
submodels = 3
epochs = 20
"#,
        poisons.join(", ")
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

