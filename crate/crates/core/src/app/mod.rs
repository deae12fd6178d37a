//! Configuration, persistence and the four workflows behind the CLI.
//!
//! Every artifact a command writes carries the digest of the config that
//! produced it: JSON files in a `config_digest` field, text files in a
//! leading `#gpo-config:` line.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use config::{
    BackendKind, GatewayConfig, Gateways, LexiconConfig, OracleConfig, RunConfig, SurrogateConfig, TaskConfig,
    TaskData, BUILTIN_PREFIX,
};
pub use report::{curve_from_journal, curve_tsv, parse_curve_tsv, CurvePoint, RunReport};

use crate::data::{DataError, Split};
use crate::edit::{EditContext, EditError, Rewriter};
use crate::g3p::{Checkpoint, Engine, EngineError, Journal, SavedIndividual};
use crate::grammar::GrammarError;
use crate::llm::{CallStats, LlmError, LlmRewriter};
use crate::local_search::{LocalSearch, LocalSearchError, LocalSearchOutcome};
use crate::prompt::PromptError;
use crate::surrogate::{embed_all, tune, Hyperparams, SurrogateEnsemble, SurrogateError, MIN_TUNE_POINTS};
use crate::task::{CaseResult, Evaluator, TaskError};

/// First-line prefix stamping text artifacts with their config digest.
pub const DIGEST_HEADER: &str = "#gpo-config: ";

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const ELITE_FILE: &str = "elite.json";
pub const PROMPT_FILE: &str = "prompt.txt";
pub const REPORT_FILE: &str = "report.json";
pub const CURVE_FILE: &str = "fitness_curve.tsv";
pub const STATS_FILE: &str = "stats.json";
pub const SURROGATE_FILE: &str = "surrogate.bin";
pub const REFINED_PROMPT_FILE: &str = "refined_prompt.txt";
pub const CANDIDATES_FILE: &str = "candidates.tsv";
pub const LOCAL_SEARCH_FILE: &str = "local_search.json";

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    LocalSearch(#[from] LocalSearchError),
    #[error("{0}")]
    Artifact(String),
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), AppError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Artifact(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

/// Text artifact with its digest header.
pub fn stamped(digest: &str, body: &str) -> String {
    format!("{DIGEST_HEADER}{digest}\n{body}")
}

/// Splits a stamped text into its digest and body. Unstamped text has no
/// digest and is returned whole.
pub fn unstamp(text: &str) -> (Option<&str>, &str) {
    match text.strip_prefix(DIGEST_HEADER) {
        Some(rest) => match rest.split_once('\n') {
            Some((digest, body)) => (Some(digest.trim_end_matches('\r')), body),
            None => (Some(rest), ""),
        },
        None => (None, text),
    }
}

fn rewriter(config: &RunConfig, gateways: &Gateways) -> Option<LlmRewriter> {
    config
        .gateway
        .llm_edits
        .then(|| LlmRewriter::new(gateways.editor.clone(), gateways.editor_model.clone()))
}

fn edit_context<'a>(lexicons: &'a crate::edit::Lexicons, rewriter: &'a Option<LlmRewriter>) -> EditContext<'a> {
    let ctx = EditContext::new(lexicons);
    match rewriter {
        Some(r) => ctx.with_rewriter(r as &dyn Rewriter),
        None => ctx,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub config_digest: String,
    pub target: CallStats,
    pub editor: Option<CallStats>,
}

fn stats_file(digest: &str, gateways: &Gateways) -> StatsFile {
    let separate = !std::sync::Arc::ptr_eq(&gateways.target, &gateways.editor);
    StatsFile {
        config_digest: digest.to_string(),
        target: gateways.target.stats(),
        editor: separate.then(|| gateways.editor.stats()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteFile {
    pub config_digest: String,
    pub elite: SavedIndividual,
}

/// Runs the evolutionary search and writes the journal, checkpoint, elite,
/// final prompt, report, fitness curve and call statistics to the output
/// directory. With `resume`, continues from that checkpoint.
pub fn cmd_optimize(config: &RunConfig, resume: Option<&Path>) -> Result<RunReport, AppError> {
    let digest = config.digest();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let data = config.data(&[Split::Train, Split::Val])?;
    let base = config.template()?;
    let grammar = config.grammar()?;
    let lexicons = config.lexicons()?;
    let gateways = config.gateways(&data, true)?;
    let rewriter = rewriter(config, &gateways);
    let spec = config.task_spec();
    let engine = Engine {
        config: &config.gp,
        grammar: &grammar,
        base: &base,
        edit: edit_context(&lexicons, &rewriter),
        evaluator: Evaluator {
            task: &spec,
            gateway: &gateways.target,
            model: &gateways.target_model,
            train: &data.train,
        },
        train: &data.train,
        val: &data.val,
        master_seed: config.seed,
        config_digest: digest.clone(),
    };
    let journal_path = out.join(JOURNAL_FILE);
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let (mut journal, state) = match resume {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            if cp.config_digest != digest {
                return Err(AppError::Config(format!(
                    "checkpoint {} was written by config {}, not {digest}",
                    path.display(),
                    cp.config_digest
                )));
            }
            info!("resuming at generation {}", cp.next_generation);
            let journal = Journal::resume(&journal_path, cp.journal_len)?;
            (journal, Some(engine.restore(cp)?))
        }
        None => (Journal::create(&journal_path)?, None),
    };
    let outcome = engine.run(&mut journal, Some(&checkpoint_path), state)?;
    journal.flush()?;

    let final_prompt = outcome.elite.prompt_text().unwrap_or_default().to_string();
    let test_score = if data.test.is_empty() {
        None
    } else {
        Some(engine.evaluator.evaluate(&final_prompt, &data.test)?.fitness)
    };
    let report = RunReport::new(&digest, config.seed, &outcome, final_prompt.clone(), test_score);
    write_json(
        &out.join(ELITE_FILE),
        &EliteFile {
            config_digest: digest.clone(),
            elite: outcome.elite.save(),
        },
    )?;
    write(&out.join(PROMPT_FILE), stamped(&digest, &final_prompt))?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write(&out.join(CURVE_FILE), curve_tsv(&digest, &report.curve))?;
    write_json(&out.join(STATS_FILE), &stats_file(&digest, &gateways))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchReport {
    pub config_digest: String,
    pub hyperparams: Hyperparams,
    pub tuned: bool,
    pub training_points: usize,
    pub outcome: LocalSearchOutcome,
}

/// Tab-separated candidate ranking, best first.
pub fn candidates_tsv(digest: &str, outcome: &LocalSearchOutcome) -> String {
    let mut out = String::from("rank\tdigest\tincumbent\tpredicted_mean\tpredicted_variance\tval\ttrain\tcombined\n");
    for (i, c) in outcome.ranking.iter().enumerate() {
        let (m, v) = c
            .prediction
            .map(|p| (p.mean.to_string(), p.variance.to_string()))
            .unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{m}\t{v}\t{}\t{}\t{}\n",
            i + 1,
            c.digest,
            c.is_incumbent,
            c.val,
            c.train,
            c.combined
        ));
    }
    stamped(digest, &out)
}

/// Trains the surrogate on the journal next to `checkpoint` and refines the
/// checkpoint's elite by one surrogate-screened neighbourhood pass.
pub fn cmd_localsearch(config: &RunConfig, checkpoint: &Path) -> Result<LocalSearchReport, AppError> {
    let digest = config.digest();
    let out = &config.output_dir;
    let cp = Checkpoint::load(checkpoint)?;
    if cp.config_digest != digest {
        warn!(
            "checkpoint was written by config {}, local search runs under {digest}",
            cp.config_digest
        );
    }
    let elite = cp
        .elite
        .ok_or_else(|| AppError::Artifact(format!("{} holds no elite yet", checkpoint.display())))?;
    let journal_path = checkpoint
        .parent()
        .map(|d| d.join(JOURNAL_FILE))
        .unwrap_or_else(|| PathBuf::from(JOURNAL_FILE));
    let records = Journal::read(&journal_path)?;
    let records = &records[..cp.journal_len.min(records.len())];
    let texts: Vec<(&str, f64)> = records.iter().map(|r| (r.prompt.as_str(), r.f_train)).collect();

    let api_key = std::env::var(&config.gateway.api_key_env).ok();
    let embedder = config.surrogate.embedder.build(api_key);
    let s = &config.surrogate;
    let (hyperparams, tuned) = if s.tune && texts.len() >= MIN_TUNE_POINTS {
        let samples = embed_all(embedder.as_ref(), &texts)?;
        (tune(&samples, &s.training, config.seed)?.chosen, true)
    } else {
        if s.tune {
            warn!(
                "{} journal records are too few to tune (need {MIN_TUNE_POINTS}); using the configured hyperparameters",
                texts.len()
            );
        }
        (s.hyperparams.clone(), false)
    };
    let ensemble = SurrogateEnsemble::fit(embedder.as_ref(), &texts, &hyperparams, &s.training, config.seed)?;
    ensemble.save(&out.join(SURROGATE_FILE))?;

    let data = config.data(&[Split::Train, Split::Val])?;
    let base = config.template()?;
    let lexicons = config.lexicons()?;
    let gateways = config.gateways(&data, true)?;
    let rewriter = rewriter(config, &gateways);
    let spec = config.task_spec();
    let search = LocalSearch {
        config: &config.local_search,
        base: &base,
        edit: edit_context(&lexicons, &rewriter),
        evaluator: Evaluator {
            task: &spec,
            gateway: &gateways.target,
            model: &gateways.target_model,
            train: &data.train,
        },
        train: &data.train,
        val: &data.val,
        embedder: embedder.as_ref(),
        ensemble: &ensemble,
        master_seed: config.seed,
    };
    let outcome = search.run(&elite.phenotype)?;
    if outcome.no_sites {
        info!("the elite has no index parameter; it is returned unchanged");
    }
    let report = LocalSearchReport {
        config_digest: digest.clone(),
        hyperparams,
        tuned,
        training_points: texts.len(),
        outcome,
    };
    let best = report.outcome.best.prompt.clone().unwrap_or_default();
    write(&out.join(REFINED_PROMPT_FILE), stamped(&digest, &best))?;
    write(&out.join(CANDIDATES_FILE), candidates_tsv(&digest, &report.outcome))?;
    write_json(&out.join(LOCAL_SEARCH_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: Split,
    pub score: f64,
    pub parse_failures: usize,
    pub cases: Vec<CaseResult>,
}

/// Per-case results as a tab-separated table.
pub fn cases_tsv(digest: &str, report: &EvaluationReport) -> String {
    let mut out = String::from("id\tprediction\tscore\tcall_failed\n");
    for c in &report.cases {
        let pred = c.prediction.as_deref().unwrap_or("").replace(['\t', '\n', '\r'], " ");
        out.push_str(&format!("{}\t{pred}\t{}\t{}\n", c.id, c.score, c.call_failed));
    }
    stamped(digest, &out)
}

/// Scores a prompt on one split and writes the per-case table to
/// `output_dir/evaluate_<split>.tsv`. Without a prompt file the base
/// template itself is scored. A digest header in the prompt file is ignored.
pub fn cmd_evaluate(config: &RunConfig, prompt: Option<&Path>, split: Split) -> Result<EvaluationReport, AppError> {
    let digest = config.digest();
    let data = config.data(&[split])?;
    let text = match prompt {
        Some(path) => {
            let raw = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
            unstamp(&raw).1.to_string()
        }
        None => config.template()?.text(),
    };
    let gateways = config.gateways(&data, true)?;
    let spec = config.task_spec();
    let evaluator = Evaluator {
        task: &spec,
        gateway: &gateways.target,
        model: &gateways.target_model,
        train: &data.train,
    };
    let fitness = evaluator.evaluate(&text, data.split(split))?;
    let report = EvaluationReport {
        split,
        score: fitness.fitness,
        parse_failures: fitness.parse_failures,
        cases: fitness.cases,
    };
    write(
        &config.output_dir.join(format!("evaluate_{split}.tsv")),
        cases_tsv(&digest, &report),
    )?;
    Ok(report)
}

/// Per-generation mean and standard deviation of f_train from a journal,
/// written as a table to `out`.
pub fn cmd_report(journal: &Path, out: &Path, digest: &str) -> Result<Vec<CurvePoint>, AppError> {
    let records = Journal::read(journal)?;
    let curve = curve_from_journal(&records);
    write(out, curve_tsv(digest, &curve))?;
    Ok(curve)
}
