//! One-pass refinement around the best individual: every index value of
//! its edit programs is perturbed, the surrogate screens the neighbours and
//! the survivors are scored with the model on validation rows plus an
//! equal-size training sample.

use std::cmp::Ordering;
use std::collections::HashSet;

use log::{info, warn};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_rows, Row};
use crate::edit::{EditContext, EditError, ExecutionTrace, Expr};
use crate::grammar::Phenotype;
use crate::prompt::{apply_phenotype, BaseTemplate, RenderedPrompt};
use crate::section::Section;
use crate::seeds::{derive_seed, rng_from_seed};
use crate::surrogate::{Embedder, SurrogateEnsemble, SurrogateError};
use crate::task::Evaluator;

const MODULE: &str = "local_search";

/// Bound used when the incumbent executed no edit operation.
pub const EMPTY_TRACE_BOUND: u32 = 10;

#[derive(Debug, thiserror::Error)]
pub enum LocalSearchError {
    #[error("section {section} program: {source}")]
    Program {
        section: Section,
        #[source]
        source: EditError,
    },
    #[error("incumbent does not render: {0}")]
    Incumbent(String),
    #[error("need {needed} training rows to match the validation set, have {got}")]
    TooFewTrainRows { needed: usize, got: usize },
    #[error("validation set is empty")]
    EmptyValidation,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSearchConfig {
    pub neighbours_per_site: usize,
    pub top_mean: usize,
    pub top_variance: usize,
    /// Score the incumbent alongside the candidates so the result never
    /// regresses on the combined score.
    pub include_incumbent: bool,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            neighbours_per_site: 10,
            top_mean: 25,
            top_variance: 25,
            include_incumbent: true,
        }
    }
}

/// One index value inside a section program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSite {
    pub section: Section,
    /// Position among the section's index values in textual order.
    pub slot: usize,
    pub value: u32,
}

fn parse(section: Section, program: &str) -> Result<Expr, LocalSearchError> {
    Expr::parse(program).map_err(|source| LocalSearchError::Program { section, source })
}

/// Every index value of every section program; a slice contributes two.
pub fn enumerate_sites(ph: &Phenotype) -> Result<Vec<IndexSite>, LocalSearchError> {
    let mut sites = Vec::new();
    for (section, program) in ph.iter() {
        for (slot, value) in parse(section, program)?.index_values().into_iter().enumerate() {
            sites.push(IndexSite { section, slot, value });
        }
    }
    Ok(sites)
}

/// Twice the largest chunk count an edit operation saw, or
/// [`EMPTY_TRACE_BOUND`] if no operation ran.
pub fn compute_bound(trace: &ExecutionTrace) -> u32 {
    if trace.records.is_empty() {
        EMPTY_TRACE_BOUND
    } else {
        u32::try_from(2 * trace.max_chunk_count).unwrap_or(u32::MAX)
    }
}

/// The incumbent with one site set to `value`.
pub fn with_site(ph: &Phenotype, site: &IndexSite, value: u32) -> Result<Phenotype, LocalSearchError> {
    let expr = parse(site.section, ph.program(site.section))?.with_index_value(site.slot, value);
    let mut out = ph.clone();
    out.set_program(site.section, expr.to_string());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub phenotype: Phenotype,
    /// Position of the changed site in the neighbourhood's site list.
    pub site: usize,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbourhood {
    pub incumbent: Phenotype,
    pub sites: Vec<IndexSite>,
    pub bound: u32,
    pub neighbours: Vec<Neighbour>,
}

/// Per site, `per_site` distinct values other than the current one, drawn
/// from `1..=bound`. When that range is too small it is widened to
/// `1..=per_site + 1`, so every site gets exactly `per_site` neighbours;
/// indices resolve modulo the chunk count, so the extra values alias valid
/// positions.
pub fn build_neighbourhood(
    incumbent: &Phenotype,
    sites: &[IndexSite],
    bound: u32,
    per_site: usize,
    seed: u64,
) -> Result<Neighbourhood, LocalSearchError> {
    let mut rng = rng_from_seed(seed);
    let mut neighbours = Vec::new();
    for (i, site) in sites.iter().enumerate() {
        let top = bound.max(u32::try_from(per_site).unwrap_or(u32::MAX).saturating_add(1));
        let pool: Vec<u32> = (1..=top).filter(|v| *v != site.value).collect();
        let values: Vec<u32> = if pool.len() <= per_site {
            pool
        } else {
            sample_indices(&mut rng, pool.len(), per_site).iter().map(|k| pool[k]).collect()
        };
        for value in values {
            neighbours.push(Neighbour {
                phenotype: with_site(incumbent, site, value)?,
                site: i,
                value,
            });
        }
    }
    Ok(Neighbourhood {
        incumbent: incumbent.clone(),
        sites: sites.to_vec(),
        bound,
        neighbours,
    })
}

/// Surrogate prediction for one neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

fn rank_by(preds: &[Prediction], digests: &[String], key: impl Fn(&Prediction) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        key(&preds[b])
            .partial_cmp(&key(&preds[a]))
            .unwrap_or(Ordering::Equal)
            .then_with(|| digests[a].cmp(&digests[b]))
    });
    order
}

/// Indices of the top `top_mean` neighbours by predicted mean and the top
/// `top_variance` by variance, overlaps backfilled in mean order, so the
/// result has `min(top_mean + top_variance, n)` distinct entries. Ties
/// break by digest.
pub fn screen(preds: &[Prediction], digests: &[String], top_mean: usize, top_variance: usize) -> Vec<usize> {
    let target = (top_mean + top_variance).min(preds.len());
    let by_mean = rank_by(preds, digests, |p| p.mean);
    let by_var = rank_by(preds, digests, |p| p.variance);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(target);
    for &i in by_mean.iter().take(top_mean).chain(by_var.iter().take(top_variance)) {
        if seen.insert(i) {
            out.push(i);
        }
    }
    for &i in &by_mean {
        if out.len() >= target {
            break;
        }
        if seen.insert(i) {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub digest: String,
    pub phenotype: Phenotype,
    pub prompt: Option<String>,
    pub is_incumbent: bool,
    pub prediction: Option<Prediction>,
    pub val: f64,
    pub train: f64,
    pub combined: f64,
}

/// Candidate entering the final scoring.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub phenotype: Phenotype,
    pub prompt: Option<RenderedPrompt>,
    pub prediction: Option<Prediction>,
}

/// Scores candidates (and the incumbent when given) on `val` and on
/// `d_train`. Returns them best first: combined score descending, ties to
/// the incumbent and then by digest.
pub fn finalize(
    candidates: &[Candidate],
    incumbent: Option<&Candidate>,
    val: &[Row],
    d_train: &[Row],
    evaluator: &Evaluator<'_>,
) -> Vec<ScoredCandidate> {
    let entries: Vec<(&Candidate, bool)> = incumbent
        .map(|c| (c, true))
        .into_iter()
        .chain(candidates.iter().map(|c| (c, false)))
        .collect();
    let score = |text: &str, rows: &[Row]| evaluator.evaluate(text, rows).map(|r| r.fitness).unwrap_or(0.0);
    let mut scored: Vec<ScoredCandidate> = entries
        .par_iter()
        .map(|(c, is_incumbent)| {
            let text = c.prompt.as_ref().map(|p| p.text.clone());
            let (v, t) = match &text {
                Some(text) => (score(text, val), score(text, d_train)),
                None => (0.0, 0.0),
            };
            ScoredCandidate {
                digest: c.phenotype.digest(),
                phenotype: c.phenotype.clone(),
                prompt: text,
                is_incumbent: *is_incumbent,
                prediction: c.prediction,
                val: v,
                train: t,
                combined: (v + t) / 2.0,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.is_incumbent.cmp(&a.is_incumbent))
            .then_with(|| a.digest.cmp(&b.digest))
    });
    scored
}

/// Everything one local-search pass needs.
pub struct LocalSearch<'a> {
    pub config: &'a LocalSearchConfig,
    pub base: &'a BaseTemplate,
    pub edit: EditContext<'a>,
    pub evaluator: Evaluator<'a>,
    pub train: &'a [Row],
    pub val: &'a [Row],
    pub embedder: &'a dyn Embedder,
    pub ensemble: &'a SurrogateEnsemble,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchOutcome {
    pub best: ScoredCandidate,
    /// Final scores, best first.
    pub ranking: Vec<ScoredCandidate>,
    pub sites: Vec<IndexSite>,
    pub bound: u32,
    pub neighbours: usize,
    /// The incumbent had no index to perturb and was returned unscored.
    pub no_sites: bool,
}

impl LocalSearch<'_> {
    fn render(&self, ph: &Phenotype) -> Option<(RenderedPrompt, ExecutionTrace)> {
        match apply_phenotype(self.base, ph, &self.edit) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("neighbour {} does not render: {e}", &ph.digest()[..12]);
                None
            }
        }
    }

    pub fn run(&self, incumbent: &Phenotype) -> Result<LocalSearchOutcome, LocalSearchError> {
        if self.val.is_empty() {
            return Err(LocalSearchError::EmptyValidation);
        }
        let (prompt, trace) = apply_phenotype(self.base, incumbent, &self.edit)
            .map_err(|e| LocalSearchError::Incumbent(e.to_string()))?;
        let sites = enumerate_sites(incumbent)?;
        let bound = compute_bound(&trace);
        if sites.is_empty() {
            info!("incumbent has no index to perturb; returning it unchanged");
            let best = ScoredCandidate {
                digest: incumbent.digest(),
                phenotype: incumbent.clone(),
                prompt: Some(prompt.text),
                is_incumbent: true,
                prediction: None,
                val: 0.0,
                train: 0.0,
                combined: 0.0,
            };
            return Ok(LocalSearchOutcome {
                ranking: vec![best.clone()],
                best,
                sites,
                bound,
                neighbours: 0,
                no_sites: true,
            });
        }
        if self.train.len() < self.val.len() {
            return Err(LocalSearchError::TooFewTrainRows {
                needed: self.val.len(),
                got: self.train.len(),
            });
        }
        let nb = build_neighbourhood(
            incumbent,
            &sites,
            bound,
            self.config.neighbours_per_site,
            derive_seed(self.master_seed, MODULE, "neighbourhood"),
        )?;
        let rendered: Vec<Option<RenderedPrompt>> = nb
            .neighbours
            .par_iter()
            .map(|n| self.render(&n.phenotype).map(|(p, _)| p))
            .collect();
        let preds: Vec<Prediction> = rendered
            .par_iter()
            .map(|r| match r {
                Some(p) => self.ensemble.predict(self.embedder, &p.text).map(|(mean, variance)| Prediction {
                    mean,
                    variance,
                }),
                None => Ok(Prediction {
                    mean: f64::NEG_INFINITY,
                    variance: f64::NEG_INFINITY,
                }),
            })
            .collect::<Result<_, _>>()?;
        let digests: Vec<String> = nb.neighbours.iter().map(|n| n.phenotype.digest()).collect();
        let picked = screen(&preds, &digests, self.config.top_mean, self.config.top_variance);
        let candidates: Vec<Candidate> = picked
            .iter()
            .map(|&i| Candidate {
                phenotype: nb.neighbours[i].phenotype.clone(),
                prompt: rendered[i].clone(),
                prediction: Some(preds[i]),
            })
            .collect();
        let incumbent_candidate = Candidate {
            phenotype: incumbent.clone(),
            prompt: Some(prompt),
            prediction: None,
        };
        let d_train = sample_rows(self.train, self.val.len(), derive_seed(self.master_seed, MODULE, "d_train"));
        let ranking = finalize(
            &candidates,
            self.config.include_incumbent.then_some(&incumbent_candidate),
            self.val,
            &d_train,
            &self.evaluator,
        );
        Ok(LocalSearchOutcome {
            best: ranking[0].clone(),
            ranking,
            sites,
            bound,
            neighbours: nb.neighbours.len(),
            no_sites: false,
        })
    }
}
