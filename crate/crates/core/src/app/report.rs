use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{stamped, unstamp, AppError};
use crate::g3p::{mean_std, GenerationSummary, JournalRecord, RunOutcome};
use crate::grammar::Phenotype;

/// Mean and standard deviation of f_train over one generation's
/// evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub generation: usize,
    pub evaluations: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteSummary {
    pub digest: String,
    pub phenotype: Phenotype,
    pub f_train: Option<f64>,
    pub f_val: Option<f64>,
    pub born: usize,
}

/// Summary of one optimisation run. Call statistics live in a separate
/// file because cache races under parallel scoring make them vary between
/// otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub seed: u64,
    pub generations: Vec<GenerationSummary>,
    /// Elite validation fitness after each generation.
    pub elite_history: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub elite: EliteSummary,
    pub final_prompt: String,
    pub test_score: Option<f64>,
}

impl RunReport {
    pub fn new(digest: &str, seed: u64, outcome: &RunOutcome, final_prompt: String, test_score: Option<f64>) -> Self {
        let e = &outcome.elite;
        Self {
            config_digest: digest.to_string(),
            seed,
            generations: outcome.history.clone(),
            elite_history: outcome.history.iter().map(|h| h.elite_f_val).collect(),
            curve: outcome
                .history
                .iter()
                .map(|h| CurvePoint {
                    generation: h.generation,
                    evaluations: h.evaluations,
                    mean: h.mean_f_train,
                    std: h.std_f_train,
                })
                .collect(),
            elite: EliteSummary {
                digest: e.digest(),
                phenotype: e.phenotype.clone(),
                f_train: e.f_train,
                f_val: e.f_val,
                born: e.born,
            },
            final_prompt,
            test_score,
        }
    }
}

/// Groups journal records by generation, in generation order.
pub fn curve_from_journal(records: &[JournalRecord]) -> Vec<CurvePoint> {
    let mut by_gen: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_gen.entry(r.generation).or_default().push(r.f_train);
    }
    by_gen
        .into_iter()
        .map(|(generation, values)| {
            let (mean, std) = mean_std(&values);
            CurvePoint {
                generation,
                evaluations: values.len(),
                mean,
                std,
            }
        })
        .collect()
}

const CURVE_HEADER: &str = "generation\tevaluations\tmean_f_train\tstd_f_train";

pub fn curve_tsv(digest: &str, curve: &[CurvePoint]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in curve {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", p.generation, p.evaluations, p.mean, p.std));
    }
    stamped(digest, &out)
}

/// Reads a table written by [`curve_tsv`], returning its digest and rows.
pub fn parse_curve_tsv(text: &str) -> Result<(Option<String>, Vec<CurvePoint>), AppError> {
    let (digest, body) = unstamp(text);
    let mut lines = body.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(AppError::Artifact("fitness curve has an unexpected header".into()));
    }
    let bad = |i: usize| AppError::Artifact(format!("fitness curve row {} is malformed", i + 1));
    let rows = lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(i));
            }
            Ok(CurvePoint {
                generation: f[0].parse().map_err(|_| bad(i))?,
                evaluations: f[1].parse().map_err(|_| bad(i))?,
                mean: f[2].parse().map_err(|_| bad(i))?,
                std: f[3].parse().map_err(|_| bad(i))?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok((digest.map(str::to_string), rows))
}
