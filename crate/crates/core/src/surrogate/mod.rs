//! Bootstrap ensemble of small regressors that predicts prompt fitness
//! from a text embedding, with the ensemble variance as an uncertainty
//! estimate.

mod embed;
mod mlp;

use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use embed::{l2_normalize, ngrams, tokens, Embedder, EmbedderSpec, HashEmbedder, HttpEmbedder, DEFAULT_DIM};
pub use mlp::{gradient_check, Adam, Mlp};

use crate::seeds::{derive_seed, rng_from_seed};

const MODULE: &str = "surrogate";
const MAGIC: &[u8; 8] = b"GPOSURR\0";
pub const FORMAT_VERSION: u32 = 1;

/// Fewest points [`train`] accepts.
pub const MIN_TRAIN_POINTS: usize = 10;
/// Fewest points [`tune`] accepts.
pub const MIN_TUNE_POINTS: usize = 50;

pub const LAYER_GRID: [&[usize]; 3] = [&[128, 1], &[128, 64, 1], &[128, 64, 32, 1]];
pub const DROPOUT_GRID: [f64; 4] = [0.0, 0.1, 0.2, 0.5];
pub const BATCH_GRID: [usize; 2] = [16, 32];
pub const LR_GRID: [f64; 2] = [1e-4, 1e-3];

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("expected {expected}-dimensional vectors, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub batch: usize,
    pub lr: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            widths: vec![128, 1],
            dropout: 0.0,
            batch: 16,
            lr: 1e-3,
        }
    }
}

/// Every tunable combination, layers outermost.
pub fn grid() -> Vec<Hyperparams> {
    let mut out = Vec::with_capacity(48);
    for widths in LAYER_GRID {
        for dropout in DROPOUT_GRID {
            for batch in BATCH_GRID {
                for lr in LR_GRID {
                    out.push(Hyperparams {
                        widths: widths.to_vec(),
                        dropout,
                        batch,
                        lr,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub submodels: usize,
    pub epochs: usize,
    /// Share of the data used for fitting; the rest drives snapshot choice.
    pub train_fraction: f64,
    pub folds: usize,
    pub combos: usize,
    /// Epochs per fit during tuning.
    pub tuning_epochs: usize,
    /// Give every submodel the same seed, so with no dropout the ensemble
    /// collapses to one model. Diagnostic only.
    pub identical_submodels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            submodels: 10,
            epochs: 200,
            train_fraction: 0.7,
            folds: 5,
            combos: 10,
            tuning_epochs: 200,
            identical_submodels: false,
        }
    }
}

/// One training point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean validation loss across submodels after each epoch.
    pub val_curve: Vec<f64>,
    /// One-based epoch of the restored snapshot.
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Indices of the points held out for validation.
    pub val_indices: Vec<usize>,
}

fn pairs(data: &[Sample], idx: &[usize]) -> Vec<(Vec<f64>, f64)> {
    idx.iter().map(|&i| (data[i].x.clone(), data[i].y)).collect()
}

fn as_refs(v: &[(Vec<f64>, f64)]) -> Vec<(&[f64], f64)> {
    v.iter().map(|(x, y)| (x.as_slice(), *y)).collect()
}

struct Member {
    net: Mlp,
    adam: Adam,
    rng: ChaCha8Rng,
    /// Bootstrap draw from the fitting portion, as indices into it.
    boot: Vec<usize>,
}

/// Fits the ensemble: a seeded split into fitting and validation parts,
/// one bootstrap resample of the fitting part per submodel, Adam on mean
/// squared error, and restoration of the parameters from the epoch with
/// the lowest mean validation loss.
pub fn train(
    data: &[Sample],
    hp: &Hyperparams,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<Mlp>, TrainReport), SurrogateError> {
    if data.len() < MIN_TRAIN_POINTS {
        return Err(SurrogateError::InsufficientData {
            needed: MIN_TRAIN_POINTS,
            got: data.len(),
        });
    }
    let dim = data[0].x.len();
    if let Some(bad) = data.iter().find(|s| s.x.len() != dim) {
        return Err(SurrogateError::Dimension {
            expected: dim,
            got: bad.x.len(),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, MODULE, "split")));
    let n_fit = ((data.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, data.len() - 1);
    let fit = pairs(data, &order[..n_fit]);
    let val = pairs(data, &order[n_fit..]);
    let (fit, val) = (as_refs(&fit), as_refs(&val));

    let mut members: Vec<Member> = (0..cfg.submodels)
        .map(|i| {
            let purpose = if cfg.identical_submodels { "submodel/0".to_string() } else { format!("submodel/{i}") };
            let mut rng = rng_from_seed(derive_seed(seed, MODULE, &purpose));
            let net = Mlp::new(dim, &hp.widths, hp.dropout, &mut rng);
            let boot = (0..fit.len()).map(|_| rng.gen_range(0..fit.len())).collect();
            Member {
                adam: Adam::new(net.param_count(), hp.lr),
                net,
                rng,
                boot,
            }
        })
        .collect();

    let batch = hp.batch.max(1);
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let losses: Vec<f64> = members
            .par_iter_mut()
            .map(|m| {
                m.boot.shuffle(&mut m.rng);
                for chunk in m.boot.chunks(batch) {
                    let b: Vec<(&[f64], f64)> = chunk.iter().map(|&i| fit[i]).collect();
                    let (_, g) = m.net.loss_and_grad(&b, Some(&mut m.rng));
                    m.adam.step(m.net.params_mut(), &g);
                }
                m.net.mse(&val)
            })
            .collect();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        curve.push(mean);
        if best.as_ref().is_none_or(|(l, _, _)| mean < *l) {
            best = Some((mean, epoch, members.iter().map(|m| m.net.params().to_vec()).collect()));
        }
    }
    let mut nets: Vec<Mlp> = members.into_iter().map(|m| m.net).collect();
    let (best_loss, best_epoch) = match best {
        Some((loss, epoch, snapshot)) => {
            for (net, p) in nets.iter_mut().zip(snapshot) {
                net.params_mut().copy_from_slice(&p);
            }
            (loss, epoch)
        }
        None => {
            let val_loss = nets.iter().map(|n| n.mse(&val)).sum::<f64>() / nets.len().max(1) as f64;
            (val_loss, 0)
        }
    };
    Ok((
        nets,
        TrainReport {
            val_curve: curve,
            best_epoch,
            best_loss,
            val_indices: order[n_fit..].to_vec(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    /// Sampled combinations with their cross-validated error, in sampling
    /// order.
    pub scores: Vec<(Hyperparams, f64)>,
    pub chosen: Hyperparams,
}

/// Deterministic partition of `n` points into `k` folds.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, MODULE, "folds")));
    let mut folds = vec![Vec::new(); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    folds
}

/// Samples `cfg.combos` distinct grid points and scores each by k-fold
/// cross-validated MSE averaged over submodels. The lowest score wins; ties
/// go to the earlier sample.
pub fn tune(data: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<TuneReport, SurrogateError> {
    if data.len() < MIN_TUNE_POINTS {
        return Err(SurrogateError::InsufficientData {
            needed: MIN_TUNE_POINTS,
            got: data.len(),
        });
    }
    let all = grid();
    let mut rng = rng_from_seed(derive_seed(seed, MODULE, "combos"));
    let picked: Vec<Hyperparams> = sample_indices(&mut rng, all.len(), cfg.combos.min(all.len()))
        .iter()
        .map(|i| all[i].clone())
        .collect();
    let folds = fold_partition(data.len(), cfg.folds, seed);
    let fit_cfg = TrainConfig {
        epochs: cfg.tuning_epochs,
        ..cfg.clone()
    };
    let mut scores = Vec::with_capacity(picked.len());
    for (c, hp) in picked.into_iter().enumerate() {
        let mut total = 0.0;
        for (f, held) in folds.iter().enumerate() {
            let rest: Vec<Sample> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| data[i].clone()))
                .collect();
            let (nets, _) = train(&rest, &hp, &fit_cfg, derive_seed(seed, MODULE, &format!("cv/{c}/{f}")))?;
            let test = pairs(data, held);
            let test = as_refs(&test);
            total += nets.iter().map(|n| n.mse(&test)).sum::<f64>() / nets.len() as f64;
        }
        scores.push((hp, total / folds.len() as f64));
    }
    let chosen = scores
        .iter()
        .fold(None::<&(Hyperparams, f64)>, |best, s| match best {
            Some(b) if b.1 <= s.1 => Some(b),
            _ => Some(s),
        })
        .map(|(hp, _)| hp.clone())
        .unwrap_or_default();
    Ok(TuneReport { scores, chosen })
}

/// Mean and population variance of submodel outputs.
pub fn mean_variance(outputs: &[f64]) -> (f64, f64) {
    // Identical outputs agree exactly, free of summation rounding.
    if outputs.windows(2).all(|w| w[0] == w[1]) {
        return (outputs.first().copied().unwrap_or(0.0), 0.0);
    }
    let n = outputs.len() as f64;
    let mean = outputs.iter().sum::<f64>() / n;
    let var = outputs.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEnsemble {
    pub embedder: EmbedderSpec,
    pub hyperparams: Hyperparams,
    pub models: Vec<Mlp>,
    pub report: Option<TrainReport>,
}

impl SurrogateEnsemble {
    /// Embeds every text and trains on the resulting points.
    pub fn fit(
        embedder: &dyn Embedder,
        texts: &[(&str, f64)],
        hp: &Hyperparams,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self, SurrogateError> {
        let data = embed_all(embedder, texts)?;
        let (models, report) = train(&data, hp, cfg, seed)?;
        Ok(Self {
            embedder: embedder.spec(),
            hyperparams: hp.clone(),
            models,
            report: Some(report),
        })
    }

    pub fn outputs(&self, x: &[f64]) -> Vec<f64> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }

    /// Ensemble mean and population variance for an embedding.
    pub fn predict_embedding(&self, x: &[f64]) -> (f64, f64) {
        mean_variance(&self.outputs(x))
    }

    pub fn predict(&self, embedder: &dyn Embedder, text: &str) -> Result<(f64, f64), SurrogateError> {
        let x = embedder.embed(text)?;
        let dim = self.embedder.dim();
        if x.len() != dim {
            return Err(SurrogateError::Dimension {
                expected: dim,
                got: x.len(),
            });
        }
        Ok(self.predict_embedding(&x))
    }

    /// Binary layout, little endian: magic, format version, JSON header
    /// length and header (embedder and hyperparameters), submodel count,
    /// then per submodel its input size, layer widths, dropout and flat
    /// parameters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::json!({ "embedder": self.embedder, "hyperparams": self.hyperparams }).to_string();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.models.len() as u64).to_le_bytes());
        for m in &self.models {
            out.extend_from_slice(&(m.input_dim() as u64).to_le_bytes());
            out.extend_from_slice(&(m.widths().len() as u64).to_le_bytes());
            for w in m.widths() {
                out.extend_from_slice(&(*w as u64).to_le_bytes());
            }
            out.extend_from_slice(&m.dropout().to_le_bytes());
            out.extend_from_slice(&(m.params().len() as u64).to_le_bytes());
            for p in m.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SurrogateError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SurrogateError::Format("not a surrogate model file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(SurrogateError::Format(format!("unsupported version {version}")));
        }
        #[derive(Deserialize)]
        struct Header {
            embedder: EmbedderSpec,
            hyperparams: Hyperparams,
        }
        let len = r.len()?;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| SurrogateError::Format(format!("header: {e}")))?;
        let count = r.len()?;
        let mut models = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let input = r.len()?;
            let layers = r.len()?;
            let widths = (0..layers).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let dropout = r.f64()?;
            let n = r.len()?;
            let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            models.push(
                Mlp::from_parts(input, widths, dropout, params)
                    .ok_or_else(|| SurrogateError::Format("inconsistent submodel shape".into()))?,
            );
        }
        if r.pos != bytes.len() {
            return Err(SurrogateError::Format("trailing bytes".into()));
        }
        Ok(Self {
            embedder: header.embedder,
            hyperparams: header.hyperparams,
            models,
            report: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        fs::write(path, self.to_bytes()).map_err(|source| SurrogateError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let bytes = fs::read(path).map_err(|source| SurrogateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SurrogateError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| SurrogateError::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn len(&mut self) -> Result<usize, SurrogateError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| SurrogateError::Format("length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, SurrogateError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn embed_all(embedder: &dyn Embedder, texts: &[(&str, f64)]) -> Result<Vec<Sample>, SurrogateError> {
    texts
        .par_iter()
        .map(|(t, y)| embedder.embed(t).map(|x| Sample { x, y: *y }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data(n: usize, dim: usize, seed: u64) -> Vec<Sample> {
        let mut rng = rng_from_seed(seed);
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        (0..n)
            .map(|_| {
                let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                l2_normalize(&mut x);
                let y = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                Sample { x, y }
            })
            .collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            submodels: 3,
            epochs: 15,
            tuning_epochs: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn grid_has_48_unique_points() {
        let g = grid();
        assert_eq!(g.len(), 3 * 4 * 2 * 2);
        for (i, a) in g.iter().enumerate() {
            assert!(g[i + 1..].iter().all(|b| a != b));
        }
    }

    #[test]
    fn variance_formula() {
        let outs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let (m, v) = mean_variance(&outs);
        assert!((m - 0.45).abs() < 1e-12);
        assert!((v - 0.0825).abs() < 1e-12);
        assert_eq!(mean_variance(&[0.5; 10]), (0.5, 0.0));
    }

    #[test]
    fn too_little_data_is_rejected() {
        let data = linear_data(9, 4, 1);
        assert!(matches!(
            train(&data, &Hyperparams::default(), &quick(), 0),
            Err(SurrogateError::InsufficientData { needed: 10, got: 9 })
        ));
        assert!(tune(&linear_data(49, 4, 1), &quick(), 0).is_err());
    }

    #[test]
    fn snapshot_restores_minimum_and_training_is_deterministic() {
        let data = linear_data(60, 8, 2);
        let hp = Hyperparams {
            widths: vec![16, 1],
            dropout: 0.1,
            batch: 16,
            lr: 1e-2,
        };
        let (nets, report) = train(&data, &hp, &quick(), 9).unwrap();
        assert_eq!(report.val_curve.len(), 15);
        let min = report.val_curve.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_loss, min);
        let val = pairs(&data, &report.val_indices);
        let val = as_refs(&val);
        let recomputed = nets.iter().map(|n| n.mse(&val)).sum::<f64>() / nets.len() as f64;
        assert!((recomputed - min).abs() < 1e-12);
        let (again, _) = train(&data, &hp, &quick(), 9).unwrap();
        assert_eq!(nets, again);
    }

    #[test]
    fn identical_submodels_have_zero_variance() {
        let data = linear_data(30, 6, 4);
        let cfg = TrainConfig {
            identical_submodels: true,
            ..quick()
        };
        let (models, _) = train(&data, &Hyperparams::default(), &cfg, 1).unwrap();
        let ens = SurrogateEnsemble {
            embedder: HashEmbedder::new(6, 0).spec(),
            hyperparams: Hyperparams::default(),
            models,
            report: None,
        };
        for s in &data {
            assert_eq!(ens.predict_embedding(&s.x).1, 0.0);
        }
    }

    #[test]
    fn tuning_is_deterministic_and_picks_minimum() {
        let data = linear_data(50, 4, 3);
        let a = tune(&data, &quick(), 5).unwrap();
        let b = tune(&data, &quick(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scores.len(), 10);
        let best = a.scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let first_best = a.scores.iter().find(|s| s.1 == best).unwrap();
        assert_eq!(a.chosen, first_best.0);
        let parts = fold_partition(50, 5, 5);
        assert_eq!(parts, fold_partition(50, 5, 5));
        assert!(parts.iter().all(|f| f.len() == 10));
    }

    #[test]
    fn binary_round_trip() {
        let emb = HashEmbedder::new(32, 7);
        let texts: Vec<(String, f64)> = (0..12).map(|i| (format!("prompt number {i} text"), i as f64 / 12.0)).collect();
        let refs: Vec<(&str, f64)> = texts.iter().map(|(t, y)| (t.as_str(), *y)).collect();
        let ens = SurrogateEnsemble::fit(&emb, &refs, &Hyperparams::default(), &quick(), 3).unwrap();
        let back = SurrogateEnsemble::from_bytes(&ens.to_bytes()).unwrap();
        assert_eq!(back.models, ens.models);
        assert_eq!(back.embedder, ens.embedder);
        assert_eq!(
            back.predict(&emb, "prompt number 3").unwrap(),
            ens.predict(&emb, "prompt number 3").unwrap()
        );
        let mut bytes = ens.to_bytes();
        bytes.pop();
        assert!(SurrogateEnsemble::from_bytes(&bytes).is_err());
        assert!(SurrogateEnsemble::from_bytes(b"nonsense").is_err());
        assert!(matches!(
            ens.predict(&HashEmbedder::new(8, 7), "x"),
            Err(SurrogateError::Dimension { .. })
        ));
    }
}
