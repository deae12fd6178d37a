use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AppError;
use crate::data::{Dataset, Row, Split};
use crate::edit::Lexicons;
use crate::g3p::GpConfig;
use crate::grammar::Grammar;
use crate::llm::{
    Backend, EchoBackend, Gateway, HttpBackend, LabelOracle, ModelSettings, ResponseCache, RetryPolicy,
    ScriptedBackend, TruncateBackend, DEFAULT_MAX_INFLIGHT,
};
use crate::local_search::LocalSearchConfig;
use crate::prompt::{BaseTemplate, DEFAULT_ICL_SLOTS};
use crate::seeds::sha256_hex;
use crate::surrogate::{EmbedderSpec, Hyperparams, TrainConfig, DEFAULT_DIM};
use crate::task::{Metric, TaskSpec};

/// Prefix selecting a template shipped with the crate instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

/// A full run configuration, read from TOML. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub task: TaskConfig,
    pub lexicons: LexiconConfig,
    pub gateway: GatewayConfig,
    pub gp: GpConfig,
    pub surrogate: SurrogateConfig,
    pub local_search: LocalSearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("gpo-out"),
            task: TaskConfig::default(),
            lexicons: LexiconConfig::default(),
            gateway: GatewayConfig::default(),
            gp: GpConfig::default(),
            surrogate: SurrogateConfig::default(),
            local_search: LocalSearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub metric: Metric,
    pub labels: Vec<String>,
    pub answer_key: String,
    pub icl_k: usize,
    /// `builtin:NAME` or a template file.
    pub template: String,
    /// Edit grammar file; the shipped grammar when absent.
    pub grammar: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub icl_slots: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let spec = TaskSpec::default();
        Self {
            name: spec.name,
            metric: spec.metric,
            labels: spec.labels,
            answer_key: spec.answer_key,
            icl_k: spec.icl_k,
            template: format!("{BUILTIN_PREFIX}pubmedqa"),
            grammar: None,
            train: None,
            val: None,
            test: None,
            icl_slots: DEFAULT_ICL_SLOTS,
        }
    }
}

/// Lexicon files; each missing file falls back to the shipped English list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub stopwords: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Echo,
    Truncate,
    LabelOracle,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_inflight: usize,
    pub retries: u32,
    pub retry_delay_ms: u64,
    /// Response cache file; `output_dir/llm_cache.tsv` when absent.
    pub cache_file: Option<PathBuf>,
    pub target: ModelSettings,
    /// Backend of the editing model; the target backend when absent.
    pub editor_backend: Option<BackendKind>,
    /// Decoding settings of the editing model; the target's when absent.
    pub editor: Option<ModelSettings>,
    /// Whether paraphrase and summarise edits call the editing model. When
    /// off they leave their text unchanged.
    pub llm_edits: bool,
    pub oracle: OracleConfig,
    /// Reply table of the scripted backend.
    pub scripted_table: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            api_key_env: "GPO_API_KEY".into(),
            timeout_secs: 60,
            max_inflight: DEFAULT_MAX_INFLIGHT,
            retries: RetryPolicy::default().attempts,
            retry_delay_ms: RetryPolicy::default().base_delay.as_millis() as u64,
            cache_file: None,
            target: ModelSettings::default(),
            editor_backend: None,
            editor: None,
            llm_edits: true,
            oracle: OracleConfig::default(),
            scripted_table: None,
        }
    }
}

/// Behaviour of the label-oracle backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub poisons: Vec<String>,
    pub format_marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub embedder: EmbedderSpec,
    /// Whether to pick hyperparameters by cross-validation before training.
    pub tune: bool,
    pub training: TrainConfig,
    /// Used when tuning is off or there is too little data to tune.
    pub hyperparams: Hyperparams,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderSpec::Hash { dim: DEFAULT_DIM, seed: 0 },
            tune: true,
            training: TrainConfig::default(),
            hyperparams: Hyperparams::default(),
        }
    }
}

/// Task data loaded for a run.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Vec<Row>,
    pub val: Vec<Row>,
    pub test: Vec<Row>,
}

impl TaskData {
    pub fn split(&self, split: Split) -> &[Row] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn resolve(dir: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = dir.join(&*path);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(dir);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        resolve(dir, &mut self.output_dir);
        let task = &mut self.task;
        for path in [&mut task.grammar, &mut task.train, &mut task.val, &mut task.test]
            .into_iter()
            .flatten()
        {
            resolve(dir, path);
        }
        if !task.template.starts_with(BUILTIN_PREFIX) {
            let mut p = PathBuf::from(&task.template);
            resolve(dir, &mut p);
            task.template = p.display().to_string();
        }
        for path in [&mut self.lexicons.stopwords, &mut self.lexicons.synonyms]
            .into_iter()
            .flatten()
        {
            resolve(dir, path);
        }
        for path in [&mut self.gateway.cache_file, &mut self.gateway.scripted_table]
            .into_iter()
            .flatten()
        {
            resolve(dir, path);
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.gp.validate().map_err(|e| AppError::Config(e.to_string()))?;
        if self.gateway.max_inflight == 0 {
            return Err(AppError::Config("gateway.max_inflight must be positive".into()));
        }
        if self.gateway.retries == 0 {
            return Err(AppError::Config("gateway.retries counts attempts and must be positive".into()));
        }
        if self.surrogate.embedder.dim() == 0 {
            return Err(AppError::Config("surrogate embedder dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Digest of everything that affects results. Input files enter by
    /// content rather than location, so the same run set up in another
    /// directory has the same digest. The output directory, the cache file
    /// and the generation budget are left out; the budget so a finished run
    /// can be resumed for more generations, which earlier generations do not
    /// depend on.
    pub fn digest(&self) -> String {
        let by_content = |p: &Path| match std::fs::read(p) {
            Ok(bytes) => PathBuf::from(format!("sha256:{}", sha256_hex(&bytes))),
            Err(_) => PathBuf::from(format!("unreadable:{}", p.display())),
        };
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.gp.generations = 0;
        c.gateway.cache_file = None;
        let task = &mut c.task;
        for path in [&mut task.grammar, &mut task.train, &mut task.val, &mut task.test]
            .into_iter()
            .chain([&mut c.lexicons.stopwords, &mut c.lexicons.synonyms])
            .chain([&mut c.gateway.scripted_table])
            .flatten()
        {
            *path = by_content(path);
        }
        if !task.template.starts_with(BUILTIN_PREFIX) {
            task.template = by_content(Path::new(&task.template)).display().to_string();
        }
        let json = serde_json::to_string(&c).expect("run config serialises");
        sha256_hex(json.as_bytes())
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec {
            name: self.task.name.clone(),
            metric: self.task.metric,
            labels: self.task.labels.clone(),
            answer_key: self.task.answer_key.clone(),
            icl_k: self.task.icl_k,
        }
    }

    pub fn template(&self) -> Result<BaseTemplate, AppError> {
        let t = &self.task.template;
        let base = match t.strip_prefix(BUILTIN_PREFIX) {
            Some(name) => BaseTemplate::builtin(name).ok_or_else(|| {
                let known: Vec<_> = BaseTemplate::builtin_names().collect();
                AppError::Config(format!("unknown built-in template `{name}` (known: {})", known.join(", ")))
            })?,
            None => BaseTemplate::load(Path::new(t))?,
        };
        Ok(base.with_icl_slots(self.task.icl_slots))
    }

    pub fn grammar(&self) -> Result<Grammar, AppError> {
        match &self.task.grammar {
            None => Ok(Grammar::default_edit_grammar()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
                Ok(Grammar::parse(&text)?)
            }
        }
    }

    pub fn lexicons(&self) -> Result<Lexicons, AppError> {
        let english = Lexicons::english();
        let read = |p: &Option<PathBuf>| -> Result<Option<String>, AppError> {
            p.as_ref()
                .map(|p| std::fs::read_to_string(p).map_err(|e| AppError::io(p, e)))
                .transpose()
        };
        match (read(&self.lexicons.stopwords)?, read(&self.lexicons.synonyms)?) {
            (None, None) => Ok(english),
            (stop, syn) => Ok(Lexicons::from_texts(
                stop.as_deref().unwrap_or(crate::edit::ENGLISH_STOPWORDS),
                syn.as_deref().unwrap_or(crate::edit::ENGLISH_SYNONYMS),
            )?),
        }
    }

    /// Loads the splits. Only the splits in `needed` must be configured.
    pub fn data(&self, needed: &[Split]) -> Result<TaskData, AppError> {
        let load = |split: Split, path: &Option<PathBuf>| -> Result<Vec<Row>, AppError> {
            match path {
                Some(p) => Ok(Dataset::load(split, p)?.rows),
                None if needed.contains(&split) => Err(AppError::Config(format!("task.{split} is not set"))),
                None => Ok(Vec::new()),
            }
        };
        Ok(TaskData {
            train: load(Split::Train, &self.task.train)?,
            val: load(Split::Val, &self.task.val)?,
            test: load(Split::Test, &self.task.test)?,
        })
    }

    pub fn cache_path(&self) -> PathBuf {
        self.gateway
            .cache_file
            .clone()
            .unwrap_or_else(|| self.output_dir.join("llm_cache.tsv"))
    }

    fn backend(&self, kind: BackendKind, data: &TaskData) -> Result<Arc<dyn Backend>, AppError> {
        let g = &self.gateway;
        Ok(match kind {
            BackendKind::Http => {
                let key = std::env::var(&g.api_key_env).ok();
                Arc::new(HttpBackend::new(g.endpoint.clone(), key, Duration::from_secs(g.timeout_secs)))
            }
            BackendKind::Echo => Arc::new(EchoBackend),
            BackendKind::Truncate => Arc::new(TruncateBackend),
            BackendKind::LabelOracle => Arc::new(
                LabelOracle::new(data.train.iter().chain(&data.val).chain(&data.test))
                    .with_poisons(g.oracle.poisons.clone())
                    .with_format_marker(g.oracle.format_marker.clone())
                    .with_answer_key(self.task.answer_key.clone()),
            ),
            BackendKind::Scripted => {
                let path = g
                    .scripted_table
                    .as_ref()
                    .ok_or_else(|| AppError::Config("gateway.scripted_table is required by the scripted backend".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
                Arc::new(ScriptedBackend::from_json(&text)?)
            }
        })
    }

    fn gateway_for(&self, backend: Arc<dyn Backend>, cache: Option<ResponseCache>) -> Gateway {
        let g = &self.gateway;
        Gateway::new(backend)
            .with_cache(cache)
            .with_retry(RetryPolicy {
                attempts: g.retries,
                base_delay: Duration::from_millis(g.retry_delay_ms),
            })
            .with_max_inflight(g.max_inflight)
    }

    /// Target and editor gateways. The target shares the persistent cache;
    /// a separate editor backend gets its own in-memory cache.
    pub fn gateways(&self, data: &TaskData, persist_cache: bool) -> Result<Gateways, AppError> {
        let cache = if persist_cache {
            ResponseCache::open(&self.cache_path())?
        } else {
            ResponseCache::in_memory()
        };
        let target = Arc::new(self.gateway_for(self.backend(self.gateway.backend, data)?, Some(cache)));
        let editor = match self.gateway.editor_backend {
            Some(kind) if kind != self.gateway.backend => Arc::new(
                self.gateway_for(self.backend(kind, data)?, Some(ResponseCache::in_memory())),
            ),
            _ => Arc::clone(&target),
        };
        Ok(Gateways {
            target,
            editor,
            target_model: self.gateway.target.clone(),
            editor_model: self.gateway.editor.clone().unwrap_or_else(|| self.gateway.target.clone()),
        })
    }
}

pub struct Gateways {
    pub target: Arc<Gateway>,
    pub editor: Arc<Gateway>,
    pub target_model: ModelSettings,
    pub editor_model: ModelSettings,
}
