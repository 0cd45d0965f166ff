use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{BackendConfig, RetryPolicy};

pub const DEFAULT_EPSILONS: [f64; 6] = [1.0, 5.0, 10.0, 25.0, 50.0, f64::INFINITY];
pub const DEFAULT_KS: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_TRIALS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Ldp,
    Gdp,
}

impl Pipeline {
    pub(crate) fn tag(self) -> u64 {
        match self {
            Pipeline::Ldp => 1,
            Pipeline::Gdp => 2,
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Ldp => "ldp",
            Pipeline::Gdp => "gdp",
        })
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldp" => Ok(Pipeline::Ldp),
            "gdp" => Ok(Pipeline::Gdp),
            _ => Err(Error::InvalidArgument(format!("unknown pipeline {s:?}"))),
        }
    }
}

/// Parse a budget: a positive number or `inf`.
pub fn parse_epsilon(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    let e = match t.as_str() {
        "inf" | "+inf" | "infinity" | "∞" => f64::INFINITY,
        _ => t
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("not a privacy budget: {s:?}")))?,
    };
    if e.is_nan() || e <= 0.0 {
        return Err(Error::NonPositiveBudget(e));
    }
    Ok(e)
}

pub fn format_epsilon(e: f64) -> String {
    if e.is_infinite() {
        "inf".into()
    } else {
        format!("{e}")
    }
}

/// Which completion backend a run talks to.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    /// `echo-majority`, `oracle` (answers with the true query label) or
    /// `fixed:<text>`.
    Mock { mode: String, max_concurrency: usize },
    Http(BackendConfig),
}

impl BackendSpec {
    pub fn max_concurrency(&self) -> usize {
        match self {
            BackendSpec::Mock { max_concurrency, .. } => *max_concurrency,
            BackendSpec::Http(c) => c.max_concurrency,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset description (schema, templates, GROUP BY plans).
    pub dataset_config: PathBuf,
    /// CSV with the full table, split 80/20 by the harness.
    pub data: PathBuf,
    pub pipeline: Pipeline,
    pub epsilons: Vec<f64>,
    pub ks: Vec<usize>,
    pub trials: usize,
    /// GDP Poisson subsample target `n`.
    pub n_target: Option<usize>,
    pub test_fraction: f64,
    pub master_seed: u64,
    /// Extra GDP builds allowed when a GROUP BY bucket comes out empty.
    pub empty_group_retries: usize,
    /// Zero `wall_ms` so reports are byte-reproducible.
    pub record_wall_time: bool,
    pub baselines: bool,
    pub backend: BackendSpec,
}

impl ExperimentConfig {
    pub fn new(dataset_config: impl Into<PathBuf>, data: impl Into<PathBuf>, pipeline: Pipeline) -> Self {
        ExperimentConfig {
            dataset_config: dataset_config.into(),
            data: data.into(),
            pipeline,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            trials: DEFAULT_TRIALS,
            n_target: None,
            test_fraction: 1.0,
            master_seed: 0,
            empty_group_retries: 0,
            record_wall_time: true,
            baselines: false,
            backend: BackendSpec::Mock {
                mode: "echo-majority".into(),
                max_concurrency: 4,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.epsilons.is_empty() || self.ks.is_empty() {
            return Err(Error::InvalidArgument("epsilon and k grids must be non-empty".into()));
        }
        if let Some(&e) = self.epsilons.iter().find(|e| e.is_nan() || **e <= 0.0) {
            return Err(Error::NonPositiveBudget(e));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction must lie in (0, 1], got {}",
                self.test_fraction
            )));
        }
        if self.pipeline == Pipeline::Gdp && self.n_target.is_none() {
            return Err(Error::InvalidArgument("GDP runs need n_target".into()));
        }
        if self.backend.max_concurrency() < 1 {
            return Err(Error::InvalidArgument("max_concurrency must be at least 1".into()));
        }
        if let BackendSpec::Http(c) = &self.backend {
            c.validate()?;
        }
        Ok(())
    }

    /// Read a TOML experiment file. Relative paths resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawExperiment = toml::from_str(text).map_err(|e| Error::Config {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        let mut c = ExperimentConfig::new(base.join(raw.dataset_config), base.join(raw.data), raw.pipeline);
        if let Some(eps) = raw.epsilons {
            c.epsilons = eps.into_iter().map(RawEpsilon::value).collect::<Result<_>>()?;
        }
        if let Some(ks) = raw.ks {
            c.ks = ks;
        }
        c.trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
        c.n_target = raw.n_target;
        c.test_fraction = raw.test_fraction.unwrap_or(1.0);
        c.master_seed = raw.master_seed.unwrap_or(0);
        c.empty_group_retries = raw.empty_group_retries.unwrap_or(0);
        c.record_wall_time = raw.record_wall_time.unwrap_or(true);
        c.baselines = raw.baselines.unwrap_or(false);
        if let Some(b) = raw.backend {
            c.backend = b.into_spec()?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    dataset_config: PathBuf,
    data: PathBuf,
    pipeline: Pipeline,
    epsilons: Option<Vec<RawEpsilon>>,
    ks: Option<Vec<usize>>,
    trials: Option<usize>,
    n_target: Option<usize>,
    test_fraction: Option<f64>,
    master_seed: Option<u64>,
    empty_group_retries: Option<usize>,
    record_wall_time: Option<bool>,
    baselines: Option<bool>,
    backend: Option<RawBackend>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEpsilon {
    Number(f64),
    Text(String),
}

impl RawEpsilon {
    fn value(self) -> Result<f64> {
        match self {
            RawEpsilon::Number(x) => parse_epsilon(&x.to_string()),
            RawEpsilon::Text(s) => parse_epsilon(&s),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    kind: String,
    mode: Option<String>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key: Option<String>,
    max_tokens: Option<u32>,
    temperature: Option<f64>,
    timeout_secs: Option<f64>,
    max_concurrency: Option<usize>,
    retries: Option<usize>,
    backoff_ms: Option<u64>,
}

impl RawBackend {
    fn into_spec(self) -> Result<BackendSpec> {
        let d = BackendConfig::default();
        match self.kind.as_str() {
            "mock" => Ok(BackendSpec::Mock {
                mode: self.mode.unwrap_or_else(|| "echo-majority".into()),
                max_concurrency: self.max_concurrency.unwrap_or(d.max_concurrency),
            }),
            "http" => Ok(BackendSpec::Http(BackendConfig {
                endpoint: self.endpoint.unwrap_or(d.endpoint),
                model: self.model.unwrap_or(d.model),
                api_key: self.api_key,
                max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
                temperature: self.temperature.unwrap_or(d.temperature),
                timeout: self.timeout_secs.map(Duration::from_secs_f64).unwrap_or(d.timeout),
                max_concurrency: self.max_concurrency.unwrap_or(d.max_concurrency),
                retry: RetryPolicy {
                    retries: self.retries.unwrap_or(d.retry.retries),
                    backoff: self.backoff_ms.map(Duration::from_millis).unwrap_or(d.retry.backoff),
                },
            })),
            other => Err(Error::Config {
                path: "<inline>".into(),
                message: format!("unknown backend kind {other:?} (expected mock or http)"),
            }),
        }
    }
}
