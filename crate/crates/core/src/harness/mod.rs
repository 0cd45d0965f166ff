//! Experiment driver: trials over an `ε × k` grid with scoring and reports.
//!
//! Seeds: the data split uses `derive_seed(master, [SPLIT])`, the test
//! subsample `derive_seed(master, [TEST])`, and cell `(ε_i, k_j, t)` of a
//! pipeline runs under `derive_seed(master, [pipeline, i, j, t])`. Inside a
//! trial, perturbation or the GDP build draws from `[.., 0, attempt]` and
//! query `q` from `[.., 1, q]` under the trial seed.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

pub use config::{
    format_epsilon, parse_epsilon, BackendSpec, ExperimentConfig, Pipeline, DEFAULT_EPSILONS, DEFAULT_KS,
    DEFAULT_TRIALS,
};
pub use report::{
    mean_std, read_trials_csv, render_table, summarize, write_baselines_csv, write_trials_csv, BaselineRow,
    CellSummary, TrialRow,
};

use crate::accountant::{amplify, PrivacyBudget, SpendLedger};
use crate::baselines::{evaluate, train_gaussian_nb, train_logistic_regression, LR_EPOCHS, LR_LEARNING_RATE};
use crate::binarize::Binarization;
use crate::config::{DatasetConfig, GDP_TEMPLATE_ID};
use crate::dataset::{load_csv_with_report, split_train_test, subsample_test, Dataset, Record};
use crate::error::{Error, Result};
use crate::gdp::gdp_demonstrations;
use crate::ldp::{
    collection_ledger, ldp_demonstrations, observed_frequencies, perturb_dataset, reconstruct_joint,
    sample_dataset, BudgetAllocation, ReconstructedDistribution,
};
use crate::llm::{extract_answer, CompletionBackend, CompletionRequest, HttpBackend, MockBackend, MockMode, Verdict};
use crate::prompt::{assemble_prompt, render_query, DemonstrationSet, Prompt, PromptTemplate};
use crate::rng::{derive_seed, derived};

pub const LDP_TEMPLATE_ID: &str = crate::binarize::LDP_TEMPLATE_ID;
pub const RESUME_MARKER: &str = "RESUME";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const BASELINES_FILE: &str = "baselines.csv";

const SPLIT: u64 = 0x5350;
const TEST: u64 = 0x5445;
const BUILD: u64 = 0;
const QUERY: u64 = 1;
const BASELINE: u64 = 2;

/// Knobs shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOptions {
    pub max_concurrency: usize,
    pub record_wall_time: bool,
    pub empty_group_retries: usize,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            max_concurrency: 4,
            record_wall_time: true,
            empty_group_retries: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    /// Scored as incorrect.
    pub unparsed: usize,
}

impl Tally {
    pub fn add(&mut self, verdict: Verdict, truth: bool) {
        match (verdict.as_label(), truth) {
            (Some(true), true) => self.true_positive += 1,
            (Some(false), false) => self.true_negative += 1,
            (Some(true), false) => self.false_positive += 1,
            (Some(false), true) => self.false_negative += 1,
            (None, _) => self.unparsed += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative + self.unparsed
    }

    pub fn accuracy(&self) -> f64 {
        self.rate(self.true_positive + self.true_negative)
    }

    fn rate(&self, n: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }
}

/// Result of one trial plus instrumentation.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub tally: Tally,
    pub verdicts: Vec<Verdict>,
    /// Demonstration sets constructed: one per query for LDP, one per
    /// attempt for GDP.
    pub demo_builds: usize,
    pub ledger: SpendLedger,
    pub wall_ms: u64,
}

impl TrialOutcome {
    pub fn row(&self, dataset: &str, pipeline: Pipeline, epsilon: f64, k: usize, trial: usize, seed: u64) -> TrialRow {
        TrialRow {
            dataset: dataset.to_string(),
            pipeline,
            epsilon,
            k,
            trial,
            seed,
            accuracy: self.tally.accuracy(),
            tp_rate: self.tally.rate(self.tally.true_positive),
            tn_rate: self.tally.rate(self.tally.true_negative),
            unparsed: self.tally.unparsed,
            wall_ms: self.wall_ms,
        }
    }
}

/// Queries of a pipeline: records (what an oracle mock may inspect) and their
/// rendered text.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub records: Vec<Record>,
    pub texts: Vec<String>,
}

impl QuerySet {
    pub fn render(dataset: &Dataset, template: &PromptTemplate) -> Result<Self> {
        template.check_schema(dataset.schema())?;
        let texts = dataset
            .records()
            .iter()
            .map(|r| render_query(template, r, dataset.schema()))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuerySet {
            records: dataset.records().to_vec(),
            texts,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Ask every query with bounded concurrency. `demos(q)` builds the
/// demonstrations for query `q`; results are reduced in query order.
fn ask_all<F>(
    queries: &QuerySet,
    backend: &dyn CompletionBackend,
    max_concurrency: usize,
    demos: F,
) -> Result<Vec<Verdict>>
where
    F: Fn(usize) -> Result<DemonstrationSet> + Sync,
{
    let n = queries.len();
    let slots: Mutex<Vec<Option<Result<Verdict>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let workers = max_concurrency.max(1).min(n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let q = next.fetch_add(1, Ordering::Relaxed);
                if q >= n {
                    break;
                }
                let result = demos(q).and_then(|d| {
                    let prompt: Prompt = assemble_prompt(&d, &queries.texts[q]);
                    let completion = backend.complete(CompletionRequest {
                        prompt: &prompt,
                        query: Some(&queries.records[q]),
                    })?;
                    Ok(extract_answer(&completion.text))
                });
                if result.is_err() {
                    failed.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("result lock")[q] = Some(result);
            });
        }
    });
    let slots = slots.into_inner().expect("result lock");
    let mut out = Vec::with_capacity(n);
    for slot in slots {
        match slot {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            // skipped after another query failed; that error is returned first
            None => continue,
        }
    }
    if out.len() != n {
        return Err(Error::InvalidArgument("query evaluation aborted".into()));
    }
    Ok(out)
}

fn score(queries: &QuerySet, verdicts: &[Verdict]) -> Tally {
    let mut t = Tally::default();
    for (v, r) in verdicts.iter().zip(&queries.records) {
        t.add(*v, r.label);
    }
    t
}

fn elapsed_ms(start: Instant, record: bool) -> u64 {
    if record {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

/// Binarized training data and queries for the LDP pipeline.
#[derive(Debug, Clone)]
pub struct LdpSetup {
    pub binarization: Binarization,
    pub train: Dataset,
    pub queries: QuerySet,
    pub template: PromptTemplate,
}

impl LdpSetup {
    /// Fit mean thresholds on the raw training split, binarize both splits
    /// and render the queries.
    pub fn new(train: &Dataset, test: &Dataset, template: PromptTemplate) -> Result<Self> {
        let binarization = Binarization::fit(train)?;
        Self::with_binarization(binarization, train, test, template)
    }

    pub fn with_binarization(
        binarization: Binarization,
        train: &Dataset,
        test: &Dataset,
        template: PromptTemplate,
    ) -> Result<Self> {
        let train = binarization.apply(train)?;
        let test = binarization.apply(test)?;
        let queries = QuerySet::render(&test, &template)?;
        Ok(LdpSetup {
            binarization,
            train,
            queries,
            template,
        })
    }

    pub fn uniform_allocation(&self, epsilon: f64) -> Result<BudgetAllocation> {
        BudgetAllocation::uniform(epsilon, self.train.schema().num_features() + 1)
    }

    /// Perturb the training split once and reconstruct the joint. The ledger
    /// must total the allocation's budget.
    pub fn collect(&self, allocation: &BudgetAllocation, seed: u64) -> Result<(ReconstructedDistribution, SpendLedger)> {
        let schema = self.train.schema();
        let dims = schema.joint_dims().expect("binarized schema");
        let matrices = allocation.matrices(&dims)?;
        let names = schema.column_names();
        let ledger = collection_ledger(&matrices, &names);
        ledger.assert_total(PrivacyBudget::new(allocation.total())?)?;
        let perturbed = perturb_dataset(&self.train, &matrices, seed)?;
        let lambda = observed_frequencies(&perturbed)?;
        let dist = reconstruct_joint(&lambda, &matrices, schema.clone())?;
        Ok((dist, ledger))
    }
}

/// One LDP trial: perturb and reconstruct once, then a fresh `k`-sample of
/// demonstrations for every query.
pub fn run_ldp_trial(
    setup: &LdpSetup,
    allocation: &BudgetAllocation,
    k: usize,
    trial_seed: u64,
    backend: &dyn CompletionBackend,
    options: TrialOptions,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let (dist, ledger) = setup.collect(allocation, derive_seed(trial_seed, &[BUILD, 0]))?;
    let verdicts = ask_all(&setup.queries, backend, options.max_concurrency, |q| {
        ldp_demonstrations(&dist, k, &mut derived(trial_seed, &[QUERY, q as u64]), &setup.template)
    })?;
    Ok(TrialOutcome {
        tally: score(&setup.queries, &verdicts),
        demo_builds: verdicts.len(),
        verdicts,
        ledger,
        wall_ms: elapsed_ms(start, options.record_wall_time),
    })
}

/// LR and naive Bayes trained on `|train|` records sampled from the same
/// reconstruction a trial with this seed would use.
pub fn run_ldp_baselines(setup: &LdpSetup, allocation: &BudgetAllocation, trial_seed: u64) -> Result<[(String, f64); 2]> {
    let (dist, _) = setup.collect(allocation, derive_seed(trial_seed, &[BUILD, 0]))?;
    let mut rng = derived(trial_seed, &[BASELINE]);
    let train = sample_dataset(&dist, setup.train.len(), &mut rng)?;
    let test = Dataset::new(
        setup.train.schema().clone(),
        setup.queries.records.clone(),
        crate::dataset::Provenance::Raw,
    )?;
    let lr = train_logistic_regression(&train, LR_EPOCHS, LR_LEARNING_RATE, derive_seed(trial_seed, &[BASELINE, 1]))?;
    let gnb = train_gaussian_nb(&train, derive_seed(trial_seed, &[BASELINE, 2]))?;
    Ok([("lr".into(), evaluate(&lr, &test)), ("gnb".into(), evaluate(&gnb, &test))])
}

/// Raw training data, queries and GROUP BY plans for the GDP pipeline.
#[derive(Debug, Clone)]
pub struct GdpSetup {
    pub train: Dataset,
    pub queries: QuerySet,
    pub template: PromptTemplate,
    pub config: DatasetConfig,
    pub n_target: usize,
}

impl GdpSetup {
    pub fn new(train: Dataset, test: &Dataset, config: DatasetConfig, n_target: usize) -> Result<Self> {
        let template = config.template(GDP_TEMPLATE_ID)?.clone();
        let queries = QuerySet::render(test, &template)?;
        Ok(GdpSetup {
            train,
            queries,
            template,
            config,
            n_target,
        })
    }

    /// `ε / (F + 1)` for every feature and the label.
    pub fn uniform_budgets(&self, epsilon: f64) -> Vec<f64> {
        let parts = self.train.schema().num_features() + 1;
        vec![epsilon / parts as f64; parts]
    }
}

/// One GDP trial: a single demonstration set reused for every query.
pub fn run_gdp_trial(
    setup: &GdpSetup,
    epsilon: f64,
    k: usize,
    trial_seed: u64,
    backend: &dyn CompletionBackend,
    options: TrialOptions,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let plan = setup.config.plan(k)?;
    let budgets = setup.uniform_budgets(epsilon);
    let mut attempt = 0;
    let build = loop {
        let mut rng = derived(trial_seed, &[BUILD, attempt as u64]);
        match gdp_demonstrations(&setup.train, setup.n_target, &plan, &budgets, &mut rng, &setup.template) {
            Err(Error::EmptyGroup { bucket }) if attempt < options.empty_group_retries => {
                log::warn!("empty GROUP BY bucket {bucket:?}; rebuilding (attempt {})", attempt + 2);
                attempt += 1;
            }
            other => break other?,
        }
    };
    let expected = if epsilon.is_infinite() {
        PrivacyBudget::INFINITE
    } else {
        amplify(epsilon, setup.n_target as u64, setup.train.len() as u64)?
    };
    build.ledger.assert_total(expected)?;
    let demos = &build.demonstrations;
    let verdicts = ask_all(&setup.queries, backend, options.max_concurrency, |_| Ok(demos.clone()))?;
    Ok(TrialOutcome {
        tally: score(&setup.queries, &verdicts),
        demo_builds: attempt + 1,
        verdicts,
        ledger: build.ledger,
        wall_ms: elapsed_ms(start, options.record_wall_time),
    })
}

/// Loaded data for a grid run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: DatasetConfig,
    pub train: Dataset,
    pub test: Dataset,
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = DatasetConfig::load(&config.dataset_config)?;
        let (data, report) = load_csv_with_report(&config.data, dataset.schema.clone())?;
        if report.rows_dropped_missing > 0 {
            log::warn!("dropped {} rows with missing values", report.rows_dropped_missing);
        }
        Self::from_parts(config, dataset, &data)
    }

    /// Split `data` 80/20 and subsample the test split.
    pub fn from_parts(config: ExperimentConfig, dataset: DatasetConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        let (train, test) = split_train_test(data, derive_seed(config.master_seed, &[SPLIT]))?;
        let test = subsample_test(&test, config.test_fraction, derive_seed(config.master_seed, &[TEST]))?;
        Ok(Experiment {
            config,
            dataset,
            train,
            test,
        })
    }

    pub fn options(&self) -> TrialOptions {
        TrialOptions {
            max_concurrency: self.config.backend.max_concurrency(),
            record_wall_time: self.config.record_wall_time,
            empty_group_retries: self.config.empty_group_retries,
        }
    }

    pub fn cell_seed(&self, eps_index: usize, k_index: usize, trial: usize) -> u64 {
        derive_seed(
            self.config.master_seed,
            &[self.config.pipeline.tag(), eps_index as u64, k_index as u64, trial as u64],
        )
    }
}

pub fn build_backend(spec: &BackendSpec) -> Result<Box<dyn CompletionBackend>> {
    Ok(match spec {
        BackendSpec::Mock { mode, .. } => {
            let mode = match mode.as_str() {
                "echo-majority" => MockMode::EchoMajority,
                "oracle" => MockMode::Oracle(Arc::new(|r: &Record| r.label)),
                other => match other.strip_prefix("fixed:") {
                    Some(text) => MockMode::Fixed(text.to_string()),
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "unknown mock mode {other:?} (echo-majority, oracle, fixed:<text>)"
                        )))
                    }
                },
            };
            Box::new(MockBackend::new(mode))
        }
        BackendSpec::Http(c) => Box::new(HttpBackend::new(c.clone())?),
    })
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<CellSummary>,
    pub baselines: Vec<BaselineRow>,
    pub table: String,
}

enum Setup {
    Ldp(LdpSetup),
    Gdp(GdpSetup),
}

fn persist(out: Option<&Path>, rows: &[TrialRow]) -> Result<()> {
    if let Some(dir) = out {
        write_trials_csv(rows, &dir.join(TRIALS_FILE))?;
    }
    Ok(())
}

/// Run every `(ε, k, trial)` cell in grid order.
///
/// With `out` set, `trials.csv` is rewritten after each cell; on failure a
/// `RESUME` marker names the failed cell. With `resume`, rows already in
/// `trials.csv` are kept and their cells skipped. Cell seeds depend only on
/// grid position, so a resumed run matches an uninterrupted one.
pub fn run_grid(experiment: &Experiment, backend: &dyn CompletionBackend, out: Option<&Path>, resume: bool) -> Result<GridReport> {
    let cfg = &experiment.config;
    let dataset_id = experiment.dataset.schema.dataset_id.clone();
    let setup = match cfg.pipeline {
        Pipeline::Ldp => Setup::Ldp(LdpSetup::new(
            &experiment.train,
            &experiment.test,
            experiment.dataset.template(LDP_TEMPLATE_ID)?.clone(),
        )?),
        Pipeline::Gdp => Setup::Gdp(GdpSetup::new(
            experiment.train.clone(),
            &experiment.test,
            experiment.dataset.clone(),
            cfg.n_target.expect("validated"),
        )?),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut done: Vec<TrialRow> = match out {
        Some(dir) if resume && dir.join(TRIALS_FILE).exists() => read_trials_csv(&dir.join(TRIALS_FILE))?,
        _ => Vec::new(),
    };
    let options = experiment.options();
    let mut rows = Vec::new();
    let mut baselines = Vec::new();

    for (ei, &epsilon) in cfg.epsilons.iter().enumerate() {
        for (ki, &k) in cfg.ks.iter().enumerate() {
            for trial in 0..cfg.trials {
                let seed = experiment.cell_seed(ei, ki, trial);
                if let Some(pos) = done.iter().position(|r| {
                    r.epsilon.to_bits() == epsilon.to_bits() && r.k == k && r.trial == trial && r.seed == seed
                }) {
                    rows.push(done.remove(pos));
                    continue;
                }
                let outcome = match &setup {
                    Setup::Ldp(s) => s
                        .uniform_allocation(epsilon)
                        .and_then(|a| run_ldp_trial(s, &a, k, seed, backend, options)),
                    Setup::Gdp(s) => run_gdp_trial(s, epsilon, k, seed, backend, options),
                };
                let outcome = match outcome {
                    Ok(o) => o,
                    Err(e) => {
                        persist(out, &rows)?;
                        if let Some(dir) = out {
                            let marker = format!(
                                "epsilon={} k={k} trial={trial}\n{e}\n",
                                format_epsilon(epsilon)
                            );
                            std::fs::write(dir.join(RESUME_MARKER), marker)
                                .map_err(|io| Error::io(dir.join(RESUME_MARKER), io))?;
                        }
                        return Err(e);
                    }
                };
                log::info!(
                    "{} ε={} k={k} trial={trial}: accuracy {:.3}",
                    cfg.pipeline,
                    format_epsilon(epsilon),
                    outcome.tally.accuracy()
                );
                rows.push(outcome.row(&dataset_id, cfg.pipeline, epsilon, k, trial, seed));
                persist(out, &rows)?;
            }
        }
        if let (true, Setup::Ldp(s)) = (cfg.baselines, &setup) {
            for trial in 0..cfg.trials {
                let seed = experiment.cell_seed(ei, 0, trial);
                for (model, accuracy) in run_ldp_baselines(s, &s.uniform_allocation(epsilon)?, seed)? {
                    baselines.push(BaselineRow {
                        dataset: dataset_id.clone(),
                        epsilon,
                        trial,
                        model,
                        accuracy,
                    });
                }
            }
        }
    }

    let summaries = summarize(&rows);
    let title = format!(
        "dataset: {dataset_id}  pipeline: {}  trials: {}  backend: {}",
        cfg.pipeline,
        cfg.trials,
        backend.id()
    );
    let table = render_table(&title, &summaries);
    if let Some(dir) = out {
        persist(out, &rows)?;
        std::fs::write(dir.join(SUMMARY_FILE), &table).map_err(|e| Error::io(dir.join(SUMMARY_FILE), e))?;
        if cfg.baselines && !baselines.is_empty() {
            write_baselines_csv(&baselines, &dir.join(BASELINES_FILE))?;
        }
        let marker: PathBuf = dir.join(RESUME_MARKER);
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
    }
    Ok(GridReport {
        rows,
        summaries,
        baselines,
        table,
    })
}
