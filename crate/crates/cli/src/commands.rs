use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dpicl_core::accountant::amplify;
use dpicl_core::binarize::Binarization;
use dpicl_core::config::DatasetConfig;
use dpicl_core::dataset::{load_csv, load_perturbed_csv, write_csv, Dataset};
use dpicl_core::gdp::gdp_demonstrations;
use dpicl_core::harness::{
    build_backend, format_epsilon, parse_epsilon, read_trials_csv, render_table, run_grid, summarize, BackendSpec,
    Experiment, ExperimentConfig,
};
use dpicl_core::ldp::{
    ldp_demonstrations, observed_frequencies, reconstruct_joint, BudgetAllocation, ReconstructedDistribution,
};
use dpicl_core::llm::BackendConfig;
use dpicl_core::prompt::{assemble_prompt, render_query, DemonstrationSet};
use dpicl_core::rng;
use dpicl_core::stats::paired_t_test;
use dpicl_core::Error as CoreError;

use crate::{BackendArgs, Command, DataArgs};

/// Usage problems detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::Backend(_)) => 3,
        _ => 2,
    }
}

/// Error chain joined with `: `, skipping causes already quoted by their parent.
pub fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

/// Written next to a perturbed CSV as `<file>.meta.json`.
#[derive(Debug, Serialize, Deserialize)]
struct PerturbMeta {
    provenance: String,
    dataset_config: PathBuf,
    epsilon: String,
    per_attribute: Vec<String>,
    thresholds: Vec<(String, f64)>,
    seed: u64,
    records: usize,
}

fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn load_raw(args: &DataArgs) -> Result<(DatasetConfig, Dataset)> {
    let cfg = DatasetConfig::load(&args.dataset_config)?;
    let data = load_csv(&args.data, cfg.schema.clone())?;
    Ok((cfg, data))
}

fn epsilon(text: &str) -> Result<f64> {
    parse_epsilon(text).map_err(|e| usage(e.to_string()))
}

fn series(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("not a number: {x:?}"))))
        .collect()
}

fn load_reconstruction(perturbed: &Path) -> Result<(DatasetConfig, ReconstructedDistribution)> {
    let meta_file = meta_path(perturbed);
    let text = std::fs::read_to_string(&meta_file).with_context(|| format!("reading {}", meta_file.display()))?;
    let meta: PerturbMeta = serde_json::from_str(&text).with_context(|| format!("parsing {}", meta_file.display()))?;
    if meta.provenance != "perturbed" {
        return Err(CoreError::Provenance {
            expected: "perturbed".into(),
            found: meta.provenance,
        }
        .into());
    }
    let cfg = DatasetConfig::load(&meta.dataset_config)?;
    let bin = Binarization::from_thresholds(cfg.schema.clone(), &meta.thresholds)?;
    let schema = bin.schema().clone();
    let per_attribute = meta
        .per_attribute
        .iter()
        .map(|e| parse_epsilon(e))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let allocation = BudgetAllocation::from_parts(per_attribute)?;
    allocation.check_total(parse_epsilon(&meta.epsilon)?)?;
    let matrices = allocation.matrices(&schema.joint_dims().expect("binary schema"))?;
    let data = load_perturbed_csv(perturbed, schema.clone())?;
    let lambda = observed_frequencies(&data)?;
    Ok((cfg, reconstruct_joint(&lambda, &matrices, schema)?))
}

fn backend_spec(file: &BackendSpec, flags: &BackendArgs) -> Result<BackendSpec> {
    if let Some(mode) = &flags.mock {
        return Ok(BackendSpec::Mock {
            mode: mode.clone(),
            max_concurrency: file.max_concurrency(),
        });
    }
    let spec = match (file, &flags.endpoint) {
        (BackendSpec::Mock { max_concurrency, .. }, Some(endpoint)) => BackendSpec::Http(BackendConfig {
            endpoint: endpoint.clone(),
            max_concurrency: *max_concurrency,
            ..BackendConfig::default()
        }),
        (spec, _) => spec.clone(),
    };
    Ok(match spec {
        BackendSpec::Http(mut c) => {
            if !flags.live {
                bail!(usage("the experiment targets a live endpoint; pass --live to allow it"));
            }
            if let Some(e) = &flags.endpoint {
                c.endpoint = e.clone();
            }
            if let Some(m) = &flags.model {
                c.model = m.clone();
            }
            if let Some(k) = &flags.api_key {
                c.api_key = Some(k.clone());
            }
            BackendSpec::Http(c)
        }
        mock => mock,
    })
}

pub fn dispatch(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Perturb {
            data,
            epsilon: eps,
            seed,
            out: path,
        } => {
            let total = epsilon(&eps)?;
            let (_, raw) = load_raw(&data)?;
            let bin = Binarization::fit(&raw)?;
            let binary = bin.apply(&raw)?;
            let schema = binary.schema().clone();
            let allocation = BudgetAllocation::uniform(total, schema.num_features() + 1)?;
            let matrices = allocation.matrices(&schema.joint_dims().expect("binary schema"))?;
            let perturbed = dpicl_core::ldp::perturb_dataset(&binary, &matrices, seed)?;
            write_csv(&perturbed, &path)?;
            let meta = PerturbMeta {
                provenance: perturbed.provenance().to_string(),
                dataset_config: std::fs::canonicalize(&data.dataset_config)
                    .unwrap_or_else(|_| data.dataset_config.clone()),
                epsilon: format_epsilon(total),
                per_attribute: allocation.per_attribute().iter().map(|&e| format_epsilon(e)).collect(),
                thresholds: bin.thresholds(),
                seed,
                records: perturbed.len(),
            };
            let meta_file = meta_path(&path);
            std::fs::write(&meta_file, serde_json::to_string_pretty(&meta)? + "\n")
                .with_context(|| format!("writing {}", meta_file.display()))?;
            for name in bin.dropped() {
                eprintln!("dropped constant feature {name}");
            }
            writeln!(out, "wrote {} perturbed records to {}", perturbed.len(), path.display())?;
        }
        Command::Reconstruct { perturbed, out: path } => {
            let (_, dist) = load_reconstruction(&perturbed)?;
            let schema = dist.schema().clone();
            let mut text = schema.column_names().join(",") + ",probability\n";
            for (cell, p) in dist.tensor().cells().iter().enumerate() {
                let r = dist.decode(cell);
                let mut row: Vec<String> = r
                    .values
                    .iter()
                    .zip(&schema.features)
                    .map(|(v, f)| f.domain().expect("binary")[v.as_category().expect("binary")].clone())
                    .collect();
                row.push(schema.label.domain().expect("binary")[usize::from(r.label)].clone());
                row.push(format!("{p}"));
                text.push_str(&row.join(","));
                text.push('\n');
            }
            match path {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(text.as_bytes())?,
            }
        }
        Command::DemosLdp { perturbed, k, seed } => {
            if k == 0 {
                bail!(usage("k must be at least 1"));
            }
            let (cfg, dist) = load_reconstruction(&perturbed)?;
            let template = cfg.template(dpicl_core::binarize::LDP_TEMPLATE_ID)?;
            let demos = ldp_demonstrations(&dist, k, &mut rng::seeded(seed), template)?;
            writeln!(out, "{demos}")?;
        }
        Command::DemosGdp {
            data,
            epsilon: eps,
            k,
            n_target,
            seed,
            ledger,
        } => {
            let total = epsilon(&eps)?;
            let (cfg, raw) = load_raw(&data)?;
            let parts = raw.schema().num_features() + 1;
            let budgets = vec![total / parts as f64; parts];
            let plan = cfg.plan(k)?;
            let build = gdp_demonstrations(
                &raw,
                n_target,
                &plan,
                &budgets,
                &mut rng::seeded(seed),
                cfg.template(dpicl_core::config::GDP_TEMPLATE_ID)?,
            )?;
            writeln!(out, "{}", build.demonstrations)?;
            if ledger {
                eprint!("{}", build.ledger.audit_log());
            }
        }
        Command::Render {
            data,
            row,
            template,
            demos,
        } => {
            let (cfg, raw) = load_raw(&data)?;
            let tpl = cfg.template(&template)?;
            let (dataset, schema) = if template == dpicl_core::binarize::LDP_TEMPLATE_ID {
                let bin = Binarization::fit(&raw)?;
                let d = bin.apply(&raw)?;
                let s = d.schema().clone();
                (d, s)
            } else {
                let s = raw.schema().clone();
                (raw, s)
            };
            let record = dataset
                .records()
                .get(row)
                .ok_or_else(|| usage(format!("row {row} out of range (0..{})", dataset.len())))?;
            tpl.check_schema(&schema)?;
            let query = render_query(tpl, record, &schema)?;
            let set = match demos {
                Some(p) => DemonstrationSet::parse(
                    &std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => DemonstrationSet::default(),
            };
            writeln!(out, "{}", assemble_prompt(&set, &query))?;
        }
        Command::Run {
            config,
            out: dir,
            resume,
            seed,
            trials,
            epsilons,
            ks,
            backend,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(e) = epsilons {
                cfg.epsilons = e.split(',').map(epsilon).collect::<Result<_>>()?;
            }
            if let Some(k) = ks {
                cfg.ks = k
                    .split(',')
                    .map(|x| x.trim().parse::<usize>().map_err(|_| usage(format!("not a k: {x:?}"))))
                    .collect::<Result<_>>()?;
            }
            cfg.backend = backend_spec(&cfg.backend, &backend)?;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            if resume && dir.is_none() {
                bail!(usage("--resume needs --out"));
            }
            let client = build_backend(&cfg.backend)?;
            let experiment = Experiment::load(cfg)?;
            let report = run_grid(&experiment, client.as_ref(), dir.as_deref(), resume)?;
            write!(out, "{}", report.table)?;
            if !report.baselines.is_empty() {
                writeln!(out, "baselines (mean over trials):")?;
                for model in ["lr", "gnb"] {
                    for &e in &experiment.config.epsilons {
                        let accs: Vec<f64> = report
                            .baselines
                            .iter()
                            .filter(|b| b.model == model && b.epsilon.to_bits() == e.to_bits())
                            .map(|b| b.accuracy)
                            .collect();
                        let (m, s) = dpicl_core::harness::mean_std(&accs);
                        writeln!(out, "  {model} ε={}: {m:.3} ± {s:.3}", format_epsilon(e))?;
                    }
                }
            }
        }
        Command::Report { trials } => {
            let rows = read_trials_csv(&trials)?;
            if rows.is_empty() {
                bail!(CoreError::EmptyFile(trials));
            }
            let title = format!("dataset: {}  pipeline: {}", rows[0].dataset, rows[0].pipeline);
            write!(out, "{}", render_table(&title, &summarize(&rows)))?;
        }
        Command::Amplify {
            epsilon: eps,
            n,
            population,
        } => {
            let e = epsilon(&eps)?;
            if e.is_infinite() {
                writeln!(out, "inf")?;
            } else {
                let amplified = amplify(e, n, population).map_err(|err| usage(err.to_string()))?;
                writeln!(out, "{:.3}", amplified.epsilon())?;
            }
        }
        Command::Ttest { a, b } => {
            let t = paired_t_test(&series(&a)?, &series(&b)?)?;
            writeln!(out, "t = {:.4}  dof = {}  p = {:.6}", t.statistic, t.dof, t.p_value)?;
        }
    }
    Ok(())
}
