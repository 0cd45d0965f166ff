//! Differentially private demonstration synthesis for in-context learning
//! on tabular data.
//!
//! Two pipelines turn a private table into k-shot prompts:
//!
//! * local DP: binarize, perturb each attribute with k-ary randomized
//!   response, reconstruct the joint distribution and sample demonstrations;
//! * global DP: Poisson-subsample, GROUP BY into `k` subsets and release a
//!   Laplace-noised aggregate per subset.

pub mod accountant;
pub mod baselines;
pub mod binarize;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gdp;
pub mod harness;
pub mod ldp;
pub mod llm;
pub mod prompt;
pub mod rng;
pub mod schema;
pub mod stats;

pub use accountant::{amplify, PrivacyBudget, SpendLedger};
pub use binarize::{binarize, Binarization};
pub use dataset::{load_csv, split_train_test, subsample_test, Dataset, Provenance, Record, Value};
pub use error::{Error, Result};
pub use gdp::{gdp_demonstrations, AggregateRecord, GdpBuild, GroupByPlan};
pub use ldp::{
    build_distortion_matrix, perturb_dataset, reconstruct_joint, sample_reconstructed, DistortionMatrix,
    FrequencyTensor, ReconstructedDistribution, SampledRecord,
};
pub use llm::{extract_answer, BackendConfig, CompletionBackend, HttpBackend, MockBackend, MockMode, Verdict};
pub use prompt::{assemble_prompt, render_demonstration, render_query, DemonstrationSet, DpRow, Prompt, PromptTemplate};
pub use schema::{FeatureKind, FeatureSpec, Schema};
