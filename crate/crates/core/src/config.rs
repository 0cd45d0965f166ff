//! Dataset description files (TOML): schema, prompt templates and GROUP BY
//! plans.
//!
//! ```toml
//! dataset_id = "blood"
//!
//! [label]
//! name = "donated"
//! negative = "0"
//! positive = "1"
//!
//! [[features]]
//! name = "recency"
//! kind = "numerical"
//! lower = 0
//! upper = 74
//! integer = true
//! ldp = { above = "{threshold_int} or more", below = "less than {threshold_int}" }
//!
//! [templates.gdp]
//! description = "... {recency} months ago."
//! question = "Yes or No?"
//!
//! [[group_by]]
//! k = 2
//! keys = [{ column = "donated", values = [["1"], ["0"]] }]
//! ```
//!
//! A threshold key `{ column, threshold = t }` splits into `x <= t` and
//! `x > t`; `{ column, below = t }` splits into `x < t` and `x >= t`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gdp::{Bucketing, GroupByPlan, GroupKey};
use crate::prompt::PromptTemplate;
use crate::schema::{BucketPhrasing, FeatureSpec, Schema};

pub const GDP_TEMPLATE_ID: &str = "gdp";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset_id: String,
    label: RawLabel,
    features: Vec<RawFeature>,
    #[serde(default)]
    templates: BTreeMap<String, RawTemplate>,
    #[serde(default)]
    group_by: Vec<RawPlan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabel {
    name: String,
    negative: String,
    positive: String,
    yes: Option<String>,
    no: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeature {
    name: String,
    kind: RawKind,
    lower: Option<f64>,
    upper: Option<f64>,
    #[serde(default)]
    integer: bool,
    domain: Option<Vec<String>>,
    #[serde(default)]
    phrasing: BTreeMap<String, String>,
    ldp: Option<RawBucketPhrasing>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBucketPhrasing {
    above: String,
    below: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    description: String,
    question: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    k: usize,
    keys: Vec<RawKey>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKey {
    column: String,
    values: Option<Vec<Vec<String>>>,
    threshold: Option<f64>,
    below: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub schema: Arc<Schema>,
    pub templates: BTreeMap<String, PromptTemplate>,
    pub group_by: Vec<GroupByPlan>,
}

impl DatasetConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;

        let mut label = FeatureSpec::categorical(raw.label.name, vec![raw.label.negative.clone(), raw.label.positive.clone()])?;
        if let Some(no) = raw.label.no {
            label = label.with_phrase(raw.label.negative, no)?;
        }
        if let Some(yes) = raw.label.yes {
            label = label.with_phrase(raw.label.positive, yes)?;
        }

        let features = raw
            .features
            .into_iter()
            .map(feature)
            .collect::<Result<Vec<_>>>()?;
        let schema = Arc::new(Schema::new(raw.dataset_id, features, label, GDP_TEMPLATE_ID)?);

        let templates = raw
            .templates
            .into_iter()
            .map(|(id, t)| PromptTemplate::new(id.clone(), t.description, t.question).map(|t| (id, t)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        if let Some(t) = templates.get(GDP_TEMPLATE_ID) {
            t.check_schema(&schema)?;
        }

        let group_by = raw
            .group_by
            .into_iter()
            .map(|p| {
                let keys = p.keys.into_iter().map(key).collect::<Result<Vec<_>>>()?;
                let plan = GroupByPlan::new(keys, p.k);
                plan.validate(&schema)?;
                Ok(plan)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(DatasetConfig {
            schema,
            templates,
            group_by,
        })
    }

    pub fn template(&self, id: &str) -> Result<&PromptTemplate> {
        self.templates
            .get(id)
            .ok_or_else(|| config_error(format!("no template {id:?} in dataset config")))
    }

    /// GROUP BY plan for `k`; `k = 1` needs no entry.
    pub fn plan(&self, k: usize) -> Result<GroupByPlan> {
        if k == 1 {
            return Ok(GroupByPlan::single());
        }
        self.group_by
            .iter()
            .find(|p| p.k == k)
            .cloned()
            .ok_or_else(|| config_error(format!("no group_by plan with k = {k}")))
    }
}

fn config_error(message: String) -> Error {
    Error::Config {
        path: "<inline>".into(),
        message,
    }
}

fn feature(raw: RawFeature) -> Result<FeatureSpec> {
    let mut spec = match raw.kind {
        RawKind::Numerical => {
            let (Some(lower), Some(upper)) = (raw.lower, raw.upper) else {
                return Err(config_error(format!("numerical feature {:?} needs lower and upper", raw.name)));
            };
            if raw.domain.is_some() {
                return Err(config_error(format!("numerical feature {:?} takes no domain", raw.name)));
            }
            FeatureSpec::numerical(raw.name, lower, upper, raw.integer)?
        }
        RawKind::Categorical => {
            let Some(domain) = raw.domain else {
                return Err(config_error(format!("categorical feature {:?} needs a domain", raw.name)));
            };
            if raw.lower.is_some() || raw.upper.is_some() || raw.integer {
                return Err(config_error(format!("categorical feature {:?} takes no bounds", raw.name)));
            }
            FeatureSpec::categorical(raw.name, domain)?
        }
    };
    for (k, v) in raw.phrasing {
        spec = spec.with_phrase(k, v)?;
    }
    if let Some(p) = raw.ldp {
        spec = spec.with_bucket_phrasing(BucketPhrasing {
            above: p.above,
            below: p.below,
        });
    }
    Ok(spec)
}

fn key(raw: RawKey) -> Result<GroupKey> {
    let rule = match (raw.values, raw.threshold, raw.below) {
        (Some(values), None, None) => Bucketing::Categories(values),
        (None, Some(at), None) => Bucketing::Threshold { at, strict: false },
        (None, None, Some(at)) => Bucketing::Threshold { at, strict: true },
        _ => {
            return Err(config_error(format!(
                "group_by key {:?} needs exactly one of values, threshold, below",
                raw.column
            )))
        }
    };
    Ok(GroupKey {
        column: raw.column,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
dataset_id = "toy"

[label]
name = "y"
negative = "0"
positive = "1"

[[features]]
name = "age"
kind = "numerical"
lower = 0
upper = 100
integer = true
ldp = { above = "over {threshold_int}", below = "at most {threshold_int}" }

[[features]]
name = "sex"
kind = "categorical"
domain = ["f", "m"]
phrasing = { f = "female", m = "male" }

[templates.gdp]
description = "A {sex} aged {age}."
question = "Yes or No?"

[[group_by]]
k = 2
keys = [{ column = "y", values = [["1"], ["0"]] }]

[[group_by]]
k = 4
keys = [{ column = "y", values = [["1"], ["0"]] }, { column = "age", below = 40 }]
"#;

    #[test]
    fn parses_toy() {
        let c = DatasetConfig::parse(TOY).unwrap();
        assert_eq!(c.schema.column_names(), vec!["age", "sex", "y"]);
        assert_eq!(c.schema.features[1].phrasing["m"], "male");
        assert_eq!(c.schema.features[0].bucket_phrasing.as_ref().unwrap().above, "over {threshold_int}");
        assert_eq!(c.plan(1).unwrap(), GroupByPlan::single());
        let p4 = c.plan(4).unwrap();
        assert_eq!(p4.keys[1].rule, Bucketing::Threshold { at: 40.0, strict: true });
        assert!(c.plan(8).is_err());
        assert_eq!(c.template("gdp").unwrap().question, "Yes or No?");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(DatasetConfig::parse(&TOY.replace("lower = 0\n", "")).is_err());
        assert!(DatasetConfig::parse(&TOY.replace("{sex}", "{gender}")).is_err());
        assert!(DatasetConfig::parse(&TOY.replace("k = 4", "k = 3")).is_err());
        assert!(DatasetConfig::parse(&TOY.replace("dataset_id", "dataset")).is_err());
        assert!(DatasetConfig::parse("not toml [").is_err());
    }

    #[test]
    fn shipped_blood_config() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/blood.toml");
        let c = DatasetConfig::load(path).unwrap();
        assert_eq!(c.schema.num_features(), 4);
        for k in [1, 2, 4, 8] {
            assert_eq!(c.plan(k).unwrap().k, k);
        }
        assert!(c.template("ldp").is_ok());
    }
}
