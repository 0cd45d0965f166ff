//! Reduction of a raw table to binary features for randomized response.
//!
//! Numerical columns become `[x > mean(x)]`, categorical columns with more
//! than two values are one-hot expanded, and two-valued categoricals pass
//! through unchanged (so binarizing a binary schema is the identity).

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dataset::{Dataset, Provenance, Record, Value};
use crate::error::{Error, Result};
use crate::schema::{BinaryOrigin, BucketPhrasing, FeatureKind, FeatureSpec, Schema};

/// Binary feature cap; keeps the joint tensor at most 2^15 cells.
pub const MAX_BINARY_FEATURES: usize = 14;

pub const LDP_TEMPLATE_ID: &str = "ldp";

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Threshold { source: usize, threshold: f64 },
    OneHot { source: usize, category: usize },
    Passthrough { source: usize },
}

/// A fitted binarization, reusable on the test split.
#[derive(Debug, Clone)]
pub struct Binarization {
    source: Arc<Schema>,
    target: Arc<Schema>,
    rules: Vec<Rule>,
    dropped: Vec<String>,
}

fn format_threshold(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t:.2}")
    }
}

fn fill(template: &str, threshold: Option<f64>, category: Option<&str>) -> String {
    let mut out = template.to_string();
    if let Some(t) = threshold {
        out = out
            .replace("{threshold_int}", &format!("{}", (t + 0.5).floor() as i64))
            .replace("{threshold}", &format_threshold(t));
    }
    if let Some(c) = category {
        out = out.replace("{category}", c);
    }
    out
}

fn binary_spec(name: String, origin: BinaryOrigin, below: String, above: String) -> FeatureSpec {
    let mut phrasing = BTreeMap::new();
    phrasing.insert("0".to_string(), below);
    phrasing.insert("1".to_string(), above);
    FeatureSpec {
        name,
        kind: FeatureKind::Categorical {
            domain: vec!["0".into(), "1".into()],
        },
        phrasing,
        bucket_phrasing: None,
        origin: Some(origin),
    }
}

impl Binarization {
    /// Compute thresholds from `dataset` (the raw training split).
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        dataset.require_provenance(Provenance::Raw)?;
        let schema = dataset.schema();
        let thresholds = schema
            .features
            .iter()
            .enumerate()
            .map(|(idx, feature)| match feature.kind {
                FeatureKind::Numerical { .. } => {
                    let column = dataset.numeric_column(idx);
                    if column.windows(2).all(|w| w[0] == w[1]) {
                        None
                    } else {
                        Some(column.iter().sum::<f64>() / column.len() as f64)
                    }
                }
                FeatureKind::Categorical { .. } => None,
            })
            .collect::<Vec<_>>();
        Self::build(Arc::clone(schema), &thresholds)
    }

    /// Rebuild a binarization from published thresholds rather than data.
    /// Numerical features absent from `thresholds` are dropped.
    pub fn from_thresholds(source: Arc<Schema>, thresholds: &[(String, f64)]) -> Result<Self> {
        let per_feature = source
            .features
            .iter()
            .map(|f| {
                thresholds
                    .iter()
                    .find(|(name, _)| *name == f.name)
                    .map(|&(_, t)| t)
            })
            .collect::<Vec<_>>();
        Self::build(source, &per_feature)
    }

    fn build(schema: Arc<Schema>, thresholds: &[Option<f64>]) -> Result<Self> {
        let mut rules = Vec::new();
        let mut features = Vec::new();
        let mut dropped = Vec::new();

        for (idx, feature) in schema.features.iter().enumerate() {
            match &feature.kind {
                FeatureKind::Numerical { .. } => {
                    let Some(threshold) = thresholds[idx] else {
                        log::warn!(
                            "dropping constant numerical feature {:?}: threshold undefined",
                            feature.name
                        );
                        dropped.push(feature.name.clone());
                        continue;
                    };
                    let phrasing = feature
                        .bucket_phrasing
                        .clone()
                        .unwrap_or_else(BucketPhrasing::numerical_default);
                    rules.push(Rule::Threshold {
                        source: idx,
                        threshold,
                    });
                    features.push(binary_spec(
                        feature.name.clone(),
                        BinaryOrigin::Threshold {
                            source: feature.name.clone(),
                            threshold,
                        },
                        fill(&phrasing.below, Some(threshold), None),
                        fill(&phrasing.above, Some(threshold), None),
                    ));
                }
                FeatureKind::Categorical { domain } if domain.len() == 1 => {
                    log::warn!("dropping single-valued categorical feature {:?}", feature.name);
                    dropped.push(feature.name.clone());
                }
                FeatureKind::Categorical { domain } if domain.len() == 2 => {
                    rules.push(Rule::Passthrough { source: idx });
                    let mut spec = feature.clone();
                    spec.origin.get_or_insert(BinaryOrigin::Passthrough {
                        source: feature.name.clone(),
                    });
                    features.push(spec);
                }
                FeatureKind::Categorical { domain } => {
                    let phrasing = feature
                        .bucket_phrasing
                        .clone()
                        .unwrap_or_else(BucketPhrasing::one_hot_default);
                    for (c, category) in domain.iter().enumerate() {
                        let shown = feature.phrasing.get(category).unwrap_or(category);
                        rules.push(Rule::OneHot {
                            source: idx,
                            category: c,
                        });
                        features.push(binary_spec(
                            format!("{}={}", feature.name, category),
                            BinaryOrigin::OneHot {
                                source: feature.name.clone(),
                                category: category.clone(),
                            },
                            fill(&phrasing.below, None, Some(shown)),
                            fill(&phrasing.above, None, Some(shown)),
                        ));
                    }
                }
            }
        }

        if features.len() > MAX_BINARY_FEATURES {
            return Err(Error::FeatureLimit {
                count: features.len(),
                max: MAX_BINARY_FEATURES,
            });
        }
        let target = Schema::new(
            schema.dataset_id.clone(),
            features,
            schema.label.clone(),
            LDP_TEMPLATE_ID,
        )?;
        Ok(Binarization {
            source: schema,
            target: Arc::new(target),
            rules,
            dropped,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.target
    }

    /// Names of source features dropped as constant.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    /// `(feature name, threshold)` for every thresholded numerical feature.
    pub fn thresholds(&self) -> Vec<(String, f64)> {
        self.rules
            .iter()
            .filter_map(|r| match r {
                Rule::Threshold { source, threshold } => {
                    Some((self.source.features[*source].name.clone(), *threshold))
                }
                _ => None,
            })
            .collect()
    }

    pub fn apply_record(&self, record: &Record) -> Record {
        let values = self
            .rules
            .iter()
            .map(|rule| match *rule {
                Rule::Threshold { source, threshold } => {
                    let x = record.values[source].as_number().expect("numerical source");
                    Value::Category(usize::from(x > threshold))
                }
                Rule::OneHot { source, category } => {
                    let c = record.values[source].as_category().expect("categorical source");
                    Value::Category(usize::from(c == category))
                }
                Rule::Passthrough { source } => record.values[source],
            })
            .collect();
        Record::new(values, record.label)
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        dataset.require_provenance(Provenance::Raw)?;
        if dataset.schema().as_ref() != self.source.as_ref() {
            return Err(Error::DimensionMismatch(
                "dataset schema differs from the fitted schema".into(),
            ));
        }
        let records = dataset.records().iter().map(|r| self.apply_record(r)).collect();
        Ok(Dataset::from_parts_unchecked(
            Arc::clone(&self.target),
            records,
            Provenance::Raw,
        ))
    }
}

/// Fit on `dataset` and transform it.
pub fn binarize(dataset: &Dataset) -> Result<(Dataset, Arc<Schema>)> {
    let b = Binarization::fit(dataset)?;
    let out = b.apply(dataset)?;
    Ok((out, Arc::clone(b.schema())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label() -> FeatureSpec {
        FeatureSpec::categorical("y", vec!["0".into(), "1".into()]).unwrap()
    }

    fn dataset(features: Vec<FeatureSpec>, rows: Vec<Vec<Value>>) -> Dataset {
        let schema = Arc::new(Schema::new("t", features, label(), "gdp").unwrap());
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, v)| Record::new(v, i % 2 == 0))
            .collect();
        Dataset::new(schema, records, Provenance::Raw).unwrap()
    }

    #[test]
    fn numerical_thresholds_at_mean() {
        let d = dataset(
            vec![FeatureSpec::numerical("x", 0.0, 10.0, true).unwrap()],
            [1.0, 2.0, 3.0, 4.0].iter().map(|&x| vec![Value::Number(x)]).collect(),
        );
        let (b, schema) = binarize(&d).unwrap();
        let col: Vec<usize> = b.records().iter().map(|r| r.values[0].as_category().unwrap()).collect();
        assert_eq!(col, vec![0, 0, 1, 1]);
        let f = &schema.features[0];
        assert_eq!(f.phrasing["1"], "more than 2.50");
        assert_eq!(f.phrasing["0"], "less than or equal to 2.50");
        assert_eq!(schema.template_id, LDP_TEMPLATE_ID);
    }

    #[test]
    fn threshold_phrasing_substitution() {
        let f = FeatureSpec::numerical("freq", 0.0, 50.0, true)
            .unwrap()
            .with_bucket_phrasing(BucketPhrasing {
                above: "{threshold_int} or more".into(),
                below: "less than {threshold_int}".into(),
            });
        let d = dataset(
            vec![f],
            [5.0, 6.0].iter().map(|&x| vec![Value::Number(x)]).collect(),
        );
        let (_, schema) = binarize(&d).unwrap();
        assert_eq!(schema.features[0].phrasing["1"], "6 or more");
        assert_eq!(schema.features[0].phrasing["0"], "less than 6");
    }

    #[test]
    fn one_hot_expansion() {
        let f = FeatureSpec::categorical("c", vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let d = dataset(
            vec![f],
            (0..3).map(|c| vec![Value::Category(c)]).collect(),
        );
        let (b, schema) = binarize(&d).unwrap();
        assert_eq!(schema.num_features(), 3);
        assert_eq!(schema.features[1].name, "c=b");
        for r in b.records() {
            let ones: usize = r.values.iter().map(|v| v.as_category().unwrap()).sum();
            assert_eq!(ones, 1);
        }
    }

    #[test]
    fn feature_limit() {
        let domain: Vec<String> = (0..15).map(|i| format!("v{i}")).collect();
        let f = FeatureSpec::categorical("wide", domain).unwrap();
        let d = dataset(vec![f], vec![vec![Value::Category(0)], vec![Value::Category(3)]]);
        assert!(matches!(
            binarize(&d),
            Err(Error::FeatureLimit { count: 15, max: 14 })
        ));
    }

    #[test]
    fn constant_numerical_column_is_dropped() {
        let d = dataset(
            vec![
                FeatureSpec::numerical("k", 0.0, 10.0, false).unwrap(),
                FeatureSpec::numerical("x", 0.0, 10.0, false).unwrap(),
            ],
            vec![
                vec![Value::Number(3.0), Value::Number(1.0)],
                vec![Value::Number(3.0), Value::Number(2.0)],
            ],
        );
        let b = Binarization::fit(&d).unwrap();
        assert_eq!(b.dropped(), ["k".to_string()]);
        assert_eq!(b.schema().num_features(), 1);
        assert_eq!(b.schema().features[0].name, "x");
    }

    #[test]
    fn idempotent_on_binary_schema() {
        let d = dataset(
            vec![
                FeatureSpec::numerical("x", 0.0, 10.0, false).unwrap(),
                FeatureSpec::categorical("s", vec!["M".into(), "F".into()]).unwrap(),
            ],
            vec![
                vec![Value::Number(1.0), Value::Category(0)],
                vec![Value::Number(7.0), Value::Category(1)],
                vec![Value::Number(2.0), Value::Category(1)],
            ],
        );
        let (once, s1) = binarize(&d).unwrap();
        let (twice, s2) = binarize(&once).unwrap();
        assert_eq!(once.records(), twice.records());
        assert_eq!(s1, s2);
    }

    #[test]
    fn from_thresholds_matches_fit() {
        let d = dataset(
            vec![FeatureSpec::numerical("x", 0.0, 10.0, false).unwrap()],
            [1.0, 2.0, 6.0].iter().map(|&x| vec![Value::Number(x)]).collect(),
        );
        let fitted = Binarization::fit(&d).unwrap();
        let rebuilt = Binarization::from_thresholds(Arc::clone(d.schema()), &fitted.thresholds()).unwrap();
        assert_eq!(fitted.schema(), rebuilt.schema());
        assert_eq!(
            fitted.apply(&d).unwrap().records(),
            rebuilt.apply(&d).unwrap().records()
        );
    }
}
