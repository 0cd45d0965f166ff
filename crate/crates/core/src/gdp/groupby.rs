use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::schema::{FeatureKind, Schema};

/// How one key column is cut into buckets.
#[derive(Debug, Clone, PartialEq)]
pub enum Bucketing {
    /// Each inner list is one bucket of category labels.
    Categories(Vec<Vec<String>>),
    /// Two buckets: `x <= at` / `x > at`, or `x < at` / `x >= at` when
    /// `strict` is set.
    Threshold { at: f64, strict: bool },
}

impl Bucketing {
    pub fn bucket_count(&self) -> usize {
        match self {
            Bucketing::Categories(b) => b.len(),
            Bucketing::Threshold { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupKey {
    /// A feature name or the label name.
    pub column: String,
    pub rule: Bucketing,
}

#[derive(Debug, Clone, Copy)]
enum Resolved<'a> {
    Feature(usize, &'a Bucketing),
    Label(&'a Bucketing),
}

/// GROUP BY keys producing `k` disjoint subsets. An empty key list is the
/// `k = 1` plan.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupByPlan {
    pub keys: Vec<GroupKey>,
    pub k: usize,
}

impl GroupByPlan {
    pub fn single() -> Self {
        GroupByPlan { keys: vec![], k: 1 }
    }

    pub fn new(keys: Vec<GroupKey>, k: usize) -> Self {
        GroupByPlan { keys, k }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let product: usize = self.keys.iter().map(|key| key.rule.bucket_count()).product();
        if product != self.k {
            return Err(Error::InvalidArgument(format!(
                "group-by buckets multiply to {product}, plan declares k = {}",
                self.k
            )));
        }
        for key in &self.keys {
            let feature = if key.column == schema.label.name {
                &schema.label
            } else {
                schema
                    .feature_index(&key.column)
                    .map(|i| &schema.features[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown group-by column {:?}", key.column)))?
            };
            match (&key.rule, &feature.kind) {
                (Bucketing::Categories(buckets), FeatureKind::Categorical { domain }) => {
                    let mut seen: Vec<&String> = buckets.iter().flatten().collect();
                    if seen.len() != domain.len() || buckets.iter().any(Vec::is_empty) {
                        return Err(Error::InvalidArgument(format!(
                            "buckets of {:?} must be non-empty and cover its {} values exactly once",
                            key.column,
                            domain.len()
                        )));
                    }
                    seen.sort();
                    seen.dedup();
                    if seen.len() != domain.len() || seen.iter().any(|v| !domain.contains(v)) {
                        return Err(Error::InvalidArgument(format!(
                            "buckets of {:?} overlap or name unknown values",
                            key.column
                        )));
                    }
                }
                (Bucketing::Threshold { at, .. }, FeatureKind::Numerical { .. }) if at.is_finite() => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "bucketing rule does not fit column {:?}",
                        key.column
                    )))
                }
            }
        }
        Ok(())
    }

    fn resolve<'a>(&'a self, schema: &Schema) -> Vec<Resolved<'a>> {
        self.keys
            .iter()
            .map(|key| match schema.feature_index(&key.column) {
                Some(i) => Resolved::Feature(i, &key.rule),
                None => Resolved::Label(&key.rule),
            })
            .collect()
    }

    /// Bucket coordinates enumerated with the first key varying slowest.
    pub fn bucket_ids(&self) -> Vec<Vec<usize>> {
        let counts: Vec<usize> = self.keys.iter().map(|k| k.rule.bucket_count()).collect();
        (0..self.k)
            .map(|mut flat| {
                let mut id = vec![0; counts.len()];
                for (slot, &c) in id.iter_mut().zip(&counts).rev() {
                    *slot = flat % c;
                    flat /= c;
                }
                id
            })
            .collect()
    }
}

fn bucket_of(rule: &Bucketing, domain: Option<&[String]>, record: &Record, column: Option<usize>) -> usize {
    match (rule, column) {
        (Bucketing::Categories(buckets), _) => {
            let idx = match column {
                Some(i) => record.values[i].as_category().expect("categorical column"),
                None => usize::from(record.label),
            };
            let value = &domain.expect("categorical domain")[idx];
            buckets
                .iter()
                .position(|b| b.contains(value))
                .expect("validated plan covers the domain")
        }
        (Bucketing::Threshold { at, strict }, Some(i)) => {
            let x = record.values[i].as_number().expect("numerical column");
            let low = if *strict { x < *at } else { x <= *at };
            usize::from(!low)
        }
        (Bucketing::Threshold { .. }, None) => unreachable!("validated: label is categorical"),
    }
}

/// Split `subset` into the plan's `k` disjoint groups, in bucket order.
/// Every group must be non-empty.
pub fn group_by_partition(subset: &Dataset, plan: &GroupByPlan) -> Result<Vec<Dataset>> {
    let schema = subset.schema();
    plan.validate(schema)?;
    let resolved = plan.resolve(schema);
    let counts: Vec<usize> = plan.keys.iter().map(|k| k.rule.bucket_count()).collect();
    let mut groups: Vec<Vec<Record>> = vec![Vec::new(); plan.k];
    for record in subset.records() {
        let flat = resolved.iter().zip(&counts).fold(0, |acc, (r, &c)| {
            let b = match *r {
                Resolved::Feature(i, rule) => bucket_of(rule, schema.features[i].domain(), record, Some(i)),
                Resolved::Label(rule) => bucket_of(rule, schema.label.domain(), record, None),
            };
            acc * c + b
        });
        groups[flat].push(record.clone());
    }
    let ids = plan.bucket_ids();
    for (group, id) in groups.iter().zip(&ids) {
        if group.is_empty() {
            return Err(Error::EmptyGroup { bucket: id.clone() });
        }
    }
    Ok(groups.into_iter().map(|g| subset.with_records(g)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Provenance, Value};
    use crate::schema::FeatureSpec;
    use std::sync::Arc;

    fn blood_like() -> Dataset {
        let schema = Arc::new(
            Schema::new(
                "b",
                vec![FeatureSpec::numerical("frequency", 0.0, 50.0, true).unwrap()],
                FeatureSpec::categorical("donated", vec!["0".into(), "1".into()]).unwrap(),
                "gdp",
            )
            .unwrap(),
        );
        let records = (0..20)
            .map(|i| Record::new(vec![Value::Number((i % 10) as f64)], i % 3 == 0))
            .collect();
        Dataset::new(schema, records, Provenance::Raw).unwrap()
    }

    fn label_key() -> GroupKey {
        GroupKey {
            column: "donated".into(),
            rule: Bucketing::Categories(vec![vec!["1".into()], vec!["0".into()]]),
        }
    }

    #[test]
    fn label_split() {
        let d = blood_like();
        let parts = group_by_partition(&d, &GroupByPlan::new(vec![label_key()], 2)).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts[0].records().iter().all(|r| r.label));
        assert!(parts[1].records().iter().all(|r| !r.label));
        assert_eq!(parts[0].len() + parts[1].len(), d.len());
    }

    #[test]
    fn label_by_threshold() {
        let d = blood_like();
        let plan = GroupByPlan::new(
            vec![
                label_key(),
                GroupKey {
                    column: "frequency".into(),
                    rule: Bucketing::Threshold { at: 5.0, strict: false },
                },
            ],
            4,
        );
        assert_eq!(plan.bucket_ids(), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let parts = group_by_partition(&d, &plan).unwrap();
        assert_eq!(parts.len(), 4);
        assert!(parts[1]
            .records()
            .iter()
            .all(|r| r.label && r.values[0].as_number().unwrap() > 5.0));
    }

    #[test]
    fn empty_group_reports_bucket() {
        let d = blood_like();
        let plan = GroupByPlan::new(
            vec![GroupKey {
                column: "frequency".into(),
                rule: Bucketing::Threshold { at: 100.0, strict: true },
            }],
            2,
        );
        assert!(matches!(
            group_by_partition(&d, &plan),
            Err(Error::EmptyGroup { bucket }) if bucket == vec![1]
        ));
    }

    #[test]
    fn invalid_plans() {
        let schema = blood_like().schema().clone();
        assert!(GroupByPlan::new(vec![label_key()], 4).validate(&schema).is_err());
        let overlapping = GroupKey {
            column: "donated".into(),
            rule: Bucketing::Categories(vec![vec!["1".into(), "0".into()], vec!["0".into()]]),
        };
        assert!(GroupByPlan::new(vec![overlapping], 2).validate(&schema).is_err());
        let unknown = GroupKey {
            column: "nope".into(),
            rule: Bucketing::Threshold { at: 1.0, strict: false },
        };
        assert!(GroupByPlan::new(vec![unknown], 2).validate(&schema).is_err());
        GroupByPlan::single().validate(&schema).unwrap();
    }
}
