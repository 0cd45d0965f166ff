//! Typed column descriptions for a binary-classification table.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

/// Phrase templates used when a feature is reduced to a single binary bucket.
///
/// For numerical features `above` / `below` describe `x > threshold` and
/// `x <= threshold`. For one-hot indicators of a categorical feature they
/// describe presence and absence of the category. Templates may contain
/// `{threshold}`, `{threshold_int}` and `{category}` substitutions.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPhrasing {
    pub above: String,
    pub below: String,
}

impl BucketPhrasing {
    pub fn numerical_default() -> Self {
        BucketPhrasing {
            above: "more than {threshold}".into(),
            below: "less than or equal to {threshold}".into(),
        }
    }

    pub fn one_hot_default() -> Self {
        BucketPhrasing {
            above: "{category}".into(),
            below: "not {category}".into(),
        }
    }
}

/// Where a binarized feature came from.
#[derive(Debug, Clone, PartialEq)]
pub enum BinaryOrigin {
    /// `1` iff the source value is strictly greater than `threshold`.
    Threshold { source: String, threshold: f64 },
    /// `1` iff the source category equals `category`.
    OneHot { source: String, category: String },
    /// Source feature was already a two-valued categorical.
    Passthrough { source: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Categorical {
        domain: Vec<String>,
    },
    Numerical {
        lower: f64,
        upper: f64,
        integer: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Value (category label, or `"0"`/`"1"` for binary buckets) to text.
    pub phrasing: BTreeMap<String, String>,
    /// Phrasing to attach when this feature is binarized.
    pub bucket_phrasing: Option<BucketPhrasing>,
    pub origin: Option<BinaryOrigin>,
}

impl FeatureSpec {
    pub fn categorical(name: impl Into<String>, domain: Vec<String>) -> Result<Self> {
        let spec = FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical { domain },
            phrasing: BTreeMap::new(),
            bucket_phrasing: None,
            origin: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn numerical(name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> Result<Self> {
        let spec = FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numerical {
                lower,
                upper,
                integer,
            },
            phrasing: BTreeMap::new(),
            bucket_phrasing: None,
            origin: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_phrase(mut self, key: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        self.phrasing.insert(key.into(), text.into());
        self.validate()?;
        Ok(self)
    }

    pub fn with_bucket_phrasing(mut self, phrasing: BucketPhrasing) -> Self {
        self.bucket_phrasing = Some(phrasing);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("feature name is empty".into()));
        }
        match &self.kind {
            FeatureKind::Categorical { domain } => {
                if domain.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical feature {:?} has an empty domain",
                        self.name
                    )));
                }
                let mut seen = HashSet::new();
                for value in domain {
                    if !seen.insert(value) {
                        return Err(Error::Schema(format!(
                            "categorical feature {:?} repeats domain value {value:?}",
                            self.name
                        )));
                    }
                }
                for key in self.phrasing.keys() {
                    if !domain.contains(key) {
                        return Err(Error::Schema(format!(
                            "phrasing key {key:?} is not in the domain of {:?}",
                            self.name
                        )));
                    }
                }
            }
            FeatureKind::Numerical { lower, upper, .. } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::Schema(format!(
                        "numerical feature {:?} needs finite bounds with lower < upper, got [{lower}, {upper}]",
                        self.name
                    )));
                }
                if !self.phrasing.is_empty() {
                    return Err(Error::Schema(format!(
                        "numerical feature {:?} is rendered verbatim and takes no phrasing table",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of distinct values; `None` for numerical features.
    pub fn domain_size(&self) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { domain } => Some(domain.len()),
            FeatureKind::Numerical { .. } => None,
        }
    }

    pub fn domain(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { domain } => Some(domain),
            FeatureKind::Numerical { .. } => None,
        }
    }

    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.domain()?.iter().position(|v| v == value)
    }

    pub fn is_binary(&self) -> bool {
        self.domain_size() == Some(2)
    }
}

/// Column layout of a dataset: `F` features followed by a binary label.
///
/// The label domain is ordered `[negative, positive]`; label phrasing maps
/// each to the answer token ("No" / "Yes" unless overridden).
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub dataset_id: String,
    pub features: Vec<FeatureSpec>,
    pub label: FeatureSpec,
    pub template_id: String,
}

impl Schema {
    pub fn new(
        dataset_id: impl Into<String>,
        features: Vec<FeatureSpec>,
        label: FeatureSpec,
        template_id: impl Into<String>,
    ) -> Result<Self> {
        let schema = Schema {
            dataset_id: dataset_id.into(),
            features,
            label,
            template_id: template_id.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema needs at least one feature".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
        }
        self.label.validate()?;
        if !self.label.is_binary() {
            return Err(Error::Schema(format!(
                "label {:?} must be categorical with exactly two values",
                self.label.name
            )));
        }
        if names.contains(self.label.name.as_str()) {
            return Err(Error::Schema(format!(
                "label name {:?} collides with a feature",
                self.label.name
            )));
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// CSV header: feature names then the label name.
    pub fn column_names(&self) -> Vec<&str> {
        self.features
            .iter()
            .map(|f| f.name.as_str())
            .chain(std::iter::once(self.label.name.as_str()))
            .collect()
    }

    /// True when every feature is a two-valued categorical.
    pub fn is_binary(&self) -> bool {
        self.features.iter().all(FeatureSpec::is_binary)
    }

    pub fn is_categorical(&self) -> bool {
        self.features.iter().all(|f| f.domain_size().is_some())
    }

    /// Domain sizes of every feature and then the label, if all are categorical.
    pub fn joint_dims(&self) -> Option<Vec<usize>> {
        self.features
            .iter()
            .chain(std::iter::once(&self.label))
            .map(FeatureSpec::domain_size)
            .collect()
    }

    /// Answer token for a label value.
    pub fn answer_text(&self, positive: bool) -> &str {
        let domain = self.label.domain().expect("label is categorical");
        let key = &domain[usize::from(positive)];
        self.label
            .phrasing
            .get(key)
            .map(String::as_str)
            .unwrap_or(if positive { "Yes" } else { "No" })
    }
}
