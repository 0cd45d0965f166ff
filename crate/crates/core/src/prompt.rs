//! Natural-language serialization of protected rows and k-shot prompt assembly.
//!
//! A template is a description with `{feature}` placeholders plus a question
//! line. A demonstration renders as
//!
//! ```text
//! <description> <question> Answer: <Yes|No>
//! ```
//!
//! and a prompt is the demonstrations separated by one blank line, followed
//! by the query and the answer cue `Answer:`.

use std::collections::BTreeSet;
use std::fmt;

use crate::dataset::{Record, Value};
use crate::error::{Error, Result};
use crate::gdp::AggregateRecord;
use crate::ldp::SampledRecord;
use crate::schema::{FeatureKind, FeatureSpec, Schema};

pub const ANSWER_CUE: &str = "Answer:";
pub const DEMO_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub description: String,
    pub question: String,
}

/// `{name}` placeholders in order of appearance.
fn placeholders(text: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Render(format!("unterminated placeholder in {text:?}")))?;
        out.push(&after[..close]);
        rest = &after[close + 1..];
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        question: impl Into<String>,
    ) -> Result<Self> {
        let t = PromptTemplate {
            id: id.into(),
            description: description.into(),
            question: question.into(),
        };
        placeholders(&t.description)?;
        if !placeholders(&t.question)?.is_empty() {
            return Err(Error::Render("question line takes no placeholders".into()));
        }
        Ok(t)
    }

    /// Placeholders must be exactly the schema's feature names.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let used: BTreeSet<&str> = placeholders(&self.description)?.into_iter().collect();
        let names: BTreeSet<&str> = schema.features.iter().map(|f| f.name.as_str()).collect();
        if used != names {
            let missing: Vec<_> = names.difference(&used).collect();
            let unknown: Vec<_> = used.difference(&names).collect();
            return Err(Error::Render(format!(
                "template {:?} does not match schema {:?}: missing {missing:?}, unknown {unknown:?}",
                self.id, schema.dataset_id
            )));
        }
        Ok(())
    }

    fn describe(&self, schema: &Schema, values: &[Value]) -> Result<String> {
        self.check_schema(schema)?;
        if values.len() != schema.num_features() {
            return Err(Error::Render(format!(
                "{} values for {} features of {:?}",
                values.len(),
                schema.num_features(),
                schema.dataset_id
            )));
        }
        let mut out = String::with_capacity(self.description.len() + 64);
        let mut rest = self.description.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}').expect("validated");
            let idx = schema.feature_index(&after[..close]).expect("validated");
            out.push_str(&format_value(&schema.features[idx], values[idx])?);
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Description followed by the question, without the answer cue.
    pub fn question_text(&self, schema: &Schema, values: &[Value]) -> Result<String> {
        let description = self.describe(schema, values)?;
        Ok(if self.question.is_empty() {
            description
        } else {
            format!("{description} {}", self.question)
        })
    }
}

/// Integers bare, reals to two decimals, categories through the phrase map.
pub fn format_value(feature: &FeatureSpec, value: Value) -> Result<String> {
    match (&feature.kind, value) {
        (FeatureKind::Numerical { integer, .. }, Value::Number(x)) => Ok(if *integer {
            format!("{}", (x + 0.5).floor() as i64)
        } else {
            format!("{x:.2}")
        }),
        (FeatureKind::Categorical { domain }, Value::Category(c)) if c < domain.len() => {
            let key = &domain[c];
            Ok(feature.phrasing.get(key).unwrap_or(key).clone())
        }
        _ => Err(Error::Render(format!(
            "value {value:?} does not fit feature {:?}",
            feature.name
        ))),
    }
}

/// A row that has already passed through a DP mechanism.
#[derive(Debug, Clone, Copy)]
pub enum DpRow<'a> {
    Sampled(&'a SampledRecord),
    Aggregate(&'a AggregateRecord),
}

impl DpRow<'_> {
    fn values(&self) -> &[Value] {
        match self {
            DpRow::Sampled(r) => &r.values,
            DpRow::Aggregate(a) => a.values(),
        }
    }

    fn label(&self) -> bool {
        match self {
            DpRow::Sampled(r) => r.label,
            DpRow::Aggregate(a) => a.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub question: String,
    pub answer: String,
}

impl Demonstration {
    pub fn is_positive(&self) -> bool {
        self.answer == "Yes"
    }
}

impl fmt::Display for Demonstration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {ANSWER_CUE} {}", self.question, self.answer)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemonstrationSet {
    demonstrations: Vec<Demonstration>,
}

impl DemonstrationSet {
    pub fn new(demonstrations: Vec<Demonstration>) -> Self {
        DemonstrationSet { demonstrations }
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Demonstration> {
        self.demonstrations.iter()
    }

    /// Inverse of `Display`: blocks separated by a blank line, each ending
    /// in `Answer: <answer>`.
    pub fn parse(text: &str) -> Result<Self> {
        text.trim()
            .split(DEMO_SEPARATOR)
            .filter(|block| !block.trim().is_empty())
            .map(|block| {
                let cue = format!(" {ANSWER_CUE} ");
                let (question, answer) = block
                    .trim()
                    .rsplit_once(&cue)
                    .ok_or_else(|| Error::Render(format!("demonstration without {ANSWER_CUE:?}: {block:?}")))?;
                Ok(Demonstration {
                    question: question.to_string(),
                    answer: answer.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(DemonstrationSet::new)
    }

    pub fn as_slice(&self) -> &[Demonstration] {
        &self.demonstrations
    }
}

impl fmt::Display for DemonstrationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.demonstrations.iter().enumerate() {
            if i > 0 {
                f.write_str(DEMO_SEPARATOR)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

pub fn render_demonstration(template: &PromptTemplate, row: DpRow<'_>, schema: &Schema) -> Result<Demonstration> {
    let answer = schema.answer_text(row.label()).to_string();
    if answer != "Yes" && answer != "No" {
        return Err(Error::Render(format!(
            "label phrasing must map to Yes/No, got {answer:?}"
        )));
    }
    Ok(Demonstration {
        question: template.question_text(schema, row.values())?,
        answer,
    })
}

/// Query text for an unlabeled test record; the label is never rendered.
pub fn render_query(template: &PromptTemplate, record: &Record, schema: &Schema) -> Result<String> {
    template.question_text(schema, &record.values)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    demonstrations: DemonstrationSet,
    query: String,
}

impl Prompt {
    pub fn demonstrations(&self) -> &DemonstrationSet {
        &self.demonstrations
    }

    /// Query text, ending in the answer cue.
    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.demonstrations.is_empty() {
            write!(f, "{}{DEMO_SEPARATOR}", self.demonstrations)?;
        }
        f.write_str(&self.query)
    }
}

pub fn assemble_prompt(demos: &DemonstrationSet, query: &str) -> Prompt {
    let query = query.trim_end();
    let query = if query.ends_with(ANSWER_CUE) {
        query.to_string()
    } else {
        format!("{query} {ANSWER_CUE}")
    };
    Prompt {
        demonstrations: demos.clone(),
        query,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(
            "toy",
            vec![
                FeatureSpec::numerical("age", 0.0, 120.0, true).unwrap(),
                FeatureSpec::numerical("score", 0.0, 10.0, false).unwrap(),
                FeatureSpec::categorical("sex", vec!["M".into(), "F".into()])
                    .unwrap()
                    .with_phrase("M", "male")
                    .unwrap(),
            ],
            FeatureSpec::categorical("y", vec!["0".into(), "1".into()]).unwrap(),
            "gdp",
        )
        .unwrap()
    }

    fn template() -> PromptTemplate {
        PromptTemplate::new("gdp", "A {age} year old {sex} scored {score}.", "Good? Yes or No?").unwrap()
    }

    #[test]
    fn query_rendering() {
        let r = Record::new(vec![Value::Number(39.0), Value::Number(2.5), Value::Category(0)], true);
        let q = render_query(&template(), &r, &schema()).unwrap();
        assert_eq!(q, "A 39 year old male scored 2.50. Good? Yes or No?");
        assert_eq!(q, render_query(&template(), &r, &schema()).unwrap());
        let f = Record::new(vec![Value::Number(39.0), Value::Number(2.5), Value::Category(1)], true);
        assert!(render_query(&template(), &f, &schema()).unwrap().contains("old F scored"));
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let short = Record::new(vec![Value::Number(39.0)], true);
        assert!(render_query(&template(), &short, &schema()).is_err());
        let bad = PromptTemplate::new("gdp", "{age} {height}", "").unwrap();
        let r = Record::new(vec![Value::Number(1.0), Value::Number(1.0), Value::Category(0)], true);
        assert!(render_query(&bad, &r, &schema()).is_err());
        assert!(PromptTemplate::new("x", "{age", "").is_err());
        assert!(PromptTemplate::new("x", "{age}", "{sex}").is_err());
    }

    fn demo(answer: &str) -> Demonstration {
        Demonstration {
            question: format!("Q{answer}?"),
            answer: answer.into(),
        }
    }

    #[test]
    fn zero_shot_prompt_is_the_query() {
        let p = assemble_prompt(&DemonstrationSet::default(), "Is it? Yes or No?");
        assert_eq!(p.text(), "Is it? Yes or No? Answer:");
        assert!(p.query().ends_with(ANSWER_CUE));
    }

    #[test]
    fn prompt_layout_and_order() {
        let set = DemonstrationSet::new(vec![demo("Yes"), demo("No")]);
        let p = assemble_prompt(&set, "Q? Answer:");
        assert_eq!(p.text(), "QYes? Answer: Yes\n\nQNo? Answer: No\n\nQ? Answer:");
        let flipped = DemonstrationSet::new(vec![demo("No"), demo("Yes")]);
        assert_eq!(
            assemble_prompt(&flipped, "Q?").text(),
            "QNo? Answer: No\n\nQYes? Answer: Yes\n\nQ? Answer:"
        );
    }

    #[test]
    fn demonstration_text_round_trips() {
        let set = DemonstrationSet::new(vec![demo("Yes"), demo("No")]);
        assert_eq!(DemonstrationSet::parse(&set.to_string()).unwrap(), set);
        assert!(DemonstrationSet::parse("").unwrap().is_empty());
        assert!(DemonstrationSet::parse("no cue here").is_err());
    }

    #[test]
    fn integer_rounding_is_half_up() {
        let f = FeatureSpec::numerical("n", 0.0, 10.0, true).unwrap();
        assert_eq!(format_value(&f, Value::Number(6.5)).unwrap(), "7");
        assert_eq!(format_value(&f, Value::Number(6.49)).unwrap(), "6");
        let r = FeatureSpec::numerical("r", 0.0, 5000.0, false).unwrap();
        assert_eq!(format_value(&r, Value::Number(2062.934)).unwrap(), "2062.93");
        assert!(format_value(&r, Value::Category(0)).is_err());
    }
}
