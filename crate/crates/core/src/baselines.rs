//! Non-LLM reference classifiers: logistic regression and Gaussian naive Bayes.

use rand::Rng;

use crate::dataset::{Dataset, Record, Value};
use crate::error::{Error, Result};
use crate::rng;

pub const LR_LEARNING_RATE: f64 = 0.1;
pub const LR_EPOCHS: usize = 500;
pub const GNB_VAR_FLOOR: f64 = 1e-9;

pub trait Classifier {
    fn predict(&self, x: &[f64]) -> bool;
}

/// Category index or number, as a float vector.
pub fn feature_vector(record: &Record) -> Vec<f64> {
    record
        .values
        .iter()
        .map(|v| match *v {
            Value::Category(c) => c as f64,
            Value::Number(x) => x,
        })
        .collect()
}

fn design(data: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    Ok(data.records().iter().map(|r| (feature_vector(r), r.label)).unzip())
}

pub fn evaluate(model: &impl Classifier, test: &Dataset) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let hits = test
        .records()
        .iter()
        .filter(|r| model.predict(&feature_vector(r)) == r.label)
        .count();
    hits as f64 / test.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticRegression {
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

impl Classifier for LogisticRegression {
    fn predict(&self, x: &[f64]) -> bool {
        self.probability(x) > 0.5
    }
}

/// Full-batch gradient descent on mean log-loss, weights initialised
/// uniformly in ±0.01 from `seed`.
pub fn train_logistic_regression(train: &Dataset, epochs: usize, learning_rate: f64, seed: u64) -> Result<LogisticRegression> {
    let (xs, ys) = design(train)?;
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut r = rng::seeded(seed);
    let mut model = LogisticRegression {
        weights: (0..d).map(|_| r.random_range(-0.01..0.01)).collect(),
        bias: 0.0,
    };
    for epoch in 0..epochs {
        let mut grad = vec![0.0; d];
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let p = model.probability(x);
            if p.is_nan() {
                return Err(Error::Divergence(format!("NaN prediction at epoch {epoch}")));
            }
            let t = f64::from(u8::from(y));
            let err = p - t;
            for (g, v) in grad.iter_mut().zip(x) {
                *g += err * v;
            }
            grad_b += err;
            loss -= t * p.max(1e-15).ln() + (1.0 - t) * (1.0 - p).max(1e-15).ln();
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("log-loss is {loss} at epoch {epoch}")));
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= learning_rate * g / n;
        }
        model.bias -= learning_rate * grad_b / n;
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence(format!("non-finite parameters at epoch {epoch}")));
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNaiveBayes {
    /// Indexed by label (false, true).
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

impl GaussianNaiveBayes {
    /// Normalised posterior `[P(false | x), P(true | x)]`.
    pub fn posterior(&self, x: &[f64]) -> [f64; 2] {
        let log_joint: Vec<f64> = (0..2)
            .map(|c| {
                if self.priors[c] == 0.0 {
                    return f64::NEG_INFINITY;
                }
                self.priors[c].ln()
                    + x.iter()
                        .zip(&self.means[c])
                        .zip(&self.variances[c])
                        .map(|((v, m), s2)| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
                        .sum::<f64>()
            })
            .collect();
        let top = log_joint[0].max(log_joint[1]);
        let e = [(log_joint[0] - top).exp(), (log_joint[1] - top).exp()];
        let z = e[0] + e[1];
        [e[0] / z, e[1] / z]
    }
}

impl Classifier for GaussianNaiveBayes {
    fn predict(&self, x: &[f64]) -> bool {
        let p = self.posterior(x);
        p[1] > p[0]
    }
}

/// Per-class means and population variances (floored at 1e-9) with
/// empirical class priors. Deterministic; `_seed` is accepted for a uniform
/// baseline interface.
pub fn train_gaussian_nb(train: &Dataset, _seed: u64) -> Result<GaussianNaiveBayes> {
    let (xs, ys) = design(train)?;
    let d = xs[0].len();
    let mut counts = [0usize; 2];
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    for (x, &y) in xs.iter().zip(&ys) {
        let c = usize::from(y);
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(x) {
            *s += v;
        }
    }
    if counts.contains(&0) {
        log::warn!("single-class training set; naive Bayes prior is degenerate");
    }
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for c in 0..2 {
        for j in 0..d {
            means[c][j] = if counts[c] > 0 { sums[c][j] / counts[c] as f64 } else { 0.0 };
        }
    }
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    for (x, &y) in xs.iter().zip(&ys) {
        let c = usize::from(y);
        for j in 0..d {
            variances[c][j] += (x[j] - means[c][j]).powi(2);
        }
    }
    for c in 0..2 {
        for v in variances[c].iter_mut() {
            *v = (*v / counts[c].max(1) as f64).max(GNB_VAR_FLOOR);
        }
    }
    let n = xs.len() as f64;
    Ok(GaussianNaiveBayes {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Provenance;
    use crate::schema::{FeatureSpec, Schema};
    use rand_distr_free::normal;
    use std::sync::Arc;

    /// Box-Muller, kept local so the crate needs no distribution dependency.
    mod rand_distr_free {
        use rand::Rng;
        pub fn normal<R: Rng>(r: &mut R, mean: f64, sd: f64) -> f64 {
            let u1: f64 = 1.0 - r.random::<f64>();
            let u2: f64 = r.random();
            mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }

    fn numeric(rows: &[(&[f64], bool)]) -> Dataset {
        let d = rows[0].0.len();
        let schema = Arc::new(
            Schema::new(
                "t",
                (0..d)
                    .map(|j| FeatureSpec::numerical(format!("x{j}"), -1e6, 1e6, false).unwrap())
                    .collect(),
                FeatureSpec::categorical("y", vec!["0".into(), "1".into()]).unwrap(),
                "t",
            )
            .unwrap(),
        );
        let records = rows
            .iter()
            .map(|(x, y)| Record::new(x.iter().map(|&v| Value::Number(v)).collect(), *y))
            .collect();
        Dataset::new(schema, records, Provenance::Raw).unwrap()
    }

    #[test]
    fn lr_separable() {
        let d = numeric(&[
            (&[0.0, 0.0], false),
            (&[0.0, 1.0], false),
            (&[1.0, 0.0], false),
            (&[1.0, 1.0], true),
            (&[2.0, 2.0], true),
            (&[-1.0, 0.0], false),
        ]);
        let m = train_logistic_regression(&d, LR_EPOCHS, LR_LEARNING_RATE, 0).unwrap();
        assert_eq!(evaluate(&m, &d), 1.0);
        assert_eq!(m, train_logistic_regression(&d, LR_EPOCHS, LR_LEARNING_RATE, 0).unwrap());
    }

    #[test]
    fn lr_xor_is_bounded() {
        let d = numeric(&[
            (&[0.0, 0.0], false),
            (&[0.0, 1.0], true),
            (&[1.0, 0.0], true),
            (&[1.0, 1.0], false),
        ]);
        for seed in 0..5 {
            let m = train_logistic_regression(&d, LR_EPOCHS, LR_LEARNING_RATE, seed).unwrap();
            assert!(evaluate(&m, &d) <= 0.75);
        }
    }

    #[test]
    fn lr_single_label() {
        let d = numeric(&[(&[0.0, 1.0], true), (&[1.0, 0.0], true), (&[1.0, 1.0], true)]);
        let m = train_logistic_regression(&d, LR_EPOCHS, LR_LEARNING_RATE, 0).unwrap();
        assert!([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]].iter().all(|x| m.predict(x)));
    }

    #[test]
    fn lr_divergence_is_reported() {
        let d = numeric(&[(&[1e300], false), (&[-1e300], true)]);
        let r = train_logistic_regression(&d, 5, 1e10, 0);
        assert!(matches!(r, Err(Error::Divergence(_))), "{r:?}");
    }

    #[test]
    fn gnb_hand_computed() {
        // class 0: {0, 2} -> mean 1, var 1; class 1: {4, 6} -> mean 5, var 1
        let d = numeric(&[(&[0.0], false), (&[2.0], false), (&[4.0], true), (&[6.0], true)]);
        let m = train_gaussian_nb(&d, 0).unwrap();
        assert_eq!(m.means, [vec![1.0], vec![5.0]]);
        assert_eq!(m.variances, [vec![1.0], vec![1.0]]);
        // at x = 2: log-odds = ((2-1)^2 - (2-5)^2) / 2 = -4
        let p = m.posterior(&[2.0]);
        let want = 1.0 / (1.0 + 4f64.exp());
        assert!((p[1] - want).abs() < 1e-12);
        assert!((m.posterior(&[3.0])[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gnb_identical_classes_fall_back_to_prior() {
        let d = numeric(&[(&[0.0], false), (&[1.0], false), (&[0.0], false), (&[1.0], true), (&[0.0], true)]);
        let mut m = train_gaussian_nb(&d, 0).unwrap();
        m.means[1] = m.means[0].clone();
        m.variances[1] = m.variances[0].clone();
        let p = m.posterior(&[0.3]);
        assert!((p[0] - 0.6).abs() < 1e-12);
        assert!(!m.predict(&[0.3]));
    }

    #[test]
    fn gnb_single_class_still_predicts() {
        let d = numeric(&[(&[0.0], true), (&[1.0], true)]);
        let m = train_gaussian_nb(&d, 0).unwrap();
        assert!(m.predict(&[100.0]));
    }

    #[test]
    fn gnb_separated_clusters() {
        // centres 8 sd apart: Bayes error is Phi(-4) ~ 3e-5
        let mut r = rng::seeded(3);
        let mut sample = |n: usize| {
            let rows: Vec<(Vec<f64>, bool)> = (0..n)
                .map(|i| {
                    let y = i % 2 == 0;
                    let c = if y { 4.0 } else { -4.0 };
                    (vec![normal(&mut r, c, 1.0), normal(&mut r, -c, 1.0)], y)
                })
                .collect();
            rows
        };
        let train = sample(400);
        let test = sample(1000);
        let as_ds = |rows: &[(Vec<f64>, bool)]| {
            numeric(&rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect::<Vec<_>>())
        };
        let m = train_gaussian_nb(&as_ds(&train), 0).unwrap();
        assert!(evaluate(&m, &as_ds(&test)) >= 0.99);
    }
}
