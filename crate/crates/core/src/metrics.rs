//! Unweighted average recall, confusion matrices, and percentile-bootstrap
//! confidence intervals.

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Evaluation summary over one labeled split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub uar: f64,
    pub per_class_recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub n_samples: usize,
}

impl EvalReport {
    /// Machine-readable `key = value` lines.
    pub fn render_structured(&self) -> String {
        let k = self.confusion.len();
        let mut out = String::new();
        out.push_str(&format!("uar = {:.6}\n", self.uar));
        out.push_str(&format!("ci_low = {:.6}\n", self.ci_low));
        out.push_str(&format!("ci_high = {:.6}\n", self.ci_high));
        out.push_str(&format!("n_bootstrap = {}\n", self.n_bootstrap));
        out.push_str(&format!("n_samples = {}\n", self.n_samples));
        for (c, r) in self.per_class_recall.iter().enumerate() {
            out.push_str(&format!("recall_{c} = {r:.6}\n"));
        }
        for row in 0..k {
            for col in 0..k {
                out.push_str(&format!(
                    "confusion_{row}_{col} = {}\n",
                    self.confusion[row][col]
                ));
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let k = self.confusion.len();
        let mut out = String::new();
        out.push_str(&format!(
            "UAR: {:.4}  (95% bootstrap CI [{:.4}, {:.4}], {} resamples, n={})\n",
            self.uar, self.ci_low, self.ci_high, self.n_bootstrap, self.n_samples
        ));
        for (c, r) in self.per_class_recall.iter().enumerate() {
            out.push_str(&format!("recall[class {c}]: {r:.4}\n"));
        }
        out.push_str("confusion (rows = true, cols = predicted):\n");
        for row in 0..k {
            let cells: Vec<String> = (0..k)
                .map(|col| format!("{:>6}", self.confusion[row][col]))
                .collect();
            out.push_str(&format!("  {}\n", cells.join(" ")));
        }
        out
    }
}

fn validate_pairs(labels: &[usize], predictions: &[usize], k: usize) -> Result<()> {
    if labels.len() != predictions.len() {
        return Err(Error::config(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::config("cannot score an empty split".to_string()));
    }
    if let Some(&bad) = labels.iter().chain(predictions).find(|&&v| v >= k) {
        return Err(Error::data(format!("class id {bad} out of range for K={k}")));
    }
    Ok(())
}

pub fn confusion_matrix(
    labels: &[usize],
    predictions: &[usize],
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    validate_pairs(labels, predictions, k)?;
    let mut m = vec![vec![0usize; k]; k];
    for (&y, &p) in labels.iter().zip(predictions) {
        m[y][p] += 1;
    }
    Ok(m)
}

fn recalls_from_confusion(confusion: &[Vec<usize>]) -> Result<Vec<f64>> {
    confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                Err(Error::data(format!(
                    "class {c} absent from labels; recall undefined"
                )))
            } else {
                Ok(row[c] as f64 / total as f64)
            }
        })
        .collect()
}

/// Mean over classes of per-class recall. Every class in `[0, k)` must occur
/// in `labels`.
pub fn uar(labels: &[usize], predictions: &[usize], k: usize) -> Result<f64> {
    let confusion = confusion_matrix(labels, predictions, k)?;
    let recalls = recalls_from_confusion(&confusion)?;
    Ok(recalls.iter().sum::<f64>() / k as f64)
}

/// Percentile bootstrap over `n_bootstrap` index resamples drawn with
/// replacement from the stream `bootstrap` of `seed`. Resamples missing a
/// class are redrawn, so exactly `n_bootstrap` valid resamples are scored;
/// bounds are nearest-rank percentiles at `(1-level)/2` and `(1+level)/2`.
pub fn bootstrap_ci(
    labels: &[usize],
    predictions: &[usize],
    k: usize,
    n_bootstrap: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    validate_pairs(labels, predictions, k)?;
    if n_bootstrap == 0 {
        return Err(Error::config("bootstrap needs at least 1 resample".to_string()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::config(format!("CI level {level} out of (0, 1)")));
    }
    // fail early if the point estimate itself is undefined
    let _ = uar(labels, predictions, k)?;

    let n = labels.len();
    let mut rng = StreamRng::from_seed(seed).stream("bootstrap");
    let mut scores = Vec::with_capacity(n_bootstrap);
    let mut sample_labels = vec![0usize; n];
    let mut sample_preds = vec![0usize; n];
    while scores.len() < n_bootstrap {
        for slot in 0..n {
            let idx = rng.index(n);
            sample_labels[slot] = labels[idx];
            sample_preds[slot] = predictions[idx];
        }
        match uar(&sample_labels, &sample_preds, k) {
            Ok(score) => scores.push(score),
            Err(_) => continue, // degenerate resample: redraw
        }
    }
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    // nearest rank: ceil(p * n), with a guard so that exactly attainable
    // integer ranks are not pushed over the ceiling by float round-off
    let rank = |p: f64| -> usize {
        let r = (p * n_bootstrap as f64 - 1e-9).ceil() as usize;
        r.clamp(1, n_bootstrap) - 1
    };
    Ok((scores[rank(alpha)], scores[rank(1.0 - alpha)]))
}

/// Full report with a 95% CI.
pub fn evaluate(
    labels: &[usize],
    predictions: &[usize],
    k: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<EvalReport> {
    let confusion = confusion_matrix(labels, predictions, k)?;
    let per_class_recall = recalls_from_confusion(&confusion)?;
    let uar = per_class_recall.iter().sum::<f64>() / k as f64;
    let (ci_low, ci_high) = bootstrap_ci(labels, predictions, k, n_bootstrap, 0.95, seed)?;
    Ok(EvalReport {
        uar,
        per_class_recall,
        confusion,
        ci_low,
        ci_high,
        n_bootstrap,
        n_samples: labels.len(),
    })
}
