//! Accuracy, confusion matrices, ROC curves and tie-aware AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Task;
use crate::embedding::FeatureVector;
use crate::mlp::{predict, MlpError, MlpParams};

/// Scores strictly above this predict the positive class.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("labels contain a single class; AUC is undefined")]
    DegenerateLabels,
    #[error("label {0} is not 0 or 1")]
    LabelOutOfDomain(u8),
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("tasks score different example ids (first difference at position {0})")]
    IdMismatch(usize),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::LabelOutOfDomain(l));
    }
    if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    Ok(())
}

/// Per-example output probabilities. The positive-class score is `probs[1]`.
pub fn predict_probs(params: &MlpParams<f32>, features: &[FeatureVector]) -> Result<Vec<[f32; 2]>, EvalError> {
    features
        .iter()
        .map(|f| {
            let p = predict(params, f.as_slice())?;
            Ok([p[0], p[1]])
        })
        .collect()
}

#[inline]
pub fn predict_label(score: f64) -> u8 {
    u8::from(score > DECISION_THRESHOLD)
}

/// Fraction of correct threshold-0.5 predictions; a score of exactly 0.5
/// predicts class 0.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    Ok(confusion_matrix(scores, labels)?.accuracy())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(scores: &[f64], labels: &[u8]) -> Result<Confusion, EvalError> {
    check_inputs(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (predict_label(s), l) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// ROC points from (0, 0) to (1, 1), one per distinct score threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// `fpr,tpr` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (fpr, tpr) in &self.points {
            out.push_str(&format!("{fpr},{tpr}\n"));
        }
        out
    }
}

/// ROC curve and trapezoidal AUC. Tied scores move the curve diagonally, so
/// the area equals `P(s+ > s-) + P(s+ = s-)/2` over all positive/negative
/// pairs. The area is accumulated in integer counts and divided once.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(RocCurve, f64), EvalError> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one positive/negative pair.
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += ((fp - fp_prev) as u128) * ((tp + tp_prev) as u128);
        points.push((fp as f64 / n, tp as f64 / p));
    }
    let auc = twice_area as f64 / (2.0 * p * n);
    Ok((RocCurve { points }, auc))
}

/// Scores and labels for one task, keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScores {
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub accuracy: f64,
    pub auc: Option<f64>,
    #[serde(flatten)]
    pub confusion: Confusion,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: Vec<TaskReport>,
    /// Mean of the two task AUCs; absent when either AUC is undefined.
    pub mean_auc: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn task(&self, task: Task) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task == task.name())
    }
}

fn task_report(task: Task, s: &TaskScores) -> Result<TaskReport, EvalError> {
    let confusion = confusion_matrix(&s.scores, &s.labels)?;
    let (auc, roc, error) = match roc_auc(&s.scores, &s.labels) {
        Ok((roc, auc)) => (Some(auc), Some(roc), None),
        Err(EvalError::DegenerateLabels) => (None, None, Some(EvalError::DegenerateLabels.to_string())),
        Err(e) => return Err(e),
    };
    Ok(TaskReport {
        task: task.name().to_string(),
        accuracy: confusion.accuracy(),
        auc,
        confusion,
        error,
        roc,
    })
}

/// Per-task accuracy, AUC and confusion matrix plus the mean AUC. A task with
/// single-class labels carries the error in its entry and leaves `mean_auc`
/// empty.
pub fn evaluation_report(task1: &TaskScores, task2: &TaskScores) -> Result<EvalReport, EvalError> {
    if task1.ids.len() != task2.ids.len() {
        return Err(EvalError::IdMismatch(task1.ids.len().min(task2.ids.len())));
    }
    if let Some(pos) = task1.ids.iter().zip(&task2.ids).position(|(a, b)| a != b) {
        return Err(EvalError::IdMismatch(pos));
    }
    let r1 = task_report(Task::Malignancy, task1)?;
    let r2 = task_report(Task::CellOrigin, task2)?;
    let mean_auc = match (r1.auc, r2.auc) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(EvalReport {
        tasks: vec![r1, r2],
        mean_auc,
    })
}
