use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{DenseMatrix, RngStream};
use crate::model::{adam_step, AdamState, GraphBatch, ModelConfig, ModelState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Auroc,
}

/// Train, validation and test selections over nodes (or graphs).
#[derive(Clone, Debug, PartialEq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn validate(&self, labels: &[i64], classes: usize) -> Result<()> {
        let n = labels.len();
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(Error::shape("mask lengths differ from the label count"));
        }
        for i in 0..n {
            let flags = [("train", self.train[i]), ("val", self.val[i]), ("test", self.test[i])];
            let set: Vec<&'static str> = flags.iter().filter(|f| f.1).map(|f| f.0).collect();
            if set.len() > 1 {
                return Err(Error::MaskOverlap {
                    node: i,
                    first: set[0],
                    second: set[1],
                });
            }
            if !set.is_empty() && !(0..classes as i64).contains(&labels[i]) {
                return Err(Error::param(format!(
                    "entry {i} is masked but has label {} outside 0..{classes}",
                    labels[i]
                )));
            }
        }
        Ok(())
    }
}

fn masked_rows(n: usize, labels: &[i64], mask: &[bool]) -> Result<Vec<usize>> {
    if labels.len() != n || mask.len() != n {
        return Err(Error::shape(format!(
            "{} labels and {} mask entries for {n} rows",
            labels.len(),
            mask.len()
        )));
    }
    Ok((0..n).filter(|&i| mask[i]).collect())
}

fn label_of(labels: &[i64], i: usize, classes: usize) -> Result<usize> {
    let y = labels[i];
    if y < 0 || y as usize >= classes {
        return Err(Error::param(format!("row {i} has label {y} outside 0..{classes}")));
    }
    Ok(y as usize)
}

/// Mean softmax cross-entropy over the masked rows and its logit gradient.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[i64], mask: &[bool]) -> Result<(f64, DenseMatrix)> {
    let rows = masked_rows(logits.rows(), labels, mask)?;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    if rows.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for &i in &rows {
        let y = label_of(labels, i, logits.cols())?;
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - z[y];
        let g = grad.row_mut(i);
        for (gc, zc) in g.iter_mut().zip(z) {
            *gc = scale * (zc - lse).exp();
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Fraction of masked rows whose argmax equals the label.
pub fn accuracy(logits: &DenseMatrix, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let rows = masked_rows(logits.rows(), labels, mask)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset("accuracy over an empty mask".into()));
    }
    let mut correct = 0usize;
    for &i in &rows {
        let z = logits.row(i);
        // First maximum wins ties.
        let pred = (0..z.len()).fold(0, |best, c| if z[c] > z[best] { c } else { best });
        if pred as i64 == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Area under the ROC curve of `scores` for binary `labels`, ties counted half.
pub fn auroc(scores: &[f64], labels: &[i64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    if labels.iter().any(|&y| y != 0 && y != 1) {
        return Err(Error::param("auroc needs binary 0/1 labels"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::param("auroc needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie block i..=j.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

fn score(logits: &DenseMatrix, labels: &[i64], mask: &[bool], metric: Metric) -> Result<f64> {
    match metric {
        Metric::Accuracy => accuracy(logits, labels, mask),
        Metric::Auroc => {
            if logits.cols() != 2 {
                return Err(Error::param("auroc needs a two-class model"));
            }
            let rows = masked_rows(logits.rows(), labels, mask)?;
            let scores: Vec<f64> = rows.iter().map(|&i| logits[(i, 1)] - logits[(i, 0)]).collect();
            let ys: Vec<i64> = rows.iter().map(|&i| labels[i]).collect();
            auroc(&scores, &ys)
        }
    }
}

/// Metric of a fresh forward pass over the masked rows.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    state: &mut ModelState,
    config: &ModelConfig,
    na: &NormalizedAdjacency,
    x0: &DenseMatrix,
    batch: Option<&GraphBatch>,
    labels: &[i64],
    mask: &[bool],
    metric: Metric,
) -> Result<f64> {
    let logits = state.forward(config, na, x0, batch)?;
    score(&logits, labels, mask, metric)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Number of optimizer steps taken before this evaluation.
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<f64>,
    /// Cross-entropy over the validation rows, without the L2 term.
    pub val_loss: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub metric: Metric,
    pub epochs: Vec<EpochRecord>,
    pub final_test: Option<f64>,
    /// Epoch with the highest validation score, ties going to the lower
    /// validation loss and then to the earlier epoch (the last epoch when
    /// there is no validation split).
    pub best_epoch: usize,
    pub best_val: Option<f64>,
    pub test_at_best_val: Option<f64>,
}

/// Full-batch training for `config.epochs` Adam steps. Only the
/// initialization draws from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    config: &ModelConfig,
    na: &NormalizedAdjacency,
    x0: &DenseMatrix,
    batch: Option<&GraphBatch>,
    labels: &[i64],
    masks: &Masks,
    metric: Metric,
    rng: &RngStream,
) -> Result<(TrainReport, ModelState)> {
    config.validate()?;
    masks.validate(labels, config.num_classes())?;
    let mut state = ModelState::new(config, rng)?;
    let mut opt = AdamState::new(&state);
    let has = |m: &[bool]| m.iter().any(|&b| b);
    let (has_val, has_test) = (has(&masks.val), has(&masks.test));
    let mut epochs = Vec::with_capacity(config.epochs + 1);
    let mut best: Option<(usize, f64, f64)> = None;

    for epoch in 0..=config.epochs {
        let logits = state.forward(config, na, x0, batch)?;
        let val = has_val.then(|| score(&logits, labels, &masks.val, metric)).transpose()?;
        let test = has_test.then(|| score(&logits, labels, &masks.test, metric)).transpose()?;
        let val_loss = has_val
            .then(|| cross_entropy(&logits, labels, &masks.val).map(|r| r.0))
            .transpose()?;
        if let (Some(v), Some(vl)) = (val, val_loss) {
            if best.is_none_or(|(_, b, bl)| v > b || (v == b && vl < bl)) {
                best = Some((epoch, v, vl));
            }
        }
        let (loss, grads) = state.loss_and_grad(config, na, labels, &masks.train)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss,
            val,
            val_loss,
            test,
        });
        if epoch < config.epochs {
            adam_step(&mut state, &grads, &mut opt, config.learning_rate)?;
        }
    }
    let last = epochs.last().expect("at least the at-init record");
    let best_epoch = best.map_or(last.epoch, |(e, _, _)| e);
    let report = TrainReport {
        metric,
        final_test: last.test,
        best_epoch,
        best_val: best.map(|(_, v, _)| v),
        test_at_best_val: epochs[best_epoch].test,
        epochs,
    };
    Ok((report, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_log_c() {
        let logits = DenseMatrix::filled(3, 5, 0.7);
        let (loss, _) = cross_entropy(&logits, &[0, 4, 2], &[true; 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn unmasked_rows_have_zero_gradient() {
        let logits = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let (_, g) = cross_entropy(&logits, &[0, -1, 1], &[true, false, true]).unwrap();
        assert_eq!(g.row(1), &[0.0, 0.0]);
        assert!((g.row(0).iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn accuracy_of_perfect_logits() {
        let logits = DenseMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[0, 1], &[true, true]).unwrap(), 1.0);
        assert!(accuracy(&logits, &[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn auroc_basics() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auroc(&[0.1, 0.2], &[0, 2]).is_err());
    }

    #[test]
    fn auroc_of_random_scores() {
        let mut rng = RngStream::new(9, 0);
        let n = 100_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
        let a = auroc(&scores, &labels).unwrap();
        assert!((a - 0.5).abs() < 0.01, "auroc {a}");
    }

    #[test]
    fn overlapping_masks_rejected() {
        let m = Masks {
            train: vec![true, false],
            val: vec![false, false],
            test: vec![true, false],
        };
        assert!(matches!(
            m.validate(&[0, 0], 1),
            Err(Error::MaskOverlap { node: 0, first: "train", second: "test" })
        ));
    }
}
