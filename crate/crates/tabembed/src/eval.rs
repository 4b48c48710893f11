//! Distance-based downstream prediction: exact k-NN retrieval,
//! inverse-distance target aggregation and the quality metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::RowEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// Inverse-distance weighted mean: stays within the neighbor targets.
    #[default]
    Normalized,
    /// The verbatim unnormalized inverse-distance sum.
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// The k nearest training rows, ascending by distance, ties broken by the
/// lower training index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub d: usize,
    pub k: usize,
    pub n_test: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmspe: Option<f64>,
}

pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> f64 {
    match metric {
        DistanceMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm_a == 0.0 || norm_b == 0.0 {
                if norm_a == norm_b {
                    0.0
                } else {
                    1.0
                }
            } else {
                1.0 - dot / (norm_a * norm_b)
            }
        }
    }
}

/// Exact scan for the k nearest training embeddings.
pub fn knn(
    query: &RowEmbedding,
    train: &[RowEmbedding],
    k: usize,
    metric: DistanceMetric,
) -> NeighborSet {
    assert!(k >= 1, "k must be >= 1");
    assert!(!train.is_empty(), "training set must not be empty");
    // Max-heap of the current k best so the scan is O(n log k).
    let mut heap: std::collections::BinaryHeap<Candidate> =
        std::collections::BinaryHeap::with_capacity(k + 1);
    for (index, row) in train.iter().enumerate() {
        let d = distance(&query.vector, &row.vector, metric);
        heap.push(Candidate { distance: d, index });
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut entries: Vec<(usize, f64)> = heap
        .into_iter()
        .map(|c| (c.index, c.distance))
        .collect();
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    NeighborSet { entries }
}

#[derive(PartialEq)]
struct Candidate {
    distance: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Larger distance first; on ties the larger index is worse.
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Merge the neighbor targets into one prediction by inverse distance.
pub fn predict(neighbors: &NeighborSet, targets: &[f64], mode: PredictMode) -> Result<f64> {
    if neighbors.entries.is_empty() {
        return Err(Error::EmptyInput);
    }
    match mode {
        PredictMode::Unnormalized => {
            if neighbors.entries.iter().any(|&(_, d)| d == 0.0) {
                return Err(Error::ZeroDistance);
            }
            Ok(neighbors
                .entries
                .iter()
                .map(|&(i, d)| targets[i] / d)
                .sum())
        }
        PredictMode::Normalized => {
            let exact: Vec<usize> = neighbors
                .entries
                .iter()
                .filter_map(|&(i, d)| (d == 0.0).then_some(i))
                .collect();
            if !exact.is_empty() {
                // Duplicate rows: average the exact matches.
                return Ok(exact.iter().map(|&i| targets[i]).sum::<f64>() / exact.len() as f64);
            }
            let mut weighted = 0.0;
            let mut weights = 0.0;
            for &(i, d) in &neighbors.entries {
                weighted += targets[i] / d;
                weights += 1.0 / d;
            }
            Ok(weighted / weights)
        }
    }
}

/// Area under the ROC curve by the Mann-Whitney rank statistic, ties counted
/// one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::SizeMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average 1-based ranks over tie groups, accumulated for positives.
    let mut positive_rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end + 1) as f64 / 2.0;
        for &index in &order[start..=end] {
            if labels[index] {
                positive_rank_sum += rank;
            }
        }
        start = end + 1;
    }
    let p = positives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::SizeMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// Root mean squared percentage error. Rows with a zero truth value are
/// excluded (and counted in a warning), since the relative error is
/// undefined there.
pub fn rmspe(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::SizeMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    let mut sum = 0.0f64;
    let mut used = 0usize;
    for (p, t) in predictions.iter().zip(truth) {
        if *t == 0.0 {
            continue;
        }
        let relative = (t - p) / t;
        sum += relative * relative;
        used += 1;
    }
    let excluded = truth.len() - used;
    if excluded > 0 {
        log::warn!("rmspe: excluded {excluded} rows with zero truth values");
    }
    if used == 0 {
        return Err(Error::EmptyInput);
    }
    Ok((sum / used as f64).sqrt())
}

/// Run k-NN prediction of the test targets for every k in `ks` and compute
/// the task metrics. Rows with a missing target are excluded: training rows
/// from the neighbor pool, test rows from the metrics.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    task: Task,
    d: usize,
    train: &[RowEmbedding],
    test: &[RowEmbedding],
    train_targets: &[Option<f64>],
    test_targets: &[Option<f64>],
    ks: &[usize],
    metric: DistanceMetric,
    mode: PredictMode,
) -> Result<Vec<MetricReport>> {
    if train.len() != train_targets.len() {
        return Err(Error::SizeMismatch {
            expected: train.len(),
            actual: train_targets.len(),
        });
    }
    if test.len() != test_targets.len() {
        return Err(Error::SizeMismatch {
            expected: test.len(),
            actual: test_targets.len(),
        });
    }
    let mut pool: Vec<RowEmbedding> = Vec::new();
    let mut pool_targets: Vec<f64> = Vec::new();
    for (row, target) in train.iter().zip(train_targets) {
        if let Some(t) = *target {
            pool.push(row.clone());
            pool_targets.push(t);
        }
    }
    if pool.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labeled_test: Vec<(&RowEmbedding, f64)> = test
        .iter()
        .zip(test_targets)
        .filter_map(|(row, target)| target.map(|t| (row, t)))
        .collect();
    if labeled_test.is_empty() {
        return Err(Error::EmptyInput);
    }

    let k_max = ks.iter().copied().max().unwrap_or(1).min(pool.len());

    // Neighbors are found once with the largest k; smaller k prefixes are
    // consistent because ties break by index.
    let neighborhoods: Vec<NeighborSet> = labeled_test
        .par_iter()
        .map(|(row, _)| knn(row, &pool, k_max, metric))
        .collect();

    let mut reports = Vec::with_capacity(ks.len());
    for &k in ks {
        let k_used = k.min(pool.len());
        let mut predictions = Vec::with_capacity(labeled_test.len());
        let mut truth = Vec::with_capacity(labeled_test.len());
        for (neighbors, (_, target)) in neighborhoods.iter().zip(&labeled_test) {
            let prefix = NeighborSet {
                entries: neighbors.entries[..k_used].to_vec(),
            };
            predictions.push(predict(&prefix, &pool_targets, mode)?);
            truth.push(*target);
        }
        let report = match task {
            Task::Classification => {
                let labels: Result<Vec<bool>> = truth
                    .iter()
                    .map(|&t| {
                        if t == 0.0 {
                            Ok(false)
                        } else if t == 1.0 {
                            Ok(true)
                        } else {
                            Err(Error::NonBinaryTarget(t))
                        }
                    })
                    .collect();
                MetricReport {
                    task,
                    d,
                    k,
                    n_test: truth.len(),
                    auc: Some(auc(&predictions, &labels?)?),
                    rmse: None,
                    rmspe: None,
                }
            }
            Task::Regression => MetricReport {
                task,
                d,
                k,
                n_test: truth.len(),
                auc: None,
                rmse: Some(rmse(&predictions, &truth)?),
                rmspe: Some(rmspe(&predictions, &truth)?),
            },
        };
        reports.push(report);
    }
    Ok(reports)
}

/// `d<TAB>k<TAB>metric_name<TAB>value` lines.
pub fn reports_to_tsv(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    for report in reports {
        let mut push = |name: &str, value: Option<f64>| {
            if let Some(v) = value {
                out.push_str(&format!("{}\t{}\t{}\t{}\n", report.d, report.k, name, v));
            }
        };
        push("auc", report.auc);
        push("rmse", report.rmse);
        push("rmspe", report.rmspe);
    }
    out
}
