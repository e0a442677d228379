//! Cross-model correlation, response-type classification and reliability statistics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::CorrelationError;
use crate::model::{DatasetSummary, ResponseClass, SampleScore};

/// Both the chosen MC probability and joint yes/no probability must exceed this
/// for a sample's answer to count as reliable.
pub const RELIABLE_THRESHOLD: f64 = 0.5;

/// Minimum number of observations for a correlation coefficient.
pub const MIN_OBSERVATIONS: usize = 3;

type CorrResult = Result<f64, CorrelationError>;

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < MIN_OBSERVATIONS {
        return Err(CorrelationError::TooFewObservations(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CorrelationError::Undefined);
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> CorrResult {
    check_inputs(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Err(CorrelationError::Undefined);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::Undefined);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1 ..= end)
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> CorrResult {
    check_inputs(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall's tau-b.
///
/// `tau_b = (C - D) / sqrt((C + D + Tx) * (C + D + Ty))`, where `Tx` counts pairs tied only
/// in `x` and `Ty` pairs tied only in `y`. Pairs tied in both are ignored.
pub fn kendall(x: &[f64], y: &[f64]) -> CorrResult {
    check_inputs(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal);
            let dy = y[i].partial_cmp(&y[j]).unwrap_or(Ordering::Equal);
            match (dx, dy) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tie_x += 1,
                (_, Ordering::Equal) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let base = concordant + discordant;
    let denom = (((base + tie_x) * (base + tie_y)) as f64).sqrt();
    if denom == 0.0 {
        return Err(CorrelationError::Undefined);
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Classify a set of per-choice yes-probabilities by how many exceed `threshold`.
pub fn classify_response(p_yn: &[f64], threshold: f64) -> ResponseClass {
    match p_yn.iter().filter(|&&p| p > threshold).count() {
        0 => ResponseClass::Abstention,
        1 => ResponseClass::Confidence,
        _ => ResponseClass::Overconfidence,
    }
}

pub fn is_reliable(score: &SampleScore) -> bool {
    score.p_mc_chosen > RELIABLE_THRESHOLD && score.p_jyn_chosen > RELIABLE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliableSelection {
    pub selected: Vec<String>,
    pub n_r: usize,
    /// Selected samples that are also correct; absent when no score carries ground truth.
    pub n_rgt: Option<usize>,
    /// `n_rgt / n_r`; absent when nothing was selected or ground truth is missing.
    pub precision: Option<f64>,
}

/// Pick the samples whose chosen answer is confirmed by both the MC and joint yes/no probes.
pub fn select_reliable(scores: &[SampleScore]) -> ReliableSelection {
    let selected: Vec<&SampleScore> = scores.iter().filter(|s| is_reliable(s)).collect();
    let has_gt = scores.iter().any(|s| s.mc_correct.is_some());
    let n_r = selected.len();
    let n_rgt = has_gt.then(|| {
        selected
            .iter()
            .filter(|s| s.mc_correct == Some(true))
            .count()
    });
    ReliableSelection {
        selected: selected.iter().map(|s| s.sample_id.clone()).collect(),
        n_r,
        n_rgt,
        precision: n_rgt.filter(|_| n_r > 0).map(|g| g as f64 / n_r as f64),
    }
}

/// `lcm_gt / lcm`, absent when `lcm` is zero or `lcm_gt` unknown.
pub fn reliability_ratio(summary: &DatasetSummary) -> Option<f64> {
    let gt = summary.lcm_gt?;
    (summary.lcm > 0.0).then(|| gt / summary.lcm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtMetric {
    Acc,
    JAcc,
    F1,
}

impl GtMetric {
    pub const ALL: [GtMetric; 3] = [GtMetric::Acc, GtMetric::JAcc, GtMetric::F1];

    pub fn of(self, s: &DatasetSummary) -> Option<f64> {
        match self {
            GtMetric::Acc => s.acc,
            GtMetric::JAcc => s.j_acc,
            GtMetric::F1 => s.f1,
        }
    }
}

/// Correlations of LCM with one ground-truth metric. `None` marks an undefined coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: GtMetric,
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub kendall_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dataset: String,
    pub n_models: usize,
    pub pairs: Vec<MetricCorrelation>,
}

impl CorrelationReport {
    pub fn get(&self, metric: GtMetric) -> Option<&MetricCorrelation> {
        self.pairs.iter().find(|p| p.metric == metric)
    }
}

fn defined(r: CorrResult) -> Result<Option<f64>, CorrelationError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CorrelationError::Undefined) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Correlate per-model LCM with Acc, J-Acc and F1 across models evaluated on one dataset.
pub fn correlate_models(
    summaries: &[DatasetSummary],
) -> Result<CorrelationReport, CorrelationError> {
    if summaries.len() < MIN_OBSERVATIONS {
        return Err(CorrelationError::TooFewObservations(summaries.len()));
    }
    let dataset = &summaries[0].dataset;
    if let Some(other) = summaries.iter().find(|s| &s.dataset != dataset) {
        return Err(CorrelationError::MixedDatasets(
            dataset.clone(),
            other.dataset.clone(),
        ));
    }
    let lcm: Vec<f64> = summaries.iter().map(|s| s.lcm).collect();
    let mut pairs = Vec::with_capacity(3);
    for metric in GtMetric::ALL {
        let values = summaries
            .iter()
            .map(|s| {
                metric
                    .of(s)
                    .ok_or_else(|| CorrelationError::MissingMetric(s.model.clone()))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        pairs.push(MetricCorrelation {
            metric,
            pearson_r: defined(pearson(&values, &lcm))?,
            spearman_rho: defined(spearman(&values, &lcm))?,
            kendall_tau: defined(kendall(&values, &lcm))?,
        });
    }
    Ok(CorrelationReport {
        dataset: dataset.clone(),
        n_models: summaries.len(),
        pairs,
    })
}
