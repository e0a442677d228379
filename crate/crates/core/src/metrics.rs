//! Per-sample logical-consistency scoring for both dataset layouts, and dataset aggregation.
//!
//! Multiple-choice layout: one MC probe over all K choices plus K independent yes/no probes.
//! A choice is logically consistent when the model confirms it in isolation (sufficiency) and
//! rejects every other choice (necessity); the joint yes/no probability is the geometric mean
//! of those two factors, and the per-sample score is the best geometric mean of MC probability
//! and joint yes/no probability over the choices.
//!
//! Paired layout: two images and two texts with alternating answers. Four two-way MC subtests
//! (each image picks a text, each text picks an image) are checked against the 2x2 grid of
//! yes/no probes; each subtest scores the fourth root of a four-factor product and the sample
//! score is the mean over the subtests.
//!
//! Probabilities are consumed as emitted. MC vectors are never renormalized.

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, MetricError, Result};
use crate::model::{DatasetSummary, Format, GtPairing, ResponseClass, SampleScore};
use crate::par;

/// Threshold at which a probability counts as a "yes".
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Scale on which the paired-layout joint yes/no value is compared to the J-Acc threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JaccScale {
    /// Square root of the two-factor product (same probability scale as the MC layout).
    #[default]
    Root,
    /// The raw two-factor product.
    Raw,
}

impl std::str::FromStr for JaccScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "root" => Ok(JaccScale::Root),
            "raw" => Ok(JaccScale::Raw),
            other => Err(format!("unknown scale {other:?} (expected root or raw)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    /// Confirmation threshold for response classes and J-Acc.
    pub threshold: f64,
    pub nb_jacc_scale: JaccScale,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            threshold: DEFAULT_THRESHOLD,
            nb_jacc_scale: JaccScale::Root,
        }
    }
}

fn check_prob(field: &'static str, value: f64) -> std::result::Result<f64, MetricError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(MetricError::OutOfRange { field, value })
    }
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Probabilities for one multiple-choice sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McProbBundle {
    p_mc: Vec<f64>,
    p_yn: Vec<f64>,
    gt_index: Option<usize>,
}

impl McProbBundle {
    pub fn new(
        p_mc: Vec<f64>,
        p_yn: Vec<f64>,
        gt_index: Option<usize>,
    ) -> std::result::Result<Self, MetricError> {
        if p_mc.len() != p_yn.len() {
            return Err(MetricError::LengthMismatch {
                mc: p_mc.len(),
                yn: p_yn.len(),
            });
        }
        if p_mc.len() < 2 {
            return Err(MetricError::TooFewChoices(p_mc.len()));
        }
        for &p in &p_mc {
            check_prob("p_mc", p)?;
        }
        for &p in &p_yn {
            check_prob("p_yn", p)?;
        }
        if let Some(gt) = gt_index {
            if gt >= p_mc.len() {
                return Err(MetricError::IndexOutOfRange {
                    index: gt,
                    len: p_mc.len(),
                });
            }
        }
        Ok(McProbBundle {
            p_mc,
            p_yn,
            gt_index,
        })
    }

    pub fn p_mc(&self) -> &[f64] {
        &self.p_mc
    }

    pub fn p_yn(&self) -> &[f64] {
        &self.p_yn
    }

    pub fn gt_index(&self) -> Option<usize> {
        self.gt_index
    }

    pub fn num_choices(&self) -> usize {
        self.p_mc.len()
    }

    pub fn with_gt(mut self, gt_index: Option<usize>) -> std::result::Result<Self, MetricError> {
        if let Some(gt) = gt_index {
            if gt >= self.p_mc.len() {
                return Err(MetricError::IndexOutOfRange {
                    index: gt,
                    len: self.p_mc.len(),
                });
            }
        }
        self.gt_index = gt_index;
        Ok(self)
    }
}

/// Joint yes/no probability that choice `k` is right and no other choice is.
///
/// Sufficiency is the yes-probability of choice `k`; necessity is the weakest rejection
/// among the other choices, `min_{i != k} (1 - p_yn[i])`.
pub fn joint_yn(p_yn: &[f64], k: usize) -> std::result::Result<f64, MetricError> {
    if k >= p_yn.len() {
        return Err(MetricError::IndexOutOfRange {
            index: k,
            len: p_yn.len(),
        });
    }
    if p_yn.len() < 2 {
        return Err(MetricError::TooFewChoices(p_yn.len()));
    }
    let sufficient = p_yn[k];
    let necessary = p_yn
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &p)| 1.0 - p)
        .fold(f64::INFINITY, f64::min);
    Ok((sufficient * necessary).sqrt())
}

/// [`joint_yn`] for every choice at once, in O(K).
pub fn joint_yn_all(p_yn: &[f64]) -> Vec<f64> {
    // The min over "all but k" is the global min unless k holds it, then the runner-up.
    let (mut lo, mut lo_idx, mut second) = (f64::INFINITY, usize::MAX, f64::INFINITY);
    for (i, &p) in p_yn.iter().enumerate() {
        let reject = 1.0 - p;
        if reject < lo {
            second = lo;
            lo = reject;
            lo_idx = i;
        } else if reject < second {
            second = reject;
        }
    }
    p_yn.iter()
        .enumerate()
        .map(|(k, &p)| {
            let necessary = if k == lo_idx { second } else { lo };
            (p * necessary).sqrt()
        })
        .collect()
}

/// Outcome of scoring one multiple-choice sample without ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConsistency {
    pub p_lc: f64,
    pub chosen_index: usize,
    pub p_mc_chosen: f64,
    pub p_jyn_chosen: f64,
}

fn mc_candidates(bundle: &McProbBundle) -> (Vec<f64>, Vec<f64>) {
    let jyn = joint_yn_all(&bundle.p_yn);
    let cand = bundle
        .p_mc
        .iter()
        .zip(&jyn)
        .map(|(mc, j)| (mc * j).sqrt())
        .collect();
    (cand, jyn)
}

/// Annotation-free consistency score of a multiple-choice sample.
pub fn lcm_mc(bundle: &McProbBundle) -> McConsistency {
    let (cand, jyn) = mc_candidates(bundle);
    let chosen = argmax(&cand);
    McConsistency {
        p_lc: cand[chosen],
        chosen_index: chosen,
        p_mc_chosen: bundle.p_mc[chosen],
        p_jyn_chosen: jyn[chosen],
    }
}

/// Consistency score evaluated at the ground-truth choice. Never exceeds [`lcm_mc`].
pub fn lcm_mc_gt(bundle: &McProbBundle) -> std::result::Result<f64, MetricError> {
    let gt = bundle.gt_index.ok_or(MetricError::MissingGroundTruth)?;
    let jyn = joint_yn(&bundle.p_yn, gt)?;
    Ok((bundle.p_mc[gt] * jyn).sqrt())
}

/// Probabilities for one paired unit.
///
/// `p_yn[i][j]` is the yes-probability for image `i+1` with text `j+1`. `p_mc[s][l]` is the
/// probability subtest `s` (a, b, c, d) assigns to pairing `c_{l+1}`, where c1 is the straight
/// pairing (V1-T1, V2-T2) and c2 the crossed one. Use [`NbProbBundle::from_presented`] to build
/// one from option-order MC outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbProbBundle {
    p_yn: [[f64; 2]; 2],
    p_mc: [[f64; 2]; 4],
    gt_pairing: Option<GtPairing>,
}

/// For each subtest, the option index (in manifest presentation order) that corresponds to c1.
///
/// a: V1 picks T1/T2 (T1 is c1). b: V2 picks T1/T2 (T2 is c1).
/// c: T1 picks V1/V2 (V1 is c1). d: T2 picks V1/V2 (V2 is c1).
pub const NB_C1_OPTION: [usize; 4] = [0, 1, 0, 1];

impl NbProbBundle {
    /// Build from MC probabilities given in pairing space (`[P(c1), P(c2)]` per subtest).
    pub fn new(
        p_yn: [[f64; 2]; 2],
        p_mc: [[f64; 2]; 4],
        gt_pairing: Option<GtPairing>,
    ) -> std::result::Result<Self, MetricError> {
        for p in p_yn.iter().flatten() {
            check_prob("p_yn", *p)?;
        }
        for p in p_mc.iter().flatten() {
            check_prob("p_mc", *p)?;
        }
        Ok(NbProbBundle {
            p_yn,
            p_mc,
            gt_pairing,
        })
    }

    /// Build from MC probabilities in option order (texts or images as listed in the manifest).
    pub fn from_presented(
        p_yn: [[f64; 2]; 2],
        presented_mc: [[f64; 2]; 4],
        gt_pairing: Option<GtPairing>,
    ) -> std::result::Result<Self, MetricError> {
        let mut p_mc = [[0.0; 2]; 4];
        for (s, pair) in presented_mc.iter().enumerate() {
            let c1 = NB_C1_OPTION[s];
            p_mc[s] = [pair[c1], pair[1 - c1]];
        }
        Self::new(p_yn, p_mc, gt_pairing)
    }

    pub fn p_yn(&self) -> &[[f64; 2]; 2] {
        &self.p_yn
    }

    pub fn p_mc(&self) -> &[[f64; 2]; 4] {
        &self.p_mc
    }

    pub fn gt_pairing(&self) -> Option<GtPairing> {
        self.gt_pairing
    }

    pub fn with_gt(mut self, gt_pairing: Option<GtPairing>) -> Self {
        self.gt_pairing = gt_pairing;
        self
    }

    /// The yes/no probabilities a subtest uses for choice c1: (confirming cell, negated cell).
    ///
    /// a reads row V1, b row V2, c column T1, d column T2. For c2 the two cells swap roles.
    pub fn yn_slots(&self, subtest: usize) -> (f64, f64) {
        let y = &self.p_yn;
        match subtest {
            0 => (y[0][0], y[0][1]),
            1 => (y[1][1], y[1][0]),
            2 => (y[0][0], y[1][0]),
            3 => (y[1][1], y[0][1]),
            _ => panic!("subtest index {subtest} out of range"),
        }
    }

    fn parts(&self, subtest: usize) -> SubtestParts {
        let (pos, neg) = self.yn_slots(subtest);
        subtest_parts(self.p_mc[subtest], pos, neg)
    }
}

/// Two-candidate products of one paired subtest.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SubtestParts {
    mc: [f64; 2],
    jyn: [f64; 2],
}

impl SubtestParts {
    fn score(&self, l: usize) -> f64 {
        (self.mc[l] * self.jyn[l]).powf(0.25)
    }
}

fn subtest_parts(p_mc_pair: [f64; 2], yn_pos: f64, yn_neg: f64) -> SubtestParts {
    SubtestParts {
        mc: [
            p_mc_pair[0] * (1.0 - p_mc_pair[1]),
            p_mc_pair[1] * (1.0 - p_mc_pair[0]),
        ],
        jyn: [yn_pos * (1.0 - yn_neg), yn_neg * (1.0 - yn_pos)],
    }
}

/// Score of one paired subtest and the winning choice (0 = c1, 1 = c2, ties to c1).
///
/// `yn_pos` is the yes-probability of the cell that confirms c1 within this subtest, `yn_neg`
/// the cell that must be rejected under c1.
pub fn nb_subtest_lcm(
    p_mc_pair: (f64, f64),
    yn_pos: f64,
    yn_neg: f64,
) -> std::result::Result<(f64, usize), MetricError> {
    check_prob("p_mc", p_mc_pair.0)?;
    check_prob("p_mc", p_mc_pair.1)?;
    check_prob("p_yn", yn_pos)?;
    check_prob("p_yn", yn_neg)?;
    let parts = subtest_parts([p_mc_pair.0, p_mc_pair.1], yn_pos, yn_neg);
    let scores = [parts.score(0), parts.score(1)];
    let chosen = argmax(&scores);
    Ok((scores[chosen], chosen))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbConsistency {
    pub p_lc: f64,
    pub subscores: [f64; 4],
    /// Winning pairing per subtest (0 = c1, 1 = c2).
    pub chosen: [usize; 4],
    /// Pairing with the best mean subtest score across all four subtests.
    pub chosen_index: usize,
    /// Mean over subtests of the square-root-normalized MC product at `chosen_index`.
    pub p_mc_chosen: f64,
    /// Mean over subtests of the square-root-normalized joint yes/no product at `chosen_index`.
    pub p_jyn_chosen: f64,
}

/// Annotation-free consistency score of a paired unit.
pub fn lcm_nb(bundle: &NbProbBundle) -> NbConsistency {
    let parts: [SubtestParts; 4] = std::array::from_fn(|s| bundle.parts(s));
    let mut subscores = [0.0; 4];
    let mut chosen = [0; 4];
    for (s, p) in parts.iter().enumerate() {
        let cand = [p.score(0), p.score(1)];
        chosen[s] = argmax(&cand);
        subscores[s] = cand[chosen[s]];
    }
    let per_pairing: Vec<f64> = (0..2)
        .map(|l| parts.iter().map(|p| p.score(l)).sum::<f64>() / 4.0)
        .collect();
    let best = argmax(&per_pairing);
    NbConsistency {
        p_lc: subscores.iter().sum::<f64>() / 4.0,
        subscores,
        chosen,
        chosen_index: best,
        p_mc_chosen: parts.iter().map(|p| p.mc[best].sqrt()).sum::<f64>() / 4.0,
        p_jyn_chosen: parts.iter().map(|p| p.jyn[best].sqrt()).sum::<f64>() / 4.0,
    }
}

/// Paired-unit score with every subtest evaluated at the ground-truth pairing.
pub fn lcm_nb_gt(bundle: &NbProbBundle) -> std::result::Result<f64, MetricError> {
    let gt = bundle
        .gt_pairing
        .ok_or(MetricError::MissingGroundTruth)?
        .choice();
    Ok((0..4).map(|s| bundle.parts(s).score(gt)).sum::<f64>() / 4.0)
}

/// Whether the ground-truth choice passes the joint yes/no test.
pub fn jyn_correct_mc(
    bundle: &McProbBundle,
    threshold: f64,
) -> std::result::Result<bool, MetricError> {
    let gt = bundle.gt_index.ok_or(MetricError::MissingGroundTruth)?;
    Ok(joint_yn(&bundle.p_yn, gt)? > threshold)
}

/// Whether the ground-truth pairing passes the joint yes/no test in all four subtests.
pub fn jyn_correct_nb(
    bundle: &NbProbBundle,
    threshold: f64,
    scale: JaccScale,
) -> std::result::Result<bool, MetricError> {
    let gt = bundle
        .gt_pairing
        .ok_or(MetricError::MissingGroundTruth)?
        .choice();
    Ok((0..4).all(|s| {
        let raw = bundle.parts(s).jyn[gt];
        let value = match scale {
            JaccScale::Root => raw.sqrt(),
            JaccScale::Raw => raw,
        };
        value > threshold
    }))
}

/// Whether the MC probe's top choice (ties to lowest index) is the ground truth.
pub fn mc_correct_mc(bundle: &McProbBundle) -> std::result::Result<bool, MetricError> {
    let gt = bundle.gt_index.ok_or(MetricError::MissingGroundTruth)?;
    Ok(argmax(&bundle.p_mc) == gt)
}

/// Number of the four yes/no probes whose thresholded answer matches the ground truth.
pub fn nb_probe_hits(bundle: &NbProbBundle) -> std::result::Result<u8, MetricError> {
    let gt = bundle.gt_pairing.ok_or(MetricError::MissingGroundTruth)?;
    let mut hits = 0;
    for i in 0..2u8 {
        for j in 0..2u8 {
            let said_yes = bundle.p_yn[i as usize][j as usize] > DEFAULT_THRESHOLD;
            if said_yes == gt.expects_yes(i + 1, j + 1) {
                hits += 1;
            }
        }
    }
    Ok(hits)
}

/// Harmonic mean of accuracy and joint accuracy; 0 when both are 0.
pub fn f1(acc: f64, j_acc: f64) -> f64 {
    if acc + j_acc == 0.0 {
        0.0
    } else {
        2.0 * acc * j_acc / (acc + j_acc)
    }
}

pub fn score_mc(sample_id: &str, bundle: &McProbBundle, cfg: &ScoringConfig) -> SampleScore {
    let c = lcm_mc(bundle);
    let has_gt = bundle.gt_index.is_some();
    SampleScore {
        sample_id: sample_id.to_string(),
        format: Format::Mc,
        p_lc: c.p_lc,
        p_lc_gt: has_gt.then(|| lcm_mc_gt(bundle).expect("gt checked")),
        chosen_index: c.chosen_index,
        p_mc_chosen: c.p_mc_chosen,
        p_jyn_chosen: c.p_jyn_chosen,
        response_class: Some(analysis::classify_response(&bundle.p_yn, cfg.threshold)),
        mc_correct: has_gt.then(|| mc_correct_mc(bundle).expect("gt checked")),
        jyn_correct: has_gt.then(|| jyn_correct_mc(bundle, cfg.threshold).expect("gt checked")),
        subscores: None,
        probe_hits: None,
    }
}

pub fn score_nb(sample_id: &str, bundle: &NbProbBundle, cfg: &ScoringConfig) -> SampleScore {
    let c = lcm_nb(bundle);
    let has_gt = bundle.gt_pairing.is_some();
    let hits = has_gt.then(|| nb_probe_hits(bundle).expect("gt checked"));
    SampleScore {
        sample_id: sample_id.to_string(),
        format: Format::Nb,
        p_lc: c.p_lc,
        p_lc_gt: has_gt.then(|| lcm_nb_gt(bundle).expect("gt checked")),
        chosen_index: c.chosen_index,
        p_mc_chosen: c.p_mc_chosen,
        p_jyn_chosen: c.p_jyn_chosen,
        response_class: None,
        mc_correct: hits.map(|h| h == 4),
        jyn_correct: has_gt
            .then(|| jyn_correct_nb(bundle, cfg.threshold, cfg.nb_jacc_scale).expect("gt checked")),
        subscores: Some(c.subscores),
        probe_hits: hits,
    }
}

/// Either layout's probability bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleProbs {
    Mc(McProbBundle),
    Nb(NbProbBundle),
}

impl SampleProbs {
    pub fn format(&self) -> Format {
        match self {
            SampleProbs::Mc(_) => Format::Mc,
            SampleProbs::Nb(_) => Format::Nb,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedSample {
    pub sample_id: String,
    pub probs: SampleProbs,
}

pub fn score_sample(sample: &JoinedSample, cfg: &ScoringConfig) -> SampleScore {
    match &sample.probs {
        SampleProbs::Mc(b) => score_mc(&sample.sample_id, b, cfg),
        SampleProbs::Nb(b) => score_nb(&sample.sample_id, b, cfg),
    }
}

/// Score every sample (in parallel when enabled); output is ordered by sample id.
pub fn score_all(samples: &[JoinedSample], cfg: &ScoringConfig) -> Vec<SampleScore> {
    let mut scores = par::map(samples, |s| score_sample(s, cfg));
    scores.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    scores
}

/// Sequential counterpart of [`score_all`].
pub fn score_all_seq(samples: &[JoinedSample], cfg: &ScoringConfig) -> Vec<SampleScore> {
    let mut scores = par::map_seq(samples, |s| score_sample(s, cfg));
    scores.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    scores
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    n: usize,
    sum_lc: f64,
    n_lc_gt: usize,
    sum_lc_gt: f64,
    n_mc: usize,
    mc_hits: usize,
    n_probes: usize,
    probe_hits: usize,
    n_jyn: usize,
    jyn_hits: usize,
    classes: [usize; 3],
    n_classified: usize,
    n_r: usize,
    n_rgt: usize,
    mc_format: usize,
}

impl Tally {
    fn add(mut self, s: &SampleScore) -> Self {
        self.n += 1;
        self.sum_lc += s.p_lc;
        if s.format == Format::Mc {
            self.mc_format += 1;
        }
        if let Some(v) = s.p_lc_gt {
            self.n_lc_gt += 1;
            self.sum_lc_gt += v;
        }
        match (s.format, s.probe_hits, s.mc_correct) {
            (Format::Nb, Some(h), _) => {
                self.n_probes += 4;
                self.probe_hits += h as usize;
            }
            (_, _, Some(ok)) => {
                self.n_mc += 1;
                self.mc_hits += ok as usize;
            }
            _ => {}
        }
        if let Some(ok) = s.jyn_correct {
            self.n_jyn += 1;
            self.jyn_hits += ok as usize;
        }
        if let Some(class) = s.response_class {
            self.n_classified += 1;
            self.classes[class as usize] += 1;
        }
        if analysis::is_reliable(s) {
            self.n_r += 1;
            if let Some(ok) = s.mc_correct {
                self.n_rgt += ok as usize;
            }
        }
        self
    }

    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.sum_lc += o.sum_lc;
        self.n_lc_gt += o.n_lc_gt;
        self.sum_lc_gt += o.sum_lc_gt;
        self.n_mc += o.n_mc;
        self.mc_hits += o.mc_hits;
        self.n_probes += o.n_probes;
        self.probe_hits += o.probe_hits;
        self.n_jyn += o.n_jyn;
        self.jyn_hits += o.jyn_hits;
        for (a, b) in self.classes.iter_mut().zip(o.classes) {
            *a += b;
        }
        self.n_classified += o.n_classified;
        self.n_r += o.n_r;
        self.n_rgt += o.n_rgt;
        self.mc_format += o.mc_format;
        self
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Reduce per-sample scores to a dataset row.
///
/// Ground-truth metrics are computed over the scores that carry them and omitted when none do.
pub fn aggregate(scores: &[SampleScore], model: &str, dataset: &str) -> Result<DatasetSummary> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Aggregate("no scores to aggregate".into()))?;
    if let Some(odd) = scores.iter().find(|s| s.format != first.format) {
        return Err(Error::Aggregate(format!(
            "mixed formats: {} is {} but {} is {}",
            first.sample_id, first.format, odd.sample_id, odd.format
        )));
    }
    let t = par::fold_chunks(scores, Tally::default, Tally::add, Tally::merge);

    let acc = match first.format {
        Format::Mc => ratio(t.mc_hits, t.n_mc),
        Format::Nb => ratio(t.probe_hits, t.n_probes),
    };
    let j_acc = ratio(t.jyn_hits, t.n_jyn);
    let lcm = t.sum_lc / t.n as f64;
    let lcm_gt = (t.n_lc_gt > 0).then(|| t.sum_lc_gt / t.n_lc_gt as f64);
    let rate = |c: usize| ratio(t.classes[c], t.n_classified);
    let n_rgt = (t.n_mc + t.n_probes > 0).then_some(t.n_rgt);

    let mut summary = DatasetSummary {
        model: model.to_string(),
        dataset: dataset.to_string(),
        format: first.format,
        n_samples: t.n,
        acc,
        j_acc,
        f1: acc.zip(j_acc).map(|(a, j)| f1(a, j)),
        lcm,
        lcm_gt,
        ratio_lcm_gt: None,
        abstention_rate: rate(ResponseClass::Abstention as usize),
        confidence_rate: rate(ResponseClass::Confidence as usize),
        overconfidence_rate: rate(ResponseClass::Overconfidence as usize),
        n_r: t.n_r,
        n_rgt,
        reliable_precision: n_rgt.and_then(|g| ratio(g, t.n_r)),
    };
    summary.ratio_lcm_gt = analysis::reliability_ratio(&summary);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn mc(p_mc: &[f64], p_yn: &[f64], gt: Option<usize>) -> McProbBundle {
        McProbBundle::new(p_mc.to_vec(), p_yn.to_vec(), gt).unwrap()
    }

    #[test]
    fn joint_yn_examples() {
        assert_eq!(joint_yn(&[1.0, 0.0, 0.0, 0.0], 0).unwrap(), 1.0);
        for k in 0..4 {
            assert_eq!(joint_yn(&[1.0; 4], k).unwrap(), 0.0);
        }
        assert!((joint_yn(&[0.5; 4], 0).unwrap() - 0.5).abs() < EPS);
        assert_eq!(
            joint_yn(&[0.5; 4], 4),
            Err(MetricError::IndexOutOfRange { index: 4, len: 4 })
        );
    }

    #[test]
    fn joint_yn_all_agrees_with_pointwise() {
        let p = [0.3, 0.9, 0.9, 0.1, 0.55];
        let all = joint_yn_all(&p);
        for (k, v) in all.iter().enumerate() {
            assert!((v - joint_yn(&p, k).unwrap()).abs() < EPS);
        }
    }

    #[test]
    fn lcm_mc_examples() {
        let perfect = lcm_mc(&mc(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], None));
        assert_eq!(perfect.p_lc, 1.0);
        assert_eq!(perfect.chosen_index, 0);

        // sqrt(0.25 * sqrt(0.5 * 0.5))
        let uniform = lcm_mc(&mc(&[0.25; 4], &[0.5; 4], None));
        assert!((uniform.p_lc - 0.125f64.sqrt()).abs() < EPS);
        assert_eq!(uniform.chosen_index, 0);

        let yes_to_all = lcm_mc(&mc(&[0.1, 0.6, 0.2, 0.1], &[1.0; 4], None));
        assert_eq!(yes_to_all.p_lc, 0.0);
    }

    #[test]
    fn lcm_mc_gt_examples() {
        let b = mc(&[0.7, 0.1, 0.1, 0.1], &[0.9, 0.1, 0.2, 0.1], Some(0));
        assert_eq!(lcm_mc_gt(&b).unwrap(), lcm_mc(&b).p_lc);

        let wrong = mc(&[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], Some(0));
        assert_eq!(lcm_mc_gt(&wrong).unwrap(), 0.0);
        assert_eq!(lcm_mc(&wrong).p_lc, 1.0);

        let no_gt = mc(&[0.5, 0.5], &[0.5, 0.5], None);
        assert_eq!(lcm_mc_gt(&no_gt), Err(MetricError::MissingGroundTruth));
    }

    #[test]
    fn bundle_validation() {
        assert!(McProbBundle::new(vec![0.5], vec![0.5], None).is_err());
        assert!(McProbBundle::new(vec![0.5, 0.5], vec![0.5], None).is_err());
        assert!(McProbBundle::new(vec![0.5, 1.5], vec![0.5, 0.5], None).is_err());
        assert!(McProbBundle::new(vec![0.5, 0.5], vec![0.5, 0.5], Some(2)).is_err());
    }

    #[test]
    fn nb_subtest_examples() {
        assert_eq!(nb_subtest_lcm((1.0, 0.0), 1.0, 0.0).unwrap(), (1.0, 0));
        let (score, chosen) = nb_subtest_lcm((0.5, 0.5), 0.5, 0.5).unwrap();
        assert!((score - 0.5).abs() < EPS);
        assert_eq!(chosen, 0);
        // MC says c2 outright, YN says c1 outright: both candidates collapse to 0.
        assert_eq!(nb_subtest_lcm((0.0, 1.0), 1.0, 0.0).unwrap(), (0.0, 0));
        assert!(nb_subtest_lcm((0.0, 1.1), 1.0, 0.0).is_err());
    }

    fn perfect_nb(gt: GtPairing) -> NbProbBundle {
        let yes = |i: u8, j: u8| if gt.expects_yes(i, j) { 1.0 } else { 0.0 };
        let p_yn = [[yes(1, 1), yes(1, 2)], [yes(2, 1), yes(2, 2)]];
        let c = gt.choice();
        let mut pair = [0.0; 2];
        pair[c] = 1.0;
        NbProbBundle::new(p_yn, [pair; 4], Some(gt)).unwrap()
    }

    #[test]
    fn lcm_nb_perfect_and_uniform() {
        for gt in [GtPairing::Straight, GtPairing::Crossed] {
            let b = perfect_nb(gt);
            let c = lcm_nb(&b);
            assert_eq!(c.p_lc, 1.0);
            assert_eq!(c.chosen_index, gt.choice());
            assert_eq!(lcm_nb_gt(&b).unwrap(), 1.0);
            assert!(jyn_correct_nb(&b, 0.5, JaccScale::Root).unwrap());
            assert_eq!(nb_probe_hits(&b).unwrap(), 4);
        }
        let half = NbProbBundle::new([[0.5; 2]; 2], [[0.5; 2]; 4], None).unwrap();
        assert!((lcm_nb(&half).p_lc - 0.5).abs() < EPS);
    }

    #[test]
    fn presented_order_maps_b_and_d() {
        // Every subtest puts 0.9 on the option that means "straight".
        let presented = [[0.9, 0.1], [0.1, 0.9], [0.9, 0.1], [0.1, 0.9]];
        let b = NbProbBundle::from_presented([[0.5; 2]; 2], presented, None).unwrap();
        assert_eq!(b.p_mc(), &[[0.9, 0.1]; 4]);
    }

    #[test]
    fn nb_probe_accuracy_example() {
        let b = NbProbBundle::new(
            [[0.9, 0.2], [0.3, 0.8]],
            [[0.5; 2]; 4],
            Some(GtPairing::Straight),
        )
        .unwrap();
        assert_eq!(nb_probe_hits(&b).unwrap(), 4);
        let crossed = b.clone().with_gt(Some(GtPairing::Crossed));
        assert_eq!(nb_probe_hits(&crossed).unwrap(), 0);
    }

    #[test]
    fn jyn_correct_examples() {
        assert!(jyn_correct_mc(&mc(&[0.25; 4], &[0.9, 0.1, 0.1, 0.1], Some(0)), 0.5).unwrap());
        assert!(!jyn_correct_mc(&mc(&[0.25; 4], &[0.9, 0.9, 0.1, 0.1], Some(0)), 0.5).unwrap());
        assert!(jyn_correct_mc(&mc(&[1.0, 0.0], &[1.0, 0.0], Some(0)), 0.5).unwrap());
    }

    #[test]
    fn jacc_scale_switch() {
        // Raw product 0.7 * 0.6 = 0.42 per subtest; root ~0.648.
        let b = NbProbBundle::new(
            [[0.7, 0.4], [0.4, 0.7]],
            [[0.5; 2]; 4],
            Some(GtPairing::Straight),
        )
        .unwrap();
        assert!(jyn_correct_nb(&b, 0.5, JaccScale::Root).unwrap());
        assert!(!jyn_correct_nb(&b, 0.5, JaccScale::Raw).unwrap());
    }

    #[test]
    fn mc_correct_examples() {
        assert!(mc_correct_mc(&mc(&[0.7, 0.1, 0.1, 0.1], &[0.5; 4], Some(0))).unwrap());
        assert!(!mc_correct_mc(&mc(&[0.4, 0.6, 0.0, 0.0], &[0.5; 4], Some(0))).unwrap());
        // tie goes to the lowest index
        assert!(mc_correct_mc(&mc(&[0.5, 0.5], &[0.5; 2], Some(0))).unwrap());
    }

    #[test]
    fn f1_examples() {
        assert!((f1(0.9319, 0.5413) - 0.6848).abs() <= 5e-4);
        assert!((f1(0.7198, 0.4207) - 0.5310).abs() <= 5e-4);
        assert_eq!(f1(0.0, 0.0), 0.0);
        for x in [0.1, 0.37, 1.0] {
            assert!((f1(x, x) - x).abs() < EPS);
        }
    }

    fn score(id: &str, p_lc: f64) -> SampleScore {
        SampleScore {
            sample_id: id.into(),
            format: Format::Mc,
            p_lc,
            p_lc_gt: None,
            chosen_index: 0,
            p_mc_chosen: 0.3,
            p_jyn_chosen: 0.3,
            response_class: Some(ResponseClass::Confidence),
            mc_correct: None,
            jyn_correct: None,
            subscores: None,
            probe_hits: None,
        }
    }

    #[test]
    fn aggregate_mean_and_annotation_free_path() {
        let s = aggregate(&[score("a", 0.2), score("b", 0.6)], "m", "d").unwrap();
        assert!((s.lcm - 0.4).abs() < EPS);
        assert_eq!(s.acc, None);
        assert_eq!(s.j_acc, None);
        assert_eq!(s.f1, None);
        assert_eq!(s.lcm_gt, None);
        assert_eq!(s.n_rgt, None);
        assert_eq!(s.reliable_precision, None);
        assert_eq!(s.confidence_rate, Some(1.0));
    }

    #[test]
    fn aggregate_perfect() {
        let cfg = ScoringConfig::default();
        let scores: Vec<_> = (0..5)
            .map(|i| {
                let b = mc(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0], Some(1));
                score_mc(&format!("s{i}"), &b, &cfg)
            })
            .collect();
        let s = aggregate(&scores, "m", "d").unwrap();
        for v in [
            s.lcm,
            s.acc.unwrap(),
            s.j_acc.unwrap(),
            s.f1.unwrap(),
            s.lcm_gt.unwrap(),
        ] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(s.n_r, 5);
        assert_eq!(s.n_rgt, Some(5));
        assert_eq!(s.reliable_precision, Some(1.0));
        assert_eq!(s.ratio_lcm_gt, Some(1.0));
    }

    #[test]
    fn aggregate_rejects_empty_and_mixed() {
        assert!(aggregate(&[], "m", "d").is_err());
        let mut other = score("b", 0.1);
        other.format = Format::Nb;
        assert!(aggregate(&[score("a", 0.1), other], "m", "d").is_err());
    }

    #[test]
    fn aggregate_nb_accumulates_probes() {
        let cfg = ScoringConfig::default();
        let good = perfect_nb(GtPairing::Straight);
        let half = NbProbBundle::new(
            [[0.9, 0.9], [0.1, 0.1]],
            [[0.5; 2]; 4],
            Some(GtPairing::Straight),
        )
        .unwrap();
        let scores = vec![score_nb("a", &good, &cfg), score_nb("b", &half, &cfg)];
        assert_eq!(scores[1].probe_hits, Some(2));
        assert_eq!(scores[1].mc_correct, Some(false));
        let s = aggregate(&scores, "m", "d").unwrap();
        assert!((s.acc.unwrap() - 6.0 / 8.0).abs() < EPS);
        assert_eq!(s.abstention_rate, None);
    }
}
