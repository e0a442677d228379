//! Domain types shared by every stage of the harness.
//!
//! Everything here is plain data: immutable after construction and `Send + Sync`,
//! so scoring workers can share manifests and bundles without locking.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values outside `[0, 1]` by at most this much are clamped; larger excursions are rejected.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Clamp float noise at the `[0, 1]` boundary, rejecting anything further out (and NaN).
pub fn clamp_prob(value: f64) -> Option<f64> {
    // NaN fails the range check
    (-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE)
        .contains(&value)
        .then(|| value.clamp(0.0, 1.0))
}

/// Which dataset layout a manifest, test file or score belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Mc,
    Nb,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Mc => "mc",
            Format::Nb => "nb",
        })
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mc" => Ok(Format::Mc),
            "nb" => Ok(Format::Nb),
            other => Err(format!("unknown format {other:?} (expected mc or nb)")),
        }
    }
}

/// One multiple-choice VQA sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McItem {
    pub id: String,
    pub image: String,
    pub question: String,
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl McItem {
    pub fn num_choices(&self) -> usize {
        self.choices.len()
    }

    pub fn gt_answer(&self) -> Option<&str> {
        self.gt_index
            .and_then(|k| self.choices.get(k))
            .map(String::as_str)
    }

    /// Invariant violations local to this item (uniqueness is checked at manifest level).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("id must be non-empty".to_string());
        }
        let k = self.choices.len();
        if k < 2 {
            out.push(format!("at least 2 choices required, got {k}"));
        }
        if let Some(pos) = self.choices.iter().position(|c| c.trim().is_empty()) {
            out.push(format!("choice {pos} is empty"));
        }
        if let Some(gt) = self.gt_index {
            if gt >= k {
                out.push(format!("gt_index out of range ({gt} >= {k})"));
            }
        }
        out
    }
}

/// Which of the two possible image-text pairings is correct.
///
/// `Straight` means V1-T1 and V2-T2 match; `Crossed` means V1-T2 and V2-T1 match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtPairing {
    Straight,
    Crossed,
}

impl GtPairing {
    /// Index of this pairing in choice space: 0 for c1 (straight), 1 for c2 (crossed).
    pub fn choice(self) -> usize {
        match self {
            GtPairing::Straight => 0,
            GtPairing::Crossed => 1,
        }
    }

    /// Expected yes/no answer for image `i` with text `j` (both 1-based).
    pub fn expects_yes(self, image: u8, text: u8) -> bool {
        match self {
            GtPairing::Straight => image == text,
            GtPairing::Crossed => image != text,
        }
    }
}

/// One NaturalBench-style unit: two images, two texts, alternating answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbUnit {
    pub id: String,
    pub images: [String; 2],
    pub texts: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_pairing: Option<GtPairing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl NbUnit {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("id must be non-empty".to_string());
        }
        if self.images[0] == self.images[1] {
            out.push("images must be distinct".to_string());
        }
        if self.texts[0] == self.texts[1] {
            out.push("texts must be distinct".to_string());
        }
        if self.texts.iter().any(|t| t.trim().is_empty()) {
            out.push("texts must be non-empty".to_string());
        }
        out
    }
}

/// A parsed manifest of either format.
#[derive(Debug, Clone, PartialEq)]
pub enum Manifest {
    Mc(Vec<McItem>),
    Nb(Vec<NbUnit>),
}

impl Manifest {
    pub fn format(&self) -> Format {
        match self {
            Manifest::Mc(_) => Format::Mc,
            Manifest::Nb(_) => Format::Nb,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Manifest::Mc(items) => items.len(),
            Manifest::Nb(units) => units.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Manifest::Mc(items) => items.iter().map(|i| i.id.as_str()).collect(),
            Manifest::Nb(units) => units.iter().map(|u| u.id.as_str()).collect(),
        }
    }
}

/// A single broken invariant, located by sample id and (when parsed from a file) line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub sample_id: String,
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        write!(f, "sample {:?}: {}", self.sample_id, self.rule)
    }
}

/// Check every type invariant over a manifest. An empty report means the manifest is valid.
pub fn validate_manifest(manifest: &Manifest) -> Vec<Violation> {
    match manifest {
        Manifest::Mc(items) => collect_violations(items.iter().map(|i| (&i.id, i.violations()))),
        Manifest::Nb(units) => collect_violations(units.iter().map(|u| (&u.id, u.violations()))),
    }
}

fn collect_violations<'a>(rows: impl Iterator<Item = (&'a String, Vec<String>)>) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, (id, local)) in rows.enumerate() {
        let line = Some(idx + 1);
        for rule in local {
            out.push(Violation {
                sample_id: id.clone(),
                rule,
                line,
            });
        }
        if !seen.insert(id.as_str()) {
            out.push(Violation {
                sample_id: id.clone(),
                rule: format!("duplicate id {id:?}"),
                line,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Mc,
    Yn,
}

/// Which probe of a sample a derived test represents.
///
/// Serialized as `mc_main`, `yn_choice:<k>` (k zero-based), `nb_a`..`nb_d`
/// and `nb_yn:<i>:<j>` (image i with text j, both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subtest {
    McMain,
    YnChoice(usize),
    NbA,
    NbB,
    NbC,
    NbD,
    NbYn(u8, u8),
}

impl Subtest {
    pub fn kind(self) -> TestKind {
        match self {
            Subtest::McMain | Subtest::NbA | Subtest::NbB | Subtest::NbC | Subtest::NbD => {
                TestKind::Mc
            }
            Subtest::YnChoice(_) | Subtest::NbYn(..) => TestKind::Yn,
        }
    }

    pub fn format(self) -> Format {
        match self {
            Subtest::McMain | Subtest::YnChoice(_) => Format::Mc,
            _ => Format::Nb,
        }
    }
}

impl fmt::Display for Subtest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subtest::McMain => f.write_str("mc_main"),
            Subtest::YnChoice(k) => write!(f, "yn_choice:{k}"),
            Subtest::NbA => f.write_str("nb_a"),
            Subtest::NbB => f.write_str("nb_b"),
            Subtest::NbC => f.write_str("nb_c"),
            Subtest::NbD => f.write_str("nb_d"),
            Subtest::NbYn(i, j) => write!(f, "nb_yn:{i}:{j}"),
        }
    }
}

impl FromStr for Subtest {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("unknown subtest {s:?}");
        match s {
            "mc_main" => return Ok(Subtest::McMain),
            "nb_a" => return Ok(Subtest::NbA),
            "nb_b" => return Ok(Subtest::NbB),
            "nb_c" => return Ok(Subtest::NbC),
            "nb_d" => return Ok(Subtest::NbD),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("yn_choice:") {
            return k.parse().map(Subtest::YnChoice).map_err(|_| bad());
        }
        if let Some(rest) = s.strip_prefix("nb_yn:") {
            let (i, j) = rest.split_once(':').ok_or_else(bad)?;
            let i: u8 = i.parse().map_err(|_| bad())?;
            let j: u8 = j.parse().map_err(|_| bad())?;
            if (1..=2).contains(&i) && (1..=2).contains(&j) {
                return Ok(Subtest::NbYn(i, j));
            }
        }
        Err(bad())
    }
}

impl Serialize for Subtest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subtest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One probe the model must answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedTest {
    pub test_id: String,
    pub sample_id: String,
    pub kind: TestKind,
    pub subtest: Subtest,
    pub arity: usize,
}

impl DerivedTest {
    pub fn new(sample_id: &str, subtest: Subtest, arity: usize) -> Self {
        DerivedTest {
            test_id: test_id(sample_id, subtest),
            sample_id: sample_id.to_string(),
            kind: subtest.kind(),
            subtest,
            arity,
        }
    }
}

/// Deterministic probe identifier.
pub fn test_id(sample_id: &str, subtest: Subtest) -> String {
    format!("{sample_id}#{subtest}")
}

/// Model output for one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub test_id: String,
    pub sample_id: String,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

impl ProbRecord {
    /// Apply the boundary clamp to every entry, failing on the first real excursion.
    pub fn clamped(mut self) -> std::result::Result<Self, f64> {
        for p in &mut self.probs {
            *p = clamp_prob(*p).ok_or(*p)?;
        }
        Ok(self)
    }
}

/// Response pattern over a set of per-choice yes/no probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseClass {
    /// No choice confirmed.
    Abstention,
    /// Exactly one choice confirmed.
    Confidence,
    /// More than one choice confirmed.
    Overconfidence,
}

/// Per-sample consistency bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub format: Format,
    pub p_lc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_lc_gt: Option<f64>,
    pub chosen_index: usize,
    pub p_mc_chosen: f64,
    pub p_jyn_chosen: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_class: Option<ResponseClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jyn_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subscores: Option<[f64; 4]>,
    /// NB format only: how many of the four yes/no probes were answered correctly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_hits: Option<u8>,
}

/// Per-(model, dataset) aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub model: String,
    pub dataset: String,
    pub format: Format,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    pub lcm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcm_gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_lcm_gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstention_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overconfidence_rate: Option<f64>,
    pub n_r: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rgt: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliable_precision: Option<f64>,
}

/// Reject a manifest with any violation.
pub fn ensure_valid(manifest: &Manifest) -> Result<()> {
    let report = validate_manifest(manifest);
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(report))
    }
}
