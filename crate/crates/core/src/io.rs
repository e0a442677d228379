//! Line-delimited record files, the probe/probability join, and report emission.
//!
//! Every multi-record file holds one JSON object per line. Blank lines are skipped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::derive::TfItem;
use crate::error::{Error, Result};
use crate::metrics::{JoinedSample, McProbBundle, NbProbBundle, SampleProbs};
use crate::model::{
    validate_manifest, DatasetSummary, DerivedTest, Format, Manifest, McItem, NbUnit, ProbRecord,
    SampleScore, Subtest,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse a line-delimited file into `(line_number, record)` pairs.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Serialize records one per line, each terminated by `\n`.
pub fn render_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize to JSON"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_text(path, &render_jsonl(records))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn warn_if_empty<T>(path: &Path, records: &[T]) {
    if records.is_empty() {
        log::warn!("{} contains no records", path.display());
    }
}

/// Load and validate a manifest. Any invariant violation aborts, located by file line.
pub fn load_manifest(path: &Path, format: Format) -> Result<Manifest> {
    let (lines, manifest) = match format {
        Format::Mc => {
            let rows: Vec<(usize, McItem)> = read_jsonl(path)?;
            let (lines, items) = rows.into_iter().unzip();
            (lines, Manifest::Mc(items))
        }
        Format::Nb => {
            let rows: Vec<(usize, NbUnit)> = read_jsonl(path)?;
            let (lines, units): (Vec<usize>, Vec<NbUnit>) = rows.into_iter().unzip();
            (lines, Manifest::Nb(units))
        }
    };
    let mut report = validate_manifest(&manifest);
    if report.is_empty() {
        if manifest.is_empty() {
            log::warn!("{} contains no records", path.display());
        }
        return Ok(manifest);
    }
    for v in &mut report {
        v.line = v.line.and_then(|idx| lines.get(idx - 1).copied());
    }
    Err(Error::Validation(report))
}

pub fn load_tests(path: &Path) -> Result<Vec<DerivedTest>> {
    let tests: Vec<DerivedTest> = read_jsonl(path)?.into_iter().map(|(_, t)| t).collect();
    warn_if_empty(path, &tests);
    Ok(tests)
}

/// Load probability records, clamping boundary float noise and rejecting real excursions.
pub fn load_probs(path: &Path) -> Result<Vec<ProbRecord>> {
    let rows: Vec<(usize, ProbRecord)> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        let test_id = record.test_id.clone();
        let record = record.clamped().map_err(|value| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("probability {value} outside [0, 1] in record {test_id:?}"),
        })?;
        out.push(record);
    }
    warn_if_empty(path, &out);
    Ok(out)
}

pub fn load_scores(path: &Path) -> Result<Vec<SampleScore>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, s)| s).collect())
}

pub fn load_summaries(path: &Path) -> Result<Vec<DatasetSummary>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, s)| s).collect())
}

pub fn load_tf_pool(path: &Path) -> Result<Vec<TfItem>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, s)| s).collect())
}

/// A sample left out of scoring because some of its probes have no probability record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    pub sample_id: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutcome {
    /// Complete samples, ordered by sample id.
    pub samples: Vec<JoinedSample>,
    /// Incomplete samples, ordered by sample id.
    pub excluded: Vec<Excluded>,
}

/// Attach probability records to their probes and assemble one bundle per complete sample.
///
/// Records must reference known probes with matching sample id and arity; a probe may have
/// at most one record. Samples with any missing probe are excluded rather than scored.
/// Bundles carry no ground truth; see [`attach_gt`].
pub fn join(tests: &[DerivedTest], probs: &[ProbRecord]) -> Result<JoinOutcome> {
    let mut by_id: HashMap<&str, &DerivedTest> = HashMap::with_capacity(tests.len());
    for t in tests {
        if by_id.insert(&t.test_id, t).is_some() {
            return Err(Error::Join(format!("duplicate test_id {:?}", t.test_id)));
        }
    }
    let mut answered: HashMap<&str, &[f64]> = HashMap::with_capacity(probs.len());
    for r in probs {
        let test = by_id
            .get(r.test_id.as_str())
            .ok_or_else(|| Error::Join(format!("unknown test_id {:?}", r.test_id)))?;
        if test.sample_id != r.sample_id {
            return Err(Error::Join(format!(
                "record {:?} names sample {:?} but the test belongs to {:?}",
                r.test_id, r.sample_id, test.sample_id
            )));
        }
        if r.probs.len() != test.arity {
            return Err(Error::Join(format!(
                "arity mismatch for {:?}: expected {}, got {}",
                r.test_id,
                test.arity,
                r.probs.len()
            )));
        }
        if answered.insert(&r.test_id, &r.probs).is_some() {
            return Err(Error::Join(format!("duplicate record for {:?}", r.test_id)));
        }
    }

    let mut per_sample: BTreeMap<&str, Vec<&DerivedTest>> = BTreeMap::new();
    for t in tests {
        per_sample.entry(&t.sample_id).or_default().push(t);
    }

    let mut out = JoinOutcome {
        samples: Vec::new(),
        excluded: Vec::new(),
    };
    for (sample_id, sample_tests) in per_sample {
        let slots: HashMap<Subtest, &DerivedTest> =
            sample_tests.iter().map(|t| (t.subtest, *t)).collect();
        let format = sample_tests[0].subtest.format();
        if sample_tests.iter().any(|t| t.subtest.format() != format) {
            return Err(Error::Join(format!(
                "sample {sample_id:?} mixes probe formats"
            )));
        }
        let lookup = |s: Subtest| -> Option<&[f64]> {
            slots
                .get(&s)
                .and_then(|t| answered.get(t.test_id.as_str()).copied())
        };
        let required: Vec<Subtest> = match format {
            Format::Mc => {
                let k = slots
                    .get(&Subtest::McMain)
                    .map(|t| t.arity)
                    .ok_or_else(|| {
                        Error::Join(format!("sample {sample_id:?} has no mc_main probe"))
                    })?;
                std::iter::once(Subtest::McMain)
                    .chain((0..k).map(Subtest::YnChoice))
                    .collect()
            }
            Format::Nb => crate::derive::NB_SUBTESTS.to_vec(),
        };
        let missing: Vec<String> = required
            .iter()
            .filter(|&&s| lookup(s).is_none())
            .map(|s| s.to_string())
            .collect();
        if !missing.is_empty() {
            out.excluded.push(Excluded {
                sample_id: sample_id.to_string(),
                missing,
            });
            continue;
        }
        let probs = match format {
            Format::Mc => {
                let p_mc = lookup(Subtest::McMain).unwrap().to_vec();
                let p_yn = (0..p_mc.len())
                    .map(|k| lookup(Subtest::YnChoice(k)).unwrap()[0])
                    .collect();
                SampleProbs::Mc(McProbBundle::new(p_mc, p_yn, None)?)
            }
            Format::Nb => {
                let yn = |i, j| lookup(Subtest::NbYn(i, j)).unwrap()[0];
                let pair = |s| {
                    let p = lookup(s).unwrap();
                    [p[0], p[1]]
                };
                SampleProbs::Nb(NbProbBundle::from_presented(
                    [[yn(1, 1), yn(1, 2)], [yn(2, 1), yn(2, 2)]],
                    [
                        pair(Subtest::NbA),
                        pair(Subtest::NbB),
                        pair(Subtest::NbC),
                        pair(Subtest::NbD),
                    ],
                    None,
                )?)
            }
        };
        out.samples.push(JoinedSample {
            sample_id: sample_id.to_string(),
            probs,
        });
    }
    Ok(out)
}

/// Copy ground truth from the manifest onto joined samples.
pub fn attach_gt(samples: &mut [JoinedSample], manifest: &Manifest) -> Result<()> {
    match manifest {
        Manifest::Mc(items) => {
            let gt: HashMap<&str, Option<usize>> =
                items.iter().map(|i| (i.id.as_str(), i.gt_index)).collect();
            for s in samples {
                let SampleProbs::Mc(bundle) = &mut s.probs else {
                    return Err(Error::Join(format!(
                        "sample {:?} is not MC format",
                        s.sample_id
                    )));
                };
                let g = *gt.get(s.sample_id.as_str()).ok_or_else(|| {
                    Error::Join(format!("sample {:?} not in manifest", s.sample_id))
                })?;
                *bundle = bundle.clone().with_gt(g)?;
            }
        }
        Manifest::Nb(units) => {
            let gt: HashMap<&str, _> = units
                .iter()
                .map(|u| (u.id.as_str(), u.gt_pairing))
                .collect();
            for s in samples {
                let SampleProbs::Nb(bundle) = &mut s.probs else {
                    return Err(Error::Join(format!(
                        "sample {:?} is not NB format",
                        s.sample_id
                    )));
                };
                let g = *gt.get(s.sample_id.as_str()).ok_or_else(|| {
                    Error::Join(format!("sample {:?} not in manifest", s.sample_id))
                })?;
                *bundle = bundle.clone().with_gt(g);
            }
        }
    }
    Ok(())
}

pub fn write_scores(path: &Path, scores: &[SampleScore]) -> Result<()> {
    write_jsonl(path, scores)
}

const SUMMARY_HEADER: [&str; 16] = [
    "model",
    "dataset",
    "n",
    "Acc",
    "J-Acc",
    "F1",
    "LCM",
    "LCM_gt",
    "LCM_gt/LCM",
    "abstention",
    "confidence",
    "overconfidence",
    "N_R",
    "N_Rgt",
    "N_Rgt/N_R",
    "format",
];

fn fmt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn summary_cells(s: &DatasetSummary) -> Vec<String> {
    vec![
        s.model.clone(),
        s.dataset.clone(),
        s.n_samples.to_string(),
        fmt4(s.acc),
        fmt4(s.j_acc),
        fmt4(s.f1),
        fmt4(Some(s.lcm)),
        fmt4(s.lcm_gt),
        fmt4(s.ratio_lcm_gt),
        fmt4(s.abstention_rate),
        fmt4(s.confidence_rate),
        fmt4(s.overconfidence_rate),
        s.n_r.to_string(),
        s.n_rgt.map(|n| n.to_string()).unwrap_or_default(),
        fmt4(s.reliable_precision),
        s.format.to_string(),
    ]
}

fn render_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// One row per summary, columns in a fixed order, numbers to 4 decimal places.
pub fn render_summary_csv(summaries: &[DatasetSummary]) -> Result<String> {
    render_csv(&SUMMARY_HEADER, summaries.iter().map(summary_cells))
}

/// The same table as [`render_summary_csv`], space-aligned for terminals. Absent values print `-`.
pub fn render_summary_table(summaries: &[DatasetSummary]) -> String {
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            summary_cells(s)
                .into_iter()
                .map(|c| if c.is_empty() { "-".to_string() } else { c })
                .collect()
        })
        .collect();
    let mut widths: Vec<usize> = SUMMARY_HEADER.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let header: Vec<String> = SUMMARY_HEADER.iter().map(|h| h.to_string()).collect();
    for row in std::iter::once(&header).chain(&rows) {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, &w))| {
                if i < 2 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Model, LCM and response-class rates, sorted by increasing LCM (ties by model name).
pub fn render_distribution(summaries: &[DatasetSummary]) -> Result<String> {
    let mut sorted: Vec<&DatasetSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| a.lcm.total_cmp(&b.lcm).then_with(|| a.model.cmp(&b.model)));
    render_csv(
        &[
            "model",
            "lcm",
            "abstention_rate",
            "confidence_rate",
            "overconfidence_rate",
        ],
        sorted.into_iter().map(|s| {
            vec![
                s.model.clone(),
                fmt4(Some(s.lcm)),
                fmt4(s.abstention_rate),
                fmt4(s.confidence_rate),
                fmt4(s.overconfidence_rate),
            ]
        }),
    )
}

pub fn write_summary(
    csv_path: &Path,
    text_path: &Path,
    summaries: &[DatasetSummary],
) -> Result<()> {
    write_text(csv_path, &render_summary_csv(summaries)?)?;
    write_text(text_path, &render_summary_table(summaries))
}

pub fn write_distribution(path: &Path, summaries: &[DatasetSummary]) -> Result<()> {
    write_text(path, &render_distribution(summaries)?)
}

/// The file set of one scoring run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub manifest_path: PathBuf,
    pub tests_path: PathBuf,
    pub probs_path: PathBuf,
    pub scores_path: PathBuf,
    pub summary_path: PathBuf,
    pub format: Format,
}

impl RunArtifact {
    /// Conventional file names under one directory.
    pub fn in_dir(dir: &Path, format: Format) -> Self {
        RunArtifact {
            manifest_path: dir.join("manifest.jsonl"),
            tests_path: dir.join("tests.jsonl"),
            probs_path: dir.join("probs.jsonl"),
            scores_path: dir.join("scores.jsonl"),
            summary_path: dir.join("summary.jsonl"),
            format,
        }
    }

    pub fn check_distinct(&self) -> Result<()> {
        let paths = [
            &self.manifest_path,
            &self.tests_path,
            &self.probs_path,
            &self.scores_path,
            &self.summary_path,
        ];
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].contains(a) {
                return Err(Error::Join(format!(
                    "run artifact path {} used twice",
                    a.display()
                )));
            }
        }
        Ok(())
    }
}
