//! Subcommand bodies. Each reads its inputs from files and writes its outputs to files;
//! nothing is carried between commands in memory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;

use lcm_core::analysis::{correlate_models, CorrelationReport};
use lcm_core::derive::{
    derive_manifest, pair_natconbench_mc, pair_natconbench_tf, PairingConfig, PairingMode,
};
use lcm_core::io::{
    self, attach_gt, join, load_manifest, load_probs, load_scores, load_summaries, load_tests,
};
use lcm_core::metrics::{aggregate, score_all, JaccScale, ScoringConfig};
use lcm_core::{DatasetSummary, Format, Manifest};

use crate::sim::{self, ProfileKind, SimProfile};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
}

/// Map an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<CliError>() {
            return EXIT_USAGE;
        }
        if cause.is::<lcm_core::Error>()
            || cause.is::<lcm_core::CorrelationError>()
            || cause.is::<lcm_core::MetricError>()
            || cause.is::<sim::SimError>()
            || cause.is::<std::io::Error>()
        {
            return EXIT_DATA;
        }
    }
    EXIT_INTERNAL
}

pub fn scoring_config(threshold: f64, nb_jacc_scale: JaccScale) -> anyhow::Result<ScoringConfig> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(
            CliError::Usage(format!("--threshold must lie in [0, 1], got {threshold}")).into(),
        );
    }
    Ok(ScoringConfig {
        threshold,
        nb_jacc_scale,
    })
}

pub fn derive(manifest: &Path, format: Format, out: &Path) -> anyhow::Result<()> {
    let manifest = load_manifest(manifest, format)?;
    let tests = derive_manifest(&manifest)?;
    io::write_jsonl(out, &tests)?;
    log::info!("{} samples -> {} tests", manifest.len(), tests.len());
    Ok(())
}

pub struct SimulateArgs<'a> {
    pub tests: &'a Path,
    pub manifest: Option<&'a Path>,
    pub profile: ProfileKind,
    pub seed: u64,
    pub accuracy_target: Option<f64>,
    pub out: &'a Path,
}

pub fn simulate(args: SimulateArgs<'_>) -> anyhow::Result<()> {
    let profile = SimProfile::new(args.profile, args.seed, args.accuracy_target)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if profile.kind.needs_gt() && args.manifest.is_none() {
        return Err(CliError::Usage(format!(
            "profile {} needs ground truth; pass --manifest",
            profile.kind
        ))
        .into());
    }
    let tests = load_tests(args.tests)?;
    let manifest = match (args.manifest, tests.first()) {
        (Some(path), Some(first)) => Some(load_manifest(path, first.subtest.format())?),
        _ => None,
    };
    let records = sim::simulate(&tests, manifest.as_ref(), &profile)?;
    io::write_jsonl(args.out, &records)?;
    log::info!(
        "profile {} (accuracy target {}) answered {} tests",
        profile.kind,
        profile.accuracy_target(),
        records.len()
    );
    Ok(())
}

pub fn score(
    manifest: &Path,
    format: Format,
    tests: &Path,
    probs: &Path,
    out: &Path,
    coverage: Option<&Path>,
    cfg: &ScoringConfig,
) -> anyhow::Result<()> {
    let manifest = load_manifest(manifest, format)?;
    let tests = load_tests(tests)?;
    let probs = load_probs(probs)?;
    let mut joined = join(&tests, &probs)?;
    attach_gt(&mut joined.samples, &manifest)?;
    if !joined.excluded.is_empty() {
        log::warn!(
            "{} of {} samples excluded for missing probes",
            joined.excluded.len(),
            joined.excluded.len() + joined.samples.len()
        );
    }
    if let Some(path) = coverage {
        io::write_jsonl(path, &joined.excluded)?;
    }
    let scores = score_all(&joined.samples, cfg);
    io::write_scores(out, &scores)?;
    log::info!("scored {} samples", scores.len());
    Ok(())
}

pub fn summarize(
    scores: &Path,
    model: &str,
    dataset: &str,
    out: &Path,
    csv: Option<&Path>,
    txt: Option<&Path>,
) -> anyhow::Result<()> {
    let scores = load_scores(scores)?;
    let summary = aggregate(&scores, model, dataset)?;
    let rows = std::slice::from_ref(&summary);
    io::write_jsonl(out, rows)?;
    if let Some(path) = csv {
        io::write_text(path, &io::render_summary_csv(rows)?)?;
    }
    if let Some(path) = txt {
        io::write_text(path, &io::render_summary_table(rows))?;
    }
    print!("{}", io::render_summary_table(rows));
    Ok(())
}

fn load_all_summaries(paths: &[impl AsRef<Path>]) -> anyhow::Result<Vec<DatasetSummary>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_summaries(p.as_ref())?);
    }
    if all.is_empty() {
        return Err(lcm_core::Error::Aggregate("no summary rows in the given files".into()).into());
    }
    Ok(all)
}

pub fn table(
    summaries: &[impl AsRef<Path>],
    csv: Option<&Path>,
    txt: Option<&Path>,
    distribution: Option<&Path>,
) -> anyhow::Result<()> {
    let rows = load_all_summaries(summaries)?;
    if let Some(path) = csv {
        io::write_text(path, &io::render_summary_csv(&rows)?)?;
    }
    if let Some(path) = txt {
        io::write_text(path, &io::render_summary_table(&rows))?;
    }
    if let Some(path) = distribution {
        io::write_distribution(path, &rows)?;
    }
    print!("{}", io::render_summary_table(&rows));
    Ok(())
}

pub fn pair(pool: &Path, cfg: &PairingConfig, out: &Path) -> anyhow::Result<()> {
    let units = match cfg.mode {
        PairingMode::McPairs => match load_manifest(pool, Format::Mc)? {
            Manifest::Mc(items) => pair_natconbench_mc(&items, cfg)?,
            Manifest::Nb(_) => unreachable!("loaded as MC"),
        },
        PairingMode::TfPairs => pair_natconbench_tf(&io::load_tf_pool(pool)?, cfg)?,
    };
    io::write_jsonl(out, &units)?;
    log::info!("{} paired units", units.len());
    Ok(())
}

fn render_correlations(reports: &[CorrelationReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!("{} (n = {})\n", r.dataset, r.n_models));
        out.push_str(&format!(
            "  {:<6} {:>10} {:>10} {:>10}\n",
            "metric", "pearson", "spearman", "kendall"
        ));
        for p in &r.pairs {
            let name = serde_json::to_value(p.metric)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            out.push_str(&format!(
                "  {:<6} {:>10} {:>10} {:>10}\n",
                name,
                fmt(p.pearson_r),
                fmt(p.spearman_rho),
                fmt(p.kendall_tau)
            ));
        }
    }
    out
}

pub fn correlate(summaries: &[impl AsRef<Path>], out: &Path) -> anyhow::Result<()> {
    let rows = load_all_summaries(summaries)?;
    let mut by_dataset: BTreeMap<&str, Vec<DatasetSummary>> = BTreeMap::new();
    for r in &rows {
        by_dataset.entry(&r.dataset).or_default().push(r.clone());
    }
    let mut reports = Vec::with_capacity(by_dataset.len());
    for (dataset, group) in by_dataset {
        let report = correlate_models(&group).with_context(|| format!("dataset {dataset:?}"))?;
        reports.push(report);
    }
    io::write_jsonl(out, &reports)?;
    print!("{}", render_correlations(&reports));
    Ok(())
}
