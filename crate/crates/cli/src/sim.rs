//! Synthetic models that answer derived probes with known behaviour.
//!
//! Every sample gets its own RNG, seeded from the run seed and the sample id, so a
//! sample's answers do not depend on which other samples are in the file or on the
//! order in which workers reach it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use lcm_core::derive::keyed_seed;
use lcm_core::metrics::NB_C1_OPTION;
use lcm_core::{par, DerivedTest, Format, GtPairing, Manifest, ProbRecord, Subtest};

/// Probability mass a noisy-but-decided model puts on its chosen option.
const PEAK: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    Perfect,
    Uniform,
    OverconfidentYes,
    Shortcut,
    Noisy(f64),
}

impl ProfileKind {
    pub fn needs_gt(self) -> bool {
        matches!(
            self,
            ProfileKind::Perfect | ProfileKind::Shortcut | ProfileKind::Noisy(_)
        )
    }

    fn default_accuracy(self) -> f64 {
        match self {
            ProfileKind::Shortcut => 0.9,
            _ => 1.0,
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKind::Perfect => f.write_str("perfect"),
            ProfileKind::Uniform => f.write_str("uniform"),
            ProfileKind::OverconfidentYes => f.write_str("overconfident_yes"),
            ProfileKind::Shortcut => f.write_str("shortcut"),
            ProfileKind::Noisy(s) => write!(f, "noisy:{s}"),
        }
    }
}

impl FromStr for ProfileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perfect" => Ok(ProfileKind::Perfect),
            "uniform" => Ok(ProfileKind::Uniform),
            "overconfident_yes" => Ok(ProfileKind::OverconfidentYes),
            "shortcut" => Ok(ProfileKind::Shortcut),
            _ => {
                let sigma = s
                    .strip_prefix("noisy:")
                    .ok_or_else(|| {
                        format!(
                            "unknown profile {s:?} (expected perfect, uniform, overconfident_yes, shortcut or noisy:SIGMA)"
                        )
                    })?
                    .parse::<f64>()
                    .map_err(|e| format!("bad noise level in {s:?}: {e}"))?;
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(format!("noise level must be finite and >= 0, got {sigma}"));
                }
                Ok(ProfileKind::Noisy(sigma))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimProfile {
    pub kind: ProfileKind,
    pub seed: u64,
    accuracy_target: f64,
}

impl SimProfile {
    pub fn new(
        kind: ProfileKind,
        seed: u64,
        accuracy_target: Option<f64>,
    ) -> Result<Self, SimError> {
        let accuracy_target = accuracy_target.unwrap_or(kind.default_accuracy());
        if !(0.0..=1.0).contains(&accuracy_target) {
            return Err(SimError::AccuracyTarget(accuracy_target));
        }
        Ok(SimProfile {
            kind,
            seed,
            accuracy_target,
        })
    }

    pub fn accuracy_target(&self) -> f64 {
        self.accuracy_target
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("accuracy target must lie in [0, 1], got {0}")]
    AccuracyTarget(f64),
    #[error("profile {profile} needs ground truth, but sample {sample_id:?} has none")]
    MissingGroundTruth {
        profile: ProfileKind,
        sample_id: String,
    },
    #[error("sample {0:?} is not in the manifest")]
    UnknownSample(String),
    #[error("sample {sample_id:?}: tests are {tests} format but the manifest is {manifest}")]
    FormatMismatch {
        sample_id: String,
        tests: Format,
        manifest: Format,
    },
    #[error("sample {0:?} has no mc_main probe, so its choice count is unknown")]
    NoChoiceCount(String),
}

/// Ground truth per sample id, as far as the manifest provides it.
enum Truth {
    Mc(Option<usize>),
    Nb(Option<GtPairing>),
}

fn truth_table(manifest: &Manifest) -> HashMap<&str, Truth> {
    match manifest {
        Manifest::Mc(items) => items
            .iter()
            .map(|i| (i.id.as_str(), Truth::Mc(i.gt_index)))
            .collect(),
        Manifest::Nb(units) => units
            .iter()
            .map(|u| (u.id.as_str(), Truth::Nb(u.gt_pairing)))
            .collect(),
    }
}

/// Answer every test. Records come out in the order of `tests`.
pub fn simulate(
    tests: &[DerivedTest],
    manifest: Option<&Manifest>,
    profile: &SimProfile,
) -> Result<Vec<ProbRecord>, SimError> {
    let truths = manifest.map(truth_table);
    let mut per_sample: BTreeMap<&str, Vec<&DerivedTest>> = BTreeMap::new();
    for t in tests {
        per_sample.entry(&t.sample_id).or_default().push(t);
    }
    let groups: Vec<(&str, Vec<&DerivedTest>)> = per_sample.into_iter().collect();

    let answered = par::map(&groups, |(sample_id, sample_tests)| {
        answer_sample(sample_id, sample_tests, truths.as_ref(), profile)
    });
    let mut by_test: HashMap<String, Vec<f64>> = HashMap::with_capacity(tests.len());
    for group in answered {
        by_test.extend(group?);
    }

    let meta: BTreeMap<String, String> = [
        ("simulator".to_string(), profile.kind.to_string()),
        ("seed".to_string(), profile.seed.to_string()),
    ]
    .into();
    Ok(tests
        .iter()
        .map(|t| ProbRecord {
            test_id: t.test_id.clone(),
            sample_id: t.sample_id.clone(),
            probs: by_test.remove(&t.test_id).unwrap_or_default(),
            meta: Some(meta.clone()),
        })
        .collect())
}

fn answer_sample(
    sample_id: &str,
    tests: &[&DerivedTest],
    truths: Option<&HashMap<&str, Truth>>,
    profile: &SimProfile,
) -> Result<Vec<(String, Vec<f64>)>, SimError> {
    let format = tests[0].subtest.format();
    let truth = match truths {
        Some(t) => Some(
            t.get(sample_id)
                .ok_or_else(|| SimError::UnknownSample(sample_id.to_string()))?,
        ),
        None => None,
    };
    let missing_gt = || SimError::MissingGroundTruth {
        profile: profile.kind,
        sample_id: sample_id.to_string(),
    };
    let mismatch = |manifest| SimError::FormatMismatch {
        sample_id: sample_id.to_string(),
        tests: format,
        manifest,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(keyed_seed(profile.seed, sample_id));

    match format {
        Format::Mc => {
            let gt = match truth {
                Some(Truth::Mc(g)) => *g,
                Some(Truth::Nb(_)) => return Err(mismatch(Format::Nb)),
                None => None,
            };
            if profile.kind.needs_gt() && gt.is_none() {
                return Err(missing_gt());
            }
            let k = tests
                .iter()
                .find(|t| t.subtest == Subtest::McMain)
                .map(|t| t.arity)
                .ok_or_else(|| SimError::NoChoiceCount(sample_id.to_string()))?;
            let (mc, yn) = mc_answers(k, gt, profile, &mut rng);
            Ok(tests
                .iter()
                .map(|t| {
                    let probs = match t.subtest {
                        Subtest::YnChoice(i) => vec![yn.get(i).copied().unwrap_or(0.5)],
                        _ => mc.clone(),
                    };
                    (t.test_id.clone(), probs)
                })
                .collect())
        }
        Format::Nb => {
            let gt = match truth {
                Some(Truth::Nb(g)) => *g,
                Some(Truth::Mc(_)) => return Err(mismatch(Format::Mc)),
                None => None,
            };
            if profile.kind.needs_gt() && gt.is_none() {
                return Err(missing_gt());
            }
            let (yn, mc) = nb_answers(gt, profile, &mut rng);
            Ok(tests
                .iter()
                .map(|t| {
                    let probs = match t.subtest {
                        Subtest::NbYn(i, j) => vec![yn[usize::from(i - 1)][usize::from(j - 1)]],
                        Subtest::NbA => mc[0].to_vec(),
                        Subtest::NbB => mc[1].to_vec(),
                        Subtest::NbC => mc[2].to_vec(),
                        _ => mc[3].to_vec(),
                    };
                    (t.test_id.clone(), probs)
                })
                .collect())
        }
    }
}

/// The answer the model commits to: the truth with probability `accuracy`, otherwise a
/// uniformly drawn wrong option.
fn intended<R: Rng>(gt: usize, k: usize, accuracy: f64, rng: &mut R) -> usize {
    if rng.random_bool(accuracy) {
        gt
    } else {
        let wrong: Vec<usize> = (0..k).filter(|&i| i != gt).collect();
        *wrong.choose(rng).unwrap_or(&gt)
    }
}

fn one_hot(k: usize, at: usize) -> Vec<f64> {
    (0..k).map(|i| if i == at { 1.0 } else { 0.0 }).collect()
}

fn peaked(k: usize, at: usize) -> Vec<f64> {
    let rest = (1.0 - PEAK) / (k - 1) as f64;
    (0..k).map(|i| if i == at { PEAK } else { rest }).collect()
}

fn jitter<R: Rng>(v: &mut [f64], noise: &Normal<f64>, rng: &mut R) {
    for p in v.iter_mut() {
        *p = (*p + noise.sample(rng)).clamp(0.0, 1.0);
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|p| *p /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|p| *p = u);
    }
}

fn noise_of(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated at parse time")
}

fn mc_answers<R: Rng>(
    k: usize,
    gt: Option<usize>,
    profile: &SimProfile,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let acc = profile.accuracy_target;
    match profile.kind {
        ProfileKind::Perfect => {
            let g = gt.unwrap_or(0);
            (one_hot(k, g), one_hot(k, g))
        }
        ProfileKind::Uniform => (vec![1.0 / k as f64; k], vec![0.5; k]),
        ProfileKind::OverconfidentYes => {
            let a = rng.random_range(0..k);
            (peaked(k, a), vec![1.0; k])
        }
        ProfileKind::Shortcut => {
            let a = intended(gt.unwrap_or(0), k, acc, rng);
            let yn = (0..k).map(|_| rng.random::<f64>()).collect();
            (peaked(k, a), yn)
        }
        ProfileKind::Noisy(sigma) => {
            let a = intended(gt.unwrap_or(0), k, acc, rng);
            let noise = noise_of(sigma);
            let mut mc = one_hot(k, a);
            let mut yn = one_hot(k, a);
            jitter(&mut mc, &noise, rng);
            normalize(&mut mc);
            jitter(&mut yn, &noise, rng);
            (mc, yn)
        }
    }
}

/// Presented-order MC answer for subtest `s` given pairing-space probabilities.
fn present(s: usize, c_space: [f64; 2]) -> [f64; 2] {
    if NB_C1_OPTION[s] == 0 {
        c_space
    } else {
        [c_space[1], c_space[0]]
    }
}

fn pairing_of(choice: usize) -> GtPairing {
    if choice == 0 {
        GtPairing::Straight
    } else {
        GtPairing::Crossed
    }
}

fn yn_for(pairing: GtPairing) -> [[f64; 2]; 2] {
    let p = |i, j| if pairing.expects_yes(i, j) { 1.0 } else { 0.0 };
    [[p(1, 1), p(1, 2)], [p(2, 1), p(2, 2)]]
}

fn nb_answers<R: Rng>(
    gt: Option<GtPairing>,
    profile: &SimProfile,
    rng: &mut R,
) -> ([[f64; 2]; 2], [[f64; 2]; 4]) {
    let acc = profile.accuracy_target;
    let g = gt.map_or(0, GtPairing::choice);
    let decided = |l: usize, mass: f64| {
        if l == 0 {
            [mass, 1.0 - mass]
        } else {
            [1.0 - mass, mass]
        }
    };
    match profile.kind {
        ProfileKind::Perfect => {
            let mc = std::array::from_fn(|s| present(s, decided(g, 1.0)));
            (yn_for(pairing_of(g)), mc)
        }
        ProfileKind::Uniform => ([[0.5; 2]; 2], [[0.5; 2]; 4]),
        ProfileKind::OverconfidentYes => {
            let mc = std::array::from_fn(|s| present(s, decided(rng.random_range(0..2), PEAK)));
            ([[1.0; 2]; 2], mc)
        }
        ProfileKind::Shortcut => {
            let mc = std::array::from_fn(|s| present(s, decided(intended(g, 2, acc, rng), PEAK)));
            let yn = std::array::from_fn(|_| std::array::from_fn(|_| rng.random::<f64>()));
            (yn, mc)
        }
        ProfileKind::Noisy(sigma) => {
            let l = intended(g, 2, acc, rng);
            let noise = noise_of(sigma);
            let mut yn = yn_for(pairing_of(l));
            for row in yn.iter_mut() {
                jitter(row, &noise, rng);
            }
            let mc = std::array::from_fn(|s| {
                let mut pair = decided(l, 1.0);
                jitter(&mut pair, &noise, rng);
                normalize(&mut pair);
                present(s, pair)
            });
            (yn, mc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lcm_core::derive::derive_manifest;
    use lcm_core::model::{McItem, NbUnit};

    fn mc_manifest(gt: Option<usize>) -> Manifest {
        Manifest::Mc(
            (0..6)
                .map(|i| McItem {
                    id: format!("s{i}"),
                    image: format!("i{i}"),
                    question: "q".into(),
                    choices: vec!["a".into(), "b".into(), "c".into(), "d".into()],
                    gt_index: gt,
                    category: None,
                })
                .collect(),
        )
    }

    #[test]
    fn parses_profiles() {
        assert_eq!(
            "perfect".parse::<ProfileKind>().unwrap(),
            ProfileKind::Perfect
        );
        assert_eq!(
            "noisy:0.25".parse::<ProfileKind>().unwrap(),
            ProfileKind::Noisy(0.25)
        );
        assert!("noisy:-1".parse::<ProfileKind>().is_err());
        assert!("noisy".parse::<ProfileKind>().is_err());
        assert!("loud".parse::<ProfileKind>().is_err());
        assert_eq!(ProfileKind::Noisy(0.5).to_string(), "noisy:0.5");
    }

    #[test]
    fn accuracy_target_is_checked() {
        assert!(SimProfile::new(ProfileKind::Shortcut, 0, Some(1.5)).is_err());
        let p = SimProfile::new(ProfileKind::Shortcut, 0, None).unwrap();
        assert_eq!(p.accuracy_target(), 0.9);
    }

    #[test]
    fn gt_free_manifest_rejected_for_perfect() {
        let m = mc_manifest(None);
        let tests = derive_manifest(&m).unwrap();
        let p = SimProfile::new(ProfileKind::Perfect, 0, None).unwrap();
        assert!(matches!(
            simulate(&tests, Some(&m), &p),
            Err(SimError::MissingGroundTruth { .. })
        ));
        let u = SimProfile::new(ProfileKind::Uniform, 0, None).unwrap();
        assert_eq!(simulate(&tests, Some(&m), &u).unwrap().len(), tests.len());
        assert_eq!(simulate(&tests, None, &u).unwrap().len(), tests.len());
    }

    #[test]
    fn records_follow_test_order_and_arity() {
        let m = mc_manifest(Some(2));
        let tests = derive_manifest(&m).unwrap();
        let p = SimProfile::new(ProfileKind::Noisy(0.2), 7, Some(0.8)).unwrap();
        let recs = simulate(&tests, Some(&m), &p).unwrap();
        for (t, r) in tests.iter().zip(&recs) {
            assert_eq!(t.test_id, r.test_id);
            assert_eq!(t.arity, r.probs.len());
            assert!(r.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        assert_eq!(recs, simulate(&tests, Some(&m), &p).unwrap());
    }

    #[test]
    fn sample_answers_do_not_depend_on_other_samples() {
        let m = mc_manifest(Some(1));
        let tests = derive_manifest(&m).unwrap();
        let p = SimProfile::new(ProfileKind::Shortcut, 3, None).unwrap();
        let all = simulate(&tests, Some(&m), &p).unwrap();
        let only_last: Vec<_> = tests
            .iter()
            .filter(|t| t.sample_id == "s5")
            .cloned()
            .collect();
        let alone = simulate(&only_last, Some(&m), &p).unwrap();
        let from_all: Vec<_> = all.into_iter().filter(|r| r.sample_id == "s5").collect();
        assert_eq!(alone, from_all);
    }

    #[test]
    fn perfect_nb_matches_pairing() {
        let m = Manifest::Nb(vec![NbUnit {
            id: "u".into(),
            images: ["a".into(), "b".into()],
            texts: ["x".into(), "y".into()],
            gt_pairing: Some(GtPairing::Crossed),
            category: None,
        }]);
        let tests = derive_manifest(&m).unwrap();
        let p = SimProfile::new(ProfileKind::Perfect, 0, None).unwrap();
        let recs = simulate(&tests, Some(&m), &p).unwrap();
        let get = |s: &str| {
            recs.iter()
                .find(|r| r.test_id == format!("u#{s}"))
                .unwrap()
                .probs
                .clone()
        };
        assert_eq!(get("nb_yn:1:2"), vec![1.0]);
        assert_eq!(get("nb_yn:1:1"), vec![0.0]);
        // crossed: V1 goes with T2, listed second in subtest a
        assert_eq!(get("nb_a"), vec![0.0, 1.0]);
        // subtest b lists T1 first; V2 goes with T1 when crossed
        assert_eq!(get("nb_b"), vec![1.0, 0.0]);
    }
}
