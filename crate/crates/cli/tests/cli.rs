use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lcm_core::io::render_jsonl;
use lcm_core::{GtPairing, McItem, NbUnit};

fn lcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcm"))
        .args(args)
        .output()
        .expect("spawn lcm")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn mc_items(n: usize, k: usize, with_gt: bool) -> Vec<McItem> {
    (0..n)
        .map(|i| McItem {
            id: format!("m{i:03}"),
            image: format!("{i}.png"),
            question: "What colour is the car?".into(),
            choices: (0..k).map(|c| format!("colour {c}")).collect(),
            gt_index: with_gt.then_some((i * 7) % k),
            category: None,
        })
        .collect()
}

fn nb_units(n: usize) -> Vec<NbUnit> {
    (0..n)
        .map(|i| NbUnit {
            id: format!("n{i:03}"),
            images: [format!("{i}a.png"), format!("{i}b.png")],
            texts: ["a dog on grass".into(), "a dog on snow".into()],
            gt_pairing: Some(if i % 2 == 0 {
                GtPairing::Straight
            } else {
                GtPairing::Crossed
            }),
            category: None,
        })
        .collect()
}

fn write<T: serde::Serialize>(dir: &Path, name: &str, rows: &[T]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, render_jsonl(rows)).unwrap();
    path
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn derive_writes_one_line_per_probe() {
    let dir = tempfile::tempdir().unwrap();
    let mc = write(dir.path(), "mc.jsonl", &mc_items(10, 4, true));
    let nb = write(dir.path(), "nb.jsonl", &nb_units(5));
    let out = dir.path().join("t.jsonl");
    assert!(lcm(&[
        "derive",
        "--manifest",
        p(&mc),
        "--format",
        "mc",
        "--out",
        p(&out)
    ])
    .status
    .success());
    assert_eq!(lines(&out), 50);
    assert!(lcm(&[
        "derive",
        "--manifest",
        p(&nb),
        "--format",
        "nb",
        "--out",
        p(&out)
    ])
    .status
    .success());
    assert_eq!(lines(&out), 40);
}

#[test]
fn bad_manifest_is_a_data_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut items = mc_items(4, 3, true);
    items[2].gt_index = Some(5);
    let mc = write(dir.path(), "mc.jsonl", &items);
    let out = lcm(&[
        "derive",
        "--manifest",
        p(&mc),
        "--format",
        "mc",
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("m002"), "{err}");

    std::fs::write(&mc, "{\"id\": \"x\", \"image\": \"i\"}\n").unwrap();
    let out = lcm(&[
        "derive",
        "--manifest",
        p(&mc),
        "--format",
        "mc",
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":1:"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(lcm(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lcm(&["derive", "--format", "xx"]).status.code(), Some(1));
    assert_eq!(
        lcm(&[
            "simulate",
            "--tests",
            "t",
            "--profile",
            "noisy:-2",
            "--out",
            "o"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(lcm(&["--help"]).status.code(), Some(0));
    assert_eq!(lcm(&["--version"]).status.code(), Some(0));
}

#[test]
fn gt_profiles_need_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let mc = write(dir.path(), "mc.jsonl", &mc_items(3, 3, false));
    let tests = dir.path().join("t.jsonl");
    let probs = dir.path().join("p.jsonl");
    assert!(lcm(&[
        "derive",
        "--manifest",
        p(&mc),
        "--format",
        "mc",
        "--out",
        p(&tests)
    ])
    .status
    .success());
    // no manifest at all: a usage problem
    let out = lcm(&[
        "simulate",
        "--tests",
        p(&tests),
        "--profile",
        "perfect",
        "--out",
        p(&probs),
    ]);
    assert_eq!(out.status.code(), Some(1));
    // manifest without gt: a data problem
    let out = lcm(&[
        "simulate",
        "--tests",
        p(&tests),
        "--manifest",
        p(&mc),
        "--profile",
        "shortcut",
        "--out",
        p(&probs),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // gt-free profiles run without it
    let out = lcm(&[
        "simulate",
        "--tests",
        p(&tests),
        "--profile",
        "uniform",
        "--out",
        p(&probs),
    ]);
    assert!(out.status.success());
    assert_eq!(lines(&probs), 12);
}

/// Full run in `dir`; returns the bytes of every output file.
fn full_run(
    dir: &Path,
    manifest: &Path,
    format: &str,
    profile: &str,
    workers: &str,
) -> Vec<Vec<u8>> {
    let f = |n: &str| dir.join(n);
    let ok = |args: &[&str]| {
        let out = lcm(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    ok(&[
        "derive",
        "--manifest",
        p(manifest),
        "--format",
        format,
        "--out",
        p(&f("tests")),
    ]);
    ok(&[
        "simulate",
        "--workers",
        workers,
        "--tests",
        p(&f("tests")),
        "--manifest",
        p(manifest),
        "--profile",
        profile,
        "--seed",
        "42",
        "--out",
        p(&f("probs")),
    ]);
    ok(&[
        "score",
        "--workers",
        workers,
        "--manifest",
        p(manifest),
        "--format",
        format,
        "--tests",
        p(&f("tests")),
        "--probs",
        p(&f("probs")),
        "--out",
        p(&f("scores")),
        "--coverage",
        p(&f("cov")),
    ]);
    ok(&[
        "summarize",
        "--scores",
        p(&f("scores")),
        "--model",
        "m",
        "--dataset",
        "d",
        "--out",
        p(&f("summary")),
        "--csv",
        p(&f("summary.csv")),
        "--txt",
        p(&f("summary.txt")),
    ]);
    [
        "tests",
        "probs",
        "scores",
        "cov",
        "summary",
        "summary.csv",
        "summary.txt",
    ]
    .iter()
    .map(|n| std::fs::read(f(n)).unwrap())
    .collect()
}

#[test]
fn outputs_are_determined_by_inputs_alone() {
    let root = tempfile::tempdir().unwrap();
    let mc = write(root.path(), "mc.jsonl", &mc_items(300, 5, true));
    let nb = write(root.path(), "nb.jsonl", &nb_units(120));
    for (manifest, format, profile) in [
        (&mc, "mc", "noisy:0.3"),
        (&nb, "nb", "shortcut"),
        (&nb, "nb", "overconfident_yes"),
    ] {
        let runs: Vec<_> = ["1", "4", "4"]
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let d = root
                    .path()
                    .join(format!("{format}-{}-{i}", profile.replace(':', "_")));
                std::fs::create_dir(&d).unwrap();
                full_run(&d, manifest, format, profile, w)
            })
            .collect();
        assert_eq!(
            runs[0], runs[1],
            "{format}/{profile}: worker count changed output"
        );
        assert_eq!(runs[1], runs[2], "{format}/{profile}: rerun changed output");
        assert_eq!(runs[0][3], b"", "every probe answered, nothing excluded");
    }
}

#[test]
fn table_and_correlate_over_several_models() {
    let dir = tempfile::tempdir().unwrap();
    let mc = write(dir.path(), "mc.jsonl", &mc_items(200, 4, true));
    let mut summaries = Vec::new();
    for (i, profile) in ["perfect", "noisy:0.2", "noisy:0.5", "shortcut", "uniform"]
        .iter()
        .enumerate()
    {
        let d = dir.path().join(format!("run{i}"));
        std::fs::create_dir(&d).unwrap();
        full_run(&d, &mc, "mc", profile, "2");
        summaries.push(d.join("summary"));
    }
    let mut args = vec!["table", "--summaries"];
    args.extend(summaries.iter().map(|s| p(s)));
    let dist = dir.path().join("dist.csv");
    let csv = dir.path().join("all.csv");
    args.extend(["--distribution", p(&dist), "--csv", p(&csv)]);
    let out = lcm(&args);
    assert!(out.status.success());
    assert_eq!(lines(&csv), 6);
    let dist = std::fs::read_to_string(&dist).unwrap();
    let lcms: Vec<f64> = dist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(lcms.windows(2).all(|w| w[0] <= w[1]), "{dist}");

    // all summaries share the model name "m", which is fine for correlation
    let report = dir.path().join("corr.jsonl");
    let mut args = vec!["correlate", "--out", p(&report), "--summaries"];
    args.extend(summaries.iter().map(|s| p(s)));
    let out = lcm(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(v["n_models"], 5);
    assert_eq!(v["pairs"].as_array().unwrap().len(), 3);

    // fewer than three models is a data error
    let mut args = vec!["correlate", "--out", p(&report), "--summaries"];
    args.extend(summaries[..2].iter().map(|s| p(s)));
    assert_eq!(lcm(&args).status.code(), Some(2));
}

#[test]
fn pair_tf_pool() {
    let dir = tempfile::tempdir().unwrap();
    let pool: Vec<_> = (0..40)
        .map(|i| lcm_core::derive::TfItem {
            id: format!("t{i}"),
            image: format!("{}.png", i % 9),
            question: format!("is it {}?", i % 5),
            gt: i % 4 != 0,
            category: Some(format!("c{}", i % 2)),
        })
        .collect();
    let pool = write(dir.path(), "pool.jsonl", &pool);
    let out = dir.path().join("nb.jsonl");
    let run = lcm(&[
        "pair",
        "--pool",
        p(&pool),
        "--mode",
        "tf_pairs",
        "--pairs-per-category",
        "3",
        "--seed",
        "9",
        "--out",
        p(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(lines(&out), 6);
    // the paired manifest feeds straight into derive
    let tests = dir.path().join("t.jsonl");
    assert!(lcm(&[
        "derive",
        "--manifest",
        p(&out),
        "--format",
        "nb",
        "--out",
        p(&tests)
    ])
    .status
    .success());
    assert_eq!(lines(&tests), 48);

    let run = lcm(&[
        "pair",
        "--pool",
        p(&pool),
        "--mode",
        "tf_pairs",
        "--pairs-per-category",
        "500",
        "--out",
        p(&out),
    ]);
    assert_eq!(run.status.code(), Some(2));
}
