use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ssmix(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmix"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = ssmix(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen_small(cwd: &Path, classes: &str, n_train: &str) {
    ok(
        &["gen", "--out", "data", "--classes", classes, "--n-train", n_train, "--n-valid", "60"],
        cwd,
    );
}

const TINY: [&str; 8] = ["--preset", "desk", "--dim", "8", "--hidden", "8", "--epochs2", "1"];

fn train_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["train", "--train", "data/train.tsv", "--valid", "data/valid.tsv", "--out", out];
    args.extend(TINY);
    args.extend(extra);
    args
}

fn manifest(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(ssmix(&["train", "--bogus"], d).status.code(), Some(1));
    assert_eq!(ssmix(&["--help"], d).status.code(), Some(0));
    assert_eq!(ssmix(&["--version"], d).status.code(), Some(0));

    let missing = ssmix(&["train", "--train", "nope.tsv", "--valid", "nope.tsv", "--out", "r"], d);
    assert_eq!(missing.status.code(), Some(2));
    let stderr = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    gen_small(d, "2", "100");
    assert_eq!(ssmix(&["gen", "--out", "data"], d).status.code(), Some(1));
    assert_eq!(ssmix(&["train", "--out", "r"], d).status.code(), Some(1), "no data files");
    let odd = train_args("r", &["--batch-size", "7"]);
    assert_eq!(ssmix(&odd, d).status.code(), Some(1));
    let short = train_args("r", &["--max-len", "2"]);
    assert_eq!(ssmix(&short, d).status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(&["train", "--help"], dir.path());
    for needle in ["[default: 0.1]", "[default: 32]", "[default: ssmix]", "[default: epoch]", "[default: finetune]"] {
        assert!(help.contains(needle), "missing {needle}");
    }
}

#[test]
fn gen_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--out", "t", "--n-train", "50", "--n-valid", "10"], d);
    assert_eq!(fs::read_to_string(d.join("t/train.tsv")).unwrap().lines().count(), 50, "no header row");
    assert!(d.join("t/labels.tsv").exists());

    ok(
        &["gen", "--out", "j", "--task", "paired", "--format", "jsonl", "--n-train", "20", "--n-valid", "5"],
        d,
    );
    let first = fs::read_to_string(d.join("j/train.jsonl")).unwrap();
    assert_eq!(first.lines().count(), 20);
    assert!(first.lines().next().unwrap().starts_with('{'));

    // Same seed, same bytes.
    ok(&["gen", "--out", "t2", "--n-train", "50", "--n-valid", "10"], d);
    assert_eq!(fs::read(d.join("t/train.tsv")).unwrap(), fs::read(d.join("t2/train.tsv")).unwrap());
}

#[test]
fn train_then_eval_reproduces_best_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "3", "300");
    let stdout = ok(&train_args("run", &[]), d);
    let best = stdout.lines().find_map(|l| l.strip_prefix("best_accuracy=")).unwrap();
    for f in ["metrics.csv", "best.ckpt", "vocab.txt", "labels.tsv", "manifest.txt"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let eval = ok(&["eval", "--run", "run", "--data", "data/valid.tsv"], d);
    assert!(eval.starts_with(&format!("accuracy={best} ")), "{eval} vs {best}");

    // The best metrics row carries the same accuracy.
    let metrics = fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    let max = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
        .fold(f64::MIN, f64::max);
    assert_eq!(max, best.parse::<f64>().unwrap());

    // A rerun into the same directory needs --force and then matches.
    assert_eq!(ssmix(&train_args("run", &[]), d).status.code(), Some(1));
    ok(&train_args("run", &["--force"]), d);
    assert_eq!(metrics, fs::read_to_string(d.join("run/metrics.csv")).unwrap());
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "2", "100");
    fs::write(
        d.join("cfg.txt"),
        "train=data/train.tsv\nvalid=data/valid.tsv\npreset=desk\ndim=4\nhidden=4\nepochs2=1\nlambda0=0.3\nseed=9\n",
    )
    .unwrap();
    ok(&["train", "--config", "cfg.txt", "--out", "r", "--lambda0", "0.2"], d);
    let m = manifest(&d.join("r/manifest.txt"));
    assert_eq!(m["lambda0"], "0.2", "flag beats manifest");
    assert_eq!(m["seed"], "9", "manifest beats default");
    assert_eq!(m["dim"], "4");
    assert_eq!(m["lr1"], "0.01", "preset from manifest");

    // A written manifest reproduces its run.
    ok(&["train", "--config", "r/manifest.txt", "--out", "r2"], d);
    assert_eq!(
        fs::read(d.join("r/metrics.csv")).unwrap(),
        fs::read(d.join("r2/metrics.csv")).unwrap()
    );
}

#[test]
fn mix_and_saliency_from_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "2", "200");
    ok(&train_args("run", &[]), d);
    let labels = fs::read_to_string(d.join("run/labels.tsv")).unwrap();
    let names: Vec<&str> = labels.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let train = fs::read_to_string(d.join("data/train.tsv")).unwrap();
    let texts: Vec<&str> = train.lines().skip(1).take(2).map(|l| l.split('\t').next().unwrap()).collect();

    for variant in ["ssmix", "random_span", "random_token", "unk_replace"] {
        let out = ok(
            &[
                "mix", "--run", "run", "--a", texts[0], "--b", texts[1], "--label-a", names[0], "--label-b",
                names[1], "--lambda0", "0.3", "--variant", variant,
            ],
            d,
        );
        let rows: Vec<&str> = out.lines().collect();
        assert_eq!(rows.len(), 2, "{variant}: {out}");
        let cols: Vec<&str> = rows[1].split('\t').collect();
        assert_eq!(cols.len(), 8);
        let lambda: f64 = cols[2].parse().unwrap();
        if variant == "unk_replace" {
            assert_eq!(lambda, 0.0);
            assert!(cols[1].contains("[UNK]"));
        } else {
            assert!(lambda > 0.0 && lambda < 1.0);
        }
    }
    let interp = ssmix(
        &["mix", "--run", "run", "--a", "x", "--b", "y", "--label-a", names[0], "--label-b", names[1], "--variant", "embedmix"],
        d,
    );
    assert_eq!(interp.status.code(), Some(1));

    let out = ok(&["saliency", "--run", "run", "--text", texts[0], "--label", names[0]], d);
    let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.first().unwrap()[2], "[CLS]");
    assert_eq!(rows.last().unwrap()[2], "[SEP]");
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn random_mix_without_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &["mix", "--a", "a b c d e f g h i j", "--b", "k l m n", "--label-a", "0", "--label-b", "1", "--lambda0", "0.2", "--variant", "random_span"],
        dir.path(),
    );
    let cols: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(cols[1].split(' ').count(), 10);
    assert_eq!(cols[2], "0.2");
    let ssmix_needs_model = ssmix(
        &["mix", "--a", "a b", "--b", "c d", "--label-a", "0", "--label-b", "1"],
        dir.path(),
    );
    assert_eq!(ssmix_needs_model.status.code(), Some(1));
}

#[test]
fn sweep_summary_is_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen_small(d, "2", "60");
    let mut args = vec!["sweep", "--train", "data/train.tsv", "--valid", "data/valid.tsv", "--out", "sw"];
    args.extend(TINY);
    args.extend(["--epochs1", "1", "--batch-size", "16"]);
    let stdout = ok(&args, d);
    assert_eq!(stdout.lines().count(), 8);

    let runs = fs::read_to_string(d.join("sw/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 35);
    let summary = fs::read_to_string(d.join("sw/summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (variant, n, mean, std) = (cols[0], cols[1], cols[2].parse::<f64>().unwrap(), cols[3].parse::<f64>().unwrap());
        assert_eq!(n, "5");
        // Best accuracy per seed straight from the per-variant metrics.
        let csv = fs::read_to_string(d.join(format!("sw/{variant}.csv"))).unwrap();
        let mut best: BTreeMap<u64, f64> = BTreeMap::new();
        for row in csv.lines().skip(1) {
            let c: Vec<&str> = row.split(',').collect();
            let acc: f64 = c[4].parse().unwrap();
            let e = best.entry(c[0].parse().unwrap()).or_insert(f64::MIN);
            *e = e.max(acc);
        }
        assert_eq!(best.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        let xs: Vec<f64> = best.into_values().collect();
        let m = xs.iter().sum::<f64>() / 5.0;
        let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((m - mean).abs() < 1e-12, "{variant}: mean {m} vs {mean}");
        assert!((s - std).abs() < 1e-12, "{variant}: std {s} vs {std}");
    }
    let m = manifest(&d.join("sw/manifest.txt"));
    assert_eq!(m["seeds"], "0..4");
    assert!(!m.contains_key("variant"));
}
