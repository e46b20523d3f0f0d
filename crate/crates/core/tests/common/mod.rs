//! Helpers shared by the integration suites: runs of the binary on the
//! fixture corpus, and brute-force metric oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use voiceattr::attribute::AttributeKind;
use voiceattr::metrics::{
    cohen_kappa, fit_isotonic, krippendorff_alpha_interval, micro_f1_multilabel, soft_f1, spearman_rho, weighted_f1,
    WeightMatrix,
};

// ---- binary runs on the fixture corpus ----

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn voiceattr(out: &Path, args: &[&str]) -> Output {
    voiceattr_stdin(out, args, "")
}

pub fn voiceattr_stdin(out: &Path, args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_voiceattr"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

pub fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// ingest → infer → evaluate → baseline under --mock, into `out`.
pub fn mock_pipeline(out: &Path) {
    let f = fixtures();
    let config = f.join("config.toml");
    let gold = f.join("gold.jsonl");
    let common = ["--mock", "--config", path(&config), "--parallel", "2"];
    let run = |args: &[&str]| {
        let mut all: Vec<&str> = common.to_vec();
        all.extend_from_slice(args);
        ok(&voiceattr(out, &all));
    };
    run(&["ingest", "--manifest", path(&f.join("books.jsonl")), "--characters", path(&gold)]);
    let passages = out.join("passages");
    run(&["infer", "--passages", path(&passages), "--characters", path(&gold)]);
    let preds = out.join("predictions.jsonl");
    run(&["evaluate", "--gold", path(&gold), "--predictions", path(&preds), "--predictions-b", path(&preds)]);
    run(&["baseline", "--gold", path(&gold)]);
}

pub const OUTPUTS: [&str; 10] = [
    "passages/harbour.json",
    "passages/lantern.json",
    "passages/index.json",
    "predictions.jsonl",
    "selections.jsonl",
    "repair_stats.tsv",
    "report.json",
    "report.md",
    "paired.csv",
    "baseline_report.json",
];

// ---- metric oracles ----

pub const INSTANCES: usize = 25;
pub const TOL: f64 = 1e-9;

const AGES: [&str; 4] = ["child", "teenager", "adult", "senior"];
const LABELS: [&str; 3] = ["a", "b", "c"];

fn age_weight(g: &str, p: Option<&str>) -> f64 {
    let Some(p) = p else { return 0.0 };
    let gi = AGES.iter().position(|a| *a == g).unwrap() as i32;
    let pi = AGES.iter().position(|a| *a == p).unwrap() as i32;
    match (gi - pi).abs() {
        0 => 1.0,
        1 => 0.8,
        _ => 0.0,
    }
}

fn f1(tp: f64, fp: f64, fnn: f64) -> f64 {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// One-vs-rest F1 per gold class from raw counts, weighted by support.
pub fn oracle_weighted_f1(gold: &[&str], pred: &[Option<&str>]) -> f64 {
    let classes: BTreeSet<&str> = gold.iter().copied().collect();
    let n = gold.len() as f64;
    classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fnn, mut support) = (0.0, 0.0, 0.0, 0.0);
            for (g, p) in gold.iter().zip(pred) {
                let is_g = *g == c;
                let is_p = *p == Some(c);
                support += is_g as u8 as f64;
                match (is_g, is_p) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fnn += 1.0,
                    _ => {}
                }
            }
            f1(tp, fp, fnn) * support / n
        })
        .sum()
}

pub fn oracle_soft_f1(gold: &[&str], pred: &[Option<&str>]) -> f64 {
    gold.iter().zip(pred).map(|(g, p)| age_weight(g, *p)).sum::<f64>() / gold.len() as f64
}

pub fn oracle_micro_f1(gold: &[Vec<String>], pred: &[Vec<String>]) -> f64 {
    let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
    for (g, p) in gold.iter().zip(pred) {
        let g: BTreeSet<String> = g.iter().map(|s| s.to_lowercase()).collect();
        let p: BTreeSet<String> = p.iter().map(|s| s.to_lowercase()).collect();
        tp += g.intersection(&p).count() as f64;
        fp += p.difference(&g).count() as f64;
        fnn += g.difference(&p).count() as f64;
    }
    f1(tp, fp, fnn)
}

/// κ from the contingency table; with weights, κ_w = 1 − Σv·o / Σv·e using
/// disagreement weights v = 1 − w.
pub fn oracle_kappa(a: &[&str], b: &[&str], classes: &[&str], w: impl Fn(&str, &str) -> f64) -> f64 {
    let k = classes.len();
    let n = a.len() as f64;
    let ix = |s: &str| classes.iter().position(|c| *c == s).unwrap();
    let mut table = vec![vec![0.0; k]; k];
    for (x, y) in a.iter().zip(b) {
        table[ix(x)][ix(y)] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let (mut obs, mut exp) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let v = 1.0 - w(classes[i], classes[j]);
            obs += v * table[i][j] / n;
            exp += v * rows[i] * cols[j] / (n * n);
        }
    }
    if exp == 0.0 {
        return 1.0;
    }
    1.0 - obs / exp
}

/// Interval α via the coincidence matrix over distinct values.
pub fn oracle_alpha(grid: &[Vec<Option<f64>>]) -> f64 {
    let units: Vec<Vec<f64>> =
        grid.iter().map(|r| r.iter().flatten().copied().collect::<Vec<_>>()).filter(|u| u.len() >= 2).collect();
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let v = values.len();
    let ix = |x: f64| values.iter().position(|&y| y == x).unwrap();
    let mut o = vec![vec![0.0; v]; v];
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    o[ix(u[i])][ix(u[j])] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let nc: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..v {
        for k in 0..v {
            let d = (values[c] - values[k]).powi(2);
            d_o += o[c][k] * d;
            d_e += nc[c] * nc[k] * d;
        }
    }
    if d_e == 0.0 {
        return 1.0;
    }
    1.0 - (n - 1.0) * d_o / d_e
}

fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&a| {
            let below = x.iter().filter(|&&b| b < a).count() as f64;
            let equal = x.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Least-squares non-decreasing fit by exhaustive search over contiguous
/// partitions (points sorted by distinct x).
pub fn oracle_isotonic(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fitted = Vec::with_capacity(n);
        let mut start = 0;
        let mut ok = true;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let block = &y[start..=i];
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                if mean < prev - 1e-15 {
                    ok = false;
                    break;
                }
                prev = mean;
                fitted.extend(std::iter::repeat_n(mean, block.len()));
                start = i + 1;
            }
        }
        if !ok {
            continue;
        }
        let sse: f64 = fitted.iter().zip(y).map(|(f, v)| (f - v).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-15) {
            best = Some((sse, fitted));
        }
    }
    best.unwrap().1
}

/// Largest absolute deviation per metric over randomized instances of size
/// at most 10.
#[derive(Debug, Default)]
pub struct OracleErrors {
    pub rows: Vec<(&'static str, usize, f64)>,
}

impl OracleErrors {
    fn record(&mut self, name: &'static str, err: f64) {
        match self.rows.iter_mut().find(|r| r.0 == name) {
            Some(r) => {
                r.1 += 1;
                r.2 = r.2.max(err);
            }
            None => self.rows.push((name, 1, err)),
        }
    }

    pub fn worst(&self) -> f64 {
        self.rows.iter().map(|r| r.2).fold(0.0, f64::max)
    }
}

fn pick<'a>(rng: &mut StdRng, from: &[&'a str]) -> &'a str {
    from[rng.random_range(0..from.len())]
}

pub fn run_oracles(seed: u64) -> OracleErrors {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut errs = OracleErrors::default();
    let age_matrix = WeightMatrix::<f64>::age();
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..=10);
        // Closed-class labels, with some missing predictions.
        let gold: Vec<&str> = (0..n).map(|_| pick(&mut rng, &AGES)).collect();
        let pred: Vec<Option<&str>> =
            (0..n).map(|_| if rng.random_bool(0.15) { None } else { Some(pick(&mut rng, &AGES)) }).collect();
        let got = weighted_f1::<f64, _, _>(&gold, &pred).unwrap().value;
        errs.record("weighted F1", (got - oracle_weighted_f1(&gold, &pred)).abs());
        let got = soft_f1(&gold, &pred, &age_matrix).unwrap().value;
        errs.record("soft F1", (got - oracle_soft_f1(&gold, &pred)).abs());

        let sets = |rng: &mut StdRng| -> Vec<String> {
            (0..rng.random_range(0..4)).map(|_| pick(rng, &["English", "french", "French", "German", "Latin"]).to_string()).collect()
        };
        let g: Vec<Vec<String>> = (0..n).map(|_| sets(&mut rng)).collect();
        let p: Vec<Vec<String>> = (0..n).map(|_| sets(&mut rng)).collect();
        let got = micro_f1_multilabel::<f64, _, _>(&g, &p).unwrap().value;
        errs.record("micro F1", (got - oracle_micro_f1(&g, &p)).abs());

        let a: Vec<&str> = (0..n).map(|_| pick(&mut rng, &LABELS)).collect();
        let b: Vec<&str> = (0..n).map(|_| pick(&mut rng, &LABELS)).collect();
        let mut classes: Vec<&str> = a.iter().chain(&b).copied().collect();
        classes.sort();
        classes.dedup();
        let got = cohen_kappa::<f64, _, _>(&a, &b, None).unwrap();
        errs.record("Cohen κ", (got - oracle_kappa(&a, &b, &classes, |x, y| (x == y) as u8 as f64)).abs());

        let a: Vec<&str> = (0..n).map(|_| pick(&mut rng, &AGES)).collect();
        let b: Vec<&str> = (0..n).map(|_| pick(&mut rng, &AGES)).collect();
        let got = cohen_kappa(&a, &b, Some(&age_matrix)).unwrap();
        errs.record("soft Cohen κ", (got - oracle_kappa(&a, &b, &AGES, |x, y| age_weight(x, Some(y)))).abs());

        let scale = [0.0, 0.25, 0.5, 0.75, 1.0];
        let annotators = rng.random_range(2..=3);
        let grid: Vec<Vec<Option<f64>>> = (0..n.max(2))
            .map(|_| {
                (0..annotators)
                    .map(|_| (!rng.random_bool(0.1)).then(|| scale[rng.random_range(0..scale.len())]))
                    .collect()
            })
            .collect();
        if let Ok(got) = krippendorff_alpha_interval(&grid) {
            errs.record("Krippendorff α", (got - oracle_alpha(&grid)).abs());
        }

        let m = n.max(3);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(0..5) as f64).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(0..5) as f64).collect();
        if let Ok(r) = spearman_rho(&x, &y) {
            errs.record("Spearman ρ", (r.rho - oracle_spearman(&x, &y)).abs());
        }

        let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys: Vec<f64> = xs.iter().map(|_| scale[rng.random_range(0..scale.len())]).collect();
        let pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let cal = fit_isotonic(AttributeKind::Origin, &pairs).unwrap();
        let want = oracle_isotonic(&ys);
        let err = xs.iter().zip(&want).map(|(&x, &w)| (cal.eval(x) - w).abs()).fold(0.0, f64::max);
        errs.record("PAVA", err);
    }
    errs
}
