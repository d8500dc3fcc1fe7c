//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use tempfile::TempDir;

use jointdx::cli::{all_instances, run};
use jointdx::config::RunConfig;
use jointdx::corpus::load_jsonl;
use jointdx::model_io::{load_model, save_model};
use jointdx_core::data::{make_splits, Instance, Partition};
use jointdx_core::decoder::{score_joint, TuckerParams, N_CLASSES, N_PAIRS};
use jointdx_core::metrics::{coverage_error, ndcg_at_k, rank_precision, ScoredInstance};
use jointdx_core::seeded_rng;
use jointdx_core::stats::{chi2_sf, chi_squared_test, g_test, ContingencyTable};
use jointdx_core::tensor::{contract_tucker, mode1_unfold, outer_product, sigmoid, vec_colstack, Tensor3};
use jointdx_core::trainer::{mean_loss, train, ModelDims, ModelKind, ModelParams, TrainConfig};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["jointdx"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Generates `name` in `dir` once; later criteria reuse the file.
fn corpus_file(dir: &Path, name: &str, patients: &str, coupling: &str, seed: &str) -> Result<PathBuf, String> {
    let path = dir.join(name);
    if !path.exists() {
        let (code, out, err) = cli(&["gen-data", "--patients", patients, "--coupling", coupling, "--seed", seed, "--out", p(&path)]);
        ensure(code == 0, || format!("gen-data exit {code}: {err}{out}"))?;
    }
    Ok(path)
}

fn coupled_corpus(dir: &Path) -> Result<PathBuf, String> {
    corpus_file(dir, "coupled.jsonl", "2000", "0.9", "0")
}

fn small_corpus(dir: &Path) -> Result<PathBuf, String> {
    corpus_file(dir, "small.jsonl", "150", "0.9", "7")
}

// 1. Gradient correctness through the command line.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (code, out, err) = cli(&["gradcheck", "--seed", "0"]);
    let elapsed = start.elapsed();
    ensure(code == 0, || format!("exit {code}\n{out}{err}"))?;
    for name in ["tensor", "marginal", "empty-history"] {
        let line = out
            .lines()
            .find(|l| l.starts_with(&format!("{name}:")))
            .ok_or(format!("no line for {name}"))?;
        ensure(line.ends_with(" ok"), || line.to_string())?;
    }
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    let (bad, _, _) = cli(&["gradcheck", "--corrupt"]);
    ensure(bad == 1, || format!("corrupted check exited {bad}"))?;
    let worst = out
        .lines()
        .filter_map(|l| l.split("max_rel_error=").nth(1))
        .filter_map(|s| s.split_whitespace().next()?.parse::<f64>().ok())
        .fold(0.0, f64::max);
    Ok(format!("max rel error {worst:.2e} in {elapsed:.2?}; corrupted run exits 1"))
}

// 2. Tucker contraction against the unfolded matrix form and brute force.
fn tucker_identity() -> Outcome {
    let mut rng = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (d1, d2, d3) = (rng.random_range(1..9), rng.random_range(1..6), rng.random_range(1..6));
        let g = Tensor3::from_fn(d1, d2, d3, |_, _, _| rng.random_range(-1.0..1.0));
        let vec_of = |n: usize, rng: &mut jointdx_core::Rng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let (a, b, c) = (vec_of(d1, &mut rng), vec_of(d2, &mut rng), vec_of(d3, &mut rng));
        let direct = contract_tucker(&g, &a, &b, &c).map_err(|e| e.to_string())?;
        // aᵀ G(1) vec(b cᵀ): column q + d2·r of the unfolding meets b_q c_r.
        let v = vec_colstack(&outer_product(&b, &c));
        let unfolded = mode1_unfold(&g);
        let via_unfold: f64 = (0..d1)
            .map(|p| a[p] * (0..d2 * d3).map(|col| unfolded.get(p, col) * v[col]).sum::<f64>())
            .sum();
        worst = worst.max((direct - via_unfold).abs());

        let rank_b = d2;
        let params = TuckerParams {
            core: Tensor3::from_fn(d1, rank_b, rank_b, |_, _, _| rng.random_range(-1.0..1.0)),
            b: jointdx_core::tensor::Matrix::from_fn(N_CLASSES, rank_b, |_, _| rng.random_range(-1.0..1.0)),
            c: jointdx_core::tensor::Matrix::from_fn(N_CLASSES, rank_b, |_, _| rng.random_range(-1.0..1.0)),
        };
        let scores = score_joint(&a, &params).map_err(|e| e.to_string())?;
        for j in 0..N_CLASSES {
            for k in 0..N_CLASSES {
                let mut logit = 0.0;
                for p in 0..d1 {
                    for q in 0..rank_b {
                        for r in 0..rank_b {
                            logit += params.core.get(p, q, r) * a[p] * params.b.get(j, q) * params.c.get(k, r);
                        }
                    }
                }
                worst = worst.max((scores.get(j, k) - sigmoid(logit)).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 shapes, max deviation {worst:.1e}"))
}

/// Definitional rank: labels scoring at least as high.
fn brute_rank(s: &[f64; N_PAIRS], l: usize) -> usize {
    s.iter().filter(|&&x| x >= s[l]).count()
}

fn brute_coverage(inst: &ScoredInstance) -> f64 {
    (0..N_PAIRS)
        .filter(|&l| inst.truth[l])
        .map(|l| brute_rank(&inst.scores, l))
        .max()
        .unwrap() as f64
}

fn brute_lrap(inst: &ScoredInstance) -> f64 {
    let rel: Vec<usize> = (0..N_PAIRS).filter(|&l| inst.truth[l]).collect();
    rel.iter()
        .map(|&l| {
            let above = rel.iter().filter(|&&m| inst.scores[m] >= inst.scores[l]).count();
            above as f64 / brute_rank(&inst.scores, l) as f64
        })
        .sum::<f64>()
        / rel.len() as f64
}

/// Gain at each position of the ranking that puts irrelevant labels first
/// among equal scores, normalized by the ideal ranking.
fn brute_ndcg(inst: &ScoredInstance, k: usize) -> f64 {
    let mut labels: Vec<usize> = (0..N_PAIRS).collect();
    // Insertion sort keeps this independent of the library's sort.
    for i in 1..labels.len() {
        let mut j = i;
        let before = |x: usize, y: usize| {
            inst.scores[x] > inst.scores[y] || (inst.scores[x] == inst.scores[y] && !inst.truth[x] && inst.truth[y])
        };
        while j > 0 && before(labels[j], labels[j - 1]) {
            labels.swap(j, j - 1);
            j -= 1;
        }
    }
    let dcg: f64 = (0..k)
        .filter(|&i| inst.truth[labels[i]])
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let n_rel = inst.truth.iter().filter(|&&t| t).count();
    let idcg: f64 = (0..n_rel.min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / idcg
}

// 3. Ranking metrics against their definitions.
fn metric_oracles() -> Outcome {
    let mut rng = seeded_rng(3);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let scores: [f64; N_PAIRS] = std::array::from_fn(|_| {
            let s: f64 = rng.random();
            // Every other instance is coarsened to force ties.
            if i % 2 == 0 { (s * 4.0).round() / 4.0 } else { s }
        });
        let mut truth: [bool; N_PAIRS] = std::array::from_fn(|_| rng.random_bool(0.3));
        truth[rng.random_range(0..N_PAIRS)] = true;
        let inst = ScoredInstance::new(scores, truth);
        let one = std::slice::from_ref(&inst);
        let got = [
            coverage_error(one).map_err(|e| e.to_string())?,
            rank_precision(one).map_err(|e| e.to_string())?,
            ndcg_at_k(one, 5).map_err(|e| e.to_string())?,
        ];
        let want = [brute_coverage(&inst), brute_lrap(&inst), brute_ndcg(&inst, 5)];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;

    // One relevant label at rank r: coverage r, precision 1/r, NDCG@5
    // [r <= 5] / log2(r + 1).
    for r in 1..=N_PAIRS {
        let scores: [f64; N_PAIRS] = std::array::from_fn(|l| (N_PAIRS - l) as f64);
        let mut truth = [false; N_PAIRS];
        truth[r - 1] = true;
        let one = [ScoredInstance::new(scores, truth)];
        let ndcg_want = if r <= 5 { 1.0 / ((r + 1) as f64).log2() } else { 0.0 };
        let ok = coverage_error(&one).unwrap() == r as f64
            && rank_precision(&one).unwrap() == 1.0 / r as f64
            && ndcg_at_k(&one, 5).unwrap() == ndcg_want;
        ensure(ok, || format!("one-hot consistency fails at r={r}"))?;
    }
    Ok(format!("1000 instances, max deviation {worst:.1e}; one-hot identities exact"))
}

// 4. Independence statistics and the chi-square tail.
fn statistics() -> Outcome {
    let mut rng = seeded_rng(4);
    for _ in 0..200 {
        let rows: Vec<u64> = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..9)).collect();
        let cols: Vec<u64> = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..9)).collect();
        let counts = rows.iter().flat_map(|r| cols.iter().map(move |c| r * c)).collect();
        let t = ContingencyTable::new(rows.len(), cols.len(), counts).map_err(|e| e.to_string())?;
        let chi = chi_squared_test(&t).map_err(|e| e.to_string())?;
        ensure(chi.statistic.abs() < 1e-9, || format!("margins product gives {}", chi.statistic))?;
    }
    let t = ContingencyTable::from_rows(&[&[10, 0], &[0, 10]]).unwrap();
    let chi = chi_squared_test(&t).unwrap().statistic;
    let g = g_test(&t).unwrap().statistic;
    ensure((chi - 20.0).abs() < 1e-6, || format!("chi2 {chi}"))?;
    ensure((g - 40.0 * std::f64::consts::LN_2).abs() < 1e-6, || format!("G {g}"))?;
    ensure((g - 27.7259).abs() < 1e-4, || format!("G {g}"))?;
    let q = chi2_sf(9.4877, 4);
    ensure((q - 0.05).abs() < 1e-3, || format!("chi2_sf(9.4877, 4) = {q}"))?;
    for x in [1.0, 2.0, 5.0] {
        let d = (chi2_sf(x, 2) - (-x / 2.0f64).exp()).abs();
        ensure(d < 1e-10, || format!("chi2_sf({x}, 2) off by {d:e}"))?;
    }
    Ok(format!("chi2={chi}, G={g:.6}, chi2_sf(9.4877,4)={q:.5}"))
}

fn read_results(path: &Path) -> Result<Vec<(String, String, f64)>, String> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    rd.records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            Ok((r[0].to_string(), r[1].to_string(), r[2].parse().map_err(|_| "bad mean")?))
        })
        .collect()
}

// 5. The tensor model beats the marginal model on a coupled corpus.
fn comparative_claim(dir: &Path) -> Outcome {
    let start = Instant::now();
    let data = coupled_corpus(dir)?;
    let csv_path = dir.join("results.csv");
    let cfg = repo_root().join("configs/reference.cfg");
    let (code, out, err) = cli(&["eval", "--data", p(&data), "--splits", "5", "--config", p(&cfg), "--out", p(&csv_path)]);
    ensure(code == 0, || format!("eval exit {code}: {err}{out}"))?;
    let elapsed = start.elapsed();
    let rows = read_results(&csv_path)?;
    ensure(rows.len() == 16, || format!("{} rows", rows.len()))?;
    let get = |metric: &str, model: &str| {
        rows.iter()
            .find(|(m, n, _)| m == metric && n == model)
            .map(|r| r.2)
            .unwrap_or(f64::NAN)
    };
    let (nt, ns) = (get("NDCG@5", "Tensor"), get("NDCG@5", "Standard"));
    let gain = nt / ns - 1.0;
    ensure(gain >= 0.10, || format!("NDCG@5 tensor {nt:.4} vs standard {ns:.4} (+{:.1}%)", 100.0 * gain))?;
    let (at, as_) = (get("AUROC", "Tensor"), get("AUROC", "Standard"));
    ensure(at >= as_, || format!("AUROC tensor {at:.4} < standard {as_:.4}"))?;
    for metric in ["AUROC", "Coverage Error", "Rank Precision", "NDCG@5"] {
        let pop = get(metric, "Most Popular");
        for model in ["Standard", "Tensor"] {
            let v = get(metric, model);
            let better = if metric == "Coverage Error" { v < pop } else { v > pop };
            ensure(better, || format!("{model} {metric} {v:.4} does not beat most popular {pop:.4}"))?;
        }
    }
    let ar = get("AUROC", "Random");
    ensure((0.45..=0.55).contains(&ar), || format!("random AUROC {ar:.4}"))?;
    ensure(elapsed < Duration::from_secs(15 * 60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "NDCG@5 tensor {nt:.3} vs standard {ns:.3} (+{:.0}%), AUROC {at:.3} vs {as_:.3}, random AUROC {ar:.3}, {:.0?}",
        100.0 * gain,
        elapsed
    ))
}

fn p_values(stats_out: &str) -> Result<(f64, f64), String> {
    let field = |key: &str| -> Result<f64, String> {
        stats_out
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .and_then(|v| v.trim().parse().ok())
            .ok_or(format!("no {key} in output"))
    };
    Ok((field("chi2_p_value:")?, field("g_p_value:")?))
}

// 6. Coupling is detected and its absence is not.
fn correlation_detection(dir: &Path) -> Outcome {
    let coupled = coupled_corpus(dir)?;
    let (code, out, err) = cli(&["stats", "--data", p(&coupled)]);
    ensure(code == 0, || format!("stats exit {code}: {err}"))?;
    let (chi_p, g_p) = p_values(&out)?;
    ensure(chi_p < 1e-3 && g_p < 1e-3, || format!("coupled corpus p = {chi_p:e}, {g_p:e}"))?;
    let mut null_ok = 0;
    let mut null_ps = Vec::new();
    for seed in 0..5 {
        let path = dir.join(format!("null{seed}.jsonl"));
        let s = seed.to_string();
        let (code, _, err) = cli(&["gen-data", "--patients", "2000", "--coupling", "0", "--seed", &s, "--out", p(&path)]);
        ensure(code == 0, || format!("gen-data exit {code}: {err}"))?;
        let (code, out, err) = cli(&["stats", "--data", p(&path)]);
        ensure(code == 0, || format!("stats exit {code}: {err}"))?;
        let (cp, gp) = p_values(&out)?;
        null_ps.push(cp.min(gp));
        null_ok += usize::from(cp > 0.01 && gp > 0.01);
    }
    ensure(null_ok >= 4, || format!("only {null_ok}/5 null corpora pass: {null_ps:?}"))?;
    let shown: Vec<String> = null_ps.iter().map(|p| format!("{p:.3}")).collect();
    Ok(format!(
        "coupled p = {chi_p:.1e} / {g_p:.1e}; null corpora {null_ok}/5 with p > 0.01 (min p {})",
        shown.join(", ")
    ))
}

// 7. Patient-level splits, best-epoch restore and reproducible results.
fn protocol_fidelity(dir: &Path) -> Outcome {
    let data = small_corpus(dir)?;
    let corpus = load_jsonl(&data).map_err(|e| e.to_string())?;

    let ids = corpus.ids();
    for plan in make_splits(&ids, 5, 11).map_err(|e| e.to_string())? {
        let sizes = [plan.train_ids.len(), plan.val_ids.len(), plan.test_ids.len()];
        ensure(sizes == [96, 24, 30], || format!("split sizes {sizes:?}"))?;
        let all: BTreeSet<&String> = plan.train_ids.iter().chain(&plan.val_ids).chain(&plan.test_ids).collect();
        ensure(all.len() == ids.len(), || "partitions overlap or miss patients".into())?;
        for part in [Partition::Train, Partition::Validation, Partition::Test] {
            for inst in plan.instances(&corpus.records, part) {
                ensure(plan.partition_of(&inst.provenance.patient) == Some(part), || {
                    format!("instance of {} leaked into {part:?}", inst.provenance.patient)
                })?;
            }
        }
    }

    let plan = &make_splits(&ids, 1, 0).map_err(|e| e.to_string())?[0];
    let (tr, va) = (plan.instances(&corpus.records, Partition::Train), plan.instances(&corpus.records, Partition::Validation));
    let cfg = TrainConfig {
        max_epochs: 40,
        patience: 8,
        learning_rate: 0.02,
        ..TrainConfig::default()
    };
    let dims = ModelDims { input_dim: corpus.event_dim, static_dim: corpus.static_dim, hidden_dim: 6, static_latent: 4, rank: 3 };
    let (params, history) = train(&tr, &va, &cfg, ModelKind::Tensor, dims).map_err(|e| e.to_string())?;
    let min = history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    let recomputed = mean_loss(&va, &params).map_err(|e| e.to_string())?;
    ensure(history.best_val_loss == min && recomputed == min, || {
        format!("best {} / recomputed {recomputed} / min {min}", history.best_val_loss)
    })?;
    let last = history.epochs.last().unwrap();
    let best_not_last = history.best_epoch != last.epoch;

    let smoke = repo_root().join("configs/smoke.cfg");
    let mut csvs = Vec::new();
    for threads in ["1", "1", "2"] {
        let out_csv = dir.join(format!("results_{}.csv", csvs.len()));
        let (code, out, err) = cli(&["eval", "--data", p(&data), "--config", p(&smoke), "--out", p(&out_csv), "--threads", threads]);
        ensure(code == 0, || format!("eval exit {code}: {err}{out}"))?;
        csvs.push(std::fs::read(&out_csv).map_err(|e| e.to_string())?);
    }
    ensure(csvs[0] == csvs[1], || "repeated eval differs".into())?;
    ensure(csvs[0] == csvs[2], || "parallel eval differs from serial".into())?;
    Ok(format!(
        "64/16/20 patient splits; restored epoch {} of {} (val loss {min:.4}{}); results.csv byte-identical across runs and thread counts",
        history.best_epoch,
        history.epochs.len(),
        if best_not_last { ", not the last epoch" } else { "" }
    ))
}

// 8. Saving and loading a model leaves every score bit-identical.
fn serialization(dir: &Path) -> Outcome {
    let data = small_corpus(dir)?;
    let corpus = load_jsonl(&data).map_err(|e| e.to_string())?;
    let cfg = RunConfig::load(&repo_root().join("configs/smoke.cfg")).map_err(|e| e.to_string())?;
    let dims = cfg.dims(corpus.event_dim, corpus.static_dim);
    let mut rng = seeded_rng(8);
    let instances: Vec<Instance> = all_instances(&corpus);
    let random_static = |rng: &mut jointdx_core::Rng| -> Vec<f64> { (0..dims.static_dim).map(|_| rng.random_range(-2.0..2.0)).collect() };
    let mut compared = 0;
    for kind in [ModelKind::Tensor, ModelKind::Marginal] {
        let params = ModelParams::init(dims, kind, &mut rng);
        let path = dir.join(format!("model_{}.json", kind.as_str()));
        save_model(&path, &params).map_err(|e| e.to_string())?;
        let back = load_model(&path).map_err(|e| e.to_string())?;
        for i in 0..100 {
            let inst = &instances[rng.random_range(0..instances.len())];
            // Half real histories, half random static vectors.
            let static_features = if i % 2 == 0 { inst.static_features.to_vec() } else { random_static(&mut rng) };
            let a = params.predict(&inst.history, &static_features).map_err(|e| e.to_string())?;
            let b = back.predict(&inst.history, &static_features).map_err(|e| e.to_string())?;
            let same = a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(same, || format!("{} prediction {i} differs", kind.as_str()))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} predictions bit-identical after save/load (tensor and marginal)"))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name
    // filter that matches nothing skips the suite.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return;
    }
    let dir = TempDir::new().expect("temp dir");
    let criteria: [Criterion; 8] = [
        ("gradient correctness", Box::new(gradient_correctness)),
        ("tucker contraction identity", Box::new(tucker_identity)),
        ("metric oracles", Box::new(metric_oracles)),
        ("independence statistics", Box::new(statistics)),
        ("tensor beats marginal", Box::new(|| comparative_claim(dir.path()))),
        ("correlation detection", Box::new(|| correlation_detection(dir.path()))),
        ("protocol fidelity", Box::new(|| protocol_fidelity(dir.path()))),
        ("model serialization", Box::new(|| serialization(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
