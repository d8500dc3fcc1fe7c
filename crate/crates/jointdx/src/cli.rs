//! Command-line surface: corpus generation, independence tests, training,
//! cross-validated evaluation, prediction with alerting and gradient
//! checking.
//!
//! Exit codes: 0 success, 1 gradient check failure, 2 usage or
//! configuration error, 3 data error, 4 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Parser, Subcommand};

use jointdx_core::data::{extract_instances, instance_at, make_splits, Instance, Partition};
use jointdx_core::decoder::{top_n_pairs, JointTarget, INTENTION_LABELS, N_CLASSES, N_PAIRS, TYPE_LABELS};
use jointdx_core::experiment::{alert, run_split, SplitOutcome};
use jointdx_core::metrics::{evaluate, report, ScoredInstance};
use jointdx_core::stats::{chi_squared_test, g_test, ContingencyTable};
use jointdx_core::synth::{generate_synthetic, SyntheticShape};
use jointdx_core::trainer::{grad_check_all, train, ModelKind, GRAD_CHECK_TOLERANCE};

use crate::config::RunConfig;
use crate::corpus::{load_jsonl, save_jsonl, Corpus};
use crate::error::{CliError, CliResult};
use crate::manifest::{ManifestInputs, RunManifest};
use crate::model_io::{load_model, save_model};
use crate::report::{results_csv, results_table};

/// Cut-off of the NDCG metric in every evaluation.
pub const NDCG_K: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "jointdx", version, about = "Joint prediction of therapy intention and type")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus with latent-class structure.
    GenData {
        #[arg(long)]
        patients: usize,
        /// Probability that the therapy type follows the intention.
        #[arg(long)]
        coupling: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test intention and therapy type for independence.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one model on a single patient-level split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = ["tensor", "marginal"])]
        model_kind: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the model path with extension `.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Cross-validate all four models and write the results CSV.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Overrides `n_splits` from the config.
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Score one event of one patient and raise an alert when the documented
    /// decision is not among the top recommendations.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        t: u32,
        #[arg(long, default_value_t = 3)]
        top_n: usize,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Deliberately corrupt one analytic entry; the check must fail.
        #[arg(long)]
        corrupt: bool,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                2
            } else {
                let _ = write!(out, "{}", e.render());
                0
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            if !matches!(e, CliError::GradCheck) {
                let _ = writeln!(err, "error: {e}");
            }
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::GenData {
            patients,
            coupling,
            seed,
            out: path,
        } => cmd_gen_data(patients, coupling, seed, &path, out),
        Command::Stats { data } => cmd_stats(&data, out),
        Command::Train {
            data,
            model_kind,
            config,
            split_seed,
            out: path,
            manifest,
        } => {
            let manifest = manifest.unwrap_or_else(|| path.with_extension("manifest.json"));
            cmd_train(&data, &model_kind, &config, split_seed, &path, &manifest, out)
        }
        Command::Eval {
            data,
            splits,
            config,
            out: path,
            threads,
        } => cmd_eval(&data, splits, &config, &path, threads, out),
        Command::Predict {
            model,
            data,
            patient,
            t,
            top_n,
        } => cmd_predict(&model, &data, &patient, t, top_n, out),
        Command::Gradcheck { seed, corrupt } => cmd_gradcheck(seed, corrupt, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Usage(format!("cannot write output: {e}")))
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    load_jsonl(path).map_err(|e| CliError::Data(e.to_string()))
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn pair_label(j: usize, k: usize) -> String {
    format!("{}/{}", INTENTION_LABELS[j], TYPE_LABELS[k])
}

fn class_counts(targets: &[JointTarget]) -> ([usize; N_CLASSES], [usize; N_CLASSES]) {
    let mut y = [0; N_CLASSES];
    let mut z = [0; N_CLASSES];
    for t in targets {
        y[t.intention] += 1;
        z[t.therapy_type] += 1;
    }
    (y, z)
}

fn histogram(labels: &[&str; N_CLASSES], counts: &[usize; N_CLASSES]) -> String {
    labels
        .iter()
        .zip(counts)
        .map(|(l, c)| format!("{l}={c}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn decisions(corpus: &Corpus) -> Vec<JointTarget> {
    corpus
        .records
        .iter()
        .flat_map(|r| r.events.iter().filter_map(|e| e.decision))
        .collect()
}

pub fn cmd_gen_data(n: usize, coupling: f64, seed: u64, path: &Path, out: &mut dyn Write) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Usage("--patients must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&coupling) {
        return Err(CliError::Usage(format!("--coupling must be in [0, 1], got {coupling}")));
    }
    let shape = SyntheticShape::reference();
    let records = generate_synthetic(n, coupling, seed, &shape)?;
    let corpus = Corpus {
        static_dim: shape.static_dim(),
        event_dim: shape.event_dim,
        records,
    };
    save_jsonl(path, &corpus).map_err(|e| CliError::Usage(e.to_string()))?;
    let targets = decisions(&corpus);
    let (y, z) = class_counts(&targets);
    let events: usize = corpus.records.iter().map(|r| r.events.len()).sum();
    emit(
        out,
        &format!(
            "patients: {n}\nevents: {events}\ninstances: {}\nintention: {}\ntype: {}\nwrote: {}\n",
            targets.len(),
            histogram(&INTENTION_LABELS, &y),
            histogram(&TYPE_LABELS, &z),
            path.display()
        ),
    )
}

pub fn cmd_stats(data: &Path, out: &mut dyn Write) -> CliResult<()> {
    let corpus = load_corpus(data)?;
    let targets = decisions(&corpus);
    if targets.is_empty() {
        return Err(CliError::Data("corpus holds no documented decisions".into()));
    }
    let table = ContingencyTable::from_targets(&targets)?;
    let chi = chi_squared_test(&table)?;
    let g = g_test(&table)?;
    let mut text = format!("decisions: {}\n", targets.len());
    text += &format!("table_columns: {}\n", TYPE_LABELS.join(" "));
    for (j, label) in INTENTION_LABELS.iter().enumerate() {
        let row: Vec<String> = (0..N_CLASSES).map(|k| table.get(j, k).to_string()).collect();
        text += &format!("row_{label}: {}\n", row.join(" "));
    }
    text += &format!(
        "chi2_statistic: {:.6}\nchi2_df: {}\nchi2_p_value: {:.6e}\n",
        chi.statistic, chi.df, chi.p_value
    );
    text += &format!("g_statistic: {:.6}\ng_df: {}\ng_p_value: {:.6e}\n", g.statistic, g.df, g.p_value);
    emit(out, &text)
}

pub fn cmd_train(
    data: &Path,
    kind: &str,
    config: &Path,
    split_seed: u64,
    model_path: &Path,
    manifest_path: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let kind = ModelKind::parse(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = load_config(config)?;
    let corpus = load_corpus(data)?;
    let plan = make_splits(&corpus.ids(), 1, split_seed)?.remove(0);
    let sets = [Partition::Train, Partition::Validation, Partition::Test]
        .map(|p| plan.instances(&corpus.records, p));
    let dims = cfg.dims(corpus.event_dim, corpus.static_dim);
    let (params, history) = train(&sets[0], &sets[1], &cfg.train, kind, dims)?;
    save_model(model_path, &params).map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = RunManifest::new(
        ManifestInputs {
            model_kind: kind.as_str(),
            data: &data.display().to_string(),
            split_seed,
            sizes: [sets[0].len(), sets[1].len(), sets[2].len()],
            config: &cfg,
        },
        &history,
    );
    write_file(manifest_path, &manifest.to_json())?;

    let mut text = format!(
        "model_kind: {}\ninstances: train={} val={} test={}\nepochs: {}\nbest_epoch: {}\nbest_val_loss: {:.6}\nstopped_early: {}\n",
        kind.as_str(),
        sets[0].len(),
        sets[1].len(),
        sets[2].len(),
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss,
        history.stopped_early
    );
    if !sets[2].is_empty() {
        let scored = sets[2]
            .iter()
            .map(|i| Ok(ScoredInstance::from_prediction(&params.predict(&i.history, &i.static_features)?, &i.target)))
            .collect::<jointdx_core::Result<Vec<_>>>()?;
        let m = evaluate(&scored, NDCG_K)?;
        text += &format!(
            "test_auroc: {:.6}\ntest_coverage_error: {:.6}\ntest_rank_precision: {:.6}\ntest_ndcg@{NDCG_K}: {:.6}\n",
            m.auroc, m.coverage_error, m.rank_precision, m.ndcg
        );
    }
    text += &format!("wrote: {}\nwrote: {}\n", model_path.display(), manifest_path.display());
    emit(out, &text)
}

/// Runs every split, spreading them over `threads` workers. Each split is
/// seeded from its own id, so the result does not depend on scheduling.
fn run_splits(corpus: &Corpus, cfg: &RunConfig, n_splits: usize, threads: usize) -> CliResult<Vec<SplitOutcome>> {
    let plans = make_splits(&corpus.ids(), n_splits, cfg.train.seed)?;
    let dims = cfg.dims(corpus.event_dim, corpus.static_dim);
    let workers = threads.clamp(1, plans.len());
    let mut results: Vec<(usize, jointdx_core::Result<SplitOutcome>)> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let plans = &plans;
                s.spawn(move || {
                    plans
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|p| (p.split_id, run_split(&corpus.records, p, &cfg.train, dims, NDCG_K)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("split worker panicked"))
            .collect()
    });
    results.sort_by_key(|(id, _)| *id);
    results
        .into_iter()
        .map(|(_, r)| r.map_err(CliError::from))
        .collect()
}

pub fn cmd_eval(
    data: &Path,
    splits: Option<usize>,
    config: &Path,
    csv_path: &Path,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut cfg = load_config(config)?;
    if let Some(n) = splits {
        if n == 0 {
            return Err(CliError::Usage("--splits must be at least 1".into()));
        }
        cfg.n_splits = n;
    }
    let corpus = load_corpus(data)?;
    let threads = threads
        .or_else(|| thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1);
    let outcomes = run_splits(&corpus, &cfg, cfg.n_splits, threads)?;
    let per_split: Vec<_> = outcomes.iter().map(|o| o.metrics).collect();
    let rep = report(&per_split, NDCG_K)?;
    write_file(csv_path, &results_csv(&rep))?;

    let mut text = String::new();
    for o in &outcomes {
        text += &format!(
            "split {}: test_instances={} tensor_best_epoch={} standard_best_epoch={}\n",
            o.split_id, o.n_test, o.tensor_history.best_epoch, o.marginal_history.best_epoch
        );
    }
    text += &results_table(&rep);
    text += &format!("wrote: {}\n", csv_path.display());
    emit(out, &text)
}

pub fn cmd_predict(
    model: &Path,
    data: &Path,
    patient: &str,
    t: u32,
    top_n: usize,
    out: &mut dyn Write,
) -> CliResult<()> {
    if !(1..=N_PAIRS).contains(&top_n) {
        return Err(CliError::Usage(format!("--top-n must be in 1..={N_PAIRS}")));
    }
    let params = load_model(model).map_err(|e| CliError::Data(e.to_string()))?;
    let corpus = load_corpus(data)?;
    if params.dims.input_dim != corpus.event_dim || params.dims.static_dim != corpus.static_dim {
        return Err(CliError::Data(format!(
            "model expects event_dim={} static_dim={}, corpus has {} and {}",
            params.dims.input_dim, params.dims.static_dim, corpus.event_dim, corpus.static_dim
        )));
    }
    let record = corpus
        .find(patient)
        .ok_or_else(|| CliError::Data(format!("unknown patient '{patient}'")))?;
    let (history, decision) = instance_at(record, t)
        .ok_or_else(|| CliError::Data(format!("patient '{patient}' has no event at t={t}")))?;
    let scores = params.predict(&history, &record.static_features)?;

    let mut text = format!("patient: {patient}\nt: {t}\nhistory_events: {}\n", history.len());
    text += &format!("scores: {:<12}", "");
    for l in TYPE_LABELS {
        text += &format!(" {l:>14}");
    }
    text.push('\n');
    for (j, l) in INTENTION_LABELS.iter().enumerate() {
        text += &format!("  {l:<18}");
        for k in 0..N_CLASSES {
            text += &format!(" {:>14.6}", scores.get(j, k));
        }
        text.push('\n');
    }
    text += &format!("top_{top_n}:\n");
    for (rank, ((j, k), s)) in top_n_pairs(&scores, top_n)?.into_iter().enumerate() {
        text += &format!("  {}. {} {s:.6}\n", rank + 1, pair_label(j, k));
    }
    match decision {
        Some(d) => {
            text += &format!("decision: {}\n", pair_label(d.intention, d.therapy_type));
            text += &format!("alert: {}\n", alert(&scores, &d, top_n)?);
        }
        None => text += "decision: none\n",
    }
    emit(out, &text)
}

pub fn cmd_gradcheck(seed: u64, corrupt: bool, out: &mut dyn Write) -> CliResult<()> {
    let reports = grad_check_all(seed, corrupt)?;
    let mut text = String::new();
    for r in &reports {
        text += &format!(
            "{}: max_rel_error={:.3e} checked={} worst={}[{}] {}\n",
            r.config.name(),
            r.max_rel_error,
            r.n_checked,
            r.worst.0,
            r.worst.1,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    text += &format!("tolerance: {GRAD_CHECK_TOLERANCE:e}\n");
    emit(out, &text)?;
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::GradCheck)
    }
}

/// All decision instances of a corpus, in corpus order.
pub fn all_instances(corpus: &Corpus) -> Vec<Instance> {
    corpus.records.iter().flat_map(extract_instances).collect()
}
