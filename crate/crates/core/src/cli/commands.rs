use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::report::RunReport;
use super::*;
use crate::bench::{
    bench_fit, data_scaling_run, generate_synthetic_domain, lambda_sweep, read_domain,
    write_domain, BenchConfig, SynthSpec,
};
use crate::calibration::{calibrate, CalibrationRequest};
use crate::error::Result;
use crate::eval::{evaluate_run, search_all, MetricsReport};
use crate::io::{self, dred};
use crate::matrix::QaPairSet;
use crate::pipeline::{evaluate_uncalibrated, EvalSettings, TestBundle};
use crate::solver::{fit, EditOperator, SolverConfig};

/// What a command produced: the JSON report plus its plain-text rendering.
struct Outcome {
    report: RunReport,
    text: String,
}

impl Outcome {
    fn new(command: &str) -> Self {
        Self {
            report: RunReport::new(command),
            text: String::new(),
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }
}

pub(super) fn dispatch(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        if n == 0 {
            return finish(
                cli.json,
                Outcome::new(command_name(&cli.command)),
                Err(Error::InvalidConfig("--threads must be >= 1".into())),
            );
        }
        // Ignored if a global pool already exists (only possible when embedded).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut out = Outcome::new(command_name(&cli.command));
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, &mut out),
        Command::Calibrate(a) => cmd_calibrate(&a, &mut out),
        Command::Search(a) => cmd_search(&a, &mut out),
        Command::Eval(a) => cmd_eval(&a, &mut out),
        Command::Zerodr(a) => cmd_zerodr(&a, &mut out),
        Command::Bench(a) => cmd_bench(&a, &mut out),
        Command::Sweep(a) => cmd_sweep(&a, &mut out),
        Command::Scale(a) => cmd_scale(&a, &mut out),
        Command::Synth(a) => cmd_synth(&a, &mut out),
        Command::Store(c) => cmd_store(&c, &mut out),
    };
    finish(cli.json, out, result)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Fit(_) => "fit",
        Command::Calibrate(_) => "calibrate",
        Command::Search(_) => "search",
        Command::Eval(_) => "eval",
        Command::Zerodr(_) => "zerodr",
        Command::Bench(_) => "bench",
        Command::Sweep(_) => "sweep",
        Command::Scale(_) => "scale",
        Command::Synth(_) => "synth",
        Command::Store(StoreCommand::List(_)) => "store list",
        Command::Store(StoreCommand::Show { .. }) => "store show",
        Command::Store(StoreCommand::Rm { .. }) => "store rm",
    }
}

fn finish(json: bool, mut out: Outcome, result: Result<()>) -> i32 {
    if let Err(e) = &result {
        let code = exit_code(e);
        out.report.set_error(e, code);
        eprintln!("error: {e}");
    }
    if json {
        out.report.print_json();
    } else if result.is_ok() {
        print!("{}", out.text);
    }
    out.report.exit_code
}

fn store_root(arg: &StoreArg) -> Result<PathBuf> {
    arg.store.clone().ok_or_else(|| {
        Error::InvalidConfig("no operator store: pass --store or set DREDITOR_STORE".into())
    })
}

fn ridge_json(r: Ridge) -> Value {
    match r {
        Ridge::Auto => json!("auto"),
        Ridge::Fixed(v) => json!(v),
    }
}

fn path_json(p: &Path) -> Value {
    json!(p.display().to_string())
}

fn now_unix() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn eval_settings(e: &EvalOpts) -> EvalSettings {
    EvalSettings {
        k: e.k,
        similarity: e.sim,
    }
}

fn load_pairs(inputs: &TrainInputs) -> Result<QaPairSet> {
    let questions = io::read_matrix(&inputs.questions)?;
    let answers = io::read_matrix(&inputs.answers)?;
    let alignment = io::read_pairs(&inputs.pairs)?;
    QaPairSet::from_alignment(&questions, &answers, &alignment)
}

fn fit_operator(
    inputs: &TrainInputs,
    solver: &SolverArgs,
    side: EditSide,
    dataset_id: &Option<String>,
) -> Result<(EditOperator, usize)> {
    let pairs = load_pairs(inputs)?;
    let cfg = SolverConfig::new(solver.lambda)
        .with_ridge(solver.ridge)
        .with_side(side);
    let source = dataset_id
        .clone()
        .unwrap_or_else(|| inputs.pairs.display().to_string());
    let op = fit(&pairs, &cfg)?
        .with_source(Some(source))
        .with_created_at(now_unix());
    Ok((op, pairs.len()))
}

fn metrics_text(out: &mut Outcome, label: &str, m: &MetricsReport) {
    let k = m.k;
    out.line(format!(
        "{label:<14} nDCG@{k} {:.4}  MAP@{k} {:.4}  Recall@{k} {:.4}  ({} queries, {} skipped, {})",
        m.means.ndcg,
        m.means.map,
        m.means.recall,
        m.evaluated_queries,
        m.skipped_queries,
        m.similarity.as_str()
    ));
}

fn operator_text(out: &mut Outcome, op: &EditOperator) {
    let m = op.meta();
    out.line(format!(
        "operator: d={} n_pairs={} lambda={} ridge={:e} side={} |dW|_F={:.6} crc32={:08x}",
        m.d,
        m.n_pairs,
        m.lambda,
        m.ridge,
        m.edit_side.as_str(),
        op.delta_norm(),
        m.payload_checksum
    ));
}

fn cmd_fit(a: &FitArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "questions": path_json(&a.inputs.questions),
        "answers": path_json(&a.inputs.answers),
        "pairs": path_json(&a.inputs.pairs),
        "domain": a.domain,
        "store": a.store.store.as_deref().map(path_json),
        "lambda": a.solver.lambda,
        "ridge": ridge_json(a.solver.ridge),
        "side": a.side,
        "dataset_id": a.dataset_id,
        "force": a.force,
    });
    let root = store_root(&a.store)?;
    let (op, _) = fit_operator(&a.inputs, &a.solver, a.side, &a.dataset_id)?;
    io::save_operator(&root, &a.domain, &op, a.force)?;
    let operator_path = root.join(&a.domain).join(io::store::OPERATOR_FILE);
    out.report.operator_meta = Some(op.meta().clone());
    out.report.result = Some(json!({
        "domain": a.domain,
        "operator_path": path_json(&operator_path),
        "delta_norm": op.delta_norm(),
    }));
    operator_text(out, &op);
    out.line(format!("saved {}", operator_path.display()));
    Ok(())
}

/// Copies a DRED1 file and its ids sidecar byte for byte, after validating it.
fn copy_matrix_file(src: &Path, dst: &Path, dim: usize) -> Result<usize> {
    let m = io::read_matrix(src)?;
    crate::error::check_dim("corpus vs operator", dim, m.dim())?;
    let bytes = std::fs::read(src).map_err(|e| Error::io(src, e))?;
    let src_ids = dred::ids_path(src);
    let dst_ids = dred::ids_path(dst);
    match std::fs::read(&src_ids) {
        Ok(ids) => dred::write_atomic(&dst_ids, &ids)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            match std::fs::remove_file(&dst_ids) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&dst_ids, e)),
            }
        }
        Err(e) => return Err(Error::io(&src_ids, e)),
    }
    dred::write_atomic(dst, &bytes)?;
    Ok(m.rows())
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "domain": a.domain,
        "store": a.store.store.as_deref().map(path_json),
        "queries": a.queries.as_deref().map(path_json),
        "queries_out": a.queries_out.as_deref().map(path_json),
        "corpus": a.corpus.as_deref().map(path_json),
        "corpus_out": a.corpus_out.as_deref().map(path_json),
        "side": a.side,
    });
    if a.queries.is_none() && a.corpus.is_none() {
        return Err(Error::NothingToCalibrate);
    }
    let root = store_root(&a.store)?;
    let op = io::load_operator(&root, &a.domain)?;
    out.report.operator_meta = Some(op.meta().clone());

    let mut result = serde_json::Map::new();
    if let (Some(src), Some(dst)) = (&a.queries, &a.queries_out) {
        let queries = io::read_matrix(src)?;
        let cal = calibrate(&CalibrationRequest {
            operator: &op,
            queries: Some(&queries),
            corpus: None,
            side: a.side,
        })?;
        let q = cal.queries.expect("queries were supplied");
        io::write_matrix(dst, &q)?;
        result.insert("queries_out".into(), path_json(dst));
        result.insert("query_rows".into(), json!(q.rows()));
        out.line(format!("queries: {} rows -> {}", q.rows(), dst.display()));
    }
    if let (Some(src), Some(dst)) = (&a.corpus, &a.corpus_out) {
        let rows = match a.side {
            EditSide::QueriesOnly => copy_matrix_file(src, dst, op.dim())?,
            EditSide::QueriesAndAnswers => {
                let corpus = io::read_matrix(src)?;
                let cal = calibrate(&CalibrationRequest {
                    operator: &op,
                    queries: None,
                    corpus: Some(&corpus),
                    side: a.side,
                })?;
                let c = cal.corpus.expect("corpus was supplied");
                io::write_matrix(dst, &c)?;
                c.rows()
            }
        };
        result.insert("corpus_out".into(), path_json(dst));
        result.insert("corpus_rows".into(), json!(rows));
        result.insert(
            "corpus_edited".into(),
            json!(a.side == EditSide::QueriesAndAnswers),
        );
        out.line(format!("corpus: {rows} rows -> {}", dst.display()));
    }
    out.report.result = Some(Value::Object(result));
    Ok(())
}

fn cmd_search(a: &SearchArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "queries": path_json(&a.queries),
        "corpus": path_json(&a.corpus),
        "k": a.eval.k,
        "sim": a.eval.sim,
    });
    let queries = io::read_matrix(&a.queries)?;
    let corpus = io::read_matrix(&a.corpus)?;
    let runs = search_all(&queries, &corpus, a.eval.k, a.eval.sim)?;
    for run in &runs {
        for (rank, hit) in run.hits.iter().enumerate() {
            out.line(format!(
                "{}\t{}\t{}\t{:.6}",
                run.query_id,
                rank + 1,
                hit.doc_id,
                hit.score
            ));
        }
    }
    out.report.result = Some(json!({ "rankings": runs }));
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "queries": path_json(&a.queries),
        "corpus": path_json(&a.corpus),
        "qrels": path_json(&a.qrels),
        "k": a.eval.k,
        "sim": a.eval.sim,
    });
    let queries = io::read_matrix(&a.queries)?;
    let corpus = io::read_matrix(&a.corpus)?;
    let qrels = io::read_qrels(&a.qrels)?;
    let report = evaluate_run(&queries, &corpus, &qrels, a.eval.k, a.eval.sim)?;
    metrics_text(out, "eval", &report);
    out.report.metrics = Some(report);
    Ok(())
}

fn cmd_zerodr(a: &ZerodrArgs, out: &mut Outcome) -> Result<()> {
    out.report.mode = Some("zerodr".into());
    out.report.config = json!({
        "questions": path_json(&a.inputs.questions),
        "answers": path_json(&a.inputs.answers),
        "pairs": path_json(&a.inputs.pairs),
        "queries": path_json(&a.queries),
        "corpus": path_json(&a.corpus),
        "qrels": path_json(&a.qrels),
        "domain": a.domain,
        "store": a.store.store.as_deref().map(path_json),
        "lambda": a.solver.lambda,
        "ridge": ridge_json(a.solver.ridge),
        "side": a.side,
        "k": a.eval.k,
        "sim": a.eval.sim,
        "dataset_id": a.dataset_id,
        "force": a.force,
        "out_dir": a.out_dir.as_deref().map(path_json),
    });
    let root = match &a.domain {
        Some(_) => Some(store_root(&a.store)?),
        None => None,
    };
    let bundle = TestBundle {
        queries: io::read_matrix(&a.queries)?,
        corpus: io::read_matrix(&a.corpus)?,
        qrels: io::read_qrels(&a.qrels)?,
    };
    let (op, _) = fit_operator(&a.inputs, &a.solver, a.side, &a.dataset_id)?;
    if let (Some(root), Some(domain)) = (&root, &a.domain) {
        io::save_operator(root, domain, &op, a.force)?;
    }
    out.report.operator_meta = Some(op.meta().clone());
    operator_text(out, &op);

    let eval = eval_settings(&a.eval);
    let baseline = evaluate_uncalibrated(&bundle, &eval)?;
    let cal = calibrate(&CalibrationRequest {
        operator: &op,
        queries: Some(&bundle.queries),
        corpus: Some(&bundle.corpus),
        side: a.side,
    })?;
    let queries = cal.queries.expect("queries were supplied");
    let corpus = cal.corpus.expect("corpus was supplied");
    let report = evaluate_run(&queries, &corpus, &bundle.qrels, eval.k, eval.similarity)?;
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_matrix(&dir.join("queries.dred"), &queries)?;
        io::write_matrix(&dir.join("corpus.dred"), &corpus)?;
    }
    metrics_text(out, "uncalibrated", &baseline);
    metrics_text(out, "calibrated", &report);
    out.report.result = Some(json!({
        "uncalibrated": baseline.means,
        "delta_norm": op.delta_norm(),
    }));
    out.report.metrics = Some(report);
    Ok(())
}

fn synth_spec(s: &SynthOpts) -> Result<SynthSpec> {
    let seed = s
        .seed
        .ok_or_else(|| Error::InvalidConfig("--seed is required for synthetic data".into()))?;
    let spec = SynthSpec {
        seed,
        n_train: s.n_train,
        n_test: s.n_test,
        n_corpus: s.n_corpus,
        d: s.d,
        shift: s.shift,
        noise_sigma: s.noise,
    };
    spec.validate()?;
    Ok(spec)
}

fn synth_json(s: &SynthOpts) -> Value {
    json!({
        "seed": s.seed,
        "d": s.d,
        "n_train": s.n_train,
        "n_test": s.n_test,
        "n_corpus": s.n_corpus,
        "shift": s.shift,
        "noise": s.noise,
    })
}

fn source_json(src: &DataSource) -> Value {
    match &src.data {
        Some(dir) => json!({ "data": path_json(dir) }),
        None => json!({ "synth": synth_json(&src.synth) }),
    }
}

fn load_source(src: &DataSource) -> Result<(QaPairSet, TestBundle)> {
    match &src.data {
        Some(dir) => read_domain(dir),
        None => {
            let domain = generate_synthetic_domain(&synth_spec(&src.synth)?)?;
            Ok((domain.train, domain.test))
        }
    }
}

fn cmd_bench(a: &BenchArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "source": source_json(&a.source),
        "lambda": a.lambda,
        "gd_steps": a.gd_steps,
        "repeats": a.repeats,
        "threads": 1,
    });
    let (pairs, _) = load_source(&a.source)?;
    let cfg = BenchConfig {
        lambda: a.lambda,
        gd_steps: a.gd_steps,
        repeats: a.repeats,
    };
    let t = bench_fit(&pairs, &cfg)?;
    out.line(format!(
        "n={} d={} lambda={} gd_steps={} repeats={}",
        t.n, t.d, t.lambda, t.gd_steps, t.repeats
    ));
    out.line(format!("fit        {:>12.6} s", t.fit_seconds));
    out.line(format!("calibrate  {:>12.6} s", t.calibrate_seconds));
    out.line(format!("gd oracle  {:>12.6} s", t.oracle_seconds));
    out.line(format!("speedup    {:>12.1} x", t.speedup));
    out.report.timing = Some(t);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "source": source_json(&a.source),
        "grid": a.grid,
        "ridge": ridge_json(a.ridge),
        "side": a.side,
        "k": a.eval.k,
        "sim": a.eval.sim,
    });
    let (pairs, bundle) = load_source(&a.source)?;
    let base = SolverConfig::new(1.0).with_ridge(a.ridge).with_side(a.side);
    let eval = eval_settings(&a.eval);
    let baseline = evaluate_uncalibrated(&bundle, &eval)?;
    let rows = lambda_sweep(&pairs, &bundle, &a.grid, &base, &eval)?;
    let k = a.eval.k;
    out.line(format!("uncalibrated nDCG@{k} {:.4}", baseline.means.ndcg));
    out.line(format!(
        "{:>12}  {:>9}  {:>9}  {:>9}  {:>12}",
        "lambda",
        format!("nDCG@{k}"),
        format!("MAP@{k}"),
        format!("R@{k}"),
        "|dW|_F"
    ));
    for r in &rows {
        out.line(format!(
            "{:>12}  {:>9.4}  {:>9.4}  {:>9.4}  {:>12.6}",
            r.lambda, r.ndcg, r.map, r.recall, r.delta_norm
        ));
    }
    out.report.result = Some(json!({ "uncalibrated": baseline.means, "rows": rows }));
    Ok(())
}

fn cmd_scale(a: &ScaleArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "synth": synth_json(&a.synth),
        "sizes": a.sizes,
        "lambda": a.solver.lambda,
        "ridge": ridge_json(a.solver.ridge),
        "side": a.side,
        "k": a.eval.k,
        "sim": a.eval.sim,
    });
    let spec = synth_spec(&a.synth)?;
    let solver = SolverConfig::new(a.solver.lambda)
        .with_ridge(a.solver.ridge)
        .with_side(a.side);
    let rows = data_scaling_run(&spec, &a.sizes, &solver, &eval_settings(&a.eval))?;
    let k = a.eval.k;
    let mut header = String::new();
    let _ = write!(
        header,
        "{:>8}  {:>14}  {:>14}",
        "n",
        format!("base nDCG@{k}"),
        format!("cal nDCG@{k}")
    );
    out.line(header);
    for r in &rows {
        out.line(format!(
            "{:>8}  {:>14.4}  {:>14.4}",
            r.n, r.ndcg_uncalibrated, r.ndcg_calibrated
        ));
    }
    out.report.result = Some(json!({ "rows": rows }));
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut Outcome) -> Result<()> {
    out.report.config = json!({
        "synth": synth_json(&a.synth),
        "out": path_json(&a.out),
    });
    let spec = synth_spec(&a.synth)?;
    let domain = generate_synthetic_domain(&spec)?;
    write_domain(&a.out, &domain)?;
    out.report.result = Some(json!({
        "out": path_json(&a.out),
        "train_pairs": domain.train.len(),
        "test_queries": domain.test.queries.rows(),
        "corpus_rows": domain.test.corpus.rows(),
        "qrels": domain.test.qrels.len(),
    }));
    out.line(format!(
        "wrote {} ({} train pairs, {} test queries, {} corpus rows)",
        a.out.display(),
        domain.train.len(),
        domain.test.queries.rows(),
        domain.test.corpus.rows()
    ));
    Ok(())
}

fn cmd_store(c: &StoreCommand, out: &mut Outcome) -> Result<()> {
    match c {
        StoreCommand::List(store) => {
            out.report.config = json!({ "store": store.store.as_deref().map(path_json) });
            let entries = io::list_operators(&store_root(store)?)?;
            for e in &entries {
                out.line(format!(
                    "{:<24} d={:<5} n_pairs={:<8} lambda={:<8} side={:<2} |dW|_F={:.6}",
                    e.domain_id,
                    e.meta.d,
                    e.meta.n_pairs,
                    e.meta.lambda,
                    e.meta.edit_side.as_str(),
                    e.delta_norm
                ));
            }
            let list: Vec<Value> = entries
                .iter()
                .map(|e| {
                    json!({
                        "domain_id": e.domain_id,
                        "operator_path": path_json(&e.operator_path),
                        "delta_norm": e.delta_norm,
                        "meta": e.meta,
                    })
                })
                .collect();
            out.report.result = Some(json!({ "operators": list }));
        }
        StoreCommand::Show { domain, store } => {
            out.report.config =
                json!({ "domain": domain, "store": store.store.as_deref().map(path_json) });
            let op = io::load_operator(&store_root(store)?, domain)?;
            operator_text(out, &op);
            out.report.result = Some(json!({ "domain": domain, "delta_norm": op.delta_norm() }));
            out.report.operator_meta = Some(op.meta().clone());
        }
        StoreCommand::Rm { domain, store } => {
            out.report.config =
                json!({ "domain": domain, "store": store.store.as_deref().map(path_json) });
            io::remove_operator(&store_root(store)?, domain)?;
            out.report.result = Some(json!({ "removed": domain }));
            out.line(format!("removed {domain}"));
        }
    }
    Ok(())
}
