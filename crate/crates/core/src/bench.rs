//! Synthetic domain-shift data, timing runs, λ sweeps and data-scaling runs.
//!
//! # Synthetic generator
//!
//! All randomness comes from xoshiro256++ seeded with SplitMix64 from the
//! spec seed (`Xoshiro256PlusPlus::seed_from_u64`). Independent streams are
//! obtained by cloning the base generator and calling `jump()` (2^128 steps)
//! `k` times for stream `k`:
//!
//! | stream | draws |
//! |--------|-------|
//! | 0 | shift matrix |
//! | 1 | training pairs |
//! | 2 | test pairs |
//! | 3 | corpus distractors |
//! | 4 | subsampling in [`data_scaling_run`] |
//!
//! A uniform `u ∈ (0, 1]` is `((x >> 11) + 1) · 2^-53` for the next `u64`
//! `x`. A standard normal consumes two uniforms `u1, u2` and is
//! `sqrt(-2 ln u1) · cos(2π (u2 − 2^-53))`.
//!
//! Each pair draws `d` normals for the answer row `a`, then `d` normals for
//! the noise row `e`; the question is `q = a · M + σ e`. Distractors draw
//! `d` normals each. The shift matrix `M` is the identity, `I + (2/√d) G`
//! for `RandomLinear`, or the row-wise Gram–Schmidt orthonormalization of
//! `G` for `Rotation`, where `G` holds `d × d` normals in row-major order.
//! Values are generated in `f64` and rounded to `f32` on storage.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::apply_operator;
use crate::error::{Error, Result};
use crate::eval::QrelSet;
use crate::io::{self, PairAlignment};
use crate::matrix::{EmbeddingMatrix, QaPairSet};
use crate::pipeline::{evaluate_calibrated, evaluate_uncalibrated, EvalSettings, TestBundle};
use crate::solver::{
    accumulate_grams, gd_oracle_solve, solve_edit_operator, GdConfig, SolverConfig,
};

/// Off-diagonal scale of the `RandomLinear` shift, before dividing by `√d`.
pub const RANDOM_LINEAR_SCALE: f64 = 2.0;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Shift {
    Rotation,
    #[default]
    RandomLinear,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Total corpus size: the `n_test` generating answers plus distractors.
    pub n_corpus: usize,
    pub d: usize,
    pub shift: Shift,
    pub noise_sigma: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSpec(m));
        if self.d == 0 {
            return fail("d must be >= 1".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return fail("n_train and n_test must be >= 1".into());
        }
        if self.n_corpus < self.n_test {
            return fail(format!(
                "n_corpus ({}) must be >= n_test ({})",
                self.n_corpus, self.n_test
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        Ok(())
    }
}

struct Gaussian(Xoshiro256PlusPlus);

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

impl Gaussian {
    fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 * UNIT
    }

    fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform() - UNIT;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn row(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `[0, bound)` by multiply-shift.
    fn below(&mut self, bound: usize) -> usize {
        ((u128::from(self.0.next_u64()) * bound as u128) >> 64) as usize
    }
}

fn stream(seed: u64, index: usize) -> Gaussian {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..index {
        rng.jump();
    }
    Gaussian(rng)
}

fn shift_matrix(spec: &SynthSpec) -> DMatrix<f64> {
    let d = spec.d;
    let mut rng = stream(spec.seed, 0);
    match spec.shift {
        Shift::Identity => DMatrix::identity(d, d),
        Shift::RandomLinear => {
            let g = DMatrix::from_row_slice(d, d, &rng.row(d * d));
            DMatrix::identity(d, d) + g * (RANDOM_LINEAR_SCALE / (d as f64).sqrt())
        }
        Shift::Rotation => {
            let mut rows: Vec<Vec<f64>> = (0..d).map(|_| rng.row(d)).collect();
            for i in 0..d {
                for j in 0..i {
                    let proj: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    let (head, tail) = rows.split_at_mut(i);
                    for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                        *x -= proj * y;
                    }
                }
                let norm = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
                rows[i].iter_mut().for_each(|x| *x /= norm);
            }
            DMatrix::from_row_iterator(d, d, rows.into_iter().flatten())
        }
    }
}

/// Draws `n` (question, answer) rows as `f32` payloads.
fn draw_pairs(
    rng: &mut Gaussian,
    n: usize,
    shift: &DMatrix<f64>,
    sigma: f64,
) -> (Vec<f32>, Vec<f32>) {
    let d = shift.nrows();
    let mut questions = Vec::with_capacity(n * d);
    let mut answers = Vec::with_capacity(n * d);
    for _ in 0..n {
        let a = rng.row(d);
        let e = rng.row(d);
        for j in 0..d {
            let mut q = sigma * e[j];
            for (k, ak) in a.iter().enumerate() {
                q += ak * shift[(k, j)];
            }
            questions.push(q as f32);
        }
        answers.extend(a.iter().map(|&v| v as f32));
    }
    (questions, answers)
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A generated domain: training pairs plus a held-out retrieval task.
#[derive(Debug, Clone)]
pub struct SynthDomain {
    pub spec: SynthSpec,
    pub train_questions: EmbeddingMatrix,
    pub train_answers: EmbeddingMatrix,
    pub alignment: PairAlignment,
    pub train: QaPairSet,
    pub test: TestBundle,
}

/// Generates the domain described by `spec`; a pure function of the spec.
///
/// Ids: training questions `tq{i}`, training answers `ta{i}`, test queries
/// `q{i}`, their answers `d{i}` and distractors `x{j}`. Qrels mark `d{i}`
/// relevant (grade 1) for `q{i}`. The corpus lists the test answers first.
pub fn generate_synthetic_domain(spec: &SynthSpec) -> Result<SynthDomain> {
    spec.validate()?;
    let d = spec.d;
    let shift = shift_matrix(spec);
    let (train_q, train_a) = draw_pairs(
        &mut stream(spec.seed, 1),
        spec.n_train,
        &shift,
        spec.noise_sigma,
    );
    let (test_q, test_a) = draw_pairs(
        &mut stream(spec.seed, 2),
        spec.n_test,
        &shift,
        spec.noise_sigma,
    );
    let n_distractors = spec.n_corpus - spec.n_test;
    let mut rng = stream(spec.seed, 3);
    let mut corpus_data = test_a;
    corpus_data.reserve(n_distractors * d);
    for _ in 0..n_distractors * d {
        corpus_data.push(rng.normal() as f32);
    }

    let train_questions = EmbeddingMatrix::new(ids("tq", spec.n_train), d, train_q)?;
    let train_answers = EmbeddingMatrix::new(ids("ta", spec.n_train), d, train_a)?;
    let alignment = PairAlignment::new(
        train_questions
            .ids()
            .iter()
            .cloned()
            .zip(train_answers.ids().iter().cloned())
            .collect(),
    );
    let train = QaPairSet::from_matrices(&train_questions, &train_answers)?;

    let mut corpus_ids = ids("d", spec.n_test);
    corpus_ids.extend(ids("x", n_distractors));
    let corpus = EmbeddingMatrix::new(corpus_ids, d, corpus_data)?;
    let queries = EmbeddingMatrix::new(ids("q", spec.n_test), d, test_q)?;
    let mut qrels = QrelSet::new();
    for i in 0..spec.n_test {
        qrels.insert(format!("q{i}"), format!("d{i}"), 1);
    }
    Ok(SynthDomain {
        spec: spec.clone(),
        train_questions,
        train_answers,
        alignment,
        train,
        test: TestBundle {
            queries,
            corpus,
            qrels,
        },
    })
}

/// File names used by [`write_domain`] / [`read_domain`].
pub mod layout {
    pub const SPEC: &str = "spec.json";
    pub const TRAIN_QUESTIONS: &str = "train_questions.dred";
    pub const TRAIN_ANSWERS: &str = "train_answers.dred";
    pub const TRAIN_PAIRS: &str = "train_pairs.jsonl";
    pub const TEST_QUERIES: &str = "test_queries.dred";
    pub const CORPUS: &str = "corpus.dred";
    pub const QRELS: &str = "qrels.jsonl";
}

pub fn write_domain(dir: &Path, domain: &SynthDomain) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_matrix(&dir.join(layout::TRAIN_QUESTIONS), &domain.train_questions)?;
    io::write_matrix(&dir.join(layout::TRAIN_ANSWERS), &domain.train_answers)?;
    io::write_pairs(&dir.join(layout::TRAIN_PAIRS), &domain.alignment)?;
    io::write_matrix(&dir.join(layout::TEST_QUERIES), &domain.test.queries)?;
    io::write_matrix(&dir.join(layout::CORPUS), &domain.test.corpus)?;
    io::write_qrels(&dir.join(layout::QRELS), &domain.test.qrels)?;
    let spec = serde_json::to_vec_pretty(&domain.spec).expect("spec serializes");
    io::dred::write_atomic(&dir.join(layout::SPEC), &spec)
}

/// Training pairs and test bundle from a directory in the [`layout`] format.
pub fn read_domain(dir: &Path) -> Result<(QaPairSet, TestBundle)> {
    let questions = io::read_matrix(&dir.join(layout::TRAIN_QUESTIONS))?;
    let answers = io::read_matrix(&dir.join(layout::TRAIN_ANSWERS))?;
    let alignment = io::read_pairs(&dir.join(layout::TRAIN_PAIRS))?;
    let pairs = QaPairSet::from_alignment(&questions, &answers, &alignment)?;
    let bundle = TestBundle {
        queries: io::read_matrix(&dir.join(layout::TEST_QUERIES))?,
        corpus: io::read_matrix(&dir.join(layout::CORPUS))?,
        qrels: io::read_qrels(&dir.join(layout::QRELS))?,
    };
    Ok((pairs, bundle))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchConfig {
    pub lambda: f64,
    pub gd_steps: usize,
    /// Each timing is the median over this many runs.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    /// Gram accumulation plus closed-form solve.
    pub fit_seconds: f64,
    /// Applying the fitted operator to the training questions.
    pub calibrate_seconds: f64,
    /// Gradient-descent oracle with `gd_steps` full-batch steps.
    pub oracle_seconds: f64,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub gd_steps: usize,
    pub repeats: usize,
    /// `oracle_seconds / fit_seconds`
    pub speedup: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64().max(1e-9)))
}

/// Times closed-form fitting against the gradient-descent oracle.
///
/// All timed work runs on the calling thread.
pub fn bench_fit(pairs: &QaPairSet, cfg: &BenchConfig) -> Result<TimingReport> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    let solver = SolverConfig::new(cfg.lambda);
    solver.validate()?;
    let questions = EmbeddingMatrix::with_index_ids(pairs.dim(), pairs.questions().to_vec())?;
    let gd = GdConfig::new(cfg.lambda).with_steps(cfg.gd_steps);
    let (mut fit_t, mut cal_t, mut gd_t) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.repeats {
        let (op, t) = timed(|| {
            let grams = accumulate_grams(pairs)?;
            solve_edit_operator(&grams, &solver)
        })?;
        fit_t.push(t);
        let (_, t) = timed(|| apply_operator(&op, &questions))?;
        cal_t.push(t);
        let (_, t) = timed(|| gd_oracle_solve(pairs, &gd))?;
        gd_t.push(t);
    }
    let fit_seconds = median(fit_t);
    let oracle_seconds = median(gd_t);
    Ok(TimingReport {
        fit_seconds,
        calibrate_seconds: median(cal_t),
        oracle_seconds,
        n: pairs.len(),
        d: pairs.dim(),
        lambda: cfg.lambda,
        gd_steps: cfg.gd_steps,
        repeats: cfg.repeats,
        speedup: oracle_seconds / fit_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub ndcg: f64,
    pub map: f64,
    pub recall: f64,
    pub delta_norm: f64,
}

/// One fit/calibrate/evaluate per grid point; rows follow grid order.
pub fn lambda_sweep(
    pairs: &QaPairSet,
    bundle: &TestBundle,
    grid: &[f64],
    base: &SolverConfig,
    eval: &EvalSettings,
) -> Result<Vec<SweepRow>> {
    let grams = accumulate_grams(pairs)?;
    grid.par_iter()
        .map(|&lambda| {
            let cfg = SolverConfig { lambda, ..*base };
            let op = solve_edit_operator(&grams, &cfg)?;
            let report = evaluate_calibrated(&op, bundle, eval)?;
            Ok(SweepRow {
                lambda,
                ndcg: report.means.ndcg,
                map: report.means.map,
                recall: report.means.recall,
                delta_norm: op.delta_norm(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub ndcg_uncalibrated: f64,
    pub ndcg_calibrated: f64,
}

/// Seeded subsample of `size` pair indices (sorted), drawn from stream 4.
fn subsample(seed: u64, n: usize, size: usize) -> Vec<usize> {
    if size == n {
        return (0..n).collect();
    }
    let mut rng = stream(seed, 4);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(size);
    idx.sort_unstable();
    idx
}

/// Fits on seeded subsamples of the training pairs and evaluates each on the same test bundle.
pub fn data_scaling_run(
    spec: &SynthSpec,
    sizes: &[usize],
    solver: &SolverConfig,
    eval: &EvalSettings,
) -> Result<Vec<ScalingRow>> {
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > spec.n_train) {
        return Err(Error::InvalidSpec(format!(
            "subsample size {bad} outside 1..={}",
            spec.n_train
        )));
    }
    let domain = generate_synthetic_domain(spec)?;
    let baseline = evaluate_uncalibrated(&domain.test, eval)?.means.ndcg;
    sizes
        .par_iter()
        .map(|&size| {
            let pairs = domain
                .train
                .select(&subsample(spec.seed, spec.n_train, size));
            let grams = accumulate_grams(&pairs)?;
            let op = solve_edit_operator(&grams, solver)?;
            let report = evaluate_calibrated(&op, &domain.test, eval)?;
            Ok(ScalingRow {
                n: size,
                ndcg_uncalibrated: baseline,
                ndcg_calibrated: report.means.ndcg,
            })
        })
        .collect()
}
