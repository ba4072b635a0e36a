//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

pub mod naive;

use dredit::{EmbeddingMatrix, QaPairSet};
use nalgebra::DMatrix;
use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct TestRng(Xoshiro256PlusPlus);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u1, u2) = (self.uniform(), self.uniform());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, bound: usize) -> usize {
        (self.0.next_u64() % bound as u64) as usize
    }

    pub fn normals_f32(&mut self, count: usize) -> Vec<f32> {
        (0..count).map(|_| self.normal() as f32).collect()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| scale * self.normal())
    }

    /// Small integers in `-range..=range`, which make score ties likely.
    pub fn small_ints(&mut self, count: usize, range: i32) -> Vec<f32> {
        let span = (2 * range + 1) as usize;
        (0..count)
            .map(|_| (self.below(span) as i32 - range) as f32)
            .collect()
    }

    /// Pairs whose questions are a noisy linear image of the answers.
    pub fn shifted_pairs(&mut self, n: usize, d: usize) -> QaPairSet {
        let shift = DMatrix::identity(d, d) + self.matrix(d, d, 0.5 / (d as f64).sqrt());
        let answers = self.matrix(n, d, 1.0);
        let questions = &answers * &shift + self.matrix(n, d, 0.1);
        pair_set(&questions, &answers)
    }
}

pub fn to_f32(m: &DMatrix<f64>) -> Vec<f32> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)] as f32);
        }
    }
    out
}

pub fn pair_set(questions: &DMatrix<f64>, answers: &DMatrix<f64>) -> QaPairSet {
    QaPairSet::from_rows(questions.ncols(), to_f32(questions), to_f32(answers)).unwrap()
}

pub fn embeddings(prefix: &str, rows: usize, dim: usize, data: Vec<f32>) -> EmbeddingMatrix {
    let ids = (0..rows).map(|i| format!("{prefix}{i}")).collect();
    EmbeddingMatrix::new(ids, dim, data).unwrap()
}

pub fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
