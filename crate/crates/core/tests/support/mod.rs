#![allow(dead_code)]

pub mod gradients;
pub mod diagnostics_oracle;
pub mod small_mdp;

use opac_core::diffcore::Matrix;
use opac_core::seeding::Rng;
use rand::Rng as _;

pub fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
