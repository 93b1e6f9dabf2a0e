//! The canonical Gaussian process indexed by a finite excess-loss set.
//!
//! For minimizers f the excess losses q = L(f) are mean zero, and the
//! centered Gaussian family (G_q) with E G_q G_p = <q, p> is simulated by
//! factoring the Gram matrix as L L^T and mapping standard normal vectors
//! through L. The complexity H(Q') = E sup_q G_q is estimated by Monte
//! Carlo; for a two-element set it has the closed form sigma / sqrt(2 pi).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::measure::LearningProblem;
use crate::measure::SimpleFunction;
use crate::random::{map_trials, mean_stderr, trial_rng};

/// Tolerance on the mean of each excess loss in the set.
const MEAN_ZERO_TOL: f64 = 1e-10;
/// Floor on the smallest Gram eigenvalue accepted at construction.
const GRAM_EIGEN_FLOOR: f64 = -1e-9;
/// Jitter ladder for the Gram factorization, tried after the exact attempt.
const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// An ordered excess-loss set Q' with its Gram matrix. Element 0 is always
/// the zero function, so suprema over the indexed process are nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcessLossSet {
    elements: Vec<SimpleFunction>,
    gram: DMatrix<f64>,
}

impl ExcessLossSet {
    /// Builds Q' from the full minimizer set of the problem.
    pub fn from_problem(problem: &LearningProblem) -> Result<Self> {
        Self::from_subset(problem, &problem.minimizer_set())
    }

    /// Builds Q' from the excess losses of the given minimizers. The zero
    /// function occupies slot 0; zero excess losses (the oracle's own) are
    /// not duplicated.
    pub fn from_subset(problem: &LearningProblem, subset: &[usize]) -> Result<Self> {
        let minimizers = problem.minimizer_set();
        let mut indices: Vec<usize> = subset.to_vec();
        indices.sort_unstable();
        indices.dedup();
        for &i in &indices {
            if !minimizers.contains(&i) {
                return Err(Error::Invalid(format!(
                    "class index {i} is not in the minimizer set {minimizers:?}"
                )));
            }
        }

        let atoms = problem.space().atom_count();
        let mut elements = vec![SimpleFunction::zero(atoms)];
        for &i in &indices {
            let loss = problem.excess_loss(i);
            if !loss.is_zero() {
                elements.push(loss);
            }
        }

        for (j, q) in elements.iter().enumerate() {
            let mean = problem.space().mean(q)?;
            if mean.abs() > MEAN_ZERO_TOL {
                return Err(Error::Invalid(format!(
                    "excess loss {j} has mean {mean}, expected zero for a minimizer"
                )));
            }
        }

        let m = elements.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = problem.space().inner_product(&elements[i], &elements[j])?;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }

        let min_eig = smallest_eigenvalue(&gram);
        if min_eig < GRAM_EIGEN_FLOOR {
            return Err(Error::Numerical(format!(
                "gram matrix is not positive semidefinite: smallest eigenvalue {min_eig:e}"
            )));
        }

        Ok(Self { elements, gram })
    }

    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[SimpleFunction] {
        &self.elements
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// The largest L2 norm over the set.
    pub fn sigma_max(&self) -> f64 {
        (0..self.size())
            .map(|j| self.gram[(j, j)].sqrt())
            .fold(0.0, f64::max)
    }
}

/// Monte Carlo estimate of a Gaussian supremum expectation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupremumEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub sigma_max: f64,
}

/// A lower-triangular factor of a Gram matrix, with the diagonal jitter that
/// was needed to obtain it (0 when the exact matrix factors).
#[derive(Clone, Debug, PartialEq)]
pub struct PsdFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

/// Factors a symmetric positive semidefinite matrix as L L^T. The exact
/// matrix is attempted first, accepting zero pivots whose columns vanish, so
/// rank-deficient Grams built from exact inner products factor without any
/// perturbation. If that fails, diagonal jitter escalates from 1e-12 to 1e-6
/// by factors of 10.
pub fn psd_lower_factor(gram: &DMatrix<f64>) -> Result<PsdFactor> {
    if gram.nrows() != gram.ncols() {
        return Err(Error::DimensionMismatch { expected: gram.nrows(), got: gram.ncols() });
    }
    if let Some(lower) = try_factor(gram, 0.0) {
        return Ok(PsdFactor { lower, jitter: 0.0 });
    }
    for &jitter in &JITTER_LADDER {
        if let Some(lower) = try_factor(gram, jitter) {
            return Ok(PsdFactor { lower, jitter });
        }
    }
    let min_eig = smallest_eigenvalue(gram);
    Err(Error::Numerical(format!(
        "gram factorization failed at jitter {:e}: smallest eigenvalue {min_eig:e}",
        JITTER_LADDER[JITTER_LADDER.len() - 1],
    )))
}

fn try_factor(gram: &DMatrix<f64>, jitter: f64) -> Option<DMatrix<f64>> {
    let m = gram.nrows();
    let scale = 1.0 + (0..m).map(|j| gram[(j, j)].abs()).fold(0.0, f64::max);
    let zero_tol = scale * 1e-12;
    let column_tol = scale * 1e-9;
    let mut lower = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut pivot = gram[(j, j)] + jitter;
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        if pivot < -zero_tol {
            return None;
        }
        if pivot <= zero_tol {
            // Semidefinite pivot: the remaining column must vanish too, or
            // the matrix has a negative direction.
            for i in (j + 1)..m {
                let mut rest = gram[(i, j)];
                for k in 0..j {
                    rest -= lower[(i, k)] * lower[(j, k)];
                }
                if rest.abs() > column_tol {
                    return None;
                }
            }
        } else {
            let root = pivot.sqrt();
            lower[(j, j)] = root;
            for i in (j + 1)..m {
                let mut rest = gram[(i, j)];
                for k in 0..j {
                    rest -= lower[(i, k)] * lower[(j, k)];
                }
                lower[(i, j)] = rest / root;
            }
        }
    }
    Some(lower)
}

fn smallest_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    gram.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Draws `count` independent realizations of (G_{q_0}, ..., G_{q_{M-1}});
/// one draw per row. Trial i draws from substream i of `seed`, so the matrix
/// is reproducible and independent of the worker count.
pub fn sample_gp(set: &ExcessLossSet, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    let factor = psd_lower_factor(set.gram())?;
    let m = set.size();
    let rows = map_trials(count, |trial| {
        let mut rng = trial_rng(seed, trial);
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        &factor.lower * z
    });
    let mut draws = DMatrix::zeros(count, m);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..m {
            draws[(i, j)] = row[j];
        }
    }
    Ok(draws)
}

fn supremum_draws(set: &ExcessLossSet, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let factor = psd_lower_factor(set.gram())?;
    let m = set.size();
    Ok(map_trials(trials, |trial| {
        let mut rng = trial_rng(seed, trial);
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = &factor.lower * z;
        g.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Monte Carlo estimate of H(Q') = E sup_q G_q.
pub fn estimate_h(set: &ExcessLossSet, trials: usize, seed: u64) -> Result<SupremumEstimate> {
    if trials < 2 {
        return Err(Error::Invalid(format!("estimate_h needs trials >= 2, got {trials}")));
    }
    let sups = supremum_draws(set, trials, seed)?;
    let (mean, stderr) = mean_stderr(&sups);
    Ok(SupremumEstimate { mean, stderr, trials, sigma_max: set.sigma_max() })
}

/// Exact H for a two-element set {0, q}: sup(0, G_q) is a rectified normal
/// with mean sigma / sqrt(2 pi).
pub fn closed_form_h_pair(sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Invalid(format!("sigma must be a nonnegative real, got {sigma}")));
    }
    Ok(sigma / std::f64::consts::TAU.sqrt())
}

/// Estimates Pr(Z >= E Z / 4) for Z = sup_q G_q, plugging in the Monte Carlo
/// mean of the same draws for E Z. Returns exactly 1/2 when the estimated
/// mean is zero, the degenerate case where Z is symmetric around its mean.
pub fn concentration_probe(set: &ExcessLossSet, trials: usize, seed: u64) -> Result<f64> {
    if trials < 2 {
        return Err(Error::Invalid(format!(
            "concentration_probe needs trials >= 2, got {trials}"
        )));
    }
    let sups = supremum_draws(set, trials, seed)?;
    let mean = sups.iter().sum::<f64>() / trials as f64;
    if mean == 0.0 {
        return Ok(0.5);
    }
    let threshold = mean / 4.0;
    let hits = sups.iter().filter(|&&z| z >= threshold).count();
    Ok(hits as f64 / trials as f64)
}
