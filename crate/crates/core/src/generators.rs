//! Deterministic generators for problem families with several risk
//! minimizers.
//!
//! Each family puts the target at zero and arranges the class so that the
//! whole class (or a designed part of it) attains the minimal risk, which is
//! what makes empirical risk minimization fragile: the sample, not the
//! distribution, decides among the minimizers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::{LearningProblem, ProbabilitySpace, SimpleFunction};
use crate::random::{self, tag};

/// Attempts allowed per sphere function before generation fails.
pub const SPHERE_REJECTION_BUDGET: u32 = 10_000;

/// A problem family with its parameters, as named in run configs.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec {
    TwoPoint { a: f64, b: f64 },
    Simplex { d: usize, c: f64 },
    Sphere { atoms: usize, m: usize, rho: f64, min_sep: f64, seed: u64 },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<LearningProblem> {
        match *self {
            Self::TwoPoint { a, b } => gen_two_point(a, b),
            Self::Simplex { d, c } => gen_simplex(d, c),
            Self::Sphere { atoms, m, rho, min_sep, seed } => {
                gen_sphere(atoms, m, rho, min_sep, seed)
            }
        }
    }

    /// Stable identifier used in CSV rows.
    pub fn id(&self) -> String {
        match *self {
            Self::TwoPoint { a, b } => format!("two_point(a={a},b={b})"),
            Self::Simplex { d, c } => format!("simplex(d={d},c={c})"),
            Self::Sphere { atoms, m, rho, min_sep, seed } => {
                format!("sphere(atoms={atoms},m={m},rho={rho},min_sep={min_sep},seed={seed})")
            }
        }
    }
}

/// Two functions on two uniform atoms, mirror images of each other, target
/// zero. Both have risk `(a^2 + b^2) / 2`; exactly one excess loss is
/// nonzero.
pub fn gen_two_point(a: f64, b: f64) -> Result<LearningProblem> {
    if !a.is_finite() || !b.is_finite() || a.abs() > 1.0 || b.abs() > 1.0 {
        return Err(Error::Invalid(format!("two_point values a={a}, b={b} must lie in [-1, 1]")));
    }
    if a == b || a == -b {
        return Err(Error::Invalid(format!(
            "two_point with a={a}, b={b} collapses: the two functions must differ in norm pattern"
        )));
    }
    let space = ProbabilitySpace::uniform(2)?;
    let class = vec![
        SimpleFunction::new(vec![a, b]),
        SimpleFunction::new(vec![b, a]),
    ];
    LearningProblem::new(space, class, SimpleFunction::zero(2), 0)
}

/// `d` scaled atom indicators on `d` uniform atoms, target zero. All
/// functions have risk `c^2 / d`.
pub fn gen_simplex(d: usize, c: f64) -> Result<LearningProblem> {
    if d < 2 {
        return Err(Error::Invalid(format!("simplex needs d >= 2, got {d}")));
    }
    if !c.is_finite() || c <= 0.0 || c > 1.0 {
        return Err(Error::Invalid(format!("simplex scale c={c} must lie in (0, 1]")));
    }
    let space = ProbabilitySpace::uniform(d)?;
    let class = (0..d)
        .map(|i| {
            let mut values = vec![0.0; d];
            values[i] = c;
            SimpleFunction::new(values)
        })
        .collect();
    LearningProblem::new(space, class, SimpleFunction::zero(d), 0)
}

/// `m` functions at L2 distance exactly `rho` from the zero target, pairwise
/// at least `min_sep` apart, on a uniform space. Candidates draw uniform
/// values per atom, are centered under the uniform measure, and rescaled to
/// land on the radius-`rho` sphere; draws leaving the unit sup-norm ball or
/// crowding an accepted function are rejected.
pub fn gen_sphere(
    atoms: usize,
    m: usize,
    rho: f64,
    min_sep: f64,
    seed: u64,
) -> Result<LearningProblem> {
    if atoms < 2 {
        return Err(Error::Invalid(format!("sphere needs atoms >= 2, got {atoms}")));
    }
    if m < 2 {
        return Err(Error::Invalid(format!(
            "sphere needs m >= 2 functions to have multiple minimizers, got {m}"
        )));
    }
    if !rho.is_finite() || rho <= 0.0 || rho > 1.0 {
        return Err(Error::Invalid(format!("sphere radius rho={rho} must lie in (0, 1]")));
    }
    if !min_sep.is_finite() || min_sep <= 0.0 {
        return Err(Error::Invalid(format!("sphere min_sep={min_sep} must be positive")));
    }

    let space = ProbabilitySpace::uniform(atoms)?;
    let mut rng = random::trial_rng(random::derive_seed(seed, tag::SPHERE_GEN), 0);
    let mut accepted: Vec<SimpleFunction> = Vec::with_capacity(m);

    for index in 0..m {
        let mut attempts = 0u32;
        let candidate = loop {
            if attempts >= SPHERE_REJECTION_BUDGET {
                return Err(Error::RejectionBudget {
                    attempts,
                    seed,
                    detail: format!(
                        "sphere function {index} (atoms={atoms}, m={m}, rho={rho}, min_sep={min_sep})"
                    ),
                });
            }
            attempts += 1;

            let raw: Vec<f64> = (0..atoms).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let mean = raw.iter().sum::<f64>() / atoms as f64;
            let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            let norm = (centered.iter().map(|v| v * v).sum::<f64>() / atoms as f64).sqrt();
            if norm < 1e-12 {
                continue;
            }
            let scale = rho / norm;
            let candidate = SimpleFunction::new(centered.iter().map(|v| v * scale).collect());
            if candidate.sup_norm() > 1.0 {
                continue;
            }
            let separated = accepted.iter().all(|f| {
                space
                    .distance(f, &candidate)
                    .expect("candidates share the space dimension")
                    >= min_sep
            });
            if separated {
                break candidate;
            }
        };
        accepted.push(candidate);
    }

    LearningProblem::new(space, accepted, SimpleFunction::zero(atoms), 0)
}
