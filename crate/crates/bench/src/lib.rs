//! Shared fixtures for the benchmark suite.

use ermlab_core::{gen_simplex, gen_sphere, gen_two_point, LearningProblem};

/// The reference two-point problem.
pub fn two_point() -> LearningProblem {
    gen_two_point(1.0, 0.0).expect("reference parameters are valid")
}

/// The four-atom simplex problem.
pub fn simplex4() -> LearningProblem {
    gen_simplex(4, 1.0).expect("reference parameters are valid")
}

/// The seeded sphere fixture used across the experiment suite.
pub fn sphere_fixture() -> LearningProblem {
    gen_sphere(8, 5, 0.25, 0.1, 42).expect("reference parameters are valid")
}
