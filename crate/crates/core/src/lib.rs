//! A simulation laboratory for empirical risk minimization on finite
//! probability spaces.
//!
//! The library constructs small learning problems whose risk minimizer is
//! not unique, perturbs the regression target toward a designated oracle,
//! and measures how often ERM lands a constant times `1/sqrt(n)` away from
//! the best risk. The moving parts: exact risks and excess losses on finite
//! spaces ([`measure`]), problem generators ([`generators`]), the canonical
//! Gaussian process over excess losses and its supremum expectation
//! ([`gaussian`]), sampling and empirical processes ([`empirical`]), and the
//! experiment harnesses with their tuning rules ([`theorems`]). Everything
//! random is a pure function of a master seed, independent of thread count.

pub mod empirical;
pub mod error;
pub mod gaussian;
pub mod generators;
pub mod measure;
pub mod random;
pub mod theorems;

pub use empirical::{
    draw_sample, draw_sample_stream, empirical_excess_risk, empirical_mean, erm, estimate_osc,
    estimate_osc_pairs, symmetrization_ratio, ErmResult, OscillationEstimate, Sample,
    SymmetrizationEstimate, TieRule,
};
pub use error::{Error, Result};
pub use gaussian::{
    closed_form_h_pair, concentration_probe, estimate_h, psd_lower_factor, sample_gp,
    ExcessLossSet, PsdFactor, SupremumEstimate,
};
pub use generators::{gen_simplex, gen_sphere, gen_two_point, GeneratorSpec};
pub use measure::{
    sup_norm_shift_bound, Geometry, LearningProblem, ProbabilitySpace, SimpleFunction,
};
pub use theorems::{
    binomial_oracle_two_point, calibrate_delta, choose_lambda_n, choose_r_n, erm_run, h_for_set,
    seeds, simulate_trials, theorem1_experiment, theorem2_check, theorem3_experiment,
    theorem4_experiment, two_point_pick_rate, BallReport, Constants, CrossingMode,
    DeltaCalibration, ErmRunReport, ExperimentReport, InfimumReport, RatioReport, RatioRow,
    SweepRow, TrialRecord,
};
