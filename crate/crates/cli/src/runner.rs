//! Executes a validated run configuration and renders the artifacts: one
//! CSV, one human-readable summary, and the list of violated in-run
//! assertions. Nothing here touches the filesystem; the caller decides
//! where bytes go, so a failed run never leaves partial output.

use std::fmt::Write as _;

use crate::config::{Experiment, RunConfig};
use ermlab_core::{
    concentration_probe, erm_run, estimate_h, estimate_osc, seeds, theorem1_experiment,
    theorem2_check, theorem3_experiment, theorem4_experiment, ExcessLossSet, LearningProblem,
    Result, TieRule,
};

/// The rendered outputs of a completed run.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub csv: String,
    pub summary: String,
    /// One message per violated assertion; empty means exit 0.
    pub assertion_failures: Vec<String>,
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn csv_row(fields: &[String]) -> String {
    let mut row = fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",");
    row.push('\n');
    row
}

macro_rules! fields {
    ($($value:expr),+ $(,)?) => {
        vec![$(format!("{}", $value)),+]
    };
}

struct RunOutput {
    csv: String,
    results: Vec<String>,
    failures: Vec<String>,
}

fn run_h_estimate(
    problem: &LearningProblem,
    problem_id: &str,
    trials: usize,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let set = ExcessLossSet::from_problem(problem)?;
    let gp_seed = seeds::h_seed(seed);
    let h = estimate_h(&set, trials, gp_seed)?;
    let probe = concentration_probe(&set, trials, gp_seed)?;

    let mut csv = csv_row(&fields![
        "problem_id",
        "set_size",
        "sigma_max",
        "trials",
        "h_mean",
        "h_stderr",
        "probe_p",
        "seed",
        "config_hash"
    ]);
    csv.push_str(&csv_row(&fields![
        problem_id,
        set.size(),
        set.sigma_max(),
        h.trials,
        h.mean,
        h.stderr,
        probe,
        seed,
        hash
    ]));

    let results = vec![
        format!("H estimate = {} (stderr {}, trials {})", h.mean, h.stderr, h.trials),
        format!("index set size = {}, sigma_max = {}", set.size(), set.sigma_max()),
        format!("concentration probe Pr(Z >= E Z / 4) = {probe}"),
    ];
    let mut failures = Vec::new();
    if probe < 0.05 {
        failures.push(format!("concentration probe {probe} is below the floor 0.05"));
    }
    Ok(RunOutput { csv, results, failures })
}

fn run_osc_estimate(
    problem: &LearningProblem,
    problem_id: &str,
    n_list: &[usize],
    delta_grid: &[f64],
    trials: usize,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let mut csv = csv_row(&fields![
        "problem_id",
        "n",
        "delta",
        "trials",
        "osc_mean",
        "osc_stderr",
        "seed",
        "config_hash"
    ]);
    let mut results = Vec::new();
    let center = problem.oracle_index();
    for &n in n_list {
        for &delta in delta_grid {
            let est = estimate_osc(problem, center, delta, n, trials, seeds::osc_seed(seed, n))?;
            csv.push_str(&csv_row(&fields![
                problem_id, n, delta, est.trials, est.mean, est.stderr, seed, hash
            ]));
            results.push(format!(
                "n={n} delta={delta}: osc = {} (stderr {})",
                est.mean, est.stderr
            ));
        }
    }
    Ok(RunOutput { csv, results, failures: Vec::new() })
}

fn run_erm(
    problem: &LearningProblem,
    problem_id: &str,
    n_list: &[usize],
    trials: usize,
    lambda_coeff: f64,
    tie_rule: TieRule,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let mut csv = csv_row(&fields![
        "problem_id",
        "n",
        "lambda",
        "trials",
        "p_nonzero_excess",
        "p_lo",
        "p_hi",
        "mean_excess",
        "sqrtn_mean_excess",
        "seed",
        "config_hash"
    ]);
    let mut results = Vec::new();
    for &n in n_list {
        let lambda = lambda_coeff / (n as f64).sqrt();
        let report = erm_run(problem, lambda, n, trials, seed, tie_rule)?;
        csv.push_str(&csv_row(&fields![
            problem_id,
            report.n,
            report.lambda,
            report.trials,
            report.p_nonzero_excess,
            report.p_lo,
            report.p_hi,
            report.mean_excess,
            report.sqrtn_mean_excess,
            seed,
            hash
        ]));
        results.push(format!(
            "n={n} lambda={lambda}: Pr[excess > 0] = {} in [{}, {}], sqrt(n) * mean excess = {}",
            report.p_nonzero_excess, report.p_lo, report.p_hi, report.sqrtn_mean_excess
        ));
    }
    Ok(RunOutput { csv, results, failures: Vec::new() })
}

const SWEEP_HEADER: [&str; 15] = [
    "problem_id",
    "n",
    "trials",
    "H_mean",
    "H_stderr",
    "delta",
    "lambda_n",
    "r_n",
    "p_fail",
    "p_lo",
    "p_hi",
    "mean_excess",
    "sqrtn_mean_excess",
    "seed",
    "config_hash",
];

#[allow(clippy::too_many_arguments)]
fn run_sweep_like(
    problem: &LearningProblem,
    problem_id: &str,
    n_list: &[usize],
    trials: usize,
    delta_grid: &[f64],
    p_floor: Option<f64>,
    ratio_bound: Option<f64>,
    tie_rule: TieRule,
    with_side_experiments: bool,
    constants: &ermlab_core::Constants,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let report =
        theorem1_experiment(problem, n_list, trials, constants, delta_grid, seed, tie_rule)?;

    let mut csv = csv_row(&SWEEP_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let mut results = Vec::new();
    for row in &report.rows {
        csv.push_str(&csv_row(&fields![
            problem_id,
            row.n,
            row.trials,
            row.h_mean,
            row.h_stderr,
            row.delta,
            row.lambda_n,
            row.r_n,
            row.p_fail,
            row.p_lo,
            row.p_hi,
            row.mean_excess,
            row.sqrtn_mean_excess,
            seed,
            hash
        ]));
        let delta_note = if row.delta_satisfied { "" } else { " (budget not met)" };
        results.push(format!(
            "n={}: delta={}{delta_note}, lambda_n={}, r_n={}, p_fail={} in [{}, {}], \
             sqrt(n) * mean excess = {}",
            row.n,
            row.delta,
            row.lambda_n,
            row.r_n,
            row.p_fail,
            row.p_lo,
            row.p_hi,
            row.sqrtn_mean_excess
        ));
    }
    match report.sqrtn_ratio() {
        Some(ratio) => results.push(format!("sqrt(n) scaling ratio (max/min) = {ratio}")),
        None => results.push("sqrt(n) scaling ratio undefined: a row has zero mean excess".into()),
    }

    if with_side_experiments {
        for row in &report.rows {
            let inf = theorem3_experiment(problem, row.n, trials, constants, seed)?;
            results.push(format!(
                "infimum crossing at n={}: Pr[min over V of P_n L <= {}] = {} in [{}, {}]",
                row.n, inf.threshold, inf.p, inf.p_lo, inf.p_hi
            ));
        }
        for row in &report.rows {
            let ball =
                theorem4_experiment(problem, row.n, row.delta, trials, constants, seed)?;
            results.push(format!(
                "ball control at n={}: |B_r| = {}, Pr[inf over B of P_n L >= {}] = {} in [{}, {}]",
                row.n,
                ball.ball.len(),
                ball.threshold,
                ball.p,
                ball.p_lo,
                ball.p_hi
            ));
        }
    }

    let failures = report.check(p_floor, ratio_bound);
    Ok(RunOutput { csv, results, failures })
}

fn run_theorem2(
    problem: &LearningProblem,
    problem_id: &str,
    lambda_grid: &[f64],
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let report = theorem2_check(problem, lambda_grid)?;
    let mut csv = csv_row(&fields![
        "problem_id",
        "f_index",
        "lambda",
        "ratio",
        "seed",
        "config_hash"
    ]);
    for row in &report.rows {
        csv.push_str(&csv_row(&fields![
            problem_id, row.f_index, row.lambda, row.ratio, seed, hash
        ]));
    }
    let mut results = Vec::new();
    if report.rows.is_empty() {
        results.push("no rows: the class has no function distinct from the oracle".into());
    } else {
        results.push(format!("empirical ratio constant c_emp = {}", report.c_emp));
    }
    results.push(format!("all ratios positive = {}", report.min_ratio_positive));
    results.push(format!("minimizer ratios equal D/rho = {}", report.minimizer_ratios_exact));

    let mut failures = Vec::new();
    if !report.min_ratio_positive {
        failures.push(format!("minimum perturbed-risk ratio {} is not positive", report.c_emp));
    }
    if !report.minimizer_ratios_exact {
        failures.push("a minimizer's ratio deviates from D/rho by more than 1e-9".into());
    }
    Ok(RunOutput { csv, results, failures })
}

fn run_theorem3(
    problem: &LearningProblem,
    problem_id: &str,
    n_list: &[usize],
    trials: usize,
    p_floor: Option<f64>,
    constants: &ermlab_core::Constants,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let mut csv = csv_row(&fields![
        "problem_id",
        "n",
        "trials",
        "H_mean",
        "H_stderr",
        "lambda_n",
        "threshold",
        "p_event",
        "p_lo",
        "p_hi",
        "seed",
        "config_hash"
    ]);
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &n in n_list {
        let report = theorem3_experiment(problem, n, trials, constants, seed)?;
        csv.push_str(&csv_row(&fields![
            problem_id,
            report.n,
            report.trials,
            report.h.mean,
            report.h.stderr,
            report.lambda_n,
            report.threshold,
            report.p,
            report.p_lo,
            report.p_hi,
            seed,
            hash
        ]));
        results.push(format!(
            "n={n}: Pr[min over V of P_n L <= {}] = {} in [{}, {}]",
            report.threshold, report.p, report.p_lo, report.p_hi
        ));
        if let Some(floor) = p_floor {
            if report.p < floor {
                failures.push(format!(
                    "infimum crossing probability {} at n={n} is below the floor {floor}",
                    report.p
                ));
            }
        }
    }
    Ok(RunOutput { csv, results, failures })
}

#[allow(clippy::too_many_arguments)]
fn run_theorem4(
    problem: &LearningProblem,
    problem_id: &str,
    n_list: &[usize],
    delta: f64,
    trials: usize,
    p_floor: Option<f64>,
    constants: &ermlab_core::Constants,
    seed: u64,
    hash: &str,
) -> Result<RunOutput> {
    let mut csv = csv_row(&fields![
        "problem_id",
        "n",
        "trials",
        "H_mean",
        "H_stderr",
        "delta",
        "lambda_n",
        "r_n",
        "ball_size",
        "threshold",
        "p_event",
        "p_lo",
        "p_hi",
        "seed",
        "config_hash"
    ]);
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &n in n_list {
        let report = theorem4_experiment(problem, n, delta, trials, constants, seed)?;
        csv.push_str(&csv_row(&fields![
            problem_id,
            report.n,
            report.trials,
            report.h.mean,
            report.h.stderr,
            report.delta,
            report.lambda_n,
            report.r_n,
            report.ball.len(),
            report.threshold,
            report.p,
            report.p_lo,
            report.p_hi,
            seed,
            hash
        ]));
        results.push(format!(
            "n={n}: |B_r| = {}, Pr[inf over B of P_n L >= {}] = {} in [{}, {}]",
            report.ball.len(),
            report.threshold,
            report.p,
            report.p_lo,
            report.p_hi
        ));
        if let Some(floor) = p_floor {
            if report.p < floor {
                failures.push(format!(
                    "ball control probability {} at n={n} is below the floor {floor}",
                    report.p
                ));
            }
        }
    }
    Ok(RunOutput { csv, results, failures })
}

/// Runs the configured experiment and renders CSV plus summary. The master
/// seed inside `config` is already final: any command-line override happened
/// before this call.
pub fn run(config: &RunConfig) -> Result<Artifacts> {
    let problem = config.problem.build()?;
    let problem_id = config.problem.id();
    let hash = config.config_hash();
    let seed = config.seed;

    let output = match &config.experiment {
        Experiment::HEstimate { trials } => {
            run_h_estimate(&problem, &problem_id, *trials, seed, &hash)?
        }
        Experiment::OscEstimate { n_list, delta_grid, trials } => {
            run_osc_estimate(&problem, &problem_id, n_list, delta_grid, *trials, seed, &hash)?
        }
        Experiment::ErmRun { n_list, trials, lambda_coeff, tie_rule } => run_erm(
            &problem,
            &problem_id,
            n_list,
            *trials,
            *lambda_coeff,
            *tie_rule,
            seed,
            &hash,
        )?,
        Experiment::Theorem1 { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule } => {
            run_sweep_like(
                &problem,
                &problem_id,
                n_list,
                *trials,
                delta_grid,
                *p_floor,
                *ratio_bound,
                *tie_rule,
                false,
                &config.constants,
                seed,
                &hash,
            )?
        }
        Experiment::Sweep { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule } => {
            run_sweep_like(
                &problem,
                &problem_id,
                n_list,
                *trials,
                delta_grid,
                *p_floor,
                *ratio_bound,
                *tie_rule,
                true,
                &config.constants,
                seed,
                &hash,
            )?
        }
        Experiment::Theorem2 { lambda_grid } => {
            run_theorem2(&problem, &problem_id, lambda_grid, seed, &hash)?
        }
        Experiment::Theorem3 { n_list, trials, p_floor } => run_theorem3(
            &problem,
            &problem_id,
            n_list,
            *trials,
            *p_floor,
            &config.constants,
            seed,
            &hash,
        )?,
        Experiment::Theorem4 { n_list, delta, trials, p_floor } => run_theorem4(
            &problem,
            &problem_id,
            n_list,
            *delta,
            *trials,
            *p_floor,
            &config.constants,
            seed,
            &hash,
        )?,
    };

    let summary = render_summary(config, &problem_id, &hash, &output);
    Ok(Artifacts { csv: output.csv, summary, assertion_failures: output.failures })
}

fn render_summary(config: &RunConfig, problem_id: &str, hash: &str, output: &RunOutput) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "experiment = {}", config.experiment.name());
    let _ = writeln!(text, "problem_id = {problem_id}");
    let _ = writeln!(text, "config_hash = {hash}");
    let _ = writeln!(text);
    let _ = writeln!(text, "settings:");
    for (key, value) in config.resolved_lines() {
        let _ = writeln!(text, "  {key} = {value}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "results:");
    for line in &output.results {
        let _ = writeln!(text, "  {line}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "assertions:");
    if output.failures.is_empty() {
        let _ = writeln!(text, "  PASS all in-run assertions held");
    } else {
        for failure in &output.failures {
            let _ = writeln!(text, "  FAIL {failure}");
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run_text(text: &str) -> Artifacts {
        run(&parse_config(text).unwrap()).unwrap()
    }

    #[test]
    fn h_estimate_matches_the_closed_form_within_three_stderr() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = h-estimate\n\
             experiment.trials = 100000\nseed = 7\n",
        );
        let mut lines = artifacts.csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "problem_id,set_size,sigma_max,trials,h_mean,h_stderr,probe_p,seed,config_hash"
        );
        let row = lines.next().unwrap();
        let cells: Vec<&str> = row.split("\",").last().unwrap().split(',').collect();
        let h_mean: f64 = cells[3].parse().unwrap();
        let h_stderr: f64 = cells[4].parse().unwrap();
        assert!((h_mean - 0.3989422804014327).abs() <= 3.0 * h_stderr);
        assert!(artifacts.assertion_failures.is_empty());
        assert!(artifacts.csv.starts_with("problem_id"));
        assert!(lines.next().is_none());
    }

    #[test]
    fn csv_quotes_the_problem_id() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = h-estimate\n\
             experiment.trials = 100\n",
        );
        assert!(artifacts.csv.contains("\"two_point(a=1,b=0)\""));
    }

    #[test]
    fn theorem1_emits_one_row_per_n_with_the_documented_header() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = theorem1\n\
             experiment.n_list = 16,64\nexperiment.trials = 200\n\
             experiment.delta_grid = 1.0,0.9\nseed = 3\n",
        );
        let lines: Vec<&str> = artifacts.csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "problem_id,n,trials,H_mean,H_stderr,delta,lambda_n,r_n,p_fail,p_lo,p_hi,\
             mean_excess,sqrtn_mean_excess,seed,config_hash"
        );
        assert!(lines[1].contains(",16,200,"));
        assert!(lines[2].contains(",64,200,"));
    }

    #[test]
    fn identical_runs_produce_identical_bytes() {
        let text = "problem.family = simplex\nexperiment.name = theorem3\n\
                    experiment.n_list = 64\nexperiment.trials = 300\nseed = 5\n";
        let a = run_text(text);
        let b = run_text(text);
        assert_eq!(a.csv, b.csv);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn theorem2_assertions_pass_on_generated_problems() {
        let artifacts = run_text(
            "problem.family = simplex\nproblem.d = 4\nexperiment.name = theorem2\n",
        );
        assert!(artifacts.assertion_failures.is_empty(), "{:?}", artifacts.assertion_failures);
        assert!(artifacts.summary.contains("PASS"));
        let rows = artifacts.csv.lines().count() - 1;
        assert_eq!(rows, 3 * 5);
    }

    #[test]
    fn theorem4_hits_probability_one_on_the_reference_setup() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = theorem4\n\
             experiment.n_list = 256\nexperiment.delta = 0.9\n\
             experiment.trials = 500\nexperiment.p_floor = 1.0\nseed = 11\n",
        );
        assert!(artifacts.assertion_failures.is_empty(), "{:?}", artifacts.assertion_failures);
        assert!(artifacts.csv.lines().nth(1).unwrap().contains(",1,"));
    }

    #[test]
    fn p_floor_failures_are_reported_not_panicked() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = theorem3\n\
             experiment.n_list = 64\nexperiment.trials = 200\n\
             experiment.p_floor = 1.0\nseed = 2\n",
        );
        assert_eq!(artifacts.assertion_failures.len(), 1);
        assert!(artifacts.summary.contains("FAIL"));
    }

    #[test]
    fn osc_rows_cover_the_full_grid() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = osc-estimate\n\
             experiment.n_list = 16,1024\nexperiment.delta_grid = 1.0,0.5\n\
             experiment.trials = 500\n",
        );
        let lines: Vec<&str> = artifacts.csv.lines().collect();
        assert_eq!(lines.len(), 5);
        // delta = 0.5 keeps only the oracle in the ball, so the oscillation
        // vanishes identically.
        assert!(lines[2].contains(",0.5,500,0,0,"));
        assert!(lines[4].contains(",0.5,500,0,0,"));
    }

    #[test]
    fn erm_run_reports_the_pick_rate() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = erm-run\n\
             experiment.n_list = 64\nexperiment.trials = 400\n\
             experiment.lambda_coeff = 0.2\nseed = 9\n",
        );
        let lines: Vec<&str> = artifacts.csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(artifacts.summary.contains("Pr[excess > 0]"));
    }

    #[test]
    fn sweep_summary_includes_the_side_experiments() {
        let artifacts = run_text(
            "problem.family = two_point\nexperiment.name = sweep\n\
             experiment.n_list = 64\nexperiment.trials = 200\n\
             experiment.delta_grid = 1.0,0.9\nseed = 3\n",
        );
        assert!(artifacts.summary.contains("infimum crossing at n=64"));
        assert!(artifacts.summary.contains("ball control at n=64"));
        assert!(artifacts.csv.lines().count() == 2);
    }

    #[test]
    fn sweep_csv_matches_theorem1_csv_for_the_same_settings() {
        let sweep = run_text(
            "problem.family = two_point\nexperiment.name = sweep\n\
             experiment.n_list = 64\nexperiment.trials = 200\n\
             experiment.delta_grid = 1.0,0.9\nseed = 3\n",
        );
        let theorem1 = run_text(
            "problem.family = two_point\nexperiment.name = theorem1\n\
             experiment.n_list = 64\nexperiment.trials = 200\n\
             experiment.delta_grid = 1.0,0.9\nseed = 3\n",
        );
        // Same rows up to the config hash column, which names the experiment.
        let strip = |csv: &str| -> Vec<String> {
            csv.lines()
                .map(|line| {
                    let mut cells: Vec<&str> = line.split(',').collect();
                    cells.pop();
                    cells.join(",")
                })
                .collect()
        };
        assert_eq!(strip(&sweep.csv), strip(&theorem1.csv));
    }
}
