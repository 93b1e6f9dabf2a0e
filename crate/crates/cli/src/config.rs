//! Run configuration: a flat `key = value` text format with dotted keys.
//! Parsing is strict and total before any computation starts: unknown keys,
//! duplicate keys, keys unused by the selected family or experiment, and
//! malformed values are all errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ermlab_core::{Constants, GeneratorSpec, LearningProblem, TieRule};
use sha2::{Digest, Sha256};

/// Where the learning problem comes from: a named generator family or a
/// problem file in the text format.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSource {
    Generated(GeneratorSpec),
    File { path: PathBuf },
}

impl ProblemSource {
    /// Stable identifier carried in every CSV row.
    pub fn id(&self) -> String {
        match self {
            Self::Generated(spec) => spec.id(),
            Self::File { path } => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.to_string_lossy().into_owned());
                format!("file:{stem}")
            }
        }
    }

    pub fn build(&self) -> ermlab_core::Result<LearningProblem> {
        match self {
            Self::Generated(spec) => spec.build(),
            Self::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ermlab_core::Error::Invalid(format!(
                        "cannot read problem file {}: {e}",
                        path.display()
                    ))
                })?;
                LearningProblem::from_text(&text)
            }
        }
    }
}

/// The selected experiment with its resolved parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    HEstimate {
        trials: usize,
    },
    OscEstimate {
        n_list: Vec<usize>,
        delta_grid: Vec<f64>,
        trials: usize,
    },
    ErmRun {
        n_list: Vec<usize>,
        trials: usize,
        lambda_coeff: f64,
        tie_rule: TieRule,
    },
    Theorem1 {
        n_list: Vec<usize>,
        trials: usize,
        delta_grid: Vec<f64>,
        p_floor: Option<f64>,
        ratio_bound: Option<f64>,
        tie_rule: TieRule,
    },
    Theorem2 {
        lambda_grid: Vec<f64>,
    },
    Theorem3 {
        n_list: Vec<usize>,
        trials: usize,
        p_floor: Option<f64>,
    },
    Theorem4 {
        n_list: Vec<usize>,
        delta: f64,
        trials: usize,
        p_floor: Option<f64>,
    },
    Sweep {
        n_list: Vec<usize>,
        trials: usize,
        delta_grid: Vec<f64>,
        p_floor: Option<f64>,
        ratio_bound: Option<f64>,
        tie_rule: TieRule,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::HEstimate { .. } => "h-estimate",
            Self::OscEstimate { .. } => "osc-estimate",
            Self::ErmRun { .. } => "erm-run",
            Self::Theorem1 { .. } => "theorem1",
            Self::Theorem2 { .. } => "theorem2",
            Self::Theorem3 { .. } => "theorem3",
            Self::Theorem4 { .. } => "theorem4",
            Self::Sweep { .. } => "sweep",
        }
    }
}

/// A fully validated run: problem source, experiment, constants, master
/// seed, and where the CSV goes.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub experiment: Experiment,
    pub constants: Constants,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Every resolved setting except the output path, in declaration order,
    /// defaults filled in. The summary prints these and the hash covers them.
    pub fn resolved_lines(&self) -> Vec<(String, String)> {
        let mut lines: Vec<(String, String)> = Vec::new();
        match &self.problem {
            ProblemSource::Generated(GeneratorSpec::TwoPoint { a, b }) => {
                lines.push(("problem.family".into(), "two_point".into()));
                lines.push(("problem.a".into(), format!("{a}")));
                lines.push(("problem.b".into(), format!("{b}")));
            }
            ProblemSource::Generated(GeneratorSpec::Simplex { d, c }) => {
                lines.push(("problem.family".into(), "simplex".into()));
                lines.push(("problem.d".into(), format!("{d}")));
                lines.push(("problem.c".into(), format!("{c}")));
            }
            ProblemSource::Generated(GeneratorSpec::Sphere { atoms, m, rho, min_sep, seed }) => {
                lines.push(("problem.family".into(), "sphere".into()));
                lines.push(("problem.atoms".into(), format!("{atoms}")));
                lines.push(("problem.m".into(), format!("{m}")));
                lines.push(("problem.rho".into(), format!("{rho}")));
                lines.push(("problem.min_sep".into(), format!("{min_sep}")));
                lines.push(("problem.seed".into(), format!("{seed}")));
            }
            ProblemSource::File { path } => {
                lines.push(("problem.family".into(), "file".into()));
                lines.push(("problem.file".into(), path.display().to_string()));
            }
        }
        lines.push(("experiment.name".into(), self.experiment.name().into()));
        match &self.experiment {
            Experiment::HEstimate { trials } => {
                lines.push(("experiment.trials".into(), format!("{trials}")));
            }
            Experiment::OscEstimate { n_list, delta_grid, trials } => {
                lines.push(("experiment.n_list".into(), join_usize(n_list)));
                lines.push(("experiment.delta_grid".into(), join_f64(delta_grid)));
                lines.push(("experiment.trials".into(), format!("{trials}")));
            }
            Experiment::ErmRun { n_list, trials, lambda_coeff, tie_rule } => {
                lines.push(("experiment.n_list".into(), join_usize(n_list)));
                lines.push(("experiment.trials".into(), format!("{trials}")));
                lines.push(("experiment.lambda_coeff".into(), format!("{lambda_coeff}")));
                lines.push(("experiment.tie_rule".into(), tie_rule_name(*tie_rule).into()));
            }
            Experiment::Theorem1 { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule }
            | Experiment::Sweep { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule } => {
                lines.push(("experiment.n_list".into(), join_usize(n_list)));
                lines.push(("experiment.trials".into(), format!("{trials}")));
                lines.push(("experiment.delta_grid".into(), join_f64(delta_grid)));
                if let Some(v) = p_floor {
                    lines.push(("experiment.p_floor".into(), format!("{v}")));
                }
                if let Some(v) = ratio_bound {
                    lines.push(("experiment.ratio_bound".into(), format!("{v}")));
                }
                lines.push(("experiment.tie_rule".into(), tie_rule_name(*tie_rule).into()));
            }
            Experiment::Theorem2 { lambda_grid } => {
                lines.push(("experiment.lambda_grid".into(), join_f64(lambda_grid)));
            }
            Experiment::Theorem3 { n_list, trials, p_floor } => {
                lines.push(("experiment.n_list".into(), join_usize(n_list)));
                lines.push(("experiment.trials".into(), format!("{trials}")));
                if let Some(v) = p_floor {
                    lines.push(("experiment.p_floor".into(), format!("{v}")));
                }
            }
            Experiment::Theorem4 { n_list, delta, trials, p_floor } => {
                lines.push(("experiment.n_list".into(), join_usize(n_list)));
                lines.push(("experiment.delta".into(), format!("{delta}")));
                lines.push(("experiment.trials".into(), format!("{trials}")));
                if let Some(v) = p_floor {
                    lines.push(("experiment.p_floor".into(), format!("{v}")));
                }
            }
        }
        lines.push(("constants.c2".into(), format!("{}", self.constants.c2)));
        lines.push(("constants.c3".into(), format!("{}", self.constants.c3)));
        lines.push(("constants.eta".into(), format!("{}", self.constants.eta)));
        lines.push(("seed".into(), format!("{}", self.seed)));
        lines
    }

    /// First 16 hex characters of the SHA-256 of the sorted resolved
    /// settings. Identical resolved settings hash identically regardless of
    /// key order, comments, or the output path.
    pub fn config_hash(&self) -> String {
        let mut lines = self.resolved_lines();
        lines.sort();
        let mut canonical = String::new();
        for (key, value) in &lines {
            let _ = writeln!(canonical, "{key} = {value}");
        }
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}

fn join_usize(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn tie_rule_name(rule: TieRule) -> &'static str {
    match rule {
        TieRule::FavorOracle => "favor_oracle",
        TieRule::LowestIndex => "lowest_index",
    }
}

/// Raw `key = value` entries with line numbers, consumed key by key so
/// leftovers can be reported as unused.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, value)| value)
    }

    fn take_parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, String> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("key {key}: cannot parse {raw:?}")),
        }
    }

    fn take_parse_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, String> {
        Ok(self.take_parse(key)?.unwrap_or(default))
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, String> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => {
                let mut values = Vec::new();
                for item in raw.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        return Err(format!("key {key}: empty item in list {raw:?}"));
                    }
                    values.push(
                        item.parse::<T>()
                            .map_err(|_| format!("key {key}: cannot parse item {item:?}"))?,
                    );
                }
                Ok(Some(values))
            }
        }
    }

    fn take_list_or<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, String> {
        Ok(self.take_list(key)?.unwrap_or(default))
    }

    fn finish(self, family: &str, experiment: &str) -> Result<(), String> {
        if let Some((key, (line, _))) = self.map.into_iter().next() {
            return Err(format!(
                "line {line}: key {key} is not recognized for problem family \
                 {family} and experiment {experiment}"
            ));
        }
        Ok(())
    }
}

fn split_entries(text: &str) -> Result<Entries, String> {
    let mut map = BTreeMap::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {line_no}: expected `key = value`, got {line:?}"));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {line_no}: missing key before `=`"));
        }
        if value.is_empty() {
            return Err(format!("line {line_no}: key {key} has an empty value"));
        }
        if map.contains_key(&key) {
            return Err(format!("line {line_no}: duplicate key {key}"));
        }
        map.insert(key, (line_no, value));
    }
    Ok(Entries { map })
}

fn parse_problem(entries: &mut Entries) -> Result<(ProblemSource, String), String> {
    let family = entries
        .take("problem.family")
        .ok_or("missing required key problem.family")?;
    let source = match family.as_str() {
        "two_point" => {
            let a = entries.take_parse_or("problem.a", 1.0)?;
            let b = entries.take_parse_or("problem.b", 0.0)?;
            ProblemSource::Generated(GeneratorSpec::TwoPoint { a, b })
        }
        "simplex" => {
            let d = entries.take_parse_or("problem.d", 4usize)?;
            let c = entries.take_parse_or("problem.c", 1.0)?;
            ProblemSource::Generated(GeneratorSpec::Simplex { d, c })
        }
        "sphere" => {
            let atoms = entries.take_parse_or("problem.atoms", 8usize)?;
            let m = entries.take_parse_or("problem.m", 5usize)?;
            let rho = entries.take_parse_or("problem.rho", 0.25)?;
            let min_sep = entries.take_parse_or("problem.min_sep", 0.1)?;
            let seed = entries.take_parse_or("problem.seed", 42u64)?;
            ProblemSource::Generated(GeneratorSpec::Sphere { atoms, m, rho, min_sep, seed })
        }
        "file" => {
            let path = entries
                .take("problem.file")
                .ok_or("problem.family = file requires problem.file")?;
            ProblemSource::File { path: PathBuf::from(path) }
        }
        other => {
            return Err(format!(
                "problem.family {other:?} is not one of two_point, simplex, sphere, file"
            ));
        }
    };
    Ok((source, family))
}

fn parse_tie_rule(entries: &mut Entries) -> Result<TieRule, String> {
    match entries.take("experiment.tie_rule") {
        None => Ok(TieRule::FavorOracle),
        Some(raw) => match raw.as_str() {
            "favor_oracle" => Ok(TieRule::FavorOracle),
            "lowest_index" => Ok(TieRule::LowestIndex),
            other => Err(format!(
                "experiment.tie_rule {other:?} is not one of favor_oracle, lowest_index"
            )),
        },
    }
}

fn default_n_list() -> Vec<usize> {
    vec![256, 1024, 4096]
}

fn default_delta_grid() -> Vec<f64> {
    vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]
}

fn default_lambda_grid() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.25, 0.5]
}

const DEFAULT_TRIALS: usize = 10_000;

fn check_n_list(n_list: &[usize]) -> Result<(), String> {
    if n_list.is_empty() {
        return Err("experiment.n_list must not be empty".into());
    }
    for &n in n_list {
        if n == 0 {
            return Err("experiment.n_list entries must be at least 1".into());
        }
    }
    Ok(())
}

fn check_trials(trials: usize) -> Result<(), String> {
    if trials == 0 {
        return Err("experiment.trials must be at least 1".into());
    }
    Ok(())
}

fn check_delta_grid(grid: &[f64]) -> Result<(), String> {
    if grid.is_empty() {
        return Err("experiment.delta_grid must not be empty".into());
    }
    for &delta in grid {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(format!("experiment.delta_grid entry {delta} must be a positive real"));
        }
    }
    for pair in grid.windows(2) {
        if pair[1] >= pair[0] {
            return Err(format!(
                "experiment.delta_grid must be strictly decreasing, found {} before {}",
                pair[0], pair[1]
            ));
        }
    }
    Ok(())
}

fn check_lambda_grid(grid: &[f64]) -> Result<(), String> {
    if grid.is_empty() {
        return Err("experiment.lambda_grid must not be empty".into());
    }
    for &lambda in grid {
        if !lambda.is_finite() || lambda <= 0.0 || lambda > 0.5 {
            return Err(format!("experiment.lambda_grid entry {lambda} must lie in (0, 1/2]"));
        }
    }
    Ok(())
}

fn parse_experiment(entries: &mut Entries) -> Result<Experiment, String> {
    let name = entries
        .take("experiment.name")
        .ok_or("missing required key experiment.name")?;
    match name.as_str() {
        "h-estimate" => {
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            check_trials(trials)?;
            Ok(Experiment::HEstimate { trials })
        }
        "osc-estimate" => {
            let n_list = entries.take_list_or("experiment.n_list", default_n_list())?;
            let delta_grid = entries.take_list_or("experiment.delta_grid", default_delta_grid())?;
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            check_n_list(&n_list)?;
            check_delta_grid(&delta_grid)?;
            check_trials(trials)?;
            Ok(Experiment::OscEstimate { n_list, delta_grid, trials })
        }
        "erm-run" => {
            let n_list = entries.take_list_or("experiment.n_list", default_n_list())?;
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            let lambda_coeff: f64 = entries.take_parse_or("experiment.lambda_coeff", 0.2)?;
            let tie_rule = parse_tie_rule(entries)?;
            check_n_list(&n_list)?;
            check_trials(trials)?;
            if !lambda_coeff.is_finite() || lambda_coeff < 0.0 {
                return Err(format!(
                    "experiment.lambda_coeff {lambda_coeff} must be a nonnegative real"
                ));
            }
            for &n in &n_list {
                let lambda = lambda_coeff / (n as f64).sqrt();
                if lambda > 1.0 {
                    return Err(format!(
                        "experiment.lambda_coeff {lambda_coeff} gives lambda {lambda} > 1 at n={n}"
                    ));
                }
            }
            Ok(Experiment::ErmRun { n_list, trials, lambda_coeff, tie_rule })
        }
        "theorem1" | "sweep" => {
            let n_list = entries.take_list_or("experiment.n_list", default_n_list())?;
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            let delta_grid = entries.take_list_or("experiment.delta_grid", default_delta_grid())?;
            let p_floor = entries.take_parse("experiment.p_floor")?;
            let ratio_bound: Option<f64> = entries.take_parse("experiment.ratio_bound")?;
            let tie_rule = parse_tie_rule(entries)?;
            check_n_list(&n_list)?;
            check_trials(trials)?;
            check_delta_grid(&delta_grid)?;
            if let Some(floor) = p_floor {
                if !(0.0..=1.0).contains(&floor) {
                    return Err(format!("experiment.p_floor {floor} must lie in [0, 1]"));
                }
            }
            if let Some(bound) = ratio_bound {
                if !bound.is_finite() || bound < 1.0 {
                    return Err(format!("experiment.ratio_bound {bound} must be at least 1"));
                }
            }
            if name == "theorem1" {
                Ok(Experiment::Theorem1 { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule })
            } else {
                Ok(Experiment::Sweep { n_list, trials, delta_grid, p_floor, ratio_bound, tie_rule })
            }
        }
        "theorem2" => {
            let lambda_grid = entries.take_list_or("experiment.lambda_grid", default_lambda_grid())?;
            check_lambda_grid(&lambda_grid)?;
            Ok(Experiment::Theorem2 { lambda_grid })
        }
        "theorem3" => {
            let n_list = entries.take_list_or("experiment.n_list", default_n_list())?;
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            let p_floor = entries.take_parse("experiment.p_floor")?;
            check_n_list(&n_list)?;
            check_trials(trials)?;
            if let Some(floor) = p_floor {
                if !(0.0..=1.0).contains(&floor) {
                    return Err(format!("experiment.p_floor {floor} must lie in [0, 1]"));
                }
            }
            Ok(Experiment::Theorem3 { n_list, trials, p_floor })
        }
        "theorem4" => {
            let n_list = entries.take_list_or("experiment.n_list", default_n_list())?;
            let delta: f64 = entries.take_parse_or("experiment.delta", 0.9)?;
            let trials = entries.take_parse_or("experiment.trials", DEFAULT_TRIALS)?;
            let p_floor = entries.take_parse("experiment.p_floor")?;
            check_n_list(&n_list)?;
            check_trials(trials)?;
            if !delta.is_finite() || delta <= 0.0 {
                return Err(format!("experiment.delta {delta} must be a positive real"));
            }
            if let Some(floor) = p_floor {
                if !(0.0..=1.0).contains(&floor) {
                    return Err(format!("experiment.p_floor {floor} must lie in [0, 1]"));
                }
            }
            Ok(Experiment::Theorem4 { n_list, delta, trials, p_floor })
        }
        other => Err(format!(
            "experiment.name {other:?} is not one of h-estimate, osc-estimate, erm-run, \
             theorem1, theorem2, theorem3, theorem4, sweep"
        )),
    }
}

/// Parses and validates a whole configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let mut entries = split_entries(text)?;
    let (problem, family) = parse_problem(&mut entries)?;
    let experiment = parse_experiment(&mut entries)?;
    let constants = Constants {
        c2: entries.take_parse_or("constants.c2", 0.25)?,
        c3: entries.take_parse_or("constants.c3", 0.5)?,
        eta: entries.take_parse_or("constants.eta", 0.25)?,
    };
    constants.validate().map_err(|e| e.to_string())?;
    let seed = entries.take_parse_or("seed", 0u64)?;
    let output = entries.take("output").map(PathBuf::from);
    let name = experiment.name();
    entries.finish(&family, name)?;
    Ok(RunConfig { problem, experiment, constants, seed, output })
}
