//! Finite probability spaces, bounded simple functions, risks, and excess
//! losses under the squared loss.
//!
//! Functions are stored extensionally as one value per atom, so every
//! expectation here is an exact weighted sum. The perturbed target
//! `T_lambda = (1-lambda) T + lambda f*` slides the target toward the chosen
//! oracle; the associated excess losses satisfy the exact identity
//! `E L_lambda(f) = (1-lambda) E L(f) + lambda ||f - f*||^2`, which reduces to
//! `lambda ||f - f*||^2` on the minimizer set.

use crate::error::{Error, Result};

/// Absolute tolerance for the weight-sum check.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance for membership in the minimizer set. Generators are
/// expected to produce exactly equal risks, so this never decides.
pub const MINIMIZER_TOL: f64 = 1e-10;
/// Slack allowed on the unit sup-norm bound for class members and targets.
const SUP_NORM_SLACK: f64 = 1e-12;

/// A finite probability space: strictly positive atom weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilitySpace {
    weights: Vec<f64>,
}

impl ProbabilitySpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Invalid("a probability space needs at least one atom".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Invalid(format!("weight {w} at atom {i} is not strictly positive")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::Invalid("uniform space needs at least one atom".into()));
        }
        Self::new(vec![1.0 / atoms as f64; atoms])
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check_dim(&self, f: &SimpleFunction) -> Result<()> {
        if f.len() != self.atom_count() {
            return Err(Error::DimensionMismatch {
                expected: self.atom_count(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// L2(mu) inner product: sum over atoms of `mu(w) f(w) h(w)`.
    pub fn inner_product(&self, f: &SimpleFunction, h: &SimpleFunction) -> Result<f64> {
        self.check_dim(f)?;
        self.check_dim(h)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values().iter().zip(h.values()))
            .map(|(&w, (&a, &b))| w * a * b)
            .sum())
    }

    /// Expectation of `f` under mu.
    pub fn mean(&self, f: &SimpleFunction) -> Result<f64> {
        self.check_dim(f)?;
        Ok(self.weights.iter().zip(f.values()).map(|(&w, &a)| w * a).sum())
    }

    /// L2(mu) norm.
    pub fn norm(&self, f: &SimpleFunction) -> Result<f64> {
        Ok(self.inner_product(f, f)?.sqrt())
    }

    /// L2(mu) distance between two functions.
    pub fn distance(&self, f: &SimpleFunction, h: &SimpleFunction) -> Result<f64> {
        self.check_dim(f)?;
        self.check_dim(h)?;
        let sq: f64 = self
            .weights
            .iter()
            .zip(f.values().iter().zip(h.values()))
            .map(|(&w, (&a, &b))| w * (a - b) * (a - b))
            .sum();
        Ok(sq.sqrt())
    }

    /// Squared-loss risk of `f` against `target`: `E (f - T)^2`, summed
    /// directly so exact-weight problems give exact risks.
    pub fn risk(&self, f: &SimpleFunction, target: &SimpleFunction) -> Result<f64> {
        self.check_dim(f)?;
        self.check_dim(target)?;
        Ok(self
            .weights
            .iter()
            .zip(f.values().iter().zip(target.values()))
            .map(|(&w, (&a, &b))| w * (a - b) * (a - b))
            .sum())
    }
}

/// A bounded simple function, stored as one value per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFunction {
    values: Vec<f64>,
}

impl SimpleFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zero(atoms: usize) -> Self {
        Self { values: vec![0.0; atoms] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, atom: usize) -> f64 {
        self.values[atom]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Geometry of a problem: `D = sup_{f in F} ||T - f||`, `rho = ||T - f*||`,
/// and the sup-norm distance `rho_inf = ||T - f*||_inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub big_d: f64,
    pub rho: f64,
    pub rho_inf: f64,
}

impl Geometry {
    /// The ratio `rho / D`, defined as 1 for degenerate problems with D = 0.
    pub fn rho_over_d(&self) -> f64 {
        if self.big_d == 0.0 {
            1.0
        } else {
            self.rho / self.big_d
        }
    }
}

/// Sup-norm budget for replacing `L(f)` by `L_lambda(f)`: the squared loss is
/// 4-Lipschitz in its second argument on the unit sup-norm ball, and the
/// target moves by `lambda ||T - f*||_inf`, so the excess loss moves by at
/// most `8 lambda ||T - f*||_inf` pointwise.
pub fn sup_norm_shift_bound(lambda: f64, rho_inf: f64) -> f64 {
    8.0 * lambda * rho_inf
}

/// A learning problem: a finite class `F`, a target `T`, and a designated
/// oracle `f*` that minimizes the risk over `F`. All of `F` and `T` live in
/// the unit sup-norm ball.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningProblem {
    space: ProbabilitySpace,
    class: Vec<SimpleFunction>,
    target: SimpleFunction,
    oracle: usize,
}

impl LearningProblem {
    pub fn new(
        space: ProbabilitySpace,
        class: Vec<SimpleFunction>,
        target: SimpleFunction,
        oracle_index: usize,
    ) -> Result<Self> {
        if class.is_empty() {
            return Err(Error::Invalid("the class F must not be empty".into()));
        }
        space.check_dim(&target)?;
        for f in &class {
            space.check_dim(f)?;
        }
        if target.sup_norm() > 1.0 + SUP_NORM_SLACK {
            return Err(Error::Invalid(format!(
                "target sup-norm {} exceeds the unit ball",
                target.sup_norm()
            )));
        }
        for (i, f) in class.iter().enumerate() {
            if f.sup_norm() > 1.0 + SUP_NORM_SLACK {
                return Err(Error::Invalid(format!(
                    "class function {i} has sup-norm {} outside the unit ball",
                    f.sup_norm()
                )));
            }
        }
        if oracle_index >= class.len() {
            return Err(Error::Invalid(format!(
                "oracle index {oracle_index} out of range for class of size {}",
                class.len()
            )));
        }
        let problem = Self {
            space,
            class,
            target,
            oracle: oracle_index,
        };
        if !problem.minimizer_set().contains(&oracle_index) {
            return Err(Error::Invalid(format!(
                "oracle index {oracle_index} does not minimize the risk over F"
            )));
        }
        Ok(problem)
    }

    pub fn space(&self) -> &ProbabilitySpace {
        &self.space
    }

    pub fn class(&self) -> &[SimpleFunction] {
        &self.class
    }

    pub fn class_size(&self) -> usize {
        self.class.len()
    }

    pub fn class_fn(&self, index: usize) -> &SimpleFunction {
        &self.class[index]
    }

    pub fn target(&self) -> &SimpleFunction {
        &self.target
    }

    pub fn oracle_index(&self) -> usize {
        self.oracle
    }

    pub fn oracle(&self) -> &SimpleFunction {
        &self.class[self.oracle]
    }

    /// Risk of class member `index` against the unperturbed target.
    pub fn risk_of(&self, index: usize) -> f64 {
        self.space
            .risk(&self.class[index], &self.target)
            .expect("class members live on the problem space")
    }

    /// Risks of all class members, in class order.
    pub fn risks(&self) -> Vec<f64> {
        (0..self.class.len()).map(|i| self.risk_of(i)).collect()
    }

    /// Indices of the class members whose risk is minimal, within an absolute
    /// tolerance on the risk gap.
    pub fn minimizer_set(&self) -> Vec<usize> {
        let risks = self.risks();
        let best = risks.iter().cloned().fold(f64::INFINITY, f64::min);
        risks
            .iter()
            .enumerate()
            .filter(|(_, &r)| r - best <= MINIMIZER_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    /// Excess loss of class member `index`: pointwise
    /// `(f - T)^2 - (f* - T)^2`.
    pub fn excess_loss(&self, index: usize) -> SimpleFunction {
        let f = &self.class[index];
        let star = self.oracle();
        let t = &self.target;
        let values = (0..f.len())
            .map(|w| {
                let a = f.value(w) - t.value(w);
                let b = star.value(w) - t.value(w);
                a * a - b * b
            })
            .collect();
        SimpleFunction::new(values)
    }

    /// The perturbed target `T_lambda = (1 - lambda) T + lambda f*`.
    pub fn perturbed_target(&self, lambda: f64) -> Result<SimpleFunction> {
        check_lambda(lambda)?;
        let star = self.oracle();
        let values = self
            .target
            .values()
            .iter()
            .zip(star.values())
            .map(|(&t, &s)| (1.0 - lambda) * t + lambda * s)
            .collect();
        Ok(SimpleFunction::new(values))
    }

    /// Excess loss against the perturbed target: pointwise
    /// `(f - T_lambda)^2 - (f* - T_lambda)^2`.
    pub fn perturbed_excess_loss(&self, index: usize, lambda: f64) -> Result<SimpleFunction> {
        let t_lambda = self.perturbed_target(lambda)?;
        let f = &self.class[index];
        let star = self.oracle();
        let values = (0..f.len())
            .map(|w| {
                let a = f.value(w) - t_lambda.value(w);
                let b = star.value(w) - t_lambda.value(w);
                a * a - b * b
            })
            .collect();
        Ok(SimpleFunction::new(values))
    }

    /// Exact expectation of the perturbed excess loss of member `index`.
    pub fn perturbed_excess_mean(&self, index: usize, lambda: f64) -> Result<f64> {
        let loss = self.perturbed_excess_loss(index, lambda)?;
        self.space.mean(&loss)
    }

    /// Exact expectations of the perturbed excess losses of all members.
    pub fn perturbed_excess_means(&self, lambda: f64) -> Result<Vec<f64>> {
        (0..self.class.len())
            .map(|i| self.perturbed_excess_mean(i, lambda))
            .collect()
    }

    /// L2 distance of member `index` from the oracle.
    pub fn distance_to_oracle(&self, index: usize) -> f64 {
        self.space
            .distance(&self.class[index], self.oracle())
            .expect("class members live on the problem space")
    }

    pub fn geometry(&self) -> Geometry {
        let rho = self
            .space
            .distance(self.oracle(), &self.target)
            .expect("oracle lives on the problem space");
        let big_d = (0..self.class.len())
            .map(|i| {
                self.space
                    .distance(&self.class[i], &self.target)
                    .expect("class members live on the problem space")
            })
            .fold(0.0, f64::max);
        let rho_inf = self
            .oracle()
            .values()
            .iter()
            .zip(self.target.values())
            .fold(0.0, |m: f64, (&a, &b)| m.max((a - b).abs()));
        Geometry { big_d, rho, rho_inf }
    }

    /// Serializes the problem in the flat `key = value` text format.
    pub fn to_text(&self) -> String {
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        out.push_str(&format!("atoms = {}\n", self.space.atom_count()));
        out.push_str(&format!("weights = {}\n", join(self.space.weights())));
        out.push_str(&format!("target = {}\n", join(self.target.values())));
        for (i, f) in self.class.iter().enumerate() {
            out.push_str(&format!("f.{} = {}\n", i, join(f.values())));
        }
        out.push_str(&format!("oracle_index = {}\n", self.oracle));
        out
    }

    /// Parses the flat `key = value` problem format. Decimal parsing is
    /// locale-independent (period separator); `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut atoms: Option<usize> = None;
        let mut weights: Option<Vec<f64>> = None;
        let mut target: Option<Vec<f64>> = None;
        let mut class: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut oracle: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: line_no,
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            match key {
                "atoms" => {
                    if atoms.is_some() {
                        return Err(parse_err("duplicate key `atoms`".into()));
                    }
                    atoms = Some(
                        value
                            .parse()
                            .map_err(|e| parse_err(format!("bad atom count `{value}`: {e}")))?,
                    );
                }
                "weights" => {
                    if weights.is_some() {
                        return Err(parse_err("duplicate key `weights`".into()));
                    }
                    weights = Some(parse_values(value).map_err(&parse_err)?);
                }
                "target" => {
                    if target.is_some() {
                        return Err(parse_err("duplicate key `target`".into()));
                    }
                    target = Some(parse_values(value).map_err(&parse_err)?);
                }
                "oracle_index" => {
                    if oracle.is_some() {
                        return Err(parse_err("duplicate key `oracle_index`".into()));
                    }
                    oracle = Some(
                        value
                            .parse()
                            .map_err(|e| parse_err(format!("bad oracle index `{value}`: {e}")))?,
                    );
                }
                _ => {
                    if let Some(i) = key.strip_prefix("f.") {
                        let i: usize = i
                            .parse()
                            .map_err(|e| parse_err(format!("bad class index `{key}`: {e}")))?;
                        if class.iter().any(|(j, _)| *j == i) {
                            return Err(parse_err(format!("duplicate key `f.{i}`")));
                        }
                        class.push((i, parse_values(value).map_err(&parse_err)?));
                    } else {
                        return Err(parse_err(format!("unknown key `{key}`")));
                    }
                }
            }
        }

        let missing = |name: &str| Error::Parse {
            line: 0,
            message: format!("missing key `{name}`"),
        };
        let atoms = atoms.ok_or_else(|| missing("atoms"))?;
        let weights = weights.ok_or_else(|| missing("weights"))?;
        let target = target.ok_or_else(|| missing("target"))?;
        let oracle = oracle.ok_or_else(|| missing("oracle_index"))?;
        if class.is_empty() {
            return Err(missing("f.0"));
        }
        class.sort_by_key(|(i, _)| *i);
        for (pos, (i, _)) in class.iter().enumerate() {
            if *i != pos {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("class indices must be consecutive from 0, found f.{i}"),
                });
            }
        }
        let check_len = |name: &str, v: &[f64]| {
            if v.len() != atoms {
                Err(Error::Parse {
                    line: 0,
                    message: format!("`{name}` has {} values, expected {atoms}", v.len()),
                })
            } else {
                Ok(())
            }
        };
        check_len("weights", &weights)?;
        check_len("target", &target)?;
        for (i, values) in &class {
            check_len(&format!("f.{i}"), values)?;
        }

        let space = ProbabilitySpace::new(weights)?;
        let class = class
            .into_iter()
            .map(|(_, values)| SimpleFunction::new(values))
            .collect();
        Self::new(space, class, SimpleFunction::new(target), oracle)
    }
}

fn parse_values(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map_err(|e| format!("bad decimal `{tok}`: {e}"))
        })
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}
