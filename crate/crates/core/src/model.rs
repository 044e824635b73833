//! Model description for normal linear mixed models observed as intervals.
//!
//! A model has fixed-effect design `X` (n x p) and `r` random effects. Effect
//! `i` contributes `sigma_i * sum_j v_{i,j,t} * z_{i,j}` to observation `t`,
//! where the `z` are i.i.d. standard normal. The last effect is always the
//! residual error: one level per observation, identity design. Observations
//! are recorded as half-open cells `(lower, upper]` rather than points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::{format_f64, parse_f64};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("model violates invariants: {0:?}")]
    Invalid(Vec<String>),
    #[error("invalid interval data: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    Parse(String),
}

/// One random effect: a number of levels and, for every observation, the
/// (level, coefficient) pairs that contribute to it. Level indices are
/// 0-based internally; most designs are classifications where each row has
/// exactly one entry with coefficient 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffect {
    levels: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl RandomEffect {
    pub fn new(levels: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self, ModelError> {
        if levels == 0 {
            return Err(ModelError::Shape("effect must have at least one level".into()));
        }
        for (t, row) in rows.iter_mut().enumerate() {
            for &(lvl, coeff) in row.iter() {
                if lvl >= levels {
                    return Err(ModelError::Shape(format!(
                        "observation {} references level {} of an effect with {} levels",
                        t + 1,
                        lvl + 1,
                        levels
                    )));
                }
                if !coeff.is_finite() {
                    return Err(ModelError::Shape(format!(
                        "non-finite design coefficient at observation {}",
                        t + 1
                    )));
                }
            }
            // Deterministic iteration order downstream.
            row.sort_by_key(|&(lvl, _)| lvl);
        }
        Ok(RandomEffect { levels, rows })
    }

    /// Identity design: observation t is the only member of level t.
    pub fn identity(n: usize) -> Self {
        RandomEffect {
            levels: n,
            rows: (0..n).map(|t| vec![(t, 1.0)]).collect(),
        }
    }

    /// Classification design from a per-observation level assignment.
    pub fn classification(levels: usize, assignment: &[usize]) -> Result<Self, ModelError> {
        RandomEffect::new(levels, assignment.iter().map(|&l| vec![(l, 1.0)]).collect())
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn row(&self, t: usize) -> &[(usize, f64)] {
        &self.rows[t]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn is_identity(&self) -> bool {
        self.levels == self.rows.len()
            && self
                .rows
                .iter()
                .enumerate()
                .all(|(t, row)| row.as_slice() == [(t, 1.0)])
    }
}

/// Parameter labels, beta entries first, then one per random-effect scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    x: DMatrix<f64>,
    effects: Vec<RandomEffect>,
    names: Vec<String>,
}

impl ModelSpec {
    /// Builds and validates. Rejects rank-deficient `X`, non-identity error
    /// effect, and unused levels; use [`ModelSpec::new_unchecked`] plus
    /// [`ModelSpec::validate`] to inspect a broken description.
    pub fn new(
        x: DMatrix<f64>,
        effects: Vec<RandomEffect>,
        names: Vec<String>,
    ) -> Result<Self, ModelError> {
        let spec = Self::new_unchecked(x, effects, names)?;
        let violations = spec.validate();
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Shape checks only (dimensions, finiteness, label count).
    pub fn new_unchecked(
        x: DMatrix<f64>,
        effects: Vec<RandomEffect>,
        names: Vec<String>,
    ) -> Result<Self, ModelError> {
        let n = x.nrows();
        let p = x.ncols();
        if n == 0 || p == 0 {
            return Err(ModelError::Shape("X must be a nonempty matrix".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Shape("X contains non-finite entries".into()));
        }
        if effects.is_empty() {
            return Err(ModelError::Shape("at least the error effect is required".into()));
        }
        for (i, eff) in effects.iter().enumerate() {
            if eff.n_rows() != n {
                return Err(ModelError::Shape(format!(
                    "effect {} describes {} observations, X has {}",
                    i + 1,
                    eff.n_rows(),
                    n
                )));
            }
        }
        let want = p + effects.len();
        if names.len() != want {
            return Err(ModelError::Shape(format!(
                "expected {} parameter labels, got {}",
                want,
                names.len()
            )));
        }
        Ok(ModelSpec { x, effects, names })
    }

    /// Returns human-readable invariant violations (empty means valid).
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let r = self.r();
        if !self.effects[r - 1].is_identity() {
            violations.push(format!(
                "effect {} (error) must be an identity design with one level per observation",
                r
            ));
        }
        for (i, eff) in self.effects.iter().enumerate() {
            let mut used = vec![false; eff.levels];
            for row in &eff.rows {
                for &(lvl, coeff) in row {
                    if coeff != 0.0 {
                        used[lvl] = true;
                    }
                }
            }
            for (lvl, u) in used.iter().enumerate() {
                if !u {
                    violations.push(format!("effect {} level {} is unused", i + 1, lvl + 1));
                }
            }
        }
        if matrix_rank(&self.x) < self.p() {
            violations.push("X is rank-deficient".into());
        }
        violations
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.effects.len()
    }

    /// Total parameter dimension p + r.
    pub fn dim(&self) -> usize {
        self.p() + self.r()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_row(&self, t: usize) -> Vec<f64> {
        self.x.row(t).iter().copied().collect()
    }

    pub fn effects(&self) -> &[RandomEffect] {
        &self.effects
    }

    pub fn effect(&self, i: usize) -> &RandomEffect {
        &self.effects[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn beta_names(&self) -> &[String] {
        &self.names[..self.p()]
    }

    pub fn sigma_names(&self) -> &[String] {
        &self.names[self.p()..]
    }

    /// One-way layout: grand mean, one classification effect, error.
    pub fn one_way(groups: usize, group_sizes: &[usize]) -> Result<Self, ModelError> {
        if groups == 0 || group_sizes.len() != groups {
            return Err(ModelError::Shape(format!(
                "need {} group sizes, got {}",
                groups,
                group_sizes.len()
            )));
        }
        if group_sizes.iter().any(|&k| k == 0) {
            return Err(ModelError::Shape("group sizes must be positive".into()));
        }
        let n: usize = group_sizes.iter().sum();
        let mut assignment = Vec::with_capacity(n);
        for (g, &k) in group_sizes.iter().enumerate() {
            assignment.extend(std::iter::repeat(g).take(k));
        }
        let alpha = RandomEffect::classification(groups, &assignment)?;
        ModelSpec::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![alpha, RandomEffect::identity(n)],
            vec!["mu".into(), "sigma_alpha".into(), "sigma_error".into()],
        )
    }

    /// Two-fold nested layout: groups, subgroups within groups, error.
    /// `k_per_subgroup` is flattened in group order.
    pub fn two_fold_nested(
        groups: usize,
        j_per_group: &[usize],
        k_per_subgroup: &[usize],
    ) -> Result<Self, ModelError> {
        if groups == 0 || j_per_group.len() != groups {
            return Err(ModelError::Shape(format!(
                "need {} subgroup counts, got {}",
                groups,
                j_per_group.len()
            )));
        }
        let subgroups: usize = j_per_group.iter().sum();
        if k_per_subgroup.len() != subgroups {
            return Err(ModelError::Shape(format!(
                "need {} subgroup sizes, got {}",
                subgroups,
                k_per_subgroup.len()
            )));
        }
        if j_per_group.iter().any(|&j| j == 0) || k_per_subgroup.iter().any(|&k| k == 0) {
            return Err(ModelError::Shape("subgroup counts and sizes must be positive".into()));
        }
        let n: usize = k_per_subgroup.iter().sum();
        let mut alpha_assign = Vec::with_capacity(n);
        let mut beta_assign = Vec::with_capacity(n);
        let mut sub = 0usize;
        for (g, &j) in j_per_group.iter().enumerate() {
            for _ in 0..j {
                for _ in 0..k_per_subgroup[sub] {
                    alpha_assign.push(g);
                    beta_assign.push(sub);
                }
                sub += 1;
            }
        }
        let alpha = RandomEffect::classification(groups, &alpha_assign)?;
        let beta = RandomEffect::classification(subgroups, &beta_assign)?;
        ModelSpec::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![alpha, beta, RandomEffect::identity(n)],
            vec![
                "mu".into(),
                "sigma_alpha".into(),
                "sigma_beta".into(),
                "sigma_error".into(),
            ],
        )
    }

    /// Two-factor crossed layout with interaction: factor A, factor B,
    /// their interaction, error. `k_per_cell` is row-major over (A, B)
    /// cells and every cell must be occupied.
    pub fn two_factor_crossed(
        a_levels: usize,
        b_levels: usize,
        k_per_cell: &[usize],
    ) -> Result<Self, ModelError> {
        if a_levels == 0 || b_levels == 0 || k_per_cell.len() != a_levels * b_levels {
            return Err(ModelError::Shape(format!(
                "need {} cell counts, got {}",
                a_levels * b_levels,
                k_per_cell.len()
            )));
        }
        if k_per_cell.iter().any(|&k| k == 0) {
            return Err(ModelError::Shape("every cell must have at least one observation".into()));
        }
        let n: usize = k_per_cell.iter().sum();
        let mut a_assign = Vec::with_capacity(n);
        let mut b_assign = Vec::with_capacity(n);
        let mut ab_assign = Vec::with_capacity(n);
        for a in 0..a_levels {
            for b in 0..b_levels {
                let cell = a * b_levels + b;
                for _ in 0..k_per_cell[cell] {
                    a_assign.push(a);
                    b_assign.push(b);
                    ab_assign.push(cell);
                }
            }
        }
        let fa = RandomEffect::classification(a_levels, &a_assign)?;
        let fb = RandomEffect::classification(b_levels, &b_assign)?;
        let fab = RandomEffect::classification(a_levels * b_levels, &ab_assign)?;
        ModelSpec::new(
            DMatrix::from_element(n, 1, 1.0),
            vec![fa, fb, fab, RandomEffect::identity(n)],
            vec![
                "mu".into(),
                "sigma_a".into(),
                "sigma_b".into(),
                "sigma_ab".into(),
                "sigma_error".into(),
            ],
        )
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile::from_spec(self);
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.into_spec()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * smax;
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// On-disk model description. Level indices are 1-based in the file.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    p: usize,
    r: usize,
    n: usize,
    #[serde(rename = "X")]
    x: Vec<f64>,
    effects: Vec<EffectFile>,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EffectFile {
    levels: usize,
    assignments: Vec<Vec<(usize, f64)>>,
}

impl ModelFile {
    fn from_spec(spec: &ModelSpec) -> Self {
        ModelFile {
            p: spec.p(),
            r: spec.r(),
            n: spec.n(),
            x: spec.x.transpose().iter().copied().collect(), // row-major
            effects: spec
                .effects
                .iter()
                .map(|e| EffectFile {
                    levels: e.levels,
                    assignments: e
                        .rows
                        .iter()
                        .map(|row| row.iter().map(|&(l, c)| (l + 1, c)).collect())
                        .collect(),
                })
                .collect(),
            names: spec.names.clone(),
        }
    }

    fn into_spec(self) -> Result<ModelSpec, ModelError> {
        if self.x.len() != self.n * self.p {
            return Err(ModelError::Parse(format!(
                "X has {} entries, expected n*p = {}",
                self.x.len(),
                self.n * self.p
            )));
        }
        if self.effects.len() != self.r {
            return Err(ModelError::Parse(format!(
                "effect count {} does not match r = {}",
                self.effects.len(),
                self.r
            )));
        }
        let x = DMatrix::from_row_slice(self.n, self.p, &self.x);
        let mut effects = Vec::with_capacity(self.r);
        for eff in self.effects {
            let rows = eff
                .assignments
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&(l, c)| {
                            if l == 0 {
                                Err(ModelError::Parse("level indices are 1-based".into()))
                            } else {
                                Ok((l - 1, c))
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            effects.push(RandomEffect::new(eff.levels, rows)?);
        }
        ModelSpec::new(x, effects, self.names)
    }
}

/// One observed cell `(lower, upper]`; `row` is the 1-based observation index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalObservation {
    pub lower: f64,
    pub upper: f64,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDataset {
    observations: Vec<IntervalObservation>,
}

impl IntervalDataset {
    pub fn new(observations: Vec<IntervalObservation>) -> Result<Self, ModelError> {
        if observations.is_empty() {
            return Err(ModelError::Data("dataset is empty".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.row != i + 1 {
                return Err(ModelError::Data(format!(
                    "observation {} has row index {}",
                    i + 1,
                    obs.row
                )));
            }
            if !obs.lower.is_finite() || !obs.upper.is_finite() {
                return Err(ModelError::Data(format!("observation {} has non-finite bounds", obs.row)));
            }
            if obs.lower >= obs.upper {
                return Err(ModelError::Data(format!(
                    "observation {} has empty cell ({}, {}]",
                    obs.row, obs.lower, obs.upper
                )));
            }
        }
        Ok(IntervalDataset { observations })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self, ModelError> {
        Self::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lower, upper))| IntervalObservation { lower, upper, row: i + 1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[IntervalObservation] {
        &self.observations
    }

    pub fn obs(&self, t: usize) -> IntervalObservation {
        self.observations[t]
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper\n");
        for obs in &self.observations {
            out.push_str(&format_f64(obs.lower));
            out.push(',');
            out.push_str(&format_f64(obs.upper));
            out.push('\n');
        }
        out
    }

    pub fn load_csv(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "lower,upper" => {}
            other => {
                return Err(ModelError::Data(format!(
                    "expected header 'lower,upper', got {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut bounds = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (lo, up) = match (parts.next(), parts.next(), parts.next()) {
                (Some(lo), Some(up), None) => (lo, up),
                _ => {
                    return Err(ModelError::Data(format!("line {}: expected two fields", i + 2)));
                }
            };
            let lower = parse_f64(lo)
                .ok_or_else(|| ModelError::Data(format!("line {}: bad number {:?}", i + 2, lo)))?;
            let upper = parse_f64(up)
                .ok_or_else(|| ModelError::Data(format!("line {}: bad number {:?}", i + 2, up)))?;
            bounds.push((lower, upper));
        }
        Self::from_bounds(&bounds)
    }
}

/// Snaps real observations onto the grid of half-open cells
/// `(k*width, (k+1)*width]`.
pub fn discretize(values: &[f64], width: f64) -> Result<IntervalDataset, ModelError> {
    if !(width.is_finite() && width > 0.0) {
        return Err(ModelError::Data(format!("grid width must be positive, got {}", width)));
    }
    let mut bounds = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::Data(format!("observation {} is not finite", i + 1)));
        }
        let mut k = (v / width).ceil() as i64 - 1;
        // Guard the cell membership v in (k*width, (k+1)*width] against
        // rounding in the division.
        if v > (k + 1) as f64 * width {
            k += 1;
        }
        if v <= k as f64 * width {
            k -= 1;
        }
        bounds.push((k as f64 * width, (k + 1) as f64 * width));
    }
    IntervalDataset::from_bounds(&bounds)
}

/// True parameter values: beta coefficients and per-effect scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ParameterVector {
    pub fn new(beta: Vec<f64>, sigma: Vec<f64>) -> Self {
        ParameterVector { beta, sigma }
    }

    pub fn matches(&self, model: &ModelSpec) -> bool {
        self.beta.len() == model.p()
            && self.sigma.len() == model.r()
            && self.sigma.iter().all(|s| s.is_finite() && *s >= 0.0)
            && self.beta.iter().all(|b| b.is_finite())
    }
}
