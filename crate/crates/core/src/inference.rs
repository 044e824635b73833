//! Interval summaries of a finished particle cloud. Each live particle
//! carries a parameter polyhedron; projecting it onto every coordinate gives
//! a weighted collection of boxes, and confidence intervals come from
//! weighted quantiles of the box edges: lower endpoints from the lower-edge
//! distribution, upper endpoints from the upper-edge distribution. That box
//! rule is deliberately conservative for interval data; a midpoint variant
//! is available for sensitivity checks.

use rayon::prelude::*;
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::fmt::{format_f64, parse_f64};
use crate::linalg::{projection_interval, LinalgError};
use crate::model::ModelSpec;
use crate::smc::ParticleSystem;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no particle survived; there is nothing to summarize")]
    NoSurvivors,
    #[error("system has consumed {step} of {n} observations; summaries need the full run")]
    NotFinished { step: usize, n: usize },
    #[error("point estimate undefined: particle {particle} has an unbounded box for {param}")]
    UnboundedBox { particle: usize, param: String },
    #[error("optimization backend failed while projecting particle boxes: {0}")]
    Solver(#[from] LinalgError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
}

/// Weighted parameter boxes of the surviving particles: for particle J and
/// parameter k, the projection [L, U] of J's polyhedron onto coordinate k.
/// Weights are normalized over the survivors; scale coordinates keep their
/// sign constraint, so their boxes live in [0, inf).
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialSample {
    names: Vec<String>,
    /// Number of leading location (fixed-effect) coordinates; the rest are
    /// scales.
    p: usize,
    /// Original particle indices of the survivors, ascending.
    indices: Vec<usize>,
    weights: Vec<f64>,
    /// boxes[j][k] = (lower, upper) for survivor j, parameter k.
    boxes: Vec<Vec<(f64, f64)>>,
}

impl FiducialSample {
    /// Assembles a sample from raw parts, enforcing the shape and weight
    /// invariants. The oracle sampler and the CSV importer both land here.
    pub fn from_parts(
        names: Vec<String>,
        p: usize,
        indices: Vec<usize>,
        weights: Vec<f64>,
        boxes: Vec<Vec<(f64, f64)>>,
    ) -> Result<Self, InferenceError> {
        let m = indices.len();
        if m == 0 {
            return Err(InferenceError::NoSurvivors);
        }
        if weights.len() != m || boxes.len() != m {
            return Err(InferenceError::InvalidInput(format!(
                "{m} particles but {} weights and {} box rows",
                weights.len(),
                boxes.len()
            )));
        }
        if p > names.len() {
            return Err(InferenceError::InvalidInput(format!(
                "{p} location parameters among {} names",
                names.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total - 1.0).abs().le(&1e-9) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(InferenceError::InvalidInput(format!(
                "weights must be nonnegative and sum to 1, got sum {total}"
            )));
        }
        for (row, b) in boxes.iter().enumerate() {
            if b.len() != names.len() {
                return Err(InferenceError::InvalidInput(format!(
                    "box row {row} has {} entries for {} parameters",
                    b.len(),
                    names.len()
                )));
            }
            for (k, &(lo, hi)) in b.iter().enumerate() {
                if !(lo <= hi) {
                    return Err(InferenceError::InvalidInput(format!(
                        "box row {row}, parameter {k}: lower {lo} exceeds upper {hi}"
                    )));
                }
                if k >= p && lo < 0.0 {
                    return Err(InferenceError::InvalidInput(format!(
                        "box row {row}, scale parameter {k}: negative lower end {lo}"
                    )));
                }
            }
        }
        Ok(FiducialSample { names, p, indices, weights, boxes })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Leading location-coordinate count; coordinates at or past this index
    /// are scales.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boxes(&self, particle: usize) -> &[(f64, f64)] {
        &self.boxes[particle]
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Lower box edges of parameter k across particles.
    pub fn lowers(&self, k: usize) -> Vec<f64> {
        self.boxes.iter().map(|b| b[k].0).collect()
    }

    /// Upper box edges of parameter k across particles.
    pub fn uppers(&self, k: usize) -> Vec<f64> {
        self.boxes.iter().map(|b| b[k].1).collect()
    }

    /// Box midpoints of parameter k across particles.
    pub fn midpoints(&self, k: usize) -> Vec<f64> {
        self.boxes.iter().map(|b| 0.5 * (b[k].0 + b[k].1)).collect()
    }
}

/// Projects every survivor's polyhedron onto every parameter coordinate.
/// Weights are renormalized over the survivors, which changes nothing: dead
/// particles already carry weight zero.
pub fn parameter_boxes(
    model: &ModelSpec,
    system: &ParticleSystem,
) -> Result<FiducialSample, InferenceError> {
    if system.step() < model.n() {
        return Err(InferenceError::NotFinished { step: system.step(), n: model.n() });
    }
    let weights_all = system.normalized_weights().ok_or(InferenceError::NoSurvivors)?;
    let survivors: Vec<usize> = system
        .particles()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.alive())
        .map(|(j, _)| j)
        .collect();
    let boxes: Vec<Vec<(f64, f64)>> = survivors
        .par_iter()
        .map(|&j| {
            let cs = system.particles()[j].region();
            (0..model.dim())
                .map(|k| match projection_interval(cs, k) {
                    Ok((lo, hi)) => {
                        // Solver noise on a degenerate box can cross the
                        // endpoints by a hair; collapse, never reorder.
                        let (lo, hi) = if lo <= hi { (lo, hi) } else {
                            debug_assert!(lo - hi < 1e-6, "projection gap {}", lo - hi);
                            let m = 0.5 * (lo + hi);
                            (m, m)
                        };
                        let lo = if k >= model.p() { lo.max(0.0) } else { lo };
                        Ok((lo, hi.max(lo)))
                    }
                    Err(LinalgError::InfeasibleSystem) => {
                        panic!("live particle {j} carries an infeasible polyhedron")
                    }
                    Err(e) => Err(InferenceError::Solver(e)),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let weights: Vec<f64> = survivors.iter().map(|&j| weights_all[j]).collect();
    FiducialSample::from_parts(model.names().to_vec(), model.p(), survivors, weights, boxes)
}

/// Smallest value whose cumulative weight, after sorting by value, reaches q.
/// The comparison carries a 1e-9 slack so that exact-arithmetic answers
/// survive accumulated rounding in the cumulative sum.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64, InferenceError> {
    if values.is_empty() {
        return Err(InferenceError::InvalidInput("quantile of an empty sample".into()));
    }
    if values.len() != weights.len() {
        return Err(InferenceError::InvalidInput(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(InferenceError::InvalidInput(format!("quantile order {q} outside (0, 1)")));
    }
    let total: f64 = weights.iter().sum();
    if !(total - 1.0).abs().le(&1e-9) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(InferenceError::InvalidInput(format!(
            "weights must be nonnegative and sum to 1, got sum {total}"
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= q - 1e-9 {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().unwrap()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiKind {
    TwoSided,
    /// Upper bound only: (-inf, q], with the lower end pinned at 0 for
    /// scale parameters.
    Lower,
    /// Lower bound only: [q, inf).
    Upper,
}

impl fmt::Display for CiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiKind::TwoSided => "two-sided",
            CiKind::Lower => "lower",
            CiKind::Upper => "upper",
        })
    }
}

impl std::str::FromStr for CiKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two-sided" | "two_sided" | "twosided" => Ok(CiKind::TwoSided),
            "lower" => Ok(CiKind::Lower),
            "upper" => Ok(CiKind::Upper),
            other => Err(format!("unknown interval kind {other:?}")),
        }
    }
}

/// Which per-particle value feeds each quantile. `Box` is the conservative
/// default: lower endpoints from the lower edges, upper endpoints from the
/// upper edges. `Midpoint` uses the box midpoint for both, for sensitivity
/// comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    Box,
    Midpoint,
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "box" => Ok(Selection::Box),
            "midpoint" => Ok(Selection::Midpoint),
            other => Err(format!("unknown selection rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceInterval {
    pub param: String,
    /// Confidence level 1 - alpha.
    pub level: f64,
    pub kind: CiKind,
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    /// Pushes the interval through x -> x^2, which is monotone on the
    /// nonnegative half-line the scale parameters live on.
    pub fn squared(&self) -> Result<ConfidenceInterval, InferenceError> {
        if self.lo < 0.0 && self.lo.is_finite() {
            return Err(InferenceError::InvalidInput(format!(
                "cannot square interval for {} with negative lower end {}",
                self.param, self.lo
            )));
        }
        Ok(ConfidenceInterval {
            param: format!("{}^2", self.param),
            level: self.level,
            kind: self.kind,
            lo: if self.lo.is_finite() { self.lo * self.lo } else { self.lo },
            hi: if self.hi.is_finite() { self.hi * self.hi } else { self.hi },
        })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn confidence_interval(
    fs: &FiducialSample,
    k: usize,
    alpha: f64,
    kind: CiKind,
) -> Result<ConfidenceInterval, InferenceError> {
    confidence_interval_with(fs, k, alpha, kind, Selection::Box)
}

pub fn confidence_interval_with(
    fs: &FiducialSample,
    k: usize,
    alpha: f64,
    kind: CiKind,
    selection: Selection,
) -> Result<ConfidenceInterval, InferenceError> {
    if k >= fs.names.len() {
        return Err(InferenceError::InvalidInput(format!(
            "parameter index {k} out of range for {} parameters",
            fs.names.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let (lowers, uppers) = match selection {
        Selection::Box => (fs.lowers(k), fs.uppers(k)),
        Selection::Midpoint => (fs.midpoints(k), fs.midpoints(k)),
    };
    let scale = k >= fs.p;
    let floor = if scale { 0.0 } else { f64::NEG_INFINITY };
    let (lo, hi) = match kind {
        CiKind::TwoSided => (
            weighted_quantile(&lowers, &fs.weights, alpha / 2.0)?,
            weighted_quantile(&uppers, &fs.weights, 1.0 - alpha / 2.0)?,
        ),
        CiKind::Lower => (floor, weighted_quantile(&uppers, &fs.weights, 1.0 - alpha)?),
        CiKind::Upper => (weighted_quantile(&lowers, &fs.weights, alpha)?, f64::INFINITY),
    };
    let lo = if scale { lo.max(0.0) } else { lo };
    Ok(ConfidenceInterval {
        param: fs.names[k].clone(),
        level: 1.0 - alpha,
        kind,
        lo,
        hi: hi.max(lo),
    })
}

/// Weighted average of the box midpoints of parameter k.
pub fn point_estimate(fs: &FiducialSample, k: usize) -> Result<f64, InferenceError> {
    if k >= fs.names.len() {
        return Err(InferenceError::InvalidInput(format!(
            "parameter index {k} out of range for {} parameters",
            fs.names.len()
        )));
    }
    let mut acc = 0.0;
    for (j, b) in fs.boxes.iter().enumerate() {
        let (lo, hi) = b[k];
        if !lo.is_finite() || !hi.is_finite() {
            return Err(InferenceError::UnboundedBox {
                particle: fs.indices[j],
                param: fs.names[k].clone(),
            });
        }
        acc += fs.weights[j] * 0.5 * (lo + hi);
    }
    Ok(acc)
}

/// One CSV row per (particle, parameter), particles in stored order and
/// parameters in model order, every number in the exact round-trip format.
pub fn sample_to_csv(fs: &FiducialSample) -> Result<String, InferenceError> {
    for name in &fs.names {
        if name.contains(',') || name.contains('\n') {
            return Err(InferenceError::InvalidInput(format!(
                "parameter name {name:?} cannot appear in CSV"
            )));
        }
    }
    let mut out = String::from("particle,weight,param,lower,upper\n");
    for (j, b) in fs.boxes.iter().enumerate() {
        for (k, &(lo, hi)) in b.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fs.indices[j],
                format_f64(fs.weights[j]),
                fs.names[k],
                format_f64(lo),
                format_f64(hi)
            ));
        }
    }
    Ok(out)
}

pub fn export_sample(fs: &FiducialSample, path: &Path) -> Result<(), InferenceError> {
    let text = sample_to_csv(fs)?;
    std::fs::write(path, text)
        .map_err(|source| InferenceError::Io { path: path.display().to_string(), source })
}

/// Inverse of `sample_to_csv`. The parameter order of the first particle
/// fixes the schema; every particle must repeat it exactly. Scale
/// coordinates are recognized by their uniformly nonnegative lower edges
/// only through `p`, which the caller supplies because the CSV does not
/// record it.
pub fn sample_from_csv(text: &str, p: usize) -> Result<FiducialSample, InferenceError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("particle,weight,param,lower,upper") => {}
        other => {
            return Err(InferenceError::Parse(format!(
                "expected sample CSV header, got {other:?}"
            )))
        }
    }
    let mut names: Vec<String> = Vec::new();
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut boxes: Vec<Vec<(f64, f64)>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(InferenceError::Parse(format!(
                "line {}: expected 5 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let particle: usize = fields[0]
            .parse()
            .map_err(|_| InferenceError::Parse(format!("line {}: bad particle id", lineno + 2)))?;
        let weight = parse_f64(fields[1])
            .ok_or_else(|| InferenceError::Parse(format!("line {}: bad weight", lineno + 2)))?;
        let lo = parse_f64(fields[3])
            .ok_or_else(|| InferenceError::Parse(format!("line {}: bad lower", lineno + 2)))?;
        let hi = parse_f64(fields[4])
            .ok_or_else(|| InferenceError::Parse(format!("line {}: bad upper", lineno + 2)))?;
        let fresh_particle = indices.last() != Some(&particle);
        if fresh_particle {
            indices.push(particle);
            weights.push(weight);
            boxes.push(Vec::new());
        } else if weights.last() != Some(&weight) {
            return Err(InferenceError::Parse(format!(
                "line {}: weight differs within particle {particle}",
                lineno + 2
            )));
        }
        let slot = boxes.last().unwrap().len();
        if boxes.len() == 1 {
            names.push(fields[2].to_string());
        } else if names.get(slot).map(String::as_str) != Some(fields[2]) {
            return Err(InferenceError::Parse(format!(
                "line {}: parameter order differs from the first particle",
                lineno + 2
            )));
        }
        boxes.last_mut().unwrap().push((lo, hi));
    }
    FiducialSample::from_parts(names, p, indices, weights, boxes)
}

pub fn import_sample(path: &Path, p: usize) -> Result<FiducialSample, InferenceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| InferenceError::Io { path: path.display().to_string(), source })?;
    sample_from_csv(&text, p)
}

/// Report CSV over a batch of intervals: `param,level,kind,lo,hi`.
pub fn ci_report_csv(cis: &[ConfidenceInterval]) -> String {
    let mut out = String::from("param,level,kind,lo,hi\n");
    for ci in cis {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            ci.param,
            format_f64(ci.level),
            ci.kind,
            format_f64(ci.lo),
            format_f64(ci.hi)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_sample(boxes: Vec<Vec<(f64, f64)>>) -> FiducialSample {
        let m = boxes.len();
        let names = (0..boxes[0].len()).map(|k| format!("t{k}")).collect();
        FiducialSample::from_parts(
            names,
            0,
            (0..m).collect(),
            vec![1.0 / m as f64; m],
            boxes,
        )
        .unwrap()
    }

    #[test]
    fn quantile_walks_the_sorted_cumulative_weights() {
        let v = weighted_quantile(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 0.5).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn quantile_handles_unsorted_input_and_point_mass() {
        let v = weighted_quantile(&[5.0, -1.0, 2.0], &[0.0, 1.0, 0.0], 0.9).unwrap();
        assert_eq!(v, -1.0);
        let w = weighted_quantile(&[3.0, 1.0, 2.0], &[1.0 / 3.0; 3], 0.5).unwrap();
        assert_eq!(w, 2.0);
    }

    #[test]
    fn quantile_matches_order_statistics_under_uniform_weights() {
        let values: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let weights = vec![1e-3; 1000];
        assert_eq!(weighted_quantile(&values, &weights, 0.975).unwrap(), 975.0);
        assert_eq!(weighted_quantile(&values, &weights, 0.025).unwrap(), 25.0);
    }

    #[test]
    fn quantile_rejects_bad_input() {
        assert!(weighted_quantile(&[], &[], 0.5).is_err());
        assert!(weighted_quantile(&[1.0], &[0.5], 0.5).is_err());
        assert!(weighted_quantile(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn shared_box_collapses_every_level() {
        let fs = uniform_sample(vec![vec![(2.0, 3.0)]; 7]);
        for alpha in [0.01, 0.05, 0.1, 0.5] {
            let ci = confidence_interval(&fs, 0, alpha, CiKind::TwoSided).unwrap();
            assert_eq!((ci.lo, ci.hi), (2.0, 3.0));
        }
    }

    #[test]
    fn point_boxes_reduce_to_classical_quantiles() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let boxes: Vec<Vec<(f64, f64)>> = values.iter().map(|&v| vec![(v, v)]).collect();
        let fs = uniform_sample(boxes);
        let ci = confidence_interval(&fs, 0, 0.1, CiKind::TwoSided).unwrap();
        let w = vec![0.01; 100];
        assert_eq!(ci.lo, weighted_quantile(&values, &w, 0.05).unwrap());
        assert_eq!(ci.hi, weighted_quantile(&values, &w, 0.95).unwrap());
    }

    #[test]
    fn point_estimate_averages_midpoints() {
        let fs = uniform_sample(vec![vec![(1.0, 3.0)]]);
        assert_eq!(point_estimate(&fs, 0).unwrap(), 2.0);
        let fs = uniform_sample(vec![vec![(0.0, 0.0)], vec![(2.0, 2.0)]]);
        assert_eq!(point_estimate(&fs, 0).unwrap(), 1.0);
    }

    #[test]
    fn point_estimate_refuses_unbounded_boxes() {
        let fs = uniform_sample(vec![vec![(1.0, f64::INFINITY)]]);
        assert!(matches!(
            point_estimate(&fs, 0),
            Err(InferenceError::UnboundedBox { .. })
        ));
    }

    #[test]
    fn squaring_maps_endpoints_monotonically() {
        let ci = ConfidenceInterval {
            param: "s".into(),
            level: 0.95,
            kind: CiKind::TwoSided,
            lo: 0.5,
            hi: 3.0,
        };
        let sq = ci.squared().unwrap();
        assert_eq!((sq.lo, sq.hi), (0.25, 9.0));
        assert_eq!(sq.param, "s^2");
        let upper = ConfidenceInterval {
            param: "s".into(),
            level: 0.95,
            kind: CiKind::Upper,
            lo: 2.0,
            hi: f64::INFINITY,
        };
        assert_eq!(upper.squared().unwrap().hi, f64::INFINITY);
    }
}
