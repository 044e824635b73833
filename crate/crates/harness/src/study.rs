//! Replicated coverage studies: generate a data set from the truth,
//! discretize it onto the grid, run the sampler, score every confidence
//! interval against the true values, and aggregate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fidmix_core::fmt::format_f64;
use fidmix_core::inference::{
    confidence_interval_with, parameter_boxes, CiKind, Selection,
};
use fidmix_core::model::{discretize, ModelSpec, ParameterVector};
use fidmix_core::smc::{run, RngStream, RunConfig};

use crate::catalog::{design, parameter_set};
use crate::HarnessError;

/// One draw of the forward model: fixed part plus every random effect's
/// scaled contribution, latents standard normal in effect order then level
/// order.
pub fn generate_data(
    model: &ModelSpec,
    truth: &ParameterVector,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, HarnessError> {
    if !truth.matches(model) {
        return Err(HarnessError::InvalidConfig(format!(
            "truth has {} locations and {} scales, model wants {} and {}",
            truth.beta.len(),
            truth.sigma.len(),
            model.p(),
            model.r()
        )));
    }
    let z: Vec<Vec<f64>> = model
        .effects()
        .iter()
        .map(|e| (0..e.levels()).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let mut y = Vec::with_capacity(model.n());
    for t in 0..model.n() {
        let fixed: f64 = model.x_row(t).iter().zip(&truth.beta).map(|(x, b)| x * b).sum();
        let noise: f64 = model
            .effects()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                truth.sigma[i]
                    * e.row(t).iter().map(|&(l, c)| c * z[i][l]).sum::<f64>()
            })
            .sum();
        y.push(fixed + noise);
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub design: String,
    pub params: String,
    pub replicates: usize,
    pub particles: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Grid width; when absent, 1% of the truth's total standard deviation.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<CiKind>,
    #[serde(default = "default_threshold")]
    pub threshold_ratio: f64,
    #[serde(default)]
    pub selection: Selection,
}

fn default_kinds() -> Vec<CiKind> {
    vec![CiKind::TwoSided]
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub param: String,
    pub kind: CiKind,
    /// Fraction of successful replicates whose interval contained the true
    /// value.
    pub coverage: f64,
    /// Mean length over the finite intervals; +inf when none were finite.
    pub avg_length: f64,
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub design: String,
    pub paramset: String,
    pub level: f64,
    /// Grid width the replicates actually used.
    pub h: f64,
    pub rows: Vec<ReportRow>,
    pub replicates: usize,
    pub failures: usize,
    pub warnings: Vec<String>,
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("design,paramset,param,kind,level,coverage,avg_length,reps,failures\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.design,
                self.paramset,
                row.param,
                row.kind,
                format_f64(self.level),
                format_f64(row.coverage),
                format_f64(row.avg_length),
                row.reps,
                row.failures
            ));
        }
        out
    }
}

/// Interval verdicts of one successful replicate, laid out param-major in
/// the same order the report rows will use.
struct RepScore {
    hits: Vec<bool>,
    lengths: Vec<f64>,
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    let entry = design(&cfg.design).ok_or_else(|| HarnessError::UnknownDesign(cfg.design.clone()))?;
    let pset =
        parameter_set(&cfg.params).ok_or_else(|| HarnessError::UnknownParameterSet(cfg.params.clone()))?;
    let model = entry.build()?;
    let truth = pset.truth();
    if !truth.matches(&model) {
        return Err(HarnessError::Mismatch {
            design: cfg.design.clone(),
            params: cfg.params.clone(),
            detail: format!(
                "{} variance components for {} random effects",
                pset.variances.len(),
                model.r()
            ),
        });
    }
    if cfg.replicates == 0 {
        return Err(HarnessError::InvalidConfig("replicates must be positive".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(HarnessError::InvalidConfig(format!("alpha {} outside (0, 1)", cfg.alpha)));
    }
    if cfg.kinds.is_empty() {
        return Err(HarnessError::InvalidConfig("at least one interval kind is required".into()));
    }
    let h = match cfg.h {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(HarnessError::InvalidConfig(format!("grid width {h} must be positive"))),
        None => {
            let sd = pset.total_sd();
            if sd <= 0.0 {
                return Err(HarnessError::InvalidConfig(
                    "default grid width needs a positive total standard deviation".into(),
                ));
            }
            0.01 * sd
        }
    };

    // Report grid: every model parameter crossed with every interval kind,
    // scales reported on the variance scale.
    let mut names = Vec::with_capacity(model.dim());
    let mut targets = Vec::with_capacity(model.dim());
    for k in 0..model.p() {
        names.push(model.names()[k].clone());
        targets.push(truth.beta[k]);
    }
    for i in 0..model.r() {
        names.push(format!("{}^2", model.names()[model.p() + i]));
        targets.push(pset.variances[i]);
    }

    let stream = RngStream::new(cfg.seed);
    let outcomes: Vec<Result<RepScore, String>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| score_replicate(&model, &truth, cfg, h, &stream, rep))
        .collect();

    let cells = model.dim() * cfg.kinds.len();
    let mut hit_counts = vec![0usize; cells];
    let mut len_sums = vec![0.0f64; cells];
    let mut len_counts = vec![0usize; cells];
    let mut used = 0usize;
    let mut failures = 0usize;
    let mut last_error = String::new();
    for outcome in outcomes {
        match outcome {
            Ok(score) => {
                used += 1;
                for c in 0..cells {
                    hit_counts[c] += score.hits[c] as usize;
                    if score.lengths[c].is_finite() {
                        len_sums[c] += score.lengths[c];
                        len_counts[c] += 1;
                    }
                }
            }
            Err(e) => {
                failures += 1;
                last_error = e;
            }
        }
    }
    if used == 0 {
        return Err(HarnessError::AllReplicatesFailed(last_error));
    }
    let mut warnings = Vec::new();
    if failures * 10 > cfg.replicates {
        warnings.push(format!(
            "{failures} of {} replicates failed; coverage is computed on the survivors only",
            cfg.replicates
        ));
    }

    let mut rows = Vec::with_capacity(cells);
    for (k, name) in names.iter().enumerate() {
        for (q, &kind) in cfg.kinds.iter().enumerate() {
            let c = k * cfg.kinds.len() + q;
            rows.push(ReportRow {
                param: name.clone(),
                kind,
                coverage: hit_counts[c] as f64 / used as f64,
                avg_length: if len_counts[c] > 0 {
                    len_sums[c] / len_counts[c] as f64
                } else {
                    f64::INFINITY
                },
                reps: used,
                failures,
            });
        }
    }
    Ok(StudyReport {
        design: cfg.design.clone(),
        paramset: cfg.params.clone(),
        level: 1.0 - cfg.alpha,
        h,
        rows,
        replicates: cfg.replicates,
        failures,
        warnings,
    })
}

fn score_replicate(
    model: &ModelSpec,
    truth: &ParameterVector,
    cfg: &StudyConfig,
    h: f64,
    stream: &RngStream,
    rep: usize,
) -> Result<RepScore, String> {
    let mut rng = stream.data_gen(rep);
    let run_seed: u64 = rng.gen();
    let y = generate_data(model, truth, &mut rng).map_err(|e| e.to_string())?;
    let data = discretize(&y, h).map_err(|e| e.to_string())?;
    let run_cfg = RunConfig {
        particles: cfg.particles,
        seed: run_seed,
        threshold_ratio: cfg.threshold_ratio,
    };
    let system = run(model, &data, &run_cfg).map_err(|e| e.to_string())?;
    let fs = parameter_boxes(model, &system).map_err(|e| e.to_string())?;

    let cells = model.dim() * cfg.kinds.len();
    let mut hits = Vec::with_capacity(cells);
    let mut lengths = Vec::with_capacity(cells);
    for k in 0..model.dim() {
        let scale = k >= model.p();
        let target = if scale {
            truth.sigma[k - model.p()].powi(2)
        } else {
            truth.beta[k]
        };
        for &kind in &cfg.kinds {
            let ci = confidence_interval_with(&fs, k, cfg.alpha, kind, cfg.selection)
                .map_err(|e| e.to_string())?;
            let ci = if scale { ci.squared().map_err(|e| e.to_string())? } else { ci };
            hits.push(ci.contains(target));
            lengths.push(ci.length());
        }
    }
    Ok(RepScore { hits, lengths })
}
