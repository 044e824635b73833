//! Ground truth by brute force: draw complete latent vectors, keep the ones
//! whose constraint system is nonempty, and report their parameter boxes
//! with uniform weights. Exponentially wasteful, which is why it is fenced
//! to tiny instances, but it involves none of the sequential machinery and
//! so anchors the sampler's acceptance tests.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use fidmix_core::inference::FiducialSample;
use fidmix_core::linalg::{projection_interval, strictly_feasible, ConstraintSet};
use fidmix_core::model::{IntervalDataset, ModelSpec};
use fidmix_core::smc::RngStream;

use crate::HarnessError;

const ORACLE_N_LIMIT: usize = 6;
const BLOCK: usize = 4096;

pub fn rejection_oracle(
    model: &ModelSpec,
    data: &IntervalDataset,
    draws: usize,
    stream: &RngStream,
) -> Result<FiducialSample, HarnessError> {
    if model.n() > ORACLE_N_LIMIT {
        return Err(HarnessError::OracleTooLarge { n: model.n(), limit: ORACLE_N_LIMIT });
    }
    if data.len() != model.n() {
        return Err(HarnessError::InvalidConfig(format!(
            "dataset has {} observations, the model wants {}",
            data.len(),
            model.n()
        )));
    }
    if draws == 0 {
        return Err(HarnessError::InvalidConfig("draw budget must be positive".into()));
    }
    let blocks = draws.div_ceil(BLOCK);
    let accepted: Vec<(usize, Vec<(f64, f64)>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.oracle(b);
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(draws);
            let mut hits = Vec::new();
            for index in lo..hi {
                let z: Vec<Vec<f64>> = model
                    .effects()
                    .iter()
                    .map(|e| (0..e.levels()).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect();
                let cs = constraints_for(model, data, &z);
                if strictly_feasible(&cs).expect("oracle feasibility check failed") {
                    let b: Vec<(f64, f64)> = (0..model.dim())
                        .map(|k| {
                            let (lo, hi) = projection_interval(&cs, k)
                                .expect("oracle projection failed on a feasible system");
                            // Degenerate boxes can cross by solver noise.
                            let (lo, hi) = if lo <= hi { (lo, hi) } else {
                                let m = 0.5 * (lo + hi);
                                (m, m)
                            };
                            let lo = if k >= model.p() { lo.max(0.0) } else { lo };
                            (lo, hi.max(lo))
                        })
                        .collect();
                    hits.push((index, b));
                }
            }
            hits
        })
        .flatten()
        .collect();
    if accepted.is_empty() {
        return Err(HarnessError::OracleStarved { draws });
    }
    let m = accepted.len();
    let (indices, boxes): (Vec<usize>, Vec<Vec<(f64, f64)>>) = accepted.into_iter().unzip();
    Ok(FiducialSample::from_parts(
        model.names().to_vec(),
        model.p(),
        indices,
        vec![1.0 / m as f64; m],
        boxes,
    )?)
}

fn constraints_for(model: &ModelSpec, data: &IntervalDataset, z: &[Vec<f64>]) -> ConstraintSet {
    let mut cs = ConstraintSet::new(model.dim());
    for k in model.p()..model.dim() {
        cs.mark_nonneg(k);
    }
    for t in 0..model.n() {
        let mut coeffs = model.x_row(t);
        for (i, e) in model.effects().iter().enumerate() {
            coeffs.push(e.row(t).iter().map(|&(l, c)| c * z[i][l]).sum());
        }
        let obs = data.obs(t);
        cs.push_row(coeffs, obs.lower, obs.upper).expect("oracle rows are well formed");
    }
    cs
}

/// Kolmogorov distance between two weighted empirical distributions:
/// largest gap between the step functions, evaluated after every jump.
/// Weights are renormalized defensively.
pub fn ks_distance(a_vals: &[f64], a_w: &[f64], b_vals: &[f64], b_w: &[f64]) -> f64 {
    assert_eq!(a_vals.len(), a_w.len());
    assert_eq!(b_vals.len(), b_w.len());
    let prep = |vals: &[f64], w: &[f64]| -> Vec<(f64, f64)> {
        let total: f64 = w.iter().sum();
        let mut pairs: Vec<(f64, f64)> = vals.iter().copied().zip(w.iter().map(|v| v / total)).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs
    };
    let a = prep(a_vals, a_w);
    let b = prep(b_vals, b_w);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut sup: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let next_a = a.get(i).map(|p| p.0).unwrap_or(f64::INFINITY);
        let next_b = b.get(j).map(|p| p.0).unwrap_or(f64::INFINITY);
        let x = next_a.min(next_b);
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    sup
}
