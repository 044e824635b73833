//! Polyhedra over the model parameters and the optimization routines the
//! sampler needs: feasibility, linear objectives, coordinate projections,
//! extremes of affine ratios, and null-space bases for the rejuvenation move.

mod nullspace;
mod simplex;

pub use nullspace::{null_space_basis, null_space_basis_identity, NullBasis};
pub use simplex::EPS_FEAS;

use simplex::{least_violation, minimize, Canonical, DualOutcome};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("system is infeasible")]
    InfeasibleSystem,
    #[error("denominator vanishes on the entire feasible set")]
    DegenerateDenominator,
    #[error(transparent)]
    SolverFailure(#[from] simplex::SolverFailure),
}

/// A row constrains `coeffs . x` to the half-open interval `(lower, upper]`
/// (either end may be infinite). Optimization routines relax the strict
/// lower end to a closed one (the excluded face has measure zero under any
/// continuous draw); decisions that hinge on the half-open region itself
/// being nonempty must go through [`strictly_feasible`] instead, because
/// the closed relaxation can keep a degenerate sliver alive after every
/// interior point is gone.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Closed convex region: interval rows plus sign restrictions on selected
/// coordinates (the scale parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    rows: Vec<LinearConstraint>,
    nonneg: Vec<bool>,
}

impl ConstraintSet {
    pub fn new(dim: usize) -> Self {
        ConstraintSet {
            dim,
            rows: Vec::new(),
            nonneg: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[LinearConstraint] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mark_nonneg(&mut self, index: usize) {
        assert!(index < self.dim, "coordinate {index} out of range");
        self.nonneg[index] = true;
    }

    pub fn nonneg(&self) -> &[bool] {
        &self.nonneg
    }

    pub fn push_row(&mut self, coeffs: Vec<f64>, lower: f64, upper: f64) -> Result<(), LinalgError> {
        if coeffs.len() != self.dim {
            return Err(LinalgError::InvalidInput(format!(
                "row has {} coefficients, region is {}-dimensional",
                coeffs.len(),
                self.dim
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::InvalidInput("row coefficients must be finite".into()));
        }
        if !(lower < upper) || lower.is_nan() || upper.is_nan() {
            return Err(LinalgError::InvalidInput(format!(
                "row bounds must satisfy lower < upper, got ({lower}, {upper})"
            )));
        }
        if lower == f64::NEG_INFINITY && upper == f64::INFINITY {
            return Err(LinalgError::InvalidInput("row with no finite bound is vacuous".into()));
        }
        self.rows.push(LinearConstraint { coeffs, lower, upper });
        Ok(())
    }

    pub fn truncate(&mut self, n_rows: usize) {
        self.rows.truncate(n_rows);
    }

    /// Overwrites one coefficient in place (bounds are immutable).
    pub fn set_coefficient(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite(), "coefficients must be finite");
        self.rows[row].coeffs[col] = value;
    }

    /// Worst violation of the (closed) system at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for row in &self.rows {
            let dot: f64 = row.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let scale = row.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            if row.lower.is_finite() {
                worst = worst.max((row.lower - dot) / scale);
            }
            if row.upper.is_finite() {
                worst = worst.max((dot - row.upper) / scale);
            }
        }
        for (j, &nn) in self.nonneg.iter().enumerate() {
            if nn {
                worst = worst.max(-x[j]);
            }
        }
        worst
    }

    fn canonical(&self) -> Canonical {
        let mut canon = Canonical::new(self.dim);
        let mut neg = vec![0.0; self.dim];
        for row in &self.rows {
            if row.upper.is_finite() {
                for (n, &a) in neg.iter_mut().zip(&row.coeffs) {
                    *n = -a;
                }
                canon.push(&neg, -row.upper);
            }
            if row.lower.is_finite() {
                canon.push(&row.coeffs, row.lower);
            }
        }
        let mut unit = vec![0.0; self.dim];
        for j in 0..self.dim {
            if self.nonneg[j] {
                unit[j] = 1.0;
                canon.push(&unit, 0.0);
                unit[j] = 0.0;
            }
        }
        canon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective at the optimum, recomputed from `point`.
    pub value: Option<f64>,
    pub point: Option<Vec<f64>>,
}

/// Optimizes `objective . x` over the region.
pub fn lp_solve(objective: &[f64], cs: &ConstraintSet, sense: Sense) -> Result<LpResult, LinalgError> {
    if objective.len() != cs.dim() {
        return Err(LinalgError::InvalidInput(format!(
            "objective has {} entries, region is {}-dimensional",
            objective.len(),
            cs.dim()
        )));
    }
    if objective.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::InvalidInput("objective must be finite".into()));
    }
    let canon = cs.canonical();
    solve_canonical(&canon, objective, sense)
}

fn solve_canonical(canon: &Canonical, objective: &[f64], sense: Sense) -> Result<LpResult, LinalgError> {
    let c: Vec<f64> = match sense {
        Sense::Minimize => objective.to_vec(),
        Sense::Maximize => objective.iter().map(|v| -v).collect(),
    };
    match minimize(canon, &c)? {
        DualOutcome::Optimal { point } => {
            let value: f64 = objective.iter().zip(&point).map(|(a, b)| a * b).sum();
            Ok(LpResult {
                status: LpStatus::Optimal,
                value: Some(value),
                point: Some(point),
            })
        }
        DualOutcome::PrimalInfeasible => Ok(LpResult {
            status: LpStatus::Infeasible,
            value: None,
            point: None,
        }),
        DualOutcome::NoCertificate => {
            // Unbounded and infeasible look alike from the dual side; settle
            // it with the feasibility probe.
            let (s, _) = least_violation(canon)?;
            if s <= EPS_FEAS {
                Ok(LpResult {
                    status: LpStatus::Unbounded,
                    value: None,
                    point: None,
                })
            } else {
                Ok(LpResult {
                    status: LpStatus::Infeasible,
                    value: None,
                    point: None,
                })
            }
        }
    }
}

pub fn feasible(cs: &ConstraintSet) -> Result<bool, LinalgError> {
    Ok(feasible_point(cs)?.is_some())
}

/// Margin threshold above which [`strict_slack`] counts as a genuinely
/// interior point; separates true interiors from solver noise around an
/// excluded boundary.
pub const EPS_STRICT: f64 = 1e-8;

/// Largest margin (capped at 1) by which one point can clear every strict
/// lower side at once. Rows constrain to `(lower, upper]`; the plain LP
/// machinery closes the lower side, which is right for optima but wrong for
/// deciding emptiness: a region whose only points sit ON an excluded lower
/// boundary is empty. Upper sides and sign constraints really are closed
/// and get no margin, so a point mass at zero scale stays reachable.
/// Negative margins measure how far the closed region is from existing, a
/// zero margin means only excluded boundary points remain, and `None` means
/// the upper ends and sign constraints alone already exclude everything.
pub fn strict_slack(cs: &ConstraintSet) -> Result<Option<f64>, LinalgError> {
    let dim = cs.dim();
    let mut canon = Canonical::new(dim + 1);
    let mut buf = vec![0.0; dim + 1];
    for row in cs.rows() {
        if row.upper.is_finite() {
            for (b, &a) in buf.iter_mut().zip(&row.coeffs) {
                *b = -a;
            }
            buf[dim] = 0.0;
            canon.push(&buf, -row.upper);
        }
        if row.lower.is_finite() {
            buf[..dim].copy_from_slice(&row.coeffs);
            buf[dim] = -1.0;
            canon.push(&buf, row.lower);
        }
    }
    buf.fill(0.0);
    for (j, &nn) in cs.nonneg().iter().enumerate() {
        if nn {
            buf[j] = 1.0;
            canon.push(&buf, 0.0);
            buf[j] = 0.0;
        }
    }
    buf[dim] = -1.0;
    canon.push(&buf, -1.0);
    let mut objective = vec![0.0; dim + 1];
    objective[dim] = 1.0;
    match solve_canonical(&canon, &objective, Sense::Maximize)? {
        LpResult { status: LpStatus::Optimal, value: Some(s), .. } => Ok(Some(s)),
        _ => Ok(None),
    }
}

/// Whether the half-open region contains a point, i.e. the closed region
/// has a point with real margin on every strict lower side.
pub fn strictly_feasible(cs: &ConstraintSet) -> Result<bool, LinalgError> {
    Ok(matches!(strict_slack(cs)?, Some(s) if s > EPS_STRICT))
}

/// A point of the region if it is nonempty.
pub fn feasible_point(cs: &ConstraintSet) -> Result<Option<Vec<f64>>, LinalgError> {
    let canon = cs.canonical();
    let (s, x) = least_violation(&canon)?;
    Ok((s <= EPS_FEAS).then_some(x))
}

/// Range of coordinate `index` over the region; unbounded sides are +-inf.
pub fn projection_interval(cs: &ConstraintSet, index: usize) -> Result<(f64, f64), LinalgError> {
    if index >= cs.dim() {
        return Err(LinalgError::InvalidInput(format!(
            "coordinate {index} out of range for dimension {}",
            cs.dim()
        )));
    }
    let mut c = vec![0.0; cs.dim()];
    c[index] = 1.0;
    let canon = cs.canonical();
    let lo = match solve_canonical(&canon, &c, Sense::Minimize)? {
        LpResult { status: LpStatus::Optimal, value: Some(v), .. } => v,
        LpResult { status: LpStatus::Unbounded, .. } => f64::NEG_INFINITY,
        _ => return Err(LinalgError::InfeasibleSystem),
    };
    let hi = match solve_canonical(&canon, &c, Sense::Maximize)? {
        LpResult { status: LpStatus::Optimal, value: Some(v), .. } => v,
        LpResult { status: LpStatus::Unbounded, .. } => f64::INFINITY,
        _ => return Err(LinalgError::InfeasibleSystem),
    };
    Ok((lo, hi))
}

/// Charnes-Cooper normalization of a region against one nonnegative
/// denominator coordinate, reusable across several numerators. Extremes of
/// `(numerator . x + constant) / x[den_index]` are taken in the closure sense
/// (limits along recession directions count, so unbounded ratios come back as
/// +-inf); the ratio is understood on the part of the region where the
/// denominator is positive.
pub struct FractionalProgram {
    canon: Canonical,
    dim: usize,
}

impl FractionalProgram {
    /// Normalizes to the denominator: u = 1/x[den], y = u*x. Rows a.x in
    /// (l, u] become a.y - l*u >= 0 and a.y - u_b*u <= 0; the denominator
    /// coordinate is pinned at y[den] = 1 and the region lives in u >= 0
    /// (u = 0 capturing limits along recession directions).
    pub fn new(cs: &ConstraintSet, den_index: usize) -> Result<Self, LinalgError> {
        if den_index >= cs.dim() || !cs.nonneg()[den_index] {
            return Err(LinalgError::InvalidInput(format!(
                "denominator coordinate {den_index} must be a nonnegative coordinate"
            )));
        }
        let d = cs.dim();
        let mut canon = Canonical::new(d + 1);
        let mut g = vec![0.0; d + 1];
        for row in cs.rows() {
            if row.upper.is_finite() {
                for (gi, &a) in g.iter_mut().zip(&row.coeffs) {
                    *gi = -a;
                }
                g[d] = row.upper;
                canon.push(&g, 0.0);
            }
            if row.lower.is_finite() {
                for (gi, &a) in g.iter_mut().zip(&row.coeffs) {
                    *gi = a;
                }
                g[d] = -row.lower;
                canon.push(&g, 0.0);
            }
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..d {
            if cs.nonneg()[j] {
                g[j] = 1.0;
                canon.push(&g, 0.0);
                g[j] = 0.0;
            }
        }
        g[d] = 1.0;
        canon.push(&g, 0.0); // u >= 0
        g[d] = 0.0;
        g[den_index] = 1.0;
        canon.push(&g, 1.0); // y[den] = 1, both sides
        g[den_index] = -1.0;
        canon.push(&g, -1.0);
        Ok(FractionalProgram { canon, dim: d })
    }

    /// One-sided extreme of a ratio with the given numerator. An empty
    /// normalized system reports `InfeasibleSystem`; callers who need to
    /// distinguish a vanishing denominator from an empty region check the
    /// region separately.
    pub fn extreme(&self, numerator: &[f64], constant: f64, sense: Sense) -> Result<f64, LinalgError> {
        if numerator.len() != self.dim {
            return Err(LinalgError::InvalidInput(format!(
                "numerator has {} entries, region is {}-dimensional",
                numerator.len(),
                self.dim
            )));
        }
        if numerator.iter().any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(LinalgError::InvalidInput("numerator must be finite".into()));
        }
        let mut objective = numerator.to_vec();
        objective.push(constant);
        match solve_canonical(&self.canon, &objective, sense)? {
            LpResult { status: LpStatus::Optimal, value: Some(v), .. } => Ok(v),
            LpResult { status: LpStatus::Unbounded, .. } => Ok(match sense {
                Sense::Minimize => f64::NEG_INFINITY,
                Sense::Maximize => f64::INFINITY,
            }),
            _ => Err(LinalgError::InfeasibleSystem),
        }
    }
}

/// Both extremes of `(numerator . x + constant) / x[den_index]` over the
/// region; see `FractionalProgram`.
pub fn linear_fractional_extremes(
    cs: &ConstraintSet,
    numerator: &[f64],
    constant: f64,
    den_index: usize,
) -> Result<(f64, f64), LinalgError> {
    let fp = FractionalProgram::new(cs, den_index)?;
    let classify = |e| match e {
        LinalgError::InfeasibleSystem => classify_fractional_failure(cs).unwrap_or_else(|e| e),
        other => other,
    };
    let lo = fp.extreme(numerator, constant, Sense::Minimize).map_err(classify)?;
    let hi = fp.extreme(numerator, constant, Sense::Maximize).map_err(classify)?;
    Ok((lo, hi))
}

/// The normalized system is empty either because the region itself is empty
/// or because the denominator vanishes on all of it.
fn classify_fractional_failure(cs: &ConstraintSet) -> Result<LinalgError, LinalgError> {
    if feasible(cs)? {
        Ok(LinalgError::DegenerateDenominator)
    } else {
        Ok(LinalgError::InfeasibleSystem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(bounds: &[(f64, f64)]) -> ConstraintSet {
        let dim = bounds.len();
        let mut cs = ConstraintSet::new(dim);
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            let mut coeffs = vec![0.0; dim];
            coeffs[j] = 1.0;
            cs.push_row(coeffs, lo, hi).unwrap();
        }
        cs
    }

    #[test]
    fn rejects_malformed_rows() {
        let mut cs = ConstraintSet::new(2);
        assert!(cs.push_row(vec![1.0], 0.0, 1.0).is_err());
        assert!(cs.push_row(vec![1.0, 0.0], 1.0, 1.0).is_err());
        assert!(cs.push_row(vec![1.0, 0.0], 2.0, 1.0).is_err());
        assert!(cs.push_row(vec![1.0, f64::NAN], 0.0, 1.0).is_err());
        assert!(cs
            .push_row(vec![1.0, 0.0], f64::NEG_INFINITY, f64::INFINITY)
            .is_err());
    }

    #[test]
    fn maximizes_over_pentagon() {
        // x in [0,2], y in [0,3], x + y <= 5: max of x + y is 5.
        let mut cs = boxed(&[(0.0, 2.0), (0.0, 3.0)]);
        cs.push_row(vec![1.0, 1.0], f64::NEG_INFINITY, 5.0).unwrap();
        let res = lp_solve(&[1.0, 1.0], &cs, Sense::Maximize).unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert!((res.value.unwrap() - 5.0).abs() < 1e-9);
        let p = res.point.unwrap();
        assert!((p[0] - 2.0).abs() < 1e-8 && (p[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn reports_infeasible_status() {
        let mut cs = boxed(&[(0.0, 1.0)]);
        cs.push_row(vec![1.0], 2.0, 3.0).unwrap();
        let res = lp_solve(&[1.0], &cs, Sense::Minimize).unwrap();
        assert_eq!(res.status, LpStatus::Infeasible);
        assert!(res.value.is_none() && res.point.is_none());
        assert!(!feasible(&cs).unwrap());
    }

    #[test]
    fn reports_unbounded_status() {
        let mut cs = ConstraintSet::new(1);
        cs.mark_nonneg(0);
        cs.push_row(vec![1.0], 1.0, f64::INFINITY).unwrap();
        let res = lp_solve(&[1.0], &cs, Sense::Maximize).unwrap();
        assert_eq!(res.status, LpStatus::Unbounded);
    }

    #[test]
    fn strictness_separates_touching_cells() {
        // (0, 1] and (1, 2] on the same value share only the excluded point
        // 1, so the closed relaxation is feasible while the half-open region
        // is empty.
        let mut cs = ConstraintSet::new(1);
        cs.push_row(vec![1.0], 0.0, 1.0).unwrap();
        cs.push_row(vec![1.0], 1.0, 2.0).unwrap();
        assert!(feasible(&cs).unwrap());
        assert!(!strictly_feasible(&cs).unwrap());
        let s = strict_slack(&cs).unwrap().unwrap();
        assert!(s.abs() <= 1e-7, "boundary sliver should have no margin, got {s}");

        // Widening the second cell restores an interior.
        let mut cs = ConstraintSet::new(1);
        cs.push_row(vec![1.0], 0.0, 1.0).unwrap();
        cs.push_row(vec![0.5], 0.0, 2.0).unwrap();
        assert!(strictly_feasible(&cs).unwrap());
    }

    #[test]
    fn strictness_keeps_closed_faces_reachable() {
        // Sign constraints and upper ends are closed: a region pinched to
        // the single point x = 0 by x >= 0 and a cell with upper end 0 still
        // counts, because only the lower end of a cell is excluded.
        let mut cs = ConstraintSet::new(1);
        cs.mark_nonneg(0);
        cs.push_row(vec![1.0], -2.0, 0.0).unwrap();
        assert!(strictly_feasible(&cs).unwrap());
        // The lone strict side sits 2 away; the margin is capped at 1.
        let s = strict_slack(&cs).unwrap().unwrap();
        assert!((s - 1.0).abs() < 1e-8, "{s}");
    }

    #[test]
    fn strict_slack_measures_the_interior() {
        let mut cs = ConstraintSet::new(1);
        cs.push_row(vec![1.0], 0.0, 0.4).unwrap();
        let s = strict_slack(&cs).unwrap().unwrap();
        assert!((s - 0.4).abs() < 1e-8, "{s}");

        // Closed-empty regions report a negative margin: the gap between
        // x <= 1 and the strict side at 2 is exactly 1.
        let mut cs = boxed(&[(0.0, 1.0)]);
        cs.push_row(vec![1.0], 2.0, 3.0).unwrap();
        let s = strict_slack(&cs).unwrap().unwrap();
        assert!((s + 1.0).abs() < 1e-8, "{s}");
        assert!(!strictly_feasible(&cs).unwrap());

        // Contradictory closed sides leave nothing even with the strict
        // sides dropped.
        let mut cs = ConstraintSet::new(1);
        cs.mark_nonneg(0);
        cs.push_row(vec![1.0], f64::NEG_INFINITY, -1.0).unwrap();
        assert!(strict_slack(&cs).unwrap().is_none());
        assert!(!strictly_feasible(&cs).unwrap());
    }

    #[test]
    fn strictness_rejects_the_degenerate_scale_sliver() {
        // Two observations of one group in adjacent cells, with the
        // residual latents ordered against the cells: the closed relaxation
        // keeps a zero-scale sliver pinned at the shared boundary, but no
        // half-open point exists. Flipping the latent order restores a
        // genuine interior.
        for &(e1, e2, want) in &[(1.0, -1.0, false), (-1.0, 1.0, true)] {
            let mut cs = ConstraintSet::new(2);
            cs.mark_nonneg(1);
            cs.push_row(vec![1.0, e1], 0.0, 0.5).unwrap();
            cs.push_row(vec![1.0, e2], 0.5, 1.0).unwrap();
            assert!(feasible(&cs).unwrap());
            assert_eq!(strictly_feasible(&cs).unwrap(), want, "e1={e1} e2={e2}");
        }
    }

    #[test]
    fn projection_of_a_slab() {
        // One two-sided row in two variables: the first coordinate spans
        // everything the row allows once the second is free.
        let mut cs = ConstraintSet::new(2);
        cs.push_row(vec![1.0, 0.0], 0.25, 2.5).unwrap();
        let (lo, hi) = projection_interval(&cs, 0).unwrap();
        assert!((lo - 0.25).abs() < 1e-9 && (hi - 2.5).abs() < 1e-9);
        let (lo, hi) = projection_interval(&cs, 1).unwrap();
        assert_eq!((lo, hi), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn projection_requires_feasibility() {
        let mut cs = boxed(&[(0.0, 1.0)]);
        cs.push_row(vec![1.0], 2.0, 3.0).unwrap();
        assert!(matches!(projection_interval(&cs, 0), Err(LinalgError::InfeasibleSystem)));
    }

    #[test]
    fn ratio_over_a_singleton() {
        // {x0 = 3, x1 = 2} pinned by opposing one-sided rows.
        let mut cs = ConstraintSet::new(2);
        cs.mark_nonneg(1);
        cs.push_row(vec![1.0, 0.0], 3.0, f64::INFINITY).unwrap();
        cs.push_row(vec![1.0, 0.0], f64::NEG_INFINITY, 3.0).unwrap();
        cs.push_row(vec![0.0, 1.0], 2.0, f64::INFINITY).unwrap();
        cs.push_row(vec![0.0, 1.0], f64::NEG_INFINITY, 2.0).unwrap();
        let (lo, hi) = linear_fractional_extremes(&cs, &[1.0, 0.0], 0.0, 1).unwrap();
        assert!((lo - 1.5).abs() < 1e-9, "{lo}");
        assert!((hi - 1.5).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn ratio_over_a_box() {
        // num = x0 + 1 over x0 in [1,3], den = x1 in [0.5, 2]:
        // min = 2/2 = 1, max = 4/0.5 = 8.
        let mut cs = boxed(&[(1.0, 3.0), (0.5, 2.0)]);
        cs.mark_nonneg(1);
        let (lo, hi) = linear_fractional_extremes(&cs, &[1.0, 0.0], 1.0, 1).unwrap();
        assert!((lo - 1.0).abs() < 1e-8, "{lo}");
        assert!((hi - 8.0).abs() < 1e-8, "{hi}");
    }

    #[test]
    fn ratio_with_free_numerator_is_unbounded() {
        // Whole quadrant: (a - x0)/x1 over x0 free, x1 >= 0 spans all reals.
        let mut cs = ConstraintSet::new(2);
        cs.mark_nonneg(1);
        cs.push_row(vec![0.0, 1.0], f64::NEG_INFINITY, 10.0).unwrap();
        let (lo, hi) = linear_fractional_extremes(&cs, &[-1.0, 0.0], 1.0, 1).unwrap();
        assert_eq!(lo, f64::NEG_INFINITY);
        assert_eq!(hi, f64::INFINITY);
    }

    #[test]
    fn ratio_errors_distinguish_empty_from_degenerate() {
        // Empty region.
        let mut cs = boxed(&[(0.0, 1.0), (0.5, 2.0)]);
        cs.mark_nonneg(1);
        cs.push_row(vec![1.0, 0.0], 2.0, 3.0).unwrap();
        assert!(matches!(
            linear_fractional_extremes(&cs, &[1.0, 0.0], 0.0, 1),
            Err(LinalgError::InfeasibleSystem)
        ));

        // Denominator pinned to zero on a nonempty region.
        let mut cs = ConstraintSet::new(2);
        cs.mark_nonneg(1);
        cs.push_row(vec![1.0, 0.0], 0.0, 1.0).unwrap();
        cs.push_row(vec![0.0, 1.0], f64::NEG_INFINITY, 0.0).unwrap();
        assert!(matches!(
            linear_fractional_extremes(&cs, &[1.0, 0.0], 0.0, 1),
            Err(LinalgError::DegenerateDenominator)
        ));
    }

    #[test]
    fn optimal_points_satisfy_constraints() {
        // Deterministic battery of slanted systems; residuals stay within
        // the feasibility tolerance and values match recomputation.
        for k in 0..50 {
            let a = 0.1 + 0.07 * k as f64;
            let mut cs = boxed(&[(-1.0 - a, 2.0), (0.0, 1.0 + a)]);
            cs.push_row(vec![1.0, a], f64::NEG_INFINITY, 2.0).unwrap();
            cs.push_row(vec![-a, 1.0], -3.0, f64::INFINITY).unwrap();
            let res = lp_solve(&[1.0, -a], &cs, Sense::Minimize).unwrap();
            assert_eq!(res.status, LpStatus::Optimal);
            let p = res.point.unwrap();
            assert!(cs.max_violation(&p) <= EPS_FEAS * 10.0, "violation {}", cs.max_violation(&p));
            let recomputed = p[0] - a * p[1];
            assert!((recomputed - res.value.unwrap()).abs() <= 1e-9 * (1.0 + recomputed.abs()));
        }
    }
}
