//! Differential tests of the LP layer against an independent tableau
//! simplex, plus the documented edge cases.

use fidmix_core::linalg::{feasible, lp_solve, ConstraintSet, LpStatus, Sense, EPS_FEAS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference solver: primal two-phase tableau simplex on `min c.x` subject
/// to `G x >= h` with x free. Free variables are split into positive and
/// negative parts, surplus columns appended, Bland's rule used throughout.
/// Slow and literal on purpose; shares nothing with the library kernel.
mod tableau {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum RefStatus {
        Optimal(f64),
        Infeasible,
        Unbounded,
    }

    const TOL: f64 = 1e-9;

    pub fn solve(c: &[f64], rows: &[(Vec<f64>, f64)]) -> RefStatus {
        let d = c.len();
        let m = rows.len();
        if m == 0 {
            return if c.iter().all(|&v| v == 0.0) {
                RefStatus::Optimal(0.0)
            } else {
                RefStatus::Unbounded
            };
        }
        let n_real = 2 * d + m;
        let n = n_real + m;
        let mut t = vec![vec![0.0; n + 1]; m];
        for (i, (g, h)) in rows.iter().enumerate() {
            let flip = if *h < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                t[i][j] = flip * g[j];
                t[i][d + j] = -flip * g[j];
            }
            t[i][2 * d + i] = -flip;
            t[i][n_real + i] = 1.0;
            t[i][n] = flip * h;
        }
        let mut basis: Vec<usize> = (0..m).map(|i| n_real + i).collect();

        let phase1: Vec<f64> = (0..n).map(|j| if j >= n_real { 1.0 } else { 0.0 }).collect();
        if run(&mut t, &mut basis, &phase1, n_real + m) == Phase::Unbounded {
            panic!("phase 1 is bounded below by zero");
        }
        let infeas: f64 = basis
            .iter()
            .zip(&t)
            .filter(|(&b, _)| b >= n_real)
            .map(|(_, row)| row[n])
            .sum();
        if infeas > 1e-7 {
            return RefStatus::Infeasible;
        }
        // Swap lingering artificials for any real column with support.
        for r in 0..m {
            if basis[r] >= n_real {
                if let Some(j) = (0..n_real).find(|&j| t[r][j].abs() > 1e-7) {
                    pivot(&mut t, &mut basis, r, j);
                }
            }
        }

        let mut cost = vec![0.0; n];
        for j in 0..d {
            cost[j] = c[j];
            cost[d + j] = -c[j];
        }
        if run(&mut t, &mut basis, &cost, n_real) == Phase::Unbounded {
            return RefStatus::Unbounded;
        }
        let value: f64 = basis.iter().zip(&t).map(|(&b, row)| cost[b] * row[n]).sum();
        RefStatus::Optimal(value)
    }

    #[derive(PartialEq)]
    enum Phase {
        Converged,
        Unbounded,
    }

    fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) -> Phase {
        let m = t.len();
        let n = t[0].len() - 1;
        for _ in 0..20_000 {
            let mut reduced = cost.to_vec();
            for (r, &b) in basis.iter().enumerate() {
                let cb = cost[b];
                if cb != 0.0 {
                    for j in 0..n {
                        reduced[j] -= cb * t[r][j];
                    }
                }
            }
            let Some(enter) = (0..enter_limit).find(|&j| reduced[j] < -TOL) else {
                return Phase::Converged;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if t[r][enter] > TOL {
                    let ratio = t[r][n] / t[r][enter];
                    let better = match leave {
                        None => true,
                        Some((cur, best)) => {
                            ratio < best - 1e-12
                                || (ratio < best + 1e-12 && basis[r] < basis[cur])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((leave, _)) = leave else {
                return Phase::Unbounded;
            };
            pivot(t, basis, leave, enter);
        }
        panic!("reference simplex exceeded its iteration budget");
    }

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
        let n = t[0].len() - 1;
        let piv = t[r][j];
        for col in 0..=n {
            t[r][col] /= piv;
        }
        for row in 0..t.len() {
            if row != r {
                let f = t[row][j];
                if f != 0.0 {
                    for col in 0..=n {
                        t[row][col] -= f * t[r][col];
                    }
                }
            }
        }
        basis[r] = j;
    }
}

/// A random instance plus its `G x >= h` row expansion for the oracle.
struct Instance {
    cs: ConstraintSet,
    raw: Vec<(Vec<f64>, f64)>,
    objective: Vec<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let dim = rng.gen_range(1..=4);
    let mut cs = ConstraintSet::new(dim);
    let mut raw = Vec::new();
    if rng.gen_bool(0.6) {
        // Bounding box keeps a good share of instances bounded.
        for j in 0..dim {
            let half = rng.gen_range(5.0..50.0);
            let mut coeffs = vec![0.0; dim];
            coeffs[j] = 1.0;
            cs.push_row(coeffs.clone(), -half, half).unwrap();
            raw.push((coeffs.clone(), -half));
            let neg: Vec<f64> = coeffs.iter().map(|v| -v).collect();
            raw.push((neg, -half));
        }
    }
    for _ in 0..rng.gen_range(1..=8) {
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if coeffs.iter().all(|v| v.abs() < 1e-3) {
            continue;
        }
        let center = rng.gen_range(-4.0..4.0);
        let width = rng.gen_range(0.1..6.0);
        let (lower, upper) = match rng.gen_range(0..3) {
            0 => (f64::NEG_INFINITY, center),
            1 => (center, f64::INFINITY),
            _ => (center - width, center + width),
        };
        cs.push_row(coeffs.clone(), lower, upper).unwrap();
        if upper.is_finite() {
            let neg: Vec<f64> = coeffs.iter().map(|v| -v).collect();
            raw.push((neg, -upper));
        }
        if lower.is_finite() {
            raw.push((coeffs.clone(), lower));
        }
    }
    for j in 0..dim {
        if rng.gen_bool(0.4) {
            cs.mark_nonneg(j);
            let mut unit = vec![0.0; dim];
            unit[j] = 1.0;
            raw.push((unit, 0.0));
        }
    }
    let objective: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Instance { cs, raw, objective }
}

#[test]
fn matches_reference_simplex_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b5d_77a1);
    let mut optimal = 0;
    let mut infeasible = 0;
    let mut unbounded = 0;
    for case in 0..400 {
        let inst = random_instance(&mut rng);
        let ours = lp_solve(&inst.objective, &inst.cs, Sense::Minimize).unwrap();
        let theirs = tableau::solve(&inst.objective, &inst.raw);
        match (ours.status, theirs) {
            (LpStatus::Optimal, tableau::RefStatus::Optimal(v)) => {
                optimal += 1;
                let value = ours.value.unwrap();
                assert!(
                    (value - v).abs() <= 1e-7 * (1.0 + v.abs()),
                    "case {case}: value {value} vs reference {v}"
                );
                let point = ours.point.unwrap();
                assert!(
                    inst.cs.max_violation(&point) <= 10.0 * EPS_FEAS,
                    "case {case}: optimal point violates constraints by {}",
                    inst.cs.max_violation(&point)
                );
            }
            (LpStatus::Infeasible, tableau::RefStatus::Infeasible) => infeasible += 1,
            (LpStatus::Unbounded, tableau::RefStatus::Unbounded) => unbounded += 1,
            (mine, reference) => panic!("case {case}: {mine:?} vs reference {reference:?}"),
        }
    }
    // The generator should exercise every outcome.
    assert!(optimal > 100, "only {optimal} optimal cases");
    assert!(infeasible > 20, "only {infeasible} infeasible cases");
    assert!(unbounded > 20, "only {unbounded} unbounded cases");
}

#[test]
fn scalar_box_edge_cases() {
    let mut cs = ConstraintSet::new(1);
    cs.push_row(vec![1.0], 0.0, 1.0).unwrap();
    let res = lp_solve(&[1.0], &cs, Sense::Minimize).unwrap();
    assert_eq!(res.status, LpStatus::Optimal);
    assert!(res.value.unwrap().abs() <= 1e-9);

    let mut contradictory = ConstraintSet::new(1);
    contradictory.mark_nonneg(0);
    contradictory.push_row(vec![1.0], f64::NEG_INFINITY, -1.0).unwrap();
    let res = lp_solve(&[1.0], &contradictory, Sense::Minimize).unwrap();
    assert_eq!(res.status, LpStatus::Infeasible);
    assert!(!feasible(&contradictory).unwrap());
}

#[test]
fn whole_space_is_feasible() {
    let cs = ConstraintSet::new(2);
    assert!(feasible(&cs).unwrap());
    // Zero objective over a feasible region is always optimal.
    let res = lp_solve(&[0.0, 0.0], &cs, Sense::Minimize).unwrap();
    assert_eq!(res.status, LpStatus::Optimal);
}

#[test]
fn single_observation_region_has_witness() {
    // One interval (0, 1] on mu + 0.5 sigma with sigma >= 0: mu = 0.5,
    // sigma = 1 satisfies it, so the region is nonempty.
    let mut cs = ConstraintSet::new(2);
    cs.mark_nonneg(1);
    cs.push_row(vec![1.0, 0.5], 0.0, 1.0).unwrap();
    assert!(feasible(&cs).unwrap());
    assert!(cs.max_violation(&[0.5, 1.0]) == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Systems built to contain a known point are feasible, the zero
    /// objective is optimal, and any minimum is no worse than the value at
    /// the witness.
    #[test]
    fn witnessed_systems_solve_optimally(
        witness in prop::collection::vec(-5.0f64..5.0, 2..=4),
        slack in prop::collection::vec(0.01f64..3.0, 12),
        coeffs in prop::collection::vec(-2.0f64..2.0, 48),
        objective in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let dim = witness.len();
        let mut cs = ConstraintSet::new(dim);
        for (i, s) in slack.iter().enumerate() {
            let row: Vec<f64> = coeffs[i * dim..(i + 1) * dim].to_vec();
            if row.iter().all(|v| v.abs() < 1e-6) {
                continue;
            }
            let at: f64 = row.iter().zip(&witness).map(|(a, b)| a * b).sum();
            cs.push_row(row, at - s, at + s).unwrap();
        }
        prop_assert!(feasible(&cs).unwrap());
        let res = lp_solve(&objective[..dim], &cs, Sense::Minimize).unwrap();
        prop_assert!(res.status != LpStatus::Infeasible);
        if res.status == LpStatus::Optimal {
            let at_witness: f64 = objective[..dim].iter().zip(&witness).map(|(a, b)| a * b).sum();
            prop_assert!(res.value.unwrap() <= at_witness + 1e-7);
            let point = res.point.unwrap();
            prop_assert!(cs.max_violation(&point) <= 10.0 * EPS_FEAS);
        }
    }
}
