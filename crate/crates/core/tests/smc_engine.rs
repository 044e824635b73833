//! Engine-level checks: truncation bounds against brute force, sampler
//! distribution, resampling behavior, determinism, and the run invariants.

use fidmix_core::linalg::{feasible, ConstraintSet};
use fidmix_core::model::{discretize, IntervalDataset, ModelSpec};
use fidmix_core::smc::{
    cauchy_cdf_span, log_weight_factor, multinomial_ancestors, run, run_with_observer,
    sample_truncated_cauchy, truncated_cauchy_quantile, truncation_bounds, ParticleSystem,
    RngStream, RunConfig, SmcError,
};

fn pin(cs: &mut ConstraintSet, coord: usize, value: f64) {
    let mut row = vec![0.0; cs.dim()];
    row[coord] = 1.0;
    cs.push_row(row.clone(), value, f64::INFINITY).unwrap();
    cs.push_row(row, f64::NEG_INFINITY, value).unwrap();
}

#[test]
fn bounds_are_unlimited_before_any_observation() {
    let mut cs = ConstraintSet::new(2);
    cs.mark_nonneg(1);
    let (m, big) = truncation_bounds(&cs, &[1.0, 0.0], 0.0, 1.0).unwrap();
    assert_eq!(m, f64::NEG_INFINITY);
    assert_eq!(big, f64::INFINITY);
}

#[test]
fn bounds_on_a_pinned_region() {
    // mean fixed at 0, scale fixed at 2, cell (1, 3]: the residual latent
    // must land in ((1-0)/2, (3-0)/2].
    let mut cs = ConstraintSet::new(2);
    cs.mark_nonneg(1);
    pin(&mut cs, 0, 0.0);
    pin(&mut cs, 1, 2.0);
    let (m, big) = truncation_bounds(&cs, &[1.0, 0.0], 1.0, 3.0).unwrap();
    assert!((m - 0.5).abs() < 1e-9, "{m}");
    assert!((big - 1.5).abs() < 1e-9, "{big}");
}

#[test]
fn bounds_match_grid_on_two_observation_instance() {
    // One-way layout, both observations in the same group. The polyhedron
    // after the first observation is a box (the first cell is wide enough to
    // never bind), so the ratio extremes sit at box corners, which an
    // inclusive grid hits exactly.
    let (z_alpha, z1) = (0.7, -0.4);
    let (mu_lo, mu_hi) = (-2.0, 2.0);
    let (sa_lo, sa_hi) = (0.0, 2.0);
    let (se_lo, se_hi) = (0.25, 2.0);
    let (a1, b1) = (-6.0, 6.0);
    let (a2, b2) = (-1.0, 2.0);

    let mut cs = ConstraintSet::new(3);
    cs.mark_nonneg(1);
    cs.mark_nonneg(2);
    cs.push_row(vec![1.0, 0.0, 0.0], mu_lo, mu_hi).unwrap();
    cs.push_row(vec![0.0, 1.0, 0.0], sa_lo, sa_hi).unwrap();
    cs.push_row(vec![0.0, 0.0, 1.0], se_lo, se_hi).unwrap();
    cs.push_row(vec![1.0, z_alpha, z1], a1, b1).unwrap();

    let partial = [1.0, z_alpha, 0.0];
    let (m, big) = truncation_bounds(&cs, &partial, a2, b2).unwrap();

    let k = 100;
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (k - 1) as f64;
    let mut grid_m = f64::INFINITY;
    let mut grid_big = f64::NEG_INFINITY;
    for i in 0..k {
        let mu = lin(mu_lo, mu_hi, i);
        for j in 0..k {
            let sa = lin(sa_lo, sa_hi, j);
            for l in 0..k {
                let se = lin(se_lo, se_hi, l);
                let row1 = mu + z_alpha * sa + z1 * se;
                if row1 < a1 || row1 > b1 {
                    continue;
                }
                grid_m = grid_m.min((a2 - mu - z_alpha * sa) / se);
                grid_big = grid_big.max((b2 - mu - z_alpha * sa) / se);
            }
        }
    }
    assert!((m - grid_m).abs() < 1e-3, "lower: {m} vs grid {grid_m}");
    assert!((big - grid_big).abs() < 1e-3, "upper: {big} vs grid {grid_big}");
}

fn truncated_cdf(m: f64, big: f64, z: f64) -> f64 {
    cauchy_cdf_span(m, z.min(big)) / cauchy_cdf_span(m, big)
}

fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

#[test]
fn truncated_cauchy_draws_pass_ks() {
    let stream = RngStream::new(20240817);
    let n = 100_000;
    // 1% critical value for the one-sample KS statistic.
    let crit = 1.628 / (n as f64).sqrt();
    for (block, (m, big)) in [(0, (0.0, f64::INFINITY)), (1, (-2.0, 1.0))].into_iter() {
        let mut rng = stream.oracle(block);
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_truncated_cauchy(&mut rng, m, big).unwrap())
            .collect();
        assert!(draws.iter().all(|&z| z > m && z <= big + 1e-12));
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&draws, |z| truncated_cdf(m, big, z));
        assert!(d < crit, "KS {d} over critical {crit} on ({m}, {big})");
    }
}

#[test]
fn quantile_function_inverts_the_cdf() {
    for &(m, big) in &[(0.0, f64::INFINITY), (-2.0, 1.0), (3.0, 17.5)] {
        for k in 1..40 {
            let u = k as f64 / 40.0;
            let z = truncated_cauchy_quantile(m, big, u);
            assert!((truncated_cdf(m, big, z) - u).abs() < 1e-10, "({m},{big}) u={u}");
        }
    }
}

#[test]
fn ancestors_follow_the_weights() {
    let stream = RngStream::new(7);

    // Point mass picks the only winner.
    let mut rng = stream.resample(1);
    let a = multinomial_ancestors(&[1.0, 0.0, 0.0], 200, &mut rng);
    assert!(a.iter().all(|&i| i == 0));

    // Equal pair: counts stay within 3 sigma of the binomial.
    let n = 100_000;
    let mut rng = stream.resample(2);
    let a = multinomial_ancestors(&[0.5, 0.5], n, &mut rng);
    let ones = a.iter().filter(|&&i| i == 1).count() as f64;
    let sd = (n as f64 * 0.25).sqrt();
    assert!((ones - n as f64 / 2.0).abs() < 3.0 * sd, "{ones}");

    // Same stream, same ancestors.
    let mut r1 = stream.resample(3);
    let mut r2 = stream.resample(3);
    assert_eq!(
        multinomial_ancestors(&[0.2, 0.3, 0.5], 50, &mut r1),
        multinomial_ancestors(&[0.2, 0.3, 0.5], 50, &mut r2)
    );
}

fn toy_model_and_data() -> (ModelSpec, IntervalDataset) {
    let model = ModelSpec::one_way(3, &[2, 2, 2]).unwrap();
    let data = discretize(&[0.2, 0.5, 1.1, 0.9, -0.3, 0.1], 0.5).unwrap();
    (model, data)
}

fn fingerprint(system: &ParticleSystem, effects: usize) -> Vec<u64> {
    let mut bits = Vec::new();
    for p in system.particles() {
        bits.push(p.log_weight().to_bits());
        bits.push(p.alive() as u64);
        for e in 0..effects {
            for z in p.latents(e) {
                bits.push(z.map_or(u64::MAX, |v| v.to_bits()));
            }
        }
        for row in p.constraints().rows() {
            for c in &row.coeffs {
                bits.push(c.to_bits());
            }
        }
    }
    bits
}

#[test]
fn runs_are_reproducible_for_a_seed() {
    let (model, data) = toy_model_and_data();
    let config = RunConfig { particles: 60, seed: 11, threshold_ratio: 0.5 };
    let a = run(&model, &data, &config).unwrap();
    let b = run(&model, &data, &config).unwrap();
    assert_eq!(fingerprint(&a, model.r()), fingerprint(&b, model.r()));

    let other = run(&model, &data, &RunConfig { seed: 12, ..config }).unwrap();
    assert_ne!(fingerprint(&a, model.r()), fingerprint(&other, model.r()));
}

#[test]
fn thread_count_does_not_change_results() {
    let (model, data) = toy_model_and_data();
    let config = RunConfig { particles: 40, seed: 3, threshold_ratio: 0.9 };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run(&model, &data, &config).unwrap());
    let multi = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run(&model, &data, &config).unwrap());
    assert_eq!(fingerprint(&single, model.r()), fingerprint(&multi, model.r()));
}

#[test]
fn live_particles_stay_feasible_at_every_step() {
    let (model, data) = toy_model_and_data();
    // High threshold so resampling and rejuvenation fire along the way.
    let config = RunConfig { particles: 40, seed: 5, threshold_ratio: 0.9 };
    let system = run_with_observer(&model, &data, &config, |t, sys| {
        for p in sys.particles().iter().filter(|p| p.alive()) {
            assert_eq!(p.constraints().len(), t, "row count tracks observations");
            assert!(p.log_weight().is_finite());
            assert!(feasible(p.constraints()).unwrap(), "infeasible live particle at step {t}");
        }
    })
    .unwrap();
    assert!(!system.history().is_empty(), "expected at least one resample");
    assert!(system.alteration_attempts() > 0);
    // On cells this coarse a redrawn block occasionally describes an empty
    // polyhedron and the move is rejected; the particle keeps its old state,
    // so feasibility above is unconditional. The rate stays small.
    let rate = system.alteration_rejections() as f64 / system.alteration_attempts() as f64;
    assert!(
        rate < 0.25,
        "rejuvenation rejected {} of {} moves",
        system.alteration_rejections(),
        system.alteration_attempts()
    );
}

#[test]
fn initialization_only_run_keeps_unit_weights() {
    // n = p + r: every draw is plain normal, weights stay at 1.
    let model = ModelSpec::one_way(2, &[2, 1]).unwrap();
    let data = discretize(&[0.4, 0.6, -0.2], 2.0).unwrap();
    let config = RunConfig { particles: 30, seed: 2, threshold_ratio: 0.5 };
    let system = run(&model, &data, &config).unwrap();
    assert!(system.history().is_empty());
    for p in system.particles() {
        if p.alive() {
            assert_eq!(p.log_weight(), 0.0);
            assert_eq!(p.constraints().len(), 3);
        }
    }
}

#[test]
fn final_weights_replay_from_the_multiplier_recursion() {
    let (model, data) = toy_model_and_data();
    // Resampling disabled so the final weight is the whole product.
    let config = RunConfig { particles: 25, seed: 9, threshold_ratio: 0.0 };
    let system = run(&model, &data, &config).unwrap();
    assert!(system.history().is_empty());
    let dim = model.dim();
    let mut replayed = 0;
    for p in system.particles().iter().filter(|p| p.alive()) {
        let rows = p.constraints().rows();
        let mut total = 0.0;
        for t in (dim + 1)..=rows.len() {
            let mut prev = p.constraints().clone();
            prev.truncate(t - 1);
            let row = &rows[t - 1];
            let mut partial = row.coeffs.clone();
            let z = partial[dim - 1];
            partial[dim - 1] = 0.0;
            let (m, big) = truncation_bounds(&prev, &partial, row.lower, row.upper).unwrap();
            assert!(z > m - 1e-9 && z < big + 1e-9, "draw outside its support");
            total += log_weight_factor(z, cauchy_cdf_span(m, big));
        }
        assert!(
            (total - p.log_weight()).abs() <= 1e-9 * total.abs().max(1.0),
            "replayed {total} vs stored {}",
            p.log_weight()
        );
        replayed += 1;
    }
    assert!(replayed > 10, "too few live particles to trust the replay");
}

#[test]
fn impossible_initialization_aborts_with_guidance() {
    // Three near-point cells in one group at 0, 10, -10: the residual scale
    // alone must bridge both gaps with opposite signs at an exact ratio,
    // which essentially no draw satisfies, so the redraw budget runs out.
    let model = ModelSpec::one_way(1, &[4]).unwrap();
    let data = discretize(&[0.0, 10.0, -10.0, 20.0], 1e-6).unwrap();
    let config = RunConfig { particles: 4, seed: 1, threshold_ratio: 0.5 };
    match run(&model, &data, &config) {
        Err(err @ SmcError::InitializationCollapse { step, attempts }) => {
            assert!(step <= model.dim());
            assert!(attempts >= 20_000);
            let msg = err.to_string();
            assert!(msg.contains("widen the intervals"), "guidance missing: {msg}");
        }
        other => panic!("expected initialization collapse, got {other:?}"),
    }
}

#[test]
fn narrow_cells_initialize_at_full_strength() {
    // Survival of raw normal draws decays with the cell width; the redraw
    // scheme must still deliver every particle alive with unit weight at the
    // end of the initialization phase, and identically across thread counts.
    let model = ModelSpec::one_way(3, &[2, 2, 2]).unwrap();
    let data = discretize(&[0.2, 0.5, 1.1, 0.9, -0.3, 0.1], 0.02).unwrap();
    let config = RunConfig { particles: 50, seed: 12, threshold_ratio: 0.5 };
    let mut init_alive = 0;
    let system = run_with_observer(&model, &data, &config, |t, sys| {
        if t == model.dim() {
            init_alive = sys.particles().iter().filter(|p| p.alive()).count();
        }
    })
    .unwrap();
    assert_eq!(init_alive, 50);
    assert!(system.particles().iter().any(|p| p.alive()));
}
