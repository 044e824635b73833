//! Sequential Monte Carlo sampler for the fiducial target. Observations are
//! consumed one at a time: while the constraint polyhedron is still
//! unconstrained enough every latent draw is plain standard normal, after
//! that the residual latent is proposed from a Cauchy truncated to the range
//! the polyhedron leaves open, with an importance weight correcting back to
//! the normal target. Low effective sample size triggers multinomial
//! resampling followed by a rejuvenation sweep over the effects.
//!
//! During the initialization steps an infeasible draw is retried rather than
//! killed: the whole block of rows consumed so far is redrawn until the
//! polyhedron is nonempty. Survivors are distributed as the proposal
//! conditioned on feasibility, and the conditioning constant is shared by
//! every particle, so the uniform unit weights of the plain kill-and-keep
//! scheme are preserved exactly while none of the ensemble is wasted. On
//! narrow measurement cells the feasible fraction of raw normal draws decays
//! like the cell width, which would otherwise leave a handful of live
//! particles out of thousands before the first informative weight is ever
//! computed.

mod alteration;
mod cauchy;
mod rng;

pub use alteration::{
    alter_effect, prepare_alteration, AlterationContext, AlterationOutcome, RedrawKind,
};
pub use cauchy::{cauchy_cdf_span, sample_truncated_cauchy, truncated_cauchy_quantile};
pub use rng::RngStream;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{
    lp_solve, strictly_feasible, ConstraintSet, FractionalProgram, LinalgError, LinearConstraint,
    LpStatus, Sense,
};
use crate::model::{IntervalDataset, IntervalObservation, ModelSpec};

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("particle count must be at least 2, got {0}")]
    TooFewParticles(usize),
    #[error("dataset has {data} observations but the model describes {model}")]
    DataMismatch { model: usize, data: usize },
    #[error(
        "initialization stalled at observation {step}: a particle exhausted {attempts} \
         feasibility redraws; the cells are likely too narrow for this design, widen the \
         intervals and rerun"
    )]
    InitializationCollapse { step: usize, attempts: usize },
    #[error("all particles died at observation {step}; inference failed on this dataset")]
    Collapse { step: usize },
    #[error("optimization backend failed at observation {step}: {source}")]
    Solver { step: usize, source: LinalgError },
}

/// One weighted draw of the latent vector together with the polyhedron it
/// induces over the parameters.
#[derive(Debug, Clone)]
pub struct Particle {
    /// z[i][j] is the latent value for level j of effect i, present once the
    /// level has entered the data.
    z: Vec<Vec<Option<f64>>>,
    log_weight: f64,
    alive: bool,
    constraints: ConstraintSet,
    /// Same region as `constraints` with provably redundant rows dropped;
    /// every solve in the hot path runs on this set. Row `i` here is row
    /// `live[i]` of the archive.
    work: ConstraintSet,
    live: Vec<usize>,
    /// Rows pushed since the last prune pass.
    since_prune: usize,
    /// Initialization redraws consumed so far; indexes this particle's
    /// attempt streams.
    init_attempts: usize,
}

fn empty_constraints(model: &ModelSpec) -> ConstraintSet {
    let mut constraints = ConstraintSet::new(model.dim());
    for k in model.p()..model.dim() {
        constraints.mark_nonneg(k);
    }
    constraints
}

/// Don't bother pruning below this many working rows.
const PRUNE_MIN_ROWS: usize = 12;

/// Rows pushed between prune passes.
const PRUNE_STRIDE: usize = 8;

/// Remaining observations below which pruning stops paying for itself.
const PRUNE_LOOKAHEAD: usize = 8;

/// A dropped row must clear its bounds by this margin over the rest of the
/// region. Orders of magnitude above the strictness threshold, so feasibility
/// verdicts on the pruned set provably match the full set, and far above the
/// rounding noise of rebuilt coefficient columns, so the margins survive
/// rejuvenation's column rewrites.
const PRUNE_MARGIN: f64 = 1e-6;

impl Particle {
    fn fresh(model: &ModelSpec) -> Self {
        Particle {
            z: model.effects().iter().map(|e| vec![None; e.levels()]).collect(),
            log_weight: 0.0,
            alive: true,
            constraints: empty_constraints(model),
            work: empty_constraints(model),
            live: Vec::new(),
            since_prune: 0,
            init_attempts: 0,
        }
    }

    /// Clears every latent and the polyhedron for an initialization redraw.
    fn clear(&mut self, model: &ModelSpec) {
        for block in &mut self.z {
            block.iter_mut().for_each(|v| *v = None);
        }
        self.constraints = empty_constraints(model);
        self.work = empty_constraints(model);
        self.live.clear();
        self.since_prune = 0;
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn alive(&self) -> bool {
        self.alive
    }

    /// Parameter polyhedron after the observations consumed so far, one row
    /// per observation in order.
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// The same parameter region as [`Particle::constraints`] with redundant
    /// rows removed. Row order is not meaningful; use this for solves.
    pub fn region(&self) -> &ConstraintSet {
        &self.work
    }

    /// Latent values of one effect, by level.
    pub fn latents(&self, effect: usize) -> &[Option<f64>] {
        &self.z[effect]
    }

    fn kill(&mut self) {
        self.alive = false;
        self.log_weight = f64::NEG_INFINITY;
    }

    /// Appends one observation row to the archive and the working set.
    fn push_obs_row(&mut self, coeffs: Vec<f64>, lower: f64, upper: f64) -> Result<(), LinalgError> {
        self.work.push_row(coeffs.clone(), lower, upper)?;
        self.live.push(self.constraints.len());
        self.constraints.push_row(coeffs, lower, upper)?;
        self.since_prune += 1;
        Ok(())
    }

    /// Drops working rows whose bounds the other working rows already force.
    /// Certificates come from the coordinate box of the region, solved once
    /// per pass rather than once per row: any row whose value range over the
    /// box clears its bounds by the margin is implied by whatever rows pin
    /// the box. The first round boxes the full working region; the second
    /// re-boxes the survivors alone and restores any drop the wider box can
    /// no longer back, after which every certificate rests only on rows that
    /// stay. Restoring rows shrinks the region, so the surviving
    /// certificates hold a fortiori and no further rounds are needed.
    ///
    /// The boxes deliberately ignore the sign restrictions: rejuvenation's
    /// witness map preserves row values but not signs, so sign-free
    /// certificates carry across accepted moves. Measured on the crossed
    /// and pedigree designs the signs add no pruning power anyway.
    fn prune_work(&mut self) -> Result<(), LinalgError> {
        self.since_prune = 0;
        let Some(bx) = region_box(&self.work, None)? else {
            return Ok(());
        };
        let mut keep: Vec<bool> =
            self.work.rows().iter().map(|r| !box_implies(&bx, r)).collect();
        if keep.iter().all(|&k| k) {
            return Ok(());
        }
        let Some(bx) = region_box(&self.work, Some(&keep))? else {
            return Ok(());
        };
        for (i, r) in self.work.rows().iter().enumerate() {
            if !keep[i] && !box_implies(&bx, r) {
                keep[i] = true;
            }
        }
        if keep.iter().all(|&k| k) {
            return Ok(());
        }
        let mut work = ConstraintSet::new(self.work.dim());
        for (k, &nn) in self.work.nonneg().iter().enumerate() {
            if nn {
                work.mark_nonneg(k);
            }
        }
        let mut live = Vec::new();
        for (j, r) in self.work.rows().iter().enumerate() {
            if keep[j] {
                work.push_row(r.coeffs.clone(), r.lower, r.upper)?;
                live.push(self.live[j]);
            }
        }
        self.work = work;
        self.live = live;
        Ok(())
    }

    fn maybe_prune(&mut self, remaining: usize) -> Result<(), LinalgError> {
        if self.work.len() >= PRUNE_MIN_ROWS
            && self.since_prune >= PRUNE_STRIDE
            && remaining >= PRUNE_LOOKAHEAD
        {
            self.prune_work()?;
        }
        Ok(())
    }
}

/// Coordinate bounds of the closed region cut out by the marked rows alone,
/// sign restrictions ignored. `None` when a coordinate solve refuses, in
/// which case the caller skips the pass.
fn region_box(
    work: &ConstraintSet,
    keep: Option<&[bool]>,
) -> Result<Option<Vec<(f64, f64)>>, LinalgError> {
    let dim = work.dim();
    let mut cs = ConstraintSet::new(dim);
    for (j, r) in work.rows().iter().enumerate() {
        if keep.is_none_or(|k| k[j]) {
            cs.push_row(r.coeffs.clone(), r.lower, r.upper)?;
        }
    }
    let mut obj = vec![0.0; dim];
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        obj[k] = 1.0;
        let mut edge = [f64::NEG_INFINITY, f64::INFINITY];
        for (e, sense) in edge.iter_mut().zip([Sense::Minimize, Sense::Maximize]) {
            let r = lp_solve(&obj, &cs, sense)?;
            match r.status {
                LpStatus::Optimal => *e = r.value.expect("optimal solve carries a value"),
                LpStatus::Unbounded => {}
                LpStatus::Infeasible => return Ok(None),
            }
        }
        obj[k] = 0.0;
        out.push((edge[0], edge[1]));
    }
    Ok(Some(out))
}

/// Whether every point of the box keeps the row's value inside its bounds
/// with the pruning margin to spare.
fn box_implies(bx: &[(f64, f64)], row: &LinearConstraint) -> bool {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (c, &(a, b)) in row.coeffs.iter().zip(bx) {
        if *c > 0.0 {
            lo += c * a;
            hi += c * b;
        } else if *c < 0.0 {
            lo += c * b;
            hi += c * a;
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return false;
    }
    (row.lower == f64::NEG_INFINITY || lo >= row.lower + PRUNE_MARGIN)
        && (row.upper == f64::INFINITY || hi <= row.upper - PRUNE_MARGIN)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleEvent {
    /// Observation count at which the resample fired.
    pub step: usize,
    /// Effective sample size that triggered it.
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct ParticleSystem {
    particles: Vec<Particle>,
    stream: RngStream,
    /// Observations consumed so far.
    step: usize,
    history: Vec<ResampleEvent>,
    /// Rejuvenation moves whose redrawn block produced an infeasible
    /// polyhedron and were therefore kept at the old state. A few percent is
    /// normal on coarse cells; the acceptance suite tracks the rate.
    alteration_rejections: usize,
    alteration_attempts: usize,
}

impl ParticleSystem {
    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    pub fn history(&self) -> &[ResampleEvent] {
        &self.history
    }

    pub fn alteration_rejections(&self) -> usize {
        self.alteration_rejections
    }

    pub fn alteration_attempts(&self) -> usize {
        self.alteration_attempts
    }

    /// Normalized weights over all particles (dead ones get 0); `None` when
    /// every particle is dead.
    pub fn normalized_weights(&self) -> Option<Vec<f64>> {
        let max = self
            .particles
            .iter()
            .filter(|p| p.alive)
            .map(|p| p.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return None;
        }
        let mut w: Vec<f64> = self
            .particles
            .iter()
            .map(|p| if p.alive { (p.log_weight - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Some(w)
    }
}

/// (sum w)^2 / sum w^2 over the weights of live particles; `None` when none
/// are alive. Scale-invariant, so the log weights are used unnormalized.
pub fn effective_sample_size(log_weights: &[f64]) -> Option<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    Some(s1 * s1 / s2)
}

pub fn ess(particles: &[Particle]) -> Option<f64> {
    let lw: Vec<f64> = particles
        .iter()
        .map(|p| if p.alive { p.log_weight } else { f64::NEG_INFINITY })
        .collect();
    effective_sample_size(&lw)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub particles: usize,
    pub seed: u64,
    /// Resampling fires when ESS drops below `threshold_ratio * particles`.
    pub threshold_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { particles: 1000, seed: 0, threshold_ratio: 0.5 }
    }
}

pub fn init_particles(model: &ModelSpec, n: usize, seed: u64) -> Result<ParticleSystem, SmcError> {
    if n < 2 {
        return Err(SmcError::TooFewParticles(n));
    }
    Ok(ParticleSystem {
        particles: vec![Particle::fresh(model); n],
        stream: RngStream::new(seed),
        step: 0,
        history: Vec::new(),
        alteration_rejections: 0,
        alteration_attempts: 0,
    })
}

pub fn run(
    model: &ModelSpec,
    data: &IntervalDataset,
    config: &RunConfig,
) -> Result<ParticleSystem, SmcError> {
    run_with_observer(model, data, config, |_, _| {})
}

/// As [`run`], invoking `observer(step, system)` after each observation is
/// absorbed (and after any resample/rejuvenation it triggered).
pub fn run_with_observer(
    model: &ModelSpec,
    data: &IntervalDataset,
    config: &RunConfig,
    mut observer: impl FnMut(usize, &ParticleSystem),
) -> Result<ParticleSystem, SmcError> {
    if data.len() != model.n() {
        return Err(SmcError::DataMismatch { model: model.n(), data: data.len() });
    }
    let mut system = init_particles(model, config.particles, config.seed)?;
    let threshold = config.threshold_ratio * system.len() as f64;
    for t in 1..=model.n() {
        if t <= model.dim() {
            init_sweep(model, &mut system, data)?;
        } else {
            propagate_sweep(model, &mut system, data.obs(t - 1))?;
        }
        let ess_t = ess(&system.particles).ok_or(SmcError::Collapse { step: t })?;
        if ess_t < threshold {
            resample_multinomial(&mut system);
            system.history.push(ResampleEvent { step: t, ess: ess_t });
            alteration_sweep(model, &mut system)?;
        }
        observer(t, &system);
    }
    Ok(system)
}

/// How many feasibility redraws a single particle may burn across the whole
/// initialization phase before the run gives up. Feasible fractions down to
/// about 1e-3 pass through with enormous headroom; anything that trips the
/// cap is data the sampler cannot start on.
const INIT_ATTEMPT_CAP: usize = 20_000;

/// Draws standard-normal latents for every level that observation `row`
/// introduces and returns the constraint coefficients of that row. The
/// residual latent (always new) is included only when `with_residual` is
/// set; otherwise its coefficient is left for the caller.
fn draw_row(
    model: &ModelSpec,
    p: &mut Particle,
    row: usize,
    rng: &mut ChaCha8Rng,
    with_residual: bool,
) -> Vec<f64> {
    let dim = model.dim();
    let err = model.r() - 1;
    for i in 0..err {
        for &(level, _) in model.effect(i).row(row) {
            if p.z[i][level].is_none() {
                p.z[i][level] = Some(rng.sample(StandardNormal));
            }
        }
    }
    let mut coeffs = vec![0.0; dim];
    coeffs[..model.p()].copy_from_slice(&model.x_row(row));
    for i in 0..err {
        let s: f64 = model
            .effect(i)
            .row(row)
            .iter()
            .map(|&(level, c)| c * p.z[i][level].expect("level drawn above"))
            .sum();
        coeffs[model.p() + i] = s;
    }
    if with_residual {
        let z: f64 = rng.sample(StandardNormal);
        p.z[err][row] = Some(z);
        coeffs[dim - 1] = z;
    }
    coeffs
}

/// Cheap necessary condition for half-open feasibility of `coeffs . x` in
/// `(lo, hi]` against one earlier row: when the two rows agree on every free
/// coordinate, their value difference is a signed combination of the scale
/// coordinates, and if those signs all agree the difference is confined to
/// a half-line which must meet the open interval the two cells leave for
/// it. Rejections are certain infeasibilities; a pass decides nothing.
fn pair_screen_ok(cs: &ConstraintSet, coeffs: &[f64], lo: f64, hi: f64, free: usize) -> bool {
    'rows: for row in cs.rows() {
        for j in 0..free {
            if (coeffs[j] - row.coeffs[j]).abs() > 1e-12 {
                continue 'rows;
            }
        }
        let mut pos = false;
        let mut neg = false;
        for (j, &c) in coeffs.iter().enumerate().skip(free) {
            let d = c - row.coeffs[j];
            if d > 1e-12 {
                pos = true;
            } else if d < -1e-12 {
                neg = true;
            }
            if pos && neg {
                continue 'rows;
            }
        }
        // The difference lies strictly inside (lo - upper, hi - lower) and,
        // by the sign restriction, on one closed half-line through zero.
        let ok = if pos {
            hi - row.lower > 0.0
        } else if neg {
            lo - row.upper < 0.0
        } else {
            lo - row.upper < 0.0 && hi - row.lower > 0.0
        };
        if !ok {
            return false;
        }
    }
    true
}

/// One full redraw of initialization rows 1..=t. Returns whether the
/// resulting t-row polyhedron is nonempty in the half-open sense; prefix
/// feasibility needs no separate checks because each prefix system is a
/// relaxation of the full one. Pairwise screening bails out of clearly
/// conflicted blocks without touching the solver; it never rejects a block
/// the solver would keep, so the accepted draw sequence is unchanged.
fn rebuild_init_block(
    model: &ModelSpec,
    p: &mut Particle,
    t: usize,
    data: &IntervalDataset,
    rng: &mut ChaCha8Rng,
) -> Result<bool, LinalgError> {
    p.clear(model);
    for row in 0..t {
        let obs = data.obs(row);
        let coeffs = draw_row(model, p, row, rng, true);
        if !pair_screen_ok(&p.work, &coeffs, obs.lower, obs.upper, model.p()) {
            return Ok(false);
        }
        p.push_obs_row(coeffs, obs.lower, obs.upper)?;
    }
    strictly_feasible(&p.work)
}

/// Absorbs initialization observation `t` into one particle: try extending
/// the current feasible prefix, then fall back to redrawing the whole block
/// until the t-row system is feasible. Either way the particle ends up
/// distributed as the proposal conditioned on feasibility of rows 1..=t.
fn init_step_one(
    model: &ModelSpec,
    p: &mut Particle,
    j: usize,
    t: usize,
    data: &IntervalDataset,
    stream: RngStream,
) -> Result<(), SmcError> {
    let solver_err = |source| SmcError::Solver { step: t, source };
    let obs = data.obs(t - 1);
    let mut rng = stream.init_attempt(j, p.init_attempts);
    p.init_attempts += 1;
    let coeffs = draw_row(model, p, t - 1, &mut rng, true);
    p.push_obs_row(coeffs, obs.lower, obs.upper).map_err(solver_err)?;
    if strictly_feasible(&p.work).map_err(solver_err)? {
        return Ok(());
    }
    loop {
        if p.init_attempts >= INIT_ATTEMPT_CAP {
            return Err(SmcError::InitializationCollapse { step: t, attempts: p.init_attempts });
        }
        let mut rng = stream.init_attempt(j, p.init_attempts);
        p.init_attempts += 1;
        if rebuild_init_block(model, p, t, data, &mut rng).map_err(solver_err)? {
            return Ok(());
        }
    }
}

/// Initialization sweep for one observation. The first particle runs ahead
/// of the parallel batch so a hopeless dataset aborts after one attempt
/// budget instead of N of them.
fn init_sweep(
    model: &ModelSpec,
    system: &mut ParticleSystem,
    data: &IntervalDataset,
) -> Result<(), SmcError> {
    let t = system.step + 1;
    let stream = system.stream;
    let (first, rest) = system
        .particles
        .split_first_mut()
        .expect("ensemble size is checked at construction");
    init_step_one(model, first, 0, t, data, stream)?;
    rest.par_iter_mut()
        .enumerate()
        .try_for_each(|(j, p)| init_step_one(model, p, j + 1, t, data, stream))?;
    system.step = t;
    Ok(())
}

/// Absorbs one observation into every live particle in parallel. Particle
/// `j` at step `t` draws from its own keyed stream, so the sweep is
/// deterministic for any thread count.
fn propagate_sweep(
    model: &ModelSpec,
    system: &mut ParticleSystem,
    obs: IntervalObservation,
) -> Result<(), SmcError> {
    let t = system.step + 1;
    let stream = system.stream;
    system
        .particles
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(j, p)| propagate_one(model, p, obs, t, stream.propagate(j, t)))?;
    system.step = t;
    Ok(())
}

/// Truncation range for the residual latent of the next observation: the
/// extremes of `(bound - x_row.beta - sum_i sigma_i s_i) / sigma_err` over
/// the current polyhedron, lower bound from the cell's lower end and upper
/// bound from its upper end. `partial_row` is the constraint row for the new
/// observation with the residual coefficient still unset.
pub fn truncation_bounds(
    constraints: &ConstraintSet,
    partial_row: &[f64],
    lower: f64,
    upper: f64,
) -> Result<(f64, f64), LinalgError> {
    let den = constraints.dim() - 1;
    let fp = FractionalProgram::new(constraints, den)?;
    let mut num = vec![0.0; constraints.dim()];
    for (n, &c) in num.iter_mut().zip(partial_row) {
        *n = -c;
    }
    num[den] = 0.0;
    let m = fp.extreme(&num, lower, Sense::Minimize)?;
    let big = fp.extreme(&num, upper, Sense::Maximize)?;
    Ok((m, big))
}

/// Importance weight increment for a truncated-Cauchy draw `z` whose
/// proposal support has the given Cauchy mass: the normal target over the
/// Cauchy density, times the truncation normalizer.
pub fn log_weight_factor(z: f64, span: f64) -> f64 {
    -0.5 * z * z + (z * z).ln_1p() + span.ln()
}

fn propagate_one(
    model: &ModelSpec,
    p: &mut Particle,
    obs: IntervalObservation,
    t: usize,
    mut rng: ChaCha8Rng,
) -> Result<(), SmcError> {
    if !p.alive {
        return Ok(());
    }
    let row = t - 1;
    let dim = model.dim();
    let err = model.r() - 1;

    // Latents for any levels this observation introduces, effects in
    // ascending order, levels in row order. The residual latent comes last
    // and is truncated.
    let mut coeffs = draw_row(model, p, row, &mut rng, false);

    let solver_err = |source| SmcError::Solver { step: t, source };

    let (z, span) = match truncation_bounds(&p.work, &coeffs, obs.lower, obs.upper) {
        Ok((m, big)) => {
            if !(big > m) {
                p.kill();
                return Ok(());
            }
            let span = cauchy_cdf_span(m, big);
            if !(span > 0.0) {
                p.kill();
                return Ok(());
            }
            let u = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
            (truncated_cauchy_quantile(m, big, u), span)
        }
        Err(LinalgError::DegenerateDenominator) => {
            // The residual scale is pinned at zero on the whole polyhedron,
            // so the new row does not involve the draw at all; propose from
            // the full Cauchy and let the explicit feasibility check below
            // decide survival.
            let u = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
            (truncated_cauchy_quantile(f64::NEG_INFINITY, f64::INFINITY, u), 1.0)
        }
        Err(LinalgError::InfeasibleSystem) => {
            p.kill();
            return Ok(());
        }
        Err(other) => return Err(solver_err(other)),
    };

    p.z[err][row] = Some(z);
    coeffs[dim - 1] = z;
    p.push_obs_row(coeffs, obs.lower, obs.upper).map_err(solver_err)?;
    if span >= 1.0 && !strictly_feasible(&p.work).map_err(solver_err)? {
        // Only the degenerate-denominator path reaches span 1 with a live
        // particle; any draw inside a genuine (m, M) keeps the half-open
        // polyhedron nonempty almost surely, so the common path carries no
        // feasibility solve.
        p.kill();
        return Ok(());
    }
    p.log_weight += log_weight_factor(z, span);
    p.maybe_prune(model.n() - t).map_err(solver_err)?;
    Ok(())
}

/// Draws `n` ancestor indices i.i.d. proportional to `weights` by inverse
/// CDF. Rounding at the top of the accumulated weights is clamped to the
/// last positive-weight index so zero-weight entries can never be chosen.
pub fn multinomial_ancestors(weights: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "at least one weight must be positive");
    let mut cum = weights.to_vec();
    let mut acc = 0.0;
    for v in cum.iter_mut() {
        acc += *v;
        *v = acc;
    }
    let last_pos = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("positive total implies a positive weight");
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            cum.partition_point(|&c| c <= u).min(last_pos)
        })
        .collect()
}

/// Draws N ancestors i.i.d. from the normalized weights and resets all
/// weights to equal. Returns the ancestor indices.
pub fn resample_multinomial(system: &mut ParticleSystem) -> Vec<usize> {
    let mut rng = system.stream.resample(system.step);
    let w = system
        .normalized_weights()
        .expect("resampling requires at least one live particle");
    let n = system.particles.len();
    let ancestors = multinomial_ancestors(&w, n, &mut rng);
    system.particles = ancestors
        .iter()
        .map(|&a| {
            let mut p = system.particles[a].clone();
            p.log_weight = 0.0;
            p
        })
        .collect();
    ancestors
}

/// Rejuvenation after a resample: every particle redraws each effect's
/// latent block in ascending effect order.
fn alteration_sweep(model: &ModelSpec, system: &mut ParticleSystem) -> Result<(), SmcError> {
    let t = system.step;
    let stream = system.stream;
    let counts: Vec<(usize, usize)> = system
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(j, p)| -> Result<(usize, usize), SmcError> {
            let mut attempts = 0;
            let mut rejections = 0;
            for e in 0..model.r() {
                let mut rng = stream.alter(j, t, e);
                let outcome = alter_effect(model, p, e, &mut rng)
                    .map_err(|source| SmcError::Solver { step: t, source })?;
                if !outcome.skipped {
                    attempts += 1;
                    if !outcome.accepted {
                        rejections += 1;
                    }
                }
            }
            Ok((attempts, rejections))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (attempts, rejections) in counts {
        system.alteration_attempts += attempts;
        system.alteration_rejections += rejections;
    }
    Ok(())
}
