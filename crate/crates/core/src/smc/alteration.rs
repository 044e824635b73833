//! Rejuvenation move for one effect. Write the latent block of effect e as
//! Z_e = eta2 C + D tau with eta2 the null-basis block from the constraint
//! geometry: moving (C, D) while holding tau and the other effects fixed
//! changes Z_e without changing any constraint row value, because the row
//! perturbation stays inside the span the basis was built from. Redrawing
//! C ~ N(0, I_d) and D^2 ~ chi^2_{l-d} therefore refreshes duplicated
//! particles for free. The redraw is committed only when the rebuilt
//! constraint set is feasible in the half-open sense (an independence
//! Metropolis accept step on the (C, D) block with acceptance indicator
//! exactly the feasibility check); with the scale coordinates unconstrained
//! it would always accept.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::linalg::{
    null_space_basis, null_space_basis_identity, strictly_feasible, LinalgError, NullBasis,
};
use crate::model::ModelSpec;

use super::Particle;

/// Residual norms below this (relative to the block) are treated as zero,
/// meaning the old latent block lies entirely in the span of eta2.
const RESIDUAL_TINY: f64 = 1e-12;

/// How the redrawn block was assembled; decides which analytic witness map
/// applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedrawKind {
    /// l == d: no residual direction exists, the block rotates inside the
    /// span of eta2 and the scale coordinate is untouched.
    SpanOnly,
    /// Generic case: positive residual norm scales to the fresh chi draw.
    Scaled,
    /// Residual was zero with room left over; a fresh unit direction in the
    /// orthogonal complement of eta2 carries the chi draw.
    FreshDirection,
}

/// Everything the redraw needs about one effect's current state.
pub struct AlterationContext {
    effect: usize,
    /// Observation rows currently constrained.
    t: usize,
    /// Levels of the effect that have entered the data, ascending.
    seen: Vec<usize>,
    /// seen-index of each level (usize::MAX when unseen).
    level_pos: Vec<usize>,
    basis: NullBasis,
    z_old: DVector<f64>,
    c_old: DVector<f64>,
    residual: DVector<f64>,
    d_old: f64,
    p: usize,
    r: usize,
}

impl AlterationContext {
    /// Basis rank d.
    pub fn rank(&self) -> usize {
        self.basis.dim()
    }

    /// Degrees of freedom l - d of the scale draw.
    pub fn dof(&self) -> usize {
        self.seen.len() - self.basis.dim()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.c_old
    }

    pub fn residual_norm(&self) -> f64 {
        self.d_old
    }

    /// Applies the redraw with explicit draws: `c_new` of length d,
    /// `d_new >= 0`, and (only consulted when the residual is zero but
    /// degrees of freedom remain) a raw direction to orthonormalize against
    /// eta2. Commits to the particle only when the rebuilt system is
    /// feasible.
    pub fn apply(
        &self,
        model: &ModelSpec,
        particle: &mut Particle,
        c_new: DVector<f64>,
        d_new: f64,
        fresh: Option<DVector<f64>>,
    ) -> Result<AlterationOutcome, LinalgError> {
        let l = self.seen.len();
        let d = self.basis.dim();
        assert_eq!(c_new.len(), d, "redrawn coordinates must match the basis rank");
        assert!(d_new >= 0.0 && d_new.is_finite(), "scale draw must be a finite nonnegative value");

        let scale_ref = self.z_old.norm().max(1.0);
        let (kind, z_new) = if l == d {
            (RedrawKind::SpanOnly, &self.basis.eta2 * &c_new)
        } else if self.d_old > RESIDUAL_TINY * scale_ref {
            let tau = &self.residual / self.d_old;
            (RedrawKind::Scaled, &self.basis.eta2 * &c_new + tau * d_new)
        } else {
            let raw = fresh.expect("zero residual with dof > 0 needs a fresh direction");
            assert_eq!(raw.len(), l, "fresh direction must live in the effect block");
            let mut g = raw.clone();
            g -= &self.basis.eta2 * (self.basis.eta2.transpose() * &raw);
            let norm = g.norm();
            assert!(
                norm > RESIDUAL_TINY,
                "fresh direction collapsed onto the span of eta2"
            );
            g /= norm;
            (RedrawKind::FreshDirection, &self.basis.eta2 * &c_new + g * d_new)
        };

        // Rebuild the constraint rows. Only the column of this effect's
        // scale coordinate depends on the redrawn block; every other
        // coefficient is the same function of unchanged latents, so the
        // archive and the working set are patched in that single column.
        let col = self.p + self.effect;
        let svals: Vec<f64> = (0..self.t)
            .map(|k| {
                model
                    .effect(self.effect)
                    .row(k)
                    .iter()
                    .map(|&(level, c)| c * z_new[self.level_pos[level]])
                    .sum()
            })
            .collect();
        let mut rebuilt = particle.constraints.clone();
        for (k, &s) in svals.iter().enumerate() {
            rebuilt.set_coefficient(k, col, s);
        }

        // The witness map fixes every row value, so when it is invertible
        // (nonzero scale on this effect's coordinate) the rows pruned from
        // the working set stay implied with their margins intact and the
        // feasibility verdict can run on the small set. A fresh direction
        // maps to scale zero, which breaks the transfer: decide on the
        // archive and restart the working set from it.
        let invertible = match kind {
            RedrawKind::SpanOnly => true,
            RedrawKind::Scaled => d_new > 0.0,
            RedrawKind::FreshDirection => false,
        };
        let accepted = if invertible {
            let mut rebuilt_work = particle.work.clone();
            for (wi, &k) in particle.live.iter().enumerate() {
                rebuilt_work.set_coefficient(wi, col, svals[k]);
            }
            let ok = strictly_feasible(&rebuilt_work)?;
            if ok {
                particle.work = rebuilt_work;
            }
            ok
        } else {
            let ok = strictly_feasible(&rebuilt)?;
            if ok {
                particle.work = rebuilt.clone();
                particle.live = (0..self.t).collect();
                particle.since_prune = super::PRUNE_STRIDE;
            }
            ok
        };
        if accepted {
            for (j, &level) in self.seen.iter().enumerate() {
                particle.z[self.effect][level] = Some(z_new[j]);
            }
            particle.constraints = rebuilt;
        }

        Ok(AlterationOutcome {
            effect: self.effect,
            seen_levels: l,
            rank: d,
            kind,
            c_old: self.c_old.clone(),
            c_new,
            d_old: self.d_old,
            d_new,
            eta1: self.basis.eta1.clone(),
            p: self.p,
            r: self.r,
            skipped: false,
            accepted,
        })
    }
}

/// Decomposes the current state of one effect. `None` when the move has
/// nothing to do: no levels seen yet, or no null direction exists.
pub fn prepare_alteration(
    model: &ModelSpec,
    particle: &Particle,
    effect: usize,
) -> Option<AlterationContext> {
    let t = particle.constraints.len();
    if t == 0 || !particle.alive {
        return None;
    }
    let p = model.p();
    let r = model.r();
    let seen: Vec<usize> = (0..model.effect(effect).levels())
        .filter(|&j| particle.z[effect][j].is_some())
        .collect();
    let l = seen.len();
    if l == 0 {
        return None;
    }
    let mut level_pos = vec![usize::MAX; model.effect(effect).levels()];
    for (j, &level) in seen.iter().enumerate() {
        level_pos[level] = j;
    }

    // Fixed block: X columns, then the contribution column of every other
    // effect evaluated at its current latents.
    let q = p + r - 1;
    let mut xp = DMatrix::zeros(t, q);
    for k in 0..t {
        for j in 0..p {
            xp[(k, j)] = model.x()[(k, j)];
        }
        let mut col = p;
        for i in 0..r {
            if i == effect {
                continue;
            }
            let s: f64 = model
                .effect(i)
                .row(k)
                .iter()
                .map(|&(level, c)| c * particle.z[i][level].expect("observed level has a latent"))
                .sum();
            xp[(k, col)] = s;
            col += 1;
        }
    }

    let basis = if effect == r - 1 {
        // The residual effect's design over the seen levels is the identity.
        null_space_basis_identity(&xp)
    } else {
        let mut v = DMatrix::zeros(t, l);
        for k in 0..t {
            for &(level, c) in model.effect(effect).row(k) {
                v[(k, level_pos[level])] = c;
            }
        }
        null_space_basis(&xp, &v)
    }?;

    let z_old = DVector::from_iterator(
        l,
        seen.iter().map(|&j| particle.z[effect][j].expect("seen level has a latent")),
    );
    let c_old = basis.eta2.transpose() * &z_old;
    let residual = &z_old - &basis.eta2 * &c_old;
    let d_old = residual.norm();

    Some(AlterationContext {
        effect,
        t,
        seen,
        level_pos,
        basis,
        z_old,
        c_old,
        residual,
        d_old,
        p,
        r,
    })
}

/// Full move: decompose, redraw C ~ N(0, I_d) and D^2 ~ chi^2_{l-d}, commit
/// if the rebuilt system is feasible.
pub fn alter_effect(
    model: &ModelSpec,
    particle: &mut Particle,
    effect: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AlterationOutcome, LinalgError> {
    let Some(ctx) = prepare_alteration(model, particle, effect) else {
        return Ok(AlterationOutcome::skipped(effect, model.p(), model.r()));
    };
    let d = ctx.rank();
    let dof = ctx.dof();
    let c_new = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let d_new = if dof == 0 {
        0.0
    } else {
        let chi = ChiSquared::new(dof as f64).expect("dof >= 1");
        chi.sample(rng).sqrt()
    };
    let fresh = if dof > 0 && ctx.d_old <= RESIDUAL_TINY * ctx.z_old.norm().max(1.0) {
        let l = ctx.seen.len();
        Some(DVector::from_iterator(
            l,
            (0..l).map(|_| rng.sample::<f64, _>(StandardNormal)),
        ))
    } else {
        None
    };
    ctx.apply(model, particle, c_new, d_new, fresh)
}

/// Record of one redraw; enough to audit the move or replay its effect on a
/// parameter point.
#[derive(Debug, Clone)]
pub struct AlterationOutcome {
    pub effect: usize,
    pub seen_levels: usize,
    pub rank: usize,
    pub kind: RedrawKind,
    pub c_old: DVector<f64>,
    pub c_new: DVector<f64>,
    pub d_old: f64,
    pub d_new: f64,
    /// Fixed-block half of the basis, for the witness map.
    pub eta1: DMatrix<f64>,
    p: usize,
    r: usize,
    /// True when the move had nothing to redraw.
    pub skipped: bool,
    /// False when the rebuilt system was infeasible and the particle kept
    /// its previous state.
    pub accepted: bool,
}

impl AlterationOutcome {
    fn skipped(effect: usize, p: usize, r: usize) -> Self {
        AlterationOutcome {
            effect,
            seen_levels: 0,
            rank: 0,
            kind: RedrawKind::SpanOnly,
            c_old: DVector::zeros(0),
            c_new: DVector::zeros(0),
            d_old: 0.0,
            d_new: 0.0,
            eta1: DMatrix::zeros(0, 0),
            p,
            r,
            skipped: true,
            accepted: true,
        }
    }

    /// The affine map on parameter points induced by the redraw, as the pair
    /// (scale on this effect's coordinate, shift per remaining coordinate):
    /// a point (beta', sigma_e) feasible before the redraw goes to
    /// (beta' - sigma_e * shift, sigma_e * scale), where beta' lists the X
    /// coordinates followed by the other effects' scales in ascending order.
    /// Every constraint row value is fixed under this map. `None` for
    /// skipped moves.
    pub fn witness_affine(&self) -> Option<(f64, DVector<f64>)> {
        if self.skipped {
            return None;
        }
        Some(match self.kind {
            RedrawKind::SpanOnly => (1.0, &self.eta1 * (&self.c_new - &self.c_old)),
            RedrawKind::Scaled => {
                let ratio = self.d_old / self.d_new;
                (ratio, &self.eta1 * (&self.c_new * ratio - &self.c_old))
            }
            // The fresh direction is not reachable by scaling, so the image
            // sits at scale zero and absorbs the old span part.
            RedrawKind::FreshDirection => (0.0, -(&self.eta1 * &self.c_old)),
        })
    }

    /// For a full parameter point (beta, sigma_1..sigma_r) feasible before
    /// the redraw, its image under [`AlterationOutcome::witness_affine`],
    /// back in the same ordering.
    pub fn map_point(&self, old: &[f64]) -> Option<Vec<f64>> {
        let (scale, shift) = self.witness_affine()?;
        let dim = self.p + self.r;
        assert_eq!(old.len(), dim, "point must span all parameters");
        let sigma_e = old[self.p + self.effect];
        let mut out = Vec::with_capacity(dim);
        let mut idx = 0;
        for (k, &v) in old.iter().enumerate() {
            if k == self.p + self.effect {
                out.push(sigma_e * scale);
            } else {
                out.push(v - sigma_e * shift[idx]);
                idx += 1;
            }
        }
        Some(out)
    }
}
