//! Dense LP kernel.
//!
//! Problems arrive in the canonical shape "minimize c.x subject to G x >= h"
//! with x free; bound constraints are just extra rows. The solver runs a
//! revised simplex on the dual program: its basis has one entry per variable,
//! and the variable count here never exceeds a handful while the row count
//! grows with the data, so an iteration costs O(dim * rows) instead of the
//! O(rows * (rows + dim)) of a row-indexed tableau.
//!
//! Pivoting uses Dantzig pricing and falls back to Bland's rule once the
//! objective stalls, with a hard iteration cap of 50 * (rows + cols).

/// Feasibility tolerance on constraint residuals (rows are scaled to unit
/// max-norm when loaded, so this is close to a relative tolerance).
pub const EPS_FEAS: f64 = 1e-9;

/// Smallest pivot magnitude accepted during the ratio test.
const EPS_PIVOT: f64 = 1e-10;

/// Reduced-cost threshold for entering columns.
const EPS_COST: f64 = 1e-9;

/// Basis inverse is rebuilt from scratch this often, and once at the end
/// before extracting multipliers.
const REFACTOR_EVERY: usize = 64;

/// Iterations without objective improvement before switching to Bland.
const STALL_LIMIT: usize = 24;

/// Canonical feasible region: every row reads `g.x >= h`.
#[derive(Debug, Clone)]
pub struct Canonical {
    dim: usize,
    /// Row normals, stored contiguously: row i occupies `[i*dim, (i+1)*dim)`.
    normals: Vec<f64>,
    offsets: Vec<f64>,
    /// A row `0.x >= h` with h > 0 makes the region trivially empty.
    trivially_empty: bool,
}

impl Canonical {
    pub fn new(dim: usize) -> Self {
        Canonical {
            dim,
            normals: Vec::new(),
            offsets: Vec::new(),
            trivially_empty: false,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    /// Adds `g.x >= h`, scaled to unit max-norm.
    pub fn push(&mut self, g: &[f64], h: f64) {
        debug_assert_eq!(g.len(), self.dim);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            if h > 0.0 {
                self.trivially_empty = true;
            }
            return; // vacuous row
        }
        let inv = 1.0 / scale;
        self.normals.extend(g.iter().map(|v| v * inv));
        self.offsets.push(h * inv);
    }

    #[cfg(test)]
    pub fn trivially_empty(&self) -> bool {
        self.trivially_empty
    }

    fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest violation of `g.x >= h` over the (scaled) rows.
    #[cfg(test)]
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = if self.trivially_empty { f64::INFINITY } else { 0.0 };
        for i in 0..self.len() {
            let dot: f64 = self.normal(i).iter().zip(x).map(|(a, b)| a * b).sum();
            worst = worst.max(self.offsets[i] - dot);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub enum DualOutcome {
    /// Primal optimum found; `point` minimizes c.x over the region.
    Optimal { point: Vec<f64> },
    /// Dual infeasible: the primal is unbounded if feasible.
    NoCertificate,
    /// Dual unbounded: the primal is infeasible.
    PrimalInfeasible,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("simplex gave up after {iterations} iterations (phase {phase}, {rows} rows, {cols} cols)")]
pub struct SolverFailure {
    pub phase: u8,
    pub iterations: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Minimizes `c.x` over `canon`. The caller is responsible for knowing
/// whether the region is nonempty when interpreting `NoCertificate`.
///
/// Solver state lives in a per-thread scratch arena: the sampler solves
/// millions of tiny programs and the arena keeps each one allocation-free
/// after warmup.
pub fn minimize(canon: &Canonical, c: &[f64]) -> Result<DualOutcome, SolverFailure> {
    if canon.trivially_empty {
        return Ok(DualOutcome::PrimalInfeasible);
    }
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        let mut solver = DualSimplex::new(canon, c, &mut scratch);
        solver.run()
    })
}

std::thread_local! {
    static SCRATCH: std::cell::RefCell<Scratch> = std::cell::RefCell::new(Scratch::default());
}

#[derive(Default)]
struct Scratch {
    rowsign: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    basis_vals: Vec<f64>,
    binv: Vec<f64>,
    in_basis: Vec<bool>,
    pi: Vec<f64>,
    w: Vec<f64>,
    /// Gauss-Jordan workspace for refactorization, d x 2d.
    gj: Vec<f64>,
}

/// Feasibility probe: minimizes the worst violation `s` of the relaxed
/// system `g.x + s >= h, s >= 0`. Always solvable; returns `(s*, x*)`.
pub fn least_violation(canon: &Canonical) -> Result<(f64, Vec<f64>), SolverFailure> {
    if canon.trivially_empty {
        return Ok((f64::INFINITY, vec![0.0; canon.dim]));
    }
    let d = canon.dim;
    let mut aux = Canonical::new(d + 1);
    let mut g = vec![0.0; d + 1];
    for i in 0..canon.len() {
        g[..d].copy_from_slice(canon.normal(i));
        g[d] = 1.0;
        aux.push(&g, canon.offsets[i]);
    }
    g[..d].iter_mut().for_each(|v| *v = 0.0);
    g[d] = 1.0;
    aux.push(&g, 0.0);
    let mut c = vec![0.0; d + 1];
    c[d] = 1.0;
    match minimize(&aux, &c)? {
        DualOutcome::Optimal { point } => {
            let s = point[d].max(0.0);
            Ok((s, point[..d].to_vec()))
        }
        // The relaxed system is feasible and bounded below by construction,
        // so anything else is a numerical breakdown.
        _ => Err(SolverFailure {
            phase: 2,
            iterations: 0,
            rows: d + 1,
            cols: canon.len() + 1,
        }),
    }
}

struct DualSimplex<'a, 'b> {
    canon: &'a Canonical,
    d: usize,
    m: usize,
    /// All vectors live here; see `Scratch`. `rowsign` holds the row sign
    /// flips making the dual rhs nonnegative, `b` that rhs, `basis` the
    /// basis column indices (>= m denotes artificials, row index + m),
    /// `binv` the d x d row-major basis inverse.
    s: &'b mut Scratch,
    iterations: usize,
    cap: usize,
}

impl<'a, 'b> DualSimplex<'a, 'b> {
    fn new(canon: &'a Canonical, c: &[f64], s: &'b mut Scratch) -> Self {
        let d = canon.dim;
        let m = canon.len();
        s.rowsign.clear();
        s.rowsign.extend(c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }));
        s.b.clear();
        s.b.extend(c.iter().map(|v| v.abs()));
        s.basis.clear();
        s.basis.extend((0..d).map(|k| m + k));
        s.basis_vals.clear();
        s.basis_vals.extend(c.iter().map(|v| v.abs()));
        s.binv.clear();
        s.binv.resize(d * d, 0.0);
        for k in 0..d {
            s.binv[k * d + k] = 1.0;
        }
        s.in_basis.clear();
        s.in_basis.resize(m + d, false);
        s.pi.clear();
        s.pi.resize(d, 0.0);
        s.w.clear();
        s.w.resize(d, 0.0);
        DualSimplex {
            canon,
            d,
            m,
            s,
            iterations: 0,
            cap: 50 * (d + m + d).max(16),
        }
    }

    fn run(&mut self) -> Result<DualOutcome, SolverFailure> {
        for k in 0..self.d {
            let j = self.s.basis[k];
            self.s.in_basis[j] = true;
        }
        // Phase 1: drive artificial mass to zero.
        if self.phase1_objective() > EPS_FEAS * (1.0 + self.norm_b()) {
            match self.iterate(1)? {
                PhaseEnd::Converged => {}
                PhaseEnd::Unbounded => {
                    // Phase-1 objective is bounded below by zero.
                    return Err(self.failure(1));
                }
            }
            if self.phase1_objective() > EPS_FEAS * (1.0 + self.norm_b()) {
                return Ok(DualOutcome::NoCertificate);
            }
        }
        match self.iterate(2)? {
            PhaseEnd::Converged => {
                self.refactor().map_err(|_| self.failure(2))?;
                Ok(DualOutcome::Optimal { point: self.extract_point() })
            }
            PhaseEnd::Unbounded => Ok(DualOutcome::PrimalInfeasible),
        }
    }

    fn norm_b(&self) -> f64 {
        self.s.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn phase1_objective(&self) -> f64 {
        self.s
            .basis
            .iter()
            .zip(&self.s.basis_vals)
            .filter(|(&j, _)| j >= self.m)
            .map(|(_, &v)| v.max(0.0))
            .sum()
    }

    /// Artificials cost 1 in phase 1 and linger free at level zero in phase
    /// 2; real columns cost -h_j in phase 2.
    #[inline]
    fn column_cost(&self, j: usize, phase: u8) -> f64 {
        if j >= self.m {
            if phase == 1 {
                1.0
            } else {
                0.0
            }
        } else if phase == 1 {
            0.0
        } else {
            -self.canon.offsets[j]
        }
    }

    fn objective(&self, phase: u8) -> f64 {
        self.s
            .basis
            .iter()
            .zip(&self.s.basis_vals)
            .map(|(&j, &v)| self.column_cost(j, phase) * v)
            .sum()
    }

    /// Fills `s.pi` with the simplex multipliers, pre-multiplied by the row
    /// signs: entry i is what a raw (unflipped) normal prices against, and
    /// its negation is the primal point at optimality.
    fn multipliers(&mut self, phase: u8) {
        let d = self.d;
        let m = self.m;
        let canon = self.canon;
        let offsets = &canon.offsets;
        let s = &mut *self.s;
        s.pi.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..d {
            let j = s.basis[k];
            let cb = if j >= m {
                if phase == 1 {
                    1.0
                } else {
                    0.0
                }
            } else if phase == 1 {
                0.0
            } else {
                -offsets[j]
            };
            if cb != 0.0 {
                let row = &s.binv[k * d..(k + 1) * d];
                for (pi_i, &v) in s.pi.iter_mut().zip(row) {
                    *pi_i += cb * v;
                }
            }
        }
        for (pi_i, &sg) in s.pi.iter_mut().zip(&s.rowsign) {
            *pi_i *= sg;
        }
    }

    fn iterate(&mut self, phase: u8) -> Result<PhaseEnd, SolverFailure> {
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_obj = self.objective(phase);
        loop {
            self.iterations += 1;
            if self.iterations > self.cap {
                return Err(self.failure(phase));
            }
            if self.iterations % REFACTOR_EVERY == 0 {
                self.refactor().map_err(|_| self.failure(phase))?;
            }
            self.multipliers(phase);
            let entering = self.price(phase, bland);
            let Some(enter) = entering else {
                return Ok(PhaseEnd::Converged);
            };
            self.direction(enter);
            let Some((leave, theta)) = self.ratio_test(phase, bland) else {
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(enter, leave, theta);

            let obj = self.objective(phase);
            if obj < last_obj - 1e-13 * (1.0 + last_obj.abs()) {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            }
            last_obj = obj;
        }
    }

    /// Entering column: Dantzig (most negative reduced cost), or first
    /// eligible index under Bland. Artificials never re-enter, so only real
    /// columns are priced, against the sign-folded multipliers in `s.pi`.
    fn price(&self, phase: u8, bland: bool) -> Option<usize> {
        let d = self.d;
        let s = &*self.s;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.m {
            if s.in_basis[j] {
                continue;
            }
            let normal = &self.canon.normals[j * d..(j + 1) * d];
            let mut dot = 0.0;
            for (&pi_i, &g) in s.pi.iter().zip(normal) {
                dot += pi_i * g;
            }
            let rc = self.column_cost(j, phase) - dot;
            if rc < -EPS_COST {
                if bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, v)| rc < v) {
                    best = Some((j, rc));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Fills `s.w` with the basis representation of the entering column.
    /// The entering index always names a real column (artificials never
    /// re-enter), so its sign-adjusted entries come straight off the stored
    /// normal. Reuses `s.pi` as the adjusted-column buffer; the multipliers
    /// are recomputed next iteration anyway.
    fn direction(&mut self, enter: usize) {
        let d = self.d;
        let s = &mut *self.s;
        let normal = &self.canon.normals[enter * d..(enter + 1) * d];
        for ((pi_i, &g), &sg) in s.pi.iter_mut().zip(normal).zip(&s.rowsign) {
            *pi_i = g * sg;
        }
        for k in 0..d {
            let row = &s.binv[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for (&r, &v) in row.iter().zip(&s.pi) {
                acc += r * v;
            }
            s.w[k] = acc;
        }
    }

    /// Leaving row and step length: min ratio over decreasing rows. In phase
    /// 2 a basic artificial sitting at zero must not grow, so a row that
    /// would raise one blocks at step zero and the artificial pivots out.
    /// Ties prefer kicking artificials out; under Bland the tie-break is the
    /// bare smallest column index, which is what makes the rule anti-cycling.
    fn ratio_test(&self, phase: u8, bland: bool) -> Option<(usize, f64)> {
        let s = &*self.s;
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..self.d {
            let ratio = if s.w[k] > EPS_PIVOT {
                (s.basis_vals[k].max(0.0)) / s.w[k]
            } else if phase == 2 && s.basis[k] >= self.m && s.w[k] < -EPS_PIVOT {
                0.0
            } else {
                continue;
            };
            let better = match leave {
                None => true,
                Some((cur, best)) => {
                    let tied = ratio < best + 1e-12;
                    if ratio < best - 1e-12 {
                        true
                    } else if !tied {
                        false
                    } else if bland {
                        s.basis[k] < s.basis[cur]
                    } else {
                        let cand_art = s.basis[k] >= self.m;
                        let cur_art = s.basis[cur] >= self.m;
                        (cand_art && !cur_art)
                            || (cand_art == cur_art && s.basis[k] < s.basis[cur])
                    }
                }
            };
            if better {
                leave = Some((k, ratio));
            }
        }
        leave
    }

    fn pivot(&mut self, enter: usize, leave: usize, theta: f64) {
        let d = self.d;
        let s = &mut *self.s;
        for k in 0..d {
            s.basis_vals[k] -= theta * s.w[k];
        }
        s.basis_vals[leave] = theta;
        let piv = s.w[leave];
        for i in 0..d {
            s.binv[leave * d + i] /= piv;
        }
        for k in 0..d {
            if k != leave {
                let factor = s.w[k];
                if factor != 0.0 {
                    for i in 0..d {
                        s.binv[k * d + i] -= factor * s.binv[leave * d + i];
                    }
                }
            }
        }
        s.in_basis[s.basis[leave]] = false;
        s.in_basis[enter] = true;
        s.basis[leave] = enter;
    }

    /// Rebuilds the basis inverse and basic values from scratch via
    /// Gauss-Jordan with partial pivoting on [B | I].
    fn refactor(&mut self) -> Result<(), ()> {
        let d = self.d;
        let m = self.m;
        let canon = self.canon;
        let s = &mut *self.s;
        let width = 2 * d;
        s.gj.clear();
        s.gj.resize(d * width, 0.0);
        for (k, &j) in s.basis.iter().enumerate() {
            // Column k of B is basis column j, sign-adjusted.
            if j < m {
                for i in 0..d {
                    s.gj[i * width + k] = canon.normals[j * d + i] * s.rowsign[i];
                }
            } else {
                s.gj[(j - m) * width + k] = 1.0;
            }
        }
        for i in 0..d {
            s.gj[i * width + d + i] = 1.0;
        }
        for col in 0..d {
            let mut piv_row = col;
            let mut best = s.gj[col * width + col].abs();
            for r in col + 1..d {
                let v = s.gj[r * width + col].abs();
                if v > best {
                    best = v;
                    piv_row = r;
                }
            }
            if !(best > 0.0) {
                return Err(());
            }
            if piv_row != col {
                for i in 0..width {
                    s.gj.swap(col * width + i, piv_row * width + i);
                }
            }
            let piv = s.gj[col * width + col];
            for i in 0..width {
                s.gj[col * width + i] /= piv;
            }
            for r in 0..d {
                if r != col {
                    let factor = s.gj[r * width + col];
                    if factor != 0.0 {
                        for i in 0..width {
                            s.gj[r * width + i] -= factor * s.gj[col * width + i];
                        }
                    }
                }
            }
        }
        // binv rows index basis positions: binv = B^{-1}, row k applied to a
        // column gives that column's coefficient on basis entry k.
        for k in 0..d {
            for i in 0..d {
                s.binv[k * d + i] = s.gj[k * width + d + i];
            }
        }
        for k in 0..d {
            let row = &s.binv[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for (&r, &bv) in row.iter().zip(&s.b) {
                acc += r * bv;
            }
            s.basis_vals[k] = acc;
        }
        Ok(())
    }

    /// At dual optimality the negated (sign-folded) multipliers solve the
    /// primal.
    fn extract_point(&mut self) -> Vec<f64> {
        self.multipliers(2);
        self.s.pi.iter().map(|&v| -v).collect()
    }

    fn failure(&self, phase: u8) -> SolverFailure {
        SolverFailure {
            phase,
            iterations: self.iterations,
            rows: self.d,
            cols: self.m + self.d,
        }
    }
}

enum PhaseEnd {
    Converged,
    Unbounded,
}
