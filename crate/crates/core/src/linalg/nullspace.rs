//! Null-space bases used by the particle rejuvenation move. Given a fixed
//! block `Xp` (t x q) and an effect design `V` (t x l), we want eta = (eta1;
//! eta2) whose columns span the solutions of `Xp eta1 = V eta2`, normalized
//! so eta2 has orthonormal columns and rank(eta) = rank(eta2) = d.

use nalgebra::{DMatrix, RowDVector};

#[derive(Debug, Clone)]
pub struct NullBasis {
    /// q x d block acting on the regression coordinates.
    pub eta1: DMatrix<f64>,
    /// l x d block acting on the effect coordinates; orthonormal columns.
    pub eta2: DMatrix<f64>,
}

impl NullBasis {
    pub fn dim(&self) -> usize {
        self.eta2.ncols()
    }
}

/// General construction: the null space of `[-Xp | V]` via SVD, then a
/// column-pivoted QR of its effect block to pick d independent directions
/// and orthonormalize them. Returns None when no usable direction exists.
pub fn null_space_basis(xp: &DMatrix<f64>, v: &DMatrix<f64>) -> Option<NullBasis> {
    let t = xp.nrows();
    assert_eq!(v.nrows(), t, "design blocks must share rows");
    let q = xp.ncols();
    let l = v.ncols();
    let n_cols = q + l;
    // Pad with zero rows when the system is wide so the thin SVD still
    // carries a full set of right singular vectors.
    let n_rows = t.max(n_cols);

    let mut a = DMatrix::zeros(n_rows, n_cols);
    for i in 0..t {
        for j in 0..q {
            a[(i, j)] = -xp[(i, j)];
        }
        for j in 0..l {
            a[(i, q + j)] = v[(i, j)];
        }
    }

    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors were requested");
    let sig = &svd.singular_values;
    let smax = sig.iter().cloned().fold(0.0f64, f64::max);
    let tau = n_rows as f64 * f64::EPSILON * smax;
    let null_idx: Vec<usize> = (0..vt.nrows()).filter(|&i| sig[i] <= tau).collect();
    if null_idx.is_empty() {
        return None;
    }

    let k = null_idx.len();
    let mut n1 = DMatrix::zeros(q, k);
    let mut n2 = DMatrix::zeros(l, k);
    for (c, &i) in null_idx.iter().enumerate() {
        for j in 0..q {
            n1[(j, c)] = vt[(i, j)];
        }
        for j in 0..l {
            n2[(j, c)] = vt[(i, q + j)];
        }
    }

    let qr = n2.col_piv_qr();
    let r = qr.r();
    let diag_len = l.min(k);
    if diag_len == 0 {
        return None;
    }
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 {
        return None;
    }
    // Rounding in the SVD leaks components of size ~ tau / sigma_min+ into
    // the null vectors (first-order perturbation along the weakest retained
    // direction), and those show up as spurious pivots in N2. Budget for
    // them on top of the usual relative threshold.
    let smin_pos = sig
        .iter()
        .filter(|&&s| s > tau)
        .fold(f64::INFINITY, |m, &s| m.min(s));
    let noise = if smin_pos.is_finite() { 8.0 * tau / smin_pos } else { 0.0 };
    let tol = l.max(k) as f64 * f64::EPSILON * r00 + noise;
    let mut d = 0;
    while d < diag_len && r[(d, d)].abs() > tol {
        d += 1;
    }
    if d == 0 {
        return None;
    }
    // Columns of N1 permuted to match R's pivot order.
    qr.p().permute_columns(&mut n1);
    let eta2_full = qr.q().columns(0, d).into_owned();
    let r_d = r.view((0, 0), (d, d)).into_owned();
    let n1_d = n1.columns(0, d).into_owned();
    // eta1 = N1_d R_d^{-1}, via the transposed triangular solve.
    let eta1_full = r_d
        .transpose()
        .solve_lower_triangular(&n1_d.transpose())?
        .transpose();

    // Tripwire against construction mistakes (sign or permutation slips
    // produce order-one residuals here); genuine numerical marginality is
    // already handled by the pivot threshold above.
    let mut eta = DMatrix::zeros(n_cols, d);
    eta.view_mut((0, 0), (q, d)).copy_from(&eta1_full);
    eta.view_mut((q, 0), (l, d)).copy_from(&eta2_full);
    let resid = &a * &eta;
    let worst = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = eta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    debug_assert!(
        worst <= 1e-8 * smax.max(1.0) * scale,
        "null basis residual {worst} out of proportion to scale {scale}"
    );

    Some(NullBasis {
        eta1: eta1_full,
        eta2: eta2_full,
    })
}

/// Fast path for `V = I`: the null space of `[-Xp | I]` is {(w, Xp w)}, so a
/// column-pivoted QR of `Xp` alone yields eta2 = Q_d and eta1 scatters
/// R_d^{-1} into the pivoted coordinates. Avoids the t x (q + t) SVD, which
/// dominates once t is large.
pub fn null_space_basis_identity(xp: &DMatrix<f64>) -> Option<NullBasis> {
    let t = xp.nrows();
    let q = xp.ncols();
    if t == 0 || q == 0 {
        return None;
    }
    let qr = xp.clone().col_piv_qr();
    let r = qr.r();
    let diag_len = t.min(q);
    let r00 = r[(0, 0)].abs();
    if r00 == 0.0 {
        return None;
    }
    let tol = t.max(q) as f64 * f64::EPSILON * r00;
    let mut d = 0;
    while d < diag_len && r[(d, d)].abs() > tol {
        d += 1;
    }
    let eta2 = qr.q().columns(0, d).into_owned();
    let r_d = r.view((0, 0), (d, d)).into_owned();
    let rinv = r_d.solve_upper_triangular(&DMatrix::identity(d, d))?;
    let mut idx = RowDVector::from_iterator(q, (0..q).map(|i| i as f64));
    qr.p().permute_columns(&mut idx);
    let mut eta1 = DMatrix::zeros(q, d);
    for j in 0..d {
        let orig = idx[j] as usize;
        for c in 0..d {
            eta1[(orig, c)] = rinv[(j, c)];
        }
    }
    Some(NullBasis { eta1, eta2 })
}
