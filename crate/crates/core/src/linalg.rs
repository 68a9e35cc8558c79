//! Small dense/matrix-free linear-algebra helpers shared by the gap and
//! dynamics modules.

use nalgebra::{DMatrix, DVector};

#[derive(Debug)]
pub(crate) struct GmresFailure {
    pub iterations: usize,
    pub residual: f64,
}

/// Restart-free GMRES with modified Gram-Schmidt Arnoldi and Givens
/// rotations. `apply` is the (already preconditioned) operator; convergence
/// is declared when the residual drops below max(rel_tol·‖rhs‖, abs_tol).
pub(crate) fn gmres<F>(
    apply: F,
    rhs: &DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
    max_iters: usize,
) -> Result<(DVector<f64>, usize), GmresFailure>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = rhs.len();
    let rhs_norm = rhs.norm();
    let target = (rel_tol * rhs_norm).max(abs_tol);
    if rhs_norm <= target {
        return Ok((DVector::zeros(n), 0));
    }
    let m = max_iters.min(n);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
    basis.push(rhs / rhs_norm);
    // Hessenberg columns after Givens, plus rotation bookkeeping
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = DVector::<f64>::zeros(m + 1);
    g[0] = rhs_norm;

    let mut k_used = 0;
    let mut residual = rhs_norm;
    for k in 0..m {
        let mut w = apply(&basis[k]);
        for (j, v) in basis.iter().enumerate() {
            let hjk = w.dot(v);
            h[(j, k)] = hjk;
            w.axpy(-hjk, v, 1.0);
        }
        let wnorm = w.norm();
        h[(k + 1, k)] = wnorm;

        // apply accumulated rotations to the new column
        for j in 0..k {
            let t = cs[j] * h[(j, k)] + sn[j] * h[(j + 1, k)];
            h[(j + 1, k)] = -sn[j] * h[(j, k)] + cs[j] * h[(j + 1, k)];
            h[(j, k)] = t;
        }
        let denom = h[(k, k)].hypot(h[(k + 1, k)]);
        if denom == 0.0 {
            cs[k] = 1.0;
            sn[k] = 0.0;
        } else {
            cs[k] = h[(k, k)] / denom;
            sn[k] = h[(k + 1, k)] / denom;
        }
        h[(k, k)] = denom;
        h[(k + 1, k)] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];

        k_used = k + 1;
        residual = g[k + 1].abs();
        if residual <= target || wnorm == 0.0 {
            break;
        }
        basis.push(w / wnorm);
    }

    if residual > target {
        return Err(GmresFailure {
            iterations: k_used,
            residual,
        });
    }

    // back substitution for the least-squares coefficients
    let mut y = vec![0.0f64; k_used];
    for i in (0..k_used).rev() {
        let mut acc = g[i];
        for (j, yj) in y.iter().enumerate().skip(i + 1) {
            acc -= h[(i, j)] * yj;
        }
        y[i] = acc / h[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for (j, yj) in y.iter().enumerate() {
        x.axpy(*yj, &basis[j], 1.0);
    }
    Ok((x, k_used))
}
