//! SVD-backed least-squares plumbing shared by the identification modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct Lstsq {
    pub solution: DVector<f64>,
    /// Number of singular values kept above the cutoff.
    pub rank: usize,
    /// Euclidean norm of `a * solution - b`.
    pub residual: f64,
}

/// Minimum-norm least-squares solution of `a x = b` via SVD, treating
/// singular values below `rcond * sigma_max` as zero.
pub(crate) fn svd_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Result<Lstsq> {
    if a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "lstsq shape mismatch: {}x{} matrix vs rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");

    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = rcond * sigma_max;

    let mut rank = 0;
    let mut scaled = u.transpose() * b;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff && *s > 0.0 {
            scaled[i] /= *s;
            rank += 1;
        } else {
            scaled[i] = 0.0;
        }
    }
    let solution = v_t.transpose() * scaled;
    let residual = (a * &solution - b).norm();

    Ok(Lstsq {
        solution,
        rank,
        residual,
    })
}

/// Singular values of `a`, descending.
pub(crate) fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}
