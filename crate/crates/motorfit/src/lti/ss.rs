//! SISO state-space models and conversions to/from transfer functions.

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{Polynomial, TransferFunction};
use crate::error::{Error, Result};

/// `x' = A x + B u`, `y = C x + D u` with a single input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("state dimension must be >= 1".into()));
        }
        if a.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != n || c.len() != n {
            return Err(Error::InvalidModel(format!(
                "B ({}) and C ({}) must match the state dimension {n}",
                b.len(),
                c.len()
            )));
        }
        Ok(StateSpaceModel { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Same (A, B, D) with a different output selector.
    pub fn with_output(&self, c: RowDVector<f64>) -> Result<StateSpaceModel> {
        StateSpaceModel::new(self.a.clone(), self.b.clone(), c, self.d)
    }

    /// Output selector picking state `index` alone.
    pub fn state_selector(n: usize, index: usize) -> RowDVector<f64> {
        let mut c = RowDVector::zeros(n);
        c[index] = 1.0;
        c
    }

    /// `A` as nested row vectors, for serialization.
    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        (0..self.a.nrows())
            .map(|i| (0..self.a.ncols()).map(|j| self.a[(i, j)]).collect())
            .collect()
    }
}

/// Transfer function `C (SI - A)^{-1} B + D` computed with the
/// Faddeev–LeVerrier recursion: the denominator is the characteristic
/// polynomial of `A` (monic by construction) and the numerator comes from
/// the adjugate expansion, so no eigenvalue solve is involved.
pub fn ss_to_tf(m: &StateSpaceModel) -> Result<TransferFunction> {
    let n = m.order();
    let identity = DMatrix::<f64>::identity(n, n);

    // char_desc[k] is the coefficient of S^{n-k}; num_desc[k-1] of S^{n-k}.
    let mut char_desc = vec![1.0];
    let mut num_desc = Vec::with_capacity(n);
    let mut mk = identity.clone();
    for k in 1..=n {
        num_desc.push((&m.c * &mk * &m.b)[(0, 0)]);
        let am = &m.a * &mk;
        let ck = -am.trace() / k as f64;
        char_desc.push(ck);
        mk = am + ck * &identity;
    }

    let den = Polynomial::new(char_desc.iter().rev().cloned().collect());
    let mut num = Polynomial::new(num_desc.iter().rev().cloned().collect());
    if m.d != 0.0 {
        num = num.add(&den.scaled(m.d));
    }
    TransferFunction::new(num, den)
}

/// Controllable companion-form realization of a proper transfer function.
/// For `deg(num) == deg(den)` the direct feedthrough is split off into `D`.
pub fn tf_to_ss_companion(h: &TransferFunction) -> StateSpaceModel {
    let h = h.normalized();
    let den = h.den().coeffs();
    let n = h.den().degree();

    let d = if h.num().degree() == n {
        h.num().coeffs()[n]
    } else {
        0.0
    };
    // Strictly proper residual num - d * den.
    let mut num = vec![0.0; n];
    for (i, c) in h.num().coeffs().iter().enumerate() {
        if i < n {
            num[i] = *c;
        }
    }
    if d != 0.0 {
        for (i, c) in den.iter().enumerate() {
            if i < n {
                num[i] -= d * c;
            }
        }
    }

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -den[j];
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let c = RowDVector::from_row_slice(&num);

    StateSpaceModel { a, b, c, d }
}
