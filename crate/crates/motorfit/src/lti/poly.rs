//! Real polynomials in `S`, stored as ascending-power coefficient lists.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// A real polynomial. `coeffs[k]` multiplies `S^k`; the list is nonempty and
/// the leading (highest-index) coefficient is nonzero unless the polynomial
/// is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial, trimming trailing coefficients that are zero
    /// relative to the largest one.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Polynomial { coeffs };
        p.trim();
        p
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    fn trim(&mut self) {
        if self.coeffs.is_empty() {
            self.coeffs.push(0.0);
            return;
        }
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = scale * 1e-12;
        while self.coeffs.len() > 1 {
            let last = *self.coeffs.last().unwrap();
            if last == 0.0 || last.abs() <= tol {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    /// Horner evaluation at a real point.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, s: Complex<f64>) -> Complex<f64> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn scaled(&self, k: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// Multiplies by `S` (shifts coefficients up one power).
    pub fn mul_s(&self) -> Polynomial {
        let mut c = vec![0.0];
        c.extend_from_slice(&self.coeffs);
        Polynomial::new(c)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, a) in self.coeffs.iter().enumerate() {
            out[i] += a;
        }
        for (i, b) in other.coeffs.iter().enumerate() {
            out[i] += b;
        }
        Polynomial::new(out)
    }

    /// Roots with multiplicity, computed as eigenvalues of the companion
    /// matrix of the monic-normalized polynomial. Order is unspecified.
    pub fn roots(&self) -> Result<Vec<Complex<f64>>> {
        if self.is_zero() {
            return Err(Error::InvalidInput(
                "roots of the zero polynomial are undefined".into(),
            ));
        }
        let n = self.degree();
        if n == 0 {
            return Ok(vec![]);
        }
        let lead = self.leading();
        let mut companion = DMatrix::<f64>::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            companion[(i + 1, i)] = 1.0;
        }
        for i in 0..n {
            companion[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        Ok(companion.complex_eigenvalues().iter().cloned().collect())
    }

    /// Monic polynomial with the given roots. The root set must be closed
    /// under conjugation; residual imaginary parts are checked and dropped.
    pub fn from_roots(roots: &[Complex<f64>]) -> Result<Polynomial> {
        let mut coeffs = vec![Complex::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i] -= c * r;
                next[i + 1] += c;
            }
            coeffs = next;
        }
        let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.re.abs()));
        for c in &coeffs {
            if c.im.abs() > 1e-8 * scale.max(1.0) {
                return Err(Error::InvalidInput(
                    "root set is not closed under conjugation".into(),
                ));
            }
        }
        Ok(Polynomial::new(coeffs.iter().map(|c| c.re).collect()))
    }
}
