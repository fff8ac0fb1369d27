//! Transfer functions: normalization, pole/zero analysis, order reduction
//! and time responses.

use nalgebra::Complex;

use super::{tf_to_ss_companion, Polynomial};
use crate::error::{Error, Result};
use crate::sim;
use crate::trace::Trace;

/// Ratio of two real polynomials in `S`. Construction normalizes the
/// denominator to monic form (the scale is divided into the numerator) and
/// rejects improper ratios, so `deg(num) <= deg(den)` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() || den.degree() < 1 {
            return Err(Error::InvalidModel(
                "denominator must have degree >= 1".into(),
            ));
        }
        if num.degree() > den.degree() && !num.is_zero() {
            return Err(Error::InvalidModel(format!(
                "improper transfer function: deg(num) = {} > deg(den) = {}",
                num.degree(),
                den.degree()
            )));
        }
        for c in num.coeffs().iter().chain(den.coeffs()) {
            if !c.is_finite() {
                return Err(Error::InvalidModel("non-finite coefficient".into()));
            }
        }
        let lead = den.leading();
        let num = num.scaled(1.0 / lead);
        let den = den.scaled(1.0 / lead);
        for c in num.coeffs().iter().chain(den.coeffs()) {
            if !c.is_finite() {
                return Err(Error::InvalidModel(
                    "coefficients overflow under monic normalization".into(),
                ));
            }
        }
        Ok(TransferFunction { num, den })
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self> {
        TransferFunction::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    /// Parses the CLI literal form `num;den` with ascending-power,
    /// comma-separated coefficients, e.g. `36;36,1,1` for 36/(S^2+S+36).
    pub fn parse_literal(text: &str) -> Result<Self> {
        let mut parts = text.split(';');
        let (num, den) = match (parts.next(), parts.next(), parts.next()) {
            (Some(n), Some(d), None) => (n, d),
            _ => {
                return Err(Error::Parse(
                    "transfer-function literal must be 'num;den'".into(),
                ))
            }
        };
        let parse_list = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|c| {
                    let c = c.trim();
                    c.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad coefficient '{c}'")))
                })
                .collect()
        };
        TransferFunction::from_coeffs(&parse_list(num)?, &parse_list(den)?)
    }

    /// The CLI literal form of this transfer function.
    pub fn to_literal(&self) -> String {
        let join = |p: &Polynomial| {
            p.coeffs()
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{};{}", join(&self.num), join(&self.den))
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// Already monic; kept for call sites that want to be explicit.
    pub fn normalized(&self) -> TransferFunction {
        self.clone()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() < self.den.degree()
    }

    /// `num(0)/den(0)`; infinite when the system has a pole at the origin.
    pub fn dc_gain(&self) -> f64 {
        self.num.eval(0.0) / self.den.eval(0.0)
    }

    /// Multiplies by `S`, e.g. to turn a position transfer function into the
    /// velocity one. Fails if the result would be improper.
    pub fn times_s(&self) -> Result<TransferFunction> {
        TransferFunction::new(self.num.mul_s(), self.den.clone())
    }
}

/// Roots of the denominator, with multiplicity. Order is unspecified.
pub fn poles(h: &TransferFunction) -> Result<Vec<Complex<f64>>> {
    h.den().roots()
}

/// Roots of the numerator; empty for constant or zero numerators.
pub fn zeros(h: &TransferFunction) -> Result<Vec<Complex<f64>>> {
    if h.num().is_zero() {
        return Ok(vec![]);
    }
    h.num().roots()
}

fn is_real(r: Complex<f64>) -> bool {
    r.im.abs() <= 1e-9 * (1.0 + r.norm())
}

/// Cancels every pole/zero pair closer than `tol`, keeping the retained
/// factors exact: the result is `k * prod(S - z_kept) / prod(S - p_kept)`
/// with `k` the leading numerator coefficient of the monic-normalized input.
pub fn cancel_near_pole_zero(h: &TransferFunction, tol: f64) -> Result<TransferFunction> {
    if tol <= 0.0 || h.num().is_zero() || h.num().degree() == 0 {
        return Ok(h.clone());
    }
    let zs = zeros(h)?;
    let ps = poles(h)?;

    let mut z_to_p: Vec<Option<usize>> = vec![None; zs.len()];
    let mut p_used = vec![false; ps.len()];
    for (i, z) in zs.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in ps.iter().enumerate() {
            if p_used[j] {
                continue;
            }
            let d = (z - p).norm();
            if d <= tol && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            z_to_p[i] = Some(j);
            p_used[j] = true;
        }
    }

    // The cancelled sets must stay closed under conjugation or the rebuilt
    // polynomials would come out complex. Unpair any complex member whose
    // conjugate survived.
    loop {
        let mut changed = false;
        for i in 0..zs.len() {
            let Some(j) = z_to_p[i] else { continue };
            let z_ok = is_real(zs[i])
                || (0..zs.len()).any(|k| {
                    k != i
                        && z_to_p[k].is_some()
                        && (zs[k] - zs[i].conj()).norm() <= 1e-6 * (1.0 + zs[i].norm())
                });
            let p = ps[j];
            let p_ok = is_real(p)
                || (0..ps.len()).any(|k| {
                    k != j && p_used[k] && (ps[k] - p.conj()).norm() <= 1e-6 * (1.0 + p.norm())
                });
            if !z_ok || !p_ok {
                z_to_p[i] = None;
                p_used[j] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    if z_to_p.iter().all(Option::is_none) {
        return Ok(h.clone());
    }

    let kept_zeros: Vec<_> = zs
        .iter()
        .zip(&z_to_p)
        .filter(|(_, m)| m.is_none())
        .map(|(z, _)| *z)
        .collect();
    let kept_poles: Vec<_> = ps
        .iter()
        .zip(&p_used)
        .filter(|(_, used)| !**used)
        .map(|(p, _)| *p)
        .collect();

    let k = h.num().leading();
    let num = Polynomial::from_roots(&kept_zeros)?.scaled(k);
    let den = Polynomial::from_roots(&kept_poles)?;
    TransferFunction::new(num, den)
}

/// Retains the `target_order` poles closest to the imaginary axis and
/// rescales a constant numerator so the DC gain (or the low-frequency gain
/// when poles sit at the origin) is preserved. Conjugate pairs are kept
/// atomic; a tie at the retention boundary is an error.
pub fn dominant_pole_reduce(h: &TransferFunction, target_order: usize) -> Result<TransferFunction> {
    let n = h.den().degree();
    if target_order >= n {
        return Ok(h.clone());
    }
    if target_order == 0 {
        return Err(Error::InvalidInput("target order must be >= 1".into()));
    }
    let mut ps = poles(h)?;
    let scale = ps.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    if ps.iter().any(|p| p.re > 1e-9 * scale) {
        return Err(Error::InvalidInput(
            "dominant-pole reduction requires a stable or marginally stable system".into(),
        ));
    }
    ps.sort_by(|a, b| a.re.abs().partial_cmp(&b.re.abs()).unwrap());
    // Repeated roots split by ~sqrt(eps) in the eigenvalue solve, so the
    // tie detector must sit above that.
    let boundary_gap = (ps[target_order - 1].re.abs() - ps[target_order].re.abs()).abs();
    if boundary_gap <= 1e-7 * (1.0 + ps[target_order - 1].re.abs()) {
        return Err(Error::InvalidInput(
            "ambiguous dominance: tied real parts at the retention boundary".into(),
        ));
    }

    let kept = &ps[..target_order];
    let dropped = &ps[target_order..];
    let den_new = Polynomial::from_roots(kept)?;

    let origin_tol = 1e-9 * scale;
    let kept_nonorigin: Vec<_> = kept
        .iter()
        .filter(|p| p.norm() > origin_tol)
        .cloned()
        .collect();
    let n_origin = kept.len() - kept_nonorigin.len();

    let gain = if n_origin == 0 {
        // Plain DC gain, computed from the exact coefficients.
        h.num().eval(0.0) / h.den().eval(0.0) * den_new.eval(0.0)
    } else {
        // lim S^m H(S) as S -> 0, with m the origin multiplicity: evaluate
        // the deflated denominators at 0 via the retained root factors.
        let mut all_nonorigin = kept_nonorigin.clone();
        all_nonorigin.extend(dropped.iter().cloned());
        let defl_old = Polynomial::from_roots(&all_nonorigin)?;
        let defl_new = Polynomial::from_roots(&kept_nonorigin)?;
        h.num().eval(0.0) / defl_old.eval(0.0) * defl_new.eval(0.0)
    };

    TransferFunction::new(Polynomial::constant(gain), den_new)
}

/// Closed loop `k H / (1 + k H)` around a unity negative-feedback path.
pub fn unity_feedback(h: &TransferFunction, k: f64) -> Result<TransferFunction> {
    let num = h.num().scaled(k);
    let den = h.den().add(&num);
    TransferFunction::new(num, den)
}

/// Closed loop of a position plant under `u = kp (ref - y) - kv y'`:
/// `kp num / (den + (kv S + kp) num)`.
pub fn servo_closed_loop_tf(
    plant: &TransferFunction,
    kp: f64,
    kv: f64,
) -> Result<TransferFunction> {
    let num = plant.num();
    let fb = num.scaled(kp).add(&num.mul_s().scaled(kv));
    TransferFunction::new(num.scaled(kp), plant.den().add(&fb))
}

/// Response of `h` to the step `v0 * u(t)` from zero initial conditions,
/// sampled every `dt` over `[0, duration]`. Divergent systems return a
/// truncated trace with the divergence flag set.
pub fn step_response(h: &TransferFunction, v0: f64, dt: f64, duration: f64) -> Result<Trace> {
    if dt <= 0.0 || duration < dt {
        return Err(Error::InvalidInput(
            "step_response requires dt > 0 and duration >= dt".into(),
        ));
    }
    let m = tf_to_ss_companion(h);
    let steps = (duration / dt + 1e-9).floor() as usize;
    let input = Trace::from_samples(dt, vec![v0; steps + 1]);
    Ok(sim::simulate_lti(&m, &input))
}

/// Unit impulse response, realized as the zero-input response from the
/// initial state `B` of the companion form.
pub fn impulse_response(h: &TransferFunction, dt: f64, duration: f64) -> Result<Trace> {
    if dt <= 0.0 || duration < dt {
        return Err(Error::InvalidInput(
            "impulse_response requires dt > 0 and duration >= dt".into(),
        ));
    }
    let m = tf_to_ss_companion(h);
    let steps = (duration / dt + 1e-9).floor() as usize;
    let input = Trace::from_samples(dt, vec![0.0; steps + 1]);
    let x0 = m.b.clone();
    Ok(sim::simulate_lti_from(&m, &x0, &input))
}
