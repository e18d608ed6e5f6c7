//! Scalar and vector primitives shared by the diversity losses.

use crate::error::{check_len, Error, Result};

/// Softmax with max subtraction, so large logits never overflow.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Shape {
            context: "softmax input",
            expected: 1,
            got: 0,
        });
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// `sum_i p_i ln(p_i / q_i)`; terms with `p_i = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len("kl divergence", p.len(), q.len())?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::DivergenceUndefined { index });
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can leave tiny negative totals for p ~= q.
    Ok(total.max(0.0))
}

pub fn clip(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(x.max(lo).min(hi))
}

/// Forward-difference second derivative of `f` along state dimension `dim`:
/// `(f(s + 2h e) - 2 f(s + h e) + f(s)) / h^2`, one entry per output of `f`.
pub fn fdm_second_derivative<F>(mut f: F, s: &[f64], dim: usize, h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Numeric(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    if dim >= s.len() {
        return Err(Error::Shape {
            context: "finite-difference dimension",
            expected: s.len(),
            got: dim,
        });
    }
    let f0 = f(s)?;
    let mut shifted = s.to_vec();
    shifted[dim] = s[dim] + h;
    let f1 = f(&shifted)?;
    shifted[dim] = s[dim] + 2.0 * h;
    let f2 = f(&shifted)?;
    check_len("finite-difference outputs", f0.len(), f1.len())?;
    check_len("finite-difference outputs", f0.len(), f2.len())?;
    if f0.iter().chain(&f1).chain(&f2).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "non-finite function value in stencil".into(),
        ));
    }
    let h2 = h * h;
    Ok(f0
        .iter()
        .zip(&f1)
        .zip(&f2)
        .map(|((a, b), c)| (c - 2.0 * b + a) / h2)
        .collect())
}
