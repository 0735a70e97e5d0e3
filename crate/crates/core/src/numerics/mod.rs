//! Dense `f64` tensors, a named parameter store, and a reverse-mode gradient
//! tape with a finite-difference checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPS};
pub use params::ParamStore;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// `log Σ exp(xᵢ)`, shifted by the maximum.
pub fn logsumexp(xs: &[f64]) -> Result<f64> {
    let max = xs
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyInput)?;
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
}

/// `log(exp(a) + exp(b))` without the slice plumbing; `-inf` aware.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-wise softmax of a rank-2 tensor, outside any tape.
pub fn softmax_rows(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(&[a.rows(), a.cols()]);
    for r in 0..a.rows() {
        tape::softmax_into(a.row(r), out.row_mut(r));
    }
    out
}

/// Row-wise log-softmax of a rank-2 tensor.
pub fn log_softmax_rows(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(&[a.rows(), a.cols()]);
    for r in 0..a.rows() {
        let row = a.row(r);
        // rows are never empty for label posteriors
        let lse = logsumexp(row).unwrap_or(f64::NEG_INFINITY);
        for (o, x) in out.row_mut(r).iter_mut().zip(row) {
            *o = x - lse;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_small_cases() {
        assert_eq!(logsumexp(&[3.5]).unwrap(), 3.5);
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(logsumexp(&[]), Err(Error::EmptyInput)));
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 2]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_matches_logsumexp() {
        for &(a, b) in &[(0.0, 0.0), (-3.0, 2.0), (700.0, 699.0), (f64::NEG_INFINITY, 1.0)] {
            let want = logsumexp(&[a, b]).unwrap();
            assert!((log_add(a, b) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_rows_normalizes() {
        let t = Tensor::from_rows(&[[1.0, 2.0, 3.0], [-500.0, 0.0, 500.0]]).unwrap();
        let ls = log_softmax_rows(&t);
        for r in 0..2 {
            let s: f64 = ls.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
