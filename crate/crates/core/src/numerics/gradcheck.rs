use super::ParamStore;
use crate::error::{Error, Result};

/// Outcome of a central finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_err: f64,
    /// Parameter and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub probes: usize,
}

pub const DEFAULT_EPS: f64 = 1e-5;

/// Compare the analytic gradient of `f` against central differences over
/// every scalar in `params`.
///
/// `f` returns the loss and its analytic gradient; only the loss is used while
/// probing.
pub fn grad_check<F>(f: F, params: &ParamStore, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, ParamStore)>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (_, analytic) = f(params)?;
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        probes: 0,
    };

    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let grad = analytic.get(name)?.data().to_vec();
        for (i, &g) in grad.iter().enumerate() {
            let orig = params.get(name)?.data()[i];
            probe.values_mut(name)?[i] = orig + eps;
            let plus = f(&probe)?.0;
            probe.values_mut(name)?[i] = orig - eps;
            let minus = f(&probe)?.0;
            probe.values_mut(name)?[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite("grad_check probe"));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (g - numeric).abs() / 1f64.max(g.abs()).max(numeric.abs());
            report.probes += 1;
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
