//! Connectionist temporal classification.
//!
//! Logits are `T × (K+1)` with the blank at column [`BLANK`]. The loss is the
//! negative log of the total probability of every frame-level path that
//! collapses to the target, computed with a log-space forward-backward pass
//! over the blank-augmented target.

use crate::error::{Error, Result};
use crate::numerics::{log_add, log_softmax_rows, logsumexp, Tensor};
use crate::BLANK;

/// Blank-augmented target `φ y₁ φ y₂ … y_L φ`.
pub fn expand(tokens: &[usize]) -> Result<Vec<usize>> {
    if tokens.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let mut out = Vec::with_capacity(2 * tokens.len() + 1);
    out.push(BLANK);
    for &t in tokens {
        out.push(t);
        out.push(BLANK);
    }
    Ok(out)
}

/// Merge adjacent repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Fewest frames that can carry `tokens`: one per token plus one blank
/// between each pair of equal neighbours.
pub fn min_frames(tokens: &[usize]) -> usize {
    tokens.len() + tokens.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_labels(tokens: &[usize], num_classes: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyLabels);
    }
    for &id in tokens {
        if id == BLANK || id >= num_classes {
            return Err(Error::LabelOutOfRange {
                id,
                labels: num_classes,
            });
        }
    }
    Ok(())
}

/// Forward and backward log-variables over the augmented states.
///
/// `alpha[t][s]` is the log probability of all path prefixes ending in state
/// `s` at frame `t`, emission at `t` included. `beta[t][s]` is the log
/// probability of completing the path from state `s` at frame `t`, excluding
/// the emission at `t`. For every `t`, `logsumexp_s(alpha[t][s] + beta[t][s])`
/// equals `log_prob`.
#[derive(Clone, Debug)]
pub struct CtcLattice {
    pub states: Vec<usize>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub log_prob: f64,
}

impl CtcLattice {
    /// `log p(Y|X)` recovered by merging alpha and beta at frame `t`.
    pub fn log_prob_at(&self, t: usize) -> f64 {
        let merged: Vec<f64> = self.alpha[t]
            .iter()
            .zip(&self.beta[t])
            .map(|(a, b)| a + b)
            .collect();
        logsumexp(&merged).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Run forward-backward on per-frame log posteriors.
pub fn ctc_lattice(log_probs: &Tensor, tokens: &[usize]) -> Result<CtcLattice> {
    let (t_len, classes) = (log_probs.rows(), log_probs.cols());
    check_labels(tokens, classes)?;
    let needed = min_frames(tokens);
    if t_len < needed {
        return Err(Error::Infeasible {
            frames: t_len,
            needed,
        });
    }
    let states = expand(tokens)?;
    let s_len = states.len();
    let skip_ok = |s: usize| s >= 2 && states[s] != BLANK && states[s] != states[s - 2];
    let neg = f64::NEG_INFINITY;

    let mut alpha = vec![vec![neg; s_len]; t_len];
    alpha[0][0] = log_probs.get(0, states[0]);
    alpha[0][1] = log_probs.get(0, states[1]);
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_add(acc, alpha[t - 1][s - 1]);
            }
            if skip_ok(s) {
                acc = log_add(acc, alpha[t - 1][s - 2]);
            }
            if acc > neg {
                alpha[t][s] = acc + log_probs.get(t, states[s]);
            }
        }
    }

    let mut beta = vec![vec![neg; s_len]; t_len];
    beta[t_len - 1][s_len - 1] = 0.0;
    beta[t_len - 1][s_len - 2] = 0.0;
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let next = |s2: usize| log_probs.get(t + 1, states[s2]) + beta[t + 1][s2];
            let mut acc = next(s);
            if s + 1 < s_len {
                acc = log_add(acc, next(s + 1));
            }
            if s + 2 < s_len && skip_ok(s + 2) {
                acc = log_add(acc, next(s + 2));
            }
            beta[t][s] = acc;
        }
    }

    let log_prob = log_add(alpha[t_len - 1][s_len - 1], alpha[t_len - 1][s_len - 2]);
    if log_prob == neg {
        return Err(Error::Infeasible {
            frames: t_len,
            needed,
        });
    }
    Ok(CtcLattice {
        states,
        alpha,
        beta,
        log_prob,
    })
}

/// Loss and its gradient with respect to the pre-softmax logits.
#[derive(Clone, Debug)]
pub struct CtcResult {
    /// `−log p(Y|X)` in nats.
    pub loss: f64,
    pub grad_logits: Tensor,
}

/// CTC loss of `tokens` under `logits` (softmax applied internally).
pub fn ctc_loss(logits: &Tensor, tokens: &[usize]) -> Result<CtcResult> {
    if !logits.is_finite() {
        return Err(Error::NonFinite("ctc_loss logits"));
    }
    let log_probs = log_softmax_rows(logits);
    let lattice = ctc_lattice(&log_probs, tokens)?;
    let (t_len, classes) = (logits.rows(), logits.cols());

    let mut grad = Tensor::zeros(&[t_len, classes]);
    let mut occupancy = vec![f64::NEG_INFINITY; classes];
    for t in 0..t_len {
        occupancy.fill(f64::NEG_INFINITY);
        for (s, &label) in lattice.states.iter().enumerate() {
            occupancy[label] = log_add(occupancy[label], lattice.alpha[t][s] + lattice.beta[t][s]);
        }
        for (k, g) in grad.row_mut(t).iter_mut().enumerate() {
            *g = log_probs.get(t, k).exp() - (occupancy[k] - lattice.log_prob).exp();
        }
    }
    Ok(CtcResult {
        loss: -lattice.log_prob,
        grad_logits: grad,
    })
}

/// Upper bound on paths [`brute_force_loss`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// `−log Σ_π Π_t p_t(π_t)` by enumerating every path of length `T` and keeping
/// those that collapse to `tokens`.
pub fn brute_force_loss(logits: &Tensor, tokens: &[usize]) -> Result<f64> {
    let (t_len, classes) = (logits.rows(), logits.cols());
    check_labels(tokens, classes)?;
    let paths = (classes as u128).checked_pow(t_len as u32).unwrap_or(u128::MAX);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(paths));
    }
    let log_probs = log_softmax_rows(logits);

    let mut total = f64::NEG_INFINITY;
    let mut path = vec![0usize; t_len];
    loop {
        if collapse(&path) == tokens {
            let lp: f64 = path.iter().enumerate().map(|(t, &k)| log_probs.get(t, k)).sum();
            total = log_add(total, lp);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t_len {
                return if total == f64::NEG_INFINITY {
                    Err(Error::Infeasible {
                        frames: t_len,
                        needed: min_frames(tokens),
                    })
                } else {
                    Ok(-total)
                };
            }
            path[pos] += 1;
            if path[pos] < classes {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

const PRIOR_FLOOR: f64 = 1e-8;

/// Relative frequency of every label, blank included, over the augmented
/// targets of a training set. Each utterance contributes `L + 1` blanks and
/// its `L` labels.
pub fn label_prior<'a>(
    labels: impl IntoIterator<Item = &'a [usize]>,
    num_labels: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; num_labels + 1];
    let mut any = false;
    for tokens in labels {
        check_labels(tokens, num_labels + 1)?;
        counts[BLANK] += (tokens.len() + 1) as f64;
        for &t in tokens {
            counts[t] += 1.0;
        }
        any = true;
    }
    if !any {
        return Err(Error::InvalidArgument("label prior of an empty label set".into()));
    }
    let total: f64 = counts.iter().sum();
    let mut prior: Vec<f64> = counts.iter().map(|c| c / total).collect();
    if prior.iter().any(|&p| p < PRIOR_FLOOR) {
        prior.iter_mut().for_each(|p| *p = p.max(PRIOR_FLOOR));
        let total: f64 = prior.iter().sum();
        prior.iter_mut().for_each(|p| *p /= total);
    }
    Ok(prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax_rows;

    const A: usize = 1;
    const B: usize = 2;

    fn logits(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn expand_inserts_blanks() {
        assert_eq!(expand(&[A]).unwrap(), vec![BLANK, A, BLANK]);
        assert_eq!(expand(&[A, B]).unwrap(), vec![BLANK, A, BLANK, B, BLANK]);
        assert_eq!(expand(&[A, A]).unwrap(), vec![BLANK, A, BLANK, A, BLANK]);
        assert!(matches!(expand(&[]), Err(Error::EmptyLabels)));
    }

    #[test]
    fn collapse_rules() {
        assert_eq!(collapse(&[A, A, BLANK, B]), vec![A, B]);
        assert!(collapse(&[BLANK, BLANK, BLANK]).is_empty());
        assert_eq!(collapse(&[A, BLANK, A]), vec![A, A]);
        assert!(collapse(&[]).is_empty());
    }

    #[test]
    fn single_frame_single_label() {
        let l = logits(&[&[0.3, -1.2, 2.0]]);
        let r = ctc_loss(&l, &[A]).unwrap();
        let p = softmax_rows(&l);
        assert!((r.loss + p.get(0, A).ln()).abs() < 1e-14);
    }

    #[test]
    fn two_frames_single_label_enumerated_by_hand() {
        let l = logits(&[&[0.1, 0.7, -0.4], &[1.3, -0.2, 0.5]]);
        let p = softmax_rows(&l);
        let want = -(p.get(0, A) * p.get(1, A)
            + p.get(0, A) * p.get(1, BLANK)
            + p.get(0, BLANK) * p.get(1, A))
            .ln();
        let got = ctc_loss(&l, &[A]).unwrap().loss;
        assert!((got - want).abs() < 1e-14);
        assert!((brute_force_loss(&l, &[A]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn uniform_two_label_case() {
        let l = logits(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let want = -(0.75f64).ln();
        assert!((brute_force_loss(&l, &[A]).unwrap() - want).abs() < 1e-15);
        assert!((ctc_loss(&l, &[A]).unwrap().loss - want).abs() < 1e-15);
    }

    #[test]
    fn infeasible_is_an_error_for_both_routes() {
        let l = logits(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        // [a, a] needs a separating blank: 3 frames
        assert!(matches!(ctc_loss(&l, &[A, A]), Err(Error::Infeasible { frames: 2, needed: 3 })));
        assert!(matches!(brute_force_loss(&l, &[A, A]), Err(Error::Infeasible { .. })));
        assert!(matches!(ctc_loss(&l, &[A, B, A]), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn label_range_is_checked() {
        let l = logits(&[&[0.0, 0.0, 0.0]]);
        assert!(matches!(ctc_loss(&l, &[3]), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(ctc_loss(&l, &[BLANK]), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(ctc_loss(&l, &[]), Err(Error::EmptyLabels)));
    }

    #[test]
    fn brute_force_guard() {
        let l = Tensor::zeros(&[9, 5]);
        assert!(matches!(brute_force_loss(&l, &[A]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn prior_counts_augmented_labels() {
        let p = label_prior([[A].as_slice()], 2).unwrap();
        assert!((p[BLANK] - 2.0 / 3.0).abs() < 1e-7);
        assert!((p[A] - 1.0 / 3.0).abs() < 1e-7);
        assert!(p[B] > 0.0 && p[B] < 1e-7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(label_prior(std::iter::empty::<&[usize]>(), 2).is_err());
    }
}
