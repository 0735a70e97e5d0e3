/// Learning rate after observing `val_history`.
///
/// Starting from `initial`, the rate is multiplied by `decay` each time the
/// validation loss has gone `patience` consecutive epochs without a strict
/// improvement on the best value so far.
pub fn lr_schedule(val_history: &[f64], initial: f64, decay: f64, patience: usize) -> f64 {
    let patience = patience.max(1);
    let mut lr = initial;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for &v in val_history {
        if v < best {
            best = v;
            stale = 0;
        } else {
            stale += 1;
            if stale % patience == 0 {
                lr *= decay;
            }
        }
    }
    lr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_history_keeps_rate() {
        assert_eq!(lr_schedule(&[3.0, 2.0, 1.0], 0.1, 0.5, 1), 0.1);
        assert_eq!(lr_schedule(&[], 0.1, 0.5, 1), 0.1);
    }

    #[test]
    fn decays_on_each_stale_epoch() {
        assert_eq!(lr_schedule(&[1.0, 1.0], 1.0, 0.5, 1), 0.5);
        assert_eq!(lr_schedule(&[1.0, 2.0, 3.0], 1.0, 0.5, 1), 0.25);
        assert_eq!(lr_schedule(&[1.0, 2.0, 0.5, 0.6], 1.0, 0.5, 1), 0.25);
    }

    #[test]
    fn patience_counts_consecutive_stale_epochs() {
        assert_eq!(lr_schedule(&[1.0, 2.0], 1.0, 0.5, 2), 1.0);
        assert_eq!(lr_schedule(&[1.0, 2.0, 2.0], 1.0, 0.5, 2), 0.5);
        assert_eq!(lr_schedule(&[1.0, 2.0, 2.0, 2.0, 2.0], 1.0, 0.5, 2), 0.25);
    }
}
