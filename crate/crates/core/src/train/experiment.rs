use std::fmt;

use super::{evaluate, Example, TrainConfig, Trainer};
use crate::error::Result;
use crate::heads::HeadKind;

/// Test-set token error rate per head and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadComparison {
    pub seeds: Vec<u64>,
    pub rows: Vec<(HeadKind, Vec<f64>)>,
}

impl HeadComparison {
    pub fn mean(&self, head: HeadKind) -> Option<f64> {
        self.rows
            .iter()
            .find(|(h, _)| *h == head)
            .map(|(_, v)| v.iter().sum::<f64>() / v.len().max(1) as f64)
    }
}

impl fmt::Display for HeadComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}", "head")?;
        for s in &self.seeds {
            write!(f, " {:>9}", format!("seed{s}"))?;
        }
        writeln!(f, " {:>9}", "mean")?;
        for (head, ters) in &self.rows {
            write!(f, "{:<10}", head.to_string())?;
            for t in ters {
                write!(f, " {:>8.2}%", 100.0 * t)?;
            }
            let mean = ters.iter().sum::<f64>() / ters.len().max(1) as f64;
            writeln!(f, " {:>8.2}%", 100.0 * mean)?;
        }
        Ok(())
    }
}

/// Train every head with every seed and score the best-validation
/// parameters on `test`.
#[allow(clippy::too_many_arguments)]
pub fn compare_heads(
    base: &TrainConfig,
    heads: &[HeadKind],
    seeds: &[u64],
    input_dim: usize,
    num_labels: usize,
    train: &[Example],
    val: &[Example],
    test: &[Example],
) -> Result<HeadComparison> {
    let mut rows = Vec::with_capacity(heads.len());
    for &head in heads {
        let mut ters = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                head,
                seed,
                ..base.clone()
            };
            let mut t = Trainer::new(cfg, input_dim, num_labels, train)?;
            t.fit(train, val, None)?;
            let ev = evaluate(
                &t.model,
                &t.best_params,
                &t.prior,
                t.config.prior_alpha,
                t.config.beam_width,
                test,
            )?;
            log::info!("{head} seed {seed}: test TER {:.4}", ev.ter());
            ters.push(ev.ter());
        }
        rows.push((head, ters));
    }
    Ok(HeadComparison {
        seeds: seeds.to_vec(),
        rows,
    })
}
