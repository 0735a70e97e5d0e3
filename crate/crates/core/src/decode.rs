//! Posteriorgram decoding and token error rate scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::ctc::collapse;
use crate::error::{Error, Result};
use crate::frontend::TokenTable;
use crate::numerics::{log_add, Tensor};
use crate::BLANK;

/// Per-frame log posteriors of one utterance, `[T', K + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Posteriorgram {
    pub utterance_id: String,
    pub log_post: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
}

/// `log y − α·log p`. With `alpha = 0` the input is returned unchanged.
pub fn prior_normalize(log_post: &Tensor, prior: &[f64], alpha: f64) -> Result<Tensor> {
    if prior.len() != log_post.cols() {
        return Err(Error::ShapeMismatch {
            op: "prior_normalize",
            lhs: log_post.shape().to_vec(),
            rhs: vec![prior.len()],
        });
    }
    if alpha == 0.0 {
        return Ok(log_post.clone());
    }
    if prior.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("prior entries must be positive".into()));
    }
    let log_prior: Vec<f64> = prior.iter().map(|p| alpha * p.ln()).collect();
    let mut out = log_post.clone();
    for r in 0..out.rows() {
        for (v, lp) in out.row_mut(r).iter_mut().zip(&log_prior) {
            *v -= lp;
        }
    }
    Ok(out)
}

/// Best path: per-frame argmax (lowest id on ties), then collapse.
/// The score is the summed score of the chosen path.
pub fn greedy_decode(scores: &Tensor) -> Hypothesis {
    let mut path = Vec::with_capacity(scores.rows());
    let mut score = 0.0;
    for t in 0..scores.rows() {
        let row = scores.row(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        path.push(best);
        score += row[best];
    }
    Hypothesis {
        tokens: collapse(&path),
        score,
    }
}

#[derive(Clone, Copy)]
struct PrefixScore {
    blank: f64,
    label: f64,
}

impl PrefixScore {
    const EMPTY: PrefixScore = PrefixScore {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_add(self.blank, self.label)
    }
}

fn ranked(beams: BTreeMap<Vec<usize>, PrefixScore>) -> Vec<(Vec<usize>, PrefixScore)> {
    let mut v: Vec<_> = beams
        .into_iter()
        .filter(|(_, s)| s.total() > f64::NEG_INFINITY)
        .collect();
    // BTreeMap order is lexicographic, so a stable sort keeps ties in that order.
    v.sort_by(|a, b| b.1.total().total_cmp(&a.1.total()));
    v
}

/// CTC prefix beam search over log-domain scores `[T', K + 1]`.
///
/// Returns up to `beam_width` hypotheses, best first; equal scores are
/// ordered lexicographically by token sequence. Without pruning
/// (`beam_width = usize::MAX`) the scores are exact label-sequence marginals.
pub fn prefix_beam_decode(scores: &Tensor, beam_width: usize) -> Result<Vec<Hypothesis>> {
    if beam_width == 0 {
        return Err(Error::InvalidArgument("beam width must be positive".into()));
    }
    let n_cls = scores.cols();
    let mut beams: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];
    for t in 0..scores.rows() {
        let row = scores.row(t);
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, s) in &beams {
            let total = s.total();
            let stay = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            stay.blank = log_add(stay.blank, total + row[BLANK]);
            let last = prefix.last().copied();
            if let Some(k) = last {
                stay.label = log_add(stay.label, s.label + row[k]);
            }
            for (k, &emit) in row.iter().enumerate().skip(1).take(n_cls - 1) {
                let mut ext = prefix.clone();
                ext.push(k);
                let from = if last == Some(k) { s.blank } else { total };
                let e = next.entry(ext).or_insert(PrefixScore::EMPTY);
                e.label = log_add(e.label, from + emit);
            }
        }
        beams = ranked(next);
        beams.truncate(beam_width);
    }
    Ok(beams
        .into_iter()
        .map(|(tokens, s)| Hypothesis {
            score: s.total(),
            tokens,
        })
        .collect())
}

/// Prior normalization followed by beam search (`beam_width = 1` uses best path).
pub fn decode_posteriorgram(
    pg: &Posteriorgram,
    prior: &[f64],
    alpha: f64,
    beam_width: usize,
) -> Result<Hypothesis> {
    let scores = prior_normalize(&pg.log_post, prior, alpha)?;
    if beam_width <= 1 {
        return Ok(greedy_decode(&scores));
    }
    prefix_beam_decode(&scores, beam_width)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("beam search produced no hypothesis".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignOp {
    Match(usize),
    Sub { reference: usize, hypothesis: usize },
    Del(usize),
    Ins(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn rate(&self) -> f64 {
        if self.reference_len == 0 {
            return 0.0;
        }
        self.errors() as f64 / self.reference_len as f64
    }

    pub fn merge(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_len += other.reference_len;
    }
}

/// Minimum-edit alignment of `hypothesis` against `reference`.
pub fn align(reference: &[usize], hypothesis: &[usize]) -> (EditCounts, Vec<AlignOp>) {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts {
        reference_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if same {
                    ops.push(AlignOp::Match(reference[i - 1]));
                } else {
                    counts.substitutions += 1;
                    ops.push(AlignOp::Sub {
                        reference: reference[i - 1],
                        hypothesis: hypothesis[j - 1],
                    });
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            ops.push(AlignOp::Del(reference[i - 1]));
            i -= 1;
        } else {
            counts.insertions += 1;
            ops.push(AlignOp::Ins(hypothesis[j - 1]));
            j -= 1;
        }
    }
    ops.reverse();
    (counts, ops)
}

/// Levenshtein distance over token ids divided by reference length.
pub fn token_error_rate(hypothesis: &[usize], reference: &[usize]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(align(reference, hypothesis).0.rate())
}

/// One decoded utterance paired with its reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub utterance_id: String,
    pub reference: Vec<usize>,
    pub hypothesis: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub total: EditCounts,
    pub per_utterance: Vec<(String, EditCounts, Vec<AlignOp>)>,
}

impl ScoreReport {
    pub fn new(items: &[Scored]) -> Result<Self> {
        let mut total = EditCounts::default();
        let mut per_utterance = Vec::with_capacity(items.len());
        for it in items {
            if it.reference.is_empty() {
                return Err(Error::EmptyReference);
            }
            let (c, ops) = align(&it.reference, &it.hypothesis);
            total.merge(&c);
            per_utterance.push((it.utterance_id.clone(), c, ops));
        }
        Ok(ScoreReport {
            total,
            per_utterance,
        })
    }

    pub fn ter(&self) -> f64 {
        self.total.rate()
    }

    /// Human-readable alignment listing with per-utterance and corpus rates.
    pub fn render(&self, table: &TokenTable) -> String {
        let sym = |k: usize| table.symbol(k).map_or_else(|| k.to_string(), str::to_string);
        let mut out = String::new();
        for (id, c, ops) in &self.per_utterance {
            let (mut r, mut h) = (Vec::new(), Vec::new());
            for op in ops {
                let (a, b) = match *op {
                    AlignOp::Match(k) => (sym(k), sym(k)),
                    AlignOp::Sub {
                        reference,
                        hypothesis,
                    } => (sym(reference).to_uppercase(), sym(hypothesis).to_uppercase()),
                    AlignOp::Del(k) => (sym(k).to_uppercase(), "*".repeat(sym(k).len())),
                    AlignOp::Ins(k) => ("*".repeat(sym(k).len()), sym(k).to_uppercase()),
                };
                let w = a.len().max(b.len());
                r.push(format!("{a:<w$}"));
                h.push(format!("{b:<w$}"));
            }
            let _ = writeln!(
                out,
                "{id} ter={:.4} sub={} del={} ins={} ref={}",
                c.rate(),
                c.substitutions,
                c.deletions,
                c.insertions,
                c.reference_len
            );
            let _ = writeln!(out, "  REF: {}", r.join(" ").trim_end());
            let _ = writeln!(out, "  HYP: {}", h.join(" ").trim_end());
        }
        let t = &self.total;
        let _ = writeln!(
            out,
            "TOTAL ter={:.4} sub={} del={} ins={} ref={} utts={}",
            t.rate(),
            t.substitutions,
            t.deletions,
            t.insertions,
            t.reference_len,
            self.per_utterance.len()
        );
        out
    }
}

/// One line per utterance: `<utt-id> <sym> <sym> ...`.
pub fn write_hypotheses(
    path: impl AsRef<Path>,
    hyps: &[(String, Vec<usize>)],
    table: &TokenTable,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, tokens) in hyps {
        let text = table.render(tokens);
        if text.is_empty() {
            let _ = writeln!(out, "{id}");
        } else {
            let _ = writeln!(out, "{id} {text}");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{log_softmax_rows, logsumexp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scores(rng: &mut ChaCha8Rng, t: usize, n: usize) -> Tensor {
        let raw = Tensor::new(
            vec![t, n],
            (0..t * n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        log_softmax_rows(&raw)
    }

    fn all_paths(t: usize, n: usize) -> Vec<Vec<usize>> {
        let mut paths = vec![vec![]];
        for _ in 0..t {
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    (0..n).map(move |k| {
                        let mut q = p.clone();
                        q.push(k);
                        q
                    })
                })
                .collect();
        }
        paths
    }

    fn lev(a: &[usize], b: &[usize]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = lev(ar, br) + usize::from(x != y);
                sub.min(lev(ar, b) + 1).min(lev(a, br) + 1)
            }
        }
    }

    #[test]
    fn greedy_matches_exhaustive_best_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let s = random_scores(&mut rng, 4, 3);
            let best = all_paths(4, 3)
                .into_iter()
                .map(|p| {
                    let sc: f64 = p.iter().enumerate().map(|(t, &k)| s.get(t, k)).sum();
                    (sc, p)
                })
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            let h = greedy_decode(&s);
            assert_eq!(h.tokens, collapse(&best.1));
            assert!((h.score - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_breaks_ties_toward_lowest_id() {
        let s = Tensor::from_rows(&[[0.0, 0.0, 0.0], [-1.0, 0.5, 0.5]]).unwrap();
        assert_eq!(greedy_decode(&s).tokens, vec![1]);
    }

    #[test]
    fn unpruned_beam_gives_exact_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s = random_scores(&mut rng, 4, 3);
            let mut marg: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
            for p in all_paths(4, 3) {
                let sc: f64 = p.iter().enumerate().map(|(t, &k)| s.get(t, k)).sum();
                marg.entry(collapse(&p)).or_default().push(sc);
            }
            let hyps = prefix_beam_decode(&s, usize::MAX).unwrap();
            assert_eq!(hyps.len(), marg.len());
            for h in &hyps {
                let exact = logsumexp(&marg[&h.tokens]).unwrap();
                assert!((h.score - exact).abs() < 1e-10);
            }
            let total = logsumexp(&hyps.iter().map(|h| h.score).collect::<Vec<_>>()).unwrap();
            assert!(total.abs() < 1e-10);
        }
    }

    #[test]
    fn beam_of_one_survivor_is_sorted_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scores(&mut rng, 6, 4);
        let hyps = prefix_beam_decode(&s, 3).unwrap();
        assert!(hyps.len() <= 3);
        assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(prefix_beam_decode(&s, 0).is_err());
    }

    #[test]
    fn empty_input_decodes_to_empty() {
        let s = Tensor::zeros(&[0, 3]);
        assert!(greedy_decode(&s).tokens.is_empty());
        let h = prefix_beam_decode(&s, 4).unwrap();
        assert_eq!(h[0].tokens, Vec::<usize>::new());
    }

    #[test]
    fn prior_normalize_divides_by_prior() {
        let lp = Tensor::from_rows(&[[0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()]]).unwrap();
        let out = prior_normalize(&lp, &[0.5, 0.25, 0.25], 1.0).unwrap();
        assert!(out.data().iter().all(|v| v.abs() < 1e-15));
        let same = prior_normalize(&lp, &[0.5, 0.25, 0.25], 0.0).unwrap();
        assert_eq!(same, lp);
        assert!(prior_normalize(&lp, &[0.5, 0.5], 1.0).is_err());
        assert!(prior_normalize(&lp, &[0.5, 0.0, 0.5], 1.0).is_err());
    }

    #[test]
    fn ter_hand_cases() {
        assert_eq!(token_error_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(token_error_rate(&[], &[1, 2]).unwrap(), 1.0);
        assert_eq!(token_error_rate(&[1, 4, 2, 3], &[1, 2, 3]).unwrap(), 1.0 / 3.0);
        assert_eq!(token_error_rate(&[5, 5, 5, 5], &[1]).unwrap(), 4.0);
        assert!(matches!(token_error_rate(&[1], &[]), Err(Error::EmptyReference)));
    }

    #[test]
    fn align_agrees_with_recursive_levenshtein() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let a: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(1..4)).collect();
            let b: Vec<usize> = (0..rng.random_range(0..6)).map(|_| rng.random_range(1..4)).collect();
            let (c, ops) = align(&a, &b);
            assert_eq!(c.errors(), lev(&a, &b));
            let r: Vec<usize> = ops
                .iter()
                .filter_map(|op| match *op {
                    AlignOp::Match(k) | AlignOp::Del(k) => Some(k),
                    AlignOp::Sub { reference, .. } => Some(reference),
                    AlignOp::Ins(_) => None,
                })
                .collect();
            let h: Vec<usize> = ops
                .iter()
                .filter_map(|op| match *op {
                    AlignOp::Match(k) | AlignOp::Ins(k) => Some(k),
                    AlignOp::Sub { hypothesis, .. } => Some(hypothesis),
                    AlignOp::Del(_) => None,
                })
                .collect();
            assert_eq!((r, h), (a, b));
        }
    }

    #[test]
    fn report_totals_and_rendering() {
        let items = vec![
            Scored {
                utterance_id: "a".into(),
                reference: vec![1, 2],
                hypothesis: vec![1, 2],
            },
            Scored {
                utterance_id: "b".into(),
                reference: vec![1, 2],
                hypothesis: vec![2],
            },
        ];
        let rep = ScoreReport::new(&items).unwrap();
        assert_eq!(rep.ter(), 0.25);
        let text = rep.render(&TokenTable::numbered(2));
        assert!(text.contains("REF: T1 t2"));
        assert!(text.contains("HYP: ** t2"));
        assert!(text.ends_with("TOTAL ter=0.2500 sub=0 del=1 ins=0 ref=4 utts=2\n"));
    }

    #[test]
    fn hypotheses_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hyp.txt");
        let t = TokenTable::numbered(3);
        write_hypotheses(&p, &[("u1".into(), vec![1, 3]), ("u2".into(), vec![])], &t).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "u1 t1 t3\nu2\n");
    }
}
