//! Evaluation: reply-model perplexity, emotion accuracy of generated
//! replies, and per-position lexical diversity.

use std::collections::HashMap;
use std::fmt::Write as _;

use numcore::{ParamStore, Rng};
use serde::Serialize;

use crate::corpus::Pair;
use crate::editor::TemplateIndex;
use crate::emoclf::EmoClassifier;
use crate::policy::{GenOptions, Policy, Rollout};
use crate::reward::emotion_relevance;
use crate::train::RlItem;
use crate::vocab::{words_only, TokenId, TokenSeq};
use crate::{Error, Result};

/// Perplexity of the plain reply model on gold replies, EOS included.
pub fn eval_perplexity(policy: &Policy, store: &ParamStore, pairs: &[Pair]) -> Result<f64> {
    let data: Vec<_> = pairs.iter().map(|p| (p.post.clone(), p.reply.clone())).collect();
    policy.lm.perplexity(store, &data)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmotionEval {
    pub accuracy: f64,
    /// Mean log-probability of the requested emotion for the final replies.
    pub mean_r3_final: f64,
    /// The same for the replies before editing.
    pub mean_r3_primary: f64,
    pub edited_fraction: f64,
    pub rollouts: Vec<Rollout>,
}

/// Generates one reply per item, each with its own RNG stream derived from
/// `seed`, and compares the classifier's verdict with the requested emotion.
pub fn eval_emotion_accuracy(
    policy: &Policy,
    store: &ParamStore,
    clf: &EmoClassifier,
    items: &[RlItem],
    index: Option<&TemplateIndex>,
    opts: &GenOptions,
    seed: u64,
) -> Result<EmotionEval> {
    if items.is_empty() {
        return Err(Error::Input("no posts to evaluate".into()));
    }
    let (mut hits, mut r3f, mut r3p, mut edited) = (0usize, 0.0, 0.0, 0usize);
    let mut rollouts = Vec::with_capacity(items.len());
    for (i, it) in items.iter().enumerate() {
        let mut rng = Rng::derive(seed, i as u64);
        let r = policy.generate(store, &it.post, it.k_et, it.k_tp, index, opts, &mut rng)?;
        let words = words_only(&r.final_reply);
        if !words.is_empty() && clf.predict(&words)? == it.k_et {
            hits += 1;
        }
        r3f += emotion_relevance(clf, it.k_et, &r.final_reply)?;
        r3p += emotion_relevance(clf, it.k_et, &r.primary)?;
        edited += usize::from(r.edited);
        rollouts.push(r);
    }
    let n = items.len() as f64;
    Ok(EmotionEval {
        accuracy: hits as f64 / n,
        mean_r3_final: r3f / n,
        mean_r3_primary: r3p / n,
        edited_fraction: edited as f64 / n,
        rollouts,
    })
}

/// Positions reported by [`DiversityMatrix`].
pub const DIVERSITY_POSITIONS: usize = 10;

/// Normalized token entropy at positions 1..10, one row per model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityMatrix {
    pub labels: Vec<String>,
    pub rows: Vec<[f64; DIVERSITY_POSITIONS]>,
}

/// Entropy of the tokens at each position divided by
/// `ln(min(replies reaching that position, vocab))`. Positions reached by
/// fewer than two replies score 0.
pub fn diversity_row(replies: &[TokenSeq], vocab_size: usize) -> [f64; DIVERSITY_POSITIONS] {
    let words: Vec<TokenSeq> = replies.iter().map(|r| words_only(r)).collect();
    std::array::from_fn(|pos| {
        let mut counts: HashMap<TokenId, usize> = HashMap::new();
        for w in &words {
            if let Some(&t) = w.get(pos) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let n: usize = counts.values().sum();
        let cap = n.min(vocab_size);
        if cap < 2 {
            return 0.0;
        }
        let h: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.ln()
            })
            .sum();
        (h / (cap as f64).ln()).clamp(0.0, 1.0)
    })
}

impl DiversityMatrix {
    pub fn new() -> Self {
        DiversityMatrix {
            labels: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, replies: &[TokenSeq], vocab_size: usize) {
        self.labels.push(label.into());
        self.rows.push(diversity_row(replies, vocab_size));
    }

    pub fn mean(&self, row: usize) -> f64 {
        self.rows[row].iter().sum::<f64>() / DIVERSITY_POSITIONS as f64
    }

    /// One line per position: `position,<label>,...`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("position");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for pos in 0..DIVERSITY_POSITIONS {
            let _ = write!(s, "{}", pos + 1);
            for r in &self.rows {
                let _ = write!(s, ",{:.6}", r[pos]);
            }
            s.push('\n');
        }
        s
    }

    /// Plain-text graymap, one pixel row per model; darker is more diverse.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", DIVERSITY_POSITIONS, self.rows.len());
        for r in &self.rows {
            let px: Vec<String> = r
                .iter()
                .map(|v| ((255.0 * (1.0 - v)).round() as u8).to_string())
                .collect();
            s.push_str(&px.join(" "));
            s.push('\n');
        }
        s
    }
}

impl Default for DiversityMatrix {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use numcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn identical_replies_have_no_diversity() {
        let r = vec![vec![4, 5, 6, 7]; 150];
        assert_eq!(diversity_row(&r, 50), [0.0; 10]);
    }

    #[test]
    fn uniform_single_tokens_are_near_one_at_position_one() {
        let mut rng = Rng::seed_from_u64(2);
        let v = 200;
        let r: Vec<TokenSeq> = (0..2000).map(|_| vec![4 + rng.below(v)]).collect();
        let row = diversity_row(&r, v + 4);
        assert!(row[0] > 0.97, "{}", row[0]);
        assert!(row[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn outputs_have_ten_positions() {
        let mut m = DiversityMatrix::new();
        m.push("a", &[vec![4, 5], vec![5, 4]], 10);
        m.push("b", &[vec![4, 4], vec![4, 4]], 10);
        assert_eq!(m.to_csv().lines().count(), 11);
        let pgm = m.to_pgm();
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(lines[..3], ["P2", "10 2", "255"]);
        assert!(lines[3].starts_with("0 0 255"));
        assert_eq!(lines[4], ["255"; 10].join(" "));
    }

    proptest! {
        #[test]
        fn values_are_bounded(replies in proptest::collection::vec(proptest::collection::vec(4usize..12, 0..12), 0..40)) {
            for v in diversity_row(&replies, 12) {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn doubling_a_sample_never_raises_values(replies in proptest::collection::vec(proptest::collection::vec(4usize..40, 1..12), 2..40)) {
            let a = diversity_row(&replies, 1000);
            let twice: Vec<TokenSeq> = replies.iter().chain(replies.iter()).cloned().collect();
            let b = diversity_row(&twice, 1000);
            for (x, y) in a.iter().zip(b) {
                // Entropy is unchanged; only the log-size normalizer grows.
                prop_assert!(y <= *x + 1e-12);
            }
        }
    }
}
