//! Reply rewards: coherence, topic relevance and emotion relevance, mixed
//! per clause stage and summed into one scalar.
//!
//! Topic and emotion relevance are log-probabilities of the requested class,
//! so every term is at most zero and larger is better.

use numcore::ParamStore;
use serde::Serialize;

use crate::asyncdec::Stage;
use crate::emoclf::EmoClassifier;
use crate::lda::TopicModel;
use crate::policy::Rollout;
use crate::seq2seq::Seq2Seq;
use crate::skeleton::ReplySkeleton;
use crate::vocab::{words_only, TokenId, TokenSeq};
use crate::{Error, Result};

/// `[w1, w2, w3]` per stage, in [`Stage::ALL`] order.
pub type WeightTable = [[f64; 3]; 4];

pub const STAGE_WEIGHTS: WeightTable = [[0.2, 0.2, 0.6], [0.2, 0.4, 0.4], [0.2, 0.6, 0.2], [0.5, 0.25, 0.25]];

/// Floor applied to topic probabilities before taking the log, so a label
/// the topic model never assigns still yields a finite reward.
pub const TOPIC_PROB_FLOOR: f64 = 1e-12;

/// Every row must be positive and sum to one.
pub fn check_weights(w: &WeightTable) -> Result<()> {
    for (row, s) in w.iter().zip(Stage::ALL) {
        let total: f64 = row.iter().sum();
        if row.iter().any(|&x| x <= 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "reward weights for stage {} must be positive and sum to 1",
                s.name()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReward {
    pub stage: Stage,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub mixed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardBreakdown {
    /// Present stages only; absent stages contribute nothing.
    pub stages: Vec<StageReward>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn from_terms(weights: &WeightTable, terms: &[(Stage, [f64; 3])]) -> Self {
        let stages: Vec<StageReward> = terms
            .iter()
            .map(|&(stage, [r1, r2, r3])| {
                let w = weights[stage.index()];
                StageReward {
                    stage,
                    r1,
                    r2,
                    r3,
                    mixed: w[0] * r1 + w[1] * r2 + w[2] * r3,
                }
            })
            .collect();
        let total = stages.iter().map(|s| s.mixed).sum();
        RewardBreakdown { stages, total }
    }

    /// Every stage at the same constant value.
    pub fn constant(value: f64) -> Self {
        RewardBreakdown::from_terms(&STAGE_WEIGHTS, &Stage::ALL.map(|s| (s, [value; 3])))
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReward> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Mean of one component over present stages.
    pub fn mean_component(&self, i: usize) -> f64 {
        let n = self.stages.len().max(1) as f64;
        self.stages.iter().map(|s| [s.r1, s.r2, s.r3][i]).sum::<f64>() / n
    }

    /// CSV rows `post_id,stage,r1,r2,r3,mixed,R`.
    pub fn csv_rows(&self, post_id: usize) -> Vec<String> {
        self.stages
            .iter()
            .map(|s| {
                format!(
                    "{post_id},{},{},{},{},{},{}",
                    s.stage.name(),
                    s.r1,
                    s.r2,
                    s.r3,
                    s.mixed,
                    self.total
                )
            })
            .collect()
    }
}

pub const CSV_HEADER: &str = "post_id,stage,r1,r2,r3,mixed,R";

/// Length-normalised forward plus backward log-likelihood of `part`.
pub fn coherence(
    forward: (&Seq2Seq, &ParamStore),
    backward: (&Seq2Seq, &ParamStore),
    post: &[TokenId],
    part: &[TokenId],
) -> Result<f64> {
    let part = words_only(part);
    let post = words_only(post);
    if part.is_empty() || post.is_empty() {
        return Err(Error::Input("coherence needs a non-empty post and reply".into()));
    }
    let (fwd, n_y) = forward.0.seq_logprob(forward.1, &post, &part, false)?;
    let (bwd, n_x) = backward.0.seq_logprob(backward.1, &part, &post, true)?;
    Ok(fwd / n_y as f64 + bwd / n_x as f64)
}

pub fn topic_relevance(topics: &TopicModel, k_tp: usize, reply: &[TokenId]) -> Result<f64> {
    let dist = topics.label_distribution(&words_only(reply));
    let p = dist
        .get(k_tp)
        .ok_or_else(|| Error::Input(format!("topic label {k_tp} out of range")))?;
    Ok(p.max(TOPIC_PROB_FLOOR).ln())
}

pub fn emotion_relevance(clf: &EmoClassifier, k_et: usize, reply: &[TokenId]) -> Result<f64> {
    let words = words_only(reply);
    if words.is_empty() {
        return Err(Error::Input("emotion relevance of an empty reply".into()));
    }
    if k_et >= clf.n_emotions() {
        return Err(Error::Input(format!("emotion label {k_et} out of range")));
    }
    clf.log_prob(&words, k_et)
}

/// Scores a finished rollout.
pub trait RewardModel {
    fn score(&self, post: &[TokenId], rollout: &Rollout) -> Result<RewardBreakdown>;
}

/// Same reward for every rollout.
#[derive(Clone, Copy, Debug)]
pub struct ConstantReward(pub f64);

impl RewardModel for ConstantReward {
    fn score(&self, _post: &[TokenId], _rollout: &Rollout) -> Result<RewardBreakdown> {
        Ok(RewardBreakdown::constant(self.0))
    }
}

/// The frozen judges used during policy-gradient training.
#[derive(Clone, Debug)]
pub struct Scorers {
    pub forward: Seq2Seq,
    pub forward_store: ParamStore,
    pub backward: Seq2Seq,
    pub backward_store: ParamStore,
    pub topics: TopicModel,
    pub classifier: EmoClassifier,
    pub weights: WeightTable,
    /// Score bare clauses instead of the prefix ending with each clause.
    pub clause_only: bool,
}

impl Scorers {
    pub fn terms(&self, post: &[TokenId], part: &[TokenId], k_et: usize, k_tp: usize) -> Result<[f64; 3]> {
        Ok([
            coherence(
                (&self.forward, &self.forward_store),
                (&self.backward, &self.backward_store),
                post,
                part,
            )?,
            topic_relevance(&self.topics, k_tp, part)?,
            emotion_relevance(&self.classifier, k_et, part)?,
        ])
    }
}

/// Text scored for each clause stage present in `sk`: the prefix ending with
/// that clause (boundary keyword included), or the clause alone with its
/// keyword when `clause_only` is set. Empty texts are dropped.
pub fn stage_texts(sk: &ReplySkeleton, clause_only: bool) -> Vec<(Stage, TokenSeq)> {
    let (lead, middle, tail) = sk.positions();
    let (first, second) = sk.anchors();
    let two = sk.order.two_keywords();
    let mut pieces: Vec<(usize, TokenSeq)> = Vec::with_capacity(3);
    let mut p0 = lead.to_vec();
    p0.extend(first);
    pieces.push((0, p0));
    if two {
        let mut p1 = middle.to_vec();
        p1.extend(second);
        pieces.push((1, p1));
    }
    pieces.push((2, tail.to_vec()));

    let mut out = Vec::with_capacity(3);
    let mut prefix = TokenSeq::new();
    for (position, piece) in pieces {
        prefix.extend_from_slice(&piece);
        let text = if clause_only { piece } else { prefix.clone() };
        if !text.is_empty() {
            out.push((Stage::of_position(sk.order, position), text));
        }
    }
    out
}

impl RewardModel for Scorers {
    fn score(&self, post: &[TokenId], rollout: &Rollout) -> Result<RewardBreakdown> {
        let sk = crate::asyncdec::assemble(&rollout.plan, &rollout.traces)?;
        let (k_et, k_tp) = (rollout.plan.k_et, rollout.plan.k_tp);
        let mut terms = Vec::with_capacity(4);
        for (stage, text) in stage_texts(&sk, self.clause_only) {
            terms.push((stage, self.terms(post, &text, k_et, k_tp)?));
        }
        terms.push((Stage::Final, self.terms(post, &rollout.final_reply, k_et, k_tp)?));
        Ok(RewardBreakdown::from_terms(&self.weights, &terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::tests::lex;
    use crate::skeleton::{skeletonize, Order};
    use proptest::prelude::*;

    #[test]
    fn default_rows_sum_to_one() {
        check_weights(&STAGE_WEIGHTS).unwrap();
        let mut bad = STAGE_WEIGHTS;
        bad[1][0] = 0.3;
        assert!(check_weights(&bad).is_err());
    }

    #[test]
    fn constant_terms() {
        assert_eq!(RewardBreakdown::constant(0.0).total, 0.0);
        let r = RewardBreakdown::constant(1.0);
        for s in &r.stages {
            assert!((s.mixed - 1.0).abs() < 1e-15);
        }
        assert!((r.total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn stage_texts_are_prefixes() {
        let l = lex();
        let reply = l.vocab.tokenize("so happy about the rain today").unwrap();
        let sk = skeletonize(&reply, &l).unwrap();
        assert_eq!(sk.order, Order::Et);
        let texts = stage_texts(&sk, false);
        let stages: Vec<Stage> = texts.iter().map(|t| t.0).collect();
        assert_eq!(stages, [Stage::Et, Stage::Md, Stage::Tp]);
        assert_eq!(texts[0].1, l.vocab.tokenize("so happy").unwrap());
        assert_eq!(texts[1].1, l.vocab.tokenize("so happy about the rain").unwrap());
        assert_eq!(texts[2].1, reply);
        let bare = stage_texts(&sk, true);
        assert_eq!(bare[1].1, l.vocab.tokenize("about the rain").unwrap());
        assert_eq!(bare[2].1, l.vocab.tokenize("today").unwrap());
    }

    #[test]
    fn single_keyword_has_no_middle_stage() {
        let l = lex();
        let reply = l.vocab.tokenize("today makes me sad").unwrap();
        let sk = skeletonize(&reply, &l).unwrap();
        let stages: Vec<Stage> = stage_texts(&sk, false).iter().map(|t| t.0).collect();
        assert!(!stages.contains(&Stage::Md));
        // Nothing after the keyword: the tail stage drops out in clause mode.
        let bare: Vec<Stage> = stage_texts(&sk, true).iter().map(|t| t.0).collect();
        assert_eq!(bare.len(), 1);
    }

    #[test]
    fn uniform_models_score_log_half_per_direction() {
        let s = Seq2Seq::standalone(5, 2, 3);
        let mut store = s.init_store(0).unwrap();
        for name in ["dec.out.w", "dec.out.b"] {
            store.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        // Candidates are {word 4, EOS}; a uniform model gives ln 2 per token.
        let r = coherence((&s, &store), (&s, &store), &[4], &[4]).unwrap();
        assert!((r - (-2f64.ln() - 2f64.ln())).abs() < 1e-12);
        assert!(coherence((&s, &store), (&s, &store), &[4], &[]).is_err());
    }

    proptest! {
        #[test]
        fn remix_matches_stored_total(rs in proptest::collection::vec(-20.0f64..0.0, 12), present in proptest::collection::vec(any::<bool>(), 4)) {
            let terms: Vec<(Stage, [f64; 3])> = Stage::ALL
                .iter()
                .zip(&present)
                .enumerate()
                .filter(|(_, (_, &p))| p)
                .map(|(i, (&s, _))| (s, [rs[3 * i], rs[3 * i + 1], rs[3 * i + 2]]))
                .collect();
            let b = RewardBreakdown::from_terms(&STAGE_WEIGHTS, &terms);
            let oracle: f64 = terms
                .iter()
                .map(|(s, r)| {
                    let w = match s {
                        Stage::Et => [0.2, 0.2, 0.6],
                        Stage::Md => [0.2, 0.4, 0.4],
                        Stage::Tp => [0.2, 0.6, 0.2],
                        Stage::Final => [0.5, 0.25, 0.25],
                    };
                    w[0] * r[0] + w[1] * r[1] + w[2] * r[2]
                })
                .sum();
            prop_assert!((b.total - oracle).abs() < 1e-12);
            prop_assert!(b.total <= 0.0);
        }

        #[test]
        fn total_is_monotone_in_each_term(base in proptest::collection::vec(-5.0f64..0.0, 3), bump in 0.01f64..3.0, which in 0usize..3, stage in 0usize..4) {
            let mk = |delta: f64| {
                let terms: Vec<(Stage, [f64; 3])> = Stage::ALL
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        let mut r = [base[0], base[1], base[2]];
                        if i == stage {
                            r[which] += delta;
                        }
                        (s, r)
                    })
                    .collect();
                RewardBreakdown::from_terms(&STAGE_WEIGHTS, &terms).total
            };
            prop_assert!(mk(bump) > mk(0.0));
        }
    }
}
