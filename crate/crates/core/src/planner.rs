//! Reply planning: which keyword types appear and in what order, and which
//! keyword of the requested categories anchors each clause.
//!
//! Keyword heads score `W [h̃; k]` against the dictionary of the requested
//! category only, so every other word has probability exactly zero.

use numcore::{Array, Graph, ParamStore, Rng, Var};
use serde::Serialize;

use crate::lexicon::KeywordKind;
use crate::nn::{Embedding, Linear};
use crate::policy::{Policy, PolicyDims};
use crate::seq2seq::{choose, step_distribution, Candidates, DecodeMode, EncodedPost};
use crate::skeleton::{Order, ReplySkeleton};
use crate::vocab::TokenId;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplyPlan {
    pub order: Order,
    pub kw_et: Option<TokenId>,
    pub kw_tp: Option<TokenId>,
    pub k_et: usize,
    pub k_tp: usize,
    pub structure_probs: [f64; 4],
}

impl ReplyPlan {
    /// Keywords in reading order.
    pub fn anchors(&self) -> Vec<TokenId> {
        let (first, second) = if self.order.emotion_first() {
            (self.kw_et, self.kw_tp)
        } else {
            (self.kw_tp, self.kw_et)
        };
        first.into_iter().chain(second).collect()
    }

    pub fn check(&self) -> Result<()> {
        if self.kw_et.is_some() != self.order.needs_emotion() || self.kw_tp.is_some() != self.order.needs_topic() {
            return Err(Error::Contract(format!(
                "keywords do not match order {}",
                self.order.name()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Planner {
    structure: Linear,
    cat_et: Embedding,
    cat_tp: Embedding,
    kw_et: String,
    kw_tp: String,
    hidden: usize,
    category: usize,
    vocab: usize,
}

impl Planner {
    pub fn new(d: &PolicyDims) -> Self {
        Planner {
            structure: Linear::new("plan.struct", d.hidden, Order::ALL.len()),
            cat_et: Embedding::new("plan.cat_et", d.n_emotions, d.category),
            cat_tp: Embedding::new("plan.cat_tp", d.n_topics, d.category),
            kw_et: "plan.kw_et".into(),
            kw_tp: "plan.kw_tp".into(),
            hidden: d.hidden,
            category: d.category,
            vocab: d.vocab,
        }
    }

    /// The structure head starts at zero, i.e. uniform over orders.
    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        self.structure.init_zero(store)?;
        self.cat_et.init(store, rng)?;
        self.cat_tp.init(store, rng)?;
        let fan_in = self.hidden + self.category;
        let limit = 1.0 / (fan_in as f64).sqrt();
        for name in [&self.kw_et, &self.kw_tp] {
            store.insert(name.as_str(), Array::uniform(&[self.vocab, fan_in], limit, rng))?;
        }
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.structure.names().iter().map(|s| s.to_string()).collect();
        v.extend([
            self.cat_et.name.clone(),
            self.cat_tp.name.clone(),
            self.kw_et.clone(),
            self.kw_tp.clone(),
        ]);
        v
    }

    /// Log-probabilities over [`Order::ALL`].
    pub fn structure_logp(&self, g: &mut Graph, enc: &EncodedPost) -> Result<Var> {
        let lv = self.structure.bind(g)?;
        let logits = lv.apply(g, enc.pooled)?;
        Ok(g.log_softmax(logits)?)
    }

    /// Keyword logits over the whole vocabulary and the candidate set of
    /// `label`'s dictionary.
    pub fn keyword_logits(
        &self,
        g: &mut Graph,
        policy: &Policy,
        enc: &EncodedPost,
        kind: KeywordKind,
        label: usize,
    ) -> Result<(Var, Candidates)> {
        let (table, w) = match kind {
            KeywordKind::Emotion => (&self.cat_et, &self.kw_et),
            KeywordKind::Topic => (&self.cat_tp, &self.kw_tp),
        };
        if label >= table.rows {
            return Err(Error::Input(format!("label {label} out of range")));
        }
        let ids = policy.lex.keyword_ids(kind, label).to_vec();
        let cands = Candidates::new(ids).map_err(|_| Error::Config(format!("empty dictionary for label {label}")))?;
        let t = table.bind(g)?;
        let k = g.row(t, label)?;
        let x = g.concat(&[enc.pooled, k])?;
        let w = g.param(w)?;
        Ok((g.matmul(w, x)?, cands))
    }

    /// Keyword distribution of `label`'s dictionary as `(token, probability)`.
    pub fn keyword_distribution(
        &self,
        g: &mut Graph,
        policy: &Policy,
        enc: &EncodedPost,
        kind: KeywordKind,
        label: usize,
    ) -> Result<Vec<(TokenId, f64)>> {
        let (logits, cands) = self.keyword_logits(g, policy, enc, kind, label)?;
        let lp = g.log_softmax_subset(logits, cands.ids())?;
        Ok(cands
            .ids()
            .iter()
            .zip(g.value(lp))
            .map(|(&t, l)| (t, l.exp()))
            .collect())
    }

    /// Chooses order and keywords. Keywords the order does not use are not
    /// drawn. Returns the plan and the log-probability of its choices.
    #[allow(clippy::too_many_arguments)]
    pub fn plan(
        &self,
        g: &mut Graph,
        policy: &Policy,
        enc: &EncodedPost,
        k_et: usize,
        k_tp: usize,
        mode: DecodeMode,
        rng: &mut Rng,
    ) -> Result<(ReplyPlan, Var)> {
        let s_logp = self.structure_logp(g, enc)?;
        let structure_probs: [f64; 4] = std::array::from_fn(|i| g.value(s_logp)[i].exp());
        let all = Candidates::new((0..Order::ALL.len()).collect())?;
        let s_logp_mode = match mode {
            DecodeMode::Sample { temperature } if temperature != 1.0 => {
                let logits = g.scale(s_logp, 1.0 / temperature)?;
                g.log_softmax(logits)?
            }
            _ => s_logp,
        };
        let (oi, mut lp) = choose(g, s_logp_mode, &all, mode, rng)?;
        let order = Order::from_index(oi).expect("four orders");
        let mut pick = |g: &mut Graph, kind: KeywordKind, label: usize, lp: &mut Var| -> Result<TokenId> {
            let (logits, cands) = self.keyword_logits(g, policy, enc, kind, label)?;
            let dist = step_distribution(g, logits, &cands, mode)?;
            let (t, l) = choose(g, dist, &cands, mode, rng)?;
            *lp = g.add(*lp, l)?;
            Ok(t)
        };
        let kw_et = if order.needs_emotion() {
            Some(pick(g, KeywordKind::Emotion, k_et, &mut lp)?)
        } else {
            None
        };
        let kw_tp = if order.needs_topic() {
            Some(pick(g, KeywordKind::Topic, k_tp, &mut lp)?)
        } else {
            None
        };
        let plan = ReplyPlan {
            order,
            kw_et,
            kw_tp,
            k_et,
            k_tp,
            structure_probs,
        };
        Ok((plan, lp))
    }

    /// Negative log-likelihood of a gold skeleton's order and keywords.
    pub fn loss(
        &self,
        g: &mut Graph,
        policy: &Policy,
        enc: &EncodedPost,
        gold: &ReplySkeleton,
        k_et: usize,
        k_tp: usize,
    ) -> Result<Var> {
        let s = self.structure_logp(g, enc)?;
        let mut terms = vec![g.pick(s, gold.order.index())?];
        for (kind, kw, label) in [
            (KeywordKind::Emotion, gold.kw_et, k_et),
            (KeywordKind::Topic, gold.kw_tp, k_tp),
        ] {
            let Some(kw) = kw else { continue };
            let (logits, cands) = self.keyword_logits(g, policy, enc, kind, label)?;
            terms.push(crate::seq2seq::target_logprob(g, logits, &cands, kw)?);
        }
        let total = g.add_n(&terms)?;
        Ok(g.scale(total, -1.0)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::fixture;

    #[test]
    fn zero_structure_head_is_uniform_and_picks_first() {
        let f = fixture(40, 3);
        let mut g = Graph::new(&f.store);
        let enc = f.policy.encoder.encode(&mut g, &f.train[0].post).unwrap();
        let lp = f.policy.planner.structure_logp(&mut g, &enc).unwrap();
        for &l in g.value(lp) {
            assert!((l.exp() - 0.25).abs() < 1e-12);
        }
        let mut rng = Rng::seed_from_u64(0);
        let (plan, _) = f
            .policy
            .planner
            .plan(&mut g, &f.policy, &enc, 0, 0, DecodeMode::Greedy, &mut rng)
            .unwrap();
        assert_eq!(plan.order, Order::Et);
        assert!((plan.structure_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn keyword_mass_stays_in_dictionary() {
        let f = fixture(40, 3);
        let mut g = Graph::new(&f.store);
        let enc = f.policy.encoder.encode(&mut g, &f.train[1].post).unwrap();
        for (kind, n) in [
            (KeywordKind::Emotion, f.lex.n_emotions()),
            (KeywordKind::Topic, f.lex.n_topics()),
        ] {
            for label in 0..n {
                let dist = f
                    .policy
                    .planner
                    .keyword_distribution(&mut g, &f.policy, &enc, kind, label)
                    .unwrap();
                let total: f64 = dist.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-9);
                for (t, _) in dist {
                    assert_eq!(f.lex.label_of(kind, t), Some(label));
                }
            }
        }
    }

    #[test]
    fn sampled_plans_respect_order_and_dictionaries() {
        let f = fixture(40, 5);
        let mut rng = Rng::seed_from_u64(8);
        for p in f.train.iter().take(30) {
            let mut g = Graph::new(&f.store);
            let enc = f.policy.encoder.encode(&mut g, &p.post).unwrap();
            let mode = DecodeMode::Sample { temperature: 1.0 };
            let (plan, lp) = f
                .policy
                .planner
                .plan(&mut g, &f.policy, &enc, p.emotion_label, p.topic_label, mode, &mut rng)
                .unwrap();
            plan.check().unwrap();
            assert!(g.scalar(lp) <= 0.0);
            if let Some(k) = plan.kw_et {
                assert_eq!(f.lex.emotion_of(k), Some(p.emotion_label));
            }
            if let Some(k) = plan.kw_tp {
                assert_eq!(f.lex.topic_of(k), Some(p.topic_label));
            }
        }
    }

    #[test]
    fn planner_step_moves_encoder() {
        let f = fixture(40, 6);
        let p = &f.train[0];
        let gold = crate::skeleton::skeletonize(&p.reply, &f.lex).unwrap();
        let mut store = f.store.clone();
        store.zero_grads();
        let grads = {
            let mut g = Graph::new(&store);
            let enc = f.policy.encoder.encode(&mut g, &p.post).unwrap();
            let l = f
                .policy
                .planner
                .loss(&mut g, &f.policy, &enc, &gold, p.emotion_label, p.topic_label)
                .unwrap();
            g.backward(l).unwrap()
        };
        store.accumulate(&grads);
        let before = store.get("enc.wz").unwrap().data().to_vec();
        numcore::Sgd::new(0.1).step(&mut store);
        assert_ne!(store.get("enc.wz").unwrap().data(), before.as_slice());
    }
}
