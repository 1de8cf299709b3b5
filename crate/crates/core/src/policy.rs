//! The generation policy: parameter layout shared by every head, and the
//! end-to-end rollout (plan, clause decoding, template edit).
//!
//! Every head reads the same `emb` table and `enc.*` encoder.

use std::fs;
use std::path::Path;

use numcore::{Graph, ParamStore, Rng, Var};
use serde::{Deserialize, Serialize};

use crate::asyncdec::{decode_reply, ClauseTrace};
use crate::editor::{edit_vector, EditVector, EditorConfig, TemplateIndex, TemplateMatch, TemplateQuery};
use crate::lexicon::Lexicon;
use crate::nn::Embedding;
use crate::planner::{Planner, ReplyPlan};
use crate::seq2seq::{Candidates, DecodeMode, DecoderCell, Encoder, Seq2Seq};
use crate::vocab::{words_only, TokenId, TokenSeq, EOS, GO, NUM_RESERVED};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub category: usize,
    pub n_emotions: usize,
    pub n_topics: usize,
    pub max_clause_len: usize,
    pub max_reply_len: usize,
    pub separate_clause_decoders: bool,
}

impl PolicyDims {
    pub fn from_config(cfg: &crate::config::Config, lex: &Lexicon) -> Self {
        PolicyDims {
            vocab: lex.vocab_size(),
            embed: cfg.embed_dim,
            hidden: cfg.hidden_dim,
            category: cfg.category_dim,
            n_emotions: lex.n_emotions(),
            n_topics: lex.n_topics(),
            max_clause_len: cfg.max_clause_len,
            max_reply_len: cfg.max_reply_len,
            separate_clause_decoders: cfg.separate_clause_decoders,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("dims serialize"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Width of the clause-position flag fed to clause decoders.
pub const N_POSITIONS: usize = 3;

#[derive(Clone, Debug)]
pub struct Policy {
    pub dims: PolicyDims,
    pub lex: Lexicon,
    pub encoder: Encoder,
    /// Plain reply model `p(y | x)` sharing the encoder.
    pub lm: Seq2Seq,
    pub planner: Planner,
    /// One shared decoder, or one per clause position.
    pub clauses: Vec<DecoderCell>,
    /// Right-to-left decoder for the segment before a lone keyword.
    pub single_bwd: DecoderCell,
    pub editor: DecoderCell,
    /// Clause bodies: ordinary words that are not dictionary keywords.
    pub body: Candidates,
    pub words_eos: Candidates,
}

impl Policy {
    pub fn new(dims: PolicyDims, lex: &Lexicon) -> Result<Self> {
        if lex.vocab_size() != dims.vocab || lex.n_emotions() != dims.n_emotions || lex.n_topics() != dims.n_topics {
            return Err(Error::Contract("policy dimensions disagree with the lexicon".into()));
        }
        let (v, e, h) = (dims.vocab, dims.embed, dims.hidden);
        let encoder = Encoder::new(Embedding::new("emb", v, e), "enc", h);
        let lm = Seq2Seq::new(encoder.clone(), "lm", v);
        let clause_cond = h + e + N_POSITIONS;
        let clauses = if dims.separate_clause_decoders {
            (0..N_POSITIONS)
                .map(|i| DecoderCell::new(&format!("cl{i}"), e, clause_cond, h, v))
                .collect()
        } else {
            vec![DecoderCell::new("cl", e, clause_cond, h, v)]
        };
        let body_ids: Vec<TokenId> = (NUM_RESERVED..v)
            .filter(|&t| lex.emotion_of(t).is_none() && lex.topic_of(t).is_none())
            .collect();
        Ok(Policy {
            planner: Planner::new(&dims),
            clauses,
            single_bwd: DecoderCell::new("sb", e, h + e, h, v),
            editor: DecoderCell::new("ed", e, 2 * e + h, h, v),
            body: Candidates::new(body_ids)?,
            words_eos: Candidates::words_and_eos(v),
            encoder,
            lm,
            lex: lex.clone(),
            dims,
        })
    }

    pub fn init_store(&self, seed: u64) -> Result<ParamStore> {
        let mut store = ParamStore::new(seed);
        let mut rng = Rng::seed_from_u64(seed);
        self.encoder.init(&mut store, &mut rng)?;
        self.lm.decoder.init(&mut store, &mut rng)?;
        self.planner.init(&mut store, &mut rng)?;
        for c in &self.clauses {
            c.init(&mut store, &mut rng)?;
        }
        self.single_bwd.init(&mut store, &mut rng)?;
        self.editor.init(&mut store, &mut rng)?;
        Ok(store)
    }

    pub fn clause_decoder(&self, position: usize) -> &DecoderCell {
        if self.clauses.len() == 1 {
            &self.clauses[0]
        } else {
            &self.clauses[position]
        }
    }

    pub fn is_editor_param(name: &str) -> bool {
        name.starts_with("ed.")
    }

    pub fn is_encoder_param(name: &str) -> bool {
        name.starts_with("enc.")
    }

    /// Runs the whole pipeline inside `g`. The returned node, when present,
    /// is the log-probability of every stochastic choice made.
    #[allow(clippy::too_many_arguments)]
    pub fn rollout(
        &self,
        g: &mut Graph,
        post: &[TokenId],
        k_et: usize,
        k_tp: usize,
        index: Option<&TemplateIndex>,
        opts: &GenOptions,
        rng: &mut Rng,
    ) -> Result<(Rollout, Option<Var>)> {
        let enc = self.encoder.encode(g, post)?;
        let (plan, plan_lp) = self.planner.plan(g, self, &enc, k_et, k_tp, opts.mode, rng)?;
        let decoded = decode_reply(g, self, &enc, &plan, opts.mode, rng, true)?;
        let mut terms = vec![plan_lp];
        terms.extend(decoded.logprob);

        let mut rollout = Rollout {
            plan,
            traces: decoded.traces,
            primary: decoded.primary.clone(),
            template: None,
            edit: None,
            final_reply: decoded.primary,
            edited: false,
        };
        if let (true, Some(index)) = (opts.edit, index) {
            let query = TemplateQuery {
                order: rollout.plan.order,
                kw_et: rollout.plan.kw_et,
                kw_tp: rollout.plan.kw_tp,
            };
            if let Some(m) = index.pick(&rollout.primary, &query, None) {
                let emb = g.params().get(&self.encoder.emb.name)?;
                let ev = edit_vector(&rollout.primary, &m.template, emb, &self.lex, &opts.editor, rng)?;
                let (tokens, lp) =
                    crate::editor::edit_decode(g, self, &m.template, &rollout.primary, &ev.z, opts.mode, rng)?;
                terms.extend(lp);
                if keeps_plan(&tokens, &rollout.plan) {
                    rollout.final_reply = tokens;
                    rollout.edited = true;
                }
                rollout.template = Some(m);
                rollout.edit = Some(ev);
            }
        }
        let total = if terms.len() == 1 { terms[0] } else { g.add_n(&terms)? };
        Ok((rollout, Some(total)))
    }

    /// Inference-only rollout.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        &self,
        store: &ParamStore,
        post: &[TokenId],
        k_et: usize,
        k_tp: usize,
        index: Option<&TemplateIndex>,
        opts: &GenOptions,
        rng: &mut Rng,
    ) -> Result<Rollout> {
        let mut g = Graph::new(store);
        Ok(self.rollout(&mut g, post, k_et, k_tp, index, opts, rng)?.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenOptions {
    pub mode: DecodeMode,
    pub edit: bool,
    pub editor: EditorConfig,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            mode: DecodeMode::Greedy,
            edit: true,
            editor: EditorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rollout {
    pub plan: ReplyPlan,
    pub traces: Vec<ClauseTrace>,
    /// Assembled reply before editing, framed by GO and EOS.
    pub primary: TokenSeq,
    pub template: Option<TemplateMatch>,
    pub edit: Option<EditVector>,
    /// Edited reply, or the primary reply when no edit was applied.
    pub final_reply: TokenSeq,
    pub edited: bool,
}

/// Frames words as `GO · words · EOS`.
pub fn framed(words: &[TokenId]) -> TokenSeq {
    let mut v = Vec::with_capacity(words.len() + 2);
    v.push(GO);
    v.extend(words_only(words));
    v.push(EOS);
    v
}

/// An edit replaces the primary reply only if it is non-empty and still
/// contains every planned keyword.
fn keeps_plan(edited: &[TokenId], plan: &ReplyPlan) -> bool {
    let words = words_only(edited);
    !words.is_empty() && plan.anchors().iter().all(|k| words.contains(k))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::Config;
    use crate::corpus::{resolve_records, Pair};
    use crate::synth::{gen_synthetic, SynthConfig};
    use crate::vocab::is_special;
    use crate::vocab::Vocab;

    pub(crate) struct Fixture {
        pub lex: Lexicon,
        pub policy: Policy,
        pub store: ParamStore,
        pub train: Vec<Pair>,
    }

    pub(crate) fn fixture(n_pairs: usize, seed: u64) -> Fixture {
        let corpus = gen_synthetic(&SynthConfig {
            n_pairs,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let vocab = Vocab::from_words(corpus.words());
        let lex = Lexicon::new(vocab, corpus.dicts.clone()).unwrap();
        let cfg = Config {
            embed_dim: 4,
            hidden_dim: 5,
            category_dim: 3,
            ..Config::default()
        };
        let policy = Policy::new(PolicyDims::from_config(&cfg, &lex), &lex).unwrap();
        let store = policy.init_store(seed).unwrap();
        let train = resolve_records(&corpus.train, &lex, 20).unwrap();
        Fixture {
            lex,
            policy,
            store,
            train,
        }
    }

    #[test]
    fn heads_share_encoder_entries() {
        let f = fixture(40, 1);
        let names: Vec<&str> = f.store.names().collect();
        assert_eq!(names.iter().filter(|n| **n == "emb").count(), 1);
        assert!(names.iter().any(|n| n.starts_with("enc.")));
        assert!(!names.iter().any(|n| n.starts_with("lm.enc") || n.starts_with("cl.enc")));
        assert_eq!(f.policy.lm.encoder.emb.name, f.policy.encoder.emb.name);
    }

    #[test]
    fn body_candidates_exclude_keywords_and_specials() {
        let f = fixture(40, 1);
        for &t in f.policy.body.ids() {
            assert!(!is_special(t));
            assert!(f.lex.emotion_of(t).is_none() && f.lex.topic_of(t).is_none());
        }
    }

    #[test]
    fn untrained_rollout_keeps_planned_keywords() {
        let f = fixture(60, 2);
        let index = TemplateIndex::build(&f.train.iter().map(|p| p.reply.clone()).collect::<Vec<_>>(), &f.lex);
        let mut rng = Rng::seed_from_u64(4);
        let opts = GenOptions {
            mode: DecodeMode::Sample { temperature: 1.0 },
            ..GenOptions::default()
        };
        for p in f.train.iter().take(20) {
            let r = f
                .policy
                .generate(
                    &f.store,
                    &p.post,
                    p.emotion_label,
                    p.topic_label,
                    Some(&index),
                    &opts,
                    &mut rng,
                )
                .unwrap();
            for kw in [r.plan.kw_et, r.plan.kw_tp].into_iter().flatten() {
                assert!(r.primary.contains(&kw));
            }
            assert_eq!(r.primary.first(), Some(&GO));
            assert_eq!(r.primary.last(), Some(&EOS));
        }
    }
}
