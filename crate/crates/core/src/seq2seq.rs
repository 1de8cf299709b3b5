//! GRU encoder, conditioned GRU decoder cells, and teacher-forced scoring.
//!
//! Decoders start from a zero state and read `[emb(prev); cond]` at every
//! step. Each decoding step scores only a candidate subset of the
//! vocabulary; every other token has probability exactly zero.

use numcore::{Adam, Graph, ParamStore, Rng, Var};

use crate::fit::{adam_step, epoch_order};
use crate::lda::argmax;
use crate::nn::{Embedding, Gru, GruVars, Linear, LinearVars};
use crate::vocab::{is_special, TokenId, EOS, NUM_RESERVED};
use crate::{Error, Result};

/// Tokens a decoding step may emit, in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    ids: Vec<TokenId>,
}

impl Candidates {
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Config("empty candidate set".into()));
        }
        Ok(Candidates { ids })
    }

    /// All ordinary words plus EOS.
    pub fn words_and_eos(vocab_size: usize) -> Self {
        let mut ids: Vec<TokenId> = (NUM_RESERVED..vocab_size).collect();
        ids.push(EOS);
        Candidates { ids }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, t: TokenId) -> Option<usize> {
        self.ids.iter().position(|&c| c == t)
    }

    pub fn contains(&self, t: TokenId) -> bool {
        self.position(t).is_some()
    }

    /// Copy with `extra` appended if missing.
    pub fn with(&self, extra: TokenId) -> Self {
        let mut ids = self.ids.clone();
        if !ids.contains(&extra) {
            ids.push(extra);
        }
        Candidates { ids }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
}

/// Log-probabilities over `cands` at one step, tempered when sampling.
pub fn step_distribution(g: &mut Graph, logits: Var, cands: &Candidates, mode: DecodeMode) -> Result<Var> {
    let logits = match mode {
        DecodeMode::Sample { temperature } if temperature != 1.0 => g.scale(logits, 1.0 / temperature)?,
        _ => logits,
    };
    Ok(g.log_softmax_subset(logits, &cands.ids)?)
}

/// Picks a token from a step distribution; greedy ties go to the earliest candidate.
pub fn choose(g: &mut Graph, logp: Var, cands: &Candidates, mode: DecodeMode, rng: &mut Rng) -> Result<(TokenId, Var)> {
    let i = match mode {
        DecodeMode::Greedy => argmax(g.value(logp)),
        DecodeMode::Sample { .. } => {
            let w: Vec<f64> = g.value(logp).iter().map(|l| l.exp()).collect();
            rng.categorical(&w)
        }
    };
    Ok((cands.ids[i], g.pick(logp, i)?))
}

/// Log-probability node of `target` at one step.
pub fn target_logprob(g: &mut Graph, logits: Var, cands: &Candidates, target: TokenId) -> Result<Var> {
    let cands = if cands.contains(target) {
        std::borrow::Cow::Borrowed(cands)
    } else {
        std::borrow::Cow::Owned(cands.with(target))
    };
    let lp = g.log_softmax_subset(logits, &cands.ids)?;
    let pos = cands.position(target).expect("target added above");
    Ok(g.pick(lp, pos)?)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub emb: Embedding,
    pub gru: Gru,
}

/// Encoder output: per-step states, their sum, and the last state.
#[derive(Clone, Debug)]
pub struct EncodedPost {
    pub states: Vec<Var>,
    pub pooled: Var,
    pub last: Var,
}

impl Encoder {
    pub fn new(emb: Embedding, prefix: &str, hidden: usize) -> Self {
        let gru = Gru::new(prefix, emb.dim, hidden);
        Encoder { emb, gru }
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        self.emb.init(store, rng)?;
        self.gru.init(store, rng)?;
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = vec![self.emb.name.clone()];
        v.extend(self.gru.names().map(String::from));
        v
    }

    /// Encodes the words of `tokens`; specials are skipped.
    pub fn encode(&self, g: &mut Graph, tokens: &[TokenId]) -> Result<EncodedPost> {
        let words: Vec<TokenId> = tokens.iter().copied().filter(|&t| !is_special(t)).collect();
        if words.is_empty() {
            return Err(Error::Input("cannot encode an empty sequence".into()));
        }
        let emb = self.emb.bind(g)?;
        let gv = self.gru.bind(g)?;
        let mut h = g.zeros(self.gru.hidden)?;
        let mut states = Vec::with_capacity(words.len());
        for &w in &words {
            let x = g.row(emb, w)?;
            h = gv.step(g, x, h)?;
            states.push(h);
        }
        let pooled = if states.len() == 1 {
            states[0]
        } else {
            g.add_n(&states)?
        };
        Ok(EncodedPost {
            last: h,
            pooled,
            states,
        })
    }
}

/// GRU decoder over `[emb(prev); cond]` with a vocabulary projection.
#[derive(Clone, Debug)]
pub struct DecoderCell {
    pub gru: Gru,
    pub out: Linear,
    pub cond_dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    gru: GruVars,
    out: LinearVars,
    emb: Var,
    hidden: usize,
}

impl DecoderCell {
    pub fn new(prefix: &str, embed: usize, cond_dim: usize, hidden: usize, vocab: usize) -> Self {
        DecoderCell {
            gru: Gru::new(&format!("{prefix}.gru"), embed + cond_dim, hidden),
            out: Linear::new(&format!("{prefix}.out"), hidden, vocab),
            cond_dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        self.gru.init(store, rng)?;
        self.out.init(store, rng)?;
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        self.gru.names().chain(self.out.names()).map(String::from).collect()
    }

    pub fn bind(&self, g: &mut Graph, emb: &Embedding) -> Result<DecoderVars> {
        Ok(DecoderVars {
            gru: self.gru.bind(g)?,
            out: self.out.bind(g)?,
            emb: emb.bind(g)?,
            hidden: self.gru.hidden,
        })
    }
}

impl DecoderVars {
    pub fn initial_state(&self, g: &mut Graph) -> Result<Var> {
        Ok(g.zeros(self.hidden)?)
    }

    /// One step: returns the new state and the vocabulary logits.
    pub fn step(&self, g: &mut Graph, prev: TokenId, cond: Option<Var>, h: Var) -> Result<(Var, Var)> {
        let e = g.row(self.emb, prev)?;
        let x = match cond {
            Some(c) => g.concat(&[e, c])?,
            None => e,
        };
        let h = self.gru.step(g, x, h)?;
        let logits = self.out.apply(g, h)?;
        Ok((h, logits))
    }

    /// Runs the decoder over `inputs` without scoring anything.
    pub fn feed(&self, g: &mut Graph, inputs: &[TokenId], cond: Option<Var>, mut h: Var) -> Result<Var> {
        for &t in inputs {
            h = self.step(g, t, cond, h)?.0;
        }
        Ok(h)
    }

    /// Teacher-forced log-probability of `targets` starting from `start`.
    /// Returns the summed log-probability node (if any targets) and the final state.
    pub fn teacher_force(
        &self,
        g: &mut Graph,
        start: TokenId,
        targets: &[TokenId],
        cands: &Candidates,
        cond: Option<Var>,
        mut h: Var,
    ) -> Result<(Option<Var>, Var)> {
        let mut terms = Vec::with_capacity(targets.len());
        let mut prev = start;
        for &t in targets {
            let (h2, logits) = self.step(g, prev, cond, h)?;
            h = h2;
            terms.push(target_logprob(g, logits, cands, t)?);
            prev = t;
        }
        let total = match terms.len() {
            0 => None,
            1 => Some(terms[0]),
            _ => Some(g.add_n(&terms)?),
        };
        Ok((total, h))
    }
}

/// Plain conditional model `p(target | source)`: encoder, then a decoder
/// conditioned on the pooled encoder state, scoring target words and EOS.
#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub encoder: Encoder,
    pub decoder: DecoderCell,
    pub candidates: Candidates,
}

impl Seq2Seq {
    pub fn new(encoder: Encoder, dec_prefix: &str, vocab: usize) -> Self {
        let h = encoder.hidden();
        let decoder = DecoderCell::new(dec_prefix, encoder.emb.dim, h, h, vocab);
        Seq2Seq {
            encoder,
            decoder,
            candidates: Candidates::words_and_eos(vocab),
        }
    }

    /// Stand-alone model with its own store.
    pub fn standalone(vocab: usize, embed: usize, hidden: usize) -> Self {
        Seq2Seq::new(
            Encoder::new(Embedding::new("emb", vocab, embed), "enc", hidden),
            "dec",
            vocab,
        )
    }

    pub fn init_store(&self, seed: u64) -> Result<ParamStore> {
        let mut store = ParamStore::new(seed);
        let mut rng = Rng::seed_from_u64(seed);
        self.encoder.init(&mut store, &mut rng)?;
        self.decoder.init(&mut store, &mut rng)?;
        Ok(store)
    }

    /// Teacher-forced `log p(target words [+ EOS] | source)` and the number
    /// of scored tokens.
    pub fn logprob_graph(
        &self,
        g: &mut Graph,
        source: &[TokenId],
        target: &[TokenId],
        eos: bool,
    ) -> Result<(Var, usize)> {
        let enc = self.encoder.encode(g, source)?;
        self.logprob_encoded(g, &enc, target, eos)
    }

    /// As [`Seq2Seq::logprob_graph`] for an already encoded source.
    pub fn logprob_encoded(
        &self,
        g: &mut Graph,
        enc: &EncodedPost,
        target: &[TokenId],
        eos: bool,
    ) -> Result<(Var, usize)> {
        let dv = self.decoder.bind(g, &self.encoder.emb)?;
        let mut targets: Vec<TokenId> = target.iter().copied().filter(|&t| !is_special(t)).collect();
        if eos {
            targets.push(EOS);
        }
        if targets.is_empty() {
            return Err(Error::Input("nothing to score".into()));
        }
        let h0 = dv.initial_state(g)?;
        let (lp, _) = dv.teacher_force(g, crate::vocab::GO, &targets, &self.candidates, Some(enc.pooled), h0)?;
        Ok((lp.expect("non-empty targets"), targets.len()))
    }

    pub fn seq_logprob(
        &self,
        store: &ParamStore,
        source: &[TokenId],
        target: &[TokenId],
        eos: bool,
    ) -> Result<(f64, usize)> {
        let mut g = Graph::new(store);
        let (lp, n) = self.logprob_graph(&mut g, source, target, eos)?;
        Ok((g.scalar(lp), n))
    }

    /// `exp(−Σ log p / Σ tokens)` over `(source, target)` pairs, EOS included.
    pub fn perplexity(&self, store: &ParamStore, pairs: &[(Vec<TokenId>, Vec<TokenId>)]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::Input("empty evaluation set".into()));
        }
        let (mut lp, mut n) = (0.0, 0usize);
        for (s, t) in pairs {
            let (l, c) = self.seq_logprob(store, s, t, true)?;
            lp += l;
            n += c;
        }
        Ok((-lp / n as f64).exp())
    }

    /// Adam training on `(source, target)` pairs. Returns the held-out
    /// perplexity after every epoch (on `eval`, or on `data` if empty).
    #[allow(clippy::too_many_arguments)]
    pub fn train(
        &self,
        store: &mut ParamStore,
        data: &[(Vec<TokenId>, Vec<TokenId>)],
        eval: &[(Vec<TokenId>, Vec<TokenId>)],
        epochs: usize,
        lr: f64,
        batch_size: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let eval = if eval.is_empty() { data } else { eval };
        let mut opt = Adam::new(lr);
        let mut curve = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let order = epoch_order(data.len(), seed, epoch);
            for chunk in order.chunks(batch_size.max(1)) {
                let batch: Vec<&(Vec<TokenId>, Vec<TokenId>)> = chunk.iter().map(|&i| &data[i]).collect();
                adam_step(
                    store,
                    &mut opt,
                    &batch,
                    |_| true,
                    |g, (s, t)| {
                        let (lp, _) = self.logprob_graph(g, s, t, true)?;
                        Ok(g.scale(lp, -1.0)?)
                    },
                )?;
            }
            curve.push(self.perplexity(store, eval)?);
        }
        Ok(curve)
    }
}
