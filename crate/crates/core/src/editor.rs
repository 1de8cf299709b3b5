//! Template retrieval and edit vectors for the emotional editor.
//!
//! The edit decoder reads `[emb(prev); z; c]`, where `c` is the encoder's
//! final state over the template and `z` the perturbed edit vector.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use numcore::{sample_uniform_interval, sample_vmf, Array, Graph, Rng, Var};
use serde::Serialize;

use crate::lexicon::Lexicon;
use crate::policy::Policy;
use crate::seq2seq::{choose, step_distribution, Candidates, DecodeMode};
use crate::skeleton::{skeletonize, Order, ReplySkeleton};
use crate::vocab::{words_only, TokenId, TokenSeq, EOS, GO};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EditorConfig {
    pub mu: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub norm_cap: f64,
}

impl Default for EditorConfig {
    fn default() -> Self {
        EditorConfig {
            mu: 0.0,
            sigma: 2.0,
            kappa: 20.0,
            epsilon: 0.1,
            norm_cap: 10.0,
        }
    }
}

impl EditorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::Config("edit_sigma must be positive".into()));
        }
        if self.kappa.is_nan() || self.kappa < 0.0 {
            return Err(Error::Config("edit_kappa must be non-negative".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.norm_cap) {
            return Err(Error::Config("edit_epsilon must lie in (0, edit_norm_cap)".into()));
        }
        Ok(())
    }
}

fn word_set(seq: &[TokenId]) -> BTreeSet<TokenId> {
    words_only(seq)
        .into_iter()
        .filter(|&t| !crate::vocab::is_special(t))
        .collect()
}

fn jaccard_sets(a: &BTreeSet<TokenId>, b: &BTreeSet<TokenId>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// Jaccard distance between the word sets of two sequences, specials excluded.
pub fn jaccard(a: &[TokenId], b: &[TokenId]) -> Result<f64> {
    let (sa, sb) = (word_set(a), word_set(b));
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::Input("jaccard needs two non-empty sequences".into()));
    }
    Ok(jaccard_sets(&sa, &sb))
}

/// Keyword layout a template is matched against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemplateQuery {
    pub order: Order,
    pub kw_et: Option<TokenId>,
    pub kw_tp: Option<TokenId>,
}

impl From<&ReplySkeleton> for TemplateQuery {
    fn from(s: &ReplySkeleton) -> Self {
        TemplateQuery {
            order: s.order,
            kw_et: s.kw_et,
            kw_tp: s.kw_tp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemplateMatch {
    pub index: usize,
    pub template: TokenSeq,
    pub tier: u8,
    pub distance: f64,
}

struct Entry {
    reply: TokenSeq,
    words: BTreeSet<TokenId>,
    query: TemplateQuery,
}

/// Training replies indexed by their keywords.
pub struct TemplateIndex {
    entries: Vec<Entry>,
    by_emotion: BTreeMap<TokenId, Vec<usize>>,
    by_topic: BTreeMap<TokenId, Vec<usize>>,
}

impl TemplateIndex {
    /// Replies without any dictionary keyword are left out; indices refer to
    /// positions in `replies` either way.
    pub fn build(replies: &[TokenSeq], lex: &Lexicon) -> Self {
        let mut entries = Vec::with_capacity(replies.len());
        let mut by_emotion: BTreeMap<TokenId, Vec<usize>> = BTreeMap::new();
        let mut by_topic: BTreeMap<TokenId, Vec<usize>> = BTreeMap::new();
        for (i, r) in replies.iter().enumerate() {
            let query = match skeletonize(r, lex) {
                Ok(sk) => TemplateQuery::from(&sk),
                Err(_) => TemplateQuery {
                    order: Order::EOnly,
                    kw_et: None,
                    kw_tp: None,
                },
            };
            if let Some(e) = query.kw_et {
                by_emotion.entry(e).or_default().push(i);
            }
            if let Some(t) = query.kw_tp {
                by_topic.entry(t).or_default().push(i);
            }
            entries.push(Entry {
                reply: r.clone(),
                words: word_set(r),
                query,
            });
        }
        TemplateIndex {
            entries,
            by_emotion,
            by_topic,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reply(&self, i: usize) -> &[TokenId] {
        &self.entries[i].reply
    }

    fn tier(q: &TemplateQuery, c: &TemplateQuery) -> Option<u8> {
        let same_et = q.kw_et == c.kw_et;
        let same_tp = q.kw_tp == c.kw_tp;
        if same_et && same_tp && q.order == c.order {
            Some(1)
        } else if same_et && same_tp {
            Some(2)
        } else if q.kw_tp.is_some() && same_tp {
            Some(3)
        } else if q.kw_et.is_some() && same_et {
            Some(4)
        } else {
            None
        }
    }

    /// Best template for `reply` under the keyword priority tiers, then
    /// smallest Jaccard distance, then lowest index. `exclude` drops one
    /// entry, used when mining templates for the index's own replies.
    pub fn pick(&self, reply: &[TokenId], query: &TemplateQuery, exclude: Option<usize>) -> Option<TemplateMatch> {
        let words = word_set(reply);
        let mut candidates: Vec<usize> = Vec::new();
        if let Some(e) = query.kw_et {
            candidates.extend(self.by_emotion.get(&e).into_iter().flatten());
        }
        if let Some(t) = query.kw_tp {
            candidates.extend(self.by_topic.get(&t).into_iter().flatten());
        }
        candidates.sort_unstable();
        candidates.dedup();
        let mut best: Option<(u8, f64, usize)> = None;
        for i in candidates {
            if Some(i) == exclude {
                continue;
            }
            let e = &self.entries[i];
            let Some(tier) = Self::tier(query, &e.query) else {
                continue;
            };
            let d = jaccard_sets(&words, &e.words);
            let better = match best {
                None => true,
                Some((bt, bd, _)) => tier < bt || (tier == bt && d < bd),
            };
            if better {
                best = Some((tier, d, i));
            }
        }
        best.map(|(tier, distance, index)| TemplateMatch {
            index,
            template: self.entries[index].reply.clone(),
            tier,
            distance,
        })
    }
}

/// Gaussian weight of a word `l` tokens away from the emotion keyword.
pub fn emotion_coefficient(l: usize, cfg: &EditorConfig) -> f64 {
    let d = l as f64 - cfg.mu;
    (-(d * d) / (2.0 * cfg.sigma * cfg.sigma)).exp() / ((2.0 * PI).sqrt() * cfg.sigma)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EditVector {
    pub f: Vec<f64>,
    pub f_norm: f64,
    pub f_dir: Vec<f64>,
    pub z: Vec<f64>,
    pub z_norm: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coefficient of every word type in `seq`, keyed by token. Distances are
/// taken from the first emotion keyword to each word's first occurrence;
/// without an emotion keyword every coefficient is 1.
fn coefficients(seq: &[TokenId], lex: &Lexicon, cfg: &EditorConfig) -> BTreeMap<TokenId, f64> {
    let words = words_only(seq);
    let anchor = words.iter().position(|&t| lex.emotion_of(t).is_some());
    let mut out = BTreeMap::new();
    for (pos, &w) in words.iter().enumerate() {
        out.entry(w).or_insert_with(|| match anchor {
            Some(a) => emotion_coefficient(pos.abs_diff(a), cfg),
            None => 1.0,
        });
    }
    out
}

/// Raw weighted insert/delete difference `f` of `y` against the template `y_prime`.
pub fn edit_difference(y: &[TokenId], y_prime: &[TokenId], emb: &Array, lex: &Lexicon, cfg: &EditorConfig) -> Vec<f64> {
    let d = emb.shape()[1];
    let (cy, cp) = (coefficients(y, lex, cfg), coefficients(y_prime, lex, cfg));
    let mut f = vec![0.0; 2 * d];
    for (&w, &a) in cy.iter().filter(|(w, _)| !cp.contains_key(w)) {
        for (o, e) in f[..d].iter_mut().zip(emb.row(w)) {
            *o += a * e;
        }
    }
    for (&w, &a) in cp.iter().filter(|(w, _)| !cy.contains_key(w)) {
        for (o, e) in f[d..].iter_mut().zip(emb.row(w)) {
            *o += a * e;
        }
    }
    f
}

/// Perturbs `f`: direction from a vMF around `f/‖f‖`, norm uniform on
/// `[t, t + ε]` with `t = min(‖f‖, cap − ε)`. A zero `f` yields a zero `z`.
pub fn perturb(f: Vec<f64>, cfg: &EditorConfig, rng: &mut Rng) -> Result<EditVector> {
    let f_norm = norm(&f);
    if f_norm == 0.0 {
        let n = f.len();
        return Ok(EditVector {
            f_dir: vec![0.0; n],
            z: vec![0.0; n],
            f,
            f_norm,
            z_norm: 0.0,
        });
    }
    let f_dir: Vec<f64> = f.iter().map(|x| x / f_norm).collect();
    let z_dir = sample_vmf(&f_dir, cfg.kappa, rng)?;
    let t = f_norm.min(cfg.norm_cap - cfg.epsilon);
    let z_norm = sample_uniform_interval(t, t + cfg.epsilon, rng)?;
    let z = z_dir.iter().map(|x| x * z_norm).collect();
    Ok(EditVector {
        f,
        f_norm,
        f_dir,
        z,
        z_norm,
    })
}

pub fn edit_vector(
    y: &[TokenId],
    y_prime: &[TokenId],
    emb: &Array,
    lex: &Lexicon,
    cfg: &EditorConfig,
    rng: &mut Rng,
) -> Result<EditVector> {
    perturb(edit_difference(y, y_prime, emb, lex, cfg), cfg, rng)
}

fn edit_cond(g: &mut Graph, policy: &Policy, template: &[TokenId], z: &[f64]) -> Result<Var> {
    let want = 2 * policy.dims.embed;
    if z.len() != want {
        return Err(Error::Contract(format!(
            "edit vector has {} entries, expected {want}",
            z.len()
        )));
    }
    let ctx = policy.encoder.encode(g, template)?.last;
    let z = g.constant(vec![want], z.to_vec())?;
    Ok(g.concat(&[z, ctx])?)
}

/// Output vocabulary of one edit: the words of the template and of the
/// sentence it is reconciled with, in ascending order, then EOS.
pub fn edit_candidates(template: &[TokenId], source: &[TokenId]) -> Candidates {
    let mut ids: Vec<TokenId> = words_only(template)
        .into_iter()
        .chain(words_only(source))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    ids.push(EOS);
    Candidates::new(ids).expect("EOS is always present")
}

/// Rewrites `template` under the edit vector `z`, drawing words from
/// `template` and `source`. Returns the framed output and the
/// log-probability of the sampled tokens (EOS included, unless the length
/// limit was hit).
pub fn edit_decode(
    g: &mut Graph,
    policy: &Policy,
    template: &[TokenId],
    source: &[TokenId],
    z: &[f64],
    mode: DecodeMode,
    rng: &mut Rng,
) -> Result<(TokenSeq, Option<Var>)> {
    let cands = edit_candidates(template, source);
    let cond = edit_cond(g, policy, template, z)?;
    let vars = policy.editor.bind(g, &policy.encoder.emb)?;
    let mut h = vars.initial_state(g)?;
    let mut out = vec![GO];
    let mut terms = Vec::new();
    let mut prev = GO;
    for _ in 0..policy.dims.max_reply_len {
        let (h2, logits) = vars.step(g, prev, Some(cond), h)?;
        h = h2;
        let dist = step_distribution(g, logits, &cands, mode)?;
        let (t, lp) = choose(g, dist, &cands, mode, rng)?;
        terms.push(lp);
        if t == EOS {
            break;
        }
        out.push(t);
        prev = t;
    }
    out.push(EOS);
    let lp = match terms.len() {
        0 => None,
        1 => Some(terms[0]),
        _ => Some(g.add_n(&terms)?),
    };
    Ok((out, lp))
}

/// Teacher-forced negative log-likelihood of `target` (words then EOS) given
/// the template and edit vector, with the number of scored tokens. Each
/// step is normalized over [`edit_candidates`] of the template and target.
pub fn edit_loss(
    g: &mut Graph,
    policy: &Policy,
    template: &[TokenId],
    z: &[f64],
    target: &[TokenId],
) -> Result<(Var, usize)> {
    let cands = edit_candidates(template, target);
    let cond = edit_cond(g, policy, template, z)?;
    let vars = policy.editor.bind(g, &policy.encoder.emb)?;
    let h0 = vars.initial_state(g)?;
    let mut targets = words_only(target);
    targets.push(EOS);
    let n = targets.len();
    let (lp, _) = vars.teacher_force(g, GO, &targets, &cands, Some(cond), h0)?;
    let lp = lp.expect("at least EOS is scored");
    Ok((g.scale(lp, -1.0)?, n))
}
