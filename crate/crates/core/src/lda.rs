//! Latent Dirichlet allocation by collapsed Gibbs sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use numcore::{load_checkpoint, save_checkpoint, Array, ParamStore, Rng};

use crate::corpus::Pair;
use crate::vocab::{is_special, TokenId, TokenSeq};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iters: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// `alpha = 0.1` is used instead of the usual `50/K`, which swamps
    /// documents of a handful of tokens.
    pub fn new(k: usize, iters: usize, seed: u64) -> Self {
        LdaConfig {
            k,
            alpha: 0.1,
            beta: 0.01,
            iters,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    k: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    /// K × V, row-major.
    phi: Vec<f64>,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct LdaReport {
    pub skipped_empty: usize,
    /// (sweep, per-token log-likelihood) every 10 sweeps and at the end.
    pub log_likelihood: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicInference {
    pub probs: Vec<f64>,
    /// Set when no token of the document was usable and `probs` is uniform.
    pub out_of_vocab: bool,
}

fn usable(doc: &[TokenId], v: usize) -> Vec<TokenId> {
    doc.iter().copied().filter(|&t| !is_special(t) && t < v).collect()
}

fn doc_hash(doc: &[TokenId]) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for &t in doc {
        for b in (t as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub fn train_lda(docs: &[TokenSeq], vocab_size: usize, cfg: &LdaConfig) -> Result<(LdaModel, LdaReport)> {
    if cfg.k < 2 && cfg.k != 1 || cfg.k == 0 {
        return Err(Error::Config("LDA needs at least one topic".into()));
    }
    if cfg.iters == 0 {
        return Err(Error::Config("LDA needs at least one sweep".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.beta > 0.0) {
        return Err(Error::Config("LDA hyperparameters must be positive".into()));
    }
    let (k, v) = (cfg.k, vocab_size);
    let mut report = LdaReport::default();
    let docs: Vec<Vec<TokenId>> = docs
        .iter()
        .filter_map(|d| {
            let u = usable(d, v);
            if u.is_empty() {
                report.skipped_empty += 1;
                None
            } else {
                Some(u)
            }
        })
        .collect();
    if docs.is_empty() {
        return Err(Error::Input("no non-empty documents for LDA".into()));
    }

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut n_kw = vec![0.0f64; k * v];
    let mut n_k = vec![0.0f64; k];
    let mut n_dk = vec![vec![0.0f64; k]; docs.len()];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            doc.iter()
                .map(|&w| {
                    let t = rng.below(k);
                    n_kw[t * v + w] += 1.0;
                    n_k[t] += 1.0;
                    n_dk[d][t] += 1.0;
                    t
                })
                .collect()
        })
        .collect();

    let vbeta = v as f64 * cfg.beta;
    let ll = |n_kw: &[f64], n_k: &[f64], n_dk: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        let mut count = 0.0;
        for (d, doc) in docs.iter().enumerate() {
            let nd: f64 = n_dk[d].iter().sum();
            for &w in doc {
                let p: f64 = (0..k)
                    .map(|t| {
                        let theta = (n_dk[d][t] + cfg.alpha) / (nd + k as f64 * cfg.alpha);
                        let phi = (n_kw[t * v + w] + cfg.beta) / (n_k[t] + vbeta);
                        theta * phi
                    })
                    .sum();
                total += p.ln();
                count += 1.0;
            }
        }
        total / count
    };
    report.log_likelihood.push((0, ll(&n_kw, &n_k, &n_dk)));

    let burn_in = cfg.iters / 2;
    let mut phi_acc = vec![0.0f64; k * v];
    let mut samples = 0usize;
    let mut weights = vec![0.0f64; k];
    for sweep in 1..=cfg.iters {
        for (d, doc) in docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = z[d][i];
                n_kw[old * v + w] -= 1.0;
                n_k[old] -= 1.0;
                n_dk[d][old] -= 1.0;
                for t in 0..k {
                    weights[t] = (n_dk[d][t] + cfg.alpha) * (n_kw[t * v + w] + cfg.beta) / (n_k[t] + vbeta);
                }
                let new = rng.categorical(&weights);
                z[d][i] = new;
                n_kw[new * v + w] += 1.0;
                n_k[new] += 1.0;
                n_dk[d][new] += 1.0;
            }
        }
        if sweep > burn_in {
            for t in 0..k {
                for w in 0..v {
                    phi_acc[t * v + w] += (n_kw[t * v + w] + cfg.beta) / (n_k[t] + vbeta);
                }
            }
            samples += 1;
        }
        if sweep % 10 == 0 || sweep == cfg.iters {
            report.log_likelihood.push((sweep, ll(&n_kw, &n_k, &n_dk)));
        }
    }
    let phi: Vec<f64> = phi_acc.iter().map(|p| p / samples as f64).collect();
    let mut model = LdaModel {
        k,
        vocab_size: v,
        alpha: cfg.alpha,
        beta: cfg.beta,
        seed: cfg.seed,
        phi,
    };
    model.renormalize();
    Ok((model, report))
}

impl LdaModel {
    fn renormalize(&mut self) {
        let v = self.vocab_size;
        for row in self.phi.chunks_mut(v) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
        }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        &self.phi[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    /// Top `n` word ids of a topic, highest probability first.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<TokenId> {
        let row = self.phi_row(topic);
        let mut ids: Vec<TokenId> = (0..self.vocab_size).filter(|&t| !is_special(t)).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }

    /// Fold-in Gibbs with `phi` frozen. The sampler is seeded from the model
    /// seed and the document, so the result is a pure function of its input.
    pub fn infer_topic(&self, doc: &[TokenId], fold_in_iters: usize) -> TopicInference {
        let k = self.k;
        let words = usable(doc, self.vocab_size);
        if words.is_empty() {
            return TopicInference {
                probs: vec![1.0 / k as f64; k],
                out_of_vocab: true,
            };
        }
        let iters = fold_in_iters.max(1);
        let mut rng = Rng::derive(self.seed, doc_hash(&words));
        let mut n_dk = vec![0.0f64; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.below(k);
                n_dk[t] += 1.0;
                t
            })
            .collect();
        let mut acc = vec![0.0f64; k];
        let mut samples = 0.0;
        let mut weights = vec![0.0f64; k];
        for sweep in 0..iters {
            for (i, &w) in words.iter().enumerate() {
                n_dk[z[i]] -= 1.0;
                for t in 0..k {
                    weights[t] = (n_dk[t] + self.alpha) * self.phi[t * self.vocab_size + w];
                }
                z[i] = rng.categorical(&weights);
                n_dk[z[i]] += 1.0;
            }
            if sweep >= iters / 2 {
                for t in 0..k {
                    acc[t] += n_dk[t];
                }
                samples += 1.0;
            }
        }
        let n = words.len() as f64;
        let denom = n + k as f64 * self.alpha;
        let mut probs: Vec<f64> = acc.iter().map(|c| (c / samples + self.alpha) / denom).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        TopicInference {
            probs,
            out_of_vocab: false,
        }
    }

    /// Argmax LDA topic, lowest index on ties.
    pub fn predict_topic(&self, doc: &[TokenId], fold_in_iters: usize) -> usize {
        argmax(&self.infer_topic(doc, fold_in_iters).probs)
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        let mut s = ParamStore::new(self.seed);
        s.insert("phi", Array::new(vec![self.k, self.vocab_size], self.phi.clone())?)?;
        s.insert("alpha", Array::from_vec(vec![self.alpha])?)?;
        s.insert("beta", Array::from_vec(vec![self.beta])?)?;
        // seeds are stored bit-cast so that every u64 survives exactly
        s.insert(
            "seed",
            Array::from_vec(vec![f64::from_bits(self.seed & 0x7fef_ffff_ffff_ffff)])?,
        )?;
        Ok(s)
    }

    pub fn from_store(s: &ParamStore) -> Result<Self> {
        let phi = s.get("phi")?;
        let (k, v) = (phi.shape()[0], phi.shape()[1]);
        Ok(LdaModel {
            k,
            vocab_size: v,
            alpha: s.get("alpha")?.data()[0],
            beta: s.get("beta")?.data()[0],
            seed: s.get("seed")?.data()[0].to_bits(),
            phi: phi.data().to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(save_checkpoint(&self.to_store()?, path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        LdaModel::from_store(&load_checkpoint(path)?)
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Many-to-one map from LDA topics to dictionary topic labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicAlignment {
    lda_to_label: Vec<usize>,
    n_labels: usize,
}

impl TopicAlignment {
    pub fn identity(k: usize) -> Self {
        TopicAlignment {
            lda_to_label: (0..k).collect(),
            n_labels: k,
        }
    }

    pub fn from_map(lda_to_label: Vec<usize>, n_labels: usize) -> Self {
        TopicAlignment { lda_to_label, n_labels }
    }

    /// Greedy matching on the co-occurrence counts of predicted LDA topic
    /// and labelled topic over `pairs` posts. Each step takes the largest
    /// remaining cell (lowest indices on ties); LDA topics left over once
    /// every label is taken map to their most frequent label.
    pub fn fit(model: &LdaModel, pairs: &[Pair], n_labels: usize, fold_in_iters: usize) -> Self {
        let k = model.num_topics();
        let mut counts = vec![vec![0usize; n_labels]; k];
        for p in pairs {
            counts[model.predict_topic(&p.post, fold_in_iters)][p.topic_label] += 1;
        }
        let mut map = vec![usize::MAX; k];
        let mut label_used = vec![false; n_labels];
        for _ in 0..k.min(n_labels) {
            let mut best: Option<(usize, usize, usize)> = None;
            for (t, row) in counts.iter().enumerate() {
                if map[t] != usize::MAX {
                    continue;
                }
                for (l, &c) in row.iter().enumerate() {
                    if label_used[l] {
                        continue;
                    }
                    if best.is_none_or(|(_, _, bc)| c > bc) {
                        best = Some((t, l, c));
                    }
                }
            }
            let (t, l, _) = best.expect("unassigned cell exists");
            map[t] = l;
            label_used[l] = true;
        }
        for (t, m) in map.iter_mut().enumerate() {
            if *m == usize::MAX {
                *m = argmax(&counts[t].iter().map(|&c| c as f64).collect::<Vec<_>>());
            }
        }
        TopicAlignment {
            lda_to_label: map,
            n_labels,
        }
    }

    pub fn label_of(&self, lda_topic: usize) -> usize {
        self.lda_to_label[lda_topic]
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.lda_to_label
    }

    /// Collapses an LDA topic distribution onto labels.
    pub fn label_probs(&self, lda_probs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_labels];
        for (t, p) in lda_probs.iter().enumerate() {
            out[self.lda_to_label[t]] += p;
        }
        out
    }
}

/// Word types found in more than `max_df` of `docs`.
pub fn frequent_words(docs: &[TokenSeq], max_df: f64) -> BTreeSet<TokenId> {
    let mut df: BTreeMap<TokenId, usize> = BTreeMap::new();
    for d in docs {
        for &w in d.iter().collect::<BTreeSet<_>>() {
            *df.entry(w).or_default() += 1;
        }
    }
    let limit = max_df * docs.len() as f64;
    df.into_iter()
        .filter(|&(_, c)| c as f64 > limit)
        .map(|(w, _)| w)
        .collect()
}

/// LDA model plus its label alignment: the topic scorer used by the pipeline.
#[derive(Clone, Debug)]
pub struct TopicModel {
    pub lda: LdaModel,
    pub alignment: TopicAlignment,
    pub fold_in_iters: usize,
    /// Words dropped from every document before fitting and inference.
    pub stop_words: BTreeSet<TokenId>,
}

impl TopicModel {
    pub fn filter(&self, doc: &[TokenId]) -> TokenSeq {
        doc.iter().copied().filter(|w| !self.stop_words.contains(w)).collect()
    }

    /// Distribution over dictionary topic labels.
    pub fn label_distribution(&self, doc: &[TokenId]) -> Vec<f64> {
        let doc = self.filter(doc);
        self.alignment
            .label_probs(&self.lda.infer_topic(&doc, self.fold_in_iters).probs)
    }

    pub fn predict_post_topic(&self, post: &[TokenId]) -> usize {
        argmax(&self.label_distribution(post))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two disjoint vocabularies: ids 4..12 and 12..20.
    fn separable(n: usize, seed: u64) -> Vec<TokenSeq> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let base = if i % 2 == 0 { 4 } else { 12 };
                (0..6).map(|_| base + rng.below(8)).collect()
            })
            .collect()
    }

    #[test]
    fn separates_disjoint_groups() {
        let docs = separable(200, 1);
        let (m, report) = train_lda(&docs, 20, &LdaConfig::new(2, 100, 3)).unwrap();
        for t in 0..2 {
            let top = m.top_words(t, 5);
            let group0 = top.iter().all(|&w| (4..12).contains(&w));
            let group1 = top.iter().all(|&w| (12..20).contains(&w));
            assert!(group0 || group1, "topic {t}: {top:?}");
        }
        let first = report.log_likelihood.first().unwrap().1;
        let last = report.log_likelihood.last().unwrap().1;
        assert!(last > first);

        let pure: TokenSeq = vec![4, 5, 6, 7, 8, 9];
        let p = m.infer_topic(&pure, 20).probs;
        let t0 = argmax(&p);
        assert!(p[t0] > 0.8, "{p:?}");
        let doubled: TokenSeq = pure.iter().chain(&pure).copied().collect();
        let q = m.infer_topic(&doubled, 20).probs;
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 0.05);
        }
    }

    #[test]
    fn rows_are_distributions() {
        let docs = separable(50, 2);
        let (m, _) = train_lda(&docs, 20, &LdaConfig::new(3, 20, 0)).unwrap();
        for t in 0..3 {
            let s: f64 = m.phi_row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(m.phi_row(t).iter().all(|&p| p > 0.0));
        }
        let p = m.infer_topic(&[4, 13, 5], 10).probs;
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_topic_is_smoothed_unigram() {
        let docs: Vec<TokenSeq> = vec![vec![4, 4, 5], vec![6, 4]];
        let cfg = LdaConfig::new(1, 5, 0);
        let (m, _) = train_lda(&docs, 8, &cfg).unwrap();
        let counts = [0.0, 0.0, 0.0, 0.0, 3.0, 1.0, 1.0, 0.0];
        let denom = 5.0 + 8.0 * cfg.beta;
        for (p, c) in m.phi_row(0).iter().zip(counts) {
            assert!((p - (c + cfg.beta) / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let docs = separable(60, 4);
        let a = train_lda(&docs, 20, &LdaConfig::new(2, 30, 9)).unwrap().0;
        let b = train_lda(&docs, 20, &LdaConfig::new(2, 30, 9)).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(a.infer_topic(&[4, 5], 10), a.infer_topic(&[4, 5], 10));
    }

    #[test]
    fn oov_document_is_uniform_and_flagged() {
        let docs = separable(20, 5);
        let (m, _) = train_lda(&docs, 20, &LdaConfig::new(2, 10, 0)).unwrap();
        let r = m.infer_topic(&[1, 2, 99], 10);
        assert!(r.out_of_vocab);
        assert_eq!(r.probs, vec![0.5, 0.5]);
        assert_eq!(m.predict_topic(&[99], 10), 0);
    }

    #[test]
    fn empty_documents_are_counted() {
        let docs: Vec<TokenSeq> = vec![vec![4, 5], vec![], vec![1, 2]];
        let (_, report) = train_lda(&docs, 8, &LdaConfig::new(2, 5, 0)).unwrap();
        assert_eq!(report.skipped_empty, 2);
    }

    #[test]
    fn frequent_words_counts_documents_not_tokens() {
        let docs = vec![vec![4, 4, 4, 5], vec![5, 6], vec![5, 7], vec![8]];
        assert_eq!(frequent_words(&docs, 0.5), BTreeSet::from([5]));
        assert!(frequent_words(&docs, 1.0).is_empty());
        assert_eq!(frequent_words(&docs, 0.0).len(), 5);
    }

    #[test]
    fn save_load_round_trip() {
        let docs = separable(20, 5);
        let (m, _) = train_lda(&docs, 20, &LdaConfig::new(2, 10, 12345)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lda.json");
        m.save(&p).unwrap();
        assert_eq!(LdaModel::load(&p).unwrap(), m);
    }

    #[test]
    fn greedy_alignment_recovers_permutation() {
        let docs = separable(100, 6);
        let (m, _) = train_lda(&docs, 20, &LdaConfig::new(2, 60, 1)).unwrap();
        let pairs: Vec<Pair> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| Pair {
                post: d.clone(),
                reply: d.clone(),
                emotion_label: 0,
                topic_label: i % 2,
            })
            .collect();
        let al = TopicAlignment::fit(&m, &pairs, 2, 20);
        let tm = TopicModel {
            lda: m,
            alignment: al,
            fold_in_iters: 20,
            stop_words: BTreeSet::new(),
        };
        let correct = pairs
            .iter()
            .filter(|p| tm.predict_post_topic(&p.post) == p.topic_label)
            .count();
        assert!(correct >= 95, "{correct}");
    }
}
