//! Convolutional emotion classifier.
//!
//! Filters of width 1, 2 and 3 slide over the embedded words; each channel is
//! max-pooled over the windows that fit inside the true length. Sequences
//! shorter than the widest filter are padded with PAD up to that width.

use std::path::Path;

use numcore::{load_checkpoint, save_checkpoint, Adam, Graph, ParamStore, Rng, Var};

use crate::fit::{adam_step, epoch_order};
use crate::lda::argmax;
use crate::nn::{Embedding, Linear};
use crate::vocab::{is_special, TokenId, PAD, UNK};
use crate::{Error, Result};

const WIDTHS: [usize; 3] = [1, 2, 3];

/// Parameter layout; the values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ClfNet {
    emb: Embedding,
    convs: Vec<Linear>,
    out: Linear,
}

#[derive(Clone, Debug)]
pub struct EmoClassifier {
    pub net: ClfNet,
    pub store: ParamStore,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClfConfig {
    pub embed_dim: usize,
    pub channels: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClfConfig {
    fn default() -> Self {
        ClfConfig {
            embed_dim: 16,
            channels: 8,
            epochs: 4,
            lr: 0.01,
            batch_size: 16,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ClfReport {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub holdout_accuracy: f64,
}

fn prepare(reply: &[TokenId]) -> Result<Vec<TokenId>> {
    let mut words: Vec<TokenId> = reply.iter().copied().filter(|&t| !is_special(t) || t == UNK).collect();
    if words.is_empty() {
        return Err(Error::Input("cannot classify an empty reply".into()));
    }
    while words.len() < WIDTHS[WIDTHS.len() - 1] {
        words.push(PAD);
    }
    Ok(words)
}

impl ClfNet {
    pub fn new(vocab: usize, n_emotions: usize, embed_dim: usize, channels: usize) -> Self {
        let emb = Embedding::new("clf.emb", vocab, embed_dim);
        let convs = WIDTHS
            .iter()
            .map(|&k| Linear::new(&format!("clf.conv{k}"), k * embed_dim, channels))
            .collect();
        let out = Linear::new("clf.out", WIDTHS.len() * channels, n_emotions);
        ClfNet { emb, convs, out }
    }

    pub fn n_emotions(&self) -> usize {
        self.out.output
    }

    /// Log-probabilities over emotion labels.
    pub fn log_probs(&self, g: &mut Graph, reply: &[TokenId]) -> Result<Var> {
        let words = prepare(reply)?;
        let emb = self.emb.bind(g)?;
        let rows: Vec<Var> = words.iter().map(|&w| g.row(emb, w)).collect::<Result<_, _>>()?;
        let mut pooled = Vec::with_capacity(WIDTHS.len());
        for (conv, &k) in self.convs.iter().zip(&WIDTHS) {
            let cv = conv.bind(g)?;
            let mut feats = Vec::with_capacity(rows.len() + 1 - k);
            for start in 0..=rows.len() - k {
                let x = if k == 1 {
                    rows[start]
                } else {
                    g.concat(&rows[start..start + k])?
                };
                let a = cv.apply(g, x)?;
                feats.push(g.tanh(a)?);
            }
            pooled.push(g.max_n(&feats)?);
        }
        let h = g.concat(&pooled)?;
        let ov = self.out.bind(g)?;
        let logits = ov.apply(g, h)?;
        Ok(g.log_softmax(logits)?)
    }
}

impl EmoClassifier {
    /// Fresh classifier. With `zero_output` the output layer starts at zero,
    /// so every input maps to the uniform distribution.
    pub fn new(
        vocab: usize,
        n_emotions: usize,
        embed_dim: usize,
        channels: usize,
        seed: u64,
        zero_output: bool,
    ) -> Result<Self> {
        let net = ClfNet::new(vocab, n_emotions, embed_dim, channels);
        let mut store = ParamStore::new(seed);
        let mut rng = Rng::seed_from_u64(seed);
        net.emb.init(&mut store, &mut rng)?;
        for c in &net.convs {
            c.init(&mut store, &mut rng)?;
        }
        if zero_output {
            net.out.init_zero(&mut store)?;
        } else {
            net.out.init(&mut store, &mut rng)?;
        }
        Ok(EmoClassifier { net, store })
    }

    pub fn from_store(store: ParamStore) -> Result<Self> {
        let emb = store.get("clf.emb")?.shape().to_vec();
        let out = store.get("clf.out.w")?.shape().to_vec();
        let channels = out[1] / WIDTHS.len();
        Ok(EmoClassifier {
            net: ClfNet::new(emb[0], out[0], emb[1], channels),
            store,
        })
    }

    pub fn n_emotions(&self) -> usize {
        self.net.n_emotions()
    }

    pub fn classify(&self, reply: &[TokenId]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let lp = self.net.log_probs(&mut g, reply)?;
        Ok(g.value(lp).iter().map(|l| l.exp()).collect())
    }

    /// Log-probability of `label`.
    pub fn log_prob(&self, reply: &[TokenId], label: usize) -> Result<f64> {
        let mut g = Graph::new(&self.store);
        let lp = self.net.log_probs(&mut g, reply)?;
        Ok(g.value(lp)[label])
    }

    pub fn predict(&self, reply: &[TokenId]) -> Result<usize> {
        Ok(argmax(&self.classify(reply)?))
    }

    pub fn accuracy(&self, data: &[(Vec<TokenId>, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Input("empty evaluation set".into()));
        }
        let mut ok = 0;
        for (r, l) in data {
            if self.predict(r)? == *l {
                ok += 1;
            }
        }
        Ok(ok as f64 / data.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(save_checkpoint(&self.store, path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        EmoClassifier::from_store(load_checkpoint(path)?)
    }
}

/// Trains on `(reply, label)` examples. Every tenth example (by position) is
/// held out for the reported accuracy.
pub fn train_emoclf(
    data: &[(Vec<TokenId>, usize)],
    vocab: usize,
    n_emotions: usize,
    cfg: &ClfConfig,
) -> Result<(EmoClassifier, ClfReport)> {
    let mut labels: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::DegenerateLabels(format!(
            "{} distinct emotion label(s) in training data",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_emotions) {
        return Err(Error::Input(format!("label {bad} out of range")));
    }
    let (train, holdout): (Vec<_>, Vec<_>) = data.iter().enumerate().partition(|(i, _)| i % 10 != 9);
    let train: Vec<&(Vec<TokenId>, usize)> = train.into_iter().map(|(_, x)| x).collect();
    let holdout: Vec<(Vec<TokenId>, usize)> = holdout.into_iter().map(|(_, x)| x.clone()).collect();

    let mut clf = EmoClassifier::new(vocab, n_emotions, cfg.embed_dim, cfg.channels, cfg.seed, false)?;
    let mut opt = Adam::new(cfg.lr);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&(Vec<TokenId>, usize)> = chunk.iter().map(|&i| train[i]).collect();
            let net = &clf.net;
            total += adam_step(
                &mut clf.store,
                &mut opt,
                &batch,
                |_| true,
                |g, (r, l)| {
                    let lp = net.log_probs(g, r)?;
                    let p = g.pick(lp, *l)?;
                    Ok(g.scale(p, -1.0)?)
                },
            )?;
        }
        losses.push(total / train.len() as f64);
    }
    let holdout_accuracy = if holdout.is_empty() {
        1.0
    } else {
        clf.accuracy(&holdout)?
    };
    Ok((
        clf,
        ClfReport {
            losses,
            holdout_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use numcore::finite_diff_check;

    /// Label = which of two keyword groups appears; other tokens are noise.
    fn separable(n: usize, seed: u64) -> Vec<(Vec<TokenId>, usize)> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 3;
                let mut r: Vec<TokenId> = (0..rng.below(4) + 1).map(|_| 10 + rng.below(8)).collect();
                let at = rng.below(r.len() + 1);
                r.insert(at, 4 + 2 * label + rng.below(2));
                (r, label)
            })
            .collect()
    }

    #[test]
    fn learns_keyword_labels() {
        let data = separable(400, 1);
        let (clf, report) = train_emoclf(&data, 20, 3, &ClfConfig::default()).unwrap();
        assert!(report.holdout_accuracy >= 0.95, "{report:?}");
        assert_eq!(clf.predict(&[12, 4, 13]).unwrap(), 0);
        let (_, again) = train_emoclf(&data, 20, 3, &ClfConfig::default()).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn zero_output_is_uniform() {
        let clf = EmoClassifier::new(20, 7, 4, 3, 0, true).unwrap();
        for p in clf.classify(&[5, 6]).unwrap() {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_extension_is_ignored() {
        let clf = EmoClassifier::new(20, 4, 4, 3, 2, false).unwrap();
        for r in [vec![5usize], vec![5, 6], vec![5, 6, 7, 8]] {
            let mut padded = r.clone();
            padded.extend([PAD, PAD, PAD]);
            assert_eq!(clf.classify(&r).unwrap(), clf.classify(&padded).unwrap());
        }
        assert!(clf.classify(&[PAD]).is_err());
    }

    #[test]
    fn outputs_are_distributions() {
        let clf = EmoClassifier::new(20, 5, 4, 3, 4, false).unwrap();
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..20 {
            let r: Vec<TokenId> = (0..rng.below(6) + 1).map(|_| 4 + rng.below(16)).collect();
            let s: f64 = clf.classify(&r).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_label_is_degenerate() {
        let data = vec![(vec![4usize], 0usize), (vec![5], 0)];
        assert!(matches!(
            train_emoclf(&data, 8, 2, &ClfConfig::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn gradients_pass_finite_differences() {
        let clf = EmoClassifier::new(10, 3, 3, 2, 5, false).unwrap();
        let check = finite_diff_check(&clf.store, 1e-5, |g| {
            let lp = clf.net.log_probs(g, &[4, 7, 5, 9]).map_err(|e| e.into_num())?;
            let a = g.pick(lp, 1)?;
            let lp2 = clf.net.log_probs(g, &[6]).map_err(|e| e.into_num())?;
            let b = g.pick(lp2, 2)?;
            g.add(a, b)
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{}", check.max_rel_error);
    }

    #[test]
    fn checkpoint_round_trip() {
        let clf = EmoClassifier::new(12, 3, 4, 2, 8, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clf.json");
        clf.save(&p).unwrap();
        let back = EmoClassifier::load(&p).unwrap();
        assert_eq!(back.classify(&[4, 5, 6]).unwrap(), clf.classify(&[4, 5, 6]).unwrap());
    }
}
