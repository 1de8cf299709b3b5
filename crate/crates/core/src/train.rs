//! Maximum-likelihood pretraining of every generation head on one shared
//! encoder, followed by REINFORCE fine-tuning against the stage rewards.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::PathBuf;

use numcore::{save_checkpoint, Adam, Gradients, Graph, ParamStore, Rng, Sgd, Var};
use serde::Serialize;

use crate::asyncdec::clause_loss;
use crate::config::Config;
use crate::corpus::Pair;
use crate::editor::{edit_loss, edit_vector, EditorConfig, TemplateIndex, TemplateQuery};
use crate::fit::{adam_step, epoch_order};
use crate::policy::{GenOptions, Policy};
use crate::seq2seq::DecodeMode;
use crate::skeleton::{skeletonize, ReplySkeleton};
use crate::vocab::TokenId;
use crate::{Error, Result};

/// A training pair with its gold skeleton and mined template.
#[derive(Clone, Debug)]
pub struct Example {
    pub pair: Pair,
    /// `None` when the reply holds no keyword.
    pub skeleton: Option<ReplySkeleton>,
    /// Index of the template reply in the training index.
    pub template: Option<usize>,
}

/// Skeletonizes every pair and mines a template for it from the other
/// training replies.
pub fn prepare(pairs: &[Pair], policy: &Policy) -> (Vec<Example>, TemplateIndex) {
    let replies: Vec<_> = pairs.iter().map(|p| p.reply.clone()).collect();
    let index = TemplateIndex::build(&replies, &policy.lex);
    let examples = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let skeleton = skeletonize(&p.reply, &policy.lex).ok();
            let template = skeleton
                .as_ref()
                .and_then(|sk| index.pick(&p.reply, &TemplateQuery::from(sk), Some(i)))
                .map(|m| m.index);
            Example {
                pair: p.clone(),
                skeleton,
                template,
            }
        })
        .collect();
    (examples, index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep `enc.*` fixed; every head then trains on frozen features.
    pub freeze_encoder: bool,
    pub editor: EditorConfig,
}

impl MleOptions {
    pub fn from_config(cfg: &Config) -> Self {
        MleOptions {
            epochs: cfg.mle_epochs,
            lr: cfg.mle_lr,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            freeze_encoder: false,
            editor: cfg.editor,
        }
    }
}

/// Per-epoch means over training examples.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MleReport {
    pub loss: Vec<f64>,
    pub planner_loss: Vec<f64>,
    pub clause_loss: Vec<f64>,
    pub lm_loss: Vec<f64>,
    pub editor_loss: Vec<f64>,
    /// Reply-model perplexity on the evaluation pairs after each epoch.
    pub perplexity: Vec<f64>,
}

impl MleReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,planner,clause,lm,editor,perplexity\n");
        for i in 0..self.loss.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                i + 1,
                self.loss[i],
                self.planner_loss[i],
                self.clause_loss[i],
                self.lm_loss[i],
                self.editor_loss[i],
                self.perplexity[i]
            );
        }
        s
    }
}

/// Joint negative log-likelihood of one example: planner, clause decoders,
/// plain reply model and editor. The edit vector is drawn from `rng` against
/// the current embeddings and enters the graph as a constant. Also returns
/// the four parts.
pub fn joint_loss(
    g: &mut Graph,
    policy: &Policy,
    ex: &Example,
    index: &TemplateIndex,
    editor: &EditorConfig,
    rng: &mut Rng,
) -> Result<(Var, [f64; 4])> {
    let z = match ex.template {
        Some(t) => {
            let emb = g.params().get(&policy.encoder.emb.name)?;
            Some(edit_vector(&ex.pair.reply, index.reply(t), emb, &policy.lex, editor, rng)?.z)
        }
        None => None,
    };
    joint_loss_with(g, policy, ex, index, z.as_deref())
}

/// [`joint_loss`] with a given edit vector; the editor term is skipped when
/// the example has no template or `z` is `None`.
pub fn joint_loss_with(
    g: &mut Graph,
    policy: &Policy,
    ex: &Example,
    index: &TemplateIndex,
    z: Option<&[f64]>,
) -> Result<(Var, [f64; 4])> {
    let p = &ex.pair;
    let enc = policy.encoder.encode(g, &p.post)?;
    let mut parts = [0.0; 4];
    let mut terms = Vec::with_capacity(4);

    let (lm, _) = policy.lm.logprob_encoded(g, &enc, &p.reply, true)?;
    let lm = g.scale(lm, -1.0)?;
    parts[2] = g.scalar(lm);
    terms.push(lm);

    if let Some(sk) = &ex.skeleton {
        let pl = policy
            .planner
            .loss(g, policy, &enc, sk, p.emotion_label, p.topic_label)?;
        parts[0] = g.scalar(pl);
        let (cl, _) = clause_loss(g, policy, &enc, sk)?;
        parts[1] = g.scalar(cl);
        terms.extend([pl, cl]);
    }
    if let (Some(t), Some(z)) = (ex.template, z) {
        let (el, _) = edit_loss(g, policy, index.reply(t), z, &p.reply)?;
        parts[3] = g.scalar(el);
        terms.push(el);
    }
    Ok((g.add_n(&terms)?, parts))
}

fn edit_rng(seed: u64, epoch: usize, item: usize) -> Rng {
    Rng::derive(seed ^ 0xed17_0000_0000, ((epoch as u64) << 32) | item as u64)
}

/// Adam on the joint loss. On divergence the store is rolled back to the
/// start of the failing epoch and the error is returned.
pub fn pretrain_mle(
    policy: &Policy,
    store: &mut ParamStore,
    train: &[Example],
    index: &TemplateIndex,
    eval: &[Pair],
    opts: &MleOptions,
) -> Result<MleReport> {
    if train.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let eval_pairs: Vec<(Vec<TokenId>, Vec<TokenId>)> = if eval.is_empty() {
        train
            .iter()
            .map(|e| (e.pair.post.clone(), e.pair.reply.clone()))
            .collect()
    } else {
        eval.iter().map(|p| (p.post.clone(), p.reply.clone())).collect()
    };
    let freeze = opts.freeze_encoder;
    let trainable = move |name: &str| !(freeze && Policy::is_encoder_param(name));
    let mut adam = Adam::new(opts.lr);
    let mut report = MleReport::default();
    for epoch in 0..opts.epochs {
        let snapshot = store.clone();
        let sums = RefCell::new([0.0; 4]);
        let mut total = 0.0;
        let order = epoch_order(train.len(), opts.seed, epoch);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let step = adam_step(store, &mut adam, chunk, trainable, |g, &i| {
                let mut rng = edit_rng(opts.seed, epoch, i);
                let (l, parts) = joint_loss(g, policy, &train[i], index, &opts.editor, &mut rng)?;
                let mut s = sums.borrow_mut();
                for (a, b) in s.iter_mut().zip(parts) {
                    *a += b;
                }
                Ok(l)
            });
            match step {
                Ok(l) => total += l,
                Err(e) => {
                    *store = snapshot;
                    return Err(e);
                }
            }
        }
        let n = train.len() as f64;
        let s = sums.into_inner();
        report.loss.push(total / n);
        report.planner_loss.push(s[0] / n);
        report.clause_loss.push(s[1] / n);
        report.lm_loss.push(s[2] / n);
        report.editor_loss.push(s[3] / n);
        report.perplexity.push(policy.lm.perplexity(store, &eval_pairs)?);
    }
    Ok(report)
}

/// Running mean of observed rewards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Baseline {
    /// Unset until the first batch, which initializes it to its mean.
    pub value: Option<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Baseline { value: None, decay }
    }

    pub fn with_value(decay: f64, value: f64) -> Self {
        Baseline {
            value: Some(value),
            decay,
        }
    }

    pub fn update(&mut self, r: f64) {
        let b = self.value.unwrap_or(r);
        self.value = Some(self.decay * b + (1.0 - self.decay) * r);
    }
}

/// A post to respond to, with the requested emotion and the topic label
/// predicted for the post.
#[derive(Clone, Debug, PartialEq)]
pub struct RlItem {
    pub post: Vec<TokenId>,
    pub k_et: usize,
    pub k_tp: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub baseline_decay: f64,
    pub temperature: f64,
    pub edit: bool,
    pub freeze_editor: bool,
    pub editor: EditorConfig,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl RlOptions {
    pub fn from_config(cfg: &Config) -> Self {
        RlOptions {
            steps: cfg.rl_steps,
            batch_size: cfg.rl_batch_size,
            lr: cfg.rl_lr,
            baseline_decay: cfg.baseline_decay,
            temperature: cfg.temperature,
            edit: true,
            freeze_editor: cfg.freeze_editor,
            editor: cfg.editor,
            seed: cfg.seed,
            checkpoint_every: cfg.checkpoint_every,
            checkpoint_dir: None,
        }
    }

    pub fn gen_options(&self) -> GenOptions {
        GenOptions {
            mode: DecodeMode::Sample {
                temperature: self.temperature,
            },
            edit: self.edit,
            editor: self.editor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RlStats {
    pub mean_r: f64,
    /// Batch means of r1, r2, r3 (each averaged over present stages).
    pub terms: [f64; 3],
    pub baseline: f64,
    /// Set when a non-finite gradient caused the update to be dropped.
    pub skipped: bool,
}

/// One policy-gradient update over `batch`: sample a full reply per post,
/// score it, and step along `Σ (R − b) ∇ log p(action)` averaged over the
/// batch. The baseline is updated afterwards with every observed reward.
#[allow(clippy::too_many_arguments)]
pub fn rl_step(
    policy: &Policy,
    store: &mut ParamStore,
    batch: &[&RlItem],
    index: Option<&TemplateIndex>,
    reward: &dyn crate::reward::RewardModel,
    baseline: &mut Baseline,
    opts: &RlOptions,
    rng: &mut Rng,
) -> Result<RlStats> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let gen = opts.gen_options();
    let inv = 1.0 / batch.len() as f64;
    let (rewards, terms, grads) = {
        let frozen: &ParamStore = store;
        let mut graphs: Vec<(Graph, Option<Var>)> = Vec::with_capacity(batch.len());
        let mut rewards = Vec::with_capacity(batch.len());
        let mut terms = [0.0; 3];
        for item in batch {
            let mut g = Graph::new(frozen);
            let (rollout, lp) = policy.rollout(&mut g, &item.post, item.k_et, item.k_tp, index, &gen, rng)?;
            let rb = reward.score(&item.post, &rollout)?;
            for (i, t) in terms.iter_mut().enumerate() {
                *t += rb.mean_component(i) * inv;
            }
            rewards.push(rb.total);
            graphs.push((g, lp));
        }
        let b = baseline.value.unwrap_or_else(|| rewards.iter().sum::<f64>() * inv);
        baseline.value = Some(b);
        let mut grads: Vec<Gradients> = Vec::with_capacity(batch.len());
        for ((mut g, lp), &r) in graphs.into_iter().zip(&rewards) {
            let adv = r - b;
            let Some(lp) = lp else { continue };
            if adv == 0.0 {
                continue;
            }
            let obj = g.scale(lp, -adv * inv)?;
            grads.push(g.backward(obj)?);
        }
        (rewards, terms, grads)
    };
    store.zero_grads();
    for gr in &grads {
        store.accumulate(gr);
    }
    if opts.freeze_editor {
        for (name, a) in store.iter_mut() {
            if Policy::is_editor_param(name) {
                a.zero_grad();
            }
        }
    }
    let skipped = !store.grads_finite();
    if skipped {
        store.zero_grads();
    } else {
        Sgd::new(opts.lr).step(store);
    }
    for &r in &rewards {
        baseline.update(r);
    }
    Ok(RlStats {
        mean_r: rewards.iter().sum::<f64>() * inv,
        terms,
        baseline: baseline.value.unwrap_or(0.0),
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RlRow {
    pub step: usize,
    pub mean_r: f64,
    pub terms: [f64; 3],
    pub skipped: bool,
    pub perplexity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RlReport {
    pub rows: Vec<RlRow>,
}

impl RlReport {
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_r).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,mean_R,r1,r2,r3,perplexity\n");
        for r in &self.rows {
            let ppl = r.perplexity.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.step, r.mean_r, r.terms[0], r.terms[1], r.terms[2], ppl
            );
        }
        s
    }
}

/// Trailing mean over at most `window` values ending at each index.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Runs `opts.steps` policy-gradient steps over batches cycling through
/// shuffled `items`. Reply-model perplexity on `probe` is logged every
/// `checkpoint_every` steps and after the last one; checkpoints are written
/// at the same points when a directory is set.
#[allow(clippy::too_many_arguments)]
pub fn train_rl(
    policy: &Policy,
    store: &mut ParamStore,
    items: &[RlItem],
    index: Option<&TemplateIndex>,
    reward: &dyn crate::reward::RewardModel,
    opts: &RlOptions,
    probe: &[(Vec<TokenId>, Vec<TokenId>)],
) -> Result<RlReport> {
    if items.is_empty() {
        return Err(Error::Input("no posts for policy-gradient training".into()));
    }
    let mut rng = Rng::derive(opts.seed, 0x7215_0000);
    let mut baseline = Baseline::new(opts.baseline_decay);
    let mut report = RlReport::default();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut pass = 0;
    for step in 0..opts.steps {
        let mut batch = Vec::with_capacity(opts.batch_size);
        while batch.len() < opts.batch_size.max(1) {
            if cursor == order.len() {
                order = epoch_order(items.len(), opts.seed ^ 0x7215, pass);
                pass += 1;
                cursor = 0;
            }
            batch.push(&items[order[cursor]]);
            cursor += 1;
        }
        let stats = rl_step(policy, store, &batch, index, reward, &mut baseline, opts, &mut rng)?;
        let last = step + 1 == opts.steps;
        let probe_now = last || (opts.checkpoint_every > 0 && (step + 1) % opts.checkpoint_every == 0);
        let perplexity = if probe_now && !probe.is_empty() {
            Some(policy.lm.perplexity(store, probe)?)
        } else {
            None
        };
        if probe_now {
            if let Some(dir) = &opts.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_checkpoint(store, &dir.join(format!("rl-{:06}.json", step + 1)))?;
            }
        }
        report.rows.push(RlRow {
            step,
            mean_r: stats.mean_r,
            terms: stats.terms,
            skipped: stats.skipped,
            perplexity,
        });
    }
    Ok(report)
}

/// Monte Carlo check of the score-function estimator on a two-armed bandit
/// with softmax policy over `theta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BanditCheck {
    pub closed_form: [f64; 2],
    pub mc_mean: [f64; 2],
    pub std_err: [f64; 2],
}

impl BanditCheck {
    /// Largest deviation measured in standard errors.
    pub fn max_z(&self) -> f64 {
        (0..2)
            .map(|i| (self.mc_mean[i] - self.closed_form[i]).abs() / self.std_err[i].max(1e-300))
            .fold(0.0, f64::max)
    }
}

pub fn bandit_gradient_check(theta: [f64; 2], rewards: [f64; 2], samples: usize, seed: u64) -> Result<BanditCheck> {
    if samples < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let mut store = ParamStore::new(seed);
    let idx = store.insert("theta", numcore::Array::from_vec(theta.to_vec())?)?;
    let z = theta[0].exp() + theta[1].exp();
    let pi = [theta[0].exp() / z, theta[1].exp() / z];
    // ∂E[r]/∂θ_j = Σ_a π_a r_a (1[a=j] − π_j)
    let closed_form: [f64; 2] = std::array::from_fn(|j| {
        (0..2)
            .map(|a| pi[a] * rewards[a] * (f64::from(u8::from(a == j)) - pi[j]))
            .sum()
    });

    let mut rng = Rng::seed_from_u64(seed);
    let arms = crate::seq2seq::Candidates::new(vec![0, 1])?;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..samples {
        let mut g = Graph::new(&store);
        let t = g.param("theta")?;
        let lp = g.log_softmax(t)?;
        let mode = DecodeMode::Sample { temperature: 1.0 };
        let (a, pick) = crate::seq2seq::choose(&mut g, lp, &arms, mode, &mut rng)?;
        let obj = g.scale(pick, rewards[a])?;
        let grads = g.backward(obj)?;
        let gv = grads.get(idx).expect("theta is bound");
        for j in 0..2 {
            sum[j] += gv[j];
            sq[j] += gv[j] * gv[j];
        }
    }
    let n = samples as f64;
    let mc_mean = sum.map(|s| s / n);
    let std_err = std::array::from_fn(|j| {
        let var = (sq[j] / n - mc_mean[j] * mc_mean[j]) * n / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    });
    Ok(BanditCheck {
        closed_form,
        mc_mean,
        std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::fixture;
    use crate::reward::ConstantReward;
    use numcore::finite_diff_check;

    fn small_opts(seed: u64) -> MleOptions {
        MleOptions {
            epochs: 3,
            lr: 0.02,
            batch_size: 8,
            seed,
            freeze_encoder: false,
            editor: EditorConfig::default(),
        }
    }

    #[test]
    fn baseline_is_an_exponential_average() {
        let mut b = Baseline::new(0.5);
        b.update(2.0);
        assert_eq!(b.value, Some(2.0));
        b.update(4.0);
        assert_eq!(b.value, Some(3.0));
        b.update(3.0);
        assert_eq!(b.value, Some(3.0));
    }

    #[test]
    fn smoothing_is_a_trailing_mean() {
        assert_eq!(smoothed(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(smoothed(&[], 3), Vec::<f64>::new());
    }

    #[test]
    fn examples_get_templates_other_than_themselves() {
        let f = fixture(80, 2);
        let (ex, _) = prepare(&f.train, &f.policy);
        assert!(ex.iter().filter(|e| e.template.is_some()).count() > ex.len() / 2);
        for (i, e) in ex.iter().enumerate() {
            assert_ne!(e.template, Some(i));
        }
    }

    #[test]
    fn joint_loss_passes_finite_differences() {
        let f = fixture(40, 3);
        let (ex, index) = prepare(&f.train, &f.policy);
        let e = ex
            .iter()
            .find(|e| e.template.is_some() && e.skeleton.is_some())
            .unwrap();
        let emb = f.store.get("emb").unwrap();
        let cfg = EditorConfig::default();
        let template = index.reply(e.template.unwrap());
        let z = edit_vector(&e.pair.reply, template, emb, &f.lex, &cfg, &mut Rng::seed_from_u64(1))
            .unwrap()
            .z;
        assert!(z.iter().any(|&v| v != 0.0));
        let check = finite_diff_check(&f.store, 1e-5, |g| {
            joint_loss_with(g, &f.policy, e, &index, Some(&z))
                .map(|(l, _)| l)
                .map_err(|e| e.into_num())
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{:?}", check.worst());
    }

    #[test]
    fn pretraining_lowers_loss_and_perplexity() {
        let f = fixture(120, 4);
        let (ex, index) = prepare(&f.train, &f.policy);
        let mut store = f.store.clone();
        let r = pretrain_mle(&f.policy, &mut store, &ex, &index, &f.train[..20], &small_opts(4)).unwrap();
        assert!(r.loss.windows(2).all(|w| w[1] < w[0]), "{:?}", r.loss);
        assert!(r.perplexity.windows(2).all(|w| w[1] < w[0]), "{:?}", r.perplexity);
        assert!(r.to_csv().lines().count() == 4);
    }

    #[test]
    fn frozen_encoder_is_untouched() {
        let f = fixture(60, 5);
        let (ex, index) = prepare(&f.train, &f.policy);
        let mut store = f.store.clone();
        let opts = MleOptions {
            epochs: 1,
            freeze_encoder: true,
            ..small_opts(5)
        };
        pretrain_mle(&f.policy, &mut store, &ex, &index, &[], &opts).unwrap();
        for name in f.policy.encoder.param_names() {
            if name.starts_with("enc.") {
                assert_eq!(store.get(&name).unwrap().data(), f.store.get(&name).unwrap().data());
            }
        }
        assert_ne!(
            store.get("cl.out.w").unwrap().data(),
            f.store.get("cl.out.w").unwrap().data()
        );
    }

    fn items(f: &crate::policy::tests::Fixture) -> Vec<RlItem> {
        f.train
            .iter()
            .map(|p| RlItem {
                post: p.post.clone(),
                k_et: p.emotion_label,
                k_tp: p.topic_label,
            })
            .collect()
    }

    fn rl_opts(seed: u64) -> RlOptions {
        RlOptions {
            steps: 3,
            batch_size: 4,
            lr: 0.1,
            baseline_decay: 0.9,
            temperature: 1.0,
            edit: true,
            freeze_editor: false,
            editor: EditorConfig::default(),
            seed,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }

    #[test]
    fn constant_reward_leaves_parameters_unchanged() {
        let f = fixture(40, 6);
        let (_, index) = prepare(&f.train, &f.policy);
        let items = items(&f);
        let c = 1.7;
        let reward = ConstantReward(c);
        let r_total = crate::reward::RewardBreakdown::constant(c).total;
        let mut store = f.store.clone();
        let mut baseline = Baseline::with_value(0.9, r_total);
        let mut rng = Rng::seed_from_u64(0);
        let opts = rl_opts(6);
        for chunk in items.chunks(4).take(5) {
            let batch: Vec<&RlItem> = chunk.iter().collect();
            rl_step(
                &f.policy,
                &mut store,
                &batch,
                Some(&index),
                &reward,
                &mut baseline,
                &opts,
                &mut rng,
            )
            .unwrap();
        }
        for (name, a) in f.store.iter() {
            assert_eq!(a.data(), store.get(name).unwrap().data(), "{name}");
        }
    }

    #[test]
    fn frozen_editor_is_untouched_by_policy_gradient() {
        struct Varying(std::cell::Cell<f64>);
        impl crate::reward::RewardModel for Varying {
            fn score(&self, _: &[TokenId], _: &crate::policy::Rollout) -> Result<crate::reward::RewardBreakdown> {
                self.0.set(self.0.get() + 1.0);
                Ok(crate::reward::RewardBreakdown::constant(self.0.get()))
            }
        }
        let f = fixture(40, 7);
        let (_, index) = prepare(&f.train, &f.policy);
        let mut store = f.store.clone();
        let opts = RlOptions {
            freeze_editor: true,
            ..rl_opts(7)
        };
        train_rl(
            &f.policy,
            &mut store,
            &items(&f),
            Some(&index),
            &Varying(Default::default()),
            &opts,
            &[],
        )
        .unwrap();
        let mut moved = false;
        for (name, a) in f.store.iter() {
            let same = a.data() == store.get(name).unwrap().data();
            if Policy::is_editor_param(name) {
                assert!(same, "{name}");
            } else {
                moved |= !same;
            }
        }
        assert!(moved);
    }

    #[test]
    fn rl_runs_are_reproducible() {
        struct ByLength;
        impl crate::reward::RewardModel for ByLength {
            fn score(&self, _: &[TokenId], r: &crate::policy::Rollout) -> Result<crate::reward::RewardBreakdown> {
                Ok(crate::reward::RewardBreakdown::constant(-(r.final_reply.len() as f64)))
            }
        }
        let f = fixture(40, 8);
        let (_, index) = prepare(&f.train, &f.policy);
        let run = || {
            let mut store = f.store.clone();
            let r = train_rl(
                &f.policy,
                &mut store,
                &items(&f),
                Some(&index),
                &ByLength,
                &rl_opts(8),
                &[],
            )
            .unwrap();
            (r.to_csv(), store.get("cl.out.w").unwrap().data().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bandit_estimator_matches_closed_form() {
        let c = bandit_gradient_check([0.3, -0.4], [1.0, -0.5], 10_000, 3).unwrap();
        assert!(c.max_z() < 3.0, "{c:?}");
        // Hand-derived: ∂/∂θ0 = π0 π1 (r0 − r1).
        let p0 = 1.0 / (1.0 + (-0.7f64).exp());
        assert!((c.closed_form[0] - p0 * (1.0 - p0) * 1.5).abs() < 1e-12);
        assert!((c.closed_form[0] + c.closed_form[1]).abs() < 1e-12);
    }
}
