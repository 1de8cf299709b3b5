//! Run configuration, read from `key = value` text files.

use std::fs;
use std::path::Path;

use crate::asyncdec::Stage;
use crate::editor::EditorConfig;
use crate::reward::{check_weights, WeightTable, STAGE_WEIGHTS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub max_len: usize,

    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub category_dim: usize,
    pub max_clause_len: usize,
    pub max_reply_len: usize,
    pub separate_clause_decoders: bool,

    pub lda_topics: usize,
    pub lda_alpha: f64,
    pub lda_beta: f64,
    pub lda_iters: usize,
    /// Words in more than this fraction of LDA documents (at least 2/K) are ignored.
    pub lda_max_df: f64,
    pub fold_in_iters: usize,

    pub clf_embed_dim: usize,
    pub clf_channels: usize,
    pub clf_epochs: usize,
    pub clf_lr: f64,

    pub backward_epochs: usize,
    pub mle_epochs: usize,
    pub mle_lr: f64,
    pub batch_size: usize,

    pub rl_steps: usize,
    pub rl_batch_size: usize,
    pub rl_lr: f64,
    pub baseline_decay: f64,
    pub temperature: f64,
    pub freeze_editor: bool,
    pub clause_only_rewards: bool,
    pub perplexity_guard: f64,
    pub checkpoint_every: usize,
    pub reward_weights: WeightTable,

    pub editor: EditorConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 1,
            max_len: 20,
            embed_dim: 16,
            hidden_dim: 32,
            category_dim: 8,
            max_clause_len: 8,
            max_reply_len: 20,
            separate_clause_decoders: false,
            lda_topics: 0,
            lda_alpha: 0.1,
            lda_beta: 0.01,
            lda_iters: 200,
            lda_max_df: 0.25,
            fold_in_iters: 20,
            clf_embed_dim: 16,
            clf_channels: 8,
            clf_epochs: 4,
            clf_lr: 0.01,
            backward_epochs: 4,
            mle_epochs: 10,
            mle_lr: 0.01,
            batch_size: 16,
            rl_steps: 500,
            rl_batch_size: 8,
            rl_lr: 0.003,
            baseline_decay: 0.95,
            temperature: 1.0,
            freeze_editor: false,
            clause_only_rewards: false,
            perplexity_guard: 1.5,
            checkpoint_every: 100,
            reward_weights: STAGE_WEIGHTS,
            editor: EditorConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl Config {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_kv(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "category_dim" => self.category_dim = parse(key, v)?,
            "max_clause_len" => self.max_clause_len = parse(key, v)?,
            "max_reply_len" => self.max_reply_len = parse(key, v)?,
            "separate_clause_decoders" => self.separate_clause_decoders = parse(key, v)?,
            "lda_topics" => self.lda_topics = parse(key, v)?,
            "lda_alpha" => self.lda_alpha = parse(key, v)?,
            "lda_beta" => self.lda_beta = parse(key, v)?,
            "lda_iters" => self.lda_iters = parse(key, v)?,
            "lda_max_df" => self.lda_max_df = parse(key, v)?,
            "fold_in_iters" => self.fold_in_iters = parse(key, v)?,
            "clf_embed_dim" => self.clf_embed_dim = parse(key, v)?,
            "clf_channels" => self.clf_channels = parse(key, v)?,
            "clf_epochs" => self.clf_epochs = parse(key, v)?,
            "clf_lr" => self.clf_lr = parse(key, v)?,
            "backward_epochs" => self.backward_epochs = parse(key, v)?,
            "mle_epochs" => self.mle_epochs = parse(key, v)?,
            "mle_lr" => self.mle_lr = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "rl_steps" => self.rl_steps = parse(key, v)?,
            "rl_batch_size" => self.rl_batch_size = parse(key, v)?,
            "rl_lr" => self.rl_lr = parse(key, v)?,
            "baseline_decay" => self.baseline_decay = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "freeze_editor" => self.freeze_editor = parse(key, v)?,
            "clause_only_rewards" => self.clause_only_rewards = parse(key, v)?,
            "perplexity_guard" => self.perplexity_guard = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "edit_mu" => self.editor.mu = parse(key, v)?,
            "edit_sigma" => self.editor.sigma = parse(key, v)?,
            "edit_kappa" => self.editor.kappa = parse(key, v)?,
            "edit_epsilon" => self.editor.epsilon = parse(key, v)?,
            "edit_norm_cap" => self.editor.norm_cap = parse(key, v)?,
            _ => {
                let stage = key
                    .strip_prefix("weights_")
                    .and_then(|n| Stage::ALL.into_iter().find(|s| s.name() == n))
                    .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
                let parts: Vec<f64> = v.split(',').map(|x| parse(key, x.trim())).collect::<Result<_>>()?;
                self.reward_weights[stage.index()] = parts
                    .try_into()
                    .map_err(|_| Error::Config(format!("`{key}` needs three comma-separated weights")))?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.mle_lr <= 0.0 || self.rl_lr <= 0.0 || self.clf_lr <= 0.0 {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must lie in [0, 1)");
        }
        if self.temperature <= 0.0 {
            return bad("temperature must be positive");
        }
        if self.batch_size == 0 || self.rl_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.category_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.lda_max_df > 0.0 && self.lda_max_df <= 1.0) {
            return bad("lda_max_df must lie in (0, 1]");
        }
        check_weights(&self.reward_weights)?;
        self.editor.validate()
    }
}
