//! End-to-end model building and the on-disk artifact layout.
//!
//! One working directory holds everything:
//!
//! ```text
//! train.jsonl test.jsonl dict/        corpus and dictionaries
//! vocab.txt                           vocabulary
//! lda.json lda.bin topics.json        topic model and label alignment
//! clf.json clf.bin                    emotion classifier
//! backward.json backward.bin backward.dims.json
//! policy.json policy.bin policy.dims.json
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use numcore::{load_checkpoint, save_checkpoint, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{read_records, resolve_records, Pair, Record};
use crate::editor::TemplateIndex;
use crate::emoclf::{train_emoclf, ClfConfig, ClfReport, EmoClassifier};
use crate::lda::{frequent_words, train_lda, LdaConfig, LdaModel, LdaReport, TopicAlignment, TopicModel};
use crate::lexicon::{Dictionaries, Lexicon};
use crate::policy::{Policy, PolicyDims};
use crate::reward::Scorers;
use crate::seq2seq::Seq2Seq;
use crate::train::{prepare, pretrain_mle, Example, MleOptions, MleReport, RlItem};
use crate::vocab::{TokenId, TokenSeq, Vocab};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dict_dir(&self) -> PathBuf {
        self.path("dict")
    }

    pub fn records(&self) -> Result<(Vec<Record>, Vec<Record>)> {
        Ok((
            read_records(&self.path("train.jsonl"))?,
            read_records(&self.path("test.jsonl"))?,
        ))
    }

    /// Builds the vocabulary from every corpus word and dictionary word and
    /// writes it out.
    pub fn build_vocab(&self) -> Result<Lexicon> {
        let dicts = Dictionaries::load_dir(&self.dict_dir())?;
        let (train, test) = self.records()?;
        let mut words: BTreeSet<String> = dicts.all_words().map(String::from).collect();
        for r in train.iter().chain(&test) {
            for w in r.post.split_whitespace().chain(r.reply.split_whitespace()) {
                words.insert(w.to_lowercase());
            }
        }
        let vocab = Vocab::from_words(words);
        vocab.save(&self.path("vocab.txt"))?;
        Lexicon::new(vocab, dicts)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        Lexicon::new(
            Vocab::load(&self.path("vocab.txt"))?,
            Dictionaries::load_dir(&self.dict_dir())?,
        )
    }

    pub fn pairs(&self, lex: &Lexicon, cfg: &Config) -> Result<(Vec<Pair>, Vec<Pair>)> {
        let (train, test) = self.records()?;
        Ok((
            resolve_records(&train, lex, cfg.max_len)?,
            resolve_records(&test, lex, cfg.max_len)?,
        ))
    }

    pub fn save_topics(&self, tm: &TopicModel) -> Result<()> {
        tm.lda.save(&self.path("lda.json"))?;
        let meta = TopicsMeta {
            lda_to_label: tm.alignment.as_slice().to_vec(),
            n_labels: tm.alignment.n_labels(),
            fold_in_iters: tm.fold_in_iters,
            stop_words: tm.stop_words.iter().copied().collect(),
        };
        fs::write(
            self.path("topics.json"),
            serde_json::to_string_pretty(&meta).expect("serialize"),
        )?;
        Ok(())
    }

    pub fn topics(&self) -> Result<TopicModel> {
        let lda = LdaModel::load(&self.path("lda.json"))?;
        let path = self.path("topics.json");
        let meta: TopicsMeta = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(TopicModel {
            lda,
            alignment: TopicAlignment::from_map(meta.lda_to_label, meta.n_labels),
            fold_in_iters: meta.fold_in_iters,
            stop_words: meta.stop_words.into_iter().collect(),
        })
    }

    pub fn save_classifier(&self, clf: &EmoClassifier) -> Result<()> {
        clf.save(&self.path("clf.json"))
    }

    pub fn classifier(&self) -> Result<EmoClassifier> {
        EmoClassifier::load(&self.path("clf.json"))
    }

    pub fn save_backward(&self, dims: &BackwardDims, store: &ParamStore) -> Result<()> {
        fs::write(
            self.path("backward.dims.json"),
            serde_json::to_string_pretty(dims).expect("serialize"),
        )?;
        save_checkpoint(store, &self.path("backward.json"))?;
        Ok(())
    }

    pub fn backward(&self) -> Result<(Seq2Seq, ParamStore)> {
        let path = self.path("backward.dims.json");
        let d: BackwardDims = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((d.model(), load_checkpoint(&self.path("backward.json"))?))
    }

    /// Saves policy parameters under `name` (`policy`, `policy-rl`, ...).
    pub fn save_policy(&self, name: &str, policy: &Policy, store: &ParamStore) -> Result<()> {
        policy.dims.save(&self.path(&format!("{name}.dims.json")))?;
        save_checkpoint(store, &self.path(&format!("{name}.json")))?;
        Ok(())
    }

    pub fn policy(&self, name: &str, lex: &Lexicon) -> Result<(Policy, ParamStore)> {
        let dims = PolicyDims::load(&self.path(&format!("{name}.dims.json")))?;
        let policy = Policy::new(dims, lex)?;
        Ok((policy, load_checkpoint(&self.path(&format!("{name}.json")))?))
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).exists()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TopicsMeta {
    lda_to_label: Vec<usize>,
    n_labels: usize,
    fold_in_iters: usize,
    stop_words: Vec<TokenId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl BackwardDims {
    pub fn model(&self) -> Seq2Seq {
        Seq2Seq::standalone(self.vocab, self.embed, self.hidden)
    }
}

/// LDA over `post ++ reply` documents, aligned to the topic labels. Words
/// found in more than `max(lda_max_df, 2/K)` of the documents are dropped
/// first; the `2/K` floor keeps the words of a topic that covers its fair
/// share of a corpus with few topics.
pub fn fit_topics(cfg: &Config, lex: &Lexicon, train: &[Pair]) -> Result<(TopicModel, LdaReport)> {
    let k = if cfg.lda_topics == 0 {
        lex.n_topics()
    } else {
        cfg.lda_topics
    };
    let docs: Vec<TokenSeq> = train.iter().map(|p| [p.post.as_slice(), &p.reply].concat()).collect();
    let stop_words = frequent_words(&docs, cfg.lda_max_df.max(2.0 / k as f64));
    let docs: Vec<TokenSeq> = docs
        .into_iter()
        .map(|d| d.into_iter().filter(|w| !stop_words.contains(w)).collect())
        .collect();
    let lda_cfg = LdaConfig {
        alpha: cfg.lda_alpha,
        beta: cfg.lda_beta,
        ..LdaConfig::new(k, cfg.lda_iters, cfg.seed)
    };
    let (lda, report) = train_lda(&docs, lex.vocab_size(), &lda_cfg)?;
    let filtered: Vec<Pair> = train
        .iter()
        .map(|p| Pair {
            post: p.post.iter().copied().filter(|w| !stop_words.contains(w)).collect(),
            ..p.clone()
        })
        .collect();
    let alignment = TopicAlignment::fit(&lda, &filtered, lex.n_topics(), cfg.fold_in_iters);
    Ok((
        TopicModel {
            lda,
            alignment,
            fold_in_iters: cfg.fold_in_iters,
            stop_words,
        },
        report,
    ))
}

pub fn fit_classifier(cfg: &Config, lex: &Lexicon, train: &[Pair]) -> Result<(EmoClassifier, ClfReport)> {
    let data: Vec<_> = train.iter().map(|p| (p.reply.clone(), p.emotion_label)).collect();
    let ccfg = ClfConfig {
        embed_dim: cfg.clf_embed_dim,
        channels: cfg.clf_channels,
        epochs: cfg.clf_epochs,
        lr: cfg.clf_lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    train_emoclf(&data, lex.vocab_size(), lex.n_emotions(), &ccfg)
}

/// Reply-to-post model used by the coherence reward. Returns the
/// per-epoch perplexity curve as well.
pub fn fit_backward(cfg: &Config, lex: &Lexicon, train: &[Pair]) -> Result<(BackwardDims, ParamStore, Vec<f64>)> {
    let dims = BackwardDims {
        vocab: lex.vocab_size(),
        embed: cfg.embed_dim,
        hidden: cfg.hidden_dim,
    };
    let model = dims.model();
    let mut store = model.init_store(cfg.seed ^ 0xbac0)?;
    let data: Vec<_> = train.iter().map(|p| (p.reply.clone(), p.post.clone())).collect();
    let curve = model.train(
        &mut store,
        &data,
        &[],
        cfg.backward_epochs,
        cfg.mle_lr,
        cfg.batch_size,
        cfg.seed,
    )?;
    Ok((dims, store, curve))
}

pub fn new_policy(cfg: &Config, lex: &Lexicon) -> Result<(Policy, ParamStore)> {
    let policy = Policy::new(PolicyDims::from_config(cfg, lex), lex)?;
    let store = policy.init_store(cfg.seed)?;
    Ok((policy, store))
}

/// Pretrains a fresh policy. `eval` feeds the perplexity curve.
pub fn fit_policy(
    cfg: &Config,
    lex: &Lexicon,
    train: &[Pair],
    eval: &[Pair],
) -> Result<(Policy, ParamStore, MleReport, Vec<Example>, TemplateIndex)> {
    let (policy, mut store) = new_policy(cfg, lex)?;
    let (examples, index) = prepare(train, &policy);
    let report = pretrain_mle(
        &policy,
        &mut store,
        &examples,
        &index,
        eval,
        &MleOptions::from_config(cfg),
    )?;
    Ok((policy, store, report, examples, index))
}

pub fn template_index(train: &[Pair], lex: &Lexicon) -> TemplateIndex {
    let replies: Vec<TokenSeq> = train.iter().map(|p| p.reply.clone()).collect();
    TemplateIndex::build(&replies, lex)
}

/// Posts with their gold emotion and the topic label predicted from the post.
pub fn rl_items(pairs: &[Pair], topics: &TopicModel) -> Vec<RlItem> {
    pairs
        .iter()
        .map(|p| RlItem {
            post: p.post.clone(),
            k_et: p.emotion_label,
            k_tp: topics.predict_post_topic(&p.post),
        })
        .collect()
}

/// Judges for policy-gradient training. The forward coherence model is a
/// copy of the policy's plain reply model as it is now.
pub fn scorers(
    cfg: &Config,
    policy: &Policy,
    store: &ParamStore,
    backward: (Seq2Seq, ParamStore),
    topics: TopicModel,
    classifier: EmoClassifier,
) -> Scorers {
    Scorers {
        forward: policy.lm.clone(),
        forward_store: store.clone(),
        backward: backward.0,
        backward_store: backward.1,
        topics,
        classifier,
        weights: cfg.reward_weights,
        clause_only: cfg.clause_only_rewards,
    }
}

/// Every trained component, as produced by [`Models::fit`].
pub struct Models {
    pub lex: Lexicon,
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
    pub topics: TopicModel,
    pub classifier: EmoClassifier,
    pub backward_dims: BackwardDims,
    pub backward_store: ParamStore,
    pub policy: Policy,
    pub store: ParamStore,
    pub index: TemplateIndex,
    pub examples: Vec<Example>,
    pub reports: FitReports,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReports {
    pub lda: LdaReport,
    pub classifier: ClfReport,
    pub backward_perplexity: Vec<f64>,
    pub mle: MleReport,
}

impl Models {
    pub fn fit(cfg: &Config, lex: Lexicon, train: Vec<Pair>, test: Vec<Pair>) -> Result<Self> {
        let (topics, lda) = fit_topics(cfg, &lex, &train)?;
        let (classifier, clf) = fit_classifier(cfg, &lex, &train)?;
        let (backward_dims, backward_store, bwd) = fit_backward(cfg, &lex, &train)?;
        let (policy, store, mle, examples, index) = fit_policy(cfg, &lex, &train, &test)?;
        Ok(Models {
            lex,
            train,
            test,
            topics,
            classifier,
            backward_dims,
            backward_store,
            policy,
            store,
            index,
            examples,
            reports: FitReports {
                lda,
                classifier: clf,
                backward_perplexity: bwd,
                mle,
            },
        })
    }

    pub fn scorers(&self, cfg: &Config) -> Scorers {
        scorers(
            cfg,
            &self.policy,
            &self.store,
            (self.backward_dims.model(), self.backward_store.clone()),
            self.topics.clone(),
            self.classifier.clone(),
        )
    }

    pub fn save(&self, ws: &Workspace) -> Result<()> {
        fs::create_dir_all(&ws.dir)?;
        self.lex.vocab.save(&ws.path("vocab.txt"))?;
        self.lex.dicts.save_dir(&ws.dict_dir())?;
        ws.save_topics(&self.topics)?;
        ws.save_classifier(&self.classifier)?;
        ws.save_backward(&self.backward_dims, &self.backward_store)?;
        ws.save_policy("policy", &self.policy, &self.store)
    }
}

/// Reads a config file when given, else defaults.
pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::from_file(p),
        None => Ok(Config::default()),
    }
}
