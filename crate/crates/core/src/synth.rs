//! Deterministic synthetic conversation corpus.
//!
//! Posts name a topic keyword and a topic context word, and open with a cue
//! word that fixes the reply structure. Replies reuse the post's topic
//! keyword, take an emotion keyword chosen by the labelled emotion and the
//! topic keyword's slot, and fill their clauses from small per-slot pools.
//! Every reply carries an emotion keyword; half carry both keyword types.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use numcore::Rng;

use crate::corpus::{write_records, Record};
use crate::lexicon::Dictionaries;
use crate::skeleton::Order;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub n_topics: usize,
    pub n_emotions: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 1500,
            n_topics: 8,
            n_emotions: 7,
            seed: 7,
        }
    }
}

const TEST_FRACTION: f64 = 0.2;

// (label, keywords, context words)
const TOPICS: [(&str, [&str; 4], [&str; 4]); 8] = [
    (
        "weather",
        ["rain", "snow", "sunshine", "wind"],
        ["umbrella", "cloud", "forecast", "storm"],
    ),
    (
        "food",
        ["cake", "pizza", "soup", "noodles"],
        ["kitchen", "oven", "dinner", "recipe"],
    ),
    (
        "music",
        ["song", "guitar", "piano", "concert"],
        ["band", "melody", "album", "radio"],
    ),
    (
        "sport",
        ["football", "tennis", "match", "marathon"],
        ["team", "coach", "stadium", "goal"],
    ),
    (
        "travel",
        ["trip", "flight", "beach", "train"],
        ["ticket", "hotel", "luggage", "passport"],
    ),
    (
        "work",
        ["boss", "meeting", "project", "office"],
        ["deadline", "email", "salary", "desk"],
    ),
    (
        "movie",
        ["film", "actor", "cinema", "cartoon"],
        ["popcorn", "screen", "trailer", "scene"],
    ),
    (
        "pet",
        ["dog", "cat", "puppy", "kitten"],
        ["leash", "fur", "vet", "bowl"],
    ),
];

// (label, keywords, intensifiers)
const EMOTIONS: [(&str, [&str; 3], [&str; 2]); 7] = [
    ("happy", ["happy", "glad", "cheerful"], ["yay", "wonderful"]),
    ("sad", ["sad", "gloomy", "upset"], ["sigh", "alas"]),
    ("surprise", ["surprised", "amazed", "shocked"], ["wow", "whoa"]),
    ("angry", ["angry", "furious", "annoyed"], ["ugh", "seriously"]),
    ("disgust", ["disgusted", "sickened", "repulsed"], ["yuck", "eww"]),
    ("like", ["love", "adore", "cherish"], ["sweet", "lovely"]),
    ("fear", ["scared", "afraid", "terrified"], ["eek", "yikes"]),
];

const CUES_ET: [&str; 2] = ["did", "have"];
const CUES_TE: [&str; 2] = ["is", "was"];
const CUES_E: [&str; 4] = ["how", "why", "what", "when"];
const POST_VERBS: [&str; 4] = ["see", "hear", "like", "check"];
const POST_TIMES: [&str; 3] = ["today", "yesterday", "tonight"];

// Clause pools; "*" is replaced with an emotion intensifier.
const ET_LEAD: [&[&str]; 4] = [&[], &["so"], &["i", "am"], &["really"]];
const ET_MID: [&[&str]; 3] = [&["about", "the"], &["with", "the"], &["by", "this"]];
const ET_TAIL: [&[&str]; 4] = [&[], &["today"], &["again"], &["*"]];
const TE_LEAD: [&[&str]; 3] = [&["the"], &["this"], &["that"]];
const TE_MID: [&[&str]; 3] = [&["makes", "me"], &["made", "me"], &["left", "me"]];
const TE_TAIL: [&[&str]; 4] = [&[], &["now"], &["*"], &["again"]];
const E_LEAD: [&[&str]; 4] = [&["i", "feel"], &["so"], &["feeling"], &["i", "am"]];
const E_TAIL: [&[&str]; 4] = [&[], &["today"], &["*"], &["about", "it"]];

struct Topic {
    label: String,
    keywords: Vec<String>,
    context: Vec<String>,
}

struct Emotion {
    label: String,
    keywords: Vec<String>,
    intensifiers: Vec<String>,
}

fn topics(n: usize) -> Vec<Topic> {
    (0..n)
        .map(|i| match TOPICS.get(i) {
            Some((l, k, c)) => Topic {
                label: l.to_string(),
                keywords: k.iter().map(|s| s.to_string()).collect(),
                context: c.iter().map(|s| s.to_string()).collect(),
            },
            None => Topic {
                label: format!("topic{i}"),
                keywords: (0..4).map(|j| format!("t{i}kw{j}")).collect(),
                context: (0..4).map(|j| format!("t{i}ctx{j}")).collect(),
            },
        })
        .collect()
}

fn emotions(n: usize) -> Vec<Emotion> {
    (0..n)
        .map(|i| match EMOTIONS.get(i) {
            Some((l, k, x)) => Emotion {
                label: l.to_string(),
                keywords: k.iter().map(|s| s.to_string()).collect(),
                intensifiers: x.iter().map(|s| s.to_string()).collect(),
            },
            None => Emotion {
                label: format!("emotion{i}"),
                keywords: (0..3).map(|j| format!("e{i}kw{j}")).collect(),
                intensifiers: (0..2).map(|j| format!("e{i}int{j}")).collect(),
            },
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dicts: Dictionaries,
    pub train: Vec<Record>,
    pub test: Vec<Record>,
    /// Structure class of each generated reply, train then test.
    pub orders: Vec<Order>,
}

impl SyntheticCorpus {
    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.train.iter().chain(&self.test)
    }

    /// Every word in the corpus and dictionaries.
    pub fn words(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.dicts.all_words().map(str::to_string).collect();
        for r in self.records() {
            out.extend(r.post.split_whitespace().map(str::to_string));
            out.extend(r.reply.split_whitespace().map(str::to_string));
        }
        out
    }

    /// Writes `train.jsonl`, `test.jsonl` and `dict/{emotion,topic}/<label>`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_records(&dir.join("train.jsonl"), &self.train)?;
        write_records(&dir.join("test.jsonl"), &self.test)?;
        self.dicts.save_dir(&dir.join("dict"))
    }
}

pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    let topics = topics(cfg.n_topics);
    let emotions = emotions(cfg.n_emotions);
    let dicts = Dictionaries::new(
        emotions
            .iter()
            .map(|e| (e.label.clone(), e.keywords.iter().cloned().collect()))
            .collect::<BTreeMap<_, _>>(),
        topics
            .iter()
            .map(|t| (t.label.clone(), t.keywords.iter().cloned().collect()))
            .collect::<BTreeMap<_, _>>(),
    )?;

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_pairs);
    let mut orders = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let topic = &topics[rng.below(topics.len())];
        let emotion = &emotions[rng.below(emotions.len())];
        let slot = rng.below(topic.keywords.len());
        let order = match rng.below(4) {
            0 => Order::Et,
            1 => Order::Te,
            _ => Order::EOnly,
        };
        let kw_tp = &topic.keywords[slot];
        let kw_et = &emotion.keywords[slot % emotion.keywords.len()];

        let cue = match order {
            Order::Et => *rng.choose(&CUES_ET),
            Order::Te => *rng.choose(&CUES_TE),
            _ => *rng.choose(&CUES_E),
        };
        let mut post = vec![
            cue.to_string(),
            "you".into(),
            rng.choose(&POST_VERBS).to_string(),
            "the".into(),
            kw_tp.clone(),
            rng.choose(&topic.context).clone(),
        ];
        if rng.below(2) == 0 {
            post.push(rng.choose(&POST_TIMES).to_string());
        }

        let fill = |pool: &[&[&str]], rng: &mut Rng| -> Vec<String> {
            rng.choose(pool)
                .iter()
                .map(|w| {
                    if *w == "*" {
                        rng.choose(&emotion.intensifiers).clone()
                    } else {
                        w.to_string()
                    }
                })
                .collect()
        };
        let mut reply: Vec<String> = Vec::new();
        match order {
            Order::Et => {
                reply.extend(fill(&ET_LEAD, &mut rng));
                reply.push(kw_et.clone());
                reply.extend(fill(&ET_MID, &mut rng));
                reply.push(kw_tp.clone());
                reply.extend(fill(&ET_TAIL, &mut rng));
            }
            Order::Te => {
                reply.extend(fill(&TE_LEAD, &mut rng));
                reply.push(kw_tp.clone());
                reply.extend(fill(&TE_MID, &mut rng));
                reply.push(kw_et.clone());
                reply.extend(fill(&TE_TAIL, &mut rng));
            }
            _ => {
                reply.extend(fill(&E_LEAD, &mut rng));
                reply.push(kw_et.clone());
                reply.extend(fill(&E_TAIL, &mut rng));
            }
        }
        records.push(Record {
            post: post.join(" "),
            reply: reply.join(" "),
            emotion: emotion.label.clone(),
            topic: topic.label.clone(),
        });
        orders.push(order);
    }

    let n_test = ((cfg.n_pairs as f64) * TEST_FRACTION).round() as usize;
    let test = records.split_off(cfg.n_pairs - n_test);
    Ok(SyntheticCorpus {
        dicts,
        train: records,
        test,
        orders,
    })
}

/// Topic-separable bag-of-words corpus for checking the topic model.
///
/// Each post and reply draws most of its words from its topic's keywords and
/// context words and the rest from a shared filler pool, so the topic is
/// recoverable from word identity alone. Replies also carry one keyword of the
/// labelled emotion. `orders` is left empty.
pub fn gen_separable(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    const TOPIC_SHARE: usize = 4; // out of 5 words
    let topics = topics(cfg.n_topics);
    let emotions = emotions(cfg.n_emotions);
    let dicts = Dictionaries::new(
        emotions
            .iter()
            .map(|e| (e.label.clone(), e.keywords.iter().cloned().collect()))
            .collect::<BTreeMap<_, _>>(),
        topics
            .iter()
            .map(|t| (t.label.clone(), t.keywords.iter().cloned().collect()))
            .collect::<BTreeMap<_, _>>(),
    )?;
    let filler: Vec<&str> = CUES_E.iter().chain(&POST_VERBS).chain(&POST_TIMES).copied().collect();

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let topic = &topics[rng.below(topics.len())];
        let emotion = &emotions[rng.below(emotions.len())];
        let words = |n: usize, rng: &mut Rng| -> Vec<String> {
            (0..n)
                .map(|_| {
                    if rng.below(5) < TOPIC_SHARE {
                        let i = rng.below(topic.keywords.len() + topic.context.len());
                        topic.keywords.iter().chain(&topic.context).nth(i).unwrap().clone()
                    } else {
                        rng.choose(&filler).to_string()
                    }
                })
                .collect()
        };
        let post = words(6, &mut rng);
        let mut reply = words(4, &mut rng);
        reply.insert(rng.below(reply.len() + 1), rng.choose(&emotion.keywords).clone());
        records.push(Record {
            post: post.join(" "),
            reply: reply.join(" "),
            emotion: emotion.label.clone(),
            topic: topic.label.clone(),
        });
    }
    let n_test = ((cfg.n_pairs as f64) * TEST_FRACTION).round() as usize;
    let test = records.split_off(cfg.n_pairs - n_test);
    Ok(SyntheticCorpus {
        dicts,
        train: records,
        test,
        orders: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicon;
    use crate::skeleton::skeletonize;
    use crate::vocab::Vocab;

    #[test]
    fn same_seed_gives_identical_files() {
        let cfg = SynthConfig {
            n_pairs: 200,
            seed: 7,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen_synthetic(&cfg).unwrap().write(a.path()).unwrap();
        gen_synthetic(&cfg).unwrap().write(b.path()).unwrap();
        for f in ["train.jsonl", "test.jsonl", "dict/emotion/happy", "dict/topic/pet"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn two_keyword_fraction_and_skeletons() {
        let corpus = gen_synthetic(&SynthConfig {
            n_pairs: 1000,
            ..Default::default()
        })
        .unwrap();
        let lex = Lexicon::new(Vocab::from_words(corpus.words()), corpus.dicts.clone()).unwrap();
        let mut two = 0;
        for r in corpus.records() {
            let reply = lex.vocab.tokenize(&r.reply).unwrap();
            let sk = skeletonize(&reply, &lex).expect("every reply skeletonizes");
            if sk.order.two_keywords() {
                two += 1;
            }
            // the labelled emotion's dictionary supplies the emotion keyword
            let label = lex.dicts.emotion_index(&r.emotion).unwrap();
            assert_eq!(lex.emotion_of(sk.kw_et.unwrap()), Some(label));
            assert!(reply.iter().any(|&t| lex.emotion_of(t) == Some(label)));
        }
        let frac = two as f64 / 1000.0;
        assert!((0.4..=0.6).contains(&frac), "two-keyword fraction {frac}");
    }

    #[test]
    fn separable_posts_are_mostly_topic_words() {
        let c = gen_separable(&SynthConfig {
            n_pairs: 300,
            n_topics: 2,
            n_emotions: 3,
            seed: 4,
        })
        .unwrap();
        let own: Vec<BTreeSet<&str>> = TOPICS[..2]
            .iter()
            .map(|(_, k, x)| k.iter().chain(x).copied().collect())
            .collect();
        let (mut hits, mut total) = (0, 0);
        for r in c.records() {
            let t = if r.topic == TOPICS[0].0 { 0 } else { 1 };
            for w in r.post.split_whitespace() {
                assert!(!own[1 - t].contains(w), "{w} leaked into {}", r.topic);
                hits += own[t].contains(w) as usize;
                total += 1;
            }
        }
        let share = hits as f64 / total as f64;
        assert!((0.75..0.85).contains(&share), "topic share {share}");
    }

    #[test]
    fn extra_labels_get_generated_names() {
        let c = gen_synthetic(&SynthConfig {
            n_pairs: 50,
            n_topics: 10,
            n_emotions: 9,
            seed: 1,
        })
        .unwrap();
        assert_eq!(c.dicts.topic_labels().len(), 10);
        assert_eq!(c.dicts.emotion_labels().len(), 9);
        assert_eq!(c.train.len() + c.test.len(), 50);
    }
}
