//! Keyword-anchored reply structure.
//!
//! A reply with both keyword types is split at its first emotion-dictionary
//! word and first topic-dictionary word into three clauses. In `Et` order
//! the layout is `GO · y_et · kw_et · y_md · kw_tp · y_tp · EOS`; `Te` is the
//! exact mirror, `GO · y_tp · kw_tp · y_md · kw_et · y_et · EOS`, so each
//! role clause stays adjacent to its keyword. Single-keyword replies use the
//! same rule with an empty middle: `EOnly` is `GO · y_et · kw_et · y_tp · EOS`
//! and `TOnly` is `GO · y_tp · kw_tp · y_et · EOS`.

use serde::{Deserialize, Serialize};

use crate::lexicon::Lexicon;
use crate::vocab::{TokenId, TokenSeq, EOS, GO};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "ET")]
    Et,
    #[serde(rename = "TE")]
    Te,
    #[serde(rename = "E_ONLY")]
    EOnly,
    #[serde(rename = "T_ONLY")]
    TOnly,
}

impl Order {
    pub const ALL: [Order; 4] = [Order::Et, Order::Te, Order::EOnly, Order::TOnly];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Order> {
        Order::ALL.get(i).copied()
    }

    pub fn needs_emotion(self) -> bool {
        !matches!(self, Order::TOnly)
    }

    pub fn needs_topic(self) -> bool {
        !matches!(self, Order::EOnly)
    }

    pub fn two_keywords(self) -> bool {
        matches!(self, Order::Et | Order::Te)
    }

    /// Whether the emotion side leads (Et, EOnly) or the topic side (Te, TOnly).
    pub fn emotion_first(self) -> bool {
        matches!(self, Order::Et | Order::EOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Order::Et => "ET",
            Order::Te => "TE",
            Order::EOnly => "E_ONLY",
            Order::TOnly => "T_ONLY",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplySkeleton {
    pub order: Order,
    pub kw_et: Option<TokenId>,
    pub kw_tp: Option<TokenId>,
    pub y_et: TokenSeq,
    pub y_md: TokenSeq,
    pub y_tp: TokenSeq,
}

impl ReplySkeleton {
    /// Builds a skeleton from clauses in reading order.
    pub fn from_positions(
        order: Order,
        kw_et: Option<TokenId>,
        kw_tp: Option<TokenId>,
        lead: TokenSeq,
        middle: TokenSeq,
        tail: TokenSeq,
    ) -> Self {
        let (y_et, y_tp) = if order.emotion_first() {
            (lead, tail)
        } else {
            (tail, lead)
        };
        ReplySkeleton {
            order,
            kw_et,
            kw_tp,
            y_et,
            y_md: middle,
            y_tp,
        }
    }

    /// Keywords in reading order; the second is `None` for single-keyword orders.
    pub fn anchors(&self) -> (Option<TokenId>, Option<TokenId>) {
        match self.order {
            Order::Et => (self.kw_et, self.kw_tp),
            Order::Te => (self.kw_tp, self.kw_et),
            Order::EOnly => (self.kw_et, None),
            Order::TOnly => (self.kw_tp, None),
        }
    }

    /// Clauses in reading order: before the first keyword, between, after the last.
    pub fn positions(&self) -> (&[TokenId], &[TokenId], &[TokenId]) {
        if self.order.emotion_first() {
            (&self.y_et, &self.y_md, &self.y_tp)
        } else {
            (&self.y_tp, &self.y_md, &self.y_et)
        }
    }

    pub fn assemble(&self) -> TokenSeq {
        let (lead, middle, tail) = self.positions();
        let (first, second) = self.anchors();
        let mut out = Vec::with_capacity(lead.len() + middle.len() + tail.len() + 4);
        out.push(GO);
        out.extend_from_slice(lead);
        out.extend(first);
        out.extend_from_slice(middle);
        out.extend(second);
        out.extend_from_slice(tail);
        out.push(EOS);
        out
    }
}

/// Splits a reply at its first emotion keyword and first topic keyword.
/// GO/EOS around the reply are ignored.
pub fn skeletonize(reply: &[TokenId], lex: &Lexicon) -> Result<ReplySkeleton> {
    let body: &[TokenId] = {
        let s = reply.strip_prefix(&[GO]).unwrap_or(reply);
        s.strip_suffix(&[EOS]).unwrap_or(s)
    };
    let e = body.iter().position(|&t| lex.emotion_of(t).is_some());
    let t = body.iter().position(|&t| lex.topic_of(t).is_some());
    let cut = |a: usize, b: usize| -> (TokenSeq, TokenSeq, TokenSeq) {
        (body[..a].to_vec(), body[a + 1..b].to_vec(), body[b + 1..].to_vec())
    };
    let sk = match (e, t) {
        (Some(e), Some(t)) if e < t => {
            let (lead, middle, tail) = cut(e, t);
            ReplySkeleton::from_positions(Order::Et, Some(body[e]), Some(body[t]), lead, middle, tail)
        }
        (Some(e), Some(t)) => {
            let (lead, middle, tail) = cut(t, e);
            ReplySkeleton::from_positions(Order::Te, Some(body[e]), Some(body[t]), lead, middle, tail)
        }
        (Some(e), None) => ReplySkeleton::from_positions(
            Order::EOnly,
            Some(body[e]),
            None,
            body[..e].to_vec(),
            Vec::new(),
            body[e + 1..].to_vec(),
        ),
        (None, Some(t)) => ReplySkeleton::from_positions(
            Order::TOnly,
            None,
            Some(body[t]),
            body[..t].to_vec(),
            Vec::new(),
            body[t + 1..].to_vec(),
        ),
        (None, None) => return Err(Error::Skeleton("reply contains no dictionary keyword".into())),
    };
    Ok(sk)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lexicon::Dictionaries;
    use crate::vocab::Vocab;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, BTreeSet};

    pub(crate) fn lex() -> Lexicon {
        let set = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let dicts = Dictionaries::new(
            BTreeMap::from([("happy".into(), set(&["happy"])), ("sad".into(), set(&["sad"]))]),
            BTreeMap::from([("weather".into(), set(&["rain"])), ("food".into(), set(&["cake"]))]),
        )
        .unwrap();
        let vocab = Vocab::from_words([
            "so", "happy", "about", "the", "rain", "today", "makes", "me", "sad", "cake", "i",
        ]);
        Lexicon::new(vocab, dicts).unwrap()
    }

    fn ids(lex: &Lexicon, s: &str) -> TokenSeq {
        lex.vocab.tokenize(s).unwrap()
    }

    #[test]
    fn emotion_then_topic() {
        let lex = lex();
        let sk = skeletonize(&ids(&lex, "so happy about the rain today"), &lex).unwrap();
        assert_eq!(sk.order, Order::Et);
        assert_eq!(sk.y_et, ids(&lex, "so"));
        assert_eq!(sk.y_md, ids(&lex, "about the"));
        assert_eq!(sk.y_tp, ids(&lex, "today"));
        assert_eq!(sk.kw_et, lex.vocab.id("happy"));
        assert_eq!(sk.kw_tp, lex.vocab.id("rain"));
    }

    #[test]
    fn topic_then_emotion() {
        let lex = lex();
        let sk = skeletonize(&ids(&lex, "rain makes me happy"), &lex).unwrap();
        assert_eq!(sk.order, Order::Te);
        assert_eq!(sk.y_tp, Vec::<TokenId>::new());
        assert_eq!(sk.y_md, ids(&lex, "makes me"));
        assert!(sk.y_et.is_empty());
    }

    #[test]
    fn single_keyword_orders() {
        let lex = lex();
        let sk = skeletonize(&ids(&lex, "so happy"), &lex).unwrap();
        assert_eq!(sk.order, Order::EOnly);
        assert_eq!(sk.kw_tp, None);
        let sk = skeletonize(&ids(&lex, "the cake"), &lex).unwrap();
        assert_eq!(sk.order, Order::TOnly);
        assert_eq!(sk.kw_et, None);
        assert!(matches!(
            skeletonize(&ids(&lex, "so the"), &lex),
            Err(Error::Skeleton(_))
        ));
    }

    #[test]
    fn first_occurrence_anchors() {
        let lex = lex();
        let sk = skeletonize(&ids(&lex, "sad about rain so happy cake"), &lex).unwrap();
        assert_eq!(sk.kw_et, lex.vocab.id("sad"));
        assert_eq!(sk.kw_tp, lex.vocab.id("rain"));
        assert_eq!(sk.y_tp, ids(&lex, "so happy cake"));
    }

    proptest! {
        #[test]
        fn assemble_inverts_skeletonize(words in proptest::collection::vec(0usize..11, 1..12)) {
            let lex = lex();
            let seq: TokenSeq = words.iter().map(|w| w + 4).collect();
            if let Ok(sk) = skeletonize(&seq, &lex) {
                let mut expect = vec![GO];
                expect.extend(&seq);
                expect.push(EOS);
                prop_assert_eq!(sk.assemble(), expect);
            }
        }
    }
}
