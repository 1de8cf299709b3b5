//! Clause-by-clause decoding around planned keywords.
//!
//! A reply is cut into up to three clauses in reading order: before the first
//! keyword, between the keywords, after the last. Every clause decoder sees
//! `[h̃; emb(boundary); position one-hot]` and stops by emitting its boundary
//! token (the next keyword, or EOS for the last clause). With a single
//! keyword the text before it is produced right to left by a separate
//! decoder that stops on GO, then fed forward before the tail is decoded.

use numcore::{Graph, Rng, Var};
use serde::{Deserialize, Serialize};

use crate::planner::ReplyPlan;
use crate::policy::{Policy, N_POSITIONS};
use crate::seq2seq::{choose, step_distribution, Candidates, DecodeMode, DecoderVars, EncodedPost};
use crate::skeleton::{Order, ReplySkeleton};
use crate::vocab::{TokenId, TokenSeq, EOS, GO};
use crate::{Error, Result};

/// Reward stages: the three clauses and the whole reply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Et,
    Md,
    Tp,
    Final,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Et, Stage::Md, Stage::Tp, Stage::Final];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Et => "et",
            Stage::Md => "md",
            Stage::Tp => "tp",
            Stage::Final => "final",
        }
    }

    /// Stage of the clause at reading position `position` under `order`.
    pub fn of_position(order: Order, position: usize) -> Stage {
        match (position, order.emotion_first()) {
            (1, _) => Stage::Md,
            (0, true) | (2, false) => Stage::Et,
            _ => Stage::Tp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClauseTrace {
    pub stage: Stage,
    pub position: usize,
    /// Clause words in reading order, boundary excluded.
    pub tokens: TokenSeq,
    /// Per-token log-probabilities in generation order.
    pub logprobs: Vec<f64>,
    /// Log-probability of the boundary, absent when it was forced.
    pub stop_logprob: Option<f64>,
    pub truncated: bool,
    /// Generated right to left.
    pub reversed: bool,
    pub final_state: Vec<f64>,
}

pub struct Decoded {
    pub traces: Vec<ClauseTrace>,
    /// Assembled reply framed by GO and EOS.
    pub primary: TokenSeq,
    pub logprob: Option<Var>,
}

struct ClauseOut {
    tokens: TokenSeq,
    logprobs: Vec<f64>,
    stop_logprob: Option<f64>,
    truncated: bool,
    h: Var,
    terms: Vec<Var>,
}

fn one_hot(g: &mut Graph, position: usize) -> Result<Var> {
    let mut v = vec![0.0; N_POSITIONS];
    v[position] = 1.0;
    Ok(g.constant(vec![N_POSITIONS], v)?)
}

/// Conditioning vector of a forward clause.
pub fn clause_cond(
    g: &mut Graph,
    policy: &Policy,
    enc: &EncodedPost,
    boundary: TokenId,
    position: usize,
) -> Result<Var> {
    let table = policy.encoder.emb.bind(g)?;
    let b = g.row(table, boundary)?;
    let p = one_hot(g, position)?;
    Ok(g.concat(&[enc.pooled, b, p])?)
}

fn backward_cond(g: &mut Graph, policy: &Policy, enc: &EncodedPost, kw: TokenId) -> Result<Var> {
    let table = policy.encoder.emb.bind(g)?;
    let k = g.row(table, kw)?;
    Ok(g.concat(&[enc.pooled, k])?)
}

#[allow(clippy::too_many_arguments)]
fn generate_clause(
    g: &mut Graph,
    vars: &DecoderVars,
    cands: &Candidates,
    cond: Var,
    start: TokenId,
    stop: TokenId,
    mut h: Var,
    max_len: usize,
    mode: DecodeMode,
    rng: &mut Rng,
) -> Result<ClauseOut> {
    let mut out = ClauseOut {
        tokens: Vec::new(),
        logprobs: Vec::new(),
        stop_logprob: None,
        truncated: false,
        h,
        terms: Vec::new(),
    };
    let mut prev = start;
    loop {
        if out.tokens.len() == max_len {
            out.truncated = true;
            break;
        }
        let (h2, logits) = vars.step(g, prev, Some(cond), h)?;
        h = h2;
        let dist = step_distribution(g, logits, cands, mode)?;
        let (t, lp) = choose(g, dist, cands, mode, rng)?;
        out.terms.push(lp);
        if t == stop {
            out.stop_logprob = Some(g.scalar(lp));
            break;
        }
        out.logprobs.push(g.scalar(lp));
        out.tokens.push(t);
        prev = t;
    }
    out.h = h;
    Ok(out)
}

fn trace(g: &Graph, order: Order, position: usize, c: &ClauseOut, reversed: bool) -> ClauseTrace {
    ClauseTrace {
        stage: Stage::of_position(order, position),
        position,
        tokens: c.tokens.clone(),
        logprobs: c.logprobs.clone(),
        stop_logprob: c.stop_logprob,
        truncated: c.truncated,
        reversed,
        final_state: g.value(c.h).to_vec(),
    }
}

/// Decodes every clause of `plan`. With `carry` off, each forward clause
/// starts from a zero state instead of the previous clause's final state.
pub fn decode_reply(
    g: &mut Graph,
    policy: &Policy,
    enc: &EncodedPost,
    plan: &ReplyPlan,
    mode: DecodeMode,
    rng: &mut Rng,
    carry: bool,
) -> Result<Decoded> {
    plan.check()?;
    let anchors = plan.anchors();
    let max_len = policy.dims.max_clause_len;
    let mut traces = Vec::with_capacity(3);
    let mut terms = Vec::new();

    if let [first, second] = anchors[..] {
        let mut h: Option<Var> = None;
        let plan_steps = [(0, GO, first), (1, first, second), (2, second, EOS)];
        for (position, start, stop) in plan_steps {
            let vars = policy.clause_decoder(position).bind(g, &policy.encoder.emb)?;
            let h0 = match (carry, h) {
                (true, Some(h)) => h,
                _ => vars.initial_state(g)?,
            };
            let cond = clause_cond(g, policy, enc, stop, position)?;
            let cands = policy.body.with(stop);
            let c = generate_clause(g, &vars, &cands, cond, start, stop, h0, max_len, mode, rng)?;
            traces.push(trace(g, plan.order, position, &c, false));
            terms.extend(c.terms.iter().copied());
            h = Some(c.h);
        }
    } else {
        let kw = anchors[0];
        let sb = policy.single_bwd.bind(g, &policy.encoder.emb)?;
        let h0 = sb.initial_state(g)?;
        let cond = backward_cond(g, policy, enc, kw)?;
        let cands = policy.body.with(GO);
        let mut back = generate_clause(g, &sb, &cands, cond, kw, GO, h0, max_len, mode, rng)?;
        back.tokens.reverse();
        traces.push(trace(g, plan.order, 0, &back, true));
        terms.extend(back.terms.iter().copied());

        let lead_vars = policy.clause_decoder(0).bind(g, &policy.encoder.emb)?;
        let h0 = lead_vars.initial_state(g)?;
        let cond0 = clause_cond(g, policy, enc, kw, 0)?;
        let mut inputs = vec![GO];
        inputs.extend_from_slice(&back.tokens);
        let h_lead = lead_vars.feed(g, &inputs, Some(cond0), h0)?;

        let vars = policy.clause_decoder(2).bind(g, &policy.encoder.emb)?;
        let h0 = if carry { h_lead } else { vars.initial_state(g)? };
        let cond = clause_cond(g, policy, enc, EOS, 2)?;
        let cands = policy.body.with(EOS);
        let c = generate_clause(g, &vars, &cands, cond, kw, EOS, h0, max_len, mode, rng)?;
        traces.push(trace(g, plan.order, 2, &c, false));
        terms.extend(c.terms.iter().copied());
    }
    let primary = assemble(plan, &traces)?.assemble();
    let logprob = match terms.len() {
        0 => None,
        1 => Some(terms[0]),
        _ => Some(g.add_n(&terms)?),
    };
    Ok(Decoded {
        traces,
        primary,
        logprob,
    })
}

/// Places decoded clauses around the plan's keywords.
pub fn assemble(plan: &ReplyPlan, traces: &[ClauseTrace]) -> Result<ReplySkeleton> {
    plan.check()?;
    let mut slots: [Option<&TokenSeq>; 3] = [None, None, None];
    for t in traces {
        let slot = slots
            .get_mut(t.position)
            .ok_or_else(|| Error::Contract(format!("clause position {} out of range", t.position)))?;
        if slot.replace(&t.tokens).is_some() {
            return Err(Error::Contract(format!("two clauses at position {}", t.position)));
        }
    }
    if plan.order.two_keywords() != slots[1].is_some() {
        return Err(Error::Contract(format!(
            "middle clause does not match order {}",
            plan.order.name()
        )));
    }
    let take = |s: Option<&TokenSeq>| s.cloned().unwrap_or_default();
    Ok(ReplySkeleton::from_positions(
        plan.order,
        plan.kw_et,
        plan.kw_tp,
        take(slots[0]),
        take(slots[1]),
        take(slots[2]),
    ))
}

fn neg_sum(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let total = match terms.len() {
        0 => return Err(Error::Contract("no scored tokens".into())),
        1 => terms[0],
        _ => g.add_n(terms)?,
    };
    Ok(g.scale(total, -1.0)?)
}

/// Teacher-forced negative log-likelihood of a gold skeleton's clauses,
/// boundaries included, and the number of scored tokens.
pub fn clause_loss(g: &mut Graph, policy: &Policy, enc: &EncodedPost, gold: &ReplySkeleton) -> Result<(Var, usize)> {
    let (lead, middle, tail) = gold.positions();
    let mut terms = Vec::new();
    let mut count = 0;
    match gold.anchors() {
        (Some(first), Some(second)) => {
            let mut h: Option<Var> = None;
            for (position, start, body, stop) in
                [(0, GO, lead, first), (1, first, middle, second), (2, second, tail, EOS)]
            {
                let vars = policy.clause_decoder(position).bind(g, &policy.encoder.emb)?;
                let h0 = match h {
                    Some(h) => h,
                    None => vars.initial_state(g)?,
                };
                let cond = clause_cond(g, policy, enc, stop, position)?;
                let mut targets = body.to_vec();
                targets.push(stop);
                count += targets.len();
                let (lp, h1) = vars.teacher_force(g, start, &targets, &policy.body.with(stop), Some(cond), h0)?;
                terms.extend(lp);
                h = Some(h1);
            }
        }
        (Some(kw), None) => {
            let sb = policy.single_bwd.bind(g, &policy.encoder.emb)?;
            let h0 = sb.initial_state(g)?;
            let cond = backward_cond(g, policy, enc, kw)?;
            let mut targets: TokenSeq = lead.iter().rev().copied().collect();
            targets.push(GO);
            count += targets.len();
            let (lp, _) = sb.teacher_force(g, kw, &targets, &policy.body.with(GO), Some(cond), h0)?;
            terms.extend(lp);

            let lead_vars = policy.clause_decoder(0).bind(g, &policy.encoder.emb)?;
            let h0 = lead_vars.initial_state(g)?;
            let cond0 = clause_cond(g, policy, enc, kw, 0)?;
            let mut inputs = vec![GO];
            inputs.extend_from_slice(lead);
            let h_lead = lead_vars.feed(g, &inputs, Some(cond0), h0)?;

            let vars = policy.clause_decoder(2).bind(g, &policy.encoder.emb)?;
            let cond = clause_cond(g, policy, enc, EOS, 2)?;
            let mut targets = tail.to_vec();
            targets.push(EOS);
            count += targets.len();
            let (lp, _) = vars.teacher_force(g, kw, &targets, &policy.body.with(EOS), Some(cond), h_lead)?;
            terms.extend(lp);
        }
        _ => return Err(Error::Skeleton("skeleton has no keyword".into())),
    }
    Ok((neg_sum(g, &terms)?, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::tests::fixture;
    use crate::skeleton::skeletonize;

    fn plan_for(f: &crate::policy::tests::Fixture, i: usize) -> ReplyPlan {
        let p = &f.train[i];
        let sk = skeletonize(&p.reply, &f.lex).unwrap();
        ReplyPlan {
            order: sk.order,
            kw_et: sk.kw_et,
            kw_tp: sk.kw_tp,
            k_et: p.emotion_label,
            k_tp: p.topic_label,
            structure_probs: [0.25; 4],
        }
    }

    #[test]
    fn stage_roles_follow_reading_order() {
        assert_eq!(Stage::of_position(Order::Et, 0), Stage::Et);
        assert_eq!(Stage::of_position(Order::Et, 2), Stage::Tp);
        assert_eq!(Stage::of_position(Order::Te, 0), Stage::Tp);
        assert_eq!(Stage::of_position(Order::Te, 2), Stage::Et);
        assert_eq!(Stage::of_position(Order::Te, 1), Stage::Md);
        assert_eq!(Stage::of_position(Order::EOnly, 0), Stage::Et);
        assert_eq!(Stage::of_position(Order::TOnly, 0), Stage::Tp);
    }

    #[test]
    fn decoded_reply_contains_keywords_once_at_boundaries() {
        let f = fixture(60, 3);
        let mut rng = Rng::seed_from_u64(1);
        for i in 0..f.train.len().min(40) {
            let plan = plan_for(&f, i);
            let mut g = Graph::new(&f.store);
            let enc = f.policy.encoder.encode(&mut g, &f.train[i].post).unwrap();
            let mode = DecodeMode::Sample { temperature: 1.0 };
            let d = decode_reply(&mut g, &f.policy, &enc, &plan, mode, &mut rng, true).unwrap();
            let anchors = plan.anchors();
            for &kw in &anchors {
                assert_eq!(d.primary.iter().filter(|&&t| t == kw).count(), 1);
            }
            let expected_clauses = if anchors.len() == 2 { 3 } else { 2 };
            assert_eq!(d.traces.len(), expected_clauses);
            for t in &d.traces {
                assert!(t.tokens.len() <= f.policy.dims.max_clause_len);
                assert_eq!(t.truncated, t.stop_logprob.is_none());
                assert!(t.tokens.iter().all(|&w| f.policy.body.contains(w)));
            }
            let total: f64 = d
                .traces
                .iter()
                .map(|t| t.logprobs.iter().sum::<f64>() + t.stop_logprob.unwrap_or(0.0))
                .sum();
            assert!((g.scalar(d.logprob.unwrap()) - total).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_forces_boundary() {
        let mut f = fixture(40, 4);
        f.policy.dims.max_clause_len = 0;
        let plan = plan_for(&f, 0);
        let mut g = Graph::new(&f.store);
        let enc = f.policy.encoder.encode(&mut g, &f.train[0].post).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        let d = decode_reply(&mut g, &f.policy, &enc, &plan, DecodeMode::Greedy, &mut rng, true).unwrap();
        assert!(d.traces.iter().all(|t| t.truncated && t.tokens.is_empty()));
        let mut expect = vec![GO];
        expect.extend(plan.anchors());
        expect.push(EOS);
        assert_eq!(d.primary, expect);
    }

    #[test]
    fn assemble_rejects_mismatched_clauses() {
        let f = fixture(40, 4);
        let mut plan = plan_for(&f, 0);
        plan.order = Order::Et;
        plan.kw_et = Some(f.lex.keyword_ids(crate::lexicon::KeywordKind::Emotion, 0)[0]);
        plan.kw_tp = Some(f.lex.keyword_ids(crate::lexicon::KeywordKind::Topic, 0)[0]);
        let t = |position| ClauseTrace {
            stage: Stage::of_position(Order::Et, position),
            position,
            tokens: vec![],
            logprobs: vec![],
            stop_logprob: None,
            truncated: true,
            reversed: false,
            final_state: vec![],
        };
        assert!(assemble(&plan, &[t(0), t(2)]).is_err());
        assert!(assemble(&plan, &[t(0), t(0), t(2)]).is_err());
        assert!(assemble(&plan, &[t(0), t(1), t(2)]).is_ok());
    }

    #[test]
    fn severing_state_changes_later_clauses() {
        let f = fixture(60, 5);
        let i = (0..f.train.len())
            .find(|&i| plan_for(&f, i).order.two_keywords())
            .expect("two-keyword reply");
        let plan = plan_for(&f, i);
        let run = |carry| {
            let mut g = Graph::new(&f.store);
            let enc = f.policy.encoder.encode(&mut g, &f.train[i].post).unwrap();
            let mut rng = Rng::seed_from_u64(9);
            let d = decode_reply(&mut g, &f.policy, &enc, &plan, DecodeMode::Greedy, &mut rng, carry).unwrap();
            d.traces[1].final_state.clone()
        };
        assert_ne!(run(true), run(false));
    }

    #[test]
    fn clause_loss_counts_every_gold_token() {
        let f = fixture(60, 6);
        for p in f.train.iter().take(20) {
            let sk = skeletonize(&p.reply, &f.lex).unwrap();
            let mut g = Graph::new(&f.store);
            let enc = f.policy.encoder.encode(&mut g, &p.post).unwrap();
            let (l, n) = clause_loss(&mut g, &f.policy, &enc, &sk).unwrap();
            let kws = sk.kw_et.is_some() as usize + sk.kw_tp.is_some() as usize;
            // Every word except keywords, plus one stop symbol per clause.
            let clauses = if kws == 2 { 3 } else { 2 };
            assert_eq!(n, p.reply.len() - kws + clauses);
            assert!(g.scalar(l) > 0.0);
        }
    }
}
