//! `emoedit` command-line tool. Every subcommand reads and writes inside
//! one working directory (`--out`).

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use emoedit::config::Config;
use emoedit::corpus::Pair;
use emoedit::lexicon::Lexicon;
use emoedit::metrics::{eval_emotion_accuracy, eval_perplexity, DiversityMatrix};
use emoedit::pipeline::{
    fit_backward, fit_classifier, fit_policy, fit_topics, load_config, rl_items, scorers, template_index, Workspace,
};
use emoedit::policy::{GenOptions, Policy, Rollout};
use emoedit::reward::{RewardModel, Scorers, CSV_HEADER};
use emoedit::synth::{gen_synthetic, SynthConfig};
use emoedit::train::{train_rl, RlOptions};
use emoedit::vocab::TokenSeq;
use numcore::{ParamStore, Rng};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "emoedit",
    version,
    about = "Emotional reply generation with keyword planning and template editing"
)]
struct Cli {
    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory for corpus, models and reports.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a synthetic corpus with its keyword dictionaries.
    GenCorpus {
        #[arg(long, default_value_t = 1500)]
        n_pairs: usize,
        #[arg(long, default_value_t = 8)]
        n_topics: usize,
        #[arg(long, default_value_t = 7)]
        n_emotions: usize,
    },
    /// Build the vocabulary from the corpus and dictionaries.
    BuildVocab,
    /// Fit the topic model used by the topic reward.
    TrainLda,
    /// Fit the emotion classifier used by the emotion reward.
    TrainEmoclf,
    /// Maximum-likelihood pretraining of the policy and the backward model.
    Pretrain,
    /// Policy-gradient fine-tuning.
    TrainRl {
        /// Checkpoint to start from.
        #[arg(long, default_value = "policy")]
        from: String,
        /// Name of the resulting checkpoint.
        #[arg(long, default_value = "policy-rl")]
        to: String,
        #[arg(long)]
        freeze_editor: bool,
    },
    /// Reply to one post.
    Generate {
        post: String,
        #[arg(long)]
        emotion: String,
        /// Topic label; predicted from the post when omitted.
        #[arg(long)]
        topic: Option<String>,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        verbose: bool,
    },
    /// Interactive session on the terminal; `:quit` leaves.
    Chat {
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Perplexity and emotion accuracy on the held-out split.
    Eval {
        #[command(flatten)]
        gen: GenArgs,
        /// Also write per-stage rewards of every reply as CSV.
        #[arg(long)]
        rewards: Option<PathBuf>,
    },
    /// Per-position diversity of held-out replies for one or more checkpoints.
    Diversity {
        #[arg(long = "checkpoint", default_values_t = vec!["policy".to_string()])]
        checkpoints: Vec<String>,
        #[arg(long)]
        no_edit: bool,
    },
}

#[derive(Args, Debug, Clone)]
struct GenArgs {
    /// Policy checkpoint; defaults to `policy-rl` when present, else `policy`.
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    no_edit: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<emoedit::Error>()) {
        Some(emoedit::Error::Config(_)) => 2,
        Some(err) if err.is_numeric() => 4,
        Some(_) => 3,
        None if e.chain().any(|c| c.is::<Usage>()) => 2,
        None => 3,
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let ws = Workspace::new(&cli.out);
    match cli.cmd {
        Cmd::GenCorpus {
            n_pairs,
            n_topics,
            n_emotions,
        } => {
            let corpus = gen_synthetic(&SynthConfig {
                n_pairs,
                n_topics,
                n_emotions,
                seed: cfg.seed,
            })?;
            corpus.write(&ws.dir)?;
            println!(
                "wrote {} train and {} test pairs to {}",
                corpus.train.len(),
                corpus.test.len(),
                ws.dir.display()
            );
        }
        Cmd::BuildVocab => {
            let lex = ws.build_vocab()?;
            println!("vocabulary: {} entries", lex.vocab_size());
        }
        Cmd::TrainLda => {
            let (lex, train, _) = load_data(&ws, &cfg)?;
            let (tm, report) = fit_topics(&cfg, &lex, &train)?;
            ws.save_topics(&tm)?;
            write_json(&ws.path("lda_report.json"), &report)?;
            println!(
                "log-likelihood {:.4} -> {:.4}",
                report.log_likelihood.first().map_or(f64::NAN, |p| p.1),
                report.log_likelihood.last().map_or(f64::NAN, |p| p.1)
            );
        }
        Cmd::TrainEmoclf => {
            let (lex, train, _) = load_data(&ws, &cfg)?;
            let (clf, report) = fit_classifier(&cfg, &lex, &train)?;
            ws.save_classifier(&clf)?;
            write_json(&ws.path("clf_report.json"), &report)?;
            println!("holdout accuracy {:.4}", report.holdout_accuracy);
        }
        Cmd::Pretrain => {
            let (lex, train, test) = load_data(&ws, &cfg)?;
            let (dims, bstore, bcurve) = fit_backward(&cfg, &lex, &train)?;
            ws.save_backward(&dims, &bstore)?;
            let (policy, store, report, _, _) = fit_policy(&cfg, &lex, &train, &test)?;
            ws.save_policy("policy", &policy, &store)?;
            fs::write(ws.path("mle.csv"), report.to_csv())?;
            write_json(&ws.path("backward_perplexity.json"), &bcurve)?;
            println!("perplexity by epoch: {:?}", report.perplexity);
        }
        Cmd::TrainRl {
            from,
            to,
            freeze_editor,
        } => {
            let (lex, train, test) = load_data(&ws, &cfg)?;
            let (policy, mut store) = load_policy(&ws, &from, &lex)?;
            let judges = load_scorers(&ws, &cfg, &policy, &store)?;
            let items = rl_items(&train, &judges.topics);
            let index = template_index(&train, &lex);
            let mut opts = RlOptions::from_config(&cfg);
            opts.freeze_editor |= freeze_editor;
            opts.checkpoint_dir = Some(ws.path(&format!("{to}-steps")));
            let probe: Vec<_> = test.iter().map(|p| (p.post.clone(), p.reply.clone())).collect();
            let report = train_rl(&policy, &mut store, &items, Some(&index), &judges, &opts, &probe)?;
            ws.save_policy(&to, &policy, &store)?;
            fs::write(ws.path(&format!("{to}.csv")), report.to_csv())?;
            let skipped = report.rows.iter().filter(|r| r.skipped).count();
            println!("{} steps, {skipped} skipped; saved `{to}`", report.rows.len());
        }
        Cmd::Generate {
            post,
            emotion,
            topic,
            gen,
            verbose,
        } => {
            let (lex, train, _) = load_data(&ws, &cfg)?;
            let (policy, store) = load_policy(&ws, &gen.name(&ws), &lex)?;
            let topics = ws.topics()?;
            let index = template_index(&train, &lex);
            let k_et = emotion_label(&lex, &emotion)?;
            let tokens = lex.vocab.tokenize(&post)?;
            let k_tp = match topic {
                Some(t) => lex
                    .dicts
                    .topic_index(&t)
                    .ok_or_else(|| usage(format!("unknown topic label `{t}`")))?,
                None => topics.predict_post_topic(&tokens),
            };
            let mut rng = Rng::seed_from_u64(cfg.seed);
            let r = policy.generate(&store, &tokens, k_et, k_tp, Some(&index), &gen.options(&cfg), &mut rng)?;
            if verbose {
                print_details(&lex, &r, None);
            }
            println!("{}", lex.vocab.detokenize(&r.final_reply));
        }
        Cmd::Chat { gen } => {
            let (lex, train, _) = load_data(&ws, &cfg)?;
            let (policy, store) = load_policy(&ws, &gen.name(&ws), &lex)?;
            let judges = load_scorers(&ws, &cfg, &policy, &store)?;
            let index = template_index(&train, &lex);
            chat(&cfg, &lex, &policy, &store, &judges, &index, &gen.options(&cfg))?;
        }
        Cmd::Eval { gen, rewards } => {
            let (lex, train, test) = load_data(&ws, &cfg)?;
            let name = gen.name(&ws);
            let (policy, store) = load_policy(&ws, &name, &lex)?;
            let judges = load_scorers(&ws, &cfg, &policy, &store)?;
            let index = template_index(&train, &lex);
            let items = rl_items(&test, &judges.topics);
            let ppl = eval_perplexity(&policy, &store, &test)?;
            let ev = eval_emotion_accuracy(
                &policy,
                &store,
                &judges.classifier,
                &items,
                Some(&index),
                &gen.options(&cfg),
                cfg.seed,
            )?;
            if let Some(path) = rewards {
                let mut csv = format!("{CSV_HEADER}\n");
                for (i, (it, r)) in items.iter().zip(&ev.rollouts).enumerate() {
                    for row in judges.score(&it.post, r)?.csv_rows(i) {
                        csv.push_str(&row);
                        csv.push('\n');
                    }
                }
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
            let summary = json!({
                "checkpoint": name,
                "edit": !gen.no_edit,
                "posts": items.len(),
                "perplexity": ppl,
                "emotion_accuracy": ev.accuracy,
                "mean_r3_final": ev.mean_r3_final,
                "mean_r3_primary": ev.mean_r3_primary,
                "edited_fraction": ev.edited_fraction,
            });
            let file = if gen.no_edit { "eval-noedit.json" } else { "eval.json" };
            write_json(&ws.path(file), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Diversity { checkpoints, no_edit } => {
            let (lex, train, test) = load_data(&ws, &cfg)?;
            let topics = ws.topics()?;
            let index = template_index(&train, &lex);
            let items = rl_items(&test, &topics);
            if items.len() < 100 {
                bail!(usage(format!(
                    "diversity needs at least 100 held-out posts, found {}",
                    items.len()
                )));
            }
            let opts = GenOptions {
                edit: !no_edit,
                editor: cfg.editor,
                ..GenOptions::default()
            };
            let mut m = DiversityMatrix::new();
            for name in &checkpoints {
                let (policy, store) = load_policy(&ws, name, &lex)?;
                let mut replies: Vec<TokenSeq> = Vec::with_capacity(items.len());
                for (i, it) in items.iter().enumerate() {
                    let mut rng = Rng::derive(cfg.seed, i as u64);
                    let r = policy.generate(&store, &it.post, it.k_et, it.k_tp, Some(&index), &opts, &mut rng)?;
                    replies.push(r.final_reply);
                }
                m.push(name.clone(), &replies, lex.vocab_size());
            }
            fs::write(ws.path("diversity.csv"), m.to_csv())?;
            fs::write(ws.path("diversity.pgm"), m.to_pgm())?;
            for (i, l) in m.labels.iter().enumerate() {
                println!("{l}: mean diversity {:.4}", m.mean(i));
            }
        }
    }
    Ok(())
}

impl GenArgs {
    fn name(&self, ws: &Workspace) -> String {
        match &self.checkpoint {
            Some(n) => n.clone(),
            None if ws.has("policy-rl.json") => "policy-rl".into(),
            None => "policy".into(),
        }
    }

    fn options(&self, cfg: &Config) -> GenOptions {
        GenOptions {
            edit: !self.no_edit,
            editor: cfg.editor,
            ..GenOptions::default()
        }
    }
}

fn load_data(ws: &Workspace, cfg: &Config) -> anyhow::Result<(Lexicon, Vec<Pair>, Vec<Pair>)> {
    let lex = ws
        .lexicon()
        .with_context(|| format!("loading vocabulary from {} (run build-vocab first)", ws.dir.display()))?;
    let (train, test) = ws.pairs(&lex, cfg)?;
    Ok((lex, train, test))
}

fn load_policy(ws: &Workspace, name: &str, lex: &Lexicon) -> anyhow::Result<(Policy, ParamStore)> {
    if !ws.has(&format!("{name}.json")) {
        return Err(usage(format!("no checkpoint `{name}` in {}", ws.dir.display())));
    }
    Ok(ws.policy(name, lex)?)
}

fn load_scorers(ws: &Workspace, cfg: &Config, policy: &Policy, store: &ParamStore) -> anyhow::Result<Scorers> {
    let backward = ws.backward().context("loading backward model (run pretrain first)")?;
    let topics = ws.topics().context("loading topic model (run train-lda first)")?;
    let clf = ws
        .classifier()
        .context("loading emotion classifier (run train-emoclf first)")?;
    Ok(scorers(cfg, policy, store, backward, topics, clf))
}

fn emotion_label(lex: &Lexicon, label: &str) -> anyhow::Result<usize> {
    lex.dicts.emotion_index(label).ok_or_else(|| {
        usage(format!(
            "unknown emotion `{label}`; expected one of {}",
            lex.dicts.emotion_labels().join(", ")
        ))
    })
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_details(lex: &Lexicon, r: &Rollout, out: Option<&mut dyn Write>) {
    let plan = json!({
        "order": r.plan.order.name(),
        "emotion_keyword": r.plan.kw_et.map(|t| lex.vocab.token(t)),
        "topic_keyword": r.plan.kw_tp.map(|t| lex.vocab.token(t)),
        "structure_probs": r.plan.structure_probs,
    });
    let mut lines = vec![
        format!("plan: {plan}"),
        format!("primary: {}", lex.vocab.detokenize(&r.primary)),
    ];
    match &r.template {
        Some(m) => lines.push(format!(
            "template: {} (tier {}, d_J {:.4})",
            lex.vocab.detokenize(&m.template),
            m.tier,
            m.distance
        )),
        None => lines.push("template: none".into()),
    }
    if let Some(ev) = &r.edit {
        lines.push(format!("edit: |f| {:.4}, |z| {:.4}", ev.f_norm, ev.z_norm));
    }
    lines.push(format!("edited: {}", r.edited));
    let text = lines.join("\n");
    match out {
        Some(w) => {
            let _ = writeln!(w, "{text}");
        }
        None => println!("{text}"),
    }
}

fn chat(
    cfg: &Config,
    lex: &Lexicon,
    policy: &Policy,
    store: &ParamStore,
    judges: &Scorers,
    index: &emoedit::editor::TemplateIndex,
    opts: &GenOptions,
) -> anyhow::Result<()> {
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut out = io::stdout().lock();
    let mut turn = 0u64;
    loop {
        write!(out, "post> ")?;
        out.flush()?;
        let Some(post) = lines.next().transpose()? else {
            return Ok(());
        };
        let post = post.trim().to_string();
        if post == ":quit" {
            return Ok(());
        }
        if post.is_empty() {
            continue;
        }
        let k_et = loop {
            write!(out, "emotion> ")?;
            out.flush()?;
            let Some(label) = lines.next().transpose()? else {
                return Ok(());
            };
            let label = label.trim();
            if label == ":quit" {
                return Ok(());
            }
            match emotion_label(lex, label) {
                Ok(k) => break k,
                Err(e) => writeln!(out, "{e}")?,
            }
        };
        let tokens = lex.vocab.tokenize(&post)?;
        let k_tp = judges.topics.predict_post_topic(&tokens);
        let mut rng = Rng::derive(cfg.seed, turn);
        turn += 1;
        let r = policy.generate(store, &tokens, k_et, k_tp, Some(index), opts, &mut rng)?;
        print_details(lex, &r, Some(&mut out));
        writeln!(out, "reply: {}", lex.vocab.detokenize(&r.final_reply))?;
        let rb = judges.score(&tokens, &r).map_err(|e| anyhow!(e))?;
        for s in &rb.stages {
            writeln!(
                out,
                "  {:<5} r1 {:>9.4}  r2 {:>9.4}  r3 {:>9.4}  mixed {:>9.4}",
                s.stage.name(),
                s.r1,
                s.r2,
                s.r3,
                s.mixed
            )?;
        }
        writeln!(out, "  R {:.4}", rb.total)?;
    }
}
