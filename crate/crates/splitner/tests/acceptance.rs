//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each and exits nonzero if any fails.
//!
//! `cargo test -p splitner --test acceptance`

#[path = "../../core/tests/support/gradcases.rs"]
mod gradcases;
#[path = "../../core/tests/support/scoring_oracle.rs"]
mod scoring_oracle;

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitner::bench::mean_std;
use splitner::config::RunConfig;
use splitner::io::{
    load_classifier, load_detector, prediction_records, read_predictions, save_classifier, save_detector, write_conll,
    write_vocab, Metadata, ModelKind,
};
use splitner_core::corpus::{decode_tags, encode_tags, Dataset, Mention, Prefix, Tag, TagSequence};
use splitner_core::models::{
    model_vocab, Classifier, Detector, DetectorConfig, EncoderConfig, Framing, TrainConfig, Trainer, Variant,
    QUESTION_VARIANTS,
};
use splitner_core::nn::save_checkpoint;
use splitner_core::pipeline::{
    generate_synthetic_corpus, micro_f1, Counts, Mode, PipelineOutput, SyntheticConfig, System,
};
use splitner_core::subword::Vocab;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1. Codec round trip and total decoding.

fn random_spans(rng: &mut ChaCha8Rng) -> (usize, Vec<Mention>) {
    const TYPES: [&str; 3] = ["LOC", "ORG", "PER"];
    let n = rng.gen_range(1..=50);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if rng.gen_bool(0.3) {
            let end = (i + rng.gen_range(0..6)).min(n - 1);
            out.push(Mention::typed(i, end, TYPES[rng.gen_range(0..3)]));
            i = end + 1;
        } else {
            i += 1;
        }
    }
    (n, out)
}

fn random_tags(rng: &mut ChaCha8Rng) -> TagSequence {
    let n = rng.gen_range(0..=50);
    let tags = (0..n)
        .map(|_| {
            let ty = match rng.gen_range(0..3) {
                0 => None,
                1 => Some("PER".to_string()),
                _ => Some("LOC".to_string()),
            };
            Tag::new(Prefix::ALL[rng.gen_range(0..4)], ty)
        })
        .collect();
    TagSequence::from_tags(tags)
}

fn codec() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..10_000 {
        let (n, spans) = random_spans(&mut rng);
        let tags = encode_tags(&spans, n, true).map_err(fail)?;
        if decode_tags(&tags) != spans {
            return Err(format!("round trip failed on case {case}: {spans:?}"));
        }
    }
    for case in 0..10_000 {
        let tags = random_tags(&mut rng);
        let out = decode_tags(&tags);
        let ordered =
            out.iter().all(|m| m.start <= m.end && m.end < tags.len()) && out.windows(2).all(|w| w[0].end < w[1].start);
        let covered =
            tags.tags.iter().enumerate().all(|(i, t)| out.iter().any(|m| m.start <= i && i <= m.end) != t.is_outside());
        if !ordered || !covered {
            return Err(format!("decoder repair failed on case {case}: {:?}", tags.to_strings()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 10.0, format!("10000 round trips, 10000 repairs in {secs:.2}s"))
}

// 2. Scorer against an independent counter.

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Vec<Mention>> {
    let types = ["PER", "LOC", "ORG"];
    (0..rng.gen_range(0..6))
        .map(|_| {
            (0..rng.gen_range(0..5))
                .map(|_| {
                    let s = rng.gen_range(0..6);
                    Mention::typed(s, s + rng.gen_range(0..3), types[rng.gen_range(0..3)])
                })
                .collect()
        })
        .collect()
}

fn scorer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1_000 {
        let (gold, pred) = (random_corpus(&mut rng), random_corpus(&mut rng));
        for (mode, typed) in [(Mode::Typed, true), (Mode::Untyped, false)] {
            let r = micro_f1(&gold, &pred, mode);
            let (tp, fp, fn_) = scoring_oracle::brute_force(&gold, &pred, typed);
            let (p, rc, f) = scoring_oracle::scores(tp, fp, fn_);
            if r.counts != (Counts { tp, fp, fn_ }) || (r.precision, r.recall, r.f1) != (p, rc, f) {
                return Err(format!("case {case} ({mode:?}): {:?} vs oracle {:?}", r.counts, (tp, fp, fn_)));
            }
        }
    }
    let gold = vec![vec![Mention::typed(0, 0, "PER"), Mention::typed(3, 4, "LOC")]];
    let pred = vec![vec![Mention::typed(0, 0, "PER"), Mention::typed(3, 3, "LOC")]];
    let r = micro_f1(&gold, &pred, Mode::Typed);
    let err = [r.precision, r.recall, r.f1].iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    check(
        r.counts == Counts { tp: 1, fp: 1, fn_: 1 } && err < 1e-12,
        format!("1000 random cases exact; hand case F1={} (error {err:e})", r.f1),
    )
}

// 3. Gradients.

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    for (name, case) in gradcases::CASES {
        let (e64, _) = case();
        if e64 >= 1e-6 {
            return Err(format!("{name}: f64 relative error {e64:e}"));
        }
        worst = worst.max(e64);
    }
    let hand = [([1.0, 0.0], 0.0), ([0.5, 0.5], 0.2), ([0.0, 1.0], 2.0 / 3.0)];
    let dice_err = hand.iter().map(|(p, v)| (gradcases::dice_value(p, &[1.0, 0.0]) - v).abs()).fold(0.0, f64::max);
    check(
        dice_err < 1e-9,
        format!(
            "{} cases x 50 instances, worst f64 error {worst:.1e}; dice hand values error {dice_err:.1e}",
            gradcases::CASES.len()
        ),
    )
}

// 4. Encoder input counts.

fn query_counts() -> Outcome {
    let mut checked = Vec::new();
    for (seed, types, density) in [(3u64, 4usize, 1.5), (4, 6, 0.7), (5, 1, 2.0)] {
        let mut sc = SyntheticConfig::new(seed, 60);
        sc.spec = splitner_core::pipeline::TypeSpec::first(types);
        sc.density = density;
        let data = generate_synthetic_corpus(&sc).map_err(fail)?;
        let (n, t, m) = (data.len(), types, data.total_mentions());
        let vocab = model_vocab(&data, 2000, &[]).map_err(fail)?;
        let mut cfg = RunConfig::default();
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.hidden_dim = 16;
        cfg.ff_dim = 32;
        let inv = data.type_inventory.clone();
        let build = |v: Variant| Detector::new(cfg.detector(v), vocab.clone(), inv.clone(), seed);
        let det = build(Variant::SplitQaQa).map_err(fail)?;
        let cls = Classifier::new(cfg.classifier(), vocab.clone(), inv.clone(), seed).map_err(fail)?;
        let single_qa = build(Variant::SingleQa).map_err(fail)?;
        let seqtag = build(Variant::SingleSeqTag).map_err(fail)?;
        let train = [
            ("detection", det.examples(&data).map_err(fail)?.len(), n),
            ("classification", cls.examples(&data).map_err(fail)?.len(), m),
            ("single_qa", single_qa.examples(&data).map_err(fail)?.len(), n * t),
            ("single_seqtag", seqtag.examples(&data).map_err(fail)?.len(), n),
        ];
        for (what, got, want) in train {
            if got != want {
                return Err(format!("{what} training inputs {got} != {want} (N={n}, T={t})"));
            }
        }
        let split = System::split(det, cls).map_err(fail)?;
        let out = split.run(&data.sentences).map_err(fail)?;
        let found: usize = out.mentions.iter().map(Vec::len).sum();
        let inference = [
            ("split", out.encoder_inputs, n + found),
            (
                "single_qa",
                System::single(single_qa).map_err(fail)?.run(&data.sentences).map_err(fail)?.encoder_inputs,
                n * t,
            ),
            (
                "single_seqtag",
                System::single(seqtag).map_err(fail)?.run(&data.sentences).map_err(fail)?.encoder_inputs,
                n,
            ),
        ];
        for (what, got, want) in inference {
            if got != want {
                return Err(format!("{what} inference inputs {got} != {want} (N={n}, T={t})"));
            }
        }
        checked.push(format!("N={n} T={t} M={m}"));
    }
    Ok(format!("exact on {}", checked.join("; ")))
}

// 5. Overfit, with the trained models kept for 7 and 9.

struct Trained {
    cfg: RunConfig,
    train: Dataset,
    vocab: Vocab,
    detector: Detector,
    classifier: Classifier,
}

fn train_split(
    cfg: &RunConfig,
    train: &Dataset,
    vocab: &Vocab,
    epochs: usize,
    mut each: impl FnMut(usize, &Detector, &Classifier) -> bool,
) -> splitner_core::Result<(Detector, Classifier, usize)> {
    let types = train.type_inventory.clone();
    let mut det = Detector::new(cfg.detector(cfg.variant), vocab.clone(), types.clone(), cfg.seed)?;
    let mut cls = Classifier::new(cfg.classifier(), vocab.clone(), types, cfg.seed.wrapping_add(1))?;
    let mut td = Trainer::new(cfg.training(0));
    let mut tc = Trainer::new(cfg.training(1));
    for epoch in 1..=epochs {
        td.epoch(&mut det, train)?;
        tc.epoch(&mut cls, train)?;
        if each(epoch, &det, &cls) {
            return Ok((det, cls, epoch));
        }
    }
    Ok((det, cls, epochs))
}

fn typed_f1(system: &System, data: &Dataset) -> splitner_core::Result<(f64, PipelineOutput)> {
    let out = system.run(&data.sentences)?;
    Ok((micro_f1(&data.gold_lists(), &out.plain(), Mode::Typed).f1, out))
}

fn same_output(a: &PipelineOutput, b: &PipelineOutput) -> bool {
    a.encoder_inputs == b.encoder_inputs
        && a.mentions.len() == b.mentions.len()
        && a.mentions.iter().zip(&b.mentions).all(|(x, y)| {
            x.len() == y.len()
                && x.iter().zip(y).all(|(p, q)| p.mention == q.mention && p.score.to_bits() == q.score.to_bits())
        })
}

fn overfit(slot: &mut Option<Trained>) -> Outcome {
    let cfg = RunConfig { seed: 7, ..RunConfig::default() };
    let train = generate_synthetic_corpus(&cfg.synthetic()).map_err(fail)?;
    let vocab = model_vocab(&train, cfg.vocab_size, &[&cfg.question_text]).map_err(fail)?;
    let start = Instant::now();
    let mut best = 0.0;
    let (det, cls, epochs) = train_split(&cfg, &train, &vocab, 50, |epoch, d, c| {
        if epoch < 3 {
            return false;
        }
        let system = System::split(d.clone(), c.clone()).expect("matching parts");
        best = typed_f1(&system, &train).expect("inference").0;
        best >= 0.95
    })
    .map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();

    let (det2, cls2, _) = train_split(&cfg, &train, &vocab, epochs, |_, _, _| false).map_err(fail)?;
    let bytes_equal = save_checkpoint(&det.store) == save_checkpoint(&det2.store)
        && save_checkpoint(&cls.store) == save_checkpoint(&cls2.store);
    let (_, out1) = typed_f1(&System::split(det.clone(), cls.clone()).map_err(fail)?, &train).map_err(fail)?;
    let (_, out2) = typed_f1(&System::split(det2, cls2).map_err(fail)?, &train).map_err(fail)?;
    let deterministic = bytes_equal && same_output(&out1, &out2);

    *slot = Some(Trained { cfg, train: train.clone(), vocab, detector: det, classifier: cls });
    check(
        best >= 0.95 && secs < 300.0 && deterministic,
        format!(
            "{} sentences, {} types: typed F1 {best:.3} after {epochs} epochs in {secs:.1}s; rerun identical: {deterministic}",
            train.len(),
            train.type_inventory.len()
        ),
    )
}

// 6. Features on a pattern-dominant held-out split.

fn detection_f1(det: &Detector, data: &Dataset) -> splitner_core::Result<f64> {
    let pred = data.sentences.iter().map(|s| det.detect_spans(s)).collect::<splitner_core::Result<Vec<_>>>()?;
    Ok(micro_f1(&data.gold_lists(), &pred, Mode::Untyped).f1)
}

fn train_detector(
    cfg: DetectorConfig,
    vocab: &Vocab,
    train: &Dataset,
    seed: u64,
    lr: f64,
    epochs: usize,
) -> splitner_core::Result<Detector> {
    let mut det = Detector::new(cfg, vocab.clone(), train.type_inventory.clone(), seed)?;
    let mut tcfg = TrainConfig::new(seed);
    tcfg.optimizer.lr = lr;
    let mut trainer = Trainer::new(tcfg);
    for _ in 0..epochs {
        trainer.epoch(&mut det, train)?;
    }
    Ok(det)
}

/// Learning rate of the detector-only experiments.
const DETECTOR_LR: f64 = 1e-3;

fn features() -> Outcome {
    // Every entity form is effectively unique, so only its shape generalizes,
    // and the held-out split uses an unseen lexicon. The vocabulary covers the
    // text of both splits, as a fixed vocabulary built from unlabeled text would.
    let mut a = SyntheticConfig::new(10, 200);
    a.lexicon_size = 5000;
    let mut b = SyntheticConfig::new(11, 200);
    b.lexicon_size = 5000;
    b.lexicon_seed = 1;
    let train = generate_synthetic_corpus(&a).map_err(fail)?;
    let test = generate_synthetic_corpus(&b).map_err(fail)?;
    let mut text = train.clone();
    text.sentences.extend(test.sentences.iter().cloned());
    let vocab = model_vocab(&text, 8000, &[]).map_err(fail)?;
    let enc = EncoderConfig { hidden_dim: 64, ff_dim: 256, ..EncoderConfig::desk() };

    let mut wins = 0;
    let mut gains = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let with =
            train_detector(DetectorConfig::new(enc.clone()), &vocab, &train, seed, DETECTOR_LR, 12).map_err(fail)?;
        let without =
            train_detector(DetectorConfig::new(enc.clone()).without_features(), &vocab, &train, seed, DETECTOR_LR, 12)
                .map_err(fail)?;
        let (fw, fo) = (detection_f1(&with, &test).map_err(fail)?, detection_f1(&without, &test).map_err(fail)?);
        wins += usize::from(fw >= fo);
        gains.push(fw - fo);
        lines.push(format!("{fw:.3} vs {fo:.3}"));
    }
    let (mean, _) = mean_std(&gains);
    check(
        wins == 3 && mean > 0.0,
        format!("with vs without features: {}; {wins}/3 seeds, mean gain {mean:+.3}", lines.join(", ")),
    )
}

// 7. Split versus Single(QA) cost.

fn cost(trained: &Trained) -> Outcome {
    let t = trained.train.type_inventory.len();
    let mut sc = SyntheticConfig::new(30, 200);
    sc.density = 0.9;
    let corpus = generate_synthetic_corpus(&sc).map_err(fail)?;
    let types = corpus.type_inventory.clone();
    let cfg = &trained.cfg;
    let single =
        Detector::new(cfg.detector(Variant::SingleQa), trained.vocab.clone(), types.clone(), cfg.seed).map_err(fail)?;
    let split_train = trained.detector.examples(&corpus).map_err(fail)?.len()
        + trained.classifier.examples(&corpus).map_err(fail)?.len();
    let single_train = single.examples(&corpus).map_err(fail)?.len();
    let factor = single_train as f64 / split_train as f64;

    let test = Dataset { sentences: corpus.sentences[..100].to_vec(), ..corpus.clone() };
    let split = System::split(trained.detector.clone(), trained.classifier.clone()).map_err(fail)?;
    let single = System::single(single).map_err(fail)?;
    let (mut ts, mut tq) = (Vec::new(), Vec::new());
    for run in 0..10 {
        let time = |s: &System, into: &mut Vec<f64>| -> splitner_core::Result<()> {
            let start = Instant::now();
            s.run(&test.sentences)?;
            into.push(start.elapsed().as_secs_f64());
            Ok(())
        };
        if run % 2 == 0 {
            time(&split, &mut ts).map_err(fail)?;
            time(&single, &mut tq).map_err(fail)?;
        } else {
            time(&single, &mut tq).map_err(fail)?;
            time(&split, &mut ts).map_err(fail)?;
        }
    }
    let ((ms, ss), (mq, sq)) = (mean_std(&ts), mean_std(&tq));
    check(
        t >= 4 && ms < mq && factor >= t as f64 / 2.0,
        format!(
            "T={t}: inference split {ms:.3}±{ss:.3}s vs single_qa {mq:.3}±{sq:.3}s over 10 runs; training inputs {single_train} vs {split_train} (factor {factor:.2}, need {:.1})",
            t as f64 / 2.0
        ),
    )
}

// 8. Question text ablation.

fn questions() -> Outcome {
    let mut a = SyntheticConfig::new(20, 200);
    a.lexicon_size = 10;
    let mut b = SyntheticConfig::new(21, 200);
    b.lexicon_size = 10;
    let train = generate_synthetic_corpus(&a).map_err(fail)?;
    let test = generate_synthetic_corpus(&b).map_err(fail)?;
    let vocab = model_vocab(&train, 2000, &[]).map_err(fail)?;
    let mut per_variant = vec![Vec::new(); QUESTION_VARIANTS.len()];
    let mut worst_spread = 0.0f64;
    for seed in 0..2u64 {
        let mut row = Vec::new();
        for (i, q) in QUESTION_VARIANTS.iter().enumerate() {
            let mut cfg = DetectorConfig::new(EncoderConfig::desk());
            cfg.framing = Framing::Question(q.to_string());
            let det = train_detector(cfg, &vocab, &train, seed, DETECTOR_LR, 5).map_err(fail)?;
            let f = detection_f1(&det, &test).map_err(fail)?;
            per_variant[i].push(f);
            row.push(f);
        }
        let spread = row.iter().cloned().fold(f64::MIN, f64::max) - row.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max(spread);
    }
    let means: Vec<f64> = per_variant.iter().map(|v| mean_std(v).0).collect();
    let mean_spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
    let shown: Vec<String> = means.iter().map(|m| format!("{:.1}", 100.0 * m)).collect();
    check(
        worst_spread < 0.03 && mean_spread < 0.03,
        format!(
            "detection F1 per question [{}]; spread within a seed {:.2} points, of means {:.2} points",
            shown.join(", "),
            100.0 * worst_spread,
            100.0 * mean_spread
        ),
    )
}

// 9. Checkpoints.

fn checkpoints(trained: &Trained) -> Outcome {
    let dir = tempfile::tempdir().map_err(fail)?;
    let p = |name: &str| dir.path().join(name);
    let cfg = &trained.cfg;

    let mut fresh =
        Detector::new(cfg.detector(cfg.variant), trained.vocab.clone(), trained.train.type_inventory.clone(), 99)
            .map_err(fail)?;
    let first = save_checkpoint(&trained.detector.store);
    fresh.store.restore(&first).map_err(fail)?;
    let mut fresh_cls =
        Classifier::new(cfg.classifier(), trained.vocab.clone(), trained.train.type_inventory.clone(), 99)
            .map_err(fail)?;
    let first_cls = save_checkpoint(&trained.classifier.store);
    fresh_cls.store.restore(&first_cls).map_err(fail)?;
    let stable = save_checkpoint(&fresh.store) == first && save_checkpoint(&fresh_cls.store) == first_cls;

    write_vocab(&p("vocab.txt"), &trained.vocab).map_err(fail)?;
    let meta = |kind| Metadata {
        kind,
        variant: cfg.variant,
        vocab: p("vocab.txt"),
        types: trained.train.type_inventory.clone(),
        config: cfg.clone(),
    };
    let mut cls_meta = meta(ModelKind::Classifier);
    cls_meta.config.seed = cfg.seed.wrapping_add(1);
    save_detector(&p("detector.ckpt"), &trained.detector, &meta(ModelKind::Detector)).map_err(fail)?;
    save_classifier(&p("classifier.ckpt"), &trained.classifier, &cls_meta).map_err(fail)?;
    let (d, _) = load_detector(&p("detector.ckpt")).map_err(fail)?;
    let (c, _) = load_classifier(&p("classifier.ckpt")).map_err(fail)?;
    let file_stable = save_checkpoint(&d.store) == first && save_checkpoint(&c.store) == first_cls;

    let in_run = System::split(trained.detector.clone(), trained.classifier.clone())
        .map_err(fail)?
        .run(&trained.train.sentences)
        .map_err(fail)?;
    let loaded = System::split(d, c).map_err(fail)?.run(&trained.train.sentences).map_err(fail)?;
    let same_in_process = same_output(&in_run, &loaded);

    // A separate process restores the checkpoints and predicts.
    write_conll(&p("test.conll"), &trained.train).map_err(fail)?;
    let conf = "test = test.conll\ndetector_checkpoint = detector.ckpt\nclassifier_checkpoint = classifier.ckpt\n";
    std::fs::write(p("predict.conf"), conf).map_err(fail)?;
    let status = Command::new(env!("CARGO_BIN_EXE_splitner"))
        .args(["predict", "--config", "predict.conf", "--out", "out"])
        .current_dir(dir.path())
        .output()
        .map_err(fail)?;
    if !status.status.success() {
        return Err(format!("predict failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let records = read_predictions(&p("out/predictions.jsonl")).map_err(fail)?;
    let same_cross_run = records == prediction_records(&trained.train.sentences, &in_run);

    check(
        stable && file_stable && same_in_process && same_cross_run,
        format!(
            "save-load-save identical: {stable} (memory), {file_stable} (files); predictions identical: {same_in_process} (in process), {same_cross_run} (separate process)"
        ),
    )
}

fn main() -> ExitCode {
    let mut trained = None;
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id} {name}: {tag} ({secs:.1}s) {detail}");
        results.push((id, name, outcome, secs));
    };
    run(1, "codec", &mut codec);
    run(2, "scorer", &mut scorer);
    run(3, "gradients", &mut gradients);
    run(4, "query counts", &mut query_counts);
    run(5, "overfit", &mut || overfit(&mut trained));
    run(6, "features", &mut features);
    run(7, "cost", &mut || trained.as_ref().map_or(Err("needs the criterion 5 models".into()), cost));
    run(8, "questions", &mut questions);
    run(9, "checkpoints", &mut || trained.as_ref().map_or(Err("needs the criterion 5 models".into()), checkpoints));
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
