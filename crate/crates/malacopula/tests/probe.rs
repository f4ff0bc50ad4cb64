// Temporary diagnostics; not part of the suite.

use malacopula::*;

#[test]
#[ignore]
fn corpus_baseline_numbers() {
    let spec = CorpusSpec::default();
    let corpus = generate_corpus(&spec).unwrap();
    let f_test = Embedder::new(EmbedderConfig::evaluation_default()).unwrap();
    let margin = corpus_health(&corpus, &f_test).unwrap();
    println!("health margin: {margin:.4}");

    let report = evaluate_protocol(&corpus.protocol(), &corpus, &f_test, None).unwrap();
    println!(
        "baseline pooled EER: {:.4} (targets {}, spoofs {})",
        report.pooled_eer, report.n_target_trials, report.n_spoof_trials
    );
    for (attack, eval) in &report.per_attack {
        println!("  {attack}: EER {:.4} over {} spoofs", eval.eer, eval.n_spoof_trials);
    }
}

#[test]
#[ignore]
fn full_experiment_probe() {
    use malacopula::io::config::{parse_attacks, parse_grid, ExperimentConfig};

    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.corpus_dir = dir.path().join("corpus");
    config.output_dir = dir.path().join("out");
    if let Ok(spec) = std::env::var("PROBE_ATTACKS") {
        config.corpus.attacks = parse_attacks(&spec).unwrap();
    }
    if let Ok(spec) = std::env::var("PROBE_GRID") {
        config.grid = parse_grid(&spec).unwrap();
    } else {
        config.grid = vec![(257, 5)];
    }
    let t0 = std::time::Instant::now();
    let (corpus, _) = generate_stage(&config).unwrap();
    let f_test = Embedder::new(EmbedderConfig::evaluation_default()).unwrap();
    println!("corpus generated in {:?}", t0.elapsed());
    println!("health margin: {:.4}", corpus_health(&corpus, &f_test).unwrap());

    let t1 = std::time::Instant::now();
    let summary = train_stage(&config, false).unwrap();
    println!(
        "trained {} cells in {:?} ({} failures)",
        summary.outcomes.len(),
        t1.elapsed(),
        summary.failures.len()
    );
    for f in &summary.failures {
        println!("  FAILED {}: {}", f.0.identity(), f.1);
    }
    for o in &summary.outcomes {
        println!(
            "  {}  epoch {:2}  signedW {:+.5}  final_loss {:.6}",
            o.cell.identity(),
            o.selected_epoch,
            o.signed_wasserstein,
            o.final_mean_loss
        );
    }

    let t2 = std::time::Instant::now();
    let outcome = score_stage(&config, true).unwrap();
    println!("scoring took {:?}", t2.elapsed());
    for w in &outcome.warnings {
        println!("  warning: {w}");
    }
    let table = report_stage(&config.output_dir).unwrap();
    println!("{table}");
    let baseline = &outcome.conditions[0].summary;
    for cond in &outcome.conditions[1..] {
        println!(
            "{}: pooled rise {:+.2}pp",
            cond.condition,
            (cond.summary.pooled_eer - baseline.pooled_eer) * 100.0
        );
        for (attack, eval) in &cond.summary.per_attack {
            let base = baseline.per_attack[attack].eer;
            println!(
                "  {attack}: {:.4} -> {:.4} ({:+.2}pp)",
                base,
                eval.eer,
                (eval.eer - base) * 100.0
            );
        }
    }
}

#[test]
#[ignore]
fn single_cell_training_probe() {
    let mut spec = CorpusSpec::default();
    if let Ok(text) = std::env::var("PROBE_ATTACKS") {
        spec.attacks = malacopula::io::config::parse_attacks(&text).unwrap();
    }
    let corpus = generate_corpus(&spec).unwrap();
    let f_a = Embedder::new(EmbedderConfig::optimization_default()).unwrap();
    let f_b = Embedder::new(EmbedderConfig::selection_default()).unwrap();
    let f_test = Embedder::new(EmbedderConfig::evaluation_default()).unwrap();

    let speaker = std::env::var("PROBE_SPEAKER").unwrap_or_else(|_| "S01".into());
    let attack = std::env::var("PROBE_ATTACK").unwrap_or_else(|_| "A01".into());
    let (speaker, attack) = (speaker.as_str(), attack.as_str());
    let spoofs: Vec<Signal> = corpus
        .utterances
        .iter()
        .filter(|u| {
            u.record.speaker_id == speaker && u.record.attack_id.as_deref() == Some(attack)
        })
        .map(|u| u.signal.clone())
        .collect();
    let enrol: Vec<Signal> = corpus
        .utterances
        .iter()
        .filter(|u| u.record.speaker_id == speaker && u.record.role == UtteranceRole::Enrol)
        .map(|u| u.signal.clone())
        .collect();
    let targets: Vec<Signal> = corpus
        .utterances
        .iter()
        .filter(|u| u.record.speaker_id == speaker && u.record.role == UtteranceRole::Target)
        .map(|u| u.signal.clone())
        .collect();
    println!("spoofs {}, enrol {}, targets {}", spoofs.len(), enrol.len(), targets.len());

    let enrol_emb_a: Vec<Vec<f64>> =
        enrol.iter().map(|s| f_a.extract(s).unwrap()).collect();
    let target_a = average_enrolment(&enrol_emb_a).unwrap();

    let epochs: usize = std::env::var("PROBE_EPOCHS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(20);
    let lr: f64 = std::env::var("PROBE_LR")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1e-3);
    let cfg = TrainingConfig {
        epochs,
        learning_rate: lr,
        branches: 5,
        filter_len: 257,
        seed: derive_seed(1234, "probe"),
        ..TrainingConfig::default()
    };
    let t0 = std::time::Instant::now();
    let checkpoints = train_filter(&spoofs, &target_a, &cfg, &f_a).unwrap();
    println!("training {epochs} epochs took {:?}", t0.elapsed());
    for ck in checkpoints.iter().step_by(4) {
        println!("  epoch {:2}  mean_loss {:.6}", ck.epoch, ck.mean_loss);
    }
    println!("  last epoch {:2}  mean_loss {:.6}", checkpoints.last().unwrap().epoch, checkpoints.last().unwrap().mean_loss);

    let (best, diags) = select_best(&checkpoints, &spoofs, &targets, &enrol, &f_b).unwrap();
    println!("selected epoch {} of {}", best.epoch, checkpoints.len());
    for d in diags.iter().step_by(4) {
        println!(
            "  epoch {:2}  signedW {:+.5}  spoof_med {:.5}  target_med {:.5}",
            d.epoch, d.signed_wasserstein, d.spoof_median, d.target_median
        );
    }

    // Transfer check under f_test for this one cell.
    let enrol_emb_t: Vec<Vec<f64>> =
        enrol.iter().map(|s| f_test.extract(s).unwrap()).collect();
    let enrol_t = average_enrolment(&enrol_emb_t).unwrap();
    let mean_cos = |signals: &[Signal], filter: Option<&MalacopulaFilter>| -> f64 {
        signals
            .iter()
            .map(|s| {
                let sig = match filter {
                    Some(f) => malacopula_apply(s, f).unwrap(),
                    None => s.clone(),
                };
                cosine_similarity(&f_test.extract(&sig).unwrap(), &enrol_t).unwrap()
            })
            .sum::<f64>()
            / signals.len() as f64
    };
    println!("f_test mean spoof cos baseline: {:.5}", mean_cos(&spoofs, None));
    println!("f_test mean spoof cos filtered: {:.5}", mean_cos(&spoofs, Some(&best.filter)));
    println!("f_test mean target cos:         {:.5}", mean_cos(&targets, None));
    let mut target_scores: Vec<f64> = targets
        .iter()
        .map(|s| cosine_similarity(&f_test.extract(s).unwrap(), &enrol_t).unwrap())
        .collect();
    target_scores.sort_by(f64::total_cmp);
    println!("f_test target scores: {target_scores:.5?}");
    let mut spoof_scores: Vec<f64> = spoofs
        .iter()
        .map(|s| {
            let sig = malacopula_apply(s, &best.filter).unwrap();
            cosine_similarity(&f_test.extract(&sig).unwrap(), &enrol_t).unwrap()
        })
        .collect();
    spoof_scores.sort_by(f64::total_cmp);
    println!("f_test filtered spoof scores: {spoof_scores:.5?}");
}
