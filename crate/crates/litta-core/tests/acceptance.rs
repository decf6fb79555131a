//! Acceptance suite: every release criterion as one test, each printing a
//! PASS line with its measured numbers (visible under --nocapture).
//!
//! Criterion 6 replays the bundled five-seed benchmark and compares against
//! the frozen oracle fixture in tests/fixtures/acceptance_pins.json. Set
//! LITTA_REGEN_PINS=1 to rewrite that fixture from a fresh run; the
//! ordering assertions still apply during regeneration.

use std::time::Instant;

use litta_core::adapt::{
    adapt_manifest_with_threads, cosine_lr, write_traces, AdaptConfig, Method,
};
use litta_core::corrector::{
    build_prompt, CorrectionSource, Corrector, CorrectorKind, CorrectorSpec,
};
use litta_core::ctc::{brute_force_ctc, ctc_forward_backward, LogitMatrix, Transcription};
use litta_core::data::{gen_benchmark, GenParams};
use litta_core::decoder::{beam_search, decode_exhaustive, DecodeConfig, DecodeMode, Hypothesis};
use litta_core::error::Error;
use litta_core::experiment::{acceptance_config, run_experiment};
use litta_core::gradcheck;
use litta_core::ngram::NGramLM;
use litta_core::objectives::{
    adaptive_lambda, composite_loss, renyi_entropy_loss, shannon_entropy_loss, TtaLossConfig,
    TtaLossKind,
};
use litta_core::util::{rng_from_seed, uniform_f64, uniform_usize};
use litta_core::vocab::Vocab;
use rand_chacha::ChaCha8Rng;

fn random_logits(rng: &mut ChaCha8Rng, l: usize, vocab: &Vocab, scale: f64) -> LogitMatrix {
    let rows = (0..l)
        .map(|_| {
            (0..vocab.size())
                .map(|_| scale * (2.0 * uniform_f64(rng) - 1.0))
                .collect()
        })
        .collect();
    LogitMatrix::new(rows, vocab.clone()).unwrap()
}

fn random_target(rng: &mut ChaCha8Rng, vocab: &Vocab, max_len: usize) -> Transcription {
    let len = uniform_usize(rng, 0, max_len);
    let text: String = (0..len)
        .map(|_| vocab.symbols()[uniform_usize(rng, 0, vocab.text_size() - 1)])
        .collect();
    Transcription::new(text, vocab).unwrap()
}

/// All label strings of length <= max_len over the text symbols.
fn all_targets(vocab: &Vocab, max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for base in &frontier {
            for &c in vocab.symbols() {
                let mut s = base.clone();
                s.push(c);
                out.push(s.clone());
                next.push(s);
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn criterion_1_ctc_oracle_equivalence() {
    let started = Instant::now();
    let vocab = Vocab::new(['a', 'b']).unwrap(); // C = 3 with blank
    let mut rng = rng_from_seed(0xC1);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let l = 1 + case % 5;
        let logits = random_logits(&mut rng, l, &vocab, 3.0);
        let target = random_target(&mut rng, &vocab, 3);
        let brute = brute_force_ctc(&logits, &target).unwrap();
        let res = ctc_forward_backward(&logits, &target).unwrap();
        let dp = if res.loss.is_finite() {
            (-res.loss).exp()
        } else {
            0.0
        };
        worst = worst.max((dp - brute).abs());
        assert!(
            (dp - brute).abs() <= 1e-10,
            "case {case}: dp {dp} vs brute {brute}"
        );
    }

    let mut worst_total = 0.0f64;
    for case in 0..20 {
        let l = 3 + case % 3;
        let logits = random_logits(&mut rng, l, &vocab, 3.0);
        let mut total = 0.0;
        for text in all_targets(&vocab, l) {
            let target = Transcription::new(text, &vocab).unwrap();
            let loss = ctc_forward_backward(&logits, &target).unwrap().loss;
            if loss.is_finite() {
                total += (-loss).exp();
            }
        }
        worst_total = worst_total.max((total - 1.0).abs());
        assert!((total - 1.0).abs() <= 1e-9, "case {case}: total {total}");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 1 PASS: ctc oracle equivalence (500 instances, max dev {worst:.2e}; \
         total-probability max dev {worst_total:.2e}; {elapsed:?})"
    );
}

#[test]
fn criterion_2_gradient_checks() {
    let started = Instant::now();
    let vocab = Vocab::new(['a', 'b']).unwrap();
    let mut rng = rng_from_seed(0xC2);

    // CTC loss
    let mut checked = 0;
    while checked < 100 {
        let l = 2 + checked % 4;
        let logits = random_logits(&mut rng, l, &vocab, 2.0);
        let target = random_target(&mut rng, &vocab, 2);
        let res = ctc_forward_backward(&logits, &target).unwrap();
        if !res.loss.is_finite() {
            continue;
        }
        gradcheck::assert_grad_close(
            &logits,
            &res.grad,
            |m| ctc_forward_backward(m, &target).unwrap().loss,
            1e-4,
            1e-4,
        );
        checked += 1;
    }

    // entropy losses need the retention mask stable under the probe step
    let mask_stable = |logits: &LogitMatrix, threshold: f64| {
        logits.rows().iter().all(|row| {
            let mut probs = Vec::new();
            litta_core::util::softmax(row, &mut probs);
            (probs[0] - threshold).abs() > 1e-3
        })
    };

    let mut checked = 0;
    while checked < 100 {
        let logits = random_logits(&mut rng, 4, &vocab, 2.0);
        let cfg = TtaLossConfig {
            kind: TtaLossKind::ShannonEm,
            temperature: if checked % 2 == 0 { 1.0 } else { 2.5 },
            renyi_gamma: 0.8,
            blank_suppression_threshold: 0.8,
        };
        if !mask_stable(&logits, cfg.blank_suppression_threshold) {
            continue;
        }
        let (_, grad) = shannon_entropy_loss(&logits, &cfg);
        gradcheck::assert_grad_close(&logits, &grad, |m| shannon_entropy_loss(m, &cfg).0, 1e-4, 1e-4);
        checked += 1;
    }

    let mut checked = 0;
    while checked < 100 {
        let logits = random_logits(&mut rng, 4, &vocab, 2.0);
        let cfg = TtaLossConfig {
            kind: TtaLossKind::RenyiEm,
            temperature: if checked % 2 == 0 { 1.0 } else { 1.7 },
            renyi_gamma: [0.3, 0.8, 2.0][checked % 3],
            blank_suppression_threshold: 0.8,
        };
        if !mask_stable(&logits, cfg.blank_suppression_threshold) {
            continue;
        }
        let (_, grad) = renyi_entropy_loss(&logits, &cfg).unwrap();
        gradcheck::assert_grad_close(
            &logits,
            &grad,
            |m| renyi_entropy_loss(m, &cfg).unwrap().0,
            1e-4,
            1e-4,
        );
        checked += 1;
    }

    // composite loss with the adaptive weight frozen at its evaluated value
    let mut checked = 0;
    while checked < 100 {
        let logits = random_logits(&mut rng, 5, &vocab, 2.0);
        let correction = random_target(&mut rng, &vocab, 2);
        let cfg = TtaLossConfig {
            kind: TtaLossKind::ShannonEm,
            temperature: 1.0,
            renyi_gamma: 0.8,
            blank_suppression_threshold: 0.8,
        };
        if !mask_stable(&logits, cfg.blank_suppression_threshold) {
            continue;
        }
        let out = composite_loss(&logits, &correction, &cfg).unwrap();
        if out.l_ctc.is_none() {
            continue;
        }
        let lambda = out.lambda_li;
        gradcheck::assert_grad_close(
            &logits,
            &out.grad,
            |m| {
                let (l_tta, _) = shannon_entropy_loss(m, &cfg);
                l_tta + lambda * ctc_forward_backward(m, &correction).unwrap().loss
            },
            1e-4,
            1e-4,
        );
        checked += 1;
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 2 PASS: gradient checks (4 losses x 100 instances, rel err <= 1e-4; {elapsed:?})"
    );
}

/// Ranking equality with lexicographic ties and a tolerance for float
/// near-ties between the two computation routes.
fn assert_same_ranking(beam: &[Hypothesis], oracle: &[Hypothesis], tol: f64) {
    assert_eq!(beam.len(), oracle.len(), "ranking lengths differ");
    let mut oracle_scores = std::collections::BTreeMap::new();
    for h in oracle {
        oracle_scores.insert(h.text.as_str().to_string(), h.fused_score);
    }
    for h in beam {
        let other = oracle_scores
            .get(h.text.as_str())
            .unwrap_or_else(|| panic!("text {:?} missing from oracle", h.text.as_str()));
        assert!(
            (h.fused_score - other).abs() <= tol,
            "score mismatch for {:?}",
            h.text.as_str()
        );
    }
    for (hb, ho) in beam.iter().zip(oracle) {
        if hb.text != ho.text {
            assert!(
                (hb.fused_score - ho.fused_score).abs() <= tol,
                "order differs beyond tie tolerance: {:?} vs {:?}",
                hb.text.as_str(),
                ho.text.as_str()
            );
        }
    }
}

#[test]
fn criterion_3_decoder_exactness() {
    let started = Instant::now();
    let vocab = Vocab::new(['a', 'b']).unwrap();
    let lm = NGramLM::train(&["ab", "aab", "ba", "abb"], 2, 0.05, &vocab).unwrap();
    let mut rng = rng_from_seed(0xC3);
    let mut instances = 0;
    while instances < 50 {
        let l = 2 + instances % 3;
        let logits = random_logits(&mut rng, l, &vocab, 2.0);
        for lambda in [0.0, 0.3, 2.0] {
            let oracle = decode_exhaustive(&logits, &lm, lambda).unwrap();
            let cfg = DecodeConfig {
                beam_width: oracle.len().max(1),
                lambda,
                mode: DecodeMode::Beam,
            };
            let beam = beam_search(&logits, &lm, &cfg).unwrap();
            assert_same_ranking(&beam, &oracle, 1e-9);
        }
        instances += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 3 PASS: saturated beam equals exhaustive ranking \
         (50 instances, lambda in {{0, 0.3, 2.0}}; {elapsed:?})"
    );
}

#[test]
fn criterion_4_schedule_and_formula_fidelity() {
    // schedule endpoints, bit-exact
    let cfg = AdaptConfig::default();
    assert_eq!(cfg.steps, 10, "default adaptation steps");
    assert_eq!(cosine_lr(0, cfg.steps, cfg.lr_max, cfg.lr_min).unwrap(), 4e-5);
    assert_eq!(
        cosine_lr(cfg.steps, cfg.steps, cfg.lr_max, cfg.lr_min).unwrap(),
        2e-5
    );

    // adaptive weighting formula
    assert_eq!(adaptive_lambda(1.0, 3.0).unwrap(), 0.25);

    // lambda stays in [0, 1] on every row of a real adaptation run
    let vocab = Vocab::default_char_vocab();
    let corpus = litta_core::corpus::bundled_sentences();
    let dataset = gen_benchmark(
        &corpus[..20],
        &vocab,
        &GenParams {
            seed: 4,
            ..GenParams::default()
        },
    )
    .unwrap();
    let head = litta_core::data::fit_source_head(
        &dataset.manifest,
        &vocab,
        &dataset.alignments,
        1e-3,
    )
    .unwrap();
    let lm = NGramLM::train(&corpus[20..80], 4, 0.01, &vocab).unwrap();
    let adapt_cfg = AdaptConfig {
        method: Method::Litta,
        steps: 10,
        lr_max: 1e-3,
        lr_min: 5e-4,
        ..AdaptConfig::default()
    };
    let traces =
        adapt_manifest_with_threads(&head, &dataset.manifest, &adapt_cfg, &lm, 2).unwrap();
    let mut rows = 0;
    for trace in &traces {
        assert!(trace.aborted.is_none());
        for row in &trace.steps {
            assert!(
                (0.0..=1.0).contains(&row.lambda_li),
                "lambda_li {} out of range",
                row.lambda_li
            );
            let want_lr = cosine_lr(row.step, adapt_cfg.steps, adapt_cfg.lr_max, adapt_cfg.lr_min)
                .unwrap();
            assert_eq!(row.lr, want_lr);
            rows += 1;
        }
    }
    println!(
        "criterion 4 PASS: cosine endpoints 4e-5/2e-5 exact, adaptive_lambda(1,3)=0.25, \
         default steps=10, lambda in [0,1] on {rows} trace rows"
    );
}

#[test]
fn criterion_5_prompt_fidelity() {
    let expected = "Please generate a correction of the <<the cat sat>> considering the pronunciation and overall context";
    assert_eq!(build_prompt("the cat sat"), expected);
    assert_eq!(
        build_prompt(""),
        "Please generate a correction of the <<>> considering the pronunciation and overall context"
    );
    for transcript in ["abc", "x", "hello world", "it's fine"] {
        let prompt = build_prompt(transcript);
        let prefix = "Please generate a correction of the <<";
        let suffix = ">> considering the pronunciation and overall context";
        assert!(prompt.starts_with(prefix));
        assert!(prompt.ends_with(suffix));
        assert_eq!(
            &prompt[prefix.len()..prompt.len() - suffix.len()],
            transcript
        );
    }
    println!("criterion 5 PASS: instruction string byte-exact around the transcript");
}

#[derive(serde::Deserialize, serde::Serialize)]
struct PinnedSeed {
    seed: u64,
    clean_wer_percent: f64,
    conditions: Vec<PinnedCondition>,
}

#[derive(serde::Deserialize, serde::Serialize)]
struct PinnedCondition {
    condition: String,
    wer_percent: std::collections::BTreeMap<String, f64>,
    ppl_final: std::collections::BTreeMap<String, f64>,
}

#[derive(serde::Deserialize, serde::Serialize)]
struct Pins {
    comment: String,
    clean_wer_max_percent: f64,
    wer_abs_tolerance: f64,
    ppl_abs_tolerance: f64,
    seeds: Vec<PinnedSeed>,
}

#[test]
fn criterion_6_end_to_end_ordering() {
    let started = Instant::now();
    let cfg = acceptance_config();
    let summary = run_experiment(&cfg, None, |_| {}).unwrap();
    let fixture_path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/acceptance_pins.json"
    );

    // the majority rules of the criterion itself
    let mut wer_majority = 0;
    let mut ppl_majority = 0;
    for run in &summary.seeds {
        let mut wer_ok = 0;
        let mut ppl_ok = 0;
        for cond in &run.conditions {
            let wn = cond.methods["none"].wer_percent;
            let we = cond.methods["em"].wer_percent;
            let wl = cond.methods["litta"].wer_percent;
            if wn > we && wl <= we {
                wer_ok += 1;
            }
            let pe = *cond.methods["em"].ppl_steps.last().unwrap();
            let pl = *cond.methods["litta"].ppl_steps.last().unwrap();
            if pl < pe {
                ppl_ok += 1;
            }
            // on the noisy conditions the corrector-informed method leaves
            // at least 90% of utterances at or below their unadapted WER
            if cond.condition.starts_with("noise_") {
                let frac = cond.methods["litta"].improved_fraction;
                assert!(
                    frac >= 0.9,
                    "seed {} {}: litta improved only {:.1}% of utterances",
                    run.seed,
                    cond.condition,
                    100.0 * frac
                );
            }
        }
        if wer_ok >= 3 {
            wer_majority += 1;
        }
        if ppl_ok >= 3 {
            ppl_majority += 1;
        }
    }
    let seed_count = summary.seeds.len();
    assert!(
        wer_majority * 2 > seed_count,
        "WER ordering (unadapted > em and litta <= em on >= 3 of 4 conditions) \
         held on only {wer_majority} of {seed_count} seeds"
    );
    assert!(
        ppl_majority * 2 > seed_count,
        "step-10 PPL ordering (litta < em on >= 3 of 4 conditions) \
         held on only {ppl_majority} of {seed_count} seeds"
    );

    if std::env::var("LITTA_REGEN_PINS").as_deref() == Ok("1") {
        let pins = Pins {
            comment: "Frozen oracle run of the bundled acceptance benchmark; regenerate by \
                      running the acceptance suite with LITTA_REGEN_PINS=1."
                .into(),
            clean_wer_max_percent: 1.0,
            wer_abs_tolerance: 0.5,
            ppl_abs_tolerance: 0.5,
            seeds: summary
                .seeds
                .iter()
                .map(|run| PinnedSeed {
                    seed: run.seed,
                    clean_wer_percent: run.clean_wer_percent,
                    conditions: run
                        .conditions
                        .iter()
                        .map(|c| PinnedCondition {
                            condition: c.condition.clone(),
                            wer_percent: c
                                .methods
                                .iter()
                                .map(|(m, r)| (m.clone(), r.wer_percent))
                                .collect(),
                            ppl_final: c
                                .methods
                                .iter()
                                .filter(|(m, _)| m.as_str() != "none")
                                .map(|(m, r)| (m.clone(), *r.ppl_steps.last().unwrap()))
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        std::fs::write(fixture_path, serde_json::to_string_pretty(&pins).unwrap()).unwrap();
        println!("criterion 6: fixture regenerated at {fixture_path}");
    }

    // agreement with the frozen fixture
    let pins: Pins = serde_json::from_str(&std::fs::read_to_string(fixture_path).unwrap()).unwrap();
    assert_eq!(pins.seeds.len(), summary.seeds.len(), "seed count changed");
    for (pin, run) in pins.seeds.iter().zip(&summary.seeds) {
        assert_eq!(pin.seed, run.seed);
        assert!(
            run.clean_wer_percent <= pins.clean_wer_max_percent,
            "seed {}: clean WER {} above the pinned bound {}",
            run.seed,
            run.clean_wer_percent,
            pins.clean_wer_max_percent
        );
        for (pin_cond, cond) in pin.conditions.iter().zip(&run.conditions) {
            assert_eq!(pin_cond.condition, cond.condition);
            for (method, &pinned_wer) in &pin_cond.wer_percent {
                let got = cond.methods[method].wer_percent;
                assert!(
                    (got - pinned_wer).abs() <= pins.wer_abs_tolerance,
                    "seed {} {} {}: WER {got} vs pinned {pinned_wer}",
                    run.seed,
                    cond.condition,
                    method
                );
            }
            for (method, &pinned_ppl) in &pin_cond.ppl_final {
                let got = *cond.methods[method].ppl_steps.last().unwrap();
                assert!(
                    (got - pinned_ppl).abs() <= pins.ppl_abs_tolerance,
                    "seed {} {} {}: PPL {got} vs pinned {pinned_ppl}",
                    run.seed,
                    cond.condition,
                    method
                );
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "criterion 6 PASS: benchmark orderings held on {wer_majority}/{seed_count} seeds (WER) \
         and {ppl_majority}/{seed_count} (PPL), all cells within pinned tolerances ({elapsed:?})"
    );
}

#[test]
fn criterion_7_episodic_purity_and_determinism() {
    let vocab = Vocab::default_char_vocab();
    let corpus = litta_core::corpus::bundled_sentences();
    let dataset = gen_benchmark(
        &corpus[..40],
        &vocab,
        &GenParams {
            seed: 9,
            ..GenParams::default()
        },
    )
    .unwrap();
    let head = litta_core::data::fit_source_head(
        &dataset.manifest,
        &vocab,
        &dataset.alignments,
        1e-3,
    )
    .unwrap();
    let lm = NGramLM::train(&corpus[40..140], 4, 0.01, &vocab).unwrap();
    let cfg = AdaptConfig {
        method: Method::Em,
        steps: 5,
        lr_max: 1e-3,
        lr_min: 5e-4,
        ..AdaptConfig::default()
    };

    let head_before = serde_json::to_vec(&head).unwrap();
    let serial = adapt_manifest_with_threads(&head, &dataset.manifest, &cfg, &lm, 1).unwrap();
    let parallel = adapt_manifest_with_threads(&head, &dataset.manifest, &cfg, &lm, 4).unwrap();
    let head_after = serde_json::to_vec(&head).unwrap();
    assert_eq!(head_before, head_after, "base head changed");

    let mut bytes_serial = Vec::new();
    let mut bytes_parallel = Vec::new();
    write_traces(&serial, &mut bytes_serial).unwrap();
    write_traces(&parallel, &mut bytes_parallel).unwrap();
    assert_eq!(bytes_serial, bytes_parallel, "trace files differ");
    println!(
        "criterion 7 PASS: base head bit-identical; serial and 4-thread trace files \
         bit-identical ({} bytes)",
        bytes_serial.len()
    );
}

#[test]
fn criterion_8_http_corrector_contract() {
    let started = Instant::now();
    let vocab = Vocab::default_char_vocab();

    // success path: scripted reply is normalized into the vocabulary
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_ip().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for _ in 0..1 {
            let mut request = server.recv().unwrap();
            let auth = request
                .headers()
                .iter()
                .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case("authorization"))
                .map(|h| h.value.as_str().to_string());
            let mut body = String::new();
            request.as_reader().read_to_string(&mut body).ok();
            seen.push((auth, body));
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"The Knight rode!"}}]}"#;
            let response = tiny_http::Response::from_string(reply).with_status_code(200);
            request.respond(response).ok();
        }
        seen
    });
    let spec = CorrectorSpec {
        kind: CorrectorKind::Http,
        endpoint_url: Some(format!("http://{addr}/v1/chat/completions")),
        model_name: Some("mock".into()),
        api_key: Some("test-key".into()),
        timeout_ms: 5_000,
        max_retries: 1,
        ..CorrectorSpec::default()
    };
    let corrector = Corrector::build(&spec, &vocab).unwrap();
    let input = Transcription::new("the night rode", &vocab).unwrap();
    let outcome = corrector.correct(&input);
    assert_eq!(outcome.corrected.as_str(), "the knight rode");
    assert_eq!(outcome.source, CorrectionSource::Http);
    assert!(outcome.changed);
    let seen = handle.join().unwrap();
    let (auth, raw_body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer test-key"));
    let body: serde_json::Value = serde_json::from_str(raw_body).unwrap();
    assert_eq!(body["model"], "mock");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(
        body["messages"][0]["content"],
        "Please generate a correction of the <<the night rode>> considering the pronunciation and overall context"
    );

    // 5xx path: retries then falls back to the input
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_ip().unwrap();
    let handle = std::thread::spawn(move || {
        let mut hits = 0u32;
        while let Ok(Some(request)) = server.recv_timeout(std::time::Duration::from_secs(8)) {
            hits += 1;
            let response = tiny_http::Response::from_string("{\"error\":\"boom\"}")
                .with_status_code(500);
            request.respond(response).ok();
            if hits >= 3 {
                break;
            }
        }
        hits
    });
    let spec = CorrectorSpec {
        kind: CorrectorKind::Http,
        endpoint_url: Some(format!("http://{addr}/v1/chat/completions")),
        timeout_ms: 6_000,
        max_retries: 2,
        ..CorrectorSpec::default()
    };
    let corrector = Corrector::build(&spec, &vocab).unwrap();
    let outcome = corrector.correct(&input);
    assert_eq!(outcome.source, CorrectionSource::FallbackIdentity);
    assert_eq!(outcome.corrected, input);
    assert!(!outcome.changed);
    let hits = handle.join().unwrap();
    assert_eq!(hits, 3, "expected max_retries + 1 attempts");

    // timeout path: the server never answers inside the budget
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let addr = server.server_addr().to_ip().unwrap();
    let handle = std::thread::spawn(move || {
        while let Ok(Some(request)) = server.recv_timeout(std::time::Duration::from_secs(3)) {
            std::thread::sleep(std::time::Duration::from_millis(1200));
            request
                .respond(tiny_http::Response::from_string("late").with_status_code(200))
                .ok();
        }
    });
    let spec = CorrectorSpec {
        kind: CorrectorKind::Http,
        endpoint_url: Some(format!("http://{addr}/v1/chat/completions")),
        timeout_ms: 700,
        max_retries: 0,
        ..CorrectorSpec::default()
    };
    let corrector = Corrector::build(&spec, &vocab).unwrap();
    let outcome = corrector.correct(&input);
    assert_eq!(outcome.source, CorrectionSource::FallbackIdentity);
    drop(handle);

    // an http corrector inside an episode never fails the episode
    let corpus = litta_core::corpus::bundled_sentences();
    let dataset = gen_benchmark(
        &corpus[..3],
        &vocab,
        &GenParams {
            seed: 2,
            ..GenParams::default()
        },
    )
    .unwrap();
    let head = litta_core::data::fit_source_head(
        &dataset.manifest,
        &vocab,
        &dataset.alignments,
        1e-3,
    )
    .unwrap();
    let lm = NGramLM::train(&corpus[3..40], 4, 0.01, &vocab).unwrap();
    let cfg = AdaptConfig {
        method: Method::Litta,
        steps: 2,
        lr_max: 1e-3,
        lr_min: 5e-4,
        corrector: CorrectorSpec {
            kind: CorrectorKind::Http,
            // nothing listens here; every correction falls back
            endpoint_url: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            timeout_ms: 300,
            max_retries: 0,
            ..CorrectorSpec::default()
        },
        ..AdaptConfig::default()
    };
    let traces = adapt_manifest_with_threads(&head, &dataset.manifest, &cfg, &lm, 1).unwrap();
    for trace in &traces {
        assert!(trace.aborted.is_none(), "episode failed: {:?}", trace.aborted);
        assert_eq!(trace.steps.len(), 3);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 8 PASS: http corrector success/5xx/timeout paths behave, episodes \
         survive dead endpoints ({elapsed:?})"
    );
}

// keep the unused-variant lint honest: Error is part of the public surface
// exercised above via brute-force and schedule rejections
#[test]
fn rejection_paths_match_contracts() {
    let vocab = Vocab::default_char_vocab();
    let rows = vec![vec![0.0; vocab.size()]; 8];
    let logits = LogitMatrix::new(rows, vocab).unwrap();
    assert!(matches!(
        brute_force_ctc(&logits, &Transcription::empty()),
        Err(Error::InstanceTooLarge { .. })
    ));
    assert!(cosine_lr(11, 10, 4e-5, 2e-5).is_err());
    assert!(adaptive_lambda(-0.1, 0.0).is_err());
}
