use std::path::PathBuf;

use imagine_backend::{Backend, BackendConfig, FaultPlan, MockBackend};
use imagine_core::corpus::to_jsonl;
use imagine_core::task::{CRITIQUE, IMAGINATION};
use imagine_core::{parse_transcript, render_dialogue, Provenance, TaskDescription};
use imagine_engine::{assign_labels, generate_corpus, match_template, EngineError, GenerateConfig, Persona};
use proptest::prelude::*;
use rand::Rng;

fn task() -> TaskDescription {
    TaskDescription::load_bundle(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tasks/travel")).unwrap()
}

fn personas() -> Vec<Persona> {
    ["adventurer", "indecisive traveler", "luxury seeker", "family planner"]
        .iter()
        .map(|n| Persona::new(n, "likes trips"))
        .collect()
}

/// Imagination prompts get a short dialogue about the topic; critique
/// prompts get the transcript back with one extra closing line.
fn world(task: &TaskDescription) -> MockBackend {
    let imagination = task.template(IMAGINATION).unwrap().clone();
    let critique = task.template(CRITIQUE).unwrap().clone();
    MockBackend::new()
        .with_responder(move |prompt: &str, rng: &mut rand_chacha::ChaCha8Rng| {
            let v = match_template(&imagination, prompt)?;
            let n: u32 = rng.gen_range(1..100);
            Some(format!(
                "AI: Hello, what do you enjoy? ({n})\nH: I am a {}.\nAI: How about {}?\nH: That is {}.",
                v["persona"], v["topic"], v["sentiment"]
            ))
        })
        .with_responder(move |prompt: &str, _: &mut rand_chacha::ChaCha8Rng| {
            let v = match_template(&critique, prompt)?;
            Some(format!("{}\nAI: Enjoy your trip.", v["transcript"]))
        })
}

fn backend(mock: MockBackend) -> Backend {
    let cfg = BackendConfig {
        retry_backoff_ms: 0,
        max_retries: 0,
        ..BackendConfig::mock()
    };
    Backend::mock(cfg, mock).unwrap()
}

#[test]
fn label_bookkeeping() {
    let t = task();
    let cfg = GenerateConfig {
        n: 10,
        seed: 7,
        ..GenerateConfig::default()
    };
    let r = generate_corpus(&t, &personas(), &cfg, &backend(world(&t))).unwrap();
    assert_eq!(r.dialogues.len(), 10);
    assert_eq!(r.dialogues.iter().filter(|d| d.reward == 1).count(), 5);
    assert!(r.failed.is_empty());
    assert_eq!(r.critique_changed, 10);
    for d in &r.dialogues {
        assert_eq!(d.provenance, Provenance::Critiqued);
        let last_human = d.utterances.iter().rev().find(|u| u.speaker == imagine_core::Speaker::Human).unwrap();
        let expect = if d.reward == 1 { "positive" } else { "negative" };
        assert!(last_human.text.contains(expect));
        assert_eq!(parse_transcript(&render_dialogue(d)).unwrap(), d.utterances);
    }
}

#[test]
fn replay_is_byte_identical() {
    let t = task();
    let cfg = GenerateConfig {
        n: 4,
        seed: 11,
        ..GenerateConfig::default()
    };
    let a = generate_corpus(&t, &personas(), &cfg, &backend(world(&t))).unwrap();
    let b = generate_corpus(&t, &personas(), &cfg, &backend(world(&t))).unwrap();
    assert_eq!(to_jsonl(&a.dialogues), to_jsonl(&b.dialogues));
    let ids: Vec<String> = personas().into_iter().map(|p| p.persona_id).collect();
    assert!(a.dialogues.iter().all(|d| ids.contains(&d.persona_id)));
    let c = generate_corpus(&t, &personas(), &GenerateConfig { seed: 12, ..cfg }, &backend(world(&t))).unwrap();
    assert_ne!(to_jsonl(&a.dialogues), to_jsonl(&c.dialogues));
}

#[test]
fn zero_critique_rounds_keeps_imagined() {
    let t = task();
    let cfg = GenerateConfig {
        n: 6,
        critique_rounds: 0,
        ..GenerateConfig::default()
    };
    let r = generate_corpus(&t, &personas(), &cfg, &backend(world(&t))).unwrap();
    assert!(r.dialogues.iter().all(|d| d.provenance == Provenance::Imagined));
}

#[test]
fn half_failing_backend_is_a_shortfall() {
    let t = task();
    let cfg = GenerateConfig {
        n: 40,
        seed: 3,
        ..GenerateConfig::default()
    };
    let b = backend(world(&t).with_faults(FaultPlan::FailRate { rate: 0.5, salt: 9 }));
    match generate_corpus(&t, &personas(), &cfg, &b) {
        Err(EngineError::Shortfall { requested, produced, failed }) => {
            assert_eq!(requested, 40);
            assert_eq!(produced + failed, 40);
            assert!(produced < 36);
        }
        other => panic!("expected shortfall, got {other:?}"),
    }
}

#[test]
fn failed_critique_keeps_the_dialogue() {
    let t = task();
    let imagination = t.template(IMAGINATION).unwrap().clone();
    let only_imagine = MockBackend::new().with_responder(move |prompt: &str, _: &mut rand_chacha::ChaCha8Rng| {
        match_template(&imagination, prompt).map(|_| "AI: Hi\nH: Hello".to_string())
    });
    let cfg = GenerateConfig {
        n: 3,
        ..GenerateConfig::default()
    };
    let r = generate_corpus(&t, &personas(), &cfg, &backend(only_imagine)).unwrap();
    assert_eq!(r.dialogues.len(), 3);
    assert_eq!(r.critique_fallbacks, 3);
    assert!(r.dialogues.iter().all(|d| d.provenance == Provenance::Imagined));
}

#[test]
fn personas_required() {
    let t = task();
    let r = generate_corpus(&t, &[], &GenerateConfig::default(), &backend(world(&t)));
    assert!(matches!(r, Err(EngineError::NoPersonas)));
}

proptest! {
    #[test]
    fn label_ratio_within_one_over_n(n in 1usize..300, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
        let labels = assign_labels(n, ratio, seed);
        let frac = labels.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
        prop_assert!((frac - ratio).abs() <= 1.0 / n as f64);
    }
}
