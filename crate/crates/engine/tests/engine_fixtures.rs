use std::path::PathBuf;

use imagine_backend::{Backend, BackendConfig, MockBackend};
use imagine_core::{parse_transcript, render_dialogue, Provenance, Speaker, TaskDescription};
use imagine_engine::critique::report_from_completion;
use imagine_engine::persona::reasoning_prompt;
use imagine_engine::{
    bundle_personas, critique_dialogue, critique_prompt, imagination_prompt, imagine_dialogue, synthesize_personas,
    EngineError, ImaginationSpec, Persona, SamplingSettings,
};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

fn task(name: &str) -> TaskDescription {
    TaskDescription::load_bundle(root().join("tasks").join(name)).unwrap()
}

fn backend(mock: MockBackend) -> Backend {
    Backend::mock(BackendConfig::mock(), mock).unwrap()
}

fn persona_from(list: &str, name: &str) -> Persona {
    imagine_engine::parse_personas(&fixture(list))
        .unwrap()
        .into_iter()
        .find(|p| p.name == name)
        .unwrap()
}

#[test]
fn instruction_personas_from_fixture() {
    let t = task("instruction");
    let b = backend(MockBackend::new().with_fixture(reasoning_prompt(&t).unwrap(), fixture("instruction_personas.txt")));
    let names: Vec<String> = synthesize_personas(&t, &b, 0).unwrap().into_iter().map(|p| p.name).collect();
    assert_eq!(
        names,
        [
            "layman",
            "machine learning enthusiast",
            "reinforcement learning student",
            "reinforcement learning researcher"
        ]
    );
}

#[test]
fn travel_personas_from_fixture() {
    let t = task("travel");
    let b = backend(MockBackend::new().with_fixture(reasoning_prompt(&t).unwrap(), fixture("travel_personas.txt")));
    let p = synthesize_personas(&t, &b, 0).unwrap();
    let names: Vec<&str> = p.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "adventurer",
            "indecisive traveler",
            "budget conscious traveler",
            "luxury seeker",
            "family planner"
        ]
    );
    assert_eq!(p[2].persona_id, "budget-conscious-traveler");
    assert_eq!(p[2].description, "prefers cost-effective options or package deals");
}

#[test]
fn empty_reasoning_completion_is_unparseable() {
    let t = task("travel");
    let b = backend(MockBackend::new().with_fixture(reasoning_prompt(&t).unwrap(), ""));
    assert!(matches!(synthesize_personas(&t, &b, 0), Err(EngineError::UnparseablePersonaList)));
}

#[test]
fn personas_are_cached_in_the_bundle() {
    let t = task("travel");
    let dir = tempfile::tempdir().unwrap();
    let b = backend(MockBackend::new().with_fixture(reasoning_prompt(&t).unwrap(), fixture("travel_personas.txt")));
    let first = bundle_personas(dir.path(), &t, &b, 0).unwrap();
    let silent = backend(MockBackend::new());
    assert_eq!(bundle_personas(dir.path(), &t, &silent, 0).unwrap(), first);
}

fn travel_spec() -> ImaginationSpec {
    ImaginationSpec {
        persona: persona_from("travel_personas.txt", "budget conscious traveler"),
        reward_flag: 0,
        topic: Some("food tours".into()),
    }
}

fn instruction_spec() -> ImaginationSpec {
    ImaginationSpec {
        persona: persona_from("instruction_personas.txt", "machine learning enthusiast"),
        reward_flag: 1,
        topic: Some("behavior cloning".into()),
    }
}

#[test]
fn travel_imagination_fixture() {
    let t = task("travel");
    let spec = travel_spec();
    let prompt = imagination_prompt(&t, &spec).unwrap();
    assert!(prompt.contains("food tours") && prompt.contains("unsuccessful") && prompt.contains("negative"));
    assert!(prompt.contains("food activities"));
    let b = backend(MockBackend::new().with_fixture(prompt, fixture("travel_imagined.txt")));
    let d = imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1).unwrap();
    assert_eq!(d.utterances.len(), 21);
    assert_eq!(d.reward, 0);
    assert_eq!(d.persona_id, "budget-conscious-traveler");
    assert_eq!(d.provenance, Provenance::Imagined);
    assert_eq!(d.utterances[0].speaker, Speaker::Agent);
    assert!(d.utterances[14].text.contains("$1000"));
}

#[test]
fn instruction_imagination_starts_with_human() {
    let t = task("instruction");
    let spec = instruction_spec();
    let prompt = imagination_prompt(&t, &spec).unwrap();
    assert!(prompt.contains("understands"));
    let b = backend(MockBackend::new().with_fixture(prompt, fixture("instruction_imagined.txt")));
    let d = imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1).unwrap();
    assert_eq!(d.utterances[0].speaker, Speaker::Human);
    assert_eq!(d.utterances.len(), 11);
    assert_eq!(d.reward, 1);
}

#[test]
fn golden_render_and_round_trip() {
    let t = task("instruction");
    let spec = instruction_spec();
    let b = backend(MockBackend::new().with_fixture(imagination_prompt(&t, &spec).unwrap(), fixture("instruction_imagined.txt")));
    let d = imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1).unwrap();
    assert_eq!(render_dialogue(&d), fixture("instruction_imagined.golden"));
    assert_eq!(parse_transcript(&render_dialogue(&d)).unwrap(), d.utterances);
}

#[test]
fn unprefixed_completion_is_unparseable() {
    let t = task("travel");
    let spec = travel_spec();
    let b = backend(MockBackend::new().with_fixture(imagination_prompt(&t, &spec).unwrap(), "no prefixes here"));
    let err = imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1).unwrap_err();
    assert!(matches!(err, EngineError::UnparseableTranscript), "{err}");
}

#[test]
fn one_sided_completion_is_empty() {
    let t = task("travel");
    let spec = travel_spec();
    let b = backend(MockBackend::new().with_fixture(imagination_prompt(&t, &spec).unwrap(), "AI: hello\nAI: anyone?"));
    assert!(matches!(
        imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1),
        Err(EngineError::EmptyDialogue)
    ));
}

#[test]
fn undeclared_topic_and_bad_flag_rejected() {
    let t = task("travel");
    let mut spec = travel_spec();
    spec.topic = Some("skydiving".into());
    assert!(matches!(imagination_prompt(&t, &spec), Err(EngineError::InvalidConfig(_))));
    let mut spec = travel_spec();
    spec.reward_flag = 2;
    assert!(imagination_prompt(&t, &spec).is_err());
}

fn imagined(task_name: &str) -> (TaskDescription, Vec<Persona>, imagine_core::Dialogue) {
    let t = task(task_name);
    let (spec, list, text) = if task_name == "travel" {
        (travel_spec(), "travel_personas.txt", "travel_imagined.txt")
    } else {
        (instruction_spec(), "instruction_personas.txt", "instruction_imagined.txt")
    };
    let b = backend(MockBackend::new().with_fixture(imagination_prompt(&t, &spec).unwrap(), fixture(text)));
    let d = imagine_dialogue(&t, &spec, &b, &SamplingSettings::default(), 1).unwrap();
    let personas = imagine_engine::parse_personas(&fixture(list)).unwrap();
    (t, personas, d)
}

#[test]
fn instruction_critique_hides_background() {
    let (t, personas, d) = imagined("instruction");
    let prompt = critique_prompt(&t, &personas, &d).unwrap();
    assert!(prompt.contains(render_dialogue(&d).trim_end()));
    assert!(prompt.contains("familiar with machine learning but not reinforcement learning"));
    let b = backend(MockBackend::new().with_fixture(prompt, fixture("instruction_critiqued.txt")));
    let r = critique_dialogue(&t, &personas, &d, &b, &SamplingSettings::default(), 2).unwrap();
    assert!(r.changed);
    assert_eq!(r.revised.provenance, Provenance::Critiqued);
    assert_eq!((r.revised.reward, &r.revised.persona_id), (d.reward, &d.persona_id));
    assert!(!r.revised.utterances[0].text.contains("basic understanding of machine learning"));
    assert!(r.revised.utterances[2].text.starts_with("Actually, no"));
    assert_eq!(r.criteria_applied, t.criteria);
    assert!(r.fallback_reason.is_none());
}

#[test]
fn travel_critique_ends_negative() {
    let (t, personas, d) = imagined("travel");
    let prompt = critique_prompt(&t, &personas, &d).unwrap();
    assert!(prompt.contains("unsuccessful") && prompt.contains("negative sentiment"));
    assert!(!prompt.contains("{outcome}"));
    let b = backend(MockBackend::new().with_fixture(prompt, fixture("travel_critiqued.txt")));
    let r = critique_dialogue(&t, &personas, &d, &b, &SamplingSettings::default(), 2).unwrap();
    assert!(r.changed);
    assert_eq!(r.revised.reward, 0);
    assert_eq!(r.revised.utterances.len(), 21);
    let last_human = r.revised.utterances.iter().rev().find(|u| u.speaker == Speaker::Human).unwrap();
    assert!(last_human.text.starts_with("No,"));
    assert!(r.revised.utterances.last().unwrap().text.contains("disappointment"));
}

#[test]
fn identical_revision_is_unchanged() {
    let (t, personas, d) = imagined("travel");
    let b = backend(MockBackend::new().with_fixture(critique_prompt(&t, &personas, &d).unwrap(), render_dialogue(&d)));
    let r = critique_dialogue(&t, &personas, &d, &b, &SamplingSettings::default(), 2).unwrap();
    assert!(!r.changed);
    assert_eq!(r.revised.utterances, d.utterances);
    assert_eq!(r.revised.provenance, Provenance::Critiqued);
}

#[test]
fn malformed_revision_falls_back() {
    let (t, _, d) = imagined("travel");
    let r = report_from_completion(&t, &d, "I cannot rewrite this.");
    assert!(!r.changed);
    assert_eq!(r.revised, d);
    assert!(r.fallback_reason.unwrap().contains("AI:"));
}
