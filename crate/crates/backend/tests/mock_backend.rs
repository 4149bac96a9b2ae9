use imagine_backend::{
    Backend, BackendConfig, BackendError, CompletionRequest, FaultPlan, MockBackend,
};
use rand::Rng;

fn cfg() -> BackendConfig {
    BackendConfig {
        retry_backoff_ms: 0,
        ..BackendConfig::mock()
    }
}

#[test]
fn fixture_text_verbatim() {
    let b = Backend::mock(cfg(), MockBackend::new().with_fixture("hello?", "AI: hi\nH: yo")).unwrap();
    let r = b.complete(&CompletionRequest::new("hello?")).unwrap();
    assert_eq!(r.text, "AI: hi\nH: yo");
    assert!(!r.cached);
    assert_eq!(r.backend_id, "mock:mock");
}

#[test]
fn cache_hit_is_identical_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mock = MockBackend::new()
        .with_responder(|_: &str, rng: &mut rand_chacha::ChaCha8Rng| Some(format!("n={}", rng.gen::<u32>())));
    let b = Backend::mock(
        BackendConfig {
            cache_dir: Some(dir.path().to_path_buf()),
            ..cfg()
        },
        mock,
    )
    .unwrap();
    let req = CompletionRequest::new("p").with_seed(4);
    let first = b.complete(&req).unwrap();
    let second = b.complete(&req).unwrap();
    assert!(!first.cached);
    assert!(second.cached);
    assert_eq!(first.text, second.text);
    assert_eq!(b.attempts_made(), 1);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn seeded_mock_replays_byte_for_byte() {
    let make = || {
        Backend::mock(
            cfg(),
            MockBackend::new().with_responder(|p: &str, rng: &mut rand_chacha::ChaCha8Rng| {
                Some(format!("{p}:{}", rng.gen::<u64>()))
            }),
        )
        .unwrap()
    };
    let reqs: Vec<_> = (0..20).map(|i| CompletionRequest::new(format!("p{}", i % 3)).with_seed(i)).collect();
    let a: Vec<_> = reqs.iter().map(|r| make().complete(r).unwrap().text).collect();
    let b = make();
    let c: Vec<_> = reqs.iter().map(|r| b.complete(r).unwrap().text).collect();
    assert_eq!(a, c);
    assert_ne!(a[0], a[3], "different seeds should give different draws");
}

#[test]
fn retries_bounded() {
    let b = Backend::mock(
        BackendConfig { max_retries: 3, ..cfg() },
        MockBackend::new().with_fixture("x", "y").with_faults(FaultPlan::Transient(10)),
    )
    .unwrap();
    match b.complete(&CompletionRequest::new("x")) {
        Err(BackendError::BackendUnavailable { attempts, request_id, .. }) => {
            assert_eq!(attempts, 4);
            assert!(request_id.starts_with("req-"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(b.attempts_made(), 4);

    let b = Backend::mock(
        BackendConfig { max_retries: 2, ..cfg() },
        MockBackend::new().with_fixture("x", "y").with_faults(FaultPlan::Transient(2)),
    )
    .unwrap();
    assert_eq!(b.complete(&CompletionRequest::new("x")).unwrap().text, "y");
    assert_eq!(b.attempts_made(), 3);
}

#[test]
fn timeouts_surface_as_timeout_errors() {
    let b = Backend::mock(
        BackendConfig { max_retries: 1, ..cfg() },
        MockBackend::new().with_fixture("x", "y").with_faults(FaultPlan::Timeout),
    )
    .unwrap();
    assert!(matches!(
        b.complete(&CompletionRequest::new("x")),
        Err(BackendError::TimeoutExceeded { attempts: 2, .. })
    ));
}

#[test]
fn unknown_prompt_fails_without_retrying() {
    let b = Backend::mock(BackendConfig { max_retries: 5, ..cfg() }, MockBackend::new()).unwrap();
    assert!(b.complete(&CompletionRequest::new("?")).is_err());
    assert_eq!(b.attempts_made(), 1);
}

#[test]
fn stop_sequences_and_max_tokens_honored() {
    let b = Backend::mock(cfg(), MockBackend::new().with_fixture("p", "one two\nH: three four")).unwrap();
    let r = b.complete(&CompletionRequest::new("p").with_stop("\nH:")).unwrap();
    assert_eq!(r.text, "one two");
    let r = b.complete(&CompletionRequest::new("p").with_max_tokens(3)).unwrap();
    assert_eq!(r.text, "one two\nH:");
}

#[test]
fn batch_is_aligned() {
    let mock = MockBackend::new().with_fixture("a", "1").with_fixture("b", "2").with_fixture("c", "3");
    let b = Backend::mock(cfg(), mock).unwrap();
    let reqs: Vec<_> = ["a", "b", "c"].iter().map(|p| CompletionRequest::new(*p)).collect();
    let out: Vec<_> = b.complete_batch(&reqs).into_iter().map(|r| r.unwrap().text).collect();
    assert_eq!(out, vec!["1", "2", "3"]);
}

#[test]
fn fail_rate_is_a_fixed_subset() {
    let mock = MockBackend::new()
        .with_responder(|_: &str, _: &mut rand_chacha::ChaCha8Rng| Some("ok".to_string()))
        .with_faults(FaultPlan::FailRate { rate: 0.5, salt: 1 });
    let b = Backend::mock(BackendConfig { max_retries: 2, ..cfg() }, mock).unwrap();
    let reqs: Vec<_> = (0..200).map(|i| CompletionRequest::new(format!("p{i}"))).collect();
    let first: Vec<bool> = b.complete_batch(&reqs).iter().map(Result::is_ok).collect();
    let second: Vec<bool> = b.complete_batch(&reqs).iter().map(Result::is_ok).collect();
    assert_eq!(first, second);
    let ok = first.iter().filter(|x| **x).count();
    assert!((60..140).contains(&ok), "ok = {ok}");
}
