//! Fixture policy, registry and a live server for the service tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use imagine_core::{TaskDescription, Tokenizer};
use imagine_learners::{BaseModel, ContextMlp, MlpSpec, PolicyArtifact, PolicyKind, TrainConfig};
use imagine_service::{api, ChatService, Registry, ServeConfig, SessionStore};
use imagine_sim::ablation::world_vocab;

pub const TRAVEL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../tasks/travel");

pub fn travel() -> TaskDescription {
    TaskDescription::load_bundle(TRAVEL).unwrap()
}

/// An untrained travel policy plus a registry naming it, a mislabeled copy,
/// and a checkpoint that does not exist.
pub fn fixture(dir: &Path) -> PathBuf {
    let task = travel();
    let vocab = world_vocab(&task, &[]);
    let mut spec = MlpSpec::new(vocab.tokens().len(), vocab.specials());
    spec.hidden_dim = 16;
    let art = PolicyArtifact::new(
        PolicyKind::Bc,
        BaseModel::Mlp(ContextMlp::new(spec, 5)),
        None,
        0.0,
        vocab,
        "travel",
        &TrainConfig::default(),
        "fixture",
    )
    .unwrap();
    art.save(dir.join("bc")).unwrap();
    let registry = json!({
        "tasks": {"travel": TRAVEL},
        "policies": [
            {"policy_id": "bc-fixture", "checkpoint": "bc", "kind": "bc", "task_id": "travel"},
            {"policy_id": "mislabeled", "checkpoint": "bc", "kind": "rl", "task_id": "travel"},
            {"policy_id": "missing", "checkpoint": "nowhere", "kind": "fbc", "task_id": "travel"}
        ]
    });
    let path = dir.join("registry.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&registry).unwrap()).unwrap();
    path
}

pub struct Server {
    pub base: String,
    handle: JoinHandle<()>,
    pub http: Client,
}

impl Server {
    pub async fn start(registry: &Path, data: Option<&Path>, cfg: ServeConfig, static_dir: Option<PathBuf>) -> Server {
        let store = match data {
            Some(d) => SessionStore::open(d).unwrap(),
            None => SessionStore::in_memory(),
        };
        let svc = Arc::new(ChatService::new(Registry::load(registry).unwrap(), store, cfg));
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let handle = tokio::spawn(async move {
            api::serve(svc, listener, static_dir).await.unwrap();
        });
        Server {
            base,
            handle,
            http: Client::new(),
        }
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap())
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap())
    }

    pub async fn start_session(&self) -> String {
        let (s, v) = self.post("/sessions", json!({"task_id": "travel", "policy_id": "bc-fixture"})).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    pub fn stop(self) {
        self.handle.abort();
    }
}

pub fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or_else(|| panic!("no error body in {v}"))
}

pub fn utterances(session: &Value) -> &Vec<Value> {
    session["transcript"]["utterances"].as_array().unwrap()
}

pub fn speakers_alternate(session: &Value) -> bool {
    utterances(session).windows(2).all(|w| w[0]["speaker"] != w[1]["speaker"])
}

