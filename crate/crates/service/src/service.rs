//! Session operations shared by the HTTP API and the terminal REPL.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use imagine_core::{Dialogue, Provenance, Utterance};
use imagine_learners::{PolicyArtifact, SequenceModel};
use imagine_sim::episode::agent_turn_state;
use imagine_sim::{DialogueAgent, EvalConfig, PolicyAgent};

use crate::config::ServeConfig;
use crate::error::{Result, ServiceError};
use crate::registry::{PolicyRegistryEntry, Registry};
use crate::sessions::{now_ms, ChatSession, Event, Rating, SessionStore};

pub const OVERFLOW_REPLY: &str =
    "This conversation has reached my memory limit, so I have to stop here. Please start a new session to keep chatting.";

/// Stand-in for a reply that decoded to nothing.
pub const EMPTY_REPLY: &str = "...";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartedSession {
    pub session_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greeting: Option<String>,
}

pub struct ChatService {
    registry: Arc<Registry>,
    store: SessionStore,
    cfg: ServeConfig,
}

fn reply_seed(session_id: &str, turn: usize) -> u64 {
    let (hi, lo) = uuid::Uuid::parse_str(session_id).map_or((0, 0), |u| u.as_u64_pair());
    hi ^ lo.rotate_left(17) ^ (turn as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl ChatService {
    pub fn new(registry: Registry, store: SessionStore, cfg: ServeConfig) -> Self {
        ChatService {
            registry: Arc::new(registry),
            store,
            cfg,
        }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn policies(&self) -> &[PolicyRegistryEntry] {
        self.registry.entries()
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn start_session(&self, task_id: &str, policy_id: &str) -> Result<StartedSession> {
        let task = self.registry.task(task_id)?;
        let art = self.registry.policy(policy_id)?;
        if art.manifest.task_id != task.task_id {
            return Err(ServiceError::BadRequest(format!(
                "policy {policy_id:?} serves task {:?}, not {task_id:?}",
                art.manifest.task_id
            )));
        }
        let greeting = task.greeting.clone().filter(|g| !g.trim().is_empty());
        let now = now_ms();
        let session = ChatSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            task_id: task.task_id.clone(),
            policy_id: policy_id.to_string(),
            transcript: Dialogue {
                task_id: task.task_id.clone(),
                persona_id: "live".to_string(),
                reward: 0,
                provenance: Provenance::Live,
                utterances: greeting.iter().map(Utterance::agent).collect(),
            },
            created_at: now,
            updated_at: now,
            rating: None,
            closed: false,
        };
        let session_id = session.session_id.clone();
        self.store.insert(session)?;
        Ok(StartedSession { session_id, greeting })
    }

    pub async fn session(&self, session_id: &str) -> Result<ChatSession> {
        Ok(self.store.get(session_id)?.lock().await.clone())
    }

    fn decode_config(&self) -> EvalConfig {
        EvalConfig {
            temperature: self.cfg.temperature,
            max_reply_tokens: self.cfg.max_reply_tokens,
            ..EvalConfig::default()
        }
    }

    /// Append the human message and the agent's reply. Messages to one session
    /// are handled one at a time, in lock order.
    pub async fn post_message(&self, session_id: &str, text: &str) -> Result<String> {
        let slot = self.store.get(session_id)?;
        let mut session = slot.lock().await;
        if session.closed {
            return Err(ServiceError::SessionClosed(session_id.to_string()));
        }
        let human = Utterance::human(text.trim());
        if human.text.is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let art: Arc<PolicyArtifact> = self.registry.policy(&session.policy_id)?.clone();
        let mut transcript = session.transcript.utterances.clone();
        transcript.push(human.clone());

        let context = agent_turn_state(&transcript, &art.vocab).len();
        let limit = self.cfg.max_context_tokens.min(art.base.max_context());
        if context + self.cfg.max_reply_tokens > limit {
            let at = now_ms();
            let id = session.session_id.clone();
            self.store.record(
                &mut session,
                Event::Utterances {
                    session_id: id.clone(),
                    at,
                    utterances: vec![human, Utterance::agent(OVERFLOW_REPLY)],
                },
            )?;
            self.store.record(&mut session, Event::Closed { session_id: id, at })?;
            return Err(ServiceError::ContextOverflow(OVERFLOW_REPLY.to_string()));
        }

        let cfg = self.decode_config();
        let seed = reply_seed(&session.session_id, transcript.len());
        let reply = tokio::task::spawn_blocking(move || {
            let agent = PolicyAgent::new(&art, &cfg);
            agent.respond(&transcript, &mut ChaCha8Rng::seed_from_u64(seed))
        })
        .await
        .map_err(|e| ServiceError::Internal(format!("decode task failed: {e}")))??;
        let mut agent = Utterance::agent(&reply.text);
        if agent.text.is_empty() {
            agent = Utterance::agent(EMPTY_REPLY);
        }
        let id = session.session_id.clone();
        self.store.record(
            &mut session,
            Event::Utterances {
                session_id: id,
                at: now_ms(),
                utterances: vec![human, agent.clone()],
            },
        )?;
        Ok(agent.text)
    }

    /// Store ratings; a later submission replaces an earlier one.
    pub async fn submit_rating(&self, session_id: &str, raw: [i64; 4]) -> Result<Rating> {
        let slot = self.store.get(session_id)?;
        let rating = Rating::from_raw(raw[0], raw[1], raw[2], raw[3])?;
        let mut session = slot.lock().await;
        let id = session.session_id.clone();
        self.store.record(
            &mut session,
            Event::Rated {
                session_id: id,
                at: now_ms(),
                rating,
            },
        )?;
        Ok(rating)
    }
}
