//! Chat sessions and their persistence. Every mutation is appended to
//! `sessions.jsonl` as an event; opening a store replays the log.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use imagine_core::{Dialogue, Utterance};

use crate::error::{Result, ServiceError};

pub const LOG_FILE: &str = "sessions.jsonl";

/// Likert scores for the four live-evaluation questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub a: u8,
    pub b: u8,
    pub c: u8,
    pub d: u8,
}

impl Rating {
    pub fn from_raw(a: i64, b: i64, c: i64, d: i64) -> Result<Self> {
        let raw = [a, b, c, d];
        if raw.iter().any(|v| !(1..=5).contains(v)) {
            return Err(ServiceError::OutOfRangeRating(raw.to_vec()));
        }
        Ok(Rating {
            a: a as u8,
            b: b as u8,
            c: c as u8,
            d: d as u8,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub task_id: String,
    pub policy_id: String,
    pub transcript: Dialogue,
    /// Unix milliseconds.
    pub created_at: u64,
    pub updated_at: u64,
    pub rating: Option<Rating>,
    pub closed: bool,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { session: ChatSession },
    Utterances { session_id: String, at: u64, utterances: Vec<Utterance> },
    Rated { session_id: String, at: u64, rating: Rating },
    Closed { session_id: String, at: u64 },
}

impl Event {
    fn session_id(&self) -> &str {
        match self {
            Event::Created { session } => &session.session_id,
            Event::Utterances { session_id, .. } | Event::Rated { session_id, .. } | Event::Closed { session_id, .. } => {
                session_id
            }
        }
    }

    fn apply(&self, s: &mut ChatSession) {
        match self {
            Event::Created { session } => *s = session.clone(),
            Event::Utterances { at, utterances, .. } => {
                s.transcript.utterances.extend(utterances.iter().cloned());
                s.updated_at = *at;
            }
            Event::Rated { at, rating, .. } => {
                s.rating = Some(*rating);
                s.updated_at = *at;
            }
            Event::Closed { at, .. } => {
                s.closed = true;
                s.updated_at = *at;
            }
        }
    }
}

pub type SessionSlot = Arc<tokio::sync::Mutex<ChatSession>>;

/// Sessions by id. Each session sits behind its own async mutex, which is the
/// single-writer lock for its messages.
pub struct SessionStore {
    sessions: RwLock<HashMap<String, SessionSlot>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore {
            sessions: RwLock::default(),
            log: None,
            path: None,
        }
    }

    /// Open (or create) the event log under `dir` and replay it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let mut sessions: HashMap<String, ChatSession> = HashMap::new();
        let mut keep = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut offset = 0u64;
            let mut lines = reader.split(b'\n').peekable();
            let total = fs::metadata(&path)?.len();
            while let Some(line) = lines.next() {
                let line = line?;
                let end = offset + line.len() as u64 + 1;
                let complete = end <= total;
                offset = end;
                if line.iter().all(u8::is_ascii_whitespace) {
                    if complete {
                        keep = end;
                    }
                    continue;
                }
                let event: Event = match serde_json::from_slice(&line) {
                    Ok(e) => e,
                    Err(e) if lines.peek().is_none() => {
                        log::warn!("dropping partial trailing event in {}: {e}", path.display());
                        break;
                    }
                    Err(e) => {
                        return Err(ServiceError::Config(format!("{}: corrupt event log: {e}", path.display())));
                    }
                };
                if !complete {
                    log::warn!("dropping unterminated trailing event in {}", path.display());
                    break;
                }
                keep = end;
                match &event {
                    Event::Created { session } => {
                        sessions.insert(session.session_id.clone(), session.clone());
                    }
                    other => match sessions.get_mut(other.session_id()) {
                        Some(s) => other.apply(s),
                        None => log::warn!("event for unknown session {}", other.session_id()),
                    },
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() > keep {
            file.set_len(keep)?;
        }
        log::info!("loaded {} sessions from {}", sessions.len(), path.display());
        Ok(SessionStore {
            sessions: RwLock::new(
                sessions
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(tokio::sync::Mutex::new(v))))
                    .collect(),
            ),
            log: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn persist(&self, event: &Event) -> Result<()> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
            f.write_all(&line)?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn insert(&self, session: ChatSession) -> Result<SessionSlot> {
        let id = session.session_id.clone();
        self.persist(&Event::Created {
            session: session.clone(),
        })?;
        let slot = Arc::new(tokio::sync::Mutex::new(session));
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, slot.clone());
        Ok(slot)
    }

    pub fn get(&self, session_id: &str) -> Result<SessionSlot> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    /// Persist `event` then apply it to the locked session.
    pub fn record(&self, session: &mut ChatSession, event: Event) -> Result<()> {
        debug_assert_eq!(event.session_id(), session.session_id);
        self.persist(&event)?;
        event.apply(session);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}
