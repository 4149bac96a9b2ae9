//! Content-addressed response cache: one JSON file per request key.

use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::{CompletionRequest, CompletionResult};

pub(crate) fn key(req: &CompletionRequest, model: &str) -> String {
    let material = serde_json::json!({
        "model": model,
        "prompt": req.prompt,
        "max_tokens": req.max_tokens,
        "temperature": req.temperature,
        "stop": req.stop,
        "seed": req.seed,
    });
    hex::encode(Sha256::digest(material.to_string().as_bytes()))
}

pub(crate) struct Cache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Cache {
    pub fn open(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Cache {
            dir: dir.to_path_buf(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    /// Per-key mutex serializing lookups and fills for one key across threads.
    pub fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("cache lock table")
            .entry(key.to_string())
            .or_default()
            .clone()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CompletionResult> {
        let raw = std::fs::read(self.path(key)).ok()?;
        match serde_json::from_slice(&raw) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, result: &CompletionResult) -> io::Result<()> {
        let tmp = self.dir.join(format!("{key}.json.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(result)?)?;
        std::fs::rename(tmp, self.path(key))
    }
}
