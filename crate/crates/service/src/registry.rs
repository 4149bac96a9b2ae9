//! Static policy registry: task bundles and checkpoints named in a JSON file
//! and loaded once at startup.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use imagine_core::TaskDescription;
use imagine_learners::{PolicyArtifact, PolicyKind};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySource {
    pub policy_id: String,
    pub checkpoint: PathBuf,
    pub kind: PolicyKind,
    pub task_id: String,
}

/// Registry file contents. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegistryFile {
    /// task_id → bundle directory.
    pub tasks: BTreeMap<String, PathBuf>,
    pub policies: Vec<PolicySource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRegistryEntry {
    pub policy_id: String,
    pub checkpoint: PathBuf,
    pub kind: PolicyKind,
    pub task_id: String,
    pub loaded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
pub struct Registry {
    tasks: BTreeMap<String, Arc<TaskDescription>>,
    entries: Vec<PolicyRegistryEntry>,
    artifacts: HashMap<String, Arc<PolicyArtifact>>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_artifact(src: &PolicySource, art: &PolicyArtifact) -> std::result::Result<(), String> {
    if art.kind != src.kind {
        return Err(format!("checkpoint is a {} policy, registry says {}", art.kind, src.kind));
    }
    if art.manifest.task_id != src.task_id {
        return Err(format!(
            "checkpoint was trained for task {:?}, registry says {:?}",
            art.manifest.task_id, src.task_id
        ));
    }
    Ok(())
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let file: RegistryFile = serde_json::from_str(&text).map_err(|e| ServiceError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reg = Registry::new();
        for (id, dir) in &file.tasks {
            let task = TaskDescription::load_bundle(resolve(base, dir))?;
            if &task.task_id != id {
                return Err(ServiceError::Config(format!("bundle for {id:?} declares task_id {:?}", task.task_id)));
            }
            reg.add_task(task);
        }
        for src in file.policies {
            let src = PolicySource {
                checkpoint: resolve(base, &src.checkpoint),
                ..src
            };
            let loaded = PolicyArtifact::load(&src.checkpoint).map_err(|e| e.to_string());
            reg.add_policy(src, loaded);
        }
        Ok(reg)
    }

    pub fn add_task(&mut self, task: TaskDescription) {
        self.tasks.insert(task.task_id.clone(), Arc::new(task));
    }

    /// Register a policy. A failed load or a manifest that disagrees with the
    /// source keeps the entry listed but unusable.
    pub fn add_policy(&mut self, src: PolicySource, artifact: std::result::Result<PolicyArtifact, String>) {
        let checked = artifact.and_then(|a| check_artifact(&src, &a).map(|()| a));
        let error = match checked {
            Ok(a) => {
                self.artifacts.insert(src.policy_id.clone(), Arc::new(a));
                None
            }
            Err(e) => {
                log::warn!("policy {}: {e}", src.policy_id);
                Some(e)
            }
        };
        self.entries.retain(|e| e.policy_id != src.policy_id);
        self.entries.push(PolicyRegistryEntry {
            policy_id: src.policy_id,
            checkpoint: src.checkpoint,
            kind: src.kind,
            task_id: src.task_id,
            loaded: error.is_none(),
            error,
        });
    }

    pub fn task(&self, task_id: &str) -> Result<&Arc<TaskDescription>> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| ServiceError::UnknownTask(task_id.to_string()))
    }

    pub fn policy(&self, policy_id: &str) -> Result<&Arc<PolicyArtifact>> {
        self.artifacts
            .get(policy_id)
            .ok_or_else(|| ServiceError::UnknownPolicy(policy_id.to_string()))
    }

    pub fn entries(&self) -> &[PolicyRegistryEntry] {
        &self.entries
    }
}
