use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::vocab::{canonicalize, AGENT_PREFIX, HUMAN_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    Human,
}

impl Speaker {
    pub fn prefix(self) -> &'static str {
        match self {
            Speaker::Agent => AGENT_PREFIX,
            Speaker::Human => HUMAN_PREFIX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    /// Canonicalizes whitespace; the result may still be invalid.
    pub fn new(speaker: Speaker, text: impl AsRef<str>) -> Self {
        Utterance {
            speaker,
            text: canonicalize(text.as_ref()),
        }
    }

    pub fn agent(text: impl AsRef<str>) -> Self {
        Self::new(Speaker::Agent, text)
    }

    pub fn human(text: impl AsRef<str>) -> Self {
        Self::new(Speaker::Human, text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(CoreError::InvalidDialogue("empty utterance".into()));
        }
        if self
            .text
            .split_whitespace()
            .any(|w| w == AGENT_PREFIX || w == HUMAN_PREFIX)
        {
            return Err(CoreError::InvalidDialogue(format!(
                "utterance contains a speaker prefix: {:?}",
                self.text
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Imagined,
    Critiqued,
    Live,
    Scripted,
}

/// One line of the corpus JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub task_id: String,
    pub persona_id: String,
    pub reward: u8,
    pub provenance: Provenance,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<()> {
        if self.reward > 1 {
            return Err(CoreError::InvalidDialogue(format!(
                "reward must be 0 or 1, got {}",
                self.reward
            )));
        }
        for u in &self.utterances {
            u.validate()?;
        }
        if matches!(self.provenance, Provenance::Imagined | Provenance::Critiqued) {
            let has = |s| self.utterances.iter().any(|u| u.speaker == s);
            if !has(Speaker::Agent) || !has(Speaker::Human) {
                return Err(CoreError::InvalidDialogue(
                    "synthesized dialogue needs both an agent and a human turn".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn agent_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.speaker == Speaker::Agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(reward: u8, utterances: Vec<Utterance>) -> Dialogue {
        Dialogue {
            task_id: "t".into(),
            persona_id: "p".into(),
            reward,
            provenance: Provenance::Imagined,
            utterances,
        }
    }

    #[test]
    fn rejects_non_binary_reward() {
        let d = dialogue(2, vec![Utterance::agent("a"), Utterance::human("b")]);
        assert!(d.validate().is_err());
    }

    #[test]
    fn imagined_needs_both_speakers() {
        let d = dialogue(1, vec![Utterance::agent("a")]);
        assert!(d.validate().is_err());
        let mut live = d.clone();
        live.provenance = Provenance::Live;
        assert!(live.validate().is_ok());
    }

    #[test]
    fn utterance_rejects_prefix_markers() {
        assert!(Utterance::human("fine H: sure").validate().is_err());
        assert!(Utterance::human("   ").validate().is_err());
        assert!(Utterance::human("AI:s are neat").validate().is_ok());
    }

    #[test]
    fn serde_field_names() {
        let d = dialogue(1, vec![Utterance::agent("hi"), Utterance::human("yo")]);
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        assert_eq!(v["provenance"], "imagined");
        assert_eq!(v["utterances"][0]["speaker"], "agent");
        assert_eq!(v["utterances"][1]["text"], "yo");
    }
}
