//! Plain-text transcript format: one utterance per line, prefixed `AI: ` or `H: `.

use crate::dialogue::{Dialogue, Speaker, Utterance};
use crate::error::{CoreError, Result};
use crate::vocab::{AGENT_PREFIX, END_OF_TURN, HUMAN_PREFIX};

pub fn render_dialogue(d: &Dialogue) -> String {
    render_utterances(&d.utterances)
}

pub fn render_utterances(utterances: &[Utterance]) -> String {
    let mut out = String::new();
    for u in utterances {
        out.push_str(u.speaker.prefix());
        out.push(' ');
        out.push_str(&u.text);
        out.push('\n');
    }
    out
}

/// Transcript with an explicit end-of-turn marker after each agent utterance.
/// Tokenizing this text yields the dialogue's MDP token stream.
pub fn render_marked(d: &Dialogue) -> String {
    let mut out = String::new();
    for u in &d.utterances {
        out.push_str(u.speaker.prefix());
        out.push(' ');
        out.push_str(&u.text);
        if u.speaker == Speaker::Agent {
            out.push(' ');
            out.push_str(END_OF_TURN);
        }
        out.push('\n');
    }
    out
}

/// Parse `AI:`/`H:` prefixed lines. Unprefixed lines continue the previous
/// utterance; unprefixed lines before the first utterance are ignored.
pub fn parse_transcript(text: &str) -> Result<Vec<Utterance>> {
    let mut out: Vec<(Speaker, String)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(AGENT_PREFIX) {
            out.push((Speaker::Agent, rest.to_string()));
        } else if let Some(rest) = line.strip_prefix(HUMAN_PREFIX) {
            out.push((Speaker::Human, rest.to_string()));
        } else if let Some((_, text)) = out.last_mut() {
            text.push(' ');
            text.push_str(line);
        }
    }
    let utterances: Vec<Utterance> = out
        .into_iter()
        .map(|(s, t)| Utterance::new(s, t))
        .filter(|u| !u.text.is_empty())
        .collect();
    if utterances.is_empty() {
        return Err(CoreError::UnparseableTranscript);
    }
    Ok(utterances)
}
