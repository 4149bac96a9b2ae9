//! Token-level dialogue MDP.
//!
//! The state is the token stream so far. Agent tokens (utterance words plus the
//! closing `<eot>`) are actions. Everything else, including speaker prefixes and
//! human words, is observation appended by the environment after an `<eot>`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Speaker};
use crate::error::{CoreError, Result};
use crate::vocab::{TokenId, Tokenizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<TokenId>,
    pub action: TokenId,
    pub next_state: Vec<TokenId>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub transitions: Vec<Transition>,
    pub source_counts: BTreeMap<String, usize>,
    pub vocab_id: String,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Key used in `source_counts` for the dialogue at `index` (0-based).
pub fn dialogue_key(index: usize) -> String {
    format!("d{}", index + 1)
}

pub fn advance_state<T: Tokenizer + ?Sized>(
    tokenizer: &T,
    state: &[TokenId],
    agent_token: TokenId,
    human_response: Option<&[TokenId]>,
) -> Result<Vec<TokenId>> {
    let mut next = Vec::with_capacity(state.len() + 1 + human_response.map_or(0, <[_]>::len));
    next.extend_from_slice(state);
    next.push(agent_token);
    if agent_token == tokenizer.specials().end_of_turn {
        next.extend_from_slice(human_response.ok_or(CoreError::MissingObservation)?);
    }
    Ok(next)
}

/// Token stream of a dialogue together with a mask marking agent actions.
pub fn dialogue_stream<T: Tokenizer + ?Sized>(d: &Dialogue, tokenizer: &T) -> (Vec<TokenId>, Vec<bool>) {
    let sp = tokenizer.specials();
    let mut tokens = Vec::new();
    let mut is_agent = Vec::new();
    for u in &d.utterances {
        let words = tokenizer.tokenize(&u.text);
        match u.speaker {
            Speaker::Agent => {
                tokens.push(sp.agent_prefix);
                is_agent.push(false);
                is_agent.extend(std::iter::repeat_n(true, words.len() + 1));
                tokens.extend(words);
                tokens.push(sp.end_of_turn);
            }
            Speaker::Human => {
                tokens.push(sp.human_prefix);
                is_agent.extend(std::iter::repeat_n(false, words.len() + 1));
                tokens.extend(words);
            }
        }
    }
    (tokens, is_agent)
}

pub fn postprocess_dialogue<T: Tokenizer + ?Sized>(
    d: &Dialogue,
    tokenizer: &T,
) -> Result<Vec<Transition>> {
    postprocess_indexed(d, tokenizer, 0)
}

fn postprocess_indexed<T: Tokenizer + ?Sized>(
    d: &Dialogue,
    tokenizer: &T,
    index: usize,
) -> Result<Vec<Transition>> {
    if d.reward > 1 {
        return Err(CoreError::InvalidDialogue(format!("reward {} not in {{0,1}}", d.reward)));
    }
    let (tokens, is_agent) = dialogue_stream(d, tokenizer);
    let positions: Vec<usize> = (0..tokens.len()).filter(|&i| is_agent[i]).collect();
    if positions.is_empty() {
        return Err(CoreError::EmptyAgentTurns {
            dialogue: dialogue_key(index),
        });
    }
    let last = positions.len() - 1;
    Ok(positions
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let end = positions.get(k + 1).copied().unwrap_or(tokens.len());
            let done = k == last;
            Transition {
                state: tokens[..p].to_vec(),
                action: tokens[p],
                next_state: tokens[..end].to_vec(),
                reward: if done { d.reward as f64 } else { 0.0 },
                done,
            }
        })
        .collect())
}

pub fn build_dataset(dialogues: &[Dialogue], vocab: &crate::vocab::Vocab) -> Result<TransitionDataset> {
    let mut ds = TransitionDataset {
        vocab_id: vocab.vocab_id(),
        ..Default::default()
    };
    for (i, d) in dialogues.iter().enumerate() {
        let ts = postprocess_indexed(d, vocab, i)?;
        ds.source_counts.insert(dialogue_key(i), ts.len());
        ds.transitions.extend(ts);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{Provenance, Utterance};
    use crate::transcript::render_marked;
    use crate::vocab::Vocab;

    fn d(reward: u8, utterances: Vec<Utterance>) -> Dialogue {
        Dialogue {
            task_id: "t".into(),
            persona_id: "p".into(),
            reward,
            provenance: Provenance::Imagined,
            utterances,
        }
    }

    fn vocab() -> Vocab {
        Vocab::build(["q a b t1 t2 h1 h2"], false)
    }

    #[test]
    fn append_without_turn_end() {
        let v = vocab();
        let t1 = v.id("t1").unwrap();
        let t2 = v.id("t2").unwrap();
        assert_eq!(advance_state(&v, &[t1], t2, None).unwrap(), vec![t1, t2]);
    }

    #[test]
    fn turn_end_appends_observation() {
        let v = vocab();
        let [t1, h1, h2] = ["t1", "h1", "h2"].map(|w| v.id(w).unwrap());
        let eot = v.specials().end_of_turn;
        assert_eq!(
            advance_state(&v, &[t1], eot, Some(&[h1, h2])).unwrap(),
            vec![t1, eot, h1, h2]
        );
        assert!(matches!(
            advance_state(&v, &[t1], eot, None),
            Err(CoreError::MissingObservation)
        ));
    }

    #[test]
    fn hand_enumerated_transitions() {
        let v = vocab();
        let dia = d(1, vec![Utterance::human("q"), Utterance::agent("a b")]);
        let ts = postprocess_dialogue(&dia, &v).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.iter().map(|t| t.reward).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(ts.iter().map(|t| t.done).collect::<Vec<_>>(), vec![false, false, true]);
        let sp = v.specials();
        let (q, a, b) = (v.id("q").unwrap(), v.id("a").unwrap(), v.id("b").unwrap());
        assert_eq!(ts[0].state, vec![sp.human_prefix, q, sp.agent_prefix]);
        assert_eq!(ts[0].action, a);
        assert_eq!(ts[2].action, sp.end_of_turn);
        assert_eq!(ts[2].next_state, vec![sp.human_prefix, q, sp.agent_prefix, a, b, sp.end_of_turn]);
    }

    #[test]
    fn zero_reward_everywhere() {
        let v = vocab();
        let dia = d(0, vec![Utterance::agent("a"), Utterance::human("q")]);
        let ts = postprocess_dialogue(&dia, &v).unwrap();
        assert!(ts.iter().all(|t| t.reward == 0.0));
        // Last transition absorbs the trailing human reply.
        assert_eq!(ts.last().unwrap().next_state.len(), 5);
    }

    #[test]
    fn human_only_dialogue_has_no_actions() {
        let v = vocab();
        let mut dia = d(1, vec![Utterance::human("q")]);
        dia.provenance = Provenance::Live;
        assert!(matches!(
            postprocess_dialogue(&dia, &v),
            Err(CoreError::EmptyAgentTurns { .. })
        ));
    }

    #[test]
    fn dataset_counts_and_errors() {
        let v = vocab();
        assert!(build_dataset(&[], &v).unwrap().is_empty());
        let d1 = d(1, vec![Utterance::human("q"), Utterance::agent("a b")]);
        let d2 = d(0, vec![Utterance::agent("a b t1 t2"), Utterance::human("h1")]);
        let ds = build_dataset(&[d1.clone(), d2], &v).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.source_counts["d1"], 3);
        assert_eq!(ds.source_counts["d2"], 5);
        assert_eq!(ds.vocab_id, v.vocab_id());
        let bad = d(1, vec![Utterance::human("q")]);
        match build_dataset(&[d1, bad], &v) {
            Err(CoreError::EmptyAgentTurns { dialogue }) => assert_eq!(dialogue, "d2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stream_equals_tokenized_marked_render() {
        let v = vocab();
        let dia = d(
            1,
            vec![Utterance::agent("a"), Utterance::agent("b"), Utterance::human("q h1"), Utterance::human("h2")],
        );
        assert_eq!(dialogue_stream(&dia, &v).0, v.tokenize(&render_marked(&dia)));
    }
}
