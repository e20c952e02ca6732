//! Replays the agent side of a stored transcript, turn by turn.

use std::path::Path;

use super::{Agent, AgentError, AgentReply, Turn};
use crate::tasks::{Role, Transcript};

pub struct ReplayAgent {
    id: String,
    replies: Vec<AgentReply>,
    next: usize,
}

impl ReplayAgent {
    pub fn new(id: String, transcript: &Transcript) -> Self {
        let replies = transcript
            .entries()
            .iter()
            .filter(|e| e.role == Role::Agent)
            .map(|e| AgentReply { text: e.text.clone(), usage: e.usage })
            .collect();
        Self { id, replies, next: 0 }
    }

    pub fn from_file(id: String, path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)?;
        let transcript =
            Transcript::from_jsonl(&text).map_err(|e| AgentError::BadResponse(format!("{}: {e}", path.display())))?;
        Ok(Self::new(id, &transcript))
    }
}

impl Agent for ReplayAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn next_message(&mut self, _turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let reply = self.replies.get(self.next).cloned().ok_or(AgentError::ReplayExhausted(self.next))?;
        self.next += 1;
        Ok(reply)
    }
}
