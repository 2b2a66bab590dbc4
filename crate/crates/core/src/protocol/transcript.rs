//! Append-only message log with canonical JSON-lines export.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Client,
    Server,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: usize,
    pub sender: Party,
    pub step: String,
    pub payload: Value,
}

/// Messages in send order. A disabled transcript drops everything without
/// building payloads, which keeps bulk statistics runs cheap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    enabled: bool,
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            messages: Vec::new(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn record<F>(&mut self, sender: Party, step: impl Into<String>, payload: F)
    where
        F: FnOnce() -> Value,
    {
        if self.enabled {
            let seq = self.messages.len();
            self.messages.push(Message {
                seq,
                sender,
                step: step.into(),
                payload: payload(),
            });
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// One JSON object per line, keys sorted.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let v = serde_json::to_value(m).expect("messages serialize");
            out.push_str(&serde_json::to_string(&v).expect("values serialize"));
            out.push('\n');
        }
        out
    }
}
