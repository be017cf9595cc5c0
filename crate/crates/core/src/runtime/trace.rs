//! Execution trace: one event per counted step, serialized as JSON lines.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Applied,
    NoMatch,
    Branch,
    Entered,
    Returned,
    MethodEntered,
    MethodReturned,
    /// The node raised an error; `label` holds the message.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    /// Strictly increasing, starting at 1.
    pub step: u64,
    /// Activity (or `Class.method` body) the node belongs to.
    pub activity: String,
    pub node: String,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receiver: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<serde_json::Value>,
}

impl TraceEvent {
    pub fn new(step: u64, activity: &str, node: &str, outcome: Outcome) -> Self {
        TraceEvent {
            step,
            activity: activity.to_string(),
            node: node.to_string(),
            outcome,
            rule: None,
            label: None,
            method: None,
            receiver: None,
            delta: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace event serializes")
    }
}

/// Render a trace as JSON lines, newline-terminated.
pub fn to_json_lines(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}
