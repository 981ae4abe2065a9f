//! Newline-delimited JSON records exchanged with external agents.
//!
//! Harness → agent:
//!
//! ```text
//! {"type":"hello","protocol":"clarify-wire/1"}
//! {"type":"trial_start","variant_id":"...","seed":0,"passthrough":{...}}
//! {"type":"request","step_index":1,"limits":{...},"tools":[...],"conversation":[...]}
//! ```
//!
//! Agent → harness:
//!
//! ```text
//! {"type":"hello","protocol":"clarify-wire/1","agent":"name"}
//! {"type":"ack"}
//! {"type":"tool_call","name":"...","arguments":{...}} | {"type":"message","text":"..."} |
//! {"type":"finish","answer":"..."} | {"type":"error","message":"..."}
//! ```
//!
//! Every harness record is answered by exactly one agent record.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AgentHandle, AgentRequest, AgentResponse, GatewayError, Limits, ToolDescriptor, TrialContext};
use crate::trial::Turn;

pub const PROTOCOL_VERSION: &str = "clarify-wire/1";

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HarnessRecord<'a> {
    Hello {
        protocol: &'a str,
    },
    TrialStart {
        variant_id: &'a str,
        seed: u64,
        #[serde(skip_serializing_if = "Map::is_empty")]
        passthrough: &'a Map<String, Value>,
    },
    Request {
        step_index: u32,
        limits: Limits,
        tools: &'a [ToolDescriptor],
        conversation: &'a [Turn],
    },
}

impl<'a> HarnessRecord<'a> {
    pub fn request(req: &'a AgentRequest) -> Self {
        HarnessRecord::Request {
            step_index: req.step_index,
            limits: req.limits,
            tools: &req.tools,
            conversation: &req.conversation,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("harness records always serialize")
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentRecord {
    Hello {
        protocol: String,
        #[serde(default)]
        agent: Option<String>,
    },
    Ack,
    ToolCall {
        name: String,
        #[serde(default)]
        arguments: Map<String, Value>,
    },
    Message {
        text: String,
    },
    Finish {
        answer: String,
    },
    Error {
        message: String,
    },
}

impl AgentRecord {
    pub fn parse(line: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(line.trim_end()).map_err(|e| GatewayError::Malformed(format!("{e}: {line}")))
    }
}

/// One record out, one record back.
pub trait Transport: Send {
    fn roundtrip(&mut self, line: &str) -> Result<String, GatewayError>;
}

/// An agent reached over a [`Transport`].
pub struct WireAgent<T: Transport> {
    model: String,
    transport: T,
    remote_name: Option<String>,
}

impl<T: Transport> WireAgent<T> {
    pub fn connect(model: &str, mut transport: T) -> Result<Self, GatewayError> {
        let hello = HarnessRecord::Hello {
            protocol: PROTOCOL_VERSION,
        };
        let reply = transport.roundtrip(&hello.to_line())?;
        match AgentRecord::parse(&reply)? {
            AgentRecord::Hello { protocol, agent } => {
                if protocol != PROTOCOL_VERSION {
                    return Err(GatewayError::VersionMismatch {
                        ours: PROTOCOL_VERSION.to_string(),
                        theirs: protocol,
                    });
                }
                Ok(Self {
                    model: model.to_string(),
                    transport,
                    remote_name: agent,
                })
            }
            other => Err(GatewayError::Malformed(format!(
                "expected hello, got {other:?}"
            ))),
        }
    }

    pub fn remote_name(&self) -> Option<&str> {
        self.remote_name.as_deref()
    }
}

impl<T: Transport> AgentHandle for WireAgent<T> {
    fn model(&self) -> &str {
        &self.model
    }

    fn begin_trial(&mut self, ctx: &TrialContext) -> Result<(), GatewayError> {
        let record = HarnessRecord::TrialStart {
            variant_id: &ctx.variant_id,
            seed: ctx.seed,
            passthrough: &ctx.passthrough,
        };
        match AgentRecord::parse(&self.transport.roundtrip(&record.to_line())?)? {
            AgentRecord::Ack => Ok(()),
            AgentRecord::Error { message } => Err(GatewayError::Agent(message)),
            other => Err(GatewayError::Malformed(format!("expected ack, got {other:?}"))),
        }
    }

    fn exchange(&mut self, request: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        let line = HarnessRecord::request(request).to_line();
        match AgentRecord::parse(&self.transport.roundtrip(&line)?)? {
            AgentRecord::ToolCall { name, arguments } => Ok(AgentResponse::ToolCall { name, arguments }),
            AgentRecord::Message { text } => Ok(AgentResponse::Message { text }),
            AgentRecord::Finish { answer } => Ok(AgentResponse::Finish { answer }),
            AgentRecord::Error { message } => Err(GatewayError::Agent(message)),
            other => Err(GatewayError::Malformed(format!(
                "expected an action record, got {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    struct Canned {
        replies: VecDeque<String>,
        sent: Vec<String>,
    }

    impl Transport for Canned {
        fn roundtrip(&mut self, line: &str) -> Result<String, GatewayError> {
            self.sent.push(line.to_string());
            self.replies.pop_front().ok_or(GatewayError::Closed)
        }
    }

    fn canned(replies: &[&str]) -> Canned {
        Canned {
            replies: replies.iter().map(|s| s.to_string()).collect(),
            sent: Vec::new(),
        }
    }

    #[test]
    fn handshake_sends_version() {
        let agent = WireAgent::connect(
            "m",
            canned(&[r#"{"type":"hello","protocol":"clarify-wire/1","agent":"echo"}"#]),
        )
        .unwrap();
        assert_eq!(agent.remote_name(), Some("echo"));
        assert_eq!(agent.transport.sent[0], r#"{"type":"hello","protocol":"clarify-wire/1"}"#);
    }

    #[test]
    fn version_mismatch_names_both() {
        let err = WireAgent::connect("m", canned(&[r#"{"type":"hello","protocol":"clarify-wire/0"}"#]))
            .err()
            .unwrap();
        let msg = err.to_string();
        assert!(msg.contains("clarify-wire/1") && msg.contains("clarify-wire/0"), "{msg}");
    }

    #[test]
    fn malformed_reply_is_error() {
        let mut agent = WireAgent::connect(
            "m",
            canned(&[r#"{"type":"hello","protocol":"clarify-wire/1"}"#, r#"{"type":"dance"}"#]),
        )
        .unwrap();
        let req = AgentRequest {
            step_index: 1,
            limits: Limits {
                max_actions_remaining: 1,
            },
            tools: vec![],
            conversation: vec![],
        };
        assert!(matches!(agent.exchange(&req), Err(GatewayError::Malformed(_))));
    }

    #[test]
    fn request_record_field_order_is_fixed() {
        let req = AgentRequest {
            step_index: 2,
            limits: Limits {
                max_actions_remaining: 4,
            },
            tools: vec![],
            conversation: vec![],
        };
        assert_eq!(
            HarnessRecord::request(&req).to_line(),
            r#"{"type":"request","step_index":2,"limits":{"max_actions_remaining":4},"tools":[],"conversation":[]}"#
        );
    }
}
