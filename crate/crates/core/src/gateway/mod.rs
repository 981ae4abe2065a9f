//! Wire contract between the protocol engine and an agent, plus grading.
//!
//! An agent is anything implementing [`AgentHandle`]: the built-in
//! simulator, a scripted fixture, or an external process / HTTP endpoint
//! speaking newline-delimited JSON records (see [`wire`]). The engine talks to
//! agents through a [`Session`], which enforces strict request/response
//! alternation and rejects calls to tools that were not offered.

mod grade;
mod process;
mod scripted;
pub mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::sim::SimAgent;
use crate::trial::{TaskVariant, Turn};

pub use grade::{grade, GradeError, GraderDescriptor};
pub use process::{HttpTransport, ProcessTransport};
pub use scripted::{ScriptedAgent, ScriptedSpec};
pub use wire::{Transport, WireAgent, PROTOCOL_VERSION};

pub const ASK_TOOL_NAME: &str = "ask_user";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
pub const DEFAULT_MAX_RESPONSE_BYTES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("protocol version mismatch: harness speaks {ours}, agent speaks {theirs}")]
    VersionMismatch { ours: String, theirs: String },
    #[error("agent did not respond within {0:?}")]
    Timeout(Duration),
    #[error("malformed agent record: {0}")]
    Malformed(String),
    #[error("agent response of {got} bytes exceeds the {limit}-byte cap")]
    Oversized { limit: usize, got: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("agent reported an error: {0}")]
    Agent(String),
    #[error("agent closed the session")]
    Closed,
    #[error("transport i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Object,
    Array,
}

impl ParamType {
    fn as_str(self) -> &'static str {
        match self {
            ParamType::String => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
            ParamType::Object => "object",
            ParamType::Array => "array",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "string" => ParamType::String,
            "integer" => ParamType::Integer,
            "number" => ParamType::Number,
            "boolean" => ParamType::Boolean,
            "object" => ParamType::Object,
            "array" => ParamType::Array,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToolParameter {
    pub name: String,
    pub kind: ParamType,
    pub description: String,
    pub required: bool,
    pub default: Option<Value>,
}

/// A tool offered to the agent. Serializes in the function-calling layout
/// `{"name", "description", "parameters": {"properties", "required"}}` with
/// properties kept in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParameter>,
}

impl ToolDescriptor {
    pub fn to_json(&self) -> Value {
        let mut properties = Map::new();
        for p in &self.parameters {
            let mut prop = Map::new();
            prop.insert("type".into(), Value::from(p.kind.as_str()));
            prop.insert("description".into(), Value::from(p.description.clone()));
            if let Some(default) = &p.default {
                prop.insert("default".into(), default.clone());
            }
            properties.insert(p.name.clone(), Value::Object(prop));
        }
        let required: Vec<Value> = self
            .parameters
            .iter()
            .filter(|p| p.required)
            .map(|p| Value::from(p.name.clone()))
            .collect();
        let mut params = Map::new();
        params.insert("properties".into(), Value::Object(properties));
        params.insert("required".into(), Value::Array(required));
        let mut out = Map::new();
        out.insert("name".into(), Value::from(self.name.clone()));
        out.insert("description".into(), Value::from(self.description.clone()));
        out.insert("parameters".into(), Value::Object(params));
        Value::Object(out)
    }

    pub fn from_json(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("tool descriptor must be an object")?;
        let text = |key: &str| -> Result<String, String> {
            obj.get(key)
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| format!("tool descriptor missing string field `{key}`"))
        };
        let name = text("name")?;
        let description = obj
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let mut parameters = Vec::new();
        if let Some(params) = obj.get("parameters") {
            let required: Vec<&str> = params
                .get("required")
                .and_then(Value::as_array)
                .map(|r| r.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            if let Some(props) = params.get("properties").and_then(Value::as_object) {
                for (pname, prop) in props {
                    let kind = prop
                        .get("type")
                        .and_then(Value::as_str)
                        .and_then(ParamType::parse)
                        .ok_or_else(|| format!("parameter `{pname}` has no recognised type"))?;
                    parameters.push(ToolParameter {
                        name: pname.clone(),
                        kind,
                        description: prop
                            .get("description")
                            .and_then(Value::as_str)
                            .unwrap_or_default()
                            .to_string(),
                        required: required.contains(&pname.as_str()),
                        default: prop.get("default").cloned(),
                    });
                }
            }
        }
        Ok(ToolDescriptor {
            name,
            description,
            parameters,
        })
    }
}

impl Serialize for ToolDescriptor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ToolDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        ToolDescriptor::from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// The clarification tool offered in natural-ask sessions.
pub fn ask_user_tool() -> ToolDescriptor {
    ToolDescriptor {
        name: ASK_TOOL_NAME.to_string(),
        description: "Ask the user a clarifying question to get more information about the task. \
                      Use this when the task is ambiguous or you need specific details to proceed."
            .to_string(),
        parameters: vec![
            ToolParameter {
                name: "question".to_string(),
                kind: ParamType::String,
                description: "The clarifying question to ask.".to_string(),
                required: true,
                default: None,
            },
            ToolParameter {
                name: "context".to_string(),
                kind: ParamType::String,
                description: "Optional additional context.".to_string(),
                required: false,
                default: Some(Value::from("")),
            },
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_actions_remaining: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    /// Equals 1 + the number of actions the agent has already taken.
    pub step_index: u32,
    pub limits: Limits,
    pub tools: Vec<ToolDescriptor>,
    pub conversation: Vec<Turn>,
}

impl AgentRequest {
    pub fn offers(&self, tool: &str) -> bool {
        self.tools.iter().any(|t| t.name == tool)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentResponse {
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
}

impl AgentResponse {
    pub fn tool_call(name: &str, arguments: Value) -> Self {
        AgentResponse::ToolCall {
            name: name.to_string(),
            arguments: match arguments {
                Value::Object(m) => m,
                _ => Map::new(),
            },
        }
    }
}

/// Per-trial context announced to the agent before the first request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialContext {
    pub variant_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub passthrough: Map<String, Value>,
}

pub trait AgentHandle: Send {
    fn model(&self) -> &str;

    fn begin_trial(&mut self, ctx: &TrialContext) -> Result<(), GatewayError>;

    fn exchange(&mut self, request: &AgentRequest) -> Result<AgentResponse, GatewayError>;
}

/// An open agent session. Exactly one response per request.
pub struct Session {
    handle: Box<dyn AgentHandle>,
    passthrough: Map<String, Value>,
}

impl Session {
    pub fn new(handle: Box<dyn AgentHandle>) -> Self {
        Self {
            handle,
            passthrough: Map::new(),
        }
    }

    pub fn with_passthrough(mut self, passthrough: Map<String, Value>) -> Self {
        self.passthrough = passthrough;
        self
    }

    pub fn model(&self) -> &str {
        self.handle.model()
    }

    pub fn begin_trial(&mut self, variant_id: &str, seed: u64) -> Result<(), GatewayError> {
        let ctx = TrialContext {
            variant_id: variant_id.to_string(),
            seed,
            passthrough: self.passthrough.clone(),
        };
        self.handle.begin_trial(&ctx)
    }

    pub fn exchange(&mut self, request: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        let response = self.handle.exchange(request)?;
        if let AgentResponse::ToolCall { name, .. } = &response {
            if !request.offers(name) {
                return Err(GatewayError::ProtocolViolation(format!(
                    "agent called `{name}`, which was not offered"
                )));
            }
        }
        Ok(response)
    }
}

/// Where an agent lives and how to reach it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointDescriptor {
    /// The built-in simulated agent; profiles come from the variants' sim graders.
    Sim {
        model: String,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        passthrough: Map<String, Value>,
    },
    Scripted {
        model: String,
        #[serde(flatten)]
        spec: ScriptedSpec,
    },
    Process {
        model: String,
        command: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
        #[serde(default)]
        max_response_bytes: Option<usize>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        passthrough: Map<String, Value>,
    },
    Http {
        model: String,
        url: String,
        #[serde(default)]
        timeout_secs: Option<u64>,
        #[serde(default)]
        max_response_bytes: Option<usize>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        passthrough: Map<String, Value>,
    },
}

impl EndpointDescriptor {
    pub fn model(&self) -> &str {
        match self {
            EndpointDescriptor::Sim { model, .. }
            | EndpointDescriptor::Scripted { model, .. }
            | EndpointDescriptor::Process { model, .. }
            | EndpointDescriptor::Http { model, .. } => model,
        }
    }

    fn passthrough(&self) -> Map<String, Value> {
        match self {
            EndpointDescriptor::Sim { passthrough, .. }
            | EndpointDescriptor::Process { passthrough, .. }
            | EndpointDescriptor::Http { passthrough, .. } => passthrough.clone(),
            EndpointDescriptor::Scripted { .. } => Map::new(),
        }
    }
}

/// Opens a session and, for wire agents, performs the version handshake.
pub fn open_session(
    descriptor: &EndpointDescriptor,
    variants: &[TaskVariant],
) -> Result<Session, GatewayError> {
    let handle: Box<dyn AgentHandle> = match descriptor {
        EndpointDescriptor::Sim { model, .. } => Box::new(SimAgent::from_variants(model, variants)),
        EndpointDescriptor::Scripted { model, spec } => {
            Box::new(ScriptedAgent::from_spec(model, spec.clone()))
        }
        EndpointDescriptor::Process {
            model,
            command,
            args,
            timeout_secs,
            max_response_bytes,
            ..
        } => {
            let transport = ProcessTransport::spawn(
                command,
                args,
                timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_TIMEOUT),
                max_response_bytes.unwrap_or(DEFAULT_MAX_RESPONSE_BYTES),
            )?;
            Box::new(WireAgent::connect(model, transport)?)
        }
        EndpointDescriptor::Http {
            model,
            url,
            timeout_secs,
            max_response_bytes,
            ..
        } => {
            let transport = HttpTransport::new(
                url,
                timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_TIMEOUT),
                max_response_bytes.unwrap_or(DEFAULT_MAX_RESPONSE_BYTES),
            );
            Box::new(WireAgent::connect(model, transport)?)
        }
    };
    Ok(Session::new(handle).with_passthrough(descriptor.passthrough()))
}
