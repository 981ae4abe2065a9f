use std::time::Instant;

use serde_json::{json, Map, Value};

use super::{InjectionPlan, ProtocolError, TemplateTable};
use crate::gateway::{
    ask_user_tool, grade, AgentRequest, AgentResponse, GatewayError, Limits, Session, ToolDescriptor,
    ASK_TOOL_NAME,
};
use crate::sim;
use crate::trial::{
    Action, AskEvent, Condition, Protocol, Role, TaskVariant, Trial, TrialStatus, Turn,
};

/// Notice appended to the task prompt in natural-ask sessions.
pub const NATURAL_ASK_SUFFIX: &str = "IMPORTANT: Your output will be checked by an auto-grader \
looking for exact answers. This task may be missing critical information. Use the ask_user tool \
to ask the user for any missing details.";

pub const EARLY_TERMINATION_NOTE: &str = "early-termination injection";

/// Executes non-clarification tool calls on behalf of the agent.
pub trait Environment: Send + Sync {
    fn execute(&self, variant: &TaskVariant, tool: &str, arguments: &Map<String, Value>) -> String;
}

/// Acknowledges every call with `"<tool>: ok"`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoEnvironment;

impl Environment for EchoEnvironment {
    fn execute(&self, _variant: &TaskVariant, tool: &str, _arguments: &Map<String, Value>) -> String {
        format!("{tool}: ok")
    }
}

#[derive(Clone, Debug)]
pub struct EngineSettings {
    /// Hard cap on actions per trial.
    pub max_actions: u32,
    pub templates: TemplateTable,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            max_actions: 200,
            templates: TemplateTable::default(),
        }
    }
}

struct TrialSetup<'a> {
    variant: &'a TaskVariant,
    condition: Condition,
    protocol: Protocol,
    seed: u64,
    prompt: String,
    tools: Vec<ToolDescriptor>,
    inject_action: Option<u32>,
    clarification: String,
}

fn environment_tools(variant: &TaskVariant) -> Vec<ToolDescriptor> {
    let base = if variant.tools.is_empty() {
        sim::toolset()
    } else {
        variant.tools.clone()
    };
    base.into_iter().filter(|t| t.name != ASK_TOOL_NAME).collect()
}

fn call_text(name: &str, arguments: &Map<String, Value>) -> String {
    json!({ "name": name, "arguments": arguments }).to_string()
}

fn drive(
    setup: TrialSetup<'_>,
    session: &mut Session,
    env: &dyn Environment,
    settings: &EngineSettings,
) -> Result<Trial, ProtocolError> {
    let started = Instant::now();
    let mut conversation = vec![Turn::new(Role::User, setup.prompt.as_str())];
    let mut actions: Vec<Action> = Vec::new();
    let mut ask_events = Vec::new();
    let mut annotations = Vec::new();
    let mut final_answer = None;
    let mut status = TrialStatus::Completed;
    let mut delivered = false;

    let deliver = |conversation: &mut Vec<Turn>| {
        conversation.push(Turn::injected(setup.clarification.as_str()));
    };

    let fail = |e: GatewayError, annotations: &mut Vec<String>| {
        annotations.push(e.to_string());
        match e {
            GatewayError::ProtocolViolation(_) => TrialStatus::ProtocolViolation,
            _ => TrialStatus::AgentError,
        }
    };

    match session.begin_trial(&setup.variant.variant_id, setup.seed) {
        Ok(()) => loop {
            let taken = actions.len() as u32;
            if taken >= settings.max_actions {
                status = TrialStatus::ActionLimit;
                annotations.push(format!("action limit of {} reached", settings.max_actions));
                break;
            }
            let request = AgentRequest {
                step_index: taken + 1,
                limits: Limits {
                    max_actions_remaining: settings.max_actions - taken,
                },
                tools: setup.tools.clone(),
                conversation: conversation.clone(),
            };
            let response = match session.exchange(&request) {
                Ok(r) => r,
                Err(e) => {
                    status = fail(e, &mut annotations);
                    break;
                }
            };
            let index = taken + 1;
            let pre = setup.inject_action.is_some() && !delivered;
            match response {
                AgentResponse::Finish { answer } => {
                    conversation.push(Turn::new(Role::Assistant, answer.as_str()));
                    final_answer = Some(answer);
                    break;
                }
                AgentResponse::Message { text } => {
                    conversation.push(Turn::new(Role::Assistant, text.as_str()));
                    let mut parameters = Map::new();
                    parameters.insert("text".into(), Value::from(text));
                    actions.push(Action {
                        index,
                        name: "message".into(),
                        parameters,
                        result: String::new(),
                        is_pre_injection: pre,
                    });
                }
                AgentResponse::ToolCall { name, arguments } => {
                    conversation.push(Turn::new(Role::Assistant, call_text(&name, &arguments)));
                    let result = if name == ASK_TOOL_NAME {
                        let question = arguments
                            .get("question")
                            .and_then(Value::as_str)
                            .unwrap_or_default()
                            .to_string();
                        ask_events.push(AskEvent {
                            action_index: index,
                            question,
                        });
                        setup.clarification.clone()
                    } else {
                        env.execute(setup.variant, &name, &arguments)
                    };
                    conversation.push(Turn::new(Role::Tool, result.as_str()));
                    actions.push(Action {
                        index,
                        name,
                        parameters: arguments,
                        result,
                        is_pre_injection: pre,
                    });
                }
            }
            if setup.inject_action == Some(index) && !delivered {
                deliver(&mut conversation);
                delivered = true;
            }
        },
        Err(e) => status = fail(e, &mut annotations),
    }

    if setup.inject_action.is_some() && !delivered && status == TrialStatus::Completed {
        deliver(&mut conversation);
        annotations.push(EARLY_TERMINATION_NOTE.to_string());
    }

    let total = actions.len() as u32;
    let pre = actions.iter().filter(|a| a.is_pre_injection).count() as u32;
    let mut trial = Trial {
        variant_id: setup.variant.variant_id.clone(),
        model: session.model().to_string(),
        protocol: setup.protocol,
        condition: setup.condition,
        injection_point: setup.inject_action,
        seed: setup.seed,
        actions,
        conversation,
        final_answer,
        task_success: false,
        total_actions: total,
        pre_injection_actions: pre,
        post_injection_actions: total - pre,
        duration_seconds: 0.0,
        ask_events,
        status,
        annotations,
        extra: Map::new(),
    };

    if trial.status.is_graded() {
        match grade(&setup.variant.grader, &trial) {
            Ok(success) => trial.task_success = success,
            Err(source) => {
                trial.status = TrialStatus::Ungraded;
                trial.annotations.push(format!("grader failed: {source}"));
                trial.duration_seconds = started.elapsed().as_secs_f64();
                return Err(ProtocolError::Grading {
                    trial: Box::new(trial),
                    source,
                });
            }
        }
    }
    trial.duration_seconds = started.elapsed().as_secs_f64();
    Ok(trial)
}

/// One forced-injection protocol trial. The ask tool is never offered; an
/// injection plan is required for injection conditions.
pub fn run_forced_trial(
    variant: &TaskVariant,
    session: &mut Session,
    condition: Condition,
    seed: u64,
    plan: Option<&InjectionPlan>,
    env: &dyn Environment,
    settings: &EngineSettings,
) -> Result<Trial, ProtocolError> {
    let inject_action = match condition {
        Condition::Injection(_) => Some(
            plan.filter(|p| p.condition == condition)
                .ok_or(ProtocolError::MissingBudget(condition))?
                .inject_action,
        ),
        _ => None,
    };
    let prompt = match condition {
        Condition::Oracle => variant.oracle_prompt.clone(),
        _ => variant.underspecified_prompt.clone(),
    };
    let clarification = settings.templates.render(&variant.removed_segments)?;
    drive(
        TrialSetup {
            variant,
            condition,
            protocol: Protocol::Forced,
            seed,
            prompt,
            tools: environment_tools(variant),
            inject_action,
            clarification,
        },
        session,
        env,
        settings,
    )
}

/// One natural-ask session: underspecified prompt plus the auto-grader
/// notice, ask tool offered, every ask answered with the clarification text.
pub fn run_natural_session(
    variant: &TaskVariant,
    session: &mut Session,
    seed: u64,
    env: &dyn Environment,
    settings: &EngineSettings,
) -> Result<Trial, ProtocolError> {
    let mut tools = environment_tools(variant);
    tools.push(ask_user_tool());
    drive(
        TrialSetup {
            variant,
            condition: Condition::NoClarification,
            protocol: Protocol::Natural,
            seed,
            prompt: format!("{}\n\n{}", variant.underspecified_prompt, NATURAL_ASK_SUFFIX),
            tools,
            inject_action: None,
            clarification: settings.templates.render(&variant.removed_segments)?,
        },
        session,
        env,
        settings,
    )
}
