use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentHandle, AgentRequest, AgentResponse, GatewayError, TrialContext};

/// Responses a scripted agent replays. Lookup order for a trial is
/// `per_trial["<variant_id>#<seed>"]`, then `per_variant[variant_id]`, then
/// `script`. Once a script runs out the agent finishes with an empty answer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSpec {
    #[serde(default)]
    pub script: Vec<AgentResponse>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_variant: BTreeMap<String, Vec<AgentResponse>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_trial: BTreeMap<String, Vec<AgentResponse>>,
}

pub struct ScriptedAgent {
    model: String,
    spec: ScriptedSpec,
    active: Vec<AgentResponse>,
    cursor: usize,
}

impl ScriptedAgent {
    pub fn new(model: &str, script: Vec<AgentResponse>) -> Self {
        Self::from_spec(
            model,
            ScriptedSpec {
                script,
                ..Default::default()
            },
        )
    }

    pub fn from_spec(model: &str, spec: ScriptedSpec) -> Self {
        Self {
            model: model.to_string(),
            active: spec.script.clone(),
            spec,
            cursor: 0,
        }
    }
}

impl AgentHandle for ScriptedAgent {
    fn model(&self) -> &str {
        &self.model
    }

    fn begin_trial(&mut self, ctx: &TrialContext) -> Result<(), GatewayError> {
        let trial_key = format!("{}#{}", ctx.variant_id, ctx.seed);
        self.active = self
            .spec
            .per_trial
            .get(&trial_key)
            .or_else(|| self.spec.per_variant.get(&ctx.variant_id))
            .unwrap_or(&self.spec.script)
            .clone();
        self.cursor = 0;
        Ok(())
    }

    fn exchange(&mut self, _request: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        let response = self
            .active
            .get(self.cursor)
            .cloned()
            .unwrap_or(AgentResponse::Finish {
                answer: String::new(),
            });
        self.cursor += 1;
        Ok(response)
    }
}
