//! Simulated agent with a known trajectory-commitment profile.
//!
//! For a dimension `d`, commitment `C(t)` is the fraction of the first `t`
//! of the trajectory that already depends on the missing information. The
//! simulator recovers exactly the uncommitted share of the oracle gap:
//!
//! ```text
//! p(t) = clamp(p_nc + (p_oracle - p_nc) * (1 - C(t)) - r * C(t), 0, 1)
//! ```
//!
//! where `r` is a reconciliation rate (non-zero only for the
//! constraint-reconcile shape). Every draw is taken from a counter-based
//! stream, so trajectories and verdicts are pure functions of their inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::{
    AgentHandle, AgentRequest, AgentResponse, GatewayError, GraderDescriptor, ParamType,
    ToolDescriptor, ToolParameter, TrialContext, ASK_TOOL_NAME,
};
use crate::rng::StreamKey;
use crate::scalar::Scalar;
use crate::trial::{Condition, Dimension, Protocol, Role, TaskVariant, Trial, Turn};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("trajectory position {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape<T> {
    /// `C(t) = t^exponent`, exponent in (0, 1): commitment front-loaded.
    Concave { exponent: T },
    /// `C(t) = t`.
    Linear,
    /// Linear commitment plus a reconciliation penalty `rate * C(t)`.
    ConstraintReconcile { rate: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitmentProfile<T> {
    pub dimension: Dimension,
    pub shape: Shape<T>,
    pub p_oracle: T,
    pub p_nc: T,
    pub trajectory_length: u32,
}

impl<T: Scalar> CommitmentProfile<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |name: &str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(SimError::InvalidProfile(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("p_oracle", self.p_oracle)?;
        unit("p_nc", self.p_nc)?;
        if self.trajectory_length == 0 {
            return Err(SimError::InvalidProfile("trajectory_length must be >= 1".into()));
        }
        match self.shape {
            Shape::Concave { exponent } if !(exponent > T::zero() && exponent < T::one()) => Err(
                SimError::InvalidProfile(format!("concave exponent {exponent} not in (0, 1)")),
            ),
            Shape::ConstraintReconcile { rate } if rate.is_nan() || rate < T::zero() => Err(
                SimError::InvalidProfile(format!("reconciliation rate {rate} is negative")),
            ),
            _ => Ok(()),
        }
    }

    pub fn commitment(&self, t: T) -> Result<T, SimError> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(SimError::OutOfRange(t.as_f64()));
        }
        Ok(match self.shape {
            Shape::Concave { exponent } => t.powf(exponent),
            Shape::Linear | Shape::ConstraintReconcile { .. } => t,
        })
    }

    pub fn reconciliation_rate(&self) -> T {
        match self.shape {
            Shape::ConstraintReconcile { rate } => rate,
            _ => T::zero(),
        }
    }

    /// Success probability when the missing information arrives at
    /// trajectory position `t`.
    pub fn success_probability_at(&self, t: T) -> Result<T, SimError> {
        let c = self.commitment(t)?;
        let p = self.p_nc + (self.p_oracle - self.p_nc) * (T::one() - c) - self.reconciliation_rate() * c;
        Ok(p.max(T::zero()).min(T::one()))
    }

    pub fn success_probability(&self, condition: Condition) -> T {
        match condition {
            Condition::Oracle => self.p_oracle,
            Condition::NoClarification => self.p_nc,
            Condition::Injection(f) => self
                .success_probability_at(f.value())
                .expect("fractions lie in (0, 1)"),
        }
    }

    /// Value of clarifying under `condition`, relative to never clarifying.
    pub fn voi(&self, condition: Condition) -> T {
        self.success_probability(condition) - self.p_nc
    }
}

/// Profile anchors shipped as defaults: goal, input, constraint, context.
pub fn default_profiles() -> Vec<CommitmentProfile<f64>> {
    let make = |dimension, shape, p_oracle, p_nc| CommitmentProfile {
        dimension,
        shape,
        p_oracle,
        p_nc,
        trajectory_length: 12,
    };
    vec![
        make(Dimension::Goal, Shape::Concave { exponent: 0.35 }, 0.80, 0.40),
        make(Dimension::Input, Shape::Linear, 0.57, 0.33),
        make(Dimension::Constraint, Shape::ConstraintReconcile { rate: 0.1 }, 0.12, 0.12),
        make(Dimension::Context, Shape::Concave { exponent: 0.35 }, 0.80, 0.60),
    ]
}

const EXPLORE: &str = "explore";
const COMMIT: &str = "commit_step";
const PRODUCE: &str = "produce_output";
const DIVERGENT_SUFFIX: &str = "_divergent";

/// Workspace tools the simulator acts through: the three action names and
/// their divergent counterparts.
pub fn toolset() -> Vec<ToolDescriptor> {
    [
        (EXPLORE, "Inspect the environment."),
        (COMMIT, "Carry out one step of the task."),
        (PRODUCE, "Produce the requested output."),
    ]
    .into_iter()
    .flat_map(|(name, description)| {
        [name.to_string(), format!("{name}{DIVERGENT_SUFFIX}")].map(|n| ToolDescriptor {
            name: n,
            description: description.to_string(),
            parameters: vec![ToolParameter {
                name: "step".into(),
                kind: ParamType::Integer,
                description: "Position of this action in the trajectory.".into(),
                required: true,
                default: None,
            }],
        })
    })
    .collect()
}

fn phase_name(step: u32, length: u32) -> &'static str {
    if step >= length {
        PRODUCE
    } else if step <= length.div_ceil(3) {
        EXPLORE
    } else {
        COMMIT
    }
}

/// Identifies one simulated trial for keying its random streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimKey<'a> {
    pub variant_id: &'a str,
    pub model: &'a str,
    pub seed: u64,
    pub salt: u64,
}

impl SimKey<'_> {
    fn stream(&self, domain: &str) -> StreamKey {
        StreamKey::new(domain)
            .with_str(self.variant_id)
            .with_str(self.model)
            .with_u64(self.seed)
            .with_u64(self.salt)
    }

    /// Whether step `step` of an uninformed trajectory diverges from the
    /// oracle path: a uniform draw for this step falls below `C(step / B)`.
    pub fn diverges(&self, profile: &CommitmentProfile<f64>, step: u32) -> bool {
        let t = (f64::from(step) / f64::from(profile.trajectory_length)).min(1.0);
        let c = profile.commitment(t).expect("t clamped into [0, 1]");
        self.stream("sim-divergence").with_u64(u64::from(step)).uniform() < c
    }
}

/// Whether the simulated agent already holds the missing information: it
/// was given the oracle prompt, or a later user turn / ask answer arrived.
pub fn is_informed(conversation: &[Turn], oracle_prompt: &str) -> bool {
    let Some(first) = conversation.first() else {
        return false;
    };
    if first.text == oracle_prompt {
        return true;
    }
    let mut asked = false;
    for turn in &conversation[1..] {
        match turn.role {
            Role::User => return true,
            Role::Assistant => asked = turn.text.contains(ASK_TOOL_NAME),
            Role::Tool if asked => return true,
            _ => {}
        }
    }
    false
}

/// Next simulated action for step `step_index` given the conversation so far.
///
/// Emits `trajectory_length` tool calls, then finishes. While uninformed,
/// each step diverges per [`SimKey::diverges`]; once informed, every
/// following action matches the oracle path.
pub fn act(
    profile: &CommitmentProfile<f64>,
    key: &SimKey<'_>,
    conversation: &[Turn],
    oracle_prompt: &str,
    step_index: u32,
) -> AgentResponse {
    if step_index > profile.trajectory_length {
        return AgentResponse::Finish {
            answer: format!("sim:{}", key.variant_id),
        };
    }
    let base = phase_name(step_index, profile.trajectory_length);
    let divergent = !is_informed(conversation, oracle_prompt) && key.diverges(profile, step_index);
    let name = if divergent {
        format!("{base}{DIVERGENT_SUFFIX}")
    } else {
        base.to_string()
    };
    AgentResponse::tool_call(&name, json!({ "step": step_index }))
}

/// Draws the trial verdict from `Bernoulli(p)` where `p` is the profile's
/// success probability under the trial's condition. Natural sessions use the
/// first ask position (or the no-clarification anchor when nobody asked).
pub fn grade_sim(trial: &Trial, profile: &CommitmentProfile<f64>, salt: u64) -> bool {
    let p = match (trial.protocol, trial.ask_events.first()) {
        (Protocol::Natural, Some(ask)) => {
            let t = (f64::from(ask.action_index) / f64::from(profile.trajectory_length)).min(1.0);
            profile.success_probability_at(t).expect("t clamped into [0, 1]")
        }
        (Protocol::Natural, None) => profile.p_nc,
        (Protocol::Forced, _) => profile.success_probability(trial.condition),
    };
    let key = SimKey {
        variant_id: &trial.variant_id,
        model: &trial.model,
        seed: trial.seed,
        salt,
    };
    key.stream("sim-grade")
        .with_str(&trial.condition.key())
        .uniform()
        < p
}

struct SimEntry {
    profile: CommitmentProfile<f64>,
    oracle_prompt: String,
    salt: u64,
}

/// In-process agent handle backed by [`act`].
pub struct SimAgent {
    model: String,
    registry: BTreeMap<String, SimEntry>,
    current: Option<(String, u64)>,
}

impl SimAgent {
    /// Builds the registry from variants graded by the simulator.
    pub fn from_variants(model: &str, variants: &[TaskVariant]) -> Self {
        let registry = variants
            .iter()
            .filter_map(|v| match &v.grader {
                GraderDescriptor::Sim { profile, salt } => Some((
                    v.variant_id.clone(),
                    SimEntry {
                        profile: *profile,
                        oracle_prompt: v.oracle_prompt.clone(),
                        salt: *salt,
                    },
                )),
                _ => None,
            })
            .collect();
        Self {
            model: model.to_string(),
            registry,
            current: None,
        }
    }
}

impl AgentHandle for SimAgent {
    fn model(&self) -> &str {
        &self.model
    }

    fn begin_trial(&mut self, ctx: &TrialContext) -> Result<(), GatewayError> {
        if !self.registry.contains_key(&ctx.variant_id) {
            return Err(GatewayError::Agent(format!(
                "no simulator profile for variant `{}`",
                ctx.variant_id
            )));
        }
        self.current = Some((ctx.variant_id.clone(), ctx.seed));
        Ok(())
    }

    fn exchange(&mut self, request: &AgentRequest) -> Result<AgentResponse, GatewayError> {
        let (variant_id, seed) = self
            .current
            .as_ref()
            .ok_or_else(|| GatewayError::ProtocolViolation("request before trial_start".into()))?;
        let entry = &self.registry[variant_id];
        let key = SimKey {
            variant_id,
            model: &self.model,
            seed: *seed,
            salt: entry.salt,
        };
        Ok(act(
            &entry.profile,
            &key,
            &request.conversation,
            &entry.oracle_prompt,
            request.step_index,
        ))
    }
}

/// Name and arguments of a sim action, for oracle-trace fixtures.
pub fn oracle_action(step: u32, length: u32) -> (String, Value) {
    (phase_name(step, length).to_string(), json!({ "step": step }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Fraction;

    fn profile(shape: Shape<f64>, p_oracle: f64, p_nc: f64) -> CommitmentProfile<f64> {
        CommitmentProfile {
            dimension: Dimension::Goal,
            shape,
            p_oracle,
            p_nc,
            trajectory_length: 7,
        }
    }

    const GOAL: Shape<f64> = Shape::Concave { exponent: 0.35 };

    #[test]
    fn commitment_examples() {
        let lin = profile(Shape::Linear, 0.8, 0.4);
        assert_eq!(lin.commitment(0.5).unwrap(), 0.5);
        for shape in [GOAL, Shape::Linear, Shape::ConstraintReconcile { rate: 0.3 }] {
            let p = profile(shape, 0.8, 0.4);
            assert_eq!(p.commitment(0.0).unwrap(), 0.0);
            assert_eq!(p.commitment(1.0).unwrap(), 1.0);
        }
        // 0.1^0.35 = exp(0.35 * ln 0.1)
        let expected = (0.35f64 * 0.1f64.ln()).exp();
        assert!((profile(GOAL, 0.8, 0.4).commitment(0.1).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.4467).abs() < 5e-5);
    }

    #[test]
    fn commitment_rejects_out_of_range() {
        let p = profile(Shape::Linear, 0.8, 0.4);
        assert_eq!(p.commitment(1.5), Err(SimError::OutOfRange(1.5)));
        assert!(p.commitment(-0.1).is_err());
        assert!(p.commitment(f64::NAN).is_err());
    }

    #[test]
    fn success_probability_examples() {
        let goal = profile(GOAL, 0.80, 0.40);
        assert_eq!(goal.success_probability(Condition::Oracle), 0.80);
        assert_eq!(goal.success_probability(Condition::NoClarification), 0.40);
        assert_eq!(goal.success_probability_at(0.0).unwrap(), 0.80);
        assert!((goal.success_probability_at(1.0).unwrap() - 0.40).abs() < 1e-15);
        let p10 = goal.success_probability(Condition::Injection(Fraction::P10));
        assert!((p10 - 0.6213).abs() < 1e-4, "{p10}");
    }

    #[test]
    fn generic_over_f32() {
        let goal = CommitmentProfile::<f32> {
            dimension: Dimension::Goal,
            shape: Shape::Concave { exponent: 0.35 },
            p_oracle: 0.8,
            p_nc: 0.4,
            trajectory_length: 7,
        };
        let p10 = goal.success_probability(Condition::Injection(Fraction::P10));
        assert!((p10 - 0.6213).abs() < 1e-3);
    }

    #[test]
    fn reconciliation_can_dip_below_baseline() {
        let c = profile(Shape::ConstraintReconcile { rate: 0.2 }, 0.5, 0.4);
        let late = c.success_probability(Condition::Injection(Fraction::P90));
        assert!(late < 0.4);
        let none = profile(Shape::ConstraintReconcile { rate: 0.0 }, 0.5, 0.4);
        assert!(none.success_probability(Condition::Injection(Fraction::P90)) >= 0.4);
    }

    #[test]
    fn validation() {
        assert!(profile(GOAL, 0.8, 0.4).validate().is_ok());
        assert!(profile(Shape::Concave { exponent: 1.0 }, 0.8, 0.4).validate().is_err());
        assert!(profile(Shape::Linear, 1.2, 0.4).validate().is_err());
        assert!(profile(Shape::ConstraintReconcile { rate: -0.1 }, 0.8, 0.4)
            .validate()
            .is_err());
    }

    fn key(seed: u64) -> SimKey<'static> {
        SimKey {
            variant_id: "v",
            model: "sim",
            seed,
            salt: 0,
        }
    }

    fn run(profile: &CommitmentProfile<f64>, oracle: bool, inject_after: Option<u32>, seed: u64) -> Vec<String> {
        let oracle_prompt = "full";
        let mut conversation = vec![Turn::new(Role::User, if oracle { "full" } else { "partial" })];
        let mut names = Vec::new();
        for step in 1.. {
            match act(profile, &key(seed), &conversation, oracle_prompt, step) {
                AgentResponse::ToolCall { name, .. } => {
                    conversation.push(Turn::new(Role::Assistant, name.clone()));
                    conversation.push(Turn::new(Role::Tool, "ok"));
                    names.push(name);
                }
                AgentResponse::Finish { .. } => break,
                AgentResponse::Message { .. } => unreachable!(),
            }
            if inject_after == Some(step) {
                conversation.push(Turn::injected("By the way"));
            }
        }
        names
    }

    #[test]
    fn oracle_prompt_gives_oracle_path() {
        let p = profile(Shape::Linear, 0.8, 0.4);
        let names = run(&p, true, None, 0);
        assert_eq!(names.len(), 7);
        assert!(names.iter().all(|n| !n.ends_with(DIVERGENT_SUFFIX)));
        assert_eq!(names.last().unwrap(), PRODUCE);
    }

    #[test]
    fn injection_restores_oracle_path() {
        let p = profile(Shape::Linear, 0.8, 0.4);
        for seed in 0..20 {
            let names = run(&p, false, Some(1), seed);
            assert_eq!(names.len(), 7);
            assert!(names[1..].iter().all(|n| !n.ends_with(DIVERGENT_SUFFIX)));
        }
    }

    #[test]
    fn act_is_deterministic() {
        let p = profile(GOAL, 0.8, 0.4);
        assert_eq!(run(&p, false, None, 5), run(&p, false, None, 5));
    }

    #[test]
    fn grade_sim_degenerate_and_frequency() {
        use crate::trial::fixtures::trial;
        let certain = profile(Shape::Linear, 1.0, 0.0);
        let t = trial("v", Condition::Oracle, 0, 7);
        assert!(grade_sim(&t, &certain, 0));
        let t = trial("v", Condition::NoClarification, 0, 7);
        assert!(!grade_sim(&t, &certain, 0));

        let half = profile(Shape::Linear, 0.5, 0.5);
        let mut t = trial("v", Condition::Oracle, 0, 7);
        let mut wins = 0;
        for seed in 0..10_000 {
            t.seed = seed;
            wins += grade_sim(&t, &half, 0) as u32;
        }
        let mean = f64::from(wins) / 10_000.0;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
        // repeatable
        t.seed = 17;
        assert_eq!(grade_sim(&t, &half, 0), grade_sim(&t, &half, 0));
    }

    #[test]
    fn informed_detection() {
        let conv = vec![Turn::new(Role::User, "partial")];
        assert!(!is_informed(&conv, "full"));
        let mut with_ask = conv.clone();
        with_ask.push(Turn::new(Role::Assistant, r#"{"name":"ask_user"}"#));
        with_ask.push(Turn::new(Role::Tool, "Also"));
        assert!(is_informed(&with_ask, "full"));
        let mut plain_tool = conv;
        plain_tool.push(Turn::new(Role::Assistant, r#"{"name":"explore"}"#));
        plain_tool.push(Turn::new(Role::Tool, "ok"));
        assert!(!is_informed(&plain_tool, "full"));
    }

    #[test]
    fn toolset_covers_vocabulary() {
        let names: Vec<String> = toolset().into_iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 6);
        for n in [EXPLORE, COMMIT, PRODUCE] {
            assert!(names.contains(&n.to_string()));
            assert!(names.contains(&format!("{n}{DIVERGENT_SUFFIX}")));
        }
    }
}
