//! Domain types for task variants, experimental conditions, actions and
//! trial records.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::gateway::{GraderDescriptor, ToolDescriptor};
use crate::scalar::Scalar;

/// Category of information removed from a task prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Goal,
    Constraint,
    Input,
    Context,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Goal,
        Dimension::Constraint,
        Dimension::Input,
        Dimension::Context,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Goal => "goal",
            Dimension::Constraint => "constraint",
            Dimension::Input => "input",
            Dimension::Context => "context",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityClass {
    OutcomeCritical,
    Divergent,
    Benign,
}

impl AmbiguityClass {
    pub const ALL: [AmbiguityClass; 3] = [
        AmbiguityClass::OutcomeCritical,
        AmbiguityClass::Divergent,
        AmbiguityClass::Benign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityClass::OutcomeCritical => "outcome_critical",
            AmbiguityClass::Divergent => "divergent",
            AmbiguityClass::Benign => "benign",
        }
    }
}

impl fmt::Display for AmbiguityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Injection timing as a fraction of the oracle-calibrated budget.
///
/// Stored and serialized as the decimal strings `"0.1"` .. `"0.9"` so that
/// grouping never depends on float equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fraction {
    P10,
    P30,
    P50,
    P70,
    P90,
}

impl Fraction {
    pub const ALL: [Fraction; 5] = [
        Fraction::P10,
        Fraction::P30,
        Fraction::P50,
        Fraction::P70,
        Fraction::P90,
    ];

    pub fn tenths(self) -> u32 {
        match self {
            Fraction::P10 => 1,
            Fraction::P30 => 3,
            Fraction::P50 => 5,
            Fraction::P70 => 7,
            Fraction::P90 => 9,
        }
    }

    pub fn percent(self) -> u32 {
        self.tenths() * 10
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fraction::P10 => "0.1",
            Fraction::P30 => "0.3",
            Fraction::P50 => "0.5",
            Fraction::P70 => "0.7",
            Fraction::P90 => "0.9",
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        T::from_u32(self.tenths()).unwrap() / T::lit(10.0)
    }

    /// Looks up the fraction closest to `value`, accepting only values within
    /// 1e-9 of a member of the set.
    pub fn from_value(value: f64) -> Option<Fraction> {
        Fraction::ALL
            .into_iter()
            .find(|f| (f.value::<f64>() - value).abs() < 1e-9)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("injection fraction must be one of 0.1, 0.3, 0.5, 0.7, 0.9; got {0}")]
pub struct FractionError(pub String);

impl FromStr for Fraction {
    type Err = FractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if let Some(f) = Fraction::ALL.into_iter().find(|f| f.as_str() == trimmed) {
            return Ok(f);
        }
        trimmed
            .parse::<f64>()
            .ok()
            .and_then(Fraction::from_value)
            .ok_or_else(|| FractionError(s.to_string()))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Number(v) => Fraction::from_value(v)
                .ok_or_else(|| serde::de::Error::custom(FractionError(v.to_string()))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Oracle,
    NoClarification,
    Injection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "ConditionRecord", into = "ConditionRecord")]
pub enum Condition {
    Oracle,
    NoClarification,
    Injection(Fraction),
}

#[derive(Serialize, Deserialize)]
struct ConditionRecord {
    kind: ConditionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fraction: Option<Fraction>,
}

impl From<Condition> for ConditionRecord {
    fn from(c: Condition) -> Self {
        ConditionRecord {
            kind: c.kind(),
            fraction: c.fraction(),
        }
    }
}

impl TryFrom<ConditionRecord> for Condition {
    type Error = String;

    fn try_from(r: ConditionRecord) -> Result<Self, Self::Error> {
        match (r.kind, r.fraction) {
            (ConditionKind::Oracle, None) => Ok(Condition::Oracle),
            (ConditionKind::NoClarification, None) => Ok(Condition::NoClarification),
            (ConditionKind::Injection, Some(f)) => Ok(Condition::Injection(f)),
            (ConditionKind::Injection, None) => Err("injection condition requires a fraction".into()),
            (kind, Some(_)) => Err(format!("fraction not allowed for condition kind {kind:?}")),
        }
    }
}

impl Condition {
    /// The seven experimental conditions in canonical order.
    pub const ALL: [Condition; 7] = [
        Condition::Oracle,
        Condition::NoClarification,
        Condition::Injection(Fraction::P10),
        Condition::Injection(Fraction::P30),
        Condition::Injection(Fraction::P50),
        Condition::Injection(Fraction::P70),
        Condition::Injection(Fraction::P90),
    ];

    pub fn kind(self) -> ConditionKind {
        match self {
            Condition::Oracle => ConditionKind::Oracle,
            Condition::NoClarification => ConditionKind::NoClarification,
            Condition::Injection(_) => ConditionKind::Injection,
        }
    }

    pub fn fraction(self) -> Option<Fraction> {
        match self {
            Condition::Injection(f) => Some(f),
            _ => None,
        }
    }

    pub fn is_injection(self) -> bool {
        matches!(self, Condition::Injection(_))
    }

    /// Short stable key used in CSV headers and filters: `oracle`, `nc`,
    /// `inj_10` .. `inj_90`.
    pub fn key(self) -> String {
        match self {
            Condition::Oracle => "oracle".to_string(),
            Condition::NoClarification => "nc".to_string(),
            Condition::Injection(f) => format!("inj_{}", f.percent()),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "oracle" => return Ok(Condition::Oracle),
            "nc" | "no_clarification" => return Ok(Condition::NoClarification),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("inj_").or_else(|| s.strip_prefix("inj-")) {
            if let Ok(pct) = rest.parse::<u32>() {
                if let Some(f) = Fraction::ALL.into_iter().find(|f| f.percent() == pct) {
                    return Ok(Condition::Injection(f));
                }
            }
            if let Ok(f) = rest.parse::<Fraction>() {
                return Ok(Condition::Injection(f));
            }
        }
        Err(format!("unknown condition `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedSegment {
    pub dimension: Dimension,
    #[serde(default)]
    pub subdimension: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskVariant {
    pub variant_id: String,
    pub benchmark: String,
    pub oracle_prompt: String,
    pub underspecified_prompt: String,
    pub removed_segments: Vec<RemovedSegment>,
    pub primary_dimension: Dimension,
    pub ambiguity_class: AmbiguityClass,
    pub grader: GraderDescriptor,
    /// Environment tools offered to the agent. Empty means the default
    /// workspace toolset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<ToolDescriptor>,
}

/// A broken invariant, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.message)
    }
}

pub fn validate_variant(v: &TaskVariant) -> Vec<Violation> {
    let mut out = Vec::new();
    if v.variant_id.trim().is_empty() {
        out.push(Violation::new("variant_id", "empty"));
    }
    if v.removed_segments.is_empty() {
        out.push(Violation::new("removed_segments", "empty"));
    }
    for (i, seg) in v.removed_segments.iter().enumerate() {
        if seg.value.trim().is_empty() {
            out.push(Violation::new(format!("removed_segments[{i}].value"), "empty"));
        }
    }
    if v.underspecified_prompt == v.oracle_prompt {
        out.push(Violation::new("prompts", "identical"));
    }
    out
}

/// Validates every variant and checks id uniqueness across the corpus.
pub fn validate_corpus(variants: &[TaskVariant]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, v) in variants.iter().enumerate() {
        for violation in validate_variant(v) {
            out.push(Violation::new(
                format!("variants[{i}].{}", violation.field),
                violation.message,
            ));
        }
        if !seen.insert(v.variant_id.as_str()) {
            out.push(Violation::new(
                format!("variants[{i}].variant_id"),
                format!("duplicate `{}`", v.variant_id),
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub index: u32,
    #[serde(rename = "action_name")]
    pub name: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub result: String,
    pub is_pre_injection: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    /// Marks the synthetic user message carrying the injected clarification.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub injected: bool,
}

impl Turn {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            injected: false,
        }
    }

    pub fn injected(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            injected: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskEvent {
    pub action_index: u32,
    pub question: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Forced,
    Natural,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    /// The agent finished and the grader produced a verdict.
    #[default]
    Completed,
    /// The per-trial action cap was reached before the agent finished; still graded.
    ActionLimit,
    /// Transport failure or timeout; graded as failure but excluded from cells.
    AgentError,
    /// The agent called a tool that was not offered.
    ProtocolViolation,
    /// The grader itself failed.
    Ungraded,
    /// Not executed (for instance, the budget could not be calibrated).
    Skipped,
}

impl TrialStatus {
    /// Whether the trial carries a grader verdict usable for aggregation.
    pub fn is_graded(self) -> bool {
        matches!(self, TrialStatus::Completed | TrialStatus::ActionLimit)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub variant_id: String,
    pub model: String,
    #[serde(default)]
    pub protocol: Protocol,
    pub condition: Condition,
    /// Planned injection action (`a_inject`); present iff the condition is an
    /// injection condition.
    pub injection_point: Option<u32>,
    pub seed: u64,
    pub actions: Vec<Action>,
    pub conversation: Vec<Turn>,
    #[serde(default)]
    pub final_answer: Option<String>,
    pub task_success: bool,
    pub total_actions: u32,
    pub pre_injection_actions: u32,
    pub post_injection_actions: u32,
    pub duration_seconds: f64,
    #[serde(default)]
    pub ask_events: Vec<AskEvent>,
    #[serde(default)]
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
    /// Unknown fields from richer backends, preserved on round-trip.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrialError {
    #[error("total_actions is {total} but {len} actions are recorded")]
    ActionCount { total: u32, len: usize },
    #[error("pre_injection_actions ({pre}) + post_injection_actions ({post}) != total_actions ({total})")]
    SplitMismatch { pre: u32, post: u32, total: u32 },
    #[error("action indices must run consecutively from 1; position {position} has index {index}")]
    ActionIndex { position: usize, index: u32 },
    #[error("injection_point must be present iff the condition is an injection condition")]
    InjectionPoint,
    #[error("non-injection trial has pre-injection actions")]
    PreInjectionOutsideInjection,
    #[error("{flagged} actions flagged pre-injection but pre_injection_actions is {pre}")]
    PreInjectionFlags { flagged: usize, pre: u32 },
    #[error("pre-injection actions must precede post-injection actions")]
    PreInjectionOrder,
    #[error("pre_injection_actions ({pre}) exceeds injection_point ({point})")]
    PreInjectionPastPoint { pre: u32, point: u32 },
    #[error("ask_events recorded on a forced-injection trial")]
    AskOnForced,
}

impl Trial {
    pub fn validate(&self) -> Result<(), TrialError> {
        let len = self.actions.len();
        if self.total_actions as usize != len {
            return Err(TrialError::ActionCount {
                total: self.total_actions,
                len,
            });
        }
        if self.pre_injection_actions + self.post_injection_actions != self.total_actions {
            return Err(TrialError::SplitMismatch {
                pre: self.pre_injection_actions,
                post: self.post_injection_actions,
                total: self.total_actions,
            });
        }
        for (position, a) in self.actions.iter().enumerate() {
            if a.index as usize != position + 1 {
                return Err(TrialError::ActionIndex {
                    position,
                    index: a.index,
                });
            }
        }
        // trials that never reached the agent may lack a planned point
        let never_ran = self.status == TrialStatus::Skipped
            || (self.status == TrialStatus::AgentError && self.actions.is_empty());
        if !never_ran && self.condition.is_injection() != self.injection_point.is_some() {
            return Err(TrialError::InjectionPoint);
        }
        let flagged = self.actions.iter().filter(|a| a.is_pre_injection).count();
        if !self.condition.is_injection() && (self.pre_injection_actions != 0 || flagged != 0) {
            return Err(TrialError::PreInjectionOutsideInjection);
        }
        if flagged != self.pre_injection_actions as usize {
            return Err(TrialError::PreInjectionFlags {
                flagged,
                pre: self.pre_injection_actions,
            });
        }
        if self.actions.iter().skip(flagged).any(|a| a.is_pre_injection) {
            return Err(TrialError::PreInjectionOrder);
        }
        if let Some(point) = self.injection_point {
            if self.pre_injection_actions > point {
                return Err(TrialError::PreInjectionPastPoint {
                    pre: self.pre_injection_actions,
                    point,
                });
            }
        }
        if self.protocol == Protocol::Forced && !self.ask_events.is_empty() {
            return Err(TrialError::AskOnForced);
        }
        Ok(())
    }

    /// Pre-injection slice of the action list.
    pub fn pre_injection(&self) -> &[Action] {
        &self.actions[..self.pre_injection_actions as usize]
    }

    /// Trial-relative position of the first ask, as `index / total_actions`.
    pub fn first_ask_timing(&self) -> Option<f64> {
        let first = self.ask_events.first()?;
        if self.total_actions == 0 {
            return None;
        }
        Some(f64::from(first.action_index) / f64::from(self.total_actions))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn variant(id: &str) -> TaskVariant {
        TaskVariant {
            variant_id: id.to_string(),
            benchmark: "fixture".to_string(),
            oracle_prompt: "Export the Q3 report as CSV.".to_string(),
            underspecified_prompt: "Export the Q3 report.".to_string(),
            removed_segments: vec![RemovedSegment {
                dimension: Dimension::Goal,
                subdimension: "format".to_string(),
                value: "CSV format".to_string(),
            }],
            primary_dimension: Dimension::Goal,
            ambiguity_class: AmbiguityClass::OutcomeCritical,
            grader: GraderDescriptor::ExactMatch {
                expected: "42".to_string(),
            },
            tools: Vec::new(),
        }
    }

    pub fn action(index: u32, name: &str, pre: bool) -> Action {
        let mut parameters = Map::new();
        parameters.insert("step".into(), Value::from(index));
        Action {
            index,
            name: name.to_string(),
            parameters,
            result: "ok".to_string(),
            is_pre_injection: pre,
        }
    }

    pub fn trial(variant_id: &str, condition: Condition, seed: u64, n_actions: u32) -> Trial {
        let (injection_point, pre) = match condition {
            Condition::Injection(_) => (Some(1), 1.min(n_actions)),
            _ => (None, 0),
        };
        let actions = (1..=n_actions)
            .map(|i| action(i, "explore", i <= pre))
            .collect();
        Trial {
            variant_id: variant_id.to_string(),
            model: "m".to_string(),
            protocol: Protocol::Forced,
            condition,
            injection_point,
            seed,
            actions,
            conversation: vec![Turn::new(Role::User, "do it")],
            final_answer: Some("42".to_string()),
            task_success: true,
            total_actions: n_actions,
            pre_injection_actions: pre,
            post_injection_actions: n_actions - pre,
            duration_seconds: 0.25,
            ask_events: Vec::new(),
            status: TrialStatus::Completed,
            annotations: Vec::new(),
            extra: Map::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_variant_has_no_violations() {
        assert!(validate_variant(&variant("v1")).is_empty());
    }

    #[test]
    fn empty_segments_flagged() {
        let mut v = variant("v1");
        v.removed_segments.clear();
        let msgs: Vec<String> = validate_variant(&v).iter().map(|v| v.to_string()).collect();
        assert_eq!(msgs, vec!["removed_segments empty"]);
    }

    #[test]
    fn identical_prompts_flagged() {
        let mut v = variant("v1");
        v.underspecified_prompt = v.oracle_prompt.clone();
        let msgs: Vec<String> = validate_variant(&v).iter().map(|v| v.to_string()).collect();
        assert_eq!(msgs, vec!["prompts identical"]);
    }

    #[test]
    fn duplicate_ids_flagged_in_corpus() {
        let violations = validate_corpus(&[variant("a"), variant("a")]);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "variants[1].variant_id");
    }

    #[test]
    fn seven_conditions_five_fractions() {
        let set: BTreeSet<_> = Condition::ALL.into_iter().collect();
        assert_eq!(set.len(), 7);
        let fractions: Vec<f64> = Condition::ALL
            .iter()
            .filter_map(|c| c.fraction())
            .map(|f| f.value())
            .collect();
        assert_eq!(fractions, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert!(Condition::ALL
            .iter()
            .all(|c| c.fraction().is_some() == c.is_injection()));
    }

    #[test]
    fn condition_serializes_fraction_as_string() {
        let json = serde_json::to_string(&Condition::Injection(Fraction::P30)).unwrap();
        assert_eq!(json, r#"{"kind":"injection","fraction":"0.3"}"#);
        let json = serde_json::to_string(&Condition::Oracle).unwrap();
        assert_eq!(json, r#"{"kind":"oracle"}"#);
        let back: Condition = serde_json::from_str(r#"{"kind":"injection","fraction":0.7}"#).unwrap();
        assert_eq!(back, Condition::Injection(Fraction::P70));
        assert!(serde_json::from_str::<Condition>(r#"{"kind":"oracle","fraction":"0.1"}"#).is_err());
        assert!(serde_json::from_str::<Condition>(r#"{"kind":"injection","fraction":"0.2"}"#).is_err());
    }

    #[test]
    fn condition_keys_parse_back() {
        for c in Condition::ALL {
            assert_eq!(c.key().parse::<Condition>().unwrap(), c);
        }
        assert_eq!("inj-0.5".parse::<Condition>().unwrap(), Condition::Injection(Fraction::P50));
    }

    #[test]
    fn trial_invariants() {
        let t = trial("v", Condition::Injection(Fraction::P10), 0, 4);
        assert_eq!(t.validate(), Ok(()));

        let mut bad = t.clone();
        bad.total_actions = 5;
        assert!(matches!(bad.validate(), Err(TrialError::ActionCount { .. })));

        let mut bad = trial("v", Condition::Oracle, 0, 3);
        bad.injection_point = Some(1);
        assert_eq!(bad.validate(), Err(TrialError::InjectionPoint));

        let mut bad = trial("v", Condition::NoClarification, 0, 3);
        bad.actions[0].is_pre_injection = true;
        assert_eq!(bad.validate(), Err(TrialError::PreInjectionOutsideInjection));

        let mut bad = t.clone();
        bad.actions[1].index = 7;
        assert!(matches!(bad.validate(), Err(TrialError::ActionIndex { position: 1, index: 7 })));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let t = trial("v", Condition::Oracle, 2, 2);
        let mut value = serde_json::to_value(&t).unwrap();
        value["provider_latency_ms"] = Value::from(812);
        let parsed: Trial = serde_json::from_value(value.clone()).unwrap();
        assert_eq!(parsed.extra["provider_latency_ms"], Value::from(812));
        assert_eq!(serde_json::to_value(&parsed).unwrap(), value);
    }

    #[test]
    fn first_ask_timing_is_relative() {
        let mut t = trial("v", Condition::NoClarification, 0, 10);
        t.protocol = Protocol::Natural;
        assert_eq!(t.first_ask_timing(), None);
        t.ask_events.push(AskEvent {
            action_index: 3,
            question: "which format?".into(),
        });
        assert_eq!(t.first_ask_timing(), Some(0.3));
    }
}
