use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{grade_sim, CommitmentProfile};
use crate::trial::Trial;

/// How a variant's trials are judged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraderDescriptor {
    /// Final answer equals `expected` after trimming surrounding whitespace.
    ExactMatch { expected: String },
    /// External command; receives the trial record as JSON on stdin and
    /// exits 0 for success, 1 for failure. Anything else is a grading error.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
    /// Seeded Bernoulli draw from the simulator's success probability.
    Sim {
        profile: CommitmentProfile<f64>,
        #[serde(default)]
        salt: u64,
    },
}

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("grader `{program}` could not be started: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("grader `{program}` ended abnormally ({status})")]
    Crashed { program: String, status: String },
    #[error("grader input could not be encoded: {0}")]
    Encode(#[from] serde_json::Error),
}

pub fn grade(descriptor: &GraderDescriptor, trial: &Trial) -> Result<bool, GradeError> {
    match descriptor {
        GraderDescriptor::ExactMatch { expected } => Ok(trial
            .final_answer
            .as_deref()
            .is_some_and(|a| a.trim() == expected.trim())),
        GraderDescriptor::Sim { profile, salt } => Ok(grade_sim(trial, profile, *salt)),
        GraderDescriptor::Command { program, args } => run_command(program, args, trial),
    }
}

fn run_command(program: &str, args: &[String], trial: &Trial) -> Result<bool, GradeError> {
    let payload = serde_json::to_vec(trial)?;
    let spawn_err = |source| GradeError::Spawn {
        program: program.to_string(),
        source,
    };
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(spawn_err)?;
    if let Some(mut stdin) = child.stdin.take() {
        // A grader may exit without reading its input; a broken pipe is fine.
        let _ = stdin.write_all(&payload);
    }
    let status = child.wait().map_err(spawn_err)?;
    match status.code() {
        Some(0) => Ok(true),
        Some(1) => Ok(false),
        _ => Err(GradeError::Crashed {
            program: program.to_string(),
            status: status.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CommitmentProfile, Shape};
    use crate::trial::fixtures::trial;
    use crate::trial::{Condition, Dimension};

    fn exact(expected: &str) -> GraderDescriptor {
        GraderDescriptor::ExactMatch {
            expected: expected.into(),
        }
    }

    #[test]
    fn exact_match() {
        let mut t = trial("v", Condition::Oracle, 0, 1);
        t.final_answer = Some("42".into());
        assert!(grade(&exact("42"), &t).unwrap());
        t.final_answer = Some("41".into());
        assert!(!grade(&exact("42"), &t).unwrap());
        t.final_answer = None;
        assert!(!grade(&exact("42"), &t).unwrap());
    }

    #[test]
    fn sim_grader_with_certain_profile() {
        let profile = CommitmentProfile {
            dimension: Dimension::Goal,
            shape: Shape::Linear,
            p_oracle: 1.0,
            p_nc: 0.0,
            trajectory_length: 5,
        };
        let t = trial("v", Condition::Oracle, 0, 5);
        assert!(grade(&GraderDescriptor::Sim { profile, salt: 0 }, &t).unwrap());
    }

    #[test]
    fn command_grader_exit_codes() {
        let t = trial("v", Condition::Oracle, 0, 1);
        let cmd = |code: &str| GraderDescriptor::Command {
            program: "sh".into(),
            args: vec!["-c".into(), format!("cat >/dev/null; exit {code}")],
        };
        assert!(grade(&cmd("0"), &t).unwrap());
        assert!(!grade(&cmd("1"), &t).unwrap());
        assert!(matches!(grade(&cmd("3"), &t), Err(GradeError::Crashed { .. })));
        let reads_record = GraderDescriptor::Command {
            program: "sh".into(),
            args: vec!["-c".into(), r#"grep -q '"variant_id":"v"'"#.into()],
        };
        assert!(grade(&reads_record, &t).unwrap());
    }

    #[test]
    fn missing_command_is_spawn_error() {
        let t = trial("v", Condition::Oracle, 0, 1);
        let g = GraderDescriptor::Command {
            program: "/nonexistent/grader".into(),
            args: vec![],
        };
        assert!(matches!(grade(&g, &t), Err(GradeError::Spawn { .. })));
    }
}
