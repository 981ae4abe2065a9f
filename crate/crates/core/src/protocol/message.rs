//! Natural-language rendering of removed segments as a clarification
//! message.

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::trial::{Dimension, RemovedSegment};

pub const DEFAULT_FALLBACK: &str = "By the way, I should have mentioned: {value}.";
const PLACEHOLDER: &str = "{value}";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub dimension: Dimension,
    pub subdimension: String,
    pub template: String,
}

/// Maps (dimension, subdimension) pairs to message patterns. Subdimension
/// lookup ignores case and treats `_`, `-` and spaces alike.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateTable {
    pub templates: Vec<Template>,
    #[serde(default = "default_fallback")]
    pub fallback: String,
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK.to_string()
}

fn normalize(sub: &str) -> String {
    sub.trim()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Default for TemplateTable {
    fn default() -> Self {
        use Dimension::*;
        let rows = [
            (Goal, "target", "By the way, I should clarify: I'm specifically looking for {value}."),
            (Goal, "format", "By the way, please give me the result in {value}."),
            (Input, "source", "By the way, you can find the data in {value}."),
            (Input, "location", "By the way, it's located at {value}."),
            (Constraint, "temporal", "By the way, I should have mentioned: I'm looking at {value}."),
            (Constraint, "selection", "I should mention, only include those that are {value}."),
            (Context, "background", "By the way, for context: {value}."),
            (Context, "domain knowledge", "For context, {value}."),
        ];
        TemplateTable {
            templates: rows
                .into_iter()
                .map(|(dimension, sub, template)| Template {
                    dimension,
                    subdimension: sub.to_string(),
                    template: template.to_string(),
                })
                .collect(),
            fallback: default_fallback(),
        }
    }
}

impl TemplateTable {
    pub fn template_for(&self, dimension: Dimension, subdimension: &str) -> &str {
        let wanted = normalize(subdimension);
        if wanted.is_empty() {
            return &self.fallback;
        }
        self.templates
            .iter()
            .find(|t| t.dimension == dimension && normalize(&t.subdimension) == wanted)
            .map_or(self.fallback.as_str(), |t| t.template.as_str())
    }

    /// First segment through its template, the second as `Also, {value}.`,
    /// any further ones as `And {value}.`, joined by single spaces.
    pub fn render(&self, segments: &[RemovedSegment]) -> Result<String, ProtocolError> {
        let (first, rest) = segments.split_first().ok_or(ProtocolError::NoSegments)?;
        for (i, s) in segments.iter().enumerate() {
            if s.value.trim().is_empty() {
                return Err(ProtocolError::EmptySegment(i));
            }
        }
        let mut parts = vec![self
            .template_for(first.dimension, &first.subdimension)
            .replace(PLACEHOLDER, &first.value)];
        for (i, s) in rest.iter().enumerate() {
            let connective = if i == 0 { "Also," } else { "And" };
            parts.push(format!("{connective} {}.", s.value));
        }
        Ok(parts.join(" "))
    }
}

/// Renders with the default template table.
pub fn build_injection_message(segments: &[RemovedSegment]) -> Result<String, ProtocolError> {
    TemplateTable::default().render(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(dimension: Dimension, sub: &str, value: &str) -> RemovedSegment {
        RemovedSegment {
            dimension,
            subdimension: sub.into(),
            value: value.into(),
        }
    }

    #[test]
    fn goal_format() {
        let msg = build_injection_message(&[seg(Dimension::Goal, "format", "CSV format")]).unwrap();
        assert_eq!(msg, "By the way, please give me the result in CSV format.");
    }

    #[test]
    fn two_segment_constraint() {
        let msg = build_injection_message(&[
            seg(Dimension::Constraint, "temporal", "last month of 2022"),
            seg(Dimension::Constraint, "selection", "0.50"),
        ])
        .unwrap();
        assert_eq!(
            msg,
            "By the way, I should have mentioned: I'm looking at last month of 2022. Also, 0.50."
        );
    }

    #[test]
    fn third_segment_uses_and() {
        let msg = build_injection_message(&[
            seg(Dimension::Input, "source", "the shared drive"),
            seg(Dimension::Input, "location", "folder Q3"),
            seg(Dimension::Goal, "format", "CSV"),
            seg(Dimension::Goal, "format", "sorted by date"),
        ])
        .unwrap();
        assert_eq!(
            msg,
            "By the way, you can find the data in the shared drive. Also, folder Q3. And CSV. And sorted by date."
        );
    }

    #[test]
    fn unmatched_pairs_fall_back() {
        let msg = build_injection_message(&[seg(Dimension::Context, "unknown-sub", "X")]).unwrap();
        assert_eq!(msg, "By the way, I should have mentioned: X.");
        let msg = build_injection_message(&[seg(Dimension::Goal, "", "X")]).unwrap();
        assert_eq!(msg, "By the way, I should have mentioned: X.");
        // pair exists but for another dimension
        let msg = build_injection_message(&[seg(Dimension::Input, "format", "X")]).unwrap();
        assert_eq!(msg, "By the way, I should have mentioned: X.");
    }

    #[test]
    fn subdimension_normalization() {
        let msg = build_injection_message(&[seg(Dimension::Context, "domain_knowledge", "rates are APR")])
            .unwrap();
        assert_eq!(msg, "For context, rates are APR.");
    }

    #[test]
    fn errors() {
        assert!(matches!(build_injection_message(&[]), Err(ProtocolError::NoSegments)));
        assert!(matches!(
            build_injection_message(&[seg(Dimension::Goal, "format", "CSV"), seg(Dimension::Goal, "", " ")]),
            Err(ProtocolError::EmptySegment(1))
        ));
    }

    #[test]
    fn default_table_has_eight_rows() {
        assert_eq!(TemplateTable::default().templates.len(), 8);
    }

    #[test]
    fn table_is_configurable() {
        let table: TemplateTable = serde_json::from_str(
            r#"{"templates":[{"dimension":"goal","subdimension":"tone","template":"Keep it {value}."}]}"#,
        )
        .unwrap();
        assert_eq!(table.fallback, DEFAULT_FALLBACK);
        let msg = table.render(&[seg(Dimension::Goal, "tone", "formal")]).unwrap();
        assert_eq!(msg, "Keep it formal.");
    }
}
