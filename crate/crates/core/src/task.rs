//! Batch decoding task records.

use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintSpec;
use crate::error::ValidationError;
use crate::token::Token;

/// One sentence to decode:
/// `{"id": "...", "source": ["..."], "constraints": [...], "reference": ["..."]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceTask {
    pub id: String,
    pub source: Vec<Token>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Token>>,
}

impl SentenceTask {
    /// Check constraint shapes and span bounds against the source length.
    pub fn validate(&self) -> Result<(), ValidationError> {
        for c in &self.constraints {
            c.validate()?;
            if let Some(span) = c.span {
                span.check_in_source(self.source.len())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_json_round_trip() {
        let line = r#"{"id": "t1", "source": ["a", "b"], "constraints": [{"alts": [["x"]], "span": [0, 1]}], "reference": ["x", "y"]}"#;
        let task: SentenceTask = serde_json::from_str(line).unwrap();
        assert_eq!(task.id, "t1");
        assert!(task.validate().is_ok());
        let back = serde_json::to_string(&task).unwrap();
        let again: SentenceTask = serde_json::from_str(&back).unwrap();
        assert_eq!(again.source, task.source);
    }

    #[test]
    fn out_of_range_span_fails_validation() {
        let line = r#"{"id": "t2", "source": ["a"], "constraints": [{"alts": [["x"]], "span": [0, 2]}]}"#;
        let task: SentenceTask = serde_json::from_str(line).unwrap();
        assert!(task.validate().is_err());
    }
}
