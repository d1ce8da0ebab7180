//! Terminology constraints as supplied by users or extraction tools.

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::token::{SourceSpan, Token};

/// One terminology constraint: a set of alternative target token sequences
/// (synonyms), optionally tied to an aligned source span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    /// Alternative surface forms; exactly one must appear in the output.
    pub alts: Vec<Vec<Token>>,
    /// Aligned source positions, when known (dictionary constraints).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<SourceSpan>,
}

impl ConstraintSpec {
    pub fn new(alts: Vec<Vec<Token>>, span: Option<SourceSpan>) -> Result<Self, ValidationError> {
        let spec = ConstraintSpec { alts, span };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-alternative convenience constructor.
    pub fn single(alt: Vec<Token>, span: Option<SourceSpan>) -> Result<Self, ValidationError> {
        ConstraintSpec::new(vec![alt], span)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.alts.is_empty() {
            return Err(ValidationError::NoAlternatives);
        }
        for alt in &self.alts {
            if alt.is_empty() {
                return Err(ValidationError::EmptyAlternative);
            }
        }
        for (i, a) in self.alts.iter().enumerate() {
            if self.alts[i + 1..].contains(a) {
                return Err(ValidationError::DuplicateAlternative);
            }
        }
        if let Some(span) = &self.span {
            if span.start >= span.end {
                return Err(ValidationError::EmptySpan {
                    start: span.start,
                    end: span.end,
                });
            }
        }
        Ok(())
    }

    /// The same constraint with its span annotation removed.
    pub fn without_span(&self) -> ConstraintSpec {
        ConstraintSpec {
            alts: self.alts.clone(),
            span: None,
        }
    }

    /// First tokens of all alternatives (constraint-initiating tokens).
    pub fn initial_tokens(&self) -> impl Iterator<Item = &Token> {
        self.alts.iter().map(|alt| &alt[0])
    }
}

/// One record of the JSON-Lines constraint file:
/// `{"constraints": [{"alts": [["Tote","Meer"],["Toten","Meer"]], "span": [4,6]}]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstraintRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub constraints: Vec<ConstraintSpec>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::tok;

    #[test]
    fn parses_the_documented_record_shape() {
        let line = r#"{"constraints": [{"alts": [["Tote","Meer"],["Toten","Meer"]], "span": [4,6]}]}"#;
        let rec: ConstraintRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.constraints.len(), 1);
        let c = &rec.constraints[0];
        assert_eq!(c.alts.len(), 2);
        assert_eq!(c.alts[0], vec![tok("Tote"), tok("Meer")]);
        assert_eq!(c.span, Some(SourceSpan::new(4, 6).unwrap()));
    }

    #[test]
    fn span_is_optional() {
        let line = r#"{"constraints": [{"alts": [["signs"]]}]}"#;
        let rec: ConstraintRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.constraints[0].span, None);
    }

    #[test]
    fn rejects_duplicate_alternatives() {
        let c = ConstraintSpec::new(vec![vec![tok("a")], vec![tok("a")]], None);
        assert_eq!(c.unwrap_err(), ValidationError::DuplicateAlternative);
    }

    #[test]
    fn rejects_empty_alternative() {
        let c = ConstraintSpec::new(vec![vec![]], None);
        assert_eq!(c.unwrap_err(), ValidationError::EmptyAlternative);
    }
}
