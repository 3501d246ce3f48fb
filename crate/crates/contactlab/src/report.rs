//! Result primitives shared by the suites: a residual is either a finite
//! number or an explicit refusal, never a silent skip.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum Checked {
    Residual(f64),
    Refused(String),
}

impl Checked {
    /// Wrap a residual, demoting non-finite values to refusals so reports
    /// stay comparable and serializable.
    pub fn residual(value: f64) -> Checked {
        if value.is_finite() {
            Checked::Residual(value)
        } else {
            Checked::Refused(format!("non-finite residual {value}"))
        }
    }

    pub fn refused(reason: impl Into<String>) -> Checked {
        Checked::Refused(reason.into())
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Checked::Residual(v) => Some(*v),
            Checked::Refused(_) => None,
        }
    }

    pub fn is_refused(&self) -> bool {
        matches!(self, Checked::Refused(_))
    }

    /// A refused entry passes: the refusal itself is the reported outcome.
    pub fn passes(&self, tol: f64) -> bool {
        match self {
            Checked::Residual(v) => *v < tol,
            Checked::Refused(_) => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_residuals_become_refusals() {
        assert!(Checked::residual(f64::NAN).is_refused());
        assert!(Checked::residual(f64::INFINITY).is_refused());
        assert_eq!(Checked::residual(0.5), Checked::Residual(0.5));
    }

    #[test]
    fn json_round_trip() {
        for c in [Checked::Residual(1e-9), Checked::refused("degenerate theta")] {
            let s = serde_json::to_string(&c).unwrap();
            let back: Checked = serde_json::from_str(&s).unwrap();
            assert_eq!(c, back);
        }
    }
}
