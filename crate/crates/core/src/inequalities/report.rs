use serde::{Deserialize, Serialize};

use crate::stats::Estimate;

/// Number of pooled standard errors separating noise from a real gap.
pub const SIGMA_BAND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    HoldsWithEquality,
    #[serde(rename = "violated-beyond-3-sigma")]
    Violated,
}

/// Two estimated sides of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub slack: f64,
    pub pooled_stderr: f64,
    pub verdict: Verdict,
    pub parameters: serde_json::Value,
}

impl InequalityReport {
    /// Verdict from the slack `rhs - lhs` and the pooled standard error of
    /// the two sides, with a rounding floor for exact sides.
    pub fn new(lhs: Estimate, rhs: Estimate, parameters: serde_json::Value) -> Self {
        let slack = rhs.value - lhs.value;
        let pooled = lhs.stderr.hypot(rhs.stderr);
        let floor = 1e-12 * (1.0 + lhs.value.abs().max(rhs.value.abs()));
        let band = SIGMA_BAND * pooled + floor;
        let verdict = if slack < -band {
            Verdict::Violated
        } else if slack.abs() <= band {
            Verdict::HoldsWithEquality
        } else {
            Verdict::Holds
        };
        InequalityReport {
            lhs,
            rhs,
            slack,
            pooled_stderr: pooled,
            verdict,
            parameters,
        }
    }

    pub fn passes(&self) -> bool {
        self.verdict != Verdict::Violated
    }

    /// Same estimates with the sides exchanged.
    pub fn swapped(&self) -> Self {
        InequalityReport::new(self.rhs, self.lhs, self.parameters.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn verdicts() {
        let r = InequalityReport::new(Estimate::exact(0.0), Estimate::exact(0.0), json!({}));
        assert_eq!(r.verdict, Verdict::HoldsWithEquality);
        let r = InequalityReport::new(Estimate::new(1.0, 0.01), Estimate::new(1.6, 0.01), json!({}));
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.slack - 0.6).abs() < 1e-12);
        let r = InequalityReport::new(Estimate::new(1.0, 0.1), Estimate::new(0.9, 0.1), json!({}));
        assert_eq!(r.verdict, Verdict::HoldsWithEquality);
        let r = r.swapped();
        assert!(r.passes());
        let r = InequalityReport::new(Estimate::new(1.6, 0.01), Estimate::new(1.0, 0.01), json!({}));
        assert_eq!(r.verdict, Verdict::Violated);
        assert_eq!(serde_json::to_value(r.verdict).unwrap(), "violated-beyond-3-sigma");
    }
}
