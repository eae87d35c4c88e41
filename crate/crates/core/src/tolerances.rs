use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by the classification, tracing and oracle code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// `|β_i|` below this counts as zero when reading a support off a vector.
    pub zero: f64,
    /// Relative eigenvalue threshold: `|μ| < degeneracy · (1 + ‖K‖)` is zero.
    pub degeneracy: f64,
    /// Criticality residual threshold, relative to `1 + ‖∇φ‖`.
    pub critical: f64,
    /// Restricted-gradient threshold for breakpoints, relative to `1 + ‖∇φ(0)‖`.
    pub breakpoint: f64,
    /// Allowed relative spread of the per-coordinate λ estimates.
    pub lambda_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero: 1e-10,
            degeneracy: 1e-9,
            critical: 1e-8,
            breakpoint: 1e-8,
            lambda_spread: 1e-6,
        }
    }
}

impl Tolerances {
    /// Overrides one threshold by name. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match key {
            "zero" => self.zero = value,
            "degeneracy" => self.degeneracy = value,
            "critical" => self.critical = value,
            "breakpoint" => self.breakpoint = value,
            "lambda_spread" => self.lambda_spread = value,
            _ => return false,
        }
        true
    }

    pub const KEYS: [&'static str; 5] = ["zero", "degeneracy", "critical", "breakpoint", "lambda_spread"];
}
