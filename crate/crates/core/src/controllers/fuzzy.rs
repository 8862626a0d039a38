//! Fuzzy time-headway car following.
//!
//! The first stage turns a gap and a speed into a headway error in seconds.
//! The second stage runs Mamdani inference (min implication, max
//! aggregation, centroid defuzzification) over triangular sets to pick a
//! bounded speed change. The rule table is data, loaded from JSON; the
//! default ships in `config/fuzzy_rules.json`.

use serde::{Deserialize, Serialize};

use super::headway::HeadwayEstimate;
use crate::error::{Error, Result};

/// Speed floor used when dividing the gap by the current speed.
pub const V_FLOOR: f64 = 0.1;
/// Headway error reported when nothing is in view.
pub const FAR_ERROR: f64 = 100.0;

const DEFAULT_RULES: &str = include_str!("../../config/fuzzy_rules.json");

/// `headway / max(v, V_FLOOR) − tau_target`, or [`FAR_ERROR`] without a target.
pub fn fuzzy_distance_error(headway: HeadwayEstimate, v: f64, tau_target: f64) -> f64 {
    match headway.get() {
        Some(d) => d / v.max(V_FLOOR) - tau_target,
        None => FAR_ERROR,
    }
}

/// Triangle `[a, b, c]` with its peak at `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Triangle(pub [f64; 3]);

impl Triangle {
    pub fn membership(&self, x: f64) -> f64 {
        let [a, b, c] = self.0;
        if x <= a || x >= c {
            return if x == b { 1.0 } else { 0.0 };
        }
        if x < b {
            (x - a) / (b - a)
        } else {
            (c - x) / (c - b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLabel {
    NegLarge,
    NegSmall,
    Zero,
    PosSmall,
    PosLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiveSets {
    pub neg_large: Triangle,
    pub neg_small: Triangle,
    pub zero: Triangle,
    pub pos_small: Triangle,
    pub pos_large: Triangle,
}

impl FiveSets {
    fn all(&self) -> [Triangle; 5] {
        [self.neg_large, self.neg_small, self.zero, self.pos_small, self.pos_large]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSets {
    pub falling: Triangle,
    pub steady: Triangle,
    pub rising: Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRow {
    pub falling: OutputLabel,
    pub steady: OutputLabel,
    pub rising: OutputLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRows {
    pub neg_large: RuleRow,
    pub neg_small: RuleRow,
    pub zero: RuleRow,
    pub pos_small: RuleRow,
    pub pos_large: RuleRow,
}

/// Membership sets and the 5×3 rule table (headway error × error rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyRuleTable {
    /// Inputs are clamped into these ranges before fuzzification.
    pub error_range: [f64; 2],
    pub rate_range: [f64; 2],
    pub error_sets: FiveSets,
    pub rate_sets: RateSets,
    /// Normalized output sets; the centroid is clamped to [−1, 1].
    pub output_sets: FiveSets,
    pub rules: RuleRows,
    /// Number of intervals in the centroid quadrature. Must be even.
    pub resolution: usize,
}

impl Default for FuzzyRuleTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_RULES).expect("shipped rule table is valid")
    }
}

impl FuzzyRuleTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParam {
            name: "rules",
            reason: e.to_string(),
        })?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidParam { name: "rules", reason };
        if self.resolution < 2 || self.resolution % 2 != 0 {
            return Err(bad(format!("resolution must be even and ≥ 2, got {}", self.resolution)));
        }
        for [lo, hi] in [self.error_range, self.rate_range] {
            if !(lo < hi) {
                return Err(bad(format!("empty input range [{lo}, {hi}]")));
            }
        }
        let rate = [self.rate_sets.falling, self.rate_sets.steady, self.rate_sets.rising];
        for tri in self.error_sets.all().iter().chain(&rate).chain(&self.output_sets.all()) {
            let [a, b, c] = tri.0;
            if !(a < b && b < c) || !(a.is_finite() && c.is_finite()) {
                return Err(bad(format!("triangle {:?} must satisfy a < b < c", tri.0)));
            }
        }
        Ok(())
    }

    fn rows(&self) -> [(Triangle, RuleRow); 5] {
        let e = &self.error_sets;
        let r = &self.rules;
        [
            (e.neg_large, r.neg_large),
            (e.neg_small, r.neg_small),
            (e.zero, r.zero),
            (e.pos_small, r.pos_small),
            (e.pos_large, r.pos_large),
        ]
    }

    /// Normalized decision in [−1, 1].
    pub fn infer(&self, error: f64, rate: f64) -> f64 {
        let error = error.clamp(self.error_range[0], self.error_range[1]);
        let rate = rate.clamp(self.rate_range[0], self.rate_range[1]);
        let rate_mu = [
            self.rate_sets.falling.membership(rate),
            self.rate_sets.steady.membership(rate),
            self.rate_sets.rising.membership(rate),
        ];

        // Firing strength per output label (max over rules).
        let mut strength = [0.0f64; 5];
        for (set, row) in self.rows() {
            let mu_e = set.membership(error);
            if mu_e == 0.0 {
                continue;
            }
            for (label, mu_r) in [row.falling, row.steady, row.rising].into_iter().zip(rate_mu) {
                let w = mu_e.min(mu_r);
                let slot = &mut strength[label as usize];
                *slot = slot.max(w);
            }
        }

        let outputs = self.output_sets.all();
        let half_span = outputs
            .iter()
            .flat_map(|t| t.0)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let n = self.resolution;
        let h = 2.0 * half_span / n as f64;
        let aggregate = |x: f64| {
            outputs
                .iter()
                .zip(strength)
                .fold(0.0f64, |m, (tri, w)| m.max(w.min(tri.membership(x))))
        };

        // Mirrored grid points are summed in pairs so that the result is
        // exactly odd under a mirrored rule base.
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n / 2 {
            let lo = (i as f64 - (n / 2) as f64) * h;
            let hi = ((n - i) as f64 - (n / 2) as f64) * h;
            let (mu_lo, mu_hi) = (aggregate(lo), aggregate(hi));
            if i == n / 2 {
                den += mu_lo;
            } else {
                num += lo * mu_lo + hi * mu_hi;
                den += mu_lo + mu_hi;
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).clamp(-1.0, 1.0)
        }
    }
}

/// Speed change for the next control period, within `±a_max·period`.
pub fn fuzzy_decide(table: &FuzzyRuleTable, error_seconds: f64, error_rate: f64, a_max: f64, period: f64) -> f64 {
    table.infer(error_seconds, error_rate) * a_max * period
}
