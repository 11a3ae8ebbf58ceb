//! Robot-gated query rule.
//!
//! A [`QueryGate`] holds the sorted training-set uncertainty scores. A score
//! violates the gate when its empirical CDF over those references is
//! strictly greater than `alpha`; the robot queries the expert once `patience`
//! consecutive inferences violate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proceed,
    QueryExpert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub loss: f64,
    pub cdf: f64,
    pub violation: bool,
}

impl GateDecision {
    pub fn is_query(&self) -> bool {
        self.verdict == Verdict::QueryExpert
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryGate {
    alpha: f64,
    tau: f64,
    patience: usize,
    streak: usize,
    reference: Arc<[f64]>,
}

/// Summary written next to checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub patience: usize,
    pub tau: f64,
    pub n_reference: usize,
    pub fit_seed: u64,
}

/// Nearest-rank quantile of an ascending array: `sorted[ceil(alpha·N) − 1]`.
pub fn nearest_rank(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let rank = ((alpha * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

impl QueryGate {
    pub fn fit(losses: &[f64], alpha: f64, patience: usize) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::config("cannot fit a gate to zero reference losses"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if patience == 0 {
            return Err(Error::config("patience must be >= 1"));
        }
        if losses.iter().any(|v| v.is_nan()) {
            return Err(Error::numeric("NaN in gate reference losses"));
        }
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let tau = nearest_rank(&sorted, alpha);
        Ok(Self {
            alpha,
            tau,
            patience,
            streak: 0,
            reference: sorted.into(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    pub fn streak(&self) -> usize {
        self.streak
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Fraction of reference losses `<= x`.
    pub fn empirical_cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return 1.0;
        }
        let below = self.reference.partition_point(|&r| r <= x);
        below as f64 / self.reference.len() as f64
    }

    pub fn is_violation(&self, loss: f64) -> bool {
        !loss.is_finite() || self.empirical_cdf(loss) > self.alpha
    }

    pub fn observe(&mut self, loss: f64) -> GateDecision {
        let cdf = self.empirical_cdf(loss);
        let violation = self.is_violation(loss);
        if !loss.is_finite() {
            log::warn!("non-finite uncertainty score {loss}; counting as a violation");
        }
        self.streak = if violation { self.streak + 1 } else { 0 };
        let verdict = if self.streak >= self.patience {
            self.streak = 0;
            Verdict::QueryExpert
        } else {
            Verdict::Proceed
        };
        GateDecision {
            verdict,
            loss,
            cdf,
            violation,
        }
    }

    pub fn reset(&mut self) {
        self.streak = 0;
    }

    pub fn report(&self, fit_seed: u64) -> ThresholdReport {
        ThresholdReport {
            alpha: self.alpha,
            patience: self.patience,
            tau: self.tau,
            n_reference: self.reference.len(),
            fit_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(f64::from).collect()
    }

    #[test]
    fn quantile_by_sort_and_index() {
        let g = QueryGate::fit(&one_to_hundred(), 0.99, 2).unwrap();
        assert_eq!(g.tau(), 99.0);
        let g = QueryGate::fit(&one_to_hundred(), 1.0, 2).unwrap();
        assert_eq!(g.tau(), 100.0);
        let g = QueryGate::fit(&[4.2; 17], 0.3, 1).unwrap();
        assert_eq!(g.tau(), 4.2);
    }

    #[test]
    fn cdf_counts() {
        let g = QueryGate::fit(&one_to_hundred(), 0.99, 2).unwrap();
        assert_eq!(g.empirical_cdf(0.5), 0.0);
        assert_eq!(g.empirical_cdf(100.0), 1.0);
        assert_eq!(g.empirical_cdf(99.0), 0.99);
    }

    #[test]
    fn loss_equal_to_tau_never_violates() {
        let g = QueryGate::fit(&one_to_hundred(), 0.99, 1).unwrap();
        assert!(!g.is_violation(g.tau()));
        assert!(g.is_violation(100.0));
    }

    #[test]
    fn patience_two() {
        let mut g = QueryGate::fit(&one_to_hundred(), 0.5, 2).unwrap();
        let seq: Vec<_> = [90.0, 1.0, 90.0].iter().map(|&l| g.observe(l).verdict).collect();
        assert_eq!(seq, vec![Verdict::Proceed; 3]);
        g.reset();
        assert_eq!(g.observe(90.0).verdict, Verdict::Proceed);
        assert_eq!(g.observe(90.0).verdict, Verdict::QueryExpert);
        assert_eq!(g.streak(), 0);
    }

    #[test]
    fn patience_one_fires_immediately() {
        let mut g = QueryGate::fit(&one_to_hundred(), 0.5, 1).unwrap();
        assert!(g.observe(75.0).is_query());
    }

    #[test]
    fn non_finite_loss_is_a_violation() {
        let mut g = QueryGate::fit(&one_to_hundred(), 1.0, 1).unwrap();
        assert!(g.observe(f64::NAN).is_query());
        assert!(g.observe(f64::INFINITY).is_query());
    }

    #[test]
    fn alpha_one_never_violates_finite_losses() {
        let mut g = QueryGate::fit(&one_to_hundred(), 1.0, 1).unwrap();
        for l in [0.0, 50.0, 100.0, 1e300] {
            assert!(!g.observe(l).is_query());
        }
    }

    #[test]
    fn reset_is_idempotent_and_keeps_tau() {
        let mut g = QueryGate::fit(&one_to_hundred(), 0.5, 3).unwrap();
        g.observe(99.0);
        g.observe(99.0);
        let tau = g.tau();
        g.reset();
        assert_eq!(g.streak(), 0);
        let once = g.clone();
        g.reset();
        assert_eq!(g, once);
        assert_eq!(g.tau(), tau);
    }

    #[test]
    fn invalid_fits_are_rejected() {
        assert!(matches!(QueryGate::fit(&[], 0.9, 1), Err(Error::Config(_))));
        assert!(matches!(QueryGate::fit(&[1.0], 1.5, 1), Err(Error::Config(_))));
        assert!(matches!(QueryGate::fit(&[1.0], 0.0, 1), Err(Error::Config(_))));
        assert!(matches!(QueryGate::fit(&[1.0], 0.5, 0), Err(Error::Config(_))));
    }

    #[test]
    fn report_carries_fit_metadata() {
        let g = QueryGate::fit(&one_to_hundred(), 0.99, 2).unwrap();
        let r = g.report(11);
        assert_eq!((r.n_reference, r.fit_seed, r.tau, r.patience), (100, 11, 99.0, 2));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"K\":2"));
    }

    proptest! {
        #[test]
        fn raising_alpha_never_lowers_tau(
            losses in prop::collection::vec(-1e3f64..1e3, 1..200),
            a in 0.001f64..1.0,
            b in 0.001f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let g_lo = QueryGate::fit(&losses, lo, 1).unwrap();
            let g_hi = QueryGate::fit(&losses, hi, 1).unwrap();
            prop_assert!(g_hi.tau() >= g_lo.tau());
        }

        #[test]
        fn streak_stays_below_patience(
            losses in prop::collection::vec(0f64..1.0, 1..50),
            seq in prop::collection::vec(0f64..1.5, 0..60),
            k in 1usize..5,
        ) {
            let mut g = QueryGate::fit(&losses, 0.8, k).unwrap();
            for l in seq {
                g.observe(l);
                prop_assert!(g.streak() < k);
            }
        }
    }
}
