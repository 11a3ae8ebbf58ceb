use serde::{Deserialize, Serialize};

/// Query flag versus episode outcome. A positive is a query; the condition
/// is a failing episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, queried: bool, success: bool) {
        match (queried, success) {
            (true, false) => self.tp += 1,
            (false, false) => self.fn_ += 1,
            (false, true) => self.tn += 1,
            (true, true) => self.fp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        Metrics {
            tpr: ratio(self.tp, self.tp + self.fn_),
            tnr: ratio(self.tn, self.tn + self.fp),
            f1: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            acc: ratio(self.tp + self.tn, self.total()),
        }
    }
}

/// Rates derived from a [`ConfusionMatrix`]; `None` where the denominator
/// is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
    pub acc: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_matrix_has_no_rates() {
        assert_eq!(ConfusionMatrix::default().metrics(), Metrics::default());
    }

    #[test]
    fn never_querying_gives_zero_tpr() {
        let mut m = ConfusionMatrix::default();
        for i in 0..10 {
            m.record(false, i % 3 == 0);
        }
        let r = m.metrics();
        assert_eq!((r.tpr, r.tnr), (Some(0.0), Some(1.0)));
        assert_eq!(r.f1, Some(0.0));
    }

    proptest! {
        #[test]
        fn identities_hold(tp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500, fp in 0u64..500) {
            let m = ConfusionMatrix { tp, fn_, tn, fp };
            let r = m.metrics();
            let tpr = tp as f64 / (tp + fn_) as f64;
            let tnr = tn as f64 / (tn + fp) as f64;
            let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
            let acc = (tp + tn) as f64 / (tp + fn_ + tn + fp) as f64;
            prop_assert_eq!(r.tpr, (tp + fn_ > 0).then_some(tpr));
            prop_assert_eq!(r.tnr, (tn + fp > 0).then_some(tnr));
            prop_assert_eq!(r.f1, (2 * tp + fp + fn_ > 0).then_some(f1));
            prop_assert_eq!(r.acc, (m.total() > 0).then_some(acc));
            for v in [r.tpr, r.tnr, r.f1, r.acc].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
