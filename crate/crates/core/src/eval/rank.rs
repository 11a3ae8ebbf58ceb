use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// One-sided Mann-Whitney U test of `x` stochastically greater than `y`,
/// normal approximation with tie correction and continuity correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Option<RankTest> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return None;
    }
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    if all.iter().any(|(v, _)| v.is_nan()) {
        return None;
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += avg * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_sum_x - n1f * (n1f + 1.0) / 2.0;
    let mean = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    if var <= 0.0 {
        return Some(RankTest {
            u,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::standard();
    Some(RankTest {
        u,
        z,
        p_value: normal.sf(z),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_counts_pairwise_wins() {
        let x = [3.0, 5.0, 7.0];
        let y = [1.0, 4.0, 6.0, 8.0];
        let wins: f64 = x
            .iter()
            .flat_map(|a| y.iter().map(move |b| if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 }))
            .sum();
        assert_eq!(mann_whitney_greater(&x, &y).unwrap().u, wins);
    }

    #[test]
    fn ties_count_half() {
        let r = mann_whitney_greater(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(r.u, 1.0);
    }

    #[test]
    fn separated_samples_are_significant() {
        let x: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let y: Vec<f64> = (0..30).map(f64::from).collect();
        assert!(mann_whitney_greater(&x, &y).unwrap().p_value < 1e-6);
        assert!(mann_whitney_greater(&y, &x).unwrap().p_value > 0.99);
    }

    #[test]
    fn matches_textbook_z() {
        // n1 = n2 = 10, no ties, U = 80: mean 50, var 175.
        let x: Vec<f64> = [3, 5, 7, 8, 11, 13, 14, 16, 17, 19].iter().map(|&v| v as f64 + 0.5).collect();
        let y: Vec<f64> = (0..10).map(|i| (2 * i) as f64).collect();
        let r = mann_whitney_greater(&x, &y).unwrap();
        let wins: f64 = x.iter().map(|a| y.iter().filter(|b| a > *b).count() as f64).sum();
        assert_eq!(r.u, wins);
        let z = (wins - 50.0 - 0.5) / 175f64.sqrt();
        assert!((r.z - z).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_have_no_test() {
        assert!(mann_whitney_greater(&[], &[1.0]).is_none());
    }
}
