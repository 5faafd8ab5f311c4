//! Cumulative pole-rank comparison between `chi0` and `chi_rpa`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSample {
    pub omega: f64,
    /// Sum of `chi0` ranks over poles strictly below `omega`.
    pub chi0_count: usize,
    pub rpa_count: usize,
    pub holds: bool,
    /// Counts match exactly at this sample.
    pub equality: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// `(omega, rank)`, ascending.
    pub chi0_poles: Vec<(f64, usize)>,
    pub rpa_poles: Vec<(f64, usize)>,
    pub samples: Vec<ShiftSample>,
    pub holds: bool,
}

impl ShiftReport {
    pub fn violations(&self) -> impl Iterator<Item = &ShiftSample> {
        self.samples.iter().filter(|s| !s.holds)
    }

    pub fn n_equal(&self) -> usize {
        self.samples.iter().filter(|s| s.equality).count()
    }
}

fn sorted(poles: &[(f64, usize)]) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = poles.iter().filter(|p| p.1 > 0).map(|&(w, r)| (w.abs(), r)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn cumulative(poles: &[(f64, usize)], omega: f64) -> usize {
    poles.iter().take_while(|p| p.0 < omega).map(|p| p.1).sum()
}

/// Default sample set: a uniform grid on `(0, 1.05 upper]` plus points
/// `1e-7` either side of every pole.
pub fn default_samples(chi0: &[(f64, usize)], rpa: &[(f64, usize)], upper: f64, n: usize) -> Vec<f64> {
    let top = 1.05 * upper;
    let mut s: Vec<f64> = (1..=n.max(1)).map(|i| top * i as f64 / n.max(1) as f64).collect();
    for &(w, _) in chi0.iter().chain(rpa) {
        s.extend([w - 1e-7, w + 1e-7]);
    }
    s.retain(|&w| w > 0.0);
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Checks `sum_{|w| < omega} rank_rpa <= sum_{|w| < omega} rank_chi0` at each sample.
pub fn forward_shift_report(chi0: &[(f64, usize)], rpa: &[(f64, usize)], samples: &[f64]) -> ShiftReport {
    let chi0_poles = sorted(chi0);
    let rpa_poles = sorted(rpa);
    let samples: Vec<ShiftSample> = samples
        .iter()
        .map(|&omega| {
            let chi0_count = cumulative(&chi0_poles, omega);
            let rpa_count = cumulative(&rpa_poles, omega);
            ShiftSample { omega, chi0_count, rpa_count, holds: rpa_count <= chi0_count, equality: rpa_count == chi0_count }
        })
        .collect();
    let holds = samples.iter().all(|s| s.holds);
    ShiftReport { chi0_poles, rpa_poles, samples, holds }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_lists_hold_with_equality() {
        let p = vec![(1.0, 1), (2.0, 2)];
        let s = default_samples(&p, &p, 2.5, 20);
        let r = forward_shift_report(&p, &p, &s);
        assert!(r.holds);
        assert_eq!(r.n_equal(), r.samples.len());
    }

    #[test]
    fn scalar_toy_strict_shift() {
        let (w1, beta, g) = (1.0_f64, 0.5, 0.8);
        let wt = (w1 * w1 + 2.0 * w1 * beta * g).sqrt();
        let r = forward_shift_report(&[(w1, 1)], &[(wt, 1)], &[0.5, 1.1, wt + 0.1]);
        assert!(r.holds);
        assert_eq!(r.samples[1].chi0_count, 1);
        assert_eq!(r.samples[1].rpa_count, 0);
        assert!(!r.samples[1].equality);
    }

    #[test]
    fn backward_shift_is_flagged() {
        let r = forward_shift_report(&[(1.0, 1)], &[(0.8, 1)], &[0.9, 1.5]);
        assert!(!r.holds);
        assert_eq!(r.violations().count(), 1);
    }

    #[test]
    fn strict_inequality_at_the_pole() {
        let r = forward_shift_report(&[(1.0, 1)], &[(1.0, 1)], &[1.0]);
        assert_eq!(r.samples[0].chi0_count, 0);
        assert!(r.holds);
    }
}
