//! Visit statistics, empirical kernel and L1 confidence radii.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfidenceError {
    #[error("transition ({s}, {a}, {next}) is outside a {n_states}x{n_actions} model")]
    Index {
        s: usize,
        a: usize,
        next: usize,
        n_states: usize,
        n_actions: usize,
    },
    #[error("episode index must be at least 1")]
    Episode,
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("confidence radius undefined: log argument {0} is not above 1")]
    LogDomain(f64),
}

/// Transition counts collected by a learner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisitStats {
    n_states: usize,
    n_actions: usize,
    /// successor counts, indexed `(s * |A| + a) * |S| + s'`
    counts: Vec<u64>,
    /// visits per `(s, a)`
    visits: Vec<u64>,
    /// global step counter
    pub t: u64,
    /// episode counter
    pub k: u64,
}

impl VisitStats {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        VisitStats {
            n_states,
            n_actions,
            counts: vec![0; n_states * n_actions * n_states],
            visits: vec![0; n_states * n_actions],
            t: 0,
            k: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, s: usize, a: usize, next: usize) -> Result<(), ConfidenceError> {
        if s >= self.n_states || next >= self.n_states || a >= self.n_actions {
            return Err(ConfidenceError::Index {
                s,
                a,
                next,
                n_states: self.n_states,
                n_actions: self.n_actions,
            });
        }
        let pair = s * self.n_actions + a;
        self.counts[pair * self.n_states + next] += 1;
        self.visits[pair] += 1;
        self.t += 1;
        Ok(())
    }

    /// Advances time without recording a sample (reset moves).
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.n_actions + a]
    }

    pub fn count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.counts[(s * self.n_actions + a) * self.n_states + next]
    }

    /// Empirical kernel `C(s,a,s') / max(1, N(s,a))`, rows indexed like the counts.
    pub fn empirical(&self) -> Vec<f64> {
        let n = self.n_states;
        let mut hat = vec![0.0; self.counts.len()];
        for (pair, &visits) in self.visits.iter().enumerate() {
            let denom = visits.max(1) as f64;
            for next in 0..n {
                hat[pair * n + next] = self.counts[pair * n + next] as f64 / denom;
            }
        }
        hat
    }

    /// L1 radius `sqrt(8|S| ln(2|A|k / (3δ)) / max(1, N(s,a)))`.
    pub fn radius(&self, s: usize, a: usize, k: u64, delta: f64) -> Result<f64, ConfidenceError> {
        radius(self.visits(s, a), k, delta, self.n_states, self.n_actions)
    }
}

pub fn radius(
    visits: u64,
    k: u64,
    delta: f64,
    n_states: usize,
    n_actions: usize,
) -> Result<f64, ConfidenceError> {
    if k == 0 {
        return Err(ConfidenceError::Episode);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfidenceError::Delta(delta));
    }
    let arg = 2.0 * n_actions as f64 * k as f64 / (3.0 * delta);
    if arg <= 1.0 {
        return Err(ConfidenceError::LogDomain(arg));
    }
    Ok((8.0 * n_states as f64 * arg.ln() / visits.max(1) as f64).sqrt())
}

/// Empirical kernel plus per-pair radii for one episode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalModel {
    pub n_states: usize,
    pub n_actions: usize,
    /// rows indexed `(s * |A| + a) * |S| + s'`
    pub hat: Vec<f64>,
    /// indexed `s * |A| + a`
    pub radius: Vec<f64>,
    pub episode: u64,
    pub delta: f64,
}

impl IntervalModel {
    pub fn hat_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_states;
        let start = (s * self.n_actions + a) * n;
        &self.hat[start..start + n]
    }

    pub fn radius(&self, s: usize, a: usize) -> f64 {
        self.radius[s * self.n_actions + a]
    }

    /// Degenerate model: the given kernel with radius zero everywhere.
    pub fn exact(n_states: usize, n_actions: usize, kernel: Vec<f64>) -> Self {
        IntervalModel {
            n_states,
            n_actions,
            hat: kernel,
            radius: vec![0.0; n_states * n_actions],
            episode: 1,
            delta: 0.5,
        }
    }

    /// Whether `row` lies in the L1 ball around the empirical row of `(s, a)`.
    pub fn contains(&self, s: usize, a: usize, row: &[f64]) -> bool {
        let dist: f64 = self
            .hat_row(s, a)
            .iter()
            .zip(row)
            .map(|(h, p)| (h - p).abs())
            .sum();
        dist <= self.radius(s, a) + 1e-12
    }
}

pub fn build_interval(
    stats: &VisitStats,
    k: u64,
    delta: f64,
) -> Result<IntervalModel, ConfidenceError> {
    let mut radii = Vec::with_capacity(stats.n_states * stats.n_actions);
    for s in 0..stats.n_states {
        for a in 0..stats.n_actions {
            radii.push(stats.radius(s, a, k, delta)?);
        }
    }
    Ok(IntervalModel {
        n_states: stats.n_states,
        n_actions: stats.n_actions,
        hat: stats.empirical(),
        radius: radii,
        episode: k,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn record_counts() {
        let mut st = VisitStats::new(2, 1);
        st.record(0, 0, 1).unwrap();
        assert_eq!((st.visits(0, 0), st.count(0, 0, 1), st.t), (1, 1, 1));
        st.record(0, 0, 1).unwrap();
        assert_eq!(st.visits(0, 0), 2);
        assert!(st.record(0, 1, 0).is_err());
        st.tick();
        assert_eq!((st.t, st.visits(0, 0)), (3, 2));
    }

    #[test]
    fn empirical_rows() {
        let mut st = VisitStats::new(2, 2);
        for _ in 0..3 {
            st.record(0, 0, 0).unwrap();
        }
        st.record(0, 0, 1).unwrap();
        let hat = st.empirical();
        assert_eq!(&hat[0..2], &[0.75, 0.25]);
        assert_eq!(&hat[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn radius_values() {
        let b = radius(0, 3, 0.1, 2, 2).unwrap();
        // independent evaluation: sqrt(16 ln 40)
        assert!((b - 7.682582330559366).abs() < 1e-12);
        let r4 = radius(4, 3, 0.1, 2, 2).unwrap();
        let r16 = radius(16, 3, 0.1, 2, 2).unwrap();
        assert!((r4 / r16 - 2.0).abs() < 1e-12);
        let mut last = 0.0;
        for k in [1, 2, 5, 50, 5000] {
            let r = radius(3, k, 0.1, 2, 2).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert_eq!(radius(0, 0, 0.1, 2, 2), Err(ConfidenceError::Episode));
        assert_eq!(radius(0, 1, 1.5, 2, 2), Err(ConfidenceError::Delta(1.5)));
        assert!(matches!(
            radius(0, 1, 0.9, 2, 1),
            Err(ConfidenceError::LogDomain(_))
        ));
    }

    #[test]
    fn fresh_interval() {
        let st = VisitStats::new(3, 2);
        let m = build_interval(&st, 1, 0.1).unwrap();
        assert!(m.hat.iter().all(|&p| p == 0.0));
        let r0 = radius(0, 1, 0.1, 3, 2).unwrap();
        assert!(m.radius.iter().all(|&r| r == r0));
    }

    #[test]
    fn saturated_counts_contain_truth() {
        let truth: [[f64; 3]; 2] = [[0.2, 0.3, 0.5], [0.6, 0.4, 0.0]];
        let mut st = VisitStats::new(3, 1);
        for (s, row) in truth.iter().enumerate().take(2) {
            for (t, &p) in row.iter().enumerate() {
                for _ in 0..(p * 1e6).round() as u64 {
                    st.record(s, 0, t).unwrap();
                }
            }
        }
        let m = build_interval(&st, 1, 0.1).unwrap();
        for (s, row) in truth.iter().enumerate() {
            assert!(m.radius(s, 0) < 0.02);
            assert!(m.contains(s, 0, row));
        }
        assert!(m.radius(0, 0) == m.radius(1, 0));
        assert!(m.radius(2, 0) > m.radius(0, 0));
    }

    proptest! {
        #[test]
        fn counts_stay_consistent(records in prop::collection::vec((0usize..4, 0usize..2, 0usize..4), 0..2000)) {
            let mut st = VisitStats::new(4, 2);
            for &(s, a, t) in &records {
                st.record(s, a, t).unwrap();
            }
            let hat = st.empirical();
            for s in 0..4 {
                for a in 0..2 {
                    let total: u64 = (0..4).map(|t| st.count(s, a, t)).sum();
                    prop_assert_eq!(total, st.visits(s, a));
                    let row_sum: f64 = hat[(s * 2 + a) * 4..(s * 2 + a + 1) * 4].iter().sum();
                    if st.visits(s, a) > 0 {
                        prop_assert!((row_sum - 1.0).abs() < 1e-9);
                    } else {
                        prop_assert_eq!(row_sum, 0.0);
                    }
                }
            }
            prop_assert_eq!(st.t, records.len() as u64);
            prop_assert_eq!(st.empirical(), hat);
        }
    }
}
