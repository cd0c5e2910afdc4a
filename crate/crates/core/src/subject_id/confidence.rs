use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::Label;

pub const DEFAULT_CONFIDENCE_WINDOW: usize = 10;
pub const DEFAULT_ALERT_THRESHOLD: u8 = 70;

/// Sliding-window vote fusion across receivers for one monitored zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceState {
    pub window: usize,
    pub alert_threshold: u8,
    votes: BTreeMap<u16, VecDeque<f64>>,
}

impl Default for ConfidenceState {
    fn default() -> Self {
        Self::new(DEFAULT_CONFIDENCE_WINDOW, DEFAULT_ALERT_THRESHOLD)
    }
}

/// Vote in (0, 1); the label only matters at margin 0, where a non-human
/// tie votes strictly below one half.
pub fn vote(label: Label, margin: f64) -> f64 {
    let v = 1.0 / (1.0 + (-margin).exp());
    if label.is_human() {
        v
    } else {
        v.min(0.5 - f64::EPSILON)
    }
}

impl ConfidenceState {
    /// `window` is clamped to at least 1.
    pub fn new(window: usize, alert_threshold: u8) -> Self {
        Self { window: window.max(1), alert_threshold, votes: BTreeMap::new() }
    }

    /// Appends one output per receiver and returns the fused score.
    pub fn update(&mut self, outputs: &[(u16, Label, f64)]) -> u8 {
        for &(receiver, label, margin) in outputs {
            let q = self.votes.entry(receiver).or_default();
            q.push_back(vote(label, margin));
            while q.len() > self.window {
                q.pop_front();
            }
        }
        self.score()
    }

    /// `round(99 * mean vote)` over all receivers' windows; 0 when empty.
    pub fn score(&self) -> u8 {
        let (sum, n) = self.votes.values().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return 0;
        }
        (99.0 * sum / n as f64).round().clamp(0.0, 99.0) as u8
    }

    pub fn alert(&self) -> bool {
        self.score() >= self.alert_threshold
    }

    pub fn vote_count(&self) -> usize {
        self.votes.values().map(VecDeque::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_scores_zero() {
        let s = ConfidenceState::default();
        assert_eq!(s.score(), 0);
        assert!(!s.alert());
    }

    #[test]
    fn saturates_at_99() {
        let mut s = ConfidenceState::default();
        for _ in 0..12 {
            s.update(&[(1, Label::Human, 20.0), (2, Label::Human, 25.0)]);
        }
        assert_eq!(s.score(), 99);
        assert!(s.alert());
        assert_eq!(s.vote_count(), 20);
    }

    #[test]
    fn transient_is_outweighed() {
        let mut s = ConfidenceState::default();
        for _ in 0..10 {
            s.update(&[(1, Label::NonHuman, -2.0)]);
        }
        s.update(&[(1, Label::Human, 8.0)]);
        assert!(s.score() < 70, "{}", s.score());
        assert!(!s.alert());
    }

    #[test]
    fn tie_votes_below_half() {
        assert!(vote(Label::NonHuman, 0.0) < 0.5);
        assert_eq!(vote(Label::Human, 0.0), 0.5);
    }

    fn output() -> impl Strategy<Value = (u16, Label, f64)> {
        (0u16..3, -6.0f64..6.0).prop_map(|(r, m)| (r, if m > 0.0 { Label::Human } else { Label::NonHuman }, m))
    }

    proptest! {
        #[test]
        fn score_bounded(history in prop::collection::vec(output(), 0..40), w in 1usize..12) {
            let mut s = ConfidenceState::new(w, 70);
            for o in history {
                let score = s.update(&[o]);
                prop_assert!(score <= 99);
            }
        }

        // Replacing any vote by one with a larger margin never lowers the score.
        #[test]
        fn score_monotone_in_margin(history in prop::collection::vec(output(), 1..30), idx in 0usize..30, bump in 0.0f64..5.0) {
            let idx = idx % history.len();
            let mut raised = history.clone();
            raised[idx].2 += bump;
            raised[idx].1 = if raised[idx].2 > 0.0 { Label::Human } else { Label::NonHuman };
            let mut a = ConfidenceState::default();
            let mut b = ConfidenceState::default();
            for (x, y) in history.iter().zip(&raised) {
                a.update(&[*x]);
                b.update(&[*y]);
            }
            prop_assert!(b.score() >= a.score());
        }

        // A human vote never scores below the non-human vote it could have been.
        #[test]
        fn human_vote_dominates(history in prop::collection::vec(output(), 0..30), m in 0.0f64..6.0) {
            let mut a = ConfidenceState::default();
            for o in &history {
                a.update(&[*o]);
            }
            let mut b = a.clone();
            let with_human = a.update(&[(0, Label::Human, m)]);
            let with_other = b.update(&[(0, Label::NonHuman, -m)]);
            prop_assert!(with_human >= with_other);
        }

        // Votes at the extremes move the score in their own direction.
        #[test]
        fn extreme_votes_move_score(history in prop::collection::vec(output(), 0..30)) {
            let mut s = ConfidenceState::default();
            for o in &history {
                s.update(&[*o]);
            }
            let before = s.score();
            let mut up = s.clone();
            prop_assert!(up.update(&[(0, Label::Human, 40.0)]) >= before);
            let mut down = s.clone();
            prop_assert!(down.update(&[(0, Label::NonHuman, -40.0)]) <= before);
        }
    }
}
