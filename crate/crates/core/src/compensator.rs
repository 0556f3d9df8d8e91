//! Edge-side delay compensation.
//!
//! The measured round-trip delay is converted to a whole number of sampling
//! periods τ, and the τ-th entry of the received control sequence — the entry
//! predicted for the current wall step — is actuated. While no fresh sequence
//! arrives, the stored sequence is walked forward one entry per period.

use crate::predictor::ControlSequence;

/// Delay expressed in whole sampling periods.
///
/// An exact integer ratio is kept as is; anything else rounds to the nearest
/// integer, ties upward. The arithmetic runs on integer nanoseconds so that
/// ratios that are exact in decimal (e.g. 0.05/0.02 = 2.5) are not distorted
/// by float division.
pub fn delay_units(t_delay: f64, ts: f64) -> usize {
    assert!(t_delay >= 0.0, "delay must be nonnegative");
    assert!(ts > 0.0, "sampling period must be positive");
    let t_ns = (t_delay * 1e9).round() as u128;
    let ts_ns = (ts * 1e9).round() as u128;
    ((t_ns + ts_ns / 2) / ts_ns) as usize
}

/// Result of picking a control value for the current period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selected {
    pub value: f64,
    /// Index actually used after clamping to the sequence tail.
    pub index: usize,
    pub clamped: bool,
}

/// Per-session compensator state.
#[derive(Debug, Clone, Default)]
pub struct Compensator {
    last_sequence: Option<ControlSequence>,
    last_selected_index: usize,
    consecutive_losses: usize,
    clamp_events: u64,
}

impl Compensator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Actuates the τ-th entry of a freshly received sequence and stores the
    /// sequence for loss fallback. τ beyond the tail clamps to the last entry.
    pub fn select_input(&mut self, seq: ControlSequence, tau: usize) -> Selected {
        assert!(!seq.is_empty(), "control sequence must be nonempty");
        let last = seq.len() - 1;
        let index = tau.min(last);
        let clamped = tau > last;
        if clamped {
            self.clamp_events += 1;
        }
        let value = seq.values[index];
        self.last_sequence = Some(seq);
        self.last_selected_index = index;
        self.consecutive_losses = 0;
        Selected {
            value,
            index,
            clamped,
        }
    }

    /// Fallback for a period with no accepted sequence: advance one entry per
    /// lost period within the stored sequence. Returns `None` before any
    /// sequence has ever been received.
    pub fn on_loss(&mut self) -> Option<Selected> {
        let seq = self.last_sequence.as_ref()?;
        let last = seq.len() - 1;
        let wanted = self.last_selected_index + self.consecutive_losses + 1;
        let index = wanted.min(last);
        let clamped = wanted > last;
        if clamped {
            self.clamp_events += 1;
        }
        self.consecutive_losses += 1;
        Some(Selected {
            value: seq.values[index],
            index,
            clamped,
        })
    }

    pub fn last_sequence(&self) -> Option<&ControlSequence> {
        self.last_sequence.as_ref()
    }

    pub fn consecutive_losses(&self) -> usize {
        self.consecutive_losses
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> ControlSequence {
        ControlSequence::new(values.to_vec())
    }

    #[test]
    fn delay_unit_examples() {
        assert_eq!(delay_units(0.04, 0.02), 2); // exact integer kept
        assert_eq!(delay_units(0.0, 0.02), 0);
        assert_eq!(delay_units(0.0, 1e-6), 0);
        assert_eq!(delay_units(0.05, 0.02), 3); // 2.5 rounds up
        assert_eq!(delay_units(0.049, 0.02), 2); // 2.45 rounds down
        assert_eq!(delay_units(0.051, 0.02), 3);
    }

    #[test]
    fn delay_units_monotone_in_delay() {
        let ts = 0.02;
        let mut prev = 0;
        for i in 0..2000 {
            let t = i as f64 * 1e-4;
            let tau = delay_units(t, ts);
            assert!(tau >= prev, "tau non-monotone at {t}");
            prev = tau;
        }
    }

    #[test]
    fn select_head_on_zero_delay() {
        let mut comp = Compensator::new();
        let s = comp.select_input(seq(&[1.0, 2.0, 3.0, 4.0]), 0);
        assert_eq!(s, Selected { value: 1.0, index: 0, clamped: false });
    }

    #[test]
    fn select_tau_th_entry() {
        let mut comp = Compensator::new();
        let s = comp.select_input(seq(&[10.0, 20.0, 30.0, 40.0]), 2);
        assert_eq!(s.value, 30.0);
        assert!(!s.clamped);
    }

    #[test]
    fn select_clamps_to_tail() {
        let mut comp = Compensator::new();
        let s = comp.select_input(seq(&[10.0, 20.0, 30.0, 40.0]), 9);
        assert_eq!(s.value, 40.0);
        assert_eq!(s.index, 3);
        assert!(s.clamped);
        assert_eq!(comp.clamp_events(), 1);
    }

    #[test]
    fn loss_walks_the_stored_sequence_forward() {
        let mut comp = Compensator::new();
        comp.select_input(seq(&[1.0, 2.0, 3.0, 4.0]), 1);
        let first = comp.on_loss().unwrap();
        assert_eq!(first.value, 3.0);
        assert!(!first.clamped);
        let second = comp.on_loss().unwrap();
        assert_eq!(second.value, 4.0);
        assert!(!second.clamped);
        let third = comp.on_loss().unwrap();
        assert_eq!(third.value, 4.0);
        assert!(third.clamped);
    }

    #[test]
    fn cold_start_has_no_fallback() {
        let mut comp = Compensator::new();
        assert_eq!(comp.on_loss(), None);
    }

    #[test]
    fn reception_resets_the_loss_counter() {
        let mut comp = Compensator::new();
        comp.select_input(seq(&[1.0, 2.0, 3.0]), 0);
        comp.on_loss();
        comp.on_loss();
        assert_eq!(comp.consecutive_losses(), 2);
        comp.select_input(seq(&[5.0, 6.0, 7.0]), 1);
        assert_eq!(comp.consecutive_losses(), 0);
        // The walk restarts from the fresh sequence.
        assert_eq!(comp.on_loss().unwrap().value, 7.0);
    }

    #[test]
    fn select_never_indexes_out_of_bounds() {
        let mut comp = Compensator::new();
        for n in 1..6 {
            for tau in 0..20 {
                let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
                let s = comp.select_input(seq(&values), tau);
                assert!(s.index < n);
            }
        }
    }
}
