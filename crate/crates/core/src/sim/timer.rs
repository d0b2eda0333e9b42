use std::fmt;

use crate::error::SimError;
use crate::{ClockModel, ProcessId, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    View,
    Dissemination,
    Baseline,
}

impl fmt::Display for TimerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimerKind::View => "view_timer",
            TimerKind::Dissemination => "dissemination_timer",
            TimerKind::Baseline => "baseline_timer",
        })
    }
}

/// A local-clock timer with at most one pending expiration.
///
/// Every `measure` bumps the generation, so an expiration event queued by an
/// earlier `measure` is recognized as stale when it is popped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimerHandle {
    owner: ProcessId,
    kind: TimerKind,
    pending: Option<(SimTime, u64)>,
    generation: u64,
}

impl TimerHandle {
    pub fn new(owner: ProcessId, kind: TimerKind) -> Self {
        TimerHandle { owner, kind, pending: None, generation: 0 }
    }

    pub fn owner(&self) -> ProcessId {
        self.owner
    }

    pub fn kind(&self) -> TimerKind {
        self.kind
    }

    pub fn pending(&self) -> Option<(SimTime, u64)> {
        self.pending
    }

    /// Arms the timer to fire after `duration` of the owner's local time,
    /// replacing any pending expiration. Returns `(expiry, generation)`.
    pub fn measure(&mut self, clock: &ClockModel, now: SimTime, duration: SimTime) -> Result<(SimTime, u64), SimError> {
        if !duration.is_positive() {
            return Err(SimError::NonPositiveTimer(duration));
        }
        self.generation += 1;
        let expiry = clock.global_after(now, duration);
        self.pending = Some((expiry, self.generation));
        Ok((expiry, self.generation))
    }

    pub fn cancel(&mut self) {
        self.pending = None;
    }

    /// Consumes the pending expiration if `(time, generation)` is current.
    pub fn fire(&mut self, time: SimTime, generation: u64) -> bool {
        if self.pending == Some((time, generation)) {
            self.pending = None;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Rational;

    fn handle() -> (TimerHandle, ClockModel) {
        (TimerHandle::new(ProcessId(1), TimerKind::View), ClockModel::perfect(ProcessId(1)))
    }

    #[test]
    fn measure_sets_expiry() {
        let (mut h, clock) = handle();
        let (at, _) = h.measure(&clock, SimTime::from_int(5), SimTime::from_int(10)).unwrap();
        assert_eq!(at, SimTime::from_int(15));
    }

    #[test]
    fn drifting_measure() {
        let mut h = TimerHandle::new(ProcessId(2), TimerKind::View);
        let clock = ClockModel::constant_until_gst(ProcessId(2), Rational::new(1, 2), SimTime::from_int(100)).unwrap();
        let (at, _) = h.measure(&clock, SimTime::ZERO, SimTime::from_int(10)).unwrap();
        assert_eq!(at, SimTime::from_int(20));
    }

    #[test]
    fn remeasure_replaces() {
        let (mut h, clock) = handle();
        let (a, ga) = h.measure(&clock, SimTime::ZERO, SimTime::from_int(10)).unwrap();
        let (b, gb) = h.measure(&clock, SimTime::ZERO, SimTime::from_int(3)).unwrap();
        assert_eq!(b, SimTime::from_int(3));
        assert!(!h.fire(a, ga));
        assert!(h.fire(b, gb));
        assert!(!h.fire(b, gb));
    }

    #[test]
    fn cancel_is_idempotent() {
        let (mut h, clock) = handle();
        let (a, ga) = h.measure(&clock, SimTime::ZERO, SimTime::from_int(15)).unwrap();
        h.cancel();
        h.cancel();
        assert_eq!(h.pending(), None);
        assert!(!h.fire(a, ga));
    }

    #[test]
    fn cancel_then_measure_fires_once() {
        let (mut h, clock) = handle();
        let old = h.measure(&clock, SimTime::ZERO, SimTime::from_int(4)).unwrap();
        h.cancel();
        let new = h.measure(&clock, SimTime::from_int(2), SimTime::from_int(1)).unwrap();
        assert_eq!(new.0, SimTime::from_int(3));
        assert!(h.fire(new.0, new.1));
        assert!(!h.fire(old.0, old.1));
    }

    #[test]
    fn rejects_zero_duration() {
        let (mut h, clock) = handle();
        assert!(h.measure(&clock, SimTime::ZERO, SimTime::ZERO).is_err());
    }
}
