use num_rational::Ratio;

use crate::error::ConfigError;
use crate::{Epoch, ProcessId, SimTime, View};

/// System-wide constants shared by every process of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Params {
    pub n: usize,
    pub f: usize,
    pub delta: SimTime,
    pub gst: SimTime,
    /// Slack added to every RareSync view so that the overlap is strictly
    /// larger than the view core needs.
    pub epsilon: SimTime,
    /// First view duration of the doubling baseline.
    pub beta: SimTime,
}

impl Params {
    /// Builds parameters with `epsilon = delta / 100` and `beta = 1`.
    pub fn new(n: usize, delta: SimTime, gst: SimTime) -> Result<Self, ConfigError> {
        let f = f_for(n)?;
        if !delta.is_positive() {
            return Err(ConfigError::NonPositiveDelta(delta));
        }
        if gst.is_negative() {
            return Err(ConfigError::NegativeGst(gst));
        }
        Ok(Params { n, f, delta, gst, epsilon: delta / 100, beta: SimTime::from_int(1) })
    }

    pub fn with_epsilon(mut self, epsilon: SimTime) -> Result<Self, ConfigError> {
        if !epsilon.is_positive() {
            return Err(ConfigError::NonPositiveEpsilon(epsilon));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: SimTime) -> Result<Self, ConfigError> {
        if !beta.is_positive() {
            return Err(ConfigError::NonPositiveBeta(beta));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    /// Required overlap per view: the view core needs eight message delays.
    pub fn big_delta(&self) -> SimTime {
        self.delta * 8
    }

    pub fn view_duration(&self) -> SimTime {
        self.big_delta() + self.delta * 2 + self.epsilon
    }

    pub fn views_per_epoch(&self) -> u64 {
        self.f as u64 + 1
    }

    pub fn epoch_duration(&self) -> SimTime {
        self.view_duration() * (self.f as i128 + 1)
    }

    /// Round-robin leader: `P((v mod n) + 1)`.
    pub fn leader(&self, view: View) -> ProcessId {
        ProcessId((view % self.n as u64) as u32 + 1)
    }

    pub fn epoch_of(&self, view: View) -> Epoch {
        (view - 1) / self.views_per_epoch() + 1
    }

    /// Global number of the `index`-th view (1-based) of `epoch`.
    pub fn global_view(&self, epoch: Epoch, index: u64) -> View {
        (epoch - 1) * self.views_per_epoch() + index
    }

    pub fn first_view(&self, epoch: Epoch) -> View {
        self.global_view(epoch, 1)
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcessId> + Clone {
        (1..=self.n as u32).map(ProcessId)
    }

    pub fn scale_delta(&self, num: i128, den: i128) -> SimTime {
        self.delta.scale(Ratio::new(num, den))
    }
}

/// Returns f for n = 3f+1.
pub fn f_for(n: usize) -> Result<usize, ConfigError> {
    if n < 4 || !(n - 1).is_multiple_of(3) {
        return Err(ConfigError::InvalidN(n));
    }
    Ok((n - 1) / 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> Params {
        Params::new(n, SimTime::from_int(1), SimTime::from_int(50)).unwrap()
    }

    #[test]
    fn leader_is_round_robin() {
        let p = params(4);
        assert_eq!(p.leader(1), ProcessId(2));
        assert_eq!(p.leader(4), ProcessId(1));
        for v in 1..40 {
            assert_eq!(p.leader(v), p.leader(v + 4));
        }
        let window: std::collections::BTreeSet<_> = (7..11).map(|v| p.leader(v)).collect();
        assert_eq!(window.len(), 4);
    }

    #[test]
    fn durations() {
        let p = params(4);
        assert_eq!(p.view_duration(), SimTime::new(1001, 100));
        assert_eq!(p.epoch_duration(), SimTime::new(2002, 100));
        assert_eq!(params(7).epoch_duration(), SimTime::new(3003, 100));
    }

    #[test]
    fn view_numbering() {
        let p = params(7);
        assert_eq!(p.global_view(2, 1), 4);
        assert_eq!(p.epoch_of(3), 1);
        assert_eq!(p.epoch_of(4), 2);
    }

    #[test]
    fn rejects_bad_n() {
        for n in [0, 1, 2, 3, 5, 6, 8] {
            assert_eq!(f_for(n), Err(ConfigError::InvalidN(n)));
        }
        assert_eq!(f_for(49), Ok(16));
    }
}
