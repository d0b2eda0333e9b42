//! Exact rational simulation time and per-process local clocks.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::ConfigError;
use crate::ProcessId;

pub type Rational = Ratio<i128>;

/// A point in (or span of) global simulation time.
///
/// Time is kept as an exact rational so that drift integration and the
/// latency bounds can be compared without rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(Rational);

impl SimTime {
    pub const ZERO: SimTime = SimTime(Ratio::new_raw(0, 1));

    pub fn new(numer: i128, denom: i128) -> Self {
        SimTime(Ratio::new(numer, denom))
    }

    pub fn from_int(value: i128) -> Self {
        SimTime(Ratio::from_integer(value))
    }

    pub fn from_ratio(value: Rational) -> Self {
        SimTime(value)
    }

    pub fn ratio(self) -> Rational {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(self) -> bool {
        self.0.is_negative()
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn scale(self, factor: Rational) -> Self {
        SimTime(self.0 * factor)
    }

    /// Fixed-point decimal rendering with six fractional digits, truncated.
    pub fn to_decimal(self) -> String {
        let scaled = self.0 * Ratio::from_integer(1_000_000);
        let units = scaled.to_integer();
        let sign = if units < 0 { "-" } else { "" };
        let (whole, frac) = units.abs().div_rem(&1_000_000);
        format!("{sign}{whole}.{frac:06}")
    }

    /// Parses `a`, `a/b` or a finite decimal like `2.5`.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n: i128 = n.trim().parse().ok()?;
            let d: i128 = d.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            return Some(SimTime::new(n, d));
        }
        if let Some((whole, frac)) = text.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
                return None;
            }
            let negative = whole.starts_with('-');
            let whole: i128 = if whole.is_empty() || whole == "-" { 0 } else { whole.parse().ok()? };
            let denom = 10i128.pow(frac.len() as u32);
            let frac: i128 = frac.parse().ok()?;
            let magnitude = whole.abs() * denom + frac;
            return Some(SimTime::new(if negative { -magnitude } else { magnitude }, denom));
        }
        text.parse::<i128>().ok().map(SimTime::from_int)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<i128> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: i128) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl Div<i128> for SimTime {
    type Output = SimTime;
    fn div(self, rhs: i128) -> SimTime {
        SimTime(self.0 / rhs)
    }
}

impl std::iter::Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        iter.fold(SimTime::ZERO, Add::add)
    }
}

/// One piece of a rate schedule: from `start` (global) onward the local
/// clock advances `rate` local units per global unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateSegment {
    pub start: SimTime,
    pub rate: Rational,
}

/// Piecewise-constant local clock rate for one process.
///
/// Rates are strictly positive everywhere and exactly 1 from GST onward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClockModel {
    process: ProcessId,
    segments: Vec<RateSegment>,
}

impl ClockModel {
    /// A clock that never drifts.
    pub fn perfect(process: ProcessId) -> Self {
        ClockModel {
            process,
            segments: vec![RateSegment { start: SimTime::ZERO, rate: Rational::from_integer(1) }],
        }
    }

    /// Builds a schedule from pre-GST segments; a rate-1 segment starting at
    /// `gst` is appended and every segment at or after GST is rejected.
    pub fn drifting(
        process: ProcessId,
        pre_gst: Vec<RateSegment>,
        gst: SimTime,
    ) -> Result<Self, ConfigError> {
        let mut segments = Vec::with_capacity(pre_gst.len() + 1);
        let mut last_start: Option<SimTime> = None;
        for seg in pre_gst {
            if !seg.rate.is_positive() {
                return Err(ConfigError::Clock(format!("{process}: non-positive rate {}", seg.rate)));
            }
            if seg.start.is_negative() || seg.start >= gst {
                return Err(ConfigError::Clock(format!(
                    "{process}: pre-GST segment starts at {} (GST {gst})",
                    seg.start
                )));
            }
            if last_start.is_some_and(|s| seg.start <= s) {
                return Err(ConfigError::Clock(format!("{process}: segments not increasing")));
            }
            last_start = Some(seg.start);
            segments.push(seg);
        }
        if segments.first().is_none_or(|s| s.start != SimTime::ZERO) {
            segments.insert(0, RateSegment { start: SimTime::ZERO, rate: Rational::from_integer(1) });
        }
        if gst.is_positive() {
            segments.push(RateSegment { start: gst, rate: Rational::from_integer(1) });
        } else {
            segments = vec![RateSegment { start: SimTime::ZERO, rate: Rational::from_integer(1) }];
        }
        Ok(ClockModel { process, segments })
    }

    /// Constant pre-GST rate, rate 1 afterwards.
    pub fn constant_until_gst(process: ProcessId, rate: Rational, gst: SimTime) -> Result<Self, ConfigError> {
        ClockModel::drifting(process, vec![RateSegment { start: SimTime::ZERO, rate }], gst)
    }

    pub fn process(&self) -> ProcessId {
        self.process
    }

    pub fn segments(&self) -> &[RateSegment] {
        &self.segments
    }

    pub fn rate_at(&self, t: SimTime) -> Rational {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start <= t)
            .map(|s| s.rate)
            .unwrap_or_else(|| Rational::from_integer(1))
    }

    /// Local time elapsed on this clock between global instants `from` and `to`.
    pub fn local_elapsed(&self, from: SimTime, to: SimTime) -> SimTime {
        if to <= from {
            return SimTime::ZERO;
        }
        let mut total = Rational::zero();
        for (i, seg) in self.segments.iter().enumerate() {
            let seg_end = self.segments.get(i + 1).map(|s| s.start);
            let lo = seg.start.max(from);
            let hi = match seg_end {
                Some(end) => end.min(to),
                None => to,
            };
            if hi > lo {
                total += (hi - lo).ratio() * seg.rate;
            }
        }
        SimTime::from_ratio(total)
    }

    /// Global instant at which `local` local time has passed, starting at `now`.
    pub fn global_after(&self, now: SimTime, local: SimTime) -> SimTime {
        let mut remaining = local.ratio();
        let mut cursor = now;
        let first = self.segments.iter().rposition(|s| s.start <= now).unwrap_or(0);
        for i in first..self.segments.len() {
            let rate = self.segments[i].rate;
            match self.segments.get(i + 1) {
                Some(next) => {
                    let capacity = (next.start - cursor).ratio() * rate;
                    if capacity >= remaining {
                        return cursor + SimTime::from_ratio(remaining / rate);
                    }
                    remaining -= capacity;
                    cursor = next.start;
                }
                None => return cursor + SimTime::from_ratio(remaining / rate),
            }
        }
        cursor + SimTime::from_ratio(remaining)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(i: u32) -> ProcessId {
        ProcessId(i)
    }

    /// Independent oracle: step through time in tiny increments and sum rate * dt.
    fn numeric_expiry(clock: &ClockModel, now: f64, local: f64) -> f64 {
        let dt = 1e-4;
        let mut t = now;
        let mut acc = 0.0;
        while acc < local - 1e-12 {
            let rate = clock.rate_at(SimTime::new((t * 1e6).round() as i128, 1_000_000)).to_f64().unwrap();
            acc += rate * dt;
            t += dt;
        }
        t
    }

    #[test]
    fn measure_without_drift() {
        let clock = ClockModel::perfect(p(1));
        assert_eq!(clock.global_after(SimTime::from_int(5), SimTime::from_int(10)), SimTime::from_int(15));
    }

    #[test]
    fn measure_with_half_rate_before_gst() {
        let clock = ClockModel::constant_until_gst(p(1), Rational::new(1, 2), SimTime::from_int(100)).unwrap();
        let exact = clock.global_after(SimTime::ZERO, SimTime::from_int(10));
        assert_eq!(exact, SimTime::from_int(20));
        let numeric = numeric_expiry(&clock, 0.0, 10.0);
        assert!((numeric - 20.0).abs() < 1e-2, "numeric oracle {numeric}");
    }

    #[test]
    fn measure_straddling_gst() {
        // rate 2 on [0, 10): 20 local units before GST, then rate 1.
        let clock = ClockModel::constant_until_gst(p(2), Rational::from_integer(2), SimTime::from_int(10)).unwrap();
        let exact = clock.global_after(SimTime::from_int(6), SimTime::from_int(12));
        // 8 local units on [6,10), 4 more after GST
        assert_eq!(exact, SimTime::from_int(14));
        let numeric = numeric_expiry(&clock, 6.0, 12.0);
        assert!((numeric - 14.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(ClockModel::constant_until_gst(p(1), Rational::zero(), SimTime::from_int(5)).is_err());
        let late = vec![RateSegment { start: SimTime::from_int(7), rate: Rational::from_integer(3) }];
        assert!(ClockModel::drifting(p(1), late, SimTime::from_int(5)).is_err());
    }

    #[test]
    fn rate_is_one_after_gst() {
        let clock = ClockModel::constant_until_gst(p(1), Rational::new(7, 3), SimTime::from_int(40)).unwrap();
        assert_eq!(clock.rate_at(SimTime::from_int(40)), Rational::from_integer(1));
        assert_eq!(clock.rate_at(SimTime::from_int(4000)), Rational::from_integer(1));
    }

    #[test]
    fn decimal_and_parse() {
        assert_eq!(SimTime::new(1001, 100).to_decimal(), "10.010000");
        assert_eq!(SimTime::parse("2.5"), Some(SimTime::new(5, 2)));
        assert_eq!(SimTime::parse("7/4"), Some(SimTime::new(7, 4)));
        assert_eq!(SimTime::parse("50"), Some(SimTime::from_int(50)));
        assert_eq!(SimTime::parse("x"), None);
    }

    proptest::proptest! {
        #[test]
        fn local_clock_is_strictly_increasing(
            rate_num in 1i128..40, rate_den in 1i128..16,
            gst in 1i128..200, a in 0i128..400, gap in 1i128..400,
        ) {
            let clock = ClockModel::constant_until_gst(
                p(1), Rational::new(rate_num, rate_den), SimTime::from_int(gst)).unwrap();
            let t0 = SimTime::from_int(a);
            let t1 = SimTime::from_int(a + gap);
            proptest::prop_assert!(clock.local_elapsed(SimTime::ZERO, t1) > clock.local_elapsed(SimTime::ZERO, t0));
        }

        #[test]
        fn global_after_inverts_local_elapsed(
            rate_num in 1i128..40, rate_den in 1i128..16,
            gst in 1i128..200, now in 0i128..300, dur_num in 1i128..5000,
        ) {
            let clock = ClockModel::constant_until_gst(
                p(1), Rational::new(rate_num, rate_den), SimTime::from_int(gst)).unwrap();
            let now = SimTime::from_int(now);
            let dur = SimTime::new(dur_num, 7);
            let expiry = clock.global_after(now, dur);
            proptest::prop_assert!(expiry > now);
            proptest::prop_assert_eq!(clock.local_elapsed(now, expiry), dur);
        }
    }
}
