//! Scripted adversaries: who is Byzantine and how, how clocks drift before
//! GST, when processes start, and how the network delays each message.
//!
//! Every built-in delay policy delivers a message sent before GST by
//! GST + δ at the latest, which is the network model the timing bounds are
//! stated against. Custom scenarios may pick any legal policy.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;
use crate::message::{Layer, Message};
use crate::node::{Protocol, Strategy};
use crate::sim::{random_sixteenth, BoundedUniform, DelayPolicy, MaxDelay, UniformCapped};
use crate::time::{Rational, RateSegment};
use crate::{ClockModel, Params, ProcessId, SimTime, Value, View};

/// Independent random streams derived from one seed.
const STREAM_SCENARIO: u64 = 1;
const STREAM_DELAY: u64 = 2;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalRule {
    /// Each process proposes a random value in {1, 2, 3}.
    Random,
    /// Every correct process proposes the given value; Byzantine processes
    /// propose values nobody else does.
    Unanimous(Value),
    /// Process `Pi` proposes `100 + i`.
    Distinct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayKind {
    /// Exactly δ after GST, GST + δ before.
    Max,
    /// `u·δ` everywhere.
    BoundedUniform,
    /// `u·δ` after GST, uniform in `(sent, GST + δ]` before.
    UniformCapped,
    /// `u·δ` after GST, `GST + u·δ` before.
    HoldUntilGst,
    /// Like `HoldUntilGst`, except certification traffic is fast.
    WorstCase,
    /// Random mix of short and held pre-GST delays.
    Random,
}

impl DelayKind {
    pub fn name(self) -> &'static str {
        match self {
            DelayKind::Max => "max",
            DelayKind::BoundedUniform => "uniform",
            DelayKind::UniformCapped => "capped",
            DelayKind::HoldUntilGst => "hold_until_gst",
            DelayKind::WorstCase => "worst_case",
            DelayKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            DelayKind::Max,
            DelayKind::BoundedUniform,
            DelayKind::UniformCapped,
            DelayKind::HoldUntilGst,
            DelayKind::WorstCase,
            DelayKind::Random,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn policy(self, params: &Params, rng: ChaCha8Rng) -> Box<dyn DelayPolicy> {
        match self {
            DelayKind::Max => Box::new(MaxDelay::new(params)),
            DelayKind::BoundedUniform => Box::new(BoundedUniform::new(params, rng)),
            DelayKind::UniformCapped => Box::new(UniformCapped::new(params, rng)),
            DelayKind::HoldUntilGst => Box::new(Scripted { params: params.clone(), rng, fast_cert: false, mixed: false }),
            DelayKind::WorstCase => Box::new(Scripted { params: params.clone(), rng, fast_cert: true, mixed: false }),
            DelayKind::Random => Box::new(Scripted { params: params.clone(), rng, fast_cert: false, mixed: true }),
        }
    }
}

/// Pre-GST holding policies. `mixed` flips a coin per message between a
/// short delay and a uniform delay up to GST + δ.
struct Scripted {
    params: Params,
    rng: ChaCha8Rng,
    fast_cert: bool,
    mixed: bool,
}

impl DelayPolicy for Scripted {
    fn deliver_at(&mut self, _from: ProcessId, _to: ProcessId, msg: &Message, sent_at: SimTime) -> SimTime {
        let u = random_sixteenth(&mut self.rng);
        let delta = self.params.delta;
        let gst = self.params.gst;
        if sent_at >= gst || (self.fast_cert && msg.layer() == Layer::Cert) {
            let at = sent_at + delta.scale(u);
            // a fast pre-GST message still respects the GST + δ cap
            return if sent_at < gst { at.min(gst + delta) } else { at };
        }
        if self.mixed {
            if self.rng.gen_bool(0.5) {
                (sent_at + delta.scale(u)).min(gst + delta)
            } else {
                sent_at + (gst + delta - sent_at).scale(u)
            }
        } else {
            gst + delta.scale(u)
        }
    }
}

/// Hand-written scenario, typically loaded from a config file. Processes
/// not mentioned are correct, start at 0 and have perfect clocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustomScenario {
    pub byzantine: BTreeMap<ProcessId, Strategy>,
    /// Constant pre-GST clock rate per process.
    pub rates: BTreeMap<ProcessId, Rational>,
    pub starts: BTreeMap<ProcessId, SimTime>,
    pub delay: DelayKind,
}

impl Default for CustomScenario {
    fn default() -> Self {
        CustomScenario {
            byzantine: BTreeMap::new(),
            rates: BTreeMap::new(),
            starts: BTreeMap::new(),
            delay: DelayKind::UniformCapped,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Happy,
    WorstCase,
    ScenarioS,
    Equivocate,
    Random,
    Custom(CustomScenario),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Happy => "happy",
            ScenarioKind::WorstCase => "worst_case",
            ScenarioKind::ScenarioS => "scenario_s",
            ScenarioKind::Equivocate => "equivocate",
            ScenarioKind::Random => "random",
            ScenarioKind::Custom(_) => "custom",
        }
    }

    /// Parses the built-in scenario names.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "happy" => Some(ScenarioKind::Happy),
            "worst_case" => Some(ScenarioKind::WorstCase),
            "scenario_s" => Some(ScenarioKind::ScenarioS),
            "equivocate" => Some(ScenarioKind::Equivocate),
            "random" => Some(ScenarioKind::Random),
            _ => None,
        }
    }
}

/// Everything the engine needs besides the protocol itself.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub params: Params,
    pub seed: u64,
    pub byzantine: BTreeMap<ProcessId, Strategy>,
    pub clocks: Vec<ClockModel>,
    pub starts: Vec<SimTime>,
    pub proposals: Vec<Value>,
    pub delay: DelayKind,
}

impl ScenarioConfig {
    pub fn byzantine_set(&self) -> BTreeSet<ProcessId> {
        self.byzantine.keys().copied().collect()
    }

    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.byzantine.contains_key(&p)
    }

    pub fn correct(&self) -> Vec<ProcessId> {
        self.params.processes().filter(|p| self.is_correct(*p)).collect()
    }

    pub fn delay_policy(&self) -> Box<dyn DelayPolicy> {
        self.delay.policy(&self.params, rng_for(self.seed, STREAM_DELAY))
    }

    /// Checks the static fault bound and the start/clock tables.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        if self.byzantine.len() > p.f {
            return Err(ConfigError::TooManyByzantine(self.byzantine.len(), p.f));
        }
        if let Some(bad) = self.byzantine.keys().find(|id| id.0 == 0 || id.index() >= p.n) {
            return Err(ConfigError::Scenario(format!("unknown process {bad}")));
        }
        if self.clocks.len() != p.n || self.starts.len() != p.n || self.proposals.len() != p.n {
            return Err(ConfigError::Scenario("per-process tables must have n entries".into()));
        }
        if let Some(s) = self.starts.iter().find(|s| s.is_negative() || **s > p.gst) {
            return Err(ConfigError::Scenario(format!("start time {s} outside [0, GST]")));
        }
        Ok(())
    }
}

fn proposals(params: &Params, rule: ProposalRule, byzantine: &BTreeMap<ProcessId, Strategy>, rng: &mut ChaCha8Rng) -> Vec<Value> {
    params
        .processes()
        .map(|p| match rule {
            ProposalRule::Random => rng.gen_range(1..=3),
            ProposalRule::Distinct => 100 + u64::from(p.0),
            ProposalRule::Unanimous(v) if byzantine.contains_key(&p) => v + 1000 + u64::from(p.0),
            ProposalRule::Unanimous(v) => v,
        })
        .collect()
}

/// Smallest multiple of 1/16 that is at least `x`.
fn ceil_sixteenth(x: Rational) -> Rational {
    Rational::new((x * Rational::from_integer(16)).ceil().to_integer(), 16)
}

fn constant_rate(p: ProcessId, rate: Rational, params: &Params) -> Result<ClockModel, ConfigError> {
    ClockModel::constant_until_gst(p, rate, params.gst)
}

/// Leaders of the views in `views`, as a silent Byzantine set.
fn silent_leaders(params: &Params, views: impl Iterator<Item = View>) -> BTreeMap<ProcessId, Strategy> {
    views.map(|v| (params.leader(v), Strategy::Silent)).collect()
}

/// Builds the scenario for one (protocol, kind, seed).
pub fn build(
    protocol: Protocol,
    kind: &ScenarioKind,
    params: &Params,
    seed: u64,
    rule: ProposalRule,
) -> Result<ScenarioConfig, ConfigError> {
    let mut rng = rng_for(seed, STREAM_SCENARIO);
    let n = params.n;
    let f = params.f as u64;
    let perfect: Vec<ClockModel> = params.processes().map(ClockModel::perfect).collect();
    let zeros = vec![SimTime::ZERO; n];

    let (byzantine, clocks, starts, delay) = match kind {
        ScenarioKind::Happy => (BTreeMap::new(), perfect, zeros, DelayKind::BoundedUniform),
        ScenarioKind::Equivocate => {
            let byz = BTreeMap::from([(params.leader(1), Strategy::Equivocate)]);
            (byz, perfect, zeros, DelayKind::BoundedUniform)
        }
        ScenarioKind::WorstCase => worst_case(protocol, params, &mut rng)?,
        ScenarioKind::ScenarioS => scenario_s(params)?,
        ScenarioKind::Random => random(params, &mut rng)?,
        ScenarioKind::Custom(c) => {
            let mut clocks = perfect;
            for (p, rate) in &c.rates {
                if p.0 == 0 || p.index() >= n {
                    return Err(ConfigError::Scenario(format!("unknown process {p}")));
                }
                clocks[p.index()] = constant_rate(*p, *rate, params)?;
            }
            let mut starts = zeros;
            for (p, at) in &c.starts {
                if p.0 == 0 || p.index() >= n {
                    return Err(ConfigError::Scenario(format!("unknown process {p}")));
                }
                starts[p.index()] = *at;
            }
            (c.byzantine.clone(), clocks, starts, c.delay)
        }
    };
    let _ = f;
    let proposals = proposals(params, rule, &byzantine, &mut rng);
    let config = ScenarioConfig { params: params.clone(), seed, byzantine, clocks, starts, proposals, delay };
    config.validate()?;
    Ok(config)
}

type Parts = (BTreeMap<ProcessId, Strategy>, Vec<ClockModel>, Vec<SimTime>, DelayKind);

/// Pre-GST drift leaves the correct processes spread over the views of the
/// first epoch, with f+1 of them already done with it, and the f leaders of
/// the first views entered after GST are silent.
fn worst_case(protocol: Protocol, params: &Params, rng: &mut ChaCha8Rng) -> Result<Parts, ConfigError> {
    let f = params.f as u64;
    let gst = params.gst;
    let slack = params.delta * 2;
    if gst <= slack {
        return Err(ConfigError::Scenario(format!("worst_case needs GST > 2δ, got GST = {gst}")));
    }
    let byzantine = if protocol.uses_raresync() {
        silent_leaders(params, f + 2..=2 * f + 1)
    } else {
        silent_leaders(params, 1..=f)
    };
    let mut correct: Vec<ProcessId> = params.processes().filter(|p| !byzantine.contains_key(p)).collect();
    correct.shuffle(rng);
    let mut clocks: Vec<ClockModel> = params.processes().map(ClockModel::perfect).collect();
    if protocol.uses_raresync() {
        let ed = params.epoch_duration().ratio();
        // f+1 processes complete the first epoch with room to spare before GST
        let fast_rate = ceil_sixteenth(ed * Rational::new(6, 5) / (gst - slack).ratio());
        for (i, p) in correct.iter().enumerate() {
            let rate = if i <= params.f {
                fast_rate
            } else {
                let progress = ed * random_sixteenth(rng).min(Rational::new(15, 16));
                progress / gst.ratio()
            };
            clocks[p.index()] = constant_rate(*p, rate, params)?;
        }
    } else {
        let vd = params.view_duration().ratio();
        for p in &correct {
            let progress = vd * random_sixteenth(rng).min(Rational::new(15, 16));
            clocks[p.index()] = constant_rate(*p, progress / gst.ratio(), params)?;
        }
    }
    Ok((byzantine, clocks, vec![SimTime::ZERO; params.n], DelayKind::WorstCase))
}

/// Three groups of sizes f, f, f+1 sit in views 1, 2 and 3 of the first
/// epoch at GST, each 1.2 view durations apart.
fn scenario_s(params: &Params) -> Result<Parts, ConfigError> {
    if params.f < 2 {
        return Err(ConfigError::Scenario("scenario_s needs at least three views per epoch (f >= 2)".into()));
    }
    if !params.gst.is_positive() {
        return Err(ConfigError::Scenario("scenario_s needs GST > 0".into()));
    }
    let vd = params.view_duration().ratio();
    let gst = params.gst.ratio();
    let f = params.f;
    let mut clocks = Vec::with_capacity(params.n);
    for p in params.processes() {
        let position = if p.index() < f {
            Rational::new(3, 10)
        } else if p.index() < 2 * f {
            Rational::new(15, 10)
        } else {
            Rational::new(27, 10)
        };
        clocks.push(constant_rate(p, vd * position / gst, params)?);
    }
    Ok((BTreeMap::new(), clocks, vec![SimTime::ZERO; params.n], DelayKind::UniformCapped))
}

/// Random Byzantine subset and strategies, random piecewise drift in
/// [1/4, 4], random start times in [0, GST].
fn random(params: &Params, rng: &mut ChaCha8Rng) -> Result<Parts, ConfigError> {
    let count = rng.gen_range(0..=params.f);
    let mut ids: Vec<ProcessId> = params.processes().collect();
    ids.shuffle(rng);
    let byzantine: BTreeMap<ProcessId, Strategy> =
        ids[..count].iter().map(|p| (*p, *Strategy::ALL.choose(rng).expect("non-empty"))).collect();
    let gst = params.gst;
    let mut clocks = Vec::with_capacity(params.n);
    let mut starts = Vec::with_capacity(params.n);
    for p in params.processes() {
        let start = gst.scale(Rational::new(rng.gen_range(0..=16), 16));
        starts.push(start);
        if !gst.is_positive() {
            clocks.push(ClockModel::perfect(p));
            continue;
        }
        let pieces = rng.gen_range(1..=3);
        let mut segments = Vec::with_capacity(pieces);
        for i in 0..pieces {
            let from = gst.scale(Rational::new(i as i128, pieces as i128));
            segments.push(RateSegment { start: from, rate: Rational::new(rng.gen_range(2..=32), 8) });
        }
        clocks.push(ClockModel::drifting(p, segments, gst)?);
    }
    Ok((byzantine, clocks, starts, DelayKind::Random))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize) -> Params {
        Params::new(n, SimTime::from_int(1), SimTime::from_int(50)).unwrap()
    }

    #[test]
    fn worst_case_byzantine_lead_first_views_of_second_epoch() {
        for n in [4, 7, 13] {
            let p = params(n);
            let s = build(Protocol::SQuad, &ScenarioKind::WorstCase, &p, 3, ProposalRule::Random).unwrap();
            assert_eq!(s.byzantine.len(), p.f);
            let f = p.f as u64;
            for v in f + 2..=2 * f + 1 {
                assert!(s.byzantine.contains_key(&p.leader(v)));
            }
            // the last view of epoch 2 has a correct leader
            assert!(s.is_correct(p.leader(2 * f + 2)));
        }
    }

    #[test]
    fn worst_case_n4_byzantine_leads_one_view_per_epoch() {
        let p = params(4);
        let s = build(Protocol::RareSyncQuad, &ScenarioKind::WorstCase, &p, 0, ProposalRule::Random).unwrap();
        let byz = *s.byzantine.keys().next().unwrap();
        for epoch in 1..10u64 {
            let led = (1..=p.views_per_epoch()).filter(|i| p.leader(p.global_view(epoch, *i)) == byz).count();
            assert!(led <= 1);
        }
    }

    #[test]
    fn worst_case_drift_splits_first_epoch() {
        let p = params(7);
        let s = build(Protocol::RareSyncQuad, &ScenarioKind::WorstCase, &p, 11, ProposalRule::Random).unwrap();
        let ed = p.epoch_duration();
        let done: Vec<_> = s
            .correct()
            .into_iter()
            .filter(|q| s.clocks[q.index()].local_elapsed(SimTime::ZERO, p.gst - p.delta * 2) > ed)
            .collect();
        assert_eq!(done.len(), p.f + 1);
        for q in s.correct() {
            if !done.contains(&q) {
                assert!(s.clocks[q.index()].local_elapsed(SimTime::ZERO, p.gst) < ed);
            }
        }
    }

    #[test]
    fn scenario_s_groups() {
        let p = params(7);
        let s = build(Protocol::RareSyncQuad, &ScenarioKind::ScenarioS, &p, 0, ProposalRule::Random).unwrap();
        let vd = p.view_duration();
        let view_at_gst: Vec<u64> = p
            .processes()
            .map(|q| {
                let local = s.clocks[q.index()].local_elapsed(SimTime::ZERO, p.gst);
                (local.ratio() / vd.ratio()).to_integer() as u64 + 1
            })
            .collect();
        assert_eq!(view_at_gst, vec![1, 1, 2, 2, 3, 3, 3]);
        assert!(s.byzantine.is_empty());
        assert!(build(Protocol::RareSyncQuad, &ScenarioKind::ScenarioS, &params(4), 0, ProposalRule::Random).is_err());
    }

    #[test]
    fn random_scenarios_respect_fault_bound() {
        let p = params(13);
        for seed in 0..50 {
            let s = build(Protocol::SQuad, &ScenarioKind::Random, &p, seed, ProposalRule::Random).unwrap();
            assert!(s.byzantine.len() <= p.f);
            assert!(s.starts.iter().all(|t| *t <= p.gst));
        }
    }

    #[test]
    fn unanimous_proposals() {
        let p = params(4);
        let s = build(Protocol::SQuad, &ScenarioKind::Equivocate, &p, 0, ProposalRule::Unanimous(9)).unwrap();
        for q in s.correct() {
            assert_eq!(s.proposals[q.index()], 9);
        }
        assert_ne!(s.proposals[p.leader(1).index()], 9);
    }

    #[test]
    fn built_in_policies_cap_pre_gst_delivery() {
        let p = params(4);
        let msgs = [Message::Wish { view: 1 }];
        for kind in [
            DelayKind::Max,
            DelayKind::BoundedUniform,
            DelayKind::UniformCapped,
            DelayKind::HoldUntilGst,
            DelayKind::WorstCase,
            DelayKind::Random,
        ] {
            let mut policy = kind.policy(&p, rng_for(5, 9));
            for step in 0..200 {
                let sent = SimTime::new(step, 3);
                let at = policy.deliver_at(ProcessId(1), ProcessId(2), &msgs[0], sent);
                assert!(at >= sent, "{kind:?}");
                assert!(at <= sent.max(p.gst) + p.delta, "{kind:?}");
                if sent >= p.gst {
                    assert!(at > sent);
                }
            }
        }
    }

    #[test]
    fn too_many_byzantine_rejected() {
        let p = params(4);
        let custom = CustomScenario {
            byzantine: BTreeMap::from([(ProcessId(1), Strategy::Silent), (ProcessId(2), Strategy::Silent)]),
            ..CustomScenario::default()
        };
        let err = build(Protocol::SQuad, &ScenarioKind::Custom(custom), &p, 0, ProposalRule::Random).unwrap_err();
        assert_eq!(err, ConfigError::TooManyByzantine(2, 1));
    }
}
