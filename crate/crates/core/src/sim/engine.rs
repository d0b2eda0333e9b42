use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use super::{Ctx, DelayPolicy, Detail, Effect, Node, Note, TimerHandle, TimerKind, Trace, TraceEvent, TraceKind, WordLedger};
use crate::error::SimError;
use crate::message::Message;
use crate::{ClockModel, Params, ProcessId, SimTime};

/// A message in flight.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub payload: Arc<Message>,
    pub sent_at: SimTime,
    pub deliver_at: SimTime,
    pub words: u32,
}

impl Envelope {
    /// Checks the network model: no zero-word messages, no delivery before
    /// sending, and a delay in `(0, δ]` for anything sent at or after GST.
    pub fn validate(&self, params: &Params) -> Result<(), SimError> {
        if self.words == 0 {
            return Err(SimError::ZeroWords { from: self.sender, to: self.receiver });
        }
        let illegal = SimError::IllegalDelay { sent_at: self.sent_at, deliver_at: self.deliver_at };
        if self.deliver_at < self.sent_at {
            return Err(illegal);
        }
        if self.sent_at >= params.gst {
            let delay = self.deliver_at - self.sent_at;
            if !delay.is_positive() || delay > params.delta {
                return Err(illegal);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Every correct process decided and the minimum run length elapsed.
    AllDecided,
    /// The next event lay beyond the horizon.
    Horizon,
    /// The queue drained with no decision requirement.
    Quiescent,
}

/// When a run stops. Events strictly after `horizon` are never processed.
/// With `until_decided`, the run also stops at the first event later than
/// `min_end` once all correct processes have decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopRule {
    pub horizon: SimTime,
    pub until_decided: bool,
    pub min_end: SimTime,
}

impl StopRule {
    pub fn horizon(horizon: SimTime) -> Self {
        StopRule { horizon, until_decided: false, min_end: SimTime::ZERO }
    }

    pub fn decided(min_end: SimTime, horizon: SimTime) -> Self {
        StopRule { horizon, until_decided: true, min_end }
    }
}

#[derive(Debug)]
enum Event {
    Deliver { from: ProcessId, msg: Arc<Message> },
    Timer { kind: TimerKind, generation: u64 },
    Start,
}

impl Event {
    /// Same-time order: deliveries, then timer expirations, then starts.
    fn class(&self) -> u8 {
        match self {
            Event::Deliver { .. } => 0,
            Event::Timer { .. } => 1,
            Event::Start => 2,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: SimTime,
    class: u8,
    pid: ProcessId,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (SimTime, u8, ProcessId, u64) {
        (self.time, self.class, self.pid, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// One deterministic simulation instance.
pub struct Simulation {
    params: Params,
    nodes: Vec<Box<dyn Node>>,
    byzantine: BTreeSet<ProcessId>,
    clocks: Vec<ClockModel>,
    starts: Vec<SimTime>,
    delay: Box<dyn DelayPolicy>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    timers: BTreeMap<(ProcessId, TimerKind), TimerHandle>,
    seq: u64,
    events: Vec<TraceEvent>,
    ledgers: Vec<WordLedger>,
    decided: BTreeSet<ProcessId>,
    now: SimTime,
}

impl Simulation {
    /// `nodes`, `clocks` and `starts` are indexed by `ProcessId::index`.
    pub fn new(
        params: Params,
        nodes: Vec<Box<dyn Node>>,
        byzantine: BTreeSet<ProcessId>,
        clocks: Vec<ClockModel>,
        starts: Vec<SimTime>,
        delay: Box<dyn DelayPolicy>,
    ) -> Self {
        assert_eq!(nodes.len(), params.n, "one node per process");
        assert_eq!(clocks.len(), params.n, "one clock per process");
        assert_eq!(starts.len(), params.n, "one start time per process");
        let ledgers = vec![WordLedger::default(); params.n];
        Simulation {
            params,
            nodes,
            byzantine,
            clocks,
            starts,
            delay,
            queue: BinaryHeap::new(),
            timers: BTreeMap::new(),
            seq: 0,
            events: Vec::new(),
            ledgers,
            decided: BTreeSet::new(),
            now: SimTime::ZERO,
        }
    }

    fn schedule(&mut self, time: SimTime, pid: ProcessId, event: Event) {
        self.seq += 1;
        let class = event.class();
        self.queue.push(Reverse(Scheduled { time, class, pid, seq: self.seq, event }));
    }

    fn all_correct_decided(&self) -> bool {
        self.params.processes().filter(|p| !self.byzantine.contains(p)).all(|p| self.decided.contains(&p))
    }

    fn trace(&self, end: SimTime, stop: StopReason) -> Trace {
        Trace {
            events: self.events.clone(),
            byzantine: self.byzantine.clone(),
            end,
            stop,
            ledgers: self.ledgers.clone(),
        }
    }

    pub fn run(mut self, rule: StopRule) -> Result<Trace, SimError> {
        for p in self.params.clone().processes() {
            let at = self.starts[p.index()];
            self.schedule(at, p, Event::Start);
        }
        loop {
            let Some(Reverse(next)) = self.queue.peek() else {
                if rule.until_decided && !self.all_correct_decided() {
                    let trace = self.trace(self.now, StopReason::Quiescent);
                    return Err(SimError::Livelock { at: self.now, trace: Box::new(trace) });
                }
                let end = if rule.until_decided { self.now.max(rule.min_end) } else { rule.horizon };
                return Ok(self.trace(end.min(rule.horizon).max(self.now), StopReason::Quiescent));
            };
            if next.time > rule.horizon {
                return Ok(self.trace(rule.horizon, StopReason::Horizon));
            }
            if rule.until_decided && next.time > rule.min_end && self.all_correct_decided() {
                let end = next.time;
                return Ok(self.trace(end, StopReason::AllDecided));
            }
            let Reverse(item) = self.queue.pop().expect("peeked");
            debug_assert!(item.time >= self.now, "event queue went backwards");
            self.now = item.time;
            self.dispatch(item.pid, item.event)?;
        }
    }

    fn dispatch(&mut self, pid: ProcessId, event: Event) -> Result<(), SimError> {
        let params = self.params.clone();
        let mut ctx = Ctx::new(pid, self.now, &params);
        let node = self.nodes.get_mut(pid.index()).ok_or(SimError::UnknownProcess(pid))?;
        match event {
            Event::Deliver { from, msg } => {
                self.events.push(TraceEvent {
                    time: self.now,
                    process: pid,
                    kind: TraceKind::Deliver,
                    detail: Detail::Message { peer: from, msg: Arc::clone(&msg) },
                    words: msg.words(),
                });
                node.on_message(from, &msg, &mut ctx);
            }
            Event::Timer { kind, generation } => {
                let handle = self.timers.get_mut(&(pid, kind));
                if !handle.is_some_and(|h| h.fire(self.now, generation)) {
                    return Ok(());
                }
                self.events.push(TraceEvent {
                    time: self.now,
                    process: pid,
                    kind: TraceKind::Timer,
                    detail: Detail::Timer(kind),
                    words: 0,
                });
                node.on_timer(kind, &mut ctx);
            }
            Event::Start => node.start(&mut ctx),
        }
        let effects = ctx.take_effects();
        self.apply(pid, effects)
    }

    fn apply(&mut self, pid: ProcessId, effects: Vec<Effect>) -> Result<(), SimError> {
        let byzantine = self.byzantine.contains(&pid);
        for effect in effects {
            match effect {
                Effect::Send { to, msg } => {
                    if to.0 == 0 || to.index() >= self.params.n {
                        return Err(SimError::UnknownProcess(to));
                    }
                    let deliver_at = self.delay.deliver_at(pid, to, &msg, self.now);
                    let env = Envelope {
                        sender: pid,
                        receiver: to,
                        payload: Arc::clone(&msg),
                        sent_at: self.now,
                        deliver_at,
                        words: msg.words(),
                    };
                    env.validate(&self.params)?;
                    self.events.push(TraceEvent {
                        time: self.now,
                        process: pid,
                        kind: if byzantine { TraceKind::Byz } else { TraceKind::Send },
                        detail: Detail::Message { peer: to, msg: Arc::clone(&msg) },
                        words: env.words,
                    });
                    if !byzantine {
                        self.ledgers[pid.index()].record(self.now, env.words);
                    }
                    self.schedule(deliver_at, to, Event::Deliver { from: pid, msg });
                }
                Effect::Measure { timer, duration } => {
                    let clock = &self.clocks[pid.index()];
                    let handle = self.timers.entry((pid, timer)).or_insert_with(|| TimerHandle::new(pid, timer));
                    let (expiry, generation) = handle.measure(clock, self.now, duration)?;
                    self.schedule(expiry, pid, Event::Timer { kind: timer, generation });
                }
                Effect::Cancel { timer } => {
                    if let Some(handle) = self.timers.get_mut(&(pid, timer)) {
                        handle.cancel();
                    }
                }
                Effect::Note(note) => {
                    if byzantine {
                        continue;
                    }
                    let (kind, detail) = match note {
                        Note::Advance(v) => (TraceKind::Advance, Detail::Advance(v)),
                        Note::Leave(v) => (TraceKind::Advance, Detail::Leave(v)),
                        Note::EnterEpoch(e) => (TraceKind::EnterEpoch, Detail::EnterEpoch(e)),
                        Note::Decide(v) => {
                            self.decided.insert(pid);
                            (TraceKind::Decide, Detail::Decide(v))
                        }
                    };
                    self.events.push(TraceEvent { time: self.now, process: pid, kind, detail, words: 0 });
                }
            }
        }
        Ok(())
    }
}
