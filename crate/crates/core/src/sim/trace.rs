use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::{StopReason, TimerKind};
use crate::message::Message;
use crate::{Epoch, ProcessId, SimTime, Value, View};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    Send,
    Deliver,
    Timer,
    Advance,
    EnterEpoch,
    Decide,
    /// A send by a Byzantine process.
    Byz,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Send => "send",
            TraceKind::Deliver => "deliver",
            TraceKind::Timer => "timer",
            TraceKind::Advance => "advance",
            TraceKind::EnterEpoch => "enter_epoch",
            TraceKind::Decide => "decide",
            TraceKind::Byz => "byz",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Detail {
    /// `peer` is the receiver for sends and the sender for deliveries.
    Message { peer: ProcessId, msg: Arc<Message> },
    Timer(TimerKind),
    Advance(View),
    Leave(View),
    EnterEpoch(Epoch),
    Decide(Value),
}

impl fmt::Display for Detail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detail::Message { peer, msg } => write!(f, "{peer}:{msg}"),
            Detail::Timer(kind) => write!(f, "{kind}"),
            Detail::Advance(v) => write!(f, "view={v}"),
            Detail::Leave(v) => write!(f, "leave={v}"),
            Detail::EnterEpoch(e) => write!(f, "epoch={e}"),
            Detail::Decide(v) => write!(f, "value={v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub process: ProcessId,
    pub kind: TraceKind,
    pub detail: Detail,
    pub words: u32,
}

impl TraceEvent {
    pub fn message(&self) -> Option<(ProcessId, &Message)> {
        match &self.detail {
            Detail::Message { peer, msg } => Some((*peer, msg)),
            _ => None,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}|{}", self.time, self.process, self.kind.as_str(), self.detail, self.words)
    }
}

/// Words sent by one process, bucketed by send time. Maintained by the
/// engine while applying effects, independently of the event log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordLedger {
    by_time: BTreeMap<SimTime, u64>,
}

impl WordLedger {
    pub fn record(&mut self, at: SimTime, words: u32) {
        *self.by_time.entry(at).or_default() += u64::from(words);
    }

    /// Words sent in the closed interval `[from, to]`.
    pub fn words_between(&self, from: SimTime, to: SimTime) -> u64 {
        if to < from {
            return 0;
        }
        self.by_time.range(from..=to).map(|(_, w)| *w).sum()
    }

    pub fn total(&self) -> u64 {
        self.by_time.values().sum()
    }
}

/// Append-only record of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub byzantine: BTreeSet<ProcessId>,
    /// Global time at which the run stopped.
    pub end: SimTime,
    pub stop: StopReason,
    /// One ledger per process, indexed by `ProcessId::index`.
    pub ledgers: Vec<WordLedger>,
}

impl Trace {
    pub fn is_correct(&self, p: ProcessId) -> bool {
        !self.byzantine.contains(&p)
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.events.iter().map(|e| e.to_string())
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}
