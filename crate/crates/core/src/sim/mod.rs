//! Discrete-event engine, timers, delay policies and traces.
//!
//! Protocol code never touches the event queue. Each handler receives a
//! [`Ctx`] that collects [`Effect`]s (sends, timer operations and
//! indications), and the engine applies them after the handler returns.

mod delay;
mod engine;
mod timer;
mod trace;

use std::sync::Arc;

pub use delay::{random_sixteenth, BoundedUniform, DelayPolicy, MaxDelay, UniformCapped};
pub use engine::{Envelope, Simulation, StopReason, StopRule};
pub use timer::{TimerHandle, TimerKind};
pub use trace::{Detail, Trace, TraceEvent, TraceKind, WordLedger};

use crate::message::Message;
use crate::{Epoch, Params, ProcessId, SimTime, Value, View};

/// Indications a process reports to the harness. They are recorded in the
/// trace but have no effect on other processes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Note {
    Advance(View),
    /// The process stopped executing `View` without entering a new one.
    Leave(View),
    EnterEpoch(Epoch),
    Decide(Value),
}

#[derive(Clone, Debug)]
pub enum Effect {
    Send { to: ProcessId, msg: Arc<Message> },
    Measure { timer: TimerKind, duration: SimTime },
    Cancel { timer: TimerKind },
    Note(Note),
}

/// Handler context for one process and one event.
pub struct Ctx<'a> {
    me: ProcessId,
    now: SimTime,
    params: &'a Params,
    effects: Vec<Effect>,
}

impl<'a> Ctx<'a> {
    pub fn new(me: ProcessId, now: SimTime, params: &'a Params) -> Self {
        Ctx { me, now, params, effects: Vec::new() }
    }

    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn params(&self) -> &'a Params {
        self.params
    }

    pub fn send(&mut self, to: ProcessId, msg: Message) {
        self.effects.push(Effect::Send { to, msg: Arc::new(msg) });
    }

    /// Sends one copy to every process, including the sender itself.
    pub fn broadcast(&mut self, msg: Message) {
        let msg = Arc::new(msg);
        for to in self.params.processes() {
            self.effects.push(Effect::Send { to, msg: Arc::clone(&msg) });
        }
    }

    pub fn measure(&mut self, timer: TimerKind, duration: SimTime) {
        self.effects.push(Effect::Measure { timer, duration });
    }

    pub fn cancel(&mut self, timer: TimerKind) {
        self.effects.push(Effect::Cancel { timer });
    }

    pub fn note(&mut self, note: Note) {
        self.effects.push(Effect::Note(note));
    }

    pub fn push(&mut self, effect: Effect) {
        self.effects.push(effect);
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn take_effects(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.effects)
    }
}

/// A simulated process. Handlers run in zero global time.
pub trait Node: Send {
    fn start(&mut self, ctx: &mut Ctx<'_>);
    fn on_message(&mut self, from: ProcessId, msg: &Arc<Message>, ctx: &mut Ctx<'_>);
    fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>);
}

/// A process that never does anything.
pub struct Idle;

impl Node for Idle {
    fn start(&mut self, _ctx: &mut Ctx<'_>) {}
    fn on_message(&mut self, _from: ProcessId, _msg: &Arc<Message>, _ctx: &mut Ctx<'_>) {}
    fn on_timer(&mut self, _timer: TimerKind, _ctx: &mut Ctx<'_>) {}
}
