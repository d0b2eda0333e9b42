//! Comparison synchronizers.

use std::collections::{BTreeMap, BTreeSet};

use crate::message::Message;
use crate::raresync::SyncSignal;
use crate::sim::{Ctx, Note, TimerKind};
use crate::{Params, ProcessId, SimTime, View};

/// Per-view all-to-all synchronizer: after its view timer expires a process
/// broadcasts WISH(v+1), and it moves to v+1 once it has both timed out and
/// collected 2f+1 wishes for v+1.
pub struct AllToAllSync {
    params: Params,
    view: View,
    timed_out: bool,
    wishes: BTreeMap<View, BTreeSet<ProcessId>>,
}

impl AllToAllSync {
    pub fn new(params: &Params) -> Self {
        AllToAllSync { params: params.clone(), view: 0, timed_out: false, wishes: BTreeMap::new() }
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        self.enter(1, ctx)
    }

    fn enter(&mut self, view: View, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        self.view = view;
        self.timed_out = false;
        self.wishes = self.wishes.split_off(&(view + 1));
        ctx.measure(TimerKind::Baseline, self.params.view_duration());
        ctx.note(Note::Advance(view));
        vec![SyncSignal::Advance(view)]
    }

    fn try_advance(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        let next = self.view + 1;
        let ready = self.wishes.get(&next).is_some_and(|w| w.len() >= self.params.quorum());
        if self.timed_out && ready {
            self.enter(next, ctx)
        } else {
            Vec::new()
        }
    }

    pub fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        if timer != TimerKind::Baseline || self.view == 0 {
            return Vec::new();
        }
        self.timed_out = true;
        ctx.broadcast(Message::Wish { view: self.view + 1 });
        self.try_advance(ctx)
    }

    pub fn on_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        let Message::Wish { view } = msg else { return Vec::new() };
        if *view <= self.view {
            return Vec::new();
        }
        self.wishes.entry(*view).or_default().insert(from);
        self.try_advance(ctx)
    }
}

/// View-doubling synchronizer: view v lasts β·2^(v−1) local time and no
/// messages are ever sent.
pub struct DoublingSync {
    view: View,
    duration: SimTime,
}

impl DoublingSync {
    pub fn new(params: &Params) -> Self {
        DoublingSync { view: 0, duration: params.beta }
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn current_duration(&self) -> SimTime {
        self.duration
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        self.view = 1;
        ctx.measure(TimerKind::Baseline, self.duration);
        ctx.note(Note::Advance(1));
        vec![SyncSignal::Advance(1)]
    }

    pub fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        if timer != TimerKind::Baseline {
            return Vec::new();
        }
        self.view += 1;
        self.duration = self.duration * 2;
        ctx.measure(TimerKind::Baseline, self.duration);
        ctx.note(Note::Advance(self.view));
        vec![SyncSignal::Advance(self.view)]
    }
}
