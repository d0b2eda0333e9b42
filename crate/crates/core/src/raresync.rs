//! The RareSync view synchronizer.
//!
//! Views are grouped into epochs of f+1 views. Inside an epoch a process
//! moves from view to view purely on its local timer. Communication happens
//! only at epoch boundaries: after its last view a process broadcasts
//! EPOCH-COMPLETED, and 2f+1 of those form a threshold signature that lets
//! everybody enter the next epoch, after a δ wait during which a fresher
//! epoch may still be learned.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::crypto::{Digest, PartialSignature, SchemeConfig, SigningKey, ThresholdSignature};
use crate::message::Message;
use crate::sim::{Ctx, Note, TimerKind};
use crate::{Epoch, Params, ProcessId, View};

/// What the synchronizer tells the consensus layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncSignal {
    Advance(View),
    /// Stop executing the given view without entering another one.
    Leave(View),
}

pub struct RareSync {
    params: Params,
    scheme: SchemeConfig,
    key: Arc<SigningKey>,
    epoch: Epoch,
    view: u64,
    in_view: bool,
    epoch_sig: Option<ThresholdSignature>,
    completed: BTreeMap<Epoch, BTreeMap<ProcessId, PartialSignature>>,
}

impl RareSync {
    pub fn new(params: &Params, key: Arc<SigningKey>) -> Self {
        RareSync {
            params: params.clone(),
            scheme: SchemeConfig::quorum(params.n, params.f),
            key,
            epoch: 1,
            view: 1,
            in_view: false,
            epoch_sig: None,
            completed: BTreeMap::new(),
        }
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    /// Index of the current view inside its epoch, in `[1, f+1]`.
    pub fn view_index(&self) -> u64 {
        self.view
    }

    pub fn in_view(&self) -> bool {
        self.in_view
    }

    pub fn epoch_sig(&self) -> Option<&ThresholdSignature> {
        self.epoch_sig.as_ref()
    }

    fn current_global_view(&self) -> View {
        self.params.global_view(self.epoch, self.view)
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        ctx.measure(TimerKind::View, self.params.view_duration());
        self.in_view = true;
        ctx.note(Note::EnterEpoch(1));
        ctx.note(Note::Advance(1));
        vec![SyncSignal::Advance(1)]
    }

    pub fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        match timer {
            TimerKind::View => self.on_view_timer(ctx),
            TimerKind::Dissemination => self.on_dissemination_timer(ctx),
            TimerKind::Baseline => Vec::new(),
        }
    }

    fn on_view_timer(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        if self.view < self.params.views_per_epoch() {
            self.view += 1;
            ctx.measure(TimerKind::View, self.params.view_duration());
            let v = self.current_global_view();
            ctx.note(Note::Advance(v));
            vec![SyncSignal::Advance(v)]
        } else {
            let psig = self.scheme.share_sign(&self.key, &Digest::epoch(self.epoch));
            ctx.broadcast(Message::EpochCompleted { epoch: self.epoch, psig });
            self.in_view = false;
            let v = self.current_global_view();
            ctx.note(Note::Leave(v));
            vec![SyncSignal::Leave(v)]
        }
    }

    fn on_dissemination_timer(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        let Some(sig) = self.epoch_sig.clone() else {
            return Vec::new();
        };
        ctx.broadcast(Message::EnterEpoch { epoch: self.epoch, sig });
        self.view = 1;
        self.in_view = true;
        ctx.measure(TimerKind::View, self.params.view_duration());
        let v = self.current_global_view();
        ctx.note(Note::EnterEpoch(self.epoch));
        ctx.note(Note::Advance(v));
        vec![SyncSignal::Advance(v)]
    }

    /// Handles synchronizer messages; anything else is ignored.
    pub fn on_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        match msg {
            Message::EpochCompleted { epoch, psig } => self.on_epoch_completed(from, *epoch, psig, ctx),
            Message::EnterEpoch { epoch, sig } => self.on_enter_epoch(*epoch, sig, ctx),
            _ => {}
        }
        Vec::new()
    }

    fn on_epoch_completed(&mut self, from: ProcessId, epoch: Epoch, psig: &PartialSignature, ctx: &mut Ctx<'_>) {
        if epoch < self.epoch || !self.scheme.share_verify(from, &Digest::epoch(epoch), psig) {
            return;
        }
        let tally = self.completed.entry(epoch).or_default();
        tally.insert(from, psig.clone());
        if tally.len() < self.params.quorum() {
            return;
        }
        let sig = self.scheme.combine(tally.values()).expect("quorum of verified partials combines");
        self.switch_epoch(epoch + 1, sig, ctx);
    }

    fn on_enter_epoch(&mut self, epoch: Epoch, sig: &ThresholdSignature, ctx: &mut Ctx<'_>) {
        if epoch <= self.epoch || !self.scheme.combined_verify(&Digest::epoch(epoch - 1), sig) {
            return;
        }
        self.switch_epoch(epoch, sig.clone(), ctx);
    }

    fn switch_epoch(&mut self, epoch: Epoch, sig: ThresholdSignature, ctx: &mut Ctx<'_>) {
        self.epoch = epoch;
        self.epoch_sig = Some(sig);
        self.completed = self.completed.split_off(&epoch);
        ctx.cancel(TimerKind::View);
        ctx.cancel(TimerKind::Dissemination);
        ctx.measure(TimerKind::Dissemination, self.params.delta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Keyring;
    use crate::sim::Effect;
    use crate::SimTime;

    fn setup(n: usize) -> (Params, Vec<Arc<SigningKey>>) {
        let p = Params::new(n, SimTime::from_int(1), SimTime::ZERO).unwrap();
        let keys = Keyring::issue(n).into_iter().map(Arc::new).collect();
        (p, keys)
    }

    fn count_sends(effects: &[Effect], name: &str) -> usize {
        effects.iter().filter(|e| matches!(e, Effect::Send { msg, .. } if msg.name() == name)).count()
    }

    fn ec(p: &Params, keys: &[Arc<SigningKey>], signer: usize, epoch: Epoch) -> Message {
        let scheme = SchemeConfig::quorum(p.n, p.f);
        Message::EpochCompleted { epoch, psig: scheme.share_sign(&keys[signer], &Digest::epoch(epoch)) }
    }

    #[test]
    fn init_measures_view_duration() {
        let (p, keys) = setup(4);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        assert_eq!(rs.start(&mut ctx), vec![SyncSignal::Advance(1)]);
        assert_eq!((rs.epoch(), rs.view_index()), (1, 1));
        let expected = SimTime::new(1001, 100);
        assert!(ctx.effects().iter().any(|e| matches!(e, Effect::Measure { timer: TimerKind::View, duration } if *duration == expected)));
    }

    #[test]
    fn view_timer_walks_the_epoch() {
        let (p, keys) = setup(7);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        rs.start(&mut ctx);
        assert_eq!(rs.on_timer(TimerKind::View, &mut ctx), vec![SyncSignal::Advance(2)]);
        assert_eq!(rs.on_timer(TimerKind::View, &mut ctx), vec![SyncSignal::Advance(3)]);
        assert_eq!(rs.view_index(), 3);
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        assert_eq!(rs.on_timer(TimerKind::View, &mut ctx), vec![SyncSignal::Leave(3)]);
        assert_eq!(count_sends(ctx.effects(), "EPOCH-COMPLETED"), 7);
        assert!(!rs.in_view());
        assert!(!ctx.effects().iter().any(|e| matches!(e, Effect::Measure { .. })));
    }

    #[test]
    fn quorum_of_epoch_completed_jumps_past_e() {
        let (p, keys) = setup(4);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        for i in 0..2 {
            rs.on_message(ProcessId::from_index(i), &ec(&p, &keys, i, 2), &mut ctx);
        }
        assert_eq!(rs.epoch(), 1);
        rs.on_message(ProcessId(3), &ec(&p, &keys, 2, 2), &mut ctx);
        assert_eq!(rs.epoch(), 3);
        assert!(ctx.effects().iter().any(
            |e| matches!(e, Effect::Measure { timer: TimerKind::Dissemination, duration } if *duration == p.delta)
        ));
    }

    #[test]
    fn stale_and_misattributed_epoch_completed_ignored() {
        let (p, keys) = setup(4);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        for i in 0..3 {
            rs.on_message(ProcessId::from_index(i), &ec(&p, &keys, i, 2), &mut ctx);
        }
        assert_eq!(rs.epoch(), 3);
        for i in 0..3 {
            rs.on_message(ProcessId::from_index(i), &ec(&p, &keys, i, 1), &mut ctx);
        }
        assert_eq!(rs.epoch(), 3);
        // P4 relaying P1's partial does not count as P4's
        let mut fresh = RareSync::new(&p, Arc::clone(&keys[0]));
        for i in 0..3 {
            fresh.on_message(ProcessId(4), &ec(&p, &keys, i, 1), &mut ctx);
        }
        assert_eq!(fresh.epoch(), 1);
    }

    fn epoch_sig(p: &Params, keys: &[Arc<SigningKey>], epoch: Epoch, signers: usize) -> ThresholdSignature {
        let scheme = SchemeConfig::quorum(p.n, p.f);
        let parts: Vec<_> = keys[..signers].iter().map(|k| scheme.share_sign(k, &Digest::epoch(epoch))).collect();
        scheme.combine(&parts).unwrap()
    }

    #[test]
    fn enter_epoch_adoption() {
        let (p, keys) = setup(4);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        let sig4 = epoch_sig(&p, &keys, 4, 3);
        rs.on_message(ProcessId(2), &Message::EnterEpoch { epoch: 5, sig: sig4.clone() }, &mut ctx);
        assert_eq!(rs.epoch(), 5);
        // same epoch again: strict guard
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        rs.on_message(ProcessId(2), &Message::EnterEpoch { epoch: 5, sig: sig4.clone() }, &mut ctx);
        assert!(ctx.effects().is_empty());
        // wrong digest or truncated signer set
        rs.on_message(ProcessId(2), &Message::EnterEpoch { epoch: 9, sig: sig4.clone() }, &mut ctx);
        rs.on_message(ProcessId(2), &Message::EnterEpoch { epoch: 5, sig: epoch_sig(&p, &keys, 7, 3).truncated(2) }, &mut ctx);
        assert_eq!(rs.epoch(), 5);
    }

    #[test]
    fn dissemination_enters_first_view() {
        let (p, keys) = setup(7);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        rs.on_message(ProcessId(2), &Message::EnterEpoch { epoch: 2, sig: epoch_sig(&p, &keys, 1, 5) }, &mut ctx);
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        assert_eq!(rs.on_timer(TimerKind::Dissemination, &mut ctx), vec![SyncSignal::Advance(p.f as u64 + 2)]);
        assert_eq!(count_sends(ctx.effects(), "ENTER-EPOCH"), 7);
    }

    #[test]
    fn epoch_one_never_disseminates() {
        let (p, keys) = setup(4);
        let mut rs = RareSync::new(&p, Arc::clone(&keys[0]));
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        rs.start(&mut ctx);
        let mut ctx = Ctx::new(ProcessId(1), SimTime::ZERO, &p);
        assert!(rs.on_timer(TimerKind::Dissemination, &mut ctx).is_empty());
        assert!(ctx.effects().is_empty());
    }
}
