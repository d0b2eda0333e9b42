//! Process implementations: the honest [`Replica`] that composes a
//! synchronizer, the view core and (for SQuad) the certification phase, and
//! the [`Byzantine`] wrapper that distorts an honest replica's output.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::baselines::{AllToAllSync, DoublingSync};
use crate::cert::CertPhase;
use crate::crypto::{SigningKey, ThresholdSignature};
use crate::message::{CoreKind, Layer, Message};
use crate::raresync::{RareSync, SyncSignal};
use crate::sim::{Ctx, Effect, Node, TimerKind};
use crate::view_core::{QuorumCertificate, ViewCore};
use crate::{Epoch, Params, ProcessId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    RareSyncQuad,
    SQuad,
    AllToAll,
    Doubling,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::RareSyncQuad, Protocol::SQuad, Protocol::AllToAll, Protocol::Doubling];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::RareSyncQuad => "raresync-quad",
            Protocol::SQuad => "squad",
            Protocol::AllToAll => "alltoall",
            Protocol::Doubling => "doubling",
        }
    }

    pub fn uses_raresync(self) -> bool {
        matches!(self, Protocol::RareSyncQuad | Protocol::SQuad)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

enum Synchronizer {
    Rare(RareSync),
    AllToAll(AllToAllSync),
    Doubling(DoublingSync),
}

impl Synchronizer {
    fn start(&mut self, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        match self {
            Synchronizer::Rare(s) => s.start(ctx),
            Synchronizer::AllToAll(s) => s.start(ctx),
            Synchronizer::Doubling(s) => s.start(ctx),
        }
    }

    fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        match self {
            Synchronizer::Rare(s) => s.on_timer(timer, ctx),
            Synchronizer::AllToAll(s) => s.on_timer(timer, ctx),
            Synchronizer::Doubling(s) => s.on_timer(timer, ctx),
        }
    }

    fn on_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) -> Vec<SyncSignal> {
        match self {
            Synchronizer::Rare(s) => s.on_message(from, msg, ctx),
            Synchronizer::AllToAll(s) => s.on_message(from, msg, ctx),
            Synchronizer::Doubling(_) => Vec::new(),
        }
    }
}

/// An honest process.
pub struct Replica {
    params: Params,
    protocol: Protocol,
    key: Arc<SigningKey>,
    sync: Synchronizer,
    cert: Option<CertPhase>,
    core: Option<ViewCore>,
    with_core: bool,
    running: bool,
    /// Synchronizer and core traffic that arrived during certification.
    pending: Vec<(ProcessId, Arc<Message>)>,
}

impl Replica {
    pub fn new(params: &Params, protocol: Protocol, key: SigningKey, proposal: Value) -> Self {
        let key = Arc::new(key);
        let sync = match protocol {
            Protocol::RareSyncQuad | Protocol::SQuad => Synchronizer::Rare(RareSync::new(params, Arc::clone(&key))),
            Protocol::AllToAll => Synchronizer::AllToAll(AllToAllSync::new(params)),
            Protocol::Doubling => Synchronizer::Doubling(DoublingSync::new(params)),
        };
        let cert = (protocol == Protocol::SQuad).then(|| CertPhase::new(params, Arc::clone(&key), proposal));
        let core = (protocol != Protocol::SQuad).then(|| ViewCore::new(params, Arc::clone(&key), proposal));
        Replica {
            params: params.clone(),
            protocol,
            key,
            sync,
            cert,
            core,
            with_core: true,
            running: false,
            pending: Vec::new(),
        }
    }

    /// Runs only the synchronizer, with no consensus on top.
    pub fn synchronizer_only(mut self) -> Self {
        self.with_core = false;
        self.core = None;
        self.cert = None;
        self
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn core(&self) -> Option<&ViewCore> {
        self.core.as_ref()
    }

    pub fn raresync(&self) -> Option<&RareSync> {
        match &self.sync {
            Synchronizer::Rare(s) => Some(s),
            _ => None,
        }
    }

    fn begin(&mut self, ctx: &mut Ctx<'_>) {
        self.running = true;
        let signals = self.sync.start(ctx);
        self.dispatch(signals, ctx);
        for (from, msg) in std::mem::take(&mut self.pending) {
            self.on_running_message(from, &msg, ctx);
        }
    }

    fn dispatch(&mut self, signals: Vec<SyncSignal>, ctx: &mut Ctx<'_>) {
        let Some(core) = self.core.as_mut() else { return };
        for s in signals {
            match s {
                SyncSignal::Advance(v) => core.start_executing(v, ctx),
                SyncSignal::Leave(_) => core.leave(),
            }
        }
    }

    fn on_running_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) {
        match msg.layer() {
            Layer::Sync => {
                let signals = self.sync.on_message(from, msg, ctx);
                self.dispatch(signals, ctx);
            }
            Layer::Core => {
                if let Some(core) = self.core.as_mut() {
                    core.on_message(from, msg, ctx);
                }
            }
            Layer::Cert => {}
        }
    }
}

impl Node for Replica {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        match self.cert.as_mut() {
            Some(cert) => cert.start(ctx),
            None => self.begin(ctx),
        }
    }

    fn on_message(&mut self, from: ProcessId, msg: &Arc<Message>, ctx: &mut Ctx<'_>) {
        if self.running {
            self.on_running_message(from, msg, ctx);
            return;
        }
        if msg.layer() != Layer::Cert {
            self.pending.push((from, Arc::clone(msg)));
            return;
        }
        let Some(cert) = self.cert.as_mut() else { return };
        if let Some(outcome) = cert.on_message(from, msg, ctx) {
            if self.with_core {
                self.core = Some(ViewCore::certified(&self.params, Arc::clone(&self.key), outcome.proposal, outcome.cert));
            }
            self.begin(ctx);
        }
    }

    fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) {
        if self.running {
            let signals = self.sync.on_timer(timer, ctx);
            self.dispatch(signals, ctx);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Never sends anything.
    Silent,
    /// As leader, proposes `v` to the lower half of the processes and `v+1`
    /// to the upper half.
    Equivocate,
    /// Reports the oldest QC it has seen in VIEW-CHANGE, and as leader
    /// proposes its own value with an empty justification.
    ReplayStale,
    /// Behaves honestly but also floods ENTER-EPOCH for far-future epochs
    /// with signatures that cannot verify.
    SpamEnterEpoch,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Silent, Strategy::Equivocate, Strategy::ReplayStale, Strategy::SpamEnterEpoch];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Silent => "silent",
            Strategy::Equivocate => "equivocate",
            Strategy::ReplayStale => "replay_stale",
            Strategy::SpamEnterEpoch => "spam_enter_epoch",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Far-future offset used by the ENTER-EPOCH spammer.
const SPAM_EPOCH_OFFSET: Epoch = 1000;

/// A Byzantine process: an honest replica holding only its own key, whose
/// outgoing traffic is rewritten according to a [`Strategy`].
pub struct Byzantine {
    inner: Replica,
    strategy: Strategy,
    oldest_qc: Option<QuorumCertificate>,
    latest_epoch_sig: Option<(Epoch, ThresholdSignature)>,
    spammed: BTreeSet<Epoch>,
}

impl Byzantine {
    pub fn new(inner: Replica, strategy: Strategy) -> Self {
        Byzantine { inner, strategy, oldest_qc: None, latest_epoch_sig: None, spammed: BTreeSet::new() }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn observe(&mut self, msg: &Message) {
        match msg {
            Message::Core(m) => {
                if let Some(qc) = &m.qc {
                    if self.oldest_qc.as_ref().is_none_or(|o| qc.view < o.view) {
                        self.oldest_qc = Some(qc.clone());
                    }
                }
            }
            Message::EnterEpoch { epoch, sig }
                if self.latest_epoch_sig.as_ref().is_none_or(|(e, _)| epoch > e) => {
                    self.latest_epoch_sig = Some((*epoch, sig.clone()));
                }
            _ => {}
        }
    }

    fn forward(&mut self, effects: Vec<Effect>, ctx: &mut Ctx<'_>) {
        let params = ctx.params();
        let me = ctx.me();
        for effect in effects {
            let Effect::Send { to, msg } = &effect else {
                ctx.push(effect);
                continue;
            };
            match (self.strategy, msg.as_ref()) {
                (Strategy::Equivocate, Message::Core(m)) if m.kind == CoreKind::Prepare && params.leader(m.view) == me => {
                    if to.index() >= params.n / 2 {
                        let mut forked = m.clone();
                        forked.value = m.value.map(|v| v + 1);
                        ctx.send(*to, Message::Core(forked));
                    } else {
                        ctx.push(effect);
                    }
                }
                (Strategy::ReplayStale, Message::Core(m)) if m.kind == CoreKind::ViewChange => {
                    let mut stale = m.clone();
                    if let Some(old) = &self.oldest_qc {
                        stale.qc = Some(old.clone());
                    }
                    ctx.send(*to, Message::Core(stale));
                }
                (Strategy::ReplayStale, Message::Core(m)) if m.kind == CoreKind::Prepare && params.leader(m.view) == me => {
                    let mut own = m.clone();
                    if let Some(core) = self.inner.core() {
                        own.value = Some(core.proposal());
                        own.cert = core.own_cert().cloned();
                    }
                    own.qc = None;
                    ctx.send(*to, Message::Core(own));
                }
                _ => ctx.push(effect),
            }
        }
        if self.strategy == Strategy::SpamEnterEpoch {
            self.spam(ctx);
        }
    }

    fn spam(&mut self, ctx: &mut Ctx<'_>) {
        let Some((epoch, sig)) = self.latest_epoch_sig.clone() else { return };
        if !self.spammed.insert(epoch) {
            return;
        }
        // alternate between a replayed signature under a false claim and a
        // signature with its signer set cut below the threshold
        let forged = if epoch % 2 == 0 { sig } else { sig.truncated(ctx.params().f) };
        ctx.broadcast(Message::EnterEpoch { epoch: epoch + SPAM_EPOCH_OFFSET, sig: forged });
    }

    fn step<F>(&mut self, ctx: &mut Ctx<'_>, body: F)
    where
        F: FnOnce(&mut Replica, &mut Ctx<'_>),
    {
        if self.strategy == Strategy::Silent {
            return;
        }
        let mut inner_ctx = Ctx::new(ctx.me(), ctx.now(), ctx.params());
        body(&mut self.inner, &mut inner_ctx);
        let effects = inner_ctx.take_effects();
        self.forward(effects, ctx);
    }
}

impl Node for Byzantine {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        self.step(ctx, |r, c| r.start(c));
    }

    fn on_message(&mut self, from: ProcessId, msg: &Arc<Message>, ctx: &mut Ctx<'_>) {
        self.observe(msg);
        self.step(ctx, |r, c| r.on_message(from, msg, c));
    }

    fn on_timer(&mut self, timer: TimerKind, ctx: &mut Ctx<'_>) {
        self.step(ctx, |r, c| r.on_timer(timer, c));
    }
}
