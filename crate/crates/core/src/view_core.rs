//! Four-phase, leader-driven view core.
//!
//! On entering a view every process sends its prepareQC to the leader in a
//! VIEW-CHANGE message. The leader picks the highest QC among 2f+1 of them
//! and proposes its value (or its own proposal if all QCs are empty). Three
//! rounds of votes follow, each combined by the leader into a QC: the
//! prepare QC becomes the replicas' prepareQC, the precommit QC becomes
//! their lockedQC, and the commit QC triggers the decision.
//!
//! In certified mode (SQuad) every value travels with a certificate, and
//! values whose certificate does not verify are treated as absent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::cert::{CertSubject, Certificate};
use crate::crypto::{Digest, PartialSignature, SchemeConfig, SigningKey, ThresholdSignature};
use crate::message::{CoreKind, CoreMessage, Message};
use crate::sim::{Ctx, Note};
use crate::{Params, ProcessId, Value, View};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Prepare,
    Precommit,
    Commit,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Prepare => "prepare",
            Phase::Precommit => "precommit",
            Phase::Commit => "commit",
        }
    }

    fn of_vote(kind: CoreKind) -> Option<Phase> {
        match kind {
            CoreKind::PrepareVote => Some(Phase::Prepare),
            CoreKind::PrecommitVote => Some(Phase::Precommit),
            CoreKind::CommitVote => Some(Phase::Commit),
            _ => None,
        }
    }

    fn vote_kind(self) -> CoreKind {
        match self {
            Phase::Prepare => CoreKind::PrepareVote,
            Phase::Precommit => CoreKind::PrecommitVote,
            Phase::Commit => CoreKind::CommitVote,
        }
    }

    /// The leader message that carries a QC of this phase.
    fn next_kind(self) -> CoreKind {
        match self {
            Phase::Prepare => CoreKind::Precommit,
            Phase::Precommit => CoreKind::Commit,
            Phase::Commit => CoreKind::Decide,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuorumCertificate {
    pub phase: Phase,
    pub value: Value,
    pub view: View,
    pub sig: ThresholdSignature,
}

impl QuorumCertificate {
    pub fn digest(&self) -> Digest {
        Digest::vote(self.phase.name(), self.value, self.view)
    }

    pub fn verify(&self, scheme: &SchemeConfig) -> bool {
        scheme.combined_verify(&self.digest(), &self.sig)
    }
}

impl fmt::Display for QuorumCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "qc({},{},{},{})", self.phase.name(), self.value, self.view, self.sig)
    }
}

/// Picks the QC with the highest view. Ties go to the lowest sender, and an
/// empty QC loses to every real one.
pub fn select_high_qc<'a, I>(entries: I) -> Option<(ProcessId, &'a QuorumCertificate)>
where
    I: IntoIterator<Item = (ProcessId, Option<&'a QuorumCertificate>)>,
{
    let mut best: Option<(ProcessId, &QuorumCertificate)> = None;
    for (sender, qc) in entries {
        let Some(qc) = qc else { continue };
        let better = match best {
            None => true,
            Some((s, b)) => qc.view > b.view || (qc.view == b.view && sender < s),
        };
        if better {
            best = Some((sender, qc));
        }
    }
    best
}

/// The replica's voting rule for a PREPARE proposing `value` with
/// justification `qc`.
pub fn safe_to_vote(value: Value, qc: Option<&QuorumCertificate>, locked: Option<&QuorumCertificate>) -> bool {
    let extends = qc.is_none_or(|q| q.value == value);
    let unlocked = match locked {
        None => true,
        Some(l) => l.value == value || qc.is_some_and(|q| q.view > l.view),
    };
    extends && unlocked
}

#[derive(Default)]
struct LeaderRound {
    /// `None` stands for an empty (or uncertified) prepareQC.
    view_changes: BTreeMap<ProcessId, Option<(QuorumCertificate, Option<Certificate>)>>,
    proposed: bool,
    votes: BTreeMap<(Phase, Value), BTreeMap<ProcessId, PartialSignature>>,
    formed: BTreeSet<Phase>,
}

pub struct ViewCore {
    params: Params,
    scheme: SchemeConfig,
    cert_scheme: Option<SchemeConfig>,
    key: Arc<SigningKey>,
    proposal: Value,
    own_cert: Option<Certificate>,
    prepare_qc: Option<QuorumCertificate>,
    locked_qc: Option<QuorumCertificate>,
    view: Option<View>,
    active: bool,
    decided: Option<Value>,
    handled: BTreeSet<CoreKind>,
    round: LeaderRound,
    future: BTreeMap<View, Vec<(ProcessId, CoreMessage)>>,
    certs: BTreeMap<Value, Certificate>,
    any_cert: Option<Certificate>,
}

impl ViewCore {
    /// Plain Quad core.
    pub fn new(params: &Params, key: Arc<SigningKey>, proposal: Value) -> Self {
        ViewCore {
            params: params.clone(),
            scheme: SchemeConfig::quorum(params.n, params.f),
            cert_scheme: None,
            key,
            proposal,
            own_cert: None,
            prepare_qc: None,
            locked_qc: None,
            view: None,
            active: false,
            decided: None,
            handled: BTreeSet::new(),
            round: LeaderRound::default(),
            future: BTreeMap::new(),
            certs: BTreeMap::new(),
            any_cert: None,
        }
    }

    /// Certificate-gated core used by SQuad.
    pub fn certified(params: &Params, key: Arc<SigningKey>, proposal: Value, cert: Certificate) -> Self {
        let mut core = ViewCore::new(params, key, proposal);
        let scheme = SchemeConfig::cert(params.n, params.f);
        core.cert_scheme = Some(scheme);
        core.harvest(&cert);
        core.own_cert = Some(cert);
        core
    }

    pub fn proposal(&self) -> Value {
        self.proposal
    }

    pub fn own_cert(&self) -> Option<&Certificate> {
        self.own_cert.as_ref()
    }

    pub fn prepare_qc(&self) -> Option<&QuorumCertificate> {
        self.prepare_qc.as_ref()
    }

    pub fn locked_qc(&self) -> Option<&QuorumCertificate> {
        self.locked_qc.as_ref()
    }

    pub fn decided(&self) -> Option<Value> {
        self.decided
    }

    pub fn current_view(&self) -> Option<View> {
        self.view
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    fn harvest(&mut self, cert: &Certificate) {
        let Some(scheme) = self.cert_scheme else { return };
        if !cert.is_valid(&scheme) {
            return;
        }
        match cert.subject() {
            CertSubject::Any => {
                self.any_cert.get_or_insert_with(|| cert.clone());
            }
            CertSubject::Value(v) => {
                self.certs.entry(v).or_insert_with(|| cert.clone());
            }
        }
    }

    fn cert_for(&self, value: Value) -> Option<Certificate> {
        self.certs.get(&value).or(self.any_cert.as_ref()).cloned()
    }

    /// In plain mode every value passes; in certified mode `cert` must
    /// verify for `value`.
    fn certified_ok(&self, value: Value, cert: Option<&Certificate>) -> bool {
        match self.cert_scheme {
            None => true,
            Some(scheme) => cert.is_some_and(|c| c.verifies_for(value, &scheme)),
        }
    }

    fn attach(&self, value: Value) -> Option<Certificate> {
        self.cert_scheme.and_then(|_| self.cert_for(value))
    }

    /// Starts view `v`, abandoning the previous one. Ignored unless `v` is
    /// newer than the current view.
    pub fn start_executing(&mut self, v: View, ctx: &mut Ctx<'_>) {
        if self.view.is_some_and(|cur| v <= cur) {
            return;
        }
        self.view = Some(v);
        self.active = true;
        self.handled.clear();
        self.round = LeaderRound::default();
        let mut later = self.future.split_off(&v);
        let ready = later.remove(&v).unwrap_or_default();
        self.future = later;

        let mut vc = CoreMessage::new(CoreKind::ViewChange, v);
        if let Some(qc) = &self.prepare_qc {
            vc.cert = self.attach(qc.value);
            vc.qc = Some(qc.clone());
        }
        ctx.send(self.params.leader(v), Message::Core(vc));

        for (from, m) in ready {
            self.handle(from, m, ctx);
        }
    }

    /// Stops executing the current view without starting another.
    pub fn leave(&mut self) {
        self.active = false;
    }

    pub fn on_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) {
        let Message::Core(m) = msg else { return };
        if let Some(cert) = &m.cert {
            self.harvest(cert);
        }
        match self.view {
            Some(cur) if m.view < cur => {}
            Some(cur) if m.view == cur => {
                if self.active {
                    self.handle(from, m.clone(), ctx);
                }
            }
            _ => self.future.entry(m.view).or_default().push((from, m.clone())),
        }
    }

    fn handle(&mut self, from: ProcessId, m: CoreMessage, ctx: &mut Ctx<'_>) {
        let v = m.view;
        let leader = self.params.leader(v);
        let me = ctx.me();
        match m.kind {
            CoreKind::ViewChange if leader == me => self.on_view_change(from, m, ctx),
            kind @ (CoreKind::PrepareVote | CoreKind::PrecommitVote | CoreKind::CommitVote) if leader == me => {
                let phase = Phase::of_vote(kind).expect("vote kind");
                self.on_vote(from, phase, m, ctx);
            }
            CoreKind::Prepare if from == leader => self.on_prepare(m, ctx),
            CoreKind::Precommit if from == leader => {
                if let Some(qc) = self.phase_qc(&m, Phase::Prepare) {
                    if !self.certified_ok(qc.value, m.cert.as_ref()) || !self.handled.insert(m.kind) {
                        return;
                    }
                    self.vote(Phase::Precommit, qc.value, ctx);
                    self.prepare_qc = Some(qc);
                }
            }
            CoreKind::Commit if from == leader => {
                if let Some(qc) = self.phase_qc(&m, Phase::Precommit) {
                    if !self.handled.insert(m.kind) {
                        return;
                    }
                    self.vote(Phase::Commit, qc.value, ctx);
                    self.locked_qc = Some(qc);
                }
            }
            CoreKind::Decide if from == leader => {
                if let Some(qc) = self.phase_qc(&m, Phase::Commit) {
                    if self.handled.insert(m.kind) && self.decided.is_none() {
                        self.decided = Some(qc.value);
                        ctx.note(Note::Decide(qc.value));
                    }
                }
            }
            _ => {}
        }
    }

    /// The message's QC if it is a verifying QC of `phase` for this view.
    fn phase_qc(&self, m: &CoreMessage, phase: Phase) -> Option<QuorumCertificate> {
        let qc = m.qc.as_ref()?;
        (qc.phase == phase && qc.view == m.view && qc.verify(&self.scheme)).then(|| qc.clone())
    }

    fn vote(&self, phase: Phase, value: Value, ctx: &mut Ctx<'_>) {
        let view = self.view.expect("voting inside a view");
        let mut vote = CoreMessage::new(phase.vote_kind(), view);
        vote.value = Some(value);
        vote.psig = Some(self.scheme.share_sign(&self.key, &Digest::vote(phase.name(), value, view)));
        ctx.send(self.params.leader(view), Message::Core(vote));
    }

    fn on_view_change(&mut self, from: ProcessId, m: CoreMessage, ctx: &mut Ctx<'_>) {
        if self.round.view_changes.contains_key(&from) {
            return;
        }
        let entry = match m.qc {
            None => None,
            Some(qc) => {
                if qc.phase != Phase::Prepare || qc.view >= m.view || !qc.verify(&self.scheme) {
                    return;
                }
                if self.certified_ok(qc.value, m.cert.as_ref()) {
                    Some((qc, m.cert))
                } else {
                    None
                }
            }
        };
        self.round.view_changes.insert(from, entry);
        if self.round.view_changes.len() >= self.params.quorum() && !self.round.proposed {
            self.round.proposed = true;
            self.propose(m.view, ctx);
        }
    }

    fn propose(&mut self, view: View, ctx: &mut Ctx<'_>) {
        let entries = self.round.view_changes.iter().map(|(s, e)| (*s, e.as_ref().map(|(qc, _)| qc)));
        let high = select_high_qc(entries).map(|(s, qc)| (s, qc.clone()));
        let mut msg = CoreMessage::new(CoreKind::Prepare, view);
        match high {
            Some((sender, qc)) => {
                let carried = self.round.view_changes[&sender].as_ref().and_then(|(_, c)| c.clone());
                msg.value = Some(qc.value);
                msg.cert = carried.filter(|_| self.cert_scheme.is_some()).or_else(|| self.attach(qc.value));
                msg.qc = Some(qc);
            }
            None => {
                msg.value = Some(self.proposal);
                msg.cert = self.own_cert.clone();
            }
        }
        ctx.broadcast(Message::Core(msg));
    }

    fn on_prepare(&mut self, m: CoreMessage, ctx: &mut Ctx<'_>) {
        let Some(value) = m.value else { return };
        if let Some(qc) = &m.qc {
            if qc.phase != Phase::Prepare || qc.view >= m.view || !qc.verify(&self.scheme) {
                return;
            }
        }
        if !self.certified_ok(value, m.cert.as_ref()) {
            return;
        }
        if !safe_to_vote(value, m.qc.as_ref(), self.locked_qc.as_ref()) {
            return;
        }
        if self.handled.insert(CoreKind::Prepare) {
            self.vote(Phase::Prepare, value, ctx);
        }
    }

    fn on_vote(&mut self, from: ProcessId, phase: Phase, m: CoreMessage, ctx: &mut Ctx<'_>) {
        let (Some(value), Some(psig)) = (m.value, m.psig) else { return };
        let digest = Digest::vote(phase.name(), value, m.view);
        if !self.scheme.share_verify(from, &digest, &psig) {
            return;
        }
        let tally = self.round.votes.entry((phase, value)).or_default();
        tally.entry(from).or_insert(psig);
        if tally.len() < self.params.quorum() || self.round.formed.contains(&phase) {
            return;
        }
        let sig = self.scheme.combine(tally.values()).expect("quorum of verified votes");
        self.round.formed.insert(phase);
        let qc = QuorumCertificate { phase, value, view: m.view, sig };
        let mut next = CoreMessage::new(phase.next_kind(), m.view);
        if phase == Phase::Prepare {
            next.cert = self.attach(value);
        }
        next.qc = Some(qc);
        ctx.broadcast(Message::Core(next));
    }
}
