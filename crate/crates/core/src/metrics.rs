//! Post-hoc trace analysis. Computes word counts and decision and
//! synchronization times, then runs the executable invariant suite.
//!
//! Everything here reads an immutable [`Trace`]; nothing feeds back into a
//! run. Quantifiers over processes range over correct processes only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cert::CertSubject;
use crate::crypto::{Digest, SchemeConfig, SchemeKind};
use crate::message::{CoreKind, Layer, Message};
use crate::node::Protocol;
use crate::sim::{Detail, Trace, TraceKind};
use crate::view_core::Phase;
use crate::{Epoch, Params, ProcessId, SimTime, Value, View};

/// What the analyzer needs to know about a run besides its trace.
#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub params: Params,
    pub protocol: Protocol,
    /// Proposal of every process, indexed by `ProcessId::index`.
    pub proposals: Vec<Value>,
    /// False for synchronizer-only runs, which never decide.
    pub consensus: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Invariant {
    MonotoneViews,
    NoJump,
    ViewRange,
    EpochEntryQuorum,
    QuietPeriod,
    TightEntry,
    Overlap,
    EntryBound,
    LatencyBound,
    EpochBudget,
    EpochSpacing,
    FinalEpoch,
    Agreement,
    ConflictingQcs,
    LockSafety,
    ViewBudget,
    DecideOnce,
    CertComputability,
    CertLiveness,
    CertBudget,
    QuadTermination,
    SquadLatency,
    Termination,
    Unforgeability,
    WordCounters,
}

impl Invariant {
    pub const ALL: [Invariant; 25] = [
        Invariant::MonotoneViews,
        Invariant::NoJump,
        Invariant::ViewRange,
        Invariant::EpochEntryQuorum,
        Invariant::QuietPeriod,
        Invariant::TightEntry,
        Invariant::Overlap,
        Invariant::EntryBound,
        Invariant::LatencyBound,
        Invariant::EpochBudget,
        Invariant::EpochSpacing,
        Invariant::FinalEpoch,
        Invariant::Agreement,
        Invariant::ConflictingQcs,
        Invariant::LockSafety,
        Invariant::ViewBudget,
        Invariant::DecideOnce,
        Invariant::CertComputability,
        Invariant::CertLiveness,
        Invariant::CertBudget,
        Invariant::QuadTermination,
        Invariant::SquadLatency,
        Invariant::Termination,
        Invariant::Unforgeability,
        Invariant::WordCounters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::MonotoneViews => "monotone-views",
            Invariant::NoJump => "no-jump",
            Invariant::ViewRange => "view-range",
            Invariant::EpochEntryQuorum => "epoch-entry-quorum",
            Invariant::QuietPeriod => "quiet-period",
            Invariant::TightEntry => "tight-entry",
            Invariant::Overlap => "overlap",
            Invariant::EntryBound => "entry-bound",
            Invariant::LatencyBound => "latency-bound",
            Invariant::EpochBudget => "epoch-budget",
            Invariant::EpochSpacing => "epoch-spacing",
            Invariant::FinalEpoch => "final-epoch",
            Invariant::Agreement => "agreement",
            Invariant::ConflictingQcs => "conflicting-qcs",
            Invariant::LockSafety => "lock-safety",
            Invariant::ViewBudget => "view-budget",
            Invariant::DecideOnce => "decide-once",
            Invariant::CertComputability => "cert-computability",
            Invariant::CertLiveness => "cert-liveness",
            Invariant::CertBudget => "cert-budget",
            Invariant::QuadTermination => "quad-termination",
            Invariant::SquadLatency => "squad-latency",
            Invariant::Termination => "termination",
            Invariant::Unforgeability => "unforgeability",
            Invariant::WordCounters => "word-counters",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub invariant: Invariant,
    pub process: Option<ProcessId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.process {
            Some(p) => write!(f, "{} at {}: {}", self.invariant, p, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

/// Half-open residence of one process in one view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ViewInterval {
    pub view: View,
    pub from: SimTime,
    pub to: SimTime,
}

/// Per-process facts extracted from a trace in one pass.
#[derive(Clone, Debug, Default)]
pub struct Timeline {
    pub advances: Vec<(SimTime, View)>,
    pub intervals: Vec<ViewInterval>,
    pub epochs: Vec<(SimTime, Epoch)>,
    pub decisions: Vec<(SimTime, Value)>,
}

/// Builds a timeline for every correct process.
pub fn timelines(trace: &Trace) -> BTreeMap<ProcessId, Timeline> {
    let mut out: BTreeMap<ProcessId, Timeline> = BTreeMap::new();
    let mut open: BTreeMap<ProcessId, (View, SimTime)> = BTreeMap::new();
    for e in &trace.events {
        if !trace.is_correct(e.process) {
            continue;
        }
        let tl = out.entry(e.process).or_default();
        match e.detail {
            Detail::Advance(v) => {
                if let Some((view, from)) = open.insert(e.process, (v, e.time)) {
                    tl.intervals.push(ViewInterval { view, from, to: e.time });
                }
                tl.advances.push((e.time, v));
            }
            Detail::Leave(_) => {
                if let Some((view, from)) = open.remove(&e.process) {
                    tl.intervals.push(ViewInterval { view, from, to: e.time });
                }
            }
            Detail::EnterEpoch(ep) => tl.epochs.push((e.time, ep)),
            Detail::Decide(v) => tl.decisions.push((e.time, v)),
            _ => {}
        }
    }
    for (p, (view, from)) in open {
        out.entry(p).or_default().intervals.push(ViewInterval { view, from, to: trace.end.max(from) });
    }
    out
}

fn correct_processes(trace: &Trace, params: &Params) -> Vec<ProcessId> {
    params.processes().filter(|p| trace.is_correct(*p)).collect()
}

/// Words sent by correct processes in `[gst, t_d]`. A run that decided
/// before GST has no post-GST cost.
pub fn count_words(trace: &Trace, gst: SimTime, t_d: SimTime) -> u64 {
    trace
        .events
        .iter()
        .filter(|e| e.kind == TraceKind::Send && trace.is_correct(e.process))
        .filter(|e| e.time >= gst && e.time <= t_d)
        .map(|e| u64::from(e.words))
        .sum()
}

/// Words of one layer sent by correct processes in `[from, to]`.
pub fn count_layer_words(trace: &Trace, layer: Layer, from: SimTime, to: SimTime) -> u64 {
    trace
        .events
        .iter()
        .filter(|e| e.kind == TraceKind::Send && trace.is_correct(e.process))
        .filter(|e| e.time >= from && e.time <= to)
        .filter(|e| e.message().is_some_and(|(_, m)| m.layer() == layer))
        .map(|e| u64::from(e.words))
        .sum()
}

/// Time by which every correct process has decided, if they all did.
pub fn decision_time(trace: &Trace, params: &Params) -> Option<SimTime> {
    let tls = timelines(trace);
    correct_processes(trace, params)
        .iter()
        .map(|p| tls.get(p).and_then(|tl| tl.decisions.first().map(|(t, _)| *t)))
        .try_fold(SimTime::ZERO, |acc, t| t.map(|t| acc.max(t)))
}

/// Intersection of per-process residence in `view`, as disjoint intervals.
fn co_residence(tls: &BTreeMap<ProcessId, Timeline>, correct: &[ProcessId], view: View) -> Vec<(SimTime, SimTime)> {
    let mut common: Option<Vec<(SimTime, SimTime)>> = None;
    for p in correct {
        let mine: Vec<(SimTime, SimTime)> = tls
            .get(p)
            .map(|tl| tl.intervals.iter().filter(|i| i.view == view).map(|i| (i.from, i.to)).collect())
            .unwrap_or_default();
        common = Some(match common {
            None => mine,
            Some(acc) => {
                let mut next = Vec::new();
                for (a0, a1) in &acc {
                    for (b0, b1) in &mine {
                        let lo = (*a0).max(*b0);
                        let hi = (*a1).min(*b1);
                        if lo <= hi {
                            next.push((lo, hi));
                        }
                    }
                }
                next
            }
        });
    }
    common.unwrap_or_default()
}

/// Earliest `t ≥ GST` such that all correct processes are in one view with
/// a correct leader throughout `[t, t + window]`.
pub fn find_sync_time(trace: &Trace, params: &Params, window: SimTime) -> Option<SimTime> {
    find_sync_view(trace, params, window, |_| true).map(|(t, _)| t)
}

/// Like [`find_sync_time`], restricted to views accepted by `filter`, and
/// also returning the view in which synchronization happens.
pub fn find_sync_view(
    trace: &Trace,
    params: &Params,
    window: SimTime,
    filter: impl Fn(View) -> bool,
) -> Option<(SimTime, View)> {
    let tls = timelines(trace);
    sync_view_in(&tls, &correct_processes(trace, params), params, window, filter)
}

fn sync_view_in(
    tls: &BTreeMap<ProcessId, Timeline>,
    correct: &[ProcessId],
    params: &Params,
    window: SimTime,
    filter: impl Fn(View) -> bool,
) -> Option<(SimTime, View)> {
    let views: BTreeSet<View> = tls.values().flat_map(|tl| tl.intervals.iter().map(|i| i.view)).collect();
    let mut best: Option<(SimTime, View)> = None;
    for v in views {
        if !filter(v) || !correct.contains(&params.leader(v)) {
            continue;
        }
        for (lo, hi) in co_residence(tls, correct, v) {
            let t = lo.max(params.gst);
            if t + window <= hi && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, v));
            }
        }
    }
    best
}

/// Epoch structure of a RareSync trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochFacts {
    /// GST, or the latest time a correct process started its synchronizer
    /// if that is later.
    pub gst_prime: SimTime,
    pub e_max: Epoch,
    pub e_final: Option<Epoch>,
    pub t_e_final: Option<SimTime>,
}

pub fn epoch_facts(trace: &Trace, params: &Params) -> EpochFacts {
    let tls = timelines(trace);
    epoch_facts_from(&tls, &correct_processes(trace, params), params)
}

fn epoch_facts_from(tls: &BTreeMap<ProcessId, Timeline>, correct: &[ProcessId], params: &Params) -> EpochFacts {
    let gst_prime = correct
        .iter()
        .filter_map(|p| tls.get(p).and_then(|tl| tl.advances.first().map(|(t, _)| *t)))
        .fold(params.gst, SimTime::max);
    let mut first_entry: BTreeMap<Epoch, SimTime> = BTreeMap::new();
    for p in correct {
        for (t, e) in tls.get(p).map(|tl| tl.epochs.as_slice()).unwrap_or_default() {
            let slot = first_entry.entry(*e).or_insert(*t);
            *slot = (*slot).min(*t);
        }
    }
    let e_max = first_entry.iter().filter(|(_, t)| **t < gst_prime).map(|(e, _)| *e).max().unwrap_or(0);
    let last = first_entry.iter().find(|(_, t)| **t >= gst_prime).map(|(e, t)| (*e, *t));
    EpochFacts { gst_prime, e_max, e_final: last.map(|(e, _)| e), t_e_final: last.map(|(_, t)| t) }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsReport {
    pub words_post_gst: u64,
    /// Synchronizer words from correct processes in `[GST, t_s + Δ]`.
    pub words_sync_window: u64,
    pub t_s: Option<SimTime>,
    pub t_d: Option<SimTime>,
    /// `max(0, t_d − GST)`; `None` when some correct process never decided.
    pub latency: Option<SimTime>,
    pub epochs_entered: BTreeMap<ProcessId, usize>,
    pub epochs_max: usize,
    pub epochs: Option<EpochFacts>,
    pub decided_value: Option<Value>,
    pub violations: Vec<Violation>,
}

impl MetricsReport {
    pub fn decided(&self) -> bool {
        self.t_d.is_some()
    }
}

/// Computes every metric and runs the invariant suite.
pub fn analyze(trace: &Trace, cfg: &AnalysisConfig) -> MetricsReport {
    let params = &cfg.params;
    let tls = timelines(trace);
    let correct = correct_processes(trace, params);
    let t_d = if cfg.consensus { decision_time(trace, params) } else { None };
    let t_s = sync_view_in(&tls, &correct, params, params.big_delta(), |_| true).map(|(t, _)| t);
    let words_post_gst = count_words(trace, params.gst, t_d.unwrap_or(trace.end));
    let sync_end = t_s.map_or(trace.end, |t| t + params.big_delta());
    let words_sync_window = count_layer_words(trace, Layer::Sync, params.gst, sync_end);
    let epochs = cfg.protocol.uses_raresync().then(|| epoch_facts_from(&tls, &correct, params));
    let window_start = epochs.as_ref().map_or(params.gst, |e| e.gst_prime);
    let epochs_entered: BTreeMap<ProcessId, usize> = correct
        .iter()
        .map(|p| {
            let count = tls.get(p).map_or(0, |tl| {
                tl.epochs.iter().filter(|(t, _)| *t >= window_start && *t <= sync_end).count()
            });
            (*p, count)
        })
        .collect();
    let epochs_max = epochs_entered.values().copied().max().unwrap_or(0);
    let decided_value = tls.values().find_map(|tl| tl.decisions.first().map(|(_, v)| *v));
    let mut report = MetricsReport {
        words_post_gst,
        words_sync_window,
        t_s,
        t_d,
        latency: t_d.map(|t| (t - params.gst).max(SimTime::ZERO)),
        epochs_entered,
        epochs_max,
        epochs,
        decided_value,
        violations: Vec::new(),
    };
    report.violations = check(trace, cfg, &tls, &correct, &report);
    report
}

/// Runs the invariant suite and returns every violation found.
pub fn check_invariants(trace: &Trace, cfg: &AnalysisConfig) -> Vec<Violation> {
    analyze(trace, cfg).violations
}

struct Checker<'a> {
    trace: &'a Trace,
    cfg: &'a AnalysisConfig,
    params: &'a Params,
    tls: &'a BTreeMap<ProcessId, Timeline>,
    correct: &'a [ProcessId],
    report: &'a MetricsReport,
    out: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn flag(&mut self, invariant: Invariant, process: Option<ProcessId>, detail: String) {
        self.out.push(Violation { invariant, process, detail });
    }

    fn timeline(&self, p: ProcessId) -> &Timeline {
        static EMPTY: Timeline =
            Timeline { advances: Vec::new(), intervals: Vec::new(), epochs: Vec::new(), decisions: Vec::new() };
        self.tls.get(&p).unwrap_or(&EMPTY)
    }

    /// Sends by correct processes, with their messages.
    fn correct_sends(&self) -> impl Iterator<Item = (SimTime, ProcessId, &'a Message)> + 'a {
        let trace = self.trace;
        trace.events.iter().filter(move |e| e.kind == TraceKind::Send && trace.is_correct(e.process)).filter_map(
            |e| e.message().map(|(_, m)| (e.time, e.process, m)),
        )
    }

    /// Every send, by anyone.
    fn all_sends(&self) -> impl Iterator<Item = (SimTime, ProcessId, &'a Message)> + 'a {
        self.trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, TraceKind::Send | TraceKind::Byz))
            .filter_map(|e| e.message().map(|(_, m)| (e.time, e.process, m)))
    }

    fn views(&mut self) {
        let rare = self.cfg.protocol.uses_raresync();
        for &p in self.correct {
            let tl = self.timeline(p).clone();
            let mut prev: Option<View> = None;
            let mut epoch: Option<Epoch> = None;
            let mut epochs = tl.epochs.iter().peekable();
            for (t, v) in &tl.advances {
                while let Some((te, e)) = epochs.peek() {
                    if te <= t {
                        epoch = Some(*e);
                        epochs.next();
                    } else {
                        break;
                    }
                }
                if let Some(u) = prev {
                    if *v <= u {
                        self.flag(Invariant::MonotoneViews, Some(p), format!("advance({v}) after advance({u}) at {t}"));
                    }
                }
                let first_in_epoch = if rare { *v == self.params.first_view(self.params.epoch_of(*v)) } else { *v == 1 };
                if !first_in_epoch && prev != Some(v - 1) {
                    self.flag(Invariant::NoJump, Some(p), format!("advance({v}) not preceded by advance({})", v - 1));
                }
                if rare && epoch != Some(self.params.epoch_of(*v)) {
                    self.flag(
                        Invariant::ViewRange,
                        Some(p),
                        format!("advance({v}) at {t} outside current epoch {epoch:?}"),
                    );
                }
                prev = Some(*v);
            }
        }
    }

    fn epochs(&mut self) {
        let params = self.params;
        let f = params.f;
        let Some(facts) = self.report.epochs.clone() else { return };
        let ed = params.epoch_duration();
        // entry quorum
        for &p in self.correct {
            for (t, e) in self.timeline(p).epochs.clone() {
                if e <= 1 {
                    continue;
                }
                let before = self
                    .correct
                    .iter()
                    .filter(|q| self.timeline(**q).epochs.iter().any(|(tq, eq)| *eq == e - 1 && *tq <= t))
                    .count();
                if before < f + 1 {
                    self.flag(
                        Invariant::EpochEntryQuorum,
                        Some(p),
                        format!("entered epoch {e} at {t} with only {before} correct in epoch {}", e - 1),
                    );
                }
            }
        }
        // spacing
        for &p in self.correct {
            let post: Vec<SimTime> =
                self.timeline(p).epochs.iter().map(|(t, _)| *t).filter(|t| *t >= params.gst).collect();
            for w in post.windows(2) {
                if w[1] - w[0] < params.delta {
                    self.flag(Invariant::EpochSpacing, Some(p), format!("epoch entries at {} and {}", w[0], w[1]));
                }
            }
        }
        // budget
        if let Some((p, count)) = self.report.epochs_entered.iter().find(|(_, c)| **c > 4) {
            self.flag(Invariant::EpochBudget, Some(*p), format!("{count} epochs entered before t_s + Δ"));
        }
        let (Some(e_final), Some(t_ef)) = (facts.e_final, facts.t_e_final) else {
            self.flag(Invariant::FinalEpoch, None, "no epoch entered after GST".into());
            return;
        };
        if e_final != facts.e_max + 1 {
            self.flag(Invariant::FinalEpoch, None, format!("e_final = {e_final}, e_max = {}", facts.e_max));
        }
        if t_ef > facts.gst_prime + ed + params.delta * 4 {
            self.flag(Invariant::EntryBound, None, format!("epoch {e_final} first entered at {t_ef}"));
        }
        // quiet period
        let quiet_until = t_ef + ed;
        let early: Vec<(SimTime, ProcessId, Epoch)> = self
            .correct_sends()
            .filter_map(|(t, p, m)| match m {
                Message::EpochCompleted { epoch, .. } if *epoch >= e_final && t < quiet_until => Some((t, p, *epoch)),
                _ => None,
            })
            .collect();
        if let Some((t, p, e)) = early.first() {
            self.flag(Invariant::QuietPeriod, Some(*p), format!("EPOCH-COMPLETED({e}) at {t} before {quiet_until}"));
        }
        // tight entry
        for &p in self.correct {
            let entry = self.timeline(p).epochs.iter().find(|(_, e)| *e == e_final).map(|(t, _)| *t);
            match entry {
                Some(t) if t <= t_ef + params.delta * 2 => {}
                other => self.flag(
                    Invariant::TightEntry,
                    Some(p),
                    format!("entered epoch {e_final} at {other:?}, first entry {t_ef}"),
                ),
            }
        }
        // overlap in every view of e_final
        for i in 1..=params.views_per_epoch() {
            let v = params.global_view(e_final, i);
            let longest = co_residence(self.tls, self.correct, v).iter().map(|(a, b)| *b - *a).max();
            if longest.is_none_or(|l| l < params.big_delta()) {
                self.flag(Invariant::Overlap, None, format!("view {v} co-residence {longest:?}"));
            }
        }
        match self.report.t_s {
            Some(t_s) if t_s + params.big_delta() - facts.gst_prime <= ed * 2 + params.delta * 4 => {}
            other => self.flag(Invariant::LatencyBound, None, format!("t_s = {other:?}, GST' = {}", facts.gst_prime)),
        }
    }

    fn safety(&mut self) {
        let params = self.params;
        // agreement and decide-once
        let mut values = BTreeSet::new();
        for &p in self.correct {
            let decisions = self.timeline(p).decisions.clone();
            if decisions.len() > 1 {
                self.flag(Invariant::DecideOnce, Some(p), format!("{} decide events", decisions.len()));
            }
            values.extend(decisions.iter().map(|(_, v)| *v));
        }
        if values.len() > 1 {
            self.flag(Invariant::Agreement, None, format!("decided values {values:?}"));
        }
        // verifying QCs anywhere in the trace
        let scheme = SchemeConfig::quorum(params.n, params.f);
        let mut qcs: BTreeMap<(Phase, View), BTreeSet<Value>> = BTreeMap::new();
        for (_, _, m) in self.all_sends() {
            if let Message::Core(c) = m {
                if let Some(qc) = c.qc.as_ref().filter(|q| q.verify(&scheme)) {
                    qcs.entry((qc.phase, qc.view)).or_default().insert(qc.value);
                }
            }
        }
        for ((phase, view), vals) in &qcs {
            if vals.len() > 1 {
                self.flag(Invariant::ConflictingQcs, None, format!("{} QCs for view {view}: {vals:?}", phase.name()));
            }
        }
        // locks: a correct COMMIT-VOTE for (value, view) means the voter
        // locked that precommit QC
        let mut lockers: BTreeMap<(View, Value), BTreeSet<ProcessId>> = BTreeMap::new();
        let mut per_view: BTreeMap<(ProcessId, View), usize> = BTreeMap::new();
        for (_, p, m) in self.correct_sends() {
            let Message::Core(c) = m else { continue };
            *per_view.entry((p, c.view)).or_default() += 1;
            if c.kind == CoreKind::CommitVote {
                if let Some(v) = c.value {
                    lockers.entry((c.view, v)).or_default().insert(p);
                }
            }
        }
        for ((w, v), who) in &lockers {
            if who.len() < params.f + 1 {
                continue;
            }
            let bad = qcs
                .range((Phase::Prepare, w + 1)..(Phase::Prepare, View::MAX))
                .find(|(_, vals)| vals.iter().any(|x| x != v));
            if let Some(((_, view), vals)) = bad {
                self.flag(
                    Invariant::LockSafety,
                    None,
                    format!("lock on {v} at view {w}, later prepare QC at view {view} for {vals:?}"),
                );
            }
        }
        let n = params.n;
        for ((p, view), count) in per_view {
            let cap = if params.leader(view) == p { 4 * n + 4 } else { 4 };
            if count > cap {
                self.flag(Invariant::ViewBudget, Some(p), format!("{count} core messages in view {view}, cap {cap}"));
            }
        }
    }

    fn certification(&mut self) {
        let params = self.params;
        let scheme = SchemeConfig::cert(params.n, params.f);
        let proposals: BTreeSet<Value> = self.correct.iter().map(|p| self.cfg.proposals[p.index()]).collect();
        if proposals.len() == 1 {
            let v = *proposals.iter().next().expect("one value");
            for (t, p, m) in self.all_sends() {
                let certs: Vec<_> = match m {
                    Message::Certificate { cert, .. } => vec![cert],
                    Message::Core(c) => c.cert.iter().collect(),
                    _ => Vec::new(),
                };
                for cert in certs.into_iter().filter(|c| c.is_valid(&scheme)) {
                    if cert.subject() != CertSubject::Value(v) {
                        self.flag(
                            Invariant::CertComputability,
                            Some(p),
                            format!("{} sent at {t} under unanimous {v}", cert.subject()),
                        );
                        return;
                    }
                }
            }
        }
        let deadline = params.gst + params.delta * 2;
        let mut sent: BTreeMap<ProcessId, usize> = BTreeMap::new();
        let mut exits: BTreeMap<ProcessId, SimTime> = BTreeMap::new();
        for (t, p, m) in self.correct_sends() {
            if m.layer() != Layer::Cert {
                continue;
            }
            *sent.entry(p).or_default() += 1;
            if let Message::Certificate { cert, .. } = m {
                if cert.is_valid(&scheme) {
                    exits.entry(p).or_insert(t);
                }
            }
        }
        for &p in self.correct {
            match exits.get(&p) {
                Some(t) if *t <= deadline => {}
                other => self.flag(Invariant::CertLiveness, Some(p), format!("exited at {other:?}, deadline {deadline}")),
            }
            let count = sent.get(&p).copied().unwrap_or(0);
            if count > 3 * params.n {
                self.flag(Invariant::CertBudget, Some(p), format!("{count} certification messages"));
            }
        }
    }

    fn liveness(&mut self) {
        let params = self.params;
        let Some(t_d) = self.report.t_d else {
            self.flag(Invariant::Termination, None, format!("not all correct processes decided by {}", self.trace.end));
            return;
        };
        if !self.cfg.protocol.uses_raresync() {
            return;
        }
        match self.report.t_s {
            Some(t_s) if t_d <= t_s + params.delta * 8 => {}
            other => self.flag(Invariant::QuadTermination, None, format!("t_d = {t_d}, t_s = {other:?}")),
        }
        if self.cfg.protocol == Protocol::SQuad {
            let bound = params.epoch_duration() * 2 + params.delta * 6;
            if t_d - params.gst > bound {
                self.flag(Invariant::SquadLatency, None, format!("t_d − GST = {} > {bound}", t_d - params.gst));
            }
        }
    }

    /// Every correct signer of a combined signature must have sent a
    /// matching partial signature no later than the combined one appears.
    fn unforgeability(&mut self) {
        let mut first_psig: BTreeMap<(SchemeKind, Digest, ProcessId), SimTime> = BTreeMap::new();
        for (t, p, m) in self.all_sends() {
            if let Some(ps) = m.partial_signature() {
                if ps.signer() == p {
                    first_psig.entry((ps.scheme(), ps.digest().clone(), p)).or_insert(t);
                }
            }
        }
        let mut flagged = BTreeSet::new();
        for (t, _, m) in self.all_sends() {
            for sig in m.threshold_signatures() {
                for s in sig.signers() {
                    if !self.trace.is_correct(*s) {
                        continue;
                    }
                    let ok = first_psig.get(&(sig.scheme(), sig.digest().clone(), *s)).is_some_and(|t0| *t0 <= t);
                    if !ok && flagged.insert((sig.digest().clone(), *s)) {
                        self.flag(Invariant::Unforgeability, Some(*s), format!("{sig} at {t} without a share"));
                    }
                }
            }
        }
    }

    fn word_counters(&mut self) {
        let to = self.report.t_d.unwrap_or(self.trace.end);
        let from = self.params.gst;
        let ledger: u64 = self.correct.iter().map(|p| self.trace.ledgers[p.index()].words_between(from, to)).sum();
        let counted = count_words(self.trace, from, to);
        if ledger != counted {
            self.flag(Invariant::WordCounters, None, format!("ledger {ledger} vs event count {counted}"));
        }
    }
}

fn check(
    trace: &Trace,
    cfg: &AnalysisConfig,
    tls: &BTreeMap<ProcessId, Timeline>,
    correct: &[ProcessId],
    report: &MetricsReport,
) -> Vec<Violation> {
    let mut c = Checker { trace, cfg, params: &cfg.params, tls, correct, report, out: Vec::new() };
    c.views();
    c.epochs();
    c.unforgeability();
    c.word_counters();
    if cfg.consensus {
        c.safety();
        if cfg.protocol == Protocol::SQuad {
            c.certification();
        }
        c.liveness();
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{StopReason, TraceEvent, WordLedger};
    use std::sync::Arc;

    fn params() -> Params {
        Params::new(4, SimTime::from_int(1), SimTime::from_int(50)).unwrap()
    }

    fn note(time: SimTime, p: u32, detail: Detail) -> TraceEvent {
        let kind = match detail {
            Detail::EnterEpoch(_) => TraceKind::EnterEpoch,
            Detail::Decide(_) => TraceKind::Decide,
            _ => TraceKind::Advance,
        };
        TraceEvent { time, process: ProcessId(p), kind, detail, words: 0 }
    }

    fn trace(events: Vec<TraceEvent>, end: i128) -> Trace {
        Trace {
            events,
            byzantine: BTreeSet::new(),
            end: SimTime::from_int(end),
            stop: StopReason::Horizon,
            ledgers: vec![WordLedger::default(); 4],
        }
    }

    fn send(time: i128, p: u32) -> TraceEvent {
        TraceEvent {
            time: SimTime::from_int(time),
            process: ProcessId(p),
            kind: TraceKind::Send,
            detail: Detail::Message { peer: ProcessId(1), msg: Arc::new(Message::Wish { view: 1 }) },
            words: 1,
        }
    }

    #[test]
    fn count_words_window() {
        let mut t = trace(vec![send(10, 1), send(60, 1), send(61, 2), send(62, 3), send(90, 1)], 100);
        assert_eq!(count_words(&t, SimTime::from_int(50), SimTime::from_int(70)), 3);
        assert_eq!(count_words(&t, SimTime::from_int(50), SimTime::from_int(40)), 0);
        t.byzantine.insert(ProcessId(2));
        assert_eq!(count_words(&t, SimTime::from_int(50), SimTime::from_int(70)), 2);
    }

    #[test]
    fn sync_time_interval_intersection() {
        let p = params();
        // view 9 has leader P2
        let starts = [SimTime::from_int(100), SimTime::from_int(101), SimTime::new(203, 2), SimTime::from_int(100)];
        let events = starts.iter().enumerate().map(|(i, t)| note(*t, i as u32 + 1, Detail::Advance(9))).collect();
        let t = trace(events, 112);
        assert_eq!(find_sync_time(&t, &p, SimTime::from_int(8)), Some(SimTime::new(203, 2)));
        // window of 11 does not fit before everyone leaves at 112
        assert_eq!(find_sync_time(&t, &p, SimTime::from_int(11)), None);
    }

    #[test]
    fn sync_time_skips_byzantine_leader() {
        let p = params();
        let events = (1..=4).map(|i| note(SimTime::from_int(60), i, Detail::Advance(9))).collect();
        let mut t = trace(events, 200);
        assert!(find_sync_time(&t, &p, SimTime::from_int(8)).is_some());
        t.byzantine.insert(ProcessId(2));
        t.events.retain(|e| e.process != ProcessId(2));
        assert_eq!(find_sync_time(&t, &p, SimTime::from_int(8)), None);
    }

    #[test]
    fn sync_time_not_before_gst() {
        let p = params();
        let events = (1..=4).map(|i| note(SimTime::from_int(10), i, Detail::Advance(1))).collect();
        let t = trace(events, 200);
        assert_eq!(find_sync_time(&t, &p, SimTime::from_int(8)), Some(p.gst));
    }

    #[test]
    fn monotonicity_violation_detected() {
        let p = params();
        let mut events = Vec::new();
        for i in 1..=4 {
            events.push(note(SimTime::ZERO, i, Detail::Advance(1)));
        }
        events.push(note(SimTime::from_int(5), 1, Detail::Advance(5)));
        events.push(note(SimTime::from_int(6), 1, Detail::Advance(3)));
        let t = trace(events, 100);
        let cfg = AnalysisConfig { params: p, protocol: Protocol::Doubling, proposals: vec![1; 4], consensus: false };
        let v = check_invariants(&t, &cfg);
        assert!(v.iter().any(|x| x.invariant == Invariant::MonotoneViews && x.process == Some(ProcessId(1))));
    }

    #[test]
    fn intervals_close_on_leave_and_end() {
        let events = vec![
            note(SimTime::from_int(1), 1, Detail::Advance(1)),
            note(SimTime::from_int(3), 1, Detail::Leave(1)),
            note(SimTime::from_int(4), 1, Detail::Advance(2)),
        ];
        let tls = timelines(&trace(events, 10));
        let iv = &tls[&ProcessId(1)].intervals;
        assert_eq!(iv.len(), 2);
        assert_eq!((iv[0].from, iv[0].to), (SimTime::from_int(1), SimTime::from_int(3)));
        assert_eq!(iv[1].to, SimTime::from_int(10));
    }
}
