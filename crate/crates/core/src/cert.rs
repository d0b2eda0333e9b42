//! The certification phase that precedes Quad in SQuad.
//!
//! Each process discloses its proposal. f+1 matching disclosures prove that
//! some correct process proposed the value, and yield a certificate for it.
//! If 2f+1 disclosures arrive without any value reaching f+1, proposals
//! are evidently mixed and the process votes to allow any value; f+1 such
//! votes yield the ANY certificate, which vouches for every value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::crypto::{Digest, PartialSignature, SchemeConfig, SigningKey, ThresholdSignature};
use crate::message::Message;
use crate::sim::Ctx;
use crate::{Params, ProcessId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CertSubject {
    Value(Value),
    Any,
}

impl CertSubject {
    pub fn digest(self) -> Digest {
        match self {
            CertSubject::Value(v) => Digest::value(v),
            CertSubject::Any => Digest::any_value(),
        }
    }
}

impl fmt::Display for CertSubject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertSubject::Value(v) => write!(f, "{v}"),
            CertSubject::Any => f.write_str("ANY"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Certificate {
    subject: CertSubject,
    tsig: ThresholdSignature,
}

impl Certificate {
    pub fn new(subject: CertSubject, tsig: ThresholdSignature) -> Self {
        Certificate { subject, tsig }
    }

    pub fn subject(&self) -> CertSubject {
        self.subject
    }

    pub fn tsig(&self) -> &ThresholdSignature {
        &self.tsig
    }

    /// Whether the certificate is a valid proof for its own subject.
    pub fn is_valid(&self, scheme: &SchemeConfig) -> bool {
        scheme.combined_verify(&self.subject.digest(), &self.tsig)
    }

    /// `verify(v, σ)`: an ANY certificate vouches for every value.
    pub fn verifies_for(&self, value: Value, scheme: &SchemeConfig) -> bool {
        scheme.combined_verify(&Digest::any_value(), &self.tsig) || scheme.combined_verify(&Digest::value(value), &self.tsig)
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cert({},{})", self.subject, self.tsig)
    }
}

/// Result of leaving the certification phase: the value to propose to Quad
/// and the certificate backing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertOutcome {
    pub proposal: Value,
    pub cert: Certificate,
}

pub struct CertPhase {
    params: Params,
    scheme: SchemeConfig,
    key: Arc<SigningKey>,
    proposal: Value,
    disclose: BTreeMap<Value, BTreeMap<ProcessId, PartialSignature>>,
    disclosed_by: BTreeSet<ProcessId>,
    allow_any: BTreeMap<ProcessId, PartialSignature>,
    allow_any_sent: bool,
    outcome: Option<CertOutcome>,
}

impl CertPhase {
    pub fn new(params: &Params, key: Arc<SigningKey>, proposal: Value) -> Self {
        CertPhase {
            params: params.clone(),
            scheme: SchemeConfig::cert(params.n, params.f),
            key,
            proposal,
            disclose: BTreeMap::new(),
            disclosed_by: BTreeSet::new(),
            allow_any: BTreeMap::new(),
            allow_any_sent: false,
            outcome: None,
        }
    }

    pub fn scheme(&self) -> SchemeConfig {
        self.scheme
    }

    pub fn outcome(&self) -> Option<&CertOutcome> {
        self.outcome.as_ref()
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) {
        let psig = self.scheme.share_sign(&self.key, &Digest::value(self.proposal));
        ctx.broadcast(Message::Disclose { value: self.proposal, psig });
    }

    /// Returns the outcome on the event that makes the process exit.
    pub fn on_message(&mut self, from: ProcessId, msg: &Message, ctx: &mut Ctx<'_>) -> Option<CertOutcome> {
        if self.outcome.is_some() {
            return None;
        }
        match msg {
            Message::Disclose { value, psig } => self.on_disclose(from, *value, psig, ctx),
            Message::AllowAny { psig } => self.on_allow_any(from, psig, ctx),
            Message::Certificate { subject, cert } => self.on_certificate(*subject, cert, ctx),
            _ => None,
        }
    }

    fn on_disclose(&mut self, from: ProcessId, value: Value, psig: &PartialSignature, ctx: &mut Ctx<'_>) -> Option<CertOutcome> {
        if !self.scheme.share_verify(from, &Digest::value(value), psig) {
            return None;
        }
        let tally = self.disclose.entry(value).or_default();
        tally.insert(from, psig.clone());
        self.disclosed_by.insert(from);
        if tally.len() >= self.scheme.k {
            let tsig = self.scheme.combine(tally.values()).expect("f+1 verified partials");
            return Some(self.exit(value, Certificate::new(CertSubject::Value(value), tsig), ctx));
        }
        if self.disclosed_by.len() >= self.params.quorum() && !self.allow_any_sent {
            self.allow_any_sent = true;
            let psig = self.scheme.share_sign(&self.key, &Digest::any_value());
            ctx.broadcast(Message::AllowAny { psig });
        }
        None
    }

    fn on_allow_any(&mut self, from: ProcessId, psig: &PartialSignature, ctx: &mut Ctx<'_>) -> Option<CertOutcome> {
        if !self.scheme.share_verify(from, &Digest::any_value(), psig) {
            return None;
        }
        self.allow_any.insert(from, psig.clone());
        if self.allow_any.len() < self.scheme.k {
            return None;
        }
        let tsig = self.scheme.combine(self.allow_any.values()).expect("f+1 verified partials");
        Some(self.exit(self.proposal, Certificate::new(CertSubject::Any, tsig), ctx))
    }

    fn on_certificate(&mut self, subject: CertSubject, cert: &Certificate, ctx: &mut Ctx<'_>) -> Option<CertOutcome> {
        if cert.subject() != subject || !cert.is_valid(&self.scheme) {
            return None;
        }
        let proposal = match subject {
            CertSubject::Value(v) => v,
            CertSubject::Any => self.proposal,
        };
        Some(self.exit(proposal, cert.clone(), ctx))
    }

    fn exit(&mut self, proposal: Value, cert: Certificate, ctx: &mut Ctx<'_>) -> CertOutcome {
        ctx.broadcast(Message::Certificate { subject: cert.subject(), cert: cert.clone() });
        let outcome = CertOutcome { proposal, cert };
        self.outcome = Some(outcome.clone());
        outcome
    }
}
