//! Wire messages of every protocol layer and their word costs.

use std::fmt;

use crate::cert::{CertSubject, Certificate};
use crate::crypto::{PartialSignature, ThresholdSignature};
use crate::view_core::QuorumCertificate;
use crate::{Epoch, Value, View};

/// Which component a message belongs to. Delay policies and the metrics
/// module classify traffic by layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Sync,
    Core,
    Cert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoreKind {
    ViewChange,
    Prepare,
    PrepareVote,
    Precommit,
    PrecommitVote,
    Commit,
    CommitVote,
    Decide,
}

impl CoreKind {
    pub fn name(self) -> &'static str {
        match self {
            CoreKind::ViewChange => "VIEW-CHANGE",
            CoreKind::Prepare => "PREPARE",
            CoreKind::PrepareVote => "PREPARE-VOTE",
            CoreKind::Precommit => "PRECOMMIT",
            CoreKind::PrecommitVote => "PRECOMMIT-VOTE",
            CoreKind::Commit => "COMMIT",
            CoreKind::CommitVote => "COMMIT-VOTE",
            CoreKind::Decide => "DECIDE",
        }
    }
}

/// One view-core message. Which optional fields are set depends on `kind`:
/// votes carry `value` and `psig`, leader messages after PREPARE carry `qc`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreMessage {
    pub kind: CoreKind,
    pub view: View,
    pub value: Option<Value>,
    pub qc: Option<QuorumCertificate>,
    pub psig: Option<PartialSignature>,
    pub cert: Option<Certificate>,
}

impl CoreMessage {
    pub fn new(kind: CoreKind, view: View) -> Self {
        CoreMessage { kind, view, value: None, qc: None, psig: None, cert: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    EpochCompleted { epoch: Epoch, psig: PartialSignature },
    EnterEpoch { epoch: Epoch, sig: ThresholdSignature },
    Wish { view: View },
    Core(CoreMessage),
    Disclose { value: Value, psig: PartialSignature },
    AllowAny { psig: PartialSignature },
    Certificate { subject: CertSubject, cert: Certificate },
}

impl Message {
    pub fn layer(&self) -> Layer {
        match self {
            Message::EpochCompleted { .. } | Message::EnterEpoch { .. } | Message::Wish { .. } => Layer::Sync,
            Message::Core(_) => Layer::Core,
            Message::Disclose { .. } | Message::AllowAny { .. } | Message::Certificate { .. } => Layer::Cert,
        }
    }

    /// Every message is one word; a certificate riding on a view-core
    /// message adds one more.
    pub fn words(&self) -> u32 {
        match self {
            Message::Core(m) if m.cert.is_some() => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::EpochCompleted { .. } => "EPOCH-COMPLETED",
            Message::EnterEpoch { .. } => "ENTER-EPOCH",
            Message::Wish { .. } => "WISH",
            Message::Core(m) => m.kind.name(),
            Message::Disclose { .. } => "DISCLOSE",
            Message::AllowAny { .. } => "ALLOW-ANY",
            Message::Certificate { .. } => "CERTIFICATE",
        }
    }

    /// Every threshold signature carried by the message, including those
    /// inside QCs and certificates.
    pub fn threshold_signatures(&self) -> Vec<&ThresholdSignature> {
        match self {
            Message::EnterEpoch { sig, .. } => vec![sig],
            Message::Certificate { cert, .. } => vec![cert.tsig()],
            Message::Core(m) => {
                let mut out = Vec::new();
                if let Some(qc) = &m.qc {
                    out.push(&qc.sig);
                }
                if let Some(c) = &m.cert {
                    out.push(c.tsig());
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn partial_signature(&self) -> Option<&PartialSignature> {
        match self {
            Message::EpochCompleted { psig, .. } | Message::Disclose { psig, .. } | Message::AllowAny { psig } => {
                Some(psig)
            }
            Message::Core(m) => m.psig.as_ref(),
            _ => None,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::EpochCompleted { epoch, psig } => write!(f, "EPOCH-COMPLETED({epoch},{psig})"),
            Message::EnterEpoch { epoch, sig } => write!(f, "ENTER-EPOCH({epoch},{sig})"),
            Message::Wish { view } => write!(f, "WISH({view})"),
            Message::Disclose { value, psig } => write!(f, "DISCLOSE({value},{psig})"),
            Message::AllowAny { psig } => write!(f, "ALLOW-ANY({psig})"),
            Message::Certificate { subject, cert } => write!(f, "CERTIFICATE({subject},{cert})"),
            Message::Core(m) => {
                write!(f, "{}(v={}", m.kind.name(), m.view)?;
                if let Some(value) = m.value {
                    write!(f, ",val={value}")?;
                }
                if let Some(qc) = &m.qc {
                    write!(f, ",{qc}")?;
                }
                if let Some(psig) = &m.psig {
                    write!(f, ",{psig}")?;
                }
                if let Some(cert) = &m.cert {
                    write!(f, ",{cert}")?;
                }
                f.write_str(")")
            }
        }
    }
}
