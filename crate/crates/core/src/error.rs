use thiserror::Error;

use crate::sim::Trace;
use crate::{ProcessId, SimTime};

/// Rejected simulation parameters or scenario descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("n = {0} is not of the form 3f+1 with f >= 1")]
    InvalidN(usize),
    #[error("delta must be positive, got {0}")]
    NonPositiveDelta(SimTime),
    #[error("GST must be non-negative, got {0}")]
    NegativeGst(SimTime),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(SimTime),
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(SimTime),
    #[error("clock schedule: {0}")]
    Clock(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{0} Byzantine processes exceed the bound f = {1}")]
    TooManyByzantine(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("{have} distinct signers, threshold is {need}")]
    ThresholdTooSmall { have: usize, need: usize },
    #[error("partial signatures cover different digests")]
    MixedDigests,
    #[error("partial signatures come from different schemes")]
    MixedSchemes,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown process {0}")]
    UnknownProcess(ProcessId),
    #[error("message from {from} to {to} carries no words")]
    ZeroWords { from: ProcessId, to: ProcessId },
    #[error("illegal delay: sent at {sent_at}, delivered at {deliver_at}")]
    IllegalDelay { sent_at: SimTime, deliver_at: SimTime },
    #[error("timer duration must be positive, got {0}")]
    NonPositiveTimer(SimTime),
    #[error("event queue drained at {at} before the stop predicate held")]
    Livelock { at: SimTime, trace: Box<Trace> },
}
