//! Deterministic discrete-event simulator for Byzantine consensus under
//! partial synchrony.
//!
//! The crate contains the RareSync view synchronizer, a four-phase
//! HotStuff-style view core, their composition (Quad), the certification
//! phase that turns Quad into SQuad, two baseline synchronizers, scripted
//! adversaries, and a post-hoc trace analyzer that computes word counts,
//! synchronization and decision times, and checks safety and timing
//! invariants.
//!
//! A typical run goes through [`runner::run`]:
//!
//! ```
//! use squadsim::runner::{run, Protocol, RunSpec, ScenarioKind};
//!
//! let spec = RunSpec::new(Protocol::SQuad, ScenarioKind::Happy, 4, 7);
//! let result = run(&spec).unwrap();
//! assert!(result.report.violations.is_empty());
//! assert!(result.report.t_d.is_some());
//! ```

use std::fmt;

pub mod adversary;
pub mod baselines;
pub mod cert;
pub mod crypto;
pub mod error;
pub mod message;
pub mod metrics;
pub mod node;
pub mod params;
pub mod raresync;
pub mod runner;
pub mod sim;
pub mod time;
pub mod view_core;

pub use error::{ConfigError, CryptoError, SimError};
pub use params::Params;
pub use time::{ClockModel, SimTime};

/// Process identifier, 1-based (`P1` .. `Pn`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        ProcessId(index as u32 + 1)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Proposal values are opaque integers.
pub type Value = u64;
/// Global view number, starting at 1.
pub type View = u64;
/// Epoch number, starting at 1.
pub type Epoch = u64;
