//! One-call execution of a (protocol, scenario, n, seed) instance, seed
//! sweeps, and the CSV row format.

use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{self, ProposalRule, ScenarioConfig};
use crate::crypto::Keyring;
use crate::metrics::{self, AnalysisConfig, Invariant, MetricsReport, Violation};
use crate::sim::{Node, Simulation, StopRule, Trace};
use crate::{ConfigError, Params, SimError, SimTime};

pub use crate::adversary::ScenarioKind;
pub use crate::node::Protocol;
use crate::node::{Byzantine, Replica};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub protocol: Protocol,
    pub scenario: ScenarioKind,
    pub n: usize,
    pub seed: u64,
    pub delta: SimTime,
    pub gst: SimTime,
    /// Defaults to δ/100 when unset.
    pub epsilon: Option<SimTime>,
    pub beta: SimTime,
    pub proposals: ProposalRule,
    /// Overrides the default stop horizon.
    pub horizon: Option<SimTime>,
    pub synchronizer_only: bool,
}

impl RunSpec {
    pub fn new(protocol: Protocol, scenario: ScenarioKind, n: usize, seed: u64) -> Self {
        RunSpec {
            protocol,
            scenario,
            n,
            seed,
            delta: SimTime::from_int(1),
            gst: SimTime::from_int(50),
            epsilon: None,
            beta: SimTime::from_int(1),
            proposals: ProposalRule::Random,
            horizon: None,
            synchronizer_only: false,
        }
    }

    pub fn params(&self) -> Result<Params, ConfigError> {
        let mut p = Params::new(self.n, self.delta, self.gst)?.with_beta(self.beta)?;
        if let Some(eps) = self.epsilon {
            p = p.with_epsilon(eps)?;
        }
        Ok(p)
    }

    /// Runs stop once everyone decided and at least two epochs plus slack
    /// have passed since GST, so that every post-GST bound is observable.
    pub fn stop_rule(&self, params: &Params) -> StopRule {
        let ed = params.epoch_duration();
        let horizon = self.horizon.unwrap_or_else(|| {
            let long = (ed * 6).max(params.delta * 4096);
            params.gst + long + params.delta * 100
        });
        if self.synchronizer_only {
            StopRule::horizon(horizon)
        } else {
            StopRule::decided(params.gst + ed * 2 + params.delta * 14, horizon)
        }
    }
}

pub struct RunResult {
    pub spec: RunSpec,
    pub config: ScenarioConfig,
    pub trace: Trace,
    /// Input the analyzer was given, for re-checking edited traces.
    pub analysis: AnalysisConfig,
    pub report: MetricsReport,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.report.violations.is_empty() && (self.spec.synchronizer_only || self.report.decided())
    }

    pub fn csv_row(&self) -> String {
        csv_row(&self.spec, &self.config.params, &self.report)
    }
}

pub const CSV_HEADER: &str =
    "protocol,n,f,seed,scenario,words_post_gst,words_sync_window,t_s,t_d,latency,epochs_max,violations";

fn opt_time(t: Option<SimTime>) -> String {
    t.map(SimTime::to_decimal).unwrap_or_default()
}

pub fn csv_row(spec: &RunSpec, params: &Params, report: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        spec.protocol,
        params.n,
        params.f,
        spec.seed,
        spec.scenario.name(),
        report.words_post_gst,
        report.words_sync_window,
        opt_time(report.t_s),
        opt_time(report.t_d),
        opt_time(report.latency),
        report.epochs_max,
        report.violations.len()
    )
}

fn build_nodes(spec: &RunSpec, config: &ScenarioConfig) -> Vec<Box<dyn Node>> {
    let params = &config.params;
    Keyring::issue(params.n)
        .into_iter()
        .map(|key| {
            let p = key.owner();
            let mut replica = Replica::new(params, spec.protocol, key, config.proposals[p.index()]);
            if spec.synchronizer_only {
                replica = replica.synchronizer_only();
            }
            match config.byzantine.get(&p) {
                Some(strategy) => Box::new(Byzantine::new(replica, *strategy)) as Box<dyn Node>,
                None => Box::new(replica),
            }
        })
        .collect()
}

/// Builds the scenario, simulates it and analyzes the trace. A run in
/// which the event queue drains before every correct process decided is
/// reported as a termination violation rather than an error.
pub fn run(spec: &RunSpec) -> Result<RunResult, RunError> {
    let params = spec.params()?;
    let config = adversary::build(spec.protocol, &spec.scenario, &params, spec.seed, spec.proposals)?;
    run_config(spec, config)
}

/// Runs an already built (and possibly hand-edited) scenario.
pub fn run_config(spec: &RunSpec, config: ScenarioConfig) -> Result<RunResult, RunError> {
    config.validate()?;
    let params = config.params.clone();
    let sim = Simulation::new(
        params.clone(),
        build_nodes(spec, &config),
        config.byzantine_set(),
        config.clocks.clone(),
        config.starts.clone(),
        config.delay_policy(),
    );
    let (trace, livelock) = match sim.run(spec.stop_rule(&params)) {
        Ok(trace) => (trace, None),
        Err(SimError::Livelock { at, trace }) => (*trace, Some(at)),
        Err(e) => return Err(e.into()),
    };
    let analysis = AnalysisConfig {
        params,
        protocol: spec.protocol,
        proposals: config.proposals.clone(),
        consensus: !spec.synchronizer_only,
    };
    let mut report = metrics::analyze(&trace, &analysis);
    if let Some(at) = livelock {
        report.violations.push(Violation {
            invariant: Invariant::Termination,
            process: None,
            detail: format!("event queue drained at {at}"),
        });
    }
    Ok(RunResult { spec: spec.clone(), config, trace, analysis, report })
}

/// Runs every spec in parallel. Results come back in input order.
pub fn run_many(specs: &[RunSpec]) -> Vec<Result<RunResult, RunError>> {
    specs.par_iter().map(run).collect()
}
