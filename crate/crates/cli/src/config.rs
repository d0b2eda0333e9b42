use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::Parser;
use thiserror::Error;

use squadsim::adversary::{CustomScenario, DelayKind, ProposalRule};
use squadsim::node::Strategy;
use squadsim::runner::{Protocol, RunSpec, ScenarioKind};
use squadsim::{ConfigError, ProcessId, SimTime};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Command-line flags. Every flag may also be given as `key = value` in a
/// config file; flags win.
#[derive(Debug, Default, Parser)]
#[command(name = "squadsim", about = "Run seed sweeps of the squadsim simulator and emit CSV")]
pub struct Args {
    /// Flat key=value file with defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// raresync-quad, squad, alltoall or doubling.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Comma-separated system sizes, each of the form 3f+1.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub gst: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// Inclusive range `a..b`, or a single seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// A built-in scenario name, `custom` (keys from the config file), or
    /// the path of a custom scenario file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// random, distinct, or unanimous:<value>.
    #[arg(long)]
    pub proposals: Option<String>,
    /// CSV destination. Defaults to `$SQUADSIM_OUT/<protocol>-<scenario>.csv`
    /// when that variable is set, stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one trace file per run into this directory.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

/// Fully resolved sweep description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub ns: Vec<usize>,
    pub delta: SimTime,
    pub gst: SimTime,
    pub epsilon: Option<SimTime>,
    pub beta: SimTime,
    pub seeds: RangeInclusive<u64>,
    pub scenario: ScenarioKind,
    pub proposals: ProposalRule,
    pub out: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn specs(&self) -> Vec<RunSpec> {
        let mut specs = Vec::new();
        for &n in &self.ns {
            for seed in self.seeds.clone() {
                let mut spec = RunSpec::new(self.protocol, self.scenario.clone(), n, seed);
                spec.delta = self.delta;
                spec.gst = self.gst;
                spec.epsilon = self.epsilon;
                spec.beta = self.beta;
                spec.proposals = self.proposals;
                specs.push(spec);
            }
        }
        specs
    }

    /// Resolves flags against an optional config file and the
    /// `SQUADSIM_OUT` default.
    pub fn resolve(args: Args, out_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_kv(path)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());

        let protocol = match pick(&args.protocol, "protocol") {
            Some(s) => s.parse::<Protocol>().map_err(bad)?,
            None => Protocol::SQuad,
        };
        let ns = parse_ns(&pick(&args.n, "n").unwrap_or_else(|| "4".into()))?;
        let time = |flag: &Option<String>, key: &str, default: &str| -> Result<SimTime, CliError> {
            let text = pick(flag, key).unwrap_or_else(|| default.into());
            SimTime::parse(&text).ok_or_else(|| bad(format!("{key}: cannot parse `{text}` as a time")))
        };
        let delta = time(&args.delta, "delta", "1")?;
        let gst = time(&args.gst, "gst", "50")?;
        let beta = time(&args.beta, "beta", "1")?;
        let epsilon = match pick(&args.epsilon, "epsilon") {
            Some(_) => Some(time(&args.epsilon, "epsilon", "")?),
            None => None,
        };
        let seeds = parse_seeds(&pick(&args.seeds, "seeds").unwrap_or_else(|| "0..0".into()))?;
        let scenario = match pick(&args.scenario, "scenario").as_deref() {
            None => ScenarioKind::Happy,
            Some("custom") => ScenarioKind::Custom(parse_custom(&file)?),
            Some(name) => match ScenarioKind::parse(name) {
                Some(kind) => kind,
                None => ScenarioKind::Custom(parse_custom(&read_kv(Path::new(name))?)?),
            },
        };
        let proposals = parse_proposals(&pick(&args.proposals, "proposals").unwrap_or_else(|| "random".into()))?;
        let out = args.out.or_else(|| file.get("out").map(PathBuf::from)).or_else(|| {
            out_dir.map(|dir| dir.join(format!("{}-{}.csv", protocol, scenario.name())))
        });
        let trace_dir = args.trace_dir.or_else(|| file.get("trace_dir").map(PathBuf::from));

        let config = RunConfig { protocol, ns, delta, gst, epsilon, beta, seeds, scenario, proposals, out, trace_dir };
        // surface parameter errors before any run starts
        for &n in &config.ns {
            RunSpec::new(protocol, config.scenario.clone(), n, 0).params()?;
        }
        Ok(config)
    }
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kv(&text).map_err(|msg| bad(format!("{}: {msg}", path.display())))
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_ns(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| bad(format!("n: `{s}` is not a number"))))
        .collect()
}

pub fn parse_seeds(text: &str) -> Result<RangeInclusive<u64>, CliError> {
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(format!("seeds: `{text}` is not `a..b`")));
    let range = match text.split_once("..") {
        Some((a, b)) => num(a)?..=num(b.trim_start_matches('='))?,
        None => num(text)?..=num(text)?,
    };
    if range.is_empty() {
        return Err(bad(format!("seeds: empty range `{text}`")));
    }
    Ok(range)
}

fn parse_proposals(text: &str) -> Result<ProposalRule, CliError> {
    match text.split_once(':') {
        _ if text == "random" => Ok(ProposalRule::Random),
        _ if text == "distinct" => Ok(ProposalRule::Distinct),
        Some(("unanimous", v)) => {
            v.trim().parse().map(ProposalRule::Unanimous).map_err(|_| bad(format!("proposals: bad value `{v}`")))
        }
        _ => Err(bad(format!("proposals: unknown rule `{text}`"))),
    }
}

fn parse_process(text: &str) -> Result<ProcessId, CliError> {
    let digits = text.strip_prefix('P').unwrap_or(text);
    match digits.parse::<u32>() {
        Ok(id) if id >= 1 => Ok(ProcessId(id)),
        _ => Err(bad(format!("`{text}` is not a process id"))),
    }
}

/// Builds a custom scenario from `byzantine.<P>`, `rate.<P>`, `start.<P>`
/// and `delay` keys.
pub fn parse_custom(kv: &BTreeMap<String, String>) -> Result<CustomScenario, CliError> {
    let mut custom = CustomScenario::default();
    for (key, value) in kv {
        let Some((prefix, who)) = key.split_once('.') else {
            if key == "delay" {
                custom.delay = DelayKind::parse(value).ok_or_else(|| bad(format!("delay: unknown policy `{value}`")))?;
            }
            continue;
        };
        let time = || SimTime::parse(value).ok_or_else(|| bad(format!("{key}: cannot parse `{value}`")));
        match prefix {
            "byzantine" => {
                custom.byzantine.insert(parse_process(who)?, value.parse::<Strategy>().map_err(bad)?);
            }
            "rate" => {
                custom.rates.insert(parse_process(who)?, time()?.ratio());
            }
            "start" => {
                custom.starts.insert(parse_process(who)?, time()?);
            }
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    Ok(custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_inclusive() {
        assert_eq!(parse_seeds("0..9").unwrap().count(), 10);
        assert_eq!(parse_seeds("3").unwrap(), 3..=3);
        assert_eq!(parse_seeds("2..=4").unwrap(), 2..=4);
        assert!(parse_seeds("5..1").is_err());
    }

    #[test]
    fn kv_skips_comments_and_blank_lines() {
        let kv = parse_kv("# sweep\nprotocol = squad\n\nn = 4,7 # two sizes\n").unwrap();
        assert_eq!(kv.get("protocol").map(String::as_str), Some("squad"));
        assert_eq!(kv.get("n").map(String::as_str), Some("4,7"));
        assert!(parse_kv("protocol squad").is_err());
    }

    #[test]
    fn custom_keys() {
        let kv = parse_kv("byzantine.P2 = equivocate\nrate.1 = 3/2\nstart.P3 = 10\ndelay = max").unwrap();
        let c = parse_custom(&kv).unwrap();
        assert_eq!(c.byzantine.get(&ProcessId(2)), Some(&Strategy::Equivocate));
        assert_eq!(c.rates.get(&ProcessId(1)).copied(), Some(SimTime::new(3, 2).ratio()));
        assert_eq!(c.starts.get(&ProcessId(3)).copied(), Some(SimTime::from_int(10)));
        assert_eq!(c.delay, DelayKind::Max);
    }

    #[test]
    fn flags_override_defaults_and_n_is_validated() {
        let args = Args { n: Some("4,7".into()), seeds: Some("0..1".into()), ..Args::default() };
        let c = RunConfig::resolve(args, None).unwrap();
        assert_eq!(c.specs().len(), 4);
        let args = Args { n: Some("5".into()), ..Args::default() };
        assert!(matches!(RunConfig::resolve(args, None), Err(CliError::Params(ConfigError::InvalidN(5)))));
    }

    #[test]
    fn proposal_rules() {
        assert_eq!(parse_proposals("unanimous:9").unwrap(), ProposalRule::Unanimous(9));
        assert!(parse_proposals("unanimous").is_err());
    }
}
