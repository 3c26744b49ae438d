//! Headless bot sessions.

use std::path::{Path, PathBuf};

use impactlab::agents::Roster;
use impactlab::market::{run_session, write_log_string, MarketConfig, SessionLog};
use impactlab::StrategySpec;

use crate::{read_text, write_text, CliError, CliResult};

pub fn load_config(path: Option<&Path>) -> CliResult<MarketConfig> {
    let config = match path {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => MarketConfig::default(),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

/// A roster file, or buy-and-hold on every seat.
pub fn load_roster(path: Option<&Path>, config: &MarketConfig) -> CliResult<Roster> {
    match path {
        Some(p) => Roster::from_toml(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => Ok(Roster::uniform(StrategySpec::BuyAndHold, config.depth_n)),
    }
}

pub fn run(config: &MarketConfig, roster: &Roster) -> CliResult<SessionLog> {
    let mut agents = roster.build_agents(config).map_err(|e| CliError::Usage(e.to_string()))?;
    run_session(config, &mut agents).map_err(|e| CliError::Data(e.to_string()))
}

/// Config of the second session of a pair: same noise path and end time,
/// independent bot randomness.
pub fn second_of_pair(config: &MarketConfig) -> MarketConfig {
    let mut c = config.clone();
    c.noise_seed = Some(config.noise_seed());
    c.seed = config.seed.wrapping_add(1);
    c
}

/// `run.jsonl` becomes `run.1.jsonl` and `run.2.jsonl`.
pub fn pair_paths(out: &Path) -> [PathBuf; 2] {
    let stem = out.file_stem().map_or_else(|| "session".into(), |s| s.to_string_lossy().into_owned());
    let ext = out.extension().map_or_else(|| "jsonl".into(), |s| s.to_string_lossy().into_owned());
    [1, 2].map(|k| out.with_file_name(format!("{stem}.{k}.{ext}")))
}

pub struct SimulateArgs<'a> {
    pub config: Option<&'a Path>,
    pub roster: Option<&'a Path>,
    pub seed: Option<u64>,
    pub pair: bool,
    pub out: &'a Path,
}

/// Returns the written paths.
pub fn cmd_simulate(args: &SimulateArgs<'_>) -> CliResult<Vec<PathBuf>> {
    let mut config = load_config(args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let roster = load_roster(args.roster, &config)?;
    if !args.pair {
        write_text(args.out, &write_log_string(&run(&config, &roster)?))?;
        return Ok(vec![args.out.to_path_buf()]);
    }
    let mut first = config.clone();
    first.noise_seed = Some(config.noise_seed());
    let paths = pair_paths(args.out);
    for (cfg, path) in [first, second_of_pair(&config)].iter().zip(&paths) {
        write_text(path, &write_log_string(&run(cfg, &roster)?))?;
    }
    Ok(paths.to_vec())
}
