//! Parameter sweeps over volatility, depth, agent mix and seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use impactlab::agents::{Roster, RosterEntry, StrategySpec};
use impactlab::analysis::summarize;
use impactlab::market::{write_log_string, MarketConfig};

use crate::simulate::run;
use crate::{read_text, write_text, CliError, CliResult};

/// One strategy's share of the seats in a mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub fraction: f64,
    #[serde(flatten)]
    pub spec: StrategySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub name: String,
    pub agents: Vec<MixEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Market constants shared by every cell.
    #[serde(default)]
    pub base: MarketConfig,
    pub s: Vec<f64>,
    pub depth_n: Vec<usize>,
    pub mixes: Vec<Mix>,
    pub seeds: Vec<u64>,
    pub replications: usize,
    /// Refuse sweeps with more runs than this.
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
}

fn default_max_runs() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub s: f64,
    pub depth_n: usize,
    pub mix: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub s: f64,
    pub depth_n: usize,
    pub mix: String,
    pub seed: u64,
    pub replication: usize,
    pub run_seed: u64,
    pub end_round: u32,
    pub final_price: f64,
    pub final_bare_price: f64,
    pub mean_wealth: f64,
    pub mean_activity_rate: f64,
    pub wealth_activity_correlation: Option<f64>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("sweep spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &s in &self.s {
            for &depth_n in &self.depth_n {
                for mix in 0..self.mixes.len() {
                    for &seed in &self.seeds {
                        out.push(Cell { s, depth_n, mix, seed });
                    }
                }
            }
        }
        out
    }

    pub fn total_runs(&self) -> usize {
        self.s.len() * self.depth_n.len() * self.mixes.len() * self.seeds.len() * self.replications
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.total_runs() == 0 {
            return bad("sweep grid is empty".into());
        }
        if self.total_runs() > self.max_runs {
            return bad(format!("sweep needs {} runs, above max_runs {}", self.total_runs(), self.max_runs));
        }
        for m in &self.mixes {
            let total: f64 = m.agents.iter().map(|a| a.fraction).sum();
            if m.agents.iter().any(|a| !(a.fraction >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return bad(format!("fractions of mix {:?} must be non-negative and sum to 1", m.name));
            }
            if m.agents.iter().any(|a| a.spec == StrategySpec::Human) {
                return bad(format!("mix {:?} has human seats", m.name));
            }
        }
        for &s in &self.s {
            for &n in &self.depth_n {
                let c = MarketConfig { s, depth_n: n, ..self.base.clone() };
                c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Seat counts by largest remainder, so they sum to `n`.
pub fn apportion(fractions: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    counts
}

pub fn mix_roster(mix: &Mix, n: usize) -> Roster {
    let fractions: Vec<f64> = mix.agents.iter().map(|a| a.fraction).collect();
    let agents = apportion(&fractions, n)
        .into_iter()
        .zip(&mix.agents)
        .filter(|(c, _)| *c > 0)
        .map(|(count, a)| RosterEntry { count, spec: a.spec.clone() })
        .collect();
    Roster { agents }
}

/// Seed of replication `r` in a cell with base seed `seed`.
pub fn run_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((r as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn cell_name(spec: &SweepSpec, c: &Cell) -> String {
    format!("s={}_n={}_mix={}_seed={}", c.s, c.depth_n, spec.mixes[c.mix].name, c.seed)
}

fn run_cell(spec: &SweepSpec, cell: &Cell, logs_dir: Option<&Path>) -> CliResult<Vec<RunRow>> {
    let mix = &spec.mixes[cell.mix];
    let roster = mix_roster(mix, cell.depth_n);
    (0..spec.replications)
        .map(|r| {
            let seed = run_seed(cell.seed, r);
            let config = MarketConfig { s: cell.s, depth_n: cell.depth_n, seed, noise_seed: None, ..spec.base.clone() };
            let log = run(&config, &roster)?;
            if let Some(dir) = logs_dir {
                write_text(&dir.join(cell_name(spec, cell)).join(format!("rep={r:04}.jsonl")), &write_log_string(&log))?;
            }
            let sum = summarize(&log).map_err(|e| CliError::Data(e.to_string()))?;
            Ok(RunRow {
                s: cell.s,
                depth_n: cell.depth_n,
                mix: mix.name.clone(),
                seed: cell.seed,
                replication: r,
                run_seed: seed,
                end_round: sum.end_round,
                final_price: sum.final_price,
                final_bare_price: sum.final_bare_price,
                mean_wealth: sum.mean_wealth,
                mean_activity_rate: sum.mean_activity_rate,
                wealth_activity_correlation: sum.wealth_activity_correlation,
            })
        })
        .collect()
}

/// Runs every cell on a pool of threads. Rows come back in grid order, so the
/// output does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, logs_dir: Option<&Path>, threads: usize) -> CliResult<Vec<RunRow>> {
    let cells = spec.cells();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<CliResult<Vec<RunRow>>>> = (0..cells.len()).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(cells.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= cells.len() {
                    break;
                }
                let r = run_cell(spec, &cells[k], logs_dir);
                slots.lock().expect("no poisoned workers")[k] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r.expect("every cell ran")?);
    }
    Ok(rows)
}

pub struct SweepArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub logs: bool,
    pub threads: Option<usize>,
}

/// Writes `<out>/runs.csv` and `<out>/spec.json`; returns the runs.csv path.
pub fn cmd_sweep(args: &SweepArgs<'_>) -> CliResult<PathBuf> {
    let spec = SweepSpec::from_toml(&read_text(args.config)?)?;
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let logs_dir = args.logs.then(|| args.out.join("logs"));
    let rows = run_sweep(&spec, logs_dir.as_deref(), threads)?;
    let mut csv = String::from(
        "s,depth_n,mix,seed,replication,run_seed,end_round,final_price,final_bare_price,mean_wealth,mean_activity_rate,wealth_activity_correlation\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.s,
            r.depth_n,
            r.mix,
            r.seed,
            r.replication,
            r.run_seed,
            r.end_round,
            r.final_price,
            r.final_bare_price,
            r.mean_wealth,
            r.mean_activity_rate,
            r.wealth_activity_correlation.map_or_else(String::new, |v| v.to_string()),
        ));
    }
    let path = args.out.join("runs.csv");
    write_text(&path, &csv)?;
    write_text(&args.out.join("spec.json"), &(serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
s = [0.0, 0.1]
depth_n = [4, 5]
seeds = [1]
replications = 3

[base]
fixed_end_round = 9

[[mixes]]
name = "half"
agents = [
  { fraction = 0.5, strategy = "buy_and_hold" },
  { fraction = 0.5, strategy = "churner", rate = 0.3 },
]
"#;

    #[test]
    fn apportion_sums_to_depth() {
        assert_eq!(apportion(&[0.5, 0.5], 5), vec![3, 2]);
        assert_eq!(apportion(&[1.0 / 3.0; 3], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[0.0, 1.0], 7), vec![0, 7]);
    }

    #[test]
    fn grid_size_and_budget() {
        let spec = SweepSpec::from_toml(SPEC).unwrap();
        assert_eq!(spec.cells().len(), 4);
        assert_eq!(spec.total_runs(), 12);
        let capped = format!("max_runs = 11\n{SPEC}");
        assert!(SweepSpec::from_toml(&capped).is_err());
        let bad = SPEC.replace("fraction = 0.5, strategy = \"buy", "fraction = 0.6, strategy = \"buy");
        assert!(SweepSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn rows_do_not_depend_on_thread_count() {
        let spec = SweepSpec::from_toml(SPEC).unwrap();
        let one = run_sweep(&spec, None, 1).unwrap();
        let many = run_sweep(&spec, None, 4).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.len(), 12);
        assert!(one.iter().all(|r| r.end_round == 9));
    }

    #[test]
    fn run_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..100).map(|r| run_seed(7, r)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
