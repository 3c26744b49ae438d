//! Analysis pipeline over session logs.

use std::path::{Path, PathBuf};

use impactlab::analysis::{analyze_sessions, write_report, AnalysisError, AnalysisOptions};
use impactlab::market::{read_log_str, LogError, SessionLog};

use crate::{read_text, CliError, CliResult};

/// Files as given; directories contribute their `*.jsonl` files in name order.
pub fn expand_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::Usage(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_log(path: &Path) -> CliResult<SessionLog> {
    let text = read_text(path)?;
    read_log_str(&text).map_err(|e| match e {
        LogError::Io(e) => CliError::Usage(format!("{}: {e}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub struct AnalyzeArgs<'a> {
    pub logs: &'a [PathBuf],
    pub out: &'a Path,
    pub null_replicates: usize,
    pub seed: u64,
}

/// Returns the names of the written report files.
pub fn cmd_analyze(args: &AnalyzeArgs<'_>) -> CliResult<Vec<String>> {
    let paths = expand_inputs(args.logs)?;
    if paths.is_empty() {
        return Err(CliError::Usage("no session logs given".into()));
    }
    let logs = paths.iter().map(|p| load_log(p)).collect::<CliResult<Vec<_>>>()?;
    let opts = AnalysisOptions { null_replicates: args.null_replicates, seed: args.seed, ..AnalysisOptions::default() };
    let report = analyze_sessions(&logs, &opts).map_err(|e| match e {
        AnalysisError::InvalidInput(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    write_report(&report, args.out).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))
}
