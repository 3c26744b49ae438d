//! Risk-attitude fit from lottery responses.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use impactlab::numerics::BcaInterval;
use impactlab::risk::{
    fit_risk_mle, read_responses, safe_choice_summary, LotteryMenu, RiskError, RiskEstimate, RiskFitOptions,
    SafeChoiceSummary,
};

use crate::{read_text, write_text, CliError, CliResult};

pub struct FitArgs<'a> {
    pub responses: &'a Path,
    pub menu: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub replicates: usize,
    pub keep_inconsistent: bool,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub estimate: RiskEstimate,
    pub safe_choices: SafeChoiceSummary,
}

fn ci(c: &Option<BcaInterval>) -> String {
    c.as_ref().map_or_else(|| "-".to_string(), |c| format!("[{:.3}, {:.3}]", c.lower, c.upper))
}

/// Parameter table: estimate and bootstrap interval per parameter.
pub fn table(e: &RiskEstimate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:>10} {:>20}", "parameter", "estimate", "interval");
    for (name, v, c) in [("alpha", e.alpha_u, &e.ci_alpha), ("r", e.r_u, &e.ci_r), ("mu", e.mu, &e.ci_mu)] {
        let _ = writeln!(s, "{name:<10} {v:>10.3} {:>20}", ci(c));
    }
    let _ = writeln!(s, "N = {} subjects, {} responses, log-likelihood {:.3}", e.subjects, e.responses, e.log_likelihood);
    if !e.excluded.is_empty() {
        let _ = writeln!(s, "excluded as inconsistent: {}", e.excluded.len());
    }
    s
}

pub fn cmd_fit_risk(args: &FitArgs<'_>) -> CliResult<(FitOutput, String)> {
    let menu = match args.menu {
        Some(p) => LotteryMenu::from_toml(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => LotteryMenu::default(),
    };
    let text = read_text(args.responses)?;
    let responses = read_responses(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", args.responses.display())))?;
    let options = RiskFitOptions {
        bootstrap_replicates: args.replicates,
        exclude_inconsistent: !args.keep_inconsistent,
        seed: args.seed,
        ..RiskFitOptions::default()
    };
    let estimate = fit_risk_mle(&responses, &menu, &options).map_err(|e| match e {
        RiskError::InsufficientSubjects { .. } | RiskError::InvalidInput(_) | RiskError::Menu(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    let rendered = table(&estimate);
    let output = FitOutput { estimate, safe_choices: safe_choice_summary(&responses) };
    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&output).expect("estimates serialize");
        write_text(out, &(json + "\n"))?;
    }
    Ok((output, rendered))
}
