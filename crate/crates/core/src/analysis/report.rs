//! Per-session and pooled analysis reports, with CSV tables and plot data.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    activity_rate, average_curves, compare_fit_distributions, conditional_sync, expectation_tails, fdr_clusters,
    fit_all_forecasts, forecast_observations, position_matrix, skewness_curve, sync_overlap,
    wealth_activity_correlation, ActivityMatrix, ActivityVariant, AnalysisError, ClusterSet, FitParam, ForecastFit,
    PairTest, ReturnSign, SeriesLabel, SkewCurve, SyncReport, TailSide, DEFAULT_FDR, DEFAULT_NULL_REPLICATES,
    DEFAULT_TAUS,
};
use crate::market::SessionLog;
use crate::numerics::rng::streams;
use crate::numerics::{RngStream, TailFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub null_replicates: usize,
    pub seed: u64,
    pub fdr_threshold: f64,
    pub taus: Vec<usize>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            null_replicates: DEFAULT_NULL_REPLICATES,
            seed: 0,
            fdr_threshold: DEFAULT_FDR,
            taus: DEFAULT_TAUS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderSummary {
    pub trader_id: usize,
    pub final_wealth: f64,
    pub net: f64,
    pub activity_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub end_round: u32,
    pub final_price: f64,
    pub final_bare_price: f64,
    pub mean_activity_rate: f64,
    pub mean_wealth: f64,
    pub wealth_activity_correlation: Option<f64>,
    pub traders: Vec<TraderSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSync {
    pub label: String,
    pub report: Option<SyncReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: usize,
    pub summary: SessionSummary,
    pub skew_realized: Option<SkewCurve>,
    pub skew_bare: Option<SkewCurve>,
    pub sync: Vec<LabeledSync>,
    pub clusters: Option<ClusterSet>,
    pub forecast_fits: Vec<ForecastFit>,
    /// Analyses that could not run, with the reason.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSync {
    pub label: String,
    pub sessions: usize,
    pub mean_overlap: f64,
    pub mean_null: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub options: AnalysisOptions,
    pub sessions: Vec<SessionReport>,
    pub skew_realized: Option<SkewCurve>,
    pub skew_bare: Option<SkewCurve>,
    pub sync: Vec<PooledSync>,
    pub fit_tests_omega0: Vec<PairTest>,
    pub fit_tests_omega1: Vec<PairTest>,
    pub tail_negative: Option<TailFit>,
    pub tail_positive: Option<TailFit>,
    pub notes: Vec<String>,
}

fn keep<T>(notes: &mut Vec<String>, what: &str, r: Result<T, AnalysisError>) -> Option<T> {
    r.map_err(|e| notes.push(format!("{what}: {e}"))).ok()
}

pub fn summarize(log: &SessionLog) -> Result<SessionSummary, AnalysisError> {
    let traders = log
        .liquidation
        .iter()
        .map(|l| {
            Ok(TraderSummary {
                trader_id: l.trader_id,
                final_wealth: l.wealth,
                net: l.net,
                activity_rate: activity_rate(log, l.trader_id)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let n = traders.len().max(1) as f64;
    Ok(SessionSummary {
        end_round: log.end_round,
        final_price: log.final_price(),
        final_bare_price: *log.bare_prices.last().unwrap_or(&log.config.initial_price),
        mean_activity_rate: traders.iter().map(|t| t.activity_rate).sum::<f64>() / n,
        mean_wealth: traders.iter().map(|t| t.final_wealth).sum::<f64>() / n,
        wealth_activity_correlation: wealth_activity_correlation(log).ok(),
        traders,
    })
}

/// Bare-price return observed before each activity column.
fn previous_bare_returns(log: &SessionLog, m: &ActivityMatrix) -> Vec<f64> {
    m.rounds
        .iter()
        .map(|&t| libm::log(log.bare_prices[t as usize] / log.bare_prices[t as usize - 1]))
        .collect()
}

pub fn analyze_session(log: &SessionLog, session: usize, opts: &AnalysisOptions) -> Result<SessionReport, AnalysisError> {
    let mut notes = Vec::new();
    let summary = summarize(log)?;
    // the entry round is dropped from return statistics
    let realized = &log.prices()[1..];
    let bare = &log.bare_prices[1..];
    let skew_realized = keep(&mut notes, "skew realized", skewness_curve(realized, &opts.taus, SeriesLabel::Realized));
    let skew_bare = keep(&mut notes, "skew bare", skewness_curve(bare, &opts.taus, SeriesLabel::Bare));

    let base = RngStream::new(opts.seed, streams::SYNC_NULL).fork(session as u64);
    let mut sync = Vec::new();
    let variants = [
        ("all", ActivityVariant::All),
        ("buy_only", ActivityVariant::BuyOnly),
        ("sell_only", ActivityVariant::SellOnly),
    ];
    for (k, (label, variant)) in variants.iter().enumerate() {
        let m = ActivityMatrix::from_log(log, *variant);
        let mut rng = base.fork(k as u64);
        let report = keep(&mut notes, &format!("sync {label}"), sync_overlap(&m, opts.null_replicates, &mut rng));
        sync.push(LabeledSync { label: label.to_string(), report });
        if *variant == ActivityVariant::All {
            continue;
        }
        let prev = previous_bare_returns(log, &m);
        for (j, (sign, name)) in [(ReturnSign::Negative, "after_negative"), (ReturnSign::Positive, "after_positive")]
            .into_iter()
            .enumerate()
        {
            let mut rng = base.fork(10 + 2 * k as u64 + j as u64);
            let label = format!("{label}_{name}");
            let report = keep(
                &mut notes,
                &format!("sync {label}"),
                conditional_sync(&m, &prev, sign, opts.null_replicates, &mut rng),
            );
            sync.push(LabeledSync { label, report });
        }
    }
    let clusters = keep(&mut notes, "clusters", fdr_clusters(&position_matrix(log), opts.fdr_threshold));
    Ok(SessionReport {
        session,
        summary,
        skew_realized,
        skew_bare,
        sync,
        clusters,
        forecast_fits: fit_all_forecasts(log),
        notes,
    })
}

/// Analyzes each session and pools curves, overlaps, fit tests and tails.
pub fn analyze_sessions(logs: &[SessionLog], opts: &AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    if logs.is_empty() {
        return Err(AnalysisError::InsufficientData("no sessions to analyze".into()));
    }
    let sessions = logs
        .iter()
        .enumerate()
        .map(|(i, log)| analyze_session(log, i, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let mut notes = Vec::new();

    let realized: Vec<SkewCurve> = sessions.iter().filter_map(|s| s.skew_realized.clone()).collect();
    let bare: Vec<SkewCurve> = sessions.iter().filter_map(|s| s.skew_bare.clone()).collect();
    let skew_realized = keep(&mut notes, "pooled skew realized", average_curves(&realized));
    let skew_bare = keep(&mut notes, "pooled skew bare", average_curves(&bare));

    let mut sync = Vec::new();
    for label in sessions[0].sync.iter().map(|s| s.label.clone()) {
        let reports: Vec<&SyncReport> = sessions
            .iter()
            .flat_map(|s| s.sync.iter().filter(|l| l.label == label).filter_map(|l| l.report.as_ref()))
            .collect();
        if reports.is_empty() {
            continue;
        }
        let k = reports.len() as f64;
        sync.push(PooledSync {
            label,
            sessions: reports.len(),
            mean_overlap: reports.iter().map(|r| r.overlap).sum::<f64>() / k,
            mean_null: reports.iter().map(|r| r.null_mean).sum::<f64>() / k,
        });
    }

    let fits: Vec<ForecastFit> = sessions.iter().flat_map(|s| s.forecast_fits.clone()).collect();
    let expected: Vec<f64> = logs
        .iter()
        .flat_map(forecast_observations)
        .map(|o| o.expected_return)
        .collect();
    let tail_negative = keep(&mut notes, "negative expectation tail", expectation_tails(&expected, TailSide::Negative));
    let tail_positive = keep(&mut notes, "positive expectation tail", expectation_tails(&expected, TailSide::Positive));

    Ok(AnalysisReport {
        schema_version: crate::market::SCHEMA_VERSION,
        options: opts.clone(),
        skew_realized,
        skew_bare,
        sync,
        fit_tests_omega0: compare_fit_distributions(&fits, FitParam::Omega0),
        fit_tests_omega1: compare_fit_distributions(&fits, FitParam::Omega1),
        tail_negative,
        tail_positive,
        sessions,
        notes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `report.json`, the CSV tables and the plot-data series into `dir`.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, body: String| -> std::io::Result<()> {
        std::fs::File::create(dir.join(name))?.write_all(body.as_bytes())?;
        written.push(name.to_string());
        Ok(())
    };

    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    emit("report.json", json + "\n")?;

    let mut traders = String::from("session,trader_id,final_wealth,net,activity_rate\n");
    for s in &report.sessions {
        for t in &s.summary.traders {
            traders += &format!("{},{},{},{},{}\n", s.session, t.trader_id, t.final_wealth, t.net, t.activity_rate);
        }
    }
    emit("traders.csv", traders.clone())?;
    emit("plot_wealth_vs_activity.csv", traders)?;

    let mut sessions = String::from("session,end_round,final_price,final_bare_price,mean_activity_rate,mean_wealth,wealth_activity_correlation\n");
    for s in &report.sessions {
        let m = &s.summary;
        sessions += &format!(
            "{},{},{},{},{},{},{}\n",
            s.session,
            m.end_round,
            m.final_price,
            m.final_bare_price,
            m.mean_activity_rate,
            m.mean_wealth,
            opt(m.wealth_activity_correlation)
        );
    }
    emit("sessions.csv", sessions)?;

    let mut skew = String::from("series,tau,skew_prob,skew_median,skew_combined\n");
    for curve in [&report.skew_bare, &report.skew_realized].into_iter().flatten() {
        let label = serde_json::to_value(curve.series_label).map_err(std::io::Error::from)?;
        for k in 0..curve.taus.len() {
            skew += &format!(
                "{},{},{},{},{}\n",
                label.as_str().unwrap_or_default(),
                curve.taus[k],
                curve.skew_prob[k],
                curve.skew_median[k],
                curve.skew_combined[k]
            );
        }
    }
    emit("plot_skewness.csv", skew)?;

    let mut sync = String::from("session,label,overlap,null_mean,null_sd,replicates,rounds,lambda1,lambda2,lambda3\n");
    for s in &report.sessions {
        for l in &s.sync {
            if let Some(r) = &l.report {
                let ev = |k: usize| opt(r.eigenvalues.get(k).copied());
                sync += &format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    s.session, l.label, r.overlap, r.null_mean, r.null_sd, r.replicates, r.rounds, ev(0), ev(1), ev(2)
                );
            }
        }
    }
    emit("sync.csv", sync)?;

    let mut clusters = String::from("session,cluster,trader_id\n");
    let mut links = String::from("session,i,j,p_value\n");
    for s in &report.sessions {
        if let Some(c) = &s.clusters {
            for (k, group) in c.clusters.iter().enumerate() {
                for t in group {
                    clusters += &format!("{},{},{}\n", s.session, k, t);
                }
            }
            for l in &c.validated_links {
                links += &format!("{},{},{},{}\n", s.session, l.i, l.j, l.p_value);
            }
        }
    }
    emit("clusters.csv", clusters)?;
    emit("links.csv", links)?;

    let mut fits = String::from("session,trader_id,action_state,omega0,omega1,n_obs\n");
    for s in &report.sessions {
        for f in &s.forecast_fits {
            let state = serde_json::to_value(f.action_state).map_err(std::io::Error::from)?;
            fits += &format!(
                "{},{},{},{},{},{}\n",
                s.session,
                f.trader_id,
                state.as_str().unwrap_or("ALL"),
                f.omega0,
                f.omega1,
                f.n_obs
            );
        }
    }
    emit("forecast_fits.csv", fits)?;

    let mut tests = String::from("param,state_a,state_b,n_a,n_b,p_value\n");
    for (param, table) in [("omega0", &report.fit_tests_omega0), ("omega1", &report.fit_tests_omega1)] {
        for t in table {
            tests += &format!(
                "{},{},{},{},{},{}\n",
                param,
                serde_json::to_value(t.a).map_err(std::io::Error::from)?.as_str().unwrap_or_default(),
                serde_json::to_value(t.b).map_err(std::io::Error::from)?.as_str().unwrap_or_default(),
                t.n_a,
                t.n_b,
                opt(t.p_value)
            );
        }
    }
    emit("fit_tests.csv", tests)?;

    let mut tails = String::from("side,r_min,alpha_tail,n_tail,ks_distance\n");
    for (side, fit) in [("negative", &report.tail_negative), ("positive", &report.tail_positive)] {
        if let Some(f) = fit {
            tails += &format!("{},{},{},{},{}\n", side, f.r_min, f.alpha_tail, f.n_tail, f.ks_distance);
        }
    }
    emit("tail_fits.csv", tails)?;

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{BuyAndHold, Churner, Contrarian};
    use crate::market::{run_session, Agent, MarketConfig};

    fn mixed_log(seed: u64) -> SessionLog {
        let c = MarketConfig { depth_n: 12, seed, ..Default::default() };
        let mut agents: Vec<Box<dyn Agent>> = Vec::new();
        for i in 0..12 {
            agents.push(match i % 3 {
                0 => Box::new(BuyAndHold),
                1 => Box::new(Churner { trader_id: i, seed, rate: 0.4 }),
                _ => Box::new(Contrarian { trader_id: i, seed, omega0: 0.0, omega1: -0.5, band: 0.02, forecast_noise: 0.03 }),
            });
        }
        run_session(&c, &mut agents).unwrap()
    }

    fn quick() -> AnalysisOptions {
        AnalysisOptions { null_replicates: 50, ..Default::default() }
    }

    #[test]
    fn report_is_deterministic() {
        let logs = vec![mixed_log(1), mixed_log(2)];
        let a = analyze_sessions(&logs, &quick()).unwrap();
        let b = analyze_sessions(&logs, &quick()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.sessions.len(), 2);
        assert!(a.skew_realized.is_some() && a.skew_bare.is_some());
        assert!(a.sync.iter().any(|s| s.label == "all"));
    }

    #[test]
    fn buy_and_hold_realized_skew_equals_bare() {
        let c = MarketConfig { depth_n: 5, seed: 9, ..Default::default() };
        let mut agents: Vec<Box<dyn Agent>> = (0..5).map(|_| Box::new(BuyAndHold) as Box<dyn Agent>).collect();
        let log = run_session(&c, &mut agents).unwrap();
        let r = analyze_session(&log, 0, &quick()).unwrap();
        let (a, b) = (r.skew_realized.unwrap(), r.skew_bare.unwrap());
        for (x, y) in a.skew_combined.iter().zip(&b.skew_combined) {
            assert!((x - y).abs() < 1e-9);
        }
        // nobody trades after entry: synchronization is undefined and noted
        assert!(r.notes.iter().any(|n| n.starts_with("sync all")));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(analyze_sessions(&[], &quick()).is_err());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = analyze_sessions(&[mixed_log(3)], &quick()).unwrap();
        let files = write_report(&report, dir.path()).unwrap();
        assert!(files.contains(&"report.json".to_string()));
        let skew = std::fs::read_to_string(dir.path().join("plot_skewness.csv")).unwrap();
        assert_eq!(skew.lines().count(), 1 + 2 * 5);
        assert!(skew.contains("\nBARE,1,"));
    }
}
