//! CSV writers for traces, batch summaries and regret curves.

use std::io::Write;

use crate::error::Result;
use crate::sim::episode::EpisodeTrace;
use crate::sim::regret::fit_regret_exponent;

/// Burn-in fraction used for per-run exponent fits.
pub const SUMMARY_BURN_IN: f64 = 0.1;

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per step: `t, x_i…, u_j…, cost, cum_regret, switch, beta, mode`.
pub fn write_trace_csv<W: Write>(trace: &EpisodeTrace, mut out: W) -> Result<()> {
    let Some(first) = trace.steps.first() else {
        writeln!(out, "t,cost,cum_regret,switch,beta,mode")?;
        return Ok(());
    };
    let (n, m) = (first.x.len(), first.u.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|j| format!("u_{j}")));
    header.extend(["cost", "cum_regret", "switch", "beta", "mode"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    let regret = trace.cumulative_regret();
    for (step, r) in trace.steps.iter().zip(regret) {
        let mut row = vec![step.t.to_string()];
        row.extend(step.x.iter().map(|&v| f(v)));
        row.extend(step.u.iter().map(|&v| f(v)));
        row.push(f(step.cost));
        row.push(f(r));
        row.push(u8::from(step.switched).to_string());
        row.push(f(step.radius));
        row.push(trace.mode.clone());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run: usize,
    pub seed: u64,
    pub terminal_regret: f64,
    /// `None` when the run's curve has no usable power-law fit.
    pub exponent: Option<f64>,
    pub switches: usize,
    pub held: usize,
    pub aborted: Option<String>,
}

impl SummaryRow {
    pub fn from_trace(run: usize, trace: &EpisodeTrace) -> Self {
        Self {
            run,
            seed: trace.seed,
            terminal_regret: trace.terminal_regret(),
            exponent: fit_regret_exponent(&trace.cumulative_regret(), SUMMARY_BURN_IN)
                .ok()
                .map(|fit| fit.exponent),
            switches: trace.switch_count(),
            held: trace.held_steps.len(),
            aborted: trace.aborted.as_ref().map(|e| e.to_string()),
        }
    }
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> Result<()> {
    writeln!(out, "run,seed,terminal_regret,exponent,switches,held,aborted")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.run,
            r.seed,
            f(r.terminal_regret),
            r.exponent.map(f).unwrap_or_default(),
            r.switches,
            r.held,
            csv_text(r.aborted.as_deref().unwrap_or("")),
        )?;
    }
    Ok(())
}

/// Pointwise mean and sample standard deviation of the completed runs'
/// cumulative regret, in seed order.
pub fn regret_band(traces: &[EpisodeTrace]) -> (Vec<f64>, Vec<f64>) {
    let mut done: Vec<&EpisodeTrace> = traces.iter().filter(|t| t.completed()).collect();
    done.sort_by_key(|t| t.seed);
    let curves: Vec<Vec<f64>> = done.iter().map(|t| t.cumulative_regret()).collect();
    let Some(len) = curves.first().map(Vec::len) else {
        return (Vec::new(), Vec::new());
    };
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for i in 0..len {
        let mu = curves.iter().map(|c| c[i]).sum::<f64>() / k;
        let var = if curves.len() > 1 {
            curves.iter().map(|c| (c[i] - mu).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        mean.push(mu);
        std.push(var.sqrt());
    }
    (mean, std)
}

/// `t, mean, std` columns for any number of labelled curves.
pub fn write_regret_csv<W: Write>(curves: &[(&str, &[f64], &[f64])], mut out: W) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for (label, _, _) in curves {
        header.push(format!("{label}_mean"));
        header.push(format!("{label}_std"));
    }
    writeln!(out, "{}", header.join(","))?;
    let len = curves.iter().map(|c| c.1.len()).max().unwrap_or(0);
    for t in 0..len {
        let mut row = vec![t.to_string()];
        for (_, mean, std) in curves {
            row.push(mean.get(t).map(|&v| f(v)).unwrap_or_default());
            row.push(std.get(t).map(|&v| f(v)).unwrap_or_default());
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackPlan;
    use crate::controller::ControllerMode;
    use crate::sim::episode::run_episode;
    use crate::sim::episode::tests::paper_config;

    fn trace(seed: u64) -> EpisodeTrace {
        run_episode(&paper_config(ControllerMode::OracleClean, AttackPlan::none(), 20), seed).unwrap()
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let tr = trace(1);
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_0,u_0,cost,cum_regret,switch,beta,mode");
        assert_eq!(lines.len(), tr.steps.len() + 1);
        let row: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[0], "0");
        assert_eq!(row[5], "1");
        assert_eq!(row[7], "oracle_clean");
        let x: f64 = row[1].parse().unwrap();
        assert_eq!(x, tr.steps[0].x[0]);
    }

    #[test]
    fn summary_quotes_error_text() {
        let rows = vec![SummaryRow {
            run: 0,
            seed: 9,
            terminal_regret: 1.5,
            exponent: None,
            switches: 3,
            held: 0,
            aborted: Some("bad, \"very\"".into()),
        }];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "0,9,1.5000000000000000e0,,3,0,\"bad, \"\"very\"\"\""
        );
    }

    #[test]
    fn band_of_one_trace_has_zero_width() {
        let tr = trace(2);
        let (mean, std) = regret_band(std::slice::from_ref(&tr));
        assert_eq!(mean, tr.cumulative_regret());
        assert!(std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn band_matches_two_point_formula() {
        let (a, b) = (trace(3), trace(4));
        let (mean, std) = regret_band(&[b.clone(), a.clone()]);
        let (ra, rb) = (a.cumulative_regret(), b.cumulative_regret());
        let t = ra.len() - 1;
        assert!((mean[t] - (ra[t] + rb[t]) / 2.0).abs() < 1e-12);
        assert!((std[t] - (ra[t] - rb[t]).abs() / 2f64.sqrt()).abs() < 1e-12);
    }
}
