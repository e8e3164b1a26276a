//! Text and CSV rendering of smoothness reports.

use std::fmt::Write as _;

use rail_sim::metrics::{DerivativeSource, SwitchJump};
use rail_sim::trace::fmt_g9;
use rail_sim::SmoothnessReport;

pub struct Entry {
    pub name: String,
    pub report: SmoothnessReport,
    pub jumps: Vec<SwitchJump>,
}

fn source_name(s: DerivativeSource) -> &'static str {
    match s {
        DerivativeSource::Analytic => "analytic",
        DerivativeSource::FiniteDifference => "fd",
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn sci(x: f64) -> String {
    format!("{x:.4e}")
}

pub fn render(entries: &[Entry]) -> String {
    let mut rows =
        vec![["trace", "strategy", "derivs", "windows", "pos_std", "vel_std", "acc_std", "switches", "max_jump"]
            .map(String::from)
            .to_vec()];
    for e in entries {
        let r = &e.report;
        let max_jump = r.max_switch_jump.iter().cloned().fold(0.0, f64::max);
        rows.push(vec![
            e.name.clone(),
            r.strategy.map_or("?".into(), |s| s.to_string()),
            source_name(r.source).into(),
            r.windows.len().to_string(),
            sci(r.mean_position_std),
            sci(r.mean_velocity_std),
            sci(r.mean_acceleration_std),
            e.jumps.len().to_string(),
            sci(max_jump),
        ]);
    }
    let mut out = table(&rows);
    if let [a, b] = entries {
        let ratio = |x: f64, y: f64| {
            if y > 0.0 {
                format!("{:.4}", x / y)
            } else {
                "-".into()
            }
        };
        let _ = writeln!(
            out,
            "\nacc_std ratio (first/second): {}   vel_std ratio: {}",
            ratio(a.report.mean_acceleration_std, b.report.mean_acceleration_std),
            ratio(a.report.mean_velocity_std, b.report.mean_velocity_std)
        );
    }
    for e in entries {
        let _ = writeln!(out, "\n{}: per-window std (channel-mean)", e.name);
        let mut rows = vec![["start", "samples", "pos", "vel", "acc"].map(String::from).to_vec()];
        for w in &e.report.windows {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            rows.push(vec![
                format!("{:.3}", w.start),
                w.samples.to_string(),
                sci(mean(&w.position)),
                sci(mean(&w.velocity)),
                sci(mean(&w.acceleration)),
            ]);
        }
        out.push_str(&table(&rows));
    }
    out
}

/// `trace,window_start,channel,samples,pos_std,vel_std,acc_std`.
pub fn windows_csv(entries: &[Entry]) -> String {
    let mut out = String::from("trace,window_start,channel,samples,pos_std,vel_std,acc_std\n");
    for e in entries {
        for w in &e.report.windows {
            for c in 0..w.position.len() {
                let _ = writeln!(
                    out,
                    "{},{},{c},{},{},{},{}",
                    e.name.replace(',', "_"),
                    fmt_g9(w.start),
                    w.samples,
                    fmt_g9(w.position[c]),
                    fmt_g9(w.velocity[c]),
                    fmt_g9(w.acceleration[c]),
                );
            }
        }
    }
    out
}
