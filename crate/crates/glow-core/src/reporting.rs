//! Metrics persistence and summaries.
//!
//! Every run emits a stream of per-round `MetricsRecord`s. This module
//! writes them as CSV, folds them into a summary (averages over connected
//! agents only), and draws a loss-per-round SVG with role-coded colors.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{AgentId, AgentProfile, Role};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no metrics records to summarize")]
    EmptyMetrics,
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One evaluation sample: agent state at the end of a communication round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub round: u32,
    pub agent: AgentId,
    pub role: Role,
    pub loss: f64,
    pub accuracy: f64,
}

/// Which of the three systems produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SystemKind {
    Cnl,
    Fl,
    Glow,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Cnl => "cnl",
            SystemKind::Fl => "fl",
            SystemKind::Glow => "glow",
        })
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnl" => Ok(SystemKind::Cnl),
            "fl" => Ok(SystemKind::Fl),
            "glow" => Ok(SystemKind::Glow),
            other => Err(format!("unknown system `{other}`")),
        }
    }
}

/// Run-level context carried into the summary.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub system: SystemKind,
    pub dataset: String,
    /// Topology label for glow runs, "-" otherwise.
    pub topology: String,
    /// "8+2"-style connected+disconnected notation for glow, a plain agent
    /// count for fl, "-" for cnl.
    pub agent_notation: String,
    /// None for cnl, which only has a total epoch count.
    pub communication_rounds: Option<u32>,
    pub local_epochs: u32,
}

/// Accuracy statistics over one agent group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupStats {
    pub avg_accuracy: f64,
    /// Population variance of the group's final accuracies.
    pub variance: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentSummary {
    pub agent: usize,
    pub role: String,
    pub loss: f64,
    pub accuracy: f64,
}

/// Final-round digest of one run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryReport {
    pub system: String,
    pub dataset: String,
    pub topology: String,
    pub agent_notation: String,
    pub communication_rounds: Option<u32>,
    pub local_epochs: u32,
    pub final_round: u32,
    /// Accuracy stats over the connected agents (roles R and E); absent when
    /// the run has no connected agents.
    pub connected: Option<GroupStats>,
    pub variance_kind: String,
    pub note: Option<String>,
    pub per_agent: Vec<AgentSummary>,
}

/// Fold metrics into the final-round summary. Averages and variances cover
/// connected agents only (roles R and E); disconnected agents are listed
/// per-agent but excluded from the group stats.
pub fn summarize(
    metrics: &[MetricsRecord],
    profiles: &[AgentProfile],
    meta: &RunMeta,
) -> Result<SummaryReport, ReportError> {
    let final_round = metrics
        .iter()
        .map(|m| m.round)
        .max()
        .ok_or(ReportError::EmptyMetrics)?;
    let mut finals: Vec<&MetricsRecord> =
        metrics.iter().filter(|m| m.round == final_round).collect();
    finals.sort_by_key(|m| m.agent);

    let is_connected = |rec: &MetricsRecord| -> bool {
        profiles
            .iter()
            .find(|p| p.id == rec.agent)
            .map(|p| p.is_connected)
            .unwrap_or_else(|| rec.role.is_connected())
    };

    let connected_accs: Vec<f64> = finals
        .iter()
        .filter(|m| is_connected(m))
        .map(|m| m.accuracy)
        .collect();
    let (connected, note) = if connected_accs.is_empty() {
        (None, Some("no GL group".to_string()))
    } else {
        let n = connected_accs.len() as f64;
        let avg = connected_accs.iter().sum::<f64>() / n;
        let variance = connected_accs
            .iter()
            .map(|a| (a - avg) * (a - avg))
            .sum::<f64>()
            / n;
        (
            Some(GroupStats {
                avg_accuracy: avg,
                variance,
                count: connected_accs.len(),
            }),
            None,
        )
    };

    Ok(SummaryReport {
        system: meta.system.to_string(),
        dataset: meta.dataset.clone(),
        topology: meta.topology.clone(),
        agent_notation: meta.agent_notation.clone(),
        communication_rounds: meta.communication_rounds,
        local_epochs: meta.local_epochs,
        final_round,
        connected,
        variance_kind: "population".to_string(),
        note,
        per_agent: finals
            .iter()
            .map(|m| AgentSummary {
                agent: m.agent.0,
                role: m.role.code().to_string(),
                loss: m.loss,
                accuracy: m.accuracy,
            })
            .collect(),
    })
}

/// Write metrics as `round,agent,role,loss,accuracy` with six decimals.
pub fn write_metrics_csv(
    metrics: &[MetricsRecord],
    path: impl AsRef<Path>,
) -> Result<(), ReportError> {
    let mut out = String::from("round,agent,role,loss,accuracy\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            m.round, m.agent, m.role, m.loss, m.accuracy
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a metrics CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>, ReportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| ReportError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "round,agent,role,loss,accuracy" => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(
                lineno,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let parse = |what: &str, s: &str| -> Result<f64, ReportError> {
            s.parse()
                .map_err(|_| err(lineno, format!("invalid {what} `{s}`")))
        };
        records.push(MetricsRecord {
            round: fields[0]
                .parse()
                .map_err(|_| err(lineno, format!("invalid round `{}`", fields[0])))?,
            agent: AgentId(
                fields[1]
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid agent `{}`", fields[1])))?,
            ),
            role: fields[2].parse().map_err(|e: String| err(lineno, e))?,
            loss: parse("loss", fields[3])?,
            accuracy: parse("accuracy", fields[4])?,
        });
    }
    Ok(records)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Write the summary as pretty JSON, numbers rounded to six decimals.
pub fn write_summary_json(
    report: &SummaryReport,
    path: impl AsRef<Path>,
) -> Result<(), ReportError> {
    let mut rounded = report.clone();
    if let Some(stats) = &mut rounded.connected {
        stats.avg_accuracy = round6(stats.avg_accuracy);
        stats.variance = round6(stats.variance);
    }
    for a in &mut rounded.per_agent {
        a.loss = round6(a.loss);
        a.accuracy = round6(a.accuracy);
    }
    let mut text = serde_json::to_string_pretty(&rounded)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary_json(path: impl AsRef<Path>) -> Result<SummaryReport, ReportError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn role_palette(role: Role) -> &'static [&'static str] {
    match role {
        Role::Regular => &[
            "#1f77b4", "#5e35b1", "#3949ab", "#7e57c2", "#2962ff", "#4527a0", "#283593", "#6200ea",
            "#0d47a1", "#311b92", "#1a237e", "#512da8", "#0277bd",
        ],
        Role::Disconnected => &["#66bb6a", "#2e7d32", "#9ccc65", "#1b5e20"],
        Role::Empty => &["#fb8c00", "#fdd835", "#ef6c00", "#f9a825", "#ffb300"],
        Role::EmptyDisconnected => &["#e53935", "#8e0000", "#c62828", "#b71c1c"],
    }
}

/// Draw one loss-vs-round polyline per agent into a standalone SVG.
/// Colors follow the role groups: R blue/purple, D green, E orange/yellow,
/// ED red.
pub fn emit_plot_svg(metrics: &[MetricsRecord], path: impl AsRef<Path>) -> Result<(), ReportError> {
    const W: f64 = 860.0;
    const H: f64 = 520.0;
    const X0: f64 = 64.0;
    const X1: f64 = 650.0;
    const Y0: f64 = 20.0;
    const Y1: f64 = 470.0;

    // Per-agent series, sorted by agent id then round.
    let mut agents: Vec<AgentId> = metrics.iter().map(|m| m.agent).collect();
    agents.sort();
    agents.dedup();

    let r_min = metrics.iter().map(|m| m.round).min().unwrap_or(1);
    let r_max = metrics.iter().map(|m| m.round).max().unwrap_or(1);
    let loss_max = metrics
        .iter()
        .map(|m| m.loss)
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;

    let x_of = |round: u32| -> f64 {
        if r_max == r_min {
            (X0 + X1) / 2.0
        } else {
            X0 + (round - r_min) as f64 / (r_max - r_min) as f64 * (X1 - X0)
        }
    };
    let y_of = |loss: f64| -> f64 { Y1 - loss / loss_max * (Y1 - Y0) };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{X0}\" y1=\"{Y1}\" x2=\"{X1}\" y2=\"{Y1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{X0}\" y1=\"{Y0}\" x2=\"{X0}\" y2=\"{Y1}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">communication round</text>\n",
        (X0 + X1) / 2.0,
        H - 6.0
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">loss</text>\n",
        (Y0 + Y1) / 2.0,
        (Y0 + Y1) / 2.0
    ));
    // Y ticks.
    for i in 0..=5 {
        let v = loss_max * i as f64 / 5.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{X0}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            X0 - 4.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>\n",
            X0 - 7.0,
            y + 4.0
        ));
    }
    // X ticks: at most 12 integer rounds.
    let span = (r_max - r_min).max(1);
    let stride = (span as usize / 12 + 1) as u32;
    let mut r = r_min;
    while r <= r_max {
        let x = x_of(r);
        svg.push_str(&format!(
            "  <line x1=\"{x:.1}\" y1=\"{Y1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            Y1 + 4.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{r}</text>\n",
            Y1 + 16.0
        ));
        r += stride;
    }

    // Track per-role rank so each agent in a group gets its own shade.
    let mut role_rank: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut legend_y = Y0 + 10.0;
    for agent in agents {
        let mut series: Vec<&MetricsRecord> = metrics.iter().filter(|m| m.agent == agent).collect();
        series.sort_by_key(|m| m.round);
        let role = series[0].role;
        let rank = role_rank.entry(role.code()).or_insert(0);
        let color = role_palette(role)[*rank % role_palette(role).len()];
        *rank += 1;

        let points: Vec<String> = series
            .iter()
            .map(|m| format!("{:.1},{:.1}", x_of(m.round), y_of(m.loss)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{legend_y:.1}\" x2=\"{:.1}\" y2=\"{legend_y:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            X1 + 16.0,
            X1 + 40.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">agent {agent} ({})</text>\n",
            X1 + 46.0,
            legend_y + 4.0,
            role.code()
        ));
        legend_y += 18.0;
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(round: u32, agent: usize, role: Role, loss: f64, accuracy: f64) -> MetricsRecord {
        MetricsRecord {
            round,
            agent: AgentId(agent),
            role,
            loss,
            accuracy,
        }
    }

    fn meta() -> RunMeta {
        RunMeta {
            system: SystemKind::Glow,
            dataset: "synthetic".into(),
            topology: "topo2".into(),
            agent_notation: "2+2".into(),
            communication_rounds: Some(3),
            local_epochs: 4,
        }
    }

    #[test]
    fn uniform_connected_accuracy_gives_zero_variance() {
        let metrics = vec![
            rec(1, 0, Role::Regular, 1.0, 0.5),
            rec(2, 0, Role::Regular, 0.5, 0.9),
            rec(2, 1, Role::Empty, 0.6, 0.9),
        ];
        let report = summarize(&metrics, &[], &meta()).unwrap();
        let stats = report.connected.unwrap();
        assert_eq!(stats.avg_accuracy, 0.9);
        assert_eq!(stats.variance, 0.0);
        assert_eq!(stats.count, 2);
        assert_eq!(report.final_round, 2);
    }

    #[test]
    fn two_agent_variance_matches_hand_arithmetic() {
        // Population variance of {0.6, 0.8}: mean 0.7, variance 0.01.
        let metrics = vec![
            rec(1, 0, Role::Regular, 0.1, 0.6),
            rec(1, 1, Role::Regular, 0.1, 0.8),
        ];
        let report = summarize(&metrics, &[], &meta()).unwrap();
        let stats = report.connected.unwrap();
        assert!((stats.avg_accuracy - 0.7).abs() < 1e-12);
        assert!((stats.variance - 0.01).abs() < 1e-12);
    }

    #[test]
    fn disconnected_only_metrics_report_no_gl_group() {
        let metrics = vec![
            rec(1, 0, Role::Disconnected, 0.1, 0.9),
            rec(1, 1, Role::EmptyDisconnected, 2.3, 0.1),
        ];
        let report = summarize(&metrics, &[], &meta()).unwrap();
        assert!(report.connected.is_none());
        assert_eq!(report.note.as_deref(), Some("no GL group"));
        assert_eq!(report.per_agent.len(), 2);
    }

    #[test]
    fn summarize_is_permutation_invariant() {
        let mut metrics = vec![
            rec(1, 0, Role::Regular, 1.0, 0.3),
            rec(1, 1, Role::Empty, 1.2, 0.2),
            rec(2, 1, Role::Empty, 1.0, 0.4),
            rec(2, 0, Role::Regular, 0.8, 0.6),
        ];
        let a = summarize(&metrics, &[], &meta()).unwrap();
        metrics.reverse();
        let b = summarize(&metrics, &[], &meta()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summarize_rejects_empty_metrics() {
        assert!(matches!(
            summarize(&[], &[], &meta()),
            Err(ReportError::EmptyMetrics)
        ));
    }

    #[test]
    fn csv_round_trips_and_counts_rows() {
        let metrics = vec![
            rec(1, 0, Role::Regular, 1.25, 0.125),
            rec(1, 1, Role::EmptyDisconnected, 2.302585, 0.1),
            rec(2, 0, Role::Regular, 0.75, 0.5),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&metrics, &path).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), metrics.len() + 1);

        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back.len(), metrics.len());
        for (a, b) in metrics.iter().zip(&back) {
            assert_eq!(a.round, b.round);
            assert_eq!(a.agent, b.agent);
            assert_eq!(a.role, b.role);
            assert!((a.loss - b.loss).abs() < 5e-7);
            assert!((a.accuracy - b.accuracy).abs() < 5e-7);
        }

        // Rewriting the parsed records reproduces the same bytes.
        let path2 = dir.path().join("metrics2.csv");
        write_metrics_csv(&back, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn csv_parse_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            "round,agent,role,loss,accuracy\n1,0,R,0.5,0.5\n2,zero,R,1,1\n",
        )
        .unwrap();
        match read_metrics_csv(&path).unwrap_err() {
            ReportError::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("agent"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_json_round_trips() {
        let metrics = vec![
            rec(1, 0, Role::Regular, 1.0, 0.123456789),
            rec(1, 1, Role::Disconnected, 1.5, 0.2),
        ];
        let report = summarize(&metrics, &[], &meta()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        write_summary_json(&report, &path).unwrap();
        let back = read_summary_json(&path).unwrap();
        assert_eq!(back.system, "glow");
        assert_eq!(back.per_agent[0].accuracy, 0.123457);
        assert_eq!(back.variance_kind, "population");
    }

    #[test]
    fn svg_has_one_polyline_per_agent() {
        let metrics = vec![
            rec(1, 0, Role::Regular, 1.0, 0.5),
            rec(2, 0, Role::Regular, 0.8, 0.6),
            rec(1, 1, Role::Empty, 1.2, 0.3),
            rec(2, 1, Role::Empty, 1.1, 0.4),
            rec(1, 2, Role::EmptyDisconnected, 2.3, 0.1),
            rec(2, 2, Role::EmptyDisconnected, 2.3, 0.1),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.svg");
        emit_plot_svg(&metrics, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 3);
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
