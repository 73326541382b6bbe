//! Report generation: per-request rows, per-stage summaries, expectation
//! checks and the benchmark breakdown tables.
//!
//! All numbers are rendered from integer microseconds with fixed
//! precision, so identical runs produce byte-identical reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;
use std::str::FromStr;

use blendcac_core::enforcement::Stage;
use blendcac_core::Micros;
use serde::Serialize;

use crate::config::{Expectation, ExpectedDecision};
use crate::measure::{Measurement, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format {other:?} (expected csv or text)")),
        }
    }
}

fn ms(m: Micros) -> String {
    format!("{:.3}", m.as_ms_f64())
}

fn ms_f(v: f64) -> String {
    format!("{v:.3}")
}

/// Mean and median of a sample, in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
}

impl Stats {
    pub fn of(values: &[Micros]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v: Vec<u64> = values.iter().map(|m| m.0).collect();
        v.sort_unstable();
        let sum: u128 = v.iter().map(|&x| x as u128).sum();
        let n = v.len();
        let median_us = if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0
        };
        Some(Stats {
            count: n,
            mean_ms: sum as f64 / n as f64 / 1000.0,
            median_ms: median_us / 1000.0,
        })
    }
}

/// Components a summary reports, in output order.
pub const COMPONENTS: [&str; 8] = [
    "identity_auth",
    "token_fetch",
    "token_status",
    "rule_match",
    "condition_check",
    "transport",
    "handling",
    "total",
];

fn component(m: &Measurement, name: &str) -> Option<Micros> {
    match name {
        "transport" => Some(m.trace.transport),
        "handling" => Some(m.trace.handling),
        "total" => Some(m.total),
        stage => Stage::PIPELINE
            .iter()
            .find(|s| s.as_str() == stage)
            .and_then(|s| m.trace.duration_of(*s)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub requests: usize,
    pub granted: usize,
    pub denied: usize,
    pub timed_out: usize,
    pub cache_hits: usize,
    /// Steady-state statistics per component, access-controlled requests only.
    pub components: Vec<(String, Stats)>,
    /// Mean total of the first request of each (requester, provider) pair.
    pub first_request: Option<Stats>,
    pub steady_state: Option<Stats>,
    /// Share of the steady-state mean total spent in pipeline stages.
    pub ac_share: Option<f64>,
    /// Steady-state totals of requests served without access control.
    pub baseline: Option<Stats>,
    /// Steady-state mean with access control minus the baseline mean.
    pub overhead_ms: Option<f64>,
}

/// Splits completed measurements into first-per-pair and the rest.
fn split_first(ms: &[&Measurement]) -> (Vec<Micros>, Vec<Micros>) {
    let mut seen = BTreeSet::new();
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for m in ms {
        if seen.insert((m.requester.as_str(), m.provider.as_str())) {
            first.push(m.total);
        } else {
            rest.push(m.total);
        }
    }
    (first, rest)
}

impl Summary {
    pub fn of(measurements: &[Measurement]) -> Summary {
        let completed: Vec<&Measurement> = measurements.iter().filter(|m| m.completed()).collect();
        let ac: Vec<&Measurement> = completed.iter().copied().filter(|m| m.access_control).collect();
        let base: Vec<&Measurement> = completed.iter().copied().filter(|m| !m.access_control).collect();

        let mut seen = BTreeSet::new();
        let steady: Vec<&Measurement> = ac
            .iter()
            .copied()
            .filter(|m| !seen.insert((m.requester.as_str(), m.provider.as_str())))
            .collect();
        let components = COMPONENTS
            .iter()
            .filter_map(|c| {
                let vals: Vec<Micros> = steady.iter().filter_map(|m| component(m, c)).collect();
                Stats::of(&vals).map(|s| (c.to_string(), s))
            })
            .collect();

        let (first, rest) = split_first(&ac);
        let steady_state = Stats::of(&rest);
        let stage_sum: u128 = steady.iter().map(|m| m.trace.stage_sum().0 as u128).sum();
        let total_sum: u128 = steady.iter().map(|m| m.total.0 as u128).sum();
        let ac_share = (total_sum > 0).then(|| stage_sum as f64 / total_sum as f64);
        let (_, base_rest) = split_first(&base);
        let baseline = Stats::of(&base_rest);
        let overhead_ms = match (&steady_state, &baseline) {
            (Some(a), Some(b)) => Some(a.mean_ms - b.mean_ms),
            _ => None,
        };

        Summary {
            requests: measurements.len(),
            granted: measurements.iter().filter(|m| m.outcome.is_grant()).count(),
            denied: measurements.iter().filter(|m| matches!(m.outcome, Outcome::Denied { .. })).count(),
            timed_out: measurements.iter().filter(|m| !m.completed()).count(),
            cache_hits: measurements.iter().filter(|m| m.cache_hit).count(),
            components,
            first_request: Stats::of(&first),
            steady_state,
            ac_share,
            baseline,
            overhead_ms,
        }
    }

    /// `(metric, value)` pairs in a fixed order.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("requests".to_string(), self.requests.to_string()),
            ("granted".into(), self.granted.to_string()),
            ("denied".into(), self.denied.to_string()),
            ("timed_out".into(), self.timed_out.to_string()),
            ("cache_hits".into(), self.cache_hits.to_string()),
        ];
        for (name, s) in &self.components {
            out.push((format!("{name}.mean_ms"), ms_f(s.mean_ms)));
            out.push((format!("{name}.median_ms"), ms_f(s.median_ms)));
        }
        let mut opt = |k: &str, v: Option<f64>, digits: usize| {
            out.push((k.to_string(), v.map(|v| format!("{v:.digits$}")).unwrap_or_default()));
        };
        opt("first_request.mean_ms", self.first_request.map(|s| s.mean_ms), 3);
        opt("steady_state.mean_ms", self.steady_state.map(|s| s.mean_ms), 3);
        opt("steady_state.median_ms", self.steady_state.map(|s| s.median_ms), 3);
        opt("ac_share", self.ac_share, 4);
        opt("baseline.mean_ms", self.baseline.map(|s| s.mean_ms), 3);
        opt("overhead_ms", self.overhead_ms, 3);
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        let mut s = String::new();
        match format {
            ReportFormat::Csv => {
                s.push_str("metric,value\n");
                for (k, v) in self.metrics() {
                    let _ = writeln!(s, "{k},{v}");
                }
            }
            ReportFormat::Text => {
                let _ = writeln!(
                    s,
                    "requests: {} (granted {}, denied {}, timed out {}), cache hits: {}",
                    self.requests, self.granted, self.denied, self.timed_out, self.cache_hits
                );
                if !self.components.is_empty() {
                    let _ = writeln!(s, "\nsteady state, access-controlled requests:");
                    let _ = writeln!(s, "  {:<16} {:>10} {:>10}", "component", "mean ms", "median ms");
                    for (name, st) in &self.components {
                        let _ = writeln!(s, "  {:<16} {:>10.3} {:>10.3}", name, st.mean_ms, st.median_ms);
                    }
                }
                s.push('\n');
                if let Some(f) = self.first_request {
                    let _ = writeln!(s, "first request mean:  {:.3} ms", f.mean_ms);
                }
                if let Some(st) = self.steady_state {
                    let _ = writeln!(s, "steady-state mean:   {:.3} ms (median {:.3})", st.mean_ms, st.median_ms);
                }
                if let Some(a) = self.ac_share {
                    let _ = writeln!(s, "access-control share: {:.2}%", a * 100.0);
                }
                if let Some(b) = self.baseline {
                    let _ = writeln!(s, "baseline mean:       {:.3} ms", b.mean_ms);
                }
                if let Some(o) = self.overhead_ms {
                    let _ = writeln!(s, "overhead:            {o:.3} ms");
                }
            }
        }
        s
    }
}

pub const MEASUREMENT_COLUMNS: [&str; 20] = [
    "request_id",
    "label",
    "requester",
    "provider",
    "method",
    "uri",
    "sent_at_ms",
    "decided_at_ms",
    "block_height",
    "cache_hit",
    "outcome",
    "stage",
    "reason",
    "identity_auth_ms",
    "token_fetch_ms",
    "token_status_ms",
    "rule_match_ms",
    "condition_check_ms",
    "transport_ms",
    "total_ms",
];

fn row(m: &Measurement) -> Vec<String> {
    let stage = |s: Stage| m.trace.duration_of(s).map(ms).unwrap_or_default();
    vec![
        m.request_id.to_string(),
        m.label.clone(),
        m.requester.clone(),
        m.provider.clone(),
        m.method.as_str().to_string(),
        m.uri.clone(),
        ms(m.sent_at),
        m.decided_at_ms.map(|d| d.to_string()).unwrap_or_default(),
        m.block_height.to_string(),
        m.cache_hit.to_string(),
        m.outcome.as_str().to_string(),
        m.stage().map(|s| s.as_str().to_string()).unwrap_or_default(),
        m.reason().to_string(),
        stage(Stage::IdentityAuth),
        stage(Stage::TokenFetch),
        stage(Stage::TokenStatus),
        stage(Stage::RuleMatch),
        stage(Stage::ConditionCheck),
        ms(m.trace.transport),
        ms(m.total),
    ]
}

/// Per-request rows, in request order.
pub fn render_measurements(measurements: &[Measurement], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(MEASUREMENT_COLUMNS).expect("in-memory write");
            for m in measurements {
                w.write_record(row(m)).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
        ReportFormat::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:>5}  {:<12} {:<14} {:<14} {:<6} {:<14} {:>9}  {:<8} {:<16} reason",
                "id", "label", "requester", "provider", "method", "uri", "total ms", "outcome", "stage"
            );
            for m in measurements {
                let _ = writeln!(
                    s,
                    "{:>5}  {:<12} {:<14} {:<14} {:<6} {:<14} {:>9}  {:<8} {:<16} {}",
                    m.request_id,
                    m.label,
                    m.requester,
                    m.provider,
                    m.method.as_str(),
                    m.uri,
                    ms(m.total),
                    m.outcome.as_str(),
                    m.stage().map(|s| s.as_str()).unwrap_or("-"),
                    m.reason()
                );
            }
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: String,
    pub summary: Summary,
}

pub fn emit_report(measurements: &[Measurement], format: ReportFormat) -> Report {
    Report {
        rows: render_measurements(measurements, format),
        summary: Summary::of(measurements),
    }
}

/// Stage trace rows for every measurement that reached a provider.
pub fn render_traces(measurements: &[Measurement]) -> String {
    let mut out = Vec::new();
    blendcac_core::enforcement::write_stage_csv(measurements.iter().map(|m| (m.request_id, &m.trace)), &mut out)
        .expect("in-memory write");
    String::from_utf8(out).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectationResult {
    pub index: usize,
    pub label: String,
    pub ok: bool,
    pub detail: String,
}

fn expected_matches(x: &Expectation, m: &Measurement) -> Result<(), String> {
    let decision_ok = match x.decision {
        ExpectedDecision::Grant => m.outcome.is_grant(),
        ExpectedDecision::Deny => matches!(m.outcome, Outcome::Denied { .. }),
        ExpectedDecision::Timeout => !m.completed(),
    };
    if !decision_ok {
        return Err(format!("request {} was {}, expected {:?}", m.request_id, m.outcome.as_str(), x.decision));
    }
    if let Some(stage) = x.stage {
        if m.stage() != Some(stage) {
            return Err(format!("request {} stopped at {:?}, expected {stage}", m.request_id, m.stage()));
        }
    }
    if let Some(reason) = &x.reason {
        if m.reason() != reason {
            return Err(format!("request {} reason {:?}, expected {reason:?}", m.request_id, m.reason()));
        }
    }
    if let Some(hit) = x.cache_hit {
        if m.cache_hit != hit {
            return Err(format!("request {} cache_hit {}, expected {hit}", m.request_id, m.cache_hit));
        }
    }
    Ok(())
}

pub fn check_expectations(expectations: &[Expectation], measurements: &[Measurement]) -> Vec<ExpectationResult> {
    expectations
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let labelled: Vec<&Measurement> = measurements.iter().filter(|m| m.label == x.label).collect();
            let targets: Vec<&Measurement> = match x.index {
                Some(i) => labelled.get(i).copied().into_iter().collect(),
                None => labelled,
            };
            let result = if targets.is_empty() {
                Err(format!("no measurement for label {:?}{}", x.label, x.index.map(|i| format!(" index {i}")).unwrap_or_default()))
            } else {
                targets.iter().try_for_each(|m| expected_matches(x, m)).map(|_| format!("{} request(s) matched", targets.len()))
            };
            let (ok, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            ExpectationResult {
                index,
                label: x.label.clone(),
                ok,
                detail,
            }
        })
        .collect()
}

pub fn render_expectations(results: &[ExpectationResult]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(s, "[{}] expect[{}] {}: {}", if r.ok { "ok" } else { "FAIL" }, r.index, r.label, r.detail);
    }
    s
}

/// Steady-state breakdown rows `profile, component, mean_ms, median_ms`,
/// grouping the pipeline into the token-processing and validation figures
/// of the cost model.
pub fn write_breakdown_csv<W: io::Write>(profile: &str, measurements: &[Measurement], out: W) -> csv::Result<()> {
    let mut seen = BTreeSet::new();
    let steady: Vec<&Measurement> = measurements
        .iter()
        .filter(|m| m.completed() && m.access_control)
        .filter(|m| !seen.insert((m.requester.as_str(), m.provider.as_str())))
        .collect();
    type Pick = fn(&Measurement) -> Micros;
    let groups: [(&str, Pick); 6] = [
        ("transport", |m| m.trace.transport),
        ("identity_auth", |m| m.trace.duration_of(Stage::IdentityAuth).unwrap_or_default()),
        ("token_processing", |m| m.trace.duration_of(Stage::TokenFetch).unwrap_or_default()),
        ("capac_validation", |m| {
            [Stage::TokenFetch, Stage::TokenStatus, Stage::RuleMatch, Stage::ConditionCheck]
                .iter()
                .filter_map(|s| m.trace.duration_of(*s))
                .sum()
        }),
        ("parse_and_service", |m| m.trace.handling),
        ("total", |m| m.total),
    ];
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["profile", "component", "mean_ms", "median_ms"])?;
    for (name, pick) in groups {
        let vals: Vec<Micros> = steady.iter().map(|m| pick(m)).collect();
        if let Some(s) = Stats::of(&vals) {
            w.write_record([profile, name, &ms_f(s.mean_ms), &ms_f(s.median_ms)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Side-by-side per-request totals `request_index, blendcac_ms, baseline_ms`.
pub fn write_comparison_csv<W: io::Write>(with_ac: &[Measurement], baseline: &[Measurement], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["request_index", "blendcac_ms", "baseline_ms"])?;
    let n = with_ac.len().max(baseline.len());
    for i in 0..n {
        let cell = |v: &[Measurement]| v.get(i).map(|m| ms(m.total)).unwrap_or_default();
        w.write_record([i.to_string(), cell(with_ac), cell(baseline)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_mean_and_median() {
        let s = Stats::of(&[Micros(1_000), Micros(3_000), Micros(2_000), Micros(10_000)]).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.mean_ms, 4.0);
        assert_eq!(s.median_ms, 2.5);
        assert_eq!(Stats::of(&[Micros(7)]).unwrap().median_ms, 0.007);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn format_parses() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert_eq!("text".parse::<ReportFormat>().unwrap(), ReportFormat::Text);
        assert!("json".parse::<ReportFormat>().is_err());
    }
}
