//! Aggregated experiment reports and their CSV / markdown rendering.

use serde::{Deserialize, Serialize};

use super::{log10_sum, Classification, EmbeddingErrorStat, Share, Verifiability};
use crate::geometry::{log_volume, AxisRect, Subspace};
use crate::scalar::Scalar;

/// Volumes in log10; `None` when no subspace has positive volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSummary {
    /// log10 of the mean linear volume.
    pub avg_log10: Option<f64>,
    pub total_log10: Option<f64>,
    /// log10 of total volume over the reference rect volume.
    pub coverage_log10: Option<f64>,
}

impl VolumeSummary {
    pub fn of<T: Scalar>(subs: &[Subspace<T>], global: Option<&AxisRect<T>>) -> Self {
        let vols: Vec<f64> = subs.iter().map(|s| s.log_volume().log10.to_f()).collect();
        let total = log10_sum(&vols);
        let finite = |v: f64| v.is_finite().then_some(v);
        let coverage = global.and_then(|g| {
            let g = log_volume(g);
            (!g.degenerate).then(|| total - g.log10.to_f())
        });
        VolumeSummary {
            avg_log10: finite(total - (subs.len().max(1) as f64).log10()),
            total_log10: finite(total),
            coverage_log10: coverage.and_then(finite),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub subspaces: usize,
    pub volume: VolumeSummary,
    pub verifiability: Verifiability,
    pub generalisability: Option<Share>,
    pub embedding_error: Option<EmbeddingErrorStat>,
    pub false_positives: Option<Share>,
    pub classification: Option<Classification>,
}

/// Three significant figures by default, e.g. `1.00e-60`; `0` for `−∞`.
pub fn format_sci(log10: f64, sig: usize) -> String {
    if log10 == f64::NEG_INFINITY {
        return "0".into();
    }
    let sig = sig.max(1);
    let mut exp = log10.floor();
    let scale = 10f64.powi(sig as i32 - 1);
    let mut mantissa = (10f64.powf(log10 - exp) * scale).round() / scale;
    if mantissa >= 10.0 {
        mantissa /= 10.0;
        exp += 1.0;
    }
    format!("{mantissa:.prec$}e{exp}", prec = sig - 1, exp = exp as i64)
}

pub fn format_percent(p: f64, decimals: usize) -> String {
    format!("{p:.decimals$}")
}

const COLUMNS: [&str; 16] = [
    "experiment",
    "count",
    "avg_volume",
    "total_volume",
    "coverage",
    "verifiability",
    "verified",
    "falsified",
    "unknown",
    "generalisability",
    "embedding_error",
    "false_positives",
    "accuracy",
    "precision",
    "recall",
    "f1",
];

fn cells(r: &MetricsReport) -> Vec<String> {
    let sci = |v: Option<f64>| v.map(|v| format_sci(v, 3)).unwrap_or_default();
    let pct = |v: Option<f64>| v.map(|v| format_percent(v, 2)).unwrap_or_default();
    let cls = |f: fn(&Classification) -> f64| r.classification.as_ref().map(|c| format_percent(100.0 * f(c), 2)).unwrap_or_default();
    vec![
        r.experiment.clone(),
        r.subspaces.to_string(),
        sci(r.volume.avg_log10),
        sci(r.volume.total_log10),
        sci(r.volume.coverage_log10),
        format_percent(r.verifiability.percent, 2),
        r.verifiability.verified.to_string(),
        r.verifiability.falsified.to_string(),
        r.verifiability.unknown.to_string(),
        pct(r.generalisability.as_ref().map(|s| s.percent)),
        pct(r.embedding_error.as_ref().map(|s| s.percent)),
        pct(r.false_positives.as_ref().map(|s| s.percent)),
        cls(|c| c.accuracy),
        cls(|c| c.precision),
        cls(|c| c.recall),
        cls(|c| c.f1),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per report; percentages with two decimals, volumes in
/// scientific notation.
pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        out.push_str(&cells(r).iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn render_markdown(reports: &[MetricsReport]) -> String {
    let mut out = format!("| {} |\n", COLUMNS.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
    for r in reports {
        let row: Vec<String> = cells(r).iter().map(|c| c.replace('|', "\\|")).collect();
        out.push_str(&format!("| {} |\n", row.join(" | ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::geometry::{eps_cube, SubspaceMeta};
    use crate::metrics::verifiability;
    use crate::verify::Outcome;

    #[test]
    fn scientific_format() {
        assert_eq!(format_sci(-60.0, 3), "1.00e-60");
        assert_eq!(format_sci(-30.0, 3), "1.00e-30");
        assert_eq!(format_sci(-60.000_000_000_001, 3), "1.00e-60");
        assert_eq!(format_sci(6.14e-5f64.log10(), 3), "6.14e-5");
        assert_eq!(format_sci((2.89e-57f64 / 6.14e-5).log10(), 3), "4.71e-53");
        assert_eq!(format_sci(0.0, 3), "1.00e0");
        assert_eq!(format_sci(f64::NEG_INFINITY, 3), "0");
    }

    fn report() -> MetricsReport {
        let cube = eps_cube(&[0.0; 30], 0.005).unwrap();
        let subs = vec![Subspace::axis_aligned(Label::Pos, cube, SubspaceMeta::default()); 4];
        MetricsReport {
            experiment: "eps, 0.005".into(),
            subspaces: 4,
            volume: VolumeSummary::of(&subs, None),
            verifiability: verifiability(&[Outcome::Verified, Outcome::Unknown, Outcome::Verified, Outcome::Verified]).unwrap(),
            generalisability: Some(Share {
                percent: 12.5,
                hits: 1,
                total: 8,
            }),
            embedding_error: None,
            false_positives: None,
            classification: None,
        }
    }

    #[test]
    fn renders_tables() {
        let csv = render_csv(&[report()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0].split(',').count(), COLUMNS.len());
        assert!(lines[1].starts_with("\"eps, 0.005\",4,1.00e-60,4.00e-60,,75.00,3,0,1,12.50,,,"));
        let md = render_markdown(&[report()]);
        assert_eq!(md.lines().count(), 3);
        assert!(md.lines().nth(1).unwrap().starts_with("|---|"));
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), r);
    }
}
