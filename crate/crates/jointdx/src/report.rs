//! Results table: one row per (metric, model) with the mean and population
//! standard deviation across splits.

use jointdx_core::metrics::MetricsReport;

pub const CSV_HEADER: [&str; 4] = ["metric", "model", "mean", "std"];

/// CSV text with a header and 16 rows in fixed metric-major order. Numbers
/// use shortest round-trip formatting, so identical results give identical
/// bytes.
pub fn results_csv(report: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in &report.rows {
        w.write_record([
            report.metric_label(row.metric),
            row.model.label().to_string(),
            row.mean.to_string(),
            row.std.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Human-readable layout of the same numbers: metrics down, models across.
pub fn results_table(report: &MetricsReport) -> String {
    use jointdx_core::metrics::{Metric, ModelName};
    let mut out = format!("{:<16}", "");
    for m in ModelName::ALL {
        out += &format!("{:>20}", m.label());
    }
    out.push('\n');
    for metric in Metric::ALL {
        out += &format!("{:<16}", report.metric_label(metric));
        for model in ModelName::ALL {
            let r = report.get(metric, model);
            out += &format!("{:>20}", format!("{:.3} ± {:.3}", r.mean, r.std));
        }
        out.push('\n');
    }
    out
}
