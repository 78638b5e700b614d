//! CSV emitters for correlation tables, grouped analyses and plot-ready
//! long-format rows.

use std::io::Write;

use serde::Serialize;

use crate::analyses::{GroupedReport, SourceEntropy, TagMean};
use crate::metrics::CorrelationReport;

pub const CORRELATION_HEADER: [&str; 7] = ["pair", "level", "kind", "rho", "p", "n", "skipped"];

/// Joins a source pair into one CSV cell.
pub fn pair_label(pair: &(String, String)) -> String {
    format!("{}~{}", pair.0, pair.1)
}

#[derive(Serialize)]
struct CorrelationRow {
    pair: String,
    level: String,
    kind: String,
    rho: f64,
    p: f64,
    n: usize,
    skipped: usize,
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    // headers are written explicitly so empty tables still carry them
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

pub fn write_correlation_csv<W: Write>(reports: &[CorrelationReport], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(CORRELATION_HEADER)?;
    for r in reports {
        w.serialize(CorrelationRow {
            pair: pair_label(&r.pair),
            level: r.level.to_string(),
            kind: r.kind.to_string(),
            rho: r.rho,
            p: r.p,
            n: r.n,
            skipped: r.skipped,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GroupedRow {
    grouping: String,
    pair: String,
    kind: String,
    group: String,
    n: usize,
    rho: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    excluded: Option<String>,
}

/// One line per group; excluded groups carry the reason and no rho.
pub fn write_grouped_csv<W: Write>(reports: &[GroupedReport], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["grouping", "pair", "kind", "group", "n", "rho", "lower", "upper", "excluded"])?;
    for r in reports {
        let base = |group: &str, n: usize| GroupedRow {
            grouping: r.grouping.to_string(),
            pair: pair_label(&r.pair),
            kind: r.kind.to_string(),
            group: group.to_string(),
            n,
            rho: None,
            lower: None,
            upper: None,
            excluded: None,
        };
        for g in &r.rows {
            w.serialize(GroupedRow {
                rho: Some(g.rho),
                lower: g.lower,
                upper: g.upper,
                ..base(&g.key, g.n)
            })?;
        }
        for e in &r.excluded {
            w.serialize(GroupedRow {
                excluded: Some(e.reason.clone()),
                ..base(&e.key, e.n)
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub group: String,
    pub source: String,
    pub value: f64,
}

/// Plot-ready `group,source,value` rows.
pub fn write_long_csv<W: Write>(rows: &[LongRow], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["group", "source", "value"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn tag_means_long(source: &str, rows: &[TagMean]) -> Vec<LongRow> {
    rows.iter()
        .map(|r| LongRow {
            group: r.tag.clone(),
            source: source.to_string(),
            value: r.mean_z,
        })
        .collect()
}

pub fn write_entropy_csv<W: Write>(rows: &[SourceEntropy], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(["side", "source", "mean_bits", "n"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
