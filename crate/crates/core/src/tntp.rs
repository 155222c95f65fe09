//! Reading TNTP network/trips files and writing solver outputs.
//!
//! The TNTP text format: a metadata block of `<TAG> value` lines closed by
//! `<END OF METADATA>`, then data rows. `~` starts a comment. Trailing `;`
//! terminators are optional.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path as FsPath;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{AssignmentReport, OdMetric};
use crate::network::{DemandMatrix, Link, LinkState, Network};

/// A network and its demand loaded from a TNTP pair of files.
#[derive(Debug, Clone)]
pub struct ParsedInstance {
    pub name: String,
    pub network: Network,
    pub demand: DemandMatrix,
}

impl ParsedInstance {
    pub fn load(net_path: &FsPath, trips_path: &FsPath) -> Result<Self> {
        let network = parse_network(open(net_path)?, &net_path.display().to_string())?;
        let demand = parse_trips(open(trips_path)?, &trips_path.display().to_string())?;
        demand.check_against(&network).map_err(|e| Error::Parse {
            source_name: trips_path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Ok(ParsedInstance {
            name: instance_name(net_path),
            network,
            demand,
        })
    }
}

fn open(path: &FsPath) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Parse {
        source_name: path.display().to_string(),
        line: 0,
        message: format!("cannot open: {e}"),
    })
}

/// `SiouxFalls_net.tntp` -> `SiouxFalls`.
pub fn instance_name(net_path: &FsPath) -> String {
    let stem = net_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".to_string());
    stem.strip_suffix("_net").map(str::to_string).unwrap_or(stem)
}

struct Metadata {
    tags: Vec<(String, String)>,
}

impl Metadata {
    fn get(&self, tag: &str) -> Option<&str> {
        self.tags.iter().find(|(t, _)| t == tag).map(|(_, v)| v.as_str())
    }
}

struct LineSource<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    name: String,
}

impl<R: BufRead> LineSource<R> {
    fn new(reader: R, name: &str) -> Self {
        LineSource {
            lines: reader.lines(),
            line_no: 0,
            name: name.to_string(),
        }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        match self.lines.next() {
            Some(line) => {
                self.line_no += 1;
                Ok(Some(line?))
            }
            None => Ok(None),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.name.clone(),
            line: self.line_no,
            message: message.into(),
        }
    }

    fn metadata(&mut self) -> Result<Metadata> {
        let mut tags = Vec::new();
        loop {
            let Some(line) = self.next_line()? else {
                return Err(self.error("missing <END OF METADATA>"));
            };
            let trimmed = line.trim();
            if !trimmed.starts_with('<') {
                continue;
            }
            let Some(close) = trimmed.find('>') else {
                return Err(self.error(format!("malformed metadata line: {trimmed}")));
            };
            let tag = trimmed[1..close].trim().to_ascii_uppercase();
            if tag == "END OF METADATA" {
                return Ok(Metadata { tags });
            }
            tags.push((tag, trimmed[close + 1..].trim().to_string()));
        }
    }

    fn required<T: std::str::FromStr>(&self, meta: &Metadata, tag: &str) -> Result<T> {
        let value = meta
            .get(tag)
            .ok_or_else(|| self.error(format!("missing metadata tag <{tag}>")))?;
        self.number(value, tag)
    }

    fn number<T: std::str::FromStr>(&self, token: &str, what: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.error(format!("non-numeric {what}: {token:?}")))
    }
}

/// Drops a `~` comment and `;` terminators.
fn data_part(line: &str) -> String {
    let body = line.split('~').next().unwrap_or("");
    body.replace(';', " ")
}

pub fn parse_network<R: BufRead>(reader: R, source_name: &str) -> Result<Network> {
    let mut src = LineSource::new(reader, source_name);
    let meta = src.metadata()?;
    let node_count: usize = src.required(&meta, "NUMBER OF NODES")?;
    let link_count: usize = src.required(&meta, "NUMBER OF LINKS")?;
    let first_thru_node: usize = src.required(&meta, "FIRST THRU NODE")?;
    let zone_count: usize = match meta.get("NUMBER OF ZONES") {
        Some(v) => src.number(v, "NUMBER OF ZONES")?,
        None => first_thru_node.saturating_sub(1),
    };

    const COLUMNS: [&str; 10] = [
        "tail", "head", "capacity", "length", "free flow time", "B", "power", "speed", "toll", "type",
    ];
    let mut links = Vec::with_capacity(link_count);
    while let Some(line) = src.next_line()? {
        let data = data_part(&line);
        let fields: Vec<&str> = data.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 7 {
            return Err(src.error(format!("link row has {} fields, expected at least 7", fields.len())));
        }
        let mut values = [0.0f64; 10];
        for (i, field) in fields.iter().take(10).enumerate() {
            values[i] = src.number(field, COLUMNS[i])?;
        }
        let as_node = |v: f64, what: &str| -> Result<usize> {
            if v.fract() != 0.0 || v < 1.0 || v > node_count as f64 {
                Err(src.error(format!("{what} node {v} outside 1..={node_count}")))
            } else {
                Ok(v as usize)
            }
        };
        let link = Link {
            tail: as_node(values[0], "tail")?,
            head: as_node(values[1], "head")?,
            capacity: values[2],
            length: values[3],
            free_flow_time: values[4],
            bpr_b: values[5],
            bpr_power: values[6],
            speed_limit: values[7],
            toll: values[8],
            link_type: values[9] as i64,
        };
        if link.bpr_power > 0.0 && link.capacity <= 0.0 {
            return Err(src.error(format!(
                "capacity {} with power {}: performance function undefined",
                link.capacity, link.bpr_power
            )));
        }
        if link.free_flow_time < 0.0 || link.bpr_b < 0.0 || link.bpr_power < 0.0 {
            return Err(src.error("negative free flow time, B or power"));
        }
        links.push(link);
    }
    if links.len() != link_count {
        return Err(src.error(format!(
            "declared {link_count} links but found {}",
            links.len()
        )));
    }
    Network::new(node_count, links, first_thru_node, zone_count).map_err(|e| src.error(e.to_string()))
}

pub fn parse_trips<R: BufRead>(reader: R, source_name: &str) -> Result<DemandMatrix> {
    let mut src = LineSource::new(reader, source_name);
    let meta = src.metadata()?;
    let zone_count: usize = src.required(&meta, "NUMBER OF ZONES")?;
    let declared_total: Option<f64> = match meta.get("TOTAL OD FLOW") {
        Some(v) => Some(src.number(v, "TOTAL OD FLOW")?),
        None => None,
    };

    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut origin: Option<usize> = None;
    let mut parsed_total = 0.0;
    while let Some(line) = src.next_line()? {
        let data = data_part(&line).replace(':', " : ");
        let mut tokens = data.split_whitespace().peekable();
        while let Some(token) = tokens.next() {
            if token.eq_ignore_ascii_case("origin") {
                let value = tokens.next().ok_or_else(|| src.error("Origin without zone number"))?;
                let zone: usize = src.number(value, "origin")?;
                if zone == 0 || zone > zone_count {
                    return Err(src.error(format!("origin {zone} outside 1..={zone_count}")));
                }
                origin = Some(zone);
                continue;
            }
            let Some(r) = origin else {
                return Err(src.error(format!("entry {token:?} before any Origin block")));
            };
            let s: usize = src.number(token, "destination")?;
            if s == 0 || s > zone_count {
                return Err(src.error(format!("destination {s} outside 1..={zone_count}")));
            }
            if tokens.next() != Some(":") {
                return Err(src.error(format!("expected ':' after destination {s}")));
            }
            let value = tokens.next().ok_or_else(|| src.error("missing demand value"))?;
            let q: f64 = src.number(value, "demand")?;
            if !(q >= 0.0) || !q.is_finite() {
                return Err(src.error(format!("negative or non-finite demand {q} for ({r}, {s})")));
            }
            parsed_total += q;
            entries.push((r, s, q));
        }
    }
    if let Some(total) = declared_total {
        let scale = total.abs().max(1.0);
        if (parsed_total - total).abs() > 1e-6 * scale {
            return Err(src.error(format!(
                "declared total OD flow {total} but entries sum to {parsed_total}"
            )));
        }
    }
    DemandMatrix::from_entries(zone_count, entries).map_err(|e| src.error(e.to_string()))
}

/// Writes `tail head flow time` per link in link order.
pub fn write_flows<W: Write>(network: &Network, state: &LinkState, mut sink: W) -> Result<()> {
    if state.flow.len() != network.link_count() || state.time.len() != network.link_count() {
        return Err(Error::DimensionMismatch {
            expected: network.link_count(),
            actual: state.flow.len().min(state.time.len()),
        });
    }
    writeln!(sink, "~ tail head flow time")?;
    for (link, (flow, time)) in network.links().iter().zip(state.flow.iter().zip(&state.time)) {
        writeln!(sink, "{} {} {} {}", link.tail, link.head, flow, time)?;
    }
    sink.flush()?;
    Ok(())
}

/// One row of a flows file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRow {
    pub tail: usize,
    pub head: usize,
    pub flow: f64,
    pub time: f64,
}

/// Reads back a file produced by [`write_flows`].
pub fn read_flows<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<FlowRow>> {
    let mut src = LineSource::new(reader, source_name);
    let mut rows = Vec::new();
    while let Some(line) = src.next_line()? {
        let data = data_part(&line);
        let fields: Vec<&str> = data.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(src.error(format!("expected 4 fields, found {}", fields.len())));
        }
        rows.push(FlowRow {
            tail: src.number(fields[0], "tail")?,
            head: src.number(fields[1], "head")?,
            flow: src.number(fields[2], "flow")?,
            time: src.number(fields[3], "time")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Serialize)]
struct ReportDocument<'a> {
    schema: u32,
    instance: &'a str,
    k: usize,
    od_count: usize,
    degenerate_od_count: usize,
    #[serde(rename = "E_percent")]
    e_percent: f64,
    pearson_r: Option<f64>,
    ue_grade: Option<&'a str>,
    cpu_ms: f64,
    cpu_s: f64,
    report_ms: f64,
    schedule: Vec<PhaseDocument>,
    histogram: Vec<BinDocument>,
}

#[derive(Serialize)]
struct PhaseDocument {
    n: usize,
    iterations: usize,
    alpha: f64,
}

#[derive(Serialize)]
struct BinDocument {
    lo: f64,
    hi: Option<f64>,
    count: usize,
    rel_freq: f64,
}

pub fn write_report<W: Write>(report: &AssignmentReport, format: ReportFormat, mut sink: W) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let doc = ReportDocument {
                schema: REPORT_SCHEMA,
                instance: &report.instance,
                k: report.k,
                od_count: report.od_count,
                degenerate_od_count: report.degenerate_ods.len(),
                e_percent: report.e_percent,
                pearson_r: report.pearson_r,
                ue_grade: report.ue_grade.as_deref(),
                cpu_ms: report.cpu_ms,
                cpu_s: report.cpu_ms / 1000.0,
                report_ms: report.report_ms,
                schedule: report
                    .schedule
                    .iter()
                    .map(|&(n, phase)| PhaseDocument {
                        n,
                        iterations: phase.iterations,
                        alpha: phase.alpha,
                    })
                    .collect(),
                histogram: report
                    .histogram
                    .iter()
                    .map(|b| BinDocument {
                        lo: b.lo,
                        hi: b.hi,
                        count: b.count,
                        rel_freq: b.rel_freq,
                    })
                    .collect(),
            };
            serde_json::to_writer_pretty(&mut sink, &doc)?;
            writeln!(sink)?;
        }
        ReportFormat::Csv => {
            writeln!(sink, "schema,{REPORT_SCHEMA}")?;
            write_histogram_rows(report, &mut sink)?;
            writeln!(sink, "instance,{}", report.instance)?;
            writeln!(sink, "k,{}", report.k)?;
            writeln!(sink, "od_count,{}", report.od_count)?;
            writeln!(sink, "degenerate_od_count,{}", report.degenerate_ods.len())?;
            writeln!(sink, "E_percent,{}", report.e_percent)?;
            match report.pearson_r {
                Some(r) => writeln!(sink, "pearson_r,{r}")?,
                None => writeln!(sink, "pearson_r,n/a")?,
            }
            writeln!(sink, "ue_grade,{}", report.ue_grade.as_deref().unwrap_or("n/a"))?;
            writeln!(sink, "cpu_ms,{}", report.cpu_ms)?;
            writeln!(sink, "cpu_s,{}", report.cpu_ms / 1000.0)?;
            writeln!(sink, "report_ms,{}", report.report_ms)?;
            let schedule: Vec<String> = report
                .schedule
                .iter()
                .map(|(n, p)| format!("{n}:{}:{}", p.iterations, p.alpha))
                .collect();
            writeln!(sink, "schedule,{}", schedule.join(" "))?;
        }
    }
    sink.flush()?;
    Ok(())
}

fn write_histogram_rows<W: Write>(report: &AssignmentReport, sink: &mut W) -> Result<()> {
    writeln!(sink, "lo,hi,count,rel_freq")?;
    for bin in &report.histogram {
        let hi = bin.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".to_string());
        writeln!(sink, "{},{},{},{}", bin.lo, hi, bin.count, bin.rel_freq)?;
    }
    Ok(())
}

/// Histogram alone, as CSV.
pub fn write_histogram<W: Write>(report: &AssignmentReport, mut sink: W) -> Result<()> {
    write_histogram_rows(report, &mut sink)?;
    sink.flush()?;
    Ok(())
}

/// Per-OD (average, shortest) travel times, as CSV.
pub fn write_scatter<W: Write>(metrics: &[OdMetric], mut sink: W) -> Result<()> {
    writeln!(sink, "origin,destination,avg_time,shortest_time")?;
    for m in metrics {
        writeln!(sink, "{},{},{},{}", m.origin, m.destination, m.avg_time, m.shortest_time)?;
    }
    sink.flush()?;
    Ok(())
}
