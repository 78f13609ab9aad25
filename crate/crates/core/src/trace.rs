//! Text formats for execution logs and probability curves.
//!
//! A trace is line oriented. Two comment lines carry a format tag and the
//! run configuration as JSON, followed by a tab-separated header and one
//! event per line:
//!
//! ```text
//! # bloomclock-trace v1
//! # config {"topology":"complete","n":2,"m":2,"k":1,"pr_i":0.0,"seed":1,...}
//! gsn	pid	kind	event_index	sender	receiver	send_gsn	vector_ts	bloom_ts
//! 1	0	send	1	0	1	-	1,0	0,1
//! 2	1	receive	1	0	1	1	1,1	1,1
//! ```
//!
//! Absent optional fields are written as `-`; clock vectors are
//! comma-joined. Curves are plain CSV with header
//! `z_gsn,pr_p,pr_fp_step,pr_fp_smooth,outcome`.

#![allow(clippy::tabs_in_doc_comments)]

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::clock::{BloomClock, EventIndex, ProcessId, VectorClock};
use crate::error::{Error, Result};
use crate::metrics::CurveRow;
use crate::sim::{EventKind, EventRecord, ExecutionLog, ExperimentConfig};

const TRACE_TAG: &str = "# bloomclock-trace v1";
const CONFIG_PREFIX: &str = "# config ";
const TRACE_HEADER: &str =
    "gsn\tpid\tkind\tevent_index\tsender\treceiver\tsend_gsn\tvector_ts\tbloom_ts";

fn join(counters: &[u64]) -> String {
    counters.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

pub fn write_trace<W: Write>(log: &ExecutionLog, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let config = serde_json::to_string(&log.config)
        .map_err(|e| Error::config(format!("cannot encode config: {e}")))?;
    writeln!(out, "{TRACE_TAG}")?;
    writeln!(out, "{CONFIG_PREFIX}{config}")?;
    writeln!(out, "{TRACE_HEADER}")?;
    for ev in &log.events {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            ev.gsn,
            ev.pid,
            ev.kind,
            ev.event_index,
            opt(ev.sender),
            opt(ev.receiver),
            opt(ev.send_gsn),
            join(ev.vector_ts.counters()),
            join(ev.bloom_ts.counters()),
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn persist_trace(log: &ExecutionLog, path: impl AsRef<Path>) -> Result<()> {
    write_trace(log, File::create(path)?)
}

fn parse_num<T: FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{field}'")))
}

fn parse_opt<T: FromStr>(field: &str, what: &str, line: usize) -> Result<Option<T>> {
    if field == "-" {
        Ok(None)
    } else {
        parse_num(field, what, line).map(Some)
    }
}

fn parse_counters(field: &str, what: &str, line: usize) -> Result<Vec<u64>> {
    field.split(',').map(|c| parse_num(c, what, line)).collect()
}

fn parse_event(text: &str, line: usize, config: &ExperimentConfig) -> Result<EventRecord> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() != 9 {
        return Err(Error::parse(line, format!("expected 9 fields, found {}", fields.len())));
    }
    let kind: EventKind = fields[2]
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid event kind '{}'", fields[2])))?;
    let vector = parse_counters(fields[7], "vector timestamp", line)?;
    let bloom = parse_counters(fields[8], "bloom timestamp", line)?;
    if vector.len() != config.process_count() {
        return Err(Error::parse(
            line,
            format!("vector timestamp has {} entries, expected {}", vector.len(), config.process_count()),
        ));
    }
    if bloom.len() != config.m {
        return Err(Error::parse(
            line,
            format!("bloom timestamp has {} entries, expected {}", bloom.len(), config.m),
        ));
    }
    let pid: u32 = parse_num(fields[1], "pid", line)?;
    if pid as usize >= config.process_count() {
        return Err(Error::parse(line, format!("pid {pid} out of range")));
    }
    Ok(EventRecord {
        gsn: parse_num(fields[0], "gsn", line)?,
        pid: ProcessId(pid),
        kind,
        event_index: EventIndex(parse_num(fields[3], "event index", line)?),
        sender: parse_opt(fields[4], "sender", line)?.map(ProcessId),
        receiver: parse_opt(fields[5], "receiver", line)?.map(ProcessId),
        send_gsn: parse_opt(fields[6], "send gsn", line)?,
        vector_ts: VectorClock::from_counters(vector),
        bloom_ts: BloomClock::from_counters(bloom),
    })
}

pub fn read_trace<R: Read>(input: R) -> Result<ExecutionLog> {
    let mut lines = BufReader::new(input).lines();
    let mut next_line = |expect: &str, line: usize| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(line, format!("missing {expect}")))
    };
    if next_line("format tag", 1)?.trim_end() != TRACE_TAG {
        return Err(Error::parse(1, "not a bloomclock trace"));
    }
    let config_line = next_line("config line", 2)?;
    let json = config_line
        .strip_prefix(CONFIG_PREFIX)
        .ok_or_else(|| Error::parse(2, "expected '# config {...}'"))?;
    let config: ExperimentConfig =
        serde_json::from_str(json).map_err(|e| Error::parse(2, format!("invalid config: {e}")))?;
    config
        .validate()
        .map_err(|e| Error::parse(2, e.to_string()))?;
    if next_line("header", 3)?.trim_end() != TRACE_HEADER {
        return Err(Error::parse(3, "unexpected column header"));
    }

    let mut events = Vec::new();
    for (i, text) in lines.enumerate() {
        let line = i + 4;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let ev = parse_event(text.trim_end_matches('\r'), line, &config)?;
        if ev.gsn != events.len() as u64 + 1 {
            return Err(Error::parse(
                line,
                format!("gsn {} out of sequence, expected {}", ev.gsn, events.len() + 1),
            ));
        }
        events.push(ev);
    }
    Ok(ExecutionLog { config, events })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<ExecutionLog> {
    read_trace(File::open(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

pub fn write_curve<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    if rows.is_empty() {
        w.write_record(["z_gsn", "pr_p", "pr_fp_step", "pr_fp_smooth", "outcome"])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn persist_curve(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    write_curve(rows, File::create(path)?)
}

pub fn load_curve(path: impl AsRef<Path>) -> Result<Vec<CurveRow>> {
    read_curve(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Outcome;
    use crate::sim::{run_broadcast, run_complete, run_star};

    fn round_trip(log: &ExecutionLog) -> ExecutionLog {
        let mut buf = Vec::new();
        write_trace(log, &mut buf).unwrap();
        read_trace(buf.as_slice()).unwrap()
    }

    #[test]
    fn traces_round_trip() {
        let complete = run_complete(&ExperimentConfig::complete(8, 3, 2, 0.3, 4)).unwrap();
        assert_eq!(round_trip(&complete), complete);
        let star = run_star(&ExperimentConfig::star(3, 2, 2, 4)).unwrap();
        assert_eq!(round_trip(&star), star);
        let broadcast = run_broadcast(&ExperimentConfig::broadcast(4, 2, 2, 4)).unwrap();
        assert_eq!(round_trip(&broadcast), broadcast);
    }

    #[test]
    fn empty_log_is_header_only() {
        let log = ExecutionLog {
            config: ExperimentConfig::complete(3, 2, 1, 0.0, 1),
            events: vec![],
        };
        let mut buf = Vec::new();
        write_trace(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_trace(buf.as_slice()).unwrap(), log);
    }

    fn with_body(body: &str) -> String {
        let config = serde_json::to_string(&ExperimentConfig::complete(2, 2, 1, 0.0, 1)).unwrap();
        format!("{TRACE_TAG}\n{CONFIG_PREFIX}{config}\n{TRACE_HEADER}\n{body}")
    }

    #[test]
    fn malformed_lines_name_their_line() {
        let cases = [
            ("1\t0\tinternal\t1\t-\t-\t-\t1,0\n", 4),
            ("1\t0\tinternal\t1\t-\t-\t-\t1,0\t0,1\n2\t1\tjump\t1\t-\t-\t-\t0,1\t1,0\n", 5),
            ("1\t0\tinternal\t1\t-\t-\t-\t1,0,0\t0,1\n", 4),
            ("1\t0\tinternal\t1\t-\t-\t-\t1,0\t0,x\n", 4),
            ("2\t0\tinternal\t1\t-\t-\t-\t1,0\t0,1\n", 4),
            ("1\t7\tinternal\t1\t-\t-\t-\t1,0\t0,1\n", 4),
        ];
        for (body, expected) in cases {
            match read_trace(with_body(body).as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{body:?}"),
                other => panic!("expected parse error for {body:?}, got {other:?}"),
            }
        }
        assert!(matches!(read_trace("hello\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn curve_round_trip_is_lossless() {
        let rows = vec![
            CurveRow { z_gsn: 11, pr_p: 0.1 + 0.2, pr_fp_step: 0.0, pr_fp_smooth: 0.21, outcome: Outcome::TrueNegative },
            CurveRow { z_gsn: 12, pr_p: 1.0 / 3.0, pr_fp_step: 2.0 / 3.0, pr_fp_smooth: 2.0 / 9.0, outcome: Outcome::FalsePositive },
            CurveRow { z_gsn: 13, pr_p: 1e-300, pr_fp_step: 1.0, pr_fp_smooth: 1e-300, outcome: Outcome::TruePositive },
        ];
        let mut buf = Vec::new();
        write_curve(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z_gsn,pr_p,pr_fp_step,pr_fp_smooth,outcome\n"));
        assert_eq!(read_curve(buf.as_slice()).unwrap(), rows);
    }
}
