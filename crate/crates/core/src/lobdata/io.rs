//! Snapshot CSV ingestion and emission.
//!
//! Expected header: `timestamp` plus `ask_price_i,ask_size_i,bid_price_i,
//! bid_size_i` for levels `i = 1..=L`, matched by name so column order is
//! free. Timestamps are either epoch seconds or ISO-8601 datetimes; the
//! format is auto-detected per file from the first data row.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::LobSnapshot;
use crate::error::{Error, Result};

/// Ingestion tallies. `snapshots` is the count after dropping crossed rows
/// and collapsing duplicate timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub snapshots: usize,
    pub crossed_dropped: usize,
    pub duplicates_collapsed: usize,
}

fn parse_timestamp(raw: &str, line: usize) -> Result<f64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
        return Err(Error::Row {
            line,
            msg: "non-finite timestamp".into(),
        });
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            let dt = dt.and_utc();
            return Ok(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9);
        }
    }
    Err(Error::Row {
        line,
        msg: format!("unparseable timestamp {raw:?}"),
    })
}

fn parse_field(raw: &str, name: &str, line: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Row {
        line,
        msg: format!("field {name} is not a number: {raw:?}"),
    })
}

/// Reads snapshots with at least `level_count` book levels, keeping exactly
/// `level_count` of them. Crossed rows are dropped and counted; duplicate
/// timestamps collapse to the last row seen; out-of-order timestamps abort.
pub fn parse_lob_csv(path: &Path, level_count: usize) -> Result<(Vec<LobSnapshot>, IngestReport)> {
    if level_count == 0 {
        return Err(Error::Domain("level count must be at least 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing required column {name}")))
    };

    let ts_col = col("timestamp")?;
    let mut level_cols = Vec::with_capacity(level_count);
    for lvl in 1..=level_count {
        level_cols.push((
            col(&format!("ask_price_{lvl}"))?,
            col(&format!("ask_size_{lvl}"))?,
            col(&format!("bid_price_{lvl}"))?,
            col(&format!("bid_size_{lvl}"))?,
        ));
    }

    let mut snapshots: Vec<LobSnapshot> = Vec::new();
    let mut report = IngestReport::default();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::Row {
            line,
            msg: e.to_string(),
        })?;
        report.rows_read += 1;

        let get = |i: usize| record.get(i).unwrap_or("");
        let time = parse_timestamp(get(ts_col), line)?;
        let mut ask_prices = Vec::with_capacity(level_count);
        let mut ask_sizes = Vec::with_capacity(level_count);
        let mut bid_prices = Vec::with_capacity(level_count);
        let mut bid_sizes = Vec::with_capacity(level_count);
        for (lvl, &(ap, asz, bp, bsz)) in level_cols.iter().enumerate() {
            ask_prices.push(parse_field(get(ap), &format!("ask_price_{}", lvl + 1), line)?);
            ask_sizes.push(parse_field(get(asz), &format!("ask_size_{}", lvl + 1), line)?);
            bid_prices.push(parse_field(get(bp), &format!("bid_price_{}", lvl + 1), line)?);
            bid_sizes.push(parse_field(get(bsz), &format!("bid_size_{}", lvl + 1), line)?);
        }

        if let Some(prev) = snapshots.last() {
            if time < prev.time {
                return Err(Error::Format(format!(
                    "rows not time-sorted: line {line} steps back from {} to {time}",
                    prev.time
                )));
            }
        }

        if ask_prices[0] <= bid_prices[0] {
            report.crossed_dropped += 1;
            continue;
        }

        let snap = LobSnapshot::new(time, ask_prices, ask_sizes, bid_prices, bid_sizes)
            .map_err(|e| Error::Row {
                line,
                msg: e.to_string(),
            })?;

        match snapshots.last() {
            Some(prev) if prev.time == snap.time => {
                report.duplicates_collapsed += 1;
                *snapshots.last_mut().unwrap() = snap;
            }
            _ => snapshots.push(snap),
        }
    }
    report.snapshots = snapshots.len();
    Ok((snapshots, report))
}

/// Writes snapshots in the canonical column order with epoch-second
/// timestamps. Floats use shortest round-trip formatting, so reading the file
/// back reproduces the input exactly.
pub fn write_lob_csv(path: &Path, snapshots: &[LobSnapshot]) -> Result<()> {
    let levels = match snapshots.first() {
        Some(s) => s.levels(),
        None => return Err(Error::Contract("no snapshots to write".into())),
    };
    if snapshots.iter().any(|s| s.levels() != levels) {
        return Err(Error::Contract("snapshots have mixed level counts".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "timestamp")?;
    for lvl in 1..=levels {
        write!(
            out,
            ",ask_price_{lvl},ask_size_{lvl},bid_price_{lvl},bid_size_{lvl}"
        )?;
    }
    writeln!(out)?;
    for s in snapshots {
        write!(out, "{}", s.time)?;
        for lvl in 0..levels {
            write!(
                out,
                ",{},{},{},{}",
                s.ask_prices[lvl], s.ask_sizes[lvl], s.bid_prices[lvl], s.bid_sizes[lvl]
            )?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    const HEADER: &str = "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1";

    #[test]
    fn test_parse_epoch_seconds() {
        let f = write_temp(&format!(
            "{HEADER}\n10.5,1.0005,3.0,0.9995,2.0\n11.25,1.0006,3.0,0.9996,2.0\n"
        ));
        let (snaps, report) = parse_lob_csv(f.path(), 1).unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(snaps[0].time, 10.5);
        assert_eq!(report.rows_read, 2);
        assert_eq!(report.crossed_dropped, 0);
    }

    #[test]
    fn test_parse_iso_timestamps() {
        let f = write_temp(&format!(
            "{HEADER}\n2019-04-13T00:00:01.1234567Z,1.0005,3,0.9995,2\n2019-04-13 00:00:02.25,1.0006,3,0.9996,2\n"
        ));
        let (snaps, _) = parse_lob_csv(f.path(), 1).unwrap();
        let base = 1_555_113_601.0;
        assert!((snaps[0].time - (base + 0.1234567)).abs() < 1e-6);
        assert!((snaps[1].time - (base + 1.25)).abs() < 1e-6);
    }

    #[test]
    fn test_missing_column_is_fatal_format_error() {
        let f = write_temp("timestamp,ask_price_1,ask_size_1,bid_price_1\n1,1.0,1,0.9\n");
        match parse_lob_csv(f.path(), 1) {
            Err(Error::Format(msg)) => assert!(msg.contains("bid_size_1"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn test_malformed_row_reports_line_number() {
        let f = write_temp(&format!(
            "{HEADER}\n1.0,1.0005,3,0.9995,2\n2.0,oops,3,0.9996,2\n"
        ));
        match parse_lob_csv(f.path(), 1) {
            Err(Error::Row { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("ask_price_1"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn test_crossed_rows_dropped_and_counted() {
        let f = write_temp(&format!(
            "{HEADER}\n1.0,1.0005,3,0.9995,2\n2.0,0.9990,3,0.9995,2\n3.0,1.0007,3,0.9995,2\n"
        ));
        let (snaps, report) = parse_lob_csv(f.path(), 1).unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(report.crossed_dropped, 1);
    }

    #[test]
    fn test_duplicate_timestamps_keep_last() {
        let f = write_temp(&format!(
            "{HEADER}\n1.0,1.0005,3,0.9995,2\n1.0,1.0009,4,0.9997,2\n2.0,1.0006,3,0.9996,2\n"
        ));
        let (snaps, report) = parse_lob_csv(f.path(), 1).unwrap();
        assert_eq!(snaps.len(), 2);
        assert_eq!(report.duplicates_collapsed, 1);
        assert_eq!(snaps[0].ask_prices[0], 1.0009);
    }

    #[test]
    fn test_unsorted_rows_are_fatal() {
        let f = write_temp(&format!(
            "{HEADER}\n2.0,1.0005,3,0.9995,2\n1.0,1.0006,3,0.9996,2\n"
        ));
        assert!(matches!(parse_lob_csv(f.path(), 1), Err(Error::Format(_))));
    }

    #[test]
    fn test_extra_levels_beyond_requested_are_ignored() {
        let f = write_temp(
            "timestamp,ask_price_1,ask_size_1,bid_price_1,bid_size_1,ask_price_2,ask_size_2,bid_price_2,bid_size_2\n\
             1.0,1.0005,3,0.9995,2,1.0010,1,0.9990,1\n\
             2.0,1.0006,3,0.9996,2,1.0011,1,0.9991,1\n",
        );
        let (snaps, _) = parse_lob_csv(f.path(), 1).unwrap();
        assert_eq!(snaps[0].levels(), 1);
        let (snaps2, _) = parse_lob_csv(f.path(), 2).unwrap();
        assert_eq!(snaps2[0].levels(), 2);
    }

    #[test]
    fn test_round_trip_identity() {
        let snaps: Vec<LobSnapshot> = (0..20)
            .map(|i| {
                super::super::tests::snapshot_with_book(
                    1_500_000_000.0 + i as f64 * 1.37,
                    1.0 + i as f64 * 1e-4,
                    (i as f64 / 10.0).sin() * 0.8,
                    5,
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round_trip.csv");
        write_lob_csv(&path, &snaps).unwrap();
        let (back, report) = parse_lob_csv(&path, 5).unwrap();
        assert_eq!(back, snaps);
        assert_eq!(report.snapshots, snaps.len());
    }
}
