use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{CropSeason, DailyRecord, WindowedBatch};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "season_id",
    "day",
    "lai",
    "t_max_c",
    "t_min_c",
    "humidity_pct",
    "irradiation_wm2",
];

#[derive(Deserialize)]
struct Row {
    season_id: u64,
    day: usize,
    lai: f64,
    t_max_c: f64,
    t_min_c: f64,
    humidity_pct: f64,
    irradiation_wm2: f64,
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn write_seasons_csv(path: &Path, seasons: &[CropSeason]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(CSV_HEADER).map_err(csv_io)?;
    for s in seasons {
        for (i, d) in s.days.iter().enumerate() {
            w.write_record([
                s.season_id.to_string(),
                (i + 1).to_string(),
                d.lai.to_string(),
                d.t_max_c.to_string(),
                d.t_min_c.to_string(),
                d.humidity_pct.to_string(),
                d.irradiation_wm2.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Reads seasons grouped by id (ascending), validating every row. Line
/// numbers in errors count the header as line 1.
pub fn load_seasons_csv(path: &Path) -> Result<Vec<CropSeason>> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(csv_io)?;
    let headers = rdr.headers().map_err(csv_io)?.clone();
    for col in CSV_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_err(1, format!("missing column '{col}'")));
        }
    }
    let mut by_season: BTreeMap<u64, BTreeMap<usize, (u64, DailyRecord)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let d = DailyRecord {
            lai: row.lai,
            t_max_c: row.t_max_c,
            t_min_c: row.t_min_c,
            humidity_pct: row.humidity_pct,
            irradiation_wm2: row.irradiation_wm2,
        };
        if d.features().iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line, "non-finite value"));
        }
        if d.t_max_c < d.t_min_c {
            return Err(parse_err(line, "t_max_c is below t_min_c"));
        }
        if d.lai < 0.0 {
            return Err(parse_err(line, "negative lai"));
        }
        if !(0.0..=100.0).contains(&d.humidity_pct) {
            return Err(parse_err(line, "humidity_pct outside [0, 100]"));
        }
        if d.irradiation_wm2 < 0.0 {
            return Err(parse_err(line, "negative irradiation_wm2"));
        }
        if row.day == 0 {
            return Err(parse_err(line, "day numbers are 1-based"));
        }
        let days = by_season.entry(row.season_id).or_default();
        if days.insert(row.day, (line, d)).is_some() {
            return Err(parse_err(
                line,
                format!("duplicate day {} in season {}", row.day, row.season_id),
            ));
        }
    }
    by_season
        .into_iter()
        .map(|(season_id, days)| {
            let mut out = Vec::with_capacity(days.len());
            for (expected, (day, (line, d))) in (1..).zip(days) {
                if day != expected {
                    return Err(parse_err(
                        line,
                        format!("season {season_id}: day {day} found where day {expected} expected"),
                    ));
                }
                out.push(d);
            }
            Ok(CropSeason { season_id, days: out })
        })
        .collect()
}

/// One JSON object per window.
pub fn write_windows_jsonl(path: &Path, windows: &[WindowedBatch]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for w in windows {
        serde_json::to_writer(&mut f, w)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
