//! Telemetry records, CSV interchange, future-window samples and the
//! sector/lap dataset splits.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::WindowInput;

pub const CSV_HEADER: [&str; 7] = ["t", "v_x", "a_x", "a_y", "delta", "sector", "lap"];

/// Tolerance on the sampling period when building windows [s].
pub const SAMPLING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    /// Time [s].
    pub t: f64,
    /// Longitudinal speed [m/s].
    pub v_x: f64,
    /// Longitudinal acceleration [m/s²].
    pub a_x: f64,
    /// Lateral acceleration [m/s²].
    pub a_y: f64,
    /// Measured steering angle [rad].
    pub delta: f64,
    pub sector: u8,
    pub lap: u32,
}

/// One training example: windows starting at record `index` and the steering
/// angle measured at that record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub input: WindowInput,
    pub target: f64,
    pub index: usize,
}

fn fmt_f64(x: f64) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    format!("{x}")
}

pub fn write_csv<W: std::io::Write>(writer: W, records: &[TelemetryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            fmt_f64(r.t),
            fmt_f64(r.v_x),
            fmt_f64(r.a_x),
            fmt_f64(r.a_y),
            fmt_f64(r.delta),
            r.sector.to_string(),
            r.lap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, records: &[TelemetryRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), records)
}

/// Parses and validates telemetry. Row numbers in errors are file line numbers.
pub fn read_csv<R: std::io::Read>(reader: R, vx_min: f64) -> Result<Vec<TelemetryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = rdr.headers()?.clone();
    let columns: Vec<&str> = header.iter().map(str::trim).collect();
    let missing: Vec<&str> = CSV_HEADER.iter().copied().filter(|c| !columns.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::Parse { row: 1, detail: format!("missing column(s): {}", missing.join(", ")) });
    }
    if columns != CSV_HEADER {
        return Err(Error::Parse {
            row: 1,
            detail: format!("header must be `{}`, found `{}`", CSV_HEADER.join(","), columns.join(",")),
        });
    }

    let mut records: Vec<TelemetryRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { row: line, detail: e.to_string() })?;
        let num = |k: usize| -> Result<f64> {
            let raw = row.get(k).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: line,
                detail: format!("column `{}`: cannot parse `{raw}` as a number", CSV_HEADER[k]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, detail: format!("column `{}` is not finite", CSV_HEADER[k]) });
            }
            Ok(v)
        };
        let int = |k: usize| -> Result<u32> {
            let raw = row.get(k).unwrap_or("").trim();
            raw.parse().map_err(|_| Error::Parse {
                row: line,
                detail: format!("column `{}`: cannot parse `{raw}` as an integer", CSV_HEADER[k]),
            })
        };
        let sector = int(5)?;
        if !(1..=3).contains(&sector) {
            return Err(Error::Parse { row: line, detail: format!("sector {sector} is not one of 1, 2, 3") });
        }
        let rec = TelemetryRecord {
            t: num(0)?,
            v_x: num(1)?,
            a_x: num(2)?,
            a_y: num(3)?,
            delta: num(4)?,
            sector: sector as u8,
            lap: int(6)?,
        };
        if rec.v_x < vx_min {
            return Err(Error::Parse {
                row: line,
                detail: format!("v_x = {} m/s is below the minimum of {vx_min} m/s", rec.v_x),
            });
        }
        if let Some(prev) = records.last() {
            if prev.lap == rec.lap && rec.t <= prev.t {
                return Err(Error::Parse {
                    row: line,
                    detail: format!("time {} s does not increase within lap {}", rec.t, rec.lap),
                });
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_csv(path: &Path, vx_min: f64) -> Result<Vec<TelemetryRecord>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), vx_min)
}

/// Maximal runs of consecutive records sharing lap and sector.
pub fn segments(records: &[TelemetryRecord]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=records.len() {
        let boundary =
            k == records.len() || records[k].lap != records[k - 1].lap || records[k].sector != records[k - 1].sector;
        if boundary && k > start {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Builds one sample per start index whose `q + 1` records lie in a single
/// lap/sector segment. Sampling within a segment must be uniform at period
/// `sample_time`.
pub fn make_windows(records: &[TelemetryRecord], q: usize, sample_time: f64) -> Result<Vec<WindowedSample>> {
    if !(sample_time > 0.0) {
        return Err(Error::Argument(format!("sample time must be positive, got {sample_time}")));
    }
    let mut out = Vec::new();
    for seg in segments(records) {
        for k in seg.start + 1..seg.end {
            let dt = records[k].t - records[k - 1].t;
            if (dt - sample_time).abs() > SAMPLING_TOLERANCE {
                return Err(Error::Resample { index: k, dt, expected: sample_time });
            }
        }
        if seg.len() <= q {
            continue;
        }
        for k in seg.start..seg.end - q {
            let w = &records[k..=k + q];
            out.push(WindowedSample {
                input: WindowInput {
                    a_y: w.iter().map(|r| r.a_y).collect(),
                    a_x: w.iter().map(|r| r.a_x).collect(),
                    v_x: w.iter().map(|r| r.v_x).collect(),
                },
                target: records[k].delta,
                index: k,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSplit {
    Small,
    Medium,
    Large,
    Validation,
}

impl DatasetSplit {
    pub const ALL: [DatasetSplit; 4] =
        [DatasetSplit::Small, DatasetSplit::Medium, DatasetSplit::Large, DatasetSplit::Validation];

    pub fn name(self) -> &'static str {
        match self {
            DatasetSplit::Small => "small",
            DatasetSplit::Medium => "medium",
            DatasetSplit::Large => "large",
            DatasetSplit::Validation => "validation",
        }
    }

    pub fn sectors(self) -> &'static [u8] {
        match self {
            DatasetSplit::Small => &[3],
            DatasetSplit::Medium => &[1, 3],
            DatasetSplit::Large | DatasetSplit::Validation => &[1, 2, 3],
        }
    }

    pub fn lap(self) -> u32 {
        match self {
            DatasetSplit::Validation => 2,
            _ => 1,
        }
    }

    pub fn contains(self, r: &TelemetryRecord) -> bool {
        r.lap == self.lap() && self.sectors().contains(&r.sector)
    }
}

impl fmt::Display for DatasetSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetSplit::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| {
            Error::Argument(format!("unknown split `{s}` (expected small, medium, large or validation)"))
        })
    }
}

/// Records belonging to `split`, in their original order.
pub fn select_split(records: &[TelemetryRecord], split: DatasetSplit) -> Result<Vec<TelemetryRecord>> {
    let out: Vec<TelemetryRecord> = records.iter().filter(|r| split.contains(r)).copied().collect();
    if out.is_empty() {
        return Err(Error::EmptySplit(split.name().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDefinition {
    pub name: DatasetSplit,
    pub sectors: Vec<u8>,
    pub lap: u32,
}

/// All split definitions, as written to the `splits.json` manifest.
pub fn split_manifest() -> Vec<SplitDefinition> {
    DatasetSplit::ALL
        .into_iter()
        .map(|s| SplitDefinition { name: s, sectors: s.sectors().to_vec(), lap: s.lap() })
        .collect()
}
