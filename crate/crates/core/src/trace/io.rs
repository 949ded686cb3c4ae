//! Delimiter-separated trace files plus a JSON sidecar for events.
//!
//! The trace file has one row per (sector, day, epoch) under the header
//! [`TRACE_HEADER`]. Floats are written in their shortest round-trip decimal
//! form, so save followed by load is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{DayLabel, Dataset, Epoch, EpochRecord, EventContext, SectorId, SectorTrace, TraceError};

pub const TRACE_HEADER: [&str; 12] = [
    "enb",
    "sector",
    "band_mhz",
    "day",
    "day_label",
    "epoch",
    "avg_users",
    "peak_users",
    "dl_bits",
    "ul_bits",
    "dl_prb_util",
    "dl_eff_time_s",
];

/// `traces.csv` -> `traces.events.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("events.json")
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for (sector, traces) in &dataset.traces {
        for trace in traces {
            for (epoch, rec) in &trace.epochs {
                w.write_record([
                    sector.enb_id.to_string(),
                    sector.sector_index.to_string(),
                    sector.band_mhz.to_string(),
                    epoch.day.to_string(),
                    trace.day_label.as_str().to_string(),
                    epoch.index.to_string(),
                    rec.avg_active_users.to_string(),
                    rec.peak_active_users.to_string(),
                    rec.dl_volume_bits.to_string(),
                    rec.ul_volume_bits.to_string(),
                    rec.dl_prb_util.to_string(),
                    rec.dl_effective_time_s.to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| TraceError::Io(e.into_error()))?;
    write_atomic(path, &bytes)?;
    let mut events = serde_json::to_vec_pretty(&dataset.events)?;
    events.push(b'\n');
    write_atomic(&sidecar_path(path), &events)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, TraceError> {
    let raw = fs::read(path)?;
    let sidecar = sidecar_path(path);
    let events: Vec<EventContext> = if sidecar.exists() {
        serde_json::from_slice(&fs::read(&sidecar)?)?
    } else {
        Vec::new()
    };
    if raw.iter().all(u8::is_ascii_whitespace) {
        let ds = Dataset { traces: Default::default(), events };
        ds.validate()?;
        return Ok(ds);
    }

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(raw.as_slice());
    let header = rdr.headers()?.clone();
    let mut col = [0usize; 12];
    for (slot, name) in col.iter_mut().zip(TRACE_HEADER) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))?;
    }

    let mut ds = Dataset { traces: Default::default(), events };
    // (sector, day) -> index into the sector's trace list
    let mut current: Option<(SectorId, u32)> = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<&str, TraceError> {
            row.get(col[i]).map(str::trim).ok_or_else(|| TraceError::Malformed {
                line,
                msg: format!("missing value for `{}`", TRACE_HEADER[i]),
            })
        };
        let int = |i: usize| -> Result<u32, TraceError> {
            let s = field(i)?;
            s.parse().map_err(|_| TraceError::Malformed {
                line,
                msg: format!("`{}` is not an integer: `{s}`", TRACE_HEADER[i]),
            })
        };
        let real = |i: usize| -> Result<f64, TraceError> {
            let s = field(i)?;
            s.parse().map_err(|_| TraceError::Malformed {
                line,
                msg: format!("`{}` is not a number: `{s}`", TRACE_HEADER[i]),
            })
        };
        let sector = SectorId { enb_id: int(0)?, sector_index: int(1)?, band_mhz: int(2)? };
        let day = int(3)?;
        let label = DayLabel::parse(field(4)?).ok_or_else(|| TraceError::Malformed {
            line,
            msg: format!("unknown day_label `{}`", field(4).unwrap_or_default()),
        })?;
        let epoch = Epoch::new(day, int(5)?);
        let rec = EpochRecord {
            avg_active_users: real(6)?,
            peak_active_users: real(7)?,
            dl_volume_bits: real(8)?,
            ul_volume_bits: real(9)?,
            dl_prb_util: real(10)?,
            dl_effective_time_s: real(11)?,
        };
        rec.validate().map_err(|e| TraceError::Malformed { line, msg: e.to_string() })?;

        let traces = ds.traces.entry(sector).or_default();
        if current != Some((sector, day)) {
            if traces.iter().any(|t| t.day() == Some(day)) {
                return Err(TraceError::Malformed {
                    line,
                    msg: format!("rows of {sector} day {day} are not contiguous"),
                });
            }
            traces.push(SectorTrace { sector, day_label: label, epochs: Vec::new() });
            current = Some((sector, day));
        }
        let trace = traces.last_mut().expect("pushed above");
        if trace.day_label != label {
            return Err(TraceError::Malformed { line, msg: "day_label changes within a day".into() });
        }
        if let Some((prev, _)) = trace.epochs.last() {
            if prev.index >= epoch.index {
                return Err(TraceError::Malformed { line, msg: format!("epoch {} out of order", epoch.index) });
            }
        }
        trace.epochs.push((epoch, rec));
    }
    ds.validate()?;
    Ok(ds)
}
