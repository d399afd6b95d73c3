//! On-disk file formats owned by the CLI: window sets, mode assignments
//! and external sample sets. All of them are plain UTF-8 CSV with '.'
//! decimals; floats are written in Rust's shortest round-trip form so
//! seeded reruns are byte-identical.

use std::io::Write;
use std::path::Path;

use timeprism_core::data::Window;
use timeprism_core::error::{PrismError, Result};
use timeprism_core::math::Matrix;

/// Writes windows as `window,step,role,<channels...>` rows: L history
/// rows then T future rows per window index.
pub fn write_windows_csv(path: &Path, windows: &[Window], channel_names: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = ["window", "step", "role"]
        .iter()
        .map(|s| s.to_string())
        .chain(channel_names.iter().cloned())
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (idx, window) in windows.iter().enumerate() {
        for (role, block) in [("history", &window.history), ("future", &window.future)] {
            for t in 0..block.rows() {
                let mut fields = vec![idx.to_string(), t.to_string(), role.to_string()];
                fields.extend((0..block.cols()).map(|d| block.get(t, d).to_string()));
                writeln!(out, "{}", fields.join(","))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the `window,mode` ground-truth assignment next to a windows
/// file.
pub fn write_modes_csv(path: &Path, modes: &[usize]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "window,mode")?;
    for (idx, mode) in modes.iter().enumerate() {
        writeln!(out, "{idx},{mode}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| PrismError::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse {raw:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(PrismError::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value {value}"),
        });
    }
    Ok(value)
}

/// Reads a windows CSV back. Every window must carry the same history
/// length, horizon and channel set, with steps in writing order.
pub fn read_windows_csv(path: &Path) -> Result<(Vec<Window>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PrismError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{}: {e}", path.display()),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| PrismError::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < 4 || headers[0] != "window" || headers[1] != "step" || headers[2] != "role" {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "expected header window,step,role,<channels...>".into(),
        });
    }
    let channel_names: Vec<String> = headers[3..].to_vec();
    let channels = channel_names.len();

    struct Raw {
        history: Vec<Vec<f64>>,
        future: Vec<Vec<f64>>,
    }
    let mut raw: Vec<Raw> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| PrismError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(PrismError::Parse {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let window_idx: usize = record[0].parse().map_err(|_| PrismError::Parse {
            row: row_no,
            column: "window".into(),
            message: format!("bad window index {:?}", &record[0]),
        })?;
        if window_idx == raw.len() {
            raw.push(Raw {
                history: Vec::new(),
                future: Vec::new(),
            });
        } else if window_idx + 1 != raw.len() {
            return Err(PrismError::Parse {
                row: row_no,
                column: "window".into(),
                message: format!("window indices must be consecutive, got {window_idx}"),
            });
        }
        let values: Vec<f64> = (0..channels)
            .map(|d| parse_cell(&record[3 + d], row_no, &channel_names[d]))
            .collect::<Result<_>>()?;
        let target = raw.last_mut().expect("pushed above");
        match &record[2] {
            "history" => target.history.push(values),
            "future" => target.future.push(values),
            other => {
                return Err(PrismError::Parse {
                    row: row_no,
                    column: "role".into(),
                    message: format!("unknown role {other:?}"),
                })
            }
        }
    }
    if raw.is_empty() {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "windows file has no rows".into(),
        });
    }

    let history_len = raw[0].history.len();
    let horizon = raw[0].future.len();
    let mut windows = Vec::with_capacity(raw.len());
    for (idx, r) in raw.iter().enumerate() {
        if r.history.len() != history_len || r.future.len() != horizon {
            return Err(PrismError::Parse {
                row: 0,
                column: String::new(),
                message: format!(
                    "window {idx} has {}+{} rows, expected {history_len}+{horizon}",
                    r.history.len(),
                    r.future.len()
                ),
            });
        }
        windows.push(Window {
            history: Matrix::from_rows(&r.history)?,
            future: Matrix::from_rows(&r.future)?,
            origin_index: idx,
        });
    }
    Ok((windows, channel_names))
}

/// Reads an external sample set (`sample,step,<channels...>`): S sampled
/// trajectories of T rows each.
pub fn read_samples_csv(path: &Path) -> Result<(Vec<Matrix>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PrismError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{}: {e}", path.display()),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| PrismError::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < 3 || headers[0] != "sample" || headers[1] != "step" {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "expected header sample,step,<channels...>".into(),
        });
    }
    let channel_names: Vec<String> = headers[2..].to_vec();
    let channels = channel_names.len();

    let mut samples: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| PrismError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(PrismError::Parse {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let sample_idx: usize = record[0].parse().map_err(|_| PrismError::Parse {
            row: row_no,
            column: "sample".into(),
            message: format!("bad sample index {:?}", &record[0]),
        })?;
        if sample_idx == samples.len() {
            samples.push(Vec::new());
        } else if sample_idx + 1 != samples.len() {
            return Err(PrismError::Parse {
                row: row_no,
                column: "sample".into(),
                message: format!("sample indices must be consecutive, got {sample_idx}"),
            });
        }
        let values: Vec<f64> = (0..channels)
            .map(|d| parse_cell(&record[2 + d], row_no, &channel_names[d]))
            .collect::<Result<_>>()?;
        samples.last_mut().expect("pushed above").push(values);
    }
    if samples.is_empty() {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "sample file has no rows".into(),
        });
    }
    let horizon = samples[0].len();
    let matrices: Vec<Matrix> = samples
        .iter()
        .enumerate()
        .map(|(idx, rows)| {
            if rows.len() != horizon {
                return Err(PrismError::Parse {
                    row: 0,
                    column: String::new(),
                    message: format!(
                        "sample {idx} has {} rows, expected {horizon}",
                        rows.len()
                    ),
                });
            }
            Matrix::from_rows(rows)
        })
        .collect::<Result<_>>()?;
    Ok((matrices, channel_names))
}
