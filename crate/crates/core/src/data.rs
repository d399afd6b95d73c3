//! CSV series loading, window cutting and per-channel scaling.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PrismError, Result};
use crate::math::Matrix;

/// A D-channel, equal-length multivariate series with channel names.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    pub channel_names: Vec<String>,
    /// `[length x D]` values, one row per time step.
    pub values: Matrix,
}

impl SeriesFrame {
    pub fn new(channel_names: Vec<String>, values: Matrix) -> Result<Self> {
        if channel_names.len() != values.cols() || channel_names.is_empty() {
            return Err(PrismError::Shape(format!(
                "{} channel names for {} value columns",
                channel_names.len(),
                values.cols()
            )));
        }
        Ok(Self {
            channel_names,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One training or evaluation instance: `history` is the `[L x D]` context
/// and `future` the `[T x D]` ground truth that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub history: Matrix,
    pub future: Matrix,
    /// Time index of the first history row in the source frame, or the
    /// instance index for generated data.
    pub origin_index: usize,
}

impl Window {
    pub fn channels(&self) -> usize {
        self.history.cols()
    }
}

/// Supported CSV layouts for [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// Header row of channel names, one row per time step. A leading
    /// `timestamp` column (case-insensitive header) is skipped.
    Wide,
}

/// Loads a wide-layout CSV into a [`SeriesFrame`]. Parse errors cite the
/// 1-based data row and the column name.
pub fn load_csv(path: &Path, layout: CsvLayout) -> Result<SeriesFrame> {
    let CsvLayout::Wide = layout;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PrismError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{path:?}: {e}"),
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

    let skip_first = headers
        .first()
        .is_some_and(|h| h.eq_ignore_ascii_case("timestamp"));
    let first_data_col = usize::from(skip_first);
    let channel_names: Vec<String> = headers[first_data_col..].to_vec();
    if channel_names.is_empty() {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "no data columns after the timestamp column".into(),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
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
        let mut row = Vec::with_capacity(channel_names.len());
        for (c, name) in channel_names.iter().enumerate() {
            let raw = &record[first_data_col + c];
            let value: f64 = raw.parse().map_err(|_| PrismError::Parse {
                row: row_no,
                column: name.clone(),
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(PrismError::Parse {
                    row: row_no,
                    column: name.clone(),
                    message: format!("non-finite value {value}"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PrismError::Parse {
            row: 0,
            column: String::new(),
            message: "no data rows".into(),
        });
    }

    SeriesFrame::new(channel_names, Matrix::from_rows(&rows)?)
}

/// Cuts sliding windows from `region` of the frame: origins start at
/// `region.start` and advance by `stride` while `origin + L + T` still fits.
pub fn make_windows(
    frame: &SeriesFrame,
    history_len: usize,
    horizon: usize,
    stride: usize,
    region: Range<usize>,
) -> Result<Vec<Window>> {
    if history_len == 0 || horizon == 0 || stride == 0 {
        return Err(PrismError::Config(format!(
            "window parameters must be positive: L={history_len}, T={horizon}, stride={stride}"
        )));
    }
    if region.end > frame.len() || region.start > region.end {
        return Err(PrismError::Config(format!(
            "region {region:?} outside frame of length {}",
            frame.len()
        )));
    }
    let region_len = region.end - region.start;
    if region_len < history_len + horizon {
        return Err(PrismError::Config(format!(
            "region of length {region_len} too short for L + T = {}",
            history_len + horizon
        )));
    }

    let count = (region_len - history_len - horizon) / stride + 1;
    let channels = frame.channels();
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let origin = region.start + i * stride;
        let mut history = Matrix::zeros(history_len, channels);
        let mut future = Matrix::zeros(horizon, channels);
        for d in 0..channels {
            for t in 0..history_len {
                history.set(t, d, frame.values.get(origin + t, d));
            }
            for t in 0..horizon {
                future.set(t, d, frame.values.get(origin + history_len + t, d));
            }
        }
        windows.push(Window {
            history,
            future,
            origin_index: origin,
        });
    }
    Ok(windows)
}

/// Per-channel normalization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    /// Divide by the mean absolute value of the history; location is zero.
    Mean,
    /// Standardize by the history mean and population standard deviation.
    MeanStd,
}

/// Fitted per-channel affine normalizer: `scaled = (x - location) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub location: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Scale entries are floored here so all-zero channels stay well-defined.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Fits a scaler on a `[L x D]` history. Statistics come from the history
/// alone; applying the same transform to the future keeps evaluation free
/// of look-ahead leakage.
pub fn fit_scaler(history: &Matrix, kind: ScalerKind) -> Result<Scaler> {
    let (len, channels) = (history.rows(), history.cols());
    if len == 0 || channels == 0 {
        return Err(PrismError::Shape("cannot fit a scaler on empty history".into()));
    }
    let mut location = vec![0.0; channels];
    let mut scale = vec![0.0; channels];
    for d in 0..channels {
        let col = history.column(d);
        match kind {
            ScalerKind::Mean => {
                let mean_abs = col.iter().map(|v| v.abs()).sum::<f64>() / len as f64;
                scale[d] = mean_abs.max(SCALE_FLOOR);
            }
            ScalerKind::MeanStd => {
                let mean = col.iter().sum::<f64>() / len as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64;
                location[d] = mean;
                scale[d] = var.sqrt().max(SCALE_FLOOR);
            }
        }
    }
    Ok(Scaler {
        kind,
        location,
        scale,
    })
}

impl Scaler {
    /// Identity transform for `channels` channels.
    pub fn identity(channels: usize) -> Self {
        Self {
            kind: ScalerKind::Mean,
            location: vec![0.0; channels],
            scale: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    fn check_channels(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.channels() {
            return Err(PrismError::Shape(format!(
                "scaler has {} channels, data has {}",
                self.channels(),
                data.cols()
            )));
        }
        Ok(())
    }

    /// `(x - location) / scale`, column by column.
    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        self.check_channels(data)?;
        let mut out = Matrix::zeros(data.rows(), data.cols());
        for d in 0..data.cols() {
            for t in 0..data.rows() {
                out.set(t, d, (data.get(t, d) - self.location[d]) / self.scale[d]);
            }
        }
        Ok(out)
    }

    /// Exact inverse of [`Scaler::apply`].
    pub fn invert(&self, data: &Matrix) -> Result<Matrix> {
        self.check_channels(data)?;
        let mut out = Matrix::zeros(data.rows(), data.cols());
        for d in 0..data.cols() {
            for t in 0..data.rows() {
                out.set(t, d, data.get(t, d) * self.scale[d] + self.location[d]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn frame(rows: &[Vec<f64>]) -> SeriesFrame {
        let names = (0..rows[0].len()).map(|i| format!("c{i}")).collect();
        SeriesFrame::new(names, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_direct_parse() {
        let f = write_temp("a,b\n1,2\n3,4\n5,6\n");
        let frame = load_csv(f.path(), CsvLayout::Wide).unwrap();
        assert_eq!(frame.channels(), 2);
        assert_eq!(frame.len(), 3);
        assert_eq!(frame.channel_names, vec!["a", "b"]);
        assert_eq!(frame.values.get(2, 1), 6.0);
    }

    #[test]
    fn load_csv_skips_timestamp_column() {
        let f = write_temp("timestamp,load\n2020-01-01,1.5\n2020-01-02,2.5\n");
        let frame = load_csv(f.path(), CsvLayout::Wide).unwrap();
        assert_eq!(frame.channels(), 1);
        assert_eq!(frame.channel_names, vec!["load"]);
        assert_eq!(frame.values.get(1, 0), 2.5);
    }

    #[test]
    fn load_csv_cites_row_and_column() {
        let f = write_temp("a,b\n1,2\nabc,4\n");
        match load_csv(f.path(), CsvLayout::Wide) {
            Err(PrismError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_empty_and_ragged() {
        let empty = write_temp("a,b\n");
        assert!(matches!(
            load_csv(empty.path(), CsvLayout::Wide),
            Err(PrismError::Parse { .. })
        ));
        let ragged = write_temp("a,b\n1,2\n3\n");
        match load_csv(ragged.path(), CsvLayout::Wide) {
            Err(PrismError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn make_windows_counting_formula() {
        let values: Vec<Vec<f64>> = (0..100).map(|t| vec![t as f64]).collect();
        let frame = frame(&values);
        let windows = make_windows(&frame, 24, 24, 1, 0..100).unwrap();
        assert_eq!(windows.len(), 53); // 100 - 48 + 1
        assert_eq!(windows[0].origin_index, 0);
        assert_eq!(windows[52].origin_index, 52);
    }

    #[test]
    fn make_windows_exact_fit_and_too_short() {
        let values: Vec<Vec<f64>> = (0..48).map(|t| vec![t as f64]).collect();
        let frame48 = frame(&values);
        assert_eq!(make_windows(&frame48, 24, 24, 1, 0..48).unwrap().len(), 1);

        let values: Vec<Vec<f64>> = (0..47).map(|t| vec![t as f64]).collect();
        let frame47 = frame(&values);
        assert!(matches!(
            make_windows(&frame47, 24, 24, 1, 0..47),
            Err(PrismError::Config(_))
        ));
    }

    #[test]
    fn windows_reproduce_frame_values() {
        let values: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64, -(t as f64)]).collect();
        let frame = frame(&values);
        let windows = make_windows(&frame, 3, 2, 4, 2..18).unwrap();
        for w in &windows {
            for t in 0..3 {
                assert_eq!(w.history.get(t, 0), (w.origin_index + t) as f64);
                assert_eq!(w.history.get(t, 1), -((w.origin_index + t) as f64));
            }
            for t in 0..2 {
                assert_eq!(w.future.get(t, 0), (w.origin_index + 3 + t) as f64);
            }
        }
    }

    #[test]
    fn mean_scaler_uses_mean_absolute_value() {
        let history = Matrix::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let scaler = fit_scaler(&history, ScalerKind::Mean).unwrap();
        assert_eq!(scaler.location, vec![0.0]);
        assert_eq!(scaler.scale, vec![3.0]);
        let scaled = scaler.apply(&Matrix::from_rows(&[vec![3.0], vec![6.0]]).unwrap()).unwrap();
        assert_eq!(scaled.get(0, 0), 1.0);
        assert_eq!(scaled.get(1, 0), 2.0);
    }

    #[test]
    fn mean_std_scaler_population_std() {
        let history = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let scaler = fit_scaler(&history, ScalerKind::MeanStd).unwrap();
        assert_eq!(scaler.location, vec![2.0]);
        assert_eq!(scaler.scale, vec![1.0]);
        let scaled = scaler.apply(&history).unwrap();
        assert_eq!(scaled.get(0, 0), -1.0);
        assert_eq!(scaled.get(1, 0), 1.0);
    }

    #[test]
    fn all_zero_channel_hits_the_scale_floor() {
        let history = Matrix::zeros(4, 1);
        let scaler = fit_scaler(&history, ScalerKind::Mean).unwrap();
        assert_eq!(scaler.scale, vec![SCALE_FLOOR]);
        let std_scaler = fit_scaler(&history, ScalerKind::MeanStd).unwrap();
        assert_eq!(std_scaler.scale, vec![SCALE_FLOOR]);
    }

    #[test]
    fn identity_scaler_is_a_noop() {
        let data = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.0, 4.0]]).unwrap();
        let scaler = Scaler::identity(2);
        assert_eq!(scaler.apply(&data).unwrap(), data);
        assert_eq!(scaler.invert(&data).unwrap(), data);
    }

    #[test]
    fn scaler_rejects_channel_mismatch() {
        let scaler = Scaler::identity(2);
        let data = Matrix::zeros(3, 1);
        assert!(matches!(scaler.apply(&data), Err(PrismError::Shape(_))));
    }
}
