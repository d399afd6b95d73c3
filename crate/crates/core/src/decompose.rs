//! Trend/season split with a centered moving-average filter.

use crate::error::{PrismError, Result};
use crate::math::Matrix;

/// Additive trend/season split of an `[L x D]` series. The season is
/// defined as input minus trend, so the two components reconstruct the
/// input up to one floating-point subtraction round-trip.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub trend: Matrix,
    pub season: Matrix,
}

/// Per channel: pad both ends by `(kernel - 1) / 2` with edge replication,
/// average a centered window of width `kernel`, and subtract to get the
/// seasonal remainder. `kernel` must be odd so the window is centered;
/// `kernel = 1` is the identity filter.
pub fn decompose(x: &Matrix, kernel: usize) -> Result<Decomposition> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(PrismError::Config(format!(
            "decomposition kernel must be odd and positive, got {kernel}"
        )));
    }
    let (len, channels) = (x.rows(), x.cols());
    if len == 0 {
        return Err(PrismError::Shape("cannot decompose an empty series".into()));
    }

    let half = (kernel - 1) / 2;
    let mut trend = Matrix::zeros(len, channels);
    let mut season = Matrix::zeros(len, channels);
    let mut padded = Vec::with_capacity(len + 2 * half);
    for d in 0..channels {
        padded.clear();
        let col = x.column(d);
        padded.extend(std::iter::repeat_n(col[0], half));
        padded.extend_from_slice(&col);
        padded.extend(std::iter::repeat_n(col[len - 1], half));

        for t in 0..len {
            let window = &padded[t..t + kernel];
            let mean = window.iter().sum::<f64>() / kernel as f64;
            trend.set(t, d, mean);
            season.set(t, d, col[t] - mean);
        }
    }
    Ok(Decomposition { trend, season })
}
