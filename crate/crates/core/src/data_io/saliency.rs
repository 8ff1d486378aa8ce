use std::path::Path;

use super::pgm::{read_pgm, Greymap};
use super::tensor_file::read_tensor;
use crate::attention::SaliencyGrid;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A full-resolution saliency map before it is fitted to the feature grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SaliencySource {
    /// Greymap, normalised by its `maxval` (255 for 8-bit maps).
    Image(Greymap),
    /// `rows x cols` tensor already in `[0, 1]`.
    Tensor(Tensor),
}

impl SaliencySource {
    /// Loads a `.pgm` greymap or a `TNSR` tensor, chosen by file magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"P5") {
            Ok(SaliencySource::Image(read_pgm(path)?))
        } else {
            Ok(SaliencySource::Tensor(read_tensor(path)?))
        }
    }

    /// `(height, width, values in [0, 1])`.
    fn normalised(&self) -> Result<(usize, usize, Vec<f64>)> {
        match self {
            SaliencySource::Image(m) => {
                let scale = m.maxval as f64;
                Ok((m.height, m.width, m.pixels.iter().map(|&p| p as f64 / scale).collect()))
            }
            SaliencySource::Tensor(t) => {
                if t.rank() != 2 {
                    return Err(Error::shape(format!(
                        "saliency tensor must be rows x cols, got {:?}",
                        t.dims()
                    )));
                }
                if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Data("saliency tensor values must lie in [0, 1]".into()));
                }
                Ok((t.rows(), t.cols(), t.data().to_vec()))
            }
        }
    }
}

/// Overlap of pixel `[p, p + 1)` with `[lo, hi)`.
fn overlap(p: usize, lo: f64, hi: f64) -> f64 {
    let a = (p as f64).max(lo);
    let b = ((p + 1) as f64).min(hi);
    (b - a).max(0.0)
}

/// Area-average downsampling of an `h x w` raster into `rows x cols` cells.
/// Pixels straddling a cell boundary contribute in proportion to coverage.
pub fn area_downsample(values: &[f64], h: usize, w: usize, rows: usize, cols: usize) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg("grid dims must be positive"));
    }
    if rows > h || cols > w {
        return Err(Error::arg(format!(
            "grid {rows}x{cols} is larger than the {h}x{w} source"
        )));
    }
    debug_assert_eq!(values.len(), h * w);
    let cell_h = h as f64 / rows as f64;
    let cell_w = w as f64 / cols as f64;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (lo_y, hi_y) = (r as f64 * cell_h, (r + 1) as f64 * cell_h);
        let ys = (lo_y.floor() as usize)..(hi_y.ceil() as usize).min(h);
        for c in 0..cols {
            let (lo_x, hi_x) = (c as f64 * cell_w, (c + 1) as f64 * cell_w);
            let mut acc = 0.0;
            for y in ys.clone() {
                let wy = overlap(y, lo_y, hi_y);
                if wy == 0.0 {
                    continue;
                }
                let row = &values[y * w..(y + 1) * w];
                let x0 = lo_x.floor() as usize;
                let x1 = (hi_x.ceil() as usize).min(w);
                for (x, v) in row.iter().enumerate().take(x1).skip(x0) {
                    acc += wy * overlap(x, lo_x, hi_x) * v;
                }
            }
            out.push(acc / (cell_h * cell_w));
        }
    }
    Ok(out)
}

/// Fits a saliency map to a `rows x cols` feature grid by area averaging.
/// No renormalisation is applied afterwards.
pub fn prepare_saliency(source: &SaliencySource, rows: usize, cols: usize) -> Result<SaliencyGrid> {
    let (h, w, values) = source.normalised()?;
    let cells = area_downsample(&values, h, w, rows, cols)?;
    // Area averaging of values in [0, 1] can overshoot by an ulp.
    SaliencyGrid::new(cells.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}
