use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Sakoe–Chiba band half-width in frames; `None` is unconstrained.
    pub band_radius: Option<usize>,
}

impl DtwConfig {
    pub fn check(&self, n: usize, m: usize) -> Result<()> {
        if let Some(r) = self.band_radius {
            if n.abs_diff(m) > r {
                return Err(Error::Config(format!(
                    "band radius {r} cannot connect a {n}x{m} cost matrix"
                )));
            }
        }
        Ok(())
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        self.band_radius.is_none_or(|r| i.abs_diff(j) <= r)
    }
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    sum: f64,
    len: u32,
}

impl Cell {
    const UNREACHABLE: Cell = Cell {
        sum: f64::INFINITY,
        len: 0,
    };

    // Lower accumulated cost wins; among equal costs the longer path wins.
    fn better(self, other: Cell) -> bool {
        self.sum < other.sum || (self.sum == other.sum && self.len > other.len)
    }
}

/// Symmetric-step DTW over an `n × m` cost function.
///
/// Minimizes the accumulated cost, breaking ties toward longer paths, and
/// returns `(accumulated, path_length)`.
pub fn dtw_accumulate(n: usize, m: usize, cfg: &DtwConfig, mut cost: impl FnMut(usize, usize) -> f64) -> Result<(f64, usize)> {
    if n == 0 || m == 0 {
        return Err(Error::Input("DTW needs nonempty sequences".into()));
    }
    cfg.check(n, m)?;
    let mut prev = vec![Cell::UNREACHABLE; m];
    let mut cur = vec![Cell::UNREACHABLE; m];
    for i in 0..n {
        for j in 0..m {
            if !cfg.in_band(i, j) {
                cur[j] = Cell::UNREACHABLE;
                continue;
            }
            let best = if i == 0 && j == 0 {
                Cell { sum: 0.0, len: 0 }
            } else {
                let mut best = Cell::UNREACHABLE;
                if i > 0 && j > 0 && prev[j - 1].better(best) {
                    best = prev[j - 1];
                }
                if i > 0 && prev[j].better(best) {
                    best = prev[j];
                }
                if j > 0 && cur[j - 1].better(best) {
                    best = cur[j - 1];
                }
                best
            };
            cur[j] = if best.sum.is_finite() {
                Cell {
                    sum: best.sum + cost(i, j),
                    len: best.len + 1,
                }
            } else {
                Cell::UNREACHABLE
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let end = prev[m - 1];
    if !end.sum.is_finite() {
        return Err(Error::Config("band leaves no warping path".into()));
    }
    Ok((end.sum, end.len as usize))
}

/// Path-length normalized DTW cost.
pub fn dtw_normalized(n: usize, m: usize, cfg: &DtwConfig, cost: impl FnMut(usize, usize) -> f64) -> Result<f64> {
    let (sum, len) = dtw_accumulate(n, m, cfg, cost)?;
    Ok(sum / len as f64)
}
