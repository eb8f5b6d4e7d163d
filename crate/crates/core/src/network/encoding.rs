use ndarray::Array2;

use crate::error::{Error, Result};

/// Sinusoidal positional encoding of a 2-D coordinate.
///
/// For `k = 1..=omega` the frequency is `f_min^(2k/omega)`; each scalar
/// coordinate expands to a block of `omega` sines followed by `omega`
/// cosines. The encoded pair is `[sin x | cos x | sin y | cos y]`, length
/// `4 * omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    pub f_min: f64,
    pub omega: usize,
    /// Units of the coordinates fed to the encoding.
    pub frame: CoordinateFrame,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            f_min: 1e-4,
            omega: 64,
            frame: CoordinateFrame::Grid,
        }
    }
}

/// How lattice positions map to network input coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordinateFrame {
    /// Node spacing 1: `x = j`, `y = ny - 1 - i`.
    #[default]
    Grid,
    /// Node lattice stretched onto `[0, 1]^2`.
    Unit,
}

impl CoordinateFrame {
    pub fn as_str(self) -> &'static str {
        match self {
            CoordinateFrame::Grid => "grid",
            CoordinateFrame::Unit => "unit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(CoordinateFrame::Grid),
            "unit" => Ok(CoordinateFrame::Unit),
            other => Err(Error::Invalid(format!("unknown coordinate frame `{other}`"))),
        }
    }

    fn spans(self, ny: usize, nx: usize) -> (f64, f64) {
        match self {
            CoordinateFrame::Grid => (1.0, 1.0),
            CoordinateFrame::Unit => (span(ny), span(nx)),
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min.is_finite()) || self.omega == 0 {
            return Err(Error::Invalid(format!(
                "encoding needs f_min > 0 and omega >= 1, got f_min={} omega={}",
                self.f_min, self.omega
            )));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        4 * self.omega
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.omega)
            .map(|k| self.f_min.powf(2.0 * k as f64 / self.omega as f64))
            .collect()
    }
}

pub fn positional_encode(x: f64, y: f64, cfg: &EncodingConfig) -> Vec<f64> {
    let freqs = cfg.frequencies();
    let mut out = Vec::with_capacity(cfg.encoded_len());
    for c in [x, y] {
        out.extend(freqs.iter().map(|f| (f * c).sin()));
        out.extend(freqs.iter().map(|f| (f * c).cos()));
    }
    out
}

/// Encodes a batch of coordinates into an `N x 4*omega` matrix.
pub fn encode_batch(coords: &[(f64, f64)], cfg: &EncodingConfig) -> Array2<f64> {
    let freqs = cfg.frequencies();
    let w = cfg.omega;
    let mut out = Array2::zeros((coords.len(), cfg.encoded_len()));
    for (mut row, &(x, y)) in out.rows_mut().into_iter().zip(coords) {
        for (k, f) in freqs.iter().enumerate() {
            let (sx, cx) = (f * x).sin_cos();
            let (sy, cy) = (f * y).sin_cos();
            row[k] = sx;
            row[w + k] = cx;
            row[2 * w + k] = sy;
            row[3 * w + k] = cy;
        }
    }
    out
}

/// Coordinates of the node lattice, row-major with `y` growing upward. In
/// the unit frame `x = j / (nx - 1)` and `y = (ny - 1 - i) / (ny - 1)`.
pub fn node_coords(ny: usize, nx: usize, frame: CoordinateFrame) -> Vec<(f64, f64)> {
    let (sy, sx) = frame.spans(ny, nx);
    (0..ny)
        .flat_map(|i| (0..nx).map(move |j| (j as f64 / sx, (ny - 1 - i) as f64 / sy)))
        .collect()
}

/// Normalized coordinates of the cell centers of an `ny x nx` node lattice,
/// in the same frame as [`node_coords`]. Returns `(ny - 1) * (nx - 1)` points.
pub fn cell_coords(ny: usize, nx: usize, frame: CoordinateFrame) -> Vec<(f64, f64)> {
    let (sy, sx) = frame.spans(ny, nx);
    (0..ny.saturating_sub(1))
        .flat_map(|i| {
            (0..nx.saturating_sub(1))
                .map(move |j| ((j as f64 + 0.5) / sx, ((ny - 1 - i) as f64 - 0.5) / sy))
        })
        .collect()
}

fn span(n: usize) -> f64 {
    n.saturating_sub(1).max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encodes_to_zero_sines_unit_cosines() {
        let cfg = EncodingConfig::default();
        let e = positional_encode(0.0, 0.0, &cfg);
        assert_eq!(e.len(), 256);
        for blk in 0..4 {
            let want = if blk % 2 == 0 { 0.0 } else { 1.0 };
            assert!(e[blk * 64..(blk + 1) * 64].iter().all(|v| *v == want));
        }
    }

    #[test]
    fn single_frequency() {
        let cfg = EncodingConfig { f_min: 1e-4, omega: 1, ..Default::default() };
        let e = positional_encode(1.0, 0.0, &cfg);
        let f2 = 1e-4f64 * 1e-4;
        assert!((e[0] - f2.sin()).abs() < 1e-24);
        assert!((e[1] - f2.cos()).abs() < 1e-16);
    }

    #[test]
    fn periodic_per_entry() {
        let cfg = EncodingConfig { f_min: 1e-2, omega: 4, ..Default::default() };
        let freqs = cfg.frequencies();
        let x = 0.37;
        let base = positional_encode(x, 0.0, &cfg);
        for (k, f) in freqs.iter().enumerate() {
            let shifted = positional_encode(x + 2.0 * std::f64::consts::PI / f, 0.0, &cfg);
            assert!((shifted[k] - base[k]).abs() < 1e-9);
            assert!((shifted[4 + k] - base[4 + k]).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let cfg = EncodingConfig { f_min: 1e-3, omega: 5, ..Default::default() };
        let pts = [(0.1, 0.9), (0.5, 0.25), (1.0, 0.0)];
        let b = encode_batch(&pts, &cfg);
        for (r, &(x, y)) in pts.iter().enumerate() {
            let p = positional_encode(x, y, &cfg);
            for (k, v) in p.iter().enumerate() {
                assert!((b[[r, k]] - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coordinate_frames() {
        let n = node_coords(3, 5, CoordinateFrame::Unit);
        assert_eq!(n.len(), 15);
        assert_eq!(n[0], (0.0, 1.0));
        assert_eq!(n[14], (1.0, 0.0));
        let c = cell_coords(3, 5, CoordinateFrame::Unit);
        assert_eq!(c.len(), 8);
        assert_eq!(c[0], (0.125, 0.75));
        assert_eq!(c[7], (0.875, 0.25));
        let g = node_coords(3, 5, CoordinateFrame::Grid);
        assert_eq!((g[0], g[14]), ((0.0, 2.0), (4.0, 0.0)));
        let gc = cell_coords(3, 5, CoordinateFrame::Grid);
        assert_eq!((gc[0], gc[7]), ((0.5, 1.5), (3.5, 0.5)));
    }
}
