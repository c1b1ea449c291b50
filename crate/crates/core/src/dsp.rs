//! Spectral decomposition and the orientation-insensitive transforms applied
//! to each tri-axial accelerometer stream.
//!
//! Band separation is an ideal spectral mask: a bin belongs to the low band
//! iff its absolute frequency is strictly below the low cutoff (DC included),
//! and to the high band iff it lies in `[low_cut, high_cut]`. Anything above
//! `high_cut` is the residual, which is empty when `high_cut` is the Nyquist
//! frequency.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Gravity/posture boundary in Hz.
pub const LOW_CUT_HZ: f64 = 0.3;
/// Nominal upper edge of the dynamic-motion band, clamped to Nyquist.
pub const HIGH_CUT_HZ: f64 = 20.0;

/// 3x3 rotation (or any linear map) in row-major order.
pub type Matrix3 = [[f64; 3]; 3];

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Equal-length x/y/z sample streams at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct TriaxialSeries {
    pub fs_hz: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl TriaxialSeries {
    pub fn new(fs_hz: f64, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "sampling rate must be positive, got {fs_hz}"
            )));
        }
        if x.is_empty() || x.len() != y.len() || x.len() != z.len() {
            return Err(Error::Length(format!(
                "axes must be non-empty and equal length (x={}, y={}, z={})",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if x.iter().chain(&y).chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite sample value".into()));
        }
        Ok(Self { fs_hz, x, y, z })
    }

    /// Build from `[x, y, z]` triples.
    pub fn from_samples(fs_hz: f64, samples: &[[f64; 3]]) -> Result<Self> {
        let x = samples.iter().map(|s| s[0]).collect();
        let y = samples.iter().map(|s| s[1]).collect();
        let z = samples.iter().map(|s| s[2]).collect();
        Self::new(fs_hz, x, y, z)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    /// Copy of `len` samples starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let r = start..start + len;
        Self {
            fs_hz: self.fs_hz,
            x: self.x[r.clone()].to_vec(),
            y: self.y[r.clone()].to_vec(),
            z: self.z[r].to_vec(),
        }
    }

    /// Apply `m` to every sample vector.
    pub fn rotated(&self, m: &Matrix3) -> Self {
        let n = self.len();
        let (mut x, mut y, mut z) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for i in 0..n {
            let v = [self.x[i], self.y[i], self.z[i]];
            let r = apply(m, v);
            x.push(r[0]);
            y.push(r[1]);
            z.push(r[2]);
        }
        Self {
            fs_hz: self.fs_hz,
            x,
            y,
            z,
        }
    }

    fn map_axes(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        Ok(Self {
            fs_hz: self.fs_hz,
            x: f(&self.x)?,
            y: f(&self.y)?,
            z: f(&self.z)?,
        })
    }
}

pub fn apply(m: &Matrix3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Forward DFT, unnormalized: `S[k] = Σ s[n]·e^{-2πikn/N}`.
pub fn dft(series: &[f64]) -> Result<Vec<Complex64>> {
    if series.is_empty() {
        return Err(Error::Length("DFT of an empty sequence".into()));
    }
    let mut buf: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    Ok(buf)
}

/// Inverse DFT scaled by `1/N`; returns the complex result.
pub fn idft_complex(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    if spectrum.is_empty() {
        return Err(Error::Length("inverse DFT of an empty spectrum".into()));
    }
    let mut buf = spectrum.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    let scale = 1.0 / buf.len() as f64;
    for c in &mut buf {
        *c *= scale;
    }
    Ok(buf)
}

/// Inverse DFT keeping the real part.
pub fn idft(spectrum: &[Complex64]) -> Result<Vec<f64>> {
    Ok(idft_complex(spectrum)?.into_iter().map(|c| c.re).collect())
}

/// Absolute frequency of DFT bin `k` for an `n`-point transform at `fs_hz`.
pub fn bin_frequency(k: usize, n: usize, fs_hz: f64) -> f64 {
    let folded = k.min(n - k);
    folded as f64 * fs_hz / n as f64
}

/// Effective upper cutoff at a given rate: `min(20 Hz, fs/2)`.
pub fn default_high_cut(fs_hz: f64) -> f64 {
    HIGH_CUT_HZ.min(fs_hz / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Band {
    Low,
    High,
    Residual,
}

fn classify(f: f64, low_cut: f64, high_cut: f64) -> Band {
    if f < low_cut {
        Band::Low
    } else if f <= high_cut {
        Band::High
    } else {
        Band::Residual
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandDecomposition {
    pub low: TriaxialSeries,
    pub high: TriaxialSeries,
    /// Content above `high_cut`; `None` when `high_cut` is the Nyquist frequency.
    pub residual: Option<TriaxialSeries>,
    pub low_cut: f64,
    pub high_cut: f64,
}

impl BandDecomposition {
    /// `low + high (+ residual)`, sample-wise.
    pub fn reconstruct(&self) -> TriaxialSeries {
        let sum = |a: &[f64], b: &[f64], c: Option<&[f64]>| -> Vec<f64> {
            (0..a.len())
                .map(|i| a[i] + b[i] + c.map_or(0.0, |c| c[i]))
                .collect()
        };
        let res = self.residual.as_ref();
        TriaxialSeries {
            fs_hz: self.low.fs_hz,
            x: sum(&self.low.x, &self.high.x, res.map(|r| r.x.as_slice())),
            y: sum(&self.low.y, &self.high.y, res.map(|r| r.y.as_slice())),
            z: sum(&self.low.z, &self.high.z, res.map(|r| r.z.as_slice())),
        }
    }
}

/// Split each axis into low (`|f| < low_cut`), high (`low_cut ≤ |f| ≤ high_cut`)
/// and, if any bins remain above `high_cut`, a residual band.
pub fn band_split(s: &TriaxialSeries, low_cut: f64, high_cut: f64) -> Result<BandDecomposition> {
    let nyquist = s.fs_hz / 2.0;
    if !(low_cut > 0.0 && low_cut < high_cut && high_cut <= nyquist) {
        return Err(Error::Parameter(format!(
            "cutoffs must satisfy 0 < low ({low_cut}) < high ({high_cut}) <= fs/2 ({nyquist})"
        )));
    }
    let n = s.len();
    let bands: Vec<Band> = (0..n)
        .map(|k| classify(bin_frequency(k, n, s.fs_hz), low_cut, high_cut))
        .collect();
    let has_residual = bands.contains(&Band::Residual);

    let mut low = [Vec::new(), Vec::new(), Vec::new()];
    let mut high = [Vec::new(), Vec::new(), Vec::new()];
    let mut residual = [Vec::new(), Vec::new(), Vec::new()];
    for (axis, values) in s.axes().into_iter().enumerate() {
        let spectrum = dft(values)?;
        let masked = |keep: Band| -> Vec<Complex64> {
            spectrum
                .iter()
                .zip(&bands)
                .map(|(&c, &b)| {
                    if b == keep {
                        c
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        };
        low[axis] = idft(&masked(Band::Low))?;
        high[axis] = idft(&masked(Band::High))?;
        if has_residual {
            residual[axis] = idft(&masked(Band::Residual))?;
        }
    }

    let pack = |[x, y, z]: [Vec<f64>; 3]| TriaxialSeries {
        fs_hz: s.fs_hz,
        x,
        y,
        z,
    };
    Ok(BandDecomposition {
        low: pack(low),
        high: pack(high),
        residual: has_residual.then(|| pack(residual)),
        low_cut,
        high_cut,
    })
}

/// `band_split` with the standard 0.3 Hz / `min(20, fs/2)` cutoffs.
pub fn band_split_default(s: &TriaxialSeries) -> Result<BandDecomposition> {
    band_split(s, LOW_CUT_HZ, default_high_cut(s.fs_hz))
}

/// Per-axis forward difference scaled to units per second; one sample shorter.
pub fn derivative(s: &TriaxialSeries) -> Result<TriaxialSeries> {
    if s.len() < 2 {
        return Err(Error::Length(format!(
            "derivative needs at least 2 samples, got {}",
            s.len()
        )));
    }
    let fs = s.fs_hz;
    s.map_axes(|v| Ok(v.windows(2).map(|w| (w[1] - w[0]) * fs).collect()))
}

/// Per-sample Euclidean norm.
pub fn magnitude_series(s: &TriaxialSeries) -> Vec<f64> {
    (0..s.len())
        .map(|i| (s.x[i] * s.x[i] + s.y[i] * s.y[i] + s.z[i] * s.z[i]).sqrt())
        .collect()
}
