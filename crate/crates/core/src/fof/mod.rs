//! Fourier occupancy field codec.
//!
//! The occupancy of a pixel's ray, `f(z)` on `z in [-1, 1]`, is expanded as
//!
//! ```text
//! f(z) ~ a0 / 2 + sum_{n >= 1} [ a_n cos(n pi z) + b_n sin(n pi z) ]
//! ```
//!
//! with `a_n = int f(z) cos(n pi z) dz` and `b_n = int f(z) sin(n pi z) dz`.
//! For an indicator of `[s, e]` these integrals have closed forms, so a mesh
//! is encoded exactly from its ray intervals. Channels are laid out as
//! `[a0, a1, b1, a2, b2, ...]` and truncated to `C` entries; with `C = 32`
//! the last channel is `a16` and `b16` is dropped.

mod container;

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Interval, IntervalImage, Vec3};
use crate::lattice::{depth_z, pixel_x, pixel_y};
use crate::ErrorClass;

pub use container::{
    read_csej, read_fof, read_occupancy, write_csej, write_fof, write_occupancy, ContainerError,
    CsejHeader, Magic, LAYOUT_COS_SIN,
};

#[derive(Debug, Error, PartialEq)]
pub enum FofError {
    #[error("channel count must be at least 1")]
    NoChannels,
    #[error("grid size {width}x{height}x{channels} is invalid")]
    BadShape {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("data length {got} does not match shape (expected {expected})")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("depth sample count {0} is below 2")]
    TooFewSamples(usize),
    #[error("iso level {0} must lie strictly between 0 and 1")]
    BadIso(f64),
    #[error("low band size {low} must satisfy 1 <= low < {channels}")]
    BadSplit { low: usize, channels: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("sphere radius {0} must be positive and finite")]
    BadRadius(f64),
}

impl FofError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Format
    }
}

/// Meaning of one FOF channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Dc,
    Cos(usize),
    Sin(usize),
}

impl Channel {
    pub fn of(index: usize) -> Channel {
        match index {
            0 => Channel::Dc,
            c if c % 2 == 1 => Channel::Cos((c + 1) / 2),
            c => Channel::Sin(c / 2),
        }
    }
}

/// `W x H x C` grid of truncated Fourier coefficients stored as `f32`,
/// row-major `(j, i, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FofGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FofGrid {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self, FofError> {
        check_shape(width, height, channels)?;
        Ok(FofGrid {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        })
    }

    pub fn from_data(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, FofError> {
        check_shape(width, height, channels)?;
        check_data(width * height * channels, &data)?;
        Ok(FofGrid {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Coefficient vector of pixel `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f32] {
        let start = (j * self.width + i) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [f32] {
        let start = (j * self.width + i) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Copies channels `range` into a new grid.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<FofGrid, FofError> {
        if range.start >= range.end || range.end > self.channels {
            return Err(FofError::BadSplit {
                low: range.start,
                channels: self.channels,
            });
        }
        let mut data = Vec::with_capacity(self.width * self.height * range.len());
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[range.clone()]);
        }
        FofGrid::from_data(self.width, self.height, range.len(), data)
    }

    /// Concatenates grids of equal footprint along the channel axis.
    pub fn concat_channels(parts: &[&FofGrid]) -> Result<FofGrid, FofError> {
        let first = parts.first().ok_or(FofError::NoChannels)?;
        let (w, h) = (first.width, first.height);
        if let Some(bad) = parts.iter().find(|p| p.width != w || p.height != h) {
            return Err(FofError::ShapeMismatch {
                left: first.shape(),
                right: bad.shape(),
            });
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(w * h * channels);
        for px in 0..w * h {
            for part in parts {
                data.extend_from_slice(&part.data[px * part.channels..(px + 1) * part.channels]);
            }
        }
        FofGrid::from_data(w, h, channels, data)
    }
}

/// `W x H x R` occupancy samples, row-major `(j, i, k)` with the depth
/// sample `k` fastest. Sample `k` sits at `z = -1 + (2k + 1) / R`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    depth: usize,
    data: Vec<f32>,
}

impl OccupancyGrid {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Result<Self, FofError> {
        check_shape(width, height, depth)?;
        Ok(OccupancyGrid {
            width,
            height,
            depth,
            data: vec![0.0; width * height * depth],
        })
    }

    pub fn from_data(
        width: usize,
        height: usize,
        depth: usize,
        data: Vec<f32>,
    ) -> Result<Self, FofError> {
        check_shape(width, height, depth)?;
        check_data(width * height * depth, &data)?;
        Ok(OccupancyGrid {
            width,
            height,
            depth,
            data,
        })
    }

    /// Samples `f(x, y, z)` at every lattice point.
    pub fn from_fn(
        width: usize,
        height: usize,
        depth: usize,
        f: impl Fn(f64, f64, f64) -> f32 + Sync,
    ) -> Result<Self, FofError> {
        let mut grid = OccupancyGrid::zeros(width, height, depth)?;
        grid.data
            .par_chunks_mut(width * depth)
            .enumerate()
            .for_each(|(j, row)| {
                let y = pixel_y(j, height);
                for (i, column) in row.chunks_exact_mut(depth).enumerate() {
                    let x = pixel_x(i, width);
                    for (k, v) in column.iter_mut().enumerate() {
                        *v = f(x, y, depth_z(k, depth));
                    }
                }
            });
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.depth)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[(j * self.width + i) * self.depth + k]
    }

    /// Depth column of pixel `(i, j)`.
    pub fn column(&self, i: usize, j: usize) -> &[f32] {
        let start = (j * self.width + i) * self.depth;
        &self.data[start..start + self.depth]
    }

    /// Number of samples with value `>= iso`.
    pub fn count_inside(&self, iso: f32) -> usize {
        self.data.iter().filter(|&&v| v >= iso).count()
    }
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<(), FofError> {
    if channels == 0 {
        return Err(FofError::NoChannels);
    }
    if width == 0
        || height == 0
        || width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .is_none()
    {
        return Err(FofError::BadShape {
            width,
            height,
            channels,
        });
    }
    Ok(())
}

fn check_data(expected: usize, data: &[f32]) -> Result<(), FofError> {
    if data.len() != expected {
        return Err(FofError::DataLength {
            expected,
            got: data.len(),
        });
    }
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        return Err(FofError::NonFinite(bad));
    }
    Ok(())
}

/// Adds the closed-form coefficients of the indicator of `[start, end]` to
/// `acc` (length = channel count).
///
/// The harmonics are generated by rotating `(cos n pi z, sin n pi z)` one
/// step at a time, which costs two `sin_cos` calls per interval.
pub fn accumulate_interval(acc: &mut [f64], start: f64, end: f64) {
    let channels = acc.len();
    if channels == 0 {
        return;
    }
    acc[0] += end - start;
    let harmonics = channels / 2;
    if harmonics == 0 {
        return;
    }
    let (s1, c1) = (PI * start).sin_cos();
    let (e1, f1) = (PI * end).sin_cos();
    // (sin n pi s, cos n pi s) and (sin n pi e, cos n pi e)
    let (mut ss, mut cs) = (s1, c1);
    let (mut se, mut ce) = (e1, f1);
    for n in 1..=harmonics {
        let npi = n as f64 * PI;
        acc[2 * n - 1] += (se - ss) / npi;
        if 2 * n < channels {
            acc[2 * n] += (cs - ce) / npi;
        }
        let next_ss = ss * c1 + cs * s1;
        cs = cs * c1 - ss * s1;
        ss = next_ss;
        let next_se = se * f1 + ce * e1;
        ce = ce * f1 - se * e1;
        se = next_se;
    }
}

/// Coefficients of a union of disjoint intervals, accumulated in order.
pub fn interval_coefficients(intervals: &[Interval], channels: usize) -> Vec<f64> {
    let mut acc = vec![0.0; channels];
    for iv in intervals {
        accumulate_interval(&mut acc, iv.start, iv.end);
    }
    acc
}

/// Encodes every pixel's intervals into `channels` Fourier coefficients.
pub fn intervals_to_fof(image: &IntervalImage, channels: usize) -> Result<FofGrid, FofError> {
    let (width, height) = (image.width(), image.height());
    let mut grid = FofGrid::zeros(width, height, channels)?;
    grid.data
        .par_chunks_mut(width * channels)
        .enumerate()
        .for_each(|(j, row)| {
            let mut acc = vec![0.0f64; channels];
            for (i, out) in row.chunks_exact_mut(channels).enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for iv in image.pixel(i, j) {
                    accumulate_interval(&mut acc, iv.start, iv.end);
                }
                for (o, a) in out.iter_mut().zip(&acc) {
                    *o = *a as f32;
                }
            }
        });
    Ok(grid)
}

/// Evaluates the series of one pixel at depth `z` directly (no basis
/// matrix). Slow; used as a reference.
pub fn evaluate_series(coefficients: &[f32], z: f64) -> f64 {
    let mut value = 0.5 * coefficients[0] as f64;
    for (c, &coef) in coefficients.iter().enumerate().skip(1) {
        value += coef as f64
            * match Channel::of(c) {
                Channel::Cos(n) => (n as f64 * PI * z).cos(),
                Channel::Sin(n) => (n as f64 * PI * z).sin(),
                Channel::Dc => unreachable!(),
            };
    }
    value
}

/// Options for [`fof_to_occupancy_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeOptions {
    /// Multiply harmonic `n` by the Lanczos factor `sinc(n / (N + 1))`,
    /// `N` being the highest harmonic present, to damp Gibbs ringing.
    pub lanczos: bool,
}

/// Transposed basis matrix: row `c` holds channel `c`'s basis function at
/// every depth sample.
fn basis_matrix(channels: usize, depth: usize, options: DecodeOptions) -> Vec<f64> {
    let top = channels / 2;
    let sigma = |n: usize| {
        if options.lanczos {
            let x = PI * n as f64 / (top + 1) as f64;
            x.sin() / x
        } else {
            1.0
        }
    };
    let mut basis = vec![0.0; channels * depth];
    for c in 0..channels {
        let row = &mut basis[c * depth..(c + 1) * depth];
        for (k, b) in row.iter_mut().enumerate() {
            let z = depth_z(k, depth);
            *b = match Channel::of(c) {
                Channel::Dc => 0.5,
                Channel::Cos(n) => sigma(n) * (n as f64 * PI * z).cos(),
                Channel::Sin(n) => sigma(n) * (n as f64 * PI * z).sin(),
            };
        }
    }
    basis
}

/// Inverts a FOF grid into `depth` occupancy samples per pixel.
pub fn fof_to_occupancy(fof: &FofGrid, depth: usize) -> Result<OccupancyGrid, FofError> {
    fof_to_occupancy_with(fof, depth, DecodeOptions::default())
}

pub fn fof_to_occupancy_with(
    fof: &FofGrid,
    depth: usize,
    options: DecodeOptions,
) -> Result<OccupancyGrid, FofError> {
    if depth < 2 {
        return Err(FofError::TooFewSamples(depth));
    }
    let channels = fof.channels;
    let basis = basis_matrix(channels, depth, options);
    let mut grid = OccupancyGrid::zeros(fof.width, fof.height, depth)?;
    grid.data
        .par_chunks_mut(depth)
        .zip(fof.data.par_chunks(channels))
        .for_each_init(
            || vec![0.0f64; depth],
            |acc, (out, coefs)| {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (c, &coef) in coefs.iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    let coef = coef as f64;
                    let row = &basis[c * depth..(c + 1) * depth];
                    for (a, b) in acc.iter_mut().zip(row) {
                        *a += coef * b;
                    }
                }
                for (o, a) in out.iter_mut().zip(acc.iter()) {
                    *o = *a as f32;
                }
            },
        );
    Ok(grid)
}

/// Extracts, per pixel, the maximal runs of samples `>= iso` as intervals.
/// Run boundaries are placed by linear interpolation between the bracketing
/// samples; a run touching the first or last sample extends to the domain
/// bound.
pub fn occupancy_to_intervals(grid: &OccupancyGrid, iso: f64) -> Result<IntervalImage, FofError> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(FofError::BadIso(iso));
    }
    let (w, h, r) = grid.shape();
    let step = 2.0 / r as f64;
    let crossing = |k: usize, below: f64, above: f64| {
        // Between sample k and k + 1.
        let t = (iso - below) / (above - below);
        depth_z(k, r) + t * step
    };
    let pixels: Vec<Vec<Interval>> = grid
        .data
        .par_chunks(r)
        .map(|col| {
            let mut out = Vec::new();
            let mut start = None;
            for k in 0..r {
                let v = col[k] as f64;
                let inside = v >= iso;
                match (start, inside) {
                    (None, true) => {
                        start = Some(if k == 0 {
                            -1.0
                        } else {
                            crossing(k - 1, col[k - 1] as f64, v)
                        });
                    }
                    (Some(s), false) => {
                        let e = crossing(k - 1, col[k - 1] as f64, v);
                        if e > s {
                            out.push(Interval::new(s, e));
                        }
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                out.push(Interval::new(s, 1.0));
            }
            out
        })
        .collect();
    IntervalImage::from_pixels(w, h, pixels).map_err(|_| FofError::BadShape {
        width: w,
        height: h,
        channels: r,
    })
}

/// Exact voxelization: sample `k` is 1 when its depth lies in one of the
/// pixel's intervals, else 0.
pub fn voxelize_intervals(image: &IntervalImage, depth: usize) -> Result<OccupancyGrid, FofError> {
    let mut grid = OccupancyGrid::zeros(image.width(), image.height(), depth)?;
    grid.data
        .par_chunks_mut(depth)
        .enumerate()
        .for_each(|(p, col)| {
            for iv in image.pixel_at(p) {
                for (k, v) in col.iter_mut().enumerate() {
                    let z = depth_z(k, depth);
                    if z >= iv.start && z <= iv.end {
                        *v = 1.0;
                    }
                }
            }
        });
    Ok(grid)
}

/// Low and high frequency halves of a FOF grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSplit {
    pub low: FofGrid,
    pub high: FofGrid,
    /// Channel index where the high band starts.
    pub split: usize,
}

/// Splits channels `[0, low)` from `[low, C)`.
pub fn band_split(fof: &FofGrid, low: usize) -> Result<BandSplit, FofError> {
    if low < 1 || low >= fof.channels {
        return Err(FofError::BadSplit {
            low,
            channels: fof.channels,
        });
    }
    Ok(BandSplit {
        low: fof.select_channels(0..low)?,
        high: fof.select_channels(low..fof.channels)?,
        split: low,
    })
}

/// Inverse of [`band_split`].
pub fn band_merge(bands: &BandSplit) -> Result<FofGrid, FofError> {
    if bands.low.channels != bands.split {
        return Err(FofError::BadSplit {
            low: bands.split,
            channels: bands.low.channels,
        });
    }
    FofGrid::concat_channels(&[&bands.low, &bands.high])
}

/// Mean squared error over every pixel and channel, accumulated in `f64`.
pub fn hf_mse(pred: &FofGrid, truth: &FofGrid) -> Result<f64, FofError> {
    if pred.shape() != truth.shape() {
        return Err(FofError::ShapeMismatch {
            left: pred.shape(),
            right: truth.shape(),
        });
    }
    let sum: f64 = pred
        .data
        .iter()
        .zip(&truth.data)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.data.len() as f64)
}

/// Orthographic chord of a sphere at `(x, y)`, clipped to `[-1, 1]`.
pub fn sphere_chord(center: Vec3, radius: f64, x: f64, y: f64) -> Option<Interval> {
    let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
    let r2 = radius * radius;
    if d2 > r2 {
        return None;
    }
    let h = (r2 - d2).sqrt();
    let start = (center[2] - h).max(-1.0);
    let end = (center[2] + h).min(1.0);
    (start < end).then(|| Interval::new(start, end))
}

/// Analytic FOF of a solid sphere.
pub fn sphere_fof(
    center: Vec3,
    radius: f64,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<FofGrid, FofError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(FofError::BadRadius(radius));
    }
    let mut grid = FofGrid::zeros(width, height, channels)?;
    grid.data
        .par_chunks_mut(width * channels)
        .enumerate()
        .for_each(|(j, row)| {
            let y = pixel_y(j, height);
            let mut acc = vec![0.0f64; channels];
            for (i, out) in row.chunks_exact_mut(channels).enumerate() {
                if let Some(iv) = sphere_chord(center, radius, pixel_x(i, width), y) {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    accumulate_interval(&mut acc, iv.start, iv.end);
                    for (o, a) in out.iter_mut().zip(&acc) {
                        *o = *a as f32;
                    }
                }
            }
        });
    Ok(grid)
}
