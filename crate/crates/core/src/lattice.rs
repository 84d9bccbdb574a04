//! Frame and sampling conventions shared by every module.
//!
//! - Right-handed coordinates, `+y` up. The camera looks along `+z`, so a
//!   surface facing the camera has normal `(0, 0, -1)`.
//! - Yaw is a rotation about `+y`: `x' = x cos t + z sin t`,
//!   `z' = -x sin t + z cos t`. With this sign `(1, 0, 0)` rotated by `pi/2`
//!   lands on `(0, 0, -1)`.
//! - The working domain is the cube `[-1, 1]^3`.
//! - Pixel `(i, j)` of a `W x H` image has its center at
//!   `x = -1 + (2i + 1) / W`, `y = 1 - (2j + 1) / H`; row 0 is the top row.
//! - Depth sample `k` of `R` sits at the cell center `z = -1 + (2k + 1) / R`.
//! - Dense grids are stored row-major as `(j, i, c)` with `c` (channel or
//!   depth sample) fastest.

/// x coordinate of the center of pixel column `i`.
#[inline]
pub fn pixel_x(i: usize, width: usize) -> f64 {
    -1.0 + (2 * i + 1) as f64 / width as f64
}

/// y coordinate of the center of pixel row `j` (row 0 at the top).
#[inline]
pub fn pixel_y(j: usize, height: usize) -> f64 {
    1.0 - (2 * j + 1) as f64 / height as f64
}

/// z coordinate of depth sample `k`.
#[inline]
pub fn depth_z(k: usize, depth: usize) -> f64 {
    -1.0 + (2 * k + 1) as f64 / depth as f64
}

/// Continuous column index of an x coordinate (inverse of [`pixel_x`]).
#[inline]
pub fn column_of(x: f64, width: usize) -> f64 {
    ((x + 1.0) * width as f64 - 1.0) * 0.5
}

/// Continuous depth index of a z coordinate (inverse of [`depth_z`]).
#[inline]
pub fn depth_index_of(z: f64, depth: usize) -> f64 {
    ((z + 1.0) * depth as f64 - 1.0) * 0.5
}
