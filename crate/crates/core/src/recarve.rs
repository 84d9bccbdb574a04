//! Multi-view recarving.
//!
//! The mesh is re-encoded from auxiliary yaw views, each view's FOF passes
//! through a [`Refiner`], and the decoded occupancies are resampled into the
//! canonical lattice and blended with the canonical occupancy. The canonical
//! view itself is not refined.
//!
//! All grids are cubic (`W = H = R`), so a yaw maps the lattice onto itself
//! up to interpolation.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::ErrorClass;
use crate::fof::{
    fof_to_occupancy, intervals_to_fof, read_fof, write_fof, ContainerError, FofError, FofGrid,
    OccupancyGrid,
};
use crate::geometry::{raycast_intervals, rotate_yaw, GeometryError, Mesh};
use crate::meshing::{marching_cubes, MeshingError};

/// Tolerance on the sum of blend weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum RecarveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fof(#[from] FofError),
    #[error(transparent)]
    Meshing(#[from] MeshingError),
    #[error("{path}: {source}")]
    Container {
        path: PathBuf,
        source: ContainerError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error("resampling needs W = R, got W = {width}, R = {depth}")]
    NonCubic { width: usize, depth: usize },
    #[error("blend inputs differ in shape: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("refiner {name} returned shape {got:?}, expected {expected:?}")]
    RefinerShape {
        name: String,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("unknown refiner {0:?} (expected identity, band-zero or extern:<dir>)")]
    UnknownRefiner(String),
    #[error("timed out waiting for {0}")]
    Timeout(PathBuf),
}

impl RecarveError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RecarveError::Geometry(e) => e.class(),
            RecarveError::Fof(e) => e.class(),
            RecarveError::Meshing(e) => e.class(),
            RecarveError::Container { source, .. } => source.class(),
            RecarveError::Io { .. } | RecarveError::Timeout(_) => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}

/// One auxiliary view: its index in the plan (canonical is 0) and yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub index: usize,
    pub theta: f64,
}

/// A FOF-to-FOF transformation applied to each auxiliary view.
pub trait Refiner: Send + Sync {
    fn name(&self) -> String;
    fn refine(&self, view: View, fof: FofGrid) -> Result<FofGrid, RecarveError>;
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Refiner for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn refine(&self, _view: View, fof: FofGrid) -> Result<FofGrid, RecarveError> {
        Ok(fof)
    }
}

/// Zeroes every channel from `low` on.
#[derive(Debug, Clone, Copy)]
pub struct BandZero {
    pub low: usize,
}

impl Refiner for BandZero {
    fn name(&self) -> String {
        "band-zero".into()
    }

    fn refine(&self, _view: View, fof: FofGrid) -> Result<FofGrid, RecarveError> {
        let (w, h, c) = fof.shape();
        let low = self.low.min(c);
        let mut data = fof.into_data();
        data.par_chunks_mut(c)
            .for_each(|px| px[low..].iter_mut().for_each(|v| *v = 0.0));
        Ok(FofGrid::from_data(w, h, c, data)?)
    }
}

/// File exchange with an out-of-process refiner: writes `view_<k>.fof` into
/// `dir` and waits for `view_<k>.refined.fof`. The refined file should be
/// written under another name and renamed into place; a file that does not
/// parse yet is retried until the timeout.
#[derive(Debug, Clone)]
pub struct External {
    pub dir: PathBuf,
    pub poll: Duration,
    pub timeout: Option<Duration>,
}

impl External {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        External {
            dir: dir.into(),
            poll: Duration::from_millis(200),
            timeout: None,
        }
    }

    pub fn request_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("view_{index}.fof"))
    }

    pub fn response_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("view_{index}.refined.fof"))
    }
}

impl Refiner for External {
    fn name(&self) -> String {
        format!("extern:{}", self.dir.display())
    }

    fn refine(&self, view: View, fof: FofGrid) -> Result<FofGrid, RecarveError> {
        let request = self.request_path(view.index);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RecarveError::Io { path, source }
        };
        fs::create_dir_all(&self.dir).map_err(io(&self.dir))?;
        let mut out = std::io::BufWriter::new(fs::File::create(&request).map_err(io(&request))?);
        write_fof(&mut out, &fof).map_err(io(&request))?;
        std::io::Write::flush(&mut out).map_err(io(&request))?;
        drop(out);
        log::info!("waiting for {}", self.response_path(view.index).display());

        let response = self.response_path(view.index);
        let start = Instant::now();
        loop {
            if response.exists() {
                let parsed = fs::File::open(&response)
                    .map_err(ContainerError::Io)
                    .and_then(|f| read_fof(&mut std::io::BufReader::new(f)));
                match parsed {
                    Ok(grid) => return Ok(grid),
                    Err(ContainerError::Truncated) => {}
                    Err(source) => {
                        return Err(RecarveError::Container {
                            path: response,
                            source,
                        })
                    }
                }
            }
            if self.timeout.is_some_and(|t| start.elapsed() >= t) {
                return Err(RecarveError::Timeout(response));
            }
            thread::sleep(self.poll);
        }
    }
}

/// Parses `identity`, `band-zero` or `extern:<dir>`. `low` is the band-zero
/// cutoff.
pub fn refiner_from_name(name: &str, low: usize) -> Result<Box<dyn Refiner>, RecarveError> {
    match name {
        "identity" => Ok(Box::new(Identity)),
        "band-zero" => Ok(Box::new(BandZero { low })),
        _ => match name.strip_prefix("extern:") {
            Some(dir) if !dir.is_empty() => Ok(Box::new(External::new(dir))),
            _ => Err(RecarveError::UnknownRefiner(name.into())),
        },
    }
}

/// Auxiliary yaw angles and blend weights; `weights[0]` is the canonical
/// view's.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecarvePlan {
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
    /// Lattice size `R`; grids are `R x R x R`.
    pub depth: usize,
    pub iso: f64,
}

impl Default for RecarvePlan {
    fn default() -> Self {
        RecarvePlan {
            angles: vec![std::f64::consts::FRAC_PI_2],
            weights: vec![0.5, 0.5],
            depth: 512,
            iso: 0.5,
        }
    }
}

impl RecarvePlan {
    pub fn validate(&self) -> Result<(), RecarveError> {
        if self.weights.len() != self.angles.len() + 1 {
            return Err(RecarveError::BadPlan(format!(
                "{} angles need {} weights, got {}",
                self.angles.len(),
                self.angles.len() + 1,
                self.weights.len()
            )));
        }
        if let Some(a) = self.angles.iter().find(|a| !a.is_finite()) {
            return Err(RecarveError::BadPlan(format!("angle {a}")));
        }
        check_weights(&self.weights)?;
        if self.depth < 2 {
            return Err(RecarveError::BadPlan(format!("depth {} < 2", self.depth)));
        }
        if !(self.iso > 0.0 && self.iso < 1.0) {
            return Err(RecarveError::BadPlan(format!(
                "iso {} outside (0, 1)",
                self.iso
            )));
        }
        Ok(())
    }
}

fn check_weights(weights: &[f64]) -> Result<(), RecarveError> {
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(RecarveError::BadPlan(format!("weight {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(RecarveError::BadPlan(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// FOF of the mesh seen after a yaw of `theta`, on an `R x R` image.
pub fn view_fof(
    mesh: &Mesh,
    theta: f64,
    channels: usize,
    depth: usize,
) -> Result<FofGrid, RecarveError> {
    let rotated = if theta == 0.0 {
        mesh.clone()
    } else {
        rotate_yaw(mesh, theta)
    };
    let intervals = raycast_intervals(&rotated, depth, depth)?;
    Ok(intervals_to_fof(&intervals, channels)?)
}

/// Rotates, encodes, refines and decodes one view. The result lives in the
/// rotated frame.
pub fn view_occupancy(
    mesh: &Mesh,
    view: View,
    channels: usize,
    depth: usize,
    refiner: &dyn Refiner,
) -> Result<OccupancyGrid, RecarveError> {
    let fof = refine_checked(refiner, view, view_fof(mesh, view.theta, channels, depth)?)?;
    Ok(fof_to_occupancy(&fof, depth)?)
}

fn refine_checked(
    refiner: &dyn Refiner,
    view: View,
    fof: FofGrid,
) -> Result<FofGrid, RecarveError> {
    let expected = fof.shape();
    let refined = refiner.refine(view, fof)?;
    if refined.shape() != expected {
        return Err(RecarveError::RefinerShape {
            name: refiner.name(),
            expected,
            got: refined.shape(),
        });
    }
    Ok(refined)
}

/// Maps a grid sampled in a frame rotated by `theta` back to the canonical
/// frame: `F(p) = G(yaw(p, theta))`, bilinear in x and z within each row.
/// Lattice points outside the source grid count as 0.
pub fn resample_to_canonical(
    grid: &OccupancyGrid,
    theta: f64,
) -> Result<OccupancyGrid, RecarveError> {
    let (w, h, r) = grid.shape();
    if w != r {
        return Err(RecarveError::NonCubic { width: w, depth: r });
    }
    if theta == 0.0 {
        return Ok(grid.clone());
    }
    let (s, c) = theta.sin_cos();
    let mid = (w as f64 - 1.0) * 0.5;
    let mut out = OccupancyGrid::zeros(w, h, r)?;
    out.data_mut()
        .par_chunks_mut(w * r)
        .enumerate()
        .for_each(|(j, row)| {
            let sample = |i: i64, k: i64| -> f64 {
                if i < 0 || k < 0 || i >= w as i64 || k >= r as i64 {
                    0.0
                } else {
                    grid.get(i as usize, j, k as usize) as f64
                }
            };
            for (i, column) in row.chunks_exact_mut(r).enumerate() {
                let u = i as f64 - mid;
                for (k, v) in column.iter_mut().enumerate() {
                    // Index space has equal spacing on both axes since W = R.
                    let t = k as f64 - mid;
                    let (su, st) = (c * u + s * t + mid, -s * u + c * t + mid);
                    let (i0, k0) = (su.floor(), st.floor());
                    let (fu, ft) = (su - i0, st - k0);
                    let (i0, k0) = (i0 as i64, k0 as i64);
                    let value = (1.0 - fu)
                        * ((1.0 - ft) * sample(i0, k0) + ft * sample(i0, k0 + 1))
                        + fu * ((1.0 - ft) * sample(i0 + 1, k0) + ft * sample(i0 + 1, k0 + 1));
                    *v = value as f32;
                }
            }
        });
    Ok(out)
}

/// Voxel-wise weighted sum, accumulated in f64 in the order given.
pub fn blend_fields(
    fields: &[&OccupancyGrid],
    weights: &[f64],
) -> Result<OccupancyGrid, RecarveError> {
    if fields.is_empty() || fields.len() != weights.len() {
        return Err(RecarveError::BadPlan(format!(
            "{} fields with {} weights",
            fields.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    let shape = fields[0].shape();
    if let Some(f) = fields.iter().find(|f| f.shape() != shape) {
        return Err(RecarveError::ShapeMismatch {
            left: shape,
            right: f.shape(),
        });
    }
    let mut out = OccupancyGrid::zeros(shape.0, shape.1, shape.2)?;
    const CHUNK: usize = 1 << 14;
    out.data_mut()
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(n, chunk)| {
            let base = n * CHUNK;
            for (o, v) in chunk.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for (f, w) in fields.iter().zip(weights) {
                    acc += w * f.data()[base + o] as f64;
                }
                *v = acc as f32;
            }
        });
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RecarveOutput {
    pub occupancy: OccupancyGrid,
    pub mesh: Mesh,
    /// Canonical FOF followed by each refined auxiliary view's FOF.
    pub view_fofs: Vec<FofGrid>,
}

/// Runs the plan on a normalized, watertight mesh.
pub fn recarve(
    mesh: &Mesh,
    plan: &RecarvePlan,
    channels: usize,
    refiner: &dyn Refiner,
) -> Result<RecarveOutput, RecarveError> {
    plan.validate()?;
    let depth = plan.depth;
    let canonical_fof = view_fof(mesh, 0.0, channels, depth)?;
    let canonical = fof_to_occupancy(&canonical_fof, depth)?;
    let mut view_fofs = vec![canonical_fof];
    let mut fields = vec![canonical];
    // Views run one at a time to bound memory at 512^3.
    for (n, &theta) in plan.angles.iter().enumerate() {
        let view = View {
            index: n + 1,
            theta,
        };
        let fof = refine_checked(refiner, view, view_fof(mesh, theta, channels, depth)?)?;
        let rotated = fof_to_occupancy(&fof, depth)?;
        view_fofs.push(fof);
        fields.push(resample_to_canonical(&rotated, theta)?);
    }
    let occupancy = if plan.weights.len() == 1 {
        fields.pop().unwrap()
    } else {
        let refs: Vec<&OccupancyGrid> = fields.iter().collect();
        blend_fields(&refs, &plan.weights)?
    };
    drop(fields);
    let mesh = marching_cubes(&occupancy, plan.iso)?;
    Ok(RecarveOutput {
        occupancy,
        mesh,
        view_fofs,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;
    use crate::fof::voxelize_intervals;
    use crate::geometry::shapes::{box_mesh, icosphere};
    use crate::meshing::grid_iou;

    const N: usize = 64;

    fn plan(n: usize) -> RecarvePlan {
        RecarvePlan {
            depth: n,
            ..RecarvePlan::default()
        }
    }

    /// Exact voxelization by ray casting in the canonical frame.
    fn voxelize(mesh: &Mesh, n: usize) -> OccupancyGrid {
        voxelize_intervals(&raycast_intervals(mesh, n, n).unwrap(), n).unwrap()
    }

    #[test]
    fn plan_validation() {
        plan(N).validate().unwrap();
        let mut p = plan(N);
        p.weights = vec![0.5, 0.4];
        assert!(p.validate().is_err());
        p.weights = vec![1.0];
        assert!(p.validate().is_err());
        p.angles.clear();
        p.validate().unwrap();
        p.weights = vec![1.0 + 1e-10];
        p.validate().unwrap();
        p.weights = vec![1.0 + 1e-8];
        assert!(p.validate().is_err());
        assert!(RecarvePlan {
            weights: vec![1.5, -0.5],
            ..plan(N)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn canonical_view_is_the_direct_pipeline() {
        let mesh = icosphere([0.1, 0.0, -0.1], 0.5, 3);
        let via_view = view_occupancy(
            &mesh,
            View {
                index: 0,
                theta: 0.0,
            },
            16,
            N,
            &Identity,
        )
        .unwrap();
        let direct = fof_to_occupancy(
            &intervals_to_fof(&raycast_intervals(&mesh, N, N).unwrap(), 16).unwrap(),
            N,
        )
        .unwrap();
        assert_eq!(via_view, direct);
    }

    #[test]
    fn sphere_views_agree() {
        let mesh = icosphere([0.0; 3], 0.6, 4);
        let front = view_occupancy(
            &mesh,
            View {
                index: 0,
                theta: 0.0,
            },
            32,
            N,
            &Identity,
        )
        .unwrap();
        for theta in [0.3, FRAC_PI_2, 2.0] {
            let side = view_occupancy(&mesh, View { index: 1, theta }, 32, N, &Identity).unwrap();
            assert!(grid_iou(&front, &side, 0.5).unwrap() > 0.98);
        }
    }

    #[test]
    fn band_zero_keeps_only_the_low_band() {
        let mesh = icosphere([0.1, 0.0, 0.0], 0.5, 3);
        let view = View {
            index: 1,
            theta: 0.4,
        };
        let zeroed = view_occupancy(&mesh, view, 16, N, &BandZero { low: 5 }).unwrap();
        let fof = view_fof(&mesh, 0.4, 16, N).unwrap();
        let low = fof.select_channels(0..5).unwrap();
        assert_eq!(zeroed, fof_to_occupancy(&low, N).unwrap());
        let refined = BandZero { low: 16 }.refine(view, fof.clone()).unwrap();
        assert_eq!(refined, fof);
    }

    #[test]
    fn refiner_names() {
        assert_eq!(
            refiner_from_name("identity", 16).unwrap().name(),
            "identity"
        );
        assert_eq!(
            refiner_from_name("band-zero", 16).unwrap().name(),
            "band-zero"
        );
        assert_eq!(
            refiner_from_name("extern:/tmp/x", 16).unwrap().name(),
            "extern:/tmp/x"
        );
        assert!(refiner_from_name("extern:", 16).is_err());
        assert!(refiner_from_name("magic", 16).is_err());
    }

    #[test]
    fn resample_identity_and_errors() {
        let grid = voxelize(&box_mesh([0.1, 0.2, -0.3], [0.4, 0.3, 0.2]), N);
        assert_eq!(resample_to_canonical(&grid, 0.0).unwrap(), grid);
        let flat = OccupancyGrid::zeros(8, 8, 4).unwrap();
        assert!(matches!(
            resample_to_canonical(&flat, 1.0),
            Err(RecarveError::NonCubic { .. })
        ));
    }

    #[test]
    fn quarter_turn_of_a_box_matches_direct_voxelization() {
        let n = 128;
        let canonical = box_mesh([0.1, 0.0, 0.2], [0.5, 0.3, 0.25]);
        let seen = voxelize(&rotate_yaw(&canonical, FRAC_PI_2), n);
        let back = resample_to_canonical(&seen, FRAC_PI_2).unwrap();
        assert!(grid_iou(&back, &voxelize(&canonical, n), 0.5).unwrap() >= 0.99);
    }

    #[test]
    fn resamples_compose() {
        let n = 96;
        let mesh = box_mesh([0.2, 0.0, -0.1], [0.4, 0.5, 0.25]);
        let grid = voxelize(&rotate_yaw(&mesh, PI), n);
        let twice =
            resample_to_canonical(&resample_to_canonical(&grid, FRAC_PI_2).unwrap(), FRAC_PI_2)
                .unwrap();
        let once = resample_to_canonical(&grid, PI).unwrap();
        assert!(grid_iou(&twice, &once, 0.5).unwrap() >= 0.98);
        assert!(grid_iou(&once, &voxelize(&mesh, n), 0.5).unwrap() >= 0.98);
    }

    #[test]
    fn resampling_agrees_with_reextracting_the_view_mesh() {
        let mesh = box_mesh([0.15, 0.0, -0.1], [0.45, 0.35, 0.25]);
        let theta = 0.7;
        let view = view_occupancy(&mesh, View { index: 1, theta }, 32, N, &Identity).unwrap();
        let resampled = resample_to_canonical(&view, theta).unwrap();
        let extracted = rotate_yaw(&marching_cubes(&view, 0.5).unwrap(), -theta);
        let iou = grid_iou(&resampled, &voxelize(&extracted, N), 0.5).unwrap();
        assert!(iou >= 0.97, "{iou}");
    }

    #[test]
    fn blend_cases() {
        let a = voxelize(&icosphere([0.0; 3], 0.5, 3), 16);
        let ones = OccupancyGrid::from_fn(16, 16, 16, |_, _, _| 1.0).unwrap();
        let zeros = OccupancyGrid::zeros(16, 16, 16).unwrap();
        assert_eq!(blend_fields(&[&a, &a], &[0.5, 0.5]).unwrap(), a);
        assert_eq!(blend_fields(&[&a, &ones], &[1.0, 0.0]).unwrap(), a);
        let half = blend_fields(&[&ones, &zeros], &[0.5, 0.5]).unwrap();
        assert!(half.data().iter().all(|&v| v == 0.5));
        // Values equal to iso are inside.
        assert_eq!(half.count_inside(0.5), 16 * 16 * 16);
        assert!(blend_fields(&[&a, &a], &[0.5, 0.6]).is_err());
        let small = OccupancyGrid::zeros(8, 8, 8).unwrap();
        assert!(matches!(
            blend_fields(&[&a, &small], &[0.5, 0.5]),
            Err(RecarveError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn blending_commutes() {
        let a = voxelize(&icosphere([0.1, 0.0, 0.0], 0.5, 3), 24);
        let b = voxelize(&box_mesh([0.0; 3], [0.4; 3]), 24);
        let c =
            OccupancyGrid::from_fn(24, 24, 24, |x, y, z| (0.3 + 0.2 * x * y * z) as f32).unwrap();
        let abc = blend_fields(&[&a, &b, &c], &[0.2, 0.3, 0.5]).unwrap();
        let cba = blend_fields(&[&c, &b, &a], &[0.5, 0.3, 0.2]).unwrap();
        for (x, y) in abc.data().iter().zip(cba.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn no_aux_views_is_a_round_trip() {
        let mesh = icosphere([0.0; 3], 0.5, 3);
        let p = RecarvePlan {
            angles: vec![],
            weights: vec![1.0],
            depth: N,
            iso: 0.5,
        };
        let out = recarve(&mesh, &p, 32, &Identity).unwrap();
        let direct = fof_to_occupancy(&view_fof(&mesh, 0.0, 32, N).unwrap(), N).unwrap();
        assert_eq!(out.occupancy, direct);
        assert_eq!(out.view_fofs.len(), 1);
    }

    #[test]
    fn single_weight_reproduces_one_view() {
        let mesh = box_mesh([0.1, 0.0, 0.0], [0.4, 0.3, 0.35]);
        let p = RecarvePlan {
            weights: vec![1.0, 0.0],
            ..plan(N)
        };
        let out = recarve(&mesh, &p, 32, &Identity).unwrap();
        let canonical = fof_to_occupancy(&view_fof(&mesh, 0.0, 32, N).unwrap(), N).unwrap();
        assert_eq!(out.occupancy, canonical);
        let p = RecarvePlan {
            weights: vec![0.0, 1.0],
            ..plan(N)
        };
        let out = recarve(&mesh, &p, 32, &Identity).unwrap();
        let side = view_occupancy(
            &mesh,
            View {
                index: 1,
                theta: FRAC_PI_2,
            },
            32,
            N,
            &Identity,
        )
        .unwrap();
        assert_eq!(
            out.occupancy,
            resample_to_canonical(&side, FRAC_PI_2).unwrap()
        );
    }

    #[test]
    fn default_plan_on_a_sphere() {
        let mesh = icosphere([0.0; 3], 0.6, 4);
        let out = recarve(&mesh, &plan(N), 32, &Identity).unwrap();
        let change = (out.mesh.signed_volume() / mesh.signed_volume() - 1.0).abs();
        assert!(change <= 0.02, "{change}");
        let again = recarve(&out.mesh, &plan(N), 32, &Identity).unwrap();
        assert!(grid_iou(&again.occupancy, &out.occupancy, 0.5).unwrap() >= 0.99);
    }

    #[test]
    fn refiner_shape_is_checked() {
        struct Shrink;
        impl Refiner for Shrink {
            fn name(&self) -> String {
                "shrink".into()
            }
            fn refine(&self, _: View, fof: FofGrid) -> Result<FofGrid, RecarveError> {
                Ok(fof.select_channels(0..1)?)
            }
        }
        let mesh = icosphere([0.0; 3], 0.5, 2);
        assert!(matches!(
            recarve(&mesh, &plan(16), 8, &Shrink),
            Err(RecarveError::RefinerShape { .. })
        ));
    }

    #[test]
    fn external_refiner_exchanges_files() {
        let dir = tempfile::tempdir().unwrap();
        let refiner = External {
            dir: dir.path().to_path_buf(),
            poll: Duration::from_millis(10),
            timeout: Some(Duration::from_secs(30)),
        };
        let responder = {
            let refiner = refiner.clone();
            thread::spawn(move || {
                let request = refiner.request_path(1);
                while !request.exists() {
                    thread::sleep(Duration::from_millis(5));
                }
                thread::sleep(Duration::from_millis(20));
                let fof = read_fof(&mut fs::File::open(&request).unwrap()).unwrap();
                let zeroed = BandZero { low: 3 }
                    .refine(
                        View {
                            index: 1,
                            theta: 0.0,
                        },
                        fof,
                    )
                    .unwrap();
                let tmp = refiner.dir.join("partial");
                write_fof(&mut fs::File::create(&tmp).unwrap(), &zeroed).unwrap();
                fs::rename(tmp, refiner.response_path(1)).unwrap();
            })
        };
        let mesh = icosphere([0.0; 3], 0.5, 2);
        let out = recarve(&mesh, &plan(16), 8, &refiner).unwrap();
        responder.join().unwrap();
        assert!(out.view_fofs[1]
            .data()
            .chunks(8)
            .all(|px| px[3..].iter().all(|&v| v == 0.0)));

        let impatient = External {
            timeout: Some(Duration::from_millis(50)),
            ..External::new(dir.path().join("nobody"))
        };
        assert!(matches!(
            impatient.refine(
                View {
                    index: 2,
                    theta: 0.0
                },
                FofGrid::zeros(2, 2, 2).unwrap()
            ),
            Err(RecarveError::Timeout(_))
        ));
    }
}
