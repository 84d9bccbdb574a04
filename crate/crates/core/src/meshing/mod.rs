//! Isosurface extraction, evaluation metrics and turntable renders.

mod cubes;
mod metrics;
mod render;
mod tables;

pub use cubes::marching_cubes;
pub use metrics::{
    chamfer, chamfer_with_seed, grid_iou, sample_surface, ClosestPoint, CHAMFER_SEED,
};
pub use render::{
    render_views, write_png, RenderMode, RenderSpec, RgbImage, NORMAL_BACKGROUND,
    SHADING_BACKGROUND,
};

use crate::error::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum MeshingError {
    #[error("iso level {0} outside (0, 1)")]
    BadIso(f64),
    #[error("empty mesh")]
    EmptyMesh,
    #[error("sample count must be positive")]
    NoSamples,
    #[error("grid shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("invalid render spec: {0}")]
    BadRenderSpec(String),
    #[error("writing {path}: {source}")]
    Png {
        path: std::path::PathBuf,
        source: png::EncodingError,
    },
}

impl MeshingError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MeshingError::EmptyMesh => ErrorClass::Geometry,
            MeshingError::Png { .. } => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}

pub(crate) fn check_iso(iso: f64) -> Result<(), MeshingError> {
    if iso > 0.0 && iso < 1.0 {
        Ok(())
    } else {
        Err(MeshingError::BadIso(iso))
    }
}
