use std::fmt;
use std::path::Path;

use fofkit::fof::{ContainerError, FofError};
use fofkit::geometry::GeometryError;
use fofkit::joints::JointError;
use fofkit::meshing::MeshingError;
use fofkit::recarve::RecarveError;
use fofkit::ErrorClass;

/// A failure reported to the user, with the class that picks the exit code.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError {
            class,
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Format, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(ErrorClass::Io, format!("{}: {err}", path.display()))
    }

    pub fn container(path: &Path, err: ContainerError) -> Self {
        Self::new(err.class(), format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

macro_rules! from_classed {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(err: $t) -> Self {
                CliError::new(err.class(), err.to_string())
            }
        }
    )*};
}

from_classed!(
    GeometryError,
    FofError,
    JointError,
    MeshingError,
    RecarveError
);
