/// Coarse failure category, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Reading or writing a file failed.
    Io,
    /// The input geometry violates a precondition (parity, degeneracy, ...).
    Geometry,
    /// A file or argument is malformed, or shapes do not match.
    Format,
}

impl ErrorClass {
    /// Process exit status: 1 for I/O, 2 for geometry, 3 for format errors.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 1,
            ErrorClass::Geometry => 2,
            ErrorClass::Format => 3,
        }
    }
}
