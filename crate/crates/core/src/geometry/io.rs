//! Wavefront OBJ and PLY (ASCII and binary) readers and writers.
//!
//! Only positions and faces are read; normals, texture coordinates and any
//! other element are ignored. Polygons with more than three corners are fan
//! triangulated and faces with repeated indices are dropped, both reported
//! as [`MeshWarning`]s.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{GeometryError, Mesh, Vec3};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeshWarning {
    FanTriangulated { polygons: usize },
    DegenerateDropped { faces: usize },
}

impl fmt::Display for MeshWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshWarning::FanTriangulated { polygons } => {
                write!(f, "{polygons} non-triangular face(s) were fan-triangulated")
            }
            MeshWarning::DegenerateDropped { faces } => {
                write!(
                    f,
                    "{faces} degenerate face(s) with repeated indices were dropped"
                )
            }
        }
    }
}

/// Loads an OBJ or PLY file, chosen by extension.
pub fn load_mesh(path: &Path) -> Result<(Mesh, Vec<MeshWarning>), GeometryError> {
    let ext = extension(path);
    let file = File::open(path).map_err(|source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let loaded = match ext.as_str() {
        "obj" => read_obj(&mut reader, path)?,
        "ply" => read_ply(&mut reader, path)?,
        _ => {
            return Err(GeometryError::Unsupported {
                path: path.to_path_buf(),
                message: format!("unknown mesh extension {ext:?}"),
            })
        }
    };
    for w in &loaded.1 {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded)
}

/// Writes a mesh as OBJ or binary PLY, chosen by extension. Vertex order is
/// preserved.
pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<(), GeometryError> {
    let io_err = |source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let ext = extension(path);
    if ext != "obj" && ext != "ply" {
        return Err(GeometryError::Unsupported {
            path: path.to_path_buf(),
            message: format!("unknown mesh extension {ext:?}"),
        });
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    if ext == "obj" {
        write_obj(mesh, &mut w).map_err(io_err)?;
    } else {
        write_ply(mesh, &mut w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Collects polygons into triangles, tracking the warnings.
#[derive(Default)]
struct FaceSink {
    triangles: Vec<[u32; 3]>,
    fanned: usize,
    degenerate: usize,
}

impl FaceSink {
    fn push_polygon(&mut self, corners: &[u32]) {
        if corners.len() > 3 {
            self.fanned += 1;
        }
        for k in 1..corners.len() - 1 {
            let tri = [corners[0], corners[k], corners[k + 1]];
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                self.degenerate += 1;
            } else {
                self.triangles.push(tri);
            }
        }
    }

    fn finish(self, vertices: Vec<Vec3>) -> Result<(Mesh, Vec<MeshWarning>), GeometryError> {
        if vertices.is_empty() || self.triangles.is_empty() {
            return Err(GeometryError::NoGeometry);
        }
        let mut warnings = Vec::new();
        if self.fanned > 0 {
            warnings.push(MeshWarning::FanTriangulated {
                polygons: self.fanned,
            });
        }
        if self.degenerate > 0 {
            warnings.push(MeshWarning::DegenerateDropped {
                faces: self.degenerate,
            });
        }
        let mesh = Mesh::new(vertices, self.triangles);
        mesh.validate()?;
        Ok((mesh, warnings))
    }
}

pub fn read_obj<R: BufRead>(
    reader: &mut R,
    path: &Path,
) -> Result<(Mesh, Vec<MeshWarning>), GeometryError> {
    let parse_err = |line: usize, message: String| GeometryError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = FaceSink::default();
    let mut corners = Vec::new();
    let mut text = String::new();
    let mut line_no = 0;
    loop {
        text.clear();
        let n = reader
            .read_line(&mut text)
            .map_err(|source| GeometryError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in p.iter_mut() {
                    *c = tokens
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| parse_err(line_no, "malformed vertex".into()))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                corners.clear();
                for t in tokens {
                    let index = t.split('/').next().unwrap_or("");
                    let index: i64 = index
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad face index {t:?}")))?;
                    let resolved = if index > 0 {
                        index - 1
                    } else if index < 0 {
                        vertices.len() as i64 + index
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(parse_err(
                            line_no,
                            format!("face index {index} out of range"),
                        ));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(parse_err(line_no, "face with fewer than 3 corners".into()));
                }
                faces.push_polygon(&corners);
            }
            _ => {}
        }
    }
    faces.finish(vertices)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let raw = bytes.try_into().unwrap();
                (if big_endian {
                    <$t>::from_be_bytes(raw)
                } else {
                    <$t>::from_le_bytes(raw)
                }) as f64
            }};
        }
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct PlyValues<'a, R: BufRead> {
    reader: &'a mut R,
    encoding: Encoding,
    tokens: std::vec::IntoIter<String>,
    path: &'a Path,
}

impl<R: BufRead> PlyValues<'_, R> {
    fn next(&mut self, ty: Scalar) -> Result<f64, GeometryError> {
        match self.encoding {
            Encoding::Ascii => {
                let token = loop {
                    if let Some(t) = self.tokens.next() {
                        break t;
                    }
                    let mut line = String::new();
                    let n =
                        self.reader
                            .read_line(&mut line)
                            .map_err(|source| GeometryError::Io {
                                path: self.path.to_path_buf(),
                                source,
                            })?;
                    if n == 0 {
                        return Err(self.truncated());
                    }
                    self.tokens = line
                        .split_whitespace()
                        .map(str::to_owned)
                        .collect::<Vec<_>>()
                        .into_iter();
                };
                token.parse::<f64>().map_err(|_| GeometryError::Parse {
                    path: self.path.to_path_buf(),
                    line: 0,
                    message: format!("bad PLY value {token:?}"),
                })
            }
            Encoding::BinaryLe | Encoding::BinaryBe => {
                let mut buf = [0u8; 8];
                let bytes = &mut buf[..ty.size()];
                self.reader
                    .read_exact(bytes)
                    .map_err(|_| self.truncated())?;
                Ok(ty.decode(bytes, self.encoding == Encoding::BinaryBe))
            }
        }
    }

    fn truncated(&self) -> GeometryError {
        GeometryError::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            message: "PLY body ends early".into(),
        }
    }
}

pub fn read_ply<R: BufRead>(
    reader: &mut R,
    path: &Path,
) -> Result<(Mesh, Vec<MeshWarning>), GeometryError> {
    let parse_err = |line: usize, message: String| GeometryError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let unsupported = |message: String| GeometryError::Unsupported {
        path: path.to_path_buf(),
        message,
    };
    let io_err = |source| GeometryError::Io {
        path: path.to_path_buf(),
        source,
    };

    let mut line = String::new();
    let mut line_no = 0;
    let mut read_header_line =
        |line: &mut String, line_no: &mut usize| -> Result<bool, GeometryError> {
            line.clear();
            *line_no += 1;
            Ok(reader.read_line(line).map_err(io_err)? > 0)
        };
    if !read_header_line(&mut line, &mut line_no)? {
        return Err(GeometryError::NoGeometry);
    }
    if line.trim() != "ply" {
        return Err(parse_err(1, "missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !read_header_line(&mut line, &mut line_no)? {
            return Err(parse_err(line_no, "header not terminated".into()));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(unsupported(format!("PLY format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let count = Scalar::parse(count)
                    .ok_or_else(|| unsupported(format!("property type {count}")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| unsupported(format!("property type {item}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element".into()))?
                    .properties
                    .push(Property::List {
                        name: name.to_string(),
                        count,
                        item,
                    });
            }
            ["property", ty, name] => {
                let ty =
                    Scalar::parse(ty).ok_or_else(|| unsupported(format!("property type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before element".into()))?
                    .properties
                    .push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => {
                return Err(parse_err(
                    line_no,
                    format!("unrecognized header line {:?}", line.trim()),
                ))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(line_no, "missing format line".into()))?;

    let mut values = PlyValues {
        reader,
        encoding,
        tokens: Vec::new().into_iter(),
        path,
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = FaceSink::default();
    let mut corners = Vec::new();
    for element in &elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        let axis_of = |name: &str| match name {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        if is_vertex {
            for axis in ["x", "y", "z"] {
                let found = element
                    .properties
                    .iter()
                    .any(|p| matches!(p, Property::Scalar { name, .. } if name == axis));
                if !found {
                    return Err(unsupported(format!("vertex element lacks {axis}")));
                }
            }
        }
        for _ in 0..element.count {
            let mut p = [0.0; 3];
            for prop in &element.properties {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = values.next(*ty)?;
                        if is_vertex {
                            if let Some(a) = axis_of(name) {
                                p[a] = v;
                            }
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = values.next(*count)?;
                        if n < 0.0 {
                            return Err(parse_err(0, "negative list length".into()));
                        }
                        let wanted =
                            is_face && (name == "vertex_indices" || name == "vertex_index");
                        corners.clear();
                        for _ in 0..n as usize {
                            let v = values.next(*item)?;
                            if wanted {
                                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                                    return Err(parse_err(0, format!("bad vertex index {v}")));
                                }
                                corners.push(v as u32);
                            }
                        }
                        if wanted {
                            if corners.len() < 3 {
                                return Err(parse_err(0, "face with fewer than 3 corners".into()));
                            }
                            faces.push_polygon(&corners);
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(p);
            }
        }
    }
    faces.finish(vertices)
}

pub fn write_obj<W: Write>(mesh: &Mesh, w: &mut W) -> std::io::Result<()> {
    for p in &mesh.vertices {
        writeln!(w, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Binary little-endian PLY with double-precision positions.
pub fn write_ply<W: Write>(mesh: &Mesh, w: &mut W) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for p in &mesh.vertices {
        for c in p {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8])?;
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}
