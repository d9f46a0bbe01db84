//! PLY (ASCII and binary), STL (binary and ASCII) and OBJ (ASCII) readers
//! and writers. Every parser takes raw bytes and reports the byte offset of
//! the first problem; none of them panic on malformed input.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;

use super::{MeshError, TriangleMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Stl,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl FromStr for MeshFormat {
    type Err = MeshError;
    fn from_str(s: &str) -> Result<Self, MeshError> {
        match s.to_ascii_lowercase().as_str() {
            "ply" => Ok(MeshFormat::Ply),
            "stl" => Ok(MeshFormat::Stl),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshFormat::Ply => "ply",
            MeshFormat::Stl => "stl",
            MeshFormat::Obj => "obj",
        })
    }
}

/// Vertices and triangles as read from a file, before mesh validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// Extra scalar vertex properties (PLY only), in header order.
    pub vertex_properties: Vec<(String, Vec<f64>)>,
}

impl RawMesh {
    pub fn into_mesh(self) -> Result<TriangleMesh, MeshError> {
        TriangleMesh::new(self.vertices, self.triangles)
    }

    pub fn property(&self, name: &str) -> Option<&[f64]> {
        self.vertex_properties
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> MeshError {
    MeshError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn parse(bytes: &[u8], format: MeshFormat) -> Result<RawMesh, MeshError> {
    match format {
        MeshFormat::Ply => parse_ply(bytes),
        MeshFormat::Stl => parse_stl(bytes),
        MeshFormat::Obj => parse_obj(bytes),
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    Ok(parse(&bytes, format)?.into_mesh()?.with_name(name))
}

/// Loads vertex positions only; faces, if any, are ignored.
pub fn load_points(path: &Path) -> Result<Vec<Point3<f64>>, MeshError> {
    let format = MeshFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(parse(&bytes, format)?.vertices)
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    let bytes = match format {
        MeshFormat::Ply => write_ply(mesh, &[], PlyEncoding::BinaryLittleEndian),
        MeshFormat::Stl => write_stl(mesh),
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// PLY

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn name(self) -> &'static str {
        match self {
            Scalar::I8 => "char",
            Scalar::U8 => "uchar",
            Scalar::I16 => "short",
            Scalar::U16 => "ushort",
            Scalar::I32 => "int",
            Scalar::U32 => "uint",
            Scalar::F32 => "float",
            Scalar::F64 => "double",
        }
    }
}

#[derive(Clone, Debug)]
enum PlyProperty {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<PlyElement>,
    body_offset: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<Header, MeshError> {
    let mut pos = 0;
    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut first = true;
    loop {
        let line_start = pos;
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(MeshError::parse(pos, "unterminated PLY header"));
        };
        pos += len + 1;
        let line = std::str::from_utf8(&bytes[line_start..line_start + len])
            .map_err(|_| MeshError::parse(line_start, "non-UTF-8 header line"))?
            .trim_end_matches('\r')
            .trim();
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if first {
            if line != "ply" {
                return Err(MeshError::parse(0, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        match keyword {
            "" | "comment" | "obj_info" => {}
            "format" => {
                encoding = Some(match words.next() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    Some("binary_big_endian") => PlyEncoding::BinaryBigEndian,
                    other => {
                        return Err(MeshError::parse(line_start, format!("unknown PLY format {other:?}")))
                    }
                });
            }
            "element" => {
                let name = words.next().ok_or_else(|| MeshError::parse(line_start, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| MeshError::parse(line_start, "bad element count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| MeshError::parse(line_start, "property before element"))?;
                let ty = words.next().unwrap_or("");
                let bad_type = || MeshError::parse(line_start, format!("bad property type in '{line}'"));
                let property = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse).ok_or_else(bad_type)?;
                    let item = words.next().and_then(Scalar::parse).ok_or_else(bad_type)?;
                    if matches!(count, Scalar::F32 | Scalar::F64) {
                        return Err(bad_type());
                    }
                    let name = words.next().ok_or_else(bad_type)?;
                    PlyProperty::List {
                        name: name.to_string(),
                        count,
                        item,
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(bad_type)?;
                    let name = words.next().ok_or_else(bad_type)?;
                    PlyProperty::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(property);
            }
            "end_header" => break,
            other => {
                return Err(MeshError::parse(line_start, format!("unknown header keyword '{other}'")))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| MeshError::parse(0, "PLY header lacks a format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: pos,
    })
}

/// Pulls numbers out of a PLY body in either encoding.
struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: PlyEncoding,
}

impl BodyReader<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        match self.encoding {
            PlyEncoding::Ascii => self.read_ascii(),
            PlyEncoding::BinaryLittleEndian | PlyEncoding::BinaryBigEndian => self.read_binary(ty),
        }
    }

    fn read_ascii(&mut self) -> Result<f64, MeshError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(MeshError::parse(start, "unexpected end of PLY body"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| MeshError::parse(start, "invalid number"))
    }

    fn read_binary(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let n = ty.size();
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| MeshError::parse(self.pos, "truncated PLY body"))?;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(chunk);
        if self.encoding == PlyEncoding::BinaryBigEndian {
            buf[..n].reverse();
        }
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }

    fn remaining(&self) -> usize {
        self.bytes.len().saturating_sub(self.pos)
    }
}

fn as_index(value: f64, offset: usize) -> Result<u32, MeshError> {
    if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
        return Err(MeshError::parse(offset, format!("invalid vertex index {value}")));
    }
    Ok(value as u32)
}

pub fn parse_ply(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let header = parse_ply_header(bytes)?;
    let mut reader = BodyReader {
        bytes,
        pos: header.body_offset,
        encoding: header.encoding,
    };
    let mut out = RawMesh::default();
    for element in &header.elements {
        if element.properties.is_empty() {
            continue;
        }
        // every record takes at least one byte, which bounds preallocation
        let reserve = element.count.min(reader.remaining());
        match element.name.as_str() {
            "vertex" => {
                let names: Vec<&str> = element
                    .properties
                    .iter()
                    .map(|p| match p {
                        PlyProperty::Scalar { name, .. } | PlyProperty::List { name, .. } => name.as_str(),
                    })
                    .collect();
                let axis = |n: &str| names.iter().position(|&x| x == n);
                let (Some(ix), Some(iy), Some(iz)) = (axis("x"), axis("y"), axis("z")) else {
                    return Err(MeshError::parse(header.body_offset, "vertex element lacks x/y/z"));
                };
                let extra: Vec<usize> = (0..names.len())
                    .filter(|&i| {
                        i != ix && i != iy && i != iz && matches!(element.properties[i], PlyProperty::Scalar { .. })
                    })
                    .collect();
                out.vertices.reserve(reserve);
                out.vertex_properties = extra
                    .iter()
                    .map(|&i| (names[i].to_string(), Vec::with_capacity(reserve)))
                    .collect();
                let mut row = vec![0.0; names.len()];
                for _ in 0..element.count {
                    for (i, p) in element.properties.iter().enumerate() {
                        row[i] = match p {
                            PlyProperty::Scalar { ty, .. } => reader.read(*ty)?,
                            PlyProperty::List { count, item, .. } => {
                                let at = reader.pos;
                                let n = reader.read(*count)?;
                                let n = as_index(n, at)?;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                                0.0
                            }
                        };
                    }
                    out.vertices.push(Point3::new(row[ix], row[iy], row[iz]));
                    for (slot, &i) in extra.iter().enumerate() {
                        out.vertex_properties[slot].1.push(row[i]);
                    }
                }
            }
            "face" => {
                let list_idx = element.properties.iter().position(|p| {
                    matches!(p, PlyProperty::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
                });
                out.triangles.reserve(reserve);
                let mut polygon = Vec::new();
                for _ in 0..element.count {
                    for (i, p) in element.properties.iter().enumerate() {
                        match p {
                            PlyProperty::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                            PlyProperty::List { count, item, .. } => {
                                let at = reader.pos;
                                let n = as_index(reader.read(*count)?, at)? as usize;
                                polygon.clear();
                                for _ in 0..n {
                                    let at = reader.pos;
                                    let v = reader.read(*item)?;
                                    if Some(i) == list_idx {
                                        polygon.push(as_index(v, at)?);
                                    }
                                }
                                if Some(i) == list_idx {
                                    if n < 3 {
                                        return Err(MeshError::parse(at, format!("face with {n} vertices")));
                                    }
                                    for k in 1..n - 1 {
                                        out.triangles.push([polygon[0], polygon[k], polygon[k + 1]]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..element.count {
                    for p in &element.properties {
                        match p {
                            PlyProperty::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                            PlyProperty::List { count, item, .. } => {
                                let at = reader.pos;
                                let n = as_index(reader.read(*count)?, at)?;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scalar vertex attribute written alongside positions.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexProperty {
    pub name: String,
    pub kind: PropertyKind,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropertyKind {
    Float,
    Double,
    UChar,
}

impl PropertyKind {
    fn scalar(self) -> Scalar {
        match self {
            PropertyKind::Float => Scalar::F32,
            PropertyKind::Double => Scalar::F64,
            PropertyKind::UChar => Scalar::U8,
        }
    }
}

fn put(out: &mut Vec<u8>, ty: Scalar, v: f64, big_endian: bool) {
    let start = out.len();
    match ty {
        Scalar::U8 => out.push(v as u8),
        Scalar::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
        Scalar::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        Scalar::F64 => out.extend_from_slice(&v.to_le_bytes()),
        Scalar::I8 => out.push(v as i8 as u8),
        Scalar::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
        Scalar::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
        Scalar::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
    }
    if big_endian {
        out[start..].reverse();
    }
}

/// Writes positions as doubles plus any extra per-vertex properties.
/// Property value arrays must have one entry per vertex.
pub fn write_ply(mesh: &TriangleMesh, extra: &[VertexProperty], encoding: PlyEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
        PlyEncoding::BinaryBigEndian => "binary_big_endian",
    };
    let mut header = format!(
        "ply\nformat {format} 1.0\ncomment {}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        mesh.name(),
        mesh.vertex_count()
    );
    for p in extra {
        assert_eq!(p.values.len(), mesh.vertex_count(), "property '{}' length", p.name);
        header.push_str(&format!("property {} {}\n", p.kind.scalar().name(), p.name));
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.triangle_count()
    ));
    out.extend_from_slice(header.as_bytes());

    match encoding {
        PlyEncoding::Ascii => {
            let mut body = String::new();
            for (i, v) in mesh.vertices().iter().enumerate() {
                body.push_str(&format!("{:?} {:?} {:?}", v.x, v.y, v.z));
                for p in extra {
                    match p.kind {
                        PropertyKind::UChar => body.push_str(&format!(" {}", p.values[i] as u8)),
                        PropertyKind::Float => body.push_str(&format!(" {:?}", p.values[i] as f32)),
                        PropertyKind::Double => body.push_str(&format!(" {:?}", p.values[i])),
                    }
                }
                body.push('\n');
            }
            for t in mesh.triangles() {
                body.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyEncoding::BinaryLittleEndian | PlyEncoding::BinaryBigEndian => {
            let be = encoding == PlyEncoding::BinaryBigEndian;
            for (i, v) in mesh.vertices().iter().enumerate() {
                for c in [v.x, v.y, v.z] {
                    put(&mut out, Scalar::F64, c, be);
                }
                for p in extra {
                    put(&mut out, p.kind.scalar(), p.values[i], be);
                }
            }
            for t in mesh.triangles() {
                out.push(3);
                for &i in t {
                    put(&mut out, Scalar::I32, i as f64, be);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// STL

/// Merges bitwise-identical corner positions into shared vertices.
fn weld(corners: Vec<[f32; 3]>) -> RawMesh {
    let mut lookup: HashMap<[u32; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut ids = Vec::with_capacity(corners.len());
    for c in corners {
        let key = c.map(|x| if x == 0.0 { 0 } else { x.to_bits() });
        let id = *lookup.entry(key).or_insert_with(|| {
            vertices.push(Point3::new(c[0] as f64, c[1] as f64, c[2] as f64));
            (vertices.len() - 1) as u32
        });
        ids.push(id);
    }
    RawMesh {
        vertices,
        triangles: ids.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        vertex_properties: Vec::new(),
    }
}

pub fn parse_stl(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if n.checked_mul(50).and_then(|s| s.checked_add(84)) == Some(bytes.len()) {
            return parse_stl_binary(bytes, n);
        }
    }
    if bytes.trim_ascii_start().starts_with(b"solid") {
        return parse_stl_ascii(bytes);
    }
    if bytes.len() < 84 {
        return Err(MeshError::parse(bytes.len(), "truncated STL header"));
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    Err(MeshError::parse(
        bytes.len(),
        format!("binary STL declares {n} triangles but has {} body bytes", bytes.len() - 84),
    ))
}

fn parse_stl_binary(bytes: &[u8], n: usize) -> Result<RawMesh, MeshError> {
    let mut corners = Vec::with_capacity(n * 3);
    for i in 0..n {
        let rec = &bytes[84 + 50 * i..84 + 50 * (i + 1)];
        for k in 0..3 {
            let base = 12 + 12 * k;
            let f = |j: usize| f32::from_le_bytes([rec[base + j], rec[base + j + 1], rec[base + j + 2], rec[base + j + 3]]);
            let c = [f(0), f(4), f(8)];
            if c.iter().any(|x| !x.is_finite()) {
                return Err(MeshError::parse(84 + 50 * i + base, "non-finite STL coordinate"));
            }
            corners.push(c);
        }
    }
    Ok(weld(corners))
}

fn parse_stl_ascii(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let mut corners = Vec::new();
    let mut offset = 0;
    for raw in bytes.split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += raw.len() + 1;
        let line = std::str::from_utf8(raw).map_err(|_| MeshError::parse(line_offset, "non-UTF-8 STL line"))?;
        let mut words = line.split_whitespace();
        if words.next() == Some("vertex") {
            let mut c = [0f32; 3];
            for slot in c.iter_mut() {
                *slot = words
                    .next()
                    .and_then(|w| w.parse::<f32>().ok())
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| MeshError::parse(line_offset, "bad STL vertex"))?;
            }
            corners.push(c);
        }
    }
    if corners.len() % 3 != 0 {
        return Err(MeshError::parse(bytes.len(), "STL facet with fewer than 3 vertices"));
    }
    Ok(weld(corners))
}

/// Binary STL with per-facet normals; coordinates are stored as `f32`.
pub fn write_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    let title = format!("binary STL: {}", mesh.name());
    let n = title.len().min(80);
    out[..n].copy_from_slice(&title.as_bytes()[..n]);
    out.extend_from_slice(&(mesh.triangle_count() as u32).to_le_bytes());
    for i in 0..mesh.triangle_count() {
        let normal = mesh.face_normal(i);
        for c in normal.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for p in mesh.triangle(i) {
            for c in p.coords.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

// ---------------------------------------------------------------------------
// OBJ

pub fn parse_obj(bytes: &[u8]) -> Result<RawMesh, MeshError> {
    let mut out = RawMesh::default();
    let mut offset = 0;
    for raw in bytes.split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += raw.len() + 1;
        let line = std::str::from_utf8(raw).map_err(|_| MeshError::parse(line_offset, "non-UTF-8 OBJ line"))?;
        let line = line.split('#').next().unwrap_or("");
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in c.iter_mut() {
                    *slot = words
                        .next()
                        .and_then(|w| w.parse::<f64>().ok())
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| MeshError::parse(line_offset, "bad OBJ vertex"))?;
                }
                out.vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for w in words {
                    let first = w.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|_| MeshError::parse(line_offset, format!("bad OBJ face index '{w}'")))?;
                    let n = out.vertices.len() as i64;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i - 1),
                        i => Some(n + i),
                    }
                    .filter(|&i| i >= 0 && i <= u32::MAX as i64)
                    .ok_or_else(|| MeshError::parse(line_offset, format!("OBJ face index {idx} out of range")))?;
                    polygon.push(resolved as u32);
                }
                if polygon.len() < 3 {
                    return Err(MeshError::parse(line_offset, "OBJ face with fewer than 3 vertices"));
                }
                for k in 1..polygon.len() - 1 {
                    out.triangles.push([polygon[0], polygon[k], polygon[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = format!("# {}\n", mesh.name());
    for v in mesh.vertices() {
        s.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::test_meshes::*;
    use super::*;
    use proptest::prelude::*;

    const CUBE_OBJ: &str = "# unit cube\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n\
        f 1 3 2\nf 2 3 4\nf 5 6 7\nf 6 8 7\nf 1 2 5\nf 2 6 5\nf 3 7 4\nf 4 7 8\nf 1 5 3\nf 3 5 7\nf 2 4 6\nf 4 8 6\n";

    #[test]
    fn cube_obj_counts() {
        let m = parse_obj(CUBE_OBJ.as_bytes()).unwrap().into_mesh().unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count()), (8, 12));
        assert!(m.is_watertight());
    }

    #[test]
    fn obj_quads_and_relative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4/1/1 -3/2/1 -2/3/1 -1/4/1\n";
        let m = parse_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(matches!(parse_obj(b"v 0 0 0\nf 1 x 9\n"), Err(MeshError::Parse { offset: 8, .. })));
        let dangling = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap();
        assert!(matches!(dangling.into_mesh(), Err(MeshError::IndexOutOfRange { .. })));
    }

    #[test]
    fn ply_roundtrip_binary_and_ascii() {
        let s = sphere(7.3, 2).with_name("sphere");
        for enc in [PlyEncoding::BinaryLittleEndian, PlyEncoding::BinaryBigEndian, PlyEncoding::Ascii] {
            let bytes = write_ply(&s, &[], enc);
            let back = parse_ply(&bytes).unwrap().into_mesh().unwrap();
            assert_eq!(back.triangles(), s.triangles());
            for (a, b) in back.vertices().iter().zip(s.vertices()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn ply_extra_properties() {
        let p = plate(1.0, 1, 0.0);
        let extra = [
            VertexProperty { name: "distance_mm".into(), kind: PropertyKind::Float, values: vec![0.5, -1.0, 2.0, 0.0] },
            VertexProperty { name: "valid".into(), kind: PropertyKind::UChar, values: vec![1.0, 1.0, 0.0, 1.0] },
        ];
        for enc in [PlyEncoding::BinaryLittleEndian, PlyEncoding::Ascii] {
            let raw = parse_ply(&write_ply(&p, &extra, enc)).unwrap();
            assert_eq!(raw.property("distance_mm").unwrap(), &[0.5, -1.0, 2.0, 0.0]);
            assert_eq!(raw.property("valid").unwrap(), &[1.0, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn ply_float_vertices_and_other_elements() {
        let src = "ply\r\nformat ascii 1.0\r\ncomment hi\r\nelement vertex 3\r\nproperty float x\r\nproperty float y\r\n\
            property float z\r\nproperty list uchar int junk\r\nelement face 1\r\nproperty uchar flag\r\n\
            property list uchar uint vertex_index\r\nelement edge 1\r\nproperty int a\r\nproperty int b\r\nend_header\r\n\
            0 0 0 2 9 9\r\n1 0 0 0\r\n0 1 0 0\r\n7 3 0 1 2\r\n0 1\r\n";
        let raw = parse_ply(src.as_bytes()).unwrap();
        assert_eq!(raw.vertices.len(), 3);
        assert_eq!(raw.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn truncated_ply_is_parse_error() {
        let bytes = write_ply(&plate(1.0, 2, 0.0), &[], PlyEncoding::BinaryLittleEndian);
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(parse_ply(cut), Err(MeshError::Parse { .. })));
        assert!(matches!(parse_ply(b"ply\nformat ascii 1.0\nelement vertex 2\n"), Err(MeshError::Parse { .. })));
        assert!(matches!(parse_ply(b"PLY\n"), Err(MeshError::Parse { offset: 0, .. })));
    }

    #[test]
    fn stl_roundtrip_welds_vertices() {
        let c = unit_cube();
        let raw = parse_stl(&write_stl(&c)).unwrap();
        let m = raw.into_mesh().unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count()), (8, 12));
        assert!(m.is_watertight());
        let bytes = write_stl(&c);
        assert!(matches!(parse_stl(&bytes[..bytes.len() - 1]), Err(MeshError::Parse { .. })));
    }

    #[test]
    fn ascii_stl() {
        let src = "solid t\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\nendloop\nendfacet\nendsolid t\n";
        let m = parse_stl(src.as_bytes()).unwrap();
        assert_eq!((m.vertices.len(), m.triangles.len()), (3, 1));
    }

    #[test]
    fn file_roundtrip_and_format_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        save_mesh(&unit_cube(), &path, MeshFormat::Obj).unwrap();
        let m = load_mesh(&path, MeshFormat::from_path(&path).unwrap()).unwrap();
        assert_eq!(m.name(), "cube");
        assert_eq!(m.vertex_count(), 8);
        assert!(matches!(MeshFormat::from_path(Path::new("a.xyz")), Err(MeshError::UnsupportedFormat(_))));
        assert!(matches!(load_mesh(&dir.path().join("none.ply"), MeshFormat::Ply), Err(MeshError::Io { .. })));
    }

    proptest! {
        #[test]
        fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
            let _ = parse_ply(&bytes);
            let _ = parse_stl(&bytes);
            let _ = parse_obj(&bytes);
        }

        #[test]
        fn ply_header_mutations_never_panic(cut in 0usize..400, byte in any::<u8>()) {
            let mut bytes = write_ply(&plate(1.0, 2, 0.0), &[], PlyEncoding::Ascii);
            let i = cut % bytes.len();
            bytes[i] = byte;
            let _ = parse_ply(&bytes);
        }
    }
}
