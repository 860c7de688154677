//! OFF and PLY readers, and a PLY writer with optional vertex colors.
//!
//! PLY support covers `ascii` and `binary_little_endian` with a `vertex`
//! element carrying `x y z` and a `face` element carrying a list property
//! named `vertex_indices` (or `vertex_index`). Other properties are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Location, Result};

/// 8-bit vertex color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

/// Load an OFF or PLY mesh. The mesh id is the file stem.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, triangles) = match ext.as_deref() {
        Some("off") => parse_off(path, &bytes)?,
        Some("ply") => parse_ply(path, &bytes)?,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    Mesh::new(id, vertices, triangles)
}

fn parse_err(path: &Path, location: Location, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

type Parsed = (Vec<Point3<f64>>, Vec<[usize; 3]>);

/// Whitespace tokens tagged with their 1-based line, comments stripped.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        line.split_whitespace().map(move |t| (i + 1, t))
    })
}

fn parse_off(path: &Path, bytes: &[u8]) -> Result<Parsed> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        parse_err(
            path,
            Location::Byte(e.valid_up_to()),
            "OFF file is not valid UTF-8",
        )
    })?;
    let mut toks = tokens(text).peekable();
    let last_line = text.lines().count().max(1);
    let eof = |what: &str| {
        parse_err(
            path,
            Location::Line(last_line),
            format!("unexpected end of file, expected {what}"),
        )
    };
    macro_rules! next {
        ($what:expr) => {
            toks.next().ok_or_else(|| eof($what))
        };
    }

    let (line, header) = next!("OFF header")?;
    // "OFF" may be glued to the counts on the same line
    let mut counts: Vec<(usize, String)> = Vec::new();
    if header != "OFF" {
        if let Some(rest) = header.strip_prefix("OFF") {
            counts.push((line, rest.to_string()));
        } else {
            return Err(parse_err(
                path,
                Location::Line(line),
                format!("expected 'OFF' header, found '{header}'"),
            ));
        }
    }
    while counts.len() < 3 {
        let (l, t) = next!("vertex/face/edge counts")?;
        counts.push((l, t.to_string()));
    }
    let count = |(l, t): &(usize, String)| {
        t.parse::<usize>()
            .map_err(|_| parse_err(path, Location::Line(*l), format!("invalid count '{t}'")))
    };
    let nv = count(&counts[0])?;
    let nf = count(&counts[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut p = [0.0; 3];
        for c in &mut p {
            let (l, t) = next!("vertex coordinate")?;
            *c = t.parse::<f64>().map_err(|_| {
                parse_err(path, Location::Line(l), format!("invalid coordinate '{t}'"))
            })?;
        }
        vertices.push(Point3::new(p[0], p[1], p[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let (l, t) = next!("face vertex count")?;
        let k: usize = t
            .parse()
            .map_err(|_| parse_err(path, Location::Line(l), format!("invalid face size '{t}'")))?;
        if k != 3 {
            return Err(parse_err(
                path,
                Location::Line(l),
                format!("face {f} has {k} vertices; only triangles are supported"),
            ));
        }
        let mut tri = [0usize; 3];
        for v in &mut tri {
            let (l, t) = next!("face index")?;
            *v = t.parse().map_err(|_| {
                parse_err(
                    path,
                    Location::Line(l),
                    format!("invalid vertex index '{t}'"),
                )
            })?;
            if *v >= nv {
                return Err(parse_err(
                    path,
                    Location::Line(l),
                    format!("face {f}: vertex index {v} out of range (vertex count {nv})"),
                ));
            }
        }
        triangles.push(tri);
        // trailing per-face color values are ignored up to the end of the line
        while toks.peek().is_some_and(|&(tl, _)| tl == l) {
            toks.next();
        }
    }
    Ok((vertices, triangles))
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
    fn parse(name: &str) -> Option<Self> {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
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

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

struct PlyHeader {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_ply_header(path: &Path, bytes: &[u8]) -> Result<PlyHeader> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| {
            parse_err(
                path,
                Location::Byte(offset),
                "PLY header not terminated by 'end_header'",
            )
        })?;
        line_no += 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| {
                parse_err(
                    path,
                    Location::Line(line_no),
                    "PLY header is not valid UTF-8",
                )
            })?
            .trim_end_matches('\r');
        offset += end + 1;
        let mut words = line.split_whitespace();
        let err = |msg: String| parse_err(path, Location::Line(line_no), msg);
        match words.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(err("missing 'ply' magic".into())),
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLe,
                    Some(other) => return Err(err(format!("unsupported PLY format '{other}'"))),
                    None => return Err(err("missing PLY format".into())),
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = words
                    .next()
                    .ok_or_else(|| err("element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(format!("element '{name}' has an invalid count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err("property before any element".into()))?;
                let ty = words
                    .next()
                    .ok_or_else(|| err("property without type".into()))?;
                let prop = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    let name = words.next();
                    match (count, item, name) {
                        (Some(count), Some(item), Some(name)) => Property::List {
                            name: name.to_string(),
                            count,
                            item,
                        },
                        _ => return Err(err("malformed list property".into())),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| err(format!("unknown property type '{ty}'")))?;
                    let name = words
                        .next()
                        .ok_or_else(|| err("property without name".into()))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(err(format!("unexpected header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| {
        parse_err(
            path,
            Location::Line(line_no),
            "PLY header has no format line",
        )
    })?;
    Ok(PlyHeader {
        format,
        elements,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

/// Sequential access to PLY body values in either encoding.
enum Body<'a> {
    Ascii {
        tokens: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
        last_line: usize,
    },
    Binary {
        bytes: &'a [u8],
        pos: usize,
        base: usize,
    },
}

impl Body<'_> {
    fn location(&self) -> Location {
        match self {
            Body::Ascii { last_line, .. } => Location::Line(*last_line),
            Body::Binary { pos, base, .. } => Location::Byte(base + pos),
        }
    }

    fn read(&mut self, path: &Path, ty: Scalar) -> Result<f64> {
        match self {
            Body::Ascii { tokens, last_line } => {
                let (line, tok) = tokens.next().ok_or_else(|| {
                    parse_err(
                        path,
                        Location::Line(*last_line),
                        "unexpected end of PLY body",
                    )
                })?;
                *last_line = line;
                tok.parse::<f64>().map_err(|_| {
                    parse_err(
                        path,
                        Location::Line(line),
                        format!("invalid number '{tok}'"),
                    )
                })
            }
            Body::Binary { bytes, pos, base } => {
                let size = ty.size();
                if *pos + size > bytes.len() {
                    return Err(parse_err(
                        path,
                        Location::Byte(*base + *pos),
                        "unexpected end of binary PLY body",
                    ));
                }
                let v = ty.read_le(&bytes[*pos..*pos + size]);
                *pos += size;
                Ok(v)
            }
        }
    }
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<Parsed> {
    let header = parse_ply_header(path, bytes)?;
    let body_bytes = &bytes[header.body_offset..];
    let mut body = match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body_bytes).map_err(|e| {
                parse_err(
                    path,
                    Location::Byte(header.body_offset + e.valid_up_to()),
                    "PLY body is not valid UTF-8",
                )
            })?;
            let first = header.body_line;
            Body::Ascii {
                tokens: Box::new(
                    text.lines()
                        .enumerate()
                        .flat_map(move |(i, l)| l.split_whitespace().map(move |t| (first + i, t))),
                ),
                last_line: first,
            }
        }
        PlyFormat::BinaryLe => Body::Binary {
            bytes: body_bytes,
            pos: 0,
            base: header.body_offset,
        },
    };

    let mut vertices: Option<Vec<Point3<f64>>> = None;
    let mut triangles: Option<Vec<[usize; 3]>> = None;
    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                let axis = |n: &str| {
                    element
                        .properties
                        .iter()
                        .position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
                };
                let (Some(ix), Some(iy), Some(iz)) = (axis("x"), axis("y"), axis("z")) else {
                    return Err(parse_err(
                        path,
                        Location::Line(1),
                        "vertex element lacks x/y/z properties",
                    ));
                };
                let mut out = Vec::with_capacity(element.count);
                let mut values = vec![0.0; element.properties.len()];
                for _ in 0..element.count {
                    for (slot, prop) in values.iter_mut().zip(&element.properties) {
                        *slot = match prop {
                            Property::Scalar { ty, .. } => body.read(path, *ty)?,
                            Property::List { count, item, .. } => {
                                let n = body.read(path, *count)? as usize;
                                for _ in 0..n {
                                    body.read(path, *item)?;
                                }
                                0.0
                            }
                        };
                    }
                    out.push(Point3::new(values[ix], values[iy], values[iz]));
                }
                vertices = Some(out);
            }
            "face" => {
                let nv = vertices.as_ref().map_or(0, |v| v.len());
                let mut out = Vec::with_capacity(element.count);
                for f in 0..element.count {
                    let mut tri = None;
                    for prop in &element.properties {
                        match prop {
                            Property::List { name, count, item }
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let n = body.read(path, *count)? as usize;
                                if n != 3 {
                                    return Err(parse_err(
                                        path,
                                        body.location(),
                                        format!("face {f} has {n} vertices; only triangles are supported"),
                                    ));
                                }
                                let mut t = [0usize; 3];
                                for v in &mut t {
                                    let raw = body.read(path, *item)?;
                                    if raw < 0.0 || raw as usize >= nv {
                                        return Err(parse_err(
                                            path,
                                            body.location(),
                                            format!("face {f}: vertex index {raw} out of range (vertex count {nv})"),
                                        ));
                                    }
                                    *v = raw as usize;
                                }
                                tri = Some(t);
                            }
                            Property::List { count, item, .. } => {
                                let n = body.read(path, *count)? as usize;
                                for _ in 0..n {
                                    body.read(path, *item)?;
                                }
                            }
                            Property::Scalar { ty, .. } => {
                                body.read(path, *ty)?;
                            }
                        }
                    }
                    out.push(tri.ok_or_else(|| {
                        parse_err(
                            path,
                            body.location(),
                            "face element lacks a vertex_indices list",
                        )
                    })?);
                }
                triangles = Some(out);
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                body.read(path, *ty)?;
                            }
                            Property::List { count, item, .. } => {
                                let n = body.read(path, *count)? as usize;
                                for _ in 0..n {
                                    body.read(path, *item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    match (vertices, triangles) {
        (Some(v), Some(t)) => Ok((v, t)),
        _ => Err(parse_err(
            path,
            Location::Line(1),
            "PLY file needs both vertex and face elements",
        )),
    }
}

/// Render an ASCII PLY document. Coordinates are written with full `f64`
/// round-trip precision.
pub fn ply_string(mesh: &Mesh, colors: Option<&[Rgb]>) -> Result<String> {
    ply_document(mesh.id(), mesh.vertices(), mesh.triangles(), colors)
}

/// Like [`ply_string`] for geometry that need not form a valid [`Mesh`]
/// (a registration may fold triangles flat).
pub fn ply_document(
    id: &str,
    vertices: &[Point3<f64>],
    triangles: &[[usize; 3]],
    colors: Option<&[Rgb]>,
) -> Result<String> {
    if let Some(c) = colors {
        if c.len() != vertices.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} colors for {} vertices",
                c.len(),
                vertices.len()
            )));
        }
    }
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "comment id {id}");
    let _ = writeln!(out, "element vertex {}", vertices.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(out, "element face {}", triangles.len());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in vertices.iter().enumerate() {
        let _ = write!(out, "{:?} {:?} {:?}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let Rgb(r, g, b) = c[i];
            let _ = write!(out, " {r} {g} {b}");
        }
        out.push('\n');
    }
    for [a, b, c] in triangles {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    Ok(out)
}

pub fn write_ply(path: impl AsRef<Path>, mesh: &Mesh, colors: Option<&[Rgb]>) -> Result<()> {
    let path = path.as_ref();
    let text = ply_string(mesh, colors)?;
    crate::pipeline::write_atomic(path, text.as_bytes())
}
