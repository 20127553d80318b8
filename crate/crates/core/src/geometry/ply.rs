//! PLY reader and writer for point clouds and triangle meshes.
//!
//! Supports `ascii 1.0` and `binary_little_endian 1.0`. Vertex properties
//! `x y z` are required; `nx ny nz` and `red green blue` are optional. Faces
//! use a `vertex_indices` (or `vertex_index`) list and polygons are
//! fan-triangulated on load.

use std::io::Write;
use std::path::Path;

use super::cloud::{PointCloud, Vec3};
use super::mesh::TriangleMesh;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Ply(format!("unknown scalar type '{other}'"))),
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Contents of a PLY file: the vertex cloud and, when faces exist, a mesh.
#[derive(Clone, Debug)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub mesh: Option<TriangleMesh>,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    Ok(read_ply(path)?.cloud)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    read_ply(path)?.mesh.ok_or(Error::EmptyMesh)
}

pub fn parse_ply(bytes: &[u8]) -> Result<PlyData> {
    let (format, elements, body_start) = parse_header(bytes)?;
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(elements.len());
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(&bytes[body_start..]).map_err(|_| Error::Ply("non-UTF8 ascii body".into()))?;
            let mut tokens = text.split_ascii_whitespace();
            for el in &elements {
                let mut el_rows = Vec::with_capacity(el.count);
                for _ in 0..el.count {
                    let mut row = Vec::new();
                    for prop in &el.props {
                        match prop {
                            Property::Scalar { .. } => row.push(next_number(&mut tokens)?),
                            Property::List { .. } => {
                                let n = next_number(&mut tokens)? as usize;
                                row.push(n as f64);
                                for _ in 0..n {
                                    row.push(next_number(&mut tokens)?);
                                }
                            }
                        }
                    }
                    el_rows.push(row);
                }
                rows.push(el_rows);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut pos = body_start;
            let mut take = |n: usize| -> Result<&[u8]> {
                let s = bytes
                    .get(pos..pos + n)
                    .ok_or_else(|| Error::Ply("unexpected end of binary body".into()))?;
                pos += n;
                Ok(s)
            };
            for el in &elements {
                let mut el_rows = Vec::with_capacity(el.count);
                for _ in 0..el.count {
                    let mut row = Vec::new();
                    for prop in &el.props {
                        match prop {
                            Property::Scalar { ty, .. } => row.push(ty.read_le(take(ty.size())?)),
                            Property::List { count, item, .. } => {
                                let n = count.read_le(take(count.size())?) as usize;
                                row.push(n as f64);
                                for _ in 0..n {
                                    row.push(item.read_le(take(item.size())?));
                                }
                            }
                        }
                    }
                    el_rows.push(row);
                }
                rows.push(el_rows);
            }
        }
    }
    assemble(&elements, &rows)
}

fn next_number<'a>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<f64> {
    let tok = tokens.next().ok_or_else(|| Error::Ply("unexpected end of ascii body".into()))?;
    tok.parse::<f64>().map_err(|_| Error::Ply(format!("bad number '{tok}'")))
}

fn parse_header(bytes: &[u8]) -> Result<(PlyFormat, Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Ply("missing end_header".into()))?;
    let mut body_start = end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Ply("non-UTF8 header".into()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => return Err(Error::Ply(format!("unsupported format '{other}'"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Ply(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .props
                .push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                }),
            _ => return Err(Error::Ply(format!("unrecognized header line '{line}'"))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("missing format line".into()))?;
    Ok((format, elements, body_start))
}

fn scalar_slot(el: &Element, name: &str) -> Option<(usize, Scalar)> {
    // only valid when every property before it is a scalar, which holds for vertices
    el.props.iter().enumerate().find_map(|(i, p)| match p {
        Property::Scalar { name: n, ty } if n == name => Some((i, *ty)),
        _ => None,
    })
}

fn assemble(elements: &[Element], rows: &[Vec<Vec<f64>>]) -> Result<PlyData> {
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Ply("no vertex element".into()))?;
    let vel = &elements[vi];
    if vel.props.iter().any(|p| matches!(p, Property::List { .. })) {
        return Err(Error::Ply("list properties on vertices are not supported".into()));
    }
    let slot = |n: &str| scalar_slot(vel, n);
    let (xs, ys, zs) = match (slot("x"), slot("y"), slot("z")) {
        (Some(x), Some(y), Some(z)) => (x.0, y.0, z.0),
        _ => return Err(Error::Ply("vertex element lacks x/y/z".into())),
    };
    let vrows = &rows[vi];
    let points: Vec<Vec3> = vrows.iter().map(|r| Vec3::new(r[xs], r[ys], r[zs])).collect();
    let normals = match (slot("nx"), slot("ny"), slot("nz")) {
        (Some(a), Some(b), Some(c)) => {
            let ns: Option<Vec<Vec3>> = vrows
                .iter()
                .map(|r| Vec3::new(r[a.0], r[b.0], r[c.0]).try_normalize(1e-12))
                .collect();
            ns
        }
        _ => None,
    };
    let colors = match (slot("red"), slot("green"), slot("blue")) {
        (Some(r), Some(g), Some(b)) => {
            let scale = |ty: Scalar| if matches!(ty, Scalar::F32 | Scalar::F64) { 1.0 } else { 1.0 / 255.0 };
            Some(
                vrows
                    .iter()
                    .map(|row| [row[r.0] * scale(r.1), row[g.0] * scale(g.1), row[b.0] * scale(b.1)])
                    .collect(),
            )
        }
        _ => None,
    };
    let cloud = PointCloud::with_attributes(points.clone(), normals, colors)?;

    let mesh = match elements.iter().position(|e| e.name == "face") {
        Some(fi) if elements[fi].count > 0 => {
            let fel = &elements[fi];
            // offset of the index list within a flattened row
            let mut offset = 0usize;
            let mut found = None;
            for (pi, p) in fel.props.iter().enumerate() {
                match p {
                    Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index" => {
                        found = Some(pi);
                        break;
                    }
                    Property::List { .. } => {
                        return Err(Error::Ply("face list before vertex_indices unsupported".into()))
                    }
                    Property::Scalar { .. } => offset += 1,
                }
            }
            if found.is_none() {
                return Err(Error::Ply("face element lacks vertex_indices".into()));
            }
            let mut tris = Vec::new();
            for row in &rows[fi] {
                let n = row[offset] as usize;
                let idx: Vec<usize> = row[offset + 1..offset + 1 + n].iter().map(|&v| v as usize).collect();
                for k in 1..n.saturating_sub(1) {
                    tris.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            Some(TriangleMesh::new(points, tris)?)
        }
        _ => None,
    };
    Ok(PlyData { cloud, mesh })
}

fn header(format: PlyFormat, n_vertices: usize, normals: bool, colors: bool, n_faces: Option<usize>) -> String {
    let mut h = String::from("ply\n");
    h += match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    };
    h += &format!("element vertex {n_vertices}\n");
    h += "property double x\nproperty double y\nproperty double z\n";
    if normals {
        h += "property double nx\nproperty double ny\nproperty double nz\n";
    }
    if colors {
        h += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    if let Some(f) = n_faces {
        h += &format!("element face {f}\nproperty list uchar int vertex_indices\n");
    }
    h += "end_header\n";
    h
}

fn color_byte(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_point_cloud(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    encode(cloud.points(), cloud.normals(), cloud.colors(), &[], format, false)
}

pub fn encode_mesh(mesh: &TriangleMesh, format: PlyFormat) -> Vec<u8> {
    encode(mesh.vertices(), None, None, mesh.triangles(), format, true)
}

fn encode(
    points: &[Vec3],
    normals: Option<&[Vec3]>,
    colors: Option<&[[f64; 3]]>,
    faces: &[[usize; 3]],
    format: PlyFormat,
    with_faces: bool,
) -> Vec<u8> {
    let mut out = header(
        format,
        points.len(),
        normals.is_some(),
        colors.is_some(),
        with_faces.then_some(faces.len()),
    )
    .into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut s = String::new();
            for (i, p) in points.iter().enumerate() {
                s += &format!("{} {} {}", p.x, p.y, p.z);
                if let Some(ns) = normals {
                    s += &format!(" {} {} {}", ns[i].x, ns[i].y, ns[i].z);
                }
                if let Some(cs) = colors {
                    let c = cs[i];
                    s += &format!(" {} {} {}", color_byte(c[0]), color_byte(c[1]), color_byte(c[2]));
                }
                s.push('\n');
            }
            for f in faces {
                s += &format!("3 {} {} {}\n", f[0], f[1], f[2]);
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in points.iter().enumerate() {
                for v in p.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(ns) = normals {
                    for v in ns[i].iter() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                if let Some(cs) = colors {
                    out.extend(cs[i].iter().map(|&c| color_byte(c)));
                }
            }
            for f in faces {
                out.push(3);
                for &v in f {
                    out.extend_from_slice(&(v as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_bytes(path.as_ref(), &encode_point_cloud(cloud, format))
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mesh(mesh, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ASCII_QUAD: &str = "ply\nformat ascii 1.0\ncomment quad\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255 0 0\n1 0 0 0 255 0\n1 1 0 0 0 255\n0 1 0 255 255 255\n4 0 1 2 3\n";

    #[test]
    fn reads_ascii_quad_as_two_triangles() {
        let d = parse_ply(ASCII_QUAD.as_bytes()).unwrap();
        assert_eq!(d.cloud.len(), 4);
        assert_eq!(d.cloud.colors().unwrap()[0], [1.0, 0.0, 0.0]);
        let m = d.mesh.unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn mesh_survives_binary_round_trip() {
        let m = parse_ply(ASCII_QUAD.as_bytes()).unwrap().mesh.unwrap();
        let back = parse_ply(&encode_mesh(&m, PlyFormat::BinaryLittleEndian)).unwrap();
        assert_eq!(back.mesh.unwrap().triangles(), m.triangles());
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_ply(b"not a ply").is_err());
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
    }

    proptest! {
        #[test]
        fn cloud_round_trips_in_both_formats(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..40),
            binary in any::<bool>(),
        ) {
            let points: Vec<Vec3> = pts.iter().map(|p| Vec3::from(*p)).collect();
            let normals: Vec<Vec3> = points.iter().map(|p| (p + Vec3::new(0.0, 0.0, 20.0)).normalize()).collect();
            let c = PointCloud::with_normals(points, normals).unwrap();
            let fmt = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
            let back = parse_ply(&encode_point_cloud(&c, fmt)).unwrap().cloud;
            prop_assert_eq!(back.len(), c.len());
            for (a, b) in back.points().iter().zip(c.points()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            prop_assert!(back.normals().is_some());
        }
    }
}
