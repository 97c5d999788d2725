//! File formats: Wavefront OBJ meshes, plain-text pose trajectories, rig
//! calibration JSON and binary PPM images.
//!
//! Loaders report the offending line or field; nothing is silently
//! defaulted.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, CameraView};
use crate::geometry::{nearest_rotation, RigidTransform};
use crate::image::RgbImage;
use crate::renderer::TriangleMesh;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}, line {line}: {message}")]
    Line { what: String, line: usize, message: String },
    #[error("{what}: {message}")]
    Invalid { what: String, message: String },
}

impl IoError {
    fn line(what: &str, line: usize, message: impl Into<String>) -> Self {
        IoError::Line {
            what: what.into(),
            line,
            message: message.into(),
        }
    }

    fn invalid(what: &str, message: impl Into<String>) -> Self {
        IoError::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| IoError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------- OBJ

fn obj_index(token: &str, count: usize, line: usize) -> Result<u32, IoError> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head
        .parse()
        .map_err(|_| IoError::line("obj", line, format!("bad vertex reference {token:?}")))?;
    let resolved = match i {
        0 => None,
        i if i > 0 => Some(i - 1),
        i => Some(count as i64 + i),
    };
    match resolved {
        Some(r) if r >= 0 && (r as usize) < count => Ok(r as u32),
        _ => Err(IoError::line("obj", line, format!("vertex reference {i} out of range (have {count})"))),
    }
}

/// Parses vertices and faces of an OBJ file. Polygons are fan-triangulated;
/// texture and normal references are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, IoError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let c: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| IoError::line("obj", line, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 || !c.iter().all(|x| x.is_finite()) {
                    return Err(IoError::line("obj", line, "vertex needs three finite coordinates"));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| obj_index(t, vertices.len(), line))
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(IoError::line("obj", line, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| IoError::invalid("obj", e.to_string()))
}

pub fn format_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn load_obj(path: &Path) -> Result<TriangleMesh, IoError> {
    parse_obj(&read_to_string(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: IoError, path: &Path) -> IoError {
    let p = path.display().to_string();
    match e {
        IoError::Line { line, message, .. } => IoError::Line { what: p, line, message },
        IoError::Invalid { message, .. } => IoError::Invalid { what: p, message },
        other => other,
    }
}

// ---------------------------------------------------------------- rotations

/// Deviation above which a loaded rotation is re-orthonormalized.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;
/// Deviation above which a loaded matrix is rejected outright.
const MAX_ROTATION_REPAIR: f64 = 1e-2;

/// Accepts a near-rotation, projecting it onto SO(3) with a warning when it
/// is off by more than [`ORTHONORMAL_TOLERANCE`].
fn checked_rotation(m: Matrix3<f64>, context: &str) -> Result<Matrix3<f64>, String> {
    let deviation = (m.transpose() * m - Matrix3::identity()).abs().max();
    if deviation <= ORTHONORMAL_TOLERANCE && m.determinant() > 0.0 {
        return Ok(m);
    }
    let r = nearest_rotation(&m).ok_or("rotation is a reflection or degenerate")?;
    let change = (r - m).abs().max();
    if change > MAX_ROTATION_REPAIR {
        return Err(format!("matrix is not a rotation (off by {change:.3e})"));
    }
    warn!("{context}: rotation off by {deviation:.3e}, re-orthonormalized");
    Ok(r)
}

// ---------------------------------------------------------------- trajectories

/// One pose of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    pub pose: RigidTransform,
}

/// Parses a trajectory: one frame per line, `index r00 r01 r02 r10 .. r22 tx ty tz`,
/// `#` starts a comment. Indices must increase strictly.
pub fn parse_trajectory(text: &str) -> Result<Vec<PoseRecord>, IoError> {
    const WHAT: &str = "trajectory";
    let mut out: Vec<PoseRecord> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 13 {
            return Err(IoError::line(WHAT, line, format!("expected 13 fields, found {}", tokens.len())));
        }
        let frame: usize = tokens[0]
            .parse()
            .map_err(|_| IoError::line(WHAT, line, format!("bad frame index {:?}", tokens[0])))?;
        if let Some(prev) = out.last() {
            if frame <= prev.frame {
                return Err(IoError::line(WHAT, line, format!("frame index {frame} not above {}", prev.frame)));
            }
        }
        let mut v = [0.0; 12];
        for (i, t) in tokens[1..].iter().enumerate() {
            v[i] = t
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| IoError::line(WHAT, line, format!("field {}: bad number {t:?}", i + 2)))?;
        }
        let m = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        let rotation =
            checked_rotation(m, &format!("{WHAT}, line {line}")).map_err(|e| IoError::line(WHAT, line, e))?;
        out.push(PoseRecord {
            frame,
            pose: RigidTransform::new(rotation, Vector3::new(v[9], v[10], v[11])),
        });
    }
    Ok(out)
}

/// Writes a trajectory with round-trip exact numbers.
pub fn format_trajectory(records: &[PoseRecord]) -> String {
    let mut out = String::from("# frame r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz (mm)\n");
    for r in records {
        let _ = write!(out, "{}", r.frame);
        let m = &r.pose.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let _ = write!(out, " {}", m[(i, j)]);
            }
        }
        let t = &r.pose.translation;
        let _ = writeln!(out, " {} {} {}", t.x, t.y, t.z);
    }
    out
}

pub fn load_trajectory(path: &Path) -> Result<Vec<PoseRecord>, IoError> {
    parse_trajectory(&read_to_string(path)?).map_err(|e| with_path(e, path))
}

pub fn records(poses: &[RigidTransform], first_frame: usize) -> Vec<PoseRecord> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| PoseRecord {
            frame: first_frame + i,
            pose: *p,
        })
        .collect()
}

// ---------------------------------------------------------------- rig calibration

/// On-disk camera: intrinsics plus `object_from_camera` as a row-major 4x4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub object_from_camera: [f64; 16],
}

impl From<&CameraView> for CameraRecord {
    fn from(v: &CameraView) -> Self {
        let m = v.object_from_camera().to_matrix4();
        let mut a = [0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                a[i * 4 + j] = m[(i, j)];
            }
        }
        let k = &v.intrinsics;
        CameraRecord {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            object_from_camera: a,
        }
    }
}

/// Parses a rig file: a JSON array of [`CameraRecord`], camera `i` at index `i`.
pub fn parse_rig(text: &str) -> Result<Vec<CameraView>, IoError> {
    const WHAT: &str = "rig";
    let records: Vec<CameraRecord> = serde_json::from_str(text).map_err(|e| IoError::line(WHAT, e.line(), e.to_string()))?;
    if records.is_empty() {
        return Err(IoError::invalid(WHAT, "no cameras"));
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let field = format!("rig camera {i}");
            let k = CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
                .map_err(|e| IoError::invalid(&field, e.to_string()))?;
            let m = Matrix4::from_row_slice(&r.object_from_camera);
            let last = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
            if !m.iter().all(|x| x.is_finite()) || last != [0.0, 0.0, 0.0, 1.0] {
                return Err(IoError::invalid(&field, "object_from_camera must be finite with last row 0 0 0 1"));
            }
            let rotation = checked_rotation(m.fixed_view::<3, 3>(0, 0).into_owned(), &field)
                .map_err(|e| IoError::invalid(&field, e))?;
            let t = RigidTransform::new(rotation, m.fixed_view::<3, 1>(0, 3).into_owned());
            Ok(CameraView::new(k, t, i))
        })
        .collect()
}

pub fn format_rig(views: &[CameraView]) -> String {
    let records: Vec<CameraRecord> = views.iter().map(CameraRecord::from).collect();
    let mut s = serde_json::to_string_pretty(&records).expect("rig records serialize");
    s.push('\n');
    s
}

pub fn load_rig(path: &Path) -> Result<Vec<CameraView>, IoError> {
    parse_rig(&read_to_string(path)?).map_err(|e| with_path(e, path))
}

// ---------------------------------------------------------------- PPM

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Decodes a binary (P6) PPM with 8-bit samples. Header comments are allowed.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, IoError> {
    const WHAT: &str = "ppm";
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Option<&[u8]> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        (*pos > start).then(|| &bytes[start..*pos])
    };
    if next_token(&mut pos) != Some(b"P6".as_slice()) {
        return Err(IoError::invalid(WHAT, "not a binary PPM (missing P6 magic)"));
    }
    let field = |name: &str, pos: &mut usize| -> Result<u32, IoError> {
        next_token(pos)
            .and_then(|t| std::str::from_utf8(t).ok())
            .and_then(|t| t.parse::<u32>().ok())
            .ok_or_else(|| IoError::invalid(WHAT, format!("bad or missing {name}")))
    };
    let width = field("width", &mut pos)?;
    let height = field("height", &mut pos)?;
    let maxval = field("maxval", &mut pos)?;
    if width == 0 || height == 0 {
        return Err(IoError::invalid(WHAT, "zero image size"));
    }
    if maxval != 255 {
        return Err(IoError::invalid(WHAT, format!("maxval {maxval} unsupported, need 255")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(IoError::invalid(WHAT, "missing separator before pixel data"));
    }
    pos += 1;
    let need = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| IoError::invalid(WHAT, "image too large"))?;
    let data = bytes.get(pos..pos + need).ok_or_else(|| {
        IoError::invalid(WHAT, format!("truncated pixel data: need {need} bytes, have {}", bytes.len() - pos))
    })?;
    Ok(RgbImage {
        width,
        height,
        data: data.to_vec(),
    })
}

pub fn load_ppm(path: &Path) -> Result<RgbImage, IoError> {
    decode_ppm(&read_bytes(path)?).map_err(|e| with_path(e, path))
}
