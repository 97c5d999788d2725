//! Silhouette rasterization and signed-distance level sets.
//!
//! Level-set convention: positive inside the silhouette. A foreground pixel
//! stores its distance to the nearest background pixel center minus one half,
//! a background pixel the negated distance to the nearest foreground pixel
//! minus one half, so the zero level runs midway between pixel centers.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, CameraView};
use crate::geometry::RigidTransform;

/// Vertices closer than this to the image plane (mm) reject their triangle.
const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh needs at least 4 vertices and 4 faces, got {vertices} and {faces}")]
    TooSmall { vertices: usize, faces: usize },
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    bbox_min: Vector3<f64>,
    bbox_max: Vector3<f64>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.len() < 4 || faces.len() < 4 {
            return Err(MeshError::TooSmall {
                vertices: vertices.len(),
                faces: faces.len(),
            });
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&index) = face.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    face: f,
                    index,
                    count: vertices.len(),
                });
            }
        }
        let mut bbox_min = vertices[0];
        let mut bbox_max = vertices[0];
        for v in &vertices {
            bbox_min = bbox_min.inf(v);
            bbox_max = bbox_max.sup(v);
        }
        Ok(Self {
            vertices,
            faces,
            bbox_min,
            bbox_max,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn bbox(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.bbox_min, self.bbox_max)
    }

    /// Center of the axis-aligned bounding box; origin of the object-centered frame.
    pub fn bbox_center(&self) -> Vector3<f64> {
        (self.bbox_min + self.bbox_max) * 0.5
    }

    /// `d` of the ADD thresholds: longest side of the bounding box.
    pub fn bbox_longest_side(&self) -> f64 {
        (self.bbox_max - self.bbox_min).max()
    }

    /// Same mesh with every vertex mapped through `t`.
    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|v| t.transform_point(v)).collect();
        TriangleMesh::new(vertices, self.faces.clone()).expect("rigid motion keeps a valid mesh valid")
    }
}

/// Binary per-pixel occupancy, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilhouetteMask {
    pub width: u32,
    pub height: u32,
    pub occupancy: Vec<bool>,
}

impl SilhouetteMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            occupancy: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut occupancy = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                occupancy.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            occupancy,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.occupancy[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            occupancy: self.occupancy.iter().map(|o| !o).collect(),
        }
    }

    /// Mean pixel coordinate of the foreground, if any.
    pub fn centroid(&self) -> Option<Vector2<f64>> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in self.occupancy.iter().enumerate().filter(|(_, &o)| o) {
            sx += (i % self.width as usize) as f64;
            sy += (i / self.width as usize) as f64;
            n += 1;
        }
        (n > 0).then(|| Vector2::new(sx / n as f64, sy / n as f64))
    }
}

/// Output of a full template render: silhouette plus the visible surface.
#[derive(Debug, Clone)]
pub struct RenderedTemplate {
    pub mask: SilhouetteMask,
    /// Per pixel, the nearest visible surface point in the mesh's own frame
    /// (meaningful only where `mask` is set).
    pub surface: Vec<Vector3<f64>>,
    /// Camera-frame depth per pixel, `f64::INFINITY` for background.
    pub depth: Vec<f64>,
}

/// Binary coverage of the mesh projected through `view` at `object_pose`
/// (object-centered frame from mesh frame).
pub fn rasterize_silhouette(mesh: &TriangleMesh, view: &CameraView, object_pose: &RigidTransform) -> SilhouetteMask {
    render_template(mesh, view, object_pose).mask
}

pub fn render_template(mesh: &TriangleMesh, view: &CameraView, object_pose: &RigidTransform) -> RenderedTemplate {
    let k = view.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut surface = vec![Vector3::zeros(); w * h];
    let camera_from_mesh = view.camera_from_object().compose(object_pose);

    let cam: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| camera_from_mesh.transform_point(v)).collect();
    let screen: Vec<Vector2<f64>> = cam
        .iter()
        .map(|p| Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
        .collect();

    for face in &mesh.faces {
        let [i0, i1, i2] = face.map(|i| i as usize);
        let (z0, z1, z2) = (cam[i0].z, cam[i1].z, cam[i2].z);
        if z0 <= NEAR_PLANE || z1 <= NEAR_PLANE || z2 <= NEAR_PLANE {
            continue;
        }
        let (a, b, c) = (screen[i0], screen[i1], screen[i2]);
        let area = edge(&a, &b, &c);
        if area.abs() < 1e-12 {
            continue;
        }
        let x_lo = a.x.min(b.x).min(c.x).ceil().max(0.0);
        let x_hi = a.x.max(b.x).max(c.x).floor().min(w as f64 - 1.0);
        let y_lo = a.y.min(b.y).min(c.y).ceil().max(0.0);
        let y_hi = a.y.max(b.y).max(c.y).floor().min(h as f64 - 1.0);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let inv_area = 1.0 / area;
        let (iz0, iz1, iz2) = (1.0 / z0, 1.0 / z1, 1.0 / z2);
        let (m0, m1, m2) = (
            mesh.vertices[i0] * iz0,
            mesh.vertices[i1] * iz1,
            mesh.vertices[i2] * iz2,
        );
        for py in y_lo as usize..=y_hi as usize {
            for px in x_lo as usize..=x_hi as usize {
                let p = Vector2::new(px as f64, py as f64);
                let w0 = edge(&b, &c, &p) * inv_area;
                let w1 = edge(&c, &a, &p) * inv_area;
                let w2 = edge(&a, &b, &p) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // perspective-correct interpolation through 1/z
                let inv_z = w0 * iz0 + w1 * iz1 + w2 * iz2;
                let z = 1.0 / inv_z;
                let idx = py * w + px;
                if z < depth[idx] {
                    depth[idx] = z;
                    surface[idx] = (m0 * w0 + m1 * w1 + m2 * w2) * z;
                }
            }
        }
    }

    let occupancy = depth.iter().map(|d| d.is_finite()).collect();
    RenderedTemplate {
        mask: SilhouetteMask {
            width: k.width,
            height: k.height,
            occupancy,
        },
        surface,
        depth,
    }
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Marker for "no nearest contour pixel" in [`LevelSetField::nearest_contour`].
pub const NO_CONTOUR: u32 = u32::MAX;

/// Signed distance field over the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField {
    pub width: u32,
    pub height: u32,
    pub phi: Vec<f64>,
    /// Linear index of the nearest foreground contour pixel, or [`NO_CONTOUR`].
    pub nearest_contour: Vec<u32>,
}

impl LevelSetField {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.phi[(y * self.width + x) as usize]
    }

    /// True when the mask had no contour (all foreground or all background).
    pub fn is_degenerate(&self) -> bool {
        self.nearest_contour.iter().all(|&c| c == NO_CONTOUR)
    }

    /// Bilinear interpolation; `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (w, h) = (self.width as usize, self.height as usize);
        if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(w.saturating_sub(2));
        let y0 = (y.floor() as usize).min(h.saturating_sub(2));
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let p = |xx: usize, yy: usize| self.phi[yy * w + xx];
        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Central differences (unit step) of the interpolated field. `None`
    /// when the stencil leaves the image.
    pub fn gradient(&self, x: f64, y: f64) -> Option<Vector2<f64>> {
        let gx = (self.sample(x + 1.0, y)? - self.sample(x - 1.0, y)?) * 0.5;
        let gy = (self.sample(x, y + 1.0)? - self.sample(x, y - 1.0)?) * 0.5;
        Some(Vector2::new(gx, gy))
    }
}

/// Squared Euclidean distance transform with nearest-site indices.
///
/// Two separable passes of the lower-envelope-of-parabolas construction.
/// Returns `(dist2, nearest)`; pixels with no site get `INFINITY` / [`NO_CONTOUR`].
pub fn squared_distance_transform(width: usize, height: usize, is_site: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<u32>) {
    let n = width * height;
    let mut col_d = vec![f64::INFINITY; n];
    let mut col_arg = vec![NO_CONTOUR; n];
    let mut scratch = Envelope::new(width.max(height));

    let mut f = vec![0.0; height];
    let mut d = vec![0.0; height];
    let mut arg = vec![0u32; height];
    for x in 0..width {
        for y in 0..height {
            f[y] = if is_site(y * width + x) { 0.0 } else { f64::INFINITY };
        }
        scratch.run(&f, &mut d, &mut arg);
        for y in 0..height {
            col_d[y * width + x] = d[y];
            col_arg[y * width + x] = arg[y];
        }
    }

    let mut out_d = vec![f64::INFINITY; n];
    let mut out_arg = vec![NO_CONTOUR; n];
    let mut d = vec![0.0; width];
    let mut arg = vec![0u32; width];
    for y in 0..height {
        let row = &col_d[y * width..(y + 1) * width];
        scratch.run(row, &mut d, &mut arg);
        for x in 0..width {
            let i = y * width + x;
            out_d[i] = d[x];
            if arg[x] != NO_CONTOUR {
                let sx = arg[x] as usize;
                let sy = col_arg[y * width + sx] as usize;
                out_arg[i] = (sy * width + sx) as u32;
            }
        }
    }
    (out_d, out_arg)
}

struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn new(cap: usize) -> Self {
        Self {
            v: Vec::with_capacity(cap),
            z: Vec::with_capacity(cap + 1),
        }
    }

    /// 1D transform `d[q] = min_p (q-p)^2 + f[p]` over finite `f[p]`.
    fn run(&mut self, f: &[f64], d: &mut [f64], arg: &mut [u32]) {
        let (v, z) = (&mut self.v, &mut self.z);
        v.clear();
        z.clear();
        for q in 0..f.len() {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + (q * q) as f64;
            loop {
                match v.last() {
                    None => {
                        v.push(q);
                        z.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                        if s <= *z.last().unwrap() {
                            v.pop();
                            z.pop();
                        } else {
                            v.push(q);
                            z.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if v.is_empty() {
            d.fill(f64::INFINITY);
            arg.fill(NO_CONTOUR);
            return;
        }
        z.push(f64::INFINITY);
        let mut k = 0;
        for q in 0..f.len() {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            d[q] = dq * dq + f[p];
            arg[q] = p as u32;
        }
    }
}

/// Exact signed Euclidean distance field of a mask.
///
/// Masks without a contour produce `±(width + height)` everywhere, positive
/// when everything is foreground.
pub fn signed_distance(mask: &SilhouetteMask) -> LevelSetField {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let n = w * h;
    let fg_count = mask.count();
    if fg_count == 0 || fg_count == n {
        let sentinel = (mask.width + mask.height) as f64;
        let v = if fg_count == n { sentinel } else { -sentinel };
        return LevelSetField {
            width: mask.width,
            height: mask.height,
            phi: vec![v; n],
            nearest_contour: vec![NO_CONTOUR; n],
        };
    }
    let occ = &mask.occupancy;
    let (to_bg, near_bg) = squared_distance_transform(w, h, |i| !occ[i]);
    let (to_fg, near_fg) = squared_distance_transform(w, h, |i| occ[i]);

    let mut phi = vec![0.0; n];
    let mut nearest = vec![NO_CONTOUR; n];
    for i in 0..n {
        if occ[i] {
            phi[i] = to_bg[i].sqrt() - 0.5;
            // the nearest background pixel borders a foreground contour pixel;
            // take its foreground 4-neighbour closest to us
            let q = near_bg[i] as usize;
            let (qx, qy) = ((q % w) as i64, (q / w) as i64);
            let (px, py) = ((i % w) as i64, (i / w) as i64);
            let mut best = (i64::MAX, NO_CONTOUR);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (qx + dx, qy + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if occ[j] {
                    let dd = (nx - px).pow(2) + (ny - py).pow(2);
                    if dd < best.0 {
                        best = (dd, j as u32);
                    }
                }
            }
            nearest[i] = best.1;
        } else {
            phi[i] = -(to_fg[i].sqrt() - 0.5);
            nearest[i] = near_fg[i];
        }
    }
    LevelSetField {
        width: mask.width,
        height: mask.height,
        phi,
        nearest_contour: nearest,
    }
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Roi {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Grown by `margin` on every side and clipped to a `width` x `height` image.
    pub fn expanded(&self, margin: u32, width: u32, height: u32) -> Roi {
        Roi {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width),
            y1: (self.y1 + margin).min(height),
        }
    }
}

/// Pixels that can be covered by the projected mesh. The whole image when a
/// vertex lies behind the camera, `None` when nothing is in view.
pub fn projected_roi(mesh: &TriangleMesh, view: &CameraView, object_pose: &RigidTransform) -> Option<Roi> {
    let k = view.intrinsics;
    let camera_from_mesh = view.camera_from_object().compose(object_pose);
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    let mut behind = false;
    for v in &mesh.vertices {
        let p = camera_from_mesh.transform_point(v);
        if p.z <= NEAR_PLANE {
            behind = true;
            continue;
        }
        let u = Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        lo = lo.inf(&u);
        hi = hi.sup(&u);
    }
    if behind {
        return (lo.x.is_finite()).then(|| Roi::full(k.width, k.height));
    }
    let clip = |v: f64, n: u32| v.clamp(0.0, n as f64) as u32;
    let roi = Roi {
        x0: clip(lo.x.floor(), k.width),
        y0: clip(lo.y.floor(), k.height),
        x1: clip(hi.x.ceil() + 1.0, k.width),
        y1: clip(hi.y.ceil() + 1.0, k.height),
    };
    (roi.x0 < roi.x1 && roi.y0 < roi.y1).then_some(roi)
}

/// `view` cropped to `roi` and sampled `scale` times more densely per axis.
///
/// Pixel `x` of the original covers fine pixels `scale * (x - x0) + i` for
/// `i` in `0..scale`; with an odd scale the middle one shares its center.
pub fn sub_view(view: &CameraView, roi: &Roi, scale: u32) -> CameraView {
    let k = view.intrinsics;
    let s = scale as f64;
    let fine = CameraIntrinsics {
        fx: k.fx * s,
        fy: k.fy * s,
        cx: (k.cx - roi.x0 as f64 + 0.5) * s - 0.5,
        cy: (k.cy - roi.y0 as f64 + 0.5) * s - 0.5,
        width: roi.width() * scale,
        height: roi.height() * scale,
    };
    CameraView::new(fine, *view.object_from_camera(), view.index)
}

/// Template level set computed on a supersampled crop around the object, so
/// the zero level follows the projected outline to a fraction of a pixel.
#[derive(Debug, Clone)]
pub struct TemplateField {
    /// Field on the image grid, in image pixels. Pixels outside `roi` hold
    /// `-(width + height)`.
    pub levelset: LevelSetField,
    pub roi: Option<Roi>,
    pub scale: u32,
    fine: RenderedTemplate,
    fine_nearest: Vec<u32>,
}

impl TemplateField {
    /// Front-surface point (mesh frame) at the outline nearest to pixel `(x, y)`.
    pub fn contour_point(&self, x: u32, y: u32) -> Option<Vector3<f64>> {
        let roi = self.roi.filter(|r| r.contains(x, y))?;
        let off = (self.scale - 1) / 2;
        let fw = (roi.width() * self.scale) as usize;
        let fx = ((x - roi.x0) * self.scale + off) as usize;
        let fy = ((y - roi.y0) * self.scale + off) as usize;
        let j = self.fine_nearest[fy * fw + fx];
        (j != NO_CONTOUR).then(|| self.fine.surface[j as usize])
    }

    /// Rendered silhouette at the fine resolution of the crop.
    pub fn fine_mask(&self) -> &SilhouetteMask {
        &self.fine.mask
    }
}

/// Renders `mesh` at `scale` (rounded up to odd) times the resolution inside
/// its projected bounds plus `margin` pixels and builds the level set.
pub fn render_template_field(
    mesh: &TriangleMesh,
    view: &CameraView,
    object_pose: &RigidTransform,
    scale: u32,
    margin: u32,
) -> TemplateField {
    let scale = scale.max(1) | 1;
    let k = view.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let sentinel = (k.width + k.height) as f64;
    let mut phi = vec![-sentinel; w * h];
    let mut nearest = vec![NO_CONTOUR; w * h];
    let roi = projected_roi(mesh, view, object_pose).map(|r| r.expanded(margin, k.width, k.height));
    let Some(r) = roi else {
        return TemplateField {
            levelset: LevelSetField {
                width: k.width,
                height: k.height,
                phi,
                nearest_contour: nearest,
            },
            roi,
            scale,
            fine: RenderedTemplate {
                mask: SilhouetteMask::empty(0, 0),
                surface: Vec::new(),
                depth: Vec::new(),
            },
            fine_nearest: Vec::new(),
        };
    };
    let fine = render_template(mesh, &sub_view(view, &r, scale), object_pose);
    let field = signed_distance(&fine.mask);
    let fw = (r.width() * scale) as usize;
    let off = ((scale - 1) / 2) as usize;
    let s = scale as f64;
    for y in r.y0..r.y1 {
        let fy = (y - r.y0) as usize * scale as usize + off;
        for x in r.x0..r.x1 {
            let fx = (x - r.x0) as usize * scale as usize + off;
            let j = fy * fw + fx;
            let i = y as usize * w + x as usize;
            phi[i] = field.phi[j] / s;
            let c = field.nearest_contour[j];
            if c != NO_CONTOUR {
                let (cx, cy) = (c as usize % fw, c as usize / fw);
                nearest[i] = ((cy / scale as usize + r.y0 as usize) * w + cx / scale as usize + r.x0 as usize) as u32;
            }
        }
    }
    TemplateField {
        levelset: LevelSetField {
            width: k.width,
            height: k.height,
            phi,
            nearest_contour: nearest,
        },
        roi,
        scale,
        fine,
        fine_nearest: field.nearest_contour,
    }
}

/// One pixel of the contour band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPixel {
    pub x: u32,
    pub y: u32,
    pub phi: f64,
    /// Linear index of the foreground contour pixel this sample is tied to.
    pub contour: u32,
}

/// Pixels with `|phi| <= band_halfwidth`, row-major order.
pub fn contour_band(levelset: &LevelSetField, band_halfwidth: f64) -> Vec<BandPixel> {
    contour_band_strided(levelset, band_halfwidth, 1)
}

/// [`contour_band`] keeping every `stride`-th row and column.
pub fn contour_band_strided(levelset: &LevelSetField, band_halfwidth: f64, stride: u32) -> Vec<BandPixel> {
    if levelset.is_degenerate() || !(band_halfwidth > 0.0) {
        return Vec::new();
    }
    let stride = stride.max(1);
    let mut out = Vec::new();
    for y in (0..levelset.height).step_by(stride as usize) {
        for x in (0..levelset.width).step_by(stride as usize) {
            let i = (y * levelset.width + x) as usize;
            let phi = levelset.phi[i];
            if phi.abs() <= band_halfwidth {
                out.push(BandPixel {
                    x,
                    y,
                    phi,
                    contour: levelset.nearest_contour[i],
                });
            }
        }
    }
    out
}
