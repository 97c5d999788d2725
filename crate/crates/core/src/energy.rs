//! Region-based per-pixel energy: a smoothed Heaviside of the level set blends
//! foreground and background color posteriors, `F = -ln(H P_f + (1 - H) P_b)`.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;
use crate::image::RgbImage;
use crate::renderer::LevelSetField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("color model needs pixels on both sides of the contour (foreground {foreground}, background {background})")]
    DegenerateRegion { foreground: usize, background: usize },
    #[error("sample at ({x}, {y}) is too close to the image border for a gradient")]
    BorderSample { x: f64, y: f64 },
    #[error("image is {image_w}x{image_h} but the level set is {field_w}x{field_h}")]
    SizeMismatch {
        image_w: u32,
        image_h: u32,
        field_w: u32,
        field_h: u32,
    },
    #[error("invalid energy configuration: {0}")]
    InvalidConfig(String),
}

/// Band width and histogram parameters are tuned at this image width.
pub const REFERENCE_WIDTH: f64 = 640.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    /// Slope `s` of the arctangent Heaviside (1/px).
    pub heaviside_slope: f64,
    /// Half-width of the sample band at 640 px image width; scaled linearly.
    pub band_halfwidth: f64,
    pub hist_bins: u32,
    pub alpha_fg: f64,
    pub alpha_bg: f64,
    pub probability_floor: f64,
    /// Keep every n-th row/column of the band.
    pub stride: u32,
    /// Odd supersampling factor of the rendered template.
    pub template_scale: u32,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            heaviside_slope: 1.2,
            band_halfwidth: 8.0,
            hist_bins: 32,
            alpha_fg: 0.1,
            alpha_bg: 0.2,
            probability_floor: 1e-6,
            stride: 1,
            template_scale: 3,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: String| Err(EnergyError::InvalidConfig(m));
        if !(self.heaviside_slope > 0.0 && self.heaviside_slope.is_finite()) {
            return bad(format!("heaviside_slope must be positive, got {}", self.heaviside_slope));
        }
        if !(self.band_halfwidth > 0.0 && self.band_halfwidth.is_finite()) {
            return bad(format!("band_halfwidth must be positive, got {}", self.band_halfwidth));
        }
        if ![16, 32, 64].contains(&self.hist_bins) {
            return bad(format!("hist_bins must be 16, 32 or 64, got {}", self.hist_bins));
        }
        for (name, a) in [("alpha_fg", self.alpha_fg), ("alpha_bg", self.alpha_bg)] {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("{name} must lie in [0, 1], got {a}"));
            }
        }
        if !(self.probability_floor > 0.0 && self.probability_floor <= 1e-3) {
            return bad(format!(
                "probability_floor must lie in (0, 1e-3], got {}",
                self.probability_floor
            ));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.template_scale.is_multiple_of(2) || self.template_scale > 15 {
            return bad(format!("template_scale must be odd and at most 15, got {}", self.template_scale));
        }
        Ok(())
    }

    /// Band half-width (px) for an image of the given width, at least one pixel.
    pub fn band_for_width(&self, width: u32) -> f64 {
        (self.band_halfwidth * width as f64 / REFERENCE_WIDTH).max(1.0)
    }
}

/// `1/2 + atan(s phi) / pi`.
#[inline]
pub fn smoothed_heaviside(phi: f64, s: f64) -> f64 {
    0.5 + (s * phi).atan() / PI
}

#[inline]
pub fn heaviside_derivative(phi: f64, s: f64) -> f64 {
    let sp = s * phi;
    (s / PI) / (1.0 + sp * sp)
}

/// Energy of one pixel given its level-set value and color posteriors.
#[inline]
pub fn pixel_energy(phi: f64, pf: f64, pb: f64, s: f64) -> f64 {
    let he = smoothed_heaviside(phi, s);
    -(he * pf + (1.0 - he) * pb).ln()
}

/// `dF/dphi`.
#[inline]
pub fn energy_phi_derivative(phi: f64, pf: f64, pb: f64, s: f64) -> f64 {
    let he = smoothed_heaviside(phi, s);
    -(pf - pb) * heaviside_derivative(phi, s) / (he * pf + (1.0 - he) * pb)
}

/// `dF/dx` at an image position, chaining through the interpolated level set.
pub fn pixel_gradient(levelset: &LevelSetField, x: f64, y: f64, pf: f64, pb: f64, s: f64) -> Result<Vector2<f64>, EnergyError> {
    let border = || EnergyError::BorderSample { x, y };
    let phi = levelset.sample(x, y).ok_or_else(border)?;
    let grad = levelset.gradient(x, y).ok_or_else(border)?;
    Ok(grad * energy_phi_derivative(phi, pf, pb, s))
}

/// Joint RGB histograms for foreground and background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorModel {
    pub bins: u32,
    pub floor: f64,
    pub fg: Vec<f64>,
    pub bg: Vec<f64>,
}

impl ColorModel {
    #[inline]
    pub fn bin_index(&self, rgb: [u8; 3]) -> usize {
        bin_index(self.bins, rgb)
    }

    /// Pairwise posteriors `(P_f, P_b)`, each clamped into `[floor, 1 - floor]`.
    pub fn posteriors(&self, rgb: [u8; 3]) -> (f64, f64) {
        let i = self.bin_index(rgb);
        let (f, b) = (self.fg[i], self.bg[i]);
        let pf = (f / (f + b)).clamp(self.floor, 1.0 - self.floor);
        let pb = (b / (f + b)).clamp(self.floor, 1.0 - self.floor);
        (pf, pb)
    }
}

#[inline]
fn bin_index(bins: u32, rgb: [u8; 3]) -> usize {
    let shift = 8 - bins.trailing_zeros();
    let b = bins as usize;
    let [r, g, bl] = rgb.map(|c| (c >> shift) as usize);
    (r * b + g) * b + bl
}

/// Normalizes counts and mixes in a uniform floor so every bin is at least
/// `min(floor, 0.5 / n_bins)` while the total stays 1.
fn floored_distribution(counts: &[f64], floor: f64) -> Vec<f64> {
    let n = counts.len() as f64;
    let total: f64 = counts.iter().sum();
    let f = floor.min(0.5 / n);
    let keep = 1.0 - n * f;
    counts.iter().map(|c| keep * (c / total) + f).collect()
}

/// Estimates foreground/background histograms from an image and a level set.
///
/// Foreground draws from every pixel with `phi > 0`, background from pixels
/// with `-band <= phi < 0`. With a previous model the result is the
/// exponential blend `(1 - alpha) prev + alpha current`.
pub fn build_color_model(
    image: &RgbImage,
    levelset: &LevelSetField,
    prev: Option<&ColorModel>,
    cfg: &EnergyConfig,
) -> Result<ColorModel, EnergyError> {
    if image.width != levelset.width || image.height != levelset.height {
        return Err(EnergyError::SizeMismatch {
            image_w: image.width,
            image_h: image.height,
            field_w: levelset.width,
            field_h: levelset.height,
        });
    }
    let bins = cfg.hist_bins;
    let n = (bins as usize).pow(3);
    let band = cfg.band_for_width(image.width);
    let mut fg = vec![0.0; n];
    let mut bg = vec![0.0; n];
    let (mut nf, mut nb) = (0usize, 0usize);
    for (i, &phi) in levelset.phi.iter().enumerate() {
        if phi > 0.0 {
            fg[bin_index(bins, image.pixel(i))] += 1.0;
            nf += 1;
        } else if phi < 0.0 && phi >= -band {
            bg[bin_index(bins, image.pixel(i))] += 1.0;
            nb += 1;
        }
    }
    if nf == 0 || nb == 0 {
        return Err(EnergyError::DegenerateRegion {
            foreground: nf,
            background: nb,
        });
    }
    let floor = cfg.probability_floor;
    let mut fg = floored_distribution(&fg, floor);
    let mut bg = floored_distribution(&bg, floor);
    if let Some(prev) = prev.filter(|p| p.bins == bins) {
        blend(&mut fg, &prev.fg, cfg.alpha_fg);
        blend(&mut bg, &prev.bg, cfg.alpha_bg);
    }
    Ok(ColorModel { bins, floor, fg, bg })
}

fn blend(current: &mut [f64], prev: &[f64], alpha: f64) {
    for (c, p) in current.iter_mut().zip(prev) {
        *c = (1.0 - alpha) * p + alpha * *c;
    }
}

/// One element of the sample set: a band pixel tied to a model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Pixel center.
    pub pixel: Vector2<f64>,
    /// Level-set value at render time.
    pub phi: f64,
    pub pf: f64,
    pub pb: f64,
    /// Associated contour point in the mesh's own frame.
    pub model_point: Vector3<f64>,
    /// Projection of `model_point` at render time.
    pub anchor: Vector2<f64>,
}

/// Everything one view contributes to a frame's energy.
#[derive(Debug, Clone)]
pub struct FrameObservation {
    pub view_index: usize,
    pub levelset: LevelSetField,
    pub color: ColorModel,
    pub samples: Vec<Sample>,
    /// Object pose (object-centered from mesh) the template was rendered at.
    pub render_pose: RigidTransform,
}
