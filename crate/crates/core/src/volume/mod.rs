//! Volume data model: normalization, channel adaptation, depth projection.
//!
//! A [`Volume`] is a `(depth, height, width, channel)` tensor of reals in
//! `[-1, 1]` tagged with the imaging domain it belongs to. Grayscale
//! (OCT-like) volumes have one channel, RGB (confocal-like) volumes three.
//! That axis order is fixed across the whole crate; file I/O maps slice
//! index to depth.

mod resize;
#[cfg(feature = "fileio")]
pub mod io;

pub use resize::{resize_bilinear_hw, resize_image_bilinear};

use crate::error::{Error, Result};
use ndarray::{Array3, Array4, Axis};

/// Rec.601 luma weights; they sum to 1 exactly.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Imaging domain tag. The channel count is part of the tag's meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Domain {
    /// Grayscale, single channel.
    OctLike,
    /// RGB, three channels.
    ConfocalLike,
}

impl Domain {
    pub fn channels(self) -> usize {
        match self {
            Domain::OctLike => 1,
            Domain::ConfocalLike => 3,
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::OctLike => write!(f, "OCT_LIKE"),
            Domain::ConfocalLike => write!(f, "CONFOCAL_LIKE"),
        }
    }
}

/// A normalized volumetric image: values in `[-1, 1]`, axes `(D, H, W, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Array4<f64>,
    domain: Domain,
}

impl Volume {
    /// Validates the domain/channel pairing, non-empty extents, finiteness
    /// and the `[-1, 1]` range.
    pub fn new(data: Array4<f64>, domain: Domain) -> Result<Self> {
        let (d, h, w, c) = data.dim();
        if d < 1 || h < 1 || w < 1 {
            return Err(Error::Shape(format!(
                "volume extents must be >= 1, got {d}x{h}x{w}"
            )));
        }
        if c != domain.channels() {
            return Err(Error::Shape(format!(
                "domain {domain} requires {} channel(s), got {c}",
                domain.channels()
            )));
        }
        for (idx, &v) in data.indexed_iter() {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(Error::Numeric(format!(
                    "volume value {v} at {idx:?} outside [-1, 1]"
                )));
            }
        }
        Ok(Self { data, domain })
    }

    /// Constructor for internal paths whose outputs are in range by
    /// construction (projections of valid volumes, tanh outputs, clamps).
    pub(crate) fn new_unchecked(data: Array4<f64>, domain: Domain) -> Self {
        debug_assert_eq!(data.dim().3, domain.channels());
        Self { data, domain }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// `(depth, height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn depth(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn channels(&self) -> usize {
        self.data.dim().3
    }
}

/// Depth-collapse operator used for fundus-like projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ProjectionMethod {
    /// Mean over depth. Linear, and the default consumed by the metrics.
    #[default]
    Mean,
    /// Maximum over depth.
    Max,
}

/// A 2D projection of a volume: `(H, W, C)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    data: Array3<f64>,
}

impl ProjectionImage {
    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// `(height, width, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// Maps raw 8-bit-range intensities into a normalized [`Volume`]:
/// `v = raw / 127.5 - 1`. Real-valued inputs are accepted; everything must
/// lie in `[0, 255]`.
pub fn normalize(raw: &Array4<f64>, domain: Domain) -> Result<Volume> {
    for (idx, &v) in raw.indexed_iter() {
        if !v.is_finite() || !(0.0..=255.0).contains(&v) {
            return Err(Error::Data(format!(
                "raw value {v} at {idx:?} outside [0, 255]"
            )));
        }
    }
    let data = raw.mapv(|v| v / 127.5 - 1.0);
    Volume::new(data, domain)
}

/// Inverse of [`normalize`] on 8-bit grids: `round((v + 1) * 127.5)` clamped
/// to `[0, 255]`, rounding half up.
pub fn denormalize(v: &Volume) -> Array4<u8> {
    v.data()
        .mapv(|x| ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
}

/// Collapses RGB to grayscale with Rec.601 weights; the domain tag becomes
/// OCT-like. Since the weights sum to 1, achromatic voxels are fixed points.
pub fn to_luminance(v: &Volume) -> Result<Volume> {
    if v.channels() != 3 {
        return Err(Error::Shape(format!(
            "to_luminance requires 3 channels, got {}",
            v.channels()
        )));
    }
    let (d, h, w, _) = v.shape();
    let mut out = Array4::<f64>::zeros((d, h, w, 1));
    for ((dd, hh, ww, _), o) in out.indexed_iter_mut() {
        let px = v.data();
        *o = LUMA_WEIGHTS[0] * px[[dd, hh, ww, 0]]
            + LUMA_WEIGHTS[1] * px[[dd, hh, ww, 1]]
            + LUMA_WEIGHTS[2] * px[[dd, hh, ww, 2]];
    }
    Volume::new(out, Domain::OctLike)
}

/// Replicates a single channel into R = G = B; the domain tag becomes
/// confocal-like. `to_luminance(replicate_channels(v)) == v` exactly.
pub fn replicate_channels(v: &Volume) -> Result<Volume> {
    if v.channels() != 1 {
        return Err(Error::Shape(format!(
            "replicate_channels requires 1 channel, got {}",
            v.channels()
        )));
    }
    let (d, h, w, _) = v.shape();
    let mut out = Array4::<f64>::zeros((d, h, w, 3));
    for ((dd, hh, ww, _), &x) in v.data().indexed_iter() {
        out[[dd, hh, ww, 0]] = x;
        out[[dd, hh, ww, 1]] = x;
        out[[dd, hh, ww, 2]] = x;
    }
    Ok(Volume::new_unchecked(out, v.domain().pair()))
}

impl Domain {
    /// The opposite domain tag.
    pub fn pair(self) -> Domain {
        match self {
            Domain::OctLike => Domain::ConfocalLike,
            Domain::ConfocalLike => Domain::OctLike,
        }
    }
}

/// Fundus-like 2D projection: per `(h, w, c)`, collapse `(v + 1) / 2` along
/// depth with the chosen method. Output values are in `[0, 1]`.
pub fn project_fundus(v: &Volume, method: ProjectionMethod) -> ProjectionImage {
    let (d, h, w, c) = v.shape();
    let mut out = Array3::<f64>::zeros((h, w, c));
    match method {
        ProjectionMethod::Mean => {
            for slice in v.data().axis_iter(Axis(0)) {
                out += &slice.mapv(|x| (x + 1.0) * 0.5);
            }
            out /= d as f64;
        }
        ProjectionMethod::Max => {
            out.fill(f64::NEG_INFINITY);
            for slice in v.data().axis_iter(Axis(0)) {
                out.zip_mut_with(&slice, |o, &x| {
                    let u = (x + 1.0) * 0.5;
                    if u > *o {
                        *o = u;
                    }
                });
            }
        }
    }
    ProjectionImage { data: out }
}
