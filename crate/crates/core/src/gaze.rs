//! Gaze angles, their 3D unit-vector form, and the angular-error metric.
//!
//! Camera frame: +x right, +y up, +z forward. Yaw rotates about y and pitch
//! about x, so `(yaw, pitch) = (0, 0)` looks straight down +z.

use libm::{atan2, cos, sin, sqrt};

use crate::error::{bail, Result};

pub type Vec3 = [f64; 3];

/// Yaw/pitch gaze direction in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawLabel"))]
pub struct GazeLabel {
    yaw_deg: f64,
    pitch_deg: f64,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawLabel {
    yaw_deg: f64,
    pitch_deg: f64,
}

#[cfg(feature = "serde")]
impl TryFrom<RawLabel> for GazeLabel {
    type Error = crate::Error;

    fn try_from(r: RawLabel) -> Result<Self> {
        Self::new(r.yaw_deg, r.pitch_deg)
    }
}

impl GazeLabel {
    pub fn new(yaw_deg: f64, pitch_deg: f64) -> Result<Self> {
        if !(-180.0..=180.0).contains(&yaw_deg) {
            bail!(Domain, "yaw {yaw_deg} outside [-180, 180]");
        }
        if !(-90.0..=90.0).contains(&pitch_deg) {
            bail!(Domain, "pitch {pitch_deg} outside [-90, 90]");
        }
        Ok(Self { yaw_deg, pitch_deg })
    }

    pub fn yaw_deg(&self) -> f64 {
        self.yaw_deg
    }

    pub fn pitch_deg(&self) -> f64 {
        self.pitch_deg
    }

    pub fn to_radians(&self) -> [f64; 2] {
        [self.yaw_deg.to_radians(), self.pitch_deg.to_radians()]
    }

    pub fn to_vector(&self) -> Vec3 {
        gaze_to_vector(self)
    }
}

/// Unit gaze vector for `label`.
pub fn gaze_to_vector(label: &GazeLabel) -> Vec3 {
    let [yaw, pitch] = label.to_radians();
    angles_to_vector(yaw, pitch)
}

/// Unit gaze vector for yaw/pitch given in radians. Accepts any angle, which
/// is what raw network outputs need.
pub fn angles_to_vector(yaw: f64, pitch: f64) -> Vec3 {
    let cp = cos(pitch);
    [cp * sin(yaw), sin(pitch), cp * cos(yaw)]
}

/// Partial derivatives of [`angles_to_vector`] with respect to yaw and pitch.
pub(crate) fn angles_to_vector_jacobian(yaw: f64, pitch: f64) -> [Vec3; 2] {
    let (sy, cy) = (sin(yaw), cos(yaw));
    let (sp, cp) = (sin(pitch), cos(pitch));
    [[cp * cy, 0.0, -cp * sy], [-sp * sy, cp, -sp * cy]]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    sqrt(dot(a, a))
}

/// Angle in degrees between `pred` and `truth`.
///
/// This is `acos` of the cosine similarity clamped to `[-1, 1]`, evaluated
/// as `atan2(|a × b|, a · b)`, which stays accurate near 0° and 180° where
/// `acos` loses half the significant digits.
pub fn angular_error(pred: &Vec3, truth: &Vec3) -> Result<f64> {
    let np = norm(pred);
    let nt = norm(truth);
    if !(np > 0.0 && nt > 0.0) || !np.is_finite() || !nt.is_finite() {
        bail!(Domain, "angular error needs nonzero finite vectors");
    }
    let c = cross(pred, truth);
    Ok(atan2(norm(&c), dot(pred, truth)).to_degrees())
}
