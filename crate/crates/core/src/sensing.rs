//! Fixed-order polar scans of the terrain around the robot base.
//!
//! Each hemisphere is sampled on a 30 x 24 grid of (alpha, beta) bins, 3° in
//! alpha and 15° in beta. One ray is cast through every bin center and the
//! radial distance to the first surface (clipped to the sensor range) is
//! stored at `alpha_bin * 24 + beta_bin`.
//!
//! Angle conventions, in the robot base frame:
//! - `alpha` is measured from the vertical axis: `[0°, 90°]` from the zenith
//!   for the space hemisphere, `(-90°, 0°]` from the nadir (negated) for the
//!   ground hemisphere. Points with `z = 0` belong to space at `alpha = 90°`.
//! - `beta` is the azimuth in `[0°, 360°)`, zero on the forward `+x` axis.

use std::sync::LazyLock;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::terrain::TerrainProfile;

pub const ALPHA_BINS: usize = 30;
pub const BETA_BINS: usize = 24;
pub const SCAN_LEN: usize = ALPHA_BINS * BETA_BINS;
pub const ALPHA_STEP_DEG: f64 = 3.0;
pub const BETA_STEP_DEG: f64 = 15.0;

/// Sensor range; farther returns are clipped to this distance.
pub const MAX_RANGE: f64 = 1.0;

/// Lower clamp on returned distances.
pub const MIN_DISTANCE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum SensingError {
    #[error("cannot take polar coordinates of the origin")]
    ZeroVector,
    #[error("alpha {alpha}° does not belong to the {hemisphere:?} hemisphere")]
    HemisphereMismatch { alpha: f64, hemisphere: Hemisphere },
    #[error("orientation is not a proper rotation (det = {0})")]
    ImproperRotation(f64),
    #[error("bin ({0}, {1}) out of range")]
    BinOutOfRange(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Hemisphere {
    Ground,
    Space,
}

/// Polar coordinates of a base-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub range: f64,
    pub hemisphere: Hemisphere,
}

pub fn polar_of(p: &Vector3<f64>) -> Result<PolarPoint, SensingError> {
    let range = p.norm();
    if range == 0.0 {
        return Err(SensingError::ZeroVector);
    }
    let planar = p.x.hypot(p.y);
    let mut beta = p.y.atan2(p.x).to_degrees();
    if beta < 0.0 {
        beta += 360.0;
    }
    if beta >= 360.0 {
        beta -= 360.0;
    }
    let (alpha_deg, hemisphere) = if p.z > 0.0 {
        (planar.atan2(p.z).to_degrees(), Hemisphere::Space)
    } else if p.z < 0.0 {
        (-planar.atan2(-p.z).to_degrees(), Hemisphere::Ground)
    } else {
        (90.0, Hemisphere::Space)
    };
    Ok(PolarPoint { alpha_deg, beta_deg: beta, range, hemisphere })
}

/// Unit direction for polar angles (degrees), the inverse of [`polar_of`] up to range.
pub fn direction_of(alpha_deg: f64, beta_deg: f64, hemisphere: Hemisphere) -> Vector3<f64> {
    let from_axis = alpha_deg.abs().to_radians();
    let beta = beta_deg.to_radians();
    let (s, c) = from_axis.sin_cos();
    let z = match hemisphere {
        Hemisphere::Space => c,
        Hemisphere::Ground => -c,
    };
    Vector3::new(s * beta.cos(), s * beta.sin(), z)
}

pub fn cartesian_of(point: &PolarPoint) -> Vector3<f64> {
    direction_of(point.alpha_deg, point.beta_deg, point.hemisphere) * point.range
}

pub fn bin_index(alpha_deg: f64, beta_deg: f64, hemisphere: Hemisphere) -> Result<usize, SensingError> {
    let alpha_bin = match hemisphere {
        Hemisphere::Ground if (-90.0..=0.0).contains(&alpha_deg) => {
            ((alpha_deg + 90.0) / ALPHA_STEP_DEG).floor()
        }
        Hemisphere::Space if (0.0..=90.0).contains(&alpha_deg) => (alpha_deg / ALPHA_STEP_DEG).floor(),
        _ => return Err(SensingError::HemisphereMismatch { alpha: alpha_deg, hemisphere }),
    };
    let alpha_bin = (alpha_bin as i64).clamp(0, ALPHA_BINS as i64 - 1) as usize;
    let beta_bin = ((beta_deg / BETA_STEP_DEG).floor() as i64).clamp(0, BETA_BINS as i64 - 1) as usize;
    Ok(alpha_bin * BETA_BINS + beta_bin)
}

/// Center angles `(alpha, beta)` in degrees of a bin.
pub fn bin_center(alpha_bin: usize, beta_bin: usize, hemisphere: Hemisphere) -> (f64, f64) {
    let half = 0.5 * ALPHA_STEP_DEG;
    let alpha = match hemisphere {
        Hemisphere::Ground => -90.0 + half + ALPHA_STEP_DEG * alpha_bin as f64,
        Hemisphere::Space => half + ALPHA_STEP_DEG * alpha_bin as f64,
    };
    (alpha, 0.5 * BETA_STEP_DEG + BETA_STEP_DEG * beta_bin as f64)
}

pub fn ray_direction(
    alpha_bin: usize,
    beta_bin: usize,
    hemisphere: Hemisphere,
) -> Result<Vector3<f64>, SensingError> {
    if alpha_bin >= ALPHA_BINS || beta_bin >= BETA_BINS {
        return Err(SensingError::BinOutOfRange(alpha_bin, beta_bin));
    }
    let (alpha, beta) = bin_center(alpha_bin, beta_bin, hemisphere);
    Ok(direction_of(alpha, beta, hemisphere))
}

struct DirectionTable {
    ground: Vec<Vector3<f64>>,
    space: Vec<Vector3<f64>>,
}

static DIRECTIONS: LazyLock<DirectionTable> = LazyLock::new(|| {
    let table = |h| {
        (0..SCAN_LEN)
            .map(|k| ray_direction(k / BETA_BINS, k % BETA_BINS, h).expect("bin in range"))
            .collect()
    };
    DirectionTable { ground: table(Hemisphere::Ground), space: table(Hemisphere::Space) }
});

/// Sensor origin (robot base center) and base-to-world rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub origin: Vector3<f64>,
    pub orientation: Rotation3<f64>,
}

impl SensorPose {
    pub fn new(origin: Vector3<f64>, orientation: Matrix3<f64>) -> Result<Self, SensingError> {
        let det = orientation.determinant();
        let orthogonal = (orientation.transpose() * orientation - Matrix3::identity()).norm() < 1e-9;
        if (det - 1.0).abs() > 1e-9 || !orthogonal {
            return Err(SensingError::ImproperRotation(det));
        }
        Ok(SensorPose { origin, orientation: Rotation3::from_matrix_unchecked(orientation) })
    }

    /// Pose of a planar body at `(x, z)` with nose-up `pitch` (radians).
    pub fn planar(x: f64, z: f64, pitch: f64) -> Self {
        SensorPose {
            origin: Vector3::new(x, 0.0, z),
            orientation: Rotation3::from_axis_angle(&Vector3::y_axis(), -pitch),
        }
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.orientation = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw) * self.orientation;
        self
    }
}

/// Linear ground piece over an interval free of interior vertices, as values
/// at the interval ends.
fn ground_line(vertices: &[[f64; 2]], lo: f64, hi: f64) -> (f64, f64) {
    let first = vertices[0];
    let last = vertices[vertices.len() - 1];
    let mid = 0.5 * (lo + hi);
    if mid <= first[0] {
        return (first[1], first[1]);
    }
    if mid >= last[0] {
        return (last[1], last[1]);
    }
    let idx = vertices.partition_point(|v| v[0] <= mid);
    let [x0, z0] = vertices[idx - 1];
    let [x1, z1] = vertices[idx];
    let slope = (z1 - z0) / (x1 - x0);
    (z0 + (lo - x0) * slope, z0 + (hi - x0) * slope)
}

/// First `t` in `[ta, tb]` where a linear function with values `fa`, `fb`
/// becomes non-positive.
fn first_nonpositive(ta: f64, tb: f64, fa: f64, fb: f64) -> Option<f64> {
    if fa <= 0.0 {
        Some(ta)
    } else if fb <= 0.0 {
        Some(ta + (tb - ta) * fa / (fa - fb))
    } else {
        None
    }
}

/// Walks the x-intervals between consecutive breakpoints along a ray with
/// `dx != 0`, calling `visit(ta, tb, xa, xb)` in travel order until it returns a hit.
fn walk_intervals(
    breaks: &[[f64; 2]],
    x0: f64,
    dx: f64,
    tmax: f64,
    mut visit: impl FnMut(f64, f64, f64, f64) -> Option<f64>,
) -> Option<f64> {
    let x1 = x0 + tmax * dx;
    let mut ta = 0.0;
    let mut xa = x0;
    if dx > 0.0 {
        let mut i = breaks.partition_point(|v| v[0] <= x0);
        loop {
            let xb = if i < breaks.len() && breaks[i][0] < x1 { breaks[i][0] } else { x1 };
            let tb = if xb == x1 { tmax } else { (xb - x0) / dx };
            if let Some(t) = visit(ta, tb, xa, xb) {
                return Some(t);
            }
            if xb == x1 {
                return None;
            }
            // skip coincident vertices (risers)
            while i < breaks.len() && breaks[i][0] <= xb {
                i += 1;
            }
            ta = tb;
            xa = xb;
        }
    } else {
        let mut i = breaks.partition_point(|v| v[0] < x0);
        loop {
            let xb = if i > 0 && breaks[i - 1][0] > x1 { breaks[i - 1][0] } else { x1 };
            let tb = if xb == x1 { tmax } else { (xb - x0) / dx };
            if let Some(t) = visit(ta, tb, xa, xb) {
                return Some(t);
            }
            if xb == x1 {
                return None;
            }
            while i > 0 && breaks[i - 1][0] >= xb {
                i -= 1;
            }
            ta = tb;
            xa = xb;
        }
    }
}

/// Distance along the unit `direction` from `origin` to the first solid
/// surface, or `max_range` when nothing is hit; never below [`MIN_DISTANCE`].
///
/// The world is extruded along y, so only the x and z components matter, but
/// distances are measured along the full 3-D ray.
pub fn raycast(
    profile: &TerrainProfile,
    origin: &Vector3<f64>,
    direction: &Vector3<f64>,
    max_range: f64,
) -> f64 {
    let (x0, z0) = (origin.x, origin.z);
    let (dx, dz) = (direction.x, direction.z);
    if profile.is_solid(x0, z0) {
        return MIN_DISTANCE.min(max_range);
    }
    let ground = profile.ground_vertices();
    let ceiling = profile.ceiling_vertices();
    let mut best = max_range;

    if dx.abs() < 1e-14 {
        if dz < 0.0 {
            best = best.min((z0 - profile.ground_height(x0)) / -dz);
        } else if dz > 0.0 {
            if let Some(c) = profile.ceiling_height(x0) {
                best = best.min((c - z0) / dz);
            }
        }
        return best.max(MIN_DISTANCE);
    }

    let ground_hit = walk_intervals(ground, x0, dx, max_range, |ta, tb, xa, xb| {
        let (lo, hi) = if xa <= xb { (xa, xb) } else { (xb, xa) };
        let (g_lo, g_hi) = ground_line(ground, lo, hi);
        let (ga, gb) = if xa <= xb { (g_lo, g_hi) } else { (g_hi, g_lo) };
        first_nonpositive(ta, tb, z0 + ta * dz - ga, z0 + tb * dz - gb)
    });
    if let Some(t) = ground_hit {
        best = best.min(t);
    }

    if let Some(c) = ceiling {
        let (cs, ce) = (c[0][0], c[c.len() - 1][0]);
        // parameter interval of the ray inside the span
        let (t_in, t_out) = {
            let ta = (cs - x0) / dx;
            let tb = (ce - x0) / dx;
            (ta.min(tb).max(0.0), ta.max(tb).min(best))
        };
        if t_in <= t_out {
            let x_in = x0 + t_in * dx;
            let entering_face = t_in > 0.0;
            let c_in = profile.ceiling_height(x_in.clamp(cs, ce)).expect("inside span");
            if entering_face && z0 + t_in * dz >= c_in {
                best = best.min(t_in);
            } else {
                let hit = walk_intervals(c, x_in, dx, t_out - t_in, |ta, tb, xa, xb| {
                    let ca = profile.ceiling_height(xa.clamp(cs, ce)).expect("inside span");
                    let cb = profile.ceiling_height(xb.clamp(cs, ce)).expect("inside span");
                    let za = z0 + (t_in + ta) * dz;
                    let zb = z0 + (t_in + tb) * dz;
                    first_nonpositive(ta, tb, ca - za, cb - zb)
                });
                if let Some(t) = hit {
                    best = best.min(t_in + t);
                }
            }
        }
    }
    best.max(MIN_DISTANCE)
}

/// Clipped radial distances for one hemisphere, index `alpha_bin * 24 + beta_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarScan {
    pub hemisphere: Hemisphere,
    pub values: Vec<f32>,
}

impl PolarScan {
    pub fn filled(hemisphere: Hemisphere, value: f32) -> Self {
        PolarScan { hemisphere, values: vec![value; SCAN_LEN] }
    }

    pub fn at(&self, alpha_bin: usize, beta_bin: usize) -> f32 {
        self.values[alpha_bin * BETA_BINS + beta_bin]
    }
}

pub fn scan(profile: &TerrainProfile, pose: &SensorPose) -> (PolarScan, PolarScan) {
    scan_with_range(profile, pose, MAX_RANGE)
}

pub fn scan_with_range(
    profile: &TerrainProfile,
    pose: &SensorPose,
    max_range: f64,
) -> (PolarScan, PolarScan) {
    // The terrain is extruded along y, so when the sensor does not yaw or
    // roll, bins mirrored across the x-z plane see the same range.
    let r = pose.orientation.matrix();
    let planar = [r[(1, 0)], r[(0, 1)], r[(1, 2)], r[(2, 1)]].iter().all(|v| v.abs() < 1e-12);
    let cast = |dirs: &[Vector3<f64>]| -> Vec<f32> {
        let mut out = vec![0.0f32; SCAN_LEN];
        for (k, d) in dirs.iter().enumerate() {
            let b = k % BETA_BINS;
            out[k] = if planar && b >= BETA_BINS / 2 {
                out[k - b + (BETA_BINS - 1 - b)]
            } else {
                raycast(profile, &pose.origin, &(pose.orientation * d), max_range) as f32
            };
        }
        out
    };
    (
        PolarScan { hemisphere: Hemisphere::Ground, values: cast(&DIRECTIONS.ground) },
        PolarScan { hemisphere: Hemisphere::Space, values: cast(&DIRECTIONS.space) },
    )
}

/// Scans many poses in parallel; output order matches input order.
pub fn scan_many(profile: &TerrainProfile, poses: &[SensorPose]) -> Vec<(PolarScan, PolarScan)> {
    poses.par_iter().map(|p| scan(profile, p)).collect()
}

pub const SCAN_MAGIC: &[u8; 5] = b"PPLS1";

/// Binary scan record: magic, then 720 ground and 720 space little-endian f32.
pub fn encode_scans(ground: &PolarScan, space: &PolarScan) -> Vec<u8> {
    let mut out = Vec::with_capacity(SCAN_MAGIC.len() + 8 * SCAN_LEN);
    out.extend_from_slice(SCAN_MAGIC);
    for v in ground.values.iter().chain(&space.values) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scans(bytes: &[u8]) -> Option<(PolarScan, PolarScan)> {
    let body = bytes.strip_prefix(SCAN_MAGIC.as_slice())?;
    if body.len() != 8 * SCAN_LEN {
        return None;
    }
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Some((
        PolarScan { hemisphere: Hemisphere::Ground, values: values[..SCAN_LEN].to_vec() },
        PolarScan { hemisphere: Hemisphere::Space, values: values[SCAN_LEN..].to_vec() },
    ))
}

/// 30 rows (alpha bins) by 24 columns (beta bins).
pub fn format_grid(scan: &PolarScan) -> String {
    let mut out = String::new();
    for row in scan.values.chunks(BETA_BINS) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
