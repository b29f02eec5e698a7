//! Independent oracles and random-case generators shared by the integration
//! tests and the acceptance harness.

#![allow(dead_code)]

use crawlspace::neural::{DenseNet, Real};
use crawlspace::sensing::{SensorPose, MIN_DISTANCE};
use crawlspace::terrain::{build_profile, curriculum_interpolate, randomize_spec, TerrainKind, TerrainProfile};
use nalgebra::Vector3;
use rand::Rng;

/// Marching step of the raycast oracle, m.
pub const MARCH_STEP: f64 = 5e-4;

pub fn random_profile<R: Rng>(rng: &mut R) -> TerrainProfile {
    let kind = TerrainKind::ALL[rng.random_range(0..TerrainKind::ALL.len())];
    let level = rng.random_range(0..10);
    let spec = randomize_spec(&curriculum_interpolate(kind, level).unwrap(), rng);
    build_profile(&spec).unwrap()
}

/// Ground height by scanning the vertex list; right-continuous at risers.
pub fn oracle_ground(profile: &TerrainProfile, x: f64) -> f64 {
    let v = profile.ground_vertices();
    let x = x.clamp(v[0][0], v[v.len() - 1][0]);
    for w in v.windows(2) {
        let ([x0, z0], [x1, z1]) = (w[0], w[1]);
        if x1 > x0 && x >= x0 && x < x1 {
            return z0 + (x - x0) / (x1 - x0) * (z1 - z0);
        }
    }
    v[v.len() - 1][1]
}

pub fn oracle_ceiling(profile: &TerrainProfile, x: f64) -> Option<f64> {
    let c = profile.ceiling_vertices()?;
    let x = x.clamp(0.0, profile.segment_length());
    if x < c[0][0] || x > c[c.len() - 1][0] {
        return None;
    }
    c.windows(2).find(|w| x >= w[0][0] && x <= w[1][0]).map(|w| {
        let ([x0, z0], [x1, z1]) = (w[0], w[1]);
        z0 + (x - x0) / (x1 - x0) * (z1 - z0)
    })
}

pub fn oracle_solid(profile: &TerrainProfile, x: f64, z: f64) -> bool {
    z <= oracle_ground(profile, x) || oracle_ceiling(profile, x).is_some_and(|c| z >= c)
}

/// First marching sample inside solid terrain, capped at `max_range`.
pub fn march(profile: &TerrainProfile, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> f64 {
    let mut t = 0.0;
    while t < max_range {
        let p = origin + dir * t;
        if oracle_solid(profile, p.x, p.z) {
            return t.max(MIN_DISTANCE);
        }
        t += MARCH_STEP;
    }
    max_range
}

/// A sensor origin in free space with at least 2 cm clearance.
pub fn free_point<R: Rng>(rng: &mut R, profile: &TerrainProfile) -> (f64, f64) {
    loop {
        let x = rng.random_range(0.05..profile.segment_length() - 0.05);
        let g = oracle_ground(profile, x);
        let top = oracle_ceiling(profile, x).unwrap_or(g + 0.8);
        if top - g < 0.05 {
            continue;
        }
        let z = rng.random_range(g + 0.02..top - 0.02);
        if !oracle_solid(profile, x, z) && !oracle_solid(profile, x - 0.01, z) && !oracle_solid(profile, x + 0.01, z) {
            return (x, z);
        }
    }
}

/// Random free pose; half of them planar (no yaw), half with yaw.
pub fn random_pose<R: Rng>(rng: &mut R, profile: &TerrainProfile) -> SensorPose {
    let (x, z) = free_point(rng, profile);
    let pose = SensorPose::planar(x, z, rng.random_range(-0.5..0.5));
    if rng.random_bool(0.5) {
        pose.with_yaw(rng.random_range(-3.1..3.1))
    } else {
        pose
    }
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` with respect to every entry of `params`.
pub fn max_fd_error(params: &mut [f64], analytic: &[f64], h: f64, floor: f64, mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let up = loss(params);
        params[i] = orig - h;
        let down = loss(params);
        params[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h), floor));
    }
    worst
}

/// `Σ w ⊙ net(x)`: a scalar probe for network gradient checks.
pub fn probe_loss<T: Real>(net: &DenseNet<T>, x: &[T], batch: usize, w: &[f64]) -> f64 {
    net.predict(x, batch).unwrap().iter().zip(w).map(|(o, w)| o.as_f64() * w).sum()
}

pub mod criteria;
