//! Procedural crawl-space terrains.
//!
//! A terrain is a 2.5-D world: a ground profile `g(x)` and an optional ceiling
//! slab above `c(x)`, both extruded along the lateral axis. Profiles are built
//! from a [`TerrainSpec`], which is produced by the curriculum (difficulty
//! interpolation by level) and then randomized (stair width, tunnel placement).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of curriculum levels. Level 0 is the easy end of every range.
pub const NUM_LEVELS: u32 = 10;

/// Minimum vertical gap between ground and ceiling anywhere a ceiling exists.
pub const MIN_CLEARANCE: f64 = 0.15;

/// Default x-extent of one terrain tile.
pub const DEFAULT_SEGMENT_LENGTH: f64 = 6.0;

pub const STAIR_WIDTH_RANGE: (f64, f64) = (0.25, 0.3);
pub const TUNNEL_START_RANGE: (f64, f64) = (0.75, 1.0);
pub const TUNNEL_LENGTH_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("curriculum level {0} out of range 0..{max}", max = NUM_LEVELS - 1)]
    LevelOutOfRange(u32),
    #[error("invalid terrain parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unknown terrain kind `{0}`")]
    UnknownKind(String),
    #[error("malformed terrain description `{0}`")]
    Malformed(String),
}

/// Terrain families, in curriculum-table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    SlopeUp,
    SlopeDown,
    StairsUp,
    StairsDown,
    StairsTunnelUp,
    StairsTunnelDown,
    FlatTunnel,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 7] = [
        TerrainKind::SlopeUp,
        TerrainKind::SlopeDown,
        TerrainKind::StairsUp,
        TerrainKind::StairsDown,
        TerrainKind::StairsTunnelUp,
        TerrainKind::StairsTunnelDown,
        TerrainKind::FlatTunnel,
    ];

    /// Sampling proportion of this kind in the mixed curriculum.
    pub fn proportion(self) -> f64 {
        match self {
            TerrainKind::SlopeUp => 0.05,
            TerrainKind::SlopeDown => 0.05,
            TerrainKind::StairsUp => 0.20,
            TerrainKind::StairsDown => 0.15,
            TerrainKind::StairsTunnelUp => 0.20,
            TerrainKind::StairsTunnelDown => 0.15,
            TerrainKind::FlatTunnel => 0.20,
        }
    }

    pub fn has_tunnel(self) -> bool {
        matches!(
            self,
            TerrainKind::StairsTunnelUp | TerrainKind::StairsTunnelDown | TerrainKind::FlatTunnel
        )
    }

    pub fn has_stairs(self) -> bool {
        matches!(
            self,
            TerrainKind::StairsUp
                | TerrainKind::StairsDown
                | TerrainKind::StairsTunnelUp
                | TerrainKind::StairsTunnelDown
        )
    }

    fn stairs_ascend(self) -> bool {
        matches!(self, TerrainKind::StairsUp | TerrainKind::StairsTunnelUp)
    }

    /// `(easy, hard)` endpoints of the stair-height range, if any.
    pub fn stair_height_range(self) -> Option<(f64, f64)> {
        match self {
            TerrainKind::StairsUp | TerrainKind::StairsDown => Some((0.05, 0.15)),
            TerrainKind::StairsTunnelUp | TerrainKind::StairsTunnelDown => Some((0.05, 0.1)),
            _ => None,
        }
    }

    /// `(easy, hard)` endpoints of the tunnel-height range, if any.
    pub fn tunnel_height_range(self) -> Option<(f64, f64)> {
        match self {
            TerrainKind::StairsTunnelUp | TerrainKind::StairsTunnelDown => Some((0.35, 0.25)),
            TerrainKind::FlatTunnel => Some((0.4, 0.22)),
            _ => None,
        }
    }

    /// `(easy, hard)` endpoints of the slope range in radians, if any.
    pub fn slope_range(self) -> Option<(f64, f64)> {
        match self {
            TerrainKind::SlopeUp => Some((0.05, 0.4)),
            TerrainKind::SlopeDown => Some((-0.05, -0.4)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::SlopeUp => "slope_up",
            TerrainKind::SlopeDown => "slope_down",
            TerrainKind::StairsUp => "stairs_up",
            TerrainKind::StairsDown => "stairs_down",
            TerrainKind::StairsTunnelUp => "stairs_tunnel_up",
            TerrainKind::StairsTunnelDown => "stairs_tunnel_down",
            TerrainKind::FlatTunnel => "flat_tunnel",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, TerrainError> {
        TerrainKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| TerrainError::UnknownKind(name.to_string()))
    }
}

/// Draws a terrain kind with the curriculum proportions.
pub fn sample_terrain_kind<R: Rng + ?Sized>(rng: &mut R) -> TerrainKind {
    sample_kind_from(&TerrainKind::ALL, rng)
}

/// Draws from a subset of kinds, renormalizing their proportions.
pub fn sample_kind_from<R: Rng + ?Sized>(kinds: &[TerrainKind], rng: &mut R) -> TerrainKind {
    let weights = WeightedIndex::new(kinds.iter().map(|k| k.proportion()))
        .expect("terrain proportions are positive");
    kinds[weights.sample(rng)]
}

/// Full parameterization of one terrain tile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    pub level: u32,
    pub stair_height: f64,
    pub stair_width: f64,
    pub tunnel_height: f64,
    pub tunnel_start: f64,
    pub tunnel_length: f64,
    pub slope: f64,
    pub seed: u64,
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + frac * (b - a)
}

fn mid(range: (f64, f64)) -> f64 {
    0.5 * (range.0 + range.1)
}

/// Curriculum parameters for `kind` at `level`: each range is interpolated
/// linearly at `level / 9`. Randomized fields take the middle of their ranges.
pub fn curriculum_interpolate(kind: TerrainKind, level: u32) -> Result<TerrainSpec, TerrainError> {
    if level >= NUM_LEVELS {
        return Err(TerrainError::LevelOutOfRange(level));
    }
    let frac = level as f64 / (NUM_LEVELS - 1) as f64;
    let at = |range: Option<(f64, f64)>| range.map_or(0.0, |(a, b)| lerp(a, b, frac));
    Ok(TerrainSpec {
        kind,
        level,
        stair_height: at(kind.stair_height_range()),
        stair_width: if kind.has_stairs() { mid(STAIR_WIDTH_RANGE) } else { 0.0 },
        tunnel_height: at(kind.tunnel_height_range()),
        tunnel_start: mid(TUNNEL_START_RANGE),
        tunnel_length: mid(TUNNEL_LENGTH_RANGE),
        slope: at(kind.slope_range()),
        seed: 0,
    })
}

/// Draws the randomized placement parameters; curriculum fields are untouched.
pub fn randomize_spec<R: Rng + ?Sized>(spec: &TerrainSpec, rng: &mut R) -> TerrainSpec {
    let width = rng.random_range(STAIR_WIDTH_RANGE.0..=STAIR_WIDTH_RANGE.1);
    let start = rng.random_range(TUNNEL_START_RANGE.0..=TUNNEL_START_RANGE.1);
    let length = rng.random_range(TUNNEL_LENGTH_RANGE.0..=TUNNEL_LENGTH_RANGE.1);
    let seed = rng.random::<u64>();
    TerrainSpec {
        stair_width: if spec.kind.has_stairs() { width } else { spec.stair_width },
        tunnel_start: start,
        tunnel_length: length,
        seed,
        ..*spec
    }
}

fn within(value: f64, range: (f64, f64)) -> bool {
    let (lo, hi) = if range.0 <= range.1 { range } else { (range.1, range.0) };
    value >= lo - 1e-12 && value <= hi + 1e-12
}

impl TerrainSpec {
    /// Structural validity: level in range, curriculum parameters inside their
    /// table ranges, positive placement, ceiling clearance.
    pub fn validate(&self, segment_length: f64) -> Result<(), TerrainError> {
        let bad = |name, value, reason| Err(TerrainError::InvalidParameter { name, value, reason });
        if self.level >= NUM_LEVELS {
            return Err(TerrainError::LevelOutOfRange(self.level));
        }
        if let Some(r) = self.kind.stair_height_range() {
            if !within(self.stair_height, r) {
                return bad("stair_height", self.stair_height, "outside curriculum range");
            }
            if !(self.stair_width > 0.0) {
                return bad("stair_width", self.stair_width, "must be positive");
            }
        }
        if let Some(r) = self.kind.tunnel_height_range() {
            if !within(self.tunnel_height, r) {
                return bad("tunnel_height", self.tunnel_height, "outside curriculum range");
            }
            if self.tunnel_height < MIN_CLEARANCE {
                return bad("tunnel_height", self.tunnel_height, "below minimum clearance");
            }
        }
        if let Some(r) = self.kind.slope_range() {
            if !within(self.slope, r) {
                return bad("slope", self.slope, "outside curriculum range");
            }
        }
        if !(self.tunnel_start > 0.0) {
            return bad("tunnel_start", self.tunnel_start, "must be positive");
        }
        if !(self.tunnel_length > 0.0) {
            return bad("tunnel_length", self.tunnel_length, "must be positive");
        }
        if self.tunnel_start + self.tunnel_length >= segment_length {
            return bad("tunnel_length", self.tunnel_length, "feature does not fit in segment");
        }
        if self.kind.has_stairs() && self.stair_width > self.tunnel_length {
            return bad("stair_width", self.stair_width, "wider than the featured region");
        }
        Ok(())
    }

    /// True when the randomized placement parameters lie in their sampling ranges.
    pub fn within_randomization_ranges(&self) -> bool {
        (!self.kind.has_stairs() || within(self.stair_width, STAIR_WIDTH_RANGE))
            && within(self.tunnel_start, TUNNEL_START_RANGE)
            && within(self.tunnel_length, TUNNEL_LENGTH_RANGE)
    }

    /// Parses `kind[:key=value,...]`, e.g. `flat_tunnel:tunnel_height=0.3,level=5`.
    /// Keys not given keep their level-interpolated defaults.
    pub fn parse(text: &str) -> Result<TerrainSpec, TerrainError> {
        let (kind_name, rest) = match text.split_once(':') {
            Some((k, r)) => (k.trim(), r),
            None => (text.trim(), ""),
        };
        let kind = TerrainKind::from_name(kind_name)?;
        let pairs: Vec<(&str, &str)> = rest
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|kv| kv.split_once('=').ok_or_else(|| TerrainError::Malformed(text.to_string())))
            .collect::<Result<_, _>>()?;
        let level = match pairs.iter().find(|(k, _)| k.trim() == "level") {
            Some((_, v)) => v.trim().parse().map_err(|_| TerrainError::Malformed(text.to_string()))?,
            None => 0,
        };
        let mut spec = curriculum_interpolate(kind, level)?;
        for (key, value) in pairs {
            let key = key.trim();
            if key == "level" {
                continue;
            }
            let malformed = || TerrainError::Malformed(text.to_string());
            if key == "seed" {
                spec.seed = value.trim().parse().map_err(|_| malformed())?;
                continue;
            }
            let v: f64 = value.trim().parse().map_err(|_| malformed())?;
            match key {
                "stair_height" => spec.stair_height = v,
                "stair_width" => spec.stair_width = v,
                "tunnel_height" => spec.tunnel_height = v,
                "tunnel_start" => spec.tunnel_start = v,
                "tunnel_length" => spec.tunnel_length = v,
                "slope" => spec.slope = v,
                _ => return Err(malformed()),
            }
        }
        Ok(spec)
    }
}

/// Piecewise-linear ground and optional ceiling along the travel axis.
///
/// Ground vertices are sorted by x; two consecutive vertices with equal x form
/// a vertical riser. The ground function is right-continuous at risers. The
/// ceiling is a continuous polyline over its span; the solid slab above it has
/// vertical faces at both ends of the span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    segment_length: f64,
    ground: Vec<[f64; 2]>,
    ceiling: Option<Vec<[f64; 2]>>,
    feature: (f64, f64),
}

impl TerrainProfile {
    /// Builds a profile from raw vertex lists.
    pub fn from_parts(
        segment_length: f64,
        ground: Vec<[f64; 2]>,
        ceiling: Option<Vec<[f64; 2]>>,
        feature: (f64, f64),
    ) -> Self {
        debug_assert!(ground.windows(2).all(|w| w[0][0] <= w[1][0]));
        debug_assert!(ceiling
            .as_ref()
            .is_none_or(|c| c.len() >= 2 && c.windows(2).all(|w| w[0][0] < w[1][0])));
        TerrainProfile { segment_length, ground, ceiling, feature }
    }

    /// Flat open ground without a ceiling.
    pub fn open(segment_length: f64) -> Self {
        Self::from_parts(
            segment_length,
            vec![[0.0, 0.0], [segment_length, 0.0]],
            None,
            (0.0, 0.0),
        )
    }

    pub fn segment_length(&self) -> f64 {
        self.segment_length
    }

    pub fn ground_vertices(&self) -> &[[f64; 2]] {
        &self.ground
    }

    pub fn ceiling_vertices(&self) -> Option<&[[f64; 2]]> {
        self.ceiling.as_deref()
    }

    /// `[start, end]` of the featured region (stairs, slope or tunnel).
    pub fn feature_span(&self) -> (f64, f64) {
        self.feature
    }

    pub fn ceiling_span(&self) -> Option<(f64, f64)> {
        self.ceiling
            .as_ref()
            .map(|c| (c[0][0], c[c.len() - 1][0]))
    }

    fn clamp_x(&self, x: f64) -> f64 {
        x.clamp(0.0, self.segment_length)
    }

    /// Ground height at `x`; `x` is clamped into the segment. At a riser the
    /// right-hand value is returned.
    pub fn ground_height(&self, x: f64) -> f64 {
        let x = self.clamp_x(x);
        let idx = self.ground.partition_point(|v| v[0] <= x);
        if idx == 0 {
            return self.ground[0][1];
        }
        if idx == self.ground.len() {
            return self.ground[idx - 1][1];
        }
        let [x0, z0] = self.ground[idx - 1];
        let [x1, z1] = self.ground[idx];
        z0 + (x - x0) * (z1 - z0) / (x1 - x0)
    }

    /// Ceiling height at `x`, or `None` where the ceiling is open.
    pub fn ceiling_height(&self, x: f64) -> Option<f64> {
        let x = self.clamp_x(x);
        let c = self.ceiling.as_ref()?;
        let (start, end) = (c[0][0], c[c.len() - 1][0]);
        if x < start || x > end {
            return None;
        }
        let idx = c.partition_point(|v| v[0] <= x).clamp(1, c.len() - 1);
        let [x0, z0] = c[idx - 1];
        let [x1, z1] = c[idx];
        Some(z0 + (x - x0) * (z1 - z0) / (x1 - x0))
    }

    /// Point-membership test for the solid set, used by independent checks.
    pub fn is_solid(&self, x: f64, z: f64) -> bool {
        if z <= self.ground_height(x) {
            return true;
        }
        matches!(self.ceiling_height(x), Some(c) if z >= c)
    }
}

/// Builds a profile on a tile of the default length.
pub fn build_profile(spec: &TerrainSpec) -> Result<TerrainProfile, TerrainError> {
    build_profile_with_length(spec, DEFAULT_SEGMENT_LENGTH)
}

pub fn build_profile_with_length(
    spec: &TerrainSpec,
    segment_length: f64,
) -> Result<TerrainProfile, TerrainError> {
    spec.validate(segment_length)?;
    let start = spec.tunnel_start;
    let end = start + spec.tunnel_length;
    let mut ground = vec![[0.0, 0.0], [start, 0.0]];
    let mut ceiling = None;

    match spec.kind {
        TerrainKind::SlopeUp | TerrainKind::SlopeDown => {
            let top = spec.tunnel_length * spec.slope.tan();
            ground.push([end, top]);
            ground.push([segment_length, top]);
        }
        TerrainKind::FlatTunnel => {
            ground.push([segment_length, 0.0]);
            ceiling = Some(vec![[start, spec.tunnel_height], [end, spec.tunnel_height]]);
        }
        kind => {
            let h = spec.stair_height;
            let w = spec.stair_width;
            let sign = if kind.stairs_ascend() { 1.0 } else { -1.0 };
            // stairs cover the whole featured region so the ground stays under the slope plane
            let steps = ((spec.tunnel_length / w) - 1e-9).ceil().max(1.0) as usize;
            // the riser at `start` is shared with the approach vertex
            ground.pop();
            for k in 0..steps {
                let x = start + k as f64 * w;
                ground.push([x, sign * k as f64 * h]);
                ground.push([x, sign * (k + 1) as f64 * h]);
            }
            ground.push([segment_length, sign * steps as f64 * h]);

            if kind.has_tunnel() {
                // plane through the upper riser corners
                let plane = |x: f64| {
                    let base = if kind.stairs_ascend() { h } else { 0.0 };
                    base + sign * (x - start) * h / w
                };
                ceiling = Some(vec![
                    [start, plane(start) + spec.tunnel_height],
                    [end, plane(end) + spec.tunnel_height],
                ]);
            }
        }
    }
    Ok(TerrainProfile::from_parts(segment_length, ground, ceiling, (start, end)))
}

/// Height of the stair slope plane (through the upper riser corners) at `x`.
/// Defined only for stairs kinds.
pub fn stair_slope_plane(spec: &TerrainSpec, x: f64) -> Option<f64> {
    if !spec.kind.has_stairs() {
        return None;
    }
    let (h, w, start) = (spec.stair_height, spec.stair_width, spec.tunnel_start);
    Some(if spec.kind.stairs_ascend() {
        h + (x - start) * h / w
    } else {
        -(x - start) * h / w
    })
}

/// One row of a terrain dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub x: f64,
    pub ground: f64,
    pub ceiling: Option<f64>,
}

/// Columns `x g(x) c(x)` at 1 cm spacing, `-` where the ceiling is open.
pub fn dump_columns(profile: &TerrainProfile) -> String {
    let n = (profile.segment_length() * 100.0).round() as usize;
    let mut out = String::from("# x g(x) c(x)\n");
    for i in 0..=n {
        let x = i as f64 / 100.0;
        let c = profile.ceiling_height(x).map_or_else(|| "-".to_string(), |c| c.to_string());
        out.push_str(&format!("{x} {} {c}\n", profile.ground_height(x)));
    }
    out
}

pub fn parse_columns(text: &str) -> Result<Vec<ProfileSample>, TerrainError> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let malformed = || TerrainError::Malformed(line.to_string());
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [x, g, c] = cols.as_slice() else {
                return Err(malformed());
            };
            Ok(ProfileSample {
                x: x.parse().map_err(|_| malformed())?,
                ground: g.parse().map_err(|_| malformed())?,
                ceiling: if *c == "-" { None } else { Some(c.parse().map_err(|_| malformed())?) },
            })
        })
        .collect()
}
