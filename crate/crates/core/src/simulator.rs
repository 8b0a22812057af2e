//! Ground-truth channel synthesis from wall scenes.
//!
//! Each wall contributes one first-order image source at twice its distance
//! along its normal. A source at `(R, φ)` reaches microphone `m` (at angle
//! `θ_m = 2πm/M`) as the directivity response for emission angle `φ`, scaled
//! by `R0/R` and the reflection coefficient, and delayed by
//!
//! ```text
//! (R − Ra)·fs/vc  +  fs·Ra/vc·(1 − cos(θ_m − φ))   samples.
//! ```
//!
//! The first term places a source on radial bin `q` at sample `q`; the
//! second is the far-field array delay, zero for the microphone facing the
//! source. This path never touches the Fourier-domain operator.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::delay::{self, DelayMode};
use crate::directivity::DirectivityTable;
use crate::error::{Error, Result};
use crate::forward_model::ChannelVector;
use crate::grid::{ceil_delay, wrap_angle, PolarGrid};

/// A planar reflector seen from the array centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    /// Perpendicular distance from the array centre, m.
    pub distance: f64,
    /// Direction of the wall's closest point, rad.
    pub normal_angle: f64,
    pub reflection: f64,
}

impl Wall {
    pub fn new(distance: f64, normal_angle: f64, reflection: f64) -> Result<Self> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(Error::InvalidParameter(format!("wall distance {distance}")));
        }
        if !normal_angle.is_finite() {
            return Err(Error::InvalidParameter(format!("wall angle {normal_angle}")));
        }
        if !(reflection > 0.0 && reflection <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "reflection coefficient {reflection} not in (0, 1]"
            )));
        }
        Ok(Self {
            distance,
            normal_angle: wrap_angle(normal_angle),
            reflection,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub walls: Vec<Wall>,
    pub include_direct_path: bool,
}

impl Scene {
    pub fn new(walls: Vec<Wall>) -> Self {
        Self {
            walls,
            include_direct_path: false,
        }
    }

    /// Parses one wall per line: `distance_m normal_angle_rad reflection_coeff`.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut walls = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                message: format!("line {}: {message}", lineno + 1),
            };
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'"))))
                .collect::<Result<_>>()?;
            if fields.len() != 3 {
                return Err(err(format!("{} fields, expected 3", fields.len())));
            }
            walls.push(Wall::new(fields[0], fields[1], fields[2]).map_err(|e| err(e.to_string()))?);
        }
        Ok(Self::new(walls))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    /// The same scene with every wall rotated by `angle` about the array.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            walls: self
                .walls
                .iter()
                .map(|w| Wall {
                    normal_angle: wrap_angle(w.normal_angle + angle),
                    ..*w
                })
                .collect(),
            include_direct_path: self.include_direct_path,
        }
    }
}

/// A point source in polar coordinates with an amplitude multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub radius: f64,
    pub angle: f64,
    pub gain: f64,
}

pub fn walls_to_image_sources(scene: &Scene) -> Vec<ImageSource> {
    scene
        .walls
        .iter()
        .map(|w| ImageSource {
            radius: 2.0 * w.distance,
            angle: w.normal_angle,
            gain: w.reflection,
        })
        .collect()
}

/// Signal-to-noise ratio of the synthesized channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Snr {
    #[default]
    Noiseless,
    Db(f64),
}

impl Snr {
    /// Decibel value, `+∞` when noiseless.
    pub fn db(&self) -> f64 {
        match *self {
            Snr::Noiseless => f64::INFINITY,
            Snr::Db(v) => v,
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Snr::Noiseless => serializer.serialize_str("noiseless"),
            Snr::Db(v) => serializer.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) if v.is_finite() => Ok(Snr::Db(v)),
            Raw::Num(_) => Ok(Snr::Noiseless),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("noiseless") || s.eq_ignore_ascii_case("inf") {
            return Ok(Snr::Noiseless);
        }
        s.parse::<f64>()
            .map(Snr::Db)
            .map_err(|_| format!("invalid SNR '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub fs: f64,
    pub vc: f64,
    pub array_radius: f64,
    pub mics: usize,
    /// Output samples per microphone.
    pub n_h: usize,
    pub snr: Snr,
    pub seed: u64,
    pub delay_mode: DelayMode,
    /// Radius of the direct-path source (angle 0) when the scene enables it.
    pub direct_path_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            fs: 48_000.0,
            vc: crate::grid::DEFAULT_SPEED_OF_SOUND,
            array_radius: 0.035,
            mics: 6,
            n_h: 138,
            snr: Snr::Noiseless,
            seed: 0,
            delay_mode: DelayMode::GridRounded,
            direct_path_radius: 0.035,
        }
    }
}

impl SimConfig {
    /// Configuration sharing the grid's physical constants.
    pub fn for_grid(grid: &PolarGrid, n_h: usize, delay_mode: DelayMode) -> Self {
        Self {
            fs: grid.fs(),
            vc: grid.vc(),
            array_radius: grid.array_radius(),
            mics: grid.mics(),
            n_h,
            delay_mode,
            direct_path_radius: grid.array_radius(),
            ..Self::default()
        }
    }

    fn validate(&self, table: &DirectivityTable) -> Result<()> {
        if !(self.fs > 0.0 && self.vc > 0.0 && self.array_radius >= 0.0) {
            return Err(Error::InvalidParameter(
                "fs and vc must be positive, array radius non-negative".into(),
            ));
        }
        if self.mics == 0 || self.n_h == 0 {
            return Err(Error::InvalidParameter("mics and n_h must be >= 1".into()));
        }
        if (table.fs() - self.fs).abs() > 1e-9 * self.fs {
            return Err(Error::InvalidParameter(format!(
                "directivity sampled at {} Hz, simulation at {} Hz",
                table.fs(),
                self.fs
            )));
        }
        if !(self.direct_path_radius > 0.0) {
            return Err(Error::InvalidParameter("direct path radius must be > 0".into()));
        }
        Ok(())
    }
}

/// Noiseless multichannel response of a scene.
pub fn synth_channel(scene: &Scene, table: &DirectivityTable, cfg: &SimConfig) -> Result<ChannelVector> {
    cfg.validate(table)?;
    if let Some(w) = scene.walls.iter().find(|w| w.distance <= cfg.array_radius) {
        return Err(Error::InvalidParameter(format!(
            "wall at {} m is inside the array radius",
            w.distance
        )));
    }
    let mut sources = walls_to_image_sources(scene);
    if scene.include_direct_path {
        sources.push(ImageSource {
            radius: cfg.direct_path_radius,
            angle: 0.0,
            gain: 1.0,
        });
    }
    synth_sources(&sources, table, cfg)
}

/// Noiseless multichannel response of explicit image sources.
pub fn synth_sources(sources: &[ImageSource], table: &DirectivityTable, cfg: &SimConfig) -> Result<ChannelVector> {
    cfg.validate(table)?;
    let mut h = ChannelVector::zeros(cfg.mics, cfg.n_h);
    let samples_per_metre = cfg.fs / cfg.vc;
    for src in sources {
        if !(src.radius.is_finite() && src.radius > 0.0) {
            return Err(Error::InvalidParameter(format!("source radius {}", src.radius)));
        }
        let response = table.response_at(src.angle);
        let gain = src.gain * table.r0() / src.radius;
        let radial = (src.radius - cfg.array_radius) * samples_per_metre;
        for m in 0..cfg.mics {
            let theta = TAU * m as f64 / cfg.mics as f64;
            let array = samples_per_metre * cfg.array_radius * (1.0 - (theta - src.angle).cos());
            let delay = match cfg.delay_mode {
                DelayMode::GridRounded => radial.round() + ceil_delay(array) as f64,
                DelayMode::BandLimited => radial + array,
            };
            let last = delay.ceil() + (response.len() - 1) as f64;
            if last >= cfg.n_h as f64 {
                return Err(Error::EchoBeyondWindow { delay, n_h: cfg.n_h });
            }
            delay::add_delayed(h.channel_mut(m), &response, delay, gain, cfg.delay_mode);
        }
    }
    Ok(h)
}

/// Adds white Gaussian noise at the requested SNR relative to the mean
/// power of `h`. Deterministic for a given seed.
pub fn add_awgn(h: &ChannelVector, snr: Snr, seed: u64) -> ChannelVector {
    let mut out = h.clone();
    let Snr::Db(db) = snr else {
        return out;
    };
    let power = h.energy() / h.as_slice().len() as f64;
    let sigma = (power / 10f64.powf(db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.as_mut_slice() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * n;
    }
    out
}

/// [`synth_channel`] followed by [`add_awgn`] with the configured SNR and seed.
pub fn simulate(scene: &Scene, table: &DirectivityTable, cfg: &SimConfig) -> Result<ChannelVector> {
    let clean = synth_channel(scene, table, cfg)?;
    Ok(add_awgn(&clean, cfg.snr, cfg.seed))
}
