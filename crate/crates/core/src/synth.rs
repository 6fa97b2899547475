//! Synthetic moving-edge stereo streams with analytic ground truth.
//!
//! A one-pixel-thick brightness step sweeps over the sensor at constant
//! velocity; every pixel fires exactly once when the edge crosses it, so the
//! SAE is exactly planar and the true lifetime is known in closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::event::{Event, Micros, Polarity, SensorGeometry, Side};
use crate::lifetime::lifetime_from_velocity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("edge velocity ({0}, {1}) px/s does not describe a moving edge")]
    InvalidVelocity(f64, f64),
    #[error("disparity {disparity} exceeds the maximum {max}")]
    DisparityOutOfRange { disparity: u16, max: u32 },
    #[error("noise rate {0} must be finite and non-negative")]
    InvalidNoiseRate(f64),
    #[error("keep fraction {0} must lie in (0, 1]")]
    InvalidKeepFraction(f64),
}

/// A straight edge moving at constant velocity.
///
/// `velocity` holds the inverse SAE gradient `(vx, vy)`: the edge crosses one
/// column every `1/vx` seconds and one row every `1/vy` seconds. An infinite
/// component means the edge is parallel to that axis (a vertical edge has
/// `vy = inf`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeScenario {
    pub velocity: (f64, f64),
    pub true_disparity: u16,
    pub duration_us: Micros,
    /// Time at which the edge enters the sensor (may be negative).
    pub start_us: i64,
    pub geometry: SensorGeometry,
    /// Noise events per second over the whole array, per sensor.
    pub noise_rate: f64,
    pub seed: u64,
}

impl EdgeScenario {
    pub fn vertical(vx: f64, geometry: SensorGeometry) -> Self {
        Self::with_velocity((vx, f64::INFINITY), geometry)
    }

    pub fn horizontal(vy: f64, geometry: SensorGeometry) -> Self {
        Self::with_velocity((f64::INFINITY, vy), geometry)
    }

    /// Edge whose normal points at `angle_deg` from +x, crossing pixels along
    /// the normal at `speed` px/s.
    pub fn angled(angle_deg: f64, speed: f64, geometry: SensorGeometry) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let component = |k: f64| if k.abs() < 1e-12 { f64::INFINITY } else { speed / k };
        Self::with_velocity((component(c), component(s)), geometry)
    }

    pub fn with_velocity(velocity: (f64, f64), geometry: SensorGeometry) -> Self {
        Self {
            velocity,
            true_disparity: 0,
            duration_us: 2_000_000,
            start_us: 0,
            geometry,
            noise_rate: 0.0,
            seed: 0,
        }
    }

    /// Angle of the edge normal in degrees from +x, in `(-180, 180]`.
    pub fn orientation_deg(&self) -> f64 {
        let (gx, gy) = (1.0 / self.velocity.0, 1.0 / self.velocity.1);
        gy.atan2(gx).to_degrees()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (vx, vy) = self.velocity;
        let ok = |v: f64| !v.is_nan() && v != 0.0;
        if !ok(vx) || !ok(vy) || (vx.is_infinite() && vy.is_infinite()) {
            return Err(SynthError::InvalidVelocity(vx, vy));
        }
        if self.true_disparity as u32 > self.geometry.max_disparity {
            return Err(SynthError::DisparityOutOfRange {
                disparity: self.true_disparity,
                max: self.geometry.max_disparity,
            });
        }
        if !(self.noise_rate >= 0.0) || !self.noise_rate.is_finite() {
            return Err(SynthError::InvalidNoiseRate(self.noise_rate));
        }
        Ok(())
    }

    /// True lifetime in seconds.
    pub fn true_lifetime(&self) -> f64 {
        lifetime_from_velocity(self.velocity.0, self.velocity.1).expect("validated velocity")
    }

    /// Unquantized crossing time of pixel `(x, y)` in microseconds.
    pub fn crossing_time_us(&self, x: u32, y: u32) -> f64 {
        let term = |pos: u32, v: f64, extent: u32| {
            if v.is_infinite() {
                return 0.0;
            }
            let origin = if v > 0.0 { 0.0 } else { (extent - 1) as f64 };
            (pos as f64 - origin) / v
        };
        self.start_us as f64
            + 1e6 * (term(x, self.velocity.0, self.geometry.width) + term(y, self.velocity.1, self.geometry.height))
    }

    fn polarity(&self) -> Polarity {
        let (vx, vy) = self.velocity;
        let forward = if vx.is_finite() { vx > 0.0 } else { vy > 0.0 };
        if forward {
            Polarity::On
        } else {
            Polarity::Off
        }
    }
}

/// Ground truth of one generated event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Unquantized lifetime in microseconds; `None` for noise.
    pub lifetime_us: Option<f64>,
    pub disparity: Option<u16>,
    pub noise: bool,
}

impl GroundTruth {
    pub const NOISE: GroundTruth = GroundTruth {
        lifetime_us: None,
        disparity: None,
        noise: true,
    };
}

/// One sensor's events with aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub side: Side,
    pub events: Vec<Event>,
    pub truth: Vec<GroundTruth>,
}

impl LabeledStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoStreams {
    pub left: LabeledStream,
    pub right: LabeledStream,
}

/// Generates both sensors' streams for `scenario`, noise included.
pub fn generate_stereo_edge(scenario: &EdgeScenario) -> Result<StereoStreams, SynthError> {
    scenario.validate()?;
    let g = &scenario.geometry;
    let polarity = scenario.polarity();
    let truth = GroundTruth {
        lifetime_us: Some(scenario.true_lifetime() * 1e6),
        disparity: Some(scenario.true_disparity),
        noise: false,
    };

    let mut crossings = Vec::new();
    for y in 0..g.height {
        for x in 0..g.width {
            let t = scenario.crossing_time_us(x, y).round();
            if t >= 0.0 && t <= scenario.duration_us as f64 {
                crossings.push((t as Micros, y as u16, x as u16));
            }
        }
    }
    crossings.sort_unstable();

    let d = scenario.true_disparity;
    let left: Vec<Event> = crossings
        .iter()
        .map(|&(t, y, x)| Event::new(x, y, t, polarity, Side::Left))
        .collect();
    let right: Vec<Event> = crossings
        .iter()
        .filter(|&&(_, _, x)| x >= d)
        .map(|&(t, y, x)| Event::new(x - d, y, t, polarity, Side::Right))
        .collect();

    let label = |side, events: Vec<Event>| LabeledStream {
        side,
        truth: vec![truth; events.len()],
        events,
    };
    let mut streams = StereoStreams {
        left: label(Side::Left, left),
        right: label(Side::Right, right),
    };
    if scenario.noise_rate > 0.0 {
        let (rate, dur) = (scenario.noise_rate, scenario.duration_us);
        streams.left = add_noise(&streams.left, g, rate, dur, scenario.seed)?;
        streams.right = add_noise(&streams.right, g, rate, dur, scenario.seed ^ 0x5EED_0F_5A1D)?;
    }
    Ok(streams)
}

/// Adds Poisson noise at `rate` events/s over `[0, duration_us]`, with
/// uniformly random pixels and polarities; the result stays time-sorted.
pub fn add_noise(
    stream: &LabeledStream,
    geometry: &SensorGeometry,
    rate: f64,
    duration_us: Micros,
    seed: u64,
) -> Result<LabeledStream, SynthError> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(SynthError::InvalidNoiseRate(rate));
    }
    let mean = rate * duration_us as f64 * 1e-6;
    if mean == 0.0 {
        return Ok(stream.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = Poisson::new(mean).expect("positive finite mean").sample(&mut rng) as usize;
    let mut merged: Vec<(Event, GroundTruth)> = stream
        .events
        .iter()
        .copied()
        .zip(stream.truth.iter().copied())
        .collect();
    merged.reserve(count);
    for _ in 0..count {
        let e = Event::new(
            rng.random_range(0..geometry.width) as u16,
            rng.random_range(0..geometry.height) as u16,
            rng.random_range(0..=duration_us),
            if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off },
            stream.side,
        );
        merged.push((e, GroundTruth::NOISE));
    }
    merged.sort_by_key(|(e, _)| e.t);
    let (events, truth) = merged.into_iter().unzip();
    Ok(LabeledStream {
        side: stream.side,
        events,
        truth,
    })
}

/// Keeps each event independently with probability `keep_fraction`.
pub fn sparsify(stream: &LabeledStream, keep_fraction: f64, seed: u64) -> Result<LabeledStream, SynthError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(SynthError::InvalidKeepFraction(keep_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (events, truth) = stream
        .events
        .iter()
        .zip(&stream.truth)
        .filter(|_| keep_fraction == 1.0 || rng.random_bool(keep_fraction))
        .map(|(e, t)| (*e, *t))
        .unzip();
    Ok(LabeledStream {
        side: stream.side,
        events,
        truth,
    })
}
