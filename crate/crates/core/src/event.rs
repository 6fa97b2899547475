//! Events, sensor geometry and the surface of active events (SAE).
//!
//! The SAE maps every pixel of one sensor to the timestamp (and polarity) of
//! the most recent event that fired there. Plane fitting reads local
//! spatio-temporal windows out of it; the active-event set is derived from
//! events augmented with a lifetime.

use std::fmt;

use thiserror::Error;

use crate::lifetime::PlaneNormal;

/// Timestamps are integer microseconds, the native sensor resolution.
pub type Micros = u64;

/// Errors raised when an event does not fit the configured sensor.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("event at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("timestamp {t} at ({x}, {y}) is older than the stored {stored}")]
    OutOfOrder { x: u32, y: u32, t: Micros, stored: Micros },
    #[error("invalid sensor geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn index(self) -> usize {
        match self {
            Polarity::On => 0,
            Polarity::Off => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

/// Which sensor of the rectified stereo pair emitted an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Column offset applied to a reference pixel to reach its counterpart at
    /// disparity `d` on the other sensor (`d = x_left - x_right`).
    pub fn counterpart_offset(self, d: i32) -> i32 {
        match self {
            Side::Left => -d,
            Side::Right => d,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

/// A single brightness-change report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: Micros,
    pub polarity: Polarity,
    pub side: Side,
}

impl Event {
    pub fn new(x: u16, y: u16, t: Micros, polarity: Polarity, side: Side) -> Self {
        Self {
            x,
            y,
            t,
            polarity,
            side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
    /// Stereo baseline in meters; informational only.
    pub baseline: f64,
    pub max_disparity: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32, max_disparity: u32) -> Result<Self, EventError> {
        let geometry = Self {
            width,
            height,
            baseline: 0.1,
            max_disparity,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// DAVIS240 resolution with a 32 px disparity range.
    pub fn davis240() -> Self {
        Self {
            width: 240,
            height: 180,
            baseline: 0.1,
            max_disparity: 32,
        }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.width == 0 || self.height == 0 {
            return Err(EventError::Geometry(format!(
                "sensor size {}x{} must be positive",
                self.width, self.height
            )));
        }
        if self.max_disparity == 0 || self.max_disparity >= self.width {
            return Err(EventError::Geometry(format!(
                "max_disparity {} must lie in 1..{}",
                self.max_disparity, self.width
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn check(&self, e: &Event) -> Result<(), EventError> {
        if self.contains(e.x as i64, e.y as i64) {
            Ok(())
        } else {
            Err(EventError::OutOfBounds {
                x: e.x as u32,
                y: e.y as u32,
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width as usize + x
    }
}

/// One populated SAE pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaeCell {
    pub t: Micros,
    pub polarity: Polarity,
}

/// A point read out of the SAE: pixel coordinates plus stored timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaePoint {
    pub x: u16,
    pub y: u16,
    pub t: Micros,
}

/// Latest timestamp and polarity per pixel for one sensor.
///
/// Single writer: exactly one event stream updates a given surface.
#[derive(Debug, Clone)]
pub struct SurfaceOfActiveEvents {
    geometry: SensorGeometry,
    cells: Vec<Option<SaeCell>>,
}

impl SurfaceOfActiveEvents {
    pub fn new(geometry: SensorGeometry) -> Self {
        Self {
            cells: vec![None; geometry.pixel_count()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &SensorGeometry {
        &self.geometry
    }

    pub fn update(&mut self, e: &Event) -> Result<(), EventError> {
        self.geometry.check(e)?;
        let idx = self.geometry.index(e.x as usize, e.y as usize);
        if let Some(cell) = self.cells[idx] {
            if e.t < cell.t {
                return Err(EventError::OutOfOrder {
                    x: e.x as u32,
                    y: e.y as u32,
                    t: e.t,
                    stored: cell.t,
                });
            }
        }
        self.cells[idx] = Some(SaeCell {
            t: e.t,
            polarity: e.polarity,
        });
        Ok(())
    }

    /// Timestamp of the last event at `(x, y)`, or `None` if the pixel never
    /// fired (or lies outside the sensor).
    pub fn query(&self, x: u32, y: u32) -> Option<Micros> {
        self.cell(x, y).map(|c| c.t)
    }

    pub fn cell(&self, x: u32, y: u32) -> Option<SaeCell> {
        if !self.geometry.contains(x as i64, y as i64) {
            return None;
        }
        self.cells[self.geometry.index(x as usize, y as usize)]
    }

    /// All populated pixels of the `n`x`n` window around `center` (clipped at
    /// the sensor border) whose timestamp lies in `[t_now - dt_max, t_now]`.
    pub fn spatiotemporal_window(
        &self,
        center: (u32, u32),
        n: usize,
        dt_max: Micros,
        t_now: Micros,
    ) -> Vec<SaePoint> {
        let mut points = Vec::with_capacity(n * n);
        self.spatiotemporal_window_into(center, n, dt_max, t_now, &mut points);
        points
    }

    /// Same as [`Self::spatiotemporal_window`], reusing `out`.
    pub fn spatiotemporal_window_into(
        &self,
        center: (u32, u32),
        n: usize,
        dt_max: Micros,
        t_now: Micros,
        out: &mut Vec<SaePoint>,
    ) {
        out.clear();
        let half = (n / 2) as i64;
        let oldest = t_now.saturating_sub(dt_max);
        let (cx, cy) = (center.0 as i64, center.1 as i64);
        let y_lo = (cy - half).max(0);
        let y_hi = (cy + half).min(self.geometry.height as i64 - 1);
        let x_lo = (cx - half).max(0);
        let x_hi = (cx + half).min(self.geometry.width as i64 - 1);
        for y in y_lo..=y_hi {
            let row = y as usize * self.geometry.width as usize;
            for x in x_lo..=x_hi {
                if let Some(cell) = self.cells[row + x as usize] {
                    if cell.t >= oldest && cell.t <= t_now {
                        out.push(SaePoint {
                            x: x as u16,
                            y: y as u16,
                            t: cell.t,
                        });
                    }
                }
            }
        }
    }
}

/// Estimated lifetime of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lifetime {
    /// Neither plane fitting nor stereo matching produced a lifetime.
    Noise,
    Micros(Micros),
}

impl Lifetime {
    pub fn micros(self) -> Option<Micros> {
        match self {
            Lifetime::Noise => None,
            Lifetime::Micros(tau) => Some(tau),
        }
    }

    pub fn is_noise(self) -> bool {
        matches!(self, Lifetime::Noise)
    }
}

/// Where an event's lifetime came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifetimeSource {
    /// RANSAC plane fit on the event's own SAE.
    PlaneFit,
    /// Reused a cached plane whose timestamp prediction was reliable.
    Predicted,
    /// Median of plane-derived lifetimes in the matched window of the other sensor.
    StereoMedian,
    /// Constant accumulation interval (baseline, no estimation).
    FixedInterval,
    /// No lifetime could be assigned.
    None,
}

/// An event together with everything estimated about it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedEvent {
    pub event: Event,
    pub lifetime: Lifetime,
    pub disparity: Option<u16>,
    pub normal: Option<PlaneNormal>,
    pub source: LifetimeSource,
}

impl AugmentedEvent {
    pub fn noise(event: Event) -> Self {
        Self {
            event,
            lifetime: Lifetime::Noise,
            disparity: None,
            normal: None,
            source: LifetimeSource::None,
        }
    }

    pub fn with_lifetime(event: Event, lifetime: Micros, source: LifetimeSource) -> Self {
        Self {
            event,
            lifetime: Lifetime::Micros(lifetime),
            disparity: None,
            normal: None,
            source,
        }
    }

    /// `t <= t_now <= t + tau`; noise events are never active.
    pub fn is_active_at(&self, t_now: Micros) -> bool {
        match self.lifetime {
            Lifetime::Noise => false,
            Lifetime::Micros(tau) => {
                self.event.t <= t_now && t_now <= self.event.t.saturating_add(tau)
            }
        }
    }
}

/// The events active at `t_now`, in input order.
pub fn active_events(events: &[AugmentedEvent], t_now: Micros) -> Vec<AugmentedEvent> {
    events
        .iter()
        .filter(|e| e.is_active_at(t_now))
        .copied()
        .collect()
}
