//! Single-sensor event lifetime estimation by local plane fitting on the SAE.

mod plane;
mod predictor;
mod ransac;

pub use plane::{
    fit_plane_least_squares, lifetime_from_normal, lifetime_from_velocity, point_plane_distance,
    predict_timestamp, prediction_error, LocalFrame, PlaneError, PlaneNormal, N3_TOLERANCE,
};
pub use predictor::{CachedPlane, PlanePredictor, Prediction};
pub use ransac::{fit_plane_ransac, RansacFit};

use thiserror::Error;

use crate::event::{
    AugmentedEvent, Event, EventError, LifetimeSource, Micros, SensorGeometry, SurfaceOfActiveEvents,
};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid RANSAC parameters: {0}")]
pub struct ParamError(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier threshold on the point-to-plane distance in `(px, px, s)` space.
    pub mu: f64,
    pub min_inliers: usize,
    pub max_iterations: usize,
    /// Side of the square spatial window (odd).
    pub window_n: usize,
    pub dt_max: Micros,
    /// Largest prediction error (µs) at which a cached plane is reused.
    pub reliability_threshold: Micros,
}

impl Default for RansacParams {
    fn default() -> Self {
        let window_n = 5;
        Self {
            mu: 2e-3,
            min_inliers: default_min_inliers(window_n),
            max_iterations: 30,
            window_n,
            dt_max: 100_000,
            reliability_threshold: 500,
        }
    }
}

/// `max(4, ceil(N^2 / 4))`: a quarter of the window pixels.
pub fn default_min_inliers(window_n: usize) -> usize {
    (window_n * window_n).div_ceil(4).max(4)
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.min_inliers < 3 {
            return Err(ParamError(format!("min_inliers {} must be >= 3", self.min_inliers)));
        }
        if self.window_n < 3 || self.window_n % 2 == 0 {
            return Err(ParamError(format!("window_n {} must be odd and >= 3", self.window_n)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(ParamError(format!("mu {} must be positive", self.mu)));
        }
        if self.max_iterations == 0 {
            return Err(ParamError("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of estimating one event's lifetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LifetimeOutcome {
    /// A cached plane predicted the event well; no fit was run.
    Predicted { lifetime: Micros, normal: PlaneNormal },
    /// RANSAC found a plane.
    Fitted { lifetime: Micros, normal: PlaneNormal },
    /// RANSAC ran and failed.
    Noise,
}

impl LifetimeOutcome {
    pub fn fit_invoked(&self) -> bool {
        !matches!(self, LifetimeOutcome::Predicted { .. })
    }

    pub fn lifetime(&self) -> Option<Micros> {
        match *self {
            LifetimeOutcome::Predicted { lifetime, .. } | LifetimeOutcome::Fitted { lifetime, .. } => {
                Some(lifetime)
            }
            LifetimeOutcome::Noise => None,
        }
    }

    pub fn to_augmented(&self, e: Event) -> AugmentedEvent {
        match *self {
            LifetimeOutcome::Predicted { lifetime, normal } => AugmentedEvent {
                normal: Some(normal),
                ..AugmentedEvent::with_lifetime(e, lifetime, LifetimeSource::Predicted)
            },
            LifetimeOutcome::Fitted { lifetime, normal } => AugmentedEvent {
                normal: Some(normal),
                ..AugmentedEvent::with_lifetime(e, lifetime, LifetimeSource::PlaneFit)
            },
            LifetimeOutcome::Noise => AugmentedEvent::noise(e),
        }
    }

    pub fn normal(&self) -> Option<PlaneNormal> {
        match *self {
            LifetimeOutcome::Predicted { normal, .. } | LifetimeOutcome::Fitted { normal, .. } => {
                Some(normal)
            }
            LifetimeOutcome::Noise => None,
        }
    }
}

pub fn seconds_to_micros(seconds: f64) -> Micros {
    (seconds * 1e6).round() as Micros
}

/// RANSAC seed for one event, derived from the run seed and the event's
/// identity so that every pipeline draws the same samples for it.
pub fn event_seed(base: u64, e: &Event) -> u64 {
    let mut h = base;
    for word in [e.side.index() as u64, e.x as u64, e.y as u64, e.t] {
        h = splitmix64(h ^ word);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lifetimes for a single sensor's stream, without any stereo coupling.
pub fn estimate_monocular(
    events: &[Event],
    geometry: SensorGeometry,
    params: &RansacParams,
    seed: u64,
) -> Result<Vec<AugmentedEvent>, EventError> {
    let mut sae = SurfaceOfActiveEvents::new(geometry);
    let mut predictor = PlanePredictor::new(geometry);
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        sae.update(e)?;
        let outcome = estimate_lifetime(&sae, &mut predictor, e, params, event_seed(seed, e));
        out.push(outcome.to_augmented(*e));
    }
    Ok(out)
}

/// Estimates the lifetime of `e`, which must already be in `sae`.
///
/// Reuses a reliable cached plane when one exists; otherwise fits the
/// `window_n`x`window_n` past window with RANSAC and caches the result.
pub fn estimate_lifetime(
    sae: &SurfaceOfActiveEvents,
    predictor: &mut PlanePredictor,
    e: &Event,
    params: &RansacParams,
    seed: u64,
) -> LifetimeOutcome {
    if let Some(hit) = predictor.reliable_plane(e, params.dt_max, params.reliability_threshold as f64) {
        if let Ok(tau) = lifetime_from_normal(&hit.normal) {
            return LifetimeOutcome::Predicted {
                lifetime: seconds_to_micros(tau),
                normal: hit.normal,
            };
        }
    }

    let window = sae.spatiotemporal_window((e.x as u32, e.y as u32), params.window_n, params.dt_max, e.t);
    let frame = LocalFrame::for_event(e.x, e.y, e.t, params.dt_max);
    let mut current = None;
    let points: Vec<[f64; 3]> = window
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.x == e.x && p.y == e.y {
                current = Some(i);
            }
            frame.to_local(p.x, p.y, p.t)
        })
        .collect();
    let Some(current) = current else {
        return LifetimeOutcome::Noise;
    };
    match fit_plane_ransac(&points, current, params, seed) {
        Some(fit) => match lifetime_from_normal(&fit.normal) {
            Ok(tau) => {
                predictor.store(e, fit.normal, frame);
                LifetimeOutcome::Fitted {
                    lifetime: seconds_to_micros(tau),
                    normal: fit.normal,
                }
            }
            Err(_) => LifetimeOutcome::Noise,
        },
        None => LifetimeOutcome::Noise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Polarity, Side};

    fn ev(x: u16, y: u16, t: Micros) -> Event {
        Event::new(x, y, t, Polarity::On, Side::Left)
    }

    #[test]
    fn default_params_are_valid() {
        let p = RansacParams::default();
        p.validate().unwrap();
        assert_eq!(p.min_inliers, 7);
        assert_eq!(default_min_inliers(3), 4);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            RansacParams { min_inliers: 2, ..Default::default() },
            RansacParams { window_n: 4, ..Default::default() },
            RansacParams { window_n: 1, ..Default::default() },
            RansacParams { mu: 0.0, ..Default::default() },
            RansacParams { max_iterations: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn isolated_event_is_noise() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut sae = SurfaceOfActiveEvents::new(g);
        let mut predictor = PlanePredictor::new(g);
        let e = ev(10, 10, 5000);
        sae.update(&e).unwrap();
        let out = estimate_lifetime(&sae, &mut predictor, &e, &RansacParams::default(), 0);
        assert_eq!(out, LifetimeOutcome::Noise);
        assert!(out.fit_invoked());
    }

    #[test]
    fn second_event_on_fitted_plane_skips_the_fit() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut sae = SurfaceOfActiveEvents::new(g);
        let mut predictor = PlanePredictor::new(g);
        let params = RansacParams::default();
        // Vertical edge at 100 px/s: column x fires at x * 10 ms.
        for x in 0..=6u16 {
            for y in 0..20u16 {
                sae.update(&ev(x, y, x as u64 * 10_000)).unwrap();
            }
        }
        let first = ev(6, 10, 60_000);
        let fitted = estimate_lifetime(&sae, &mut predictor, &first, &params, 1);
        let LifetimeOutcome::Fitted { lifetime, normal } = fitted else {
            panic!("expected a fit, got {fitted:?}");
        };
        assert_eq!(lifetime, 10_000);

        let second = ev(6, 11, 60_000);
        let reused = estimate_lifetime(&sae, &mut predictor, &second, &params, 2);
        assert_eq!(reused, LifetimeOutcome::Predicted { lifetime, normal });
        assert!(!reused.fit_invoked());
    }
}
