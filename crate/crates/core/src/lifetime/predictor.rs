//! Per-pixel cache of fitted planes used to skip refitting.
//!
//! A fitted plane predicts when its edge reaches the neighboring pixels. When
//! an incoming event's timestamp agrees with such a prediction, the cached
//! normal is reused instead of running RANSAC.

use crate::event::{Event, Micros, SensorGeometry};

use super::plane::{prediction_error, LocalFrame, PlaneNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedPlane {
    pub normal: PlaneNormal,
    pub frame: LocalFrame,
    pub fit_time: Micros,
}

/// Best reliable cached plane for an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub normal: PlaneNormal,
    /// Absolute difference between the event and predicted timestamps (µs).
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct PlanePredictor {
    geometry: SensorGeometry,
    cells: Vec<Option<CachedPlane>>,
}

impl PlanePredictor {
    pub fn new(geometry: SensorGeometry) -> Self {
        Self {
            cells: vec![None; geometry.pixel_count()],
            geometry,
        }
    }

    pub fn get(&self, x: u16, y: u16) -> Option<CachedPlane> {
        self.cells[self.geometry.index(x as usize, y as usize)]
    }

    pub fn store(&mut self, e: &Event, normal: PlaneNormal, frame: LocalFrame) {
        let idx = self.geometry.index(e.x as usize, e.y as usize);
        self.cells[idx] = Some(CachedPlane {
            normal,
            frame,
            fit_time: e.t,
        });
    }

    /// Searches the 3x3 neighborhood of `e` (own pixel included) for fresh
    /// planes and returns the one predicting `e.t` best, if that prediction is
    /// within `threshold` microseconds. Ties keep the first in row-major order.
    pub fn reliable_plane(&self, e: &Event, dt_max: Micros, threshold: f64) -> Option<Prediction> {
        let mut best: Option<Prediction> = None;
        let (x, y) = (e.x as i64, e.y as i64);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if !self.geometry.contains(nx, ny) {
                    continue;
                }
                let Some(cached) = self.cells[self.geometry.index(nx as usize, ny as usize)] else {
                    continue;
                };
                if cached.fit_time > e.t || e.t - cached.fit_time > dt_max {
                    continue;
                }
                let Ok(predicted) = cached.frame.predict_micros(&cached.normal, e.x, e.y) else {
                    continue;
                };
                let error = prediction_error(e.t as f64, predicted);
                if error <= threshold && best.is_none_or(|b| error < b.error) {
                    best = Some(Prediction {
                        normal: cached.normal,
                        error,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Polarity, Side};

    fn ev(x: u16, y: u16, t: Micros) -> Event {
        Event::new(x, y, t, Polarity::On, Side::Left)
    }

    /// Plane of a vertical edge at 100 px/s seen from (5, 5, 50 ms).
    fn edge_plane() -> (PlaneNormal, LocalFrame) {
        let frame = LocalFrame::for_event(5, 5, 50_000, 100_000);
        // t_local = 0.1 + 0.01 x  =>  n = (-0.1, 0, 10)
        (PlaneNormal::new(-0.1, 0.0, 10.0), frame)
    }

    #[test]
    fn predicts_next_column() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut p = PlanePredictor::new(g);
        let (n, frame) = edge_plane();
        p.store(&ev(5, 5, 50_000), n, frame);
        let hit = p.reliable_plane(&ev(6, 5, 60_000), 100_000, 500.0).unwrap();
        assert!(hit.error < 1e-6);
        assert_eq!(hit.normal, n);
        let late = ev(6, 5, 61_000);
        assert!(p.reliable_plane(&late, 100_000, 500.0).is_none());
        assert!(p.reliable_plane(&late, 100_000, 1000.0).is_some());
    }

    #[test]
    fn ignores_pixels_outside_neighborhood() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut p = PlanePredictor::new(g);
        let (n, frame) = edge_plane();
        p.store(&ev(5, 5, 50_000), n, frame);
        assert!(p.reliable_plane(&ev(7, 5, 70_000), 100_000, 500.0).is_none());
    }

    #[test]
    fn entries_expire_after_dt_max() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut p = PlanePredictor::new(g);
        let frame = LocalFrame::for_event(5, 5, 0, 100_000);
        let flat = PlaneNormal::new(0.0, 0.0, 10.0);
        p.store(&ev(5, 5, 0), flat, frame);
        // A flat plane predicts t = 0 everywhere; only freshness differs.
        assert!(p.reliable_plane(&ev(5, 6, 0), 100_000, 500.0).is_some());
        assert!(p.reliable_plane(&ev(5, 6, 100_001), 100_000, 1e12).is_none());
        assert!(p.reliable_plane(&ev(5, 6, 100_000), 100_000, 1e12).is_some());
    }

    #[test]
    fn prefers_smallest_error() {
        let g = SensorGeometry::new(20, 20, 8).unwrap();
        let mut p = PlanePredictor::new(g);
        let (n, frame) = edge_plane();
        p.store(&ev(5, 5, 50_000), n, frame);
        let off = PlaneNormal::new(-0.1, 0.0, 9.99);
        p.store(&ev(5, 6, 50_000), off, frame);
        let hit = p.reliable_plane(&ev(6, 6, 60_000), 100_000, 5000.0).unwrap();
        assert_eq!(hit.normal, n);
    }
}
