//! RANSAC plane fitting over a spatio-temporal window.
//!
//! Each hypothesis is the current event plus two random past events. The
//! first hypothesis that gathers at least `min_inliers` points within `mu` of
//! its plane is refined by least squares over those inliers. When no
//! hypothesis qualifies within `max_iterations`, the event is noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::plane::{fit_plane_least_squares, point_plane_distance, PlaneNormal};
use super::RansacParams;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub normal: PlaneNormal,
    /// Inlier mask over the input points, from the accepted hypothesis.
    pub inliers: Vec<bool>,
    /// 1-based index of the accepted iteration.
    pub iterations: usize,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Fits a plane to `points`; `current` indexes the event being estimated.
///
/// Returns `None` when the event has to be declared noise.
pub fn fit_plane_ransac(
    points: &[[f64; 3]],
    current: usize,
    params: &RansacParams,
    seed: u64,
) -> Option<RansacFit> {
    assert!(current < points.len(), "current event must be part of the candidate set");
    if points.len() < 3 || points.len() < params.min_inliers {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let past = points.len() - 1;
    let mut inliers = vec![false; points.len()];
    let mut support: Vec<[f64; 3]> = Vec::with_capacity(points.len());

    for iteration in 1..=params.max_iterations {
        // Two distinct past events, skipping over the current index.
        let a = rng.random_range(0..past);
        let mut b = rng.random_range(0..past - 1);
        if b >= a {
            b += 1;
        }
        let skip = |i: usize| if i >= current { i + 1 } else { i };
        let hypothesis = [points[current], points[skip(a)], points[skip(b)]];
        let Ok(candidate) = fit_plane_least_squares(&hypothesis) else {
            continue;
        };

        let mut count = 0;
        for (flag, p) in inliers.iter_mut().zip(points) {
            *flag = point_plane_distance(&candidate, p) < params.mu;
            count += *flag as usize;
        }
        if count < params.min_inliers {
            continue;
        }

        support.clear();
        support.extend(points.iter().zip(&inliers).filter(|(_, &f)| f).map(|(p, _)| *p));
        if let Ok(normal) = fit_plane_least_squares(&support) {
            return Some(RansacFit {
                normal,
                inliers,
                iterations: iteration,
            });
        }
    }
    None
}
