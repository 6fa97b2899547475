//! Local SAE plane geometry.
//!
//! Planes are written as `n . p = 1` with `p = (x, y, t)`, `x`/`y` in pixels
//! relative to a window center and `t` in seconds relative to a time origin
//! that lies strictly before every windowed timestamp. In that frame the SAE
//! plane always has a non-zero time intercept, so the form is representable.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::event::Micros;

/// Relative tolerance below which `|n3| / |n|` counts as zero.
pub const N3_TOLERANCE: f64 = 1e-9;

/// Normalized determinant below which the normal equations are singular.
const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PlaneError {
    #[error("plane fit is degenerate")]
    Degenerate,
    #[error("plane is parallel to the time axis; velocity undefined")]
    UndefinedVelocity,
    #[error("a zero velocity component gives an unbounded lifetime")]
    ZeroVelocity,
}

/// Normal of the SAE tangent plane, in `(pixels, pixels, seconds)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneNormal {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl PlaneNormal {
    pub fn new(n1: f64, n2: f64, n3: f64) -> Self {
        Self { n1, n2, n3 }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.n1, self.n2, self.n3)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.n1 * k, self.n2 * k, self.n3 * k)
    }

    fn time_component_vanishes(&self) -> bool {
        let norm = self.norm();
        !(norm > 0.0) || self.n3.abs() <= N3_TOLERANCE * norm
    }
}

/// Origin of the local coordinates a plane was fitted in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalFrame {
    pub cx: i64,
    pub cy: i64,
    /// Time origin in microseconds; may be negative early in a recording.
    pub t0: i64,
}

impl LocalFrame {
    /// Frame for an event at `(x, y, t)` with a past window of `dt_max`.
    pub fn for_event(x: u16, y: u16, t: Micros, dt_max: Micros) -> Self {
        Self {
            cx: x as i64,
            cy: y as i64,
            t0: t as i64 - dt_max as i64,
        }
    }

    pub fn to_local(&self, x: u16, y: u16, t: Micros) -> [f64; 3] {
        [
            (x as i64 - self.cx) as f64,
            (y as i64 - self.cy) as f64,
            (t as i64 - self.t0) as f64 * 1e-6,
        ]
    }

    /// Predicted absolute timestamp (microseconds) of `normal`'s plane at pixel `(x, y)`.
    pub fn predict_micros(&self, normal: &PlaneNormal, x: u16, y: u16) -> Result<f64, PlaneError> {
        let local = predict_timestamp(normal, self, (x as f64, y as f64))?;
        Ok(self.t0 as f64 + local * 1e6)
    }
}

/// Least-squares solution of `A n = 1` where row `i` of `A` is `points[i]`.
pub fn fit_plane_least_squares(points: &[[f64; 3]]) -> Result<PlaneNormal, PlaneError> {
    if points.len() < 3 {
        return Err(PlaneError::Degenerate);
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in points {
        let row = Vector3::new(p[0], p[1], p[2]);
        ata += row * row.transpose();
        atb += row;
    }
    solve_normal_equations(&ata, &atb)
}

fn solve_normal_equations(ata: &Matrix3<f64>, atb: &Vector3<f64>) -> Result<PlaneNormal, PlaneError> {
    // Jacobi-scaled determinant: 1 for orthogonal columns, 0 for rank deficiency.
    let diag = ata.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(PlaneError::Degenerate);
    }
    let scale = Vector3::new(diag[0].sqrt().recip(), diag[1].sqrt().recip(), diag[2].sqrt().recip());
    let scaled = Matrix3::from_diagonal(&scale) * ata * Matrix3::from_diagonal(&scale);
    if scaled.determinant() < SINGULAR_TOLERANCE {
        return Err(PlaneError::Degenerate);
    }
    let y = scaled
        .cholesky()
        .ok_or(PlaneError::Degenerate)?
        .solve(&scale.component_mul(atb));
    let n = scale.component_mul(&y);
    let normal = PlaneNormal::new(n[0], n[1], n[2]);
    if !n.iter().all(|v| v.is_finite()) || normal.time_component_vanishes() {
        return Err(PlaneError::Degenerate);
    }
    Ok(normal)
}

/// Euclidean distance from `p` to the plane `n . p = 1`.
pub fn point_plane_distance(n: &PlaneNormal, p: &[f64; 3]) -> f64 {
    let dot = n.n1 * p[0] + n.n2 * p[1] + n.n3 * p[2];
    (dot - 1.0).abs() / n.norm()
}

/// Lifetime in seconds: `|sqrt(n1^2 + n2^2) / n3|`.
pub fn lifetime_from_normal(n: &PlaneNormal) -> Result<f64, PlaneError> {
    if n.time_component_vanishes() {
        return Err(PlaneError::UndefinedVelocity);
    }
    Ok((n.n1.hypot(n.n2) / n.n3).abs())
}

/// Lifetime in seconds from optical-flow velocities `v = 1 / dS`; an infinite
/// component contributes nothing.
pub fn lifetime_from_velocity(vx: f64, vy: f64) -> Result<f64, PlaneError> {
    if vx == 0.0 || vy == 0.0 || vx.is_nan() || vy.is_nan() {
        return Err(PlaneError::ZeroVelocity);
    }
    Ok(vx.recip().hypot(vy.recip()))
}

/// Solves `n1 x + n2 y + n3 t = 1` for `t` (seconds, relative to `frame.t0`)
/// at pixel `p`, expressed in absolute sensor coordinates.
pub fn predict_timestamp(n: &PlaneNormal, frame: &LocalFrame, p: (f64, f64)) -> Result<f64, PlaneError> {
    if n.time_component_vanishes() {
        return Err(PlaneError::UndefinedVelocity);
    }
    let x = p.0 - frame.cx as f64;
    let y = p.1 - frame.cy as f64;
    Ok((1.0 - n.n1 * x - n.n2 * y) / n.n3)
}

/// `|t_actual - t_predicted|` in microseconds.
pub fn prediction_error(t_actual: f64, t_predicted: f64) -> f64 {
    (t_actual - t_predicted).abs()
}
