//! Matching cost, cost aggregation and winner-takes-all disparity selection.

use thiserror::Error;

use crate::descriptor::{DescriptorLookup, EventDescriptor};
use crate::event::{Micros, Side};

use super::StereoParams;

/// Cost of matching the `window`x`window` patch around `p` on the reference
/// sensor against the patch shifted by disparity `d` on the target sensor.
///
/// Window pixels outside the sensor are skipped; pixels whose shifted
/// counterpart falls outside the sensor cost the L1 norm of their descriptor.
pub fn matching_cost<R, T>(reference: &mut R, target: &mut T, reference_side: Side, p: (usize, usize), d: u32, window: usize) -> f64
where
    R: DescriptorLookup,
    T: DescriptorLookup,
{
    let half = (window / 2) as i64;
    let offset = reference_side.counterpart_offset(d as i32) as i64;
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let mut cost = 0u64;
    for y in p.1 as i64 - half..=p.1 as i64 + half {
        for x in p.0 as i64 - half..=p.0 as i64 + half {
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let desc = reference.descriptor(x as usize, y as usize);
            let xt = x + offset;
            cost += if xt < 0 || xt >= target.width() as i64 {
                desc.l1_norm() as u64
            } else {
                desc.l1_distance(&target.descriptor(xt as usize, y as usize)) as u64
            };
        }
    }
    cost as f64
}

/// Costs over a rectangle of pixels for disparities `0..=max_disparity`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    disparities: usize,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn zeros(x0: usize, y0: usize, width: usize, height: usize, disparities: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
            disparities,
            data: vec![0.0; width * height * disparities],
        }
    }

    pub fn from_fn(width: usize, height: usize, disparities: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut v = Self::zeros(0, 0, width, height, disparities);
        for y in 0..height {
            for x in 0..width {
                for d in 0..disparities {
                    v.data[(y * width + x) * disparities + d] = f(x, y, d);
                }
            }
        }
        v
    }

    pub fn origin(&self) -> (usize, usize) {
        (self.x0, self.y0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn disparities(&self) -> usize {
        self.disparities
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.width && y < self.y0 + self.height
    }

    fn offset(&self, x: usize, y: usize) -> usize {
        debug_assert!(self.contains(x, y));
        ((y - self.y0) * self.width + (x - self.x0)) * self.disparities
    }

    /// Cost at absolute pixel `(x, y)` and disparity `d`.
    pub fn get(&self, x: usize, y: usize, d: usize) -> f64 {
        self.data[self.offset(x, y) + d]
    }

    pub fn costs_at(&self, x: usize, y: usize) -> &[f64] {
        let o = self.offset(x, y);
        &self.data[o..o + self.disparities]
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut v = self.clone();
        v.data.iter_mut().for_each(|c| *c *= k);
        v
    }

    /// Entrywise `a * self + b * other`; both volumes must share their extent.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!((self.x0, self.y0, self.width, self.height, self.disparities), (other.x0, other.y0, other.width, other.height, other.disparities));
        let mut v = self.clone();
        for (c, o) in v.data.iter_mut().zip(&other.data) {
            *c = a * *c + b * o;
        }
        v
    }

    /// Matching costs for every pixel within `radius` of `center` (clipped at
    /// the sensor border), equal entry by entry to [`matching_cost`].
    pub fn build<R, T>(
        reference: &mut R,
        target: &mut T,
        reference_side: Side,
        center: (usize, usize),
        radius: usize,
        max_disparity: u32,
        window: usize,
    ) -> Self
    where
        R: DescriptorLookup,
        T: DescriptorLookup,
    {
        let (sw, sh) = (reference.width(), reference.height());
        let half = window / 2;
        let qx0 = center.0.saturating_sub(radius);
        let qy0 = center.1.saturating_sub(radius);
        let qx1 = (center.0 + radius).min(sw - 1);
        let qy1 = (center.1 + radius).min(sh - 1);
        let disparities = max_disparity as usize + 1;
        let mut volume = Self::zeros(qx0, qy0, qx1 - qx0 + 1, qy1 - qy0 + 1, disparities);

        // Pixel support of all windows, clipped to the sensor.
        let px0 = qx0.saturating_sub(half);
        let py0 = qy0.saturating_sub(half);
        let px1 = (qx1 + half).min(sw - 1);
        let py1 = (qy1 + half).min(sh - 1);
        let (pw, ph) = (px1 - px0 + 1, py1 - py0 + 1);

        let mut ref_desc = Vec::with_capacity(pw * ph);
        for y in py0..=py1 {
            for x in px0..=px1 {
                ref_desc.push(reference.descriptor(x, y));
            }
        }
        let ref_norm: Vec<u32> = ref_desc.iter().map(EventDescriptor::l1_norm).collect();

        // Target columns reachable by any disparity.
        let tw = target.width() as i64;
        let (lo_shift, hi_shift) = match reference_side {
            Side::Left => (-(max_disparity as i64), 0),
            Side::Right => (0, max_disparity as i64),
        };
        let tx0 = (px0 as i64 + lo_shift).max(0);
        let tx1 = (px1 as i64 + hi_shift).min(tw - 1);
        let tcols = (tx1 - tx0 + 1).max(0) as usize;
        let mut tgt_desc = Vec::with_capacity(tcols * ph);
        for y in py0..=py1 {
            for x in tx0..=tx1 {
                tgt_desc.push(target.descriptor(x as usize, y));
            }
        }

        // Summed-area table of per-pixel differences, one disparity at a time.
        let mut integral = vec![0u64; (pw + 1) * (ph + 1)];
        for d in 0..disparities {
            let offset = reference_side.counterpart_offset(d as i32) as i64;
            for row in 0..ph {
                let mut running = 0u64;
                for col in 0..pw {
                    let i = row * pw + col;
                    let xt = (px0 + col) as i64 + offset;
                    let diff = if xt < 0 || xt >= tw {
                        ref_norm[i]
                    } else {
                        ref_desc[i].l1_distance(&tgt_desc[row * tcols + (xt - tx0) as usize])
                    };
                    running += diff as u64;
                    integral[(row + 1) * (pw + 1) + col + 1] = integral[row * (pw + 1) + col + 1] + running;
                }
            }
            for qy in qy0..=qy1 {
                let y_lo = qy.saturating_sub(half).max(py0) - py0;
                let y_hi = (qy + half).min(py1) - py0 + 1;
                for qx in qx0..=qx1 {
                    let x_lo = qx.saturating_sub(half).max(px0) - px0;
                    let x_hi = (qx + half).min(px1) - px0 + 1;
                    let sum = integral[y_hi * (pw + 1) + x_hi] + integral[y_lo * (pw + 1) + x_lo]
                        - integral[y_lo * (pw + 1) + x_hi]
                        - integral[y_hi * (pw + 1) + x_lo];
                    let o = volume.offset(qx, qy);
                    volume.data[o + d] = sum as f64;
                }
            }
        }
        volume
    }
}

/// Iterated box aggregation: each pass replaces every cost by the sum over the
/// `region`x`region` neighborhood (clipped to the volume), per disparity.
pub fn aggregate_cost(volume: &CostVolume, region: usize, iterations: usize) -> CostVolume {
    let mut current = volume.clone();
    let mut next = volume.clone();
    let half = region / 2;
    let (w, h, nd) = (volume.width, volume.height, volume.disparities);
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let dst = (y * w + x) * nd;
                next.data[dst..dst + nd].fill(0.0);
                for qy in y.saturating_sub(half)..=(y + half).min(h - 1) {
                    for qx in x.saturating_sub(half)..=(x + half).min(w - 1) {
                        let src = (qy * w + qx) * nd;
                        for d in 0..nd {
                            next.data[dst + d] += current.data[src + d];
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    current
}

/// Argmin over disparities with ties going to the smaller disparity.
/// Returns `(disparity, best, second_best)`; `second_best` is the minimum over
/// all other disparities (infinite when there is only one).
pub fn winner_takes_all(costs: &[f64]) -> (usize, f64, f64) {
    assert!(!costs.is_empty(), "empty cost vector");
    let mut best = 0;
    for (d, &c) in costs.iter().enumerate() {
        if c < costs[best] {
            best = d;
        }
    }
    let second = costs
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != best)
        .map(|(_, &c)| c)
        .fold(f64::INFINITY, f64::min);
    (best, costs[best], second)
}

/// Winner-takes-all disparity at `p`, or `None` when the match is not
/// confident: the runner-up is within `confidence_ratio` of the winner, or
/// every cost is zero.
pub fn estimate_disparity(aggregated: &CostVolume, p: (usize, usize), params: &StereoParams) -> Option<u16> {
    let costs = aggregated.costs_at(p.0, p.1);
    let (d, best, second) = winner_takes_all(costs);
    if second == 0.0 || second < params.confidence_ratio * best {
        return None;
    }
    Some(d as u16)
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no lifetimed events in the matched window")]
pub struct EmptyWindow;

/// Lower median of `lifetimes` (reorders the slice).
pub fn median_lifetime(lifetimes: &mut [Micros]) -> Result<Micros, EmptyWindow> {
    if lifetimes.is_empty() {
        return Err(EmptyWindow);
    }
    let mid = (lifetimes.len() - 1) / 2;
    let (_, median, _) = lifetimes.select_nth_unstable(mid);
    Ok(*median)
}
