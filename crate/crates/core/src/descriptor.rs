//! Distance-transform orientation descriptors over active-event masks.
//!
//! For every pixel of an `N`x`N` window the vector to the nearest active pixel
//! is found (separately per polarity) and its orientation is counted into one
//! of twelve 30° bins. The descriptor is the resulting 24-bin histogram.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::event::{AugmentedEvent, Micros, Polarity, SensorGeometry};

pub const ORIENTATION_BINS: usize = 12;
pub const DESCRIPTOR_LEN: usize = 2 * ORIENTATION_BINS;

/// 12 ON-polarity orientation bins followed by 12 OFF-polarity bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct EventDescriptor {
    pub bins: [u16; DESCRIPTOR_LEN],
}

impl EventDescriptor {
    pub fn l1_norm(&self) -> u32 {
        self.bins.iter().map(|&b| b as u32).sum()
    }

    pub fn l1_distance(&self, other: &Self) -> u32 {
        self.bins
            .iter()
            .zip(&other.bins)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs())
            .sum()
    }

    pub fn polarity_bins(&self, polarity: Polarity) -> &[u16] {
        let start = polarity.index() * ORIENTATION_BINS;
        &self.bins[start..start + ORIENTATION_BINS]
    }
}

const ON_BIT: u8 = 1;
const OFF_BIT: u8 = 2;

fn polarity_bit(polarity: Polarity) -> u8 {
    match polarity {
        Polarity::On => ON_BIT,
        Polarity::Off => OFF_BIT,
    }
}

/// Binary images of active ON and OFF pixels at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
    set: Vec<u32>,
    counts: [usize; 2],
}

impl ActiveMask {
    pub fn new(geometry: &SensorGeometry) -> Self {
        Self {
            width: geometry.width as usize,
            height: geometry.height as usize,
            bits: vec![0; geometry.pixel_count()],
            set: Vec::new(),
            counts: [0; 2],
        }
    }

    /// Mask of the events active at `t_now`.
    pub fn from_events(events: &[AugmentedEvent], t_now: Micros, geometry: &SensorGeometry) -> Self {
        let mut mask = Self::new(geometry);
        for e in events.iter().filter(|e| e.is_active_at(t_now)) {
            mask.set(e.event.x as usize, e.event.y as usize, e.event.polarity);
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn clear(&mut self) {
        for &idx in &self.set {
            self.bits[idx as usize] = 0;
        }
        self.set.clear();
        self.counts = [0; 2];
    }

    pub fn set(&mut self, x: usize, y: usize, polarity: Polarity) {
        let idx = y * self.width + x;
        let bit = polarity_bit(polarity);
        if self.bits[idx] == 0 {
            self.set.push(idx as u32);
        }
        if self.bits[idx] & bit == 0 {
            self.bits[idx] |= bit;
            self.counts[polarity.index()] += 1;
        }
    }

    pub fn is_active(&self, x: i64, y: i64, polarity: Polarity) -> bool {
        self.in_bounds(x, y) && self.bits[y as usize * self.width + x as usize] & polarity_bit(polarity) != 0
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.counts[polarity.index()]
    }

    fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

/// Angle of `(dx, dy)` in `[0, 2pi)`, counter-clockwise from +x.
fn angle(dx: i32, dy: i32) -> f64 {
    let a = (dy as f64).atan2(dx as f64);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Orientation bin `k` covers `[30k, 30(k+1))` degrees; `None` for the zero vector.
pub fn orientation_bin(dx: i32, dy: i32) -> Option<usize> {
    match (dx, dy) {
        (0, 0) => None,
        // Axis directions sit exactly on bin edges; keep them out of float rounding.
        (_, 0) => Some(if dx > 0 { 0 } else { 6 }),
        (0, _) => Some(if dy > 0 { 3 } else { 9 }),
        _ => {
            let bin = (angle(dx, dy) / (PI / 6.0)).floor() as usize;
            Some(bin.min(ORIENTATION_BINS - 1))
        }
    }
}

/// Tie-break order between candidate vectors: distance, then angle, then dx.
fn compare_offsets(a: (i32, i32), b: (i32, i32)) -> Ordering {
    let da = a.0 * a.0 + a.1 * a.1;
    let db = b.0 * b.0 + b.1 * b.1;
    da.cmp(&db)
        .then_with(|| angle(a.0, a.1).total_cmp(&angle(b.0, b.1)))
        .then_with(|| a.0.cmp(&b.0))
}

/// Window-limited nearest-active search with a precomputed visiting order.
#[derive(Debug, Clone)]
pub struct NearestVectorSearch {
    radius: i32,
    offsets: Vec<(i32, i32)>,
}

impl NearestVectorSearch {
    /// Searches the square `[-radius, radius]^2` around each query pixel.
    pub fn new(radius: usize) -> Self {
        let r = radius as i32;
        let mut offsets: Vec<(i32, i32)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
        offsets.sort_by(|&a, &b| compare_offsets(a, b));
        Self { radius: r, offsets }
    }

    pub fn radius(&self) -> usize {
        self.radius as usize
    }

    pub fn find(&self, mask: &ActiveMask, polarity: Polarity, x: i64, y: i64) -> Option<(i32, i32)> {
        if mask.count(polarity) == 0 {
            return None;
        }
        self.offsets
            .iter()
            .copied()
            .find(|&(dx, dy)| mask.is_active(x + dx as i64, y + dy as i64, polarity))
    }
}

/// Offset from `pixel` to its nearest active pixel of `polarity` within
/// `search_radius` (Chebyshev box), `(0, 0)` if the pixel itself is active.
pub fn nearest_active_vector(
    mask: &ActiveMask,
    polarity: Polarity,
    pixel: (i64, i64),
    search_radius: usize,
) -> Option<(i32, i32)> {
    assert!(search_radius >= 1, "search radius must be at least 1");
    NearestVectorSearch::new(search_radius).find(mask, polarity, pixel.0, pixel.1)
}

/// Histogram of nearest-active orientations over the `n`x`n` window at `center`.
pub fn compute_descriptor(mask: &ActiveMask, center: (i64, i64), n: usize) -> EventDescriptor {
    assert!(n >= 3 && n % 2 == 1, "descriptor window must be odd and >= 3");
    descriptor_with(&NearestVectorSearch::new(n), mask, center, n)
}

fn descriptor_with(search: &NearestVectorSearch, mask: &ActiveMask, center: (i64, i64), n: usize) -> EventDescriptor {
    let mut desc = EventDescriptor::default();
    let half = (n / 2) as i64;
    for y in center.1 - half..=center.1 + half {
        for x in center.0 - half..=center.0 + half {
            if !mask.in_bounds(x, y) {
                continue;
            }
            for polarity in [Polarity::On, Polarity::Off] {
                if let Some(bin) = search.find(mask, polarity, x, y).and_then(|(dx, dy)| orientation_bin(dx, dy)) {
                    desc.bins[polarity.index() * ORIENTATION_BINS + bin] += 1;
                }
            }
        }
    }
    desc
}

/// Random access to descriptors of one sensor at one instant.
pub trait DescriptorLookup {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn descriptor(&mut self, x: usize, y: usize) -> EventDescriptor;
}

/// Descriptors for every pixel of a mask, computed eagerly.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    width: usize,
    height: usize,
    data: Vec<EventDescriptor>,
}

impl DescriptorField {
    pub fn compute(mask: &ActiveMask, n: usize) -> Self {
        let search = NearestVectorSearch::new(n);
        let mut data = Vec::with_capacity(mask.width * mask.height);
        for y in 0..mask.height as i64 {
            for x in 0..mask.width as i64 {
                data.push(descriptor_with(&search, mask, (x, y), n));
            }
        }
        Self {
            width: mask.width,
            height: mask.height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> EventDescriptor) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> &EventDescriptor {
        &self.data[y * self.width + x]
    }
}

impl DescriptorLookup for &DescriptorField {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn descriptor(&mut self, x: usize, y: usize) -> EventDescriptor {
        *self.get(x, y)
    }
}

const NO_BIN: u8 = u8::MAX;

/// Memo tables for lazily computed descriptors, invalidated by bumping a
/// generation counter instead of clearing.
#[derive(Debug, Clone)]
pub struct DescriptorMemo {
    generation: u32,
    nearest: Vec<(u32, [u8; 2])>,
    descriptors: Vec<(u32, EventDescriptor)>,
}

impl DescriptorMemo {
    pub fn new(geometry: &SensorGeometry) -> Self {
        Self {
            generation: 1,
            nearest: vec![(0, [NO_BIN; 2]); geometry.pixel_count()],
            descriptors: vec![(0, EventDescriptor::default()); geometry.pixel_count()],
        }
    }

    pub fn invalidate(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.nearest.iter_mut().for_each(|c| c.0 = 0);
            self.descriptors.iter_mut().for_each(|c| c.0 = 0);
            self.generation = 1;
        }
    }
}

/// Lazily evaluated descriptor field over a mask.
pub struct LazyDescriptors<'a> {
    pub mask: &'a ActiveMask,
    pub memo: &'a mut DescriptorMemo,
    pub search: &'a NearestVectorSearch,
    pub window: usize,
}

impl LazyDescriptors<'_> {
    fn bins_at(&mut self, x: usize, y: usize) -> [u8; 2] {
        let idx = y * self.mask.width + x;
        let generation = self.memo.generation;
        let cell = &mut self.memo.nearest[idx];
        if cell.0 != generation {
            let mut bins = [NO_BIN; 2];
            for polarity in [Polarity::On, Polarity::Off] {
                if let Some(bin) = self
                    .search
                    .find(self.mask, polarity, x as i64, y as i64)
                    .and_then(|(dx, dy)| orientation_bin(dx, dy))
                {
                    bins[polarity.index()] = bin as u8;
                }
            }
            *cell = (generation, bins);
        }
        cell.1
    }
}

impl DescriptorLookup for LazyDescriptors<'_> {
    fn width(&self) -> usize {
        self.mask.width
    }

    fn height(&self) -> usize {
        self.mask.height
    }

    fn descriptor(&mut self, x: usize, y: usize) -> EventDescriptor {
        let idx = y * self.mask.width + x;
        if self.memo.descriptors[idx].0 == self.memo.generation {
            return self.memo.descriptors[idx].1;
        }
        let half = (self.window / 2) as i64;
        let mut desc = EventDescriptor::default();
        let y_lo = (y as i64 - half).max(0) as usize;
        let y_hi = (y as i64 + half).min(self.mask.height as i64 - 1) as usize;
        let x_lo = (x as i64 - half).max(0) as usize;
        let x_hi = (x as i64 + half).min(self.mask.width as i64 - 1) as usize;
        for wy in y_lo..=y_hi {
            for wx in x_lo..=x_hi {
                let bins = self.bins_at(wx, wy);
                for (p, &bin) in bins.iter().enumerate() {
                    if bin != NO_BIN {
                        desc.bins[p * ORIENTATION_BINS + bin as usize] += 1;
                    }
                }
            }
        }
        self.memo.descriptors[idx] = (self.memo.generation, desc);
        desc
    }
}
