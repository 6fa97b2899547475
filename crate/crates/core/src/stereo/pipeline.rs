//! Per-event stereo processing loop.
//!
//! Events from both sensors are consumed in timestamp order by one writer.
//! In coupled mode an event whose counterpart stream is already complete up to
//! its timestamp is matched first, and on a confident match it inherits the
//! median lifetime of the matched window; only unmatched events pay for a
//! plane fit. Decoupled mode always fits and matches afterwards.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::descriptor::{ActiveMask, DescriptorMemo, LazyDescriptors, NearestVectorSearch};
use crate::event::{
    AugmentedEvent, Event, EventError, LifetimeSource, Micros, Polarity, SensorGeometry, Side,
    SurfaceOfActiveEvents,
};
use crate::lifetime::{estimate_lifetime, event_seed, PlanePredictor, RansacParams};

use super::cost::{aggregate_cost, estimate_disparity, median_lifetime, CostVolume};
use super::StereoParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Lifetime transferred through stereo matches; plane fit as fallback.
    Coupled,
    /// Plane fit for every event, disparity afterwards.
    Decoupled,
    /// Constant accumulation interval instead of lifetimes.
    FixedInterval,
}

/// Counters for one sensor. All counts only ever grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SideStats {
    pub events: usize,
    /// RANSAC invocations (predictor skips excluded).
    pub plane_fits: usize,
    /// Lifetimes reused from a cached plane.
    pub predicted: usize,
    /// Lifetimes inherited through a stereo match.
    pub stereo_lifetimes: usize,
    /// Events with a confident disparity.
    pub matches: usize,
    pub noise: usize,
    /// Time spent assigning lifetimes (plane fits and medians).
    pub lifetime_time: Duration,
}

#[derive(Debug, Clone, Copy)]
struct Stored {
    x: u16,
    y: u16,
    t: Micros,
    tau: Micros,
    polarity: Polarity,
}

type MaskKey = (Micros, u64, Option<(u16, u16, Polarity)>);

#[derive(Debug, Clone)]
struct SideState {
    sae: SurfaceOfActiveEvents,
    predictor: PlanePredictor,
    /// Lifetimed events of the last `dt_max`.
    store: VecDeque<Stored>,
    /// Latest plane-derived timestamp per pixel (`Micros::MAX` if none) and
    /// its lifetime; the source of matched medians.
    latest_t: Vec<Micros>,
    latest_tau: Vec<Micros>,
    version: u64,
    /// All events with timestamps up to this value have been delivered.
    complete_through: Option<Micros>,
    mask: ActiveMask,
    mask_key: Option<MaskKey>,
    memo: DescriptorMemo,
    stats: SideStats,
}

impl SideState {
    fn new(geometry: SensorGeometry) -> Self {
        Self {
            sae: SurfaceOfActiveEvents::new(geometry),
            predictor: PlanePredictor::new(geometry),
            store: VecDeque::new(),
            latest_t: vec![Micros::MAX; geometry.pixel_count()],
            latest_tau: vec![0; geometry.pixel_count()],
            version: 0,
            complete_through: None,
            mask: ActiveMask::new(&geometry),
            mask_key: None,
            memo: DescriptorMemo::new(&geometry),
            stats: SideStats::default(),
        }
    }

    /// Rebuilds the active mask for `t_now` unless it is already current.
    fn prepare_mask(&mut self, t_now: Micros, forced: Option<(u16, u16, Polarity)>) {
        let key = (t_now, self.version, forced);
        if self.mask_key == Some(key) {
            return;
        }
        self.mask.clear();
        for s in &self.store {
            if s.t <= t_now && t_now <= s.t.saturating_add(s.tau) {
                self.mask.set(s.x as usize, s.y as usize, s.polarity);
            }
        }
        if let Some((x, y, p)) = forced {
            self.mask.set(x as usize, y as usize, p);
        }
        self.memo.invalidate();
        self.mask_key = Some(key);
    }

    fn record(&mut self, out: &AugmentedEvent, width: usize, dt_max: Micros) {
        let e = &out.event;
        if let Some(tau) = out.lifetime.micros() {
            self.store.push_back(Stored {
                x: e.x,
                y: e.y,
                t: e.t,
                tau,
                polarity: e.polarity,
            });
            if matches!(out.source, LifetimeSource::PlaneFit | LifetimeSource::Predicted) {
                let i = e.y as usize * width + e.x as usize;
                self.latest_t[i] = e.t;
                self.latest_tau[i] = tau;
            }
            self.version += 1;
        }
        while self.store.front().is_some_and(|s| s.t + dt_max < e.t) {
            self.store.pop_front();
        }
    }
}

/// Single-writer state of the stereo event loop.
#[derive(Debug, Clone)]
pub struct StereoState {
    geometry: SensorGeometry,
    ransac: RansacParams,
    stereo: StereoParams,
    accumulation_interval: Micros,
    seed: u64,
    search: NearestVectorSearch,
    sides: [SideState; 2],
    scratch: Vec<Micros>,
}

impl StereoState {
    pub fn new(
        geometry: SensorGeometry,
        ransac: RansacParams,
        stereo: StereoParams,
        accumulation_interval: Micros,
        seed: u64,
    ) -> Self {
        Self {
            geometry,
            ransac,
            stereo,
            accumulation_interval,
            seed,
            search: NearestVectorSearch::new(stereo.descriptor_window),
            sides: [SideState::new(geometry), SideState::new(geometry)],
            scratch: Vec::new(),
        }
    }

    pub fn stats(&self, side: Side) -> &SideStats {
        &self.sides[side.index()].stats
    }

    /// Declares that every event of `side` with timestamp `<= t` has been
    /// delivered (`None`: nothing is known to be complete).
    pub fn set_complete_through(&mut self, side: Side, t: Option<Micros>) {
        self.sides[side.index()].complete_through = t;
    }

    fn counterpart_available(&self, e: &Event) -> bool {
        self.sides[e.side.other().index()]
            .complete_through
            .is_some_and(|f| f >= e.t)
    }

    /// Processes the next event of `e.side` in arrival order.
    pub fn process_event(&mut self, e: &Event, mode: PipelineMode) -> Result<AugmentedEvent, EventError> {
        self.geometry.check(e)?;
        let s = e.side.index();
        self.sides[s].sae.update(e)?;
        self.sides[s].stats.events += 1;
        let available = self.counterpart_available(e);

        let mut out = match mode {
            PipelineMode::Coupled => {
                let disparity = if available { self.match_event(e) } else { None };
                let inherited = disparity.and_then(|d| {
                    let start = Instant::now();
                    let tau = self.matched_median(e, d);
                    self.sides[s].stats.lifetime_time += start.elapsed();
                    tau
                });
                let mut out = match inherited {
                    Some(tau) => {
                        self.sides[s].stats.stereo_lifetimes += 1;
                        AugmentedEvent::with_lifetime(*e, tau, LifetimeSource::StereoMedian)
                    }
                    None => self.plane_lifetime(e),
                };
                out.disparity = disparity;
                out
            }
            PipelineMode::Decoupled => {
                let mut out = self.plane_lifetime(e);
                out.disparity = if available { self.match_event(e) } else { None };
                out
            }
            PipelineMode::FixedInterval => {
                let mut out = AugmentedEvent::with_lifetime(*e, self.accumulation_interval, LifetimeSource::FixedInterval);
                out.disparity = if available { self.match_event(e) } else { None };
                out
            }
        };
        if out.lifetime.is_noise() {
            out.disparity = None;
        }

        let side = &mut self.sides[s];
        side.stats.matches += out.disparity.is_some() as usize;
        side.stats.noise += out.lifetime.is_noise() as usize;
        side.record(&out, self.geometry.width as usize, self.ransac.dt_max);
        Ok(out)
    }

    fn plane_lifetime(&mut self, e: &Event) -> AugmentedEvent {
        let side = &mut self.sides[e.side.index()];
        let start = Instant::now();
        let outcome = estimate_lifetime(&side.sae, &mut side.predictor, e, &self.ransac, event_seed(self.seed, e));
        side.stats.lifetime_time += start.elapsed();
        if outcome.fit_invoked() {
            side.stats.plane_fits += 1;
        } else {
            side.stats.predicted += 1;
        }
        outcome.to_augmented(*e)
    }

    fn match_event(&mut self, e: &Event) -> Option<u16> {
        let [left, right] = &mut self.sides;
        let (own, other) = match e.side {
            Side::Left => (left, right),
            Side::Right => (right, left),
        };
        other.prepare_mask(e.t, None);
        if other.mask.count(Polarity::On) + other.mask.count(Polarity::Off) == 0 {
            // Every disparity would cost the same; the ratio test must fail.
            return None;
        }
        own.prepare_mask(e.t, Some((e.x, e.y, e.polarity)));

        let sp = &self.stereo;
        let mut reference = LazyDescriptors {
            mask: &own.mask,
            memo: &mut own.memo,
            search: &self.search,
            window: sp.descriptor_window,
        };
        let mut target = LazyDescriptors {
            mask: &other.mask,
            memo: &mut other.memo,
            search: &self.search,
            window: sp.descriptor_window,
        };
        let p = (e.x as usize, e.y as usize);
        let radius = sp.aggregation_iterations * (sp.aggregation_region / 2);
        let volume = CostVolume::build(&mut reference, &mut target, e.side, p, radius, sp.max_disparity, sp.cost_window);
        let aggregated = aggregate_cost(&volume, sp.aggregation_region, sp.aggregation_iterations);
        estimate_disparity(&aggregated, p, sp)
    }

    /// Median plane-derived lifetime in the window M around the matched pixel.
    fn matched_median(&mut self, e: &Event, d: u16) -> Option<Micros> {
        let other = &self.sides[e.side.other().index()];
        let cx = e.x as i64 + e.side.counterpart_offset(d as i32) as i64;
        let half = (self.stereo.match_window / 2) as i64;
        let width = self.geometry.width as usize;
        let x0 = (cx - half).max(0) as usize;
        let x1 = (cx + half).min(width as i64 - 1);
        let y0 = (e.y as i64 - half).max(0) as usize;
        let y1 = (e.y as i64 + half).min(self.geometry.height as i64 - 1);
        self.scratch.clear();
        if x1 < x0 as i64 || y1 < y0 as i64 {
            return None;
        }
        let oldest = e.t.saturating_sub(self.ransac.dt_max);
        for y in y0..=y1 as usize {
            let row = y * width;
            let ts = &other.latest_t[row + x0..=row + x1 as usize];
            let taus = &other.latest_tau[row + x0..=row + x1 as usize];
            for (&t, &tau) in ts.iter().zip(taus) {
                if t <= e.t && t >= oldest {
                    self.scratch.push(tau);
                }
            }
        }
        median_lifetime(&mut self.scratch).ok()
    }
}

/// Augmented streams of both sensors, in input order, with their counters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub left: Vec<AugmentedEvent>,
    pub right: Vec<AugmentedEvent>,
    pub left_stats: SideStats,
    pub right_stats: SideStats,
}

impl PipelineOutput {
    pub fn side(&self, side: Side) -> &[AugmentedEvent] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn stats(&self, side: Side) -> &SideStats {
        match side {
            Side::Left => &self.left_stats,
            Side::Right => &self.right_stats,
        }
    }

    pub fn total_plane_fits(&self) -> usize {
        self.left_stats.plane_fits + self.right_stats.plane_fits
    }

    pub fn lifetime_time(&self) -> Duration {
        self.left_stats.lifetime_time + self.right_stats.lifetime_time
    }
}

fn check_side(events: &[Event], side: Side) -> Result<(), EventError> {
    match events.iter().find(|e| e.side != side) {
        Some(e) => Err(EventError::Geometry(format!(
            "event at ({}, {}) t={} belongs to the {} stream but was given as {side}",
            e.x, e.y, e.t, e.side
        ))),
        None => Ok(()),
    }
}

/// Runs both streams through `state`, interleaving by timestamp (left first
/// on equal timestamps). Each stream must be sorted by time.
pub fn run_pipeline(
    state: &mut StereoState,
    left: &[Event],
    right: &[Event],
    mode: PipelineMode,
) -> Result<PipelineOutput, EventError> {
    check_side(left, Side::Left)?;
    check_side(right, Side::Right)?;
    let mut out = PipelineOutput {
        left: Vec::with_capacity(left.len()),
        right: Vec::with_capacity(right.len()),
        ..Default::default()
    };
    let (mut i, mut j) = (0, 0);
    while i < left.len() || j < right.len() {
        let take_left = j >= right.len() || (i < left.len() && left[i].t <= right[j].t);
        let e = if take_left { &left[i] } else { &right[j] };
        // The other stream is complete up to just before its next event.
        let (next_other, other_side) = if take_left { (right.get(j), Side::Right) } else { (left.get(i), Side::Left) };
        let frontier = match next_other {
            Some(n) => n.t.checked_sub(1),
            None => Some(Micros::MAX),
        };
        state.set_complete_through(other_side, frontier);
        let augmented = state.process_event(e, mode)?;
        if take_left {
            out.left.push(augmented);
            i += 1;
        } else {
            out.right.push(augmented);
            j += 1;
        }
    }
    out.left_stats = state.stats(Side::Left).clone();
    out.right_stats = state.stats(Side::Right).clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifetime::estimate_monocular;

    fn geometry() -> SensorGeometry {
        SensorGeometry::new(60, 30, 16).unwrap()
    }

    fn state(mode_seed: u64) -> StereoState {
        let stereo = StereoParams {
            max_disparity: 16,
            ..StereoParams::default()
        };
        StereoState::new(geometry(), RansacParams::default(), stereo, 10_000, mode_seed)
    }

    /// Vertical ON edge at 100 px/s, disparity `d`.
    fn edge(d: u16) -> (Vec<Event>, Vec<Event>) {
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for x in 0..60u16 {
            for y in 0..30u16 {
                let t = x as u64 * 10_000;
                left.push(Event::new(x, y, t, Polarity::On, Side::Left));
                if x >= d {
                    right.push(Event::new(x - d, y, t, Polarity::On, Side::Right));
                }
            }
        }
        (left, right)
    }

    #[test]
    fn empty_right_stream_equals_monocular() {
        let (left, _) = edge(0);
        let mono = estimate_monocular(&left, geometry(), &RansacParams::default(), 3).unwrap();
        for mode in [PipelineMode::Coupled, PipelineMode::Decoupled] {
            let out = run_pipeline(&mut state(3), &left, &[], mode).unwrap();
            assert_eq!(out.left, mono);
            assert!(out.right.is_empty());
        }
    }

    #[test]
    fn right_events_inherit_lifetimes() {
        let (left, right) = edge(4);
        let coupled = run_pipeline(&mut state(1), &left, &right, PipelineMode::Coupled).unwrap();
        let decoupled = run_pipeline(&mut state(1), &left, &right, PipelineMode::Decoupled).unwrap();
        assert_eq!(coupled.right_stats.plane_fits + coupled.right_stats.predicted + coupled.right_stats.stereo_lifetimes, right.len());
        assert!(coupled.right_stats.stereo_lifetimes > right.len() / 2);
        assert!(coupled.total_plane_fits() <= decoupled.total_plane_fits());
        for a in coupled.right.iter().filter(|a| a.source == LifetimeSource::StereoMedian) {
            assert_eq!(a.lifetime.micros(), Some(10_000));
        }
        let matched: Vec<_> = coupled.right.iter().filter_map(|a| a.disparity).collect();
        let exact = matched.iter().filter(|&&d| d == 4).count();
        assert!(exact * 10 >= matched.len() * 8, "{exact} of {}", matched.len());
    }

    #[test]
    fn fixed_interval_assigns_constant_lifetime() {
        let (left, right) = edge(2);
        let out = run_pipeline(&mut state(0), &left, &right, PipelineMode::FixedInterval).unwrap();
        assert!(out.left.iter().chain(&out.right).all(|a| a.lifetime.micros() == Some(10_000)));
        assert_eq!(out.total_plane_fits(), 0);
    }

    #[test]
    fn rejects_mislabeled_streams() {
        let (left, _) = edge(0);
        assert!(run_pipeline(&mut state(0), &[], &left, PipelineMode::Coupled).is_err());
    }

    #[test]
    fn store_evicts_after_dt_max() {
        let mut st = state(0);
        let (left, _) = edge(0);
        for e in &left {
            st.process_event(e, PipelineMode::FixedInterval).unwrap();
        }
        let last = left.last().unwrap().t;
        assert!(st.sides[0].store.iter().all(|s| s.t + st.ransac.dt_max >= last));
    }
}
