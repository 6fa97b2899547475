//! Gradient frames and disparity maps as ASCII graymaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::event::{AugmentedEvent, Micros, Polarity, SensorGeometry};

use super::format::FormatError;

pub const BACKGROUND: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Plain (P2) PGM text.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for y in 0..self.height {
            let row: Vec<String> = self.row(y).iter().map(u8::to_string).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn parse_pgm(text: &str) -> Option<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next()? != "P2" {
            return None;
        }
        let width: usize = tokens.next()?.parse().ok()?;
        let height: usize = tokens.next()?.parse().ok()?;
        if tokens.next()?.parse::<u32>().ok()? != 255 {
            return None;
        }
        let pixels: Vec<u8> = tokens.map(|t| t.parse().ok()).collect::<Option<_>>()?;
        (pixels.len() == width * height).then_some(Self { width, height, pixels })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.to_pgm()).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Events active at `t_now`, with the latest-starting event winning each
/// pixel (ON on equal starts), indexed by pixel.
fn winners(events: &[AugmentedEvent], t_now: Micros, geometry: &SensorGeometry) -> Vec<Option<AugmentedEvent>> {
    let mut best: Vec<Option<AugmentedEvent>> = vec![None; geometry.pixel_count()];
    for a in events.iter().filter(|a| a.is_active_at(t_now)) {
        let cell = &mut best[geometry.index(a.event.x as usize, a.event.y as usize)];
        let replace = match cell {
            None => true,
            Some(cur) => {
                (a.event.t, a.event.polarity == Polarity::On) > (cur.event.t, cur.event.polarity == Polarity::On)
            }
        };
        if replace {
            *cell = Some(*a);
        }
    }
    best
}

/// Sharp gradient frame: 255 for active ON, 0 for active OFF, 128 elsewhere.
pub fn render_active_frame(events: &[AugmentedEvent], t_now: Micros, geometry: &SensorGeometry) -> GrayImage {
    let pixels = winners(events, t_now, geometry)
        .into_iter()
        .map(|w| match w {
            Some(a) if a.event.polarity == Polarity::On => 255,
            Some(_) => 0,
            None => BACKGROUND,
        })
        .collect();
    GrayImage {
        width: geometry.width as usize,
        height: geometry.height as usize,
        pixels,
    }
}

/// Disparity of active matched events scaled to `0..=255` over
/// `max_disparity`; everything else is 0.
pub fn render_disparity_map(
    events: &[AugmentedEvent],
    t_now: Micros,
    geometry: &SensorGeometry,
    max_disparity: u32,
) -> GrayImage {
    let scale = |d: u16| ((d as f64 * 255.0 / max_disparity.max(1) as f64).round()).min(255.0) as u8;
    let pixels = winners(events, t_now, geometry)
        .into_iter()
        .map(|w| w.and_then(|a| a.disparity).map_or(0, scale))
        .collect();
    GrayImage {
        width: geometry.width as usize,
        height: geometry.height as usize,
        pixels,
    }
}

pub fn write_disparity_map(
    events: &[AugmentedEvent],
    t_now: Micros,
    geometry: &SensorGeometry,
    max_disparity: u32,
    path: &Path,
) -> Result<(), FormatError> {
    render_disparity_map(events, t_now, geometry, max_disparity).write_pgm(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, LifetimeSource, Side};

    fn aug(x: u16, y: u16, t: Micros, tau: Micros, p: Polarity) -> AugmentedEvent {
        AugmentedEvent::with_lifetime(Event::new(x, y, t, p, Side::Left), tau, LifetimeSource::PlaneFit)
    }

    fn geom() -> SensorGeometry {
        SensorGeometry::new(40, 8, 32).unwrap()
    }

    #[test]
    fn empty_frame_is_background() {
        let img = render_active_frame(&[], 0, &geom());
        assert!(img.pixels.iter().all(|&p| p == BACKGROUND));
    }

    #[test]
    fn single_on_event() {
        let img = render_active_frame(&[aug(5, 5, 100, 50, Polarity::On)], 120, &geom());
        assert_eq!(img.get(5, 5), 255);
        assert_eq!(img.pixels.iter().filter(|&&p| p != BACKGROUND).count(), 1);
        let late = render_active_frame(&[aug(5, 5, 100, 50, Polarity::On)], 151, &geom());
        assert!(late.pixels.iter().all(|&p| p == BACKGROUND));
    }

    #[test]
    fn later_start_wins_and_on_breaks_ties() {
        let events = [aug(1, 1, 100, 500, Polarity::On), aug(1, 1, 200, 500, Polarity::Off)];
        assert_eq!(render_active_frame(&events, 300, &geom()).get(1, 1), 0);
        let events = [aug(1, 1, 200, 500, Polarity::Off), aug(1, 1, 200, 500, Polarity::On)];
        assert_eq!(render_active_frame(&events, 300, &geom()).get(1, 1), 255);
    }

    #[test]
    fn disparity_scaling() {
        assert!(render_disparity_map(&[aug(1, 1, 0, 10, Polarity::On)], 5, &geom(), 32)
            .pixels
            .iter()
            .all(|&p| p == 0));
        let mut a = aug(2, 3, 0, 10, Polarity::On);
        a.disparity = Some(5);
        let img = render_disparity_map(&[a], 5, &geom(), 32);
        assert_eq!(img.get(2, 3), 40);
        assert_eq!(img.pixels.iter().filter(|&&p| p != 0).count(), 1);
    }

    #[test]
    fn pgm_round_trip() {
        let mut img = GrayImage::filled(3, 2, 7);
        img.pixels[4] = 255;
        let text = img.to_pgm();
        assert!(text.starts_with("P2\n3 2\n255\n"));
        assert_eq!(GrayImage::parse_pgm(&text), Some(img));
    }
}
