//! Text formats for event streams, augmented events and ground truth.
//!
//! Event lines are `t_sec x y polarity`; augmented lines append
//! `tau_sec disparity flag` (or just `disparity` for fixed-interval runs).
//! Times carry exactly six fractional digits so microseconds round-trip.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::event::{AugmentedEvent, Event, Lifetime, Micros, Polarity, SensorGeometry, Side};
use crate::synth::GroundTruth;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed entry {content:?}: {reason}")]
    MalformedLine {
        line: usize,
        content: String,
        reason: String,
    },
    #[error("line {line}: timestamp {t} us precedes the previous {previous} us")]
    NonMonotonic { line: usize, t: Micros, previous: Micros },
    #[error("line {line}: pixel ({x}, {y}) outside the {width}x{height} sensor")]
    OutOfBounds {
        line: usize,
        x: u64,
        y: u64,
        width: u32,
        height: u32,
    },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the error is about file contents rather than file access.
    pub fn is_input_format(&self) -> bool {
        !matches!(self, FormatError::Io { .. })
    }
}

/// `t` microseconds as decimal seconds with six fractional digits.
pub fn format_seconds(t: Micros) -> String {
    format!("{}.{:06}", t / 1_000_000, t % 1_000_000)
}

/// Parses non-negative decimal seconds into microseconds, rounding half up
/// beyond six fractional digits.
pub fn parse_seconds(s: &str) -> Option<Micros> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: Micros = if int.is_empty() { 0 } else { int.parse().ok()? };
    let mut micros: Micros = 0;
    for i in 0..6 {
        micros = micros * 10 + frac.as_bytes().get(i).map_or(0, |b| (b - b'0') as Micros);
    }
    let round_up = frac.as_bytes().get(6).is_some_and(|&b| b >= b'5');
    whole.checked_mul(1_000_000)?.checked_add(micros + round_up as Micros)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

/// Non-empty, non-comment lines with 1-based numbers and split fields.
fn data_lines(text: &str) -> Lines<'_> {
    Lines {
        inner: text.lines().enumerate(),
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some((i + 1, line, line.split_whitespace().collect()));
        }
        None
    }
}

fn malformed(line: usize, content: &str, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedLine {
        line,
        content: content.to_string(),
        reason: reason.into(),
    }
}

/// Parses the leading `t x y polarity` fields of a line.
fn parse_event_fields(
    line: usize,
    content: &str,
    fields: &[&str],
    side: Side,
    geometry: &SensorGeometry,
) -> Result<Event, FormatError> {
    let t = parse_seconds(fields[0]).ok_or_else(|| malformed(line, content, "bad timestamp"))?;
    let coord = |s: &str| s.parse::<u64>().map_err(|_| malformed(line, content, "bad pixel coordinate"));
    let (x, y) = (coord(fields[1])?, coord(fields[2])?);
    let polarity = fields[3]
        .parse::<u8>()
        .ok()
        .and_then(Polarity::from_bit)
        .ok_or_else(|| malformed(line, content, "polarity must be 0 or 1"))?;
    if x >= geometry.width as u64 || y >= geometry.height as u64 {
        return Err(FormatError::OutOfBounds {
            line,
            x,
            y,
            width: geometry.width,
            height: geometry.height,
        });
    }
    Ok(Event::new(x as u16, y as u16, t, polarity, side))
}

fn check_order(line: usize, t: Micros, previous: &mut Option<Micros>) -> Result<(), FormatError> {
    if let Some(p) = *previous {
        if t < p {
            return Err(FormatError::NonMonotonic { line, t, previous: p });
        }
    }
    *previous = Some(t);
    Ok(())
}

/// Parses an event stream; timestamps must be non-decreasing.
pub fn parse_events(text: &str, side: Side, geometry: &SensorGeometry) -> Result<Vec<Event>, FormatError> {
    let mut out = Vec::new();
    let mut previous = None;
    for (line, content, fields) in data_lines(text) {
        if fields.len() != 4 {
            return Err(malformed(line, content, format!("expected 4 fields, found {}", fields.len())));
        }
        let e = parse_event_fields(line, content, &fields, side, geometry)?;
        check_order(line, e.t, &mut previous)?;
        out.push(e);
    }
    Ok(out)
}

pub fn format_events(events: &[Event]) -> String {
    let mut s = String::with_capacity(events.len() * 24);
    for e in events {
        let _ = writeln!(s, "{} {} {} {}", format_seconds(e.t), e.x, e.y, e.polarity.bit());
    }
    s
}

pub fn read_event_file(path: &Path, side: Side, geometry: &SensorGeometry) -> Result<Vec<Event>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_events(&text, side, geometry)
}

pub fn write_event_file(path: &Path, events: &[Event]) -> Result<(), FormatError> {
    fs::write(path, format_events(events)).map_err(|e| FormatError::io(path, e))
}

/// One line of an augmented-event file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedRecord {
    pub event: Event,
    /// `None` in fixed-interval files, which carry no lifetime column.
    pub lifetime: Option<Lifetime>,
    pub disparity: Option<u16>,
}

impl From<&AugmentedEvent> for AugmentedRecord {
    fn from(a: &AugmentedEvent) -> Self {
        Self {
            event: a.event,
            lifetime: Some(a.lifetime),
            disparity: a.disparity,
        }
    }
}

/// Augmented events plus `# key: value` metadata from the file header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentedFile {
    pub metadata: Vec<(String, String)>,
    pub records: Vec<AugmentedRecord>,
}

impl AugmentedFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Whether the file is the fixed-interval variant (no lifetime column).
    pub fn is_fixed(&self) -> bool {
        self.records.first().is_some_and(|r| r.lifetime.is_none()) || self.meta("format") == Some("fixed")
    }
}

fn format_disparity(d: Option<u16>) -> String {
    d.map_or_else(|| "-".to_string(), |d| d.to_string())
}

/// Serializes augmented events; `fixed` selects the 5-column variant
/// `t_sec x y polarity disparity`.
pub fn format_augmented(records: &[AugmentedRecord], metadata: &[(String, String)], fixed: bool) -> String {
    let mut s = String::with_capacity(records.len() * 40);
    let _ = writeln!(s, "# format: {}", if fixed { "fixed" } else { "augmented" });
    for (k, v) in metadata {
        let _ = writeln!(s, "# {k}: {v}");
    }
    for r in records {
        let e = &r.event;
        let _ = write!(s, "{} {} {} {}", format_seconds(e.t), e.x, e.y, e.polarity.bit());
        if !fixed {
            match r.lifetime {
                Some(Lifetime::Micros(tau)) => {
                    let _ = write!(s, " {} {} ok", format_seconds(tau), format_disparity(r.disparity));
                }
                _ => {
                    let _ = write!(s, " - {} noise", format_disparity(r.disparity));
                }
            }
        } else {
            let _ = write!(s, " {}", format_disparity(r.disparity));
        }
        s.push('\n');
    }
    s
}

pub fn parse_augmented(text: &str, side: Side, geometry: &SensorGeometry) -> Result<AugmentedFile, FormatError> {
    let mut file = AugmentedFile::default();
    for raw in text.lines() {
        let Some(comment) = raw.trim().strip_prefix('#') else {
            continue;
        };
        if let Some((k, v)) = comment.split_once(':') {
            file.metadata.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut previous = None;
    for (line, content, fields) in data_lines(text) {
        if fields.len() != 7 && fields.len() != 5 {
            return Err(malformed(line, content, format!("expected 7 or 5 fields, found {}", fields.len())));
        }
        let event = parse_event_fields(line, content, &fields, side, geometry)?;
        check_order(line, event.t, &mut previous)?;
        let disparity_field = if fields.len() == 7 { fields[5] } else { fields[4] };
        let disparity = match disparity_field {
            "-" => None,
            d => Some(d.parse::<u16>().map_err(|_| malformed(line, content, "bad disparity"))?),
        };
        let lifetime = if fields.len() == 5 {
            None
        } else {
            Some(match (fields[4], fields[6]) {
                ("-", "noise") => Lifetime::Noise,
                (tau, "ok") => {
                    Lifetime::Micros(parse_seconds(tau).ok_or_else(|| malformed(line, content, "bad lifetime"))?)
                }
                _ => return Err(malformed(line, content, "flag must be ok (with lifetime) or noise (with -)")),
            })
        };
        file.records.push(AugmentedRecord {
            event,
            lifetime,
            disparity,
        });
    }
    Ok(file)
}

pub fn write_augmented_file(
    path: &Path,
    events: &[AugmentedEvent],
    metadata: &[(String, String)],
    fixed: bool,
) -> Result<(), FormatError> {
    let records: Vec<AugmentedRecord> = events.iter().map(AugmentedRecord::from).collect();
    fs::write(path, format_augmented(&records, metadata, fixed)).map_err(|e| FormatError::io(path, e))
}

pub fn read_augmented_file(path: &Path, side: Side, geometry: &SensorGeometry) -> Result<AugmentedFile, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_augmented(&text, side, geometry)
}

/// Ground-truth sidecar: `index tau_us disparity flag` per event.
pub fn format_truth(truth: &[GroundTruth]) -> String {
    let mut s = String::from("# index tau_us disparity flag\n");
    for (i, g) in truth.iter().enumerate() {
        let tau = g.lifetime_us.map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
        let flag = if g.noise { "noise" } else { "ok" };
        let _ = writeln!(s, "{i} {tau} {} {flag}", format_disparity(g.disparity));
    }
    s
}

pub fn parse_truth(text: &str) -> Result<Vec<GroundTruth>, FormatError> {
    let mut out = Vec::new();
    for (line, content, fields) in data_lines(text) {
        if fields.len() != 4 || fields[0].parse::<usize>().ok() != Some(out.len()) {
            return Err(malformed(line, content, "expected `index tau_us disparity flag` in index order"));
        }
        let lifetime_us = match fields[1] {
            "-" => None,
            t => Some(t.parse::<f64>().map_err(|_| malformed(line, content, "bad lifetime"))?),
        };
        let disparity = match fields[2] {
            "-" => None,
            d => Some(d.parse::<u16>().map_err(|_| malformed(line, content, "bad disparity"))?),
        };
        let noise = match fields[3] {
            "noise" => true,
            "ok" => false,
            _ => return Err(malformed(line, content, "flag must be ok or noise")),
        };
        out.push(GroundTruth {
            lifetime_us,
            disparity,
            noise,
        });
    }
    Ok(out)
}

pub fn write_truth_file(path: &Path, truth: &[GroundTruth]) -> Result<(), FormatError> {
    fs::write(path, format_truth(truth)).map_err(|e| FormatError::io(path, e))
}

pub fn read_truth_file(path: &Path) -> Result<Vec<GroundTruth>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_truth(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> SensorGeometry {
        SensorGeometry::davis240()
    }

    #[test]
    fn parses_example_line() {
        let ev = parse_events("0.000100 12 34 1\n", Side::Left, &geom()).unwrap();
        assert_eq!(ev, vec![Event::new(12, 34, 100, Polarity::On, Side::Left)]);
    }

    #[test]
    fn rejects_out_of_bounds() {
        let err = parse_events("0.1 300 10 1", Side::Left, &geom()).unwrap_err();
        assert!(matches!(err, FormatError::OutOfBounds { line: 1, x: 300, .. }), "{err}");
    }

    #[test]
    fn rejects_malformed_and_unordered() {
        let err = parse_events("# header\n0.1 1 1 1\n0.2 1 x 1\n", Side::Left, &geom()).unwrap_err();
        assert!(matches!(err, FormatError::MalformedLine { line: 3, .. }), "{err}");
        let err = parse_events("0.1 1 1 2\n", Side::Left, &geom()).unwrap_err();
        assert!(matches!(err, FormatError::MalformedLine { line: 1, .. }));
        let err = parse_events("0.2 1 1 1\n\n0.1 1 1 1\n", Side::Left, &geom()).unwrap_err();
        assert!(matches!(err, FormatError::NonMonotonic { line: 3, t: 100_000, previous: 200_000 }), "{err}");
        assert!(parse_events("-0.1 1 1 1", Side::Left, &geom()).is_err());
        assert!(parse_events("1e-3 1 1 1", Side::Left, &geom()).is_err());
    }

    #[test]
    fn seconds_parse_exactly() {
        assert_eq!(parse_seconds("0.000001"), Some(1));
        assert_eq!(parse_seconds("12"), Some(12_000_000));
        assert_eq!(parse_seconds(".5"), Some(500_000));
        assert_eq!(parse_seconds("0.0000015"), Some(2));
        assert_eq!(parse_seconds("0.0000014"), Some(1));
        assert_eq!(parse_seconds("."), None);
        assert_eq!(format_seconds(1_234_567), "1.234567");
    }

    #[test]
    fn augmented_format_examples() {
        let e = Event::new(3, 4, 1_500_000, Polarity::Off, Side::Right);
        let records = [
            AugmentedRecord { event: e, lifetime: Some(Lifetime::Micros(10_000)), disparity: Some(5) },
            AugmentedRecord { event: e, lifetime: Some(Lifetime::Noise), disparity: None },
        ];
        let text = format_augmented(&records, &[("side".into(), "right".into())], false);
        assert_eq!(text, "# format: augmented\n# side: right\n1.500000 3 4 0 0.010000 5 ok\n1.500000 3 4 0 - - noise\n");
        let parsed = parse_augmented(&text, Side::Right, &geom()).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(parsed.meta("side"), Some("right"));

        let fixed = format_augmented(&records[..1], &[], true);
        assert_eq!(fixed, "# format: fixed\n1.500000 3 4 0 5\n");
        let parsed = parse_augmented(&fixed, Side::Right, &geom()).unwrap();
        assert!(parsed.is_fixed());
        assert_eq!(parsed.records[0].lifetime, None);
    }

    #[test]
    fn truth_round_trip() {
        let truth = vec![
            GroundTruth { lifetime_us: Some(10_000.0), disparity: Some(5), noise: false },
            GroundTruth::NOISE,
        ];
        assert_eq!(parse_truth(&format_truth(&truth)).unwrap(), truth);
    }

    #[test]
    fn thousand_random_events_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut t = 0;
        let events: Vec<Event> = (0..1000)
            .map(|_| {
                t += rng.random_range(0..5000);
                let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
                Event::new(rng.random_range(0..240), rng.random_range(0..180), t, p, Side::Left)
            })
            .collect();
        assert_eq!(parse_events(&format_events(&events), Side::Left, &geom()).unwrap(), events);
    }

    fn arb_record() -> impl Strategy<Value = AugmentedRecord> {
        (0u16..240, 0u16..180, any::<bool>(), prop::option::of(0u64..10_000_000), prop::option::of(0u16..64))
            .prop_map(|(x, y, on, tau, d)| AugmentedRecord {
                event: Event::new(x, y, 0, if on { Polarity::On } else { Polarity::Off }, Side::Left),
                lifetime: Some(tau.map_or(Lifetime::Noise, Lifetime::Micros)),
                disparity: d,
            })
    }

    proptest! {
        #[test]
        fn augmented_round_trip(
            mut records in prop::collection::vec(arb_record(), 0..50),
            gaps in prop::collection::vec(0u64..3_000_000, 50),
        ) {
            let mut t = 0;
            for (r, g) in records.iter_mut().zip(gaps) {
                t += g;
                r.event.t = t;
            }
            let text = format_augmented(&records, &[], false);
            prop_assert_eq!(parse_augmented(&text, Side::Left, &geom()).unwrap().records, records);
        }

        #[test]
        fn seconds_round_trip(t in 0u64..u64::MAX / 2_000_000) {
            prop_assert_eq!(parse_seconds(&format_seconds(t)), Some(t));
        }
    }
}
