//! Event data model and time-window slicing.

use thiserror::Error;

/// Positive polarity (brightness increase).
pub const POSITIVE: i8 = 1;
/// Negative polarity (brightness decrease).
pub const NEGATIVE: i8 = -1;

/// A single sensor readout `(x, y, p, t)`.
///
/// `t` is in microseconds on the camera timeline. `p` is `+1` or `-1` for a
/// well-formed event; other values are reported by [`validate_events`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub const fn new(t: u64, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }

    #[inline]
    pub fn is_positive(&self) -> bool {
        self.p > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("sensor geometry must be non-empty, got {width}x{height}")]
    EmptyGeometry { width: u16, height: u16 },
    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("event {index} has timestamp {t} earlier than its predecessor {prev}")]
    OutOfOrder { index: usize, t: u64, prev: u64 },
    #[error("event {index} has polarity {p}, expected +1 or -1")]
    BadPolarity { index: usize, p: i8 },
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("window stride must be positive")]
    ZeroStride,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, StreamError> {
        if width == 0 || height == 0 {
            return Err(StreamError::EmptyGeometry { width, height });
        }
        Ok(SensorGeometry { width, height })
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Row-major linear index of a pixel.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

/// Violation counts for a sequence of events. `first_*` is the index of the
/// first violating record of each kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub total: usize,
    pub out_of_bounds: usize,
    pub out_of_order: usize,
    pub bad_polarity: usize,
    pub first_out_of_bounds: Option<usize>,
    pub first_out_of_order: Option<usize>,
    pub first_bad_polarity: Option<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.out_of_bounds == 0 && self.out_of_order == 0 && self.bad_polarity == 0
    }

    pub fn violations(&self) -> usize {
        self.out_of_bounds + self.out_of_order + self.bad_polarity
    }
}

/// Reports every invariant violation without failing.
///
/// An event is out of order when its timestamp is smaller than the one
/// immediately before it.
pub fn validate_events(geometry: SensorGeometry, events: &[Event]) -> ValidationReport {
    let mut report = ValidationReport {
        total: events.len(),
        ..Default::default()
    };
    let mut prev: Option<u64> = None;
    for (i, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            report.out_of_bounds += 1;
            report.first_out_of_bounds.get_or_insert(i);
        }
        if e.p != POSITIVE && e.p != NEGATIVE {
            report.bad_polarity += 1;
            report.first_bad_polarity.get_or_insert(i);
        }
        if let Some(p) = prev {
            if e.t < p {
                report.out_of_order += 1;
                report.first_out_of_order.get_or_insert(i);
            }
        }
        prev = Some(e.t);
    }
    report
}

/// Time-ordered, bounds-checked sequence of events. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, StreamError> {
        let report = validate_events(geometry, &events);
        // Report the earliest violation of any kind.
        let mut first: Option<(usize, StreamError)> = None;
        let mut consider = |idx: Option<usize>, f: &dyn Fn(usize) -> StreamError| {
            if let Some(i) = idx {
                if first.as_ref().map_or(true, |(j, _)| i < *j) {
                    first = Some((i, f(i)));
                }
            }
        };
        consider(report.first_out_of_bounds, &|i| StreamError::OutOfBounds {
            index: i,
            x: events[i].x,
            y: events[i].y,
            width: geometry.width,
            height: geometry.height,
        });
        consider(report.first_bad_polarity, &|i| StreamError::BadPolarity {
            index: i,
            p: events[i].p,
        });
        consider(report.first_out_of_order, &|i| StreamError::OutOfOrder {
            index: i,
            t: events[i].t,
            prev: events[i - 1].t,
        });
        match first {
            Some((_, err)) => Err(err),
            None => Ok(EventStream { geometry, events }),
        }
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn first_timestamp(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    /// The whole stream as a single window `[t_start, t_end)`.
    pub fn window(&self, t_start: u64, t_end: u64) -> EventWindow<'_> {
        let lo = self.events.partition_point(|e| e.t < t_start);
        let hi = self.events.partition_point(|e| e.t < t_end);
        EventWindow {
            t_start,
            t_end,
            geometry: self.geometry,
            events: &self.events[lo..hi.max(lo)],
        }
    }
}

/// Events with `t_start <= t < t_end`, borrowed from an [`EventStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventWindow<'a> {
    pub t_start: u64,
    pub t_end: u64,
    pub geometry: SensorGeometry,
    pub events: &'a [Event],
}

impl<'a> EventWindow<'a> {
    /// Window over an arbitrary event slice. The caller guarantees ordering
    /// and bounds; events outside `[t_start, t_end)` are not filtered.
    pub fn from_slice(
        geometry: SensorGeometry,
        t_start: u64,
        t_end: u64,
        events: &'a [Event],
    ) -> Self {
        EventWindow {
            t_start,
            t_end,
            geometry,
            events,
        }
    }

    #[inline]
    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Slices a stream into windows aligned to its first event.
pub fn slice_windows(
    stream: &EventStream,
    window_us: u64,
    stride_us: u64,
) -> Result<Vec<EventWindow<'_>>, StreamError> {
    slice_windows_from(stream, None, window_us, stride_us)
}

/// Slices a stream into half-open windows `[s, s + window_us)` with starts
/// `origin, origin + stride_us, ...` while `s <= t_last`.
///
/// `origin` defaults to the first event timestamp. Empty windows are kept so
/// window indices line up with label sequences.
pub fn slice_windows_from(
    stream: &EventStream,
    origin: Option<u64>,
    window_us: u64,
    stride_us: u64,
) -> Result<Vec<EventWindow<'_>>, StreamError> {
    if window_us == 0 {
        return Err(StreamError::ZeroWindow);
    }
    if stride_us == 0 {
        return Err(StreamError::ZeroStride);
    }
    let (Some(first), Some(last)) = (stream.first_timestamp(), stream.last_timestamp()) else {
        return Ok(Vec::new());
    };
    let origin = origin.unwrap_or(first);
    let events = stream.events();
    let mut out = Vec::new();
    let mut start = origin;
    // Both cursors only move forward since starts are increasing.
    let mut lo = events.partition_point(|e| e.t < start);
    let mut hi = lo;
    while start <= last {
        let end = start.saturating_add(window_us);
        while lo < events.len() && events[lo].t < start {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < events.len() && events[hi].t < end {
            hi += 1;
        }
        out.push(EventWindow {
            t_start: start,
            t_end: end,
            geometry: stream.geometry(),
            events: &events[lo..hi],
        });
        match start.checked_add(stride_us) {
            Some(s) => start = s,
            None => break,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> SensorGeometry {
        SensorGeometry::new(16, 16).unwrap()
    }

    fn stream_at(ts: &[u64]) -> EventStream {
        let events = ts.iter().map(|&t| Event::new(t, 1, 1, POSITIVE)).collect();
        EventStream::new(geom(), events).unwrap()
    }

    #[test]
    fn empty_stream_validates_clean() {
        let r = validate_events(geom(), &[]);
        assert_eq!(r, ValidationReport::default());
        assert!(r.is_valid());
    }

    #[test]
    fn out_of_bounds_at_width() {
        let r = validate_events(geom(), &[Event::new(0, 16, 0, 1)]);
        assert_eq!(r.out_of_bounds, 1);
        assert_eq!(r.first_out_of_bounds, Some(0));
    }

    #[test]
    fn out_of_order_reported_at_index() {
        let ev: Vec<_> = [10, 5, 20].iter().map(|&t| Event::new(t, 0, 0, 1)).collect();
        let r = validate_events(geom(), &ev);
        assert_eq!(r.out_of_order, 1);
        assert_eq!(r.first_out_of_order, Some(1));
        assert!(matches!(
            EventStream::new(geom(), ev),
            Err(StreamError::OutOfOrder { index: 1, .. })
        ));
    }

    #[test]
    fn bad_polarity_counted() {
        let ev = vec![Event::new(0, 0, 0, 1), Event::new(1, 0, 0, 0), Event::new(2, 0, 0, 3)];
        let r = validate_events(geom(), &ev);
        assert_eq!(r.bad_polarity, 2);
        assert_eq!(r.first_bad_polarity, Some(1));
    }

    #[test]
    fn zero_geometry_rejected() {
        assert!(SensorGeometry::new(0, 5).is_err());
    }

    #[test]
    fn windows_with_stride_equal_to_length() {
        let s = stream_at(&[0, 50, 100, 150]);
        let w = slice_windows(&s, 100, 100).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].len(), 2);
        assert_eq!(w[1].len(), 2);
        assert_eq!((w[1].t_start, w[1].t_end), (100, 200));
    }

    #[test]
    fn overlapping_windows_match_brute_force() {
        let ts = [0u64, 50, 100, 150];
        let s = stream_at(&ts);
        let w = slice_windows(&s, 100, 50).unwrap();
        let starts: Vec<u64> = w.iter().map(|w| w.t_start).collect();
        assert_eq!(starts, vec![0, 50, 100, 150]);
        for win in &w {
            let expect: Vec<u64> = ts
                .iter()
                .copied()
                .filter(|&t| win.t_start <= t && t < win.t_end)
                .collect();
            let got: Vec<u64> = win.events.iter().map(|e| e.t).collect();
            assert_eq!(got, expect);
        }
        assert_eq!(w[0].len(), 2);
        assert_eq!(w[3].len(), 1);
    }

    #[test]
    fn empty_stream_no_windows() {
        let s = EventStream::empty(geom());
        assert!(slice_windows(&s, 100, 100).unwrap().is_empty());
    }

    #[test]
    fn zero_window_or_stride_rejected() {
        let s = stream_at(&[0]);
        assert_eq!(slice_windows(&s, 0, 1), Err(StreamError::ZeroWindow));
        assert_eq!(slice_windows(&s, 1, 0), Err(StreamError::ZeroStride));
    }

    #[test]
    fn windows_align_to_first_event_and_keep_gaps() {
        let s = stream_at(&[1000, 1010, 1350]);
        let w = slice_windows(&s, 100, 100).unwrap();
        let counts: Vec<usize> = w.iter().map(|w| w.len()).collect();
        assert_eq!(counts, vec![2, 0, 0, 1]);
        assert_eq!(w[0].t_start, 1000);
    }

    #[test]
    fn explicit_origin() {
        let s = stream_at(&[1000, 1010, 1350]);
        let w = slice_windows_from(&s, Some(0), 500, 500).unwrap();
        let counts: Vec<usize> = w.iter().map(|w| w.len()).collect();
        assert_eq!(counts, vec![0, 0, 3]);
    }

    #[test]
    fn single_timestamp_stream_covered() {
        let s = stream_at(&[7, 7, 7]);
        let w = slice_windows(&s, 10, 10).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 3);
    }
}
