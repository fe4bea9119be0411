//! Dense image representations of an event window: E2F, LNES, TS and the
//! three-channel sub-window time surface (3C).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventWindow, SensorGeometry};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    E2f,
    Lnes,
    Ts,
    #[serde(rename = "3c")]
    ThreeChannel,
}

impl Representation {
    pub fn channels(self) -> usize {
        match self {
            Representation::E2f | Representation::Ts => 1,
            Representation::Lnes => 2,
            Representation::ThreeChannel => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::E2f => "e2f",
            Representation::Lnes => "lnes",
            Representation::Ts => "ts",
            Representation::ThreeChannel => "3c",
        }
    }

    /// Decay used when none is given: a third of the integration span, which
    /// is `τ/3` for TS and `τ/9` for each 3C sub-window.
    pub fn default_decay_us(self, window_us: u64) -> Option<f64> {
        match self {
            Representation::Ts => Some(window_us as f64 / 3.0),
            Representation::ThreeChannel => Some(window_us as f64 / 9.0),
            _ => None,
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "e2f" => Ok(Representation::E2f),
            "lnes" => Ok(Representation::Lnes),
            "ts" => Ok(Representation::Ts),
            "3c" => Ok(Representation::ThreeChannel),
            other => Err(format!("unknown representation {other:?}")),
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReprError {
    #[error("decay constant must be positive and finite, got {0}")]
    NonPositiveDecay(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub repr: Representation,
    pub t_start: u64,
    pub t_end: u64,
    pub decay_us: Option<f64>,
}

/// `channels x height x width` values in `[0, 1]`, channel-major planes of
/// row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame<T> {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<T>,
    pub meta: FrameMeta,
}

impl<T: Real> EventFrame<T> {
    pub fn zeros(channels: usize, geometry: SensorGeometry, meta: FrameMeta) -> Self {
        let (w, h) = (geometry.width as usize, geometry.height as usize);
        EventFrame {
            channels,
            width: w,
            height: h,
            data: vec![T::zero(); channels * w * h],
            meta,
        }
    }

    /// Panics if `data.len() != channels * width * height`.
    pub fn from_parts(
        channels: usize,
        width: usize,
        height: usize,
        data: Vec<T>,
        meta: FrameMeta,
    ) -> Self {
        assert_eq!(data.len(), channels * width * height, "frame size mismatch");
        EventFrame {
            channels,
            width,
            height,
            data,
            meta,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }
}

fn meta(window: &EventWindow<'_>, repr: Representation, decay: Option<f64>) -> FrameMeta {
    FrameMeta {
        repr,
        t_start: window.t_start,
        t_end: window.t_end,
        decay_us: decay,
    }
}

fn check_decay<T: Real>(decay_us: T) -> Result<(), ReprError> {
    if decay_us > T::zero() && decay_us.is_finite() {
        Ok(())
    } else {
        Err(ReprError::NonPositiveDecay(decay_us.as_f64()))
    }
}

/// Per-pixel event counts accumulated incrementally, for streams too large
/// to hold in memory.
#[derive(Debug, Clone)]
pub struct CountAccumulator {
    geometry: SensorGeometry,
    counts: Vec<u32>,
}

impl CountAccumulator {
    pub fn new(geometry: SensorGeometry) -> Self {
        CountAccumulator {
            geometry,
            counts: vec![0; geometry.pixel_count()],
        }
    }

    #[inline]
    pub fn add(&mut self, events: &[Event]) {
        let w = self.geometry.width as usize;
        for e in events {
            let i = e.y as usize * w + e.x as usize;
            self.counts[i] = self.counts[i].saturating_add(1);
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Max-normalized single-channel frame.
    pub fn to_frame<T: Real>(&self, meta: FrameMeta) -> EventFrame<T> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let data = if max == 0 {
            vec![T::zero(); self.counts.len()]
        } else {
            let m = T::lit(max as f64);
            self.counts.iter().map(|&c| T::lit(c as f64) / m).collect()
        };
        EventFrame::from_parts(
            1,
            self.geometry.width as usize,
            self.geometry.height as usize,
            data,
            meta,
        )
    }
}

/// Event counts per pixel (both polarities), divided by the maximum count.
pub fn build_e2f<T: Real>(window: &EventWindow<'_>) -> EventFrame<T> {
    let mut acc = CountAccumulator::new(window.geometry);
    acc.add(window.events);
    acc.to_frame(meta(window, Representation::E2f, None))
}

/// Two channels (positive, negative) holding `(t - t_start) / τ` of the
/// latest event of that polarity at each pixel.
pub fn build_lnes<T: Real>(window: &EventWindow<'_>) -> EventFrame<T> {
    let mut frame = EventFrame::zeros(2, window.geometry, meta(window, Representation::Lnes, None));
    let plane = window.geometry.pixel_count();
    let t0 = window.t_start;
    let tau = T::from_micros(window.duration());
    for e in window.events {
        let c = if e.is_positive() { 0 } else { 1 };
        let i = c * plane + window.geometry.index(e.x, e.y);
        frame.data[i] = T::from_micros(e.t - t0) / tau;
    }
    frame
}

/// Writes `exp(-(t_ref - t_last) / decay)` of each pixel's latest event into
/// `out`; pixels without events are left untouched.
fn time_surface_into<T: Real>(
    events: &[Event],
    geometry: SensorGeometry,
    t_ref: u64,
    decay_us: T,
    out: &mut [T],
) {
    const NONE: u64 = u64::MAX;
    let mut last = vec![NONE; geometry.pixel_count()];
    for e in events {
        last[geometry.index(e.x, e.y)] = e.t;
    }
    for (v, &t) in out.iter_mut().zip(&last) {
        if t != NONE {
            let age = T::from_micros(t_ref.saturating_sub(t));
            *v = (-age / decay_us).exp();
        }
    }
}

/// Exponentially decayed recency of each pixel's latest event, polarity
/// discarded, referenced to the window end.
pub fn build_ts<T: Real>(
    window: &EventWindow<'_>,
    decay_us: T,
) -> Result<EventFrame<T>, ReprError> {
    check_decay(decay_us)?;
    let mut frame = EventFrame::zeros(
        1,
        window.geometry,
        meta(window, Representation::Ts, Some(decay_us.as_f64())),
    );
    time_surface_into(
        window.events,
        window.geometry,
        window.t_end,
        decay_us,
        &mut frame.data,
    );
    Ok(frame)
}

/// Boundaries `[b0, b1, b2, b3]` of the three chronological sub-windows;
/// `b_c = t_start + floor(c·τ/3)` and `b3 = t_end`.
pub fn sub_window_bounds(t_start: u64, t_end: u64) -> [u64; 4] {
    let tau = (t_end - t_start) as u128;
    let b = |c: u128| t_start + (c * tau / 3) as u64;
    [t_start, b(1), b(2), t_end]
}

/// Three time surfaces, one per chronological third of the window, each
/// built from that sub-window's events only and referenced to its end.
pub fn build_3c<T: Real>(
    window: &EventWindow<'_>,
    decay_us: T,
) -> Result<EventFrame<T>, ReprError> {
    check_decay(decay_us)?;
    let mut frame = EventFrame::zeros(
        3,
        window.geometry,
        meta(window, Representation::ThreeChannel, Some(decay_us.as_f64())),
    );
    let bounds = sub_window_bounds(window.t_start, window.t_end);
    let plane = window.geometry.pixel_count();
    for c in 0..3 {
        let lo = window.events.partition_point(|e| e.t < bounds[c]);
        let hi = window.events.partition_point(|e| e.t < bounds[c + 1]);
        time_surface_into(
            &window.events[lo..hi.max(lo)],
            window.geometry,
            bounds[c + 1],
            decay_us,
            &mut frame.data[c * plane..(c + 1) * plane],
        );
    }
    Ok(frame)
}

/// Builds any representation; `decay_us` falls back to
/// [`Representation::default_decay_us`].
pub fn build_frame<T: Real>(
    window: &EventWindow<'_>,
    repr: Representation,
    decay_us: Option<T>,
) -> Result<EventFrame<T>, ReprError> {
    let decay = || {
        decay_us.unwrap_or_else(|| {
            T::lit(
                repr.default_decay_us(window.duration())
                    .expect("decaying representation"),
            )
        })
    };
    match repr {
        Representation::E2f => Ok(build_e2f(window)),
        Representation::Lnes => Ok(build_lnes(window)),
        Representation::Ts => build_ts(window, decay()),
        Representation::ThreeChannel => build_3c(window, decay()),
    }
}
