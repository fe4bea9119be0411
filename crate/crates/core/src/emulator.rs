//! Contrast-threshold event emulator driven by intensity frames.
//!
//! Each pixel keeps a log-intensity reference. A change of `|ΔL|` between
//! frames emits `floor(|ΔL| / C)` events whose timestamps are placed at the
//! threshold crossings of a linear-in-time interpolation, and the reference
//! advances by exactly `C` per emitted event.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::event::{Event, EventStream, SensorGeometry, StreamError, NEGATIVE, POSITIVE};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulatorParams<T> {
    /// Log-intensity change per event.
    pub contrast_threshold: T,
    pub refractory_us: u64,
    /// Added to intensity before taking the log.
    pub log_eps: T,
    /// Background noise events per pixel per second.
    pub leak_rate_hz: T,
}

impl<T: Real> Default for EmulatorParams<T> {
    fn default() -> Self {
        EmulatorParams {
            contrast_threshold: T::lit(0.2),
            refractory_us: 0,
            log_eps: T::lit(1e-3),
            leak_rate_hz: T::zero(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmulatorError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {index} is {got} pixels, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("frame {index} timestamp {t} does not increase past {prev}")]
    NonMonotonic { index: usize, t: u64, prev: u64 },
    #[error("invalid parameter: {0}")]
    BadParams(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// A timestamped grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame<T> {
    pub t_us: u64,
    pub pixels: Vec<T>,
}

/// Per-pixel log-intensity references after a run.
#[derive(Debug, Clone)]
pub struct EmulatorState<T> {
    pub reference: Vec<T>,
}

fn check<T: Real>(
    geometry: SensorGeometry,
    frames: &[IntensityFrame<T>],
    params: &EmulatorParams<T>,
) -> Result<(), EmulatorError> {
    if !(params.contrast_threshold > T::zero() && params.contrast_threshold.is_finite()) {
        return Err(EmulatorError::BadParams(format!(
            "contrast threshold must be positive, got {}",
            params.contrast_threshold
        )));
    }
    if !(params.log_eps > T::zero()) {
        return Err(EmulatorError::BadParams(format!(
            "log epsilon must be positive, got {}",
            params.log_eps
        )));
    }
    if !(params.leak_rate_hz >= T::zero()) {
        return Err(EmulatorError::BadParams(format!(
            "leak rate must be non-negative, got {}",
            params.leak_rate_hz
        )));
    }
    if frames.len() < 2 {
        return Err(EmulatorError::TooFewFrames(frames.len()));
    }
    let expected = geometry.pixel_count();
    for (index, f) in frames.iter().enumerate() {
        if f.pixels.len() != expected {
            return Err(EmulatorError::DimensionMismatch {
                index,
                got: f.pixels.len(),
                expected,
            });
        }
        if index > 0 && f.t_us <= frames[index - 1].t_us {
            return Err(EmulatorError::NonMonotonic {
                index,
                t: f.t_us,
                prev: frames[index - 1].t_us,
            });
        }
    }
    Ok(())
}

/// Runs the emulator and also returns the final per-pixel references.
pub fn emulate_events_with_state<T: Real, R: Rng + ?Sized>(
    geometry: SensorGeometry,
    frames: &[IntensityFrame<T>],
    params: &EmulatorParams<T>,
    rng: &mut R,
) -> Result<(EventStream, EmulatorState<T>), EmulatorError> {
    check(geometry, frames, params)?;
    let c = params.contrast_threshold;
    let log = |i: T| (i + params.log_eps).ln();
    let n = geometry.pixel_count();
    let mut reference: Vec<T> = frames[0].pixels.iter().map(|&i| log(i)).collect();
    let mut last_event: Vec<Option<u64>> = vec![None; n];
    // (t, pixel, seq) so ties resolve by pixel, then emission order.
    let mut out: Vec<(u64, usize, u32, i8)> = Vec::new();
    let width = geometry.width as usize;
    let leak = params.leak_rate_hz > T::zero();

    for pair in frames.windows(2) {
        let (t0, t1) = (pair[0].t_us, pair[1].t_us);
        let span = T::from_micros(t1 - t0);
        for (px, &intensity) in pair[1].pixels.iter().enumerate() {
            let delta = log(intensity) - reference[px];
            let mag = delta.abs();
            let m = (mag / c).floor().to_u64().unwrap_or(0);
            let (polarity, sign) = if delta > T::zero() {
                (POSITIVE, T::one())
            } else {
                (NEGATIVE, -T::one())
            };
            let mut seq = 0u32;
            for k in 1..=m {
                let frac = T::lit(k as f64) * c / mag;
                let t = t0 + (frac * span).round().to_u64().unwrap_or(0).min(t1 - t0);
                if let Some(prev) = last_event[px] {
                    if params.refractory_us > 0 && t < prev + params.refractory_us {
                        continue;
                    }
                }
                reference[px] += sign * c;
                last_event[px] = Some(t);
                out.push((t, px, seq, polarity));
                seq += 1;
            }
            if leak {
                let mean = (params.leak_rate_hz * span / T::lit(1e6)).as_f64();
                if mean > 0.0 {
                    let count = Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0) as u64;
                    for _ in 0..count {
                        let t = rng.gen_range(t0..=t1);
                        let p = if rng.gen::<bool>() { POSITIVE } else { NEGATIVE };
                        out.push((t, px, seq, p));
                        seq += 1;
                    }
                }
            }
        }
    }
    out.sort_unstable_by_key(|&(t, px, seq, _)| (t, px, seq));
    let events = out
        .into_iter()
        .map(|(t, px, _, p)| Event {
            t,
            x: (px % width) as u16,
            y: (px / width) as u16,
            p,
        })
        .collect();
    Ok((EventStream::new(geometry, events)?, EmulatorState { reference }))
}

/// Synthesizes an event stream from at least two timestamped frames.
pub fn emulate_events<T: Real, R: Rng + ?Sized>(
    geometry: SensorGeometry,
    frames: &[IntensityFrame<T>],
    params: &EmulatorParams<T>,
    rng: &mut R,
) -> Result<EventStream, EmulatorError> {
    emulate_events_with_state(geometry, frames, params, rng).map(|(s, _)| s)
}
