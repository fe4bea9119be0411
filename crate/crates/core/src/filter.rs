//! Frame suitability scores: mask-based KL divergence, bounding-box event
//! density and minimum event count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventWindow, SensorGeometry};
use crate::io::Mask;
use crate::Real;

/// Real-data event count threshold.
pub const DEFAULT_MIN_EVENTS: u64 = 10_000;
/// Events that must fall on the mask before a KL score is trusted.
pub const DEFAULT_KL_MIN_MASK_EVENTS: u64 = 1_000;
pub const DEFAULT_KL_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BBOX_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("mask has no pixels")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but the sensor is {width}x{height}")]
    MaskSize {
        mask_w: usize,
        mask_h: usize,
        width: u16,
        height: u16,
    },
    #[error("bounding box must have positive extent, got {w}x{h}")]
    DegenerateBox { w: u32, h: u32 },
    #[error("bounding box ({x}, {y}, {w}, {h}) exceeds the {width}x{height} sensor")]
    BoxOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u16,
        height: u16,
    },
    #[error("frame {0}: no mask or bounding box supplied")]
    MissingInput(usize),
    #[error("distribution masses must be positive, got in = {0}, out = {1}")]
    BadMasses(f64, f64),
}

/// Axis-aligned pixel box `[x, x+w) x [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, FilterError> {
        if w == 0 || h == 0 {
            return Err(FilterError::DegenerateBox { w, h });
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn within(self, geometry: SensorGeometry) -> Result<Self, FilterError> {
        if self.x as u64 + self.w as u64 > geometry.width as u64
            || self.y as u64 + self.h as u64 > geometry.height as u64
        {
            return Err(FilterError::BoxOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width: geometry.width,
                height: geometry.height,
            });
        }
        Ok(self)
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x - self.x < self.w && y >= self.y && y - self.y < self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

/// Per-pixel weights before normalization: `in_mass/N` on pixels with
/// events, `out_mass/N` on the rest of the mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskDistributionParams<T> {
    pub in_mass: T,
    pub out_mass: T,
}

impl<T: Real> Default for MaskDistributionParams<T> {
    fn default() -> Self {
        MaskDistributionParams {
            in_mass: T::lit(0.99),
            out_mass: T::lit(0.01),
        }
    }
}

impl<T: Real> MaskDistributionParams<T> {
    fn check(&self) -> Result<(), FilterError> {
        if self.in_mass > T::zero() && self.out_mass > T::zero() {
            Ok(())
        } else {
            Err(FilterError::BadMasses(
                self.in_mass.as_f64(),
                self.out_mass.as_f64(),
            ))
        }
    }
}

fn check_mask(window: &EventWindow<'_>, mask: &Mask) -> Result<(), FilterError> {
    let g = window.geometry;
    if mask.width() != g.width as usize || mask.height() != g.height as usize {
        return Err(FilterError::MaskSize {
            mask_w: mask.width(),
            mask_h: mask.height(),
            width: g.width,
            height: g.height,
        });
    }
    if mask.count() == 0 {
        return Err(FilterError::EmptyMask);
    }
    Ok(())
}

/// Number of distinct mask pixels hit by at least one event (`k`), and the
/// number of events landing on the mask (with multiplicity).
pub fn mask_occupancy(window: &EventWindow<'_>, mask: &Mask) -> (usize, u64) {
    let mut hit = vec![false; mask.pixels().len()];
    let mut k = 0;
    let mut on_mask = 0u64;
    for e in window.events {
        let i = window.geometry.index(e.x, e.y);
        if mask.contains_index(i) {
            on_mask += 1;
            if !hit[i] {
                hit[i] = true;
                k += 1;
            }
        }
    }
    (k, on_mask)
}

/// KL divergence, in nats, of the normalized event-occupancy distribution on
/// the mask from the uniform distribution on the mask, given `N` mask pixels
/// of which `k` received events.
///
/// Both `k = 0` and `k = N` normalize to the uniform distribution and score
/// exactly zero.
pub fn kl_from_occupancy<T: Real>(n: usize, k: usize, params: MaskDistributionParams<T>) -> T {
    assert!(k <= n, "occupied pixels exceed mask size");
    if k == 0 || k == n {
        return T::zero();
    }
    let nf = T::from_count(n);
    let kf = T::from_count(k);
    let z = params.in_mass * kf + params.out_mass * (nf - kf);
    // p·N for occupied and unoccupied pixels.
    let r_in = params.in_mass * nf / z;
    let r_out = params.out_mass * nf / z;
    let score = kf / nf * r_in * r_in.ln() + (nf - kf) / nf * r_out * r_out.ln();
    score.max(T::zero())
}

pub fn kl_mask_score<T: Real>(
    window: &EventWindow<'_>,
    mask: &Mask,
    params: MaskDistributionParams<T>,
) -> Result<T, FilterError> {
    check_mask(window, mask)?;
    params.check()?;
    let (k, _) = mask_occupancy(window, mask);
    Ok(kl_from_occupancy(mask.count(), k, params))
}

/// Events inside the box (with multiplicity) per pixel of box area.
pub fn bbox_event_ratio<T: Real>(window: &EventWindow<'_>, bbox: &BBox) -> T {
    let inside = window
        .events
        .iter()
        .filter(|e| bbox.contains(e.x as u32, e.y as u32))
        .count();
    T::from_count(inside) / T::lit(bbox.area() as f64)
}

/// Kept iff the window holds strictly more than `min_events` events.
pub fn count_filter(window: &EventWindow<'_>, min_events: u64) -> bool {
    window.len() as u64 > min_events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterMethod {
    #[serde(rename = "mask-kl")]
    MaskKl,
    #[serde(rename = "bbox-ratio")]
    BboxRatio,
    #[serde(rename = "min-count")]
    MinCount,
}

impl std::fmt::Display for FilterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterMethod::MaskKl => "mask-kl",
            FilterMethod::BboxRatio => "bbox-ratio",
            FilterMethod::MinCount => "min-count",
        })
    }
}

/// Per-window side information for [`filter_dataset`].
pub enum FilterInputs<'a, T> {
    MaskKl {
        masks: &'a [Option<Mask>],
        params: MaskDistributionParams<T>,
        /// Windows with fewer events than this on the mask are dropped
        /// before their score is considered.
        min_mask_events: u64,
    },
    BboxRatio {
        bboxes: &'a [Option<BBox>],
    },
    MinCount,
}

impl<T> FilterInputs<'_, T> {
    pub fn method(&self) -> FilterMethod {
        match self {
            FilterInputs::MaskKl { .. } => FilterMethod::MaskKl,
            FilterInputs::BboxRatio { .. } => FilterMethod::BboxRatio,
            FilterInputs::MinCount => FilterMethod::MinCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub frame: usize,
    pub method: FilterMethod,
    pub score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: usize,
    pub kept: usize,
    pub kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub scores: Vec<FilterScore>,
    pub summary: FilterSummary,
}

impl FilterReport {
    pub fn kept_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.scores.iter().filter(|s| s.kept).map(|s| s.frame)
    }
}

/// Scores every window and applies the dataset-wide threshold.
///
/// Mask KL keeps `score <= threshold`; the bbox ratio keeps
/// `score >= threshold`; the count filter keeps `count > threshold`.
pub fn filter_dataset<T: Real>(
    windows: &[EventWindow<'_>],
    inputs: &FilterInputs<'_, T>,
    threshold: T,
) -> Result<FilterReport, FilterError> {
    let method = inputs.method();
    let mut scores = Vec::with_capacity(windows.len());
    for (frame, w) in windows.iter().enumerate() {
        let (score, kept) = match inputs {
            FilterInputs::MaskKl {
                masks,
                params,
                min_mask_events,
            } => {
                let mask = masks
                    .get(frame)
                    .and_then(Option::as_ref)
                    .ok_or(FilterError::MissingInput(frame))?;
                check_mask(w, mask)?;
                params.check()?;
                let (k, on_mask) = mask_occupancy(w, mask);
                let s = kl_from_occupancy(mask.count(), k, *params);
                (s, on_mask >= *min_mask_events && s <= threshold)
            }
            FilterInputs::BboxRatio { bboxes } => {
                let b = bboxes
                    .get(frame)
                    .and_then(Option::as_ref)
                    .ok_or(FilterError::MissingInput(frame))?;
                let r: T = bbox_event_ratio(w, b);
                (r, r >= threshold)
            }
            FilterInputs::MinCount => {
                let n = T::from_count(w.len());
                (n, n > threshold)
            }
        };
        scores.push(FilterScore {
            frame,
            method,
            score: score.as_f64(),
            kept,
        });
    }
    let kept = scores.iter().filter(|s| s.kept).count();
    let total = scores.len();
    Ok(FilterReport {
        scores,
        summary: FilterSummary {
            total,
            kept,
            kept_fraction: if total == 0 {
                0.0
            } else {
                kept as f64 / total as f64
            },
        },
    })
}
