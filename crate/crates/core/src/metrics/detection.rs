use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::Real;

pub const IOU_THRESHOLDS: [f64; 2] = [0.5, 0.75];
pub const AP_RECALL_POINTS: usize = 101;
/// Inclusive upper area of the small bucket (150 x 150 px).
pub const SMALL_AREA_MAX: f64 = 22_500.0;
/// Exclusive lower area of the large bucket (300 x 300 px).
pub const LARGE_AREA_MIN: f64 = 90_000.0;

/// Axis-aligned box `[x, y, w, h]` in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[T; 4]", from = "[T; 4]")]
pub struct Rect<T: Copy> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Copy> From<[T; 4]> for Rect<T> {
    fn from(a: [T; 4]) -> Self {
        Rect {
            x: a[0],
            y: a[1],
            w: a[2],
            h: a[3],
        }
    }
}

impl<T: Copy> From<Rect<T>> for [T; 4] {
    fn from(r: Rect<T>) -> Self {
        [r.x, r.y, r.w, r.h]
    }
}

impl<T: Real> Rect<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self, MetricsError> {
        let r = Rect { x, y, w, h };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let ok = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
            && self.w >= T::zero()
            && self.h >= T::zero();
        if ok {
            Ok(())
        } else {
            Err(MetricsError::InvalidBox([
                self.x.as_f64(),
                self.y.as_f64(),
                self.w.as_f64(),
                self.h.as_f64(),
            ]))
        }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn bucket(&self) -> SizeBucket {
        SizeBucket::of_area(self.area().as_f64())
    }
}

pub fn iou<T: Real>(a: &Rect<T>, b: &Rect<T>) -> T {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(T::zero());
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(T::zero());
    let inter = ix * iy;
    // Corner-based areas so that identical boxes give exactly 1.
    let area = |r: &Rect<T>| ((r.x + r.w) - r.x) * ((r.y + r.h) - r.y);
    let union = area(a) + area(b) - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn of_area(area: f64) -> Self {
        if area <= SMALL_AREA_MAX {
            SizeBucket::Small
        } else if area <= LARGE_AREA_MIN {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T: Copy> {
    pub bbox: Rect<T>,
    pub score: T,
}

impl<T: Real> Detection<T> {
    pub fn new(bbox: Rect<T>, score: T) -> Result<Self, MetricsError> {
        bbox.validate()?;
        if !(score >= T::zero() && score <= T::one()) {
            return Err(MetricsError::InvalidScore(score.as_f64()));
        }
        Ok(Detection { bbox, score })
    }
}

/// Greedy matching of one image at one IoU threshold.
///
/// Detections are visited by descending score (stable on ties). Each takes
/// the unmatched gt with the highest IoU at or above `threshold`, lowest
/// index on ties. Returns the visit order and the matched gt per detection.
pub fn match_image<T: Real>(
    dets: &[Detection<T>],
    gts: &[Rect<T>],
    threshold: T,
) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut taken = vec![false; gts.len()];
    let mut matched = vec![None; dets.len()];
    for &d in &order {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, gt);
            if v >= threshold && best.map_or(true, |(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matched[d] = Some(g);
        }
    }
    (order, matched)
}

/// 101-point interpolated AP from score-ordered true/false positive flags.
pub fn average_precision(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    for (i, &flag) in tp_flags.iter().enumerate() {
        if flag {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for r in 0..AP_RECALL_POINTS {
        let level = r as f64 / (AP_RECALL_POINTS - 1) as f64;
        while j < recall.len() && recall[j] < level {
            j += 1;
        }
        if j < recall.len() {
            sum += precision[j];
        }
    }
    sum / AP_RECALL_POINTS as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketCounts {
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

/// Detection metrics. `ap_*` and `ar*` average over both IoU thresholds.
/// Buckets without ground truth report 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetEvalReport {
    pub ap50: f64,
    pub ap75: f64,
    pub ap_s: f64,
    pub ap_m: f64,
    pub ap_l: f64,
    pub ar: f64,
    pub ar_s: f64,
    pub ar_m: f64,
    pub ar_l: f64,
    pub n_images: usize,
    pub n_detections: usize,
    pub n_gt: usize,
    pub gt_per_bucket: BucketCounts,
    /// True when there is no ground truth at all.
    pub empty: bool,
}

struct Scored {
    score: f64,
    tp: bool,
}

/// Pooled (score, tp) list for one threshold and optional bucket.
fn pooled<T: Real>(
    images: &[(&[Detection<T>], &[Rect<T>], Vec<usize>, Vec<Option<usize>>)],
    bucket: Option<SizeBucket>,
) -> (Vec<bool>, usize) {
    let mut all: Vec<Scored> = Vec::new();
    let mut n_gt = 0;
    for (dets, gts, order, matched) in images {
        n_gt += gts
            .iter()
            .filter(|g| bucket.map_or(true, |b| g.bucket() == b))
            .count();
        for &d in order {
            let keep = match (bucket, matched[d]) {
                (None, _) => true,
                (Some(b), Some(g)) => gts[g].bucket() == b,
                (Some(b), None) => dets[d].bbox.bucket() == b,
            };
            if keep {
                all.push(Scored {
                    score: dets[d].score.as_f64(),
                    tp: matched[d].is_some(),
                });
            }
        }
    }
    all.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    (all.into_iter().map(|s| s.tp).collect(), n_gt)
}

fn recall(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        0.0
    } else {
        flags.iter().filter(|&&f| f).count() as f64 / n_gt as f64
    }
}

/// Evaluates per-image detections against per-image ground truth.
/// Both slices are indexed by image.
pub fn detection_eval<T: Real>(dets: &[Vec<Detection<T>>], gts: &[Vec<Rect<T>>]) -> DetEvalReport {
    let n_images = dets.len().max(gts.len());
    let empty_d: Vec<Detection<T>> = Vec::new();
    let empty_g: Vec<Rect<T>> = Vec::new();
    let mut counts = BucketCounts::default();
    for g in gts.iter().flatten() {
        match g.bucket() {
            SizeBucket::Small => counts.small += 1,
            SizeBucket::Medium => counts.medium += 1,
            SizeBucket::Large => counts.large += 1,
        }
    }
    let mut ap = [[0.0; 4]; 2];
    let mut ar = [[0.0; 4]; 2];
    for (ti, &thr) in IOU_THRESHOLDS.iter().enumerate() {
        let images: Vec<_> = (0..n_images)
            .map(|i| {
                let d = dets.get(i).unwrap_or(&empty_d).as_slice();
                let g = gts.get(i).unwrap_or(&empty_g).as_slice();
                let (order, matched) = match_image(d, g, T::lit(thr));
                (d, g, order, matched)
            })
            .collect();
        let buckets = [
            None,
            Some(SizeBucket::Small),
            Some(SizeBucket::Medium),
            Some(SizeBucket::Large),
        ];
        for (bi, b) in buckets.iter().enumerate() {
            let (flags, n_gt) = pooled(&images, *b);
            ap[ti][bi] = average_precision(&flags, n_gt);
            ar[ti][bi] = recall(&flags, n_gt);
        }
    }
    let mean = |a: &[[f64; 4]; 2], b: usize| (a[0][b] + a[1][b]) / 2.0;
    let n_gt = counts.small + counts.medium + counts.large;
    DetEvalReport {
        ap50: ap[0][0],
        ap75: ap[1][0],
        ap_s: mean(&ap, 1),
        ap_m: mean(&ap, 2),
        ap_l: mean(&ap, 3),
        ar: mean(&ar, 0),
        ar_s: mean(&ar, 1),
        ar_m: mean(&ar, 2),
        ar_l: mean(&ar, 3),
        n_images,
        n_detections: dets.iter().map(Vec::len).sum(),
        n_gt,
        gt_per_bucket: counts,
        empty: n_gt == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect<f64> {
        Rect { x, y, w, h }
    }

    fn d(b: Rect<f64>, score: f64) -> Detection<f64> {
        Detection { bbox: b, score }
    }

    #[test]
    fn iou_examples() {
        let a = r(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &r(20.0, 0.0, 10.0, 10.0)), 0.0);
        assert!((iou(&a, &r(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&r(0.0, 0.0, 0.0, 0.0), &r(0.0, 0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn buckets_inclusive_edges() {
        assert_eq!(SizeBucket::of_area(22_500.0), SizeBucket::Small);
        assert_eq!(SizeBucket::of_area(22_500.5), SizeBucket::Medium);
        assert_eq!(SizeBucket::of_area(90_000.0), SizeBucket::Medium);
        assert_eq!(SizeBucket::of_area(90_000.5), SizeBucket::Large);
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![
            vec![r(0.0, 0.0, 100.0, 100.0), r(200.0, 0.0, 200.0, 200.0)],
            vec![r(0.0, 0.0, 400.0, 400.0)],
        ];
        let dets: Vec<Vec<_>> = gts
            .iter()
            .map(|g| g.iter().map(|b| d(*b, 1.0)).collect())
            .collect();
        let rep = detection_eval(&dets, &gts);
        for v in [rep.ap50, rep.ap75, rep.ap_s, rep.ap_m, rep.ap_l, rep.ar, rep.ar_s, rep.ar_m, rep.ar_l] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(rep.gt_per_bucket, BucketCounts { small: 1, medium: 1, large: 1 });
    }

    #[test]
    fn no_detections() {
        let gts = vec![vec![r(0.0, 0.0, 100.0, 100.0)]];
        let rep = detection_eval::<f64>(&[vec![]], &gts);
        assert_eq!((rep.ap50, rep.ap75, rep.ar), (0.0, 0.0, 0.0));
        assert!(!rep.empty);
        let rep = detection_eval::<f64>(&[], &[]);
        assert!(rep.empty);
        assert_eq!(rep.ap50, 0.0);
    }

    #[test]
    fn fp_before_tp_halves_precision() {
        let g = r(0.0, 0.0, 10.0, 10.0);
        let dets = vec![vec![d(r(50.0, 50.0, 10.0, 10.0), 0.9), d(g, 0.8)]];
        let rep = detection_eval(&dets, &[vec![g]]);
        // Precision 0.5 at every recall level.
        assert!((rep.ap50 - 0.5).abs() < 1e-12);
        assert_eq!(rep.ar, 1.0);
    }

    #[test]
    fn duplicate_detection_is_fp() {
        let g = r(0.0, 0.0, 10.0, 10.0);
        let dets = vec![vec![d(g, 0.9), d(g, 0.8)]];
        let rep = detection_eval(&dets, &[vec![g]]);
        assert_eq!(rep.ap50, 1.0);
        let (_, m) = match_image(&dets[0], &[g], 0.5);
        assert_eq!(m, vec![Some(0), None]);
    }

    #[test]
    fn other_bucket_match_ignored() {
        let small = r(0.0, 0.0, 100.0, 100.0);
        let large = r(500.0, 0.0, 400.0, 400.0);
        // The large gt's detection must not count as a small-bucket FP.
        let dets = vec![vec![d(large, 0.99), d(small, 0.5)]];
        let rep = detection_eval(&dets, &[vec![small, large]]);
        assert_eq!(rep.ap_s, 1.0);
        assert_eq!(rep.ap_l, 1.0);
        assert_eq!(rep.ap_m, 0.0);
    }

    #[test]
    fn ap_hand_curve() {
        // tp, fp, tp with 2 gts: p = 1, 0.5, 0.667; r = 0.5, 0.5, 1.0
        let ap = average_precision(&[true, false, true], 2);
        let expected = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(
            a in (0.0..100.0f64, 0.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64),
            b in (0.0..100.0f64, 0.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64),
        ) {
            let a = r(a.0, a.1, a.2, a.3);
            let b = r(b.0, b.1, b.2, b.3);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a));
            if a.area() > 0.0 {
                prop_assert_eq!(iou(&a, &a), 1.0);
            }
        }

        #[test]
        fn report_in_unit_interval(
            n in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let box_ = |rng: &mut rand_chacha::ChaCha8Rng| {
                r(rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0),
                  rng.gen_range(1.0..400.0), rng.gen_range(1.0..400.0))
            };
            let gts: Vec<Vec<_>> = (0..n).map(|_| (0..rng.gen_range(0..4)).map(|_| box_(&mut rng)).collect()).collect();
            let dets: Vec<Vec<_>> = (0..n).map(|_| (0..rng.gen_range(0..4)).map(|_| {
                let b = box_(&mut rng);
                d(b, rng.gen())
            }).collect()).collect();
            let rep = detection_eval(&dets, &gts);
            for v in [rep.ap50, rep.ap75, rep.ap_s, rep.ap_m, rep.ap_l, rep.ar, rep.ar_s, rep.ar_m, rep.ar_l] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
