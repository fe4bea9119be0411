use evtk::event::{Event, EventWindow, SensorGeometry};
use evtk::filter::{
    bbox_event_ratio, filter_dataset, kl_mask_score, BBox, FilterInputs, MaskDistributionParams,
};
use evtk::io::Mask;
use proptest::prelude::*;

const W: u16 = 8;
const H: u16 = 8;

fn geom() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

fn arb_events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0..W, 0..H), 0..120).prop_map(|px| {
        px.into_iter()
            .enumerate()
            .map(|(i, (x, y))| Event::new(i as u64, x, y, 1))
            .collect()
    })
}

fn arb_mask() -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), (W * H) as usize)
        .prop_filter("non-empty", |v| v.iter().any(|&b| b))
        .prop_map(|v| Mask::new(W as usize, H as usize, v).unwrap())
}

proptest! {
    #[test]
    fn kl_non_negative_and_zero_only_at_extremes(ev in arb_events(), mask in arb_mask()) {
        let w = EventWindow::from_slice(geom(), 0, 1_000, &ev);
        let s: f64 = kl_mask_score(&w, &mask, MaskDistributionParams::default()).unwrap();
        prop_assert!(s >= 0.0);
        let n = mask.count();
        let k = (0..W)
            .flat_map(|x| (0..H).map(move |y| (x, y)))
            .filter(|&(x, y)| mask.contains(x as usize, y as usize) && ev.iter().any(|e| e.x == x && e.y == y))
            .count();
        prop_assert_eq!(s == 0.0, k == 0 || k == n);
    }

    #[test]
    fn kl_ignores_multiplicity(ev in arb_events(), mask in arb_mask(), reps in 1usize..4) {
        let repeated: Vec<Event> = ev
            .iter()
            .flat_map(|e| std::iter::repeat(*e).take(reps))
            .collect();
        let a = EventWindow::from_slice(geom(), 0, 1_000, &ev);
        let b = EventWindow::from_slice(geom(), 0, 1_000, &repeated);
        let p = MaskDistributionParams::<f64>::default();
        prop_assert_eq!(kl_mask_score(&a, &mask, p).unwrap(), kl_mask_score(&b, &mask, p).unwrap());
    }

    #[test]
    fn bbox_ratio_linear_in_copies(ev in arb_events(), reps in 1usize..5) {
        prop_assume!(!ev.is_empty());
        let bbox = BBox::new(2, 2, 4, 3).unwrap();
        let repeated: Vec<Event> = ev
            .iter()
            .flat_map(|e| std::iter::repeat(*e).take(reps))
            .collect();
        let a: f64 = bbox_event_ratio(&EventWindow::from_slice(geom(), 0, 1_000, &ev), &bbox);
        let b: f64 = bbox_event_ratio(&EventWindow::from_slice(geom(), 0, 1_000, &repeated), &bbox);
        prop_assert!((b - reps as f64 * a).abs() < 1e-12);
    }

    #[test]
    fn kept_set_monotone_in_threshold(
        frames in prop::collection::vec(arb_events(), 1..6),
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let windows: Vec<_> = frames.iter().map(|e| EventWindow::from_slice(geom(), 0, 1_000, e)).collect();
        let bboxes = vec![Some(BBox::new(1, 1, 5, 5).unwrap()); frames.len()];
        let inputs: FilterInputs<f64> = FilterInputs::BboxRatio { bboxes: &bboxes };
        let kept_lo: Vec<_> = filter_dataset::<f64>(&windows, &inputs, lo).unwrap().kept_frames().collect();
        let kept_hi: Vec<_> = filter_dataset::<f64>(&windows, &inputs, hi).unwrap().kept_frames().collect();
        // Ratio filter keeps at or above the threshold: raising it only removes frames.
        prop_assert!(kept_hi.iter().all(|f| kept_lo.contains(f)));
    }
}
