use evtk::event::{slice_windows, Event, EventStream, EventWindow, SensorGeometry};
use evtk::repr::{build_3c, build_e2f, build_frame, build_ts, sub_window_bounds};
use evtk::Representation;
use proptest::prelude::*;

const W: u16 = 6;
const H: u16 = 5;

fn geom() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

fn arb_events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..3_000, 0..W, 0..H, any::<bool>()), 0..150).prop_map(|mut v| {
        v.sort_by_key(|e| e.0);
        v.into_iter()
            .map(|(t, x, y, p)| Event::new(t, x, y, if p { 1 } else { -1 }))
            .collect()
    })
}

const ALL: [Representation; 4] = [
    Representation::E2f,
    Representation::Lnes,
    Representation::Ts,
    Representation::ThreeChannel,
];

proptest! {
    #[test]
    fn values_in_unit_range_and_shape(ev in arb_events(), dur in 1u64..4_000) {
        let w = EventWindow::from_slice(geom(), 0, dur.max(ev.last().map_or(0, |e| e.t + 1)), &ev);
        for r in ALL {
            let f = build_frame::<f64>(&w, r, None).unwrap();
            prop_assert_eq!((f.channels(), f.width(), f.height()), (r.channels(), W as usize, H as usize));
            prop_assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let f32_frame = build_frame::<f32>(&w, r, None).unwrap();
            prop_assert!(f32_frame.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn empty_window_all_zero(start in 0u64..1_000, dur in 1u64..1_000) {
        let w = EventWindow::from_slice(geom(), start, start + dur, &[]);
        for r in ALL {
            let f = build_frame::<f64>(&w, r, None).unwrap();
            prop_assert!(f.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn e2f_support_is_event_pixels(ev in arb_events()) {
        let w = EventWindow::from_slice(geom(), 0, 3_000, &ev);
        let f = build_e2f::<f64>(&w);
        for y in 0..H {
            for x in 0..W {
                let has = ev.iter().any(|e| e.x == x && e.y == y);
                prop_assert_eq!(f.get(0, x as usize, y as usize) > 0.0, has);
            }
        }
    }

    #[test]
    fn ts_increasing_in_recency(t1 in 0u64..999, gap in 1u64..1_000, decay in 1.0f64..5_000.0) {
        let t2 = (t1 + gap).min(999);
        prop_assume!(t2 > t1);
        let a = [Event::new(t1, 0, 0, 1)];
        let b = [Event::new(t2, 0, 0, -1)];
        let fa = build_ts::<f64>(&EventWindow::from_slice(geom(), 0, 1_000, &a), decay).unwrap();
        let fb = build_ts::<f64>(&EventWindow::from_slice(geom(), 0, 1_000, &b), decay).unwrap();
        prop_assert!(fb.get(0, 0, 0) > fa.get(0, 0, 0));
    }

    #[test]
    fn reordering_same_timestamp_events_changes_nothing(ev in arb_events(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Shuffle only within groups of equal timestamp across distinct pixels.
        let mut shuffled = ev.clone();
        let mut i = 0;
        while i < shuffled.len() {
            let mut j = i;
            while j < shuffled.len() && shuffled[j].t == shuffled[i].t {
                j += 1;
            }
            let group = &mut shuffled[i..j];
            let distinct = {
                let mut px: Vec<_> = group.iter().map(|e| (e.x, e.y)).collect();
                px.sort();
                px.windows(2).all(|p| p[0] != p[1])
            };
            if distinct {
                group.shuffle(&mut rng);
            }
            i = j;
        }
        let a = EventWindow::from_slice(geom(), 0, 3_000, &ev);
        let b = EventWindow::from_slice(geom(), 0, 3_000, &shuffled);
        for r in ALL {
            let fa = build_frame::<f64>(&a, r, None).unwrap();
            let fb = build_frame::<f64>(&b, r, None).unwrap();
            prop_assert_eq!(fa.values(), fb.values());
        }
    }

    #[test]
    fn three_channel_single_subwindow_is_ts(ev in arb_events(), c in 0usize..3, decay in 10.0f64..2_000.0) {
        let (t0, t1) = (0u64, 3_000u64);
        let b = sub_window_bounds(t0, t1);
        let own: Vec<Event> = ev.iter().copied().filter(|e| e.t >= b[c] && e.t < b[c + 1]).collect();
        let w = EventWindow::from_slice(geom(), t0, t1, &own);
        let f = build_3c::<f64>(&w, decay).unwrap();
        let ts = build_ts::<f64>(&EventWindow::from_slice(geom(), b[c], b[c + 1], &own), decay).unwrap();
        for k in 0..3 {
            if k == c {
                prop_assert_eq!(f.channel(k), ts.channel(0));
            } else {
                prop_assert!(f.channel(k).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn sliced_windows_feed_builders(ev in arb_events(), win in 1u64..1_500) {
        prop_assume!(!ev.is_empty());
        let s = EventStream::new(geom(), ev).unwrap();
        for w in slice_windows(&s, win, win).unwrap() {
            let f = build_e2f::<f32>(&w);
            if !w.is_empty() {
                prop_assert_eq!(f.max_value(), 1.0);
            }
        }
    }
}
