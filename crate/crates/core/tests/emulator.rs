use evtk::emulator::{emulate_events, EmulatorParams, IntensityFrame};
use evtk::event::SensorGeometry;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const W: u16 = 4;
const H: u16 = 3;
const SPACING: u64 = 1_000_000;

fn arb_frames() -> impl Strategy<Value = Vec<IntensityFrame<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..=1.0, (W * H) as usize), 2..7).prop_map(
        |frames| {
            frames
                .into_iter()
                .enumerate()
                .map(|(i, pixels)| IntensityFrame {
                    t_us: 500 + i as u64 * SPACING,
                    pixels,
                })
                .collect()
        },
    )
}

fn geom() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

fn params(c: f64) -> EmulatorParams<f64> {
    EmulatorParams {
        contrast_threshold: c,
        ..Default::default()
    }
}

/// Scalar per-pixel model: (count, polarity) per inter-frame interval.
fn pixel_oracle(values: &[f64], c: f64, eps: f64) -> Vec<(usize, i8)> {
    let mut l_ref = (values[0] + eps).ln();
    values[1..]
        .iter()
        .map(|&v| {
            let d = (v + eps).ln() - l_ref;
            let m = (d.abs() / c).floor() as usize;
            // One threshold step per event.
            for _ in 0..m {
                l_ref += c * d.signum();
            }
            (m, if d > 0.0 { 1 } else { -1 })
        })
        .collect()
}

proptest! {
    #[test]
    fn matches_per_pixel_oracle(frames in arb_frames(), c in 0.05f64..0.8) {
        let p = params(c);
        let s = emulate_events(geom(), &frames, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for px in 0..(W * H) as usize {
            let values: Vec<f64> = frames.iter().map(|f| f.pixels[px]).collect();
            let want = pixel_oracle(&values, c, p.log_eps);
            for (k, (m, pol)) in want.into_iter().enumerate() {
                let (lo, hi) = (frames[k].t_us, frames[k + 1].t_us);
                let got: Vec<_> = s
                    .events()
                    .iter()
                    .filter(|e| (e.y as usize * W as usize + e.x as usize) == px && e.t > lo && e.t <= hi)
                    .collect();
                prop_assert_eq!(got.len(), m);
                prop_assert!(got.iter().all(|e| e.p == pol));
            }
        }
    }

    #[test]
    fn timestamps_sorted_and_bounded(frames in arb_frames(), c in 0.05f64..0.8, leak in 0.0f64..50.0) {
        let p = EmulatorParams { leak_rate_hz: leak, ..params(c) };
        let s = emulate_events(geom(), &frames, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (first, last) = (frames[0].t_us, frames.last().unwrap().t_us);
        prop_assert!(s.events().windows(2).all(|w| w[0].t <= w[1].t));
        prop_assert!(s.events().iter().all(|e| e.t >= first && e.t <= last));
    }

    #[test]
    fn doubling_threshold_at_least_halves(frames in arb_frames(), c in 0.02f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n1 = emulate_events(geom(), &frames, &params(c), &mut rng).unwrap().len();
        let n2 = emulate_events(geom(), &frames, &params(2.0 * c), &mut rng).unwrap().len();
        prop_assert!(2 * n2 <= n1, "C: {n1} events, 2C: {n2} events");
    }

    #[test]
    fn deterministic_for_seed(frames in arb_frames(), seed in any::<u64>()) {
        let p = EmulatorParams { leak_rate_hz: 20.0, ..params(0.15) };
        let a = emulate_events(geom(), &frames, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = emulate_events(geom(), &frames, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
