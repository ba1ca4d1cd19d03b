use proptest::prelude::*;

use evcomp::detection::score_field;
use evcomp::eval::{DetectionBox, GroundTruthBox};
use evcomp::io::{parse_events, write_events};
use evcomp::projection::{project_partitioned, Grid};
use evcomp::{
    detect, evaluate_success_rate, event_density, project_about, warp_event_cloud, BoundingBox, DetectionConfig,
    EvalOptions, Event, EventSlice, MotionModel, TimeImage,
};

fn slice_strategy(max_len: usize) -> impl Strategy<Value = EventSlice<f64>> {
    prop::collection::vec(
        (0.0..1.0f64, -20.0..260.0f64, -20.0..200.0f64, any::<bool>()),
        1..max_len,
    )
    .prop_map(|raw| {
        let mut events: Vec<Event<f64>> = raw
            .into_iter()
            .map(|(t, x, y, p)| Event::new(t * 0.025, x, y, p))
            .collect();
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        EventSlice::new(events, 0.0, 0.025, 240, 180).unwrap()
    })
}

fn model_strategy() -> impl Strategy<Value = MotionModel<f64>> {
    (-10.0..10.0f64, -10.0..10.0f64, -0.2..0.2f64, -0.2..0.2f64).prop_map(|(a, b, c, d)| MotionModel::new(a, b, c, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_keeps_length_and_fixes_slice_start(slice in slice_strategy(200), m in model_strategy()) {
        let w = warp_event_cloud(&slice, &m, slice.center()).unwrap();
        prop_assert_eq!(w.len(), slice.len());
        for (a, b) in slice.events().iter().zip(w.events()) {
            prop_assert_eq!(a.t, b.t);
            if a.t == slice.t0() {
                prop_assert_eq!((a.x, a.y), (b.x, b.y));
            }
        }
    }

    #[test]
    fn identity_warp_is_exact(slice in slice_strategy(200)) {
        let w = warp_event_cloud(&slice, &MotionModel::identity(), slice.center()).unwrap();
        prop_assert_eq!(w.events(), slice.events());
    }

    #[test]
    fn projection_conserves_counts(slice in slice_strategy(300), m in model_strategy(), d in 0.2..3.0f64) {
        let p = project_about(&slice, &m, d, slice.center()).unwrap();
        prop_assert_eq!(p.count.total() as usize + p.clipped, slice.len());
        prop_assert_eq!(p.count.counts(), p.time.counts());
    }

    #[test]
    fn partitioned_projection_matches_sequential(slice in slice_strategy(3000), m in model_strategy()) {
        let a = project_about(&slice, &m, 0.3, slice.center()).unwrap();
        let b = project_partitioned(&slice, &m, 0.3, slice.center(), 257).unwrap();
        prop_assert_eq!(a.count.counts(), b.count.counts());
        prop_assert_eq!(a.clipped, b.clipped);
        for (x, y) in a.time.means().iter().zip(b.time.means()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn density_ignores_event_order(xs in prop::collection::vec((0.0..100.0f64, 0.0..80.0f64), 2..200), rot in 0usize..200) {
        // Equal timestamps allow any order.
        let events: Vec<Event<f64>> = xs.iter().map(|&(x, y)| Event::new(0.01, x, y, true)).collect();
        let mut rotated = events.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let m = MotionModel::new(1.0, -2.0, 0.05, 0.03);
        let a = EventSlice::new(events, 0.0, 0.02, 100, 80).unwrap();
        let b = EventSlice::new(rotated, 0.0, 0.02, 100, 80).unwrap();
        let da = event_density(&project_about(&a, &m, 0.3, (50.0, 40.0)).unwrap().count);
        let db = event_density(&project_about(&b, &m, 0.3, (50.0, 40.0)).unwrap().count);
        prop_assert_eq!(da.ok(), db.ok());
    }

    #[test]
    fn integer_bin_shift_is_equivariant(cells in prop::collection::vec((0usize..30, 0usize..20), 1..60), kx in 0usize..5, ky in 0usize..5) {
        // All events sit at slice end, so a translation of -k*d moves them by exactly k bins.
        let d = 0.5;
        let events: Vec<Event<f64>> = cells
            .iter()
            .map(|&(i, j)| Event::new(1.0, (i as f64 + 0.25) * d, (j as f64 + 0.25) * d, true))
            .collect();
        let slice = EventSlice::new(events, 0.0, 1.0, 20, 15).unwrap();
        let base = project_about(&slice, &MotionModel::identity(), d, (0.0, 0.0)).unwrap();
        let shift = MotionModel::translation(-(kx as f64) * d, -(ky as f64) * d);
        let moved = project_about(&slice, &shift, d, (0.0, 0.0)).unwrap();
        let (w, h) = (base.count.width(), base.count.height());
        for j in 0..h {
            for i in 0..w {
                let c = base.count.count(i, j);
                if i + kx < w && j + ky < h {
                    prop_assert_eq!(moved.count.count(i + kx, j + ky), c);
                    prop_assert_eq!(moved.time.mean(i + kx, j + ky), base.time.mean(i, j));
                }
            }
        }
    }

    #[test]
    fn detected_bins_exceed_threshold(values in prop::collection::vec(prop::option::of(0.0..1.0f64), 20 * 15), lambda in 0.05..0.5f64) {
        let grid = Grid::for_sensor(20, 15, 1.0).unwrap();
        let image = TimeImage::from_means(grid, &values).unwrap();
        let Ok(field) = score_field(&image) else {
            prop_assert!(values.iter().all(|v| v.is_none()));
            return Ok(());
        };
        let mean: f64 = field.iter_defined().map(|(_, _, r)| r).sum::<f64>() / field.iter_defined().count() as f64;
        prop_assert!(mean.abs() < 1e-9);
        let cfg = DetectionConfig { threshold: lambda, min_area: 1, ..Default::default() };
        for obj in detect(&field, &cfg).unwrap() {
            for &(i, j) in &obj.pixels {
                let r = field.get(i, j).unwrap();
                prop_assert!(r > lambda, "bin ({i},{j}) has rho {r}");
            }
        }
    }

    #[test]
    fn event_text_round_trips(raw in prop::collection::vec((0u32..2_000_000, 0u16..346, 0u16..260, any::<bool>()), 0..300)) {
        let mut events: Vec<Event<f64>> = raw.iter().map(|&(us, x, y, p)| Event::new(us as f64 * 1e-6, x as f64, y as f64, p)).collect();
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        let mut text = Vec::new();
        write_events(&mut text, &events, Some((346, 260))).unwrap();
        let back = parse_events::<f64>(std::str::from_utf8(&text).unwrap()).unwrap();
        prop_assert_eq!(&back.events, &events);
        let mut again = Vec::new();
        write_events(&mut again, &back.events, back.sensor).unwrap();
        prop_assert_eq!(again, text);
    }

    #[test]
    fn success_rate_ignores_detection_order(boxes in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 1.0..30.0f64), 1..12), rot in 0usize..12) {
        let gt: Vec<GroundTruthBox<f64>> = boxes
            .iter()
            .enumerate()
            .map(|(k, &(x, y, s))| GroundTruthBox { frame_time: 0.025, object_id: k as u32, bbox: BoundingBox::new(x, y, s, s) })
            .collect();
        let dets: Vec<DetectionBox<f64>> = boxes
            .iter()
            .step_by(2)
            .map(|&(x, y, s)| DetectionBox { frame_time: 0.025, bbox: BoundingBox::new(x + s / 3.0, y, s, s) })
            .collect();
        let mut shuffled = dets.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        let a = evaluate_success_rate(&dets, &gt, &EvalOptions::default()).unwrap();
        let b = evaluate_success_rate(&shuffled, &gt, &EvalOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
