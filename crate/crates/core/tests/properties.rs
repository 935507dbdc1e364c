//! Property tests for geometry, matching and branch selection invariants.

use proptest::prelude::*;

use occtrack::assess::CalibrationParams;
use occtrack::bgmotion::mask_target;
use occtrack::frame::Frame;
use occtrack::geometry::{accumulate_motion, iou, BoundingBox, Point2, SimilarityTransform};
use occtrack::nn::Tensor3;
use occtrack::pipeline::{assessed_branch, select_branch, Branch};
use occtrack::xcorr::{correlate_masked, correlate_normalized};

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

fn transform() -> impl Strategy<Value = SimilarityTransform> {
    (-0.5..0.5f64, 0.8..1.25f64, -10.0..10.0f64, -10.0..10.0f64)
        .prop_map(|(r, s, x, y)| SimilarityTransform::new(r, s, Point2::new(x, y)).unwrap())
}

fn tensor(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor3> {
    proptest::collection::vec(-1.0..1.0f64, c * h * w).prop_map(move |d| Tensor3::from_vec(c, h, w, d).unwrap())
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_translation_invariant(a in bbox(), b in bbox(), dx in -20.0..20.0f64, dy in -20.0..20.0f64) {
        let d = Point2::new(dx, dy);
        prop_assert!((iou(&a, &b) - iou(&a.translated(d), &b.translated(d))).abs() < 1e-9);
    }

    #[test]
    fn similarity_inverse_round_trips(t in transform(), x in -100.0..100.0f64, y in -100.0..100.0f64) {
        let p = Point2::new(x, y);
        prop_assert!(t.inverse().apply(t.apply(p)).distance(p) < 1e-9);
        let c = Point2::new(47.5, 31.0);
        prop_assert!(t.inverse().apply_about(c, t.apply_about(c, p)).distance(p) < 1e-9);
    }

    #[test]
    fn accumulation_is_a_prefix_sum(steps in proptest::collection::vec(transform(), 1..30)) {
        let m = accumulate_motion(&steps).unwrap();
        prop_assert_eq!(m.len(), steps.len());
        let mut prev = Point2::ZERO;
        for (s, &cur) in steps.iter().zip(&m) {
            prop_assert!((cur - prev).distance(s.motion_vector()) < 1e-9);
            prev = cur;
        }
    }

    #[test]
    fn normalized_scores_are_bounded_and_affine_invariant(
        s in tensor(1, 9, 8),
        t in tensor(1, 4, 3),
        gain in 0.1..10.0f64,
        offset in -5.0..5.0f64,
    ) {
        let (_, _, a) = correlate_normalized(&s, &t).unwrap();
        prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        let scaled = Tensor3 { data: s.data.iter().map(|v| gain * v + offset).collect(), ..s.clone() };
        let (_, _, b) = correlate_normalized(&scaled, &t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn all_ones_mask_equals_plain_correlation(s in tensor(2, 8, 9), t in tensor(2, 3, 5)) {
        let sm = Tensor3::from_vec(2, 8, 9, vec![1.0; 144]).unwrap();
        let tm = Tensor3::from_vec(2, 3, 5, vec![1.0; 30]).unwrap();
        let (_, _, a) = correlate_masked(&s, &sm, &t, &tm).unwrap();
        let (_, _, b) = correlate_normalized(&s, &t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_values_do_not_matter(s in tensor(1, 8, 8), t in tensor(1, 4, 4), junk in -50.0..50.0f64, k in 0usize..16) {
        let sm = Tensor3::from_vec(1, 8, 8, vec![1.0; 64]).unwrap();
        let mut tm = Tensor3::from_vec(1, 4, 4, vec![1.0; 16]).unwrap();
        tm.data[k] = 0.0;
        let mut t2 = t.clone();
        t2.data[k] = junk;
        let (_, _, a) = correlate_masked(&s, &sm, &t, &tm).unwrap();
        let (_, _, b) = correlate_masked(&s, &sm, &t2, &tm).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_target_keeps_a_box_already_at_the_mean(
        vals in proptest::collection::vec(0.0..1.0f64, 96),
        b in (0.0..12.0f64, 0.0..8.0f64, 1.0..8.0f64, 1.0..8.0f64),
    ) {
        let f = Frame::new(12, 8, vals).unwrap();
        let bx = BoundingBox::new(b.0, b.1, b.2, b.3).unwrap();
        let (x0, x1, y0, y1) = f.box_pixels(&bx);
        let inside = |x: usize, y: usize| (x0..x1).contains(&x) && (y0..y1).contains(&y);
        let outside: Vec<f64> = (0..8).flat_map(|y| (0..12).map(move |x| (x, y))).filter(|&(x, y)| !inside(x, y)).map(|(x, y)| f.get(x, y)).collect();
        prop_assume!(!outside.is_empty());
        // a box at the mean of the rest leaves the frame mean at that value
        let m = outside.iter().sum::<f64>() / outside.len() as f64;
        let g = Frame::from_fn(12, 8, |x, y| if inside(x, y) { m } else { f.get(x, y) });
        let masked = mask_target(&g, &bx);
        for (x, y) in masked.data().iter().zip(g.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_temperature_keeps_the_branch(a in -20.0..20.0f64, b in -20.0..20.0f64, t in 0.01..50.0f64) {
        let cal = CalibrationParams::new(t).unwrap();
        let one = CalibrationParams::new(1.0).unwrap();
        prop_assert_eq!(assessed_branch(&one, a, b).0, assessed_branch(&cal, a, b).0);
        let (branch, p, q) = assessed_branch(&cal, a, b);
        if p != q {
            prop_assert_eq!(branch, select_branch(p, q));
        }
        prop_assert_eq!(select_branch(0.5, 0.5), Branch::Tracker);
    }
}
