use actube_core::eval::average_precision;
use actube_core::footprint::{fisher_vector, GaussianMixture};
use actube_core::localize::{surviving_clips, TrimMode};
use actube_core::{iou, nms, st_iou, BoundingBox, Detection, Source, Tube};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0..100.0f64, 0.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64).prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
}

fn arb_tube() -> impl Strategy<Value = Tube> {
    (0usize..20, prop::collection::vec(arb_box(), 1..12)).prop_map(|(start, boxes)| {
        let entries = boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| Detection::new(start + i, b, vec![1.0], Source::Merged))
            .collect();
        Tube::new("v", entries).unwrap()
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let x = iou(&a, &b);
        prop_assert_eq!(x, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn st_iou_is_symmetric_and_bounded(a in arb_tube(), b in arb_tube()) {
        let x = st_iou(&a, &b);
        prop_assert!((x - st_iou(&b, &a)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((st_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nms_is_idempotent(boxes in prop::collection::vec((arb_box(), 0.0..1.0f64), 0..20), thr in 0.0..1.0f64) {
        let dets: Vec<Detection> = boxes.iter().map(|(b, s)| Detection::new(0, *b, vec![*s], Source::Static)).collect();
        let once = nms(&dets, 0, thr);
        prop_assert_eq!(&nms(&once, 0, thr), &once);
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
            }
        }
    }

    #[test]
    fn ap_is_bounded(outcomes in prop::collection::vec(any::<bool>(), 0..30), extra in 0usize..5) {
        let num_gt = outcomes.iter().filter(|o| **o).count() + extra;
        let ap = average_precision(&outcomes, num_gt);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
    }

    #[test]
    fn zero_threshold_keeps_everything(scores in prop::collection::vec(0.0..1.0f64, 1..20)) {
        prop_assert_eq!(surviving_clips(&scores, 0.0, TrimMode::Trim), Some(0..scores.len()));
    }

    #[test]
    fn fisher_vectors_are_unit_or_zero(xs in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..10)) {
        let gmm = GaussianMixture::new(vec![0.5, 0.5], vec![vec![-1.0, 0.0], vec![1.0, 0.5]], vec![vec![1.0, 0.5], vec![0.7, 1.2]]).unwrap();
        let fv = fisher_vector(&xs, &gmm).unwrap();
        prop_assert_eq!(fv.len(), 8);
        let norm: f64 = fv.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
    }
}
