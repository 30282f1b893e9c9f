//! Property tests for the module invariants.

use advshift::dataset::BoxLabel;
use advshift::datagen::{DomainSpec, StyleParams};
use advshift::detector::{decode, loss_det, nms, DetectorConfig, Detection, RawPrediction};
use advshift::featalign::{afl_loss_source, afl_loss_target};
use advshift::image::Image;
use advshift::metrics::iou_cxcywh;
use advshift::perturb::project_linf;
use advshift::tensor::Tensor3;
use advshift::trainer::{lr_schedule, TrainConfig};
use proptest::prelude::*;

fn small_delta() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0..1.0f64, 12)
}

fn arb_box() -> impl Strategy<Value = [f64; 4]> {
    (0.05..0.45f64, 0.05..0.45f64).prop_flat_map(|(hw, hh)| {
        (hw..(1.0 - hw), hh..(1.0 - hh)).prop_map(move |(cx, cy)| [cx, cy, 2.0 * hw, 2.0 * hh])
    })
}

proptest! {
    #[test]
    fn projection_bounds_and_idempotence(data in small_delta(), eps in 0.0..0.5f64) {
        let delta = Tensor3::from_vec(3, 2, 2, data);
        let p = project_linf(delta.clone(), eps);
        prop_assert!(p.data.iter().all(|v| v.abs() <= eps));
        let pp = project_linf(p.clone(), eps);
        prop_assert_eq!(&p.data, &pp.data);
        // identity on the feasible set
        let small = project_linf(p.clone(), eps + 0.1);
        prop_assert_eq!(&small.data, &p.data);
    }

    #[test]
    fn loss_terms_are_nonnegative_and_additive(
        vals in proptest::collection::vec(-5.0..5.0f64, 4 * 4 * 16),
        cx in 0.2..0.8f64,
        cy in 0.2..0.8f64,
        class_id in 0usize..3,
    ) {
        let cfg = DetectorConfig {
            grid_size: 4,
            anchors: vec![(0.3, 0.3), (0.5, 0.5)],
            num_classes: 3,
            f1_channels: vec![4, 8, 8, 8],
            f1_strides: vec![2, 2, 2, 1],
            f2_channels: vec![8],
            input_resolution: (32, 32),
        };
        let raw = RawPrediction::new(Tensor3::from_vec(14, 4, 4, vals[..14 * 16].to_vec()), &cfg);
        let labels = vec![BoxLabel { class_id, cx, cy, w: 0.3, h: 0.3 }];
        let b = loss_det(&raw, &labels, &cfg).unwrap();
        prop_assert!(b.l_cls >= 0.0 && b.l_loc >= 0.0 && b.l_obj >= 0.0);
        prop_assert_eq!(b.l_det, b.l_cls + b.l_loc + b.l_obj);
    }

    #[test]
    fn decoded_boxes_stay_in_the_unit_square(
        vals in proptest::collection::vec(-6.0..6.0f64, 24 * 64),
    ) {
        let cfg = DetectorConfig::default();
        let raw = RawPrediction::new(Tensor3::from_vec(24, 8, 8, vals), &cfg);
        let dets = decode(&raw, &cfg, 0.05);
        for d in &dets {
            prop_assert!(d.cx - d.w / 2.0 >= -1e-12);
            prop_assert!(d.cx + d.w / 2.0 <= 1.0 + 1e-12);
            prop_assert!(d.cy - d.h / 2.0 >= -1e-12);
            prop_assert!(d.cy + d.h / 2.0 <= 1.0 + 1e-12);
            prop_assert!((0.0..=1.0).contains(&d.score));
        }
        // sorted by descending score
        for w in dets.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn nms_output_is_an_order_preserving_subset(
        boxes in proptest::collection::vec((arb_box(), 0usize..2, 0.0..1.0f64), 1..12),
    ) {
        let dets: Vec<Detection> = boxes
            .iter()
            .map(|(b, class_id, score)| Detection {
                class_id: *class_id,
                score: *score,
                cx: b[0],
                cy: b[1],
                w: b[2],
                h: b[3],
            })
            .collect();
        let kept = nms(&dets, 0.5);
        prop_assert!(kept.len() <= dets.len());
        for k in &kept {
            prop_assert!(dets.iter().any(|d| d == k));
        }
        for w in kept.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                if kept[i].class_id == kept[j].class_id {
                    prop_assert!(iou_cxcywh(kept[i].bbox(), kept[j].bbox()) <= 0.5);
                }
            }
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou_cxcywh(a, b);
        let ba = iou_cxcywh(b, a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(iou_cxcywh(a, a), 1.0);
    }

    #[test]
    fn afl_losses_live_in_unit_interval(
        probs in proptest::collection::vec(0.0..=1.0f64, 16),
    ) {
        let m = Tensor3::from_vec(1, 4, 4, probs.clone());
        let s = afl_loss_source(&m);
        let t = afl_loss_target(&m);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((0.0..=1.0).contains(&t));
        // target loss is the source loss of the complement
        let complement = Tensor3::from_vec(1, 4, 4, probs.iter().map(|p| 1.0 - p).collect());
        prop_assert!((t - afl_loss_source(&complement)).abs() < 1e-15);
    }

    #[test]
    fn lr_schedule_stays_within_bounds(f in 0.0..=1.0f64) {
        let cfg = TrainConfig::default();
        let lr = lr_schedule(f, &cfg);
        prop_assert!(lr >= 0.0 && lr <= cfg.lr_max + 1e-15);
    }

    #[test]
    fn ppm_roundtrip_quantizes_once(
        pixels in proptest::collection::vec(0.0..=1.0f64, 3 * 4 * 6),
    ) {
        let mut img = Image::new(4, 6);
        img.pixels = Tensor3::from_vec(3, 4, 6, pixels);
        let once = Image::from_ppm_bytes(&img.to_ppm_bytes(), std::path::Path::new("m")).unwrap();
        let twice = Image::from_ppm_bytes(&once.to_ppm_bytes(), std::path::Path::new("m")).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn style_interpolation_is_componentwise_monotone(beta in 0.0..=1.0f64) {
        let d = DomainSpec::target_with_beta(beta);
        let s = StyleParams::source_default();
        let t = StyleParams::target_default();
        let bg = d.bg_base();
        for ch in 0..3 {
            let lo = s.bg_base[ch].min(t.bg_base[ch]);
            let hi = s.bg_base[ch].max(t.bg_base[ch]);
            prop_assert!(bg[ch] >= lo - 1e-12 && bg[ch] <= hi + 1e-12);
        }
    }
}
