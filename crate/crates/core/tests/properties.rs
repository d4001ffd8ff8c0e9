use proptest::prelude::*;

use vehicle_amodal::image::{ImageTensor, MaskTensor};
use vehicle_amodal::metrics::mask_metrics;
use vehicle_amodal::pipeline::composite;
use vehicle_amodal::synth_data::{generate_sample, SynthConfig};

fn mask_from(h: usize, w: usize, bits: &[bool]) -> MaskTensor {
    MaskTensor::from_fn(h, w, |r, c| bits[r * w + c])
}

fn arb_case() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<bool>, Vec<f32>, Vec<f32>)> {
    (8usize..14, 8usize..14).prop_flat_map(|(h, w)| {
        let n = h * w;
        (
            Just(h),
            Just(w),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.0f32..=1.0, n * 3),
            prop::collection::vec(0.0f32..=1.0, n * 3),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn composite_takes_exactly_the_invisible_region((h, w, m, v, a, b) in arb_case()) {
        let (mask, visible) = (mask_from(h, w, &m), mask_from(h, w, &v));
        let (image, generated) = (ImageTensor::new(h, w, a).unwrap(), ImageTensor::new(h, w, b).unwrap());
        let (out, region) = composite(&image, &generated, &mask, &visible).unwrap();
        for r in 0..h {
            for c in 0..w {
                let inside = m[r * w + c] && !v[r * w + c];
                prop_assert_eq!(region.is_set(r, c), inside);
                let want = if inside { generated.pixel(r, c) } else { image.pixel(r, c) };
                prop_assert_eq!(out.pixel(r, c).map(f32::to_bits), want.map(f32::to_bits));
            }
        }
    }

    #[test]
    fn metric_identities((h, w, p, g, _, _) in arb_case()) {
        let (pm, gm) = (mask_from(h, w, &p), mask_from(h, w, &g));
        let a = mask_metrics(&pm, &gm).unwrap();
        let b = mask_metrics(&gm, &pm).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.iou, b.iou);
        for v in [a.precision, a.recall, a.f1, a.iou, a.l1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(a.iou <= a.f1 + 1e-12);
        if a.iou > 0.0 {
            prop_assert!((a.f1 - 2.0 * a.iou / (1.0 + a.iou)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn synthetic_samples_are_consistent(seed in 0u64..1_000_000) {
        let cfg = SynthConfig::default();
        let s = generate_sample(&cfg, seed).unwrap();
        prop_assert!(s.visible_mask.is_subset_of(&s.full_mask));
        prop_assert!(s.visible_mask.count() > 0);
        let [lo, hi] = cfg.occlusion_fraction_range;
        prop_assert!(s.occlusion_fraction >= lo - 1e-9 && s.occlusion_fraction <= hi + 1e-9, "{}", s.occlusion_fraction);
        let invisible = s.full_mask.count() - s.visible_mask.count();
        prop_assert!((s.occlusion_fraction - invisible as f64 / s.full_mask.count() as f64).abs() < 1e-12);
        // Visible vehicle pixels are untouched by the occluders.
        let (h, w) = s.size();
        for r in 0..h {
            for c in 0..w {
                if s.visible_mask.is_set(r, c) {
                    prop_assert_eq!(s.image_occluded.pixel(r, c), s.target_unoccluded.pixel(r, c));
                }
            }
        }
        prop_assert!(generate_sample(&cfg, seed).unwrap().bit_eq(&s));
    }
}
