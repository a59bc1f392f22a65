mod common;

use adnet_core::evaluation::{
    evaluate, expand_to_frames, f1_at_k, frame_auc, segments_from_labels, PredictedTimeline, Scope,
    TemporalSegment, TruthTimeline,
};
use common::metrics::*;
use common::rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn greedy_matches_exhaustive_matcher() {
    let rate = greedy_divergence_rate(1000, 77);
    println!("greedy/optimal divergence rate {:.2}%", rate * 100.0);
    assert!(rate < 0.02, "divergence rate {rate}");
}

#[test]
fn rank_auc_matches_pairwise() {
    let worst = auc_max_deviation(1000, 500);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn pooled_normal_scope_counts_every_video() {
    // video a: abnormal predicted everywhere, so both of its normal segments are missed;
    // video b: all normal, predicted correctly
    let gt_a = vec![0, 0, 1, 1, 1, 0, 0, 0];
    let preds = vec![
        PredictedTimeline { video_id: "a".into(), frame_scores: vec![0.9; 8], threshold: 0.5 },
        PredictedTimeline { video_id: "b".into(), frame_scores: vec![0.1; 8], threshold: 0.5 },
    ];
    let truths = vec![
        TruthTimeline { video_id: "a".into(), frame_labels: gt_a },
        TruthTimeline { video_id: "b".into(), frame_labels: vec![0; 8] },
    ];
    let report = evaluate(&preds, &truths, &[10]).unwrap();
    // pooled: 1 TP of 3 normal ground-truth segments; a per-video mean would give 50
    assert!((report.normal[0].recall - 100.0 / 3.0).abs() < 1e-12);
    assert_eq!(report.normal[0].precision, 100.0);
}

proptest! {
    #[test]
    fn f1_non_increasing_in_k(seed in any::<u64>()) {
        let mut r = rng(seed);
        let frames = r.random_range(2..200);
        let pred = random_partition(&mut r, frames, 12);
        let gt = random_partition(&mut r, frames, 12);
        for scope in Scope::ALL_SCOPES {
            let mut prev = f64::INFINITY;
            for k in 1..=100 {
                let f = f1_at_k(&pred, &gt, k, scope).unwrap().f1;
                prop_assert!(f <= prev + 1e-12);
                prev = f;
            }
            prop_assert_eq!(f1_at_k(&gt, &gt, 100, scope).unwrap().f1, if gt.iter().any(|s| scope.includes(s.label)) { 100.0 } else { 0.0 });
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..100);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..20) as f64 / 20.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(frame_auc(&scores, &labels).unwrap(), frame_auc(&transformed, &labels).unwrap());
    }

    #[test]
    fn frame_and_clip_segmentation_agree(scores in proptest::collection::vec(0.0f64..1.0, 1..60), n in 1usize..20) {
        let clip_labels: Vec<u8> = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
        let frame_labels = expand_to_frames(&clip_labels, n, n * scores.len()).unwrap();
        let from_frames = segments_from_labels(&frame_labels).unwrap();
        let scaled: Vec<TemporalSegment> = segments_from_labels(&clip_labels)
            .unwrap()
            .into_iter()
            .map(|s| TemporalSegment::new(s.start_frame * n as u64, s.end_frame * n as u64, s.label))
            .collect();
        prop_assert_eq!(from_frames, scaled);
    }
}
