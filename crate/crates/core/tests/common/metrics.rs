//! Independent metric oracles: exhaustive segment matching and pairwise AUC.

use adnet_core::evaluation::{frame_auc, match_segments, Scope, SegmentCounts, TemporalSegment, DEFAULT_KS};
use rand::Rng;

use super::rng;

/// Random partition of `[0, frames)` into at most `max_segments` runs with
/// alternating labels.
pub fn random_partition(r: &mut impl Rng, frames: u64, max_segments: usize) -> Vec<TemporalSegment> {
    let n = r.random_range(1..=max_segments.min(frames as usize));
    let mut cuts: Vec<u64> = Vec::new();
    while cuts.len() < n - 1 {
        let c = r.random_range(1..frames);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(frames);
    let mut label: u8 = r.random_range(0..2);
    let mut start = 0;
    let mut out = Vec::new();
    for end in cuts {
        out.push(TemporalSegment::new(start, end, label));
        start = end;
        label ^= 1;
    }
    out
}

/// Exhaustive maximum matching of same-label pairs with IoU >= k.
pub fn optimal_counts(pred: &[TemporalSegment], gt: &[TemporalSegment], k: u32, scope: Scope) -> SegmentCounts {
    let pred: Vec<_> = pred.iter().filter(|s| scope.includes(s.label)).collect();
    let gt: Vec<_> = gt.iter().filter(|s| scope.includes(s.label)).collect();
    let eligible = |p: &TemporalSegment, g: &TemporalSegment| {
        p.label == g.label && p.intersection(g) > 0 && p.intersection(g) as f64 / p.union(g) as f64 >= k as f64 / 100.0
    };
    fn best(i: usize, used: &mut Vec<bool>, pred: &[&TemporalSegment], gt: &[&TemporalSegment], ok: &dyn Fn(&TemporalSegment, &TemporalSegment) -> bool) -> u64 {
        if i == pred.len() {
            return 0;
        }
        let mut top = best(i + 1, used, pred, gt, ok);
        for j in 0..gt.len() {
            if !used[j] && ok(pred[i], gt[j]) {
                used[j] = true;
                top = top.max(1 + best(i + 1, used, pred, gt, ok));
                used[j] = false;
            }
        }
        top
    }
    let tp = best(0, &mut vec![false; gt.len()], &pred, &gt, &eligible);
    SegmentCounts { true_positives: tp, false_positives: pred.len() as u64 - tp, false_negatives: gt.len() as u64 - tp }
}

/// Fraction of instances where greedy and optimal matching disagree.
pub fn greedy_divergence_rate(instances: u64, seed: u64) -> f64 {
    let mut diverged = 0;
    for i in 0..instances {
        let mut r = rng(seed + i);
        let frames = r.random_range(6..80);
        let pred = random_partition(&mut r, frames, 6);
        let gt = random_partition(&mut r, frames, 6);
        let mut differs = false;
        for scope in Scope::ALL_SCOPES {
            for k in DEFAULT_KS {
                let greedy = match_segments(&pred, &gt, k, scope);
                let optimal = optimal_counts(&pred, &gt, k, scope);
                assert!(greedy.true_positives <= optimal.true_positives);
                if greedy != optimal {
                    differs = true;
                    eprintln!("greedy diverges (instance {i}, {scope:?}, k={k}): {greedy:?} vs {optimal:?}; pred {pred:?} gt {gt:?}");
                }
            }
        }
        diverged += u64::from(differs);
    }
    diverged as f64 / instances as f64
}

/// `P(abnormal > normal) + 0.5·P(tie)` over every pair.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Largest gap between [`frame_auc`] and [`pairwise_auc`] over random
/// instances with many tied scores.
pub fn auc_max_deviation(instances: u64, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut r = rng(seed + i);
        let n = r.random_range(2..60);
        let levels = r.random_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let fast = frame_auc(&scores, &labels).unwrap();
        worst = worst.max((fast - pairwise_auc(&scores, &labels)).abs());
    }
    worst
}
