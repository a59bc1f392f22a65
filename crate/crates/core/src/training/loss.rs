//! Window losses: masked MSE and the hard-pair margin (AD) loss.
//!
//! Each function also has a `*_with_grad` form returning the gradient with
//! respect to the scores, which the tape records as a fixed local gradient.
//! For the AD loss the hard pairs are chosen at the current scores and held
//! constant, so the returned gradient is a subgradient of the piecewise
//! linear loss.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::model::StageOutput;
use crate::numerics::{NodeId, Tape, Tensor2};

use super::TrainConfig;

fn check_lengths(scores: &[f64], targets: &[u8], mask: &[f64]) -> Result<()> {
    if scores.len() != targets.len() || scores.len() != mask.len() {
        return Err(input_err!(
            "scores ({}), targets ({}) and mask ({}) differ in length",
            scores.len(),
            targets.len(),
            mask.len()
        ));
    }
    Ok(())
}

/// Mean of `(y_t - a_t)^2` over unmasked positions.
pub fn mse_loss(scores: &[f64], targets: &[u8], mask: &[f64]) -> Result<f64> {
    mse_loss_with_grad(scores, targets, mask).map(|(v, _)| v)
}

pub fn mse_loss_with_grad(scores: &[f64], targets: &[u8], mask: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(scores, targets, mask)?;
    let n = mask.iter().filter(|&&m| m != 0.0).count();
    if n == 0 {
        return Err(input_err!("every position of the window is masked"));
    }
    let n = n as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for (i, ((&y, &a), &m)) in scores.iter().zip(targets).zip(mask).enumerate() {
        if m == 0.0 {
            continue;
        }
        let diff = y - f64::from(a);
        sum += diff * diff;
        grad[i] = 2.0 * diff / n;
    }
    Ok((sum / n, grad))
}

/// Class-mean margins of the AD loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdMargins {
    /// Mean over abnormal clips of `y_i - y_HN(i) - alpha`.
    pub abnormal: f64,
    /// Mean over normal clips of `y_HA(j) - y_j - alpha`.
    pub normal: f64,
}

impl AdMargins {
    pub fn loss(&self) -> f64 {
        (-self.abnormal - self.normal).max(0.0)
    }
}

/// Index in `pool` whose score is closest to `y`; the first wins ties.
fn closest(scores: &[f64], pool: &[usize], y: f64) -> usize {
    let mut best = pool[0];
    let mut best_d = (scores[best] - y).abs();
    for &j in &pool[1..] {
        let d = (scores[j] - y).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Margins and hard-pair indices, or `None` when a class is absent.
fn ad_terms(scores: &[f64], targets: &[u8], mask: &[f64], alpha: f64) -> Result<Option<(AdMargins, Vec<f64>)>> {
    check_lengths(scores, targets, mask)?;
    if mask.iter().all(|&m| m == 0.0) {
        return Err(input_err!("every position of the window is masked"));
    }
    let valid = |i: &usize| mask[*i] != 0.0;
    let abnormal: Vec<usize> = (0..scores.len()).filter(valid).filter(|&i| targets[i] == 1).collect();
    let normal: Vec<usize> = (0..scores.len()).filter(valid).filter(|&i| targets[i] != 1).collect();
    if abnormal.is_empty() || normal.is_empty() {
        return Ok(None);
    }
    let (na, nn) = (abnormal.len() as f64, normal.len() as f64);
    // d(M_A + M_N)/dy, used with a negative sign below
    let mut dsum = vec![0.0; scores.len()];
    let mut m_a = 0.0;
    for &i in &abnormal {
        let hn = closest(scores, &normal, scores[i]);
        m_a += scores[i] - scores[hn] - alpha;
        dsum[i] += 1.0 / na;
        dsum[hn] -= 1.0 / na;
    }
    let mut m_n = 0.0;
    for &j in &normal {
        let ha = closest(scores, &abnormal, scores[j]);
        m_n += scores[ha] - scores[j] - alpha;
        dsum[ha] += 1.0 / nn;
        dsum[j] -= 1.0 / nn;
    }
    Ok(Some((AdMargins { abnormal: m_a / na, normal: m_n / nn }, dsum)))
}

/// Class-mean margins, `None` when either class is missing among unmasked clips.
pub fn ad_margins(scores: &[f64], targets: &[u8], mask: &[f64], alpha: f64) -> Result<Option<AdMargins>> {
    Ok(ad_terms(scores, targets, mask, alpha)?.map(|(m, _)| m))
}

/// `max(-M_A - M_N, 0)` with per-class averaged hard-pair margins.
pub fn ad_loss(scores: &[f64], targets: &[u8], mask: &[f64], alpha: f64) -> Result<f64> {
    ad_loss_with_grad(scores, targets, mask, alpha).map(|(v, _)| v)
}

pub fn ad_loss_with_grad(scores: &[f64], targets: &[u8], mask: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
    match ad_terms(scores, targets, mask, alpha)? {
        None => Ok((0.0, vec![0.0; scores.len()])),
        Some((margins, dsum)) => {
            let loss = margins.loss();
            let grad = if loss > 0.0 { dsum.iter().map(|d| -d).collect() } else { vec![0.0; scores.len()] };
            Ok((loss, grad))
        }
    }
}

/// Stage-summed loss components for one window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    /// Σ_s MSE
    pub mse: f64,
    /// Σ_s AD (0 when the AD term is disabled)
    pub ad: f64,
    /// Σ_s (MSE + λ·AD)
    pub total: f64,
}

/// `Σ_s (mse_s + λ·ad_s)` over stage outputs.
pub fn total_loss(stages: &[StageOutput], targets: &[u8], mask: &[f64], cfg: &TrainConfig) -> Result<LossBreakdown> {
    if stages.is_empty() {
        return Err(input_err!("no stage outputs"));
    }
    let mut out = LossBreakdown::default();
    for stage in stages {
        let mse = mse_loss(&stage.scores, targets, mask)?;
        let ad = if cfg.use_ad_loss { ad_loss(&stage.scores, targets, mask, cfg.alpha)? } else { 0.0 };
        out.mse += mse;
        out.ad += ad;
        out.total += mse + cfg.lambda * ad;
    }
    Ok(out)
}

/// Records the total loss over the stage score nodes `heads`; returns the
/// scalar loss node and its breakdown.
pub fn record_total_loss(
    tape: &mut Tape,
    heads: &[NodeId],
    targets: &[u8],
    mask: &[f64],
    cfg: &TrainConfig,
) -> Result<(NodeId, LossBreakdown)> {
    if heads.is_empty() {
        return Err(input_err!("no stage outputs"));
    }
    let mut terms = Vec::with_capacity(heads.len() * 2);
    let mut out = LossBreakdown::default();
    for &head in heads {
        let scores = tape.value(head).as_slice().to_vec();
        let (mse, g) = mse_loss_with_grad(&scores, targets, mask)?;
        let node = tape.scalar_fn(head, mse, Tensor2::row_vector(&g)?)?;
        terms.push((node, 1.0));
        out.mse += mse;
        out.total += mse;
        if cfg.use_ad_loss {
            let (ad, g) = ad_loss_with_grad(&scores, targets, mask, cfg.alpha)?;
            let node = tape.scalar_fn(head, ad, Tensor2::row_vector(&g)?)?;
            terms.push((node, cfg.lambda));
            out.ad += ad;
            out.total += cfg.lambda * ad;
        }
    }
    let root = tape.weighted_sum(&terms)?;
    Ok((root, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.0, 1.0], &[0, 1], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.5, 0.5], &[0, 1], &[1.0, 1.0]).unwrap(), 0.25);
        assert_eq!(mse_loss(&[0.5, 9.0], &[0, 0], &[1.0, 0.0]).unwrap(), 0.25);
        assert!(mse_loss(&[0.5], &[0], &[0.0]).is_err());
        assert!(mse_loss(&[0.5], &[0, 1], &[1.0]).is_err());
    }

    #[test]
    fn ad_examples() {
        let m = ad_margins(&[1.0, 0.0], &[1, 0], &[1.0, 1.0], 0.5).unwrap().unwrap();
        assert_eq!((m.abnormal, m.normal), (0.5, 0.5));
        assert_eq!(ad_loss(&[1.0, 0.0], &[1, 0], &[1.0, 1.0], 0.5).unwrap(), 0.0);
        let m = ad_margins(&[0.5, 0.5], &[1, 0], &[1.0, 1.0], 0.5).unwrap().unwrap();
        assert_eq!((m.abnormal, m.normal), (-0.5, -0.5));
        assert_eq!(ad_loss(&[0.5, 0.5], &[1, 0], &[1.0, 1.0], 0.5).unwrap(), 1.0);
        assert_eq!(ad_loss(&[0.3, 0.9, 0.1], &[0, 0, 0], &[1.0; 3], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ad_hard_pairs_are_closest_opponents() {
        // abnormal 0.6 -> hard normal 0.55; abnormal 0.9 -> 0.55
        // normal 0.1 -> hard abnormal 0.6; normal 0.55 -> 0.6
        let scores = [0.1, 0.6, 0.55, 0.9];
        let targets = [0, 1, 0, 1];
        let m = ad_margins(&scores, &targets, &[1.0; 4], 0.5).unwrap().unwrap();
        let expect_a = ((0.6 - 0.55 - 0.5) + (0.9 - 0.55 - 0.5)) / 2.0;
        let expect_n = ((0.6 - 0.1 - 0.5) + (0.6 - 0.55 - 0.5)) / 2.0;
        assert!((m.abnormal - expect_a).abs() < 1e-15);
        assert!((m.normal - expect_n).abs() < 1e-15);
    }

    #[test]
    fn total_loss_composition() {
        let cfg = TrainConfig { lambda: 0.5, use_ad_loss: true, ..TrainConfig::default() };
        let stage = StageOutput { scores: alloc::vec![0.5, 0.5] };
        let one = total_loss(core::slice::from_ref(&stage), &[1, 0], &[1.0, 1.0], &cfg).unwrap();
        assert_eq!((one.mse, one.ad, one.total), (0.25, 1.0, 0.75));
        let three = total_loss(&[stage.clone(), stage.clone(), stage], &[1, 0], &[1.0, 1.0], &cfg).unwrap();
        assert!((three.total - 2.25).abs() < 1e-12);
        let perfect = StageOutput { scores: alloc::vec![1.0, 0.0] };
        assert_eq!(total_loss(&[perfect], &[1, 0], &[1.0, 1.0], &cfg).unwrap().total, 0.0);
    }
}
