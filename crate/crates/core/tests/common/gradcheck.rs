//! Analytic gradients against central finite differences.

use adnet_core::model::{AdNetConfig, ModelParams};
use adnet_core::numerics::{NodeId, ParamSet, Tape, Tensor2};
use adnet_core::training::{ad_loss_with_grad, mse_loss_with_grad, record_total_loss, TrainConfig};
use adnet_core::windowing::Window;
use rand::Rng;

use super::*;

const H: f64 = 1e-3;
pub const PER_OP_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;

type Build = dyn Fn(&mut Tape, &ParamSet, NodeId) -> NodeId;

/// Records `build` on a fresh tape and reduces its output with the fixed
/// projection `proj`. Returns the loss, the input gradient, and leaves
/// parameter gradients in `params`.
fn run(params: &mut ParamSet, input: &Tensor2, proj: &[f64], build: &Build) -> (f64, Option<Tensor2>) {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let out = build(&mut tape, params, x);
    let v = tape.value(out);
    let value: f64 = v.as_slice().iter().zip(proj).map(|(a, b)| a * b).sum();
    let local = Tensor2::new(v.channels(), v.length(), proj.to_vec()).unwrap();
    let root = tape.scalar_fn(out, value, local).unwrap();
    params.zero_grad();
    let grads = tape.backward(root, params).unwrap();
    (value, grads.wrt(x).cloned())
}

fn loss_only(params: &ParamSet, input: &Tensor2, proj: &[f64], build: &Build) -> f64 {
    let mut p = params.clone();
    run(&mut p, input, proj, build).0
}

/// Checks every input and parameter coordinate; returns the worst error and
/// how many coordinates were checked.
fn check_op(params: &ParamSet, input: &Tensor2, out_len: usize, seed: u64, piecewise: bool, build: &Build) -> (f64, usize) {
    let mut r = rng(seed);
    let proj = uniform_vec(&mut r, out_len, -1.0, 1.0);
    let mut analytic = params.clone();
    let (_, grad_x) = run(&mut analytic, input, &proj, build);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..input.as_slice().len() {
        let f = |v: f64| {
            let mut x = input.clone();
            x.as_mut_slice()[i] = v;
            loss_only(params, &x, &proj, build)
        };
        let x0 = input.as_slice()[i];
        if piecewise && straddles_kink(f, x0, H) {
            continue;
        }
        let numeric = central_difference(f, x0, H);
        let a = grad_x.as_ref().map_or(0.0, |g| g.as_slice()[i]);
        worst = worst.max(rel_err(a, numeric));
        checked += 1;
    }
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let f = |v: f64| {
                let mut ps = params.clone();
                ps.iter_mut().nth(pi).unwrap().value[j] = v;
                loss_only(&ps, input, &proj, build)
            };
            let x0 = p.value[j];
            if piecewise && straddles_kink(f, x0, H) {
                continue;
            }
            let numeric = central_difference(f, x0, H);
            let a = analytic.iter().nth(pi).unwrap().grad[j];
            worst = worst.max(rel_err(a, numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

pub fn conv_params(r: &mut impl Rng, cout: usize, cin: usize, k: usize) -> ParamSet {
    let mut ps = ParamSet::new();
    let shape = if k == 1 { vec![cout, cin] } else { vec![cout, cin, k] };
    ps.push("w", shape, uniform_vec(r, cout * cin * k, -2.0, 2.0)).unwrap();
    ps.push("b", vec![cout], uniform_vec(r, cout, -2.0, 2.0)).unwrap();
    ps
}

/// Dilated and pointwise convolution over `draws` random shapes and values.
pub fn conv_suite(draws: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for draw in 0..draws {
        let mut r = rng(1000 + draw);
        let (cin, cout, len) = (r.random_range(1..4), r.random_range(1..4), r.random_range(1..12));
        let k = [1, 3, 5][r.random_range(0..3)];
        let dilation = 1usize << r.random_range(0..4);
        let params = conv_params(&mut r, cout, cin, k);
        let input = uniform_tensor(&mut r, cin, len);
        let (w, b) = (params.find("w").unwrap(), params.find("b").unwrap());
        let build = move |t: &mut Tape, p: &ParamSet, x: NodeId| {
            if k == 1 {
                t.pointwise_conv(p, x, w, b).unwrap()
            } else {
                t.conv1d_dilated(p, x, w, b, k, dilation).unwrap()
            }
        };
        let (e, n) = check_op(&params, &input, cout * len, draw, false, &build);
        assert!(n > 0);
        worst = worst.max(e);
    }
    worst
}

/// ReLU, sigmoid, add, mask and weighted sum.
pub fn elementwise_suite(draws: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for draw in 0..draws {
        let mut r = rng(2000 + draw);
        let (c, len) = (r.random_range(1..4), r.random_range(1..10));
        let input = uniform_tensor(&mut r, c, len);
        let other = uniform_tensor(&mut r, c, len);
        let valid = r.random_range(1..=len);
        let mask: Vec<f64> = (0..len).map(|t| if t < valid { 1.0 } else { 0.0 }).collect();
        let params = ParamSet::new();
        let builds: Vec<(bool, Box<Build>)> = vec![
            (true, Box::new(|t: &mut Tape, _: &ParamSet, x| t.relu(x))),
            (false, Box::new(|t: &mut Tape, _: &ParamSet, x| t.sigmoid(x))),
            (false, Box::new(move |t: &mut Tape, _: &ParamSet, x| {
                let y = t.leaf(other.clone());
                let s = t.add(x, y).unwrap();
                t.add(s, x).unwrap()
            })),
            (false, Box::new(move |t: &mut Tape, _: &ParamSet, x| t.mask_mul(x, &mask).unwrap())),
            (false, Box::new(|t: &mut Tape, _: &ParamSet, x| {
                let s = t.sigmoid(x);
                t.weighted_sum(&[(s, 0.7), (x, -1.3)]).unwrap()
            })),
        ];
        for (piecewise, build) in &builds {
            let (e, _) = check_op(&params, &input, c * len, draw, *piecewise, build.as_ref());
            worst = worst.max(e);
        }
    }
    worst
}

/// MSE and AD losses with respect to the scores; returns the worst error
/// and the number of AD coordinates skipped at kinks.
pub fn loss_suite(draws: u64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for draw in 0..draws {
        let mut r = rng(3000 + draw);
        let len = r.random_range(2..16);
        let scores = uniform_vec(&mut r, len, 0.0, 1.0);
        let mut targets: Vec<u8> = (0..len).map(|_| r.random_range(0..2)).collect();
        targets[0] = 0;
        targets[1] = 1;
        let valid = r.random_range(2..=len);
        let mask: Vec<f64> = (0..len).map(|t| if t < valid { 1.0 } else { 0.0 }).collect();
        let alpha = r.random_range(0.0..1.0);
        let (_, g_mse) = mse_loss_with_grad(&scores, &targets, &mask).unwrap();
        let (_, g_ad) = ad_loss_with_grad(&scores, &targets, &mask, alpha).unwrap();
        for i in 0..len {
            let at = |v: f64, which: u8| {
                let mut s = scores.clone();
                s[i] = v;
                if which == 0 {
                    mse_loss_with_grad(&s, &targets, &mask).unwrap().0
                } else {
                    ad_loss_with_grad(&s, &targets, &mask, alpha).unwrap().0
                }
            };
            worst = worst.max(rel_err(g_mse[i], central_difference(|v| at(v, 0), scores[i], H)));
            if straddles_kink(|v| at(v, 1), scores[i], H) {
                skipped += 1;
                continue;
            }
            worst = worst.max(rel_err(g_ad[i], central_difference(|v| at(v, 1), scores[i], H)));
        }
    }
    (worst, skipped)
}

pub fn small_config() -> AdNetConfig {
    AdNetConfig { window_width: 8, num_stages: 2, num_layers: 3, kernel_size: 3, hidden_channels: 8, input_dim: 6, threshold: 0.5 }
}

fn window_loss(model: &ModelParams, window: &Window, targets: &[u8], cfg: &TrainConfig) -> f64 {
    let mut tape = Tape::new();
    let heads = model.record(&mut tape, window, model.config().num_stages).unwrap();
    record_total_loss(&mut tape, &heads, targets, &window.mask, cfg).unwrap().1.total
}

/// Central difference at `H`, or `None` when it disagrees with the estimate
/// at `H/10`: the loss is not smooth within `H` of `x` there (a ReLU kink,
/// the hinge, or a hard-pair switch, which makes the AD term jump).
fn smooth_difference(mut f: impl FnMut(f64) -> f64, x: f64) -> Option<f64> {
    let coarse = central_difference(&mut f, x, H);
    let fine = central_difference(&mut f, x, H / 10.0);
    (rel_err(coarse, fine) <= END_TO_END_TOL / 10.0).then_some(coarse)
}

#[derive(Debug, Default)]
pub struct CheckStats {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckStats {
    fn record(&mut self, err: f64) {
        self.worst = self.worst.max(err);
        self.checked += 1;
    }
}

/// Full-network loss gradient over `draws` random models, windows and
/// targets, checking `coords` random parameter coordinates and every
/// unmasked input feature per draw.
pub fn end_to_end_check(draws: u64, coords: usize) -> CheckStats {
    let cfg = small_config();
    let train = TrainConfig::default();
    let mut stats = CheckStats::default();
    for draw in 0..draws {
        let mut r = rng(4000 + draw);
        let model = ModelParams::build(&cfg, 10_000 + draw).unwrap();
        let valid = r.random_range(2..=cfg.window_width);
        let mask: Vec<f64> = (0..cfg.window_width).map(|t| if t < valid { 1.0 } else { 0.0 }).collect();
        let window = Window {
            features: uniform_tensor(&mut r, cfg.input_dim, cfg.window_width),
            mask,
            video_id: String::new(),
            start_clip: 0,
        };
        let targets: Vec<u8> = (0..cfg.window_width).map(|_| r.random_range(0..2)).collect();

        let mut tape = Tape::new();
        let x = tape.leaf(window.features.clone());
        let heads = model.record_from(&mut tape, x, &window.mask, cfg.num_stages).unwrap();
        let (root, _) = record_total_loss(&mut tape, &heads, &targets, &window.mask, &train).unwrap();
        let mut analytic = model.params().clone();
        analytic.zero_grad();
        let grads = tape.backward(root, &mut analytic).unwrap();
        let gx = grads.wrt(x).unwrap();

        let sizes: Vec<usize> = model.params().iter().map(|p| p.numel()).collect();
        for _ in 0..coords {
            let pi = r.random_range(0..sizes.len());
            let j = r.random_range(0..sizes[pi]);
            let f = |v: f64| {
                let mut m = model.clone();
                m.params_mut().iter_mut().nth(pi).unwrap().value[j] = v;
                window_loss(&m, &window, &targets, &train)
            };
            let x0 = model.params().iter().nth(pi).unwrap().value[j];
            let Some(numeric) = smooth_difference(f, x0) else {
                stats.skipped += 1;
                continue;
            };
            let a = analytic.iter().nth(pi).unwrap().grad[j];
            stats.record(rel_err(a, numeric));
        }
        for d in 0..cfg.input_dim {
            for t in 0..valid {
                let f = |v: f64| {
                    let mut w = window.clone();
                    w.features.set(d, t, v);
                    window_loss(&model, &w, &targets, &train)
                };
                let Some(numeric) = smooth_difference(f, window.features.get(d, t)) else {
                    stats.skipped += 1;
                    continue;
                };
                stats.record(rel_err(gx.get(d, t), numeric));
            }
        }
    }
    stats
}
