//! MSE objective, Adam, the learning-rate schedule and the seeded training loop.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{backward_into, forward, predict, Gradients};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::Network;
use crate::operators::MeasurementOperator;

/// Mean squared error and its gradient `2(pred − target)/N` over all entries.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.as_slice().iter().zip(target.as_slice()) {
        let d = p - t;
        sum += d * d;
        grad.push(2.0 * d / n);
    }
    let grad = Matrix::from_vec(pred.rows(), pred.cols(), grad)?;
    Ok((if n > 0.0 { sum / n } else { 0.0 }, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// One bias-corrected Adam update on flat buffers. `step` is the 1-based index of this
/// update.
pub fn adam_update(params: &mut [f64], grads: &[f64], m1: &mut [f64], m2: &mut [f64], step: u64, lr: f64, cfg: &AdamConfig) {
    debug_assert!(step >= 1);
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m1.iter_mut()).zip(m2.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps_hat);
    }
}

/// Moment estimates for every network parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m1: Gradients,
    pub m2: Gradients,
    pub config: AdamConfig,
    pub lr: f64,
}

impl AdamState {
    pub fn new(net: &Network, lr: f64, config: AdamConfig) -> AdamState {
        AdamState {
            step: 0,
            m1: Gradients::zeros_like(net),
            m2: Gradients::zeros_like(net),
            config,
            lr,
        }
    }

    /// Applies one update with the current `lr`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.m1.layers.len() != grads.layers.len() {
            return Err(Error::StaleTape("gradient and parameter layer counts differ".into()));
        }
        for (layer, (g, (m, v))) in net
            .layers()
            .iter()
            .zip(grads.layers.iter().zip(self.m1.layers.iter().zip(&self.m2.layers)))
        {
            if g.weight.shape() != layer.weight.shape() || m.weight.shape() != layer.weight.shape() || v.bias.shape() != layer.bias.shape() {
                return Err(Error::shape("adam_step", g.weight.shape(), layer.weight.shape()));
            }
        }
        self.step += 1;
        let step = self.step;
        let lr = self.lr;
        let cfg = self.config;
        for (layer, (g, (m, v))) in net
            .layers_mut()
            .iter_mut()
            .zip(grads.layers.iter().zip(self.m1.layers.iter_mut().zip(self.m2.layers.iter_mut())))
        {
            adam_update(
                layer.weight.as_mut_slice(),
                g.weight.as_slice(),
                m.weight.as_mut_slice(),
                v.weight.as_mut_slice(),
                step,
                lr,
                &cfg,
            );
            adam_update(
                layer.bias.as_mut_slice(),
                g.bias.as_slice(),
                m.bias.as_mut_slice(),
                v.bias.as_mut_slice(),
                step,
                lr,
                &cfg,
            );
        }
        Ok(())
    }
}

/// Fraction of the base rate left at the end of an exponentially decayed run.
pub const LR_FINAL_FRACTION: f64 = 0.1;

/// `base_lr · 0.1^{iter/total}`.
pub fn lr_schedule(iter: usize, total: usize, base_lr: f64) -> f64 {
    if total == 0 {
        return base_lr;
    }
    base_lr * LR_FINAL_FRACTION.powf(iter as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Exponential decay to a tenth of the base rate.
    Exponential,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub iterations: usize,
    pub base_lr: f64,
    pub schedule: Schedule,
    /// Rows drawn per iteration; `None` trains on the full batch.
    pub batch_size: Option<usize>,
    /// Evaluate and record a checkpoint every this many iterations (and at the end).
    pub checkpoint_every: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: 1000,
            base_lr: 1e-3,
            schedule: Schedule::Exponential,
            batch_size: None,
            checkpoint_every: 100,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    #[serde(with = "crate::metrics::float_or_marker")]
    pub loss: f64,
    #[serde(with = "crate::metrics::float_map")]
    pub metrics: BTreeMap<String, f64>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// One entry per completed iteration.
    pub losses: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainHistory {
    /// Everything except wall-clock timings, which are the only nondeterministic part.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.losses.len() == other.losses.len()
            && self.losses.iter().zip(&other.losses).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.checkpoints.len() == other.checkpoints.len()
            && self.checkpoints.iter().zip(&other.checkpoints).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.metrics.len() == b.metrics.len()
                    && a.metrics
                        .iter()
                        .zip(&b.metrics)
                        .all(|((ka, va), (kb, vb))| ka == kb && va.to_bits() == vb.to_bits())
            })
    }

    /// One JSON object per checkpoint.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.checkpoints {
            out.push_str(&serde_json::to_string(c)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Two whitespace-separated columns, `iteration loss`, for gnuplot.
    pub fn to_loss_table(&self) -> String {
        let mut out = String::from("# iteration loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i} {l:e}\n"));
        }
        out
    }
}

/// Rows pushed through forward and backward at a time. Keeps every intermediate small
/// enough to stay cache resident; the results do not depend on it.
pub const TRAIN_CHUNK_ROWS: usize = 2048;

fn row_range(m: &Matrix, start: usize, end: usize) -> Matrix {
    let cols = m.cols();
    Matrix::from_vec(end - start, cols, m.as_slice()[start * cols..end * cols].to_vec()).expect("row range in bounds")
}

/// MSE between `op(net(coords))` and `observations`, and its parameter gradients.
///
/// Rows are processed in blocks of [`TRAIN_CHUNK_ROWS`]. Pointwise operators need a single
/// pass; other operators first evaluate the whole prediction, pull the loss gradient back
/// through the adjoint, then replay the blocks with a tape. Either way the result is
/// bit-identical to one unblocked forward and backward pass.
pub fn loss_and_gradients(net: &Network, op: &MeasurementOperator, coords: &Matrix, observations: &Matrix) -> Result<(f64, Gradients)> {
    let rows = coords.rows();
    let mut grads = Gradients::zeros_like(net);
    if op.is_pointwise() {
        let outputs = net.spec().output_dim;
        if observations.shape() != (rows, outputs) {
            return Err(Error::shape("loss_and_gradients", observations.shape(), (rows, outputs)));
        }
        let n = (rows * outputs) as f64;
        let mut sum = 0.0;
        for start in (0..rows).step_by(TRAIN_CHUNK_ROWS) {
            let end = (start + TRAIN_CHUNK_ROWS).min(rows);
            let (pred, tape) = forward(net, &row_range(coords, start, end))?;
            let target = &observations.as_slice()[start * outputs..end * outputs];
            let mut upstream = pred;
            for (p, &t) in upstream.as_mut_slice().iter_mut().zip(target) {
                let d = *p - t;
                sum += d * d;
                *p = 2.0 * d / n;
            }
            backward_into(net, tape, &upstream, &mut grads)?;
        }
        return Ok((if n > 0.0 { sum / n } else { 0.0 }, grads));
    }
    let pred = predict(net, coords)?;
    let measured = op.apply(&pred)?;
    let (loss, grad) = mse_loss(&measured, observations)?;
    let upstream = op.adjoint(&grad, pred.shape())?;
    for start in (0..rows).step_by(TRAIN_CHUNK_ROWS) {
        let end = (start + TRAIN_CHUNK_ROWS).min(rows);
        let (_, tape) = forward(net, &row_range(coords, start, end))?;
        backward_into(net, tape, &row_range(&upstream, start, end), &mut grads)?;
    }
    Ok((loss, grads))
}

/// Callback computing named quality metrics for the current network at a checkpoint.
pub type Evaluator<'a> = dyn FnMut(&Network) -> Result<BTreeMap<String, f64>> + 'a;

/// Trains with the default options for `iters` full-batch iterations.
pub fn train(
    net: Network,
    op: &MeasurementOperator,
    observations: &Matrix,
    coords: &Matrix,
    iters: usize,
    seed: u64,
) -> Result<(Network, TrainHistory)> {
    let opts = TrainOptions {
        iterations: iters,
        seed,
        batch_size: op.batch_size(),
        ..TrainOptions::default()
    };
    train_with(net, op, observations, coords, &opts, None)
}

/// `forward → operator → MSE → adjoint → backward → Adam`, repeated.
///
/// A non-finite loss or network output aborts with [`Error::Divergence`] naming the
/// iteration.
pub fn train_with(
    mut net: Network,
    op: &MeasurementOperator,
    observations: &Matrix,
    coords: &Matrix,
    opts: &TrainOptions,
    mut evaluator: Option<&mut Evaluator<'_>>,
) -> Result<(Network, TrainHistory)> {
    let batch = opts.batch_size.filter(|&b| b < coords.rows());
    if batch.is_some() && !op.is_pointwise() {
        return Err(Error::Config(format!("{} cannot be trained on mini-batches", op.name())));
    }
    if batch.is_none() {
        let expected = op.observation_shape(coords.rows(), net.spec().output_dim)?;
        if expected != observations.shape() {
            return Err(Error::shape("train", expected, observations.shape()));
        }
    } else if observations.rows() != coords.rows() {
        return Err(Error::shape("train", coords.shape(), observations.shape()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(&net, opts.base_lr, opts.adam);
    let mut history = TrainHistory::default();
    let started = Instant::now();
    let diverged = |iteration: usize| Error::Divergence {
        iteration,
        method: None,
    };

    for it in 0..opts.iterations {
        let step_batch;
        let (c, y) = match batch {
            Some(size) => {
                let idx = rand::seq::index::sample(&mut rng, coords.rows(), size).into_vec();
                step_batch = (coords.gather_rows(&idx), observations.gather_rows(&idx));
                (&step_batch.0, &step_batch.1)
            }
            None => (coords, observations),
        };
        let (loss, grads) = match loss_and_gradients(&net, op, c, y) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(diverged(it)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(diverged(it));
        }
        adam.lr = match opts.schedule {
            Schedule::Exponential => lr_schedule(it, opts.iterations, opts.base_lr),
            Schedule::Constant => opts.base_lr,
        };
        adam.step(&mut net, &grads)?;
        if !net.layers().iter().all(|l| l.weight.is_finite() && l.bias.is_finite()) {
            return Err(diverged(it));
        }
        history.losses.push(loss);

        let done = it + 1;
        if (opts.checkpoint_every > 0 && done % opts.checkpoint_every == 0) || done == opts.iterations {
            let metrics = match evaluator.as_mut() {
                Some(eval) => eval(&net)?,
                None => BTreeMap::new(),
            };
            history.checkpoints.push(Checkpoint {
                iteration: done,
                loss,
                metrics,
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
        }
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::network::NetworkSpec;
    use rand::Rng;

    #[test]
    fn blocked_gradients_equal_single_pass_bits() {
        use crate::autodiff::{backward, forward};
        use crate::operators::grid_coords;
        let spec = NetworkSpec {
            input_dim: 2,
            output_dim: 1,
            hidden_layers: 2,
            hidden_width: 12,
            activation: ActivationKind::Trident { s0: 5.0 },
            encoding: Some(crate::encoding::EncodingSpec::default()),
            init_seed: 8,
        };
        let net = Network::build(spec).unwrap();
        let coords = grid_coords(&[72, 72]);
        assert!(coords.rows() > 2 * TRAIN_CHUNK_ROWS);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let image = Matrix::from_fn(coords.rows(), 1, |_, _| rng.random_range(0.0..1.0));
        let radon = MeasurementOperator::radon(72, 5, 103).unwrap();
        for op in [MeasurementOperator::Identity, radon] {
            let y = op.apply(&image).unwrap();
            let (pred, tape) = forward(&net, &coords).unwrap();
            let (loss, g) = mse_loss(&op.apply(&pred).unwrap(), &y).unwrap();
            let reference = backward(&net, tape, &op.adjoint(&g, pred.shape()).unwrap()).unwrap();
            let (blocked_loss, blocked) = loss_and_gradients(&net, &op, &coords, &y).unwrap();
            assert_eq!(loss.to_bits(), blocked_loss.to_bits(), "{}", op.name());
            let bits = |g: &Gradients| g.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&reference), bits(&blocked), "{}", op.name());
        }
    }

    #[test]
    fn mse_of_identical_inputs_is_zero() {
        let x = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let (loss, grad) = mse_loss(&x, &x).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_unit_offset() {
        let pred = Matrix::filled(2, 2, 1.5);
        let target = Matrix::filled(2, 2, 0.5);
        let (loss, grad) = mse_loss(&pred, &target).unwrap();
        assert_eq!(loss, 1.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Matrix::from_fn(13, 3, |_, _| rng.random_range(-2.0..2.0));
        let b = Matrix::from_fn(13, 3, |_, _| rng.random_range(-2.0..2.0));
        let diffs: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
        let oracle = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        let (loss, _) = mse_loss(&a, &b).unwrap();
        assert!((loss - oracle).abs() <= 1e-15 * oracle);
        assert!(mse_loss(&a, &Matrix::zeros(3, 13)).is_err());
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 1e-3, &AdamConfig::default());
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![0.0, 0.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_update(&mut p, &[3.0, -0.2], &mut m, &mut v, 1, 0.01, &AdamConfig::default());
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    /// Textbook scalar Adam on `(w − 3)²`, written out independently.
    fn scalar_adam_oracle(steps: u64, lr: f64) -> f64 {
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + 1e-8);
        }
        w
    }

    #[test]
    fn adam_scalar_quadratic_matches_oracle() {
        let run = |steps: u64| {
            let mut w = vec![0.0];
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            for step in 1..=steps {
                let g = 2.0 * (w[0] - 3.0);
                adam_update(&mut w, &[g], &mut m, &mut v, step, 0.1, &AdamConfig::default());
            }
            w[0]
        };
        for steps in [1, 10, 50, 100] {
            assert!((run(steps) - scalar_adam_oracle(steps, 0.1)).abs() < 1e-12);
        }
        // Momentum overshoots past the minimum first; after 50 steps w ≈ 3.169.
        assert!((run(50) - 3.168_890_142_842_27).abs() < 1e-9);
        assert!((run(100) - 3.0).abs() < 0.05);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 100, 1e-3), 1e-3);
        let end = lr_schedule(99_999, 100_000, 1e-3);
        assert!((end - 1e-4).abs() < 1e-8);
        let mid = lr_schedule(50, 100, 1.0);
        assert!((mid - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((mid - 0.316).abs() < 1e-3);
    }

    fn small_spec(activation: ActivationKind) -> NetworkSpec {
        NetworkSpec {
            input_dim: 1,
            output_dim: 1,
            hidden_layers: 1,
            hidden_width: 8,
            activation,
            encoding: None,
            init_seed: 1,
        }
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let net = Network::build(small_spec(ActivationKind::Relu)).unwrap();
        let coords = Matrix::column(vec![0.0, 0.5]);
        let (out, hist) = train(net.clone(), &MeasurementOperator::Identity, &Matrix::zeros(2, 1), &coords, 0, 0).unwrap();
        assert_eq!(out, net);
        assert!(hist.losses.is_empty() && hist.checkpoints.is_empty());
    }

    #[test]
    fn first_loss_is_untrained_forward() {
        let net = Network::build(small_spec(ActivationKind::Trident { s0: 1.0 })).unwrap();
        let coords = Matrix::column((0..16).map(|i| i as f64 / 8.0 - 1.0).collect());
        let target = coords.map(|x| x * x);
        let (pred, _) = forward(&net, &coords).unwrap();
        let (expected, _) = mse_loss(&pred, &target).unwrap();
        let (_, hist) = train(net, &MeasurementOperator::Identity, &target, &coords, 3, 0).unwrap();
        assert_eq!(hist.losses[0].to_bits(), expected.to_bits());
        assert_eq!(hist.losses.len(), 3);
    }

    #[test]
    fn divergence_reports_iteration() {
        let net = Network::build(small_spec(ActivationKind::Relu)).unwrap();
        let coords = Matrix::column(vec![0.0, 1.0]);
        let target = Matrix::column(vec![1e300, -1e300]);
        let opts = TrainOptions {
            iterations: 5,
            base_lr: 1e300,
            ..TrainOptions::default()
        };
        let err = train_with(net, &MeasurementOperator::Identity, &target, &coords, &opts, None).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn constant_signal_is_learned() {
        let spec = NetworkSpec {
            hidden_width: 256,
            activation: ActivationKind::Trident { s0: 5.0 },
            encoding: Some(crate::encoding::EncodingSpec::default()),
            ..small_spec(ActivationKind::Relu)
        };
        let net = Network::build(spec).unwrap();
        let coords = Matrix::column((0..256).map(|i| -1.0 + (2 * i + 1) as f64 / 256.0).collect());
        let target = Matrix::filled(256, 1, 0.5);
        let opts = TrainOptions {
            iterations: 500,
            base_lr: 1e-2,
            ..TrainOptions::default()
        };
        let (_, hist) = train_with(net, &MeasurementOperator::Identity, &target, &coords, &opts, None).unwrap();
        let last = *hist.losses.last().unwrap();
        assert!(last < 1e-6, "final loss {last}");
    }
}
