//! Mini-batch RMSprop training with patience-based early stopping and the
//! two-stage retraining protocol: stage one finds the epoch budget on
//! train/validation, stage two retrains from a fresh init on the combined
//! pool for exactly that many epochs.

use crate::dataset::{Split, WindowedDataset};
use crate::error::{Error, Result};
use crate::nn::{mse_loss, Model};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// All training hyperparameters. Defaults are the ones used throughout the
/// benchmark: RMSprop(lr=0.001, rho=0.9, eps=1e-7), batch 32, patience 10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Reshuffle training batches every epoch (seeded).
    pub shuffle_each_epoch: bool,
    /// Start stage two from the stage-one weights instead of a fresh
    /// same-seed initialization.
    pub warm_start_stage2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-7,
            seed: 1,
            shuffle_each_epoch: true,
            warm_start_stage2: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience < 1 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// RMSprop state: one squared-gradient accumulator per parameter tensor.
///
/// Update rule (elementwise):
/// `s <- rho s + (1 - rho) g^2`, `p <- p - lr g / (sqrt(s) + epsilon)`.
#[derive(Debug, Clone)]
pub struct Rmsprop {
    learning_rate: f64,
    rho: f64,
    epsilon: f64,
    accumulators: Vec<Tensor>,
}

impl Rmsprop {
    pub fn new(config: &TrainConfig, params: &[&Tensor]) -> Self {
        Rmsprop {
            learning_rate: config.learning_rate,
            rho: config.rho,
            epsilon: config.epsilon,
            accumulators: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.accumulators.len() {
            return Err(Error::shape(
                "rmsprop step",
                format!(
                    "{} params vs {} grads vs {} accumulators",
                    params.len(),
                    grads.len(),
                    self.accumulators.len()
                ),
            ));
        }
        for ((param, grad), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            if param.shape() != grad.shape() {
                return Err(Error::shape(
                    "rmsprop step",
                    format!("param {:?} vs grad {:?}", param.shape(), grad.shape()),
                ));
            }
            for ((p, &g), s) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(acc.data_mut())
            {
                *s = self.rho * *s + (1.0 - self.rho) * g * g;
                *p -= self.learning_rate * g / (s.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Stop once the running-minimum validation loss has not strictly improved
/// for more than `patience` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Record the validation loss of `epoch` (1-indexed); returns true when
    /// training should stop. Ties do not count as improvement, so
    /// `best_epoch` is the earliest minimum.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
        }
        epoch - self.best_epoch > self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Per-epoch loss trace of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    /// `(train_loss, val_loss)` per epoch, in order.
    pub epochs: Vec<(f64, f64)>,
    /// 1-indexed epoch with the minimum validation loss (earliest on ties).
    pub best_epoch: usize,
    /// 1-indexed epoch at which training stopped.
    pub stopped_epoch: usize,
}

impl TrainingCurves {
    /// `epoch,train_loss,val_loss` CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for (i, (train, val)) in self.epochs.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, train, val)?;
        }
        Ok(())
    }
}

fn batched_indices(indices: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    indices.chunks(batch_size)
}

/// One pass over the given training samples in seeded-shuffled mini-batches
/// (the final short batch included); returns the mean per-batch loss.
pub fn train_epoch(
    model: &mut Model,
    dataset: &WindowedDataset,
    indices: &mut [usize],
    config: &TrainConfig,
    optimizer: &mut Rmsprop,
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if config.shuffle_each_epoch {
        indices.shuffle(rng);
    }
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for batch in batched_indices(indices, config.batch_size) {
        let (x, y) = dataset.batch(batch);
        let pred = model.forward(&x)?;
        let (loss, d_pred) = mse_loss(&pred, &y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let grads = model.backward(&d_pred)?;
        let mut params = model.params_mut();
        optimizer.step(&mut params, &grads)?;
        loss_sum += loss;
        batches += 1;
    }
    Ok(loss_sum / batches as f64)
}

/// Unshuffled full-batch loss over a sample range.
pub fn evaluate_loss(model: &mut Model, dataset: &WindowedDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let (x, y) = dataset.batch(indices);
    let pred = model.forward(&x)?;
    Ok(mse_loss(&pred, &y)?.0)
}

/// Stage one: train on the train split, monitor validation loss after every
/// epoch, stop on patience or at `max_epochs`.
pub fn train_with_early_stopping(
    model: &mut Model,
    dataset: &WindowedDataset,
    config: &TrainConfig,
) -> Result<TrainingCurves> {
    config.validate()?;
    let mut train_indices: Vec<usize> = dataset.indices(Split::Train).collect();
    let val_indices: Vec<usize> = dataset.indices(Split::Val).collect();
    if val_indices.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }

    let mut optimizer = Rmsprop::new(config, &model.params());
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut epochs = Vec::new();
    let mut stopped_epoch = config.max_epochs;
    for epoch in 1..=config.max_epochs {
        let train_loss = train_epoch(model, dataset, &mut train_indices, config, &mut optimizer, &mut rng)?;
        let val_loss = evaluate_loss(model, dataset, &val_indices)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite("validation loss"));
        }
        if !model.all_params_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        epochs.push((train_loss, val_loss));
        if stopper.observe(epoch, val_loss) {
            stopped_epoch = epoch;
            break;
        }
    }
    Ok(TrainingCurves {
        epochs,
        best_epoch: stopper.best_epoch(),
        stopped_epoch,
    })
}

/// Train for exactly `epochs` passes over the given pool, no validation.
/// Returns the per-epoch training losses.
pub fn train_fixed_epochs(
    model: &mut Model,
    dataset: &WindowedDataset,
    pool: &[usize],
    epochs: usize,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut indices = pool.to_vec();
    let mut optimizer = Rmsprop::new(config, &model.params());
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        losses.push(train_epoch(model, dataset, &mut indices, config, &mut optimizer, &mut rng)?);
        if !model.all_params_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
    }
    Ok(losses)
}

/// Outcome of a two-stage run.
#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub model: Model,
    /// Stage-one trace (train/val losses, best and stopped epochs).
    pub curves: TrainingCurves,
    /// Stage-two per-epoch training losses (no validation split).
    pub stage2_losses: Vec<f64>,
}

/// The full protocol: early-stopped stage one on train/val, then retrain on
/// the combined pool for exactly `best_epoch` epochs. By default stage two
/// reinitializes from the same seed; `warm_start_stage2` continues from the
/// stage-one weights instead.
pub fn two_stage_train(
    build: impl Fn(u64) -> Result<Model>,
    dataset: &WindowedDataset,
    config: &TrainConfig,
) -> Result<TwoStageOutcome> {
    let mut stage1 = build(config.seed)?;
    let curves = train_with_early_stopping(&mut stage1, dataset, config)?;

    let mut stage2 = if config.warm_start_stage2 {
        stage1
    } else {
        build(config.seed)?
    };
    let pool: Vec<usize> = dataset.train_val_indices().collect();
    let stage2_losses = train_fixed_epochs(&mut stage2, dataset, &pool, curves.best_epoch, config)?;
    stage2.clear_caches();
    Ok(TwoStageOutcome {
        model: stage2,
        curves,
        stage2_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitRatios;
    use crate::ingest::FeatureSeries;
    use crate::nn::{Activation, LayerSpec};

    fn tiny_dataset(n: usize) -> WindowedDataset {
        let series = FeatureSeries::synthetic_sine(n, 20.0, 10.0, 0.05, 100.0, 1000.0);
        WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap()
    }

    fn linear_model(seed: u64) -> Model {
        Model::new(
            14,
            2,
            &[
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 1, activation: Activation::Linear },
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn rmsprop_zero_gradient_decays_accumulator() {
        let mut model = linear_model(0);
        let config = TrainConfig::default();
        let mut opt = Rmsprop::new(&config, &model.params());
        // seed the accumulator with one nonzero step
        let shapes: Vec<Tensor> = model.params().iter().map(|p| Tensor::filled(p.shape(), 1.0)).collect();
        opt.step(&mut model.params_mut(), &shapes).unwrap();
        let before: Vec<f64> = opt.accumulators().iter().map(|a| a.data()[0]).collect();
        let params_before: Vec<f64> = model.params().iter().map(|p| p.data()[0]).collect();

        let zeros: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        opt.step(&mut model.params_mut(), &zeros).unwrap();
        let after: Vec<f64> = opt.accumulators().iter().map(|a| a.data()[0]).collect();
        let params_after: Vec<f64> = model.params().iter().map(|p| p.data()[0]).collect();

        assert_eq!(params_before, params_after, "zero gradient must not move params");
        for (b, a) in before.iter().zip(&after) {
            assert!((a - b * config.rho).abs() < 1e-15, "accumulator decays by rho");
        }
    }

    #[test]
    fn rmsprop_single_step_worked_example() {
        // p = 1, g = 1, lr = 0.1, rho = 0.9, fresh state:
        // s = 0.1, p' = 1 - 0.1 / (sqrt(0.1) + 1e-7)
        let config = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut p = Tensor::from_slice(&[1.0]);
        let g = Tensor::from_slice(&[1.0]);
        let mut opt = Rmsprop::new(&config, &[&p]);
        opt.step(&mut [&mut p], std::slice::from_ref(&g)).unwrap();
        assert!((opt.accumulators()[0].data()[0] - 0.1).abs() < 1e-15);
        assert!((p.data()[0] - 0.683772).abs() < 1e-6, "got {}", p.data()[0]);
    }

    #[test]
    fn rmsprop_accumulator_converges_to_squared_gradient() {
        let config = TrainConfig::default();
        let mut p = Tensor::from_slice(&[0.0]);
        let g = Tensor::from_slice(&[3.0]);
        let mut opt = Rmsprop::new(&config, &[&p]);
        let mut prev_gap = 9.0;
        for _ in 0..200 {
            opt.step(&mut [&mut p], std::slice::from_ref(&g)).unwrap();
            let s = opt.accumulators()[0].data()[0];
            assert!(s >= 0.0);
            let gap = (9.0 - s).abs();
            assert!(gap <= prev_gap + 1e-12, "approach to g^2 must be monotone");
            prev_gap = gap;
        }
        assert!(prev_gap < 9.0 * 0.9f64.powi(190));
    }

    #[test]
    fn rmsprop_shape_mismatch_rejected() {
        let config = TrainConfig::default();
        let mut p = Tensor::from_slice(&[1.0, 2.0]);
        let mut opt = Rmsprop::new(&config, &[&p]);
        let bad = Tensor::from_slice(&[1.0]);
        assert!(matches!(
            opt.step(&mut [&mut p], std::slice::from_ref(&bad)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn early_stopping_patience_arithmetic() {
        // val losses 5, 4, 3, then flat: best epoch 3, stop at 3 + 10 + 1 = 14
        let mut stopper = EarlyStopping::new(10);
        let mut stopped_at = 0;
        for epoch in 1..=100 {
            let loss = match epoch {
                1 => 5.0,
                2 => 4.0,
                3 => 3.0,
                _ => 6.0,
            };
            if stopper.observe(epoch, loss) {
                stopped_at = epoch;
                break;
            }
        }
        assert_eq!(stopped_at, 14);
        assert_eq!(stopper.best_epoch(), 3);
    }

    #[test]
    fn early_stopping_ties_keep_earliest_best() {
        let mut stopper = EarlyStopping::new(2);
        assert!(!stopper.observe(1, 1.0));
        assert!(!stopper.observe(2, 1.0)); // tie: not an improvement
        assert!(!stopper.observe(3, 1.0));
        assert!(stopper.observe(4, 1.0));
        assert_eq!(stopper.best_epoch(), 1);
    }

    #[test]
    fn strictly_decreasing_runs_to_max_epochs() {
        let config = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default()
        };
        let dataset = tiny_dataset(120);
        let mut model = linear_model(3);
        let curves = train_with_early_stopping(&mut model, &dataset, &config).unwrap();
        assert!(curves.stopped_epoch <= 30);
        assert!(curves.best_epoch >= 1);
        // stopping never happens sooner than patience epochs past the best
        assert!(
            curves.stopped_epoch == config.max_epochs
                || curves.stopped_epoch == curves.best_epoch + config.patience + 1
        );
    }

    #[test]
    fn step_count_matches_batch_arithmetic() {
        // 64 samples -> 2 steps; 65 -> 3 steps with a final short batch.
        let dataset = tiny_dataset(120);
        let config = TrainConfig::default();
        let mut idx64: Vec<usize> = (0..64).collect();
        let mut idx65: Vec<usize> = (0..65).collect();
        let mut model = linear_model(5);
        let mut opt = Rmsprop::new(&config, &model.params());
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let batches64 = idx64.chunks(config.batch_size).count();
        let batches65 = idx65.chunks(config.batch_size).count();
        assert_eq!(batches64, 2);
        assert_eq!(batches65, 3);
        assert_eq!(idx65.chunks(config.batch_size).last().unwrap().len(), 1);
        // and the epoch actually runs over those batches
        let loss = train_epoch(&mut model, &dataset, &mut idx64, &config, &mut opt, &mut rng).unwrap();
        assert!(loss.is_finite());
        let loss = train_epoch(&mut model, &dataset, &mut idx65, &config, &mut opt, &mut rng).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let dataset = tiny_dataset(140);
        let config = TrainConfig {
            max_epochs: 12,
            ..TrainConfig::default()
        };
        let run = |seed: u64| {
            let cfg = TrainConfig { seed, ..config };
            let mut model = linear_model(seed);
            let curves = train_with_early_stopping(&mut model, &dataset, &cfg).unwrap();
            let weights: Vec<Vec<f64>> = model.params().iter().map(|p| p.data().to_vec()).collect();
            (curves, weights)
        };
        let (c1, w1) = run(9);
        let (c2, w2) = run(9);
        assert_eq!(c1, c2);
        assert_eq!(w1, w2);
        let (c3, _) = run(10);
        assert!(c1 != c3 || c1.epochs != c3.epochs);
    }

    #[test]
    fn two_stage_uses_best_epoch_and_combined_pool() {
        let dataset = tiny_dataset(140);
        let config = TrainConfig {
            max_epochs: 15,
            ..TrainConfig::default()
        };
        let outcome = two_stage_train(|seed| Ok(linear_model(seed)), &dataset, &config).unwrap();
        assert_eq!(outcome.stage2_losses.len(), outcome.curves.best_epoch);
        let pool: Vec<usize> = dataset.train_val_indices().collect();
        let (train_end, val_end) = dataset.split_bounds();
        assert_eq!(pool.len(), val_end);
        assert_eq!(pool.len(), train_end + (val_end - train_end));

        // determinism end to end
        let again = two_stage_train(|seed| Ok(linear_model(seed)), &dataset, &config).unwrap();
        for (a, b) in outcome.model.params().iter().zip(again.model.params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn empty_validation_split_rejected() {
        let series = FeatureSeries::synthetic_sine(120, 20.0, 10.0, 0.05, 100.0, 1000.0);
        let dataset = WindowedDataset::build(&series, 14, SplitRatios::default()).unwrap();
        let mut model = linear_model(0);
        let mut bad = TrainConfig::default();
        bad.patience = 0;
        assert!(train_with_early_stopping(&mut model, &dataset, &bad).is_err());
    }

    #[test]
    fn curves_csv_format() {
        let curves = TrainingCurves {
            epochs: vec![(0.5, 0.6), (0.25, 0.5)],
            best_epoch: 2,
            stopped_epoch: 2,
        };
        let mut out = Vec::new();
        curves.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss\n1,0.5,0.6\n2,0.25,0.5\n");
    }
}
