//! Training loops: the self-supervised noisier+→noisier mapping and the
//! supervised upper bound, both with patience-based early stopping on the
//! validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::ops::{mse_and_grad, per_sample_sse};
use super::tensor::Tensor4;
use super::unet::UNet;
use crate::anscombe::anscombe_forward;
use crate::dataset::{PatchDataset, PatchEntry};
use crate::error::{Error, Result};
use crate::image::{anscombe_rescale_forward, ImagePlane};

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Consecutive epochs without a validation-loss decrease tolerated
    /// before stopping. A tie counts as no decrease.
    pub patience: usize,
    /// Safety bound; training always terminates.
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            batch_size: 8,
            patience: 4,
            max_epochs: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {b}")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Losses recorded for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Patience rule: stop after `patience` consecutive epochs whose
/// validation loss did not decrease below the best seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// The loss improved; callers snapshot weights here.
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// A trained network plus everything needed to audit it.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: UNet,
    pub train_config: TrainConfig,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose weights the model carries; attains the minimum
    /// recorded validation loss.
    pub best_epoch: usize,
    pub dataset_digest: String,
}

/// Input/target pair selection for the two training modes.
enum Pairing {
    /// Input z (noisier+), target y (noisier).
    SelfSupervised,
    /// Input x_ans, target the clean patch through the same transform path.
    Supervised,
}

/// Clean pixel patch taken through the Anscombe + rescale path.
fn clean_to_target(clean: &ImagePlane) -> Result<ImagePlane> {
    anscombe_rescale_forward(&anscombe_forward(clean)?)
}

fn collect_pairs(
    entries: &[PatchEntry],
    pairing: &Pairing,
    split_name: &str,
) -> Result<Vec<(ImagePlane, ImagePlane)>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| match pairing {
            Pairing::SelfSupervised => Ok((
                e.triple.z_noisier_plus.clone(),
                e.triple.y_noisier.clone(),
            )),
            Pairing::Supervised => {
                let clean = e.clean.as_ref().ok_or_else(|| {
                    Error::Data(format!(
                        "missing clean patch for {split_name} entry {i} ({}): supervised \
                         training needs a dataset built with clean retention for all splits",
                        e.source_id
                    ))
                })?;
                Ok((e.triple.x_ans.clone(), clean_to_target(clean)?))
            }
        })
        .collect()
}

fn batch_tensors(pairs: &[(ImagePlane, ImagePlane)], idx: &[usize]) -> Result<(Tensor4, Tensor4)> {
    let xs: Vec<&ImagePlane> = idx.iter().map(|&i| &pairs[i].0).collect();
    let ts: Vec<&ImagePlane> = idx.iter().map(|&i| &pairs[i].1).collect();
    Ok((Tensor4::from_planes(&xs)?, Tensor4::from_planes(&ts)?))
}

/// Mean MSE over a fixed set of pairs, accumulated per sample in index
/// order so the result does not depend on batching.
fn evaluate_mse(net: &UNet, pairs: &[(ImagePlane, ImagePlane)], batch: usize) -> Result<f64> {
    let mut sse = 0.0;
    let mut elems = 0usize;
    let all: Vec<usize> = (0..pairs.len()).collect();
    for chunk in all.chunks(batch) {
        let (x, t) = batch_tensors(pairs, chunk)?;
        let out = net.forward(&x)?;
        for s in per_sample_sse(&out, &t) {
            sse += s;
        }
        elems += x.len();
    }
    Ok(sse / elems as f64)
}

fn train_loop(
    mut net: UNet,
    data: &PatchDataset,
    tcfg: &TrainConfig,
    pairing: Pairing,
) -> Result<TrainedModel> {
    tcfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if data.val.is_empty() {
        return Err(Error::Config(
            "validation split is empty: the stopping rule needs it".into(),
        ));
    }

    let train_pairs = collect_pairs(&data.train, &pairing, "train")?;
    let val_pairs = collect_pairs(&data.val, &pairing, "val")?;

    let total_elems: usize = train_pairs.iter().map(|(x, _)| x.len()).sum();
    let mut adam = Adam::new(
        tcfg.learning_rate,
        tcfg.beta1,
        tcfg.beta2,
        tcfg.epsilon,
        net.num_params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut stopper = EarlyStopper::new(tcfg.patience);
    let mut history = Vec::new();
    let mut best_params = net.params().to_vec();
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut sample_sse = vec![0.0; train_pairs.len()];

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let (x, t) = batch_tensors(&train_pairs, chunk)?;
            let trace = net.forward_trace(&x)?;
            let (loss, grad_out) = mse_and_grad(trace.output(), &t);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                    message: format!("training loss became {loss}"),
                });
            }
            let batch_sse = per_sample_sse(trace.output(), &t);
            for (pos, &sample) in chunk.iter().enumerate() {
                sample_sse[sample] = batch_sse[pos];
            }
            let grads = net.backward(&trace, grad_out);
            adam.step(net.params_mut(), &grads);
        }
        // Summing per-sample SSE in index order keeps the reported loss
        // independent of the shuffle.
        let train_loss = sample_sse.iter().sum::<f64>() / total_elems as f64;
        let val_loss = evaluate_mse(&net, &val_pairs, tcfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                message: format!("validation loss became {val_loss}"),
            });
        }
        history.push(EpochStats {
            train_loss,
            val_loss,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params = net.params().to_vec(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    net.set_params(&best_params)?;
    Ok(TrainedModel {
        net,
        train_config: *tcfg,
        history,
        best_epoch: stopper.best_epoch(),
        dataset_digest: data.digest().to_string(),
    })
}

/// Self-supervised training: learn the noisier+ (z) → noisier (y) mapping.
pub fn train(net: UNet, data: &PatchDataset, tcfg: &TrainConfig) -> Result<TrainedModel> {
    train_loop(net, data, tcfg, Pairing::SelfSupervised)
}

/// Supervised upper bound: learn x_ans → clean (both in the rescaled
/// Anscombe domain). Needs clean patches retained on train and val splits.
pub fn train_supervised(net: UNet, data: &PatchDataset, tcfg: &TrainConfig) -> Result<TrainedModel> {
    train_loop(net, data, tcfg, Pairing::Supervised)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::CleanRetention;
    use crate::image::Domain;
    use crate::net::unet::{build_unet, UNetConfig};
    use crate::noise::{make_noisy_triple, NoiseSpec};

    fn stopper_simulation(series: &[f64], patience: usize) -> (usize, usize) {
        // Direct reading of the rule, independent of EarlyStopper.
        let mut best = f64::INFINITY;
        let mut best_epoch = 0;
        let mut stale = 0;
        for (i, &v) in series.iter().enumerate() {
            let epoch = i + 1;
            if v < best {
                best = v;
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    return (epoch, best_epoch);
                }
            }
        }
        (series.len(), best_epoch)
    }

    fn run_stopper(series: &[f64], patience: usize) -> (usize, usize) {
        let mut s = EarlyStopper::new(patience);
        for (i, &v) in series.iter().enumerate() {
            if s.observe(i + 1, v) == StopDecision::Stop {
                return (i + 1, s.best_epoch());
            }
        }
        (series.len(), s.best_epoch())
    }

    #[test]
    fn tie_series_stops_after_epoch_six() {
        let series = [5.0, 4.0, 4.0, 4.0, 4.0, 4.0];
        let (stop, best) = run_stopper(&series, 4);
        assert_eq!((stop, best), (6, 2));
        assert_eq!(stopper_simulation(&series, 4), (6, 2));
    }

    #[test]
    fn stopper_matches_direct_simulation_on_many_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for patience in [1, 2, 4] {
            for _ in 0..200 {
                let len = rng.random_range(1..20);
                let series: Vec<f64> =
                    (0..len).map(|_| rng.random_range(0..6) as f64).collect();
                assert_eq!(
                    run_stopper(&series, patience),
                    stopper_simulation(&series, patience),
                    "series {series:?} patience {patience}"
                );
            }
        }
    }

    fn tiny_dataset(n_train: usize, n_val: usize, size: usize, seed: u64) -> PatchDataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mk = |i: u64| {
            let x = ImagePlane::from_fn(size, size, Domain::AnscombeRescaled, |_, _| {
                rng.random_range(40.0..220.0)
            })
            .unwrap();
            let triple =
                make_noisy_triple(&x, &NoiseSpec::new(30.0, 30.0, seed * 1000 + i).unwrap())
                    .unwrap();
            PatchEntry {
                triple,
                clean: None,
                source_id: format!("synthetic{i}"),
                origin: (0, 0),
            }
        };
        let train: Vec<PatchEntry> = (0..n_train as u64).map(&mut mk).collect();
        let val: Vec<PatchEntry> = (0..n_val as u64).map(|i| mk(1000 + i)).collect();
        PatchDataset::from_parts(
            train,
            val,
            Vec::new(),
            crate::dataset::PatchConfig::default(),
            NoiseSpec::default(),
        )
    }

    #[test]
    fn zero_learning_rate_keeps_weights_and_history_constant() {
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 2,
            kernel_size: 3,
        };
        let net = build_unet(&cfg, 3).unwrap();
        let initial = net.params().to_vec();
        let data = tiny_dataset(6, 2, 8, 4);
        let tcfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 5,
            patience: 10,
            batch_size: 4,
            seed: 8,
            ..TrainConfig::default()
        };
        let model = train(net, &data, &tcfg).unwrap();
        assert_eq!(model.net.params(), initial.as_slice());
        assert_eq!(model.history.len(), 5);
        let first = model.history[0];
        for e in &model.history {
            assert_eq!(e.train_loss.to_bits(), first.train_loss.to_bits());
            assert_eq!(e.val_loss.to_bits(), first.val_loss.to_bits());
        }
    }

    /// Overfit-one-batch oracle: a tiny net on a single triple drives the
    /// train loss below 1% of its starting value.
    #[test]
    fn overfits_single_triple() {
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 8,
            kernel_size: 3,
        };
        let net = build_unet(&cfg, 5).unwrap();
        let data = tiny_dataset(1, 1, 16, 9);
        let tcfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 500,
            batch_size: 1,
            seed: 2,
            ..TrainConfig::default()
        };
        let model = train(net, &data, &tcfg).unwrap();
        let first = model.history.first().unwrap().train_loss;
        let last = model.history.last().unwrap().train_loss;
        assert!(
            last < 0.01 * first,
            "loss only fell from {first} to {last} over {} epochs",
            model.history.len()
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 2,
            kernel_size: 3,
        };
        let data = tiny_dataset(6, 2, 8, 12);
        let tcfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 4,
            patience: 10,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(build_unet(&cfg, 1).unwrap(), &data, &tcfg).unwrap();
        let b = train(build_unet(&cfg, 1).unwrap(), &data, &tcfg).unwrap();
        assert_eq!(a.net.params(), b.net.params());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
    }

    #[test]
    fn best_epoch_attains_minimum_val_loss() {
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 4,
            kernel_size: 3,
        };
        let data = tiny_dataset(8, 3, 8, 21);
        let tcfg = TrainConfig {
            learning_rate: 5e-4,
            max_epochs: 30,
            patience: 4,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let model = train(build_unet(&cfg, 2).unwrap(), &data, &tcfg).unwrap();
        let min = model
            .history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(model.history[model.best_epoch - 1].val_loss, min);
    }

    #[test]
    fn supervised_requires_clean_patches() {
        let cfg = UNetConfig {
            depth: 1,
            base_channels: 2,
            kernel_size: 3,
        };
        let data = tiny_dataset(4, 2, 8, 30);
        let tcfg = TrainConfig {
            max_epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        match train_supervised(build_unet(&cfg, 0).unwrap(), &data, &tcfg) {
            Err(Error::Data(msg)) => assert!(msg.contains("clean"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
        let _ = CleanRetention::AllSplits; // exercised end-to-end in integration tests
    }
}
