//! Mini-batch Adam training with per-epoch exponential learning-rate decay.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{evaluate_maps, MetricReport};
use crate::ops::sigmoid_map;

use super::config::TrainConfig;
use super::loss::joint_loss;
use super::model::{ToyArch, ToyModel};
use super::synth::{synth_dataset, SynthSample};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean total loss over the epoch's training samples, each taken before
    /// the update of its batch.
    pub loss: f64,
    pub coarse: f64,
    pub pred: f64,
    pub sac: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub curve: Vec<EpochStats>,
    pub report: MetricReport,
}

impl TrainOutcome {
    /// `epoch,lr,loss,coarse,pred,sac` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("epoch,lr,loss,coarse,pred,sac\n");
        for e in &self.curve {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.lr, e.loss, e.coarse, e.pred, e.sac
            ));
        }
        out
    }
}

/// Holdout metrics of `model` on `samples`, stems `holdout_000`, ….
pub fn evaluate_model(model: &ToyModel, samples: &[SynthSample]) -> Result<MetricReport> {
    let items = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let out = model.forward(&s.image)?;
            Ok((
                format!("holdout_{i:03}"),
                sigmoid_map(&out.o_f),
                s.gt.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_maps(items))
}

/// Trains on all but the last `cfg.holdout` samples and scores the held-out
/// remainder.
pub fn train(dataset: &[SynthSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.len() <= cfg.holdout {
        return Err(Error::Config(format!(
            "dataset of {} samples leaves nothing to train on with holdout {}",
            dataset.len(),
            cfg.holdout
        )));
    }
    let (train_set, holdout) = dataset.split_at(dataset.len() - cfg.holdout);
    let arch = ToyArch::from_config(cfg);
    let mut model = ToyModel::init(arch, cfg.seed);
    let mut adam = Adam::new(model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut sum, mut coarse, mut pred, mut sac) = (0.0, 0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let out = model.forward(&s.image)?;
                    let (loss, g_out) = joint_loss(&out, s, cfg)?;
                    Ok((loss, model.backward(&out, &g_out)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; model.param_count()];
            for (loss, g) in &results {
                if !loss.total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        detail: format!("non-finite loss {loss:?}"),
                    });
                }
                sum += loss.total;
                coarse += loss.coarse;
                pred += loss.pred;
                sac += loss.sac;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite gradient".into(),
                });
            }
            adam.step(model.params_mut(), &grad, lr);
        }
        let n = train_set.len() as f64;
        let stats = EpochStats {
            epoch,
            lr,
            loss: sum / n,
            coarse: coarse / n,
            pred: pred / n,
            sac: sac / n,
        };
        log::info!("epoch {epoch}: lr {lr:.3e} loss {:.6}", stats.loss);
        curve.push(stats);
    }
    let report = evaluate_model(&model, holdout)?;
    Ok(TrainOutcome {
        model,
        curve,
        report,
    })
}

/// Generates the configured synthetic dataset and trains on it.
pub fn train_synthetic(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = synth_dataset(
        cfg.seed,
        cfg.train_samples + cfg.holdout,
        cfg.side,
        cfg.difficulty,
        cfg.sigma,
    )?;
    train(&data, cfg)
}

/// Trailing `window`-epoch moving average of the loss curve.
pub fn moving_average(curve: &[EpochStats], window: usize) -> Vec<f64> {
    if window == 0 || curve.len() < window {
        return Vec::new();
    }
    curve
        .windows(window)
        .map(|w| w.iter().map(|e| e.loss).sum::<f64>() / window as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::synth_sample;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            side: 48,
            channels: [3, 4, 5, 6],
            fusion_channels: 3,
            max_epochs: 1,
            batch: 1,
            holdout: 0,
            train_samples: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0, 0.5];
        Adam::new(3).step(&mut p, &[0.3, -4.0, 0.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 1.9).abs() < 1e-7);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn one_step_on_one_sample_descends() {
        for seed in 0..5 {
            let cfg = TrainConfig { seed, ..tiny_cfg() };
            let s = vec![synth_sample(seed, 48, 0.3).unwrap()];
            let out = train(&s, &cfg).unwrap();
            let before = out.curve[0].loss;
            let m = &out.model;
            let (after, _) = joint_loss(&m.forward(&s[0].image).unwrap(), &s[0], &cfg).unwrap();
            assert!(
                after.total < before,
                "seed {seed}: {} !< {before}",
                after.total
            );
        }
    }

    #[test]
    fn rejects_empty_training_split() {
        let s = vec![synth_sample(0, 48, 0.3).unwrap()];
        let cfg = TrainConfig {
            holdout: 1,
            ..tiny_cfg()
        };
        assert!(matches!(train(&s, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn moving_average_windows() {
        let curve: Vec<EpochStats> = [5.0, 4.0, 3.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &l)| EpochStats {
                epoch: i,
                lr: 0.0,
                loss: l,
                coarse: 0.0,
                pred: 0.0,
                sac: 0.0,
            })
            .collect();
        assert_eq!(moving_average(&curve, 2), vec![4.5, 3.5, 2.5]);
        assert!(moving_average(&curve, 5).is_empty());
    }
}
