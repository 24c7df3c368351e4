use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{stream_rng, SegmentRecord, TENSOR_LEN};
use crate::error::{Error, Result};

use super::float::Float;
use super::model::{to_channels_last, Mode, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step over `params[from..]`.
pub fn adam_update<T: Float>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: f64, cfg: &AdamConfig, from: usize) {
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in from..params.len() {
        let g = grads[i].to_f64();
        let m = b1 * state.m[i].to_f64() + (1.0 - b1) * g;
        let v = b2 * state.v[i].to_f64() + (1.0 - b2) * g * g;
        state.m[i] = T::from_f64(m);
        state.v[i] = T::from_f64(v);
        let step = lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        params[i] = T::from_f64(params[i].to_f64() - step);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub max_epochs: usize,
    /// Learning rate is multiplied by (1 − lr_decay) after every epoch.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Set the output affine to the label mean and std before training.
    pub fit_label_affine: bool,
    /// Update only the fully connected head.
    pub head_only: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            lr_init: 5e-4,
            max_epochs: 30,
            lr_decay: 0.05,
            adam: AdamConfig::default(),
            seed: 0,
            fit_label_affine: true,
            head_only: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let ok = self.batch_size > 0
            && self.lr_init > 0.0
            && (0.0..1.0).contains(&self.lr_decay)
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub rmse_ah: f64,
    /// RMSE as a percentage of nominal capacity.
    pub rmse_pct: f64,
}

/// Inputs and labels laid out for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet<T> {
    pub x: Vec<T>,
    pub y: Vec<f64>,
    pub cell: Vec<u32>,
    pub nominal_ah: f64,
}

impl<T: Float> TrainSet<T> {
    pub fn from_records(records: &[SegmentRecord], nominal_ah: f64) -> Self {
        Self {
            x: to_channels_last(records.iter().map(|r| r.tensor_f64().0)),
            y: records.iter().map(|r| r.label_capacity).collect(),
            cell: records.iter().map(|r| r.source.cell).collect(),
            nominal_ah,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn gather(&self, idx: &[usize], x: &mut Vec<T>, y: &mut Vec<f64>) {
        x.clear();
        y.clear();
        for &i in idx {
            x.extend_from_slice(&self.x[i * TENSOR_LEN..(i + 1) * TENSOR_LEN]);
            y.push(self.y[i]);
        }
    }
}

/// Mini-batch Adam on mean squared error. The shuffle of epoch `e` comes
/// from stream `e` of the seed, so runs are reproducible bit for bit.
pub fn train<T: Float>(
    net: &mut Network<T>,
    data: &TrainSet<T>,
    config: &TrainingConfig,
    mut observer: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    train_observed(net, data, config, |s, _| observer(s))
}

/// [`train`] with the network visible to the observer after every epoch.
pub fn train_observed<T: Float>(
    net: &mut Network<T>,
    data: &TrainSet<T>,
    config: &TrainingConfig,
    mut observer: impl FnMut(&EpochStats, &Network<T>),
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if config.max_epochs == 0 {
        return Ok(Vec::new());
    }
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.fit_label_affine {
        let n = data.len() as f64;
        let mean = data.y.iter().sum::<f64>() / n;
        let sd = (data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        net.label_offset = mean;
        net.label_scale = if sd > 1e-6 { sd } else { 1.0 };
    }
    let from = if config.head_only { net.head_start() } else { 0 };
    let mut adam = AdamState::new(net.n_params());
    let mut history = Vec::with_capacity(config.max_epochs);
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.max_epochs {
        let lr = config.lr_init * (1.0 - config.lr_decay).powi(epoch as i32);
        order.sort_unstable();
        order.shuffle(&mut stream_rng(config.seed, epoch as u64));
        let mut sq = 0.0;
        for idx in order.chunks(config.batch_size) {
            data.gather(idx, &mut bx, &mut by);
            let (loss, grads, tape) = net
                .loss_and_gradients(&bx, &by)
                .map_err(|_| Error::Divergence { epoch })?;
            adam_update(&mut net.params, &grads, &mut adam, lr, &config.adam, from);
            net.update_running_stats(&tape);
            if net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            sq += loss * idx.len() as f64;
        }
        let rmse = (sq / data.len() as f64).sqrt();
        let stats = EpochStats {
            epoch,
            lr,
            rmse_ah: rmse,
            rmse_pct: 100.0 * rmse / data.nominal_ah,
        };
        log::info!("epoch {epoch}: lr {lr:.2e}, train rmse {rmse:.4} Ah ({:.2}%)", stats.rmse_pct);
        observer(&stats, net);
        history.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replication {
    /// Copy i goes to real segment i mod n.
    RoundRobin,
    /// Each copy picks a real segment at random from this seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub real_target: usize,
    pub sim_samples: usize,
    pub replication: Replication,
    pub training: TrainingConfig,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            real_target: 5_000,
            sim_samples: 50_000,
            replication: Replication::RoundRobin,
            training: TrainingConfig {
                lr_init: 1e-5,
                max_epochs: 5,
                fit_label_affine: false,
                ..TrainingConfig::default()
            },
        }
    }
}

/// Replicates `real` to exactly `target` copies.
pub fn replicate(real: &[SegmentRecord], target: usize, how: Replication) -> Vec<SegmentRecord> {
    if real.is_empty() {
        return Vec::new();
    }
    match how {
        Replication::RoundRobin => (0..target).map(|i| real[i % real.len()]).collect(),
        Replication::Random(seed) => {
            let mut rng = stream_rng(seed, 1);
            (0..target).map(|_| real[rng.random_range(0..real.len())]).collect()
        }
    }
}

/// The fine-tuning set: replicated real segments followed by a seeded
/// sample of the simulated pool.
pub fn transfer_set(real: &[SegmentRecord], sim_pool: &[SegmentRecord], config: &TransferConfig) -> Result<Vec<SegmentRecord>> {
    if real.is_empty() && sim_pool.is_empty() {
        return Err(Error::invalid("transfer needs real or simulated segments"));
    }
    let mut out = replicate(real, config.real_target, config.replication);
    let k = config.sim_samples.min(sim_pool.len());
    let mut rng = stream_rng(config.training.seed, 2);
    let mut pick = index::sample(&mut rng, sim_pool.len(), k).into_vec();
    pick.sort_unstable();
    out.extend(pick.into_iter().map(|i| sim_pool[i]));
    Ok(out)
}

/// Fine-tunes a copy of `net` on the transfer set.
pub fn transfer_finetune<T: Float>(
    net: &Network<T>,
    real: &[SegmentRecord],
    sim_pool: &[SegmentRecord],
    config: &TransferConfig,
) -> Result<(Network<T>, Vec<EpochStats>)> {
    let set = transfer_set(real, sim_pool, config)?;
    let nominal = crate::cell::NOMINAL_CAPACITY_AH;
    let data = TrainSet::from_records(&set, nominal);
    let mut tuned = net.clone();
    let history = train(&mut tuned, &data, &config.training, |_| {})?;
    Ok((tuned, history))
}

/// One fine-tuning run, copied out after each epoch count in `at`. Equal to
/// separate runs of those lengths since shuffles and decay depend only on
/// the epoch index.
pub fn transfer_snapshots<T: Float>(
    net: &Network<T>,
    real: &[SegmentRecord],
    sim_pool: &[SegmentRecord],
    config: &TransferConfig,
    at: &[usize],
) -> Result<Vec<(Network<T>, Vec<EpochStats>)>> {
    let last = at.iter().copied().max().unwrap_or(0);
    let set = transfer_set(real, sim_pool, config)?;
    let data = TrainSet::from_records(&set, crate::cell::NOMINAL_CAPACITY_AH);
    let mut cfg = config.training.clone();
    cfg.max_epochs = last;
    let mut tuned = net.clone();
    let mut snaps: BTreeMap<usize, (Network<T>, Vec<EpochStats>)> = BTreeMap::new();
    let mut seen = Vec::new();
    if at.contains(&0) {
        snaps.insert(0, (net.clone(), Vec::new()));
    }
    train_observed(&mut tuned, &data, &cfg, |s, n| {
        seen.push(*s);
        if at.contains(&(s.epoch + 1)) {
            snaps.insert(s.epoch + 1, (n.clone(), seen.clone()));
        }
    })?;
    Ok(at.iter().map(|e| snaps[e].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub cell: u32,
    pub n: usize,
    pub rmse_ah: f64,
    pub mae_soh_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub rmse_ah: f64,
    /// Mean absolute error as a percentage of nominal capacity.
    pub mae_soh_pct: f64,
    /// Share of estimates within 1% and 2% of nominal.
    pub within_1pct: f64,
    pub within_2pct: f64,
    pub per_cell: Vec<CellMetrics>,
}

fn summarize(pairs: &[(f64, f64)], nominal: f64) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let n = pairs.len() as f64;
    let rmse = (pairs.iter().map(|(p, l)| (p - l).powi(2)).sum::<f64>() / n).sqrt();
    let mae = pairs.iter().map(|(p, l)| (p - l).abs()).sum::<f64>() / n;
    (rmse, 100.0 * mae / nominal)
}

/// Metrics from predictions, labels and cell ids.
pub fn metrics_from(pred: &[f64], labels: &[f64], cells: &[u32], nominal_ah: f64) -> Metrics {
    let pairs: Vec<(f64, f64)> = pred.iter().copied().zip(labels.iter().copied()).collect();
    let (rmse, mae) = summarize(&pairs, nominal_ah);
    let share = |tol: f64| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().filter(|(p, l)| 100.0 * (p - l).abs() / nominal_ah <= tol).count() as f64 / pairs.len() as f64
        }
    };
    let mut by_cell: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for (pair, &c) in pairs.iter().zip(cells) {
        by_cell.entry(c).or_default().push(*pair);
    }
    let per_cell = by_cell
        .into_iter()
        .map(|(cell, v)| {
            let (rmse_ah, mae_soh_pct) = summarize(&v, nominal_ah);
            CellMetrics {
                cell,
                n: v.len(),
                rmse_ah,
                mae_soh_pct,
            }
        })
        .collect();
    Metrics {
        n: pairs.len(),
        rmse_ah: rmse,
        mae_soh_pct: mae,
        within_1pct: share(1.0),
        within_2pct: share(2.0),
        per_cell,
    }
}

/// Eval-mode predictions in Ah, in record order.
pub fn predict<T: Float>(net: &Network<T>, data: &TrainSet<T>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.x.chunks(1024 * TENSOR_LEN) {
        out.extend(net.forward(chunk, Mode::Eval)?);
    }
    Ok(out)
}

pub fn evaluate<T: Float>(net: &Network<T>, data: &TrainSet<T>) -> Result<Metrics> {
    let pred = predict(net, data)?;
    Ok(metrics_from(&pred, &data.y, &data.cell, data.nominal_ah))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_is_noop_and_first_step_is_lr() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0f64, -2.0, 0.5];
        let mut s = AdamState::new(3);
        adam_update(&mut p, &[0.0; 3], &mut s, 1e-3, &cfg, 0);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        // first step moves each weight by lr against the gradient sign
        let mut q = vec![1.0f64, -2.0, 0.5];
        let mut s2 = AdamState::new(3);
        adam_update(&mut q, &[3.0, -0.01, 1e-3], &mut s2, 1e-3, &cfg, 0);
        assert!((q[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((q[1] - (-2.0 + 1e-3)).abs() < 1e-8);
        assert!((q[2] - (0.5 - 1e-3)).abs() < 1e-7);
        assert_eq!(s2.t, 1);
    }

    #[test]
    fn metrics_identities() {
        let labels = [3.0, 3.1, 2.9, 3.2];
        let m = metrics_from(&labels, &labels, &[0, 0, 1, 1], 3.35);
        assert_eq!((m.rmse_ah, m.mae_soh_pct, m.within_1pct), (0.0, 0.0, 1.0));
        let mean = labels.iter().sum::<f64>() / 4.0;
        let sd = (labels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let m = metrics_from(&[mean; 4], &labels, &[0; 4], 3.35);
        assert!((m.rmse_ah - sd).abs() < 1e-12);
        assert_eq!(m.per_cell.len(), 1);
        assert!(metrics_from(&[], &[], &[], 3.35).rmse_ah == 0.0);
    }
}
