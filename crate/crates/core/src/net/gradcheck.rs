use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::stream_rng;
use crate::error::Result;

use super::model::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub checked: usize,
    /// Weights passed over because w ± h flips some ReLU, where the central
    /// difference measures a kink instead of the derivative.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Compares analytic gradients of the train-mode MSE with central
/// differences of step `h` on `n` weights drawn from `seed`. Relative error
/// is |a − n| / max(|a|, |n|, floor), so weights with vanishing gradient
/// are judged on absolute error against `floor`. Weights whose step crosses
/// a ReLU switch are skipped and replaced by further draws.
pub fn gradient_check(net: &Network<f64>, x: &[f64], labels: &[f64], n: usize, h: f64, floor: f64, seed: u64) -> Result<GradCheck> {
    let (_, grads, _) = net.loss_and_gradients(x, labels)?;
    let (_, mask) = net.forward_with_mask(x)?;
    let loss = |net: &Network<f64>| -> Result<(f64, bool)> {
        let (p, m) = net.forward_with_mask(x)?;
        let mse = p.iter().zip(labels).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / labels.len() as f64;
        Ok((mse, m == mask))
    };
    let order = index::sample(&mut stream_rng(seed, 3), net.n_params(), net.n_params());
    let mut probe = net.clone();
    let (mut checked, mut skipped) = (0, 0);
    let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
    for i in order.iter() {
        if checked == n {
            break;
        }
        let w = net.params[i];
        probe.params[i] = w + h;
        let (up, same_up) = loss(&probe)?;
        probe.params[i] = w - h;
        let (down, same_down) = loss(&probe)?;
        probe.params[i] = w;
        if !(same_up && same_down) {
            skipped += 1;
            continue;
        }
        checked += 1;
        let numeric = (up - down) / (2.0 * h);
        let err = (numeric - grads[i]).abs();
        max_abs = max_abs.max(err);
        max_rel = max_rel.max(err / numeric.abs().max(grads[i].abs()).max(floor));
    }
    Ok(GradCheck {
        checked,
        skipped,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
    })
}
