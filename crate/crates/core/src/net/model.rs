use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::datagen::{stream_rng, POINTS, TENSOR_LEN};
use crate::error::{Error, Result};

use super::float::{matmul, Float};

/// Spatial grid is 5×5 throughout.
pub const SIDE: usize = 5;
pub const HW: usize = SIDE * SIDE;
pub const IN_CHANNELS: usize = 2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// (filters, kernel_h, kernel_w).
pub type LayerShape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub blocks: Vec<[LayerShape; 3]>,
    pub fc_hidden: usize,
    /// Additive skip per block, 1×1 projection when channels change.
    pub residual: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            blocks: vec![
                [(11, 2, 1), (7, 2, 1), (8, 2, 1)],
                [(14, 2, 3), (11, 2, 3), (11, 2, 3)],
                [(12, 5, 4), (15, 5, 4), (4, 5, 4)],
            ],
            fc_hidden: 22,
            residual: true,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.fc_hidden == 0 {
            return Err(Error::invalid("network needs at least one block and a hidden layer"));
        }
        for b in &self.blocks {
            for &(f, kh, kw) in b {
                if f == 0 || kh == 0 || kw == 0 || kh > SIDE || kw > SIDE {
                    return Err(Error::invalid(format!("bad conv layer ({f}, {kh}, {kw})")));
                }
            }
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(IN_CHANNELS, |b| b[2].0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Conv geometry with TF-style same padding on the 5×5 grid.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    /// Offset of the [kh·kw·cin, cout] kernel in the parameter vector.
    pub w: usize,
    /// For each output position and tap, the source position.
    taps: Vec<Option<u8>>,
}

impl Conv {
    fn new(kh: usize, kw: usize, cin: usize, cout: usize, w: usize) -> Self {
        let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
        let mut taps = Vec::with_capacity(HW * kh * kw);
        for y in 0..SIDE {
            for x in 0..SIDE {
                for dy in 0..kh {
                    for dx in 0..kw {
                        let sy = (y + dy) as isize - pt as isize;
                        let sx = (x + dx) as isize - pl as isize;
                        let ok = (0..SIDE as isize).contains(&sy) && (0..SIDE as isize).contains(&sx);
                        taps.push(ok.then(|| (sy as usize * SIDE + sx as usize) as u8));
                    }
                }
            }
        }
        Self { kh, kw, cin, cout, w, taps }
    }

    pub fn k(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn n_weights(&self) -> usize {
        self.k() * self.cout
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn im2col<T: Float>(&self, x: &[T], batch: usize) -> Vec<T> {
        let (k, t, cin) = (self.k(), self.kh * self.kw, self.cin);
        let mut cols = vec![T::ZERO; batch * HW * k];
        for b in 0..batch {
            let xb = &x[b * HW * cin..(b + 1) * HW * cin];
            for pos in 0..HW {
                let row = &mut cols[(b * HW + pos) * k..(b * HW + pos + 1) * k];
                for (tap, src) in self.taps[pos * t..(pos + 1) * t].iter().enumerate() {
                    if let Some(s) = src {
                        let s = *s as usize;
                        row[tap * cin..(tap + 1) * cin].copy_from_slice(&xb[s * cin..(s + 1) * cin]);
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Float>(&self, dcols: &[T], batch: usize) -> Vec<T> {
        let (k, t, cin) = (self.k(), self.kh * self.kw, self.cin);
        let mut dx = vec![T::ZERO; batch * HW * cin];
        for b in 0..batch {
            let dxb = &mut dx[b * HW * cin..(b + 1) * HW * cin];
            for pos in 0..HW {
                let row = &dcols[(b * HW + pos) * k..(b * HW + pos + 1) * k];
                for (tap, src) in self.taps[pos * t..(pos + 1) * t].iter().enumerate() {
                    if let Some(s) = src {
                        let s = *s as usize;
                        for c in 0..cin {
                            dxb[s * cin + c] += row[tap * cin + c];
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns (output, cols); cols are kept for the weight gradient.
    fn forward<T: Float>(&self, params: &[T], x: &[T], batch: usize) -> (Vec<T>, Option<Vec<T>>) {
        let rows = batch * HW;
        let mut out = vec![T::ZERO; rows * self.cout];
        let w = &params[self.w..self.w + self.n_weights()];
        if self.pointwise() {
            matmul(rows, self.k(), self.cout, x, false, w, false, &mut out, false);
            (out, None)
        } else {
            let cols = self.im2col(x, batch);
            matmul(rows, self.k(), self.cout, &cols, false, w, false, &mut out, false);
            (out, Some(cols))
        }
    }

    /// Accumulates dW into `grads` and returns dx.
    fn backward<T: Float>(&self, params: &[T], grads: &mut [T], x: &[T], cols: Option<&[T]>, dout: &[T], batch: usize) -> Vec<T> {
        let (rows, k, n) = (batch * HW, self.k(), self.cout);
        let input = cols.unwrap_or(x);
        matmul(k, rows, n, input, true, dout, false, &mut grads[self.w..self.w + k * n], true);
        let w = &params[self.w..self.w + k * n];
        let mut dcols = vec![T::ZERO; rows * k];
        matmul(rows, n, k, dout, false, w, true, &mut dcols, false);
        if self.pointwise() {
            dcols
        } else {
            self.col2im(&dcols, batch)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub c: usize,
    pub gamma: usize,
    pub beta: usize,
    /// Offsets of running mean and variance in the buffer vector.
    pub mean: usize,
    pub var: usize,
}

struct BnCache<T> {
    xhat: Vec<T>,
    invstd: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

impl BatchNorm {
    fn forward<T: Float>(&self, params: &[T], buffers: &[T], z: &mut [T], mode: Mode) -> Option<BnCache<T>> {
        let c = self.c;
        let n = z.len() / c;
        let gamma = &params[self.gamma..self.gamma + c];
        let beta = &params[self.beta..self.beta + c];
        let eps = T::from_f64(BN_EPS);
        let (mean, var) = match mode {
            Mode::Eval => (
                buffers[self.mean..self.mean + c].to_vec(),
                buffers[self.var..self.var + c].to_vec(),
            ),
            Mode::Train => {
                let mut mean = vec![T::ZERO; c];
                for row in z.chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                let inv_n = T::ONE / T::from_f64(n as f64);
                mean.iter_mut().for_each(|m| *m *= inv_n);
                let mut var = vec![T::ZERO; c];
                for row in z.chunks_exact(c) {
                    for j in 0..c {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v *= inv_n);
                (mean, var)
            }
        };
        let invstd: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let mut xhat = if mode == Mode::Train { vec![T::ZERO; z.len()] } else { Vec::new() };
        for (r, row) in z.chunks_exact_mut(c).enumerate() {
            for j in 0..c {
                let xh = (row[j] - mean[j]) * invstd[j];
                if mode == Mode::Train {
                    xhat[r * c + j] = xh;
                }
                row[j] = gamma[j] * xh + beta[j];
            }
        }
        (mode == Mode::Train).then_some(BnCache { xhat, invstd, mean, var })
    }

    fn backward<T: Float>(&self, params: &[T], grads: &mut [T], cache: &BnCache<T>, dy: &[T]) -> Vec<T> {
        let c = self.c;
        let n = dy.len() / c;
        let mut sum_dy = vec![T::ZERO; c];
        let mut sum_dy_xhat = vec![T::ZERO; c];
        for (row, xr) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += row[j];
                sum_dy_xhat[j] += row[j] * xr[j];
            }
        }
        for j in 0..c {
            grads[self.gamma + j] += sum_dy_xhat[j];
            grads[self.beta + j] += sum_dy[j];
        }
        let gamma = &params[self.gamma..self.gamma + c];
        let nf = T::from_f64(n as f64);
        let inv_n = T::ONE / nf;
        let mut dx = vec![T::ZERO; dy.len()];
        for ((out, row), xr) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                out[j] = gamma[j] * cache.invstd[j] * inv_n * (nf * row[j] - sum_dy[j] - xr[j] * sum_dy_xhat[j]);
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub convs: [Conv; 3],
    pub bns: [BatchNorm; 3],
    pub proj: Option<Conv>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub fan_in: usize,
    pub out: usize,
    pub w: usize,
    pub b: usize,
}

/// Where every tensor lives in the flat parameter and buffer vectors.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub blocks: Vec<Block>,
    pub fc1: Dense,
    pub fc2: Dense,
    pub n_params: usize,
    pub n_buffers: usize,
    /// First parameter index of the fully connected head.
    pub head_start: usize,
}

impl Layout {
    fn new(spec: &NetworkSpec) -> Self {
        let (mut p, mut buf) = (0usize, 0usize);
        let mut blocks = Vec::new();
        let mut cin = IN_CHANNELS;
        for shapes in &spec.blocks {
            let block_in = cin;
            let mut convs = Vec::new();
            let mut bns = Vec::new();
            for &(f, kh, kw) in shapes {
                let conv = Conv::new(kh, kw, cin, f, p);
                p += conv.n_weights();
                bns.push(BatchNorm {
                    c: f,
                    gamma: p,
                    beta: p + f,
                    mean: buf,
                    var: buf + f,
                });
                p += 2 * f;
                buf += 2 * f;
                convs.push(conv);
                cin = f;
            }
            let proj = (spec.residual && block_in != cin).then(|| {
                let c = Conv::new(1, 1, block_in, cin, p);
                p += c.n_weights();
                c
            });
            blocks.push(Block {
                convs: convs.try_into().expect("three convs"),
                bns: bns.try_into().expect("three norms"),
                proj,
            });
        }
        let head_start = p;
        let flat = HW * cin;
        let fc1 = Dense {
            fan_in: flat,
            out: spec.fc_hidden,
            w: p,
            b: p + flat * spec.fc_hidden,
        };
        p += (flat + 1) * spec.fc_hidden;
        let fc2 = Dense {
            fan_in: spec.fc_hidden,
            out: 1,
            w: p,
            b: p + spec.fc_hidden,
        };
        p += spec.fc_hidden + 1;
        Self {
            blocks,
            fc1,
            fc2,
            n_params: p,
            n_buffers: buf,
            head_start,
        }
    }
}

/// Network weights: trainable parameters, batch-norm running statistics and
/// the frozen output affine mapping the raw output to Ah.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Float> {
    pub spec: NetworkSpec,
    pub params: Vec<T>,
    pub buffers: Vec<T>,
    pub label_offset: f64,
    pub label_scale: f64,
    pub(crate) layout: Layout,
}

struct BlockTape<T> {
    input: Vec<T>,
    cols: [Option<Vec<T>>; 3],
    bn: [BnCache<T>; 3],
    /// Post-activation outputs (the block output for the last layer).
    acts: [Vec<T>; 3],
}

/// Everything the backward pass needs from a train-mode forward.
pub struct Tape<T> {
    batch: usize,
    blocks: Vec<BlockTape<T>>,
    flat: Vec<T>,
    h1: Vec<T>,
    /// Raw network outputs before the label affine.
    pub raw: Vec<T>,
}

impl<T: Float> Network<T> {
    /// Fan-in-scaled uniform initialization, deterministic in `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let mut params = vec![T::ZERO; layout.n_params];
        let mut buffers = vec![T::ZERO; layout.n_buffers];
        let mut rng = stream_rng(seed, 0);
        let fill = |params: &mut [T], off: usize, n: usize, fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let lim = (6.0 / fan_in as f64).sqrt();
            let d = Uniform::new_inclusive(-lim, lim).expect("finite limit");
            for x in &mut params[off..off + n] {
                *x = T::from_f64(rng.sample(d));
            }
        };
        for b in &layout.blocks {
            for (conv, bn) in b.convs.iter().zip(&b.bns) {
                fill(&mut params, conv.w, conv.n_weights(), conv.k(), &mut rng);
                params[bn.gamma..bn.gamma + bn.c].fill(T::ONE);
                buffers[bn.var..bn.var + bn.c].fill(T::ONE);
            }
            if let Some(p) = &b.proj {
                fill(&mut params, p.w, p.n_weights(), p.k(), &mut rng);
            }
        }
        let (f1, f2) = (layout.fc1.clone(), layout.fc2.clone());
        fill(&mut params, f1.w, f1.fan_in * f1.out, f1.fan_in, &mut rng);
        fill(&mut params, f2.w, f2.fan_in * f2.out, f2.fan_in, &mut rng);
        Ok(Self {
            spec,
            params,
            buffers,
            label_offset: 0.0,
            label_scale: 1.0,
            layout,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// First parameter of the fully connected head.
    pub fn head_start(&self) -> usize {
        self.layout.head_start
    }

    /// Same weights in another precision.
    pub fn cast<U: Float>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|x| U::from_f64(x.to_f64())).collect(),
            buffers: self.buffers.iter().map(|x| U::from_f64(x.to_f64())).collect(),
            label_offset: self.label_offset,
            label_scale: self.label_scale,
            layout: self.layout.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.iter().chain(&self.buffers).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network weights"));
        }
        for b in &self.layout.blocks {
            for bn in &b.bns {
                if self.buffers[bn.var..bn.var + bn.c].iter().any(|&v| v <= T::ZERO) {
                    return Err(Error::invalid("batch-norm running variance must be positive"));
                }
            }
        }
        Ok(())
    }

    fn forward_inner(&self, x: &[T], batch: usize, mode: Mode) -> (Vec<T>, Option<Tape<T>>) {
        let train = mode == Mode::Train;
        let mut a = x.to_vec();
        let mut tapes = Vec::new();
        for b in &self.layout.blocks {
            let input = a;
            let mut cur = input.clone();
            let mut cols: [Option<Vec<T>>; 3] = [None, None, None];
            let mut bn_caches = Vec::new();
            let mut acts: Vec<Vec<T>> = Vec::new();
            for l in 0..3 {
                let (mut z, c) = b.convs[l].forward(&self.params, &cur, batch);
                let cache = b.bns[l].forward(&self.params, &self.buffers, &mut z, mode);
                if l == 2 && self.spec.residual {
                    match &b.proj {
                        Some(p) => {
                            let (s, _) = p.forward(&self.params, &input, batch);
                            z.iter_mut().zip(&s).for_each(|(v, s)| *v += *s);
                        }
                        None => z.iter_mut().zip(&input).for_each(|(v, s)| *v += *s),
                    }
                }
                z.iter_mut().for_each(|v| {
                    if *v < T::ZERO {
                        *v = T::ZERO
                    }
                });
                if train {
                    cols[l] = c;
                    bn_caches.push(cache.expect("train cache"));
                    acts.push(z.clone());
                }
                cur = z;
            }
            if train {
                tapes.push(BlockTape {
                    input,
                    cols,
                    bn: bn_caches.try_into().ok().expect("three caches"),
                    acts: acts.try_into().expect("three activations"),
                });
            }
            a = cur;
        }
        let (f1, f2) = (&self.layout.fc1, &self.layout.fc2);
        let mut h1 = vec![T::ZERO; batch * f1.out];
        for row in h1.chunks_exact_mut(f1.out) {
            row.copy_from_slice(&self.params[f1.b..f1.b + f1.out]);
        }
        matmul(batch, f1.fan_in, f1.out, &a, false, &self.params[f1.w..], false, &mut h1, true);
        h1.iter_mut().for_each(|v| {
            if *v < T::ZERO {
                *v = T::ZERO
            }
        });
        let mut raw = vec![self.params[f2.b]; batch];
        matmul(batch, f2.fan_in, 1, &h1, false, &self.params[f2.w..], false, &mut raw, true);
        let tape = train.then(|| Tape {
            batch,
            blocks: tapes,
            flat: a,
            h1,
            raw: raw.clone(),
        });
        (raw, tape)
    }

    fn check_input(&self, x: &[T]) -> Result<usize> {
        if x.is_empty() || x.len() % TENSOR_LEN != 0 {
            return Err(Error::ShapeMismatch(format!(
                "input of length {} is not a non-empty multiple of {TENSOR_LEN}",
                x.len()
            )));
        }
        Ok(x.len() / TENSOR_LEN)
    }

    fn to_ah(&self, raw: &[T]) -> Vec<f64> {
        raw.iter().map(|r| self.label_offset + self.label_scale * r.to_f64()).collect()
    }

    /// Capacities in Ah for a batch of channels-last inputs (see
    /// [`to_channels_last`]). Never mutates the network.
    pub fn forward(&self, x: &[T], mode: Mode) -> Result<Vec<f64>> {
        let batch = self.check_input(x)?;
        let (raw, _) = self.forward_inner(x, batch, mode);
        Ok(self.to_ah(&raw))
    }

    /// Train-mode predictions in Ah together with the on/off state of every
    /// ReLU, in a fixed order.
    pub(crate) fn forward_with_mask(&self, x: &[T]) -> Result<(Vec<f64>, Vec<bool>)> {
        let batch = self.check_input(x)?;
        let (raw, tape) = self.forward_inner(x, batch, Mode::Train);
        let tape = tape.expect("train tape");
        let acts = tape.blocks.iter().flat_map(|b| b.acts.iter().flatten());
        let mask = acts.chain(&tape.h1).map(|&v| v > T::ZERO).collect();
        Ok((self.to_ah(&raw), mask))
    }

    /// Mean squared error in Ah² and its gradient for every parameter.
    pub fn loss_and_gradients(&self, x: &[T], labels: &[f64]) -> Result<(f64, Vec<T>, Tape<T>)> {
        let batch = self.check_input(x)?;
        if labels.len() != batch {
            return Err(Error::ShapeMismatch(format!("{} labels for a batch of {batch}", labels.len())));
        }
        let (raw, tape) = self.forward_inner(x, batch, Mode::Train);
        let tape = tape.expect("train tape");
        let pred = self.to_ah(&raw);
        let loss = pred.iter().zip(labels).map(|(p, l)| (p - l).powi(2)).sum::<f64>() / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let draw: Vec<T> = pred
            .iter()
            .zip(labels)
            .map(|(p, l)| T::from_f64(2.0 * (p - l) * self.label_scale / batch as f64))
            .collect();
        let grads = self.backward(&tape, &draw);
        Ok((loss, grads, tape))
    }

    fn backward(&self, tape: &Tape<T>, draw: &[T]) -> Vec<T> {
        let batch = tape.batch;
        let mut g = vec![T::ZERO; self.params.len()];
        let (f1, f2) = (&self.layout.fc1, &self.layout.fc2);
        // head
        g[f2.b] = draw.iter().copied().sum();
        matmul(f2.fan_in, batch, 1, &tape.h1, true, draw, false, &mut g[f2.w..f2.w + f2.fan_in], true);
        let mut dh1 = vec![T::ZERO; batch * f1.out];
        matmul(batch, 1, f1.out, draw, false, &self.params[f2.w..f2.w + f2.fan_in], true, &mut dh1, false);
        for (d, h) in dh1.iter_mut().zip(&tape.h1) {
            if *h <= T::ZERO {
                *d = T::ZERO;
            }
        }
        for row in dh1.chunks_exact(f1.out) {
            for (gb, d) in g[f1.b..f1.b + f1.out].iter_mut().zip(row) {
                *gb += *d;
            }
        }
        matmul(f1.fan_in, batch, f1.out, &tape.flat, true, &dh1, false, &mut g[f1.w..f1.w + f1.fan_in * f1.out], true);
        let mut da = vec![T::ZERO; batch * f1.fan_in];
        matmul(batch, f1.out, f1.fan_in, &dh1, false, &self.params[f1.w..f1.w + f1.fan_in * f1.out], true, &mut da, false);

        for (b, bt) in self.layout.blocks.iter().zip(&tape.blocks).rev() {
            let mut skip_dx: Option<Vec<T>> = None;
            for l in (0..3).rev() {
                let mut dz = da;
                for (d, a) in dz.iter_mut().zip(&bt.acts[l]) {
                    if *a <= T::ZERO {
                        *d = T::ZERO;
                    }
                }
                if l == 2 && self.spec.residual {
                    skip_dx = Some(match &b.proj {
                        Some(p) => p.backward(&self.params, &mut g, &bt.input, None, &dz, batch),
                        None => dz.clone(),
                    });
                }
                let dconv = b.bns[l].backward(&self.params, &mut g, &bt.bn[l], &dz);
                let x_in = if l == 0 { &bt.input } else { &bt.acts[l - 1] };
                da = b.convs[l].backward(&self.params, &mut g, x_in, bt.cols[l].as_deref(), &dconv, batch);
            }
            if let Some(s) = skip_dx {
                da.iter_mut().zip(&s).for_each(|(d, s)| *d += *s);
            }
        }
        g
    }

    /// Folds a train-mode batch's statistics into the running averages.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        let m = T::from_f64(BN_MOMENTUM);
        let one_m = T::ONE - m;
        for (b, bt) in self.layout.blocks.iter().zip(&tape.blocks) {
            for (bn, cache) in b.bns.iter().zip(&bt.bn) {
                for j in 0..bn.c {
                    let rm = &mut self.buffers[bn.mean + j];
                    *rm = m * *rm + one_m * cache.mean[j];
                    let rv = &mut self.buffers[bn.var + j];
                    *rv = m * *rv + one_m * cache.var[j];
                }
            }
        }
    }

    /// Sets every batch-norm running statistic to this batch's values.
    pub fn set_running_stats(&mut self, tape: &Tape<T>) {
        for (b, bt) in self.layout.blocks.iter().zip(&tape.blocks) {
            for (bn, cache) in b.bns.iter().zip(&bt.bn) {
                self.buffers[bn.mean..bn.mean + bn.c].copy_from_slice(&cache.mean);
                self.buffers[bn.var..bn.var + bn.c].copy_from_slice(&cache.var);
            }
        }
    }
}

/// Converts packed tensors (voltage plane then current plane) into the
/// channels-last layout the network consumes.
pub fn to_channels_last<T: Float>(tensors: impl IntoIterator<Item = impl AsRef<[f64]>>) -> Vec<T> {
    let mut out = Vec::new();
    for t in tensors {
        let t = t.as_ref();
        for pos in 0..POINTS {
            out.push(T::from_f64(t[pos]));
            out.push(T::from_f64(t[POINTS + pos]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 9);
        (0..n * TENSOR_LEN).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn default_shape() {
        let net = Network::<f64>::new(NetworkSpec::default(), 0).unwrap();
        assert_eq!(net.spec.out_channels(), 4);
        assert_eq!(net.layout.fc1.fan_in, 100);
        let out = net.forward(&inputs(3, 1), Mode::Eval).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(net.forward(&[0.0; 49], Mode::Eval).is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut net = Network::<f64>::new(NetworkSpec::default(), 0).unwrap();
        net.params.fill(0.0);
        net.label_scale = 1.0;
        net.label_offset = 0.0;
        for mode in [Mode::Eval, Mode::Train] {
            assert!(net.forward(&inputs(4, 2), mode).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn eval_is_per_item_and_pure() {
        let net = Network::<f64>::new(NetworkSpec::default(), 3).unwrap();
        let x = inputs(3, 4);
        let before = net.clone();
        let a = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, net.forward(&x, Mode::Eval).unwrap());
        let mut swapped = x[TENSOR_LEN * 2..].to_vec();
        swapped.extend_from_slice(&x[..TENSOR_LEN * 2]);
        let b = net.forward(&swapped, Mode::Eval).unwrap();
        assert_eq!(b, vec![a[2], a[0], a[1]]);
        assert_eq!(before, net);
    }

    #[test]
    fn train_and_eval_agree_with_matching_stats() {
        let mut net = Network::<f64>::new(NetworkSpec::default(), 5).unwrap();
        let x = inputs(6, 6);
        let (_, _, tape) = net.loss_and_gradients(&x, &[0.0; 6]).unwrap();
        net.set_running_stats(&tape);
        let tr = net.forward(&x, Mode::Train).unwrap();
        let ev = net.forward(&x, Mode::Eval).unwrap();
        for (a, b) in tr.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn same_padding_geometry() {
        // kernel 2 pads only after, kernel 4 pads one before and two after
        let c = Conv::new(2, 4, 1, 1, 0);
        let t = c.kh * c.kw;
        let first = &c.taps[..t];
        assert_eq!(first, &[None, Some(0), Some(1), Some(2), None, Some(5), Some(6), Some(7)]);
        let last = &c.taps[24 * t..];
        assert_eq!(last[0], Some(23));
        assert!(last[4..].iter().all(Option::is_none));
    }
}
