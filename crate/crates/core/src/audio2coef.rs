//! Recurrent audio-to-coefficient mapper: an MLP audio encoder feeding a
//! single LSTM cell with two linear heads, one for expression coefficients
//! and one for the 6-DoF pose.
//!
//! Training minimizes a 4-term loss: expression MSE, weighted pose MSE, and
//! squared inter-frame differences of pose and expression trajectories.
//! Gradients are exact backpropagation-through-time, verified against
//! central finite differences in the acceptance suite.

use std::path::Path;

use ndarray::{s, Array1, Array2};

use crate::audiofeat::AudioFeatureSequence;
use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::nn::{tanh, tanh_backward, Adam, AdamConfig, GradBuf, Linear, SeedStream};
use crate::num::Real;

/// Loss weights; stage-1 defaults follow the reference configuration.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights<T> {
    /// Pose MSE weight.
    pub lambda1: T,
    /// Pose inter-frame continuity weight.
    pub lambda2: T,
    /// Expression inter-frame continuity weight.
    pub lambda3: T,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        LossWeights {
            lambda1: T::of(0.2),
            lambda2: T::of(0.01),
            lambda3: T::of(0.0001),
        }
    }
}

/// One training sequence: per-frame audio features with aligned expression
/// and pose targets.
#[derive(Clone, Debug)]
pub struct SequenceSample<T> {
    pub audio: AudioFeatureSequence<T>,
    /// T x D_exp expression targets.
    pub beta_gt: Array2<T>,
    /// T x 6 pose targets (angles in radians, then translation).
    pub pose_gt: Array2<T>,
}

impl<T: Real> SequenceSample<T> {
    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.audio.len();
        if self.beta_gt.nrows() != t || self.pose_gt.nrows() != t {
            return Err(Error::invalid(format!(
                "sequence lengths disagree: audio {t}, beta {}, pose {}",
                self.beta_gt.nrows(),
                self.pose_gt.nrows()
            )));
        }
        if self.pose_gt.ncols() != 6 {
            return Err(Error::invalid("pose targets must have 6 columns"));
        }
        let pi = T::PI();
        for row in self.pose_gt.rows() {
            for k in 0..3 {
                if row[k] <= -pi || row[k] > pi {
                    return Err(Error::invalid("pose angles must lie in (-pi, pi]"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MapperConfig {
    pub input_dim: usize,
    pub encoder_dim: usize,
    pub hidden_dim: usize,
    pub expression_dim: usize,
    pub seed: u64,
}

impl MapperConfig {
    /// Paper-scale widths.
    pub fn full(input_dim: usize, expression_dim: usize) -> Self {
        MapperConfig {
            input_dim,
            encoder_dim: 256,
            hidden_dim: 256,
            expression_dim,
            seed: 0xa2c,
        }
    }

    /// Desk-scale widths for tests and the synthetic pipeline.
    pub fn toy(input_dim: usize, expression_dim: usize) -> Self {
        MapperConfig {
            input_dim,
            encoder_dim: 64,
            hidden_dim: 32,
            expression_dim,
            seed: 0xa2c,
        }
    }
}

/// Per-channel affine standardization of pose targets; identity by default.
#[derive(Clone, Debug)]
pub struct PoseNormalizer<T> {
    pub mean: [T; 6],
    pub std: [T; 6],
}

impl<T: Real> Default for PoseNormalizer<T> {
    fn default() -> Self {
        PoseNormalizer {
            mean: [T::zero(); 6],
            std: [T::one(); 6],
        }
    }
}

impl<T: Real> PoseNormalizer<T> {
    /// Fit channelwise mean/std over all frames of a corpus.
    pub fn fit(corpus: &[SequenceSample<T>]) -> Self {
        let mut mean = [T::zero(); 6];
        let mut count = T::zero();
        for seq in corpus {
            for row in seq.pose_gt.rows() {
                for k in 0..6 {
                    mean[k] += row[k];
                }
                count += T::one();
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let mut var = [T::zero(); 6];
        for seq in corpus {
            for row in seq.pose_gt.rows() {
                for k in 0..6 {
                    let d = row[k] - mean[k];
                    var[k] += d * d;
                }
            }
        }
        let mut std = [T::zero(); 6];
        for k in 0..6 {
            std[k] = (var[k] / count).sqrt().max(T::of(1e-6));
        }
        PoseNormalizer { mean, std }
    }

    pub fn standardize(&self, pose: &Array2<T>) -> Array2<T> {
        let mut out = pose.clone();
        for mut row in out.rows_mut() {
            for k in 0..6 {
                row[k] = (row[k] - self.mean[k]) / self.std[k];
            }
        }
        out
    }

    pub fn destandardize(&self, pose: &Array2<T>) -> Array2<T> {
        let mut out = pose.clone();
        for mut row in out.rows_mut() {
            for k in 0..6 {
                row[k] = row[k] * self.std[k] + self.mean[k];
            }
        }
        out
    }
}

/// MLP encoder + LSTM cell + two output heads.
#[derive(Clone, Debug)]
pub struct RecurrentMapper<T> {
    pub cfg: MapperConfig,
    enc1: Linear<T>,
    enc2: Linear<T>,
    /// Input-to-gates weights, (4H, E); gate order [input, forget, cell, output].
    wx: Array2<T>,
    /// Hidden-to-gates weights, (4H, H).
    wh: Array2<T>,
    /// Gate bias, (4H).
    bias: Array1<T>,
    head_exp: Linear<T>,
    head_pose: Linear<T>,
    pub pose_norm: PoseNormalizer<T>,
    pub epochs_trained: usize,
}

/// Per-timestep activations retained for backpropagation through time.
pub struct ForwardCache<T> {
    x: Array2<T>,
    e1_out: Array2<T>,
    e2_out: Array2<T>,
    gates_i: Array2<T>,
    gates_f: Array2<T>,
    gates_g: Array2<T>,
    gates_o: Array2<T>,
    cells: Array2<T>,
    tanh_cells: Array2<T>,
    hidden: Array2<T>,
}

impl<T: Real> RecurrentMapper<T> {
    pub fn new(cfg: MapperConfig) -> Self {
        let mut seeds = SeedStream::new(cfg.seed);
        let h = cfg.hidden_dim;
        let e = cfg.encoder_dim;
        let enc1 = Linear::new(cfg.input_dim, e, &mut seeds.derive());
        let enc2 = Linear::new(e, e, &mut seeds.derive());
        let wx = crate::nn::xavier_matrix(&mut seeds.derive(), 4 * h, e, e);
        let wh = crate::nn::xavier_matrix(&mut seeds.derive(), 4 * h, h, h);
        // Forget-gate bias starts at 1 so early training does not wash out state.
        let mut bias = Array1::zeros(4 * h);
        for i in h..2 * h {
            bias[i] = T::one();
        }
        let head_exp = Linear::new(h, cfg.expression_dim, &mut seeds.derive());
        let head_pose = Linear::new(h, 6, &mut seeds.derive());
        RecurrentMapper {
            cfg,
            enc1,
            enc2,
            wx,
            wh,
            bias,
            head_exp,
            head_pose,
            pose_norm: PoseNormalizer::default(),
            epochs_trained: 0,
        }
    }

    /// Zero both output heads; predictions become all-zero regardless of audio.
    pub fn zero_heads(&mut self) {
        self.head_exp = Linear::zeros(self.cfg.hidden_dim, self.cfg.expression_dim);
        self.head_pose = Linear::zeros(self.cfg.hidden_dim, 6);
    }

    pub fn params(&self) -> Vec<&[T]> {
        vec![
            self.enc1.w.as_slice().unwrap(),
            self.enc1.b.as_slice().unwrap(),
            self.enc2.w.as_slice().unwrap(),
            self.enc2.b.as_slice().unwrap(),
            self.wx.as_slice().unwrap(),
            self.wh.as_slice().unwrap(),
            self.bias.as_slice().unwrap(),
            self.head_exp.w.as_slice().unwrap(),
            self.head_exp.b.as_slice().unwrap(),
            self.head_pose.w.as_slice().unwrap(),
            self.head_pose.b.as_slice().unwrap(),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.enc1.w.as_slice_mut().unwrap(),
            self.enc1.b.as_slice_mut().unwrap(),
            self.enc2.w.as_slice_mut().unwrap(),
            self.enc2.b.as_slice_mut().unwrap(),
            self.wx.as_slice_mut().unwrap(),
            self.wh.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
            self.head_exp.w.as_slice_mut().unwrap(),
            self.head_exp.b.as_slice_mut().unwrap(),
            self.head_pose.w.as_slice_mut().unwrap(),
            self.head_pose.b.as_slice_mut().unwrap(),
        ]
    }

    fn check_input(&self, features: &Array2<T>) -> Result<()> {
        if features.nrows() == 0 {
            return Err(Error::invalid("audio feature sequence is empty"));
        }
        if features.ncols() != self.cfg.input_dim {
            return Err(Error::config(format!(
                "feature dim {} does not match mapper input dim {}",
                features.ncols(),
                self.cfg.input_dim
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("audio features contain NaN/Inf"));
        }
        Ok(())
    }

    /// Full forward pass in standardized pose space, retaining activations.
    /// Initial hidden and cell states are zero.
    pub fn forward_cached(&self, features: &Array2<T>) -> Result<(Array2<T>, Array2<T>, ForwardCache<T>)> {
        self.check_input(features)?;
        let t_len = features.nrows();
        let h_dim = self.cfg.hidden_dim;

        let e1_out = tanh(&self.enc1.forward(features));
        let e2_out = tanh(&self.enc2.forward(&e1_out));

        let mut gates_i = Array2::zeros((t_len, h_dim));
        let mut gates_f = Array2::zeros((t_len, h_dim));
        let mut gates_g = Array2::zeros((t_len, h_dim));
        let mut gates_o = Array2::zeros((t_len, h_dim));
        let mut cells = Array2::zeros((t_len, h_dim));
        let mut tanh_cells = Array2::zeros((t_len, h_dim));
        let mut hidden = Array2::zeros((t_len, h_dim));

        let mut h_prev = Array1::<T>::zeros(h_dim);
        let mut c_prev = Array1::<T>::zeros(h_dim);
        for t in 0..t_len {
            let x_t = e2_out.row(t);
            let mut z = self.wx.dot(&x_t) + self.wh.dot(&h_prev);
            z += &self.bias;
            for j in 0..h_dim {
                let i_g = T::one() / (T::one() + (-z[j]).exp());
                let f_g = T::one() / (T::one() + (-z[h_dim + j]).exp());
                let g_g = z[2 * h_dim + j].tanh();
                let o_g = T::one() / (T::one() + (-z[3 * h_dim + j]).exp());
                let c = f_g * c_prev[j] + i_g * g_g;
                let tc = c.tanh();
                gates_i[[t, j]] = i_g;
                gates_f[[t, j]] = f_g;
                gates_g[[t, j]] = g_g;
                gates_o[[t, j]] = o_g;
                cells[[t, j]] = c;
                tanh_cells[[t, j]] = tc;
                hidden[[t, j]] = o_g * tc;
            }
            h_prev.assign(&hidden.row(t));
            c_prev.assign(&cells.row(t));
        }

        let beta = self.head_exp.forward(&hidden);
        let pose = self.head_pose.forward(&hidden);
        let cache = ForwardCache {
            x: features.clone(),
            e1_out,
            e2_out,
            gates_i,
            gates_f,
            gates_g,
            gates_o,
            cells,
            tanh_cells,
            hidden,
        };
        Ok((beta, pose, cache))
    }

    /// Inference: expression predictions plus de-standardized pose.
    pub fn forward(&self, audio: &AudioFeatureSequence<T>) -> Result<(Array2<T>, Array2<T>)> {
        let (beta, pose_std, _) = self.forward_cached(&audio.features)?;
        Ok((beta, self.pose_norm.destandardize(&pose_std)))
    }

    /// Backpropagation through time given output-space gradients.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        dbeta: &Array2<T>,
        dpose: &Array2<T>,
    ) -> GradBuf<T> {
        let t_len = cache.hidden.nrows();
        let h_dim = self.cfg.hidden_dim;

        // Head gradients; also the hidden-state gradient at each timestep.
        let (dh_exp, head_exp_grads) = self.head_exp.backward(&cache.hidden, dbeta);
        let (dh_pose, head_pose_grads) = self.head_pose.backward(&cache.hidden, dpose);
        let dh_heads = &dh_exp + &dh_pose;

        let mut dwx = Array2::<T>::zeros(self.wx.dim());
        let mut dwh = Array2::<T>::zeros(self.wh.dim());
        let mut dbias = Array1::<T>::zeros(self.bias.len());
        let mut de2 = Array2::<T>::zeros(cache.e2_out.dim());

        let mut dh_next = Array1::<T>::zeros(h_dim);
        let mut dc_next = Array1::<T>::zeros(h_dim);
        for t in (0..t_len).rev() {
            let mut dz = Array1::<T>::zeros(4 * h_dim);
            for j in 0..h_dim {
                let dh = dh_heads[[t, j]] + dh_next[j];
                let o_g = cache.gates_o[[t, j]];
                let tc = cache.tanh_cells[[t, j]];
                let mut dc = dc_next[j] + dh * o_g * (T::one() - tc * tc);
                let do_g = dh * tc;
                let i_g = cache.gates_i[[t, j]];
                let f_g = cache.gates_f[[t, j]];
                let g_g = cache.gates_g[[t, j]];
                let c_prev = if t > 0 { cache.cells[[t - 1, j]] } else { T::zero() };
                let di = dc * g_g;
                let dg = dc * i_g;
                let df = dc * c_prev;
                dc *= f_g;
                dc_next[j] = dc;
                dz[j] = di * i_g * (T::one() - i_g);
                dz[h_dim + j] = df * f_g * (T::one() - f_g);
                dz[2 * h_dim + j] = dg * (T::one() - g_g * g_g);
                dz[3 * h_dim + j] = do_g * o_g * (T::one() - o_g);
            }

            let x_t = cache.e2_out.row(t);
            for r in 0..4 * h_dim {
                let dzr = dz[r];
                if dzr == T::zero() {
                    continue;
                }
                for (cix, &xv) in x_t.iter().enumerate() {
                    dwx[[r, cix]] += dzr * xv;
                }
                dbias[r] += dzr;
            }
            if t > 0 {
                let h_prev = cache.hidden.row(t - 1);
                for r in 0..4 * h_dim {
                    let dzr = dz[r];
                    if dzr == T::zero() {
                        continue;
                    }
                    for (cix, &hv) in h_prev.iter().enumerate() {
                        dwh[[r, cix]] += dzr * hv;
                    }
                }
            }

            let dx_t = self.wx.t().dot(&dz);
            de2.row_mut(t).assign(&dx_t);
            dh_next = self.wh.t().dot(&dz);
        }

        // Encoder backward: through the second tanh/linear, then the first.
        let de2_pre = tanh_backward(&cache.e2_out, &de2);
        let (de1, enc2_grads) = self.enc2.backward(&cache.e1_out, &de2_pre);
        let de1_pre = tanh_backward(&cache.e1_out, &de1);
        let (_, enc1_grads) = self.enc1.backward(&cache.x, &de1_pre);

        GradBuf {
            slots: vec![
                crate::nn::flatten(&enc1_grads.dw),
                crate::nn::flatten(&enc1_grads.db),
                crate::nn::flatten(&enc2_grads.dw),
                crate::nn::flatten(&enc2_grads.db),
                crate::nn::flatten(&dwx),
                crate::nn::flatten(&dwh),
                crate::nn::flatten(&dbias),
                crate::nn::flatten(&head_exp_grads.dw),
                crate::nn::flatten(&head_exp_grads.db),
                crate::nn::flatten(&head_pose_grads.dw),
                crate::nn::flatten(&head_pose_grads.db),
            ],
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "input_dim": self.cfg.input_dim,
            "encoder_dim": self.cfg.encoder_dim,
            "hidden_dim": self.cfg.hidden_dim,
            "expression_dim": self.cfg.expression_dim,
            "seed": self.cfg.seed,
            "epochs_trained": self.epochs_trained,
        });
        let mut w = ContainerWriter::new("mapper-checkpoint").meta(meta);
        let names = [
            "enc1_w", "enc1_b", "enc2_w", "enc2_b", "wx", "wh", "bias", "head_exp_w",
            "head_exp_b", "head_pose_w", "head_pose_b",
        ];
        for (name, slice) in names.iter().zip(self.params()) {
            w.push_real(*name, &[slice.len()], slice);
        }
        let mean: Vec<T> = self.pose_norm.mean.to_vec();
        let std: Vec<T> = self.pose_norm.std.to_vec();
        w.push_real("pose_mean", &[6], &mean);
        w.push_real("pose_std", &[6], &std);
        w.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = ContainerReader::open(path)?;
        if r.kind() != "mapper-checkpoint" {
            return Err(Error::format(format!("expected mapper-checkpoint, got {}", r.kind())));
        }
        let meta = r.meta();
        let cfg = MapperConfig {
            input_dim: meta["input_dim"].as_u64().unwrap_or(0) as usize,
            encoder_dim: meta["encoder_dim"].as_u64().unwrap_or(0) as usize,
            hidden_dim: meta["hidden_dim"].as_u64().unwrap_or(0) as usize,
            expression_dim: meta["expression_dim"].as_u64().unwrap_or(0) as usize,
            seed: meta["seed"].as_u64().unwrap_or(0),
        };
        let mut mapper = RecurrentMapper::new(cfg);
        mapper.epochs_trained = meta["epochs_trained"].as_u64().unwrap_or(0) as usize;
        let names = [
            "enc1_w", "enc1_b", "enc2_w", "enc2_b", "wx", "wh", "bias", "head_exp_w",
            "head_exp_b", "head_pose_w", "head_pose_b",
        ];
        for (name, slot) in names.iter().zip(mapper.params_mut()) {
            let data = r.real_array::<T>(name)?;
            if data.len() != slot.len() {
                return Err(Error::format(format!(
                    "checkpoint array `{name}` has {} entries, expected {}",
                    data.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&data);
        }
        let mean = r.real_array::<T>("pose_mean")?;
        let std = r.real_array::<T>("pose_std")?;
        for k in 0..6 {
            mapper.pose_norm.mean[k] = mean[k];
            mapper.pose_norm.std[k] = std[k];
        }
        Ok(mapper)
    }
}

/// The four loss components, before weighting.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<T> {
    pub mse_beta: T,
    pub mse_pose: T,
    pub continuity_pose: T,
    pub continuity_beta: T,
}

impl<T: Real> LossTerms<T> {
    pub fn total(&self, w: &LossWeights<T>) -> T {
        self.mse_beta
            + w.lambda1 * self.mse_pose
            + w.lambda2 * self.continuity_pose
            + w.lambda3 * self.continuity_beta
    }
}

fn check_shapes<T: Real>(a: &Array2<T>, b: &Array2<T>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::config(format!(
            "{what} shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// MSE terms are means over frames and channels; continuity terms are sums of
/// squared inter-frame differences over the whole trajectory.
pub fn loss_terms<T: Real>(
    beta_pred: &Array2<T>,
    pose_pred: &Array2<T>,
    beta_gt: &Array2<T>,
    pose_gt: &Array2<T>,
) -> Result<LossTerms<T>> {
    check_shapes(beta_pred, beta_gt, "expression")?;
    check_shapes(pose_pred, pose_gt, "pose")?;
    if beta_pred.nrows() != pose_pred.nrows() {
        return Err(Error::config("expression and pose sequence lengths differ"));
    }

    let mse = |pred: &Array2<T>, gt: &Array2<T>| -> T {
        let n = T::of_usize(pred.len());
        pred.iter()
            .zip(gt.iter())
            .map(|(&p, &g)| (p - g) * (p - g))
            .sum::<T>()
            / n
    };
    let continuity = |pred: &Array2<T>| -> T {
        let mut acc = T::zero();
        for t in 0..pred.nrows().saturating_sub(1) {
            for d in 0..pred.ncols() {
                let diff = pred[[t + 1, d]] - pred[[t, d]];
                acc += diff * diff;
            }
        }
        acc
    };

    Ok(LossTerms {
        mse_beta: mse(beta_pred, beta_gt),
        mse_pose: mse(pose_pred, pose_gt),
        continuity_pose: continuity(pose_pred),
        continuity_beta: continuity(beta_pred),
    })
}

/// Weighted scalar loss.
pub fn loss<T: Real>(
    beta_pred: &Array2<T>,
    pose_pred: &Array2<T>,
    beta_gt: &Array2<T>,
    pose_gt: &Array2<T>,
    weights: &LossWeights<T>,
) -> Result<T> {
    Ok(loss_terms(beta_pred, pose_pred, beta_gt, pose_gt)?.total(weights))
}

/// Gradients of the weighted loss with respect to the predictions.
pub fn loss_gradients<T: Real>(
    beta_pred: &Array2<T>,
    pose_pred: &Array2<T>,
    beta_gt: &Array2<T>,
    pose_gt: &Array2<T>,
    weights: &LossWeights<T>,
) -> (Array2<T>, Array2<T>) {
    let two = T::of(2.0);
    let mse_grad = |pred: &Array2<T>, gt: &Array2<T>, scale: T| -> Array2<T> {
        let n = T::of_usize(pred.len());
        let mut g = pred - gt;
        g.mapv_inplace(|v| two * v * scale / n);
        g
    };
    let add_continuity = |g: &mut Array2<T>, pred: &Array2<T>, weight: T| {
        let t_len = pred.nrows();
        for t in 0..t_len {
            for d in 0..pred.ncols() {
                let mut acc = T::zero();
                if t + 1 < t_len {
                    acc -= two * (pred[[t + 1, d]] - pred[[t, d]]);
                }
                if t > 0 {
                    acc += two * (pred[[t, d]] - pred[[t - 1, d]]);
                }
                g[[t, d]] += weight * acc;
            }
        }
    };

    let mut dbeta = mse_grad(beta_pred, beta_gt, T::one());
    add_continuity(&mut dbeta, beta_pred, weights.lambda3);
    let mut dpose = mse_grad(pose_pred, pose_gt, weights.lambda1);
    add_continuity(&mut dpose, pose_pred, weights.lambda2);
    (dbeta, dpose)
}

#[derive(Clone, Debug)]
pub struct TrainOptions<T> {
    pub epochs: usize,
    pub lr: T,
    pub weights: LossWeights<T>,
    /// Fit a pose normalizer from the corpus before training (general stage).
    pub standardize_pose: bool,
}

impl<T: Real> TrainOptions<T> {
    pub fn general(epochs: usize) -> Self {
        TrainOptions {
            epochs,
            lr: T::of(1e-4),
            weights: LossWeights::default(),
            standardize_pose: true,
        }
    }

    pub fn finetune(epochs: usize) -> Self {
        TrainOptions {
            epochs,
            lr: T::of(1e-5),
            weights: LossWeights::default(),
            standardize_pose: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport<T> {
    /// Mean weighted loss per epoch.
    pub epoch_losses: Vec<T>,
}

impl<T: Real> TrainReport<T> {
    pub fn initial_loss(&self) -> T {
        *self.epoch_losses.first().unwrap_or(&T::zero())
    }

    pub fn final_loss(&self) -> T {
        *self.epoch_losses.last().unwrap_or(&T::zero())
    }
}

fn run_epochs<T: Real>(
    mapper: &mut RecurrentMapper<T>,
    sequences: &[(Array2<T>, Array2<T>, Array2<T>)],
    opts: &TrainOptions<T>,
) -> Result<TrainReport<T>> {
    let mut optimizer = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let snapshot = mapper.clone();
        let mut epoch_loss = T::zero();
        for (features, beta_gt, pose_gt) in sequences {
            let (beta, pose, cache) = mapper.forward_cached(features)?;
            let value = loss(&beta, &pose, beta_gt, pose_gt, &opts.weights)?;
            if !value.is_finite() {
                *mapper = snapshot;
                return Err(Error::Diverged(format!(
                    "loss became non-finite at epoch {epoch}; restored last good parameters"
                )));
            }
            epoch_loss += value;
            let (dbeta, dpose) = loss_gradients(&beta, &pose, beta_gt, pose_gt, &opts.weights);
            let grads = mapper.backward(&cache, &dbeta, &dpose);
            if grads.has_nan() {
                *mapper = snapshot;
                return Err(Error::Diverged(format!(
                    "gradients became non-finite at epoch {epoch}; restored last good parameters"
                )));
            }
            let mut params = mapper.params_mut();
            optimizer.step(&mut params, &grads);
        }
        epoch_losses.push(epoch_loss / T::of_usize(sequences.len()));
        mapper.epochs_trained += 1;
    }
    Ok(TrainReport { epoch_losses })
}

/// Stage-1 general training over a corpus of sequences.
pub fn train_general<T: Real>(
    mapper: &mut RecurrentMapper<T>,
    corpus: &[SequenceSample<T>],
    opts: &TrainOptions<T>,
) -> Result<TrainReport<T>> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    for seq in corpus {
        seq.validate()?;
    }
    if opts.standardize_pose {
        mapper.pose_norm = PoseNormalizer::fit(corpus);
    }
    let sequences: Vec<_> = corpus
        .iter()
        .map(|seq| {
            (
                seq.audio.features.clone(),
                seq.beta_gt.clone(),
                mapper.pose_norm.standardize(&seq.pose_gt),
            )
        })
        .collect();
    run_epochs(mapper, &sequences, opts)
}

/// Personalized fine-tuning on a single target sequence (~300 frames). All
/// parameters update; the pose normalizer fitted during general training is
/// kept.
pub fn finetune<T: Real>(
    mapper: &mut RecurrentMapper<T>,
    target: &SequenceSample<T>,
    opts: &TrainOptions<T>,
) -> Result<TrainReport<T>> {
    if target.is_empty() {
        return Err(Error::invalid("fine-tune target has no frames"));
    }
    target.validate()?;
    if mapper.epochs_trained == 0 {
        return Err(Error::invalid("mapper must be generally trained before fine-tuning"));
    }
    let sequences = vec![(
        target.audio.features.clone(),
        target.beta_gt.clone(),
        mapper.pose_norm.standardize(&target.pose_gt),
    )];
    run_epochs(mapper, &sequences, opts)
}

/// Evaluate the weighted loss of a mapper on one sequence without training.
pub fn evaluate_loss<T: Real>(
    mapper: &RecurrentMapper<T>,
    sample: &SequenceSample<T>,
) -> Result<LossTerms<T>> {
    let (beta, pose, _) = mapper.forward_cached(&sample.audio.features)?;
    let pose_gt = mapper.pose_norm.standardize(&sample.pose_gt);
    loss_terms(&beta, &pose, &sample.beta_gt, &pose_gt)
}

/// Convenience: slice the first `frames` of a sample (fine-tuning budgets).
pub fn truncate_sample<T: Real>(sample: &SequenceSample<T>, frames: usize) -> SequenceSample<T> {
    let t = sample.len().min(frames);
    SequenceSample {
        audio: AudioFeatureSequence {
            features: sample.audio.features.slice(s![..t, ..]).to_owned(),
            frame_rate: sample.audio.frame_rate,
        },
        beta_gt: sample.beta_gt.slice(s![..t, ..]).to_owned(),
        pose_gt: sample.pose_gt.slice(s![..t, ..]).to_owned(),
    }
}
