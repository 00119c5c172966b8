//! One-hidden-layer MLP with manual backpropagation, AdamW, a
//! reduce-on-plateau schedule, and weight persistence.
//!
//! The networks here are small enough that hand-written dense kernels beat
//! any framework dependency: one hidden layer, leaky-ReLU, and explicit
//! gradient formulas. Batches are row-major with one sample per row.

use serde::{Deserialize, Serialize};

use crate::linalg::{matmul_nn, matmul_nt, matmul_tn, DMat};
use crate::{Error, Result, Scalar};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;
pub const LEAK_DEFAULT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetRole {
    Predictor,
    Solver,
}

impl std::fmt::Display for NetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetRole::Predictor => "predictor",
            NetRole::Solver => "solver",
        })
    }
}

/// Provenance carried inside weight files. A network only makes sense
/// together with the residual layout and input scaling it was trained for,
/// so those are pinned here and checked on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMetadata {
    pub role: NetRole,
    pub instance_seed: u64,
    pub residual_order_version: u32,
    pub leak: f64,
    /// Base of the residual-norm logarithm in the solver input scaling.
    pub log_base: String,
}

impl WeightMetadata {
    pub fn new(role: NetRole, instance_seed: u64, leak: f64) -> Self {
        WeightMetadata {
            role,
            instance_seed,
            residual_order_version: crate::RESIDUAL_ORDER_VERSION,
            leak,
            log_base: "natural".into(),
        }
    }
}

/// Weights of `out = W2 sigma(W1 u + b1) + b2` with leaky-ReLU `sigma`.
/// `W1` is `hidden x in`, `W2` is `out x hidden`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    role: NetRole,
    w1: DMat<T>,
    b1: Vec<T>,
    w2: DMat<T>,
    b2: Vec<T>,
    leak: T,
    metadata: WeightMetadata,
}

/// `in*hidden + hidden + hidden*out + out`
pub fn param_count(in_dim: usize, hidden_dim: usize, out_dim: usize) -> usize {
    in_dim * hidden_dim + hidden_dim + hidden_dim * out_dim + out_dim
}

impl<T: Scalar> MlpParams<T> {
    /// Uniform fan-in initialization `U(-sqrt(1/fan_in), sqrt(1/fan_in))`
    /// for the weights, zeros for the biases.
    pub fn init(
        role: NetRole,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
        leak: T,
        seed: u64,
        instance_seed: u64,
    ) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bound1 = (T::one() / T::of(in_dim as f64)).sqrt();
        let w1 = DMat::from_vec(
            hidden_dim,
            in_dim,
            (0..hidden_dim * in_dim)
                .map(|_| T::uniform(&mut rng, -bound1, bound1))
                .collect(),
        )
        .expect("sized by construction");
        let bound2 = (T::one() / T::of(hidden_dim as f64)).sqrt();
        let w2 = DMat::from_vec(
            out_dim,
            hidden_dim,
            (0..out_dim * hidden_dim)
                .map(|_| T::uniform(&mut rng, -bound2, bound2))
                .collect(),
        )
        .expect("sized by construction");
        MlpParams {
            role,
            w1,
            b1: vec![T::zero(); hidden_dim],
            w2,
            b2: vec![T::zero(); out_dim],
            leak,
            metadata: WeightMetadata::new(role, instance_seed, leak.to_f64()),
        }
    }

    pub fn from_parts(
        role: NetRole,
        w1: DMat<T>,
        b1: Vec<T>,
        w2: DMat<T>,
        b2: Vec<T>,
        leak: T,
        metadata: WeightMetadata,
    ) -> Result<Self> {
        if b1.len() != w1.rows() {
            return Err(Error::DimMismatch {
                what: "b1 length",
                expected: w1.rows(),
                got: b1.len(),
            });
        }
        if w2.cols() != w1.rows() {
            return Err(Error::DimMismatch {
                what: "w2 columns",
                expected: w1.rows(),
                got: w2.cols(),
            });
        }
        if b2.len() != w2.rows() {
            return Err(Error::DimMismatch {
                what: "b2 length",
                expected: w2.rows(),
                got: b2.len(),
            });
        }
        Ok(MlpParams {
            role,
            w1,
            b1,
            w2,
            b2,
            leak,
            metadata,
        })
    }

    pub fn role(&self) -> NetRole {
        self.role
    }
    pub fn in_dim(&self) -> usize {
        self.w1.cols()
    }
    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }
    pub fn out_dim(&self) -> usize {
        self.w2.rows()
    }
    pub fn leak(&self) -> T {
        self.leak
    }
    pub fn metadata(&self) -> &WeightMetadata {
        &self.metadata
    }

    pub fn param_count(&self) -> usize {
        param_count(self.in_dim(), self.hidden_dim(), self.out_dim())
    }

    #[inline]
    fn activate(&self, a: T) -> T {
        if a > T::zero() {
            a
        } else {
            self.leak * a
        }
    }

    #[inline]
    fn activate_grad(&self, a: T) -> T {
        if a > T::zero() {
            T::one()
        } else {
            self.leak
        }
    }

    /// Batch forward pass; returns outputs and the pre-activation cache the
    /// backward pass needs.
    pub fn forward(&self, input: &DMat<T>) -> (DMat<T>, ForwardCache<T>) {
        assert_eq!(input.cols(), self.in_dim(), "input width");
        let n = input.rows();
        let mut pre1 = matmul_nt(input, &self.w1);
        for i in 0..n {
            let row = pre1.row_mut(i);
            for (v, b) in row.iter_mut().zip(&self.b1) {
                *v = *v + *b;
            }
        }
        let mut hidden = pre1.clone();
        for v in hidden.data_mut() {
            *v = self.activate(*v);
        }
        let mut out = matmul_nt(&hidden, &self.w2);
        for i in 0..n {
            let row = out.row_mut(i);
            for (v, b) in row.iter_mut().zip(&self.b2) {
                *v = *v + *b;
            }
        }
        (out, ForwardCache { pre1, hidden })
    }

    /// Single-sample forward pass without cache allocation.
    pub fn forward_one(&self, input: &[T]) -> Vec<T> {
        assert_eq!(input.len(), self.in_dim(), "input width");
        let hidden: Vec<T> = (0..self.hidden_dim())
            .map(|j| self.activate(crate::linalg::dot(self.w1.row(j), input) + self.b1[j]))
            .collect();
        (0..self.out_dim())
            .map(|k| crate::linalg::dot(self.w2.row(k), &hidden) + self.b2[k])
            .collect()
    }

    /// Backpropagates `d_out = d loss / d output` through the network,
    /// returning parameter gradients. Inputs are treated as constants.
    pub fn backward(
        &self,
        input: &DMat<T>,
        cache: &ForwardCache<T>,
        d_out: &DMat<T>,
    ) -> MlpGrads<T> {
        let n = input.rows();
        assert_eq!(d_out.rows(), n);
        assert_eq!(d_out.cols(), self.out_dim());

        let w2_grad = matmul_tn(d_out, &cache.hidden);
        let mut b2_grad = vec![T::zero(); self.out_dim()];
        for i in 0..n {
            for (g, v) in b2_grad.iter_mut().zip(d_out.row(i)) {
                *g = *g + *v;
            }
        }

        let mut d_pre1 = matmul_nn(d_out, &self.w2);
        for (d, a) in d_pre1.data_mut().iter_mut().zip(cache.pre1.data()) {
            *d = *d * self.activate_grad(*a);
        }

        let w1_grad = matmul_tn(&d_pre1, input);
        let mut b1_grad = vec![T::zero(); self.hidden_dim()];
        for i in 0..n {
            for (g, v) in b1_grad.iter_mut().zip(d_pre1.row(i)) {
                *g = *g + *v;
            }
        }

        MlpGrads {
            w1: w1_grad,
            b1: b1_grad,
            w2: w2_grad,
            b2: b2_grad,
        }
    }

    /// Parameter tensors in update order: w1, b1, w2, b2.
    pub fn tensors(&self) -> [&[T]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&WeightFile::from_params(self))
            .expect("weights serialize");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str, expected_role: NetRole) -> Result<Self> {
        let file: WeightFile<T> = serde_json::from_str(json)?;
        file.into_params(expected_role)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, expected_role: NetRole) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json, expected_role)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pre1: DMat<T>,
    hidden: DMat<T>,
}

/// Gradients (or any buffer) shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub w1: DMat<T>,
    pub b1: Vec<T>,
    pub w2: DMat<T>,
    pub b2: Vec<T>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn zeros_like(p: &MlpParams<T>) -> Self {
        MlpGrads {
            w1: DMat::zeros(p.hidden_dim(), p.in_dim()),
            b1: vec![T::zero(); p.hidden_dim()],
            w2: DMat::zeros(p.out_dim(), p.hidden_dim()),
            b2: vec![T::zero(); p.out_dim()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> [&[T]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps_adam: T,
    pub weight_decay: T,
}

impl<T: Scalar> Default for AdamWConfig<T> {
    fn default() -> Self {
        AdamWConfig {
            lr: T::of(1e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps_adam: T::of(1e-8),
            weight_decay: T::of(1e-3),
        }
    }
}

/// AdamW with decoupled weight decay:
/// `theta <- theta - lr*wd*theta - lr*m_hat/(sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct AdamWState<T> {
    cfg: AdamWConfig<T>,
    step_count: u64,
    m: MlpGrads<T>,
    v: MlpGrads<T>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &MlpParams<T>, cfg: AdamWConfig<T>) -> Self {
        AdamWState {
            cfg,
            step_count: 0,
            m: MlpGrads::zeros_like(params),
            v: MlpGrads::zeros_like(params),
        }
    }

    pub fn lr(&self) -> T {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.cfg.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Non-finite gradients reject the whole step:
    /// neither the moments nor the parameters change.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &MlpGrads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = self.cfg;
        let bias1 = T::one() - c.beta1.powi(t);
        let bias2 = T::one() - c.beta2.powi(t);
        let one = T::one();
        for (((theta, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..theta.len() {
                let gi = g[i];
                m[i] = c.beta1 * m[i] + (one - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (one - c.beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                theta[i] = theta[i]
                    - c.lr * c.weight_decay * theta[i]
                    - c.lr * m_hat / (v_hat.sqrt() + c.eps_adam);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauDecision {
    Continue,
    Reduced,
    /// Plateau hit while already at the minimum learning rate.
    Stop,
}

/// Reduce-on-plateau schedule over a strictly-improving best loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler<T> {
    lr: T,
    factor: T,
    patience: usize,
    cooldown: usize,
    min_lr: T,
    best_loss: Option<T>,
    epochs_since_improvement: usize,
    cooldown_remaining: usize,
}

impl<T: Scalar> PlateauScheduler<T> {
    pub fn new(lr: T, factor: T, patience: usize, cooldown: usize, min_lr: T) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            cooldown,
            min_lr,
            best_loss: None,
            epochs_since_improvement: 0,
            cooldown_remaining: 0,
        }
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn best_loss(&self) -> Option<T> {
        self.best_loss
    }

    /// Observes one epoch loss. Non-improving epochs (NaN included) advance
    /// the plateau counter unless a cooldown since the last reduction is
    /// still running.
    pub fn step(&mut self, epoch_loss: T) -> PlateauDecision {
        let improved = match self.best_loss {
            None => true,
            Some(best) => epoch_loss < best,
        };
        if improved {
            self.best_loss = Some(epoch_loss);
            self.epochs_since_improvement = 0;
            return PlateauDecision::Continue;
        }
        if self.cooldown_remaining > 0 {
            self.cooldown_remaining -= 1;
            return PlateauDecision::Continue;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            self.epochs_since_improvement = 0;
            let candidate = (self.lr * self.factor).max(self.min_lr);
            if candidate >= self.lr {
                // Already pinned at the minimum rate; a further plateau
                // means training has stalled for good.
                return PlateauDecision::Stop;
            }
            self.lr = candidate;
            self.cooldown_remaining = self.cooldown;
            return PlateauDecision::Reduced;
        }
        PlateauDecision::Continue
    }
}

#[derive(Serialize, Deserialize)]
struct WeightFile<T> {
    format_version: u32,
    role: NetRole,
    in_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
    leak: T,
    w1_row_major: Vec<T>,
    b1: Vec<T>,
    w2_row_major: Vec<T>,
    b2: Vec<T>,
    metadata: WeightMetadata,
}

impl<T: Scalar> WeightFile<T> {
    fn from_params(p: &MlpParams<T>) -> Self {
        WeightFile {
            format_version: WEIGHT_FORMAT_VERSION,
            role: p.role,
            in_dim: p.in_dim(),
            hidden_dim: p.hidden_dim(),
            out_dim: p.out_dim(),
            leak: p.leak,
            w1_row_major: p.w1.data().to_vec(),
            b1: p.b1.clone(),
            w2_row_major: p.w2.data().to_vec(),
            b2: p.b2.clone(),
            metadata: p.metadata.clone(),
        }
    }

    fn into_params(self, expected_role: NetRole) -> Result<MlpParams<T>> {
        if self.format_version != WEIGHT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: WEIGHT_FORMAT_VERSION,
                found: self.format_version,
            });
        }
        if self.role != expected_role {
            return Err(Error::RoleMismatch {
                expected: expected_role,
                found: self.role,
            });
        }
        if self.metadata.residual_order_version != crate::RESIDUAL_ORDER_VERSION {
            return Err(Error::Validation(format!(
                "weights trained against residual order v{}, this build uses v{}",
                self.metadata.residual_order_version,
                crate::RESIDUAL_ORDER_VERSION
            )));
        }
        let w1 = DMat::from_vec(self.hidden_dim, self.in_dim, self.w1_row_major)?;
        let w2 = DMat::from_vec(self.out_dim, self.hidden_dim, self.w2_row_major)?;
        MlpParams::from_parts(self.role, w1, self.b1, w2, self.b2, self.leak, self.metadata)
    }
}
