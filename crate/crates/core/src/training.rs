//! Self-supervised training. The predictor learns x -> z by minimizing the
//! KKT metric of its own output; the solver learns residual-conditioned
//! update steps over a replay pool of its own iterates, with a safeguard
//! against runaway steps and periodic resampling.

use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kkt::{
    kkt_jacobian, kkt_residual, Convexification, KktResidual, PrimalDual, FB_EPS_DEFAULT,
};
use crate::linalg::DMat;
use crate::nn::{
    AdamWConfig, AdamWState, MlpParams, NetRole, PlateauDecision, PlateauScheduler, LEAK_DEFAULT,
};
use crate::problems::{sample_params_with, ParamBatch, ProblemInstance};
use crate::{Error, Result, Scalar};

/// Consecutive non-finite loss evaluations tolerated before training aborts.
const DIVERGENCE_PATIENCE: usize = 10;

/// Floor applied to T before taking its log in the solver loss.
const LOG_CLAMP: f64 = 1e-300;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorTrainConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub patience: usize,
    pub cooldown: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub max_epochs: usize,
    pub weight_decay: f64,
    /// Convexification strength, applied to nonconvex kinds only.
    pub rho: f64,
    pub seed: u64,
}

impl Default for PredictorTrainConfig {
    /// Desk-scale defaults: full pipelines finish in minutes on one core.
    fn default() -> Self {
        PredictorTrainConfig {
            hidden_dim: 256,
            batch_size: 256,
            lr_start: 1e-3,
            patience: 1000,
            cooldown: 100,
            lr_factor: 0.1,
            min_lr: 1e-8,
            max_epochs: 30_000,
            weight_decay: 1e-3,
            rho: 1.0,
            seed: 0,
        }
    }
}

impl PredictorTrainConfig {
    pub fn full() -> Self {
        PredictorTrainConfig {
            hidden_dim: 2048,
            batch_size: 4096,
            max_epochs: 150_000,
            ..PredictorTrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden_dim > 0
            && self.batch_size > 0
            && self.lr_start > 0.0
            && self.patience > 0
            && self.lr_factor > 0.0
            && self.lr_factor < 1.0
            && self.min_lr > 0.0
            && self.max_epochs > 0
            && self.weight_decay >= 0.0
            && self.rho > 0.0;
        if !ok {
            return Err(Error::Validation(
                "predictor config: counts and rates must be positive, lr_factor in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverTrainConfig {
    pub hidden_dim: usize,
    /// Pool size; every slot contributes to every step's batch.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Residual metric at or below which a slot counts as solved.
    pub tau: f64,
    /// Updates a slot survives before forced resampling.
    pub n_max_train: usize,
    pub total_steps: usize,
    /// Steps trained before the pool starts moving.
    pub warmup_delay: usize,
    /// Reject a pool update when T exceeds this multiple of the slot's T at
    /// (re)sampling time.
    pub safeguard_delta: f64,
    pub alpha: f64,
    pub use_predictor: bool,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SolverTrainConfig {
    fn default() -> Self {
        SolverTrainConfig {
            hidden_dim: 256,
            batch_size: 256,
            lr: 1e-4,
            weight_decay: 1e-3,
            tau: 1e-8,
            n_max_train: 2000,
            total_steps: 20_000,
            warmup_delay: 100,
            safeguard_delta: 1000.0,
            alpha: 1.0,
            use_predictor: true,
            rho: 1.0,
            seed: 0,
        }
    }
}

impl SolverTrainConfig {
    pub fn full() -> Self {
        SolverTrainConfig {
            hidden_dim: 2048,
            batch_size: 4096,
            total_steps: 100_000,
            ..SolverTrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hidden_dim > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.tau > 0.0
            && self.n_max_train > 0
            && self.total_steps > 0
            && self.safeguard_delta > 1.0
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.rho > 0.0;
        if !ok {
            return Err(Error::Validation(
                "solver config: tau > 0, safeguard_delta > 1, alpha in (0,1], counts positive"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord<T> {
    pub step: usize,
    pub loss: T,
    pub lr: T,
    pub resampled_count: usize,
    pub nonfinite_count: usize,
}

const HISTORY_HEADER: &str = "step,loss,lr,resampled_count,nonfinite_count";

pub fn save_history<T: Scalar>(path: &Path, history: &[TrainRecord<T>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.step, r.loss, r.lr, r.resampled_count, r.nonfinite_count
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_history<T: Scalar>(path: &Path) -> Result<Vec<TrainRecord<T>>> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Validation("empty history file".into()))??;
    if header.trim() != HISTORY_HEADER {
        return Err(Error::Validation(format!(
            "unexpected history header: {header}"
        )));
    }
    let mut history = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Validation(format!("bad history row: {line}")));
        }
        let parse_f = |s: &str| -> Result<T> {
            s.trim()
                .parse::<f64>()
                .map(T::of)
                .map_err(|e| Error::Validation(format!("bad float '{s}': {e}")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Validation(format!("bad count '{s}': {e}")))
        };
        history.push(TrainRecord {
            step: parse_u(fields[0])?,
            loss: parse_f(fields[1])?,
            lr: parse_f(fields[2])?,
            resampled_count: parse_u(fields[3])?,
            nonfinite_count: parse_u(fields[4])?,
        });
    }
    Ok(history)
}

pub struct PredictorEval<T> {
    pub loss: T,
    /// Per-sample d(loss)/d(z); rows align with `z_pred`.
    pub d_z: DMat<T>,
    pub nonfinite_count: usize,
}

/// Mean KKT metric of the predictions, scaled by n_z, and its gradient with
/// respect to each predicted z. With `conv_rho` set, the gradient path is
/// convexified at each prediction (treated as a constant linearization
/// point); the loss value itself always uses the true residual, which the
/// convexified one equals at the linearization point.
pub fn predictor_loss_and_grad<T: Scalar>(
    inst: &ProblemInstance<T>,
    xs: &ParamBatch<T>,
    z_pred: &DMat<T>,
    conv_rho: Option<T>,
) -> Result<PredictorEval<T>> {
    let n = xs.len();
    debug_assert_eq!(z_pred.rows(), n);
    debug_assert_eq!(z_pred.cols(), inst.n_z());
    let eps = T::of(FB_EPS_DEFAULT);
    let n_z = inst.n_z();

    let mut d_z = DMat::zeros(n, n_z);
    let mut loss_sum = T::zero();
    let mut valid = 0usize;
    for i in 0..n {
        let z = PrimalDual::from_concat(inst.n_y(), inst.n_h(), inst.n_g(), z_pred.row(i).to_vec())?;
        let x = xs.point(i);
        let res = kkt_residual(inst, &z, x, None, eps);
        let t = res.metric_t();
        if !t.is_finite() {
            continue;
        }
        let conv = conv_rho.map(|rho| Convexification {
            rho,
            y_lin: z.y().to_vec(),
        });
        let j = kkt_jacobian(inst, &z, conv.as_ref(), eps)?;
        let g = j.matvec_t(res.f());
        d_z.row_mut(i).copy_from_slice(&g);
        loss_sum += t;
        valid += 1;
    }

    let (loss, scale) = if valid == 0 {
        (T::nan(), T::zero())
    } else {
        let denom = T::of(valid as f64) * T::of(n_z as f64);
        (loss_sum / denom, T::one() / denom)
    };
    for v in d_z.data_mut() {
        *v = *v * scale;
    }
    Ok(PredictorEval {
        loss,
        d_z,
        nonfinite_count: n - valid,
    })
}

/// `[F / ||F||; ln ||F||]`. The log feature uses the natural logarithm; the
/// choice is recorded in the weight metadata and must match at inference.
pub fn solver_input_scale<T: Scalar>(res: &KktResidual<T>) -> Result<Vec<T>> {
    let norm = res.norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("solver input scaling"));
    }
    if norm <= T::zero() {
        return Err(Error::Validation(
            "cannot scale a zero residual; the iterate is already converged".into(),
        ));
    }
    let mut out = Vec::with_capacity(res.len() + 1);
    for &fi in res.f() {
        out.push(fi / norm);
    }
    out.push(norm.ln());
    Ok(out)
}

/// One solver step proposal: `||F|| * mlp([F/||F||; ln||F||; x])`.
pub fn solver_predict_step<T: Scalar>(
    solver: &MlpParams<T>,
    res: &KktResidual<T>,
    x: &[T],
) -> Result<Vec<T>> {
    let mut input = solver_input_scale(res)?;
    input.extend_from_slice(x);
    debug_assert_eq!(input.len(), solver.in_dim());
    let norm = res.norm();
    let mut out = solver.forward_one(&input);
    for v in &mut out {
        *v = *v * norm;
    }
    Ok(out)
}

pub struct SolverEval<T> {
    pub loss: T,
    /// Per-sample d(loss)/d(delta); rows align with `deltas`.
    pub d_delta: Vec<Vec<T>>,
    pub nonfinite_count: usize,
}

/// Mean log10(T/n_z) after applying each proposed step, and its gradient
/// with respect to the steps. With `conv_rho` set, both the loss residual
/// and its Jacobian are convexified at the pre-step iterate y_t; pool
/// bookkeeping and network inputs elsewhere always use the true residual.
pub fn solver_loss_and_grad<T: Scalar>(
    inst: &ProblemInstance<T>,
    xs: &[&[T]],
    zs: &[&PrimalDual<T>],
    deltas: &[&[T]],
    conv_rho: Option<T>,
) -> Result<SolverEval<T>> {
    let n = zs.len();
    debug_assert_eq!(xs.len(), n);
    debug_assert_eq!(deltas.len(), n);
    let eps = T::of(FB_EPS_DEFAULT);
    let n_z = inst.n_z();
    let ln10 = T::of(std::f64::consts::LN_10);
    let clamp = T::of(LOG_CLAMP);

    let mut d_delta = vec![vec![T::zero(); n_z]; n];
    let mut loss_sum = T::zero();
    let mut valid = 0usize;
    for i in 0..n {
        let mut stepped = zs[i].clone();
        stepped.step(T::one(), deltas[i]);
        let conv = conv_rho.map(|rho| Convexification {
            rho,
            y_lin: zs[i].y().to_vec(),
        });
        let res = kkt_residual(inst, &stepped, xs[i], conv.as_ref(), eps);
        let t = res.metric_t();
        if !t.is_finite() {
            continue;
        }
        let t_c = t.max(clamp);
        loss_sum += (t_c / T::of(n_z as f64)).log10();
        let j = kkt_jacobian(inst, &stepped, conv.as_ref(), eps)?;
        let g = j.matvec_t(res.f());
        let scale = T::one() / (t_c * ln10);
        for (d, gi) in d_delta[i].iter_mut().zip(&g) {
            *d = *gi * scale;
        }
        valid += 1;
    }

    let (loss, scale) = if valid == 0 {
        (T::nan(), T::zero())
    } else {
        let inv = T::one() / T::of(valid as f64);
        (loss_sum * inv, inv)
    };
    for row in &mut d_delta {
        for v in row {
            *v = *v * scale;
        }
    }
    Ok(SolverEval {
        loss,
        d_delta,
        nonfinite_count: n - valid,
    })
}

/// Trains the x -> z predictor: fresh parameter batches every epoch, AdamW
/// with weight decay, learning rate reduced on plateau until the scheduler
/// signals stop.
pub fn train_predictor<T: Scalar>(
    inst: &ProblemInstance<T>,
    cfg: &PredictorTrainConfig,
) -> Result<(MlpParams<T>, Vec<TrainRecord<T>>)> {
    cfg.validate()?;
    if inst.n_h() == 0 {
        return Err(Error::Validation(
            "predictor training needs at least one parameter dimension".into(),
        ));
    }
    let conv_rho = (!inst.kind().is_convex()).then(|| T::of(cfg.rho));
    let mut net = MlpParams::init(
        NetRole::Predictor,
        inst.n_h(),
        cfg.hidden_dim,
        inst.n_z(),
        T::of(LEAK_DEFAULT),
        cfg.seed,
        inst.seed(),
    );
    let mut opt = AdamWState::new(
        &net,
        AdamWConfig {
            lr: T::of(cfg.lr_start),
            weight_decay: T::of(cfg.weight_decay),
            ..AdamWConfig::default()
        },
    );
    let mut sched = PlateauScheduler::new(
        T::of(cfg.lr_start),
        T::of(cfg.lr_factor),
        cfg.patience,
        cfg.cooldown,
        T::of(cfg.min_lr),
    );
    // Data stream offset from the weight-init seed so the two never collide.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut history = Vec::new();
    let mut bad_streak = 0usize;
    for epoch in 0..cfg.max_epochs {
        let xs = sample_params_with(inst, cfg.batch_size, &mut rng);
        let (z_pred, cache) = net.forward(xs.matrix());
        let eval = predictor_loss_and_grad(inst, &xs, &z_pred, conv_rho)?;
        let record = TrainRecord {
            step: epoch,
            loss: eval.loss,
            lr: opt.lr(),
            resampled_count: 0,
            nonfinite_count: eval.nonfinite_count,
        };

        if !eval.loss.is_finite() {
            bad_streak += 1;
            history.push(record);
            if bad_streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged(format!(
                    "predictor loss non-finite for {bad_streak} consecutive epochs (epoch {epoch})"
                )));
            }
            continue;
        }

        let grads = net.backward(xs.matrix(), &cache, &eval.d_z);
        match opt.step(&mut net, &grads) {
            Ok(()) => bad_streak = 0,
            Err(_) => {
                // Rejected step: weights untouched, count toward divergence.
                bad_streak += 1;
                if bad_streak >= DIVERGENCE_PATIENCE {
                    history.push(record);
                    return Err(Error::Diverged(format!(
                        "predictor gradients non-finite for {bad_streak} consecutive epochs (epoch {epoch})"
                    )));
                }
            }
        }

        let decision = sched.step(eval.loss);
        history.push(record);
        match decision {
            PlateauDecision::Continue => {}
            PlateauDecision::Reduced => opt.set_lr(sched.lr()),
            PlateauDecision::Stop => break,
        }
    }
    Ok((net, history))
}

#[derive(Clone, Debug)]
pub struct PoolSlot<T> {
    pub x: Vec<T>,
    pub z: PrimalDual<T>,
    /// Update attempts since (re)sampling, accepted or not.
    pub k: usize,
    /// True-residual metric at (re)sampling time; anchors the safeguard.
    pub t0: T,
}

/// Step-wise solver trainer. [`train_solver`] drives it to completion; the
/// struct itself is public so the pool dynamics can be observed directly.
pub struct SolverTrainer<'a, T> {
    inst: &'a ProblemInstance<T>,
    cfg: SolverTrainConfig,
    predictor: Option<&'a MlpParams<T>>,
    net: MlpParams<T>,
    opt: AdamWState<T>,
    rng: ChaCha8Rng,
    pool: Vec<PoolSlot<T>>,
    steps_done: usize,
    bad_streak: usize,
    conv_rho: Option<T>,
}

impl<'a, T: Scalar> SolverTrainer<'a, T> {
    pub fn new(
        inst: &'a ProblemInstance<T>,
        cfg: SolverTrainConfig,
        predictor: Option<&'a MlpParams<T>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.use_predictor != predictor.is_some() {
            return Err(Error::Validation(
                "predictor must be supplied exactly when use_predictor is set".into(),
            ));
        }
        if let Some(p) = predictor {
            if p.role() != NetRole::Predictor {
                return Err(Error::RoleMismatch {
                    expected: NetRole::Predictor,
                    found: p.role(),
                });
            }
            if p.in_dim() != inst.n_h() || p.out_dim() != inst.n_z() {
                return Err(Error::DimMismatch {
                    what: "predictor output dimension",
                    expected: inst.n_z(),
                    got: p.out_dim(),
                });
            }
        }
        let in_dim = inst.n_z() + 1 + inst.n_h();
        let net = MlpParams::init(
            NetRole::Solver,
            in_dim,
            cfg.hidden_dim,
            inst.n_z(),
            T::of(LEAK_DEFAULT),
            cfg.seed,
            inst.seed(),
        );
        let opt = AdamWState::new(
            &net,
            AdamWConfig {
                lr: T::of(cfg.lr),
                weight_decay: T::of(cfg.weight_decay),
                ..AdamWConfig::default()
            },
        );
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let conv_rho = (!inst.kind().is_convex()).then(|| T::of(cfg.rho));
        let mut trainer = SolverTrainer {
            inst,
            cfg,
            predictor,
            net,
            opt,
            rng,
            pool: Vec::new(),
            steps_done: 0,
            bad_streak: 0,
            conv_rho,
        };
        trainer.pool = (0..trainer.cfg.batch_size)
            .map(|_| trainer.sample_slot())
            .collect();
        Ok(trainer)
    }

    pub fn pool(&self) -> &[PoolSlot<T>] {
        &self.pool
    }

    pub fn net(&self) -> &MlpParams<T> {
        &self.net
    }

    pub fn into_net(self) -> MlpParams<T> {
        self.net
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    fn sample_slot(&mut self) -> PoolSlot<T> {
        let (n_y, n_h, n_g) = (self.inst.n_y(), self.inst.n_h(), self.inst.n_g());
        let one = T::one();
        let x: Vec<T> = (0..n_h)
            .map(|_| T::uniform(&mut self.rng, -one, one))
            .collect();
        let z = match self.predictor {
            Some(p) => PrimalDual::from_concat(n_y, n_h, n_g, p.forward_one(&x))
                .expect("predictor output sized by construction"),
            None => {
                let mut z = PrimalDual::zeros(n_y, n_h, n_g);
                for v in z.as_mut_slice() {
                    *v = T::standard_normal(&mut self.rng);
                }
                z
            }
        };
        let t0 = kkt_residual(self.inst, &z, &x, None, T::of(FB_EPS_DEFAULT)).metric_t();
        PoolSlot { x, z, k: 0, t0 }
    }

    pub fn step(&mut self) -> Result<TrainRecord<T>> {
        let eps = T::of(FB_EPS_DEFAULT);
        let n = self.pool.len();
        let n_z = self.inst.n_z();
        let in_dim = self.net.in_dim();

        // Network inputs from the true residual at every slot.
        let mut inputs = DMat::zeros(n, in_dim);
        let mut norms = vec![T::zero(); n];
        let mut t_now = vec![T::zero(); n];
        let mut usable = vec![true; n];
        for (i, slot) in self.pool.iter().enumerate() {
            let res = kkt_residual(self.inst, &slot.z, &slot.x, None, eps);
            t_now[i] = res.metric_t();
            match solver_input_scale(&res) {
                Ok(scaled) => {
                    let row = inputs.row_mut(i);
                    row[..n_z + 1].copy_from_slice(&scaled);
                    row[n_z + 1..].copy_from_slice(&slot.x);
                    norms[i] = res.norm();
                }
                // Zero or non-finite residual: the slot cannot feed the
                // network this step; it is resampled below.
                Err(_) => usable[i] = false,
            }
        }

        let (raw, cache) = self.net.forward(&inputs);
        let mut deltas = vec![vec![T::zero(); n_z]; n];
        for i in 0..n {
            if usable[i] {
                for (d, &r) in deltas[i].iter_mut().zip(raw.row(i)) {
                    *d = norms[i] * r;
                }
            }
        }

        let idx: Vec<usize> = (0..n).filter(|&i| usable[i]).collect();
        let xs: Vec<&[T]> = idx.iter().map(|&i| self.pool[i].x.as_slice()).collect();
        let zs: Vec<&PrimalDual<T>> = idx.iter().map(|&i| &self.pool[i].z).collect();
        let ds: Vec<&[T]> = idx.iter().map(|&i| deltas[i].as_slice()).collect();
        let eval = solver_loss_and_grad(self.inst, &xs, &zs, &ds, self.conv_rho)?;

        let record_step = self.steps_done;
        let nonfinite_count = eval.nonfinite_count + (n - idx.len());

        if !eval.loss.is_finite() {
            self.bad_streak += 1;
            if self.bad_streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged(format!(
                    "solver loss non-finite for {} consecutive steps (step {record_step})",
                    self.bad_streak
                )));
            }
        } else {
            // d(loss)/d(raw output) = ||F|| * d(loss)/d(delta).
            let mut d_out = DMat::zeros(n, n_z);
            for (pos, &i) in idx.iter().enumerate() {
                for (o, &g) in d_out.row_mut(i).iter_mut().zip(&eval.d_delta[pos]) {
                    *o = norms[i] * g;
                }
            }
            let grads = self.net.backward(&inputs, &cache, &d_out);
            match self.opt.step(&mut self.net, &grads) {
                Ok(()) => self.bad_streak = 0,
                Err(_) => {
                    self.bad_streak += 1;
                    if self.bad_streak >= DIVERGENCE_PATIENCE {
                        return Err(Error::Diverged(format!(
                            "solver gradients non-finite for {} consecutive steps (step {record_step})",
                            self.bad_streak
                        )));
                    }
                }
            }
        }

        let mut resampled = 0usize;
        if self.steps_done >= self.cfg.warmup_delay {
            let alpha = T::of(self.cfg.alpha);
            let tau = T::of(self.cfg.tau);
            let delta_safe = T::of(self.cfg.safeguard_delta);
            let mut pool = std::mem::take(&mut self.pool);
            for (i, slot) in pool.iter_mut().enumerate() {
                if !usable[i] {
                    *slot = self.sample_slot();
                    resampled += 1;
                    continue;
                }
                let mut z_try = slot.z.clone();
                z_try.step(alpha, &deltas[i]);
                let t_try =
                    kkt_residual(self.inst, &z_try, &slot.x, None, eps).metric_t();
                // Safeguarded update; the attempt counts either way.
                let t_cur = if t_try.is_finite() && t_try <= delta_safe * slot.t0 {
                    slot.z = z_try;
                    t_try
                } else {
                    t_now[i]
                };
                slot.k += 1;
                if slot.k >= self.cfg.n_max_train || t_cur <= tau {
                    *slot = self.sample_slot();
                    resampled += 1;
                }
            }
            self.pool = pool;
        }

        self.steps_done += 1;
        Ok(TrainRecord {
            step: record_step,
            loss: eval.loss,
            lr: self.opt.lr(),
            resampled_count: resampled,
            nonfinite_count,
        })
    }
}

/// Runs the solver trainer for `cfg.total_steps` steps.
pub fn train_solver<T: Scalar>(
    inst: &ProblemInstance<T>,
    cfg: &SolverTrainConfig,
    predictor: Option<&MlpParams<T>>,
) -> Result<(MlpParams<T>, Vec<TrainRecord<T>>)> {
    let mut trainer = SolverTrainer::new(inst, cfg.clone(), predictor)?;
    let mut history = Vec::with_capacity(cfg.total_steps);
    for _ in 0..cfg.total_steps {
        history.push(trainer.step()?);
    }
    Ok((trainer.into_net(), history))
}
