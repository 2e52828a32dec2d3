//! Dataset preparation, the three training strategies, the AdamW
//! optimizer with a cosine learning-rate schedule, data augmentation, and
//! the evaluation protocols: rollout R-MSE, rotation test,
//! super-resolution, and the trigonometric interpolation baseline.

use crate::autodiff::{ParamId, Parameters, Tape};
use crate::error::{Error, Result};
use crate::group::{act_plane, Group, GroupElement, Stab};
use crate::operator::{GfnoModel, SpectralPath};
use crate::rng::Rng;
use crate::spectral::trig_interp;
use crate::tensor::{numel_of, Tensor};

pub mod check;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Markov,
    TeacherForcing,
    Recurrent,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Markov => "markov",
            Strategy::TeacherForcing => "tf",
            Strategy::Recurrent => "recurrent",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "markov" => Ok(Strategy::Markov),
            "tf" | "teacher-forcing" => Ok(Strategy::TeacherForcing),
            "recurrent" => Ok(Strategy::Recurrent),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub in_steps: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub augment: Group,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::TeacherForcing,
            in_steps: 10,
            epochs: 20,
            batch: 20,
            lr0: 1e-3,
            weight_decay: 1e-4,
            betas: (0.9, 0.999),
            augment: Group::None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strategy == Strategy::Markov && self.in_steps != 1 {
            return Err(Error::invalid(
                "markov training conditions on exactly one step".to_string(),
            ));
        }
        if self.epochs == 0 || self.batch == 0 || self.in_steps == 0 {
            return Err(Error::invalid("epochs, batch and in_steps must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DownsampleMode {
    Strided,
    MeanPool,
}

/// Spatial downsampling of the last two axes by an integer factor.
pub fn downsample(t: &Tensor, factor: usize, mode: DownsampleMode) -> Result<Tensor> {
    let shape = t.shape();
    if shape.len() < 2 {
        return Err(Error::invalid("downsample expects spatial axes".to_string()));
    }
    let n0 = shape[shape.len() - 2];
    let n1 = shape[shape.len() - 1];
    if factor == 0 || n0 % factor != 0 || n1 % factor != 0 {
        return Err(Error::invalid(format!(
            "factor {factor} does not divide {n0}x{n1}"
        )));
    }
    let (m0, m1) = (n0 / factor, n1 / factor);
    let batch = numel_of(&shape[..shape.len() - 2]);
    let lanes = t.dtype().lanes();
    let mut out_shape = shape.to_vec();
    let r = out_shape.len();
    out_shape[r - 2] = m0;
    out_shape[r - 1] = m1;
    let mut out = Tensor::zeros(t.dtype(), &out_shape);
    let src = t.data();
    let dst = out.data_mut();
    for b in 0..batch {
        for i in 0..m0 {
            for j in 0..m1 {
                let d = (b * m0 * m1 + i * m1 + j) * lanes;
                match mode {
                    DownsampleMode::Strided => {
                        let s = (b * n0 * n1 + i * factor * n1 + j * factor) * lanes;
                        dst[d..d + lanes].copy_from_slice(&src[s..s + lanes]);
                    }
                    DownsampleMode::MeanPool => {
                        let inv = 1.0 / (factor * factor) as f64;
                        for di in 0..factor {
                            for dj in 0..factor {
                                let s = (b * n0 * n1
                                    + (i * factor + di) * n1
                                    + (j * factor + dj))
                                    * lanes;
                                for l in 0..lanes {
                                    dst[d + l] += src[s + l] * inv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sliding-window training pairs from one trajectory (T+1, n, n).
///
/// Markov and teacher forcing pair ground-truth windows with the next
/// frame; recurrent yields one sample per trajectory pairing the first
/// T_in frames with the whole remaining rollout.
pub fn make_pairs(
    frames: &Tensor,
    strategy: Strategy,
    t_in: usize,
) -> Result<Vec<(Tensor, Tensor)>> {
    let shape = frames.shape();
    if shape.len() != 3 {
        return Err(Error::invalid(format!(
            "make_pairs expects (T+1, n, n), got {shape:?}"
        )));
    }
    let total = shape[0];
    if strategy == Strategy::Markov && t_in != 1 {
        return Err(Error::invalid(
            "markov training conditions on exactly one step".to_string(),
        ));
    }
    if total <= t_in {
        return Err(Error::invalid(format!(
            "trajectory of {total} frames is too short for {t_in} conditioning steps"
        )));
    }
    match strategy {
        Strategy::Markov | Strategy::TeacherForcing => {
            let mut out = Vec::with_capacity(total - t_in);
            for i in 0..total - t_in {
                out.push((frames.slice0(i, t_in), frames.slice0(i + t_in, 1)));
            }
            Ok(out)
        }
        Strategy::Recurrent => Ok(vec![(
            frames.slice0(0, t_in),
            frames.slice0(t_in, total - t_in),
        )]),
    }
}

/// Uniform stabilizer draw for data augmentation.
pub fn draw_stab(group: Group, rng: &mut Rng) -> Stab {
    Stab::from_index(group, rng.below(group.d_g()))
}

/// Apply one uniformly drawn stabilizer element (no translation) to every
/// input channel and the target identically.
pub fn augment_sample(
    input: &Tensor,
    target: &Tensor,
    group: Group,
    rng: &mut Rng,
) -> Result<(Tensor, Tensor)> {
    if group == Group::None {
        return Ok((input.clone(), target.clone()));
    }
    let g = GroupElement::pure(draw_stab(group, rng));
    Ok((act_plane(&g, input)?, act_plane(&g, target)?))
}

/// Relative L2 distance between two equally shaped stacks.
pub fn rel_l2(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op: "rel_l2",
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    let denom = truth.norm2();
    if denom == 0.0 {
        return Err(Error::invalid("rel_l2: zero-norm target".to_string()));
    }
    Ok(pred.sub(truth)?.norm2() / denom)
}

/// Mean over test items of the relative L2 error.
pub fn rmse_rel(preds: &[Tensor], trues: &[Tensor]) -> Result<f64> {
    if preds.len() != trues.len() || preds.is_empty() {
        return Err(Error::invalid("rmse_rel needs matching non-empty lists".to_string()));
    }
    let mut acc = 0.0;
    for (p, t) in preds.iter().zip(trues) {
        acc += rel_l2(p, t)?;
    }
    Ok(acc / preds.len() as f64)
}

/// Cosine schedule from lr0 at epoch 0 down to 0 at the final epoch.
pub fn cosine_lr(lr0: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs <= 1 {
        return lr0;
    }
    let t = epoch as f64 / (total_epochs - 1) as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam with decoupled weight decay. Complex parameters update as pairs
/// of independent reals.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(params: &Parameters, betas: (f64, f64), weight_decay: f64) -> Adam {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.value.dtype(), p.value.shape()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Adam {
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            m,
            v,
            t: 0,
        }
    }

    /// One update from per-parameter gradients (indexed like `params`).
    pub fn step(&mut self, params: &mut Parameters, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, grad) in grads.iter().enumerate() {
            let p = params.get_mut(ParamId(idx));
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let theta = p.value.data_mut();
            for i in 0..grad.data().len() {
                let g = grad.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * theta[i]);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub best_val: f64,
    pub best_epoch: usize,
}

fn dataset_trajectories(data: &Tensor) -> Result<(usize, usize, usize)> {
    let s = data.shape();
    if s.len() != 4 || s[2] != s[3] {
        return Err(Error::invalid(format!(
            "dataset must be (N, T+1, n, n), got {s:?}"
        )));
    }
    Ok((s[0], s[1], s[2]))
}

fn traj_of(data: &Tensor, idx: usize) -> Tensor {
    let s = data.shape();
    data.slice0(idx, 1)
        .reshape(&[s[1], s[2], s[3]])
        .expect("trajectory shape")
}

/// Per-sample loss graph: one-step relative L2 for markov/teacher
/// forcing; the autoregressive unroll scored against the remaining
/// frames for recurrent training.
fn sample_loss(
    model: &GfnoModel,
    params: &Parameters,
    tape: &mut Tape,
    input: &Tensor,
    target: &Tensor,
    strategy: Strategy,
) -> Result<crate::autodiff::NodeId> {
    match strategy {
        Strategy::Markov | Strategy::TeacherForcing => {
            let x = tape.constant(input.clone());
            let y = model.forward_with(tape, params, x, SpectralPath::Half)?;
            tape.rel_l2(y, target.clone())
        }
        Strategy::Recurrent => {
            let t_in = model.config.in_steps;
            let steps = target.shape()[0];
            let mut window = tape.constant(input.clone());
            let mut preds = Vec::with_capacity(steps);
            for _ in 0..steps {
                let next = model.forward_with(tape, params, window, SpectralPath::Half)?;
                preds.push(next);
                window = if t_in == 1 {
                    next
                } else {
                    let tail = tape.slice0(window, 1, t_in - 1);
                    tape.concat0(&[tail, next])?
                };
            }
            let all = tape.concat0(&preds)?;
            tape.rel_l2(all, target.clone())
        }
    }
}

/// Train with AdamW and the cosine schedule, retaining the
/// best-validation parameters. Deterministic for a fixed seed regardless
/// of worker-thread count: per-sample gradients are computed
/// independently and reduced in sample order.
pub fn train(
    model: &mut GfnoModel,
    train_data: &Tensor,
    valid_data: &Tensor,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.in_steps != model.config.in_steps {
        return Err(Error::invalid(format!(
            "train config conditions on {} steps but the model expects {}",
            cfg.in_steps, model.config.in_steps
        )));
    }
    let (n_train, _, _) = dataset_trajectories(train_data)?;
    dataset_trajectories(valid_data)?;

    let mut pairs: Vec<(Tensor, Tensor)> = Vec::new();
    for i in 0..n_train {
        pairs.extend(make_pairs(&traj_of(train_data, i), cfg.strategy, cfg.in_steps)?);
    }

    let mut rng = Rng::new(cfg.seed ^ 0x7472_6169);
    let mut adam = Adam::new(&model.params, cfg.betas, cfg.weight_decay);
    let threads = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);

    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.params.clone();

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr0, epoch, cfg.epochs);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;

        for (step, chunk) in order.chunks(cfg.batch).enumerate() {
            // Augment on the main thread so draws stay seed-deterministic.
            let mut batch_samples = Vec::with_capacity(chunk.len());
            for &pi in chunk {
                let (input, target) = &pairs[pi];
                batch_samples.push(augment_sample(input, target, cfg.augment, &mut rng)?);
            }

            let workers = threads.min(batch_samples.len()).max(1);
            let params = &model.params;
            let model_ref: &GfnoModel = model;
            let strategy = cfg.strategy;
            let results: Vec<Result<(f64, Vec<(ParamId, Tensor)>)>> =
                std::thread::scope(|scope| {
                    let mut handles = Vec::new();
                    for w in 0..workers {
                        let samples = &batch_samples;
                        handles.push(scope.spawn(move || {
                            let mut out = Vec::new();
                            for (i, (input, target)) in samples.iter().enumerate() {
                                if i % workers != w {
                                    continue;
                                }
                                let run = || -> Result<(f64, Vec<(ParamId, Tensor)>)> {
                                    let mut tape = Tape::new();
                                    let loss = sample_loss(
                                        model_ref, params, &mut tape, input, target, strategy,
                                    )?;
                                    let value = tape.value(loss).real_at(0);
                                    let grads = tape.backward_collect(loss)?;
                                    Ok((value, grads))
                                };
                                out.push((i, run()));
                            }
                            out
                        }));
                    }
                    let mut slots: Vec<Option<Result<(f64, Vec<(ParamId, Tensor)>)>>> =
                        (0..batch_samples.len()).map(|_| None).collect();
                    for h in handles {
                        for (i, r) in h.join().expect("worker panicked") {
                            slots[i] = Some(r);
                        }
                    }
                    slots.into_iter().map(|s| s.expect("sample computed")).collect()
                });

            let mut grad_sum: Vec<Tensor> = model
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.dtype(), p.value.shape()))
                .collect();
            let mut batch_loss = 0.0;
            for r in results {
                let (value, grads) = r?;
                if !value.is_finite() {
                    return Err(Error::invalid(format!(
                        "NaN loss at epoch {epoch}, step {step}"
                    )));
                }
                batch_loss += value;
                for (pid, g) in grads {
                    grad_sum[pid.0].add_assign(&g);
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in grad_sum.iter_mut() {
                *g = g.scale(scale);
            }
            batch_loss *= scale;
            epoch_loss += batch_loss;
            batches += 1.0;

            adam.step(&mut model.params, &grad_sum, lr);
        }

        let val = one_step_validation(model, valid_data)?;
        loss_curve.push(epoch_loss / batches.max(1.0));
        val_curve.push(val);
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best_params = model.params.clone();
        }
    }

    model.params = best_params;
    Ok(TrainReport {
        loss_curve,
        val_curve,
        best_val,
        best_epoch,
    })
}

/// Mean one-step relative L2 over all teacher-forcing windows of the
/// validation split.
pub fn one_step_validation(model: &GfnoModel, valid_data: &Tensor) -> Result<f64> {
    let (n_valid, _, _) = dataset_trajectories(valid_data)?;
    let t_in = model.config.in_steps;
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..n_valid {
        let traj = traj_of(valid_data, i);
        for (input, target) in make_pairs(&traj, Strategy::TeacherForcing, t_in)? {
            let pred = model.forward_tensor(&input, SpectralPath::Half)?;
            acc += rel_l2(&pred, &target)?;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Autoregressive rollout scoring with an arbitrary next-frame rule;
/// `predict(window, traj_index, step)` returns the (1, n, n) next frame.
pub fn rollout_eval_with<F>(data: &Tensor, t_in: usize, mut predict: F) -> Result<f64>
where
    F: FnMut(&Tensor, usize, usize) -> Result<Tensor>,
{
    let (n_traj, frames, _) = dataset_trajectories(data)?;
    if frames <= t_in {
        return Err(Error::invalid(format!(
            "trajectories of {frames} frames are too short for t_in = {t_in}"
        )));
    }
    let steps = frames - t_in;
    let mut acc = 0.0;
    for i in 0..n_traj {
        let traj = traj_of(data, i);
        let mut window = traj.slice0(0, t_in);
        let mut preds = Vec::with_capacity(steps);
        for s in 0..steps {
            let next = predict(&window, i, s)?;
            window = if t_in == 1 {
                next.clone()
            } else {
                Tensor::concat0(&[&window.slice0(1, t_in - 1), &next])?
            };
            preds.push(next);
        }
        let pred_refs: Vec<&Tensor> = preds.iter().collect();
        let stacked = Tensor::concat0(&pred_refs)?;
        let truth = traj.slice0(t_in, steps);
        acc += rel_l2(&stacked, &truth)?;
    }
    Ok(acc / n_traj as f64)
}

/// Rollout R-MSE of a model: mean over trajectories of the relative L2
/// error across all predicted frames.
pub fn rollout_eval(model: &GfnoModel, data: &Tensor, t_in: usize) -> Result<f64> {
    if t_in != model.config.in_steps {
        return Err(Error::invalid(format!(
            "model conditions on {} steps, asked for {t_in}",
            model.config.in_steps
        )));
    }
    rollout_eval_with(data, t_in, |window, _, _| {
        model.forward_tensor(window, SpectralPath::Half)
    })
}

/// Rollout R-MSE after rotating every frame of every trajectory by 90
/// degrees counter-clockwise.
pub fn rotation_test(model: &GfnoModel, data: &Tensor, t_in: usize) -> Result<f64> {
    let g = GroupElement::pure(Stab::p4(1));
    let rotated = act_plane(&g, data)?;
    rollout_eval(model, &rotated, t_in)
}

/// Run the model directly on fine-resolution inputs (spatial zero-shot
/// super-resolution) and score against the fine truth.
pub fn superres_eval(model: &GfnoModel, fine_data: &Tensor, t_in: usize) -> Result<f64> {
    rollout_eval(model, fine_data, t_in)
}

/// Baseline: roll out on the strided-downsampled coarse grid, then
/// upsample each prediction by trigonometric interpolation and score
/// against the fine truth.
pub fn interp_baseline(
    model: &GfnoModel,
    fine_data: &Tensor,
    t_in: usize,
    factor: usize,
) -> Result<f64> {
    let coarse = downsample(fine_data, factor, DownsampleMode::Strided)?;
    let (n_traj, frames, _) = dataset_trajectories(fine_data)?;
    let steps = frames
        .checked_sub(t_in)
        .ok_or_else(|| Error::invalid("trajectory too short".to_string()))?;
    let mut acc = 0.0;
    for i in 0..n_traj {
        let coarse_traj = traj_of(&coarse, i);
        let mut window = coarse_traj.slice0(0, t_in);
        let mut preds = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = model.forward_tensor(&window, SpectralPath::Half)?;
            window = if t_in == 1 {
                next.clone()
            } else {
                Tensor::concat0(&[&window.slice0(1, t_in - 1), &next])?
            };
            preds.push(trig_interp(&next, factor)?);
        }
        let pred_refs: Vec<&Tensor> = preds.iter().collect();
        let stacked = Tensor::concat0(&pred_refs)?;
        let fine_traj = traj_of(fine_data, i);
        let truth = fine_traj.slice0(t_in, steps);
        acc += rel_l2(&stacked, &truth)?;
    }
    Ok(acc / n_traj as f64)
}

/// Per-task R-MSE values produced by the eval command.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_rot90: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superres: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interp_baseline: Option<f64>,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        for v in [self.test, self.test_rot90, self.superres, self.interp_baseline]
            .into_iter()
            .flatten()
        {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("non-finite R-MSE {v} in report")));
            }
        }
        Ok(())
    }
}
