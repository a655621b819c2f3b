//! Training loop: uniform batch sampling, proxy-triplet sampling for the
//! regularizer, AdamW with decoupled weight decay in two parameter groups
//! (backbone plus head versus proxies, honoring the separate proxy learning
//! rate), and step orchestration.
//!
//! Every step is deterministic given the seed: the batch is drawn first,
//! then (only when the regularizer weight is positive) the triplets, then
//! one backward pass and one optimizer update per group. Runs abort rather
//! than continue if any gradient or parameter stops being finite.

use crate::data::VectorDataset;
use crate::defaults;
use crate::error::{ChestError, Result};
use crate::geometry::BallConfig;
use crate::grad::{backward, GradientReport, LossFunction, ParamSet, ParamView};
use crate::losses::{self, kernel as loss_kernel, LossBreakdown, LossParams, ProxyRef, Triplet};
use crate::model::{kernel as model_kernel, ChestModel, EncoderSpec};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn default_batch_size() -> usize {
    64
}
fn default_steps() -> usize {
    500
}
fn default_lr_backbone() -> f64 {
    1e-3
}
fn default_lr_proxy() -> f64 {
    1e-2
}
fn default_weight_decay() -> f64 {
    defaults::WEIGHT_DECAY
}
fn default_betas() -> (f64, f64) {
    (defaults::BETA1, defaults::BETA2)
}
fn default_adam_eps() -> f64 {
    defaults::ADAM_EPS
}
fn default_triplets_per_step() -> usize {
    16
}
fn default_seed() -> u64 {
    0
}

/// Optimization and sampling settings for one run. The defaults are sized
/// for synthetic desk-scale problems; the published full-scale settings live
/// in [`crate::defaults::PRESETS`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr_backbone")]
    pub lr_backbone: f64,
    /// Learning rate for the proxy group.
    #[serde(default = "default_lr_proxy")]
    pub lr_proxy: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// Proxy triplets sampled per step for the regularizer.
    #[serde(default = "default_triplets_per_step")]
    pub triplets_per_step: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            steps: default_steps(),
            lr_backbone: default_lr_backbone(),
            lr_proxy: default_lr_proxy(),
            weight_decay: default_weight_decay(),
            betas: default_betas(),
            adam_eps: default_adam_eps(),
            triplets_per_step: default_triplets_per_step(),
            seed: default_seed(),
        }
    }
}

impl TrainConfig {
    /// Field rules plus the cross-field feasibility rules tying the
    /// regularizer weight to the proxy bank shape.
    pub fn validate(&self, loss: &LossParams, per_class: usize) -> Result<()> {
        let mut violations = Vec::new();
        if self.batch_size == 0 {
            violations.push("train.batch_size must be at least 1".to_string());
        }
        if self.steps == 0 {
            violations.push("train.steps must be at least 1".to_string());
        }
        for (name, v) in [
            ("train.lr_backbone", self.lr_backbone),
            ("train.lr_proxy", self.lr_proxy),
            ("train.adam_eps", self.adam_eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                violations.push(format!(
                    "{name} must be finite and strictly positive, got {v}"
                ));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            violations.push(format!(
                "train.weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            ));
        }
        for (name, b) in [
            ("train.betas[0]", self.betas.0),
            ("train.betas[1]", self.betas.1),
        ] {
            if !(b.is_finite() && b > 0.0 && b < 1.0) {
                violations.push(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if loss.tau > 0.0 {
            if self.triplets_per_step == 0 {
                violations.push(format!(
                    "loss.tau > 0 requires train.triplets_per_step >= 1, got tau={} with 0 triplets",
                    loss.tau
                ));
            }
            if per_class < 2 {
                violations.push(format!(
                    "loss.tau > 0 requires at least 2 proxies per class \
                     (a same-class pair with distinct indices must exist), got K={per_class}"
                ));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ChestError::Config(violations))
        }
    }
}

/// Uniform sample of `batch_size` distinct row indices.
pub fn sample_batch(
    dataset: &VectorDataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if batch_size == 0 {
        return Err(ChestError::InvalidInput(
            "batch_size must be at least 1".into(),
        ));
    }
    if batch_size > dataset.len() {
        return Err(ChestError::InvalidInput(format!(
            "batch_size {} exceeds dataset size {}",
            batch_size,
            dataset.len()
        )));
    }
    Ok(rand::seq::index::sample(rng, dataset.len(), batch_size).into_vec())
}

/// Uniform proxy triplets: anchor class over `C`, ordered distinct
/// within-class pair, negative class over the other `C - 1`, negative proxy
/// over `K`.
pub fn sample_triplets(
    classes: usize,
    per_class: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triplet>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if classes < 2 {
        return Err(ChestError::Degenerate(format!(
            "triplet sampling needs at least 2 classes, got {classes}"
        )));
    }
    if per_class < 2 {
        return Err(ChestError::Degenerate(format!(
            "triplet sampling needs at least 2 proxies per class for a distinct \
             same-class pair, got K={per_class}"
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let c = rng.gen_range(0..classes);
        let i = rng.gen_range(0..per_class);
        let j_raw = rng.gen_range(0..per_class - 1);
        let j = if j_raw >= i { j_raw + 1 } else { j_raw };
        let c_neg_raw = rng.gen_range(0..classes - 1);
        let c_neg = if c_neg_raw >= c {
            c_neg_raw + 1
        } else {
            c_neg_raw
        };
        let k = rng.gen_range(0..per_class);
        out.push(Triplet {
            anchor: ProxyRef { class: c, proxy: i },
            positive: ProxyRef { class: c, proxy: j },
            negative: ProxyRef {
                class: c_neg,
                proxy: k,
            },
        });
    }
    Ok(out)
}

/// Optimizer parameter group; proxies get their own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Proxy,
}

/// Group a tensor belongs to, by name.
pub fn group_of(tensor_name: &str) -> ParamGroup {
    if tensor_name.starts_with("proxies") {
        ParamGroup::Proxy
    } else {
        ParamGroup::Backbone
    }
}

#[derive(Clone, Debug)]
struct Moments {
    t: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment estimates and per-tensor step counts.
#[derive(Clone, Debug)]
pub struct AdamWState {
    moments: BTreeMap<String, Moments>,
}

impl AdamWState {
    /// Zero moments for every tensor in the set.
    pub fn new(params: &ParamSet) -> Self {
        let moments = params
            .tensors()
            .iter()
            .map(|t| {
                (
                    t.name().to_string(),
                    Moments {
                        t: 0,
                        m: vec![0.0; t.len()],
                        v: vec![0.0; t.len()],
                    },
                )
            })
            .collect();
        AdamWState { moments }
    }
}

/// One AdamW update over the tensors of `group`:
/// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`, bias-corrected, then
/// `w <- w - lr*m_hat/(sqrt(v_hat) + eps) - lr*wd*w`. Aborts before touching
/// any parameter if a gradient in the group is non-finite.
pub fn adamw_step(
    params: &mut ParamSet,
    grads: &GradientReport,
    state: &mut AdamWState,
    cfg: &TrainConfig,
    group: ParamGroup,
) -> Result<()> {
    let names: Vec<String> = params
        .tensors()
        .iter()
        .filter(|t| group_of(t.name()) == group)
        .map(|t| t.name().to_string())
        .collect();
    for name in &names {
        let g = grads.get(name)?;
        if g.len() != params.get(name)?.len() {
            return Err(ChestError::DimensionMismatch {
                context: format!("gradient of tensor {name}"),
                expected: params.get(name)?.len(),
                got: g.len(),
            });
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(ChestError::NonFinite(format!("gradient of tensor {name}")));
        }
    }

    let (b1, b2) = cfg.betas;
    let lr = match group {
        ParamGroup::Backbone => cfg.lr_backbone,
        ParamGroup::Proxy => cfg.lr_proxy,
    };
    for name in &names {
        let g = grads.get(name)?.data();
        let moments = state.moments.get_mut(name).ok_or_else(|| {
            ChestError::InvalidInput(format!("optimizer state missing tensor {name}"))
        })?;
        moments.t += 1;
        let bc1 = 1.0 - b1.powi(moments.t as i32);
        let bc2 = 1.0 - b2.powi(moments.t as i32);
        let w = params.values_mut(name)?;
        for (idx, &gi) in g.iter().enumerate() {
            let m = b1 * moments.m[idx] + (1.0 - b1) * gi;
            let v = b2 * moments.v[idx] + (1.0 - b2) * gi * gi;
            moments.m[idx] = m;
            moments.v[idx] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let update =
                lr * m_hat / (v_hat.sqrt() + cfg.adam_eps) + lr * cfg.weight_decay * w[idx];
            w[idx] -= update;
        }
    }
    Ok(())
}

/// The differentiable objective of one step: mean two-space similarity loss
/// over a fixed batch plus the weighted regularizer mean over fixed
/// triplets.
struct StepObjective<'a> {
    encoder: EncoderSpec,
    ball: BallConfig,
    classes: usize,
    per_class: usize,
    dim_h: usize,
    features: Vec<&'a [f64]>,
    labels: Vec<usize>,
    triplets: &'a [Triplet],
    loss: &'a LossParams,
}

impl LossFunction for StepObjective<'_> {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        let pe = p.get("proxies_e")?;
        let dim_e = self.encoder.embed_dim;
        let mut ph_flat: Vec<S> = Vec::with_capacity(self.classes * self.per_class * self.dim_h);
        for i in 0..self.classes * self.per_class {
            let coords = model_kernel::head_map(p, &pe[i * dim_e..(i + 1) * dim_e], &self.ball)?;
            ph_flat.extend(coords);
        }

        let mut sim_acc: Option<S> = None;
        for (x, &label) in self.features.iter().zip(&self.labels) {
            let z_e = model_kernel::encode(&self.encoder, p, x)?;
            let z_h = model_kernel::head_map(p, &z_e, &self.ball)?;
            let (l_h, l_e) = loss_kernel::example_similarity_loss(
                &z_e,
                &z_h,
                pe,
                &ph_flat,
                self.classes,
                self.per_class,
                label,
                self.loss,
                &self.ball,
            );
            let weighted = l_h * self.loss.eta_h + l_e * self.loss.eta_e;
            sim_acc = Some(match sim_acc {
                None => weighted,
                Some(a) => a + weighted,
            });
        }
        let mut total =
            sim_acc.expect("validated non-empty batch") * (1.0 / self.features.len() as f64);

        if self.loss.tau > 0.0 && !self.triplets.is_empty() {
            let slice = |r: ProxyRef| -> &[S] {
                let off = (r.class * self.per_class + r.proxy) * self.dim_h;
                &ph_flat[off..off + self.dim_h]
            };
            let mut reg_acc: Option<S> = None;
            for t in self.triplets {
                let l = loss_kernel::hyphc_triplet(
                    [slice(t.anchor), slice(t.positive), slice(t.negative)],
                    self.loss.gamma_hyp,
                    &self.ball,
                );
                reg_acc = Some(match reg_acc {
                    None => l,
                    Some(a) => a + l,
                });
            }
            total = total
                + reg_acc.expect("non-empty triplets")
                    * (self.loss.tau / self.triplets.len() as f64);
        }
        Ok(total)
    }
}

fn batch_refs<'a>(
    dataset: &'a VectorDataset,
    indices: &[usize],
) -> Result<(Vec<&'a [f64]>, Vec<usize>)> {
    let mut features = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= dataset.len() {
            return Err(ChestError::IndexOutOfRange {
                what: "batch index".into(),
                index: i,
                bound: dataset.len(),
            });
        }
        features.push(dataset.feature(i));
        labels.push(dataset.label(i));
    }
    Ok((features, labels))
}

/// Loss components of one fixed batch and triplet draw at the model's
/// current parameters, with no parameter update.
pub fn evaluate_batch(
    model: &ChestModel,
    dataset: &VectorDataset,
    indices: &[usize],
    triplets: &[Triplet],
    loss_params: &LossParams,
) -> Result<LossBreakdown> {
    let (features, labels) = batch_refs(dataset, indices)?;
    let mut batch_e = Vec::with_capacity(features.len());
    let mut batch_h = Vec::with_capacity(features.len());
    for x in &features {
        let (e, h) = model.embed_example(x)?;
        batch_e.push(e);
        batch_h.push(h);
    }
    let proxies = model.proxies()?;
    let views = proxies.views()?;
    let sim = losses::chest_similarity_loss(
        &batch_e,
        &batch_h,
        &labels,
        &views,
        loss_params,
        model.ball(),
    )?;
    let reg_mean = if loss_params.tau > 0.0 && !triplets.is_empty() {
        let mut acc = 0.0;
        for t in triplets {
            t.validate(model.classes(), model.per_class())?;
            let points = [
                proxies.h_point(t.anchor.class, t.anchor.proxy).clone(),
                proxies.h_point(t.positive.class, t.positive.proxy).clone(),
                proxies.h_point(t.negative.class, t.negative.proxy).clone(),
            ];
            acc += losses::hyphc_regularization(&points, loss_params.gamma_hyp, model.ball())?;
        }
        acc / triplets.len() as f64
    } else {
        0.0
    };
    losses::combined_loss(
        (sim.mean_hyperbolic, sim.mean_euclidean),
        reg_mean,
        loss_params,
    )
}

/// One optimization step: sample, evaluate, backpropagate, update both
/// parameter groups. Returns the loss components at the pre-update
/// parameters.
pub fn train_step(
    model: &mut ChestModel,
    dataset: &VectorDataset,
    loss_params: &LossParams,
    cfg: &TrainConfig,
    opt: &mut AdamWState,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let indices = sample_batch(dataset, cfg.batch_size, rng)?;
    let triplets = if loss_params.tau > 0.0 {
        sample_triplets(
            model.classes(),
            model.per_class(),
            cfg.triplets_per_step,
            rng,
        )?
    } else {
        Vec::new()
    };

    let breakdown = evaluate_batch(model, dataset, &indices, &triplets, loss_params)?;

    let (features, labels) = batch_refs(dataset, &indices)?;
    let objective = StepObjective {
        encoder: *model.encoder(),
        ball: model.ball().clone(),
        classes: model.classes(),
        per_class: model.per_class(),
        dim_h: model.hyperbolic_dim(),
        features,
        labels,
        triplets: &triplets,
        loss: loss_params,
    };
    let report = backward(&objective, model.params())?;
    if let Some(name) = report.first_non_finite() {
        return Err(ChestError::NonFinite(format!("gradient of tensor {name}")));
    }

    adamw_step(model.params_mut(), &report, opt, cfg, ParamGroup::Backbone)?;
    adamw_step(model.params_mut(), &report, opt, cfg, ParamGroup::Proxy)?;
    if let Some(name) = model.params().first_non_finite() {
        return Err(ChestError::NonFinite(format!("tensor {name} after update")));
    }
    Ok(breakdown)
}

/// Per-step record handed to the metrics callback.
#[derive(Clone, Copy, Debug)]
pub struct StepMetrics {
    /// 1-based step number.
    pub step: usize,
    pub breakdown: LossBreakdown,
}

/// Runs the full loop, invoking `on_step` after every step. Validation
/// failures surface before any step executes.
pub fn run_training(
    model: &mut ChestModel,
    dataset: &VectorDataset,
    loss_params: &LossParams,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepMetrics) -> Result<()>,
) -> Result<()> {
    loss_params.validate()?;
    cfg.validate(loss_params, model.per_class())?;
    if dataset.input_dim() != model.encoder().input_dim {
        return Err(ChestError::DimensionMismatch {
            context: "dataset feature width vs encoder input".into(),
            expected: model.encoder().input_dim,
            got: dataset.input_dim(),
        });
    }
    if dataset.classes() != model.classes() {
        return Err(ChestError::InvalidInput(format!(
            "dataset has {} classes but the proxy bank covers {}",
            dataset.classes(),
            model.classes()
        )));
    }
    if cfg.batch_size > dataset.len() {
        return Err(ChestError::InvalidInput(format!(
            "train.batch_size {} exceeds dataset size {}",
            cfg.batch_size,
            dataset.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamWState::new(model.params());
    for step in 1..=cfg.steps {
        let breakdown = train_step(model, dataset, loss_params, cfg, &mut opt, &mut rng)?;
        on_step(&StepMetrics { step, breakdown })?;
    }
    Ok(())
}
