//! Published default hyperparameters and per-dataset training presets.
//!
//! Everything here is a named constant so configuration defaults and audits
//! reference one location. The presets record the batch sizes, step counts,
//! learning rates, proxy counts, and triplet budgets used at full dataset
//! scale; desk-scale runs reuse the loss constants with smaller models.

/// Softmin temperature for the Euclidean branch.
pub const GAMMA_E: f64 = 5.0;
/// Softmin temperature for the hyperbolic branch.
pub const GAMMA_H: f64 = 5.0;
/// Margin-softmax scale for the Euclidean branch.
pub const LAMBDA_E: f64 = 20.0;
/// Margin-softmax scale for the hyperbolic branch.
pub const LAMBDA_H: f64 = 20.0;
/// Weight of the hyperbolic similarity loss.
pub const ETA_H: f64 = 1.0;
/// Weight of the Euclidean similarity loss.
pub const ETA_E: f64 = 1.0;
/// Temperature of the clustering-regularizer softmax.
pub const GAMMA_HYP: f64 = 1.0;
/// Weight of the clustering regularizer.
pub const TAU: f64 = 0.5;
/// Curvature magnitude of the Poincare ball.
pub const CURVATURE: f64 = 0.5;
/// Feature-norm clip applied before the exponential map.
pub const CLIP_RADIUS: f64 = 2.3;
/// Margin grid searched per dataset; the library default margin is the
/// smallest entry.
pub const DELTA_GRID: [f64; 4] = [1.0, 5.0, 10.0, 20.0];
/// Default similarity margin for both branches.
pub const DELTA: f64 = 1.0;

/// Decoupled weight decay.
pub const WEIGHT_DECAY: f64 = 0.01;
/// First-moment decay rate.
pub const BETA1: f64 = 0.9;
/// Second-moment decay rate.
pub const BETA2: f64 = 0.999;
/// Adam denominator offset.
pub const ADAM_EPS: f64 = 1e-8;

/// Standard deviation for encoder and mapping-head weight initialization,
/// kept small so initial distances do not saturate the scaled softmaxes.
pub const WEIGHT_INIT_STD: f64 = 0.02;
/// Standard deviation for proxy initialization; initial proxies start
/// clustered near the origin in both spaces.
pub const PROXY_INIT_STD: f64 = 0.01;

/// Full-scale training settings for one benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub batch_size: usize,
    pub steps: usize,
    pub lr_backbone: f64,
    pub lr_proxy: f64,
    /// Proxies per class.
    pub proxies_per_class: usize,
    /// Proxy triplets sampled per step for the regularizer.
    pub triplets_per_step: usize,
}

pub const CUB200_SCALE: Preset = Preset {
    name: "cub200",
    batch_size: 200,
    steps: 120,
    lr_backbone: 3e-5,
    lr_proxy: 1e-2,
    proxies_per_class: 10,
    triplets_per_step: 100,
};

pub const CARS196_SCALE: Preset = Preset {
    name: "cars196",
    batch_size: 198,
    steps: 1800,
    lr_backbone: 1e-5,
    lr_proxy: 1e-2,
    proxies_per_class: 10,
    triplets_per_step: 98,
};

pub const INSHOP_SCALE: Preset = Preset {
    name: "inshop",
    batch_size: 100,
    steps: 30_000,
    lr_backbone: 1e-5,
    lr_proxy: 1e-1,
    proxies_per_class: 2,
    triplets_per_step: 3997,
};

pub const SOP_SCALE: Preset = Preset {
    name: "sop",
    batch_size: 75,
    steps: 50_000,
    lr_backbone: 1e-5,
    lr_proxy: 1e-1,
    proxies_per_class: 2,
    triplets_per_step: 11_318,
};

pub const PRESETS: [Preset; 4] = [CUB200_SCALE, CARS196_SCALE, INSHOP_SCALE, SOP_SCALE];

/// Preset lookup by dataset name.
pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
