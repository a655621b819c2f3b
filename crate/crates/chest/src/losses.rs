//! Proxy-based similarity losses in two spaces plus the clustering
//! regularizer and their combination.
//!
//! Per example, each space contributes a margin softmax over per-class
//! softmin similarities: `S = -sum_k softmax_k(-d_k/gamma)·d_k` against the
//! class's proxies, then
//! `L = -log[ exp(lambda(S_c - delta)) / (exp(lambda(S_c - delta)) +
//! sum_{c' != c} exp(lambda·S_{c'})) ]`,
//! computed in log-space throughout; with `lambda = 20` raw exponentials
//! overflow easily. The Euclidean branch uses plain unnormalized distances
//! end to end. The regularizer scores sampled proxy triplets from pairwise
//! hyperbolic distances and is implemented literally as
//! `sum S_{jk} - sum S_{jk}·softmax(d_{jk}/gamma_hyp)`.

use crate::defaults;
use crate::error::{ChestError, Result};
use crate::geometry::{BallConfig, PoincarePoint, Space};
use crate::scalar::Real;
use crate::tape::Tape;

fn default_gamma_e() -> f64 {
    defaults::GAMMA_E
}
fn default_gamma_h() -> f64 {
    defaults::GAMMA_H
}
fn default_lambda_e() -> f64 {
    defaults::LAMBDA_E
}
fn default_lambda_h() -> f64 {
    defaults::LAMBDA_H
}
fn default_delta() -> f64 {
    defaults::DELTA
}
fn default_eta_e() -> f64 {
    defaults::ETA_E
}
fn default_eta_h() -> f64 {
    defaults::ETA_H
}
fn default_gamma_hyp() -> f64 {
    defaults::GAMMA_HYP
}
fn default_tau() -> f64 {
    defaults::TAU
}

/// Temperatures, scales, margins, and weights of the combined objective.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossParams {
    #[serde(default = "default_gamma_e")]
    pub gamma_e: f64,
    #[serde(default = "default_gamma_h")]
    pub gamma_h: f64,
    #[serde(default = "default_lambda_e")]
    pub lambda_e: f64,
    #[serde(default = "default_lambda_h")]
    pub lambda_h: f64,
    #[serde(default = "default_delta")]
    pub delta_e: f64,
    #[serde(default = "default_delta")]
    pub delta_h: f64,
    #[serde(default = "default_eta_e")]
    pub eta_e: f64,
    #[serde(default = "default_eta_h")]
    pub eta_h: f64,
    #[serde(default = "default_gamma_hyp")]
    pub gamma_hyp: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            gamma_e: defaults::GAMMA_E,
            gamma_h: defaults::GAMMA_H,
            lambda_e: defaults::LAMBDA_E,
            lambda_h: defaults::LAMBDA_H,
            delta_e: defaults::DELTA,
            delta_h: defaults::DELTA,
            eta_e: defaults::ETA_E,
            eta_h: defaults::ETA_H,
            gamma_hyp: defaults::GAMMA_HYP,
            tau: defaults::TAU,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        for (name, v) in [
            ("loss.gamma_e", self.gamma_e),
            ("loss.gamma_h", self.gamma_h),
            ("loss.lambda_e", self.lambda_e),
            ("loss.lambda_h", self.lambda_h),
            ("loss.gamma_hyp", self.gamma_hyp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                violations.push(format!(
                    "{name} must be finite and strictly positive, got {v}"
                ));
            }
        }
        for (name, v) in [
            ("loss.delta_e", self.delta_e),
            ("loss.delta_h", self.delta_h),
            ("loss.eta_e", self.eta_e),
            ("loss.eta_h", self.eta_h),
            ("loss.tau", self.tau),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                violations.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.eta_e + self.eta_h > 0.0) {
            violations.push(format!(
                "loss.eta_e + loss.eta_h must be strictly positive, got {} + {}",
                self.eta_e, self.eta_h
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ChestError::Config(violations))
        }
    }
}

/// Components of one evaluation of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    /// Mean hyperbolic similarity loss over the batch, unweighted.
    pub l_hyperbolic: f64,
    /// Mean Euclidean similarity loss over the batch, unweighted.
    pub l_euclidean: f64,
    /// Mean regularizer value over the sampled triplets.
    pub l_hyphc: f64,
    /// `eta_h·l_hyperbolic + eta_e·l_euclidean + tau·l_hyphc`.
    pub total: f64,
}

/// One proxy inside the bank, addressed by class and within-class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProxyRef {
    pub class: usize,
    pub proxy: usize,
}

/// Anchor/positive/negative proxy triple for the regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: ProxyRef,
    pub positive: ProxyRef,
    pub negative: ProxyRef,
}

impl Triplet {
    /// Checks the structural rules against a bank of `classes` classes with
    /// `per_class` proxies each.
    pub fn validate(&self, classes: usize, per_class: usize) -> Result<()> {
        for (what, r) in [
            ("anchor", self.anchor),
            ("positive", self.positive),
            ("negative", self.negative),
        ] {
            if r.class >= classes {
                return Err(ChestError::IndexOutOfRange {
                    what: format!("triplet {what} class"),
                    index: r.class,
                    bound: classes,
                });
            }
            if r.proxy >= per_class {
                return Err(ChestError::IndexOutOfRange {
                    what: format!("triplet {what} proxy"),
                    index: r.proxy,
                    bound: per_class,
                });
            }
        }
        if self.anchor.class != self.positive.class {
            return Err(ChestError::InvalidInput(
                "triplet anchor and positive must share a class".into(),
            ));
        }
        if self.anchor.proxy == self.positive.proxy {
            return Err(ChestError::InvalidInput(
                "triplet anchor and positive must be distinct proxies".into(),
            ));
        }
        if self.negative.class == self.anchor.class {
            return Err(ChestError::InvalidInput(
                "triplet negative must come from a different class".into(),
            ));
        }
        Ok(())
    }
}

/// Borrowed dual-space view of a proxy bank: flat `classes x per_class x
/// dim_e` Euclidean proxies alongside their mapped hyperbolic images.
pub struct ProxyViews<'a> {
    e: &'a [f64],
    h: &'a [PoincarePoint],
    classes: usize,
    per_class: usize,
    dim_e: usize,
}

impl<'a> ProxyViews<'a> {
    pub fn new(
        e: &'a [f64],
        h: &'a [PoincarePoint],
        classes: usize,
        per_class: usize,
        dim_e: usize,
    ) -> Result<Self> {
        if classes == 0 || per_class == 0 {
            return Err(ChestError::EmptyProxies(format!(
                "proxy bank needs classes >= 1 and per_class >= 1, got {classes} x {per_class}"
            )));
        }
        if e.len() != classes * per_class * dim_e {
            return Err(ChestError::DimensionMismatch {
                context: "euclidean proxy view".into(),
                expected: classes * per_class * dim_e,
                got: e.len(),
            });
        }
        if h.len() != classes * per_class {
            return Err(ChestError::DimensionMismatch {
                context: "hyperbolic proxy view".into(),
                expected: classes * per_class,
                got: h.len(),
            });
        }
        let dim_h = h[0].dim();
        if h.iter().any(|p| p.dim() != dim_h) {
            return Err(ChestError::InvalidInput(
                "hyperbolic proxies disagree on dimension".into(),
            ));
        }
        Ok(ProxyViews {
            e,
            h,
            classes,
            per_class,
            dim_e,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn dim_e(&self) -> usize {
        self.dim_e
    }

    pub fn dim_h(&self) -> usize {
        self.h[0].dim()
    }

    /// Flat Euclidean storage, class-major then proxy-major.
    pub fn e_flat(&self) -> &'a [f64] {
        self.e
    }

    pub fn h_points(&self) -> &'a [PoincarePoint] {
        self.h
    }

    pub fn e_proxy(&self, class: usize, proxy: usize) -> &'a [f64] {
        let off = (class * self.per_class + proxy) * self.dim_e;
        &self.e[off..off + self.dim_e]
    }

    pub fn h_proxy(&self, class: usize, proxy: usize) -> &'a PoincarePoint {
        &self.h[class * self.per_class + proxy]
    }
}

/// Generic numeric core of every loss component.
pub mod kernel {
    use super::Space;
    use crate::geometry::kernel as geo;
    use crate::geometry::BallConfig;
    use crate::scalar::{log_sum_exp, Real};

    /// Softmin-weighted negative mean distance:
    /// `-sum_k softmax_k(-d_k/gamma)·d_k`, with max subtraction.
    pub fn softmin<S: Real>(distances: &[S], gamma: f64) -> S {
        let inv = 1.0 / gamma;
        let m = distances
            .iter()
            .map(|d| -d.value() * inv)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = (-(distances[0] * inv) - m).exp();
        let mut weighted = z * distances[0];
        for &d in &distances[1..] {
            let e = (-(d * inv) - m).exp();
            z = z + e;
            weighted = weighted + e * d;
        }
        -(weighted / z)
    }

    /// Per-class softmin similarities of one embedding against a flat
    /// `classes x per_class x dim` proxy block in the chosen space.
    pub fn class_similarities<S: Real>(
        x: &[S],
        proxies: &[S],
        classes: usize,
        per_class: usize,
        dim: usize,
        space: Space,
        gamma: f64,
        cfg: &BallConfig,
    ) -> Vec<S> {
        let mut out = Vec::with_capacity(classes);
        let mut dists = Vec::with_capacity(per_class);
        for c in 0..classes {
            dists.clear();
            for k in 0..per_class {
                let off = (c * per_class + k) * dim;
                let p = &proxies[off..off + dim];
                let d = match space {
                    Space::Euclidean => geo::euclidean_distance(x, p),
                    Space::Hyperbolic => geo::poincare_distance(x, p, cfg),
                };
                dists.push(d);
            }
            out.push(softmin(&dists, gamma));
        }
        out
    }

    /// Margin softmax over class similarities for one example:
    /// `log_sum_exp(logits) - logits[label]` with the label logit
    /// `lambda·(S - delta)` and every other logit `lambda·S`.
    pub fn margin_softmax_loss<S: Real>(sims: &[S], label: usize, lambda: f64, delta: f64) -> S {
        let logits: Vec<S> = sims
            .iter()
            .enumerate()
            .map(|(c, &s)| {
                if c == label {
                    (s - delta) * lambda
                } else {
                    s * lambda
                }
            })
            .collect();
        log_sum_exp(&logits) - logits[label]
    }

    /// Unweighted per-space losses `(hyperbolic, euclidean)` for one example
    /// against flat proxy blocks in both spaces.
    #[allow(clippy::too_many_arguments)]
    pub fn example_similarity_loss<S: Real>(
        x_e: &[S],
        x_h: &[S],
        proxies_e: &[S],
        proxies_h: &[S],
        classes: usize,
        per_class: usize,
        label: usize,
        params: &super::LossParams,
        cfg: &BallConfig,
    ) -> (S, S) {
        let dim_e = x_e.len();
        let dim_h = x_h.len();
        let sims_h = class_similarities(
            x_h,
            proxies_h,
            classes,
            per_class,
            dim_h,
            Space::Hyperbolic,
            params.gamma_h,
            cfg,
        );
        let l_h = margin_softmax_loss(&sims_h, label, params.lambda_h, params.delta_h);
        let sims_e = class_similarities(
            x_e,
            proxies_e,
            classes,
            per_class,
            dim_e,
            Space::Euclidean,
            params.gamma_e,
            cfg,
        );
        let l_e = margin_softmax_loss(&sims_e, label, params.lambda_e, params.delta_e);
        (l_h, l_e)
    }

    /// Proxy similarity `exp(-D_H(u, v))`.
    pub fn proxy_similarity<S: Real>(u: &[S], v: &[S], cfg: &BallConfig) -> S {
        (-geo::poincare_distance(u, v, cfg)).exp()
    }

    /// Clustering regularizer of one proxy triple:
    /// `sum_{j<k} S_{jk} - sum_{j<k} S_{jk}·softmax(d_{jk}/gamma_hyp)`.
    pub fn hyphc_triplet<S: Real>(points: [&[S]; 3], gamma_hyp: f64, cfg: &BallConfig) -> S {
        let ds = [
            geo::poincare_distance(points[0], points[1], cfg),
            geo::poincare_distance(points[0], points[2], cfg),
            geo::poincare_distance(points[1], points[2], cfg),
        ];
        let sims = [(-ds[0]).exp(), (-ds[1]).exp(), (-ds[2]).exp()];
        let inv = 1.0 / gamma_hyp;
        let m = ds
            .iter()
            .map(|d| d.value() * inv)
            .fold(f64::NEG_INFINITY, f64::max);
        let es = [
            (ds[0] * inv - m).exp(),
            (ds[1] * inv - m).exp(),
            (ds[2] * inv - m).exp(),
        ];
        let z = es[0] + es[1] + es[2];
        let first = sims[0] + sims[1] + sims[2];
        let second = (sims[0] * es[0] + sims[1] * es[1] + sims[2] * es[2]) / z;
        first - second
    }
}

/// Softmin similarity of one embedding to a class's proxies under the chosen
/// metric. Always non-positive; at `K = 1` it is exactly the negated
/// distance.
pub fn softmin_similarity(
    x: &[f64],
    proxies: &[Vec<f64>],
    space: Space,
    gamma: f64,
    cfg: &BallConfig,
) -> Result<f64> {
    if proxies.is_empty() {
        return Err(ChestError::EmptyProxies(
            "softmin_similarity needs at least one proxy".into(),
        ));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(ChestError::InvalidInput(format!(
            "softmin temperature must be finite and positive, got {gamma}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ChestError::InvalidInput(
            "softmin_similarity embedding contains a non-finite coordinate".into(),
        ));
    }
    let mut dists = Vec::with_capacity(proxies.len());
    for p in proxies {
        if p.len() != x.len() {
            return Err(ChestError::DimensionMismatch {
                context: "softmin_similarity proxy".into(),
                expected: x.len(),
                got: p.len(),
            });
        }
        let d = match space {
            Space::Euclidean => crate::geometry::euclidean_distance(x, p)?,
            Space::Hyperbolic => {
                let px = PoincarePoint::new(x.to_vec(), cfg)?;
                let pp = PoincarePoint::new(p.clone(), cfg)?;
                crate::geometry::poincare_distance(&px, &pp, cfg)?
            }
        };
        dists.push(d);
    }
    Ok(kernel::softmin(&dists, gamma))
}

/// Per-example losses and per-space batch means.
#[derive(Clone, Debug)]
pub struct SimilarityLoss {
    /// `eta_h·L_H + eta_e·L_E` per example.
    pub per_example: Vec<f64>,
    /// Mean hyperbolic loss over the batch, unweighted.
    pub mean_hyperbolic: f64,
    /// Mean Euclidean loss over the batch, unweighted.
    pub mean_euclidean: f64,
}

fn validate_similarity_batch(
    batch_e: &[Vec<f64>],
    batch_h: &[PoincarePoint],
    labels: &[usize],
    proxies: &ProxyViews<'_>,
) -> Result<()> {
    let n = batch_e.len();
    if n == 0 {
        return Err(ChestError::InvalidInput(
            "similarity loss needs a non-empty batch".into(),
        ));
    }
    if batch_h.len() != n || labels.len() != n {
        return Err(ChestError::DimensionMismatch {
            context: "similarity batch lengths".into(),
            expected: n,
            got: batch_h.len().min(labels.len()),
        });
    }
    if proxies.classes() < 2 {
        return Err(ChestError::Degenerate(format!(
            "similarity loss needs at least 2 classes, got {}",
            proxies.classes()
        )));
    }
    for (i, x) in batch_e.iter().enumerate() {
        if x.len() != proxies.dim_e() {
            return Err(ChestError::DimensionMismatch {
                context: format!("euclidean embedding {i}"),
                expected: proxies.dim_e(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ChestError::NonFinite(format!("euclidean embedding {i}")));
        }
    }
    let dim_h = proxies.dim_h();
    for (i, x) in batch_h.iter().enumerate() {
        if x.dim() != dim_h {
            return Err(ChestError::DimensionMismatch {
                context: format!("hyperbolic embedding {i}"),
                expected: dim_h,
                got: x.dim(),
            });
        }
    }
    for (i, &label) in labels.iter().enumerate() {
        if label >= proxies.classes() {
            return Err(ChestError::IndexOutOfRange {
                what: format!("label of example {i}"),
                index: label,
                bound: proxies.classes(),
            });
        }
    }
    Ok(())
}

/// Two-space similarity loss over a batch against the proxy bank.
pub fn chest_similarity_loss(
    batch_e: &[Vec<f64>],
    batch_h: &[PoincarePoint],
    labels: &[usize],
    proxies: &ProxyViews<'_>,
    params: &LossParams,
    cfg: &BallConfig,
) -> Result<SimilarityLoss> {
    params.validate()?;
    validate_similarity_batch(batch_e, batch_h, labels, proxies)?;

    let ph_flat = flatten_points(proxies.h_points());
    let n = batch_e.len();
    let mut per_example = Vec::with_capacity(n);
    let mut sum_h = 0.0;
    let mut sum_e = 0.0;
    for i in 0..n {
        let (l_h, l_e) = kernel::example_similarity_loss(
            &batch_e[i],
            batch_h[i].coords(),
            proxies.e_flat(),
            &ph_flat,
            proxies.classes(),
            proxies.per_class(),
            labels[i],
            params,
            cfg,
        );
        sum_h += l_h;
        sum_e += l_e;
        per_example.push(params.eta_h * l_h + params.eta_e * l_e);
    }
    Ok(SimilarityLoss {
        per_example,
        mean_hyperbolic: sum_h / n as f64,
        mean_euclidean: sum_e / n as f64,
    })
}

/// Similarity `exp(-D_H)` between two proxies; symmetric, in `(0, 1]`.
pub fn proxy_similarity(p_i: &PoincarePoint, p_j: &PoincarePoint, cfg: &BallConfig) -> Result<f64> {
    let d = crate::geometry::poincare_distance(p_i, p_j, cfg)?;
    Ok((-d).exp())
}

/// Clustering regularizer of one proxy triple, from pairwise hyperbolic
/// distances.
pub fn hyphc_regularization(
    points: &[PoincarePoint; 3],
    gamma_hyp: f64,
    cfg: &BallConfig,
) -> Result<f64> {
    if !(gamma_hyp.is_finite() && gamma_hyp > 0.0) {
        return Err(ChestError::InvalidInput(format!(
            "regularizer temperature must be finite and positive, got {gamma_hyp}"
        )));
    }
    let dim = points[0].dim();
    if points.iter().any(|p| p.dim() != dim) {
        return Err(ChestError::DimensionMismatch {
            context: "hyphc_regularization points".into(),
            expected: dim,
            got: points.iter().map(|p| p.dim()).find(|&d| d != dim).unwrap(),
        });
    }
    Ok(kernel::hyphc_triplet(
        [points[0].coords(), points[1].coords(), points[2].coords()],
        gamma_hyp,
        cfg,
    ))
}

/// Weighted combination of the similarity means and the regularizer mean.
pub fn combined_loss(sim: (f64, f64), reg: f64, params: &LossParams) -> Result<LossBreakdown> {
    params.validate()?;
    let (l_hyperbolic, l_euclidean) = sim;
    for (name, v) in [
        ("l_hyperbolic", l_hyperbolic),
        ("l_euclidean", l_euclidean),
        ("l_hyphc", reg),
    ] {
        if !v.is_finite() {
            return Err(ChestError::NonFinite(format!("loss component {name}")));
        }
    }
    let total = params.eta_h * l_hyperbolic + params.eta_e * l_euclidean + params.tau * reg;
    if !total.is_finite() {
        return Err(ChestError::NonFinite("loss component total".into()));
    }
    Ok(LossBreakdown {
        l_hyperbolic,
        l_euclidean,
        l_hyphc: reg,
        total,
    })
}

/// Mean similarity loss and its gradients, computed example by example on a
/// small reused tape.
///
/// The batch mean decomposes as `(1/N)·sum_i L_i`, so per-example backward
/// sweeps with accumulated leaf gradients give exactly the batch gradient
/// while tape memory stays independent of `N`. Runtime is `O(N·C·K)`
/// distance evaluations; this is the route to use when `N·C·K` is large.
#[derive(Clone, Debug)]
pub struct SimilarityGrads {
    /// Mean of the eta-weighted per-example losses.
    pub mean_loss: f64,
    pub mean_hyperbolic: f64,
    pub mean_euclidean: f64,
    /// Gradient of the mean loss for each Euclidean embedding.
    pub batch_e: Vec<Vec<f64>>,
    /// Gradient of the mean loss for each hyperbolic embedding.
    pub batch_h: Vec<Vec<f64>>,
    /// Gradient for the flat Euclidean proxy block.
    pub proxies_e: Vec<f64>,
    /// Gradient for the flat hyperbolic proxy coordinates.
    pub proxies_h: Vec<f64>,
}

fn flatten_points(points: &[PoincarePoint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * points.first().map_or(0, |p| p.dim()));
    for p in points {
        out.extend_from_slice(p.coords());
    }
    out
}

/// See [`SimilarityGrads`].
pub fn similarity_loss_grads(
    batch_e: &[Vec<f64>],
    batch_h: &[PoincarePoint],
    labels: &[usize],
    proxies: &ProxyViews<'_>,
    params: &LossParams,
    cfg: &BallConfig,
) -> Result<SimilarityGrads> {
    params.validate()?;
    validate_similarity_batch(batch_e, batch_h, labels, proxies)?;

    let n = batch_e.len();
    let dim_e = proxies.dim_e();
    let dim_h = proxies.dim_h();
    let pe_flat = proxies.e_flat();
    let ph_flat = flatten_points(proxies.h_points());

    let mut out = SimilarityGrads {
        mean_loss: 0.0,
        mean_hyperbolic: 0.0,
        mean_euclidean: 0.0,
        batch_e: Vec::with_capacity(n),
        batch_h: Vec::with_capacity(n),
        proxies_e: vec![0.0; pe_flat.len()],
        proxies_h: vec![0.0; ph_flat.len()],
    };

    let tape = Tape::with_capacity(64 * (dim_e + dim_h) * proxies.classes() * proxies.per_class());
    for i in 0..n {
        tape.reset();
        let xe: Vec<_> = batch_e[i].iter().map(|&v| tape.leaf(v)).collect();
        let xh: Vec<_> = batch_h[i].coords().iter().map(|&v| tape.leaf(v)).collect();
        let pe: Vec<_> = pe_flat.iter().map(|&v| tape.leaf(v)).collect();
        let ph: Vec<_> = ph_flat.iter().map(|&v| tape.leaf(v)).collect();

        let (l_h, l_e) = kernel::example_similarity_loss(
            &xe,
            &xh,
            &pe,
            &ph,
            proxies.classes(),
            proxies.per_class(),
            labels[i],
            params,
            cfg,
        );
        let weighted = l_h * params.eta_h + l_e * params.eta_e;
        if !weighted.value().is_finite() {
            return Err(ChestError::NonFinite(format!(
                "similarity loss of example {i}"
            )));
        }
        out.mean_hyperbolic += l_h.value();
        out.mean_euclidean += l_e.value();
        out.mean_loss += weighted.value();

        let grads = weighted.backward();
        out.batch_e.push(grads.get_all(&xe));
        out.batch_h.push(grads.get_all(&xh));
        for (acc, &var) in out.proxies_e.iter_mut().zip(&pe) {
            *acc += grads.get(var);
        }
        for (acc, &var) in out.proxies_h.iter_mut().zip(&ph) {
            *acc += grads.get(var);
        }
    }

    let inv_n = 1.0 / n as f64;
    out.mean_loss *= inv_n;
    out.mean_hyperbolic *= inv_n;
    out.mean_euclidean *= inv_n;
    for row in out.batch_e.iter_mut().chain(out.batch_h.iter_mut()) {
        for g in row {
            *g *= inv_n;
        }
    }
    for g in out.proxies_e.iter_mut().chain(out.proxies_h.iter_mut()) {
        *g *= inv_n;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euclidean_distance, poincare_distance};
    use crate::grad::{backward, LossFunction, ParamSet, ParamView};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_ball() -> BallConfig {
        BallConfig::new(1.0, 2.3).unwrap()
    }

    fn point(coords: &[f64], cfg: &BallConfig) -> PoincarePoint {
        PoincarePoint::new(coords.to_vec(), cfg).unwrap()
    }

    /// Point on the x-axis at geodesic distance `s` from the origin (c = 1).
    fn axis_point(s: f64, cfg: &BallConfig) -> PoincarePoint {
        point(&[(s / 2.0).tanh(), 0.0], cfg)
    }

    #[test]
    fn loss_params_default_and_validation() {
        let p = LossParams::default();
        p.validate().unwrap();
        assert_eq!(p.gamma_e, 5.0);
        assert_eq!(p.lambda_h, 20.0);
        assert_eq!(p.tau, 0.5);

        let mut bad = LossParams::default();
        bad.gamma_e = 0.0;
        bad.eta_e = 0.0;
        bad.eta_h = 0.0;
        let err = bad.validate().unwrap_err();
        match err {
            ChestError::Config(violations) => {
                assert_eq!(violations.len(), 2, "{violations:?}");
            }
            other => panic!("expected Config error, got {other}"),
        }
    }

    #[test]
    fn softmin_single_proxy_is_negated_distance() {
        let cfg = unit_ball();
        let x = [0.1, 0.2];
        let p = vec![vec![0.4, -0.1]];
        let s = softmin_similarity(&x, &p, Space::Euclidean, 5.0, &cfg).unwrap();
        let d = euclidean_distance(&x, &p[0]).unwrap();
        assert_eq!(s, -d);
    }

    #[test]
    fn softmin_equal_distances_collapse() {
        let cfg = unit_ball();
        // Two proxies mirrored around x give identical distances.
        let x = [0.0, 0.0];
        let p = vec![vec![0.3, 0.0], vec![-0.3, 0.0]];
        let s = softmin_similarity(&x, &p, Space::Euclidean, 5.0, &cfg).unwrap();
        assert!((s + 0.3).abs() < 1e-15);
    }

    #[test]
    fn softmin_matches_frozen_two_proxy_value() {
        // Distances (1, 3) at gamma = 5: weights proportional to e^{-0.2},
        // e^{-0.6}.
        let d = [1.0, 3.0];
        let got = kernel::softmin(&d, 5.0);
        let w0 = (-0.2_f64).exp();
        let w1 = (-0.6_f64).exp();
        let oracle = -(w0 * 1.0 + w1 * 3.0) / (w0 + w1);
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - (-1.802624)).abs() < 1e-6);
        assert!((got - (-1.8026246797750958)).abs() < 1e-12);
    }

    #[test]
    fn softmin_bounds_and_shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let k = rng.gen_range(1..6);
            let d: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * 4.0 + 0.01).collect();
            let gamma = rng.gen::<f64>() * 10.0 + 0.1;
            let s = kernel::softmin(&d, gamma);
            let lo = -d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let hi = -d.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(s >= lo - 1e-12 && s <= hi + 1e-12);

            let t = rng.gen::<f64>();
            let shifted: Vec<f64> = d.iter().map(|x| x - t).collect();
            let s2 = kernel::softmin(&shifted, gamma);
            assert!((s2 - (s + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmin_small_temperature_approaches_min_distance() {
        let d = [2.0, 0.7, 1.4];
        let s = kernel::softmin(&d, 1e-3);
        assert!((s + 0.7).abs() < 1e-9);
    }

    #[test]
    fn softmin_rejects_empty_proxies_and_bad_temperature() {
        let cfg = unit_ball();
        assert!(matches!(
            softmin_similarity(&[0.0], &[], Space::Euclidean, 5.0, &cfg),
            Err(ChestError::EmptyProxies(_))
        ));
        assert!(softmin_similarity(&[0.0], &[vec![1.0]], Space::Euclidean, 0.0, &cfg).is_err());
    }

    fn two_class_views<'a>(pe: &'a [f64], ph: &'a [PoincarePoint], dim_e: usize) -> ProxyViews<'a> {
        ProxyViews::new(pe, ph, 2, 1, dim_e).unwrap()
    }

    #[test]
    fn balanced_margin_gives_two_log_two() {
        // One negative class with S_pos - delta = S_neg in both spaces.
        let cfg = unit_ball();
        let params = LossParams {
            delta_e: 1.0,
            delta_h: 1.0,
            tau: 0.0,
            ..LossParams::default()
        };
        // Euclidean: x = 0, proxies at distances 0.5 and 1.5.
        let batch_e = vec![vec![0.0]];
        let pe = [0.5, -1.5];
        // Hyperbolic: x at origin, proxies at geodesic distances 0.8 and 1.8.
        let batch_h = vec![PoincarePoint::origin(2)];
        let ph = [axis_point(0.8, &cfg), axis_point(1.8, &cfg)];
        let views = two_class_views(&pe, &ph, 1);
        let out = chest_similarity_loss(&batch_e, &batch_h, &[0], &views, &params, &cfg).unwrap();
        assert!((out.per_example[0] - 2.0 * 2.0_f64.ln()).abs() < 1e-12);
        assert!((out.per_example[0] - 1.386294).abs() < 1e-6);
        assert!((out.mean_hyperbolic - 2.0_f64.ln()).abs() < 1e-12);
        assert!((out.mean_euclidean - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_margin_vanishes() {
        // S_pos - delta exceeds S_neg by far more than 50/lambda.
        let cfg = unit_ball();
        let params = LossParams {
            delta_e: 0.1,
            delta_h: 0.1,
            tau: 0.0,
            ..LossParams::default()
        };
        let batch_e = vec![vec![0.0]];
        let pe = [0.1, 10.0];
        let batch_h = vec![PoincarePoint::origin(2)];
        let ph = [axis_point(0.1, &cfg), axis_point(10.0, &cfg)];
        let views = two_class_views(&pe, &ph, 1);
        let out = chest_similarity_loss(&batch_e, &batch_h, &[0], &views, &params, &cfg).unwrap();
        assert!(out.per_example[0] <= 1e-8);
        assert!(out.per_example[0] >= 0.0);
    }

    /// Literal evaluation of the loss with naive softmax weights and the
    /// explicit f+/f- ratio, using only audited distance calls.
    fn brute_force_example(
        x_e: &[f64],
        x_h: &PoincarePoint,
        views: &ProxyViews<'_>,
        label: usize,
        params: &LossParams,
        cfg: &BallConfig,
    ) -> f64 {
        let sims = |space: Space, gamma: f64| -> Vec<f64> {
            (0..views.classes())
                .map(|c| {
                    let d: Vec<f64> = (0..views.per_class())
                        .map(|k| match space {
                            Space::Euclidean => {
                                euclidean_distance(x_e, views.e_proxy(c, k)).unwrap()
                            }
                            Space::Hyperbolic => {
                                poincare_distance(x_h, views.h_proxy(c, k), cfg).unwrap()
                            }
                        })
                        .collect();
                    let w: Vec<f64> = d.iter().map(|x| (-x / gamma).exp()).collect();
                    let z: f64 = w.iter().sum();
                    -d.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() / z
                })
                .collect()
        };
        let space_loss = |s: &[f64], lambda: f64, delta: f64| -> f64 {
            let f_pos = (lambda * (s[label] - delta)).exp();
            let f_neg: f64 = s
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != label)
                .map(|(_, x)| (lambda * x).exp())
                .sum();
            -(f_pos / (f_pos + f_neg)).ln()
        };
        let sh = sims(Space::Hyperbolic, params.gamma_h);
        let se = sims(Space::Euclidean, params.gamma_e);
        params.eta_h * space_loss(&sh, params.lambda_h, params.delta_h)
            + params.eta_e * space_loss(&se, params.lambda_e, params.delta_e)
    }

    #[test]
    fn chest_loss_matches_brute_force_oracle() {
        let cfg = BallConfig::new(0.5, 2.3).unwrap();
        let params = LossParams {
            delta_e: 0.1,
            delta_h: 0.1,
            ..LossParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (classes, per_class, dim_e, dim_h) = (3, 2, 4, 3);
        for _ in 0..50 {
            let pe: Vec<f64> = (0..classes * per_class * dim_e)
                .map(|_| rng.gen::<f64>() - 0.5)
                .collect();
            let ph: Vec<PoincarePoint> = (0..classes * per_class)
                .map(|_| {
                    let coords: Vec<f64> =
                        (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.6).collect();
                    PoincarePoint::new(coords, &cfg).unwrap()
                })
                .collect();
            let views = ProxyViews::new(&pe, &ph, classes, per_class, dim_e).unwrap();
            let batch_e = vec![(0..dim_e)
                .map(|_| rng.gen::<f64>() - 0.5)
                .collect::<Vec<f64>>()];
            let batch_h = vec![PoincarePoint::new(
                (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.6).collect(),
                &cfg,
            )
            .unwrap()];
            let label = rng.gen_range(0..classes);
            let got =
                chest_similarity_loss(&batch_e, &batch_h, &[label], &views, &params, &cfg).unwrap();
            let want = brute_force_example(&batch_e[0], &batch_h[0], &views, label, &params, &cfg);
            assert!(
                (got.per_example[0] - want).abs() < 1e-10,
                "{} vs {}",
                got.per_example[0],
                want
            );
        }
    }

    #[test]
    fn chest_loss_is_non_negative_and_means_are_consistent() {
        let cfg = BallConfig::new(0.5, 2.3).unwrap();
        let params = LossParams {
            eta_e: 0.7,
            eta_h: 1.3,
            ..LossParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (classes, per_class, dim_e, dim_h) = (4, 2, 3, 2);
        let pe: Vec<f64> = (0..classes * per_class * dim_e)
            .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
            .collect();
        let ph: Vec<PoincarePoint> = (0..classes * per_class)
            .map(|_| {
                PoincarePoint::new(
                    (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.8).collect(),
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        let views = ProxyViews::new(&pe, &ph, classes, per_class, dim_e).unwrap();
        let n = 16;
        let batch_e: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim_e).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let batch_h: Vec<PoincarePoint> = (0..n)
            .map(|_| {
                PoincarePoint::new(
                    (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.8).collect(),
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let out =
            chest_similarity_loss(&batch_e, &batch_h, &labels, &views, &params, &cfg).unwrap();
        for &l in &out.per_example {
            assert!(l >= 0.0);
        }
        let mean: f64 = out.per_example.iter().sum::<f64>() / n as f64;
        let recomposed = params.eta_h * out.mean_hyperbolic + params.eta_e * out.mean_euclidean;
        assert!((mean - recomposed).abs() < 1e-12);
    }

    #[test]
    fn margin_softmax_monotone_in_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let c = rng.gen_range(2..6);
            let sims: Vec<f64> = (0..c).map(|_| -rng.gen::<f64>() * 3.0).collect();
            let label = rng.gen_range(0..c);
            let lambda = rng.gen::<f64>() * 30.0 + 0.5;
            let delta = rng.gen::<f64>();
            let base = kernel::margin_softmax_loss(&sims, label, lambda, delta);

            let eps = rng.gen::<f64>() * 0.5 + 1e-3;
            let mut up_pos = sims.clone();
            up_pos[label] += eps;
            let with_better_pos = kernel::margin_softmax_loss(&up_pos, label, lambda, delta);
            assert!(with_better_pos <= base + 1e-12);

            let neg = (label + 1 + rng.gen_range(0..c - 1)) % c;
            if neg != label {
                let mut up_neg = sims.clone();
                up_neg[neg] += eps;
                let with_better_neg = kernel::margin_softmax_loss(&up_neg, label, lambda, delta);
                assert!(with_better_neg >= base - 1e-12);
            }
        }
    }

    #[test]
    fn chest_loss_rejects_bad_labels_and_degenerate_banks() {
        let cfg = unit_ball();
        let params = LossParams::default();
        let pe = [0.5, -1.5];
        let ph = [axis_point(0.8, &cfg), axis_point(1.8, &cfg)];
        let views = two_class_views(&pe, &ph, 1);
        let batch_e = vec![vec![0.0]];
        let batch_h = vec![PoincarePoint::origin(2)];
        assert!(matches!(
            chest_similarity_loss(&batch_e, &batch_h, &[2], &views, &params, &cfg),
            Err(ChestError::IndexOutOfRange { .. })
        ));

        let one_class = ProxyViews::new(&pe[..1], &ph[..1], 1, 1, 1).unwrap();
        assert!(matches!(
            chest_similarity_loss(&batch_e, &batch_h, &[0], &one_class, &params, &cfg),
            Err(ChestError::Degenerate(_))
        ));
    }

    #[test]
    fn proxy_similarity_identity_symmetry_and_frozen_value() {
        let cfg = unit_ball();
        let p = axis_point(1.0, &cfg);
        let q = point(&[0.1, -0.4], &cfg);
        assert!((proxy_similarity(&p, &p, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let ab = proxy_similarity(&p, &q, &cfg).unwrap();
        let ba = proxy_similarity(&q, &p, &cfg).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0 && ab <= 1.0);

        let origin = PoincarePoint::origin(2);
        let unit = proxy_similarity(&origin, &p, &cfg).unwrap();
        assert!((unit - (-1.0_f64).exp()).abs() < 1e-12);
        assert!((unit - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn hyphc_symmetric_triangle_collapses_to_two_thirds_of_sum() {
        // Equilateral triangle with side 1: radius found by bisection on the
        // audited distance, then the softmax weights are all 1/3 and the
        // value is 2e^{-1}.
        let cfg = unit_ball();
        let vertex = |rho: f64, i: usize| -> PoincarePoint {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
            point(&[rho * angle.cos(), rho * angle.sin()], &cfg)
        };
        let side = |rho: f64| -> f64 {
            poincare_distance(&vertex(rho, 0), &vertex(rho, 1), &cfg).unwrap()
        };
        let (mut lo, mut hi) = (0.01, 0.9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if side(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = 0.5 * (lo + hi);
        let points = [vertex(rho, 0), vertex(rho, 1), vertex(rho, 2)];
        let got = hyphc_regularization(&points, 1.0, &cfg).unwrap();
        assert!((got - 2.0 * (-1.0_f64).exp()).abs() < 1e-9);
        assert!((got - 0.735759).abs() < 1e-6);
    }

    #[test]
    fn hyphc_collinear_triangle_matches_brute_force() {
        // Points on a diameter at geodesic coordinates 0, 1, 3 have pairwise
        // distances {1, 2, 3} exactly.
        let cfg = unit_ball();
        let points = [
            PoincarePoint::origin(2),
            axis_point(1.0, &cfg),
            axis_point(3.0, &cfg),
        ];
        let got = hyphc_regularization(&points, 1.0, &cfg).unwrap();
        let e = std::f64::consts::E;
        let oracle = ((-1.0_f64).exp() + (-2.0_f64).exp() + (-3.0_f64).exp())
            - 3.0 / (e + e * e + e * e * e);
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 0.453641).abs() < 1e-6);
        assert!((got - 0.45364060193712635).abs() < 1e-9);
    }

    fn random_triplet(rng: &mut ChaCha8Rng, cfg: &BallConfig) -> [PoincarePoint; 3] {
        std::array::from_fn(|_| {
            PoincarePoint::new(
                (0..3).map(|_| (rng.gen::<f64>() - 0.5) * 1.1).collect(),
                cfg,
            )
            .unwrap()
        })
    }

    #[test]
    fn hyphc_is_permutation_invariant_and_bounded() {
        let cfg = unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let t = random_triplet(&mut rng, &cfg);
            let base = hyphc_regularization(&t, 1.0, &cfg).unwrap();
            for perm in [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ] {
                let p = [t[perm[0]].clone(), t[perm[1]].clone(), t[perm[2]].clone()];
                let v = hyphc_regularization(&p, 1.0, &cfg).unwrap();
                assert!((v - base).abs() < 1e-12);
            }

            let sims = [
                proxy_similarity(&t[0], &t[1], &cfg).unwrap(),
                proxy_similarity(&t[0], &t[2], &cfg).unwrap(),
                proxy_similarity(&t[1], &t[2], &cfg).unwrap(),
            ];
            let sum: f64 = sims.iter().sum();
            let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = sims.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(base >= sum - max - 1e-12);
            assert!(base <= sum - min + 1e-12);
        }
    }

    #[test]
    fn hyphc_second_term_identity_at_unit_temperature() {
        // With gamma_hyp = 1 each S_{jk}·e^{d_{jk}} = 1, so the softmax term
        // equals 3 / sum e^{d}.
        let cfg = unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let t = random_triplet(&mut rng, &cfg);
            let l = hyphc_regularization(&t, 1.0, &cfg).unwrap();
            let d = [
                poincare_distance(&t[0], &t[1], &cfg).unwrap(),
                poincare_distance(&t[0], &t[2], &cfg).unwrap(),
                poincare_distance(&t[1], &t[2], &cfg).unwrap(),
            ];
            let sum_s: f64 = d.iter().map(|x| (-x).exp()).sum();
            let second = 3.0 / d.iter().map(|x| x.exp()).sum::<f64>();
            assert!((l - (sum_s - second)).abs() < 1e-10);
        }
    }

    #[test]
    fn combined_loss_examples_and_invariant() {
        let params = LossParams::default();
        let b = combined_loss((1.0, 1.0), 0.4, &params).unwrap();
        assert!((b.total - 2.2).abs() < 1e-12);
        assert!(
            (b.total
                - (params.eta_h * b.l_hyperbolic
                    + params.eta_e * b.l_euclidean
                    + params.tau * b.l_hyphc))
                .abs()
                < 1e-10
        );

        let no_reg = LossParams {
            tau: 0.0,
            ..LossParams::default()
        };
        let x = combined_loss((0.9, 0.4), 123.0, &no_reg).unwrap();
        let y = combined_loss((0.9, 0.4), -55.0, &no_reg).unwrap();
        assert_eq!(x.total, y.total);

        let hyp_only = LossParams {
            eta_e: 0.0,
            tau: 0.0,
            ..LossParams::default()
        };
        let z = combined_loss((0.9, 0.4), 1.0, &hyp_only).unwrap();
        assert_eq!(z.total, 0.9);
    }

    #[test]
    fn combined_loss_names_non_finite_components() {
        let params = LossParams::default();
        let err = combined_loss((f64::NAN, 0.0), 0.0, &params).unwrap_err();
        assert!(err.to_string().contains("l_hyperbolic"));
        let err = combined_loss((0.0, 0.0), f64::INFINITY, &params).unwrap_err();
        assert!(err.to_string().contains("l_hyphc"));
    }

    #[test]
    fn triplet_validation_rules() {
        let ok = Triplet {
            anchor: ProxyRef { class: 0, proxy: 0 },
            positive: ProxyRef { class: 0, proxy: 1 },
            negative: ProxyRef { class: 1, proxy: 0 },
        };
        ok.validate(2, 2).unwrap();

        let same_proxy = Triplet {
            positive: ProxyRef { class: 0, proxy: 0 },
            ..ok
        };
        assert!(same_proxy.validate(2, 2).is_err());

        let same_class = Triplet {
            negative: ProxyRef { class: 0, proxy: 0 },
            ..ok
        };
        assert!(same_class.validate(2, 2).is_err());

        let out_of_range = Triplet {
            negative: ProxyRef { class: 5, proxy: 0 },
            ..ok
        };
        assert!(matches!(
            out_of_range.validate(2, 2),
            Err(ChestError::IndexOutOfRange { .. })
        ));
    }

    /// Batch similarity loss with every embedding and proxy as a parameter,
    /// for comparing the chunked gradient route against a single tape.
    struct BatchLoss {
        labels: Vec<usize>,
        n: usize,
        classes: usize,
        per_class: usize,
        dim_e: usize,
        dim_h: usize,
        params: LossParams,
        cfg: BallConfig,
    }

    impl LossFunction for BatchLoss {
        fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> crate::error::Result<S> {
            let xe = p.get("batch_e")?;
            let xh = p.get("batch_h")?;
            let pe = p.get("proxies_e")?;
            let ph = p.get("proxies_h")?;
            let mut acc: Option<S> = None;
            for i in 0..self.n {
                let (l_h, l_e) = kernel::example_similarity_loss(
                    &xe[i * self.dim_e..(i + 1) * self.dim_e],
                    &xh[i * self.dim_h..(i + 1) * self.dim_h],
                    pe,
                    ph,
                    self.classes,
                    self.per_class,
                    self.labels[i],
                    &self.params,
                    &self.cfg,
                );
                let w = l_h * self.params.eta_h + l_e * self.params.eta_e;
                acc = Some(match acc {
                    None => w,
                    Some(a) => a + w,
                });
            }
            Ok(acc.unwrap() * (1.0 / self.n as f64))
        }
    }

    #[test]
    fn chunked_gradients_match_single_tape() {
        let cfg = BallConfig::new(0.5, 2.3).unwrap();
        let params = LossParams {
            delta_e: 0.3,
            delta_h: 0.3,
            ..LossParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (n, classes, per_class, dim_e, dim_h) = (5, 3, 2, 4, 3);

        let batch_e: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim_e).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let batch_h: Vec<PoincarePoint> = (0..n)
            .map(|_| {
                PoincarePoint::new(
                    (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.7).collect(),
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pe: Vec<f64> = (0..classes * per_class * dim_e)
            .map(|_| rng.gen::<f64>() - 0.5)
            .collect();
        let ph_points: Vec<PoincarePoint> = (0..classes * per_class)
            .map(|_| {
                PoincarePoint::new(
                    (0..dim_h).map(|_| (rng.gen::<f64>() - 0.5) * 0.7).collect(),
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        let views = ProxyViews::new(&pe, &ph_points, classes, per_class, dim_e).unwrap();

        let chunked =
            similarity_loss_grads(&batch_e, &batch_h, &labels, &views, &params, &cfg).unwrap();

        let mut param_set = ParamSet::new();
        let flat = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().flatten().copied().collect() };
        param_set
            .insert("batch_e", vec![n, dim_e], flat(&batch_e))
            .unwrap();
        param_set
            .insert(
                "batch_h",
                vec![n, dim_h],
                batch_h.iter().flat_map(|p| p.coords().to_vec()).collect(),
            )
            .unwrap();
        param_set
            .insert("proxies_e", vec![classes, per_class, dim_e], pe.clone())
            .unwrap();
        param_set
            .insert(
                "proxies_h",
                vec![classes, per_class, dim_h],
                ph_points.iter().flat_map(|p| p.coords().to_vec()).collect(),
            )
            .unwrap();
        let loss = BatchLoss {
            labels,
            n,
            classes,
            per_class,
            dim_e,
            dim_h,
            params,
            cfg,
        };
        let single = backward(&loss, &param_set).unwrap();

        assert!((single.loss() - chunked.mean_loss).abs() < 1e-12);
        let close = |a: &[f64], b: &[f64]| {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        };
        close(
            single.get("batch_e").unwrap().data(),
            &flat(&chunked.batch_e),
        );
        close(
            single.get("batch_h").unwrap().data(),
            &flat(&chunked.batch_h),
        );
        close(single.get("proxies_e").unwrap().data(), &chunked.proxies_e);
        close(single.get("proxies_h").unwrap().data(), &chunked.proxies_h);
    }
}
