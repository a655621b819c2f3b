//! Self-diagnostic suites exposed through the CLI and reused by the
//! integration tests.
//!
//! Two suites are provided: a geometry suite that stress-tests the ball
//! operations against their defining identities on random samples, and a
//! gradient suite that compares tape gradients of every differentiable
//! building block against central finite differences. Both return a
//! [`CheckReport`] with one line per property so callers can render the
//! outcome or gate on it. A scaling probe for the batched similarity loss
//! rounds the module out.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::defaults;
use crate::error::{ChestError, Result};
use crate::geometry::kernel as geo;
use crate::geometry::{BallConfig, PoincarePoint};
use crate::grad::{finite_difference_check, FdConfig, LossFunction, ParamSet, ParamView};
use crate::losses::{self, kernel as loss_kernel, LossParams, ProxyViews};
use crate::model::kernel as model_kernel;
use crate::model::EncoderSpec;
use crate::scalar::Real;

/// Random pairs or triples drawn per geometry property and curvature.
pub const GEOMETRY_SAMPLES: usize = 10_000;
/// Random configurations checked per differentiable building block.
pub const GRADIENT_CONFIGS: usize = 100;

/// Absolute tolerance for distance symmetry.
pub const TOL_SYMMETRY: f64 = 1e-10;
/// Absolute tolerance for triangle inequality slack.
pub const TOL_TRIANGLE: f64 = 1e-9;
/// Absolute tolerance for the Mobius identity and cancellation laws.
pub const TOL_MOBIUS: f64 = 1e-12;
/// Relative tolerance for the flat-limit comparison at tiny curvature.
pub const TOL_FLAT_LIMIT: f64 = 1e-4;

/// Outcome of a single checked property.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

impl CheckLine {
    /// Property judged by a worst observed error against a tolerance.
    pub fn bounded(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        CheckLine {
            name: name.into(),
            detail: format!("max error {observed:.3e} (tolerance {tolerance:.1e})"),
            passed: observed.is_finite() && observed <= tolerance,
        }
    }

    /// Property judged by counting violations over a sample budget.
    pub fn counted(name: impl Into<String>, violations: usize, samples: usize) -> Self {
        CheckLine {
            name: name.into(),
            detail: format!("{violations} violations in {samples} samples"),
            passed: violations == 0,
        }
    }
}

/// Collection of check lines with the wall time the suite took.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub title: String,
    pub lines: Vec<CheckLine>,
    pub elapsed_seconds: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }

    /// Multi-line human-readable rendering, one property per line.
    pub fn render(&self) -> String {
        let mut out = vec![format!(
            "{}: {} ({} checks, {:.2} s)",
            self.title,
            if self.passed() { "PASS" } else { "FAIL" },
            self.lines.len(),
            self.elapsed_seconds
        )];
        for line in &self.lines {
            out.push(format!(
                "  [{}] {:<38} {}",
                if line.passed { "PASS" } else { "FAIL" },
                line.name,
                line.detail
            ));
        }
        out.join("\n")
    }
}

/// Draws a vector with uniform random direction and norm uniform on
/// `[0, frac / sqrt(c)]`, so the result lies strictly inside the ball for
/// any `frac < 1`.
pub fn sample_in_ball(rng: &mut ChaCha8Rng, dim: usize, cfg: &BallConfig, frac: f64) -> Vec<f64> {
    sample_vector(rng, dim, frac / cfg.curvature.sqrt())
}

/// Uniform random direction scaled to a norm uniform on `[0, max_norm]`.
fn sample_vector(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        let target = rng.gen::<f64>() * max_norm;
        return raw.iter().map(|v| v * target / norm).collect();
    }
}

/// Minimum separation enforced between a sampled point and a set of anchor
/// points in finite-difference configurations. The distance functions are
/// smooth away from coincidence but their higher derivatives grow like the
/// inverse squared distance, so a near-coincident pair would inflate the
/// truncation error of the difference quotient past the comparison
/// tolerance.
const MIN_SEPARATION: f64 = 0.05;

/// Draws via `sample` until the result is at least [`MIN_SEPARATION`] away
/// from every anchor under `distance`.
fn sample_separated(
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    anchors: &[&[f64]],
    distance: impl Fn(&[f64], &[f64]) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    loop {
        let candidate = sample(rng);
        if anchors
            .iter()
            .all(|a| distance(&candidate, a) >= MIN_SEPARATION)
        {
            return candidate;
        }
    }
}

/// Runs the geometry identities on random in-ball samples at two working
/// curvatures plus a near-flat curvature, and reports the worst violation of
/// each property.
///
/// Checked properties: distance symmetry, the triangle inequality, the
/// identity and cancellation laws of Mobius addition, strict ball membership
/// of exponential-map images, and agreement of the distance with twice the
/// Euclidean distance in the flat limit.
pub fn geometry_suite(seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();

    for &c in &[0.5, 1.0] {
        let cfg = BallConfig::new(c, defaults::CLIP_RADIUS)?;
        let mut symmetry = 0.0_f64;
        let mut triangle = f64::NEG_INFINITY;
        let mut identity = 0.0_f64;
        let mut cancellation = 0.0_f64;
        let mut escaped = 0usize;

        for _ in 0..GEOMETRY_SAMPLES {
            let dim = rng.gen_range(2..=8);
            let u = sample_in_ball(&mut rng, dim, &cfg, 0.9);
            let v = sample_in_ball(&mut rng, dim, &cfg, 0.9);
            let w = sample_in_ball(&mut rng, dim, &cfg, 0.9);

            let duv = geo::poincare_distance(&u, &v, &cfg);
            let dvu = geo::poincare_distance(&v, &u, &cfg);
            symmetry = symmetry.max((duv - dvu).abs());

            let duw = geo::poincare_distance(&u, &w, &cfg);
            let dvw = geo::poincare_distance(&v, &w, &cfg);
            triangle = triangle.max(duw - duv - dvw);

            let zero = vec![0.0; dim];
            let id = geo::mobius_add(&zero, &v, &cfg);
            for (a, b) in id.iter().zip(&v) {
                identity = identity.max((a - b).abs());
            }
            let neg_u: Vec<f64> = u.iter().map(|a| -a).collect();
            let cancel = geo::mobius_add(&neg_u, &u, &cfg);
            for a in &cancel {
                cancellation = cancellation.max(a.abs());
            }

            // Tangent vectors well past the saturation scale of tanh, so the
            // map is exercised where naive scaling would leave the ball.
            let tangent = sample_vector(&mut rng, dim, 20.0 / c.sqrt());
            let image = geo::exp_map_zero(&tangent, &cfg);
            if c * image.iter().map(|a| a * a).sum::<f64>() >= 1.0 {
                escaped += 1;
            }
        }

        let tag = format!("(c = {c:.2})");
        lines.push(CheckLine::bounded(
            format!("distance symmetry {tag}"),
            symmetry,
            TOL_SYMMETRY,
        ));
        lines.push(CheckLine::bounded(
            format!("triangle inequality slack {tag}"),
            triangle,
            TOL_TRIANGLE,
        ));
        lines.push(CheckLine::bounded(
            format!("mobius identity {tag}"),
            identity,
            TOL_MOBIUS,
        ));
        lines.push(CheckLine::bounded(
            format!("mobius cancellation {tag}"),
            cancellation,
            TOL_MOBIUS,
        ));
        lines.push(CheckLine::counted(
            format!("exp map stays in ball {tag}"),
            escaped,
            GEOMETRY_SAMPLES,
        ));
    }

    // Near-zero curvature: the distance must collapse to twice the Euclidean
    // one. Points are kept at order-one norms so the curvature terms are the
    // only source of deviation.
    let flat = BallConfig::new(1e-6, defaults::CLIP_RADIUS)?;
    let mut flat_err = 0.0_f64;
    for _ in 0..GEOMETRY_SAMPLES {
        let dim = rng.gen_range(2..=8);
        let u = sample_vector(&mut rng, dim, 1.0);
        let v = sample_vector(&mut rng, dim, 1.0);
        let separation = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if separation < 1e-6 {
            continue;
        }
        let d = geo::poincare_distance(&u, &v, &flat);
        flat_err = flat_err.max((d - 2.0 * separation).abs() / (2.0 * separation));
    }
    lines.push(CheckLine::bounded(
        "flat limit matches 2|u - v| (c = 1e-6)",
        flat_err,
        TOL_FLAT_LIMIT,
    ));

    Ok(CheckReport {
        title: "geometry suite".into(),
        lines,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Distance between two free points.
struct DistanceObjective {
    cfg: BallConfig,
}

impl LossFunction for DistanceObjective {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        Ok(geo::poincare_distance(p.get("u")?, p.get("v")?, &self.cfg))
    }
}

/// Fixed linear functional of the exponential-map image, which makes the
/// full Jacobian of the map observable through a scalar loss.
struct ExpMapObjective {
    cfg: BallConfig,
    weights: Vec<f64>,
}

impl LossFunction for ExpMapObjective {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        let image = geo::exp_map_zero(p.get("x")?, &self.cfg);
        let mut acc = image[0] * self.weights[0];
        for (y, w) in image.iter().zip(&self.weights).skip(1) {
            acc = acc + *y * *w;
        }
        Ok(acc)
    }
}

/// Sum of the two per-space similarity losses of a single example, with the
/// embeddings and both proxy banks all free parameters.
struct SimilarityObjective {
    cfg: BallConfig,
    loss: LossParams,
    classes: usize,
    per_class: usize,
    label: usize,
}

impl LossFunction for SimilarityObjective {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        let (l_h, l_e) = loss_kernel::example_similarity_loss(
            p.get("x_e")?,
            p.get("x_h")?,
            p.get("proxies_e")?,
            p.get("proxies_h")?,
            self.classes,
            self.per_class,
            self.label,
            &self.loss,
            &self.cfg,
        );
        Ok(l_h + l_e)
    }
}

/// Clustering regularizer of one free proxy triple.
struct HyphcObjective {
    cfg: BallConfig,
    gamma_hyp: f64,
}

impl LossFunction for HyphcObjective {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        Ok(loss_kernel::hyphc_triplet(
            [p.get("a")?, p.get("b")?, p.get("c")?],
            self.gamma_hyp,
            &self.cfg,
        ))
    }
}

/// The complete training objective of a small linear model: encoder and head
/// weights plus the Euclidean proxy bank are free, a fixed batch and fixed
/// proxy triples provide the data.
struct TrainingObjective {
    spec: EncoderSpec,
    cfg: BallConfig,
    loss: LossParams,
    classes: usize,
    per_class: usize,
    dim_h: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    triplets: Vec<losses::Triplet>,
}

impl LossFunction for TrainingObjective {
    fn eval<S: Real>(&self, p: &ParamView<'_, S>) -> Result<S> {
        let pe = p.get("proxies_e")?;
        let bank = self.classes * self.per_class;
        let mut ph_flat: Vec<S> = Vec::with_capacity(bank * self.dim_h);
        for slot in 0..bank {
            let proxy = &pe[slot * self.spec.embed_dim..(slot + 1) * self.spec.embed_dim];
            ph_flat.extend(model_kernel::head_map(p, proxy, &self.cfg)?);
        }

        let mut total: Option<S> = None;
        for (x, &label) in self.features.iter().zip(&self.labels) {
            let z_e = model_kernel::encode(&self.spec, p, x)?;
            let z_h = model_kernel::head_map(p, &z_e, &self.cfg)?;
            let (l_h, l_e) = loss_kernel::example_similarity_loss(
                &z_e,
                &z_h,
                pe,
                &ph_flat,
                self.classes,
                self.per_class,
                label,
                &self.loss,
                &self.cfg,
            );
            let term = l_h * self.loss.eta_h + l_e * self.loss.eta_e;
            total = Some(match total {
                Some(acc) => acc + term,
                None => term,
            });
        }
        let mut value = total.expect("batch is non-empty") * (1.0 / self.features.len() as f64);

        if self.loss.tau > 0.0 && !self.triplets.is_empty() {
            let slice = |r: losses::ProxyRef| {
                let at = (r.class * self.per_class + r.proxy) * self.dim_h;
                &ph_flat[at..at + self.dim_h]
            };
            let mut reg: Option<S> = None;
            for t in &self.triplets {
                let term = loss_kernel::hyphc_triplet(
                    [slice(t.anchor), slice(t.positive), slice(t.negative)],
                    self.loss.gamma_hyp,
                    &self.cfg,
                );
                reg = Some(match reg {
                    Some(acc) => acc + term,
                    None => term,
                });
            }
            let reg = reg.expect("triplet list is non-empty");
            value = value + reg * (self.loss.tau / self.triplets.len() as f64);
        }
        Ok(value)
    }
}

/// Coordinates whose true gradient magnitude falls below this floor are too
/// small to compare against a difference quotient: the quotient's rounding
/// noise sits near `1e-10`, so relative agreement at `1e-4` cannot be
/// expected below roughly `1e-5`. Configurations containing such a
/// coordinate are redrawn. The screen looks only at the analytic side, so a
/// wrong gradient cannot hide behind it, and a structurally vanishing
/// gradient would exhaust the redraw budget and surface as an error.
const GRAD_MAGNITUDE_FLOOR: f64 = 1e-5;

/// Worst relative error of one objective family over `GRADIENT_CONFIGS`
/// random configurations.
fn worst_over_configs<L: LossFunction>(
    mut build: impl FnMut(&mut ChaCha8Rng) -> Result<(ParamSet, L)>,
    rng: &mut ChaCha8Rng,
    fd: &FdConfig,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    let mut redraws = 0usize;
    for _ in 0..GRADIENT_CONFIGS {
        let (params, objective) = loop {
            let (params, objective) = build(rng)?;
            let probe = crate::grad::backward(&objective, &params)?;
            let fragile = probe
                .grads()
                .iter()
                .flat_map(|t| t.data())
                .any(|g| g.abs() < GRAD_MAGNITUDE_FLOOR);
            if !fragile {
                break (params, objective);
            }
            redraws += 1;
            if redraws > 50 * GRADIENT_CONFIGS {
                return Err(ChestError::Degenerate(
                    "gradient check could not find configurations with all \
                     coordinates above the comparison floor"
                        .into(),
                ));
            }
        };
        let report = finite_difference_check(&objective, &params, fd)?;
        worst = worst.max(report.max_rel_error());
    }
    Ok(worst)
}

/// Random loss parameters for finite-difference comparisons. The scaling
/// factors stay small enough that no class softmax saturates: a weight that
/// decays like `exp(-lambda * spread)` would push true gradients below the
/// rounding noise of the difference quotient, and the comparison would then
/// measure noise rather than correctness.
fn random_loss_params(rng: &mut ChaCha8Rng) -> LossParams {
    LossParams {
        gamma_e: rng.gen_range(0.5..8.0),
        gamma_h: rng.gen_range(0.5..8.0),
        lambda_e: rng.gen_range(1.0..3.0),
        lambda_h: rng.gen_range(1.0..3.0),
        delta_e: rng.gen_range(0.0..1.0),
        delta_h: rng.gen_range(0.0..1.0),
        eta_e: 1.0,
        eta_h: 1.0,
        gamma_hyp: rng.gen_range(0.5..2.0),
        tau: defaults::TAU,
    }
}

/// Compares tape gradients against central finite differences for every
/// differentiable building block: the distance, the exponential map, the
/// per-example similarity losses, the clustering regularizer, and the full
/// training objective of a small linear model.
pub fn gradient_suite(seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fd = FdConfig::default();
    let mut lines = Vec::new();

    let distance = worst_over_configs(
        |rng| {
            let c = rng.gen_range(0.2..2.0);
            let cfg = BallConfig::new(c, defaults::CLIP_RADIUS)?;
            let dim = rng.gen_range(2..=6);
            let u = sample_in_ball(rng, dim, &cfg, 0.85);
            let v = sample_separated(
                |rng| sample_in_ball(rng, dim, &cfg, 0.85),
                &[&u],
                |a, b| geo::poincare_distance(a, b, &cfg),
                rng,
            );
            let mut params = ParamSet::new();
            params.insert("u", vec![dim], u)?;
            params.insert("v", vec![dim], v)?;
            Ok((params, DistanceObjective { cfg }))
        },
        &mut rng,
        &fd,
    )?;
    lines.push(CheckLine::bounded(
        "poincare distance",
        distance,
        fd.rel_tolerance,
    ));

    let exp_map = worst_over_configs(
        |rng| {
            let c = rng.gen_range(0.2..2.0);
            let cfg = BallConfig::new(c, defaults::CLIP_RADIUS)?;
            let dim = rng.gen_range(2..=6);
            let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
            let scale = rng.gen_range(0.1..1.0);
            let mut params = ParamSet::new();
            params.insert("x", vec![dim], sample_vector(rng, dim, 3.0))?;
            let weights = (0..dim).map(|_| normal.sample(rng) * scale).collect();
            Ok((params, ExpMapObjective { cfg, weights }))
        },
        &mut rng,
        &fd,
    )?;
    lines.push(CheckLine::bounded(
        "exp map at origin",
        exp_map,
        fd.rel_tolerance,
    ));

    // Curvature and norms are kept in a band where no pairwise distance
    // exceeds a few units, which together with the scaling bounds of
    // `random_loss_params` keeps every class weight far from zero.
    let similarity = worst_over_configs(
        |rng| {
            let c = rng.gen_range(1.0..2.0);
            let cfg = BallConfig::new(c, defaults::CLIP_RADIUS)?;
            let classes = rng.gen_range(2..=4);
            let per_class = rng.gen_range(1..=3);
            let dim_e = rng.gen_range(3..=6);
            let dim_h = rng.gen_range(2..=4);
            let label = rng.gen_range(0..classes);
            let pe: Vec<Vec<f64>> = (0..classes * per_class)
                .map(|_| sample_vector(rng, dim_e, 0.9))
                .collect();
            let ph: Vec<Vec<f64>> = (0..classes * per_class)
                .map(|_| sample_in_ball(rng, dim_h, &cfg, 0.5))
                .collect();
            let x_e = sample_separated(
                |rng| sample_vector(rng, dim_e, 0.9),
                &pe.iter().map(Vec::as_slice).collect::<Vec<_>>(),
                geo::euclidean_distance,
                rng,
            );
            let x_h = sample_separated(
                |rng| sample_in_ball(rng, dim_h, &cfg, 0.5),
                &ph.iter().map(Vec::as_slice).collect::<Vec<_>>(),
                |a, b| geo::poincare_distance(a, b, &cfg),
                rng,
            );
            let mut params = ParamSet::new();
            params.insert("x_e", vec![dim_e], x_e)?;
            params.insert("x_h", vec![dim_h], x_h)?;
            params.insert("proxies_e", vec![classes, per_class, dim_e], pe.concat())?;
            params.insert("proxies_h", vec![classes, per_class, dim_h], ph.concat())?;
            let loss = random_loss_params(rng);
            let objective = SimilarityObjective {
                cfg,
                loss,
                classes,
                per_class,
                label,
            };
            Ok((params, objective))
        },
        &mut rng,
        &fd,
    )?;
    lines.push(CheckLine::bounded(
        "similarity losses",
        similarity,
        fd.rel_tolerance,
    ));

    let hyphc = worst_over_configs(
        |rng| {
            let c = rng.gen_range(0.2..2.0);
            let cfg = BallConfig::new(c, defaults::CLIP_RADIUS)?;
            let dim = rng.gen_range(2..=5);
            let metric = |a: &[f64], b: &[f64]| geo::poincare_distance(a, b, &cfg);
            let a = sample_in_ball(rng, dim, &cfg, 0.8);
            let b = sample_separated(
                |rng| sample_in_ball(rng, dim, &cfg, 0.8),
                &[&a],
                metric,
                rng,
            );
            let third = sample_separated(
                |rng| sample_in_ball(rng, dim, &cfg, 0.8),
                &[&a, &b],
                metric,
                rng,
            );
            let mut params = ParamSet::new();
            params.insert("a", vec![dim], a)?;
            params.insert("b", vec![dim], b)?;
            params.insert("c", vec![dim], third)?;
            let gamma_hyp = rng.gen_range(0.5..2.0);
            Ok((params, HyphcObjective { cfg, gamma_hyp }))
        },
        &mut rng,
        &fd,
    )?;
    lines.push(CheckLine::bounded(
        "hyphc regularizer",
        hyphc,
        fd.rel_tolerance,
    ));

    // The full objective uses a linear encoder so the loss surface is smooth
    // everywhere a finite-difference step can land.
    let objective = worst_over_configs(
        |rng| {
            let cfg = BallConfig::new(rng.gen_range(0.2..2.0), defaults::CLIP_RADIUS)?;
            let input_dim = rng.gen_range(3..=6);
            let embed_dim = rng.gen_range(3..=5);
            let dim_h = rng.gen_range(2..=4);
            let classes = rng.gen_range(2..=3);
            let per_class = 2;
            let batch = rng.gen_range(2..=4);
            let spec = EncoderSpec::linear(input_dim, embed_dim);
            let normal = Normal::new(0.0, 0.25).expect("std 0.25 is valid");

            let mut params = ParamSet::new();
            let fill = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| normal.sample(rng)).collect()
            };
            params.insert(
                "encoder.weight",
                vec![embed_dim, input_dim],
                fill(embed_dim * input_dim, rng),
            )?;
            params.insert("encoder.bias", vec![embed_dim], fill(embed_dim, rng))?;
            params.insert(
                "head.weight",
                vec![dim_h, embed_dim],
                fill(dim_h * embed_dim, rng),
            )?;
            params.insert("head.bias", vec![dim_h], fill(dim_h, rng))?;
            params.insert(
                "proxies_e",
                vec![classes, per_class, embed_dim],
                fill(classes * per_class * embed_dim, rng),
            )?;

            let features = (0..batch)
                .map(|_| sample_vector(rng, input_dim, 1.5))
                .collect();
            let labels = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
            let triplets = crate::train::sample_triplets(classes, per_class, 2, rng)?;
            let objective = TrainingObjective {
                spec,
                cfg,
                loss: random_loss_params(rng),
                classes,
                per_class,
                dim_h,
                features,
                labels,
                triplets,
            };
            Ok((params, objective))
        },
        &mut rng,
        &fd,
    )?;
    lines.push(CheckLine::bounded(
        "training objective",
        objective,
        fd.rel_tolerance,
    ));

    Ok(CheckReport {
        title: "gradient suite".into(),
        lines,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Timing measurement of the batched similarity loss across batch sizes.
#[derive(Clone, Debug)]
pub struct ScalingProbe {
    pub sizes: Vec<usize>,
    pub seconds: Vec<f64>,
    /// Least-squares slope of `ln(seconds)` against `ln(size)`.
    pub slope: f64,
}

/// Times forward plus backward of the batched similarity loss at each batch
/// size and fits a log-log slope. Batch generation happens outside the timed
/// region, and each size is timed twice with the faster run kept.
pub fn similarity_scaling_probe(
    sizes: &[usize],
    classes: usize,
    per_class: usize,
    dim_e: usize,
    dim_h: usize,
    seed: u64,
) -> Result<ScalingProbe> {
    if sizes.len() < 2 {
        return Err(ChestError::InvalidInput(format!(
            "scaling probe needs at least two batch sizes, got {}",
            sizes.len()
        )));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ChestError::InvalidInput(
            "scaling probe sizes must be strictly increasing".into(),
        ));
    }
    let cfg = BallConfig::new(defaults::CURVATURE, defaults::CLIP_RADIUS)?;
    let params = LossParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pe = Vec::new();
    let mut ph = Vec::new();
    for _ in 0..classes * per_class {
        pe.extend(sample_vector(&mut rng, dim_e, 1.5));
        ph.push(PoincarePoint::new(
            sample_in_ball(&mut rng, dim_h, &cfg, 0.8),
            &cfg,
        )?);
    }
    let proxies = ProxyViews::new(&pe, &ph, classes, per_class, dim_e)?;

    let make_batch = |n: usize, rng: &mut ChaCha8Rng| -> Result<_> {
        let mut batch_e = Vec::with_capacity(n);
        let mut batch_h = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            batch_e.push(sample_vector(rng, dim_e, 1.5));
            batch_h.push(PoincarePoint::new(
                sample_in_ball(rng, dim_h, &cfg, 0.8),
                &cfg,
            )?);
            labels.push(rng.gen_range(0..classes));
        }
        Ok((batch_e, batch_h, labels))
    };

    // Warm up allocators and code paths before anything is timed.
    let (we, wh, wl) = make_batch(sizes[0], &mut rng)?;
    losses::similarity_loss_grads(&we, &wh, &wl, &proxies, &params, &cfg)?;

    let mut seconds = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (batch_e, batch_h, labels) = make_batch(n, &mut rng)?;
        let mut best = f64::INFINITY;
        for _ in 0..2 {
            let clock = Instant::now();
            losses::similarity_loss_grads(&batch_e, &batch_h, &labels, &proxies, &params, &cfg)?;
            best = best.min(clock.elapsed().as_secs_f64());
        }
        seconds.push(best);
    }

    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = seconds.iter().map(|&t| t.ln()).collect();
    Ok(ScalingProbe {
        sizes: sizes.to_vec(),
        seconds,
        slope: least_squares_slope(&xs, &ys),
    })
}

/// Slope of the ordinary least-squares line through `(xs, ys)`.
fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_points_stay_strictly_inside_the_ball() {
        let cfg = BallConfig::new(1.7, 2.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = sample_in_ball(&mut rng, 3, &cfg, 0.9);
            let sq: f64 = x.iter().map(|v| v * v).sum();
            assert!(cfg.curvature * sq < 1.0);
            assert!(sq.sqrt() <= 0.9 / cfg.curvature.sqrt() + 1e-12);
        }
    }

    #[test]
    fn geometry_suite_passes_and_reports_every_property() {
        let report = geometry_suite(0).unwrap();
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.lines.len(), 11);
        assert!(report.render().contains("geometry suite: PASS"));
        assert!(!report.render().contains("FAIL"));
    }

    #[test]
    fn geometry_suite_is_deterministic_in_the_seed() {
        let a = geometry_suite(3).unwrap();
        let b = geometry_suite(3).unwrap();
        assert_eq!(a.lines, b.lines);
    }

    #[test]
    fn gradient_suite_passes_for_every_building_block() {
        let report = gradient_suite(0).unwrap();
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.lines.len(), 5);
    }

    #[test]
    fn gradient_suite_passes_across_seeds() {
        for seed in 1..=5 {
            let report = gradient_suite(seed).unwrap();
            assert!(report.passed(), "seed {seed}:\n{}", report.render());
        }
    }

    #[test]
    fn failed_line_renders_as_fail() {
        let report = CheckReport {
            title: "demo".into(),
            lines: vec![CheckLine::bounded("too big", 1.0, 1e-6)],
            elapsed_seconds: 0.0,
        };
        assert!(!report.passed());
        assert!(report.render().contains("demo: FAIL"));
        assert!(report.render().contains("[FAIL] too big"));
    }

    #[test]
    fn counted_line_fails_on_any_violation() {
        assert!(CheckLine::counted("clean", 0, 10).passed);
        assert!(!CheckLine::counted("dirty", 1, 10).passed);
    }

    #[test]
    fn non_finite_observation_fails_a_bounded_line() {
        assert!(!CheckLine::bounded("nan", f64::NAN, 1.0).passed);
    }

    #[test]
    fn slope_of_exact_line_is_recovered() {
        let xs: Vec<f64> = (1..=5).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_probe_reports_positive_times() {
        let probe = similarity_scaling_probe(&[40, 80], 4, 2, 6, 3, 0).unwrap();
        assert_eq!(probe.sizes, vec![40, 80]);
        assert!(probe.seconds.iter().all(|t| *t > 0.0 && t.is_finite()));
        assert!(probe.slope.is_finite());
    }

    #[test]
    fn scaling_probe_rejects_bad_size_lists() {
        assert!(similarity_scaling_probe(&[100], 4, 2, 6, 3, 0).is_err());
        assert!(similarity_scaling_probe(&[100, 100], 4, 2, 6, 3, 0).is_err());
        assert!(similarity_scaling_probe(&[200, 100], 4, 2, 6, 3, 0).is_err());
    }
}
