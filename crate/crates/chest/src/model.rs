//! Trainable pipeline: a pluggable encoder producing Euclidean embeddings,
//! a shared mapping head (fully connected layer, feature clipping, then the
//! exponential map at the origin) producing hyperbolic embeddings, and the
//! proxy bank whose hyperbolic view passes through the very same head.
//!
//! Proxies live as unnormalized Euclidean parameters; their hyperbolic
//! images are recomputed from the current parameters on every access so the
//! losses can never observe a stale mapping.

use crate::defaults;
use crate::error::{io_context, ChestError, Result};
use crate::geometry::{BallConfig, PoincarePoint};
use crate::grad::ParamSet;
use crate::losses::ProxyViews;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Encoder architecture selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Linear,
    Mlp2,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderKind::Linear => write!(f, "linear"),
            EncoderKind::Mlp2 => write!(f, "mlp2"),
        }
    }
}

impl FromStr for EncoderKind {
    type Err = ChestError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(EncoderKind::Linear),
            "mlp2" => Ok(EncoderKind::Mlp2),
            other => Err(ChestError::InvalidInput(format!(
                "unknown encoder kind {other:?}, expected \"linear\" or \"mlp2\""
            ))),
        }
    }
}

/// Shape of the encoder mapping raw inputs to Euclidean embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    #[serde(default = "default_kind")]
    pub kind: EncoderKind,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    /// Euclidean embedding dimension.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Width of the hidden layer; required for `mlp2`, ignored for `linear`.
    #[serde(default)]
    pub hidden_dim: usize,
}

fn default_kind() -> EncoderKind {
    EncoderKind::Linear
}

fn default_input_dim() -> usize {
    64
}

fn default_embed_dim() -> usize {
    32
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::linear(default_input_dim(), default_embed_dim())
    }
}

impl EncoderSpec {
    pub fn linear(input_dim: usize, embed_dim: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::Linear,
            input_dim,
            embed_dim,
            hidden_dim: 0,
        }
    }

    pub fn mlp2(input_dim: usize, hidden_dim: usize, embed_dim: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::Mlp2,
            input_dim,
            embed_dim,
            hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(ChestError::InvalidInput(format!(
                "encoder dims must be positive, got input_dim={} embed_dim={}",
                self.input_dim, self.embed_dim
            )));
        }
        if self.kind == EncoderKind::Mlp2 && self.hidden_dim == 0 {
            return Err(ChestError::InvalidInput(
                "mlp2 encoder requires a positive hidden_dim".into(),
            ));
        }
        Ok(())
    }
}

/// Generic forward kernels shared by the f64 path and the tape path.
pub mod kernel {
    use super::{EncoderKind, EncoderSpec};
    use crate::error::Result;
    use crate::geometry::kernel as geo;
    use crate::geometry::BallConfig;
    use crate::grad::ParamView;
    use crate::scalar::Real;

    /// `W·x + b` where the input is fixed data. `w` is row-major
    /// `out_dim x in_dim`.
    pub fn affine_data<S: Real>(
        w: &[S],
        b: &[S],
        x: &[f64],
        out_dim: usize,
        in_dim: usize,
    ) -> Vec<S> {
        let mut out = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b[o];
            for (&wi, &xi) in row.iter().zip(x) {
                acc = acc + wi * xi;
            }
            out.push(acc);
        }
        out
    }

    /// `W·x + b` where the input is itself differentiable.
    pub fn affine<S: Real>(w: &[S], b: &[S], x: &[S], out_dim: usize, in_dim: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b[o];
            for (&wi, &xi) in row.iter().zip(x) {
                acc = acc + wi * xi;
            }
            out.push(acc);
        }
        out
    }

    /// Encoder forward for one raw input vector.
    pub fn encode<S: Real>(spec: &EncoderSpec, p: &ParamView<'_, S>, x: &[f64]) -> Result<Vec<S>> {
        match spec.kind {
            EncoderKind::Linear => {
                let w = p.get("encoder.weight")?;
                let b = p.get("encoder.bias")?;
                Ok(affine_data(w, b, x, spec.embed_dim, spec.input_dim))
            }
            EncoderKind::Mlp2 => {
                let w1 = p.get("encoder.w1")?;
                let b1 = p.get("encoder.b1")?;
                let w2 = p.get("encoder.w2")?;
                let b2 = p.get("encoder.b2")?;
                let hidden: Vec<S> = affine_data(w1, b1, x, spec.hidden_dim, spec.input_dim)
                    .into_iter()
                    .map(|h| h.relu())
                    .collect();
                Ok(affine(w2, b2, &hidden, spec.embed_dim, spec.hidden_dim))
            }
        }
    }

    /// Mapping head: fully connected layer, clip to the radius, exponential
    /// map at the origin. Returns ball coordinates.
    pub fn head_map<S: Real>(p: &ParamView<'_, S>, z_e: &[S], cfg: &BallConfig) -> Result<Vec<S>> {
        let w = p.get("head.weight")?;
        let b = p.get("head.bias")?;
        let pre = affine(w, b, z_e, b.len(), z_e.len());
        let clipped = geo::clip_features(&pre, cfg);
        Ok(geo::exp_map_zero(&clipped, cfg))
    }
}

/// Proxy bank snapshot with both views materialized; `h` is freshly mapped
/// through the head at construction time.
#[derive(Clone, Debug)]
pub struct OwnedProxies {
    e: Vec<f64>,
    h: Vec<PoincarePoint>,
    classes: usize,
    per_class: usize,
    dim_e: usize,
}

impl OwnedProxies {
    pub fn views(&self) -> Result<ProxyViews<'_>> {
        ProxyViews::new(&self.e, &self.h, self.classes, self.per_class, self.dim_e)
    }

    pub fn h_points(&self) -> &[PoincarePoint] {
        &self.h
    }

    pub fn h_point(&self, class: usize, proxy: usize) -> &PoincarePoint {
        &self.h[class * self.per_class + proxy]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }
}

/// Complete trainable state: encoder spec, mapping head geometry, proxy bank
/// dimensions, and the flat named parameters behind them.
#[derive(Clone, Debug)]
pub struct ChestModel {
    encoder: EncoderSpec,
    hyperbolic_dim: usize,
    classes: usize,
    per_class: usize,
    ball: BallConfig,
    params: ParamSet,
}

const CKPT_MAGIC: &str = "CHEST-CKPT v1";

impl ChestModel {
    /// Seeded initialization: weights `N(0, 0.02^2)`, biases zero, proxies
    /// `N(0, 0.01^2)`.
    pub fn init(
        encoder: EncoderSpec,
        hyperbolic_dim: usize,
        classes: usize,
        per_class: usize,
        ball: BallConfig,
        seed: u64,
    ) -> Result<Self> {
        encoder.validate()?;
        ball.validate()?;
        if hyperbolic_dim == 0 {
            return Err(ChestError::InvalidInput(
                "hyperbolic_dim must be positive".into(),
            ));
        }
        if classes == 0 || per_class == 0 {
            return Err(ChestError::EmptyProxies(format!(
                "proxy bank needs classes >= 1 and per_class >= 1, got {classes} x {per_class}"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = Normal::new(0.0, defaults::WEIGHT_INIT_STD).expect("finite std");
        let proxy = Normal::new(0.0, defaults::PROXY_INIT_STD).expect("finite std");
        let mut params = ParamSet::new();
        let randn = |rng: &mut ChaCha8Rng, dist: &Normal<f64>, n: usize| -> Vec<f64> {
            (0..n).map(|_| dist.sample(rng)).collect()
        };

        match encoder.kind {
            EncoderKind::Linear => {
                params.insert(
                    "encoder.weight",
                    vec![encoder.embed_dim, encoder.input_dim],
                    randn(&mut rng, &weight, encoder.embed_dim * encoder.input_dim),
                )?;
                params.insert(
                    "encoder.bias",
                    vec![encoder.embed_dim],
                    vec![0.0; encoder.embed_dim],
                )?;
            }
            EncoderKind::Mlp2 => {
                params.insert(
                    "encoder.w1",
                    vec![encoder.hidden_dim, encoder.input_dim],
                    randn(&mut rng, &weight, encoder.hidden_dim * encoder.input_dim),
                )?;
                params.insert(
                    "encoder.b1",
                    vec![encoder.hidden_dim],
                    vec![0.0; encoder.hidden_dim],
                )?;
                params.insert(
                    "encoder.w2",
                    vec![encoder.embed_dim, encoder.hidden_dim],
                    randn(&mut rng, &weight, encoder.embed_dim * encoder.hidden_dim),
                )?;
                params.insert(
                    "encoder.b2",
                    vec![encoder.embed_dim],
                    vec![0.0; encoder.embed_dim],
                )?;
            }
        }
        params.insert(
            "head.weight",
            vec![hyperbolic_dim, encoder.embed_dim],
            randn(&mut rng, &weight, hyperbolic_dim * encoder.embed_dim),
        )?;
        params.insert("head.bias", vec![hyperbolic_dim], vec![0.0; hyperbolic_dim])?;
        params.insert(
            "proxies_e",
            vec![classes, per_class, encoder.embed_dim],
            randn(&mut rng, &proxy, classes * per_class * encoder.embed_dim),
        )?;

        Ok(ChestModel {
            encoder,
            hyperbolic_dim,
            classes,
            per_class,
            ball,
            params,
        })
    }

    pub fn encoder(&self) -> &EncoderSpec {
        &self.encoder
    }

    pub fn ball(&self) -> &BallConfig {
        &self.ball
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim
    }

    pub fn hyperbolic_dim(&self) -> usize {
        self.hyperbolic_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Euclidean and hyperbolic embeddings of one raw input.
    pub fn embed_example(&self, x: &[f64]) -> Result<(Vec<f64>, PoincarePoint)> {
        if x.len() != self.encoder.input_dim {
            return Err(ChestError::DimensionMismatch {
                context: "embed_example input".into(),
                expected: self.encoder.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ChestError::NonFinite("embed_example input".into()));
        }
        let view = self.params.view();
        let z_e = kernel::encode(&self.encoder, &view, x)?;
        let coords = kernel::head_map(&view, &z_e, &self.ball)?;
        let z_h = PoincarePoint::new(coords, &self.ball)?;
        Ok((z_e, z_h))
    }

    /// Embeds every row of a feature matrix into both spaces.
    pub fn embed_dataset(
        &self,
        features: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, Vec<PoincarePoint>)> {
        let mut es = Vec::with_capacity(features.len());
        let mut hs = Vec::with_capacity(features.len());
        for x in features {
            let (e, h) = self.embed_example(x)?;
            es.push(e);
            hs.push(h);
        }
        Ok((es, hs))
    }

    /// Both proxy views under the current parameters; the hyperbolic side is
    /// recomputed through the head on every call.
    pub fn proxies(&self) -> Result<OwnedProxies> {
        let tensor = self.params.get("proxies_e")?;
        let dim_e = self.encoder.embed_dim;
        let view = self.params.view();
        let mut h = Vec::with_capacity(self.classes * self.per_class);
        for i in 0..self.classes * self.per_class {
            let p_e = &tensor.data()[i * dim_e..(i + 1) * dim_e];
            let coords = kernel::head_map(&view, p_e, &self.ball)?;
            h.push(PoincarePoint::new(coords, &self.ball)?);
        }
        Ok(OwnedProxies {
            e: tensor.data().to_vec(),
            h,
            classes: self.classes,
            per_class: self.per_class,
            dim_e,
        })
    }

    /// Writes the checkpoint: a version tag, model metadata, then every
    /// named tensor with a shape header and one value per line at full
    /// precision.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(CKPT_MAGIC);
        out.push('\n');
        out.push_str(&format!("encoder {}\n", self.encoder.kind));
        out.push_str(&format!("input_dim {}\n", self.encoder.input_dim));
        out.push_str(&format!("hidden_dim {}\n", self.encoder.hidden_dim));
        out.push_str(&format!("embed_dim {}\n", self.encoder.embed_dim));
        out.push_str(&format!("hyperbolic_dim {}\n", self.hyperbolic_dim));
        out.push_str(&format!("classes {}\n", self.classes));
        out.push_str(&format!("per_class {}\n", self.per_class));
        out.push_str(&format!("curvature {:.16e}\n", self.ball.curvature));
        out.push_str(&format!("clip_radius {:.16e}\n", self.ball.clip_radius));
        out.push_str(&format!("boundary_eps {:.16e}\n", self.ball.boundary_eps));
        out.push_str(&format!("arctanh_eps {:.16e}\n", self.ball.arctanh_eps));
        out.push_str(&format!("tensors {}\n", self.params.tensors().len()));
        for t in self.params.tensors() {
            out.push_str(&format!("tensor {} {}", t.name(), t.shape().len()));
            for d in t.shape() {
                out.push_str(&format!(" {d}"));
            }
            out.push('\n');
            for v in t.data() {
                out.push_str(&format!("{v:.16e}\n"));
            }
        }
        std::fs::write(path, out).map_err(|e| io_context("write", path, e))?;
        Ok(())
    }

    /// Reads a checkpoint written by [`ChestModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_context("read", path, e))?;
        let parse = |line: usize, message: String| ChestError::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l.to_string())),
                None => Err(ChestError::Parse {
                    path: path.display().to_string(),
                    line: text.lines().count() + 1,
                    message: format!("unexpected end of file, expected {expect}"),
                }),
            }
        };

        let (line, magic) = next("version tag")?;
        if magic != CKPT_MAGIC {
            return Err(parse(
                line,
                format!("bad version tag {magic:?}, expected {CKPT_MAGIC:?}"),
            ));
        }

        let mut field = |name: &str| -> Result<(usize, String)> {
            let (line, l) = next(name)?;
            match l.strip_prefix(&format!("{name} ")) {
                Some(rest) => Ok((line, rest.to_string())),
                None => Err(parse(line, format!("expected {name:?} field, got {l:?}"))),
            }
        };
        let usize_field = |r: Result<(usize, String)>| -> Result<usize> {
            let (line, s) = r?;
            s.parse::<usize>()
                .map_err(|e| parse(line, format!("bad integer {s:?}: {e}")))
        };
        let f64_field = |r: Result<(usize, String)>| -> Result<f64> {
            let (line, s) = r?;
            s.parse::<f64>()
                .map_err(|e| parse(line, format!("bad float {s:?}: {e}")))
        };

        let (kind_line, kind_s) = field("encoder")?;
        let kind = EncoderKind::from_str(&kind_s).map_err(|e| parse(kind_line, e.to_string()))?;
        let input_dim = usize_field(field("input_dim"))?;
        let hidden_dim = usize_field(field("hidden_dim"))?;
        let embed_dim = usize_field(field("embed_dim"))?;
        let hyperbolic_dim = usize_field(field("hyperbolic_dim"))?;
        let classes = usize_field(field("classes"))?;
        let per_class = usize_field(field("per_class"))?;
        let ball = BallConfig {
            curvature: f64_field(field("curvature"))?,
            clip_radius: f64_field(field("clip_radius"))?,
            boundary_eps: f64_field(field("boundary_eps"))?,
            arctanh_eps: f64_field(field("arctanh_eps"))?,
        };
        let tensor_count = usize_field(field("tensors"))?;

        let encoder = EncoderSpec {
            kind,
            input_dim,
            embed_dim,
            hidden_dim,
        };
        // Rebuild with the recorded seed-independent structure, then overwrite
        // every tensor with the stored values.
        let mut model = ChestModel::init(encoder, hyperbolic_dim, classes, per_class, ball, 0)?;
        if tensor_count != model.params.tensors().len() {
            return Err(parse(
                0,
                format!(
                    "checkpoint holds {tensor_count} tensors, model expects {}",
                    model.params.tensors().len()
                ),
            ));
        }

        for _ in 0..tensor_count {
            let (hline, header) = next("tensor header")?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(parse(
                    hline,
                    format!("expected tensor header, got {header:?}"),
                ));
            }
            let name = parts
                .next()
                .ok_or_else(|| parse(hline, "tensor header missing name".into()))?
                .to_string();
            let rank: usize = parts
                .next()
                .ok_or_else(|| parse(hline, "tensor header missing rank".into()))?
                .parse()
                .map_err(|e| parse(hline, format!("bad rank: {e}")))?;
            let dims: Vec<usize> = parts
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse(hline, format!("bad dimension: {e}")))?;
            if dims.len() != rank {
                return Err(parse(
                    hline,
                    format!(
                        "tensor {name} declares rank {rank} but lists {} dims",
                        dims.len()
                    ),
                ));
            }
            let expected = model.params.get(&name).map_err(|_| {
                parse(
                    hline,
                    format!("unexpected tensor {name:?} for this model shape"),
                )
            })?;
            if expected.shape() != dims.as_slice() {
                return Err(parse(
                    hline,
                    format!(
                        "tensor {name} has shape {dims:?}, model expects {:?}",
                        expected.shape()
                    ),
                ));
            }
            let len = expected.len();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let (vline, vs) = next("tensor value")?;
                let v: f64 = vs
                    .trim()
                    .parse()
                    .map_err(|e| parse(vline, format!("bad value {vs:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(parse(vline, format!("non-finite value in tensor {name}")));
                }
                data.push(v);
            }
            model.params.values_mut(&name)?.copy_from_slice(&data);
        }
        if let Some((i, l)) = lines.next() {
            if !l.trim().is_empty() {
                return Err(parse(i + 1, format!("trailing content {l:?}")));
            }
        }
        Ok(model)
    }
}
