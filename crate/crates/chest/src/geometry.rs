//! Poincare-ball primitives in arbitrary dimension.
//!
//! The model is the open ball `{x : c·||x||^2 < 1}` for curvature magnitude
//! `c > 0`, with conformal factor `lambda_x = 2 / (1 - c·||x||^2)`. All
//! formulas operate on plain coordinate slices; the typed layer
//! ([`PoincarePoint`], [`EuclideanVector`]) validates finiteness, dimensions,
//! and ball membership at construction so the numeric [`kernel`] functions can
//! stay branch-light and generic over [`Real`] for use under reverse-mode AD.
//!
//! Numerical guards, fixed by configuration rather than scattered constants:
//! the `arctanh` argument in the distance is clamped to `1 - arctanh_eps`,
//! the Mobius denominator is floored at 1e-8 in both forward and backward
//! passes, and points are re-projected to norm `(1 - boundary_eps)/sqrt(c)`
//! whenever rounding lands them on or outside the boundary.

use crate::defaults;
use crate::error::{ChestError, Result};

/// Norm threshold below which exponential maps return their anchor exactly
/// and distances treat the points as coincident, avoiding 0/0.
pub const TINY_NORM: f64 = 1e-12;

/// Which of the two embedding spaces a distance or metric refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Euclidean,
    Hyperbolic,
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Space::Euclidean => write!(f, "euclidean"),
            Space::Hyperbolic => write!(f, "hyperbolic"),
        }
    }
}

/// Floor applied to the Mobius-addition denominator.
pub const MOBIUS_DENOM_FLOOR: f64 = 1e-8;

/// Curvature, clipping, and boundary-guard settings for one ball.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallConfig {
    /// Curvature magnitude `c`; the ball has radius `1/sqrt(c)`.
    pub curvature: f64,
    /// Euclidean norm bound applied to features before the exponential map.
    pub clip_radius: f64,
    /// Margin kept between projected points and the boundary.
    pub boundary_eps: f64,
    /// Distance from 1 at which the `arctanh` argument is clamped.
    pub arctanh_eps: f64,
}

impl BallConfig {
    pub fn new(curvature: f64, clip_radius: f64) -> Result<Self> {
        let cfg = BallConfig {
            curvature,
            clip_radius,
            ..BallConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.curvature.is_finite() && self.curvature > 0.0) {
            return Err(ChestError::InvalidInput(format!(
                "curvature must be finite and positive, got {}",
                self.curvature
            )));
        }
        if !(self.clip_radius.is_finite() && self.clip_radius > 0.0) {
            return Err(ChestError::InvalidInput(format!(
                "clip_radius must be finite and positive, got {}",
                self.clip_radius
            )));
        }
        if !(self.boundary_eps > 0.0 && self.boundary_eps < 1.0) {
            return Err(ChestError::InvalidInput(format!(
                "boundary_eps must lie in (0, 1), got {}",
                self.boundary_eps
            )));
        }
        if !(self.arctanh_eps > 0.0 && self.arctanh_eps < 1e-6) {
            return Err(ChestError::InvalidInput(format!(
                "arctanh_eps must lie in (0, 1e-6), got {}",
                self.arctanh_eps
            )));
        }
        Ok(())
    }

    /// Radius of the ball, `1/sqrt(c)`.
    pub fn ball_radius(&self) -> f64 {
        1.0 / self.curvature.sqrt()
    }

    /// Largest norm a projected point may have, `(1 - boundary_eps)/sqrt(c)`.
    pub fn max_norm(&self) -> f64 {
        (1.0 - self.boundary_eps) / self.curvature.sqrt()
    }
}

impl Default for BallConfig {
    fn default() -> Self {
        BallConfig {
            curvature: defaults::CURVATURE,
            clip_radius: defaults::CLIP_RADIUS,
            boundary_eps: 1e-5,
            arctanh_eps: 1e-15,
        }
    }
}

fn check_finite(coords: &[f64], what: &str) -> Result<()> {
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(ChestError::InvalidInput(format!(
            "{what} contains a non-finite coordinate"
        )));
    }
    Ok(())
}

fn check_dims(a: usize, b: usize, context: &str) -> Result<()> {
    if a != b {
        return Err(ChestError::DimensionMismatch {
            context: context.to_string(),
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Point strictly inside the ball: finite coordinates with `c·||x||^2 < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
}

impl PoincarePoint {
    /// Validates finiteness and strict membership for the given curvature.
    pub fn new(coords: Vec<f64>, cfg: &BallConfig) -> Result<Self> {
        check_finite(&coords, "poincare point")?;
        let nsq: f64 = coords.iter().map(|v| v * v).sum();
        if cfg.curvature * nsq >= 1.0 {
            return Err(ChestError::Boundary(format!(
                "c*||x||^2 = {} >= 1; point is not strictly inside the ball",
                cfg.curvature * nsq
            )));
        }
        Ok(PoincarePoint { coords })
    }

    pub fn origin(dim: usize) -> Self {
        PoincarePoint {
            coords: vec![0.0; dim],
        }
    }

    /// Wraps output of a kernel that already projected into the ball.
    pub(crate) fn from_projected(coords: Vec<f64>) -> Self {
        PoincarePoint { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Euclidean norm of the coordinate vector.
    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Finite free vector in the ambient Euclidean space.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanVector {
    coords: Vec<f64>,
}

impl EuclideanVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords, "euclidean vector")?;
        Ok(EuclideanVector { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// Generic numeric core. Callers guarantee equal dimensions and finite
/// inputs; every function here is safe to record on a tape.
pub mod kernel {
    use super::{BallConfig, MOBIUS_DENOM_FLOOR, TINY_NORM};
    use crate::scalar::{dot, norm_sq, Real};

    /// Mobius addition `u (+)_c v`, projected back inside the ball if
    /// rounding lands the result on the boundary.
    pub fn mobius_add<S: Real>(u: &[S], v: &[S], cfg: &BallConfig) -> Vec<S> {
        let c = cfg.curvature;
        let uv = dot(u, v);
        let unsq = norm_sq(u);
        let vnsq = norm_sq(v);
        let mut denom = uv * (2.0 * c) + unsq * vnsq * (c * c) + 1.0;
        if denom.value() < MOBIUS_DENOM_FLOOR {
            denom = denom * 0.0 + MOBIUS_DENOM_FLOOR;
        }
        let cu = uv * (2.0 * c) + vnsq * c + 1.0;
        let cv = (unsq * c).rsub(1.0);
        let out: Vec<S> = u
            .iter()
            .zip(v)
            .map(|(&a, &b)| (a * cu + b * cv) / denom)
            .collect();
        project_to_ball(&out, cfg)
    }

    /// Geodesic distance `(2/sqrt(c)) * arctanh(sqrt(c) * ||(-u) (+)_c v||)`.
    ///
    /// Coincident points (Mobius difference below [`TINY_NORM`]) yield an
    /// exact zero; the `arctanh` argument is clamped to `1 - arctanh_eps`,
    /// with no gradient through the clamp, so the result stays finite for
    /// points arbitrarily close to the boundary.
    pub fn poincare_distance<S: Real>(u: &[S], v: &[S], cfg: &BallConfig) -> S {
        let c = cfg.curvature;
        let neg_u: Vec<S> = u.iter().map(|&a| -a).collect();
        let diff = mobius_add(&neg_u, v, cfg);
        let nsq = norm_sq(&diff);
        if nsq.value() < TINY_NORM * TINY_NORM {
            return nsq * 0.0;
        }
        let mut arg = nsq.sqrt() * c.sqrt();
        let cap = 1.0 - cfg.arctanh_eps;
        if arg.value() > cap {
            arg = arg * 0.0 + cap;
        }
        arg.atanh() * (2.0 / c.sqrt())
    }

    /// Conformal factor `lambda_x = 2 / (1 - c·||x||^2)`.
    pub fn conformal_factor<S: Real>(x: &[S], cfg: &BallConfig) -> S {
        (norm_sq(x) * cfg.curvature).rsub(1.0).rdiv(2.0)
    }

    /// Exponential map at the origin:
    /// `tanh(sqrt(c)·||x||) · x / (sqrt(c)·||x||)`.
    pub fn exp_map_zero<S: Real>(x: &[S], cfg: &BallConfig) -> Vec<S> {
        let nsq = norm_sq(x);
        if nsq.value().sqrt() < TINY_NORM {
            return x.iter().map(|&a| a * 0.0).collect();
        }
        let norm = nsq.sqrt();
        let sc = cfg.curvature.sqrt();
        let scale = (norm * sc).tanh() / (norm * sc);
        let out: Vec<S> = x.iter().map(|&a| a * scale).collect();
        project_to_ball(&out, cfg)
    }

    /// Exponential map at anchor `z`:
    /// `z (+)_c ( tanh(sqrt(c)·lambda_z·||x||/2) · x / (sqrt(c)·||x||) )`.
    pub fn exp_map_anchor<S: Real>(z: &[S], x: &[S], cfg: &BallConfig) -> Vec<S> {
        let nsq = norm_sq(x);
        if nsq.value().sqrt() < TINY_NORM {
            return z.to_vec();
        }
        let norm = nsq.sqrt();
        let sc = cfg.curvature.sqrt();
        let lambda = conformal_factor(z, cfg);
        let t = (lambda * norm * (sc / 2.0)).tanh();
        let step: Vec<S> = x.iter().map(|&a| a * (t / (norm * sc))).collect();
        mobius_add(z, &step, cfg)
    }

    /// Norm clipping applied to features before an exponential map:
    /// identity for `||x|| <= clip_radius`, radial rescale to the clip radius
    /// otherwise. The rescale keeps its full derivative through the norm.
    pub fn clip_features<S: Real>(x: &[S], cfg: &BallConfig) -> Vec<S> {
        let norm = norm_sq(x).sqrt();
        if norm.value() <= cfg.clip_radius {
            return x.to_vec();
        }
        let scale = norm.rdiv(cfg.clip_radius);
        x.iter().map(|&a| a * scale).collect()
    }

    /// Radial projection into the open ball: identity for interior points,
    /// rescale to norm `(1 - boundary_eps)/sqrt(c)` for anything on or
    /// outside the boundary.
    pub fn project_to_ball<S: Real>(x: &[S], cfg: &BallConfig) -> Vec<S> {
        let nsq = norm_sq(x);
        if cfg.curvature * nsq.value() < 1.0 {
            return x.to_vec();
        }
        let scale = nsq.sqrt().rdiv(cfg.max_norm());
        x.iter().map(|&a| a * scale).collect()
    }

    /// Euclidean distance with the same coincidence guard as the hyperbolic
    /// distance, so the gradient stays finite everywhere it is evaluated.
    pub fn euclidean_distance<S: Real>(a: &[S], b: &[S]) -> S {
        let mut nsq = (a[0] - b[0]) * (a[0] - b[0]);
        for i in 1..a.len() {
            let d = a[i] - b[i];
            nsq = nsq + d * d;
        }
        if nsq.value() < TINY_NORM * TINY_NORM {
            return nsq * 0.0;
        }
        nsq.sqrt()
    }
}

/// Mobius addition on validated points.
pub fn mobius_add(u: &PoincarePoint, v: &PoincarePoint, cfg: &BallConfig) -> Result<PoincarePoint> {
    check_dims(u.dim(), v.dim(), "mobius_add")?;
    Ok(PoincarePoint::from_projected(kernel::mobius_add(
        u.coords(),
        v.coords(),
        cfg,
    )))
}

/// Geodesic distance between validated points. Symmetric, non-negative,
/// zero only for coincident points.
pub fn poincare_distance(u: &PoincarePoint, v: &PoincarePoint, cfg: &BallConfig) -> Result<f64> {
    check_dims(u.dim(), v.dim(), "poincare_distance")?;
    Ok(kernel::poincare_distance(u.coords(), v.coords(), cfg))
}

/// Conformal factor at a validated point; 2 at the origin, growing without
/// bound toward the boundary.
pub fn conformal_factor(x: &PoincarePoint, cfg: &BallConfig) -> Result<f64> {
    let nsq: f64 = x.coords().iter().map(|v| v * v).sum();
    if cfg.curvature * nsq >= 1.0 {
        return Err(ChestError::Boundary(format!(
            "conformal factor undefined at c*||x||^2 = {}",
            cfg.curvature * nsq
        )));
    }
    Ok(kernel::conformal_factor(x.coords(), cfg))
}

/// Exponential map of a tangent vector at the origin.
pub fn exp_map_zero(x: &[f64], cfg: &BallConfig) -> Result<PoincarePoint> {
    check_finite(x, "exp_map_zero input")?;
    Ok(PoincarePoint::from_projected(kernel::exp_map_zero(x, cfg)))
}

/// Exponential map of a tangent vector at an arbitrary anchor. At `z = 0`
/// this coincides with [`exp_map_zero`]; for `||x|| < 1e-12` it returns the
/// anchor exactly.
pub fn exp_map_anchor(z: &PoincarePoint, x: &[f64], cfg: &BallConfig) -> Result<PoincarePoint> {
    check_finite(x, "exp_map_anchor input")?;
    check_dims(z.dim(), x.len(), "exp_map_anchor")?;
    Ok(PoincarePoint::from_projected(kernel::exp_map_anchor(
        z.coords(),
        x,
        cfg,
    )))
}

/// Norm clipping of raw features ahead of an exponential map.
pub fn clip_features(x: &[f64], cfg: &BallConfig) -> Result<EuclideanVector> {
    check_finite(x, "clip_features input")?;
    Ok(EuclideanVector {
        coords: kernel::clip_features(x, cfg),
    })
}

/// Projection of an arbitrary finite vector into the open ball.
pub fn project_to_ball(x: &[f64], cfg: &BallConfig) -> Result<PoincarePoint> {
    check_finite(x, "project_to_ball input")?;
    Ok(PoincarePoint::from_projected(kernel::project_to_ball(
        x, cfg,
    )))
}

/// Plain Euclidean distance between equal-length finite vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_finite(a, "euclidean_distance lhs")?;
    check_finite(b, "euclidean_distance rhs")?;
    check_dims(a.len(), b.len(), "euclidean_distance")?;
    Ok(kernel::euclidean_distance(a, b))
}
