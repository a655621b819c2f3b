//! A walk through the Poincare-ball primitives: distances, Mobius
//! addition, the exponential map, and the invariant check suite.
//!
//! Run with `cargo run --example geometry_tour`.

use chest::checks;
use chest::error::Result;
use chest::geometry::{
    clip_features, exp_map_zero, mobius_add, poincare_distance, BallConfig, PoincarePoint,
};

fn main() -> Result<()> {
    let cfg = BallConfig::new(1.0, 2.3)?;
    println!(
        "ball of curvature c = {} (radius {:.3}), feature clip at r = {}",
        cfg.curvature,
        cfg.ball_radius(),
        cfg.clip_radius
    );

    // Two points at Euclidean distance 0.2: near the origin the hyperbolic
    // distance is close to twice that, the flat-limit relation.
    let u = PoincarePoint::new(vec![0.1, 0.0], &cfg)?;
    let v = PoincarePoint::new(vec![0.1, 0.2], &cfg)?;
    println!(
        "near the origin:   D_H(u, v) = {:.6} for Euclidean gap 0.2",
        poincare_distance(&u, &v, &cfg)?
    );

    // The same Euclidean gap placed near the boundary is far longer:
    // the metric tensor scales by lambda_x = 2 / (1 - c |x|^2).
    let p = PoincarePoint::new(vec![0.75, 0.0], &cfg)?;
    let q = PoincarePoint::new(vec![0.75, 0.2], &cfg)?;
    println!(
        "near the boundary: D_H(p, q) = {:.6} for the same gap",
        poincare_distance(&p, &q, &cfg)?
    );

    // Mobius addition is the ball's group operation: the origin is the
    // identity and -u cancels u.
    let origin = PoincarePoint::origin(2);
    let id = mobius_add(&origin, &u, &cfg)?;
    println!(
        "0 (+) u = ({:.3}, {:.3}), identical to u",
        id.coords()[0],
        id.coords()[1]
    );
    let neg = PoincarePoint::new(u.coords().iter().map(|x| -x).collect(), &cfg)?;
    println!(
        "(-u) (+) u has norm {:.2e}, the identity element",
        mobius_add(&neg, &u, &cfg)?.norm()
    );

    // Unbounded tangent vectors land strictly inside the ball: first the
    // clip to radius r, then exp_0(x) = tanh(sqrt(c) |x|) x / (sqrt(c) |x|).
    let raw = vec![40.0, -25.0];
    let clipped = clip_features(&raw, &cfg)?;
    let mapped = exp_map_zero(clipped.coords(), &cfg)?;
    println!("exp_0(clip([40, -25])) has norm {:.6} < 1", mapped.norm());

    // The check suite samples thousands of random configurations for the
    // metric and group axioms; `chest check-geometry` prints the same.
    let report = checks::geometry_suite(7)?;
    println!();
    println!("{}", report.render());
    Ok(())
}
