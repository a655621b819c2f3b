//! Verifies analytic gradients against central finite differences, first
//! on a hand-written objective and then with the full check suite.
//!
//! Run with `cargo run --release --example gradient_check`.

use chest::checks;
use chest::error::Result;
use chest::geometry::{kernel as geo, BallConfig};
use chest::grad::{backward, finite_difference_check, FdConfig, LossFunction, ParamSet, ParamView};
use chest::scalar::Real;

/// The hyperbolic distance between two free points, as an objective over
/// the parameter set {"u", "v"}. The same `eval` body serves the reverse
/// tape (S = Var) and the finite-difference probe (S = f64).
struct DistanceObjective {
    cfg: BallConfig,
}

impl LossFunction for DistanceObjective {
    fn eval<S: Real>(&self, params: &ParamView<'_, S>) -> Result<S> {
        let u = params.get("u")?;
        let v = params.get("v")?;
        Ok(geo::poincare_distance(u, v, &self.cfg))
    }
}

fn main() -> Result<()> {
    let cfg = BallConfig::new(1.0, 2.3)?;
    let mut params = ParamSet::new();
    params.insert("u", vec![3], vec![0.3, -0.2, 0.1])?;
    params.insert("v", vec![3], vec![-0.4, 0.1, 0.25])?;

    let objective = DistanceObjective { cfg };
    let report = backward(&objective, &params)?;
    println!("D_H(u, v) = {:.9}", report.loss());
    for grad in report.grads() {
        println!("  d/d{} = {:?}", grad.name(), grad.data());
    }

    let fd = finite_difference_check(&objective, &params, &FdConfig::default())?;
    println!(
        "worst relative disagreement with central differences: {:.3e}",
        fd.max_rel_error()
    );
    println!("{}", fd.summary());

    // The suite repeats this over random configurations of every
    // differentiable block, up to the full training objective.
    let report = checks::gradient_suite(7)?;
    println!();
    println!("{}", report.render());
    Ok(())
}
