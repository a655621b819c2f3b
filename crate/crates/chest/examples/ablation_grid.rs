//! Runs the eight-cell ablation grid on a small synthetic hierarchy:
//! each space alone and combined, full and single proxy banks, and the
//! regularized variants.
//!
//! Run with `cargo run --release --example ablation_grid`.

use chest::cli::{run_ablation, ExperimentConfig};
use chest::error::Result;

fn main() -> Result<()> {
    let mut config = ExperimentConfig::default();
    config.encoder.input_dim = 16;
    config.encoder.embed_dim = 12;
    config.proxies.hyperbolic_dim = 8;
    config.train.steps = 150;
    config.train.batch_size = 48;
    config.data.hierarchy.super_classes = 2;
    config.data.hierarchy.sub_per_super = 3;
    config.data.hierarchy.train_per_class = 30;
    config.data.hierarchy.test_per_class = 15;
    config.data.hierarchy.input_dim = 16;
    config.validate()?;

    // Cells print as they finish; passing an output directory instead of
    // `None` would also write per-cell artifacts and a TSV summary, the
    // same layout as `chest ablate`.
    let cells = run_ablation(&config, None)?;

    println!();
    println!(
        "{:<14} {:>5} {:>5} {:>3} {:>4}  {:>6} {:>6}",
        "cell", "eta_h", "eta_e", "K", "tau", "R@1 E", "R@1 H"
    );
    for cell in &cells {
        println!(
            "{:<14} {:>5} {:>5} {:>3} {:>4}  {:>6.3} {:>6.3}",
            cell.name,
            cell.eta_h,
            cell.eta_e,
            cell.per_class,
            cell.tau,
            cell.recall1_euclidean,
            cell.recall1_hyperbolic
        );
    }
    Ok(())
}
