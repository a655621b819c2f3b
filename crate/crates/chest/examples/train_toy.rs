//! Trains the full model on a synthetic hierarchy and reports retrieval
//! quality in both spaces.
//!
//! Run with `cargo run --release --example train_toy`.

use chest::data::generate_hierarchy;
use chest::data::HierarchySpec;
use chest::error::Result;
use chest::eval::evaluate_both;
use chest::geometry::BallConfig;
use chest::losses::LossParams;
use chest::model::{ChestModel, EncoderSpec};
use chest::train::{run_training, TrainConfig};

fn main() -> Result<()> {
    let spec = HierarchySpec {
        super_classes: 2,
        sub_per_super: 4,
        train_per_class: 50,
        test_per_class: 25,
        input_dim: 32,
        seed: 5,
        ..HierarchySpec::default()
    };
    let (train_set, test_set) = generate_hierarchy(&spec)?;

    // A linear encoder into 16 Euclidean dimensions; the shared head maps
    // the same embedding into an 8-dimensional ball with two proxies per
    // class in each space.
    let mut model = ChestModel::init(
        EncoderSpec::linear(spec.input_dim, 16),
        8,
        train_set.classes(),
        2,
        BallConfig::default(),
        5,
    )?;

    let loss = LossParams::default();
    let train_cfg = TrainConfig {
        batch_size: 64,
        steps: 300,
        seed: 5,
        ..TrainConfig::default()
    };
    println!(
        "training {} steps on {} examples ({} classes)",
        train_cfg.steps,
        train_set.len(),
        train_set.classes()
    );
    run_training(&mut model, &train_set, &loss, &train_cfg, |m| {
        if m.step % 50 == 0 || m.step == 1 {
            println!(
                "step {:>4}: total {:.4} (hyp {:.4}, euc {:.4}, reg {:.4})",
                m.step,
                m.breakdown.total,
                m.breakdown.l_hyperbolic,
                m.breakdown.l_euclidean,
                m.breakdown.l_hyphc
            );
        }
        Ok(())
    })?;

    let (report_e, report_h) = evaluate_both(&model, &test_set, &[1, 2, 4, 8])?;
    for report in [&report_e, &report_h] {
        let recalls: Vec<String> = report
            .recall_at
            .iter()
            .map(|(k, v)| format!("R@{k} {v:.3}"))
            .collect();
        println!(
            "{:<10} {}  MAP@R {:.3}",
            report.space.to_string(),
            recalls.join("  "),
            report.map_at_r
        );
    }
    Ok(())
}
