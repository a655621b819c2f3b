//! Retrieval metrics on a hand-built embedding set: recall@k and MAP@R
//! in the Euclidean and hyperbolic indexes over the same labels.
//!
//! Run with `cargo run --example evaluate_retrieval`.

use chest::error::Result;
use chest::eval::{map_at_r, recall_at_k, RetrievalIndex};
use chest::geometry::{BallConfig, PoincarePoint};

fn main() -> Result<()> {
    let cfg = BallConfig::default();

    // Three tight clusters of three points, one stray point that sits
    // nearer a foreign cluster than its own.
    let centers = [(-0.6, 0.0), (0.0, 0.6), (0.6, 0.0)];
    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    for (class, (cx, cy)) in centers.iter().enumerate() {
        for offset in [-0.05, 0.0, 0.05] {
            embeddings.push(vec![cx + offset, cy + offset / 2.0]);
            labels.push(class);
        }
    }
    embeddings.push(vec![0.55, 0.05]);
    labels.push(0);

    let index_e = RetrievalIndex::euclidean(embeddings.clone(), labels.clone())?;
    let points = embeddings
        .iter()
        .map(|e| PoincarePoint::new(e.clone(), &cfg))
        .collect::<Result<Vec<_>>>()?;
    let index_h = RetrievalIndex::hyperbolic(points, labels, &cfg)?;

    // Every example queries the rest of the set; recall@k asks whether
    // any of its k nearest neighbours shares its label, MAP@R averages
    // precision over the first R = |class| - 1 positions.
    for index in [&index_e, &index_h] {
        let recalls = recall_at_k(index, &[1, 2, 4], &cfg)?;
        let summary: Vec<String> = recalls
            .iter()
            .map(|(k, v)| format!("R@{k} {v:.3}"))
            .collect();
        println!(
            "{:<10} {}  MAP@R {:.3}",
            index.space().to_string(),
            summary.join("  "),
            map_at_r(index, &cfg)?
        );
    }

    // The stray point is why recall@1 sits below 1: its nearest
    // neighbour belongs to the cluster it drifted into.
    Ok(())
}
