//! Generates the two-level synthetic hierarchy, saves both splits to CSV,
//! and reloads them to show the round trip is exact.
//!
//! Run with `cargo run --example synthetic_dataset`.

use chest::data::{generate_hierarchy, load_dataset, save_dataset, HierarchySpec, Split};
use chest::error::Result;

fn main() -> Result<()> {
    // 3 super-classes of 4 sub-classes each: labels are the 12 leaves,
    // while the super-class structure survives in the feature geometry
    // (sub-class means cluster around their super-class mean).
    let spec = HierarchySpec {
        super_classes: 3,
        sub_per_super: 4,
        train_per_class: 20,
        test_per_class: 10,
        input_dim: 16,
        seed: 42,
        ..HierarchySpec::default()
    };
    let (train, test) = generate_hierarchy(&spec)?;
    println!(
        "train: {} examples, test: {} examples, {} classes, {} features",
        train.len(),
        test.len(),
        train.classes(),
        train.input_dim()
    );
    println!("train class counts: {:?}", train.class_counts());

    // Features from the same super-class sit closer on average than pairs
    // spanning two super-classes; sub-class labels i and j share a
    // super-class exactly when i / 4 == j / 4.
    let (mut within, mut across) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..train.len() {
        for j in (i + 1)..train.len() {
            let gap: f64 = train
                .feature(i)
                .iter()
                .zip(train.feature(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let same_super =
                train.label(i) / spec.sub_per_super == train.label(j) / spec.sub_per_super;
            if same_super {
                within = (within.0 + gap, within.1 + 1);
            } else {
                across = (across.0 + gap, across.1 + 1);
            }
        }
    }
    println!(
        "mean feature distance: {:.3} within a super-class, {:.3} across",
        within.0 / within.1 as f64,
        across.0 / across.1 as f64
    );

    let dir = tempfile::tempdir()?;
    let train_path = dir.path().join("train.csv");
    let test_path = dir.path().join("test.csv");
    save_dataset(&train, &train_path)?;
    save_dataset(&test, &test_path)?;
    println!(
        "saved {} bytes of train CSV to {}",
        std::fs::metadata(&train_path)?.len(),
        train_path.display()
    );

    let (reloaded, mapping) = load_dataset(&train_path, Split::Train)?;
    assert_eq!(reloaded.features(), train.features());
    assert_eq!(reloaded.labels(), train.labels());
    println!(
        "reload is bit-exact; label mapping is the identity: {}",
        mapping.is_identity()
    );
    Ok(())
}
