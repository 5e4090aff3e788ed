//! Temporary calibration probe: per-class diagnostics for one seed.

use protolt::classifier::{predict_fused, predict_linear, predict_prototype};
use protolt::config::ExperimentConfig;
use protolt::experiment::run_two_stage;
use protolt::geometry::{argmax_first, dot};
use protolt::metrics::class_centers;
use protolt::pipeline::encode_image_features;
use protolt::synth;

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let lambda: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.5);

    let mut cfg = ExperimentConfig::default();
    cfg.data.seed = seed;
    cfg.train.seed = seed;
    cfg.train.loss.lambda = lambda;

    let dataset = synth::generate(&cfg.data).unwrap();
    let outcome = run_two_stage(&dataset, &cfg).unwrap();
    let encoders = &outcome.stage1.encoders;
    let bank = &outcome.stage1.bank;
    let head = &outcome.stage2.head;

    let test = encode_image_features(encoders, &dataset.test_images).unwrap();
    let centers = class_centers(&test, &dataset.test_labels).unwrap();
    let classes = dataset.class_counts.len();

    // Per-class accuracy for each classifier.
    let mut per_class = vec![[0usize; 4]; classes]; // total, lin, proto, fused
    for (i, z) in test.iter().enumerate() {
        let label = dataset.test_labels[i];
        per_class[label][0] += 1;
        let lin = argmax_first(&predict_linear(head, z).unwrap());
        let pro = argmax_first(&predict_prototype(bank, z).unwrap());
        let fus = argmax_first(&predict_fused(head, bank, &cfg.fusion, z).unwrap());
        per_class[label][1] += usize::from(lin == label);
        per_class[label][2] += usize::from(pro == label);
        per_class[label][3] += usize::from(fus == label);
    }

    println!("class count | lin proto fused | proto.center proto.min_other center.min_other");
    for class in 0..classes {
        let proto = bank.prototype(class).unwrap().as_slice();
        let proto_center = dot(proto, &centers[class]);
        let mut proto_best_other = -1.0f64;
        let mut center_min_dist = f64::INFINITY;
        for other in 0..classes {
            if other == class {
                continue;
            }
            proto_best_other = proto_best_other.max(dot(proto, &centers[other]));
            let dist: f64 = centers[class]
                .iter()
                .zip(&centers[other])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            center_min_dist = center_min_dist.min(dist);
        }
        println!(
            "{class:2} {:5} | {:4.2} {:4.2} {:4.2} | {proto_center:+.3} {proto_best_other:+.3} {center_min_dist:.3}",
            dataset.class_counts[class],
            per_class[class][1] as f64 / per_class[class][0] as f64,
            per_class[class][2] as f64 / per_class[class][0] as f64,
            per_class[class][3] as f64 / per_class[class][0] as f64,
        );
    }
    println!(
        "U10 {:.4}  A {:.4}  few lin {:.3} proto {:.3} fused {:.3}",
        outcome.stage2.fused.uniformity,
        outcome.stage2.fused.alignment,
        outcome.stage2.linear.acc_few.unwrap(),
        outcome.stage2.prototype.acc_few.unwrap(),
        outcome.stage2.fused.acc_few.unwrap(),
    );
}
