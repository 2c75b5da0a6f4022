//! Diagnostic: exact integration-test scenarios on the scaled toy mixture.

use waldo::data::{features_matrix, make_synthetic_mixture, Descriptor, MixtureSpec};
use waldo::detector::detect;
use waldo::losses::{reconstruction_errors, AdvantageConfig};
use waldo::metrics::auc;
use waldo::model::{build_model, build_wae_model, ArchitectureSpec};
use waldo::trainer::{train_cora_baseline, train_wae_baseline, train_waldo, TrainConfig};
use waldo::Label;

fn toy(seed: u64) -> waldo::data::DatasetSplit {
    make_synthetic_mixture(
        &MixtureSpec::new(0.2, 1000, 2000, seed),
        &Descriptor::Gaussian {
            mean: vec![0.0, 0.0],
            scale: 1.0,
        },
        &Descriptor::Gaussian {
            mean: vec![10.0, 10.0],
            scale: 1.0,
        },
    )
    .unwrap()
}

fn main() {
    let arch = ArchitectureSpec::toy2d();

    // waldo test: data 42, seed 7
    {
        let data = toy(42);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 60,
            lr_ae: 3e-3,
            lambda: 0.1,
            seed: 7,
            eval_every: 10,
            ..TrainConfig::default()
        };
        let mut m = build_model::<f32>(arch.clone(), 7).unwrap();
        train_waldo(&mut m, &data, &cfg).unwrap();
        let r = detect(&mut m, &data.unlabeled).unwrap();
        let acc = r
            .iter()
            .zip(&data.unlabeled)
            .filter(|(r, s)| r.predicted == s.true_label)
            .count() as f64
            / r.len() as f64;
        println!("waldo d42 s7  acc {acc:.3}");
    }

    // cora test: data 44, seed 7
    {
        let data = toy(44);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 60,
            lr_ae: 3e-3,
            seed: 7,
            eval_every: 50,
            ..TrainConfig::default()
        };
        let mut m = build_model::<f32>(arch.clone(), 7).unwrap();
        train_cora_baseline(&mut m, &data, &cfg).unwrap();
        let r = detect(&mut m, &data.unlabeled).unwrap();
        let acc = r
            .iter()
            .zip(&data.unlabeled)
            .filter(|(r, s)| r.predicted == s.true_label)
            .count() as f64
            / r.len() as f64;
        println!("cora  d44 s7  acc {acc:.3}");
    }

    // wae test: data 43, candidate seeds
    {
        let data = toy(43);
        let truth: Vec<Label> = data.unlabeled.iter().map(|s| s.true_label).collect();
        for seed in 1u64..=8 {
            let cfg = TrainConfig {
                epochs: 50,
                batch_size: 60,
                lr_ae: 3e-3,
                lr_disc: 1e-3,
                lambda: 3.0,
                discriminator_steps_per_batch: 3,
                positive_only_disc: false,
                adv: AdvantageConfig::none(),
                seed,
                eval_every: 50,
                ..TrainConfig::default()
            };
            let mut m = build_wae_model::<f32>(arch.clone(), seed).unwrap();
            train_wae_baseline(&mut m, &data, &cfg).unwrap();
            let x = features_matrix(&data.unlabeled);
            let z = m.encode(&x).unwrap();
            let xi = m.decode_inlier(&z).unwrap();
            let scores = reconstruction_errors(&x, &xi);
            println!("wae   d43 s{seed}  auc {:.3}", auc(&scores, &truth).unwrap());
        }
    }
}
