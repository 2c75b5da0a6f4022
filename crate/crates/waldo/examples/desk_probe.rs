//! Diagnostic: desk-scale dry run of every detection-quality gate — digit
//! images for ranking/ablation/convergence, the 2-D toy for latent geometry,
//! and the skewed weekly-sales scenario for rare-pattern recall.

use std::time::Instant;
use waldo::data::digits::make_digits_analog;
use waldo::data::{make_retail_analog, make_synthetic_mixture, true_labels, Descriptor, MixtureSpec};
use waldo::detector::{detect, rank_by_inlier_re, residual_scores};
use waldo::losses::{AdvantageConfig, AdvantageMode};
use waldo::metrics::{auc, average_precision};
use waldo::model::{build_model, ArchitectureSpec};
use waldo::trainer::{convergence_study, run_ablation, train_waldo, TrainConfig};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let desk = ArchitectureSpec::desk_28x28("digits");

    if which == "all" || which == "crit1" {
        println!("== crit1: digit-0, nu=0.1, 3 seeds, 50 epochs ==");
        for seed in [1u64, 2, 3] {
            let t0 = Instant::now();
            let data = make_digits_analog(0, &MixtureSpec::new(0.1, 2000, 2000, seed)).unwrap();
            let cfg = TrainConfig {
                epochs: 50,
                batch_size: 128,
                seed,
                eval_every: 50,
                ..TrainConfig::default()
            };
            let mut model = build_model::<f32>(desk.clone(), seed).unwrap();
            train_waldo(&mut model, &data, &cfg).unwrap();
            let results = detect(&mut model, &data.unlabeled).unwrap();
            let truth = true_labels(&data.unlabeled);
            let scores = residual_scores(&results);
            println!(
                "  seed {seed}: auc {:.4} ap {:.4} ({:.0}s)",
                auc(&scores, &truth).unwrap(),
                average_precision(&scores, &truth).unwrap(),
                t0.elapsed().as_secs_f64()
            );
        }
    }

    if which == "all" || which == "crit23" {
        println!("== crit2+3: ablation grid, nu=0.05, 5 seeds, 25 epochs ==");
        let t0 = Instant::now();
        let data = make_digits_analog(0, &MixtureSpec::new(0.05, 2000, 2000, 11)).unwrap();
        let cfg = TrainConfig {
            epochs: 25,
            batch_size: 128,
            seed: 100,
            eval_every: 25,
            ..TrainConfig::default()
        };
        let report = run_ablation(&desk, &data, &cfg, 5).unwrap();
        for c in &report.cells {
            println!(
                "  adv={} pos={}: f1 {:.4}±{:.4}  |z_in| {:.3}  |z_out| {:.3}",
                c.advantage_on,
                c.positive_only_on,
                c.f1.mean,
                c.f1.std,
                c.latent_norm_inlier.mean,
                c.latent_norm_outlier.mean
            );
        }
        println!("  ({:.0}s)", t0.elapsed().as_secs_f64());
    }

    if which == "all" || which == "crit3toy" {
        println!("== crit3 toy: latent norms on the 2-D mixture ==");
        let data = make_synthetic_mixture(
            &MixtureSpec::new(0.2, 1000, 2000, 42),
            &Descriptor::Gaussian {
                mean: vec![0.0, 0.0],
                scale: 1.0,
            },
            &Descriptor::Gaussian {
                mean: vec![10.0, 10.0],
                scale: 1.0,
            },
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 60,
            lr_ae: 3e-3,
            lambda: 0.1,
            seed: 100,
            eval_every: 50,
            ..TrainConfig::default()
        };
        let report = run_ablation(&ArchitectureSpec::toy2d(), &data, &cfg, 3).unwrap();
        for c in &report.cells {
            println!(
                "  adv={} pos={}: f1 {:.4}  |z_in| {:.3}  |z_out| {:.3}",
                c.advantage_on,
                c.positive_only_on,
                c.f1.mean,
                c.latent_norm_inlier.mean,
                c.latent_norm_outlier.mean
            );
        }
    }

    if which == "all" || which == "crit4" {
        println!("== crit4: convergence, 4 seeds, 30 epochs, fraction 0.9 ==");
        let t0 = Instant::now();
        let data = make_digits_analog(0, &MixtureSpec::new(0.1, 2000, 2000, 5)).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 128,
            seed: 50,
            ..TrainConfig::default()
        };
        let report = convergence_study(&desk, &data, &cfg, 0.9, 4).unwrap();
        for r in &report.runs {
            println!(
                "  seed {}: waldo {:?} (final {:?})  wae {:?} (final {:?})",
                r.seed, r.waldo_epochs, r.waldo_final_ap, r.wae_epochs, r.wae_final_ap
            );
        }
        println!("  mean {:?}  ({:.0}s)", report.mean_epochs(), t0.elapsed().as_secs_f64());
    }

    if which == "crit1conv" {
        println!("== crit1conv: digit-0, nu=0.1, conv 28x28 stack, short runs ==");
        for (seed, epochs) in [(1u64, 2usize), (1, 3)] {
            let t0 = Instant::now();
            let data = make_digits_analog(0, &MixtureSpec::new(0.1, 2000, 2000, seed)).unwrap();
            let cfg = TrainConfig {
                epochs,
                batch_size: 128,
                seed,
                eval_every: epochs,
                ..TrainConfig::default()
            };
            let mut model = build_model::<f32>(ArchitectureSpec::mnist(), seed).unwrap();
            train_waldo(&mut model, &data, &cfg).unwrap();
            let results = detect(&mut model, &data.unlabeled).unwrap();
            let truth = true_labels(&data.unlabeled);
            let scores = residual_scores(&results);
            println!(
                "  seed {seed} epochs {epochs}: auc {:.4} ap {:.4} ({:.0}s)",
                auc(&scores, &truth).unwrap(),
                average_precision(&scores, &truth).unwrap(),
                t0.elapsed().as_secs_f64()
            );
        }
    }

    if which == "crit4nu" {
        for nu in [0.3f64, 0.5] {
            println!("== crit4nu: convergence at nu={nu}, 4 seeds, 30 epochs ==");
            let t0 = Instant::now();
            let data = make_digits_analog(0, &MixtureSpec::new(nu, 2000, 2000, 5)).unwrap();
            let cfg = TrainConfig {
                epochs: 30,
                batch_size: 128,
                seed: 50,
                ..TrainConfig::default()
            };
            let report = convergence_study(&desk, &data, &cfg, 0.9, 4).unwrap();
            for r in &report.runs {
                println!(
                    "  seed {}: waldo {:?} (final {:?})  wae {:?} (final {:?})",
                    r.seed, r.waldo_epochs, r.waldo_final_ap, r.wae_epochs, r.wae_final_ap
                );
            }
            println!("  mean {:?}  ({:.0}s)", report.mean_epochs(), t0.elapsed().as_secs_f64());
        }
    }

    if which == "crit5grid" {
        println!("== crit5grid: weekly-sales analog, advantage/epoch grid ==");
        for a in [0.1f64, 0.3, 0.5, 1.0] {
            for epochs in [50usize, 150] {
                let mut recalls = Vec::new();
                let mut aps = Vec::new();
                let mut flagged_counts = Vec::new();
                let t0 = Instant::now();
                for seed in [1u64, 2, 3] {
                    let data = make_retail_analog(10234, 62, seed).unwrap();
                    let cfg = TrainConfig {
                        epochs,
                        batch_size: 128,
                        seed,
                        eval_every: epochs,
                        adv: AdvantageConfig {
                            a,
                            mode: AdvantageMode::RelativeToBatchMean,
                        },
                        ..TrainConfig::default()
                    };
                    let mut model =
                        build_model::<f32>(ArchitectureSpec::weekly7(), seed).unwrap();
                    train_waldo(&mut model, &data, &cfg).unwrap();
                    let results = detect(&mut model, &data.unlabeled).unwrap();
                    let truth = true_labels(&data.unlabeled);
                    let n_out = truth.iter().filter(|l| l.is_outlier()).count();
                    let caught = results
                        .iter()
                        .zip(&truth)
                        .filter(|(r, t)| t.is_outlier() && r.predicted.is_outlier())
                        .count();
                    let flagged =
                        results.iter().filter(|r| r.predicted.is_outlier()).count();
                    let re_scores: Vec<f64> =
                        results.iter().map(|r| r.inlier_re_score()).collect();
                    recalls.push(caught as f64 / n_out as f64);
                    aps.push(average_precision(&re_scores, &truth).unwrap());
                    flagged_counts.push(flagged);
                }
                println!(
                    "  a={a} epochs={epochs}: recall {:?}  ap {:?}  flagged {:?}  ({:.0}s)",
                    recalls
                        .iter()
                        .map(|v| format!("{v:.3}"))
                        .collect::<Vec<_>>(),
                    aps.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
                    flagged_counts,
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }

    if which == "crit5grid2" {
        println!("== crit5grid2: weekly-sales, weak-advantage sweep ==");
        for (a, lambda) in [
            (0.0f64, 1.0f64),
            (0.0, 0.1),
            (0.02, 1.0),
            (0.05, 1.0),
            (0.05, 0.1),
        ] {
            for epochs in [50usize, 150, 300] {
                let mut lines = Vec::new();
                let t0 = Instant::now();
                for seed in [1u64, 2, 3] {
                    let data = make_retail_analog(10234, 62, seed).unwrap();
                    let cfg = TrainConfig {
                        epochs,
                        batch_size: 128,
                        seed,
                        eval_every: epochs,
                        lambda,
                        adv: AdvantageConfig {
                            a,
                            mode: AdvantageMode::RelativeToBatchMean,
                        },
                        ..TrainConfig::default()
                    };
                    let mut model =
                        build_model::<f32>(ArchitectureSpec::weekly7(), seed).unwrap();
                    train_waldo(&mut model, &data, &cfg).unwrap();
                    let results = detect(&mut model, &data.unlabeled).unwrap();
                    let truth = true_labels(&data.unlabeled);
                    let n_out = truth.iter().filter(|l| l.is_outlier()).count();
                    let caught = results
                        .iter()
                        .zip(&truth)
                        .filter(|(r, t)| t.is_outlier() && r.predicted.is_outlier())
                        .count();
                    let flagged =
                        results.iter().filter(|r| r.predicted.is_outlier()).count();
                    let re_scores: Vec<f64> =
                        results.iter().map(|r| r.inlier_re_score()).collect();
                    let ap = average_precision(&re_scores, &truth).unwrap();
                    lines.push(format!(
                        "{caught}/{n_out} ap {ap:.3} fl {flagged}"
                    ));
                }
                println!(
                    "  a={a} lam={lambda} epochs={epochs}: {}  ({:.0}s)",
                    lines.join(" | "),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }

    if which == "crit4fast" {
        println!("== crit4fast: convergence nu=0.3, batch/lr variants, 8 seeds ==");
        for (batch, lr) in [(64usize, 1e-3f64), (64, 2e-3), (128, 2e-3)] {
            let t0 = Instant::now();
            let data = make_digits_analog(0, &MixtureSpec::new(0.3, 2000, 2000, 5)).unwrap();
            let cfg = TrainConfig {
                epochs: 20,
                batch_size: batch,
                lr_ae: lr,
                seed: 50,
                ..TrainConfig::default()
            };
            let report = convergence_study(&desk, &data, &cfg, 0.9, 8).unwrap();
            let pairs: Vec<String> = report
                .runs
                .iter()
                .map(|r| format!("{:?}/{:?}", r.waldo_epochs, r.wae_epochs))
                .collect();
            println!(
                "  batch={batch} lr={lr}: {}  mean {:?}  ({:.0}s)",
                pairs.join(" "),
                report.mean_epochs(),
                t0.elapsed().as_secs_f64()
            );
        }
    }

    if which == "crit5grid3" {
        println!("== crit5grid3: weekly-sales, seed disentangle + absolute mode ==");
        let eval_run = |data_seed: u64,
                        model_seed: u64,
                        adv: AdvantageConfig,
                        lambda: f64,
                        epochs: usize,
                        arch: &ArchitectureSpec|
         -> (usize, usize, f64, usize) {
            let data = make_retail_analog(10234, 62, data_seed).unwrap();
            let cfg = TrainConfig {
                epochs,
                batch_size: 128,
                seed: model_seed,
                eval_every: epochs,
                lambda,
                adv,
                ..TrainConfig::default()
            };
            let mut model = build_model::<f32>(arch.clone(), model_seed).unwrap();
            train_waldo(&mut model, &data, &cfg).unwrap();
            let results = detect(&mut model, &data.unlabeled).unwrap();
            let truth = true_labels(&data.unlabeled);
            let n_out = truth.iter().filter(|l| l.is_outlier()).count();
            let caught = results
                .iter()
                .zip(&truth)
                .filter(|(r, t)| t.is_outlier() && r.predicted.is_outlier())
                .count();
            let flagged = results.iter().filter(|r| r.predicted.is_outlier()).count();
            let re_scores: Vec<f64> = results.iter().map(|r| r.inlier_re_score()).collect();
            let ap = average_precision(&re_scores, &truth).unwrap();
            (caught, n_out, ap, flagged)
        };

        let rel = |a| AdvantageConfig {
            a,
            mode: AdvantageMode::RelativeToBatchMean,
        };
        let abs = |a| AdvantageConfig {
            a,
            mode: AdvantageMode::Absolute,
        };
        let weekly = ArchitectureSpec::weekly7();

        println!("  -- data x model grid at rel a=0.05 lam=0.1 300ep --");
        for data_seed in [1u64, 2, 3] {
            let mut cells = Vec::new();
            for model_seed in [1u64, 2, 3] {
                let (c, n, ap, fl) = eval_run(data_seed, model_seed, rel(0.05), 0.1, 300, &weekly);
                cells.push(format!("m{model_seed}: {c}/{n} ap {ap:.3} fl {fl}"));
            }
            println!("  data {data_seed}: {}", cells.join(" | "));
        }

        println!("  -- absolute advantage, lam=1, 150ep, paired seeds --");
        for a in [0.05f64, 0.15, 0.5] {
            let mut cells = Vec::new();
            for seed in [1u64, 2, 3] {
                let (c, n, ap, fl) = eval_run(seed, seed, abs(a), 1.0, 150, &weekly);
                cells.push(format!("{c}/{n} ap {ap:.3} fl {fl}"));
            }
            println!("  a={a}: {}", cells.join(" | "));
        }

        println!("  -- capacity bump 7->[64,32]->8, rel a=0.05 lam=0.1 300ep --");
        let big = ArchitectureSpec::mlp("weekly7-big", 7, &[64, 32], 8, None, 32);
        for seed in [1u64, 2, 3] {
            let (c, n, ap, fl) = eval_run(seed, seed, rel(0.05), 0.1, 300, &big);
            println!("  seed {seed}: {c}/{n} ap {ap:.3} fl {fl}");
        }
    }

    if which == "all" || which == "crit5" {
        println!("== crit5: weekly-sales analog, defaults ==");
        for seed in [1u64, 2] {
            let t0 = Instant::now();
            let data = make_retail_analog(10234, 62, seed).unwrap();
            let cfg = TrainConfig {
                epochs: 50,
                batch_size: 128,
                seed,
                eval_every: 50,
                ..TrainConfig::default()
            };
            let mut model = build_model::<f32>(ArchitectureSpec::weekly7(), seed).unwrap();
            train_waldo(&mut model, &data, &cfg).unwrap();
            let results = detect(&mut model, &data.unlabeled).unwrap();
            let truth = true_labels(&data.unlabeled);
            let n_out = truth.iter().filter(|l| l.is_outlier()).count();
            let caught = results
                .iter()
                .zip(&truth)
                .filter(|(r, t)| t.is_outlier() && r.predicted.is_outlier())
                .count();
            let ranked = rank_by_inlier_re(&mut model, &data.unlabeled).unwrap();
            let re_scores: Vec<f64> = results.iter().map(|r| r.inlier_re_score()).collect();
            let ap = average_precision(&re_scores, &truth).unwrap();
            println!(
                "  seed {seed}: recall {caught}/{n_out}  ap(re_i) {ap:.4}  top-of-list {}  ({:.0}s)",
                ranked.first().map(String::as_str).unwrap_or(""),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
