//! Training-loop contracts: determinism, the reduction of the dual-decoder
//! loop to the single-decoder baseline, the competition-only baseline as the
//! lambda=0 special case, partition and isolation invariants, and the
//! separable toy mixture the detection guarantees are calibrated on.

use waldo::data::{make_synthetic_mixture, DatasetSplit, Descriptor, MixtureSpec};
use waldo::detector::detect;
use waldo::losses::AdvantageConfig;
use waldo::metrics::auc;
use waldo::model::{build_model, build_wae_model, ArchitectureSpec, WaldoModel};
use waldo::trainer::{
    convergence_study, run_ablation, train_cora_baseline, train_observed, train_wae_baseline,
    train_waldo, Method, TrainConfig, TrainError, TrainEvent,
};
use waldo::Label;

fn gaussians(nu: f64, n_positive: usize, n_unlabeled: usize, seed: u64) -> DatasetSplit {
    make_synthetic_mixture(
        &MixtureSpec::new(nu, n_positive, n_unlabeled, seed),
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

fn small_mixture(seed: u64) -> DatasetSplit {
    gaussians(0.25, 60, 120, seed)
}

/// Separable-by-construction instance: inliers N(0,I), outliers N((10,10),I).
fn toy_mixture(seed: u64) -> DatasetSplit {
    gaussians(0.2, 1000, 2000, seed)
}

fn quick_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    }
}

/// Bit-level snapshot of every parameter and every running-statistic block.
fn snapshot(model: &mut WaldoModel<f32>) -> Vec<(String, Vec<u32>)> {
    let mut comps = vec![
        ("encoder", &mut model.encoder),
        ("inlier_decoder", &mut model.inlier_decoder),
    ];
    if let Some(dec) = model.outlier_decoder.as_mut() {
        comps.push(("outlier_decoder", dec));
    }
    comps.push(("discriminator", &mut model.discriminator));
    let mut out = Vec::new();
    for (name, seq) in comps {
        let (params, state) = seq.blocks(name);
        for p in params {
            out.push((p.name, p.value.iter().map(|v| v.to_bits()).collect()));
        }
        for s in state {
            out.push((s.name, s.value.iter().map(|v| v.to_bits()).collect()));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn without_component<'a>(
    snap: &'a [(String, Vec<u32>)],
    component: &str,
) -> Vec<&'a (String, Vec<u32>)> {
    snap.iter()
        .filter(|(name, _)| !name.starts_with(component))
        .collect()
}

fn only_component<'a>(
    snap: &'a [(String, Vec<u32>)],
    component: &str,
) -> Vec<&'a (String, Vec<u32>)> {
    snap.iter()
        .filter(|(name, _)| name.starts_with(component))
        .collect()
}

#[test]
fn zero_epochs_is_a_noop() {
    let data = small_mixture(0);
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 1).unwrap();
    let before = snapshot(&mut model);
    let history = train_waldo(&mut model, &data, &quick_cfg(0, 3)).unwrap();
    assert!(history.records.is_empty());
    assert_eq!(snapshot(&mut model), before);
}

#[test]
fn identical_configs_give_identical_runs() {
    let data = small_mixture(1);
    let cfg = TrainConfig {
        lambda: 0.6,
        ..quick_cfg(3, 17)
    };
    let mut a = build_model::<f32>(ArchitectureSpec::toy2d(), 5).unwrap();
    let hist_a = train_waldo(&mut a, &data, &cfg).unwrap();
    let mut b = build_model::<f32>(ArchitectureSpec::toy2d(), 5).unwrap();
    let hist_b = train_waldo(&mut b, &data, &cfg).unwrap();
    assert!(hist_a.same_trajectory(&hist_b, 0.0));
    assert_eq!(snapshot(&mut a), snapshot(&mut b));
}

#[test]
fn frozen_dual_model_reduces_to_single_decoder_baseline() {
    let data = small_mixture(2);
    let base = TrainConfig {
        epochs: 2,
        batch_size: 32,
        lambda: 0.5,
        adv: AdvantageConfig::none(),
        positive_only_disc: false,
        seed: 23,
        ..TrainConfig::default()
    };

    let arch = ArchitectureSpec::toy2d();
    let mut frozen = build_model::<f32>(arch.clone(), 7).unwrap();
    let frozen_cfg = TrainConfig {
        freeze_outlier_decoder: true,
        ..base.clone()
    };
    let hist_frozen = train_waldo(&mut frozen, &data, &frozen_cfg).unwrap();

    let mut single = build_wae_model::<f32>(arch.clone(), 7).unwrap();
    let hist_single = train_wae_baseline(&mut single, &data, &base).unwrap();

    assert!(hist_frozen.same_trajectory(&hist_single, 0.0));
    let snap_frozen = snapshot(&mut frozen);
    let snap_single = snapshot(&mut single);
    assert_eq!(
        without_component(&snap_frozen, "outlier_decoder"),
        without_component(&snap_single, "outlier_decoder")
    );

    // The frozen decoder never moved off its initialization.
    let mut fresh = build_model::<f32>(arch, 7).unwrap();
    let snap_fresh = snapshot(&mut fresh);
    assert_eq!(
        only_component(&snap_frozen, "outlier_decoder"),
        only_component(&snap_fresh, "outlier_decoder")
    );
}

#[test]
fn competition_only_baseline_is_the_lambda_zero_special_case() {
    let data = small_mixture(3);
    let waldo_cfg = TrainConfig {
        lambda: 0.0,
        positive_only_disc: false,
        ..quick_cfg(3, 29)
    };
    // The baseline must force lambda to zero on its own.
    let cora_cfg = TrainConfig {
        lambda: 0.9,
        ..waldo_cfg.clone()
    };

    let arch = ArchitectureSpec::toy2d();
    let mut a = build_model::<f32>(arch.clone(), 13).unwrap();
    let hist_a = train_waldo(&mut a, &data, &waldo_cfg).unwrap();
    let mut b = build_model::<f32>(arch.clone(), 13).unwrap();
    let hist_b = train_cora_baseline(&mut b, &data, &cora_cfg).unwrap();

    assert!(hist_a.same_trajectory(&hist_b, 0.0));
    assert!(hist_a.records.iter().all(|r| r.loss_disc.is_none()));
    assert_eq!(snapshot(&mut a), snapshot(&mut b));

    // Neither run ever touched the discriminator.
    let mut fresh = build_model::<f32>(arch, 13).unwrap();
    assert_eq!(
        only_component(&snapshot(&mut a), "discriminator"),
        only_component(&snapshot(&mut fresh), "discriminator")
    );
}

#[test]
fn assignment_counts_partition_the_unlabeled_set() {
    let data = small_mixture(4);
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 9).unwrap();
    let history = train_waldo(&mut model, &data, &quick_cfg(3, 31)).unwrap();
    assert_eq!(history.records.len(), 3);
    for r in &history.records {
        assert_eq!(r.n_assigned_inlier + r.n_assigned_outlier, data.unlabeled.len());
    }
}

#[test]
fn positive_only_flag_limits_discriminator_inputs_to_positives() {
    let data = small_mixture(5);
    let positive_ids: std::collections::HashSet<&str> = data
        .positive
        .iter()
        .map(|s| s.source_id.as_str())
        .collect();

    let run = |positive_only: bool| -> Vec<String> {
        let cfg = TrainConfig {
            positive_only_disc: positive_only,
            ..quick_cfg(2, 41)
        };
        let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 11).unwrap();
        let mut seen = Vec::new();
        let mut observer = |e: TrainEvent| {
            let TrainEvent::DiscriminatorEncoded { ids, .. } = e;
            seen.extend(ids);
        };
        train_observed(&mut model, &data, &cfg, Method::Waldo, Some(&mut observer)).unwrap();
        seen
    };

    let seen_on = run(true);
    assert!(!seen_on.is_empty());
    assert!(seen_on.iter().all(|id| positive_ids.contains(id.as_str())));

    let seen_off = run(false);
    assert!(seen_off.iter().any(|id| !positive_ids.contains(id.as_str())));
}

#[test]
fn toy_mixture_assignments_recover_hidden_labels() {
    let data = toy_mixture(42);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 60,
        lr_ae: 3e-3,
        lambda: 0.1,
        seed: 7,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 7).unwrap();
    let history = train_waldo(&mut model, &data, &cfg).unwrap();
    assert_eq!(history.records.len(), 50);

    let results = detect(&mut model, &data.unlabeled).unwrap();
    let correct = results
        .iter()
        .zip(&data.unlabeled)
        .filter(|(r, s)| r.predicted == s.true_label)
        .count();
    let accuracy = correct as f64 / data.unlabeled.len() as f64;
    assert!(
        accuracy >= 0.95,
        "assignment accuracy {accuracy} below 0.95"
    );
}

#[test]
fn toy_mixture_single_decoder_baseline_ranks_outliers_high() {
    let data = toy_mixture(43);
    // Full-distribution prior matching: the single decoder only scores
    // outliers high when the adversarial term squeezes every latent into the
    // prior region, so the majority class wins the decoder.
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 60,
        lr_ae: 3e-3,
        lr_disc: 1e-3,
        lambda: 3.0,
        discriminator_steps_per_batch: 3,
        positive_only_disc: false,
        adv: AdvantageConfig::none(),
        seed: 8,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let mut model = build_wae_model::<f32>(ArchitectureSpec::toy2d(), 8).unwrap();
    train_wae_baseline(&mut model, &data, &cfg).unwrap();

    let x = waldo::data::features_matrix(&data.unlabeled);
    let z = model.encode(&x).unwrap();
    let xi = model.decode_inlier(&z).unwrap();
    let scores = waldo::losses::reconstruction_errors(&x, &xi);
    let labels: Vec<Label> = data.unlabeled.iter().map(|s| s.true_label).collect();
    let auc_val = auc(&scores, &labels).unwrap();
    assert!(auc_val >= 0.9, "single-decoder AUC {auc_val} below 0.9");
}

#[test]
fn toy_mixture_competition_only_baseline_assigns_well() {
    let data = toy_mixture(44);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 60,
        lr_ae: 3e-3,
        seed: 7,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 7).unwrap();
    train_cora_baseline(&mut model, &data, &cfg).unwrap();

    let results = detect(&mut model, &data.unlabeled).unwrap();
    let correct = results
        .iter()
        .zip(&data.unlabeled)
        .filter(|(r, s)| r.predicted == s.true_label)
        .count();
    let accuracy = correct as f64 / data.unlabeled.len() as f64;
    assert!(accuracy >= 0.9, "assignment accuracy {accuracy} below 0.9");
}

#[test]
fn runaway_learning_rate_aborts_with_divergence_error() {
    let data = small_mixture(6);
    let cfg = TrainConfig {
        lr_ae: 1e20,
        grad_clip: None,
        ..quick_cfg(5, 3)
    };
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 2).unwrap();
    let err = train_waldo(&mut model, &data, &cfg).unwrap_err();
    assert!(matches!(err, TrainError::Diverged { .. }), "got {err}");
}

#[test]
fn method_preconditions_are_enforced() {
    let data = small_mixture(7);
    let cfg = quick_cfg(1, 0);

    let mut dual = build_model::<f32>(ArchitectureSpec::toy2d(), 0).unwrap();
    assert!(matches!(
        train_wae_baseline(&mut dual, &data, &cfg),
        Err(TrainError::BadConfig(_))
    ));

    let mut single = build_wae_model::<f32>(ArchitectureSpec::toy2d(), 0).unwrap();
    assert!(matches!(
        train_waldo(&mut single, &data, &cfg),
        Err(TrainError::BadConfig(_))
    ));

    let mut no_positives = data.clone();
    no_positives.positive.clear();
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 0).unwrap();
    assert!(matches!(
        train_waldo(&mut model, &no_positives, &cfg),
        Err(TrainError::EmptyPositive)
    ));

    let mut mismatch = build_model::<f32>(ArchitectureSpec::weekly7(), 0).unwrap();
    assert!(matches!(
        train_waldo(&mut mismatch, &data, &cfg),
        Err(TrainError::DataMismatch { model: 7, data: 2 })
    ));
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let data = small_mixture(8);
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 1).unwrap();
    let history = train_waldo(&mut model, &data, &quick_cfg(4, 19)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    history.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,loss_ae,loss_disc,n_assigned_inlier,n_assigned_outlier,ap_holdout,seconds"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn checkpoints_land_on_the_eval_cadence() {
    let data = small_mixture(9);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        eval_every: 2,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..quick_cfg(4, 27)
    };
    let mut model = build_model::<f32>(ArchitectureSpec::toy2d(), 3).unwrap();
    train_waldo(&mut model, &data, &cfg).unwrap();

    assert!(!dir.path().join("epoch-0001.ckpt").exists());
    assert!(dir.path().join("epoch-0002.ckpt").exists());
    assert!(!dir.path().join("epoch-0003.ckpt").exists());
    assert!(dir.path().join("epoch-0004.ckpt").exists());

    // The last checkpoint is the final model state.
    let mut loaded = WaldoModel::load_checkpoint(&dir.path().join("epoch-0004.ckpt")).unwrap();
    assert_eq!(snapshot(&mut loaded), snapshot(&mut model));
}

#[test]
fn ablation_covers_the_toggle_grid() {
    let data = small_mixture(10);
    let cfg = quick_cfg(2, 100);
    let report = run_ablation(&ArchitectureSpec::toy2d(), &data, &cfg, 2).unwrap();
    assert_eq!(report.cells.len(), 4);
    let mut combos: Vec<(bool, bool)> = report
        .cells
        .iter()
        .map(|c| (c.advantage_on, c.positive_only_on))
        .collect();
    combos.sort();
    assert_eq!(
        combos,
        vec![(false, false), (false, true), (true, false), (true, true)]
    );
    for cell in &report.cells {
        assert_eq!(cell.runs.len(), 2);
        assert_eq!(cell.f1.n, 2);
        assert!(cell.f1.mean.is_finite());
        assert!(cell.latent_norm_inlier.mean.is_finite());
        assert!(cell.latent_norm_outlier.mean.is_finite());
    }
    assert!(matches!(
        run_ablation(&ArchitectureSpec::toy2d(), &data, &cfg, 1),
        Err(TrainError::BadConfig(_))
    ));
}

#[test]
fn convergence_study_reports_epochs_to_target() {
    let data = small_mixture(11);
    let cfg = quick_cfg(3, 200);
    let report = convergence_study(&ArchitectureSpec::toy2d(), &data, &cfg, 0.9, 1).unwrap();
    assert_eq!(report.runs.len(), 1);
    let run = &report.runs[0];
    assert!(run.waldo_final_ap.is_some());
    assert!(run.wae_final_ap.is_some());
    assert!(run.waldo_epochs.is_some_and(|e| (1..=3).contains(&e)));
    assert!(run.wae_epochs.is_some_and(|e| (1..=3).contains(&e)));
    assert!(report.mean_epochs().is_some());
}
