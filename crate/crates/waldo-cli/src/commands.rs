//! Command implementations. Every artifact-producing command follows the same
//! shape: read + validate the config, realize the dataset, run per-seed work
//! under `output_dir/seed-<n>/`, and finish with a manifest declaring every
//! file written. Input datasets are only ever read.

use std::cell::RefCell;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use waldo::data::{features_matrix, true_labels, write_snapshot, DatasetSplit, Sample};
use waldo::detector::{detect, residual_scores, write_detections_csv, DetectionResult};
use waldo::generator::{
    export_embedding, fit_latent_gaussian, generate, generated_embedding_rows, generation_quality,
    real_embedding_rows, Decoder, LatentSource,
};
use waldo::losses::reconstruction_errors;
use waldo::metrics::{aggregate, auc, average_precision};
use waldo::model::{build_model, build_wae_model, ArchitectureSpec, WaldoModel};
use waldo::ot::{bound_smoke_check, theorem_coefficients};
use waldo::trainer::{
    convergence_study, run_ablation, train_cora_baseline, train_waldo, train_wae_baseline,
    Method, TrainConfig, TrainHistory,
};
use waldo::Label;

use crate::config::{load_config, ExperimentConfig, LatentSourceName, MethodName};
use crate::manifest::Manifest;

/// Reads the config plus its raw bytes (hashed into the manifest).
fn load(config_path: &Path) -> Result<(ExperimentConfig, Vec<u8>)> {
    let bytes = fs::read(config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let cfg = load_config(config_path)?;
    Ok((cfg, bytes))
}

fn build_for(method: MethodName, arch: &ArchitectureSpec, seed: u64) -> Result<WaldoModel<f32>> {
    let model = match method {
        MethodName::Wae => build_wae_model::<f32>(arch.clone(), seed)?,
        _ => build_model::<f32>(arch.clone(), seed)?,
    };
    Ok(model)
}

fn train_for(
    method: MethodName,
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    tc: &TrainConfig,
) -> Result<TrainHistory> {
    let hist = match method.as_method() {
        Method::Waldo => train_waldo(model, data, tc)?,
        Method::Wae => train_wae_baseline(model, data, tc)?,
        Method::Cora => train_cora_baseline(model, data, tc)?,
    };
    Ok(hist)
}

/// Outlier scores on `samples`: residual for dual-decoder models, inlier
/// reconstruction error for the single-decoder baseline.
fn outlier_scores(
    method: MethodName,
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<Vec<f64>> {
    if method == MethodName::Wae {
        let x = features_matrix(samples);
        let z = model.encode(&x)?;
        let x_hat = model.decode_inlier(&z)?;
        Ok(reconstruction_errors(&x, &x_hat))
    } else {
        let results = detect(model, samples)?;
        Ok(residual_scores(&results))
    }
}

/// Writes a feature matrix as CSV with a `feature_<j>` header.
fn write_matrix_csv(path: &Path, m: &Array2<f32>) -> Result<()> {
    let mut w = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("feature_{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Realizes the configured dataset and writes the three pools as sample
/// snapshots, so later commands (or other tools) can reload the exact split.
pub fn cmd_synth(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    let data = cfg.dataset.build(None, None)?;
    let dir = cfg.output_dir.join("dataset");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = Manifest::new("synth", config_path, &bytes);
    manifest.push("dataset", &data.meta.dataset);
    manifest.push("dim", data.dim);
    manifest.push("n_positive", data.positive.len());
    manifest.push("n_unlabeled", data.unlabeled.len());
    manifest.push("n_test", data.test.len());
    for (stem, pool) in [
        ("positive", &data.positive),
        ("unlabeled", &data.unlabeled),
        ("test", &data.test),
    ] {
        let path = dir.join(format!("{stem}.csv"));
        write_snapshot(&path, pool)?;
        manifest.output(format!("dataset/{stem}.csv"));
    }
    manifest.write(&cfg.output_dir)?;
    println!(
        "synth dataset={} dim={} positive={} unlabeled={} test={} dir={}",
        data.meta.dataset,
        data.dim,
        data.positive.len(),
        data.unlabeled.len(),
        data.test.len(),
        dir.display()
    );
    Ok(())
}

/// Trains one model per seed; each run directory gets the epoch history, the
/// periodic checkpoints, and the final weights.
pub fn cmd_train(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    let data = cfg.dataset.build(None, None)?;
    let arch = cfg.architecture.resolve()?;
    let mut manifest = Manifest::new("train", config_path, &bytes);
    manifest.push("method", cfg.method.as_str());
    manifest.push("dataset", &data.meta.dataset);
    manifest.push("architecture", &arch.name);
    manifest.push_seeds(&cfg.seeds);
    for &seed in &cfg.seeds {
        let dir = cfg.seed_dir(seed);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let tc = cfg.train_config(seed, Some(dir.join("checkpoints")));
        let mut model = build_for(cfg.method, &arch, seed)?;
        let hist = train_for(cfg.method, &mut model, &data, &tc)?;
        model.save_checkpoint(&dir.join("final.ckpt"))?;
        hist.write_csv(&dir.join("history.csv"))?;
        manifest.output(format!("seed-{seed}/final.ckpt"));
        manifest.output(format!("seed-{seed}/history.csv"));
        let last = hist.records.last();
        println!(
            "train seed={seed} epochs={} loss_ae={} ap_holdout={}",
            hist.records.len(),
            last.map_or("n/a".into(), |r| format!("{:.6}", r.loss_ae)),
            hist.final_ap().map_or("n/a".into(), |v| format!("{v:.4}")),
        );
    }
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

/// Scores the unlabeled pool with trained dual-decoder checkpoints: one
/// detection row per sample, classified by residual sign.
pub fn cmd_detect(config_path: &Path, checkpoint: Option<PathBuf>) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    if cfg.method == MethodName::Wae {
        bail!(
            "detect needs a dual-decoder model; the single-decoder baseline ranks by \
             reconstruction error (see eval)"
        );
    }
    let data = cfg.dataset.build(None, None)?;
    let mut manifest = Manifest::new("detect", config_path, &bytes);
    manifest.push("dataset", &data.meta.dataset);
    let run = |ckpt: &Path, out_rel: &str, manifest: &mut Manifest| -> Result<()> {
        let mut model = WaldoModel::load_checkpoint(ckpt)
            .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
        let results = detect(&mut model, &data.unlabeled)?;
        let out = cfg.output_dir.join(out_rel);
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        write_detections_csv(&out, &results)?;
        manifest.output(out_rel);
        let flagged = results.iter().filter(|r| r.predicted.is_outlier()).count();
        println!(
            "detect checkpoint={} samples={} flagged_outliers={} out={}",
            ckpt.display(),
            results.len(),
            flagged,
            out.display()
        );
        Ok(())
    };
    match checkpoint {
        Some(ckpt) => run(&ckpt, "detections.csv", &mut manifest)?,
        None => {
            manifest.push_seeds(&cfg.seeds);
            for &seed in &cfg.seeds {
                let ckpt = cfg.seed_dir(seed).join("final.ckpt");
                if !ckpt.exists() {
                    bail!(
                        "missing checkpoint {}; run `waldo train` first",
                        ckpt.display()
                    );
                }
                run(&ckpt, &format!("seed-{seed}/detections.csv"), &mut manifest)?;
            }
        }
    }
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

fn partition_by_prediction<'a>(
    samples: &'a [Sample],
    results: &[DetectionResult],
) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    let mut inliers = Vec::new();
    let mut outliers = Vec::new();
    for (s, r) in samples.iter().zip(results) {
        if r.predicted.is_outlier() {
            outliers.push(s);
        } else {
            inliers.push(s);
        }
    }
    (inliers, outliers)
}

fn owned(samples: &[&Sample]) -> Vec<Sample> {
    samples.iter().map(|&s| s.clone()).collect()
}

/// Samples both decoders from trained checkpoints. Fitted mode aims each
/// decoder at the latent region its own detected class occupies; quality is
/// the nearest-detected-sample distance distribution, and an embedding export
/// places real and generated codes side by side.
pub fn cmd_generate(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    if cfg.method == MethodName::Wae {
        bail!("generate needs a dual-decoder model; train with method waldo or cora");
    }
    let gen_cfg = cfg
        .generate
        .as_ref()
        .context("config has no [generate] block")?;
    let data = cfg.dataset.build(None, None)?;
    let mut manifest = Manifest::new("generate", config_path, &bytes);
    manifest.push("dataset", &data.meta.dataset);
    manifest.push("n", gen_cfg.n);
    manifest.push_seeds(&cfg.seeds);
    for &seed in &cfg.seeds {
        let dir = cfg.seed_dir(seed);
        let ckpt = dir.join("final.ckpt");
        if !ckpt.exists() {
            bail!(
                "missing checkpoint {}; run `waldo train` first",
                ckpt.display()
            );
        }
        let mut model = WaldoModel::load_checkpoint(&ckpt)?;
        let results = detect(&mut model, &data.unlabeled)?;
        let (pred_in, pred_out) = partition_by_prediction(&data.unlabeled, &results);
        let source_for = |model: &mut WaldoModel<f32>,
                          pool: &[&Sample],
                          role: &str|
         -> Result<LatentSource> {
            match gen_cfg.source {
                LatentSourceName::Prior => Ok(LatentSource::Prior),
                LatentSourceName::Fitted => {
                    if pool.len() < 2 {
                        bail!(
                            "seed {seed}: only {} detected {role} samples; fitted latent source \
                             needs at least 2 (set generate.source = \"prior\")",
                            pool.len()
                        );
                    }
                    Ok(LatentSource::Fitted(fit_latent_gaussian(
                        model,
                        &owned(pool),
                    )?))
                }
            }
        };
        let src_in = source_for(&mut model, &pred_in, "inlier")?;
        let src_out = source_for(&mut model, &pred_out, "outlier")?;
        let gen_in = generate(&mut model, Decoder::Inlier, &src_in, gen_cfg.n, seed)?;
        let gen_out = generate(
            &mut model,
            Decoder::Outlier,
            &src_out,
            gen_cfg.n,
            seed.wrapping_add(1),
        )?;
        write_matrix_csv(&dir.join("generated_inliers.csv"), &gen_in)?;
        write_matrix_csv(&dir.join("generated_outliers.csv"), &gen_out)?;
        manifest.output(format!("seed-{seed}/generated_inliers.csv"));
        manifest.output(format!("seed-{seed}/generated_outliers.csv"));

        // Quality: distance from each generated sample to its nearest
        // detected real sample of the same class.
        let mut quality = std::io::BufWriter::new(fs::File::create(dir.join("quality.csv"))?);
        writeln!(quality, "which,n_evaluated,n_reference,mean,median,p10,p90")?;
        for (which, gen, pool) in [("inlier", &gen_in, &pred_in), ("outlier", &gen_out, &pred_out)]
        {
            if pool.is_empty() {
                continue;
            }
            let reference = features_matrix(&owned(pool));
            let q = generation_quality(gen, &reference, gen_cfg.quality_n_eval)?;
            writeln!(
                quality,
                "{which},{},{},{},{},{},{}",
                q.n_evaluated, q.n_reference, q.mean, q.median, q.p10, q.p90
            )?;
            println!(
                "generate seed={seed} which={which} n={} nearest_real mean={:.4} p90={:.4}",
                gen.nrows(),
                q.mean,
                q.p90
            );
        }
        drop(quality);
        manifest.output(format!("seed-{seed}/quality.csv"));

        let mut rows = real_embedding_rows(&mut model, &data.unlabeled)?;
        rows.extend(generated_embedding_rows(&mut model, Decoder::Inlier, &gen_in)?);
        rows.extend(generated_embedding_rows(&mut model, Decoder::Outlier, &gen_out)?);
        export_embedding(&dir.join("embeddings.csv"), &rows)?;
        manifest.output(format!("seed-{seed}/embeddings.csv"));
    }
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

/// One results-table row per (nu, contamination, method) cell: mean and
/// spread of AUC/AUPRC over the config's seed list, scored on the held-out
/// test mixture.
pub fn cmd_eval(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    let eval = cfg.eval.as_ref().context("config has no [eval] block")?;
    let arch = cfg.architecture.resolve()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let report_path = cfg.output_dir.join("report.csv");
    let mut report = std::io::BufWriter::new(fs::File::create(&report_path)?);
    writeln!(
        report,
        "dataset,nu,contamination,method,n_runs,auc_mean,auc_std,auprc_mean,auprc_std"
    )?;
    for &nu in &eval.nus {
        for &contamination in &eval.contaminations {
            let data = cfg.dataset.build(Some(nu), Some(contamination))?;
            let truth = true_labels(&data.test);
            for &method in &eval.methods {
                let mut aucs = Vec::with_capacity(cfg.seeds.len());
                let mut aps = Vec::with_capacity(cfg.seeds.len());
                for &seed in &cfg.seeds {
                    let tc = cfg.train_config(seed, None);
                    let mut model = build_for(method, &arch, seed)?;
                    train_for(method, &mut model, &data, &tc)?;
                    let scores = outlier_scores(method, &mut model, &data.test)?;
                    aucs.push(auc(&scores, &truth)?);
                    aps.push(average_precision(&scores, &truth)?);
                }
                let (a, p) = (aggregate(&aucs), aggregate(&aps));
                writeln!(
                    report,
                    "{},{nu},{contamination},{},{},{},{},{},{}",
                    data.meta.dataset,
                    method.as_str(),
                    a.n,
                    a.mean,
                    a.std,
                    p.mean,
                    p.std
                )?;
                println!(
                    "eval nu={nu} contamination={contamination} method={} auc={:.4}+-{:.4} \
                     auprc={:.4}+-{:.4} runs={}",
                    method.as_str(),
                    a.mean,
                    a.std,
                    p.mean,
                    p.std,
                    a.n
                );
            }
        }
    }
    drop(report);
    let mut manifest = Manifest::new("eval", config_path, &bytes);
    manifest.push_seeds(&cfg.seeds);
    manifest.output("report.csv");
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

/// Four-cell toggle study (advantage x positive-only prior matching) over
/// independent model seeds derived from the first config seed.
pub fn cmd_ablate(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    let block = cfg
        .ablation
        .as_ref()
        .context("config has no [ablation] block")?;
    let data = cfg.dataset.build(None, None)?;
    let arch = cfg.architecture.resolve()?;
    let tc = cfg.train_config(cfg.seeds[0], None);
    let report = run_ablation(&arch, &data, &tc, block.n_seeds)?;
    fs::create_dir_all(&cfg.output_dir)?;
    report.write_csv(&cfg.output_dir.join("ablation.csv"))?;
    for &(adv, pos) in &[(false, false), (false, true), (true, false), (true, true)] {
        let cell = report.cell(adv, pos);
        println!(
            "ablate advantage={} positive_only={} f1={:.4}+-{:.4} latent_norm_inlier={:.3} \
             latent_norm_outlier={:.3}",
            adv as u8,
            pos as u8,
            cell.f1.mean,
            cell.f1.std,
            cell.latent_norm_inlier.mean,
            cell.latent_norm_outlier.mean
        );
    }
    let mut manifest = Manifest::new("ablate", config_path, &bytes);
    manifest.push("n_seeds", block.n_seeds);
    manifest.push("base_seed", cfg.seeds[0]);
    manifest.output("ablation.csv");
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

/// Epochs-to-reach-90%-of-final-AP comparison between the dual-decoder model
/// and the single-decoder baseline, over paired seeds.
pub fn cmd_convergence(config_path: &Path) -> Result<()> {
    let (cfg, bytes) = load(config_path)?;
    let block = cfg
        .convergence
        .as_ref()
        .context("config has no [convergence] block")?;
    let data = cfg.dataset.build(None, None)?;
    let arch = cfg.architecture.resolve()?;
    let tc = cfg.train_config(cfg.seeds[0], None);
    let report = convergence_study(&arch, &data, &tc, block.fraction, block.n_seeds)?;
    fs::create_dir_all(&cfg.output_dir)?;
    report.write_csv(&cfg.output_dir.join("convergence.csv"))?;
    match report.mean_epochs() {
        Some((dual, single)) => println!(
            "convergence fraction={} mean_epochs_waldo={dual:.2} mean_epochs_wae={single:.2} \
             runs={}",
            block.fraction,
            block.n_seeds
        ),
        None => println!(
            "convergence fraction={} incomplete: some runs never reached the threshold",
            block.fraction
        ),
    }
    let mut manifest = Manifest::new("convergence", config_path, &bytes);
    manifest.push("n_seeds", block.n_seeds);
    manifest.push("fraction", block.fraction);
    manifest.push("base_seed", cfg.seeds[0]);
    manifest.output("convergence.csv");
    manifest.write(&cfg.output_dir)?;
    Ok(())
}

/// Prints the decomposition coefficients for a given mixture weight and
/// Lipschitz constant, then exercises the empirical bound decomposition on a
/// small synthetic instance (skipped when --points 0).
pub fn cmd_theorem_check(nu: f64, gamma: f64, points: usize, seed: u64) -> Result<()> {
    let c = theorem_coefficients(nu, gamma)?;
    println!("alpha={} beta={} delta={}", c.alpha, c.beta, c.delta);
    if points == 0 {
        return Ok(());
    }
    if points > 100 {
        bail!("--points is capped at 100; the check solves exact transport problems");
    }
    // Small planar mixture plus an untrained toy model: the decomposition is
    // about measuring distances, not about model quality.
    let spec = waldo::data::MixtureSpec::new(nu, points.max(4), points, seed);
    let inlier = waldo::data::Descriptor::Gaussian {
        mean: vec![0.0, 0.0],
        scale: 1.0,
    };
    let outlier = waldo::data::Descriptor::Gaussian {
        mean: vec![6.0, 6.0],
        scale: 1.0,
    };
    let split = waldo::data::make_synthetic_mixture(&spec, &inlier, &outlier)?;
    let samples: Vec<(Vec<f64>, Label)> = split
        .unlabeled
        .iter()
        .take(points)
        .map(|s| {
            (
                s.features.iter().map(|&v| v as f64).collect(),
                s.true_label,
            )
        })
        .collect();
    let model = RefCell::new(build_model::<f32>(
        ArchitectureSpec::toy2d(),
        seed,
    )?);
    let eval1 = |f: &dyn Fn(&mut WaldoModel<f32>, &Array2<f32>) -> Array2<f32>,
                 x: &[f64]|
     -> Vec<f64> {
        let row = Array2::from_shape_vec((1, x.len()), x.iter().map(|&v| v as f32).collect())
            .expect("row shape");
        let out = f(&mut model.borrow_mut(), &row);
        out.row(0).iter().map(|&v| v as f64).collect()
    };
    let encode = |x: &[f64]| eval1(&|m, r| m.encode(r).expect("encode"), x);
    let dec_in = |z: &[f64]| eval1(&|m, r| m.decode_inlier(r).expect("decode"), z);
    let dec_out = |z: &[f64]| eval1(&|m, r| m.decode_outlier(r).expect("decode"), z);
    let report = bound_smoke_check(&encode, &dec_in, &dec_out, &samples, nu, Some(gamma), seed)?;
    for (name, value) in &report.terms {
        println!("{name}={value:.6}");
    }
    println!(
        "bound points={} lhs_surrogate={:.6} rhs={:.6} gap={:.6}",
        samples.len(),
        report.lhs_surrogate,
        report.rhs,
        report.gap
    );
    Ok(())
}
