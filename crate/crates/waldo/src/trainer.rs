//! Alternating optimization. Each minibatch first trains the discriminator
//! to separate prior draws from encoded samples, then takes one descent step
//! on the competition loss through the encoder and whichever decoder won
//! each sample. The same loop also trains the two baselines: the
//! single-decoder autoencoder and the competition-only variant without the
//! adversarial term.

use crate::data::{features_matrix, DatasetSplit, Sample};
use crate::detector;
use crate::losses::{
    clamp_prob, discriminator_objective, encoder_adversarial_loss, reconstruction_errors,
    waldo_batch_loss, AdvantageConfig, BatchLossReport, CompetitionOutcome,
};
use crate::metrics::{aggregate, average_precision, f1_from_assignment, Aggregate, MetricsError};
use crate::model::{build_model, build_wae_model, ArchitectureSpec, ModelError, WaldoModel};
use crate::nn::{clip_grad_norm, sample_standard_normal, Adam, Mode};
use crate::Label;
use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("model expects {model} input features, data has {data}")]
    DataMismatch { model: usize, data: usize },
    #[error("positive-only discriminator training needs labeled positives")]
    EmptyPositive,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which objective the shared loop optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Dual decoders + advantage + adversarial prior matching.
    Waldo,
    /// Single decoder + adversarial prior matching.
    Wae,
    /// Dual decoders + advantage, no adversarial term.
    Cora,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Waldo => write!(f, "waldo"),
            Method::Wae => write!(f, "wae"),
            Method::Cora => write!(f, "cora"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Zero epochs is a validated no-op: the model is returned untouched.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_ae: f64,
    pub lr_disc: f64,
    /// Weight of the adversarial prior-matching term. Zero disables the
    /// discriminator entirely: no updates, no prior draws, no encoder
    /// adversarial gradient.
    pub lambda: f64,
    pub adv: AdvantageConfig,
    /// Restrict prior matching to labeled positives: only their encodings
    /// feed discriminator updates and the encoder's adversarial term, so
    /// unlabeled outliers are free to land away from the prior mean.
    pub positive_only_disc: bool,
    pub discriminator_steps_per_batch: usize,
    pub seed: u64,
    /// Holdout-AP and checkpoint cadence, in epochs.
    pub eval_every: usize,
    /// Global gradient max-norm; the practical stand-in for a Lipschitz
    /// constraint on the critic.
    pub grad_clip: Option<f64>,
    /// When set, a checkpoint lands here every `eval_every` epochs.
    pub checkpoint_dir: Option<PathBuf>,
    /// Route labeled positives straight to the inlier decoder in the
    /// reconstruction term instead of letting them compete. The labeled set
    /// keeps the inlier decoder anchored to the inlier class so the decoder
    /// roles cannot swap or collapse; unlabeled samples still compete.
    pub anchor_positives: bool,
    /// Diagnostic: keep the outlier decoder out of the competition and
    /// exactly stationary, reducing the dual-decoder loop to the
    /// single-decoder baseline.
    pub freeze_outlier_decoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr_ae: 1e-3,
            lr_disc: 1e-4,
            lambda: 1.0,
            adv: AdvantageConfig::default(),
            positive_only_disc: true,
            discriminator_steps_per_batch: 1,
            seed: 0,
            eval_every: 1,
            grad_clip: Some(5.0),
            checkpoint_dir: None,
            anchor_positives: true,
            freeze_outlier_decoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr_ae > 0.0 && self.lr_ae.is_finite()) {
            return bad("autoencoder learning rate must be positive");
        }
        if !(self.lr_disc > 0.0 && self.lr_disc.is_finite()) {
            return bad("discriminator learning rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.adv.a >= 0.0 && self.adv.a.is_finite()) {
            return bad("advantage must be finite and non-negative");
        }
        if self.lambda > 0.0 && self.discriminator_steps_per_batch == 0 {
            return bad("discriminator_steps_per_batch must be at least 1 when lambda > 0");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad("grad_clip must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Sample-weighted mean of the batch objective (selected reconstruction
    /// plus lambda times the adversarial term).
    pub loss_ae: f64,
    /// Mean discriminator objective over the epoch's ascent steps; `None`
    /// when no discriminator step ran.
    pub loss_disc: Option<f64>,
    /// Unlabeled samples the competition assigned to the inlier decoder.
    pub n_assigned_inlier: usize,
    pub n_assigned_outlier: usize,
    /// Average precision of the outlier score on the held-out test split;
    /// `None` off the eval cadence or when the split is empty/one-class.
    pub ap_holdout: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Most recent holdout AP, if any epoch evaluated one.
    pub fn final_ap(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.ap_holdout)
    }

    /// First epoch whose holdout AP reached `fraction` of the final AP.
    pub fn epochs_to_reach_ap_fraction(&self, fraction: f64) -> Option<usize> {
        let target = self.final_ap()? * fraction;
        self.records
            .iter()
            .find(|r| r.ap_holdout.is_some_and(|ap| ap >= target))
            .map(|r| r.epoch)
    }

    /// Equality up to `tol` on every field except wall time.
    pub fn same_trajectory(&self, other: &TrainHistory, tol: f64) -> bool {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            _ => false,
        };
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.n_assigned_inlier == b.n_assigned_inlier
                    && a.n_assigned_outlier == b.n_assigned_outlier
                    && (a.loss_ae - b.loss_ae).abs() <= tol
                    && close(a.loss_disc, b.loss_disc)
                    && close(a.ap_holdout, b.ap_holdout)
            })
    }

    /// CSV export: epoch, loss_ae, loss_disc, n_assigned_inlier,
    /// n_assigned_outlier, ap_holdout, seconds. Missing values are empty.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "epoch,loss_ae,loss_disc,n_assigned_inlier,n_assigned_outlier,ap_holdout,seconds"
        )?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.loss_ae,
                opt(r.loss_disc),
                r.n_assigned_inlier,
                r.n_assigned_outlier,
                opt(r.ap_holdout),
                r.seconds
            )?;
        }
        w.flush()
    }
}

/// Instrumentation events surfaced to [`train_observed`] callers.
#[derive(Debug, Clone)]
pub enum TrainEvent {
    /// Ids of the samples whose encodings feed this batch's discriminator
    /// updates.
    DiscriminatorEncoded { epoch: usize, ids: Vec<String> },
}

pub fn train_waldo(
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    train_observed(model, data, cfg, Method::Waldo, None)
}

pub fn train_wae_baseline(
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    train_observed(model, data, cfg, Method::Wae, None)
}

/// Competition-only baseline: lambda is forced to zero, so the discriminator
/// stays bit-identical to its initialization.
pub fn train_cora_baseline(
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    train_observed(model, data, cfg, Method::Cora, None)
}

fn select_rows(x: &Array2<f32>, rows: &[usize]) -> Array2<f32> {
    x.select(Axis(0), rows)
}

/// Contiguous batch ranges over `n` samples. A trailing singleton merges
/// into the previous batch so normalization layers never see one row.
fn batch_ranges(n: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() >= 2 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().unwrap();
        let prev = out.pop().unwrap();
        out.push(prev.start..last.end);
    }
    out
}

/// Batch report for the single-decoder path: every sample belongs to the
/// inlier decoder, no penalty is involved (a handicap cannot flip a
/// one-horse race), and the loss stays comparable to the plain autoencoder.
fn single_decoder_report(re_inlier: &[f64], adversarial_term: f64, lambda: f64) -> BatchLossReport {
    let mean = re_inlier.iter().sum::<f64>() / re_inlier.len() as f64;
    BatchLossReport {
        outcomes: re_inlier
            .iter()
            .map(|&re| CompetitionOutcome {
                winner: Label::Inlier,
                re_inlier: re,
                re_outlier: f64::INFINITY,
                residual: f64::NEG_INFINITY,
                selected_loss: re,
            })
            .collect(),
        batch_mean_min_re: mean,
        effective_advantage: 0.0,
        reconstruction_term: mean,
        adversarial_term,
        lambda,
        total: mean + lambda * adversarial_term,
        n_assigned_inlier: re_inlier.len(),
        n_assigned_outlier: 0,
    }
}

/// Batch report with labeled positives pinned to the inlier decoder. Only
/// the rows in `competing` enter the penalized competition; the relative
/// advantage resolves against their errors alone. Anchored rows contribute
/// their inlier reconstruction error directly.
fn anchored_batch_report(
    re_inlier: &[f64],
    re_outlier: &[f64],
    competing: &[usize],
    advantage: &AdvantageConfig,
    adversarial_term: f64,
    lambda: f64,
) -> BatchLossReport {
    let n = re_inlier.len();
    let anchored = |r: usize| CompetitionOutcome {
        winner: Label::Inlier,
        re_inlier: re_inlier[r],
        re_outlier: re_outlier[r],
        residual: re_inlier[r] - re_outlier[r],
        selected_loss: re_inlier[r],
    };
    if competing.is_empty() {
        let mean = re_inlier.iter().sum::<f64>() / n as f64;
        return BatchLossReport {
            outcomes: (0..n).map(anchored).collect(),
            batch_mean_min_re: mean,
            effective_advantage: 0.0,
            reconstruction_term: mean,
            adversarial_term,
            lambda,
            total: mean + lambda * adversarial_term,
            n_assigned_inlier: n,
            n_assigned_outlier: 0,
        };
    }
    let re_i_sub: Vec<f64> = competing.iter().map(|&r| re_inlier[r]).collect();
    let re_o_sub: Vec<f64> = competing.iter().map(|&r| re_outlier[r]).collect();
    let sub = waldo_batch_loss(&re_i_sub, &re_o_sub, advantage, adversarial_term, lambda);
    let mut outcomes: Vec<CompetitionOutcome> = (0..n).map(anchored).collect();
    for (k, &r) in competing.iter().enumerate() {
        outcomes[r] = sub.outcomes[k];
    }
    let reconstruction_term = outcomes.iter().map(|o| o.selected_loss).sum::<f64>() / n as f64;
    let n_assigned_outlier = outcomes
        .iter()
        .filter(|o| o.winner == Label::Outlier)
        .count();
    BatchLossReport {
        outcomes,
        batch_mean_min_re: sub.batch_mean_min_re,
        effective_advantage: sub.effective_advantage,
        reconstruction_term,
        adversarial_term,
        lambda,
        total: reconstruction_term + lambda * adversarial_term,
        n_assigned_inlier: n - n_assigned_outlier,
        n_assigned_outlier,
    }
}

fn holdout_ap(
    model: &mut WaldoModel<f32>,
    test: Option<&(Array2<f32>, Vec<Label>)>,
    single: bool,
) -> Option<f64> {
    let (x, labels) = test?;
    let z = model.encode(x).ok()?;
    let xi = model.decode_inlier(&z).ok()?;
    let re_i = reconstruction_errors(x, &xi);
    let scores = if single {
        re_i
    } else {
        let xo = model.decode_outlier(&z).ok()?;
        let re_o = reconstruction_errors(x, &xo);
        re_i.iter().zip(&re_o).map(|(&a, &b)| a - b).collect()
    };
    average_precision(&scores, labels).ok()
}

/// The full loop with an optional instrumentation observer. `method` selects
/// the objective; see the per-method wrappers for the plain entry points.
pub fn train_observed(
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    method: Method,
    mut observer: Option<&mut dyn FnMut(TrainEvent)>,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if method == Method::Cora {
        cfg.lambda = 0.0;
    }
    let single = match method {
        Method::Wae => {
            if model.outlier_decoder.is_some() {
                return Err(TrainError::BadConfig(
                    "the single-decoder baseline takes a model without an outlier decoder".into(),
                ));
            }
            true
        }
        Method::Waldo | Method::Cora => {
            if cfg.freeze_outlier_decoder {
                true
            } else if model.outlier_decoder.is_none() {
                return Err(TrainError::BadConfig(
                    "dual-decoder training needs an outlier decoder".into(),
                ));
            } else {
                false
            }
        }
    };
    if model.input_len() != data.dim {
        return Err(TrainError::DataMismatch {
            model: model.input_len(),
            data: data.dim,
        });
    }

    let n_pos = data.positive.len();
    let n_unl = data.unlabeled.len();
    let n_total = n_pos + n_unl;
    if n_total == 0 {
        return Err(TrainError::BadConfig("no training samples".into()));
    }
    let use_disc = cfg.lambda > 0.0;
    if use_disc && cfg.positive_only_disc && n_pos == 0 {
        return Err(TrainError::EmptyPositive);
    }

    // Flat training stream: positives first, then unlabeled.
    let stream: Vec<&Sample> = data.positive.iter().chain(&data.unlabeled).collect();
    let mut x_all = Array2::<f32>::zeros((n_total, data.dim));
    for (i, s) in stream.iter().enumerate() {
        x_all.row_mut(i).assign(&ndarray::ArrayView1::from(&s.features));
    }
    let is_positive = |global: usize| global < n_pos;

    let test = if data.test.is_empty() {
        None
    } else {
        let labels = data.test.iter().map(|s| s.true_label).collect();
        Some((features_matrix(&data.test), labels))
    };

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut prior_rng = ChaCha8Rng::seed_from_u64(master.random());

    let mut adam_ae = Adam::<f32>::new(cfg.lr_ae as f32);
    let mut adam_disc = Adam::<f32>::new(cfg.lr_disc as f32);

    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n_total).collect();

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut disc_sum = 0.0;
        let mut disc_steps = 0usize;
        let mut n_in = 0usize;
        let mut n_out = 0usize;

        for range in batch_ranges(n_total, cfg.batch_size) {
            let idxs = &order[range];
            let x = select_rows(&x_all, idxs);
            let pos_rows: Vec<usize> = (0..idxs.len())
                .filter(|&r| is_positive(idxs[r]))
                .collect();

            // Discriminator ascent on fresh prior draws vs encodings. The
            // encoding pass is detached: batch statistics, but no gradient,
            // no dropout, no running-average update.
            if use_disc {
                let x_enc = if cfg.positive_only_disc {
                    (!pos_rows.is_empty()).then(|| select_rows(&x, &pos_rows))
                } else {
                    Some(x.clone())
                };
                if let Some(x_enc) = x_enc {
                    if let Some(obs) = observer.as_mut() {
                        let ids = if cfg.positive_only_disc {
                            pos_rows
                                .iter()
                                .map(|&r| stream[idxs[r]].source_id.clone())
                                .collect()
                        } else {
                            idxs.iter().map(|&g| stream[g].source_id.clone()).collect()
                        };
                        obs(TrainEvent::DiscriminatorEncoded { epoch, ids });
                    }
                    for _ in 0..cfg.discriminator_steps_per_batch {
                        let z = model.encoder.forward(&x_enc, Mode::Detached);
                        let n_e = z.nrows();
                        let prior =
                            sample_standard_normal::<f32>(n_e, model.arch.latent_dim, &mut prior_rng);
                        let stacked = concatenate(Axis(0), &[prior.view(), z.view()])
                            .expect("prior and encoding widths match");
                        let d = model.discriminator.forward(&stacked, Mode::Train);
                        let d_p = d.slice(ndarray::s![..n_e, ..]).to_owned();
                        let d_e = d.slice(ndarray::s![n_e.., ..]).to_owned();
                        let obj = discriminator_objective(&d_p, &d_e);
                        if !obj.is_finite() {
                            return Err(TrainError::Diverged {
                                epoch,
                                detail: format!("discriminator objective = {obj}"),
                            });
                        }
                        // Descend the negated objective.
                        let inv_n = 1.0 / n_e as f64;
                        let mut g = Array2::<f32>::zeros((2 * n_e, 1));
                        for i in 0..n_e {
                            g[[i, 0]] = (-inv_n / clamp_prob(d[[i, 0]] as f64)) as f32;
                            let r = n_e + i;
                            g[[r, 0]] = (inv_n / clamp_prob(1.0 - d[[r, 0]] as f64)) as f32;
                        }
                        model.discriminator.zero_grad();
                        model.discriminator.backward(&g);
                        let mut dp = model.discriminator_params();
                        if let Some(c) = cfg.grad_clip {
                            clip_grad_norm(&mut dp, c);
                        }
                        adam_disc.step(&mut dp);
                        disc_sum += obj;
                        disc_steps += 1;
                    }
                }
            }

            // Autoencoder descent.
            model.zero_grad();
            let z = model.encoder.forward(&x, Mode::Train);
            let xi = model.inlier_decoder.forward(&z, Mode::Train);
            let re_i = reconstruction_errors(&x, &xi);
            let (re_o, xo) = if single {
                (Vec::new(), None)
            } else {
                let dec = model.outlier_decoder.as_mut().expect("dual mode");
                let xo = dec.forward(&z, Mode::Train);
                (reconstruction_errors(&x, &xo), Some(xo))
            };

            // The adversarial term sees the same sample subset as the
            // discriminator updates.
            let adv_rows: Vec<usize> = if !use_disc {
                Vec::new()
            } else if cfg.positive_only_disc {
                pos_rows.clone()
            } else {
                (0..idxs.len()).collect()
            };
            let d_enc = if adv_rows.is_empty() {
                None
            } else {
                let z_sub = select_rows(&z, &adv_rows);
                Some(model.discriminator.forward(&z_sub, Mode::Train))
            };
            let adv_term = d_enc.as_ref().map_or(0.0, encoder_adversarial_loss);

            if let Some(bad) = re_i.iter().chain(&re_o).find(|v| !v.is_finite()) {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!("reconstruction error = {bad}"),
                });
            }
            let report = if single {
                single_decoder_report(&re_i, adv_term, cfg.lambda)
            } else if cfg.anchor_positives {
                let competing: Vec<usize> =
                    (0..idxs.len()).filter(|&r| !is_positive(idxs[r])).collect();
                anchored_batch_report(&re_i, &re_o, &competing, &cfg.adv, adv_term, cfg.lambda)
            } else {
                waldo_batch_loss(&re_i, &re_o, &cfg.adv, adv_term, cfg.lambda)
            };
            if !report.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!(
                        "batch loss = {} (reconstruction {}, adversarial {})",
                        report.total, report.reconstruction_term, report.adversarial_term
                    ),
                });
            }

            // Reconstruction gradient flows only through each sample's
            // winning decoder; the advantage is a detached constant.
            let scale = 2.0 / idxs.len() as f32;
            let mut g_xi = (&xi - &x) * scale;
            if !single {
                for (r, oc) in report.outcomes.iter().enumerate() {
                    if oc.winner != Label::Inlier {
                        g_xi.row_mut(r).fill(0.0);
                    }
                }
            }
            let mut g_z = model.inlier_decoder.backward(&g_xi);
            if let Some(xo) = xo {
                let mut g_xo = (&xo - &x) * scale;
                for (r, oc) in report.outcomes.iter().enumerate() {
                    if oc.winner != Label::Outlier {
                        g_xo.row_mut(r).fill(0.0);
                    }
                }
                let dec = model.outlier_decoder.as_mut().expect("dual mode");
                g_z += &dec.backward(&g_xo);
            }
            if let Some(d) = d_enc {
                let inv = cfg.lambda / adv_rows.len() as f64;
                let mut g_d = Array2::<f32>::zeros((adv_rows.len(), 1));
                for i in 0..adv_rows.len() {
                    g_d[[i, 0]] = (-inv / clamp_prob(d[[i, 0]] as f64)) as f32;
                }
                let g_zsub = model.discriminator.backward(&g_d);
                for (k, &r) in adv_rows.iter().enumerate() {
                    for (a, b) in g_z.row_mut(r).iter_mut().zip(g_zsub.row(k)) {
                        *a += *b;
                    }
                }
            }
            model.encoder.backward(&g_z);
            let mut ap = model.autoencoder_params();
            if let Some(c) = cfg.grad_clip {
                clip_grad_norm(&mut ap, c);
            }
            adam_ae.step(&mut ap);

            loss_sum += report.total * idxs.len() as f64;
            for (r, oc) in report.outcomes.iter().enumerate() {
                if !is_positive(idxs[r]) {
                    match oc.winner {
                        Label::Inlier => n_in += 1,
                        Label::Outlier => n_out += 1,
                    }
                }
            }
        }

        let on_cadence = epoch % cfg.eval_every == 0;
        let ap_holdout = if on_cadence {
            holdout_ap(model, test.as_ref(), single)
        } else {
            None
        };
        if on_cadence {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                model.save_checkpoint(&dir.join(format!("epoch-{epoch:04}.ckpt")))?;
            }
        }
        if !model.all_finite() {
            return Err(TrainError::Diverged {
                epoch,
                detail: "non-finite parameter after epoch".into(),
            });
        }
        history.records.push(EpochRecord {
            epoch,
            loss_ae: loss_sum / n_total as f64,
            loss_disc: (disc_steps > 0).then(|| disc_sum / disc_steps as f64),
            n_assigned_inlier: n_in,
            n_assigned_outlier: n_out,
            ap_holdout,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub seed: u64,
    pub f1: f64,
    /// Mean `‖encode(x)‖₂` over true inliers in the unlabeled set. The prior
    /// mean is the origin, so this is the distance from the prior mean.
    pub latent_norm_inlier: f64,
    pub latent_norm_outlier: f64,
}

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub advantage_on: bool,
    pub positive_only_on: bool,
    pub runs: Vec<AblationRun>,
    pub f1: Aggregate,
    pub latent_norm_inlier: Aggregate,
    pub latent_norm_outlier: Aggregate,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cell(&self, advantage_on: bool, positive_only_on: bool) -> &AblationCell {
        self.cells
            .iter()
            .find(|c| c.advantage_on == advantage_on && c.positive_only_on == positive_only_on)
            .expect("all four toggle combinations present")
    }

    /// CSV export, one row per run:
    /// advantage, positive_only, seed, f1, latent_norm_inlier, latent_norm_outlier.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "advantage,positive_only,seed,f1,latent_norm_inlier,latent_norm_outlier"
        )?;
        for c in &self.cells {
            for r in &c.runs {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    c.advantage_on,
                    c.positive_only_on,
                    r.seed,
                    r.f1,
                    r.latent_norm_inlier,
                    r.latent_norm_outlier
                )?;
            }
        }
        w.flush()
    }
}

fn mean_latent_norms(
    model: &mut WaldoModel<f32>,
    samples: &[Sample],
) -> Result<(f64, f64), TrainError> {
    let z = model.encode(&features_matrix(samples))?;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (s, row) in samples.iter().zip(z.rows()) {
        let k = usize::from(s.true_label.is_outlier());
        sums[k] += row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        counts[k] += 1;
    }
    let mean = |k: usize| {
        if counts[k] == 0 {
            f64::NAN
        } else {
            sums[k] / counts[k] as f64
        }
    };
    Ok((mean(0), mean(1)))
}

fn evaluate_ablation_run(
    model: &mut WaldoModel<f32>,
    data: &DatasetSplit,
    seed: u64,
) -> Result<AblationRun, TrainError> {
    let results = detector::detect(model, &data.unlabeled)?;
    let predicted: Vec<Label> = results.iter().map(|r| r.predicted).collect();
    let truth: Vec<Label> = data.unlabeled.iter().map(|s| s.true_label).collect();
    let f1 = f1_from_assignment(&predicted, &truth)?.f1;
    let (latent_norm_inlier, latent_norm_outlier) = mean_latent_norms(model, &data.unlabeled)?;
    Ok(AblationRun {
        seed,
        f1,
        latent_norm_inlier,
        latent_norm_outlier,
    })
}

/// Trains the full method over the cartesian product of the advantage and
/// positive-only toggles, `n_seeds` independent runs each, and reports
/// detection F1 plus latent distance-from-prior-mean by true class.
pub fn run_ablation(
    arch: &ArchitectureSpec,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    n_seeds: usize,
) -> Result<AblationReport, TrainError> {
    if n_seeds < 2 {
        return Err(TrainError::BadConfig("ablation needs at least 2 seeds".into()));
    }
    let adv_on = if cfg.adv.is_zero() {
        AdvantageConfig::default()
    } else {
        cfg.adv.clone()
    };
    let mut cells = Vec::new();
    for advantage_on in [false, true] {
        for positive_only_on in [false, true] {
            let mut runs = Vec::with_capacity(n_seeds);
            for r in 0..n_seeds {
                let run_seed = cfg.seed.wrapping_add(r as u64);
                let mut run_cfg = cfg.clone();
                run_cfg.seed = run_seed;
                run_cfg.adv = if advantage_on {
                    adv_on.clone()
                } else {
                    AdvantageConfig::none()
                };
                run_cfg.positive_only_disc = positive_only_on;
                run_cfg.checkpoint_dir = None;
                let mut model = build_model::<f32>(arch.clone(), run_seed)?;
                train_observed(&mut model, data, &run_cfg, Method::Waldo, None)?;
                runs.push(evaluate_ablation_run(&mut model, data, run_seed)?);
            }
            let collect = |f: fn(&AblationRun) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
            cells.push(AblationCell {
                advantage_on,
                positive_only_on,
                f1: aggregate(&collect(|r| r.f1)),
                latent_norm_inlier: aggregate(&collect(|r| r.latent_norm_inlier)),
                latent_norm_outlier: aggregate(&collect(|r| r.latent_norm_outlier)),
                runs,
            });
        }
    }
    Ok(AblationReport { cells })
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub seed: u64,
    /// First epoch whose holdout AP reached the target fraction of the final
    /// AP; `None` when the run never evaluated an AP.
    pub waldo_epochs: Option<usize>,
    pub wae_epochs: Option<usize>,
    pub waldo_final_ap: Option<f64>,
    pub wae_final_ap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub fraction: f64,
    pub runs: Vec<ConvergenceRun>,
}

impl ConvergenceReport {
    /// Mean epochs-to-target for (dual-decoder, single-decoder); `None` if
    /// any run lacks an AP trace.
    pub fn mean_epochs(&self) -> Option<(f64, f64)> {
        let n = self.runs.len() as f64;
        let mut waldo = 0.0;
        let mut wae = 0.0;
        for r in &self.runs {
            waldo += r.waldo_epochs? as f64;
            wae += r.wae_epochs? as f64;
        }
        Some((waldo / n, wae / n))
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "seed,waldo_epochs,wae_epochs,waldo_final_ap,wae_final_ap"
        )?;
        let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.seed,
                opt_u(r.waldo_epochs),
                opt_u(r.wae_epochs),
                opt_f(r.waldo_final_ap),
                opt_f(r.wae_final_ap)
            )?;
        }
        w.flush()
    }
}

/// Trains the dual-decoder method and the single-decoder baseline side by
/// side over `n_seeds` seeds and measures how many epochs each needs to
/// reach `fraction` of its own final holdout AP. Evaluation runs every epoch
/// regardless of `cfg.eval_every`.
pub fn convergence_study(
    arch: &ArchitectureSpec,
    data: &DatasetSplit,
    cfg: &TrainConfig,
    fraction: f64,
    n_seeds: usize,
) -> Result<ConvergenceReport, TrainError> {
    if n_seeds == 0 {
        return Err(TrainError::BadConfig("convergence study needs at least 1 seed".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TrainError::BadConfig("fraction must be in (0, 1]".into()));
    }
    if data.test.is_empty() {
        return Err(TrainError::BadConfig(
            "convergence study needs a held-out test split".into(),
        ));
    }
    let mut runs = Vec::with_capacity(n_seeds);
    for r in 0..n_seeds {
        let run_seed = cfg.seed.wrapping_add(r as u64);
        let mut run_cfg = cfg.clone();
        run_cfg.seed = run_seed;
        run_cfg.eval_every = 1;
        run_cfg.checkpoint_dir = None;

        let mut waldo = build_model::<f32>(arch.clone(), run_seed)?;
        let waldo_hist = train_waldo(&mut waldo, data, &run_cfg)?;
        // The single-decoder baseline keeps its canonical discriminator
        // policy: the prior constraint applies to the full data distribution,
        // not just labeled positives.
        let wae_cfg = TrainConfig {
            positive_only_disc: false,
            ..run_cfg.clone()
        };
        let mut wae = build_wae_model::<f32>(arch.clone(), run_seed)?;
        let wae_hist = train_wae_baseline(&mut wae, data, &wae_cfg)?;

        runs.push(ConvergenceRun {
            seed: run_seed,
            waldo_epochs: waldo_hist.epochs_to_reach_ap_fraction(fraction),
            wae_epochs: wae_hist.epochs_to_reach_ap_fraction(fraction),
            waldo_final_ap: waldo_hist.final_ap(),
            wae_final_ap: wae_hist.final_ap(),
        });
    }
    Ok(ConvergenceReport { fraction, runs })
}
