//! Training loop: Adam over the trainable subset, NaN-guarded steps,
//! epoch-level fitting with synthetic resampling, checkpoints, and the
//! reflection-label ablation hook.

use crate::checkpoint::{self, MomentPair, OptimizerState};
use crate::config::{ModelConfig, TrainSettings};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::labels::{generate_unified_labels, lowpass_2d, synthesize_mixture, SynthesisParams};
use crate::losses::{total_loss, LossWeights, RandomStubExtractor};
use crate::network::Gfrrn;
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;
use ndarray::{Array3, Axis};
use std::path::{Path, PathBuf};

/// Adam with the conventional default moments. State exists only for
/// trainable parameters.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: OptimizerState::default(),
        }
    }

    /// Apply one update from the accumulated gradients; frozen parameters
    /// are never touched and get no state.
    pub fn step(&mut self, store: &ParamStore) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, entry) in store.iter() {
            if !entry.trainable {
                continue;
            }
            let grad = match entry.tensor.grad() {
                Some(g) => g,
                None => continue,
            };
            let n = grad.len();
            let pair = self
                .state
                .moments
                .entry(name.clone())
                .or_insert_with(|| MomentPair {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                });
            let mut value = entry.tensor.to_array();
            for (i, (val, &g)) in value.iter_mut().zip(grad.iter()).enumerate() {
                pair.m[i] = self.beta1 * pair.m[i] + (1.0 - self.beta1) * g;
                pair.v[i] = self.beta2 * pair.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = pair.m[i] / bc1;
                let v_hat = pair.v[i] / bc2;
                *val -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            entry.tensor.set_value(value);
        }
    }
}

/// Which reflection label the content loss trains against — the ablation
/// axis for the unified-label design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionLabelKind {
    /// Low-passed difference plus signed residual (the default).
    Unified,
    /// Raw difference I − T as the reflection label, zero residual.
    Difference,
    /// The synthesized reflection component itself; residual closes the gap.
    RawReflection,
}

fn arr3_to_tensor(a: &Array3<f64>) -> Tensor {
    let v = a
        .clone()
        .permuted_axes([2, 0, 1])
        .insert_axis(Axis(0))
        .as_standard_layout()
        .to_owned()
        .into_dyn();
    Tensor::constant(v)
}

/// One synthesized training sample, already in tensor form.
pub struct Sample {
    pub image: Tensor,
    pub t: Tensor,
    pub r: Tensor,
    pub n: Tensor,
}

/// Synthesize a mixture from (T, R) sources and build the label tensors
/// for the chosen ablation arm.
pub fn make_sample(
    t_img: &Image,
    r_img: &Image,
    params: &SynthesisParams,
    label_sigma: f64,
    kind: ReflectionLabelKind,
) -> Result<Sample> {
    let (i, labels) = synthesize_mixture(t_img, r_img, params, label_sigma)?;
    let (r, n) = match kind {
        ReflectionLabelKind::Unified => (
            arr3_to_tensor(&labels.reflection_label),
            arr3_to_tensor(&labels.residual_label),
        ),
        ReflectionLabelKind::Difference => {
            let diff = i.pixels() - t_img.pixels();
            let zero = Array3::zeros(diff.raw_dim());
            (arr3_to_tensor(&diff), arr3_to_tensor(&zero))
        }
        ReflectionLabelKind::RawReflection => {
            let raw =
                lowpass_2d(r_img.pixels(), params.reflection_blur_sigma)? * params.reflection_weight;
            let n = i.pixels() - t_img.pixels() - &raw;
            (arr3_to_tensor(&raw), arr3_to_tensor(&n))
        }
    };
    Ok(Sample {
        image: i.to_tensor(),
        t: t_img.to_tensor(),
        r,
        n,
    })
}

/// Build label tensors from an already-mixed (I, T) pair, e.g. loaded from
/// disk. `RawReflection` needs the synthetic reflection source and is not
/// available here.
pub fn make_sample_from_pair(
    i_img: &Image,
    t_img: &Image,
    label_sigma: f64,
    kind: ReflectionLabelKind,
) -> Result<Sample> {
    if !i_img.same_size(t_img) {
        return Err(Error::invalid("make_sample_from_pair: I and T sizes differ"));
    }
    let (r, n) = match kind {
        ReflectionLabelKind::Unified => {
            let labels = generate_unified_labels(i_img, t_img, label_sigma)?;
            (
                arr3_to_tensor(&labels.reflection_label),
                arr3_to_tensor(&labels.residual_label),
            )
        }
        ReflectionLabelKind::Difference => {
            let diff = i_img.pixels() - t_img.pixels();
            let zero = Array3::zeros(diff.raw_dim());
            (arr3_to_tensor(&diff), arr3_to_tensor(&zero))
        }
        ReflectionLabelKind::RawReflection => {
            return Err(Error::invalid(
                "make_sample_from_pair: raw-reflection labels need the synthetic reflection source",
            ))
        }
    };
    Ok(Sample {
        image: i_img.to_tensor(),
        t: t_img.to_tensor(),
        r,
        n,
    })
}

/// One CSV-able loss record.
#[derive(Debug, Clone)]
pub struct LossRow {
    pub step: u64,
    pub content: f64,
    pub exclusion: f64,
    pub perceptual: f64,
    pub reconstruction: f64,
    pub total: f64,
}

/// Fit bookkeeping: per-step rows plus written artifact paths.
#[derive(Debug, Default)]
pub struct FitHistory {
    pub rows: Vec<LossRow>,
    pub checkpoints: Vec<PathBuf>,
    pub trainable_params: usize,
    pub total_params: usize,
}

/// Owns the model, its parameters, and the optimizer.
pub struct Trainer {
    pub store: ParamStore,
    pub model: Gfrrn,
    pub adam: Adam,
    pub weights: LossWeights,
    pub extractor: RandomStubExtractor,
    pub config_hash: String,
}

impl Trainer {
    pub fn new(model_cfg: &ModelConfig, train: &TrainSettings) -> Result<Trainer> {
        model_cfg.validate()?;
        train.validate()?;
        let mut store = ParamStore::new();
        let model = Gfrrn::new(&mut store, model_cfg.to_network_config(), train.seed);
        store.apply_tuning_mode(model_cfg.tuning_mode);
        Ok(Trainer {
            model,
            adam: Adam::new(train.learning_rate),
            weights: train.loss_weights(),
            extractor: RandomStubExtractor::new(train.seed ^ 0x5eed),
            config_hash: model_cfg.hash(),
            store,
        })
    }

    /// Forward, loss, backward, update. Aborts with diagnostics if any
    /// loss term goes non-finite.
    pub fn train_step(&mut self, sample: &Sample) -> Result<LossRow> {
        let out = self.model.forward(&sample.image)?;
        let report = total_loss(
            &sample.image,
            &out.t_hat,
            &out.r_hat,
            &out.n_hat,
            &sample.t,
            &sample.r,
            &sample.n,
            &self.extractor,
            &self.weights,
        )?;
        let (c, e, p, r, tot) = report.values();
        let step = self.adam.state.step + 1;
        if !tot.is_finite() {
            return Err(Error::TrainingAborted {
                step: step as usize,
                reason: format!(
                    "non-finite loss: content={c} exclusion={e} perceptual={p} reconstruction={r}"
                ),
            });
        }
        self.store.zero_grads();
        report.total.backward();
        self.adam.step(&self.store);
        Ok(LossRow {
            step,
            content: c,
            exclusion: e,
            perceptual: p,
            reconstruction: r,
            total: tot,
        })
    }

    /// Epoch loop over (T, R) source pairs with fresh per-epoch synthesis
    /// seeds. Writes one checkpoint and one averaged metrics row per epoch
    /// when `out_dir` is given.
    pub fn fit(
        &mut self,
        sources: &[(Image, Image)],
        epochs: usize,
        start_epoch: u64,
        seed: u64,
        label_kind: ReflectionLabelKind,
        label_sigma: f64,
        out_dir: Option<&Path>,
    ) -> Result<FitHistory> {
        self.fit_with(sources, epochs, start_epoch, out_dir, |epoch, idx, (t, r)| {
            let params = SynthesisParams::sample(seed ^ (epoch << 20) ^ idx as u64);
            make_sample(t, r, &params, label_sigma, label_kind)
        })
    }

    /// Epoch loop over already-mixed (I, T) pairs, e.g. a dataset on disk.
    pub fn fit_pairs(
        &mut self,
        pairs: &[(Image, Image)],
        epochs: usize,
        start_epoch: u64,
        label_kind: ReflectionLabelKind,
        label_sigma: f64,
        out_dir: Option<&Path>,
    ) -> Result<FitHistory> {
        self.fit_with(pairs, epochs, start_epoch, out_dir, |_, _, (i, t)| {
            make_sample_from_pair(i, t, label_sigma, label_kind)
        })
    }

    fn fit_with(
        &mut self,
        sources: &[(Image, Image)],
        epochs: usize,
        start_epoch: u64,
        out_dir: Option<&Path>,
        mut sample_fn: impl FnMut(u64, usize, &(Image, Image)) -> Result<Sample>,
    ) -> Result<FitHistory> {
        if sources.is_empty() {
            return Err(Error::invalid("fit: no training pairs"));
        }
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
        }
        let mut history = FitHistory::default();
        let (trainable, total) = self.store.count_elements();
        history.trainable_params = trainable;
        history.total_params = total;

        let mut csv = String::from("step,content,exclusion,perceptual,reconstruction,total\n");
        for epoch in 0..epochs as u64 {
            let epoch_abs = start_epoch + epoch;
            let mut epoch_rows = Vec::new();
            for (idx, pair) in sources.iter().enumerate() {
                let sample = sample_fn(epoch_abs, idx, pair)?;
                let row = self.train_step(&sample)?;
                epoch_rows.push(row.clone());
                history.rows.push(row);
            }
            let n = epoch_rows.len() as f64;
            let avg = |f: fn(&LossRow) -> f64| epoch_rows.iter().map(f).sum::<f64>() / n;
            csv.push_str(&format!(
                "{},{:.8},{:.8},{:.8},{:.8},{:.8}\n",
                epoch_rows.last().unwrap().step,
                avg(|r| r.content),
                avg(|r| r.exclusion),
                avg(|r| r.perceptual),
                avg(|r| r.reconstruction),
                avg(|r| r.total),
            ));
            if let Some(dir) = out_dir {
                let path = dir.join(format!("checkpoint_epoch{epoch_abs}.bin"));
                checkpoint::save(
                    &path,
                    &self.store,
                    &self.adam.state,
                    &self.config_hash,
                    epoch_abs,
                )?;
                history.checkpoints.push(path);
                std::fs::write(dir.join("metrics.csv"), &csv)?;
            }
        }
        Ok(history)
    }

    /// Restore parameters and optimizer state; returns the stored epoch.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<u64> {
        let (info, opt) = checkpoint::load(path, &mut self.store, Some(&self.config_hash))?;
        self.adam.state = opt;
        Ok(info.epoch)
    }

    pub fn backbone_hash(&self) -> String {
        self.store.hash_group(ParamGroup::Backbone)
    }
}
