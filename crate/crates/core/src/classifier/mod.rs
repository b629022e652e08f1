//! 1D CNN signal classifier: configuration, training, evaluation and
//! serialization.
//!
//! Training is deterministic: given the same seed, datasets and config, two
//! runs produce bitwise-identical weights and histories on any thread
//! count, because per-sample work is sequential and cross-sample
//! reductions run in a fixed order.

pub mod adam;
pub mod gradcheck;
mod incremental;
mod io;
pub mod metrics;
pub mod network;
pub mod real;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::preprocessor::{
    self, ClassEntry, DatasetSpec, FeatureTensor, Label, LabeledDataset, NormStats, CHANNELS,
};
use crate::stream::latency_report;

pub use adam::Adam;
pub use gradcheck::{gradient_check, GradCheckReport};
pub use incremental::IncrementalForward;
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use metrics::{confusion_matrix, ClassMetrics, EvalReport};
pub use network::{Architecture, Network};

/// Hyperparameters of the CNN and its training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Samples per input, `J × K`.
    pub input_len: usize,
    pub in_channels: usize,
    pub conv_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub classes: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(input_len: usize) -> Self {
        Self {
            input_len,
            in_channels: CHANNELS,
            conv_blocks: 3,
            filters: 64,
            kernel_size: 7,
            classes: Label::COUNT,
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_len", self.input_len),
            ("in_channels", self.in_channels),
            ("conv_blocks", self.conv_blocks),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("classes", self.classes),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid!("model config: {name} must be positive"));
        }
        if self.classes < 2 {
            return Err(invalid!("model config: at least two classes are required"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!(
                "model config: learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            in_channels: self.in_channels,
            conv_blocks: self.conv_blocks,
            filters: self.filters,
            kernel_size: self.kernel_size,
            classes: self.classes,
        }
    }
}

/// A trained (or freshly initialized) model with everything needed to run
/// it on raw captures.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub network: Network<f32>,
    /// Training-set statistics applied to every input before the network.
    pub norm_stats: NormStats,
    pub class_map: Vec<ClassEntry>,
    /// Detector and capture geometry the model was trained with.
    pub features: DatasetSpec,
}

impl ModelBundle {
    /// Randomly initialized model for `config` (seeded by `config.seed`).
    pub fn init(config: ModelConfig, features: DatasetSpec) -> Result<Self> {
        config.validate()?;
        features.validate()?;
        if features.out_len * features.window != config.input_len {
            return Err(Error::Shape(format!(
                "input_len {} does not equal out_len {} x window {}",
                config.input_len, features.out_len, features.window
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            network: Network::init(config.architecture(), &mut rng),
            config,
            norm_stats: NormStats::identity(),
            class_map: Label::class_map(),
            features,
        })
    }

    /// Class probabilities for one already-normalized tensor.
    pub fn predict(&self, tensor: &FeatureTensor) -> Result<Vec<f64>> {
        self.check_tensor(tensor)?;
        Ok(self.network.infer(&channel_major(tensor), tensor.len()))
    }

    /// Class probabilities for one raw (unnormalized) tensor.
    pub fn predict_raw(&self, tensor: &FeatureTensor) -> Result<Vec<f64>> {
        self.check_tensor(tensor)?;
        let mut data = tensor.data().to_vec();
        self.norm_stats.apply_to(&mut data);
        let t = FeatureTensor::from_raw(tensor.len(), data)?;
        Ok(self.network.infer(&channel_major(&t), t.len()))
    }

    fn check_tensor(&self, tensor: &FeatureTensor) -> Result<()> {
        if tensor.len() != self.config.input_len {
            return Err(Error::Shape(format!(
                "tensor length {} does not match model input length {}",
                tensor.len(),
                self.config.input_len
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path)
    }
}

/// Transposes a `[time][channel]` tensor into `[channel][time]`.
pub fn channel_major(t: &FeatureTensor) -> Vec<f32> {
    let len = t.len();
    let mut out = vec![0.0f32; len * CHANNELS];
    for (i, s) in t.data().chunks_exact(CHANNELS).enumerate() {
        for c in 0..CHANNELS {
            out[c * len + i] = s[c];
        }
    }
    out
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode probabilities for a batch of normalized tensors.
pub fn forward(model: &ModelBundle, batch: &[FeatureTensor]) -> Result<Vec<Vec<f64>>> {
    batch.iter().try_for_each(|t| model.check_tensor(t))?;
    Ok(batch
        .par_iter()
        .map(|t| model.network.infer(&channel_major(t), t.len()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub updates: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when no validation set was given.
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn total_updates(&self) -> usize {
        self.epochs.iter().map(|e| e.updates).sum()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`, one line per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            );
        }
        out
    }
}

/// Brings `ds` onto `stats`: applies them to raw data, accepts data that
/// already carries exactly these statistics, rejects anything else.
fn align_normalization(ds: LabeledDataset, stats: &NormStats) -> Result<LabeledDataset> {
    match &ds.meta.norm {
        None => preprocessor::apply_norm(ds, stats),
        Some(s) if s == stats => Ok(ds),
        Some(_) => Err(invalid!(
            "dataset was normalized with different statistics than the model"
        )),
    }
}

fn one_hot(label: Label, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label.code() as usize] = 1.0;
    v
}

/// Mean cross-entropy and accuracy of `net` (inference mode) on a
/// normalized dataset.
fn evaluate_loss(net: &Network<f32>, ds: &LabeledDataset) -> (f64, f64) {
    if ds.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let results: Vec<(f64, bool)> = ds
        .tensors
        .par_iter()
        .zip(&ds.labels)
        .map(|(t, &l)| {
            let p = net.infer(&channel_major(t), t.len());
            let code = l.code() as usize;
            (-p[code].max(f64::MIN_POSITIVE).ln(), argmax(&p) == code)
        })
        .collect();
    let n = results.len() as f64;
    (
        results.iter().map(|r| r.0).sum::<f64>() / n,
        results.iter().filter(|r| r.1).count() as f64 / n,
    )
}

/// Trains a fresh model; see [`cnn_train_with`].
pub fn cnn_train(
    train: LabeledDataset,
    val: LabeledDataset,
    config: &ModelConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    cnn_train_with(train, val, config, |_| {})
}

/// Mini-batch Adam on categorical cross-entropy.
///
/// Raw datasets are z-scored with statistics of `train`; those statistics
/// end up in the returned bundle. The training set is reshuffled every
/// epoch and the final partial batch is dropped, so each epoch performs
/// `floor(N / batch_size)` updates. `on_epoch` sees each epoch's record as
/// soon as it is complete.
pub fn cnn_train_with(
    train: LabeledDataset,
    val: LabeledDataset,
    config: &ModelConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ModelBundle, TrainHistory)> {
    config.validate()?;
    if config.classes != Label::COUNT {
        return Err(invalid!(
            "labeled training needs {} classes, config has {}",
            Label::COUNT,
            config.classes
        ));
    }
    if train.is_empty() {
        return Err(invalid!("training set is empty"));
    }
    if train.len() < config.batch_size {
        return Err(invalid!(
            "training set of {} items is smaller than one batch of {}",
            train.len(),
            config.batch_size
        ));
    }
    if train.input_len() != config.input_len {
        return Err(Error::Shape(format!(
            "training tensors have length {}, config expects {}",
            train.input_len(),
            config.input_len
        )));
    }
    train.check_compatible(&val)?;

    let (train, stats) = match train.meta.norm {
        None => preprocessor::normalize(train)?,
        Some(s) => (train, s),
    };
    let val = align_normalization(val, &stats)?;

    let features = DatasetSpec {
        vector_len: train.meta.vector_len,
        window: train.meta.window,
        detect_window: train.meta.detect_window,
        out_len: train.meta.out_len,
    };
    let mut model = ModelBundle::init(config.clone(), features)?;
    model.norm_stats = stats;

    let len = config.input_len;
    let batch = config.batch_size;
    let updates = train.len() / batch;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut adam = Adam::new(&mut model.network, config.learning_rate);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks_exact(batch).take(updates) {
            let inputs: Vec<Vec<f32>> = chunk.par_iter().map(|&i| channel_major(&train.tensors[i])).collect();
            let targets: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| one_hot(train.labels[i], config.classes))
                .collect();
            let cache = model.network.forward_train(&inputs, len);
            let (loss, dlogits) = Network::loss_and_logit_grad(&cache, &targets);
            let grads = model.network.backward(&inputs, &cache, &dlogits);
            model.network.update_running_stats(&cache, batch);
            adam.step(&mut model.network, &grads);

            loss_sum += loss;
            correct += cache
                .log_probs
                .iter()
                .zip(chunk)
                .filter(|(lp, &i)| argmax(lp) == train.labels[i].code() as usize)
                .count();
        }
        let (val_loss, val_acc) = evaluate_loss(&model.network, &val);
        let stats = EpochStats {
            epoch,
            updates,
            train_loss: loss_sum / updates as f64,
            train_acc: correct as f64 / (updates * batch) as f64,
            val_loss,
            val_acc,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((model, history))
}

/// Scores every test item (ties in the argmax go to the lowest class code)
/// and times each prediction, normalization included.
pub fn cnn_test(model: &ModelBundle, test: &LabeledDataset) -> Result<EvalReport> {
    if test.input_len() != model.config.input_len {
        return Err(Error::Shape(format!(
            "test tensors have length {}, model expects {}",
            test.input_len(),
            model.config.input_len
        )));
    }
    let needs_norm = match &test.meta.norm {
        None => true,
        Some(s) if *s == model.norm_stats => false,
        Some(_) => {
            return Err(invalid!(
                "test set was normalized with different statistics than the model"
            ))
        }
    };
    let results: Vec<Result<(Label, f64)>> = test
        .tensors
        .par_iter()
        .map(|t| {
            let start = Instant::now();
            let probs = if needs_norm {
                model.predict_raw(t)?
            } else {
                model.predict(t)?
            };
            let label = Label::from_code(argmax(&probs) as u8)?;
            Ok((label, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let predicted: Vec<Label> = results.iter().map(|r| r.0).collect();
    let latencies: Vec<f64> = results.iter().map(|r| r.1).collect();

    let mut report = EvalReport::from_predictions(&test.labels, &predicted);
    report.latency = latency_report(&latencies).ok();
    Ok(report)
}
