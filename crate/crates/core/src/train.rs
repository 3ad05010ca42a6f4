//! Optimization loop, evaluation and the multi-seed reporting protocol.

use web_time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_dataset, EncodedPair};
use crate::model::{
    cross_entropy, embed_graph, forward, loss_and_gradients, symmetrized_logits, ConfigError, Logits,
    ModelConfig, ModelParameters,
};
use crate::ud::{Dataset, Label, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Minimal pairs per update.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation-accuracy gain.
    pub early_stop_patience: usize,
    /// One training run per seed in multi-run protocols.
    pub seeds: Vec<u64>,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            max_epochs: 100,
            early_stop_patience: 10,
            seeds: vec![1, 2, 3],
            optimizer: Optimizer::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ConfigError),
    #[error("non-finite loss at epoch {epoch} on pair `{pair}` (learning rate {learning_rate})")]
    NonFiniteLoss { epoch: usize, pair: String, learning_rate: f64 },
    #[error("learning-curve size {size} must be in 1..={available}")]
    BadSize { size: usize, available: usize },
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.early_stop_patience == 0 || self.early_stop_patience > self.max_epochs {
            return bad("early_stop_patience must be in 1..=max_epochs");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return bad("Adam moments must lie in [0, 1) and epsilon must be positive");
            }
        }
        Ok(())
    }
}

/// Adam with bias correction, or plain gradient descent, over the canonical
/// tensor order of [`ModelParameters`].
struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, p: &ModelParameters) -> Self {
        let zeros: Vec<Vec<f64>> = p.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        OptimizerState { kind, lr, step: 0, first: zeros.clone(), second: zeros }
    }

    fn update(&mut self, p: &mut ModelParameters, grad: &ModelParameters) {
        self.step += 1;
        let grads = grad.slices();
        match self.kind {
            Optimizer::Sgd => {
                for (w, g) in p.slices_mut().into_iter().zip(grads) {
                    for (w, g) in w.iter_mut().zip(g) {
                        *w -= self.lr * g;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((w, g), m), v) in
                    p.slices_mut().into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second)
                {
                    for i in 0..w.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= self.lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss of the inference logits at the end of the epoch.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub batch_unit: String,
    /// Mean inference loss over the training set before the first update.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub selected_epoch: usize,
    /// Wall-clock time; excluded from serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn selected(&self) -> &EpochRecord {
        &self.epochs[self.selected_epoch - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub label: Label,
    pub logits: [f64; 2],
    pub correct: bool,
    /// `|softmax_A - softmax_B|` of the symmetrized logits.
    pub margin: f64,
    pub human_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub items: Vec<EvalItem>,
}

impl EvalReport {
    pub fn correctness(&self) -> Vec<bool> {
        self.items.iter().map(|i| i.correct).collect()
    }

    /// The candidate each item's logits prefer; ties resolve to the wrong side.
    pub fn choices(&self) -> Vec<Label> {
        self.items
            .iter()
            .map(|i| Logits(i.logits).decision().unwrap_or_else(|| i.label.other()))
            .collect()
    }

    pub fn mean_loss(&self) -> f64 {
        let total: f64 = self.items.iter().map(|i| cross_entropy(Logits(i.logits), i.label)).sum();
        total / self.items.len() as f64
    }
}

fn evaluate_encoded(p: &ModelParameters, data: &Dataset, encoded: &[EncodedPair]) -> EvalReport {
    let items: Vec<EvalItem> = data
        .pairs
        .iter()
        .zip(encoded)
        .map(|(pair, enc)| {
            let logits = symmetrized_logits(&embed_graph(&enc.a, p), &embed_graph(&enc.b, p), p);
            EvalItem {
                id: pair.id.clone(),
                label: pair.label,
                logits: logits.0,
                correct: logits.decision() == Some(pair.label),
                margin: logits.margin(),
                human_agreement: pair.human_agreement,
            }
        })
        .collect();
    let correct = items.iter().filter(|i| i.correct).count();
    let accuracy = if items.is_empty() { 0.0 } else { correct as f64 / items.len() as f64 };
    EvalReport { accuracy, items }
}

/// Accuracy and per-item records under symmetrized inference. Exact ties count
/// as incorrect.
pub fn evaluate(p: &ModelParameters, data: &Dataset) -> EvalReport {
    evaluate_encoded(p, data, &encode_dataset(data))
}

fn mean_train_loss(p: &ModelParameters, encoded: &[EncodedPair]) -> f64 {
    let total: f64 = encoded.iter().map(|e| cross_entropy(forward(e, p), e.label)).sum();
    total / encoded.len() as f64
}

/// Trains one model. The returned parameters come from the epoch with the best
/// validation accuracy; ties go to the lower validation loss, then the earlier
/// epoch.
pub fn train(
    train: &Dataset,
    val: &Dataset,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ModelParameters, TrainReport), TrainError> {
    tcfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit(Split::Validation));
    }
    let started = Instant::now();
    let train_enc = encode_dataset(train);
    let val_enc = encode_dataset(val);

    let mut params = ModelParameters::init(cfg)?;
    let mut grad = params.zeros_like();
    let mut opt = OptimizerState::new(tcfg.optimizer, tcfg.learning_rate, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5a4d_1e5);

    let initial_train_loss = mean_train_loss(&params, &train_enc);

    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, f64, ModelParameters)> = None;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(tcfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let enc = &train_enc[i];
                let swap = rng.gen_bool(0.5);
                let loss = if swap {
                    loss_and_gradients(&enc.b, &enc.a, enc.label.other(), &params, &mut grad)
                } else {
                    loss_and_gradients(&enc.a, &enc.b, enc.label, &params, &mut grad)
                };
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        pair: train.pairs[i].id.clone(),
                        learning_rate: tcfg.learning_rate,
                    });
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad.slices_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
            opt.update(&mut params, &grad);
        }
        let report = evaluate_encoded(&params, val, &val_enc);
        let record = EpochRecord {
            epoch,
            train_loss: mean_train_loss(&params, &train_enc),
            val_accuracy: report.accuracy,
            val_loss: report.mean_loss(),
        };
        let better = match &best {
            None => true,
            Some((_, acc, loss, _)) => {
                record.val_accuracy > *acc || (record.val_accuracy == *acc && record.val_loss < *loss)
            }
        };
        if better {
            best = Some((epoch, record.val_accuracy, record.val_loss, params.clone()));
        }
        if record.val_accuracy > best_accuracy {
            best_accuracy = record.val_accuracy;
            stale = 0;
        } else {
            stale += 1;
        }
        epochs.push(record);
        if stale >= tcfg.early_stop_patience {
            break;
        }
    }

    let (selected_epoch, _, _, best_params) = best.expect("at least one epoch ran");
    let report = TrainReport {
        seed: cfg.seed,
        batch_unit: format!("{} minimal pairs", tcfg.batch_size),
        initial_train_loss,
        epochs,
        selected_epoch,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

/// Outcome of one seed within a multi-run protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub test_accuracy: f64,
    pub train: TrainReport,
}

#[derive(Debug, Clone)]
pub struct MedianRun {
    /// Test evaluation of the median-accuracy run.
    pub report: EvalReport,
    pub median_seed: u64,
    pub runs: Vec<SeedRun>,
    /// Population standard deviation of the per-seed test accuracies.
    pub std: f64,
    pub params: ModelParameters,
}

impl MedianRun {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }
}

pub fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Index of the median value; ties are broken by position.
pub fn median_index(values: &[f64]) -> usize {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx[values.len() / 2]
}

/// Trains once per seed and reports the run with the median test accuracy.
pub fn median_run(
    train_set: &Dataset,
    val: &Dataset,
    test: &Dataset,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<MedianRun, TrainError> {
    tcfg.validate()?;
    if tcfg.seeds.len() % 2 == 0 {
        return Err(TrainError::InvalidConfig("median run needs an odd number of seeds".into()));
    }
    if test.is_empty() {
        return Err(TrainError::EmptySplit(Split::Test));
    }
    let test_enc = encode_dataset(test);
    let mut runs = Vec::new();
    let mut finals = Vec::new();
    for &seed in &tcfg.seeds {
        let run_cfg = ModelConfig { seed, ..cfg.clone() };
        let (params, report) = train(train_set, val, &run_cfg, tcfg)?;
        let eval = evaluate_encoded(&params, test, &test_enc);
        runs.push(SeedRun { seed, test_accuracy: eval.accuracy, train: report });
        finals.push((params, eval));
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let mid = median_index(&accs);
    let (params, report) = finals.swap_remove(mid);
    Ok(MedianRun { report, median_seed: runs[mid].seed, std: population_std(&accs), runs, params })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub accuracy: f64,
    pub std: f64,
}

/// One median run per training-set size. Subsets are prefixes of a single
/// seeded shuffle, so smaller subsets are nested in larger ones.
pub fn learning_curve(
    train_set: &Dataset,
    val: &Dataset,
    test: &Dataset,
    sizes: &[usize],
    subset_seed: u64,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<Vec<CurvePoint>, TrainError> {
    for &size in sizes {
        if size == 0 || size > train_set.len() {
            return Err(TrainError::BadSize { size, available: train_set.len() });
        }
    }
    let mut shuffled = train_set.pairs.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(subset_seed));
    sizes
        .iter()
        .map(|&size| {
            let subset = Dataset::new(Split::Train, shuffled[..size].to_vec());
            let run = median_run(&subset, val, test, cfg, tcfg)?;
            Ok(CurvePoint { size, accuracy: run.report.accuracy, std: run.std })
        })
        .collect()
}
