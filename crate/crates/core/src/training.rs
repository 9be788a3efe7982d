//! Two-stage training: a forward network on (thicknesses, spectrum) pairs,
//! then a tandem whose inverse half learns from spectrum reconstruction
//! alone. Also metrics, inverse prediction and a direct-regression baseline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitPart, ThicknessGrid};
use crate::error::{Error, Result};
use crate::models::TandemModel;
use crate::neural::{mse, mse_grad, round_to_storage, Adam, AdamConfig, LayerKind, Mode, Network, Tensor};
use crate::optics::{Simulator, Spectrum, GRID_LEN};
use crate::rng::{domain, permutation};

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn fnn_default() -> Self {
        Self { epochs: 500, batch_size: 16, learning_rate: 1e-4, patience: None, seed: 42, shuffle: true }
    }

    pub fn tnn_default() -> Self {
        Self { epochs: 1000, patience: Some(200), ..Self::fnn_default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch_size must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Validation("patience must be at least 1 when set".into()));
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: f64,
    pub mse: f64,
}

/// Pooled metrics over every element: one global target mean for `SS_tot`.
pub fn regression_metrics(pred: &[f64], target: &[f64]) -> Result<Metrics> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    if target.is_empty() {
        return Err(Error::Validation("metrics of an empty split".into()));
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(Metrics { r2, mse: ss_res / n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub architecture: String,
    pub config: TrainConfig,
    pub layer_count: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    /// Index 0 is the evaluation before any update; later entries are
    /// sample-weighted means of the minibatch losses of that epoch.
    pub train_loss: Vec<f64>,
    /// Eval-mode loss on the validation split; index 0 before training.
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub optimizer_steps: u64,
    pub seconds: f64,
    pub test: Metrics,
    pub test_mse_epoch0: f64,
    pub parameter_hash: String,
    pub fnn_hash: Option<String>,
}

impl TrainReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report is serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::schema(format!("train report: {e}")))
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{e},{t:e},{v:e}\n"));
        }
        out
    }
}

/// One trainable problem: minibatch update and eval-mode loss by row index.
trait Objective {
    fn train_batch(&mut self, rows: &[usize]) -> Result<f64>;
    fn eval_loss(&mut self, rows: &[usize]) -> Result<f64>;
    fn snapshot(&self) -> Vec<Tensor>;
    fn restore(&mut self, snapshot: &[Tensor]) -> Result<()>;
    fn needs_batch_of_two(&self) -> bool;
    fn steps(&self) -> u64;
}

fn has_batch_norm(net: &Network) -> bool {
    net.specs().iter().any(|s| s.kind() == LayerKind::BatchNorm1d)
}

fn chunked_loss(rows: &[usize], mut f: impl FnMut(&[usize]) -> Result<f64>) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Validation("loss over an empty split".into()));
    }
    let mut total = 0.0;
    for chunk in rows.chunks(EVAL_CHUNK) {
        total += f(chunk)? * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

fn tensor(rows: usize, width: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, width], data).expect("dataset rows have fixed width")
}

/// Plain supervised regression `x -> y`.
struct Supervised<'a> {
    net: &'a mut Network,
    adam: Adam,
    x: Tensor,
    y: Tensor,
}

impl Objective for Supervised<'_> {
    fn train_batch(&mut self, rows: &[usize]) -> Result<f64> {
        let (x, y) = (self.x.select_rows(rows), self.y.select_rows(rows));
        self.net.zero_grad();
        let pred = self.net.forward(&x, Mode::Train)?;
        let loss = mse(&pred, &y)?;
        self.net.backward(&mse_grad(&pred, &y)?)?;
        self.adam.update(self.net)?;
        Ok(loss)
    }

    fn eval_loss(&mut self, rows: &[usize]) -> Result<f64> {
        chunked_loss(rows, |c| {
            let pred = self.net.forward(&self.x.select_rows(c), Mode::Eval)?;
            mse(&pred, &self.y.select_rows(c))
        })
    }

    fn snapshot(&self) -> Vec<Tensor> {
        self.net.snapshot()
    }

    fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        self.net.restore(snapshot)
    }

    fn needs_batch_of_two(&self) -> bool {
        has_batch_norm(self.net)
    }

    fn steps(&self) -> u64 {
        self.adam.steps()
    }
}

/// Spectrum reconstruction through the frozen forward network.
struct Reconstruction<'a> {
    tandem: &'a mut TandemModel,
    adam: Adam,
    spectra: Tensor,
}

impl Objective for Reconstruction<'_> {
    fn train_batch(&mut self, rows: &[usize]) -> Result<f64> {
        let target = self.spectra.select_rows(rows);
        self.tandem.inn.zero_grad();
        let out = self.tandem.forward(&target, Mode::Train)?;
        let loss = mse(&out.spectra, &target)?;
        self.tandem.backward(&mse_grad(&out.spectra, &target)?)?;
        self.adam.update(&mut self.tandem.inn)?;
        Ok(loss)
    }

    fn eval_loss(&mut self, rows: &[usize]) -> Result<f64> {
        chunked_loss(rows, |c| {
            let target = self.spectra.select_rows(c);
            let out = self.tandem.forward(&target, Mode::Eval)?;
            mse(&out.spectra, &target)
        })
    }

    fn snapshot(&self) -> Vec<Tensor> {
        self.tandem.inn.snapshot()
    }

    fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        self.tandem.inn.restore(snapshot)
    }

    fn needs_batch_of_two(&self) -> bool {
        has_batch_norm(&self.tandem.inn)
    }

    fn steps(&self) -> u64 {
        self.adam.steps()
    }
}

struct FitOutcome {
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
}

/// Minibatches of the shuffled train rows. The last partial batch is kept;
/// a trailing single row is merged into the previous batch when batch norm
/// needs at least two samples.
fn batches(order: &[usize], batch_size: usize, needs_two: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if needs_two && out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = order.len() - 1 - out.last().expect("at least one batch").len();
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn fit<O: Objective>(
    objective: &mut O,
    train: &[usize],
    val: &[usize],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &O),
) -> Result<FitOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation("training needs non-empty train and validation splits".into()));
    }
    if objective.needs_batch_of_two() && train.len() < 2 {
        return Err(Error::Validation("batch norm needs at least two training samples".into()));
    }
    let mut train_loss = vec![objective.eval_loss(train)?];
    let mut val_loss = vec![objective.eval_loss(val)?];
    let mut best = (val_loss[0], 0usize, objective.snapshot());
    let mut epochs_run = 0;
    let mut stopped_early = false;
    on_epoch(0, objective);

    for epoch in 1..=config.epochs {
        let order: Vec<usize> = if config.shuffle {
            permutation(config.seed, domain::SHUFFLE, epoch as u64, train.len()).into_iter().map(|i| train[i]).collect()
        } else {
            train.to_vec()
        };
        let mut total = 0.0;
        for batch in batches(&order, config.batch_size, objective.needs_batch_of_two()) {
            let loss = objective.train_batch(batch)?;
            if !loss.is_finite() {
                return Err(Error::Domain(format!("non-finite training loss at epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
        }
        train_loss.push(total / order.len() as f64);
        let v = objective.eval_loss(val)?;
        val_loss.push(v);
        epochs_run = epoch;
        on_epoch(epoch, objective);
        if v < best.0 {
            best = (v, epoch, objective.snapshot());
        } else if config.patience.is_some_and(|p| epoch - best.1 >= p) {
            stopped_early = true;
            break;
        }
    }
    objective.restore(&best.2)?;
    Ok(FitOutcome { train_loss, val_loss, best_epoch: best.1, epochs_run, stopped_early })
}

fn check_widths(net: &Network, input: usize, output: usize, what: &str) -> Result<()> {
    if net.input_width() != input || net.output_width() != output {
        return Err(Error::Validation(format!(
            "width mismatch: {what} network maps {} -> {}, dataset needs {input} -> {output}",
            net.input_width(),
            net.output_width()
        )));
    }
    Ok(())
}

fn predict_rows(net: &mut Network, x: &Tensor, rows: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for chunk in rows.chunks(EVAL_CHUNK) {
        out.extend(net.forward(&x.select_rows(chunk), Mode::Eval)?.into_data());
    }
    Ok(out)
}

fn split_sizes(data: &Dataset) -> (usize, usize, usize) {
    (data.split.train.len(), data.split.val.len(), data.split.test.len())
}

/// Trains `network` (thicknesses → spectrum) and leaves the best-validation
/// weights in it, rounded to checkpoint precision so that a saved and
/// reloaded network reproduces the reported metrics.
pub fn train_fnn(network: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let l = data.layer_count();
    check_widths(network, l, GRID_LEN, "forward")?;
    let start = Instant::now();
    let all: Vec<usize> = (0..data.len()).collect();
    let x = tensor(data.len(), l, data.inputs(&all));
    let y = tensor(data.len(), GRID_LEN, data.spectra(&all));
    let test_rows = data.split.part(SplitPart::Test).to_vec();

    let adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate), network)?;
    let mut obj = Supervised { net: network, adam, x, y };
    let test_mse_epoch0 = if test_rows.is_empty() { f64::NAN } else { obj.eval_loss(&test_rows)? };
    let outcome = fit(&mut obj, &data.split.train, &data.split.val, config, &mut |_, _| {})?;
    let steps = obj.steps();
    let Supervised { net, x, y, .. } = obj;
    round_to_storage(net);
    let test = regression_metrics(&predict_rows(net, &x, &test_rows)?, y.select_rows(&test_rows).data())?;

    let (train_samples, val_samples, test_samples) = split_sizes(data);
    Ok(TrainReport {
        stage: "fnn".into(),
        architecture: String::new(),
        config: config.clone(),
        layer_count: l,
        train_samples,
        val_samples,
        test_samples,
        train_loss: outcome.train_loss,
        val_loss: outcome.val_loss,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        optimizer_steps: steps,
        seconds: start.elapsed().as_secs_f64(),
        test,
        test_mse_epoch0,
        parameter_hash: net.parameter_hash(),
        fnn_hash: None,
    })
}

/// Handle given to per-epoch observers of a tandem run.
pub struct TandemEpoch<'a> {
    pub epoch: usize,
    pub tandem: &'a TandemModel,
}

pub fn train_tandem(tandem: &mut TandemModel, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    train_tandem_with(tandem, data, config, |_| {})
}

/// Trains the inverse half of `tandem` on spectrum-reconstruction loss.
/// Thickness labels are never read. `on_epoch` runs after every epoch
/// (including epoch 0, before any update).
pub fn train_tandem_with(
    tandem: &mut TandemModel,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(TandemEpoch<'_>),
) -> Result<TrainReport> {
    config.validate()?;
    tandem.check_frozen()?;
    let l = data.layer_count();
    check_widths(&tandem.inn, GRID_LEN, l, "inverse")?;
    check_widths(&tandem.fnn, l, GRID_LEN, "forward")?;
    let start = Instant::now();
    let all: Vec<usize> = (0..data.len()).collect();
    let spectra = tensor(data.len(), GRID_LEN, data.spectra(&all));
    let test_rows = data.split.part(SplitPart::Test).to_vec();

    let adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate), &tandem.inn)?;
    let mut obj = Reconstruction { tandem, adam, spectra };
    let test_mse_epoch0 = if test_rows.is_empty() { f64::NAN } else { obj.eval_loss(&test_rows)? };
    let outcome = fit(&mut obj, &data.split.train, &data.split.val, config, &mut |epoch, o: &Reconstruction| {
        on_epoch(TandemEpoch { epoch, tandem: o.tandem })
    })?;
    let steps = obj.steps();
    round_to_storage(&mut obj.tandem.inn);
    let tandem = obj.tandem;
    let test = evaluate_tandem(tandem, data, SplitPart::Test)?;

    let (train_samples, val_samples, test_samples) = split_sizes(data);
    Ok(TrainReport {
        stage: "tnn".into(),
        architecture: String::new(),
        config: config.clone(),
        layer_count: l,
        train_samples,
        val_samples,
        test_samples,
        train_loss: outcome.train_loss,
        val_loss: outcome.val_loss,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        optimizer_steps: steps,
        seconds: start.elapsed().as_secs_f64(),
        test,
        test_mse_epoch0,
        parameter_hash: tandem.inn.parameter_hash(),
        fnn_hash: Some(tandem.fnn.parameter_hash()),
    })
}

/// Baseline that regresses normalized thicknesses on spectra directly,
/// the ill-posed setup the tandem is meant to avoid.
pub fn train_inverse_direct(inn: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let l = data.layer_count();
    check_widths(inn, GRID_LEN, l, "inverse")?;
    let start = Instant::now();
    let all: Vec<usize> = (0..data.len()).collect();
    let x = tensor(data.len(), GRID_LEN, data.spectra(&all));
    let y = tensor(data.len(), l, data.inputs(&all));
    let test_rows = data.split.part(SplitPart::Test).to_vec();

    let adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate), inn)?;
    let mut obj = Supervised { net: inn, adam, x, y };
    let test_mse_epoch0 = if test_rows.is_empty() { f64::NAN } else { obj.eval_loss(&test_rows)? };
    let outcome = fit(&mut obj, &data.split.train, &data.split.val, config, &mut |_, _| {})?;
    let steps = obj.steps();
    let Supervised { net, x, y, .. } = obj;
    round_to_storage(net);
    let test = regression_metrics(&predict_rows(net, &x, &test_rows)?, y.select_rows(&test_rows).data())?;

    let (train_samples, val_samples, test_samples) = split_sizes(data);
    Ok(TrainReport {
        stage: "inn-direct".into(),
        architecture: String::new(),
        config: config.clone(),
        layer_count: l,
        train_samples,
        val_samples,
        test_samples,
        train_loss: outcome.train_loss,
        val_loss: outcome.val_loss,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        optimizer_steps: steps,
        seconds: start.elapsed().as_secs_f64(),
        test,
        test_mse_epoch0,
        parameter_hash: net.parameter_hash(),
        fnn_hash: None,
    })
}

/// Forward-network spectrum metrics on one split.
pub fn evaluate_fnn(fnn: &mut Network, data: &Dataset, part: SplitPart) -> Result<Metrics> {
    check_widths(fnn, data.layer_count(), GRID_LEN, "forward")?;
    let rows = data.split.part(part);
    let x = tensor(rows.len(), data.layer_count(), data.inputs(rows));
    let all: Vec<usize> = (0..rows.len()).collect();
    regression_metrics(&predict_rows(fnn, &x, &all)?, &data.spectra(rows))
}

/// Tandem spectrum-reconstruction metrics (target vs forward network output).
pub fn evaluate_tandem(tandem: &mut TandemModel, data: &Dataset, part: SplitPart) -> Result<Metrics> {
    let rows = data.split.part(part);
    let target = data.spectra(rows);
    let x = tensor(rows.len(), GRID_LEN, target.clone());
    let mut pred = Vec::with_capacity(target.len());
    let all: Vec<usize> = (0..rows.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        pred.extend(tandem.forward(&x.select_rows(chunk), Mode::Eval)?.spectra.into_data());
    }
    regression_metrics(&pred, &target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseDesign {
    pub thicknesses_nm: Vec<f64>,
    pub reconstructed: Spectrum,
    pub design_mse: f64,
}

/// Grid-snaps normalized network thicknesses and simulates them with the TMM.
pub fn design_from_normalized(
    normalized: &[f64],
    target: &Spectrum,
    grid: &ThicknessGrid,
    simulator: &Simulator,
) -> Result<InverseDesign> {
    let thicknesses_nm = grid.denormalize(normalized, true);
    let reconstructed = simulator.alternating_spectrum(&thicknesses_nm)?;
    let design_mse = target.mse(&reconstructed);
    Ok(InverseDesign { thicknesses_nm, reconstructed, design_mse })
}

/// Inverse design of one target: the tandem proposes thicknesses, which are
/// snapped to the grid and re-simulated with the TMM (not the network).
pub fn predict_inverse(
    tandem: &mut TandemModel,
    target: &Spectrum,
    grid: &ThicknessGrid,
    simulator: &Simulator,
) -> Result<InverseDesign> {
    let x = Tensor::new(vec![1, GRID_LEN], target.values().to_vec())?;
    let out = tandem.forward(&x, Mode::Eval)?;
    design_from_normalized(out.thicknesses.data(), target, grid, simulator)
}

/// Mean TMM spectrum MSE of an inverse network's grid-snapped proposals
/// over one split.
pub fn inverse_tmm_mse(
    inn: &mut Network,
    data: &Dataset,
    part: SplitPart,
    simulator: &Simulator,
) -> Result<f64> {
    let rows = data.split.part(part);
    if rows.is_empty() {
        return Err(Error::Validation("empty split".into()));
    }
    let x = tensor(rows.len(), GRID_LEN, data.spectra(rows));
    let all: Vec<usize> = (0..rows.len()).collect();
    let pred = predict_rows(inn, &x, &all)?;
    let grid = data.grid();
    let l = data.layer_count();
    let mut total = 0.0;
    for (k, &i) in rows.iter().enumerate() {
        let target = &data.samples[i].spectrum;
        total += design_from_normalized(&pred[k * l..(k + 1) * l], target, &grid, simulator)?.design_mse;
    }
    Ok(total / rows.len() as f64)
}
