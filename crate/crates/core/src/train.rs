//! Masked-loss training with Adam and early stopping, plus horizon-wise
//! evaluation.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{window_anchors, NormStats, SplitRanges, TrafficDataset};
use crate::error::{Error, Result};
use crate::model::{forward, init_params, Capture, CheckpointMeta, ModelConfig};
use crate::tensor::{no_grad, ParamStore, Tensor};

/// Batch size used when only predictions are needed.
const EVAL_BATCH: usize = 64;
const ORDER_STREAM: u64 = 0x5eed_0dd5;

/// Mean absolute error over entries where `mask` is true.
pub fn masked_mae_loss(y_hat: &Tensor, y: &[f64], mask: &[bool]) -> Result<Tensor> {
    if y_hat.len() != y.len() || y.len() != mask.len() {
        return Err(Error::shape("masked_mae_loss", y_hat.shape(), &[y.len(), mask.len()]));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::AllMasked);
    }
    let inv = 1.0 / count as f64;
    let mut total = 0.0;
    let mut sign = vec![0.0; y.len()];
    for (i, ((&p, &t), &m)) in y_hat.data().iter().zip(y).zip(mask).enumerate() {
        if m {
            total += (p - t).abs();
            sign[i] = (p - t).signum() * inv;
            if p == t {
                sign[i] = 0.0;
            }
        }
    }
    Ok(Tensor::from_op(vec![1], vec![total * inv], vec![y_hat.clone()], move |g| {
        vec![Some(sign.iter().map(|s| s * g[0]).collect())]
    }))
}

/// Raw-scale metrics; MAPE is a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
}

pub fn metrics(y_hat: &[f64], y: &[f64], mask: &[bool]) -> Result<Metrics> {
    if y_hat.len() != y.len() || y.len() != mask.len() {
        return Err(Error::shape("metrics", &[y_hat.len()], &[y.len(), mask.len()]));
    }
    let (mut abs, mut sq, mut pct, mut n, mut n_pct) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for ((&p, &t), &m) in y_hat.iter().zip(y).zip(mask) {
        if !m {
            continue;
        }
        let e = p - t;
        abs += e.abs();
        sq += e * e;
        n += 1;
        if t != 0.0 {
            pct += (e / t).abs();
            n_pct += 1;
        }
    }
    if n == 0 {
        return Err(Error::AllMasked);
    }
    Ok(Metrics {
        mae: abs / n as f64,
        rmse: (sq / n as f64).sqrt(),
        mape: if n_pct == 0 { 0.0 } else { 100.0 * pct / n_pct as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Caps optimizer steps per epoch; `None` uses every training window.
    pub max_batches_per_epoch: Option<usize>,
    /// Caps validation windows (evenly spaced); `None` uses all.
    pub max_val_windows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            patience: 30,
            max_epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            max_batches_per_epoch: None,
            max_val_windows: None,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            out.push("train.batch_size must be positive".into());
        }
        if self.patience == 0 {
            out.push("train.patience must be at least 1".into());
        }
        if self.max_epochs == 0 {
            out.push("train.max_epochs must be positive".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                out.push(format!("train.{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            out.push("train.eps must be positive".into());
        }
        if self.max_batches_per_epoch == Some(0) || self.max_val_windows == Some(0) {
            out.push("batch and window caps must be positive when set".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }
}

/// Per-parameter first and second moments.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update of every parameter; gradients are
/// cleared afterwards.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let paths: Vec<String> = store.paths().cloned().collect();
    let grads = paths
        .iter()
        .map(|p| {
            store
                .get(p)?
                .grad_vec()
                .ok_or_else(|| Error::MissingGradient(p.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (path, g) in paths.iter().zip(grads) {
        let (m, v) = state
            .moments
            .entry(path.clone())
            .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
        let mut data = store.get(path)?.to_vec();
        for i in 0..data.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        store.replace_data(path, data)?;
    }
    store.zero_grad();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub val_mape: f64,
    pub is_best: bool,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,val_mae,val_rmse,val_mape,is_best")?;
    for r in history {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{}",
            r.epoch, r.train_loss, r.val_mae, r.val_rmse, r.val_mape, r.is_best
        )?;
    }
    Ok(())
}

/// Patience counter over validation scores (lower is better).
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Records one epoch's score; returns (is_best, should_stop).
    pub fn update(&mut self, score: f64) -> (bool, bool) {
        let is_best = score < self.best;
        if is_best {
            self.best = score;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        (is_best, self.since_best >= self.patience)
    }
}

pub struct TrainOutcome {
    pub best: ParamStore,
    pub meta: CheckpointMeta,
    pub history: Vec<EpochRecord>,
}

/// Everything needed to run the model on one dataset.
pub struct Predictor<'a> {
    pub store: &'a ParamStore,
    pub cfg: &'a ModelConfig,
    pub norm: NormStats,
}

impl Predictor<'_> {
    /// Raw-scale predictions `[len(anchors) × N × T']`.
    pub fn predict(&self, ds: &TrafficDataset, anchors: &[usize]) -> Result<Vec<f64>> {
        let n = ds.num_nodes();
        let mut out = Vec::with_capacity(anchors.len() * n * self.cfg.t_out);
        for chunk in anchors.chunks(EVAL_BATCH) {
            let b = ds.batch(chunk, self.cfg.t_in, self.cfg.t_out, &self.norm);
            let x = Tensor::new(&[b.size, self.cfg.t_in, n, 3], b.x)?;
            let y = no_grad(|| forward(&x, &ds.topology, self.store, self.cfg, Capture::default()))?;
            out.extend(y.y_hat.data().iter().map(|&v| self.norm.denormalize(v)));
        }
        Ok(out)
    }

    /// Masked metrics over every window in `range`.
    pub fn score(&self, ds: &TrafficDataset, anchors: &[usize]) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
        let pred = self.predict(ds, anchors)?;
        let b = ds.batch(anchors, self.cfg.t_in, self.cfg.t_out, &self.norm);
        Ok((pred, b.y, b.y_mask))
    }
}

fn spaced(anchors: Vec<usize>, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < anchors.len() => (0..c).map(|i| anchors[i * anchors.len() / c]).collect(),
        _ => anchors,
    }
}

pub fn train(
    ds: &TrafficDataset,
    splits: &SplitRanges,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(ds, splits, model_cfg, cfg, &mut |_| {})
}

/// As [`train`], calling `on_epoch` after each epoch.
pub fn train_with_progress(
    ds: &TrafficDataset,
    splits: &SplitRanges,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    let (t_in, t_out) = (model_cfg.t_in, model_cfg.t_out);
    splits.check_windows(t_in + t_out)?;
    let norm = NormStats::fit(ds, splits.train.clone())?;
    let n = ds.num_nodes();
    let mut store = init_params(model_cfg, n, ds.steps_per_day(), cfg.seed)?;
    let mut anchors = window_anchors(&splits.train, t_in, t_out)?;
    let val_anchors = spaced(window_anchors(&splits.val, t_in, t_out)?, cfg.max_val_windows);
    // data order has its own stream so it does not depend on model size
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ORDER_STREAM);
    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut best: Option<(ParamStore, usize)> = None;
    let mut stopper = EarlyStopping::new(cfg.patience);

    for epoch in 1..=cfg.max_epochs {
        anchors.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in anchors.chunks(cfg.batch_size).enumerate() {
            if cfg.max_batches_per_epoch.is_some_and(|cap| bi >= cap) {
                break;
            }
            let b = ds.batch(chunk, t_in, t_out, &norm);
            let x = Tensor::new(&[b.size, t_in, n, 3], b.x)?;
            let out = forward(&x, &ds.topology, &store, model_cfg, Capture::default())?;
            let raw = out.y_hat.scale(norm.std).add_scalar(norm.mean);
            let loss = match masked_mae_loss(&raw, &b.y, &b.y_mask) {
                Err(Error::AllMasked) => continue,
                other => other?,
            };
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            loss.backward()?;
            adam_step(&mut store, &mut adam, cfg)?;
            loss_sum += value;
            batches += 1;
        }
        let predictor = Predictor {
            store: &store,
            cfg: model_cfg,
            norm,
        };
        let (pred, y, mask) = predictor.score(ds, &val_anchors)?;
        let val = metrics(&pred, &y, &mask)?;
        if !val.mae.is_finite() {
            return Err(Error::Diverged { epoch, batch: batches });
        }
        let (is_best, stop) = stopper.update(val.mae);
        if is_best {
            best = Some((store.clone(), epoch));
        }
        let rec = EpochRecord {
            epoch,
            train_loss: if batches == 0 { f64::NAN } else { loss_sum / batches as f64 },
            val_mae: val.mae,
            val_rmse: val.rmse,
            val_mape: val.mape,
            is_best,
        };
        on_epoch(&rec);
        history.push(rec);
        if stop {
            break;
        }
    }
    let (best, epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        meta: CheckpointMeta {
            model: model_cfg.clone(),
            norm,
            num_nodes: n,
            steps_per_day: ds.steps_per_day(),
            seed: cfg.seed,
            epoch,
        },
        history,
    })
}

/// Horizon-wise metrics keyed `"1"`..`"T'"`, plus their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub num_windows: usize,
    pub horizons: BTreeMap<String, Metrics>,
    pub average: Metrics,
}

impl EvalReport {
    /// Metrics at 1-based horizon `h`.
    pub fn horizon(&self, h: usize) -> Option<&Metrics> {
        self.horizons.get(&h.to_string())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Builds a report from raw predictions laid out `[W × N × T']`.
pub fn report_from(
    split: &str,
    pred: &[f64],
    y: &[f64],
    mask: &[bool],
    t_out: usize,
) -> Result<EvalReport> {
    let mut horizons = BTreeMap::new();
    let mut per = Vec::with_capacity(t_out);
    for h in 0..t_out {
        let pick = |v: &[f64]| -> Vec<f64> { v.iter().skip(h).step_by(t_out).copied().collect() };
        let m: Vec<bool> = mask.iter().skip(h).step_by(t_out).copied().collect();
        let met = metrics(&pick(pred), &pick(y), &m)?;
        horizons.insert((h + 1).to_string(), met);
        per.push(met);
    }
    let k = per.len() as f64;
    let average = Metrics {
        mae: per.iter().map(|m| m.mae).sum::<f64>() / k,
        rmse: per.iter().map(|m| m.rmse).sum::<f64>() / k,
        mape: per.iter().map(|m| m.mape).sum::<f64>() / k,
    };
    Ok(EvalReport {
        split: split.to_string(),
        num_windows: pred.len() / t_out.max(1),
        horizons,
        average,
    })
}

pub fn evaluate(
    store: &ParamStore,
    meta: &CheckpointMeta,
    ds: &TrafficDataset,
    split: &str,
    range: Range<usize>,
) -> Result<EvalReport> {
    if ds.num_nodes() != meta.num_nodes {
        return Err(Error::shape("evaluate (nodes)", &[ds.num_nodes()], &[meta.num_nodes]));
    }
    let anchors = window_anchors(&range, meta.model.t_in, meta.model.t_out)?;
    let predictor = Predictor {
        store,
        cfg: &meta.model,
        norm: meta.norm,
    };
    let (pred, y, mask) = predictor.score(ds, &anchors)?;
    let mut report = report_from(split, &pred, &y, &mask, meta.model.t_out)?;
    report.num_windows = anchors.len();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, synth_dataset};
    use crate::gradcheck::{check_gradients, random_tensor};
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn loss_examples() {
        let y = [1.0, 2.0, 3.0];
        let y_hat = Tensor::from_vec(vec![2.0, 2.0, 5.0]);
        assert!(close(masked_mae_loss(&y_hat, &y, &[true; 3]).unwrap().item(), 1.0));
        assert!(close(masked_mae_loss(&y_hat, &y, &[true, false, false]).unwrap().item(), 1.0));
        let exact = Tensor::from_vec(y.to_vec());
        assert_eq!(masked_mae_loss(&exact, &y, &[true; 3]).unwrap().item(), 0.0);
        assert!(matches!(masked_mae_loss(&y_hat, &y, &[false; 3]), Err(Error::AllMasked)));
        assert!(matches!(metrics(&[1.0], &[1.0], &[false]), Err(Error::AllMasked)));
    }

    #[test]
    fn masked_entries_get_no_gradient() {
        let y_hat = Tensor::param(&[3], vec![2.0, 0.0, 5.0]).unwrap();
        masked_mae_loss(&y_hat, &[1.0, 2.0, 3.0], &[true, false, true])
            .unwrap()
            .backward()
            .unwrap();
        assert_eq!(y_hat.grad_vec().unwrap(), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let y: Vec<f64> = random_tensor(&mut rng, &[12], 3.0).to_vec();
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        let leaves = [random_tensor(&mut rng, &[12], 3.0)];
        check_gradients(&leaves, 1e-4, |l| masked_mae_loss(&l[0], &y, &mask).unwrap());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&[2.0, 2.0, 5.0], &[1.0, 2.0, 3.0], &[true; 3]).unwrap();
        assert!(close(m.mae, 1.0));
        assert!(close(m.rmse, (5.0f64 / 3.0).sqrt()));
        let m = metrics(&[2.0, 2.0, 5.0], &[1.0, 2.0, 4.0], &[true; 3]).unwrap();
        assert!(close(m.mape, 125.0 / 3.0));
        let m = metrics(&[1.0, 2.0], &[1.0, 2.0], &[true; 2]).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape), (0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn metrics_are_scale_consistent(
            pairs in proptest::collection::vec((1.0f64..100.0, 1.0f64..100.0, any::<bool>()), 1..30),
            c in prop_oneof![Just(0.5), Just(3.0)],
        ) {
            let y_hat: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mut mask: Vec<bool> = pairs.iter().map(|p| p.2).collect();
            mask[0] = true;
            let base = metrics(&y_hat, &y, &mask).unwrap();
            let scaled = metrics(
                &y_hat.iter().map(|v| v * c).collect::<Vec<_>>(),
                &y.iter().map(|v| v * c).collect::<Vec<_>>(),
                &mask,
            ).unwrap();
            prop_assert!((scaled.mae - c * base.mae).abs() < 1e-9 * (1.0 + base.mae));
            prop_assert!((scaled.rmse - c * base.rmse).abs() < 1e-9 * (1.0 + base.rmse));
            prop_assert!((scaled.mape - base.mape).abs() < 1e-9 * (1.0 + base.mape));
        }

        #[test]
        fn loss_and_metric_masking_agree(
            pairs in proptest::collection::vec((-50.0f64..50.0, 1.0f64..100.0, any::<bool>()), 1..30),
        ) {
            let y_hat: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mut mask: Vec<bool> = pairs.iter().map(|p| p.2).collect();
            mask[0] = true;
            let loss = masked_mae_loss(&Tensor::from_vec(y_hat.clone()), &y, &mask).unwrap().item();
            prop_assert!((loss - metrics(&y_hat, &y, &mask).unwrap().mae).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let cfg = TrainConfig::default();
        let mut store = ParamStore::new();
        store.insert("w", Tensor::param(&[2], vec![0.5, -0.25]).unwrap()).unwrap();
        let w = store.get("w").unwrap().clone();
        w.mul(&Tensor::from_vec(vec![1.0, 0.0])).unwrap().sum().backward().unwrap();
        let mut state = AdamState::new();
        adam_step(&mut store, &mut state, &cfg).unwrap();
        let after = store.get("w").unwrap().to_vec();
        assert!((after[0] - (0.5 - 1e-3)).abs() < 1e-9);
        assert_eq!(after[1], -0.25);
        assert!(store.get("w").unwrap().grad_vec().is_none());
        assert!(matches!(
            adam_step(&mut store, &mut state, &cfg),
            Err(Error::MissingGradient(p)) if p == "w"
        ));
    }

    #[test]
    fn patience_counts_epochs_without_improvement() {
        let mut es = EarlyStopping::new(30);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            // improves until epoch 7, then worsens monotonically
            let score = if epoch <= 7 { 10.0 - epoch as f64 } else { epoch as f64 };
            if es.update(score).1 {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(37));
    }

    #[test]
    fn report_slices_horizons() {
        let (w, n, t_out) = (3, 2, 12);
        let len = w * n * t_out;
        let y: Vec<f64> = (0..len).map(|i| 10.0 + i as f64).collect();
        let pred: Vec<f64> = (0..len).map(|i| 10.0 + i as f64 + (i % 5) as f64 - 2.0).collect();
        let mask: Vec<bool> = (0..len).map(|i| i % 7 != 3).collect();
        let r = report_from("val", &pred, &y, &mask, t_out).unwrap();
        let col = |v: &[f64]| -> Vec<f64> { (0..w * n).map(|row| v[row * t_out + 2]).collect() };
        let m: Vec<bool> = (0..w * n).map(|row| mask[row * t_out + 2]).collect();
        assert_eq!(*r.horizon(3).unwrap(), metrics(&col(&pred), &col(&y), &m).unwrap());
        let avg = (1..=12).map(|h| r.horizon(h).unwrap().mae).sum::<f64>() / 12.0;
        assert!((r.average.mae - avg).abs() < 1e-12);
        let exact = report_from("val", &y, &y, &mask, t_out).unwrap();
        assert!(exact.horizons.values().all(|m| m.mae == 0.0 && m.rmse == 0.0 && m.mape == 0.0));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let ds = synth_dataset(4, 2, 3).unwrap();
        let splits = split(ds.num_steps, (0.7, 0.1, 0.2)).unwrap();
        let cfg = ModelConfig {
            t_in: 4,
            t_out: 3,
            d_f: 2,
            d_a: 2,
            num_layers: 1,
            num_heads: 2,
            d_state: 2,
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            max_epochs: 2,
            max_batches_per_epoch: Some(3),
            max_val_windows: Some(8),
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&ds, &splits, &cfg, &tc).unwrap();
        let b = train(&ds, &splits, &cfg, &tc).unwrap();
        assert!(a.best.bit_eq(&b.best));
        assert_eq!(a.history, b.history);
        assert!(a.history.len() <= 2);
        let report = evaluate(&a.best, &a.meta, &ds, "test", splits.test.clone()).unwrap();
        assert_eq!(report.horizons.len(), 3);
        let other = synth_dataset(5, 2, 3).unwrap();
        assert!(matches!(
            evaluate(&a.best, &a.meta, &other, "test", splits.test.clone()),
            Err(Error::Shape { .. })
        ));
    }
}
