use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::numerics::{adam_step, matmul_raw, AdamConfig, Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    MicroF1,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MicroF1 => "micro_f1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Scale inputs to zero mean and unit variance using training statistics.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 500,
            adam: AdamConfig::default().with_learning_rate(1e-2),
            standardize: true,
        }
    }
}

/// Embeddings and their labels, row-aligned.
#[derive(Debug, Clone, Copy)]
pub struct ProbeData<'a> {
    pub embeddings: &'a Tensor,
    pub labels: &'a Labels,
}

impl<'a> ProbeData<'a> {
    pub fn new(embeddings: &'a Tensor, labels: &'a Labels) -> Self {
        ProbeData { embeddings, labels }
    }

    fn check(&self, dim: Option<usize>) -> Result<()> {
        if self.embeddings.rows() != self.labels.len() {
            return Err(Error::contract(format!(
                "{} embedding rows but {} labels",
                self.embeddings.rows(),
                self.labels.len()
            )));
        }
        if let Some(d) = dim {
            if self.embeddings.cols() != d {
                return Err(Error::dim(format!(
                    "probe trained on {} features, got {}",
                    d,
                    self.embeddings.cols()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub metric: Metric,
    pub train: f64,
    /// `None` when the split is empty.
    pub val: Option<f64>,
    pub test: Option<f64>,
    /// Row-major `D×C` weights acting on standardized inputs.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// A fitted linear classifier: softmax over classes, or one independent
/// sigmoid per label.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    multilabel: bool,
    mean: Vec<f64>,
    scale: Vec<f64>,
    weight: Parameter,
    bias: Parameter,
}

fn targets(labels: &Labels, outputs: usize) -> Vec<f64> {
    match labels {
        Labels::Multiclass(c) => {
            let mut y = vec![0.0; c.len() * outputs];
            for (i, &k) in c.iter().enumerate() {
                y[i * outputs + k] = 1.0;
            }
            y
        }
        Labels::Multilabel { values, .. } => values.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(logits: &mut [f64], cols: usize) {
    for row in logits.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

impl LinearProbe {
    pub fn is_multilabel(&self) -> bool {
        self.multilabel
    }

    pub fn num_outputs(&self) -> usize {
        self.weight.tensor().cols()
    }

    fn standardized(&self, z: &Tensor) -> Vec<f64> {
        let d = self.mean.len();
        let mut x = z.values().to_vec();
        for row in x.chunks_mut(d.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        x
    }

    fn logits_of(&self, x: &[f64], n: usize) -> Vec<f64> {
        let (d, c) = (self.mean.len(), self.num_outputs());
        let mut out = matmul_raw(x, self.weight.values(), n, d, c);
        for row in out.chunks_mut(c.max(1)) {
            row.iter_mut().zip(self.bias.values()).for_each(|(v, b)| *v += b);
        }
        out
    }

    /// Class probabilities (multiclass) or per-label probabilities.
    pub fn probabilities(&self, z: &Tensor) -> Result<Tensor> {
        if z.cols() != self.mean.len() {
            return Err(Error::dim(format!(
                "probe trained on {} features, got {}",
                self.mean.len(),
                z.cols()
            )));
        }
        let n = z.rows();
        let c = self.num_outputs();
        let mut p = self.logits_of(&self.standardized(z), n);
        if self.multilabel {
            p.iter_mut().for_each(|v| *v = sigmoid(*v));
        } else {
            softmax_rows(&mut p, c);
        }
        Tensor::matrix(n, c, p)
    }

    pub fn predict(&self, z: &Tensor) -> Result<Labels> {
        let p = self.probabilities(z)?;
        let c = self.num_outputs();
        Ok(if self.multilabel {
            Labels::Multilabel {
                num_labels: c,
                values: p.values().iter().map(|&v| v > 0.5).collect(),
            }
        } else {
            Labels::Multiclass(
                p.values()
                    .chunks(c)
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                            .0
                    })
                    .collect(),
            )
        })
    }

    /// Accuracy or micro-F1 on `data`; `None` for an empty set.
    pub fn score(&self, data: ProbeData<'_>) -> Result<Option<f64>> {
        data.check(Some(self.mean.len()))?;
        if data.labels.is_empty() {
            return Ok(None);
        }
        let pred = self.predict(data.embeddings)?;
        Ok(Some(if self.multilabel { micro_f1(&pred, data.labels)? } else { accuracy(&pred, data.labels)? }))
    }

    /// Mean training loss (cross-entropy) and its gradients with respect to
    /// the weight matrix and bias, for standardized inputs `x`.
    pub(crate) fn loss_and_grad(&self, x: &[f64], y: &[f64], n: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let (d, c) = (self.mean.len(), self.num_outputs());
        let logits = self.logits_of(x, n);
        let mut loss = 0.0;
        let mut delta = logits.clone();
        if self.multilabel {
            for ((dv, &z), &t) in delta.iter_mut().zip(&logits).zip(y) {
                // log(1 + e^z) − t·z, computed stably.
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
                *dv = sigmoid(z) - t;
            }
        } else {
            for (row, t) in delta.chunks_mut(c).zip(y.chunks(c)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for (v, &tv) in row.iter_mut().zip(t) {
                    loss += tv * (lse - *v);
                    *v = (*v - lse).exp() - tv;
                }
            }
        }
        let inv = 1.0 / n as f64;
        loss *= inv;
        delta.iter_mut().for_each(|v| *v *= inv);
        let mut gw = vec![0.0; d * c];
        let mut gb = vec![0.0; c];
        for (xr, dr) in x.chunks(d.max(1)).zip(delta.chunks(c)) {
            for (k, &dv) in dr.iter().enumerate() {
                gb[k] += dv;
                for (j, &xv) in xr.iter().enumerate() {
                    gw[j * c + k] += xv * dv;
                }
            }
        }
        (loss, gw, gb)
    }

    pub fn weights(&self) -> &Tensor {
        self.weight.tensor()
    }

    pub fn bias(&self) -> &[f64] {
        self.bias.values()
    }
}

/// Fits a linear classifier full-batch with Adam from a zero start.
pub fn fit_probe(train: ProbeData<'_>, cfg: &ProbeConfig) -> Result<LinearProbe> {
    train.check(None)?;
    cfg.adam.validate()?;
    let (n, d) = (train.embeddings.rows(), train.embeddings.cols());
    if n == 0 {
        return Err(Error::contract("the probe needs at least one training row"));
    }
    let c = train.labels.num_classes();
    let (mut mean, mut scale) = (vec![0.0; d], vec![1.0; d]);
    if cfg.standardize {
        for row in train.embeddings.values().chunks(d.max(1)) {
            row.iter().zip(mean.iter_mut()).for_each(|(v, m)| *m += v / n as f64);
        }
        let mut var = vec![0.0; d];
        for row in train.embeddings.values().chunks(d.max(1)) {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2) / n as f64;
            }
        }
        for (s, v) in scale.iter_mut().zip(var) {
            *s = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
        }
    }
    let mut probe = LinearProbe {
        multilabel: train.labels.is_multilabel(),
        mean,
        scale,
        weight: Parameter::new("probe.weight", Tensor::zeros(vec![d, c])),
        bias: Parameter::new("probe.bias", Tensor::zeros(vec![c])),
    };
    let x = probe.standardized(train.embeddings);
    let y = targets(train.labels, c);
    for _ in 0..cfg.epochs {
        let (_, gw, gb) = probe.loss_and_grad(&x, &y, n);
        probe.weight.set_grad(gw)?;
        probe.bias.set_grad(gb)?;
        adam_step(&mut [&mut probe.weight, &mut probe.bias], &cfg.adam)?;
    }
    Ok(probe)
}

/// Fits on `train` and scores all three splits.
pub fn linear_probe(
    train: ProbeData<'_>,
    val: ProbeData<'_>,
    test: ProbeData<'_>,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let probe = fit_probe(train, cfg)?;
    let train_score = probe.score(train)?.expect("training set is non-empty");
    let w = probe.weights();
    Ok(ProbeResult {
        metric: if probe.is_multilabel() { Metric::MicroF1 } else { Metric::Accuracy },
        train: train_score,
        val: probe.score(val)?,
        test: probe.score(test)?,
        weights: (0..w.rows()).map(|i| w.row(i).to_vec()).collect(),
        bias: probe.bias().to_vec(),
    })
}

pub fn accuracy(pred: &Labels, truth: &Labels) -> Result<f64> {
    match (pred, truth) {
        (Labels::Multiclass(p), Labels::Multiclass(t)) if p.len() == t.len() => {
            if t.is_empty() {
                return Ok(0.0);
            }
            Ok(p.iter().zip(t).filter(|(a, b)| a == b).count() as f64 / t.len() as f64)
        }
        _ => Err(Error::contract("accuracy needs two multiclass label sets of equal length")),
    }
}

/// Micro-averaged F1 over all (node, label) pairs. With no positive
/// predictions and no positive labels the score is 1.
pub fn micro_f1(pred: &Labels, truth: &Labels) -> Result<f64> {
    match (pred, truth) {
        (
            Labels::Multilabel { num_labels: a, values: p },
            Labels::Multilabel { num_labels: b, values: t },
        ) if a == b && p.len() == t.len() => {
            let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
            for (&x, &y) in p.iter().zip(t) {
                match (x, y) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    _ => {}
                }
            }
            if tp + fp + fneg == 0 {
                return Ok(1.0);
            }
            Ok(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64)
        }
        _ => Err(Error::contract("micro-F1 needs two multilabel sets of equal shape")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Tensor, Labels) {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let s = if i < 10 { -1.0 } else { 1.0 };
                vec![s * 2.0 + (i % 5) as f64 * 0.1, s - (i % 3) as f64 * 0.1]
            })
            .collect();
        let labels = Labels::Multiclass((0..20).map(|i| usize::from(i >= 10)).collect());
        (Tensor::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (z, y) = blobs();
        let d = ProbeData::new(&z, &y);
        let r = linear_probe(d, d, d, &ProbeConfig::default()).unwrap();
        assert_eq!(r.metric, Metric::Accuracy);
        assert_eq!(r.test, Some(1.0));
    }

    #[test]
    fn row_mismatch_is_rejected() {
        let (z, _) = blobs();
        let y = Labels::Multiclass(vec![0; 3]);
        let d = ProbeData::new(&z, &y);
        assert!(matches!(fit_probe(d, &ProbeConfig::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn micro_f1_counts() {
        let t = Labels::Multilabel {
            num_labels: 2,
            values: vec![true, false, true, true],
        };
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        let p = Labels::Multilabel {
            num_labels: 2,
            values: vec![true, true, false, true],
        };
        // tp 2, fp 1, fn 1
        assert!((micro_f1(&p, &t).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let none = Labels::Multilabel {
            num_labels: 2,
            values: vec![false; 4],
        };
        assert_eq!(micro_f1(&none, &none).unwrap(), 1.0);
    }
}
