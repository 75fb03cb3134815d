//! Small feedforward networks trained to stable convergence with plain
//! seeded SGD. Biases are absorbed: each layer's input is augmented with a
//! constant 1 and the weight matrix carries a matching extra row, so one
//! matrix per layer holds the full affine map.

use crate::error::{Error, Result};
use crate::graph::DataSet;
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    // ReLU subgradient at 0 is taken as 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    /// Linear output head.
    Linear,
    /// Same nonlinearity as the hidden layers.
    Same,
}

/// Per-layer (pre-activation, post-activation) vectors for one sample.
type ForwardTrace = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Layer matrices are (fan_in + 1) x fan_out; the extra last row is the
/// absorbed bias.
#[derive(Debug, Clone)]
pub struct MLPModel {
    pub layers: Vec<Matrix>,
    pub activation: Activation,
    pub final_activation: FinalActivation,
}

impl MLPModel {
    /// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    pub fn init(
        widths: &[usize],
        activation: Activation,
        final_activation: FinalActivation,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least input and output widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..(fan_in + 1) * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            layers.push(Matrix::new(fan_in + 1, fan_out, data)?);
        }
        Ok(Self {
            layers,
            activation,
            final_activation,
        })
    }

    pub fn from_layers(
        layers: Vec<Matrix>,
        activation: Activation,
        final_activation: FinalActivation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].cols() + 1 != w[1].rows() {
                return Err(Error::ShapeMismatch {
                    op: "layer chain",
                    lhs: (w[0].rows(), w[0].cols()),
                    rhs: (w[1].rows(), w[1].cols()),
                });
            }
        }
        Ok(Self {
            layers,
            activation,
            final_activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows() - 1
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().cols()
    }

    fn layer_forward(&self, w: &Matrix, input: &[f64]) -> Vec<f64> {
        let fan_in = w.rows() - 1;
        debug_assert_eq!(input.len(), fan_in);
        (0..w.cols())
            .map(|j| {
                let mut z = w.get(fan_in, j); // bias row
                for i in 0..fan_in {
                    z += input[i] * w.get(i, j);
                }
                z
            })
            .collect()
    }

    /// Full forward pass: pre-activations and post-activation outputs per
    /// layer.
    fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: (1, x.len()),
                rhs: (1, self.input_dim()),
            });
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (l, w) in self.layers.iter().enumerate() {
            let z = self.layer_forward(w, &a);
            let out: Vec<f64> = if l == last && self.final_activation == FinalActivation::Linear {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            a = out.clone();
            post.push(out);
        }
        Ok((pre, post))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, post) = self.forward_trace(x)?;
        let out = post.last().unwrap().clone();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "forward output".into(),
            });
        }
        Ok(out)
    }

    /// Bias-augmented input each layer sees, one row per dataset sample.
    pub fn layer_inputs(&self, data: &DataSet) -> Result<Vec<Matrix>> {
        let p = data.len();
        let mut out: Vec<Matrix> = self
            .layers
            .iter()
            .map(|w| Matrix::zeros(p, w.rows()))
            .collect();
        for r in 0..p {
            let x: Vec<f64> = data.points.row(r).to_vec();
            let (_, post) = self.forward_trace(&x)?;
            for l in 0..self.layers.len() {
                let input: &[f64] = if l == 0 { &x } else { &post[l - 1] };
                for (c, &v) in input.iter().enumerate() {
                    out[l].set(r, c, v);
                }
                out[l].set(r, self.layers[l].rows() - 1, 1.0);
            }
        }
        Ok(out)
    }

    /// Post-activation outputs of one layer, one row per dataset sample.
    pub fn layer_outputs(&self, data: &DataSet, layer: usize) -> Result<Matrix> {
        let p = data.len();
        let mut m = Matrix::zeros(p, self.layers[layer].cols());
        for r in 0..p {
            let (_, post) = self.forward_trace(data.points.row(r))?;
            for (c, &v) in post[layer].iter().enumerate() {
                m.set(r, c, v);
            }
        }
        Ok(m)
    }

    fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|w| w.data().to_vec()).collect()
    }

    fn unflatten(&self, flat: &[f64]) -> Result<Vec<Matrix>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for w in &self.layers {
            let n = w.rows() * w.cols();
            out.push(Matrix::new(w.rows(), w.cols(), flat[offset..offset + n].to_vec())?);
            offset += n;
        }
        Ok(out)
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|w| w.rows() * w.cols()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Relative gradient tolerance: training stops when the full-batch
    /// gradient norm falls to `grad_tol * (1 + loss)`.
    pub grad_tol: f64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_epochs: 20_000,
            batch: usize::MAX,
            seed: 42,
            grad_tol: 1.0e-4,
            loss: Loss::Mse,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    pub final_loss: f64,
    pub grad_norm: f64,
    /// `grad_tol * (1 + final_loss)` at the stopping epoch.
    pub grad_tol_effective: f64,
    pub epochs_used: usize,
    pub stable: bool,
    /// Largest observed `||dW|| / ||d grad||` ratio over the final epochs
    /// (reported, never asserted).
    pub stability_constant_estimate: f64,
}

/// Mean-squared-error loss over the dataset and its gradient per layer.
pub fn loss_and_gradient(model: &MLPModel, data: &DataSet) -> Result<(f64, Vec<Matrix>)> {
    let targets = data
        .targets
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset has no targets".into()))?;
    let idx: Vec<usize> = (0..data.len()).collect();
    loss_and_gradient_subset(model, data, targets, &idx)
}

fn loss_and_gradient_subset(
    model: &MLPModel,
    data: &DataSet,
    targets: &Matrix,
    rows: &[usize],
) -> Result<(f64, Vec<Matrix>)> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let last = model.layers.len() - 1;
    let mut grads: Vec<Matrix> = model
        .layers
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut loss = 0.0;
    for &r in rows {
        let x = data.points.row(r);
        let y = targets.row(r);
        let (pre, post) = model.forward_trace(x)?;
        let yhat = &post[last];
        let mut delta: Vec<f64> = yhat
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let d = a - b;
                loss += d * d;
                2.0 * d / n as f64
            })
            .collect();
        if model.final_activation == FinalActivation::Same {
            for (d, &z) in delta.iter_mut().zip(&pre[last]) {
                *d *= model.activation.derivative(z);
            }
        }
        for l in (0..=last).rev() {
            let w = &model.layers[l];
            let fan_in = w.rows() - 1;
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                post[l - 1].clone()
            };
            for j in 0..w.cols() {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let g = &mut grads[l];
                for i in 0..fan_in {
                    let cur = g.get(i, j);
                    g.set(i, j, cur + input[i] * dj);
                }
                let cur = g.get(fan_in, j);
                g.set(fan_in, j, cur + dj);
            }
            if l > 0 {
                let mut next = vec![0.0; fan_in];
                for i in 0..fan_in {
                    let mut acc = 0.0;
                    for j in 0..w.cols() {
                        acc += w.get(i, j) * delta[j];
                    }
                    next[i] = acc * model.activation.derivative(pre[l - 1][i]);
                }
                delta = next;
            }
        }
    }
    Ok((loss / n as f64, grads))
}

fn grad_norm(grads: &[Matrix]) -> f64 {
    grads
        .iter()
        .map(|g| {
            let n = g.frobenius_norm();
            n * n
        })
        .sum::<f64>()
        .sqrt()
}

/// Deterministic full/mini-batch SGD; batches are consecutive slices in
/// dataset order, so identical seeds give bit-identical runs.
pub fn train(model: &mut MLPModel, data: &DataSet, cfg: &TrainConfig) -> Result<ConvergenceCertificate> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let targets = data
        .targets
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset has no targets".into()))?
        .clone();
    if targets.cols() != model.output_dim() || data.points.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "train",
            lhs: (data.points.cols(), targets.cols()),
            rhs: (model.input_dim(), model.output_dim()),
        });
    }
    let p = data.len();
    let batch = cfg.batch.clamp(1, p);
    let all: Vec<usize> = (0..p).collect();

    // ring buffer of (weights, gradient) snapshots for the M* estimate
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut certificate = None;
    let mut loss_ceiling = f64::INFINITY;
    for epoch in 0..=cfg.max_epochs {
        let (loss, grads) = loss_and_gradient_subset(model, data, &targets, &all)?;
        // A loss that blows up by many orders of magnitude would otherwise
        // pass the relative gradient tolerance; treat it as divergence.
        if !loss.is_finite() || loss > loss_ceiling {
            return Err(Error::Diverged { epoch });
        }
        if epoch == 0 {
            loss_ceiling = 1.0e9 * (1.0 + loss);
        }
        let gnorm = grad_norm(&grads);
        let flat_g: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
        history.push((model.flatten(), flat_g));
        if history.len() > 11 {
            history.remove(0);
        }
        let effective = cfg.grad_tol * (1.0 + loss);
        if gnorm <= effective || epoch == cfg.max_epochs {
            certificate = Some(ConvergenceCertificate {
                final_loss: loss,
                grad_norm: gnorm,
                grad_tol_effective: effective,
                epochs_used: epoch,
                stable: gnorm <= effective,
                stability_constant_estimate: stability_estimate(&history),
            });
            break;
        }
        for chunk in all.chunks(batch) {
            let (_, g) = loss_and_gradient_subset(model, data, &targets, chunk)?;
            for (w, gw) in model.layers.iter_mut().zip(&g) {
                let updated = w.sub(&gw.scale(cfg.learning_rate))?;
                *w = updated;
            }
        }
    }
    Ok(certificate.expect("loop always sets the certificate"))
}

fn stability_estimate(history: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut best = 0.0f64;
    for pair in history.windows(2) {
        let dw: f64 = pair[0]
            .0
            .iter()
            .zip(&pair[1].0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let dg: f64 = pair[0]
            .1
            .iter()
            .zip(&pair[1].1)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dg > 1.0e-300 {
            best = best.max(dw / dg);
        }
    }
    best.max(f64::MIN_POSITIVE)
}

const FD_STEP: f64 = 1.0e-5;
const KINK_MARGIN: f64 = 1.0e-6;

/// Max relative disagreement between the analytic gradient and central
/// finite differences over at least 100 sampled weights. For ReLU models,
/// samples whose pre-activations sit within the kink margin of zero are
/// excluded from the loss on both routes.
pub fn gradient_check(model: &MLPModel, data: &DataSet) -> Result<f64> {
    let targets = data
        .targets
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset has no targets".into()))?
        .clone();
    let rows: Vec<usize> = match model.activation {
        Activation::Tanh => (0..data.len()).collect(),
        Activation::Relu => (0..data.len())
            .filter(|&r| {
                let (pre, _) = model.forward_trace(data.points.row(r)).unwrap();
                pre.iter().flatten().all(|z| z.abs() > KINK_MARGIN)
            })
            .collect(),
    };
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "every sample sits on a ReLU kink; nothing to check".into(),
        ));
    }
    let (_, grads) = loss_and_gradient_subset(model, data, &targets, &rows)?;
    let flat_grad: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
    let flat_w = model.flatten();
    let total = flat_w.len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let samples = 100;
    let mut max_rel = 0.0f64;
    for _ in 0..samples {
        let idx = rng.gen_range(0..total);
        let mut wp = flat_w.clone();
        wp[idx] += FD_STEP;
        let plus = loss_at(model, data, &targets, &rows, &wp)?;
        wp[idx] = flat_w[idx] - FD_STEP;
        let minus = loss_at(model, data, &targets, &rows, &wp)?;
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let analytic = flat_grad[idx];
        let scale = analytic.abs().max(fd.abs()).max(1.0e-6);
        max_rel = max_rel.max((analytic - fd).abs() / scale);
    }
    Ok(max_rel)
}

fn loss_at(
    model: &MLPModel,
    data: &DataSet,
    targets: &Matrix,
    rows: &[usize],
    flat: &[f64],
) -> Result<f64> {
    let probe = MLPModel {
        layers: model.unflatten(flat)?,
        activation: model.activation,
        final_activation: model.final_activation,
    };
    let (loss, _) = loss_and_gradient_subset(&probe, data, targets, rows)?;
    Ok(loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingCheckParams {
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub train_bound: f64,
    pub perturbed_bound: f64,
    pub force: bool,
}

impl Default for EncodingCheckParams {
    fn default() -> Self {
        Self {
            delta: 1.0e-2,
            trials: 20,
            seed: 42,
            train_bound: 0.1,
            perturbed_bound: 0.5,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingCheckReport {
    /// Max infinity-norm training error over the dataset.
    pub epsilon_train: f64,
    pub delta_probe: f64,
    /// Max infinity-norm output change over all perturbations and samples.
    pub epsilon_perturbed: f64,
    pub passed: bool,
}

/// Empirical encoding check: training-set approximation error plus output
/// stability under seeded weight perturbations of Frobenius radius delta.
/// Perturbation directions depend only on (seed, trial), so a delta sweep
/// with a shared seed probes the same directions at every radius.
pub fn encoding_check(
    model: &MLPModel,
    certificate: Option<&ConvergenceCertificate>,
    data: &DataSet,
    params: &EncodingCheckParams,
) -> Result<EncodingCheckReport> {
    if !params.force && !certificate.map(|c| c.stable).unwrap_or(false) {
        return Err(Error::NotConverged);
    }
    if params.delta < 0.0 {
        return Err(Error::InvalidArgument("delta must be nonnegative".into()));
    }
    let targets = data
        .targets
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("dataset has no targets".into()))?;

    let p = data.len();
    let base_outputs: Vec<Vec<f64>> = (0..p)
        .map(|r| model.forward(data.points.row(r)))
        .collect::<Result<_>>()?;

    let mut epsilon_train = 0.0f64;
    for r in 0..p {
        for (a, b) in base_outputs[r].iter().zip(targets.row(r)) {
            epsilon_train = epsilon_train.max((a - b).abs());
        }
    }

    let flat = model.flatten();
    let mut epsilon_perturbed = 0.0f64;
    if params.delta > 0.0 {
        for trial in 0..params.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ trial as u64);
            let mut dir: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in dir.iter_mut() {
                *v *= params.delta / norm;
            }
            let perturbed: Vec<f64> = flat.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let probe = MLPModel {
                layers: model.unflatten(&perturbed)?,
                activation: model.activation,
                final_activation: model.final_activation,
            };
            for r in 0..p {
                let out = probe.forward(data.points.row(r))?;
                for (a, b) in out.iter().zip(&base_outputs[r]) {
                    epsilon_perturbed = epsilon_perturbed.max((a - b).abs());
                }
            }
        }
    }

    Ok(EncodingCheckReport {
        epsilon_train,
        delta_probe: params.delta,
        epsilon_perturbed,
        passed: epsilon_train < params.train_bound && epsilon_perturbed < params.perturbed_bound,
    })
}

/// The canonical 4-point XOR dataset.
pub fn xor_dataset() -> DataSet {
    let points = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
    ])
    .unwrap();
    let targets =
        Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0]]).unwrap();
    DataSet::new(points, Some(targets)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> DataSet {
        DataSet::new(
            Matrix::from_rows(xs).unwrap(),
            Some(Matrix::from_rows(ys).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn forward_zero_weights_relu() {
        let model = MLPModel::from_layers(
            vec![Matrix::zeros(3, 2)],
            Activation::Relu,
            FinalActivation::Same,
        )
        .unwrap();
        assert_eq!(model.forward(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_identity_linear_layer() {
        // weights = I with zero bias row, linear head
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let model =
            MLPModel::from_layers(vec![w], Activation::Tanh, FinalActivation::Linear).unwrap();
        assert_eq!(model.forward(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn forward_tanh_scalar_oracle() {
        // 1-1-1 tanh net, all weights (incl. bias) = 1, linear head:
        // layer1: tanh(0*1 + 1) = tanh(1); layer2: tanh(1)*1 + 1
        let ones = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let model = MLPModel::from_layers(
            vec![ones.clone(), ones],
            Activation::Tanh,
            FinalActivation::Linear,
        )
        .unwrap();
        let out = model.forward(&[0.0]).unwrap();
        let expect = 1.0_f64.tanh() + 1.0;
        assert!((out[0] - expect).abs() < 1e-12);
        assert!((out[0] - 1.7615941559557649).abs() < 1e-12);
    }

    #[test]
    fn forward_shape_mismatch() {
        let model =
            MLPModel::init(&[2, 3, 1], Activation::Tanh, FinalActivation::Linear, 1).unwrap();
        assert!(model.forward(&[1.0]).is_err());
    }

    #[test]
    fn train_already_converged_stops_at_epoch_zero() {
        // zero weights, zero targets: loss 0, gradient 0
        let mut model = MLPModel::from_layers(
            vec![Matrix::zeros(2, 1)],
            Activation::Tanh,
            FinalActivation::Linear,
        )
        .unwrap();
        let data = dataset(&[vec![1.0], vec![-1.0]], &[vec![0.0], vec![0.0]]);
        let cert = train(&mut model, &data, &TrainConfig::default()).unwrap();
        assert_eq!(cert.epochs_used, 0);
        assert!(cert.stable);
        assert!(cert.grad_norm <= cert.grad_tol_effective);
    }

    #[test]
    fn train_zero_learning_rate_is_a_noop() {
        let mut model =
            MLPModel::init(&[1, 2, 1], Activation::Tanh, FinalActivation::Linear, 7).unwrap();
        let before = model.flatten();
        let data = dataset(&[vec![0.5]], &[vec![2.0]]);
        let (_, grads) = loss_and_gradient(&model, &data).unwrap();
        let initial = grad_norm(&grads);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let cert = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(model.flatten(), before);
        assert!((cert.grad_norm - initial).abs() < 1e-15);
    }

    #[test]
    fn train_is_bit_identical_across_runs() {
        let data = xor_dataset();
        let cfg = TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let mut a = MLPModel::init(&[2, 4, 1], Activation::Tanh, FinalActivation::Linear, 3).unwrap();
        let mut b = MLPModel::init(&[2, 4, 1], Activation::Tanh, FinalActivation::Linear, 3).unwrap();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn gradient_linear_regression_oracle() {
        // single linear layer, MSE: analytic gradient is 2 (Wx - y) x^T / p
        let w = Matrix::from_rows(&[vec![0.7], vec![-0.2]]).unwrap(); // weight 0.7, bias -0.2
        let model =
            MLPModel::from_layers(vec![w], Activation::Tanh, FinalActivation::Linear).unwrap();
        let data = dataset(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![0.5]]);
        let (_, grads) = loss_and_gradient(&model, &data).unwrap();
        // residuals: 0.7*1 - 0.2 - 1 = -0.5 ; 0.7*2 - 0.2 - 0.5 = 0.7
        let gw = (2.0 / 2.0) * (-0.5 * 1.0 + 0.7 * 2.0);
        let gb = (2.0 / 2.0) * (-0.5 + 0.7);
        assert!((grads[0].get(0, 0) - gw).abs() < 1e-12);
        assert!((grads[0].get(1, 0) - gb).abs() < 1e-12);
        assert!(gradient_check(&model, &data).unwrap() <= 1e-6);
    }

    #[test]
    fn gradient_zero_residual_dataset() {
        let w = Matrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        let model =
            MLPModel::from_layers(vec![w], Activation::Tanh, FinalActivation::Linear).unwrap();
        let data = dataset(&[vec![1.0], vec![3.0]], &[vec![2.0], vec![6.0]]);
        let (loss, grads) = loss_and_gradient(&model, &data).unwrap();
        assert!(loss < 1e-20);
        assert!(grad_norm(&grads) <= 1e-10);
    }

    #[test]
    fn gradient_check_deep_tanh() {
        let model =
            MLPModel::init(&[3, 5, 4, 2], Activation::Tanh, FinalActivation::Linear, 11).unwrap();
        let data = dataset(
            &[vec![0.1, -0.4, 0.8], vec![0.9, 0.2, -0.3], vec![-0.6, 0.5, 0.2]],
            &[vec![0.3, -0.1], vec![-0.2, 0.7], vec![0.5, 0.4]],
        );
        assert!(gradient_check(&model, &data).unwrap() <= 1e-4);
    }

    #[test]
    fn gradient_check_relu_kink_excluded() {
        let model =
            MLPModel::init(&[2, 6, 1], Activation::Relu, FinalActivation::Linear, 5).unwrap();
        let data = dataset(
            &[vec![0.3, 0.9], vec![-0.5, 0.4], vec![0.7, -0.8]],
            &[vec![1.0], vec![-0.5], vec![0.2]],
        );
        assert!(gradient_check(&model, &data).unwrap() <= 1e-4);
    }

    #[test]
    fn encoding_check_zero_delta() {
        let model = MLPModel::from_layers(
            vec![Matrix::zeros(2, 1)],
            Activation::Tanh,
            FinalActivation::Linear,
        )
        .unwrap();
        let data = dataset(&[vec![1.0]], &[vec![0.0]]);
        let params = EncodingCheckParams {
            delta: 0.0,
            force: true,
            ..EncodingCheckParams::default()
        };
        let report = encoding_check(&model, None, &data, &params).unwrap();
        assert_eq!(report.epsilon_perturbed, 0.0);
    }

    #[test]
    fn encoding_check_linear_operator_norm_bound() {
        // linear 1-layer model: output change is bounded by
        // delta * max_i ||(x_i, 1)||_2 (Cauchy-Schwarz on the flat weights)
        let w = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let model =
            MLPModel::from_layers(vec![w], Activation::Tanh, FinalActivation::Linear).unwrap();
        let data = dataset(&[vec![2.0], vec![-3.0]], &[vec![2.5], vec![-2.5]]);
        let delta = 0.05;
        let params = EncodingCheckParams {
            delta,
            trials: 50,
            force: true,
            ..EncodingCheckParams::default()
        };
        let report = encoding_check(&model, None, &data, &params).unwrap();
        let bound = delta * (9.0 + 1.0_f64).sqrt();
        assert!(report.epsilon_perturbed <= bound + 1e-12);
    }

    #[test]
    fn encoding_check_requires_convergence() {
        let model =
            MLPModel::init(&[1, 1], Activation::Tanh, FinalActivation::Linear, 1).unwrap();
        let data = dataset(&[vec![1.0]], &[vec![0.0]]);
        let params = EncodingCheckParams::default();
        assert!(matches!(
            encoding_check(&model, None, &data, &params),
            Err(Error::NotConverged)
        ));
    }

    #[test]
    fn encoding_perturbation_monotone_in_delta() {
        let mut model =
            MLPModel::init(&[2, 4, 1], Activation::Tanh, FinalActivation::Linear, 9).unwrap();
        let data = xor_dataset();
        let cfg = TrainConfig {
            max_epochs: 500,
            ..TrainConfig::default()
        };
        train(&mut model, &data, &cfg).unwrap();
        let mut last = -1.0;
        for delta in [0.0, 1.0e-3, 1.0e-2, 1.0e-1] {
            let params = EncodingCheckParams {
                delta,
                trials: 10,
                seed: 17,
                force: true,
                ..EncodingCheckParams::default()
            };
            let r = encoding_check(&model, None, &data, &params).unwrap();
            assert!(
                r.epsilon_perturbed >= last,
                "not monotone at delta={delta}: {} < {last}",
                r.epsilon_perturbed
            );
            last = r.epsilon_perturbed;
        }
    }
}
