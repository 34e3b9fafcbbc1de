//! Two-layer classifier with a perturbation slot between the first linear
//! map and the activation:
//!
//! ```text
//! x → Linear(H) → Perturbation → ReLU | Abs → Linear(10) → logits
//! ```
//!
//! Training is plain full-batch gradient descent on the mean cross-entropy,
//! with the perturbation held at identity.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::idx::{LabelSet, NUM_CLASSES};
use crate::numerics::{init_linear, Matrix, Rng, ShapeMismatch};
use crate::perturb::PerturbationConfig;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("loss became {loss} at epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActivationKind {
    Relu,
    Abs,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 2] = [ActivationKind::Relu, ActivationKind::Abs];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            ActivationKind::Abs => z.abs(),
        }
    }

    /// ReLU′(0) = Abs′(0) = 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Abs => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Abs => "abs",
        }
    }

    /// Display label used in tables and legends.
    pub fn label(self) -> &'static str {
        match self {
            ActivationKind::Relu => "ReLU",
            ActivationKind::Abs => "Abs",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ActivationKind::Relu => 0,
            ActivationKind::Abs => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ActivationKind::Relu),
            1 => Some(ActivationKind::Abs),
            _ => None,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "abs" => Ok(ActivationKind::Abs),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `H×d`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `10×H`
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub activation: ActivationKind,
}

impl ModelParams {
    pub fn init(rng: &mut Rng, input_dim: usize, hidden: usize, activation: ActivationKind) -> Self {
        let (w1, b1) = init_linear(rng, input_dim, hidden);
        let (w2, b2) = init_linear(rng, hidden, NUM_CLASSES);
        Self { w1, b1, w2, b2, activation }
    }

    pub fn zeros(input_dim: usize, hidden: usize, activation: ActivationKind) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input_dim),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(NUM_CLASSES, hidden),
            b2: vec![0.0; NUM_CLASSES],
            activation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Rounds every parameter through `f32`, matching what a checkpoint
    /// stores.
    pub fn quantized_f32(&self) -> Self {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        let qm = |m: &Matrix| Matrix::from_vec(m.rows(), m.cols(), q(m.as_slice())).unwrap();
        Self { w1: qm(&self.w1), b1: q(&self.b1), w2: qm(&self.w2), b2: q(&self.b2), activation: self.activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 5000, learning_rate: 0.001, hidden: 784, seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs < 1 {
            return Err(ModelError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.hidden < 1 {
            return Err(ModelError::InvalidConfig("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Hidden pre-activation `z = x·w1ᵀ + b1`, before perturbation.
    pub preact: Matrix,
    /// `act(perturb(z))`
    pub hidden_out: Matrix,
    pub logits: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.w1
            .as_slice()
            .iter()
            .chain(&self.b1)
            .chain(self.w2.as_slice())
            .chain(&self.b2)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

pub fn preactivation(params: &ModelParams, x: &Matrix) -> Result<Matrix, ShapeMismatch> {
    let mut z = x.matmul_transb(&params.w1)?;
    z.add_row_vector(&params.b1)?;
    Ok(z)
}

/// Everything after the pre-activation: perturb, activate, project.
/// Returns `(hidden_out, logits)`.
pub fn head_from_preact(
    params: &ModelParams,
    preact: &Matrix,
    pert: Option<&PerturbationConfig>,
) -> Result<(Matrix, Matrix), ShapeMismatch> {
    let mut hidden = match pert {
        Some(p) => p.apply(preact)?,
        None => preact.clone(),
    };
    let act = params.activation;
    hidden.map_inplace(|z| act.apply(z));
    let mut logits = hidden.matmul_transb(&params.w2)?;
    logits.add_row_vector(&params.b2)?;
    Ok((hidden, logits))
}

pub fn forward(params: &ModelParams, x: &Matrix, pert: &PerturbationConfig) -> Result<ForwardTrace, ModelError> {
    if pert.hidden() != params.hidden() {
        return Err(ShapeMismatch::new("forward", (1, pert.hidden()), params.w1.shape()).into());
    }
    let preact = preactivation(params, x)?;
    let (hidden_out, logits) = head_from_preact(params, &preact, Some(pert))?;
    Ok(ForwardTrace { preact, hidden_out, logits })
}

/// Forward pass with the perturbation stage removed altogether.
pub fn forward_unperturbed(params: &ModelParams, x: &Matrix) -> Result<ForwardTrace, ModelError> {
    let preact = preactivation(params, x)?;
    let (hidden_out, logits) = head_from_preact(params, &preact, None)?;
    Ok(ForwardTrace { preact, hidden_out, logits })
}

fn check_labels(logits: &Matrix, labels: &LabelSet) -> Result<(), ShapeMismatch> {
    if logits.rows() != labels.len() || logits.cols() != NUM_CLASSES {
        return Err(ShapeMismatch::new("labels", logits.shape(), (labels.len(), NUM_CLASSES)));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = out.cols();
    for row in out.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean over rows of `−log softmax(logits)[label]`.
pub fn loss_cross_entropy(logits: &Matrix, labels: &LabelSet) -> Result<f64, ShapeMismatch> {
    check_labels(logits, labels)?;
    let n = logits.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = logits
        .row_iter()
        .zip(&labels.labels)
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            lse - row[y as usize]
        })
        .sum();
    Ok(total / n as f64)
}

/// Gradients of the mean cross-entropy for a trace taken with the identity
/// perturbation.
pub fn backward(
    params: &ModelParams,
    x: &Matrix,
    labels: &LabelSet,
    trace: &ForwardTrace,
) -> Result<Gradients, ModelError> {
    check_labels(&trace.logits, labels)?;
    if x.rows() != labels.len() || trace.preact.shape() != (x.rows(), params.hidden()) {
        return Err(ShapeMismatch::new("backward", x.shape(), trace.preact.shape()).into());
    }
    let n = x.rows().max(1) as f64;

    let mut delta = softmax_rows(&trace.logits);
    for (row, &y) in delta.as_mut_slice().chunks_exact_mut(NUM_CLASSES).zip(&labels.labels) {
        row[y as usize] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }

    let w2 = delta.matmul_transa(&trace.hidden_out)?;
    let b2 = delta.column_sums();

    let mut dz = delta.matmul(&params.w2)?;
    let act = params.activation;
    for (g, &z) in dz.as_mut_slice().iter_mut().zip(trace.preact.as_slice()) {
        *g *= act.derivative(z);
    }
    let w1 = dz.matmul_transa(x)?;
    let b1 = dz.column_sums();
    Ok(Gradients { w1, b1, w2, b2 })
}

fn descend(target: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in target.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

pub fn apply_gradients(params: &mut ModelParams, grads: &Gradients, lr: f64) {
    descend(params.w1.as_mut_slice(), grads.w1.as_slice(), lr);
    descend(&mut params.b1, &grads.b1, lr);
    descend(params.w2.as_mut_slice(), grads.w2.as_slice(), lr);
    descend(&mut params.b2, &grads.b2, lr);
}

/// Full-batch gradient descent from a seeded initialization.
///
/// `progress` receives `(epoch, loss)` once per epoch, with the loss measured
/// before that epoch's update.
pub fn train(
    config: &TrainConfig,
    x: &Matrix,
    labels: &LabelSet,
    activation: ActivationKind,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let params = ModelParams::init(&mut rng, x.cols(), config.hidden, activation);
    train_from(params, config, x, labels, progress)
}

/// Same loop as [`train`] starting from given parameters.
pub fn train_from(
    mut params: ModelParams,
    config: &TrainConfig,
    x: &Matrix,
    labels: &LabelSet,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<ModelParams, ModelError> {
    config.validate()?;
    for epoch in 0..config.epochs {
        let trace = forward_unperturbed(&params, x)?;
        let loss = loss_cross_entropy(&trace.logits, labels)?;
        progress(epoch, loss);
        if !loss.is_finite() {
            return Err(ModelError::DivergedLoss { epoch, loss });
        }
        let grads = backward(&params, x, labels, &trace)?;
        apply_gradients(&mut params, &grads, config.learning_rate);
    }
    if !params.is_finite() {
        return Err(ModelError::DivergedLoss { epoch: config.epochs, loss: f64::NAN });
    }
    Ok(params)
}

/// Predicted class per row; ties go to the lowest index.
pub fn predictions(logits: &Matrix) -> Vec<usize> {
    logits
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy_from_logits(logits: &Matrix, labels: &LabelSet) -> Result<f64, ShapeMismatch> {
    check_labels(logits, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions(logits)
        .iter()
        .zip(&labels.labels)
        .filter(|(&p, &y)| p == y as usize)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn evaluate(
    params: &ModelParams,
    x: &Matrix,
    labels: &LabelSet,
    pert: &PerturbationConfig,
) -> Result<f64, ModelError> {
    let trace = forward(params, x, pert)?;
    Ok(accuracy_from_logits(&trace.logits, labels)?)
}

/// Accuracy from a cached pre-activation; same arithmetic as [`evaluate`].
pub fn evaluate_preact(
    params: &ModelParams,
    preact: &Matrix,
    labels: &LabelSet,
    pert: &PerturbationConfig,
) -> Result<f64, ModelError> {
    let (_, logits) = head_from_preact(params, preact, Some(pert))?;
    Ok(accuracy_from_logits(&logits, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> LabelSet {
        LabelSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let params = ModelParams::zeros(6, 4, ActivationKind::Relu);
        let x = Matrix::from_vec(3, 6, (0..18).map(f64::from).collect()).unwrap();
        let trace = forward(&params, &x, &PerturbationConfig::identity(4)).unwrap();
        assert!(trace.logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn abs_folds_preact() {
        let mut params = ModelParams::zeros(2, 2, ActivationKind::Abs);
        params.w1 = Matrix::identity(2);
        let x = Matrix::from_rows(&[&[-2.0, 3.0]]).unwrap();
        let trace = forward(&params, &x, &PerturbationConfig::identity(2)).unwrap();
        assert_eq!(trace.hidden_out.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn forward_rejects_wrong_widths() {
        let params = ModelParams::zeros(6, 4, ActivationKind::Relu);
        assert!(forward(&params, &Matrix::zeros(2, 5), &PerturbationConfig::identity(4)).is_err());
        assert!(forward(&params, &Matrix::zeros(2, 6), &PerturbationConfig::identity(3)).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let y = labels(&[0, 3, 9]);
        let zero = Matrix::zeros(3, 10);
        assert!((loss_cross_entropy(&zero, &y).unwrap() - 10f64.ln()).abs() < 1e-15);

        let mut sat = Matrix::zeros(3, 10);
        for (i, &c) in y.labels.iter().enumerate() {
            sat.set(i, c as usize, 1000.0);
        }
        assert!(loss_cross_entropy(&sat, &y).unwrap() < 1e-9);

        // -ln(e / (e + 9)), evaluated at 40 digits
        let mut one = Matrix::zeros(1, 10);
        one.set(0, 0, 1.0);
        let l = loss_cross_entropy(&one, &labels(&[0])).unwrap();
        assert!((l - 1.461150171734474795).abs() < 1e-14, "{l}");

        assert!(loss_cross_entropy(&Matrix::zeros(2, 10), &y).is_err());
    }

    #[test]
    fn argmax_ties_break_low() {
        let logits = Matrix::from_rows(&[&[0.0; 10], &[1.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(predictions(&logits), vec![0, 1]);
        let mut one_hot = Matrix::zeros(2, 10);
        one_hot.set(0, 4, 1.0);
        one_hot.set(1, 7, 1.0);
        assert_eq!(accuracy_from_logits(&one_hot, &labels(&[4, 7])).unwrap(), 1.0);
    }

    #[test]
    fn abs_gradient_vanishes_at_zero() {
        assert_eq!(ActivationKind::Abs.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Abs.derivative(-0.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);

        // unit 0 sits exactly at z = 0 for every row, so its weights get no gradient
        let mut rng = Rng::seed_from_u64(4);
        let mut params = ModelParams::init(&mut rng, 3, 2, ActivationKind::Abs);
        params.w1.row_mut(0).copy_from_slice(&[0.0, 0.0, 0.0]);
        params.b1[0] = 0.0;
        let x = Matrix::from_rows(&[&[1.0, -2.0, 0.5], &[0.3, 0.3, -1.0]]).unwrap();
        let y = labels(&[2, 5]);
        let trace = forward_unperturbed(&params, &x).unwrap();
        let g = backward(&params, &x, &y, &trace).unwrap();
        assert!(g.w1.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(g.b1[0], 0.0);
    }

    #[test]
    fn saturated_logits_have_tiny_gradients() {
        let mut params = ModelParams::zeros(4, 3, ActivationKind::Relu);
        params.b2 = vec![0.0; 10];
        params.b2[6] = 60.0;
        let x = Matrix::from_vec(5, 4, (0..20).map(|i| f64::from(i) * 0.1).collect()).unwrap();
        let y = labels(&[6; 5]);
        let trace = forward_unperturbed(&params, &x).unwrap();
        let g = backward(&params, &x, &y, &trace).unwrap();
        assert!(g.norm() < 1e-6, "{}", g.norm());
    }

    #[test]
    fn one_epoch_is_one_step() {
        let mut rng = Rng::seed_from_u64(8);
        let x = Matrix::from_vec(6, 5, (0..30).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect()).unwrap();
        let y = labels(&[0, 1, 2, 3, 4, 5]);
        let config = TrainConfig { epochs: 1, learning_rate: 0.05, hidden: 4, seed: 21 };
        let start = ModelParams::init(&mut Rng::seed_from_u64(21), 5, 4, ActivationKind::Relu);
        let trace = forward_unperturbed(&start, &x).unwrap();
        let g = backward(&start, &x, &y, &trace).unwrap();
        let trained = train(&config, &x, &y, ActivationKind::Relu, &mut |_, _| {}).unwrap();
        let mut expected = start.clone();
        apply_gradients(&mut expected, &g, 0.05);
        assert_eq!(trained, expected);
        let step = trained
            .w1
            .as_slice()
            .iter()
            .zip(start.w1.as_slice())
            .chain(trained.b1.iter().zip(&start.b1))
            .chain(trained.w2.as_slice().iter().zip(start.w2.as_slice()))
            .chain(trained.b2.iter().zip(&start.b2))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((step - 0.05 * g.norm()).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let x = Matrix::zeros(1, 2);
        let y = labels(&[0]);
        for config in [
            TrainConfig { epochs: 0, learning_rate: 0.1, hidden: 2, seed: 0 },
            TrainConfig { epochs: 1, learning_rate: 0.0, hidden: 2, seed: 0 },
            TrainConfig { epochs: 1, learning_rate: 0.1, hidden: 0, seed: 0 },
        ] {
            assert!(matches!(
                train(&config, &x, &y, ActivationKind::Abs, &mut |_, _| {}),
                Err(ModelError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = Rng::seed_from_u64(2);
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.uniform(-50.0, 50.0).unwrap()).collect()).unwrap();
        let y = labels(&[1, 2, 3, 4]);
        let config = TrainConfig { epochs: 200, learning_rate: 1e6, hidden: 8, seed: 3 };
        let err = train(&config, &x, &y, ActivationKind::Abs, &mut |_, _| {}).unwrap_err();
        assert!(matches!(err, ModelError::DivergedLoss { .. }), "{err}");
    }

    #[test]
    fn cached_preact_evaluation_matches_full_forward() {
        let mut rng = Rng::seed_from_u64(12);
        let params = ModelParams::init(&mut rng, 7, 5, ActivationKind::Abs);
        let x = Matrix::from_vec(9, 7, (0..63).map(|_| rng.uniform(-2.0, 2.0).unwrap()).collect()).unwrap();
        let y = labels(&[0, 1, 2, 3, 4, 5, 6, 7, 8]);
        let pert = crate::perturb::make_scale_probe(0.3, 5).unwrap();
        let z = preactivation(&params, &x).unwrap();
        assert_eq!(
            evaluate(&params, &x, &y, &pert).unwrap(),
            evaluate_preact(&params, &z, &y, &pert).unwrap()
        );
    }

    #[test]
    fn activation_names_round_trip() {
        for a in ActivationKind::ALL {
            assert_eq!(a.as_str().parse::<ActivationKind>().unwrap(), a);
            assert_eq!(ActivationKind::from_code(a.code()), Some(a));
        }
        assert!("tanh".parse::<ActivationKind>().is_err());
    }
}
