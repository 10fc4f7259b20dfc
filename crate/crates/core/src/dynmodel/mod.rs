//! Learned dynamics function: a multilayer perceptron predicting the
//! change in state over one control step, with from-scratch reverse-mode
//! gradients.
//!
//! Two architectures share one type: the plain variant maps the
//! normalized `[state; action]` vector through fully connected layers;
//! the conditioned variants pass `[state; action]` through a hidden
//! layer, fuse the result with a terrain embedding via a flattened outer
//! product, and continue through fully connected layers. All arithmetic
//! is f64 and bit-deterministic; persisted parameters quantize through
//! f32 (see [`io`]).

mod adam;
mod io;
mod train;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use io::{load_model, save_model};
pub use train::{init_model, train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::features::Embedding;
use crate::linalg::Matrix;
use crate::simworld::{Action, StateVector, STATE_DIM};

pub const ACTION_DIM: usize = 2;
/// Width of the `[state; action]` block of the model input.
pub const SA_DIM: usize = STATE_DIM + ACTION_DIM;

/// Floor applied to normalization stds.
pub const STD_FLOOR: f64 = 1e-8;

/// What the model was trained to condition on. The conditioned variants
/// share the fused architecture; the tag records which embedding source
/// the model expects at evaluation time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    Plain,
    /// Fused with a one-hot terrain label of `classes` entries.
    OneHot { classes: usize },
    /// Fused with a projected image embedding of `embed_dim` entries.
    Fused { embed_dim: usize },
}

impl Variant {
    /// Embedding width, when conditioned.
    pub fn embed_dim(&self) -> Option<usize> {
        match self {
            Variant::Plain => None,
            Variant::OneHot { classes } => Some(*classes),
            Variant::Fused { embed_dim } => Some(*embed_dim),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// Fully connected layer; weights are `(in x out)` so a batch row vector
/// multiplies from the left.
#[derive(Clone, Debug)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub act: Activation,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        Self {
            w: Matrix::zeros(in_dim, out_dim),
            b: vec![0.0; out_dim],
            act,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Per-dimension normalization statistics of the training inputs
/// `[s; a (; e)]` and targets `(s_next - s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean_in: Vec<f64>,
    pub std_in: Vec<f64>,
    pub mean_out: Vec<f64>,
    pub std_out: Vec<f64>,
}

impl NormStats {
    /// Identity stats (mean 0, std 1), mostly for tests and hand-built
    /// models.
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        Self {
            mean_in: vec![0.0; in_dim],
            std_in: vec![1.0; in_dim],
            mean_out: vec![0.0; out_dim],
            std_out: vec![1.0; out_dim],
        }
    }

    /// Column means and population stds of the given training data, with
    /// the std floor applied. Values are rounded through f32 so a model
    /// round-trips its persisted file losslessly.
    pub fn compute(inputs: &Matrix, targets: &Matrix) -> Self {
        let col_stats = |m: &Matrix| {
            let n = m.rows() as f64;
            let mut mean = vec![0.0; m.cols()];
            for i in 0..m.rows() {
                for (s, v) in mean.iter_mut().zip(m.row(i)) {
                    *s += v;
                }
            }
            for s in &mut mean {
                *s /= n;
            }
            let mut var = vec![0.0; m.cols()];
            for i in 0..m.rows() {
                for ((s, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
                    *s += (v - mu) * (v - mu);
                }
            }
            let std: Vec<f64> = var
                .iter()
                .map(|v| ((v / n).sqrt().max(STD_FLOOR) as f32) as f64)
                .collect();
            let mean: Vec<f64> = mean.iter().map(|v| (*v as f32) as f64).collect();
            (mean, std)
        };
        let (mean_in, std_in) = col_stats(inputs);
        let (mean_out, std_out) = col_stats(targets);
        Self {
            mean_in,
            std_in,
            mean_out,
            std_out,
        }
    }

    pub fn normalize_inputs(&self, m: &Matrix) -> Matrix {
        normalize(m, &self.mean_in, &self.std_in)
    }

    pub fn normalize_targets(&self, m: &Matrix) -> Matrix {
        normalize(m, &self.mean_out, &self.std_out)
    }
}

fn normalize(m: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    assert_eq!(m.cols(), mean.len());
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for ((v, mu), sd) in row.iter_mut().zip(mean).zip(std) {
            *v = (*v - mu) / sd;
        }
    }
    out
}

/// Training pairs in raw (pre-normalization) units.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if inputs.rows() != targets.rows() {
            return Err(Error::DimMismatch {
                context: "batch inputs vs targets".into(),
                expected: inputs.rows(),
                got: targets.rows(),
            });
        }
        Ok(Self { inputs, targets })
    }
}

/// Gradient of the loss w.r.t. one layer's parameters.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Gradients for the whole parameter set, mirroring the layer list.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Flatten in the same order as [`DynModel::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for lg in &self.layers {
            out.extend_from_slice(lg.dw.data());
            out.extend_from_slice(&lg.db);
        }
        out
    }
}

/// Flattened outer product of two equal-row matrices: output row `b` is
/// `h_b (x) e_b` laid out with the embedding index fastest.
pub(crate) fn fuse(h: &Matrix, e: &Matrix) -> Matrix {
    assert_eq!(h.rows(), e.rows());
    let (m, k) = (h.cols(), e.cols());
    let mut out = Matrix::zeros(h.rows(), m * k);
    for b in 0..h.rows() {
        let hr = h.row(b);
        let er = e.row(b);
        let row = out.row_mut(b);
        for (i, hv) in hr.iter().enumerate() {
            for (j, ev) in er.iter().enumerate() {
                row[i * k + j] = hv * ev;
            }
        }
    }
    out
}

/// Contraction of a fused-layer gradient back to the hidden vector:
/// `dh[b][i] = sum_j dz[b][i*k + j] * e[b][j]`.
fn defuse_to_hidden(dz: &Matrix, e: &Matrix, m: usize) -> Matrix {
    let k = e.cols();
    let mut out = Matrix::zeros(dz.rows(), m);
    for b in 0..dz.rows() {
        let dzr = dz.row(b);
        let er = e.row(b);
        let row = out.row_mut(b);
        for (i, o) in row.iter_mut().enumerate() {
            *o = crate::linalg::dot(&dzr[i * k..(i + 1) * k], er);
        }
    }
    out
}

struct ForwardPass {
    /// Input matrix of each layer, in layer order.
    layer_inputs: Vec<Matrix>,
    /// Conditioned models: the post-activation hidden block and the
    /// normalized embedding block.
    fusion: Option<(Matrix, Matrix)>,
    out: Matrix,
}

/// The learned dynamics model.
#[derive(Clone, Debug)]
pub struct DynModel {
    variant: Variant,
    layers: Vec<Layer>,
    pub norm: NormStats,
}

impl DynModel {
    /// Assemble a model and validate that the layer dimensions chain
    /// correctly for the variant.
    pub fn from_parts(variant: Variant, layers: Vec<Layer>, norm: NormStats) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument(
                "model needs at least two layers".into(),
            ));
        }
        let dim_err = |context: &str, expected: usize, got: usize| {
            Err(Error::DimMismatch {
                context: context.into(),
                expected,
                got,
            })
        };
        match variant.embed_dim() {
            None => {
                if layers[0].in_dim() != SA_DIM {
                    return dim_err("plain first layer input", SA_DIM, layers[0].in_dim());
                }
                for i in 1..layers.len() {
                    if layers[i].in_dim() != layers[i - 1].out_dim() {
                        return dim_err("layer chain", layers[i - 1].out_dim(), layers[i].in_dim());
                    }
                }
            }
            Some(k) => {
                if layers[0].in_dim() != SA_DIM {
                    return dim_err("conditioned first layer input", SA_DIM, layers[0].in_dim());
                }
                let fused = layers[0].out_dim() * k;
                if layers[1].in_dim() != fused {
                    return dim_err("fusion layer input", fused, layers[1].in_dim());
                }
                for i in 2..layers.len() {
                    if layers[i].in_dim() != layers[i - 1].out_dim() {
                        return dim_err("layer chain", layers[i - 1].out_dim(), layers[i].in_dim());
                    }
                }
            }
        }
        let last = layers.last().unwrap();
        if last.out_dim() != STATE_DIM {
            return dim_err("output layer width", STATE_DIM, last.out_dim());
        }
        if last.act != Activation::Linear {
            return Err(Error::InvalidArgument("output layer must be linear".into()));
        }
        let input_dim = SA_DIM + variant.embed_dim().unwrap_or(0);
        if norm.mean_in.len() != input_dim || norm.std_in.len() != input_dim {
            return dim_err("normalization input width", input_dim, norm.mean_in.len());
        }
        if norm.mean_out.len() != STATE_DIM || norm.std_out.len() != STATE_DIM {
            return dim_err("normalization output width", STATE_DIM, norm.mean_out.len());
        }
        let model = Self {
            variant,
            layers,
            norm,
        };
        if !model.flatten_params().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(model)
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.variant.embed_dim()
    }

    /// Raw model input width: `[s; a (; e)]`.
    pub fn input_dim(&self) -> usize {
        SA_DIM + self.embed_dim().unwrap_or(0)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_params());
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.w.data().len();
            l.w.data_mut().copy_from_slice(&theta[off..off + wn]);
            off += wn;
            let bn = l.b.len();
            l.b.copy_from_slice(&theta[off..off + bn]);
            off += bn;
        }
    }

    /// Round every parameter through f32, the precision of the model
    /// file, so save/load round-trips bit-exactly.
    pub fn quantize_params_f32(&mut self) {
        for l in &mut self.layers {
            for v in l.w.data_mut() {
                *v = *v as f32 as f64;
            }
            for v in &mut l.b {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Assemble the raw input row `[s; a (; e)]`.
    pub fn input_row(
        &self,
        s: &StateVector,
        a: &Action,
        e: Option<&Embedding>,
    ) -> Result<Vec<f64>> {
        if !s.is_finite() || !a.left.is_finite() || !a.right.is_finite() {
            return Err(Error::NonFinite("model input".into()));
        }
        let mut row = Vec::with_capacity(self.input_dim());
        row.extend_from_slice(&s.0);
        row.push(a.left);
        row.push(a.right);
        match (self.embed_dim(), e) {
            (None, _) => {}
            (Some(k), Some(emb)) => {
                if emb.dim() != k {
                    return Err(Error::DimMismatch {
                        context: "embedding width".into(),
                        expected: k,
                        got: emb.dim(),
                    });
                }
                if !emb.values.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("embedding".into()));
                }
                row.extend_from_slice(&emb.values);
            }
            (Some(k), None) => {
                return Err(Error::DimMismatch {
                    context: "conditioned model requires an embedding".into(),
                    expected: k,
                    got: 0,
                });
            }
        }
        Ok(row)
    }

    fn run_normalized(&self, x_norm: &Matrix, keep: bool) -> ForwardPass {
        let mut layer_inputs = Vec::new();
        let mut fusion = None;
        let mut cur;
        match self.embed_dim() {
            None => {
                cur = x_norm.clone();
            }
            Some(k) => {
                // Split [sa | e] columns.
                let b = x_norm.rows();
                let mut sa = Matrix::zeros(b, SA_DIM);
                let mut e = Matrix::zeros(b, k);
                for i in 0..b {
                    let row = x_norm.row(i);
                    sa.row_mut(i).copy_from_slice(&row[..SA_DIM]);
                    e.row_mut(i).copy_from_slice(&row[SA_DIM..]);
                }
                let l0 = &self.layers[0];
                let mut h = sa.matmul(&l0.w);
                h.add_row_broadcast(&l0.b);
                if l0.act == Activation::Relu {
                    h.relu_inplace();
                }
                cur = fuse(&h, &e);
                if keep {
                    layer_inputs.push(sa);
                    fusion = Some((h, e));
                }
            }
        }
        let first = if self.embed_dim().is_some() { 1 } else { 0 };
        for l in &self.layers[first..] {
            if keep {
                layer_inputs.push(cur.clone());
            }
            let mut z = cur.matmul(&l.w);
            z.add_row_broadcast(&l.b);
            if l.act == Activation::Relu {
                z.relu_inplace();
            }
            cur = z;
        }
        ForwardPass {
            layer_inputs,
            fusion,
            out: cur,
        }
    }

    /// Batched forward pass on raw inputs; returns denormalized state
    /// deltas, one row per input row.
    pub fn forward_batch(&self, inputs_raw: &Matrix) -> Result<Matrix> {
        self.check_input_matrix(inputs_raw)?;
        let x = self.norm.normalize_inputs(inputs_raw);
        let mut out = self.run_normalized(&x, false).out;
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for ((v, sd), mu) in row.iter_mut().zip(&self.norm.std_out).zip(&self.norm.mean_out) {
                *v = *v * sd + mu;
            }
        }
        Ok(out)
    }

    fn check_input_matrix(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.input_dim() {
            return Err(Error::DimMismatch {
                context: "model input width".into(),
                expected: self.input_dim(),
                got: m.cols(),
            });
        }
        if !m.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    /// Predicted state delta for a single `(s, a, e?)`.
    pub fn forward(
        &self,
        s: &StateVector,
        a: &Action,
        e: Option<&Embedding>,
    ) -> Result<[f64; STATE_DIM]> {
        let row = self.input_row(s, a, e)?;
        let out = self.forward_batch(&Matrix::from_flat(1, self.input_dim(), row))?;
        let mut delta = [0.0; STATE_DIM];
        delta.copy_from_slice(out.row(0));
        Ok(delta)
    }

    /// Add a predicted delta to a state and renormalize the (cos, sin)
    /// pairs to the unit circle.
    pub fn apply_delta(s: &StateVector, delta: &[f64]) -> StateVector {
        let mut next = s.clone();
        for (v, d) in next.0.iter_mut().zip(delta) {
            *v += d;
        }
        next.renormalize_angle_pairs();
        next
    }

    /// Predicted next state: `s + f(s, a, e)` with unit-pair renorm.
    pub fn predict_next(
        &self,
        s: &StateVector,
        a: &Action,
        e: Option<&Embedding>,
    ) -> Result<StateVector> {
        let delta = self.forward(s, a, e)?;
        Ok(Self::apply_delta(s, &delta))
    }

    /// Mean squared-error loss (with the 1/2 factor) in normalized space.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        self.check_input_matrix(&batch.inputs)?;
        let x = self.norm.normalize_inputs(&batch.inputs);
        let t = self.norm.normalize_targets(&batch.targets);
        Ok(self.loss_normalized(&x, &t))
    }

    /// Loss on pre-normalized data (training hot path).
    pub fn loss_normalized(&self, x_norm: &Matrix, t_norm: &Matrix) -> f64 {
        let out = self.run_normalized(x_norm, false).out;
        let b = x_norm.rows() as f64;
        let mut acc = 0.0;
        for (o, t) in out.data().iter().zip(t_norm.data()) {
            let r = o - t;
            acc += r * r;
        }
        0.5 * acc / b
    }

    /// Loss and exact reverse-mode gradients on a raw batch.
    pub fn backward(&self, batch: &Batch) -> Result<(f64, Gradients)> {
        self.check_input_matrix(&batch.inputs)?;
        if batch.targets.cols() != STATE_DIM {
            return Err(Error::DimMismatch {
                context: "target width".into(),
                expected: STATE_DIM,
                got: batch.targets.cols(),
            });
        }
        let x = self.norm.normalize_inputs(&batch.inputs);
        let t = self.norm.normalize_targets(&batch.targets);
        Ok(self.backward_normalized(&x, &t))
    }

    /// Backward pass on pre-normalized data (training hot path).
    pub fn backward_normalized(&self, x_norm: &Matrix, t_norm: &Matrix) -> (f64, Gradients) {
        let pass = self.run_normalized(x_norm, true);
        let b = x_norm.rows() as f64;

        let mut loss = 0.0;
        let mut g = Matrix::zeros(pass.out.rows(), pass.out.cols());
        for i in 0..pass.out.rows() {
            let or = pass.out.row(i);
            let tr = t_norm.row(i);
            let gr = g.row_mut(i);
            for j in 0..or.len() {
                let r = or[j] - tr[j];
                loss += r * r;
                gr[j] = r / b;
            }
        }
        loss *= 0.5 / b;

        let conditioned = self.embed_dim().is_some();
        let mut grads_rev: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        // `g` holds dL/d(pre-activation) of the current layer; the output
        // layer is linear so it starts correct.
        let n_inputs = pass.layer_inputs.len();
        let mut cache_idx = n_inputs;
        for li in (0..self.layers.len()).rev() {
            cache_idx -= 1;
            let input = &pass.layer_inputs[cache_idx];
            let layer = &self.layers[li];
            let dw = input.matmul_at(&g);
            let db = g.col_sums();
            grads_rev.push(LayerGrad { dw, db });
            if li == 0 {
                break;
            }
            let mut g_prev = g.matmul_bt(&layer.w);
            if conditioned && li == 1 {
                // Through the outer-product fusion and the first layer's
                // activation.
                let (h, e) = pass.fusion.as_ref().expect("fusion cache");
                let mut dh = defuse_to_hidden(&g_prev, e, h.cols());
                if self.layers[0].act == Activation::Relu {
                    dh.mask_by_positive(h);
                }
                g = dh;
            } else {
                if self.layers[li - 1].act == Activation::Relu {
                    // The post-activation of layer li-1 is this layer's
                    // input.
                    g_prev.mask_by_positive(input);
                }
                g = g_prev;
            }
        }
        grads_rev.reverse();
        (loss, Gradients { layers: grads_rev })
    }
}
