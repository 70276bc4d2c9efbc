//! Small dense-network engine: f64 matrices, forward/backward passes, losses,
//! Adam and a seeded minibatch trainer.
//!
//! All reductions run in a fixed order with plain multiply-add (no fused
//! ops), so results are bit-reproducible for a given seed.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stacks equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Matrix> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Side-by-side concatenation.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::ShapeMismatch {
                expected: rows,
                actual: bad.rows,
            });
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Columns `[start, end)`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (end - start));
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Matrix {
            rows: self.rows,
            cols: end - start,
            data,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[k * other.cols..(k + 1) * other.cols];
                for (x, y) in o.iter_mut().zip(b) {
                    *x += a * y;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o = &mut out.data[k * other.cols..(k + 1) * other.cols];
                for (x, y) in o.iter_mut().zip(b_row) {
                    *x += a * y;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                let b = other.row(j);
                let mut s = 0.0;
                for (x, y) in a.iter().zip(b) {
                    s += x * y;
                }
                out.data[i * other.rows + j] = s;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(c: u8) -> Result<Activation> {
        match c {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            _ => Err(Error::ModelFormat(format!("unknown activation code {c}"))),
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `inputs × outputs`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

/// Per-layer outputs kept for the backward pass; `outputs[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    pub outputs: Vec<Matrix>,
}

impl Activations {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("at least the input")
    }
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Gradients {
        Gradients {
            weights: net.layers.iter().map(|l| Matrix::zeros(l.weights.rows, l.weights.cols)).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl DenseNet {
    /// Xavier-uniform weights and zero biases; `sizes` lists every layer
    /// width including input and output.
    pub fn new(sizes: &[usize], activations: &[Activation], seed: u64) -> DenseNet {
        assert_eq!(sizes.len(), activations.len() + 1, "one activation per weight layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
                Layer {
                    weights: Matrix {
                        rows: fan_in,
                        cols: fan_out,
                        data,
                    },
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        DenseNet { layers }
    }

    /// Hidden layers share `hidden_activation`; the output layer is linear.
    pub fn mlp(sizes: &[usize], hidden_activation: Activation, seed: u64) -> DenseNet {
        let mut acts = vec![hidden_activation; sizes.len() - 1];
        *acts.last_mut().expect("at least one layer") = Activation::Identity;
        DenseNet::new(sizes, &acts, seed)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weights.rows
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty net").weights.cols
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn forward(&self, input: &Matrix) -> Result<Activations> {
        if input.cols != self.input_size() {
            return Err(Error::ShapeMismatch {
                expected: self.input_size(),
                actual: input.cols,
            });
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input.clone());
        for layer in &self.layers {
            let mut z = outputs.last().expect("input pushed").matmul(&layer.weights);
            for i in 0..z.rows {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            outputs.push(z);
        }
        Ok(Activations { outputs })
    }

    /// Forward pass for one input row.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.forward(&m)?.outputs.pop().expect("output").data)
    }

    pub fn predict_batch(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward(input)?.outputs.pop().expect("output"))
    }

    /// Gradients of a scalar loss given `d loss / d output`; also returns the
    /// gradient with respect to the input.
    pub fn backward(&self, acts: &Activations, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        let out = acts.output();
        if grad_output.rows != out.rows || grad_output.cols != out.cols {
            return Err(Error::ShapeMismatch {
                expected: out.rows * out.cols,
                actual: grad_output.rows * grad_output.cols,
            });
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut bias = Vec::with_capacity(n);
        let mut g = grad_output.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let y = &acts.outputs[k + 1];
            for (gv, yv) in g.data.iter_mut().zip(&y.data) {
                *gv *= layer.activation.derivative(*yv);
            }
            let x = &acts.outputs[k];
            weights.push(x.t_matmul(&g));
            let mut gb = vec![0.0; g.cols];
            for i in 0..g.rows {
                for (s, v) in gb.iter_mut().zip(g.row(i)) {
                    *s += v;
                }
            }
            bias.push(gb);
            g = g.matmul_t(&layer.weights);
        }
        weights.reverse();
        bias.reverse();
        Ok((Gradients { weights, bias }, g))
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn update(&mut self, net: &mut DenseNet, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let upd = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            upd(
                &mut layer.weights.data,
                &grads.weights[k].data,
                &mut self.m.weights[k].data,
                &mut self.v.weights[k].data,
            );
            upd(&mut layer.bias, &grads.bias[k], &mut self.m.bias[k], &mut self.v.bias[k]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loss {
    /// Mean squared error over every output.
    Mse,
    /// Binary cross-entropy on logits over every output.
    CrossEntropy,
    /// Cross-entropy on the listed columns, squared error on the rest; each
    /// part is averaged over its own entries and the two are summed.
    Composite { logit_columns: Vec<usize> },
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `-[t log σ(x) + (1 - t) log(1 - σ(x))]`.
fn bce_with_logits(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

impl Loss {
    /// Loss value and gradient with respect to `pred`.
    pub fn evaluate(&self, pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
        if pred.rows != target.rows || pred.cols != target.cols {
            return Err(Error::ShapeMismatch {
                expected: pred.rows * pred.cols,
                actual: target.rows * target.cols,
            });
        }
        let logit_cols: Vec<bool> = match self {
            Loss::Mse => vec![false; pred.cols],
            Loss::CrossEntropy => vec![true; pred.cols],
            Loss::Composite { logit_columns } => (0..pred.cols).map(|c| logit_columns.contains(&c)).collect(),
        };
        let n_logit = logit_cols.iter().filter(|&&b| b).count() * pred.rows;
        let n_sq = pred.rows * pred.cols - n_logit;
        let mut grad = Matrix::zeros(pred.rows, pred.cols);
        let (mut sq, mut ce) = (0.0, 0.0);
        for i in 0..pred.rows {
            for (j, &is_logit) in logit_cols.iter().enumerate() {
                let idx = i * pred.cols + j;
                let (x, t) = (pred.data[idx], target.data[idx]);
                if is_logit {
                    ce += bce_with_logits(x, t);
                    grad.data[idx] = (sigmoid(x) - t) / n_logit as f64;
                } else {
                    let d = x - t;
                    sq += d * d;
                    grad.data[idx] = 2.0 * d / n_sq as f64;
                }
            }
        }
        let mut value = 0.0;
        if n_sq > 0 {
            value += sq / n_sq as f64;
        }
        if n_logit > 0 {
            value += ce / n_logit as f64;
        }
        Ok((value, grad))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 1024,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Seeded epoch permutations of `0..n`.
pub struct Shuffler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl Shuffler {
    pub fn new(n: usize, seed: u64) -> Shuffler {
        Shuffler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
        }
    }

    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.shuffle(&mut self.rng);
        &self.order
    }
}

/// Minibatch training; returns the mean loss of every epoch.
pub fn train(net: &mut DenseNet, x: &Matrix, y: &Matrix, loss: &Loss, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if x.rows == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.rows != y.rows {
        return Err(Error::ShapeMismatch {
            expected: x.rows,
            actual: y.rows,
        });
    }
    if x.cols != net.input_size() || y.cols != net.output_size() {
        return Err(Error::ShapeMismatch {
            expected: net.input_size(),
            actual: x.cols,
        });
    }
    let mut adam = Adam::new(net, cfg.lr);
    let mut shuffler = Shuffler::new(x.rows, cfg.seed);
    let batch = cfg.batch_size.max(1);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffler.next_epoch().to_vec();
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch).enumerate() {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let acts = net.forward(&xb)?;
            let (value, grad) = loss.evaluate(acts.output(), &yb)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: value,
                });
            }
            let (grads, _) = net.backward(&acts, &grad)?;
            adam.update(net, &grads);
            total += value * idx.len() as f64;
        }
        curve.push(total / x.rows as f64);
    }
    Ok(curve)
}

const MAGIC: &[u8; 6] = b"MOVNN1";

/// Named parts of a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Net(DenseNet),
    Vector(Vec<f64>),
    Text(String),
}

/// Self-describing binary container: the magic bytes, a section table of
/// named networks, vectors and text, all numbers little-endian.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelFile {
    pub sections: Vec<(String, Section)>,
}

impl ModelFile {
    pub fn push(&mut self, name: &str, section: Section) {
        self.sections.push((name.to_string(), section));
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn net(&self, name: &str) -> Result<DenseNet> {
        match self.get(name) {
            Some(Section::Net(n)) => Ok(n.clone()),
            _ => Err(Error::ModelFormat(format!("missing network section {name:?}"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name) {
            Some(Section::Vector(v)) => Ok(v.clone()),
            _ => Err(Error::ModelFormat(format!("missing vector section {name:?}"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<String> {
        match self.get(name) {
            Some(Section::Text(t)) => Ok(t.clone()),
            _ => Err(Error::ModelFormat(format!("missing text section {name:?}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.sections.len() as u32);
        for (name, section) in &self.sections {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::Net(net) => {
                    out.push(0);
                    put_u32(&mut out, net.layers.len() as u32);
                    for l in &net.layers {
                        put_u32(&mut out, l.weights.rows as u32);
                        put_u32(&mut out, l.weights.cols as u32);
                        out.push(l.activation.code());
                    }
                    for l in &net.layers {
                        put_f64s(&mut out, &l.weights.data);
                        put_f64s(&mut out, &l.bias);
                    }
                }
                Section::Vector(v) => {
                    out.push(1);
                    put_u32(&mut out, v.len() as u32);
                    put_f64s(&mut out, v);
                }
                Section::Text(t) => {
                    out.push(2);
                    put_u32(&mut out, t.len() as u32);
                    out.extend_from_slice(t.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelFile> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6)? != MAGIC {
            return Err(Error::ModelFormat("bad magic; not a MOVNN1 file".into()));
        }
        let count = r.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::ModelFormat("section name is not utf-8".into()))?;
            let section = match r.u8()? {
                0 => {
                    let n = r.u32()? as usize;
                    let mut shapes = Vec::with_capacity(n);
                    for _ in 0..n {
                        let rows = r.u32()? as usize;
                        let cols = r.u32()? as usize;
                        shapes.push((rows, cols, Activation::from_code(r.u8()?)?));
                    }
                    for w in shapes.windows(2) {
                        if w[0].1 != w[1].0 {
                            return Err(Error::ModelFormat(format!("layer chain broken in {name:?}")));
                        }
                    }
                    let mut layers = Vec::with_capacity(n);
                    for (rows, cols, activation) in shapes {
                        let data = r.f64s(rows * cols)?;
                        let bias = r.f64s(cols)?;
                        layers.push(Layer {
                            weights: Matrix { rows, cols, data },
                            bias,
                            activation,
                        });
                    }
                    if layers.is_empty() {
                        return Err(Error::ModelFormat(format!("network {name:?} has no layers")));
                    }
                    Section::Net(DenseNet { layers })
                }
                1 => {
                    let n = r.u32()? as usize;
                    Section::Vector(r.f64s(n)?)
                }
                2 => {
                    let n = r.u32()? as usize;
                    Section::Text(
                        String::from_utf8(r.take(n)?.to_vec())
                            .map_err(|_| Error::ModelFormat("text section is not utf-8".into()))?,
                    )
                }
                k => return Err(Error::ModelFormat(format!("unknown section kind {k}"))),
            };
            sections.push((name, section));
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes after last section".into()));
        }
        Ok(ModelFile { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        ModelFile::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::ModelFormat("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::ModelFormat("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
