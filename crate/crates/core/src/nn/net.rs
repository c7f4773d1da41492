//! Feed-forward PReLU network with manual backpropagation.
//!
//! Layer `i` computes `a_i = h_{i-1} W_iᵀ + b_i` on a row-major batch. Hidden
//! layers apply PReLU with one learnable slope per layer; the output layer is
//! linear. Besides the usual reverse pass the network supports a tangent
//! (forward-mode) pass so that losses built from input-directional
//! derivatives, `∇_x f · u`, can themselves be differentiated with respect to
//! the parameters.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::NnError;
use crate::rng;

pub const DEFAULT_PRELU_SLOPE: f64 = 0.25;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedForwardNet {
    widths: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    slopes: Vec<f64>,
    #[serde(skip)]
    cache: Option<Trace>,
}

/// Activations recorded by a forward pass, optionally with tangents.
#[derive(Clone, Debug)]
pub struct Trace {
    input: DenseMatrix,
    pre: Vec<DenseMatrix>,
    post: Vec<DenseMatrix>,
    tangent: Option<TangentTrace>,
}

#[derive(Clone, Debug)]
struct TangentTrace {
    input: DenseMatrix,
    pre: Vec<DenseMatrix>,
    post: Vec<DenseMatrix>,
}

impl Trace {
    pub fn output(&self) -> &DenseMatrix {
        self.pre.last().expect("network has at least one layer")
    }

    /// Directional derivative of the output along the input tangent.
    pub fn output_tangent(&self) -> Option<&DenseMatrix> {
        self.tangent.as_ref().and_then(|t| t.pre.last())
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Pre-activations of layer `i` (0-based).
    pub fn pre_activation(&self, i: usize) -> &DenseMatrix {
        &self.pre[i]
    }
}

/// Parameter gradients, laid out like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

/// Output of a reverse pass.
#[derive(Clone, Debug)]
pub struct Backward {
    pub params: Gradients,
    /// Gradient with respect to the input batch.
    pub input: DenseMatrix,
    /// Gradient with respect to the input tangent, when one was traced.
    pub input_tangent: Option<DenseMatrix>,
}

fn prelu(a: &DenseMatrix, slope: f64) -> DenseMatrix {
    let mut h = a.clone();
    for x in h.as_mut_slice() {
        if *x <= 0.0 {
            *x *= slope;
        }
    }
    h
}

impl FeedForwardNet {
    /// Glorot-uniform weights, zero biases, PReLU slopes at 0.25.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self, NnError> {
        validate_widths(widths)?;
        let mut rng = rng::seeded(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(DenseMatrix::from_vec(fan_out, fan_in, data)?);
        }
        let biases = widths[1..].iter().map(|&d| vec![0.0; d]).collect();
        let slopes = vec![DEFAULT_PRELU_SLOPE; widths.len() - 2];
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            slopes,
            cache: None,
        })
    }

    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<Vec<f64>>,
        slopes: Vec<f64>,
    ) -> Result<Self, NnError> {
        let mut widths = Vec::with_capacity(weights.len() + 1);
        if let Some(first) = weights.first() {
            widths.push(first.cols());
        }
        widths.extend(weights.iter().map(|w| w.rows()));
        validate_widths(&widths)?;
        for (i, w) in weights.iter().enumerate() {
            if w.cols() != widths[i] {
                return Err(NnError::ShapeMismatch {
                    expected: format!("layer {i} input width {}", widths[i]),
                    found: format!("{}", w.cols()),
                });
            }
            if biases.get(i).map(Vec::len) != Some(w.rows()) {
                return Err(NnError::ShapeMismatch {
                    expected: format!("bias of length {} for layer {i}", w.rows()),
                    found: format!("{:?}", biases.get(i).map(Vec::len)),
                });
            }
        }
        if biases.len() != weights.len() || slopes.len() != weights.len() - 1 {
            return Err(NnError::ShapeMismatch {
                expected: format!(
                    "{} biases and {} slopes",
                    weights.len(),
                    weights.len() - 1
                ),
                found: format!("{} biases and {} slopes", biases.len(), slopes.len()),
            });
        }
        if slopes.iter().any(|s| !s.is_finite()) {
            return Err(NnError::NonFinite("PReLU slope".into()));
        }
        Ok(Self {
            widths,
            weights,
            biases,
            slopes,
            cache: None,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        self.cache = None;
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        self.cache = None;
        &mut self.biases
    }

    pub fn slopes_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        &mut self.slopes
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<(), NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                expected: format!("batch with {} columns", self.input_dim()),
                found: format!("{} columns", x.cols()),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: usize, h: &DenseMatrix) -> DenseMatrix {
        let mut a = h
            .matmul_transposed(&self.weights[layer])
            .expect("shape chain checked at construction");
        let b = &self.biases[layer];
        for r in 0..a.rows() {
            for (x, bj) in a.row_mut(r).iter_mut().zip(b) {
                *x += bj;
            }
        }
        a
    }

    /// Pure batched forward pass.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        self.check_input(x)?;
        let last = self.depth() - 1;
        let mut h = self.affine(0, x);
        for l in 0..last {
            h = prelu(&h, self.slopes[l]);
            h = self.affine(l + 1, &h);
        }
        Ok(h)
    }

    /// Forward pass for a single row.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let batch = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward(&batch)?.into_vec())
    }

    /// Forward pass that records activations for a later reverse pass.
    pub fn trace(&self, x: &DenseMatrix) -> Result<Trace, NnError> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post = Vec::with_capacity(self.depth() - 1);
        let mut h = x.clone();
        for l in 0..self.depth() {
            let a = self.affine(l, &h);
            if l + 1 < self.depth() {
                h = prelu(&a, self.slopes[l]);
                post.push(h.clone());
            }
            pre.push(a);
        }
        Ok(Trace {
            input: x.clone(),
            pre,
            post,
            tangent: None,
        })
    }

    /// Forward pass that also propagates an input tangent `dx`, giving the
    /// directional derivative of every activation along `dx`.
    pub fn trace_with_tangent(&self, x: &DenseMatrix, dx: &DenseMatrix) -> Result<Trace, NnError> {
        if dx.shape() != x.shape() {
            return Err(NnError::ShapeMismatch {
                expected: format!("tangent of shape {:?}", x.shape()),
                found: format!("{:?}", dx.shape()),
            });
        }
        let mut trace = self.trace(x)?;
        let mut t_pre = Vec::with_capacity(self.depth());
        let mut t_post = Vec::with_capacity(self.depth() - 1);
        let mut hd = dx.clone();
        for l in 0..self.depth() {
            let ad = hd
                .matmul_transposed(&self.weights[l])
                .expect("shape chain checked at construction");
            if l + 1 < self.depth() {
                let a = &trace.pre[l];
                let mut next = ad.clone();
                for (t, &z) in next.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    if z <= 0.0 {
                        *t *= self.slopes[l];
                    }
                }
                hd = next;
                t_post.push(hd.clone());
            }
            t_pre.push(ad);
        }
        trace.tangent = Some(TangentTrace {
            input: dx.clone(),
            pre: t_pre,
            post: t_post,
        });
        Ok(trace)
    }

    /// Reverse pass through a recorded trace.
    ///
    /// `output_grad` is `∂F/∂output`; `tangent_grad` is `∂F/∂(output tangent)`
    /// and requires a trace built by [`Self::trace_with_tangent`].
    pub fn backward_trace(
        &self,
        trace: &Trace,
        output_grad: &DenseMatrix,
        tangent_grad: Option<&DenseMatrix>,
    ) -> Result<Backward, NnError> {
        let out_shape = trace.output().shape();
        if trace.pre.len() != self.depth()
            || trace.input.cols() != self.input_dim()
            || out_shape.1 != self.output_dim()
        {
            return Err(NnError::StaleCache);
        }
        if output_grad.shape() != out_shape {
            return Err(NnError::ShapeMismatch {
                expected: format!("output gradient of shape {out_shape:?}"),
                found: format!("{:?}", output_grad.shape()),
            });
        }
        let tangent = match (tangent_grad, &trace.tangent) {
            (None, _) => None,
            (Some(g), Some(t)) => {
                if g.shape() != out_shape {
                    return Err(NnError::ShapeMismatch {
                        expected: format!("tangent gradient of shape {out_shape:?}"),
                        found: format!("{:?}", g.shape()),
                    });
                }
                Some(t)
            }
            (Some(_), None) => return Err(NnError::StaleCache),
        };

        let depth = self.depth();
        let mut weights = vec![DenseMatrix::zeros(0, 0); depth];
        let mut biases = vec![Vec::new(); depth];
        let mut slopes = vec![0.0; depth - 1];

        let mut g_h = output_grad.clone();
        let mut g_hd = tangent_grad.filter(|_| tangent.is_some()).cloned();

        for l in (0..depth).rev() {
            if l + 1 < depth {
                // PReLU: h = a (a > 0) or slope·a; the tangent picks up the
                // same derivative and the second derivative vanishes a.e.
                let a = &trace.pre[l];
                let slope = self.slopes[l];
                let mut ds = 0.0;
                for (idx, g) in g_h.as_mut_slice().iter_mut().enumerate() {
                    let z = a.as_slice()[idx];
                    if z <= 0.0 {
                        ds += *g * z;
                        *g *= slope;
                    }
                }
                if let (Some(gd), Some(t)) = (g_hd.as_mut(), tangent) {
                    let ad = &t.pre[l];
                    for (idx, g) in gd.as_mut_slice().iter_mut().enumerate() {
                        if a.as_slice()[idx] <= 0.0 {
                            ds += *g * ad.as_slice()[idx];
                            *g *= slope;
                        }
                    }
                }
                slopes[l] = ds;
            }

            let h_prev = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let mut dw = g_h.transposed_matmul(h_prev)?;
            if let (Some(gd), Some(t)) = (g_hd.as_ref(), tangent) {
                let hd_prev = if l == 0 { &t.input } else { &t.post[l - 1] };
                let extra = gd.transposed_matmul(hd_prev)?;
                for (w, e) in dw.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                    *w += e;
                }
            }
            weights[l] = dw;
            let mut db = vec![0.0; g_h.cols()];
            for r in 0..g_h.rows() {
                for (b, g) in db.iter_mut().zip(g_h.row(r)) {
                    *b += g;
                }
            }
            biases[l] = db;

            g_h = g_h.matmul(&self.weights[l])?;
            if let Some(gd) = g_hd.as_mut() {
                *gd = gd.matmul(&self.weights[l])?;
            }
        }

        Ok(Backward {
            params: Gradients {
                weights,
                biases,
                slopes,
            },
            input: g_h,
            input_tangent: g_hd,
        })
    }

    /// Forward pass that keeps its activations in the network's own cache.
    pub fn forward_train(&mut self, x: &DenseMatrix) -> Result<DenseMatrix, NnError> {
        let trace = self.trace(x)?;
        let out = trace.output().clone();
        self.cache = Some(trace);
        Ok(out)
    }

    /// Reverse pass against the cache filled by [`Self::forward_train`].
    pub fn backward(&self, output_grad: &DenseMatrix) -> Result<Gradients, NnError> {
        let trace = self.cache.as_ref().ok_or(NnError::StaleCache)?;
        if output_grad.shape() != trace.output().shape() {
            return Err(NnError::StaleCache);
        }
        Ok(self.backward_trace(trace, output_grad, None)?.params)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn parameter_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum::<usize>()
            + self.slopes.len()
    }

    /// Parameters flattened layer by layer (weights then bias), slopes last.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.slopes);
        out
    }

    pub fn assign_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.parameter_count() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} parameters", self.parameter_count()),
                found: format!("{}", flat.len()),
            });
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.as_slice().len();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let m = b.len();
            b.copy_from_slice(&flat[off..off + m]);
            off += m;
        }
        self.slopes.copy_from_slice(&flat[off..]);
        self.cache = None;
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(net: &FeedForwardNet) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            slopes: vec![0.0; net.slopes.len()],
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in w.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *x += scale * y;
            }
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in b.iter_mut().zip(o) {
                *x += scale * y;
            }
        }
        for (s, o) in self.slopes.iter_mut().zip(&other.slopes) {
            *s += scale * o;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.slopes);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

fn validate_widths(widths: &[usize]) -> Result<(), NnError> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(NnError::ShapeMismatch {
            expected: "at least two positive layer widths".into(),
            found: format!("{widths:?}"),
        });
    }
    Ok(())
}
