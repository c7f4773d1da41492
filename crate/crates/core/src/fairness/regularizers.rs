//! CAPIFY and ECAPIFY regularizers, the adversarial inner maximisation, and
//! their parameter gradients.
//!
//! All losses are the clamped cross-entropy of the classifier logit. Input
//! gradients come from a reverse pass; derivatives of quantities that
//! themselves contain an input gradient use a forward tangent pass followed by
//! a reverse pass over both the activations and their tangents.

use serde::{Deserialize, Serialize};

use super::classifier::{logit_loss, rows_matrix, LogitLoss};
use super::FairnessError;
use crate::metric::{BaseMetric, OracleMetric};
use crate::nn::{l2_norm, DenseMatrix, FeedForwardNet, Gradients, NnError};
use crate::scm::{Instance, Scm, SemiLatentPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerWeights {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Default for RegularizerWeights {
    fn default() -> Self {
        Self {
            mu1: 0.5,
            mu2: 0.5,
            mu3: 0.5,
        }
    }
}

impl RegularizerWeights {
    pub fn is_zero(&self) -> bool {
        self.mu1 == 0.0 && self.mu2 == 0.0 && self.mu3 == 0.0
    }

    pub fn validate(&self) -> Result<(), FairnessError> {
        if [self.mu1, self.mu2, self.mu3].iter().all(|m| *m >= 0.0 && m.is_finite()) {
            Ok(())
        } else {
            Err(FairnessError::Config(format!("regularizer weights must be non-negative: {self:?}")))
        }
    }
}

struct RowEval {
    loss: Vec<LogitLoss>,
    /// `∇_x ℓ`, one row per input row.
    grads: DenseMatrix,
}

fn eval_rows(net: &FeedForwardNet, x: &DenseMatrix, y: &[f64]) -> Result<RowEval, NnError> {
    let trace = net.trace(x)?;
    let loss: Vec<LogitLoss> = trace
        .output()
        .as_slice()
        .iter()
        .zip(y)
        .map(|(&z, &y)| logit_loss(z, y))
        .collect();
    let g = DenseMatrix::from_vec(loss.len(), 1, loss.iter().map(|l| l.d1).collect())?;
    let grads = net.backward_trace(&trace, &g, None)?.input;
    Ok(RowEval { loss, grads })
}

/// Parameter gradient of `Σ_i c_i·ℓ(x_i)`.
fn weighted_backward(
    net: &FeedForwardNet,
    x: &DenseMatrix,
    y: &[f64],
    coef: &[f64],
) -> Result<Gradients, NnError> {
    let trace = net.trace(x)?;
    let g: Vec<f64> = trace
        .output()
        .as_slice()
        .iter()
        .zip(y)
        .zip(coef)
        .map(|((&z, &y), &c)| c * logit_loss(z, y).d1)
        .collect();
    let g = DenseMatrix::from_vec(g.len(), 1, g)?;
    Ok(net.backward_trace(&trace, &g, None)?.params)
}

/// Parameter gradient of `Σ_i [dirs_iᵀ ∇_x ℓ(x_i) + c_i·ℓ(x_i)]` with the
/// directions held fixed.
fn directional_backward(
    net: &FeedForwardNet,
    x: &DenseMatrix,
    dirs: &DenseMatrix,
    y: &[f64],
    coef: &[f64],
) -> Result<Gradients, NnError> {
    let trace = net.trace_with_tangent(x, dirs)?;
    let z = trace.output().as_slice();
    let zd = trace.output_tangent().expect("tangent traced").as_slice();
    let mut g_h = Vec::with_capacity(z.len());
    let mut g_t = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let l = logit_loss(z[i], y[i]);
        g_h.push(l.d2 * zd[i] + coef[i] * l.d1);
        g_t.push(l.d1);
    }
    let g_h = DenseMatrix::from_vec(z.len(), 1, g_h)?;
    let g_t = DenseMatrix::from_vec(z.len(), 1, g_t)?;
    Ok(net.backward_trace(&trace, &g_h, Some(&g_t))?.params)
}

/// Mean cross-entropy over the rows and its parameter gradient.
pub fn bce_batch(
    net: &FeedForwardNet,
    x: &DenseMatrix,
    y: &[f64],
) -> Result<(f64, Gradients), NnError> {
    let trace = net.trace(x)?;
    let b = y.len().max(1) as f64;
    let mut value = 0.0;
    let g: Vec<f64> = trace
        .output()
        .as_slice()
        .iter()
        .zip(y)
        .map(|(&z, &y)| {
            let l = logit_loss(z, y);
            value += l.value;
            l.d1 / b
        })
        .collect();
    let g = DenseMatrix::from_vec(g.len(), 1, g)?;
    Ok((value / b, net.backward_trace(&trace, &g, None)?.params))
}

fn scale_to_ball(base: &BaseMetric, d: &mut [f64], radius: f64) {
    let n = base.norm(d);
    if n > radius && n > 0.0 {
        let s = radius / n;
        d.iter_mut().for_each(|x| *x *= s);
    }
}

/// Feature-space projected gradient ascent on the loss: start at `x`, take
/// `steps` normalised gradient steps of length `step` and project back onto
/// the ℓ₂ ball of radius `delta` around `x`. Returns the final iterate.
pub fn pgd_feature(
    net: &FeedForwardNet,
    x: &DenseMatrix,
    y: &[f64],
    delta: f64,
    steps: usize,
    step: f64,
) -> Result<DenseMatrix, NnError> {
    let mut cur = x.clone();
    if delta == 0.0 || step == 0.0 {
        return Ok(cur);
    }
    for _ in 0..steps {
        let grads = eval_rows(net, &cur, y)?.grads;
        for r in 0..cur.rows() {
            let g = grads.row(r);
            let norm = l2_norm(g);
            if norm == 0.0 {
                continue;
            }
            let mut d: Vec<f64> = cur
                .row(r)
                .iter()
                .zip(x.row(r))
                .zip(g)
                .map(|((c, o), gi)| c - o + step * gi / norm)
                .collect();
            scale_to_ball(&BaseMetric::Euclidean, &mut d, delta);
            for ((c, o), di) in cur.row_mut(r).iter_mut().zip(x.row(r)).zip(&d) {
                *c = o + di;
            }
        }
    }
    Ok(cur)
}

/// Classifier-independent data for one training instance under CAPIFY.
#[derive(Clone, Debug)]
pub struct CapifyPoint {
    pub instance: Instance,
    pub label: f64,
    pub semilatent: SemiLatentPoint,
    /// Twins over every declared level, including the instance's own.
    pub twins: Vec<Instance>,
    /// `∂v/∂latent` at the instance.
    pub jacobian: DenseMatrix,
}

impl CapifyPoint {
    pub fn new(scm: &Scm, v: &Instance, label: u8) -> Result<Self, FairnessError> {
        let semilatent = scm.to_semilatent(v)?;
        Ok(Self {
            instance: v.clone(),
            label: f64::from(label),
            twins: scm.all_twins(v)?,
            jacobian: scm.latent_jacobian(&semilatent)?,
            semilatent,
        })
    }

    /// The counterfactual with latent offset `delta`.
    fn shifted(&self, scm: &Scm, delta: &[f64]) -> Result<(Instance, SemiLatentPoint), FairnessError> {
        let q = SemiLatentPoint {
            sensitive: self.semilatent.sensitive.clone(),
            latent: self
                .semilatent
                .latent
                .iter()
                .zip(delta)
                .map(|(a, b)| a + b)
                .collect(),
        };
        Ok((scm.from_semilatent(&q)?, q))
    }
}

fn jt_times(j: &DenseMatrix, g: &[f64]) -> Vec<f64> {
    (0..j.cols()).map(|c| (0..j.rows()).map(|r| j[(r, c)] * g[r]).sum()).collect()
}

/// State of the latent-residual maximisation for a batch of points.
struct Residuals {
    /// `J_iᵀ ∇_v ℓ(v_i)`: the noise gradient at the instance.
    slopes: Vec<Vec<f64>>,
    base_loss: Vec<f64>,
}

impl Residuals {
    fn new(net: &FeedForwardNet, points: &[CapifyPoint]) -> Result<(Self, RowEval), FairnessError> {
        let x = rows_matrix(&points.iter().map(|p| p.instance.clone()).collect::<Vec<_>>());
        let y: Vec<f64> = points.iter().map(|p| p.label).collect();
        let ev = eval_rows(net, &x, &y)?;
        let slopes = points
            .iter()
            .enumerate()
            .map(|(i, p)| jt_times(&p.jacobian, ev.grads.row(i)))
            .collect();
        let base_loss = ev.loss.iter().map(|l| l.value).collect();
        Ok((Self { slopes, base_loss }, ev))
    }

    /// Residuals and their latent gradients at the given offsets.
    fn at(
        &self,
        scm: &Scm,
        net: &FeedForwardNet,
        points: &[CapifyPoint],
        deltas: &[Vec<f64>],
        with_grad: bool,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Instance>), FairnessError> {
        let mut rows = Vec::with_capacity(points.len());
        let mut qs = Vec::with_capacity(points.len());
        for (p, d) in points.iter().zip(deltas) {
            let (v, q) = p.shifted(scm, d)?;
            rows.push(v);
            qs.push(q);
        }
        let y: Vec<f64> = points.iter().map(|p| p.label).collect();
        let ev = eval_rows(net, &rows_matrix(&rows), &y)?;
        let mut r = Vec::with_capacity(points.len());
        let mut grads = Vec::new();
        for i in 0..points.len() {
            let lin: f64 = deltas[i].iter().zip(&self.slopes[i]).map(|(a, b)| a * b).sum();
            r.push(ev.loss[i].value - self.base_loss[i] - lin);
            if with_grad {
                let j = scm.latent_jacobian(&qs[i])?;
                let g = jt_times(&j, ev.grads.row(i));
                grads.push(g.iter().zip(&self.slopes[i]).map(|(a, b)| a - b).collect());
            }
        }
        Ok((r, grads, rows))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Maximise `|ℓ(CF(v, δ)) − ℓ(v) − δᵀ∇_δℓ|` over the latent ball of radius
/// `delta` for every point. Starts from the better of `±delta` along the
/// noise gradient, then takes `steps` normalised ascent steps of length
/// `step`, keeping the best iterate.
fn maximise_residuals(
    oracle: &OracleMetric,
    net: &FeedForwardNet,
    points: &[CapifyPoint],
    res: &Residuals,
    delta: f64,
    steps: usize,
    step: f64,
) -> Result<Vec<Vec<f64>>, FairnessError> {
    let scm = oracle.scm();
    let base = oracle.base();
    let k = scm.non_sensitive().len();
    if delta == 0.0 || k == 0 {
        return Ok(vec![vec![0.0; k]; points.len()]);
    }
    let along = |i: usize, s: f64| -> Vec<f64> {
        let g = &res.slopes[i];
        let mut d = if l2_norm(g) > 0.0 {
            g.clone()
        } else {
            let mut e = vec![0.0; k];
            e[0] = 1.0;
            e
        };
        let n = base.norm(&d);
        d.iter_mut().for_each(|x| *x *= s * delta / n);
        d
    };
    let plus: Vec<Vec<f64>> = (0..points.len()).map(|i| along(i, 1.0)).collect();
    let minus: Vec<Vec<f64>> = (0..points.len()).map(|i| along(i, -1.0)).collect();
    let (r_plus, _, _) = res.at(scm, net, points, &plus, false)?;
    let (r_minus, _, _) = res.at(scm, net, points, &minus, false)?;
    let mut cur: Vec<Vec<f64>> = (0..points.len())
        .map(|i| if r_minus[i].abs() > r_plus[i].abs() { minus[i].clone() } else { plus[i].clone() })
        .collect();
    let mut best = cur.clone();
    let mut best_val: Vec<f64> = r_plus.iter().zip(&r_minus).map(|(a, b)| a.abs().max(b.abs())).collect();
    for t in 0..=steps {
        let (r, grads, _) = res.at(scm, net, points, &cur, t < steps)?;
        for i in 0..points.len() {
            if r[i].abs() > best_val[i] {
                best_val[i] = r[i].abs();
                best[i] = cur[i].clone();
            }
        }
        if t == steps {
            break;
        }
        for i in 0..points.len() {
            let g = &grads[i];
            let norm = l2_norm(g);
            if norm == 0.0 || r[i] == 0.0 {
                continue;
            }
            let s = sign(r[i]) * step / norm;
            cur[i].iter_mut().zip(g).for_each(|(d, gi)| *d += s * gi);
            scale_to_ball(base, &mut cur[i], delta);
        }
    }
    Ok(best)
}

/// CAPIFY value and parameter gradient, averaged over `points`, with the
/// latent offsets of the residual term held at `deltas`.
pub fn capify_gamma_at(
    oracle: &OracleMetric,
    net: &FeedForwardNet,
    points: &[CapifyPoint],
    weights: &RegularizerWeights,
    deltas: &[Vec<f64>],
) -> Result<(f64, Gradients), FairnessError> {
    if points.is_empty() {
        return Ok((0.0, Gradients::zeros_like(net)));
    }
    let scm = oracle.scm();
    let b = points.len() as f64;
    let (res, ev) = Residuals::new(net, points)?;
    let (r, _, shifted) = res.at(scm, net, points, deltas, false)?;
    let y: Vec<f64> = points.iter().map(|p| p.label).collect();

    // Twin term: worst twin per point.
    let twin_rows: Vec<Instance> = points.iter().flat_map(|p| p.twins.iter().cloned()).collect();
    let twin_y: Vec<f64> = points
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.label, p.twins.len()))
        .collect();
    let twin_x = rows_matrix(&twin_rows);
    let twin_loss = eval_rows(net, &twin_x, &twin_y)?.loss;
    let mut twin_coef = vec![0.0; twin_rows.len()];
    let mut value = 0.0;
    let mut offset = 0;
    for p in points {
        let losses = &twin_loss[offset..offset + p.twins.len()];
        let (arg, worst) = losses
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l.value > acc.1 { (i, l.value) } else { acc });
        value += weights.mu1 * worst;
        twin_coef[offset + arg] = weights.mu1 / b;
        offset += p.twins.len();
    }

    // Gradient-norm and residual terms share one tangent pass at the instances.
    let n = scm.node_count();
    let mut dirs = DenseMatrix::zeros(points.len(), n);
    let mut coef = vec![0.0; points.len()];
    let mut shift_coef = vec![0.0; points.len()];
    for (i, p) in points.iter().enumerate() {
        let s = &res.slopes[i];
        let s_norm = l2_norm(s);
        let sg = sign(r[i]);
        value += weights.mu2 * s_norm + weights.mu3 * r[i].abs();
        let w = if s_norm > 0.0 {
            p.jacobian.mat_vec(&s.iter().map(|x| x / s_norm).collect::<Vec<_>>())?
        } else {
            vec![0.0; n]
        };
        let a = p.jacobian.mat_vec(&deltas[i])?;
        for c in 0..n {
            dirs[(i, c)] = (weights.mu2 * w[c] - weights.mu3 * sg * a[c]) / b;
        }
        coef[i] = -weights.mu3 * sg;
        shift_coef[i] = weights.mu3 * sg / b;
    }
    let _ = ev;
    let x = rows_matrix(&points.iter().map(|p| p.instance.clone()).collect::<Vec<_>>());
    let coef: Vec<f64> = coef.iter().map(|c| c / b).collect();
    let mut grads = directional_backward(net, &x, &dirs, &y, &coef)?;
    grads.add_scaled(&weighted_backward(net, &twin_x, &twin_y, &twin_coef)?, 1.0);
    grads.add_scaled(&weighted_backward(net, &rows_matrix(&shifted), &y, &shift_coef)?, 1.0);
    Ok((value / b, grads))
}

/// CAPIFY regularizer averaged over `points`: the worst twin loss, the norm
/// of the noise gradient, and the largest first-order residual over the
/// latent ball found by projected gradient ascent. Gradients treat the
/// maximising offsets as constants.
pub fn capify_regularizer(
    oracle: &OracleMetric,
    net: &FeedForwardNet,
    points: &[CapifyPoint],
    weights: &RegularizerWeights,
    delta: f64,
    steps: usize,
    step: f64,
) -> Result<(f64, Gradients, Vec<Vec<f64>>), FairnessError> {
    let k = oracle.scm().non_sensitive().len();
    let deltas = if weights.mu3 == 0.0 || points.is_empty() {
        vec![vec![0.0; k]; points.len()]
    } else {
        let (res, _) = Residuals::new(net, points)?;
        maximise_residuals(oracle, net, points, &res, delta, steps, step)?
    };
    let (v, g) = capify_gamma_at(oracle, net, points, weights, &deltas)?;
    Ok((v, g, deltas))
}

/// Per-twin ECAPIFY quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcapifyTerms {
    pub loss: f64,
    /// `Δ·‖∇_w ℓ‖₂`.
    pub gradient: f64,
    /// `|ℓ(w + Δu) − ℓ(w) − Δuᵀ∇_w ℓ|` with `u` the unit gradient.
    pub residual: f64,
}

impl EcapifyTerms {
    pub fn score(&self, w: &RegularizerWeights) -> f64 {
        w.mu1 * self.loss + w.mu2 * self.gradient + w.mu3 * self.residual
    }
}

struct EcapifyRows {
    terms: Vec<EcapifyTerms>,
    x: DenseMatrix,
    stepped: DenseMatrix,
    /// Unit gradients and the gradients at the stepped rows.
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
    stepped_grads: DenseMatrix,
    signs: Vec<f64>,
}

fn ecapify_rows(net: &FeedForwardNet, rows: &[Instance], y: &[f64], delta: f64) -> Result<EcapifyRows, NnError> {
    let x = rows_matrix(rows);
    let ev = eval_rows(net, &x, y)?;
    let mut stepped = x.clone();
    let mut units = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let g = ev.grads.row(i);
        let n = l2_norm(g);
        let u: Vec<f64> = if n > 0.0 { g.iter().map(|x| x / n).collect() } else { vec![0.0; g.len()] };
        for (s, ui) in stepped.row_mut(i).iter_mut().zip(&u) {
            *s += delta * ui;
        }
        units.push(u);
        norms.push(n);
    }
    let ev2 = eval_rows(net, &stepped, y)?;
    let mut terms = Vec::with_capacity(rows.len());
    let mut signs = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let r = ev2.loss[i].value - ev.loss[i].value - delta * norms[i];
        signs.push(sign(r));
        terms.push(EcapifyTerms {
            loss: ev.loss[i].value,
            gradient: delta * norms[i],
            residual: r.abs(),
        });
    }
    Ok(EcapifyRows {
        terms,
        x,
        stepped,
        units,
        norms,
        stepped_grads: ev2.grads,
        signs,
    })
}

/// ECAPIFY terms for each row of `rows` with label `y`.
pub fn ecapify_terms(net: &FeedForwardNet, rows: &[Instance], y: u8, delta: f64) -> Result<Vec<EcapifyTerms>, NnError> {
    let ys = vec![f64::from(y); rows.len()];
    Ok(ecapify_rows(net, rows, &ys, delta)?.terms)
}

/// ECAPIFY regularizer averaged over instances: for each instance the
/// largest weighted score over its estimated twins (the instance included).
/// The gradient is exact at the maximising twin.
pub fn ecapify_regularizer(
    net: &FeedForwardNet,
    twins: &[Vec<Instance>],
    labels: &[u8],
    weights: &RegularizerWeights,
    delta: f64,
) -> Result<(f64, Gradients), FairnessError> {
    if twins.len() != labels.len() {
        return Err(FairnessError::LengthMismatch(twins.len(), labels.len()));
    }
    if twins.iter().any(Vec::is_empty) {
        return Err(FairnessError::Config("every instance needs at least one twin".into()));
    }
    if twins.is_empty() {
        return Ok((0.0, Gradients::zeros_like(net)));
    }
    let b = twins.len() as f64;
    let rows: Vec<Instance> = twins.iter().flatten().cloned().collect();
    let y: Vec<f64> = twins
        .iter()
        .zip(labels)
        .flat_map(|(t, &l)| std::iter::repeat_n(f64::from(l), t.len()))
        .collect();
    let er = ecapify_rows(net, &rows, &y, delta)?;
    let n = er.x.cols();
    let mut pick = Vec::with_capacity(twins.len());
    let mut value = 0.0;
    let mut offset = 0;
    for t in twins {
        let (arg, best) = (offset..offset + t.len())
            .map(|r| (r, er.terms[r].score(weights)))
            .fold((offset, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        value += best;
        pick.push(arg);
        offset += t.len();
    }
    let mut x = DenseMatrix::zeros(pick.len(), n);
    let mut xs = DenseMatrix::zeros(pick.len(), n);
    let mut dirs = DenseMatrix::zeros(pick.len(), n);
    let mut py = Vec::with_capacity(pick.len());
    let mut coef = Vec::with_capacity(pick.len());
    let mut scoef = Vec::with_capacity(pick.len());
    for (k, &r) in pick.iter().enumerate() {
        x.row_mut(k).copy_from_slice(er.x.row(r));
        xs.row_mut(k).copy_from_slice(er.stepped.row(r));
        py.push(y[r]);
        let sg = er.signs[r];
        let u = &er.units[r];
        let nrm = er.norms[r];
        if nrm > 0.0 {
            let gs = er.stepped_grads.row(r);
            let proj: f64 = u.iter().zip(gs).map(|(a, b)| a * b).sum();
            for c in 0..n {
                let perp = (gs[c] - proj * u[c]) / nrm;
                dirs[(k, c)] = (weights.mu2 * delta * u[c]
                    + weights.mu3 * sg * delta * (perp - u[c]))
                    / b;
            }
        }
        coef.push((weights.mu1 - weights.mu3 * sg) / b);
        scoef.push(weights.mu3 * sg / b);
    }
    let mut grads = directional_backward(net, &x, &dirs, &py, &coef)?;
    grads.add_scaled(&weighted_backward(net, &xs, &py, &scoef)?, 1.0);
    Ok((value / b, grads))
}
