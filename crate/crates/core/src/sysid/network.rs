//! Shallow layered predictor trained with Adam.
//!
//! With identity activations and full-batch training, the loss and all layer
//! gradients are functions of the data Gram statistics `XᵀX`, `Xᵀ1`, `TᵀX`,
//! `Tᵀ1` and `tr TᵀT` only, so an epoch costs `O(l d²)` instead of a pass over
//! the rows. Writing the network as `Wc x + bc`, with residual moments
//! `RX = Σ r xᵀ` and `R1 = Σ r`, the gradient of layer `i` is
//! `P_iᵀ (RX M_{i-1}ᵀ + R1 c_{i-1}ᵀ)` (times `2 / (N l)`), where `P_i` is the
//! product of the layers above `i` and `M_{i-1} x + c_{i-1}` is the
//! activation entering it.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::predict::Predictor;
use super::regression::{regressor_width, RegressionSet, Scaling};
use super::varx::VarxModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// out x in
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<T> {
    pub p: usize,
    pub l: usize,
    pub m: usize,
    pub layers: Vec<DenseLayer<T>>,
    /// Applied after every hidden layer; the output layer is linear.
    pub activation: Activation,
    /// Regressors and targets are divided by these before the first layer.
    pub scaling: Scaling<T>,
}

/// Layers `d -> width (x depth) -> l` with weights uniform in
/// `±1/√fan_in` and zero biases.
pub fn init_network<T: Scalar>(p: usize, l: usize, m: usize, width: usize, depth: usize, seed: u64) -> Result<NetworkModel<T>> {
    init_network_with(p, l, m, width, depth, seed, Activation::Identity)
}

pub fn init_network_with<T: Scalar>(
    p: usize,
    l: usize,
    m: usize,
    width: usize,
    depth: usize,
    seed: u64,
    activation: Activation,
) -> Result<NetworkModel<T>> {
    if width < 1 {
        return Err(Error::param("width", "must be at least 1"));
    }
    if p < 1 || l < 1 {
        return Err(Error::param("p", "network needs p >= 1 and l >= 1"));
    }
    let mut dims = vec![regressor_width(p, l, m)];
    dims.extend(std::iter::repeat_n(width, depth));
    dims.push(l);
    let mut rng = rng::stream(seed, rng::tag::WEIGHTS);
    let layers = dims
        .windows(2)
        .map(|io| {
            let bound = T::one() / T::from_usize_lossy(io[0]).sqrt();
            let w = Array2::from_shape_simple_fn((io[1], io[0]), || rng::uniform_symmetric(&mut rng, bound));
            DenseLayer {
                w,
                b: Array1::zeros(io[1]),
            }
        })
        .collect();
    Ok(NetworkModel {
        p,
        l,
        m,
        layers,
        activation,
        scaling: Scaling::identity(l, m),
    })
}

impl<T: Scalar> NetworkModel<T> {
    pub fn with_scaling(mut self, scaling: Scaling<T>) -> Self {
        self.scaling = scaling;
        self
    }

    /// Forward pass in scaled units.
    pub fn forward_scaled(&self, x: &Array2<T>) -> Array2<T> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w.t()) + &layer.b;
            if i < last && self.activation == Activation::Tanh {
                z.mapv_inplace(|v| v.tanh());
            }
            a = z;
        }
        a
    }

    /// The end-to-end affine map `Wc x + bc` in scaled units; `None` unless
    /// activations are linear.
    pub fn collapse(&self) -> Option<(Array2<T>, Array1<T>)> {
        (self.activation == Activation::Identity).then(|| composite(&self.layers))
    }

    /// Collapsed map in physical units as a VARX plus its intercept.
    pub fn to_varx(&self) -> Result<(VarxModel<T>, Array1<T>)> {
        let (wc, bc) = self.collapse().ok_or_else(|| Error::param("activation", "only linear networks collapse to a VARX"))?;
        let rs = self.scaling.regressor_scale(self.p);
        let os = &self.scaling.output_scale;
        let w = Array2::from_shape_fn((wc.ncols(), wc.nrows()), |(c, j)| os[j] * wc[[j, c]] / rs[c]);
        let intercept = Array1::from_shape_fn(self.l, |j| os[j] * bc[j]);
        Ok((VarxModel::from_weight_matrix(&w, self.p, self.l, self.m)?, intercept))
    }

    /// Spectral-norm bound of the collapsed map by submultiplicativity.
    pub fn layer_norm_product(&self) -> T {
        self.layers.iter().map(|l| l.w.iter().map(|&v| v * v).sum::<T>().sqrt()).fold(T::one(), |a, b| a * b)
    }
}

impl<T: Scalar> Predictor<T> for NetworkModel<T> {
    fn p(&self) -> usize {
        self.p
    }
    fn l(&self) -> usize {
        self.l
    }
    fn m(&self) -> usize {
        self.m
    }
    fn predict(&self, phi: &Array2<T>) -> Array2<T> {
        let x = phi / &self.scaling.regressor_scale(self.p);
        self.forward_scaled(&x) * &Array1::from(self.scaling.output_scale.clone())
    }
    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

fn composite<T: Scalar>(layers: &[DenseLayer<T>]) -> (Array2<T>, Array1<T>) {
    let mut wc = layers[0].w.clone();
    let mut bc = layers[0].b.clone();
    for layer in &layers[1..] {
        wc = layer.w.dot(&wc);
        bc = layer.w.dot(&bc) + &layer.b;
    }
    (wc, bc)
}

/// Mean squared one-step error in the scaled units used for training.
pub fn scaled_mse<T: Scalar, P: Predictor<T> + ?Sized>(model: &P, reg: &RegressionSet<T>, scaling: &Scaling<T>) -> T {
    let pred = model.predict(&reg.phi);
    let os = Array1::from(scaling.output_scale.clone());
    let r = (&reg.t - &pred) / &os;
    r.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(r.len().max(1))
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub lr: T,
    /// If set, the step size decays geometrically to this value.
    pub lr_final: Option<T>,
    /// Mini-batch rows; `None` uses the full set.
    pub batch: Option<usize>,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 5000,
            lr: T::lit(1e-3),
            lr_final: None,
            batch: None,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory<T> {
    /// Full training-set MSE after each epoch (scaled units).
    pub train_mse: Vec<T>,
    /// Validation closed-loop MSE after each epoch.
    pub val_mse: Vec<T>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
}

impl<T: Scalar> TrainHistory<T> {
    pub fn best_val(&self) -> T {
        self.val_mse[self.best_epoch - 1]
    }

    pub fn best_train(&self) -> T {
        self.train_mse[self.best_epoch - 1]
    }
}

/// Gram statistics of a scaled regression set.
struct Moments<T> {
    g: Array2<T>,
    s: Array1<T>,
    tx: Array2<T>,
    t1: Array1<T>,
    tt: T,
    n: T,
    l: T,
}

impl<T: Scalar> Moments<T> {
    fn new(x: &Array2<T>, t: &Array2<T>) -> Self {
        Self {
            g: x.t().dot(x),
            s: x.sum_axis(Axis(0)),
            tx: t.t().dot(x),
            t1: t.sum_axis(Axis(0)),
            tt: t.iter().map(|&v| v * v).sum(),
            n: T::from_usize_lossy(x.nrows()),
            l: T::from_usize_lossy(t.ncols()),
        }
    }

    /// MSE of `Wc x + bc`, plus the residual moments `(RX, R1)`.
    fn evaluate(&self, wc: &Array2<T>, bc: &Array1<T>) -> (T, Array2<T>, Array1<T>) {
        let wg = wc.dot(&self.g);
        let quad = (&wg * wc).sum();
        let ws = wc.dot(&self.s);
        let cross = (wc * &self.tx).sum();
        let sse = quad + T::lit(2.0) * bc.dot(&ws) + self.n * bc.dot(bc) - T::lit(2.0) * cross - T::lit(2.0) * bc.dot(&self.t1) + self.tt;
        let mse = sse.max(T::zero()) / (self.n * self.l);
        let bs = bc.view().insert_axis(Axis(1)).dot(&self.s.view().insert_axis(Axis(0)));
        let rx = wg + bs - &self.tx;
        let r1 = ws + &(bc * self.n) - &self.t1;
        (mse, rx, r1)
    }

    fn mse(&self, layers: &[DenseLayer<T>]) -> T {
        let (wc, bc) = composite(layers);
        self.evaluate(&wc, &bc).0
    }

    /// Loss and per-layer gradients `(dW, db)`.
    fn gradients(&self, layers: &[DenseLayer<T>]) -> (T, Vec<(Array2<T>, Array1<T>)>) {
        let depth = layers.len();
        // prefix maps: activation entering layer i is M[i] x + c[i]; M[0] = I
        let mut prefix_m: Vec<Option<Array2<T>>> = vec![None];
        let mut prefix_c: Vec<Array1<T>> = vec![Array1::zeros(layers[0].w.ncols())];
        for i in 0..depth {
            let m = match &prefix_m[i] {
                None => layers[i].w.clone(),
                Some(m) => layers[i].w.dot(m),
            };
            let c = layers[i].w.dot(&prefix_c[i]) + &layers[i].b;
            prefix_m.push(Some(m));
            prefix_c.push(c);
        }
        let wc = prefix_m[depth].clone().expect("non-empty");
        let bc = prefix_c[depth].clone();
        let (mse, rx, r1) = self.evaluate(&wc, &bc);
        let scale = T::lit(2.0) / (self.n * self.l);

        // suffix products P_i = W_L .. W_{i+1}, built top-down
        let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); depth];
        let mut p_t: Option<Array2<T>> = None; // P_iᵀ, None = identity
        for i in (0..depth).rev() {
            let inner = match &prefix_m[i] {
                None => rx.clone(),
                Some(m) => rx.dot(&m.t()),
            } + r1.view().insert_axis(Axis(1)).dot(&prefix_c[i].view().insert_axis(Axis(0)));
            let (dw, db) = match &p_t {
                None => (inner, r1.clone()),
                Some(pt) => (pt.dot(&inner), pt.dot(&r1)),
            };
            grads[i] = (dw * scale, db * scale);
            p_t = Some(match p_t {
                None => layers[i].w.t().to_owned(),
                Some(pt) => layers[i].w.t().dot(&pt),
            });
        }
        (mse, grads)
    }
}

struct Adam<T> {
    m: Vec<(Array2<T>, Array1<T>)>,
    v: Vec<(Array2<T>, Array1<T>)>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(layers: &[DenseLayer<T>]) -> Self {
        let zeros: Vec<_> = layers.iter().map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len()))).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [DenseLayer<T>], grads: &[(Array2<T>, Array1<T>)], lr: T, cfg: &TrainConfig<T>) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + cfg.eps);
        };
        for (i, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            ndarray::Zip::from(&mut layer.w).and(gw).and(mw).and(vw).for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b).and(gb).and(mb).and(vb).for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Backpropagation on a batch (rows of `x`, `t` in scaled units).
fn batch_gradients<T: Scalar>(net: &NetworkModel<T>, x: &Array2<T>, t: &Array2<T>) -> Vec<(Array2<T>, Array1<T>)> {
    let depth = net.layers.len();
    let mut acts = vec![x.clone()];
    let mut pre = Vec::with_capacity(depth);
    for (i, layer) in net.layers.iter().enumerate() {
        let z = acts[i].dot(&layer.w.t()) + &layer.b;
        let a = if i + 1 < depth && net.activation == Activation::Tanh { z.mapv(|v| v.tanh()) } else { z.clone() };
        pre.push(z);
        acts.push(a);
    }
    let scale = T::lit(2.0) / T::from_usize_lossy(t.len());
    let mut delta = (&acts[depth] - t) * scale;
    let mut grads = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); depth];
    for i in (0..depth).rev() {
        grads[i] = (delta.t().dot(&acts[i]), delta.sum_axis(Axis(0)));
        if i > 0 {
            let mut back = delta.dot(&net.layers[i].w);
            if net.activation == Activation::Tanh {
                ndarray::Zip::from(&mut back).and(&pre[i - 1]).for_each(|d, &z| {
                    let th = z.tanh();
                    *d *= T::one() - th * th;
                });
            }
            delta = back;
        }
    }
    grads
}

fn forward_mse<T: Scalar>(net: &NetworkModel<T>, x: &Array2<T>, t: &Array2<T>) -> T {
    let r = net.forward_scaled(x) - t;
    r.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(r.len().max(1))
}

/// Trains `net` on scaled versions of `train`; after every epoch the
/// closed-loop validation MSE is recorded and the best snapshot returned.
pub fn train_network<T: Scalar>(
    net: &NetworkModel<T>,
    train: &RegressionSet<T>,
    val: &RegressionSet<T>,
    cfg: &TrainConfig<T>,
) -> Result<(NetworkModel<T>, TrainHistory<T>)> {
    if cfg.epochs < 1 {
        return Err(Error::param("epochs", "must be at least 1"));
    }
    if !(cfg.lr > T::zero()) {
        return Err(Error::param("lr", "must be positive"));
    }
    for reg in [train, val] {
        if reg.p != net.p || reg.l != net.l || reg.m != net.m {
            return Err(Error::Dimension(format!(
                "regression set (p={}, l={}, m={}) does not match network (p={}, l={}, m={})",
                reg.p, reg.l, reg.m, net.p, net.l, net.m
            )));
        }
    }
    let tr = net.scaling.scale_set(train);
    let va = net.scaling.scale_set(val);
    let rows = tr.rows();
    let batch = cfg.batch.unwrap_or(rows).clamp(1, rows.max(1));
    let fast = net.activation == Activation::Identity && batch >= rows;

    let lr_at = |epoch: usize| -> T {
        match cfg.lr_final {
            Some(end) if cfg.epochs > 1 => {
                let frac = T::from_usize_lossy(epoch - 1) / T::from_usize_lossy(cfg.epochs - 1);
                cfg.lr * (end / cfg.lr).powf(frac)
            }
            _ => cfg.lr,
        }
    };

    let mut model = net.clone();
    let mut adam = Adam::new(&model.layers);
    let mut history = TrainHistory {
        train_mse: Vec::with_capacity(cfg.epochs),
        val_mse: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_val = T::infinity();

    let diverged = |epoch: usize, loss: T| Error::Diverged { epoch, loss: loss.as_f64() };

    if fast {
        let mt = Moments::new(&tr.phi, &tr.t);
        let mv = Moments::new(&va.phi, &va.t);
        let (mut loss, mut grads) = mt.gradients(&model.layers);
        if !loss.is_finite() {
            return Err(diverged(0, loss));
        }
        for epoch in 1..=cfg.epochs {
            adam.step(&mut model.layers, &grads, lr_at(epoch), cfg);
            (loss, grads) = mt.gradients(&model.layers);
            if !loss.is_finite() || grads.iter().any(|(w, _)| w.iter().any(|v| !v.is_finite())) {
                return Err(diverged(epoch, loss));
            }
            let v = mv.mse(&model.layers);
            history.train_mse.push(loss);
            history.val_mse.push(v);
            if v < best_val {
                best_val = v;
                best = model.clone();
                history.best_epoch = epoch;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..rows).collect();
        let mut shuffle = rng::stream(cfg.seed, rng::tag::SHUFFLE);
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut shuffle);
            let lr = lr_at(epoch);
            for chunk in order.chunks(batch) {
                let x = tr.phi.select(Axis(0), chunk);
                let t = tr.t.select(Axis(0), chunk);
                let grads = batch_gradients(&model, &x, &t);
                adam.step(&mut model.layers, &grads, lr, cfg);
            }
            let loss = forward_mse(&model, &tr.phi, &tr.t);
            if !loss.is_finite() {
                return Err(diverged(epoch, loss));
            }
            let v = forward_mse(&model, &va.phi, &va.t);
            history.train_mse.push(loss);
            history.val_mse.push(v);
            if v < best_val {
                best_val = v;
                best = model.clone();
                history.best_epoch = epoch;
            }
        }
    }
    if history.best_epoch == 0 {
        return Err(diverged(cfg.epochs, best_val));
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::regression::regressors_from;

    fn toy_set(seed: u64) -> RegressionSet<f64> {
        let mut r = rng::stream(seed, "test");
        let f = 200;
        let u = Array2::from_shape_simple_fn((2, f), || rng::normal(&mut r, 1.0));
        let mut q = Array2::zeros((2, f));
        for k in 1..f {
            q[[0, k]] = 0.5 * q[[0, k - 1]] + u[[0, k - 1]];
            q[[1, k]] = -0.3 * q[[1, k - 1]] + 0.2 * q[[0, k - 1]] + u[[1, k - 1]];
        }
        regressors_from(&q, &u, 2).unwrap()
    }

    #[test]
    fn deterministic_init_with_zero_output_at_origin() {
        let a = init_network::<f64>(3, 4, 2, 32, 2, 7).unwrap();
        let b = init_network::<f64>(3, 4, 2, 32, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_network::<f64>(3, 4, 2, 32, 2, 8).unwrap());
        let zero = a.predict(&Array2::zeros((1, 18)));
        assert!(zero.iter().all(|v| *v == 0.0));
        assert_eq!(a.layers.len(), 3);
        assert_eq!(a.layers[0].w.dim(), (32, 18));
        assert!(init_network::<f64>(3, 4, 2, 0, 2, 7).is_err());
    }

    #[test]
    fn gram_gradients_match_backprop() {
        let reg = toy_set(1);
        let mut net = init_network::<f64>(2, 2, 2, 5, 2, 3).unwrap();
        for layer in &mut net.layers {
            layer.b.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.2);
        }
        let (_, fast) = Moments::new(&reg.phi, &reg.t).gradients(&net.layers);
        let slow = batch_gradients(&net, &reg.phi, &reg.t);
        for ((fw, fb), (sw, sb)) in fast.iter().zip(&slow) {
            for (a, b) in fw.iter().zip(sw.iter()).chain(fb.iter().zip(sb.iter())) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
        let mse = Moments::new(&reg.phi, &reg.t).mse(&net.layers);
        assert!((mse - forward_mse(&net, &reg.phi, &reg.t)).abs() < 1e-10);
    }

    #[test]
    fn best_snapshot_is_validation_argmin() {
        let train = toy_set(1);
        let val = toy_set(2);
        let net = init_network::<f64>(2, 2, 2, 8, 2, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            lr: 1e-2,
            ..Default::default()
        };
        let (best, hist) = train_network(&net, &train, &val, &cfg).unwrap();
        let min = hist.val_mse.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(hist.best_val(), min);
        assert!(hist.best_val() <= *hist.val_mse.last().unwrap());
        assert!((scaled_mse(&best, &val, &best.scaling) - min).abs() < 1e-10);
    }

    #[test]
    fn minibatch_path_trains() {
        let train = toy_set(1);
        let val = toy_set(2);
        let net = init_network_with::<f64>(2, 2, 2, 8, 1, 3, Activation::Tanh).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            lr: 1e-2,
            batch: Some(32),
            ..Default::default()
        };
        let (_, hist) = train_network(&net, &train, &val, &cfg).unwrap();
        assert!(hist.train_mse.last().unwrap() < &hist.train_mse[0]);
    }

    #[test]
    fn collapse_matches_forward() {
        let reg = toy_set(3);
        let mut net = init_network::<f64>(2, 2, 2, 6, 2, 1).unwrap();
        net.scaling = Scaling {
            output_scale: vec![2.0, 0.5],
            input_scale: vec![3.0, 1.5],
        };
        let (varx, intercept) = net.to_varx().unwrap();
        assert!(intercept.iter().all(|v| *v == 0.0));
        let a = net.predict(&reg.phi);
        let b = varx.predict(&reg.phi);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_step_reports_divergence() {
        let train = toy_set(1);
        let net = init_network::<f64>(2, 2, 2, 8, 2, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            lr: 1e200,
            ..Default::default()
        };
        assert!(matches!(train_network(&net, &train, &train, &cfg), Err(Error::Diverged { .. })));
    }
}
