use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{AcrlError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// ReLU hidden layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept from a batched forward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
}

/// Parameter-shaped gradient (or optimizer moment) buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Grads {
            layers: m
                .layers
                .iter()
                .map(|l| Layer { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

impl Mlp {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = 1.0 / (n_in as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((n_out, n_in), |_| rng.random_range(-bound..bound)),
                    b: Array1::from_shape_fn(n_out, |_| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        for w in layers.windows(2) {
            assert_eq!(w[0].w.nrows(), w[1].w.ncols(), "inconsistent widths");
        }
        for l in &layers {
            assert_eq!(l.w.nrows(), l.b.len());
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.w.nrows()));
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.w.fill(0.0);
        last.b.fill(0.0);
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut it = p.iter();
        for l in self.layers.iter_mut() {
            l.w.iter_mut().for_each(|x| *x = *it.next().expect("length checked"));
            l.b.iter_mut().for_each(|x| *x = *it.next().expect("length checked"));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }

    /// Forward pass on a `batch x in` matrix.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Cache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w.t());
            z += &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        (h, Cache { inputs })
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.layers[0].w.t());
        h += &self.layers[0].b;
        for l in &self.layers[1..] {
            h.mapv_inplace(|v| v.max(0.0));
            let mut z = h.dot(&l.w.t());
            z += &l.b;
            h = z;
        }
        h
    }

    /// Reverse pass for `sum(upstream .* output)`. Returns parameter
    /// gradients and the gradient with respect to the input batch.
    pub fn backward(&self, cache: &Cache, upstream: ArrayView2<f64>) -> (Grads, Array2<f64>) {
        let mut delta = upstream.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            layers.push(Layer { w: gw, b: gb });
            let mut d_in = delta.dot(&l.w);
            if i > 0 {
                // `input` is a ReLU output: zero exactly where inactive.
                Zip::from(&mut d_in).and(input).for_each(|d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_in;
        }
        layers.reverse();
        (Grads { layers }, delta)
    }

    /// Input gradient only; skips the parameter gradients.
    pub fn input_grad(&self, cache: &Cache, upstream: ArrayView2<f64>) -> Array2<f64> {
        let mut delta = upstream.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut d_in = delta.dot(&l.w);
            if i > 0 {
                Zip::from(&mut d_in).and(&cache.inputs[i]).for_each(|d, &h| {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = d_in;
        }
        delta
    }

    /// Single-sample forward pass.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(AcrlError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict(xv).into_raw_vec_and_offset().0)
    }

    /// Single-sample gradient of `upstream . output`.
    pub fn grad(&self, x: &[f64], upstream: &[f64]) -> Result<(Grads, Vec<f64>)> {
        if x.len() != self.input_dim() {
            return Err(AcrlError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        if upstream.len() != self.output_dim() {
            return Err(AcrlError::DimensionMismatch { expected: self.output_dim(), got: upstream.len() });
        }
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let uv = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row vector");
        let (_, cache) = self.forward(xv);
        let (g, dx) = self.backward(&cache, uv);
        Ok((g, dx.into_raw_vec_and_offset().0))
    }

    /// `self <- (1 - tau) self + tau other`
    pub fn soft_update_from(&mut self, other: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut t.w).and(&o.w).for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
            Zip::from(&mut t.b).and(&o.b).for_each(|t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let widths = self.widths();
        w.write_all(&(widths.len() as u32).to_le_bytes())?;
        for d in &widths {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for x in l.w.iter().chain(l.b.iter()) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&n) {
            return Err(AcrlError::Checkpoint(format!("implausible layer count {n}")));
        }
        let mut widths = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            widths.push(u32::from_le_bytes(b4) as usize);
        }
        let mut b8 = [0u8; 8];
        let mut next = || -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let mut layers = Vec::with_capacity(n - 1);
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let wv = (0..n_in * n_out).map(|_| next()).collect::<Result<Vec<_>>>()?;
            let bv = (0..n_out).map(|_| next()).collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                w: Array2::from_shape_vec((n_out, n_in), wv).expect("sized"),
                b: Array1::from(bv),
            });
        }
        Ok(Mlp { layers })
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    /// Descends along `g`.
    pub fn step(&mut self, net: &mut Mlp, g: &Grads) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((l, gl), ml), vl) in
            net.layers.iter_mut().zip(&g.layers).zip(self.m.layers.iter_mut()).zip(self.v.layers.iter_mut())
        {
            Zip::from(&mut l.w).and(&mut ml.w).and(&mut vl.w).and(&gl.w).for_each(|p, m, v, &g| upd(p, m, v, g));
            Zip::from(&mut l.b).and(&mut ml.b).and(&mut vl.b).and(&gl.b).for_each(|p, m, v, &g| upd(p, m, v, g));
        }
    }
}
