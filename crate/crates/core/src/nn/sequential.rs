//! A feed-forward stack of 3x3 convolutions, ReLUs, 2x2 max pools and dense
//! layers with a softmax output. Activations are NHWC, parameters live in
//! one flat vector described by a [`ParamLayout`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::ssl::Probs;

use super::gemm::gemm;
use super::{Classifier, ParamLayout};

#[derive(Clone, Debug)]
enum Layer {
    /// Same-padded 3x3 convolution. Weights are `[3, 3, cin, cout]`.
    Conv3x3 {
        h: usize,
        w: usize,
        cin: usize,
        cout: usize,
        weight: usize,
        bias: usize,
    },
    Relu,
    /// 2x2 max pool, stride 2; odd trailing rows/columns are dropped.
    MaxPool2 { h: usize, w: usize, c: usize },
    /// Weights are `[fin, fout]`.
    Dense {
        fin: usize,
        fout: usize,
        weight: usize,
        bias: usize,
    },
}

#[derive(Debug)]
enum Cache {
    Conv { col: Vec<f64> },
    Relu { out: Vec<f64> },
    Pool { argmax: Vec<u32>, in_len: usize },
    Dense { input: Vec<f64> },
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug)]
pub struct Tape {
    batch: usize,
    caches: Vec<Cache>,
    probs: Vec<f64>,
}

/// How a layer's weights are initialised: `std = sqrt(gain / fan_in)`.
#[derive(Clone, Copy, Debug)]
struct Init {
    offset: usize,
    len: usize,
    fan_in: usize,
    gain: f64,
}

#[derive(Clone, Debug)]
pub struct Sequential {
    input: ImageShape,
    num_classes: usize,
    layers: Vec<Layer>,
    layout: ParamLayout,
    inits: Vec<Init>,
}

/// Incrementally assembles a [`Sequential`], tracking the activation shape.
pub struct SequentialBuilder {
    input: ImageShape,
    shape: ImageShape,
    layers: Vec<Layer>,
    layout: ParamLayout,
    inits: Vec<Init>,
    flat: Option<usize>,
}

impl SequentialBuilder {
    pub fn new(input: ImageShape) -> Self {
        SequentialBuilder {
            input,
            shape: input,
            layers: Vec::new(),
            layout: ParamLayout::default(),
            inits: Vec::new(),
            flat: None,
        }
    }

    pub fn conv3x3(mut self, name: &str, cout: usize) -> Self {
        assert!(self.flat.is_none(), "convolution after a dense layer");
        let cin = self.shape.channels;
        let weight = self
            .layout
            .push(format!("{name}.weight"), vec![3, 3, cin, cout]);
        let bias = self.layout.push(format!("{name}.bias"), vec![cout]);
        self.inits.push(Init {
            offset: weight,
            len: 9 * cin * cout,
            fan_in: 9 * cin,
            gain: 2.0,
        });
        self.layers.push(Layer::Conv3x3 {
            h: self.shape.height,
            w: self.shape.width,
            cin,
            cout,
            weight,
            bias,
        });
        self.shape.channels = cout;
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn max_pool2(mut self) -> Self {
        assert!(self.flat.is_none(), "pooling after a dense layer");
        let s = self.shape;
        self.layers.push(Layer::MaxPool2 {
            h: s.height,
            w: s.width,
            c: s.channels,
        });
        self.shape = ImageShape::new(s.height / 2, s.width / 2, s.channels);
        self
    }

    /// Dense layer; `gain` is 2 for layers feeding a ReLU, 1 for the head.
    pub fn dense(mut self, name: &str, fout: usize, gain: f64) -> Self {
        let fin = self.flat.unwrap_or(self.shape.len());
        let weight = self.layout.push(format!("{name}.weight"), vec![fin, fout]);
        let bias = self.layout.push(format!("{name}.bias"), vec![fout]);
        self.inits.push(Init {
            offset: weight,
            len: fin * fout,
            fan_in: fin,
            gain,
        });
        self.layers.push(Layer::Dense {
            fin,
            fout,
            weight,
            bias,
        });
        self.flat = Some(fout);
        self
    }

    /// Finishes the network; the last layer must be dense and its width is
    /// the number of classes.
    pub fn build(self) -> Result<Sequential> {
        let num_classes = match self.layers.last() {
            Some(Layer::Dense { fout, .. }) => *fout,
            _ => return Err(Error::validation("model", "last layer must be dense")),
        };
        if self.shape.height == 0 || self.shape.width == 0 {
            return Err(Error::validation("model", "input too small for the pooling stack"));
        }
        Ok(Sequential {
            input: self.input,
            num_classes,
            layers: self.layers,
            layout: self.layout,
            inits: self.inits,
        })
    }
}

fn im2col(x: &[f64], n: usize, h: usize, w: usize, c: usize, col: &mut [f64]) {
    let row_len = 9 * c;
    for b in 0..n {
        let img = &x[b * h * w * c..(b + 1) * h * w * c];
        for y in 0..h {
            for xx in 0..w {
                let row = &mut col[((b * h + y) * w + xx) * row_len..][..row_len];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        let dst = &mut row[(ky * 3 + kx) * c..][..c];
                        if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                            dst.fill(0.0);
                        } else {
                            let src = (sy as usize * w + sx as usize) * c;
                            dst.copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], n: usize, h: usize, w: usize, c: usize, dx: &mut [f64]) {
    let row_len = 9 * c;
    dx.fill(0.0);
    for b in 0..n {
        let img = &mut dx[b * h * w * c..(b + 1) * h * w * c];
        for y in 0..h {
            for xx in 0..w {
                let row = &col[((b * h + y) * w + xx) * row_len..][..row_len];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = &row[(ky * 3 + kx) * c..][..c];
                        let dst = (sy as usize * w + sx as usize) * c;
                        for (d, s) in img[dst..dst + c].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn sum_rows(d: &[f64], width: usize, into: &mut [f64]) {
    for row in d.chunks_exact(width) {
        for (g, v) in into.iter_mut().zip(row) {
            *g += v;
        }
    }
}

fn softmax_rows(logits: &mut [f64], k: usize) {
    for row in logits.chunks_exact_mut(k) {
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
}

impl Sequential {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn run(&self, params: &[f64], inputs: &[f64], record: bool) -> Result<(usize, Vec<f64>, Vec<Cache>)> {
        let len = self.input.len();
        if !inputs.len().is_multiple_of(len) {
            return Err(Error::Shape(format!(
                "{} input values is not a whole number of {:?} images",
                inputs.len(),
                self.input
            )));
        }
        if params.len() != self.layout.len() {
            return Err(Error::Shape(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.layout.len()
            )));
        }
        let n = inputs.len() / len;
        let mut x = inputs.to_vec();
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        for layer in &self.layers {
            match *layer {
                Layer::Conv3x3 {
                    h,
                    w,
                    cin,
                    cout,
                    weight,
                    bias,
                } => {
                    let rows = n * h * w;
                    let mut col = vec![0.0; rows * 9 * cin];
                    im2col(&x, n, h, w, cin, &mut col);
                    let mut out = vec![0.0; rows * cout];
                    gemm(
                        rows,
                        9 * cin,
                        cout,
                        &col,
                        false,
                        &params[weight..weight + 9 * cin * cout],
                        false,
                        0.0,
                        &mut out,
                    );
                    add_bias(&mut out, &params[bias..bias + cout]);
                    if record {
                        caches.push(Cache::Conv { col });
                    }
                    x = out;
                }
                Layer::Relu => {
                    for v in x.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    if record {
                        caches.push(Cache::Relu { out: x.clone() });
                    }
                }
                Layer::MaxPool2 { h, w, c } => {
                    let (oh, ow) = (h / 2, w / 2);
                    let mut out = vec![0.0; n * oh * ow * c];
                    let mut argmax = vec![0u32; if record { out.len() } else { 0 }];
                    for b in 0..n {
                        let base = b * h * w * c;
                        for y in 0..oh {
                            for xx in 0..ow {
                                for ch in 0..c {
                                    let mut best = base + ((2 * y) * w + 2 * xx) * c + ch;
                                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                        let i = base + ((2 * y + dy) * w + 2 * xx + dx) * c + ch;
                                        if x[i] > x[best] {
                                            best = i;
                                        }
                                    }
                                    let o = ((b * oh + y) * ow + xx) * c + ch;
                                    out[o] = x[best];
                                    if record {
                                        argmax[o] = best as u32;
                                    }
                                }
                            }
                        }
                    }
                    if record {
                        caches.push(Cache::Pool {
                            argmax,
                            in_len: x.len(),
                        });
                    }
                    x = out;
                }
                Layer::Dense {
                    fin,
                    fout,
                    weight,
                    bias,
                } => {
                    let mut out = vec![0.0; n * fout];
                    gemm(
                        n,
                        fin,
                        fout,
                        &x,
                        false,
                        &params[weight..weight + fin * fout],
                        false,
                        0.0,
                        &mut out,
                    );
                    add_bias(&mut out, &params[bias..bias + fout]);
                    if record {
                        caches.push(Cache::Dense {
                            input: std::mem::take(&mut x),
                        });
                    }
                    x = out;
                }
            }
        }
        softmax_rows(&mut x, self.num_classes);
        Ok((n, x, caches))
    }
}

impl Classifier for Sequential {
    type Tape = Tape;

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn input_shape(&self) -> ImageShape {
        self.input
    }

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut params = vec![0.0; self.layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for init in &self.inits {
            let std = (init.gain / init.fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for p in &mut params[init.offset..init.offset + init.len] {
                *p = normal.sample(&mut rng);
            }
        }
        params
    }

    fn forward(&self, params: &[f64], inputs: &[f64]) -> Result<Probs> {
        let (_, probs, _) = self.run(params, inputs, false)?;
        Probs::new_unchecked(self.num_classes, probs)
    }

    fn forward_train(&self, params: &[f64], inputs: &[f64]) -> Result<(Probs, Tape)> {
        let (batch, probs, caches) = self.run(params, inputs, true)?;
        let out = Probs::new_unchecked(self.num_classes, probs.clone())?;
        Ok((
            out,
            Tape {
                batch,
                caches,
                probs,
            },
        ))
    }

    fn backward(&self, params: &[f64], tape: &Tape, d_probs: &[f64]) -> Result<Vec<f64>> {
        let k = self.num_classes;
        let n = tape.batch;
        if d_probs.len() != n * k {
            return Err(Error::Shape(format!(
                "gradient has {} values, expected {}",
                d_probs.len(),
                n * k
            )));
        }
        // Softmax Jacobian: dz_j = p_j (g_j - sum_c p_c g_c).
        let mut d: Vec<f64> = Vec::with_capacity(n * k);
        for (p, g) in tape.probs.chunks_exact(k).zip(d_probs.chunks_exact(k)) {
            let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
            d.extend(p.iter().zip(g).map(|(pj, gj)| pj * (gj - dot)));
        }
        let mut grad = vec![0.0; self.layout.len()];
        for (idx, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let need_input_grad = idx > 0;
            match (layer, cache) {
                (
                    &Layer::Conv3x3 {
                        h,
                        w,
                        cin,
                        cout,
                        weight,
                        bias,
                    },
                    Cache::Conv { col },
                ) => {
                    let rows = n * h * w;
                    gemm(
                        9 * cin,
                        rows,
                        cout,
                        col,
                        true,
                        &d,
                        false,
                        1.0,
                        &mut grad[weight..weight + 9 * cin * cout],
                    );
                    sum_rows(&d, cout, &mut grad[bias..bias + cout]);
                    if need_input_grad {
                        let mut dcol = vec![0.0; rows * 9 * cin];
                        gemm(
                            rows,
                            cout,
                            9 * cin,
                            &d,
                            false,
                            &params[weight..weight + 9 * cin * cout],
                            true,
                            0.0,
                            &mut dcol,
                        );
                        let mut dx = vec![0.0; rows * cin];
                        col2im(&dcol, n, h, w, cin, &mut dx);
                        d = dx;
                    }
                }
                (Layer::Relu, Cache::Relu { out }) => {
                    for (g, &o) in d.iter_mut().zip(out) {
                        if o <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                (Layer::MaxPool2 { .. }, Cache::Pool { argmax, in_len }) => {
                    let mut dx = vec![0.0; *in_len];
                    for (g, &i) in d.iter().zip(argmax) {
                        dx[i as usize] += g;
                    }
                    d = dx;
                }
                (
                    &Layer::Dense {
                        fin,
                        fout,
                        weight,
                        bias,
                    },
                    Cache::Dense { input },
                ) => {
                    gemm(
                        fin,
                        n,
                        fout,
                        input,
                        true,
                        &d,
                        false,
                        1.0,
                        &mut grad[weight..weight + fin * fout],
                    );
                    sum_rows(&d, fout, &mut grad[bias..bias + fout]);
                    if need_input_grad {
                        let mut dx = vec![0.0; n * fin];
                        gemm(
                            n,
                            fout,
                            fin,
                            &d,
                            false,
                            &params[weight..weight + fin * fout],
                            true,
                            0.0,
                            &mut dx,
                        );
                        d = dx;
                    }
                }
                _ => unreachable!("tape does not match layer stack"),
            }
        }
        Ok(grad)
    }
}
