//! Dense and strided-convolution layers with hand-written backward passes.
//!
//! Everything is `f64` and row-major. Matrix products go through
//! `matrixmultiply::dgemm`; convolutions are lowered to products with im2col.

use rand::Rng;

/// Row-major matrix; rows are batch elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
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

    /// Concatenate matrices with equal row counts side by side.
    pub fn hcat(parts: &[&Mat]) -> Mat {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for p in parts {
                assert_eq!(p.rows, rows, "hcat row mismatch");
                out.row_mut(i)[offset..offset + p.cols].copy_from_slice(p.row(i));
                offset += p.cols;
            }
        }
        out
    }

    /// Columns `start..start + len`.
    pub fn columns(&self, start: usize, len: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, len);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..start + len]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = alpha * a * b + beta * c` on raw row-major storage with explicit strides.
#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "lhs too short");
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "rhs too short");
    }
    assert!(c.len() > (m - 1) * rsc + (n - 1), "output too short");
    // SAFETY: the asserts above bound every index dgemm touches
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `out = alpha * op(a) * op(b) + beta * out`, where `op` optionally transposes.
pub fn gemm(alpha: f64, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64, out: &mut Mat) {
    let (m, k, sa) = if ta { (a.cols, a.rows, (1, a.cols)) } else { (a.rows, a.cols, (a.cols, 1)) };
    let (kb, n, sb) = if tb { (b.cols, b.rows, (1, b.cols)) } else { (b.rows, b.cols, (b.cols, 1)) };
    assert_eq!(k, kb, "inner dimensions");
    assert_eq!((out.rows, out.cols), (m, n), "output shape");
    dgemm(m, k, n, alpha, &a.data, sa, &b.data, sb, beta, &mut out.data, n);
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Vec<f64>) -> Self {
        let n = value.len();
        Self { name: name.into(), value, grad: vec![0.0; n], m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn uniform<R: Rng + ?Sized>(name: impl Into<String>, len: usize, bound: f64, rng: &mut R) -> Self {
        Self::new(name, (0..len).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn grads_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |p| ok &= p.grad.iter().all(|g| g.is_finite()));
        ok
    }
}

/// `target = (1 - tau) * target + tau * online`, parameter by parameter.
///
/// `tau = 0` leaves `target` untouched and `tau = 1` copies `online` exactly.
pub fn polyak<M: Module>(target: &mut M, online: &M, tau: f64) {
    let mut values = Vec::new();
    online.visit(&mut |p| values.push(p.value.clone()));
    let mut it = values.into_iter();
    target.visit_mut(&mut |p| {
        let src = it.next().expect("modules share an architecture");
        assert_eq!(src.len(), p.value.len(), "parameter {} shape", p.name);
        for (t, s) in p.value.iter_mut().zip(src) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    });
}

/// Adam with bias correction; moments live in each [`Param`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, module: &mut dyn Module) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        module.visit_mut(&mut |p| {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = b1 * p.m[i] + (1.0 - b1) * g;
                p.v[i] = b2 * p.v[i] + (1.0 - b2) * g * g;
                p.value[i] -= lr * (p.m[i] / c1) / ((p.v[i] / c2).sqrt() + eps);
            }
        });
    }
}

/// Fully connected layer `y = x W^T + b` with `W` stored `outputs x inputs`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            w: Param::uniform(format!("{name}.weight"), inputs * outputs, bound, rng),
            b: Param::uniform(format!("{name}.bias"), outputs, bound, rng),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        assert_eq!(x.cols, self.inputs, "{} input width", self.w.name);
        let mut y = Mat::zeros(x.rows, self.outputs);
        for i in 0..x.rows {
            y.row_mut(i).copy_from_slice(&self.b.value);
        }
        dgemm(
            x.rows,
            self.inputs,
            self.outputs,
            1.0,
            &x.data,
            (self.inputs, 1),
            &self.w.value,
            (1, self.inputs),
            1.0,
            &mut y.data,
            self.outputs,
        );
        y
    }

    /// Accumulates parameter gradients when `param_grads` and returns `dL/dx`.
    pub fn backward(&mut self, x: &Mat, dy: &Mat, param_grads: bool) -> Mat {
        if param_grads {
            dgemm(
                self.outputs,
                x.rows,
                self.inputs,
                1.0,
                &dy.data,
                (1, self.outputs),
                &x.data,
                (self.inputs, 1),
                1.0,
                &mut self.w.grad,
                self.inputs,
            );
            for i in 0..dy.rows {
                for (g, d) in self.b.grad.iter_mut().zip(dy.row(i)) {
                    *g += d;
                }
            }
        }
        let mut dx = Mat::zeros(dy.rows, self.inputs);
        dgemm(
            dy.rows,
            self.outputs,
            self.inputs,
            1.0,
            &dy.data,
            (self.outputs, 1),
            &self.w.value,
            (self.inputs, 1),
            0.0,
            &mut dx.data,
            self.inputs,
        );
        dx
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

fn relu_in_place(m: &mut Mat) {
    m.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input of every layer; entries after the first are post-ReLU.
    inputs: Vec<Mat>,
    pub output: Mat,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(name: &str, sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes.windows(2).enumerate().map(|(i, w)| Linear::new(&format!("{name}.{i}"), w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn forward(&self, x: Mat) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward(&h);
            if i + 1 < self.layers.len() {
                relu_in_place(&mut next);
            }
            inputs.push(h);
            h = next;
        }
        MlpCache { inputs, output: h }
    }

    /// Back-propagate `dy`; parameter gradients are accumulated only when `param_grads`.
    pub fn backward(&mut self, cache: &MlpCache, dy: &Mat, param_grads: bool) -> Mat {
        let mut grad = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let mut dx = self.layers[i].backward(&cache.inputs[i], &grad, param_grads);
            if i > 0 {
                for (d, a) in dx.data.iter_mut().zip(&cache.inputs[i].data) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grad = dx;
        }
        grad
    }
}

impl Module for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

/// Channel-height-width layout of one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 3x3 convolution, stride 2, zero padding 1.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub input: Shape,
    pub output: Shape,
}

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

fn conv_out(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(name: &str, input: Shape, channels: usize, rng: &mut R) -> Self {
        let fan_in = input.c * KERNEL * KERNEL;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let output = Shape { c: channels, h: conv_out(input.h), w: conv_out(input.w) };
        Self {
            w: Param::uniform(format!("{name}.weight"), channels * fan_in, bound, rng),
            b: Param::uniform(format!("{name}.bias"), channels, bound, rng),
            input,
            output,
        }
    }

    fn patch(&self) -> usize {
        self.input.c * KERNEL * KERNEL
    }

    fn positions(&self) -> usize {
        self.output.h * self.output.w
    }

    /// Unfold one sample into a `patch x positions` matrix.
    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (ih, iw) = (self.input.h as isize, self.input.w as isize);
        let (oh, ow) = (self.output.h, self.output.w);
        let pos = self.positions();
        for c in 0..self.input.c {
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let row = (c * KERNEL + ky) * KERNEL + kx;
                    let dst = &mut col[row * pos..(row + 1) * pos];
                    for oy in 0..oh {
                        let y = (oy * STRIDE + ky) as isize - PAD as isize;
                        for ox in 0..ow {
                            let xx = (ox * STRIDE + kx) as isize - PAD as isize;
                            dst[oy * ow + ox] = if y >= 0 && y < ih && xx >= 0 && xx < iw {
                                x[(c * self.input.h + y as usize) * self.input.w + xx as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let (ih, iw) = (self.input.h as isize, self.input.w as isize);
        let (oh, ow) = (self.output.h, self.output.w);
        let pos = self.positions();
        for c in 0..self.input.c {
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let row = (c * KERNEL + ky) * KERNEL + kx;
                    let src = &col[row * pos..(row + 1) * pos];
                    for oy in 0..oh {
                        let y = (oy * STRIDE + ky) as isize - PAD as isize;
                        if y < 0 || y >= ih {
                            continue;
                        }
                        for ox in 0..ow {
                            let xx = (ox * STRIDE + kx) as isize - PAD as isize;
                            if xx >= 0 && xx < iw {
                                dx[(c * self.input.h + y as usize) * self.input.w + xx as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns the outputs and the unfolded inputs needed by [`Conv2d::backward`].
    pub fn forward(&self, x: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(x.len(), batch * self.input.len(), "{} input size", self.w.name);
        let (patch, pos, oc) = (self.patch(), self.positions(), self.output.c);
        let mut cols = vec![0.0; batch * patch * pos];
        let mut y = vec![0.0; batch * self.output.len()];
        for s in 0..batch {
            let col = &mut cols[s * patch * pos..(s + 1) * patch * pos];
            self.im2col(&x[s * self.input.len()..(s + 1) * self.input.len()], col);
            let out = &mut y[s * oc * pos..(s + 1) * oc * pos];
            for (c, chunk) in out.chunks_mut(pos).enumerate() {
                chunk.fill(self.b.value[c]);
            }
            dgemm(oc, patch, pos, 1.0, &self.w.value, (patch, 1), col, (pos, 1), 1.0, out, pos);
        }
        (y, cols)
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `want_dx`.
    pub fn backward(&mut self, cols: &[f64], dy: &[f64], batch: usize, want_dx: bool) -> Option<Vec<f64>> {
        let (patch, pos, oc) = (self.patch(), self.positions(), self.output.c);
        let mut dx = want_dx.then(|| vec![0.0; batch * self.input.len()]);
        let mut dcol = vec![0.0; patch * pos];
        for s in 0..batch {
            let col = &cols[s * patch * pos..(s + 1) * patch * pos];
            let g = &dy[s * oc * pos..(s + 1) * oc * pos];
            dgemm(oc, pos, patch, 1.0, g, (pos, 1), col, (1, pos), 1.0, &mut self.w.grad, patch);
            for (c, chunk) in g.chunks(pos).enumerate() {
                self.b.grad[c] += chunk.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                dgemm(patch, oc, pos, 1.0, &self.w.value, (1, patch), g, (pos, 1), 0.0, &mut dcol, pos);
                self.col2im(&dcol, &mut dx[s * self.input.len()..(s + 1) * self.input.len()]);
            }
        }
        dx
    }
}

impl Module for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.w);
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Stacked ReLU convolutions, flattened into a ReLU latent layer.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    pub convs: Vec<Conv2d>,
    pub fc: Linear,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    cols: Vec<Vec<f64>>,
    /// Post-ReLU output of every convolution.
    acts: Vec<Vec<f64>>,
    flat: Mat,
    pub latent: Mat,
}

impl ConvEncoder {
    pub fn new<R: Rng + ?Sized>(name: &str, input: Shape, channels: &[usize], latent: usize, rng: &mut R) -> Self {
        let mut convs = Vec::with_capacity(channels.len());
        let mut shape = input;
        for (i, &c) in channels.iter().enumerate() {
            let conv = Conv2d::new(&format!("{name}.conv{i}"), shape, c, rng);
            shape = conv.output;
            convs.push(conv);
        }
        let fc = Linear::new(&format!("{name}.fc"), shape.len(), latent, rng);
        Self { convs, fc }
    }

    pub fn input(&self) -> Shape {
        self.convs.first().map_or(Shape { c: 1, h: 1, w: self.fc.inputs }, |c| c.input)
    }

    pub fn latent_size(&self) -> usize {
        self.fc.outputs
    }

    pub fn forward(&self, images: &[f64], batch: usize) -> EncoderCache {
        let mut cols = Vec::with_capacity(self.convs.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let x = acts.last().map_or(images, |a| a.as_slice());
            let (mut y, col) = conv.forward(x, batch);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            cols.push(col);
            acts.push(y);
        }
        let flat = Mat::from_vec(batch, self.fc.inputs, acts.last().map_or_else(|| images.to_vec(), |a| a.clone()));
        let mut latent = self.fc.forward(&flat);
        relu_in_place(&mut latent);
        EncoderCache { cols, acts, flat, latent }
    }

    pub fn backward(&mut self, cache: &EncoderCache, dlatent: &Mat) {
        let mut d = dlatent.clone();
        for (g, a) in d.data.iter_mut().zip(&cache.latent.data) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let batch = d.rows;
        let mut grad = self.fc.backward(&cache.flat, &d, true).data;
        for i in (0..self.convs.len()).rev() {
            for (g, a) in grad.iter_mut().zip(&cache.acts[i]) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            match self.convs[i].backward(&cache.cols[i], &grad, batch, i > 0) {
                Some(dx) => grad = dx,
                None => break,
            }
        }
    }
}

impl Module for ConvEncoder {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.convs.iter().for_each(|c| c.visit(f));
        self.fc.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.convs.iter_mut().for_each(|c| c.visit_mut(f));
        self.fc.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                out.data[i * b.cols + j] = (0..a.cols).map(|k| a.get(i, k) * b.get(k, j)).sum();
            }
        }
        out
    }

    fn transpose(a: &Mat) -> Mat {
        let mut out = Mat::zeros(a.cols, a.rows);
        for i in 0..a.rows {
            for j in 0..a.cols {
                out.data[j * a.rows + i] = a.get(i, j);
            }
        }
        out
    }

    #[test]
    fn gemm_matches_naive_in_every_transpose_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_mat = |r, c| Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        let a = rand_mat(4, 5);
        let b = rand_mat(5, 3);
        let want = naive(&a, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let aa = if ta { transpose(&a) } else { a.clone() };
            let bb = if tb { transpose(&b) } else { b.clone() };
            let mut out = Mat::zeros(4, 3);
            gemm(1.0, &aa, ta, &bb, tb, 0.0, &mut out);
            for (x, y) in out.data.iter().zip(&want.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = Shape { c: 2, h: 5, w: 4 };
        let conv = Conv2d::new("c", input, 3, &mut rng);
        assert_eq!(conv.output, Shape { c: 3, h: 3, w: 2 });
        let x: Vec<f64> = (0..input.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, _) = conv.forward(&x, 1);
        for oc in 0..3 {
            for oy in 0..3 {
                for ox in 0..2 {
                    let mut want = conv.b.value[oc];
                    for ic in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..5).contains(&iy) && (0..4).contains(&ix) {
                                    want += conv.w.value[((oc * 2 + ic) * 3 + ky) * 3 + kx]
                                        * x[(ic * 5 + iy as usize) * 4 + ix as usize];
                                }
                            }
                        }
                    }
                    assert!((y[(oc * 3 + oy) * 2 + ox] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polyak_extremes_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = Mlp::new("q", &[4, 8, 1], &mut rng);
        let original = Mlp::new("q", &[4, 8, 1], &mut rng);
        let mut target = original.clone();
        polyak(&mut target, &online, 0.0);
        let mut same = true;
        target.visit(&mut |p| same &= p.value.iter().all(|v| v.is_finite()));
        assert!(same);
        for (t, o) in target.layers.iter().zip(&original.layers) {
            assert_eq!(t.w.value, o.w.value);
            assert_eq!(t.b.value, o.b.value);
        }
        polyak(&mut target, &online, 1.0);
        for (t, o) in target.layers.iter().zip(&online.layers) {
            assert_eq!(t.w.value, o.w.value);
            assert_eq!(t.b.value, o.b.value);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Linear::new("l", 1, 1, &mut ChaCha8Rng::seed_from_u64(0));
        let before = p.w.value[0];
        p.w.grad[0] = 3.0;
        p.b.grad[0] = -0.5;
        let mut adam = Adam::new(0.01);
        adam.step(&mut p);
        assert!((p.w.value[0] - (before - 0.01)).abs() < 1e-9);
    }
}
