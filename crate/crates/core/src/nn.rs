//! Small fully-connected building blocks shared by the VAE, the GAN and the
//! classifier: affine layers with explicit backward passes, activations,
//! Adam, and the flat binary parameter format.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Matrix, Rng, Vector};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Affine map `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_out, fan_in),
            bias: Vector::zeros(fan_out),
        }
    }

    /// Weights ~ N(0, 2 / fan_in), zero biases.
    pub fn he_init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        Self::normal_init(fan_in, fan_out, (2.0 / fan_in as f64).sqrt(), rng)
    }

    /// Weights `N(0, std²)`, zero bias.
    pub fn normal_init(fan_in: usize, fan_out: usize, std: f64, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(fan_in, fan_out);
        for w in layer.weight.data_mut() {
            *w = std * rng.gauss();
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.rows()
    }

    /// Row-wise forward pass over a `batch × fan_in` input.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols(), self.fan_in());
        let mut y = Matrix::zeros(x.rows(), self.fan_out());
        for b in 0..x.rows() {
            let xr = x.row(b);
            let yr = y.row_mut(b);
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = dot(self.weight.row(o), xr) + self.bias[o];
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x` when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        x: &Matrix,
        dy: &Matrix,
        grad: &mut Dense,
        want_input_grad: bool,
    ) -> Option<Matrix> {
        let mut dx = want_input_grad.then(|| Matrix::zeros(x.rows(), self.fan_in()));
        for b in 0..x.rows() {
            let xr = x.row(b);
            for (o, &g) in dy.row(b).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                axpy(g, xr, grad.weight.row_mut(o));
                grad.bias[o] += g;
                if let Some(dx) = dx.as_mut() {
                    axpy(g, self.weight.row(o), dx.row_mut(b));
                }
            }
        }
        dx
    }

    /// Input gradient only; parameter gradients are not needed.
    pub fn backward_input(&self, dy: &Matrix) -> Matrix {
        let mut dx = Matrix::zeros(dy.rows(), self.fan_in());
        for b in 0..dy.rows() {
            for (o, &g) in dy.row(b).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, self.weight.row(o), dx.row_mut(b));
                }
            }
        }
        dx
    }
}

pub fn leaky_relu(x: &Matrix) -> Matrix {
    map(x, |v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

/// `dy ⊙ leaky'(pre)`
pub fn leaky_relu_backward(pre: &Matrix, dy: &Matrix) -> Matrix {
    zip(pre, dy, |p, g| if p > 0.0 { g } else { LEAKY_SLOPE * g })
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^v)` without overflow.
#[inline]
pub fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

pub fn map(x: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

pub fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    debug_assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = f(*o, v);
    }
    out
}

/// Stacks row slices into a `batch × dim` matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Matrix {
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        debug_assert_eq!(r.len(), dim);
        data.extend_from_slice(r);
        n += 1;
    }
    let mut m = Matrix::zeros(n, dim);
    m.data_mut().copy_from_slice(&data);
    m
}

/// A network whose parameters are an ordered list of dense layers.
pub trait Network: Clone {
    fn layers(&self) -> Vec<&Dense>;
    fn layers_mut(&mut self) -> Vec<&mut Dense>;

    fn num_params(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight.data().len() + l.bias.dim())
            .sum()
    }

    /// Weights then bias for each layer, in declared order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut at = 0;
        for l in self.layers_mut() {
            let nw = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.dim();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for l in z.layers_mut() {
            l.weight.data_mut().fill(0.0);
            l.bias.fill(0.0);
        }
        z
    }

    fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.weight.data().iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, num_params: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step<N: Network>(&mut self, params: &mut N, grads: &N) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut at = 0;
        for (layer, grad) in params.layers_mut().into_iter().zip(grads.layers()) {
            let slices = [
                (layer.weight.data_mut(), grad.weight.data()),
                (&mut layer.bias[..], &grad.bias[..]),
            ];
            for (p, g) in slices {
                let m = &mut self.m[at..at + p.len()];
                let v = &mut self.v[at..at + p.len()];
                for i in 0..p.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
                at += p.len();
            }
        }
    }
}

/// File magic for serialized parameters.
pub const PARAMS_MAGIC: &[u8; 5] = b"GALV1";

/// Kind tags following the magic.
pub const KIND_VAE: u8 = b'V';
pub const KIND_GAN: u8 = b'G';
pub const KIND_CLASSIFIER: u8 = b'C';

/// Layout: magic `GALV1`, kind byte, `u32` dim count, that many `u64` dims,
/// then every parameter as little-endian `f64` in layer order.
pub fn encode_params(kind: u8, dims: &[u64], flat: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * (dims.len() + flat.len()));
    out.extend_from_slice(PARAMS_MAGIC);
    out.push(kind);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8], origin: &Path) -> Result<(u8, Vec<u64>, Vec<f64>)> {
    let bad = |why: &str| Error::format(origin, why.to_string());
    if bytes.len() < 10 || &bytes[..5] != PARAMS_MAGIC {
        return Err(bad("missing GALV1 header"));
    }
    let kind = bytes[5];
    let ndims = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let dims_end = 10 + 8 * ndims;
    if bytes.len() < dims_end {
        return Err(bad("truncated dims header"));
    }
    let dims = bytes[10..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let rest = &bytes[dims_end..];
    if rest.len() % 8 != 0 {
        return Err(bad("parameter payload is not a whole number of f64"));
    }
    let flat: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok((kind, dims, flat))
}

pub fn write_params_file(path: &Path, kind: u8, dims: &[u64], flat: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_params(kind, dims, flat))
        .map_err(|e| Error::io(path, e))
}

pub fn read_params_file(path: &Path) -> Result<(u8, Vec<u64>, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradient_check;

    #[derive(Clone)]
    struct Two(Dense, Dense);

    impl Network for Two {
        fn layers(&self) -> Vec<&Dense> {
            vec![&self.0, &self.1]
        }
        fn layers_mut(&mut self) -> Vec<&mut Dense> {
            vec![&mut self.0, &mut self.1]
        }
    }

    fn toy() -> (Two, Matrix) {
        let mut rng = Rng::new(3);
        let net = Two(Dense::he_init(5, 4, &mut rng), Dense::he_init(4, 2, &mut rng));
        let x = Matrix::from_vec(3, 5, (0..15).map(|_| rng.gauss()).collect()).unwrap();
        (net, x)
    }

    fn loss(net: &Two, x: &Matrix) -> f64 {
        let h = leaky_relu(&net.0.forward(x));
        let y = net.1.forward(&h);
        y.data().iter().map(|v| v * v).sum::<f64>() * 0.5
    }

    #[test]
    fn dense_stack_gradients() {
        let (net, x) = toy();
        let pre = net.0.forward(&x);
        let h = leaky_relu(&pre);
        let y = net.1.forward(&h);
        let mut grad = net.zeros_like();
        let dh = net.1.backward(&h, &y, &mut grad.1, true).unwrap();
        let dpre = leaky_relu_backward(&pre, &dh);
        net.0.backward(&x, &dpre, &mut grad.0, false);

        let err = gradient_check(
            |p| {
                let mut n = net.clone();
                n.unflatten(p).unwrap();
                loss(&n, &x)
            },
            &net.flatten(),
            &grad.flatten(),
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn input_gradient_matches_full_backward() {
        let (net, x) = toy();
        let dy = net.0.forward(&x);
        let mut g = net.0.zeros_like_layer();
        let full = net.0.backward(&x, &dy, &mut g, true).unwrap();
        assert_eq!(full, net.0.backward_input(&dy));
    }

    impl Dense {
        fn zeros_like_layer(&self) -> Dense {
            Dense::zeros(self.fan_in(), self.fan_out())
        }
    }

    #[test]
    fn he_init_variance() {
        let mut rng = Rng::new(8);
        let layer = Dense::he_init(200, 60, &mut rng);
        let w = layer.weight.data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let expect = 2.0 / 200.0;
        assert!((var / expect - 1.0).abs() < 0.1, "{var} vs {expect}");
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let (mut net, x) = toy();
        let mut opt = Adam::new(0.05, 0.9, 0.999, net.num_params());
        let start = loss(&net, &x);
        for _ in 0..100 {
            let pre = net.0.forward(&x);
            let h = leaky_relu(&pre);
            let y = net.1.forward(&h);
            let mut grad = net.zeros_like();
            let dh = net.1.backward(&h, &y, &mut grad.1, true).unwrap();
            net.0.backward(&x, &leaky_relu_backward(&pre, &dh), &mut grad.0, false);
            opt.step(&mut net, &grad);
        }
        assert!(loss(&net, &x) < 0.1 * start);
    }

    #[test]
    fn stable_scalar_functions() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn param_bytes_round_trip_and_reject_garbage() {
        let (net, _) = toy();
        let bytes = encode_params(KIND_VAE, &[5, 4, 2], &net.flatten());
        let (kind, dims, flat) = decode_params(&bytes, Path::new("mem")).unwrap();
        assert_eq!((kind, dims), (KIND_VAE, vec![5, 4, 2]));
        assert_eq!(flat, net.flatten());
        assert!(decode_params(b"GALV0xxxxxxxx", Path::new("mem")).is_err());
        assert!(decode_params(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
    }
}
