//! Tensor-level reverse-mode differentiation.
//!
//! Every node holds its forward value; operations keep whatever else the
//! adjoint needs. Tensors are flat `channels x pixels` buffers, row-major.

use std::borrow::Cow;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use super::spectral::{spectral_backward, spectral_forward, SpectralShape};

pub type NodeId = usize;

/// Denominator floor of the relative L2 loss.
pub const REL_L2_EPS: f64 = 1e-12;

enum Op<'a> {
    Constant,
    Param(usize),
    /// `y[o, p] = sum_i w[o, i] x[i, p] + b[o]`
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        cin: usize,
        cout: usize,
        pixels: usize,
    },
    Spectral {
        x: NodeId,
        re: NodeId,
        im: NodeId,
        shape: &'a SpectralShape,
        x_hat: Vec<Complex64>,
    },
    Add(NodeId, NodeId),
    Gelu(NodeId),
    SumSquares(NodeId),
    RelativeL2 {
        x: NodeId,
        target: &'a [f64],
    },
    Mse {
        x: NodeId,
        target: &'a [f64],
    },
}

struct Node<'a> {
    value: Cow<'a, [f64]>,
    op: Op<'a>,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Cow<'a, [f64]>, op: Op<'a>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: impl Into<Cow<'a, [f64]>>) -> NodeId {
        self.push(value.into(), Op::Constant)
    }

    /// Parameter tensor `index`; its gradient lands in slot `index`.
    pub fn param(&mut self, index: usize, value: &'a [f64]) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Param(index))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId, cin: usize, cout: usize) -> NodeId {
        let xv = self.value(x);
        let pixels = xv.len() / cin;
        assert_eq!(xv.len(), cin * pixels, "affine input size");
        assert_eq!(self.value(w).len(), cin * cout, "affine weight size");
        assert_eq!(self.value(b).len(), cout, "affine bias size");
        let mut y = vec![0.0; cout * pixels];
        for (o, row) in y.chunks_exact_mut(pixels).enumerate() {
            row.fill(self.value(b)[o]);
        }
        gemm(cout, cin, pixels, self.value(w), false, xv, false, &mut y);
        self.push(
            Cow::Owned(y),
            Op::Affine {
                x,
                w,
                b,
                cin,
                cout,
                pixels,
            },
        )
    }

    pub fn spectral(&mut self, x: NodeId, re: NodeId, im: NodeId, shape: &'a SpectralShape) -> NodeId {
        let (y, x_hat) = spectral_forward(shape, self.value(x), self.value(re), self.value(im));
        self.push(
            Cow::Owned(y),
            Op::Spectral {
                x,
                re,
                im,
                shape,
                x_hat,
            },
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.value(a).iter().zip(self.value(b)).map(|(p, q)| p + q).collect::<Vec<_>>();
        self.push(Cow::Owned(y), Op::Add(a, b))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).iter().map(|&v| gelu(v)).collect::<Vec<_>>();
        self.push(Cow::Owned(y), Op::Gelu(x))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().map(|v| v * v).sum::<f64>();
        self.push(Cow::Owned(vec![s]), Op::SumSquares(x))
    }

    /// `||x - target|| / max(||target||, eps)`.
    pub fn relative_l2(&mut self, x: NodeId, target: &'a [f64]) -> NodeId {
        let l = relative_l2(self.value(x), target);
        self.push(Cow::Owned(vec![l]), Op::RelativeL2 { x, target })
    }

    pub fn mse(&mut self, x: NodeId, target: &'a [f64]) -> NodeId {
        let l = mse(self.value(x), target);
        self.push(Cow::Owned(vec![l]), Op::Mse { x, target })
    }

    /// Accumulates `seed * d(output)/d(param)` into `grads[index]` for every
    /// parameter on the tape. `output` must be a scalar node.
    pub fn backward(&self, output: NodeId, seed: f64, grads: &mut [Vec<f64>]) {
        assert_eq!(self.value(output).len(), 1, "backward starts from a scalar");
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output] = Some(vec![seed]);
        for id in (0..=output).rev() {
            let Some(g) = adj[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Constant => {}
                Op::Param(index) => {
                    for (dst, v) in grads[*index].iter_mut().zip(&g) {
                        *dst += v;
                    }
                }
                Op::Affine {
                    x,
                    w,
                    b,
                    cin,
                    cout,
                    pixels,
                } => {
                    let (cin, cout, pixels) = (*cin, *cout, *pixels);
                    if self.needs_grad(*b) {
                        let gb: Vec<f64> = g.chunks_exact(pixels).map(|r| r.iter().sum()).collect();
                        accumulate(&mut adj, *b, gb);
                    }
                    if self.needs_grad(*w) {
                        let mut gw = vec![0.0; cout * cin];
                        gemm(cout, pixels, cin, &g, false, self.value(*x), true, &mut gw);
                        accumulate(&mut adj, *w, gw);
                    }
                    if self.needs_grad(*x) {
                        let mut gx = vec![0.0; cin * pixels];
                        gemm(cin, cout, pixels, self.value(*w), true, &g, false, &mut gx);
                        accumulate(&mut adj, *x, gx);
                    }
                }
                Op::Spectral {
                    x,
                    re,
                    im,
                    shape,
                    x_hat,
                } => {
                    let sg = spectral_backward(shape, x_hat, self.value(*re), self.value(*im), &g);
                    accumulate(&mut adj, *re, sg.re);
                    accumulate(&mut adj, *im, sg.im);
                    if self.needs_grad(*x) {
                        accumulate(&mut adj, *x, sg.x);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Gelu(x) => {
                    let gx = self
                        .value(*x)
                        .iter()
                        .zip(&g)
                        .map(|(&v, gi)| gi * gelu_derivative(v))
                        .collect();
                    accumulate(&mut adj, *x, gx);
                }
                Op::SumSquares(x) => {
                    let gx = self.value(*x).iter().map(|v| 2.0 * v * g[0]).collect();
                    accumulate(&mut adj, *x, gx);
                }
                Op::RelativeL2 { x, target } => {
                    let xv = self.value(*x);
                    let diff = norm2(xv.iter().zip(target.iter()).map(|(p, t)| p - t));
                    let denom = norm2(target.iter().copied()).max(REL_L2_EPS);
                    let gx = if diff == 0.0 {
                        vec![0.0; xv.len()]
                    } else {
                        let s = g[0] / (diff * denom);
                        xv.iter().zip(target.iter()).map(|(p, t)| s * (p - t)).collect()
                    };
                    accumulate(&mut adj, *x, gx);
                }
                Op::Mse { x, target } => {
                    let xv = self.value(*x);
                    let s = 2.0 * g[0] / xv.len() as f64;
                    let gx = xv.iter().zip(target.iter()).map(|(p, t)| s * (p - t)).collect();
                    accumulate(&mut adj, *x, gx);
                }
            }
        }
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id].op, Op::Constant)
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// `c += op(a) * op(b)` with `op(a)` of shape `m x k` and `op(b)` `k x n`;
/// `trans_*` reads the stored row-major matrix transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], trans_a: bool, b: &[f64], trans_b: bool, c: &mut [f64]) {
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe in-bounds views of `a` (m x k), `b`
    // (k x n) and `c` (m x n), whose lengths the asserts pin down.
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn norm2(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_l2(pred: &[f64], target: &[f64]) -> f64 {
    let diff = norm2(pred.iter().zip(target).map(|(p, t)| p - t));
    diff / norm2(target.iter().copied()).max(REL_L2_EPS)
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // Phi(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!((gelu(-1.0) + 1.0 - 0.8413447460685429).abs() < 1e-15);
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_toy_gradient() {
        // L = ||W x||^2, dL/dW = 2 (W x) x^T
        let w = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let x = [0.3, -0.4, 2.0];
        let b = [0.0, 0.0];
        let mut tape = Tape::new();
        let xn = tape.constant(&x[..]);
        let wn = tape.param(0, &w);
        let bn = tape.constant(&b[..]);
        let y = tape.affine(xn, wn, bn, 3, 2);
        let loss = tape.sum_squares(y);
        let mut grads = vec![vec![0.0; 6]];
        tape.backward(loss, 1.0, &mut grads);
        let wx = [
            w[0] * x[0] + w[1] * x[1] + w[2] * x[2],
            w[3] * x[0] + w[4] * x[1] + w[5] * x[2],
        ];
        for o in 0..2 {
            for i in 0..3 {
                assert!((grads[0][o * 3 + i] - 2.0 * wx[o] * x[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn detached_parameter_gets_zero_gradient() {
        let (w, unused) = ([2.0], [5.0, 6.0]);
        let x = [1.5];
        let mut tape = Tape::new();
        let xn = tape.constant(&x[..]);
        let wn = tape.param(0, &w);
        let _ = tape.param(1, &unused);
        let zero = tape.constant(vec![0.0]);
        let y = tape.affine(xn, wn, zero, 1, 1);
        let loss = tape.sum_squares(y);
        let mut grads = vec![vec![0.0], vec![0.0; 2]];
        tape.backward(loss, 1.0, &mut grads);
        assert_eq!(grads[1], vec![0.0, 0.0]);
        assert!((grads[0][0] - 2.0 * 3.0 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        let t = [3.0, 4.0];
        assert_eq!(relative_l2(&t, &t), 0.0);
        assert_eq!(relative_l2(&[0.0, 0.0], &t), 1.0);
        assert_eq!(relative_l2(&[6.0, 8.0], &t), 1.0);
        assert_eq!(mse(&[1.0, 1.0], &[0.0, 3.0]), 2.5);
    }

    #[test]
    fn shared_input_accumulates() {
        // L = sum (x + x)^2 = 4 sum x^2 with x a parameter
        let p = [1.0, -2.0];
        let mut tape = Tape::new();
        let x = tape.param(0, &p);
        let y = tape.add(x, x);
        let l = tape.sum_squares(y);
        let mut grads = vec![vec![0.0; 2]];
        tape.backward(l, 0.5, &mut grads);
        assert_eq!(grads[0], vec![4.0, -8.0]);
    }
}
