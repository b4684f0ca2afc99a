//! Batched second-order Taylor ("jet") evaluation of a network over a fixed
//! point set, with a hand-written reverse pass for parameter gradients.
//!
//! Each point carries up to six channels: the value and the first and second
//! spatial derivatives `[v, d1, d2, d11, d12, d22]` with respect to the two
//! inputs. Columns of every activation matrix are laid out as
//! `point * channels + channel`, rows are neurons. This is the training hot
//! path; the generic tape in [`crate::autodiff`] is the reference it is
//! checked against.

use alloc::vec;
use alloc::vec::Vec;

use super::{MlpConfig, NetError, NetworkParams};
use crate::mechanics::Point2;

/// How many spatial derivative orders to propagate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetOrder {
    Value,
    First,
    Second,
}

impl JetOrder {
    pub const fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::First => 3,
            JetOrder::Second => 6,
        }
    }
}

/// Channel offsets within a point's column block.
pub mod ch {
    pub const V: usize = 0;
    pub const D1: usize = 1;
    pub const D2: usize = 2;
    pub const D11: usize = 3;
    pub const D12: usize = 4;
    pub const D22: usize = 5;
}

/// Cached activations for one network on one point set.
#[derive(Clone, Debug)]
pub struct JetBatch {
    config: MlpConfig,
    order: JetOrder,
    npts: usize,
    input: Vec<f64>,
    /// Unscaled pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// `tanh` of the scaled value channel, one per (neuron, point).
    tanh: Vec<Vec<f64>>,
    /// Post-activation jets of each hidden layer.
    post: Vec<Vec<f64>>,
    out: Vec<f64>,
    adj_a: Vec<f64>,
    adj_b: Vec<f64>,
}

impl JetBatch {
    pub fn new(config: MlpConfig, points: &[Point2], order: JetOrder) -> Result<Self, NetError> {
        config.validate()?;
        if config.input_width != 2 {
            return Err(NetError::Config("jet evaluation needs exactly two inputs"));
        }
        let c = order.channels();
        let npts = points.len();
        let m = npts * c;
        let mut input = vec![0.0; 2 * m];
        for (q, x) in points.iter().enumerate() {
            input[q * c] = x.x1;
            input[m + q * c] = x.x2;
            if c > 1 {
                input[q * c + ch::D1] = 1.0;
                input[m + q * c + ch::D2] = 1.0;
            }
        }
        let w = config.hidden_width;
        let layers = config.hidden_layers;
        Ok(JetBatch {
            config,
            order,
            npts,
            input,
            pre: vec![vec![0.0; w * m]; layers],
            tanh: vec![vec![0.0; w * npts]; layers],
            post: vec![vec![0.0; w * m]; layers],
            out: vec![0.0; config.output_width * m],
            adj_a: vec![0.0; w * m],
            adj_b: vec![0.0; w * m],
        })
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.npts
    }

    pub fn is_empty(&self) -> bool {
        self.npts == 0
    }

    fn cols(&self) -> usize {
        self.npts * self.order.channels()
    }

    /// Output jets, `output_width x (points * channels)` row-major.
    pub fn outputs(&self) -> &[f64] {
        &self.out
    }

    /// Channel `c` of output `i` at point `q`.
    #[inline]
    pub fn output(&self, i: usize, q: usize, c: usize) -> f64 {
        let nc = self.order.channels();
        self.out[i * self.cols() + q * nc + c]
    }

    fn check(&self, params: &NetworkParams) -> Result<(), NetError> {
        if *params.config() != self.config {
            return Err(NetError::Config("parameters do not match the batch configuration"));
        }
        Ok(())
    }

    pub fn forward(&mut self, params: &NetworkParams) -> Result<(), NetError> {
        self.check(params)?;
        let cfg = self.config;
        let nc = self.order.channels();
        let m = self.cols();
        if m == 0 {
            return Ok(());
        }
        let n_scale = cfg.activation_scale;
        for k in 0..cfg.layer_count() {
            let (fi, fo) = cfg.layer_shape(k);
            let w = params.weights(k);
            let b = params.bias(k);
            let src: &[f64] = if k == 0 { &self.input } else { &self.post[k - 1] };
            let dst: &mut Vec<f64> = if k < cfg.hidden_layers {
                &mut self.pre[k]
            } else {
                &mut self.out
            };
            gemm(fo, fi, m, w, fi, 1, src, m, 1, 0.0, dst, m, 1);
            for r in 0..fo {
                let row = &mut dst[r * m..(r + 1) * m];
                for q in 0..self.npts {
                    row[q * nc] += b[r];
                }
            }
            if k == cfg.hidden_layers {
                break;
            }
            let s = params.slopes()[k] * n_scale;
            let pre = &self.pre[k];
            let post = &mut self.post[k];
            let th = &mut self.tanh[k];
            for r in 0..fo {
                let zrow = &pre[r * m..(r + 1) * m];
                let hrow = &mut post[r * m..(r + 1) * m];
                let trow = &mut th[r * self.npts..(r + 1) * self.npts];
                match self.order {
                    JetOrder::Value => {
                        for q in 0..self.npts {
                            let t = libm::tanh(s * zrow[q]);
                            trow[q] = t;
                            hrow[q] = t;
                        }
                    }
                    JetOrder::First => {
                        for ((z, h), tq) in zrow
                            .chunks_exact(3)
                            .zip(hrow.chunks_exact_mut(3))
                            .zip(trow.iter_mut())
                        {
                            let t = libm::tanh(s * z[0]);
                            let t1 = 1.0 - t * t;
                            *tq = t;
                            h[0] = t;
                            h[1] = t1 * (s * z[1]);
                            h[2] = t1 * (s * z[2]);
                        }
                    }
                    JetOrder::Second => {
                        for ((z, h), tq) in zrow
                            .chunks_exact(6)
                            .zip(hrow.chunks_exact_mut(6))
                            .zip(trow.iter_mut())
                        {
                            let t = libm::tanh(s * z[0]);
                            let t1 = 1.0 - t * t;
                            let t2 = -2.0 * t * t1;
                            let u1 = s * z[1];
                            let u2 = s * z[2];
                            *tq = t;
                            h[0] = t;
                            h[1] = t1 * u1;
                            h[2] = t1 * u2;
                            h[3] = t2 * u1 * u1 + t1 * (s * z[3]);
                            h[4] = t2 * u1 * u2 + t1 * (s * z[4]);
                            h[5] = t2 * u2 * u2 + t1 * (s * z[5]);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Accumulates into `grad` (parameter layout of `params`) the gradient of
    /// `sum(out_adjoint * outputs)`. Requires a preceding [`JetBatch::forward`]
    /// with the same parameters.
    pub fn backward(
        &mut self,
        params: &NetworkParams,
        out_adjoint: &[f64],
        grad: &mut [f64],
    ) -> Result<(), NetError> {
        self.check(params)?;
        let cfg = self.config;
        if out_adjoint.len() != self.out.len() {
            return Err(NetError::ShapeMismatch {
                expected: self.out.len(),
                got: out_adjoint.len(),
            });
        }
        if grad.len() != cfg.param_count() {
            return Err(NetError::ShapeMismatch {
                expected: cfg.param_count(),
                got: grad.len(),
            });
        }
        let m = self.cols();
        if m == 0 {
            return Ok(());
        }
        let npts = self.npts;
        let n_scale = cfg.activation_scale;
        let slope_start = cfg.slope_range().start;
        let top = cfg.hidden_layers;

        let mut x = core::mem::take(&mut self.adj_a);
        let mut y = core::mem::take(&mut self.adj_b);

        // Output layer: plain affine map.
        self.accumulate_affine(top, out_adjoint, grad);
        let (fi, fo) = cfg.layer_shape(top);
        gemm(fi, fo, m, params.weights(top), 1, fi as isize, out_adjoint, m, 1, 0.0, &mut x, m, 1);

        for k in (0..top).rev() {
            let (fi, fo) = cfg.layer_shape(k);
            let s = params.slopes()[k] * n_scale;
            let mut sbar = 0.0;
            for r in 0..fo {
                sbar += activation_backward(
                    self.order,
                    s,
                    &self.pre[k][r * m..(r + 1) * m],
                    &self.tanh[k][r * npts..(r + 1) * npts],
                    &mut x[r * m..(r + 1) * m],
                );
            }
            grad[slope_start + k] += n_scale * sbar;
            self.accumulate_affine(k, &x[..fo * m], grad);
            if k > 0 {
                gemm(fi, fo, m, params.weights(k), 1, fi as isize, &x, m, 1, 0.0, &mut y, m, 1);
                core::mem::swap(&mut x, &mut y);
            }
        }
        self.adj_a = x;
        self.adj_b = y;
        Ok(())
    }

    /// `dW_k += Zbar H_{k-1}^T`, `db_k += sum of value-channel adjoints`.
    fn accumulate_affine(&self, k: usize, zadj: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let (fi, fo) = cfg.layer_shape(k);
        let nc = self.order.channels();
        let m = self.cols();
        let src: &[f64] = if k == 0 { &self.input } else { &self.post[k - 1] };
        gemm(fo, m, fi, zadj, m, 1, src, 1, m as isize, 1.0, &mut grad[cfg.weight_range(k)], fi, 1);
        for (r, g) in grad[cfg.bias_range(k)].iter_mut().enumerate() {
            let row = &zadj[r * m..(r + 1) * m];
            let mut acc = 0.0;
            for q in 0..self.npts {
                acc += row[q * nc];
            }
            *g += acc;
        }
    }
}

/// Reverse of the adaptive-tanh jet map for one neuron over all points.
/// Overwrites `buf` (post-activation adjoints) with pre-activation adjoints
/// and returns the adjoint of the scaled slope.
fn activation_backward(
    order: JetOrder,
    s: f64,
    z: &[f64],
    t: &[f64],
    buf: &mut [f64],
) -> f64 {
    let mut sbar = 0.0;
    match order {
        JetOrder::Value => {
            for q in 0..t.len() {
                let t1 = 1.0 - t[q] * t[q];
                let ub = t1 * buf[q];
                buf[q] = s * ub;
                sbar += z[q] * ub;
            }
        }
        JetOrder::First => {
            for ((zq, bq), &tq) in z.chunks_exact(3).zip(buf.chunks_exact_mut(3)).zip(t) {
                let hq = [bq[0], bq[1], bq[2]];
                let t1 = 1.0 - tq * tq;
                let t2 = -2.0 * tq * t1;
                let u1 = s * zq[1];
                let u2 = s * zq[2];
                let ub1 = t1 * hq[1];
                let ub2 = t1 * hq[2];
                let ub0 = t1 * hq[0] + t2 * (u1 * hq[1] + u2 * hq[2]);
                bq[0] = s * ub0;
                bq[1] = s * ub1;
                bq[2] = s * ub2;
                sbar += zq[0] * ub0 + zq[1] * ub1 + zq[2] * ub2;
            }
        }
        JetOrder::Second => {
            for ((zq, bq), &tq) in z.chunks_exact(6).zip(buf.chunks_exact_mut(6)).zip(t) {
                let hq = [bq[0], bq[1], bq[2], bq[3], bq[4], bq[5]];
                let t1 = 1.0 - tq * tq;
                let t2 = -2.0 * tq * t1;
                let t3 = -2.0 * t1 * t1 + 4.0 * tq * tq * t1;
                let u1 = s * zq[1];
                let u2 = s * zq[2];
                let u11 = s * zq[3];
                let u12 = s * zq[4];
                let u22 = s * zq[5];
                let ub3 = t1 * hq[3];
                let ub4 = t1 * hq[4];
                let ub5 = t1 * hq[5];
                let ub1 = t1 * hq[1] + t2 * (2.0 * u1 * hq[3] + u2 * hq[4]);
                let ub2 = t1 * hq[2] + t2 * (2.0 * u2 * hq[5] + u1 * hq[4]);
                let ub0 = t1 * hq[0]
                    + t2 * (u1 * hq[1] + u2 * hq[2] + u11 * hq[3] + u12 * hq[4] + u22 * hq[5])
                    + t3 * (u1 * u1 * hq[3] + u1 * u2 * hq[4] + u2 * u2 * hq[5]);
                bq[0] = s * ub0;
                bq[1] = s * ub1;
                bq[2] = s * ub2;
                bq[3] = s * ub3;
                bq[4] = s * ub4;
                bq[5] = s * ub5;
                sbar += zq[0] * ub0
                    + zq[1] * ub1
                    + zq[2] * ub2
                    + zq[3] * ub3
                    + zq[4] * ub4
                    + zq[5] * ub5;
            }
        }
    }
    sbar
}

/// `C = alpha * A * B + beta * C` with explicit strides; bounds are checked
/// before handing raw pointers to the kernel.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: isize,
    b: &[f64],
    rsb: usize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: isize,
) {
    let extent = |rows: usize, cols: usize, rs: usize, cs: isize| -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs as usize + 1
        }
    };
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the extents above keep every strided access inside the slices,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa,
            b.as_ptr(),
            rsb as isize,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::nets::forward_generic;
    use alloc::vec::Vec;

    fn small() -> MlpConfig {
        MlpConfig {
            input_width: 2,
            hidden_layers: 3,
            hidden_width: 5,
            output_width: 3,
            activation_scale: 2.0,
        }
    }

    fn perturbed(cfg: MlpConfig, seed: u64) -> NetworkParams {
        let mut p = NetworkParams::init_xavier(cfg, seed).unwrap();
        // Non-trivial biases and slopes so every code path is exercised.
        let n = p.len();
        for (i, v) in p.values_mut().iter_mut().enumerate() {
            *v += 0.05 * libm::sin(i as f64 * 1.7 + seed as f64);
        }
        let _ = n;
        p
    }

    fn points() -> Vec<Point2> {
        vec![
            Point2::new(0.1, 0.9),
            Point2::new(0.5, 0.5),
            Point2::new(0.93, 0.27),
        ]
    }

    /// Spatial jets from nested tape sweeps, `[v, d1, d2, d11, d12, d22]`.
    fn tape_jets(p: &NetworkParams, x: Point2) -> Vec<[f64; 6]> {
        let tape = Tape::new();
        let theta = tape.leaves(p.values());
        let xs = [tape.leaf(x.x1), tape.leaf(x.x2)];
        let out = forward_generic(p.config(), &theta, &xs).unwrap();
        out.iter()
            .map(|&y| {
                let g = y.grad_graph(&xs).unwrap();
                let h1 = g[0].grad(&xs).unwrap();
                let h2 = g[1].grad(&xs).unwrap();
                assert!((h1[1] - h2[0]).abs() < 1e-12);
                [y.value(), g[0].value(), g[1].value(), h1[0], h1[1], h2[1]]
            })
            .collect()
    }

    #[test]
    fn jets_match_tape_derivatives() {
        let cfg = small();
        let p = perturbed(cfg, 11);
        for order in [JetOrder::Value, JetOrder::First, JetOrder::Second] {
            let mut b = JetBatch::new(cfg, &points(), order).unwrap();
            b.forward(&p).unwrap();
            for (q, x) in points().into_iter().enumerate() {
                let reference = tape_jets(&p, x);
                for (i, r) in reference.iter().enumerate() {
                    for c in 0..order.channels() {
                        let got = b.output(i, q, c);
                        assert!(
                            (got - r[c]).abs() < 1e-12 * (1.0 + r[c].abs()),
                            "order {order:?} out {i} ch {c}: {got} vs {}",
                            r[c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn backward_matches_tape_gradient() {
        let cfg = small();
        let p = perturbed(cfg, 5);
        let pts = points();
        for order in [JetOrder::Value, JetOrder::First, JetOrder::Second] {
            let nc = order.channels();
            let mut b = JetBatch::new(cfg, &pts, order).unwrap();
            b.forward(&p).unwrap();
            // Arbitrary fixed weights on every output channel.
            let adj: Vec<f64> = (0..b.outputs().len())
                .map(|i| libm::cos(i as f64 * 0.37))
                .collect();
            let mut grad = vec![0.0; p.len()];
            b.backward(&p, &adj, &mut grad).unwrap();

            let tape = Tape::new();
            let theta = tape.leaves(p.values());
            let mut total = tape.constant(0.0);
            let m = pts.len() * nc;
            for (q, x) in pts.iter().enumerate() {
                let xs = [tape.leaf(x.x1), tape.leaf(x.x2)];
                let out = forward_generic(&cfg, &theta, &xs).unwrap();
                for (i, &y) in out.iter().enumerate() {
                    let mut chans = vec![y];
                    if nc > 1 {
                        let g = y.grad_graph(&xs).unwrap();
                        chans.push(g[0]);
                        chans.push(g[1]);
                        if nc > 3 {
                            let h1 = g[0].grad_graph(&xs).unwrap();
                            let h2 = g[1].grad_graph(&xs).unwrap();
                            chans.push(h1[0]);
                            chans.push(h1[1]);
                            chans.push(h2[1]);
                        }
                    }
                    for (c, v) in chans.into_iter().enumerate() {
                        total = total + v * adj[i * m + q * nc + c];
                    }
                }
            }
            let reference = total.grad(&theta).unwrap();
            for (j, (a, r)) in grad.iter().zip(reference.as_slice()).enumerate() {
                assert!(
                    (a - r).abs() < 1e-11 * (1.0 + r.abs()),
                    "order {order:?} param {j}: {a} vs {r}"
                );
            }
        }
    }

    #[test]
    fn mismatched_params_rejected() {
        let mut b = JetBatch::new(small(), &points(), JetOrder::Value).unwrap();
        let other = NetworkParams::zeros(MlpConfig::modulus()).unwrap();
        assert!(b.forward(&other).is_err());
    }
}
