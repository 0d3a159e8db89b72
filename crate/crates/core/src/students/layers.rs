//! Sequence layers over `len × ch` activations with explicit backward passes.
//!
//! Parameters live in one flat vector; every op stores offsets into it.
//! The forward pass optionally records a tape that the backward pass
//! consumes in reverse.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major `len × ch` activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub len: usize,
    pub ch: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(len: usize, ch: usize) -> Self {
        Self {
            len,
            ch,
            data: vec![T::zero(); len * ch],
        }
    }

    fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.ch..(t + 1) * self.ch]
    }

    fn row_mut(&mut self, t: usize) -> &mut [T] {
        &mut self.data[t * self.ch..(t + 1) * self.ch]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// 1-D convolution over time; weight layout `[k][cin][cout]`.
    Conv {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        w: usize,
        b: usize,
    },
    /// Per-channel convolution, odd kernel, same padding; layout `[k][ch]`.
    Depthwise {
        ch: usize,
        kernel: usize,
        w: usize,
        b: usize,
    },
    /// Per-position linear map; layout `[cin][cout]`.
    Dense {
        cin: usize,
        cout: usize,
        w: usize,
        b: usize,
    },
    Silu,
    /// Learned additive position table `[len][ch]`.
    PosEmbed {
        len: usize,
        ch: usize,
        p: usize,
    },
    /// Single-head scaled dot-product self-attention, no biases.
    Attention {
        ch: usize,
        wq: usize,
        wk: usize,
        wv: usize,
        wo: usize,
    },
    Residual(Vec<Op>),
    MeanPool,
}

#[derive(Debug, Clone)]
pub enum Entry<T> {
    Input(Act<T>),
    Attention {
        x: Act<T>,
        q: Vec<T>,
        k: Vec<T>,
        v: Vec<T>,
        probs: Vec<T>,
        ctx: Vec<T>,
    },
    Residual(Vec<Entry<T>>),
    Len(usize),
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `out[n×m] = a[n×k] · b[k×m]`, all row-major.
fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in orow.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[k×m] += aᵀ · b` for `a[n×k]`, `b[n×m]`.
fn add_at_b<T: Real>(out: &mut [T], a: &[T], b: &[T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×k] += a[n×m] · bᵀ` for `b[k×m]`.
fn add_a_bt<T: Real>(out: &mut [T], a: &[T], b: &[T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let s: T = arow.iter().zip(&b[p * m..(p + 1) * m]).map(|(&x, &y)| x * y).sum();
            out[i * k + p] += s;
        }
    }
}

impl Op {
    pub fn forward<T: Real>(&self, params: &[T], x: Act<T>, record: bool) -> (Act<T>, Option<Entry<T>>) {
        match *self {
            Op::Conv {
                cin,
                cout,
                kernel,
                stride,
                pad,
                w,
                b,
            } => {
                let out_len = (x.len + 2 * pad - kernel) / stride + 1;
                let mut y = Act::zeros(out_len, cout);
                let bias = &params[b..b + cout];
                for t in 0..out_len {
                    let yrow = y.row_mut(t);
                    yrow.copy_from_slice(bias);
                    for j in 0..kernel {
                        let src = (t * stride + j) as isize - pad as isize;
                        if src < 0 || src as usize >= x.len {
                            continue;
                        }
                        let xrow = x.row(src as usize);
                        for (i, &xv) in xrow.iter().enumerate() {
                            let wrow = &params[w + (j * cin + i) * cout..][..cout];
                            for (o, &wv) in yrow.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
                (y, record.then_some(Entry::Input(x)))
            }
            Op::Depthwise { ch, kernel, w, b } => {
                let pad = kernel / 2;
                let mut y = Act::zeros(x.len, ch);
                for t in 0..x.len {
                    let yrow = y.row_mut(t);
                    yrow.copy_from_slice(&params[b..b + ch]);
                    for j in 0..kernel {
                        let src = (t + j) as isize - pad as isize;
                        if src < 0 || src as usize >= x.len {
                            continue;
                        }
                        let xrow = x.row(src as usize);
                        let wrow = &params[w + j * ch..][..ch];
                        for ((o, &xv), &wv) in yrow.iter_mut().zip(xrow).zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
                (y, record.then_some(Entry::Input(x)))
            }
            Op::Dense { cin, cout, w, b } => {
                let mut data = matmul(&x.data, &params[w..w + cin * cout], x.len, cin, cout);
                for row in data.chunks_exact_mut(cout) {
                    for (o, &bv) in row.iter_mut().zip(&params[b..b + cout]) {
                        *o += bv;
                    }
                }
                let y = Act {
                    len: x.len,
                    ch: cout,
                    data,
                };
                (y, record.then_some(Entry::Input(x)))
            }
            Op::Silu => {
                let y = Act {
                    len: x.len,
                    ch: x.ch,
                    data: x.data.iter().map(|&v| v * sigmoid(v)).collect(),
                };
                (y, record.then_some(Entry::Input(x)))
            }
            Op::PosEmbed { len, ch, p } => {
                debug_assert_eq!((x.len, x.ch), (len, ch));
                let mut y = x;
                for (o, &pv) in y.data.iter_mut().zip(&params[p..p + len * ch]) {
                    *o += pv;
                }
                (y, record.then_some(Entry::Len(0)))
            }
            Op::Attention { ch, wq, wk, wv, wo } => {
                let n = x.len;
                let q = matmul(&x.data, &params[wq..wq + ch * ch], n, ch, ch);
                let k = matmul(&x.data, &params[wk..wk + ch * ch], n, ch, ch);
                let v = matmul(&x.data, &params[wv..wv + ch * ch], n, ch, ch);
                let scale = T::one() / T::of(ch as f64).sqrt();
                let mut probs = vec![T::zero(); n * n];
                for i in 0..n {
                    let qi = &q[i * ch..(i + 1) * ch];
                    let row = &mut probs[i * n..(i + 1) * n];
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &k[j * ch..(j + 1) * ch];
                        *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    }
                    let max = row.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
                    let mut z = T::zero();
                    for s in row.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    for s in row.iter_mut() {
                        *s = *s / z;
                    }
                }
                let ctx = matmul(&probs, &v, n, n, ch);
                let out = matmul(&ctx, &params[wo..wo + ch * ch], n, ch, ch);
                let y = Act {
                    len: n,
                    ch,
                    data: out,
                };
                let entry = record.then(|| Entry::Attention {
                    x,
                    q,
                    k,
                    v,
                    probs,
                    ctx,
                });
                (y, entry)
            }
            Op::Residual(ref inner) => {
                let mut h = x.clone();
                let mut tape = Vec::new();
                for op in inner {
                    let (next, e) = op.forward(params, h, record);
                    if let Some(e) = e {
                        tape.push(e);
                    }
                    h = next;
                }
                for (o, &s) in h.data.iter_mut().zip(&x.data) {
                    *o += s;
                }
                (h, record.then_some(Entry::Residual(tape)))
            }
            Op::MeanPool => {
                let n = T::of(x.len as f64);
                let mut y = Act::zeros(1, x.ch);
                for t in 0..x.len {
                    for (o, &v) in y.data.iter_mut().zip(x.row(t)) {
                        *o += v;
                    }
                }
                for o in y.data.iter_mut() {
                    *o = *o / n;
                }
                (y, record.then_some(Entry::Len(x.len)))
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient (empty when `need_dx` is false).
    pub fn backward<T: Real>(
        &self,
        params: &[T],
        entry: Entry<T>,
        gy: Act<T>,
        grads: &mut [T],
        need_dx: bool,
    ) -> Act<T> {
        match (self, entry) {
            (
                &Op::Conv {
                    cin,
                    cout,
                    kernel,
                    stride,
                    pad,
                    w,
                    b,
                },
                Entry::Input(x),
            ) => {
                let mut dx = if need_dx {
                    Act::zeros(x.len, cin)
                } else {
                    Act::zeros(0, cin)
                };
                for t in 0..gy.len {
                    let grow = gy.row(t);
                    for (o, &g) in grads[b..b + cout].iter_mut().zip(grow) {
                        *o += g;
                    }
                    for j in 0..kernel {
                        let src = (t * stride + j) as isize - pad as isize;
                        if src < 0 || src as usize >= x.len {
                            continue;
                        }
                        let src = src as usize;
                        for i in 0..cin {
                            let xv = x.data[src * cin + i];
                            let off = w + (j * cin + i) * cout;
                            for (gw, &g) in grads[off..off + cout].iter_mut().zip(grow) {
                                *gw += xv * g;
                            }
                            if need_dx {
                                let s: T = params[off..off + cout]
                                    .iter()
                                    .zip(grow)
                                    .map(|(&wv, &g)| wv * g)
                                    .sum();
                                dx.data[src * cin + i] += s;
                            }
                        }
                    }
                }
                dx
            }
            (&Op::Depthwise { ch, kernel, w, b }, Entry::Input(x)) => {
                let pad = kernel / 2;
                let mut dx = Act::zeros(x.len, ch);
                for t in 0..gy.len {
                    let grow = gy.row(t);
                    for (o, &g) in grads[b..b + ch].iter_mut().zip(grow) {
                        *o += g;
                    }
                    for j in 0..kernel {
                        let src = (t + j) as isize - pad as isize;
                        if src < 0 || src as usize >= x.len {
                            continue;
                        }
                        let src = src as usize;
                        for c in 0..ch {
                            let g = grow[c];
                            grads[w + j * ch + c] += x.data[src * ch + c] * g;
                            dx.data[src * ch + c] += params[w + j * ch + c] * g;
                        }
                    }
                }
                dx
            }
            (&Op::Dense { cin, cout, w, b }, Entry::Input(x)) => {
                add_at_b(&mut grads[w..w + cin * cout], &x.data, &gy.data, x.len, cin, cout);
                for row in gy.data.chunks_exact(cout) {
                    for (o, &g) in grads[b..b + cout].iter_mut().zip(row) {
                        *o += g;
                    }
                }
                let mut dx = Act::zeros(x.len, cin);
                if need_dx {
                    add_a_bt(&mut dx.data, &gy.data, &params[w..w + cin * cout], x.len, cin, cout);
                }
                dx
            }
            (Op::Silu, Entry::Input(x)) => {
                let data = x
                    .data
                    .iter()
                    .zip(&gy.data)
                    .map(|(&v, &g)| {
                        let s = sigmoid(v);
                        g * s * (T::one() + v * (T::one() - s))
                    })
                    .collect();
                Act {
                    len: x.len,
                    ch: x.ch,
                    data,
                }
            }
            (&Op::PosEmbed { len, ch, p }, _) => {
                for (o, &g) in grads[p..p + len * ch].iter_mut().zip(&gy.data) {
                    *o += g;
                }
                gy
            }
            (
                &Op::Attention { ch, wq, wk, wv, wo },
                Entry::Attention {
                    x,
                    q,
                    k,
                    v,
                    probs,
                    ctx,
                },
            ) => {
                let n = x.len;
                let scale = T::one() / T::of(ch as f64).sqrt();
                add_at_b(&mut grads[wo..wo + ch * ch], &ctx, &gy.data, n, ch, ch);
                let mut dctx = vec![T::zero(); n * ch];
                add_a_bt(&mut dctx, &gy.data, &params[wo..wo + ch * ch], n, ch, ch);

                // ctx = P·V
                let mut dprobs = vec![T::zero(); n * n];
                add_a_bt(&mut dprobs, &dctx, &v, n, n, ch);
                let mut dv = vec![T::zero(); n * ch];
                add_at_b(&mut dv, &probs, &dctx, n, n, ch);

                // softmax rows, then the 1/√ch scale
                let mut ds = vec![T::zero(); n * n];
                for i in 0..n {
                    let p = &probs[i * n..(i + 1) * n];
                    let dp = &dprobs[i * n..(i + 1) * n];
                    let dot: T = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
                    for j in 0..n {
                        ds[i * n + j] = p[j] * (dp[j] - dot) * scale;
                    }
                }
                // S = Q·Kᵀ
                let dq = matmul(&ds, &k, n, n, ch);
                let mut dk = vec![T::zero(); n * ch];
                add_at_b(&mut dk, &ds, &q, n, n, ch);

                add_at_b(&mut grads[wq..wq + ch * ch], &x.data, &dq, n, ch, ch);
                add_at_b(&mut grads[wk..wk + ch * ch], &x.data, &dk, n, ch, ch);
                add_at_b(&mut grads[wv..wv + ch * ch], &x.data, &dv, n, ch, ch);

                let mut dx = Act::zeros(n, ch);
                if need_dx {
                    add_a_bt(&mut dx.data, &dq, &params[wq..wq + ch * ch], n, ch, ch);
                    add_a_bt(&mut dx.data, &dk, &params[wk..wk + ch * ch], n, ch, ch);
                    add_a_bt(&mut dx.data, &dv, &params[wv..wv + ch * ch], n, ch, ch);
                }
                dx
            }
            (Op::Residual(inner), Entry::Residual(tape)) => {
                let mut g = gy.clone();
                for (op, e) in inner.iter().zip(tape).rev() {
                    g = op.backward(params, e, g, grads, true);
                }
                for (o, &s) in g.data.iter_mut().zip(&gy.data) {
                    *o += s;
                }
                g
            }
            (Op::MeanPool, Entry::Len(len)) => {
                let n = T::of(len as f64);
                let mut dx = Act::zeros(len, gy.ch);
                for t in 0..len {
                    for (o, &g) in dx.row_mut(t).iter_mut().zip(&gy.data) {
                        *o = g / n;
                    }
                }
                dx
            }
            (op, _) => unreachable!("tape entry does not match op {op:?}"),
        }
    }
}

/// Runs `ops` in sequence, optionally recording a tape.
pub fn forward_seq<T: Real>(
    ops: &[Op],
    params: &[T],
    mut x: Act<T>,
    tape: Option<&mut Vec<Entry<T>>>,
) -> Act<T> {
    match tape {
        Some(tape) => {
            for op in ops {
                let (y, e) = op.forward(params, x, true);
                tape.extend(e);
                x = y;
            }
        }
        None => {
            for op in ops {
                x = op.forward(params, x, false).0;
            }
        }
    }
    x
}

/// Reverse pass over a tape produced by [`forward_seq`]. The first op never
/// propagates to its input.
pub fn backward_seq<T: Real>(
    ops: &[Op],
    params: &[T],
    tape: Vec<Entry<T>>,
    mut g: Act<T>,
    grads: &mut [T],
) {
    for (idx, (op, e)) in ops.iter().zip(tape).enumerate().rev() {
        g = op.backward(params, e, g, grads, idx > 0);
    }
}
