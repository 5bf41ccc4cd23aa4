//! Graph convolution, graph attention and fully connected layers over
//! complex node features `[B, K, D]`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gnn::{Bound, Init, Mode, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Cgcl,
    Cgal,
    Cfl,
}

/// Shape of one layer in an architecture table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Processor/combiner width, convolution layers only.
    pub hidden: usize,
    pub batch_norm: bool,
    pub residual: bool,
}

impl LayerSpec {
    /// Checks that dimensions are positive and chain from one layer to the
    /// next.
    pub fn check_chain(specs: &[LayerSpec]) -> Result<()> {
        for (i, s) in specs.iter().enumerate() {
            if s.in_dim == 0 || s.out_dim == 0 || (s.kind == LayerKind::Cgcl && s.hidden == 0) {
                return Err(Error::InvalidParams(format!("layer {i} has a zero dimension")));
            }
            if i > 0 && specs[i - 1].out_dim != s.in_dim {
                return Err(Error::InvalidParams(format!(
                    "layer {i} expects {} inputs, previous layer gives {}",
                    s.in_dim,
                    specs[i - 1].out_dim
                )));
            }
        }
        Ok(())
    }
}

fn dims3(v: &Var<'_>) -> (usize, usize, usize) {
    let s = v.shape();
    assert_eq!(s.len(), 3, "node features must be [B, K, D], got {s:?}");
    (s[0], s[1], s[2])
}

/// Message passing with a pairwise processor, sum aggregation over all
/// nodes including the node itself, and a combiner.
///
/// Processor: `q(v_k, v_k') = relu_c(v_k W_a + v_k' W_b + b_1) W_2 + b_2`.
/// Combiner: `f(v_k, t_k) = relu_c(v_k F_a + t_k F_b + c_1) F_2 + c_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cgcl {
    pub spec: LayerSpec,
    wa: usize,
    wb: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    fa: usize,
    fb: usize,
    c1: usize,
    f2: usize,
    c2: usize,
}

impl Cgcl {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, hidden: usize, dout: usize) -> Self {
        let k = |fan_in| Init::Kaiming { fan_in };
        Self {
            spec: LayerSpec { kind: LayerKind::Cgcl, in_dim: din, out_dim: dout, hidden, batch_norm: false, residual: false },
            wa: store.add(format!("{name}.proc.wa"), &[din, hidden], k(2 * din)),
            wb: store.add(format!("{name}.proc.wb"), &[din, hidden], k(2 * din)),
            b1: store.add(format!("{name}.proc.b1"), &[hidden], Init::Zeros),
            w2: store.add(format!("{name}.proc.w2"), &[hidden, dout], k(hidden)),
            b2: store.add(format!("{name}.proc.b2"), &[dout], Init::Zeros),
            fa: store.add(format!("{name}.comb.fa"), &[din, hidden], k(din + dout)),
            fb: store.add(format!("{name}.comb.fb"), &[dout, hidden], k(din + dout)),
            c1: store.add(format!("{name}.comb.c1"), &[hidden], Init::Zeros),
            f2: store.add(format!("{name}.comb.f2"), &[hidden, dout], k(hidden)),
            c2: store.add(format!("{name}.comb.c2"), &[dout], Init::Zeros),
        }
    }

    /// Aggregated messages `[B, K, D']`.
    pub fn aggregate<'t>(&self, p: &Bound<'t>, v: Var<'t>) -> Var<'t> {
        let (b, k, _) = dims3(&v);
        let j = self.spec.hidden;
        let own = v.matmul(p[self.wa]).reshape(&[b, k, 1, j]);
        let other = v.matmul(p[self.wb]).reshape(&[b, 1, k, j]);
        let h = own.add(other).add(p[self.b1]).relu_c();
        // The second affine map commutes with the sum over senders.
        h.sum(2, false).matmul(p[self.w2]).add(p[self.b2].scale_re(k as f64))
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, v: Var<'t>) -> Var<'t> {
        let t = self.aggregate(p, v);
        v.matmul(p[self.fa]).add(t.matmul(p[self.fb])).add(p[self.c1]).relu_c().matmul(p[self.f2]).add(p[self.c2])
    }

    /// Parameter indices of the processor's first affine map, for tests
    /// that zero it.
    pub fn processor_params(&self) -> [usize; 4] {
        [self.wa, self.wb, self.b1, self.w2]
    }
}

/// Graph attention with residual connection:
/// `relu_c(A · V W) + V W̄`, where
/// `A[k, k'] = softmax_k'(LeakyReLU(Re(a_1·(v_k W) + a_2·(v_k' W))))`.
/// With several heads the attention outputs are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct Cgal {
    pub spec: LayerSpec,
    heads: Vec<[usize; 3]>,
    wbar: usize,
}

impl Cgal {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, heads: usize) -> Self {
        let heads = (0..heads.max(1))
            .map(|h| {
                [
                    store.add(format!("{name}.h{h}.w"), &[din, dout], Init::Kaiming { fan_in: din }),
                    store.add(format!("{name}.h{h}.a1"), &[dout, 1], Init::Kaiming { fan_in: 2 * dout }),
                    store.add(format!("{name}.h{h}.a2"), &[dout, 1], Init::Kaiming { fan_in: 2 * dout }),
                ]
            })
            .collect();
        Self {
            spec: LayerSpec { kind: LayerKind::Cgal, in_dim: din, out_dim: dout, hidden: 0, batch_norm: false, residual: true },
            heads,
            wbar: store.add(format!("{name}.residual"), &[din, dout], Init::Kaiming { fan_in: din }),
        }
    }

    /// `[B, K, K]` attention weights of one head, rows summing to one.
    pub fn attention<'t>(&self, p: &Bound<'t>, v: Var<'t>, head: usize) -> Var<'t> {
        let (b, k, _) = dims3(&v);
        let [w, a1, a2] = self.heads[head];
        let vw = v.matmul(p[w]);
        let s1 = vw.matmul(p[a1]);
        let s2 = vw.matmul(p[a2]).reshape(&[b, 1, k]);
        s1.add(s2).re().leaky_relu(LEAKY_SLOPE).softmax()
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, v: Var<'t>) -> Var<'t> {
        let mut acc: Option<Var<'t>> = None;
        for (h, &[w, _, _]) in self.heads.iter().enumerate() {
            let msg = self.attention(p, v, h).matmul(v.matmul(p[w])).relu_c();
            acc = Some(match acc {
                None => msg,
                Some(a) => a.add(msg),
            });
        }
        let att = acc.expect("at least one head").scale_re(1.0 / self.heads.len() as f64);
        att.add(v.matmul(p[self.wbar]))
    }
}

/// Running statistics of a normalization layer, per output feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub mean_re: Vec<f64>,
    pub var_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var_im: Vec<f64>,
}

impl BnState {
    fn new(d: usize) -> Self {
        Self { mean_re: vec![0.0; d], var_re: vec![1.0; d], mean_im: vec![0.0; d], var_im: vec![1.0; d] }
    }

    fn update(&mut self, s: &BnStats) {
        let blend = |run: &mut Vec<f64>, batch: &[f64]| {
            for (r, b) in run.iter_mut().zip(batch) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        };
        blend(&mut self.mean_re, &s.mean_re);
        blend(&mut self.var_re, &s.var_re);
        blend(&mut self.mean_im, &s.mean_im);
        blend(&mut self.var_im, &s.var_im);
    }
}

/// Batch statistics observed in a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean_re: Vec<f64>,
    pub var_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var_im: Vec<f64>,
}

/// Standardizes a real `[B, K, D]` tensor per feature over batch and nodes.
fn standardize<'t>(tape: &'t Tape, x: Var<'t>, mode: Mode, mean: &[f64], var: &[f64]) -> (Var<'t>, Vec<f64>, Vec<f64>) {
    let (b, k, d) = dims3(&x);
    let flat = x.reshape(&[b * k, d]);
    let (centred, scale, m, v) = match mode {
        Mode::Train => {
            let mu = flat.mean(0, true);
            let c = flat.sub(mu);
            let var = c.abs2().mean(0, true);
            (c, var.shift_re(BN_EPS).sqrt(), mu.real_values(), var.real_values())
        }
        Mode::Eval => {
            let c = flat.sub(tape.constant_real(&[1, d], mean));
            let s: Vec<f64> = var.iter().map(|v| (v + BN_EPS).sqrt()).collect();
            (c, tape.constant_real(&[1, d], &s), mean.to_vec(), var.to_vec())
        }
    };
    (centred.div(scale).reshape(&[b, k, d]), m, v)
}

/// Fully connected layer with a bias shared by all nodes, optional complex
/// batch normalization and optional `relu_c`.
///
/// Normalization standardizes real and imaginary parts separately, then
/// applies a learnable complex scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Cfl {
    pub spec: LayerSpec,
    w: usize,
    bias: usize,
    bn: Option<(usize, usize)>,
    pub state: Option<BnState>,
    activate: bool,
}

impl Cfl {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, batch_norm: bool, activate: bool) -> Self {
        let bn = batch_norm.then(|| {
            (store.add(format!("{name}.bn.gamma"), &[dout], Init::Ones), store.add(format!("{name}.bn.beta"), &[dout], Init::Zeros))
        });
        Self {
            spec: LayerSpec { kind: LayerKind::Cfl, in_dim: din, out_dim: dout, hidden: 0, batch_norm, residual: false },
            w: store.add(format!("{name}.w"), &[din, dout], Init::Kaiming { fan_in: din }),
            bias: store.add(format!("{name}.bias"), &[dout], Init::Zeros),
            bn,
            state: batch_norm.then(|| BnState::new(dout)),
            activate,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, p: &Bound<'t>, v: Var<'t>, mode: Mode) -> (Var<'t>, Option<BnStats>) {
        let mut y = v.matmul(p[self.w]).add(p[self.bias]);
        let mut stats = None;
        if let (Some((gamma, beta)), Some(st)) = (self.bn, &self.state) {
            let (re, mean_re, var_re) = standardize(tape, y.re(), mode, &st.mean_re, &st.var_re);
            let (im, mean_im, var_im) = standardize(tape, y.im(), mode, &st.mean_im, &st.var_im);
            y = Var::complex(re, im).mul(p[gamma]).add(p[beta]);
            if mode == Mode::Train {
                stats = Some(BnStats { mean_re, var_re, mean_im, var_im });
            }
        }
        if self.activate {
            y = y.relu_c();
        }
        (y, stats)
    }

    pub fn update_running(&mut self, stats: &BnStats) {
        if let Some(st) = &mut self.state {
            st.update(stats);
        }
    }
}
