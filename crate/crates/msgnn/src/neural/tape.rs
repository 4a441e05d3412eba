//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Tape`] records a forward computation as a flat list of primitive
//! operations on (rows x features) matrices. [`Tape::backward`] walks the
//! record in reverse and accumulates gradients for every parameter leaf.
//! One tape corresponds to one forward pass; tapes are cheap to drop.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};
use crate::neural::params::ParamSet;

/// SELU activation constants (self-normalizing exponential linear unit).
pub const SELU_ALPHA: f64 = 1.6732632423543772;
pub const SELU_LAMBDA: f64 = 1.0507009873554805;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    /// Input with no gradient.
    Constant,
    /// Leaf bound to a parameter tensor (index into the `ParamSet`).
    Param(usize),
    MatMul(Var, Var),
    /// Fused dense layer: input x weights + broadcast bias, optionally with
    /// SELU on top (whose derivative is recovered from the stored output).
    Linear { input: Var, weights: Var, bias: Var, selu: bool },
    Add(Var, Var),
    /// Broadcast-add a 1 x w row (bias) to every row of the left operand.
    AddRow(Var, Var),
    Sub(Var, Var),
    /// Broadcast-multiply every row by a 1 x w row (per-feature gain).
    MulRow(Var, Var),
    Scale(Var, f64),
    /// Multiply each row by a fixed (non-differentiated) scalar.
    ScaleRows(Var, Arc<Vec<f64>>),
    Selu(Var),
    /// Normalization over the feature axis of each row.
    LayerNorm(Var, f64),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    /// Per-target mean of source rows: `out[j] = mean over {i : index[i] = j}`.
    /// Targets with no sources receive the zero row.
    ScatterMean(Var, Arc<Vec<usize>>, Arc<Vec<usize>>),
    /// Fused `[e_k, v_r, v_s]` edge-input construction.
    EdgeConcat {
        edges: Var,
        nodes: Var,
        receivers: Arc<Vec<usize>>,
        senders: Arc<Vec<usize>>,
    },
    SumAll(Var),
    MeanAll(Var),
    Abs(Var),
    Square(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Gradients produced by one backward pass, aligned with the `ParamSet`
/// indices the tape was built against.
#[derive(Debug)]
pub struct TapeGrads {
    pub by_param: Vec<Option<Array2<f64>>>,
}

impl TapeGrads {
    /// Add these gradients into the parameter set's `grad` buffers.
    /// Parameters not reached by the tape are left untouched.
    pub fn accumulate_into(&self, params: &mut ParamSet) {
        for (idx, grad) in self.by_param.iter().enumerate() {
            if let Some(g) = grad {
                let t = params.tensor_mut(idx);
                debug_assert_eq!(t.grad.len(), g.len());
                for (dst, src) in t.grad.iter_mut().zip(g.iter()) {
                    *dst += *src;
                }
            }
        }
    }

    /// Elementwise sum of several gradient sets, in the order given.
    pub fn sum(mut list: Vec<TapeGrads>) -> Option<TapeGrads> {
        let mut iter = list.drain(..);
        let mut acc = iter.next()?;
        for g in iter {
            for (slot, add) in acc.by_param.iter_mut().zip(g.by_param) {
                match (slot.as_mut(), add) {
                    (Some(a), Some(b)) => *a += &b,
                    (None, Some(b)) => *slot = Some(b),
                    _ => {}
                }
            }
        }
        Some(acc)
    }
}

/// Record of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    n_params: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let d = self.nodes[v.0].value.dim();
        (d.0, d.1)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        let value = if value.is_standard_layout() { value } else { value.as_standard_layout().into_owned() };
        self.push(value, Op::Constant)
    }

    /// Leaf for a parameter tensor; the value is copied onto the tape.
    pub fn param(&mut self, params: &ParamSet, idx: usize) -> Var {
        self.n_params = self.n_params.max(params.len());
        let value = params.tensor(idx).as_matrix();
        self.push(value, Op::Param(idx))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert_eq!(ac, br, "matmul inner dims {ac} vs {br}");
        let mut value = Array2::zeros((ar, bc));
        general_mat_mul(1.0, &self.nodes[a.0].value, &self.nodes[b.0].value, 0.0, &mut value);
        self.push(value, Op::MatMul(a, b))
    }

    /// Fused dense layer `x W + b`, optionally followed by SELU.
    pub fn linear(&mut self, input: Var, weights: Var, bias: Var, selu: bool) -> Var {
        let (ar, ac) = self.shape(input);
        let (br, bc) = self.shape(weights);
        assert_eq!(ac, br, "linear inner dims {ac} vs {br}");
        assert_eq!(self.shape(bias), (1, bc), "linear bias must be 1x{bc}");
        let mut value = Array2::zeros((ar, bc));
        {
            let out = value.as_slice_mut().expect("standard layout");
            let b = self.nodes[bias.0].value.as_slice().expect("standard layout");
            for row in 0..ar {
                out[row * bc..(row + 1) * bc].copy_from_slice(b);
            }
        }
        general_mat_mul(1.0, &self.nodes[input.0].value, &self.nodes[weights.0].value, 1.0, &mut value);
        if selu {
            value.mapv_inplace(|x| {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
                }
            });
        }
        self.push(value, Op::Linear { input, weights, bias, selu })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        assert_eq!((rr, rc), (1, ac), "add_row expects a 1x{ac} row, got {rr}x{rc}");
        let value = &self.nodes[a.0].value + &self.nodes[row.0].value.row(0);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(value, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = &self.nodes[a.0].value * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn scale_rows(&mut self, a: Var, weights: Arc<Vec<f64>>) -> Var {
        let (ar, _) = self.shape(a);
        assert_eq!(ar, weights.len(), "scale_rows weight count");
        let mut value = self.nodes[a.0].value.clone();
        for (mut row, &w) in value.rows_mut().into_iter().zip(weights.iter()) {
            row.mapv_inplace(|x| x * w);
        }
        self.push(value, Op::ScaleRows(a, weights))
    }

    pub fn selu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| {
            if x > 0.0 {
                SELU_LAMBDA * x
            } else {
                SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
            }
        });
        self.push(value, Op::Selu(a))
    }

    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = &self.nodes[a.0].value;
        let w = x.ncols() as f64;
        let mut value = x.clone();
        for mut row in value.rows_mut() {
            let mean = row.sum() / w;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        self.push(value, Op::LayerNorm(a, eps))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Array2::zeros((rows, total));
        let mut col = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            assert_eq!(pr, rows, "concat_cols row mismatch");
            value.slice_mut(s![.., col..col + pc]).assign(&self.nodes[p.0].value);
            col += pc;
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Var {
        let (ar, ac) = self.shape(a);
        let src = self.nodes[a.0].value.as_slice().expect("standard layout");
        let mut value = Array2::zeros((index.len(), ac));
        {
            let out = value.as_slice_mut().expect("standard layout");
            for (row, &i) in index.iter().enumerate() {
                assert!(i < ar, "gather index {i} out of {ar} rows");
                out[row * ac..(row + 1) * ac].copy_from_slice(&src[i * ac..(i + 1) * ac]);
            }
        }
        self.push(value, Op::GatherRows(a, index))
    }

    /// Mean-scatter rows of `a` into `n_out` target rows according to
    /// `index` (one entry per source row). Targets with no sources get zeros.
    pub fn scatter_mean(&mut self, a: Var, index: Arc<Vec<usize>>, n_out: usize) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(ar, index.len(), "scatter_mean index count");
        let mut counts = vec![0usize; n_out];
        for &j in index.iter() {
            assert!(j < n_out, "scatter index {j} out of {n_out}");
            counts[j] += 1;
        }
        let src = self.nodes[a.0].value.as_slice().expect("standard layout");
        let mut value = Array2::zeros((n_out, ac));
        {
            let out = value.as_slice_mut().expect("standard layout");
            for (row, &j) in index.iter().enumerate() {
                let dst = &mut out[j * ac..(j + 1) * ac];
                let sr = &src[row * ac..(row + 1) * ac];
                for (d, s) in dst.iter_mut().zip(sr) {
                    *d += *s;
                }
            }
            for (j, &c) in counts.iter().enumerate() {
                if c > 1 {
                    let inv = 1.0 / c as f64;
                    for d in &mut out[j * ac..(j + 1) * ac] {
                        *d *= inv;
                    }
                }
            }
        }
        self.push(value, Op::ScatterMean(a, index, Arc::new(counts)))
    }

    /// Fused edge-input construction: row k of the result is
    /// `[edge_attrs[k], nodes[receivers[k]], nodes[senders[k]]]`.
    pub fn edge_concat(
        &mut self,
        edges: Var,
        nodes: Var,
        receivers: Arc<Vec<usize>>,
        senders: Arc<Vec<usize>>,
    ) -> Var {
        let (er, ec) = self.shape(edges);
        let (nr, nc) = self.shape(nodes);
        assert_eq!(er, receivers.len());
        assert_eq!(er, senders.len());
        let width = ec + 2 * nc;
        let edge_src = self.nodes[edges.0].value.as_slice().expect("standard layout");
        let node_src = self.nodes[nodes.0].value.as_slice().expect("standard layout");
        let mut value = Array2::zeros((er, width));
        {
            let out = value.as_slice_mut().expect("standard layout");
            for k in 0..er {
                let r = receivers[k];
                let s = senders[k];
                assert!(r < nr && s < nr, "edge endpoint out of range");
                let row = &mut out[k * width..(k + 1) * width];
                row[0..ec].copy_from_slice(&edge_src[k * ec..(k + 1) * ec]);
                row[ec..ec + nc].copy_from_slice(&node_src[r * nc..(r + 1) * nc]);
                row[ec + nc..].copy_from_slice(&node_src[s * nc..(s + 1) * nc]);
            }
        }
        self.push(value, Op::EdgeConcat { edges, nodes, receivers, senders })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = self.nodes[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let total = self.nodes[a.0].value.sum() / (r * c) as f64;
        self.push(Array2::from_elem((1, 1), total), Op::MeanAll(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x * x);
        self.push(value, Op::Square(a))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        assert_eq!(val.dim(), (1, 1), "scalar() on non-scalar value");
        val[[0, 0]]
    }

    /// Reverse-mode sweep from `loss` (a 1 x 1 value). Returns per-parameter
    /// gradients; parameters not on the computation path get `None`
    /// (interpreted as zero by accumulation).
    pub fn backward(&self, loss: Var) -> Result<TapeGrads> {
        if self.nodes.is_empty() {
            return Err(Error::Usage("backward called before any forward computation".into()));
        }
        if self.nodes[loss.0].value.dim() != (1, 1) {
            return Err(Error::Usage("backward requires a scalar (1x1) loss".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));
        let mut by_param: Vec<Option<Array2<f64>>> = (0..self.n_params).map(|_| None).collect();

        // Accumulate by moving the incoming array when the slot is empty.
        fn add_or_set(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }
        macro_rules! add_grad {
            ($slot:expr, $g:expr) => {
                add_or_set(&mut $slot, $g)
            };
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let g = if g.is_standard_layout() { g } else { g.as_standard_layout().into_owned() };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(idx) => {
                    let idx = *idx;
                    if idx >= by_param.len() {
                        by_param.resize_with(idx + 1, || None);
                    }
                    add_grad!(by_param[idx], g);
                }
                Op::MatMul(a, b) => {
                    let (ar, ac) = self.shape(*a);
                    let (br, bc) = self.shape(*b);
                    let mut ga = Array2::zeros((ar, ac));
                    general_mat_mul(1.0, &g, &self.nodes[b.0].value.t(), 0.0, &mut ga);
                    let mut gb = Array2::zeros((br, bc));
                    general_mat_mul(1.0, &self.nodes[a.0].value.t(), &g, 0.0, &mut gb);
                    add_grad!(grads[a.0], ga);
                    add_grad!(grads[b.0], gb);
                }
                Op::Linear { input, weights, bias, selu } => {
                    // With SELU fused, its derivative is recovered from the
                    // stored output y: lambda for y > 0, y + lambda*alpha
                    // otherwise (y = lambda*alpha*(e^x - 1) there).
                    let mut gpre = g;
                    if *selu {
                        let y = &self.nodes[i].value;
                        gpre.zip_mut_with(y, |gv, &yv| {
                            *gv *= if yv > 0.0 { SELU_LAMBDA } else { yv + SELU_LAMBDA * SELU_ALPHA };
                        });
                    }
                    let (ar, ac) = self.shape(*input);
                    let (wr, wc) = self.shape(*weights);
                    let mut ga = Array2::zeros((ar, ac));
                    general_mat_mul(1.0, &gpre, &self.nodes[weights.0].value.t(), 0.0, &mut ga);
                    let mut gw = Array2::zeros((wr, wc));
                    general_mat_mul(1.0, &self.nodes[input.0].value.t(), &gpre, 0.0, &mut gw);
                    let gb = gpre.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_grad!(grads[input.0], ga);
                    add_grad!(grads[weights.0], gw);
                    add_grad!(grads[bias.0], gb);
                }
                Op::Add(a, b) => {
                    add_grad!(grads[a.0], g.clone());
                    add_grad!(grads[b.0], g);
                }
                Op::AddRow(a, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    add_grad!(grads[a.0], g);
                    add_grad!(grads[row.0], grow);
                }
                Op::Sub(a, b) => {
                    let mut gb = g.clone();
                    gb.mapv_inplace(|x| -x);
                    add_grad!(grads[a.0], g);
                    add_grad!(grads[b.0], gb);
                }
                Op::Scale(a, c) => {
                    let mut ga = g;
                    let c = *c;
                    ga.mapv_inplace(|x| x * c);
                    add_grad!(grads[a.0], ga);
                }
                Op::ScaleRows(a, w) => {
                    let mut ga = g;
                    for (mut row, &wi) in ga.rows_mut().into_iter().zip(w.iter()) {
                        row.mapv_inplace(|x| x * wi);
                    }
                    add_grad!(grads[a.0], ga);
                }
                Op::Selu(a) => {
                    let x = &self.nodes[a.0].value;
                    let mut ga = g;
                    ga.zip_mut_with(x, |gv, &xv| {
                        *gv *= if xv > 0.0 { SELU_LAMBDA } else { SELU_LAMBDA * SELU_ALPHA * xv.exp() };
                    });
                    add_grad!(grads[a.0], ga);
                }
                Op::LayerNorm(a, eps) => {
                    let x = &self.nodes[a.0].value;
                    let y = &self.nodes[i].value;
                    let (rows, cols) = x.dim();
                    let w = cols as f64;
                    let xs = x.as_slice().expect("standard layout");
                    let ys = y.as_slice().expect("standard layout");
                    let gs = g.as_slice().expect("standard layout");
                    let mut ga = Array2::zeros((rows, cols));
                    {
                        let out = ga.as_slice_mut().expect("standard layout");
                        for r in 0..rows {
                            let span = r * cols..(r + 1) * cols;
                            let xr = &xs[span.clone()];
                            let yr = &ys[span.clone()];
                            let gr = &gs[span.clone()];
                            let mean = xr.iter().sum::<f64>() / w;
                            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
                            let inv = 1.0 / (var + eps).sqrt();
                            let g_mean = gr.iter().sum::<f64>() / w;
                            let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / w;
                            for ((o, &gv), &yv) in out[span].iter_mut().zip(gr).zip(yr) {
                                *o = inv * (gv - g_mean - yv * gy_mean);
                            }
                        }
                    }
                    add_grad!(grads[a.0], ga);
                }
                Op::ConcatCols(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        let gp = g.slice(s![.., col..col + pc]).to_owned();
                        add_grad!(grads[p.0], gp);
                        col += pc;
                    }
                }
                Op::GatherRows(a, index) => {
                    let (ar, ac) = self.shape(*a);
                    let gsrc = g.as_slice().expect("standard layout");
                    let mut ga = Array2::zeros((ar, ac));
                    {
                        let out = ga.as_slice_mut().expect("standard layout");
                        for (row, &i) in index.iter().enumerate() {
                            let dst = &mut out[i * ac..(i + 1) * ac];
                            for (d, s) in dst.iter_mut().zip(&gsrc[row * ac..(row + 1) * ac]) {
                                *d += *s;
                            }
                        }
                    }
                    add_grad!(grads[a.0], ga);
                }
                Op::ScatterMean(a, index, counts) => {
                    let (ar, ac) = self.shape(*a);
                    let gsrc = g.as_slice().expect("standard layout");
                    let mut ga = Array2::zeros((ar, ac));
                    {
                        let out = ga.as_slice_mut().expect("standard layout");
                        for (row, &j) in index.iter().enumerate() {
                            let scale = 1.0 / counts[j] as f64;
                            let dst = &mut out[row * ac..(row + 1) * ac];
                            for (d, s) in dst.iter_mut().zip(&gsrc[j * ac..(j + 1) * ac]) {
                                *d += *s * scale;
                            }
                        }
                    }
                    add_grad!(grads[a.0], ga);
                }
                Op::EdgeConcat { edges, nodes, receivers, senders } => {
                    let ec = self.shape(*edges).1;
                    let (nr, nc) = self.shape(*nodes);
                    let width = ec + 2 * nc;
                    let gsrc = g.as_slice().expect("standard layout");
                    let mut ge = Array2::zeros((receivers.len(), ec));
                    let mut gn = Array2::zeros((nr, nc));
                    {
                        let ge_out = ge.as_slice_mut().expect("standard layout");
                        let gn_out = gn.as_slice_mut().expect("standard layout");
                        for k in 0..receivers.len() {
                            let row = &gsrc[k * width..(k + 1) * width];
                            ge_out[k * ec..(k + 1) * ec].copy_from_slice(&row[0..ec]);
                            let r = receivers[k];
                            for (d, s) in gn_out[r * nc..(r + 1) * nc].iter_mut().zip(&row[ec..ec + nc]) {
                                *d += *s;
                            }
                            let sdr = senders[k];
                            for (d, s) in gn_out[sdr * nc..(sdr + 1) * nc].iter_mut().zip(&row[ec + nc..]) {
                                *d += *s;
                            }
                        }
                    }
                    add_grad!(grads[edges.0], ge);
                    add_grad!(grads[nodes.0], gn);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    add_grad!(grads[a.0], ga);
                }
                Op::MeanAll(a) => {
                    let (r, c) = self.shape(*a);
                    let ga = Array2::from_elem((r, c), g[[0, 0]] / (r * c) as f64);
                    add_grad!(grads[a.0], ga);
                }
                Op::Abs(a) => {
                    let x = &self.nodes[a.0].value;
                    let mut ga = g;
                    ga.zip_mut_with(x, |gv, &xv| *gv *= if xv > 0.0 { 1.0 } else if xv < 0.0 { -1.0 } else { 0.0 });
                    add_grad!(grads[a.0], ga);
                }
                Op::Square(a) => {
                    let x = &self.nodes[a.0].value;
                    let mut ga = g;
                    ga.zip_mut_with(x, |gv, &xv| *gv *= 2.0 * xv);
                    add_grad!(grads[a.0], ga);
                }
            }
        }
        Ok(TapeGrads { by_param })
    }
}
