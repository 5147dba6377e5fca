//! Reverse-mode automatic differentiation on dense row-major `f64` matrices.
//!
//! The tape records eagerly-evaluated tensor ops. `backward` emits the
//! vector-Jacobian products as *new tape ops*, so the returned gradients are
//! themselves differentiable: calling `backward` on a scalar built from
//! first-order gradients yields exact second-order derivatives. The training
//! losses need this because they differentiate through surface normals
//! (gradients of the SDF with respect to its input).
//!
//! `Tape` is single-threaded by design; parallel workloads build one tape per
//! work chunk and reduce the extracted gradients outside.

use std::sync::Arc;

use crate::geometry::GrayImage;

/// Plain dense matrix used for parameters and gradients outside the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(1, 1, vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// [m x n] + [1 x n]
    AddRow(Var, Var),
    /// [m x n] * [m x 1], broadcast across columns
    MulCol(Var, Var),
    /// [m x n] / [m x 1]
    DivCol(Var, Var),
    /// [m x 1] + [1 x n] -> [m x n]
    AddOuter(Var, Var),
    Scale(Var, f64),
    AddConst(Var, f64),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Sigmoid(Var),
    /// softplus(beta*x)/beta
    Softplus(Var, f64),
    Relu(Var),
    ClampMin(Var, f64),
    SumAll(Var),
    SumCols(Var),
    SumRows(Var),
    /// [1 x 1] -> [r x c]
    BroadcastScalar(Var),
    /// [m x 1] -> [m x n]
    RepeatCols(Var),
    /// [1 x n] -> [m x n]
    RepeatRows(Var),
    ConcatCols(Vec<Var>),
    /// Columns [start, end) of the input
    SliceCols(Var, usize, usize),
    /// Zero-pad `left` columns before and `right` after
    PadCols(Var, usize, usize),
    Reshape(Var),
    Transpose(Var),
    /// Inclusive product along each row
    CumprodRows(Var),
    CumsumRows(Var),
    RevCumsumRows(Var),
    /// Entries (row, col) of the input, as a [k x 1] column
    Gather(Var, Arc<Vec<(u32, u32)>>),
    /// [k x 1] scattered (accumulating) into a zero [r x c] matrix
    ScatterAdd(Var, Arc<Vec<(u32, u32)>>),
    /// Bilinear image sampling at coordinates (xs, ys); `dx`/`dy` give the
    /// order of the patchwise derivative being sampled (0..=1 each).
    Bilinear {
        img: Arc<GrayImage>,
        xs: Var,
        ys: Var,
        dx: u8,
        dy: u8,
    },
}

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Wengert list of eagerly evaluated matrix operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.idx()].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.idx()].cols
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.idx()];
        (n.rows, n.cols)
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.idx()].data
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let n = &self.nodes[v.idx()];
        assert_eq!((n.rows, n.cols), (1, 1), "expected scalar node");
        n.data[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.idx()];
        Tensor::new(n.rows, n.cols, n.data.clone())
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(data.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            data,
            op,
            needs_grad,
        });
        Var((self.nodes.len() - 1) as u32)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.idx()].needs_grad
    }

    /// Differentiable leaf (parameters, query points).
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.rows, t.cols, t.data.clone(), Op::Leaf, true)
    }

    /// Non-differentiable constant.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows, t.cols, t.data.clone(), Op::Leaf, false)
    }

    pub fn constant_data(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        self.push(rows, cols, data, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant_data(1, 1, vec![v])
    }

    pub fn zeros_const(&mut self, rows: usize, cols: usize) -> Var {
        self.constant_data(rows, cols, vec![0.0; rows * cols])
    }

    // ---- arithmetic -----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        assert_eq!(ka, kb, "matmul inner dimensions differ");
        let mut out = vec![0.0; m * n];
        matmul_kernel(
            m,
            ka,
            n,
            &self.nodes[a.idx()].data,
            &self.nodes[b.idx()].data,
            &mut out,
        );
        let g = self.ng(a) || self.ng(b);
        self.push(m, n, out, Op::Matmul(a, b), g)
    }

    fn zip_ew(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(b), (m, n), "elementwise shape mismatch");
        let data = self.nodes[a.idx()]
            .data
            .iter()
            .zip(self.nodes[b.idx()].data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let g = self.ng(a) || self.ng(b);
        self.push(m, n, data, op, g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_ew(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_ew(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_ew(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip_ew(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n));
        let mut data = self.nodes[a.idx()].data.clone();
        let r = &self.nodes[row.idx()].data;
        for chunk in data.chunks_exact_mut(n) {
            for (v, rv) in chunk.iter_mut().zip(r.iter()) {
                *v += rv;
            }
        }
        let g = self.ng(a) || self.ng(row);
        self.push(m, n, data, Op::AddRow(a, row), g)
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(col), (m, 1));
        let mut data = self.nodes[a.idx()].data.clone();
        let c = &self.nodes[col.idx()].data;
        for (i, chunk) in data.chunks_exact_mut(n).enumerate() {
            for v in chunk.iter_mut() {
                *v *= c[i];
            }
        }
        let g = self.ng(a) || self.ng(col);
        self.push(m, n, data, Op::MulCol(a, col), g)
    }

    pub fn div_col(&mut self, a: Var, col: Var) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(col), (m, 1));
        let mut data = self.nodes[a.idx()].data.clone();
        let c = &self.nodes[col.idx()].data;
        for (i, chunk) in data.chunks_exact_mut(n).enumerate() {
            for v in chunk.iter_mut() {
                *v /= c[i];
            }
        }
        let g = self.ng(a) || self.ng(col);
        self.push(m, n, data, Op::DivCol(a, col), g)
    }

    pub fn add_outer(&mut self, col: Var, row: Var) -> Var {
        let (m, cm) = self.shape(col);
        let (rn, n) = self.shape(row);
        assert_eq!((cm, rn), (1, 1), "add_outer wants [m x 1] and [1 x n]");
        let c = &self.nodes[col.idx()].data;
        let r = &self.nodes[row.idx()].data;
        let mut data = Vec::with_capacity(m * n);
        for &cv in c.iter() {
            for &rv in r.iter() {
                data.push(cv + rv);
            }
        }
        let g = self.ng(col) || self.ng(row);
        self.push(m, n, data, Op::AddOuter(col, row), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.idx()].data.iter().map(|&x| x * s).collect();
        let g = self.ng(a);
        self.push(m, n, data, Op::Scale(a, s), g)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.idx()].data.iter().map(|&x| x + c).collect();
        let g = self.ng(a);
        self.push(m, n, data, Op::AddConst(a, c), g)
    }

    fn map_ew(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.idx()].data.iter().map(|&x| f(x)).collect();
        let g = self.ng(a);
        self.push(m, n, data, op, g)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::cos, Op::Cos(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::ln, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map_ew(a, f64::abs, Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_ew(a, sigmoid_scalar, Op::Sigmoid(a))
    }

    /// `softplus(beta * x) / beta`, numerically stable.
    pub fn softplus(&mut self, a: Var, beta: f64) -> Var {
        self.map_ew(a, |x| softplus_scalar(x, beta), Op::Softplus(a, beta))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_ew(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        self.map_ew(a, |x| x.max(c), Op::ClampMin(a, c))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    // ---- reductions and broadcasts --------------------------------------

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.idx()].data.iter().sum();
        let g = self.ng(a);
        self.push(1, 1, vec![s], Op::SumAll(a), g)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / (m * n) as f64)
    }

    /// Row sums: [m x n] -> [m x 1].
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.idx()]
            .data
            .chunks_exact(n)
            .map(|row| row.iter().sum())
            .collect();
        let g = self.ng(a);
        self.push(m, 1, data, Op::SumCols(a), g)
    }

    /// Column sums: [m x n] -> [1 x n].
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut data = vec![0.0; n];
        for row in self.nodes[a.idx()].data.chunks_exact(n) {
            for (d, v) in data.iter_mut().zip(row.iter()) {
                *d += v;
            }
        }
        let _ = m;
        let g = self.ng(a);
        self.push(1, n, data, Op::SumRows(a), g)
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.scalar_value(a);
        let g = self.ng(a);
        self.push(
            rows,
            cols,
            vec![v; rows * cols],
            Op::BroadcastScalar(a),
            g,
        )
    }

    pub fn repeat_cols(&mut self, a: Var, n: usize) -> Var {
        let (m, c) = self.shape(a);
        assert_eq!(c, 1, "repeat_cols expects a column");
        let src = &self.nodes[a.idx()].data;
        let mut data = Vec::with_capacity(m * n);
        for &v in src.iter() {
            data.extend(std::iter::repeat(v).take(n));
        }
        let g = self.ng(a);
        self.push(m, n, data, Op::RepeatCols(a), g)
    }

    pub fn repeat_rows(&mut self, a: Var, m: usize) -> Var {
        let (r, n) = self.shape(a);
        assert_eq!(r, 1, "repeat_rows expects a row");
        let src = self.nodes[a.idx()].data.clone();
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend_from_slice(&src);
        }
        let g = self.ng(a);
        self.push(m, n, data, Op::RepeatRows(a), g)
    }

    // ---- structure -------------------------------------------------------

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.rows(parts[0]);
        let total: usize = parts.iter().map(|&p| self.cols(p)).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let n = self.cols(p);
                assert_eq!(self.rows(p), m, "concat_cols row mismatch");
                let src = &self.nodes[p.idx()].data[i * n..(i + 1) * n];
                data.extend_from_slice(src);
            }
        }
        let g = parts.iter().any(|&p| self.ng(p));
        self.push(m, total, data, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (m, n) = self.shape(a);
        assert!(start < end && end <= n);
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for row in self.nodes[a.idx()].data.chunks_exact(n) {
            data.extend_from_slice(&row[start..end]);
        }
        let g = self.ng(a);
        self.push(m, w, data, Op::SliceCols(a, start, end), g)
    }

    pub fn pad_cols(&mut self, a: Var, left: usize, right: usize) -> Var {
        let (m, n) = self.shape(a);
        let w = left + n + right;
        let mut data = vec![0.0; m * w];
        for (i, row) in self.nodes[a.idx()].data.chunks_exact(n).enumerate() {
            data[i * w + left..i * w + left + n].copy_from_slice(row);
        }
        let g = self.ng(a);
        self.push(m, w, data, Op::PadCols(a, left, right), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let (m, n) = self.shape(a);
        assert_eq!(m * n, rows * cols, "reshape must preserve element count");
        let data = self.nodes[a.idx()].data.clone();
        let g = self.ng(a);
        self.push(rows, cols, data, Op::Reshape(a), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let src = &self.nodes[a.idx()].data;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let g = self.ng(a);
        self.push(n, m, data, Op::Transpose(a), g)
    }

    // ---- scans -----------------------------------------------------------

    pub fn cumprod_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut data = self.nodes[a.idx()].data.clone();
        for row in data.chunks_exact_mut(n) {
            let mut acc = 1.0;
            for v in row.iter_mut() {
                acc *= *v;
                *v = acc;
            }
        }
        let g = self.ng(a);
        self.push(m, n, data, Op::CumprodRows(a), g)
    }

    pub fn cumsum_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut data = self.nodes[a.idx()].data.clone();
        for row in data.chunks_exact_mut(n) {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        let g = self.ng(a);
        self.push(m, n, data, Op::CumsumRows(a), g)
    }

    pub fn rev_cumsum_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let mut data = self.nodes[a.idx()].data.clone();
        for row in data.chunks_exact_mut(n) {
            let mut acc = 0.0;
            for v in row.iter_mut().rev() {
                acc += *v;
                *v = acc;
            }
        }
        let g = self.ng(a);
        self.push(m, n, data, Op::RevCumsumRows(a), g)
    }

    // ---- indexed ----------------------------------------------------------

    pub fn gather(&mut self, a: Var, positions: Arc<Vec<(u32, u32)>>) -> Var {
        let (m, n) = self.shape(a);
        let src = &self.nodes[a.idx()].data;
        let data = positions
            .iter()
            .map(|&(r, c)| {
                debug_assert!((r as usize) < m && (c as usize) < n);
                src[r as usize * n + c as usize]
            })
            .collect();
        let g = self.ng(a);
        let k = positions.len();
        self.push(k, 1, data, Op::Gather(a, positions), g)
    }

    pub fn scatter_add(
        &mut self,
        a: Var,
        positions: Arc<Vec<(u32, u32)>>,
        rows: usize,
        cols: usize,
    ) -> Var {
        assert_eq!(self.shape(a), (positions.len(), 1));
        let src = &self.nodes[a.idx()].data;
        let mut data = vec![0.0; rows * cols];
        for (&(r, c), &v) in positions.iter().zip(src.iter()) {
            data[r as usize * cols + c as usize] += v;
        }
        let g = self.ng(a);
        self.push(rows, cols, data, Op::ScatterAdd(a, positions), g)
    }

    /// Bilinear samples of `img` at `(xs, ys)` (elementwise over matching
    /// shapes). Coordinates outside the image are clamped to the border;
    /// validity is decided by the caller before loss assembly.
    pub fn bilinear_sample(&mut self, img: Arc<GrayImage>, xs: Var, ys: Var) -> Var {
        self.bilinear_impl(img, xs, ys, 0, 0)
    }

    fn bilinear_impl(&mut self, img: Arc<GrayImage>, xs: Var, ys: Var, dx: u8, dy: u8) -> Var {
        let (m, n) = self.shape(xs);
        assert_eq!(self.shape(ys), (m, n));
        let xd = &self.nodes[xs.idx()].data;
        let yd = &self.nodes[ys.idx()].data;
        let data = xd
            .iter()
            .zip(yd.iter())
            .map(|(&x, &y)| bilinear_deriv(&img, x, y, dx, dy))
            .collect();
        let g = self.ng(xs) || self.ng(ys);
        self.push(m, n, data, Op::Bilinear { img, xs, ys, dx, dy }, g)
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse-mode pass from the scalar `y`. Returns, for each requested
    /// var, the gradient node (or `None` when `y` does not depend on it).
    /// The emitted gradient subgraph is itself differentiable.
    pub fn backward(&mut self, y: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.shape(y), (1, 1), "backward expects a scalar output");
        let frontier = y.idx() + 1;
        let mut adjoint: Vec<Option<Var>> = vec![None; frontier];
        let seed = self.constant_scalar(1.0);
        adjoint[y.idx()] = Some(seed);

        for id in (0..frontier).rev() {
            let Some(grad) = adjoint[id] else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let out = Var(id as u32);
            self.emit_vjps(&op, out, grad, &mut adjoint);
        }

        wrt.iter()
            .map(|w| {
                adjoint.get(w.idx()).copied().flatten().filter(|_| {
                    // Vars created after `y` cannot influence it.
                    w.idx() < frontier
                })
            })
            .collect()
    }

    fn accumulate(&mut self, adjoint: &mut [Option<Var>], target: Var, contrib: Var) {
        if !self.nodes[target.idx()].needs_grad {
            return;
        }
        if target.idx() >= adjoint.len() {
            return;
        }
        adjoint[target.idx()] = Some(match adjoint[target.idx()] {
            None => contrib,
            Some(existing) => self.add(existing, contrib),
        });
    }

    /// Constant mask derived from a node's forward values.
    fn value_mask(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let (m, n) = self.shape(a);
        let data = self.nodes[a.idx()].data.iter().map(|&x| f(x)).collect();
        self.constant_data(m, n, data)
    }

    fn emit_vjps(&mut self, op: &Op, out: Var, g: Var, adjoint: &mut [Option<Var>]) {
        match *op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.ng(a) {
                    let bt = self.transpose(b);
                    let da = self.matmul(g, bt);
                    self.accumulate(adjoint, a, da);
                }
                if self.ng(b) {
                    let at = self.transpose(a);
                    let db = self.matmul(at, g);
                    self.accumulate(adjoint, b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adjoint, a, g);
                self.accumulate(adjoint, b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(adjoint, a, g);
                if self.ng(b) {
                    let db = self.neg(g);
                    self.accumulate(adjoint, b, db);
                }
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    let da = self.mul(g, b);
                    self.accumulate(adjoint, a, da);
                }
                if self.ng(b) {
                    let db = self.mul(g, a);
                    self.accumulate(adjoint, b, db);
                }
            }
            Op::Div(a, b) => {
                if self.ng(a) {
                    let da = self.div(g, b);
                    self.accumulate(adjoint, a, da);
                }
                if self.ng(b) {
                    let gy = self.mul(g, out);
                    let db0 = self.div(gy, b);
                    let db = self.neg(db0);
                    self.accumulate(adjoint, b, db);
                }
            }
            Op::AddRow(a, r) => {
                self.accumulate(adjoint, a, g);
                if self.ng(r) {
                    let dr = self.sum_rows(g);
                    self.accumulate(adjoint, r, dr);
                }
            }
            Op::MulCol(a, c) => {
                if self.ng(a) {
                    let da = self.mul_col(g, c);
                    self.accumulate(adjoint, a, da);
                }
                if self.ng(c) {
                    let ga = self.mul(g, a);
                    let dc = self.sum_cols(ga);
                    self.accumulate(adjoint, c, dc);
                }
            }
            Op::DivCol(a, c) => {
                if self.ng(a) {
                    let da = self.div_col(g, c);
                    self.accumulate(adjoint, a, da);
                }
                if self.ng(c) {
                    let gy = self.mul(g, out);
                    let s = self.sum_cols(gy);
                    let d0 = self.div(s, c);
                    let dc = self.neg(d0);
                    self.accumulate(adjoint, c, dc);
                }
            }
            Op::AddOuter(c, r) => {
                if self.ng(c) {
                    let dc = self.sum_cols(g);
                    self.accumulate(adjoint, c, dc);
                }
                if self.ng(r) {
                    let dr = self.sum_rows(g);
                    self.accumulate(adjoint, r, dr);
                }
            }
            Op::Scale(a, s) => {
                let da = self.scale(g, s);
                self.accumulate(adjoint, a, da);
            }
            Op::AddConst(a, _) => {
                self.accumulate(adjoint, a, g);
            }
            Op::Sin(a) => {
                let c = self.cos(a);
                let da = self.mul(g, c);
                self.accumulate(adjoint, a, da);
            }
            Op::Cos(a) => {
                let s = self.sin(a);
                let gs = self.mul(g, s);
                let da = self.neg(gs);
                self.accumulate(adjoint, a, da);
            }
            Op::Exp(a) => {
                let da = self.mul(g, out);
                self.accumulate(adjoint, a, da);
            }
            Op::Ln(a) => {
                let da = self.div(g, a);
                self.accumulate(adjoint, a, da);
            }
            Op::Sqrt(a) => {
                let gh = self.scale(g, 0.5);
                let da = self.div(gh, out);
                self.accumulate(adjoint, a, da);
            }
            Op::Abs(a) => {
                let sign = self.value_mask(a, |x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                let da = self.mul(g, sign);
                self.accumulate(adjoint, a, da);
            }
            Op::Sigmoid(a) => {
                // y' = y (1 - y)
                let one_minus = self.add_const_neg(out);
                let yy = self.mul(out, one_minus);
                let da = self.mul(g, yy);
                self.accumulate(adjoint, a, da);
            }
            Op::Softplus(a, beta) => {
                let sx = self.scale(a, beta);
                let sig = self.sigmoid(sx);
                let da = self.mul(g, sig);
                self.accumulate(adjoint, a, da);
            }
            Op::Relu(a) => {
                let mask = self.value_mask(a, |x| if x > 0.0 { 1.0 } else { 0.0 });
                let da = self.mul(g, mask);
                self.accumulate(adjoint, a, da);
            }
            Op::ClampMin(a, c) => {
                let mask = self.value_mask(a, |x| if x > c { 1.0 } else { 0.0 });
                let da = self.mul(g, mask);
                self.accumulate(adjoint, a, da);
            }
            Op::SumAll(a) => {
                let (m, n) = self.shape(a);
                let da = self.broadcast_scalar(g, m, n);
                self.accumulate(adjoint, a, da);
            }
            Op::SumCols(a) => {
                let (_, n) = self.shape(a);
                let da = self.repeat_cols(g, n);
                self.accumulate(adjoint, a, da);
            }
            Op::SumRows(a) => {
                let (m, _) = self.shape(a);
                let da = self.repeat_rows(g, m);
                self.accumulate(adjoint, a, da);
            }
            Op::BroadcastScalar(a) => {
                let da = self.sum_all(g);
                self.accumulate(adjoint, a, da);
            }
            Op::RepeatCols(a) => {
                let da = self.sum_cols(g);
                self.accumulate(adjoint, a, da);
            }
            Op::RepeatRows(a) => {
                let da = self.sum_rows(g);
                self.accumulate(adjoint, a, da);
            }
            Op::ConcatCols(ref parts) => {
                let parts = parts.clone();
                let mut start = 0;
                for p in parts {
                    let w = self.cols(p);
                    if self.ng(p) {
                        let dp = self.slice_cols(g, start, start + w);
                        self.accumulate(adjoint, p, dp);
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let (_, n) = self.shape(a);
                let da = self.pad_cols(g, start, n - end);
                self.accumulate(adjoint, a, da);
            }
            Op::PadCols(a, left, _right) => {
                let (_, n) = self.shape(a);
                let da = self.slice_cols(g, left, left + n);
                self.accumulate(adjoint, a, da);
            }
            Op::Reshape(a) => {
                let (m, n) = self.shape(a);
                let da = self.reshape(g, m, n);
                self.accumulate(adjoint, a, da);
            }
            Op::Transpose(a) => {
                let da = self.transpose(g);
                self.accumulate(adjoint, a, da);
            }
            Op::CumprodRows(a) => {
                // dx_k = revcumsum(g * y)_k / x_k, guarding zero entries:
                // rows past an exact zero carry zero product and zero
                // adjoint, so masking their contribution keeps the result
                // finite without changing reachable gradients.
                let gy = self.mul(g, out);
                let num = self.rev_cumsum_rows(gy);
                let mask = self.value_mask(a, |x| if x == 0.0 { 0.0 } else { 1.0 });
                let shift = self.value_mask(a, |x| if x == 0.0 { 1.0 } else { 0.0 });
                let safe_x = self.add(a, shift);
                let q = self.div(num, safe_x);
                let da = self.mul(q, mask);
                self.accumulate(adjoint, a, da);
            }
            Op::CumsumRows(a) => {
                let da = self.rev_cumsum_rows(g);
                self.accumulate(adjoint, a, da);
            }
            Op::RevCumsumRows(a) => {
                let da = self.cumsum_rows(g);
                self.accumulate(adjoint, a, da);
            }
            Op::Gather(a, ref pos) => {
                let (m, n) = self.shape(a);
                let da = self.scatter_add(g, pos.clone(), m, n);
                self.accumulate(adjoint, a, da);
            }
            Op::ScatterAdd(a, ref pos) => {
                let da = self.gather(g, pos.clone());
                self.accumulate(adjoint, a, da);
            }
            Op::Bilinear {
                ref img,
                xs,
                ys,
                dx,
                dy,
            } => {
                if self.ng(xs) && dx == 0 {
                    let gx = self.bilinear_impl(img.clone(), xs, ys, 1, dy);
                    let da = self.mul(g, gx);
                    self.accumulate(adjoint, xs, da);
                }
                if self.ng(ys) && dy == 0 {
                    let gy = self.bilinear_impl(img.clone(), xs, ys, dx, 1);
                    let da = self.mul(g, gy);
                    self.accumulate(adjoint, ys, da);
                }
                // Derivative order 2 in either axis is identically zero for
                // bilinear interpolation; those branches contribute nothing.
            }
        }
    }

    /// `1 - y` helper used by the sigmoid VJP.
    fn add_const_neg(&mut self, y: Var) -> Var {
        let n = self.neg(y);
        self.add_const(n, 1.0)
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus_scalar(x: f64, beta: f64) -> f64 {
    let bx = beta * x;
    if bx > 30.0 {
        x
    } else {
        (1.0 + bx.exp()).ln() / beta
    }
}

/// Bilinear interpolation of `img` (or its patchwise x/y derivative) at a
/// real coordinate, clamping to the border.
fn bilinear_deriv(img: &GrayImage, x: f64, y: f64, dx: u8, dy: u8) -> f64 {
    let w = img.width;
    let h = img.height;
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = (xc.floor() as usize).min(w - 1);
    let y0 = (yc.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let v00 = img.get(x0, y0);
    let v10 = img.get(x1, y0);
    let v01 = img.get(x0, y1);
    let v11 = img.get(x1, y1);
    match (dx, dy) {
        (0, 0) => (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11),
        (1, 0) => (1.0 - fy) * (v10 - v00) + fy * (v11 - v01),
        (0, 1) => (1.0 - fx) * (v01 - v00) + fx * (v11 - v10),
        (1, 1) => v11 - v10 - v01 + v00,
        _ => 0.0,
    }
}

/// C = A * B for row-major matrices. Rows are processed four at a time so the
/// inner loop reuses each B row from registers/L1.
pub fn matmul_kernel(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let (r0, rest) = c[i * n..].split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, rest) = rest.split_at_mut(n);
        let r3 = &mut rest[..n];
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let (f0, f1, f2, f3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            for j in 0..n {
                let bv = brow[j];
                r0[j] = f0.mul_add(bv, r0[j]);
                r1[j] = f1.mul_add(bv, r1[j]);
                r2[j] = f2.mul_add(bv, r2[j]);
                r3[j] = f3.mul_add(bv, r3[j]);
            }
        }
        i += 4;
    }
    while i < m {
        let row = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let f = arow[kk];
            for j in 0..n {
                row[j] = f.mul_add(brow[j], row[j]);
            }
        }
        i += 1;
    }
}
