//! Reverse-mode differentiation over the handful of matrix primitives the
//! models need.
//!
//! Every forward call appends a node holding its output value and the
//! operands it read. [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients additively, so a value consumed by several ops
//! receives the sum of their contributions. A tape can be differentiated
//! once; record a fresh forward pass (or call [`Tape::reset`]) first.

use super::{Matrix, NumericError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    MulConst(Var, Matrix),
    SegmentSum { x: Var, segment: Vec<usize> },
    Gather { x: Var, index: Vec<usize> },
    ScaleRows(Var, Vec<f64>),
    MaxPoolRows { x: Var, argmax: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    LogSumExpRows { x: Var, weights: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    differentiated: bool,
}

/// Gradients indexed by [`Var`]; `None` for nodes the output does not
/// depend on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.differentiated = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var, NumericError> {
        if self.differentiated {
            return Err(NumericError::TapeConsumed);
        }
        if !value.is_finite() {
            return Err(NumericError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Result<Var, NumericError> {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a, b))
    }

    /// `x + 1 * bias` with a `1 x cols` bias.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericError> {
        let out = self.value(x).add_row_broadcast(self.value(bias))?;
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NumericError> {
        let out = self.value(x).relu();
        self.push(out, Op::Relu(x))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, mask: Matrix) -> Result<Var, NumericError> {
        let out = self.value(x).hadamard(&mask)?;
        self.push(out, Op::MulConst(x, mask))
    }

    /// Output row `j` is the sum of input rows `i` with `segment[i] == j`.
    pub fn segment_sum(
        &mut self,
        x: Var,
        segment: &[usize],
        n_out: usize,
    ) -> Result<Var, NumericError> {
        let xv = self.value(x);
        if segment.len() != xv.rows() {
            return Err(NumericError::ShapeMismatch {
                op: "segment_sum",
                left: (segment.len(), n_out),
                right: xv.shape(),
            });
        }
        let mut out = Matrix::zeros(n_out, xv.cols());
        for (i, &s) in segment.iter().enumerate() {
            if s >= n_out {
                return Err(NumericError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    len: n_out,
                });
            }
            for (o, &v) in out.row_mut(s).iter_mut().zip(xv.row(i)) {
                *o += v;
            }
        }
        self.push(
            out,
            Op::SegmentSum {
                x,
                segment: segment.to_vec(),
            },
        )
    }

    /// Output row `i` is a copy of input row `index[i]`.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var, NumericError> {
        let xv = self.value(x);
        let mut out = Matrix::zeros(index.len(), xv.cols());
        for (i, &s) in index.iter().enumerate() {
            if s >= xv.rows() {
                return Err(NumericError::IndexOutOfRange {
                    op: "gather",
                    index: s,
                    len: xv.rows(),
                });
            }
            out.row_mut(i).copy_from_slice(xv.row(s));
        }
        self.push(
            out,
            Op::Gather {
                x,
                index: index.to_vec(),
            },
        )
    }

    pub fn scale_rows(&mut self, x: Var, factors: &[f64]) -> Result<Var, NumericError> {
        let mut out = self.value(x).clone();
        if factors.len() != out.rows() {
            return Err(NumericError::ShapeMismatch {
                op: "scale_rows",
                left: (factors.len(), 1),
                right: out.shape(),
            });
        }
        for (r, &f) in factors.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        self.push(out, Op::ScaleRows(x, factors.to_vec()))
    }

    /// Columnwise max over `rows`; the gradient goes to the first argmax.
    pub fn max_pool_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NumericError> {
        let (out, argmax) = self.value(x).row_max_pool_with_argmax(rows)?;
        self.push(out, Op::MaxPoolRows { x, argmax })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_cols(&mats)?;
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_rows(&mats)?;
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Per-column stable log-sum-exp over rows: `(t x c) -> (1 x c)`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var, NumericError> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(NumericError::EmptyInput("logsumexp_rows"));
        }
        let (t, c) = xv.shape();
        let mut out = Matrix::zeros(1, c);
        let mut weights = Matrix::zeros(t, c);
        for col in 0..c {
            let column: Vec<f64> = (0..t).map(|r| xv.get(r, col)).collect();
            let lse = super::logsumexp(&column)?;
            out.set(0, col, lse);
            for (r, v) in column.iter().enumerate() {
                weights.set(r, col, (v - lse).exp());
            }
        }
        self.push(out, Op::LogSumExpRows { x, weights })
    }

    /// Propagates `seed` (the gradient of some scalar with respect to
    /// `output`) back to every recorded node.
    pub fn backward(&mut self, output: Var, seed: Matrix) -> Result<Gradients, NumericError> {
        if self.differentiated {
            return Err(NumericError::TapeConsumed);
        }
        if seed.shape() != self.value(output).shape() {
            return Err(NumericError::ShapeMismatch {
                op: "backward",
                left: self.value(output).shape(),
                right: seed.shape(),
            });
        }
        self.differentiated = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = g.matmul(&bv.transpose())?;
                    let gb = av.transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(x, bias) => {
                    accumulate(&mut grads, *bias, g.col_sums());
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Relu(x) => {
                    // subgradient 0 at the kink
                    let mask = node.value.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *x, g.hadamard(&mask)?);
                }
                Op::MulConst(x, mask) => {
                    accumulate(&mut grads, *x, g.hadamard(mask)?);
                }
                Op::SegmentSum { x, segment } => {
                    let mut gx = Matrix::zeros(segment.len(), g.cols());
                    for (i, &s) in segment.iter().enumerate() {
                        gx.row_mut(i).copy_from_slice(g.row(s));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Gather { x, index } => {
                    let mut gx = Matrix::zeros(self.value(*x).rows(), g.cols());
                    for (i, &s) in index.iter().enumerate() {
                        for (o, &v) in gx.row_mut(s).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ScaleRows(x, factors) => {
                    let mut gx = g.clone();
                    for (r, &f) in factors.iter().enumerate() {
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= f);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::MaxPoolRows { x, argmax } => {
                    let mut gx = Matrix::zeros(self.value(*x).rows(), g.cols());
                    for (c, &r) in argmax.iter().enumerate() {
                        gx.set(r, c, gx.get(r, c) + g.get(0, c));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Matrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        let cols = g.cols();
                        let gp = Matrix::from_vec(
                            h,
                            cols,
                            g.data()[off * cols..(off + h) * cols].to_vec(),
                        )?;
                        off += h;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::LogSumExpRows { x, weights } => {
                    let mut gx = weights.clone();
                    for r in 0..gx.rows() {
                        for (v, &gc) in gx.row_mut(r).iter_mut().zip(g.row(0)) {
                            *v *= gc;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .add_assign(&g)
            .expect("gradient shape matches its node"),
        slot @ None => *slot = Some(g),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Relu(_) => "relu",
        Op::MulConst(..) => "mul_const",
        Op::SegmentSum { .. } => "segment_sum",
        Op::Gather { .. } => "gather",
        Op::ScaleRows(..) => "scale_rows",
        Op::MaxPoolRows { .. } => "max_pool_rows",
        Op::ConcatCols(_) => "concat_cols",
        Op::ConcatRows(_) => "concat_rows",
        Op::LogSumExpRows { .. } => "logsumexp_rows",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_gradient_is_upstream_times_transpose() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.0, -0.5]]);
        let g = Matrix::from_rows(&[[1.0, 0.0, 2.0], [-1.0, 1.0, 0.5]]);
        let mut t = Tape::new();
        let va = t.leaf(a.clone()).unwrap();
        let vb = t.leaf(b.clone()).unwrap();
        let out = t.matmul(va, vb).unwrap();
        let grads = t.backward(out, g.clone()).unwrap();
        assert_eq!(grads.get(va).unwrap(), &g.matmul(&b.transpose()).unwrap());
        assert_eq!(grads.get(vb).unwrap(), &a.transpose().matmul(&g).unwrap());
    }

    #[test]
    fn relu_gradient_zero_on_negative_inputs() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[-1.0, 0.0, 2.0]])).unwrap();
        let y = t.relu(x).unwrap();
        let grads = t.backward(y, Matrix::filled(1, 3, 1.0)).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[3.0]])).unwrap();
        let y = t.add(x, x).unwrap();
        let grads = t.backward(y, Matrix::filled(1, 1, 1.0)).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[1.0]])).unwrap();
        let y = t.relu(x).unwrap();
        t.backward(y, Matrix::filled(1, 1, 1.0)).unwrap();
        assert!(matches!(
            t.backward(y, Matrix::filled(1, 1, 1.0)),
            Err(NumericError::TapeConsumed)
        ));
        assert!(matches!(t.relu(x), Err(NumericError::TapeConsumed)));
        t.reset();
        let x = t.leaf(Matrix::from_rows(&[[1.0]])).unwrap();
        assert!(t.backward(x, Matrix::filled(1, 1, 1.0)).is_ok());
    }

    #[test]
    fn max_pool_routes_to_first_argmax() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[1.0, 7.0], [1.0, 2.0]])).unwrap();
        let y = t.max_pool_rows(x, &[0, 1]).unwrap();
        let grads = t.backward(y, Matrix::from_rows(&[[5.0, 3.0]])).unwrap();
        assert_eq!(
            grads.get(x).unwrap().to_rows(),
            vec![vec![5.0, 3.0], vec![0.0, 0.0]]
        );
    }
}
