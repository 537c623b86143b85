//! The fixed differentiable operation set for dense tensors.

use rand::Rng;

use super::{BackwardContext, BackwardOp, Var};
use crate::error::{Error, Result};
use crate::tensor::{matmul_at_kernel, matmul_bt_kernel, matmul_kernel, Tensor};

/// How the right operand of a binary op lines up with the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// 1×M against N×M.
    Row,
    /// N×1 against N×M.
    Col,
    /// 1×1 against anything.
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<Self> {
        if a == b {
            Ok(Broadcast::Same)
        } else if b == (1, 1) {
            Ok(Broadcast::Scalar)
        } else if b.0 == 1 && b.1 == a.1 {
            Ok(Broadcast::Row)
        } else if b.1 == 1 && b.0 == a.0 {
            Ok(Broadcast::Col)
        } else {
            Err(Error::dim(op, format!("{a:?} vs {b:?}")))
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, bcols: usize) -> usize {
        match self {
            Broadcast::Same => r * bcols + c,
            Broadcast::Row => c,
            Broadcast::Col => r,
            Broadcast::Scalar => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct BinaryBackward {
    kind: BinaryKind,
    bcast: Broadcast,
}

impl BackwardOp for BinaryBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let (rows, cols) = a.shape();
        let ga = ctx.needs_grad[0].then(|| match self.kind {
            BinaryKind::Add | BinaryKind::Sub => g.clone(),
            BinaryKind::Mul => {
                let mut out = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let bi = self.bcast.index(r, c, b.cols());
                        out.data_mut()[r * cols + c] = g.get(r, c) * b.data()[bi];
                    }
                }
                out
            }
        });
        let gb = ctx.needs_grad[1].then(|| {
            let mut out = Tensor::zeros(b.rows(), b.cols());
            for r in 0..rows {
                for c in 0..cols {
                    let bi = self.bcast.index(r, c, b.cols());
                    let gv = g.get(r, c);
                    out.data_mut()[bi] += match self.kind {
                        BinaryKind::Add => gv,
                        BinaryKind::Sub => -gv,
                        BinaryKind::Mul => gv * a.get(r, c),
                    };
                }
            }
            out
        });
        Ok(vec![ga, gb])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum UnaryKind {
    Relu,
    LeakyRelu(f64),
    Exp,
    Log,
    Scale(f64),
}

struct UnaryBackward(UnaryKind);

impl BackwardOp for UnaryBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let x = ctx.inputs[0];
        let g = ctx.grad.data();
        let out = ctx.output.data();
        let data: Vec<f64> = match self.0 {
            UnaryKind::Relu => x
                .data()
                .iter()
                .zip(g)
                .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                .collect(),
            UnaryKind::LeakyRelu(slope) => x
                .data()
                .iter()
                .zip(g)
                .map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv })
                .collect(),
            UnaryKind::Exp => out.iter().zip(g).map(|(o, gv)| o * gv).collect(),
            UnaryKind::Log => x.data().iter().zip(g).map(|(v, gv)| gv / v).collect(),
            UnaryKind::Scale(c) => g.iter().map(|gv| c * gv).collect(),
        };
        Ok(vec![Some(Tensor::new(x.rows(), x.cols(), data)?)])
    }
}

struct MatMulBackward;

impl BackwardOp for MatMulBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
        let (n, k) = a.shape();
        let m = b.cols();
        let ga = if ctx.needs_grad[0] {
            Some(Tensor::new(n, k, matmul_bt_kernel(g.data(), b.data(), n, k, m))?)
        } else {
            None
        };
        let gb = if ctx.needs_grad[1] {
            Some(Tensor::new(k, m, matmul_at_kernel(a.data(), g.data(), n, k, m))?)
        } else {
            None
        };
        Ok(vec![ga, gb])
    }
}

struct SumBackward;

impl BackwardOp for SumBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let x = ctx.inputs[0];
        let g = ctx.grad.data()[0];
        Ok(vec![Some(Tensor::filled(x.rows(), x.cols(), g))])
    }
}

struct LogSoftmaxBackward;

impl BackwardOp for LogSoftmaxBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        // d/dx_j = g_j - softmax_j * sum_k g_k
        let out = ctx.output;
        let g = ctx.grad;
        let (rows, cols) = out.shape();
        let mut res = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let gs: f64 = g.row(r).iter().sum();
            for c in 0..cols {
                res.set(r, c, g.get(r, c) - out.get(r, c).exp() * gs);
            }
        }
        Ok(vec![Some(res)])
    }
}

struct NllBackward {
    targets: Vec<usize>,
    mask: Vec<usize>,
}

impl BackwardOp for NllBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let x = ctx.inputs[0];
        let scale = -ctx.grad.data()[0] / self.mask.len() as f64;
        let mut res = Tensor::zeros(x.rows(), x.cols());
        for &i in &self.mask {
            let c = self.targets[i];
            res.data_mut()[i * x.cols() + c] += scale;
        }
        Ok(vec![Some(res)])
    }
}

struct DropoutBackward {
    kept: Vec<bool>,
    scale: f64,
}

impl BackwardOp for DropoutBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let g = ctx.grad;
        let data = g
            .data()
            .iter()
            .zip(&self.kept)
            .map(|(a, &k)| if k { a * self.scale } else { 0.0 })
            .collect();
        Ok(vec![Some(Tensor::new(g.rows(), g.cols(), data)?)])
    }
}

struct ConcatColsBackward {
    widths: Vec<usize>,
}

impl BackwardOp for ConcatColsBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let g = ctx.grad;
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.widths.len());
        for (&w, need) in self.widths.iter().zip(&ctx.needs_grad) {
            if *need {
                let mut part = Tensor::zeros(g.rows(), w);
                for r in 0..g.rows() {
                    part.data_mut()[r * w..(r + 1) * w]
                        .copy_from_slice(&g.row(r)[offset..offset + w]);
                }
                out.push(Some(part));
            } else {
                out.push(None);
            }
            offset += w;
        }
        Ok(out)
    }
}

/// Elementwise operations accepted by [`elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    LeakyRelu(f64),
    Exp,
    Log,
    Scale(f64),
}

/// Applies `op` to one (unary) or two (binary) inputs.
/// Keep flags for `len` elements: element `i` is dropped when the `i`-th
/// uniform 32-bit draw falls below `p·2³²`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<bool> {
    let mut draws = vec![0u32; len];
    rng.fill(&mut draws[..]);
    let threshold = (p * 4_294_967_296.0) as u64;
    draws.iter().map(|&d| u64::from(d) >= threshold).collect()
}

pub fn elementwise<'t>(op: Elementwise, inputs: &[Var<'t>]) -> Result<Var<'t>> {
    let arity = match op {
        Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
        _ => 1,
    };
    if inputs.len() != arity {
        return Err(Error::invalid(format!(
            "{op:?} takes {arity} inputs, got {}",
            inputs.len()
        )));
    }
    let x = inputs[0];
    match op {
        Elementwise::Add => x.add(inputs[1]),
        Elementwise::Sub => x.sub(inputs[1]),
        Elementwise::Mul => x.mul(inputs[1]),
        Elementwise::Relu => x.relu(),
        Elementwise::LeakyRelu(a) => x.leaky_relu(a),
        Elementwise::Exp => x.exp(),
        Elementwise::Log => x.log(),
        Elementwise::Scale(c) => x.scale(c),
    }
}

impl<'t> Var<'t> {
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        let (n, k) = a.shape();
        let (k2, m) = b.shape();
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("{n}x{k} · {k2}x{m}"),
            ));
        }
        let out = Tensor::new(n, m, matmul_kernel(a.data(), b.data(), n, k, m))?;
        self.tape.record("matmul", out, &[self, other], MatMulBackward)
    }

    fn binary(self, other: Var<'t>, kind: BinaryKind, name: &'static str) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        let bcast = Broadcast::resolve(name, a.shape(), b.shape())?;
        let (rows, cols) = a.shape();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let av = a.get(r, c);
                let bv = b.data()[bcast.index(r, c, b.cols())];
                out.push(match kind {
                    BinaryKind::Add => av + bv,
                    BinaryKind::Sub => av - bv,
                    BinaryKind::Mul => av * bv,
                });
            }
        }
        let out = Tensor::new(rows, cols, out)?;
        self.tape
            .record(name, out, &[self, other], BinaryBackward { kind, bcast })
    }

    /// `self + other`; `other` may be the same shape, a row, a column or a scalar.
    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Add`
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Sub`
    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    /// Hadamard product with the same broadcast rules as [`Var::add`].
    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops::Mul`
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    fn unary(self, kind: UnaryKind, name: &'static str) -> Result<Var<'t>> {
        let x = self.value();
        let out = match kind {
            UnaryKind::Relu => x.map(|v| v.max(0.0)),
            UnaryKind::LeakyRelu(s) => x.map(|v| if v > 0.0 { v } else { s * v }),
            UnaryKind::Exp => x.map(f64::exp),
            UnaryKind::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive input {bad}"),
                    });
                }
                x.map(f64::ln)
            }
            UnaryKind::Scale(c) => x.map(|v| c * v),
        };
        self.tape.record(name, out, &[self], UnaryBackward(kind))
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Relu, "relu")
    }

    pub fn leaky_relu(self, slope: f64) -> Result<Var<'t>> {
        self.unary(UnaryKind::LeakyRelu(slope), "leaky_relu")
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Exp, "exp")
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Log, "log")
    }

    pub fn scale(self, c: f64) -> Result<Var<'t>> {
        self.unary(UnaryKind::Scale(c), "scale")
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(self) -> Result<Var<'t>> {
        let s: f64 = self.value().data().iter().sum();
        self.tape.record("sum", Tensor::scalar(s), &[self], SumBackward)
    }

    /// Per-row log-softmax with max subtraction.
    pub fn row_log_softmax(self) -> Result<Var<'t>> {
        let x = self.value();
        let (rows, cols) = x.shape();
        if cols == 0 {
            return Err(Error::invalid("log_softmax over zero classes"));
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (c, v) in row.iter().enumerate() {
                out.set(r, c, v - lse);
            }
        }
        self.tape
            .record("log_softmax", out, &[self], LogSoftmaxBackward)
    }

    /// Mean negative log-likelihood over the rows listed in `mask`.
    pub fn nll_loss(self, targets: &[usize], mask: &[usize]) -> Result<Var<'t>> {
        let logp = self.value();
        let (rows, cols) = logp.shape();
        if mask.is_empty() {
            return Err(Error::invalid("nll_loss over an empty mask"));
        }
        if targets.len() != rows {
            return Err(Error::dim(
                "nll_loss",
                format!("{} targets for {rows} rows", targets.len()),
            ));
        }
        let mut total = 0.0;
        for &i in mask {
            if i >= rows {
                return Err(Error::OutOfBounds {
                    op: "nll_loss",
                    index: i,
                    size: rows,
                });
            }
            let t = targets[i];
            if t >= cols {
                return Err(Error::OutOfBounds {
                    op: "nll_loss",
                    index: t,
                    size: cols,
                });
            }
            total -= logp.get(i, t);
        }
        let loss = Tensor::scalar(total / mask.len() as f64);
        self.tape.record(
            "nll_loss",
            loss,
            &[self],
            NllBackward {
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
        )
    }

    /// Inverted dropout. Identity when `p == 0` or outside training.
    /// Draws follow [`dropout_mask`].
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, training: bool, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(self);
        }
        let x = self.value();
        let scale = 1.0 / (1.0 - p);
        let kept = dropout_mask(x.len(), p, rng);
        let data = x
            .data()
            .iter()
            .zip(&kept)
            .map(|(a, &k)| if k { a * scale } else { 0.0 })
            .collect();
        let out = Tensor::new(x.rows(), x.cols(), data)?;
        self.tape
            .record("dropout", out, &[self], DropoutBackward { kept, scale })
    }

    /// Horizontal concatenation of equal-height tensors.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = values[0].rows();
        if let Some(bad) = values.iter().find(|v| v.rows() != rows) {
            return Err(Error::dim(
                "concat_cols",
                format!("{} rows vs {rows}", bad.rows()),
            ));
        }
        let widths: Vec<usize> = values.iter().map(|v| v.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(r));
            }
        }
        let out = Tensor::new(rows, total, data)?;
        first
            .tape
            .record("concat_cols", out, parts, ConcatColsBackward { widths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::testing::{assert_gradients, fd_gradient_check};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        crate::testing::uniform(rows, cols, -1.0, 1.0, rng)
    }

    #[test]
    fn matmul_examples() {
        let tape = Tape::new();
        let i = tape.leaf(Tensor::eye(2));
        let b = tape.leaf(Tensor::from_rows(&[[3.0], [4.0]]));
        assert_eq!(i.matmul(b).unwrap().value().data(), &[3.0, 4.0]);
        let a = tape.leaf(Tensor::from_rows(&[[1.0, 2.0]]));
        assert_eq!(a.matmul(b).unwrap().value().data(), &[11.0]);
        assert!(matches!(b.matmul(b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn elementwise_examples() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[-1.0, 0.0, 2.0]]));
        assert_eq!(x.relu().unwrap().value().data(), &[0.0, 0.0, 2.0]);
        let y = tape.leaf(Tensor::from_rows(&[[-1.0]]));
        assert_eq!(
            elementwise(Elementwise::LeakyRelu(0.2), &[y]).unwrap().value().data(),
            &[-0.2]
        );
        let a = tape.leaf(Tensor::from_rows(&[[1.0, 2.0]]));
        let b = tape.leaf(Tensor::from_rows(&[[3.0, 4.0]]));
        assert_eq!(a.add(b).unwrap().value().data(), &[4.0, 6.0]);
        assert!(matches!(
            tape.leaf(Tensor::from_rows(&[[0.0]])).log(),
            Err(Error::Domain { .. })
        ));
        assert!(elementwise(Elementwise::Add, &[a]).is_err());
    }

    #[test]
    fn broadcast_shapes() {
        let tape = Tape::new();
        let m = tape.leaf(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let row = tape.leaf(Tensor::from_rows(&[[10.0, 20.0]]));
        let col = tape.leaf(Tensor::column(&[2.0, 3.0]));
        let s = tape.leaf(Tensor::scalar(0.5));
        assert_eq!(m.add(row).unwrap().value().data(), &[11.0, 22.0, 13.0, 24.0]);
        assert_eq!(m.mul(col).unwrap().value().data(), &[2.0, 4.0, 9.0, 12.0]);
        assert_eq!(m.mul(s).unwrap().value().data(), &[0.5, 1.0, 1.5, 2.0]);
        let bad = tape.leaf(Tensor::zeros(3, 3));
        assert!(m.add(bad).is_err());
    }

    #[test]
    fn log_softmax_examples() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[0.0, 0.0]]));
        let y = x.row_log_softmax().unwrap().value();
        let ln2 = std::f64::consts::LN_2;
        assert!((y.get(0, 0) + ln2).abs() < 1e-15 && (y.get(0, 1) + ln2).abs() < 1e-15);
        let big = tape.leaf(Tensor::from_rows(&[[1000.0, 0.0]]));
        let y = big.row_log_softmax().unwrap().value();
        assert!(y.get(0, 0).abs() < 1e-12);
        assert!((y.get(0, 1) + 1000.0).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = tape.leaf(random(3, 4, &mut rng));
        let y = x.row_log_softmax().unwrap().value();
        for r in 0..3 {
            let s: f64 = y.row(r).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_examples() {
        let tape = Tape::new();
        let ln2 = std::f64::consts::LN_2;
        let lp = tape.leaf(Tensor::from_rows(&[[-ln2, -ln2]]));
        let loss = lp.nll_loss(&[0], &[0]).unwrap().value().item().unwrap();
        assert!((loss - ln2).abs() < 1e-12);
        let perfect = tape.leaf(Tensor::from_rows(&[[0.0, -50.0]]));
        assert_eq!(perfect.nll_loss(&[0], &[0]).unwrap().value().item().unwrap(), 0.0);
        assert!(matches!(lp.nll_loss(&[0], &[]), Err(Error::InvalidArgument(_))));
        assert!(lp.nll_loss(&[2], &[0]).is_err());
    }

    #[test]
    fn dropout_examples() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = tape.leaf(Tensor::ones(1, 100_000));
        assert_eq!(x.dropout(0.0, true, &mut rng).unwrap().id(), x.id());
        assert_eq!(x.dropout(0.5, false, &mut rng).unwrap().id(), x.id());
        let y = x.dropout(0.5, true, &mut rng).unwrap().value();
        let mean = y.data().iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(x.dropout(1.0, true, &mut rng).is_err());
    }

    #[test]
    fn concat_splits_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[[1.0], [2.0]]).with_requires_grad(true));
        let b = tape.leaf(Tensor::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).with_requires_grad(true));
        let c = Var::concat_cols(&[a, b]).unwrap();
        assert_eq!(c.value().data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let w = tape.leaf(Tensor::from_rows(&[[1.0], [2.0], [3.0]]));
        c.matmul(w).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap().data(), &[1.0, 1.0]);
        assert_eq!(b.grad().unwrap().data(), &[2.0, 3.0, 2.0, 3.0]);
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(5, 4, &mut rng);
        let b = random(4, 3, &mut rng);
        let coef = random(5, 3, &mut rng);
        let report = fd_gradient_check(&[a, b], 1e-5, |tape, v| {
            let c = tape.constant(coef.clone());
            v[0].matmul(v[1])?.mul(c)?.sum()
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn every_elementwise_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random(4, 3, &mut rng);
        let b = random(4, 3, &mut rng);
        let row = random(1, 3, &mut rng);
        let col = random(4, 1, &mut rng);
        let pos = random(4, 3, &mut rng).map(|v| v.abs() + 0.5);
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].add(v[1])?.mul(v[0])?.sum());
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].sub(v[1])?.mul(v[1])?.sum());
        assert_gradients(&[a.clone(), row], |_, v| v[0].mul(v[1])?.mul(v[0])?.sum());
        assert_gradients(&[a.clone(), col], |_, v| v[0].add(v[1])?.mul(v[0])?.sum());
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].relu()?.mul(v[1])?.sum());
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].leaky_relu(0.2)?.mul(v[1])?.sum());
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].exp()?.mul(v[1])?.sum());
        assert_gradients(&[pos, b.clone()], |_, v| v[0].log()?.mul(v[1])?.sum());
        assert_gradients(&[a.clone(), b.clone()], |_, v| v[0].scale(-1.7)?.mul(v[1])?.sum());
        assert_gradients(&[a, b], |_, v| {
            Var::concat_cols(&[v[0], v[1]])?.mul(Var::concat_cols(&[v[1], v[0]])?)?.sum()
        });
    }

    #[test]
    fn softmax_nll_chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(6, 4, &mut rng);
        let targets = vec![0, 3, 1, 2, 2, 0];
        assert_gradients(&[x], |_, v| v[0].row_log_softmax()?.nll_loss(&targets, &[0, 2, 3, 5]));
    }

    #[test]
    fn dropout_gradient_uses_saved_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(1, 50).with_requires_grad(true));
        let y = x.dropout(0.3, true, &mut rng).unwrap();
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), y.value().data());
    }
}
