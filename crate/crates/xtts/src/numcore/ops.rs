//! Primitive tensor operations. Each op computes its forward value eagerly
//! and, when an input is tracked, records its backward rule on the tape.

use std::rc::Rc;

use super::tape::{attach, common_tape, node_id, push_node, GradBuf, NumError};
use super::tensor::{Real, Tensor};

type BackwardFn = Box<dyn FnOnce(&[Real], &mut GradBuf)>;

/// Attach `out` to the inputs' tape when tracking is active.
fn finish(
    op: &'static str,
    inputs: &[&Tensor],
    mut out: Tensor,
    make_backward: impl FnOnce() -> BackwardFn,
) -> Result<Tensor, NumError> {
    if let Some(tape) = common_tape(op, inputs)? {
        let id = push_node(&tape, make_backward())?;
        attach(&mut out, tape, id);
    }
    Ok(out)
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// How the right operand of an elementwise op maps onto the left one.
#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    Scalar,
    /// rhs is one row, repeated across the rows of lhs.
    Row,
}

fn bcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast, NumError> {
    if a.rows() == b.rows() && a.cols() == b.cols() {
        Ok(Bcast::Same)
    } else if b.len() == 1 {
        Ok(Bcast::Scalar)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(Bcast::Row)
    } else {
        Err(shape_err(op, a, b))
    }
}

fn binary_elementwise(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    fwd: impl Fn(Real, Real) -> Real,
    // (grad_out, a_i, b_i) -> (contribution to da, contribution to db)
    bwd: impl Fn(Real, Real, Real) -> (Real, Real) + 'static,
) -> Result<Tensor, NumError> {
    let kind = bcast_kind(op, a, b)?;
    let cols = a.cols();
    let bv = b.values();
    let pick_b = move |i: usize| match kind {
        Bcast::Same => bv[i],
        Bcast::Scalar => bv[0],
        Bcast::Row => bv[i % cols],
    };
    let out_values: Vec<Real> = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| fwd(x, pick_b(i)))
        .collect();
    let out = Tensor::from_vec(a.shape(), out_values);

    let (a_id, b_id) = (node_id(a), node_id(b));
    let (a_len, b_len) = (a.len(), b.len());
    let (a_data, b_data) = (Rc::clone(&a.data), Rc::clone(&b.data));
    finish(op, &[a, b], out, move || {
        Box::new(move |g, buf| {
            let bval = |i: usize| match kind {
                Bcast::Same => b_data.values[i],
                Bcast::Scalar => b_data.values[0],
                Bcast::Row => b_data.values[i % cols],
            };
            if let Some(id) = a_id {
                buf.add(id, a_len, |i| bwd(g[i], a_data.values[i], bval(i)).0);
            }
            if let Some(id) = b_id {
                // Reduce over broadcast positions.
                buf.add(id, b_len, |j| {
                    let mut acc = 0.0;
                    match kind {
                        Bcast::Same => {
                            acc = bwd(g[j], a_data.values[j], bval(j)).1;
                        }
                        Bcast::Scalar => {
                            for i in 0..a_len {
                                acc += bwd(g[i], a_data.values[i], bval(i)).1;
                            }
                        }
                        Bcast::Row => {
                            let mut i = j;
                            while i < a_len {
                                acc += bwd(g[i], a_data.values[i], bval(i)).1;
                                i += cols;
                            }
                        }
                    }
                    acc
                });
            }
        })
    })
}

/// Elementwise addition; `b` may be the same shape, a scalar, or a single
/// row broadcast across the rows of `a`.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    binary_elementwise("add", a, b, |x, y| x + y, |g, _, _| (g, g))
}

/// Elementwise product, with the same broadcasting rules as `add`.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    binary_elementwise("mul", a, b, |x, y| x * y, |g, x, y| (g * y, g * x))
}

pub fn neg(a: &Tensor) -> Result<Tensor, NumError> {
    unary(a, "neg", |x| -x, |_, _| -1.0)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    binary_elementwise("sub", a, b, |x, y| x - y, |g, _, _| (g, -g))
}

fn unary(
    a: &Tensor,
    op: &'static str,
    fwd: impl Fn(Real) -> Real,
    // (x, y) -> dy/dx
    deriv: impl Fn(Real, Real) -> Real + 'static,
) -> Result<Tensor, NumError> {
    let out_values: Vec<Real> = a.values().iter().map(|&x| fwd(x)).collect();
    let out = Tensor::from_vec(a.shape(), out_values.clone());
    let a_id = node_id(a);
    let a_len = a.len();
    let a_data = Rc::clone(&a.data);
    finish(op, &[a], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = a_id {
                buf.add(id, a_len, |i| g[i] * deriv(a_data.values[i], out_values[i]));
            }
        })
    })
}

pub fn tanh(a: &Tensor) -> Result<Tensor, NumError> {
    unary(a, "tanh", |x| x.tanh(), |_, y| 1.0 - y * y)
}

pub fn sigmoid(a: &Tensor) -> Result<Tensor, NumError> {
    unary(a, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
}

pub fn exp(a: &Tensor) -> Result<Tensor, NumError> {
    unary(a, "exp", |x| x.exp(), |_, y| y)
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(a: &Tensor) -> Result<Tensor, NumError> {
    unary(
        a,
        "softplus",
        softplus_scalar,
        |x, _| sigmoid_scalar(x),
    )
}

pub fn recip(a: &Tensor) -> Result<Tensor, NumError> {
    unary(a, "recip", |x| 1.0 / x, |_, y| -y * y)
}

pub fn sigmoid_scalar(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(x: Real) -> Real {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Rank-2 matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", a, b));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    let (av, bv) = (a.values(), b.values());
    for i in 0..m {
        for p in 0..k {
            let x = av[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &bv[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    let out = Tensor::from_vec(&[m, n], out);

    let (a_id, b_id) = (node_id(a), node_id(b));
    let (a_data, b_data) = (Rc::clone(&a.data), Rc::clone(&b.data));
    finish("matmul", &[a, b], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = a_id {
                // dA = G · Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * b_data.values[p * n + j];
                        }
                    }
                }
                buf.add(id, m * k, |i| da[i]);
            }
            if let Some(id) = b_id {
                // dB = Aᵀ · G
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = a_data.values[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                buf.add(id, k * n, |i| db[i]);
            }
        })
    })
}

/// Concatenate along `axis` (0 = stack rows, 1 = extend columns).
/// Rank-1 inputs are treated as single rows for axis 0; an axis-1 concat of
/// all rank-1 inputs yields a rank-1 result.
pub fn concat(axis: usize, parts: &[&Tensor]) -> Result<Tensor, NumError> {
    if parts.is_empty() || axis > 1 {
        return Err(NumError::InvalidArg {
            op: "concat",
            msg: format!("axis {axis} with {} parts", parts.len()),
        });
    }
    let first = parts[0];
    let out = match axis {
        0 => {
            let cols = first.cols();
            let mut rows = 0;
            let mut values = Vec::new();
            for p in parts {
                if p.cols() != cols {
                    return Err(shape_err("concat", first, p));
                }
                rows += p.rows();
                values.extend_from_slice(p.values());
            }
            Tensor::from_vec(&[rows, cols], values)
        }
        _ => {
            let rows = first.rows();
            let all_rank1 = parts.iter().all(|p| p.shape().len() == 1);
            let total_cols: usize = parts.iter().map(|p| p.cols()).sum();
            for p in parts {
                if p.rows() != rows {
                    return Err(shape_err("concat", first, p));
                }
            }
            let mut values = vec![0.0; rows * total_cols];
            let mut col0 = 0;
            for p in parts {
                let c = p.cols();
                for r in 0..rows {
                    values[r * total_cols + col0..r * total_cols + col0 + c]
                        .copy_from_slice(&p.values()[r * c..(r + 1) * c]);
                }
                col0 += c;
            }
            if all_rank1 {
                Tensor::from_vec(&[total_cols], values)
            } else {
                Tensor::from_vec(&[rows, total_cols], values)
            }
        }
    };

    let ids: Vec<Option<usize>> = parts.iter().map(|p| node_id(p)).collect();
    let part_shapes: Vec<(usize, usize)> = parts.iter().map(|p| (p.rows(), p.cols())).collect();
    let out_cols = out.cols();
    finish("concat", parts, out, move || {
        Box::new(move |g, buf| {
            let mut offset = 0; // row offset (axis 0) or col offset (axis 1)
            for (idx, (r, c)) in part_shapes.iter().enumerate() {
                let (r, c) = (*r, *c);
                if let Some(id) = ids[idx] {
                    if axis == 0 {
                        let base = offset * c;
                        buf.add(id, r * c, |i| g[base + i]);
                    } else {
                        let col0 = offset;
                        buf.add(id, r * c, |i| {
                            let (row, col) = (i / c, i % c);
                            g[row * out_cols + col0 + col]
                        });
                    }
                }
                offset += if axis == 0 { r } else { c };
            }
        })
    })
}

/// Contiguous range along `axis`; rank-1 tensors slice along axis 0.
pub fn slice(t: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor, NumError> {
    let rank = t.shape().len();
    let bad = |msg: String| NumError::InvalidArg { op: "slice", msg };
    if start >= end {
        return Err(bad(format!("empty range {start}..{end}")));
    }
    let out = match (rank, axis) {
        (1, 0) => {
            if end > t.shape()[0] {
                return Err(bad(format!("{start}..{end} out of {}", t.shape()[0])));
            }
            Tensor::from_vec(&[end - start], t.values()[start..end].to_vec())
        }
        (2, 0) => {
            let (rows, cols) = (t.shape()[0], t.shape()[1]);
            if end > rows {
                return Err(bad(format!("{start}..{end} out of {rows} rows")));
            }
            Tensor::from_vec(
                &[end - start, cols],
                t.values()[start * cols..end * cols].to_vec(),
            )
        }
        (2, 1) => {
            let (rows, cols) = (t.shape()[0], t.shape()[1]);
            if end > cols {
                return Err(bad(format!("{start}..{end} out of {cols} cols")));
            }
            let mut values = Vec::with_capacity(rows * (end - start));
            for r in 0..rows {
                values.extend_from_slice(&t.values()[r * cols + start..r * cols + end]);
            }
            Tensor::from_vec(&[rows, end - start], values)
        }
        _ => return Err(bad(format!("axis {axis} on rank-{rank} tensor"))),
    };

    let t_id = node_id(t);
    let t_len = t.len();
    let cols = t.cols();
    let out_cols = end - start;
    finish("slice", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                buf.add(id, t_len, |i| match (rank, axis) {
                    (1, 0) => {
                        if i >= start && i < end {
                            g[i - start]
                        } else {
                            0.0
                        }
                    }
                    (2, 0) => {
                        let row = i / cols;
                        if row >= start && row < end {
                            g[(row - start) * cols + (i % cols)]
                        } else {
                            0.0
                        }
                    }
                    _ => {
                        let (row, col) = (i / cols, i % cols);
                        if col >= start && col < end {
                            g[row * out_cols + (col - start)]
                        } else {
                            0.0
                        }
                    }
                });
            }
        })
    })
}

/// Single row of a rank-2 tensor as `[1, cols]`.
pub fn row(t: &Tensor, i: usize) -> Result<Tensor, NumError> {
    slice(t, 0, i, i + 1)
}

/// Same storage, new shape.
pub fn reshape(t: &Tensor, shape: &[usize]) -> Result<Tensor, NumError> {
    if shape.iter().product::<usize>() != t.len() {
        return Err(NumError::InvalidArg {
            op: "reshape",
            msg: format!("cannot view {:?} as {:?}", t.shape(), shape),
        });
    }
    let out = Tensor::from_vec(shape, t.values().to_vec());
    let t_id = node_id(t);
    let t_len = t.len();
    finish("reshape", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                buf.add(id, t_len, |i| g[i]);
            }
        })
    })
}

/// Softmax over the last axis (whole vector for rank 1, per row for rank 2).
pub fn softmax(t: &Tensor) -> Result<Tensor, NumError> {
    let (rows, cols) = (t.rows(), t.cols());
    let mut values = vec![0.0; t.len()];
    for r in 0..rows {
        let xs = &t.values()[r * cols..(r + 1) * cols];
        let max = xs.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let mut sum = 0.0;
        for (o, &x) in values[r * cols..(r + 1) * cols].iter_mut().zip(xs) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in &mut values[r * cols..(r + 1) * cols] {
            *o /= sum;
        }
    }
    let out = Tensor::from_vec(t.shape(), values.clone());

    let t_id = node_id(t);
    finish("softmax", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                let mut dx = vec![0.0; values.len()];
                for r in 0..rows {
                    let y = &values[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let dot: Real = y.iter().zip(gr).map(|(&yi, &gi)| yi * gi).sum();
                    for c in 0..cols {
                        dx[r * cols + c] = y[c] * (gr[c] - dot);
                    }
                }
                buf.add(id, dx.len(), |i| dx[i]);
            }
        })
    })
}

pub fn sum_all(t: &Tensor) -> Result<Tensor, NumError> {
    let s: Real = t.values().iter().sum();
    let out = Tensor::scalar(s);
    let t_id = node_id(t);
    let t_len = t.len();
    finish("sum", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                buf.add(id, t_len, |_| g[0]);
            }
        })
    })
}

pub fn mean_all(t: &Tensor) -> Result<Tensor, NumError> {
    let n = t.len() as Real;
    let s: Real = t.values().iter().sum();
    let out = Tensor::scalar(s / n);
    let t_id = node_id(t);
    let t_len = t.len();
    finish("mean", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                buf.add(id, t_len, |_| g[0] / n);
            }
        })
    })
}

/// Reduce a rank-2 tensor along `axis` (0 → column sums, 1 → row sums).
pub fn sum_axis(t: &Tensor, axis: usize) -> Result<Tensor, NumError> {
    if t.shape().len() != 2 || axis > 1 {
        return Err(NumError::InvalidArg {
            op: "sum_axis",
            msg: format!("axis {axis} on shape {:?}", t.shape()),
        });
    }
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let out = if axis == 0 {
        let mut v = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                v[c] += t.values()[r * cols + c];
            }
        }
        Tensor::from_vec(&[cols], v)
    } else {
        let mut v = vec![0.0; rows];
        for r in 0..rows {
            v[r] = t.values()[r * cols..(r + 1) * cols].iter().sum();
        }
        Tensor::from_vec(&[rows], v)
    };
    let t_id = node_id(t);
    let t_len = t.len();
    finish("sum_axis", &[t], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                buf.add(id, t_len, |i| {
                    if axis == 0 {
                        g[i % cols]
                    } else {
                        g[i / cols]
                    }
                });
            }
        })
    })
}

fn reduction_pair(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    per_elem: impl Fn(Real, Real) -> Real,
    // (a_i, b_i) -> (d/da_i, d/db_i) of the per-element term
    deriv: impl Fn(Real, Real) -> (Real, Real) + 'static,
) -> Result<Tensor, NumError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(shape_err(op, a, b));
    }
    let n = a.len() as Real;
    let s: Real = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| per_elem(x, y))
        .sum();
    let out = Tensor::scalar(s / n);
    let (a_id, b_id) = (node_id(a), node_id(b));
    let (a_len, b_len) = (a.len(), b.len());
    let (a_data, b_data) = (Rc::clone(&a.data), Rc::clone(&b.data));
    finish(op, &[a, b], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = a_id {
                buf.add(id, a_len, |i| {
                    g[0] * deriv(a_data.values[i], b_data.values[i]).0 / n
                });
            }
            if let Some(id) = b_id {
                buf.add(id, b_len, |i| {
                    g[0] * deriv(a_data.values[i], b_data.values[i]).1 / n
                });
            }
        })
    })
}

/// Mean squared error over all elements.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    reduction_pair(
        "mse",
        a,
        b,
        |x, y| (x - y) * (x - y),
        |x, y| (2.0 * (x - y), -2.0 * (x - y)),
    )
}

/// Mean absolute error over all elements.
pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    reduction_pair(
        "l1",
        a,
        b,
        |x, y| (x - y).abs(),
        |x, y| {
            let s = (x - y).signum();
            (s, -s)
        },
    )
}

/// Mean binary cross-entropy of logits against {0,1}-ish targets,
/// computed in the numerically stable `max(x,0) - x·t + ln(1+e^(-|x|))` form.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor, NumError> {
    reduction_pair(
        "bce_with_logits",
        logits,
        targets,
        |x, t| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p(),
        |x, t| (sigmoid_scalar(x) - t, -x),
    )
}

/// Gather rows of `table` by id. Gradients scatter-add back into the table,
/// so rows never looked up receive exactly zero gradient.
pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor, NumError> {
    if table.shape().len() != 2 {
        return Err(NumError::InvalidArg {
            op: "embedding_lookup",
            msg: format!("table must be rank 2, got {:?}", table.shape()),
        });
    }
    let (rows, dim) = (table.shape()[0], table.shape()[1]);
    let mut values = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= rows {
            return Err(NumError::IdOutOfRange {
                op: "embedding_lookup",
                id,
                size: rows,
            });
        }
        values.extend_from_slice(&table.values()[id * dim..(id + 1) * dim]);
    }
    let out = Tensor::from_vec(&[ids.len(), dim], values);

    let t_id = node_id(table);
    let t_len = table.len();
    let ids = ids.to_vec();
    finish("embedding_lookup", &[table], out, move || {
        Box::new(move |g, buf| {
            if let Some(id) = t_id {
                let mut dt = vec![0.0; t_len];
                for (pos, &r) in ids.iter().enumerate() {
                    for c in 0..dim {
                        dt[r * dim + c] += g[pos * dim + c];
                    }
                }
                buf.add(id, t_len, |i| dt[i]);
            }
        })
    })
}

/// GRU cell parameters: gates are laid out `[reset | update | candidate]`
/// along the 3H axis.
#[derive(Clone)]
pub struct GruParams {
    pub w_ih: Tensor, // [input_dim, 3H]
    pub w_hh: Tensor, // [H, 3H]
    pub b_ih: Tensor, // [3H]
    pub b_hh: Tensor, // [3H]
}

impl GruParams {
    pub fn hidden_dim(&self) -> usize {
        self.w_hh.shape()[0]
    }
}

/// One GRU step: consumes input `x` `[1, I]` and state `h` `[1, H]`,
/// returns the next state `[1, H]`. Composed from primitives, so the
/// backward rule falls out of the tape.
pub fn gru_cell(x: &Tensor, h: &Tensor, p: &GruParams) -> Result<Tensor, NumError> {
    let hd = p.hidden_dim();
    let gi = add(&matmul(x, &p.w_ih)?, &p.b_ih)?;
    let gh = add(&matmul(h, &p.w_hh)?, &p.b_hh)?;
    let r = sigmoid(&add(
        &slice(&gi, 1, 0, hd)?,
        &slice(&gh, 1, 0, hd)?,
    )?)?;
    let z = sigmoid(&add(
        &slice(&gi, 1, hd, 2 * hd)?,
        &slice(&gh, 1, hd, 2 * hd)?,
    )?)?;
    let n = tanh(&add(
        &slice(&gi, 1, 2 * hd, 3 * hd)?,
        &mul(&r, &slice(&gh, 1, 2 * hd, 3 * hd)?)?,
    )?)?;
    // h' = n + z ⊙ (h − n)
    add(&n, &mul(&z, &sub(h, &n)?)?)
}
