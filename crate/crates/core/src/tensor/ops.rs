use super::{numel, Tensor};
use crate::error::{Error, Result};

/// `c = a · b` for row/column-strided matrices, `a` is m×k and `b` is k×n.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    gemm_impl(m, k, n, a, rsa, csa, b, rsb, csb, c, 0.0);
}

/// `c += a · b`, same layout rules as [`gemm`].
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    gemm_impl(m, k, n, a, rsa, csa, b, rsb, csb, c, 1.0);
}

#[allow(clippy::too_many_arguments)]
fn gemm_impl(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
    beta: f64,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: callers pass buffers covering the strided extents; the
    // assertion above covers the output, the inputs are checked below.
    let last_a = (m as isize - 1) * rsa + (k as isize - 1) * csa;
    let last_b = (k as isize - 1) * rsb + (n as isize - 1) * csb;
    assert!(last_a >= 0 && (last_a as usize) < a.len());
    assert!(last_b >= 0 && (last_b as usize) < b.len());
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
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn last_dim(t: &Tensor) -> usize {
    *t.shape().last().unwrap()
}

impl Tensor {
    fn unary(
        &self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Tensor {
        let y: Vec<f64> = self.data().iter().map(|&x| f(x)).collect();
        let x = self.clone();
        let y_saved = y.clone();
        Tensor::from_op(self.shape().to_vec(), y, vec![self.clone()], move |g| {
            let gx = g
                .iter()
                .zip(x.data())
                .zip(&y_saved)
                .map(|((g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn exp(&self) -> Tensor {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn silu(&self) -> Tensor {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn softplus(&self) -> Tensor {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.unary(
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary(move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let y = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let y = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            |g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let y = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = g.iter().zip(b.data()).map(|(g, b)| g * b).collect();
                let gb = g.iter().zip(a.data()).map(|(g, a)| g * a).collect();
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    /// Adds `bias` (length = last dimension) to every trailing row.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let d = last_dim(self);
        if bias.shape() != [d] {
            return Err(Error::shape("add_bias", self.shape(), bias.shape()));
        }
        let mut y = self.to_vec();
        for row in y.chunks_mut(d) {
            row.iter_mut().zip(bias.data()).for_each(|(v, b)| *v += b);
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone(), bias.clone()],
            move |g| {
                let mut gb = vec![0.0; d];
                for row in g.chunks(d) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                vec![Some(g.to_vec()), Some(gb)]
            },
        ))
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        let n = self.len();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len();
        let s: f64 = self.data().iter().sum::<f64>() / n as f64;
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], move |g| {
            vec![Some(vec![g[0] / n as f64; n])]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Permutes axes: output axis `i` is input axis `perm[i]`.
    pub fn transpose_axes(&self, perm: &[usize]) -> Result<Tensor> {
        let rank = self.shape().len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != rank || check.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::InvalidShape(format!(
                "{perm:?} is not a permutation of {rank} axes"
            )));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let index = permutation_index(&in_shape, perm);
        let y = index.iter().map(|&i| self.data()[i]).collect();
        Ok(Tensor::from_op(out_shape, y, vec![self.clone()], move |g| {
            let mut gx = vec![0.0; g.len()];
            for (o, &i) in index.iter().enumerate() {
                gx[i] = g[o];
            }
            vec![Some(gx)]
        }))
    }

    /// Concatenates along the last axis; all leading dimensions must agree.
    pub fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidShape("concat of zero tensors".into()))?;
        let lead = &first.shape()[..first.shape().len() - 1];
        for p in parts {
            if &p.shape()[..p.shape().len() - 1] != lead {
                return Err(Error::shape("concat_last", first.shape(), p.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| last_dim(p)).collect();
        let total: usize = widths.iter().sum();
        let rows = numel(lead);
        let mut y = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                y.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(Tensor::from_op(
            shape,
            y,
            parts.iter().map(|&p| p.clone()).collect(),
            move |g| {
                let mut out: Vec<Vec<f64>> =
                    widths.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (o, &w) in out.iter_mut().zip(&widths) {
                        o.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                out.into_iter().map(Some).collect()
            },
        ))
    }

    /// Slice `start..start+len` of the last axis.
    pub fn narrow_last(&self, start: usize, len: usize) -> Result<Tensor> {
        let d = last_dim(self);
        if len == 0 || start + len > d {
            return Err(Error::InvalidShape(format!(
                "cannot take {start}..{} of last axis {d}",
                start + len
            )));
        }
        let rows = self.len() / d;
        let mut y = Vec::with_capacity(rows * len);
        for r in 0..rows {
            y.extend_from_slice(&self.data()[r * d + start..r * d + start + len]);
        }
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(Tensor::from_op(shape, y, vec![self.clone()], move |g| {
            let mut gx = vec![0.0; rows * d];
            for r in 0..rows {
                gx[r * d + start..r * d + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
            }
            vec![Some(gx)]
        }))
    }

    /// Row lookup: `table` is R×d, output is `idx.len()`×d.
    pub fn gather_rows(table: &Tensor, idx: &[usize], what: &'static str) -> Result<Tensor> {
        if table.shape().len() != 2 {
            return Err(Error::InvalidShape(format!(
                "gather table must be 2-D, got {:?}",
                table.shape()
            )));
        }
        let (r, d) = (table.shape()[0], table.shape()[1]);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Index {
                what,
                index: bad,
                len: r,
            });
        }
        let mut y = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            y.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
        }
        let idx = idx.to_vec();
        Ok(Tensor::from_op(
            vec![idx.len(), d],
            y,
            vec![table.clone()],
            move |g| {
                let mut gt = vec![0.0; r * d];
                for (row, &i) in idx.iter().enumerate() {
                    gt[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(&g[row * d..(row + 1) * d])
                        .for_each(|(a, b)| *a += b);
                }
                vec![Some(gt)]
            },
        ))
    }

    /// Standard 2-D matrix product.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, self.data(), k as isize, 1, b.data(), n as isize, 1, &mut c);
        let (a_t, b_t) = (self.clone(), b.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            c,
            vec![self.clone(), b.clone()],
            move |g| {
                let ga = a_t.requires_grad().then(|| {
                    // dA = dC · Bᵀ
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, n as isize, 1, b_t.data(), 1, n as isize, &mut ga);
                    ga
                });
                let gb = b_t.requires_grad().then(|| {
                    // dB = Aᵀ · dC
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, a_t.data(), 1, k as isize, g, n as isize, 1, &mut gb);
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// Affine map over the last axis: `x · wᵀ + bias`, with `w` shaped
    /// out×in. Leading axes are treated as rows.
    pub fn linear(&self, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let k = last_dim(self);
        if w.shape().len() != 2 || w.shape()[1] != k {
            return Err(Error::shape("linear", self.shape(), w.shape()));
        }
        let n = w.shape()[0];
        if let Some(b) = bias {
            if b.shape() != [n] {
                return Err(Error::shape("linear bias", w.shape(), b.shape()));
            }
        }
        let m = self.len() / k;
        let mut y = vec![0.0; m * n];
        if let Some(b) = bias {
            for row in y.chunks_mut(n) {
                row.copy_from_slice(b.data());
            }
        }
        gemm_acc(m, k, n, self.data(), k as isize, 1, w.data(), 1, k as isize, &mut y);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let (x_t, w_t) = (self.clone(), w.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(shape, y, parents, move |g| {
            let gx = x_t.requires_grad().then(|| {
                let mut gx = vec![0.0; m * k];
                gemm(m, n, k, g, n as isize, 1, w_t.data(), k as isize, 1, &mut gx);
                gx
            });
            let gw = w_t.requires_grad().then(|| {
                let mut gw = vec![0.0; n * k];
                gemm(n, m, k, g, 1, n as isize, x_t.data(), k as isize, 1, &mut gw);
                gw
            });
            let mut out = vec![gx, gw];
            if has_bias {
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                out.push(Some(gb));
            }
            out
        }))
    }

    /// Standardizes each trailing row then applies `gamma`/`beta`.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let d = last_dim(self);
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::shape("layer_norm", self.shape(), gamma.shape()));
        }
        if !(eps > 0.0) {
            return Err(Error::Contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let rows = self.len() / d;
        let mut xhat = vec![0.0; self.len()];
        let mut inv_std = vec![0.0; rows];
        let mut y = vec![0.0; self.len()];
        for r in 0..rows {
            let x = &self.data()[r * d..(r + 1) * d];
            let mean = x.iter().sum::<f64>() / d as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (x[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gamma.data()[j] + beta.data()[j];
            }
        }
        let gamma_t = gamma.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let gm = gamma_t.data();
                let mut gx = vec![0.0; rows * d];
                let mut gg = vec![0.0; d];
                let mut gb = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum_gh = 0.0;
                    let mut sum_ghx = 0.0;
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                        gb[j] += gr[j];
                        let gh = gr[j] * gm[j];
                        sum_gh += gh;
                        sum_ghx += gh * hr[j];
                    }
                    let is = inv_std[r];
                    for j in 0..d {
                        let gh = gr[j] * gm[j];
                        gx[r * d + j] =
                            is * (gh - sum_gh / d as f64 - hr[j] * sum_ghx / d as f64);
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            },
        ))
    }

    /// Softmax over a 1-D tensor restricted to `mask`; masked-out entries
    /// are exactly zero.
    pub fn softmax_masked(&self, mask: &[bool]) -> Result<Tensor> {
        if self.shape().len() != 1 || mask.len() != self.len() {
            return Err(Error::shape("softmax_masked", self.shape(), &[mask.len()]));
        }
        let probs = masked_softmax_values(self.data(), mask)?;
        let saved = probs.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            probs,
            vec![self.clone()],
            move |g| {
                let dot: f64 = g.iter().zip(&saved).map(|(g, p)| g * p).sum();
                vec![Some(saved.iter().zip(g).map(|(p, g)| p * (g - dot)).collect())]
            },
        ))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub(crate) fn masked_softmax_values(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateNeighborhood(
            "softmax mask has no active entry".into(),
        ));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

/// For each output position (row-major over the permuted shape), the flat
/// index of the source element.
fn permutation_index(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = in_shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = numel(in_shape);
    let mut index = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..total {
        index.push(src);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            src += strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    index
}
