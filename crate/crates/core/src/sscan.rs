//! Selective state-space block scanned along one axis.
//!
//! Per step, with `A = -exp(A_log)` diagonal per channel:
//!
//! ```text
//! (B_t, C_t, δ_t) = x_proj · u_t
//! Δ_t  = softplus(δ_t + dt_bias)
//! h_t  = exp(Δ_t A) ⊙ h_{t-1} + (Δ_t B_t) u_t,   h_0 = 0
//! y_t  = C_t · h_t + D ⊙ u_t
//! ```
//!
//! Because `A < 0` and `Δ > 0`, every discretized transition lies in (0, 1).

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{sigmoid, softplus};
use crate::tensor::{gemm, grad_enabled, no_grad, ParamStore, ParentGrads, Tensor};

pub const CONV_WIDTH: usize = 4;
/// Chunk length of the two-level scan.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Time,
    Space,
}

impl ScanAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanAxis::Time => "time",
            ScanAxis::Space => "space",
        }
    }
}

pub struct SsmParams<'a> {
    pub in_proj: &'a Tensor,
    pub conv_w: &'a Tensor,
    pub conv_b: &'a Tensor,
    pub x_proj: &'a Tensor,
    pub dt_bias: &'a Tensor,
    pub a_log: &'a Tensor,
    pub d: &'a Tensor,
    pub out_proj: &'a Tensor,
}

impl<'a> SsmParams<'a> {
    pub fn from_store(store: &'a ParamStore, prefix: &str) -> Result<Self> {
        let get = |name: &str| store.get(&format!("{prefix}.{name}"));
        Ok(Self {
            in_proj: get("in_proj")?,
            conv_w: get("conv_w")?,
            conv_b: get("conv_b")?,
            x_proj: get("x_proj")?,
            dt_bias: get("dt_bias")?,
            a_log: get("a_log")?,
            d: get("d")?,
            out_proj: get("out_proj")?,
        })
    }

    pub fn d_inner(&self) -> usize {
        self.a_log.shape()[0]
    }

    pub fn d_state(&self) -> usize {
        self.a_log.shape()[1]
    }
}

/// Registers the block's tensors under `prefix`. `A_log` starts at
/// `ln(1..=d_state)` per channel and `dt_bias` so that the initial step
/// sizes are log-uniform in `[1e-3, 1e-1]`.
pub fn init_ssm(
    store: &mut ParamStore,
    prefix: &str,
    d_model: usize,
    d_state: usize,
    expand: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    if d_model == 0 || d_state == 0 || expand == 0 {
        return Err(Error::Config("state-space dims must be positive".into()));
    }
    let d_inner = expand * d_model;
    let name = |n: &str| format!("{prefix}.{n}");
    store.insert(name("in_proj"), init::fan_in(rng, &[2 * d_inner, d_model], d_model))?;
    store.insert(name("conv_w"), init::fan_in(rng, &[d_inner, CONV_WIDTH], CONV_WIDTH))?;
    store.insert(name("conv_b"), init::fan_in(rng, &[d_inner], CONV_WIDTH))?;
    store.insert(name("x_proj"), init::fan_in(rng, &[2 * d_state + 1, d_inner], d_inner))?;
    let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
    let dt_bias: Vec<f64> = (0..d_inner)
        .map(|_| {
            let dt = rng.random_range(lo..hi).exp();
            // inverse softplus
            dt + (-(-dt).exp_m1()).ln()
        })
        .collect();
    store.insert(name("dt_bias"), Tensor::param(&[d_inner], dt_bias)?)?;
    let a_log: Vec<f64> = (0..d_inner)
        .flat_map(|_| (1..=d_state).map(|k| (k as f64).ln()))
        .collect();
    store.insert(name("a_log"), Tensor::param(&[d_inner, d_state], a_log)?)?;
    store.insert(name("d"), init::constant(&[d_inner], 1.0))?;
    store.insert(name("out_proj"), init::fan_in(rng, &[d_model, d_inner], d_inner))?;
    Ok(())
}

/// Sum of discretized transitions per (channel, state), for averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionAccumulator {
    pub d_inner: usize,
    pub d_state: usize,
    pub sum: Vec<f64>,
    pub count: usize,
}

impl TransitionAccumulator {
    pub fn new(d_inner: usize, d_state: usize) -> Self {
        Self {
            d_inner,
            d_state,
            sum: vec![0.0; d_inner * d_state],
            count: 0,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let c = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / c).collect()
    }
}

/// Batch-averaged discretized transitions of every scan layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTrace {
    /// (layer, axis, `[d_inner × d_state]` mean transition)
    pub layers: Vec<(usize, ScanAxis, usize, usize, Vec<f64>)>,
}

impl ScanTrace {
    /// CSV `layer,axis,channel,state,abar_mean`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "layer,axis,channel,state,abar_mean")?;
        for (layer, axis, d_inner, d_state, mean) in &self.layers {
            for c in 0..*d_inner {
                for k in 0..*d_state {
                    writeln!(w, "{layer},{},{c},{k},{:?}", axis.as_str(), mean[c * d_state + k])?;
                }
            }
        }
        Ok(())
    }
}

/// Depthwise causal convolution over axis 1 of `x` `[S, L, C]` with
/// weights `[C, K]`: `y[t] = b + Σ_j w[j] x[t - K + 1 + j]`, zero padded.
pub fn causal_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::InvalidShape(format!("conv input must be [S, L, C], got {shape:?}")));
    }
    let (s, l, c) = (shape[0], shape[1], shape[2]);
    if w.shape().len() != 2 || w.shape()[0] != c || b.shape() != [c] {
        return Err(Error::shape("causal_conv", &shape, w.shape()));
    }
    let k = w.shape()[1];
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![0.0; x.len()];
    for seq in 0..s {
        for t in 0..l {
            let row = (seq * l + t) * c;
            y[row..row + c].copy_from_slice(b.data());
            for j in 0..k {
                let Some(src_t) = (t + j + 1).checked_sub(k) else { continue };
                let src = (seq * l + src_t) * c;
                for ch in 0..c {
                    y[row + ch] += wd[ch * k + j] * xd[src + ch];
                }
            }
        }
    }
    let (x_t, w_t) = (x.clone(), w.clone());
    Ok(Tensor::from_op(shape, y, vec![x.clone(), w.clone(), b.clone()], move |g| {
        let (xd, wd) = (x_t.data(), w_t.data());
        let mut gx = vec![0.0; xd.len()];
        let mut gw = vec![0.0; wd.len()];
        let mut gb = vec![0.0; c];
        for seq in 0..s {
            for t in 0..l {
                let row = (seq * l + t) * c;
                for ch in 0..c {
                    gb[ch] += g[row + ch];
                }
                for j in 0..k {
                    let Some(src_t) = (t + j + 1).checked_sub(k) else { continue };
                    let src = (seq * l + src_t) * c;
                    for ch in 0..c {
                        gw[ch * k + j] += g[row + ch] * xd[src + ch];
                        gx[src + ch] += g[row + ch] * wd[ch * k + j];
                    }
                }
            }
        }
        vec![Some(gx), Some(gw), Some(gb)]
    }))
}

/// Selective scan over axis 1 of `u` `[S, L, d_inner]`. `xdbl` carries the
/// per-step projections `[S, L, 2·d_state + 1]` laid out as `[B | C | δ]`.
/// Runs a two-level scan: each chunk is scanned from a zero state while
/// tracking its cumulative decay, then corrected by the carried state.
pub fn selective_scan(
    u: &Tensor,
    xdbl: &Tensor,
    a_log: &Tensor,
    dt_bias: &Tensor,
    d: &Tensor,
    mut trace: Option<&mut TransitionAccumulator>,
) -> Result<Tensor> {
    let shape = u.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::InvalidShape(format!("scan input must be [S, L, C], got {shape:?}")));
    }
    let (s, l, di) = (shape[0], shape[1], shape[2]);
    if a_log.shape().len() != 2 || a_log.shape()[0] != di {
        return Err(Error::shape("selective_scan (A_log)", &shape, a_log.shape()));
    }
    let ds = a_log.shape()[1];
    let proj_w = 2 * ds + 1;
    if xdbl.shape() != [s, l, proj_w] {
        return Err(Error::shape("selective_scan (projections)", xdbl.shape(), &[s, l, proj_w]));
    }
    if dt_bias.shape() != [di] || d.shape() != [di] {
        return Err(Error::shape("selective_scan (dt_bias, D)", dt_bias.shape(), d.shape()));
    }
    let a: Vec<f64> = a_log.data().iter().map(|v| -v.exp()).collect();
    let (ud, xd, dtb, dd) = (u.data(), xdbl.data(), dt_bias.data(), d.data());

    // step sizes
    let mut delta = vec![0.0; s * l * di];
    for pos in 0..s * l {
        let dl = xd[pos * proj_w + 2 * ds];
        for c in 0..di {
            delta[pos * di + c] = softplus(dl + dtb[c]);
        }
    }

    // states and transitions are kept only when a backward pass may follow
    let keep = grad_enabled()
        && [u, xdbl, a_log, dt_bias, d].iter().any(|t| t.requires_grad());
    let stored = if keep { s * l * di * ds } else { 0 };
    let mut hs = vec![0.0; stored];
    let mut abars = vec![0.0; stored];
    let mut y = vec![0.0; s * l * di];
    let mut carry = vec![0.0; di * ds];
    let mut local = vec![0.0; di * ds];
    let mut decay = vec![0.0; di * ds];
    for seq in 0..s {
        carry.iter_mut().for_each(|v| *v = 0.0);
        for chunk_start in (0..l).step_by(CHUNK) {
            local.iter_mut().for_each(|v| *v = 0.0);
            decay.iter_mut().for_each(|v| *v = 1.0);
            let chunk_end = (chunk_start + CHUNK).min(l);
            for t in chunk_start..chunk_end {
                let pos = seq * l + t;
                let bm = &xd[pos * proj_w..pos * proj_w + ds];
                let cm = &xd[pos * proj_w + ds..pos * proj_w + 2 * ds];
                for c in 0..di {
                    let dt = delta[pos * di + c];
                    let uc = ud[pos * di + c];
                    let mut acc = 0.0;
                    for k in 0..ds {
                        let i = c * ds + k;
                        let abar = (dt * a[i]).exp();
                        if let Some(tr) = trace.as_deref_mut() {
                            tr.sum[i] += abar;
                        }
                        local[i] = abar * local[i] + dt * bm[k] * uc;
                        decay[i] *= abar;
                        let h = local[i] + decay[i] * carry[i];
                        if keep {
                            hs[pos * di * ds + i] = h;
                            abars[pos * di * ds + i] = abar;
                        }
                        if t + 1 == chunk_end {
                            carry[i] = h;
                        }
                        acc += cm[k] * h;
                    }
                    y[pos * di + c] = acc + dd[c] * uc;
                }
            }
        }
    }
    if let Some(tr) = trace {
        tr.count += s * l;
    }

    let (u_t, x_t, dtb_t, d_t) = (u.clone(), xdbl.clone(), dt_bias.clone(), d.clone());
    let parents = vec![u.clone(), xdbl.clone(), a_log.clone(), dt_bias.clone(), d.clone()];
    Ok(Tensor::from_op(shape, y, parents, move |g| -> ParentGrads {
        let (ud, xd, dtb, dd) = (u_t.data(), x_t.data(), dtb_t.data(), d_t.data());
        let mut gu = vec![0.0; ud.len()];
        let mut gx = vec![0.0; xd.len()];
        let mut ga = vec![0.0; di * ds];
        let mut gdtb = vec![0.0; di];
        let mut gd = vec![0.0; di];
        let mut gh = vec![0.0; di * ds];
        for seq in 0..s {
            gh.iter_mut().for_each(|v| *v = 0.0);
            for t in (0..l).rev() {
                let pos = seq * l + t;
                let xrow = pos * proj_w;
                let mut gdelta_sum = 0.0;
                for c in 0..di {
                    let gy = g[pos * di + c];
                    let uc = ud[pos * di + c];
                    let dt = delta[pos * di + c];
                    gd[c] += gy * uc;
                    let mut gu_c = gy * dd[c];
                    let mut gdt = 0.0;
                    for k in 0..ds {
                        let i = c * ds + k;
                        let h = hs[pos * di * ds + i];
                        let h_prev = if t == 0 { 0.0 } else { hs[(pos - 1) * di * ds + i] };
                        let bk = xd[xrow + k];
                        let ck = xd[xrow + ds + k];
                        // y = Σ C h
                        gx[xrow + ds + k] += gy * h;
                        let ghi = gh[i] + gy * ck;
                        let abar = abars[pos * di * ds + i];
                        let g_abar = ghi * h_prev;
                        gdt += g_abar * abar * a[i] + ghi * bk * uc;
                        // dA/dA_log = A
                        ga[i] += g_abar * abar * dt * a[i];
                        gx[xrow + k] += ghi * dt * uc;
                        gu_c += ghi * dt * bk;
                        gh[i] = ghi * abar;
                    }
                    gu[pos * di + c] = gu_c;
                    let gpre = gdt * sigmoid(xd[xrow + 2 * ds] + dtb[c]);
                    gdtb[c] += gpre;
                    gdelta_sum += gpre;
                }
                gx[xrow + 2 * ds] += gdelta_sum;
            }
        }
        vec![Some(gu), Some(gx), Some(ga), Some(gdtb), Some(gd)]
    }))
}

/// Sequential oracle for the scan of one sequence `u` `[L × d_inner]`:
/// projections are formed step by step and the recurrence is unrolled
/// directly from the definitions.
pub fn selective_scan_ref(u: &[f64], params: &SsmParams<'_>) -> Result<Vec<f64>> {
    let (di, ds) = (params.d_inner(), params.d_state());
    if u.is_empty() || u.len() % di != 0 {
        return Err(Error::InvalidShape(format!(
            "scan input of {} values is not [L × {di}]",
            u.len()
        )));
    }
    let proj_w = 2 * ds + 1;
    if params.x_proj.shape() != [proj_w, di] {
        return Err(Error::shape("selective_scan_ref (x_proj)", params.x_proj.shape(), &[proj_w, di]));
    }
    let l = u.len() / di;
    let wx = params.x_proj.data();
    let a_log = params.a_log.data();
    let mut h = vec![0.0; di * ds];
    let mut y = Vec::with_capacity(u.len());
    for t in 0..l {
        let ut = &u[t * di..(t + 1) * di];
        let mut proj = vec![0.0; proj_w];
        gemm(1, di, proj_w, ut, di as isize, 1, wx, 1, di as isize, &mut proj);
        let (bm, cm, dl) = (&proj[..ds], &proj[ds..2 * ds], proj[2 * ds]);
        for c in 0..di {
            let dt = softplus(dl + params.dt_bias.data()[c]);
            let mut acc = 0.0;
            for k in 0..ds {
                let i = c * ds + k;
                let abar = (dt * -a_log[i].exp()).exp();
                h[i] = abar * h[i] + dt * bm[k] * ut[c];
                acc += cm[k] * h[i];
            }
            y.push(acc + params.d.data()[c] * ut[c]);
        }
    }
    Ok(y)
}

/// Production path for one sequence: batched projection plus the
/// two-level scan kernel.
pub fn selective_scan_fast(u: &[f64], params: &SsmParams<'_>) -> Result<Vec<f64>> {
    let di = params.d_inner();
    if u.is_empty() || u.len() % di != 0 {
        return Err(Error::InvalidShape(format!(
            "scan input of {} values is not [L × {di}]",
            u.len()
        )));
    }
    let l = u.len() / di;
    no_grad(|| {
        let u = Tensor::new(&[1, l, di], u.to_vec())?;
        let xdbl = u.linear(params.x_proj, None)?;
        let y = selective_scan(&u, &xdbl, params.a_log, params.dt_bias, params.d, None)?;
        Ok(y.to_vec())
    })
}

/// Full block over a batch of sequences `[S, L, d_model]`.
pub fn mamba_sequences(
    z: &Tensor,
    params: &SsmParams<'_>,
    trace: Option<&mut TransitionAccumulator>,
) -> Result<Tensor> {
    if z.shape().len() != 3 {
        return Err(Error::InvalidShape(format!(
            "block input must be [S, L, d_model], got {:?}",
            z.shape()
        )));
    }
    let di = params.d_inner();
    let xz = z.linear(params.in_proj, None)?;
    let u = xz.narrow_last(0, di)?;
    let gate = xz.narrow_last(di, di)?;
    let u = causal_conv(&u, params.conv_w, params.conv_b)?.silu();
    let xdbl = u.linear(params.x_proj, None)?;
    let y = selective_scan(&u, &xdbl, params.a_log, params.dt_bias, params.d, trace)?;
    y.mul(&gate.silu())?.linear(params.out_proj, None)
}

/// One sequence `[L × d_model]`.
pub fn mamba_block(z_seq: &Tensor, params: &SsmParams<'_>) -> Result<Tensor> {
    let shape = z_seq.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::InvalidShape(format!("sequence must be [L, d], got {shape:?}")));
    }
    mamba_sequences(&z_seq.reshape(&[1, shape[0], shape[1]])?, params, None)?.reshape(&shape)
}

/// Scans `z` `[.., T, N, d]` along time (one sequence per node) or space
/// (one sequence per frame, nodes in index order).
pub fn mamba_over_axis(
    z: &Tensor,
    axis: ScanAxis,
    params: &SsmParams<'_>,
    trace: Option<&mut TransitionAccumulator>,
) -> Result<Tensor> {
    let shape = z.shape().to_vec();
    if shape.len() != 3 && shape.len() != 4 {
        return Err(Error::InvalidShape(format!(
            "axis scan input must be [T, N, d] or [B, T, N, d], got {shape:?}"
        )));
    }
    let batched = if shape.len() == 3 {
        z.reshape(&[1, shape[0], shape[1], shape[2]])?
    } else {
        z.clone()
    };
    let [b, t, n, d] = <[usize; 4]>::try_from(batched.shape()).unwrap();
    let out = match axis {
        ScanAxis::Time => {
            let seqs = batched.transpose_axes(&[0, 2, 1, 3])?.reshape(&[b * n, t, d])?;
            mamba_sequences(&seqs, params, trace)?
                .reshape(&[b, n, t, d])?
                .transpose_axes(&[0, 2, 1, 3])?
        }
        ScanAxis::Space => mamba_sequences(&batched.reshape(&[b * t, n, d])?, params, trace)?,
    };
    out.reshape(&shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store(d_model: usize, d_state: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        init_ssm(&mut s, "ssm", d_model, d_state, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        s
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn scalar_toy_recurrence() {
        // Ā = exp(-ln 2) = 0.5, B̄ = ln2 · (1/ln2) = 1, C = 1, D = 0
        let s = {
            let mut one = ParamStore::new();
            for (name, shape, data) in [
                ("x_proj", vec![3, 1], vec![1.0 / 2f64.ln(), 1.0, 0.0]),
                ("dt_bias", vec![1], vec![0.0]),
                ("a_log", vec![1, 1], vec![0.0]),
                ("d", vec![1], vec![0.0]),
                ("in_proj", vec![2, 1], vec![1.0, 1.0]),
                ("conv_w", vec![1, 4], vec![0.0; 4]),
                ("conv_b", vec![1], vec![0.0]),
                ("out_proj", vec![1, 1], vec![1.0]),
            ] {
                one.insert(format!("ssm.{name}"), Tensor::param(&shape, data).unwrap()).unwrap();
            }
            one
        };
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let want = [1.0, 1.5, 1.75];
        for y in [
            selective_scan_ref(&[1.0, 1.0, 1.0], &p).unwrap(),
            selective_scan_fast(&[1.0, 1.0, 1.0], &p).unwrap(),
        ] {
            for (a, b) in y.iter().zip(want) {
                assert!((a - b).abs() < 1e-12, "{y:?}");
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let s = store(3, 4, 1);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let y = selective_scan_ref(&vec![0.0; 5 * 6], &p).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let y = selective_scan_fast(&vec![0.0; 5 * 6], &p).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_unrolled_formula() {
        let s = store(2, 3, 2);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let u = [0.3, -0.7, 1.1, 0.2];
        let (di, ds) = (4, 3);
        let wx = p.x_proj.data();
        let proj: Vec<f64> = (0..2 * ds + 1)
            .map(|r| (0..di).map(|c| wx[r * di + c] * u[c]).sum())
            .collect();
        let y = selective_scan_ref(&u, &p).unwrap();
        for c in 0..di {
            let dt = softplus(proj[2 * ds] + p.dt_bias.data()[c]);
            let want: f64 = (0..ds).map(|k| proj[ds + k] * dt * proj[k] * u[c]).sum::<f64>()
                + p.d.data()[c] * u[c];
            assert!((y[c] - want).abs() < 1e-14);
        }
        let fast = selective_scan_fast(&u, &p).unwrap();
        assert_eq!(
            fast.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn fast_matches_reference_on_long_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = store(4, 16, 4);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let u = random_tensor(&mut rng, &[64, 8], 2.0);
        let a = selective_scan_ref(u.data(), &p).unwrap();
        let b = selective_scan_fast(u.data(), &p).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn transitions_lie_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = store(3, 4, 6);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let z = random_tensor(&mut rng, &[2, 5, 3], 3.0);
        let mut acc = TransitionAccumulator::new(6, 4);
        no_grad(|| mamba_sequences(&z, &p, Some(&mut acc))).unwrap();
        assert_eq!(acc.count, 10);
        assert!(acc.mean().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_parameters_except_out_proj_give_zero() {
        let mut s = store(3, 2, 7);
        for path in s.paths().cloned().collect::<Vec<_>>() {
            if !path.ends_with("out_proj") {
                let n = s.get(&path).unwrap().len();
                s.set_data(&path, vec![0.0; n]).unwrap();
            }
        }
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = mamba_block(&random_tensor(&mut rng, &[4, 3], 1.0), &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn causal_along_sequence() {
        let s = store(3, 2, 8);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_tensor(&mut rng, &[6, 3], 1.0);
        let base = mamba_block(&z, &p).unwrap();
        for t in 0..6 {
            let mut data = z.to_vec();
            data[t * 3 + 1] += 0.5;
            let out = mamba_block(&Tensor::new(&[6, 3], data).unwrap(), &p).unwrap();
            for pos in 0..6 {
                let same = (0..3).all(|k| out.data()[pos * 3 + k] == base.data()[pos * 3 + k]);
                assert_eq!(same, pos < t, "perturb {t}, position {pos}");
            }
        }
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let s = store(4, 2, 9);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = random_tensor(&mut rng, &[3, 4], 1.0);
        let leaves: Vec<Tensor> = vec![
            z,
            p.in_proj.detach(),
            p.conv_w.detach(),
            p.conv_b.detach(),
            p.x_proj.detach(),
            p.dt_bias.detach(),
            p.a_log.detach(),
            p.d.detach(),
            p.out_proj.detach(),
        ];
        check_gradients(&leaves, 1e-4, |l| {
            let params = SsmParams {
                in_proj: &l[1],
                conv_w: &l[2],
                conv_b: &l[3],
                x_proj: &l[4],
                dt_bias: &l[5],
                a_log: &l[6],
                d: &l[7],
                out_proj: &l[8],
            };
            mamba_block(&l[0], &params).unwrap().sum()
        });
    }

    #[test]
    fn scan_gradients_over_chunk_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (s, l, di, ds) = (2, CHUNK + 3, 2, 2);
        let leaves = vec![
            random_tensor(&mut rng, &[s, l, di], 1.0),
            random_tensor(&mut rng, &[s, l, 2 * ds + 1], 1.0),
            random_tensor(&mut rng, &[di, ds], 1.0),
            random_tensor(&mut rng, &[di], 1.0),
            random_tensor(&mut rng, &[di], 1.0),
        ];
        let proj = random_tensor(&mut rng, &[s, l, di], 1.0);
        check_gradients(&leaves, 1e-5, |p| {
            selective_scan(&p[0], &p[1], &p[2], &p[3], &p[4], None)
                .unwrap()
                .mul(&proj)
                .unwrap()
                .sum()
        });
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let leaves = vec![
            random_tensor(&mut rng, &[2, 5, 3], 1.0),
            random_tensor(&mut rng, &[3, CONV_WIDTH], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
        ];
        let proj = random_tensor(&mut rng, &[2, 5, 3], 1.0);
        check_gradients(&leaves, 1e-5, |p| {
            causal_conv(&p[0], &p[1], &p[2]).unwrap().mul(&proj).unwrap().sum()
        });
    }

    #[test]
    fn axis_reductions() {
        let s = store(3, 2, 14);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        // time axis with one node == block over time
        let z = random_tensor(&mut rng, &[5, 1, 3], 1.0);
        let a = mamba_over_axis(&z, ScanAxis::Time, &p, None).unwrap();
        let b = mamba_block(&z.reshape(&[5, 3]).unwrap(), &p).unwrap();
        assert!(max_abs_diff(a.data(), b.data()) < 1e-14);
        // space axis with one frame == block over nodes
        let z = random_tensor(&mut rng, &[1, 6, 3], 1.0);
        let a = mamba_over_axis(&z, ScanAxis::Space, &p, None).unwrap();
        let b = mamba_block(&z.reshape(&[6, 3]).unwrap(), &p).unwrap();
        assert!(max_abs_diff(a.data(), b.data()) < 1e-14);
    }

    #[test]
    fn time_scans_are_independent_per_node() {
        let s = store(3, 2, 16);
        let p = SsmParams::from_store(&s, "ssm").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z = random_tensor(&mut rng, &[4, 3, 3], 1.0);
        let base = mamba_over_axis(&z, ScanAxis::Time, &p, None).unwrap();
        let mut data = z.to_vec();
        for t in 0..4 {
            for k in 0..3 {
                data[(t * 3 + 1) * 3 + k] = 0.0;
            }
        }
        let out = mamba_over_axis(&Tensor::new(&[4, 3, 3], data).unwrap(), ScanAxis::Time, &p, None)
            .unwrap();
        for t in 0..4 {
            for node in [0, 2] {
                for k in 0..3 {
                    let i = (t * 3 + node) * 3 + k;
                    assert_eq!(out.data()[i], base.data()[i]);
                }
            }
        }
    }
}
