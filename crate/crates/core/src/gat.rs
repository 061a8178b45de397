//! Multi-head graph attention over a fixed topology, applied frame by frame.
//!
//! Per head `h`, with `p_u = W_h z_u`:
//! `e_uv = leaky_relu(a_src·p_u + a_dst·p_v)`, softmax over the in-edges of
//! `v`, and `out_v = Σ_u α_uv p_u`. Heads are concatenated.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::data::GraphTopology;
use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{ParamStore, ParentGrads, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

pub struct GatParams<'a> {
    /// Per head: (W `[d_head × d_h]`, a_src `[d_head]`, a_dst `[d_head]`).
    pub heads: Vec<(&'a Tensor, &'a Tensor, &'a Tensor)>,
    pub slope: f64,
}

impl<'a> GatParams<'a> {
    pub fn from_store(store: &'a ParamStore, prefix: &str, num_heads: usize) -> Result<Self> {
        let heads = (0..num_heads)
            .map(|h| {
                Ok((
                    store.get(&format!("{prefix}.head.{h}.w"))?,
                    store.get(&format!("{prefix}.head.{h}.a_src"))?,
                    store.get(&format!("{prefix}.head.{h}.a_dst"))?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            heads,
            slope: LEAKY_SLOPE,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.heads[0].1.len()
    }
}

/// Projections start small so each stage begins close to the identity
/// through its residual; early training is less disturbed by mixing.
const INIT_GAIN: f64 = 0.1;

pub fn init_gat(
    store: &mut ParamStore,
    prefix: &str,
    d_h: usize,
    num_heads: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    if num_heads == 0 || d_h % num_heads != 0 {
        return Err(Error::Config(format!(
            "hidden width {d_h} is not divisible by {num_heads} heads"
        )));
    }
    let d_head = d_h / num_heads;
    for h in 0..num_heads {
        let bound = INIT_GAIN / (d_h as f64).sqrt();
        store.insert(format!("{prefix}.head.{h}.w"), init::uniform(rng, &[d_head, d_h], bound))?;
        store.insert(format!("{prefix}.head.{h}.a_src"), init::fan_in(rng, &[d_head], d_head))?;
        store.insert(format!("{prefix}.head.{h}.a_dst"), init::fan_in(rng, &[d_head], d_head))?;
    }
    Ok(())
}

/// Attention weights per edge and head, averaged over the frames of a call.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSnapshot {
    pub edges: Vec<(usize, usize)>,
    pub num_heads: usize,
    /// `[edges × heads]`
    pub weights: Vec<f64>,
}

impl AttentionSnapshot {
    pub fn weight(&self, edge: usize, head: usize) -> f64 {
        self.weights[edge * self.num_heads + head]
    }

    /// Mean over heads for each edge.
    pub fn head_mean(&self) -> Vec<f64> {
        self.weights
            .chunks(self.num_heads)
            .map(|w| w.iter().sum::<f64>() / self.num_heads as f64)
            .collect()
    }

    /// Running average with another snapshot over the same edges.
    pub fn merge(&mut self, other: &AttentionSnapshot, self_frames: usize, other_frames: usize) {
        let total = (self_frames + other_frames) as f64;
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a = (*a * self_frames as f64 + b * other_frames as f64) / total;
        }
    }

    /// CSV `src,dst,head,weight`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "src,dst,head,weight")?;
        for (e, &(s, d)) in self.edges.iter().enumerate() {
            for h in 0..self.num_heads {
                writeln!(w, "{s},{d},{h},{:?}", self.weight(e, h))?;
            }
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        let mut num_heads = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Parse {
                    file: path.to_path_buf(),
                    line,
                    msg: "expected 4 fields".into(),
                })
            };
            let parse_err = |msg: String| Error::Parse {
                file: path.to_path_buf(),
                line,
                msg,
            };
            let s: usize = field(0)?.parse().map_err(|_| parse_err("bad src".into()))?;
            let d: usize = field(1)?.parse().map_err(|_| parse_err("bad dst".into()))?;
            let h: usize = field(2)?.parse().map_err(|_| parse_err("bad head".into()))?;
            let v: f64 = field(3)?.parse().map_err(|_| parse_err("bad weight".into()))?;
            if edges.last() != Some(&(s, d)) {
                edges.push((s, d));
            }
            num_heads = num_heads.max(h + 1);
            rows.push((edges.len() - 1, h, v));
        }
        let mut weights = vec![0.0; edges.len() * num_heads];
        for (e, h, v) in rows {
            weights[e * num_heads + h] = v;
        }
        Ok(Self {
            edges,
            num_heads,
            weights,
        })
    }
}

/// Fused attention aggregation.
///
/// `proj` holds the per-head projections `W_h z`, shaped `[F, N, H·d_head]`
/// with heads contiguous. Returns the aggregated messages (same shape) and
/// the attention weights `[F × E × H]`, edges in topology order.
pub fn attention_aggregate(
    proj: &Tensor,
    a_src: &[&Tensor],
    a_dst: &[&Tensor],
    topo: &GraphTopology,
    slope: f64,
) -> Result<(Tensor, Vec<f64>)> {
    let heads = a_src.len();
    let shape = proj.shape().to_vec();
    if shape.len() != 3 || heads == 0 || a_dst.len() != heads {
        return Err(Error::InvalidShape(format!(
            "attention expects [F, N, H*d] projections, got {shape:?} with {heads} heads"
        )));
    }
    let (frames, n, width) = (shape[0], shape[1], shape[2]);
    if n != topo.num_nodes() {
        return Err(Error::shape("attention (nodes)", &[n], &[topo.num_nodes()]));
    }
    if width % heads != 0 {
        return Err(Error::shape("attention (width)", &[width], &[heads]));
    }
    let dh = width / heads;
    for t in a_src.iter().chain(a_dst) {
        if t.shape() != [dh] {
            return Err(Error::shape("attention vector", t.shape(), &[dh]));
        }
    }
    let edges = topo.edges().to_vec();
    let incoming = topo.incoming();
    if let Some(v) = incoming.iter().position(Vec::is_empty) {
        return Err(Error::DegenerateNeighborhood(format!("node {v} has no incoming edge")));
    }
    let ne = edges.len();
    let src_w: Vec<Vec<f64>> = a_src.iter().map(|t| t.to_vec()).collect();
    let dst_w: Vec<Vec<f64>> = a_dst.iter().map(|t| t.to_vec()).collect();
    let p = proj.data();

    let score = |f: usize, node: usize, h: usize, w: &[f64]| -> f64 {
        let row = &p[(f * n + node) * width + h * dh..][..dh];
        row.iter().zip(w).map(|(a, b)| a * b).sum()
    };

    let mut alpha = vec![0.0; frames * ne * heads];
    let mut pre = vec![0.0; frames * ne * heads];
    let mut out = vec![0.0; proj.len()];
    let mut s_src = vec![0.0; n];
    let mut s_dst = vec![0.0; n];
    for f in 0..frames {
        for h in 0..heads {
            for node in 0..n {
                s_src[node] = score(f, node, h, &src_w[h]);
                s_dst[node] = score(f, node, h, &dst_w[h]);
            }
            for (v, inc) in incoming.iter().enumerate() {
                let mut max = f64::NEG_INFINITY;
                for &e in inc {
                    let x = s_src[edges[e].0] + s_dst[v];
                    let l = if x > 0.0 { x } else { slope * x };
                    pre[(f * ne + e) * heads + h] = x;
                    alpha[(f * ne + e) * heads + h] = l;
                    max = max.max(l);
                }
                let mut z = 0.0;
                for &e in inc {
                    let a = &mut alpha[(f * ne + e) * heads + h];
                    *a = (*a - max).exp();
                    z += *a;
                }
                let dst_row = (f * n + v) * width + h * dh;
                for &e in inc {
                    let a = &mut alpha[(f * ne + e) * heads + h];
                    *a /= z;
                    let a = *a;
                    let src_row = (f * n + edges[e].0) * width + h * dh;
                    for k in 0..dh {
                        out[dst_row + k] += a * p[src_row + k];
                    }
                }
            }
        }
    }

    let proj_t = proj.clone();
    let alpha_saved = alpha.clone();
    let mut parents = vec![proj.clone()];
    parents.extend(a_src.iter().map(|&t| t.clone()));
    parents.extend(a_dst.iter().map(|&t| t.clone()));
    let result = Tensor::from_op(shape, out, parents, move |g| -> ParentGrads {
        let p = proj_t.data();
        let alpha = &alpha_saved;
        let mut g_proj = vec![0.0; p.len()];
        let mut g_src: Vec<Vec<f64>> = vec![vec![0.0; dh]; heads];
        let mut g_dst: Vec<Vec<f64>> = vec![vec![0.0; dh]; heads];
        let mut gs_src = vec![0.0; n];
        let mut gs_dst = vec![0.0; n];
        let mut g_alpha = vec![0.0; ne];
        for f in 0..frames {
            for h in 0..heads {
                gs_src.iter_mut().for_each(|v| *v = 0.0);
                gs_dst.iter_mut().for_each(|v| *v = 0.0);
                for (v, inc) in incoming.iter().enumerate() {
                    let dst_row = (f * n + v) * width + h * dh;
                    let go = &g[dst_row..dst_row + dh];
                    let mut dot = 0.0;
                    for &e in inc {
                        let a = alpha[(f * ne + e) * heads + h];
                        let src_row = (f * n + edges[e].0) * width + h * dh;
                        let mut ga = 0.0;
                        for k in 0..dh {
                            g_proj[src_row + k] += a * go[k];
                            ga += go[k] * p[src_row + k];
                        }
                        g_alpha[e] = ga;
                        dot += a * ga;
                    }
                    for &e in inc {
                        let idx = (f * ne + e) * heads + h;
                        let gl = alpha[idx] * (g_alpha[e] - dot);
                        let gx = if pre[idx] > 0.0 { gl } else { slope * gl };
                        gs_src[edges[e].0] += gx;
                        gs_dst[v] += gx;
                    }
                }
                for node in 0..n {
                    let row = (f * n + node) * width + h * dh;
                    for k in 0..dh {
                        g_proj[row + k] += gs_src[node] * src_w[h][k] + gs_dst[node] * dst_w[h][k];
                        g_src[h][k] += gs_src[node] * p[row + k];
                        g_dst[h][k] += gs_dst[node] * p[row + k];
                    }
                }
            }
        }
        let mut grads = vec![Some(g_proj)];
        grads.extend(g_src.into_iter().map(Some));
        grads.extend(g_dst.into_iter().map(Some));
        grads
    });
    Ok((result, alpha))
}

/// Applies attention independently to every frame of `z`, shaped
/// `[.., N, d_h]`; all leading axes are frames. With `capture`, returns the
/// frame-averaged weights.
pub fn gat_over_frames(
    z: &Tensor,
    topo: &GraphTopology,
    params: &GatParams<'_>,
    capture: bool,
) -> Result<(Tensor, Option<AttentionSnapshot>)> {
    let shape = z.shape().to_vec();
    if shape.len() < 2 {
        return Err(Error::InvalidShape(format!("GAT input must be [.., N, d_h], got {shape:?}")));
    }
    let n = shape[shape.len() - 2];
    let d_h = shape[shape.len() - 1];
    let frames = z.len() / (n * d_h);
    let heads = params.heads.len();
    let projected: Vec<Tensor> = params
        .heads
        .iter()
        .map(|(w, _, _)| z.linear(w, None))
        .collect::<Result<_>>()?;
    let refs: Vec<&Tensor> = projected.iter().collect();
    let proj = Tensor::concat_last(&refs)?;
    let width = proj.shape()[proj.shape().len() - 1];
    let proj = proj.reshape(&[frames, n, width])?;
    let a_src: Vec<&Tensor> = params.heads.iter().map(|h| h.1).collect();
    let a_dst: Vec<&Tensor> = params.heads.iter().map(|h| h.2).collect();
    let (out, alpha) = attention_aggregate(&proj, &a_src, &a_dst, topo, params.slope)?;
    let mut out_shape = shape.clone();
    *out_shape.last_mut().unwrap() = width;
    let out = out.reshape(&out_shape)?;
    let snapshot = capture.then(|| {
        let ne = topo.edges().len();
        let mut weights = vec![0.0; ne * heads];
        for f in 0..frames {
            for (w, a) in weights.iter_mut().zip(&alpha[f * ne * heads..(f + 1) * ne * heads]) {
                *w += a;
            }
        }
        weights.iter_mut().for_each(|w| *w /= frames as f64);
        AttentionSnapshot {
            edges: topo.edges().to_vec(),
            num_heads: heads,
            weights,
        }
    });
    Ok((out, snapshot))
}

/// Single-frame attention: `z_frame` is `[N × d_h]`.
pub fn gat_forward(
    z_frame: &Tensor,
    topo: &GraphTopology,
    params: &GatParams<'_>,
    capture: bool,
) -> Result<(Tensor, Option<AttentionSnapshot>)> {
    if z_frame.shape().len() != 2 {
        return Err(Error::InvalidShape(format!(
            "a frame must be [N, d_h], got {:?}",
            z_frame.shape()
        )));
    }
    gat_over_frames(z_frame, topo, params, capture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, random_tensor};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> GraphTopology {
        let mut links = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.4) {
                    links.push((a, b));
                }
            }
        }
        GraphTopology::from_links(n, &links).unwrap()
    }

    fn params_store(d_h: usize, heads: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        init_gat(&mut s, "gat", d_h, heads, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        s
    }

    /// Per-node composition from generic primitives.
    fn reference(z: &Tensor, topo: &GraphTopology, params: &GatParams<'_>) -> Vec<f64> {
        let n = z.shape()[0];
        let mut out = vec![Vec::new(); n];
        for (w, a_src, a_dst) in &params.heads {
            let p = z.linear(w, None).unwrap();
            let dh = p.shape()[1];
            for v in 0..n {
                let mut logits = vec![0.0; n];
                let mut mask = vec![false; n];
                for &(s, d) in topo.edges() {
                    if d == v {
                        let ps = &p.data()[s * dh..(s + 1) * dh];
                        let pv = &p.data()[v * dh..(v + 1) * dh];
                        let x: f64 = ps.iter().zip(a_src.data()).map(|(a, b)| a * b).sum::<f64>()
                            + pv.iter().zip(a_dst.data()).map(|(a, b)| a * b).sum::<f64>();
                        logits[s] = x;
                        mask[s] = true;
                    }
                }
                let alpha = Tensor::from_vec(logits)
                    .leaky_relu(params.slope)
                    .softmax_masked(&mask)
                    .unwrap();
                let agg = Tensor::new(&[1, n], alpha.to_vec()).unwrap().matmul(&p).unwrap();
                out[v].extend_from_slice(agg.data());
            }
        }
        out.concat()
    }

    #[test]
    fn matches_primitive_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let topo = random_graph(&mut rng, 6);
        let store = params_store(8, 2, 2);
        let params = GatParams::from_store(&store, "gat", 2).unwrap();
        let z = random_tensor(&mut rng, &[6, 8], 1.5);
        let (out, _) = gat_forward(&z, &topo, &params, false).unwrap();
        let want = reference(&z, &topo, &params);
        for (a, b) in out.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_returns_projection() {
        let topo = GraphTopology::from_links(1, &[]).unwrap();
        let store = params_store(4, 2, 0);
        let params = GatParams::from_store(&store, "gat", 2).unwrap();
        let z = Tensor::new(&[1, 4], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let (out, snap) = gat_forward(&z, &topo, &params, true).unwrap();
        let mut want = Vec::new();
        for (w, _, _) in &params.heads {
            want.extend(z.linear(w, None).unwrap().to_vec());
        }
        assert_eq!(out.data(), &want[..]);
        assert_eq!(snap.unwrap().weights, vec![1.0, 1.0]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let topo = GraphTopology::from_links(2, &[(0, 1)]).unwrap();
        let store = params_store(4, 2, 3);
        let params = GatParams::from_store(&store, "gat", 2).unwrap();
        let z = Tensor::new(&[2, 4], vec![0.3, 0.1, -0.2, 0.7, 0.3, 0.1, -0.2, 0.7]).unwrap();
        let (_, snap) = gat_forward(&z, &topo, &params, true).unwrap();
        for &w in &snap.unwrap().weights {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_and_masking() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let topo = random_graph(&mut rng, 5);
            let store = params_store(6, 3, rng.random());
            let params = GatParams::from_store(&store, "gat", 3).unwrap();
            let z = random_tensor(&mut rng, &[5, 6], 2.0);
            let (_, snap) = gat_forward(&z, &topo, &params, true).unwrap();
            let snap = snap.unwrap();
            for v in 0..5 {
                for h in 0..3 {
                    let s: f64 = snap
                        .edges
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.1 == v)
                        .map(|(i, _)| snap.weight(i, h))
                        .sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
            assert!(snap.weights.iter().all(|&w| w >= 0.0));
            // only topology edges carry weight
            assert_eq!(snap.edges, topo.edges());
        }
    }

    #[test]
    fn zero_attention_vectors_average_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let topo = random_graph(&mut rng, 5);
        let mut store = params_store(4, 1, 1);
        store.set_data("gat.head.0.a_src", vec![0.0; 4]).unwrap();
        store.set_data("gat.head.0.a_dst", vec![0.0; 4]).unwrap();
        let params = GatParams::from_store(&store, "gat", 1).unwrap();
        let z = random_tensor(&mut rng, &[5, 4], 1.0);
        let (out, _) = gat_forward(&z, &topo, &params, false).unwrap();
        let p = z.linear(params.heads[0].0, None).unwrap();
        for v in 0..5 {
            let nbrs: Vec<usize> = topo.edges().iter().filter(|e| e.1 == v).map(|e| e.0).collect();
            for k in 0..4 {
                let avg = nbrs.iter().map(|&u| p.data()[u * 4 + k]).sum::<f64>() / nbrs.len() as f64;
                assert!((out.data()[v * 4 + k] - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let n = 5;
            let topo = random_graph(&mut rng, n);
            let store = params_store(8, 4, rng.random());
            let params = GatParams::from_store(&store, "gat", 4).unwrap();
            let z = random_tensor(&mut rng, &[n, 8], 2.0);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut zp = vec![0.0; z.len()];
            for (old, &new) in perm.iter().enumerate() {
                zp[new * 8..(new + 1) * 8].copy_from_slice(&z.data()[old * 8..(old + 1) * 8]);
            }
            let zp = Tensor::new(&[n, 8], zp).unwrap();
            let tp = topo.permuted(&perm).unwrap();
            let (a, _) = gat_forward(&z, &topo, &params, false).unwrap();
            let (b, _) = gat_forward(&zp, &tp, &params, false).unwrap();
            for (old, &new) in perm.iter().enumerate() {
                for k in 0..8 {
                    assert!((a.data()[old * 8 + k] - b.data()[new * 8 + k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn frames_are_independent_and_snapshot_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let topo = random_graph(&mut rng, 4);
        let store = params_store(4, 2, 9);
        let params = GatParams::from_store(&store, "gat", 2).unwrap();
        let frame = random_tensor(&mut rng, &[4, 4], 1.0);
        let (single, snap1) = gat_forward(&frame, &topo, &params, true).unwrap();
        let stacked = Tensor::new(&[3, 4, 4], frame.data().repeat(3)).unwrap();
        let (multi, snap3) = gat_over_frames(&stacked, &topo, &params, true).unwrap();
        assert_eq!(multi.data(), &single.data().repeat(3)[..]);
        for (a, b) in snap1.unwrap().weights.iter().zip(&snap3.unwrap().weights) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let topo = random_graph(&mut rng, 4);
        let z = random_tensor(&mut rng, &[2, 4, 6], 1.0);
        let leaves = vec![
            z,
            random_tensor(&mut rng, &[3, 6], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
            random_tensor(&mut rng, &[3, 6], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
        ];
        let proj = random_tensor(&mut rng, &[2, 4, 6], 1.0);
        check_gradients(&leaves, 1e-5, |p| {
            let params = GatParams {
                heads: vec![(&p[1], &p[2], &p[3]), (&p[4], &p[5], &p[6])],
                slope: LEAKY_SLOPE,
            };
            let (out, _) = gat_over_frames(&p[0], &topo, &params, false).unwrap();
            out.mul(&proj).unwrap().sum()
        });
    }

    #[test]
    fn snapshot_csv_roundtrip() {
        let topo = GraphTopology::from_links(3, &[(0, 1), (1, 2)]).unwrap();
        let snap = AttentionSnapshot {
            edges: topo.edges().to_vec(),
            num_heads: 2,
            weights: (0..topo.edges().len() * 2).map(|i| i as f64 / 10.0).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("att.csv");
        snap.write_csv(&p).unwrap();
        assert_eq!(AttentionSnapshot::read_csv(&p).unwrap(), snap);
    }
}
