//! Post-hoc analyses: singular values of scan transitions, community
//! structure of attention graphs, and peak-value regression.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gat::AttentionSnapshot;
use crate::sscan::{ScanAxis, ScanTrace};

/// Singular values (descending) of one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdEntry {
    pub layer: usize,
    pub axis: ScanAxis,
    pub sigma: Vec<f64>,
    pub stable: bool,
}

/// Singular values of the row-major `rows × cols` matrix, descending, and
/// whether all of them are strictly below one.
pub fn svd_analyze(matrix: &[f64], rows: usize, cols: usize) -> Result<(Vec<f64>, bool)> {
    if rows == 0 || cols == 0 || matrix.len() != rows * cols {
        return Err(Error::Contract(format!(
            "svd needs a non-empty {rows}x{cols} matrix, got {} values",
            matrix.len()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("svd input has non-finite entries".into()));
    }
    let m = DMatrix::from_row_slice(rows, cols, matrix);
    let mut sigma: Vec<f64> = m.singular_values().iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let stable = sigma[0] < 1.0;
    Ok((sigma, stable))
}

/// Singular values of a diagonal matrix: its sorted absolute entries.
pub fn diagonal_singular_values(diag: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = diag.iter().map(|v| v.abs()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// One entry per scan layer; each averaged transition is a diagonal
/// operator over (channel, state).
pub fn svd_report(trace: &ScanTrace) -> Result<Vec<SvdEntry>> {
    trace
        .layers
        .iter()
        .map(|(layer, axis, _, _, mean)| {
            if mean.is_empty() || mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("layer {layer} has no usable transitions")));
            }
            let sigma = diagonal_singular_values(mean);
            Ok(SvdEntry {
                layer: *layer,
                axis: *axis,
                stable: sigma[0] < 1.0,
                sigma,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Verdict {
    layer: usize,
    axis: ScanAxis,
    max_sigma: f64,
    stable: bool,
}

/// Writes `svd.csv` (`layer,axis,rank,sigma`) and `svd_verdicts.json`.
pub fn write_svd_report(dir: &Path, entries: &[SvdEntry]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("svd.csv"))?);
    writeln!(w, "layer,axis,rank,sigma")?;
    for e in entries {
        for (rank, s) in e.sigma.iter().enumerate() {
            writeln!(w, "{},{},{},{:?}", e.layer, e.axis.as_str(), rank + 1, s)?;
        }
    }
    w.flush()?;
    let verdicts: Vec<Verdict> = entries
        .iter()
        .map(|e| Verdict {
            layer: e.layer,
            axis: e.axis,
            max_sigma: e.sigma[0],
            stable: e.stable,
        })
        .collect();
    std::fs::write(dir.join("svd_verdicts.json"), serde_json::to_vec_pretty(&verdicts)?)?;
    Ok(())
}

/// Undirected weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub num_nodes: usize,
    /// Keyed `(min, max)`.
    pub edges: BTreeMap<(usize, usize), f64>,
}

impl WeightedGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: BTreeMap::new(),
        }
    }

    /// Adds `w` to the (u, v) edge; self-loops are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize, w: f64) {
        if u != v {
            *self.edges.entry((u.min(v), u.max(v))).or_insert(0.0) += w;
        }
    }

    pub fn dense(&self) -> Vec<f64> {
        let n = self.num_nodes;
        let mut a = vec![0.0; n * n];
        for (&(u, v), &w) in &self.edges {
            a[u * n + v] = w;
            a[v * n + u] = w;
        }
        a
    }
}

/// Keeps pairs whose head-averaged weight exceeds `threshold` in either
/// direction; the edge weight is the larger of the two directions.
pub fn build_attention_graph(snapshot: &AttentionSnapshot, threshold: f64) -> WeightedGraph {
    let n = snapshot
        .edges
        .iter()
        .map(|&(s, d)| s.max(d) + 1)
        .max()
        .unwrap_or(0);
    let mean = snapshot.head_mean();
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(s, d), &w) in snapshot.edges.iter().zip(&mean) {
        if s == d {
            continue;
        }
        let e = best.entry((s.min(d), s.max(d))).or_insert(f64::NEG_INFINITY);
        *e = e.max(w);
    }
    let mut g = WeightedGraph::new(n);
    for ((u, v), w) in best {
        if w > threshold {
            g.add_edge(u, v, w);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    /// Community id per node, contiguous from 0 in order of first appearance.
    pub community: Vec<usize>,
    pub modularity: f64,
    pub threshold: f64,
    /// Modularity after each aggregation level.
    pub trace: Vec<f64>,
}

/// Modularity of a partition of the symmetric dense adjacency `a`.
pub fn modularity(a: &[f64], n: usize, community: &[usize]) -> f64 {
    let k: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if community[i] == community[j] {
                q += a[i * n + j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// One pass of local moves on a dense symmetric adjacency (self-loops on
/// the diagonal). Nodes are visited in ascending order, each moved to the
/// neighbouring community with the largest strictly positive gain.
fn local_moves(a: &[f64], n: usize) -> (Vec<usize>, bool) {
    let k: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut moved_any = false;
    if two_m == 0.0 {
        return (comm, false);
    }
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = comm[i];
            tot[own] -= k[i];
            let mut links: BTreeMap<usize, f64> = BTreeMap::new();
            links.insert(own, 0.0);
            for j in 0..n {
                if j != i && a[i * n + j] != 0.0 {
                    *links.entry(comm[j]).or_insert(0.0) += a[i * n + j];
                }
            }
            let gain = |c: usize, w: f64| w - tot[c] * k[i] / two_m;
            let stay = gain(own, links[&own]);
            let mut target = own;
            let mut best = stay;
            for (&c, &w) in &links {
                let g = gain(c, w);
                if g > best + 1e-12 {
                    best = g;
                    target = c;
                }
            }
            tot[target] += k[i];
            if target != own {
                comm[i] = target;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (relabel(&comm), moved_any)
}

fn relabel(comm: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    comm.iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

/// Two-phase Louvain on the graph: local moves, then aggregation of each
/// community into one node, repeated until nothing moves.
pub fn louvain(graph: &WeightedGraph, threshold: f64) -> CommunityReport {
    let n0 = graph.num_nodes;
    let original = graph.dense();
    let mut a = original.clone();
    let mut n = n0;
    let mut membership: Vec<usize> = (0..n0).collect();
    let mut trace = vec![modularity(&original, n0, &membership)];
    loop {
        let (comm, moved) = local_moves(&a, n);
        if !moved {
            break;
        }
        membership = membership.iter().map(|&m| comm[m]).collect();
        trace.push(modularity(&original, n0, &membership));
        let groups = comm.iter().max().map_or(0, |m| m + 1);
        let mut agg = vec![0.0; groups * groups];
        for i in 0..n {
            for j in 0..n {
                agg[comm[i] * groups + comm[j]] += a[i * n + j];
            }
        }
        a = agg;
        n = groups;
    }
    let community = relabel(&membership);
    CommunityReport {
        modularity: modularity(&original, n0, &community),
        community,
        threshold,
        trace,
    }
}

/// Nodes sorted by (community, index). Returns the permuted dense adjacency
/// and `perm`, where `perm[position]` is the node placed there.
pub fn reorder_adjacency(graph: &WeightedGraph, report: &CommunityReport) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = graph.num_nodes;
    if report.community.len() != n {
        return Err(Error::shape("reorder_adjacency", &[report.community.len()], &[n]));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by_key(|&v| (report.community[v], v));
    let a = graph.dense();
    let mut out = vec![0.0; n * n];
    for (pi, &u) in perm.iter().enumerate() {
        for (pj, &v) in perm.iter().enumerate() {
            out[pi * n + pj] = a[u * n + v];
        }
    }
    Ok((out, perm))
}

/// Writes `communities.csv`, `adjacency.csv` (reordered dense grid) and
/// `permutation.csv`.
pub fn write_community_files(dir: &Path, graph: &WeightedGraph, report: &CommunityReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (dense, perm) = reorder_adjacency(graph, report)?;
    let n = graph.num_nodes;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("communities.csv"))?);
    writeln!(w, "node,community")?;
    for (node, c) in report.community.iter().enumerate() {
        writeln!(w, "{node},{c}")?;
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("adjacency.csv"))?);
    for row in dense.chunks(n.max(1)).take(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("permutation.csv"))?);
    writeln!(w, "position,node")?;
    for (pos, node) in perm.iter().enumerate() {
        writeln!(w, "{pos},{node}")?;
    }
    w.flush()?;
    std::fs::write(dir.join("communities.json"), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// (true peak, predicted peak) per retained block.
    pub pairs: Vec<(f64, f64)>,
}

/// Block maxima of both series over consecutive `window`-long blocks
/// (positions where the true value is 0 are missing and skipped), then an
/// OLS fit `pred_peak = slope · true_peak + intercept`.
pub fn peak_regression(truth: &[f64], pred: &[f64], window: usize) -> Result<PeakFit> {
    if truth.len() != pred.len() {
        return Err(Error::shape("peak_regression", &[truth.len()], &[pred.len()]));
    }
    if window == 0 || truth.len() < window {
        return Err(Error::FitUndefined(format!(
            "series of length {} is shorter than the window {window}",
            truth.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = truth
        .chunks_exact(window)
        .zip(pred.chunks_exact(window))
        .filter_map(|(t, p)| {
            let valid: Vec<usize> = (0..window).filter(|&i| t[i] != 0.0).collect();
            if valid.is_empty() {
                return None;
            }
            let tmax = valid.iter().map(|&i| t[i]).fold(f64::NEG_INFINITY, f64::max);
            let pmax = valid.iter().map(|&i| p[i]).fold(f64::NEG_INFINITY, f64::max);
            Some((tmax, pmax))
        })
        .collect();
    if pairs.len() < 2 {
        return Err(Error::FitUndefined(format!("{} peak pairs, need at least 2", pairs.len())));
    }
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitUndefined("true peaks are constant".into()));
    }
    if syy == 0.0 {
        return Err(Error::FitUndefined("predicted peaks are constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pairs
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    Ok(PeakFit {
        slope,
        intercept,
        r2: 1.0 - ss_res / syy,
        pairs,
    })
}

/// CSV `node,slope,intercept,r2,num_pairs`; nodes whose fit is undefined
/// are listed with empty fields.
pub fn write_peak_fits(path: &Path, fits: &[(usize, Result<PeakFit>)]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "node,slope,intercept,r2,num_pairs")?;
    for (node, fit) in fits {
        match fit {
            Ok(f) => writeln!(
                w,
                "{node},{:?},{:?},{:?},{}",
                f.slope,
                f.intercept,
                f.r2,
                f.pairs.len()
            )?,
            Err(_) => writeln!(w, "{node},,,,0")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
    fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * n + j].powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p * n + q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k * n + p], a[k * n + q]);
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i * n + i]).collect()
    }

    #[test]
    fn svd_examples() {
        let (s, stable) = svd_analyze(&[0.9, 0.0, 0.0, 0.1], 2, 2).unwrap();
        assert!((s[0] - 0.9).abs() < 1e-12 && (s[1] - 0.1).abs() < 1e-12 && stable);
        let (s, stable) = svd_analyze(&[0.0, 2.0, 0.0, 0.0], 2, 2).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-12 && s[1].abs() < 1e-12 && !stable);
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let (s, stable) = svd_analyze(&eye, 3, 3).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12) && !stable);
        assert!(svd_analyze(&[], 0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn svd_matches_gram_eigenvalues(m in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let (s, _) = svd_analyze(&m, 4, 4).unwrap();
            let mut gram = vec![0.0; 16];
            for i in 0..4 {
                for j in 0..4 {
                    gram[i * 4 + j] = (0..4).map(|k| m[k * 4 + i] * m[k * 4 + j]).sum();
                }
            }
            let mut oracle: Vec<f64> = jacobi_eigenvalues(gram, 4)
                .into_iter()
                .map(|e| e.max(0.0).sqrt())
                .collect();
            oracle.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in s.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-8, "{s:?} vs {oracle:?}");
            }
        }

        #[test]
        fn diagonal_shortcut_matches_full_svd(d in proptest::collection::vec(-1.5f64..1.5, 1..6)) {
            let n = d.len();
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = d[i];
            }
            let (s, _) = svd_analyze(&m, n, n).unwrap();
            for (a, b) in s.iter().zip(diagonal_singular_values(&d)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn snapshot(edges: Vec<(usize, usize)>, weights: Vec<f64>) -> AttentionSnapshot {
        AttentionSnapshot {
            edges,
            num_heads: 1,
            weights,
        }
    }

    #[test]
    fn attention_graph_rules() {
        let g = build_attention_graph(&snapshot(vec![(0, 1), (1, 0)], vec![0.05, 0.05]), 0.1);
        assert!(g.edges.is_empty());
        let g = build_attention_graph(&snapshot(vec![(0, 1), (1, 1)], vec![0.5, 0.9]), 0.1);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[&(0, 1)], 0.5);
        let g = build_attention_graph(&snapshot(vec![(0, 1), (1, 0)], vec![0.2, 0.05]), 0.1);
        assert_eq!(g.edges[&(0, 1)], 0.2);
        // strict comparison
        let g = build_attention_graph(&snapshot(vec![(0, 1)], vec![0.1]), 0.1);
        assert!(g.edges.is_empty());
    }

    fn two_triangles() -> WeightedGraph {
        let mut g = WeightedGraph::new(6);
        for (u, v) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            g.add_edge(u, v, 1.0);
        }
        g.add_edge(2, 3, 0.1);
        g
    }

    /// Best modularity over all partitions into at most two groups.
    fn brute_force_best_split(g: &WeightedGraph) -> (f64, Vec<usize>) {
        let n = g.num_nodes;
        let a = g.dense();
        (0..1u32 << (n - 1))
            .map(|mask| {
                let c: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
                (modularity(&a, n, &c), c)
            })
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap()
    }

    #[test]
    fn louvain_separates_triangles() {
        let g = two_triangles();
        let r = louvain(&g, 0.1);
        assert_eq!(r.community, [0, 0, 0, 1, 1, 1]);
        let (best, _) = brute_force_best_split(&g);
        assert!((r.modularity - best).abs() < 1e-12);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn louvain_edge_cases() {
        let r = louvain(&WeightedGraph::new(4), 0.1);
        assert_eq!(r.community, [0, 1, 2, 3]);
        assert_eq!(r.modularity, 0.0);
        let mut k5 = WeightedGraph::new(5);
        for u in 0..5 {
            for v in u + 1..5 {
                k5.add_edge(u, v, 1.0);
            }
        }
        let r = louvain(&k5, 0.1);
        assert!(r.community.iter().all(|&c| c == 0));
        let (best_split, _) = brute_force_best_split(&k5);
        assert!(r.modularity >= best_split - 1e-12);
    }

    #[test]
    fn planted_blocks_reorder_block_diagonal() {
        // nodes alternate between two dense blocks
        let n = 12;
        let mut g = WeightedGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if u % 2 == v % 2 {
                    g.add_edge(u, v, 1.0);
                } else if (u + v) % 5 == 0 {
                    g.add_edge(u, v, 0.2);
                }
            }
        }
        let r = louvain(&g, 0.1);
        let (dense, perm) = reorder_adjacency(&g, &r).unwrap();
        let size0 = r.community.iter().filter(|&&c| c == 0).count();
        let (mut off, mut total) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                total += dense[i * n + j];
                if (i < size0) != (j < size0) {
                    off += dense[i * n + j];
                }
            }
        }
        assert!(off / total < 0.1, "off-block ratio {}", off / total);
        // inverse permutation restores the original matrix
        let mut inv = vec![0; n];
        for (pos, &node) in perm.iter().enumerate() {
            inv[node] = pos;
        }
        let a = g.dense();
        for u in 0..n {
            for v in 0..n {
                assert_eq!(dense[inv[u] * n + inv[v]], a[u * n + v]);
            }
        }
    }

    #[test]
    fn singleton_communities_keep_order() {
        let g = WeightedGraph::new(3);
        let r = louvain(&g, 1.1);
        let (_, perm) = reorder_adjacency(&g, &r).unwrap();
        assert_eq!(perm, [0, 1, 2]);
    }

    #[test]
    fn peak_examples() {
        let s: Vec<f64> = (0..24).map(|v| v as f64).collect();
        // zeros are missing, so the first block's max comes from 1..=11
        let f = peak_regression(&s, &s, 12).unwrap();
        assert_eq!(f.pairs, [(11.0, 11.0), (23.0, 23.0)]);
        assert!((f.slope - 1.0).abs() < 1e-12 && f.intercept.abs() < 1e-9 && (f.r2 - 1.0).abs() < 1e-12);
        let doubled: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let f = peak_regression(&s, &doubled, 12).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.intercept.abs() < 1e-9 && (f.r2 - 1.0).abs() < 1e-12);
        let flat = vec![5.0; 24];
        assert!(matches!(peak_regression(&flat, &s, 12), Err(Error::FitUndefined(_))));
        assert!(matches!(peak_regression(&s[..12], &s[..12], 12), Err(Error::FitUndefined(_))));
    }

    proptest! {
        #[test]
        fn ols_matches_normal_equations(
            truth in proptest::collection::vec(1.0f64..100.0, 36..120),
            noise in proptest::collection::vec(-5.0f64..5.0, 120),
        ) {
            let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| 0.8 * t + 3.0 + e).collect();
            let Ok(f) = peak_regression(&truth, &pred, 12) else { return Ok(()) };
            prop_assert_eq!(f.pairs.len(), truth.len() / 12);
            // [Σx² Σx; Σx k] [a; b] = [Σxy; Σy]
            let k = f.pairs.len() as f64;
            let (sx, sy) = (f.pairs.iter().map(|p| p.0).sum::<f64>(), f.pairs.iter().map(|p| p.1).sum::<f64>());
            let sxx: f64 = f.pairs.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = f.pairs.iter().map(|p| p.0 * p.1).sum();
            let det = sxx * k - sx * sx;
            let a = (k * sxy - sx * sy) / det;
            let b = (sxx * sy - sx * sxy) / det;
            prop_assert!((a - f.slope).abs() < 1e-10 * (1.0 + a.abs()));
            prop_assert!((b - f.intercept).abs() < 1e-10 * (1.0 + b.abs()) * 100.0);
            prop_assert!(f.r2 <= 1.0 + 1e-12);
        }
    }
}
