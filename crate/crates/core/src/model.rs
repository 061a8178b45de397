//! Full forecaster: embedding, `L` temporal (attention, scan) pairs, `L`
//! spatial pairs and a linear multi-horizon head.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{GraphTopology, NormStats};
use crate::embedding::{embed, init_embedding, EmbeddingDims, EmbeddingParams, INPUT_CHANNELS};
use crate::error::{Error, Result};
use crate::gat::{gat_over_frames, init_gat, AttentionSnapshot, GatParams};
use crate::init;
use crate::sscan::{
    init_ssm, mamba_over_axis, ScanAxis, ScanTrace, SsmParams, TransitionAccumulator,
};
use crate::tensor::{ParamStore, Tensor};

pub const LN_EPS: f64 = 1e-5;
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub d_f: usize,
    pub d_a: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_state: usize,
    pub expand: usize,
    pub use_gat: bool,
    pub use_temporal_mamba: bool,
    pub use_spatial_mamba: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            t_in: 12,
            t_out: 12,
            d_f: 24,
            d_a: 80,
            num_layers: 3,
            num_heads: 4,
            d_state: 16,
            expand: 2,
            use_gat: true,
            use_temporal_mamba: true,
            use_spatial_mamba: true,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        3 * self.d_f + self.d_a
    }

    /// Every problem, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("t_in", self.t_in),
            ("t_out", self.t_out),
            ("d_f", self.d_f),
            ("d_a", self.d_a),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("d_state", self.d_state),
            ("expand", self.expand),
        ] {
            if v == 0 {
                out.push(format!("model.{name} must be positive"));
            }
        }
        if self.num_heads > 0 && self.hidden() % self.num_heads != 0 {
            out.push(format!(
                "hidden width {} (3·d_f + d_a) is not divisible by num_heads {}",
                self.hidden(),
                self.num_heads
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }
}

pub fn init_params(
    cfg: &ModelConfig,
    num_nodes: usize,
    steps_per_day: usize,
    seed: u64,
) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let d_h = cfg.hidden();
    init_embedding(
        &mut store,
        "embed",
        &EmbeddingDims {
            d_f: cfg.d_f,
            d_a: cfg.d_a,
            steps_per_day,
            window: cfg.t_in,
            num_nodes,
        },
        &mut rng,
    )?;
    for i in 0..cfg.num_layers {
        let p = format!("block.{i}");
        if cfg.use_gat {
            init_gat(&mut store, &format!("{p}.gat1"), d_h, cfg.num_heads, &mut rng)?;
            init_gat(&mut store, &format!("{p}.gat2"), d_h, cfg.num_heads, &mut rng)?;
        }
        if cfg.use_temporal_mamba {
            init_ssm(&mut store, &format!("{p}.mamba_t"), d_h, cfg.d_state, cfg.expand, &mut rng)?;
        }
        if cfg.use_spatial_mamba {
            init_ssm(&mut store, &format!("{p}.mamba_s"), d_h, cfg.d_state, cfg.expand, &mut rng)?;
        }
        for ln in 1..=4 {
            store.insert(format!("{p}.ln{ln}.gamma"), init::constant(&[d_h], 1.0))?;
            store.insert(format!("{p}.ln{ln}.beta"), init::constant(&[d_h], 0.0))?;
        }
    }
    let flat = cfg.t_in * d_h;
    store.insert("regression.w", init::fan_in(&mut rng, &[cfg.t_out, flat], flat))?;
    store.insert("regression.b", init::fan_in(&mut rng, &[cfg.t_out], flat))?;
    Ok(store)
}

/// What to record during a forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct Capture {
    pub attention: bool,
    pub scan: bool,
}

/// Attention snapshot of one stage: (block, stage 1 = temporal / 2 = spatial).
pub type StageSnapshot = (usize, u8, AttentionSnapshot);

pub struct ForwardOutput {
    /// `[B, N, T']` (or `[N, T']` for unbatched input), normalized scale.
    pub y_hat: Tensor,
    pub attention: Vec<StageSnapshot>,
    pub scan: Option<ScanTrace>,
}

fn residual_ln(a: &Tensor, b: &Tensor, store: &ParamStore, prefix: &str) -> Result<Tensor> {
    a.add(b)?.layer_norm(
        store.get(&format!("{prefix}.gamma"))?,
        store.get(&format!("{prefix}.beta"))?,
        LN_EPS,
    )
}

struct Stage<'a> {
    block: usize,
    gat: &'a str,
    gat_id: u8,
    mamba: &'a str,
    axis: ScanAxis,
    ln: (&'a str, &'a str),
    use_mamba: bool,
}

/// Runs the model on `x` shaped `[T, N, 3]` or `[B, T, N, 3]`.
pub fn forward(
    x: &Tensor,
    topo: &GraphTopology,
    store: &ParamStore,
    cfg: &ModelConfig,
    capture: Capture,
) -> Result<ForwardOutput> {
    let shape = x.shape().to_vec();
    let batched = shape.len() == 4;
    if !(shape.len() == 3 || batched) || shape[shape.len() - 1] != INPUT_CHANNELS {
        return Err(Error::InvalidShape(format!(
            "model input must be [T, N, 3] or [B, T, N, 3], got {shape:?}"
        )));
    }
    let (t, n) = (shape[shape.len() - 3], shape[shape.len() - 2]);
    let b = if batched { shape[0] } else { 1 };
    if t != cfg.t_in {
        return Err(Error::shape("forward (window)", &[t], &[cfg.t_in]));
    }
    if n != topo.num_nodes() {
        return Err(Error::shape("forward (nodes)", &[n], &[topo.num_nodes()]));
    }
    let x = x.reshape(&[b, t, n, INPUT_CHANNELS])?;
    let mut z = embed(&x, &EmbeddingParams::from_store(store, "embed")?)?;

    let mut attention = Vec::new();
    let mut trace = capture.scan.then(|| ScanTrace { layers: Vec::new() });
    let stages = (0..cfg.num_layers)
        .map(|i| Stage {
            block: i,
            gat: "gat1",
            gat_id: 1,
            mamba: "mamba_t",
            axis: ScanAxis::Time,
            ln: ("ln1", "ln2"),
            use_mamba: cfg.use_temporal_mamba,
        })
        .chain((0..cfg.num_layers).map(|i| Stage {
            block: i,
            gat: "gat2",
            gat_id: 2,
            mamba: "mamba_s",
            axis: ScanAxis::Space,
            ln: ("ln3", "ln4"),
            use_mamba: cfg.use_spatial_mamba,
        }));
    for st in stages {
        let p = format!("block.{}", st.block);
        let h = if cfg.use_gat {
            let params = GatParams::from_store(store, &format!("{p}.{}", st.gat), cfg.num_heads)?;
            let (h, snap) = gat_over_frames(&z, topo, &params, capture.attention)?;
            if let Some(s) = snap {
                attention.push((st.block, st.gat_id, s));
            }
            h
        } else {
            z.clone()
        };
        let h_hat = residual_ln(&h, &z, store, &format!("{p}.{}", st.ln.0))?;
        let m = if st.use_mamba {
            let params = SsmParams::from_store(store, &format!("{p}.{}", st.mamba))?;
            let mut acc = trace
                .as_ref()
                .map(|_| TransitionAccumulator::new(params.d_inner(), params.d_state()));
            let m = mamba_over_axis(&h_hat, st.axis, &params, acc.as_mut())?;
            if let (Some(tr), Some(acc)) = (trace.as_mut(), acc) {
                tr.layers.push((st.block, st.axis, acc.d_inner, acc.d_state, acc.mean()));
            }
            m
        } else {
            h_hat.clone()
        };
        z = residual_ln(&m, &h_hat, store, &format!("{p}.{}", st.ln.1))?;
    }

    let d_h = cfg.hidden();
    let flat = z
        .transpose_axes(&[0, 2, 1, 3])?
        .reshape(&[b * n, t * d_h])?;
    let y = flat.linear(store.get("regression.w")?, Some(store.get("regression.b")?))?;
    let y_hat = if batched {
        y.reshape(&[b, n, cfg.t_out])?
    } else {
        y.reshape(&[n, cfg.t_out])?
    };
    Ok(ForwardOutput {
        y_hat,
        attention,
        scan: trace,
    })
}

/// Everything besides the weights that a checkpoint needs to be reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub norm: NormStats,
    pub num_nodes: usize,
    pub steps_per_day: usize,
    pub seed: u64,
    pub epoch: usize,
}

pub fn save_checkpoint(dir: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    store.save(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Err(Error::MissingFile(cfg_path));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&std::fs::read(&cfg_path)?)?;
    let store = ParamStore::load(dir)?;
    let expected = init_params(&meta.model, meta.num_nodes, meta.steps_per_day, 0)?;
    for (path, t) in expected.iter() {
        let got = store
            .get(path)
            .map_err(|_| Error::Checkpoint(format!("missing tensor {path}")))?;
        if got.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "{path}: shape {:?}, config implies {:?}",
                got.shape(),
                t.shape()
            )));
        }
    }
    if store.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, config implies {}",
            store.len(),
            expected.len()
        )));
    }
    Ok((store, meta))
}
