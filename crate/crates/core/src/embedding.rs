//! Input embedding: per-node affine features, time-of-day / day-of-week
//! lookup tables, and a learned window-position × node table.
//!
//! Output layout along the last axis is `[E_f | T_d | T_w | E_a]`, width
//! `3·d_f + d_a`.

use rand::Rng;

use crate::data::DAYS_PER_WEEK;
use crate::error::{Error, Result};
use crate::init;
use crate::tensor::{ParamStore, Tensor};

pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingDims {
    pub d_f: usize,
    pub d_a: usize,
    pub steps_per_day: usize,
    pub window: usize,
    pub num_nodes: usize,
}

impl EmbeddingDims {
    pub fn hidden(&self) -> usize {
        3 * self.d_f + self.d_a
    }
}

pub struct EmbeddingParams<'a> {
    pub w_f: &'a Tensor,
    pub b_f: &'a Tensor,
    pub t_w: &'a Tensor,
    pub t_d: &'a Tensor,
    pub e_a: &'a Tensor,
}

impl<'a> EmbeddingParams<'a> {
    pub fn from_store(store: &'a ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            w_f: store.get(&format!("{prefix}.w_f"))?,
            b_f: store.get(&format!("{prefix}.b_f"))?,
            t_w: store.get(&format!("{prefix}.t_w"))?,
            t_d: store.get(&format!("{prefix}.t_d"))?,
            e_a: store.get(&format!("{prefix}.e_a"))?,
        })
    }
}

pub fn init_embedding(
    store: &mut ParamStore,
    prefix: &str,
    dims: &EmbeddingDims,
    rng: &mut impl Rng,
) -> Result<()> {
    let d_f = dims.d_f;
    store.insert(format!("{prefix}.w_f"), init::fan_in(rng, &[d_f, INPUT_CHANNELS], INPUT_CHANNELS))?;
    store.insert(format!("{prefix}.b_f"), init::fan_in(rng, &[d_f], INPUT_CHANNELS))?;
    store.insert(format!("{prefix}.t_w"), init::normal(rng, &[DAYS_PER_WEEK, d_f], 0.02))?;
    store.insert(format!("{prefix}.t_d"), init::normal(rng, &[dims.steps_per_day, d_f], 0.02))?;
    store.insert(
        format!("{prefix}.e_a"),
        init::normal(rng, &[dims.window, dims.num_nodes, dims.d_a], 0.02),
    )?;
    Ok(())
}

fn index_channel(v: f64, len: usize, what: &'static str) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Contract(format!("{what} index must be a non-negative integer, got {v}")));
    }
    let i = v as usize;
    if i >= len {
        return Err(Error::Index { what, index: i, len });
    }
    Ok(i)
}

/// Embeds `x` shaped `[T, N, 3]` or `[B, T, N, 3]` into `[.., T, N, d_h]`.
/// Channel 0 is normalized flow, channels 1 and 2 are integer time-of-day
/// and day-of-week indices.
pub fn embed(x: &Tensor, params: &EmbeddingParams<'_>) -> Result<Tensor> {
    let shape = x.shape();
    if !(shape.len() == 3 || shape.len() == 4) || shape[shape.len() - 1] != INPUT_CHANNELS {
        return Err(Error::InvalidShape(format!(
            "embedding input must be [T, N, 3] or [B, T, N, 3], got {shape:?}"
        )));
    }
    let (t, n) = (shape[shape.len() - 3], shape[shape.len() - 2]);
    let e_shape = params.e_a.shape();
    if t > e_shape[0] || n != e_shape[1] {
        return Err(Error::shape("embed (window, nodes)", &[t, n], &e_shape[..2]));
    }
    let steps_per_day = params.t_d.shape()[0];
    let d_a = e_shape[2];
    let positions = x.len() / INPUT_CHANNELS;

    let mut feats = Vec::with_capacity(x.len());
    let mut tod = Vec::with_capacity(positions);
    let mut dow = Vec::with_capacity(positions);
    let mut cell = Vec::with_capacity(positions);
    for (p, chunk) in x.data().chunks(INPUT_CHANNELS).enumerate() {
        let td = index_channel(chunk[1], steps_per_day, "time-of-day")?;
        let dw = index_channel(chunk[2], DAYS_PER_WEEK, "day-of-week")?;
        feats.extend_from_slice(&[
            chunk[0],
            td as f64 / steps_per_day as f64,
            dw as f64 / DAYS_PER_WEEK as f64,
        ]);
        tod.push(td);
        dow.push(dw);
        // position within the window and node, for the adaptive table
        let within = p % (t * n);
        cell.push(within);
    }
    let feats = Tensor::new(&[positions, INPUT_CHANNELS], feats)?;
    let e_f = feats.linear(params.w_f, Some(params.b_f))?;
    let p_d = Tensor::gather_rows(params.t_d, &tod, "time-of-day")?;
    let p_w = Tensor::gather_rows(params.t_w, &dow, "day-of-week")?;
    let table = params.e_a.reshape(&[e_shape[0] * n, d_a])?;
    let e_a = Tensor::gather_rows(&table, &cell, "adaptive embedding")?;
    let z = Tensor::concat_last(&[&e_f, &p_d, &p_w, &e_a])?;
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = z.shape()[1];
    z.reshape(&out_shape)
}
