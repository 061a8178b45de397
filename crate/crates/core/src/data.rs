//! Traffic dataset ingestion, chronological splits, sliding windows and a
//! deterministic synthetic generator.
//!
//! On-disk layout of a dataset directory:
//!
//! * `flow.csv`: `timestamp,node_0,...,node_{N-1}`, one row per interval
//! * `edges.csv`: `src,dst`, one physical link per row, 0-based
//! * `meta.json`: `{"interval_minutes", "num_nodes", "start"}`
//!
//! A flow of exactly `0.0` is a missing reading.

use std::collections::BTreeSet;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDateTime, TimeDelta, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const DAYS_PER_WEEK: usize = 7;

/// Undirected physical connectivity with self-loops, stored as a sorted,
/// duplicate-free list of directed pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphTopology {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphTopology {
    /// Symmetrizes `links` and adds a self-loop on every node.
    pub fn from_links(num_nodes: usize, links: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Config("a graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(s, d) in links {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    src: s,
                    dst: d,
                    num_nodes,
                });
            }
            set.insert((s, d));
            set.insert((d, s));
        }
        for i in 0..num_nodes {
            set.insert((i, i));
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Physical links without self-loops, each undirected pair once.
    pub fn links(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().filter(|&(s, d)| s < d).collect()
    }

    /// For every destination, the indices (into [`edges`](Self::edges)) of
    /// its incoming edges, ordered by source.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.num_nodes];
        for (e, &(_, d)) in self.edges.iter().enumerate() {
            inc[d].push(e);
        }
        inc
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(s, d)| s == node && d != node)
            .map(|&(_, d)| d)
    }

    /// Applies a node relabelling `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let links: Vec<_> = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        Self::from_links(self.num_nodes, &links)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub interval_minutes: u32,
    pub num_nodes: usize,
    pub start: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficDataset {
    /// Row-major `[num_steps × num_nodes]`.
    pub flow: Vec<f64>,
    pub num_steps: usize,
    pub tod_index: Vec<usize>,
    pub dow_index: Vec<usize>,
    pub topology: GraphTopology,
    pub interval_minutes: u32,
    pub start: NaiveDateTime,
}

impl TrafficDataset {
    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn steps_per_day(&self) -> usize {
        (1440 / self.interval_minutes) as usize
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.num_nodes();
        &self.flow[t * n..(t + 1) * n]
    }

    pub fn series(&self, node: usize) -> Vec<f64> {
        (0..self.num_steps).map(|t| self.row(t)[node]).collect()
    }

    pub fn timestamp(&self, t: usize) -> NaiveDateTime {
        self.start + TimeDelta::minutes(t as i64 * self.interval_minutes as i64)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            interval_minutes: self.interval_minutes,
            num_nodes: self.num_nodes(),
            start: self.start.format(TIMESTAMP_FORMAT).to_string(),
        }
    }

    /// Writes the three-file directory format.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let n = self.num_nodes();
        let mut w = csv::Writer::from_path(dir.join("flow.csv"))?;
        let mut header = vec!["timestamp".to_string()];
        header.extend((0..n).map(|i| format!("node_{i}")));
        w.write_record(&header)?;
        for t in 0..self.num_steps {
            let mut rec = vec![self.timestamp(t).format(TIMESTAMP_FORMAT).to_string()];
            rec.extend(self.row(t).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record(["src", "dst"])?;
        for (s, d) in self.topology.links() {
            w.write_record([s.to_string(), d.to_string()])?;
        }
        w.flush()?;

        fs::write(
            dir.join("meta.json"),
            serde_json::to_vec_pretty(&self.meta())?,
        )?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let spd = self.steps_per_day();
        for t in 1..self.num_steps {
            let (pt, pd) = (self.tod_index[t - 1], self.dow_index[t - 1]);
            let want_tod = (pt + 1) % spd;
            let want_dow = if want_tod == 0 { (pd + 1) % DAYS_PER_WEEK } else { pd };
            if self.tod_index[t] != want_tod || self.dow_index[t] != want_dow {
                return Err(Error::Contract(format!(
                    "calendar indices do not advance by one interval at row {t}"
                )));
            }
        }
        Ok(())
    }
}

fn calendar_indices(ts: NaiveDateTime, interval: u32) -> (usize, usize) {
    let minutes = ts.hour() * 60 + ts.minute();
    (
        (minutes / interval) as usize,
        ts.weekday().num_days_from_monday() as usize,
    )
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok())
        .or_else(|| {
            chrono::DateTime::parse_from_rfc3339(s)
                .ok()
                .map(|d| d.naive_local())
        })
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<TrafficDataset> {
    let flow_path = require(dir.join("flow.csv"))?;
    let edges_path = require(dir.join("edges.csv"))?;
    let meta_path = require(dir.join("meta.json"))?;

    let meta: DatasetMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    if meta.interval_minutes == 0 || 1440 % meta.interval_minutes != 0 {
        return Err(Error::BadInterval(meta.interval_minutes));
    }
    let start = parse_timestamp(&meta.start).ok_or_else(|| Error::Parse {
        file: meta_path.clone(),
        line: 1,
        msg: format!("bad start timestamp {:?}", meta.start),
    })?;
    let n = meta.num_nodes;

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(&flow_path)?;
    let header = rdr.headers()?.clone();
    if header.len() != n + 1 {
        return Err(Error::RaggedRow {
            file: flow_path,
            line: 1,
            expected: n + 1,
            found: header.len(),
        });
    }
    let mut flow = Vec::new();
    let mut tod_index = Vec::new();
    let mut dow_index = Vec::new();
    let step = TimeDelta::minutes(meta.interval_minutes as i64);
    let mut prev: Option<NaiveDateTime> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n + 1 {
            return Err(Error::RaggedRow {
                file: flow_path,
                line,
                expected: n + 1,
                found: rec.len(),
            });
        }
        let bad = |msg: String| Error::Parse {
            file: flow_path.clone(),
            line,
            msg,
        };
        let ts = parse_timestamp(rec[0].trim())
            .ok_or_else(|| bad(format!("bad timestamp {:?}", &rec[0])))?;
        if let Some(p) = prev {
            if ts - p != step {
                return Err(bad(format!(
                    "timestamp {ts} is not one interval after {p}"
                )));
            }
        } else if ts != start {
            return Err(bad(format!("first timestamp {ts} differs from meta start {start}")));
        }
        prev = Some(ts);
        let (tod, dow) = calendar_indices(ts, meta.interval_minutes);
        tod_index.push(tod);
        dow_index.push(dow);
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad flow value {field:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("flow must be finite and >= 0, got {v}")));
            }
            flow.push(v);
        }
    }
    let num_steps = tod_index.len();
    if num_steps == 0 {
        return Err(Error::Parse {
            file: flow_path,
            line: 2,
            msg: "no data rows".into(),
        });
    }

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(&edges_path)?;
    let mut links = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::RaggedRow {
                file: edges_path,
                line,
                expected: 2,
                found: rec.len(),
            });
        }
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| Error::Parse {
                file: edges_path.clone(),
                line,
                msg: format!("bad node index {s:?}"),
            })
        };
        links.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    let topology = GraphTopology::from_links(n, &links)?;

    let ds = TrafficDataset {
        flow,
        num_steps,
        tod_index,
        dow_index,
        topology,
        interval_minutes: meta.interval_minutes,
        start,
    };
    ds.validate()?;
    Ok(ds)
}

/// Chronological train/validation/test row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected one of train, val, test"
            ))),
        }
    }
}

impl SplitRanges {
    pub fn get(&self, which: SplitName) -> Range<usize> {
        match which {
            SplitName::Train => self.train.clone(),
            SplitName::Val => self.val.clone(),
            SplitName::Test => self.test.clone(),
        }
    }

    /// Fails unless every range holds at least one window of `need` rows.
    pub fn check_windows(&self, need: usize) -> Result<()> {
        for (name, r) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if r.len() < need {
                return Err(Error::Config(format!(
                    "{name} split has {} rows, fewer than one window of {need}",
                    r.len()
                )));
            }
        }
        Ok(())
    }
}

/// Splits `total` rows by `ratios` (parts or fractions). Train and
/// validation lengths are floored; the remainder goes to test.
pub fn split(total: usize, ratios: (f64, f64, f64)) -> Result<SplitRanges> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!("split ratios must be >= 0, got {ratios:?}")));
    }
    if b <= 0.0 || a <= 0.0 || c <= 0.0 {
        return Err(Error::Config(format!(
            "train, validation and test splits are all required, got {ratios:?}"
        )));
    }
    let sum = a + b + c;
    let part = |r: f64| ((total as f64) * r / sum + 1e-9).floor() as usize;
    let n_train = part(a);
    let n_val = part(b);
    if n_train == 0 || n_val == 0 || n_train + n_val >= total {
        return Err(Error::Config(format!(
            "{total} rows cannot be split by {ratios:?}"
        )));
    }
    Ok(SplitRanges {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..total,
    })
}

/// Global z-score statistics over nonzero training flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    pub fn fit(ds: &TrafficDataset, rows: Range<usize>) -> Result<Self> {
        let n = ds.num_nodes();
        let vals: Vec<f64> = ds.flow[rows.start * n..rows.end * n]
            .iter()
            .copied()
            .filter(|&v| v != 0.0)
            .collect();
        if vals.is_empty() {
            return Err(Error::Config("training range has no valid readings".into()));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let std = var.sqrt();
        if !(std > 0.0) {
            return Err(Error::Config(
                "training flows have zero variance; cannot normalize".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// One input/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Anchor row: inputs cover `anchor..anchor+T`.
    pub anchor: usize,
    /// `[T × N × 3]`: normalized flow, time-of-day index, day-of-week index.
    pub x: Vec<f64>,
    /// `[N × T']`, raw scale.
    pub y: Vec<f64>,
    pub y_mask: Vec<bool>,
}

/// Batched samples in the layouts consumed by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// `[B × T × N × 3]`
    pub x: Vec<f64>,
    /// `[B × N × T']`
    pub y: Vec<f64>,
    pub y_mask: Vec<bool>,
}

/// Anchors of all stride-1 windows that fit inside `range`.
pub fn window_anchors(range: &Range<usize>, t_in: usize, t_out: usize) -> Result<Vec<usize>> {
    let need = t_in + t_out;
    if range.len() < need {
        return Err(Error::EmptyWindow {
            len: range.len(),
            need,
        });
    }
    Ok((range.start..=range.end - need).collect())
}

impl TrafficDataset {
    pub fn sample(&self, anchor: usize, t_in: usize, t_out: usize, stats: &NormStats) -> WindowSample {
        let n = self.num_nodes();
        let mut x = Vec::with_capacity(t_in * n * 3);
        for t in anchor..anchor + t_in {
            let (tod, dow) = (self.tod_index[t] as f64, self.dow_index[t] as f64);
            for &v in self.row(t) {
                x.extend_from_slice(&[stats.normalize(v), tod, dow]);
            }
        }
        let mut y = Vec::with_capacity(n * t_out);
        for node in 0..n {
            for j in 0..t_out {
                y.push(self.row(anchor + t_in + j)[node]);
            }
        }
        let y_mask = y.iter().map(|&v| v != 0.0).collect();
        WindowSample { anchor, x, y, y_mask }
    }

    pub fn batch(&self, anchors: &[usize], t_in: usize, t_out: usize, stats: &NormStats) -> Batch {
        let mut b = Batch {
            size: anchors.len(),
            x: Vec::new(),
            y: Vec::new(),
            y_mask: Vec::new(),
        };
        for &a in anchors {
            let s = self.sample(a, t_in, t_out, stats);
            b.x.extend(s.x);
            b.y.extend(s.y);
            b.y_mask.extend(s.y_mask);
        }
        b
    }
}

/// All stride-1 windows of `range`.
pub fn make_windows(
    ds: &TrafficDataset,
    range: Range<usize>,
    t_in: usize,
    t_out: usize,
    stats: &NormStats,
) -> Result<Vec<WindowSample>> {
    Ok(window_anchors(&range, t_in, t_out)?
        .into_iter()
        .map(|a| ds.sample(a, t_in, t_out, stats))
        .collect())
}

/// Knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub interval_minutes: u32,
    /// Fraction of readings replaced by 0.0 (missing).
    pub dropout: f64,
    /// Expected congestion events per node per day.
    pub events_per_node_day: f64,
    pub noise_std: f64,
    /// Amplitude of the city-wide daily texture, relative to node level.
    pub texture: f64,
    /// Height of the weekday rush-hour peaks, relative to node level.
    pub rush: f64,
    /// Rush-hour peak width in hours.
    pub rush_width: f64,
    /// Steps a congestion wave needs to cross one edge.
    pub hop_delay: usize,
    /// Waves fade out beyond this many hops from their origin.
    pub max_hops: usize,
    /// Fraction of waves that travel toward higher node indices.
    pub downstream_share: f64,
    /// Per-hop amplitude retention.
    pub hop_decay: f64,
    /// Range of node base levels.
    pub level_range: (f64, f64),
    pub start: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            interval_minutes: 5,
            dropout: 0.01,
            events_per_node_day: 0.3,
            noise_std: 2.0,
            texture: 0.05,
            rush: 0.8,
            rush_width: 1.0,
            hop_delay: 6,
            max_hops: 8,
            hop_decay: 0.95,
            downstream_share: 0.2,
            level_range: (40.0, 400.0),
            start: "2024-01-01T00:00:00".into(),
        }
    }
}

pub fn synth_dataset(num_nodes: usize, days: usize, seed: u64) -> Result<TrafficDataset> {
    synth_dataset_with(num_nodes, days, seed, &SynthOptions::default())
}

/// Ring-plus-chords road graph carrying a daily demand profile, a weekend
/// level shift, and congestion waves that travel along edges with a fixed
/// per-hop delay, passed through a capacity saturation.
pub fn synth_dataset_with(
    num_nodes: usize,
    days: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<TrafficDataset> {
    if num_nodes < 2 {
        return Err(Error::Config(format!("synthetic data needs >= 2 nodes, got {num_nodes}")));
    }
    if days == 0 {
        return Err(Error::Config("synthetic data needs >= 1 day".into()));
    }
    if opts.interval_minutes == 0 || 1440 % opts.interval_minutes != 0 {
        return Err(Error::BadInterval(opts.interval_minutes));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::Config(format!("dropout must be in [0, 1), got {}", opts.dropout)));
    }
    let start = parse_timestamp(&opts.start)
        .ok_or_else(|| Error::Config(format!("bad start timestamp {:?}", opts.start)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_nodes;
    let spd = (1440 / opts.interval_minutes) as usize;
    let steps = spd * days;

    let mut links: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..(n / 4) {
        let a = rng.random_range(0..n);
        let b = (a + 2 + rng.random_range(0..n.saturating_sub(3).max(1))) % n;
        if a != b {
            links.push((a, b));
        }
    }
    let topology = GraphTopology::from_links(n, &links)?;

    let (lo, hi) = opts.level_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!("level_range must satisfy 0 < lo < hi, got {:?}", opts.level_range)));
    }
    let level: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    let capacity: Vec<f64> = level.iter().map(|l| l * rng.random_range(1.25..1.45)).collect();
    // recurring city-wide daily texture (schedules, shift changes)
    let texture: Vec<f64> = (0..spd).map(|_| rng.random_range(-1.0..1.0)).collect();

    // congestion events: (origin, start step, depth, duration)
    let hop_delay = opts.hop_delay;
    let n_events = ((opts.events_per_node_day * (n * days) as f64).round()) as usize;
    let mut congestion = vec![0.0f64; steps * n];
    for _ in 0..n_events {
        let origin = rng.random_range(0..n);
        let t0 = rng.random_range(0..steps);
        let depth = rng.random_range(0.25..0.6);
        let dur = rng.random_range(spd / 48..spd / 16).max(2) as f64;
        // shockwaves run against the ring direction, surges with it
        let step = if rng.random::<f64>() < opts.downstream_share { 1 } else { n - 1 };
        for d in 0..=opts.max_hops.min(n - 1) {
            let v = (origin + d * step) % n;
            let amp = depth * opts.hop_decay.powi(d as i32);
            let onset = t0 + d * hop_delay;
            let span = (3.0 * dur) as usize;
            for t in onset..(onset + span).min(steps) {
                let tau = (t - onset) as f64 / dur;
                // fast onset, slow recovery
                let shape = tau.min(1.0) * (-(tau - 1.0).max(0.0)).exp();
                congestion[t * n + v] = (congestion[t * n + v] + amp * shape).min(0.9);
            }
        }
    }

    let noise = Normal::new(0.0, opts.noise_std.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut flow = vec![0.0; steps * n];
    let mut tod_index = Vec::with_capacity(steps);
    let mut dow_index = Vec::with_capacity(steps);
    for t in 0..steps {
        let ts = start + TimeDelta::minutes(t as i64 * opts.interval_minutes as i64);
        let (tod, dow) = calendar_indices(ts, opts.interval_minutes);
        tod_index.push(tod);
        dow_index.push(dow);
        let day_frac = tod as f64 / spd as f64;
        let weekend = dow >= 5;
        for v in 0..n {
            let x = 2.0 * std::f64::consts::PI * (day_frac + phase[v] / 24.0);
            // low at night, morning and evening peaks on weekdays
            let mut profile = 0.55 - 0.45 * x.cos();
            if !weekend {
                let hour = (24.0 * day_frac + phase[v]).rem_euclid(24.0);
                let bump = |c: f64, w: f64| (-0.5 * ((hour - c) / w).powi(2)).exp();
                profile += opts.rush * (bump(8.0, opts.rush_width) + 0.8 * bump(17.5, opts.rush_width));
            }
            profile += opts.texture * texture[tod];
            let weekly = if weekend { 0.75 } else { 1.0 };
            let demand = level[v] * weekly * profile * (1.0 - congestion[t * n + v]);
            // smooth capacity saturation
            let cap = capacity[v];
            let served = cap * (demand / cap).tanh();
            let value = (served + noise.sample(&mut rng)).max(1.0);
            flow[t * n + v] = (value * 100.0).round() / 100.0;
        }
    }
    if opts.dropout > 0.0 {
        for v in flow.iter_mut() {
            if rng.random::<f64>() < opts.dropout {
                *v = 0.0;
            }
        }
    }

    let ds = TrafficDataset {
        flow,
        num_steps: steps,
        tod_index,
        dow_index,
        topology,
        interval_minutes: opts.interval_minutes,
        start,
    };
    ds.validate()?;
    Ok(ds)
}
