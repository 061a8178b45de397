//! Command-line entry point: `synth`, `train`, `eval`, `predict`, `analyze`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    build_attention_graph, louvain, peak_regression, svd_report, write_community_files,
    write_peak_fits, write_svd_report,
};
use crate::data::{load_dataset, split, window_anchors, SplitName, SplitRanges, TrafficDataset};
use crate::error::{Error, Result};
use crate::gat::AttentionSnapshot;
use crate::model::{forward, load_checkpoint, save_checkpoint, Capture, CheckpointMeta, ModelConfig};
use crate::tensor::{no_grad, ParamStore, Tensor};
use crate::train::{evaluate, train_with_progress, write_history, Predictor, TrainConfig};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const HISTORY_FILE: &str = "history.csv";
/// Windows fed through the model when capturing attention or transitions.
const PROBE_WINDOWS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub split_ratios: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            split_ratios: [0.7, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub attention_threshold: f64,
    pub peak_window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            attention_threshold: 0.1,
            peak_window: 12,
        }
    }
}

/// Run configuration; every field may be omitted from the JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.model.problems();
        out.extend(self.train.problems());
        let r = self.data.split_ratios;
        if r.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            out.push(format!("data.split_ratios must all be positive, got {r:?}"));
        }
        if !self.analysis.attention_threshold.is_finite() {
            out.push("analysis.attention_threshold must be finite".into());
        }
        if self.analysis.peak_window == 0 {
            out.push("analysis.peak_window must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid configuration:\n  {}", p.join("\n  "))))
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gammanet", about = "Spatio-temporal traffic forecasting with graph attention and selective scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Val => SplitName::Val,
            SplitArg::Test => SplitName::Test,
        }
    }
}

impl SplitArg {
    fn as_str(&self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Val => "val",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Ssm,
    Attention,
    Peaks,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Report path; defaults to `<checkpoint>/eval_<split>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-node predictions for one window.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        window_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability, attention-community or peak analyses.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        what: AnalysisKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory; overrides `data.dir`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

impl TrainArgs {
    /// Defaults, then the config file, then flags.
    pub fn merged_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data.dir = Some(d.clone());
        }
        if let Some(v) = self.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience = v;
        }
        if let Some(v) = self.max_batches_per_epoch {
            cfg.train.max_batches_per_epoch = Some(v);
        }
        Ok(cfg)
    }
}

fn splits_for(ds: &TrafficDataset, ratios: [f64; 3]) -> Result<SplitRanges> {
    split(ds.num_steps, (ratios[0], ratios[1], ratios[2]))
}

/// Split ratios recorded next to a checkpoint, or the defaults.
fn checkpoint_ratios(dir: &Path) -> Result<[f64; 3]> {
    let p = dir.join(RUN_CONFIG_FILE);
    Ok(if p.exists() {
        RunConfig::from_file(&p)?.data.split_ratios
    } else {
        DataConfig::default().split_ratios
    })
}

fn load_matching(checkpoint: &Path, data: &Path) -> Result<(ParamStore, CheckpointMeta, TrafficDataset)> {
    let (store, meta) = load_checkpoint(checkpoint)?;
    let ds = load_dataset(data)?;
    if ds.num_nodes() != meta.num_nodes {
        return Err(Error::shape("checkpoint vs dataset nodes", &[meta.num_nodes], &[ds.num_nodes()]));
    }
    if ds.steps_per_day() != meta.steps_per_day {
        return Err(Error::shape(
            "checkpoint vs dataset steps per day",
            &[meta.steps_per_day],
            &[ds.steps_per_day()],
        ));
    }
    Ok((store, meta, ds))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.merged_config()?;
    cfg.validate()?;
    let dir = cfg
        .data
        .dir
        .clone()
        .ok_or_else(|| Error::Config("no dataset: pass --data or set data.dir".into()))?;
    let ds = load_dataset(&dir)?;
    let splits = splits_for(&ds, cfg.data.split_ratios)?;
    std::fs::create_dir_all(&args.out)?;
    cfg.write(&args.out.join(RUN_CONFIG_FILE))?;
    let quiet = args.quiet;
    let outcome = train_with_progress(&ds, &splits, &cfg.model, &cfg.train, &mut |r| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.4}  val mae {:.4}{}",
                r.epoch,
                r.train_loss,
                r.val_mae,
                if r.is_best { "  *" } else { "" }
            );
        }
    })?;
    save_checkpoint(&args.out, &outcome.best, &outcome.meta)?;
    write_history(&args.out.join(HISTORY_FILE), &outcome.history)?;
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, which: SplitArg, out: Option<&Path>) -> Result<()> {
    let (store, meta, ds) = load_matching(checkpoint, data)?;
    let splits = splits_for(&ds, checkpoint_ratios(checkpoint)?)?;
    let range = splits.get(which.into());
    let report = evaluate(&store, &meta, &ds, which.as_str(), range)?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.join(format!("eval_{}.json", which.as_str())));
    report.write_json(&path)
}

pub fn cmd_predict(
    checkpoint: &Path,
    data: &Path,
    which: SplitArg,
    window_index: usize,
    out: &Path,
) -> Result<()> {
    let (store, meta, ds) = load_matching(checkpoint, data)?;
    let splits = splits_for(&ds, checkpoint_ratios(checkpoint)?)?;
    let (t_in, t_out) = (meta.model.t_in, meta.model.t_out);
    let anchors = window_anchors(&splits.get(which.into()), t_in, t_out)?;
    let &anchor = anchors.get(window_index).ok_or(Error::Index {
        what: "window",
        index: window_index,
        len: anchors.len(),
    })?;
    let predictor = Predictor {
        store: &store,
        cfg: &meta.model,
        norm: meta.norm,
    };
    let (pred, y, mask) = predictor.score(&ds, &[anchor])?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["node", "horizon", "y_true", "y_pred", "masked"])?;
    for node in 0..ds.num_nodes() {
        for h in 0..t_out {
            let i = node * t_out + h;
            w.write_record([
                node.to_string(),
                (h + 1).to_string(),
                format!("{:?}", y[i]),
                format!("{:?}", pred[i]),
                (!mask[i]).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evenly spaced windows of the test split for capture passes.
fn probe_input(ds: &TrafficDataset, meta: &CheckpointMeta, splits: &SplitRanges) -> Result<Tensor> {
    let (t_in, t_out) = (meta.model.t_in, meta.model.t_out);
    let all = window_anchors(&splits.test, t_in, t_out)?;
    let k = all.len().min(PROBE_WINDOWS);
    let anchors: Vec<usize> = (0..k).map(|i| all[i * all.len() / k]).collect();
    let b = ds.batch(&anchors, t_in, t_out, &meta.norm);
    Tensor::new(&[b.size, t_in, ds.num_nodes(), 3], b.x)
}

/// Frame-weighted mean of every captured attention stage.
pub fn mean_attention(stages: &[(usize, u8, AttentionSnapshot)]) -> Option<AttentionSnapshot> {
    let mut iter = stages.iter();
    let mut acc = iter.next()?.2.clone();
    for (i, (_, _, s)) in iter.enumerate() {
        acc.merge(s, i + 1, 1);
    }
    Some(acc)
}

pub fn cmd_analyze(
    checkpoint: &Path,
    data: &Path,
    what: AnalysisKind,
    out: &Path,
    threshold: Option<f64>,
    window: Option<usize>,
) -> Result<()> {
    let (store, meta, ds) = load_matching(checkpoint, data)?;
    let splits = splits_for(&ds, checkpoint_ratios(checkpoint)?)?;
    let analysis = {
        let p = checkpoint.join(RUN_CONFIG_FILE);
        if p.exists() {
            RunConfig::from_file(&p)?.analysis
        } else {
            AnalysisConfig::default()
        }
    };
    std::fs::create_dir_all(out)?;
    match what {
        AnalysisKind::Ssm => {
            let x = probe_input(&ds, &meta, &splits)?;
            let capture = Capture {
                attention: false,
                scan: true,
            };
            let res = no_grad(|| forward(&x, &ds.topology, &store, &meta.model, capture))?;
            let trace = res.scan.expect("scan capture requested");
            trace.write_csv(&out.join("abar.csv"))?;
            let entries = svd_report(&trace)?;
            write_svd_report(out, &entries)?;
        }
        AnalysisKind::Attention => {
            let threshold = threshold.unwrap_or(analysis.attention_threshold);
            let x = probe_input(&ds, &meta, &splits)?;
            let capture = Capture {
                attention: true,
                scan: false,
            };
            let res = no_grad(|| forward(&x, &ds.topology, &store, &meta.model, capture))?;
            let mut graph = match mean_attention(&res.attention) {
                Some(snap) => {
                    snap.write_csv(&out.join("attention.csv"))?;
                    build_attention_graph(&snap, threshold)
                }
                None => crate::analysis::WeightedGraph::new(ds.num_nodes()),
            };
            graph.num_nodes = ds.num_nodes();
            let report = louvain(&graph, threshold);
            write_community_files(out, &graph, &report)?;
        }
        AnalysisKind::Peaks => {
            let window = window.unwrap_or(analysis.peak_window);
            let (t_in, t_out) = (meta.model.t_in, meta.model.t_out);
            let anchors = window_anchors(&splits.test, t_in, t_out)?;
            let predictor = Predictor {
                store: &store,
                cfg: &meta.model,
                norm: meta.norm,
            };
            let (pred, y, _) = predictor.score(&ds, &anchors)?;
            let n = ds.num_nodes();
            // one-step-ahead series per node
            let fits: Vec<_> = (0..n)
                .map(|node| {
                    let pick = |v: &[f64]| -> Vec<f64> {
                        (0..anchors.len()).map(|w| v[(w * n + node) * t_out]).collect()
                    };
                    (node, peak_regression(&pick(&y), &pick(&pred), window))
                })
                .collect();
            write_peak_fits(&out.join("peaks.csv"), &fits)?;
        }
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            nodes,
            days,
            seed,
            out,
        } => crate::data::synth_dataset(nodes, days, seed)?.save(&out),
        Command::Train(args) => cmd_train(&args),
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => cmd_eval(&checkpoint, &data, split, out.as_deref()),
        Command::Predict {
            checkpoint,
            data,
            split,
            window_index,
            out,
        } => cmd_predict(&checkpoint, &data, split, window_index, &out),
        Command::Analyze {
            checkpoint,
            data,
            what,
            out,
            threshold,
            window,
        } => cmd_analyze(&checkpoint, &data, what, &out, threshold, window),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
