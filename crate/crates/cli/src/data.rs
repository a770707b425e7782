use crate::config::{usage, DataArgs, SyntheticArgs};
use anyhow::Context;
use lcgnn_core::dense::DenseMatrix;
use lcgnn_core::graph::Graph;
use lcgnn_core::io::{
    read_edge_list, read_features, read_labels, read_split, write_edge_list, write_features_bin, write_labels,
    write_split,
};
use lcgnn_core::synthetic::{gen_synthetic, Split};
use std::path::{Path, PathBuf};

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLIT_FILE: &str = "split.txt";

pub struct Loaded {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub labels: Option<Vec<usize>>,
    pub split: Option<Split>,
}

impl Loaded {
    /// `Ã` entries: self-loops plus both directions of every edge.
    pub fn nnz(&self) -> usize {
        self.graph.num_nodes() + 2 * self.graph.num_edges()
    }

    pub fn problem(&self) -> lcgnn_core::block::ProblemSize {
        lcgnn_core::block::ProblemSize {
            n: self.graph.num_nodes(),
            nnz: self.nnz(),
            d: self.features.cols(),
        }
    }

    pub fn labelled(&self) -> anyhow::Result<(&[usize], &Split)> {
        match (&self.labels, &self.split) {
            (Some(l), Some(s)) => Ok((l, s)),
            _ => Err(usage(
                "this command needs labels and a split (--labels/--split or --data)",
            )),
        }
    }
}

/// What to do when neither files nor generator parameters were given.
#[derive(Clone, Copy)]
pub enum Fallback {
    Refuse,
    Synthetic { n: usize },
}

struct Paths {
    edges: PathBuf,
    features: PathBuf,
    labels: Option<PathBuf>,
    split: Option<PathBuf>,
}

fn resolve_paths(d: &DataArgs) -> anyhow::Result<Paths> {
    let in_dir = |name: &str| d.dir.as_ref().map(|dir| dir.join(name));
    let features = d.features.clone().or_else(|| {
        let bin = in_dir(FEATURES_FILE)?;
        let csv = in_dir("features.csv")?;
        Some(if !bin.exists() && csv.exists() { csv } else { bin })
    });
    let edges = d.edges.clone().or_else(|| in_dir(EDGES_FILE));
    let labels = d.labels.clone().or_else(|| in_dir(LABELS_FILE));
    let split = d.split.clone().or_else(|| in_dir(SPLIT_FILE));
    let (Some(edges), Some(features)) = (edges, features) else {
        return Err(usage("data: both an edge list and a feature matrix are required"));
    };
    let exists = |field: &str, p: &Path| -> anyhow::Result<()> {
        if p.is_file() {
            Ok(())
        } else {
            Err(usage(format!("data.{field}: {} does not exist", p.display())))
        }
    };
    exists("edges", &edges)?;
    exists("features", &features)?;
    // labels/split from a directory are optional; explicit ones must exist
    let optional =
        |explicit: &Option<PathBuf>, derived: Option<PathBuf>, field: &str| -> anyhow::Result<Option<PathBuf>> {
            match (explicit, derived) {
                (Some(p), _) => exists(field, p).map(|_| Some(p.clone())),
                (None, Some(p)) if p.is_file() => Ok(Some(p)),
                _ => Ok(None),
            }
        };
    Ok(Paths {
        labels: optional(&d.labels, labels, "labels")?,
        split: optional(&d.split, split, "split")?,
        edges,
        features,
    })
}

pub fn load(data: &DataArgs, synth: &SyntheticArgs, seed: u64, fallback: Fallback) -> anyhow::Result<Loaded> {
    let has_paths = *data != DataArgs::default();
    if has_paths && synth.any_set() {
        return Err(usage("give either dataset paths or synthetic parameters, not both"));
    }
    if has_paths {
        let p = resolve_paths(data)?;
        let features = read_features(&p.features)?;
        let n = features.rows();
        let graph =
            read_edge_list(&p.edges, n).with_context(|| format!("{} has {n} feature rows", p.features.display()))?;
        let labels = p.labels.as_deref().map(read_labels).transpose()?;
        let split = p.split.as_deref().map(read_split).transpose()?;
        if let Some(l) = &labels {
            anyhow::ensure!(l.len() == n, "{} labels for {n} nodes", l.len());
        }
        if let Some(s) = &split {
            anyhow::ensure!(s.len() == n, "{} split entries for {n} nodes", s.len());
        }
        return Ok(Loaded {
            graph,
            features,
            labels,
            split,
        });
    }
    let default_n = match (synth.any_set(), fallback) {
        (true, Fallback::Synthetic { n }) => n,
        (true, Fallback::Refuse) => 2000,
        (false, Fallback::Synthetic { n }) => n,
        (false, Fallback::Refuse) => {
            return Err(usage("no dataset: pass --data DIR, --edges/--features, or --synthetic"));
        }
    };
    let cfg = synth.resolve(seed, default_n)?;
    log::info!("generating synthetic dataset: {cfg:?}");
    let ds = gen_synthetic(&cfg).map_err(|e| usage(format!("synthetic: {e}")))?;
    Ok(Loaded {
        graph: ds.graph,
        features: ds.features,
        labels: Some(ds.labels),
        split: Some(ds.split),
    })
}

pub fn write_dataset(dir: &Path, d: &Loaded) -> anyhow::Result<()> {
    write_edge_list(&dir.join(EDGES_FILE), &d.graph)?;
    write_features_bin(&dir.join(FEATURES_FILE), &d.features)?;
    if let Some(l) = &d.labels {
        write_labels(&dir.join(LABELS_FILE), l)?;
    }
    if let Some(s) = &d.split {
        write_split(&dir.join(SPLIT_FILE), s)?;
    }
    Ok(())
}
