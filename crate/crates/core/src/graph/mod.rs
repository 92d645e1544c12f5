//! Discrete-time dynamic graphs: snapshots over a fixed node set, chronological
//! splits and time windows.

mod generate;
mod io;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_erdos_renyi, generate_sbm, sbm_block_of};
pub use io::{
    load_edge_list, read_metadata, write_edge_list, write_metadata, EdgeListFormat, GraphMeta,
    LoadedGraph,
};

/// Undirected edge stored with `lo < hi`.
pub type Edge = (usize, usize);

#[inline]
pub fn normalize_edge(u: usize, v: usize) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Per-node isolation flags for one snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsolationMask {
    flags: Vec<bool>,
}

impl IsolationMask {
    pub fn from_degrees(degree: &[usize]) -> Self {
        Self {
            flags: degree.iter().map(|&d| d == 0).collect(),
        }
    }

    pub fn is_isolated(&self, u: usize) -> bool {
        self.flags[u]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn isolated_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| !f)
            .map(|(u, _)| u)
    }
}

/// The static graph observed at one time step. Simple and undirected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    edges: BTreeSet<Edge>,
    neighbors: Vec<Vec<usize>>,
}

impl Snapshot {
    /// Builds a snapshot, unifying `(u, v)` with `(v, u)` and dropping
    /// duplicates. Self-loops and out-of-range endpoints are rejected.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Argument(format!(
                    "edge ({u}, {v}) has an endpoint outside [0, {num_nodes})"
                )));
            }
            if u == v {
                return Err(Error::Argument(format!("self-loop on node {u}")));
            }
            set.insert(normalize_edge(u, v));
        }
        Ok(Self::from_edge_set(num_nodes, set))
    }

    pub(crate) fn from_edge_set(num_nodes: usize, edges: BTreeSet<Edge>) -> Self {
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self { edges, neighbors }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::from_edge_set(num_nodes, BTreeSet::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.contains(&normalize_edge(u, v))
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn isolation_mask(&self) -> IsolationMask {
        IsolationMask::from_degrees(&self.degrees())
    }

    pub fn active_count(&self) -> usize {
        self.neighbors.iter().filter(|n| !n.is_empty()).count()
    }
}

/// A time-ordered sequence of snapshots over `num_nodes` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicGraph {
    num_nodes: usize,
    snapshots: Vec<Snapshot>,
}

impl DynamicGraph {
    pub fn new(num_nodes: usize, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Argument("a dynamic graph needs at least one snapshot".into()));
        }
        if let Some(s) = snapshots.iter().find(|s| s.num_nodes() != num_nodes) {
            return Err(Error::Argument(format!(
                "snapshot built for {} nodes in a graph of {num_nodes}",
                s.num_nodes()
            )));
        }
        Ok(Self {
            num_nodes,
            snapshots,
        })
    }

    /// Convenience constructor from per-snapshot edge lists.
    pub fn from_edge_lists(num_nodes: usize, lists: &[Vec<Edge>]) -> Result<Self> {
        let snapshots = lists
            .iter()
            .map(|edges| Snapshot::new(num_nodes, edges.iter().copied()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_nodes, snapshots)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t]
    }

    /// Window of at most `w` snapshots ending at `t`.
    ///
    /// Panics if `t` is not a snapshot index.
    pub fn window_of(&self, t: usize, w: usize) -> Window {
        assert!(
            t < self.num_snapshots(),
            "window end {t} outside [0, {})",
            self.num_snapshots()
        );
        Window::new(t, w)
    }

    pub fn window_snapshots(&self, window: &Window) -> &[Snapshot] {
        &self.snapshots[window.members()]
    }

    /// Fraction of (node, snapshot) slots that are isolated.
    pub fn isolated_fraction(&self) -> f64 {
        let isolated: usize = self
            .snapshots
            .iter()
            .map(|s| s.num_nodes() - s.active_count())
            .sum();
        isolated as f64 / (self.num_nodes * self.snapshots.len()) as f64
    }
}

/// Contiguous run of snapshot indices `[end + 1 - size, end]`, clipped at 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    end: usize,
    size: usize,
}

impl Window {
    /// `w = usize::MAX` selects every snapshot up to `end`.
    pub fn new(end: usize, w: usize) -> Self {
        assert!(w >= 1, "window size must be at least 1");
        Self { end, size: w }
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn start(&self) -> usize {
        (self.end + 1).saturating_sub(self.size)
    }

    pub fn members(&self) -> Range<usize> {
        self.start()..self.end + 1
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// How snapshots are divided into train / validation / test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitSpec {
    /// Fractions of `T`; boundaries rounded down, test takes the remainder.
    Ratio { train: f64, val: f64, test: f64 },
    /// Final `test` snapshots for testing, the `val` before them for validation.
    LastL { test: usize, val: usize },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratio {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_chronological(g: &DynamicGraph, spec: &SplitSpec) -> Result<Split> {
    split_snapshots(g.num_snapshots(), spec)
}

pub fn split_snapshots(num_snapshots: usize, spec: &SplitSpec) -> Result<Split> {
    let t = num_snapshots;
    let (train_end, val_end) = match *spec {
        SplitSpec::Ratio { train, val, test } => {
            if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::Config(format!(
                    "split fractions must lie in [0, 1], got ({train}, {val}, {test})"
                )));
            }
            if train + val + test > 1.0 + 1e-9 {
                return Err(Error::Config(format!(
                    "split fractions sum to {} > 1",
                    train + val + test
                )));
            }
            // Small slack so that 0.7 + 0.15 of 20 floors to 17, not 16.
            let floor = |f: f64| ((t as f64) * f + 1e-9).floor() as usize;
            (floor(train).min(t), floor(train + val).min(t))
        }
        SplitSpec::LastL { test, val } => {
            if test + val >= t {
                return Err(Error::Config(format!(
                    "{t} snapshots cannot hold {test} test and {val} validation snapshots plus a training range"
                )));
            }
            (t - test - val, t - test)
        }
    };
    if train_end == 0 {
        return Err(Error::Config(format!(
            "{t} snapshots leave an empty training range under {spec:?}"
        )));
    }
    if val_end >= t {
        return Err(Error::Config(format!(
            "{t} snapshots leave an empty test range under {spec:?}"
        )));
    }
    Ok(Split {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..t,
    })
}
