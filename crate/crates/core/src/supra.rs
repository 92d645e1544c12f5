//! Connected multi-layer supra-graphs built from a window of snapshots.
//!
//! Three steps make the stacked snapshots connected: isolated nodes are
//! dropped from each layer, each layer gets one virtual node wired to every
//! remaining node, and every node is linked to its own copy in the next layer
//! when it is active in both. Virtual nodes never link to each other unless
//! [`SupraConfig::vn_fallback_link`] is set and a gap would otherwise split
//! the graph.
//!
//! Row layout is canonical: layers in window order, nodes ascending within a
//! layer, the virtual node last.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{IsolationMask, Snapshot, Window};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupraConfig {
    /// Link consecutive virtual nodes when two layers share no active node.
    pub vn_fallback_link: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Node `node` in window layer `tau` (window-relative).
    Node { node: usize, tau: usize },
    Virtual { tau: usize },
}

#[derive(Clone, Debug)]
pub struct SupraGraph {
    adjacency: Vec<Vec<usize>>,
    rows: Vec<RowKind>,
    index: Vec<Vec<Option<usize>>>,
    virtual_rows: Vec<Option<usize>>,
    masks: Vec<IsolationMask>,
    window: Window,
    transformed: bool,
}

struct Builder {
    adjacency: Vec<Vec<usize>>,
    rows: Vec<RowKind>,
}

impl Builder {
    fn push(&mut self, kind: RowKind) -> usize {
        self.rows.push(kind);
        self.adjacency.push(Vec::new());
        self.rows.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        debug_assert_ne!(a, b);
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
    }

    fn finish(mut self) -> (Vec<Vec<usize>>, Vec<RowKind>) {
        for list in &mut self.adjacency {
            list.sort_unstable();
            list.dedup();
        }
        (self.adjacency, self.rows)
    }
}

/// Builds the connected supra-graph of `snapshots`, which must be the members
/// of `window` in order.
pub fn build_supra(snapshots: &[Snapshot], window: Window, cfg: &SupraConfig) -> Result<SupraGraph> {
    if snapshots.is_empty() {
        return Err(Error::Degenerate("empty window".into()));
    }
    if snapshots.len() != window.len() {
        return Err(Error::Argument(format!(
            "{} snapshots given for a window of {} members",
            snapshots.len(),
            window.len()
        )));
    }
    if snapshots.iter().all(|s| s.num_edges() == 0) {
        return Err(Error::Degenerate(format!(
            "every snapshot in window {:?} is empty",
            window.members()
        )));
    }
    let n = snapshots[0].num_nodes();
    let masks: Vec<IsolationMask> = snapshots.iter().map(Snapshot::isolation_mask).collect();

    let mut b = Builder {
        adjacency: Vec::new(),
        rows: Vec::new(),
    };
    let mut index = vec![vec![None; n]; snapshots.len()];
    let mut virtual_rows = Vec::with_capacity(snapshots.len());
    for (tau, (snap, mask)) in snapshots.iter().zip(&masks).enumerate() {
        for u in mask.active_nodes() {
            index[tau][u] = Some(b.push(RowKind::Node { node: u, tau }));
        }
        let vn = b.push(RowKind::Virtual { tau });
        virtual_rows.push(Some(vn));
        for &(u, v) in snap.edges() {
            b.link(index[tau][u].unwrap(), index[tau][v].unwrap());
        }
        for u in mask.active_nodes() {
            b.link(vn, index[tau][u].unwrap());
        }
    }
    for tau in 0..snapshots.len().saturating_sub(1) {
        let mut linked = false;
        for u in 0..n {
            if let (Some(a), Some(c)) = (index[tau][u], index[tau + 1][u]) {
                b.link(a, c);
                linked = true;
            }
        }
        if !linked {
            if !cfg.vn_fallback_link {
                return Err(Error::Disconnected {
                    from: window.start() + tau,
                    to: window.start() + tau + 1,
                });
            }
            b.link(virtual_rows[tau].unwrap(), virtual_rows[tau + 1].unwrap());
        }
    }
    let (adjacency, rows) = b.finish();
    let sg = SupraGraph {
        adjacency,
        rows,
        index,
        virtual_rows,
        masks,
        window,
        transformed: true,
    };
    debug_assert!(sg.verify_connected(), "supra-graph construction left it disconnected");
    Ok(sg)
}

/// Block-diagonal stacking without any transformation: every node keeps its
/// row (isolated or not), no virtual nodes, no temporal edges.
pub fn build_untransformed(snapshots: &[Snapshot], window: Window) -> Result<SupraGraph> {
    if snapshots.is_empty() || snapshots.len() != window.len() {
        return Err(Error::Argument("snapshots do not match the window".into()));
    }
    let n = snapshots[0].num_nodes();
    let mut b = Builder {
        adjacency: Vec::new(),
        rows: Vec::new(),
    };
    let mut index = vec![vec![None; n]; snapshots.len()];
    for (tau, snap) in snapshots.iter().enumerate() {
        for (u, slot) in index[tau].iter_mut().enumerate() {
            *slot = Some(b.push(RowKind::Node { node: u, tau }));
        }
        for &(u, v) in snap.edges() {
            b.link(tau * n + u, tau * n + v);
        }
    }
    let (adjacency, rows) = b.finish();
    Ok(SupraGraph {
        adjacency,
        rows,
        index,
        virtual_rows: vec![None; snapshots.len()],
        masks: snapshots.iter().map(Snapshot::isolation_mask).collect(),
        window,
        transformed: false,
    })
}

impl SupraGraph {
    /// A single-layer graph over `size` rows with the given undirected edges,
    /// no virtual node. Meant for unit tests of the spectral code.
    pub fn from_edges(size: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut b = Builder {
            adjacency: Vec::new(),
            rows: Vec::new(),
        };
        for u in 0..size {
            b.push(RowKind::Node { node: u, tau: 0 });
        }
        for &(u, v) in edges {
            if u >= size || v >= size || u == v {
                return Err(Error::Argument(format!("bad edge ({u}, {v}) for {size} rows")));
            }
            b.link(u, v);
        }
        let (adjacency, rows) = b.finish();
        let degrees: Vec<usize> = adjacency.iter().map(Vec::len).collect();
        Ok(Self {
            adjacency,
            rows,
            index: vec![(0..size).map(Some).collect()],
            virtual_rows: vec![None],
            masks: vec![IsolationMask::from_degrees(&degrees)],
            window: Window::new(0, 1),
            transformed: false,
        })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.index.first().map_or(0, Vec::len)
    }

    pub fn num_layers(&self) -> usize {
        self.index.len()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn masks(&self) -> &[IsolationMask] {
        &self.masks
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }

    pub fn rows(&self) -> &[RowKind] {
        &self.rows
    }

    pub fn neighbors(&self, row: usize) -> &[usize] {
        &self.adjacency[row]
    }

    pub fn degree(&self, row: usize) -> usize {
        self.adjacency[row].len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Row of node `u` in layer `tau`, absent when the node was removed.
    pub fn row_of(&self, u: usize, tau: usize) -> Option<usize> {
        self.index[tau][u]
    }

    pub fn virtual_row(&self, tau: usize) -> Option<usize> {
        self.virtual_rows[tau]
    }

    pub fn virtual_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.virtual_rows.iter().flatten().copied()
    }

    pub fn is_virtual(&self, row: usize) -> bool {
        matches!(self.rows[row], RowKind::Virtual { .. })
    }

    /// Layer index of each row.
    pub fn layer_of(&self, row: usize) -> usize {
        match self.rows[row] {
            RowKind::Node { tau, .. } | RowKind::Virtual { tau } => tau,
        }
    }

    /// Breadth-first search from row 0 reaches every row.
    pub fn verify_connected(&self) -> bool {
        self.connected_components() <= 1
    }

    pub fn connected_components(&self) -> usize {
        let mut seen = vec![false; self.size()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.size() {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(r) = queue.pop_front() {
                for &next in &self.adjacency[r] {
                    if !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        components
    }

    /// Every nonzero of the adjacency as an `i j` line, row-major.
    pub fn coordinate_list(&self) -> String {
        let mut out = String::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for j in list {
                out.push_str(&format!("{i} {j}\n"));
            }
        }
        out
    }

    /// `u tau row` lines for every node row (virtual rows excluded).
    pub fn index_map_lines(&self) -> String {
        let mut out = String::new();
        for (tau, layer) in self.index.iter().enumerate() {
            for (u, row) in layer.iter().enumerate() {
                if let Some(row) = row {
                    out.push_str(&format!("{u} {tau} {row}\n"));
                }
            }
        }
        out
    }
}
