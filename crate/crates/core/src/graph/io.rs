//! Edge-list ingestion (`u v t` lines) and the `key = value` metadata sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use log::warn;

use super::{normalize_edge, DynamicGraph, Edge, Snapshot};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeListFormat {
    /// Node ids in the file start at 1.
    pub one_based: bool,
    /// Declared node count. Ids at or above it are rejected; without it the
    /// node set is inferred and remapped to `0..N` when sparse.
    pub num_nodes: Option<usize>,
    /// Declared snapshot count, so trailing empty snapshots survive a round trip.
    pub num_snapshots: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: DynamicGraph,
    /// `remap[dense_id] = original_id`, present only when source ids were sparse.
    pub remap: Option<Vec<u64>>,
    pub self_loops_dropped: usize,
    pub duplicates_merged: usize,
}

struct RawEdge {
    u: u64,
    v: u64,
    t: u64,
    line: usize,
}

fn parse_field(tok: &str, what: &str, line: usize) -> Result<u64> {
    tok.parse::<u64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{tok}` is not a non-negative integer"),
    })
}

/// Reads whitespace-separated `u v t` lines. Extra columns (weights) are
/// ignored, `#`/`%` lines are comments, and a non-numeric first line is
/// treated as a header.
pub fn load_edge_list<R: BufRead>(source: R, format: EdgeListFormat) -> Result<LoadedGraph> {
    let mut raw = Vec::new();
    let mut seen_content = false;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let first_content = !seen_content;
        seen_content = true;
        if first_content && fields[0].parse::<u64>().is_err() {
            continue;
        }
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `u v t`, found {} field(s)", fields.len()),
            });
        }
        let mut u = parse_field(fields[0], "source id", line_no)?;
        let mut v = parse_field(fields[1], "target id", line_no)?;
        let t = parse_field(fields[2], "time", line_no)?;
        if format.one_based {
            if u == 0 || v == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "node id 0 in a one-based file".into(),
                });
            }
            u -= 1;
            v -= 1;
        }
        raw.push(RawEdge { u, v, t, line: line_no });
    }

    let (num_nodes, remap) = match format.num_nodes {
        Some(n) => {
            if let Some(e) = raw.iter().find(|e| e.u.max(e.v) >= n as u64) {
                return Err(Error::Bounds {
                    id: e.u.max(e.v),
                    num_nodes: n,
                    line: e.line,
                });
            }
            (n, None)
        }
        None => {
            let ids: BTreeSet<u64> = raw.iter().flat_map(|e| [e.u, e.v]).collect();
            let max = ids.iter().next_back().copied();
            match max {
                None => (0, None),
                Some(m) if m as usize + 1 == ids.len() => (ids.len(), None),
                Some(_) => (ids.len(), Some(ids.into_iter().collect::<Vec<_>>())),
            }
        }
    };
    if num_nodes == 0 {
        return Err(Error::Degenerate("edge list has no nodes".into()));
    }
    let dense = |id: u64| -> usize {
        match &remap {
            Some(table) => table.binary_search(&id).expect("id collected above"),
            None => id as usize,
        }
    };

    let max_t = raw.iter().map(|e| e.t).max().unwrap_or(0) as usize;
    let num_snapshots = match format.num_snapshots {
        Some(declared) if declared <= max_t => {
            return Err(Error::Config(format!(
                "declared {declared} snapshots but the file references time {max_t}"
            )))
        }
        Some(declared) => declared,
        None => max_t + 1,
    };

    let mut per_time: Vec<BTreeSet<Edge>> = vec![BTreeSet::new(); num_snapshots];
    let mut self_loops = 0;
    let mut duplicates = 0;
    for e in &raw {
        let (u, v) = (dense(e.u), dense(e.v));
        if u == v {
            self_loops += 1;
            continue;
        }
        if !per_time[e.t as usize].insert(normalize_edge(u, v)) {
            duplicates += 1;
        }
    }
    if self_loops > 0 {
        warn!("dropped {self_loops} self-loop(s) while loading edge list");
    }
    let snapshots = per_time
        .into_iter()
        .map(|edges| Snapshot::from_edge_set(num_nodes, edges))
        .collect();
    Ok(LoadedGraph {
        graph: DynamicGraph::new(num_nodes, snapshots)?,
        remap,
        self_loops_dropped: self_loops,
        duplicates_merged: duplicates,
    })
}

/// Serializes every edge as a `u v t` line, snapshots in order, edges sorted.
pub fn write_edge_list(g: &DynamicGraph) -> String {
    let mut out = String::new();
    for (t, snap) in g.snapshots().iter().enumerate() {
        for &(u, v) in snap.edges() {
            out.push_str(&format!("{u} {v} {t}\n"));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_snapshots: usize,
}

impl GraphMeta {
    pub fn of(name: &str, g: &DynamicGraph) -> Self {
        Self {
            name: name.to_string(),
            num_nodes: g.num_nodes(),
            num_snapshots: g.num_snapshots(),
        }
    }

    pub fn format(&self) -> EdgeListFormat {
        EdgeListFormat {
            one_based: false,
            num_nodes: Some(self.num_nodes),
            num_snapshots: Some(self.num_snapshots),
        }
    }
}

pub fn write_metadata(meta: &GraphMeta) -> String {
    format!(
        "name = {}\nnum_nodes = {}\nnum_snapshots = {}\n",
        meta.name, meta.num_nodes, meta.num_snapshots
    )
}

/// Parses the flat `key = value` sidecar. Unknown keys are rejected.
pub fn read_metadata(text: &str) -> Result<GraphMeta> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = k.trim();
        if !matches!(key, "name" | "num_nodes" | "num_snapshots") {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("unknown metadata key `{key}`"),
            });
        }
        map.insert(key.to_string(), (idx + 1, v.trim().to_string()));
    }
    let count = |key: &str| -> Result<usize> {
        let (line, v) = map
            .get(key)
            .ok_or_else(|| Error::Config(format!("metadata is missing `{key}`")))?;
        v.parse().map_err(|_| Error::Parse {
            line: *line,
            message: format!("`{key}` must be a count, got `{v}`"),
        })
    };
    Ok(GraphMeta {
        name: map.get("name").map(|(_, v)| v.clone()).unwrap_or_default(),
        num_nodes: count("num_nodes")?,
        num_snapshots: count("num_snapshots")?,
    })
}
