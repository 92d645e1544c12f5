use serde::{Deserialize, Serialize};

use super::EncodingKind;
use crate::error::Result;
use crate::graph::{DynamicGraph, Snapshot, Window};
use crate::spectral::{
    normalized_laplacian, raw_encoding, smallest_eigenpairs, smallest_eigenpairs_keep_trivial,
    EigenOptions, RawEncodingTable,
};
use crate::supra::{build_supra, build_untransformed, SupraConfig, SupraGraph};

/// Everything needed to turn a window into raw per-(node, time) features.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingOptions {
    pub kind: EncodingKind,
    pub k: usize,
    pub d_time: usize,
    pub eigen: EigenOptions,
    pub supra: SupraConfig,
}

/// Raw encodings of the window, in `f64` (all spectral work is 64-bit).
pub fn window_encoding(
    g: &DynamicGraph,
    window: &Window,
    opts: &EncodingOptions,
) -> Result<RawEncodingTable<f64>> {
    let snapshots = g.window_snapshots(window);
    match opts.kind {
        EncodingKind::Slate => {
            let sg = build_supra(snapshots, *window, &opts.supra)?;
            let l = normalized_laplacian::<f64>(&sg)?;
            let basis = smallest_eigenpairs(&l, opts.k, &opts.eigen)?;
            raw_encoding(&basis, &sg, g.num_nodes())
        }
        EncodingKind::SlateNoTransform => {
            let sg = build_untransformed(snapshots, *window)?;
            let l = normalized_laplacian::<f64>(&sg)?;
            let basis = smallest_eigenpairs_keep_trivial(&l, opts.k, &opts.eigen)?;
            raw_encoding(&basis, &sg, g.num_nodes())
        }
        EncodingKind::LapPETime => lap_pe_time_encoding(snapshots, opts.k, opts.d_time, &opts.eigen),
    }
}

/// Sinusoidal code of window position `t` at dimension `i`.
pub fn time_pe(t: usize, i: usize, d_time: usize) -> f64 {
    let t = t as f64;
    let d = d_time as f64;
    if i.is_multiple_of(2) {
        (t / 10000f64.powf(2.0 * i as f64 / d)).sin()
    } else {
        (t / 10000f64.powf((2 * i + 1) as f64 / d)).cos()
    }
}

/// Per-snapshot Laplacian eigenvector entries (`k` smallest after the
/// trivial one, zero for isolated nodes) followed by `time_pe` of the
/// window position.
pub fn lap_pe_time_encoding(
    snapshots: &[Snapshot],
    k: usize,
    d_time: usize,
    eigen: &EigenOptions,
) -> Result<RawEncodingTable<f64>> {
    let n = snapshots.first().map_or(0, Snapshot::num_nodes);
    let width = k + d_time;
    let layers = snapshots.len();
    let mut data = vec![0.0; layers * n * width];
    let mut isolated = vec![false; layers * n];
    for (tau, snap) in snapshots.iter().enumerate() {
        let active: Vec<usize> = (0..n).filter(|&u| snap.degree(u) > 0).collect();
        let mut local = vec![usize::MAX; n];
        for (i, &u) in active.iter().enumerate() {
            local[u] = i;
        }
        let available = k.min(active.len().saturating_sub(1));
        if available < k {
            log::warn!(
                "window position {tau}: {} active nodes support only {available} of {k} eigenvectors; zero-padding",
                active.len()
            );
        }
        let basis = if available > 0 {
            let edges: Vec<_> = snap.edges().iter().map(|&(u, v)| (local[u], local[v])).collect();
            let sg = SupraGraph::from_edges(active.len(), &edges)?;
            let l = normalized_laplacian::<f64>(&sg)?;
            Some(smallest_eigenpairs(&l, available, eigen)?)
        } else {
            None
        };
        let code: Vec<f64> = (0..d_time).map(|i| time_pe(tau, i, d_time)).collect();
        for u in 0..n {
            let slot = tau * n + u;
            let out = &mut data[slot * width..(slot + 1) * width];
            if local[u] == usize::MAX {
                isolated[slot] = true;
            } else if let Some(b) = &basis {
                out[..available].copy_from_slice(b.row(local[u]));
            }
            out[k..].copy_from_slice(&code);
        }
    }
    RawEncodingTable::from_rows(n, layers, width, data, isolated)
}
