//! Seeded synthetic generators: Erdős–Rényi and stochastic block model
//! snapshots, each pair drawn independently per snapshot.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DynamicGraph, Snapshot};
use crate::error::{Error, Result};

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

fn check_counts(n: usize, t: usize) -> Result<()> {
    if n == 0 || t == 0 {
        return Err(Error::Config(format!(
            "need at least one node and one snapshot, got n = {n}, t = {t}"
        )));
    }
    Ok(())
}

/// Draws every pair with a probability given by `prob(u, v)`.
fn sample_graph(
    n: usize,
    t: usize,
    seed: u64,
    prob: impl Fn(usize, usize) -> f64,
) -> Result<DynamicGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snapshots = (0..t)
        .map(|_| {
            let mut edges = BTreeSet::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen::<f64>() < prob(u, v) {
                        edges.insert((u, v));
                    }
                }
            }
            Snapshot::from_edge_set(n, edges)
        })
        .collect();
    DynamicGraph::new(n, snapshots)
}

pub fn generate_erdos_renyi(n: usize, p: f64, t: usize, seed: u64) -> Result<DynamicGraph> {
    check_counts(n, t)?;
    check_probability("p", p)?;
    sample_graph(n, t, seed, |_, _| p)
}

/// Block of node `u` when `n` nodes are split into `num_blocks` contiguous blocks.
pub fn sbm_block_of(u: usize, n: usize, num_blocks: usize) -> usize {
    u / (n / num_blocks)
}

/// Stochastic block model with a fixed contiguous block assignment.
pub fn generate_sbm(
    n: usize,
    num_blocks: usize,
    p_in: f64,
    p_out: f64,
    t: usize,
    seed: u64,
) -> Result<DynamicGraph> {
    check_counts(n, t)?;
    check_probability("p_in", p_in)?;
    check_probability("p_out", p_out)?;
    if num_blocks == 0 || !n.is_multiple_of(num_blocks) {
        return Err(Error::Config(format!(
            "{n} nodes cannot be split into {num_blocks} equal blocks"
        )));
    }
    sample_graph(n, t, seed, |u, v| {
        if sbm_block_of(u, n, num_blocks) == sbm_block_of(v, n, num_blocks) {
            p_in
        } else {
            p_out
        }
    })
}
