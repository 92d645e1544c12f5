//! Negative sampling: one negative partner per positive edge of the
//! predicted snapshot.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_edge, DynamicGraph, Edge, Snapshot};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Any non-edge of the predicted snapshot.
    #[default]
    Random,
    /// Pairs that were edges at some earlier snapshot but are not now.
    Historical,
    /// Pairs never seen during training and not edges now.
    Inductive,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Historical, Strategy::Inductive];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Historical => "historical",
            Strategy::Inductive => "inductive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "historical" | "hist" => Ok(Strategy::Historical),
            "inductive" | "ind" => Ok(Strategy::Inductive),
            _ => Err(Error::Config(format!("unknown negative sampling strategy `{s}`"))),
        }
    }
}

/// `(u, v_pos, v_neg)`.
pub type Triple = (usize, usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sampled {
    pub triples: Vec<Triple>,
    /// Triples whose strategy pool was empty and that used a random negative.
    pub fallbacks: usize,
    /// Positives dropped because no valid negative exists at all.
    pub dropped: usize,
}

#[derive(Clone, Debug)]
pub struct NegativeSampler {
    strategy: Strategy,
    t_pred: usize,
    history: BTreeSet<Edge>,
    train_edges: BTreeSet<Edge>,
}

impl NegativeSampler {
    /// Sampler for predicting snapshot `t_pred`: the history is every edge of
    /// snapshots `0..t_pred`, the training edges every edge of `train`.
    pub fn new(strategy: Strategy, g: &DynamicGraph, t_pred: usize, train: Range<usize>) -> Self {
        let union = |r: Range<usize>| -> BTreeSet<Edge> {
            r.flat_map(|s| g.snapshot(s).edges().iter().copied()).collect()
        };
        let needs_history = strategy == Strategy::Historical;
        let needs_train = strategy == Strategy::Inductive;
        Self {
            strategy,
            t_pred,
            history: if needs_history { union(0..t_pred.min(g.num_snapshots())) } else { BTreeSet::new() },
            train_edges: if needs_train { union(train) } else { BTreeSet::new() },
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn history(&self) -> &BTreeSet<Edge> {
        &self.history
    }

    pub fn train_edges(&self) -> &BTreeSet<Edge> {
        &self.train_edges
    }

    /// Candidate negatives for `u` under `strategy`.
    pub fn pool(&self, strategy: Strategy, snap: &Snapshot, u: usize) -> Vec<usize> {
        let n = snap.num_nodes();
        let free = |v: usize| v != u && !snap.has_edge(u, v);
        match strategy {
            Strategy::Random => (0..n).filter(|&v| free(v)).collect(),
            Strategy::Historical => (0..n)
                .filter(|&v| free(v) && self.history.contains(&normalize_edge(u, v)))
                .collect(),
            Strategy::Inductive => (0..n)
                .filter(|&v| free(v) && !self.train_edges.contains(&normalize_edge(u, v)))
                .collect(),
        }
    }

    /// One triple per positive edge of `snap`, in edge order. A fair coin
    /// decides which endpoint plays `u`.
    pub fn sample<R: Rng>(&self, snap: &Snapshot, rng: &mut R) -> Result<Sampled> {
        if snap.num_edges() == 0 {
            return Err(Error::EmptySnapshot(self.t_pred));
        }
        let mut out = Sampled::default();
        for &(a, b) in snap.edges() {
            let (u, v) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let mut pool = self.pool(self.strategy, snap, u);
            if pool.is_empty() && self.strategy != Strategy::Random {
                pool = self.pool(Strategy::Random, snap, u);
                if !pool.is_empty() {
                    out.fallbacks += 1;
                }
            }
            match pool.choose(rng) {
                Some(&neg) => out.triples.push((u, v, neg)),
                None => out.dropped += 1,
            }
        }
        if out.fallbacks > 0 {
            log::warn!(
                "snapshot {}: {} {} negatives fell back to random",
                self.t_pred,
                out.fallbacks,
                self.strategy.name()
            );
        }
        Ok(out)
    }
}
