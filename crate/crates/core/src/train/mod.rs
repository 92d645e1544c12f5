//! Training over rolling windows, validation-based early stopping and the
//! evaluation protocol.

mod metrics;
mod sampling;

use std::collections::BTreeMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{split_chronological, DynamicGraph, Split, SplitSpec};
use crate::model::{window_encoding, EncodingOptions, ModelConfig, SlateModel};
use crate::nn::{ParameterStore, Tape};
use crate::spectral::{EigenOptions, RawEncodingTable};
use crate::supra::SupraConfig;

pub use metrics::{auc, average_precision};
pub use sampling::{NegativeSampler, Sampled, Strategy, Triple};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epoch cap.
    pub epochs: usize,
    /// Stop after this many epochs without a better validation AP.
    pub patience: usize,
    /// Window size; `usize::MAX` uses every past snapshot.
    pub w: usize,
    pub seed: u64,
    pub split: SplitSpec,
    pub eigen: EigenOptions,
    pub supra: SupraConfig,
    /// Draw fresh training negatives every epoch instead of once per window.
    pub resample_negatives: bool,
}

impl TrainConfig {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            model: ModelConfig::new(num_nodes),
            lr: 0.01,
            weight_decay: 0.0,
            epochs: 500,
            patience: 20,
            w: 3,
            seed: 0,
            split: SplitSpec::default(),
            eigen: EigenOptions::default(),
            supra: SupraConfig::default(),
            resample_negatives: false,
        }
    }

    pub fn encoding_options(&self) -> EncodingOptions {
        EncodingOptions {
            kind: self.model.encoding,
            k: self.model.k,
            d_time: self.model.d_time,
            eigen: EigenOptions {
                seed: self.seed,
                ..self.eigen
            },
            supra: self.supra,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.w == 0 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate and weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch (average over windows).
    pub train_loss: Vec<f64>,
    /// Validation AP per epoch; empty without a validation range.
    pub val_ap: Vec<f64>,
    pub best_epoch: usize,
    pub warnings: Vec<String>,
}

/// Stream seed for an `(a, b, c)` coordinate, mixed with splitmix64.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed;
    for v in [a, b] {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

fn with_context(err: Error, what: &str) -> Error {
    match err {
        Error::Training(m) => Error::Training(format!("{what}: {m}")),
        other => Error::Training(format!("{what}: {other}")),
    }
}

/// Raw encodings of every window a run needs, computed once.
pub struct EncodingCache<'g> {
    g: &'g DynamicGraph,
    w: usize,
    opts: EncodingOptions,
    cache: BTreeMap<usize, RawEncodingTable<f64>>,
}

impl<'g> EncodingCache<'g> {
    pub fn new(g: &'g DynamicGraph, w: usize, opts: EncodingOptions) -> Self {
        Self {
            g,
            w,
            opts,
            cache: BTreeMap::new(),
        }
    }

    /// Encoding of the window ending at `t`.
    pub fn get(&mut self, t: usize) -> Result<&RawEncodingTable<f64>> {
        if !self.cache.contains_key(&t) {
            let window = self.g.window_of(t, self.w);
            let table = window_encoding(self.g, &window, &self.opts)
                .map_err(|e| with_context(e, &format!("encoding window ending at {t}")))?;
            self.cache.insert(t, table);
        }
        Ok(&self.cache[&t])
    }
}

/// Pairs and labels of a set of triples: every positive, then every negative.
pub fn pairs_of(triples: &[Triple]) -> (Vec<(usize, usize)>, Vec<bool>) {
    let mut pairs: Vec<_> = triples.iter().map(|&(u, v, _)| (u, v)).collect();
    pairs.extend(triples.iter().map(|&(u, _, n)| (u, n)));
    let labels = (0..pairs.len()).map(|i| i < triples.len()).collect();
    (pairs, labels)
}

fn train_step(
    model: &mut SlateModel<f64>,
    raw: &RawEncodingTable<f64>,
    triples: &[Triple],
    lr: f64,
    weight_decay: f64,
) -> Result<f64> {
    let (pairs, labels) = pairs_of(triples);
    let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let mut tape = Tape::new();
    let enc = model.forward_window(&mut tape, raw)?;
    let logits = model.edge_logits(&mut tape, &enc, &pairs)?;
    let loss = tape.bce_with_logits(logits, &targets)?;
    tape.backward(loss)?;
    let value = tape.value(loss).data()[0];
    let store = model.store_mut();
    store.zero_grads();
    tape.accumulate_param_grads(store)?;
    store.sgd_step(lr, weight_decay)?;
    Ok(value)
}

/// Trains in place and returns the per-epoch traces. The parameters with the
/// best validation AP are restored at the end.
pub fn train(model: &mut SlateModel<f64>, g: &DynamicGraph, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if model.config() != &cfg.model {
        return Err(Error::Config("model was built from a different configuration".into()));
    }
    let split = split_chronological(g, &cfg.split)?;
    if split.train.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 snapshots, the split leaves {}",
            split.train.len()
        )));
    }
    let mut cache = EncodingCache::new(g, cfg.w, cfg.encoding_options());
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParameterStore<f64>)> = None;
    let mut stale = 0;
    let train_ends: Vec<usize> = (split.train.start..split.train.end - 1).collect();

    for epoch in 0..cfg.epochs {
        let mut losses = Vec::new();
        for &t in &train_ends {
            let stream = if cfg.resample_negatives { epoch as u64 + 1 } else { 0 };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream, t as u64 + 1));
            let sampler = NegativeSampler::new(Strategy::Random, g, t + 1, split.train.clone());
            let sampled = match sampler.sample(g.snapshot(t + 1), &mut rng) {
                Ok(s) if !s.triples.is_empty() => s,
                Ok(_) | Err(Error::EmptySnapshot(_)) => continue,
                Err(e) => return Err(e),
            };
            let raw = cache.get(t)?;
            let loss = train_step(model, raw, &sampled.triples, cfg.lr, cfg.weight_decay)
                .map_err(|e| with_context(e, &format!("epoch {epoch}, window ending at {t}")))?;
            losses.push(loss);
        }
        if losses.is_empty() {
            return Err(Error::Training("no training window has a positive edge".into()));
        }
        history.train_loss.push(losses.iter().sum::<f64>() / losses.len() as f64);

        if split.val.is_empty() {
            history.best_epoch = epoch;
            continue;
        }
        let report = evaluate_with_cache(model, g, &split, split.val.clone(), Strategy::Random, cfg.seed, &mut cache)?;
        let ap = report.aggregate.ap;
        history.val_ap.push(ap);
        log::info!("epoch {epoch}: train loss {:.5}, validation AP {ap:.4}", history.train_loss[epoch]);
        if best.as_ref().is_none_or(|(b, _)| ap > *b) {
            best = Some((ap, model.store().clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!("no improvement for {} epochs, stopping", cfg.patience);
                break;
            }
        }
    }
    if let Some((_, store)) = best {
        model.store_mut().load_values(&store)?;
    }
    Ok(history)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotScore {
    pub t: usize,
    pub auc: f64,
    pub ap: f64,
    pub n_pairs: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub auc: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Resolved run configuration, filled in by the caller.
    pub config: BTreeMap<String, String>,
    pub strategy: Strategy,
    pub per_snapshot: Vec<SnapshotScore>,
    /// Metrics over all pairs of all snapshots pooled together.
    pub aggregate: Aggregate,
    pub n_pairs: usize,
    pub warnings: Vec<String>,
}

/// Scores every snapshot `s` of `range` from the window ending at `s - 1`.
pub fn evaluate(
    model: &SlateModel<f64>,
    g: &DynamicGraph,
    cfg: &TrainConfig,
    range: Range<usize>,
    strategy: Strategy,
) -> Result<EvalReport> {
    let split = split_chronological(g, &cfg.split)?;
    let mut cache = EncodingCache::new(g, cfg.w, cfg.encoding_options());
    evaluate_with_cache(model, g, &split, range, strategy, cfg.seed, &mut cache)
}

pub fn evaluate_with_cache(
    model: &SlateModel<f64>,
    g: &DynamicGraph,
    split: &Split,
    range: Range<usize>,
    strategy: Strategy,
    seed: u64,
    cache: &mut EncodingCache<'_>,
) -> Result<EvalReport> {
    if range.is_empty() {
        return Err(Error::Config("evaluation range is empty".into()));
    }
    let mut report = EvalReport {
        config: BTreeMap::new(),
        strategy,
        per_snapshot: Vec::new(),
        aggregate: Aggregate::default(),
        n_pairs: 0,
        warnings: Vec::new(),
    };
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    for s in range {
        if s == 0 {
            report.warnings.push("snapshot 0 has no past to predict from; skipped".into());
            continue;
        }
        let sampler = NegativeSampler::new(strategy, g, s, split.train.clone());
        // the stream depends only on the snapshot, so evaluation order is free
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xE7A1, s as u64));
        let sampled = match sampler.sample(g.snapshot(s), &mut rng) {
            Ok(x) => x,
            Err(Error::EmptySnapshot(_)) => {
                report.warnings.push(format!("snapshot {s} has no edges; skipped"));
                continue;
            }
            Err(e) => return Err(e),
        };
        if sampled.fallbacks > 0 {
            report.warnings.push(format!(
                "snapshot {s}: {} {} negatives fell back to random",
                sampled.fallbacks,
                strategy.name()
            ));
        }
        if sampled.dropped > 0 {
            report
                .warnings
                .push(format!("snapshot {s}: {} positives had no valid negative", sampled.dropped));
        }
        if sampled.triples.is_empty() {
            continue;
        }
        let raw = cache.get(s - 1)?;
        let (pairs, labels) = pairs_of(&sampled.triples);
        let scores = model
            .score_pairs(raw, &pairs)
            .map_err(|e| with_context(e, &format!("scoring snapshot {s}")))?;
        report.per_snapshot.push(SnapshotScore {
            t: s,
            auc: auc(&scores, &labels)?,
            ap: average_precision(&scores, &labels)?,
            n_pairs: pairs.len(),
        });
        all_scores.extend(scores);
        all_labels.extend(labels);
    }
    if all_scores.is_empty() {
        return Err(Error::Training("no snapshot in the evaluation range could be scored".into()));
    }
    report.n_pairs = all_scores.len();
    report.aggregate = Aggregate {
        auc: auc(&all_scores, &all_labels)?,
        ap: average_precision(&all_scores, &all_labels)?,
    };
    Ok(report)
}
