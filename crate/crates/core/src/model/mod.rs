//! The SLATE architecture: tokens built from learned node embeddings and
//! projected spatio-temporal encodings, one dense encoder layer over every
//! token of the window, and a cross-attention edge module scoring node pairs.

mod encoding;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    EncoderConfig, EncoderLayer, LayerNorm, Linear, MultiHeadAttention, ParameterStore, PoolMode,
    Tape, Tensor, Var,
};
use crate::scalar::Scalar;
use crate::spectral::RawEncodingTable;

pub use encoding::{lap_pe_time_encoding, time_pe, window_encoding, EncodingOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingKind {
    /// Spectrum of the transformed (connected) supra-graph.
    #[default]
    Slate,
    /// Per-snapshot Laplacian eigenvectors plus a sinusoidal time code.
    LapPETime,
    /// Spectrum of the raw block-diagonal supra-graph: isolated nodes kept,
    /// no virtual nodes, no temporal edges.
    SlateNoTransform,
}

impl EncodingKind {
    pub fn name(&self) -> &'static str {
        match self {
            EncodingKind::Slate => "slate",
            EncodingKind::LapPETime => "lappe_time",
            EncodingKind::SlateNoTransform => "slate_no_transform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "slate" => Ok(EncodingKind::Slate),
            "lappe_time" | "lappe" => Ok(EncodingKind::LapPETime),
            "slate_no_transform" | "no_transform" => Ok(EncodingKind::SlateNoTransform),
            _ => Err(Error::Config(format!("unknown encoding `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolKind {
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingSpec {
    pub kind: PoolKind,
    /// Pool over the final `last_k` window positions.
    pub last_k: usize,
}

impl Default for PoolingSpec {
    fn default() -> Self {
        Self {
            kind: PoolKind::Mean,
            last_k: 3,
        }
    }
}

impl PoolingSpec {
    /// `mean:3`, `max:1`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, k) = s.split_once(':').unwrap_or((s, "3"));
        let kind = match kind {
            "mean" | "avg" => PoolKind::Mean,
            "max" => PoolKind::Max,
            _ => return Err(Error::Config(format!("unknown pooling `{kind}`"))),
        };
        let last_k = k
            .parse()
            .map_err(|_| Error::Config(format!("bad pooling window `{k}`")))?;
        if last_k == 0 {
            return Err(Error::Config("pooling window must be at least 1".into()));
        }
        Ok(Self { kind, last_k })
    }

    pub fn name(&self) -> String {
        let kind = match self.kind {
            PoolKind::Mean => "mean",
            PoolKind::Max => "max",
        };
        format!("{kind}:{}", self.last_k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_nodes: usize,
    /// Token width.
    pub d: usize,
    /// Number of eigenpairs per encoding.
    pub k: usize,
    /// Width of the learned node features; `d - k` when unset.
    pub feature_dim: Option<usize>,
    pub heads: usize,
    pub nhead_xa: usize,
    pub ffn_dim: usize,
    pub norm_first: bool,
    pub pooling: PoolingSpec,
    pub encoding: EncodingKind,
    /// Width of the sinusoidal time code of [`EncodingKind::LapPETime`].
    pub d_time: usize,
    /// Cross-attention edge module; when off, pairs are scored from the
    /// time-averaged tokens of both endpoints.
    pub edge_module: bool,
    /// Average the logits of `(u, v)` and `(v, u)`.
    pub symmetrize: bool,
}

impl ModelConfig {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            d: 128,
            k: 12,
            feature_dim: None,
            heads: 4,
            nhead_xa: 4,
            ffn_dim: 128,
            norm_first: true,
            pooling: PoolingSpec::default(),
            encoding: EncodingKind::Slate,
            d_time: 8,
            edge_module: true,
            symmetrize: false,
        }
    }

    pub fn raw_width(&self) -> usize {
        match self.encoding {
            EncodingKind::LapPETime => self.k + self.d_time,
            _ => 2 * self.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(Error::Config("at least two nodes are needed".into()));
        }
        if self.k == 0 || self.k >= self.d {
            return Err(Error::Config(format!(
                "k = {} must lie in [1, d = {})",
                self.k, self.d
            )));
        }
        if !self.d.is_multiple_of(self.heads.max(1)) || self.heads == 0 {
            return Err(Error::Config(format!("d = {} is not divisible by {} heads", self.d, self.heads)));
        }
        if !self.d.is_multiple_of(self.nhead_xa.max(1)) || self.nhead_xa == 0 {
            return Err(Error::Config(format!(
                "d = {} is not divisible by {} cross-attention heads",
                self.d, self.nhead_xa
            )));
        }
        if self.pooling.last_k == 0 {
            return Err(Error::Config("pooling window must be at least 1".into()));
        }
        if self.encoding == EncodingKind::LapPETime && self.d_time == 0 {
            return Err(Error::Config("d_time must be positive".into()));
        }
        if self.feature_dim == Some(0) {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Intermediate handles of one forward pass, exposed for inspection.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub raw: Var,
    pub tokens: Var,
    pub encoded: Var,
    pub layers: usize,
}

#[derive(Clone, Debug)]
pub struct SlateModel<T: Scalar> {
    cfg: ModelConfig,
    store: ParameterStore<T>,
    g_e: Linear,
    g_st: Linear,
    encoder: EncoderLayer,
    xa: Option<(MultiHeadAttention, LayerNorm)>,
    head_hidden: Linear,
    head_out: Linear,
}

pub const EMBED: &str = "embed";

impl<T: Scalar> SlateModel<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        let node_dim = d - cfg.k;
        let f = cfg.feature_dim.unwrap_or(node_dim);
        let mut store = ParameterStore::new(seed);
        store.init_uniform(EMBED, cfg.num_nodes, f, 1.0)?;
        let g_e = Linear::register(&mut store, "g_e", f, node_dim)?;
        let g_st = Linear::register(&mut store, "g_st", cfg.raw_width(), cfg.k)?;
        let encoder = EncoderLayer::register(
            &mut store,
            "encoder",
            EncoderConfig {
                dim: d,
                heads: cfg.heads,
                ffn_dim: cfg.ffn_dim,
                norm_first: cfg.norm_first,
            },
        )?;
        let xa = if cfg.edge_module {
            Some((
                MultiHeadAttention::register(&mut store, "xa.attn", d, cfg.nhead_xa)?,
                LayerNorm::register(&mut store, "xa.ln", d)?,
            ))
        } else {
            None
        };
        let head_in = if cfg.edge_module { d } else { 2 * d };
        let head_hidden = Linear::register(&mut store, "head.hidden", head_in, d)?;
        let head_out = Linear::register(&mut store, "head.out", d, 1)?;
        Ok(Self {
            cfg,
            store,
            g_e,
            g_st,
            encoder,
            xa,
            head_hidden,
            head_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    /// Parameter group of a parameter name: `embed`/`g_e` (node features),
    /// `g_st` (encoding map), `encoder`, `xa` and `head`.
    pub fn group_of(name: &str) -> &'static str {
        let prefix = name.split('.').next().unwrap_or(name);
        match prefix {
            EMBED | "g_e" => "theta_E",
            "g_st" => "theta_ST",
            "encoder" => "theta_T",
            "xa" => "theta_XA",
            _ => "head",
        }
    }

    /// Token matrix: row `tau * N + u` is `g_E(x_u) ++ g_ST(raw[u, tau])`.
    pub fn token_sequence(&self, tape: &mut Tape<T>, raw: &RawEncodingTable<T>) -> Result<Encoded> {
        let n = self.cfg.num_nodes;
        if raw.num_nodes() != n || raw.width() != self.cfg.raw_width() {
            return Err(Error::Shape(format!(
                "encoding table for {} nodes of width {} given to a model for {n} nodes of width {}",
                raw.num_nodes(),
                raw.width(),
                self.cfg.raw_width()
            )));
        }
        let layers = raw.num_layers();
        if layers == 0 {
            return Err(Error::Shape("encoding table has no layers".into()));
        }
        let raw_var = tape.variable(Tensor::matrix(layers * n, raw.width(), raw.as_slice().to_vec())?);
        let embed = tape.param(&self.store, EMBED)?;
        let node = self.g_e.forward(tape, &self.store, embed)?;
        let index: Vec<usize> = (0..layers * n).map(|i| i % n).collect();
        let node = tape.gather_rows(node, &index)?;
        let st = self.g_st.forward(tape, &self.store, raw_var)?;
        let tokens = tape.concat_cols(&[node, st])?;
        Ok(Encoded {
            raw: raw_var,
            tokens,
            encoded: tokens,
            layers,
        })
    }

    pub fn encode(&self, tape: &mut Tape<T>, tokens: Var) -> Result<Var> {
        self.encoder.forward(tape, &self.store, tokens)
    }

    /// Tokens followed by the encoder layer.
    pub fn forward_window(&self, tape: &mut Tape<T>, raw: &RawEncodingTable<T>) -> Result<Encoded> {
        let mut enc = self.token_sequence(tape, raw)?;
        enc.encoded = self.encode(tape, enc.tokens)?;
        Ok(enc)
    }

    fn check_pairs(&self, pairs: &[(usize, usize)]) -> Result<()> {
        let n = self.cfg.num_nodes;
        for &(u, v) in pairs {
            if u == v {
                return Err(Error::Argument(format!("pair ({u}, {v}) is a self-pair")));
            }
            if u >= n || v >= n {
                return Err(Error::Argument(format!("pair ({u}, {v}) outside {n} nodes")));
            }
        }
        Ok(())
    }

    fn directed_logits(&self, tape: &mut Tape<T>, enc: &Encoded, pairs: &[(usize, usize)]) -> Result<Var> {
        let n = self.cfg.num_nodes;
        let l = enc.layers;
        let z = enc.encoded;
        let seq = |node: usize| (0..l).map(move |tau| tau * n + node);
        let q_index: Vec<usize> = pairs.iter().flat_map(|&(u, _)| seq(u)).collect();
        let kv_index: Vec<usize> = pairs.iter().flat_map(|&(_, v)| seq(v)).collect();
        let edge = match &self.xa {
            Some((attn, ln)) => {
                let a = attn
                    .forward_gathered(tape, &self.store, z, &q_index, z, &kv_index, l, l)?
                    .out;
                let zu = tape.gather_rows(z, &q_index)?;
                let s = tape.add(zu, a)?;
                let e = ln.forward(tape, &self.store, s)?;
                let last = self.cfg.pooling.last_k.min(l);
                let e = if last < l {
                    let keep: Vec<usize> = (0..pairs.len())
                        .flat_map(|p| (l - last..l).map(move |tau| p * l + tau))
                        .collect();
                    tape.gather_rows(e, &keep)?
                } else {
                    e
                };
                let mode = match self.cfg.pooling.kind {
                    PoolKind::Mean => PoolMode::Mean,
                    PoolKind::Max => PoolMode::Max,
                };
                tape.pool_rows(e, last, mode)?
            }
            None => {
                let zu = tape.gather_rows(z, &q_index)?;
                let zv = tape.gather_rows(z, &kv_index)?;
                let mu = tape.pool_rows(zu, l, PoolMode::Mean)?;
                let mv = tape.pool_rows(zv, l, PoolMode::Mean)?;
                tape.concat_cols(&[mu, mv])?
            }
        };
        let h = self.head_hidden.forward(tape, &self.store, edge)?;
        let h = tape.relu(h);
        self.head_out.forward(tape, &self.store, h)
    }

    /// Logits (`pairs.len() x 1`) for ordered pairs, queries from `u`.
    pub fn edge_logits(&self, tape: &mut Tape<T>, enc: &Encoded, pairs: &[(usize, usize)]) -> Result<Var> {
        self.check_pairs(pairs)?;
        if pairs.is_empty() {
            return Err(Error::Argument("no pairs to score".into()));
        }
        let fwd = self.directed_logits(tape, enc, pairs)?;
        if !self.cfg.symmetrize {
            return Ok(fwd);
        }
        let rev: Vec<_> = pairs.iter().map(|&(u, v)| (v, u)).collect();
        let bwd = self.directed_logits(tape, enc, &rev)?;
        let s = tape.add(fwd, bwd)?;
        Ok(tape.scale(s, T::lit(0.5)))
    }

    /// Forward-only scoring of one pair: `(logit, probability)`.
    pub fn edge_probability(&self, raw: &RawEncodingTable<T>, u: usize, v: usize) -> Result<(T, T)> {
        let mut tape = Tape::new();
        let enc = self.forward_window(&mut tape, raw)?;
        let logit = self.edge_logits(&mut tape, &enc, &[(u, v)])?;
        let z = tape.value(logit).data()[0];
        Ok((z, crate::nn::sigmoid(z)))
    }

    /// Forward-only logits for many pairs sharing one window.
    pub fn score_pairs(&self, raw: &RawEncodingTable<T>, pairs: &[(usize, usize)]) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let enc = self.forward_window(&mut tape, raw)?;
        let logits = self.edge_logits(&mut tape, &enc, pairs)?;
        Ok(tape.value(logits).data().to_vec())
    }
}
