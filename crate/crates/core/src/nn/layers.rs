//! The layers the model is built from. Each layer only remembers parameter
//! names; values live in a [`ParameterStore`] and are pulled onto a [`Tape`]
//! per forward pass.

use super::store::ParameterStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn register<T: Scalar>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Self> {
        let layer = Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            fan_in,
            fan_out,
        };
        store.init_weight(&layer.weight, fan_in, fan_out)?;
        store.init_constant(&layer.bias, fan_out, 0.0)?;
        Ok(layer)
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
    ) -> Result<Var> {
        let w = tape.param(store, &self.weight)?;
        let b = tape.param(store, &self.bias)?;
        tape.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
    pub eps: f64,
}

impl LayerNorm {
    pub fn register<T: Scalar>(store: &mut ParameterStore<T>, prefix: &str, dim: usize) -> Result<Self> {
        let layer = Self {
            gamma: format!("{prefix}.gamma"),
            beta: format!("{prefix}.beta"),
            eps: LAYER_NORM_EPS,
        };
        store.init_constant(&layer.gamma, dim, 1.0)?;
        store.init_constant(&layer.beta, dim, 0.0)?;
        Ok(layer)
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
    ) -> Result<Var> {
        let g = tape.param(store, &self.gamma)?;
        let b = tape.param(store, &self.beta)?;
        tape.layer_norm(x, g, b, T::lit(self.eps))
    }
}

/// Output of an attention call together with the per-head attention nodes,
/// whose saved probabilities can be read back with [`Tape::attention_probs`].
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub out: Var,
    pub heads: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub dim: usize,
    pub heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

impl MultiHeadAttention {
    pub fn register<T: Scalar>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "model width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            dim,
            heads,
            q: Linear::register(store, &format!("{prefix}.q"), dim, dim)?,
            k: Linear::register(store, &format!("{prefix}.k"), dim, dim)?,
            v: Linear::register(store, &format!("{prefix}.v"), dim, dim)?,
            o: Linear::register(store, &format!("{prefix}.o"), dim, dim)?,
        })
    }

    /// Unmasked attention of every query row over every key/value row.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        query: Var,
        kv: Var,
    ) -> Result<AttentionOutput> {
        let (m, n) = (tape.value(query).rows(), tape.value(kv).rows());
        let q = self.q.forward(tape, store, query)?;
        let k = self.k.forward(tape, store, kv)?;
        let v = self.v.forward(tape, store, kv)?;
        self.attend(tape, store, q, k, v, m, n)
    }

    /// Many independent attentions in one pass. Queries are the rows of
    /// `q_source` picked by `q_index`, keys and values the rows of `kv_source`
    /// picked by `kv_index`; consecutive runs of `q_block` / `kv_block` picked
    /// rows form one attention problem. Sources are projected once.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_gathered<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        q_source: Var,
        q_index: &[usize],
        kv_source: Var,
        kv_index: &[usize],
        q_block: usize,
        kv_block: usize,
    ) -> Result<AttentionOutput> {
        let q_all = self.q.forward(tape, store, q_source)?;
        let k_all = self.k.forward(tape, store, kv_source)?;
        let v_all = self.v.forward(tape, store, kv_source)?;
        let q = tape.gather_rows(q_all, q_index)?;
        let k = tape.gather_rows(k_all, kv_index)?;
        let v = tape.gather_rows(v_all, kv_index)?;
        self.attend(tape, store, q, k, v, q_block, kv_block)
    }

    #[allow(clippy::too_many_arguments)]
    fn attend<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        q: Var,
        k: Var,
        v: Var,
        q_block: usize,
        kv_block: usize,
    ) -> Result<AttentionOutput> {
        let dh = self.dim / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * dh, dh)?,
                    tape.slice_cols(k, h * dh, dh)?,
                    tape.slice_cols(v, h * dh, dh)?,
                )
            };
            outs.push(tape.attention(qh, kh, vh, q_block, kv_block)?);
        }
        let cat = if self.heads == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        Ok(AttentionOutput {
            out: self.o.forward(tape, store, cat)?,
            heads: outs,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn register<T: Scalar>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(Self {
            up: Linear::register(store, &format!("{prefix}.up"), dim, hidden)?,
            down: Linear::register(store, &format!("{prefix}.down"), hidden, dim)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
    ) -> Result<Var> {
        let h = self.up.forward(tape, store, x)?;
        let h = tape.relu(h);
        self.down.forward(tape, store, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub norm_first: bool,
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub cfg: EncoderConfig,
    pub attn: MultiHeadAttention,
    pub ffn: FeedForward,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
}

impl EncoderLayer {
    pub fn register<T: Scalar>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        cfg: EncoderConfig,
    ) -> Result<Self> {
        if cfg.ffn_dim == 0 {
            return Err(Error::Config("feed-forward width must be positive".into()));
        }
        Ok(Self {
            cfg,
            attn: MultiHeadAttention::register(store, &format!("{prefix}.attn"), cfg.dim, cfg.heads)?,
            ffn: FeedForward::register(store, &format!("{prefix}.ffn"), cfg.dim, cfg.ffn_dim)?,
            ln1: LayerNorm::register(store, &format!("{prefix}.ln1"), cfg.dim)?,
            ln2: LayerNorm::register(store, &format!("{prefix}.ln2"), cfg.dim)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        z: Var,
    ) -> Result<Var> {
        if tape.value(z).cols() != self.cfg.dim {
            return Err(Error::Shape(format!(
                "encoder of width {} fed {:?}",
                self.cfg.dim,
                tape.value(z).shape()
            )));
        }
        if self.cfg.norm_first {
            let h = self.ln1.forward(tape, store, z)?;
            let a = self.attn.forward(tape, store, h, h)?.out;
            let z = tape.add(z, a)?;
            let h = self.ln2.forward(tape, store, z)?;
            let f = self.ffn.forward(tape, store, h)?;
            tape.add(z, f)
        } else {
            let a = self.attn.forward(tape, store, z, z)?.out;
            let s = tape.add(z, a)?;
            let z = self.ln1.forward(tape, store, s)?;
            let f = self.ffn.forward(tape, store, z)?;
            let s = tape.add(z, f)?;
            self.ln2.forward(tape, store, s)
        }
    }
}

/// Logit-space binary cross-entropy and its derivative w.r.t. the logit.
pub fn bce_with_logits<T: Scalar>(logit: T, y: T) -> (T, T) {
    let loss = super::tape::bce_term(logit, y);
    (loss, super::tape::sigmoid(logit) - y)
}
