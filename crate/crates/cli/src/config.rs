//! Flat `key = value` run configuration: defaults, an optional file given by
//! `--config`, then `--key value` flags, later sources winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use slate_core::graph::SplitSpec;
use slate_core::model::{EncodingKind, ModelConfig, PoolingSpec};
use slate_core::spectral::{EigenMethod, EigenOptions};
use slate_core::train::{Strategy, TrainConfig};
use slate_core::SupraConfig;

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("out", "out"),
    ("seed", "0"),
    // data
    ("data", ""),
    ("one_based", "false"),
    ("num_nodes", ""),
    ("name", "graph"),
    // generate
    ("kind", "sbm"),
    ("n", "50"),
    ("t", "10"),
    ("p", "0.3"),
    ("blocks", "2"),
    ("p_in", "0.5"),
    ("p_out", "0.05"),
    // window and encoding
    ("w", "3"),
    ("k", "12"),
    ("end", ""),
    ("lambda_index", "1"),
    ("vn_fallback_link", "false"),
    ("eigen_method", "auto"),
    ("eigen_tol", "1e-8"),
    // model
    ("d", "128"),
    ("feature_dim", ""),
    ("heads", "4"),
    ("nhead_xa", "4"),
    ("ffn_dim", "128"),
    ("norm_first", "true"),
    ("pooling", "mean:3"),
    ("encoding", "slate"),
    ("d_time", "8"),
    ("edge_module", "true"),
    ("symmetrize", "false"),
    // training
    ("lr", "0.01"),
    ("weight_decay", "0"),
    ("epochs", "500"),
    ("patience", "20"),
    ("split", "ratio:0.7,0.15,0.15"),
    ("resample_negatives", "false"),
    // evaluation
    ("checkpoint", ""),
    ("strategies", "random,historical,inductive"),
    // ablation grid
    ("encodings", "slate,slate_no_transform"),
    ("edge_modules", "true,false"),
    ("poolings", "mean:3"),
    ("ws", "3"),
    ("seeds", "5"),
    ("strategy", "random"),
    ("jobs", "0"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical(key);
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => bail!("unknown configuration key `{key}`"),
        }
    }

    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`", i + 1))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    /// Resolves `--key value` arguments, reading `--config` first.
    pub fn from_args(args: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| anyhow!("expected a `--key`, found `{flag}`"))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| anyhow!("flag `--{key}` needs a value"))?;
                    (key.to_string(), v.clone())
                }
            };
            pairs.push((canonical(&key), value));
        }
        let mut cfg = Self::defaults();
        for (k, v) in &pairs {
            if k == "config" {
                let text = std::fs::read_to_string(v).with_context(|| format!("reading config {v}"))?;
                cfg.apply_text(&text, v)?;
            }
        }
        for (k, v) in &pairs {
            if k != "config" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("`{key}` is not a declared key"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| anyhow!("invalid value `{raw}` for `{key}`: {e}"))
    }

    pub fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// The resolved configuration in the same `key = value` format it is read in.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn as_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("config.txt"), self.echo())?;
        Ok(())
    }

    pub fn window(&self) -> Result<usize> {
        parse_window(self.get("w"))
    }

    pub fn split(&self) -> Result<SplitSpec> {
        parse_split(self.get("split"))
    }

    pub fn eigen(&self) -> Result<EigenOptions> {
        let method = match self.get("eigen_method") {
            "auto" => EigenMethod::Auto,
            "dense" => EigenMethod::Dense,
            "lanczos" => EigenMethod::Lanczos,
            other => bail!("unknown eigen_method `{other}`"),
        };
        Ok(EigenOptions {
            method,
            tol: self.parse("eigen_tol")?,
            seed: self.parse("seed")?,
            max_iter: None,
        })
    }

    pub fn supra(&self) -> Result<SupraConfig> {
        Ok(SupraConfig {
            vn_fallback_link: self.parse("vn_fallback_link")?,
        })
    }

    pub fn model(&self, num_nodes: usize) -> Result<ModelConfig> {
        Ok(ModelConfig {
            num_nodes,
            d: self.parse("d")?,
            k: self.parse("k")?,
            feature_dim: self.optional("feature_dim")?,
            heads: self.parse("heads")?,
            nhead_xa: self.parse("nhead_xa")?,
            ffn_dim: self.parse("ffn_dim")?,
            norm_first: self.parse("norm_first")?,
            pooling: PoolingSpec::parse(self.get("pooling"))?,
            encoding: EncodingKind::parse(self.get("encoding"))?,
            d_time: self.parse("d_time")?,
            edge_module: self.parse("edge_module")?,
            symmetrize: self.parse("symmetrize")?,
        })
    }

    pub fn train(&self, num_nodes: usize) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            model: self.model(num_nodes)?,
            lr: self.parse("lr")?,
            weight_decay: self.parse("weight_decay")?,
            epochs: self.parse("epochs")?,
            patience: self.parse("patience")?,
            w: self.window()?,
            seed: self.parse("seed")?,
            split: self.split()?,
            eigen: self.eigen()?,
            supra: self.supra()?,
            resample_negatives: self.parse("resample_negatives")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        self.list("strategies")
            .iter()
            .map(|s| Strategy::parse(s).map_err(Into::into))
            .collect()
    }
}

/// `3`, or `inf` / `all` for every past snapshot.
pub fn parse_window(s: &str) -> Result<usize> {
    match s {
        "inf" | "all" => Ok(usize::MAX),
        _ => {
            let w: usize = s.parse().map_err(|_| anyhow!("invalid window `{s}`"))?;
            if w == 0 {
                bail!("window must be at least 1");
            }
            Ok(w)
        }
    }
}

pub fn window_name(w: usize) -> String {
    if w == usize::MAX {
        "inf".into()
    } else {
        w.to_string()
    }
}

/// `ratio:0.7,0.15,0.15` or `last:<test>[,<val>]`.
pub fn parse_split(s: &str) -> Result<SplitSpec> {
    let (mode, rest) = s.split_once(':').ok_or_else(|| anyhow!("invalid split `{s}`"))?;
    let nums: Vec<&str> = rest.split(',').map(str::trim).collect();
    match mode {
        "ratio" if nums.len() == 3 => {
            let f = |x: &str| x.parse::<f64>().map_err(|_| anyhow!("invalid split fraction `{x}`"));
            Ok(SplitSpec::Ratio {
                train: f(nums[0])?,
                val: f(nums[1])?,
                test: f(nums[2])?,
            })
        }
        "last" if !nums.is_empty() && nums.len() <= 2 => {
            let f = |x: &str| x.parse::<usize>().map_err(|_| anyhow!("invalid split count `{x}`"));
            Ok(SplitSpec::LastL {
                test: f(nums[0])?,
                val: nums.get(1).map(|x| f(x)).transpose()?.unwrap_or(0),
            })
        }
        _ => bail!("invalid split `{s}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_override_defaults_and_hyphens_map() {
        let cfg = RunConfig::from_args(&args("--p-in 0.7 --seed=4")).unwrap();
        assert_eq!(cfg.get("p_in"), "0.7");
        assert_eq!(cfg.parse::<u64>("seed").unwrap(), 4);
        assert_eq!(cfg.get("p_out"), "0.05");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_args(&args("--bogus 1")).is_err());
        assert!(RunConfig::from_args(&args("--seed")).is_err());
        assert!(RunConfig::from_args(&args("seed 1")).is_err());
        let mut cfg = RunConfig::defaults();
        assert!(cfg.apply_text("lr = 0.1\nnope = 2\n", "f").is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nlr = 0.1\nk = 6 # inline\n").unwrap();
        let cfg = RunConfig::from_args(&args(&format!("--k 4 --config {}", path.display()))).unwrap();
        assert_eq!(cfg.get("lr"), "0.1");
        assert_eq!(cfg.get("k"), "4");
        let echoed = cfg.echo();
        let mut back = RunConfig::defaults();
        back.apply_text(&echoed, "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn windows_and_splits() {
        assert_eq!(parse_window("inf").unwrap(), usize::MAX);
        assert_eq!(parse_window("2").unwrap(), 2);
        assert!(parse_window("0").is_err());
        assert_eq!(
            parse_split("last:3").unwrap(),
            SplitSpec::LastL { test: 3, val: 0 }
        );
        assert!(matches!(parse_split("ratio:0.7,0.15,0.15").unwrap(), SplitSpec::Ratio { .. }));
        assert!(parse_split("ratio:0.7").is_err());
    }

    #[test]
    fn typed_sections_resolve() {
        let cfg = RunConfig::from_args(&args("--d 16 --k 4 --heads 2 --nhead-xa 2 --pooling max:2")).unwrap();
        let t = cfg.train(10).unwrap();
        assert_eq!(t.model.d, 16);
        assert_eq!(t.model.pooling.last_k, 2);
        assert_eq!(t.w, 3);
        let bad = RunConfig::from_args(&args("--d 10 --heads 4")).unwrap();
        assert!(bad.train(10).is_err());
    }
}
