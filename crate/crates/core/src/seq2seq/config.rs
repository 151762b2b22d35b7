use serde::{Deserialize, Serialize};

use super::Seq2SeqError;

/// Architecture and decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub max_target_len: usize,
    pub beam_size: usize,
    pub seed: u64,
    /// Weights start uniform in `[-init_scale, init_scale]`; biases at zero.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Small enough to train on one CPU core in minutes.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            dropout: 0.2,
            max_target_len: 30,
            beam_size: 1,
            seed: 1,
            init_scale: 0.1,
        }
    }

    /// 620-dimensional embeddings and 1000 hidden units.
    pub fn paper() -> Self {
        ModelConfig {
            embed_dim: 620,
            hidden_dim: 1000,
            ..ModelConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper" => Some(Self::paper()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let bad = |m: &str| Err(Seq2SeqError::InvalidConfig(m.to_string()));
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.max_target_len == 0 {
            return bad("max_target_len must be at least 1");
        }
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad("init_scale must be a non-negative number");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let p = ModelConfig::preset("paper").unwrap();
        assert_eq!((p.embed_dim, p.hidden_dim), (620, 1000));
        let d = ModelConfig::preset("desk").unwrap();
        assert_eq!((d.embed_dim, d.hidden_dim, d.beam_size, d.max_target_len), (32, 64, 1, 30));
        assert_eq!(d.dropout, 0.2);
        assert!(ModelConfig::preset("huge").is_none());
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::desk().validate().is_ok());
        for broken in [
            ModelConfig { embed_dim: 0, ..ModelConfig::desk() },
            ModelConfig { dropout: 1.0, ..ModelConfig::desk() },
            ModelConfig { beam_size: 0, ..ModelConfig::desk() },
            ModelConfig { max_target_len: 0, ..ModelConfig::desk() },
        ] {
            assert!(broken.validate().is_err());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ModelConfig = serde_json::from_str(r#"{"hidden_dim": 16}"#).unwrap();
        assert_eq!(c.hidden_dim, 16);
        assert_eq!(c.embed_dim, 32);
    }
}
