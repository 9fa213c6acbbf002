//! Table geometry and the derived byte arithmetic used across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default master seed for the shipped presets.
pub const DEFAULT_HASH_SEED: u64 = 0x5EED_E1A7_C0DE_0001;

/// Geometry of an Engram embedding table and where it sits in the model.
///
/// All heads and n-gram orders address one shared physical table; a head
/// selects an equal-width slice (segment) of the hashed row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngramConfig {
    /// Embedding rows in the table.
    pub num_rows: u64,
    /// Scalars per full row.
    pub emb_dim: usize,
    /// Hash heads per n-gram order.
    pub num_heads: usize,
    /// N-gram sizes looked up per token, e.g. `[2, 3]`.
    pub ngram_orders: Vec<usize>,
    /// Bytes per scalar, 2 or 4.
    pub elem_bytes: usize,
    /// 1-based transformer layers hosting an Engram module, ascending.
    pub engram_layers: Vec<usize>,
    pub total_layers: usize,
    pub hash_seed: u64,
}

impl EngramConfig {
    /// Engram-27B table geometry with 2- and 3-gram lookups, placed at
    /// layers 2 and 15 of a 64-layer model.
    pub fn engram_27b() -> Self {
        Self {
            num_rows: 2_262_400,
            emb_dim: 1_280,
            num_heads: 8,
            ngram_orders: vec![2, 3],
            elem_bytes: 2,
            engram_layers: vec![2, 15],
            total_layers: 64,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }

    /// Engram-40B: same row width as 27B, 7,239,680 rows.
    pub fn engram_40b() -> Self {
        Self {
            num_rows: 7_239_680,
            ..Self::engram_27b()
        }
    }

    /// Returns `self` if every invariant holds, otherwise the first
    /// violated invariant.
    pub fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |what| Err(Error::InvalidConfig(what));
        if self.num_rows == 0 {
            return fail("num_rows must be positive");
        }
        if self.num_heads == 0 {
            return fail("num_heads must be at least 1");
        }
        if self.emb_dim == 0 {
            return fail("emb_dim must be positive");
        }
        if !self.emb_dim.is_multiple_of(self.num_heads) {
            return fail("emb_dim not divisible by num_heads");
        }
        if self.ngram_orders.contains(&0) {
            return fail("ngram order must be at least 1");
        }
        if !matches!(self.elem_bytes, 2 | 4) {
            return fail("elem_bytes must be 2 or 4");
        }
        if self
            .engram_layers
            .iter()
            .any(|&k| k == 0 || k > self.total_layers)
        {
            return fail("engram layer out of range");
        }
        if self.engram_layers.windows(2).any(|w| w[0] >= w[1]) {
            return fail("engram layers not strictly ascending");
        }
        Ok(())
    }

    /// Bytes in one head's slice of a row.
    pub fn segment_bytes(&self) -> usize {
        self.emb_dim / self.num_heads * self.elem_bytes
    }

    pub fn row_bytes(&self) -> usize {
        self.emb_dim * self.elem_bytes
    }

    /// Bytes fetched per token for one Engram layer: one segment per
    /// (order, head) pair.
    pub fn payload_bytes_per_token_layer(&self) -> usize {
        self.ngram_orders.len() * self.num_heads * self.segment_bytes()
    }

    /// Segments fetched per token for one Engram layer.
    pub fn segments_per_token(&self) -> usize {
        self.ngram_orders.len() * self.num_heads
    }

    /// Size of the table payload in bytes.
    pub fn table_bytes(&self) -> u64 {
        self.num_rows * self.row_bytes() as u64
    }

    /// Number of layers hosting Engram modules.
    pub fn n_eng(&self) -> usize {
        self.engram_layers.len()
    }

    pub fn max_order(&self) -> usize {
        self.ngram_orders.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(f: impl FnOnce(&mut EngramConfig)) -> EngramConfig {
        let mut cfg = EngramConfig::engram_27b();
        f(&mut cfg);
        cfg
    }

    fn err_text(cfg: EngramConfig) -> String {
        cfg.validate().unwrap_err().to_string()
    }

    #[test]
    fn engram_27b_single_order_is_valid() {
        let cfg = with(|c| c.ngram_orders = vec![2]);
        assert_eq!(cfg.clone().validate().unwrap(), cfg);
    }

    #[test]
    fn rejects_indivisible_emb_dim() {
        let msg = err_text(with(|c| c.emb_dim = 1_281));
        assert!(msg.contains("emb_dim not divisible"), "{msg}");
    }

    #[test]
    fn rejects_layer_beyond_depth() {
        let msg = err_text(with(|c| {
            c.engram_layers = vec![2, 15];
            c.total_layers = 14;
        }));
        assert!(msg.contains("layer out of range"), "{msg}");
    }

    #[test]
    fn rejects_other_invariants() {
        assert!(with(|c| c.num_rows = 0).validate().is_err());
        assert!(with(|c| c.num_heads = 0).validate().is_err());
        assert!(with(|c| c.elem_bytes = 3).validate().is_err());
        assert!(with(|c| c.ngram_orders = vec![2, 0]).validate().is_err());
        assert!(with(|c| c.engram_layers = vec![0]).validate().is_err());
        assert!(with(|c| c.engram_layers = vec![15, 2]).validate().is_err());
        assert!(with(|c| c.ngram_orders.clear()).validate().is_ok());
        assert!(with(|c| c.elem_bytes = 4).validate().is_ok());
    }

    #[test]
    fn segment_bytes_examples() {
        assert_eq!(EngramConfig::engram_27b().segment_bytes(), 320);
        let unit = with(|c| c.emb_dim = 8);
        assert_eq!(unit.segment_bytes(), 2);
        let four = with(|c| c.num_heads = 4);
        assert_eq!(four.segment_bytes(), 640);
    }

    #[test]
    fn payload_examples() {
        assert_eq!(
            EngramConfig::engram_27b().payload_bytes_per_token_layer(),
            5_120
        );
        let bigram = with(|c| c.ngram_orders = vec![2]);
        assert_eq!(bigram.payload_bytes_per_token_layer(), 2_560);
        let none = with(|c| c.ngram_orders.clear());
        assert_eq!(none.payload_bytes_per_token_layer(), 0);
    }

    #[test]
    fn table_bytes_examples() {
        assert_eq!(EngramConfig::engram_27b().table_bytes(), 5_791_744_000);
        assert_eq!(EngramConfig::engram_40b().table_bytes(), 18_533_580_800);
        let tiny = with(|c| {
            c.num_rows = 1;
            c.emb_dim = 1;
            c.num_heads = 1;
        });
        assert_eq!(tiny.table_bytes(), 2);
    }

    #[test]
    fn payload_law_over_small_grid() {
        for heads in 1..=8usize {
            for mult in 1..=4usize {
                for elem in [2usize, 4] {
                    for n_orders in 0..=3usize {
                        let cfg = with(|c| {
                            c.num_heads = heads;
                            c.emb_dim = heads * mult;
                            c.elem_bytes = elem;
                            c.ngram_orders = (1..=n_orders).collect();
                        })
                        .validate()
                        .unwrap();
                        assert_eq!(
                            cfg.payload_bytes_per_token_layer(),
                            n_orders * heads * mult * elem
                        );
                    }
                }
            }
        }
    }
}
