//! N-gram extraction and multi-head hashed addressing.
//!
//! Every (token position, n-gram order, head) triple resolves to one
//! segment read: the head's slice of the row chosen by hashing the n-gram.

use crate::config::EngramConfig;
use crate::error::{Error, Result};

/// Fills window slots that fall before the start of a sequence.
pub const SENTINEL_TOKEN: u32 = u32::MAX;

const HEAD_MULT: u64 = 0x9E37_79B9_7F4A_7C15;
const ORDER_MULT: u64 = 0xC2B2_AE3D_27D4_EB4F;
const MIX_MULT: u64 = 0xFF51_AFD7_ED55_8CCD;

/// Token IDs for a batch together with the positions needing retrieval.
///
/// A context may hold several sequences back to back; n-gram windows never
/// reach across a sequence boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenContext {
    token_ids: Vec<u32>,
    /// Ascending start offsets of each sequence; always begins with 0.
    seq_starts: Vec<usize>,
    positions: Vec<usize>,
}

impl TokenContext {
    /// A single sequence with explicit retrieval positions.
    pub fn new(token_ids: Vec<u32>, positions: Vec<usize>) -> Result<Self> {
        if let Some(&position) = positions.iter().find(|&&p| p >= token_ids.len()) {
            return Err(Error::InvalidPosition {
                position,
                len: token_ids.len(),
            });
        }
        Ok(Self {
            token_ids,
            seq_starts: vec![0],
            positions,
        })
    }

    /// A decode batch: one retrieval at the newest token of every
    /// non-empty sequence, in sequence order.
    pub fn decode_batch<S: AsRef<[u32]>>(sequences: &[S]) -> Self {
        let mut token_ids = Vec::new();
        let mut seq_starts = Vec::with_capacity(sequences.len().max(1));
        let mut positions = Vec::with_capacity(sequences.len());
        for seq in sequences {
            let seq = seq.as_ref();
            if seq.is_empty() {
                continue;
            }
            seq_starts.push(token_ids.len());
            token_ids.extend_from_slice(seq);
            positions.push(token_ids.len() - 1);
        }
        if seq_starts.is_empty() {
            seq_starts.push(0);
        }
        Self {
            token_ids,
            seq_starts,
            positions,
        }
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Same tokens, different retrieval positions.
    pub fn with_positions(&self, positions: Vec<usize>) -> Result<Self> {
        let mut ctx = Self::new(self.token_ids.clone(), positions)?;
        ctx.seq_starts = self.seq_starts.clone();
        Ok(ctx)
    }

    fn sequence_start(&self, position: usize) -> usize {
        let idx = self.seq_starts.partition_point(|&s| s <= position);
        self.seq_starts[idx.saturating_sub(1)]
    }

    fn fill_ngram(&self, position: usize, out: &mut [u32]) -> Result<()> {
        if position >= self.token_ids.len() {
            return Err(Error::InvalidPosition {
                position,
                len: self.token_ids.len(),
            });
        }
        let start = self.sequence_start(position);
        let n = out.len();
        for (i, slot) in out.iter_mut().enumerate() {
            // slot i holds token at position - (n - 1 - i)
            let back = n - 1 - i;
            *slot = match position.checked_sub(back) {
                Some(p) if p >= start => self.token_ids[p],
                _ => SENTINEL_TOKEN,
            };
        }
        Ok(())
    }
}

/// The `order` tokens ending at `position`, left-padded with
/// [`SENTINEL_TOKEN`] where the window runs past the sequence start.
pub fn extract_ngram(ctx: &TokenContext, position: usize, order: usize) -> Result<Vec<u32>> {
    let mut out = vec![0; order];
    ctx.fill_ngram(position, &mut out)?;
    Ok(out)
}

#[inline]
fn xorshift_mul(state: u64) -> u64 {
    (state ^ (state >> 33)).wrapping_mul(MIX_MULT)
}

/// Raw 64-bit multi-head n-gram hash before reduction to a row.
#[inline]
pub fn ngram_hash(seed: u64, ngram: &[u32], head: usize, order_idx: usize) -> u64 {
    let mut state =
        seed ^ (head as u64).wrapping_mul(HEAD_MULT) ^ (order_idx as u64).wrapping_mul(ORDER_MULT);
    for &token in ngram {
        state = (state ^ token as u64).wrapping_mul(MIX_MULT);
        state ^= state >> 29;
    }
    xorshift_mul(xorshift_mul(state))
}

/// Table row selected by `head` for `ngram` at order slot `order_idx`.
#[inline]
pub fn hash_to_row(ngram: &[u32], head: usize, order_idx: usize, cfg: &EngramConfig) -> u64 {
    ngram_hash(cfg.hash_seed, ngram, head, order_idx) % cfg.num_rows
}

/// One planned segment read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentAddress {
    pub row: u64,
    pub head: usize,
    pub order_idx: usize,
    /// Offset of the head's slice within the table payload.
    pub byte_offset: u64,
    pub length: usize,
}

impl SegmentAddress {
    pub fn new(row: u64, head: usize, order_idx: usize, cfg: &EngramConfig) -> Self {
        let length = cfg.segment_bytes();
        Self {
            row,
            head,
            order_idx,
            byte_offset: row * cfg.row_bytes() as u64 + (head * length) as u64,
            length,
        }
    }

    pub fn end(&self) -> u64 {
        self.byte_offset + self.length as u64
    }
}

/// Every segment read for one batch step at one Engram layer, ordered
/// position-major, then by order, then by head.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatherPlan {
    pub addresses: Vec<SegmentAddress>,
    pub token_count: usize,
}

impl GatherPlan {
    pub fn total_bytes(&self) -> usize {
        self.addresses.iter().map(|a| a.length).sum()
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

/// Resolves every (position, order, head) triple of `ctx` to a segment
/// address. Repeated addresses are kept.
pub fn plan_gather(ctx: &TokenContext, cfg: &EngramConfig) -> Result<GatherPlan> {
    let mut addresses = Vec::with_capacity(ctx.positions.len() * cfg.segments_per_token());
    let mut window = vec![0u32; cfg.max_order()];
    for &position in &ctx.positions {
        for (order_idx, &order) in cfg.ngram_orders.iter().enumerate() {
            let ngram = &mut window[..order];
            ctx.fill_ngram(position, ngram)?;
            for head in 0..cfg.num_heads {
                let row = hash_to_row(ngram, head, order_idx, cfg);
                addresses.push(SegmentAddress::new(row, head, order_idx, cfg));
            }
        }
    }
    Ok(GatherPlan {
        addresses,
        token_count: ctx.positions.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: u32 = SENTINEL_TOKEN;

    fn cfg() -> EngramConfig {
        EngramConfig::engram_27b()
    }

    /// Straight transcription of the mixing recipe, kept apart from the
    /// production path.
    fn reference_hash(seed: u64, ngram: &[u32], head: u64, order_idx: u64) -> u64 {
        const C1: u64 = 0x9E3779B97F4A7C15;
        const C2: u64 = 0xC2B2AE3D27D4EB4F;
        const C3: u64 = 0xFF51AFD7ED558CCD;
        let mut s = seed ^ head.wrapping_mul(C1) ^ order_idx.wrapping_mul(C2);
        for &t in ngram {
            s ^= t as u64;
            s = s.wrapping_mul(C3);
            s ^= s >> 29;
        }
        for _ in 0..2 {
            s ^= s >> 33;
            s = s.wrapping_mul(C3);
        }
        s
    }

    #[test]
    fn extract_examples() {
        let ctx = TokenContext::new(vec![7, 8, 9], vec![2]).unwrap();
        assert_eq!(extract_ngram(&ctx, 2, 2).unwrap(), vec![8, 9]);
        assert_eq!(extract_ngram(&ctx, 0, 3).unwrap(), vec![S, S, 7]);
        let one = TokenContext::new(vec![5], vec![0]).unwrap();
        assert_eq!(extract_ngram(&one, 0, 2).unwrap(), vec![S, 5]);
        assert!(matches!(
            extract_ngram(&ctx, 3, 2),
            Err(Error::InvalidPosition {
                position: 3,
                len: 3
            })
        ));
        assert!(TokenContext::new(vec![1], vec![1]).is_err());
    }

    #[test]
    fn windows_stop_at_sequence_boundaries() {
        let ctx = TokenContext::decode_batch(&[vec![1, 2, 3], vec![4], vec![], vec![5, 6]]);
        assert_eq!(ctx.positions(), &[2, 3, 5]);
        assert_eq!(extract_ngram(&ctx, 3, 3).unwrap(), vec![S, S, 4]);
        assert_eq!(extract_ngram(&ctx, 5, 3).unwrap(), vec![S, 5, 6]);
        assert_eq!(extract_ngram(&ctx, 2, 3).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn frozen_hash_vectors() {
        // Computed with an independent Python evaluation of the mixing
        // recipe (arbitrary-precision ints masked to 64 bits).
        let seed = crate::config::DEFAULT_HASH_SEED;
        let cases: [(&[u32], usize, usize, u64); 4] = [
            (&[8, 9], 0, 0, FROZEN[0]),
            (&[8, 9], 1, 0, FROZEN[1]),
            (&[S, 5, 6], 7, 1, FROZEN[2]),
            (&[], 0, 0, FROZEN[3]),
        ];
        for (ngram, head, order_idx, want) in cases {
            assert_eq!(
                ngram_hash(seed, ngram, head, order_idx),
                want,
                "{ngram:?} h{head}"
            );
        }
    }

    const FROZEN: [u64; 4] = [
        0x1e0f_44e6_f3ef_2d80,
        0x0cbd_0640_b7fb_ec5e,
        0xfa9e_367b_0d5c_76a7,
        0xcc9d_0bb2_e6e4_ab77,
    ];

    #[test]
    fn matches_reference_on_fixed_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = cfg();
        let mut differing = 0;
        for _ in 0..10_000 {
            let order = rng.gen_range(1..=3);
            let ngram: Vec<u32> = (0..order).map(|_| rng.gen()).collect();
            for head in 0..8 {
                for order_idx in 0..2 {
                    let want = reference_hash(cfg.hash_seed, &ngram, head as u64, order_idx as u64);
                    assert_eq!(ngram_hash(cfg.hash_seed, &ngram, head, order_idx), want);
                }
            }
            if hash_to_row(&ngram, 0, 0, &cfg) != hash_to_row(&ngram, 1, 0, &cfg) {
                differing += 1;
            }
        }
        assert!(differing >= 9_990, "{differing}");
        assert_ne!(
            hash_to_row(&[8, 9], 0, 0, &cfg),
            hash_to_row(&[8, 9], 1, 0, &cfg)
        );
    }

    #[test]
    fn hash_is_deterministic() {
        let cfg = cfg();
        assert_eq!(
            hash_to_row(&[8, 9], 3, 1, &cfg),
            hash_to_row(&[8, 9], 3, 1, &cfg)
        );
    }

    #[test]
    fn plan_examples() {
        let cfg = cfg();
        let seqs: Vec<Vec<u32>> = (0..256u32)
            .map(|i| vec![i * 3, i * 3 + 1, i * 3 + 2])
            .collect();
        let plan = plan_gather(&TokenContext::decode_batch(&seqs), &cfg).unwrap();
        assert_eq!(plan.len(), 4_096);
        assert_eq!(plan.total_bytes(), 1_310_720);
        assert_eq!(plan.token_count, 256);

        let small = EngramConfig {
            ngram_orders: vec![2],
            num_heads: 1,
            ..cfg.clone()
        };
        let one = TokenContext::new(vec![1, 2], vec![1]).unwrap();
        assert_eq!(plan_gather(&one, &small).unwrap().len(), 1);

        let again = plan_gather(&TokenContext::decode_batch(&seqs), &cfg).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn plan_ordering_is_position_order_head() {
        let cfg = cfg();
        let ctx = TokenContext::new(vec![4, 5, 6], vec![2, 1]).unwrap();
        let plan = plan_gather(&ctx, &cfg).unwrap();
        let per_token = cfg.segments_per_token();
        for (i, a) in plan.addresses.iter().enumerate() {
            let within = i % per_token;
            assert_eq!(a.order_idx, within / cfg.num_heads);
            assert_eq!(a.head, within % cfg.num_heads);
        }
        let ngram = extract_ngram(&ctx, 1, 3).unwrap();
        let a = plan.addresses[per_token + cfg.num_heads + 5];
        assert_eq!(a.row, hash_to_row(&ngram, 5, 1, &cfg));
    }

    fn arb_cfg() -> impl Strategy<Value = EngramConfig> {
        (
            1u64..5_000,
            1usize..=8,
            1usize..=16,
            prop::sample::select(vec![2usize, 4]),
            prop::collection::vec(1usize..=4, 0..=3),
            any::<u64>(),
        )
            .prop_map(|(rows, heads, mult, elem, orders, seed)| EngramConfig {
                num_rows: rows,
                emb_dim: heads * mult,
                num_heads: heads,
                ngram_orders: orders,
                elem_bytes: elem,
                engram_layers: vec![1],
                total_layers: 4,
                hash_seed: seed,
            })
    }

    proptest! {
        #[test]
        fn plan_size_and_bounds(
            cfg in arb_cfg(),
            tokens in prop::collection::vec(any::<u32>(), 1..40),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 0..20),
        ) {
            let positions: Vec<usize> = picks.iter().map(|i| i.index(tokens.len())).collect();
            let ctx = TokenContext::new(tokens, positions.clone()).unwrap();
            let plan = plan_gather(&ctx, &cfg).unwrap();
            prop_assert_eq!(plan.len(), positions.len() * cfg.ngram_orders.len() * cfg.num_heads);
            for a in &plan.addresses {
                prop_assert!(a.row < cfg.num_rows);
                prop_assert_eq!(
                    a.byte_offset,
                    a.row * (cfg.emb_dim * cfg.elem_bytes) as u64 + (a.head * cfg.segment_bytes()) as u64
                );
                prop_assert!(a.end() <= cfg.table_bytes());
            }
        }

        #[test]
        fn shuffling_positions_permutes_groups(
            cfg in arb_cfg(),
            tokens in prop::collection::vec(any::<u32>(), 1..40),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 1..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let positions: Vec<usize> = picks.iter().map(|i| i.index(tokens.len())).collect();
            let mut order: Vec<usize> = (0..positions.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<usize> = order.iter().map(|&i| positions[i]).collect();

            let ctx = TokenContext::new(tokens, positions).unwrap();
            let plan = plan_gather(&ctx, &cfg).unwrap();
            let plan2 = plan_gather(&ctx.with_positions(shuffled).unwrap(), &cfg).unwrap();
            let group = cfg.segments_per_token();
            if group > 0 {
                for (dst, &src) in order.iter().enumerate() {
                    prop_assert_eq!(
                        &plan2.addresses[dst * group..(dst + 1) * group],
                        &plan.addresses[src * group..(src + 1) * group]
                    );
                }
            }
        }
    }
}
