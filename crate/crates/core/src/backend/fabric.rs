//! Analytic interconnect latency model.
//!
//! A gather of `m` segments totalling `b` bytes completes after
//!
//! ```text
//! base_latency_ns + ceil(m / max_inflight) * per_message_ns + b * per_byte_ns
//! ```
//!
//! Only two published constraints pin the presets: the RDMA preset must
//! deliver under a quarter of its peak bandwidth at 64-byte messages, and
//! the CXL preset must stay close to local DRAM. The remaining numbers are
//! assumptions and can be overridden from the config file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricModel {
    pub name: String,
    /// Fixed setup cost charged once per gather.
    pub base_latency_ns: f64,
    /// Cost of one round of up to `max_inflight` outstanding segment reads.
    pub per_message_ns: f64,
    /// Inverse bandwidth.
    pub per_byte_ns: f64,
    pub max_inflight: u32,
}

/// Modeled cost of one gather.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeledLatency {
    pub service_ns: f64,
    pub bytes_moved: u64,
    pub messages: u64,
}

pub const PRESET_NAMES: [&str; 4] = ["dram", "cxl", "rdma", "instant"];

impl FabricModel {
    fn new(name: &str, base: f64, per_message: f64, per_byte: f64, inflight: u32) -> Self {
        Self {
            name: name.to_owned(),
            base_latency_ns: base,
            per_message_ns: per_message,
            per_byte_ns: per_byte,
            max_inflight: inflight,
        }
    }

    pub fn dram() -> Self {
        Self::new("dram", 100.0, 5.0, 0.01, 64)
    }

    pub fn cxl() -> Self {
        Self::new("cxl", 400.0, 20.0, 0.015, 64)
    }

    pub fn rdma() -> Self {
        Self::new("rdma", 2_000.0, 600.0, 0.008, 32)
    }

    /// Zero-latency fabric: every gather completes at its issue instant.
    pub fn instant() -> Self {
        Self::new("instant", 0.0, 0.0, 0.0, 1)
    }

    /// Every non-empty gather takes exactly `ns`.
    pub fn fixed(ns: f64) -> Self {
        Self::new(&format!("fixed-{ns}ns"), ns, 0.0, 0.0, 1)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "dram" => Some(Self::dram()),
            "cxl" => Some(Self::cxl()),
            "rdma" => Some(Self::rdma()),
            "instant" => Some(Self::instant()),
            _ => None,
        }
    }

    pub fn validate(self) -> Result<Self> {
        let reason = if self.max_inflight == 0 {
            Some("max_inflight must be at least 1")
        } else if [self.base_latency_ns, self.per_message_ns, self.per_byte_ns]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            Some("latency parameters must be finite and non-negative")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidFabric {
                name: self.name,
                reason,
            }),
            None => Ok(self),
        }
    }

    /// Cost of a gather. An empty gather issues nothing and costs nothing.
    pub fn service(&self, messages: u64, bytes_moved: u64) -> ModeledLatency {
        let service_ns = if messages == 0 {
            0.0
        } else {
            let rounds = messages.div_ceil(self.max_inflight as u64);
            self.base_latency_ns
                + rounds as f64 * self.per_message_ns
                + bytes_moved as f64 * self.per_byte_ns
        };
        ModeledLatency {
            service_ns,
            bytes_moved,
            messages,
        }
    }

    /// Delivered bandwidth in bytes/sec for `messages` reads of
    /// `message_bytes` each.
    pub fn effective_bandwidth(&self, message_bytes: u64, messages: u64) -> f64 {
        let bytes = message_bytes * messages;
        let ns = self.service(messages, bytes).service_ns;
        if ns == 0.0 {
            return f64::INFINITY;
        }
        bytes as f64 / ns * 1e9
    }

    /// Asymptotic bandwidth in bytes/sec, `1 / per_byte_ns`.
    pub fn peak_bandwidth(&self) -> f64 {
        1e9 / self.per_byte_ns
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rdma_formula_at_batch_256() {
        let m = FabricModel::rdma();
        let got = m.service(4_096, 1_310_720).service_ns;
        let want = 2_000.0 + 128.0 * 600.0 + 1_310_720.0 * 0.008;
        assert_eq!(got, want);
    }

    #[test]
    fn rdma_small_messages_under_quarter_peak() {
        let m = FabricModel::rdma();
        let ratio = m.effective_bandwidth(64, 1_000_000) / m.peak_bandwidth();
        assert!(ratio < 0.25, "{ratio}");
    }

    #[test]
    fn cxl_small_messages_over_half_peak() {
        let m = FabricModel::cxl();
        let ratio = m.effective_bandwidth(64, 1_000_000) / m.peak_bandwidth();
        assert!(ratio >= 0.5, "{ratio}");
    }

    #[test]
    fn large_message_approaches_peak() {
        for m in [FabricModel::dram(), FabricModel::cxl(), FabricModel::rdma()] {
            let ratio = m.effective_bandwidth(1 << 40, 1) / m.peak_bandwidth();
            assert!(ratio > 0.999_999, "{} {ratio}", m.name);
        }
    }

    #[test]
    fn validation() {
        assert!(FabricModel {
            max_inflight: 0,
            ..FabricModel::cxl()
        }
        .validate()
        .is_err());
        assert!(FabricModel {
            per_byte_ns: -1.0,
            ..FabricModel::cxl()
        }
        .validate()
        .is_err());
        for name in PRESET_NAMES {
            assert!(FabricModel::preset(name).unwrap().validate().is_ok());
        }
        assert!(FabricModel::preset("nvlink").is_none());
    }

    #[test]
    fn empty_gather_is_free() {
        assert_eq!(FabricModel::rdma().service(0, 0).service_ns, 0.0);
    }

    proptest! {
        #[test]
        fn monotone_in_messages_and_bytes(
            base in 0.0f64..1e4, per_msg in 0.0f64..1e3, per_byte in 0.0f64..1.0,
            inflight in 1u32..128, m in 0u64..100_000, dm in 0u64..1000,
            b in 0u64..1_000_000_000, db in 0u64..1_000_000,
        ) {
            let model = FabricModel::new("p", base, per_msg, per_byte, inflight);
            let t = model.service(m, b).service_ns;
            prop_assert!(model.service(m + dm, b).service_ns >= t);
            prop_assert!(model.service(m, b + db).service_ns >= t);
        }

        #[test]
        fn bandwidth_monotone_in_message_size(
            base in 0.0f64..1e4, per_msg in 0.0f64..1e3, per_byte in 1e-4f64..1.0,
            inflight in 1u32..128, messages in 1u64..100_000,
            size in 1u64..100_000, grow in 0u64..100_000,
        ) {
            let model = FabricModel::new("p", base, per_msg, per_byte, inflight);
            let small = model.effective_bandwidth(size, messages);
            let large = model.effective_bandwidth(size + grow, messages);
            prop_assert!(large >= small * (1.0 - 1e-12));
        }
    }
}
