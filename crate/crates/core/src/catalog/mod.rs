//! Models, devices, quantization schemes and the workload description that
//! every estimate is computed against.
//!
//! All quantities use SI prefixes: `MB` is 10^6 bytes, `GB/s` is 10^9 bytes
//! per second. Memory sizes are carried in bits, bandwidths in bits/second
//! and frequencies in Hz.

mod builtin;
mod config;
pub mod units;

pub use builtin::{builtin_device, builtin_model, device_names, model_names, DEFAULT_FREQ_HZ};
pub use config::{
    load_device_spec, load_model_spec, load_parallelism_plan, load_quant_scheme, ToConfig,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Widest port any supported memory block can be configured to.
pub const MAX_PORT_BITS: u64 = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Encoder,
    #[default]
    Decoder,
}

/// Geometry of a stack of identical Transformer layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<u64>,
    pub num_layers: u64,
    pub num_heads: u64,
    pub hidden_size: u64,
    pub ffn_size: u64,
    pub max_seq_len: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        const E: &str = "model";
        for (field, v) in [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("hidden_size", self.hidden_size),
            ("ffn_size", self.ffn_size),
            ("max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return Err(Error::invalid(E, field, "must be at least 1"));
            }
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(Error::invalid(
                E,
                "hidden_size",
                format!(
                    "hidden_size {} is not divisible by num_heads {}",
                    self.hidden_size, self.num_heads
                ),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> u64 {
        self.hidden_size / self.num_heads
    }
}

/// Weight/activation precision plus the two packing knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub weight_bits: u64,
    pub activation_bits: u64,
    /// Weights packed into one memory word.
    pub pack_count: u64,
    /// Multiplications carried out by one DSP slice per cycle.
    pub dsp_pack_factor: u64,
}

impl QuantScheme {
    pub fn new(weight_bits: u64, activation_bits: u64) -> Result<Self> {
        let dsp_pack_factor = if weight_bits <= 4 && activation_bits <= 8 {
            2
        } else {
            1
        };
        let q = QuantScheme {
            weight_bits,
            activation_bits,
            pack_count: (MAX_PORT_BITS / weight_bits.max(1)).max(1),
            dsp_pack_factor,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_pack_count(mut self, k: u64) -> Result<Self> {
        self.pack_count = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_dsp_pack_factor(mut self, f: u64) -> Result<Self> {
        self.dsp_pack_factor = f;
        self.validate()?;
        Ok(self)
    }

    /// Width of one packed weight word.
    pub fn packed_bits(&self) -> u64 {
        self.pack_count * self.weight_bits
    }

    /// Activations that fit into one packed word, never less than one.
    pub fn activation_pack_count(&self) -> u64 {
        (self.packed_bits() / self.activation_bits).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        const E: &str = "quant";
        if !(1..=16).contains(&self.weight_bits) {
            return Err(Error::invalid(E, "weight_bits", "must be in 1..=16"));
        }
        if !(1..=32).contains(&self.activation_bits) {
            return Err(Error::invalid(E, "activation_bits", "must be in 1..=32"));
        }
        if self.pack_count == 0 {
            return Err(Error::invalid(E, "pack_count", "must be at least 1"));
        }
        if self.packed_bits() > MAX_PORT_BITS {
            return Err(Error::invalid(
                E,
                "pack_count",
                format!(
                    "{} x {} bits exceeds {MAX_PORT_BITS}",
                    self.pack_count, self.weight_bits
                ),
            ));
        }
        if !(1..=2).contains(&self.dsp_pack_factor) {
            return Err(Error::invalid(E, "dsp_pack_factor", "must be 1 or 2"));
        }
        Ok(())
    }
}

impl FromStr for QuantScheme {
    type Err = Error;

    /// Parses `w4a8`-style names. The pack count defaults to the densest
    /// packing into a 72-bit word and DSP packing is enabled for W4A8 and
    /// narrower.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::UnknownName {
            entity: "quant scheme",
            name: s.to_string(),
        };
        let rest = lower.strip_prefix('w').ok_or_else(bad)?;
        let (w, a) = rest.split_once('a').ok_or_else(bad)?;
        let w: u64 = w.parse().map_err(|_| bad())?;
        let a: u64 = a.parse().map_err(|_| bad())?;
        QuantScheme::new(w, a)
    }
}

impl fmt::Display for QuantScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}A{}", self.weight_bits, self.activation_bits)
    }
}

/// FPGA resource inventory.
///
/// Devices that mix block families (BRAM + URAM) carry the dominant family in
/// the `sram_block_*` fields; `sram_total` still counts all on-chip memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    /// Hz.
    pub freq: f64,
    pub dsp_count: u64,
    /// MACs per cycle per DSP (or per compute unit) before DSP packing.
    pub mac_per_dsp_base: f64,
    /// Bits per memory block.
    pub sram_block_capacity: u64,
    pub sram_block_count: u64,
    /// Configurable port widths in bits, ascending.
    pub sram_widths: Vec<u64>,
    /// Bits.
    pub sram_total: u64,
    /// Bits.
    pub dram_total: u64,
    /// Bits per second.
    pub offchip_bandwidth: f64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_block_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_dram_total: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_offchip_bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_int8_tops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialized_units: Option<u64>,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        const E: &str = "device";
        if !(self.freq.is_finite() && self.freq > 0.0) {
            return Err(Error::invalid(E, "freq", "must be positive"));
        }
        if !(self.mac_per_dsp_base.is_finite() && self.mac_per_dsp_base > 0.0) {
            return Err(Error::invalid(E, "mac_per_dsp_base", "must be positive"));
        }
        if !(self.offchip_bandwidth.is_finite() && self.offchip_bandwidth > 0.0) {
            return Err(Error::invalid(E, "offchip_bandwidth", "must be positive"));
        }
        for (field, v) in [
            ("dsp_count", self.dsp_count),
            ("sram_block_capacity", self.sram_block_capacity),
            ("sram_block_count", self.sram_block_count),
            ("sram_total", self.sram_total),
            ("dram_total", self.dram_total),
        ] {
            if v == 0 {
                return Err(Error::invalid(E, field, "must be positive"));
            }
        }
        if self.sram_widths.is_empty() {
            return Err(Error::invalid(E, "sram_widths", "must not be empty"));
        }
        if self.sram_widths[0] == 0 || self.sram_widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                E,
                "sram_widths",
                "must be positive and strictly ascending",
            ));
        }
        Ok(())
    }

    pub fn max_width(&self) -> u64 {
        self.sram_widths.last().copied().unwrap_or(0)
    }

    pub fn cycle_time(&self) -> f64 {
        1.0 / self.freq
    }
}

/// Peak MACs per cycle available on the device: `M_tot`.
pub fn total_compute_power(device: &DeviceSpec, quant: &QuantScheme) -> f64 {
    device.dsp_count as f64 * device.mac_per_dsp_base * quant.dsp_pack_factor as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prefill,
    Decode,
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prefill" => Ok(Phase::Prefill),
            "decode" => Ok(Phase::Decode),
            _ => Err(Error::invalid("workload", "phase", format!("`{s}`"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Prefill => "prefill",
            Phase::Decode => "decode",
        })
    }
}

/// Where the layer weights live during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightResidence {
    /// Every weight of the resident layers is held in on-chip SRAM.
    OnChip,
    /// Weights stream from DRAM through double-buffered on-chip tiles.
    OffChip,
}

impl FromStr for WeightResidence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "on_chip" | "onchip" => Ok(WeightResidence::OnChip),
            "off_chip" | "offchip" => Ok(WeightResidence::OffChip),
            _ => Err(Error::invalid("workload", "weights_resident", format!("`{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseWorkload {
    pub phase: Phase,
    /// Prompt length for prefill, tokens already in context for decode.
    pub seq_len: u64,
    pub layers_on_chip: u64,
    pub weights_resident: WeightResidence,
    pub fifo_depth: u64,
}

impl PhaseWorkload {
    pub fn prefill(seq_len: u64) -> Self {
        PhaseWorkload {
            phase: Phase::Prefill,
            seq_len,
            layers_on_chip: 1,
            weights_resident: WeightResidence::OffChip,
            fifo_depth: 2,
        }
    }

    pub fn decode(context_len: u64) -> Self {
        PhaseWorkload {
            phase: Phase::Decode,
            ..Self::prefill(context_len)
        }
    }

    pub fn with_layers_on_chip(mut self, c: u64) -> Self {
        self.layers_on_chip = c;
        self
    }

    pub fn with_weights(mut self, w: WeightResidence) -> Self {
        self.weights_resident = w;
        self
    }

    pub fn with_fifo_depth(mut self, s: u64) -> Self {
        self.fifo_depth = s;
        self
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        const E: &str = "workload";
        if self.phase == Phase::Prefill && self.seq_len == 0 {
            return Err(Error::invalid(E, "seq_len", "prefill needs at least one token"));
        }
        if self.layers_on_chip == 0 || self.layers_on_chip > model.num_layers {
            return Err(Error::invalid(
                E,
                "layers_on_chip",
                format!("must be in 1..={}", model.num_layers),
            ));
        }
        if self.fifo_depth == 0 {
            return Err(Error::invalid(E, "fifo_depth", "must be at least 1"));
        }
        Ok(())
    }

    /// Tokens whose activations are in flight through one layer: the whole
    /// prompt during prefill, a single token during decode.
    pub fn tokens_in_flight(&self) -> u64 {
        match self.phase {
            Phase::Prefill => self.seq_len,
            Phase::Decode => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u280_compute_power() {
        let dev = builtin_device("u280").unwrap();
        let w4a8: QuantScheme = "w4a8".parse().unwrap();
        assert_eq!(w4a8.dsp_pack_factor, 2);
        assert_eq!(total_compute_power(&dev, &w4a8), 18048.0);
        let single = w4a8.with_dsp_pack_factor(1).unwrap();
        assert_eq!(total_compute_power(&dev, &single), 9024.0);
    }

    #[test]
    fn zero_dsps_give_zero_compute() {
        let mut dev = builtin_device("u280").unwrap();
        dev.dsp_count = 0;
        let q: QuantScheme = "w8a8".parse().unwrap();
        assert_eq!(total_compute_power(&dev, &q), 0.0);
    }

    #[test]
    fn quant_names() {
        let q: QuantScheme = "W8A8".parse().unwrap();
        assert_eq!((q.weight_bits, q.activation_bits), (8, 8));
        assert_eq!(q.pack_count, 9);
        assert_eq!(q.dsp_pack_factor, 1);
        assert_eq!("w4a8".parse::<QuantScheme>().unwrap().pack_count, 18);
        assert!("int8".parse::<QuantScheme>().is_err());
        assert!("w0a8".parse::<QuantScheme>().is_err());
        assert!("w4a8".parse::<QuantScheme>().unwrap().with_pack_count(19).is_err());
    }

    #[test]
    fn model_head_divisibility() {
        let mut m = builtin_model("bert").unwrap();
        m.hidden_size = 770;
        match m.validate() {
            Err(Error::InvalidValue { field, .. }) => assert_eq!(field, "hidden_size"),
            other => panic!("expected InvalidValue, got {other:?}"),
        }
    }

    #[test]
    fn workload_bounds() {
        let gpt2 = builtin_model("gpt2").unwrap();
        assert!(PhaseWorkload::prefill(0).validate(&gpt2).is_err());
        assert!(PhaseWorkload::decode(0).validate(&gpt2).is_ok());
        assert!(PhaseWorkload::prefill(8)
            .with_layers_on_chip(25)
            .validate(&gpt2)
            .is_err());
    }
}
