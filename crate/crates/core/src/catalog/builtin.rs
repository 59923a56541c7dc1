use super::{DeviceSpec, ModelKind, ModelSpec};
use crate::error::{Error, Result};

/// Clock assumed for every catalog device (the frequency achieved on U280).
pub const DEFAULT_FREQ_HZ: f64 = 245e6;

const XILINX_BRAM18_BITS: u64 = 18 * 1024;
const XILINX_BRAM_WIDTHS: [u64; 7] = [1, 2, 4, 9, 18, 36, 72];
const INTEL_M20K_BITS: u64 = 20 * 1024;
const INTEL_M20K_WIDTHS: [u64; 10] = [1, 2, 4, 5, 8, 10, 16, 20, 32, 40];

const MB: u64 = 8_000_000;
const GB: u64 = 8_000_000_000;
const GBPS: f64 = 8e9;

pub fn model_names() -> &'static [&'static str] {
    &["bert", "gpt2", "llama2", "vicuna"]
}

pub fn device_names() -> &'static [&'static str] {
    &["u280", "vck5000", "vhk158", "stratix10nx", "agilex7"]
}

fn model(
    name: &str,
    kind: ModelKind,
    params: u64,
    layers: u64,
    heads: u64,
    hidden: u64,
    ffn: u64,
    max_seq: u64,
) -> ModelSpec {
    ModelSpec {
        name: name.to_string(),
        kind,
        param_count: Some(params),
        num_layers: layers,
        num_heads: heads,
        hidden_size: hidden,
        ffn_size: ffn,
        max_seq_len: max_seq,
    }
}

pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    use ModelKind::*;
    Ok(match name.to_ascii_lowercase().as_str() {
        "bert" | "bert-base" => model("bert", Encoder, 110_000_000, 12, 12, 768, 3072, 512),
        "gpt2" | "gpt2-medium" => model("gpt2", Decoder, 355_000_000, 24, 16, 1024, 4096, 1024),
        "llama2" | "llama2-7b" | "llama" => {
            model("llama2", Decoder, 7_000_000_000, 32, 32, 4096, 11008, 4096)
        }
        "vicuna" | "vicuna-13b" => {
            model("vicuna", Decoder, 13_000_000_000, 40, 40, 5120, 13824, 2048)
        }
        _ => {
            return Err(Error::UnknownName {
                entity: "model",
                name: name.to_string(),
            })
        }
    })
}

/// MACs per cycle per unit for a device rated in INT8 TOPS, counting two
/// operations per MAC at the programmable-logic clock.
fn mac_per_unit_from_tops(tops: f64, units: u64) -> f64 {
    tops * 1e12 / (2.0 * DEFAULT_FREQ_HZ * units as f64)
}

fn xilinx(name: &str, dsps: u64, brams: u64, urams: u64, sram: u64, dram: u64, bw: f64) -> DeviceSpec {
    DeviceSpec {
        name: name.to_string(),
        freq: DEFAULT_FREQ_HZ,
        dsp_count: dsps,
        mac_per_dsp_base: 1.0,
        sram_block_capacity: XILINX_BRAM18_BITS,
        sram_block_count: brams,
        sram_widths: XILINX_BRAM_WIDTHS.to_vec(),
        sram_total: sram,
        dram_total: dram,
        offchip_bandwidth: bw,
        secondary_block_count: Some(urams),
        secondary_dram_total: None,
        secondary_offchip_bandwidth: None,
        peak_int8_tops: None,
        specialized_units: None,
    }
}

fn intel(name: &str, dsps: u64, m20ks: u64, sram: u64, dram: u64, bw: f64) -> DeviceSpec {
    DeviceSpec {
        sram_block_capacity: INTEL_M20K_BITS,
        sram_widths: INTEL_M20K_WIDTHS.to_vec(),
        secondary_block_count: None,
        ..xilinx(name, dsps, m20ks, 0, sram, dram, bw)
    }
}

pub fn builtin_device(name: &str) -> Result<DeviceSpec> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "u280" | "alveo-u280" => DeviceSpec {
            secondary_dram_total: Some(32 * GB),
            secondary_offchip_bandwidth: Some(38.0 * GBPS),
            peak_int8_tops: Some(24.5),
            ..xilinx("u280", 9024, 4032, 960, 41 * MB, 8 * GB, 460.0 * GBPS)
        },
        "vck5000" | "versal-vck5000" => DeviceSpec {
            mac_per_dsp_base: mac_per_unit_from_tops(145.0, 1968),
            peak_int8_tops: Some(145.0),
            specialized_units: Some(400),
            ..xilinx("vck5000", 1968, 967, 463, 24 * MB, 16 * GB, 102.4 * GBPS)
        },
        "vhk158" | "versal-vhk158" => DeviceSpec {
            secondary_dram_total: Some(32 * GB),
            secondary_offchip_bandwidth: Some(102.4 * GBPS),
            peak_int8_tops: Some(56.0),
            ..xilinx("vhk158", 7392, 5063, 1301, 63_620_000 * 8, 32 * GB, 819.2 * GBPS)
        },
        // No DSP column for this part: the AI tensor blocks are its compute units.
        "stratix10nx" | "stratix10-nx" | "s10nx" => DeviceSpec {
            mac_per_dsp_base: mac_per_unit_from_tops(143.0, 3960),
            secondary_block_count: Some(2),
            peak_int8_tops: Some(143.0),
            specialized_units: Some(3960),
            ..intel("stratix10nx", 3960, 6847, 30 * MB, 16 * GB, 512.0 * GBPS)
        },
        "agilex7" | "agm039" => DeviceSpec {
            peak_int8_tops: Some(88.6),
            ..intel("agilex7", 12300, 18960, 46_250_000 * 8, 32 * GB, 820.0 * GBPS)
        },
        _ => {
            return Err(Error::UnknownName {
                entity: "device",
                name: name.to_string(),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates() {
        for n in model_names() {
            builtin_model(n).unwrap().validate().unwrap();
        }
        for n in device_names() {
            builtin_device(n).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn tops_rated_devices_reach_their_rating() {
        let vck = builtin_device("vck5000").unwrap();
        let macs = vck.dsp_count as f64 * vck.mac_per_dsp_base;
        let tops = 2.0 * macs * vck.freq / 1e12;
        assert!((tops - 145.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(builtin_model("gpt5"), Err(Error::UnknownName { .. })));
        assert!(matches!(builtin_device("zcu102"), Err(Error::UnknownName { .. })));
    }
}
