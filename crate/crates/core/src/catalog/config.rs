//! TOML config documents, one entity per document.
//!
//! Key names match the struct fields. Sizes, bandwidths and frequencies may be
//! written either as plain numbers (bits, bits/second, Hz) or as strings with
//! a unit suffix such as `"41MB"`, `"460GB/s"` or `"245MHz"`.

use super::units::{parse_bandwidth, parse_bits, parse_frequency};
use super::{DeviceSpec, ModelKind, ModelSpec, QuantScheme};
use crate::distributed::ParallelismPlan;
use crate::error::{Error, Result};
use serde::Serialize;
use toml::{Table, Value};

struct Fields {
    entity: &'static str,
    table: Table,
}

impl Fields {
    fn parse(entity: &'static str, text: &str, allowed: &[&str]) -> Result<Self> {
        let table: Table = text.parse()?;
        if let Some(key) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::UnknownKey {
                entity,
                key: key.clone(),
            });
        }
        Ok(Fields { entity, table })
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> Error {
        Error::invalid(self.entity, key, reason)
    }

    fn required(&mut self, key: &str) -> Result<Value> {
        self.table.remove(key).ok_or_else(|| Error::MissingField {
            entity: self.entity,
            field: key.to_string(),
        })
    }

    fn value_u64(&self, key: &str, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::Float(f) if *f >= 0.0 && f.fract() == 0.0 => Ok(*f as u64),
            _ => Err(self.invalid(key, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn u64(&mut self, key: &str) -> Result<u64> {
        let v = self.required(key)?;
        self.value_u64(key, &v)
    }

    fn opt_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(v) => self.value_u64(key, &v).map(Some),
        }
    }

    fn string(&mut self, key: &str) -> Result<String> {
        match self.required(key)? {
            Value::String(s) => Ok(s),
            v => Err(self.invalid(key, format!("expected a string, got {v}"))),
        }
    }

    fn value_quantity(&self, key: &str, v: &Value, parse: fn(&str) -> Option<f64>) -> Result<f64> {
        match v {
            Value::Integer(i) => Ok(*i as f64),
            Value::Float(f) => Ok(*f),
            Value::String(s) => parse(s).ok_or_else(|| self.invalid(key, format!("cannot parse `{s}`"))),
            _ => Err(self.invalid(key, format!("expected a number, got {v}"))),
        }
    }

    fn quantity(&mut self, key: &str, parse: fn(&str) -> Option<f64>) -> Result<f64> {
        let v = self.required(key)?;
        self.value_quantity(key, &v, parse)
    }

    fn opt_quantity(&mut self, key: &str, parse: fn(&str) -> Option<f64>) -> Result<Option<f64>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(v) => self.value_quantity(key, &v, parse).map(Some),
        }
    }

    fn bits(&mut self, key: &str) -> Result<u64> {
        let b = self.quantity(key, parse_bits)?;
        self.to_bits(key, b)
    }

    fn opt_bits(&mut self, key: &str) -> Result<Option<u64>> {
        match self.opt_quantity(key, parse_bits)? {
            None => Ok(None),
            Some(b) => self.to_bits(key, b).map(Some),
        }
    }

    fn to_bits(&self, key: &str, b: f64) -> Result<u64> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(self.invalid(key, "must be a non-negative size"));
        }
        Ok(b.round() as u64)
    }

    fn u64_list(&mut self, key: &str) -> Result<Vec<u64>> {
        match self.required(key)? {
            Value::Array(items) => items.iter().map(|v| self.value_u64(key, v)).collect(),
            v => Err(self.invalid(key, format!("expected an array, got {v}"))),
        }
    }
}

const MODEL_KEYS: &[&str] = &[
    "name",
    "kind",
    "param_count",
    "num_layers",
    "num_heads",
    "hidden_size",
    "ffn_size",
    "max_seq_len",
];

pub fn load_model_spec(text: &str) -> Result<ModelSpec> {
    let mut f = Fields::parse("model", text, MODEL_KEYS)?;
    let kind = match f.table.remove("kind") {
        None => ModelKind::default(),
        Some(Value::String(s)) if s == "encoder" => ModelKind::Encoder,
        Some(Value::String(s)) if s == "decoder" => ModelKind::Decoder,
        Some(v) => return Err(f.invalid("kind", format!("expected encoder or decoder, got {v}"))),
    };
    let model = ModelSpec {
        name: f.string("name")?,
        kind,
        param_count: f.opt_u64("param_count")?,
        num_layers: f.u64("num_layers")?,
        num_heads: f.u64("num_heads")?,
        hidden_size: f.u64("hidden_size")?,
        ffn_size: f.u64("ffn_size")?,
        max_seq_len: f.u64("max_seq_len")?,
    };
    model.validate()?;
    Ok(model)
}

const DEVICE_KEYS: &[&str] = &[
    "name",
    "freq",
    "dsp_count",
    "mac_per_dsp_base",
    "sram_block_capacity",
    "sram_block_count",
    "sram_widths",
    "sram_total",
    "dram_total",
    "offchip_bandwidth",
    "secondary_block_count",
    "secondary_dram_total",
    "secondary_offchip_bandwidth",
    "peak_int8_tops",
    "specialized_units",
];

pub fn load_device_spec(text: &str) -> Result<DeviceSpec> {
    let mut f = Fields::parse("device", text, DEVICE_KEYS)?;
    let device = DeviceSpec {
        name: f.string("name")?,
        freq: f.quantity("freq", parse_frequency)?,
        dsp_count: f.u64("dsp_count")?,
        mac_per_dsp_base: f.quantity("mac_per_dsp_base", |s| s.parse().ok())?,
        sram_block_capacity: f.bits("sram_block_capacity")?,
        sram_block_count: f.u64("sram_block_count")?,
        sram_widths: f.u64_list("sram_widths")?,
        sram_total: f.bits("sram_total")?,
        dram_total: f.bits("dram_total")?,
        offchip_bandwidth: f.quantity("offchip_bandwidth", parse_bandwidth)?,
        secondary_block_count: f.opt_u64("secondary_block_count")?,
        secondary_dram_total: f.opt_bits("secondary_dram_total")?,
        secondary_offchip_bandwidth: f.opt_quantity("secondary_offchip_bandwidth", parse_bandwidth)?,
        peak_int8_tops: f.opt_quantity("peak_int8_tops", |s| s.parse().ok())?,
        specialized_units: f.opt_u64("specialized_units")?,
    };
    device.validate()?;
    Ok(device)
}

const QUANT_KEYS: &[&str] = &["name", "weight_bits", "activation_bits", "pack_count", "dsp_pack_factor"];

pub fn load_quant_scheme(text: &str) -> Result<QuantScheme> {
    let mut f = Fields::parse("quant", text, QUANT_KEYS)?;
    f.table.remove("name");
    let q = QuantScheme {
        weight_bits: f.u64("weight_bits")?,
        activation_bits: f.u64("activation_bits")?,
        pack_count: f.u64("pack_count")?,
        dsp_pack_factor: f.u64("dsp_pack_factor")?,
    };
    q.validate()?;
    Ok(q)
}

const PLAN_KEYS: &[&str] = &["tp_size", "pp_size", "link_bandwidth", "alpha"];

pub fn load_parallelism_plan(text: &str) -> Result<ParallelismPlan> {
    let mut f = Fields::parse("parallelism", text, PLAN_KEYS)?;
    let plan = ParallelismPlan {
        tp_size: f.u64("tp_size")?,
        pp_size: f.u64("pp_size")?,
        link_bandwidth: f.quantity("link_bandwidth", parse_bandwidth)?,
        alpha: f.quantity("alpha", |s| s.parse().ok())?,
    };
    plan.validate()?;
    Ok(plan)
}

/// Serialization back into the config document format.
pub trait ToConfig: Serialize {
    fn to_config(&self) -> String {
        toml::to_string(self).expect("catalog types always serialize to TOML")
    }
}

impl ToConfig for ModelSpec {}
impl ToConfig for DeviceSpec {}
impl ToConfig for QuantScheme {}
impl ToConfig for ParallelismPlan {}
