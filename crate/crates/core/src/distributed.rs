//! Tensor- and pipeline-parallel extension across several devices.

use crate::catalog::{DeviceSpec, ModelSpec, Phase, PhaseWorkload, QuantScheme};
use crate::constraints::Allocation;
use crate::demand::BufferPlan;
use crate::error::{Error, Result};
use crate::estimate::{stage, BindingTerm, Cycles, LatencyEstimate};
use crate::ops::{OpMap, OperatorId};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelismPlan {
    /// Devices sharing each operator (`p1`).
    pub tp_size: u64,
    /// Devices the layer stack is split across (`p2`).
    pub pp_size: u64,
    /// Raw link bandwidth between two devices, bits/second.
    pub link_bandwidth: f64,
    /// Achieved fraction of the link bandwidth, in (0, 1].
    pub alpha: f64,
}

impl ParallelismPlan {
    pub fn single() -> Self {
        ParallelismPlan {
            tp_size: 1,
            pp_size: 1,
            link_bandwidth: f64::INFINITY,
            alpha: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const E: &str = "parallelism";
        if self.tp_size == 0 {
            return Err(Error::invalid(E, "tp_size", "must be at least 1"));
        }
        if self.pp_size == 0 {
            return Err(Error::invalid(E, "pp_size", "must be at least 1"));
        }
        if !(self.link_bandwidth > 0.0) {
            return Err(Error::invalid(E, "link_bandwidth", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(E, "alpha", "must be in (0, 1]"));
        }
        Ok(())
    }

    /// Checks that every pipeline stage receives at least `layers_on_chip`
    /// whole layers.
    pub fn validate_for(&self, model: &ModelSpec, layers_on_chip: u64) -> Result<()> {
        self.validate()?;
        if self.pp_size * layers_on_chip > model.num_layers {
            return Err(Error::invalid(
                "parallelism",
                "pp_size",
                format!(
                    "{} stages x {} layers exceeds the model's {} layers",
                    self.pp_size, layers_on_chip, model.num_layers
                ),
            ));
        }
        Ok(())
    }

    pub fn is_single_device(&self) -> bool {
        self.tp_size == 1 && self.pp_size == 1
    }

    pub fn effective_bandwidth(&self) -> f64 {
        self.alpha * self.link_bandwidth
    }
}

/// Seconds for one all-reduce of an `l x d` activation tensor.
pub fn comm_time(l: u64, d: u64, activation_bits: u64, plan: &ParallelismPlan) -> f64 {
    (l * d * activation_bits) as f64 / plan.effective_bandwidth()
}

/// All-reduce time expressed in whole cycles of `freq`.
pub fn comm_cycles(seconds: f64, freq: f64) -> u64 {
    (seconds * freq).ceil() as u64
}

/// Per-device communication term for a phase: zero on a single device.
pub fn phase_comm_cycles(
    model: &ModelSpec,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    plan: &ParallelismPlan,
) -> u64 {
    if plan.is_single_device() {
        return 0;
    }
    let tokens = workload.tokens_in_flight();
    comm_cycles(
        comm_time(tokens, model.hidden_size, quant.activation_bits, plan),
        device.freq,
    )
}

/// Prefill latency across a `p1 x p2` device grid. The all-reduce time is
/// derived from the plan; see [`multi_prefill_latency_with`] to supply it.
pub fn multi_prefill_latency(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    plan: &ParallelismPlan,
    t_mem: u64,
) -> LatencyEstimate {
    let t_comm = phase_comm_cycles(model, quant, workload, device, plan);
    multi_prefill_latency_with(model, alloc, workload, device, plan, t_mem, t_comm)
}

/// Prefill latency across a `p1 x p2` device grid with an explicit
/// communication term in cycles. Communication overlaps compute, so it only
/// matters when it becomes the slowest stage.
pub fn multi_prefill_latency_with(
    model: &ModelSpec,
    alloc: &Allocation,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    plan: &ParallelismPlan,
    t_mem: u64,
    t_comm: u64,
) -> LatencyEstimate {
    let l = workload.seq_len as u128;
    let d = model.hidden_size as u128;
    let ffn = model.ffn_size as u128;
    let p1 = plan.tp_size;
    let sharded = |work: u128, op: OperatorId| -> Cycles { stage(work, alloc.m[op]) / p1.max(1) as u128 };
    let head = sharded(l * d * d, OperatorId::K);
    let terms = [
        (BindingTerm::Qkv, head),
        (BindingTerm::Sdp, sharded(l * l * d, OperatorId::A1)),
        (BindingTerm::Ffn, sharded(l * d * ffn, OperatorId::F1)),
        (BindingTerm::Mem, Ratio::from_integer(t_mem as u128)),
        (BindingTerm::Comm, Ratio::from_integer(t_comm as u128)),
    ];
    let depth = plan.pp_size * workload.layers_on_chip;
    LatencyEstimate::assemble(
        Phase::Prefill,
        head,
        &terms,
        model.num_layers.div_ceil(depth.max(1)),
        depth,
        device.freq,
    )
}

/// Decode counterpart of [`multi_prefill_latency`]: one token per all-reduce.
pub fn multi_decode_latency(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    plan: &ParallelismPlan,
    t_mem: u64,
) -> LatencyEstimate {
    let t_comm = phase_comm_cycles(model, quant, workload, device, plan);
    let d = model.hidden_size as u128;
    let ffn = model.ffn_size as u128;
    let ctx = model.max_seq_len as u128 + 1;
    let p1 = plan.tp_size;
    let sharded = |work: u128, op: OperatorId| -> Cycles { stage(work, alloc.m[op]) / p1.max(1) as u128 };
    let head = sharded(d * d, OperatorId::K);
    let terms = [
        (BindingTerm::Qkv, head),
        (BindingTerm::Sdp, sharded(ctx * d, OperatorId::A1)),
        (BindingTerm::Ffn, sharded(d * ffn, OperatorId::F1)),
        (BindingTerm::Mem, Ratio::from_integer(t_mem as u128)),
        (BindingTerm::Comm, Ratio::from_integer(t_comm as u128)),
    ];
    let depth = plan.pp_size * workload.layers_on_chip;
    LatencyEstimate::assemble(
        Phase::Decode,
        head,
        &terms,
        model.num_layers.div_ceil(depth.max(1)),
        depth,
        device.freq,
    )
}

pub fn multi_latency(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    plan: &ParallelismPlan,
    t_mem: u64,
) -> LatencyEstimate {
    match workload.phase {
        Phase::Prefill => multi_prefill_latency(model, alloc, quant, workload, device, plan, t_mem),
        Phase::Decode => multi_decode_latency(model, alloc, quant, workload, device, plan, t_mem),
    }
}

/// Per-device share of the memory demands in a tensor-parallel group of
/// `tp_size`. FIFOs are not split.
pub fn scale_memory_constraints(plan: &BufferPlan, tp_size: u64) -> BufferPlan {
    let p = tp_size.max(1);
    let split = |x: u64| x.div_ceil(p);
    let split_map = |m: &OpMap<u64>| m.map(|_, v| split(v));
    BufferPlan {
        s_param: split(plan.s_param),
        s_tile: split(plan.s_tile),
        s_kv: split(plan.s_kv),
        s_fifo: plan.s_fifo,
        per_op_weights: split_map(&plan.per_op_weights),
        per_op_tile: split_map(&plan.per_op_tile),
        kv_elements: split(plan.kv_elements),
    }
}
