//! MAC counts and buffer sizes of one Transformer layer.

use crate::catalog::{ModelSpec, Phase, PhaseWorkload, QuantScheme};
use crate::constraints::Allocation;
use crate::ops::{OpMap, OperatorId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacDemand {
    pub per_op: OpMap<u64>,
    pub phase: Phase,
    pub seq_len: u64,
}

impl MacDemand {
    pub fn total(&self) -> u64 {
        self.per_op.total()
    }
}

/// MACs per operator for one layer.
///
/// For decode, `l` is the number of tokens already in context; the new token
/// is added here, so attention covers `l + 1` positions.
pub fn op_macs(model: &ModelSpec, phase: Phase, l: u64) -> MacDemand {
    let d = model.hidden_size;
    let ffn = model.ffn_size;
    let per_op = OpMap::from_fn(|op| {
        use OperatorId::*;
        match (phase, op) {
            (Phase::Prefill, Q | K | V | P) => l * d * d,
            (Phase::Prefill, A1 | A2) => l * l * d,
            (Phase::Prefill, F1 | F2) => l * d * ffn,
            (Phase::Decode, Q | K | V | P) => d * d,
            (Phase::Decode, A1 | A2) => (l + 1) * d,
            (Phase::Decode, F1 | F2) => d * ffn,
        }
    });
    MacDemand {
        per_op,
        phase,
        seq_len: l,
    }
}

/// Weight matrix size of each operator in elements. The two attention
/// matmuls have no weights.
pub fn weight_elements(model: &ModelSpec) -> OpMap<u64> {
    let d = model.hidden_size;
    OpMap::from_fn(|op| match op {
        OperatorId::Q | OperatorId::K | OperatorId::V | OperatorId::P => d * d,
        OperatorId::F1 | OperatorId::F2 => d * model.ffn_size,
        OperatorId::A1 | OperatorId::A2 => 0,
    })
}

/// On-chip buffer requirements of one layer, in bits unless noted.
///
/// `s_tile` and `s_kv` are single copies as defined by the model; the
/// capacity check applies the double buffering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferPlan {
    /// Full weight footprint.
    pub s_param: u64,
    /// One tile of `M_i` weights per operator.
    pub s_tile: u64,
    /// K and V caches for `l_max` tokens, double buffered.
    pub s_kv: u64,
    /// Inter-operator FIFOs plus the residual bypass buffer.
    pub s_fifo: u64,
    /// `s_i` in elements.
    pub per_op_weights: OpMap<u64>,
    /// Weight elements held on chip per operator when streaming tiles.
    pub per_op_tile: OpMap<u64>,
    /// Elements of one K (or V) buffer: `l_max * d`.
    pub kv_elements: u64,
}

impl BufferPlan {
    /// The double-buffered tile requirement.
    pub fn tile_buffer_bits(&self) -> u64 {
        2 * self.s_tile
    }
}

pub fn buffer_plan(
    model: &ModelSpec,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    alloc: &Allocation,
) -> BufferPlan {
    let d = model.hidden_size;
    let b_w = quant.weight_bits;
    let b_a = quant.activation_bits;
    let per_op_weights = weight_elements(model);
    let per_op_tile = OpMap::from_fn(|op| if op.has_weights() { alloc.m[op] } else { 0 });
    BufferPlan {
        s_param: per_op_weights.weighted_total() * b_w,
        s_tile: per_op_tile.weighted_total() * b_w,
        s_kv: 4 * model.max_seq_len * d * b_a,
        s_fifo: 16 * workload.fifo_depth * b_a + workload.tokens_in_flight() * d * b_a,
        per_op_weights,
        per_op_tile,
        kv_elements: model.max_seq_len * d,
    }
}
