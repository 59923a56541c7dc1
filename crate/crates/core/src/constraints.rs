//! Resource feasibility: compute, memory capacity, memory ports and off-chip
//! bandwidth. Every feasibility test is a strict `required < available`; a
//! requirement that lands exactly on the limit is infeasible and flagged as a
//! boundary case.

use crate::catalog::{total_compute_power, DeviceSpec, ModelSpec, PhaseWorkload, QuantScheme, WeightResidence};
use crate::demand::{buffer_plan, BufferPlan};
use crate::error::{Error, Result};
use crate::ops::{OpMap, OperatorId};
use serde::{Deserialize, Serialize};
use std::fmt;

/// MAC units that share one loaded weight when nothing else is specified
/// (one column of an 8-row systolic array).
pub const DEFAULT_REUSE: u64 = 8;

/// Compute power `M_i` and data reuse factor `r_i` per operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub m: OpMap<u64>,
    pub reuse: OpMap<u64>,
}

impl Allocation {
    pub fn new(m: OpMap<u64>) -> Self {
        Allocation {
            m,
            reuse: OpMap::splat(DEFAULT_REUSE),
        }
    }

    pub fn uniform(m: u64) -> Self {
        Self::new(OpMap::splat(m))
    }

    pub fn empty() -> Self {
        Self::uniform(0)
    }

    pub fn with_reuse(mut self, r: u64) -> Self {
        self.reuse = OpMap::splat(r.max(1));
        self
    }

    /// Independent memory partitions feeding operator `op`: `ceil(M_i / r_i)`.
    pub fn partitions(&self, op: OperatorId) -> u64 {
        self.m[op].div_ceil(self.reuse[op].max(1)).max(1)
    }

    pub fn total_macs(&self) -> u64 {
        self.m.total()
    }
}

/// Smallest configurable port width that holds `bits`.
pub fn effective_width(bits: u64, device: &DeviceSpec) -> Result<u64> {
    device
        .sram_widths
        .iter()
        .copied()
        .find(|&w| w >= bits)
        .ok_or(Error::WidthOverflow {
            bits,
            max: device.max_width(),
        })
}

/// Blocks needed to store `elements` values of `elem_bits` each, split across
/// `partitions` ports with `pack` values per memory word.
fn partitioned_blocks(
    elements: u64,
    elem_bits: u64,
    pack: u64,
    partitions: u64,
    device: &DeviceSpec,
) -> Result<u64> {
    let width = effective_width(pack * elem_bits, device)?;
    if elements == 0 {
        return Ok(0);
    }
    // With fewer partitions than the pack factor, one group still holds the
    // whole buffer at `pack` elements per word.
    let share = partitions.max(pack) as u128;
    let per_partition = (elements as u128 * width as u128).div_ceil(share * device.sram_block_capacity as u128);
    Ok(per_partition as u64 * partitions.div_ceil(pack))
}

/// `R_i` without data packing.
pub fn blocks_unpacked(
    elements: u64,
    macs: u64,
    reuse: u64,
    weight_bits: u64,
    device: &DeviceSpec,
) -> Result<u64> {
    let parts = macs.div_ceil(reuse.max(1)).max(1);
    partitioned_blocks(elements, weight_bits, 1, parts, device)
}

/// `R_i` with `quant.pack_count` weights packed per memory word.
pub fn blocks_packed(
    elements: u64,
    macs: u64,
    reuse: u64,
    quant: &QuantScheme,
    device: &DeviceSpec,
) -> Result<u64> {
    let parts = macs.div_ceil(reuse.max(1)).max(1);
    partitioned_blocks(elements, quant.weight_bits, quant.pack_count, parts, device)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Compute,
    Capacity,
    Ports,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Compute => "compute",
            ConstraintKind::Capacity => "capacity",
            ConstraintKind::Ports => "ports",
        })
    }
}

/// Which constraint families take part in a feasibility decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub compute: bool,
    pub capacity: bool,
    pub ports: bool,
}

impl ConstraintSet {
    pub const ALL: ConstraintSet = ConstraintSet {
        compute: true,
        capacity: true,
        ports: true,
    };
    pub const COMPUTE_ONLY: ConstraintSet = ConstraintSet {
        compute: true,
        capacity: false,
        ports: false,
    };

    pub fn contains(&self, kind: ConstraintKind) -> bool {
        match kind {
            ConstraintKind::Compute => self.compute,
            ConstraintKind::Capacity => self.capacity,
            ConstraintKind::Ports => self.ports,
        }
    }
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeRow {
    /// `sum(M_i) * C`, MACs/cycle.
    pub required: u64,
    /// `M_tot`, MACs/cycle.
    pub available: f64,
    pub ok: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub sram_required: u64,
    pub sram_available: u64,
    pub dram_required: u64,
    pub dram_available: u64,
    pub ok: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRow {
    pub blocks_required: u64,
    pub blocks_available: u64,
    pub packed: bool,
    pub ok: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    /// `B_i` in bits/second for each weighted operator of one layer.
    pub per_op: OpMap<f64>,
    /// `sum(B_i) * C`, bits/second.
    pub required: f64,
    pub available: f64,
    pub bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub compute: ComputeRow,
    pub capacity: CapacityRow,
    pub ports: PortRow,
    pub bandwidth: BandwidthRow,
}

impl ConstraintReport {
    pub fn ok(&self, kind: ConstraintKind) -> bool {
        match kind {
            ConstraintKind::Compute => self.compute.ok,
            ConstraintKind::Capacity => self.capacity.ok,
            ConstraintKind::Ports => self.ports.ok,
        }
    }

    /// First violated constraint in the set, checked in compute, capacity,
    /// ports order.
    pub fn first_violation(&self, set: ConstraintSet) -> Option<ConstraintKind> {
        [ConstraintKind::Compute, ConstraintKind::Capacity, ConstraintKind::Ports]
            .into_iter()
            .find(|&k| set.contains(k) && !self.ok(k))
    }

    pub fn satisfies(&self, set: ConstraintSet) -> bool {
        self.first_violation(set).is_none()
    }

    pub fn feasible(&self) -> bool {
        self.satisfies(ConstraintSet::ALL)
    }
}

fn strict_lt(required: u64, available: u64) -> (bool, bool) {
    (required < available, required == available)
}

pub fn check_compute(
    alloc: &Allocation,
    layers_on_chip: u64,
    device: &DeviceSpec,
    quant: &QuantScheme,
) -> ComputeRow {
    let required = alloc.total_macs() * layers_on_chip;
    let available = total_compute_power(device, quant);
    ComputeRow {
        required,
        available,
        ok: (required as f64) < available,
        boundary: required as f64 == available,
    }
}

/// Capacity check from an already computed (possibly per-device scaled)
/// buffer plan.
pub fn capacity_from_plan(plan: &BufferPlan, workload: &PhaseWorkload, device: &DeviceSpec) -> CapacityRow {
    let c = workload.layers_on_chip;
    let per_layer_sram = match workload.weights_resident {
        WeightResidence::OffChip => plan.tile_buffer_bits() + plan.s_kv + plan.s_fifo,
        WeightResidence::OnChip => plan.s_param + plan.s_kv + plan.s_fifo,
    };
    let sram_required = per_layer_sram * c;
    let dram_required = plan.s_param * c;
    let (sram_ok, sram_edge) = strict_lt(sram_required, device.sram_total);
    let (dram_ok, dram_edge) = strict_lt(dram_required, device.dram_total);
    CapacityRow {
        sram_required,
        sram_available: device.sram_total,
        dram_required,
        dram_available: device.dram_total,
        ok: sram_ok && dram_ok,
        boundary: sram_edge || dram_edge,
    }
}

pub fn check_capacity(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
) -> CapacityRow {
    capacity_from_plan(&buffer_plan(model, quant, workload, alloc), workload, device)
}

/// Port (block count) check from a buffer plan.
///
/// Streamed weight tiles are double buffered, so each tiled operator counts
/// its blocks twice. The K and V buffers are counted twice as well.
pub fn ports_from_plan(
    plan: &BufferPlan,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    packed: bool,
) -> Result<PortRow> {
    let c = workload.layers_on_chip;
    let (weight_pack, act_pack) = if packed {
        (quant.pack_count, quant.activation_pack_count())
    } else {
        (1, 1)
    };
    let mut weight_blocks = 0;
    for op in OperatorId::WEIGHTED {
        let parts = alloc.partitions(op);
        let r = match workload.weights_resident {
            WeightResidence::OnChip => {
                partitioned_blocks(plan.per_op_weights[op], quant.weight_bits, weight_pack, parts, device)?
            }
            WeightResidence::OffChip => {
                2 * partitioned_blocks(plan.per_op_tile[op], quant.weight_bits, weight_pack, parts, device)?
            }
        };
        weight_blocks += r;
    }
    let mut kv_blocks = 0;
    for op in [OperatorId::A1, OperatorId::A2] {
        kv_blocks += partitioned_blocks(
            plan.kv_elements,
            quant.activation_bits,
            act_pack,
            alloc.partitions(op),
            device,
        )?;
    }
    let blocks_required = c * weight_blocks + 2 * c * kv_blocks;
    let (ok, boundary) = strict_lt(blocks_required, device.sram_block_count);
    Ok(PortRow {
        blocks_required,
        blocks_available: device.sram_block_count,
        packed,
        ok,
        boundary,
    })
}

pub fn check_ports(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    packed: bool,
) -> Result<PortRow> {
    let plan = buffer_plan(model, quant, workload, alloc);
    ports_from_plan(&plan, alloc, quant, workload, device, packed)
}

/// Off-chip bandwidth needed to feed the weighted operators every cycle.
pub fn required_bandwidth(
    alloc: &Allocation,
    quant: &QuantScheme,
    device: &DeviceSpec,
    layers_on_chip: u64,
) -> BandwidthRow {
    let per_op = OpMap::from_fn(|op| {
        if op.has_weights() && alloc.m[op] > 0 {
            quant.weight_bits as f64 * alloc.partitions(op) as f64 * device.freq
        } else {
            0.0
        }
    });
    let required = layers_on_chip as f64 * OperatorId::WEIGHTED.iter().map(|&op| per_op[op]).sum::<f64>();
    BandwidthRow {
        per_op,
        required,
        available: device.offchip_bandwidth,
        bound: required > device.offchip_bandwidth,
    }
}

/// Options that change how the constraint rows are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    /// Use packed port accounting.
    pub packed: bool,
    /// Tensor-parallel group size; memory demands are split across it.
    pub tp_size: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            packed: true,
            tp_size: 1,
        }
    }
}

/// Runs all four constraint families.
pub fn evaluate(
    model: &ModelSpec,
    alloc: &Allocation,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    opts: CheckOptions,
) -> Result<ConstraintReport> {
    let plan = buffer_plan(model, quant, workload, alloc);
    let plan = crate::distributed::scale_memory_constraints(&plan, opts.tp_size);
    Ok(ConstraintReport {
        compute: check_compute(alloc, workload.layers_on_chip, device, quant),
        capacity: capacity_from_plan(&plan, workload, device),
        ports: ports_from_plan(&plan, alloc, quant, workload, device, opts.packed)?,
        bandwidth: required_bandwidth(alloc, quant, device, workload.layers_on_chip),
    })
}
