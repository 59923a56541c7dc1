//! Pipeline latency of a spatial accelerator, work-balanced allocation and
//! the linear search for the largest feasible compute power `M`.
//!
//! Stage latencies are kept as exact rational cycle counts and converted to
//! floating point only when an estimate is assembled, so algebraically equal
//! expressions produce identical results.

use crate::catalog::{total_compute_power, DeviceSpec, ModelSpec, Phase, PhaseWorkload, QuantScheme, WeightResidence};
use crate::constraints::{evaluate, Allocation, CheckOptions, ConstraintKind, ConstraintSet, DEFAULT_REUSE};
use crate::demand::weight_elements;
use crate::error::{Error, Result};
use crate::ops::{OpMap, OperatorId};
use crate::par::{self, Execution};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Exact cycle count.
pub type Cycles = Ratio<u128>;

pub(crate) fn cycles_to_f64(c: &Cycles) -> f64 {
    c.to_f64().expect("cycle counts are finite")
}

/// `work / macs`; an operator with no MAC units is charged as if it had one.
pub(crate) fn stage(work: u128, macs: u64) -> Cycles {
    Ratio::new(work, macs.max(1) as u128)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingTerm {
    Qkv,
    Sdp,
    Ffn,
    Mem,
    Comm,
}

impl fmt::Display for BindingTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BindingTerm::Qkv => "qkv",
            BindingTerm::Sdp => "sdp",
            BindingTerm::Ffn => "ffn",
            BindingTerm::Mem => "mem",
            BindingTerm::Comm => "comm",
        })
    }
}

/// Latency of one pass over the whole model.
///
/// `total_cycles = iterations * (head_cycles + depth * ii_cycles)` where
/// `depth` is the number of layers resident along the pipeline (`C`, or
/// `p2 * C` across a pipeline-parallel group).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub phase: Phase,
    pub head_cycles: f64,
    pub ii_cycles: f64,
    pub iterations: u64,
    pub depth: u64,
    pub total_cycles: f64,
    pub seconds: f64,
    pub freq: f64,
    pub binding_term: BindingTerm,
}

impl LatencyEstimate {
    pub(crate) fn assemble(
        phase: Phase,
        head: Cycles,
        terms: &[(BindingTerm, Cycles)],
        iterations: u64,
        depth: u64,
        freq: f64,
    ) -> Self {
        let (binding_term, ii) = terms
            .iter()
            .fold(None::<(BindingTerm, Cycles)>, |best, &(t, c)| match best {
                Some((_, b)) if b >= c => best,
                _ => Some((t, c)),
            })
            .expect("at least one stage term");
        let total = (head + ii * depth as u128) * iterations as u128;
        let total_cycles = cycles_to_f64(&total);
        LatencyEstimate {
            phase,
            head_cycles: cycles_to_f64(&head),
            ii_cycles: cycles_to_f64(&ii),
            iterations,
            depth,
            total_cycles,
            seconds: total_cycles / freq,
            freq,
            binding_term,
        }
    }

    /// Steady-state passes per second if a new pass could enter every
    /// `depth * ii` cycles. A derived metric, not part of the latency model.
    pub fn throughput(&self) -> f64 {
        self.freq / (self.depth as f64 * self.ii_cycles)
    }
}

/// Work-balanced allocation for global compute power `m` at sequence length
/// `l`: the projections get `m`, attention `ceil(l*m/d)` and the FFN
/// `ceil(d_ffn*m/d)`.
pub fn balanced_allocation(m: u64, model: &ModelSpec, l: u64) -> Allocation {
    let d = model.hidden_size;
    let sdp = (l * m).div_ceil(d);
    let ffn = (model.ffn_size * m).div_ceil(d);
    Allocation::new(OpMap::from_fn(|op| match op {
        OperatorId::Q | OperatorId::K | OperatorId::V | OperatorId::P => m,
        OperatorId::A1 | OperatorId::A2 => sdp,
        OperatorId::F1 | OperatorId::F2 => ffn,
    }))
}

/// Cycles needed to stream one layer's weights from off-chip memory at the
/// full device bandwidth; zero when the weights are resident on chip.
pub fn t_mem_cycles(model: &ModelSpec, quant: &QuantScheme, device: &DeviceSpec, mode: WeightResidence) -> u64 {
    t_mem_cycles_sharded(model, quant, device, mode, 1)
}

/// As [`t_mem_cycles`] for one device of a tensor-parallel group, which
/// streams only its `1/tp_size` share of the weights.
pub fn t_mem_cycles_sharded(
    model: &ModelSpec,
    quant: &QuantScheme,
    device: &DeviceSpec,
    mode: WeightResidence,
    tp_size: u64,
) -> u64 {
    match mode {
        WeightResidence::OnChip => 0,
        WeightResidence::OffChip => {
            let bits = (weight_elements(model).weighted_total() * quant.weight_bits).div_ceil(tp_size.max(1));
            (bits as f64 * device.freq / device.offchip_bandwidth).ceil() as u64
        }
    }
}

fn iterations(layers: u64, per_pass: u64) -> u64 {
    layers.div_ceil(per_pass.max(1))
}

pub fn prefill_latency(
    model: &ModelSpec,
    alloc: &Allocation,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    t_mem: u64,
) -> LatencyEstimate {
    let l = workload.seq_len as u128;
    let d = model.hidden_size as u128;
    let ffn = model.ffn_size as u128;
    let head = stage(l * d * d, alloc.m[OperatorId::K]);
    let terms = [
        (BindingTerm::Qkv, head),
        (BindingTerm::Sdp, stage(l * l * d, alloc.m[OperatorId::A1])),
        (BindingTerm::Ffn, stage(l * d * ffn, alloc.m[OperatorId::F1])),
        (BindingTerm::Mem, Ratio::from_integer(t_mem as u128)),
    ];
    let c = workload.layers_on_chip;
    LatencyEstimate::assemble(Phase::Prefill, head, &terms, iterations(model.num_layers, c), c, device.freq)
}

/// Decode latency for one generated token. The attention stage is sized for
/// the model's full `max_seq_len` context.
pub fn decode_latency(
    model: &ModelSpec,
    alloc: &Allocation,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    t_mem: u64,
) -> LatencyEstimate {
    let d = model.hidden_size as u128;
    let ffn = model.ffn_size as u128;
    let ctx = model.max_seq_len as u128 + 1;
    let head = stage(d * d, alloc.m[OperatorId::K]);
    let terms = [
        (BindingTerm::Qkv, head),
        (BindingTerm::Sdp, stage(ctx * d, alloc.m[OperatorId::A1])),
        (BindingTerm::Ffn, stage(d * ffn, alloc.m[OperatorId::F1])),
        (BindingTerm::Mem, Ratio::from_integer(t_mem as u128)),
    ];
    let c = workload.layers_on_chip;
    LatencyEstimate::assemble(Phase::Decode, head, &terms, iterations(model.num_layers, c), c, device.freq)
}

pub fn latency(
    model: &ModelSpec,
    alloc: &Allocation,
    workload: &PhaseWorkload,
    device: &DeviceSpec,
    t_mem: u64,
) -> LatencyEstimate {
    match workload.phase {
        Phase::Prefill => prefill_latency(model, alloc, workload, device, t_mem),
        Phase::Decode => decode_latency(model, alloc, workload, device, t_mem),
    }
}

/// Closed-form prefill latency in seconds under perfect work balancing:
/// `N * (1 + 1/C) * l * d^2 / (M * freq)`.
pub fn simplified_prefill(model: &ModelSpec, m: u64, layers_on_chip: u64, freq: f64, l: u64) -> f64 {
    let c = layers_on_chip as u128;
    let d = model.hidden_size as u128;
    let cycles = Ratio::new(
        model.num_layers as u128 * (c + 1) * l as u128 * d * d,
        c * m.max(1) as u128,
    );
    cycles_to_f64(&cycles) / freq
}

/// Time of a dense `rows x inner x cols` matmul on an `array_rows x
/// array_cols` systolic array that retires one MAC per PE per cycle.
pub fn gemm_latency(rows: u64, inner: u64, cols: u64, array_rows: u64, array_cols: u64, freq: f64) -> f64 {
    cycles_to_f64(&gemm_cycles(rows, inner, cols, array_rows, array_cols)) / freq
}

pub fn gemm_cycles(rows: u64, inner: u64, cols: u64, array_rows: u64, array_cols: u64) -> Cycles {
    Ratio::new(
        rows as u128 * inner as u128 * cols as u128,
        (array_rows as u128 * array_cols as u128).max(1),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub constraints: ConstraintSet,
    pub packed: bool,
    pub reuse: u64,
    pub tp_size: u64,
    /// Largest `M` to try. Defaults to `floor(M_tot)` when the compute
    /// constraint is active.
    pub upper: Option<u64>,
    /// Sequence length the allocation is balanced for; defaults to the
    /// workload's `seq_len`.
    pub balance_len: Option<u64>,
    pub execution: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            constraints: ConstraintSet::ALL,
            packed: true,
            reuse: DEFAULT_REUSE,
            tp_size: 1,
            upper: None,
            balance_len: None,
            execution: Execution::default(),
        }
    }
}

/// Cap on the scan when no compute bound limits it.
const UNBOUNDED_SCAN_LIMIT: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub max_m: u64,
    /// Constraint that fails at `max_m + 1`; `None` when the scan hit its
    /// upper limit.
    pub binding_next: Option<ConstraintKind>,
    /// Smallest infeasible `M` below `max_m`, if feasibility has a gap.
    pub first_infeasible: Option<u64>,
    pub allocation: Allocation,
}

/// Balanced allocation the search evaluates at global compute power `m`.
pub fn search_allocation(m: u64, model: &ModelSpec, workload: &PhaseWorkload, opts: &SearchOptions) -> Allocation {
    let l = opts.balance_len.unwrap_or(workload.seq_len).max(1);
    balanced_allocation(m, model, l).with_reuse(opts.reuse)
}

/// Evaluates the constraint set at global compute power `m`. Returns the first
/// violated constraint, or `None` when `m` is feasible.
pub fn violation_at(
    m: u64,
    model: &ModelSpec,
    device: &DeviceSpec,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    opts: &SearchOptions,
) -> Result<Option<ConstraintKind>> {
    let alloc = search_allocation(m, model, workload, opts);
    let report = evaluate(
        model,
        &alloc,
        quant,
        workload,
        device,
        CheckOptions {
            packed: opts.packed,
            tp_size: opts.tp_size,
        },
    )?;
    Ok(report.first_violation(opts.constraints))
}

pub fn search_upper_bound(device: &DeviceSpec, quant: &QuantScheme, opts: &SearchOptions) -> u64 {
    opts.upper.unwrap_or_else(|| {
        if opts.constraints.compute {
            (total_compute_power(device, quant).floor() as u64).max(1)
        } else {
            UNBOUNDED_SCAN_LIMIT
        }
    })
}

/// Largest feasible `M` in `1..=upper`.
///
/// Port counts are not monotone in `M`, so the whole range is scanned rather
/// than stopping at the first infeasible point; `first_infeasible` records
/// any gap below the result.
pub fn search_max_m(
    model: &ModelSpec,
    device: &DeviceSpec,
    quant: &QuantScheme,
    workload: &PhaseWorkload,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let check = |m: u64| violation_at(m, model, device, quant, workload, opts);
    // Surface input errors (e.g. an impossible port width) before scanning.
    let at_one = check(1)?;
    let upper = search_upper_bound(device, quant, opts);
    let feasible = |m: u64| matches!(check(m), Ok(None));
    let Some(max_m) = par::find_last(opts.execution, 1, upper, feasible) else {
        let kind = at_one.map_or_else(|| "a".to_string(), |k| k.to_string());
        return Err(Error::Infeasible(format!(
            "{} constraint violated at every M up to {} for {} on {}",
            kind, upper, model.name, device.name
        )));
    };
    let first_infeasible = par::find_first(opts.execution, 1, max_m, |m| !feasible(m));
    let binding_next = if max_m < upper { check(max_m + 1)? } else { None };
    Ok(SearchResult {
        max_m,
        binding_next,
        first_infeasible,
        allocation: search_allocation(max_m, model, workload, opts),
    })
}
