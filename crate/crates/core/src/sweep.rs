//! Single-point evaluation, parameter sweeps and device comparisons that
//! back the command-line front end.

use crate::catalog::{DeviceSpec, ModelSpec, Phase, PhaseWorkload, QuantScheme, MAX_PORT_BITS};
use crate::constraints::{evaluate, Allocation, CheckOptions, ConstraintReport};
use crate::distributed::{multi_latency, ParallelismPlan};
use crate::error::{Error, Result};
use crate::estimate::{search_allocation, search_max_m, t_mem_cycles_sharded, LatencyEstimate, SearchOptions};
use crate::par::{self, Execution};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

/// Everything needed to produce one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationContext {
    pub model: ModelSpec,
    pub device: DeviceSpec,
    pub quant: QuantScheme,
    pub workload: PhaseWorkload,
    pub plan: ParallelismPlan,
    /// Global compute power; `None` evaluates at the searched maximum.
    pub m: Option<u64>,
    pub search: SearchOptions,
    /// Balance a decode allocation for its attention span (`l_max + 1` keys)
    /// instead of the prompt length.
    pub rebalance_decode: bool,
}

impl EstimationContext {
    pub fn new(model: ModelSpec, device: DeviceSpec, quant: QuantScheme, workload: PhaseWorkload) -> Self {
        EstimationContext {
            model,
            device,
            quant,
            workload,
            plan: ParallelismPlan::single(),
            m: None,
            search: SearchOptions::default(),
            rebalance_decode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.device.validate()?;
        self.quant.validate()?;
        self.workload.validate(&self.model)?;
        self.plan.validate_for(&self.model, self.workload.layers_on_chip)?;
        if self.m == Some(0) {
            return Err(Error::invalid("estimate", "m", "must be at least 1"));
        }
        Ok(())
    }

    /// Search options with the plan's tensor-parallel size and the balance
    /// length this context implies.
    pub fn search_options(&self) -> SearchOptions {
        let balance_len = match (self.workload.phase, self.rebalance_decode) {
            (Phase::Decode, true) => Some(self.model.max_seq_len + 1),
            _ => self.search.balance_len,
        };
        SearchOptions {
            tp_size: self.plan.tp_size,
            balance_len,
            ..self.search
        }
    }

    pub fn max_m(&self) -> Result<u64> {
        let opts = self.search_options();
        Ok(search_max_m(&self.model, &self.device, &self.quant, &self.workload, &opts)?.max_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub model: String,
    pub device: String,
    pub m: u64,
    pub allocation: Allocation,
    pub t_mem_cycles: u64,
    pub estimate: LatencyEstimate,
    pub constraints: ConstraintReport,
    pub feasible: bool,
}

/// Evaluates one design point at `ctx.m`, or at the searched maximum `M`.
pub fn estimate_point(ctx: &EstimationContext) -> Result<PointResult> {
    ctx.validate()?;
    let m = match ctx.m {
        Some(m) => m,
        None => ctx.max_m()?,
    };
    let alloc = search_allocation(m, &ctx.model, &ctx.workload, &ctx.search_options());
    let constraints = evaluate(
        &ctx.model,
        &alloc,
        &ctx.quant,
        &ctx.workload,
        &ctx.device,
        CheckOptions {
            packed: ctx.search.packed,
            tp_size: ctx.plan.tp_size,
        },
    )?;
    let t_mem = t_mem_cycles_sharded(
        &ctx.model,
        &ctx.quant,
        &ctx.device,
        ctx.workload.weights_resident,
        ctx.plan.tp_size,
    );
    let estimate = multi_latency(&ctx.model, &alloc, &ctx.quant, &ctx.workload, &ctx.device, &ctx.plan, t_mem);
    Ok(PointResult {
        model: ctx.model.name.clone(),
        device: ctx.device.name.clone(),
        m,
        allocation: alloc,
        t_mem_cycles: t_mem,
        estimate,
        feasible: constraints.satisfies(ctx.search.constraints),
        constraints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SeqLen,
    M,
    WeightBits,
    PackCount,
    TpSize,
    PpSize,
    LayersOnChip,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::SeqLen,
        SweepAxis::M,
        SweepAxis::WeightBits,
        SweepAxis::PackCount,
        SweepAxis::TpSize,
        SweepAxis::PpSize,
        SweepAxis::LayersOnChip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SeqLen => "seq_len",
            SweepAxis::M => "m",
            SweepAxis::WeightBits => "weight_bits",
            SweepAxis::PackCount => "pack_count",
            SweepAxis::TpSize => "tp_size",
            SweepAxis::PpSize => "pp_size",
            SweepAxis::LayersOnChip => "layers_on_chip",
        }
    }

    /// Context with this axis set to `value`.
    pub fn apply(self, ctx: &EstimationContext, value: u64) -> EstimationContext {
        let mut c = ctx.clone();
        match self {
            SweepAxis::SeqLen => c.workload.seq_len = value,
            SweepAxis::M => c.m = Some(value),
            SweepAxis::WeightBits => {
                c.quant.weight_bits = value;
                if let Some(fit) = MAX_PORT_BITS.checked_div(value) {
                    c.quant.pack_count = c.quant.pack_count.min(fit).max(1);
                }
            }
            SweepAxis::PackCount => c.quant.pack_count = value,
            SweepAxis::TpSize => c.plan.tp_size = value,
            SweepAxis::PpSize => c.plan.pp_size = value,
            SweepAxis::LayersOnChip => c.workload.layers_on_chip = value,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::invalid("sweep", "axis", format!("unknown axis `{s}`")))
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<u64>,
    pub fixed: EstimationContext,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("sweep", "values", "must not be empty"));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sweep", "values", "must be strictly ascending"));
        }
        Ok(())
    }
}

/// One CSV row. Column order is part of the output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: u64,
    pub latency_s: Option<f64>,
    pub total_cycles: Option<f64>,
    pub ii_cycles: Option<f64>,
    pub binding_term: Option<String>,
    pub feasible: bool,
    pub max_m: Option<u64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "axis_value,latency_s,total_cycles,ii_cycles,binding_term,feasible,max_m,error";

fn sweep_point(spec: &SweepSpec, value: u64) -> SweepRow {
    let ctx = spec.axis.apply(&spec.fixed, value);
    let failed = |e: Error, max_m| SweepRow {
        axis_value: value,
        latency_s: None,
        total_cycles: None,
        ii_cycles: None,
        binding_term: None,
        feasible: false,
        max_m,
        error: Some(e.to_string()),
    };
    if let Err(e) = ctx.validate() {
        return failed(e, None);
    }
    let max_m = if spec.axis == SweepAxis::M {
        None
    } else {
        match ctx.max_m() {
            Ok(m) => Some(m),
            Err(e) if ctx.m.is_none() => return failed(e, None),
            Err(_) => None,
        }
    };
    let ctx = EstimationContext {
        m: ctx.m.or(max_m),
        ..ctx
    };
    match estimate_point(&ctx) {
        Ok(p) => SweepRow {
            axis_value: value,
            latency_s: Some(p.estimate.seconds),
            total_cycles: Some(p.estimate.total_cycles),
            ii_cycles: Some(p.estimate.ii_cycles),
            binding_term: Some(p.estimate.binding_term.to_string()),
            feasible: p.feasible,
            max_m,
            error: None,
        },
        Err(e) => failed(e, max_m),
    }
}

/// Evaluates every sweep point; rows come back in axis order regardless of
/// execution mode.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    Ok(par::map_ordered(exec, &spec.values, |&v| sweep_point(spec, v)))
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))
        .map_err(|e| Error::Io(e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluates the same context on several devices.
pub fn compare(ctx: &EstimationContext, devices: &[DeviceSpec], exec: Execution) -> Vec<Result<PointResult>> {
    par::map_ordered(exec, devices, |dev| {
        let mut c = ctx.clone();
        c.device = dev.clone();
        c.quant = fit_pack_to_device(c.quant, dev);
        estimate_point(&c)
    })
}

/// Clamps the weight pack count so the packed word fits the device's widest
/// memory port.
pub fn fit_pack_to_device(quant: QuantScheme, device: &DeviceSpec) -> QuantScheme {
    let max_k = (device.max_width() / quant.weight_bits.max(1)).max(1);
    QuantScheme {
        pack_count: quant.pack_count.min(max_k),
        ..quant
    }
}

/// Formats seconds with an SI prefix for human-readable tables.
pub fn format_seconds(s: f64) -> String {
    let (v, unit) = if s >= 1.0 {
        (s, "s")
    } else if s >= 1e-3 {
        (s * 1e3, "ms")
    } else if s >= 1e-6 {
        (s * 1e6, "us")
    } else {
        (s * 1e9, "ns")
    };
    format!("{v:.3} {unit}")
}
