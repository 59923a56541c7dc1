use clap::{Args, Parser, Subcommand};
use llm_fpga_model::catalog::units::{parse_bandwidth, parse_frequency};
use llm_fpga_model::catalog::{
    builtin_device, builtin_model, device_names, load_device_spec, load_model_spec, model_names, DeviceSpec,
    ModelSpec, Phase, PhaseWorkload, QuantScheme, WeightResidence,
};
use llm_fpga_model::constraints::{ConstraintReport, ConstraintSet};
use llm_fpga_model::estimate::{search_max_m, SearchOptions};
use llm_fpga_model::sweep::{
    compare, estimate_point, fit_pack_to_device, format_seconds, run_sweep, write_sweep_csv, EstimationContext,
    PointResult, SweepAxis, SweepSpec,
};
use llm_fpga_model::{Error, Execution, ParallelismPlan, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "llm-fpga", version, about = "Analytical latency and resource model for LLM accelerators on FPGAs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate latency and check resource constraints at one design point.
    Estimate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        json: bool,
    },
    /// Find the largest feasible global compute power M.
    SearchM {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        json: bool,
    },
    /// Sweep one parameter and write CSV to stdout.
    Sweep {
        #[command(flatten)]
        point: PointArgs,
        /// seq_len, m, weight_bits, pack_count, tp_size, pp_size or layers_on_chip.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated, strictly ascending.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
        /// Evaluate points one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare the same workload across devices.
    Compare {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        devices: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// List built-in models and devices.
    List,
}

#[derive(Args, Clone)]
struct PointArgs {
    #[arg(long, default_value = "gpt2")]
    model: String,
    /// TOML model description; replaces --model.
    #[arg(long, env = "LLM_FPGA_MODEL_FILE")]
    model_file: Option<PathBuf>,
    #[arg(long, default_value = "u280")]
    device: String,
    /// TOML device description; replaces --device.
    #[arg(long, env = "LLM_FPGA_DEVICE_FILE")]
    device_file: Option<PathBuf>,
    /// Directory searched for `<name>.toml` model and device files before
    /// the built-in catalog.
    #[arg(long, env = "LLM_FPGA_CATALOG_DIR")]
    catalog_dir: Option<PathBuf>,
    #[arg(long, default_value = "w4a8")]
    quant: String,
    /// Weights packed per memory word (default: as many as fit the widest port).
    #[arg(long)]
    pack_count: Option<u64>,
    /// MACs per DSP from operand packing (default: 2 for W4A8 and narrower).
    #[arg(long)]
    dsp_pack: Option<u64>,
    /// Count memory ports without data packing.
    #[arg(long)]
    no_packing: bool,
    #[arg(long, default_value = "prefill")]
    phase: Phase,
    /// Prompt length; for decode, the length the allocation is balanced for.
    #[arg(long, default_value_t = 128)]
    seq_len: u64,
    /// Override the model's maximum sequence length.
    #[arg(long)]
    seq_max: Option<u64>,
    /// Global compute power; searched when omitted.
    #[arg(long)]
    m: Option<u64>,
    /// Layers resident on one device.
    #[arg(short = 'C', long = "layers-on-chip", default_value_t = 1)]
    layers_on_chip: u64,
    /// on-chip or off-chip.
    #[arg(long, default_value = "off-chip")]
    weights: WeightResidence,
    #[arg(long)]
    fifo_depth: Option<u64>,
    /// Data reuse factor r for every operator.
    #[arg(long, default_value_t = 8)]
    reuse: u64,
    /// Clock, e.g. 300MHz.
    #[arg(long)]
    freq: Option<String>,
    /// Comma-separated subset of compute, capacity, ports.
    #[arg(long, value_delimiter = ',')]
    constraints: Vec<String>,
    /// Tensor-parallel devices.
    #[arg(long, default_value_t = 1)]
    tp: u64,
    /// Pipeline-parallel devices.
    #[arg(long, default_value_t = 1)]
    pp: u64,
    /// Device-to-device link bandwidth, e.g. 100Gb/s.
    #[arg(long)]
    link_bw: Option<String>,
    /// Achieved fraction of the link bandwidth.
    #[arg(long)]
    alpha: Option<f64>,
    /// Balance a decode allocation for its attention span instead of --seq-len.
    #[arg(long)]
    rebalance_decode: bool,
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn catalog_file(dir: Option<&Path>, kind: &str, name: &str) -> Option<PathBuf> {
    let path = dir?.join(kind).join(format!("{name}.toml"));
    path.is_file().then_some(path)
}

fn resolve_model(args: &PointArgs) -> Result<ModelSpec> {
    let file = args
        .model_file
        .clone()
        .or_else(|| catalog_file(args.catalog_dir.as_deref(), "models", &args.model));
    let mut model = match file {
        Some(path) => load_model_spec(&read(&path)?)?,
        None => builtin_model(&args.model)?,
    };
    if let Some(l_max) = args.seq_max {
        model.max_seq_len = l_max;
    }
    Ok(model)
}

fn resolve_device(args: &PointArgs, name: &str, file: Option<&Path>) -> Result<DeviceSpec> {
    let file = file
        .map(Path::to_path_buf)
        .or_else(|| catalog_file(args.catalog_dir.as_deref(), "devices", name));
    let mut device = match file {
        Some(path) => load_device_spec(&read(&path)?)?,
        None => builtin_device(name)?,
    };
    if let Some(f) = &args.freq {
        device.freq = parse_frequency(f).ok_or_else(|| Error::invalid("device", "freq", format!("`{f}`")))?;
    }
    Ok(device)
}

fn constraint_set(names: &[String]) -> Result<ConstraintSet> {
    if names.is_empty() {
        return Ok(ConstraintSet::ALL);
    }
    let mut set = ConstraintSet {
        compute: false,
        capacity: false,
        ports: false,
    };
    for n in names {
        match n.trim().to_ascii_lowercase().as_str() {
            "compute" => set.compute = true,
            "capacity" => set.capacity = true,
            "ports" => set.ports = true,
            "all" => set = ConstraintSet::ALL,
            other => return Err(Error::invalid("constraints", "name", format!("unknown constraint `{other}`"))),
        }
    }
    Ok(set)
}

fn build_context(args: &PointArgs) -> Result<EstimationContext> {
    let model = resolve_model(args)?;
    let device = resolve_device(args, &args.device, args.device_file.as_deref())?;
    let mut quant: QuantScheme = args.quant.parse()?;
    quant = match args.pack_count {
        Some(k) => quant.with_pack_count(k)?,
        None => fit_pack_to_device(quant, &device),
    };
    if let Some(f) = args.dsp_pack {
        quant = quant.with_dsp_pack_factor(f)?;
    }
    let mut workload = match args.phase {
        Phase::Prefill => PhaseWorkload::prefill(args.seq_len),
        Phase::Decode => PhaseWorkload::decode(args.seq_len),
    }
    .with_layers_on_chip(args.layers_on_chip)
    .with_weights(args.weights);
    if let Some(s) = args.fifo_depth {
        workload = workload.with_fifo_depth(s);
    }
    let mut plan = ParallelismPlan {
        tp_size: args.tp,
        pp_size: args.pp,
        ..ParallelismPlan::single()
    };
    if !plan.is_single_device() {
        let bw = args
            .link_bw
            .as_deref()
            .ok_or_else(|| Error::MissingField { entity: "parallelism", field: "link-bw".into() })?;
        plan.link_bandwidth =
            parse_bandwidth(bw).ok_or_else(|| Error::invalid("parallelism", "link-bw", format!("`{bw}`")))?;
        plan.alpha = args
            .alpha
            .ok_or_else(|| Error::MissingField { entity: "parallelism", field: "alpha".into() })?;
    }
    Ok(EstimationContext {
        m: args.m,
        search: SearchOptions {
            constraints: constraint_set(&args.constraints)?,
            packed: !args.no_packing,
            reuse: args.reuse,
            ..SearchOptions::default()
        },
        plan,
        rebalance_decode: args.rebalance_decode,
        ..EstimationContext::new(model, device, quant, workload)
    })
}

fn mark(ok: bool, boundary: bool) -> &'static str {
    match (ok, boundary) {
        (true, _) => "ok",
        (false, true) => "VIOLATED (at limit)",
        (false, false) => "VIOLATED",
    }
}

fn print_constraints(r: &ConstraintReport) {
    let c = &r.compute;
    println!(
        "  compute    {:>14} / {:<14.0} MACs/cycle   {}",
        c.required,
        c.available,
        mark(c.ok, c.boundary)
    );
    let s = &r.capacity;
    println!(
        "  sram       {:>14.3} / {:<14.3} MB           {}",
        s.sram_required as f64 / 8e6,
        s.sram_available as f64 / 8e6,
        mark(s.ok, s.boundary)
    );
    println!(
        "  dram       {:>14.3} / {:<14.3} GB",
        s.dram_required as f64 / 8e9,
        s.dram_available as f64 / 8e9
    );
    let p = &r.ports;
    println!(
        "  ports      {:>14} / {:<14} blocks       {}{}",
        p.blocks_required,
        p.blocks_available,
        mark(p.ok, p.boundary),
        if p.packed { "" } else { " (unpacked)" }
    );
    let b = &r.bandwidth;
    println!(
        "  bandwidth  {:>14.2} / {:<14.2} GB/s         {}",
        b.required / 8e9,
        b.available / 8e9,
        if b.bound { "bandwidth-bound" } else { "ok" }
    );
}

fn print_point(p: &PointResult, ctx: &EstimationContext) {
    let e = &p.estimate;
    println!(
        "{} on {}, {}, {} l={}, C={}, M={}",
        p.model, p.device, ctx.quant, e.phase, ctx.workload.seq_len, ctx.workload.layers_on_chip, p.m
    );
    if !ctx.plan.is_single_device() {
        println!("devices    {} tensor x {} pipeline", ctx.plan.tp_size, ctx.plan.pp_size);
    }
    println!(
        "latency    {} ({} cycles at {:.0} MHz)",
        format_seconds(e.seconds),
        e.total_cycles,
        e.freq / 1e6
    );
    println!("stage      head {} cycles, ii {} cycles, bound by {}", e.head_cycles, e.ii_cycles, e.binding_term);
    println!("pipeline   {} iterations x {} layers", e.iterations, e.depth);
    println!("constraints");
    print_constraints(&p.constraints);
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Estimate { point, json } => {
            let ctx = build_context(&point)?;
            let p = estimate_point(&ctx)?;
            if json {
                println!("{}", to_json(&p));
            } else {
                print_point(&p, &ctx);
            }
            Ok(if p.feasible { 0 } else { EXIT_INFEASIBLE })
        }
        Command::SearchM { point, json } => {
            let ctx = build_context(&point)?;
            ctx.validate()?;
            let r = search_max_m(&ctx.model, &ctx.device, &ctx.quant, &ctx.workload, &ctx.search_options())?;
            if json {
                println!("{}", to_json(&r));
            } else {
                println!("max M      {}", r.max_m);
                match r.binding_next {
                    Some(k) => println!("binding    {} at M={}", k, r.max_m + 1),
                    None => println!("binding    none below the scan limit"),
                }
                if let Some(gap) = r.first_infeasible {
                    println!("note       infeasible at M={gap}, feasible again above it");
                }
                println!("allocation");
                for (op, m) in r.allocation.m.iter() {
                    println!("  {:<3} {:>8} MACs/cycle, reuse {}", op.name(), m, r.allocation.reuse[op]);
                }
            }
            Ok(0)
        }
        Command::Sweep {
            point,
            axis,
            values,
            sequential,
        } => {
            let spec = SweepSpec {
                axis,
                values,
                fixed: build_context(&point)?,
            };
            let exec = if sequential { Execution::Sequential } else { Execution::default() };
            let rows = run_sweep(&spec, exec)?;
            write_sweep_csv(&rows, std::io::stdout().lock())?;
            for row in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{}={}: {}", axis, row.axis_value, row.error.as_deref().unwrap_or_default());
            }
            Ok(0)
        }
        Command::Compare { point, devices, json } => {
            let ctx = build_context(&point)?;
            let mut specs = Vec::new();
            let mut failures = Vec::new();
            for name in &devices {
                match resolve_device(&point, name, None) {
                    Ok(d) => specs.push(d),
                    Err(e) => failures.push((name.clone(), e)),
                }
            }
            let results = compare(&ctx, &specs, Execution::default());
            let mut code = 0;
            if json {
                let doc: Vec<serde_json::Value> = specs
                    .iter()
                    .zip(&results)
                    .map(|(d, r)| match r {
                        Ok(p) => serde_json::to_value(p).expect("report types serialize"),
                        Err(e) => serde_json::json!({ "device": d.name, "error": e.to_string() }),
                    })
                    .chain(failures.iter().map(|(n, e)| serde_json::json!({ "device": n, "error": e.to_string() })))
                    .collect();
                println!("{}", to_json(&doc));
            } else {
                println!(
                    "{:<12} {:>8} {:>14} {:>8} {:>9}",
                    "device", "M", "latency", "bound", "feasible"
                );
                for (d, r) in specs.iter().zip(&results) {
                    match r {
                        Ok(p) => println!(
                            "{:<12} {:>8} {:>14} {:>8} {:>9}",
                            d.name,
                            p.m,
                            format_seconds(p.estimate.seconds),
                            p.estimate.binding_term.to_string(),
                            if p.feasible { "yes" } else { "no" }
                        ),
                        Err(e) => println!("{:<12} error: {e}", d.name),
                    }
                }
                for (n, e) in &failures {
                    println!("{n:<12} error: {e}");
                }
            }
            for (_, e) in &failures {
                eprintln!("{e}");
            }
            for r in &results {
                match r {
                    Err(e) if e.is_input_error() => code = EXIT_INPUT,
                    Err(_) if code == 0 => code = EXIT_INFEASIBLE,
                    Ok(p) if !p.feasible && code == 0 => code = EXIT_INFEASIBLE,
                    _ => {}
                }
            }
            if !failures.is_empty() {
                code = EXIT_INPUT;
            }
            Ok(code)
        }
        Command::List => {
            println!("models:  {}", model_names().join(", "));
            println!("devices: {}", device_names().join(", "));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_INFEASIBLE })
        }
    }
}
