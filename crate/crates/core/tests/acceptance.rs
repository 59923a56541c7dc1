//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use llm_fpga_model::catalog::units::{parse_bandwidth, parse_bits};
use llm_fpga_model::catalog::{builtin_device, builtin_model, ModelKind, WeightResidence};
use llm_fpga_model::constraints::blocks_packed;
use llm_fpga_model::distributed::multi_prefill_latency_with;
use llm_fpga_model::estimate::{
    decode_latency, gemm_latency, prefill_latency, search_upper_bound, simplified_prefill, violation_at,
};
use llm_fpga_model::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_sign_negative() != b.is_sign_negative() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

fn model(d: u64, h: u64, ffn: u64, n: u64, l_max: u64) -> ModelSpec {
    ModelSpec {
        name: "random".into(),
        kind: ModelKind::Decoder,
        param_count: None,
        num_layers: n,
        num_heads: h,
        hidden_size: d,
        ffn_size: ffn,
        max_seq_len: l_max,
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn gemm_anchor() -> Outcome {
    let t = gemm_latency(512, 768, 3072, 16, 16, 300e6);
    let rel = (t - 15.71e-3).abs() / 15.71e-3;
    check(rel <= 0.005, || format!("{:.4} ms is {:.3}% off 15.71 ms", t * 1e3, rel * 100.0))?;
    Ok(format!("{:.4} ms ({:+.3}%)", t * 1e3, (t / 15.71e-3 - 1.0) * 100.0))
}

fn closed_form_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = 2000;
    for _ in 0..cases {
        let h = rng.gen_range(1..=32u64);
        let d = h * rng.gen_range(1..=128u64);
        let ffn = d * rng.gen_range(1..=8u64);
        let n = rng.gen_range(1..=48u64);
        let divisors: Vec<u64> = (1..=n).filter(|c| n % c == 0).collect();
        let c = divisors[rng.gen_range(0..divisors.len())];
        let l = rng.gen_range(1..=2048u64);
        // d | l*M keeps every balanced ratio integral.
        let m = d / gcd(d, l) * rng.gen_range(1..=64u64);
        let freq = rng.gen_range(50e6..800e6);
        let spec = model(d, h, ffn, n, 4096);
        let mut dev = builtin_device("u280").unwrap();
        dev.freq = freq;
        let alloc = balanced_allocation(m, &spec, l);
        let wl = PhaseWorkload::prefill(l).with_layers_on_chip(c);
        let full = prefill_latency(&spec, &alloc, &wl, &dev, 0).seconds;
        let simple = simplified_prefill(&spec, m, c, freq, l);
        check(ulps(full, simple) <= 1, || {
            format!("d={d} ffn={ffn} N={n} C={c} l={l} M={m}: {full:e} vs {simple:e}")
        })?;
    }
    Ok(format!("{cases} random tuples within 1 ULP"))
}

fn reduction_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 1000;
    let single = ParallelismPlan::single();
    for _ in 0..cases {
        let h = rng.gen_range(1..=16u64);
        let d = h * rng.gen_range(1..=128u64);
        let ffn = rng.gen_range(d..=8 * d);
        let n = 2 * rng.gen_range(1..=24u64);
        let c = rng.gen_range(1..=n / 2);
        let l = rng.gen_range(1..=1024u64);
        let m = rng.gen_range(1..=4096u64);
        let t_mem = rng.gen_range(0..100_000u64);
        let spec = model(d, h, ffn, n, 2048);
        let mut dev = builtin_device("u280").unwrap();
        dev.freq = rng.gen_range(50e6..800e6);
        let alloc = balanced_allocation(m, &spec, l);
        let wl = PhaseWorkload::prefill(l).with_layers_on_chip(c);

        let one = prefill_latency(&spec, &alloc, &wl, &dev, t_mem);
        let multi = multi_prefill_latency_with(&spec, &alloc, &wl, &dev, &single, t_mem, 0);
        check(one == multi, || format!("p1=p2=1 differs for d={d} l={l} M={m}: {one:?} vs {multi:?}"))?;

        let base = multi_prefill_latency_with(&spec, &alloc, &wl, &dev, &single, 0, 0);
        let two = ParallelismPlan { tp_size: 2, ..single };
        let half = multi_prefill_latency_with(&spec, &alloc, &wl, &dev, &two, 0, 0);
        check(half.total_cycles * 2.0 == base.total_cycles && half.seconds * 2.0 == base.seconds, || {
            format!("p1=2 is not half for d={d} l={l} M={m}: {} vs {}", half.seconds, base.seconds)
        })?;
    }
    Ok(format!("{cases} random inputs bit-exact"))
}

fn derived_fixtures() -> Outcome {
    let mut gpt2 = builtin_model("gpt2").unwrap();
    let u280 = builtin_device("u280").unwrap();
    let alloc = balanced_allocation(256, &gpt2, 128);
    let prefill = prefill_latency(&gpt2, &alloc, &PhaseWorkload::prefill(128), &u280, 0).seconds * 1e3;
    gpt2.max_seq_len = 512;
    let decode = decode_latency(&gpt2, &alloc, &PhaseWorkload::decode(128), &u280, 0).seconds * 1e3;
    check((prefill - 102.72).abs() <= 0.01, || format!("prefill {prefill:.4} ms != 102.72 ms"))?;
    check((decode - 2.009).abs() <= 0.01, || format!("decode {decode:.4} ms != 2.009 ms"))?;
    Ok(format!("prefill {prefill:.3} ms, decode {decode:.4} ms"))
}

// Tiled weights with no reuse: every MAC needs its own weight port, which
// is the regime where packing decides how many ports fit.
fn packing_direction() -> Outcome {
    let gpt2 = builtin_model("gpt2").unwrap();
    let u280 = builtin_device("u280").unwrap();
    let wl = PhaseWorkload::prefill(128).with_weights(WeightResidence::OffChip);
    let opts = SearchOptions {
        reuse: 1,
        ..SearchOptions::default()
    };
    let mut found = Vec::new();
    for k in [1, 2, 9, 18] {
        let q = QuantScheme::new(4, 8).unwrap().with_pack_count(k).unwrap();
        let r = search_max_m(&gpt2, &u280, &q, &wl, &opts).map_err(|e| format!("k={k}: {e}"))?;
        found.push((k, r.max_m));
    }
    let summary = found
        .iter()
        .map(|(k, m)| format!("k={k}:{m}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(found.windows(2).all(|w| w[0].1 <= w[1].1), || format!("not monotone: {summary}"))?;
    check(found[2].1 > 4 * found[1].1, || format!("k=9 not > 4x k=2: {summary}"))?;
    Ok(format!("{summary} (ratio {:.2})", found[2].1 as f64 / found[1].1 as f64))
}

fn search_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = ["bert", "gpt2"];
    let envelopes = 100;
    let mut feasible = 0;
    let mut gaps = 0;
    for i in 0..envelopes {
        let spec = builtin_model(names[i % 2]).unwrap();
        let mut dev = builtin_device("u280").unwrap();
        dev.dsp_count = rng.gen_range(20..=5000u64);
        dev.sram_block_count = rng.gen_range(200..=6000u64);
        dev.sram_total = rng.gen_range(2_000_000..=400_000_000u64);
        let q = QuantScheme::new(4, 8).unwrap();
        let wl = PhaseWorkload::prefill(rng.gen_range(1..=512u64))
            .with_layers_on_chip(rng.gen_range(1..=3u64));
        let opts = SearchOptions {
            reuse: rng.gen_range(1..=16u64),
            ..SearchOptions::default()
        };
        let top = search_upper_bound(&dev, &q, &opts);
        check(top <= 10_000, || format!("envelope {i}: M_tot {top} exceeds 10^4"))?;
        let ok = |m: u64| violation_at(m, &spec, &dev, &q, &wl, &opts).unwrap().is_none();

        let found = search_max_m(&spec, &dev, &q, &wl, &opts).ok();
        gaps += found.is_some_and(|r| r.first_infeasible.is_some()) as u32;
        let ascending = found.map(|r| r.max_m);
        let descending = (1..=top).rev().find(|&m| ok(m));
        let exhaustive = (1..=top).filter(|&m| ok(m)).max();
        check(ascending == descending && descending == exhaustive, || {
            format!("envelope {i}: ascending {ascending:?}, descending {descending:?}, exhaustive {exhaustive:?}")
        })?;
        feasible += ascending.is_some() as u32;
    }
    Ok(format!("{envelopes} envelopes agree ({feasible} feasible, {gaps} with a feasibility gap)"))
}

/// Counts multiply-accumulates by walking every output element of every
/// matrix product in one transformer layer.
fn enumerate_macs(spec: &ModelSpec, phase: Phase, l: u64) -> OpMap<u64> {
    fn gemm(rows: u64, inner: u64, cols: u64) -> u64 {
        let mut n = 0;
        for _ in 0..rows {
            for _ in 0..cols {
                for _ in 0..inner {
                    n += 1;
                }
            }
        }
        n
    }
    let (d, h, ffn) = (spec.hidden_size, spec.num_heads, spec.ffn_size);
    let dh = d / h;
    // Query rows and the number of keys each query attends to.
    let (rows, keys) = match phase {
        Phase::Prefill => (l, l),
        Phase::Decode => (1, l + 1),
    };
    let per_head = |f: &dyn Fn() -> u64| (0..h).map(|_| f()).sum::<u64>();
    OpMap::from_fn(|op| match op {
        OperatorId::Q | OperatorId::K | OperatorId::V | OperatorId::P => gemm(rows, d, d),
        OperatorId::A1 => per_head(&|| gemm(rows, dh, keys)),
        OperatorId::A2 => per_head(&|| gemm(rows, keys, dh)),
        OperatorId::F1 => gemm(rows, d, ffn),
        OperatorId::F2 => gemm(rows, ffn, d),
    })
}

fn mac_table_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let geometries = 50;
    for _ in 0..geometries {
        let h = rng.gen_range(1..=8u64);
        let d = h * rng.gen_range(1..=8u64);
        let ffn = rng.gen_range(1..=4 * d);
        let l = rng.gen_range(1..=32u64);
        let spec = model(d, h, ffn, 1, 64);
        for phase in [Phase::Prefill, Phase::Decode] {
            let got = op_macs(&spec, phase, l).per_op;
            let want = enumerate_macs(&spec, phase, l);
            check(got == want, || format!("{phase} d={d} h={h} ffn={ffn} l={l}: {got:?} vs {want:?}"))?;
        }
    }
    Ok(format!("{geometries} geometries x 2 phases"))
}

fn linearity_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u280 = builtin_device("u280").unwrap();
    for name in ["bert", "gpt2", "llama2", "vicuna"] {
        let spec = builtin_model(name).unwrap();
        let n = spec.num_layers;

        for _ in 0..50 {
            let m = rng.gen_range(1..=4096u64);
            let c = rng.gen_range(1..=n);
            let l = rng.gen_range(1..=512u64);
            let k = rng.gen_range(2..=8u64);
            let base = simplified_prefill(&spec, m, c, u280.freq, l);
            let scaled = simplified_prefill(&spec, m, c, u280.freq, k * l);
            let rel = (scaled / (k as f64 * base) - 1.0).abs();
            check(rel <= 4.0 * f64::EPSILON, || format!("{name}: T({k}l) != {k}T(l), rel {rel:e}"))?;
        }

        let alloc = balanced_allocation(512, &spec, 128);
        let reference = decode_latency(&spec, &alloc, &PhaseWorkload::decode(1), &u280, 0);
        for prompt in [2, 17, 128, spec.max_seq_len] {
            let other = decode_latency(&spec, &alloc, &PhaseWorkload::decode(prompt), &u280, 0);
            check(other == reference, || format!("{name}: decode varies with prompt {prompt}"))?;
        }

        let wl = PhaseWorkload::prefill(128);
        let mut last = f64::INFINITY;
        for m in (1..=4096u64).step_by(7) {
            let t = prefill_latency(&spec, &balanced_allocation(m, &spec, 128), &wl, &u280, 0).seconds;
            check(t <= last, || format!("{name}: latency rises at M={m}"))?;
            last = t;
        }
    }

    for _ in 0..500 {
        let m = rng.gen_range(1..=8192u64);
        let r = rng.gen_range(1..=16u64).min(m);
        let mut last = u64::MAX;
        for k in 1..=18 {
            let q = QuantScheme::new(4, 8).unwrap().with_pack_count(k).unwrap();
            let blocks = blocks_packed(m, m, r, &q, &u280).map_err(|e| e.to_string())?;
            check(blocks <= last, || format!("tile M={m} r={r}: blocks rise at k={k}"))?;
            last = blocks;
        }
    }
    Ok("linear in l, decode prompt-invariant, monotone in M and k".into())
}

fn catalog_golden() -> Outcome {
    // Model, type, # of params, N, h, d, d_FFN.
    let models = [
        ("bert", ModelKind::Encoder, 110e6, 12, 12, 768, 3072),
        ("gpt2", ModelKind::Decoder, 355e6, 24, 16, 1024, 4096),
        ("llama2", ModelKind::Decoder, 7e9, 32, 32, 4096, 11008),
        ("vicuna", ModelKind::Decoder, 13e9, 40, 40, 5120, 13824),
    ];
    for (name, kind, params, n, h, d, ffn) in models {
        let m = builtin_model(name).unwrap();
        let got = (m.kind, m.param_count.map(|p| p as f64), m.num_layers, m.num_heads, m.hidden_size, m.ffn_size);
        let want = (kind, Some(params), n, h, d, ffn);
        check(got == want, || format!("{name}: {got:?} vs {want:?}"))?;
    }

    // Device, TOPS, specialized blocks, DSPs, BRAM18K/M20K, URAM/eSRAM,
    // on-chip capacity, off-chip capacity(s), off-chip bandwidth(s).
    type Row = (&'static str, f64, Option<u64>, Option<u64>, u64, Option<u64>, &'static str, &'static [&'static str], &'static [&'static str]);
    let devices: [Row; 5] = [
        ("u280", 24.5, None, Some(9024), 4032, Some(960), "41MB", &["8GB", "32GB"], &["460GB/s", "38GB/s"]),
        ("vck5000", 145.0, Some(400), Some(1968), 967, Some(463), "24MB", &["16GB"], &["102.4GB/s"]),
        ("vhk158", 56.0, None, Some(7392), 5063, Some(1301), "63.62MB", &["32GB", "32GB"], &["819.2GB/s", "102.4GB/s"]),
        ("stratix10nx", 143.0, Some(3960), None, 6847, Some(2), "30MB", &["16GB"], &["512GB/s"]),
        ("agilex7", 88.6, None, Some(12300), 18960, None, "46.25MB", &["32GB"], &["820GB/s"]),
    ];
    for (name, tops, special, dsps, blocks, secondary, sram, dram, bw) in devices {
        let dev = builtin_device(name).unwrap();
        let bits = |s: &str| parse_bits(s).unwrap().round() as u64;
        let bws: Vec<f64> = bw.iter().map(|s| parse_bandwidth(s).unwrap()).collect();
        let drams: Vec<u64> = dram.iter().map(|s| bits(s)).collect();
        check(dev.peak_int8_tops == Some(tops), || format!("{name}: TOPS {:?}", dev.peak_int8_tops))?;
        check(dev.specialized_units == special, || format!("{name}: specialized {:?}", dev.specialized_units))?;
        // A part without a DSP column computes on its specialized blocks.
        let units = dsps.or(special).unwrap();
        check(dev.dsp_count == units, || format!("{name}: compute units {}", dev.dsp_count))?;
        check(dev.sram_block_count == blocks, || format!("{name}: blocks {}", dev.sram_block_count))?;
        check(dev.secondary_block_count == secondary, || format!("{name}: secondary blocks"))?;
        check(dev.sram_total == bits(sram), || format!("{name}: on-chip {} bits", dev.sram_total))?;
        check(dev.dram_total == drams[0], || format!("{name}: off-chip {} bits", dev.dram_total))?;
        check(dev.secondary_dram_total == drams.get(1).copied(), || format!("{name}: secondary off-chip"))?;
        check(dev.offchip_bandwidth == bws[0], || format!("{name}: bandwidth {}", dev.offchip_bandwidth))?;
        check(dev.secondary_offchip_bandwidth == bws.get(1).copied(), || {
            format!("{name}: secondary bandwidth {:?}", dev.secondary_offchip_bandwidth)
        })?;
        let peak = 2.0 * total_compute_power(&dev, &QuantScheme::new(8, 8).unwrap()) * dev.freq / 1e12;
        if special.is_some() {
            check((peak - tops).abs() < 1e-9, || format!("{name}: rated {tops} TOPS, modeled {peak}"))?;
        }
    }
    Ok("4 models, 5 devices field-for-field".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("systolic GEMM anchor", gemm_anchor, Duration::from_secs(1)),
        ("closed-form prefill identity", closed_form_identity, Duration::from_secs(1)),
        ("multi-device reduction identity", reduction_identity, Duration::from_secs(5)),
        ("derived GPT2/U280 fixtures", derived_fixtures, Duration::from_secs(1)),
        ("packing direction", packing_direction, Duration::from_secs(10)),
        ("search correctness", search_correctness, Duration::from_secs(30)),
        ("MAC table oracle", mac_table_oracle, Duration::from_secs(10)),
        ("linearity and monotonicity", linearity_monotonicity, Duration::from_secs(30)),
        ("catalog golden values", catalog_golden, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {took:.2?}, budget {budget:?}")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} [{took:.2?}] {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
