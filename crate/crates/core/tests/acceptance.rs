//! End-to-end acceptance gate. Each numbered criterion prints exactly one
//! PASS/FAIL line with the measured values; the test fails if any criterion
//! fails. Run with `--nocapture` to see the lines on success.
//!
//! Full-array strong-scaling sizes for the tree (153.6M rows) and k-means
//! (25.6M rows) workloads exceed this machine's memory, so those two run at
//! 1/64 and 1/10 scale respectively; the speedup-band check itself is
//! unchanged. The tree's weak-scaling per-core size is likewise scaled from
//! 600k to 60k rows per core.

use std::time::Instant;

use pimsim_core::activation::{sigmoid_exact, LutPlacement, SigmoidLut};
use pimsim_core::data::{gen_classification, gen_clusters, gen_regression, Dataset};
use pimsim_core::dtree::{self, DtreeConfig};
use pimsim_core::experiment::{
    render, sweep_cores_strong, sweep_cores_weak, sweep_threads, ExperimentSpec, ReportFormat,
    Workload,
};
use pimsim_core::fxp::{
    mul_custom_builtin, mul_default8, mul_emulated32, Fixed, FixedFormat, FxpCosts,
};
use pimsim_core::kmeans::{self, lloyd_reference, KmeansConfig};
use pimsim_core::machine::{CostModel, PimSystem, ScratchPlan};
use pimsim_core::metrics::{adjusted_rand_index, calinski_harabasz};
use pimsim_core::regression::{self, GdConfig, LogActivation, NumericVariant, Task, TrainOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn criterion<F>(&mut self, id: u32, name: &str, f: F)
    where
        F: FnOnce() -> Result<String, String>,
    {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
        let elapsed = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) => {
                println!("criterion {id:2} {name}: PASS [{elapsed:.1}s] ({detail})");
            }
            Ok(Err(why)) => {
                println!("criterion {id:2} {name}: FAIL [{elapsed:.1}s] ({why})");
                self.failures.push(format!("{id} {name}: {why}"));
            }
            Err(_) => {
                println!("criterion {id:2} {name}: FAIL [{elapsed:.1}s] (panicked)");
                self.failures.push(format!("{id} {name}: panicked"));
            }
        }
    }
}

fn gd_run(
    ds: &Dataset,
    task: Task,
    variant: NumericVariant,
    activation: LogActivation,
    iterations: usize,
) -> TrainOutput {
    let cfg = GdConfig {
        task,
        variant,
        activation,
        lut_placement: LutPlacement::Scratchpad,
        iterations,
        learning_rate: 0.25,
        n_cores: 16,
        threads: 16,
        record_every: 50,
    };
    let mut sys = PimSystem::new(16, CostModel::default());
    regression::train(ds, &cfg, &mut sys).expect("gd run")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Largest error-trace excursion past the given iteration.
fn trace_drift_after(out: &TrainOutput, after: usize) -> f64 {
    let tail: Vec<f64> =
        out.trace.iter().filter(|p| p.iteration >= after).map(|p| p.error).collect();
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn c1_fixed_point_oracle() -> Result<String, String> {
    let costs = FxpCosts::default();
    let f8 = FixedFormat::new(8, 7);
    for a in -128i64..128 {
        for b in -128i64..128 {
            let (r, cost) = mul_custom_builtin(
                Fixed::from_raw(a, f8).unwrap(),
                Fixed::from_raw(b, f8).unwrap(),
                &costs,
            )
            .map_err(|e| format!("builtin {a}x{b}: {e}"))?;
            if r.raw() != a * b {
                return Err(format!("builtin {a}x{b}: got {}, want {}", r.raw(), a * b));
            }
            if cost != 4 {
                return Err(format!("builtin cost {cost} != 4"));
            }
        }
    }
    let q = FixedFormat::Q21_10;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0u32;
    for _ in 0..1_000_000 {
        let a = rng.gen_range(-(1i64 << 31)..(1i64 << 31));
        let b = rng.gen_range(-(1i64 << 31)..(1i64 << 31));
        // Independent wide-integer oracle: truncate toward zero after the
        // fraction shift, overflow whenever the result leaves 32 bits.
        let wide = (a as i128 * b as i128) / 1024;
        let got = mul_emulated32(
            Fixed::from_raw(a, q).map_err(|e| e.to_string())?,
            Fixed::from_raw(b, q).map_err(|e| e.to_string())?,
            &costs,
        );
        let fits = wide >= i32::MIN as i128 && wide <= i32::MAX as i128;
        match got {
            Ok((r, cost)) => {
                if !fits || r.raw() as i128 != wide {
                    return Err(format!("emulated32 {a}x{b}: got {}, want {wide}", r.raw()));
                }
                if cost != 35 {
                    return Err(format!("emulated32 cost {cost} != 35"));
                }
                checked += 1;
            }
            Err(_) if !fits => checked += 1,
            Err(e) => return Err(format!("emulated32 {a}x{b}: spurious {e}")),
        }
    }
    Ok(format!("65536 builtin pairs + {checked} emulated pairs exact"))
}

fn c2_lut_fidelity() -> Result<String, String> {
    let lut = SigmoidLut::build();
    let mut max_err = 0.0f64;
    let mut max_sym = 0.0f64;
    for i in 0..=20480 {
        let x = i as f64 / 1024.0;
        for x in [x, -x] {
            max_err = max_err.max((lut.lookup(x) - sigmoid_exact(x)).abs());
        }
        max_sym = max_sym.max((lut.lookup(x) + lut.lookup(-x) - 1.0).abs());
    }
    if max_err > 5e-4 {
        return Err(format!("max fidelity error {max_err:.2e} > 5e-4"));
    }
    if max_sym > f64::EPSILON {
        return Err(format!("symmetry defect {max_sym:.2e} > 1 ulp"));
    }
    Ok(format!("max |lut - exact| = {max_err:.2e}, symmetry defect {max_sym:.1e}"))
}

fn c3_lin_accuracy_bands() -> Result<String, String> {
    let seeds: Vec<u64> = (0..10).collect();
    let mut errs = vec![Vec::new(); 4];
    let variants =
        [NumericVariant::Fp32, NumericVariant::Int32, NumericVariant::Hyb, NumericVariant::Bui];
    let mut max_drift = 0.0f64;
    for &seed in &seeds {
        let (ds, _) = gen_regression(8192, 16, 4, seed);
        let mut outs = Vec::new();
        for (vi, &v) in variants.iter().enumerate() {
            let out = gd_run(&ds, Task::Linear, v, LogActivation::Lut, 1000);
            // Flatness applies to the error-bounded variants; the int8
            // variants' saturated inputs leave them with a noisy floor.
            if matches!(v, NumericVariant::Fp32 | NumericVariant::Int32) {
                max_drift = max_drift.max(trace_drift_after(&out, 500));
            }
            errs[vi].push(out.final_error);
            outs.push(out);
        }
        // HYB and BUI share the exact arithmetic; only the multiply cost
        // differs.
        let hyb_bits: Vec<u64> = outs[2].weights.iter().map(|w| w.to_bits()).collect();
        let bui_bits: Vec<u64> = outs[3].weights.iter().map(|w| w.to_bits()).collect();
        if hyb_bits != bui_bits {
            return Err(format!("seed {seed}: HYB and BUI weights differ bitwise"));
        }
    }
    let (fp32, int32) = (mean(&errs[0]), mean(&errs[1]));
    if fp32 > 0.015 {
        return Err(format!("FP32 mean error {:.3}% > 1.5%", fp32 * 100.0));
    }
    if int32 > fp32 + 0.015 {
        return Err(format!(
            "INT32 mean error {:.3}% > FP32 {:.3}% + 1.5pp",
            int32 * 100.0,
            fp32 * 100.0
        ));
    }
    if max_drift >= 0.0005 {
        return Err(format!("trace drift past iter 500 = {:.4}pp >= 0.05pp", max_drift * 100.0));
    }
    Ok(format!(
        "mean error fp32 {:.3}% int32 {:.3}% hyb {:.3}% bui {:.3}%, drift {:.4}pp",
        fp32 * 100.0,
        int32 * 100.0,
        mean(&errs[2]) * 100.0,
        mean(&errs[3]) * 100.0,
        max_drift * 100.0
    ))
}

fn c4_log_accuracy_ordering() -> Result<String, String> {
    let seeds: Vec<u64> = (0..10).collect();
    let mut lut = Vec::new();
    let mut taylor = Vec::new();
    let mut hyb2 = Vec::new();
    let mut hyb4 = Vec::new();
    for &seed in &seeds {
        let (ds4, _) = gen_classification(8192, 4, seed);
        let (ds2, _) = gen_classification(8192, 2, seed);
        lut.push(gd_run(&ds4, Task::Logistic, NumericVariant::Int32, LogActivation::Lut, 1000).final_error);
        taylor.push(
            gd_run(&ds4, Task::Logistic, NumericVariant::Int32, LogActivation::Taylor, 1000)
                .final_error,
        );
        hyb4.push(gd_run(&ds4, Task::Logistic, NumericVariant::Hyb, LogActivation::Lut, 1000).final_error);
        hyb2.push(gd_run(&ds2, Task::Logistic, NumericVariant::Hyb, LogActivation::Lut, 1000).final_error);
    }
    let (ml, mt, m2, m4) = (mean(&lut), mean(&taylor), mean(&hyb2), mean(&hyb4));
    if ml > mt {
        return Err(format!("LUT mean error {:.3}% > Taylor {:.3}%", ml * 100.0, mt * 100.0));
    }
    if m2 >= m4 {
        return Err(format!(
            "HYB-LUT 2-decimal error {:.3}% not strictly below 4-decimal {:.3}%",
            m2 * 100.0,
            m4 * 100.0
        ));
    }
    Ok(format!(
        "mean error lut {:.3}% taylor {:.3}%; hyb 2-dec {:.3}% < 4-dec {:.3}%",
        ml * 100.0,
        mt * 100.0,
        m2 * 100.0,
        m4 * 100.0
    ))
}

fn c5_dtree() -> Result<String, String> {
    let mut pim_acc = Vec::new();
    let mut ref_acc = Vec::new();
    for seed in 0..10u64 {
        let (ds, _) = gen_classification(60_000, 4, seed);
        let cfg = DtreeConfig { seed, n_cores: 16, ..DtreeConfig::default() };
        let mut sys = PimSystem::new(16, CostModel::default());
        let out = dtree::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
        pim_acc.push(out.training_accuracy);
        let reference = dtree::train_reference(&ds, &cfg);
        ref_acc.push(dtree::training_accuracy(&reference, &ds));
    }
    let (mp, mr) = (mean(&pim_acc), mean(&ref_acc));
    if (mp - mr).abs() > 0.02 {
        return Err(format!("mean accuracy {mp:.4} vs float reference {mr:.4}: gap > 0.02"));
    }
    // Shard-count invariance at a fixed seed.
    let (ds, _) = gen_classification(60_000, 4, 0);
    let cfg = DtreeConfig { seed: 0, n_cores: 1, ..DtreeConfig::default() };
    let mut sys = PimSystem::new(1, CostModel::default());
    let one = dtree::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
    let cfg = DtreeConfig { seed: 0, n_cores: 64, ..DtreeConfig::default() };
    let mut sys = PimSystem::new(64, CostModel::default());
    let sixty_four = dtree::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
    if one.tree != sixty_four.tree {
        return Err("trees differ between 1 and 64 cores".into());
    }
    Ok(format!("mean accuracy {mp:.4} (reference {mr:.4}); 1-core tree == 64-core tree"))
}

fn c6_kmeans() -> Result<String, String> {
    let (ds, _) = gen_clusters(100_000, 16, 16, 0);
    let cfg = KmeansConfig { k: 16, seed: 0, n_cores: 16, ..KmeansConfig::default() };
    let mut sys = PimSystem::new(16, CostModel::default());
    let out = kmeans::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
    let (_, ref_assign, _) = lloyd_reference(&ds, 16, &out.init_indices, 300, 1e-4);
    let ari = adjusted_rand_index(&out.assignments, &ref_assign).map_err(|e| e.to_string())?;
    if ari < 0.99 {
        return Err(format!("ARI vs float reference {ari:.6} < 0.99"));
    }
    let ch_q = calinski_harabasz(&ds.x, 16, &out.assignments).map_err(|e| e.to_string())?;
    let ch_f = calinski_harabasz(&ds.x, 16, &ref_assign).map_err(|e| e.to_string())?;
    if (ch_q - ch_f).abs() / ch_f > 0.01 {
        return Err(format!("Calinski-Harabasz {ch_q:.0} vs {ch_f:.0}: gap > 1%"));
    }
    if out.iterations >= 40 {
        return Err(format!("converged in {} iterations (>= 40)", out.iterations));
    }
    // Bit-identical centroids across core counts.
    let mut raws = Vec::new();
    for cores in [1usize, 4, 64] {
        let cfg = KmeansConfig { k: 16, seed: 0, n_cores: cores, n_init: 2, ..KmeansConfig::default() };
        let mut sys = PimSystem::new(cores, CostModel::default());
        let o = kmeans::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
        raws.push(o.centroids_raw);
    }
    if raws[0] != raws[1] || raws[1] != raws[2] {
        return Err("centroids differ across 1/4/64 cores".into());
    }
    Ok(format!(
        "ARI {ari:.6}, CH {ch_q:.0} vs {ch_f:.0}, {} iterations, 1/4/64-core centroids identical",
        out.iterations
    ))
}

fn sweep_spec(workload: Workload) -> ExperimentSpec {
    ExperimentSpec {
        workload,
        n_rows: 2048,
        n_features: 16,
        seed: 1,
        n_cores: 16,
        iterations: 3,
        n_init: 1,
        ..ExperimentSpec::default()
    }
}

fn check_thread_shape(label: &str, cycles: &[(u32, u64)]) -> Result<(), String> {
    for pair in cycles.windows(2) {
        let ((t0, c0), (t1, c1)) = (pair[0], pair[1]);
        if t1 <= 11 && c1 >= c0 {
            return Err(format!("{label}: cycles not strictly decreasing at {t0}->{t1} threads"));
        }
        if t0 >= 11 && c1 != c0 {
            return Err(format!("{label}: cycles not constant at {t0}->{t1} threads"));
        }
    }
    Ok(())
}

fn c7_thread_sweeps() -> Result<String, String> {
    let full: Vec<u32> = (1..=24).collect();
    let tree: Vec<u32> = (1..=16).collect();
    let workloads: Vec<(Workload, &[u32])> = vec![
        (Workload::Linear { variant: NumericVariant::Fp32 }, &full),
        (Workload::Linear { variant: NumericVariant::Int32 }, &full),
        (Workload::Linear { variant: NumericVariant::Hyb }, &full),
        (Workload::Linear { variant: NumericVariant::Bui }, &full),
        (
            Workload::Logistic {
                variant: NumericVariant::Int32,
                activation: LogActivation::Lut,
                lut_placement: LutPlacement::Scratchpad,
            },
            &full,
        ),
        (
            Workload::Logistic {
                variant: NumericVariant::Int32,
                activation: LogActivation::Taylor,
                lut_placement: LutPlacement::Scratchpad,
            },
            &full,
        ),
        (Workload::Kmeans { k: 16 }, &full),
        (Workload::DecisionTree, &tree),
    ];
    let mut n_points = 0;
    for (workload, grid) in workloads {
        let reports = sweep_threads(&sweep_spec(workload), grid).map_err(|e| e.to_string())?;
        let cycles: Vec<(u32, u64)> =
            reports.iter().map(|r| (r.threads, r.pim_kernel_cycles)).collect();
        check_thread_shape(&workload.label(), &cycles)?;
        n_points += cycles.len();
    }
    // The tree's 16-thread cap must come out of the scratch budget itself.
    let plan = ScratchPlan {
        reserved_bytes: 0,
        per_thread_bytes: dtree::PER_THREAD_SCRATCH_BYTES,
    };
    let admissible = plan.admissible_threads().map_err(|e| e.to_string())?;
    if admissible != 16 {
        return Err(format!("tree scratch budget admits {admissible} threads, expected 16"));
    }
    let (ds, _) = gen_classification(256, 4, 1);
    let cfg = DtreeConfig { n_cores: 2, threads: 17, ..DtreeConfig::default() };
    let mut sys = PimSystem::new(2, CostModel::default());
    if dtree::train(&ds, &cfg, &mut sys).is_ok() {
        return Err("17-thread tree run was not rejected".into());
    }
    Ok(format!("8 workload sweeps, {n_points} grid points; tree capped at {admissible} threads"))
}

fn c8_variant_cost_order() -> Result<String, String> {
    let (ds, _) = gen_regression(16384, 16, 4, 2);
    let variants =
        [NumericVariant::Fp32, NumericVariant::Int32, NumericVariant::Hyb, NumericVariant::Bui];
    let lin: Vec<u64> = variants
        .iter()
        .map(|&v| gd_run(&ds, Task::Linear, v, LogActivation::Lut, 3).breakdown.pim_kernel_cycles)
        .collect();
    if !(lin[0] > lin[1] && lin[1] > lin[2] && lin[2] > lin[3]) {
        return Err(format!("LIN kernel cycles not ordered FP32>INT32>HYB>BUI: {lin:?}"));
    }
    let (dsc, _) = gen_classification(16384, 4, 2);
    let lut_cycles = gd_run(&dsc, Task::Logistic, NumericVariant::Int32, LogActivation::Lut, 3)
        .breakdown
        .pim_kernel_cycles;
    let taylor_cycles =
        gd_run(&dsc, Task::Logistic, NumericVariant::Int32, LogActivation::Taylor, 3)
            .breakdown
            .pim_kernel_cycles;
    let ratio = taylor_cycles as f64 / lut_cycles as f64;
    if ratio < 20.0 {
        return Err(format!("LOG Taylor/LUT kernel-cycle ratio {ratio:.1} < 20"));
    }
    let costs = FxpCosts::default();
    let f8 = FixedFormat::new(8, 7);
    let a = Fixed::from_raw(25, f8).unwrap();
    let b = Fixed::from_raw(-77, f8).unwrap();
    let (_, builtin) = mul_custom_builtin(a, b, &costs).unwrap();
    let (_, default) = mul_default8(a, b, &costs).unwrap();
    if builtin != 4 || default != 7 {
        return Err(format!("multiply costs builtin={builtin} default={default}, want 4/7"));
    }
    Ok(format!(
        "LIN cycles {} > {} > {} > {}; Taylor/LUT ratio {ratio:.1}; multiply 4 vs 7 instructions",
        lin[0], lin[1], lin[2], lin[3]
    ))
}

fn c9_scaling() -> Result<String, String> {
    let grid = [256usize, 512, 1024, 2048];
    let lin = Workload::Linear { variant: NumericVariant::Int32 };
    let log = Workload::Logistic {
        variant: NumericVariant::Int32,
        activation: LogActivation::Lut,
        lut_placement: LutPlacement::Scratchpad,
    };
    let mut speedups = Vec::new();

    // Strong scaling. The tree and k-means run at reduced row counts (see
    // module comment); the regression workloads use the full array sizes.
    let strong: Vec<(Workload, usize, usize)> = vec![
        (lin, 6_291_456, 2),
        (log, 6_291_456, 2),
        (Workload::DecisionTree, 2_400_000, 0),
        (Workload::Kmeans { k: 16 }, 2_560_000, 5),
    ];
    for (workload, rows, iters) in strong {
        let spec = ExperimentSpec {
            workload,
            n_rows: rows,
            iterations: iters.max(1),
            n_init: 1,
            seed: 3,
            ..ExperimentSpec::default()
        };
        let reports = sweep_cores_strong(&spec, &grid).map_err(|e| e.to_string())?;
        let speedup =
            reports[0].pim_kernel_cycles as f64 / reports[3].pim_kernel_cycles as f64;
        if !(6.0..=8.0).contains(&speedup) {
            return Err(format!(
                "{} strong-scaling speedup 2048v256 = {speedup:.2} outside [6, 8]",
                workload.label()
            ));
        }
        speedups.push(format!("{} {speedup:.2}x", workload.label()));
    }

    // Weak scaling: fixed rows per core; communication must stay a small
    // fraction of the modeled total.
    let weak_grid = [1usize, 4, 16, 64];
    let weak: Vec<(Workload, usize, usize)> = vec![
        (lin, 2048, 10),
        (log, 2048, 10),
        (Workload::DecisionTree, 60_000, 0),
    ];
    let mut worst_comm = 0.0f64;
    for (workload, per_core, iters) in weak {
        let spec = ExperimentSpec {
            workload,
            iterations: iters.max(1),
            seed: 3,
            ..ExperimentSpec::default()
        };
        let reports =
            sweep_cores_weak(&spec, &weak_grid, per_core).map_err(|e| e.to_string())?;
        for r in &reports {
            let comm = (r.total_cycles - r.pim_kernel_cycles) as f64 / r.total_cycles as f64;
            worst_comm = worst_comm.max(comm);
            if comm > 0.10 {
                return Err(format!(
                    "{} weak scaling at {} cores: communication fraction {:.1}% > 10%",
                    workload.label(),
                    r.n_cores,
                    comm * 100.0
                ));
            }
        }
    }
    // K-means weak scaling, run directly so the per-iteration kernel cycles
    // are visible.
    let mut per_iter = Vec::new();
    for &cores in &weak_grid {
        let (ds, _) = gen_clusters(cores * 100_000, 16, 16, 3);
        let cfg = KmeansConfig {
            k: 16,
            max_iters: 3,
            n_init: 1,
            seed: 3,
            n_cores: cores,
            ..KmeansConfig::default()
        };
        let mut sys = PimSystem::new(cores, CostModel::default());
        let out = kmeans::train(&ds, &cfg, &mut sys).map_err(|e| e.to_string())?;
        let b = out.breakdown;
        let comm = (b.total() - b.pim_kernel_cycles) as f64 / b.total() as f64;
        worst_comm = worst_comm.max(comm);
        if comm > 0.10 {
            return Err(format!(
                "kme weak scaling at {cores} cores: communication fraction {:.1}% > 10%",
                comm * 100.0
            ));
        }
        per_iter.push(out.kernel_cycles_per_iteration);
    }
    if per_iter.iter().any(|&c| c != per_iter[0]) {
        return Err(format!("kme weak-grid per-iteration kernel cycles vary: {per_iter:?}"));
    }
    Ok(format!(
        "strong speedups {}; worst weak comm fraction {:.2}%; kme per-iter cycles constant",
        speedups.join(", "),
        worst_comm * 100.0
    ))
}

fn c10_determinism() -> Result<String, String> {
    let batch = || -> Result<String, String> {
        let mut reports = Vec::new();
        reports.extend(
            sweep_threads(&sweep_spec(Workload::Linear { variant: NumericVariant::Int32 }), &[1, 8, 16])
                .map_err(|e| e.to_string())?,
        );
        reports.extend(
            sweep_threads(&sweep_spec(Workload::Kmeans { k: 16 }), &[4, 16])
                .map_err(|e| e.to_string())?,
        );
        reports.push(
            pimsim_core::experiment::run(&sweep_spec(Workload::DecisionTree))
                .map_err(|e| e.to_string())?,
        );
        Ok(render(&reports, ReportFormat::Csv) + &render(&reports, ReportFormat::JsonLines))
    };
    let a = batch()?;
    let b = batch()?;
    if a != b {
        return Err("repeated identical runs rendered different report bytes".into());
    }
    Ok(format!("{} report bytes identical across repeated runs", a.len()))
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    gate.criterion(1, "fixed-point multiply oracle", c1_fixed_point_oracle);
    gate.criterion(2, "sigmoid LUT fidelity and symmetry", c2_lut_fidelity);
    gate.criterion(3, "linear-regression accuracy bands", c3_lin_accuracy_bands);
    gate.criterion(4, "logistic-regression accuracy ordering", c4_log_accuracy_ordering);
    gate.criterion(5, "decision tree vs float reference + shard invariance", c5_dtree);
    gate.criterion(6, "k-means quality and core invariance", c6_kmeans);
    gate.criterion(7, "thread-sweep cost shape", c7_thread_sweeps);
    gate.criterion(8, "numeric-variant cost ordering", c8_variant_cost_order);
    gate.criterion(9, "strong/weak scaling bands", c9_scaling);
    gate.criterion(10, "report determinism", c10_determinism);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
