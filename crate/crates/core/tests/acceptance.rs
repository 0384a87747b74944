//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! per checked clause (run with `--nocapture` to see them on success).
//!
//! Requires the MNIST IDX files; set `MNIST_DIR` or place them under
//! `/root/data/mnist` (see scripts/fetch_mnist.sh).

use std::path::PathBuf;
use std::time::Instant;
use synfire_core::circuit::{build, Dims};
use synfire_core::dataio::Geometry;
use synfire_core::engine::Validation;
use synfire_core::harness::{self, Mode, RunConfig};
use synfire_core::oracle::{self, InitScheme};
use synfire_core::plasticity::{rule_delta, PlasticRule};

fn mnist_dir() -> PathBuf {
    let dir = std::env::var("MNIST_DIR").unwrap_or_else(|_| "/root/data/mnist".to_string());
    let dir = PathBuf::from(dir);
    let probe = dir.join("train-images-idx3-ubyte");
    assert!(
        probe.exists(),
        "MNIST IDX files not found at {} — set MNIST_DIR or run scripts/fetch_mnist.sh",
        dir.display()
    );
    dir
}

fn config(dims: Dims, geometry: Geometry) -> RunConfig {
    let dir = mnist_dir();
    let mut cfg = RunConfig::new(dims, geometry);
    cfg.train_images = dir.join("train-images-idx3-ubyte");
    cfg.train_labels = dir.join("train-labels-idx1-ubyte");
    cfg.test_images = dir.join("t10k-images-idx3-ubyte");
    cfg.test_labels = dir.join("t10k-labels-idx1-ubyte");
    cfg
}

fn check(lines: &mut Vec<String>, label: &str, pass: bool, detail: String) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("{label}: {detail} .. {verdict}");
    println!("{line}");
    lines.push(line);
    pass
}

/// Criterion 1: simulator and oracle agree bit-exactly on all compared spike
/// sets and on both weight matrices after every frame — 1000 samples at
/// (100,300,10) and 200 at (400,400,10), zero tolerance.
#[test]
fn criterion_1_lockstep_equivalence() {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;

    let mut cfg = config(Dims::new(100, 300, 10), Geometry::Px10);
    cfg.seed = 1;
    let report = harness::lockstep(&cfg, 1000).expect("lockstep run");
    ok &= check(
        &mut lines,
        "criterion 1 [lockstep]",
        report.is_clean(),
        format!(
            "(100,300,10) x 1000 samples, divergence = {:?}, rail saturations = {}",
            report.divergence, report.saturation_events
        ),
    );

    let mut cfg = config(Dims::new(400, 400, 10), Geometry::Px20);
    cfg.seed = 1;
    let report = harness::lockstep(&cfg, 200).expect("lockstep run");
    ok &= check(
        &mut lines,
        "criterion 1 [lockstep]",
        report.is_clean(),
        format!("(400,400,10) x 200 samples, divergence = {:?}", report.divergence),
    );

    let elapsed = started.elapsed().as_secs_f64();
    ok &= check(
        &mut lines,
        "criterion 1 [lockstep]",
        elapsed < 120.0,
        format!("runtime {elapsed:.1}s under 120s"),
    );
    assert!(ok, "criterion 1 failed:\n{}", lines.join("\n"));
}

/// Criterion 2: oracle mode, (100,300,10), one epoch over the 60k training
/// set, averaged over seeds {1,2,3}. Pilot (recorded): 0.8618 / 0.8594 /
/// 0.8584, mean 0.8599; floor = pilot - 2 points = 0.8399.
#[test]
fn criterion_2_desk_scale_learning() {
    const PILOT_MEAN: f64 = 0.8599;
    const FLOOR: f64 = PILOT_MEAN - 0.02;
    let mut lines = Vec::new();
    let mut accs = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut cfg = config(Dims::new(100, 300, 10), Geometry::Px10);
        cfg.mode = Mode::Oracle;
        cfg.epochs = 1;
        cfg.seed = seed;
        let (metrics, _) = harness::train(&cfg).expect("training run");
        accs.push(metrics.final_accuracy());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let ok = check(
        &mut lines,
        "criterion 2 [desk-scale]",
        mean >= FLOOR,
        format!(
            "seed-averaged accuracy {mean:.4} (seeds 1,2,3 = {accs:?}) >= floor {FLOOR:.4} (pilot {PILOT_MEAN:.4} - 2pts)"
        ),
    );
    assert!(ok, "criterion 2 failed:\n{}", lines.join("\n"));
}

/// Criterion 3: sparsity statistics on a trained (400,400,10) checkpoint.
///
/// The d1-at-fresh-init floor (>= 0.3 spikes/neuron/sample) is not
/// attainable: the 0.7 reference figure traces to an initialization whose
/// literal scale (std about 20 in unit weights) saturates nearly all
/// weights, closes most start/stop boxes, and trains to only ~25-52% —
/// and even it does not reproduce 0.7 under any consistent count. The
/// corrected fan-based initialization measures ~0.07-0.11 masked gradient
/// spikes/neuron/sample over the first 1000 samples (~0.17-0.28 before the
/// box mask). The floor is asserted as written and expected to fail; every
/// other clause passes.
#[test]
fn criterion_3_sparsity_statistics() {
    let mut lines = Vec::new();
    let mut ok = true;

    let mut cfg = config(Dims::new(400, 400, 10), Geometry::Px20);
    cfg.mode = Mode::Oracle;
    cfg.epochs = 4;
    cfg.seed = 42;
    let (metrics, checkpoint) = harness::train(&cfg).expect("training run");

    // Input spikes per image over the 10k test set.
    let test = harness::load_test(&cfg).expect("test set");
    let net = checkpoint.net();
    let eval = harness::evaluate_snn_inference(&net, cfg.dims, &test, None).expect("snn eval");
    ok &= check(
        &mut lines,
        "criterion 3 [sparsity]",
        (90.0..=110.0).contains(&eval.input_spikes),
        format!("mean input spikes per image {:.1} in 100 +/- 10", eval.input_spikes),
    );
    ok &= check(
        &mut lines,
        "criterion 3 [sparsity]",
        (80.0..=140.0).contains(&eval.hidden_spikes),
        format!(
            "mean hidden spikes per inference {:.1} in 110 +/- 30 (4-step inference net, 10k test)",
            eval.hidden_spikes
        ),
    );

    let fresh = metrics.epochs.first().expect("epoch metrics");
    ok &= check(
        &mut lines,
        "criterion 3 [sparsity]",
        fresh.d1_window >= 0.3,
        format!(
            "d1 activity over first 1000 samples from fresh init {:.4} (raw {:.4}) >= 0.3 \
             [known-unattainable floor: the 0.7 reference assumed an initialization whose \
             literal scale does not train; kept as written]",
            fresh.d1_window, fresh.d1_raw_window
        ),
    );
    let trained = metrics.epochs.last().expect("epoch metrics");
    ok &= check(
        &mut lines,
        "criterion 3 [sparsity]",
        trained.d1_window < 0.05,
        format!(
            "d1 activity after training {:.4} < 0.05 (test accuracy {:.4})",
            trained.d1_window, trained.test_accuracy
        ),
    );
    assert!(ok, "criterion 3 failed:\n{}", lines.join("\n"));
}

/// Criterion 4: builder counts at (400,400,10) — exactly 3282 neurons (zero
/// tolerance) and the synapse census within 10% of the 200k partitioning
/// figure. The 200k figure counts same-direction weight copies once (weight
/// templates); the physical count (every copy materialized) and the
/// plastic-only figures are printed alongside.
#[test]
fn criterion_4_builder_counts() {
    let mut lines = Vec::new();
    let mut ok = true;
    let dims = Dims::new(400, 400, 10);
    let net = oracle::init(
        &oracle::InitConfig { scheme: InitScheme::GaussianFan, seed: 0 },
        dims.n_in,
        dims.n_hid,
        dims.n_out,
    );
    let circuit = build(dims, &net.w1, &net.w2).expect("build");
    let c = circuit.census;
    ok &= check(
        &mut lines,
        "criterion 4 [builder]",
        c.neurons == 3282,
        format!("neuron count {} == 3282", c.neurons),
    );
    let deviation = (c.template_total as f64 - 200_000.0).abs() / 200_000.0;
    ok &= check(
        &mut lines,
        "criterion 4 [builder]",
        deviation <= 0.10,
        format!(
            "template synapse count {} within 10% of 200k ({:.1}% off; physical {} of which plastic {}, template-plastic {}, fixed {})",
            c.template_total,
            deviation * 100.0,
            c.physical_total,
            c.physical_plastic,
            c.template_plastic,
            c.fixed
        ),
    );
    ok &= check(
        &mut lines,
        "criterion 4 [builder]",
        c.template_plastic as f64 / c.template_total as f64 > 0.5,
        format!(
            "plastic synapses dominate the census ({} of {})",
            c.template_plastic, c.template_total
        ),
    );
    assert!(ok, "criterion 4 failed:\n{}", lines.join("\n"));
}

/// Criterion 5: zero off-schedule spikes across a 10,000-frame training run;
/// steps 8 and 12 carry only gating-chain spikes. Zero tolerance.
#[test]
fn criterion_5_schedule_conformance() {
    let mut lines = Vec::new();
    let dims = Dims::new(100, 300, 10);
    let cfg = config(dims, Geometry::Px10);
    let train = harness::load_train(&cfg).expect("train set");
    let net = oracle::init(
        &oracle::InitConfig { scheme: InitScheme::GaussianFan, seed: 9 },
        dims.n_in,
        dims.n_hid,
        dims.n_out,
    );
    let mut circuit = build(dims, &net.w1, &net.w2).expect("build");
    circuit.set_validation(Validation::Schedule);
    circuit.bootstrap().expect("bootstrap");
    let order = synfire_core::dataio::epoch_order(9, 0, train.len());
    let mut ok = true;
    let mut late_step_spikes = 0u64;
    for &sample in order.iter().take(10_000) {
        let input = circuit
            .encode_sample(train.bits(sample as usize), train.label(sample as usize))
            .expect("encode");
        let trace = circuit
            .run_frame(&input, true, false)
            .expect("frame rejected (schedule violation is a criterion failure)");
        for step in [8usize, 12] {
            let rec = &trace.steps[step - 1];
            for (layer, spikes) in rec.spikes.iter().enumerate() {
                if !circuit.layout.chain.contains(&layer) {
                    late_step_spikes += spikes.len() as u64;
                }
            }
        }
    }
    ok &= check(
        &mut lines,
        "criterion 5 [schedule]",
        true,
        "10,000 frames with per-step schedule validation, zero violations".to_string(),
    );
    ok &= check(
        &mut lines,
        "criterion 5 [schedule]",
        late_step_spikes == 0,
        format!("steps 8 and 12 carry only gating-chain spikes ({late_step_spikes} data spikes)"),
    );
    assert!(ok, "criterion 5 failed:\n{}", lines.join("\n"));
}

/// Criterion 6: the learning rule's full truth table, zero tolerance.
#[test]
fn criterion_6_learning_rule_truth_table() {
    let mut lines = Vec::new();
    let rule = PlasticRule::default();
    let mut ok = true;
    for pre in [0u8, 1] {
        for post in [0u8, 1] {
            for r in [0u8, 1] {
                let expected = if pre == 1 && post == 1 { (2 * r as i16 - 1) * 2 } else { 0 };
                ok &= rule_delta(&rule, pre, post, r) == expected;
            }
        }
    }
    let ok = check(
        &mut lines,
        "criterion 6 [rule]",
        ok,
        "all 8 (pre, post, r) combinations give delta in {+2, -2, 0}".to_string(),
    );
    assert!(ok, "criterion 6 failed:\n{}", lines.join("\n"));
}

/// Criterion 7: the box derivative matches the central finite difference of
/// the surrogate at 1e-6 away from the kinks.
#[test]
fn criterion_7_surrogate_finite_difference() {
    let mut lines = Vec::new();
    let eps = 1e-3;
    let mut worst: f64 = 0.0;
    let mut x: f64 = -2.0;
    while x <= 3.0 {
        if (x - 0.0).abs() > 10.0 * eps && (x - 1.0).abs() > 10.0 * eps {
            let fd = (oracle::f_surrogate(x + eps) - oracle::f_surrogate(x - eps)) / (2.0 * eps);
            worst = worst.max((fd - oracle::f_box(x)).abs());
        }
        x += 0.0137;
    }
    let ok = check(
        &mut lines,
        "criterion 7 [surrogate]",
        worst < 1e-6,
        format!("max |finite difference - box derivative| = {worst:.2e} < 1e-6 off the edge set"),
    );
    assert!(ok, "criterion 7 failed:\n{}", lines.join("\n"));
}

/// Criterion 8: same config, same bytes — checkpoints and metrics — and the
/// save/load/eval round trip is exact. Checked for both oracle and circuit
/// training.
#[test]
fn criterion_8_determinism_and_checkpoint() {
    let mut lines = Vec::new();
    let mut ok = true;
    let dir = tempfile::tempdir().expect("tempdir");

    let run = |mode: Mode, limit: usize| {
        let mut cfg = config(Dims::new(100, 300, 10), Geometry::Px10);
        cfg.mode = mode;
        cfg.epochs = 1;
        cfg.seed = 5;
        cfg.train_limit = Some(limit);
        cfg.test_limit = Some(1000);
        harness::train(&cfg).expect("training run")
    };

    for (mode, limit, label) in [(Mode::Oracle, 3000, "oracle"), (Mode::Snn, 300, "snn")] {
        let (metrics_a, ck_a) = run(mode, limit);
        let (metrics_b, ck_b) = run(mode, limit);
        let pa = dir.path().join(format!("{label}_a.bin"));
        let pb = dir.path().join(format!("{label}_b.bin"));
        ck_a.save(&pa).expect("save");
        ck_b.save(&pb).expect("save");
        let bytes_equal = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
        ok &= check(
            &mut lines,
            "criterion 8 [determinism]",
            bytes_equal && metrics_a == metrics_b,
            format!("{label} mode: repeated run gives byte-identical checkpoint and equal metrics"),
        );

        let reloaded = synfire_core::Checkpoint::load(&pa).expect("load");
        let test = {
            let cfg = config(Dims::new(100, 300, 10), Geometry::Px10);
            harness::load_test(&cfg).expect("test set")
        };
        let before = harness::evaluate_oracle(&ck_a.net(), &test, Some(2000)).expect("eval");
        let after = harness::evaluate_oracle(&reloaded.net(), &test, Some(2000)).expect("eval");
        ok &= check(
            &mut lines,
            "criterion 8 [determinism]",
            before.accuracy == after.accuracy && before.mse == after.mse && ck_a == reloaded,
            format!(
                "{label} mode: save/load/eval round trip exact (accuracy {:.4})",
                after.accuracy
            ),
        );
    }
    assert!(ok, "criterion 8 failed:\n{}", lines.join("\n"));
}
