//! Harness checks that need the real MNIST files. Each test skips with a
//! notice when the files are absent (the acceptance suite requires them).

use std::path::{Path, PathBuf};
use synfire_core::circuit::{build, Dims};
use synfire_core::dataio::Geometry;
use synfire_core::harness::{self, Mode, RunConfig};
use synfire_core::oracle;

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var("MNIST_DIR").unwrap_or_else(|_| "/root/data/mnist".to_string());
    let dir = PathBuf::from(dir);
    if dir.join("train-images-idx3-ubyte").exists() {
        Some(dir)
    } else {
        eprintln!("skipping: MNIST not found at {} (see scripts/fetch_mnist.sh)", dir.display());
        None
    }
}

fn config(dims: Dims, geometry: Geometry, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::new(dims, geometry);
    cfg.train_images = dir.join("train-images-idx3-ubyte");
    cfg.train_labels = dir.join("train-labels-idx1-ubyte");
    cfg.test_images = dir.join("t10k-images-idx3-ubyte");
    cfg.test_labels = dir.join("t10k-labels-idx1-ubyte");
    cfg
}

/// The official containers hold 60k/10k samples; preprocessing is stable
/// across loads and averages about 100 set bits per cropped test image.
#[test]
fn official_set_counts_and_preprocessing() {
    let Some(dir) = mnist_dir() else { return };
    let cfg = config(Dims::new(400, 400, 10), Geometry::Px20, &dir);
    let train = harness::load_train(&cfg).unwrap();
    let test = harness::load_test(&cfg).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    let test_again = harness::load_test(&cfg).unwrap();
    assert_eq!(test.fingerprint(), test_again.fingerprint());
    let mean_bits = test
        .images
        .iter()
        .map(|img| img.iter().filter(|&&b| b == 1).count())
        .sum::<usize>() as f64
        / test.len() as f64;
    assert!((90.0..=110.0).contains(&mean_bits), "mean set bits {mean_bits}");
}

/// An untrained network classifies at chance level (silent outputs count as
/// wrong). Pinned seed; the value is deterministic.
#[test]
fn random_init_evaluates_at_chance() {
    let Some(dir) = mnist_dir() else { return };
    let cfg = config(Dims::new(400, 400, 10), Geometry::Px20, &dir);
    let net = oracle::init(
        &oracle::InitConfig { scheme: oracle::InitScheme::GaussianFan, seed: 11 },
        400,
        400,
        10,
    );
    let test = harness::load_test(&cfg).unwrap();
    let eval = harness::evaluate_oracle(&net, &test, None).unwrap();
    assert!(
        (0.08..=0.12).contains(&eval.accuracy),
        "random-init accuracy {} outside chance bracket",
        eval.accuracy
    );
}

/// Trace content: an untrained net emits gradient-carrier rows at steps 6
/// and 10; a trained net on a correctly classified sample emits no error
/// rows at step 4.
#[test]
fn trace_gradient_rows_track_training() {
    let Some(dir) = mnist_dir() else { return };
    let dims = Dims::new(100, 300, 10);
    let cfg = config(dims, Geometry::Px10, &dir);
    let train = harness::load_train(&cfg).unwrap();

    // Fresh net: some of the first training samples must produce raw
    // gradient spikes in the carrier layer.
    let net = oracle::init(
        &oracle::InitConfig { scheme: oracle::InitScheme::GaussianFan, seed: 1 },
        dims.n_in,
        dims.n_hid,
        dims.n_out,
    );
    let mut circuit = build(dims, &net.w1, &net.w2).unwrap();
    circuit.bootstrap().unwrap();
    let mut carrier_rows = 0usize;
    for i in 0..20 {
        let input = circuit.encode_sample(train.bits(i), train.label(i)).unwrap();
        let trace = circuit.run_frame(&input, true, false).unwrap();
        carrier_rows += trace.spikes_at(6, circuit.layout.h_t).len()
            + trace.spikes_at(10, circuit.layout.h_t).len();
    }
    assert!(carrier_rows > 0, "untrained net produced no gradient-carrier spikes");

    // Trained net, correctly classified sample: no error spikes at step 4
    // and no weight deltas in the frame.
    let mut tcfg = cfg.clone();
    tcfg.mode = Mode::Oracle;
    tcfg.epochs = 1;
    tcfg.seed = 1;
    let (_, checkpoint) = harness::train(&tcfg).unwrap();
    let tnet = checkpoint.net();
    let correct = (0..train.len())
        .find(|&i| {
            let fwd = oracle::forward(&tnet, train.bits(i)).unwrap();
            let label = train.label(i);
            fwd.o.iter().position(|&v| v == 1) == Some(label)
                && fwd.o.iter().filter(|&&v| v == 1).count() == 1
        })
        .expect("trained net classifies something correctly");
    let mut circuit = build(dims, &checkpoint.w1, &checkpoint.w2).unwrap();
    circuit.bootstrap().unwrap();
    let input = circuit.encode_sample(train.bits(correct), train.label(correct)).unwrap();
    let trace = circuit.run_frame(&input, true, false).unwrap();
    assert!(trace.spikes_at(4, circuit.layout.d2_plus).is_empty());
    assert!(trace.spikes_at(4, circuit.layout.d2_minus).is_empty());
    assert!(trace.steps.iter().all(|s| s.deltas.is_empty()));
}

/// Training in lockstep mode completes cleanly and returns a usable
/// checkpoint.
#[test]
fn train_in_lockstep_mode_passes() {
    let Some(dir) = mnist_dir() else { return };
    let mut cfg = config(Dims::new(100, 300, 10), Geometry::Px10, &dir);
    cfg.mode = Mode::Lockstep;
    cfg.train_limit = Some(150);
    cfg.test_limit = Some(500);
    let (metrics, checkpoint) = harness::train(&cfg).unwrap();
    assert_eq!(metrics.trained_samples, 150);
    assert_eq!(checkpoint.dims, cfg.dims);
}
