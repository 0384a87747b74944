//! Training, evaluation, lockstep verification, and trace export drivers.
//!
//! The same run configuration drives three modes: `oracle` trains with the
//! closed-form reference alone, `snn` trains by simulating the gated circuit
//! frame by frame, and `lockstep` runs both from identical initialization and
//! compares every spike set and both weight matrices after every frame.

use crate::checkpoint::Checkpoint;
use crate::circuit::{build, build_inference, CircuitNetwork, Dims};
use crate::dataio::{self, Dataset, Geometry};
use crate::engine::{FrameTrace, Validation};
use crate::oracle::{self, Forward, GradientBundle, InitConfig, InitScheme, OracleNet};
use crate::plasticity::verify_sync;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Execution mode of `train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Oracle,
    Snn,
    Lockstep,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "oracle" => Some(Mode::Oracle),
            "snn" => Some(Mode::Snn),
            "lockstep" => Some(Mode::Lockstep),
            _ => None,
        }
    }
}

/// Everything a run needs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dims: Dims,
    pub geometry: Geometry,
    pub epochs: u32,
    pub seed: u64,
    pub init: InitScheme,
    pub mode: Mode,
    pub learning: bool,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Cap on training samples per epoch (whole set when absent).
    pub train_limit: Option<usize>,
    /// Cap on evaluation samples (whole set when absent).
    pub test_limit: Option<usize>,
    /// Evaluate through the reduced 4-step inference network instead of the
    /// closed-form forward pass.
    pub snn_eval: bool,
    /// Frames between weight-copy synchronization checks in snn mode.
    pub sync_check_every: usize,
}

impl RunConfig {
    pub fn new(dims: Dims, geometry: Geometry) -> Self {
        RunConfig {
            dims,
            geometry,
            epochs: 1,
            seed: 1,
            init: InitScheme::GaussianFan,
            mode: Mode::Oracle,
            learning: true,
            train_images: PathBuf::new(),
            train_labels: PathBuf::new(),
            test_images: PathBuf::new(),
            test_labels: PathBuf::new(),
            train_limit: None,
            test_limit: None,
            snn_eval: false,
            sync_check_every: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dims.n_in != self.geometry.pixels() {
            return Err(HarnessError::GeometryMismatch {
                n_in: self.dims.n_in,
                geometry: self.geometry.name(),
                pixels: self.geometry.pixels(),
            });
        }
        if self.dims.n_out == 0 || self.dims.n_out > 10 {
            return Err(HarnessError::BadOutputCount { n_out: self.dims.n_out });
        }
        Ok(())
    }

    pub fn init_config(&self) -> InitConfig {
        InitConfig { scheme: self.init, seed: self.seed }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("n_in {n_in} does not match geometry {geometry} ({pixels} pixels)")]
    GeometryMismatch { n_in: usize, geometry: &'static str, pixels: usize },
    #[error("n_out {n_out} must be in 1..=10 for digit labels")]
    BadOutputCount { n_out: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Build(#[from] crate::circuit::BuildError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Encode(#[from] crate::circuit::EncodeError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Sync(#[from] crate::plasticity::SyncError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("lockstep divergence at sample {sample} frame {frame} step {step} layer {layer}")]
    LockstepDivergence { sample: usize, frame: u64, step: u32, layer: String },
    #[error("sample id {id} outside dataset of {len} samples")]
    SampleOutOfRange { id: usize, len: usize },
}

/// Per-epoch measurements.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub test_accuracy: f64,
    /// Mean squared error 0.5 * |o - t|^2 over the evaluation set.
    pub test_mse: f64,
    /// Mean spikes per inference in the input, hidden, and output layers.
    pub input_spikes: f64,
    pub hidden_spikes: f64,
    pub output_spikes: f64,
    /// Masked backpropagated-gradient spikes per hidden neuron per sample
    /// over the first window of this epoch.
    pub d1_window: f64,
    /// Same, before the box mask (what the gradient carrier layer fires).
    pub d1_raw_window: f64,
    /// Total spikes of all layers across this epoch's training frames.
    pub energy_proxy_spikes: u64,
}

/// Full run record.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochMetrics>,
    pub trained_samples: u64,
}

impl RunMetrics {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_accuracy)
    }
}

/// Samples used for the per-epoch activity window.
pub const D1_WINDOW: usize = 1000;

/// Evaluation result with per-class counts. `confusion[actual][predicted]`,
/// with column 10 counting silent (unclassified) outputs.
#[derive(Clone, Debug, Serialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub mse: f64,
    pub samples: usize,
    pub confusion: Vec<Vec<u64>>,
    pub input_spikes: f64,
    pub hidden_spikes: f64,
    pub output_spikes: f64,
}

/// First observed difference between the circuit and the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct Divergence {
    pub sample: usize,
    pub frame: u64,
    pub step: u32,
    pub layer: String,
    pub expected: Vec<u32>,
    pub actual: Vec<u32>,
}

/// Outcome of a lockstep run.
#[derive(Clone, Debug, Serialize)]
pub struct LockstepReport {
    pub samples: usize,
    pub frames: u64,
    pub divergence: Option<Divergence>,
    /// Rule firings that were absorbed by the weight-range bounds. A nonzero
    /// count on the second-layer family means the negated transpose copy can
    /// no longer mirror its forward matrix exactly (the range is asymmetric),
    /// which surfaces as a sync divergence.
    pub saturation_events: u64,
}

impl LockstepReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none()
    }
}

pub fn load_train(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    load_split(&cfg.train_images, &cfg.train_labels, cfg.geometry)
}

pub fn load_test(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    load_split(&cfg.test_images, &cfg.test_labels, cfg.geometry)
}

pub fn load_split(
    images: &Path,
    labels: &Path,
    geometry: Geometry,
) -> Result<Dataset, HarnessError> {
    let raw = dataio::load_idx(images, labels)?;
    Ok(dataio::preprocess(&raw, geometry))
}

fn indices_of(bits: &[u8]) -> Vec<u32> {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(i, _)| i as u32)
        .collect()
}

fn count_ones(bits: &[u8]) -> u64 {
    bits.iter().filter(|&&b| b == 1).count() as u64
}

/// Total circuit spikes for one 12-step frame, derived from the oracle
/// quantities (identical to counting the simulated trace).
fn frame_spike_count(x_ones: u64, fwd: &Forward, bundle: &GradientBundle) -> u64 {
    let h = count_ones(&fwd.h);
    let h_start = count_ones(&fwd.h_start);
    let h_stop = count_ones(&fwd.h_stop);
    let b_h = count_ones(&fwd.b_h);
    let o = count_ones(&fwd.o);
    let o_start = count_ones(&fwd.o_start);
    let o_stop = count_ones(&fwd.o_stop);
    let d2p = count_ones(&bundle.d2_plus);
    let d2m = count_ones(&bundle.d2_minus);
    let d1p_raw = count_ones(&bundle.d1_plus_raw);
    let d1m_raw = count_ones(&bundle.d1_minus_raw);
    let d1p = count_ones(&bundle.d1_plus);
    let d1m = count_ones(&bundle.d1_minus);
    let chain = 12;
    x_ones // step 1: x
        + x_ones + h + h_start + h_stop // step 2: m_x, h, h<, h>
        + h + o + o_start + o_stop + 1 + b_h // step 3: m_h, o family, t, b_h
        + d2p + d2m // step 4
        + 2 * h + 3 * d2p + d2m // step 5: h, hT, o family = d2+, oT- = d2-
        + d1p_raw // step 6: hT
        + x_ones + 3 * d1p // step 7: x, h family
        + 2 * h + 3 * d2m + d2p // step 9
        + d1m_raw // step 10
        + x_ones + 3 * d1m // step 11
        + chain
}

/// Oracle forward evaluation over a dataset.
pub fn evaluate_oracle(
    net: &OracleNet,
    dataset: &Dataset,
    limit: Option<usize>,
) -> Result<EvalResult, HarnessError> {
    let n = limit.map_or(dataset.len(), |l| l.min(dataset.len()));
    if n == 0 {
        return Err(HarnessError::EmptyDataset);
    }
    let n_out = net.n_out();
    let mut correct = 0u64;
    let mut mse = 0.0f64;
    let mut confusion = vec![vec![0u64; 11]; 10];
    let (mut sx, mut sh, mut so) = (0u64, 0u64, 0u64);
    for i in 0..n {
        let bits = dataset.bits(i);
        let fwd = oracle::forward(net, bits)?;
        let target = dataset.one_hot(i, n_out);
        mse += oracle::loss(&fwd.o, &target);
        sx += count_ones(bits);
        sh += count_ones(&fwd.h);
        so += count_ones(&fwd.o);
        let predicted = fwd.o.iter().position(|&v| v == 1);
        let actual = dataset.label(i);
        match predicted {
            Some(p) => {
                confusion[actual][p] += 1;
                if p == actual {
                    correct += 1;
                }
            }
            None => confusion[actual][10] += 1,
        }
    }
    Ok(EvalResult {
        accuracy: correct as f64 / n as f64,
        mse: mse / n as f64,
        samples: n,
        confusion,
        input_spikes: sx as f64 / n as f64,
        hidden_spikes: sh as f64 / n as f64,
        output_spikes: so as f64 / n as f64,
    })
}

/// Evaluation through the reduced 4-step inference circuit.
pub fn evaluate_snn_inference(
    net: &OracleNet,
    dims: Dims,
    dataset: &Dataset,
    limit: Option<usize>,
) -> Result<EvalResult, HarnessError> {
    let n = limit.map_or(dataset.len(), |l| l.min(dataset.len()));
    if n == 0 {
        return Err(HarnessError::EmptyDataset);
    }
    let mut circuit = build_inference(dims, &net.w1, &net.w2)?;
    circuit.bootstrap()?;
    let mut correct = 0u64;
    let mut mse = 0.0f64;
    let mut confusion = vec![vec![0u64; 11]; 10];
    let (mut sx, mut sh, mut so) = (0u64, 0u64, 0u64);
    for i in 0..n {
        let input = circuit.encode_sample(dataset.bits(i), dataset.label(i))?;
        let trace = circuit.run_frame(&input, false, false)?;
        sx += trace.spikes_at(1, circuit.layout.x).len() as u64;
        sh += trace.spikes_at(2, circuit.layout.h).len() as u64;
        let o_spikes = trace.spikes_at(3, circuit.layout.o);
        so += o_spikes.len() as u64;
        let mut o_bits = vec![0u8; dims.n_out];
        for &k in o_spikes {
            o_bits[k as usize] = 1;
        }
        mse += oracle::loss(&o_bits, &dataset.one_hot(i, dims.n_out));
        let actual = dataset.label(i);
        match circuit.classify(&trace) {
            Some(p) => {
                confusion[actual][p] += 1;
                if p == actual {
                    correct += 1;
                }
            }
            None => confusion[actual][10] += 1,
        }
    }
    Ok(EvalResult {
        accuracy: correct as f64 / n as f64,
        mse: mse / n as f64,
        samples: n,
        confusion,
        input_spikes: sx as f64 / n as f64,
        hidden_spikes: sh as f64 / n as f64,
        output_spikes: so as f64 / n as f64,
    })
}

struct WindowStats {
    d1: u64,
    d1_raw: u64,
    samples: u64,
}

impl WindowStats {
    fn new() -> Self {
        WindowStats { d1: 0, d1_raw: 0, samples: 0 }
    }

    fn open(&self) -> bool {
        (self.samples as usize) < D1_WINDOW
    }

    fn record_bundle(&mut self, bundle: &GradientBundle) {
        if self.open() {
            self.d1 += count_ones(&bundle.d1_plus) + count_ones(&bundle.d1_minus);
            self.d1_raw +=
                count_ones(&bundle.d1_plus_raw) + count_ones(&bundle.d1_minus_raw);
            self.samples += 1;
        }
    }

    /// Trace view of the same quantities: the gradient carrier fires the raw
    /// gradient at steps 6 and 10, the hidden layer fires the masked one at
    /// steps 7 and 11.
    fn record_trace(&mut self, trace: &FrameTrace, circuit: &CircuitNetwork) {
        if self.open() {
            let l = &circuit.layout;
            self.d1 += (trace.spikes_at(7, l.h).len() + trace.spikes_at(11, l.h).len()) as u64;
            self.d1_raw +=
                (trace.spikes_at(6, l.h_t).len() + trace.spikes_at(10, l.h_t).len()) as u64;
            self.samples += 1;
        }
    }

    fn per_neuron(&self, n_hid: usize) -> (f64, f64) {
        if self.samples == 0 {
            return (0.0, 0.0);
        }
        let denom = (self.samples * n_hid as u64) as f64;
        (self.d1 as f64 / denom, self.d1_raw as f64 / denom)
    }
}

/// Trains per the configured mode and returns metrics plus the final
/// checkpoint. In lockstep mode the run aborts with a diagnostic on the
/// first divergence.
pub fn train(cfg: &RunConfig) -> Result<(RunMetrics, Checkpoint), HarnessError> {
    cfg.validate()?;
    let train_set = load_train(cfg)?;
    let test_set = load_test(cfg)?;
    if train_set.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let mut net = oracle::init(&cfg.init_config(), cfg.dims.n_in, cfg.dims.n_hid, cfg.dims.n_out);
    let mut circuit = match cfg.mode {
        Mode::Oracle => None,
        Mode::Snn => {
            let mut c = build(cfg.dims, &net.w1, &net.w2)?;
            c.bootstrap()?;
            Some(c)
        }
        Mode::Lockstep => {
            let n = cfg.train_limit.unwrap_or(train_set.len());
            let report = lockstep(cfg, n)?;
            if let Some(d) = report.divergence {
                return Err(HarnessError::LockstepDivergence {
                    sample: d.sample,
                    frame: d.frame,
                    step: d.step,
                    layer: d.layer,
                });
            }
            None
        }
    };
    if cfg.mode == Mode::Lockstep {
        // Clean pass: re-run the oracle over the same prefix so the returned
        // checkpoint reflects the verified training.
        let n = cfg.train_limit.unwrap_or(train_set.len()).min(train_set.len());
        for sample in 0..n {
            let bits = train_set.bits(sample);
            let target = train_set.one_hot(sample, cfg.dims.n_out);
            let fwd = oracle::forward(&net, bits)?;
            let bundle = oracle::gradients(&net, &fwd, &target)?;
            oracle::update(&mut net, bits, &fwd, &bundle);
        }
        let eval = evaluate_oracle(&net, &test_set, cfg.test_limit)?;
        let metrics = RunMetrics {
            epochs: vec![EpochMetrics {
                epoch: 0,
                test_accuracy: eval.accuracy,
                test_mse: eval.mse,
                input_spikes: eval.input_spikes,
                hidden_spikes: eval.hidden_spikes,
                output_spikes: eval.output_spikes,
                d1_window: 0.0,
                d1_raw_window: 0.0,
                energy_proxy_spikes: 0,
            }],
            trained_samples: n as u64,
        };
        let checkpoint = Checkpoint {
            dims: cfg.dims,
            geometry: cfg.geometry,
            init_seed: cfg.seed,
            epochs: 1,
            scheme: cfg.init,
            w1: net.w1.clone(),
            w2: net.w2.clone(),
        };
        return Ok((metrics, checkpoint));
    }

    let mut metrics = RunMetrics { epochs: Vec::new(), trained_samples: 0 };
    for epoch in 0..cfg.epochs {
        let order = dataio::epoch_order(cfg.seed, epoch, train_set.len());
        let take = cfg.train_limit.map_or(order.len(), |l| l.min(order.len()));
        let mut window = WindowStats::new();
        let mut energy = 0u64;
        for (pos, &sample) in order[..take].iter().enumerate() {
            let bits = train_set.bits(sample as usize);
            match &mut circuit {
                None => {
                    let target = train_set.one_hot(sample as usize, cfg.dims.n_out);
                    let fwd = oracle::forward(&net, bits)?;
                    let bundle = oracle::gradients(&net, &fwd, &target)?;
                    window.record_bundle(&bundle);
                    energy += frame_spike_count(count_ones(bits), &fwd, &bundle);
                    if cfg.learning {
                        oracle::update(&mut net, bits, &fwd, &bundle);
                    }
                }
                Some(c) => {
                    let input = c.encode_sample(bits, train_set.label(sample as usize))?;
                    let trace = c.run_frame(&input, cfg.learning, false)?;
                    window.record_trace(&trace, c);
                    energy += trace.total_spikes();
                    if cfg.sync_check_every > 0 && (pos + 1) % cfg.sync_check_every == 0 {
                        for group in &c.sync_groups {
                            crate::plasticity::require_sync(group, |id| {
                                c.net.group_weights(id).unwrap().clone()
                            })?;
                        }
                    }
                }
            }
            metrics.trained_samples += 1;
        }
        // In snn mode the simulated weights are authoritative.
        if let Some(c) = &circuit {
            net.w1 = c.w1().clone();
            net.w2 = c.w2().clone();
        }
        let eval = if cfg.snn_eval {
            evaluate_snn_inference(&net, cfg.dims, &test_set, cfg.test_limit)?
        } else {
            evaluate_oracle(&net, &test_set, cfg.test_limit)?
        };
        let (d1, d1_raw) = window.per_neuron(cfg.dims.n_hid);
        metrics.epochs.push(EpochMetrics {
            epoch,
            test_accuracy: eval.accuracy,
            test_mse: eval.mse,
            input_spikes: eval.input_spikes,
            hidden_spikes: eval.hidden_spikes,
            output_spikes: eval.output_spikes,
            d1_window: d1,
            d1_raw_window: d1_raw,
            energy_proxy_spikes: energy,
        });
    }
    let checkpoint = Checkpoint {
        dims: cfg.dims,
        geometry: cfg.geometry,
        init_seed: cfg.seed,
        epochs: cfg.epochs,
        scheme: cfg.init,
        w1: net.w1.clone(),
        w2: net.w2.clone(),
    };
    Ok((metrics, checkpoint))
}

/// Runs the circuit and the oracle in lockstep over the first `n_samples` of
/// the training set and reports either a clean pass or the first divergence.
pub fn lockstep(cfg: &RunConfig, n_samples: usize) -> Result<LockstepReport, HarnessError> {
    cfg.validate()?;
    let train_set = load_train(cfg)?;
    let mut net = oracle::init(&cfg.init_config(), cfg.dims.n_in, cfg.dims.n_hid, cfg.dims.n_out);
    let mut circuit = build(cfg.dims, &net.w1, &net.w2)?;
    circuit.set_validation(Validation::Full);
    circuit.bootstrap()?;
    let n = n_samples.min(train_set.len());
    let samples: Vec<(Vec<u8>, usize)> =
        (0..n).map(|i| (train_set.bits(i).to_vec(), train_set.label(i))).collect();
    lockstep_nets(&mut net, &mut circuit, &samples, n)
}

/// Lockstep over prebuilt nets; the entry point fault-injection tests use.
pub fn lockstep_nets(
    net: &mut OracleNet,
    circuit: &mut CircuitNetwork,
    samples: &[(Vec<u8>, usize)],
    n_samples: usize,
) -> Result<LockstepReport, HarnessError> {
    let n = n_samples.min(samples.len());
    let mut frames = 0u64;
    let mut saturation_events = 0u64;
    for (sample, (bits, label)) in samples.iter().take(n).enumerate() {
        let label = *label;
        let mut target = vec![0u8; net.n_out()];
        target[label] = 1;
        let fwd = oracle::forward(net, bits)?;
        let bundle = oracle::gradients(net, &fwd, &target)?;
        let input = circuit.encode_sample(bits, label)?;
        let trace = circuit.run_frame(&input, true, false)?;
        frames += 1;
        saturation_events +=
            trace.steps.iter().flat_map(|s| &s.deltas).filter(|(_, _, _, d)| *d == 0).count() as u64;
        if let Some(divergence) = compare_frame(circuit, &trace, bits, &fwd, &bundle, sample) {
            return Ok(LockstepReport {
                samples: sample + 1,
                frames,
                divergence: Some(divergence),
                saturation_events,
            });
        }
        oracle::update(net, bits, &fwd, &bundle);
        // Weight agreement after every frame, all five copies in sync.
        if circuit.w1() != &net.w1 {
            let (diff, at) = circuit.w1().max_abs_diff(&net.w1);
            return Ok(LockstepReport {
                samples: sample + 1,
                frames,
                divergence: Some(Divergence {
                    sample,
                    frame: trace.frame,
                    step: 12,
                    layer: format!("W1 (|diff|={diff} at {at:?})"),
                    expected: Vec::new(),
                    actual: Vec::new(),
                }),
                saturation_events,
            });
        }
        if circuit.w2() != &net.w2 {
            let (diff, at) = circuit.w2().max_abs_diff(&net.w2);
            return Ok(LockstepReport {
                samples: sample + 1,
                frames,
                divergence: Some(Divergence {
                    sample,
                    frame: trace.frame,
                    step: 12,
                    layer: format!("W2 (|diff|={diff} at {at:?})"),
                    expected: Vec::new(),
                    actual: Vec::new(),
                }),
                saturation_events,
            });
        }
        for group in &circuit.sync_groups {
            let report =
                verify_sync(group, |id| circuit.net.group_weights(id).unwrap().clone())?;
            if report.max_abs_discrepancy != 0 {
                return Ok(LockstepReport {
                    samples: sample + 1,
                    frames,
                    divergence: Some(Divergence {
                        sample,
                        frame: trace.frame,
                        step: 12,
                        layer: format!(
                            "sync {} (|diff|={} at {:?})",
                            report.name, report.max_abs_discrepancy, report.worst
                        ),
                        expected: Vec::new(),
                        actual: Vec::new(),
                    }),
                    saturation_events,
                });
            }
        }
    }
    Ok(LockstepReport { samples: n, frames, divergence: None, saturation_events })
}

/// Compares one simulated frame against the oracle's step-by-step identity
/// map. Returns the first mismatch.
fn compare_frame(
    circuit: &CircuitNetwork,
    trace: &FrameTrace,
    x_bits: &[u8],
    fwd: &Forward,
    bundle: &GradientBundle,
    sample: usize,
) -> Option<Divergence> {
    let l = &circuit.layout;
    let x = indices_of(x_bits);
    let h = indices_of(&fwd.h);
    let d2p = indices_of(&bundle.d2_plus);
    let d2m = indices_of(&bundle.d2_minus);
    let d1p = indices_of(&bundle.d1_plus);
    let d1m = indices_of(&bundle.d1_minus);
    let checks: Vec<(u32, usize, &str, Vec<u32>)> = vec![
        (1, l.x, "x", x.clone()),
        (2, l.m_x, "m_x", x.clone()),
        (2, l.h, "h", h.clone()),
        (2, l.h_start, "h<", indices_of(&fwd.h_start)),
        (2, l.h_stop, "h>", indices_of(&fwd.h_stop)),
        (3, l.m_h, "m_h", h.clone()),
        (3, l.o, "o", indices_of(&fwd.o)),
        (3, l.o_start, "o<", indices_of(&fwd.o_start)),
        (3, l.o_stop, "o>", indices_of(&fwd.o_stop)),
        (3, l.b_h, "b_h", indices_of(&fwd.b_h)),
        (4, l.d2_plus, "d2+", d2p.clone()),
        (4, l.d2_minus, "d2-", d2m.clone()),
        (5, l.h, "h", h.clone()),
        (5, l.h_t, "hT", h.clone()),
        (5, l.o, "o", d2p.clone()),
        (5, l.o_start, "o<", d2p.clone()),
        (5, l.o_stop, "o>", d2p.clone()),
        (5, l.o_t_neg, "oT-", d2m.clone()),
        (6, l.h_t, "hT", indices_of(&bundle.d1_plus_raw)),
        (7, l.x, "x", x.clone()),
        (7, l.h, "h", d1p.clone()),
        (7, l.h_start, "h<", d1p.clone()),
        (7, l.h_stop, "h>", d1p.clone()),
        (9, l.h, "h", h.clone()),
        (9, l.h_t, "hT", h.clone()),
        (9, l.o, "o", d2m.clone()),
        (9, l.o_start, "o<", d2m.clone()),
        (9, l.o_stop, "o>", d2m.clone()),
        (9, l.o_t_neg, "oT-", d2p.clone()),
        (10, l.h_t, "hT", indices_of(&bundle.d1_minus_raw)),
        (11, l.x, "x", x.clone()),
        (11, l.h, "h", d1m.clone()),
        (11, l.h_start, "h<", d1m.clone()),
        (11, l.h_stop, "h>", d1m.clone()),
    ];
    for (step, layer, name, expected) in checks {
        let actual = trace.spikes_at(step, layer);
        if actual != expected.as_slice() {
            return Some(Divergence {
                sample,
                frame: trace.frame,
                step,
                layer: name.to_string(),
                expected,
                actual: actual.to_vec(),
            });
        }
    }
    None
}

/// Runs frames for the requested samples and hands each trace to `sink`.
/// Learning stays on so gradient activity is visible, matching training.
pub fn trace_samples(
    cfg: &RunConfig,
    sample_ids: &[usize],
    mut sink: impl FnMut(usize, &CircuitNetwork, &FrameTrace) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    cfg.validate()?;
    let train_set = load_train(cfg)?;
    let net = oracle::init(&cfg.init_config(), cfg.dims.n_in, cfg.dims.n_hid, cfg.dims.n_out);
    let mut circuit = build(cfg.dims, &net.w1, &net.w2)?;
    circuit.bootstrap()?;
    for &id in sample_ids {
        if id >= train_set.len() {
            return Err(HarnessError::SampleOutOfRange { id, len: train_set.len() });
        }
        let input = circuit.encode_sample(train_set.bits(id), train_set.label(id))?;
        let trace = circuit.run_frame(&input, cfg.learning, false)?;
        sink(id, &circuit, &trace)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let cfg = RunConfig::new(Dims::new(100, 30, 10), Geometry::Px10);
        assert!(cfg.validate().is_ok());
        let cfg = RunConfig::new(Dims::new(400, 30, 10), Geometry::Px10);
        assert!(matches!(cfg.validate(), Err(HarnessError::GeometryMismatch { .. })));
        let cfg = RunConfig::new(Dims::new(100, 30, 11), Geometry::Px10);
        assert!(matches!(cfg.validate(), Err(HarnessError::BadOutputCount { .. })));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let net = oracle::init(
            &InitConfig { scheme: InitScheme::GaussianFan, seed: 1 },
            4,
            3,
            2,
        );
        let empty = Dataset { geometry: Geometry::Px20, images: Vec::new(), labels: Vec::new() };
        assert!(matches!(
            evaluate_oracle(&net, &empty, None),
            Err(HarnessError::EmptyDataset)
        ));
    }

    #[test]
    fn frame_spike_count_zero_activity() {
        let fwd = Forward {
            h: vec![0; 4],
            o: vec![0; 2],
            h_start: vec![0; 4],
            h_stop: vec![0; 4],
            b_h: vec![0; 4],
            o_start: vec![0; 2],
            o_stop: vec![0; 2],
        };
        let bundle = GradientBundle {
            d2_plus: vec![0; 2],
            d2_minus: vec![0; 2],
            d1_plus_raw: vec![0; 4],
            d1_minus_raw: vec![0; 4],
            d1_plus: vec![0; 4],
            d1_minus: vec![0; 4],
        };
        // Only the target spike and the 12 chain spikes remain.
        assert_eq!(frame_spike_count(0, &fwd, &bundle), 13);
    }
}
