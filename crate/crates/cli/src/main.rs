//! `synfire` — train, evaluate, verify, and trace the gated spiking
//! backpropagation network.

mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{parse_dims, RunArgs};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use synfire_core::checkpoint::Checkpoint;
use synfire_core::circuit::build;
use synfire_core::engine::export_spike_rows;
use synfire_core::harness::{self, RunConfig};
use synfire_core::oracle::init;

#[derive(Parser)]
#[command(name = "synfire", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per the configured mode and write a checkpoint plus metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for checkpoint.bin and metrics.json.
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a test set, printing accuracy and the
    /// confusion counts.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run the simulator and the closed-form reference in lockstep and
    /// report the first divergence, if any. Exit code 0 means a clean pass.
    Lockstep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of training samples to compare.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Write per-sample spike traces (frame,step,layer,neuron rows).
    Trace {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated training sample indices.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        sample_ids: Vec<usize>,
        #[arg(long, default_value = "traces")]
        out_dir: PathBuf,
    },
    /// Write the human-readable network description (layers, synapse
    /// groups, schedule, census).
    ExportNet {
        /// Layer sizes as N_INxN_HIDxN_OUT.
        #[arg(long, default_value = "400x400x10")]
        dims: String,
        /// Take dimensions and weights from a checkpoint instead.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the checkpoint weights as diffable text.
        #[arg(long)]
        weights_text: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Die quietly when stdout is a closed pipe (e.g. piping into head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Train { run, out_dir } => cmd_train(&run.resolve()?, &out_dir),
        Command::Eval { run, checkpoint } => cmd_eval(&run, &checkpoint),
        Command::Lockstep { run, samples } => cmd_lockstep(&run.resolve()?, samples),
        Command::Trace { run, sample_ids, out_dir } => {
            cmd_trace(&run.resolve()?, &sample_ids, &out_dir)
        }
        Command::ExportNet { dims, checkpoint, out, weights_text } => {
            cmd_export_net(&dims, checkpoint.as_deref(), out.as_deref(), weights_text.as_deref())
        }
    }
}

fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode> {
    let (metrics, checkpoint) = harness::train(cfg).context("training run failed")?;
    for e in &metrics.epochs {
        println!(
            "epoch {:>3}  accuracy {:.4}  mse {:.4}  spikes/inference x {:.1} h {:.1} o {:.2}  d1/neuron {:.4} (raw {:.4})  energy {} spikes",
            e.epoch + 1,
            e.test_accuracy,
            e.test_mse,
            e.input_spikes,
            e.hidden_spikes,
            e.output_spikes,
            e.d1_window,
            e.d1_raw_window,
            e.energy_proxy_spikes
        );
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let ck_path = out_dir.join("checkpoint.bin");
    checkpoint.save(&ck_path).context("writing checkpoint")?;
    let metrics_path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics)?;
    std::fs::write(&metrics_path, json).context("writing metrics")?;
    println!(
        "final accuracy {:.4}; checkpoint {} metrics {}",
        metrics.final_accuracy(),
        ck_path.display(),
        metrics_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(run: &RunArgs, checkpoint: &Path) -> Result<ExitCode> {
    let ck = Checkpoint::load(checkpoint).context("loading checkpoint")?;
    let mut cfg = run.resolve()?;
    cfg.dims = ck.dims;
    cfg.geometry = ck.geometry;
    let test = harness::load_split(&cfg.test_images, &cfg.test_labels, cfg.geometry)
        .context("loading test set")?;
    let net = ck.net();
    let result = if cfg.snn_eval {
        harness::evaluate_snn_inference(&net, ck.dims, &test, cfg.test_limit)?
    } else {
        harness::evaluate_oracle(&net, &test, cfg.test_limit)?
    };
    println!(
        "accuracy {:.4}  mse {:.4}  over {} samples  (x {:.1}, h {:.1}, o {:.2} spikes/inference)",
        result.accuracy, result.mse, result.samples,
        result.input_spikes, result.hidden_spikes, result.output_spikes
    );
    println!("confusion (rows = actual, columns = predicted 0-9, last = silent):");
    for (actual, row) in result.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        println!("  {actual}: {}", cells.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_lockstep(cfg: &RunConfig, samples: usize) -> Result<ExitCode> {
    let report = harness::lockstep(cfg, samples).context("lockstep run failed")?;
    match &report.divergence {
        None => {
            println!(
                "clean pass: {} samples, {} frames, zero discrepancy ({} rule firings absorbed at the weight rails)",
                report.samples, report.frames, report.saturation_events
            );
            Ok(ExitCode::SUCCESS)
        }
        Some(d) => {
            println!(
                "DIVERGENCE at sample {} frame {} step {} layer {}: expected {:?}, got {:?}",
                d.sample, d.frame, d.step, d.layer, d.expected, d.actual
            );
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_trace(cfg: &RunConfig, sample_ids: &[usize], out_dir: &Path) -> Result<ExitCode> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    harness::trace_samples(cfg, sample_ids, |id, circuit, trace| {
        let path = out_dir.join(format!("trace_{id:06}.csv"));
        let mut out = BufWriter::new(File::create(&path).map_err(synfire_core::harness::HarnessError::Io)?);
        export_spike_rows(&mut out, &circuit.net, std::slice::from_ref(trace))
            .map_err(synfire_core::harness::HarnessError::Io)?;
        Ok(())
    })
    .context("trace run failed")?;
    println!("wrote {} trace file(s) to {}", sample_ids.len(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_net(
    dims: &str,
    checkpoint: Option<&std::path::Path>,
    out: Option<&std::path::Path>,
    weights_text: Option<&std::path::Path>,
) -> Result<ExitCode> {
    let (dims, w1, w2, ck) = match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path).context("loading checkpoint")?;
            (ck.dims, ck.w1.clone(), ck.w2.clone(), Some(ck))
        }
        None => {
            let dims = parse_dims(dims)?;
            let net = init(
                &synfire_core::oracle::InitConfig {
                    scheme: synfire_core::oracle::InitScheme::GaussianFan,
                    seed: 0,
                },
                dims.n_in,
                dims.n_hid,
                dims.n_out,
            );
            (dims, net.w1, net.w2, None)
        }
    };
    let circuit = build(dims, &w1, &w2).context("building circuit")?;
    let text = circuit.describe();
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    if let Some(path) = weights_text {
        let Some(ck) = ck else {
            bail!("--weights-text requires --checkpoint");
        };
        let mut f = BufWriter::new(File::create(path)?);
        ck.write_text(&mut f)?;
        f.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}
