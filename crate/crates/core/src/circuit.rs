//! Builder for the 12-step gated backpropagation network.
//!
//! The circuit computes a binarized two-layer perceptron forward pass, splits
//! the output error into positive and negative parts, backpropagates both
//! through transposed weight copies, and applies sign-correct Hebbian updates
//! in two potentiation and two depression steps — all routed by a ring of 12
//! gating neurons whose single circulating spike disinhibits one set of
//! layers per step.
//!
//! Layer roster per hidden/output unit count:
//! `x`, relay `m_x` (input side); `h`, start copy `h<`, stop copy `h>`,
//! relay `m_h`, gradient carrier `hT`, box mask `b_h` (hidden side);
//! `o`, `o<`, `o>`, target `t`, signed gradients `d2+`/`d2-`, negated-path
//! relay `oT-` (output side); plus the chain `g1..g12`.

use crate::engine::{
    EngineError, FrameInput, FrameTrace, Network, NeuronParams, SynapseGroup, SynapseKind,
    Validation, FRAME_STEPS,
};
use crate::plasticity::{PlasticRule, SyncGroup};
use crate::quant::{QuantMatrix, WeightRole};
use thiserror::Error;

/// Layer sizes of the trainable network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_in: usize,
    pub n_hid: usize,
    pub n_out: usize,
}

impl Dims {
    pub fn new(n_in: usize, n_hid: usize, n_out: usize) -> Self {
        Dims { n_in, n_hid, n_out }
    }

    /// Neurons of the full learning circuit.
    pub fn neuron_count(&self) -> usize {
        2 * self.n_in + 6 * self.n_hid + 7 * self.n_out + 12
    }
}

/// Gating synapse strengths, derived from the constant inhibition and the
/// firing threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateWeights {
    /// Brings a gated neuron to half threshold; implements the feedforward
    /// activation offset.
    pub standard: i32,
    /// Brings a gated neuron exactly to threshold, so any positive input
    /// fires: the start-learning condition and the gradient-carrier gate.
    pub to_threshold: i32,
    /// Cancels the inhibition only; fires only for input above threshold:
    /// the stop-learning condition.
    pub to_zero: i32,
}

impl GateWeights {
    pub fn from_params(p: &NeuronParams) -> Self {
        GateWeights {
            standard: -p.i_const + p.v_thr / 2,
            to_threshold: -p.i_const + p.v_thr,
            to_zero: -p.i_const,
        }
    }
}

/// Fixed one-to-one copy/inhibit weights.
pub const W_EXC: i32 = 1024;
pub const W_INH: i32 = -1024;
/// Ring synapse between gating neurons; anything above threshold works.
pub const W_RING: i32 = 2048;

/// Layer ids of the built circuit.
#[derive(Clone, Debug)]
pub struct CircuitLayout {
    pub x: usize,
    pub m_x: usize,
    pub h: usize,
    pub h_start: usize,
    pub h_stop: usize,
    pub m_h: usize,
    pub h_t: usize,
    pub b_h: usize,
    pub o: usize,
    pub o_start: usize,
    pub o_stop: usize,
    pub t: usize,
    pub d2_plus: usize,
    pub d2_minus: usize,
    pub o_t_neg: usize,
    /// `chain[s-1]` is the neuron gating frame step `s`; it fires at step
    /// `s - 1` (the gate for step 1 fires at step 12 of the previous frame).
    pub chain: Vec<usize>,
}

/// Who gates a layer at a given step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateSource {
    /// Chain neuron for that step, with the gate weight used.
    Chain(i32),
    /// One-to-one gate from the output start-learning layer.
    StartCondition(i32),
    /// One-to-one gate from the hidden box-mask layer.
    BoxMask(i32),
}

/// Per-layer firing schedule: the frame steps a layer may spike at, and the
/// gate source driving each gated step.
#[derive(Clone, Debug)]
pub struct ScheduleTable {
    /// Indexed by layer id: allowed frame-local firing steps (1-based).
    pub allowed: Vec<Vec<u32>>,
    /// Indexed by layer id: (step, source) gating entries.
    pub gates: Vec<Vec<(u32, GateSource)>>,
}

/// Builder-time synapse bookkeeping.
///
/// `physical` counts every (source, target) neuron pair of every group: each
/// same-direction duplicate of a weight matrix is its own fan-in on chip.
/// `template` deduplicates those same-direction duplicates (they share one
/// weight template), which is the count the hardware partitioning reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SynapseCensus {
    pub neurons: usize,
    pub physical_total: usize,
    pub physical_plastic: usize,
    pub template_total: usize,
    pub template_plastic: usize,
    pub fixed: usize,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("all dimensions must be nonzero")]
    ZeroDimension,
    #[error("initial weights have shape ({rows}, {cols}); expected ({want_rows}, {want_cols})")]
    WeightShape { rows: usize, cols: usize, want_rows: usize, want_cols: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("image has {got} bits; the input layer has {want} neurons")]
    LengthMismatch { got: usize, want: usize },
    #[error("label {label} outside 0..{n_out}")]
    LabelRange { label: usize, n_out: usize },
    #[error("image bits must be 0 or 1 (found {value} at {index})")]
    NotBinary { index: usize, value: u8 },
}

/// The built network plus its layout, schedule, and weight-sharing registry.
#[derive(Clone, Debug)]
pub struct CircuitNetwork {
    pub net: Network,
    pub layout: CircuitLayout,
    pub schedule: ScheduleTable,
    pub sync_groups: Vec<SyncGroup>,
    pub census: SynapseCensus,
    dims: Dims,
    w1_forward_group: usize,
    w2_forward_group: usize,
    bootstrapped: bool,
}

impl CircuitNetwork {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// The forward first-layer weight matrix.
    pub fn w1(&self) -> &QuantMatrix {
        self.net.group_weights(self.w1_forward_group).expect("w1")
    }

    /// The forward second-layer weight matrix.
    pub fn w2(&self) -> &QuantMatrix {
        self.net.group_weights(self.w2_forward_group).expect("w2")
    }

    /// Injects the one-shot spike that starts the gating ring. Must run once
    /// before the first frame.
    pub fn bootstrap(&mut self) -> Result<(), EngineError> {
        self.net.bootstrap(self.layout.chain[0])?;
        self.bootstrapped = true;
        Ok(())
    }

    /// Runs one frame on an encoded sample.
    pub fn run_frame(
        &mut self,
        input: &FrameInput,
        learning_on: bool,
        capture_membranes: bool,
    ) -> Result<FrameTrace, EngineError> {
        debug_assert!(self.bootstrapped, "bootstrap the gating chain first");
        self.net.advance_frame(input, learning_on, capture_membranes)
    }

    /// Builds the forced-spike schedule for one sample: image bits enter the
    /// input layer at step 1, the one-hot label enters the target layer at
    /// step 3.
    pub fn encode_sample(&self, bits: &[u8], label: usize) -> Result<FrameInput, EncodeError> {
        if bits.len() != self.dims.n_in {
            return Err(EncodeError::LengthMismatch { got: bits.len(), want: self.dims.n_in });
        }
        if label >= self.dims.n_out {
            return Err(EncodeError::LabelRange { label, n_out: self.dims.n_out });
        }
        let mut x_spikes = Vec::new();
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => x_spikes.push(i as u32),
                v => return Err(EncodeError::NotBinary { index: i, value: v }),
            }
        }
        let mut forced = vec![(1, self.layout.x, x_spikes)];
        if self.net.frame_steps() == FRAME_STEPS {
            forced.push((3, self.layout.t, vec![label as u32]));
        }
        Ok(FrameInput { forced })
    }

    /// Predicted class from a frame: the lowest firing output index at the
    /// output step, or `None` when the output layer stayed silent (scored as
    /// an incorrect prediction).
    pub fn classify(&self, trace: &FrameTrace) -> Option<usize> {
        trace.spikes_at(3, self.layout.o).first().map(|&i| i as usize)
    }

    pub fn set_validation(&mut self, v: Validation) {
        self.net.validation = v;
    }

    /// Human-readable network listing: layers, synapse groups, schedule, and
    /// the synapse census. Stable ordering for golden-file diffing.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# layers ({} neurons)", self.census.neurons);
        for id in 0..self.net.layer_count() {
            let _ = writeln!(s, "layer {:2}  {:<5} size {}", id, self.net.layer_name(id), self.net.layer_size(id));
        }
        let _ = writeln!(s, "# synapse groups");
        for (gid, g) in self.net.groups().iter().enumerate() {
            let kind = match g.kind {
                SynapseKind::PlasticAllToAll => {
                    let w = g.weights.as_ref().unwrap();
                    format!("plastic {:?} {}x{}", w.role(), w.rows(), w.cols())
                }
                SynapseKind::ExcitatoryOneToOne(w) => format!("exc-1:1 w={w}"),
                SynapseKind::InhibitoryOneToOne(w) => format!("inh-1:1 w={w}"),
                SynapseKind::GateOneToAll(w) => format!("gate-1:all w={w}"),
                SynapseKind::GateOneToOne(w) => format!("gate-1:1 w={w}"),
            };
            let _ = writeln!(
                s,
                "group {:2}  {:<5} -> {:<5} {:<28} delay {}",
                gid,
                self.net.layer_name(g.source),
                self.net.layer_name(g.target),
                kind,
                g.delay
            );
        }
        let _ = writeln!(s, "# schedule (allowed firing steps; gate sources)");
        for id in 0..self.net.layer_count() {
            let gates: Vec<String> = self.schedule.gates[id]
                .iter()
                .map(|(step, src)| match src {
                    GateSource::Chain(w) => format!("{step}:chain({w})"),
                    GateSource::StartCondition(w) => format!("{step}:start({w})"),
                    GateSource::BoxMask(w) => format!("{step}:box({w})"),
                })
                .collect();
            let _ = writeln!(
                s,
                "layer {:2}  {:<5} steps {:?} gates [{}]",
                id,
                self.net.layer_name(id),
                self.schedule.allowed[id],
                gates.join(", ")
            );
        }
        let c = &self.census;
        let _ = writeln!(s, "# census");
        let _ = writeln!(s, "neurons            {}", c.neurons);
        let _ = writeln!(s, "physical synapses  {} (plastic {})", c.physical_total, c.physical_plastic);
        let _ = writeln!(s, "template synapses  {} (plastic {})", c.template_total, c.template_plastic);
        let _ = writeln!(s, "fixed synapses     {}", c.fixed);
        s
    }
}

/// Builds the full learning circuit from initial forward matrices. The three
/// first-layer copies, the three second-layer copies, and the two transposed
/// copies are materialized as independent matrices; the routing keeps them
/// element-identical during training.
pub fn build(dims: Dims, w1: &QuantMatrix, w2: &QuantMatrix) -> Result<CircuitNetwork, BuildError> {
    if dims.n_in == 0 || dims.n_hid == 0 || dims.n_out == 0 {
        return Err(BuildError::ZeroDimension);
    }
    check_shape(w1, dims.n_hid, dims.n_in)?;
    check_shape(w2, dims.n_out, dims.n_hid)?;

    let data = NeuronParams::gated();
    let gw = GateWeights::from_params(&data);
    let mut net = Network::new(FRAME_STEPS, PlasticRule::default());

    let x = net.add_layer("x", dims.n_in, data);
    let m_x = net.add_layer("m_x", dims.n_in, data);
    let h = net.add_layer("h", dims.n_hid, data);
    let h_start = net.add_layer("h<", dims.n_hid, data);
    let h_stop = net.add_layer("h>", dims.n_hid, data);
    let m_h = net.add_layer("m_h", dims.n_hid, data);
    let h_t = net.add_layer("hT", dims.n_hid, data);
    let b_h = net.add_layer("b_h", dims.n_hid, data);
    let o = net.add_layer("o", dims.n_out, data);
    let o_start = net.add_layer("o<", dims.n_out, data);
    let o_stop = net.add_layer("o>", dims.n_out, data);
    let t = net.add_layer("t", dims.n_out, data);
    let d2_plus = net.add_layer("d2+", dims.n_out, data);
    let d2_minus = net.add_layer("d2-", dims.n_out, data);
    let o_t_neg = net.add_layer("oT-", dims.n_out, data);
    let chain: Vec<usize> = (1..=12)
        .map(|s| net.add_layer(&format!("g{s}"), 1, NeuronParams::chain()))
        .collect();

    let exc = |s, d, delay| SynapseGroup::fixed(s, d, SynapseKind::ExcitatoryOneToOne(W_EXC), delay);
    let inh = |s, d, delay| SynapseGroup::fixed(s, d, SynapseKind::InhibitoryOneToOne(W_INH), delay);

    // Input relay: x fires at step 1; m_x copies it at 2 and replays it into
    // x for the two first-layer update steps (arrivals at 7 and 11).
    net.add_group(exc(x, m_x, 0));
    net.add_group(exc(m_x, x, 4));
    net.add_group(exc(m_x, x, 8));

    // First-layer plastic fan-out: forward plus the two condition copies.
    let w1_fwd = net.add_group(SynapseGroup::plastic(x, h, w1.clone().with_role(WeightRole::Forward), 0));
    let w1_c1 = net.add_group(SynapseGroup::plastic(x, h_start, w1.clone().with_role(WeightRole::ForwardCopy), 0));
    let w1_c2 = net.add_group(SynapseGroup::plastic(x, h_stop, w1.clone().with_role(WeightRole::ForwardCopy), 0));

    // Hidden relay: m_h copies h at step 3 and replays it into h and the
    // gradient carrier hT for both second-layer update steps (5 and 9).
    net.add_group(exc(h, m_h, 0));
    net.add_group(exc(m_h, h, 1));
    net.add_group(exc(m_h, h, 5));
    net.add_group(exc(m_h, h_t, 1));
    net.add_group(exc(m_h, h_t, 5));

    // Second-layer plastic fan-out.
    let w2_fwd = net.add_group(SynapseGroup::plastic(h, o, w2.clone().with_role(WeightRole::Forward), 0));
    let w2_c1 = net.add_group(SynapseGroup::plastic(h, o_start, w2.clone().with_role(WeightRole::ForwardCopy), 0));
    let w2_c2 = net.add_group(SynapseGroup::plastic(h, o_stop, w2.clone().with_role(WeightRole::ForwardCopy), 0));

    // Box mask: start minus stop condition.
    net.add_group(exc(h_start, b_h, 0));
    net.add_group(inh(h_stop, b_h, 0));

    // Signed output error: excitation from one side, inhibition from the
    // other; gated one-to-one by the start condition and vetoed by the stop
    // condition.
    net.add_group(exc(t, d2_plus, 0));
    net.add_group(inh(o, d2_plus, 0));
    net.add_group(exc(o, d2_minus, 0));
    net.add_group(inh(t, d2_minus, 0));
    net.add_group(SynapseGroup::fixed(o_start, d2_plus, SynapseKind::GateOneToOne(gw.standard), 0));
    net.add_group(SynapseGroup::fixed(o_start, d2_minus, SynapseKind::GateOneToOne(gw.standard), 0));
    net.add_group(inh(o_stop, d2_plus, 0));
    net.add_group(inh(o_stop, d2_minus, 0));

    // Gradient routing into the output family: the positive part drives the
    // potentiation step (arrival 5), the negative part the depression step
    // (arrival 9); the negated path sees them in the opposite order.
    net.add_group(exc(d2_plus, o, 0));
    net.add_group(exc(d2_plus, o_start, 0));
    net.add_group(exc(d2_plus, o_stop, 0));
    net.add_group(exc(d2_plus, o_t_neg, 4));
    net.add_group(exc(d2_minus, o_t_neg, 0));
    net.add_group(exc(d2_minus, o, 4));
    net.add_group(exc(d2_minus, o_start, 4));
    net.add_group(exc(d2_minus, o_stop, 4));

    // Backward pass through the transposed copies.
    let w2_t = net.add_group(SynapseGroup::plastic(o, h_t, w2.transposed(), 0));
    let w2_tn = net.add_group(SynapseGroup::plastic(o_t_neg, h_t, w2.transposed().negated(), 0));

    // Backpropagated gradient re-enters the hidden family, gated one-to-one
    // by the box mask (arrivals at 7 and 11).
    net.add_group(exc(h_t, h, 0));
    net.add_group(exc(h_t, h_start, 0));
    net.add_group(exc(h_t, h_stop, 0));
    for target in [h, h_start, h_stop] {
        for delay in [3, 7] {
            net.add_group(SynapseGroup::fixed(b_h, target, SynapseKind::GateOneToOne(gw.to_threshold), delay));
        }
    }

    // Chain gating, one-to-all. chain[s-1] gates frame step s.
    let mut gates: Vec<Vec<(u32, GateSource)>> = vec![Vec::new(); net.layer_count()];
    let gate = |net: &mut Network, gates: &mut Vec<Vec<(u32, GateSource)>>, step: u32, target: usize, w: i32| {
        net.add_group(SynapseGroup::fixed(chain[(step - 1) as usize], target, SynapseKind::GateOneToAll(w), 0));
        gates[target].push((step, GateSource::Chain(w)));
    };
    gate(&mut net, &mut gates, 1, x, gw.standard);
    gate(&mut net, &mut gates, 2, m_x, gw.standard);
    gate(&mut net, &mut gates, 2, h, gw.standard);
    gate(&mut net, &mut gates, 2, h_start, gw.to_threshold);
    gate(&mut net, &mut gates, 2, h_stop, gw.to_zero);
    gate(&mut net, &mut gates, 3, m_h, gw.standard);
    gate(&mut net, &mut gates, 3, o, gw.standard);
    gate(&mut net, &mut gates, 3, o_start, gw.to_threshold);
    gate(&mut net, &mut gates, 3, o_stop, gw.to_zero);
    gate(&mut net, &mut gates, 3, t, gw.standard);
    gate(&mut net, &mut gates, 3, b_h, gw.standard);
    for step in [5u32, 9] {
        for target in [h, h_t, o, o_start, o_stop, o_t_neg] {
            gate(&mut net, &mut gates, step, target, gw.standard);
        }
    }
    gate(&mut net, &mut gates, 6, h_t, gw.to_threshold);
    gate(&mut net, &mut gates, 10, h_t, gw.to_threshold);
    gate(&mut net, &mut gates, 7, x, gw.standard);
    gate(&mut net, &mut gates, 11, x, gw.standard);

    // The self-sustaining ring.
    for s in 0..12 {
        net.add_group(SynapseGroup::fixed(
            chain[s],
            chain[(s + 1) % 12],
            SynapseKind::ExcitatoryOneToOne(W_RING),
            0,
        ));
    }

    // Non-chain gate sources.
    for layer in [d2_plus, d2_minus] {
        gates[layer].push((4, GateSource::StartCondition(gw.standard)));
    }
    for layer in [h, h_start, h_stop] {
        gates[layer].push((7, GateSource::BoxMask(gw.to_threshold)));
        gates[layer].push((11, GateSource::BoxMask(gw.to_threshold)));
    }

    // Allowed firing steps per layer.
    let mut allowed: Vec<Vec<u32>> = vec![Vec::new(); net.layer_count()];
    allowed[x] = vec![1, 7, 11];
    allowed[m_x] = vec![2];
    for layer in [h, h_start, h_stop] {
        allowed[layer] = vec![2, 5, 7, 9, 11];
    }
    allowed[m_h] = vec![3];
    allowed[h_t] = vec![5, 6, 9, 10];
    allowed[b_h] = vec![3];
    for layer in [o, o_start, o_stop] {
        allowed[layer] = vec![3, 5, 9];
    }
    allowed[t] = vec![3];
    allowed[d2_plus] = vec![4];
    allowed[d2_minus] = vec![4];
    allowed[o_t_neg] = vec![5, 9];
    for (i, &g) in chain.iter().enumerate() {
        // chain[s-1] gates step s and therefore fires at step s-1 (the gate
        // for step 1 fires at step 12 of the previous frame).
        allowed[g] = vec![if i == 0 { 12 } else { i as u32 }];
    }
    net.set_schedule(allowed.clone());
    net.finalize()?;

    let sync_groups = vec![
        SyncGroup {
            name: "W1".into(),
            members: vec![
                (w1_fwd, WeightRole::Forward),
                (w1_c1, WeightRole::ForwardCopy),
                (w1_c2, WeightRole::ForwardCopy),
            ],
        },
        SyncGroup {
            name: "W2".into(),
            members: vec![
                (w2_fwd, WeightRole::Forward),
                (w2_c1, WeightRole::ForwardCopy),
                (w2_c2, WeightRole::ForwardCopy),
                (w2_t, WeightRole::Transpose),
                (w2_tn, WeightRole::NegatedTranspose),
            ],
        },
    ];

    let census = census_of(&net, dims.neuron_count());
    let layout = CircuitLayout {
        x,
        m_x,
        h,
        h_start,
        h_stop,
        m_h,
        h_t,
        b_h,
        o,
        o_start,
        o_stop,
        t,
        d2_plus,
        d2_minus,
        o_t_neg,
        chain,
    };
    Ok(CircuitNetwork {
        net,
        layout,
        schedule: ScheduleTable { allowed, gates },
        sync_groups,
        census,
        dims,
        w1_forward_group: w1_fwd,
        w2_forward_group: w2_fwd,
        bootstrapped: false,
    })
}

/// Builds the reduced inference network: the three feedforward layers and a
/// four-neuron chain, one sample per 4-step frame. Weights stay fixed.
pub fn build_inference(
    dims: Dims,
    w1: &QuantMatrix,
    w2: &QuantMatrix,
) -> Result<CircuitNetwork, BuildError> {
    if dims.n_in == 0 || dims.n_hid == 0 || dims.n_out == 0 {
        return Err(BuildError::ZeroDimension);
    }
    check_shape(w1, dims.n_hid, dims.n_in)?;
    check_shape(w2, dims.n_out, dims.n_hid)?;

    let data = NeuronParams::gated();
    let gw = GateWeights::from_params(&data);
    let mut net = Network::new(4, PlasticRule::default());
    let x = net.add_layer("x", dims.n_in, data);
    let h = net.add_layer("h", dims.n_hid, data);
    let o = net.add_layer("o", dims.n_out, data);
    let chain: Vec<usize> =
        (1..=4).map(|s| net.add_layer(&format!("g{s}"), 1, NeuronParams::chain())).collect();

    let mut w1_fixed = SynapseGroup::plastic(x, h, w1.clone().with_role(WeightRole::Forward), 0);
    w1_fixed.plastic = false;
    let w1_group = net.add_group(w1_fixed);
    let mut w2_fixed = SynapseGroup::plastic(h, o, w2.clone().with_role(WeightRole::Forward), 0);
    w2_fixed.plastic = false;
    let w2_group = net.add_group(w2_fixed);

    let mut gates: Vec<Vec<(u32, GateSource)>> = vec![Vec::new(); net.layer_count()];
    for (step, target) in [(1u32, x), (2, h), (3, o)] {
        net.add_group(SynapseGroup::fixed(
            chain[(step - 1) as usize],
            target,
            SynapseKind::GateOneToAll(gw.standard),
            0,
        ));
        gates[target].push((step, GateSource::Chain(gw.standard)));
    }
    for s in 0..4 {
        net.add_group(SynapseGroup::fixed(
            chain[s],
            chain[(s + 1) % 4],
            SynapseKind::ExcitatoryOneToOne(W_RING),
            0,
        ));
    }

    let mut allowed: Vec<Vec<u32>> = vec![Vec::new(); net.layer_count()];
    allowed[x] = vec![1];
    allowed[h] = vec![2];
    allowed[o] = vec![3];
    for (i, &g) in chain.iter().enumerate() {
        allowed[g] = vec![if i == 0 { 4 } else { i as u32 }];
    }
    net.set_schedule(allowed.clone());
    net.finalize()?;

    let census = census_of(&net, dims.n_in + dims.n_hid + dims.n_out + 4);
    let layout = CircuitLayout {
        x,
        m_x: x,
        h,
        h_start: h,
        h_stop: h,
        m_h: h,
        h_t: h,
        b_h: h,
        o,
        o_start: o,
        o_stop: o,
        t: o,
        d2_plus: o,
        d2_minus: o,
        o_t_neg: o,
        chain,
    };
    Ok(CircuitNetwork {
        net,
        layout,
        schedule: ScheduleTable { allowed, gates },
        sync_groups: Vec::new(),
        census,
        dims,
        w1_forward_group: w1_group,
        w2_forward_group: w2_group,
        bootstrapped: false,
    })
}

fn check_shape(w: &QuantMatrix, rows: usize, cols: usize) -> Result<(), BuildError> {
    if w.rows() != rows || w.cols() != cols {
        return Err(BuildError::WeightShape {
            rows: w.rows(),
            cols: w.cols(),
            want_rows: rows,
            want_cols: cols,
        });
    }
    Ok(())
}

fn census_of(net: &Network, neurons: usize) -> SynapseCensus {
    let mut c = SynapseCensus { neurons, ..Default::default() };
    for g in net.groups() {
        let count = match g.kind {
            SynapseKind::PlasticAllToAll => {
                let w = g.weights.as_ref().unwrap();
                w.rows() * w.cols()
            }
            SynapseKind::ExcitatoryOneToOne(_)
            | SynapseKind::InhibitoryOneToOne(_)
            | SynapseKind::GateOneToOne(_) => net.layer_size(g.source),
            SynapseKind::GateOneToAll(_) => net.layer_size(g.target),
        };
        if matches!(g.kind, SynapseKind::PlasticAllToAll) {
            c.physical_plastic += count;
            // Same-direction duplicates share one weight template.
            let role = g.weights.as_ref().unwrap().role();
            if role != WeightRole::ForwardCopy {
                c.template_plastic += count;
            }
        } else {
            c.fixed += count;
        }
        c.physical_total += count;
    }
    c.template_total = c.template_plastic + c.fixed;
    c
}
