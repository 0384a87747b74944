//! Discrete-time simulator of current-based integrate-and-fire neurons with
//! delayed synapses, all in integer arithmetic.
//!
//! One step evaluates as a pure function of the previous state plus the
//! weighted inputs arriving at that step. A spike emitted at step `t` through
//! a synapse of delay `d` reaches its target's current at step `t + 1 + d`,
//! so delay 0 means "effective at the next step". With both time constants at
//! 1 the neurons are memoryless: the membrane each step is exactly the
//! arriving input plus the constant current.

use crate::plasticity::{reinforcement, PlasticRule};
use crate::quant::QuantMatrix;
use std::io;
use thiserror::Error;

/// Steps per gating cycle; one frame processes one sample.
pub const FRAME_STEPS: u32 = 12;

/// Neuron parameters, all in integer weight units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuronParams {
    /// Membrane decay in steps; 1 means full decay (memoryless).
    pub tau_v: u32,
    /// Current decay in steps; 1 means full decay.
    pub tau_u: u32,
    /// Refractory steps after a spike.
    pub t_ref: u32,
    /// Constant input current; strong inhibition keeps layers silent unless
    /// gated.
    pub i_const: i32,
    /// Firing threshold; a neuron spikes when its membrane strictly exceeds
    /// this.
    pub v_thr: i32,
}

impl NeuronParams {
    /// Silenced data-layer neuron: fires only when a gate offsets `i_const`.
    pub fn gated() -> Self {
        NeuronParams { tau_v: 1, tau_u: 1, t_ref: 0, i_const: -8192, v_thr: 1024 }
    }

    /// Gating-chain neuron: no constant inhibition.
    pub fn chain() -> Self {
        NeuronParams { tau_v: 1, tau_u: 1, t_ref: 0, i_const: 0, v_thr: 1024 }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.tau_v < 1 || self.tau_u < 1 || self.v_thr <= 0 {
            return Err(EngineError::BadParams);
        }
        Ok(())
    }
}

/// Per-neuron dynamic state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NeuronState {
    /// Membrane potential after the last step (0 immediately after a spike).
    pub v: i32,
    /// Synaptic current after the last step.
    pub u: i32,
    /// Remaining refractory steps.
    pub refractory_remaining: u32,
}

/// Connectivity pattern and fixed weight of a synapse group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynapseKind {
    /// All-to-all with a trainable weight matrix.
    PlasticAllToAll,
    /// One-to-one copy synapse with a fixed positive weight.
    ExcitatoryOneToOne(i32),
    /// One-to-one with a fixed negative weight.
    InhibitoryOneToOne(i32),
    /// Single source neuron driving every neuron of the target layer.
    GateOneToAll(i32),
    /// Per-index gating, e.g. a condition layer disinhibiting its gradient
    /// counterpart.
    GateOneToOne(i32),
}

/// A directed bundle of synapses between two layers.
#[derive(Clone, Debug)]
pub struct SynapseGroup {
    pub source: usize,
    pub target: usize,
    pub kind: SynapseKind,
    /// Weight matrix for plastic groups (rows = target, cols = source).
    pub weights: Option<QuantMatrix>,
    pub delay: u32,
    /// Whether the learning rule applies to this group.
    pub plastic: bool,
}

impl SynapseGroup {
    pub fn fixed(source: usize, target: usize, kind: SynapseKind, delay: u32) -> Self {
        SynapseGroup { source, target, kind, weights: None, delay, plastic: false }
    }

    pub fn plastic(source: usize, target: usize, weights: QuantMatrix, delay: u32) -> Self {
        SynapseGroup {
            source,
            target,
            kind: SynapseKind::PlasticAllToAll,
            weights: Some(weights),
            delay,
            plastic: true,
        }
    }

    fn scalar_weight(&self) -> i32 {
        match self.kind {
            SynapseKind::PlasticAllToAll => 0,
            SynapseKind::ExcitatoryOneToOne(w)
            | SynapseKind::InhibitoryOneToOne(w)
            | SynapseKind::GateOneToAll(w)
            | SynapseKind::GateOneToOne(w) => w,
        }
    }
}

/// Ring of pending weighted-input accumulators, one slot per future step.
#[derive(Clone, Debug)]
pub struct DelayBuffer {
    slots: Vec<Vec<i32>>,
}

impl DelayBuffer {
    fn new(len: usize, size: usize) -> Self {
        DelayBuffer { slots: vec![vec![0; size]; len] }
    }

    #[inline]
    fn slot_mut(&mut self, step: u64) -> &mut Vec<i32> {
        let len = self.slots.len() as u64;
        &mut self.slots[(step % len) as usize]
    }

    /// Drains the accumulator for `step` into `out`, zeroing the slot.
    fn take(&mut self, step: u64, out: &mut [i32]) {
        let slot = self.slot_mut(step);
        out.copy_from_slice(slot);
        slot.iter_mut().for_each(|v| *v = 0);
    }

    fn is_slot_zero(&self, step: u64) -> bool {
        let len = self.slots.len() as u64;
        self.slots[(step % len) as usize].iter().all(|&v| v == 0)
    }
}

/// Spiking neuron indices for every layer at one step, ascending per layer.
pub type StepSpikes = Vec<Vec<u32>>;

/// Spikes forced into a layer at a given frame-local step, bypassing
/// integration (external input and the chain bootstrap).
#[derive(Clone, Debug, Default)]
pub struct FrameInput {
    /// (frame-local step, layer, ascending neuron indices)
    pub forced: Vec<(u32, usize, Vec<u32>)>,
}

/// Record of one executed step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Frame-local step, 1-based.
    pub step: u32,
    pub spikes: StepSpikes,
    /// Post-integration membrane potentials, when captured.
    pub membranes: Option<Vec<Vec<i32>>>,
    /// Applied plastic changes: (group, target row, source col, delta).
    pub deltas: Vec<(usize, u32, u32, i16)>,
}

/// Full record of one 12-step frame.
#[derive(Clone, Debug)]
pub struct FrameTrace {
    pub frame: u64,
    pub steps: Vec<StepRecord>,
}

impl FrameTrace {
    /// Spikes of `layer` at frame-local `step` (1-based).
    pub fn spikes_at(&self, step: u32, layer: usize) -> &[u32] {
        &self.steps[(step - 1) as usize].spikes[layer]
    }

    /// Total spike count across all layers and steps.
    pub fn total_spikes(&self) -> u64 {
        self.steps
            .iter()
            .map(|s| s.spikes.iter().map(|v| v.len() as u64).sum::<u64>())
            .sum()
    }
}

/// How much per-step checking the network performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Validation {
    /// No invariant checking.
    Off,
    /// Per-step schedule mask and frame-boundary leakage checks.
    Schedule,
    /// Schedule checks plus per-step conservation of delivered input.
    Full,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid neuron parameters (tau >= 1, v_thr > 0 required)")]
    BadParams,
    #[error(
        "worst-case input {bound} to layer {layer} overflows the 32-bit accumulator"
    )]
    AccumulatorOverflow { layer: usize, bound: i64 },
    #[error("layer {layer} ({name}) fired off schedule at frame {frame} step {step}")]
    ScheduleViolation { layer: usize, name: String, frame: u64, step: u32 },
    #[error("pending arrivals leaked past frame {frame} (found at step offset {offset})")]
    PendingLeak { frame: u64, offset: u64 },
    #[error("conservation mismatch at step {step}: delivered {delivered}, consumed {consumed}")]
    Conservation { step: u64, delivered: i64, consumed: i64 },
    #[error("frame started at global step {at}; frames must start at step 1 mod {period}")]
    FrameMisaligned { at: u64, period: u32 },
    #[error("forced spike step {step} outside 1..={period}")]
    BadForcedStep { step: u32, period: u32 },
    #[error("group {group} wiring invalid: {reason}")]
    BadWiring { group: usize, reason: String },
    #[error("learning requires a {FRAME_STEPS}-step frame; this network runs {got}-step frames")]
    LearningUnsupported { got: u32 },
    #[error("forced spike index {index} out of bounds for layer {layer} of size {size}")]
    ForcedSpikeOutOfBounds { layer: usize, index: u32, size: usize },
}

/// A layered spiking network with delayed synapses and per-step plasticity.
#[derive(Clone, Debug)]
pub struct Network {
    layer_names: Vec<String>,
    layer_params: Vec<NeuronParams>,
    states: Vec<Vec<NeuronState>>,
    groups: Vec<SynapseGroup>,
    /// Incoming group ids per target layer.
    incoming: Vec<Vec<usize>>,
    buffers: Vec<DelayBuffer>,
    /// Allowed frame-local firing steps per layer, when schedule checking is
    /// wanted. Bit s set = may fire at frame-local step s.
    schedule_mask: Option<Vec<u16>>,
    /// Steps per frame (12 for the learning circuit, 4 for inference-only).
    frame_steps: u32,
    rule: PlasticRule,
    pub validation: Validation,
    next_step: u64,
    /// Expected total delivered weight per pending arrival step (validation).
    pending_sums: Vec<i64>,
    scratch: Vec<i32>,
}

impl Network {
    pub fn new(frame_steps: u32, rule: PlasticRule) -> Self {
        Network {
            layer_names: Vec::new(),
            layer_params: Vec::new(),
            states: Vec::new(),
            groups: Vec::new(),
            incoming: Vec::new(),
            buffers: Vec::new(),
            schedule_mask: None,
            frame_steps,
            rule,
            validation: Validation::Schedule,
            next_step: 0,
            pending_sums: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn add_layer(&mut self, name: &str, size: usize, params: NeuronParams) -> usize {
        self.layer_names.push(name.to_string());
        self.layer_params.push(params);
        self.states.push(vec![NeuronState::default(); size]);
        self.incoming.push(Vec::new());
        self.layer_names.len() - 1
    }

    pub fn add_group(&mut self, group: SynapseGroup) -> usize {
        let id = self.groups.len();
        self.incoming[group.target].push(id);
        self.groups.push(group);
        id
    }

    /// Installs the per-layer allowed-step mask (frame-local steps, 1-based).
    pub fn set_schedule(&mut self, allowed: Vec<Vec<u32>>) {
        let masks = allowed
            .iter()
            .map(|steps| steps.iter().fold(0u16, |m, &s| m | (1 << s)))
            .collect();
        self.schedule_mask = Some(masks);
    }

    /// Validates parameters, sizes the delay buffers, and bounds worst-case
    /// accumulator inputs. Must be called once after wiring.
    pub fn finalize(&mut self) -> Result<(), EngineError> {
        for p in &self.layer_params {
            p.validate()?;
        }
        for (gid, g) in self.groups.iter().enumerate() {
            let (ns, nt) = (self.states[g.source].len(), self.states[g.target].len());
            let bad = |reason: &str| EngineError::BadWiring { group: gid, reason: reason.into() };
            match g.kind {
                SynapseKind::ExcitatoryOneToOne(_)
                | SynapseKind::InhibitoryOneToOne(_)
                | SynapseKind::GateOneToOne(_) => {
                    if ns != nt {
                        return Err(bad("one-to-one requires equal layer sizes"));
                    }
                }
                SynapseKind::GateOneToAll(_) => {
                    if ns != 1 {
                        return Err(bad("gate-one-to-all requires a single source neuron"));
                    }
                }
                SynapseKind::PlasticAllToAll => {
                    let w = g.weights.as_ref().ok_or_else(|| bad("missing weight matrix"))?;
                    if w.rows() != nt || w.cols() != ns {
                        return Err(bad("weight matrix shape must be (target, source)"));
                    }
                }
            }
        }
        let max_delay = self.groups.iter().map(|g| g.delay).max().unwrap_or(0);
        let len = (max_delay + 2).next_power_of_two().max(16) as usize;
        self.buffers = self
            .states
            .iter()
            .map(|s| DelayBuffer::new(len, s.len()))
            .collect();
        self.pending_sums = vec![0; len];

        // Worst-case |input| per layer per step must fit i32 with margin,
        // including current carried across steps for tau_u > 1.
        for (layer, incoming) in self.incoming.iter().enumerate() {
            let mut bound: i64 = 0;
            for &gid in incoming {
                let g = &self.groups[gid];
                bound += match g.kind {
                    SynapseKind::PlasticAllToAll => {
                        let w = g.weights.as_ref().expect("plastic group without weights");
                        w.cols() as i64 * 256
                    }
                    _ => g.scalar_weight().unsigned_abs() as i64,
                };
            }
            let tau_u = self.layer_params[layer].tau_u as i64;
            if bound * tau_u * 2 > i32::MAX as i64 {
                return Err(EngineError::AccumulatorOverflow { layer, bound });
            }
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.layer_names.len()
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.states[layer].len()
    }

    pub fn layer_name(&self, layer: usize) -> &str {
        &self.layer_names[layer]
    }

    pub fn neuron_count(&self) -> usize {
        self.states.iter().map(|s| s.len()).sum()
    }

    pub fn frame_steps(&self) -> u32 {
        self.frame_steps
    }

    pub fn groups(&self) -> &[SynapseGroup] {
        &self.groups
    }

    /// Mutable group access; fault-injection hook for divergence tests.
    /// Delay changes stay valid as long as they fit the sized buffers.
    pub fn groups_mut(&mut self) -> &mut [SynapseGroup] {
        &mut self.groups
    }

    pub fn group_weights(&self, id: usize) -> Option<&QuantMatrix> {
        self.groups[id].weights.as_ref()
    }

    pub fn group_weights_mut(&mut self, id: usize) -> Option<&mut QuantMatrix> {
        self.groups[id].weights.as_mut()
    }

    pub fn state(&self, layer: usize, index: usize) -> NeuronState {
        self.states[layer][index]
    }

    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    /// Runs the pre-frame step that injects the one-shot spike starting the
    /// gating chain. Must be called exactly once, before the first frame.
    pub fn bootstrap(&mut self, chain_first: usize) -> Result<(), EngineError> {
        assert_eq!(self.next_step, 0, "bootstrap must run before any frame");
        let forced = vec![(chain_first, vec![0u32])];
        self.execute_step(&forced, false, 0)?;
        Ok(())
    }

    /// Executes one full frame: per step, deliver pending arrivals, integrate,
    /// then apply plasticity on this step's coincidences when learning is on.
    pub fn advance_frame(
        &mut self,
        input: &FrameInput,
        learning_on: bool,
        capture_membranes: bool,
    ) -> Result<FrameTrace, EngineError> {
        if learning_on && self.frame_steps != FRAME_STEPS {
            return Err(EngineError::LearningUnsupported { got: self.frame_steps });
        }
        if self.next_step % self.frame_steps as u64 != 1 {
            return Err(EngineError::FrameMisaligned {
                at: self.next_step,
                period: self.frame_steps,
            });
        }
        for (step, layer, indices) in &input.forced {
            if *step < 1 || *step > self.frame_steps {
                return Err(EngineError::BadForcedStep { step: *step, period: self.frame_steps });
            }
            let size = self.layer_size(*layer);
            if let Some(&bad) = indices.iter().find(|&&i| i as usize >= size) {
                return Err(EngineError::ForcedSpikeOutOfBounds { layer: *layer, index: bad, size });
            }
        }
        let frame = (self.next_step - 1) / self.frame_steps as u64;
        let mut steps = Vec::with_capacity(self.frame_steps as usize);
        for local in 1..=self.frame_steps {
            let forced: Vec<(usize, Vec<u32>)> = input
                .forced
                .iter()
                .filter(|(s, _, _)| *s == local)
                .map(|(_, l, idx)| (*l, idx.clone()))
                .collect();
            let rec = self.execute_step(&forced, learning_on, local)?;
            let rec = if capture_membranes {
                StepRecord {
                    membranes: Some(
                        self.states
                            .iter()
                            .map(|layer| layer.iter().map(|s| s.v).collect())
                            .collect(),
                    ),
                    ..rec
                }
            } else {
                rec
            };
            steps.push(rec);
        }
        if self.validation >= Validation::Schedule {
            // Nothing may be pending beyond the next frame's first step.
            let last = self.next_step - 1;
            for offset in 2..self.buffers.first().map_or(0, |b| b.slots.len() as u64) {
                if !self.buffers.iter().all(|b| b.is_slot_zero(last + offset)) {
                    return Err(EngineError::PendingLeak { frame, offset });
                }
            }
        }
        Ok(FrameTrace { frame, steps })
    }

    /// One step at global time `self.next_step`: drain arrivals, integrate
    /// every layer, merge forced spikes, enqueue outgoing spikes, learn.
    fn execute_step(
        &mut self,
        forced: &[(usize, Vec<u32>)],
        learning_on: bool,
        local_step: u32,
    ) -> Result<StepRecord, EngineError> {
        let t = self.next_step;
        let n_layers = self.layer_count();
        let mut spikes: StepSpikes = Vec::with_capacity(n_layers);

        let mut consumed: i64 = 0;
        for layer in 0..n_layers {
            let size = self.states[layer].len();
            self.scratch.resize(size, 0);
            let mut arrivals = std::mem::take(&mut self.scratch);
            self.buffers[layer].take(t, &mut arrivals);
            if self.validation == Validation::Full {
                consumed += arrivals.iter().map(|&a| a as i64).sum::<i64>();
            }
            let mut fired = Vec::new();
            integrate_step(
                &mut self.states[layer],
                &arrivals,
                &self.layer_params[layer],
                &mut fired,
            );
            self.scratch = arrivals;
            spikes.push(fired);
        }
        if self.validation == Validation::Full {
            let len = self.pending_sums.len() as u64;
            let expected = std::mem::take(&mut self.pending_sums[(t % len) as usize]);
            if expected != consumed {
                return Err(EngineError::Conservation {
                    step: t,
                    delivered: expected,
                    consumed,
                });
            }
        }

        // Forced spikes join the spike set and reset their neuron like any
        // other firing.
        for (layer, indices) in forced {
            let set = &mut spikes[*layer];
            for &i in indices {
                self.states[*layer][i as usize].v = 0;
                self.states[*layer][i as usize].refractory_remaining =
                    self.layer_params[*layer].t_ref;
                if let Err(pos) = set.binary_search(&i) {
                    set.insert(pos, i);
                }
            }
        }

        if self.validation >= Validation::Schedule && t >= 1 {
            if let Some(masks) = &self.schedule_mask {
                for (layer, fired) in spikes.iter().enumerate() {
                    if !fired.is_empty() && masks[layer] & (1 << local_step) == 0 {
                        return Err(EngineError::ScheduleViolation {
                            layer,
                            name: self.layer_names[layer].clone(),
                            frame: (t - 1) / self.frame_steps as u64,
                            step: local_step,
                        });
                    }
                }
            }
        }

        let delivered = self.deliver_spikes(&spikes, t);
        if self.validation == Validation::Full {
            for (arrival, sum) in delivered {
                let len = self.pending_sums.len() as u64;
                self.pending_sums[(arrival % len) as usize] += sum;
            }
        }

        let mut deltas = Vec::new();
        if learning_on {
            let r = reinforcement(t);
            for gid in 0..self.groups.len() {
                if !self.groups[gid].plastic {
                    continue;
                }
                let (src, dst) = (self.groups[gid].source, self.groups[gid].target);
                if spikes[src].is_empty() || spikes[dst].is_empty() {
                    continue;
                }
                let delta = self.rule.delta(r);
                let weights = self.groups[gid].weights.as_mut().expect("plastic weights");
                for &post in &spikes[dst] {
                    for &pre in &spikes[src] {
                        let applied =
                            weights.saturating_add(post as usize, pre as usize, delta);
                        deltas.push((gid, post, pre, applied));
                    }
                }
            }
        }

        self.next_step += 1;
        Ok(StepRecord { step: local_step, spikes, membranes: None, deltas })
    }

    /// Adds every spike's outgoing weights into the target accumulators at
    /// their arrival steps. Returns (arrival step, total weight) pairs when
    /// conservation checking is on.
    fn deliver_spikes(&mut self, spikes: &StepSpikes, t: u64) -> Vec<(u64, i64)> {
        let mut sums = Vec::new();
        for g in &self.groups {
            let fired = &spikes[g.source];
            if fired.is_empty() {
                continue;
            }
            let arrival = t + 1 + g.delay as u64;
            let mut sum: i64 = 0;
            let track = self.validation == Validation::Full;
            match g.kind {
                SynapseKind::PlasticAllToAll => {
                    let w = g.weights.as_ref().expect("plastic weights");
                    let slot = self.buffers[g.target].slot_mut(arrival);
                    let cols = w.cols();
                    for (j, acc) in slot.iter_mut().enumerate() {
                        let row = &w.as_slice()[j * cols..(j + 1) * cols];
                        let mut s: i32 = 0;
                        for &i in fired {
                            s += row[i as usize] as i32;
                        }
                        *acc += s;
                        if track {
                            sum += s as i64;
                        }
                    }
                }
                SynapseKind::ExcitatoryOneToOne(w) | SynapseKind::InhibitoryOneToOne(w) => {
                    let slot = self.buffers[g.target].slot_mut(arrival);
                    for &i in fired {
                        slot[i as usize] += w;
                        if track {
                            sum += w as i64;
                        }
                    }
                }
                SynapseKind::GateOneToAll(w) => {
                    let slot = self.buffers[g.target].slot_mut(arrival);
                    for acc in slot.iter_mut() {
                        *acc += w;
                    }
                    if track {
                        sum += w as i64 * self.states[g.target].len() as i64;
                    }
                }
                SynapseKind::GateOneToOne(w) => {
                    let slot = self.buffers[g.target].slot_mut(arrival);
                    for &i in fired {
                        slot[i as usize] += w;
                        if track {
                            sum += w as i64;
                        }
                    }
                }
            }
            if track {
                sums.push((arrival, sum));
            }
        }
        sums
    }
}

/// Writes spike traces as delimited rows `frame,step,layer_name,neuron_index`,
/// one row per spike, ordered by frame, step, layer id, then index.
pub fn export_spike_rows<W: io::Write>(
    out: &mut W,
    net: &Network,
    traces: &[FrameTrace],
) -> io::Result<()> {
    for trace in traces {
        for step in &trace.steps {
            for (layer, spikes) in step.spikes.iter().enumerate() {
                for &i in spikes {
                    writeln!(out, "{},{},{},{}", trace.frame, step.step, net.layer_name(layer), i)?;
                }
            }
        }
    }
    Ok(())
}

/// Integrates one layer for one step. `arrivals[i]` is the summed weighted
/// input reaching neuron `i` this step. Appends firing indices (ascending)
/// to `fired`.
pub fn integrate_step(
    states: &mut [NeuronState],
    arrivals: &[i32],
    params: &NeuronParams,
    fired: &mut Vec<u32>,
) {
    let tau_v = params.tau_v as i32;
    let tau_u = params.tau_u as i32;
    for (i, st) in states.iter_mut().enumerate() {
        let u_new = st.u - st.u / tau_u + arrivals[i];
        st.u = u_new;
        if st.refractory_remaining > 0 {
            st.refractory_remaining -= 1;
            st.v = 0;
            continue;
        }
        let v_new = st.v - st.v / tau_v + u_new + params.i_const;
        if v_new > params.v_thr {
            st.v = 0;
            st.refractory_remaining = params.t_ref;
            fired.push(i as u32);
        } else {
            st.v = v_new;
        }
    }
}
