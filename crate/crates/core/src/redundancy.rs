// SPDX-License-Identifier: Apache-2.0

//! Cycle-accurate machines for the bare pipeline and the three redundancy
//! schemes.
//!
//! Every machine owns an input queue. `cycle(input, faults)` appends
//! `input` (if any) to the queue and offers the queue head to the pipeline;
//! the head is removed only when the machine accepts it. Each cycle returns
//! a [`CycleRecord`] whose `output` is the result delivered downstream in
//! that cycle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{ActiveFaults, FaultSpec, Scheme};
use crate::netlist::{bits_to_u64, byte_to_bits};
use crate::synth::PipelineDesign;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RedundancyError {
    #[error("bit vectors differ in width: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
}

/// Hold-state DMR voter: the last agreed value and whether the replicas
/// disagreed on the most recent step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmrVoterState {
    pub latch: Vec<bool>,
    pub stalled: bool,
}

impl DmrVoterState {
    pub fn new(width: usize) -> Self {
        DmrVoterState { latch: vec![false; width], stalled: false }
    }
}

/// One voter evaluation: passes and latches `a` when the replicas agree,
/// otherwise keeps presenting the latched value.
pub fn dmr_voter_step(a: &[bool], b: &[bool], state: &DmrVoterState) -> Result<(Vec<bool>, DmrVoterState), RedundancyError> {
    check_width(a, b)?;
    check_width(a, &state.latch)?;
    if a == b {
        Ok((a.to_vec(), DmrVoterState { latch: a.to_vec(), stalled: false }))
    } else {
        Ok((state.latch.clone(), DmrVoterState { latch: state.latch.clone(), stalled: true }))
    }
}

/// Detection unit: true iff any bit of the two replica registers differs.
pub fn du_compare(reg_a: &[bool], reg_b: &[bool]) -> Result<bool, RedundancyError> {
    check_width(reg_a, reg_b)?;
    Ok(reg_a != reg_b)
}

/// Control unit: the global error is the OR of the per-stage errors.
pub fn cu_aggregate(errs: &[bool]) -> bool {
    errs.iter().any(|&e| e)
}

/// Bitwise two-out-of-three majority.
pub fn majority(a: &[bool], b: &[bool], c: &[bool]) -> Result<Vec<bool>, RedundancyError> {
    check_width(a, b)?;
    check_width(a, c)?;
    Ok(a.iter().zip(b).zip(c).map(|((&x, &y), &z)| (x & y) | (z & (x | y))).collect())
}

fn check_width(a: &[bool], b: &[bool]) -> Result<(), RedundancyError> {
    if a.len() != b.len() {
        return Err(RedundancyError::WidthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

/// One line of a machine trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    /// The queue head offered to the pipeline this cycle.
    pub input: Option<u8>,
    pub accepted: bool,
    pub err: Vec<bool>,
    #[serde(rename = "Err")]
    pub global_err: bool,
    pub output: Option<u8>,
}

impl CycleRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace record serializes")
    }
}

/// Common interface of the cycle-accurate machines.
pub trait Machine: Send {
    fn scheme(&self) -> Scheme;

    /// Advances one clock cycle with `faults` overlaid.
    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord;

    /// True while inputs are queued or valid data is in flight.
    fn busy(&self) -> bool;

    /// Cycles spent with the global error raised.
    fn stall_cycles(&self) -> u64;

    /// Cycles simulated so far.
    fn cycles(&self) -> u64;

    /// A digest of every state element that influences future behavior,
    /// including the number of inputs consumed.
    fn state_key(&self) -> Vec<u8>;
}

/// Any of the four machines, cloneable so runs can fork from a shared prefix.
#[derive(Clone)]
pub enum AnyMachine<'a> {
    Original(OriginalMachine<'a>),
    Hfs(FcDmrMachine<'a>),
    Tmr(TmrMachine<'a>),
    Ttr(TtrMachine<'a>),
}

/// Builds the machine for `scheme` over `design`.
pub fn build_machine(scheme: Scheme, design: &PipelineDesign) -> AnyMachine<'_> {
    match scheme {
        Scheme::Original => AnyMachine::Original(OriginalMachine::new(design)),
        Scheme::Hfs => AnyMachine::Hfs(FcDmrMachine::new(design)),
        Scheme::Tmr => AnyMachine::Tmr(TmrMachine::new(design)),
        Scheme::Ttr => AnyMachine::Ttr(TtrMachine::new(design)),
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyMachine::Original($m) => $e,
            AnyMachine::Hfs($m) => $e,
            AnyMachine::Tmr($m) => $e,
            AnyMachine::Ttr($m) => $e,
        }
    };
}

impl Machine for AnyMachine<'_> {
    fn scheme(&self) -> Scheme {
        dispatch!(self, m => m.scheme())
    }

    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord {
        dispatch!(self, m => m.cycle(input, faults))
    }

    fn busy(&self) -> bool {
        dispatch!(self, m => m.busy())
    }

    fn stall_cycles(&self) -> u64 {
        dispatch!(self, m => m.stall_cycles())
    }

    fn cycles(&self) -> u64 {
        dispatch!(self, m => m.cycles())
    }

    fn state_key(&self) -> Vec<u8> {
        dispatch!(self, m => m.state_key())
    }
}

/// Result of driving a machine over a whole input stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRun {
    pub trace: Vec<CycleRecord>,
    pub stalls: u64,
    /// False when the cycle cap was reached before the machine drained.
    pub completed: bool,
}

impl StreamRun {
    pub fn outputs(&self) -> Vec<u8> {
        self.trace.iter().filter_map(|r| r.output).collect()
    }

    pub fn to_json_lines(&self) -> String {
        self.trace.iter().map(|r| r.to_json_line() + "\n").collect()
    }
}

/// Presents `stream[t]` at cycle `t` and runs until the machine drains or
/// `max_cycles` elapse.
pub fn run_stream(machine: &mut dyn Machine, stream: &[u8], faults: &[FaultSpec], max_cycles: u64) -> StreamRun {
    let mut trace = Vec::new();
    loop {
        let t = machine.cycles();
        let pending = (t as usize) < stream.len();
        if !pending && !machine.busy() {
            break;
        }
        if t >= max_cycles {
            return StreamRun { stalls: machine.stall_cycles(), trace, completed: false };
        }
        trace.push(machine.cycle(stream.get(t as usize).copied(), faults));
    }
    StreamRun { stalls: machine.stall_cycles(), trace, completed: true }
}

/// A generous cycle cap for a stream of `len` inputs.
pub fn default_cycle_cap(design: &PipelineDesign, len: usize) -> u64 {
    3 * (len as u64 + design.n_stages() as u64) + 64
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct InputPort {
    queue: VecDeque<u8>,
    consumed: u64,
}

impl InputPort {
    fn push(&mut self, input: Option<u8>) {
        if let Some(v) = input {
            self.queue.push_back(v);
        }
    }

    fn head(&self) -> Option<u8> {
        self.queue.front().copied()
    }

    fn pop(&mut self) {
        self.queue.pop_front();
        self.consumed += 1;
    }
}

fn pack(out: &mut Vec<u8>, bits: &[bool]) {
    for chunk in bits.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)));
    }
}

fn to_byte(bits: &[bool]) -> u8 {
    bits_to_u64(bits) as u8
}

/// Evaluates every stage of one replica. `sources[0]` feeds stage 0 and
/// `sources[i]` is what stage `i` reads from rank `i - 1`. Returns the bits
/// captured by every rank, with this replica's register faults applied.
fn compute_ranks(
    design: &PipelineDesign,
    sources: &[Vec<bool>],
    scratch: &mut [bool],
    faults: &ActiveFaults,
    replica: u8,
) -> Vec<Vec<bool>> {
    let (hook, hooked) = faults.gate_hook(replica);
    (0..design.n_stages())
        .map(|stage| {
            let mut bits = design.eval_stage(stage, &sources[stage], scratch, &hook, hooked);
            faults.corrupt_capture(replica, stage, &mut bits);
            bits
        })
        .collect()
}

fn empty_ranks(design: &PipelineDesign) -> Vec<Vec<bool>> {
    design.rank_widths().into_iter().map(|w| vec![false; w]).collect()
}

fn sources_from(head: Option<u8>, width: usize, ranks: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let mut sources = Vec::with_capacity(ranks.len());
    sources.push(byte_to_bits(head.unwrap_or(0), width));
    sources.extend(ranks[..ranks.len() - 1].iter().cloned());
    sources
}

// ---------------------------------------------------------------------------

/// The bare N-stage pipeline with no protection.
#[derive(Clone)]
pub struct OriginalMachine<'a> {
    design: &'a PipelineDesign,
    ranks: Vec<Vec<bool>>,
    valid: Vec<bool>,
    port: InputPort,
    scratch: Vec<bool>,
    cycle: u64,
}

impl<'a> OriginalMachine<'a> {
    pub fn new(design: &'a PipelineDesign) -> Self {
        OriginalMachine {
            design,
            ranks: empty_ranks(design),
            valid: vec![false; design.n_stages()],
            port: InputPort::default(),
            scratch: vec![false; design.netlist().signal_count()],
            cycle: 0,
        }
    }
}

impl Machine for OriginalMachine<'_> {
    fn scheme(&self) -> Scheme {
        Scheme::Original
    }

    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord {
        let n = self.design.n_stages();
        self.port.push(input);
        let active = ActiveFaults::collect(faults, self.cycle, self.design);
        let head = self.port.head();
        let output = self.valid[n - 1].then(|| to_byte(&self.ranks[n - 1]));
        let sources = sources_from(head, self.design.netlist().inputs().len(), &self.ranks);
        self.ranks = compute_ranks(self.design, &sources, &mut self.scratch, &active, 0);
        self.valid.rotate_right(1);
        self.valid[0] = head.is_some();
        if head.is_some() {
            self.port.pop();
        }
        let record = CycleRecord { cycle: self.cycle, input: head, accepted: head.is_some(), err: vec![], global_err: false, output };
        self.cycle += 1;
        record
    }

    fn busy(&self) -> bool {
        !self.port.queue.is_empty() || self.valid.iter().any(|&v| v)
    }

    fn stall_cycles(&self) -> u64 {
        0
    }

    fn cycles(&self) -> u64 {
        self.cycle
    }

    fn state_key(&self) -> Vec<u8> {
        let mut key = self.port.consumed.to_le_bytes().to_vec();
        pack(&mut key, &self.valid);
        for r in &self.ranks {
            pack(&mut key, r);
        }
        key
    }
}

// ---------------------------------------------------------------------------

/// Fault-correcting DMR: two copies of every stage write duplicated
/// registers; per-stage comparators feed a global error that freezes all
/// voter latches and the input port until the replicas agree again.
#[derive(Clone)]
pub struct FcDmrMachine<'a> {
    design: &'a PipelineDesign,
    /// Last captured replica registers.
    pub regs_a: Vec<Vec<bool>>,
    pub regs_b: Vec<Vec<bool>>,
    pub voters: Vec<DmrVoterState>,
    pub err: Vec<bool>,
    pub global_err: bool,
    valid: Vec<bool>,
    port: InputPort,
    scratch: Vec<bool>,
    stalls: u64,
    cycle: u64,
}

impl<'a> FcDmrMachine<'a> {
    pub fn new(design: &'a PipelineDesign) -> Self {
        let n = design.n_stages();
        FcDmrMachine {
            design,
            regs_a: empty_ranks(design),
            regs_b: empty_ranks(design),
            voters: design.rank_widths().into_iter().map(DmrVoterState::new).collect(),
            err: vec![false; n],
            global_err: false,
            valid: vec![false; n],
            port: InputPort::default(),
            scratch: vec![false; design.netlist().signal_count()],
            stalls: 0,
            cycle: 0,
        }
    }

    /// Inputs waiting for acceptance.
    pub fn input_queue(&self) -> &VecDeque<u8> {
        &self.port.queue
    }
}

impl Machine for FcDmrMachine<'_> {
    fn scheme(&self) -> Scheme {
        Scheme::Hfs
    }

    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord {
        let n = self.design.n_stages();
        self.port.push(input);
        let active = ActiveFaults::collect(faults, self.cycle, self.design);
        let head = self.port.head();
        let mut voted: Vec<Vec<bool>> = self.voters.iter().map(|v| v.latch.clone()).collect();
        for (rank, bits) in voted.iter_mut().enumerate() {
            active.corrupt_voter_read(rank, bits);
        }
        let sources = sources_from(head, self.design.netlist().inputs().len(), &voted);
        let a = compute_ranks(self.design, &sources, &mut self.scratch, &active, 0);
        let b = if active.is_empty() { a.clone() } else { compute_ranks(self.design, &sources, &mut self.scratch, &active, 1) };
        let err: Vec<bool> = (0..n)
            .map(|i| active.corrupt_comparator(i, du_compare(&a[i], &b[i]).expect("replicas share widths")))
            .collect();
        let global_err = cu_aggregate(&err);
        let mut output = None;
        let mut accepted = false;
        if global_err {
            self.stalls += 1;
            for (v, &e) in self.voters.iter_mut().zip(&err) {
                v.stalled = e;
            }
        } else {
            output = self.valid[n - 1].then(|| to_byte(&voted[n - 1]));
            for i in 0..n {
                let (_, next) = dmr_voter_step(&a[i], &b[i], &self.voters[i]).expect("replicas share widths");
                self.voters[i] = next;
            }
            self.valid.rotate_right(1);
            self.valid[0] = head.is_some();
            if head.is_some() {
                self.port.pop();
                accepted = true;
            }
        }
        self.regs_a = a;
        self.regs_b = b;
        self.err = err.clone();
        self.global_err = global_err;
        let record = CycleRecord { cycle: self.cycle, input: head, accepted, err, global_err, output };
        self.cycle += 1;
        record
    }

    fn busy(&self) -> bool {
        !self.port.queue.is_empty() || self.valid.iter().any(|&v| v)
    }

    fn stall_cycles(&self) -> u64 {
        self.stalls
    }

    fn cycles(&self) -> u64 {
        self.cycle
    }

    fn state_key(&self) -> Vec<u8> {
        let mut key = self.port.consumed.to_le_bytes().to_vec();
        pack(&mut key, &self.valid);
        for v in &self.voters {
            pack(&mut key, &v.latch);
        }
        key
    }
}

// ---------------------------------------------------------------------------

/// Three independent pipelines whose outputs are majority-voted per bit.
#[derive(Clone)]
pub struct TmrMachine<'a> {
    design: &'a PipelineDesign,
    replicas: [Vec<Vec<bool>>; 3],
    valid: Vec<bool>,
    port: InputPort,
    scratch: Vec<bool>,
    cycle: u64,
}

impl<'a> TmrMachine<'a> {
    pub fn new(design: &'a PipelineDesign) -> Self {
        TmrMachine {
            design,
            replicas: [empty_ranks(design), empty_ranks(design), empty_ranks(design)],
            valid: vec![false; design.n_stages()],
            port: InputPort::default(),
            scratch: vec![false; design.netlist().signal_count()],
            cycle: 0,
        }
    }
}

impl Machine for TmrMachine<'_> {
    fn scheme(&self) -> Scheme {
        Scheme::Tmr
    }

    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord {
        let n = self.design.n_stages();
        self.port.push(input);
        let active = ActiveFaults::collect(faults, self.cycle, self.design);
        let head = self.port.head();
        let output = self.valid[n - 1].then(|| {
            let [a, b, c] = &self.replicas;
            to_byte(&majority(&a[n - 1], &b[n - 1], &c[n - 1]).expect("replicas share widths"))
        });
        let width = self.design.netlist().inputs().len();
        for (r, ranks) in self.replicas.iter_mut().enumerate() {
            let sources = sources_from(head, width, ranks);
            *ranks = compute_ranks(self.design, &sources, &mut self.scratch, &active, r as u8);
        }
        self.valid.rotate_right(1);
        self.valid[0] = head.is_some();
        if head.is_some() {
            self.port.pop();
        }
        let record = CycleRecord { cycle: self.cycle, input: head, accepted: head.is_some(), err: vec![], global_err: false, output };
        self.cycle += 1;
        record
    }

    fn busy(&self) -> bool {
        !self.port.queue.is_empty() || self.valid.iter().any(|&v| v)
    }

    fn stall_cycles(&self) -> u64 {
        0
    }

    fn cycles(&self) -> u64 {
        self.cycle
    }

    fn state_key(&self) -> Vec<u8> {
        let mut key = self.port.consumed.to_le_bytes().to_vec();
        pack(&mut key, &self.valid);
        for ranks in &self.replicas {
            for r in ranks {
                pack(&mut key, r);
            }
        }
        key
    }
}

// ---------------------------------------------------------------------------

/// One pipeline that processes each input in three consecutive passes. The
/// three results collect in a buffer and the bitwise majority is delivered
/// the cycle after the third pass leaves the pipeline.
#[derive(Clone)]
pub struct TtrMachine<'a> {
    design: &'a PipelineDesign,
    ranks: Vec<Vec<bool>>,
    /// Pass index (0..3) of the data held in each rank, if valid.
    passes: Vec<Option<u8>>,
    /// Cycle-phase counter: which pass the queue head enters next.
    pub phase: u8,
    buffer: [Vec<bool>; 3],
    ready: bool,
    port: InputPort,
    scratch: Vec<bool>,
    cycle: u64,
}

impl<'a> TtrMachine<'a> {
    pub fn new(design: &'a PipelineDesign) -> Self {
        let w = design.netlist().outputs().len();
        TtrMachine {
            design,
            ranks: empty_ranks(design),
            passes: vec![None; design.n_stages()],
            phase: 0,
            buffer: [vec![false; w], vec![false; w], vec![false; w]],
            ready: false,
            port: InputPort::default(),
            scratch: vec![false; design.netlist().signal_count()],
            cycle: 0,
        }
    }
}

impl Machine for TtrMachine<'_> {
    fn scheme(&self) -> Scheme {
        Scheme::Ttr
    }

    fn cycle(&mut self, input: Option<u8>, faults: &[FaultSpec]) -> CycleRecord {
        let n = self.design.n_stages();
        self.port.push(input);
        let active = ActiveFaults::collect(faults, self.cycle, self.design);
        let head = self.port.head();
        let output = self.ready.then(|| {
            let [a, b, c] = &self.buffer;
            to_byte(&majority(a, b, c).expect("buffer slots share widths"))
        });
        self.ready = false;
        if let Some(pass) = self.passes[n - 1] {
            self.buffer[pass as usize] = self.ranks[n - 1].clone();
            self.ready = pass == 2;
        }
        let sources = sources_from(head, self.design.netlist().inputs().len(), &self.ranks);
        self.ranks = compute_ranks(self.design, &sources, &mut self.scratch, &active, 0);
        self.passes.rotate_right(1);
        self.passes[0] = head.map(|_| self.phase);
        let mut accepted = false;
        if head.is_some() {
            if self.phase == 2 {
                self.port.pop();
                accepted = true;
            }
            self.phase = (self.phase + 1) % 3;
        }
        let record = CycleRecord { cycle: self.cycle, input: head, accepted, err: vec![], global_err: false, output };
        self.cycle += 1;
        record
    }

    fn busy(&self) -> bool {
        !self.port.queue.is_empty() || self.passes.iter().any(Option::is_some) || self.ready
    }

    fn stall_cycles(&self) -> u64 {
        0
    }

    fn cycles(&self) -> u64 {
        self.cycle
    }

    fn state_key(&self) -> Vec<u8> {
        let mut key = self.port.consumed.to_le_bytes().to_vec();
        key.push(self.phase);
        key.push(self.ready as u8);
        key.extend(self.passes.iter().map(|p| p.map_or(0xff, |v| v)));
        for r in self.ranks.iter().chain(self.buffer.iter()) {
            pack(&mut key, r);
        }
        key
    }
}
