// SPDX-License-Identifier: Apache-2.0

//! Immutable gate-level netlists.
//!
//! Signals are dense integer ids. Primary inputs own their ids directly and
//! every gate drives the signal equal to its own `id`. Gates are stored in
//! topological order, so evaluation is a single forward pass.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::scalar::{self, Scalar};

pub type SignalId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "XOR2")]
    Xor2,
    #[serde(rename = "XNOR2")]
    Xnor2,
    #[serde(rename = "AND2")]
    And2,
    #[serde(rename = "NAND2")]
    Nand2,
    #[serde(rename = "OR2")]
    Or2,
    #[serde(rename = "NOR2")]
    Nor2,
    #[serde(rename = "NOT")]
    Not,
    /// `fanin = [sel, a, b]`, output is `b` when `sel` is high, else `a`.
    #[serde(rename = "MUX2")]
    Mux2,
    #[serde(rename = "BUF")]
    Buf,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::Xor2,
        GateKind::Xnor2,
        GateKind::And2,
        GateKind::Nand2,
        GateKind::Or2,
        GateKind::Nor2,
        GateKind::Not,
        GateKind::Mux2,
        GateKind::Buf,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::Not | GateKind::Buf => 1,
            GateKind::Mux2 => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Xor2 => "XOR2",
            GateKind::Xnor2 => "XNOR2",
            GateKind::And2 => "AND2",
            GateKind::Nand2 => "NAND2",
            GateKind::Or2 => "OR2",
            GateKind::Nor2 => "NOR2",
            GateKind::Not => "NOT",
            GateKind::Mux2 => "MUX2",
            GateKind::Buf => "BUF",
        }
    }

    pub fn from_name(name: &str) -> Option<GateKind> {
        GateKind::ALL.into_iter().find(|k| k.name() == name)
    }

    #[inline]
    pub fn eval(self, a: bool, b: bool, c: bool) -> bool {
        match self {
            GateKind::Xor2 => a ^ b,
            GateKind::Xnor2 => !(a ^ b),
            GateKind::And2 => a & b,
            GateKind::Nand2 => !(a & b),
            GateKind::Or2 => a | b,
            GateKind::Nor2 => !(a | b),
            GateKind::Not => !a,
            GateKind::Mux2 => {
                if a {
                    c
                } else {
                    b
                }
            }
            GateKind::Buf => a,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub id: SignalId,
    pub kind: GateKind,
    pub fanin: Vec<SignalId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("gate {gate} is part of a combinational cycle")]
    CyclicNetlist { gate: SignalId },
    #[error("gate {gate} reads undefined signal {signal}")]
    UndefinedSignal { gate: SignalId, signal: SignalId },
    #[error("output {signal} is not driven by any input or gate")]
    UndefinedOutput { signal: SignalId },
    #[error("gate {gate} ({kind}) has {got} fanins, expected {expected}")]
    ArityMismatch { gate: SignalId, kind: GateKind, got: usize, expected: usize },
    #[error("signal {signal} is driven more than once")]
    DuplicateSignal { signal: SignalId },
    #[error("gate {gate} appears before one of its fanins")]
    NotTopological { gate: SignalId },
    #[error("expected {expected} input bits, got {got}")]
    InputWidthMismatch { expected: usize, got: usize },
}

/// An acyclic gate graph with ordered primary inputs and outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "NetlistRepr", into = "NetlistRepr")]
pub struct Netlist {
    inputs: Vec<SignalId>,
    outputs: Vec<SignalId>,
    gates: Vec<Gate>,
    signal_count: usize,
    /// For each signal id, the index of its driving gate (`None` for inputs or holes).
    driver: Vec<Option<u32>>,
}

#[derive(Serialize, Deserialize)]
struct NetlistRepr {
    inputs: Vec<SignalId>,
    outputs: Vec<SignalId>,
    gates: Vec<Gate>,
}

impl TryFrom<NetlistRepr> for Netlist {
    type Error = NetlistError;

    fn try_from(repr: NetlistRepr) -> Result<Self, Self::Error> {
        Netlist::from_parts(repr.inputs, repr.outputs, repr.gates)
    }
}

impl From<Netlist> for NetlistRepr {
    fn from(n: Netlist) -> Self {
        NetlistRepr { inputs: n.inputs, outputs: n.outputs, gates: n.gates }
    }
}

impl Netlist {
    /// Builds a netlist from arbitrary parts, sorting gates topologically and
    /// validating the result.
    pub fn from_parts(inputs: Vec<SignalId>, outputs: Vec<SignalId>, gates: Vec<Gate>) -> Result<Netlist, NetlistError> {
        let gates = topo_sort(&inputs, gates)?;
        let netlist = Netlist::assemble(inputs, outputs, gates);
        netlist.validate()?;
        Ok(netlist)
    }

    /// Assembles a netlist without checking it; pair with [`Netlist::validate`].
    pub fn assemble(inputs: Vec<SignalId>, outputs: Vec<SignalId>, gates: Vec<Gate>) -> Netlist {
        let signal_count = inputs
            .iter()
            .copied()
            .chain(gates.iter().map(|g| g.id))
            .max()
            .map_or(0, |m| m as usize + 1);
        let mut driver = vec![None; signal_count];
        for (idx, gate) in gates.iter().enumerate() {
            driver[gate.id as usize] = Some(idx as u32);
        }
        Netlist { inputs, outputs, gates, signal_count, driver }
    }

    pub fn inputs(&self) -> &[SignalId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[SignalId] {
        &self.outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn signal_count(&self) -> usize {
        self.signal_count
    }

    /// Index into [`Netlist::gates`] of the gate driving `signal`.
    pub fn driver_of(&self, signal: SignalId) -> Option<usize> {
        self.driver.get(signal as usize).copied().flatten().map(|i| i as usize)
    }

    pub fn is_input(&self, signal: SignalId) -> bool {
        self.inputs.contains(&signal)
    }

    pub fn validate(&self) -> Result<(), NetlistError> {
        let mut defined = vec![false; self.signal_count];
        for &input in &self.inputs {
            if std::mem::replace(&mut defined[input as usize], true) {
                return Err(NetlistError::DuplicateSignal { signal: input });
            }
        }
        let mut seen_gate = vec![false; self.signal_count];
        for gate in &self.gates {
            if defined[gate.id as usize] || seen_gate[gate.id as usize] {
                return Err(NetlistError::DuplicateSignal { signal: gate.id });
            }
            seen_gate[gate.id as usize] = true;
        }
        for gate in &self.gates {
            let expected = gate.kind.arity();
            if gate.fanin.len() != expected {
                return Err(NetlistError::ArityMismatch {
                    gate: gate.id,
                    kind: gate.kind,
                    got: gate.fanin.len(),
                    expected,
                });
            }
            for &f in &gate.fanin {
                let known = (f as usize) < self.signal_count;
                if !known || !(defined[f as usize] || seen_gate[f as usize]) {
                    return Err(NetlistError::UndefinedSignal { gate: gate.id, signal: f });
                }
                if !defined[f as usize] {
                    // driven by a gate that has not been placed yet
                    return Err(if reaches(self, f, gate.id) {
                        NetlistError::CyclicNetlist { gate: gate.id }
                    } else {
                        NetlistError::NotTopological { gate: gate.id }
                    });
                }
            }
            defined[gate.id as usize] = true;
        }
        for &out in &self.outputs {
            if (out as usize) >= self.signal_count || !defined[out as usize] {
                return Err(NetlistError::UndefinedOutput { signal: out });
            }
        }
        Ok(())
    }

    /// Combinational evaluation; returns output bits in declared order.
    pub fn evaluate(&self, inputs: &[bool]) -> Result<Vec<bool>, NetlistError> {
        if inputs.len() != self.inputs.len() {
            return Err(NetlistError::InputWidthMismatch { expected: self.inputs.len(), got: inputs.len() });
        }
        let mut values = vec![false; self.signal_count];
        for (&id, &bit) in self.inputs.iter().zip(inputs) {
            values[id as usize] = bit;
        }
        self.propagate(&mut values);
        Ok(self.outputs.iter().map(|&o| values[o as usize]).collect())
    }

    /// Evaluates all gates in place over a full signal-value buffer.
    pub fn propagate(&self, values: &mut [bool]) {
        for gate in &self.gates {
            values[gate.id as usize] = eval_gate(gate, values);
        }
    }

    /// Evaluates a byte-wide netlist, input bit `i` on `inputs[i]`.
    pub fn evaluate_byte(&self, x: u8) -> Result<u8, NetlistError> {
        let out = self.evaluate(&byte_to_bits(x, self.inputs.len()))?;
        Ok(bits_to_u64(&out) as u8)
    }

    pub fn area_ge<S: Scalar>(&self, costs: &CostTable<S>) -> S {
        scalar::sum(self.gates.iter().map(|g| costs.ge(g.kind)))
    }

    /// Arrival time of every signal, with primary inputs at zero.
    pub fn arrival_times<S: Scalar>(&self, costs: &CostTable<S>) -> Vec<S> {
        let mut arrival = vec![S::zero(); self.signal_count];
        for gate in &self.gates {
            let start = gate
                .fanin
                .iter()
                .fold(S::zero(), |acc, &f| acc.max_of(arrival[f as usize]));
            arrival[gate.id as usize] = start + costs.delay(gate.kind);
        }
        arrival
    }

    /// Longest input-to-output path weighted by gate delay.
    pub fn critical_path_delay<S: Scalar>(&self, costs: &CostTable<S>) -> S {
        let arrival = self.arrival_times(costs);
        self.outputs
            .iter()
            .fold(S::zero(), |acc, &o| acc.max_of(arrival[o as usize]))
    }

    /// Maximum number of gates on any input-to-output path.
    pub fn depth(&self) -> usize {
        let mut levels = vec![0usize; self.signal_count];
        for gate in &self.gates {
            levels[gate.id as usize] = 1 + gate.fanin.iter().map(|&f| levels[f as usize]).max().unwrap_or(0);
        }
        self.outputs.iter().map(|&o| levels[o as usize]).max().unwrap_or(0)
    }

    pub fn gate_count_by_kind(&self) -> BTreeMap<GateKind, usize> {
        let mut counts = BTreeMap::new();
        for gate in &self.gates {
            *counts.entry(gate.kind).or_insert(0) += 1;
        }
        counts
    }

    /// Places `other` next to `self` with renumbered signals. Inputs and
    /// outputs are concatenated.
    pub fn disjoint_union(&self, other: &Netlist) -> Netlist {
        let offset = self.signal_count as SignalId;
        let shift = |s: SignalId| s + offset;
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().copied().map(shift));
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().copied().map(shift));
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().map(|g| Gate {
            id: shift(g.id),
            kind: g.kind,
            fanin: g.fanin.iter().copied().map(shift).collect(),
        }));
        Netlist::assemble(inputs, outputs, gates)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("netlist serializes")
    }
}

#[inline]
pub(crate) fn eval_gate(gate: &Gate, values: &[bool]) -> bool {
    let f = &gate.fanin;
    let a = values[f[0] as usize];
    let b = f.get(1).is_some_and(|&s| values[s as usize]);
    let c = f.get(2).is_some_and(|&s| values[s as usize]);
    gate.kind.eval(a, b, c)
}

/// True when `target` can be reached from `from` by following fanout.
fn reaches(netlist: &Netlist, from: SignalId, target: SignalId) -> bool {
    // walk fanin cones backwards from `from`, looking for `target`
    let mut stack = vec![from];
    let mut visited = vec![false; netlist.signal_count];
    while let Some(s) = stack.pop() {
        if s == target {
            return true;
        }
        if std::mem::replace(&mut visited[s as usize], true) {
            continue;
        }
        if let Some(idx) = netlist.driver_of(s) {
            stack.extend(netlist.gates[idx].fanin.iter().copied().filter(|&f| (f as usize) < netlist.signal_count));
        }
    }
    false
}

/// Kahn ordering that keeps the original relative order where possible.
/// Gates in a cycle are left where they are so `validate` can name them.
fn topo_sort(inputs: &[SignalId], gates: Vec<Gate>) -> Result<Vec<Gate>, NetlistError> {
    let by_id: BTreeMap<SignalId, usize> = gates.iter().enumerate().map(|(i, g)| (g.id, i)).collect();
    if by_id.len() != gates.len() {
        let mut seen = std::collections::BTreeSet::new();
        for g in &gates {
            if !seen.insert(g.id) {
                return Err(NetlistError::DuplicateSignal { signal: g.id });
            }
        }
    }
    let mut indegree = vec![0usize; gates.len()];
    let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (i, g) in gates.iter().enumerate() {
        for f in &g.fanin {
            if let Some(&src) = by_id.get(f) {
                if !inputs.contains(f) {
                    indegree[i] += 1;
                    fanout[src].push(i);
                }
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..gates.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(gates.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &fanout[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() != gates.len() {
        // leave cyclic gates in place; validation reports them
        let placed: std::collections::BTreeSet<usize> = order.iter().copied().collect();
        order.extend((0..gates.len()).filter(|i| !placed.contains(i)));
    }
    let mut slots: Vec<Option<Gate>> = gates.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}

/// Incremental netlist construction. Inputs are allocated first.
#[derive(Debug, Default)]
pub struct Builder {
    inputs: Vec<SignalId>,
    gates: Vec<Gate>,
    next: SignalId,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self) -> SignalId {
        let id = self.next;
        self.next += 1;
        self.inputs.push(id);
        id
    }

    pub fn inputs(&mut self, n: usize) -> Vec<SignalId> {
        (0..n).map(|_| self.input()).collect()
    }

    pub fn gate(&mut self, kind: GateKind, fanin: &[SignalId]) -> SignalId {
        assert_eq!(fanin.len(), kind.arity(), "{kind} arity");
        let id = self.next;
        self.next += 1;
        self.gates.push(Gate { id, kind, fanin: fanin.to_vec() });
        id
    }

    pub fn xor(&mut self, a: SignalId, b: SignalId) -> SignalId {
        self.gate(GateKind::Xor2, &[a, b])
    }

    pub fn xnor(&mut self, a: SignalId, b: SignalId) -> SignalId {
        self.gate(GateKind::Xnor2, &[a, b])
    }

    pub fn and(&mut self, a: SignalId, b: SignalId) -> SignalId {
        self.gate(GateKind::And2, &[a, b])
    }

    pub fn nand(&mut self, a: SignalId, b: SignalId) -> SignalId {
        self.gate(GateKind::Nand2, &[a, b])
    }

    pub fn or(&mut self, a: SignalId, b: SignalId) -> SignalId {
        self.gate(GateKind::Or2, &[a, b])
    }

    pub fn not(&mut self, a: SignalId) -> SignalId {
        self.gate(GateKind::Not, &[a])
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn finish(self, outputs: Vec<SignalId>) -> Result<Netlist, NetlistError> {
        let netlist = Netlist::assemble(self.inputs, outputs, self.gates);
        netlist.validate()?;
        Ok(netlist)
    }
}

/// Area and delay of one gate kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCost<S> {
    pub ge: S,
    pub delay: S,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostTableError {
    #[error("cost table has no entry for {0}")]
    MissingKind(GateKind),
    #[error("NAND2 must cost exactly 1 GE, got {0}")]
    NandNotUnit(String),
    #[error("{kind} must have positive cost, got ge={ge} delay={delay}")]
    NonPositive { kind: GateKind, ge: String, delay: String },
    #[error("{0} must be positive")]
    NonPositiveConstant(&'static str),
    #[error("malformed cost table: {0}")]
    Malformed(String),
}

/// Per-kind gate costs plus the storage constants used by the redundancy
/// schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable<S> {
    gates: BTreeMap<GateKind, GateCost<S>>,
    /// GE charged per flip-flop bit.
    pub register_bit_ge: S,
}

impl<S: Scalar> Default for CostTable<S> {
    fn default() -> Self {
        Self::normalized()
    }
}

impl<S: Scalar> CostTable<S> {
    /// NAND2-normalized ratios; delay reuses the area ratio for each kind.
    pub fn normalized() -> Self {
        let entry = |num: i64| {
            let v = S::ratio(num, 100);
            GateCost { ge: v, delay: v }
        };
        let mut gates = BTreeMap::new();
        gates.insert(GateKind::Nand2, entry(100));
        gates.insert(GateKind::Nor2, entry(100));
        gates.insert(GateKind::Not, entry(67));
        gates.insert(GateKind::And2, entry(133));
        gates.insert(GateKind::Or2, entry(133));
        gates.insert(GateKind::Xor2, entry(233));
        gates.insert(GateKind::Xnor2, entry(233));
        gates.insert(GateKind::Mux2, entry(233));
        gates.insert(GateKind::Buf, GateCost { ge: S::zero(), delay: S::zero() });
        CostTable { gates, register_bit_ge: S::ratio(4, 1) }
    }

    pub fn new(gates: BTreeMap<GateKind, GateCost<S>>, register_bit_ge: S) -> Result<Self, CostTableError> {
        let table = CostTable { gates, register_bit_ge };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), CostTableError> {
        for kind in GateKind::ALL {
            let c = self.gates.get(&kind).ok_or(CostTableError::MissingKind(kind))?;
            let positive = c.ge > S::zero() && c.delay > S::zero();
            let zero_ok = kind == GateKind::Buf && c.ge >= S::zero() && c.delay >= S::zero();
            if !(positive || zero_ok) {
                return Err(CostTableError::NonPositive { kind, ge: c.ge.to_string(), delay: c.delay.to_string() });
            }
        }
        let nand = self.gates[&GateKind::Nand2].ge;
        if nand != S::one() {
            return Err(CostTableError::NandNotUnit(nand.to_string()));
        }
        if self.register_bit_ge <= S::zero() {
            return Err(CostTableError::NonPositiveConstant("register_bit_ge"));
        }
        Ok(())
    }

    pub fn cost(&self, kind: GateKind) -> GateCost<S> {
        self.gates[&kind]
    }

    pub fn ge(&self, kind: GateKind) -> S {
        self.gates[&kind].ge
    }

    pub fn delay(&self, kind: GateKind) -> S {
        self.gates[&kind].delay
    }

    pub fn set(&mut self, kind: GateKind, cost: GateCost<S>) {
        self.gates.insert(kind, cost);
    }

    /// `{"gates": {"NAND2": {"ge": 1.0, "delay": 1.0}, ...}, "register_bit_ge": 4.0}`
    pub fn to_json(&self) -> String {
        let num = |v: S| -> Value {
            Number::from_f64(v.to_f64_lossy()).map_or(Value::String(v.to_string()), Value::Number)
        };
        let mut gates = Map::new();
        for (kind, c) in &self.gates {
            let mut entry = Map::new();
            entry.insert("ge".into(), num(c.ge));
            entry.insert("delay".into(), num(c.delay));
            gates.insert(kind.name().into(), Value::Object(entry));
        }
        let mut root = Map::new();
        root.insert("gates".into(), Value::Object(gates));
        root.insert("register_bit_ge".into(), num(self.register_bit_ge));
        serde_json::to_string_pretty(&Value::Object(root)).expect("cost table serializes")
    }

    /// Parses the JSON map written by [`CostTable::to_json`]. Numbers are read
    /// from their decimal text so exact scalars stay exact.
    pub fn from_json(text: &str) -> Result<Self, CostTableError> {
        let malformed = |m: String| CostTableError::Malformed(m);
        let root: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let parse = |v: &Value, what: &str| -> Result<S, CostTableError> {
            let text = match v {
                Value::Number(n) => n.to_string(),
                Value::String(s) => s.clone(),
                _ => return Err(malformed(format!("{what}: expected a number"))),
            };
            S::parse_decimal(&text).ok_or_else(|| malformed(format!("{what}: cannot parse {text:?}")))
        };
        let gates_obj = root
            .get("gates")
            .and_then(Value::as_object)
            .ok_or_else(|| malformed("missing \"gates\" object".into()))?;
        let mut gates = BTreeMap::new();
        for (name, entry) in gates_obj {
            let kind = GateKind::from_name(name).ok_or_else(|| malformed(format!("unknown gate kind {name:?}")))?;
            let ge = parse(entry.get("ge").ok_or_else(|| malformed(format!("{name}: missing ge")))?, name)?;
            let delay = parse(entry.get("delay").ok_or_else(|| malformed(format!("{name}: missing delay")))?, name)?;
            gates.insert(kind, GateCost { ge, delay });
        }
        let register_bit_ge = match root.get("register_bit_ge") {
            Some(v) => parse(v, "register_bit_ge")?,
            None => S::ratio(4, 1),
        };
        CostTable::new(gates, register_bit_ge)
    }
}

pub fn byte_to_bits(x: u8, width: usize) -> Vec<bool> {
    (0..width).map(|i| i < 8 && (x >> i) & 1 == 1).collect()
}

/// Packs up to 64 bits, bit 0 first.
pub fn bits_to_u64(bits: &[bool]) -> u64 {
    bits.iter().take(64).enumerate().fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
}

/// Hex rendering of a bit vector, bit 0 in the least significant position.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let digits = bits.len().div_ceil(4).max(1);
    (0..digits)
        .rev()
        .map(|d| {
            let nibble = (0..4).fold(0u32, |acc, k| {
                let i = d * 4 + k;
                acc | ((bits.get(i).copied().unwrap_or(false) as u32) << k)
            });
            char::from_digit(nibble, 16).unwrap()
        })
        .collect()
}

pub fn hex_to_bits(text: &str, width: usize) -> Option<Vec<bool>> {
    let digits = text.trim().trim_start_matches("0x");
    let mut bits = vec![false; width];
    for (d, ch) in digits.chars().rev().enumerate() {
        let nibble = ch.to_digit(16)?;
        for k in 0..4 {
            let bit = (nibble >> k) & 1 == 1;
            let i = d * 4 + k;
            if i < width {
                bits[i] = bit;
            } else if bit {
                return None;
            }
        }
    }
    Some(bits)
}

/// Parses a test-vector file: one hex bit vector per non-empty line.
pub fn parse_vectors(text: &str, width: usize) -> Option<Vec<Vec<bool>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| hex_to_bits(l, width))
        .collect()
}

pub fn format_vectors(vectors: &[Vec<bool>]) -> String {
    vectors.iter().map(|v| bits_to_hex(v) + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    fn xor_netlist() -> Netlist {
        let mut b = Builder::new();
        let x = b.input();
        let y = b.input();
        let z = b.xor(x, y);
        b.finish(vec![z]).unwrap()
    }

    fn chain(kind: GateKind, k: usize) -> Netlist {
        let mut b = Builder::new();
        let x = b.input();
        let y = b.input();
        let mut s = x;
        for _ in 0..k {
            s = b.gate(kind, &[s, y]);
        }
        b.finish(vec![s]).unwrap()
    }

    #[test]
    fn single_xor_validates_and_evaluates() {
        let n = xor_netlist();
        assert_eq!(n.validate(), Ok(()));
        assert_eq!(n.evaluate(&[false, false]).unwrap(), vec![false]);
        assert_eq!(n.evaluate(&[true, false]).unwrap(), vec![true]);
        assert_eq!(n.evaluate(&[true, true]).unwrap(), vec![false]);
    }

    #[test]
    fn self_loop_is_cyclic() {
        let gates = vec![Gate { id: 2, kind: GateKind::And2, fanin: vec![0, 2] }];
        let n = Netlist::assemble(vec![0, 1], vec![2], gates.clone());
        assert_eq!(n.validate(), Err(NetlistError::CyclicNetlist { gate: 2 }));
        assert_eq!(Netlist::from_parts(vec![0, 1], vec![2], gates), Err(NetlistError::CyclicNetlist { gate: 2 }));
    }

    #[test]
    fn two_gate_cycle_is_named() {
        let gates = vec![
            Gate { id: 2, kind: GateKind::Xor2, fanin: vec![0, 3] },
            Gate { id: 3, kind: GateKind::Xor2, fanin: vec![1, 2] },
        ];
        let err = Netlist::from_parts(vec![0, 1], vec![3], gates).unwrap_err();
        assert!(matches!(err, NetlistError::CyclicNetlist { .. }), "{err:?}");
    }

    #[test]
    fn not_with_two_fanins_is_arity_mismatch() {
        let gates = vec![Gate { id: 2, kind: GateKind::Not, fanin: vec![0, 1] }];
        let n = Netlist::assemble(vec![0, 1], vec![2], gates);
        assert_eq!(
            n.validate(),
            Err(NetlistError::ArityMismatch { gate: 2, kind: GateKind::Not, got: 2, expected: 1 })
        );
    }

    #[test]
    fn undefined_fanin_and_output() {
        let gates = vec![Gate { id: 2, kind: GateKind::Buf, fanin: vec![7] }];
        let n = Netlist::assemble(vec![0, 1], vec![2], gates);
        assert_eq!(n.validate(), Err(NetlistError::UndefinedSignal { gate: 2, signal: 7 }));
        let n = Netlist::assemble(vec![0], vec![5], vec![]);
        assert_eq!(n.validate(), Err(NetlistError::UndefinedOutput { signal: 5 }));
    }

    #[test]
    fn from_parts_reorders_gates() {
        let gates = vec![
            Gate { id: 3, kind: GateKind::Not, fanin: vec![2] },
            Gate { id: 2, kind: GateKind::And2, fanin: vec![0, 1] },
        ];
        let n = Netlist::from_parts(vec![0, 1], vec![3], gates).unwrap();
        assert_eq!(n.gates()[0].id, 2);
        assert_eq!(n.evaluate(&[true, true]).unwrap(), vec![false]);
    }

    #[test]
    fn input_width_is_checked() {
        let n = xor_netlist();
        assert_eq!(n.evaluate(&[true]), Err(NetlistError::InputWidthMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn mux_selects_second_data_input_when_high() {
        for (sel, a, b) in [(false, false, true), (true, false, true), (false, true, false), (true, true, false)] {
            let expected = if sel { b } else { a };
            assert_eq!(GateKind::Mux2.eval(sel, a, b), expected);
        }
    }

    #[test]
    fn area_basics() {
        let costs = CostTable::<Rational64>::normalized();
        let empty = Netlist::assemble(vec![0], vec![0], vec![]);
        assert_eq!(empty.area_ge(&costs), Rational64::from_integer(0));
        let nand = chain(GateKind::Nand2, 1);
        assert_eq!(nand.area_ge(&costs), Rational64::from_integer(1));
        let x = xor_netlist();
        let doubled = x.disjoint_union(&x);
        assert_eq!(doubled.validate(), Ok(()));
        assert_eq!(doubled.area_ge(&costs), x.area_ge(&costs) * Rational64::from_integer(2));
    }

    #[test]
    fn delay_of_chains_and_diamonds() {
        let costs = CostTable::<Rational64>::normalized();
        assert_eq!(xor_netlist().critical_path_delay(&costs), Rational64::new(233, 100));
        let k = 7;
        assert_eq!(chain(GateKind::Nand2, k).critical_path_delay(&costs), Rational64::from_integer(k as i64));
        assert_eq!(chain(GateKind::Nand2, k).depth(), k);

        // two NAND paths of length 2 and 3 reconverging at a final NAND
        let mut b = Builder::new();
        let x = b.input();
        let y = b.input();
        let p1 = b.nand(x, y);
        let p1 = b.nand(p1, y);
        let p2 = b.nand(x, y);
        let p2 = b.nand(p2, x);
        let p2 = b.nand(p2, y);
        let top = b.nand(p1, p2);
        let n = b.finish(vec![top]).unwrap();
        assert_eq!(n.critical_path_delay(&costs), Rational64::from_integer(4));
        let n2 = Netlist::assemble(n.inputs().to_vec(), vec![p1, p2], n.gates()[..5].to_vec());
        assert_eq!(n2.critical_path_delay(&costs), Rational64::from_integer(3));
    }

    #[test]
    fn default_cost_table_is_valid() {
        let c = CostTable::<f64>::normalized();
        assert_eq!(c.validate(), Ok(()));
        assert_eq!(c.ge(GateKind::Nand2), 1.0);
        assert_eq!(c.ge(GateKind::Xor2), 2.33);
        assert_eq!(c.ge(GateKind::Buf), 0.0);
        assert_eq!(c.register_bit_ge, 4.0);
    }

    #[test]
    fn cost_table_json_keeps_rationals_exact() {
        let c = CostTable::<Rational64>::normalized();
        let back = CostTable::<Rational64>::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.ge(GateKind::Not), Rational64::new(67, 100));
    }

    #[test]
    fn cost_table_rejects_bad_nand() {
        let mut c = CostTable::<f64>::normalized();
        c.set(GateKind::Nand2, GateCost { ge: 1.5, delay: 1.0 });
        assert!(matches!(c.validate(), Err(CostTableError::NandNotUnit(_))));
        let mut c = CostTable::<f64>::normalized();
        c.set(GateKind::Xor2, GateCost { ge: 0.0, delay: 1.0 });
        assert!(matches!(c.validate(), Err(CostTableError::NonPositive { kind: GateKind::Xor2, .. })));
    }

    #[test]
    fn netlist_json_round_trip() {
        let n = chain(GateKind::Xor2, 3);
        let text = n.to_json();
        assert!(text.contains("\"kind\":\"XOR2\""));
        let back: Netlist = serde_json::from_str(&text).unwrap();
        assert_eq!(back, n);
        let cyclic = r#"{"inputs":[0],"outputs":[1],"gates":[{"id":1,"kind":"NOT","fanin":[1]}]}"#;
        assert!(serde_json::from_str::<Netlist>(cyclic).is_err());
    }

    #[test]
    fn hex_vectors() {
        let bits = byte_to_bits(0x63, 8);
        assert_eq!(bits_to_hex(&bits), "63");
        assert_eq!(hex_to_bits("63", 8).unwrap(), bits);
        assert_eq!(hex_to_bits("1ff", 8), None);
        let file = "00\n# comment\n\nff\n";
        let v = parse_vectors(file, 8).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(format_vectors(&v), "00\nff\n");
        assert_eq!(bits_to_hex(&[true, false, true]), "5");
    }
}
