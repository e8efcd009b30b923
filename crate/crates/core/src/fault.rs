// SPDX-License-Identifier: Apache-2.0

//! Fault sites, fault models and single-fault scenarios.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::SignalId;
use crate::synth::PipelineDesign;

/// The fault-tolerance scheme wrapped around the pipelined S-box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// The bare pipeline with no redundancy.
    Original,
    /// Fault-correcting DMR: duplicated stages, comparators, hold voters.
    Hfs,
    /// Three pipelines with an output majority voter.
    Tmr,
    /// One pipeline computing every input three times, then voting.
    Ttr,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Original, Scheme::Hfs, Scheme::Tmr, Scheme::Ttr];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Original => "original",
            Scheme::Hfs => "hfs",
            Scheme::Tmr => "tmr",
            Scheme::Ttr => "ttr",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Number of hardware copies of the pipeline logic.
    pub fn replicas(self) -> u8 {
        match self {
            Scheme::Original | Scheme::Ttr => 1,
            Scheme::Hfs => 2,
            Scheme::Tmr => 3,
        }
    }

    /// Whether the scheme claims to survive single transient faults.
    pub fn tolerates_transient(self) -> bool {
        self != Scheme::Original
    }

    /// Whether the scheme claims to survive single permanent faults.
    pub fn tolerates_permanent(self) -> bool {
        self == Scheme::Tmr
    }

    /// Whether outputs keep a fixed latency (no stalls).
    pub fn fixed_latency(self) -> bool {
        self != Scheme::Hfs
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultSite {
    GateOutput { gate: SignalId, replica: u8 },
    /// Bit `bit` of register rank `stage` (the last rank holds the outputs).
    RegisterBit { stage: usize, bit: usize, replica: u8 },
    ComparatorOutput { stage: usize },
    VoterLatchBit { stage: usize, bit: usize },
}

impl FaultSite {
    pub fn kind(&self) -> SiteKind {
        match self {
            FaultSite::GateOutput { .. } => SiteKind::Gate,
            FaultSite::RegisterBit { .. } => SiteKind::Register,
            FaultSite::ComparatorOutput { .. } => SiteKind::Comparator,
            FaultSite::VoterLatchBit { .. } => SiteKind::Voter,
        }
    }

    pub fn replica(&self) -> Option<u8> {
        match *self {
            FaultSite::GateOutput { replica, .. } | FaultSite::RegisterBit { replica, .. } => Some(replica),
            _ => None,
        }
    }
}

impl fmt::Display for FaultSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultSite::GateOutput { gate, replica } => write!(f, "gate:{gate}:r{replica}"),
            FaultSite::RegisterBit { stage, bit, replica } => write!(f, "reg:{stage}.{bit}:r{replica}"),
            FaultSite::ComparatorOutput { stage } => write!(f, "cmp:{stage}"),
            FaultSite::VoterLatchBit { stage, bit } => write!(f, "voter:{stage}.{bit}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Gate,
    Register,
    Comparator,
    Voter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    StuckAt0,
    StuckAt1,
    BitFlip,
}

impl FaultModel {
    pub const ALL: [FaultModel; 3] = [FaultModel::StuckAt0, FaultModel::StuckAt1, FaultModel::BitFlip];

    #[inline]
    pub fn apply(self, value: bool) -> bool {
        match self {
            FaultModel::StuckAt0 => false,
            FaultModel::StuckAt1 => true,
            FaultModel::BitFlip => !value,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaultModel::StuckAt0 => "stuck_at_0",
            FaultModel::StuckAt1 => "stuck_at_1",
            FaultModel::BitFlip => "bit_flip",
        }
    }
}

/// How long a fault stays active. Serialized as a cycle count or the
/// string `"permanent"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultDuration {
    Cycles(u32),
    Permanent,
}

impl fmt::Display for FaultDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultDuration::Cycles(n) => write!(f, "{n}"),
            FaultDuration::Permanent => f.write_str("permanent"),
        }
    }
}

impl Serialize for FaultDuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FaultDuration::Cycles(n) => s.serialize_u32(*n),
            FaultDuration::Permanent => s.serialize_str("permanent"),
        }
    }
}

impl<'de> Deserialize<'de> for FaultDuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u32),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(FaultDuration::Cycles(n)),
            Repr::Text(t) if t == "permanent" => Ok(FaultDuration::Permanent),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unknown duration {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultSpec {
    pub site: FaultSite,
    pub model: FaultModel,
    pub start_cycle: u64,
    pub duration: FaultDuration,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultError {
    #[error("site {site} does not exist in the {scheme} design")]
    InvalidSite { site: FaultSite, scheme: Scheme },
    #[error("a bit flip is an event and cannot be permanent")]
    PermanentBitFlip,
    #[error("fault duration must be at least one cycle")]
    ZeroDuration,
}

impl FaultSpec {
    pub fn transient(site: FaultSite, model: FaultModel, start_cycle: u64, cycles: u32) -> Self {
        FaultSpec { site, model, start_cycle, duration: FaultDuration::Cycles(cycles) }
    }

    pub fn permanent(site: FaultSite, model: FaultModel) -> Self {
        FaultSpec { site, model, start_cycle: 0, duration: FaultDuration::Permanent }
    }

    #[inline]
    pub fn is_active(&self, cycle: u64) -> bool {
        cycle >= self.start_cycle
            && match self.duration {
                FaultDuration::Cycles(n) => cycle < self.start_cycle + n as u64,
                FaultDuration::Permanent => true,
            }
    }

    /// First cycle at which the fault is no longer active.
    pub fn end_cycle(&self) -> Option<u64> {
        match self.duration {
            FaultDuration::Cycles(n) => Some(self.start_cycle + n as u64),
            FaultDuration::Permanent => None,
        }
    }

    /// Checks the model/duration pairing and that the site exists.
    pub fn validate(&self, scheme: Scheme, design: &PipelineDesign) -> Result<(), FaultError> {
        match (self.model, self.duration) {
            (FaultModel::BitFlip, FaultDuration::Permanent) => return Err(FaultError::PermanentBitFlip),
            (_, FaultDuration::Cycles(0)) => return Err(FaultError::ZeroDuration),
            _ => {}
        }
        if !site_exists(scheme, design, &self.site) {
            return Err(FaultError::InvalidSite { site: self.site, scheme });
        }
        Ok(())
    }
}

fn site_exists(scheme: Scheme, design: &PipelineDesign, site: &FaultSite) -> bool {
    let widths = design.rank_widths();
    match *site {
        FaultSite::GateOutput { gate, replica } => {
            replica < scheme.replicas() && design.netlist().driver_of(gate).is_some()
        }
        FaultSite::RegisterBit { stage, bit, replica } => {
            replica < scheme.replicas() && stage < widths.len() && bit < widths[stage]
        }
        FaultSite::ComparatorOutput { stage } => scheme == Scheme::Hfs && stage < design.n_stages(),
        FaultSite::VoterLatchBit { stage, bit } => scheme == Scheme::Hfs && stage < widths.len() && bit < widths[stage],
    }
}

/// Every gate output of a combinational netlist, replica 0.
pub fn enumerate_netlist_sites(netlist: &crate::netlist::Netlist) -> Vec<FaultSite> {
    netlist.gates().iter().map(|g| FaultSite::GateOutput { gate: g.id, replica: 0 }).collect()
}

/// Every fault site of `scheme` built on `design`, in a fixed order: gate
/// outputs and register bits per replica, then comparators and voter
/// latch bits.
pub fn enumerate_sites(scheme: Scheme, design: &PipelineDesign) -> Vec<FaultSite> {
    let mut sites = Vec::new();
    let widths = design.rank_widths();
    for replica in 0..scheme.replicas() {
        sites.extend(design.netlist().gates().iter().map(|g| FaultSite::GateOutput { gate: g.id, replica }));
        for (stage, &w) in widths.iter().enumerate() {
            sites.extend((0..w).map(|bit| FaultSite::RegisterBit { stage, bit, replica }));
        }
    }
    if scheme == Scheme::Hfs {
        sites.extend((0..design.n_stages()).map(|stage| FaultSite::ComparatorOutput { stage }));
        for (stage, &w) in widths.iter().enumerate() {
            sites.extend((0..w).map(|bit| FaultSite::VoterLatchBit { stage, bit }));
        }
    }
    sites
}

/// The faults active in one cycle, grouped by where they strike.
#[derive(Debug, Default, Clone)]
pub(crate) struct ActiveFaults {
    /// `(replica, gate index, model)`
    pub gates: Vec<(u8, usize, FaultModel)>,
    /// `(replica, rank, bit, model)`
    pub registers: Vec<(u8, usize, usize, FaultModel)>,
    pub comparators: Vec<(usize, FaultModel)>,
    pub voters: Vec<(usize, usize, FaultModel)>,
}

impl ActiveFaults {
    pub fn collect(faults: &[FaultSpec], cycle: u64, design: &PipelineDesign) -> Self {
        let mut out = ActiveFaults::default();
        for f in faults.iter().filter(|f| f.is_active(cycle)) {
            match f.site {
                FaultSite::GateOutput { gate, replica } => {
                    if let Some(gi) = design.netlist().driver_of(gate) {
                        out.gates.push((replica, gi, f.model));
                    }
                }
                FaultSite::RegisterBit { stage, bit, replica } => out.registers.push((replica, stage, bit, f.model)),
                FaultSite::ComparatorOutput { stage } => out.comparators.push((stage, f.model)),
                FaultSite::VoterLatchBit { stage, bit } => out.voters.push((stage, bit, f.model)),
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty() && self.registers.is_empty() && self.comparators.is_empty() && self.voters.is_empty()
    }

    pub fn gate_hook(&self, replica: u8) -> (impl Fn(usize, bool) -> bool + '_, bool) {
        let any = self.gates.iter().any(|g| g.0 == replica);
        let hook = move |gi: usize, v: bool| {
            self.gates.iter().filter(|g| g.0 == replica && g.1 == gi).fold(v, |v, g| g.2.apply(v))
        };
        (hook, any)
    }

    /// Applies register faults of `replica` to the bits captured by `rank`.
    pub fn corrupt_capture(&self, replica: u8, rank: usize, bits: &mut [bool]) {
        for &(r, s, b, m) in &self.registers {
            if r == replica && s == rank && b < bits.len() {
                bits[b] = m.apply(bits[b]);
            }
        }
    }

    pub fn corrupt_comparator(&self, stage: usize, err: bool) -> bool {
        self.comparators.iter().filter(|c| c.0 == stage).fold(err, |e, c| c.1.apply(e))
    }

    pub fn corrupt_voter_read(&self, rank: usize, bits: &mut [bool]) {
        for &(s, b, m) in &self.voters {
            if s == rank && b < bits.len() {
                bits[b] = m.apply(bits[b]);
            }
        }
    }
}
