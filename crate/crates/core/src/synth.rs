// SPDX-License-Identifier: Apache-2.0

//! Structural synthesis of the composite-field S-box and pipeline cutting.
//!
//! The S-box is assembled from the tower-field blocks: a top linear layer
//! (isomorphism, operand sums, scaled square), Karatsuba-style GF(2^4)
//! multipliers built from GF(2^2) products, the GF(2^4) inverter, and a
//! bottom linear layer that merges the inverse isomorphism with the affine
//! transform. Every multiplier is a set of NAND products followed by a
//! linear layer; the complements introduced by NAND are folded into XNOR
//! gates of the following layer.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{gf4_mul, FieldError, FieldParams};
use crate::netlist::{Builder, CostTable, GateKind, Netlist, NetlistError, SignalId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid field parameters: {0}")]
    InvalidParams(#[from] FieldError),
    #[error("synthesized netlist does not match the reference S-box: {0}")]
    NetlistMismatch(FieldError),
    #[error("netlist error: {0}")]
    Netlist(#[from] NetlistError),
    #[error("{requested} stages requested but the circuit is only {depth} gates deep")]
    TooManyStages { requested: usize, depth: usize },
    #[error("stage count must be at least 1")]
    ZeroStages,
    #[error("pipeline design is inconsistent: {0}")]
    InvalidDesign(String),
}

// ---------------------------------------------------------------------------
// Linear layers

/// A signal together with a flag saying it carries the complement of the
/// value it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Literal {
    pub signal: SignalId,
    pub inverted: bool,
}

impl Literal {
    pub fn plain(signal: SignalId) -> Self {
        Literal { signal, inverted: false }
    }

    pub fn complement(signal: SignalId) -> Self {
        Literal { signal, inverted: true }
    }
}

/// One output of a linear layer: the XOR of the selected sources, plus a
/// constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearTarget {
    pub terms: Vec<usize>,
    pub constant: bool,
}

impl LinearTarget {
    pub fn from_mask(mask: u64, constant: bool) -> Self {
        LinearTarget { terms: (0..64).filter(|i| (mask >> i) & 1 == 1).collect(), constant }
    }
}

/// Seeded tie-breaking orders tried per linear layer, for each strategy.
const PAIR_TRIES: u64 = 64;
const DISTANCE_TRIES: u64 = 24;
/// Largest source count for which the distance strategy is attempted.
const DISTANCE_MAX_SOURCES: usize = 20;

/// An XOR program: node `sources + k` is the XOR of the two nodes in
/// `ops[k]`; each target is the XOR of its `finals` nodes.
struct LinearPlan {
    ops: Vec<(usize, usize)>,
    finals: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ref {
    Source(usize),
    Gate(usize),
}

/// A plan lowered to concrete gates with polarity resolved.
struct Lowered {
    gates: Vec<(GateKind, Ref, Option<Ref>)>,
    outputs: Vec<Ref>,
}

impl Lowered {
    /// `(area in hundredths of a NAND, XOR depth)`.
    fn score(&self) -> (usize, u32) {
        let mut depth = vec![0u32; self.gates.len()];
        let at = |r: Ref, depth: &[u32]| match r {
            Ref::Source(_) => 0,
            Ref::Gate(g) => depth[g],
        };
        let mut area = 0;
        for (i, &(kind, a, b)) in self.gates.iter().enumerate() {
            let ins = at(a, &depth).max(b.map_or(0, |b| at(b, &depth)));
            depth[i] = if kind == GateKind::Not {
                area += 67;
                ins
            } else {
                area += 233;
                ins + 1
            };
        }
        let deepest = self.outputs.iter().map(|&r| at(r, &depth)).max().unwrap_or(0);
        (area, deepest)
    }
}

fn lower(plan: &LinearPlan, sources: &[Literal], targets: &[LinearTarget]) -> Lowered {
    let n_src = sources.len();
    let node_count = n_src + plan.ops.len();
    // polarity requested on nodes that are targets by themselves
    let mut want: Vec<Option<bool>> = vec![None; node_count];
    for (fin, t) in plan.finals.iter().zip(targets) {
        if let [node] = fin[..] {
            if node >= n_src && want[node].is_none() {
                want[node] = Some(t.constant);
            }
        }
    }
    let mut inv: Vec<bool> = sources.iter().map(|l| l.inverted).collect();
    let mut refs: Vec<Ref> = (0..n_src).map(Ref::Source).collect();
    let mut gates = Vec::new();
    for (k, &(a, b)) in plan.ops.iter().enumerate() {
        let natural = inv[a] ^ inv[b];
        let flip = want[n_src + k].is_some_and(|c| c != natural);
        gates.push((if flip { GateKind::Xnor2 } else { GateKind::Xor2 }, refs[a], Some(refs[b])));
        inv.push(natural ^ flip);
        refs.push(Ref::Gate(gates.len() - 1));
    }
    let mut done: HashMap<(Vec<usize>, bool), Ref> = HashMap::new();
    let mut outputs = Vec::with_capacity(targets.len());
    for (fin, t) in plan.finals.iter().zip(targets) {
        let mut key_set = fin.clone();
        key_set.sort_unstable();
        let key = (key_set, t.constant);
        if let Some(&r) = done.get(&key) {
            outputs.push(r);
            continue;
        }
        let parity = fin.iter().fold(t.constant, |acc, &n| acc ^ inv[n]);
        let out = if fin.len() == 1 {
            if parity {
                gates.push((GateKind::Not, refs[fin[0]], None));
                Ref::Gate(gates.len() - 1)
            } else {
                refs[fin[0]]
            }
        } else {
            // combine the two shallowest operands until one remains
            let depth_of = |gates: &[(GateKind, Ref, Option<Ref>)], r: Ref| -> u32 {
                fn go(gates: &[(GateKind, Ref, Option<Ref>)], r: Ref) -> u32 {
                    match r {
                        Ref::Source(_) => 0,
                        Ref::Gate(g) => {
                            let (_, a, b) = gates[g];
                            1 + go(gates, a).max(b.map_or(0, |b| go(gates, b)))
                        }
                    }
                }
                go(gates, r)
            };
            let mut pending: Vec<(u32, usize, Ref)> =
                fin.iter().map(|&n| (depth_of(&gates, refs[n]), n, refs[n])).collect();
            loop {
                pending.sort_by_key(|p| std::cmp::Reverse((p.0, p.1)));
                let (da, _, ra) = pending.pop().unwrap();
                let (db, _, rb) = pending.pop().unwrap();
                let kind = if pending.is_empty() && parity { GateKind::Xnor2 } else { GateKind::Xor2 };
                gates.push((kind, ra, Some(rb)));
                let r = Ref::Gate(gates.len() - 1);
                if pending.is_empty() {
                    break r;
                }
                pending.push((da.max(db) + 1, usize::MAX - gates.len(), r));
            }
        };
        done.insert(key, out);
        outputs.push(out);
    }
    Lowered { gates, outputs }
}

/// Removes duplicated terms, which cancel over GF(2).
fn reduced_terms(t: &LinearTarget) -> Vec<usize> {
    let mut terms = t.terms.clone();
    terms.sort_unstable();
    let mut out: Vec<usize> = Vec::new();
    for term in terms {
        if out.last() == Some(&term) {
            out.pop();
        } else {
            out.push(term);
        }
    }
    out
}

/// Common-pair extraction: repeatedly materializes the pair of nodes shared
/// by the most targets.
fn plan_pairs(n_src: usize, targets: &[LinearTarget], mut rng: Option<&mut ChaCha8Rng>) -> LinearPlan {
    let mut depth = vec![0u32; n_src];
    let mut ops = Vec::new();
    let mut sets: Vec<Vec<usize>> = targets.iter().map(reduced_terms).collect();
    loop {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for set in sets.iter().filter(|s| s.len() >= 2) {
            for (i, &u) in set.iter().enumerate() {
                for &v in &set[i + 1..] {
                    *counts.entry((u, v)).or_insert(0) += 1;
                }
            }
        }
        let top = counts.values().copied().max().unwrap_or(0);
        if top < 2 {
            break;
        }
        let mut best: Vec<(u32, (usize, usize))> = counts
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&(u, v), _)| (depth[u].max(depth[v]), (u, v)))
            .collect();
        best.sort_unstable();
        let (u, v) = match rng.as_deref_mut() {
            Some(r) => best[r.gen_range(0..best.len())].1,
            None => best[0].1,
        };
        let id = depth.len();
        ops.push((u, v));
        depth.push(depth[u].max(depth[v]) + 1);
        for set in sets.iter_mut() {
            if let (Ok(iu), Ok(iv)) = (set.binary_search(&u), set.binary_search(&v)) {
                set.remove(iu.max(iv));
                set.remove(iu.min(iv));
                set.push(id);
            }
        }
    }
    for set in &sets {
        assert!(!set.is_empty(), "linear target reduces to a constant");
    }
    LinearPlan { ops, finals: sets }
}

/// Summed target distance and squared norm of a candidate XOR.
type PairScore = (usize, i64);

/// Distance-guided synthesis: tracks, for every vector in the source span,
/// the fewest known nodes summing to it, and adds the XOR that most reduces
/// the summed target distances (larger squared norm on ties).
fn plan_distance(n_src: usize, targets: &[LinearTarget], mut rng: Option<&mut ChaCha8Rng>) -> Option<LinearPlan> {
    if n_src > DISTANCE_MAX_SOURCES {
        return None;
    }
    let masks: Vec<usize> = targets
        .iter()
        .map(|t| reduced_terms(t).iter().fold(0usize, |acc, &i| acc | 1 << i))
        .collect();
    if masks.contains(&0) {
        panic!("linear target reduces to a constant");
    }
    let mut table: Vec<u8> = (0..1usize << n_src).map(|v| v.count_ones() as u8).collect();
    let mut base: Vec<usize> = (0..n_src).map(|i| 1 << i).collect();
    let mut ops = Vec::new();
    loop {
        let dist: Vec<u8> = masks.iter().map(|&t| table[t] - 1).collect();
        if dist.iter().all(|&d| d == 0) {
            break;
        }
        let mut best: Option<(PairScore, Vec<(usize, usize)>)> = None;
        let mut immediate: Vec<(usize, usize)> = Vec::new();
        for i in 0..base.len() {
            for j in i + 1..base.len() {
                let e = base[i] ^ base[j];
                if table[e] <= 1 {
                    continue;
                }
                if masks.contains(&e) {
                    immediate.push((i, j));
                    continue;
                }
                let (mut sum, mut norm) = (0usize, 0i64);
                for (&t, &d) in masks.iter().zip(&dist) {
                    let nd = d.min(table[t ^ e]) as usize;
                    sum += nd;
                    norm += (nd * nd) as i64;
                }
                let key = (sum, -norm);
                match &mut best {
                    Some((k, ties)) if *k == key => ties.push((i, j)),
                    Some((k, _)) if *k < key => {}
                    _ => best = Some((key, vec![(i, j)])),
                }
            }
        }
        let pool = if immediate.is_empty() { best.map(|b| b.1).unwrap_or_default() } else { immediate };
        let (i, j) = match rng.as_deref_mut() {
            Some(r) => pool[r.gen_range(0..pool.len())],
            None => pool[0],
        };
        let e = base[i] ^ base[j];
        ops.push((i, j));
        base.push(e);
        for v in 0..table.len() {
            let w = v ^ e;
            if v < w {
                let (a, b) = (table[v], table[w]);
                table[v] = a.min(b + 1);
                table[w] = b.min(a + 1);
            }
        }
    }
    let node_of: HashMap<usize, usize> = base.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let finals = masks.iter().map(|m| vec![node_of[m]]).collect();
    Some(LinearPlan { ops, finals })
}

/// Builds an XOR network for `targets` over `sources`. Both the pair
/// extraction and the distance strategy run under several seeded orders;
/// the cheapest, then shallowest, network is emitted. Returns one signal
/// per target carrying its exact (non-complemented) value.
pub fn linear_layer(b: &mut Builder, sources: &[Literal], targets: &[LinearTarget]) -> Vec<SignalId> {
    let n = sources.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5b0c);
    let mut plans = vec![plan_pairs(n, targets, None)];
    for _ in 1..PAIR_TRIES {
        plans.push(plan_pairs(n, targets, Some(&mut rng)));
    }
    if let Some(p) = plan_distance(n, targets, None) {
        plans.push(p);
        for _ in 1..DISTANCE_TRIES {
            plans.extend(plan_distance(n, targets, Some(&mut rng)));
        }
    }
    let best = plans
        .iter()
        .map(|p| lower(p, sources, targets))
        .min_by_key(Lowered::score)
        .expect("at least one plan");
    let mut made: Vec<SignalId> = Vec::with_capacity(best.gates.len());
    let resolve = |r: Ref, made: &[SignalId]| match r {
        Ref::Source(i) => sources[i].signal,
        Ref::Gate(g) => made[g],
    };
    for &(kind, a, bb) in &best.gates {
        let a = resolve(a, &made);
        let s = match bb {
            Some(bb) => {
                let bb = resolve(bb, &made);
                b.gate(kind, &[a, bb])
            }
            None => b.gate(kind, &[a]),
        };
        made.push(s);
    }
    best.outputs.iter().map(|&r| resolve(r, &made)).collect()
}
// ---------------------------------------------------------------------------
// Tower-field structure as linear maps

/// Masks over an operand's four bits for its nine Karatsuba factors:
/// GF(2^2) digits `A0`, `A1`, `A0 + A1`, each expanded to `[e0, e1, e0 + e1]`.
const FACTOR_MASKS: [u64; 9] = [
    0b0001, 0b0010, 0b0011, // A0
    0b0100, 0b1000, 0b1100, // A1
    0b0101, 0b1010, 0b1111, // A0 + A1
];

/// Factor masks of a GF(2^2) pair `(e1, e0)` given as bit masks.
fn gf4_factors(e0: u64, e1: u64) -> [u64; 3] {
    [e0, e1, e0 ^ e1]
}

/// The GF(2^2) product of two factor triples, as two masks over the three
/// AND products `[e0 f0, e1 f1, (e0+e1)(f0+f1)]` shifted by `offset`.
fn gf4_product(offset: usize) -> (u64, u64) {
    let q0 = 1u64 << offset;
    let q1 = 1u64 << (offset + 1);
    let q2 = 1u64 << (offset + 2);
    (q0 ^ q1, q2 ^ q0)
}

/// Multiplication by a GF(2^2) constant as a map on `(lo, hi)` masks.
fn gf4_scale(constant: u8, lo: u64, hi: u64) -> (u64, u64) {
    let c_of_1 = gf4_mul(constant, 1);
    let c_of_w = gf4_mul(constant, 2);
    let pick = |bit: u8| -> u64 {
        let mut m = 0;
        if (c_of_1 >> bit) & 1 == 1 {
            m ^= lo;
        }
        if (c_of_w >> bit) & 1 == 1 {
            m ^= hi;
        }
        m
    };
    (pick(0), pick(1))
}

/// GF(2^4) product as four masks over the nine NAND/AND products formed by
/// pairing factor `k` of one operand with factor `k` of the other.
fn gf16_product_masks(params: &FieldParams) -> [u64; 4] {
    let (ll_lo, ll_hi) = gf4_product(0);
    let (hh_lo, hh_hi) = gf4_product(3);
    let (mm_lo, mm_hi) = gf4_product(6);
    let (phh_lo, phh_hi) = gf4_scale(params.phi, hh_lo, hh_hi);
    let lo = (ll_lo ^ phh_lo, ll_hi ^ phh_hi);
    let hi = (mm_lo ^ ll_lo, mm_hi ^ ll_hi);
    [lo.0, lo.1, hi.0, hi.1]
}

/// Expands a 4-bit operand given as four masks into its nine factor masks.
fn factor_masks_of(bits: [u64; 4]) -> [u64; 9] {
    let mut out = [0u64; 9];
    for (slot, fm) in out.iter_mut().zip(FACTOR_MASKS) {
        *slot = (0..4).filter(|i| (fm >> i) & 1 == 1).fold(0, |acc, i| acc ^ bits[i]);
    }
    out
}

/// Row masks of the linear map `a -> a^2 * lambda` on a nibble.
fn square_scale_masks(params: &FieldParams) -> [u64; 4] {
    let mut rows = [0u64; 4];
    for col in 0..4 {
        let image = crate::field::gf16_square_scale(1 << col, params);
        for (r, row) in rows.iter_mut().enumerate() {
            if (image >> r) & 1 == 1 {
                *row |= 1 << col;
            }
        }
    }
    rows
}

fn rows_of(m: &crate::field::BitMatrix8) -> [u64; 8] {
    m.0.map(u64::from)
}

/// Masks over the input byte for the tower nibbles `(lo, hi)`.
fn tower_nibble_masks(params: &FieldParams) -> ([u64; 4], [u64; 4]) {
    let rows = rows_of(&params.delta);
    ([rows[0], rows[1], rows[2], rows[3]], [rows[4], rows[5], rows[6], rows[7]])
}

fn nand_products(b: &mut Builder, lhs: &[SignalId], rhs: &[SignalId]) -> Vec<Literal> {
    lhs.iter().zip(rhs).map(|(&x, &y)| Literal::complement(b.nand(x, y))).collect()
}

fn targets(masks: &[u64]) -> Vec<LinearTarget> {
    masks.iter().map(|&m| LinearTarget::from_mask(m, false)).collect()
}

/// Structural choices for the S-box netlist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Build the composite factors of the high nibble next to the output
    /// multipliers from its four plain bits, instead of in the top layer.
    pub late_hi_factors: bool,
    /// Rebuild the composite factors of the nibble sum for the output
    /// multipliers instead of reusing the top-layer copies.
    pub late_sum_factors: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions::DEFAULT
    }
}

impl SynthOptions {
    pub const DEFAULT: SynthOptions = SynthOptions { late_hi_factors: false, late_sum_factors: true };

    pub fn all() -> [SynthOptions; 4] {
        [
            SynthOptions { late_hi_factors: false, late_sum_factors: false },
            SynthOptions { late_hi_factors: true, late_sum_factors: false },
            SynthOptions { late_hi_factors: false, late_sum_factors: true },
            SynthOptions { late_hi_factors: true, late_sum_factors: true },
        ]
    }
}

/// Factor expansion of a nibble whose four plain bits already exist.
fn late_factors(b: &mut Builder, plain: [SignalId; 4]) -> Vec<SignalId> {
    linear_layer(b, &plain.map(Literal::plain), &targets(&FACTOR_MASKS))
}

/// Synthesizes the S-box for `params` with the default structure and checks
/// it against the reference table on all 256 inputs.
pub fn synth_sbox(params: &FieldParams) -> Result<Netlist, SynthError> {
    synth_sbox_with(params, SynthOptions::DEFAULT)
}

/// [`synth_sbox`] with explicit structural options.
pub fn synth_sbox_with(params: &FieldParams, options: SynthOptions) -> Result<Netlist, SynthError> {
    params.validate()?;
    let mut b = Builder::new();
    let x: Vec<Literal> = b.inputs(8).into_iter().map(Literal::plain).collect();
    let (lo_m, hi_m) = tower_nibble_masks(params);
    let sum_m = [lo_m[0] ^ hi_m[0], lo_m[1] ^ hi_m[1], lo_m[2] ^ hi_m[2], lo_m[3] ^ hi_m[3]];

    // top layer: operand factors of the first multiplier and the scaled square
    let f_lo = factor_masks_of(lo_m);
    let f_sum = factor_masks_of(sum_m);
    let sq = square_scale_masks(params);
    let sq_of_hi: Vec<u64> = sq.iter().map(|&row| (0..4).filter(|i| (row >> i) & 1 == 1).fold(0, |a, i| a ^ hi_m[i])).collect();
    let mut top: Vec<u64> = Vec::new();
    top.extend(f_sum);
    top.extend(f_lo);
    top.extend(&sq_of_hi);
    if options.late_hi_factors {
        top.extend(hi_m);
    } else {
        top.extend(factor_masks_of(hi_m));
    }
    let top_sig = linear_layer(&mut b, &x, &targets(&top));
    let (fs, rest) = top_sig.split_at(9);
    let (fl, rest) = rest.split_at(9);
    let (sqh, fh) = rest.split_at(4);
    let fs = fs.to_vec();
    let fh = fh.to_vec();

    // (hi ^ lo) * lo
    let m1 = nand_products(&mut b, &fs, fl);
    let mul = gf16_product_masks(params);

    // d = m1 ^ hi^2 lambda, expanded to inverter factors
    let mut d_sources = m1.clone();
    d_sources.extend(sqh.iter().map(|&s| Literal::plain(s)));
    let d_bits: [u64; 4] = std::array::from_fn(|i| mul[i] | (1u64 << (9 + i)));
    let fd = linear_layer(&mut b, &d_sources, &targets(&factor_masks_of(d_bits)));

    // GF(2^4) inverse of d = (D1, D0): norm = phi D1^2 + D1 D0 + D0^2
    let cross = nand_products(&mut b, &fd[3..6], &fd[0..3]);
    let (c_lo, c_hi) = gf4_product(0);
    // square of (e1, e0) is (e1, e0 + e1); sources: 3 products then d0..d3
    let d = |i: usize| 1u64 << (3 + i);
    let (sq_d1_lo, sq_d1_hi) = (d(2) ^ d(3), d(3));
    let (phi_lo, phi_hi) = gf4_scale(params.phi, sq_d1_lo, sq_d1_hi);
    let norm_lo = c_lo ^ phi_lo ^ (d(0) ^ d(1));
    let norm_hi = c_hi ^ phi_hi ^ d(1);
    // inverse of the norm is its square; factors [e0, e1, e0 + e1] of (nh, nh + nl)
    let inv_factors = gf4_factors(norm_lo ^ norm_hi, norm_hi);
    let mut n_sources = cross.clone();
    n_sources.extend([fd[0], fd[1], fd[3], fd[4]].map(Literal::plain));
    let n_sig = linear_layer(&mut b, &n_sources, &targets(&inv_factors));

    // d' = (norm^-1 * D1, norm^-1 * (D0 + D1))
    let mut inv_products = nand_products(&mut b, &n_sig, &fd[3..6]);
    inv_products.extend(nand_products(&mut b, &n_sig, &fd[6..9]));
    let (l0, l1) = gf4_product(3);
    let (h0, h1) = gf4_product(0);
    let fdi = linear_layer(&mut b, &inv_products, &targets(&factor_masks_of([l0, l1, h0, h1])));

    // outputs: sigma_h = d' * hi, sigma_l = d' * (hi ^ lo), then A * delta^-1 + b
    let fs_out = if options.late_sum_factors { late_factors(&mut b, [fs[0], fs[1], fs[3], fs[4]]) } else { fs };
    let fh_out = if options.late_hi_factors { late_factors(&mut b, [fh[0], fh[1], fh[2], fh[3]]) } else { fh };
    let mut out_products = nand_products(&mut b, &fdi, &fs_out);
    out_products.extend(nand_products(&mut b, &fdi, &fh_out));
    // sigma bits over the 18 products: low nibble from the first nine
    let sigma: [u64; 8] = std::array::from_fn(|i| if i < 4 { mul[i] } else { mul[i - 4] << 9 });
    let out_rows = rows_of(&params.output_matrix());
    let out_targets: Vec<LinearTarget> = out_rows
        .iter()
        .enumerate()
        .map(|(r, &row)| {
            let mask = (0..8).filter(|c| (row >> c) & 1 == 1).fold(0, |acc, c| acc ^ sigma[c]);
            LinearTarget::from_mask(mask, (params.affine_b >> r) & 1 == 1)
        })
        .collect();
    let outputs = linear_layer(&mut b, &out_products, &out_targets);

    let netlist = b.finish(outputs)?;
    crate::field::first_sbox_mismatch(|v| netlist.evaluate_byte(v).unwrap_or(!crate::field::AES_SBOX[v as usize]))
        .map_err(SynthError::NetlistMismatch)?;
    Ok(netlist)
}

// ---------------------------------------------------------------------------
// Pipelining

/// A netlist split into `n_stages` combinational stages. Every stage ends in
/// a register rank: ranks `0..n_stages-1` latch the boundary cuts and the
/// last rank latches the primary outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PipelineRepr", into = "PipelineRepr")]
pub struct PipelineDesign {
    netlist: Netlist,
    n_stages: usize,
    stage_of_gate: Vec<usize>,
    register_cuts: Vec<Vec<SignalId>>,
    #[serde(skip)]
    plan: StagePlan,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct StagePlan {
    /// Gate indices evaluated in each stage, in topological order.
    pub stage_gates: Vec<Vec<usize>>,
    /// Signals captured by each register rank.
    pub rank_signals: Vec<Vec<SignalId>>,
}

#[derive(Serialize, Deserialize)]
struct PipelineRepr {
    netlist: Netlist,
    n_stages: usize,
    stage_of_gate: BTreeMap<SignalId, usize>,
    register_cuts: Vec<Vec<SignalId>>,
}

impl TryFrom<PipelineRepr> for PipelineDesign {
    type Error = SynthError;

    fn try_from(r: PipelineRepr) -> Result<Self, SynthError> {
        let stages = r
            .netlist
            .gates()
            .iter()
            .map(|g| {
                r.stage_of_gate
                    .get(&g.id)
                    .copied()
                    .ok_or_else(|| SynthError::InvalidDesign(format!("gate {} has no stage", g.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let design = PipelineDesign::from_assignment(r.netlist, r.n_stages, stages)?;
        if design.register_cuts != r.register_cuts {
            return Err(SynthError::InvalidDesign("register cuts do not match the stage assignment".into()));
        }
        Ok(design)
    }
}

impl From<PipelineDesign> for PipelineRepr {
    fn from(d: PipelineDesign) -> Self {
        let stage_of_gate = d.netlist.gates().iter().zip(&d.stage_of_gate).map(|(g, &s)| (g.id, s)).collect();
        PipelineRepr { netlist: d.netlist, n_stages: d.n_stages, stage_of_gate, register_cuts: d.register_cuts }
    }
}

impl PipelineDesign {
    /// Builds a design from an explicit per-gate stage assignment, deriving
    /// the register cuts.
    pub fn from_assignment(netlist: Netlist, n_stages: usize, stage_of_gate: Vec<usize>) -> Result<Self, SynthError> {
        if n_stages == 0 {
            return Err(SynthError::ZeroStages);
        }
        netlist.validate()?;
        if stage_of_gate.len() != netlist.gates().len() {
            return Err(SynthError::InvalidDesign("stage map length differs from gate count".into()));
        }
        if let Some(&s) = stage_of_gate.iter().find(|&&s| s >= n_stages) {
            return Err(SynthError::InvalidDesign(format!("stage {s} out of range")));
        }
        let design_stage = |sig: SignalId| netlist.driver_of(sig).map_or(0, |g| stage_of_gate[g]);
        for (gi, gate) in netlist.gates().iter().enumerate() {
            if let Some(&f) = gate.fanin.iter().find(|&&f| design_stage(f) > stage_of_gate[gi]) {
                return Err(SynthError::InvalidDesign(format!(
                    "gate {} in stage {} reads signal {f} from a later stage",
                    gate.id, stage_of_gate[gi]
                )));
            }
        }
        let register_cuts = derive_cuts(&netlist, n_stages, &stage_of_gate);
        let plan = make_plan(&netlist, n_stages, &stage_of_gate, &register_cuts);
        Ok(PipelineDesign { netlist, n_stages, stage_of_gate, register_cuts, plan })
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn stage_of_gate(&self) -> &[usize] {
        &self.stage_of_gate
    }

    pub fn register_cuts(&self) -> &[Vec<SignalId>] {
        &self.register_cuts
    }

    /// Signals latched by register rank `rank` (the last rank is the outputs).
    pub fn rank_signals(&self, rank: usize) -> &[SignalId] {
        &self.plan.rank_signals[rank]
    }

    pub fn rank_widths(&self) -> Vec<usize> {
        self.plan.rank_signals.iter().map(Vec::len).collect()
    }

    /// Total flip-flop bits over every rank, including the output rank.
    pub fn register_bits(&self) -> usize {
        self.plan.rank_signals.iter().map(Vec::len).sum()
    }

    /// Ids of the gates evaluated in `stage`, in evaluation order.
    pub fn stage_gate_ids(&self, stage: usize) -> Vec<SignalId> {
        self.plan.stage_gates[stage].iter().map(|&i| self.netlist.gates()[i].id).collect()
    }

    pub(crate) fn plan(&self) -> &StagePlan {
        &self.plan
    }

    /// Longest combinational path inside each stage.
    pub fn stage_delays<S: Scalar>(&self, costs: &CostTable<S>) -> Vec<S> {
        let local = local_arrivals(&self.netlist, &self.stage_of_gate, costs);
        let mut out = vec![S::zero(); self.n_stages];
        for (gi, &s) in self.stage_of_gate.iter().enumerate() {
            out[s] = out[s].max_of(local[gi]);
        }
        out
    }

    pub fn max_stage_delay<S: Scalar>(&self, costs: &CostTable<S>) -> S {
        self.stage_delays(costs).into_iter().fold(S::zero(), S::max_of)
    }

    /// Checks that each cut holds exactly the signals crossing its boundary.
    pub fn check_cuts(&self, cuts: &[Vec<SignalId>]) -> Result<(), SynthError> {
        let expected = derive_cuts(&self.netlist, self.n_stages, &self.stage_of_gate);
        if cuts.len() != expected.len() {
            return Err(SynthError::InvalidDesign(format!("expected {} cuts, got {}", expected.len(), cuts.len())));
        }
        for (i, (have, want)) in cuts.iter().zip(&expected).enumerate() {
            if let Some(missing) = want.iter().find(|s| !have.contains(s)) {
                return Err(SynthError::InvalidDesign(format!("signal {missing} crosses boundary {i} unlatched")));
            }
            if let Some(extra) = have.iter().find(|s| !want.contains(s)) {
                return Err(SynthError::InvalidDesign(format!("signal {extra} latched at boundary {i} is not needed")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline serializes")
    }

    /// Evaluates one stage: loads primary inputs (stage 0) or the previous
    /// rank, runs the stage's gates and returns the bits for this rank.
    /// `gate_hook` may rewrite any gate output.
    pub(crate) fn eval_stage(
        &self,
        stage: usize,
        prev: &[bool],
        scratch: &mut [bool],
        mut gate_hook: impl FnMut(usize, bool) -> bool,
        hooked: bool,
    ) -> Vec<bool> {
        let load: &[SignalId] = if stage == 0 { self.netlist.inputs() } else { &self.plan.rank_signals[stage - 1] };
        for (&sig, &v) in load.iter().zip(prev) {
            scratch[sig as usize] = v;
        }
        let gates = self.netlist.gates();
        for &gi in &self.plan.stage_gates[stage] {
            let gate = &gates[gi];
            let mut v = crate::netlist::eval_gate(gate, scratch);
            if hooked {
                v = gate_hook(gi, v);
            }
            scratch[gate.id as usize] = v;
        }
        self.plan.rank_signals[stage].iter().map(|&s| scratch[s as usize]).collect()
    }
}

fn derive_cuts(netlist: &Netlist, n_stages: usize, stage_of_gate: &[usize]) -> Vec<Vec<SignalId>> {
    let def = |sig: SignalId| netlist.driver_of(sig).map_or(0, |g| stage_of_gate[g]);
    // last stage that reads each signal; outputs count as read after the last stage
    let mut last_use: BTreeMap<SignalId, usize> = BTreeMap::new();
    for (gi, gate) in netlist.gates().iter().enumerate() {
        for &f in &gate.fanin {
            let e = last_use.entry(f).or_insert(0);
            *e = (*e).max(stage_of_gate[gi]);
        }
    }
    for &o in netlist.outputs() {
        last_use.insert(o, n_stages);
    }
    (0..n_stages.saturating_sub(1))
        .map(|boundary| {
            last_use
                .iter()
                .filter(|(&sig, &last)| def(sig) <= boundary && last > boundary)
                .map(|(&sig, _)| sig)
                .collect()
        })
        .collect()
}

fn make_plan(netlist: &Netlist, n_stages: usize, stage_of_gate: &[usize], cuts: &[Vec<SignalId>]) -> StagePlan {
    let mut stage_gates = vec![Vec::new(); n_stages];
    for (gi, &s) in stage_of_gate.iter().enumerate() {
        stage_gates[s].push(gi);
    }
    let mut rank_signals = cuts.to_vec();
    rank_signals.push(netlist.outputs().to_vec());
    StagePlan { stage_gates, rank_signals }
}

/// Arrival time of each gate measured from the start of its own stage.
fn local_arrivals<S: Scalar>(netlist: &Netlist, stage_of_gate: &[usize], costs: &CostTable<S>) -> Vec<S> {
    let mut local = vec![S::zero(); netlist.gates().len()];
    for (gi, gate) in netlist.gates().iter().enumerate() {
        let start = gate
            .fanin
            .iter()
            .filter_map(|&f| netlist.driver_of(f))
            .filter(|&fg| stage_of_gate[fg] == stage_of_gate[gi])
            .fold(S::zero(), |acc, fg| acc.max_of(local[fg]));
        local[gi] = start + costs.delay(gate.kind);
    }
    local
}

/// Earliest-stage greedy packing under a per-stage delay budget. Returns
/// the assignment and the number of stages it needs.
fn greedy_levels<S: Scalar>(netlist: &Netlist, costs: &CostTable<S>, budget: S) -> (Vec<usize>, usize) {
    let gates = netlist.gates();
    let mut stage = vec![0usize; gates.len()];
    let mut local = vec![S::zero(); gates.len()];
    let mut used = 1;
    for (gi, gate) in gates.iter().enumerate() {
        let fanin_gates: Vec<usize> = gate.fanin.iter().filter_map(|&f| netlist.driver_of(f)).collect();
        let s0 = fanin_gates.iter().map(|&f| stage[f]).max().unwrap_or(0);
        let start = fanin_gates
            .iter()
            .filter(|&&f| stage[f] == s0)
            .fold(S::zero(), |acc, &f| acc.max_of(local[f]));
        let delay = costs.delay(gate.kind);
        if start + delay > budget {
            stage[gi] = s0 + 1;
            local[gi] = delay;
        } else {
            stage[gi] = s0;
            local[gi] = start + delay;
        }
        used = used.max(stage[gi] + 1);
    }
    (stage, used)
}

/// Every value an intra-stage path delay can take: sums of gate delays
/// along contiguous path segments.
fn segment_delays<S: Scalar>(netlist: &Netlist, costs: &CostTable<S>) -> Vec<S> {
    let sort_dedup = |v: &mut Vec<S>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
    };
    let mut ending: Vec<Vec<S>> = Vec::with_capacity(netlist.gates().len());
    let mut all = Vec::new();
    for gate in netlist.gates() {
        let d = costs.delay(gate.kind);
        let mut here = vec![d];
        for f in gate.fanin.iter().filter_map(|&f| netlist.driver_of(f)) {
            here.extend(ending[f].iter().map(|&v| v + d));
        }
        sort_dedup(&mut here);
        all.extend(here.iter().copied());
        ending.push(here);
    }
    sort_dedup(&mut all);
    all
}

/// Cuts `netlist` into `n_stages` stages, minimizing the largest stage delay
/// reachable by earliest-stage greedy packing, then moving gates between
/// stages to reduce register bits without exceeding that delay.
pub fn cut_pipeline<S: Scalar>(netlist: &Netlist, n_stages: usize, costs: &CostTable<S>) -> Result<PipelineDesign, SynthError> {
    if n_stages == 0 {
        return Err(SynthError::ZeroStages);
    }
    netlist.validate()?;
    let depth = netlist.depth();
    if n_stages > depth.max(1) {
        return Err(SynthError::TooManyStages { requested: n_stages, depth });
    }
    let critical = netlist.critical_path_delay(costs);
    let slowest_gate = netlist.gates().iter().map(|g| costs.delay(g.kind)).fold(S::zero(), S::max_of);
    let lower = (critical / S::from_usize_lossy(n_stages)).max_of(slowest_gate);
    let mut assignment = None;
    for budget in segment_delays(netlist, costs).into_iter().filter(|&b| b >= lower) {
        let (stages, used) = greedy_levels(netlist, costs, budget);
        if used <= n_stages {
            assignment = Some((stages, budget));
            break;
        }
    }
    let (mut stages, budget) = match assignment {
        Some(a) => a,
        None => (vec![0; netlist.gates().len()], critical),
    };
    reduce_registers(netlist, n_stages, &mut stages, costs, budget);
    PipelineDesign::from_assignment(netlist.clone(), n_stages, stages)
}

/// Reassigns stages to minimize the total register bits while keeping every
/// stage within `budget`. Solved exactly as a minimum-weight closure over
/// the layered indicators `stage >= k`.
fn reduce_registers<S: Scalar>(netlist: &Netlist, n_stages: usize, stages: &mut [usize], costs: &CostTable<S>, budget: S) {
    if n_stages == 1 {
        return;
    }
    let gates = netlist.gates();
    let n = n_stages;
    // item layout: gate g layer k (1..n) at g*(n-1) + k-1, then mirrors
    let gate_item = |g: usize, k: usize| g * (n - 1) + k - 1;
    let mirror_base = gates.len() * (n - 1);
    let mut consumers: BTreeMap<SignalId, Vec<usize>> = BTreeMap::new();
    for (gi, g) in gates.iter().enumerate() {
        for &f in &g.fanin {
            consumers.entry(f).or_default().push(gi);
        }
    }
    for &o in netlist.outputs() {
        consumers.entry(o).or_default();
    }
    let mirrors: Vec<SignalId> = consumers.keys().copied().collect();
    let mirror_item = |m: usize, k: usize| mirror_base + m * n + k - 1;
    let total = mirror_base + mirrors.len() * n;

    let mut weights = vec![0i64; total];
    let mut implies = Vec::new();
    let mut forced_in = Vec::new();
    let mut forced_out = Vec::new();
    for g in 0..gates.len() {
        for k in 1..n - 1 {
            implies.push((gate_item(g, k + 1), gate_item(g, k)));
        }
    }
    // s_v >= s_u + w between gates
    let mut at_least = |u: usize, v: usize, w: usize| {
        for k in 1..n {
            if k + w < n {
                implies.push((gate_item(u, k), gate_item(v, k + w)));
            } else {
                forced_out.push(gate_item(u, k));
            }
        }
        if w >= 1 {
            forced_in.push(gate_item(v, w));
        }
    };
    for (gi, g) in gates.iter().enumerate() {
        for f in g.fanin.iter().filter_map(|&f| netlist.driver_of(f)) {
            at_least(f, gi, 0);
        }
    }
    let delays: Vec<S> = gates.iter().map(|g| costs.delay(g.kind)).collect();
    for u in 0..gates.len() {
        let mut dist: Vec<Option<S>> = vec![None; gates.len()];
        dist[u] = Some(delays[u]);
        for v in u + 1..gates.len() {
            let best = gates[v]
                .fanin
                .iter()
                .filter_map(|&f| netlist.driver_of(f))
                .filter_map(|f| dist[f])
                .fold(None, |acc: Option<S>, d| Some(acc.map_or(d, |a| a.max_of(d))));
            if let Some(d) = best {
                let d = d + delays[v];
                dist[v] = Some(d);
                if d > budget {
                    at_least(u, v, 1);
                }
            }
        }
    }
    for (m, sig) in mirrors.iter().enumerate() {
        for k in 1..=n {
            weights[mirror_item(m, k)] += 1;
            if k < n {
                implies.push((mirror_item(m, k + 1), mirror_item(m, k)));
            }
        }
        if let Some(g) = netlist.driver_of(*sig) {
            for k in 1..n {
                weights[gate_item(g, k)] -= 1;
            }
        }
        for &c in &consumers[sig] {
            for k in 1..n {
                implies.push((gate_item(c, k), mirror_item(m, k)));
            }
        }
        if netlist.outputs().contains(sig) {
            forced_in.push(mirror_item(m, n));
        }
    }
    let chosen = crate::flow::min_weight_closure(&weights, &implies, &forced_in, &forced_out);
    for (g, stage) in stages.iter_mut().enumerate() {
        *stage = (1..n).filter(|&k| chosen[gate_item(g, k)]).count();
    }
    debug_assert!(local_arrivals(netlist, stages, costs).into_iter().all(|v| v <= budget));
}

/// Fault-free cycle-accurate run. Entry `t` is the output visible during
/// cycle `t`; the input presented at cycle `t` appears at `t + n_stages`.
pub fn streaming_eval(design: &PipelineDesign, input_stream: &[u8]) -> Vec<Option<u8>> {
    if input_stream.is_empty() {
        return Vec::new();
    }
    let n = design.n_stages();
    let width = design.netlist().inputs().len();
    let mut scratch = vec![false; design.netlist().signal_count()];
    let mut ranks: Vec<Vec<bool>> = design.plan().rank_signals.iter().map(|r| vec![false; r.len()]).collect();
    let mut valid = vec![false; n];
    let mut out = Vec::with_capacity(input_stream.len() + n);
    for cycle in 0..input_stream.len() + n {
        out.push(valid[n - 1].then(|| crate::netlist::bits_to_u64(&ranks[n - 1]) as u8));
        let input = input_stream.get(cycle).copied();
        let mut next = Vec::with_capacity(n);
        for stage in 0..n {
            let prev = if stage == 0 {
                crate::netlist::byte_to_bits(input.unwrap_or(0), width)
            } else {
                ranks[stage - 1].clone()
            };
            next.push(design.eval_stage(stage, &prev, &mut scratch, |_, v| v, false));
        }
        ranks = next;
        for s in (1..n).rev() {
            valid[s] = valid[s - 1];
        }
        valid[0] = input.is_some();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gf16_mul, AES_SBOX};
    use num_rational::Rational64;

    fn eval_mask(mask: u64, bits: u64) -> bool {
        (mask & bits).count_ones() & 1 == 1
    }

    #[test]
    fn product_masks_reproduce_gf16_mul() {
        let p = FieldParams::default();
        let masks = gf16_product_masks(&p);
        for a in 0..16u8 {
            for b in 0..16u8 {
                let fa = factor_masks_of([1, 2, 4, 8]).map(|m| eval_mask(m, a as u64));
                let fb = factor_masks_of([1, 2, 4, 8]).map(|m| eval_mask(m, b as u64));
                let products: u64 = (0..9).fold(0, |acc, k| acc | (((fa[k] & fb[k]) as u64) << k));
                let got = (0..4).fold(0u8, |acc, i| acc | ((eval_mask(masks[i], products) as u8) << i));
                assert_eq!(got, gf16_mul(a, b, &p), "{a} * {b}");
            }
        }
    }

    #[test]
    fn linear_layer_handles_constants_and_complements() {
        let mut b = Builder::new();
        let ins = b.inputs(3);
        let n = b.not(ins[2]);
        let sources = [Literal::plain(ins[0]), Literal::plain(ins[1]), Literal::complement(n)];
        let t = vec![
            LinearTarget::from_mask(0b011, false),
            LinearTarget::from_mask(0b111, true),
            LinearTarget::from_mask(0b100, false),
            LinearTarget::from_mask(0b001, true),
            LinearTarget::from_mask(0b011, false),
        ];
        let outs = linear_layer(&mut b, &sources, &t);
        assert_eq!(outs[0], outs[4]);
        let netlist = b.finish(outs).unwrap();
        for v in 0..8u8 {
            let bits: Vec<bool> = (0..3).map(|i| (v >> i) & 1 == 1).collect();
            let got = netlist.evaluate(&bits).unwrap();
            let (x0, x1, x2) = (bits[0], bits[1], bits[2]);
            assert_eq!(got, vec![x0 ^ x1, !(x0 ^ x1 ^ x2), x2, !x0, x0 ^ x1]);
        }
    }

    #[test]
    fn synthesized_sbox_matches_table() {
        let n = synth_sbox(&FieldParams::default()).unwrap();
        for x in 0..=255u8 {
            assert_eq!(n.evaluate_byte(x).unwrap(), AES_SBOX[x as usize]);
        }
    }

    fn unit_chain(k: usize) -> Netlist {
        let mut b = Builder::new();
        let x = b.input();
        let y = b.input();
        let mut s = x;
        for _ in 0..k {
            s = b.nand(s, y);
        }
        b.finish(vec![s]).unwrap()
    }

    #[test]
    fn single_stage_has_no_cuts() {
        let costs = CostTable::<Rational64>::normalized();
        let n = unit_chain(6);
        let d = cut_pipeline(&n, 1, &costs).unwrap();
        assert!(d.register_cuts().is_empty());
        assert_eq!(d.max_stage_delay(&costs), n.critical_path_delay(&costs));
    }

    #[test]
    fn chain_of_ten_splits_evenly() {
        let costs = CostTable::<Rational64>::normalized();
        let d = cut_pipeline(&unit_chain(10), 5, &costs).unwrap();
        assert_eq!(d.max_stage_delay(&costs), Rational64::from_integer(2));
        assert_eq!(d.stage_delays(&costs), vec![Rational64::from_integer(2); 5]);
    }

    #[test]
    fn too_many_stages_is_rejected() {
        let costs = CostTable::<f64>::normalized();
        assert_eq!(
            cut_pipeline(&unit_chain(3), 4, &costs).unwrap_err(),
            SynthError::TooManyStages { requested: 4, depth: 3 }
        );
        assert_eq!(cut_pipeline(&unit_chain(3), 0, &costs).unwrap_err(), SynthError::ZeroStages);
    }

    #[test]
    fn streaming_latency_matches_stage_count() {
        let costs = CostTable::<f64>::normalized();
        let n = synth_sbox(&FieldParams::default()).unwrap();
        let d = cut_pipeline(&n, 5, &costs).unwrap();
        let out = streaming_eval(&d, &[0x00]);
        assert_eq!(out.len(), 6);
        assert_eq!(out[5], Some(0x63));
        assert!(out[..5].iter().all(Option::is_none));
        assert!(streaming_eval(&d, &[]).is_empty());
    }
}
