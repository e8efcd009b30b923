// SPDX-License-Identifier: Apache-2.0

use ftsbox::field::AES_SBOX;
use ftsbox::netlist::Builder;
use ftsbox::*;
use num_rational::Rational64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn sbox() -> Netlist {
    static SBOX: OnceLock<Netlist> = OnceLock::new();
    SBOX.get_or_init(|| synth_sbox(&FieldParams::DEFAULT).unwrap()).clone()
}

/// A random mix of 30 XOR2/NAND2 gates over 8 inputs.
fn random_network(seed: u64) -> Netlist {
    let mut b = Builder::new();
    let mut pool = b.inputs(8);
    let mut s = seed | 1;
    for _ in 0..30 {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        let a = pool[(s % pool.len() as u64) as usize];
        let c = pool[((s >> 20) % pool.len() as u64) as usize];
        let g = if s & 1 == 0 { b.xor(a, c) } else { b.nand(a, c) };
        pool.push(g);
    }
    let outs = pool[pool.len() - 8..].to_vec();
    b.finish(outs).unwrap()
}

fn assert_pipelines_correctly(n: &Netlist, k: usize) {
    let costs = CostTableF64::normalized();
    let d = cut_pipeline(n, k, &costs).unwrap();
    let slowest = n.gates().iter().map(|g| costs.delay(g.kind)).fold(0.0, f64::max);
    let fastest_possible = (n.critical_path_delay(&costs) / k as f64).max(slowest);
    assert!(d.max_stage_delay(&costs) >= fastest_possible - 1e-9);
    let stream: Vec<u8> = (0..=255).collect();
    let out = streaming_eval(&d, &stream);
    for x in 0..=255u8 {
        assert_eq!(out[x as usize + k], Some(n.evaluate_byte(x).unwrap()));
    }
}

#[test]
fn slow_gate_wider_than_the_even_split() {
    assert_pipelines_correctly(&random_network(15954419811765538202), 3);
}

#[test]
fn every_synthesis_option_matches_the_table() {
    for opts in SynthOptions::all() {
        let n = synth_sbox_with(&FieldParams::DEFAULT, opts).unwrap();
        for x in 0..=255u8 {
            assert_eq!(n.evaluate_byte(x).unwrap(), AES_SBOX[x as usize], "{opts:?}");
        }
    }
}

#[test]
fn alternative_field_parameters_synthesize() {
    let mut checked = 0;
    for p in FieldParams::candidates().into_iter().step_by(16) {
        let n = synth_sbox(&p).unwrap();
        assert!((0..=255u8).all(|x| n.evaluate_byte(x).unwrap() == AES_SBOX[x as usize]));
        checked += 1;
    }
    assert_eq!(checked, 8);
}

#[test]
fn gate_area_is_within_band() {
    let area = sbox().area_ge(&CostTableExact::normalized());
    assert!(area >= Rational64::from_integer(150) && area <= Rational64::from_integer(280), "{area}");
}

#[test]
fn max_stage_delay_never_increases_with_depth() {
    let costs = CostTableExact::normalized();
    let n = sbox();
    let cp = n.critical_path_delay(&costs);
    let mut prev = cp;
    for k in 1..=8 {
        let d = cut_pipeline(&n, k, &costs).unwrap();
        let msd = d.max_stage_delay(&costs);
        assert!(msd <= prev, "{k} stages: {msd} > {prev}");
        assert!(msd * Rational64::from_integer(k as i64) >= cp);
        assert_eq!(d.register_cuts().len(), k - 1);
        assert_eq!(d.rank_widths().last(), Some(&8));
        prev = msd;
    }
}

#[test]
fn five_stage_register_count() {
    let costs = CostTableExact::normalized();
    let d = cut_pipeline(&sbox(), 5, &costs).unwrap();
    assert_eq!(d.rank_widths().len(), 5);
    assert_eq!(d.register_bits(), d.rank_widths().iter().sum::<usize>());
    assert!(d.register_bits() <= 80, "{:?}", d.rank_widths());
}

#[test]
fn zero_and_excess_stages_are_rejected() {
    let costs = CostTableF64::normalized();
    let n = sbox();
    assert!(matches!(cut_pipeline(&n, 0, &costs), Err(SynthError::ZeroStages)));
    let depth = n.depth();
    assert!(matches!(cut_pipeline(&n, depth + 1, &costs), Err(SynthError::TooManyStages { .. })));
    assert!(cut_pipeline(&n, depth, &costs).is_ok());
}

#[test]
fn design_json_round_trip() {
    let d = cut_pipeline(&sbox(), 5, &CostTableF64::normalized()).unwrap();
    let back: PipelineDesign = serde_json::from_str(&d.to_json()).unwrap();
    assert_eq!(back.register_cuts(), d.register_cuts());
    assert_eq!(back.stage_of_gate(), d.stage_of_gate());
    let stream: Vec<u8> = (0..=255).collect();
    assert_eq!(streaming_eval(&back, &stream), streaming_eval(&d, &stream));
}

#[test]
fn netlist_json_round_trip_preserves_function() {
    let n = sbox();
    let back: Netlist = serde_json::from_str(&n.to_json()).unwrap();
    assert!((0..=255u8).all(|x| back.evaluate_byte(x).unwrap() == n.evaluate_byte(x).unwrap()));
}

#[test]
fn disjoint_union_evaluates_both_halves() {
    let n = sbox();
    let u = n.disjoint_union(&n);
    assert_eq!(u.inputs().len(), 16);
    assert_eq!(u.outputs().len(), 16);
    let mut bits = netlist::byte_to_bits(0x53, 8);
    bits.extend(netlist::byte_to_bits(0x00, 8));
    let out = u.evaluate(&bits).unwrap();
    assert_eq!(netlist::bits_to_u64(&out[..8]) as u8, 0xed);
    assert_eq!(netlist::bits_to_u64(&out[8..]) as u8, 0x63);
}

proptest! {
    #[test]
    fn streaming_matches_combinational(stream in proptest::collection::vec(any::<u8>(), 0..64), k in 1usize..7) {
        let n = sbox();
        let d = cut_pipeline(&n, k, &CostTableF64::normalized()).unwrap();
        let out = streaming_eval(&d, &stream);
        if stream.is_empty() {
            prop_assert!(out.is_empty());
        } else {
            prop_assert_eq!(out.len(), stream.len() + k);
            prop_assert!(out[..k].iter().all(Option::is_none));
            for (i, &x) in stream.iter().enumerate() {
                prop_assert_eq!(out[i + k], Some(AES_SBOX[x as usize]));
            }
        }
    }

    #[test]
    fn random_networks_pipeline_correctly(seed in any::<u64>(), k in 1usize..4) {
        let n = random_network(seed);
        prop_assume!(n.depth() >= k);
        assert_pipelines_correctly(&n, k);
    }
}
