// SPDX-License-Identifier: Apache-2.0

use ftsbox::fault::{FaultModel, FaultSite, FaultSpec, Scheme};
use ftsbox::field::AES_SBOX;
use ftsbox::redundancy::*;
use ftsbox::*;

fn design(n: usize) -> PipelineDesign {
    let netlist = synth_sbox(&FieldParams::DEFAULT).unwrap();
    cut_pipeline(&netlist, n, &CostTableF64::normalized()).unwrap()
}

fn run(scheme: Scheme, d: &PipelineDesign, stream: &[u8], faults: &[FaultSpec]) -> StreamRun {
    let mut m = build_machine(scheme, d);
    run_stream(&mut m, stream, faults, default_cycle_cap(d, stream.len()))
}

#[test]
fn fault_free_machines_compute_the_sbox() {
    let d = design(5);
    let stream: Vec<u8> = (0..=255).collect();
    let expected: Vec<u8> = stream.iter().map(|&x| AES_SBOX[x as usize]).collect();
    for scheme in Scheme::ALL {
        let r = run(scheme, &d, &stream, &[]);
        assert!(r.completed, "{scheme}");
        assert_eq!(r.stalls, 0);
        assert_eq!(r.outputs(), expected, "{scheme}");
    }
}

#[test]
fn original_machine_matches_streaming_eval_cycle_by_cycle() {
    let d = design(4);
    let stream = [0x00, 0x53, 0xff, 0x10, 0x7c];
    let r = run(Scheme::Original, &d, &stream, &[]);
    let reference = streaming_eval(&d, &stream);
    let outs: Vec<Option<u8>> = r.trace.iter().map(|c| c.output).collect();
    assert_eq!(outs, reference);
}

#[test]
fn latencies_per_scheme() {
    let d = design(5);
    let first_output = |s| run(s, &d, &[0x01], &[]).trace.iter().position(|c| c.output.is_some()).unwrap();
    assert_eq!(first_output(Scheme::Original), 5);
    assert_eq!(first_output(Scheme::Tmr), 5);
    assert_eq!(first_output(Scheme::Hfs), 5);
    // three passes, then one cycle through the vote
    assert_eq!(first_output(Scheme::Ttr), 5 + 2 + 1);
}

#[test]
fn ttr_consumes_one_input_every_three_cycles() {
    let d = design(5);
    let stream: Vec<u8> = (0..30).collect();
    let r = run(Scheme::Ttr, &d, &stream, &[]);
    let accepted: Vec<u64> = r.trace.iter().filter(|c| c.accepted).map(|c| c.cycle).collect();
    assert_eq!(accepted.len(), 30);
    assert!(accepted.windows(2).all(|w| w[1] - w[0] == 3));
    let out_cycles: Vec<u64> = r.trace.iter().filter(|c| c.output.is_some()).map(|c| c.cycle).collect();
    assert!(out_cycles.windows(2).all(|w| w[1] - w[0] == 3));
}

#[test]
fn empty_stream_runs_no_cycles() {
    let d = design(5);
    for scheme in Scheme::ALL {
        let r = run(scheme, &d, &[], &[]);
        assert!(r.trace.is_empty() && r.completed);
    }
}

#[test]
fn fcdmr_one_cycle_transient_stalls_and_recovers() {
    let d = design(5);
    let gate = d.stage_gate_ids(2)[0];
    let stream: Vec<u8> = (0..40).collect();
    let fault = FaultSpec::transient(FaultSite::GateOutput { gate, replica: 0 }, FaultModel::BitFlip, 10, 1);
    let r = run(Scheme::Hfs, &d, &stream, &[fault]);
    let golden = run(Scheme::Hfs, &d, &stream, &[]);
    assert_eq!(r.stalls, 1);
    assert_eq!(r.outputs(), golden.outputs());
    let bad = &r.trace[10];
    assert!(bad.global_err && bad.err[2] && !bad.accepted && bad.output.is_none());
    assert_eq!(r.trace.len(), golden.trace.len() + 1);
}

#[test]
fn fcdmr_holds_while_a_fault_persists() {
    let d = design(5);
    let stream: Vec<u8> = (0..20).collect();
    let site = FaultSite::RegisterBit { stage: 1, bit: 0, replica: 1 };
    let mut stalls = Vec::new();
    for cycles in [1, 3, 6] {
        let fault = FaultSpec::transient(site, FaultModel::BitFlip, 4, cycles);
        let r = run(Scheme::Hfs, &d, &stream, &[fault]);
        assert_eq!(r.outputs(), run(Scheme::Hfs, &d, &stream, &[]).outputs());
        stalls.push(r.stalls);
    }
    assert_eq!(stalls, vec![1, 3, 6]);
}

#[test]
fn fcdmr_input_queue_buffers_offered_bytes_during_stalls() {
    let d = design(3);
    let site = FaultSite::RegisterBit { stage: 0, bit: 0, replica: 0 };
    let fault = FaultSpec::transient(site, FaultModel::BitFlip, 2, 4);
    let mut m = FcDmrMachine::new(&d);
    for t in 0..6u8 {
        m.cycle(Some(t), &[fault]);
    }
    // accepted cycles 0, 1, then stalled 2..=5
    assert_eq!(m.input_queue().iter().copied().collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    assert_eq!(m.stall_cycles(), 4);
}

#[test]
fn stuck_comparator_low_lets_corruption_through() {
    let d = design(5);
    let stream: Vec<u8> = (0..32).collect();
    let gate = d.stage_gate_ids(4)[0];
    let faults = [
        FaultSpec::permanent(FaultSite::ComparatorOutput { stage: 4 }, FaultModel::StuckAt0),
        FaultSpec::permanent(FaultSite::GateOutput { gate, replica: 0 }, FaultModel::StuckAt1),
    ];
    let r = run(Scheme::Hfs, &d, &stream, &faults);
    assert_ne!(r.outputs(), run(Scheme::Hfs, &d, &stream, &[]).outputs());
}

#[test]
fn tmr_masks_a_whole_faulty_replica() {
    let d = design(5);
    let stream: Vec<u8> = (0..=255).collect();
    let faults: Vec<FaultSpec> = d
        .netlist()
        .gates()
        .iter()
        .take(20)
        .map(|g| FaultSpec::permanent(FaultSite::GateOutput { gate: g.id, replica: 2 }, FaultModel::StuckAt1))
        .collect();
    let r = run(Scheme::Tmr, &d, &stream, &faults);
    assert_eq!(r.outputs(), run(Scheme::Tmr, &d, &stream, &[]).outputs());
}

#[test]
fn trace_serializes_as_json_lines() {
    let d = design(2);
    let r = run(Scheme::Hfs, &d, &[1, 2], &[]);
    let text = r.to_json_lines();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), r.trace.len());
    let back: CycleRecord = serde_json::from_str(lines[2]).unwrap();
    assert_eq!(back, r.trace[2]);
    assert!(lines[0].contains("\"Err\":false"));
}
