// SPDX-License-Identifier: Apache-2.0

use ftsbox::fault::Scheme;
use ftsbox::metrics::*;
use ftsbox::netlist::{GateCost, GateKind};
use ftsbox::*;
use num_rational::Rational64;

fn design<S: Scalar>(costs: &CostTable<S>) -> PipelineDesign {
    cut_pipeline(&synth_sbox(&FieldParams::DEFAULT).unwrap(), 5, costs).unwrap()
}

fn row<S: Scalar>(rows: &[MetricsRow<S>], s: Scheme) -> MetricsRow<S> {
    rows.iter().find(|r| r.design == s).unwrap().clone()
}

#[test]
fn published_cells_recompute() {
    let pct = |a: f64, b: f64| overhead(a, b).unwrap() * 100.0;
    assert!((pct(503.46, 212.42) - 137.0).abs() < 1.0);
    assert!((pct(673.31, 212.42) - 216.0).abs() < 1.0);
    assert!((pct(279.02, 212.42) - 31.35).abs() < 1.0);
    assert!((pct(492.0, 555.0) + 11.3).abs() < 1.0);
    assert_eq!(overhead(5.0, 5.0).unwrap(), 0.0);
    assert_eq!(overhead(1.0, 0.0), Err(MetricsError::ZeroBaseline));
}

#[test]
fn guarantee_flags() {
    let costs = CostTableF64::normalized();
    let rows = measure_all(&design(&costs), &costs);
    let flags: Vec<(bool, bool)> = Scheme::ALL.iter().map(|&s| {
        let r = row(&rows, s);
        (r.tolerates_transient, r.tolerates_permanent)
    }).collect();
    assert_eq!(flags, vec![(false, false), (true, false), (true, true), (true, false)]);
}

#[test]
fn frequency_relations() {
    let costs = CostTableExact::normalized();
    let d = design(&costs);
    let rows = measure_all(&d, &costs);
    let o = row(&rows, Scheme::Original);
    assert!(row(&rows, Scheme::Tmr).max_freq <= o.max_freq);
    assert!(Rational64::from_integer(1) / row(&rows, Scheme::Hfs).max_freq >= d.max_stage_delay(&costs));
    let ttr = row(&rows, Scheme::Ttr);
    assert_eq!(ttr.throughput * Rational64::from_integer(3), ttr.max_freq * Rational64::from_integer(8));
    assert_eq!(o.throughput, o.max_freq * Rational64::from_integer(8));
}

#[test]
fn exact_and_float_tables_agree() {
    let fc = CostTableF64::normalized();
    let ec = CostTableExact::normalized();
    let f = measure_all(&design(&fc), &fc);
    let e = measure_all(&design(&ec), &ec);
    for (a, b) in f.iter().zip(&e) {
        assert!((a.area_ge - b.area_ge.to_f64_lossy()).abs() < 1e-9);
        assert!((a.max_freq - b.max_freq.to_f64_lossy()).abs() < 1e-12);
    }
}

#[test]
fn custom_cost_table_keeps_orderings() {
    let mut costs = CostTableExact::normalized();
    costs.set(GateKind::Xor2, GateCost { ge: Rational64::new(3, 1), delay: Rational64::new(2, 1) });
    costs.set(GateKind::Mux2, GateCost { ge: Rational64::new(5, 2), delay: Rational64::new(2, 1) });
    costs.register_bit_ge = Rational64::new(9, 2);
    costs.validate().unwrap();
    let base = CostTableExact::normalized();
    let d = design(&costs);
    let rows = measure_all(&d, &costs);
    let area = |s| row(&rows, s).area_ge;
    assert!(area(Scheme::Original) < area(Scheme::Ttr));
    assert!(area(Scheme::Ttr) < area(Scheme::Hfs));
    assert!(area(Scheme::Hfs) < area(Scheme::Tmr));
    assert_ne!(area(Scheme::Original), row(&measure_all(&design(&base), &base), Scheme::Original).area_ge);
}

#[test]
fn single_original_row_has_zero_overheads() {
    let costs = CostTableF64::normalized();
    let r = measure_design(Scheme::Original, &design(&costs), &costs);
    let csv = render_table(&[r], TableFormat::Csv).unwrap();
    let line = csv.lines().nth(1).unwrap();
    let cells: Vec<&str> = line.split(',').collect();
    assert_eq!(cells[0], "original");
    assert_eq!((cells[2], cells[4], cells[6]), ("0.000000", "0.000000", "0.000000"));
}

#[test]
fn missing_baseline_is_an_error() {
    let costs = CostTableF64::normalized();
    let r = measure_design(Scheme::Hfs, &design(&costs), &costs);
    assert_eq!(render_table(&[r], TableFormat::Text), Err(MetricsError::MissingBaseline));
}

#[test]
fn csv_and_json_carry_identical_values() {
    let costs = CostTableExact::normalized();
    let rows = measure_all(&design(&costs), &costs);
    let csv = render_table(&rows, TableFormat::Csv).unwrap();
    let json: Vec<RenderedRow> = serde_json::from_str(&render_table(&rows, TableFormat::Json).unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    let parsed: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(parsed.len(), 4);
    for (cells, j) in parsed.iter().zip(&json) {
        assert_eq!(cells[0], j.design);
        let nums = [j.area_ge, j.area_ovh_pct, j.freq_norm, j.freq_ovh_pct, j.throughput_norm, j.thr_ovh_pct];
        for (c, v) in cells[1..7].iter().zip(nums) {
            assert_eq!(c.parse::<f64>().unwrap(), v);
        }
        assert_eq!(cells[7], j.transient_ok.to_string());
        assert_eq!(cells[8], j.permanent_ok.to_string());
    }
    let text = render_table(&rows, TableFormat::Text).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text, render_table(&rows, TableFormat::Text).unwrap());
}
