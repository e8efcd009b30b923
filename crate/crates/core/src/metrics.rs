// SPDX-License-Identifier: Apache-2.0

//! Area, frequency and throughput of the four designs, with overheads
//! relative to the unprotected pipeline.
//!
//! Protection hardware is estimated structurally from the cost table:
//!
//! - hfs: a second copy of logic and registers, 1 MUX2 per voter bit,
//!   `w` XOR2 plus `w - 1` OR2 per rank comparator, `N - 1` OR2 in the control.
//! - tmr: two extra copies and a 2 AND2 + 2 OR2 majority per output bit.
//! - ttr: a 3-slot result buffer with load MUX2s, the output majority, a
//!   2-bit phase counter, a 2-bit pass tag per rank and the slot decode.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::Scheme;
use crate::netlist::{CostTable, GateKind};
use crate::scalar::Scalar;
use crate::synth::PipelineDesign;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("overhead baseline must be positive")]
    ZeroBaseline,
    #[error("rows do not include the original design")]
    MissingBaseline,
    #[error("unknown table format `{0}` (expected csv, json or text)")]
    UnknownFormat(String),
}

/// `(c_ft - c_0) / c_0`.
pub fn overhead<S: Scalar>(c_ft: S, c_0: S) -> Result<S, MetricsError> {
    if c_0 <= S::zero() {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok((c_ft - c_0) / c_0)
}

pub fn throughput<S: Scalar>(max_freq: S, bits_per_result: u32, cycles_per_result: u32) -> S {
    max_freq * S::from_u32(bits_per_result).unwrap() / S::from_u32(cycles_per_result).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow<S> {
    pub design: Scheme,
    pub area_ge: S,
    pub area_overhead_pct: S,
    /// `1 / clock period` in inverse normalized delay units.
    pub max_freq: S,
    pub freq_overhead_pct: S,
    /// Output bits per normalized time unit.
    pub throughput: S,
    pub throughput_overhead_pct: S,
    pub tolerates_transient: bool,
    pub tolerates_permanent: bool,
}

pub fn cycles_per_result(scheme: Scheme) -> u32 {
    if scheme == Scheme::Ttr {
        3
    } else {
        1
    }
}

fn count<S: Scalar>(n: usize) -> S {
    S::from_usize_lossy(n)
}

fn majority_ge<S: Scalar>(costs: &CostTable<S>) -> S {
    S::ratio(2, 1) * (costs.ge(GateKind::And2) + costs.ge(GateKind::Or2))
}

fn majority_delay<S: Scalar>(costs: &CostTable<S>) -> S {
    S::ratio(2, 1) * costs.delay(GateKind::Or2) + costs.delay(GateKind::And2)
}

/// Total GE of `scheme` built on `design`.
pub fn design_area<S: Scalar>(scheme: Scheme, design: &PipelineDesign, costs: &CostTable<S>) -> S {
    let logic = design.netlist().area_ge(costs);
    let reg = costs.register_bit_ge;
    let bits = design.register_bits();
    let pipeline = logic + count::<S>(bits) * reg;
    let out_width = design.netlist().outputs().len();
    let n = design.n_stages();
    match scheme {
        Scheme::Original => pipeline,
        Scheme::Hfs => {
            let voter = count::<S>(bits) * costs.ge(GateKind::Mux2);
            let du = count::<S>(bits) * costs.ge(GateKind::Xor2) + count::<S>(bits - n) * costs.ge(GateKind::Or2);
            let cu = count::<S>(n - 1) * costs.ge(GateKind::Or2);
            S::ratio(2, 1) * pipeline + voter + du + cu
        }
        Scheme::Tmr => S::ratio(3, 1) * pipeline + count::<S>(out_width) * majority_ge(costs),
        Scheme::Ttr => {
            let buffer = count::<S>(3 * out_width) * (reg + costs.ge(GateKind::Mux2));
            let voter = count::<S>(out_width) * majority_ge(costs);
            let counter = S::ratio(2, 1) * (reg + costs.ge(GateKind::Mux2)) + costs.ge(GateKind::Nor2);
            let tags = count::<S>(2 * n) * reg;
            let decode = S::ratio(3, 1) * costs.ge(GateKind::And2);
            pipeline + buffer + voter + counter + tags + decode
        }
    }
}

/// Clock period of `scheme`: the slowest stage including the protection
/// logic in series with it.
pub fn clock_period<S: Scalar>(scheme: Scheme, design: &PipelineDesign, costs: &CostTable<S>) -> S {
    let stages = design.stage_delays(costs);
    let max = |it: &mut dyn Iterator<Item = S>| it.fold(S::zero(), S::max_of);
    let last = stages.len() - 1;
    match scheme {
        Scheme::Original => max(&mut stages.iter().copied()),
        Scheme::Hfs => {
            let extra = costs.delay(GateKind::Xor2) + costs.delay(GateKind::Mux2);
            max(&mut stages.iter().map(|&d| d + extra))
        }
        Scheme::Tmr | Scheme::Ttr => {
            let vote = majority_delay(costs);
            max(&mut stages.iter().enumerate().map(|(i, &d)| if i == last { d + vote } else { d }))
        }
    }
}

/// Raw costs of one design; overhead fields are zero until
/// [`with_baseline`] fills them in.
pub fn measure_design<S: Scalar>(scheme: Scheme, design: &PipelineDesign, costs: &CostTable<S>) -> MetricsRow<S> {
    let max_freq = S::one() / clock_period(scheme, design, costs);
    MetricsRow {
        design: scheme,
        area_ge: design_area(scheme, design, costs),
        area_overhead_pct: S::zero(),
        max_freq,
        freq_overhead_pct: S::zero(),
        throughput: throughput(max_freq, design.netlist().outputs().len() as u32, cycles_per_result(scheme)),
        throughput_overhead_pct: S::zero(),
        tolerates_transient: scheme.tolerates_transient(),
        tolerates_permanent: scheme.tolerates_permanent(),
    }
}

/// One row per scheme, in [`Scheme::ALL`] order, with overheads filled in.
pub fn measure_all<S: Scalar>(design: &PipelineDesign, costs: &CostTable<S>) -> Vec<MetricsRow<S>> {
    let rows: Vec<_> = Scheme::ALL.iter().map(|&s| measure_design(s, design, costs)).collect();
    with_baseline(rows).expect("original row present with positive costs")
}

/// Recomputes every overhead column against the original row.
pub fn with_baseline<S: Scalar>(mut rows: Vec<MetricsRow<S>>) -> Result<Vec<MetricsRow<S>>, MetricsError> {
    let base = rows.iter().find(|r| r.design == Scheme::Original).cloned().ok_or(MetricsError::MissingBaseline)?;
    let hundred = S::ratio(100, 1);
    for r in &mut rows {
        r.area_overhead_pct = overhead(r.area_ge, base.area_ge)? * hundred;
        r.freq_overhead_pct = overhead(r.max_freq, base.max_freq)? * hundred;
        r.throughput_overhead_pct = overhead(r.throughput, base.throughput)? * hundred;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for TableFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" => Ok(TableFormat::Text),
            other => Err(MetricsError::UnknownFormat(other.to_string())),
        }
    }
}

pub const COLUMNS: [&str; 9] = [
    "design",
    "area_ge",
    "area_ovh_pct",
    "freq_norm",
    "freq_ovh_pct",
    "throughput_norm",
    "thr_ovh_pct",
    "transient_ok",
    "permanent_ok",
];

/// A row as rendered: numbers rounded to six decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedRow {
    pub design: String,
    pub area_ge: f64,
    pub area_ovh_pct: f64,
    pub freq_norm: f64,
    pub freq_ovh_pct: f64,
    pub throughput_norm: f64,
    pub thr_ovh_pct: f64,
    pub transient_ok: bool,
    pub permanent_ok: bool,
}

fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl RenderedRow {
    fn cells(&self) -> [String; 9] {
        [
            self.design.clone(),
            format!("{:.6}", self.area_ge),
            format!("{:.6}", self.area_ovh_pct),
            format!("{:.6}", self.freq_norm),
            format!("{:.6}", self.freq_ovh_pct),
            format!("{:.6}", self.throughput_norm),
            format!("{:.6}", self.thr_ovh_pct),
            self.transient_ok.to_string(),
            self.permanent_ok.to_string(),
        ]
    }
}

pub fn rendered_rows<S: Scalar>(rows: &[MetricsRow<S>]) -> Result<Vec<RenderedRow>, MetricsError> {
    let rows = with_baseline(rows.to_vec())?;
    Ok(rows
        .iter()
        .map(|r| RenderedRow {
            design: r.design.name().to_string(),
            area_ge: round6(r.area_ge.to_f64_lossy()),
            area_ovh_pct: round6(r.area_overhead_pct.to_f64_lossy()),
            freq_norm: round6(r.max_freq.to_f64_lossy()),
            freq_ovh_pct: round6(r.freq_overhead_pct.to_f64_lossy()),
            throughput_norm: round6(r.throughput.to_f64_lossy()),
            thr_ovh_pct: round6(r.throughput_overhead_pct.to_f64_lossy()),
            transient_ok: r.tolerates_transient,
            permanent_ok: r.tolerates_permanent,
        })
        .collect())
}

/// Renders the comparison table. Overheads are recomputed against the
/// original row, which must be present.
pub fn render_table<S: Scalar>(rows: &[MetricsRow<S>], format: TableFormat) -> Result<String, MetricsError> {
    let rendered = rendered_rows(rows)?;
    Ok(match format {
        TableFormat::Csv => {
            let mut out = COLUMNS.join(",") + "\n";
            for r in &rendered {
                out += &r.cells().join(",");
                out.push('\n');
            }
            out
        }
        TableFormat::Json => serde_json::to_string_pretty(&rendered).expect("rows serialize") + "\n",
        TableFormat::Text => {
            let cells: Vec<[String; 9]> = rendered.iter().map(RenderedRow::cells).collect();
            let widths: Vec<usize> =
                (0..9).map(|i| cells.iter().map(|c| c[i].len()).chain([COLUMNS[i].len()]).max().unwrap()).collect();
            let mut out = String::new();
            let line = |out: &mut String, row: &[&str]| {
                let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
                let _ = writeln!(out, "{}", parts.join("  ").trim_end());
            };
            line(&mut out, &COLUMNS);
            for c in &cells {
                line(&mut out, &c.iter().map(String::as_str).collect::<Vec<_>>());
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn overhead_is_exact_with_rationals() {
        let r = |n, d| Rational64::new(n, d);
        assert_eq!(overhead(r(3, 1), r(2, 1)).unwrap(), r(1, 2));
        assert_eq!(overhead(r(7, 3), r(7, 3)).unwrap(), r(0, 1));
        assert_eq!(overhead(r(1, 1), r(0, 1)), Err(MetricsError::ZeroBaseline));
    }

    #[test]
    fn throughput_divides_by_cycles_per_result() {
        assert_eq!(throughput(555.0, 8, 1), 4440.0);
        assert_eq!(throughput(519.0, 8, 3), 1384.0);
        let f = Rational64::new(17, 5);
        assert_eq!(throughput(f, 8, 1), throughput(f, 8, 3) * Rational64::from_integer(3));
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!("yaml".parse::<TableFormat>().is_err());
        assert_eq!("csv".parse::<TableFormat>(), Ok(TableFormat::Csv));
    }
}
