// SPDX-License-Identifier: Apache-2.0

//! `ftsbox`: verify, synthesize, simulate, fault-inject and report on the
//! pipelined composite-field S-box and its redundancy schemes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ftsbox::campaign::{run_campaign, CampaignConfig, FaultClass, DEFAULT_SEED};
use ftsbox::fault::{FaultSpec, Scheme};
use ftsbox::field::{first_sbox_mismatch, sbox_composite, Gf8Elem};
use ftsbox::metrics::{measure_all, rendered_rows, render_table, TableFormat};
use ftsbox::redundancy::{build_machine, default_cycle_cap, run_stream};
use ftsbox::{cut_pipeline, streaming_eval, synth_sbox, CostTableExact, FieldParams, PipelineDesign};
use sha2::{Digest, Sha256};

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "ftsbox", version, about = "Fault-tolerant pipelined AES S-box toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the composite-field S-box, its netlist and its pipeline against the AES table.
    Verify(CommonArgs),
    /// Synthesize and pipeline the S-box, writing the design as JSON.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one design cycle by cycle, writing a JSON-lines trace.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = DesignArg::Hfs)]
        design: DesignArg,
        /// Comma-separated hex input bytes, e.g. `00,53,ff` (default: all 256 bytes).
        #[arg(long, conflicts_with = "input_file")]
        inputs: Option<String>,
        /// File with one hex input byte per line.
        #[arg(long)]
        input_file: Option<PathBuf>,
        /// JSON file holding a list of fault specs to inject.
        #[arg(long)]
        fault_file: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a fault-injection campaign and write JSON and CSV results.
    Campaign {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = DesignArg::Hfs)]
        design: DesignArg,
        #[arg(long, value_enum, default_value_t = FaultArg::Transient)]
        fault: FaultArg,
        /// Run every scenario (the default).
        #[arg(long, conflicts_with = "sample")]
        exhaustive: bool,
        /// Run a seeded random sample of this many scenarios.
        #[arg(long)]
        sample: Option<usize>,
        /// Campaign config JSON; `--design`, `--fault`, `--sample`, `--stages` and `--seed` override it when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Worker threads (default: all cores). Never changes results.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare area, frequency and throughput of the four designs.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Field parameter JSON (default: built-in parameters).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Cost table JSON (default: built-in normalized table).
    #[arg(long)]
    costs: Option<PathBuf>,
    /// Pipeline stages.
    #[arg(long, default_value_t = 5)]
    stages: usize,
    /// Random seed, decimal or 0x-prefixed hex.
    #[arg(long, env = "FTSBOX_SEED", value_parser = parse_seed)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Original,
    Hfs,
    Tmr,
    Ttr,
}

impl From<DesignArg> for Scheme {
    fn from(d: DesignArg) -> Scheme {
        match d {
            DesignArg::Original => Scheme::Original,
            DesignArg::Hfs => Scheme::Hfs,
            DesignArg::Tmr => Scheme::Tmr,
            DesignArg::Ttr => Scheme::Ttr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Transient,
    Permanent,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Text,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed `{s}`: {e}"))
}

/// A failure that maps to an exit code.
enum Failure {
    Config(String),
    Violation(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Violation(m) => f.write_str(m),
        }
    }
}

fn config<E: fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Config(format!("{context}: {e}"))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Loaded inputs shared by every subcommand.
struct Context {
    params: FieldParams,
    costs: CostTableExact,
    stages: usize,
    seed: u64,
}

impl Context {
    fn load(args: &CommonArgs) -> Result<Context, Failure> {
        let params = match &args.params {
            Some(p) => FieldParams::from_json(&read(p)?).map_err(config("field params"))?,
            None => FieldParams::DEFAULT,
        };
        let costs = match &args.costs {
            Some(p) => CostTableExact::from_json(&read(p)?).map_err(config("cost table"))?,
            None => CostTableExact::normalized(),
        };
        if args.stages == 0 {
            return Err(Failure::Config("--stages must be at least 1".into()));
        }
        Ok(Context { params, costs, stages: args.stages, seed: args.seed.unwrap_or(DEFAULT_SEED) })
    }

    fn run_info(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("tool".to_string(), format!("ftsbox {}", env!("CARGO_PKG_VERSION"))),
            ("seed".to_string(), self.seed.to_string()),
            ("params_sha256".to_string(), sha256_hex(&self.params.to_json())),
            ("costs_sha256".to_string(), sha256_hex(&self.costs.to_json())),
            ("stages".to_string(), self.stages.to_string()),
        ])
    }

    fn header_comment(&self) -> String {
        let fields: Vec<String> = self.run_info().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("# {}\n", fields.join(" "))
    }

    fn design(&self) -> Result<PipelineDesign, Failure> {
        let netlist = synth_sbox(&self.params).map_err(config("synthesis"))?;
        cut_pipeline(&netlist, self.stages, &self.costs).map_err(config("pipeline"))
    }
}

fn cmd_verify(args: &CommonArgs) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    print!("{}", ctx.header_comment());
    first_sbox_mismatch(|x| sbox_composite(Gf8Elem(x), &ctx.params).0)
        .map_err(|e| Failure::Violation(format!("composite formula: {e}")))?;
    let design = ctx.design().map_err(|e| Failure::Violation(e.to_string()))?;
    first_sbox_mismatch(|x| design.netlist().evaluate_byte(x).unwrap_or(!ftsbox::field::AES_SBOX[x as usize]))
        .map_err(|e| Failure::Violation(format!("netlist: {e}")))?;
    let inputs: Vec<u8> = (0..=255).collect();
    let out = streaming_eval(&design, &inputs);
    for (x, y) in inputs.iter().zip(&out[ctx.stages..]) {
        let expected = ftsbox::field::AES_SBOX[*x as usize];
        if *y != Some(expected) {
            return Err(Failure::Violation(format!(
                "pipeline: input {x:#04x} gave {y:?}, expected {expected:#04x} after {} cycles",
                ctx.stages
            )));
        }
    }
    println!("ok: formula, netlist and {}-stage pipeline match the AES S-box on all 256 inputs", ctx.stages);
    Ok(())
}

fn cmd_synth(args: &CommonArgs, out: Option<&Path>) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let design = ctx.design()?;
    let mut doc: serde_json::Value = serde_json::from_str(&design.to_json()).expect("design json");
    doc["run_info"] = serde_json::to_value(ctx.run_info()).expect("run info json");
    write_output(out, &(serde_json::to_string(&doc).expect("json") + "\n"))
}

fn parse_inputs(inputs: Option<&str>, file: Option<&Path>) -> Result<Vec<u8>, Failure> {
    let text = match (inputs, file) {
        (Some(s), _) => s.replace(',', "\n"),
        (None, Some(p)) => read(p)?,
        (None, None) => return Ok((0..=255).collect()),
    };
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let h = l.strip_prefix("0x").unwrap_or(l);
            u8::from_str_radix(h, 16).map_err(|e| Failure::Config(format!("bad input byte `{l}`: {e}")))
        })
        .collect()
}

fn cmd_simulate(
    args: &CommonArgs,
    design_arg: DesignArg,
    inputs: Option<&str>,
    input_file: Option<&Path>,
    fault_file: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let scheme = Scheme::from(design_arg);
    let stream = parse_inputs(inputs, input_file)?;
    let design = ctx.design()?;
    let faults: Vec<FaultSpec> = match fault_file {
        Some(p) => serde_json::from_str(&read(p)?).map_err(config("fault file"))?,
        None => Vec::new(),
    };
    for f in &faults {
        f.validate(scheme, &design).map_err(config("fault"))?;
    }
    let mut machine = build_machine(scheme, &design);
    let run = run_stream(&mut machine, &stream, &faults, default_cycle_cap(&design, stream.len()));
    let mut info = ctx.run_info();
    info.insert("design".into(), scheme.name().into());
    let header = serde_json::json!({ "run_info": info });
    write_output(out, &(header.to_string() + "\n" + &run.to_json_lines()))
}

#[allow(clippy::too_many_arguments)]
fn cmd_campaign(
    args: &CommonArgs,
    design_arg: DesignArg,
    fault: FaultArg,
    sample: Option<usize>,
    config_path: Option<&Path>,
    out_json: Option<&Path>,
    out_csv: Option<&Path>,
    jobs: Option<usize>,
    explicit: &Explicit,
) -> Result<(), Failure> {
    let mut ctx = Context::load(args)?;
    let fault_class = match fault {
        FaultArg::Transient => FaultClass::Transient,
        FaultArg::Permanent => FaultClass::Permanent,
    };
    let mut cfg = match config_path {
        Some(p) => CampaignConfig::from_json(&read(p)?).map_err(config("campaign config"))?,
        None => CampaignConfig::new(design_arg.into(), fault_class),
    };
    if config_path.is_none() || explicit.design {
        cfg.scheme = design_arg.into();
    }
    if config_path.is_none() || explicit.fault {
        cfg.fault = fault_class;
    }
    if config_path.is_none() || explicit.stages {
        cfg.stages = ctx.stages;
    }
    if config_path.is_none() || args.seed.is_some() {
        cfg.seed = ctx.seed;
    }
    if sample.is_some() {
        cfg.sample = sample;
    }
    ctx.stages = cfg.stages;
    ctx.seed = cfg.seed;
    let design = ctx.design()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(config("worker pool"))?;
    let mut result = pool.install(|| run_campaign(&design, &cfg)).map_err(config("campaign"))?;
    result.run_info = ctx.run_info();
    result.run_info.insert("config_sha256".into(), sha256_hex(&cfg.to_json()));
    let json = result.to_json().map_err(config("campaign json"))? + "\n";
    let csv = ctx.header_comment() + &result.to_csv().map_err(config("campaign csv"))?;
    if let Some(p) = out_json {
        write_output(Some(p), &json)?;
    }
    if let Some(p) = out_csv {
        write_output(Some(p), &csv)?;
    }
    let c = &result.counts;
    println!(
        "{} {:?} runs={} masked={} corrected={} sdc={} du={} coverage={:.6} seed={}",
        result.design,
        cfg.fault,
        result.total_runs,
        c.masked,
        c.detected_corrected,
        c.silent_data_corruption,
        c.detected_uncorrected,
        result.coverage,
        result.seed
    );
    if result.guarantee_held() {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "guarantee violated: {} silent corruptions, {} uncorrected detections",
            c.silent_data_corruption, c.detected_uncorrected
        )))
    }
}

fn cmd_report(args: &CommonArgs, format: FormatArg, out: Option<&Path>) -> Result<(), Failure> {
    let ctx = Context::load(args)?;
    let design = ctx.design()?;
    let rows = measure_all(&design, &ctx.costs);
    let text = match format {
        FormatArg::Csv => ctx.header_comment() + &render_table(&rows, TableFormat::Csv).map_err(config("report"))?,
        FormatArg::Text => ctx.header_comment() + &render_table(&rows, TableFormat::Text).map_err(config("report"))?,
        FormatArg::Json => {
            let doc = serde_json::json!({
                "run_info": ctx.run_info(),
                "rows": rendered_rows(&rows).map_err(config("report"))?,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
    };
    write_output(out, &text)
}

/// Which campaign flags appeared on the command line.
struct Explicit {
    design: bool,
    fault: bool,
    stages: bool,
}

fn main() -> ExitCode {
    let matches = <Cli as clap::CommandFactory>::command().get_matches();
    let cli = <Cli as clap::FromArgMatches>::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let result = match &cli.command {
        Command::Verify(common) => cmd_verify(common),
        Command::Synth { common, out } => cmd_synth(common, out.as_deref()),
        Command::Simulate { common, design, inputs, input_file, fault_file, out } => {
            cmd_simulate(common, *design, inputs.as_deref(), input_file.as_deref(), fault_file.as_deref(), out.as_deref())
        }
        Command::Campaign { common, design, fault, exhaustive: _, sample, config, out_json, out_csv, jobs } => {
            let sub = matches.subcommand_matches("campaign").expect("campaign matches");
            let given = |id: &str| sub.value_source(id) == Some(clap::parser::ValueSource::CommandLine);
            let explicit = Explicit { design: given("design"), fault: given("fault"), stages: given("stages") };
            cmd_campaign(
                common,
                *design,
                *fault,
                *sample,
                config.as_deref(),
                out_json.as_deref(),
                out_csv.as_deref(),
                *jobs,
                &explicit,
            )
        }
        Command::Report { common, format, out } => cmd_report(common, *format, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(match f {
                Failure::Config(_) => EXIT_CONFIG,
                Failure::Violation(_) => EXIT_VIOLATION,
            })
        }
    }
}
