//! `opcost`: static runtime, energy and memory estimates for model graphs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opcost::{
    analyze, compare, default_profile, infer_shapes, load_profile, order_peaks, parse_model,
    render, AnalyzeOptions, CostReport, Format, Graph, HwProfile, LivenessConfig, OpsConvention,
    OrderPolicy, DEFAULT_ORDER_LIMIT,
};

const EXIT_INPUT: u8 = 2;
const EXIT_FIT: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "opcost",
    version,
    about = "Estimate inference time, energy and memory of a model graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full cost report for one model.
    Analyze {
        model: PathBuf,
        #[command(flatten)]
        opts: CostArgs,
        /// Exit with status 3 when the model exceeds the flash or SRAM budget.
        #[arg(long)]
        strict_fit: bool,
    },
    /// Compare models, normalized to the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        opts: CostArgs,
    },
    /// List every execution order with its peak activation bytes, smallest first.
    Orders {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER_LIMIT)]
        limit: usize,
        /// Give every op its own output buffer.
        #[arg(long)]
        no_inplace: bool,
    },
    /// Parse, validate and shape-check a model.
    Validate { model: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Default,
    MinPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Table,
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Debug, Args)]
struct CostArgs {
    /// Characterization profile CSV; the built-in synthetic profile otherwise.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OrderArg::Default)]
    order: OrderArg,
    /// Maximum number of orders enumerated by `--order min-peak`.
    #[arg(long, default_value_t = DEFAULT_ORDER_LIMIT)]
    limit: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Give every op its own output buffer.
    #[arg(long)]
    no_inplace: bool,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    ops_per_mac: u64,
}

impl CostArgs {
    fn options(&self) -> AnalyzeOptions {
        AnalyzeOptions {
            order: match self.order {
                OrderArg::Default => OrderPolicy::Default,
                OrderArg::MinPeak => OrderPolicy::MinPeak { limit: self.limit },
            },
            liveness: LivenessConfig {
                inplace: !self.no_inplace,
            },
            ops: OpsConvention {
                ops_per_mac: self.ops_per_mac,
            },
        }
    }
}

/// Diagnostic plus the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read `{}`: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<Graph, Failure> {
    parse_model(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_hw(path: Option<&Path>) -> Result<HwProfile, Failure> {
    match path {
        None => Ok(default_profile()),
        Some(p) => {
            load_profile(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
        }
    }
}

fn analyze_file(path: &Path, p: &HwProfile, opts: &AnalyzeOptions) -> Result<CostReport, Failure> {
    let g = load_graph(path)?;
    analyze(&g, p, opts).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<(String, u8), Failure> {
    match cmd {
        Command::Analyze {
            model,
            opts,
            strict_fit,
        } => {
            let p = load_hw(opts.profile.as_deref())?;
            let report = analyze_file(&model, &p, &opts.options())?;
            let out = render(&report, opts.format.into());
            if strict_fit && !report.fit.pass() {
                let f = &report.fit;
                eprintln!(
                    "error: `{}` does not fit `{}`: flash margin {} B, SRAM margin {} B",
                    report.model, report.target, f.flash_margin, f.sram_margin
                );
                return Ok((out, EXIT_FIT));
            }
            Ok((out, 0))
        }
        Command::Compare { models, opts } => {
            let p = load_hw(opts.profile.as_deref())?;
            let o = opts.options();
            let reports = models
                .iter()
                .map(|m| analyze_file(m, &p, &o))
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare(&reports).map_err(|e| Failure::input(e.to_string()))?;
            Ok((render(&table, opts.format.into()), 0))
        }
        Command::Orders {
            model,
            limit,
            no_inplace,
        } => {
            let g = load_graph(&model)?;
            let diag =
                |e: &dyn std::fmt::Display| Failure::input(format!("{}: {e}", model.display()));
            let shapes = infer_shapes(&g).map_err(|e| diag(&e))?;
            let cfg = LivenessConfig {
                inplace: !no_inplace,
            };
            let mut peaks = order_peaks(&g, &shapes, limit, cfg).map_err(|e| diag(&e))?;
            peaks.sort_by_key(|(_, peak)| *peak);
            let mut out = String::new();
            for (order, peak) in peaks {
                writeln!(out, "{peak}\t{}", order.join(" ")).unwrap();
            }
            Ok((out, 0))
        }
        Command::Validate { model } => {
            let g = load_graph(&model)?;
            infer_shapes(&g).map_err(|e| Failure::input(format!("{}: {e}", model.display())))?;
            Ok(("OK\n".to_string(), 0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
