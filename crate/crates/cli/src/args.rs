use clap::{Args, Parser, Subcommand, ValueEnum};
use kfp_core::mc::{DEFAULT_SEED, DEFAULT_WORKERS};
use serde::Serialize;
use std::path::PathBuf;

fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse::<u64>(),
    };
    r.map_err(|e| format!("bad seed '{s}': {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Core,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dilation {
    /// Anisotropic dilation adapted to the operator.
    Adapted,
    Isotropic,
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "kfp", version, about = "Kernels, fractional powers and nonlocal perimeters for Kolmogorov-Fokker-Planck operators")]
pub struct Cli {
    #[arg(long, global = true, value_parser = parse_seed, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true, default_value_t = DEFAULT_WORKERS)]
    pub workers: usize,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON experiment file; replaces the command line when given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Multiplier on the kernel normalization inside the kernel-mass checks (mutation testing).
    #[arg(long, global = true, hide = true, default_value_t = 1.0)]
    pub kernel_scale: f64,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OperatorArg {
    /// Catalog entry: laplace[:N], kolmogorov[:n], kramers, ornstein_uhlenbeck[:N].
    #[arg(long)]
    pub catalog: Option<String>,
    /// Operator JSON, inline or as a file path.
    #[arg(long, conflicts_with = "catalog")]
    pub spec: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 10)]
    pub near_decades: u32,
    #[arg(long, default_value_t = 6)]
    pub far_decades: u32,
    #[arg(long, default_value_t = 2)]
    pub panels_per_decade: usize,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Operator diagnostics.
    Operator {
        #[command(subcommand)]
        action: OperatorAction,
    },
    /// Transition density.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// P_t f(X) or its adjoint.
    Semigroup {
        #[command(subcommand)]
        action: SemigroupAction,
    },
    /// Fractional powers and Riesz potentials.
    Frac {
        #[command(subcommand)]
        action: FracAction,
    },
    /// Fractional perimeter of a region.
    Perimeter(PerimeterArgs),
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        action: SweepAction,
    },
    /// Besov seminorm, coarea identity and Sobolev embedding.
    Besov {
        #[command(subcommand)]
        action: BesovAction,
    },
    /// Verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::Core)]
        suite: Suite,
        /// Run only the checks of these criteria (1-15).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorAction {
    Info(OperatorArg),
    Validate(OperatorArg),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelAction {
    Eval {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y: Vec<f64>,
        #[arg(long)]
        t: f64,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SemigroupAction {
    Apply {
        #[command(flatten)]
        op: OperatorArg,
        /// Field JSON (inline or path), or `gaussian`.
        #[arg(long, default_value = "gaussian")]
        field: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        adjoint: bool,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FracAction {
    Apply {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, default_value = "gaussian")]
        field: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long)]
        s: f64,
        /// Riesz potential of this order instead of the fractional power.
        #[arg(long)]
        riesz: Option<f64>,
        #[command(flatten)]
        quad: QuadArgs,
    },
    Invert {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, default_value = "gaussian")]
        field: String,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long)]
        s: f64,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerimeterArgs {
    #[command(flatten)]
    pub op: OperatorArg,
    /// ball:R, cube:L, interval:L, or region JSON (inline or path).
    #[arg(long)]
    pub region: String,
    #[arg(long)]
    pub s: f64,
    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAction {
    Iso {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long)]
        region: String,
        #[arg(long)]
        s: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        scales: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Dilation::Adapted)]
        dilation: Dilation,
        #[command(flatten)]
        quad: QuadArgs,
    },
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BesovAction {
    Seminorm {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, default_value = "gaussian")]
        field: String,
        #[arg(long)]
        /// Half the Besov order; must lie in (0, 1/2)
        s: f64,
        #[command(flatten)]
        quad: QuadArgs,
    },
    Coarea {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, default_value = "gaussian")]
        field: String,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 24)]
        levels: usize,
        #[command(flatten)]
        quad: QuadArgs,
    },
    Sobolev {
        #[command(flatten)]
        op: OperatorArg,
        #[arg(long, default_value = "bump")]
        field: String,
        #[arg(long)]
        s: f64,
        #[command(flatten)]
        quad: QuadArgs,
    },
}
